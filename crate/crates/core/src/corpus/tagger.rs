//! Object-word extraction from noun phrases.

/// Extracts object words (nouns and pronouns) from a noun phrase.
pub trait LabelTagger: Send + Sync {
    fn extract(&self, np_text: &str) -> Vec<String>;

    /// Canonical form used for counting and class lookup.
    fn lemma(&self, word: &str) -> String {
        lemmatize(word)
    }
}

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "each", "every", "another",
    "his", "her", "their", "its", "my", "your", "our", "one", "two", "three", "four", "five",
    "six", "seven", "eight", "nine", "ten", "several", "many", "few", "both", "all", "other",
    "more", "most", "no", "much", "lots",
];

const PREPOSITIONS: &[&str] = &[
    "in", "on", "of", "with", "at", "by", "from", "for", "to", "into", "onto", "over", "under",
    "near", "behind", "around", "through", "across", "about", "wearing", "holding", "while",
];

const ADJECTIVES: &[&str] = &[
    "white", "black", "red", "blue", "green", "yellow", "orange", "purple", "pink", "brown",
    "gray", "grey", "young", "old", "little", "small", "large", "big", "tall", "short", "long",
    "new", "front", "back", "left", "right", "same", "first", "second", "last", "other", "dark",
    "light", "bright", "older", "younger", "full", "empty", "large", "tiny", "huge", "different",
    "own", "wooden", "blond", "blonde", "striped", "colorful", "orange", "very",
];

const PRONOUNS: &[(&str, &str)] = &[
    ("he", "he"),
    ("him", "he"),
    ("she", "she"),
    ("they", "they"),
    ("them", "they"),
    ("it", "it"),
    ("himself", "himself"),
    ("herself", "herself"),
    ("themselves", "themselves"),
    ("someone", "someone"),
    ("everyone", "everyone"),
];

const IRREGULAR_PLURALS: &[(&str, &str)] = &[
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("knives", "knife"),
    ("leaves", "leaf"),
    ("wolves", "wolf"),
];

/// Words that end in `s` in their singular form.
const S_SINGULARS: &[&str] = &[
    "people", "glasses", "pants", "shorts", "scissors", "clothes", "supplies", "darts", "news",
    "gymnastics", "bus", "dress", "grass", "glass", "class", "chess", "series", "lens", "teens",
    "canvas", "cactus", "bus", "gas",
];

/// Lowercases and strips a plural suffix with a few irregular forms.
pub fn lemmatize(word: &str) -> String {
    let w = word.trim().to_lowercase();
    if let Some((_, lemma)) = PRONOUNS.iter().find(|(p, _)| *p == w) {
        return (*lemma).to_string();
    }
    if let Some((_, lemma)) = IRREGULAR_PLURALS.iter().find(|(p, _)| *p == w) {
        return (*lemma).to_string();
    }
    if S_SINGULARS.contains(&w.as_str()) || w.len() <= 3 {
        return w;
    }
    if let Some(stem) = w.strip_suffix("ies") {
        return format!("{stem}y");
    }
    for suffix in ["ches", "shes", "sses", "xes", "zes"] {
        if w.ends_with(suffix) {
            return w[..w.len() - 2].to_string();
        }
    }
    if w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        return w[..w.len() - 1].to_string();
    }
    w
}

/// Stoplist heuristic: keeps the head noun of the first chunk (the last word
/// before a preposition once determiners and adjectives are removed) plus any
/// pronouns.
#[derive(Clone, Debug, Default)]
pub struct HeuristicTagger;

impl LabelTagger for HeuristicTagger {
    fn extract(&self, np_text: &str) -> Vec<String> {
        let words: Vec<String> = np_text
            .split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let mut labels = Vec::new();
        let mut head: Option<&str> = None;
        for w in &words {
            if PRONOUNS.iter().any(|(p, _)| p == w) {
                labels.push(lemmatize(w));
                continue;
            }
            if PREPOSITIONS.contains(&w.as_str()) {
                break;
            }
            if DETERMINERS.contains(&w.as_str())
                || ADJECTIVES.contains(&w.as_str())
                || w.chars().all(|c| c.is_ascii_digit())
                || w.ends_with("'s")
            {
                continue;
            }
            head = Some(w);
        }
        if let Some(h) = head {
            labels.push(lemmatize(h));
        }
        labels.dedup();
        labels
    }
}
