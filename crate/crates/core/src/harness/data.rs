//! On-disk dataset layout:
//!
//! ```text
//! <dir>/dataset.json        manifest (frames, region filter, file hashes)
//! <dir>/vocab.json
//! <dir>/classes.json
//! <dir>/{train,val,test}.jsonl
//! <dir>/features/<video>_<segment>.feat(.json)
//! <dir>/features/<video>_<segment>.tfeat(.json)
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::{SegmentMeta, TemporalFeatureMap};
use crate::corpus::{
    build_vocabulary, class_threshold_preset, derive_object_classes, load_canonical, parse_annotations,
    vocabulary_preset, write_annotations, AnnotationFormat, HeuristicTagger, ImporterConfig, ObjectClassSet,
    SegmentAnnotation, Vocabulary,
};
use crate::error::{Error, Result};
use crate::regions::{
    assemble_region_set, segment_file, RegionFile, TemporalFile, DEFAULT_CONF_THRESHOLD, DEFAULT_REGION_CAP,
    REGION_EXT, TEMPORAL_EXT,
};
use crate::sample::{Sample, SegmentInputs};

pub const MANIFEST_FILE: &str = "dataset.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const CLASSES_FILE: &str = "classes.json";
pub const FEATURE_DIR: &str = "features";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.name())
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.name() == s)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Sampled frames per segment; annotated frames must be below it.
    pub num_frames: usize,
    pub conf_threshold: f64,
    pub region_cap: usize,
    /// Feature directory, relative to the dataset directory unless absolute.
    pub features: PathBuf,
    pub vocab_sha256: String,
    pub classes_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

/// Writes annotations, vocabulary, classes and the manifest.
pub fn write_dataset(
    dir: &Path,
    splits: &BTreeMap<Split, Vec<SegmentAnnotation>>,
    vocab: &Vocabulary,
    classes: &ObjectClassSet,
    num_frames: usize,
    features: &Path,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (split, segs) in splits {
        let path = dir.join(split.file_name());
        let mut buf = Vec::new();
        write_annotations(&mut buf, segs)?;
        write(&path, &buf)?;
    }
    let vocab_bytes = to_json_bytes(vocab)?;
    let classes_bytes = to_json_bytes(classes)?;
    write(&dir.join(VOCAB_FILE), &vocab_bytes)?;
    write(&dir.join(CLASSES_FILE), &classes_bytes)?;
    let manifest = DatasetManifest {
        num_frames,
        conf_threshold: DEFAULT_CONF_THRESHOLD,
        region_cap: DEFAULT_REGION_CAP,
        features: features.to_path_buf(),
        vocab_sha256: sha256_hex(&vocab_bytes),
        classes_sha256: sha256_hex(&classes_bytes),
    };
    write(&dir.join(MANIFEST_FILE), &to_json_bytes(&manifest)?)?;
    Ok(manifest)
}

/// Inputs of `prepare`.
#[derive(Clone, Debug)]
pub struct PrepareOptions {
    pub sources: BTreeMap<Split, PathBuf>,
    pub format: AnnotationFormat,
    /// `anet` or `flickr`: vocabulary and class-threshold presets.
    pub preset: String,
    pub num_frames: usize,
    pub features: PathBuf,
    /// Overrides the preset's class threshold.
    pub class_threshold: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct PrepareSummary {
    pub segments: BTreeMap<Split, usize>,
    pub dropped_mentions: usize,
    pub vocab_size: usize,
    pub num_classes: usize,
}

/// Imports annotation files, builds the vocabulary (train captions) and the
/// class set (train and val labels), and writes a dataset directory.
pub fn prepare(out: &Path, opts: &PrepareOptions) -> Result<PrepareSummary> {
    let (min_count, max_len) = vocabulary_preset(&opts.preset)
        .ok_or_else(|| Error::Config(format!("unknown preset '{}'", opts.preset)))?;
    let threshold = match opts.class_threshold {
        Some(t) => t,
        None => class_threshold_preset(&opts.preset).expect("presets agree"),
    };
    if !opts.sources.contains_key(&Split::Train) {
        return Err(Error::Config("a train split is required".into()));
    }
    let mut splits = BTreeMap::new();
    let mut dropped = 0;
    for (&split, path) in &opts.sources {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed = parse_annotations(
            std::io::BufReader::new(file),
            &opts.format,
            opts.num_frames,
            &HeuristicTagger,
        )?;
        for w in &parsed.warnings {
            log::warn!(
                "{}: {}#{} mention {} dropped ({:?})",
                path.display(),
                w.video_id,
                w.segment_index,
                w.mention,
                w.reason
            );
        }
        dropped += parsed.warnings.len();
        splits.insert(split, parsed.segments);
    }
    let vocab = build_vocabulary(&splits[&Split::Train], min_count, max_len)?;
    let labelled: Vec<SegmentAnnotation> = [Split::Train, Split::Val]
        .iter()
        .filter_map(|s| splits.get(s))
        .flatten()
        .cloned()
        .collect();
    let classes = derive_object_classes(&labelled, threshold, &HeuristicTagger)?;
    write_dataset(out, &splits, &vocab, &classes, opts.num_frames, &opts.features)?;
    Ok(PrepareSummary {
        segments: splits.iter().map(|(&k, v)| (k, v.len())).collect(),
        dropped_mentions: dropped,
        vocab_size: vocab.len(),
        num_classes: classes.len(),
    })
}

/// Parses an importer config file, or the default when `None`.
pub fn importer_format(config: Option<&Path>) -> Result<AnnotationFormat> {
    let cfg = match config {
        Some(p) => serde_json::from_slice(&read(p)?)?,
        None => ImporterConfig::default(),
    };
    Ok(AnnotationFormat::Importer(cfg))
}

/// A dataset directory with its vocabulary and classes loaded.
#[derive(Clone, Debug)]
pub struct DatasetDir {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub vocab: Vocabulary,
    pub classes: ObjectClassSet,
}

impl DatasetDir {
    /// Opens a dataset and checks the vocabulary and class files against the
    /// manifest hashes.
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_slice(&read(&dir.join(MANIFEST_FILE))?)?;
        let vocab_bytes = read(&dir.join(VOCAB_FILE))?;
        let classes_bytes = read(&dir.join(CLASSES_FILE))?;
        for (name, bytes, expected) in [
            (VOCAB_FILE, &vocab_bytes, &manifest.vocab_sha256),
            (CLASSES_FILE, &classes_bytes, &manifest.classes_sha256),
        ] {
            let got = sha256_hex(bytes);
            if &got != expected {
                return Err(Error::Data(format!(
                    "{}: sha256 {got} does not match the manifest ({expected})",
                    dir.join(name).display()
                )));
            }
        }
        Ok(DatasetDir {
            dir: dir.to_path_buf(),
            vocab: serde_json::from_slice(&vocab_bytes)?,
            classes: serde_json::from_slice(&classes_bytes)?,
            manifest,
        })
    }

    pub fn feature_dir(&self) -> PathBuf {
        if self.manifest.features.is_absolute() {
            self.manifest.features.clone()
        } else {
            self.dir.join(&self.manifest.features)
        }
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.dir.join(split.file_name()).exists()
    }

    pub fn annotations(&self, split: Split) -> Result<Vec<SegmentAnnotation>> {
        let path = self.dir.join(split.file_name());
        Ok(load_canonical(&path, self.manifest.num_frames)?.segments)
    }

    /// Loads a split with its features as training/evaluation samples.
    pub fn samples(&self, split: Split) -> Result<Vec<Sample>> {
        let anns = self.annotations(split)?;
        let features = self.feature_dir();
        let mut durations: BTreeMap<&str, f64> = BTreeMap::new();
        for a in &anns {
            let d = durations.entry(&a.video_id).or_insert(0.0);
            *d = d.max(a.end_s);
        }
        let mut out = Vec::with_capacity(anns.len());
        for a in &anns {
            let inputs = load_inputs(&features, a, &self.manifest, durations[a.video_id.as_str()])?;
            out.push(Sample::new(a.clone(), &self.vocab, &self.classes, inputs)?);
        }
        Ok(out)
    }
}

/// Reads and filters the features of one segment. The video duration comes
/// from the temporal sidecar when present, else `fallback_duration`.
pub fn load_inputs(
    features: &Path,
    a: &SegmentAnnotation,
    manifest: &DatasetManifest,
    fallback_duration: f64,
) -> Result<SegmentInputs> {
    let region_path = segment_file(features, &a.video_id, a.segment_index, REGION_EXT);
    let rf = RegionFile::read(&region_path)?;
    let (fw, fh) = (rf.meta.frame_w, rf.meta.frame_h);
    let regions = assemble_region_set(rf.into_proposals()?, manifest.conf_threshold, manifest.region_cap, fw, fh)?;
    if regions.num_frames() < manifest.num_frames {
        return Err(Error::Data(format!(
            "{}: {} frames, the dataset samples {}",
            region_path.display(),
            regions.num_frames(),
            manifest.num_frames
        )));
    }
    let tf = TemporalFile::read(&segment_file(features, &a.video_id, a.segment_index, TEMPORAL_EXT))?;
    let meta = SegmentMeta {
        total_segments: a.total_segments,
        segment_index: a.segment_index,
        start_s: a.start_s,
        end_s: a.end_s,
        duration_s: tf.meta.duration_s.unwrap_or(fallback_duration),
    };
    SegmentInputs::new(regions, TemporalFeatureMap::new(tf.features)?, meta)
        .map_err(|e| Error::Data(format!("{}#{}: {e}", a.video_id, a.segment_index)))
}
