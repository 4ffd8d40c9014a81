use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gvd_core::corpus::{
    class_threshold_preset, corpus_stats, derive_object_classes, parse_annotations, AnnotationFormat, HeuristicTagger,
    DEFAULT_NUM_FRAMES,
};
use gvd_core::decoder::{batch_objective, find_preset, DecodeMode, LambdaWeights, LossBreakdown, GvdModel, PRESETS};
use gvd_core::harness::{
    evaluate, finite_diff_check, importer_format, load_checkpoint, make_synthetic, prepare, train, DatasetDir,
    EvalOptions, PrepareOptions, Split, SyntheticSpec, TrainConfig, GRADCHECK_TOLERANCE,
};
use gvd_core::nn::Mode;
use gvd_core::sample::Sample;
use gvd_core::{Error, Result};

#[derive(Parser)]
#[command(name = "gvd", version, about = "Grounded video description toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Import annotations and build the vocabulary, classes and manifest.
    Prepare(PrepareArgs),
    /// Corpus statistics of an annotation file.
    Stats(StatsArgs),
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Metrics of a checkpoint on a split.
    Eval(EvalArgs),
    /// Captions (and attention overlays) for a split.
    Generate(GenerateArgs),
    /// Finite-difference gradient check on the tiny instance.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Canonical,
    Importer,
}

#[derive(Args)]
struct SourceArgs {
    #[arg(long, value_enum, default_value = "canonical")]
    format: Format,
    /// Field mapping for `--format importer`.
    #[arg(long)]
    importer_config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NUM_FRAMES)]
    num_frames: usize,
}

impl SourceArgs {
    fn format(&self) -> Result<AnnotationFormat> {
        match self.format {
            Format::Canonical => Ok(AnnotationFormat::Canonical),
            Format::Importer => importer_format(self.importer_config.as_deref()),
        }
    }
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// `anet` or `flickr`.
    #[arg(long, default_value = "anet")]
    preset: String,
    #[arg(long)]
    class_threshold: Option<usize>,
    /// Feature directory recorded in the manifest.
    #[arg(long, default_value = "features")]
    features: PathBuf,
    #[command(flatten)]
    source: SourceArgs,
}

#[derive(Args)]
struct StatsArgs {
    annotations: PathBuf,
    #[arg(long, default_value = "anet")]
    preset: String,
    #[arg(long)]
    class_threshold: Option<usize>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    source: SourceArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON file with synthetic-spec fields; missing fields take defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Beam width; greedy when omitted.
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long, default_value_t = 20)]
    max_len: usize,
}

impl DecodeArgs {
    fn mode(&self) -> DecodeMode {
        self.beam.map_or(DecodeMode::Greedy, DecodeMode::Beam)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
    /// Loss weights for the reported loss; the checkpoint's preset otherwise.
    #[arg(long)]
    preset: Option<String>,
    /// Only Attn., Grd., Cls. and the upper bound on reference captions.
    #[arg(long)]
    gt_grounding: bool,
    #[arg(long)]
    per_class: bool,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
    /// Directory for attention overlay images.
    #[arg(long)]
    overlays: Option<PathBuf>,
    /// Captions as JSON Lines; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Preset to check; all presets when omitted.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

fn split(name: &str) -> Result<Split> {
    Split::parse(name).ok_or_else(|| Error::Config(format!("unknown split '{name}'")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn cmd_prepare(a: PrepareArgs) -> Result<()> {
    let mut sources = BTreeMap::from([(Split::Train, a.train)]);
    sources.extend(a.val.map(|p| (Split::Val, p)));
    sources.extend(a.test.map(|p| (Split::Test, p)));
    let opts = PrepareOptions {
        sources,
        format: a.source.format()?,
        preset: a.preset,
        num_frames: a.source.num_frames,
        features: a.features,
        class_threshold: a.class_threshold,
    };
    let s = prepare(&a.out, &opts)?;
    for (split, n) in &s.segments {
        println!("{split:<6} {n} segments");
    }
    println!("vocabulary       {}", s.vocab_size);
    println!("object classes   {}", s.num_classes);
    println!("dropped mentions {}", s.dropped_mentions);
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.2}"))
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let threshold = match a.class_threshold {
        Some(t) => t,
        None => class_threshold_preset(&a.preset).ok_or_else(|| Error::Config(format!("unknown preset '{}'", a.preset)))?,
    };
    let file = fs::File::open(&a.annotations).map_err(|e| Error::io(&a.annotations, e))?;
    let parsed = parse_annotations(
        std::io::BufReader::new(file),
        &a.source.format()?,
        a.source.num_frames,
        &HeuristicTagger,
    )?;
    let stats = corpus_stats(&parsed.segments);
    let classes = derive_object_classes(&parsed.segments, threshold, &HeuristicTagger)?;
    if a.json {
        let doc = serde_json::json!({
            "stats": stats,
            "class_threshold": threshold,
            "object_classes": classes.len(),
            "dropped_mentions": parsed.warnings.len(),
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
        return Ok(());
    }
    println!("segments                 {}", stats.segments);
    println!("segments with mentions   {}", stats.segments_with_mentions);
    println!("mentions                 {}", stats.mentions);
    println!("boxes                    {}", stats.boxes);
    println!(
        "boxes per segment        {} (std {})",
        opt(stats.mean_boxes_per_segment),
        opt(stats.std_boxes_per_segment)
    );
    println!(
        "labels per box           {} (std {})",
        opt(stats.mean_labels_per_box),
        opt(stats.std_labels_per_box)
    );
    println!("multi-instance fraction  {}", opt(stats.multi_instance_fraction));
    println!("object classes (>= {threshold:<3}) {}", classes.len());
    println!("dropped mentions         {}", parsed.warnings.len());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec: SyntheticSpec = match &a.spec {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let m = make_synthetic(&spec, &a.out)?;
    println!(
        "wrote {} ({} train, {} val, {} test segments, {} frames)",
        a.out.display(),
        spec.train,
        spec.val,
        spec.test,
        m.num_frames
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => {
            let mut c = TrainConfig::default();
            c.apply_env()?;
            c
        }
    };
    if let Some(d) = a.data {
        cfg.data_dir = d;
    }
    if let Some(o) = a.out {
        cfg.out_dir = o;
    }
    if let Some(p) = a.preset {
        cfg.preset = p;
    }
    if let Some(e) = a.epochs {
        cfg.max_epochs = e;
    }
    cfg.validate()?;
    let ds = DatasetDir::open(&cfg.data_dir)?;
    let train_set = ds.samples(Split::Train)?;
    let val_set = if ds.has_split(Split::Val) { ds.samples(Split::Val)? } else { Vec::new() };
    let out = train(&cfg, &ds.vocab, &ds.classes, &train_set, &val_set, Some(&cfg.out_dir))?;
    let sel = &out.summary.epochs[out.summary.selected_epoch];
    println!(
        "selected epoch {} (val CIDEr {}), checkpoints in {}",
        sel.epoch,
        opt(sel.val_cider),
        cfg.out_dir.display()
    );
    Ok(())
}

fn load_for_split(checkpoint: &Path, data: &Path, split_name: &str) -> Result<(GvdModel, String, Vec<Sample>)> {
    let (model, manifest) = load_checkpoint(checkpoint)?;
    let ds = DatasetDir::open(data)?;
    if &ds.vocab != model.vocab() || &ds.classes != model.classes() {
        return Err(Error::Data(format!(
            "{} and {} use different vocabularies or class sets",
            checkpoint.display(),
            data.display()
        )));
    }
    let samples = ds.samples(split(split_name)?)?;
    Ok((model, manifest.preset, samples))
}

fn mean_loss(model: &GvdModel, samples: &[Sample], lambdas: &LambdaWeights) -> Result<LossBreakdown> {
    let mut m = LossBreakdown::default();
    let n = samples.len().max(1) as f64;
    for chunk in samples.chunks(32) {
        let batch: Vec<&Sample> = chunk.iter().collect();
        let b = batch_objective(model, &batch, lambdas, &mut Mode::eval(), false)?.breakdown;
        let w = chunk.len() as f64 / n;
        m.sent += w * b.sent;
        m.attn += w * b.attn;
        m.cls += w * b.cls;
        m.grd += w * b.grd;
        m.total += w * b.total;
    }
    Ok(m)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (model, ckpt_preset, samples) = load_for_split(&a.checkpoint, &a.data, &a.split)?;
    let preset_name = a.preset.unwrap_or(ckpt_preset);
    let preset = find_preset(&preset_name).ok_or_else(|| Error::Config(format!("unknown preset '{preset_name}'")))?;
    let opts = EvalOptions {
        gt_grounding: true,
        generation: !a.gt_grounding,
        per_class: a.per_class,
        decode: a.decode.mode(),
        max_len: a.decode.max_len,
        overlay_dir: None,
    };
    let out = evaluate(&model, &samples, &a.split, &opts)?;
    let loss = mean_loss(&model, &samples, &preset.lambdas)?;
    if a.json {
        let doc = serde_json::json!({
            "preset": preset.name,
            "lambdas": preset.lambdas,
            "loss": loss,
            "report": out.report,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        let l = preset.lambdas;
        println!(
            "preset {} (lambda_alpha {}, lambda_beta {}, lambda_cls {})",
            preset.name, l.alpha, l.beta, l.cls
        );
        println!(
            "loss {:.4} (sent {:.4}, attn {:.4}, grd {:.4}, cls {:.4})",
            loss.total, loss.sent, loss.attn, loss.grd, loss.cls
        );
        print!("{}", out.report.to_table(a.per_class));
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let (model, _, samples) = load_for_split(&a.checkpoint, &a.data, &a.split)?;
    let opts = EvalOptions {
        gt_grounding: false,
        generation: true,
        per_class: false,
        decode: a.decode.mode(),
        max_len: a.decode.max_len,
        overlay_dir: a.overlays.clone(),
    };
    let out = evaluate(&model, &samples, &a.split, &opts)?;
    let mut text = Vec::new();
    for c in &out.captions {
        serde_json::to_writer(&mut text, c)?;
        text.push(b'\n');
    }
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => std::io::stdout().write_all(&text).map_err(|e| Error::io("stdout", e))?,
    }
    if let Some(d) = &a.overlays {
        eprintln!("overlays in {}", d.display());
    }
    Ok(())
}

/// Returns whether every checked preset passed.
fn cmd_gradcheck(a: GradcheckArgs) -> Result<bool> {
    let presets = match &a.preset {
        Some(name) => vec![find_preset(name).ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?],
        None => PRESETS.iter().collect(),
    };
    let mut ok = true;
    let mut reports = Vec::new();
    for p in presets {
        let r = finite_diff_check(p, a.seed)?;
        ok &= r.passed();
        if !a.json {
            println!(
                "{:<18} max rel error {:.3e} over {} entries  {}",
                r.preset,
                r.max_rel_error,
                r.checked,
                if r.passed() { "ok" } else { "FAIL" }
            );
            for (g, c) in &r.groups {
                println!("    {g:<12} {:.3e} ({})", c.max_rel_error, c.checked);
            }
        }
        reports.push(r);
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        println!("threshold {GRADCHECK_TOLERANCE:e}: {}", if ok { "pass" } else { "fail" });
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(a)?,
        Command::Stats(a) => cmd_stats(a)?,
        Command::Synth(a) => cmd_synth(a)?,
        Command::Train(a) => cmd_train(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::Generate(a) => cmd_generate(a)?,
        Command::Gradcheck(a) => {
            if !cmd_gradcheck(a)? {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}
