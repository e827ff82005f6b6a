//! The `vtl` command line.

use std::ffi::OsString;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use vtl_core::corpus::{synth_corpus, Document, LayoutPlan};
use vtl_core::model::{self, Model};
use vtl_core::seed::example_seed;
use vtl_core::tasks::{self, build_task, Target, TaskConfig, TaskKind, TrainingExample};
use vtl_core::trainer::{self, CheckpointTag, StepLog, TrainData, TrainEvent};
use vtl_core::Vocabulary;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fsutil::{self, DirLock};
use crate::ocr::{self, IngestOptions};
use crate::{checkpoint, pgm, shard, steplog, vocab_io};

pub const DOCUMENTS: &str = "documents.shard";
pub const EXAMPLES: &str = "examples.shard";
pub const VOCAB: &str = "vocab.json";
pub const STEPLOG: &str = "steplog.jsonl";
/// Environment variable holding the log filter, e.g. `VTL_LOG=info`.
pub const LOG_ENV: &str = "VTL_LOG";

#[derive(Debug, Parser)]
#[command(name = "vtl", version, about = "Document vision-text-layout pipeline: corpora, task shards, training and inference")]
pub struct Cli {
    /// Print machine-readable JSON instead of a text summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert OCR JSON (a file, a .jsonl file, or a directory of them) into a document shard.
    Ingest(IngestArgs),
    /// Render a synthetic corpus into a document shard.
    Synth(SynthArgs),
    /// Turn a document shard into a shard of training examples.
    BuildTasks(BuildTasksArgs),
    /// Train a model from a config file on a document or example shard.
    Train(TrainArgs),
    /// Score a checkpoint on an example shard.
    Eval(EvalArgs),
    /// Greedy text/layout generation for each document under a task prompt.
    Generate(GenerateArgs),
    /// Reconstruct masked patches of documents and write PGM images.
    Reconstruct(ReconstructArgs),
    /// Pretty-print a shard, checkpoint, vocabulary or step log.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    /// Sentinels per family.
    #[arg(long, default_value_t = 128)]
    pub sentinels: u32,
    /// Layout grid steps per page side.
    #[arg(long, default_value_t = 500)]
    pub granularity: u32,
    /// Cap on text vocabulary entries (most frequent words first).
    #[arg(long, default_value_t = 30_000)]
    pub max_words: usize,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Accept documents without words.
    #[arg(long)]
    pub allow_empty: bool,
    /// Reject documents that have no pixel file.
    #[arg(long)]
    pub require_pixels: bool,
    #[command(flatten)]
    pub vocab: VocabArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Attach supervised annotations to every document.
    #[arg(long)]
    pub labeled: bool,
    #[command(flatten)]
    pub vocab: VocabArgs,
}

#[derive(Debug, Args)]
pub struct BuildTasksArgs {
    /// Directory holding documents.shard and vocab.json.
    #[arg(long)]
    pub data: PathBuf,
    /// Task name, or a comma-separated list of them.
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Masking ratio for the requested self-supervised tasks.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Mask these word ranges (e.g. `0..2,5..6`) instead of sampling spans.
    #[arg(long)]
    pub spans: Option<String>,
    /// Examples per document and task, each with its own seed.
    #[arg(long, default_value_t = 1)]
    pub epochs: u64,
    /// Re-render documents at this square resolution first.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub mean_span_length: Option<f64>,
    /// Dataset name used in supervised prompts.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Allow self-supervised tasks on labeled documents.
    #[arg(long)]
    pub self_supervised_on_labeled: bool,
    /// Print every example.
    #[arg(long)]
    pub print: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON file with optional `train` and `model` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding vocab.json and examples.shard or documents.shard.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding vocab.json and examples.shard.
    #[arg(long)]
    pub data: PathBuf,
    /// Only this task; every task present otherwise.
    #[arg(long)]
    pub task: Option<String>,
    /// Vocabulary file, if not in the data directory.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding vocab.json and documents.shard.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub seed: u64,
    /// Only the document with this id.
    #[arg(long)]
    pub doc: Option<String>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding vocab.json and documents.shard.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub doc: Option<String>,
    /// Fraction of patches to mask.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Re-render documents at this square resolution first.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
    /// First record to show.
    #[arg(long, default_value_t = 0)]
    pub record: usize,
    /// Number of records to show.
    #[arg(long, default_value_t = 1)]
    pub limit: usize,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

/// Parse `args` and run, writing the report to `out`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let mut r = Reporter { out, json: cli.json };
    match &cli.command {
        Command::Ingest(a) => ingest(a, &mut r),
        Command::Synth(a) => synth(a, &mut r),
        Command::BuildTasks(a) => build_tasks(a, &mut r),
        Command::Train(a) => train(a, &mut r),
        Command::Eval(a) => eval(a, &mut r),
        Command::Generate(a) => generate(a, &mut r),
        Command::Reconstruct(a) => reconstruct(a, &mut r),
        Command::Inspect(a) => inspect(a, &mut r),
    }
}

struct Reporter<'a> {
    out: &'a mut dyn Write,
    json: bool,
}

impl Reporter<'_> {
    /// One result: `value` as a JSON line, or `text` otherwise.
    fn emit<T: Serialize>(&mut self, value: &T, text: impl FnOnce() -> String) -> Result<()> {
        let res = if self.json {
            serde_json::to_writer(&mut *self.out, value).map_err(std::io::Error::from).and_then(|_| writeln!(self.out))
        } else {
            writeln!(self.out, "{}", text())
        };
        res.map_err(|e| Error::io("<stdout>", e))
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn parse_task(name: &str) -> Result<TaskKind> {
    TaskKind::from_name(name.trim()).ok_or_else(|| {
        let names: Vec<&str> = TaskKind::SELF_SUPERVISED.iter().chain(TaskKind::SUPERVISED.iter()).map(|k| k.name()).collect();
        usage(format!("unknown task {name:?}; expected one of {}", names.join(", ")))
    })
}

fn parse_spans(s: &str) -> Result<Vec<Range<usize>>> {
    s.split(',')
        .map(|part| {
            let (a, b) = part.trim().split_once("..").ok_or_else(|| usage(format!("span {part:?} is not START..END")))?;
            let a: usize = a.parse().map_err(|_| usage(format!("span {part:?}: bad start")))?;
            let b: usize = b.parse().map_err(|_| usage(format!("span {part:?}: bad end")))?;
            Ok(a..b)
        })
        .collect()
}

fn write_corpus(out: &Path, docs: &[Document], v: &VocabArgs, fingerprint: &str, r: &mut Reporter) -> Result<()> {
    let vocab = vocab_io::build_for_documents(docs, &TaskConfig::default().dataset_name, v.sentinels, v.granularity, v.max_words)?;
    let _lock = DirLock::acquire(out)?;
    shard::write_documents(&out.join(DOCUMENTS), docs, fingerprint)?;
    vocab_io::write(&out.join(VOCAB), &vocab)?;
    let words: usize = docs.iter().map(|d| d.words.len()).sum();
    r.emit(&json!({"documents": docs.len(), "words": words, "vocab_size": vocab.len(), "out": out}), || {
        format!("wrote {} documents ({words} words, vocabulary {}) to {}", docs.len(), vocab.len(), out.display())
    })
}

fn ingest(a: &IngestArgs, r: &mut Reporter) -> Result<()> {
    let opts = IngestOptions { allow_blank: !a.require_pixels, allow_empty: a.allow_empty };
    let docs = if a.input.is_dir() { ocr::load_ocr_dir(&a.input, &opts)? } else { ocr::load_ocr_file(&a.input, &opts)? };
    log::info!("ingested {} documents from {}", docs.len(), a.input.display());
    let fp = shard::fingerprint(&json!({"ingest": a.input, "allow_empty": a.allow_empty}));
    write_corpus(&a.out, &docs, &a.vocab, &fp, r)
}

fn synth(a: &SynthArgs, r: &mut Reporter) -> Result<()> {
    let plan = LayoutPlan::default();
    let docs = synth_corpus(a.count, a.seed, &plan, a.height, a.width, a.labeled)?;
    let fp = shard::fingerprint(&json!({"synth": a.count, "seed": a.seed, "h": a.height, "w": a.width, "labeled": a.labeled, "plan": plan}));
    write_corpus(&a.out, &docs, &a.vocab, &fp, r)
}

fn read_vocab(data: &Path, explicit: Option<&PathBuf>) -> Result<Vocabulary> {
    vocab_io::read(&explicit.cloned().unwrap_or_else(|| data.join(VOCAB)))
}

fn build_tasks(a: &BuildTasksArgs, r: &mut Reporter) -> Result<()> {
    let kinds: Vec<TaskKind> = a.task.split(',').map(parse_task).collect::<Result<_>>()?;
    let mut cfg = TaskConfig { self_supervised_on_labeled: a.self_supervised_on_labeled, ..Default::default() };
    if let Some(p) = a.patch_size {
        cfg.patch_size = p;
    }
    if let Some(m) = a.mean_span_length {
        cfg.mean_span_length = m;
    }
    if let Some(d) = &a.dataset {
        cfg.dataset_name = d.clone();
    }
    if let Some(ratio) = a.ratio {
        for k in &kinds {
            match k {
                TaskKind::JointTextLayout => cfg.ratio_joint = ratio,
                TaskKind::LayoutModeling => cfg.ratio_layout = ratio,
                TaskKind::VisualTextRecognition => cfg.ratio_visual_text = ratio,
                TaskKind::MaskedImage => cfg.ratio_image_patches = ratio,
                _ => {}
            }
        }
    }
    cfg.validate()?;
    let spans = a.spans.as_deref().map(parse_spans).transpose()?;
    if spans.is_some() && kinds.iter().any(|k| !matches!(k, TaskKind::JointTextLayout | TaskKind::LayoutModeling | TaskKind::VisualTextRecognition)) {
        return Err(usage("--spans applies only to the text self-supervised tasks"));
    }
    let vocab = read_vocab(&a.data, None)?;
    let (_, docs) = shard::read_documents(&a.data.join(DOCUMENTS))?;

    let mut examples = Vec::new();
    let mut skipped = 0usize;
    for doc in &docs {
        let doc = match a.resolution {
            Some(res) => doc.at_resolution(res, res),
            None => doc.clone(),
        };
        for &kind in &kinds {
            let labeled = !doc.labels.is_empty();
            if kind.is_self_supervised() == labeled && !(labeled && cfg.self_supervised_on_labeled) {
                skipped += 1;
                continue;
            }
            for epoch in 0..a.epochs {
                let seed = example_seed(a.seed, &doc.id, kind.name(), epoch);
                let built = match (&spans, kind) {
                    (Some(s), TaskKind::JointTextLayout) => tasks::joint_text_layout_with_spans(&doc, &vocab, s, seed),
                    (Some(s), TaskKind::LayoutModeling) => tasks::layout_modeling_with_spans(&doc, &vocab, s, seed),
                    (Some(s), _) => tasks::visual_text_recognition_with_spans(&doc, &vocab, s, seed),
                    (None, _) => build_task(&doc, &vocab, kind, &cfg, seed),
                };
                match built {
                    Ok(ex) => examples.push(ex),
                    Err(vtl_core::Error::MissingAnnotation(what)) => {
                        log::warn!("{}: no {what} annotation, skipped", doc.id);
                        skipped += 1;
                    }
                    Err(vtl_core::Error::EmptyDocument) => skipped += 1,
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    if a.print {
        for ex in &examples {
            print_example(ex, &vocab, r)?;
        }
    }
    let fp = shard::fingerprint(&json!({"tasks": a.task, "seed": a.seed, "cfg": cfg, "spans": a.spans, "epochs": a.epochs,
        "resolution": a.resolution, "vocab": shard::fingerprint(&vocab_io::encode(&vocab))}));
    let _lock = DirLock::acquire(&a.out)?;
    shard::write_examples(&a.out.join(EXAMPLES), &examples, &fp)?;
    if a.out != a.data {
        vocab_io::write(&a.out.join(VOCAB), &vocab)?;
    }
    r.emit(&json!({"examples": examples.len(), "skipped": skipped, "out": a.out}), || {
        format!("wrote {} examples ({skipped} skipped) to {}", examples.len(), a.out.display())
    })
}

fn target_text(ex: &TrainingExample, vocab: &Vocabulary) -> String {
    match &ex.target {
        Target::Sequence(s) => vocab.render(s),
        Target::Pixels(p) => {
            let masked = ex.patch_mask.iter().filter(|m| **m).count();
            format!("[pixels {}x{}x{}, {masked}/{} patches masked]", p.height, p.width, p.channels, ex.patch_mask.len())
        }
    }
}

fn print_example(ex: &TrainingExample, vocab: &Vocabulary, r: &mut Reporter) -> Result<()> {
    let input = vocab.render(&ex.input);
    let target = target_text(ex, vocab);
    r.emit(&json!({"doc_id": ex.doc_id, "task": ex.task.name(), "seed": ex.seed, "input": input, "target": target}), || {
        format!("{} [{}]\n  input:  {input}\n  target: {target}", ex.doc_id, ex.task.name())
    })
}

enum Loaded {
    Documents(Vec<Document>),
    Examples(Vec<TrainingExample>),
}

fn train(a: &TrainArgs, r: &mut Reporter) -> Result<()> {
    let mut run = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    run.train.seed = a.seed;
    if a.max_steps.is_some() {
        run.train.max_steps = a.max_steps;
    }
    let vocab = read_vocab(&a.data, None)?;
    let ex_path = a.data.join(EXAMPLES);
    let data = if ex_path.exists() {
        Loaded::Examples(shard::read_examples(&ex_path)?.1)
    } else {
        Loaded::Documents(shard::read_documents(&a.data.join(DOCUMENTS))?.1)
    };
    let mut model = match &a.init {
        Some(p) => checkpoint::load(p)?.0,
        None => Model::new(run.model_config(vocab.len()), a.seed)?,
    };
    if model.config.vocab_size != vocab.len() {
        return Err(usage(format!("model vocabulary {} differs from data vocabulary {}", model.config.vocab_size, vocab.len())));
    }
    run.model = Some(model.config.clone());

    let _lock = DirLock::acquire(&a.out)?;
    fsutil::atomic_write(&a.out.join("config.json"), &serde_json::to_vec_pretty(&run).expect("config serializes"))?;
    vocab_io::write(&a.out.join(VOCAB), &vocab)?;
    let log_path = a.out.join(STEPLOG);
    let mut logs: Vec<StepLog> = Vec::new();
    let mut checkpoints: Vec<PathBuf> = Vec::new();
    let mut write_error: Option<Error> = None;
    let mut observer = |ev: TrainEvent<'_>| -> vtl_core::Result<()> {
        match ev {
            TrainEvent::Step(l) => {
                if l.step % 50 == 0 {
                    log::info!("step {} {} loss {:.5} rate {:.2e}", l.step, l.task, l.loss, l.rate);
                }
                logs.push(l.clone());
            }
            TrainEvent::Checkpoint { tag, step, model } => {
                let name = match tag {
                    CheckpointTag::Initial => "ckpt-initial.ckpt".to_string(),
                    CheckpointTag::Stage(i) => format!("ckpt-stage-{i}.ckpt"),
                };
                let path = a.out.join(name);
                let written = checkpoint::save(&path, model, step)
                    .and_then(|_| fsutil::atomic_write(&log_path, &steplog::encode(&logs)));
                if let Err(e) = written {
                    let msg = e.to_string();
                    write_error = Some(e);
                    return Err(vtl_core::Error::Config(msg));
                }
                log::info!("checkpoint {}", path.display());
                checkpoints.push(path);
            }
        }
        Ok(())
    };
    let result = match &data {
        Loaded::Documents(d) => trainer::train(&run.train, TrainData::Documents(d), &vocab, &mut model, &mut observer),
        Loaded::Examples(e) => trainer::train(&run.train, TrainData::Examples(e), &vocab, &mut model, &mut observer),
    };
    if let Some(e) = write_error {
        return Err(e);
    }
    fsutil::atomic_write(&log_path, &steplog::encode(&logs))?;
    let summary = result?;
    let final_path = a.out.join("final.ckpt");
    checkpoint::save(&final_path, &model, summary.steps)?;
    checkpoints.push(final_path);
    // Names relative to the output directory keep the summary reproducible.
    let names: Vec<String> =
        checkpoints.iter().map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect();
    let report = json!({
        "steps": summary.steps,
        "last_loss": summary.last_loss,
        "skipped_examples": summary.skipped_examples,
        "parameters": model.params.count(),
        "checkpoints": names,
        "steplog": STEPLOG,
    });
    fsutil::atomic_write(&a.out.join("summary.json"), &serde_json::to_vec_pretty(&report).expect("summary serializes"))?;
    r.emit(&report, || {
        format!(
            "trained {} steps ({} parameters), final loss {}, checkpoints in {}",
            summary.steps,
            model.params.count(),
            summary.last_loss.map(|l| format!("{l:.5}")).unwrap_or_else(|| "n/a".into()),
            a.out.display()
        )
    })
}

fn load_model(path: &Path, vocab: &Vocabulary) -> Result<Model> {
    let (model, _) = checkpoint::load(path)?;
    if model.config.vocab_size != vocab.len() {
        return Err(usage(format!("checkpoint vocabulary {} differs from vocabulary file {}", model.config.vocab_size, vocab.len())));
    }
    Ok(model)
}

fn eval(a: &EvalArgs, r: &mut Reporter) -> Result<()> {
    let vocab = read_vocab(&a.data, a.vocab.as_ref())?;
    let model = load_model(&a.checkpoint, &vocab)?;
    let path = a.data.join(EXAMPLES);
    if !path.exists() {
        return Err(usage(format!("{} not found; run build-tasks first", path.display())));
    }
    let (_, examples) = shard::read_examples(&path)?;
    let kinds: Vec<TaskKind> = match &a.task {
        Some(t) => vec![parse_task(t)?],
        None => {
            let mut k: Vec<TaskKind> = examples.iter().map(|e| e.task).collect();
            k.sort();
            k.dedup();
            k
        }
    };
    for kind in kinds {
        let report = trainer::evaluate(&model, &examples, kind, &vocab)?;
        r.emit(&report, || format!("{}: {} = {:.4} over {} examples", report.task, report.metric, report.value, report.count))?;
    }
    Ok(())
}

fn select_docs(docs: Vec<Document>, id: Option<&String>, limit: Option<usize>) -> Result<Vec<Document>> {
    let docs: Vec<Document> = match id {
        Some(id) => docs.into_iter().filter(|d| &d.id == id).collect(),
        None => docs,
    };
    if let Some(id) = id {
        if docs.is_empty() {
            return Err(usage(format!("no document with id {id:?}")));
        }
    }
    Ok(docs.into_iter().take(limit.unwrap_or(usize::MAX)).collect())
}

fn generate(a: &GenerateArgs, r: &mut Reporter) -> Result<()> {
    let kind = parse_task(&a.task)?;
    if kind.is_vision() {
        return Err(usage("masked_image produces pixels; use the reconstruct subcommand"));
    }
    let vocab = read_vocab(&a.data, a.vocab.as_ref())?;
    let model = load_model(&a.checkpoint, &vocab)?;
    let (_, docs) = shard::read_documents(&a.data.join(DOCUMENTS))?;
    let cfg = TaskConfig { patch_size: model.config.patch, self_supervised_on_labeled: true, ..Default::default() };
    for doc in select_docs(docs, a.doc.as_ref(), a.limit)? {
        let seed = example_seed(a.seed, &doc.id, kind.name(), 0);
        let ex = match build_task(&doc, &vocab, kind, &cfg, seed) {
            Ok(ex) => ex,
            Err(vtl_core::Error::MissingAnnotation(what)) => {
                log::warn!("{}: no {what} annotation, skipped", doc.id);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let ids = trainer::generate(&model, &ex, &vocab)?;
        let prediction = vocab.render_ids(&ids)?;
        let input = vocab.render(&ex.input);
        let target = target_text(&ex, &vocab);
        r.emit(&json!({"doc_id": doc.id, "task": kind.name(), "input": input, "prediction": prediction, "target": target}), || {
            format!("{} [{}]\n  input:      {input}\n  prediction: {prediction}\n  target:     {target}", doc.id, kind.name())
        })?;
    }
    Ok(())
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn reconstruct(a: &ReconstructArgs, r: &mut Reporter) -> Result<()> {
    let vocab = read_vocab(&a.data, a.vocab.as_ref())?;
    let model = load_model(&a.checkpoint, &vocab)?;
    let (_, docs) = shard::read_documents(&a.data.join(DOCUMENTS))?;
    let mut cfg = TaskConfig { patch_size: model.config.patch, self_supervised_on_labeled: true, ..Default::default() };
    if let Some(ratio) = a.ratio {
        cfg.ratio_image_patches = ratio;
    }
    cfg.validate()?;
    let docs = select_docs(docs, a.doc.as_ref(), None)?;
    let _lock = DirLock::acquire(&a.out)?;
    for doc in docs {
        let doc = match a.resolution {
            Some(res) => doc.at_resolution(res, res),
            None => doc,
        };
        let seed = example_seed(a.seed, &doc.id, TaskKind::MaskedImage.name(), 0);
        let ex = build_task(&doc, &vocab, TaskKind::MaskedImage, &cfg, seed)?;
        let grid = model.grid_for(&ex.image)?;
        let pred = model.predict_patches(&ex)?;
        let original = model::patchify(&ex.image, &grid, None);
        let mse = match model::loss_vision(&pred, &original, &ex.patch_mask) {
            Ok(l) => Some(l),
            Err(vtl_core::Error::NoSupport) => None,
            Err(e) => return Err(e.into()),
        };
        let mut composite = original.clone();
        for (i, &m) in ex.patch_mask.iter().enumerate() {
            if m {
                composite.row_mut(i).copy_from_slice(pred.row(i));
            }
        }
        let masked = model::patchify(&ex.image, &grid, Some(&ex.patch_mask));
        let stem = file_stem(&doc.id);
        let recon_path = a.out.join(format!("{stem}.recon.pgm"));
        let masked_path = a.out.join(format!("{stem}.masked.pgm"));
        fsutil::atomic_write(&recon_path, &pgm::encode(&model::unpatchify(&composite, &grid, ex.image.channels)))?;
        fsutil::atomic_write(&masked_path, &pgm::encode(&model::unpatchify(&masked, &grid, ex.image.channels)))?;
        let n_masked = ex.patch_mask.iter().filter(|m| **m).count();
        r.emit(
            &json!({"doc_id": doc.id, "masked_patches": n_masked, "patches": ex.patch_mask.len(), "mse": mse,
                "reconstruction": recon_path, "masked": masked_path}),
            || {
                format!(
                    "{}: {n_masked}/{} patches masked, mse {} -> {}",
                    doc.id,
                    ex.patch_mask.len(),
                    mse.map(|m| format!("{m:.5}")).unwrap_or_else(|| "n/a".into()),
                    recon_path.display()
                )
            },
        )?;
    }
    Ok(())
}

fn inspect(a: &InspectArgs, r: &mut Reporter) -> Result<()> {
    let bytes = fsutil::read(&a.path)?;
    let first = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let header: Option<serde_json::Value> = serde_json::from_slice(first).ok();
    let format = header.as_ref().and_then(|h| h.get("format")).and_then(|f| f.as_str()).map(str::to_string);
    let dir = a.path.parent().unwrap_or(Path::new("."));
    let window = a.record..a.record.saturating_add(a.limit);
    match format.as_deref() {
        Some(shard::FORMAT) => {
            let kind = header.as_ref().and_then(|h| h.get("kind")).and_then(|k| k.as_str()).unwrap_or_default();
            if kind == "documents" {
                let (h, docs) = shard::read_documents(&a.path)?;
                r.emit(&h, || format!("document shard: {} records, fingerprint {}", h.count, h.fingerprint))?;
                for (i, d) in docs.iter().enumerate().filter(|(i, _)| window.contains(i)) {
                    let words: Vec<_> = d.words.iter().map(|w| json!({"text": w.text, "bbox": w.bbox.to_array()})).collect();
                    r.emit(
                        &json!({"record": i, "id": d.id, "source": d.source, "height": d.image.height, "width": d.image.width,
                            "words": words, "labels": d.labels}),
                        || {
                            let mut s = format!(
                                "[{i}] {} ({:?} {}x{}, {} words)\n  text: {}",
                                d.id,
                                d.source,
                                d.image.height,
                                d.image.width,
                                d.words.len(),
                                d.text()
                            );
                            if !d.labels.is_empty() {
                                s.push_str(&format!("\n  labels: {}", serde_json::to_string(&d.labels).unwrap_or_default()));
                            }
                            s
                        },
                    )?;
                }
            } else {
                let (h, exs) = shard::read_examples(&a.path)?;
                let vocab = read_vocab(dir, a.vocab.as_ref())?;
                r.emit(&h, || format!("example shard: {} records, fingerprint {}", h.count, h.fingerprint))?;
                for ex in exs.iter().enumerate().filter(|(i, _)| window.contains(i)).map(|(_, e)| e) {
                    print_example(ex, &vocab, r)?;
                }
            }
        }
        Some(checkpoint::FORMAT) => {
            let (model, step) = checkpoint::load(&a.path)?;
            let tensors: Vec<_> = model.params.tensors.iter().map(|t| json!({"name": t.name, "shape": [t.value.rows, t.value.cols]})).collect();
            r.emit(&json!({"step": step, "config": model.config, "parameters": model.params.count(), "tensors": tensors}), || {
                format!(
                    "checkpoint at step {step}: {} tensors, {} parameters\n  config: {}",
                    model.params.tensors.len(),
                    model.params.count(),
                    serde_json::to_string(&model.config).unwrap_or_default()
                )
            })?;
        }
        _ if bytes.first() == Some(&b'[') => {
            let v = vocab_io::decode(&bytes, &a.path)?;
            let mut counts = std::collections::BTreeMap::<&str, usize>::new();
            for (_, f) in v.entries() {
                *counts.entry(f.tag()).or_default() += 1;
            }
            r.emit(&json!({"size": v.len(), "families": counts}), || format!("vocabulary of {} ids: {counts:?}", v.len()))?;
        }
        _ => {
            let logs = steplog::decode(&bytes, &a.path)
                .map_err(|_| Error::corrupt(&a.path, "not a shard, checkpoint, vocabulary or step log"))?;
            let (first, last) = (logs.first(), logs.last());
            r.emit(&json!({"steps": logs.len(), "first": first, "last": last}), || {
                format!(
                    "step log: {} steps, loss {} -> {}",
                    logs.len(),
                    first.map(|l| format!("{:.5}", l.loss)).unwrap_or_default(),
                    last.map(|l| format!("{:.5}", l.loss)).unwrap_or_default()
                )
            })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_parse() {
        assert_eq!(parse_spans("0..2, 5..6").unwrap(), vec![0..2, 5..6]);
        assert!(parse_spans("3").is_err());
        assert!(parse_spans("a..2").is_err());
    }

    #[test]
    fn task_names() {
        assert_eq!(parse_task("masked_image").unwrap(), TaskKind::MaskedImage);
        assert!(matches!(parse_task("nope"), Err(Error::Usage(_))));
    }

    #[test]
    fn stems_are_file_safe() {
        assert_eq!(file_stem("a/b c.d"), "a_b_c_d");
    }
}
