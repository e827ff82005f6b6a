//! Mixed-objective training, optimizer, schedule and evaluation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::geometry::PatchGrid;
use crate::metrics::{self, PrfCounts};
use crate::model::{self, argmax, Gradients, Mat, Model};
use crate::seed::{example_seed, rng_from_seed, SeedHasher};
use crate::tasks::{build_task, sample_patch_mask, Target, TaskConfig, TaskKind, TrainingExample};
use crate::vocab::{parse_layout_groups, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub resolution: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeight {
    pub task: TaskKind,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub mixture: Vec<MixtureWeight>,
    /// Share of steps given to supervised tasks when the corpus has labels.
    pub supervised_ratio: f64,
    pub curriculum: Vec<Stage>,
    pub seed: u64,
    /// Stop after this many optimizer steps in total.
    pub max_steps: Option<u64>,
    pub tasks: TaskConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            warmup_steps: 1000,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.98,
            epsilon: 1e-8,
            batch_size: 8,
            clip_norm: Some(1.0),
            mixture: TaskKind::SELF_SUPERVISED.iter().map(|&task| MixtureWeight { task, weight: 0.25 }).collect(),
            supervised_ratio: 0.1,
            curriculum: vec![Stage { resolution: 32, epochs: 1 }, Stage { resolution: 64, epochs: 1 }],
            seed: 0,
            max_steps: None,
            tasks: TaskConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Large-scale schedule: batch 512 and resolutions 224, 512, 1024.
    pub fn paper_scale() -> Self {
        TrainConfig {
            batch_size: 512,
            curriculum: [224, 512, 1024].iter().map(|&resolution| Stage { resolution, epochs: 1 }).collect(),
            ..Default::default()
        }
    }

    pub fn validate(&self, patch: usize) -> Result<()> {
        self.tasks.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0,1)".into()));
        }
        if self.weight_decay < 0.0 || self.epsilon <= 0.0 {
            return Err(Error::Config("weight_decay must be >= 0 and epsilon > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.curriculum.is_empty() {
            return Err(Error::Config("curriculum is empty".into()));
        }
        for s in &self.curriculum {
            if s.resolution == 0 || s.resolution % patch != 0 {
                return Err(Error::Config(format!("resolution {} is not a multiple of patch {patch}", s.resolution)));
            }
        }
        if self.mixture.iter().any(|m| !(m.weight >= 0.0)) {
            return Err(Error::Config("mixture weights must be non-negative".into()));
        }
        let total: f64 = self.mixture.iter().map(|m| m.weight).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        if !(0.0..1.0).contains(&self.supervised_ratio) {
            return Err(Error::Config("supervised_ratio must lie in [0,1)".into()));
        }
        Ok(())
    }

    /// Rate at 1-based `step`: linear warmup, then constant.
    pub fn rate(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.learning_rate
        } else {
            self.learning_rate * step as f64 / self.warmup_steps as f64
        }
    }
}

/// Task weights restricted to `available`, renormalized. When `labeled`, the
/// supervised kinds not already listed share `supervised_ratio`.
pub fn effective_mixture(cfg: &TrainConfig, available: &[TaskKind], labeled: bool) -> Vec<(TaskKind, f64)> {
    let mut w: Vec<(TaskKind, f64)> =
        cfg.mixture.iter().filter(|m| available.contains(&m.task) && m.weight > 0.0).map(|m| (m.task, m.weight)).collect();
    if labeled && cfg.supervised_ratio > 0.0 {
        let extra: Vec<TaskKind> = TaskKind::SUPERVISED
            .iter()
            .copied()
            .filter(|k| available.contains(k) && !w.iter().any(|(t, _)| t == k))
            .collect();
        if !extra.is_empty() {
            let own: f64 = w.iter().map(|x| x.1).sum();
            let (keep, share) = if own > 0.0 { (1.0 - cfg.supervised_ratio, cfg.supervised_ratio) } else { (0.0, 1.0) };
            w.iter_mut().for_each(|x| x.1 *= keep / own.max(f64::MIN_POSITIVE));
            w.extend(extra.iter().map(|&k| (k, share / extra.len() as f64)));
        }
    }
    let total: f64 = w.iter().map(|x| x.1).sum();
    if total <= 0.0 {
        let n = available.len().max(1) as f64;
        return available.iter().map(|&k| (k, 1.0 / n)).collect();
    }
    w.into_iter().map(|(k, x)| (k, x / total)).collect()
}

pub fn sample_task<R: Rng + ?Sized>(mixture: &[(TaskKind, f64)], rng: &mut R) -> TaskKind {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(k, w) in mixture {
        acc += w;
        if u < acc {
            return k;
        }
    }
    mixture.last().map(|x| x.0).unwrap_or(TaskKind::JointTextLayout)
}

pub fn step_seed(global: u64, step: u64) -> u64 {
    SeedHasher::default().u64(global).str("step").u64(step).finish()
}

/// Adam with decoupled weight decay on matrix parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
    pub t: u64,
}

impl AdamW {
    pub fn new(model: &Model) -> Self {
        let z = Gradients::zeros_like(&model.params).tensors;
        AdamW { m: z.clone(), v: z, t: 0 }
    }

    pub fn step(&mut self, model: &mut Model, grads: &Gradients, cfg: &TrainConfig, rate: f64) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(cfg.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(cfg.beta2, self.t as f64);
        for (i, t) in model.params.tensors.iter_mut().enumerate() {
            let g = &grads.tensors[i];
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..g.data.len() {
                let gj = g.data[j];
                m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * gj;
                v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * gj * gj;
                let mh = m.data[j] / bc1;
                let vh = v.data[j] / bc2;
                let p = &mut t.value.data[j];
                if t.decay {
                    *p -= rate * cfg.weight_decay * *p;
                }
                *p -= rate * mh / (libm::sqrt(vh) + cfg.epsilon);
            }
        }
        model.params.snap_to_f32();
    }
}

fn grad_norm(g: &Gradients) -> f64 {
    libm::sqrt(g.tensors.iter().flat_map(|m| m.data.iter()).map(|v| v * v).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub task: String,
    pub loss: f64,
    pub rate: f64,
    pub resolution: usize,
    pub examples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointTag {
    Initial,
    Stage(usize),
}

pub enum TrainEvent<'a> {
    Step(&'a StepLog),
    Checkpoint { tag: CheckpointTag, step: u64, model: &'a Model },
}

/// What the trainer draws from.
pub enum TrainData<'a> {
    /// Examples are built on the fly per step from these documents.
    Documents(&'a [Document]),
    /// Prebuilt examples, reused every epoch.
    Examples(&'a [TrainingExample]),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainSummary {
    pub steps: u64,
    pub last_loss: Option<f64>,
    pub skipped_examples: usize,
}

/// Image (and mask, for vision) of a prebuilt example at `res x res`.
pub fn example_at_resolution(ex: &TrainingExample, res: usize, cfg: &TaskConfig) -> Result<TrainingExample> {
    if ex.image.height == res && ex.image.width == res {
        return Ok(ex.clone());
    }
    let mut out = ex.clone();
    out.image = ex.image.resize_area(res, res);
    if let Target::Pixels(t) = &ex.target {
        out.target = Target::Pixels(t.resize_area(res, res));
        let n = PatchGrid::new(res, res, cfg.patch_size)?.len();
        let mut rng = rng_from_seed(ex.seed);
        out.patch_mask = sample_patch_mask(n, cfg.ratio_image_patches, &mut rng);
    }
    Ok(out)
}

fn steps_per_epoch(items: usize, batch: usize) -> u64 {
    items.div_ceil(batch).max(1) as u64
}

pub fn train(
    cfg: &TrainConfig,
    data: TrainData<'_>,
    vocab: &Vocabulary,
    model: &mut Model,
    observer: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<TrainSummary> {
    cfg.validate(model.config.patch)?;
    if cfg.tasks.patch_size != model.config.patch {
        return Err(Error::Config("task patch_size differs from model patch".into()));
    }
    let (start, eos) = (vocab.pad(), vocab.eos());
    let count = match data {
        TrainData::Documents(d) => d.len(),
        TrainData::Examples(e) => e.len(),
    };
    if count == 0 {
        return Err(Error::Config("training data is empty".into()));
    }
    let (available, labeled): (Vec<TaskKind>, bool) = match data {
        TrainData::Documents(docs) => {
            let labeled = docs.iter().any(|d| !d.labels.is_empty());
            let unlabeled = docs.iter().any(|d| d.labels.is_empty()) || cfg.tasks.self_supervised_on_labeled;
            let mut a = Vec::new();
            if unlabeled {
                a.extend(TaskKind::SELF_SUPERVISED);
            }
            if labeled {
                a.extend(TaskKind::SUPERVISED);
            }
            (a, labeled)
        }
        TrainData::Examples(exs) => {
            let mut a: Vec<TaskKind> = exs.iter().map(|e| e.task).collect();
            a.sort();
            a.dedup();
            (a, false)
        }
    };
    let mixture = effective_mixture(cfg, &available, labeled);

    observer(TrainEvent::Checkpoint { tag: CheckpointTag::Initial, step: 0, model })?;
    let mut opt = AdamW::new(model);
    let mut summary = TrainSummary::default();
    let mut last_good: Option<usize> = None;
    let mut step: u64 = 0;
    let limit = cfg.max_steps.unwrap_or(u64::MAX);

    'stages: for (si, stage) in cfg.curriculum.iter().enumerate() {
        let res = stage.resolution;
        let docs: Vec<Document>;
        let exs: Vec<TrainingExample>;
        let mut by_task: BTreeMap<TaskKind, Vec<usize>> = BTreeMap::new();
        match data {
            TrainData::Documents(d) => {
                docs = d.iter().map(|doc| doc.at_resolution(res, res)).collect();
                exs = Vec::new();
                for &k in &available {
                    let idx: Vec<usize> = (0..docs.len())
                        .filter(|&i| {
                            let l = docs[i].labels.is_empty();
                            if k.is_self_supervised() {
                                l || cfg.tasks.self_supervised_on_labeled
                            } else {
                                !l
                            }
                        })
                        .collect();
                    by_task.insert(k, idx);
                }
            }
            TrainData::Examples(e) => {
                docs = Vec::new();
                exs = e.iter().map(|x| example_at_resolution(x, res, &cfg.tasks)).collect::<Result<_>>()?;
                for (i, x) in exs.iter().enumerate() {
                    by_task.entry(x.task).or_default().push(i);
                }
            }
        }
        let stage_steps = stage.epochs as u64 * steps_per_epoch(count, cfg.batch_size);
        for _ in 0..stage_steps {
            if step >= limit {
                break 'stages;
            }
            step += 1;
            let mut rng = rng_from_seed(step_seed(cfg.seed, step));
            let task = sample_task(&mixture, &mut rng);
            let pool = by_task.get(&task).map(|v| v.as_slice()).unwrap_or(&[]);
            let mut batch = Vec::with_capacity(cfg.batch_size);
            if !pool.is_empty() {
                for _ in 0..cfg.batch_size {
                    let i = pool[rng.gen_range(0..pool.len())];
                    let ex = match data {
                        TrainData::Documents(_) => {
                            let d = &docs[i];
                            let seed = example_seed(cfg.seed, &d.id, task.name(), step);
                            build_task(d, vocab, task, &cfg.tasks, seed)
                        }
                        TrainData::Examples(_) => Ok(exs[i].clone()),
                    };
                    match ex {
                        Ok(ex) => batch.push(ex),
                        Err(Error::EmptyTarget | Error::MissingAnnotation(_) | Error::EmptyDocument) => {
                            summary.skipped_examples += 1
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            let rate = cfg.rate(step);
            let mut grads = Gradients::zeros_like(&model.params);
            let mut loss_sum = 0.0;
            let mut used = 0usize;
            let scale = 1.0 / batch.len().max(1) as f64;
            for ex in &batch {
                match model.accumulate_gradients(ex, start, eos, scale, &mut grads) {
                    Ok(l) => {
                        loss_sum += l;
                        used += 1;
                    }
                    Err(Error::EmptyTarget | Error::NoSupport) => summary.skipped_examples += 1,
                    Err(Error::Numeric(_)) => return Err(Error::Diverged { step, last_good_stage: last_good }),
                    Err(e) => return Err(e),
                }
            }
            let loss = if used > 0 { loss_sum / used as f64 } else { 0.0 };
            if !loss.is_finite() {
                return Err(Error::Diverged { step, last_good_stage: last_good });
            }
            if used > 0 {
                if used < batch.len() {
                    grads.scale(batch.len() as f64 / used as f64);
                }
                if let Some(c) = cfg.clip_norm {
                    let n = grad_norm(&grads);
                    if n > c {
                        grads.scale(c / n);
                    }
                }
                opt.step(model, &grads, cfg, rate);
                if model.params.validate().is_err() {
                    return Err(Error::Diverged { step, last_good_stage: last_good });
                }
                summary.last_loss = Some(loss);
            }
            let log = StepLog { step, task: task.name().to_string(), loss, rate, resolution: res, examples: used };
            observer(TrainEvent::Step(&log))?;
        }
        observer(TrainEvent::Checkpoint { tag: CheckpointTag::Stage(si), step, model })?;
        last_good = Some(si);
    }
    summary.steps = step;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub metric: String,
    pub value: f64,
    pub count: usize,
}

pub fn metric_name(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Classification | TaskKind::DocumentNli => "accuracy",
        TaskKind::LayoutAnalysis => "bbox_iou",
        TaskKind::EntityTagging => "entity_f1",
        TaskKind::MaskedImage => "masked_mse",
        _ => "exact_match",
    }
}

/// Fraction of teacher-forced positions whose argmax equals the target.
pub fn teacher_forced_accuracy(model: &Model, ex: &TrainingExample, vocab: &Vocabulary) -> Result<(usize, usize)> {
    let (logits, targets) = model.teacher_forced(ex, vocab.pad(), vocab.eos())?;
    let hits = targets.iter().enumerate().filter(|(r, &t)| argmax(logits.row(*r)) as u32 == t).count();
    Ok((hits, targets.len()))
}

/// Greedy generation for a sequence example, capped at the model's target length.
pub fn generate(model: &Model, ex: &TrainingExample, vocab: &Vocabulary) -> Result<Vec<u32>> {
    let enc = model.encode_items(&ex.input, &ex.image, None)?;
    model.greedy_generate(&enc, vocab.pad(), vocab.eos(), model.config.max_target_len)
}

fn boxes(ids: &[u32], vocab: &Vocabulary) -> Vec<crate::geometry::BBox> {
    parse_layout_groups(ids, vocab).map(|g| g.into_iter().flat_map(|g| g.boxes).collect()).unwrap_or_default()
}

/// Greedy-generate every example of `kind` and score it. Generations that do
/// not parse score as wrong.
pub fn evaluate(model: &Model, examples: &[TrainingExample], kind: TaskKind, vocab: &Vocabulary) -> Result<EvalReport> {
    let exs: Vec<&TrainingExample> = examples.iter().filter(|e| e.task == kind).collect();
    let value = if kind.is_vision() {
        let mut total = 0.0;
        let mut n = 0usize;
        for ex in &exs {
            let pred = model.predict_patches(ex)?;
            let grid = model.grid_for(&ex.image)?;
            let Target::Pixels(t) = &ex.target else { continue };
            match model::loss_vision(&pred, &model::patchify(t, &grid, None), &ex.patch_mask) {
                Ok(l) => {
                    total += l;
                    n += 1;
                }
                Err(Error::NoSupport) => {}
                Err(e) => return Err(e),
            }
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    } else {
        let mut preds: Vec<Vec<u32>> = Vec::with_capacity(exs.len());
        for ex in &exs {
            preds.push(generate(model, ex, vocab)?);
        }
        score_generations(&exs, &preds, kind, vocab)
    };
    Ok(EvalReport { task: kind.name().to_string(), metric: metric_name(kind).to_string(), value, count: exs.len() })
}

/// Metric for generated id sequences against the examples' targets.
pub fn score_generations(exs: &[&TrainingExample], preds: &[Vec<u32>], kind: TaskKind, vocab: &Vocabulary) -> f64 {
    let gold_ids: Vec<Vec<u32>> =
        exs.iter().map(|e| e.target_items().map(|t| t.iter().map(|i| i.id).collect()).unwrap_or_default()).collect();
    let render = |ids: &[u32]| vocab.render_ids(ids).unwrap_or_default();
    match kind {
        TaskKind::LayoutAnalysis => {
            if exs.is_empty() {
                return 0.0;
            }
            let s: f64 = preds.iter().zip(&gold_ids).map(|(p, g)| metrics::bbox_iou(&boxes(p, vocab), &boxes(g, vocab))).sum();
            s / exs.len() as f64
        }
        TaskKind::EntityTagging => {
            let mut c = PrfCounts::default();
            for (p, g) in preds.iter().zip(&gold_ids) {
                c.add(metrics::entity_counts(&metrics::parse_tagged(&render(p)), &metrics::parse_tagged(&render(g))));
            }
            c.f1()
        }
        TaskKind::Classification | TaskKind::DocumentNli => {
            let p: Vec<String> = preds.iter().map(|p| render(p)).collect();
            let g: Vec<String> = gold_ids.iter().map(|g| render(g)).collect();
            metrics::accuracy(&p, &g)
        }
        _ => {
            let p: Vec<String> = preds.iter().map(|p| render(p)).collect();
            let g: Vec<String> = gold_ids.iter().map(|g| render(g)).collect();
            metrics::exact_match(&p, &g)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, LayoutPlan};
    use crate::model::ModelConfig;
    use crate::tasks::prompt_words;

    fn setup() -> (Vocabulary, Vec<Document>, Model) {
        let docs = synth_corpus(4, 3, &LayoutPlan::default(), 32, 32, false).unwrap();
        let mut words: Vec<String> = docs.iter().flat_map(|d| d.words.iter().map(|w| w.text.clone())).collect();
        words.extend(prompt_words("Synthetic"));
        let vocab = Vocabulary::build(words.iter().map(|s| s.as_str()), 128, 500, 10_000).unwrap();
        let cfg = ModelConfig::small(vocab.len(), 8, 2, [1, 1, 1]);
        let model = Model::new(cfg, 1).unwrap();
        (vocab, docs, model)
    }

    #[test]
    fn warmup_is_linear() {
        let c = TrainConfig::default();
        assert_eq!(c.rate(1), 5e-5 / 1000.0);
        assert_eq!(c.rate(500), 5e-5 * 0.5);
        assert_eq!(c.rate(1000), 5e-5);
        assert_eq!(c.rate(5000), 5e-5);
        for s in 1..=1000u64 {
            assert!((c.rate(s) - 5e-5 * s as f64 / 1000.0).abs() < 1e-18);
        }
    }

    #[test]
    fn mixture_frequencies() {
        let c = TrainConfig::default();
        let mix = effective_mixture(&c, &TaskKind::SELF_SUPERVISED, false);
        let mut counts = BTreeMap::new();
        for s in 1..=10_000u64 {
            let mut rng = rng_from_seed(step_seed(9, s));
            *counts.entry(sample_task(&mix, &mut rng)).or_insert(0usize) += 1;
        }
        for (_, n) in counts {
            assert!(((n as f64 / 10_000.0) - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn supervised_share() {
        let c = TrainConfig::default();
        let all: Vec<TaskKind> = TaskKind::SELF_SUPERVISED.iter().chain(TaskKind::SUPERVISED.iter()).copied().collect();
        let mix = effective_mixture(&c, &all, true);
        let sup: f64 = mix.iter().filter(|m| !m.0.is_self_supervised()).map(|m| m.1).sum();
        assert!((sup - 0.1).abs() < 1e-12);
        let only = effective_mixture(&c, &TaskKind::SUPERVISED, true);
        assert!((only.iter().map(|m| m.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validates_config() {
        let mut c = TrainConfig::default();
        assert!(c.validate(16).is_ok());
        c.curriculum[0].resolution = 30;
        assert!(c.validate(16).is_err());
        let mut c = TrainConfig::default();
        c.mixture[0].weight = 0.5;
        assert!(c.validate(16).is_err());
    }

    #[test]
    fn zero_steps_only_initial_checkpoint() {
        let (vocab, docs, mut model) = setup();
        let cfg = TrainConfig { max_steps: Some(0), ..Default::default() };
        let mut events = Vec::new();
        train(&cfg, TrainData::Documents(&docs), &vocab, &mut model, &mut |e| {
            events.push(match e {
                TrainEvent::Step(_) => "step",
                TrainEvent::Checkpoint { tag: CheckpointTag::Initial, .. } => "initial",
                TrainEvent::Checkpoint { .. } => "stage",
            });
            Ok(())
        })
        .unwrap();
        assert_eq!(events, vec!["initial"]);
    }

    #[test]
    fn short_run_is_deterministic() {
        let run = || {
            let (vocab, docs, mut model) = setup();
            let cfg = TrainConfig { batch_size: 2, learning_rate: 1e-3, warmup_steps: 2, ..Default::default() };
            let mut logs = Vec::new();
            train(&cfg, TrainData::Documents(&docs), &vocab, &mut model, &mut |e| {
                if let TrainEvent::Step(l) = e {
                    logs.push(l.clone());
                }
                Ok(())
            })
            .unwrap();
            (logs, model)
        };
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        assert_eq!(a.len(), 4);
        assert_eq!(a[0].resolution, 32);
        assert_eq!(a[3].resolution, 64);
    }

    #[test]
    fn entity_f1_on_generations() {
        let (vocab, docs, _) = setup();
        let ex = build_task(&docs[0], &vocab, TaskKind::JointTextLayout, &TaskConfig::default(), 1).unwrap();
        let gold: Vec<u32> = ex.target_items().unwrap().iter().map(|i| i.id).collect();
        assert_eq!(score_generations(&[&ex], &[gold], TaskKind::JointTextLayout, &vocab), 1.0);
        assert_eq!(score_generations(&[&ex], &[vec![]], TaskKind::EntityTagging, &vocab), 0.0);
    }
}
