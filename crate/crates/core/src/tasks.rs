//! Prompt/target construction for the self-supervised objectives and the
//! supervised formats.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Raster};
use crate::error::{Error, Result};
use crate::geometry::{union_bbox, BBox, PatchGrid};
use crate::vocab::{MixedItem, SentinelFamily, Vocabulary};

pub const PROMPT_JOINT: &str = "Joint Text-Layout Reconstruction.";
pub const PROMPT_LAYOUT: &str = "Layout Modeling.";
pub const PROMPT_VISUAL_TEXT: &str = "Visual Text Recognition.";
pub const PROMPT_MASKED_IMAGE: &str = "Masked Image Reconstruction.";

pub const ENTAILMENT: &str = "Entailment";
pub const NOT_ENTAILMENT: &str = "Not Entailment";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    JointTextLayout,
    LayoutModeling,
    VisualTextRecognition,
    MaskedImage,
    Classification,
    LayoutAnalysis,
    InformationExtraction,
    QuestionAnswering,
    DocumentNli,
    EntityTagging,
}

impl TaskKind {
    pub const SELF_SUPERVISED: [TaskKind; 4] = [
        TaskKind::JointTextLayout,
        TaskKind::LayoutModeling,
        TaskKind::VisualTextRecognition,
        TaskKind::MaskedImage,
    ];
    pub const SUPERVISED: [TaskKind; 6] = [
        TaskKind::Classification,
        TaskKind::LayoutAnalysis,
        TaskKind::InformationExtraction,
        TaskKind::QuestionAnswering,
        TaskKind::DocumentNli,
        TaskKind::EntityTagging,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::JointTextLayout => "joint_text_layout",
            TaskKind::LayoutModeling => "layout_modeling",
            TaskKind::VisualTextRecognition => "visual_text_recognition",
            TaskKind::MaskedImage => "masked_image",
            TaskKind::Classification => "classification",
            TaskKind::LayoutAnalysis => "layout_analysis",
            TaskKind::InformationExtraction => "information_extraction",
            TaskKind::QuestionAnswering => "question_answering",
            TaskKind::DocumentNli => "document_nli",
            TaskKind::EntityTagging => "entity_tagging",
        }
    }

    pub fn from_name(name: &str) -> Option<TaskKind> {
        Self::SELF_SUPERVISED.iter().chain(Self::SUPERVISED.iter()).copied().find(|k| k.name() == name)
    }

    pub fn is_self_supervised(self) -> bool {
        Self::SELF_SUPERVISED.contains(&self)
    }

    pub fn is_vision(self) -> bool {
        self == TaskKind::MaskedImage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub ratio_joint: f64,
    pub ratio_layout: f64,
    pub ratio_visual_text: f64,
    pub ratio_image_patches: f64,
    pub mean_span_length: f64,
    pub patch_size: usize,
    pub max_input_len: usize,
    pub max_target_len: usize,
    /// Off by default: labeled documents only feed supervised formats.
    pub self_supervised_on_labeled: bool,
    pub dataset_name: String,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            ratio_joint: 0.15,
            ratio_layout: 0.75,
            ratio_visual_text: 0.50,
            ratio_image_patches: 0.75,
            mean_span_length: 3.0,
            patch_size: 16,
            max_input_len: 512,
            max_target_len: 128,
            self_supervised_on_labeled: false,
            dataset_name: "Synthetic".into(),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("ratio_joint", self.ratio_joint),
            ("ratio_layout", self.ratio_layout),
            ("ratio_visual_text", self.ratio_visual_text),
            ("ratio_image_patches", self.ratio_image_patches),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Config(format!("{name} = {r} must lie in (0,1)")));
            }
        }
        if !(self.mean_span_length >= 1.0) {
            return Err(Error::Config("mean_span_length must be >= 1".into()));
        }
        if self.patch_size == 0 {
            return Err(Error::Config("patch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn ratio(&self, kind: TaskKind) -> f64 {
        match kind {
            TaskKind::JointTextLayout => self.ratio_joint,
            TaskKind::LayoutModeling => self.ratio_layout,
            TaskKind::VisualTextRecognition => self.ratio_visual_text,
            TaskKind::MaskedImage => self.ratio_image_patches,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Sequence(Vec<MixedItem>),
    Pixels(Raster),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub task: TaskKind,
    pub doc_id: String,
    pub seed: u64,
    pub input: Vec<MixedItem>,
    pub target: Target,
    pub image: Raster,
    /// One flag per patch for the vision task; empty otherwise.
    pub patch_mask: Vec<bool>,
}

impl TrainingExample {
    pub fn target_items(&self) -> Option<&[MixedItem]> {
        match &self.target {
            Target::Sequence(s) => Some(s),
            Target::Pixels(_) => None,
        }
    }
}

/// Round half up.
pub fn masked_count(ratio: f64, n: usize) -> usize {
    (libm::floor(ratio * n as f64 + 0.5) as usize).min(n)
}

/// Disjoint, sorted word spans covering exactly `round(ratio * m)` words.
/// Lengths are geometric with the given mean, capped by the remaining budget
/// and by the longest free run.
pub fn sample_mask_spans<R: Rng + ?Sized>(m: usize, ratio: f64, mean_span: f64, rng: &mut R) -> Vec<Range<usize>> {
    let mut remaining = masked_count(ratio, m);
    let mut taken = alloc::vec![false; m];
    let mut spans = Vec::new();
    let p = 1.0 / mean_span.max(1.0);
    while remaining > 0 {
        let mut len = 1;
        while len < remaining && rng.gen::<f64>() >= p {
            len += 1;
        }
        let mut longest = 0;
        let mut run = 0;
        for &t in &taken {
            run = if t { 0 } else { run + 1 };
            longest = longest.max(run);
        }
        let len = len.min(longest);
        let starts: Vec<usize> = (0..=m - len).filter(|&s| taken[s..s + len].iter().all(|t| !t)).collect();
        let start = starts[rng.gen_range(0..starts.len())];
        taken[start..start + len].iter_mut().for_each(|t| *t = true);
        spans.push(start..start + len);
        remaining -= len;
    }
    spans.sort_by_key(|r| r.start);
    spans
}

fn prompt(vocab: &Vocabulary, text: &str) -> Vec<MixedItem> {
    vocab.tokenize_text(text)
}

fn word_items(doc: &Document, vocab: &Vocabulary, range: Range<usize>) -> Vec<MixedItem> {
    doc.words[range].iter().flat_map(|w| vocab.tokenize_word(&w.text, w.bbox)).collect()
}

/// Target-side words carry no location.
fn target_words(doc: &Document, vocab: &Vocabulary, range: Range<usize>) -> Vec<MixedItem> {
    doc.words[range].iter().flat_map(|w| vocab.tokenize_word(&w.text, BBox::NONE)).collect()
}

fn span_box(doc: &Document, span: &Range<usize>) -> Result<BBox> {
    let boxes: Vec<BBox> = doc.words[span.clone()].iter().map(|w| w.bbox).filter(|b| !b.is_none()).collect();
    if boxes.is_empty() {
        return Ok(BBox::NONE);
    }
    union_bbox(&boxes)
}

fn check_spans(doc: &Document, spans: &[Range<usize>], vocab: &Vocabulary) -> Result<()> {
    if doc.words.is_empty() {
        return Err(Error::EmptyDocument);
    }
    if spans.len() > vocab.sentinel_count() as usize {
        return Err(Error::Config(format!("{} spans exceed the {} sentinels", spans.len(), vocab.sentinel_count())));
    }
    let mut end = 0;
    for s in spans {
        if s.start < end || s.start >= s.end || s.end > doc.words.len() {
            return Err(Error::Config(format!("span {s:?} is empty, unsorted or out of range")));
        }
        end = s.end;
    }
    Ok(())
}

fn text_example(task: TaskKind, doc: &Document, seed: u64, input: Vec<MixedItem>, target: Vec<MixedItem>) -> TrainingExample {
    TrainingExample {
        task,
        doc_id: doc.id.clone(),
        seed,
        input,
        target: Target::Sequence(target),
        image: doc.image.clone(),
        patch_mask: Vec::new(),
    }
}

/// Masked spans become `<text_layout_k>` in the input; the target lists each
/// span's words followed by the layout tokens of its union box.
pub fn joint_text_layout_with_spans(doc: &Document, vocab: &Vocabulary, spans: &[Range<usize>], seed: u64) -> Result<TrainingExample> {
    check_spans(doc, spans, vocab)?;
    let mut input = prompt(vocab, PROMPT_JOINT);
    let mut target = Vec::new();
    let mut next = 0;
    for (k, span) in spans.iter().enumerate() {
        input.extend(word_items(doc, vocab, next..span.start));
        let s = vocab.sentinel_item(SentinelFamily::TextLayout, k as u32)?;
        input.push(s.clone());
        target.push(s);
        target.extend(target_words(doc, vocab, span.clone()));
        target.extend(vocab.layout_items(&span_box(doc, span)?)?);
        next = span.end;
    }
    input.extend(word_items(doc, vocab, next..doc.words.len()));
    Ok(text_example(TaskKind::JointTextLayout, doc, seed, input, target))
}

/// Spans are wrapped in `<layout_k> ... </layout_k>`; the target gives each
/// span's union box.
pub fn layout_modeling_with_spans(doc: &Document, vocab: &Vocabulary, spans: &[Range<usize>], seed: u64) -> Result<TrainingExample> {
    check_spans(doc, spans, vocab)?;
    let mut input = prompt(vocab, PROMPT_LAYOUT);
    let mut target = Vec::new();
    let mut next = 0;
    for (k, span) in spans.iter().enumerate() {
        let k = k as u32;
        input.extend(word_items(doc, vocab, next..span.start));
        input.push(vocab.sentinel_item(SentinelFamily::LayoutOpen, k)?);
        input.extend(word_items(doc, vocab, span.clone()));
        input.push(vocab.sentinel_item(SentinelFamily::LayoutClose, k)?);
        target.push(vocab.sentinel_item(SentinelFamily::LayoutOpen, k)?);
        target.extend(vocab.layout_items(&span_box(doc, span)?)?);
        next = span.end;
    }
    input.extend(word_items(doc, vocab, next..doc.words.len()));
    Ok(text_example(TaskKind::LayoutModeling, doc, seed, input, target))
}

/// Spans become `<text_k> layout </text_k>` (all located nowhere); the
/// target recovers the words.
pub fn visual_text_recognition_with_spans(doc: &Document, vocab: &Vocabulary, spans: &[Range<usize>], seed: u64) -> Result<TrainingExample> {
    check_spans(doc, spans, vocab)?;
    let mut input = prompt(vocab, PROMPT_VISUAL_TEXT);
    let mut target = Vec::new();
    let mut next = 0;
    for (k, span) in spans.iter().enumerate() {
        let k = k as u32;
        input.extend(word_items(doc, vocab, next..span.start));
        input.push(vocab.sentinel_item(SentinelFamily::TextOpen, k)?);
        input.extend(vocab.layout_items(&span_box(doc, span)?)?);
        input.push(vocab.sentinel_item(SentinelFamily::TextClose, k)?);
        target.push(vocab.sentinel_item(SentinelFamily::TextOpen, k)?);
        target.extend(target_words(doc, vocab, span.clone()));
        next = span.end;
    }
    input.extend(word_items(doc, vocab, next..doc.words.len()));
    Ok(text_example(TaskKind::VisualTextRecognition, doc, seed, input, target))
}

fn build_text_task<R: Rng + ?Sized>(
    kind: TaskKind,
    doc: &Document,
    vocab: &Vocabulary,
    cfg: &TaskConfig,
    rng: &mut R,
    seed: u64,
) -> Result<TrainingExample> {
    if doc.words.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let spans = sample_mask_spans(doc.words.len(), cfg.ratio(kind), cfg.mean_span_length, rng);
    match kind {
        TaskKind::JointTextLayout => joint_text_layout_with_spans(doc, vocab, &spans, seed),
        TaskKind::LayoutModeling => layout_modeling_with_spans(doc, vocab, &spans, seed),
        TaskKind::VisualTextRecognition => visual_text_recognition_with_spans(doc, vocab, &spans, seed),
        _ => unreachable!("not a text self-supervised task"),
    }
}

pub fn build_joint_text_layout<R: Rng + ?Sized>(doc: &Document, vocab: &Vocabulary, cfg: &TaskConfig, rng: &mut R) -> Result<TrainingExample> {
    build_text_task(TaskKind::JointTextLayout, doc, vocab, cfg, rng, 0)
}

pub fn build_layout_modeling<R: Rng + ?Sized>(doc: &Document, vocab: &Vocabulary, cfg: &TaskConfig, rng: &mut R) -> Result<TrainingExample> {
    build_text_task(TaskKind::LayoutModeling, doc, vocab, cfg, rng, 0)
}

pub fn build_visual_text_recognition<R: Rng + ?Sized>(doc: &Document, vocab: &Vocabulary, cfg: &TaskConfig, rng: &mut R) -> Result<TrainingExample> {
    build_text_task(TaskKind::VisualTextRecognition, doc, vocab, cfg, rng, 0)
}

/// Uniformly random subset of exactly `round(ratio * n)` patches.
pub fn sample_patch_mask<R: Rng + ?Sized>(n: usize, ratio: f64, rng: &mut R) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut mask = alloc::vec![false; n];
    for &i in idx.iter().take(masked_count(ratio, n)) {
        mask[i] = true;
    }
    mask
}

/// The full text is kept; a random patch subset is hidden and the original
/// pixels are the target.
pub fn build_masked_image<R: Rng + ?Sized>(doc: &Document, vocab: &Vocabulary, cfg: &TaskConfig, rng: &mut R) -> Result<TrainingExample> {
    let grid = PatchGrid::new(doc.image.height, doc.image.width, cfg.patch_size)?;
    let patch_mask = sample_patch_mask(grid.len(), cfg.ratio_image_patches, rng);
    masked_image_with_mask(doc, vocab, patch_mask, 0)
}

pub fn masked_image_with_mask(doc: &Document, vocab: &Vocabulary, patch_mask: Vec<bool>, seed: u64) -> Result<TrainingExample> {
    let mut input = prompt(vocab, PROMPT_MASKED_IMAGE);
    input.extend(word_items(doc, vocab, 0..doc.words.len()));
    Ok(TrainingExample {
        task: TaskKind::MaskedImage,
        doc_id: doc.id.clone(),
        seed,
        input,
        target: Target::Pixels(doc.image.clone()),
        image: doc.image.clone(),
        patch_mask,
    })
}

/// Selects which annotation a supervised example uses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisedFields {
    pub dataset: String,
    /// Index into the QA / extraction / NLI annotation lists.
    pub index: usize,
    /// Entity name for layout analysis; defaults to the first region's name.
    pub entity: Option<String>,
}

impl SupervisedFields {
    pub fn dataset(name: &str) -> Self {
        SupervisedFields { dataset: name.to_string(), ..Default::default() }
    }
}

fn missing(kind: TaskKind) -> Error {
    Error::MissingAnnotation(kind.name().to_string())
}

fn with_doc(mut items: Vec<MixedItem>, doc: &Document, vocab: &Vocabulary) -> Vec<MixedItem> {
    items.extend(word_items(doc, vocab, 0..doc.words.len()));
    items
}

/// Entities are maximal runs of words sharing a tag.
pub fn tag_runs<'a, T: AsRef<str>>(words: &'a [T], tags: &'a [T]) -> Vec<(Vec<&'a str>, &'a str)> {
    let mut out: Vec<(Vec<&str>, &str)> = Vec::new();
    for (w, t) in words.iter().zip(tags) {
        match out.last_mut() {
            Some((ws, tag)) if *tag == t.as_ref() => ws.push(w.as_ref()),
            _ => out.push((alloc::vec![w.as_ref()], t.as_ref())),
        }
    }
    out
}

pub fn build_supervised(doc: &Document, vocab: &Vocabulary, kind: TaskKind, fields: &SupervisedFields) -> Result<TrainingExample> {
    let ds = &fields.dataset;
    let labels = &doc.labels;
    let (input, target) = match kind {
        TaskKind::Classification => {
            let class = labels.class.as_ref().ok_or_else(|| missing(kind))?;
            let p = prompt(vocab, &format!("Document Classification on {ds}."));
            (with_doc(p, doc, vocab), vocab.tokenize_text(class))
        }
        TaskKind::LayoutAnalysis => {
            let entity = match &fields.entity {
                Some(e) => e.clone(),
                None => labels.regions.first().ok_or_else(|| missing(kind))?.name.clone(),
            };
            let regions: Vec<&BBox> = labels.regions.iter().filter(|r| r.name == entity).map(|r| &r.bbox).collect();
            if regions.is_empty() {
                return Err(missing(kind));
            }
            let mut p = prompt(vocab, &format!("Layout Analysis on {ds}."));
            p.extend(vocab.tokenize_text(&entity));
            let mut t = vocab.tokenize_text(&entity);
            for b in regions {
                t.extend(vocab.layout_items(b)?);
            }
            (with_doc(p, doc, vocab), t)
        }
        TaskKind::InformationExtraction => {
            let ex = labels.extraction.get(fields.index).ok_or_else(|| missing(kind))?;
            let mut p = prompt(vocab, &format!("Information Extraction on {ds}."));
            p.extend(vocab.tokenize_text(&ex.query));
            let mut t = vocab.tokenize_text(&ex.label);
            if ex.with_boxes {
                let q: Vec<&str> = ex.query.split_whitespace().collect();
                let start = (0..doc.words.len().saturating_sub(q.len()) + 1)
                    .find(|&s| {
                        s + q.len() <= doc.words.len() && doc.words[s..s + q.len()].iter().zip(&q).all(|(w, q)| w.text == *q)
                    })
                    .filter(|_| !q.is_empty())
                    .ok_or_else(|| Error::MissingAnnotation(format!("{}: query {:?} not in document", kind.name(), ex.query)))?;
                for w in &doc.words[start..start + q.len()] {
                    t.extend(vocab.layout_items(&w.bbox)?);
                }
            }
            (with_doc(p, doc, vocab), t)
        }
        TaskKind::QuestionAnswering => {
            let qa = labels.qa.get(fields.index).ok_or_else(|| missing(kind))?;
            let mut p = prompt(vocab, &format!("Question Answering on {ds}."));
            p.extend(vocab.tokenize_text(&qa.question));
            (with_doc(p, doc, vocab), vocab.tokenize_text(&qa.answer))
        }
        TaskKind::DocumentNli => {
            let pair = labels.nli.get(fields.index).ok_or_else(|| missing(kind))?;
            let mut p = prompt(vocab, &format!("Document Natural Language Inference on {ds}."));
            p.extend(vocab.tokenize_text(&pair.first));
            p.extend(vocab.tokenize_text(&pair.second));
            let answer = if pair.entailed { ENTAILMENT } else { NOT_ENTAILMENT };
            (with_doc(p, doc, vocab), vocab.tokenize_text(answer))
        }
        TaskKind::EntityTagging => {
            let tags = labels.word_tags.as_ref().ok_or_else(|| missing(kind))?;
            if tags.len() != doc.words.len() {
                return Err(Error::MissingAnnotation(format!(
                    "{}: {} tags for {} words",
                    kind.name(),
                    tags.len(),
                    doc.words.len()
                )));
            }
            let words: Vec<&str> = doc.words.iter().map(|w| w.text.as_str()).collect();
            let tags: Vec<&str> = tags.iter().map(|t| t.as_str()).collect();
            let mut t = Vec::new();
            for (ws, tag) in tag_runs(&words, &tags) {
                for w in ws {
                    t.extend(vocab.tokenize_word(w, BBox::NONE));
                }
                t.extend(vocab.tokenize_word(tag, BBox::NONE));
            }
            let p = prompt(vocab, &format!("Entity Recognition on {ds}."));
            (with_doc(p, doc, vocab), t)
        }
        _ => return Err(Error::Config(format!("{} is not a supervised task", kind.name()))),
    };
    Ok(text_example(kind, doc, 0, input, target))
}

/// Every fixed prompt word, for vocabulary construction.
pub fn prompt_words(dataset: &str) -> Vec<String> {
    let mut out = Vec::new();
    let fixed = [
        PROMPT_JOINT.to_string(),
        PROMPT_LAYOUT.to_string(),
        PROMPT_VISUAL_TEXT.to_string(),
        PROMPT_MASKED_IMAGE.to_string(),
        format!("Document Classification on {dataset}."),
        format!("Layout Analysis on {dataset}."),
        format!("Information Extraction on {dataset}."),
        format!("Question Answering on {dataset}."),
        format!("Document Natural Language Inference on {dataset}."),
        format!("Entity Recognition on {dataset}."),
        ENTAILMENT.to_string(),
        NOT_ENTAILMENT.to_string(),
    ];
    for p in fixed {
        out.extend(p.split_whitespace().map(|s| s.to_string()));
    }
    out
}

/// Build one example of `kind` from `doc` with the generator seeded by `seed`.
pub fn build_task(doc: &Document, vocab: &Vocabulary, kind: TaskKind, cfg: &TaskConfig, seed: u64) -> Result<TrainingExample> {
    if kind.is_self_supervised() && !doc.labels.is_empty() && !cfg.self_supervised_on_labeled {
        return Err(Error::Config(format!(
            "self-supervised task {} requested on labeled document {}",
            kind.name(),
            doc.id
        )));
    }
    let mut rng = crate::seed::rng_from_seed(seed);
    let mut ex = match kind {
        TaskKind::JointTextLayout | TaskKind::LayoutModeling | TaskKind::VisualTextRecognition => {
            build_text_task(kind, doc, vocab, cfg, &mut rng, seed)?
        }
        TaskKind::MaskedImage => build_masked_image(doc, vocab, cfg, &mut rng)?,
        _ => {
            let n = match kind {
                TaskKind::QuestionAnswering => doc.labels.qa.len(),
                TaskKind::InformationExtraction => doc.labels.extraction.len(),
                TaskKind::DocumentNli => doc.labels.nli.len(),
                _ => 1,
            };
            let fields = SupervisedFields {
                dataset: cfg.dataset_name.clone(),
                index: if n > 1 { rng.gen_range(0..n) } else { 0 },
                entity: None,
            };
            build_supervised(doc, vocab, kind, &fields)?
        }
    };
    ex.seed = seed;
    Ok(ex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{worked_example_document, LayoutPlan};
    use crate::seed::rng_from_seed;
    use alloc::vec;

    fn vocab_for(doc: &Document) -> Vocabulary {
        let mut words: Vec<String> = doc.words.iter().map(|w| w.text.clone()).collect();
        words.extend(prompt_words("Synthetic"));
        Vocabulary::build(&words, 128, 500, 10_000).unwrap()
    }

    #[test]
    fn masked_counts() {
        assert_eq!(masked_count(0.15, 9), 1);
        assert_eq!(masked_count(0.75, 4), 3);
        assert_eq!(masked_count(0.5, 9), 5);
        assert_eq!(masked_count(0.75, 64), 48);
        assert_eq!(masked_count(0.75, 1), 1);
        assert_eq!(masked_count(0.15, 1), 0);
    }

    #[test]
    fn span_examples() {
        let mut rng = rng_from_seed(1);
        let s = sample_mask_spans(9, 0.15, 3.0, &mut rng);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 1);
        let s = sample_mask_spans(4, 0.75, 3.0, &mut rng);
        assert_eq!(s.iter().map(|r| r.len()).sum::<usize>(), 3);
        assert!(sample_mask_spans(1, 0.15, 3.0, &mut rng).is_empty());
        assert_eq!(sample_mask_spans(1, 0.75, 3.0, &mut rng), vec![0..1]);
    }

    #[test]
    fn spans_exact_over_seeds() {
        for seed in 0..1000 {
            let mut rng = rng_from_seed(seed);
            let s = sample_mask_spans(100, 0.15, 3.0, &mut rng);
            assert_eq!(s.iter().map(|r| r.len()).sum::<usize>(), 15);
            for w in s.windows(2) {
                assert!(w[0].end <= w[1].start);
            }
        }
    }

    #[test]
    fn spans_are_deterministic() {
        let a = sample_mask_spans(50, 0.5, 3.0, &mut rng_from_seed(9));
        let b = sample_mask_spans(50, 0.5, 3.0, &mut rng_from_seed(9));
        assert_eq!(a, b);
    }

    #[test]
    fn joint_zero_spans_has_empty_target() {
        let doc = worked_example_document(32, 32);
        let v = vocab_for(&doc);
        let ex = joint_text_layout_with_spans(&doc, &v, &[], 0).unwrap();
        assert!(ex.target_items().unwrap().is_empty());
    }

    #[test]
    fn single_word_layout_modeling() {
        let mut doc = worked_example_document(32, 32);
        doc.words.truncate(1);
        doc.labels = Default::default();
        let v = vocab_for(&doc);
        let ex = build_task(&doc, &v, TaskKind::LayoutModeling, &TaskConfig::default(), 3).unwrap();
        assert_eq!(v.render(ex.target_items().unwrap()), "<layout_0> <100><350><108><372>");
    }

    #[test]
    fn masked_image_mask_size() {
        let plan = LayoutPlan::default();
        let doc = crate::corpus::synth_document(0, 1, &plan, 128, 128, false).unwrap();
        let v = vocab_for(&doc);
        let ex = build_task(&doc, &v, TaskKind::MaskedImage, &TaskConfig::default(), 5).unwrap();
        assert_eq!(ex.patch_mask.len(), 64);
        assert_eq!(ex.patch_mask.iter().filter(|m| **m).count(), 48);
        assert_eq!(ex.target, Target::Pixels(doc.image.clone()));
        assert_eq!(v.render(&ex.input), format!("{PROMPT_MASKED_IMAGE} {}", doc.text()));
    }

    #[test]
    fn labeled_docs_refuse_self_supervision() {
        let doc = worked_example_document(32, 32);
        let v = vocab_for(&doc);
        let err = build_task(&doc, &v, TaskKind::JointTextLayout, &TaskConfig::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let cfg = TaskConfig { self_supervised_on_labeled: true, ..Default::default() };
        assert!(build_task(&doc, &v, TaskKind::JointTextLayout, &cfg, 0).is_ok());
    }

    #[test]
    fn missing_annotation_names_kind() {
        let mut doc = worked_example_document(32, 32);
        doc.labels.class = None;
        let v = vocab_for(&doc);
        let err = build_supervised(&doc, &v, TaskKind::Classification, &SupervisedFields::dataset("X")).unwrap_err();
        assert_eq!(err, Error::MissingAnnotation("classification".into()));
        let err = build_supervised(&doc, &v, TaskKind::EntityTagging, &SupervisedFields::dataset("X")).unwrap_err();
        assert_eq!(err, Error::MissingAnnotation("entity_tagging".into()));
    }

    #[test]
    fn task_names_round_trip() {
        for k in TaskKind::SELF_SUPERVISED.iter().chain(TaskKind::SUPERVISED.iter()) {
            assert_eq!(TaskKind::from_name(k.name()), Some(*k));
        }
    }
}
