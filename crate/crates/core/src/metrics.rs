//! Evaluation metrics over parsed generations.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;

fn normalize(s: &str) -> String {
    let mut out = String::new();
    for (i, w) in s.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

/// Fraction of exactly equal pairs. Zero for no examples.
pub fn accuracy<S: AsRef<str>>(pred: &[S], gold: &[S]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| p.as_ref() == g.as_ref()).count();
    hits as f64 / gold.len() as f64
}

/// Like [`accuracy`] after collapsing whitespace.
pub fn exact_match<S: AsRef<str>>(pred: &[S], gold: &[S]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| normalize(p.as_ref()) == normalize(g.as_ref())).count();
    hits as f64 / gold.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfCounts {
    pub true_positive: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl PrfCounts {
    pub fn add(&mut self, other: PrfCounts) {
        self.true_positive += other.true_positive;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.true_positive as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.true_positive as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Maximal runs of words sharing a tag, as (joined words, tag).
pub fn entities(tagged: &[(String, String)]) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (w, t) in tagged {
        match out.last_mut() {
            Some((text, tag)) if tag == t => {
                text.push(' ');
                text.push_str(w);
            }
            _ => out.push((w.clone(), t.clone())),
        }
    }
    out
}

/// Entity-level match counts; entities are compared as a multiset of (text, tag).
pub fn entity_counts(pred: &[(String, String)], gold: &[(String, String)]) -> PrfCounts {
    let p = entities(pred);
    let mut g = entities(gold);
    let mut tp = 0;
    for e in &p {
        if let Some(i) = g.iter().position(|x| x == e) {
            g.swap_remove(i);
            tp += 1;
        }
    }
    PrfCounts { true_positive: tp, predicted: p.len(), gold: entities(gold).len() }
}

pub fn entity_f1(pred: &[(String, String)], gold: &[(String, String)]) -> f64 {
    entity_counts(pred, gold).f1()
}

/// Read "w1 w2 [Tag] w3 [Tag2]" back into word/tag pairs. Words with no
/// following tag are dropped.
pub fn parse_tagged(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut pending: Vec<&str> = Vec::new();
    for tok in text.split_whitespace() {
        if tok.len() > 2 && tok.starts_with('[') && tok.ends_with(']') {
            out.extend(pending.drain(..).map(|w| (w.to_string(), tok.to_string())));
        } else {
            pending.push(tok);
        }
    }
    out
}

/// Mean IoU under greedy one-to-one matching by descending IoU. Unmatched
/// boxes on either side count as zero; two empty lists score 1.
pub fn bbox_iou(pred: &[BBox], gold: &[BBox]) -> f64 {
    let denom = pred.len().max(gold.len());
    if denom == 0 {
        return 1.0;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gold.iter().enumerate() {
            pairs.push((p.iou(g), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = alloc::vec![false; pred.len()];
    let mut used_g = alloc::vec![false; gold.len()];
    let mut total = 0.0;
    for (iou, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            total += iou;
        }
    }
    total / denom as f64
}
