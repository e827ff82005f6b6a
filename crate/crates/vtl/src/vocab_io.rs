//! Vocabulary files: a JSON array of `[surface, family]` pairs in id order.

use std::path::Path;

use vtl_core::corpus::Document;
use vtl_core::tasks;
use vtl_core::Vocabulary;

use crate::error::{Error, Result};
use crate::fsutil;

/// Every string the vocabulary should cover: document text, annotations and prompts.
pub fn corpus_lines(docs: &[Document], dataset: &str) -> Vec<String> {
    let mut lines: Vec<String> = Vec::new();
    for d in docs {
        lines.push(d.text());
        let l = &d.labels;
        lines.extend(l.class.clone());
        lines.extend(l.regions.iter().map(|r| r.name.clone()));
        lines.extend(l.word_tags.iter().flatten().cloned());
        for q in &l.qa {
            lines.push(format!("{} {}", q.question, q.answer));
        }
        for x in &l.extraction {
            lines.push(format!("{} {}", x.query, x.label));
        }
        for n in &l.nli {
            lines.push(format!("{} {}", n.first, n.second));
        }
    }
    lines.push(tasks::prompt_words(dataset).join(" "));
    lines.push(format!("{} {}", tasks::ENTAILMENT, tasks::NOT_ENTAILMENT));
    lines
}

/// Vocabulary over `docs`, their annotations and every prompt word.
pub fn build_for_documents(
    docs: &[Document],
    dataset: &str,
    sentinels: u32,
    granularity: u32,
    max_words: usize,
) -> vtl_core::Result<Vocabulary> {
    Vocabulary::build(corpus_lines(docs, dataset), sentinels, granularity, max_words)
}

pub fn encode(v: &Vocabulary) -> Vec<u8> {
    let entries: Vec<(&str, &str)> = v.entries().map(|(s, f)| (s, f.tag())).collect();
    let mut out = serde_json::to_vec(&entries).expect("vocabulary serializes");
    out.push(b'\n');
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Vocabulary> {
    let entries: Vec<(String, String)> =
        serde_json::from_slice(bytes).map_err(|e| Error::corrupt(path, format!("vocabulary: {e}")))?;
    Vocabulary::from_entries(&entries).map_err(|e| Error::corrupt(path, e))
}

pub fn write(path: &Path, v: &Vocabulary) -> Result<()> {
    fsutil::atomic_write(path, &encode(v))
}

pub fn read(path: &Path) -> Result<Vocabulary> {
    decode(&fsutil::read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_ids() {
        let v = Vocabulary::build(["alpha beta", "beta gamma"], 100, 20, 100).unwrap();
        let back = decode(&encode(&v), Path::new("v")).unwrap();
        assert_eq!(back.len(), v.len());
        for id in 0..v.len() as u32 {
            assert_eq!(back.surface(id).unwrap(), v.surface(id).unwrap());
        }
    }

    #[test]
    fn reordered_entries_are_rejected() {
        let v = Vocabulary::build(["alpha beta"], 100, 20, 100).unwrap();
        let mut entries: Vec<(String, String)> = serde_json::from_slice(&encode(&v)).unwrap();
        let last = entries.len() - 1;
        entries.swap(0, last);
        let bytes = serde_json::to_vec(&entries).unwrap();
        assert!(matches!(decode(&bytes, Path::new("v")), Err(Error::Corrupt { .. })));
        assert!(matches!(decode(b"{}", Path::new("v")), Err(Error::Corrupt { .. })));
    }
}
