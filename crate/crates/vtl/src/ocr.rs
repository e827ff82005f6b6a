//! OCR JSON ingestion: one document per file, or one per line.

use std::path::Path;

use serde::Deserialize;
use vtl_core::corpus::{Document, ImageSource, Labels, Raster, Word};
use vtl_core::BBox;

use crate::error::{Error, Result};
use crate::{fsutil, pgm};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OcrImage {
    width: usize,
    height: usize,
    #[serde(default)]
    pixels_path: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OcrWord {
    text: String,
    bbox: [f64; 4],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OcrDocument {
    id: String,
    image: OcrImage,
    words: Vec<OcrWord>,
    #[serde(default)]
    labels: Option<Labels>,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Synthesize a blank raster when no pixel file is given.
    pub allow_blank: bool,
    pub allow_empty: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { allow_blank: true, allow_empty: false }
    }
}

/// Parse one OCR JSON document. `path` and `record` locate errors; pixel
/// paths are resolved against `base`.
pub fn load_ocr_document(bytes: &[u8], base: &Path, opts: &IngestOptions, path: &Path, record: usize) -> Result<Document> {
    let raw: OcrDocument = serde_json::from_slice(bytes).map_err(|e| Error::schema(path, record, e))?;
    let mut words = Vec::with_capacity(raw.words.len());
    for (i, w) in raw.words.into_iter().enumerate() {
        let bbox = BBox::from_array(w.bbox).map_err(|_| {
            Error::schema(path, record, format!("word {i}: invalid bbox {:?} (inverted or outside [0,1])", w.bbox))
        })?;
        words.push(Word { text: w.text, bbox });
    }
    let (image, source) = match &raw.image.pixels_path {
        Some(p) => {
            let full = base.join(p);
            let r = pgm::decode(&fsutil::read(&full)?).map_err(|e| Error::corrupt(&full, e))?;
            if (r.width, r.height) != (raw.image.width, raw.image.height) {
                return Err(Error::schema(
                    path,
                    record,
                    format!("pixel file is {}x{}, header says {}x{}", r.width, r.height, raw.image.width, raw.image.height),
                ));
            }
            (r, ImageSource::Scanned)
        }
        None if opts.allow_blank => (Raster::blank(raw.image.height, raw.image.width), ImageSource::Blank),
        None => return Err(Error::schema(path, record, "image.pixels_path is required")),
    };
    let doc = Document { id: raw.id, image, source, words, labels: raw.labels.unwrap_or_default() };
    doc.validate(opts.allow_empty).map_err(|e| Error::schema(path, record, e))?;
    Ok(doc)
}

/// Load a `.json` file (one document) or a `.jsonl` file (one per line).
pub fn load_ocr_file(path: &Path, opts: &IngestOptions) -> Result<Vec<Document>> {
    let bytes = fsutil::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    if path.extension().is_some_and(|e| e == "jsonl") {
        bytes
            .split(|&b| b == b'\n')
            .enumerate()
            .filter(|(_, l)| !l.iter().all(u8::is_ascii_whitespace))
            .map(|(i, l)| load_ocr_document(l, base, opts, path, i))
            .collect()
    } else {
        Ok(vec![load_ocr_document(&bytes, base, opts, path, 0)?])
    }
}

/// Every `.json`/`.jsonl` file under `dir` (not recursive), in name order.
pub fn load_ocr_dir(dir: &Path, opts: &IngestOptions) -> Result<Vec<Document>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json" || e == "jsonl"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        out.extend(load_ocr_file(&p, opts)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str) -> Result<Document> {
        load_ocr_document(s.as_bytes(), Path::new("."), &IngestOptions::default(), Path::new("t.json"), 0)
    }

    #[test]
    fn minimal_file() {
        let d = load(r#"{"id":"a","image":{"width":32,"height":32},"words":[{"text":"Hi","bbox":[0.1,0.1,0.2,0.2]}]}"#)
            .unwrap();
        assert_eq!(d.words.len(), 1);
        assert_eq!(d.source, ImageSource::Blank);
    }

    #[test]
    fn inverted_box_names_word() {
        let e = load(r#"{"id":"a","image":{"width":32,"height":32},"words":[{"text":"Hi","bbox":[0.5,0.5,0.4,0.6]}]}"#)
            .unwrap_err();
        assert!(e.to_string().contains("word 0"), "{e}");
    }

    #[test]
    fn missing_field_is_schema_error() {
        let e = load(r#"{"id":"a","words":[]}"#).unwrap_err();
        assert!(matches!(e, Error::Schema { .. }));
        assert_eq!(e.exit_code(), 2);
    }
}
