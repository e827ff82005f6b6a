//! Shards: one JSON header line, then one JSON record per line.
//!
//! Rasters are stored as base64 of their row-major 8-bit values; patch masks
//! as strings of `0`/`1`.

use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vtl_core::corpus::{Document, ImageSource, Labels, Raster, Word};
use vtl_core::seed::SeedHasher;
use vtl_core::tasks::{Target, TaskKind, TrainingExample};
use vtl_core::{BBox, MixedItem};

use crate::error::{Error, Result};
use crate::fsutil;

pub const FORMAT: &str = "vtl-shard";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardKind {
    Documents,
    Examples,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardHeader {
    pub format: String,
    pub version: u32,
    pub kind: ShardKind,
    pub count: usize,
    /// Hash of the configuration the records were produced under.
    pub fingerprint: String,
}

/// Hex fingerprint of any serializable configuration.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).unwrap_or_default();
    format!("{:016x}", SeedHasher::default().bytes(&json).finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterRecord {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: String,
}

impl RasterRecord {
    pub fn from_raster(r: &Raster) -> Self {
        RasterRecord { height: r.height, width: r.width, channels: r.channels, pixels: B64.encode(&r.data) }
    }

    pub fn to_raster(&self) -> std::result::Result<Raster, String> {
        let data = B64.decode(&self.pixels).map_err(|e| format!("pixels: {e}"))?;
        Raster::from_data(self.height, self.width, self.channels, data).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordRecord {
    pub text: String,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub source: ImageSource,
    pub image: RasterRecord,
    pub words: Vec<WordRecord>,
    #[serde(default)]
    pub labels: Labels,
}

impl DocumentRecord {
    pub fn from_document(d: &Document) -> Self {
        DocumentRecord {
            id: d.id.clone(),
            source: d.source,
            image: RasterRecord::from_raster(&d.image),
            words: d.words.iter().map(|w| WordRecord { text: w.text.clone(), bbox: w.bbox.to_array() }).collect(),
            labels: d.labels.clone(),
        }
    }

    pub fn to_document(&self) -> std::result::Result<Document, String> {
        let words = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                BBox::from_array(w.bbox)
                    .map(|bbox| Word { text: w.text.clone(), bbox })
                    .map_err(|_| format!("word {i}: invalid bbox {:?}", w.bbox))
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(Document {
            id: self.id.clone(),
            image: self.image.to_raster()?,
            source: self.source,
            words,
            labels: self.labels.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRecord {
    Sequence(Vec<MixedItem>),
    Pixels(RasterRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub task: TaskKind,
    pub doc_id: String,
    pub seed: u64,
    pub input: Vec<MixedItem>,
    pub target: TargetRecord,
    pub image: RasterRecord,
    #[serde(default)]
    pub patch_mask: String,
}

impl ExampleRecord {
    pub fn from_example(e: &TrainingExample) -> Self {
        ExampleRecord {
            task: e.task,
            doc_id: e.doc_id.clone(),
            seed: e.seed,
            input: e.input.clone(),
            target: match &e.target {
                Target::Sequence(s) => TargetRecord::Sequence(s.clone()),
                Target::Pixels(r) => TargetRecord::Pixels(RasterRecord::from_raster(r)),
            },
            image: RasterRecord::from_raster(&e.image),
            patch_mask: e.patch_mask.iter().map(|&m| if m { '1' } else { '0' }).collect(),
        }
    }

    pub fn to_example(&self) -> std::result::Result<TrainingExample, String> {
        let patch_mask = self
            .patch_mask
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(format!("patch_mask contains {c:?}")),
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(TrainingExample {
            task: self.task,
            doc_id: self.doc_id.clone(),
            seed: self.seed,
            input: self.input.clone(),
            target: match &self.target {
                TargetRecord::Sequence(s) => Target::Sequence(s.clone()),
                TargetRecord::Pixels(r) => Target::Pixels(r.to_raster()?),
            },
            image: self.image.to_raster()?,
            patch_mask,
        })
    }
}

pub fn encode_records<T: Serialize>(kind: ShardKind, fingerprint: &str, records: &[T]) -> Vec<u8> {
    let header = ShardHeader {
        format: FORMAT.into(),
        version: VERSION,
        kind,
        count: records.len(),
        fingerprint: fingerprint.into(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.write_all(b"\n").expect("vec write");
    }
    out
}

/// Parse a shard of `kind`; the header count must match the records present.
pub fn decode_records<T: DeserializeOwned>(bytes: &[u8], kind: ShardKind, path: &Path) -> Result<(ShardHeader, Vec<T>)> {
    let mut lines = bytes.split(|&b| b == b'\n');
    let first = lines.next().unwrap_or_default();
    let value: serde_json::Value =
        serde_json::from_slice(first).map_err(|e| Error::corrupt(path, format!("header: {e}")))?;
    if value.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
        return Err(Error::corrupt(path, "missing shard header"));
    }
    if let Some(v) = value.get("version").and_then(|v| v.as_u64()) {
        if v != VERSION as u64 {
            return Err(Error::Version { path: path.into(), found: v as u32, expected: VERSION });
        }
    }
    let header: ShardHeader = serde_json::from_value(value).map_err(|e| Error::corrupt(path, format!("header: {e}")))?;
    if header.kind != kind {
        return Err(Error::corrupt(path, format!("expected a {kind:?} shard, found {:?}", header.kind)));
    }
    let mut records = Vec::with_capacity(header.count);
    let mut ended = false;
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            ended = true;
            continue;
        }
        if ended {
            return Err(Error::corrupt(path, format!("blank line before record {i}")));
        }
        let r = serde_json::from_slice(line).map_err(|e| Error::corrupt(path, format!("record {i}: {e}")))?;
        records.push(r);
    }
    if records.len() != header.count {
        return Err(Error::corrupt(path, format!("header announces {} records, found {}", header.count, records.len())));
    }
    if !bytes.is_empty() && !bytes.ends_with(b"\n") {
        return Err(Error::corrupt(path, "truncated final record"));
    }
    Ok((header, records))
}

pub fn write_documents(path: &Path, docs: &[Document], fingerprint: &str) -> Result<()> {
    let recs: Vec<DocumentRecord> = docs.iter().map(DocumentRecord::from_document).collect();
    fsutil::atomic_write(path, &encode_records(ShardKind::Documents, fingerprint, &recs))
}

pub fn read_documents(path: &Path) -> Result<(ShardHeader, Vec<Document>)> {
    let (h, recs): (_, Vec<DocumentRecord>) = decode_records(&fsutil::read(path)?, ShardKind::Documents, path)?;
    let docs = recs
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_document().map_err(|m| Error::schema(path, i, m)))
        .collect::<Result<_>>()?;
    Ok((h, docs))
}

pub fn write_examples(path: &Path, examples: &[TrainingExample], fingerprint: &str) -> Result<()> {
    let recs: Vec<ExampleRecord> = examples.iter().map(ExampleRecord::from_example).collect();
    fsutil::atomic_write(path, &encode_records(ShardKind::Examples, fingerprint, &recs))
}

pub fn read_examples(path: &Path) -> Result<(ShardHeader, Vec<TrainingExample>)> {
    let (h, recs): (_, Vec<ExampleRecord>) = decode_records(&fsutil::read(path)?, ShardKind::Examples, path)?;
    let exs = recs
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_example().map_err(|m| Error::schema(path, i, m)))
        .collect::<Result<_>>()?;
    Ok((h, exs))
}
