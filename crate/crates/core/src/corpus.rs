//! Documents, rasters, the deterministic glyph renderer and the synthetic
//! corpus generator.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{union_bbox, BBox};
use crate::seed::{example_seed, rng_from_seed, splitmix64};

/// Row-major 8-bit raster; a stored value `v` stands for the intensity `v / 255`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn blank(height: usize, width: usize) -> Self {
        Raster { height, width, channels: 1, data: vec![0; height * width] }
    }

    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "raster {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Raster { height, width, channels, data })
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn value(&self, y: usize, x: usize, c: usize) -> f64 {
        self.get(y, x, c) as f64 / 255.0
    }

    /// Area-averaging resize in exact integer arithmetic.
    pub fn resize_area(&self, height: usize, width: usize) -> Raster {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let (h_in, w_in) = (self.height as u64, self.width as u64);
        let (h_out, w_out) = (height as u64, width as u64);
        // source pixel y spans [y*h_out, (y+1)*h_out); target row oy spans [oy*h_in, (oy+1)*h_in)
        let overlaps = |n_out: u64, n_in: u64, o: u64| -> Vec<(usize, u64)> {
            let lo = o * n_in;
            let hi = (o + 1) * n_in;
            let first = lo / n_out;
            let last = (hi - 1) / n_out;
            (first..=last)
                .filter_map(|s| {
                    let a = (s * n_out).max(lo);
                    let b = ((s + 1) * n_out).min(hi);
                    (b > a).then_some((s as usize, b - a))
                })
                .collect()
        };
        let total = h_in * w_in;
        let mut out = vec![0u8; height * width * self.channels];
        for oy in 0..h_out {
            let ys = overlaps(h_out, h_in, oy);
            for ox in 0..w_out {
                let xs = overlaps(w_out, w_in, ox);
                for c in 0..self.channels {
                    let mut acc: u64 = 0;
                    for &(y, wy) in &ys {
                        for &(x, wx) in &xs {
                            acc += self.get(y, x, c) as u64 * wy * wx;
                        }
                    }
                    let v = (acc * 2 + total) / (2 * total);
                    out[((oy * w_out + ox) as usize) * self.channels + c] = v.min(255) as u8;
                }
            }
        }
        Raster { height, width, channels: self.channels, data: out }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

/// A text query whose entity label (and optionally the boxes of the query
/// tokens) is the extraction target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub query: String,
    pub label: String,
    #[serde(default = "default_true")]
    pub with_boxes: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliPair {
    pub first: String,
    pub second: String,
    pub entailed: bool,
}

/// Task annotations for supervised formats.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Labels {
    pub class: Option<String>,
    pub regions: Vec<Region>,
    pub word_tags: Option<Vec<String>>,
    pub qa: Vec<QaPair>,
    pub extraction: Vec<Extraction>,
    pub nli: Vec<NliPair>,
}

impl Labels {
    pub fn is_empty(&self) -> bool {
        self == &Labels::default()
    }
}

/// How the raster was produced, which decides how it changes resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImageSource {
    /// Drawn from the word boxes by [`rasterize_words`]; re-rendered on resize.
    Rendered,
    /// External pixels; area-averaged on resize.
    Scanned,
    /// No pixels were supplied.
    Blank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub image: Raster,
    pub source: ImageSource,
    pub words: Vec<Word>,
    #[serde(default)]
    pub labels: Labels,
}

impl Document {
    /// Checks every word box; an empty word list is accepted only when `allow_empty`.
    pub fn validate(&self, allow_empty: bool) -> Result<()> {
        if self.words.is_empty() && !allow_empty {
            return Err(Error::EmptyDocument);
        }
        for (index, w) in self.words.iter().enumerate() {
            if w.text.trim().is_empty() || w.text.split_whitespace().count() != 1 {
                return Err(Error::InvalidWord { index, reason: format!("word text {:?} is not a single token", w.text) });
            }
            w.bbox
                .validate()
                .map_err(|_| Error::InvalidWord { index, reason: format!("invalid bbox {:?}", w.bbox.to_array()) })?;
        }
        Ok(())
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for (i, w) in self.words.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(&w.text);
        }
        s
    }

    /// The same document with its raster at `height x width`.
    pub fn at_resolution(&self, height: usize, width: usize) -> Document {
        if self.image.height == height && self.image.width == width {
            return self.clone();
        }
        let image = match self.source {
            ImageSource::Rendered => rasterize_words(&self.words, height, width),
            ImageSource::Scanned => self.image.resize_area(height, width),
            ImageSource::Blank => Raster::blank(height, width),
        };
        Document { image, ..self.clone() }
    }
}

/// 3-wide, 5-tall glyphs for printable ASCII; each row uses bit 2 for the
/// left column and bit 0 for the right.
const GLYPHS: [[u8; 5]; 95] = [
    [0, 0, 0, 0, 0], // ' '
    [2, 2, 2, 0, 2], // !
    [5, 5, 0, 0, 0], // "
    [5, 7, 5, 7, 5], // #
    [3, 6, 2, 3, 6], // $
    [5, 1, 2, 4, 5], // %
    [2, 5, 2, 5, 3], // &
    [2, 2, 0, 0, 0], // '
    [1, 2, 2, 2, 1], // (
    [4, 2, 2, 2, 4], // )
    [0, 5, 2, 5, 0], // *
    [0, 2, 7, 2, 0], // +
    [0, 0, 0, 2, 4], // ,
    [0, 0, 7, 0, 0], // -
    [0, 0, 0, 0, 2], // .
    [1, 1, 2, 4, 4], // /
    [7, 5, 5, 5, 7], // 0
    [2, 6, 2, 2, 7], // 1
    [7, 1, 7, 4, 7], // 2
    [7, 1, 7, 1, 7], // 3
    [5, 5, 7, 1, 1], // 4
    [7, 4, 7, 1, 7], // 5
    [7, 4, 7, 5, 7], // 6
    [7, 1, 1, 1, 1], // 7
    [7, 5, 7, 5, 7], // 8
    [7, 5, 7, 1, 7], // 9
    [0, 2, 0, 2, 0], // :
    [0, 2, 0, 2, 4], // ;
    [1, 2, 4, 2, 1], // <
    [0, 7, 0, 7, 0], // =
    [4, 2, 1, 2, 4], // >
    [7, 1, 2, 0, 2], // ?
    [7, 5, 7, 4, 7], // @
    [2, 5, 7, 5, 5], // A
    [6, 5, 6, 5, 6], // B
    [3, 4, 4, 4, 3], // C
    [6, 5, 5, 5, 6], // D
    [7, 4, 6, 4, 7], // E
    [7, 4, 6, 4, 4], // F
    [3, 4, 5, 5, 3], // G
    [5, 5, 7, 5, 5], // H
    [7, 2, 2, 2, 7], // I
    [1, 1, 1, 5, 2], // J
    [5, 5, 6, 5, 5], // K
    [4, 4, 4, 4, 7], // L
    [5, 7, 7, 5, 5], // M
    [6, 5, 5, 5, 5], // N
    [2, 5, 5, 5, 2], // O
    [6, 5, 6, 4, 4], // P
    [2, 5, 5, 6, 3], // Q
    [6, 5, 6, 5, 5], // R
    [3, 4, 2, 1, 6], // S
    [7, 2, 2, 2, 2], // T
    [5, 5, 5, 5, 7], // U
    [5, 5, 5, 5, 2], // V
    [5, 5, 7, 7, 5], // W
    [5, 5, 2, 5, 5], // X
    [5, 5, 2, 2, 2], // Y
    [7, 1, 2, 4, 7], // Z
    [6, 4, 4, 4, 6], // [
    [4, 4, 2, 1, 1], // backslash
    [3, 1, 1, 1, 3], // ]
    [2, 5, 0, 0, 0], // ^
    [0, 0, 0, 0, 7], // _
    [4, 2, 0, 0, 0], // `
    [0, 3, 5, 5, 3], // a
    [4, 6, 5, 5, 6], // b
    [0, 3, 4, 4, 3], // c
    [1, 3, 5, 5, 3], // d
    [0, 2, 5, 6, 3], // e
    [1, 2, 7, 2, 2], // f
    [3, 5, 3, 1, 6], // g
    [4, 6, 5, 5, 5], // h
    [2, 0, 2, 2, 2], // i
    [1, 0, 1, 5, 2], // j
    [4, 5, 6, 5, 5], // k
    [6, 2, 2, 2, 7], // l
    [0, 7, 7, 5, 5], // m
    [0, 6, 5, 5, 5], // n
    [0, 2, 5, 5, 2], // o
    [0, 6, 5, 6, 4], // p
    [0, 3, 5, 3, 1], // q
    [0, 3, 4, 4, 4], // r
    [0, 3, 6, 1, 6], // s
    [2, 7, 2, 2, 1], // t
    [0, 5, 5, 5, 3], // u
    [0, 5, 5, 5, 2], // v
    [0, 5, 5, 7, 7], // w
    [0, 5, 2, 2, 5], // x
    [5, 5, 3, 1, 6], // y
    [0, 7, 2, 4, 7], // z
    [3, 2, 6, 2, 3], // {
    [2, 2, 2, 2, 2], // |
    [6, 2, 3, 2, 6], // }
    [0, 0, 3, 6, 0], // ~
];

/// The 5x3 glyph of a byte. Bytes outside printable ASCII get a pattern
/// derived from a fixed hash of the byte.
pub fn glyph(b: u8) -> [u8; 5] {
    if (32..127).contains(&b) {
        GLYPHS[(b - 32) as usize]
    } else {
        let h = splitmix64(b as u64 ^ 0x9e37);
        core::array::from_fn(|r| ((h >> (3 * r)) & 7) as u8)
    }
}

const FIXED_BITS: u32 = 20;

/// Page fraction to Q20 fixed point; multiplication by a power of two is exact.
fn to_fixed(v: f64) -> u64 {
    libm::round(v * (1u64 << FIXED_BITS) as f64) as u64
}

fn pixel_span(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let n = n as u64;
    let a = (to_fixed(lo) * n) >> FIXED_BITS;
    let b = (to_fixed(hi) * n + (1 << FIXED_BITS) - 1) >> FIXED_BITS;
    (a.min(n) as usize, b.min(n) as usize)
}

/// Draw every character of every word into its share of the word box.
/// Background 0, ink 255. Integer arithmetic only after the fixed-point step.
pub fn rasterize_words(words: &[Word], height: usize, width: usize) -> Raster {
    let mut r = Raster::blank(height, width);
    for w in words {
        let bytes = w.text.as_bytes();
        if bytes.is_empty() {
            continue;
        }
        let (x0, x1) = pixel_span(w.bbox.x1, w.bbox.x2, width);
        let (y0, y1) = pixel_span(w.bbox.y1, w.bbox.y2, height);
        let (pw, ph) = (x1.saturating_sub(x0), y1.saturating_sub(y0));
        if pw == 0 || ph == 0 {
            continue;
        }
        let n = bytes.len();
        for (i, &b) in bytes.iter().enumerate() {
            let g = glyph(b);
            let cx0 = x0 + i * pw / n;
            let cx1 = x0 + (i + 1) * pw / n;
            let cw = cx1 - cx0;
            if cw == 0 {
                continue;
            }
            for y in y0..y1 {
                let row = g[(y - y0) * 5 / ph];
                for x in cx0..cx1 {
                    let col = (x - cx0) * 3 / cw;
                    if row & (4 >> col) != 0 {
                        r.data[y * width + x] = 255;
                    }
                }
            }
        }
    }
    r
}

/// Line-based placement in layout-grid units (`granularity` steps per page side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutPlan {
    pub granularity: u32,
    pub margin: u32,
    pub line_height: u32,
    pub line_gap: u32,
    pub char_width: u32,
    pub word_gap: u32,
    /// Maximum random indent applied to each line start.
    pub jitter: u32,
}

impl Default for LayoutPlan {
    fn default() -> Self {
        LayoutPlan { granularity: 500, margin: 20, line_height: 70, line_gap: 10, char_width: 40, word_gap: 30, jitter: 20 }
    }
}

impl LayoutPlan {
    /// Word boxes for `words`, filled left to right, top to bottom.
    pub fn place(&self, words: &[&str], seed: u64) -> Result<Vec<BBox>> {
        let g = self.granularity;
        let v = g as f64;
        let mut rng = rng_from_seed(seed);
        let mut out = Vec::with_capacity(words.len());
        let right = g.saturating_sub(self.margin);
        let indent = |rng: &mut crate::seed::DetRng| if self.jitter == 0 { 0 } else { rng.gen_range(0..=self.jitter) };
        let mut x = self.margin + indent(&mut rng);
        let mut top = self.margin;
        for (index, w) in words.iter().enumerate() {
            let wlen = self.char_width * w.len() as u32;
            if x + wlen > right && x > self.margin {
                top += self.line_height + self.line_gap;
                x = self.margin + indent(&mut rng);
            }
            if x + wlen > right || top + self.line_height > g.saturating_sub(self.margin) {
                return Err(Error::LayoutOverflow { index, word: w.to_string() });
            }
            out.push(BBox {
                x1: x as f64 / v,
                y1: top as f64 / v,
                x2: (x + wlen) as f64 / v,
                y2: (top + self.line_height) as f64 / v,
            });
            x += wlen + self.word_gap;
        }
        Ok(out)
    }
}

/// Lay out and draw `words` on a fresh `height x width` page.
pub fn render_synthetic_document(
    id: &str,
    words: &[&str],
    plan: &LayoutPlan,
    seed: u64,
    height: usize,
    width: usize,
) -> Result<Document> {
    let boxes = plan.place(words, seed)?;
    let words: Vec<Word> =
        words.iter().zip(boxes).map(|(t, bbox)| Word { text: t.to_string(), bbox }).collect();
    let image = rasterize_words(&words, height, width);
    Ok(Document { id: id.to_string(), image, source: ImageSource::Rendered, words, labels: Labels::default() })
}

pub const CLASSES: [(&str, &str); 4] =
    [("MEMO", "Memo."), ("LETTER", "Letter."), ("INVOICE", "Invoice."), ("REPORT", "Report.")];
const KEYS: [(&str, &str); 5] =
    [("DATE", "Date"), ("TO", "Recipient"), ("FROM", "Sender"), ("REF", "Reference"), ("DUE", "Due")];
const NAMES: [&str; 8] = ["AMY", "BOB", "CAL", "DAN", "EVE", "JO", "KAY", "LEE"];

pub const TAG_HEADER: &str = "[I-Header]";
pub const TAG_QUESTION: &str = "[I-Question]";
pub const TAG_ANSWER: &str = "[I-Answer]";
pub const QA_QUESTION: &str = "What is the year?";

/// Synthetic document `index` of a corpus: a class header followed by
/// key/value fields, fully labeled for every supervised format.
/// With `labeled == false` the annotations are dropped, leaving a document
/// for the self-supervised objectives.
pub fn synth_document(
    index: usize,
    seed: u64,
    plan: &LayoutPlan,
    height: usize,
    width: usize,
    labeled: bool,
) -> Result<Document> {
    let id = format!("synth-{index:05}");
    let mut rng = rng_from_seed(example_seed(seed, &id, "synth", 0));
    let class = rng.gen_range(0..CLASSES.len());
    let n_fields = rng.gen_range(1..=2usize);
    let mut keys: Vec<usize> = (1..KEYS.len()).collect();
    keys.shuffle(&mut rng);
    let mut fields = vec![0usize];
    fields.extend(keys.into_iter().take(n_fields));

    let mut words: Vec<String> = vec![CLASSES[class].0.to_string()];
    let mut tags: Vec<String> = vec![TAG_HEADER.to_string()];
    let mut extraction = Vec::new();
    let mut year = String::new();
    for &k in &fields {
        let value = match k {
            0 => {
                year = format!("{}", rng.gen_range(1990..2000));
                year.clone()
            }
            1 | 2 => NAMES[rng.gen_range(0..NAMES.len())].to_string(),
            _ => format!("{}", rng.gen_range(10..100)),
        };
        words.push(KEYS[k].0.to_string());
        tags.push(TAG_QUESTION.to_string());
        words.push(value.clone());
        tags.push(TAG_ANSWER.to_string());
        extraction.push(Extraction { query: value, label: KEYS[k].1.to_string(), with_boxes: true });
    }
    let refs: Vec<&str> = words.iter().map(|s| s.as_str()).collect();
    let mut doc = render_synthetic_document(&id, &refs, plan, seed ^ index as u64, height, width)?;

    let body: Vec<BBox> = doc.words[1..].iter().map(|w| w.bbox).collect();
    let claimed = rng.gen_range(0..CLASSES.len());
    doc.labels = Labels {
        class: Some(CLASSES[class].1.to_string()),
        regions: vec![
            Region { name: "Header".into(), bbox: doc.words[0].bbox },
            Region { name: "Paragraph".into(), bbox: union_bbox(&body)? },
        ],
        word_tags: Some(tags),
        qa: vec![QaPair { question: QA_QUESTION.into(), answer: year }],
        extraction,
        nli: vec![NliPair {
            first: "document type".into(),
            second: CLASSES[claimed].0.to_string(),
            entailed: claimed == class,
        }],
    };
    if !labeled {
        doc.labels = Labels::default();
    }
    Ok(doc)
}

pub fn synth_corpus(
    count: usize,
    seed: u64,
    plan: &LayoutPlan,
    height: usize,
    width: usize,
    labeled: bool,
) -> Result<Vec<Document>> {
    (0..count).map(|i| synth_document(i, seed, plan, height, width, labeled)).collect()
}

/// The worked example page: "Ship Date to Retail: Week of March 14, 1994"
/// with "Ship Date" spanning <100><350><118><372> and "of" at
/// <100><370><118><382> on a 500-step grid.
pub fn worked_example_document(height: usize, width: usize) -> Document {
    let b = |x1: u32, y1: u32, x2: u32, y2: u32| BBox {
        x1: x1 as f64 / 500.0,
        y1: y1 as f64 / 500.0,
        x2: x2 as f64 / 500.0,
        y2: y2 as f64 / 500.0,
    };
    let words = vec![
        Word { text: "Ship".into(), bbox: b(100, 350, 108, 372) },
        Word { text: "Date".into(), bbox: b(110, 350, 118, 372) },
        Word { text: "to".into(), bbox: b(120, 350, 124, 372) },
        Word { text: "Retail:".into(), bbox: b(126, 350, 140, 372) },
        Word { text: "Week".into(), bbox: b(60, 370, 98, 382) },
        Word { text: "of".into(), bbox: b(100, 370, 118, 382) },
        Word { text: "March".into(), bbox: b(120, 370, 140, 382) },
        Word { text: "14,".into(), bbox: b(142, 370, 150, 382) },
        Word { text: "1994".into(), bbox: b(152, 370, 170, 382) },
    ];
    let image = rasterize_words(&words, height, width);
    Document {
        id: "worked-example".into(),
        image,
        source: ImageSource::Rendered,
        words,
        labels: Labels {
            class: Some("Memo.".into()),
            regions: vec![Region { name: "Paragraph".into(), bbox: b(82, 35, 150, 439) }],
            word_tags: None,
            qa: vec![QaPair { question: "What is the ship year?".into(), answer: "1994".into() }],
            extraction: vec![Extraction {
                query: "Ship Date to Retail".into(),
                label: "Week of March 14, 1994".into(),
                with_boxes: false,
            }],
            nli: vec![NliPair {
                first: "Ship Date to Retail".into(),
                second: "Week of March 14, 1994".into(),
                entailed: true,
            }],
        },
    }
}
