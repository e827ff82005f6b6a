//! The unified vocabulary: text words, sentinels, layout tokens, specials and
//! byte fallbacks share one dense id space.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, LayoutQuantizer};

pub const DEFAULT_SENTINELS: u32 = 128;
pub const MIN_SENTINELS: u32 = 100;

pub const PAD: &str = "<pad>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SentinelFamily {
    /// `<text_layout_k>`
    TextLayout,
    /// `<layout_k>`
    LayoutOpen,
    /// `</layout_k>`
    LayoutClose,
    /// `<text_k>`
    TextOpen,
    /// `</text_k>`
    TextClose,
}

impl SentinelFamily {
    pub const ALL: [SentinelFamily; 5] = [
        SentinelFamily::TextLayout,
        SentinelFamily::LayoutOpen,
        SentinelFamily::LayoutClose,
        SentinelFamily::TextOpen,
        SentinelFamily::TextClose,
    ];

    pub fn surface(self, k: u32) -> String {
        match self {
            SentinelFamily::TextLayout => format!("<text_layout_{k}>"),
            SentinelFamily::LayoutOpen => format!("<layout_{k}>"),
            SentinelFamily::LayoutClose => format!("</layout_{k}>"),
            SentinelFamily::TextOpen => format!("<text_{k}>"),
            SentinelFamily::TextClose => format!("</text_{k}>"),
        }
    }

    pub fn is_close(self) -> bool {
        matches!(self, SentinelFamily::LayoutClose | SentinelFamily::TextClose)
    }

    /// The opening family a closing sentinel must match.
    pub fn opener(self) -> Option<SentinelFamily> {
        match self {
            SentinelFamily::LayoutClose => Some(SentinelFamily::LayoutOpen),
            SentinelFamily::TextClose => Some(SentinelFamily::TextOpen),
            _ => None,
        }
    }

    fn parse(surface: &str) -> Option<(SentinelFamily, u32)> {
        let inner = surface.strip_prefix('<')?.strip_suffix('>')?;
        let (family, rest) = if let Some(r) = inner.strip_prefix("text_layout_") {
            (SentinelFamily::TextLayout, r)
        } else if let Some(r) = inner.strip_prefix("/layout_") {
            (SentinelFamily::LayoutClose, r)
        } else if let Some(r) = inner.strip_prefix("layout_") {
            (SentinelFamily::LayoutOpen, r)
        } else if let Some(r) = inner.strip_prefix("/text_") {
            (SentinelFamily::TextClose, r)
        } else if let Some(r) = inner.strip_prefix("text_") {
            (SentinelFamily::TextOpen, r)
        } else {
            return None;
        };
        Some((family, parse_decimal(rest)?))
    }
}

fn parse_decimal(s: &str) -> Option<u32> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
        return None;
    }
    s.parse().ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Special {
    Pad,
    Eos,
    Unk,
}

impl Special {
    pub const ALL: [Special; 3] = [Special::Pad, Special::Eos, Special::Unk];

    pub fn surface(self) -> &'static str {
        match self {
            Special::Pad => PAD,
            Special::Eos => EOS,
            Special::Unk => UNK,
        }
    }
}

/// Which family an id belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Text,
    Special(Special),
    Sentinel(SentinelFamily, u32),
    Layout(u32),
    Byte(u8),
}

impl Family {
    /// Tag used in the serialized vocabulary file.
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Text => "text",
            Family::Special(_) => "special",
            Family::Sentinel(..) => "sentinel",
            Family::Layout(_) => "layout",
            Family::Byte(_) => "byte",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ItemKind {
    Text,
    SentinelOpen,
    SentinelClose,
    Layout,
    Special,
}

/// Byte range of a token within its source word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: u32,
    pub end: u32,
    pub word_len: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedItem {
    pub kind: ItemKind,
    pub id: u32,
    pub surface: String,
    pub bbox: BBox,
    pub span: Option<CharSpan>,
}

impl MixedItem {
    pub fn with_bbox(mut self, bbox: BBox) -> Self {
        self.bbox = bbox;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    entries: Vec<(String, Family)>,
    text_index: BTreeMap<String, u32>,
    text_len: u32,
    special_start: u32,
    sentinel_start: u32,
    sentinels: u32,
    layout_start: u32,
    granularity: u32,
    byte_start: u32,
}

impl Vocabulary {
    /// Deterministic construction: the `max_text_entries` most frequent words
    /// (ties lexicographic), then specials, sentinels, layout tokens `<0>..<V>`
    /// and 256 byte fallbacks.
    pub fn build<I, S>(corpus: I, sentinels: u32, granularity: u32, max_text_entries: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for line in corpus {
            for w in line.as_ref().split_whitespace() {
                if is_reserved_surface(w) {
                    continue;
                }
                *counts.entry(w.to_string()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        // BTreeMap iteration is lexicographic; a stable sort by count keeps that tie order.
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        ranked.truncate(max_text_entries);
        Self::assemble(ranked.into_iter().map(|(w, _)| w).collect(), sentinels, granularity)
    }

    fn assemble(text: Vec<String>, sentinels: u32, granularity: u32) -> Result<Self> {
        if sentinels < MIN_SENTINELS {
            return Err(Error::Config(format!(
                "sentinel count {sentinels} is below the minimum {MIN_SENTINELS}"
            )));
        }
        LayoutQuantizer::new(granularity)?;
        let mut entries: Vec<(String, Family)> = Vec::new();
        let mut text_index = BTreeMap::new();
        for w in text {
            if text_index.insert(w.clone(), entries.len() as u32).is_some() {
                return Err(Error::Config(format!("duplicate text entry {w:?}")));
            }
            entries.push((w, Family::Text));
        }
        let text_len = entries.len() as u32;
        let special_start = entries.len() as u32;
        for s in Special::ALL {
            entries.push((s.surface().to_string(), Family::Special(s)));
        }
        let sentinel_start = entries.len() as u32;
        for fam in SentinelFamily::ALL {
            for k in 0..sentinels {
                entries.push((fam.surface(k), Family::Sentinel(fam, k)));
            }
        }
        let layout_start = entries.len() as u32;
        for k in 0..=granularity {
            entries.push((format!("<{k}>"), Family::Layout(k)));
        }
        let byte_start = entries.len() as u32;
        for b in 0..=255u8 {
            entries.push((byte_surface(b), Family::Byte(b)));
        }
        Ok(Vocabulary {
            entries,
            text_index,
            text_len,
            special_start,
            sentinel_start,
            sentinels,
            layout_start,
            granularity,
            byte_start,
        })
    }

    /// Rebuild from the serialized `(surface, family-tag)` list. The text
    /// entries must come first, followed by the reserved blocks in canonical order.
    pub fn from_entries(entries: &[(String, String)]) -> Result<Self> {
        let text: Vec<String> = entries
            .iter()
            .take_while(|(_, tag)| tag == "text")
            .map(|(s, _)| s.clone())
            .collect();
        let sentinels = entries
            .iter()
            .filter(|(s, tag)| tag == "sentinel" && s.starts_with("<text_layout_"))
            .count() as u32;
        let layouts = entries.iter().filter(|(_, tag)| tag == "layout").count() as u32;
        if layouts == 0 {
            return Err(Error::Config("vocabulary has no layout tokens".into()));
        }
        let v = Self::assemble(text, sentinels, layouts - 1)?;
        let same = v.entries.len() == entries.len()
            && v.entries.iter().zip(entries).all(|((s, f), (s2, t2))| s == s2 && f.tag() == t2);
        if !same {
            return Err(Error::Config("vocabulary entries are not in canonical order".into()));
        }
        Ok(v)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, Family)> + '_ {
        self.entries.iter().map(|(s, f)| (s.as_str(), *f))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn text_entries(&self) -> usize {
        self.text_len as usize
    }

    pub fn sentinel_count(&self) -> u32 {
        self.sentinels
    }

    pub fn granularity(&self) -> u32 {
        self.granularity
    }

    pub fn quantizer(&self) -> LayoutQuantizer {
        LayoutQuantizer { granularity: self.granularity }
    }

    pub fn family(&self, id: u32) -> Result<Family> {
        self.entries.get(id as usize).map(|e| e.1).ok_or(Error::UnknownId(id))
    }

    pub fn surface(&self, id: u32) -> Result<&str> {
        self.entries.get(id as usize).map(|e| e.0.as_str()).ok_or(Error::UnknownId(id))
    }

    pub fn special(&self, s: Special) -> u32 {
        self.special_start + s as u32
    }

    pub fn pad(&self) -> u32 {
        self.special(Special::Pad)
    }

    pub fn eos(&self) -> u32 {
        self.special(Special::Eos)
    }

    pub fn sentinel(&self, family: SentinelFamily, k: u32) -> Result<u32> {
        if k >= self.sentinels {
            return Err(Error::Config(format!("sentinel index {k} exceeds count {}", self.sentinels)));
        }
        let fam_idx = SentinelFamily::ALL.iter().position(|f| *f == family).unwrap() as u32;
        Ok(self.sentinel_start + fam_idx * self.sentinels + k)
    }

    pub fn layout(&self, index: u32) -> Result<u32> {
        if index > self.granularity {
            return Err(Error::InvalidLayoutToken { index, max: self.granularity });
        }
        Ok(self.layout_start + index)
    }

    pub fn byte(&self, b: u8) -> u32 {
        self.byte_start + b as u32
    }

    pub fn text_id(&self, word: &str) -> Option<u32> {
        self.text_index.get(word).copied()
    }

    /// Id of any surface string, across all families.
    pub fn lookup(&self, surface: &str) -> Option<u32> {
        if let Some(id) = self.text_id(surface) {
            return Some(id);
        }
        if let Some(s) = Special::ALL.iter().find(|s| s.surface() == surface) {
            return Some(self.special(*s));
        }
        if let Some((fam, k)) = SentinelFamily::parse(surface) {
            return self.sentinel(fam, k).ok();
        }
        if let Some(b) = parse_byte_surface(surface) {
            return Some(self.byte(b));
        }
        let inner = surface.strip_prefix('<')?.strip_suffix('>')?;
        self.layout(parse_decimal(inner)?).ok()
    }

    pub fn item(&self, id: u32) -> Result<MixedItem> {
        let (surface, family) = self.entries.get(id as usize).ok_or(Error::UnknownId(id))?;
        let kind = match family {
            Family::Text | Family::Byte(_) => ItemKind::Text,
            Family::Special(_) => ItemKind::Special,
            Family::Layout(_) => ItemKind::Layout,
            Family::Sentinel(f, _) if f.is_close() => ItemKind::SentinelClose,
            Family::Sentinel(..) => ItemKind::SentinelOpen,
        };
        let (surface, span) = match family {
            Family::Text => (
                surface.clone(),
                Some(CharSpan { start: 0, end: surface.len() as u32, word_len: surface.len() as u32 }),
            ),
            Family::Byte(b) => (byte_string(*b), None),
            _ => (surface.clone(), None),
        };
        Ok(MixedItem { kind, id, surface, bbox: BBox::NONE, span })
    }

    pub fn sentinel_item(&self, family: SentinelFamily, k: u32) -> Result<MixedItem> {
        self.item(self.sentinel(family, k)?)
    }

    pub fn layout_items(&self, b: &BBox) -> Result<Vec<MixedItem>> {
        let q = self.quantizer().quantize(b)?;
        q.iter().map(|&i| self.item(self.layout(i)?)).collect()
    }

    /// Tokenize one word; every produced item carries `bbox`.
    pub fn tokenize_word(&self, word: &str, bbox: BBox) -> Vec<MixedItem> {
        let len = word.len() as u32;
        if let Some(id) = self.text_id(word) {
            return alloc::vec![MixedItem {
                kind: ItemKind::Text,
                id,
                surface: word.to_string(),
                bbox,
                span: Some(CharSpan { start: 0, end: len, word_len: len }),
            }];
        }
        word.bytes()
            .enumerate()
            .map(|(i, b)| MixedItem {
                kind: ItemKind::Text,
                id: self.byte(b),
                surface: byte_string(b),
                bbox,
                span: Some(CharSpan { start: i as u32, end: i as u32 + 1, word_len: len }),
            })
            .collect()
    }

    /// Whitespace split, in-vocabulary words as single items, everything else
    /// byte by byte. Items carry the no-location box.
    pub fn tokenize_text(&self, s: &str) -> Vec<MixedItem> {
        s.split_whitespace().flat_map(|w| self.tokenize_word(w, BBox::NONE)).collect()
    }

    /// Raw bytes an item contributes to its source word (characters for the
    /// vision decoder's character memory).
    pub fn item_bytes(&self, item: &MixedItem) -> Vec<u8> {
        match self.family(item.id) {
            Ok(Family::Byte(b)) => alloc::vec![b],
            Ok(Family::Text) => item.surface.as_bytes().to_vec(),
            _ => Vec::new(),
        }
    }

    pub fn decode_mixed(&self, ids: &[u32]) -> Result<Vec<MixedItem>> {
        ids.iter().map(|&id| self.item(id)).collect()
    }

    /// Human-readable rendering: single-space join, layout runs without
    /// separators, byte pieces merged back into their word, pad/eos dropped.
    pub fn render(&self, items: &[MixedItem]) -> String {
        let mut out = String::new();
        let mut prev: Option<Family> = None;
        let mut bytes: Vec<u8> = Vec::new();
        let flush = |out: &mut String, bytes: &mut Vec<u8>| {
            if !bytes.is_empty() {
                out.push_str(&String::from_utf8_lossy(bytes));
                bytes.clear();
            }
        };
        for it in items {
            let fam = match self.family(it.id) {
                Ok(f) => f,
                Err(_) => continue,
            };
            if matches!(fam, Family::Special(Special::Pad | Special::Eos)) {
                continue;
            }
            let continues_word = match (prev, fam) {
                (Some(Family::Byte(_)), Family::Byte(_)) => it.span.map_or(true, |s| s.start > 0),
                _ => false,
            };
            let glued = matches!((prev, fam), (Some(Family::Layout(_)), Family::Layout(_)));
            if !continues_word {
                flush(&mut out, &mut bytes);
                if prev.is_some() && !glued {
                    out.push(' ');
                }
            }
            match fam {
                Family::Byte(b) => bytes.push(b),
                _ => out.push_str(self.surface(it.id).unwrap_or("")),
            }
            prev = Some(fam);
        }
        flush(&mut out, &mut bytes);
        out
    }

    pub fn render_ids(&self, ids: &[u32]) -> Result<String> {
        Ok(self.render(&self.decode_mixed(ids)?))
    }
}

pub fn encode_mixed(items: &[MixedItem]) -> Vec<u32> {
    items.iter().map(|i| i.id).collect()
}

pub fn tokenize_text(s: &str, vocab: &Vocabulary) -> Vec<MixedItem> {
    vocab.tokenize_text(s)
}

pub fn decode_mixed(ids: &[u32], vocab: &Vocabulary) -> Result<Vec<MixedItem>> {
    vocab.decode_mixed(ids)
}

fn byte_surface(b: u8) -> String {
    format!("<0x{b:02X}>")
}

fn byte_string(b: u8) -> String {
    String::from_utf8_lossy(&[b]).into_owned()
}

fn parse_byte_surface(s: &str) -> Option<u8> {
    let hex = s.strip_prefix("<0x")?.strip_suffix('>')?;
    if hex.len() != 2 {
        return None;
    }
    u8::from_str_radix(hex, 16).ok()
}

fn is_reserved_surface(w: &str) -> bool {
    Special::ALL.iter().any(|s| s.surface() == w)
        || SentinelFamily::parse(w).is_some()
        || parse_byte_surface(w).is_some()
        || w.strip_prefix('<').and_then(|r| r.strip_suffix('>')).and_then(parse_decimal).is_some()
}

/// One sentinel-delimited group of a parsed sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedGroup {
    pub sentinel: Option<(SentinelFamily, u32)>,
    pub text: String,
    pub boxes: Vec<BBox>,
}

/// Split at opening sentinels (a closing sentinel ends its group), collect
/// text and decode each 4-run of layout tokens into a box.
pub fn parse_layout_groups(ids: &[u32], vocab: &Vocabulary) -> Result<Vec<ParsedGroup>> {
    struct Open {
        sentinel: Option<(SentinelFamily, u32)>,
        items: Vec<MixedItem>,
        layout: Vec<u32>,
        boxes: Vec<BBox>,
        closed: bool,
    }
    let q = vocab.quantizer();
    let mut groups: Vec<ParsedGroup> = Vec::new();
    let mut cur: Option<Open> = None;

    fn flush_layout(g: &mut Open, q: &LayoutQuantizer, group: usize) -> Result<()> {
        if g.layout.is_empty() {
            return Ok(());
        }
        if g.layout.len() % 4 != 0 {
            return Err(Error::MalformedLayout { group, len: g.layout.len() });
        }
        for c in g.layout.chunks(4) {
            g.boxes.push(q.dequantize([c[0], c[1], c[2], c[3]])?);
        }
        g.layout.clear();
        Ok(())
    }
    let finish = |g: Open, groups: &mut Vec<ParsedGroup>, vocab: &Vocabulary| -> Result<()> {
        let mut g = g;
        let idx = groups.len();
        flush_layout(&mut g, &q, idx)?;
        groups.push(ParsedGroup { sentinel: g.sentinel, text: vocab.render(&g.items), boxes: g.boxes });
        Ok(())
    };
    let fresh = |sentinel| Open { sentinel, items: Vec::new(), layout: Vec::new(), boxes: Vec::new(), closed: false };

    for (pos, &id) in ids.iter().enumerate() {
        match vocab.family(id)? {
            Family::Special(Special::Pad | Special::Eos) => {}
            Family::Sentinel(fam, k) if fam.is_close() => {
                let opener = fam.opener();
                match cur.as_mut() {
                    Some(g) if !g.closed && g.sentinel.map(|(f, i)| Some(f) == opener && i == k) == Some(true) => {
                        g.closed = true;
                        let g = cur.take().unwrap();
                        finish(g, &mut groups, vocab)?;
                    }
                    _ => {
                        return Err(Error::MalformedSentinel {
                            position: pos,
                            reason: format!("{} without a matching open", fam.surface(k)),
                        })
                    }
                }
            }
            Family::Sentinel(fam, k) => {
                if let Some(g) = cur.take() {
                    finish(g, &mut groups, vocab)?;
                }
                cur = Some(fresh(Some((fam, k))));
            }
            Family::Layout(i) => {
                cur.get_or_insert_with(|| fresh(None)).layout.push(i);
            }
            _ => {
                let idx = groups.len();
                let g = cur.get_or_insert_with(|| fresh(None));
                flush_layout(g, &q, idx)?;
                g.items.push(vocab.item(id)?);
            }
        }
    }
    if let Some(g) = cur.take() {
        finish(g, &mut groups, vocab)?;
    }
    Ok(groups)
}
