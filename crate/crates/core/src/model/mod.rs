//! Encoder, text-layout decoder and vision decoder.
//!
//! All computation is in f64 on a [`graph::Graph`] tape. Parameters are kept
//! f32-representable (see [`Parameters::snap_to_f32`]) so checkpoints stored
//! as f32 reload bit-exactly.

pub mod bias;
pub mod graph;
pub mod params;
pub mod tensor;

use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::Raster;
use crate::error::{Error, Result};
use crate::geometry::{Cell, PatchGrid};
use crate::tasks::{Target, TrainingExample};
use crate::vocab::{ItemKind, MixedItem};
use graph::{Graph, Var};

pub use params::{Gradients, ModelConfig, ParamIds, Parameters, Tensor};
pub use tensor::Mat;

/// Scale from page fractions to sinusoid positions.
const POS_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Item(u32),
    Patch(usize),
}

/// Fused encoder sequence: text items first, then unclaimed patches.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInput {
    pub vectors: Mat,
    /// `None` marks the reserved no-location cell.
    pub cells: Vec<Option<Cell>>,
    pub kinds: Vec<InputKind>,
}

impl EncoderInput {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
}

/// Which patch each item is fused with and which patches stay in the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionPlan {
    pub item_patch: Vec<Option<usize>>,
    pub unclaimed: Vec<usize>,
    pub cells: Vec<Option<Cell>>,
    pub kinds: Vec<InputKind>,
}

pub fn fusion_plan(items: &[MixedItem], grid: &PatchGrid) -> FusionPlan {
    let mut claimed = vec![false; grid.len()];
    let mut item_patch = Vec::with_capacity(items.len());
    let mut cells = Vec::new();
    let mut kinds = Vec::new();
    for it in items {
        let p = grid.patch_index_of(&it.bbox);
        if let Some(p) = p {
            claimed[p] = true;
        }
        item_patch.push(p);
        cells.push(grid.cell_of(&it.bbox));
        kinds.push(InputKind::Item(it.id));
    }
    let unclaimed: Vec<usize> = (0..grid.len()).filter(|&p| !claimed[p]).collect();
    for &p in &unclaimed {
        cells.push(Some(grid.cell_of_index(p)));
        kinds.push(InputKind::Patch(p));
    }
    FusionPlan { item_patch, unclaimed, cells, kinds }
}

/// Fixed 2D sinusoid: the first half of the vector encodes `x`, the second `y`.
pub fn sinusoid_2d(x: f64, y: f64, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    let half = d / 2;
    for (axis, coord) in [(0, x), (1, y)] {
        let base = axis * half;
        let pairs = half / 2;
        for i in 0..pairs {
            let w = 1.0 / libm::pow(10_000.0, 2.0 * i as f64 / half as f64);
            let p = coord * POS_SCALE * w;
            out[base + 2 * i] = libm::sin(p);
            out[base + 2 * i + 1] = libm::cos(p);
        }
    }
    out
}

/// Flattened patches in row-major patch order; pixels within a patch are
/// row-major with channels innermost. Flagged patches are zeroed.
pub fn patchify(image: &Raster, grid: &PatchGrid, zero: Option<&[bool]>) -> Mat {
    let p = grid.patch;
    let c = image.channels;
    let mut m = Mat::zeros(grid.len(), p * p * c);
    for idx in 0..grid.len() {
        if zero.is_some_and(|z| z[idx]) {
            continue;
        }
        let cell = grid.cell_of_index(idx);
        let (y0, x0) = (cell.row as usize * p, cell.col as usize * p);
        let row = m.row_mut(idx);
        for dy in 0..p {
            for dx in 0..p {
                for ch in 0..c {
                    row[(dy * p + dx) * c + ch] = image.value(y0 + dy, x0 + dx, ch);
                }
            }
        }
    }
    m
}

/// Inverse of [`patchify`], clamping values to [0,1].
pub fn unpatchify(patches: &Mat, grid: &PatchGrid, channels: usize) -> Raster {
    let p = grid.patch;
    let mut data = vec![0u8; grid.height * grid.width * channels];
    for idx in 0..grid.len() {
        let cell = grid.cell_of_index(idx);
        let (y0, x0) = (cell.row as usize * p, cell.col as usize * p);
        let row = patches.row(idx);
        for dy in 0..p {
            for dx in 0..p {
                for ch in 0..channels {
                    let v = row[(dy * p + dx) * channels + ch].clamp(0.0, 1.0);
                    data[((y0 + dy) * grid.width + x0 + dx) * channels + ch] = libm::round(v * 255.0) as u8;
                }
            }
        }
    }
    Raster { height: grid.height, width: grid.width, channels, data }
}

fn normalize_patches(m: &mut Mat) {
    for r in 0..m.rows {
        let row = m.row_mut(r);
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let s = 1.0 / libm::sqrt(var + 1e-6);
        row.iter_mut().for_each(|v| *v = (*v - mean) * s);
    }
}

/// One character-memory entry: byte value and approximate page position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharEntry {
    pub byte: u8,
    pub x: f64,
    pub y: f64,
}

/// Characters of every located text item, in sequence order. Byte-fallback
/// items are the last 256 ids of the vocabulary.
pub fn char_entries(items: &[MixedItem], vocab_size: usize) -> Vec<CharEntry> {
    let byte_base = vocab_size - 256;
    let mut out = Vec::new();
    for it in items {
        if it.kind != ItemKind::Text || it.bbox.is_none() {
            continue;
        }
        let bytes: Vec<u8> = if it.id as usize >= byte_base {
            vec![(it.id as usize - byte_base) as u8]
        } else {
            it.surface.as_bytes().to_vec()
        };
        let (start, word_len) = match it.span {
            Some(s) => (s.start as usize, s.word_len.max(1) as usize),
            None => (0, bytes.len().max(1)),
        };
        let b = it.bbox;
        let y = 0.5 * (b.y1 + b.y2);
        for (j, &byte) in bytes.iter().enumerate() {
            let t = ((start + j) as f64 + 0.5) / word_len as f64;
            out.push(CharEntry { byte, x: b.x1 + t.min(1.0) * (b.x2 - b.x1), y });
        }
    }
    out
}

/// Mean cross-entropy over non-pad targets.
pub fn loss_text_layout(logits: &Mat, targets: &[u32], pad: u32) -> Result<f64> {
    if logits.rows != targets.len() {
        return Err(Error::Shape(format!("{} logit rows for {} targets", logits.rows, targets.len())));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (r, &t) in targets.iter().enumerate() {
        if t == pad {
            continue;
        }
        if t as usize >= logits.cols {
            return Err(Error::UnknownId(t));
        }
        let row = logits.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&a| libm::exp(a - m)).sum();
        total += m + libm::log(z) - row[t as usize];
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyTarget);
    }
    Ok(total / count as f64)
}

/// Mean squared error over the pixels of masked patches.
pub fn loss_vision(pred: &Mat, target: &Mat, mask: &[bool]) -> Result<f64> {
    if pred.shape() != target.shape() || mask.len() != pred.rows {
        return Err(Error::Shape(format!(
            "prediction {:?}, target {:?}, mask {}",
            pred.shape(),
            target.shape(),
            mask.len()
        )));
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for r in (0..pred.rows).filter(|&r| mask[r]) {
        for (a, b) in pred.row(r).iter().zip(target.row(r)) {
            acc += (a - b) * (a - b);
        }
        n += pred.cols;
    }
    if n == 0 {
        return Err(Error::NoSupport);
    }
    Ok(acc / n as f64)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
    pub ids: ParamIds,
}

struct Prepared<'a> {
    items: &'a [MixedItem],
    grid: PatchGrid,
    pixels: Mat,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (params, ids) = Parameters::init(&config, seed)?;
        Ok(Model { config, params, ids })
    }

    /// Adopt loaded tensors; names and shapes must match the config's layout.
    pub fn from_parameters(config: ModelConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        let (fresh, ids) = Parameters::init(&config, 0)?;
        if fresh.tensors.len() != params.tensors.len() {
            return Err(Error::Shape(format!(
                "{} tensors, expected {}",
                params.tensors.len(),
                fresh.tensors.len()
            )));
        }
        for (a, b) in fresh.tensors.iter().zip(&params.tensors) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Shape(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    b.name,
                    b.value.shape(),
                    a.name,
                    a.value.shape()
                )));
            }
        }
        params.validate()?;
        Ok(Model { config, params, ids })
    }

    pub fn grid_for(&self, image: &Raster) -> Result<PatchGrid> {
        if image.channels != self.config.channels {
            return Err(Error::Shape(format!("image has {} channels, model expects {}", image.channels, self.config.channels)));
        }
        PatchGrid::new(image.height, image.width, self.config.patch)
    }

    fn prepare<'a>(&self, items: &'a [MixedItem], image: &Raster, mask: Option<&[bool]>) -> Result<Prepared<'a>> {
        let grid = self.grid_for(image)?;
        if let Some(m) = mask {
            if m.len() != grid.len() {
                return Err(Error::Shape(format!("patch mask has {} entries for {} patches", m.len(), grid.len())));
            }
        }
        for it in items {
            if it.id as usize >= self.config.vocab_size {
                return Err(Error::UnknownId(it.id));
            }
        }
        Ok(Prepared { items, grid, pixels: patchify(image, &grid, mask) })
    }

    fn g_ffn(&self, g: &mut Graph, x: Var, f: &params::FfnIds) -> Var {
        let w1 = g.param(f.w1);
        let b1 = g.param(f.b1);
        let w2 = g.param(f.w2);
        let b2 = g.param(f.b2);
        let h = g.matmul(x, w1);
        let h = g.add_row(h, b1);
        let h = g.gelu(h);
        let h = g.matmul(h, w2);
        g.add_row(h, b2)
    }

    fn g_attention(
        &self,
        g: &mut Graph,
        q_in: Var,
        kv_in: Var,
        a: &params::AttnIds,
        bias: Option<(Var, &Rc<Vec<[u32; 2]>>)>,
        causal: bool,
    ) -> Var {
        let (n, m) = (g.value(q_in).rows, g.value(kv_in).rows);
        let hd = self.config.head_dim;
        let (wq, wk, wv, wo) = (g.param(a.wq), g.param(a.wk), g.param(a.wv), g.param(a.wo));
        let q = g.matmul(q_in, wq);
        let k = g.matmul(kv_in, wk);
        let v = g.matmul(kv_in, wv);
        let scale = 1.0 / libm::sqrt(hd as f64);
        let mut heads = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let qh = g.slice_cols(q, h * hd, hd);
            let kh = g.slice_cols(k, h * hd, hd);
            let vh = g.slice_cols(v, h * hd, hd);
            let s = g.matmul_t(qh, kh);
            let mut s = g.scale(s, scale);
            if let Some((table, idx)) = bias {
                let b = g.bias_gather(table, h, idx.clone(), n, m);
                s = g.add(s, b);
            }
            let p = g.softmax(s, causal);
            heads.push(g.matmul(p, vh));
        }
        let o = g.concat_cols(heads);
        g.matmul(o, wo)
    }

    fn g_patch_embed(&self, g: &mut Graph, pixels: Mat) -> Var {
        let px = g.constant(pixels);
        let w = g.param(self.ids.patch_w);
        let b = g.param(self.ids.patch_b);
        let v = g.matmul(px, w);
        g.add_row(v, b)
    }

    fn g_fuse(&self, g: &mut Graph, items: &[MixedItem], patches: Var, grid: &PatchGrid) -> (Var, FusionPlan) {
        let plan = fusion_plan(items, grid);
        let mut parts = Vec::new();
        if !items.is_empty() {
            let embed = g.param(self.ids.embed);
            let tok = g.gather_rows(embed, items.iter().map(|i| Some(i.id as usize)).collect());
            let claimed = g.gather_rows(patches, plan.item_patch.clone());
            parts.push(g.add(tok, claimed));
        }
        if !plan.unclaimed.is_empty() {
            parts.push(g.gather_rows(patches, plan.unclaimed.iter().map(|&p| Some(p)).collect()));
        }
        let x = if parts.len() == 1 { parts[0] } else { g.concat_rows(parts) };
        (x, plan)
    }

    fn g_encode(&self, g: &mut Graph, mut x: Var, cells: &[Option<Cell>]) -> Result<Var> {
        let c = &self.config;
        let idx = bias::bias_index_2d(cells, c.bias_buckets, c.max_rel_distance);
        let table = g.param(self.ids.enc_bias);
        for (l, layer) in self.ids.enc.iter().enumerate() {
            let ln1 = g.param(layer.ln1);
            let h = g.rms_norm(x, ln1);
            let a = self.g_attention(g, h, h, &layer.attn, Some((table, &idx)), false);
            x = g.add(x, a);
            let ln2 = g.param(layer.ln2);
            let h = g.rms_norm(x, ln2);
            let f = self.g_ffn(g, h, &layer.ffn);
            x = g.add(x, f);
            if !g.value(x).is_finite() {
                return Err(Error::Numeric(format!("encoder layer {l}")));
            }
        }
        let norm = g.param(self.ids.enc_norm);
        Ok(g.rms_norm(x, norm))
    }

    fn g_dec_layer(&self, g: &mut Graph, x: Var, memory: Var, layer: &params::DecLayerIds, self_bias: Option<(Var, &Rc<Vec<[u32; 2]>>)>, causal: bool) -> Var {
        let ln1 = g.param(layer.ln1);
        let h = g.rms_norm(x, ln1);
        let a = self.g_attention(g, h, h, &layer.self_attn, self_bias, causal);
        let x = g.add(x, a);
        let ln2 = g.param(layer.ln2);
        let h = g.rms_norm(x, ln2);
        let a = self.g_attention(g, h, memory, &layer.cross_attn, None, false);
        let x = g.add(x, a);
        let ln3 = g.param(layer.ln3);
        let h = g.rms_norm(x, ln3);
        let f = self.g_ffn(g, h, &layer.ffn);
        g.add(x, f)
    }

    fn g_decode_text(&self, g: &mut Graph, enc: Var, prefix: &[u32]) -> Result<Var> {
        let c = &self.config;
        let n = prefix.len();
        if n == 0 {
            return Err(Error::Shape("empty decoder prefix".into()));
        }
        if n > c.max_target_len {
            return Err(Error::Length { len: n, max: c.max_target_len });
        }
        if let Some(&bad) = prefix.iter().find(|&&t| t as usize >= c.vocab_size) {
            return Err(Error::UnknownId(bad));
        }
        let embed = g.param(self.ids.embed);
        let mut x = g.gather_rows(embed, prefix.iter().map(|&t| Some(t as usize)).collect());
        let idx = bias::bias_index_1d(n, c.bias_buckets, c.max_rel_distance);
        let table = g.param(self.ids.dec_bias);
        for (l, layer) in self.ids.dec.iter().enumerate() {
            x = self.g_dec_layer(g, x, enc, layer, Some((table, &idx)), true);
            if !g.value(x).is_finite() {
                return Err(Error::Numeric(format!("text decoder layer {l}")));
            }
        }
        let norm = g.param(self.ids.dec_norm);
        let h = g.rms_norm(x, norm);
        let logits = g.matmul_t(h, embed);
        Ok(g.scale(logits, 1.0 / libm::sqrt(c.d_model as f64)))
    }

    fn g_decode_vision(&self, g: &mut Graph, enc: Var, items: &[MixedItem], mask: &[bool], grid: &PatchGrid) -> Result<Var> {
        let c = &self.config;
        if mask.len() != grid.len() {
            return Err(Error::Shape(format!("patch mask has {} entries for {} patches", mask.len(), grid.len())));
        }
        let ph = g.param(self.ids.placeholder);
        let x = g.gather_rows(ph, mask.iter().map(|&m| Some(m as usize)).collect());
        let mut pos = Mat::zeros(grid.len(), c.d_model);
        for p in 0..grid.len() {
            let (cx, cy) = grid.patch_center(p);
            pos.row_mut(p).copy_from_slice(&sinusoid_2d(cx, cy, c.d_model));
        }
        let pos = g.constant(pos);
        let mut x = g.add(x, pos);

        let chars = char_entries(items, c.vocab_size);
        let memory = if chars.is_empty() {
            enc
        } else {
            let rows = if c.char_memory {
                let table = g.param(self.ids.char_embed);
                let e = g.gather_rows(table, chars.iter().map(|ch| Some(ch.byte as usize)).collect());
                let mut cp = Mat::zeros(chars.len(), c.d_model);
                for (r, ch) in chars.iter().enumerate() {
                    cp.row_mut(r).copy_from_slice(&sinusoid_2d(ch.x, ch.y, c.d_model));
                }
                let cp = g.constant(cp);
                g.add(e, cp)
            } else {
                g.constant(Mat::zeros(chars.len(), c.d_model))
            };
            g.concat_rows(vec![enc, rows])
        };

        for (l, layer) in self.ids.vis.iter().enumerate() {
            x = self.g_dec_layer(g, x, memory, layer, None, false);
            if !g.value(x).is_finite() {
                return Err(Error::Numeric(format!("vision decoder layer {l}")));
            }
        }
        let norm = g.param(self.ids.vis_norm);
        let h = g.rms_norm(x, norm);
        let w = g.param(self.ids.vis_out_w);
        let b = g.param(self.ids.vis_out_b);
        let out = g.matmul(h, w);
        Ok(g.add_row(out, b))
    }

    /// Patch vectors for `image`; patches flagged in `mask` are zeroed first.
    pub fn patch_embed(&self, image: &Raster, mask: Option<&[bool]>) -> Result<Mat> {
        let prep = self.prepare(&[], image, mask)?;
        let mut g = Graph::new(&self.params);
        let v = self.g_patch_embed(&mut g, prep.pixels);
        Ok(g.value(v).clone())
    }

    pub fn fuse_vision_text(&self, items: &[MixedItem], patches: &Mat, grid: &PatchGrid) -> Result<EncoderInput> {
        if patches.shape() != (grid.len(), self.config.d_model) {
            return Err(Error::Shape(format!("patch vectors {:?} for {} patches", patches.shape(), grid.len())));
        }
        if let Some(it) = items.iter().find(|it| it.id as usize >= self.config.vocab_size) {
            return Err(Error::UnknownId(it.id));
        }
        let mut g = Graph::new(&self.params);
        let p = g.constant(patches.clone());
        let (x, plan) = self.g_fuse(&mut g, items, p, grid);
        Ok(EncoderInput { vectors: g.value(x).clone(), cells: plan.cells, kinds: plan.kinds })
    }

    pub fn encode(&self, input: &EncoderInput) -> Result<Mat> {
        if input.vectors.shape() != (input.cells.len(), self.config.d_model) {
            return Err(Error::Shape(format!("encoder input {:?} with {} cells", input.vectors.shape(), input.cells.len())));
        }
        let mut g = Graph::new(&self.params);
        let x = g.constant(input.vectors.clone());
        let out = self.g_encode(&mut g, x, &input.cells)?;
        Ok(g.value(out).clone())
    }

    /// Fuse and encode `items` over `image` in one pass.
    pub fn encode_items(&self, items: &[MixedItem], image: &Raster, mask: Option<&[bool]>) -> Result<Mat> {
        let prep = self.prepare(items, image, mask)?;
        let mut g = Graph::new(&self.params);
        let p = self.g_patch_embed(&mut g, prep.pixels);
        let (x, plan) = self.g_fuse(&mut g, prep.items, p, &prep.grid);
        let out = self.g_encode(&mut g, x, &plan.cells)?;
        Ok(g.value(out).clone())
    }

    pub fn decode_text_layout(&self, enc: &Mat, prefix: &[u32]) -> Result<Mat> {
        let mut g = Graph::new(&self.params);
        let e = g.constant(enc.clone());
        let out = self.g_decode_text(&mut g, e, prefix)?;
        Ok(g.value(out).clone())
    }

    pub fn decode_vision(&self, enc: &Mat, items: &[MixedItem], mask: &[bool], grid: &PatchGrid) -> Result<Mat> {
        let mut g = Graph::new(&self.params);
        let e = g.constant(enc.clone());
        let out = self.g_decode_vision(&mut g, e, items, mask, grid)?;
        Ok(g.value(out).clone())
    }

    /// Argmax decoding from the start token until end-of-sequence or `max_len`
    /// tokens. The start token is `<pad>`, the end token `eos`.
    pub fn greedy_generate(&self, enc: &Mat, start: u32, eos: u32, max_len: usize) -> Result<Vec<u32>> {
        let mut prefix = vec![start];
        while prefix.len() <= max_len && prefix.len() <= self.config.max_target_len {
            let logits = self.decode_text_layout(enc, &prefix)?;
            let next = argmax(logits.row(logits.rows - 1)) as u32;
            if next == eos {
                break;
            }
            prefix.push(next);
        }
        prefix.remove(0);
        Ok(prefix)
    }

    /// Decoder targets for a sequence example: the target ids then `eos`.
    pub fn target_ids(ex: &TrainingExample, eos: u32) -> Result<Vec<u32>> {
        match &ex.target {
            Target::Sequence(items) if !items.is_empty() => {
                let mut ids: Vec<u32> = items.iter().map(|i| i.id).collect();
                ids.push(eos);
                Ok(ids)
            }
            Target::Sequence(_) => Err(Error::EmptyTarget),
            Target::Pixels(_) => Err(Error::Shape("pixel target on a text task".into())),
        }
    }

    fn g_example(&self, g: &mut Graph, ex: &TrainingExample, start: u32, eos: u32) -> Result<Var> {
        if ex.task.is_vision() {
            let Target::Pixels(target) = &ex.target else {
                return Err(Error::Shape("vision task without a pixel target".into()));
            };
            let prep = self.prepare(&ex.input, &ex.image, Some(&ex.patch_mask))?;
            if !ex.patch_mask.iter().any(|&m| m) {
                return Err(Error::NoSupport);
            }
            if (target.height, target.width) != (prep.grid.height, prep.grid.width) {
                return Err(Error::Shape("target image size differs from input".into()));
            }
            let mut tgt = patchify(target, &prep.grid, None);
            if self.config.normalize_pixels {
                normalize_patches(&mut tgt);
            }
            let p = self.g_patch_embed(g, prep.pixels);
            let (x, plan) = self.g_fuse(g, prep.items, p, &prep.grid);
            let enc = self.g_encode(g, x, &plan.cells)?;
            let pred = self.g_decode_vision(g, enc, &ex.input, &ex.patch_mask, &prep.grid)?;
            Ok(g.masked_mse(pred, Rc::new(tgt), Rc::new(ex.patch_mask.clone())))
        } else {
            let targets = Self::target_ids(ex, eos)?;
            let prep = self.prepare(&ex.input, &ex.image, None)?;
            let mut prefix = vec![start];
            prefix.extend_from_slice(&targets[..targets.len() - 1]);
            let p = self.g_patch_embed(g, prep.pixels);
            let (x, plan) = self.g_fuse(g, prep.items, p, &prep.grid);
            let enc = self.g_encode(g, x, &plan.cells)?;
            let logits = self.g_decode_text(g, enc, &prefix)?;
            Ok(g.cross_entropy(logits, targets.iter().map(|&t| t as usize).collect()))
        }
    }

    pub fn loss(&self, ex: &TrainingExample, start: u32, eos: u32) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let l = self.g_example(&mut g, ex, start, eos)?;
        Ok(g.value(l).data[0])
    }

    /// Adds `scale * dloss/dparam` into `grads` and returns the loss.
    pub fn accumulate_gradients(&self, ex: &TrainingExample, start: u32, eos: u32, scale: f64, grads: &mut Gradients) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let l = self.g_example(&mut g, ex, start, eos)?;
        let loss = g.value(l).data[0];
        if !loss.is_finite() {
            return Err(Error::Numeric("loss".into()));
        }
        g.backward(l, scale, grads);
        if !grads.is_finite() {
            return Err(Error::Numeric("gradient".into()));
        }
        Ok(loss)
    }

    pub fn gradients(&self, ex: &TrainingExample, start: u32, eos: u32) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(&self.params);
        let loss = self.accumulate_gradients(ex, start, eos, 1.0, &mut grads)?;
        Ok((loss, grads))
    }

    /// Teacher-forced logits and their targets for a sequence example.
    pub fn teacher_forced(&self, ex: &TrainingExample, start: u32, eos: u32) -> Result<(Mat, Vec<u32>)> {
        let targets = Self::target_ids(ex, eos)?;
        let enc = self.encode_items(&ex.input, &ex.image, None)?;
        let mut prefix = vec![start];
        prefix.extend_from_slice(&targets[..targets.len() - 1]);
        Ok((self.decode_text_layout(&enc, &prefix)?, targets))
    }

    /// Predicted patches of a vision example, before any un-normalization.
    pub fn predict_patches(&self, ex: &TrainingExample) -> Result<Mat> {
        let enc = self.encode_items(&ex.input, &ex.image, Some(&ex.patch_mask))?;
        let grid = self.grid_for(&ex.image)?;
        self.decode_vision(&enc, &ex.input, &ex.patch_mask, &grid)
    }
}

#[cfg(test)]
mod tests;
