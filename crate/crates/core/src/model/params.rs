use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tensor::Mat;
use crate::error::{Error, Result};
use crate::seed::{normal, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub vis_dec_layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub patch: usize,
    pub channels: usize,
    pub vocab_size: usize,
    pub char_vocab: usize,
    pub bias_buckets: usize,
    pub max_rel_distance: usize,
    pub max_target_len: usize,
    pub dropout: f64,
    /// Feed character embeddings to the vision decoder. Off zeroes those rows.
    pub char_memory: bool,
    /// Per-patch mean/std normalized pixel targets.
    pub normalize_pixels: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            enc_layers: 2,
            dec_layers: 2,
            vis_dec_layers: 2,
            heads: 4,
            head_dim: 16,
            ffn_dim: 256,
            patch: 16,
            channels: 1,
            vocab_size: 0,
            char_vocab: 256,
            bias_buckets: 16,
            max_rel_distance: 64,
            max_target_len: 128,
            dropout: 0.0,
            char_memory: true,
            normalize_pixels: false,
        }
    }
}

impl ModelConfig {
    /// A config of width `d_model` with `heads` heads and the given layer counts.
    pub fn small(vocab_size: usize, d_model: usize, heads: usize, layers: [usize; 3]) -> Self {
        ModelConfig {
            d_model,
            heads,
            head_dim: d_model / heads.max(1),
            ffn_dim: 4 * d_model,
            enc_layers: layers[0],
            dec_layers: layers[1],
            vis_dec_layers: layers[2],
            vocab_size,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shapes()?;
        if self.enc_layers == 0 || self.dec_layers == 0 || self.vis_dec_layers == 0 {
            return Err(Error::Config("layer counts must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn validate_shapes(&self) -> Result<()> {
        if self.heads == 0 || self.d_model != self.heads * self.head_dim {
            return Err(Error::Config(format!(
                "d_model {} != heads {} * head_dim {}",
                self.d_model, self.heads, self.head_dim
            )));
        }
        if self.d_model == 0 || self.ffn_dim == 0 || self.patch == 0 || self.channels == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if self.vocab_size < 257 {
            return Err(Error::Config(format!("vocab_size {} leaves no room for byte tokens", self.vocab_size)));
        }
        if self.char_vocab != 256 {
            return Err(Error::Config("char_vocab must be 256".into()));
        }
        if self.bias_buckets < 4 || self.bias_buckets % 2 != 0 {
            return Err(Error::Config("bias_buckets must be even and at least 4".into()));
        }
        if self.max_rel_distance <= self.bias_buckets / 2 {
            return Err(Error::Config("max_rel_distance must exceed bias_buckets / 2".into()));
        }
        if self.max_target_len == 0 {
            return Err(Error::Config("max_target_len must be positive".into()));
        }
        if self.dropout != 0.0 {
            return Err(Error::Config("dropout is not supported".into()));
        }
        Ok(())
    }

    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: Mat,
    /// Receives decoupled weight decay.
    pub decay: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnIds {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FfnIds {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncLayerIds {
    pub ln1: usize,
    pub attn: AttnIds,
    pub ln2: usize,
    pub ffn: FfnIds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecLayerIds {
    pub ln1: usize,
    pub self_attn: AttnIds,
    pub ln2: usize,
    pub cross_attn: AttnIds,
    pub ln3: usize,
    pub ffn: FfnIds,
}

/// Indices of every tensor in [`Parameters::tensors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamIds {
    pub embed: usize,
    pub patch_w: usize,
    pub patch_b: usize,
    pub enc_bias: usize,
    pub enc: Vec<EncLayerIds>,
    pub enc_norm: usize,
    pub dec_bias: usize,
    pub dec: Vec<DecLayerIds>,
    pub dec_norm: usize,
    pub char_embed: usize,
    pub placeholder: usize,
    pub vis: Vec<DecLayerIds>,
    pub vis_norm: usize,
    pub vis_out_w: usize,
    pub vis_out_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Mat>,
}

impl Gradients {
    pub fn zeros_like(p: &Parameters) -> Self {
        Gradients { tensors: p.tensors.iter().map(|t| Mat::zeros(t.value.rows, t.value.cols)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Mat::is_finite)
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors.iter_mut().for_each(|m| m.scale_assign(s));
    }
}

enum Init {
    Normal(f64),
    Ones,
    Zeros,
}

struct Builder {
    tensors: Vec<Tensor>,
    rng: crate::seed::DetRng,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init, decay: bool) -> usize {
        let mut m = Mat::zeros(rows, cols);
        match init {
            Init::Normal(std) => m.data.iter_mut().for_each(|v| *v = std * normal(&mut self.rng)),
            Init::Ones => m.data.iter_mut().for_each(|v| *v = 1.0),
            Init::Zeros => {}
        }
        self.tensors.push(Tensor { name, value: m, decay });
        self.tensors.len() - 1
    }

    fn norm(&mut self, name: String, d: usize) -> usize {
        self.add(name, 1, d, Init::Ones, false)
    }

    fn matrix(&mut self, name: String, rows: usize, cols: usize, gain: f64) -> usize {
        let std = gain / libm::sqrt(rows as f64);
        self.add(name, rows, cols, Init::Normal(std), true)
    }

    fn attn(&mut self, prefix: &str, d: usize, out_gain: f64) -> AttnIds {
        AttnIds {
            wq: self.matrix(format!("{prefix}.wq"), d, d, 1.0),
            wk: self.matrix(format!("{prefix}.wk"), d, d, 1.0),
            wv: self.matrix(format!("{prefix}.wv"), d, d, 1.0),
            wo: self.matrix(format!("{prefix}.wo"), d, d, out_gain),
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize, out_gain: f64) -> FfnIds {
        FfnIds {
            w1: self.matrix(format!("{prefix}.w1"), d, f, 1.0),
            b1: self.add(format!("{prefix}.b1"), 1, f, Init::Zeros, false),
            w2: self.matrix(format!("{prefix}.w2"), f, d, out_gain),
            b2: self.add(format!("{prefix}.b2"), 1, d, Init::Zeros, false),
        }
    }

    fn dec_layer(&mut self, prefix: &str, d: usize, f: usize, out_gain: f64) -> DecLayerIds {
        DecLayerIds {
            ln1: self.norm(format!("{prefix}.ln1"), d),
            self_attn: self.attn(&format!("{prefix}.self"), d, out_gain),
            ln2: self.norm(format!("{prefix}.ln2"), d),
            cross_attn: self.attn(&format!("{prefix}.cross"), d, out_gain),
            ln3: self.norm(format!("{prefix}.ln3"), d),
            ffn: self.ffn(&format!("{prefix}.ffn"), d, f, out_gain),
        }
    }
}

impl Parameters {
    /// Seeded initialization; the result is already f32-representable.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<(Parameters, ParamIds)> {
        cfg.validate_shapes()?;
        let (d, f) = (cfg.d_model, cfg.ffn_dim);
        let mut b = Builder { tensors: Vec::new(), rng: rng_from_seed(seed) };
        let layers = (cfg.enc_layers + cfg.dec_layers + cfg.vis_dec_layers).max(1) as f64;
        let out_gain = 1.0 / libm::sqrt(layers);

        let embed = b.add("embed".into(), cfg.vocab_size, d, Init::Normal(1.0), false);
        let patch_w = b.matrix("patch.w".into(), cfg.patch_dim(), d, 1.0);
        let patch_b = b.add("patch.b".into(), 1, d, Init::Normal(0.02), false);
        let enc_bias = b.add("enc.bias2d".into(), 2 * cfg.bias_buckets + 1, cfg.heads, Init::Normal(0.1), false);
        let enc = (0..cfg.enc_layers)
            .map(|l| EncLayerIds {
                ln1: b.norm(format!("enc.{l}.ln1"), d),
                attn: b.attn(&format!("enc.{l}.attn"), d, out_gain),
                ln2: b.norm(format!("enc.{l}.ln2"), d),
                ffn: b.ffn(&format!("enc.{l}.ffn"), d, f, out_gain),
            })
            .collect();
        let enc_norm = b.norm("enc.norm".into(), d);
        let dec_bias = b.add("dec.bias1d".into(), cfg.bias_buckets, cfg.heads, Init::Normal(0.1), false);
        let dec = (0..cfg.dec_layers).map(|l| b.dec_layer(&format!("dec.{l}"), d, f, out_gain)).collect();
        let dec_norm = b.norm("dec.norm".into(), d);
        let char_embed = b.add("vis.char_embed".into(), cfg.char_vocab, d, Init::Normal(1.0), false);
        let placeholder = b.add("vis.placeholder".into(), 2, d, Init::Normal(1.0), false);
        let vis = (0..cfg.vis_dec_layers).map(|l| b.dec_layer(&format!("vis.{l}"), d, f, out_gain)).collect();
        let vis_norm = b.norm("vis.norm".into(), d);
        let vis_out_w = b.matrix("vis.out.w".into(), d, cfg.patch_dim(), 1.0);
        let vis_out_b = b.add("vis.out.b".into(), 1, cfg.patch_dim(), Init::Zeros, false);

        let ids = ParamIds {
            embed,
            patch_w,
            patch_b,
            enc_bias,
            enc,
            enc_norm,
            dec_bias,
            dec,
            dec_norm,
            char_embed,
            placeholder,
            vis,
            vis_norm,
            vis_out_w,
            vis_out_b,
        };
        let mut p = Parameters { tensors: b.tensors };
        p.snap_to_f32();
        Ok((p, ids))
    }

    /// Round every value to the nearest f32 so that f32 checkpoints reload exactly.
    pub fn snap_to_f32(&mut self) {
        for t in &mut self.tensors {
            t.value.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.data.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.tensors {
            if !t.value.is_finite() {
                return Err(Error::Numeric(format!("parameter {}", t.name)));
            }
        }
        Ok(())
    }
}
