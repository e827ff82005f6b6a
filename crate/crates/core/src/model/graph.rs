//! A small reverse-mode tape over [`Mat`] values.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards is a
//! valid topological order for the adjoint pass. Parameter leaves borrow the
//! parameter store instead of copying it.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{Gradients, Parameters};
use super::tensor::{dot, Mat};

/// Marks the absent second index of a [`Graph::bias_gather`] entry.
pub const NO_INDEX: u32 = u32::MAX;

const RMS_EPS: f64 = 1e-6;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Const,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    GatherRows(Var, Vec<Option<usize>>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    RmsNorm(Var, Var, Vec<f64>),
    Gelu(Var),
    Softmax(Var),
    BiasGather(Var, usize, Rc<Vec<[u32; 2]>>),
    CrossEntropy(Var, Vec<usize>, Mat),
    MaskedMse(Var, Rc<Mat>, Rc<Vec<bool>>, usize),
}

struct Node {
    op: Op,
    value: Option<Mat>,
}

pub struct Graph<'p> {
    params: &'p Parameters,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p Parameters) -> Self {
        Graph { params, nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Mat {
        match (&self.nodes[v.0].op, &self.nodes[v.0].value) {
            (Op::Param(id), _) => &self.params.tensors[*id].value,
            (_, Some(m)) => m,
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(Op::Const, m)
    }

    pub fn param(&mut self, id: usize) -> Var {
        self.nodes.push(Node { op: Op::Param(id), value: None });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// `a * b^T`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(Op::MatMulT(a, b), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(Op::Add(a, b), v)
    }

    /// Adds the single row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        let row = self.value(b);
        assert_eq!((row.rows, row.cols), (1, v.cols));
        for r in 0..v.rows {
            for (x, y) in v.row_mut(r).iter_mut().zip(&row.data) {
                *x += y;
            }
        }
        self.push(Op::AddRow(a, b), v)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut v = self.value(a).clone();
        v.scale_assign(s);
        self.push(Op::Scale(a, s), v)
    }

    /// Row `i` of the output is row `idx[i]` of `src`, or zeros for `None`.
    pub fn gather_rows(&mut self, src: Var, idx: Vec<Option<usize>>) -> Var {
        let s = self.value(src);
        let mut v = Mat::zeros(idx.len(), s.cols);
        for (r, i) in idx.iter().enumerate() {
            if let Some(i) = i {
                v.row_mut(r).copy_from_slice(s.row(*i));
            }
        }
        self.push(Op::GatherRows(src, idx), v)
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for &p in &parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols);
            data.extend_from_slice(&m.data);
        }
        let rows = data.len() / cols.max(1);
        self.push(Op::ConcatRows(parts), Mat::from_vec(rows, cols, data))
    }

    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Var {
        let s = self.value(src);
        let mut v = Mat::zeros(s.rows, len);
        for r in 0..s.rows {
            v.row_mut(r).copy_from_slice(&s.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols(src, start), v)
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in &parts {
            let m = self.value(p);
            for r in 0..rows {
                v.row_mut(r)[off..off + m.cols].copy_from_slice(m.row(r));
            }
            off += m.cols;
        }
        self.push(Op::ConcatCols(parts), v)
    }

    /// Root-mean-square normalization with a learned gain row.
    pub fn rms_norm(&mut self, x: Var, gain: Var) -> Var {
        let xm = self.value(x);
        let g = self.value(gain);
        let mut v = Mat::zeros(xm.rows, xm.cols);
        let mut inv = Vec::with_capacity(xm.rows);
        for r in 0..xm.rows {
            let row = xm.row(r);
            let ms = dot(row, row) / xm.cols as f64;
            let s = 1.0 / libm::sqrt(ms + RMS_EPS);
            inv.push(s);
            for ((o, &a), &gj) in v.row_mut(r).iter_mut().zip(row).zip(&g.data) {
                *o = a * s * gj;
            }
        }
        self.push(Op::RmsNorm(x, gain, inv), v)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for a in v.data.iter_mut() {
            let u = GELU_C * (*a + 0.044715 * *a * *a * *a);
            *a = 0.5 * *a * (1.0 + libm::tanh(u));
        }
        self.push(Op::Gelu(x), v)
    }

    /// Row softmax; with `causal`, entries right of the diagonal get probability 0.
    pub fn softmax(&mut self, x: Var, causal: bool) -> Var {
        let xm = self.value(x);
        let mut v = Mat::zeros(xm.rows, xm.cols);
        for r in 0..xm.rows {
            let lim = if causal { (r + 1).min(xm.cols) } else { xm.cols };
            let row = &xm.row(r)[..lim];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = v.row_mut(r);
            let mut z = 0.0;
            for (o, &a) in out.iter_mut().zip(row) {
                *o = libm::exp(a - m);
                z += *o;
            }
            out[..lim].iter_mut().for_each(|o| *o /= z);
        }
        self.push(Op::Softmax(x), v)
    }

    /// `out[q][k] = table[idx0][col] + table[idx1][col]` for the `rows x cols`
    /// index grid `idx` (second index may be [`NO_INDEX`]).
    pub fn bias_gather(&mut self, table: Var, col: usize, idx: Rc<Vec<[u32; 2]>>, rows: usize, cols: usize) -> Var {
        let t = self.value(table);
        assert_eq!(idx.len(), rows * cols);
        let data = idx
            .iter()
            .map(|&[a, b]| {
                let mut s = t.get(a as usize, col);
                if b != NO_INDEX {
                    s += t.get(b as usize, col);
                }
                s
            })
            .collect();
        self.push(Op::BiasGather(table, col, idx), Mat::from_vec(rows, cols, data))
    }

    /// Mean token cross-entropy of `logits` rows against `targets`.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let lm = self.value(logits);
        assert_eq!(lm.rows, targets.len());
        let mut probs = Mat::zeros(lm.rows, lm.cols);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = lm.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|&a| libm::exp(a - m)).sum();
            let lz = m + libm::log(z);
            loss += lz - row[t];
            for (p, &a) in probs.row_mut(r).iter_mut().zip(row) {
                *p = libm::exp(a - lz);
            }
        }
        let n = targets.len().max(1) as f64;
        self.push(Op::CrossEntropy(logits, targets, probs), Mat::from_vec(1, 1, vec![loss / n]))
    }

    /// Mean squared error over the rows flagged in `rows`.
    pub fn masked_mse(&mut self, pred: Var, target: Rc<Mat>, rows: Rc<Vec<bool>>) -> Var {
        let p = self.value(pred);
        assert_eq!(p.shape(), target.shape());
        let count = rows.iter().filter(|&&m| m).count();
        let mut acc = 0.0;
        for r in (0..p.rows).filter(|&r| rows[r]) {
            for (a, b) in p.row(r).iter().zip(target.row(r)) {
                acc += (a - b) * (a - b);
            }
        }
        let denom = (count * p.cols).max(1) as f64;
        self.push(Op::MaskedMse(pred, target, rows, count), Mat::from_vec(1, 1, vec![acc / denom]))
    }

    /// Adjoint pass from the scalar `out`, adding `scale * d out / d param`
    /// into `grads`.
    pub fn backward(&self, out: Var, scale: f64, grads: &mut Gradients) {
        let mut adj: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[out.0] = Some(Mat::filled(1, 1, scale));

        fn acc(adj: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut adj[v.0] {
                Some(m) => m.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Param(id) => grads.tensors[*id].add_assign(&g),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.t_matmul(self.value(*a));
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::AddRow(a, b) => {
                    let mut gb = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (x, y) in gb.data.iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                    acc(&mut adj, *b, gb);
                    acc(&mut adj, *a, g);
                }
                Op::Scale(a, s) => {
                    let mut g = g;
                    g.scale_assign(*s);
                    acc(&mut adj, *a, g);
                }
                Op::GatherRows(src, idx) => {
                    let s = self.value(*src);
                    let mut gs = Mat::zeros(s.rows, s.cols);
                    for (r, i) in idx.iter().enumerate() {
                        if let Some(i) = i {
                            for (x, y) in gs.row_mut(*i).iter_mut().zip(g.row(r)) {
                                *x += y;
                            }
                        }
                    }
                    acc(&mut adj, *src, gs);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let rows = self.value(p).rows;
                        let cols = g.cols;
                        let part = Mat::from_vec(rows, cols, g.data[off * cols..(off + rows) * cols].to_vec());
                        acc(&mut adj, p, part);
                        off += rows;
                    }
                }
                Op::SliceCols(src, start) => {
                    let s = self.value(*src);
                    let mut gs = Mat::zeros(s.rows, s.cols);
                    for r in 0..s.rows {
                        gs.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut adj, *src, gs);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let cols = self.value(p).cols;
                        let mut part = Mat::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            part.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        acc(&mut adj, p, part);
                        off += cols;
                    }
                }
                Op::RmsNorm(x, gain, inv) => {
                    let xm = self.value(*x);
                    let gm = self.value(*gain);
                    let n = xm.cols as f64;
                    let mut gx = Mat::zeros(xm.rows, xm.cols);
                    let mut gg = Mat::zeros(1, xm.cols);
                    for r in 0..xm.rows {
                        let s = inv[r];
                        let xr = xm.row(r);
                        let gr = g.row(r);
                        let mut proj = 0.0;
                        for j in 0..xm.cols {
                            proj += gr[j] * gm.data[j] * xr[j];
                            gg.data[j] += gr[j] * xr[j] * s;
                        }
                        let k = s * s * s * proj / n;
                        for (j, o) in gx.row_mut(r).iter_mut().enumerate() {
                            *o = s * gr[j] * gm.data[j] - k * xr[j];
                        }
                    }
                    acc(&mut adj, *x, gx);
                    acc(&mut adj, *gain, gg);
                }
                Op::Gelu(x) => {
                    let xm = self.value(*x);
                    let mut gx = g;
                    for (d, &a) in gx.data.iter_mut().zip(&xm.data) {
                        let u = GELU_C * (a + 0.044715 * a * a * a);
                        let t = libm::tanh(u);
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * a * a);
                        *d *= 0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * du;
                    }
                    acc(&mut adj, *x, gx);
                }
                Op::Softmax(x) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    let mut gx = Mat::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let s = dot(yr, gr);
                        for (o, (&yv, &gv)) in gx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yv * (gv - s);
                        }
                    }
                    acc(&mut adj, *x, gx);
                }
                Op::BiasGather(table, col, idx) => {
                    let t = self.value(*table);
                    let mut gt = Mat::zeros(t.rows, t.cols);
                    for (&[a, b], &gv) in idx.iter().zip(&g.data) {
                        gt.data[a as usize * t.cols + col] += gv;
                        if b != NO_INDEX {
                            gt.data[b as usize * t.cols + col] += gv;
                        }
                    }
                    acc(&mut adj, *table, gt);
                }
                Op::CrossEntropy(logits, targets, probs) => {
                    let n = targets.len().max(1) as f64;
                    let mut gl = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        gl.data[r * gl.cols + t] -= 1.0;
                    }
                    gl.scale_assign(g.data[0] / n);
                    acc(&mut adj, *logits, gl);
                }
                Op::MaskedMse(pred, target, rows, count) => {
                    let p = self.value(*pred);
                    let denom = (count * p.cols).max(1) as f64;
                    let k = 2.0 * g.data[0] / denom;
                    let mut gp = Mat::zeros(p.rows, p.cols);
                    for r in (0..p.rows).filter(|&r| rows[r]) {
                        for ((o, a), b) in gp.row_mut(r).iter_mut().zip(p.row(r)).zip(target.row(r)) {
                            *o = k * (a - b);
                        }
                    }
                    acc(&mut adj, *pred, gp);
                }
            }
        }
    }
}
