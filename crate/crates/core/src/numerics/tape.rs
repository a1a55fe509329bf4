//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles. Leaves
//! are copied in from [`Tensor`]s; calling [`Tape::backward`] consumes the tape
//! and returns the gradient of a scalar with respect to every leaf that
//! requires one.

use super::{softmax_in_place, NumericsError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How cross-entropy terms are combined across supervised positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossReduction {
    #[default]
    Mean,
    Sum,
}

/// Layout and masking for the fused causal attention op.
///
/// Rows are grouped into consecutive segments of `seq_len` rows; a row only
/// attends to rows of its own segment at or before its own position, and only
/// to rows whose `key_mask` entry is `true`.
#[derive(Debug, Clone)]
pub struct AttentionSpec {
    pub heads: usize,
    pub seq_len: usize,
    pub key_mask: Option<Vec<bool>>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Transpose { a: Var },
    Add { a: Var, b: Var },
    AddRow { x: Var, bias: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: f64 },
    Silu { a: Var },
    RmsNorm { x: Var, gain: Var, inv_rms: Vec<f64> },
    Attention { q: Var, k: Var, v: Var, heads: usize, seq_len: usize, probs: Vec<f64> },
    Gather { sources: Vec<Var>, picks: Vec<(usize, usize)> },
    Sum { a: Var },
    CrossEntropy { logits: Var, rows: Vec<(usize, usize)>, probs: Vec<f64>, scale: f64 },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of operations. Inputs of a node always precede it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

fn rows_cols(shape: &[usize], op: &'static str) -> Result<(usize, usize), NumericsError> {
    match shape {
        [r, c] => Ok((*r, *c)),
        other => Err(NumericsError::OpRank {
            op,
            shape: other.to_vec(),
        }),
    }
}

/// `out[m×n] = a[m×k] · b[k×n]`, accumulating each entry left to right over `k`.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a copy of `t`; gradients flow to it iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), t.requires_grad(), Op::Leaf)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var, NumericsError> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape node shape is consistent")
    }

    pub fn scalar(&self, v: Var) -> Result<f64, NumericsError> {
        let n = self.node(v);
        if n.value.len() != 1 {
            return Err(NumericsError::NotScalar {
                shape: n.shape.clone(),
            });
        }
        Ok(n.value[0])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (m, k) = rows_cols(self.shape(a), "matmul")?;
        let (k2, n) = rows_cols(self.shape(b), "matmul")?;
        if k != k2 {
            return Err(NumericsError::Shape {
                op: "matmul",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![m, n], out, rg, Op::MatMul { a, b }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (r, c) = rows_cols(self.shape(a), "transpose")?;
        let out = transpose_raw(self.value(a), r, c);
        let rg = self.rg(&[a]);
        Ok(self.push(vec![c, r], out, rg, Op::Transpose { a }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericsError> {
        if self.shape(a) != self.shape(b) {
            return Err(NumericsError::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, rg, Op::Add { a, b }))
    }

    /// Adds a length-`d` vector to every row of an `n×d` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let (_, d) = rows_cols(self.shape(x), "add_row")?;
        if self.value(bias).len() != d {
            return Err(NumericsError::Shape {
                op: "add_row",
                left: self.shape(x).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias);
        let out = self
            .value(x)
            .chunks(d)
            .flat_map(|row| row.iter().zip(b).map(|(v, bv)| v + bv))
            .collect();
        let rg = self.rg(&[x, bias]);
        Ok(self.push(self.shape(x).to_vec(), out, rg, Op::AddRow { x, bias }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, rg, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * factor).collect();
        let rg = self.rg(&[a]);
        self.push(self.shape(a).to_vec(), out, rg, Op::Scale { a, factor })
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| x * sigmoid(x)).collect();
        let rg = self.rg(&[a]);
        self.push(self.shape(a).to_vec(), out, rg, Op::Silu { a })
    }

    /// Row-wise `x / sqrt(mean(x²) + eps) ⊙ gain`.
    pub fn rmsnorm(&mut self, x: Var, gain: Var, eps: f64) -> Result<Var, NumericsError> {
        let (rows, d) = rows_cols(self.shape(x), "rmsnorm")?;
        if self.value(gain).len() != d {
            return Err(NumericsError::Shape {
                op: "rmsnorm",
                left: self.shape(x).to_vec(),
                right: self.shape(gain).to_vec(),
            });
        }
        let xv = self.value(x);
        let g = self.value(gain);
        let mut out = Vec::with_capacity(rows * d);
        let mut inv_rms = Vec::with_capacity(rows);
        for row in xv.chunks(d) {
            let ms = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
            let r = 1.0 / (ms + eps).sqrt();
            inv_rms.push(r);
            out.extend(row.iter().zip(g).map(|(v, gv)| v * r * gv));
        }
        let rg = self.rg(&[x, gain]);
        Ok(self.push(vec![rows, d], out, rg, Op::RmsNorm { x, gain, inv_rms }))
    }

    /// Multi-head causal scaled dot-product attention over `q`, `k`, `v` (all `rows×d`).
    pub fn causal_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        spec: &AttentionSpec,
    ) -> Result<Var, NumericsError> {
        let (rows, d) = rows_cols(self.shape(q), "attention")?;
        self.same_shape("attention", q, k)?;
        self.same_shape("attention", q, v)?;
        let AttentionSpec {
            heads,
            seq_len,
            ref key_mask,
        } = *spec;
        if heads == 0 || d % heads != 0 {
            return Err(NumericsError::Heads { d_model: d, heads });
        }
        if seq_len == 0 || rows % seq_len != 0 {
            return Err(NumericsError::Segments { rows, seq_len });
        }
        if let Some(mask) = key_mask {
            if mask.len() != rows {
                return Err(NumericsError::MaskLength {
                    rows,
                    len: mask.len(),
                });
            }
        }
        let dh = d / heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let segments = rows / seq_len;
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut out = vec![0.0; rows * d];
        let mut probs = vec![0.0; segments * heads * seq_len * seq_len];
        let mut scores = vec![0.0; seq_len];
        let mut allowed = vec![false; seq_len];
        for s in 0..segments {
            let base = s * seq_len;
            for h in 0..heads {
                let off = h * dh;
                for i in 0..seq_len {
                    let qi = &qv[(base + i) * d + off..(base + i) * d + off + dh];
                    let mut any = false;
                    for j in 0..=i {
                        let ok = key_mask.as_ref().is_none_or(|m| m[base + j]);
                        allowed[j] = ok;
                        if ok {
                            any = true;
                            let kj = &kv[(base + j) * d + off..(base + j) * d + off + dh];
                            scores[j] = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * inv_sqrt;
                        }
                    }
                    if !any {
                        continue;
                    }
                    let p_row = &mut probs[((s * heads + h) * seq_len + i) * seq_len..][..seq_len];
                    let max = (0..=i)
                        .filter(|&j| allowed[j])
                        .map(|j| scores[j])
                        .fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for j in 0..=i {
                        if allowed[j] {
                            let e = (scores[j] - max).exp();
                            p_row[j] = e;
                            z += e;
                        }
                    }
                    for p in p_row[..=i].iter_mut() {
                        *p /= z;
                    }
                    let o = &mut out[(base + i) * d + off..(base + i) * d + off + dh];
                    for j in 0..=i {
                        let p = p_row[j];
                        if p != 0.0 {
                            let vj = &vv[(base + j) * d + off..(base + j) * d + off + dh];
                            o.iter_mut().zip(vj).for_each(|(o, v)| *o += p * v);
                        }
                    }
                }
            }
        }
        let rg = self.rg(&[q, k, v]);
        Ok(self.push(
            vec![rows, d],
            out,
            rg,
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq_len,
                probs,
            },
        ))
    }

    /// Builds a matrix whose row `r` is row `picks[r].1` of `sources[picks[r].0]`.
    ///
    /// Embedding lookup is the single-source case; gradients scatter back.
    pub fn gather_rows(&mut self, sources: &[Var], picks: &[(usize, usize)]) -> Result<Var, NumericsError> {
        let cols = match sources.first() {
            Some(&s) => rows_cols(self.shape(s), "gather_rows")?.1,
            None => return Err(NumericsError::EmptyGather),
        };
        for &s in sources {
            let (_, c) = rows_cols(self.shape(s), "gather_rows")?;
            if c != cols {
                return Err(NumericsError::Shape {
                    op: "gather_rows",
                    left: self.shape(sources[0]).to_vec(),
                    right: self.shape(s).to_vec(),
                });
            }
        }
        let mut out = Vec::with_capacity(picks.len() * cols);
        for &(src, row) in picks {
            let s = *sources.get(src).ok_or(NumericsError::Index {
                what: "gather source",
                index: src,
                len: sources.len(),
            })?;
            let rows = self.shape(s)[0];
            if row >= rows {
                return Err(NumericsError::Index {
                    what: "gather row",
                    index: row,
                    len: rows,
                });
            }
            out.extend_from_slice(&self.value(s)[row * cols..(row + 1) * cols]);
        }
        let rg = self.rg(sources);
        Ok(self.push(
            vec![picks.len(), cols],
            out,
            rg,
            Op::Gather {
                sources: sources.to_vec(),
                picks: picks.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(&[a]);
        self.push(vec![], vec![s], rg, Op::Sum { a })
    }

    /// Cross-entropy of `logits[N×V]` against `targets`, skipping rows whose
    /// target equals `ignore_index`. Skipped rows are never read.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[i64],
        ignore_index: i64,
        reduction: LossReduction,
    ) -> Result<Var, NumericsError> {
        let (n, vocab) = rows_cols(self.shape(logits), "cross_entropy")?;
        if targets.len() != n {
            return Err(NumericsError::TargetsLength {
                rows: n,
                len: targets.len(),
            });
        }
        let mut rows = Vec::new();
        for (i, &t) in targets.iter().enumerate() {
            if t == ignore_index {
                continue;
            }
            if t < 0 || t as usize >= vocab {
                return Err(NumericsError::TargetOutOfRange { target: t, vocab });
            }
            rows.push((i, t as usize));
        }
        if rows.is_empty() {
            return Err(NumericsError::NoSupervisedTokens);
        }
        let lv = self.value(logits);
        let mut probs = Vec::with_capacity(rows.len() * vocab);
        let mut total = 0.0;
        for &(i, t) in &rows {
            let row = &lv[i * vocab..(i + 1) * vocab];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
            total += max + z.ln() - row[t];
            let start = probs.len();
            probs.extend_from_slice(row);
            softmax_in_place(&mut probs[start..]);
        }
        let scale = match reduction {
            LossReduction::Mean => 1.0 / rows.len() as f64,
            LossReduction::Sum => 1.0,
        };
        let rg = self.rg(&[logits]);
        Ok(self.push(
            vec![],
            vec![total * scale],
            rg,
            Op::CrossEntropy {
                logits,
                rows,
                probs,
                scale,
            },
        ))
    }

    /// Back-propagates from the scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, NumericsError> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(NumericsError::NotScalar {
                shape: root.shape.clone(),
            });
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if !nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], nodes: &[Node], v: Var, delta: Vec<f64>) {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(g) => g.iter_mut().zip(&delta).for_each(|(g, d)| *g += d),
                slot @ None => *slot = Some(delta),
            }
        }

        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul { a, b } => {
                    let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                    let n = nodes[b.0].shape[1];
                    if nodes[a.0].requires_grad {
                        let bt = transpose_raw(&nodes[b.0].value, k, n);
                        acc(&mut grads, &nodes, *a, matmul_raw(&g, &bt, m, n, k));
                    }
                    if nodes[b.0].requires_grad {
                        let at = transpose_raw(&nodes[a.0].value, m, k);
                        acc(&mut grads, &nodes, *b, matmul_raw(&at, &g, k, m, n));
                    }
                }
                Op::Transpose { a } => {
                    let (r, c) = (node.shape[0], node.shape[1]);
                    acc(&mut grads, &nodes, *a, transpose_raw(&g, r, c));
                }
                Op::Add { a, b } => {
                    acc(&mut grads, &nodes, *a, g.clone());
                    acc(&mut grads, &nodes, *b, g);
                }
                Op::AddRow { x, bias } => {
                    let d = node.shape[1];
                    if nodes[bias.0].requires_grad {
                        let mut gb = vec![0.0; d];
                        for row in g.chunks(d) {
                            gb.iter_mut().zip(row).for_each(|(b, r)| *b += r);
                        }
                        acc(&mut grads, &nodes, *bias, gb);
                    }
                    acc(&mut grads, &nodes, *x, g);
                }
                Op::Mul { a, b } => {
                    let av = &nodes[a.0].value;
                    let bv = &nodes[b.0].value;
                    if nodes[a.0].requires_grad {
                        acc(&mut grads, &nodes, *a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
                    }
                    if nodes[b.0].requires_grad {
                        acc(&mut grads, &nodes, *b, g.iter().zip(av).map(|(g, a)| g * a).collect());
                    }
                }
                Op::Scale { a, factor } => {
                    acc(&mut grads, &nodes, *a, g.iter().map(|g| g * factor).collect());
                }
                Op::Silu { a } => {
                    let delta = g
                        .iter()
                        .zip(&nodes[a.0].value)
                        .map(|(g, &x)| {
                            let s = sigmoid(x);
                            g * s * (1.0 + x * (1.0 - s))
                        })
                        .collect();
                    acc(&mut grads, &nodes, *a, delta);
                }
                Op::RmsNorm { x, gain, inv_rms } => {
                    let d = node.shape[1];
                    let xv = &nodes[x.0].value;
                    let gv = &nodes[gain.0].value;
                    if nodes[x.0].requires_grad {
                        let mut dx = vec![0.0; xv.len()];
                        for (r, &inv) in inv_rms.iter().enumerate() {
                            let xr = &xv[r * d..(r + 1) * d];
                            let gr = &g[r * d..(r + 1) * d];
                            let dot: f64 = (0..d).map(|j| gr[j] * gv[j] * xr[j]).sum();
                            let coef = inv * inv * inv * dot / d as f64;
                            for j in 0..d {
                                dx[r * d + j] = inv * gv[j] * gr[j] - coef * xr[j];
                            }
                        }
                        acc(&mut grads, &nodes, *x, dx);
                    }
                    if nodes[gain.0].requires_grad {
                        let mut dg = vec![0.0; d];
                        for (r, &inv) in inv_rms.iter().enumerate() {
                            for j in 0..d {
                                dg[j] += g[r * d + j] * xv[r * d + j] * inv;
                            }
                        }
                        acc(&mut grads, &nodes, *gain, dg);
                    }
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    seq_len,
                    probs,
                } => {
                    let (rows, d) = (node.shape[0], node.shape[1]);
                    let (heads, t) = (*heads, *seq_len);
                    let dh = d / heads;
                    let inv_sqrt = 1.0 / (dh as f64).sqrt();
                    let (qv, kv, vv) = (&nodes[q.0].value, &nodes[k.0].value, &nodes[v.0].value);
                    let mut dq = vec![0.0; rows * d];
                    let mut dk = vec![0.0; rows * d];
                    let mut dv = vec![0.0; rows * d];
                    let mut dp = vec![0.0; t];
                    for s in 0..rows / t {
                        let base = s * t;
                        for h in 0..heads {
                            let off = h * dh;
                            for i in 0..t {
                                let p_row = &probs[((s * heads + h) * t + i) * t..][..t];
                                let go = &g[(base + i) * d + off..(base + i) * d + off + dh];
                                let mut weighted = 0.0;
                                for j in 0..=i {
                                    if p_row[j] == 0.0 {
                                        dp[j] = 0.0;
                                        continue;
                                    }
                                    let vj = &vv[(base + j) * d + off..(base + j) * d + off + dh];
                                    dp[j] = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                                    weighted += p_row[j] * dp[j];
                                    let dvj = &mut dv[(base + j) * d + off..(base + j) * d + off + dh];
                                    dvj.iter_mut().zip(go).for_each(|(x, o)| *x += p_row[j] * o);
                                }
                                for j in 0..=i {
                                    if p_row[j] == 0.0 {
                                        continue;
                                    }
                                    let ds = p_row[j] * (dp[j] - weighted) * inv_sqrt;
                                    for c in 0..dh {
                                        dq[(base + i) * d + off + c] += ds * kv[(base + j) * d + off + c];
                                        dk[(base + j) * d + off + c] += ds * qv[(base + i) * d + off + c];
                                    }
                                }
                            }
                        }
                    }
                    acc(&mut grads, &nodes, *q, dq);
                    acc(&mut grads, &nodes, *k, dk);
                    acc(&mut grads, &nodes, *v, dv);
                }
                Op::Gather { sources, picks } => {
                    let cols = node.shape[1];
                    let mut per_source: Vec<Option<Vec<f64>>> = sources
                        .iter()
                        .map(|s| nodes[s.0].requires_grad.then(|| vec![0.0; nodes[s.0].value.len()]))
                        .collect();
                    for (r, &(src, row)) in picks.iter().enumerate() {
                        if let Some(buf) = &mut per_source[src] {
                            let dst = &mut buf[row * cols..(row + 1) * cols];
                            dst.iter_mut().zip(&g[r * cols..(r + 1) * cols]).for_each(|(d, g)| *d += g);
                        }
                    }
                    for (s, buf) in sources.iter().zip(per_source) {
                        if let Some(buf) = buf {
                            acc(&mut grads, &nodes, *s, buf);
                        }
                    }
                }
                Op::Sum { a } => {
                    let n = nodes[a.0].value.len();
                    acc(&mut grads, &nodes, *a, vec![g[0]; n]);
                }
                Op::CrossEntropy {
                    logits,
                    rows,
                    probs,
                    scale,
                } => {
                    let vocab = nodes[logits.0].shape[1];
                    let mut dl = vec![0.0; nodes[logits.0].value.len()];
                    let coef = g[0] * scale;
                    for (r, &(i, t)) in rows.iter().enumerate() {
                        let p = &probs[r * vocab..(r + 1) * vocab];
                        let dst = &mut dl[i * vocab..(i + 1) * vocab];
                        for (c, (d, p)) in dst.iter_mut().zip(p).enumerate() {
                            *d = coef * (p - if c == t { 1.0 } else { 0.0 });
                        }
                    }
                    acc(&mut grads, &nodes, *logits, dl);
                }
            }
        }
        Ok(Gradients { grads })
    }
}
