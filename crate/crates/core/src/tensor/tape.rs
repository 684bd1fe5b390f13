use super::kernels::{broadcast_index_map, broadcast_shapes, matmul_nn, matmul_nt, matmul_tn, split_axis};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a tensor owned by a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Records differentiable operations in execution order and replays their
/// backward rules in reverse.
///
/// Nodes that do not depend on any `requires_grad` leaf are evaluated but not
/// recorded, so inference on a tape costs no backward bookkeeping.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Tensor>,
    leaf: Vec<bool>,
    records: Vec<Record>,
}

struct Record {
    out: usize,
    op: Op,
}

enum Op {
    Matmul {
        a: usize,
        b: usize,
        k: usize,
        n: usize,
        // (a offset, b offset, out offset) per gemm
        blocks: Vec<(usize, usize, usize)>,
        rows: usize,
    },
    Add(Binary),
    Sub(Binary),
    Mul(Binary),
    Scale { x: usize, factor: f64 },
    Relu { x: usize },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax { x: usize, axis: usize },
    Reshape { x: usize },
    Broadcast { x: usize, map: Vec<usize> },
    Permute { x: usize, src_index: Vec<usize> },
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { x: usize, axis: usize, start: usize },
    Sum { x: usize },
    Mean { x: usize },
}

struct Binary {
    a: usize,
    b: usize,
    map_a: Option<Vec<usize>>,
    map_b: Option<Vec<usize>>,
}

fn add_into(dst: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    dst.get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a leaf tensor. Its `requires_grad` flag decides whether gradients
    /// are collected for it.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.nodes.push(tensor);
        self.leaf.push(true);
        Var(self.nodes.len() - 1)
    }

    /// Adds a constant (non-trainable) leaf.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        let mut t = tensor;
        t.requires_grad = false;
        t.grad = None;
        self.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Gradient held by a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.nodes[v.0].take_grad()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_records(&self) -> usize {
        self.records.len()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, inputs: &[usize], op: impl FnOnce() -> Op) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        let out = self.nodes.len();
        self.nodes.push(Tensor {
            shape,
            data,
            grad: None,
            requires_grad,
        });
        self.leaf.push(false);
        if requires_grad {
            self.records.push(Record { out, op: op() });
        }
        Var(out)
    }

    /// Batched matrix product `a[.., m, k] · b[.., k, n]` with broadcast batch dimensions.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(mismatch());
        }
        let batch_a = &sa[..sa.len() - 2];
        let batch_b = &sb[..sb.len() - 2];
        let batch = broadcast_shapes(batch_a, batch_b).ok_or_else(mismatch)?;
        let batch_count: usize = batch.iter().product();

        let b_is_shared = batch_b.iter().all(|&d| d == 1);
        let (blocks, rows) = if b_is_shared && batch_a.iter().product::<usize>() == batch_count {
            // one tall gemm over all rows of a
            (vec![(0, 0, 0)], batch_count * m)
        } else {
            let pad = |s: &[usize]| -> Vec<usize> {
                let mut v = vec![1; batch.len() - s.len()];
                v.extend_from_slice(s);
                v
            };
            let map_a = if batch.is_empty() { vec![0] } else { broadcast_index_map(&batch, &pad(batch_a)) };
            let map_b = if batch.is_empty() { vec![0] } else { broadcast_index_map(&batch, &pad(batch_b)) };
            let blocks = (0..batch_count)
                .map(|i| (map_a[i] * m * k, map_b[i] * k * n, i * m * n))
                .collect();
            (blocks, m)
        };

        let (da, db) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
        let mut out = vec![0.0; batch_count * m * n];
        for &(ao, bo, co) in &blocks {
            matmul_nn(
                rows,
                k,
                n,
                &da[ao..ao + rows * k],
                &db[bo..bo + k * n],
                &mut out[co..co + rows * n],
            );
        }
        let mut shape = batch;
        shape.extend([m, n]);
        Ok(self.push(shape, out, &[a.0, b.0], || Op::Matmul {
            a: a.0,
            b: b.0,
            k,
            n,
            blocks,
            rows,
        }))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<(Vec<usize>, Vec<f64>, Binary)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let shape = broadcast_shapes(sa, sb).ok_or_else(|| Error::ShapeMismatch {
            op: name,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })?;
        let map_a = (sa != shape.as_slice()).then(|| broadcast_index_map(&shape, sa));
        let map_b = (sb != shape.as_slice()).then(|| broadcast_index_map(&shape, sb));
        let (xa, xb) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
        let n: usize = shape.iter().product();
        let data = match (&map_a, &map_b) {
            (None, None) => xa.iter().zip(xb).map(|(&p, &q)| f(p, q)).collect(),
            (None, Some(mb)) => (0..n).map(|i| f(xa[i], xb[mb[i]])).collect(),
            (Some(ma), None) => (0..n).map(|i| f(xa[ma[i]], xb[i])).collect(),
            (Some(ma), Some(mb)) => (0..n).map(|i| f(xa[ma[i]], xb[mb[i]])).collect(),
        };
        Ok((
            shape,
            data,
            Binary {
                a: a.0,
                b: b.0,
                map_a,
                map_b,
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, data, bin) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(shape, data, &[a.0, b.0], || Op::Add(bin)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, data, bin) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(shape, data, &[a.0, b.0], || Op::Sub(bin)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, data, bin) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(shape, data, &[a.0, b.0], || Op::Mul(bin)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = &self.nodes[x.0];
        let data = t.data.iter().map(|v| v * factor).collect();
        let shape = t.shape.clone();
        self.push(shape, data, &[x.0], || Op::Scale { x: x.0, factor })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0];
        let data = t.data.iter().map(|&v| v.max(0.0)).collect();
        let shape = t.shape.clone();
        self.push(shape, data, &[x.0], || Op::Relu { x: x.0 })
    }

    /// Normalizes over the last axis, then applies `gain` and `bias` (both of
    /// length equal to the last dimension). Variance is the population variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap();
        for p in [gain, bias] {
            if self.nodes[p.0].len() != d {
                return Err(Error::ShapeMismatch {
                    op: "layer_norm",
                    lhs: shape,
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let xs = &self.nodes[x.0].data;
        let (g, b) = (&self.nodes[gain.0].data, &self.nodes[bias.0].data);
        let rows = xs.len() / d;
        let mut xhat = vec![0.0; xs.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xs.len()];
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        Ok(self.push(shape, out, &[x.0, gain.0, bias.0], || Op::LayerNorm {
            x: x.0,
            gain: gain.0,
            bias: bias.0,
            xhat,
            inv_std,
        }))
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("softmax axis {axis} out of range"),
            });
        }
        let data = softmax_forward(&self.nodes[x.0].data, &shape, axis);
        Ok(self.push(shape, data, &[x.0], || Op::Softmax { x: x.0, axis }))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let t = self.nodes[x.0].reshape(shape)?;
        Ok(self.push(t.shape, t.data, &[x.0], || Op::Reshape { x: x.0 }))
    }

    /// Expands `x` to `shape` under broadcasting rules.
    pub fn broadcast_to(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let sx = self.shape(x).to_vec();
        if broadcast_shapes(&sx, &shape).as_deref() != Some(shape.as_slice()) {
            return Err(Error::ShapeMismatch {
                op: "broadcast_to",
                lhs: sx,
                rhs: shape,
            });
        }
        let map = broadcast_index_map(&shape, &sx);
        let src = &self.nodes[x.0].data;
        let data = map.iter().map(|&i| src[i]).collect();
        Ok(self.push(shape, data, &[x.0], || Op::Broadcast { x: x.0, map }))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let mut seen = vec![false; sx.len()];
        if perm.len() != sx.len() || perm.iter().any(|&p| p >= sx.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidShape {
                shape: sx,
                reason: format!("invalid permutation {perm:?}"),
            });
        }
        let mut in_strides = vec![1usize; sx.len()];
        for i in (0..sx.len().saturating_sub(1)).rev() {
            in_strides[i] = in_strides[i + 1] * sx[i + 1];
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| sx[p]).collect();
        let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let total = self.nodes[x.0].len();
        let mut src_index = Vec::with_capacity(total);
        let mut idx = vec![0usize; out_shape.len()];
        let mut src = 0usize;
        for _ in 0..total {
            src_index.push(src);
            for d in (0..out_shape.len()).rev() {
                idx[d] += 1;
                src += strides[d];
                if idx[d] < out_shape[d] {
                    break;
                }
                src -= strides[d] * idx[d];
                idx[d] = 0;
            }
        }
        let xs = &self.nodes[x.0].data;
        let data = src_index.iter().map(|&i| xs[i]).collect();
        Ok(self.push(out_shape, data, &[x.0], || Op::Permute { x: x.0, src_index }))
    }

    /// Concatenates tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(xs[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::InvalidShape {
                shape: first,
                reason: format!("concat axis {axis} out of range"),
            });
        }
        let mut total_axis = 0;
        for &v in xs {
            let s = self.shape(v);
            let compatible = s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            total_axis += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total_axis;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in xs {
                let t = &self.nodes[v.0];
                let chunk = t.shape[axis] * inner;
                data.extend_from_slice(&t.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        Ok(self.push(shape, data, &ids.clone(), || Op::Concat { inputs: ids, axis }))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() || len == 0 || start + len > sx[axis] {
            return Err(Error::InvalidShape {
                shape: sx,
                reason: format!("slice axis {axis} [{start}, {}) out of range", start + len),
            });
        }
        let (outer, dim, inner) = split_axis(&sx, axis);
        let xs = &self.nodes[x.0].data;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&xs[base..base + len * inner]);
        }
        let mut shape = sx;
        shape[axis] = len;
        Ok(self.push(shape, data, &[x.0], || Op::Slice { x: x.0, axis, start }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].data.iter().sum();
        self.push(vec![1], vec![s], &[x.0], || Op::Sum { x: x.0 })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0];
        let s = t.data.iter().sum::<f64>() / t.len() as f64;
        self.push(vec![1], vec![s], &[x.0], || Op::Mean { x: x.0 })
    }

    /// Propagates `∂loss/∂node` back through the recorded operations and stores
    /// the result on every `requires_grad` leaf. Recorded operations are cleared
    /// afterwards; node values stay readable.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_t = &self.nodes[loss.0];
        if loss_t.len() != 1 {
            return Err(Error::NonScalarLoss(loss_t.shape.clone()));
        }
        if self.records.is_empty() {
            return Err(Error::EmptyTape);
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        let records = std::mem::take(&mut self.records);
        for rec in records.iter().rev() {
            let Some(g) = grads[rec.out].take() else {
                continue;
            };
            self.backward_op(rec, &g, &mut grads);
        }
        for (i, g) in grads.into_iter().enumerate() {
            if self.leaf[i] && self.nodes[i].requires_grad {
                let n = self.nodes[i].len();
                self.nodes[i].grad = Some(g.unwrap_or_else(|| vec![0.0; n]));
            }
        }
        Ok(())
    }

    fn backward_op(&self, rec: &Record, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let wants = |i: usize| nodes[i].requires_grad;
        match &rec.op {
            Op::Matmul {
                a,
                b,
                k,
                n,
                blocks,
                rows,
            } => {
                let (k, n, rows) = (*k, *n, *rows);
                if wants(*a) {
                    let bd = &nodes[*b].data;
                    let ga = add_into(&mut grads[*a], nodes[*a].len());
                    for &(ao, bo, co) in blocks {
                        matmul_nt(rows, k, n, &g[co..co + rows * n], &bd[bo..bo + k * n], &mut ga[ao..ao + rows * k]);
                    }
                }
                if wants(*b) {
                    let ad = &nodes[*a].data;
                    let gb = add_into(&mut grads[*b], nodes[*b].len());
                    for &(ao, bo, co) in blocks {
                        matmul_tn(rows, k, n, &ad[ao..ao + rows * k], &g[co..co + rows * n], &mut gb[bo..bo + k * n]);
                    }
                }
            }
            Op::Add(bin) | Op::Sub(bin) | Op::Mul(bin) => {
                let sign_b = if matches!(rec.op, Op::Sub(_)) { -1.0 } else { 1.0 };
                let is_mul = matches!(rec.op, Op::Mul(_));
                let (xa, xb) = (&nodes[bin.a].data, &nodes[bin.b].data);
                let ia = |i: usize| bin.map_a.as_ref().map_or(i, |m| m[i]);
                let ib = |i: usize| bin.map_b.as_ref().map_or(i, |m| m[i]);
                if wants(bin.a) {
                    let ga = add_into(&mut grads[bin.a], xa.len());
                    for (i, &gi) in g.iter().enumerate() {
                        let d = if is_mul { gi * xb[ib(i)] } else { gi };
                        ga[ia(i)] += d;
                    }
                }
                if wants(bin.b) {
                    let gb = add_into(&mut grads[bin.b], xb.len());
                    for (i, &gi) in g.iter().enumerate() {
                        let d = if is_mul { gi * xa[ia(i)] } else { sign_b * gi };
                        gb[ib(i)] += d;
                    }
                }
            }
            Op::Scale { x, factor } => {
                let gx = add_into(&mut grads[*x], g.len());
                for (d, &gi) in gx.iter_mut().zip(g) {
                    *d += gi * factor;
                }
            }
            Op::Relu { x } => {
                let xs = &nodes[*x].data;
                let gx = add_into(&mut grads[*x], g.len());
                for ((d, &gi), &xv) in gx.iter_mut().zip(g).zip(xs) {
                    if xv > 0.0 {
                        *d += gi;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = &nodes[*gain].data;
                let d = gv.len();
                if wants(*gain) {
                    let gg = add_into(&mut grads[*gain], d);
                    for (row_g, row_h) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            gg[j] += row_g[j] * row_h[j];
                        }
                    }
                }
                if wants(*bias) {
                    let gb = add_into(&mut grads[*bias], d);
                    for row_g in g.chunks_exact(d) {
                        for j in 0..d {
                            gb[j] += row_g[j];
                        }
                    }
                }
                if wants(*x) {
                    let gx = add_into(&mut grads[*x], g.len());
                    let mut dh = vec![0.0; d];
                    for (r, (row_g, row_h)) in g.chunks_exact(d).zip(xhat.chunks_exact(d)).enumerate() {
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..d {
                            dh[j] = row_g[j] * gv[j];
                            mean_dh += dh[j];
                            mean_dh_h += dh[j] * row_h[j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        let out = &mut gx[r * d..(r + 1) * d];
                        for j in 0..d {
                            out[j] += inv_std[r] * (dh[j] - mean_dh - row_h[j] * mean_dh_h);
                        }
                    }
                }
            }
            Op::Softmax { x, axis } => {
                let y = &nodes[rec.out].data;
                let (outer, dim, inner) = split_axis(&nodes[rec.out].shape, *axis);
                let gx = add_into(&mut grads[*x], g.len());
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * dim * inner + j * inner + i;
                        let dotp: f64 = (0..dim).map(|j| g[at(j)] * y[at(j)]).sum();
                        for j in 0..dim {
                            gx[at(j)] += y[at(j)] * (g[at(j)] - dotp);
                        }
                    }
                }
            }
            Op::Reshape { x } => {
                let gx = add_into(&mut grads[*x], g.len());
                for (d, &gi) in gx.iter_mut().zip(g) {
                    *d += gi;
                }
            }
            Op::Broadcast { x, map } => {
                let gx = add_into(&mut grads[*x], nodes[*x].len());
                for (&src, &gi) in map.iter().zip(g) {
                    gx[src] += gi;
                }
            }
            Op::Permute { x, src_index } => {
                let gx = add_into(&mut grads[*x], g.len());
                for (&src, &gi) in src_index.iter().zip(g) {
                    gx[src] += gi;
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = split_axis(&nodes[rec.out].shape, *axis);
                let mut pos = 0;
                for o in 0..outer {
                    for &v in inputs {
                        let chunk = nodes[v].shape[*axis] * inner;
                        if wants(v) {
                            let gv = add_into(&mut grads[v], nodes[v].len());
                            for (d, &gi) in gv[o * chunk..(o + 1) * chunk].iter_mut().zip(&g[pos..pos + chunk]) {
                                *d += gi;
                            }
                        }
                        pos += chunk;
                    }
                }
            }
            Op::Slice { x, axis, start } => {
                let sx = &nodes[*x].shape;
                let (outer, dim, inner) = split_axis(sx, *axis);
                let len = nodes[rec.out].shape[*axis];
                let gx = add_into(&mut grads[*x], nodes[*x].len());
                for o in 0..outer {
                    let base = o * dim * inner + start * inner;
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    for (d, &gi) in gx[base..base + len * inner].iter_mut().zip(src) {
                        *d += gi;
                    }
                }
            }
            Op::Sum { x } => {
                let gx = add_into(&mut grads[*x], nodes[*x].len());
                for d in gx.iter_mut() {
                    *d += g[0];
                }
            }
            Op::Mean { x } => {
                let n = nodes[*x].len();
                let gx = add_into(&mut grads[*x], n);
                let share = g[0] / n as f64;
                for d in gx.iter_mut() {
                    *d += share;
                }
            }
        }
    }
}

pub(crate) fn softmax_forward(xs: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, dim, inner) = split_axis(shape, axis);
    let mut out = vec![0.0; xs.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * dim * inner + j * inner + i;
            let max = (0..dim).map(|j| xs[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..dim {
                let e = (xs[at(j)] - max).exp();
                out[at(j)] = e;
                total += e;
            }
            for j in 0..dim {
                out[at(j)] /= total;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_small_cases() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = tape.leaf(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[3.0, 4.0, 5.0, 6.0]);

        let a = tape.leaf(t(&[1, 2], &[1.0, 2.0]));
        let b = tape.leaf(t(&[2, 1], &[3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(vec![2, 3]).unwrap());
        let b = tape.leaf(Tensor::zeros(vec![2, 3]).unwrap());
        let msg = tape.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_cases() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[0.0, 0.0, 0.0]));
        let y = tape.softmax(x, 0).unwrap();
        for v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = tape.leaf(t(&[2], &[1000.0, 1000.0]));
        let y = tape.softmax(x, 0).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_non_last_axis() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 2], &[0.0, 1.0, 0.0, 1.0]));
        let y = tape.softmax(x, 0).unwrap();
        for v in tape.value(y).data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_and_layer_norm_of_constant() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[-1.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);

        let x = tape.leaf(t(&[4], &[3.0; 4]));
        let g = tape.leaf(t(&[4], &[1.0; 4]));
        let b = tape.leaf(t(&[4], &[0.0; 4]));
        let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0; 4]);
    }

    #[test]
    fn backward_of_sum_and_square() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, -2.0, 0.5]).with_grad());
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);

        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, -2.0, 0.5]).with_grad());
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_clears_tape() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]).with_grad());
        let y = tape.scale(x, 2.0);
        assert!(matches!(tape.backward(y), Err(Error::NonScalarLoss(_))));
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.num_records(), 0);
        assert!(matches!(tape.backward(s), Err(Error::EmptyTape)));
    }

    #[test]
    fn constants_are_not_recorded() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1.0, 2.0]));
        let b = tape.constant(t(&[2], &[3.0, 4.0]));
        let c = tape.add(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[4.0, 6.0]);
        assert_eq!(tape.num_records(), 0);
    }

    #[test]
    fn unreached_leaf_gets_zero_grad() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]).with_grad());
        let unused = tape.leaf(t(&[2], &[1.0, 2.0]).with_grad());
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(unused).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn concat_and_slice_roundtrip() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(t(&[2, 2, 2], &[5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]));
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.shape(c), &[2, 3, 2]);
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 5.0, 6.0, 7.0, 8.0, 3.0, 4.0, 9.0, 10.0, 11.0, 12.0]);
        let s = tape.slice(c, 1, 0, 1).unwrap();
        assert_eq!(tape.value(s).data(), tape.value(a).data());
    }

    #[test]
    fn permute_transposes() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let p = tape.permute(a, &[1, 0]).unwrap();
        assert_eq!(tape.shape(p), &[3, 2]);
        assert_eq!(tape.value(p).data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert!(tape.permute(a, &[0, 0]).is_err());
    }
}
