//! The contextual vision transformer.
//!
//! A `T × I × J` history image is cut into `N = IJ/P²` patches, each patch is
//! linearly embedded to `D` dimensions, a learnable regression token is
//! prepended and fixed sinusoidal positions are added. The sequence runs through
//! a stack of post-norm encoder layers; the regression token's output is
//! concatenated with a linear embedding of the flattened context matrix and
//! mapped through a two-layer head to the `I × J` risk map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::{encode_rows, CONTEXT_DIM};
use crate::error::{Error, Result};
use crate::grid::{apply_norm, NormStats, Sample, HISTORY_LEN};
use crate::tensor::{Tape, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub rows: usize,
    pub cols: usize,
    pub history_len: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_hidden: usize,
    pub head_hidden: usize,
    pub context_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            rows: 20,
            cols: 20,
            history_len: HISTORY_LEN,
            patch_size: 5,
            embed_dim: 64,
            heads: 8,
            layers: 6,
            ffn_hidden: 256,
            head_hidden: 128,
            context_dim: CONTEXT_DIM,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let dims = [
            ("rows", self.rows),
            ("cols", self.cols),
            ("history_len", self.history_len),
            ("patch_size", self.patch_size),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("layers", self.layers),
            ("ffn_hidden", self.ffn_hidden),
            ("head_hidden", self.head_hidden),
            ("context_dim", self.context_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                problems.push(format!("model.{name} must be positive"));
            }
        }
        if !problems.is_empty() {
            return problems;
        }
        if !self.rows.is_multiple_of(self.patch_size) || !self.cols.is_multiple_of(self.patch_size) {
            problems.push(format!("grid {}x{} is not divisible by patch size {}", self.rows, self.cols, self.patch_size));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            problems.push(format!("embed_dim {} is not divisible by heads {}", self.embed_dim, self.heads));
        }
        if !self.embed_dim.is_multiple_of(2) {
            problems.push(format!("embed_dim {} must be even for sinusoidal positions", self.embed_dim));
        }
        problems
    }

    pub fn num_patches(&self) -> usize {
        (self.rows * self.cols) / (self.patch_size * self.patch_size)
    }

    pub fn patch_len(&self) -> usize {
        self.history_len * self.patch_size * self.patch_size
    }

    /// Patches plus the regression token.
    pub fn seq_len(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }
}

/// Splits a `[T, I, J]` image into `[N, T·P²]` flattened patches.
///
/// Patch `n = r·(J/P) + c` covers rows `[rP, (r+1)P)` and columns `[cP, (c+1)P)`;
/// each patch is flattened in (channel, row, column) order.
pub fn patchify(image: &Tensor, patch: usize) -> Result<Tensor> {
    let shape = image.shape();
    if shape.len() != 3 || patch == 0 || !shape[1].is_multiple_of(patch) || !shape[2].is_multiple_of(patch) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: format!("expected [T, I, J] with I and J divisible by {patch}"),
        });
    }
    let (t, rows, cols) = (shape[0], shape[1], shape[2]);
    let (pr, pc) = (rows / patch, cols / patch);
    let plen = t * patch * patch;
    let src = image.data();
    let mut out = Vec::with_capacity(pr * pc * plen);
    for r in 0..pr {
        for c in 0..pc {
            for ch in 0..t {
                for i in 0..patch {
                    let row = r * patch + i;
                    let base = (ch * rows + row) * cols + c * patch;
                    out.extend_from_slice(&src[base..base + patch]);
                }
            }
        }
    }
    Tensor::new(vec![pr * pc, plen], out)
}

/// `PE[a][2k] = sin(a / 10000^(2k/D))`, `PE[a][2k+1] = cos(a / 10000^(2k/D))`.
pub fn positional_encoding(positions: usize, dim: usize) -> Result<Tensor> {
    if !dim.is_multiple_of(2) || dim == 0 || positions == 0 {
        return Err(Error::InvalidShape {
            shape: vec![positions, dim],
            reason: "positional encoding needs an even, positive width".into(),
        });
    }
    let mut data = Vec::with_capacity(positions * dim);
    for a in 0..positions {
        for k in 0..dim / 2 {
            let angle = a as f64 / 10000f64.powf((2 * k) as f64 / dim as f64);
            data.push(angle.sin());
            data.push(angle.cos());
        }
    }
    Tensor::new(vec![positions, dim], data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<P = Tensor> {
    /// `[in, out]`
    pub weight: P,
    /// `[out]`
    pub bias: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer<P = Tensor> {
    pub query: Linear<P>,
    pub key: Linear<P>,
    pub value: Linear<P>,
    pub output: Linear<P>,
    pub norm1_gain: P,
    pub norm1_bias: P,
    pub ffn_in: Linear<P>,
    pub ffn_out: Linear<P>,
    pub norm2_gain: P,
    pub norm2_bias: P,
}

/// Every trainable array of the model. `P` is [`Tensor`] for stored weights and
/// [`Var`] once bound to a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<P = Tensor> {
    pub patch_embed: Linear<P>,
    pub reg_token: P,
    pub context_embed: Linear<P>,
    pub layers: Vec<EncoderLayer<P>>,
    pub head_hidden: Linear<P>,
    pub head_out: Linear<P>,
}

impl<P> Linear<P> {
    fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Linear<Q> {
        Linear {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a P)) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut P)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

impl<P> EncoderLayer<P> {
    fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> EncoderLayer<Q> {
        EncoderLayer {
            query: self.query.map(f),
            key: self.key.map(f),
            value: self.value.map(f),
            output: self.output.map(f),
            norm1_gain: f(&self.norm1_gain),
            norm1_bias: f(&self.norm1_bias),
            ffn_in: self.ffn_in.map(f),
            ffn_out: self.ffn_out.map(f),
            norm2_gain: f(&self.norm2_gain),
            norm2_bias: f(&self.norm2_bias),
        }
    }

    fn visit<'a>(&'a self, p: &str, f: &mut impl FnMut(String, &'a P)) {
        self.query.visit(&format!("{p}.attn.query"), f);
        self.key.visit(&format!("{p}.attn.key"), f);
        self.value.visit(&format!("{p}.attn.value"), f);
        self.output.visit(&format!("{p}.attn.output"), f);
        f(format!("{p}.norm1.gain"), &self.norm1_gain);
        f(format!("{p}.norm1.bias"), &self.norm1_bias);
        self.ffn_in.visit(&format!("{p}.ffn.in"), f);
        self.ffn_out.visit(&format!("{p}.ffn.out"), f);
        f(format!("{p}.norm2.gain"), &self.norm2_gain);
        f(format!("{p}.norm2.bias"), &self.norm2_bias);
    }

    fn visit_mut<'a>(&'a mut self, p: &str, f: &mut impl FnMut(String, &'a mut P)) {
        self.query.visit_mut(&format!("{p}.attn.query"), f);
        self.key.visit_mut(&format!("{p}.attn.key"), f);
        self.value.visit_mut(&format!("{p}.attn.value"), f);
        self.output.visit_mut(&format!("{p}.attn.output"), f);
        f(format!("{p}.norm1.gain"), &mut self.norm1_gain);
        f(format!("{p}.norm1.bias"), &mut self.norm1_bias);
        self.ffn_in.visit_mut(&format!("{p}.ffn.in"), f);
        self.ffn_out.visit_mut(&format!("{p}.ffn.out"), f);
        f(format!("{p}.norm2.gain"), &mut self.norm2_gain);
        f(format!("{p}.norm2.bias"), &mut self.norm2_bias);
    }
}

impl<P> Params<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> Params<Q> {
        let f = &mut f;
        Params {
            patch_embed: self.patch_embed.map(f),
            reg_token: f(&self.reg_token),
            context_embed: self.context_embed.map(f),
            layers: self.layers.iter().map(|l| l.map(f)).collect(),
            head_hidden: self.head_hidden.map(f),
            head_out: self.head_out.map(f),
        }
    }

    /// Parameters with dotted names, in a fixed order.
    pub fn named(&self) -> Vec<(String, &P)> {
        let mut out = Vec::new();
        let f = &mut |name, p| out.push((name, p));
        self.patch_embed.visit("patch_embed", f);
        f("reg_token".into(), &self.reg_token);
        self.context_embed.visit("context_embed", f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&format!("layers.{i}"), f);
        }
        self.head_hidden.visit("head.hidden", f);
        self.head_out.visit("head.out", f);
        out
    }

    /// Same order as [`Params::named`].
    pub fn named_mut(&mut self) -> Vec<(String, &mut P)> {
        let mut out = Vec::new();
        let f = &mut |name, p| out.push((name, p));
        self.patch_embed.visit_mut("patch_embed", f);
        f("reg_token".into(), &mut self.reg_token);
        self.context_embed.visit_mut("context_embed", f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&format!("layers.{i}"), f);
        }
        self.head_hidden.visit_mut("head.hidden", f);
        self.head_out.visit_mut("head.out", f);
        out
    }
}

impl Params<Tensor> {
    /// Shapes for a config, with zero-filled arrays.
    fn zeros(config: &ModelConfig) -> Result<Self> {
        let lin = |i: usize, o: usize| -> Result<Linear> {
            Ok(Linear {
                weight: Tensor::zeros(vec![i, o])?,
                bias: Tensor::zeros(vec![o])?,
            })
        };
        let d = config.embed_dim;
        let layer = || -> Result<EncoderLayer> {
            Ok(EncoderLayer {
                query: lin(d, d)?,
                key: lin(d, d)?,
                value: lin(d, d)?,
                output: lin(d, d)?,
                norm1_gain: Tensor::full(vec![d], 1.0)?,
                norm1_bias: Tensor::zeros(vec![d])?,
                ffn_in: lin(d, config.ffn_hidden)?,
                ffn_out: lin(config.ffn_hidden, d)?,
                norm2_gain: Tensor::full(vec![d], 1.0)?,
                norm2_bias: Tensor::zeros(vec![d])?,
            })
        };
        Ok(Params {
            patch_embed: lin(config.patch_len(), d)?,
            reg_token: Tensor::zeros(vec![d])?,
            context_embed: lin(config.history_len * config.context_dim, d)?,
            layers: (0..config.layers).map(|_| layer()).collect::<Result<_>>()?,
            head_hidden: lin(2 * d, config.head_hidden)?,
            head_out: lin(config.head_hidden, config.num_cells())?,
        })
    }
}

/// Model weights plus the fixed positional table.
#[derive(Clone, Debug, PartialEq)]
pub struct CvitModel {
    config: ModelConfig,
    pub params: Params,
    pos_encoding: Tensor,
}

/// Standardized inputs for a batch of samples.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B, N, T·P²]`
    pub patches: Tensor,
    /// `[B, T·F]`
    pub context: Tensor,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.patches.shape()[0]
    }

    /// Standardizes history and context of each sample with `stats`.
    pub fn from_samples(samples: &[&Sample], stats: &NormStats, config: &ModelConfig) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let mut patches = Vec::with_capacity(samples.len() * config.num_patches() * config.patch_len());
        let mut context = Vec::with_capacity(samples.len() * config.history_len * config.context_dim);
        for s in samples {
            let expected = [config.history_len, config.rows, config.cols];
            if s.history.shape() != expected {
                return Err(Error::ShapeMismatch {
                    op: "batch history",
                    lhs: s.history.shape().to_vec(),
                    rhs: expected.to_vec(),
                });
            }
            let std_hist = Tensor::new(expected.to_vec(), apply_norm(s.history.data(), &stats.risk))?;
            patches.extend(patchify(&std_hist, config.patch_size)?.into_data());
            if s.context.len() != config.history_len {
                return Err(Error::Data(format!("sample has {} context rows, expected {}", s.context.len(), config.history_len)));
            }
            let enc = encode_rows(&s.context, stats)?;
            if enc.len() != config.history_len * config.context_dim {
                return Err(Error::Data(format!("context width {} does not match model context_dim {}", enc.len() / config.history_len, config.context_dim)));
            }
            context.extend(enc);
        }
        let b = samples.len();
        Ok(Self {
            patches: Tensor::new(vec![b, config.num_patches(), config.patch_len()], patches)?,
            context: Tensor::new(vec![b, config.history_len * config.context_dim], context)?,
        })
    }
}

/// Handles produced by one forward pass.
pub struct ForwardTrace {
    /// `[B, I, J]`, standardized scale.
    pub prediction: Var,
    /// Per layer, `[B, heads, S, S]`.
    pub attention: Vec<Var>,
    /// Encoder output at the regression token, `[B, D]`.
    pub token_output: Var,
}

fn linear(tape: &mut Tape, x: Var, l: &Linear<Var>) -> Result<Var> {
    let h = tape.matmul(x, l.weight)?;
    tape.add(h, l.bias)
}

/// Scaled dot-product attention over the last two axes:
/// `softmax(Q Kᵀ / √d_k) V`. Returns the output and the attention weights.
pub fn attention(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let rank = tape.shape(k).len();
    if rank < 2 {
        return Err(Error::InvalidShape {
            shape: tape.shape(k).to_vec(),
            reason: "attention needs [.., S, d_k] inputs".into(),
        });
    }
    let d_k = tape.shape(q)[rank - 1];
    let mut perm: Vec<usize> = (0..rank).collect();
    perm.swap(rank - 2, rank - 1);
    let kt = tape.permute(k, &perm)?;
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (d_k as f64).sqrt());
    let weights = tape.softmax(scaled, rank - 1)?;
    let out = tape.matmul(weights, v)?;
    Ok((out, weights))
}

fn multi_head_attention(tape: &mut Tape, x: Var, layer: &EncoderLayer<Var>, heads: usize) -> Result<(Var, Var)> {
    let shape = tape.shape(x).to_vec();
    let (b, s, d) = (shape[0], shape[1], shape[2]);
    let dk = d / heads;
    let mut split = |l: &Linear<Var>| -> Result<Var> {
        let h = linear(tape, x, l)?;
        let h = tape.reshape(h, vec![b, s, heads, dk])?;
        tape.permute(h, &[0, 2, 1, 3])
    };
    let q = split(&layer.query)?;
    let k = split(&layer.key)?;
    let v = split(&layer.value)?;
    let (ctx, weights) = attention(tape, q, k, v)?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, vec![b, s, d])?;
    Ok((linear(tape, ctx, &layer.output)?, weights))
}

impl CvitModel {
    /// Random initialization: linear weights and biases uniform in
    /// `±1/√fan_in`, regression token zero, layer-norm gains one and biases zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let problems = config.validate();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let mut params = Params::zeros(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // each linear's weight is visited right before its bias
        let mut fan_in = 0usize;
        for (name, t) in params.named_mut() {
            if name.contains(".norm") || name == "reg_token" {
                continue;
            }
            if name.ends_with(".weight") {
                fan_in = t.shape()[0];
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        let pos_encoding = positional_encoding(config.seq_len(), config.embed_dim)?;
        Ok(Self {
            config,
            params,
            pos_encoding,
        })
    }

    /// Rebuilds a model from stored parameter arrays.
    pub fn from_params(config: ModelConfig, params: Params) -> Result<Self> {
        let problems = config.validate();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let reference = Params::zeros(&config)?;
        if reference.layers.len() != params.layers.len() {
            return Err(Error::Data(format!(
                "{} encoder layers stored, config expects {}",
                params.layers.len(),
                reference.layers.len()
            )));
        }
        for ((name, want), (_, got)) in reference.named().iter().zip(params.named()) {
            if want.shape() != got.shape() {
                return Err(Error::Data(format!(
                    "parameter {name} has shape {:?}, config expects {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        let pos_encoding = positional_encoding(config.seq_len(), config.embed_dim)?;
        Ok(Self {
            config,
            params,
            pos_encoding,
        })
    }

    /// Zero-valued parameter set with this config's shapes.
    pub fn empty_params(config: &ModelConfig) -> Result<Params> {
        Params::zeros(config)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn pos_encoding(&self) -> &Tensor {
        &self.pos_encoding
    }

    /// Number of trainable scalars; the positional table is not counted.
    pub fn param_count(&self) -> usize {
        self.params.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Places the parameters on `tape`, trainable or frozen.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Params<Var> {
        self.params.map(|t| {
            if trainable {
                tape.leaf(t.clone().with_grad())
            } else {
                tape.constant(t.clone())
            }
        })
    }

    /// Runs the network on a batch.
    pub fn forward(&self, tape: &mut Tape, params: &Params<Var>, batch: &Batch) -> Result<ForwardTrace> {
        self.forward_with_positions(tape, params, batch, &self.pos_encoding)
    }

    /// Forward pass with an explicit `[N+1, D]` positional table.
    pub fn forward_with_positions(&self, tape: &mut Tape, params: &Params<Var>, batch: &Batch, positions: &Tensor) -> Result<ForwardTrace> {
        let c = &self.config;
        let (b, d) = (batch.size(), c.embed_dim);
        let expected = [b, c.num_patches(), c.patch_len()];
        if batch.patches.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "forward patches",
                lhs: batch.patches.shape().to_vec(),
                rhs: expected.to_vec(),
            });
        }
        if batch.context.shape() != [b, c.history_len * c.context_dim] {
            return Err(Error::ShapeMismatch {
                op: "forward context",
                lhs: batch.context.shape().to_vec(),
                rhs: vec![b, c.history_len * c.context_dim],
            });
        }
        if positions.shape() != [c.seq_len(), d] {
            return Err(Error::ShapeMismatch {
                op: "forward positions",
                lhs: positions.shape().to_vec(),
                rhs: vec![c.seq_len(), d],
            });
        }

        let patches = tape.constant(batch.patches.clone());
        let embedded = linear(tape, patches, &params.patch_embed)?;
        let token = tape.reshape(params.reg_token, vec![1, 1, d])?;
        let token = tape.broadcast_to(token, vec![b, 1, d])?;
        let seq = tape.concat(&[token, embedded], 1)?;
        let pe = tape.constant(positions.clone());
        let mut x = tape.add(seq, pe)?;

        let mut attention = Vec::with_capacity(c.layers);
        for layer in &params.layers {
            let (attn, weights) = multi_head_attention(tape, x, layer, c.heads)?;
            attention.push(weights);
            let res = tape.add(x, attn)?;
            x = tape.layer_norm(res, layer.norm1_gain, layer.norm1_bias, LAYER_NORM_EPS)?;
            let h = linear(tape, x, &layer.ffn_in)?;
            let h = tape.relu(h);
            let h = linear(tape, h, &layer.ffn_out)?;
            let res = tape.add(x, h)?;
            x = tape.layer_norm(res, layer.norm2_gain, layer.norm2_bias, LAYER_NORM_EPS)?;
        }

        let token_out = tape.slice(x, 1, 0, 1)?;
        let token_out = tape.reshape(token_out, vec![b, d])?;
        let ctx = tape.constant(batch.context.clone());
        let ctx = linear(tape, ctx, &params.context_embed)?;
        let fused = tape.concat(&[token_out, ctx], 1)?;
        let h = linear(tape, fused, &params.head_hidden)?;
        let h = tape.relu(h);
        let out = linear(tape, h, &params.head_out)?;
        let prediction = tape.reshape(out, vec![b, c.rows, c.cols])?;
        Ok(ForwardTrace {
            prediction,
            attention,
            token_output: token_out,
        })
    }

    /// Standardized `[I, J]` prediction for each sample, evaluated one sample
    /// at a time without gradient tracking.
    pub fn predict(&self, samples: &[&Sample], stats: &NormStats) -> Result<Vec<Tensor>> {
        samples
            .iter()
            .map(|s| {
                let batch = Batch::from_samples(&[*s], stats, &self.config)?;
                let mut tape = Tape::new();
                let params = self.bind(&mut tape, false);
                let trace = self.forward(&mut tape, &params, &batch)?;
                tape.value(trace.prediction).reshape(vec![self.config.rows, self.config.cols])
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            rows: 10,
            cols: 10,
            embed_dim: 16,
            heads: 2,
            layers: 2,
            ffn_hidden: 64,
            head_hidden: 32,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn default_patch_geometry() {
        let c = ModelConfig::default();
        assert_eq!(c.num_patches(), 16);
        assert_eq!(c.patch_len(), 175);
        assert_eq!(c.head_dim(), 8);
    }

    #[test]
    fn patchify_single_patch_is_flat_input() {
        let img = Tensor::new(vec![2, 3, 3], (0..18).map(f64::from).collect()).unwrap();
        let p = patchify(&img, 3).unwrap();
        assert_eq!(p.shape(), &[1, 18]);
        assert_eq!(p.data(), img.data());
        assert!(patchify(&img, 2).is_err());
    }

    #[test]
    fn impulse_lands_in_expected_patch() {
        let mut img = Tensor::zeros(vec![7, 20, 20]).unwrap();
        img.data_mut()[2 * 400 + 7 * 20 + 12] = 1.0;
        let p = patchify(&img, 5).unwrap();
        for n in 0..16 {
            let s: f64 = p.data()[n * 175..(n + 1) * 175].iter().sum();
            assert_eq!(s, if n == 6 { 1.0 } else { 0.0 });
        }
        // channel 2, row 2 within patch, col 2 within patch
        assert_eq!(p.at(&[6, 2 * 25 + 2 * 5 + 2]), 1.0);
    }

    #[test]
    fn positional_rows() {
        let pe = positional_encoding(17, 64).unwrap();
        for k in 0..32 {
            assert_eq!(pe.at(&[0, 2 * k]), 0.0);
            assert_eq!(pe.at(&[0, 2 * k + 1]), 1.0);
        }
        assert!((pe.at(&[1, 0]) - 0.841471).abs() < 1e-6);
        assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(positional_encoding(4, 3).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = ModelConfig {
            embed_dim: 30,
            heads: 8,
            patch_size: 3,
            ..ModelConfig::default()
        };
        assert_eq!(bad.validate().len(), 2);
        assert!(CvitModel::new(bad, 0).is_err());
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let m = CvitModel::new(tiny(), 3).unwrap();
        for (name, t) in m.params.named() {
            if name == "reg_token" {
                assert!(t.data().iter().all(|&v| v == 0.0));
            } else if name.contains(".norm") && name.ends_with("gain") {
                assert!(t.data().iter().all(|&v| v == 1.0));
            } else if name.contains(".norm") {
                assert!(t.data().iter().all(|&v| v == 0.0));
            }
        }
        let w = &m.params.patch_embed.weight;
        let bound = 1.0 / (175f64).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
        assert!(m.params.patch_embed.bias.data().iter().all(|v| v.abs() <= bound));
        assert!(m.params.patch_embed.bias.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn names_are_unique_and_ordered_consistently() {
        let mut m = CvitModel::new(tiny(), 0).unwrap();
        let names: Vec<String> = m.params.named().into_iter().map(|(n, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        let names_mut: Vec<String> = m.params.named_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, names_mut);
    }
}
