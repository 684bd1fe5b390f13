#![allow(dead_code)]

use cvit::model::{Batch, CvitModel, ModelConfig};
use cvit::tensor::{Tape, Tensor};
use cvit::train::{loss_and_grads, weighted_mse, LossWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 10×10 grid, P=5, D=16, 2 layers, 2 heads, FFN 4D.
pub fn reduced_config() -> ModelConfig {
    ModelConfig {
        rows: 10,
        cols: 10,
        patch_size: 5,
        embed_dim: 16,
        heads: 2,
        layers: 2,
        ffn_hidden: 64,
        ..ModelConfig::default()
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Random standardized inputs plus a raw target hitting every weight band.
pub fn random_batch(config: &ModelConfig, b: usize, seed: u64) -> (Batch, Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = Batch {
        patches: random_tensor(&mut rng, vec![b, config.num_patches(), config.patch_len()], 1.0),
        context: random_tensor(&mut rng, vec![b, config.history_len * config.context_dim], 1.0),
    };
    let levels = [0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 5.0];
    let cells = b * config.num_cells();
    let raw: Vec<f64> = (0..cells).map(|_| levels[rng.random_range(0..levels.len())]).collect();
    let target = raw.iter().map(|r| (r - 0.4) / 1.1).collect();
    let shape = vec![b, config.rows, config.cols];
    (batch, Tensor::new(shape.clone(), target).unwrap(), Tensor::new(shape, raw).unwrap())
}

pub fn loss_value(model: &CvitModel, batch: &Batch, target: &Tensor, raw: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, false);
    let trace = model.forward(&mut tape, &params, batch).unwrap();
    let loss = weighted_mse(&mut tape, trace.prediction, target, raw, &LossWeights::default()).unwrap();
    tape.value(loss).item().unwrap()
}

/// Worst relative error per parameter array between autodiff and central
/// differences, `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(model: &CvitModel, batch: &Batch, target: &Tensor, raw: &Tensor, h: f64, floor: f64) -> Vec<(String, f64)> {
    let (_, grads) = loss_and_grads(model, batch, target, raw, &LossWeights::default()).unwrap();
    let mut probe = model.clone();
    let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::new();
    for (k, name) in names.into_iter().enumerate() {
        let len = grads[k].len();
        let mut worst: f64 = 0.0;
        for i in 0..len {
            let orig = probe.params.named_mut()[k].1.data()[i];
            probe.params.named_mut()[k].1.data_mut()[i] = orig + h;
            let up = loss_value(&probe, batch, target, raw);
            probe.params.named_mut()[k].1.data_mut()[i] = orig - h;
            let down = loss_value(&probe, batch, target, raw);
            probe.params.named_mut()[k].1.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grads[k][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
        out.push((name, worst));
    }
    out
}

/// Sinusoidal table entry evaluated straight from its definition.
pub fn pe_direct(a: usize, i: usize, d: usize) -> f64 {
    let k2 = (i - i % 2) as f64;
    let angle = a as f64 / 10000f64.powf(k2 / d as f64);
    if i.is_multiple_of(2) {
        angle.sin()
    } else {
        angle.cos()
    }
}

/// Parameter count summed by hand from the layer shapes.
pub fn closed_form_param_count(c: &ModelConfig) -> usize {
    let d = c.embed_dim;
    let patch_embed = c.history_len * c.patch_size * c.patch_size * d + d;
    let reg_token = d;
    let context = c.history_len * c.context_dim * d + d;
    let attn = 4 * (d * d + d);
    let norms = 2 * 2 * d;
    let ffn = d * c.ffn_hidden + c.ffn_hidden + c.ffn_hidden * d + d;
    let head = 2 * d * c.head_hidden + c.head_hidden + c.head_hidden * c.rows * c.cols + c.rows * c.cols;
    patch_embed + reg_token + context + c.layers * (attn + norms + ffn) + head
}

pub fn rmse_oracle(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for s in 0..preds.len() {
        for c in 0..preds[s].len() {
            sum += (preds[s][c] - targets[s][c]).powi(2);
            n += 1.0;
        }
    }
    (sum / n).sqrt()
}

/// Position of `cell` in the ranking: cells with a larger prediction, or an
/// equal one at a lower index, come first.
fn rank_of(pred: &[f64], cell: usize) -> usize {
    (0..pred.len())
        .filter(|&o| pred[o] > pred[cell] || (pred[o] == pred[cell] && o < cell))
        .count()
}

pub fn recall_oracle(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Option<f64> {
    let mut total = 0.0;
    let mut used = 0;
    for (p, t) in preds.iter().zip(targets) {
        let positives: Vec<usize> = (0..t.len()).filter(|&c| t[c] > 0.0).collect();
        if positives.is_empty() {
            continue;
        }
        let k = positives.len();
        let hits = positives.iter().filter(|&&c| rank_of(p, c) < k).count();
        total += hits as f64 / k as f64;
        used += 1;
    }
    (used > 0).then(|| total / used as f64)
}

pub fn map_oracle(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Option<f64> {
    let mut total = 0.0;
    let mut used = 0;
    for (p, t) in preds.iter().zip(targets) {
        let positives: Vec<usize> = (0..t.len()).filter(|&c| t[c] > 0.0).collect();
        if positives.is_empty() {
            continue;
        }
        let mut ap = 0.0;
        for &c in &positives {
            let j = rank_of(p, c) + 1;
            let hits_up_to_j = positives.iter().filter(|&&o| rank_of(p, o) < j).count();
            ap += hits_up_to_j as f64 / j as f64;
        }
        total += ap / positives.len() as f64;
        used += 1;
    }
    (used > 0).then(|| total / used as f64)
}

/// Random 4×4 prediction/target sets. Targets are sparse non-negative risk
/// values; predictions sometimes repeat to exercise tie-breaking.
pub fn random_metric_case(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let samples = rng.random_range(1..5);
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..samples {
        let coarse = rng.random_bool(0.3);
        preds.push(
            (0..16)
                .map(|_| if coarse { rng.random_range(0..3) as f64 } else { rng.random_range(-1.0..4.0) })
                .collect(),
        );
        targets.push(
            (0..16)
                .map(|_| if rng.random_bool(0.25) { rng.random_range(1..6) as f64 } else { 0.0 })
                .collect(),
        );
    }
    (preds, targets)
}

/// `n` accident records scattered over `grid` and the first `hours` hours of
/// `timeline`, with random severities.
pub fn random_records(rng: &mut ChaCha8Rng, n: usize, grid: &cvit::grid::GridSpec, timeline: &cvit::grid::Timeline) -> Vec<cvit::grid::AccidentRecord> {
    use cvit::grid::{AccidentRecord, Severity};
    (0..n)
        .map(|_| AccidentRecord {
            timestamp: timeline.start + chrono::Duration::seconds(rng.random_range(0..timeline.hours as i64 * 3600)),
            latitude: rng.random_range(grid.min_lat..grid.max_lat),
            longitude: rng.random_range(grid.min_lon..grid.max_lon),
            severity: Severity::ALL[rng.random_range(0..3)],
        })
        .collect()
}
