//! Class-weighted MSE training with Adam.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_norm, invert_norm, NormStats, Sample};
use crate::metrics::{map_score, recall, rmse};
use crate::model::{Batch, CvitModel};
use crate::tensor::{Tape, Tensor, Var};

/// Per-cell loss weights keyed by the raw target risk: `[0,1)`, `[1,2)`,
/// `[2,3)` and `[3,∞)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub zero: f64,
    pub one: f64,
    pub two: f64,
    pub three_plus: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            zero: 0.05,
            one: 0.2,
            two: 0.25,
            three_plus: 0.5,
        }
    }
}

impl LossWeights {
    pub fn weight(&self, raw_risk: f64) -> f64 {
        if raw_risk < 1.0 {
            self.zero
        } else if raw_risk < 2.0 {
            self.one
        } else if raw_risk < 3.0 {
            self.two
        } else {
            self.three_plus
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let w = [self.zero, self.one, self.two, self.three_plus];
        if w.iter().all(|v| v.is_finite() && *v > 0.0) {
            vec![]
        } else {
            vec![format!("loss weights must be positive, got {w:?}")]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Shuffle seed. Run configs set it from their top-level seed.
    #[serde(skip)]
    pub seed: u64,
    pub loss_weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.003,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            loss_weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.epochs == 0 {
            p.push("train.epochs must be positive".into());
        }
        if self.batch_size == 0 {
            p.push("train.batch_size must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            p.push(format!("train.learning_rate must be non-negative, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            p.push(format!("adam betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.eps > 0.0) {
            p.push("adam eps must be positive".into());
        }
        p.extend(self.loss_weights.validate());
        p
    }
}

/// Per-cell class weights for a raw target map.
pub fn weight_map(raw_target: &Tensor, weights: &LossWeights) -> Tensor {
    let data = raw_target.data().iter().map(|&r| weights.weight(r)).collect();
    Tensor::new(raw_target.shape().to_vec(), data).expect("same shape")
}

/// `mean(w(raw) · (pred − target)²)` recorded on the tape. With a batch
/// dimension this is the mean over samples of each sample's cell mean.
pub fn weighted_mse(tape: &mut Tape, pred: Var, target: &Tensor, raw_target: &Tensor, weights: &LossWeights) -> Result<Var> {
    if tape.shape(pred) != target.shape() || target.shape() != raw_target.shape() {
        return Err(Error::ShapeMismatch {
            op: "weighted_mse",
            lhs: tape.shape(pred).to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    let t = tape.constant(target.clone());
    let w = tape.constant(weight_map(raw_target, weights));
    let diff = tape.sub(pred, t)?;
    let sq = tape.mul(diff, diff)?;
    let weighted = tape.mul(sq, w)?;
    Ok(tape.mean(weighted))
}

/// Adam moment estimates for a list of parameter arrays.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Vec<f64>> = params.into_iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Vec<f64>], state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Data(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let g = &grads[i];
        if g.len() != p.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: vec![g.len()],
            });
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

/// Standardized inputs and targets for one sample, computed once.
struct Prepared {
    batch: Batch,
    target: Vec<f64>,
    raw_target: Vec<f64>,
}

fn concat_prepared(items: &[&Prepared], rows: usize, cols: usize) -> Result<(Batch, Tensor, Tensor)> {
    let b = items.len();
    let ps = items[0].batch.patches.shape().to_vec();
    let cs = items[0].batch.context.shape().to_vec();
    let mut patches = Vec::with_capacity(b * items[0].batch.patches.len());
    let mut context = Vec::with_capacity(b * items[0].batch.context.len());
    let mut target = Vec::with_capacity(b * rows * cols);
    let mut raw = Vec::with_capacity(b * rows * cols);
    for p in items {
        patches.extend_from_slice(p.batch.patches.data());
        context.extend_from_slice(p.batch.context.data());
        target.extend_from_slice(&p.target);
        raw.extend_from_slice(&p.raw_target);
    }
    Ok((
        Batch {
            patches: Tensor::new(vec![b, ps[1], ps[2]], patches)?,
            context: Tensor::new(vec![b, cs[1]], context)?,
        },
        Tensor::new(vec![b, rows, cols], target)?,
        Tensor::new(vec![b, rows, cols], raw)?,
    ))
}

/// Loss and parameter gradients for one batch.
pub fn loss_and_grads(model: &CvitModel, batch: &Batch, target: &Tensor, raw_target: &Tensor, weights: &LossWeights) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, true);
    let trace = model.forward(&mut tape, &params, batch)?;
    let loss = weighted_mse(&mut tape, trace.prediction, target, raw_target, weights)?;
    let value = tape.value(loss).item()?;
    tape.backward(loss)?;
    let grads = params
        .named()
        .into_iter()
        .map(|(_, &v)| tape.take_grad(v).expect("trainable leaf"))
        .collect();
    Ok((value, grads))
}

/// Raw-scale predictions for each sample.
pub fn predict_raw(model: &CvitModel, samples: &[&Sample], stats: &NormStats) -> Result<Vec<Vec<f64>>> {
    Ok(model
        .predict(samples, stats)?
        .into_iter()
        .map(|t| invert_norm(t.data(), &stats.risk))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
    pub val_recall: f64,
    pub val_map: f64,
    pub seconds: f64,
}

/// Wall-clock time is left out of the file so that logs are reproducible.
pub const LOG_HEADER: &str = "epoch,train_loss,val_rmse,val_recall,val_map";

pub fn write_log<W: Write>(mut out: W, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for e in log {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.epoch, e.train_loss, e.val_rmse, e.val_recall, e.val_map
        )?;
    }
    Ok(())
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation RMSE.
    pub model: CvitModel,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochLog {
        &self.log[self.best_epoch - 1]
    }
}

/// Trains for `config.epochs` epochs over seeded shuffled mini-batches and
/// returns the parameters with the best validation RMSE.
pub fn train(
    mut model: CvitModel,
    train_samples: &[Sample],
    val_samples: &[Sample],
    stats: &NormStats,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if train_samples.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    if val_samples.is_empty() {
        return Err(Error::EmptyInput("validation split"));
    }
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mc = model.config().clone();
    let prepared: Vec<Prepared> = train_samples
        .iter()
        .map(|s| {
            Ok(Prepared {
                batch: Batch::from_samples(&[s], stats, &mc)?,
                target: apply_norm(s.target.data(), &stats.risk),
                raw_target: s.target.data().to_vec(),
            })
        })
        .collect::<Result<_>>()?;
    let val_refs: Vec<&Sample> = val_samples.iter().collect();
    let val_targets: Vec<&[f64]> = val_samples.iter().map(|s| s.target.data()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(model.params.named().into_iter().map(|(_, t)| t));
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, CvitModel)> = None;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let items: Vec<&Prepared> = chunk.iter().map(|&i| &prepared[i]).collect();
            let (batch, target, raw) = concat_prepared(&items, mc.rows, mc.cols)?;
            let (loss, grads) = loss_and_grads(&model, &batch, &target, &raw, &config.loss_weights)?;
            loss_sum += loss * chunk.len() as f64;
            let mut params: Vec<&mut Tensor> = model.params.named_mut().into_iter().map(|(_, t)| t).collect();
            adam_step(&mut params, &grads, &mut adam, config)?;
        }

        let preds = predict_raw(&model, &val_refs, stats)?;
        let val_rmse = rmse(&preds.iter().map(Vec::as_slice).collect::<Vec<_>>(), &val_targets)?;
        let pred_refs: Vec<&[f64]> = preds.iter().map(Vec::as_slice).collect();
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / prepared.len() as f64,
            val_rmse,
            val_recall: recall(&pred_refs, &val_targets).unwrap_or(f64::NAN),
            val_map: map_score(&pred_refs, &val_targets).unwrap_or(f64::NAN),
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train_loss {:.6} val_rmse {:.4} val_recall {:.4} val_map {:.4} ({:.1}s)",
            entry.train_loss,
            entry.val_rmse,
            entry.val_recall,
            entry.val_map,
            entry.seconds
        );
        on_epoch(&entry);
        if best.as_ref().is_none_or(|(r, _, _)| val_rmse < *r) {
            best = Some((val_rmse, epoch, model.clone()));
        }
        log.push(entry);
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, best_epoch, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_weights() {
        let w = LossWeights::default();
        assert_eq!(w.weight(0.0), 0.05);
        assert_eq!(w.weight(1.0), 0.2);
        assert_eq!(w.weight(2.0), 0.25);
        assert_eq!(w.weight(3.0), 0.5);
        assert_eq!(w.weight(11.0), 0.5);
    }

    #[test]
    fn weighted_mse_single_cell() {
        let mut tape = Tape::new();
        let pred = tape.leaf(Tensor::new(vec![1, 1], vec![1.5]).unwrap().with_grad());
        let target = Tensor::new(vec![1, 1], vec![-0.5]).unwrap();
        let raw = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        let loss = weighted_mse(&mut tape, pred, &target, &raw, &LossWeights::default()).unwrap();
        assert!((tape.value(loss).item().unwrap() - 0.05 * 4.0).abs() < 1e-15);

        let same = tape.leaf(target.clone());
        let zero = weighted_mse(&mut tape, same, &target, &raw, &LossWeights::default()).unwrap();
        assert_eq!(tape.value(zero).item().unwrap(), 0.0);

        let wrong = Tensor::zeros(vec![2, 1]).unwrap();
        assert!(weighted_mse(&mut tape, pred, &wrong, &wrong, &LossWeights::default()).is_err());
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = Tensor::new(vec![3], vec![0.3, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut state = AdamState::new([&p]);
        let cfg = TrainConfig::default();
        for _ in 0..3 {
            adam_step(&mut [&mut p], &[vec![0.0; 3]], &mut state, &cfg).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr_against_sign() {
        let mut p = Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap();
        let mut state = AdamState::new([&p]);
        let cfg = TrainConfig::default();
        adam_step(&mut [&mut p], &[vec![2.0, -0.001, 50.0]], &mut state, &cfg).unwrap();
        for (v, g) in p.data().iter().zip([2.0f64, -0.001, 50.0]) {
            let expected = -cfg.learning_rate * g.signum();
            // m̂/(√v̂+eps) = |g|/(|g|+eps)
            assert!((v - expected).abs() < cfg.learning_rate * 1e-5, "{v} vs {expected}");
        }
    }

    #[test]
    fn adam_descends_a_parabola() {
        let mut x = Tensor::new(vec![1], vec![1.0]).unwrap();
        let mut state = AdamState::new([&x]);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut prev = 1.0;
        for _ in 0..10 {
            let g = 2.0 * x.data()[0];
            adam_step(&mut [&mut x], &[vec![g]], &mut state, &cfg).unwrap();
            let f = x.data()[0] * x.data()[0];
            assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn config_validation_lists_every_problem() {
        let bad = TrainConfig {
            epochs: 0,
            batch_size: 0,
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert_eq!(bad.validate().len(), 3);
    }
}
