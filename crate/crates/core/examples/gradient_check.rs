//! Compares autodiff gradients of the weighted MSE with central differences
//! on a small model, one line per parameter array.
//!
//!     cargo run --release --example gradient_check

use cvit::model::{Batch, CvitModel, ModelConfig};
use cvit::tensor::{Tape, Tensor};
use cvit::train::{loss_and_grads, weighted_mse, LossWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn loss(model: &CvitModel, batch: &Batch, target: &Tensor, raw: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, false);
    let trace = model.forward(&mut tape, &params, batch).unwrap();
    let l = weighted_mse(&mut tape, trace.prediction, target, raw, &LossWeights::default()).unwrap();
    tape.value(l).item().unwrap()
}

fn main() -> cvit::Result<()> {
    let config = ModelConfig {
        rows: 10,
        cols: 10,
        embed_dim: 16,
        heads: 2,
        layers: 2,
        ffn_hidden: 64,
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut uniform = |shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let batch = Batch {
        patches: uniform(vec![2, config.num_patches(), config.patch_len()])?,
        context: uniform(vec![2, config.history_len * config.context_dim])?,
    };
    let raw = Tensor::new(vec![2, 10, 10], (0..200).map(|i| [0.0, 0.0, 1.0, 2.0, 4.0][i % 5]).collect())?;
    let target = Tensor::new(vec![2, 10, 10], raw.data().iter().map(|r| (r - 1.4) / 1.5).collect())?;

    let mut model = CvitModel::new(config, 7)?;
    println!("{} parameters", model.param_count());
    let (value, grads) = loss_and_grads(&model, &batch, &target, &raw, &LossWeights::default())?;
    println!("loss {value:.6}");
    let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
    let mut worst_all: f64 = 0.0;
    for (k, name) in names.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..grads[k].len() {
            let orig = model.params.named()[k].1.data()[i];
            model.params.named_mut()[k].1.data_mut()[i] = orig + H;
            let up = loss(&model, &batch, &target, &raw);
            model.params.named_mut()[k].1.data_mut()[i] = orig - H;
            let down = loss(&model, &batch, &target, &raw);
            model.params.named_mut()[k].1.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = grads[k][i];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
        worst_all = worst_all.max(worst);
        println!("{name:32} {:6} values  max rel err {worst:.2e}", grads[k].len());
    }
    println!("overall max rel err {worst_all:.2e}");
    Ok(())
}
