//! Trains the default model on an 8-week synthetic world and scores the
//! held-out rush hours.
//!
//!     cargo run --release --example train_synthetic -- [epochs]

use cvit::grid::{fit_norm, GridSpec, LagSchedule, SplitSpec};
use cvit::metrics::{is_rush_hour, EvalFilter, EvalReport};
use cvit::model::{CvitModel, ModelConfig};
use cvit::pipeline::Dataset;
use cvit::synth::{generate, SynthConfig};
use cvit::train::{predict_raw, train, TrainConfig};

fn main() -> cvit::Result<()> {
    let epochs = std::env::args().nth(1).map_or(50, |a| a.parse().expect("epochs"));
    let world = generate(&SynthConfig::default())?;
    let data = Dataset::build(
        &world.accidents,
        &world.context,
        &world.trips,
        &GridSpec::default(),
        LagSchedule::default(),
        &SplitSpec::default(),
    )?;
    let stats = fit_norm(&data.splits.train)?;
    let model = CvitModel::new(ModelConfig::default(), 42)?;
    println!("param_count {}", model.param_count());
    let config = TrainConfig {
        epochs,
        seed: 42,
        ..TrainConfig::default()
    };
    let outcome = train(model, &data.splits.train, &data.splits.val, &stats, &config, |e| {
        println!(
            "epoch {:3}  loss {:.5}  val rmse {:.4}  recall {:.3}  map {:.3}  {:.1}s",
            e.epoch, e.train_loss, e.val_rmse, e.val_recall, e.val_map, e.seconds
        )
    })?;

    let rush: Vec<_> = data
        .splits
        .test
        .iter()
        .filter(|s| is_rush_hour(data.timeline.hour_of_day(s.target_hour)))
        .collect();
    let preds = predict_raw(&outcome.model, &rush, &stats)?;
    let targets: Vec<&[f64]> = rush.iter().map(|s| s.target.data()).collect();
    let preds: Vec<&[f64]> = preds.iter().map(Vec::as_slice).collect();
    let report = EvalReport::compute(&preds, &targets, EvalFilter::RushHours)?;
    println!("best epoch {}", outcome.best_epoch);
    print!("{}", report.to_key_value());
    Ok(())
}
