//! Runs a freshly initialised model on one synthetic sample and prints how
//! the regression token spreads its attention over the patches.
//!
//!     cargo run --release --example attention_inspect

use cvit::grid::{fit_norm, GridSpec, LagSchedule, SplitSpec};
use cvit::model::{Batch, CvitModel, ModelConfig};
use cvit::pipeline::Dataset;
use cvit::synth::{generate, SynthConfig};
use cvit::tensor::Tape;

fn main() -> cvit::Result<()> {
    let world = generate(&SynthConfig::default())?;
    let data = Dataset::build(&world.accidents, &world.context, &world.trips, &GridSpec::default(), LagSchedule::default(), &SplitSpec::default())?;
    let stats = fit_norm(&data.splits.train)?;
    let config = ModelConfig::default();
    let model = CvitModel::new(config.clone(), 42)?;
    let sample = &data.splits.test[0];
    let batch = Batch::from_samples(&[sample], &stats, &config)?;

    let mut tape = Tape::new();
    let params = model.bind(&mut tape, false);
    let trace = model.forward(&mut tape, &params, &batch)?;
    let s = config.seq_len();
    let side = config.cols / config.patch_size;
    println!("target hour {} ({}:00)", sample.target_hour, data.timeline.hour_of_day(sample.target_hour));
    for (l, w) in trace.attention.iter().enumerate() {
        let w = tape.value(*w);
        let worst = w.data().chunks(s).map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
        // regression token row, averaged over heads
        let mut token = vec![0.0; s];
        for h in 0..config.heads {
            for (j, t) in token.iter_mut().enumerate() {
                *t += w.at(&[0, h, 0, j]) / config.heads as f64;
            }
        }
        println!("layer {l}: self {:.3}, max row-sum deviation {worst:.1e}", token[0]);
        for r in 0..side {
            let row: Vec<String> = (0..side).map(|c| format!("{:.3}", token[1 + r * side + c])).collect();
            println!("    {}", row.join(" "));
        }
    }
    Ok(())
}
