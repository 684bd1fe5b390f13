//! The whole workflow through the library: generate data, train briefly,
//! evaluate on the test split and predict one hour. Mirrors the `cvit`
//! subcommands.
//!
//!     cargo run --release --example end_to_end -- [work_dir] [epochs]

use std::path::PathBuf;

use cvit::config::{DataPaths, RunConfig};
use cvit::pipeline::{gen_synth, run_eval, run_predict, run_train, EvalOptions, SplitName};

fn main() -> cvit::Result<()> {
    let mut args = std::env::args().skip(1);
    let work: PathBuf = args.next().unwrap_or_else(|| "cvit_run".into()).into();
    let epochs = args.next().map_or(5, |e| e.parse().expect("epochs"));
    let work = std::path::absolute(&work).map_err(|e| cvit::Error::Io { path: work.clone(), source: e })?;

    let mut config = RunConfig {
        output_dir: work.join("out"),
        data: DataPaths::in_dir(&work.join("data")),
        ..RunConfig::default()
    };
    config.train.epochs = epochs;

    let s = gen_synth(&config.synth_config(), &work.join("data"))?;
    println!("gen-synth: {} accidents, {} hours", s.accidents, s.context);

    let t = run_train(&config, |e| println!("  epoch {:3} loss {:.5} val rmse {:.4}", e.epoch, e.train_loss, e.val_rmse))?;
    println!("train: param_count {}, best epoch {} (val rmse {:.4})", t.param_count, t.best_epoch, t.best.val_rmse);

    for rush_hours in [false, true] {
        let options = EvalOptions {
            rush_hours,
            ..EvalOptions::new(SplitName::Test)
        };
        let r = run_eval(&t.checkpoint, &options)?.report;
        println!("eval {}: {}", r.filter, r.csv_row());
    }

    let hour = 1344;
    let p = run_predict(&t.checkpoint, hour, None, None)?;
    let peak = p.map.iter().cloned().fold(f64::MIN, f64::max);
    println!("predict hour {hour}: peak cell risk {peak:.3}, written to {}", p.path.display());
    Ok(())
}
