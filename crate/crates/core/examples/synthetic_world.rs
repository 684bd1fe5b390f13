//! Generates the default synthetic world, writes its CSVs and summarises the
//! binned risk per hotspot.
//!
//!     cargo run --example synthetic_world -- [out_dir]

use std::path::PathBuf;

use cvit::grid::{bin_records, risk_score};
use cvit::pipeline::gen_synth;
use cvit::synth::{generate, SynthConfig};

fn main() -> cvit::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "synthetic_data".into()).into();
    let config = SynthConfig::default();
    let summary = gen_synth(&config, &out)?;
    println!(
        "wrote {} accidents, {} context rows, {} trips to {}",
        summary.accidents,
        summary.context,
        summary.trips,
        out.display()
    );

    let world = generate(&config)?;
    let timeline = config.timeline();
    let binned = bin_records(&world.accidents, &config.grid, &timeline)?;
    let total: f64 = world.accidents.iter().map(|a| risk_score(a.severity)).sum();
    println!("{} hours, total risk {total}", timeline.hours);
    println!("{:>4} {:>4} {:>10} {:>12} {:>12}", "row", "col", "base_rate", "mean count", "mean risk");
    for spot in &config.hotspots {
        let cell = spot.row * config.grid.cols + spot.col;
        let risk: f64 = binned.frames.iter().map(|f| f.values[cell]).sum();
        let count = world
            .accidents
            .iter()
            .filter(|a| config.grid.cell_of(a.latitude, a.longitude) == Some((spot.row, spot.col)))
            .count();
        println!(
            "{:>4} {:>4} {:>10.2} {:>12.3} {:>12.3}",
            spot.row,
            spot.col,
            spot.base_rate,
            count as f64 / timeline.hours as f64,
            risk / timeline.hours as f64
        );
    }
    Ok(())
}
