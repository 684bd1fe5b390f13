//! RMSE, Recall and MAP on a few hand-made 4×4 maps.
//!
//!     cargo run --example ranking_metrics

use cvit::metrics::{rank_cells, EvalFilter, EvalReport};

fn main() -> cvit::Result<()> {
    #[rustfmt::skip]
    let target = vec![
        0.0, 0.0, 3.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        2.0, 0.0, 0.0, 0.0,
    ];
    #[rustfmt::skip]
    let good = vec![
        0.1, 0.0, 2.5, 0.2,
        0.0, 0.9, 0.1, 0.0,
        0.0, 0.3, 0.0, 0.0,
        1.7, 0.0, 0.0, 0.1,
    ];
    // same cells as `good` but the two middle ranks swapped with empty cells
    #[rustfmt::skip]
    let shuffled = vec![
        0.1, 0.0, 2.5, 0.2,
        0.0, 0.1, 0.9, 0.0,
        0.0, 0.3, 0.0, 0.0,
        0.2, 1.7, 0.0, 0.1,
    ];
    let flat = vec![0.0; 16];

    println!("{}", EvalReport::CSV_HEADER);
    for (name, pred) in [("good", &good), ("shuffled", &shuffled), ("flat", &flat)] {
        let report = EvalReport::compute(&[pred.as_slice()], &[target.as_slice()], EvalFilter::All)?;
        println!("{}  # {name}, top cells {:?}", report.csv_row(), &rank_cells(pred)[..3]);
    }
    Ok(())
}
