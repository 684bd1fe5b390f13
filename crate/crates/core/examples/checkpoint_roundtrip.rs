//! Saves a model to a checkpoint file, loads it back and confirms every
//! parameter survives bit for bit.
//!
//!     cargo run --example checkpoint_roundtrip

use cvit::checkpoint::Checkpoint;
use cvit::grid::NormStats;
use cvit::model::{CvitModel, ModelConfig};

fn main() -> cvit::Result<()> {
    let model = CvitModel::new(ModelConfig::default(), 42)?;
    let checkpoint = Checkpoint {
        model,
        norm_stats: NormStats::IDENTITY,
        best_epoch: 0,
        run: None,
    };
    let dir = std::env::temp_dir().join("cvit_checkpoint_example");
    std::fs::create_dir_all(&dir).map_err(|e| cvit::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("checkpoint.json");
    checkpoint.save(&path)?;
    let back = Checkpoint::load(&path)?;

    let mut arrays = 0;
    let mut values = 0;
    for ((name, a), (_, b)) in checkpoint.model.params.named().into_iter().zip(back.model.params.named()) {
        let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same && a.shape() == b.shape(), "{name} changed");
        arrays += 1;
        values += a.len();
    }
    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("{arrays} arrays, {values} values, {bytes} bytes at {}: bit-exact", path.display());
    Ok(())
}
