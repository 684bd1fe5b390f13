//! Shows how a history image is cut into patches and what the positional
//! table looks like.
//!
//!     cargo run --example patch_geometry

use cvit::model::{patchify, positional_encoding, ModelConfig};
use cvit::tensor::Tensor;

fn main() -> cvit::Result<()> {
    let c = ModelConfig::default();
    println!(
        "{}x{} grid, {} channels, patch {} -> {} patches of length {}, sequence {}",
        c.rows,
        c.cols,
        c.history_len,
        c.patch_size,
        c.num_patches(),
        c.patch_len(),
        c.seq_len()
    );

    // a single hot cell in channel 2 at row 13, column 6
    let mut img = Tensor::zeros(vec![c.history_len, c.rows, c.cols])?;
    img.data_mut()[(2 * c.rows + 13) * c.cols + 6] = 1.0;
    let patches = patchify(&img, c.patch_size)?;
    for (n, p) in patches.data().chunks(c.patch_len()).enumerate() {
        if let Some(k) = p.iter().position(|v| *v != 0.0) {
            println!("impulse lands in patch {n} at offset {k}");
        }
    }

    let pe = positional_encoding(c.seq_len(), c.embed_dim)?;
    for a in [0, 1, 16] {
        let row: Vec<String> = (0..6).map(|i| format!("{:+.4}", pe.at(&[a, i]))).collect();
        println!("PE[{a:2}][0..6] = {}", row.join(" "));
    }
    Ok(())
}
