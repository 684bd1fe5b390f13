//! Next-hour traffic-accident risk forecasting with a contextual vision
//! transformer.
//!
//! Accident records are binned into hourly severity-weighted risk maps over a
//! city grid. Seven lagged maps form a history image that is patched, embedded
//! and run through a transformer encoder; the encoder's regression token is
//! joined with an embedding of the hourly context (calendar, weather, taxi
//! flows) and decoded into the next hour's map.
//!
//! ## Examples
//!
//! ```text
//! cargo run --example synthetic_world       # generate and summarise a synthetic city
//! cargo run --example patch_geometry        # patching and positional table
//! cargo run --example ranking_metrics       # RMSE, Recall and MAP on toy maps
//! cargo run --example checkpoint_roundtrip  # bit-exact save and load
//! cargo run --release --example gradient_check     # autodiff vs finite differences
//! cargo run --release --example attention_inspect  # regression-token attention per layer
//! cargo run --release --example train_synthetic    # 50-epoch training run
//! cargo run --release --example end_to_end         # gen-synth, train, eval, predict
//! ```
//!
//! The `cvit` binary exposes the same workflow as subcommands.

pub mod checkpoint;
pub mod config;
pub mod context;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
