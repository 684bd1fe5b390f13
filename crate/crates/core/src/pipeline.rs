//! End-to-end commands: synthetic generation, training, evaluation and
//! prediction. The `cvit` binary is a thin wrapper over these functions.
//!
//! Files written:
//!
//! | command     | files                                                         |
//! |-------------|---------------------------------------------------------------|
//! | `gen-synth` | `accidents.csv`, `context.csv`, `trips.csv`                   |
//! | `train`     | `checkpoint.json`, `norm_stats.json`, `train_log.csv`         |
//! | `eval`      | `eval_<split>_<filter>.txt` and `.csv`, optional predictions  |
//! | `predict`   | `predict_<hour>.csv`: `rows` lines of `cols` raw-scale values |
//!
//! Prediction CSVs list grid row 0 (the southern edge) first and have no
//! header. Values use shortest round-trip formatting.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{DataPaths, RunConfig};
use crate::context::{assemble_context, flows_from_trips, read_context, read_trips, timeline_of, write_context, write_trips, ContextRow, Trip, WeatherObservation};
use crate::error::{Error, Result};
use crate::grid::{bin_records, build_samples, chronological_split, fit_norm, history_window, read_accidents, write_accidents, AccidentRecord, GridSpec, LagSchedule, RiskFrame, Sample, SplitSpec, Splits, Timeline};
use crate::metrics::{is_rush_hour, EvalFilter, EvalReport};
use crate::model::CvitModel;
use crate::synth::{generate, SynthConfig};
use crate::tensor::Tensor;
use crate::train::{predict_raw, train, write_log, EpochLog};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const NORM_STATS_FILE: &str = "norm_stats.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Binned frames, context and chronological sample splits.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub grid: GridSpec,
    pub timeline: Timeline,
    pub lags: LagSchedule,
    pub frames: Vec<RiskFrame>,
    pub context: Vec<ContextRow>,
    pub splits: Splits<Sample>,
    /// Accident records dropped for lying outside the grid or timeline.
    pub dropped_records: usize,
}

impl Dataset {
    pub fn build(
        accidents: &[AccidentRecord],
        observations: &[WeatherObservation],
        trips: &[Trip],
        grid: &GridSpec,
        lags: LagSchedule,
        split: &SplitSpec,
    ) -> Result<Self> {
        let timeline = timeline_of(observations)?;
        let binned = bin_records(accidents, grid, &timeline)?;
        let flows = flows_from_trips(trips, grid, &timeline);
        let context = assemble_context(observations, &flows, &timeline)?;
        let samples = build_samples(&binned.frames, &context, grid, lags)?;
        let splits = chronological_split(samples, split)?;
        Ok(Self {
            grid: grid.clone(),
            timeline,
            lags,
            frames: binned.frames,
            context,
            splits,
            dropped_records: binned.outside_grid + binned.outside_time,
        })
    }

    /// Reads the three CSVs named in `paths`. Malformed rows are skipped and
    /// logged.
    pub fn load(paths: &DataPaths, grid: &GridSpec, lags: LagSchedule, split: &SplitSpec) -> Result<Self> {
        let accidents = read_accidents(&paths.accidents)?;
        let observations = read_context(&paths.context)?;
        let trips = read_trips(&paths.trips)?;
        for (name, skipped) in [
            ("accidents", accidents.skipped),
            ("context", observations.skipped),
            ("trips", trips.skipped),
        ] {
            if skipped > 0 {
                log::warn!("skipped {skipped} malformed {name} rows");
            }
        }
        let data = Self::build(&accidents.rows, &observations.rows, &trips.rows, grid, lags, split)?;
        if data.dropped_records > 0 {
            log::warn!("{} accident records fall outside the grid or timeline", data.dropped_records);
        }
        Ok(data)
    }

    pub fn from_config(config: &RunConfig) -> Result<Self> {
        Self::load(&config.data, &config.grid, config.lag_schedule, &config.split)
    }

    pub fn split(&self, which: SplitName) -> &[Sample] {
        match which {
            SplitName::Train => &self.splits.train,
            SplitName::Val => &self.splits.val,
            SplitName::Test => &self.splits.test,
        }
    }

    /// Sample for a target hour. Past the last frame the target is all zero.
    pub fn sample_at(&self, hour: usize) -> Result<Sample> {
        let (history, context) = history_window(&self.frames, &self.context, &self.grid, self.lags, hour)?;
        let target = match self.frames.get(hour) {
            Some(f) => Tensor::new(vec![self.grid.rows, self.grid.cols], f.values.clone())?,
            None => Tensor::zeros(vec![self.grid.rows, self.grid.cols])?,
        };
        Ok(Sample {
            history,
            context,
            target,
            target_hour: hour,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthSummary {
    pub accidents: usize,
    pub context: usize,
    pub trips: usize,
}

/// Generates a synthetic world and writes its three CSVs into `out_dir`.
pub fn gen_synth(config: &SynthConfig, out_dir: &Path) -> Result<SynthSummary> {
    let world = generate(config)?;
    create_dir(out_dir)?;
    let paths = DataPaths::in_dir(out_dir);
    write_accidents(create(&paths.accidents)?, &world.accidents)?;
    write_context(create(&paths.context)?, &world.context)?;
    write_trips(create(&paths.trips)?, &world.trips)?;
    Ok(SynthSummary {
        accidents: world.accidents.len(),
        context: world.context.len(),
        trips: world.trips.len(),
    })
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub param_count: usize,
    pub best_epoch: usize,
    pub best: EpochLog,
    pub first_epoch: EpochLog,
    pub last_epoch: EpochLog,
    pub checkpoint: PathBuf,
    pub norm_stats: PathBuf,
    pub log: PathBuf,
}

/// Trains on the configured data and writes the checkpoint, normalization
/// statistics and epoch log into the output directory.
pub fn run_train(config: &RunConfig, on_epoch: impl FnMut(&EpochLog)) -> Result<TrainSummary> {
    RunConfig::ensure_valid(config.validate_for_training())?;
    let data = Dataset::from_config(config)?;
    log::info!(
        "{} samples: {} train, {} val, {} test",
        data.splits.train.len() + data.splits.val.len() + data.splits.test.len(),
        data.splits.train.len(),
        data.splits.val.len(),
        data.splits.test.len()
    );
    let stats = fit_norm(&data.splits.train)?;
    let model = CvitModel::new(config.model.clone(), config.seed)?;
    let param_count = model.param_count();
    let outcome = train(model, &data.splits.train, &data.splits.val, &stats, &config.train_config(), on_epoch)?;

    create_dir(&config.output_dir)?;
    let checkpoint = config.output_dir.join(CHECKPOINT_FILE);
    let norm_stats = config.output_dir.join(NORM_STATS_FILE);
    let log_path = config.output_dir.join(TRAIN_LOG_FILE);
    let best = outcome.best().clone();
    let first_epoch = outcome.log[0].clone();
    let last_epoch = outcome.log[outcome.log.len() - 1].clone();
    write_log(create(&log_path)?, &outcome.log).map_err(|e| Error::io(&log_path, e))?;
    std::fs::write(&norm_stats, serde_json::to_string_pretty(&stats)?).map_err(|e| Error::io(&norm_stats, e))?;
    Checkpoint {
        model: outcome.model,
        norm_stats: stats,
        best_epoch: outcome.best_epoch,
        run: Some(config.clone()),
    }
    .save(&checkpoint)?;
    Ok(TrainSummary {
        param_count,
        best_epoch: outcome.best_epoch,
        best,
        first_epoch,
        last_epoch,
        checkpoint,
        norm_stats,
        log: log_path,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        })
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(vec![format!("unknown split {other:?}, expected train, val or test")])),
        }
    }
}

/// Picks the run config for a checkpoint: the supplied one after checking it
/// agrees with the checkpoint, otherwise the one embedded at training time.
pub fn resolve_run_config(checkpoint: &Checkpoint, supplied: Option<RunConfig>) -> Result<RunConfig> {
    let model = checkpoint.model.config();
    let Some(config) = supplied else {
        return checkpoint
            .run
            .clone()
            .ok_or_else(|| Error::Config(vec!["checkpoint has no embedded run config; pass --config".into()]));
    };
    let mut problems = config.validate();
    if config.grid.rows != model.rows || config.grid.cols != model.cols {
        problems.push(format!(
            "config grid {}x{} differs from checkpoint grid {}x{}",
            config.grid.rows, config.grid.cols, model.rows, model.cols
        ));
    }
    if let Some(trained) = &checkpoint.run {
        if trained.grid != config.grid {
            problems.push("config grid bounds differ from those the checkpoint was trained on".into());
        }
    }
    if config.model.history_len != model.history_len {
        problems.push(format!(
            "config history length {} differs from checkpoint history length {}",
            config.model.history_len, model.history_len
        ));
    }
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(Error::CheckpointMismatch(problems.join("; ")))
    }
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub split: SplitName,
    pub rush_hours: bool,
    /// Scores the split's own targets as predictions, a self-test of the
    /// evaluation path that must give RMSE 0.
    pub oracle: bool,
    /// Overrides the checkpoint's embedded run config.
    pub config: Option<RunConfig>,
    /// Where reports go; defaults to the run's output directory.
    pub out_dir: Option<PathBuf>,
    /// Also writes `target_hour` followed by the raw predicted map per line.
    pub dump_predictions: Option<PathBuf>,
}

impl EvalOptions {
    pub fn new(split: SplitName) -> Self {
        Self {
            split,
            rush_hours: false,
            oracle: false,
            config: None,
            out_dir: None,
            dump_predictions: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub report: EvalReport,
    pub text_path: PathBuf,
    pub csv_path: PathBuf,
}

fn format_row(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Scores a checkpoint on one split and writes the report.
pub fn run_eval(checkpoint_path: &Path, options: &EvalOptions) -> Result<EvalOutput> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let config = resolve_run_config(&checkpoint, options.config.clone())?;
    let data = Dataset::from_config(&config)?;
    let filter = if options.rush_hours {
        EvalFilter::RushHours
    } else {
        EvalFilter::All
    };
    let samples: Vec<&Sample> = data
        .split(options.split)
        .iter()
        .filter(|s| !options.rush_hours || is_rush_hour(data.timeline.hour_of_day(s.target_hour)))
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyInput("evaluation split"));
    }
    let targets: Vec<Vec<f64>> = samples.iter().map(|s| s.target.data().to_vec()).collect();
    let preds = if options.oracle {
        targets.clone()
    } else {
        predict_raw(&checkpoint.model, &samples, &checkpoint.norm_stats)?
    };
    let report = EvalReport::compute(&preds, &targets, filter)?;

    let out_dir = options.out_dir.clone().unwrap_or(config.output_dir.clone());
    create_dir(&out_dir)?;
    let stem = format!("{}eval_{}_{}", if options.oracle { "oracle_" } else { "" }, options.split, filter);
    let text_path = out_dir.join(format!("{stem}.txt"));
    let csv_path = out_dir.join(format!("{stem}.csv"));
    std::fs::write(&text_path, report.to_key_value()).map_err(|e| Error::io(&text_path, e))?;
    std::fs::write(&csv_path, report.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
    if let Some(path) = &options.dump_predictions {
        let mut w = create(path)?;
        for (s, p) in samples.iter().zip(&preds) {
            writeln!(w, "{},{}", s.target_hour, format_row(p)).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(EvalOutput {
        report,
        text_path,
        csv_path,
    })
}

#[derive(Clone, Debug)]
pub struct PredictOutput {
    /// Raw-scale map, row-major `[rows, cols]`.
    pub map: Vec<f64>,
    pub path: PathBuf,
}

/// Predicts the raw risk map for `hour` (an index into the data timeline) and
/// writes it as CSV.
pub fn run_predict(checkpoint_path: &Path, hour: usize, config: Option<RunConfig>, out: Option<PathBuf>) -> Result<PredictOutput> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let config = resolve_run_config(&checkpoint, config)?;
    let data = Dataset::from_config(&config)?;
    let sample = data.sample_at(hour)?;
    let map = predict_raw(&checkpoint.model, &[&sample], &checkpoint.norm_stats)?.remove(0);
    let path = match out {
        Some(p) => p,
        None => {
            create_dir(&config.output_dir)?;
            config.output_dir.join(format!("predict_{hour}.csv"))
        }
    };
    let mut w = create(&path)?;
    for row in map.chunks(config.grid.cols) {
        writeln!(w, "{}", format_row(row)).map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(PredictOutput { map, path })
}

/// Reads a prediction CSV written by [`run_predict`].
pub fn read_prediction(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(|line| {
            line.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Data(format!("{}: {e}", path.display()))))
                .collect()
        })
        .collect()
}
