//! Accident records, the city grid, hourly risk frames and model samples.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::context::ContextRow;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of lagged risk maps stacked into a sample's history.
pub const HISTORY_LEN: usize = 7;

const HOURS_PER_WEEK: usize = 168;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Minor,
    Injured,
    Fatal,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Minor, Severity::Injured, Severity::Fatal];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Minor => "minor",
            Severity::Injured => "injured",
            Severity::Fatal => "fatal",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "minor" => Ok(Severity::Minor),
            "injured" => Ok(Severity::Injured),
            "fatal" => Ok(Severity::Fatal),
            other => Err(Error::Data(format!("unknown severity {other:?}"))),
        }
    }
}

/// Risk contributed by one accident: minor 1, injured 2, fatal 3.
pub fn risk_score(severity: Severity) -> f64 {
    match severity {
        Severity::Minor => 1.0,
        Severity::Injured => 2.0,
        Severity::Fatal => 3.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccidentRecord {
    pub timestamp: NaiveDateTime,
    pub latitude: f64,
    pub longitude: f64,
    pub severity: Severity,
}

/// Bounding box partitioned into `rows × cols` equal cells.
///
/// Row 0 is the southernmost band and column 0 the westernmost. Cells are
/// half-open, so a point on an interior edge belongs to the higher-index cell
/// and points on the north or east boundary fall outside the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        // roughly 40 km × 40 km around lower Manhattan, 2 km cells
        Self {
            min_lat: 40.5,
            max_lat: 40.86,
            min_lon: -74.25,
            max_lon: -73.78,
            rows: 20,
            cols: 20,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.rows == 0 || self.cols == 0 {
            problems.push(format!("grid must have at least one row and column, got {}x{}", self.rows, self.cols));
        }
        let finite = [self.min_lat, self.max_lat, self.min_lon, self.max_lon].iter().all(|v| v.is_finite());
        if !finite || self.min_lat >= self.max_lat || self.min_lon >= self.max_lon {
            problems.push(format!(
                "degenerate bounding box lat [{}, {}] lon [{}, {}]",
                self.min_lat, self.max_lat, self.min_lon, self.max_lon
            ));
        }
        problems
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_height(&self) -> f64 {
        (self.max_lat - self.min_lat) / self.rows as f64
    }

    pub fn cell_width(&self) -> f64 {
        (self.max_lon - self.min_lon) / self.cols as f64
    }

    /// `(row, col)` of the cell containing the point, if inside the box.
    pub fn cell_of(&self, latitude: f64, longitude: f64) -> Option<(usize, usize)> {
        if !(latitude >= self.min_lat && latitude < self.max_lat && longitude >= self.min_lon && longitude < self.max_lon) {
            return None;
        }
        let row = ((latitude - self.min_lat) / self.cell_height()).floor() as usize;
        let col = ((longitude - self.min_lon) / self.cell_width()).floor() as usize;
        // guard against rounding up on the last band
        Some((row.min(self.rows - 1), col.min(self.cols - 1)))
    }

    /// South-west corner of a cell.
    pub fn cell_origin(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.min_lat + row as f64 * self.cell_height(),
            self.min_lon + col as f64 * self.cell_width(),
        )
    }
}

/// A contiguous run of hours starting at `start` (truncated to the hour).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub start: NaiveDateTime,
    pub hours: usize,
}

impl Timeline {
    pub fn new(start: NaiveDateTime, hours: usize) -> Self {
        Self {
            start: truncate_to_hour(start),
            hours,
        }
    }

    /// Hour index of a timestamp, if it falls inside the timeline.
    pub fn hour_index(&self, ts: NaiveDateTime) -> Option<usize> {
        let offset = ts.signed_duration_since(self.start);
        if offset < Duration::zero() {
            return None;
        }
        let h = offset.num_hours() as usize;
        (h < self.hours).then_some(h)
    }

    pub fn time_of(&self, hour: usize) -> NaiveDateTime {
        self.start + Duration::hours(hour as i64)
    }

    pub fn hour_of_day(&self, hour: usize) -> u32 {
        self.time_of(hour).hour()
    }

    /// Monday = 0 … Sunday = 6.
    pub fn day_of_week(&self, hour: usize) -> u32 {
        self.time_of(hour).weekday().num_days_from_monday()
    }
}

pub fn truncate_to_hour(ts: NaiveDateTime) -> NaiveDateTime {
    ts.date().and_hms_opt(ts.hour(), 0, 0).expect("valid hour")
}

/// Parses ISO-8601 timestamps with or without a UTC offset; offsets are
/// converted to UTC.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    let s = s.strip_suffix('Z').unwrap_or(s);
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S").to_string()
}

/// One hour of accident risk over the grid, row-major `rows × cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskFrame {
    pub hour_index: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BinnedFrames {
    pub frames: Vec<RiskFrame>,
    pub outside_grid: usize,
    pub outside_time: usize,
}

/// Accumulates each record's risk score into its cell-hour. Every hour of the
/// timeline gets a frame, including hours without accidents.
pub fn bin_records(records: &[AccidentRecord], grid: &GridSpec, timeline: &Timeline) -> Result<BinnedFrames> {
    if timeline.hours == 0 {
        return Err(Error::EmptyInput("bin_records hour range"));
    }
    let problems = grid.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let cells = grid.num_cells();
    let mut frames: Vec<RiskFrame> = (0..timeline.hours)
        .map(|h| RiskFrame {
            hour_index: h,
            values: vec![0.0; cells],
        })
        .collect();
    let (mut outside_grid, mut outside_time) = (0, 0);
    for rec in records {
        let Some(hour) = timeline.hour_index(rec.timestamp) else {
            outside_time += 1;
            continue;
        };
        let Some((r, c)) = grid.cell_of(rec.latitude, rec.longitude) else {
            outside_grid += 1;
            continue;
        };
        frames[hour].values[r * grid.cols + c] += risk_score(rec.severity);
    }
    Ok(BinnedFrames {
        frames,
        outside_grid,
        outside_time,
    })
}

/// Which past hours feed the seven history channels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LagSchedule {
    /// Same hour 4, 3, 2 and 1 weeks back, then the 3 most recent hours.
    #[default]
    WeeklyAndRecent,
    /// The 7 most recent hours.
    RecentOnly,
}

impl LagSchedule {
    /// Lags in hours, oldest first.
    pub fn lags(self) -> [usize; HISTORY_LEN] {
        match self {
            LagSchedule::WeeklyAndRecent => [
                4 * HOURS_PER_WEEK,
                3 * HOURS_PER_WEEK,
                2 * HOURS_PER_WEEK,
                HOURS_PER_WEEK,
                3,
                2,
                1,
            ],
            LagSchedule::RecentOnly => [7, 6, 5, 4, 3, 2, 1],
        }
    }

    /// Earliest target hour that has a complete history.
    pub fn min_target_hour(self) -> usize {
        self.lags()[0]
    }
}

/// Model input/target pair for one target hour.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Raw risk maps, shape `[7, rows, cols]`.
    pub history: Tensor,
    /// Context rows for the same seven lag hours.
    pub context: Vec<ContextRow>,
    /// Raw risk map at `target_hour`, shape `[rows, cols]`.
    pub target: Tensor,
    pub target_hour: usize,
}

/// History tensor and context rows for a target hour. The target hour itself
/// may lie one past the last frame (forecasting beyond the data).
pub fn history_window(
    frames: &[RiskFrame],
    context: &[ContextRow],
    grid: &GridSpec,
    lags: LagSchedule,
    target_hour: usize,
) -> Result<(Tensor, Vec<ContextRow>)> {
    let required = lags.min_target_hour();
    if target_hour < required || target_hour > frames.len() {
        return Err(Error::InsufficientHistory {
            hour: target_hour,
            required,
        });
    }
    let cells = grid.num_cells();
    let mut history = Vec::with_capacity(HISTORY_LEN * cells);
    let mut rows = Vec::with_capacity(HISTORY_LEN);
    for lag in lags.lags() {
        let h = target_hour - lag;
        history.extend_from_slice(&frames[h].values);
        rows.push(context[h].clone());
    }
    Ok((Tensor::new(vec![HISTORY_LEN, grid.rows, grid.cols], history)?, rows))
}

/// One sample per target hour with a complete lag window.
pub fn build_samples(frames: &[RiskFrame], context: &[ContextRow], grid: &GridSpec, lags: LagSchedule) -> Result<Vec<Sample>> {
    if let Some((i, f)) = frames.iter().enumerate().find(|(i, f)| f.hour_index != *i) {
        return Err(Error::Data(format!("frames are not contiguous: position {i} holds hour {}", f.hour_index)));
    }
    if context.len() != frames.len() {
        return Err(Error::Data(format!(
            "context covers {} hours but there are {} frames",
            context.len(),
            frames.len()
        )));
    }
    if let Some(f) = frames.iter().find(|f| f.values.len() != grid.num_cells()) {
        return Err(Error::Data(format!("frame {} does not match the grid size", f.hour_index)));
    }
    let first = lags.min_target_hour();
    if frames.len() <= first {
        return Err(Error::InsufficientHistory {
            hour: frames.len().saturating_sub(1),
            required: first,
        });
    }
    (first..frames.len())
        .map(|t| {
            let (history, ctx) = history_window(frames, context, grid, lags, t)?;
            Ok(Sample {
                history,
                context: ctx,
                target: Tensor::new(vec![grid.rows, grid.cols], frames[t].values.clone())?,
                target_hour: t,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            problems.push(format!("split fractions must be non-negative, got {parts:?}"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            problems.push(format!("split fractions must sum to 1, got {parts:?}"));
        }
        problems
    }

    /// `(train, val, test)` sizes: train and val rounded down, remainder to test.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let train = floor(self.train).min(n);
        let val = floor(self.val).min(n - train);
        (train, val, n - train - val)
    }
}

#[derive(Clone, Debug)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Contiguous chronological split of samples ordered by target hour.
pub fn chronological_split(samples: Vec<Sample>, spec: &SplitSpec) -> Result<Splits<Sample>> {
    let problems = spec.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    if samples.len() < 3 {
        return Err(Error::Data(format!("need at least 3 samples to split, got {}", samples.len())));
    }
    if samples.windows(2).any(|w| w[0].target_hour >= w[1].target_hour) {
        return Err(Error::Data("samples must be strictly ordered by target hour".into()));
    }
    let (n_train, n_val, _) = spec.counts(samples.len());
    let mut rest = samples;
    let mut tail = rest.split_off(n_train);
    let test = tail.split_off(n_val);
    Ok(Splits {
        train: rest,
        val: tail,
        test,
    })
}

/// Mean/standard-deviation standardization for one scalar quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

pub const MIN_STD: f64 = 1e-8;

impl Standardizer {
    pub const IDENTITY: Standardizer = Standardizer { mean: 0.0, std: 1.0 };

    /// Population mean and standard deviation; std is clamped to [`MIN_STD`].
    pub fn fit<I: IntoIterator<Item = f64>>(values: I) -> Result<Self> {
        let (mut n, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
        let values: Vec<f64> = values.into_iter().collect();
        for &v in &values {
            n += 1;
            sum += v;
        }
        if n == 0 {
            return Err(Error::EmptyInput("fit_norm"));
        }
        let mean = sum / n as f64;
        for &v in &values {
            sum_sq += (v - mean) * (v - mean);
        }
        let std = (sum_sq / n as f64).sqrt().max(MIN_STD);
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Normalization statistics fitted on the training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub risk: Standardizer,
    pub temperature: Standardizer,
    pub inflow: Standardizer,
    pub outflow: Standardizer,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats {
        risk: Standardizer::IDENTITY,
        temperature: Standardizer::IDENTITY,
        inflow: Standardizer::IDENTITY,
        outflow: Standardizer::IDENTITY,
    };
}

/// Fits risk statistics over the training targets and context statistics over
/// every context row referenced by the training samples.
pub fn fit_norm(train: &[Sample]) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::EmptyInput("fit_norm"));
    }
    let rows = || train.iter().flat_map(|s| s.context.iter());
    Ok(NormStats {
        risk: Standardizer::fit(train.iter().flat_map(|s| s.target.data().iter().copied()))?,
        temperature: Standardizer::fit(rows().map(|r| r.temperature))?,
        inflow: Standardizer::fit(rows().map(|r| r.inflow))?,
        outflow: Standardizer::fit(rows().map(|r| r.outflow))?,
    })
}

pub fn apply_norm(values: &[f64], stats: &Standardizer) -> Vec<f64> {
    values.iter().map(|&v| stats.apply(v)).collect()
}

pub fn invert_norm(values: &[f64], stats: &Standardizer) -> Vec<f64> {
    values.iter().map(|&v| stats.invert(v)).collect()
}

/// Rows read from a CSV file plus the number of malformed rows skipped.
#[derive(Clone, Debug)]
pub struct Parsed<T> {
    pub rows: Vec<T>,
    pub skipped: usize,
}

#[derive(Debug, Deserialize)]
struct AccidentCsvRow {
    timestamp: String,
    latitude: f64,
    longitude: f64,
    severity: String,
}

/// Reads `timestamp,latitude,longitude,severity` rows.
pub fn read_accidents(path: &Path) -> Result<Parsed<AccidentRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for row in reader.deserialize::<AccidentCsvRow>() {
        let parsed = row.ok().and_then(|r| {
            let timestamp = parse_timestamp(&r.timestamp)?;
            let severity = r.severity.parse().ok()?;
            (r.latitude.is_finite() && r.longitude.is_finite()).then_some(AccidentRecord {
                timestamp,
                latitude: r.latitude,
                longitude: r.longitude,
                severity,
            })
        });
        match parsed {
            Some(rec) => rows.push(rec),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed accident rows", path.display());
    }
    Ok(Parsed { rows, skipped })
}

pub fn write_accidents<W: std::io::Write>(out: W, records: &[AccidentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "latitude", "longitude", "severity"])?;
    for r in records {
        w.write_record([
            format_timestamp(r.timestamp),
            format!("{:.6}", r.latitude),
            format!("{:.6}", r.longitude),
            r.severity.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("accidents csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::Weather;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn ctx_row() -> ContextRow {
        ContextRow {
            hour_of_day: 0,
            day_of_week: 0,
            is_holiday: false,
            weather: Weather::Clear,
            temperature: 10.0,
            inflow: 0.0,
            outflow: 0.0,
        }
    }

    fn small_grid() -> GridSpec {
        GridSpec {
            min_lat: 0.0,
            max_lat: 1.0,
            min_lon: 0.0,
            max_lon: 1.0,
            rows: 2,
            cols: 2,
        }
    }

    #[test]
    fn risk_scores() {
        assert_eq!(risk_score(Severity::Fatal), 3.0);
        assert_eq!(risk_score(Severity::Minor), 1.0);
        assert_eq!(risk_score(Severity::Injured), 2.0);
    }

    #[test]
    fn three_fatal_two_minor_is_eleven() {
        let grid = small_grid();
        let tl = Timeline::new(ts("2024-01-01T00:00:00"), 1);
        let mut recs = Vec::new();
        for (i, sev) in [Severity::Fatal, Severity::Fatal, Severity::Fatal, Severity::Minor, Severity::Minor].into_iter().enumerate() {
            recs.push(AccidentRecord {
                timestamp: ts(&format!("2024-01-01T00:{:02}:00", i * 5)),
                latitude: 0.1,
                longitude: 0.1,
                severity: sev,
            });
        }
        let binned = bin_records(&recs, &grid, &tl).unwrap();
        assert_eq!(binned.frames[0].values, vec![11.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_record_at_center_and_empty_range() {
        let grid = GridSpec {
            rows: 3,
            cols: 3,
            ..small_grid()
        };
        let tl = Timeline::new(ts("2024-01-01T00:00:00"), 2);
        let rec = AccidentRecord {
            timestamp: ts("2024-01-01T00:30:00"),
            latitude: 0.5,
            longitude: 0.5,
            severity: Severity::Minor,
        };
        let binned = bin_records(&[rec], &grid, &tl).unwrap();
        assert_eq!(binned.frames.len(), 2);
        assert_eq!(binned.frames[0].values.iter().sum::<f64>(), 1.0);
        assert_eq!(binned.frames[0].values[4], 1.0);
        assert!(binned.frames[1].values.iter().all(|&v| v == 0.0));

        let empty = Timeline::new(ts("2024-01-01T00:00:00"), 0);
        assert!(bin_records(&[], &grid, &empty).is_err());
    }

    #[test]
    fn edges_go_to_higher_cell_and_outside_is_counted() {
        let grid = small_grid();
        assert_eq!(grid.cell_of(0.5, 0.5), Some((1, 1)));
        assert_eq!(grid.cell_of(0.0, 0.0), Some((0, 0)));
        assert_eq!(grid.cell_of(1.0, 0.2), None);
        assert_eq!(grid.cell_of(-0.1, 0.2), None);

        let tl = Timeline::new(ts("2024-01-01T00:00:00"), 1);
        let outside = AccidentRecord {
            timestamp: ts("2024-01-01T00:10:00"),
            latitude: 2.0,
            longitude: 0.5,
            severity: Severity::Fatal,
        };
        let late = AccidentRecord {
            timestamp: ts("2024-01-01T01:10:00"),
            ..outside.clone()
        };
        let binned = bin_records(&[outside, late], &grid, &tl).unwrap();
        assert_eq!((binned.outside_grid, binned.outside_time), (1, 1));
    }

    fn frames(n: usize, cells: usize) -> Vec<RiskFrame> {
        (0..n)
            .map(|h| RiskFrame {
                hour_index: h,
                values: vec![0.0; cells],
            })
            .collect()
    }

    #[test]
    fn exactly_673_hours_gives_one_sample() {
        let grid = small_grid();
        let f = frames(673, 4);
        let ctx = vec![ctx_row(); 673];
        let samples = build_samples(&f, &ctx, &grid, LagSchedule::default()).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].target_hour, 672);
        assert!(samples[0].history.data().iter().all(|&v| v == 0.0));
        assert!(samples[0].target.data().iter().all(|&v| v == 0.0));

        let err = build_samples(&f[..672], &ctx[..672], &grid, LagSchedule::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientHistory { .. }));
    }

    #[test]
    fn weekly_impulse_lands_in_channel_three() {
        let grid = small_grid();
        let mut f = frames(700, 4);
        let t = 690;
        f[t - 168].values[2] = 5.0;
        let ctx = vec![ctx_row(); 700];
        let samples = build_samples(&f, &ctx, &grid, LagSchedule::default()).unwrap();
        let s = samples.iter().find(|s| s.target_hour == t).unwrap();
        for c in 0..HISTORY_LEN {
            let expected = if c == 3 { 5.0 } else { 0.0 };
            assert_eq!(s.history.at(&[c, 1, 0]), expected);
        }
    }

    fn dummy_samples(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                history: Tensor::zeros(vec![HISTORY_LEN, 1, 1]).unwrap(),
                context: vec![ctx_row(); HISTORY_LEN],
                target: Tensor::zeros(vec![1, 1]).unwrap(),
                target_hour: 672 + i,
            })
            .collect()
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::default();
        for (n, expected) in [(10, (6, 2, 2)), (100, (60, 20, 20)), (7, (4, 1, 2))] {
            let s = chronological_split(dummy_samples(n), &spec).unwrap();
            assert_eq!((s.train.len(), s.val.len(), s.test.len()), expected, "n = {n}");
        }
        assert!(chronological_split(dummy_samples(2), &spec).is_err());
        let bad = SplitSpec {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        };
        assert!(chronological_split(dummy_samples(10), &bad).is_err());
    }

    #[test]
    fn split_is_chronological_and_disjoint() {
        let s = chronological_split(dummy_samples(50), &SplitSpec::default()).unwrap();
        let last_train = s.train.last().unwrap().target_hour;
        let last_val = s.val.last().unwrap().target_hour;
        assert!(last_train < s.val[0].target_hour);
        assert!(last_val < s.test[0].target_hour);
    }

    #[test]
    fn standardizer_cases() {
        let s = Standardizer::fit([0.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.std), (1.0, 1.0));
        assert_eq!(apply_norm(&[0.0, 2.0], &s), vec![-1.0, 1.0]);

        let c = Standardizer::fit([4.0; 5]).unwrap();
        assert_eq!(c.std, MIN_STD);
        assert!(apply_norm(&[4.0; 5], &c).iter().all(|&v| v == 0.0));

        assert!(Standardizer::fit(std::iter::empty()).is_err());
        assert!(fit_norm(&[]).is_err());
    }

    #[test]
    fn timestamps_parse_in_several_forms() {
        let expected = ts("2024-03-05T07:15:00");
        assert_eq!(parse_timestamp("2024-03-05 07:15:00"), Some(expected));
        assert_eq!(parse_timestamp("2024-03-05T07:15:00Z"), Some(expected));
        assert_eq!(parse_timestamp("2024-03-05T09:15:00+02:00"), Some(expected));
        assert_eq!(parse_timestamp("not a time"), None);
    }

    #[test]
    fn timeline_calendar_fields() {
        // 2024-01-01 was a Monday
        let tl = Timeline::new(ts("2024-01-01T00:45:00"), 48);
        assert_eq!(tl.start, ts("2024-01-01T00:00:00"));
        assert_eq!(tl.hour_of_day(31), 7);
        assert_eq!(tl.day_of_week(0), 0);
        assert_eq!(tl.day_of_week(25), 1);
        assert_eq!(tl.hour_index(ts("2024-01-02T23:59:59")), Some(47));
        assert_eq!(tl.hour_index(ts("2024-01-03T00:00:00")), None);
    }
}
