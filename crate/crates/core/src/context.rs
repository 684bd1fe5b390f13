//! Hourly contextual features (calendar, weather, city-wide traffic flow) and
//! their fixed-width numeric encoding.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{format_timestamp, parse_timestamp, GridSpec, NormStats, Parsed, Timeline};

pub const HOUR_OFFSET: usize = 0;
pub const DAY_OFFSET: usize = 24;
pub const HOLIDAY_OFFSET: usize = 31;
pub const WEATHER_OFFSET: usize = 32;
pub const TEMPERATURE_OFFSET: usize = 37;
pub const INFLOW_OFFSET: usize = 38;
pub const OUTFLOW_OFFSET: usize = 39;
/// Width of an encoded context row.
pub const CONTEXT_DIM: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weather {
    Clear,
    Cloudy,
    Rainy,
    Snowy,
    Mist,
}

impl Weather {
    pub const ALL: [Weather; 5] = [Weather::Clear, Weather::Cloudy, Weather::Rainy, Weather::Snowy, Weather::Mist];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Weather::Clear => "clear",
            Weather::Cloudy => "cloudy",
            Weather::Rainy => "rainy",
            Weather::Snowy => "snowy",
            Weather::Mist => "mist",
        }
    }
}

impl fmt::Display for Weather {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Weather {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Weather::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown weather condition {s:?}")))
    }
}

/// Context for one hour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    pub hour_of_day: u8,
    /// Monday = 0 … Sunday = 6.
    pub day_of_week: u8,
    pub is_holiday: bool,
    pub weather: Weather,
    /// Degrees Celsius.
    pub temperature: f64,
    /// Trips ending inside the grid during the hour.
    pub inflow: f64,
    /// Trips starting inside the grid during the hour.
    pub outflow: f64,
}

/// Encodes a row as `[hour one-hot 24 | weekday one-hot 7 | holiday | weather
/// one-hot 5 | temperature | inflow | outflow]`, standardizing the three
/// continuous slots with `stats`.
pub fn encode_context(row: &ContextRow, stats: &NormStats) -> Result<[f64; CONTEXT_DIM]> {
    if row.hour_of_day > 23 || row.day_of_week > 6 {
        return Err(Error::Data(format!(
            "context row out of range: hour {} weekday {}",
            row.hour_of_day, row.day_of_week
        )));
    }
    if !row.temperature.is_finite() {
        return Err(Error::Data("context temperature must be finite".into()));
    }
    let mut v = [0.0; CONTEXT_DIM];
    v[HOUR_OFFSET + row.hour_of_day as usize] = 1.0;
    v[DAY_OFFSET + row.day_of_week as usize] = 1.0;
    v[HOLIDAY_OFFSET] = if row.is_holiday { 1.0 } else { 0.0 };
    v[WEATHER_OFFSET + row.weather.index()] = 1.0;
    v[TEMPERATURE_OFFSET] = stats.temperature.apply(row.temperature);
    v[INFLOW_OFFSET] = stats.inflow.apply(row.inflow);
    v[OUTFLOW_OFFSET] = stats.outflow.apply(row.outflow);
    Ok(v)
}

/// Row-major `rows.len() × CONTEXT_DIM` matrix of encoded rows.
pub fn encode_rows(rows: &[ContextRow], stats: &NormStats) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len() * CONTEXT_DIM);
    for r in rows {
        out.extend_from_slice(&encode_context(r, stats)?);
    }
    Ok(out)
}

/// One line of the context CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct WeatherObservation {
    pub timestamp: NaiveDateTime,
    pub is_holiday: bool,
    pub weather: Weather,
    pub temperature: f64,
}

#[derive(Deserialize)]
struct ContextCsvRow {
    timestamp: String,
    is_holiday: String,
    weather_condition: String,
    temperature: f64,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Reads `timestamp,is_holiday,weather_condition,temperature` rows.
pub fn read_context(path: &Path) -> Result<Parsed<WeatherObservation>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for row in reader.deserialize::<ContextCsvRow>() {
        let parsed = row.ok().and_then(|r| {
            Some(WeatherObservation {
                timestamp: parse_timestamp(&r.timestamp)?,
                is_holiday: parse_bool(&r.is_holiday)?,
                weather: r.weather_condition.parse().ok()?,
                temperature: r.temperature.is_finite().then_some(r.temperature)?,
            })
        });
        match parsed {
            Some(o) => rows.push(o),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed context rows", path.display());
    }
    Ok(Parsed { rows, skipped })
}

pub fn write_context<W: std::io::Write>(out: W, rows: &[WeatherObservation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "is_holiday", "weather_condition", "temperature"])?;
    for r in rows {
        w.write_record([
            format_timestamp(r.timestamp),
            u8::from(r.is_holiday).to_string(),
            r.weather.to_string(),
            format!("{:.2}", r.temperature),
        ])?;
    }
    w.flush().map_err(|e| Error::io("context csv", e))?;
    Ok(())
}

/// The hour span covered by a set of context observations.
pub fn timeline_of(observations: &[WeatherObservation]) -> Result<Timeline> {
    let first = observations.iter().map(|o| o.timestamp).min().ok_or(Error::EmptyInput("context observations"))?;
    let last = observations.iter().map(|o| o.timestamp).max().unwrap();
    let start = crate::grid::truncate_to_hour(first);
    let hours = last.signed_duration_since(start).num_hours() as usize + 1;
    Ok(Timeline::new(start, hours))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trip {
    pub pickup_ts: NaiveDateTime,
    pub pickup_lat: f64,
    pub pickup_lon: f64,
    pub dropoff_ts: NaiveDateTime,
    pub dropoff_lat: f64,
    pub dropoff_lon: f64,
}

#[derive(Deserialize)]
struct TripCsvRow {
    pickup_ts: String,
    pickup_lat: f64,
    pickup_lon: f64,
    dropoff_ts: String,
    dropoff_lat: f64,
    dropoff_lon: f64,
}

/// Reads `pickup_ts,pickup_lat,pickup_lon,dropoff_ts,dropoff_lat,dropoff_lon`
/// rows, skipping and counting malformed ones.
pub fn read_trips(path: &Path) -> Result<Parsed<Trip>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for row in reader.deserialize::<TripCsvRow>() {
        let parsed = row.ok().and_then(|r| {
            Some(Trip {
                pickup_ts: parse_timestamp(&r.pickup_ts)?,
                pickup_lat: r.pickup_lat,
                pickup_lon: r.pickup_lon,
                dropoff_ts: parse_timestamp(&r.dropoff_ts)?,
                dropoff_lat: r.dropoff_lat,
                dropoff_lon: r.dropoff_lon,
            })
        });
        match parsed {
            Some(t) => rows.push(t),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed trip rows", path.display());
    }
    Ok(Parsed { rows, skipped })
}

pub fn write_trips<W: std::io::Write>(out: W, trips: &[Trip]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pickup_ts", "pickup_lat", "pickup_lon", "dropoff_ts", "dropoff_lat", "dropoff_lon"])?;
    for t in trips {
        w.write_record([
            format_timestamp(t.pickup_ts),
            format!("{:.6}", t.pickup_lat),
            format!("{:.6}", t.pickup_lon),
            format_timestamp(t.dropoff_ts),
            format!("{:.6}", t.dropoff_lat),
            format!("{:.6}", t.dropoff_lon),
        ])?;
    }
    w.flush().map_err(|e| Error::io("trips csv", e))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HourlyFlow {
    pub inflow: f64,
    pub outflow: f64,
}

/// City-wide flows per hour: outflow counts pickups inside the grid in that
/// hour, inflow counts dropoffs inside the grid.
pub fn flows_from_trips(trips: &[Trip], grid: &GridSpec, timeline: &Timeline) -> Vec<HourlyFlow> {
    let mut flows = vec![HourlyFlow::default(); timeline.hours];
    for t in trips {
        if let (Some(h), Some(_)) = (timeline.hour_index(t.pickup_ts), grid.cell_of(t.pickup_lat, t.pickup_lon)) {
            flows[h].outflow += 1.0;
        }
        if let (Some(h), Some(_)) = (timeline.hour_index(t.dropoff_ts), grid.cell_of(t.dropoff_lat, t.dropoff_lon)) {
            flows[h].inflow += 1.0;
        }
    }
    flows
}

/// Joins observations and flows into one [`ContextRow`] per timeline hour.
/// Every hour must have an observation; when several fall in the same hour the
/// last one wins.
pub fn assemble_context(observations: &[WeatherObservation], flows: &[HourlyFlow], timeline: &Timeline) -> Result<Vec<ContextRow>> {
    if flows.len() != timeline.hours {
        return Err(Error::Data(format!("{} flow rows for {} hours", flows.len(), timeline.hours)));
    }
    let mut by_hour: Vec<Option<&WeatherObservation>> = vec![None; timeline.hours];
    for o in observations {
        if let Some(h) = timeline.hour_index(o.timestamp) {
            by_hour[h] = Some(o);
        }
    }
    by_hour
        .iter()
        .enumerate()
        .map(|(h, obs)| {
            let o = obs.ok_or_else(|| Error::Data(format!("no context observation for hour {h} ({})", format_timestamp(timeline.time_of(h)))))?;
            let time = timeline.time_of(h);
            Ok(ContextRow {
                hour_of_day: time.hour() as u8,
                day_of_week: time.weekday().num_days_from_monday() as u8,
                is_holiday: o.is_holiday,
                weather: o.weather,
                temperature: o.temperature,
                inflow: flows[h].inflow,
                outflow: flows[h].outflow,
            })
        })
        .collect()
}
