//! Seeded synthetic accident world.
//!
//! All randomness comes from one ChaCha8 stream seeded with `seed`, consumed in
//! a fixed order: for each hour, first every hotspot's accidents (count,
//! then per accident severity, position and minute), then the hour's weather
//! and temperature, then its trips. Poisson counts use Knuth's product
//! method on chunks of rate at most 30; Gaussian noise uses Box–Muller.

use std::f64::consts::PI;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::{Trip, Weather, WeatherObservation};
use crate::error::{Error, Result};
use crate::grid::{AccidentRecord, GridSpec, Severity, Timeline};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub row: usize,
    pub col: usize,
    /// Expected accidents per hour before profile scaling.
    pub base_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    #[serde(skip)]
    pub grid: GridSpec,
    pub start: NaiveDateTime,
    pub weeks: usize,
    pub hotspots: Vec<Hotspot>,
    /// Rate multiplier per hour of day.
    pub daily_profile: Vec<f64>,
    /// Rate multiplier per weekday, Monday first.
    pub weekly_profile: Vec<f64>,
    /// Probabilities of minor, injured, fatal.
    pub severity_mix: [f64; 3],
    /// Day offsets from `start` that are holidays.
    pub holidays: Vec<usize>,
    /// Probability that the weather keeps its state from one hour to the next.
    pub weather_persistence: f64,
    pub temperature_mean: f64,
    pub temperature_amplitude: f64,
    pub temperature_noise: f64,
    /// Expected taxi trips per hour before daily-profile scaling.
    pub trips_per_hour: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let hot = |row, col, base_rate| Hotspot { row, col, base_rate };
        Self {
            grid: GridSpec::default(),
            start: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            weeks: 8,
            hotspots: vec![
                hot(3, 4, 8.0),
                hot(4, 15, 6.0),
                hot(7, 7, 10.0),
                hot(9, 12, 7.0),
                hot(10, 3, 5.0),
                hot(12, 16, 9.0),
                hot(15, 8, 10.0),
                hot(17, 13, 6.0),
            ],
            daily_profile: vec![
                0.1, 0.05, 0.05, 0.05, 0.05, 0.2, 0.6, 2.0, 2.8, 2.0, 0.9, 0.8, //
                0.9, 0.9, 1.0, 1.4, 2.4, 3.0, 2.8, 1.8, 0.9, 0.6, 0.4, 0.2,
            ],
            weekly_profile: vec![1.0, 1.0, 1.05, 1.1, 1.3, 0.8, 0.6],
            severity_mix: [0.8, 0.15, 0.05],
            holidays: vec![0],
            weather_persistence: 0.9,
            temperature_mean: 8.0,
            temperature_amplitude: 5.0,
            temperature_noise: 1.0,
            trips_per_hour: 20.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn hours(&self) -> usize {
        self.weeks * 168
    }

    pub fn timeline(&self) -> Timeline {
        Timeline::new(self.start, self.hours())
    }

    pub fn validate(&self) -> Vec<String> {
        let mut p = self.grid.validate();
        if self.weeks == 0 {
            p.push("weeks must be positive".into());
        }
        if self.daily_profile.len() != 24 {
            p.push(format!("daily_profile needs 24 entries, got {}", self.daily_profile.len()));
        }
        if self.weekly_profile.len() != 7 {
            p.push(format!("weekly_profile needs 7 entries, got {}", self.weekly_profile.len()));
        }
        let nonneg = |v: &f64| v.is_finite() && *v >= 0.0;
        if !self.daily_profile.iter().chain(&self.weekly_profile).all(nonneg) {
            p.push("profile multipliers must be non-negative".into());
        }
        for h in &self.hotspots {
            if h.row >= self.grid.rows || h.col >= self.grid.cols {
                p.push(format!("hotspot ({}, {}) lies outside the grid", h.row, h.col));
            }
            if !nonneg(&h.base_rate) {
                p.push(format!("hotspot ({}, {}) has a negative rate", h.row, h.col));
            }
        }
        if !self.severity_mix.iter().all(nonneg) || (self.severity_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            p.push(format!("severity_mix must be a probability vector, got {:?}", self.severity_mix));
        }
        if !(0.0..=1.0).contains(&self.weather_persistence) {
            p.push("weather_persistence must lie in [0, 1]".into());
        }
        if !nonneg(&self.trips_per_hour) || !nonneg(&self.temperature_noise) {
            p.push("trips_per_hour and temperature_noise must be non-negative".into());
        }
        p
    }

    /// Expected accident count for a hotspot in a given hour.
    pub fn rate(&self, hotspot: &Hotspot, hour_of_day: usize, day_of_week: usize) -> f64 {
        hotspot.base_rate * self.daily_profile[hour_of_day] * self.weekly_profile[day_of_week]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthWorld {
    pub accidents: Vec<AccidentRecord>,
    pub context: Vec<WeatherObservation>,
    pub trips: Vec<Trip>,
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

fn poisson(rng: &mut ChaCha8Rng, rate: f64) -> usize {
    let mut remaining = rate;
    let mut total = 0;
    while remaining > 0.0 {
        let lambda = remaining.min(30.0);
        remaining -= lambda;
        let limit = (-lambda).exp();
        let mut p = 1.0;
        loop {
            p *= uniform(rng);
            if p <= limit {
                break;
            }
            total += 1;
        }
    }
    total
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - uniform(rng); // (0, 1]
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn point_in_cell(rng: &mut ChaCha8Rng, grid: &GridSpec, row: usize, col: usize) -> (f64, f64) {
    let (lat0, lon0) = grid.cell_origin(row, col);
    // keep clear of the cell edges so binning is unambiguous
    let lat = lat0 + (0.05 + 0.9 * uniform(rng)) * grid.cell_height();
    let lon = lon0 + (0.05 + 0.9 * uniform(rng)) * grid.cell_width();
    (lat, lon)
}

fn point_in_grid(rng: &mut ChaCha8Rng, grid: &GridSpec) -> (f64, f64) {
    let row = (uniform(rng) * grid.rows as f64) as usize;
    let col = (uniform(rng) * grid.cols as f64) as usize;
    point_in_cell(rng, grid, row.min(grid.rows - 1), col.min(grid.cols - 1))
}

/// Generates accidents, hourly context and taxi trips for `weeks` weeks.
pub fn generate(config: &SynthConfig) -> Result<SynthWorld> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let timeline = config.timeline();
    let mut accidents = Vec::new();
    let mut context = Vec::with_capacity(timeline.hours);
    let mut trips = Vec::new();
    let mut weather = Weather::Clear;

    for h in 0..timeline.hours {
        let hour_start = timeline.time_of(h);
        let hod = timeline.hour_of_day(h) as usize;
        let dow = timeline.day_of_week(h) as usize;

        for spot in &config.hotspots {
            let n = poisson(&mut rng, config.rate(spot, hod, dow));
            for _ in 0..n {
                let u = uniform(&mut rng);
                let severity = if u < config.severity_mix[0] {
                    Severity::Minor
                } else if u < config.severity_mix[0] + config.severity_mix[1] {
                    Severity::Injured
                } else {
                    Severity::Fatal
                };
                let (latitude, longitude) = point_in_cell(&mut rng, &config.grid, spot.row, spot.col);
                let second = (uniform(&mut rng) * 3600.0) as i64;
                accidents.push(AccidentRecord {
                    timestamp: hour_start + Duration::seconds(second.min(3599)),
                    latitude,
                    longitude,
                    severity,
                });
            }
        }

        if uniform(&mut rng) >= config.weather_persistence {
            let others: Vec<Weather> = Weather::ALL.into_iter().filter(|w| *w != weather).collect();
            let pick = ((uniform(&mut rng) * others.len() as f64) as usize).min(others.len() - 1);
            weather = others[pick];
        }
        let phase = 2.0 * PI * (hod as f64 - 9.0) / 24.0;
        let temperature = config.temperature_mean + config.temperature_amplitude * phase.sin() + config.temperature_noise * gaussian(&mut rng);
        context.push(WeatherObservation {
            timestamp: hour_start,
            is_holiday: config.holidays.contains(&(h / 24)),
            weather,
            temperature,
        });

        let n_trips = poisson(&mut rng, config.trips_per_hour * config.daily_profile[hod]);
        for _ in 0..n_trips {
            let pickup_ts = hour_start + Duration::seconds(((uniform(&mut rng) * 3600.0) as i64).min(3599));
            let (pickup_lat, pickup_lon) = point_in_grid(&mut rng, &config.grid);
            let dropoff_ts = pickup_ts + Duration::seconds(300 + (uniform(&mut rng) * 3000.0) as i64);
            let (dropoff_lat, dropoff_lon) = point_in_grid(&mut rng, &config.grid);
            trips.push(Trip {
                pickup_ts,
                pickup_lat,
                pickup_lon,
                dropoff_ts,
                dropoff_lat,
                dropoff_lon,
            });
        }
    }
    accidents.sort_by_key(|a| a.timestamp);
    Ok(SynthWorld { accidents, context, trips })
}
