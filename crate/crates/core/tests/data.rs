mod common;

use std::collections::BTreeSet;

use cvit::context::{read_context, read_trips};
use cvit::grid::{bin_records, read_accidents, risk_score, GridSpec, Timeline};
use cvit::pipeline::gen_synth;
use cvit::synth::{generate, SynthConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn binned_risk_is_conserved() {
    let grid = GridSpec::default();
    let timeline = Timeline::new(chrono::NaiveDate::from_ymd_opt(2024, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(), 48);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let records = common::random_records(&mut rng, 1000, &grid, &timeline);
    let binned = bin_records(&records, &grid, &timeline).unwrap();
    let binned_total: f64 = binned.frames.iter().flat_map(|f| f.values.iter()).sum();
    let record_total: f64 = records.iter().map(|r| risk_score(r.severity)).sum();
    assert_eq!(binned_total, record_total);
    assert_eq!(binned.outside_grid + binned.outside_time, 0);
}

#[test]
fn hotspot_counts_track_configured_rates() {
    let cfg = SynthConfig::default();
    let world = generate(&cfg).unwrap();
    let timeline = cfg.timeline();
    for spot in &cfg.hotspots {
        let expected: f64 = (0..timeline.hours)
            .map(|h| cfg.rate(spot, timeline.hour_of_day(h) as usize, timeline.day_of_week(h) as usize))
            .sum();
        let observed = world
            .accidents
            .iter()
            .filter(|a| cfg.grid.cell_of(a.latitude, a.longitude) == Some((spot.row, spot.col)))
            .count() as f64;
        // the total of independent Poisson counts is Poisson, so its SE is √mean
        assert!((observed - expected).abs() < 3.0 * expected.sqrt(), "hotspot {spot:?}: {observed} vs {expected}");
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| v.iter().filter(|y| *y < x).count() as f64 + 0.5 * (v.iter().filter(|y| *y == x).count() - 1) as f64).collect()
}

#[test]
fn weekday_frequencies_follow_weekly_profile() {
    let cfg = SynthConfig::default();
    let world = generate(&cfg).unwrap();
    let timeline = cfg.timeline();
    let mut per_day = vec![0.0; 7];
    for a in &world.accidents {
        per_day[timeline.day_of_week(timeline.hour_index(a.timestamp).unwrap()) as usize] += 1.0;
    }
    let (rx, ry) = (ranks(&per_day), ranks(&cfg.weekly_profile));
    let mean = 3.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let var = |r: &[f64]| r.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>();
    let rho = cov / (var(&rx) * var(&ry)).sqrt();
    assert!(rho > 0.0, "rank correlation {rho}");
}

#[test]
fn generated_files_parse_cleanly_and_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = SynthConfig::default();
    let summary = gen_synth(&cfg, &a).unwrap();
    gen_synth(&cfg, &b).unwrap();
    for name in ["accidents.csv", "context.csv", "trips.csv"] {
        let bytes = std::fs::read(a.join(name)).unwrap();
        assert!(!bytes.is_empty());
        assert_eq!(bytes, std::fs::read(b.join(name)).unwrap(), "{name}");
    }

    let accidents = read_accidents(&a.join("accidents.csv")).unwrap();
    let context = read_context(&a.join("context.csv")).unwrap();
    let trips = read_trips(&a.join("trips.csv")).unwrap();
    assert_eq!((accidents.skipped, context.skipped, trips.skipped), (0, 0, 0));
    assert_eq!(accidents.rows.len(), summary.accidents);
    assert_eq!(context.rows.len(), 1344);
    assert_eq!(trips.rows.len(), summary.trips);

    let hours: BTreeSet<_> = accidents.rows.iter().map(|r| cvit::grid::truncate_to_hour(r.timestamp)).collect();
    assert!(hours.len() <= 8 * 168);
    // written coordinates are rounded, so binning must still agree
    let timeline = cfg.timeline();
    let binned = bin_records(&accidents.rows, &cfg.grid, &timeline).unwrap();
    assert_eq!(binned.outside_grid + binned.outside_time, 0);
    let direct = bin_records(&generate(&cfg).unwrap().accidents, &cfg.grid, &timeline).unwrap();
    assert_eq!(binned.frames, direct.frames);
}
