//! Error and ranking metrics on raw-scale risk maps.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target hours-of-day counted as rush hours (07–09 and 16–19 inclusive).
pub const RUSH_HOURS: [u32; 7] = [7, 8, 9, 16, 17, 18, 19];

pub fn is_rush_hour(hour_of_day: u32) -> bool {
    RUSH_HOURS.contains(&hour_of_day)
}

/// Keeps the items whose target hour-of-day is a rush hour.
pub fn rush_hour_filter<T>(items: impl IntoIterator<Item = T>, hour_of_day: impl Fn(&T) -> u32) -> Vec<T> {
    items.into_iter().filter(|it| is_rush_hour(hour_of_day(it))).collect()
}

fn check_pairs<P: AsRef<[f64]>>(preds: &[P], targets: &[P]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("metrics"));
    }
    if preds.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            op: "metrics sample count",
            lhs: vec![preds.len()],
            rhs: vec![targets.len()],
        });
    }
    let cells = targets[0].as_ref().len();
    for (p, t) in preds.iter().zip(targets) {
        let (p, t) = (p.as_ref(), t.as_ref());
        if p.len() != t.len() || t.len() != cells {
            return Err(Error::ShapeMismatch {
                op: "metrics map size",
                lhs: vec![p.len()],
                rhs: vec![t.len()],
            });
        }
    }
    Ok(())
}

/// Root of the mean squared error over every cell of every sample.
pub fn rmse<P: AsRef<[f64]>>(preds: &[P], targets: &[P]) -> Result<f64> {
    check_pairs(preds, targets)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in preds.iter().zip(targets) {
        for (a, b) in p.as_ref().iter().zip(t.as_ref()) {
            sum += (a - b) * (a - b);
        }
        n += t.as_ref().len();
    }
    Ok((sum / n as f64).sqrt())
}

/// Cell indices ordered by predicted value, highest first; ties go to the
/// lower index.
pub fn rank_cells(pred: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pred.len()).collect();
    idx.sort_by(|&a, &b| pred[b].total_cmp(&pred[a]).then(a.cmp(&b)));
    idx
}

/// Averages `per_sample` over samples with at least one positive target cell.
fn mean_over_positive<P: AsRef<[f64]>>(preds: &[P], targets: &[P], per_sample: impl Fn(&[usize], &[bool], usize) -> f64) -> Result<f64> {
    check_pairs(preds, targets)?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for (p, t) in preds.iter().zip(targets) {
        let positive: Vec<bool> = t.as_ref().iter().map(|&v| v > 0.0).collect();
        let n_pos = positive.iter().filter(|&&b| b).count();
        if n_pos == 0 {
            continue;
        }
        total += per_sample(&rank_cells(p.as_ref()), &positive, n_pos);
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::NoPositiveCells);
    }
    Ok(total / counted as f64)
}

/// Share of true accident cells found among the top-|A| predicted cells,
/// averaged over samples that contain accidents.
pub fn recall<P: AsRef<[f64]>>(preds: &[P], targets: &[P]) -> Result<f64> {
    mean_over_positive(preds, targets, |ranked, positive, n_pos| {
        let hits = ranked[..n_pos].iter().filter(|&&c| positive[c]).count();
        hits as f64 / n_pos as f64
    })
}

/// Mean average precision of the predicted cell ranking against the true
/// accident cells.
pub fn map_score<P: AsRef<[f64]>>(preds: &[P], targets: &[P]) -> Result<f64> {
    mean_over_positive(preds, targets, |ranked, positive, n_pos| {
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (j, &c) in ranked.iter().enumerate() {
            if positive[c] {
                hits += 1;
                ap += hits as f64 / (j + 1) as f64;
                if hits == n_pos {
                    break;
                }
            }
        }
        ap / n_pos as f64
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalFilter {
    All,
    RushHours,
}

impl fmt::Display for EvalFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalFilter::All => "all",
            EvalFilter::RushHours => "rush_hours",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub recall: f64,
    pub map: f64,
    pub n_samples: usize,
    pub filter: EvalFilter,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "rmse,recall,map,n_samples,filter";

    /// Scores raw-scale predictions against raw-scale targets.
    pub fn compute<P: AsRef<[f64]>>(preds: &[P], targets: &[P], filter: EvalFilter) -> Result<Self> {
        Ok(Self {
            rmse: rmse(preds, targets)?,
            recall: recall(preds, targets)?,
            map: map_score(preds, targets)?,
            n_samples: preds.len(),
            filter,
        })
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.rmse, self.recall, self.map, self.n_samples, self.filter)
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }

    pub fn to_key_value(&self) -> String {
        format!(
            "rmse = {}\nrecall = {}\nmap = {}\nn_samples = {}\nfilter = {}\n",
            self.rmse, self.recall, self.map, self.n_samples, self.filter
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_cases() {
        let t = vec![vec![1.0, 2.0]];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert_eq!(rmse(&[vec![0.0]], &[vec![2.0]]).unwrap(), 2.0);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(rmse(&empty, &empty).is_err());
        assert!(rmse(&[vec![0.0, 1.0]], &[vec![2.0]]).is_err());
    }

    #[test]
    fn recall_cases() {
        let target = vec![vec![0.0, 3.0, 0.0, 1.0]];
        assert_eq!(recall(&[vec![0.1, 0.9, 0.2, 0.8]], &target).unwrap(), 1.0);

        // 4 positives; top-4 predictions hold 2 of them
        let target = vec![vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]];
        let pred = vec![vec![9.0, 8.0, 0.0, 0.0, 7.0, 6.0, 0.0, 0.0]];
        assert_eq!(recall(&pred, &target).unwrap(), 0.5);
    }

    #[test]
    fn empty_samples_are_skipped() {
        let targets = vec![vec![0.0, 0.0], vec![0.0, 2.0]];
        let preds = vec![vec![5.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(recall(&preds, &targets).unwrap(), 1.0);
        assert_eq!(map_score(&preds, &targets).unwrap(), 1.0);
        let none = vec![vec![0.0, 0.0]];
        assert!(matches!(recall(&preds[..1], &none), Err(Error::NoPositiveCells)));
        assert!(matches!(map_score(&preds[..1], &none), Err(Error::NoPositiveCells)));
    }

    #[test]
    fn map_cases() {
        let target = vec![vec![1.0, 2.0, 0.0, 0.0]];
        assert_eq!(map_score(&[vec![0.9, 0.8, 0.1, 0.0]], &target).unwrap(), 1.0);
        // one positive ranked second of four
        let target = vec![vec![0.0, 1.0, 0.0, 0.0]];
        assert_eq!(map_score(&[vec![0.9, 0.8, 0.1, 0.0]], &target).unwrap(), 0.5);
    }

    #[test]
    fn ties_break_by_lower_index() {
        assert_eq!(rank_cells(&[1.0, 2.0, 2.0, 0.0]), vec![1, 2, 0, 3]);
        // all-equal predictions rank cells in index order
        let target = vec![vec![0.0, 0.0, 1.0]];
        assert!((map_score(&[vec![0.0; 3]], &target).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rush_hours() {
        assert!(is_rush_hour(8));
        assert!(!is_rush_hour(12));
        let kept = rush_hour_filter(0..24u32, |h| *h);
        assert_eq!(kept, vec![7, 8, 9, 16, 17, 18, 19]);
    }

    #[test]
    fn report_formats() {
        let r = EvalReport {
            rmse: 1.5,
            recall: 0.25,
            map: 0.125,
            n_samples: 3,
            filter: EvalFilter::RushHours,
        };
        assert_eq!(r.to_csv(), "rmse,recall,map,n_samples,filter\n1.5,0.25,0.125,3,rush_hours\n");
        assert!(r.to_key_value().contains("filter = rush_hours"));
    }
}
