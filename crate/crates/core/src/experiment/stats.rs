//! Per-metric sample sets, their summaries, and the log-log slope fit used
//! for scaling claims.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// SplitMix64 finalizer applied to `master + (i + 1)·γ`: trial `i`'s seed
/// depends only on the master seed and `i`.
pub fn trial_seed(master: u64, i: u64) -> u64 {
    let mut z = master.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Standard error of the mean (sample deviation over √count).
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

/// Linear interpolation between closest ranks; `sorted` must be ascending
/// and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    pub fn of(sorted: &[f64]) -> Option<Summary> {
        let count = sorted.len();
        if count == 0 {
            return None;
        }
        let mean = sorted.iter().sum::<f64>() / count as f64;
        let stderr = if count > 1 {
            let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary {
            count,
            mean,
            stderr,
            min: sorted[0],
            max: sorted[count - 1],
            p50: quantile(sorted, 0.5),
            p90: quantile(sorted, 0.9),
            p99: quantile(sorted, 0.99),
        })
    }
}

/// Trial results of one configuration. Samples are kept sorted, so merging
/// two aggregates gives exactly the aggregate of the union.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config_digest: String,
    pub master_seed: u64,
    /// Trial index to seed.
    pub seeds: BTreeMap<u64, u64>,
    pub samples: BTreeMap<String, Vec<f64>>,
}

impl Aggregate {
    pub fn new(config_digest: impl Into<String>, master_seed: u64) -> Self {
        Aggregate {
            config_digest: config_digest.into(),
            master_seed,
            ..Aggregate::default()
        }
    }

    pub fn trials(&self) -> u64 {
        self.seeds.len() as u64
    }

    pub fn record(&mut self, index: u64, seed: u64, metrics: &BTreeMap<String, f64>) {
        self.seeds.insert(index, seed);
        for (name, &v) in metrics {
            let s = self.samples.entry(name.clone()).or_default();
            let at = s.partition_point(|&x| x < v);
            s.insert(at, v);
        }
    }

    pub fn merge(mut self, other: Aggregate) -> Aggregate {
        debug_assert_eq!(self.config_digest, other.config_digest);
        self.seeds.extend(other.seeds);
        for (name, theirs) in other.samples {
            let ours = self.samples.remove(&name).unwrap_or_default();
            let mut merged = Vec::with_capacity(ours.len() + theirs.len());
            let (mut i, mut j) = (0, 0);
            while i < ours.len() && j < theirs.len() {
                if theirs[j] < ours[i] {
                    merged.push(theirs[j]);
                    j += 1;
                } else {
                    merged.push(ours[i]);
                    i += 1;
                }
            }
            merged.extend_from_slice(&ours[i..]);
            merged.extend_from_slice(&theirs[j..]);
            self.samples.insert(name, merged);
        }
        self
    }

    pub fn summary(&self, metric: &str) -> Option<Summary> {
        self.samples.get(metric).and_then(|s| Summary::of(s))
    }

    pub fn summaries(&self) -> BTreeMap<String, Summary> {
        self.samples
            .iter()
            .filter_map(|(k, s)| Summary::of(s).map(|x| (k.clone(), x)))
            .collect()
    }

    /// Fraction of samples of `metric` that are at least `z`.
    pub fn tail(&self, metric: &str, z: f64) -> f64 {
        match self.samples.get(metric) {
            Some(s) if !s.is_empty() => (s.len() - s.partition_point(|&x| x < z)) as f64 / s.len() as f64,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioFit {
    pub slope: f64,
    pub intercept: f64,
    pub hypothesis: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RatioError {
    #[error("need at least 3 sizes, got {0}")]
    TooFew(usize),
    #[error("sizes are not a geometric progression")]
    NotGeometric,
    #[error("metric value {0} is not positive and finite")]
    BadValue(f64),
}

/// Least-squares slope of `ln y` against `ln x`; passes when the slope is
/// at most `hypothesis + tolerance`. The sizes must grow geometrically.
pub fn ratio_test(points: &[(f64, f64)], hypothesis: f64, tolerance: f64) -> Result<RatioFit, RatioError> {
    if points.len() < 3 {
        return Err(RatioError::TooFew(points.len()));
    }
    if let Some(&(_, y)) = points.iter().find(|(_, y)| !(y.is_finite() && *y > 0.0)) {
        return Err(RatioError::BadValue(y));
    }
    let ratio = points[1].0 / points[0].0;
    let geometric = points[0].0 > 0.0
        && ratio.is_finite()
        && ratio > 1.0
        && points
            .windows(2)
            .all(|w| ((w[1].0 / w[0].0) / ratio - 1.0).abs() < 1e-9);
    if !geometric {
        return Err(RatioError::NotGeometric);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(RatioFit {
        slope,
        intercept: my - slope * mx,
        hypothesis,
        tolerance,
        pass: slope <= hypothesis + tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..100).map(|i| trial_seed(42, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_eq!(a[7], trial_seed(42, 7));
        assert_ne!(trial_seed(42, 0), trial_seed(43, 0));
    }

    #[test]
    fn summary_of_known_samples() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.p50, 2.5);
        assert_eq!((s.min, s.max), (1.0, 4.0));
        assert_eq!(Summary::of(&[]), None);
    }

    #[test]
    fn tail_fractions() {
        let mut a = Aggregate::new("d", 0);
        for (i, v) in [0.0, 1.0, 1.0, 3.0].into_iter().enumerate() {
            a.record(i as u64, 0, &BTreeMap::from([("z".to_string(), v)]));
        }
        assert_eq!(a.tail("z", 1.0), 0.75);
        assert_eq!(a.tail("z", 4.0), 0.0);
        assert_eq!(a.tail("missing", 0.0), 0.0);
    }

    #[test]
    fn slopes() {
        let lin: Vec<(f64, f64)> = [16.0, 32.0, 64.0].iter().map(|&x| (x, 3.0 * x)).collect();
        assert!((ratio_test(&lin, 1.0, 0.2).unwrap().slope - 1.0).abs() < 1e-12);
        let sq: Vec<(f64, f64)> = [16.0, 32.0, 64.0, 128.0].iter().map(|&x| (x, x * x)).collect();
        let fit = ratio_test(&sq, 1.0, 0.2).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12 && !fit.pass);
        let flat = [(16.0, 5.0), (32.0, 5.0), (64.0, 5.0)];
        assert!(ratio_test(&flat, 0.0, 0.01).unwrap().slope.abs() < 1e-12);
        assert_eq!(ratio_test(&flat[..2], 0.0, 0.0), Err(RatioError::TooFew(2)));
        assert_eq!(
            ratio_test(&[(16.0, 1.0), (32.0, 1.0), (48.0, 1.0)], 0.0, 0.0),
            Err(RatioError::NotGeometric)
        );
        assert_eq!(
            ratio_test(&[(16.0, 1.0), (32.0, 0.0), (64.0, 1.0)], 0.0, 0.0),
            Err(RatioError::BadValue(0.0))
        );
    }
}
