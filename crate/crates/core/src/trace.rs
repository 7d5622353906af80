//! Per-iteration `(Phi_k, Delta_k)` records shared by the renewal simulator
//! and instrumented trust-region runs.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::stats::Summary;

/// One step of a `(Phi, Delta)` process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiDeltaPoint {
    pub k: usize,
    pub phi: f64,
    pub delta: f64,
    /// `Phi_{k+1} - Phi_k`; absent for the final recorded state.
    pub v: Option<f64>,
    /// Up-step of the walk, or a successful trust-region iteration.
    pub success: bool,
    pub model_good: Option<bool>,
    pub estimates_good: Option<bool>,
}

/// Ordered record of a `(Phi, Delta)` process.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PhiDeltaTrace {
    pub points: Vec<PhiDeltaPoint>,
}

/// Empirical conditional mean of `V_k` within one radius bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftBin {
    pub delta: f64,
    pub count: usize,
    pub mean_v: f64,
    pub se_v: f64,
    /// `-Theta * h(delta)`, the drift the mean must not exceed.
    pub required: f64,
    /// Whether `mean_v <= required + z * se_v`.
    pub pass: bool,
}

impl PhiDeltaTrace {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delta).collect()
    }

    pub fn phis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.phi).collect()
    }
}

/// Groups `(delta, v)` samples by radius and compares each bin's mean to the
/// required drift `-theta * h(delta)`.
///
/// Radii are binned by their logarithm rounded to 1e-6, so values produced on
/// the same geometric grid always fall into the same bin. Bins with fewer
/// than `min_count` samples are dropped. `z` is the number of standard errors
/// of slack granted to the comparison.
pub fn drift_bins<I, H>(samples: I, theta: f64, h: H, min_count: usize, z: f64) -> Vec<DriftBin>
where
    I: IntoIterator<Item = (f64, f64)>,
    H: Fn(f64) -> f64,
{
    let mut groups: BTreeMap<i64, (f64, Vec<f64>)> = BTreeMap::new();
    for (delta, v) in samples {
        let key = (delta.ln() * 1e6).round() as i64;
        groups.entry(key).or_insert_with(|| (delta, Vec::new())).1.push(v);
    }
    groups
        .into_values()
        .filter(|(_, vs)| vs.len() >= min_count)
        .filter_map(|(delta, vs)| {
            let s = Summary::of(&vs)?;
            let required = -theta * h(delta);
            Some(DriftBin {
                delta,
                count: s.count,
                mean_v: s.mean,
                se_v: s.se,
                required,
                pass: s.mean <= required + z * s.se,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_group_equal_radii_and_drop_sparse_bins() {
        let samples = vec![(1.0, -2.0), (1.0, -1.0), (1.0, -3.0), (2.0, 5.0)];
        let bins = drift_bins(samples, 1.0, |d| d * d, 2, 3.0);
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].count, 3);
        assert_eq!(bins[0].mean_v, -2.0);
        assert_eq!(bins[0].required, -1.0);
        assert!(bins[0].pass);
    }

    #[test]
    fn bin_fails_when_mean_is_above_requirement() {
        let samples = vec![(0.5, 1.0); 10];
        let bins = drift_bins(samples, 1.0, |d| d, 1, 3.0);
        assert!(!bins[0].pass);
    }
}
