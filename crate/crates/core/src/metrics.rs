//! Scheme-level metrics and the weighted-sum utility.

use crate::env::SlotRecord;
use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Mean `|Omega|` over the slots of a trace (bits per slot).
pub fn satisfactory_error(trace: &[SlotRecord]) -> Result<f64> {
    if trace.is_empty() {
        return Err(invalid("satisfactory error of an empty trace"));
    }
    Ok(trace.iter().map(|r| r.omega.abs()).sum::<f64>() / trace.len() as f64)
}

/// Demand actually delivered in a slot: `min(served, D)`.
pub fn delivered(r: &SlotRecord) -> f64 {
    r.served.min(r.demand)
}

/// Trailing mean over `min(w, i + 1)` entries.
pub fn moving_average(series: &[f64], w: usize) -> Result<Vec<f64>> {
    if w == 0 {
        return Err(invalid("moving-average window must be at least 1"));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= w {
            sum -= series[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    Ok(out)
}

/// Per-episode summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    /// Mean `|Omega|` (bits/slot).
    pub satisfactory_error: f64,
    /// Mean RB groups used per slot.
    pub rb_groups: f64,
    /// Mean `min(served, D)` (bits/slot).
    pub throughput: f64,
    /// Mean smoothed UE reward per slot.
    pub reward: f64,
    /// Beam-gain evaluations per slot decision.
    pub decision_proxy: f64,
}

impl EpisodeMetrics {
    pub fn from_trace(episode: u64, trace: &[SlotRecord], gain_evaluations: u64) -> Result<Self> {
        let n = trace.len() as f64;
        Ok(Self {
            episode,
            satisfactory_error: satisfactory_error(trace)?,
            rb_groups: trace.iter().map(|r| r.groups_used as f64).sum::<f64>() / n,
            throughput: trace.iter().map(delivered).sum::<f64>() / n,
            reward: trace.iter().map(|r| r.low_reward).sum::<f64>() / n,
            decision_proxy: gain_evaluations as f64 / n,
        })
    }
}

/// Averages over evaluation episodes plus the per-episode series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeMetrics {
    pub scheme: String,
    pub satisfactory_error: f64,
    pub rb_groups: f64,
    pub throughput: f64,
    pub reward: f64,
    pub decision_proxy: f64,
    pub evaluation: Vec<EpisodeMetrics>,
    /// Training episodes; empty for schemes that do not learn.
    pub training: Vec<EpisodeMetrics>,
}

impl SchemeMetrics {
    pub fn aggregate(scheme: &str, evaluation: Vec<EpisodeMetrics>, training: Vec<EpisodeMetrics>) -> Result<Self> {
        if evaluation.is_empty() {
            return Err(invalid("scheme metrics need at least one evaluation episode"));
        }
        let n = evaluation.len() as f64;
        let mean = |f: fn(&EpisodeMetrics) -> f64| evaluation.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            scheme: scheme.to_string(),
            satisfactory_error: mean(|e| e.satisfactory_error),
            rb_groups: mean(|e| e.rb_groups),
            throughput: mean(|e| e.throughput),
            reward: mean(|e| e.reward),
            decision_proxy: mean(|e| e.decision_proxy),
            evaluation,
            training,
        })
    }
}

/// Weights of (satisfactory error, RB groups, decision-time proxy).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights(pub [f64; 3]);

/// Weight rows compared in the utility table.
pub const TABLE_WEIGHTS: [[f64; 3]; 4] =
    [[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]];

impl UtilityWeights {
    pub fn new(w: [f64; 3]) -> Result<Self> {
        if w.iter().any(|x| !(*x >= 0.0)) || ((w.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(invalid("utility weights must be non-negative and sum to 1"));
        }
        Ok(Self(w))
    }
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Min-max normalise each component across schemes, then weight; lower is
/// better. A component equal for all schemes contributes zero.
pub fn weighted_utility(metrics: &[[f64; 3]], w: UtilityWeights) -> Result<Vec<f64>> {
    if metrics.len() < 2 {
        return Err(invalid("utility needs at least two schemes"));
    }
    let cols: Vec<Vec<f64>> = (0..3).map(|j| min_max(&metrics.iter().map(|m| m[j]).collect::<Vec<_>>())).collect();
    Ok((0..metrics.len()).map(|i| (0..3).map(|j| w.0[j] * cols[j][i]).sum()).collect())
}

/// The utility triple of a scheme.
pub fn utility_components(m: &SchemeMetrics) -> [f64; 3] {
    [m.satisfactory_error, m.rb_groups, m.decision_proxy]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(omega: f64, served: f64, demand: f64, groups: usize) -> SlotRecord {
        SlotRecord {
            slot: 0,
            cycle: 0,
            demand,
            served,
            omega,
            satisfied: omega == 0.0,
            selected_rbs: groups * 4,
            groups_used: groups,
            candidate_groups: 3,
            mean_rate: 1.0,
            mean_snr: 1.0,
            instant_reward: 0.0,
            low_reward: 2.0,
            tx_theta: 1.0,
            tx_phi: 1.0,
            rx_theta: 1.0,
            rx_phi: 1.0,
            elevation: 1.0,
        }
    }

    #[test]
    fn satisfactory_error_cases() {
        assert_eq!(satisfactory_error(&vec![record(0.0, 5.0, 3.0, 1); 4]).unwrap(), 0.0);
        assert_eq!(satisfactory_error(&[record(-5e6, 0.0, 5e6, 0)]).unwrap(), 5e6);
        let t = [record(-3.0, 1.0, 4.0, 1), record(0.0, 9.0, 2.0, 2), record(-6.0, 0.0, 6.0, 0)];
        assert_eq!(satisfactory_error(&t).unwrap(), 3.0);
        assert!(satisfactory_error(&[]).is_err());
        let e = EpisodeMetrics::from_trace(0, &t, 30).unwrap();
        assert_eq!(e.throughput, (1.0 + 2.0 + 0.0) / 3.0);
        assert_eq!(e.rb_groups, 1.0);
        assert_eq!(e.decision_proxy, 10.0);
    }

    #[test]
    fn moving_average_cases() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), vec![1.0, 1.5, 2.5, 3.5]);
        assert_eq!(moving_average(&[4.0, 7.0], 1).unwrap(), vec![4.0, 7.0]);
        assert_eq!(moving_average(&[2.0; 5], 3).unwrap(), vec![2.0; 5]);
        assert!(moving_average(&[1.0], 0).is_err());
    }

    #[test]
    fn utility_hand_cases() {
        let w = UtilityWeights::new([1.0 / 3.0; 3]).unwrap();
        let u = weighted_utility(&[[1.0, 1.0, 1.0], [3.0, 1.0, 5.0]], w).unwrap();
        assert_eq!(u[0], 0.0);
        assert!((u[1] - 2.0 / 3.0).abs() < 1e-12);
        let u = weighted_utility(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [0.5, 1.0, 1.0]], w).unwrap();
        assert_eq!(u[0], 0.0);
        assert!((u[1] - 1.0).abs() < 1e-12);
        assert!(weighted_utility(&[[1.0; 3]], w).is_err());
        assert!(UtilityWeights::new([0.5, 0.5, 0.5]).is_err());
        assert!(UtilityWeights::new([1.5, -0.5, 0.0]).is_err());
        for row in TABLE_WEIGHTS {
            UtilityWeights::new(row).unwrap();
        }
    }

    proptest! {
        #[test]
        fn utility_lies_in_unit_interval(
            m in proptest::collection::vec(proptest::array::uniform3(0.0f64..1e7), 2..8),
            a in 0.0f64..1.0, b in 0.0f64..1.0,
        ) {
            let (a, b) = (a.min(b), a.max(b));
            let w = UtilityWeights::new([a, b - a, 1.0 - b]).unwrap();
            for u in weighted_utility(&m, w).unwrap() {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&u));
            }
        }

        #[test]
        fn moving_average_is_bounded(xs in proptest::collection::vec(-1e3f64..1e3, 1..50), w in 1usize..10) {
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in moving_average(&xs, w).unwrap() {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }
}
