//! Network inputs built from environment states.

use crate::env::{EnvConfig, HighState, LowState};

/// Fixed scalings that bring every input to order one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScale {
    pub rbs: usize,
    pub n_r: usize,
    pub slots_per_cycle: usize,
    pub mean_demand: f64,
    pub orbit_radius: f64,
}

/// SNRs span many decades; compress to roughly `[0, 1]`.
fn snr_feature(snr: f64) -> f64 {
    snr.max(0.0).log10().max(0.0) / 10.0
}

impl FeatureScale {
    pub fn from_env(cfg: &EnvConfig) -> Self {
        Self {
            rbs: cfg.rbs,
            n_r: cfg.array.nr_x * cfg.array.nr_y,
            slots_per_cycle: cfg.slots_per_cycle,
            mean_demand: cfg.demand.mean(),
            orbit_radius: cfg.orbit.radius(),
        }
    }

    /// UE input: per-RB SNRs, received magnitudes, current demand, the
    /// slot's position inside the cycle and the smoothing-window mean.
    pub fn low_dim(&self) -> usize {
        self.rbs + self.n_r + 3
    }

    pub fn high_dim(&self) -> usize {
        3 + self.slots_per_cycle
    }

    /// `window_mean` is the mean instantaneous reward in the UE's smoothing
    /// window (bit/s), scaled like demand.
    pub fn low(&self, s: &LowState, demand: f64, slot_in_cycle: usize, window_mean: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.low_dim());
        x.extend(s.snr.iter().map(|v| snr_feature(1.0 + v)));
        let amp = (self.n_r as f64).sqrt();
        x.extend(s.y_r.iter().map(|y| y * amp));
        x.push(demand / (2.0 * self.mean_demand));
        x.push(slot_in_cycle as f64 / self.slots_per_cycle as f64);
        x.push(window_mean / (2.0 * self.mean_demand));
        x
    }

    pub fn high(&self, s: &HighState) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.high_dim());
        let p = s.p_leo;
        x.extend([p.x, p.y, p.z].iter().map(|c| c / self.orbit_radius));
        x.extend(s.mean_snr.iter().map(|v| snr_feature(1.0 + v)));
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::Vec3;

    #[test]
    fn dimensions_and_ranges() {
        let cfg = EnvConfig::desk();
        let f = FeatureScale::from_env(&cfg);
        let low = LowState { snr: vec![1e7; 12], y_r: vec![0.5; 4] };
        let x = f.low(&low, 20e6, 5, -40e6);
        assert_eq!(x.len(), f.low_dim());
        assert!((x[0] - 0.7).abs() < 1e-6);
        assert!((x[12] - 1.0).abs() < 1e-12);
        assert!((x[16] - 0.5).abs() < 1e-12 && (x[17] - 0.5).abs() < 1e-12);
        assert!((x[18] + 1.0).abs() < 1e-12);
        let hs = HighState { p_leo: Vec3::new(cfg.orbit.radius(), 0.0, 0.0), mean_snr: vec![0.0; 10] };
        let h = f.high(&hs);
        assert_eq!(h.len(), f.high_dim());
        assert_eq!(h[0], 1.0);
        assert_eq!(h[5], 0.0);
    }
}
