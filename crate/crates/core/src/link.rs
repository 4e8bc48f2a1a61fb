//! Link budget, beam vectors, SNR and Shannon rate per RB, RB grouping and
//! the discrete beam-offset action encoding.

use crate::channel::{steering_rx, steering_tx, ArrayGeometry, ChannelRealization, ANGLE_MARGIN};
use crate::error::{invalid, Result};
use crate::numkit::{inner, ComplexMat, C64};
use crate::orbit::{Angles, SPEED_OF_LIGHT};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Clamp margin keeping beam angles inside the open interval `(0, pi)`.
pub const ANGLE_EPS: f64 = ANGLE_MARGIN;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkBudget {
    pub tx_power_dbw: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub noise_temp_k: f64,
    pub rb_bandwidth_hz: f64,
    pub carrier_hz: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            tx_power_dbw: 30.0,
            tx_gain_dbi: 30.0,
            rx_gain_dbi: 30.0,
            noise_temp_k: 290.0,
            rb_bandwidth_hz: 180e3,
            carrier_hz: 4e9,
        }
    }
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.tx_power_dbw, self.tx_gain_dbi, self.rx_gain_dbi].iter().all(|x| x.is_finite());
        if !finite || !(self.noise_temp_k >= 0.0) || !(self.rb_bandwidth_hz > 0.0) || !(self.carrier_hz > 0.0) {
            return Err(invalid("link budget values must be finite, bandwidth and carrier positive"));
        }
        Ok(())
    }

    pub fn tx_power_w(&self) -> f64 {
        db(self.tx_power_dbw)
    }

    /// Transmit power with both antenna gains folded in, watts.
    pub fn effective_power(&self) -> f64 {
        db(self.tx_power_dbw + self.tx_gain_dbi + self.rx_gain_dbi)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }
}

/// Noise power `k_B T_N B` in watts.
pub fn noise_power(lb: &LinkBudget) -> f64 {
    BOLTZMANN * lb.noise_temp_k * lb.rb_bandwidth_hz
}

/// SNR for a given beam gain `|w_r^H H w_t|^2`.
pub fn snr_from_gain(gain: f64, lb: &LinkBudget, pathloss: f64, n_r: usize) -> f64 {
    let noise = n_r as f64 * noise_power(lb);
    if noise == 0.0 {
        return if gain == 0.0 { 0.0 } else { f64::INFINITY };
    }
    lb.effective_power() * pathloss * gain / noise
}

/// Shannon rate `B log2(1 + snr)` in bit/s.
pub fn rate(snr: f64, bandwidth: f64) -> f64 {
    bandwidth * snr.max(0.0).ln_1p() / std::f64::consts::LN_2
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BeamConfig {
    pub tx: Angles,
    pub rx: Angles,
}

impl BeamConfig {
    pub fn new(tx: Angles, rx: Angles) -> Self {
        Self { tx, rx }
    }

    /// Steering-form beam vectors `(w_t, w_r)`.
    pub fn weights(&self, g: &ArrayGeometry) -> Result<(Vec<C64>, Vec<C64>)> {
        Ok((steering_tx(g, self.tx)?, steering_rx(g, self.rx)?))
    }
}

/// Beam gain `|w_r^H H w_t|^2` through the explicit matrix.
pub fn beam_gain(h: &ComplexMat, w_t: &[C64], w_r: &[C64]) -> Result<f64> {
    if h.rows() != w_r.len() || h.cols() != w_t.len() {
        return Err(invalid(format!(
            "channel is {}x{}, beams are rx {} / tx {}",
            h.rows(),
            h.cols(),
            w_r.len(),
            w_t.len()
        )));
    }
    Ok(inner(w_r, &h.mul_vec(w_t)?).norm_sqr())
}

pub fn snr(h: &ComplexMat, beams: &BeamConfig, g: &ArrayGeometry, lb: &LinkBudget, pathloss: f64) -> Result<f64> {
    let (w_t, w_r) = beams.weights(g)?;
    Ok(snr_from_gain(beam_gain(h, &w_t, &w_r)?, lb, pathloss, g.n_r()))
}

/// Discrete angle offsets shared by both angles of a beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetGrid {
    values: Vec<f64>,
}

impl Default for OffsetGrid {
    fn default() -> Self {
        Self::from_degrees(&[0.0, -2.0, 2.0, -5.0, 5.0, -10.0, 10.0]).expect("valid default grid")
    }
}

impl OffsetGrid {
    pub fn new(values_rad: Vec<f64>) -> Result<Self> {
        if values_rad.is_empty() || values_rad.iter().any(|v| !v.is_finite()) {
            return Err(invalid("offset grid must be non-empty and finite"));
        }
        Ok(Self { values: values_rad })
    }

    pub fn from_degrees(deg: &[f64]) -> Result<Self> {
        Self::new(deg.iter().map(|d| d.to_radians()).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> Result<f64> {
        self.values.get(i).copied().ok_or_else(|| invalid(format!("offset index {i} out of range")))
    }

    /// Index of the entry closest to `delta`, lowest index on ties.
    pub fn nearest(&self, delta: f64) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if (v - delta).abs() < (self.values[best] - delta).abs() {
                best = i;
            }
        }
        best
    }

    /// Index of the zero offset, if the grid has one.
    pub fn zero_index(&self) -> Option<usize> {
        self.values.iter().position(|v| *v == 0.0)
    }
}

/// Offset indices for the `(theta, phi)` pair of one beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BeamOffsets {
    pub theta: usize,
    pub phi: usize,
}

impl BeamOffsets {
    pub fn new(theta: usize, phi: usize) -> Self {
        Self { theta, phi }
    }
}

pub fn clamp_angle(a: f64) -> f64 {
    a.clamp(ANGLE_EPS, PI - ANGLE_EPS)
}

/// `clamp(base + grid[offset])` for both angles.
pub fn apply_offsets(base: Angles, offsets: BeamOffsets, grid: &OffsetGrid) -> Result<Angles> {
    Ok(Angles::new(
        clamp_angle(base.theta + grid.get(offsets.theta)?),
        clamp_angle(base.phi + grid.get(offsets.phi)?),
    ))
}

/// Set of RB groups as a bit mask; bit `g` stands for group `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GroupMask(pub u32);

impl GroupMask {
    pub const EMPTY: GroupMask = GroupMask(0);

    pub fn all(groups: usize) -> Self {
        GroupMask(((1u64 << groups) - 1) as u32)
    }

    pub fn from_flags(flags: &[bool]) -> Self {
        GroupMask(flags.iter().enumerate().filter(|(_, f)| **f).fold(0, |acc, (g, _)| acc | (1 << g)))
    }

    pub fn contains(self, g: usize) -> bool {
        g < 32 && self.0 & (1 << g) != 0
    }

    pub fn insert(&mut self, g: usize) {
        self.0 |= 1 << g;
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersect(self, other: GroupMask) -> GroupMask {
        GroupMask(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |g| self.contains(*g))
    }

    pub fn flags(self, groups: usize) -> Vec<bool> {
        (0..groups).map(|g| self.contains(g)).collect()
    }

    /// All non-empty subsets of `groups` groups, in increasing mask order.
    pub fn non_empty_subsets(groups: usize) -> Vec<GroupMask> {
        (1..(1u32 << groups)).map(GroupMask).collect()
    }
}

/// The RB pool `{0..M-1}` partitioned into `G` groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbPool {
    rbs: usize,
    groups: Vec<Vec<usize>>,
}

impl RbPool {
    /// Contiguous groups; the first `M mod G` groups get one extra RB.
    pub fn contiguous(rbs: usize, groups: usize) -> Result<Self> {
        if groups == 0 || groups > rbs || groups > 16 {
            return Err(invalid(format!("cannot split {rbs} RBs into {groups} groups")));
        }
        let (base, extra) = (rbs / groups, rbs % groups);
        let mut next = 0;
        let groups = (0..groups)
            .map(|g| {
                let size = base + usize::from(g < extra);
                let members = (next..next + size).collect();
                next += size;
                members
            })
            .collect();
        Ok(Self { rbs, groups })
    }

    pub fn new(rbs: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; rbs];
        for g in &groups {
            for &m in g {
                if m >= rbs || seen[m] {
                    return Err(invalid("RB groups must be disjoint and within the pool"));
                }
                seen[m] = true;
            }
        }
        if groups.is_empty() || groups.len() > 16 || groups.iter().any(Vec::is_empty) || seen.iter().any(|s| !s) {
            return Err(invalid("RB groups must be non-empty and cover the pool"));
        }
        Ok(Self { rbs, groups })
    }

    pub fn rbs(&self) -> usize {
        self.rbs
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn members(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    /// Per-RB selection bits for a set of groups.
    pub fn rb_bits(&self, mask: GroupMask) -> Vec<bool> {
        let mut bits = vec![false; self.rbs];
        for g in mask.iter().filter(|g| *g < self.groups.len()) {
            for &m in &self.groups[g] {
                bits[m] = true;
            }
        }
        bits
    }

    /// Per-group sums of per-RB values.
    pub fn group_sums(&self, per_rb: &[f64]) -> Vec<f64> {
        self.groups.iter().map(|g| g.iter().map(|&m| per_rb[m]).sum()).collect()
    }
}

/// Selected RBs of one slot and the candidate set they were drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbAllocation {
    pub bits: Vec<bool>,
    pub candidates: GroupMask,
    pub groups: GroupMask,
}

impl RbAllocation {
    /// Requested groups outside the candidate set are masked out.
    pub fn new(pool: &RbPool, candidates: GroupMask, requested: GroupMask) -> Self {
        let groups = requested.intersect(candidates).intersect(GroupMask::all(pool.num_groups()));
        Self { bits: pool.rb_bits(groups), candidates, groups }
    }

    pub fn selected(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// `sum_m b_m c_m`.
    pub fn served(&self, rates: &[f64]) -> f64 {
        self.bits.iter().zip(rates).filter(|(b, _)| **b).map(|(_, r)| r).sum()
    }

    /// Mean rate over selected RBs, 0 when nothing is selected.
    pub fn mean_rate(&self, rates: &[f64]) -> f64 {
        let k = self.selected();
        if k == 0 {
            0.0
        } else {
            self.served(rates) / k as f64
        }
    }
}

/// Per-RB SNRs from a realization and precomputed beam projections.
pub fn rb_snrs(
    real: &ChannelRealization,
    proj_rx: &[C64],
    proj_tx: &[C64],
    n: u64,
    rbs: usize,
    lb: &LinkBudget,
    pathloss: f64,
) -> Vec<f64> {
    let n_r = real.array.n_r();
    (0..rbs).map(|m| snr_from_gain(real.beam_gain(proj_rx, proj_tx, n, m), lb, pathloss, n_r)).collect()
}

/// Group rate sums and per-RB rates from explicit per-RB channel matrices.
pub fn group_rates(
    h_per_rb: &[ComplexMat],
    beams: &BeamConfig,
    g: &ArrayGeometry,
    pool: &RbPool,
    lb: &LinkBudget,
    pathloss: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if h_per_rb.len() != pool.rbs() {
        return Err(invalid(format!("{} channels for {} RBs", h_per_rb.len(), pool.rbs())));
    }
    let (w_t, w_r) = beams.weights(g)?;
    let per_rb = h_per_rb
        .iter()
        .map(|h| Ok(rate(snr_from_gain(beam_gain(h, &w_t, &w_r)?, lb, pathloss, g.n_r()), lb.rb_bandwidth_hz)))
        .collect::<Result<Vec<_>>>()?;
    Ok((pool.group_sums(&per_rb), per_rb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{channel_matrix, MultipathProfile, PathParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_channel(g: &ArrayGeometry, aod: Angles, aoa: Angles, alpha: C64) -> ComplexMat {
        let p = MultipathProfile {
            paths: vec![PathParams { alpha, doppler_hz: 0.0, delay_s: 0.0, aod, aoa }],
            symbol_duration: 66.7e-6,
        };
        channel_matrix(&p, g, 0, 0).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> ComplexMat {
        let data = (0..r * c).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        ComplexMat::from_vec(r, c, data).unwrap()
    }

    #[test]
    fn noise_power_cases() {
        let lb = LinkBudget::default();
        assert_eq!(noise_power(&LinkBudget { noise_temp_k: 0.0, ..lb }), 0.0);
        let expect = 1.380649e-23 * 290.0 * 1.8e5;
        assert!((noise_power(&lb) - expect).abs() < 1e-30);
        assert!((noise_power(&lb) - 7.207e-16).abs() < 1e-19);
        let wide = LinkBudget { rb_bandwidth_hz: 3.6e5, ..lb };
        assert!((noise_power(&wide) - 2.0 * noise_power(&lb)).abs() < 1e-30);
    }

    #[test]
    fn rate_cases() {
        assert_eq!(rate(0.0, 180e3), 0.0);
        assert!((rate(1.0, 180e3) - 180_000.0).abs() < 1e-9);
        assert!((rate(3.0, 180e3) - 360_000.0).abs() < 1e-9);
    }

    #[test]
    fn effective_power_folds_gains() {
        let lb = LinkBudget::default();
        assert!((lb.tx_power_w() - 1000.0).abs() < 1e-9);
        assert!((lb.effective_power() - 1e9).abs() < 1e-3);
    }

    #[test]
    fn matched_single_path_gain_is_alpha_squared() {
        let g = ArrayGeometry::default();
        let (aod, aoa) = (Angles::new(1.1, 1.6), Angles::new(0.8, 1.2));
        let alpha = C64::new(0.6, -0.3);
        let h = unit_channel(&g, aod, aoa, alpha);
        let b = BeamConfig::new(aod, aoa);
        let (w_t, w_r) = b.weights(&g).unwrap();
        assert!((beam_gain(&h, &w_t, &w_r).unwrap() - alpha.norm_sqr()).abs() < 1e-9);
        let lb = LinkBudget::default();
        let ln = 1e-16;
        let expect = lb.effective_power() * ln * alpha.norm_sqr() / (g.n_r() as f64 * noise_power(&lb));
        assert!((snr(&h, &b, &g, &lb, ln).unwrap() / expect - 1.0).abs() < 1e-9);
    }

    #[test]
    fn null_beam_gives_zero_snr() {
        // Single-element tx, 2-element rx; the channel column is [1, 1]/sqrt2
        // and the rx beam [1, -1]/sqrt2 is orthogonal to it.
        let g = ArrayGeometry::half_wavelength(1, 1, 1, 2, 0.075);
        let aoa = Angles::new(1.0, std::f64::consts::FRAC_PI_2);
        let h = unit_channel(&g, Angles::new(1.0, 1.0), aoa, C64::new(1.0, 0.0));
        let w_r = vec![C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0), C64::new(-std::f64::consts::FRAC_1_SQRT_2, 0.0)];
        let gain = beam_gain(&h, &[C64::new(1.0, 0.0)], &w_r).unwrap();
        assert!(gain < 1e-24);
        assert_eq!(snr_from_gain(0.0, &LinkBudget::default(), 1e-16, 2), 0.0);
    }

    #[test]
    fn snr_matches_scalar_oracle() {
        let g = ArrayGeometry::half_wavelength(2, 3, 2, 1, 0.075);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lb = LinkBudget::default();
        for _ in 0..20 {
            let h = random_matrix(&mut rng, 2, 6);
            let b = BeamConfig::new(
                Angles::new(rng.random_range(0.1..3.0), rng.random_range(0.1..3.0)),
                Angles::new(rng.random_range(0.1..3.0), rng.random_range(0.1..3.0)),
            );
            let (w_t, w_r) = b.weights(&g).unwrap();
            let mut acc = C64::new(0.0, 0.0);
            for (i, wr) in w_r.iter().enumerate() {
                for (j, wt) in w_t.iter().enumerate() {
                    acc += wr.conj() * h.get(i, j) * wt;
                }
            }
            let p_eff = 10f64.powf(9.0);
            let oracle = p_eff * 2e-16 * acc.norm_sqr() / (2.0 * BOLTZMANN * 290.0 * 180e3);
            let got = snr(&h, &b, &g, &lb, 2e-16).unwrap();
            assert!((got - oracle).abs() <= 1e-10 * oracle.abs().max(1e-300));
        }
    }

    #[test]
    fn snr_rejects_dimension_mismatch() {
        let g = ArrayGeometry::default();
        let h = ComplexMat::zeros(3, 3);
        let b = BeamConfig::new(Angles::new(1.0, 1.0), Angles::new(1.0, 1.0));
        assert!(snr(&h, &b, &g, &LinkBudget::default(), 1.0).is_err());
    }

    #[test]
    fn apply_offsets_cases() {
        let grid = OffsetGrid::new(vec![0.0, 0.05, -0.05]).unwrap();
        let base = Angles::new(1.0, 2.0);
        assert_eq!(apply_offsets(base, BeamOffsets::new(0, 0), &grid).unwrap(), base);
        let edge = Angles::new(PI - 0.01, 0.5);
        let out = apply_offsets(edge, BeamOffsets::new(1, 0), &grid).unwrap();
        assert_eq!(out.theta, PI - ANGLE_EPS);
        let once = apply_offsets(base, BeamOffsets::new(1, 2), &grid).unwrap();
        let zero = OffsetGrid::new(vec![0.0]).unwrap();
        assert_eq!(apply_offsets(once, BeamOffsets::new(0, 0), &zero).unwrap(), once);
        assert!(apply_offsets(base, BeamOffsets::new(3, 0), &grid).is_err());
    }

    #[test]
    fn default_grid_layout() {
        let grid = OffsetGrid::default();
        assert_eq!(grid.len(), 7);
        assert_eq!(grid.zero_index(), Some(0));
        assert_eq!(grid.nearest(4.0f64.to_radians()), 4);
        assert_eq!(grid.nearest(-30f64.to_radians()), 5);
    }

    #[test]
    fn pool_partition() {
        let pool = RbPool::contiguous(12, 3).unwrap();
        assert_eq!(pool.members(0), &[0, 1, 2, 3]);
        assert_eq!(pool.members(2), &[8, 9, 10, 11]);
        let uneven = RbPool::contiguous(7, 3).unwrap();
        assert_eq!(uneven.members(0).len(), 3);
        assert_eq!(uneven.members(2), &[5, 6]);
        assert!(RbPool::contiguous(2, 3).is_err());
        assert!(RbPool::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(RbPool::new(3, vec![vec![0], vec![2]]).is_err());
    }

    #[test]
    fn allocation_masks_forbidden_groups() {
        let pool = RbPool::contiguous(6, 3).unwrap();
        let alloc = RbAllocation::new(&pool, GroupMask(0b001), GroupMask(0b110));
        assert_eq!(alloc.selected(), 0);
        assert_eq!(alloc.mean_rate(&[1.0; 6]), 0.0);
        let alloc = RbAllocation::new(&pool, GroupMask(0b011), GroupMask(0b110));
        assert_eq!(alloc.bits, vec![false, false, true, true, false, false]);
        assert_eq!(alloc.served(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), 7.0);
        assert_eq!(alloc.mean_rate(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), 3.5);
    }

    #[test]
    fn subsets_enumeration() {
        let s = GroupMask::non_empty_subsets(3);
        assert_eq!(s.len(), 7);
        assert!(s.iter().all(|m| !m.is_empty()));
        assert_eq!(GroupMask::from_flags(&[true, false, true]), GroupMask(0b101));
        assert_eq!(GroupMask(0b101).flags(3), vec![true, false, true]);
    }

    #[test]
    fn group_rates_cases() {
        let g = ArrayGeometry::default();
        let pool = RbPool::contiguous(6, 3).unwrap();
        let lb = LinkBudget::default();
        let b = BeamConfig::new(Angles::new(1.0, 1.4), Angles::new(1.2, 1.5));
        let zeros = vec![ComplexMat::zeros(g.n_r(), g.n_t()); 6];
        let (gr, per) = group_rates(&zeros, &b, &g, &pool, &lb, 1e-16).unwrap();
        assert!(gr.iter().chain(&per).all(|r| *r == 0.0));

        let h = unit_channel(&g, Angles::new(1.0, 1.4), Angles::new(1.2, 1.5), C64::new(1.0, 0.0));
        let same = vec![h.clone(); 6];
        let (gr, per) = group_rates(&same, &b, &g, &pool, &lb, 1e-16).unwrap();
        for r in &gr {
            assert!((r - 2.0 * per[0]).abs() < 1e-6);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let hs: Vec<_> = (0..6).map(|_| random_matrix(&mut rng, g.n_r(), g.n_t())).collect();
        let (gr, per) = group_rates(&hs, &b, &g, &pool, &lb, 1e-16).unwrap();
        for (m, h) in hs.iter().enumerate() {
            let expect = rate(snr(h, &b, &g, &lb, 1e-16).unwrap(), lb.rb_bandwidth_hz);
            assert!((per[m] - expect).abs() < 1e-9 * expect.max(1.0));
        }
        for (gi, r) in gr.iter().enumerate() {
            let expect: f64 = pool.members(gi).iter().map(|&m| per[m]).sum();
            assert!((r - expect).abs() < 1e-9 * expect.max(1.0));
        }
    }

    proptest! {
        #[test]
        fn rate_increasing_and_concave(a in 0.0f64..1e6, d in 1e-3f64..1e3) {
            let b = 180e3;
            prop_assert!(rate(a + d, b) > rate(a, b));
            let mid = rate(a + d / 2.0, b);
            prop_assert!(mid >= (rate(a, b) + rate(a + d, b)) / 2.0 - 1e-9 * mid);
        }

        #[test]
        fn snr_invariant_to_global_phase(seed in 0u64..1000, phase in 0.0f64..std::f64::consts::TAU) {
            let g = ArrayGeometry::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_matrix(&mut rng, g.n_r(), g.n_t());
            let b = BeamConfig::new(Angles::new(1.0, 1.3), Angles::new(0.9, 2.0));
            let (w_t, w_r) = b.weights(&g).unwrap();
            let rot = C64::from_polar(1.0, phase);
            let w_t2: Vec<_> = w_t.iter().map(|x| x * rot).collect();
            let w_r2: Vec<_> = w_r.iter().map(|x| x * rot.conj()).collect();
            let a = beam_gain(&h, &w_t, &w_r).unwrap();
            prop_assert!((beam_gain(&h, &w_t2, &w_r).unwrap() - a).abs() < 1e-12 * a.max(1.0));
            prop_assert!((beam_gain(&h, &w_t, &w_r2).unwrap() - a).abs() < 1e-12 * a.max(1.0));
        }

        #[test]
        fn beam_gain_bounded_by_spectral_norm(seed in 0u64..500) {
            // Single-path channels are rank one, so the spectral norm is |alpha|.
            let g = ArrayGeometry::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut angle = || Angles::new(rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
            let (aod, aoa, bt, br) = (angle(), angle(), angle(), angle());
            let alpha = C64::new(0.7, 0.4);
            let h = unit_channel(&g, aod, aoa, alpha);
            let (w_t, w_r) = BeamConfig::new(bt, br).weights(&g).unwrap();
            prop_assert!(beam_gain(&h, &w_t, &w_r).unwrap() <= alpha.norm_sqr() * (1.0 + 1e-12));
        }
    }
}
