//! The two-time-scale environment.
//!
//! The satellite (higher tier) opens each cycle with a transmit beam and a
//! candidate RB-group set; the UE (lower tier) then steps `T` slots, each
//! with a receive beam and its own group selection; the cycle is closed with
//! [`Env::step_high`], which returns the cycle reward `R_H` and the next
//! higher-tier state.
//!
//! An episode is one service pass of the satellite mapped onto
//! `cycles * T` slots: slot `n` sees the ephemeris geometry at a time spread
//! uniformly across the in-service window. The multipath profile is drawn
//! once per cycle and re-anchored to each slot's line of sight, so within a
//! cycle paths move with the satellite and their phases evolve with `n`.

use crate::channel::{sample_paths, ArrayGeometry, ChannelConfig, ChannelRealization, MultipathProfile};
use crate::error::{invalid, Error, Result};
use crate::link::{
    apply_offsets, rate, snr_from_gain, BeamOffsets, GroupMask, LinkBudget, OffsetGrid, RbAllocation,
    RbPool,
};
use crate::orbit::{
    geometry_at, pathloss, service_window, Angles, GeometrySample, OrbitConfig, Vec3, DEFAULT_MIN_ELEVATION,
    DEFAULT_UE_ECEF_M,
};
use crate::rng::{stream, SimRng, Stream};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Write;

/// Slot bookkeeping for the two tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeScales {
    /// Slots per satellite cycle `T`.
    pub slots_per_cycle: usize,
    /// Slots per episode `N`.
    pub slots: usize,
}

impl TimeScales {
    pub fn new(slots_per_cycle: usize, slots: usize) -> Result<Self> {
        if slots_per_cycle == 0 || slots == 0 {
            return Err(invalid("cycle length and episode length must be at least 1"));
        }
        Ok(Self { slots_per_cycle, slots })
    }

    /// `N_H = floor((N - 1) / T)`.
    pub fn n_high(&self) -> usize {
        (self.slots - 1) / self.slots_per_cycle
    }

    /// `(k, p)` with `n = k T + p`.
    pub fn split(&self, n: usize) -> (usize, usize) {
        (n / self.slots_per_cycle, n % self.slots_per_cycle)
    }
}

/// Per-slot demand `unit * Poisson(lambda)`, no carry-over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandProcess {
    pub lambda: f64,
    /// Bits per demand unit.
    pub unit_bits: f64,
}

impl Default for DemandProcess {
    fn default() -> Self {
        Self { lambda: 2.0, unit_bits: 10e6 }
    }
}

impl DemandProcess {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) || !(self.unit_bits > 0.0 && self.unit_bits.is_finite()) {
            return Err(invalid("demand lambda and unit must be positive"));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let units: f64 = Poisson::new(self.lambda).expect("validated lambda").sample(rng);
        units * self.unit_bits
    }

    pub fn mean(&self) -> f64 {
        self.lambda * self.unit_bits
    }

    /// `P(D <= bits)`.
    pub fn cdf(&self, bits: f64) -> f64 {
        if bits < 0.0 {
            return 0.0;
        }
        let k_max = (bits / self.unit_bits).floor();
        if k_max > 10_000.0 {
            return 1.0;
        }
        let mut term = (-self.lambda).exp();
        let mut total = term;
        for k in 1..=(k_max as u64) {
            term *= self.lambda / k as f64;
            total += term;
        }
        total.min(1.0)
    }
}

/// Satisfaction punishment `Omega = min(served - D, 0)` and whether the
/// demand was met.
pub fn satisfaction(alloc: &RbAllocation, rates: &[f64], demand: f64) -> (f64, bool) {
    satisfaction_served(alloc.served(rates), demand)
}

pub fn satisfaction_served(served: f64, demand: f64) -> (f64, bool) {
    ((served - demand).min(0.0), served >= demand)
}

/// Instantaneous lower-tier reward from served rate and selected RB count.
/// An empty selection contributes no rate term.
pub fn instant_reward(served: f64, selected: usize, demand: f64, eta: f64) -> f64 {
    let mean = if selected == 0 { 0.0 } else { served / selected as f64 };
    mean + eta * satisfaction_served(served, demand).0
}

/// FIFO window over instantaneous rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBuffer {
    capacity: usize,
    items: VecDeque<f64>,
}

impl RewardBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("reward window must be at least 1"));
        }
        Ok(Self { capacity, items: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Pushes and returns the new mean.
    pub fn push(&mut self, r: f64) -> f64 {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(r);
        self.mean()
    }

    pub fn mean(&self) -> f64 {
        if self.items.is_empty() {
            0.0
        } else {
            self.items.iter().sum::<f64>() / self.items.len() as f64
        }
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

/// Smoothed lower-tier reward `R_L`; returns `(R_L, R_hat_L)`.
pub fn low_reward(
    alloc: &RbAllocation,
    rates: &[f64],
    demand: f64,
    eta: f64,
    buf: &mut RewardBuffer,
) -> (f64, f64) {
    let instant = instant_reward(alloc.served(rates), alloc.selected(), demand, eta);
    (buf.push(instant), instant)
}

/// What the cycle reward needs from one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub satisfied: bool,
    pub mean_rate: f64,
}

/// `R_H = (1/T) sum_p 1[satisfied_p] * mean_rate_p`.
pub fn high_reward(log: &[SlotOutcome]) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    log.iter().filter(|s| s.satisfied).map(|s| s.mean_rate).sum::<f64>() / log.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighState {
    pub p_leo: Vec3,
    /// Mean SNR over all RBs for each slot of the previous cycle.
    pub mean_snr: Vec<f64>,
}

impl HighState {
    pub fn len(&self) -> usize {
        3 + self.mean_snr.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowState {
    /// Per-RB SNR of the previous slot.
    pub snr: Vec<f64>,
    /// Mean per-antenna received magnitude of the previous slot.
    pub y_r: Vec<f64>,
}

impl LowState {
    pub fn zeros(rbs: usize, n_r: usize) -> Self {
        Self { snr: vec![0.0; rbs], y_r: vec![0.0; n_r] }
    }

    pub fn len(&self) -> usize {
        self.snr.len() + self.y_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HighAction {
    pub tx: BeamOffsets,
    pub groups: GroupMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LowAction {
    pub rx: BeamOffsets,
    pub groups: GroupMask,
}

/// Antenna counts and spacing in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub nt_x: usize,
    pub nt_y: usize,
    pub nr_x: usize,
    pub nr_y: usize,
    pub spacing_wavelengths: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { nt_x: 4, nt_y: 4, nr_x: 2, nr_y: 2, spacing_wavelengths: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// RB count `M`.
    pub rbs: usize,
    /// RB group count `G`.
    pub groups: usize,
    /// Slots per satellite cycle `T`.
    pub slots_per_cycle: usize,
    /// Satellite cycles per episode.
    pub cycles: usize,
    pub demand: DemandProcess,
    /// Punishment coefficient `eta`.
    pub eta: f64,
    /// FIFO reward window `W`.
    pub reward_window: usize,
    pub min_elevation_deg: f64,
    pub ue_ecef_m: [f64; 3],
    /// Central fraction of the service window covered by one episode;
    /// 0 freezes the geometry at culmination.
    pub pass_fraction: f64,
    pub offsets_deg: Vec<f64>,
    pub array: ArrayConfig,
    pub orbit: OrbitConfig,
    pub channel: ChannelConfig,
    pub link: LinkBudget,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            rbs: 60,
            groups: 3,
            slots_per_cycle: 100,
            cycles: 10,
            demand: DemandProcess::default(),
            eta: 1.0,
            reward_window: 20,
            min_elevation_deg: DEFAULT_MIN_ELEVATION.to_degrees(),
            ue_ecef_m: DEFAULT_UE_ECEF_M,
            pass_fraction: 1.0,
            offsets_deg: vec![0.0, -2.0, 2.0, -5.0, 5.0, -10.0, 10.0],
            array: ArrayConfig::default(),
            orbit: OrbitConfig::default(),
            channel: ChannelConfig::default(),
            link: LinkBudget::default(),
        }
    }
}

impl EnvConfig {
    /// Small instance used by tests and desk-scale experiments.
    pub fn desk() -> Self {
        Self { rbs: 12, slots_per_cycle: 10, ..Self::default() }
    }

    pub fn geometry(&self) -> ArrayGeometry {
        let lambda = self.link.wavelength();
        let d = self.array.spacing_wavelengths * lambda;
        ArrayGeometry {
            nt_x: self.array.nt_x,
            nt_y: self.array.nt_y,
            nr_x: self.array.nr_x,
            nr_y: self.array.nr_y,
            d_t: d,
            d_r: d,
            wavelength: lambda,
        }
    }

    pub fn pool(&self) -> Result<RbPool> {
        RbPool::contiguous(self.rbs, self.groups)
    }

    pub fn grid(&self) -> Result<OffsetGrid> {
        OffsetGrid::from_degrees(&self.offsets_deg)
    }

    pub fn time_scales(&self) -> Result<TimeScales> {
        TimeScales::new(self.slots_per_cycle, self.slots_per_cycle * self.cycles)
    }

    pub fn ue(&self) -> Vec3 {
        Vec3::from_array(self.ue_ecef_m)
    }

    /// Checks every field; errors name the offending field.
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        let at = |path: &str, e: Error| (path.to_string(), e.to_string());
        if self.rbs == 0 {
            return Err(("rbs".into(), "must be at least 1".into()));
        }
        if self.groups == 0 || self.groups > self.rbs || self.groups > 16 {
            return Err(("groups".into(), "must lie in 1..=min(rbs, 16)".into()));
        }
        if self.slots_per_cycle == 0 {
            return Err(("slots_per_cycle".into(), "must be at least 1".into()));
        }
        if self.cycles == 0 {
            return Err(("cycles".into(), "must be at least 1".into()));
        }
        self.demand.validate().map_err(|e| at("demand", e))?;
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(("eta".into(), "must be finite and non-negative".into()));
        }
        if self.reward_window == 0 {
            return Err(("reward_window".into(), "must be at least 1".into()));
        }
        if !(0.0..90.0).contains(&self.min_elevation_deg) {
            return Err(("min_elevation_deg".into(), "must lie in [0, 90)".into()));
        }
        if !self.ue_ecef_m.iter().all(|x| x.is_finite()) || self.ue().norm() == 0.0 {
            return Err(("ue_ecef_m".into(), "must be a finite non-zero position".into()));
        }
        if !(0.0..=1.0).contains(&self.pass_fraction) {
            return Err(("pass_fraction".into(), "must lie in [0, 1]".into()));
        }
        self.grid().map_err(|e| at("offsets_deg", e))?;
        if !(self.array.spacing_wavelengths > 0.0) {
            return Err(("array.spacing_wavelengths".into(), "must be positive".into()));
        }
        self.link.validate().map_err(|e| at("link", e))?;
        self.geometry().validate().map_err(|e| at("array", e))?;
        self.orbit.validate().map_err(|e| at("orbit", e))?;
        self.channel.validate().map_err(|e| at("channel", e))?;
        Ok(())
    }
}

/// Channel state of one slot.
#[derive(Debug, Clone)]
pub struct SlotChannel {
    pub realization: ChannelRealization,
    pub pathloss: f64,
    pub geometry: GeometrySample,
}

/// Everything `step_low` reports.
#[derive(Debug, Clone, PartialEq)]
pub struct LowStep {
    pub state: LowState,
    /// Smoothed reward `R_L`.
    pub reward: f64,
    /// Instantaneous reward before smoothing.
    pub instant: f64,
    pub rates: Vec<f64>,
    pub omega: f64,
    pub satisfied: bool,
    pub demand: f64,
    pub served: f64,
    pub alloc: RbAllocation,
    /// True when this slot closed the cycle's `T` low steps.
    pub cycle_complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighStep {
    pub state: HighState,
    pub reward: f64,
    pub done: bool,
}

/// One row of the slot trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub cycle: usize,
    pub demand: f64,
    pub served: f64,
    pub omega: f64,
    pub satisfied: bool,
    pub selected_rbs: usize,
    pub groups_used: usize,
    pub candidate_groups: usize,
    pub mean_rate: f64,
    pub mean_snr: f64,
    pub instant_reward: f64,
    pub low_reward: f64,
    pub tx_theta: f64,
    pub tx_phi: f64,
    pub rx_theta: f64,
    pub rx_phi: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitOpen,
    InCycle,
    AwaitClose,
    Done,
}

#[derive(Debug, Clone)]
struct Cycle {
    tx: Angles,
    rx_base: Angles,
    candidates: GroupMask,
    profile: MultipathProfile,
    anchor: GeometrySample,
    log: Vec<SlotOutcome>,
    mean_snr: Vec<f64>,
}

/// The simulator. One instance per run; not shared between threads.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    array: ArrayGeometry,
    pool: RbPool,
    grid: OffsetGrid,
    scales: TimeScales,
    geometries: Vec<GeometrySample>,
    channel_rng: SimRng,
    demand_rng: SimRng,
    phase: Phase,
    slot: usize,
    demand: f64,
    buffer: RewardBuffer,
    high_state: HighState,
    low_state: LowState,
    cycle: Option<Cycle>,
    current: Option<SlotChannel>,
    trace: Vec<SlotRecord>,
    high_rewards: Vec<f64>,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate().map_err(|(path, message)| Error::Config { path: format!("env.{path}"), message })?;
        let array = cfg.geometry();
        let pool = cfg.pool()?;
        let grid = cfg.grid()?;
        let scales = cfg.time_scales()?;
        let geometries = pass_geometries(&cfg, scales.slots)?;
        let buffer = RewardBuffer::new(cfg.reward_window)?;
        let high_state = HighState { p_leo: geometries[0].sat_position, mean_snr: vec![0.0; cfg.slots_per_cycle] };
        let low_state = LowState::zeros(cfg.rbs, array.n_r());
        Ok(Self {
            array,
            pool,
            grid,
            scales,
            geometries,
            channel_rng: stream(0, Stream::Channel, 0),
            demand_rng: stream(0, Stream::Demand, 0),
            phase: Phase::Done,
            slot: 0,
            demand: 0.0,
            buffer,
            high_state,
            low_state,
            cycle: None,
            current: None,
            trace: Vec::new(),
            high_rewards: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn array(&self) -> &ArrayGeometry {
        &self.array
    }

    pub fn pool(&self) -> &RbPool {
        &self.pool
    }

    pub fn grid(&self) -> &OffsetGrid {
        &self.grid
    }

    pub fn time_scales(&self) -> TimeScales {
        self.scales
    }

    /// Starts episode `episode` of run `seed`.
    pub fn reset(&mut self, seed: u64, episode: u64) -> HighState {
        self.channel_rng = stream(seed, Stream::Channel, episode);
        self.demand_rng = stream(seed, Stream::Demand, episode);
        self.phase = Phase::AwaitOpen;
        self.slot = 0;
        self.buffer.clear();
        self.high_state =
            HighState { p_leo: self.geometries[0].sat_position, mean_snr: vec![0.0; self.cfg.slots_per_cycle] };
        self.low_state = LowState::zeros(self.cfg.rbs, self.array.n_r());
        self.cycle = None;
        self.current = None;
        self.trace.clear();
        self.high_rewards.clear();
        self.demand = self.cfg.demand.sample(&mut self.demand_rng);
        self.high_state.clone()
    }

    pub fn high_state(&self) -> &HighState {
        &self.high_state
    }

    pub fn low_state(&self) -> &LowState {
        &self.low_state
    }

    /// Mean of the instantaneous rewards currently in the smoothing window.
    pub fn reward_window_mean(&self) -> f64 {
        self.buffer.mean()
    }

    /// Demand of the current slot.
    pub fn demand(&self) -> f64 {
        self.demand
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    /// Position `p` of the current slot inside its cycle.
    pub fn slot_in_cycle(&self) -> usize {
        self.scales.split(self.slot).1
    }

    pub fn cycle_index(&self) -> usize {
        self.scales.split(self.slot).0
    }

    pub fn done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn at_cycle_boundary(&self) -> bool {
        self.phase == Phase::AwaitOpen
    }

    /// Ephemeris geometry of slot `n` of the episode.
    pub fn geometry(&self, n: usize) -> Option<&GeometrySample> {
        self.geometries.get(n)
    }

    /// Transmit beam pointing at the line of sight at the start of cycle `k`.
    pub fn tx_base(&self, k: usize) -> Angles {
        let g = &self.geometries[(k * self.cfg.slots_per_cycle).min(self.geometries.len() - 1)];
        g.boresight_aod
    }

    /// Receive beam pointing at the line of sight at the start of cycle `k`.
    pub fn rx_base(&self, k: usize) -> Angles {
        let g = &self.geometries[(k * self.cfg.slots_per_cycle).min(self.geometries.len() - 1)];
        g.boresight_aoa
    }

    /// Profile of the open (or last closed) cycle and its anchor geometry.
    pub fn last_profile(&self) -> Option<(&MultipathProfile, &GeometrySample)> {
        self.cycle.as_ref().map(|c| (&c.profile, &c.anchor))
    }

    /// Channel of the current slot; only available inside a cycle.
    pub fn slot_channel(&self) -> Option<&SlotChannel> {
        self.current.as_ref()
    }

    pub fn candidates(&self) -> Option<GroupMask> {
        self.cycle.as_ref().map(|c| c.candidates)
    }

    pub fn tx(&self) -> Option<Angles> {
        self.cycle.as_ref().map(|c| c.tx)
    }

    pub fn trace(&self) -> &[SlotRecord] {
        &self.trace
    }

    /// Cycle rewards emitted so far this episode.
    pub fn high_rewards(&self) -> &[f64] {
        &self.high_rewards
    }

    /// Opens a cycle with grid offsets around the geometric pointing.
    pub fn open_cycle(&mut self, a: &HighAction) -> Result<()> {
        let k = self.cycle_index();
        let tx = apply_offsets(self.tx_base(k), a.tx, &self.grid)?;
        self.open_cycle_with(tx, a.groups)
    }

    /// Opens a cycle with an explicit transmit beam.
    pub fn open_cycle_with(&mut self, tx: Angles, candidates: GroupMask) -> Result<()> {
        if self.phase != Phase::AwaitOpen {
            return Err(Error::InvalidState("a cycle can only be opened at a cycle boundary".into()));
        }
        let candidates = candidates.intersect(GroupMask::all(self.cfg.groups));
        if candidates.is_empty() {
            return Err(invalid("candidate group set must be non-empty"));
        }
        let k = self.cycle_index();
        let anchor = self.geometries[self.slot];
        let profile =
            sample_paths(&mut self.channel_rng, &anchor, &self.cfg.channel, self.array.wavelength)?;
        self.cycle = Some(Cycle {
            tx,
            rx_base: self.rx_base(k),
            candidates,
            profile,
            anchor,
            log: Vec::with_capacity(self.cfg.slots_per_cycle),
            mean_snr: Vec::with_capacity(self.cfg.slots_per_cycle),
        });
        self.phase = Phase::InCycle;
        self.refresh_channel()?;
        Ok(())
    }

    fn refresh_channel(&mut self) -> Result<()> {
        let cycle = self.cycle.as_ref().expect("open cycle");
        let geo = self.geometries[self.slot];
        let profile = cycle.profile.reanchored(&cycle.anchor, &geo, self.array.wavelength);
        let realization = ChannelRealization::new(profile, self.array)?;
        let loss = pathloss(geo.slant_distance, self.cfg.link.carrier_hz);
        self.current = Some(SlotChannel { realization, pathloss: loss, geometry: geo });
        Ok(())
    }

    /// Per-RB rates of the current slot for explicit beams, without stepping.
    pub fn preview_rates(&self, tx: Angles, rx: Angles) -> Result<Vec<f64>> {
        let ch = self.current.as_ref().ok_or_else(|| Error::InvalidState("no open cycle".into()))?;
        Ok(self.rates_for(ch, tx, rx)?.1)
    }

    fn rates_for(&self, ch: &SlotChannel, tx: Angles, rx: Angles) -> Result<(Vec<f64>, Vec<f64>, Vec<C64Vec>)> {
        let w_t = crate::channel::steering_tx(&self.array, tx)?;
        let w_r = crate::channel::steering_rx(&self.array, rx)?;
        let ptx = ch.realization.project_tx(&w_t);
        let prx = ch.realization.project_rx(&w_r);
        let n = self.slot as u64;
        let mut snrs = Vec::with_capacity(self.cfg.rbs);
        let mut rates = Vec::with_capacity(self.cfg.rbs);
        let mut hw = Vec::with_capacity(self.cfg.rbs);
        for m in 0..self.cfg.rbs {
            let gain = ch.realization.beam_gain(&prx, &ptx, n, m);
            let s = snr_from_gain(gain, &self.cfg.link, ch.pathloss, self.array.n_r());
            snrs.push(s);
            rates.push(rate(s, self.cfg.link.rb_bandwidth_hz));
            hw.push(ch.realization.apply_tx(&ptx, n, m));
        }
        Ok((snrs, rates, hw))
    }

    /// One UE slot with grid offsets around the cycle's receive base.
    pub fn step_low(&mut self, a: &LowAction) -> Result<LowStep> {
        let base = self.cycle.as_ref().ok_or_else(|| Error::InvalidState("no open cycle".into()))?.rx_base;
        let rx = apply_offsets(base, a.rx, &self.grid)?;
        self.step_low_with(rx, a.groups)
    }

    /// One UE slot with an explicit receive beam.
    pub fn step_low_with(&mut self, rx: Angles, groups: GroupMask) -> Result<LowStep> {
        let tx = self.cycle.as_ref().map(|c| c.tx).ok_or_else(|| Error::InvalidState("no open cycle".into()))?;
        self.step_low_beams(tx, rx, groups)
    }

    /// One slot with both beams given explicitly; the transmit beam overrides
    /// the cycle's beam for this slot only. Used by per-slot sweeping
    /// baselines.
    pub fn step_low_beams(&mut self, tx: Angles, rx: Angles, groups: GroupMask) -> Result<LowStep> {
        if self.phase != Phase::InCycle {
            return Err(Error::InvalidState("step_low called outside an open cycle".into()));
        }
        let ch = self.current.as_ref().expect("channel of open cycle");
        let (snrs, rates, hw) = self.rates_for(ch, tx, rx)?;
        let elevation = ch.geometry.elevation;
        let cycle = self.cycle.as_mut().expect("open cycle");
        let alloc = RbAllocation::new(&self.pool, cycle.candidates, groups);
        let demand = self.demand;
        let served = alloc.served(&rates);
        let (omega, satisfied) = satisfaction_served(served, demand);
        let (reward, instant) = low_reward(&alloc, &rates, demand, self.cfg.eta, &mut self.buffer);
        let mean_rate = alloc.mean_rate(&rates);
        let mean_snr = snrs.iter().sum::<f64>() / snrs.len() as f64;
        cycle.log.push(SlotOutcome { satisfied, mean_rate });
        cycle.mean_snr.push(mean_snr);

        let n_r = self.array.n_r();
        let mut y_r = vec![0.0; n_r];
        for v in &hw {
            for (acc, x) in y_r.iter_mut().zip(v) {
                *acc += x.norm();
            }
        }
        y_r.iter_mut().for_each(|y| *y /= self.cfg.rbs as f64);
        let state = LowState { snr: snrs, y_r };

        let (k, _) = self.scales.split(self.slot);
        self.trace.push(SlotRecord {
            slot: self.slot,
            cycle: k,
            demand,
            served,
            omega,
            satisfied,
            selected_rbs: alloc.selected(),
            groups_used: alloc.groups.count(),
            candidate_groups: cycle.candidates.count(),
            mean_rate,
            mean_snr,
            instant_reward: instant,
            low_reward: reward,
            tx_theta: tx.theta,
            tx_phi: tx.phi,
            rx_theta: rx.theta,
            rx_phi: rx.phi,
            elevation,
        });

        self.low_state = state.clone();
        self.slot += 1;
        self.demand = self.cfg.demand.sample(&mut self.demand_rng);
        let cycle_complete = self.slot.is_multiple_of(self.cfg.slots_per_cycle);
        if cycle_complete {
            self.phase = Phase::AwaitClose;
            self.current = None;
        } else {
            self.refresh_channel()?;
        }
        Ok(LowStep { state, reward, instant, rates, omega, satisfied, demand, served, alloc, cycle_complete })
    }

    /// Closes the cycle after its `T` low steps.
    pub fn step_high(&mut self) -> Result<HighStep> {
        if self.phase != Phase::AwaitClose {
            return Err(Error::InvalidState("step_high called before the cycle's T low steps finished".into()));
        }
        let cycle = self.cycle.as_ref().expect("closed cycle");
        let reward = high_reward(&cycle.log);
        self.high_rewards.push(reward);
        let done = self.slot >= self.scales.slots;
        let pos = self.geometries[self.slot.min(self.geometries.len() - 1)].sat_position;
        self.high_state = HighState { p_leo: pos, mean_snr: cycle.mean_snr.clone() };
        self.phase = if done { Phase::Done } else { Phase::AwaitOpen };
        Ok(HighStep { state: self.high_state.clone(), reward, done })
    }

    /// Writes the slot trace as CSV.
    pub fn write_trace<W: Write>(&self, w: W) -> Result<()> {
        write_trace(&self.trace, w)
    }
}

type C64Vec = Vec<crate::numkit::C64>;

pub fn write_trace<W: Write>(records: &[SlotRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Ephemeris geometry for each slot of an episode.
fn pass_geometries(cfg: &EnvConfig, slots: usize) -> Result<Vec<GeometrySample>> {
    let ue = cfg.ue();
    let min_el = cfg.min_elevation_deg.to_radians();
    let period = cfg.orbit.period();
    let (rise, set) = service_window(&cfg.orbit, ue, min_el, 0.0, period)?
        .ok_or_else(|| Error::Config { path: "env.orbit".into(), message: "no service pass within one period".into() })?;
    let span = (set - rise) * cfg.pass_fraction;
    let start = 0.5 * (rise + set) - 0.5 * span;
    (0..slots)
        .map(|n| {
            let t = start + span * (n as f64 + 0.5) / slots as f64;
            geometry_at(&cfg.orbit, ue, t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::BeamOffsets;
    use crate::orbit::in_service;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk() -> EnvConfig {
        EnvConfig { cycles: 2, ..EnvConfig::desk() }
    }

    fn zero_high(g: usize) -> HighAction {
        HighAction { tx: BeamOffsets::default(), groups: GroupMask::all(g) }
    }

    fn zero_low(g: usize) -> LowAction {
        LowAction { rx: BeamOffsets::default(), groups: GroupMask::all(g) }
    }

    #[test]
    fn demand_statistics() {
        let d = DemandProcess::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = d.sample(&mut rng);
            assert!(x >= 0.0);
            assert_eq!((x / d.unit_bits).fract(), 0.0);
            sum += x;
        }
        let mean = sum / n as f64;
        assert!((mean / (2.0 * d.unit_bits) - 1.0).abs() < 0.01, "mean {mean}");
        let tiny = DemandProcess { lambda: 1e-9, unit_bits: 1.0 };
        assert!((0..1000).all(|_| tiny.sample(&mut rng) == 0.0));
    }

    #[test]
    fn demand_cdf_matches_poisson() {
        let d = DemandProcess { lambda: 2.0, unit_bits: 10.0 };
        let e2 = (-2.0f64).exp();
        assert!((d.cdf(0.0) - e2).abs() < 1e-15);
        assert!((d.cdf(15.0) - 3.0 * e2).abs() < 1e-15);
        assert!((d.cdf(20.0) - 5.0 * e2).abs() < 1e-15);
        assert_eq!(d.cdf(-1.0), 0.0);
        assert!((d.cdf(1e9) - 1.0).abs() < 1e-12);
    }

    fn one_rb_alloc() -> RbAllocation {
        let pool = RbPool::contiguous(1, 1).unwrap();
        RbAllocation::new(&pool, GroupMask(1), GroupMask(1))
    }

    #[test]
    fn satisfaction_cases() {
        let a = one_rb_alloc();
        assert_eq!(satisfaction(&a, &[5.0], 5.0), (0.0, true));
        assert_eq!(satisfaction(&a, &[5.0], 7.5), (-2.5, false));
        let pool = RbPool::contiguous(1, 1).unwrap();
        let empty = RbAllocation::new(&pool, GroupMask(1), GroupMask::EMPTY);
        assert_eq!(satisfaction(&empty, &[5.0], 0.0), (0.0, true));
    }

    #[test]
    fn low_reward_cases() {
        let a = one_rb_alloc();
        let mut buf = RewardBuffer::new(1).unwrap();
        assert_eq!(low_reward(&a, &[7.0], 3.0, 1.0, &mut buf).0, 7.0);
        let mut buf = RewardBuffer::new(5).unwrap();
        assert_eq!(low_reward(&a, &[7.0], 100.0, 0.0, &mut buf).1, 7.0);
        let mut buf = RewardBuffer::new(4).unwrap();
        let means: Vec<f64> = [1.0, 2.0, 3.0, 4.0].iter().map(|r| buf.push(*r)).collect();
        assert_eq!(means, vec![1.0, 1.5, 2.0, 2.5]);
        buf.push(10.0);
        assert_eq!(buf.len(), 4);
        assert_eq!(buf.mean(), (2.0 + 3.0 + 4.0 + 10.0) / 4.0);
        // Empty allocation: no rate term, full demand as punishment.
        assert_eq!(instant_reward(0.0, 0, 4.0, 2.0), -8.0);
    }

    #[test]
    fn high_reward_cases() {
        let s = |satisfied, mean_rate| SlotOutcome { satisfied, mean_rate };
        assert_eq!(high_reward(&[s(false, 3.0), s(false, 9.0)]), 0.0);
        assert_eq!(high_reward(&[s(true, 4.0); 5]), 4.0);
        assert_eq!(high_reward(&[s(true, 10.0), s(false, 15.0), s(true, 20.0)]), 10.0);
    }

    #[test]
    fn time_scales() {
        let t = TimeScales::new(10, 100).unwrap();
        assert_eq!(t.n_high(), 9);
        assert_eq!(t.split(37), (3, 7));
        assert!(TimeScales::new(0, 5).is_err());
    }

    #[test]
    fn pass_stays_in_service() {
        let cfg = EnvConfig::desk();
        let env = Env::new(cfg.clone()).unwrap();
        let min = cfg.min_elevation_deg.to_radians();
        let n = env.time_scales().slots;
        for i in 0..n {
            assert!(in_service(env.geometry(i).unwrap().elevation, min));
        }
        // The beam must actually move across the pass.
        let first = env.geometry(0).unwrap().boresight_aod;
        let last = env.geometry(n - 1).unwrap().boresight_aod;
        assert!((first.theta - last.theta).abs() > 1.0);
    }

    #[test]
    fn state_lengths_and_first_cycle() {
        let cfg = desk();
        let mut env = Env::new(cfg.clone()).unwrap();
        let hs = env.reset(1, 0);
        assert_eq!(hs.len(), 3 + cfg.slots_per_cycle);
        assert!(hs.mean_snr.iter().all(|x| *x == 0.0));
        env.open_cycle(&zero_high(3)).unwrap();
        for _ in 0..cfg.slots_per_cycle {
            let s = env.step_low(&zero_low(3)).unwrap();
            assert_eq!(s.state.len(), cfg.rbs + 4);
            assert!(s.state.snr.iter().chain(&s.state.y_r).all(|x| *x >= 0.0));
        }
        let h = env.step_high().unwrap();
        assert_eq!(h.state.len(), 3 + cfg.slots_per_cycle);
        assert!(h.state.mean_snr.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn cycle_protocol_errors() {
        let cfg = desk();
        let mut env = Env::new(cfg).unwrap();
        env.reset(1, 0);
        assert!(matches!(env.step_low(&zero_low(3)), Err(Error::InvalidState(_))));
        assert!(matches!(env.step_high(), Err(Error::InvalidState(_))));
        env.open_cycle(&zero_high(3)).unwrap();
        assert!(matches!(env.open_cycle(&zero_high(3)), Err(Error::InvalidState(_))));
        env.step_low(&zero_low(3)).unwrap();
        assert!(matches!(env.step_high(), Err(Error::InvalidState(_))));
        assert!(env.open_cycle_with(Angles::new(1.0, 1.0), GroupMask::EMPTY).is_err());
    }

    #[test]
    fn masked_action_takes_empty_path() {
        let cfg = desk();
        let mut env = Env::new(cfg).unwrap();
        env.reset(2, 0);
        env.open_cycle(&HighAction { tx: BeamOffsets::default(), groups: GroupMask(0b001) }).unwrap();
        let d = env.demand();
        let s = env.step_low(&LowAction { rx: BeamOffsets::default(), groups: GroupMask(0b110) }).unwrap();
        assert_eq!(s.alloc.selected(), 0);
        assert_eq!(s.instant, -d);
        assert_eq!(s.omega, (-d).min(0.0));
    }

    #[test]
    fn static_channel_fixed_point() {
        // Single LOS path and frozen geometry: unit-modulus phase evolution
        // leaves every magnitude unchanged.
        let cfg = EnvConfig {
            pass_fraction: 0.0,
            channel: ChannelConfig { paths: 1, ..ChannelConfig::default() },
            ..desk()
        };
        let mut env = Env::new(cfg).unwrap();
        env.reset(4, 0);
        env.open_cycle(&zero_high(3)).unwrap();
        let a = env.step_low(&zero_low(3)).unwrap().state;
        let b = env.step_low(&zero_low(3)).unwrap().state;
        for (x, y) in a.snr.iter().zip(&b.snr).chain(a.y_r.iter().zip(&b.y_r)) {
            assert!((x - y).abs() <= 1e-9 * x.abs());
        }
    }

    #[test]
    fn hand_traced_two_rb_step() {
        let cfg = EnvConfig {
            rbs: 2,
            groups: 2,
            slots_per_cycle: 2,
            cycles: 1,
            pass_fraction: 0.0,
            channel: ChannelConfig { paths: 1, ..ChannelConfig::default() },
            ..EnvConfig::desk()
        };
        let mut env = Env::new(cfg.clone()).unwrap();
        env.reset(9, 0);
        env.open_cycle(&HighAction { tx: BeamOffsets::default(), groups: GroupMask(0b11) }).unwrap();
        let d = env.demand();
        let ch = env.slot_channel().unwrap().clone();
        let tx = env.tx().unwrap();
        let rx = env.rx_base(0);
        let g = *env.array();
        let lb = cfg.link;
        let s = env.step_low(&LowAction { rx: BeamOffsets::default(), groups: GroupMask(0b01) }).unwrap();
        // Manual: build H for RB 0 and 1 and evaluate the link equation.
        let mut rates = Vec::new();
        for m in 0..2 {
            let h = crate::channel::channel_matrix(&ch.realization.profile, &g, 0, m).unwrap();
            let b = crate::link::BeamConfig::new(tx, rx);
            let snr = crate::link::snr(&h, &b, &g, &lb, ch.pathloss).unwrap();
            assert!((s.state.snr[m] - snr).abs() <= 1e-9 * snr);
            rates.push(rate(snr, lb.rb_bandwidth_hz));
        }
        let omega = (rates[0] - d).min(0.0);
        assert!((s.omega - omega).abs() <= 1e-6);
        assert!((s.instant - (rates[0] + omega)).abs() <= 1e-6);
        assert_eq!(s.reward, s.instant);
    }

    #[test]
    fn bookkeeping_identity_two_cycles() {
        let cfg = desk();
        let mut env = Env::new(cfg.clone()).unwrap();
        env.reset(11, 0);
        let (mut low_sum, mut high_sum, mut lows, mut highs) = (0.0, 0.0, 0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        while !env.done() {
            let grp = GroupMask(rng.random_range(1..8));
            env.open_cycle(&HighAction { tx: BeamOffsets::new(rng.random_range(0..7), 0), groups: grp }).unwrap();
            let mut steps = 0;
            loop {
                let a = LowAction { rx: BeamOffsets::new(rng.random_range(0..7), 3), groups: GroupMask(rng.random_range(0..8)) };
                let s = env.step_low(&a).unwrap();
                low_sum += s.reward;
                lows += 1;
                steps += 1;
                if s.cycle_complete {
                    break;
                }
            }
            assert_eq!(steps, cfg.slots_per_cycle);
            high_sum += env.step_high().unwrap().reward;
            highs += 1;
        }
        assert_eq!((lows, highs), (20, 2));
        // Recompute from the trace alone.
        let mut buf = RewardBuffer::new(cfg.reward_window).unwrap();
        let mut low_direct = 0.0;
        let mut high_direct = 0.0;
        for r in env.trace() {
            low_direct += buf.push(instant_reward(r.served, r.selected_rbs, r.demand, cfg.eta));
            if r.satisfied {
                high_direct += r.mean_rate / cfg.slots_per_cycle as f64;
            }
        }
        let scale = (low_sum.abs() + high_sum.abs()).max(1.0);
        assert!(((low_sum + high_sum) - (low_direct + high_direct)).abs() <= 1e-9 * scale);
    }

    #[test]
    fn same_seed_same_trace_and_csv() {
        let run = |seed| {
            let mut env = Env::new(desk()).unwrap();
            env.reset(seed, 3);
            while !env.done() {
                env.open_cycle(&zero_high(3)).unwrap();
                while !env.step_low(&zero_low(3)).unwrap().cycle_complete {}
                env.step_high().unwrap();
            }
            let mut buf = Vec::new();
            env.write_trace(&mut buf).unwrap();
            (env.trace().to_vec(), buf)
        };
        let (a, ca) = run(7);
        let (b, cb) = run(7);
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        assert_ne!(run(8).0, a);
        let text = String::from_utf8(ca).unwrap();
        assert!(text.starts_with("slot,cycle,demand,served,omega"));
        assert_eq!(text.lines().count(), 21);
    }

    #[test]
    fn invalid_config_names_field() {
        let cfg = EnvConfig { groups: 0, ..EnvConfig::desk() };
        match Env::new(cfg) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "env.groups"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
