//! Satellite action selection by multi-cycle lookahead.
//!
//! A candidate is a transmit offset pair plus a candidate group subset. The
//! rollout scores every candidate by the discounted cycle rewards predicted
//! over `depth` cycles plus the tail value of the state reached, with later
//! cycles choosing their best candidate as well. Ties go to the lowest
//! candidate index.

use super::agents::DecisionTrajectory;
use super::features::FeatureScale;
use crate::channel::{steering_rx, steering_tx, ChannelRealization};
use crate::env::{DemandProcess, Env, HighAction, HighState};
use crate::error::{invalid, Error, Result};
use crate::link::{apply_offsets, rate, snr_from_gain, BeamOffsets, GroupMask, RbAllocation, RbPool};
use crate::numkit::Mlp;
use crate::orbit::pathloss;
use serde::{Deserialize, Serialize};

/// How the simulator scores an unknown future demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutDemand {
    /// Satisfaction weighted by `P(D <= served)`.
    #[default]
    Expected,
    /// Satisfaction against the mean demand.
    Mean,
}

/// A cycle-level model the rollout can query.
pub trait CycleModel {
    type State;
    fn num_candidates(&self) -> usize;
    /// Reward of candidate `c` at lookahead depth `p` and the state it leads to.
    fn step(&self, s: &Self::State, c: usize, p: usize) -> (f64, Self::State);
    fn tail(&self, s: &Self::State) -> f64;
    /// True when `step` ignores its incoming state; enables an
    /// `O(depth * candidates)` search instead of the full tree.
    fn state_independent(&self) -> bool {
        false
    }
}

fn first_max(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

fn tree_value<M: CycleModel>(m: &M, s: &M::State, p: usize, depth: usize, gamma: f64) -> f64 {
    if p == depth {
        return m.tail(s);
    }
    (0..m.num_candidates())
        .map(|c| {
            let (r, next) = m.step(s, c, p);
            r + gamma * tree_value(m, &next, p + 1, depth, gamma)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Best first-cycle candidate and its lookahead value.
pub fn rollout_select<M: CycleModel>(m: &M, start: &M::State, depth: usize, gamma: f64) -> Result<(usize, f64)> {
    if depth == 0 || m.num_candidates() == 0 {
        return Err(invalid("rollout needs depth >= 1 and at least one candidate"));
    }
    let n = m.num_candidates();
    if m.state_independent() {
        // best[p]: value of acting optimally from depth p on.
        let mut best_after = 0.0;
        for p in (1..depth).rev() {
            best_after = (0..n)
                .map(|c| {
                    let (r, next) = m.step(start, c, p);
                    r + gamma * if p + 1 == depth { m.tail(&next) } else { best_after }
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let q = (0..n).map(|c| {
            let (r, next) = m.step(start, c, 0);
            r + gamma * if depth == 1 { m.tail(&next) } else { best_after }
        });
        return first_max(q).ok_or_else(|| Error::Numerical("empty rollout".into()));
    }
    let q = (0..n).map(|c| {
        let (r, next) = m.step(start, c, 0);
        r + gamma * tree_value(m, &next, 1, depth, gamma)
    });
    first_max(q).ok_or_else(|| Error::Numerical("empty rollout".into()))
}

/// Every `(theta offset, phi offset, group subset)` combination, offsets
/// outermost. Within an offset pair, larger masks come first, so when the
/// model is indifferent the satellite offers the UE every group rather than
/// locking it into the fewest.
pub fn candidate_table(offsets: usize, groups: usize) -> Vec<HighAction> {
    let mut subsets = GroupMask::non_empty_subsets(groups);
    subsets.reverse();
    let mut out = Vec::with_capacity(offsets * offsets * subsets.len());
    for theta in 0..offsets {
        for phi in 0..offsets {
            for &g in &subsets {
                out.push(HighAction { tx: BeamOffsets::new(theta, phi), groups: g });
            }
        }
    }
    out
}

/// Per-slot inputs the model precomputes for one lookahead cycle.
#[derive(Debug, Clone)]
struct CycleTable {
    /// `[tx pair][slot][rb]` rates.
    rates: Vec<Vec<Vec<f64>>>,
    /// Groups the UE is assumed to request in each slot.
    requested: Vec<GroupMask>,
    /// Tail value of the state reached with each tx pair.
    tail: Vec<f64>,
}

/// Lookahead model of the environment: the last cycle's multipath profile
/// re-anchored to ephemeris geometry of the coming cycles, UE actions from
/// the decision trajectory, and a demand model in place of draws.
#[derive(Debug, Clone)]
pub struct EnvCycleModel {
    candidates: Vec<HighAction>,
    subsets: usize,
    offsets: usize,
    cycles: Vec<CycleTable>,
    pool: RbPool,
    demand: DemandProcess,
    mode: RolloutDemand,
    reward_scale: f64,
    gain_evaluations: u64,
}

impl EnvCycleModel {
    /// Builds the model at a cycle boundary of `env`, looking `depth` cycles
    /// ahead. `tail_value` scores states by the satellite's features.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        env: &Env,
        trajectory: &DecisionTrajectory,
        tail_value: &Mlp,
        features: &FeatureScale,
        depth: usize,
        mode: RolloutDemand,
        reward_scale: f64,
    ) -> Result<Self> {
        if !env.at_cycle_boundary() {
            return Err(Error::InvalidState("the rollout model is built between cycles".into()));
        }
        let (profile, anchor) =
            env.last_profile().ok_or_else(|| Error::InvalidState("no previous cycle to learn from".into()))?;
        if trajectory.actions.is_empty() {
            return Err(invalid("decision trajectory is empty"));
        }
        let cfg = env.config();
        let array = *env.array();
        let grid = env.grid();
        let t = cfg.slots_per_cycle;
        let last_slot = env.time_scales().slots - 1;
        let k0 = env.cycle_index();
        let k_offsets = grid.len();
        let mut cycles = Vec::with_capacity(depth);
        let mut gain_evaluations = 0u64;
        for p in 0..depth {
            let k = k0 + p;
            let tx_weights = (0..k_offsets * k_offsets)
                .map(|i| {
                    let tx = apply_offsets(env.tx_base(k), BeamOffsets::new(i / k_offsets, i % k_offsets), grid)?;
                    steering_tx(&array, tx)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut rates = vec![Vec::with_capacity(t); tx_weights.len()];
            let mut mean_snr = vec![Vec::with_capacity(t); tx_weights.len()];
            let mut requested = Vec::with_capacity(t);
            for q in 0..t {
                let n = (k * t + q).min(last_slot);
                let geo = env.geometry(n).ok_or_else(|| invalid("slot outside the pass"))?;
                let real = ChannelRealization::new(profile.reanchored(anchor, geo, array.wavelength), array)?;
                let loss = pathloss(geo.slant_distance, cfg.link.carrier_hz);
                let choice = &trajectory.actions[(p * t + q).min(trajectory.actions.len() - 1)];
                let action = choice.to_action();
                requested.push(action.groups);
                let rx = apply_offsets(env.rx_base(k), action.rx, grid)?;
                let prx = real.project_rx(&steering_rx(&array, rx)?);
                for (i, w_t) in tx_weights.iter().enumerate() {
                    let ptx = real.project_tx(w_t);
                    let mut slot_rates = Vec::with_capacity(cfg.rbs);
                    let mut snr_sum = 0.0;
                    for m in 0..cfg.rbs {
                        let s = snr_from_gain(real.beam_gain(&prx, &ptx, n as u64, m), &cfg.link, loss, array.n_r());
                        snr_sum += s;
                        slot_rates.push(rate(s, cfg.link.rb_bandwidth_hz));
                    }
                    gain_evaluations += cfg.rbs as u64;
                    rates[i].push(slot_rates);
                    mean_snr[i].push(snr_sum / cfg.rbs as f64);
                }
            }
            let next_pos = env.geometry(((k + 1) * t).min(last_slot)).expect("clamped slot").sat_position;
            let tail = mean_snr
                .into_iter()
                .map(|ms| tail_value.scalar(&features.high(&HighState { p_leo: next_pos, mean_snr: ms })))
                .collect::<Result<Vec<_>>>()?;
            cycles.push(CycleTable { rates, requested, tail });
        }
        Ok(Self {
            candidates: candidate_table(k_offsets, cfg.groups),
            subsets: GroupMask::non_empty_subsets(cfg.groups).len(),
            offsets: k_offsets,
            cycles,
            pool: env.pool().clone(),
            demand: cfg.demand,
            mode,
            reward_scale,
            gain_evaluations,
        })
    }

    pub fn candidates(&self) -> &[HighAction] {
        &self.candidates
    }

    /// Beam-gain evaluations spent building the model.
    pub fn gain_evaluations(&self) -> u64 {
        self.gain_evaluations
    }

    /// Predicted (unscaled) cycle reward of candidate `c` at depth `p`.
    pub fn cycle_reward(&self, c: usize, p: usize) -> f64 {
        let table = &self.cycles[p];
        let tx = c / self.subsets;
        let subset = self.candidates[c].groups;
        let mut total = 0.0;
        for (rates, req) in table.rates[tx].iter().zip(&table.requested) {
            let alloc = RbAllocation::new(&self.pool, subset, *req);
            let served = alloc.served(rates);
            let weight = match self.mode {
                RolloutDemand::Expected => self.demand.cdf(served),
                RolloutDemand::Mean => f64::from(u8::from(served >= self.demand.mean())),
            };
            total += weight * alloc.mean_rate(rates);
        }
        total / table.requested.len() as f64
    }

    pub fn offsets(&self) -> usize {
        self.offsets
    }
}

impl CycleModel for EnvCycleModel {
    /// `(depth, tx pair)` of the last simulated cycle.
    type State = Option<(usize, usize)>;

    fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    fn step(&self, _s: &Self::State, c: usize, p: usize) -> (f64, Self::State) {
        (self.reward_scale * self.cycle_reward(c, p), Some((p, c / self.subsets)))
    }

    fn tail(&self, s: &Self::State) -> f64 {
        s.map_or(0.0, |(p, tx)| self.cycles[p].tail[tx])
    }

    fn state_independent(&self) -> bool {
        true
    }
}
