//! Separated-optimisation comparison schemes: brute-force beam sweeping
//! (BFS) or periodic geometric beam updates (PBU), each combined with greedy
//! or UCB1 bandit RB-group allocation; plus the driver that runs any scheme,
//! including the learned one and its ablations, through evaluation episodes.

use crate::channel::{steering_rx, steering_tx, ChannelRealization};
use crate::collab::{Ablation, AgentConfig, Trainer};
use crate::env::{Env, EnvConfig};
use crate::error::{invalid, Error, Result};
use crate::link::{apply_offsets, BeamOffsets, GroupMask, OffsetGrid};
use crate::metrics::{EpisodeMetrics, SchemeMetrics};
use crate::orbit::{Angles, GeometrySample};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Beam-sweep grid step.
pub const BFS_STEP: f64 = 10.0 * PI / 180.0;

/// Episode index offset for evaluation streams, keeping them disjoint from
/// training episodes of the same seed.
pub const EVAL_EPISODE_BASE: u64 = 1 << 32;

/// `k * step` for every `k >= 1` strictly inside `(0, pi)`.
pub fn angle_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(invalid("grid step must be positive"));
    }
    Ok((1..).map(|k| k as f64 * step).take_while(|a| *a < PI - 1e-12).collect())
}

/// Outcome of one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub angles: Angles,
    /// Maximised metric summed over RBs.
    pub gain: f64,
    /// Beam-gain evaluations spent.
    pub evaluations: u64,
}

fn sweep<F: FnMut(Angles) -> Result<f64>>(step: f64, rbs: usize, mut score: F) -> Result<Sweep> {
    let grid = angle_grid(step)?;
    let mut best: Option<Sweep> = None;
    let mut evaluations = 0;
    for &theta in &grid {
        for &phi in &grid {
            let a = Angles::new(theta, phi);
            let g = score(a)?;
            evaluations += rbs as u64;
            if best.is_none_or(|b| g > b.gain) {
                best = Some(Sweep { angles: a, gain: g, evaluations: 0 });
            }
        }
    }
    let mut b = best.ok_or_else(|| invalid("empty sweep grid"))?;
    b.evaluations = evaluations;
    Ok(b)
}

/// Transmit sweep maximising received energy `sum_m ||H[n, m] w_t||^2`.
pub fn bfs_tx(ch: &ChannelRealization, n: u64, rbs: usize, step: f64) -> Result<Sweep> {
    sweep(step, rbs, |a| {
        let ptx = ch.project_tx(&steering_tx(&ch.array, a)?);
        Ok((0..rbs).map(|m| ch.apply_tx(&ptx, n, m).iter().map(|v| v.norm_sqr()).sum::<f64>()).sum())
    })
}

/// Receive sweep maximising `sum_m |w_r^H H[n, m] w_t|^2` for a given beam.
pub fn bfs_rx(ch: &ChannelRealization, n: u64, rbs: usize, step: f64, tx: Angles) -> Result<Sweep> {
    let ptx = ch.project_tx(&steering_tx(&ch.array, tx)?);
    sweep(step, rbs, |a| {
        let prx = ch.project_rx(&steering_rx(&ch.array, a)?);
        Ok((0..rbs).map(|m| ch.beam_gain(&prx, &ptx, n, m)).sum())
    })
}

/// Transmit then receive sweep; returns both beams and the evaluations spent.
pub fn bfs_beam(ch: &ChannelRealization, n: u64, rbs: usize, step: f64) -> Result<(Angles, Angles, u64)> {
    let tx = bfs_tx(ch, n, rbs, step)?;
    let rx = bfs_rx(ch, n, rbs, step, tx.angles)?;
    Ok((tx.angles, rx.angles, tx.evaluations + rx.evaluations))
}

/// Geometric pointing at the line of sight of `geo`, snapped to the offset
/// grid entry nearest to zero. Returns `(tx, rx)`.
pub fn pbu_beam(geo: &GeometrySample, grid: &OffsetGrid) -> Result<(Angles, Angles)> {
    let z = grid.nearest(0.0);
    let off = BeamOffsets::new(z, z);
    Ok((apply_offsets(geo.boresight_aod, off, grid)?, apply_offsets(geo.boresight_aoa, off, grid)?))
}

/// Groups by rate, best first, until their rates cover `demand`; every group
/// when none suffices, none when `demand <= 0`.
pub fn greedy_alloc(group_rates: &[f64], demand: f64) -> GroupMask {
    let mut mask = GroupMask::EMPTY;
    if demand <= 0.0 {
        return mask;
    }
    let mut order: Vec<usize> = (0..group_rates.len()).collect();
    order.sort_by(|a, b| group_rates[*b].total_cmp(&group_rates[*a]));
    let mut sum = 0.0;
    for g in order {
        mask.insert(g);
        sum += group_rates[g];
        if sum >= demand {
            break;
        }
    }
    mask
}

/// UCB1 statistics over RB groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MabState {
    pub counts: Vec<u64>,
    pub means: Vec<f64>,
    pub exploration: f64,
    /// Largest rate seen; rewards are divided by it before scoring.
    pub scale: f64,
}

impl MabState {
    pub fn new(groups: usize, exploration: f64) -> Self {
        Self { counts: vec![0; groups], means: vec![0.0; groups], exploration, scale: 0.0 }
    }

    fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// UCB score; unpulled groups score infinity.
    pub fn score(&self, g: usize) -> f64 {
        if self.counts[g] == 0 {
            return f64::INFINITY;
        }
        let norm = if self.scale > 0.0 { self.means[g] / self.scale } else { 0.0 };
        norm + self.exploration * ((self.total() as f64).ln() / self.counts[g] as f64).sqrt()
    }

    /// Groups in score order until their estimated rates cover `demand`.
    /// An unpulled group's estimate counts as unlimited.
    pub fn select(&self, demand: f64) -> GroupMask {
        let mut mask = GroupMask::EMPTY;
        if demand <= 0.0 {
            return mask;
        }
        let scores: Vec<f64> = (0..self.counts.len()).map(|g| self.score(g)).collect();
        let mut order: Vec<usize> = (0..self.counts.len()).collect();
        order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
        let mut sum = 0.0;
        for g in order {
            mask.insert(g);
            sum += if self.counts[g] == 0 { f64::INFINITY } else { self.means[g] };
            if sum >= demand {
                break;
            }
        }
        mask
    }

    /// Folds realised rates of the pulled groups into the estimates.
    pub fn update(&mut self, pulled: GroupMask, group_rates: &[f64]) {
        let groups = self.counts.len();
        for g in pulled.iter().filter(|g| *g < groups) {
            self.counts[g] += 1;
            self.means[g] += (group_rates[g] - self.means[g]) / self.counts[g] as f64;
            self.scale = self.scale.max(group_rates[g]);
        }
    }
}

/// One bandit round: select, then learn from the realised rates.
pub fn mab_alloc(state: &mut MabState, demand: f64, group_rates: &[f64]) -> GroupMask {
    let mask = state.select(demand);
    state.update(mask, group_rates);
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamStrategy {
    Bfs,
    Pbu,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocStrategy {
    Greedy,
    Mab,
    Learned,
}

/// A valid (beam, allocation, ablation) combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SchemeId {
    beam: BeamStrategy,
    alloc: AllocStrategy,
    ablation: Ablation,
}

impl SchemeId {
    pub const BFS_GREEDY: SchemeId = Self::fixed(BeamStrategy::Bfs, AllocStrategy::Greedy);
    pub const BFS_MAB: SchemeId = Self::fixed(BeamStrategy::Bfs, AllocStrategy::Mab);
    pub const PBU_GREEDY: SchemeId = Self::fixed(BeamStrategy::Pbu, AllocStrategy::Greedy);
    pub const PBU_MAB: SchemeId = Self::fixed(BeamStrategy::Pbu, AllocStrategy::Mab);
    pub const PROPOSED: SchemeId = Self::learned(Ablation::None);
    pub const INDEPENDENT: SchemeId = Self::learned(Ablation::Independent);
    pub const SINGLE_ESTIMATION: SchemeId = Self::learned(Ablation::SingleEstimation);

    pub const ALL: [SchemeId; 7] = [
        Self::BFS_GREEDY,
        Self::PBU_GREEDY,
        Self::BFS_MAB,
        Self::PBU_MAB,
        Self::PROPOSED,
        Self::INDEPENDENT,
        Self::SINGLE_ESTIMATION,
    ];

    const fn fixed(beam: BeamStrategy, alloc: AllocStrategy) -> Self {
        Self { beam, alloc, ablation: Ablation::None }
    }

    const fn learned(ablation: Ablation) -> Self {
        Self { beam: BeamStrategy::Learned, alloc: AllocStrategy::Learned, ablation }
    }

    pub fn new(beam: BeamStrategy, alloc: AllocStrategy, ablation: Ablation) -> Result<Self> {
        let learned_beam = beam == BeamStrategy::Learned;
        let learned_alloc = alloc == AllocStrategy::Learned;
        if learned_beam != learned_alloc || (!learned_beam && ablation != Ablation::None) {
            return Err(invalid("learned beams and allocation go together; ablations apply to learned schemes only"));
        }
        Ok(Self { beam, alloc, ablation })
    }

    pub fn beam(&self) -> BeamStrategy {
        self.beam
    }

    pub fn alloc(&self) -> AllocStrategy {
        self.alloc
    }

    pub fn ablation(&self) -> Ablation {
        self.ablation
    }

    pub fn is_learned(&self) -> bool {
        self.beam == BeamStrategy::Learned
    }

    pub fn name(&self) -> &'static str {
        match (self.beam, self.alloc, self.ablation) {
            (BeamStrategy::Bfs, AllocStrategy::Greedy, _) => "bfs-greedy",
            (BeamStrategy::Bfs, AllocStrategy::Mab, _) => "bfs-mab",
            (BeamStrategy::Pbu, AllocStrategy::Greedy, _) => "pbu-greedy",
            (BeamStrategy::Pbu, AllocStrategy::Mab, _) => "pbu-mab",
            (_, _, Ablation::None) => "proposed",
            (_, _, Ablation::Independent) => "independent",
            (_, _, Ablation::SingleEstimation) => "single-estimation",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL.into_iter().find(|id| id.name() == s).ok_or_else(|| {
            let names: Vec<&str> = SchemeId::ALL.iter().map(|i| i.name()).collect();
            invalid(format!("unknown scheme '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

impl TryFrom<String> for SchemeId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SchemeId> for String {
    fn from(id: SchemeId) -> String {
        id.name().to_string()
    }
}

/// Knobs of the fixed schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Beam-sweep grid step in degrees.
    pub bfs_step_deg: f64,
    /// UCB1 exploration constant.
    pub mab_exploration: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { bfs_step_deg: 10.0, mab_exploration: std::f64::consts::SQRT_2 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        if !(self.bfs_step_deg > 0.0 && self.bfs_step_deg < 180.0) {
            return Err(("bfs_step_deg".into(), "must lie in (0, 180)".into()));
        }
        if !(self.mab_exploration >= 0.0 && self.mab_exploration.is_finite()) {
            return Err(("mab_exploration".into(), "must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// How a scheme run is budgeted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunPlan {
    pub seed: u64,
    /// Training episodes for learned schemes.
    pub train_episodes: u64,
    pub eval_episodes: u64,
}

/// Runs one fixed scheme for an episode; returns the gain evaluations spent.
fn run_fixed_episode(env: &mut Env, id: SchemeId, step: f64, mab: &mut MabState, seed: u64, episode: u64) -> Result<u64> {
    env.reset(seed, episode);
    let groups = env.config().groups;
    let rbs = env.config().rbs;
    let all = GroupMask::all(groups);
    let mut evaluations = 0;
    while !env.done() {
        let k = env.cycle_index();
        let geo = *env.geometry(k * env.config().slots_per_cycle).expect("slot inside the pass");
        let (pbu_tx, pbu_rx) = pbu_beam(&geo, env.grid())?;
        env.open_cycle_with(pbu_tx, all)?;
        loop {
            let ch = env.slot_channel().ok_or_else(|| Error::InvalidState("no slot channel".into()))?;
            let (tx, rx) = match id.beam {
                BeamStrategy::Bfs => {
                    let (tx, rx, e) = bfs_beam(&ch.realization, env.slot() as u64, rbs, step)?;
                    evaluations += e;
                    (tx, rx)
                }
                _ => (pbu_tx, pbu_rx),
            };
            let group_rates = env.pool().group_sums(&env.preview_rates(tx, rx)?);
            let demand = env.demand();
            let mask = match id.alloc {
                AllocStrategy::Greedy => {
                    evaluations += rbs as u64;
                    greedy_alloc(&group_rates, demand)
                }
                _ => mab.select(demand),
            };
            let out = env.step_low_beams(tx, rx, mask)?;
            if id.alloc == AllocStrategy::Mab {
                mab.update(mask, &group_rates);
            }
            if out.cycle_complete {
                break;
            }
        }
        env.step_high()?;
    }
    Ok(evaluations)
}

/// Runs a scheme and summarises its evaluation episodes. Fixed schemes
/// keep their bandit statistics across episodes; learned schemes train
/// first. Evaluation episodes share environment streams across schemes.
pub fn run_scheme(
    id: SchemeId,
    env_cfg: &EnvConfig,
    agent_cfg: &AgentConfig,
    baseline: &BaselineConfig,
    plan: RunPlan,
) -> Result<SchemeMetrics> {
    if plan.eval_episodes == 0 {
        return Err(invalid("at least one evaluation episode is required"));
    }
    let eval_index = |e: u64| EVAL_EPISODE_BASE + e;
    if id.is_learned() {
        let cfg = AgentConfig { ablation: id.ablation, ..agent_cfg.clone() };
        let mut trainer = Trainer::new(env_cfg.clone(), cfg, plan.seed)?;
        let mut training = Vec::with_capacity(plan.train_episodes as usize);
        for _ in 0..plan.train_episodes {
            let e = trainer.episodes_done();
            trainer.train(1)?;
            let trace = trainer.env.trace();
            training.push(EpisodeMetrics::from_trace(e, trace, 0)?);
        }
        let mut evaluation = Vec::with_capacity(plan.eval_episodes as usize);
        for e in 0..plan.eval_episodes {
            let r = trainer.evaluate(plan.seed, eval_index(e))?;
            evaluation.push(EpisodeMetrics::from_trace(e, &r.trace, r.gain_evaluations)?);
        }
        return SchemeMetrics::aggregate(id.name(), evaluation, training);
    }
    let mut env = Env::new(env_cfg.clone())?;
    let mut mab = MabState::new(env_cfg.groups, baseline.mab_exploration);
    let step = baseline.bfs_step_deg.to_radians();
    let mut evaluation = Vec::with_capacity(plan.eval_episodes as usize);
    for e in 0..plan.eval_episodes {
        let evals = run_fixed_episode(&mut env, id, step, &mut mab, plan.seed, eval_index(e))?;
        evaluation.push(EpisodeMetrics::from_trace(e, env.trace(), evals)?);
    }
    SchemeMetrics::aggregate(id.name(), evaluation, Vec::new())
}
