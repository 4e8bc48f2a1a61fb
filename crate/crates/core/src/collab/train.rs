//! Training and evaluation loops for the collaborative scheme.

use super::agents::{gen_trajectory, DecisionTrajectory, HighAgent, HighExperience, LowAgent, LowExperience, Persistence, UpdateStats};
use super::features::FeatureScale;
use super::policy::{discounted_returns, ActMode, LowChoice};
use super::rollout::{rollout_select, EnvCycleModel};
use super::{Ablation, AgentConfig};
use crate::env::{Env, EnvConfig, HighAction, SlotRecord};
use crate::error::{Error, Result};
use crate::link::{BeamOffsets, GroupMask};
use crate::rng::{stream, Stream};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    /// Sum of smoothed UE rewards (bit/s).
    pub low_return: f64,
    /// Sum of cycle rewards (bit/s).
    pub high_return: f64,
    pub trace: Vec<SlotRecord>,
    pub high_rewards: Vec<f64>,
    pub actions: Vec<HighAction>,
    /// Beam-gain evaluations spent by the satellite's lookahead.
    pub gain_evaluations: u64,
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u64,
    pub low_return: f64,
    pub high_return: f64,
    pub mean_rate: f64,
    pub satisfaction_error: f64,
    pub groups_used: f64,
    pub policy_objective: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub tail_loss: f64,
    /// Largest parameter change over the episode, across all networks.
    pub param_change: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeLog>,
    /// Episode after which the parameter change fell below the threshold.
    pub converged_at: Option<u64>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.episodes {
            out.serialize(e)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Everything needed to resume training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub episodes_done: u64,
    pub env: EnvConfig,
    pub low: LowAgent,
    pub high: HighAgent,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let c: Checkpoint = serde_json::from_reader(f)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                c.version
            )));
        }
        Ok(c)
    }
}

/// Both learners and the environment they act in.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub env: Env,
    pub low: LowAgent,
    pub high: HighAgent,
    features: FeatureScale,
    seed: u64,
    episodes_done: u64,
}

impl Trainer {
    pub fn new(env_cfg: EnvConfig, agent_cfg: AgentConfig, seed: u64) -> Result<Self> {
        agent_cfg.validate().map_err(|(path, message)| Error::Config { path: format!("agent.{path}"), message })?;
        let env = Env::new(env_cfg)?;
        let features = FeatureScale::from_env(env.config());
        let mut rng = stream(seed, Stream::Init, 0);
        let high = HighAgent::new(features.high_dim(), agent_cfg.clone(), &mut rng)?;
        let low = LowAgent::new(
            features.low_dim(),
            env.grid().len(),
            env.config().groups,
            high.value.clone(),
            agent_cfg,
            &mut rng,
        )?;
        Ok(Self { env, low, high, features, seed, episodes_done: 0 })
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        let env = Env::new(c.env)?;
        let features = FeatureScale::from_env(env.config());
        if c.low.policy.input_dim() != features.low_dim() || c.high.value.input_dim() != features.high_dim() {
            return Err(Error::InvalidArgument("checkpoint networks do not match the environment".into()));
        }
        Ok(Self { env, low: c.low, high: c.high, features, seed: c.seed, episodes_done: c.episodes_done })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            episodes_done: self.episodes_done,
            env: self.env.config().clone(),
            low: self.low.clone(),
            high: self.high.clone(),
        }
    }

    pub fn config(&self) -> &AgentConfig {
        self.low.config()
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes_done
    }

    pub fn features(&self) -> &FeatureScale {
        &self.features
    }

    /// First cycle: no history yet, so point at the line of sight and offer
    /// every group.
    fn initial_action(&self) -> HighAction {
        let z = self.env.grid().zero_index().unwrap_or(0);
        HighAction { tx: BeamOffsets::new(z, z), groups: GroupMask::all(self.env.config().groups) }
    }

    fn params(&self) -> Vec<crate::numkit::Mlp> {
        vec![self.low.policy.clone(), self.low.value.clone(), self.high.value.clone()]
    }

    /// Trains for `episodes` more episodes on the run's own environment
    /// seed. Episode `e` uses channel and demand streams `(seed, e)`.
    pub fn train(&mut self, episodes: u64) -> Result<TrainLog> {
        let mut log = TrainLog::default();
        let eps = self.config().convergence_eps;
        for _ in 0..episodes {
            let e = self.episodes_done;
            let before = self.params();
            let (report, stats, tail_loss) = self.run_episode(self.seed, e, true, ActMode::Sample)?;
            let change = before.iter().zip(self.params()).map(|(a, b)| a.max_abs_diff(&b)).fold(0.0, f64::max);
            self.episodes_done += 1;
            let m = trace_means(&report.trace);
            log.episodes.push(EpisodeLog {
                episode: e,
                low_return: report.low_return,
                high_return: report.high_return,
                mean_rate: m.0,
                satisfaction_error: m.1,
                groups_used: m.2,
                policy_objective: stats.policy_objective,
                value_loss: stats.value_loss,
                kl: stats.kl,
                tail_loss: tail_loss.unwrap_or(f64::NAN),
                param_change: change,
            });
            if eps > 0.0 && change < eps {
                log.converged_at = Some(e);
                break;
            }
        }
        Ok(log)
    }

    /// Greedy episode without learning on environment stream `(seed, episode)`.
    pub fn evaluate(&mut self, seed: u64, episode: u64) -> Result<EpisodeReport> {
        Ok(self.run_episode(seed, episode, false, ActMode::Greedy)?.0)
    }

    fn run_episode(
        &mut self,
        seed: u64,
        episode: u64,
        learn: bool,
        mode: ActMode,
    ) -> Result<(EpisodeReport, UpdateStats, Option<f64>)> {
        let cfg = self.config().clone();
        let run = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed;
        let mut agent_rng = stream(run, Stream::Agent, episode);
        let mut replay_rng = stream(run, Stream::Replay, episode);
        let t = self.env.config().slots_per_cycle;
        let depth = cfg.rollout_depth;
        let scale = cfg.reward_scale;

        self.env.reset(seed, episode);
        let mut action = self.initial_action();
        let mut x_high = self.features.high(self.env.high_state());
        let mut x_low = self.features.low(self.env.low_state(), self.env.demand(), 0, 0.0);
        let mut pending: Vec<HighExperience> = Vec::new();
        let mut actions = Vec::new();
        let mut stats = UpdateStats::default();
        let mut low_return = 0.0;
        let mut gain_evaluations = 0;
        loop {
            self.env.open_cycle(&action)?;
            actions.push(action);
            if learn {
                self.low.sync_mirror(&self.high);
            }
            let mut cycle: Vec<LowExperience> = Vec::with_capacity(t);
            for p in 0..t {
                let (choice, _) = self.low.act(&x_low, &mut agent_rng, mode)?;
                let step = self.env.step_low(&choice.to_action())?;
                low_return += step.reward;
                let x_next =
                    self.features.low(&step.state, self.env.demand(), (p + 1) % t, self.env.reward_window_mean());
                cycle.push(LowExperience {
                    x: std::mem::replace(&mut x_low, x_next.clone()),
                    choice,
                    reward: step.reward * scale,
                    x_next,
                    cycle_end: p + 1 == t,
                    high_advantage: 0.0,
                    target: 0.0,
                });
            }
            let hs = self.env.step_high()?;
            let x_high_next = self.features.high(&hs.state);
            let r_high = hs.reward * scale;
            let executed: Vec<LowChoice> = cycle.iter().map(|e| e.choice.clone()).collect();
            if learn {
                let adv = self.low.high_advantage(r_high, &x_high, (!hs.done).then_some(x_high_next.as_slice()))?;
                let rewards: Vec<f64> = cycle.iter().map(|e| e.reward).collect();
                for (mut e, target) in cycle.into_iter().zip(discounted_returns(&rewards, cfg.gamma_low)) {
                    e.high_advantage = adv;
                    e.target = target;
                    self.low.replay.push(e);
                }
                stats = self.low.update(&mut replay_rng)?;
                pending.push(HighExperience {
                    x: x_high.clone(),
                    action,
                    reward: r_high,
                    x_next: x_high_next.clone(),
                    target: 0.0,
                });
            }
            if hs.done {
                break;
            }
            let trajectory = match cfg.ablation {
                Ablation::Independent => {
                    let mut actions = Vec::with_capacity(depth * t);
                    for _ in 0..depth {
                        actions.extend(executed.iter().cloned());
                    }
                    DecisionTrajectory { actions, inputs: Vec::new() }
                }
                _ => gen_trajectory(&self.low.policy, &x_low, depth * t, &Persistence)?,
            };
            let model = EnvCycleModel::build(
                &self.env,
                &trajectory,
                &self.high.value,
                &self.features,
                depth,
                cfg.rollout_demand,
                scale,
            )?;
            gain_evaluations += model.gain_evaluations();
            let (c, _) = rollout_select(&model, &None, depth, cfg.gamma_high)?;
            action = model.candidates()[c];
            x_high = x_high_next;
        }
        let mut tail_loss = None;
        if learn {
            let rewards: Vec<f64> = pending.iter().map(|e| e.reward).collect();
            for (mut e, target) in pending.into_iter().zip(discounted_returns(&rewards, cfg.gamma_high)) {
                e.target = target;
                self.high.replay.push(e);
            }
            tail_loss = self.high.update(&mut replay_rng)?;
        }
        let report = EpisodeReport {
            low_return,
            high_return: self.env.high_rewards().iter().sum(),
            trace: self.env.trace().to_vec(),
            high_rewards: self.env.high_rewards().to_vec(),
            actions,
            gain_evaluations,
        };
        Ok((report, stats, tail_loss))
    }
}

/// `(mean selected rate, mean |Omega|, mean groups used)` of a trace.
fn trace_means(trace: &[SlotRecord]) -> (f64, f64, f64) {
    if trace.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = trace.len() as f64;
    (
        trace.iter().map(|r| r.mean_rate).sum::<f64>() / n,
        trace.iter().map(|r| r.omega.abs()).sum::<f64>() / n,
        trace.iter().map(|r| r.groups_used as f64).sum::<f64>() / n,
    )
}
