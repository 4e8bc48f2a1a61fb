//! Collaborative two-time-scale learning.
//!
//! The UE runs a clipped-ratio policy update whose advantage is the sum of
//! its own TD advantage and the satellite's cycle advantage, regresses its
//! value net on cycle-truncated returns, and sends the satellite a decision
//! trajectory generated by the updated policy. The satellite picks its next
//! action by an `n`-step rollout over a small cycle simulator, closed by a
//! learned tail value.

mod agents;
mod features;
mod policy;
mod replay;
mod rollout;
mod train;

pub use agents::{
    gen_trajectory, DecisionTrajectory, HighAgent, HighExperience, LowAgent, LowExperience, Persistence,
    StatePredictor, UpdateStats,
};
pub use features::FeatureScale;
pub use policy::{
    act_low, advantage, cycle_value_targets, discounted_returns, log_prob, policy_kl, policy_loss, value_loss,
    ActMode, LowChoice, PolicyLoss, PolicySample,
};
pub use replay::Replay;
pub use rollout::{candidate_table, rollout_select, CycleModel, EnvCycleModel, RolloutDemand};
pub use train::{Checkpoint, EpisodeLog, EpisodeReport, TrainLog, Trainer, CHECKPOINT_VERSION};

use crate::error::{invalid, Result};
use crate::numkit::{Activation, AdamConfig};
use serde::{Deserialize, Serialize};

/// Which advantages feed the UE policy update and what the satellite uses
/// as its reference trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Summed advantages and a trajectory from the updated policy.
    #[default]
    None,
    /// UE advantage only; the satellite replays the last executed actions.
    Independent,
    /// UE advantage only, trajectory still from the updated policy.
    SingleEstimation,
}

impl Ablation {
    pub fn uses_high_advantage(self) -> bool {
        self == Ablation::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub tail_hidden: Vec<usize>,
    pub activation: Activation,
    pub gamma_low: f64,
    pub gamma_high: f64,
    pub low_replay: usize,
    pub high_replay: usize,
    pub policy_adam: AdamConfig,
    pub value_adam: AdamConfig,
    pub tail_adam: AdamConfig,
    /// Ratio clip `c`: ratios are clipped to `[1 - c, 1 + c]`.
    pub clip: f64,
    /// Mean KL above which an update stops early.
    pub kl_stop: f64,
    /// Policy/value minibatch steps per completed cycle.
    pub epochs: usize,
    pub minibatch: usize,
    /// Tail-value minibatch steps per completed episode.
    pub tail_steps: usize,
    /// Gradient L2 clip for every network; 0 disables.
    pub max_grad_norm: f64,
    /// Multiplies rewards (bit/s) before learning.
    pub reward_scale: f64,
    /// Rollout depth in cycles.
    pub rollout_depth: usize,
    pub rollout_demand: RolloutDemand,
    pub ablation: Ablation,
    /// Stop when the max parameter change over an episode falls below this.
    pub convergence_eps: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            policy_hidden: vec![300, 200, 200],
            value_hidden: vec![400, 300, 200],
            tail_hidden: vec![400, 300, 200],
            activation: Activation::Tanh,
            gamma_low: 0.99,
            gamma_high: 0.99,
            low_replay: 9600,
            high_replay: 1200,
            policy_adam: AdamConfig::default(),
            value_adam: AdamConfig::default(),
            tail_adam: AdamConfig::default(),
            clip: 0.2,
            kl_stop: 0.015,
            epochs: 4,
            minibatch: 64,
            tail_steps: 8,
            max_grad_norm: 10.0,
            reward_scale: 1e-6,
            rollout_depth: 2,
            rollout_demand: RolloutDemand::Expected,
            ablation: Ablation::None,
            convergence_eps: 0.0,
        }
    }
}

impl AgentConfig {
    /// Smaller networks and faster learning rates for desk-scale runs.
    pub fn desk() -> Self {
        let fast = AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() };
        Self {
            policy_hidden: vec![64, 64],
            value_hidden: vec![64, 64],
            tail_hidden: vec![64, 64],
            policy_adam: fast,
            value_adam: fast,
            tail_adam: fast,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        let err = |p: &str, m: &str| Err((p.to_string(), m.to_string()));
        for (name, h) in [("policy_hidden", &self.policy_hidden), ("value_hidden", &self.value_hidden), ("tail_hidden", &self.tail_hidden)] {
            if h.is_empty() || h.contains(&0) {
                return err(name, "needs at least one hidden layer, all widths positive");
            }
        }
        for (name, g) in [("gamma_low", self.gamma_low), ("gamma_high", self.gamma_high)] {
            if !(0.0..=1.0).contains(&g) {
                return err(name, "must lie in [0, 1]");
            }
        }
        if self.low_replay == 0 || self.high_replay == 0 {
            return err("low_replay", "replay capacities must be positive");
        }
        for (name, a) in [("policy_adam", self.policy_adam), ("value_adam", self.value_adam), ("tail_adam", self.tail_adam)] {
            if !(a.learning_rate > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
                return err(name, "learning rate and epsilon must be positive, betas in [0, 1)");
            }
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return err("clip", "must lie in (0, 1)");
        }
        if !(self.kl_stop > 0.0) {
            return err("kl_stop", "must be positive");
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return err("epochs", "epochs and minibatch must be positive");
        }
        if !(self.max_grad_norm >= 0.0) || !(self.reward_scale > 0.0) {
            return err("reward_scale", "reward scale must be positive and gradient clip non-negative");
        }
        if self.rollout_depth == 0 {
            return err("rollout_depth", "must be at least 1");
        }
        if !(self.convergence_eps >= 0.0) {
            return err("convergence_eps", "must be non-negative");
        }
        Ok(())
    }

    pub(crate) fn check(&self) -> Result<()> {
        self.validate().map_err(|(p, m)| invalid(format!("{p}: {m}")))
    }
}
