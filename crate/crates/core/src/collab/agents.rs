//! The UE and satellite learners.

use super::policy::{act_low, advantage, policy_kl, policy_loss, value_loss, ActMode, LowChoice, PolicySample};
use super::replay::Replay;
use super::AgentConfig;
use crate::env::HighAction;
use crate::error::{invalid, Result};
use crate::numkit::{Adam, Gradients, Head, Mlp};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One UE slot as stored for learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowExperience {
    pub x: Vec<f64>,
    pub choice: LowChoice,
    /// Scaled smoothed reward `R_L`.
    pub reward: f64,
    pub x_next: Vec<f64>,
    /// Last slot of its cycle; value targets stop here.
    pub cycle_end: bool,
    /// Satellite cycle advantage broadcast to every slot of the cycle.
    pub high_advantage: f64,
    /// Cycle-truncated discounted return.
    pub target: f64,
}

/// One satellite cycle as stored for learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighExperience {
    pub x: Vec<f64>,
    pub action: HighAction,
    /// Scaled cycle reward `R_H`.
    pub reward: f64,
    pub x_next: Vec<f64>,
    /// Discounted sum of cycle rewards to the end of the episode.
    pub target: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_objective: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub steps: usize,
}

fn clipped(mut g: Gradients, max_norm: f64) -> Gradients {
    if max_norm > 0.0 {
        g.clip_norm(max_norm);
    }
    g
}

/// UE learner: policy, value and a mirror of the satellite's tail value used
/// to compute the cycle advantage locally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowAgent {
    pub policy: Mlp,
    pub value: Mlp,
    pub high_mirror: Mlp,
    policy_opt: Adam,
    value_opt: Adam,
    pub replay: Replay<LowExperience>,
    cfg: AgentConfig,
}

impl LowAgent {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        offsets: usize,
        groups: usize,
        high_mirror: Mlp,
        cfg: AgentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.check()?;
        if offsets == 0 || groups == 0 {
            return Err(invalid("offset grid and group count must be non-empty"));
        }
        let heads = vec![Head::Categorical(offsets), Head::Categorical(offsets), Head::Bernoulli(groups)];
        let policy = Mlp::new(input, &cfg.policy_hidden, heads, cfg.activation, rng)?;
        let value = Mlp::new(input, &cfg.value_hidden, vec![Head::Scalar], cfg.activation, rng)?;
        Ok(Self {
            policy_opt: Adam::new(&policy, cfg.policy_adam)?,
            value_opt: Adam::new(&value, cfg.value_adam)?,
            replay: Replay::new(cfg.low_replay),
            policy,
            value,
            high_mirror,
            cfg,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn act<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, mode: ActMode) -> Result<(LowChoice, f64)> {
        act_low(&self.policy, x, rng, mode)
    }

    /// Copies the satellite's tail value into the local mirror.
    pub fn sync_mirror(&mut self, high: &HighAgent) {
        self.high_mirror = high.value.clone();
    }

    /// Cycle advantage from the mirror; `x_next` is `None` at episode end.
    pub fn high_advantage(&self, reward: f64, x: &[f64], x_next: Option<&[f64]>) -> Result<f64> {
        let v = self.high_mirror.scalar(x)?;
        let v_next = x_next.map(|x| self.high_mirror.scalar(x)).transpose()?;
        Ok(advantage(reward, v, v_next, self.cfg.gamma_high))
    }

    /// UE advantage `R_L + gamma V(s') - V(s)` from the current value net,
    /// with `V(s') = 0` after the last slot of a cycle.
    pub fn low_advantage(&self, e: &LowExperience) -> Result<f64> {
        let v = self.value.scalar(&e.x)?;
        let v_next = if e.cycle_end { None } else { Some(self.value.scalar(&e.x_next)?) };
        Ok(advantage(e.reward, v, v_next, self.cfg.gamma_low))
    }

    /// Minibatch policy and value steps over the replay against a snapshot
    /// of the current policy; stops early once the mean KL from the
    /// snapshot exceeds the configured bound.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<UpdateStats> {
        if self.replay.is_empty() {
            return Err(crate::error::Error::InvalidState("update needs at least one stored slot".into()));
        }
        let old = self.policy.clone();
        let use_high = self.cfg.ablation.uses_high_advantage();
        let mut stats = UpdateStats::default();
        for _ in 0..self.cfg.epochs {
            let batch: Vec<LowExperience> =
                self.replay.sample(rng, self.cfg.minibatch).into_iter().cloned().collect();
            let advs = batch
                .iter()
                .map(|e| Ok(self.low_advantage(e)? + if use_high { e.high_advantage } else { 0.0 }))
                .collect::<Result<Vec<f64>>>()?;
            let samples: Vec<PolicySample> = batch
                .iter()
                .zip(&advs)
                .map(|(e, a)| PolicySample { x: &e.x, choice: &e.choice, advantage: *a })
                .collect();
            let pl = policy_loss(&samples, &self.policy, &old, self.cfg.clip)?;
            self.policy_opt.step(&mut self.policy, &clipped(pl.grads, self.cfg.max_grad_norm))?;
            let vb: Vec<(&[f64], f64)> = batch.iter().map(|e| (e.x.as_slice(), e.target)).collect();
            let (vl, vg) = value_loss(&self.value, &vb)?;
            self.value_opt.step(&mut self.value, &clipped(vg, self.cfg.max_grad_norm))?;
            let xs: Vec<&[f64]> = batch.iter().map(|e| e.x.as_slice()).collect();
            let kl = policy_kl(&old, &self.policy, &xs)?;
            stats = UpdateStats { policy_objective: pl.objective, value_loss: vl, kl, steps: stats.steps + 1 };
            if kl > self.cfg.kl_stop {
                break;
            }
        }
        Ok(stats)
    }
}

/// Satellite learner: the tail value closing the rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighAgent {
    pub value: Mlp,
    opt: Adam,
    pub replay: Replay<HighExperience>,
    cfg: AgentConfig,
}

impl HighAgent {
    pub fn new<R: Rng + ?Sized>(input: usize, cfg: AgentConfig, rng: &mut R) -> Result<Self> {
        cfg.check()?;
        let value = Mlp::new(input, &cfg.tail_hidden, vec![Head::Scalar], cfg.activation, rng)?;
        Ok(Self { opt: Adam::new(&value, cfg.tail_adam)?, replay: Replay::new(cfg.high_replay), value, cfg })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    /// Regresses the tail value on stored episode returns; returns the last
    /// minibatch loss, or `None` with an empty replay.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        if self.replay.is_empty() {
            return Ok(None);
        }
        let mut last = None;
        for _ in 0..self.cfg.tail_steps {
            let batch: Vec<(&[f64], f64)> =
                self.replay.sample(rng, self.cfg.minibatch).into_iter().map(|e| (e.x.as_slice(), e.target)).collect();
            let (l, g) = value_loss(&self.value, &batch)?;
            self.opt.step(&mut self.value, &clipped(g, self.cfg.max_grad_norm))?;
            last = Some(l);
        }
        Ok(last)
    }
}

/// Predicts future UE inputs from the last observed one.
pub trait StatePredictor {
    fn predict(&self, last: &[f64], step: usize) -> Vec<f64>;
}

/// Future inputs equal the last observed input.
#[derive(Debug, Clone, Copy, Default)]
pub struct Persistence;

impl StatePredictor for Persistence {
    fn predict(&self, last: &[f64], _step: usize) -> Vec<f64> {
        last.to_vec()
    }
}

/// Greedy UE actions the satellite may assume for the next slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrajectory {
    pub actions: Vec<LowChoice>,
    pub inputs: Vec<Vec<f64>>,
}

/// Rolls the policy greedily over `horizon` predicted inputs.
pub fn gen_trajectory<P: StatePredictor + ?Sized>(
    policy: &Mlp,
    last: &[f64],
    horizon: usize,
    predictor: &P,
) -> Result<DecisionTrajectory> {
    // Greedy actions draw nothing from the generator.
    let mut rng = <crate::rng::SimRng as rand::SeedableRng>::seed_from_u64(0);
    let mut actions = Vec::with_capacity(horizon);
    let mut inputs = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let x = predictor.predict(last, step);
        actions.push(act_low(policy, &x, &mut rng, ActMode::Greedy)?.0);
        inputs.push(x);
    }
    Ok(DecisionTrajectory { actions, inputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> AgentConfig {
        AgentConfig {
            policy_hidden: vec![8],
            value_hidden: vec![8],
            tail_hidden: vec![8],
            gamma_low: 0.0,
            minibatch: 32,
            epochs: 4,
            ..AgentConfig::desk()
        }
    }

    #[test]
    fn bandit_policy_learns_the_better_arm() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mirror = Mlp::zeros(1, &[2], vec![Head::Scalar], Activation::Tanh).unwrap();
        let mut agent = LowAgent::new(1, 2, 1, mirror, tiny_cfg(), &mut rng).unwrap();
        let x = vec![1.0];
        let p1 = |a: &LowAgent| crate::numkit::dist::softmax(&a.policy.forward(&x).unwrap()[0])[1];
        let start = p1(&agent);
        for _ in 0..50 {
            for _ in 0..16 {
                let (c, _) = agent.act(&x, &mut rng, ActMode::Sample).unwrap();
                let reward = if c.theta == 1 { 1.0 } else { 0.0 };
                agent.replay.push(LowExperience {
                    x: x.clone(),
                    choice: c,
                    reward,
                    x_next: x.clone(),
                    cycle_end: true,
                    high_advantage: 0.0,
                    target: reward,
                });
            }
            agent.update(&mut rng).unwrap();
        }
        let end = p1(&agent);
        assert!(end > start && end > 0.9, "{start} -> {end}");
        // The value net approaches the mean reward of recent behaviour.
        assert!(agent.value.scalar(&x).unwrap() > 0.5);
    }

    #[test]
    fn update_on_empty_replay_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mirror = Mlp::zeros(1, &[2], vec![Head::Scalar], Activation::Tanh).unwrap();
        let mut agent = LowAgent::new(1, 2, 1, mirror, tiny_cfg(), &mut rng).unwrap();
        assert!(agent.update(&mut rng).is_err());
        let mut high = HighAgent::new(2, tiny_cfg(), &mut rng).unwrap();
        assert_eq!(high.update(&mut rng).unwrap(), None);
    }

    #[test]
    fn zero_advantage_leaves_policy_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mirror = Mlp::zeros(2, &[2], vec![Head::Scalar], Activation::Tanh).unwrap();
        let mut cfg = tiny_cfg();
        cfg.value_hidden = vec![2];
        let mut agent = LowAgent::new(2, 3, 2, mirror, cfg, &mut rng).unwrap();
        // Zero value net and zero rewards give zero advantages.
        agent.value = Mlp::zeros(2, &[2], vec![Head::Scalar], Activation::Tanh).unwrap();
        let before = agent.policy.clone();
        let x = vec![0.5, -0.5];
        for _ in 0..10 {
            let (c, _) = agent.act(&x, &mut rng, ActMode::Sample).unwrap();
            agent.replay.push(LowExperience {
                x: x.clone(),
                choice: c,
                reward: 0.0,
                x_next: x.clone(),
                cycle_end: true,
                high_advantage: 0.0,
                target: 0.0,
            });
        }
        agent.update(&mut rng).unwrap();
        assert_eq!(agent.policy, before);
    }

    #[test]
    fn high_advantage_uses_the_mirror() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut high = HighAgent::new(2, tiny_cfg(), &mut rng).unwrap();
        let mirror = Mlp::zeros(2, &[8], vec![Head::Scalar], Activation::Tanh).unwrap();
        let mut low = LowAgent::new(2, 3, 2, mirror, tiny_cfg(), &mut rng).unwrap();
        assert_eq!(low.high_advantage(1.5, &[1.0, 0.0], Some(&[0.0, 1.0])).unwrap(), 1.5);
        for _ in 0..20 {
            high.replay.push(HighExperience {
                x: vec![1.0, 0.0],
                action: HighAction { tx: Default::default(), groups: crate::link::GroupMask(1) },
                reward: 1.0,
                x_next: vec![0.0, 1.0],
                target: 3.0,
            });
        }
        high.update(&mut rng).unwrap();
        low.sync_mirror(&high);
        let v = high.value.scalar(&[1.0, 0.0]).unwrap();
        let vn = high.value.scalar(&[0.0, 1.0]).unwrap();
        let a = low.high_advantage(1.5, &[1.0, 0.0], Some(&[0.0, 1.0])).unwrap();
        assert!((a - (1.5 + 0.99 * vn - v)).abs() < 1e-12);
        let terminal = low.high_advantage(1.5, &[1.0, 0.0], None).unwrap();
        assert!((terminal - (1.5 - v)).abs() < 1e-12);
    }

    #[test]
    fn tail_value_fits_returns() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cfg = tiny_cfg();
        cfg.tail_steps = 300;
        let mut high = HighAgent::new(1, cfg, &mut rng).unwrap();
        for i in 0..10 {
            high.replay.push(HighExperience {
                x: vec![i as f64 / 10.0],
                action: HighAction { tx: Default::default(), groups: crate::link::GroupMask(1) },
                reward: 0.0,
                x_next: vec![0.0],
                target: i as f64 / 10.0,
            });
        }
        let first = value_loss(&high.value, &high.replay.iter().map(|e| (e.x.as_slice(), e.target)).collect::<Vec<_>>())
            .unwrap()
            .0;
        high.update(&mut rng).unwrap();
        let last = value_loss(&high.value, &high.replay.iter().map(|e| (e.x.as_slice(), e.target)).collect::<Vec<_>>())
            .unwrap()
            .0;
        assert!(last < 0.1 * first, "{first} -> {last}");
    }

    #[test]
    fn static_prediction_gives_constant_trajectory() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mirror = Mlp::zeros(3, &[2], vec![Head::Scalar], Activation::Tanh).unwrap();
        let agent = LowAgent::new(3, 7, 3, mirror, tiny_cfg(), &mut rng).unwrap();
        let t = gen_trajectory(&agent.policy, &[0.1, 0.2, 0.3], 20, &Persistence).unwrap();
        assert_eq!(t.actions.len(), 20);
        assert!(t.actions.iter().all(|a| *a == t.actions[0]));
        let (g, _) = agent.act(&[0.1, 0.2, 0.3], &mut rng, ActMode::Greedy).unwrap();
        assert_eq!(t.actions[0], g);
    }
}
