//! Action sampling, log-probabilities, advantages and the two losses.
//!
//! The UE policy network has three heads: categorical logits over the
//! azimuth offset, categorical logits over the polar offset and one
//! Bernoulli logit per RB group.

use crate::error::{invalid, Result};
use crate::link::{BeamOffsets, GroupMask};
use crate::env::LowAction;
use crate::numkit::dist::{bernoulli_kl, bernoulli_log_prob, categorical_kl, categorical_log_prob, sigmoid, softmax};
use crate::numkit::{Gradients, Head, Mlp};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    /// Arg-max offsets (lowest index on ties), groups with probability at
    /// least one half.
    Greedy,
}

/// A UE action in head coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LowChoice {
    pub theta: usize,
    pub phi: usize,
    pub bits: Vec<bool>,
}

impl LowChoice {
    pub fn to_action(&self) -> LowAction {
        LowAction { rx: BeamOffsets::new(self.theta, self.phi), groups: GroupMask::from_flags(&self.bits) }
    }
}

fn check_layout(policy: &Mlp) -> Result<(usize, usize)> {
    match policy.heads() {
        [Head::Categorical(a), Head::Categorical(b), Head::Bernoulli(g)] if a == b => Ok((*a, *g)),
        _ => Err(invalid("policy network needs heads [categorical K, categorical K, bernoulli G]")),
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Draws (or picks greedily) an action; returns it with its log-probability.
pub fn act_low<R: Rng + ?Sized>(policy: &Mlp, x: &[f64], rng: &mut R, mode: ActMode) -> Result<(LowChoice, f64)> {
    check_layout(policy)?;
    let out = policy.forward(x)?;
    let choice = match mode {
        ActMode::Sample => LowChoice {
            theta: sample_categorical(&softmax(&out[0]), rng),
            phi: sample_categorical(&softmax(&out[1]), rng),
            bits: out[2].iter().map(|&l| rng.random::<f64>() < sigmoid(l)).collect(),
        },
        ActMode::Greedy => LowChoice {
            theta: argmax(&out[0]),
            phi: argmax(&out[1]),
            bits: out[2].iter().map(|&l| sigmoid(l) >= 0.5).collect(),
        },
    };
    let lp = joint_log_prob(&out, &choice).0;
    Ok((choice, lp))
}

fn joint_log_prob(out: &[Vec<f64>], c: &LowChoice) -> (f64, Vec<Vec<f64>>) {
    let (a, ga) = categorical_log_prob(&out[0], c.theta);
    let (b, gb) = categorical_log_prob(&out[1], c.phi);
    let (g, gg) = bernoulli_log_prob(&out[2], &c.bits);
    (a + b + g, vec![ga, gb, gg])
}

/// `log pi(a | x)`.
pub fn log_prob(policy: &Mlp, x: &[f64], c: &LowChoice) -> Result<f64> {
    let (k, g) = check_layout(policy)?;
    if c.theta >= k || c.phi >= k || c.bits.len() != g {
        return Err(invalid("action does not fit the policy heads"));
    }
    Ok(joint_log_prob(&policy.forward(x)?, c).0)
}

/// One-step TD advantage `r + gamma V(s') - V(s)`; a terminal `s'` has
/// value zero.
pub fn advantage(reward: f64, v: f64, v_next: Option<f64>, gamma: f64) -> f64 {
    reward + gamma * v_next.unwrap_or(0.0) - v
}

/// Discounted return from every position of a reward sequence.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}

/// Value targets truncated at the end of the cycle containing each slot.
/// `rewards` is one episode's slot rewards and `t` the cycle length.
pub fn cycle_value_targets(rewards: &[f64], t: usize, gamma: f64) -> Vec<f64> {
    rewards.chunks(t.max(1)).flat_map(|c| discounted_returns(c, gamma)).collect()
}

/// One policy-gradient sample: input, taken action and total advantage.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample<'a> {
    pub x: &'a [f64],
    pub choice: &'a LowChoice,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLoss {
    /// Mean clipped surrogate `clip(ratio) * A` (to be maximised).
    pub objective: f64,
    /// Gradient of the negated objective, ready for a descent step.
    pub grads: Gradients,
    /// Per-sample contributions `clip(ratio) * A`.
    pub contributions: Vec<f64>,
    /// Fraction of samples whose ratio was clipped.
    pub clip_fraction: f64,
}

/// Clipped-ratio surrogate against the snapshot `old`. The ratio is
/// clipped to `[1 - clip, 1 + clip]`; clipped samples pass no gradient.
pub fn policy_loss(samples: &[PolicySample], policy: &Mlp, old: &Mlp, clip: f64) -> Result<PolicyLoss> {
    if samples.is_empty() {
        return Err(invalid("policy loss needs a non-empty batch"));
    }
    check_layout(policy)?;
    let (lo, hi) = (1.0 - clip, 1.0 + clip);
    let b = samples.len() as f64;
    let mut grads = Gradients::zeros_like(policy);
    let mut contributions = Vec::with_capacity(samples.len());
    let mut clipped = 0usize;
    for s in samples {
        let out = policy.forward(s.x)?;
        let (lp, seeds) = joint_log_prob(&out, s.choice);
        let lp_old = log_prob(old, s.x, s.choice)?;
        let ratio = (lp - lp_old).exp();
        if (lo..=hi).contains(&ratio) {
            contributions.push(ratio * s.advantage);
            // d(ratio A)/d logits = ratio A dlogpi/dlogits; negate for descent.
            let w = -ratio * s.advantage / b;
            let upstream: Vec<Vec<f64>> = seeds.iter().map(|g| g.iter().map(|v| v * w).collect()).collect();
            policy.accumulate_gradients(s.x, &upstream, &mut grads)?;
        } else {
            clipped += 1;
            contributions.push(ratio.clamp(lo, hi) * s.advantage);
        }
    }
    let objective = contributions.iter().sum::<f64>() / b;
    Ok(PolicyLoss { objective, grads, contributions, clip_fraction: clipped as f64 / b })
}

/// Mean `KL(old || new)` of the full action distribution over inputs.
pub fn policy_kl(old: &Mlp, new: &Mlp, xs: &[&[f64]]) -> Result<f64> {
    if xs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for x in xs {
        let p = old.forward(x)?;
        let q = new.forward(x)?;
        total += categorical_kl(&p[0], &q[0]) + categorical_kl(&p[1], &q[1]) + bernoulli_kl(&p[2], &q[2]);
    }
    Ok(total / xs.len() as f64)
}

/// Mean squared error of a scalar network and its descent gradient.
pub fn value_loss(net: &Mlp, batch: &[(&[f64], f64)]) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(invalid("value loss needs a non-empty batch"));
    }
    let b = batch.len() as f64;
    let mut grads = Gradients::zeros_like(net);
    let mut loss = 0.0;
    for (x, y) in batch {
        let err = net.scalar(x)? - y;
        loss += err * err;
        net.accumulate_gradients(x, &[vec![2.0 * err / b]], &mut grads)?;
    }
    Ok((loss / b, grads))
}
