//! Log-probabilities of categorical and Bernoulli heads and their
//! gradients with respect to the logits.

/// Numerically stable `log softmax`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log sigmoid(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `log p(k)` and its gradient with respect to the logits.
pub fn categorical_log_prob(logits: &[f64], k: usize) -> (f64, Vec<f64>) {
    let lp = log_softmax(logits);
    let grad = lp.iter().enumerate().map(|(i, l)| f64::from(u8::from(i == k)) - l.exp()).collect();
    (lp[k], grad)
}

/// Joint log-probability of independent bits and its logit gradient.
pub fn bernoulli_log_prob(logits: &[f64], bits: &[bool]) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let grad = logits
        .iter()
        .zip(bits)
        .map(|(&l, &b)| {
            if b {
                total += log_sigmoid(l);
                1.0 - sigmoid(l)
            } else {
                total += log_sigmoid(-l);
                -sigmoid(l)
            }
        })
        .collect();
    (total, grad)
}

/// KL divergence `KL(p || q)` between categorical distributions given by logits.
pub fn categorical_kl(p_logits: &[f64], q_logits: &[f64]) -> f64 {
    let lp = log_softmax(p_logits);
    let lq = log_softmax(q_logits);
    lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum()
}

/// KL divergence between two sets of independent Bernoullis.
pub fn bernoulli_kl(p_logits: &[f64], q_logits: &[f64]) -> f64 {
    p_logits
        .iter()
        .zip(q_logits)
        .map(|(&a, &b)| {
            let p = sigmoid(a);
            p * (log_sigmoid(a) - log_sigmoid(b)) + (1.0 - p) * (log_sigmoid(-a) - log_sigmoid(-b))
        })
        .sum()
}
