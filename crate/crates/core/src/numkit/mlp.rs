use crate::error::{invalid, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activated value `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Slice of the output layer with a fixed interpretation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// One real output.
    Scalar,
    /// Logits of a categorical distribution over `n` outcomes.
    Categorical(usize),
    /// `n` independent Bernoulli logits.
    Bernoulli(usize),
}

impl Head {
    pub fn width(self) -> usize {
        match self {
            Head::Scalar => 1,
            Head::Categorical(n) | Head::Bernoulli(n) => n,
        }
    }
}

/// Per-head raw outputs (logits for categorical/bernoulli heads).
pub type HeadOutputs = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major `(outputs, inputs)`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b
        }));
    }
}

/// Fully connected network: hidden layers share one activation, the final
/// layer is linear and split into [`Head`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
    heads: Vec<Head>,
}

/// Gradient buffer congruent with an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Network with all parameters zero.
    pub fn zeros(input: usize, hidden: &[usize], heads: Vec<Head>, activation: Activation) -> Result<Self> {
        if input == 0 || hidden.contains(&0) {
            return Err(invalid("layer sizes must be positive"));
        }
        if heads.is_empty() || heads.iter().any(|h| h.width() == 0) {
            return Err(invalid("at least one non-empty head is required"));
        }
        let output: usize = heads.iter().map(|h| h.width()).sum();
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self { layers, activation, heads })
    }

    /// Fan-in scaled uniform initialisation; the output layer is shrunk so
    /// initial logits sit near zero.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        heads: Vec<Head>,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(input, hidden, heads, activation)?;
        let last = net.layers.len() - 1;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let mut bound = (1.0 / layer.inputs as f64).sqrt();
            if i == last {
                bound *= 0.1;
            }
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Builds a network from explicit `(weights, biases)` per layer.
    pub fn from_parameters(
        input: usize,
        layers: Vec<(Vec<f64>, Vec<f64>)>,
        heads: Vec<Head>,
        activation: Activation,
    ) -> Result<Self> {
        let mut built = Vec::with_capacity(layers.len());
        let mut fan_in = input;
        for (w, b) in layers {
            if b.is_empty() || w.len() != b.len() * fan_in {
                return Err(invalid("inconsistent layer dimensions"));
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(invalid("parameters must be finite"));
            }
            let outputs = b.len();
            built.push(Layer { inputs: fan_in, outputs, weights: w, biases: b });
            fan_in = outputs;
        }
        if built.is_empty() {
            return Err(invalid("at least one layer is required"));
        }
        let width: usize = heads.iter().map(|h| h.width()).sum();
        if width != fan_in || heads.is_empty() {
            return Err(invalid("head widths do not match the output layer"));
        }
        Ok(Self { layers: built, activation, heads })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(invalid(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Activations of every layer; entry 0 is the input, the last entry the
    /// linear output.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(acts.last().unwrap(), &mut z);
            if i != last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            acts.push(z);
        }
        acts
    }

    fn split_heads(&self, flat: &[f64]) -> HeadOutputs {
        let mut out = Vec::with_capacity(self.heads.len());
        let mut at = 0;
        for h in &self.heads {
            out.push(flat[at..at + h.width()].to_vec());
            at += h.width();
        }
        out
    }

    /// Feed-forward evaluation.
    pub fn forward(&self, x: &[f64]) -> Result<HeadOutputs> {
        self.check_input(x)?;
        let acts = self.trace(x);
        Ok(self.split_heads(acts.last().unwrap()))
    }

    /// First output of the first head; convenience for value networks.
    pub fn scalar(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?[0][0])
    }

    /// Exact gradient of `sum_h <upstream_h, head_h(x)>` w.r.t. all parameters.
    pub fn backward(&self, x: &[f64], upstream: &[Vec<f64>]) -> Result<Gradients> {
        let mut g = Gradients::zeros_like(self);
        self.accumulate_gradients(x, upstream, &mut g)?;
        Ok(g)
    }

    /// Like [`Mlp::backward`] but adds into an existing buffer.
    pub fn accumulate_gradients(&self, x: &[f64], upstream: &[Vec<f64>], grads: &mut Gradients) -> Result<()> {
        self.check_input(x)?;
        if upstream.len() != self.heads.len()
            || upstream.iter().zip(&self.heads).any(|(u, h)| u.len() != h.width())
        {
            return Err(invalid("upstream gradient does not match head layout"));
        }
        if !grads.congruent(self) {
            return Err(invalid("gradient buffer is not congruent with the network"));
        }
        let acts = self.trace(x);
        let mut delta: Vec<f64> = upstream.iter().flatten().copied().collect();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &acts[li];
            let gw = &mut grads.weights[li];
            let gb = &mut grads.biases[li];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if li == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= self.activation.derivative(*a);
            }
            delta = prev;
        }
        Ok(())
    }

    /// All parameters flattened (per layer: weights then biases).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(invalid("flat parameter length mismatch"));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Mutable walk over `(parameter, gradient)` pairs.
    pub(crate) fn zip_params_mut<F: FnMut(usize, &mut f64, f64)>(&mut self, g: &Gradients, mut f: F) {
        let mut idx = 0;
        for (li, l) in self.layers.iter_mut().enumerate() {
            for (p, gv) in l.weights.iter_mut().zip(&g.weights[li]) {
                f(idx, p, *gv);
                idx += 1;
            }
            for (p, gv) in l.biases.iter_mut().zip(&g.biases[li]) {
                f(idx, p, *gv);
                idx += 1;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Mlp) -> f64 {
        self.params_flat()
            .iter()
            .zip(other.params_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn congruent(&self, net: &Mlp) -> bool {
        self.weights.len() == net.layers.len()
            && net.layers.iter().enumerate().all(|(i, l)| {
                self.weights[i].len() == l.weights.len() && self.biases[i].len() == l.biases.len()
            })
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).flatten().for_each(|v| *v *= s);
    }

    pub fn add(&mut self, other: &Gradients) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(invalid("gradient shape mismatch"));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights).chain(self.biases.iter_mut().zip(&other.biases)) {
            if a.len() != b.len() {
                return Err(invalid("gradient shape mismatch"));
            }
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.weights.iter().chain(&self.biases).flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.weights.iter().chain(&self.biases).flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.l2_norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(3, &[5, 4], vec![Head::Scalar], Activation::Tanh).unwrap();
        assert_eq!(net.scalar(&[1.0, -2.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn single_affine_layer() {
        let net = Mlp::from_parameters(1, vec![(vec![2.0], vec![1.0])], vec![Head::Scalar], Activation::Tanh).unwrap();
        assert_eq!(net.scalar(&[3.0]).unwrap(), 7.0);
        let g = net.backward(&[3.0], &[vec![1.0]]).unwrap();
        assert_eq!(g.flat(), vec![3.0, 1.0]);
    }

    #[test]
    fn two_layer_matches_hand_unrolled() {
        // 2-2-1 tanh network.
        let w1 = vec![0.3, -0.7, 1.1, 0.4];
        let b1 = vec![0.05, -0.2];
        let w2 = vec![0.9, -1.3];
        let b2 = vec![0.25];
        let net = Mlp::from_parameters(
            2,
            vec![(w1.clone(), b1.clone()), (w2.clone(), b2.clone())],
            vec![Head::Scalar],
            Activation::Tanh,
        )
        .unwrap();
        let x = [0.6, -1.4];
        let h0 = (w1[0] * x[0] + w1[1] * x[1] + b1[0]).tanh();
        let h1 = (w1[2] * x[0] + w1[3] * x[1] + b1[1]).tanh();
        let y = w2[0] * h0 + w2[1] * h1 + b2[0];
        assert!((net.scalar(&x).unwrap() - y).abs() < 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(4, &[8], vec![Head::Categorical(3), Head::Bernoulli(2)], Activation::Tanh, &mut rng)
            .unwrap();
        let g = net.backward(&[0.1, 0.2, 0.3, 0.4], &[vec![0.0; 3], vec![0.0; 2]]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(2, &[3], vec![Head::Scalar], Activation::Tanh).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.backward(&[1.0, 2.0], &[vec![1.0, 2.0]]).is_err());
        assert!(net.backward(&[1.0, 2.0], &[]).is_err());
        assert!(Mlp::zeros(0, &[3], vec![Head::Scalar], Activation::Tanh).is_err());
        assert!(Mlp::zeros(2, &[3], vec![], Activation::Tanh).is_err());
        assert!(Mlp::from_parameters(2, vec![(vec![1.0], vec![0.0])], vec![Head::Scalar], Activation::Tanh).is_err());
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(6, &[16, 16], vec![Head::Scalar, Head::Bernoulli(3)], Activation::Tanh, &mut rng).unwrap();
        let x = [0.1, -0.3, 0.7, 1.2, -2.0, 0.0];
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        for (ha, hb) in a.iter().zip(&b) {
            for (u, v) in ha.iter().zip(hb) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    /// Central differences of `loss` over every parameter of `net`.
    fn finite_difference(net: &Mlp, loss: &dyn Fn(&Mlp) -> f64) -> Vec<f64> {
        let base = net.params_flat();
        let h = 1e-5;
        let mut probe = net.clone();
        (0..base.len())
            .map(|i| {
                let mut p = base.clone();
                p[i] = base[i] + h;
                probe.set_params_flat(&p).unwrap();
                let up = loss(&probe);
                p[i] = base[i] - h;
                probe.set_params_flat(&p).unwrap();
                let down = loss(&probe);
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences_for_every_head() {
        use crate::numkit::dist::{bernoulli_log_prob, categorical_log_prob};
        let layouts = [
            vec![Head::Scalar, Head::Scalar, Head::Scalar],
            vec![Head::Categorical(3)],
            vec![Head::Bernoulli(3)],
            vec![Head::Scalar, Head::Bernoulli(2)],
            vec![Head::Categorical(2), Head::Scalar],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (case, heads) in layouts.into_iter().enumerate() {
            for act in [Activation::Tanh, Activation::Relu] {
                let mut net = Mlp::new(4, &[8], heads.clone(), act, &mut rng).unwrap();
                // Larger output weights so every head carries signal.
                let scaled: Vec<f64> = net.params_flat().iter().map(|p| p * 3.0).collect();
                net.set_params_flat(&scaled).unwrap();
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let target = rng.random_range(-1.0..1.0);
                let choice = rng.random_range(0..3usize);
                let bits = [true, false, true];
                // Loss per head: squared error, categorical log-prob, bernoulli log-prob.
                let loss_and_seed = |n: &Mlp| -> (f64, Vec<Vec<f64>>) {
                    let out = n.forward(&x).unwrap();
                    let mut total = 0.0;
                    let mut seeds = Vec::new();
                    for (h, o) in n.heads().iter().zip(&out) {
                        match h {
                            Head::Scalar => {
                                total += (o[0] - target).powi(2);
                                seeds.push(vec![2.0 * (o[0] - target)]);
                            }
                            Head::Categorical(k) => {
                                let (lp, g) = categorical_log_prob(o, choice % k);
                                total += lp;
                                seeds.push(g);
                            }
                            Head::Bernoulli(k) => {
                                let (lp, g) = bernoulli_log_prob(o, &bits[..*k]);
                                total += lp;
                                seeds.push(g);
                            }
                        }
                    }
                    (total, seeds)
                };
                let (_, seeds) = loss_and_seed(&net);
                let analytic = net.backward(&x, &seeds).unwrap().flat();
                let numeric = finite_difference(&net, &|n| loss_and_seed(n).0);
                for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
                    let err = (a - n).abs();
                    let scale = a.abs().max(n.abs());
                    assert!(
                        err <= 1e-5 * scale || err <= 1e-8,
                        "case {case} {act:?} param {i}: analytic {a} numeric {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn flat_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::new(3, &[4], vec![Head::Scalar], Activation::Relu, &mut rng).unwrap();
        let mut other = Mlp::zeros(3, &[4], vec![Head::Scalar], Activation::Relu).unwrap();
        other.set_params_flat(&net.params_flat()).unwrap();
        assert_eq!(other, net);
    }
}
