use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One entry of a layer stack.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// Fixed affine map `x / half_range`, sending `[-half_range, half_range]` onto `[-1, 1]`.
    Normalization {
        half_range: f64,
    },
    FullyConnected {
        width: usize,
    },
    Relu,
    Tanh,
    /// Multiplies every component by `bound`; after a tanh this maps onto `[-bound, bound]`.
    Scale {
        bound: f64,
    },
}

impl LayerSpec {
    pub fn is_parameterized(&self) -> bool {
        matches!(self, LayerSpec::FullyConnected { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Dense {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl Dense {
    fn new_uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Dense {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Moments {
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

impl Moments {
    fn for_layer(d: &Dense) -> Self {
        Moments {
            m_w: vec![0.0; d.weights.len()],
            v_w: vec![0.0; d.weights.len()],
            m_b: vec![0.0; d.bias.len()],
            v_b: vec![0.0; d.bias.len()],
        }
    }
}

/// Gradient of one fully connected layer, same layout as its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-parameterized-layer gradients, in stack order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseGrad>,
}

impl Gradients {
    pub fn has_non_finite(&self) -> bool {
        self.layers
            .iter()
            .any(|g| g.weights.iter().chain(&g.bias).any(|v| !v.is_finite()))
    }

    /// Flat view matching [`Network::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend_from_slice(&g.weights);
            out.extend_from_slice(&g.bias);
        }
        out
    }
}

/// Per-layer learning rates, one per parameterized layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningRateProfile(pub Vec<f64>);

impl LearningRateProfile {
    pub fn uniform(rate: f64, layers: usize) -> Self {
        LearningRateProfile(vec![rate; layers])
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }
}

/// Activations recorded by [`Network::forward_batch`], consumed by [`Network::backward`].
#[derive(Clone, Debug, Default)]
pub struct Tape {
    batch: usize,
    /// `acts[0]` is the input, `acts[k + 1]` the output of layer `k`.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Result of a backward pass.
#[derive(Clone, Debug)]
pub struct Backward {
    pub grads: Gradients,
    /// Gradient with respect to the network input, row-major `batch x input_dim`.
    pub input_grad: Vec<f64>,
}

/// A dense feed-forward network with its Adam optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_dim: usize,
    specs: Vec<LayerSpec>,
    dense: Vec<Dense>,
    moments: Vec<Moments>,
    adam_steps: u64,
}

impl Network {
    /// Builds a network with uniform `1/sqrt(fan_in)` weights and zero biases.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, specs: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        Self::build(input_dim, specs, |i, o| Dense::new_uniform(i, o, rng))
    }

    /// Same architecture with every parameter set to zero.
    pub fn zeros(input_dim: usize, specs: Vec<LayerSpec>) -> Result<Self> {
        Self::build(input_dim, specs, Dense::zeros)
    }

    fn build(input_dim: usize, specs: Vec<LayerSpec>, mut make: impl FnMut(usize, usize) -> Dense) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::config("network input dimension must be >= 1"));
        }
        let mut dim = input_dim;
        let mut dense = Vec::new();
        for spec in &specs {
            match *spec {
                LayerSpec::FullyConnected { width } => {
                    if width == 0 {
                        return Err(Error::config("fully connected width must be >= 1"));
                    }
                    dense.push(make(dim, width));
                    dim = width;
                }
                LayerSpec::Normalization { half_range } if !(half_range > 0.0) => {
                    return Err(Error::config("normalization half range must be > 0"));
                }
                _ => {}
            }
        }
        let moments = dense.iter().map(Moments::for_layer).collect();
        Ok(Network {
            input_dim,
            specs,
            dense,
            moments,
            adam_steps: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.specs
            .iter()
            .rev()
            .find_map(|s| match s {
                LayerSpec::FullyConnected { width } => Some(*width),
                _ => None,
            })
            .unwrap_or(self.input_dim)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn num_parameterized(&self) -> usize {
        self.dense.len()
    }

    /// 1-based positions, within the full layer stack, of the parameterized layers.
    pub fn parameterized_positions(&self) -> Vec<usize> {
        self.specs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_parameterized())
            .map(|(i, _)| i + 1)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.dense.iter().map(Dense::param_count).sum()
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam_steps
    }

    pub fn same_architecture(&self, other: &Network) -> bool {
        self.input_dim == other.input_dim && self.specs == other.specs
    }

    fn check_architecture(&self, other: &Network) -> Result<()> {
        if self.same_architecture(other) {
            Ok(())
        } else {
            Err(Error::Architecture(format!(
                "{} layers / input {} vs {} layers / input {}",
                self.specs.len(),
                self.input_dim,
                other.specs.len(),
                other.input_dim
            )))
        }
    }

    /// Flat parameters: for each parameterized layer, weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for d in &self.dense {
            out.extend_from_slice(&d.weights);
            out.extend_from_slice(&d.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut at = 0;
        for d in &mut self.dense {
            let nw = d.weights.len();
            d.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = d.bias.len();
            d.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Parameters of one parameterized layer, weights then biases.
    pub fn layer_parameters(&self, layer: usize) -> Vec<f64> {
        let d = &self.dense[layer];
        d.weights.iter().chain(&d.bias).copied().collect()
    }

    /// Drops optimizer moments and the step counter.
    pub fn reset_optimizer(&mut self) {
        self.moments = self.dense.iter().map(Moments::for_layer).collect();
        self.adam_steps = 0;
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let tape = self.forward_batch(input, 1)?;
        Ok(tape.acts.into_iter().last().unwrap_or_default())
    }

    /// Forward pass over a row-major `batch x input_dim` block, recording activations.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<Tape> {
        if batch == 0 || input.len() != batch * self.input_dim {
            return Err(Error::Dimension {
                expected: batch * self.input_dim,
                actual: input.len(),
            });
        }
        let mut acts = Vec::with_capacity(self.specs.len() + 1);
        acts.push(input.to_vec());
        let mut dense_idx = 0;
        for spec in &self.specs {
            let x = acts.last().expect("input recorded");
            let y = match *spec {
                LayerSpec::Normalization { half_range } => x.iter().map(|v| v / half_range).collect(),
                LayerSpec::FullyConnected { .. } => {
                    let d = &self.dense[dense_idx];
                    dense_idx += 1;
                    dense_forward(d, x, batch)
                }
                LayerSpec::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
                LayerSpec::Tanh => x.iter().map(|v| v.tanh()).collect(),
                LayerSpec::Scale { bound } => x.iter().map(|v| v * bound).collect(),
            };
            acts.push(y);
        }
        Ok(Tape { batch, acts })
    }

    /// Reverse-mode gradients of `sum(grad_out . output)` through the recorded forward pass.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64]) -> Result<Backward> {
        self.backward_impl(tape, grad_out, true)
    }

    /// Gradient with respect to the input only; parameter gradients are skipped.
    pub fn input_gradient(&self, tape: &Tape, grad_out: &[f64]) -> Result<Vec<f64>> {
        Ok(self.backward_impl(tape, grad_out, false)?.input_grad)
    }

    fn backward_impl(&self, tape: &Tape, grad_out: &[f64], params: bool) -> Result<Backward> {
        if tape.acts.len() != self.specs.len() + 1 || tape.batch == 0 {
            return Err(Error::MissingForward);
        }
        let batch = tape.batch;
        let out_len = tape.output().len();
        if grad_out.len() != out_len {
            return Err(Error::Dimension {
                expected: out_len,
                actual: grad_out.len(),
            });
        }
        let mut g = grad_out.to_vec();
        let mut layer_grads: Vec<DenseGrad> = Vec::with_capacity(self.dense.len());
        let mut dense_idx = self.dense.len();
        for (k, spec) in self.specs.iter().enumerate().rev() {
            let x = &tape.acts[k];
            let y = &tape.acts[k + 1];
            match *spec {
                LayerSpec::Normalization { half_range } => g.iter_mut().for_each(|v| *v /= half_range),
                LayerSpec::FullyConnected { .. } => {
                    dense_idx -= 1;
                    let d = &self.dense[dense_idx];
                    if params {
                        layer_grads.push(dense_param_grad(d, x, &g, batch));
                    }
                    g = dense_input_grad(d, &g, batch);
                }
                LayerSpec::Relu => {
                    for (gv, xv) in g.iter_mut().zip(x) {
                        if *xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                }
                LayerSpec::Tanh => {
                    for (gv, yv) in g.iter_mut().zip(y) {
                        *gv *= 1.0 - yv * yv;
                    }
                }
                LayerSpec::Scale { bound } => g.iter_mut().for_each(|v| *v *= bound),
            }
        }
        layer_grads.reverse();
        Ok(Backward {
            grads: Gradients { layers: layer_grads },
            input_grad: g,
        })
    }

    /// One Adam update with a per-layer step size. Layers with rate 0 are left untouched.
    pub fn adam_step(&mut self, grads: &Gradients, profile: &LearningRateProfile) -> Result<()> {
        if profile.0.len() != self.dense.len() {
            return Err(Error::Dimension {
                expected: self.dense.len(),
                actual: profile.0.len(),
            });
        }
        if grads.layers.len() != self.dense.len() {
            return Err(Error::Dimension {
                expected: self.dense.len(),
                actual: grads.layers.len(),
            });
        }
        for (d, g) in self.dense.iter().zip(&grads.layers) {
            if g.weights.len() != d.weights.len() || g.bias.len() != d.bias.len() {
                return Err(Error::Dimension {
                    expected: d.param_count(),
                    actual: g.weights.len() + g.bias.len(),
                });
            }
        }
        if grads.has_non_finite() {
            return Err(Error::Training("non-finite gradient".into()));
        }
        self.adam_steps += 1;
        let t = self.adam_steps as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for ((d, m), (g, &rate)) in self
            .dense
            .iter_mut()
            .zip(&mut self.moments)
            .zip(grads.layers.iter().zip(&profile.0))
        {
            if rate == 0.0 {
                continue;
            }
            adam_update(&mut d.weights, &mut m.m_w, &mut m.v_w, &g.weights, rate, c1, c2);
            adam_update(&mut d.bias, &mut m.m_b, &mut m.v_b, &g.bias, rate, c1, c2);
        }
        Ok(())
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update(&mut self, source: &Network, tau: f64) -> Result<()> {
        self.check_architecture(source)?;
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::config(format!("soft update factor {tau} outside [0, 1]")));
        }
        for (t, s) in self.dense.iter_mut().zip(&source.dense) {
            for (tv, sv) in t.weights.iter_mut().zip(&s.weights) {
                *tv = tau * sv + (1.0 - tau) * *tv;
            }
            for (tv, sv) in t.bias.iter_mut().zip(&s.bias) {
                *tv = tau * sv + (1.0 - tau) * *tv;
            }
        }
        Ok(())
    }

    /// Copies parameters from `source`, keeping this network's optimizer state.
    pub fn copy_parameters_from(&mut self, source: &Network) -> Result<()> {
        self.check_architecture(source)?;
        for (t, s) in self.dense.iter_mut().zip(&source.dense) {
            t.weights.copy_from_slice(&s.weights);
            t.bias.copy_from_slice(&s.bias);
        }
        Ok(())
    }

    /// Maps every parameter through `f`.
    pub fn map_parameters(&mut self, mut f: impl FnMut(f64) -> f64) {
        for d in &mut self.dense {
            d.weights.iter_mut().for_each(|v| *v = f(*v));
            d.bias.iter_mut().for_each(|v| *v = f(*v));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dense
            .iter()
            .all(|d| d.weights.iter().chain(&d.bias).all(|v| v.is_finite()))
    }
}

/// Weighted parameter average of architecturally identical networks. The result
/// carries a fresh optimizer state.
pub fn blend_params(nets: &[&Network], weights: &[f64]) -> Result<Network> {
    let Some(first) = nets.first() else {
        return Err(Error::config("blending needs at least one network"));
    };
    if nets.len() != weights.len() {
        return Err(Error::Dimension {
            expected: nets.len(),
            actual: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::config("blend weights must be nonnegative"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("blend weights sum to {sum}, expected 1")));
    }
    for n in &nets[1..] {
        first.check_architecture(n)?;
    }
    let mut out = Network::zeros(first.input_dim, first.specs.clone())?;
    for (net, &w) in nets.iter().zip(weights) {
        for (o, s) in out.dense.iter_mut().zip(&net.dense) {
            for (ov, sv) in o.weights.iter_mut().zip(&s.weights) {
                *ov += w * sv;
            }
            for (ov, sv) in o.bias.iter_mut().zip(&s.bias) {
                *ov += w * sv;
            }
        }
    }
    Ok(out)
}

fn adam_update(p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], rate: f64, c1: f64, c2: f64) {
    // rate * (m / c1) / (sqrt(v / c2) + eps), with the bias corrections folded into scalars
    let sc2 = c2.sqrt();
    let step = rate * sc2 / c1;
    let eps = ADAM_EPS * sc2;
    for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        *p -= step * *m / (v.sqrt() + eps);
    }
}

/// `C (m x n) = A (m x k) . B (k x n)` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices covering every index addressed by the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn dense_forward(d: &Dense, x: &[f64], batch: usize) -> Vec<f64> {
    let mut y = vec![0.0; batch * d.out_dim];
    // Y = X . W^T
    gemm(
        batch, d.in_dim, d.out_dim, x, d.in_dim, 1, &d.weights, 1, d.in_dim, &mut y,
    );
    for row in y.chunks_exact_mut(d.out_dim) {
        for (v, b) in row.iter_mut().zip(&d.bias) {
            *v += b;
        }
    }
    y
}

fn dense_param_grad(d: &Dense, x: &[f64], g: &[f64], batch: usize) -> DenseGrad {
    let mut gw = vec![0.0; d.out_dim * d.in_dim];
    // dW = G^T . X
    gemm(d.out_dim, batch, d.in_dim, g, 1, d.out_dim, x, d.in_dim, 1, &mut gw);
    let mut gb = vec![0.0; d.out_dim];
    for row in g.chunks_exact(d.out_dim) {
        for (b, v) in gb.iter_mut().zip(row) {
            *b += v;
        }
    }
    DenseGrad { weights: gw, bias: gb }
}

fn dense_input_grad(d: &Dense, g: &[f64], batch: usize) -> Vec<f64> {
    let mut gx = vec![0.0; batch * d.in_dim];
    // dX = G . W
    gemm(
        batch, d.out_dim, d.in_dim, g, d.out_dim, 1, &d.weights, d.in_dim, 1, &mut gx,
    );
    gx
}

/// Actor stack: normalization, 16N' FCL, ReLU, 16N' FCL, ReLU, [16N' FCL, ReLU], N' FCL,
/// tanh, scaling onto `[-pi, pi]`.
pub fn actor_specs(n_prime: usize, fine_tune: bool) -> Vec<LayerSpec> {
    let hidden = 16 * n_prime;
    let mut specs = vec![
        LayerSpec::Normalization { half_range: PI },
        LayerSpec::FullyConnected { width: hidden },
        LayerSpec::Relu,
        LayerSpec::FullyConnected { width: hidden },
        LayerSpec::Relu,
    ];
    if fine_tune {
        specs.push(LayerSpec::FullyConnected { width: hidden });
        specs.push(LayerSpec::Relu);
    }
    specs.extend([
        LayerSpec::FullyConnected { width: n_prime },
        LayerSpec::Tanh,
        LayerSpec::Scale { bound: PI },
    ]);
    specs
}

/// Critic stack over `state || action`: normalization, 32N' FCL, ReLU, 16N' FCL, tanh,
/// [16N' FCL, tanh], 1-neuron FCL.
pub fn critic_specs(n_prime: usize, fine_tune: bool) -> Vec<LayerSpec> {
    let mut specs = vec![
        LayerSpec::Normalization { half_range: PI },
        LayerSpec::FullyConnected { width: 32 * n_prime },
        LayerSpec::Relu,
        LayerSpec::FullyConnected { width: 16 * n_prime },
        LayerSpec::Tanh,
    ];
    if fine_tune {
        specs.push(LayerSpec::FullyConnected { width: 16 * n_prime });
        specs.push(LayerSpec::Tanh);
    }
    specs.push(LayerSpec::FullyConnected { width: 1 });
    specs
}

pub fn build_actor<R: Rng + ?Sized>(n_prime: usize, fine_tune: bool, rng: &mut R) -> Result<Network> {
    if n_prime == 0 {
        return Err(Error::config("subarray must have at least one element"));
    }
    Network::new(n_prime, actor_specs(n_prime, fine_tune), rng)
}

pub fn build_critic<R: Rng + ?Sized>(n_prime: usize, fine_tune: bool, rng: &mut R) -> Result<Network> {
    if n_prime == 0 {
        return Err(Error::config("subarray must have at least one element"));
    }
    Network::new(2 * n_prime, critic_specs(n_prime, fine_tune), rng)
}
