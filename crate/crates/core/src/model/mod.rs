//! Small fully connected surrogate networks with hand-written reverse mode
//! and forward-mode input jets.

mod activation;
pub mod checkpoint;
mod jet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use activation::Activation;
pub use jet::{JetCotangent, JetOutput};

use crate::geometry::Point;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer sizes must start with 3 inputs and end with 1 output, got {0:?}")]
    BadSizes(Vec<usize>),
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamCount { expected: usize, got: usize },
}

/// How initial weights are scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InitScale {
    /// Truncated standard normal for every weight and bias.
    #[default]
    Unit,
    /// Truncated normal divided by `sqrt(fan_in)`.
    FanIn,
}

/// Multilayer perceptron `R^3 -> R` with a shared hidden activation and a
/// linear output layer. Parameters are stored per layer as the row-major
/// weight matrix (out × in) followed by the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    /// Hidden activations are `σ(omega0 · z)`.
    pub omega0: f64,
    pub params: Vec<f64>,
    offsets: Vec<usize>,
    act_offsets: Vec<usize>,
}

/// Per-thread scratch buffers for forward and backward passes.
#[derive(Default)]
pub struct Workspace {
    acts: Vec<f64>,
    dact: Vec<f64>,
    delta: Vec<f64>,
    back: Vec<f64>,
    pub(crate) jet: jet::JetBuffers,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

fn validate(sizes: &[usize]) -> Result<(), ModelError> {
    if sizes.len() < 2 || sizes[0] != 3 || *sizes.last().unwrap() != 1 || sizes.contains(&0) {
        return Err(ModelError::BadSizes(sizes.to_vec()));
    }
    Ok(())
}

fn truncated_normal(rng: &mut ChaCha20Rng) -> f64 {
    loop {
        let x: f64 = rng.sample(StandardNormal);
        if x.abs() <= 2.0 {
            return x;
        }
    }
}

impl Mlp {
    pub fn init(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self, ModelError> {
        Self::init_with(sizes, activation, seed, 1.0, InitScale::Unit)
    }

    pub fn init_with(
        sizes: &[usize],
        activation: Activation,
        seed: u64,
        omega0: f64,
        scale: InitScale,
    ) -> Result<Self, ModelError> {
        validate(sizes)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let s = match scale {
                InitScale::Unit => 1.0,
                InitScale::FanIn => 1.0 / (w[0] as f64).sqrt(),
            };
            for _ in 0..(w[0] + 1) * w[1] {
                params.push(s * truncated_normal(&mut rng));
            }
        }
        Self::from_params(sizes, activation, seed, omega0, params)
    }

    pub fn from_params(
        sizes: &[usize],
        activation: Activation,
        seed: u64,
        omega0: f64,
        params: Vec<f64>,
    ) -> Result<Self, ModelError> {
        validate(sizes)?;
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(ModelError::ParamCount { expected, got: params.len() });
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut off = 0;
        offsets.push(0);
        for w in sizes.windows(2) {
            off += (w[0] + 1) * w[1];
            offsets.push(off);
        }
        let act_offsets = sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), activation, seed, omega0, params, offsets, act_offsets })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Weight matrix and bias of layer `l`.
    #[inline]
    pub(crate) fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let p = &self.params[self.offsets[l]..self.offsets[l + 1]];
        p.split_at(fan_in * fan_out)
    }

    #[inline]
    pub(crate) fn layer_offset(&self, l: usize) -> usize {
        self.offsets[l]
    }

    pub fn forward(&self, x: Point) -> f64 {
        let width = *self.sizes.iter().max().unwrap();
        let mut stack = [0.0; 2 * 128];
        let mut heap = Vec::new();
        let buf: &mut [f64] = if width <= 128 {
            &mut stack
        } else {
            heap.resize(2 * width, 0.0);
            &mut heap
        };
        let (mut cur, mut next) = buf.split_at_mut(buf.len() / 2);
        cur[..3].copy_from_slice(&x);
        let n = self.num_layers();
        for l in 0..n {
            let (w, b) = self.layer(l);
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            for o in 0..fo {
                let row = &w[o * fi..(o + 1) * fi];
                let mut z = b[o];
                for i in 0..fi {
                    z += row[i] * cur[i];
                }
                next[o] = if l + 1 < n { self.activation.value(self.omega0 * z) } else { z };
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Length of the activation cache used by [`Mlp::forward_cached`].
    pub fn cache_len(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Output value; fills `acts` with every layer's activations and `dact`
    /// with the activation derivatives (both of length [`Mlp::cache_len`]).
    pub fn forward_cached(&self, x: Point, acts: &mut [f64], dact: &mut [f64]) -> f64 {
        let n = self.num_layers();
        let offs = &self.act_offsets;
        acts[..3].copy_from_slice(&x);
        for l in 0..n {
            let (w, b) = self.layer(l);
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let (prev, rest) = acts.split_at_mut(offs[l + 1]);
            let a_in = &prev[offs[l]..];
            for o in 0..fo {
                let row = &w[o * fi..(o + 1) * fi];
                let mut z = b[o];
                for i in 0..fi {
                    z += row[i] * a_in[i];
                }
                if l + 1 < n {
                    let (a, d) = self.activation.value_d1(self.omega0 * z);
                    rest[o] = a;
                    dact[offs[l + 1] + o] = d * self.omega0;
                } else {
                    rest[o] = z;
                }
            }
        }
        acts[offs[n]]
    }

    /// `grad += cotangent · ∂output/∂θ` from a cache filled by
    /// [`Mlp::forward_cached`].
    pub fn backward_cached(&self, acts: &[f64], dact: &[f64], cotangent: f64, grad: &mut [f64], ws: &mut Workspace) {
        if cotangent == 0.0 {
            return;
        }
        let n = self.num_layers();
        let offs = &self.act_offsets;
        let width = *self.sizes.iter().max().unwrap();
        ws.delta.resize(width, 0.0);
        ws.back.resize(width, 0.0);
        ws.delta[0] = cotangent;
        for l in (0..n).rev() {
            let (w, _) = self.layer(l);
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let base = self.offsets[l];
            let a_in = &acts[offs[l]..offs[l] + fi];
            let (gw, gb) = grad[base..base + (fi + 1) * fo].split_at_mut(fi * fo);
            for o in 0..fo {
                let d = ws.delta[o];
                gb[o] += d;
                let grow = &mut gw[o * fi..(o + 1) * fi];
                for i in 0..fi {
                    grow[i] += d * a_in[i];
                }
            }
            if l > 0 {
                for i in 0..fi {
                    let mut s = 0.0;
                    for o in 0..fo {
                        s += w[o * fi + i] * ws.delta[o];
                    }
                    ws.back[i] = s * dact[offs[l] + i];
                }
                std::mem::swap(&mut ws.delta, &mut ws.back);
            }
        }
    }

    /// Output value, and `grad += cotangent · ∂output/∂θ`.
    pub fn forward_backward(&self, x: Point, cotangent: f64, grad: &mut [f64], ws: &mut Workspace) -> f64 {
        let total = self.cache_len();
        let mut acts = std::mem::take(&mut ws.acts);
        let mut dact = std::mem::take(&mut ws.dact);
        acts.resize(total, 0.0);
        dact.resize(total, 0.0);
        let out = self.forward_cached(x, &mut acts, &mut dact);
        self.backward_cached(&acts, &dact, cotangent, grad, ws);
        ws.acts = acts;
        ws.dact = dact;
        out
    }

    /// Exact `∂(cotangent · forward(x))/∂θ`.
    pub fn vjp_params(&self, x: Point, cotangent: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.num_params()];
        self.forward_backward(x, cotangent, &mut g, &mut Workspace::default());
        g
    }

    /// `d/dt forward(x + t v)` at `t = 0`.
    pub fn directional_derivative(&self, x: Point, v: Point) -> f64 {
        self.jet(x, &[v], false, &mut Workspace::default()).d1[0]
    }

    /// Value, first derivatives along `dirs` and, when `second` is set, the
    /// second derivatives along the same directions.
    pub fn jet(&self, x: Point, dirs: &[Point], second: bool, ws: &mut Workspace) -> JetOutput {
        jet::forward(self, x, dirs, second, &mut ws.jet)
    }

    /// Jet outputs, and `grad += ⟨cotangent, ∂jet/∂θ⟩`.
    pub fn jet_backward(
        &self,
        x: Point,
        dirs: &[Point],
        second: bool,
        cot: &JetCotangent,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> JetOutput {
        let out = jet::forward(self, x, dirs, second, &mut ws.jet);
        jet::backward(self, dirs.len(), second, cot, grad, &mut ws.jet);
        out
    }
}

/// Surrogates for Ω− and Ω+.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogatePair {
    pub net_minus: Mlp,
    pub net_plus: Mlp,
}

impl SurrogatePair {
    pub fn net(&self, side: crate::discretization::Side) -> &Mlp {
        match side {
            crate::discretization::Side::Minus => &self.net_minus,
            crate::discretization::Side::Plus => &self.net_plus,
        }
    }

    pub fn net_mut(&mut self, side: crate::discretization::Side) -> &mut Mlp {
        match side {
            crate::discretization::Side::Minus => &mut self.net_minus,
            crate::discretization::Side::Plus => &mut self.net_plus,
        }
    }

    /// Piecewise prediction: the Ω− network where `phi <= 0`.
    pub fn predict(&self, x: Point, phi: f64) -> f64 {
        if phi <= 0.0 {
            self.net_minus.forward(x)
        } else {
            self.net_plus.forward(x)
        }
    }

    pub fn num_params(&self) -> usize {
        self.net_minus.num_params() + self.net_plus.num_params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(net: &Mlp, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..net.num_params())
            .map(|i| {
                let mut a = net.clone();
                let mut b = net.clone();
                a.params[i] += h;
                b.params[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-30);
        num / den
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(param_count(&[3, 10, 10, 10, 10, 10, 1]), 491);
        assert_eq!(param_count(&[3, 100, 1]), 501);
        assert_eq!(param_count(&[3, 1, 1]) + param_count(&[3, 10, 10, 1]), 167);
        assert!(Mlp::init(&[], Activation::Sine, 0).is_err());
        assert!(Mlp::init(&[2, 1], Activation::Sine, 0).is_err());
    }

    #[test]
    fn init_is_deterministic_and_centered() {
        let a = Mlp::init(&[3, 10, 1], Activation::Sine, 5).unwrap();
        let b = Mlp::init(&[3, 10, 1], Activation::Sine, 5).unwrap();
        assert_eq!(a.params, b.params);
        let big = Mlp::init(&[3, 316, 316, 1], Activation::Tanh, 9).unwrap();
        let n = big.params.len() as f64;
        assert!(n > 1e5);
        let mean = big.params.iter().sum::<f64>() / n;
        assert!(mean.abs() < 0.02);
        assert!(big.params.iter().all(|p| p.abs() <= 2.0));
        // variance of N(0,1) truncated at ±2
        let var = big.params.iter().map(|p| p * p).sum::<f64>() / n;
        assert!((var - 0.7737).abs() < 0.02);
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut net = Mlp::init(&[3, 4, 1], Activation::Sine, 1).unwrap();
        net.params.iter_mut().for_each(|p| *p = 0.0);
        *net.params.last_mut().unwrap() = 0.75;
        assert_eq!(net.forward([0.3, -0.2, 0.9]), 0.75);
    }

    fn single_unit() -> (Mlp, Point, f64, f64, f64) {
        // hidden: sin(w·x + b); output: v·h + c
        let w = [0.7, -1.1, 0.4];
        let (b, v, c) = (0.2, 1.3, -0.5);
        let net = Mlp::from_params(&[3, 1, 1], Activation::Sine, 0, 1.0, vec![w[0], w[1], w[2], b, v, c]).unwrap();
        (net, w, b, v, c)
    }

    #[test]
    fn single_sine_unit_by_hand() {
        let (net, w, b, v, c) = single_unit();
        let x = [0.3, 0.5, -0.8];
        let z = w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + b;
        assert!((net.forward(x) - (v * z.sin() + c)).abs() < 1e-15);
        let dir = [0.6, 0.0, 0.8];
        let wd = w[0] * dir[0] + w[2] * dir[2];
        assert!((net.directional_derivative(x, dir) - v * z.cos() * wd).abs() < 1e-15);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let x = [0.31, -0.47, 0.77];
        for act in [Activation::Sine, Activation::Celu, Activation::Tanh] {
            for seed in 0..3 {
                let net = Mlp::init_with(&[3, 6, 5, 1], act, seed, 1.0, InitScale::FanIn).unwrap();
                let g = net.vjp_params(x, 1.3);
                let fd = fd_grad(&net, |n| 1.3 * n.forward(x));
                assert!(rel_err(&g, &fd) < 1e-6, "{act} {seed}: {}", rel_err(&g, &fd));
            }
        }
    }

    #[test]
    fn vjp_is_linear_in_cotangent() {
        let net = Mlp::init(&[3, 5, 1], Activation::Tanh, 2).unwrap();
        let x = [0.1, 0.2, 0.3];
        assert!(net.vjp_params(x, 0.0).iter().all(|&g| g == 0.0));
        let g1 = net.vjp_params(x, 0.7);
        let g2 = net.vjp_params(x, 1.4);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn directional_derivative_matches_fd() {
        let x = [0.2, -0.6, 0.4];
        let v = [2.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0];
        for act in [Activation::Sine, Activation::Celu, Activation::Tanh] {
            let net = Mlp::init_with(&[3, 7, 7, 1], act, 4, 1.0, InitScale::FanIn).unwrap();
            let h = 1e-6;
            let fd = (net.forward(crate::geometry::vec3::axpy(x, h, v)) - net.forward(crate::geometry::vec3::axpy(x, -h, v))) / (2.0 * h);
            let d = net.directional_derivative(x, v);
            assert!((d - fd).abs() <= 1e-6 * fd.abs().max(1e-3), "{act}");
        }
        let mut constant = Mlp::init(&[3, 4, 1], Activation::Sine, 3).unwrap();
        let nw = 4 * 3 + 4;
        constant.params[nw..nw + 4].iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(constant.directional_derivative(x, v), 0.0);
    }

    #[test]
    fn omega0_scales_hidden_preactivations() {
        let (mut net, w, b, v, c) = single_unit();
        net.omega0 = 3.0;
        let x = [0.1, 0.1, 0.1];
        let z = w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + b;
        assert!((net.forward(x) - (v * (3.0 * z).sin() + c)).abs() < 1e-15);
        let g = net.vjp_params(x, 1.0);
        let fd = fd_grad(&net, |n| n.forward(x));
        assert!(rel_err(&g, &fd) < 1e-6);
    }

    #[test]
    fn forward_backward_value_matches_forward() {
        let net = Mlp::init(&[3, 10, 10, 1], Activation::Celu, 8).unwrap();
        let mut ws = Workspace::default();
        let mut g = vec![0.0; net.num_params()];
        let x = [0.5, 0.25, -0.125];
        assert_eq!(net.forward_backward(x, 1.0, &mut g, &mut ws), net.forward(x));
    }
}
