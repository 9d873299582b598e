//! Minimal dense layers with hand-written backward passes and an Adam
//! optimizer. Activations are row-major: one sample per row.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Affine map `y = x W + b` with `W` of shape (in, out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// Fan-in scaled uniform weights in `[-1/sqrt(in), 1/sqrt(in)]`, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((inputs, outputs), || {
                rng.random_range(-bound..bound)
            }),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weight: Array2::eye(n),
            bias: Array1::zeros(n),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Returns parameter gradients and the gradient w.r.t. `x`.
    pub fn backward(&self, x: ArrayView2<f64>, grad_out: ArrayView2<f64>) -> (LinearGrad, Array2<f64>) {
        let grad = LinearGrad {
            weight: x.t().dot(&grad_out).as_standard_layout().into_owned(),
            bias: grad_out.sum_axis(Axis(0)),
        };
        (grad, grad_out.dot(&self.weight.t()))
    }

    pub fn zero_grad(&self) -> LinearGrad {
        LinearGrad {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

impl LinearGrad {
    pub fn add_assign(&mut self, other: &LinearGrad) {
        self.weight += &other.weight;
        self.bias += &other.bias;
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 2] {
        [
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Tanh,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a`.
    fn derivative(&self, z: f64, a: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Stack of linear layers with the hidden activation after every layer but
/// the last (linear output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

/// Intermediate values needed for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    pub fn init<R: Rng + ?Sized>(widths: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(widths.len() >= 2);
        Self {
            layers: widths
                .windows(2)
                .map(|w| Linear::init(w[0], w[1], rng))
                .collect(),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.forward(h.view());
            if k < last {
                h.mapv_inplace(|z| self.activation.apply(z));
            }
        }
        h
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> MlpTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(h.view());
            inputs.push(h);
            if k < last {
                h = z.mapv(|v| self.activation.apply(v));
                pre.push(z);
            } else {
                h = z;
            }
        }
        MlpTrace {
            inputs,
            pre,
            output: h,
        }
    }

    /// Backpropagates `grad_out` (same shape as the output) through a trace.
    pub fn backward(&self, trace: &MlpTrace, grad_out: ArrayView2<f64>) -> (Vec<LinearGrad>, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.to_owned();
        for k in (0..self.layers.len()).rev() {
            if k < self.layers.len() - 1 {
                // g is d/d(activation output of layer k); convert to pre-activation.
                let z = &trace.pre[k];
                let a = &trace.inputs[k + 1];
                ndarray::Zip::from(&mut g)
                    .and(z)
                    .and(a)
                    .for_each(|g, &z, &a| *g *= self.activation.derivative(z, a));
            }
            let (lg, gin) = self.layers[k].backward(trace.inputs[k].view(), g.view());
            grads.push(lg);
            g = gin;
        }
        grads.reverse();
        (grads, g)
    }

    pub fn zero_grads(&self) -> Vec<LinearGrad> {
        self.layers.iter().map(Linear::zero_grad).collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

pub(crate) fn grad_tensors(grads: &[LinearGrad]) -> Vec<&[f64]> {
    grads.iter().flat_map(|g| g.tensors()).collect()
}

/// Adam with the usual moment coefficients, one instance per parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update; `params` and `grads` must list tensors in the same
    /// order on every call.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for act in [Activation::Tanh, Activation::LeakyRelu { slope: 0.01 }] {
            let mlp = Mlp::init(&[3, 5, 4, 2], act, &mut rng);
            let x = array![[0.3, -0.7, 1.1], [0.9, 0.2, -0.4]];
            // loss = sum(output * c)
            let c = array![[0.5, -1.0], [2.0, 0.3]];
            let trace = mlp.forward_trace(x.view());
            let (grads, gx) = mlp.backward(&trace, c.view());
            let loss = |m: &Mlp, x: &Array2<f64>| (m.forward(x.view()) * &c).sum();
            let h = 1e-6;
            for k in 0..mlp.layers.len() {
                for idx in 0..mlp.layers[k].weight.len() {
                    let (mut up, mut dn) = (mlp.clone(), mlp.clone());
                    up.layers[k].weight.as_slice_mut().unwrap()[idx] += h;
                    dn.layers[k].weight.as_slice_mut().unwrap()[idx] -= h;
                    let fd = (loss(&up, &x) - loss(&dn, &x)) / (2.0 * h);
                    let an = grads[k].weight.as_slice().unwrap()[idx];
                    assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} vs {an}");
                }
            }
            for idx in 0..x.len() {
                let (mut up, mut dn) = (x.clone(), x.clone());
                up.as_slice_mut().unwrap()[idx] += h;
                dn.as_slice_mut().unwrap()[idx] -= h;
                let fd = (loss(&mlp, &up) - loss(&mlp, &dn)) / (2.0 * h);
                assert!((fd - gx.as_slice().unwrap()[idx]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn adam_first_step_moves_against_gradient_by_lr() {
        let mut p = vec![1.0, -1.0];
        let mut opt = Adam::new(0.1);
        opt.update(vec![&mut p[..]], vec![&[2.0, -3.0][..]]);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
    }
}
