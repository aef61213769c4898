//! Fully connected tanh networks with hand-written backpropagation and Adam.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in × out`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Hidden layers use `tanh`; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer; entries after the first are tanh outputs.
    inputs: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialisation for every weight and bias.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight =
                    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
                let bias = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..bound));
                Dense { weight, bias }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    /// Layer sizes from input to output.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.weight.ncols()));
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn affine(layer: &Dense, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&layer.weight);
        z += &layer.bias;
        z
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = Self::affine(layer, &h);
            if i < last {
                h.mapv_inplace(f64::tanh);
            }
        }
        h
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &h);
            inputs.push(h);
            h = z;
            if i < last {
                h.mapv_inplace(f64::tanh);
            }
        }
        (h, MlpCache { inputs })
    }

    /// Backpropagates `grad_out` (d loss / d output, already batch-averaged).
    ///
    /// Parameter gradients are skipped when `param_grads` is false; the
    /// input gradient is returned when `input_grad` is true.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: &Array2<f64>,
        param_grads: bool,
        input_grad: bool,
    ) -> (Option<MlpGrads>, Option<Array2<f64>>) {
        let mut grads = param_grads.then(|| self.zeros_like());
        let mut delta = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let x = &cache.inputs[i];
            if let Some(g) = grads.as_mut() {
                g.layers[i].weight = x.t().dot(&delta);
                g.layers[i].bias = delta.sum_axis(Axis(0));
            }
            if i == 0 && !input_grad {
                break;
            }
            let mut dx = delta.dot(&layer.weight.t());
            if i > 0 {
                // x is the tanh output of the previous layer
                Zip::from(&mut dx).and(x).for_each(|d, &a| *d *= 1.0 - a * a);
            }
            delta = dx;
        }
        let dx = input_grad.then_some(delta);
        (grads, dx)
    }

    /// Parameters flattened layer by layer (weight row-major, then bias).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = *it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = *it.next().unwrap());
        }
    }

    /// `self ← (1 − tau)·self + tau·online`
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) {
        let keep = 1.0 - tau;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.weight).and(&o.weight).for_each(|t, &o| *t = keep * *t + tau * o);
            Zip::from(&mut t.bias).and(&o.bias).for_each(|t, &o| *t = keep * *t + tau * o);
        }
    }
}

impl MlpGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: MlpGrads,
    v: MlpGrads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: net.zeros_like(), v: net.zeros_like() }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        for (((layer, g), m), v) in
            net.layers.iter_mut().zip(&grads.layers).zip(&mut self.m.layers).zip(&mut self.v.layers)
        {
            Zip::from(&mut layer.weight).and(&g.weight).and(&mut m.weight).and(&mut v.weight).for_each(
                |p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= step * *m / (v.sqrt() + eps);
                },
            );
            Zip::from(&mut layer.bias).and(&g.bias).and(&mut m.bias).and(&mut v.bias).for_each(
                |p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= step * *m / (v.sqrt() + eps);
                },
            );
        }
    }
}

/// Adam for a single scalar parameter.
#[derive(Debug, Clone, Copy)]
pub struct ScalarAdam {
    pub lr: f64,
    t: i32,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self { lr, t: 0, m: 0.0, v: 0.0 }
    }

    pub fn step(&mut self, p: &mut f64, g: f64) {
        let (b1, b2) = (0.9, 0.999);
        self.t += 1;
        self.m = b1 * self.m + (1.0 - b1) * g;
        self.v = b2 * self.v + (1.0 - b2) * g * g;
        let mhat = self.m / (1.0 - f64::powi(b1, self.t));
        let vhat = self.v / (1.0 - f64::powi(b2, self.t));
        *p -= self.lr * mhat / (vhat.sqrt() + 1e-8);
    }
}
