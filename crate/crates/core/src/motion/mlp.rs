//! Minimal fully-connected regressor with SiLU hidden activations, manual
//! backpropagation and Adam.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `inputs x outputs`, row-major.
    pub w: Array2<f32>,
    pub b: Array1<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[inline]
fn sigmoid(z: f32) -> f32 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
fn silu(z: f32) -> f32 {
    z * sigmoid(z)
}

#[inline]
fn silu_grad(z: f32) -> f32 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Activations kept for the backward pass.
pub struct Tape {
    inputs: Vec<Array2<f32>>,
    pre: Vec<Array2<f32>>,
}

impl Mlp {
    /// Xavier-uniform weights, zero biases; the output layer is scaled down.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (k, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
            if k + 2 == sizes.len() {
                limit *= 0.1;
            }
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit));
            layers.push(Dense {
                w,
                b: Array1::zeros(fan_out),
            });
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &Array2<f32>) -> Array2<f32> {
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w);
            z += &layer.b;
            if k < last {
                z.mapv_inplace(silu);
            }
            a = z;
        }
        a
    }

    pub fn forward_tape(&self, x: &Array2<f32>) -> (Array2<f32>, Tape) {
        let last = self.layers.len() - 1;
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w);
            z += &layer.b;
            tape.inputs.push(a);
            if k < last {
                let act = z.mapv(silu);
                tape.pre.push(z);
                a = act;
            } else {
                tape.pre.push(z.clone());
                a = z;
            }
        }
        (a, tape)
    }

    /// Gradients of the loss given `d_out = dL/d(output)`.
    pub fn backward(&self, tape: &Tape, d_out: Array2<f32>) -> Vec<Dense> {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut dz = d_out;
        for k in (0..self.layers.len()).rev() {
            let input = &tape.inputs[k];
            let gw = input.t().dot(&dz);
            let gb = dz.sum_axis(Axis(0));
            grads.push(Dense { w: gw, b: gb });
            if k > 0 {
                let mut da = dz.dot(&self.layers[k].w.t());
                da.zip_mut_with(&tape.pre[k - 1], |g, &z| *g *= silu_grad(z));
                dz = da;
            }
        }
        grads.reverse();
        grads
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Adam {
    pub fn new(net: &Mlp) -> Self {
        let zeros = |l: &Dense| Dense {
            w: Array2::zeros(l.w.raw_dim()),
            b: Array1::zeros(l.b.len()),
        };
        Self {
            m: net.layers.iter().map(zeros).collect(),
            v: net.layers.iter().map(zeros).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &[Dense], lr: f32) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |p: &mut f32, g: f32, m: &mut f32, v: &mut f32| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(&mut layer.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}
