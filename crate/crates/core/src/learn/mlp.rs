//! Fully connected ReLU networks with a hand-written backward pass.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

/// Flat access to every trainable tensor, in a fixed order.
pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Copies every parameter into one vector.
    fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }
}

/// `y = x W + b` with `W` stored input-major (`in x out`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations saved by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

/// Orthogonal matrix of the given shape scaled by `gain` (modified
/// Gram-Schmidt on a Gaussian draw).
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Array2<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let mut a = Array2::from_shape_fn((tall, short), |_| -> f64 { StandardNormal.sample(rng) });
    for j in 0..short {
        for k in 0..j {
            let dot = a.column(j).dot(&a.column(k));
            let ck = a.column(k).to_owned();
            a.column_mut(j).scaled_add(-dot, &ck);
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        if norm > 1e-12 {
            a.column_mut(j).mapv_inplace(|v| v / norm);
        }
    }
    let a = if rows >= cols { a } else { a.reversed_axes().as_standard_layout().into_owned() };
    a * gain
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`. Hidden layers get orthogonal
    /// init with `hidden_gain`, the last layer with `output_gain`.
    pub fn new(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense {
                weight: orthogonal(w[0], w[1], if i == last { output_gain } else { hidden_gain }, rng),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes
                .windows(2)
                .map(|w| Dense {
                    weight: Array2::zeros((w[0], w[1])),
                    bias: Array1::zeros(w[1]),
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

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "mlp input",
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.weight) + &l.bias;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.weight) + &l.bias;
            inputs.push(h);
            h = if i < last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            pre_activations.push(z);
        }
        Ok((h, MlpCache { inputs, pre_activations }))
    }

    /// Gradients of a scalar loss given `d loss / d output`.
    pub fn backward(&self, cache: &MlpCache, grad_output: Array2<f64>) -> Mlp {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut g = grad_output;
        for (i, l) in self.layers.iter().enumerate().rev() {
            let weight = cache.inputs[i].t().dot(&g).as_standard_layout().into_owned();
            let bias = g.sum_axis(Axis(0));
            grads.push(Dense { weight, bias });
            if i > 0 {
                let mut prev = g.dot(&l.weight.t());
                prev.zip_mut_with(&cache.pre_activations[i - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                g = prev;
            }
        }
        grads.reverse();
        Mlp { layers: grads }
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}
