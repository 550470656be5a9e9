use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Linear => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Linear),
            _ => None,
        }
    }
}

/// Dense layer `y = act(W x + b)` with `W` stored as (out, in).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub act: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<Layer<T>>,
}

/// Activations of every layer for a batch, kept for the backward pass.
pub struct ForwardCache<T> {
    /// `outputs[0]` is the input batch; `outputs[k + 1]` the output of layer `k`.
    outputs: Vec<Array2<T>>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &Array2<T> {
        self.outputs.last().expect("at least the input")
    }
}

impl<T: Real> MlpParams<T> {
    /// Tanh hidden layers and a linear head. Hidden weights are Glorot-uniform;
    /// the head is additionally scaled by `head_gain`. Biases start at zero.
    pub fn init(sizes: &[usize], head_gain: T, rng: &mut impl Rng) -> Result<Self, AgentError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(AgentError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                let last = k + 1 == n;
                let gain = if last { head_gain } else { T::one() };
                let w = Array2::from_shape_fn((fan_out, fan_in), |_| T::lit(dist.sample(rng)) * gain);
                Layer {
                    w,
                    b: Array1::zeros(fan_out),
                    act: if last { Activation::Linear } else { Activation::Tanh },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| Layer {
                w: Array2::zeros((sizes[k + 1], sizes[k])),
                b: Array1::zeros(sizes[k + 1]),
                act: if k + 1 == n {
                    Activation::Linear
                } else {
                    Activation::Tanh
                },
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.len()),
                    act: l.act,
                })
                .collect(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w.ncols())
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.nrows())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].w.nrows() != pair[1].w.ncols() {
                return Err(AgentError::Shape {
                    what: format!("layer {} input", k + 1),
                    expected: pair[0].w.nrows(),
                    actual: pair[1].w.ncols(),
                });
            }
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.b.len() != l.w.nrows() {
                return Err(AgentError::Shape {
                    what: format!("layer {k} bias"),
                    expected: l.w.nrows(),
                    actual: l.b.len(),
                });
            }
        }
        if !self.is_finite() {
            return Err(AgentError::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|x| x.is_finite()))
    }

    fn check_input(&self, len: usize) -> Result<(), AgentError> {
        if len != self.input_size() {
            return Err(AgentError::Shape {
                what: "observation".into(),
                expected: self.input_size(),
                actual: len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, AgentError> {
        self.check_input(x.len())?;
        let mut h = Array1::from_vec(x.to_vec());
        for l in &self.layers {
            h = l.w.dot(&h) + &l.b;
            if l.act == Activation::Tanh {
                h.mapv_inplace(|v| v.tanh());
            }
        }
        Ok(h.to_vec())
    }

    /// Forward pass over a batch laid out as (batch, input).
    pub fn forward_batch(&self, x: &Array2<T>) -> Result<ForwardCache<T>, AgentError> {
        self.check_input(x.ncols())?;
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.clone());
        for l in &self.layers {
            let mut h = outputs.last().expect("non-empty").dot(&l.w.t()) + &l.b;
            if l.act == Activation::Tanh {
                h.mapv_inplace(|v| v.tanh());
            }
            outputs.push(h);
        }
        Ok(ForwardCache { outputs })
    }

    /// Gradient of a loss with respect to the parameters, given `d_out`, its
    /// gradient with respect to the network output for the cached batch.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &Array2<T>) -> MlpParams<T> {
        let mut grads = self.zeros_like();
        let mut delta = d_out.clone();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            if l.act == Activation::Tanh {
                let y = &cache.outputs[k + 1];
                delta.zip_mut_with(y, |d, &y| *d *= T::one() - y * y);
            }
            grads.layers[k].w = delta.t().dot(&cache.outputs[k]);
            grads.layers[k].b = delta.sum_axis(Axis(0));
            if k > 0 {
                delta = delta.dot(&l.w);
            }
        }
        grads
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut T)) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(&mut f);
            l.b.iter_mut().for_each(&mut f);
        }
    }

    pub fn params(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, values: &[T]) {
        let mut it = values.iter();
        self.for_each_param_mut(|p| *p = *it.next().expect("enough values"));
    }
}
