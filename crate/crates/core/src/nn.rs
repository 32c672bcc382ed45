//! Small dense MLPs on top of the tape.

use crate::mat::Mat;
use crate::scalar::{cast, Scalar};
use crate::tape::{Tape, VarId};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Elementwise activation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Elu,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: &Mat<T>) -> Mat<T> {
        match self {
            Activation::Identity => x.clone(),
            Activation::Tanh => x.map(|v| v.tanh()),
            Activation::Elu => x.map(|v| if v > T::zero() { v } else { v.exp() - T::one() }),
            Activation::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
        }
    }
}

/// x @ w + bias, the basic affine layer. `bias` is a 1xN row vector.
pub fn affine_forward<T: Scalar>(x: &Mat<T>, w: &Mat<T>, b: &Mat<T>) -> Result<Mat<T>> {
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(Error::Shape(format!(
            "affine_forward: bias {}x{} does not match weight {}x{}",
            b.rows(),
            b.cols(),
            w.rows(),
            w.cols()
        )));
    }
    x.matmul(w)?.add_row_broadcast(b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer<T> {
    pub w: Mat<T>,
    pub b: Mat<T>,
    pub act: Activation,
}

/// Feed-forward network: a chain of affine layers with activations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Build with Xavier-uniform weight init. `dims` chains input through
    /// hidden sizes to the output; hidden layers use `hidden_act`, the last
    /// layer `out_act`.
    pub fn new<R: Rng>(
        dims: &[usize],
        hidden_act: Activation,
        out_act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "mlp needs at least input and output dims, got {dims:?}"
            )));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for k in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Mat::zeros(fan_in, fan_out);
            for v in w.data_mut() {
                *v = cast::<T>(rng.gen_range(-limit..limit));
            }
            let act = if k + 2 == dims.len() { out_act } else { hidden_act };
            layers.push(Layer {
                w,
                b: Mat::zeros(1, fan_out),
                act,
            });
        }
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.cols()
    }

    /// Layer dimension chain, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.w.cols()));
        d
    }

    /// Plain forward pass (no tape). `x` is Bxinput.
    pub fn forward(&self, x: &Mat<T>) -> Result<Mat<T>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = affine_forward(&h, &layer.w, &layer.b)?;
            h = layer.act.apply(&h);
        }
        Ok(h)
    }

    /// Forward pass recorded on a tape against already-registered parameter
    /// nodes (`vars` from [`Mlp::register`]).
    pub fn forward_on_tape(&self, tape: &mut Tape<T>, x: VarId, vars: &MlpVars) -> Result<VarId> {
        if vars.layers.len() != self.layers.len() {
            return Err(Error::Contract("mlp vars do not match layer count".into()));
        }
        let mut h = x;
        for (layer, lv) in self.layers.iter().zip(vars.layers.iter()) {
            h = tape.affine(h, lv.0, lv.1)?;
            h = tape.activation(h, layer.act);
        }
        Ok(h)
    }

    /// Register every weight and bias as a tape parameter.
    pub fn register(&self, tape: &mut Tape<T>) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.param(l.w.clone()), tape.param(l.b.clone())))
                .collect(),
        }
    }

    /// Flat views of all parameter matrices, weights before biases per layer.
    pub fn param_mats(&self) -> Vec<&Mat<T>> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn param_mats_mut(&mut self) -> Vec<&mut Mat<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

/// Tape handles for an MLP's registered parameters.
pub struct MlpVars {
    pub layers: Vec<(VarId, VarId)>,
}

impl MlpVars {
    pub fn all(&self) -> Vec<VarId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}
