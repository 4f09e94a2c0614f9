//! Dense building blocks with hand-written gradients.
//!
//! Affine maps act on columns: `Y = W·X + b` with `W: out×in`, `X: in×cols`
//! and `b: out×1` broadcast across columns.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// tanh approximation of GELU.
    Gelu,
    Relu,
    Tanh,
    Identity,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_A: f64 = 0.044_715;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn forward(self, x: &Array2<f64>) -> Array2<f64> {
        x.mapv(|v| self.apply(v))
    }

    /// `d_out ⊙ f'(pre)`.
    pub fn backward(self, pre: &Array2<f64>, d_out: &Array2<f64>) -> Array2<f64> {
        let mut g = d_out.clone();
        g.zip_mut_with(pre, |g, &x| *g *= self.derivative(x));
        g
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gelu" => Ok(Activation::Gelu),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        };
        f.write_str(s)
    }
}

/// Inverted-dropout mask: entries are 0 or `1/(1−p)`.
pub fn dropout_mask(shape: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < keep { scale } else { 0.0 })
}

/// Draws a mask only in training mode with a positive rate.
pub fn maybe_mask(
    shape: (usize, usize),
    rate: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Option<Array2<f64>> {
    match rng {
        Some(rng) if rate > 0.0 => Some(dropout_mask(shape, rate, rng)),
        _ => None,
    }
}

pub fn apply_mask(x: &mut Array2<f64>, mask: Option<&Array2<f64>>) {
    if let Some(m) = mask {
        *x *= m;
    }
}

/// Uniform `±1/√fan_in` initialisation.
pub fn init_uniform(shape: (usize, usize), fan_in: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = if fan_in == 0 {
        0.0
    } else {
        1.0 / (fan_in as f64).sqrt()
    };
    Array2::from_shape_simple_fn(shape, || rng.gen_range(-1.0..=1.0) * bound)
}

pub fn affine(w: &Array2<f64>, b: &Array2<f64>, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut y = w.dot(&x);
    y += b;
    y
}

/// Parameter gradients of `Y = W·X + b` given `dY`.
pub fn affine_param_grads(d_y: &Array2<f64>, x: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
    (d_y.dot(&x.t()), row_sums(d_y))
}

pub fn row_sums(x: &Array2<f64>) -> Array2<f64> {
    x.sum_axis(Axis(1)).insert_axis(Axis(1))
}
