//! Fully connected layers with ReLU or sigmoid activations.

use crate::error::{Error, Result};
use crate::tensor::{uniform_init, Matrix, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Dense layer computing `activation(x * W^T + b)` over batch rows.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out_dim x in_dim`.
    pub w: Matrix,
    /// `1 x out_dim`.
    pub b: Matrix,
    pub activation: Activation,
}

/// Gradients mirroring [`DenseLayer`].
#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub w: Matrix,
    pub b: Matrix,
}

#[derive(Debug)]
pub struct DenseCache {
    /// Pre-activation values (ReLU mask source).
    z: Matrix,
    /// Post-activation values (sigmoid derivative source).
    out: Matrix,
}

impl DenseLayer {
    pub fn init(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(DenseLayer {
            w: uniform_init(out_dim, in_dim, 1.0 / (in_dim as f64).sqrt(), rng)?,
            b: Matrix::zeros(1, out_dim),
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, DenseCache)> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape {
                op: "dense_forward",
                left: x.shape(),
                right: self.w.shape(),
            });
        }
        let z = x.matmul(&self.w.transpose())?.add_row_broadcast(&self.b)?;
        let out = match self.activation {
            Activation::Relu => z.relu(),
            Activation::Sigmoid => z.sigmoid(),
        };
        Ok((out.clone(), DenseCache { z, out }))
    }

    /// Backward through the activation and affine map; returns gradients
    /// and the input gradient.
    pub fn backward(
        &self,
        x: &Matrix,
        cache: &DenseCache,
        d_out: &Matrix,
    ) -> Result<(DenseGrads, Matrix)> {
        let dz = match self.activation {
            Activation::Relu => {
                let mask = cache.z.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                d_out.hadamard(&mask)?
            }
            Activation::Sigmoid => {
                let deriv = cache.out.map(|a| a * (1.0 - a));
                d_out.hadamard(&deriv)?
            }
        };
        let grads = DenseGrads {
            w: dz.transpose().matmul(x)?,
            b: dz.col_sums(),
        };
        let dx = dz.matmul(&self.w)?;
        Ok((grads, dx))
    }
}
