//! Time-varying affine state-feedback policy
//! `u_n(x) = u_ff_n + K_n (x − x_ref_n)`.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct Policy {
    pub u_ff: Vec<DVector<f64>>,
    pub gains: Vec<DMatrix<f64>>,
    pub x_ref: Vec<DVector<f64>>,
}

impl Policy {
    /// Pure feedforward policy with zero gains around the given references.
    pub fn feedforward(u_ff: Vec<DVector<f64>>, x_ref: Vec<DVector<f64>>) -> Self {
        let (nx, nu) = (x_ref[0].len(), u_ff[0].len());
        let gains = vec![DMatrix::zeros(nu, nx); u_ff.len()];
        Policy { u_ff, gains, x_ref }
    }

    pub fn len(&self) -> usize {
        self.u_ff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_ff.is_empty()
    }

    /// Control at stage `n` for state `x`, clamping `n` to the last stage.
    pub fn control(&self, n: usize, x: &DVector<f64>) -> DVector<f64> {
        let n = n.min(self.len() - 1);
        &self.u_ff[n] + &self.gains[n] * (x - &self.x_ref[n])
    }
}
