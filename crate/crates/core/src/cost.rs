//! Quadratic running/final costs with temporal activation windows.
//!
//! Stage cost convention (no ½ factor):
//! `L(x, u, t) = (x−x_ref)ᵀ W_x (x−x_ref) + (u−u_ref)ᵀ W_u (u−u_ref) + Σ active temporal terms`,
//! all weight matrices diagonal. Temporal terms are hard 0/1 windows,
//! optionally periodic — periodic swing-leg targets encode a trot, a one-shot
//! base-velocity target encodes a jump.

use crate::error::CostError;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Diagonal quadratic penalty around a state/control reference.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticTerm {
    pub w_x: DVector<f64>,
    pub w_u: DVector<f64>,
    pub x_ref: DVector<f64>,
    pub u_ref: DVector<f64>,
}

impl QuadraticTerm {
    pub fn state_only(w_x: DVector<f64>, x_ref: DVector<f64>, nu: usize) -> Self {
        QuadraticTerm {
            w_x,
            w_u: DVector::zeros(nu),
            x_ref,
            u_ref: DVector::zeros(nu),
        }
    }
}

/// One entry of a partial state target: coordinate index, target value and
/// diagonal weight.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TargetEntry {
    pub index: usize,
    pub target: f64,
    pub weight: f64,
}

/// A quadratic penalty on a few state coordinates, active on the half-open
/// window [t_start, t_end), optionally repeating with a period.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TemporalActivation {
    pub t_start: f64,
    pub t_end: f64,
    pub period: Option<f64>,
    pub entries: Vec<TargetEntry>,
}

impl TemporalActivation {
    /// 1 iff the window is active at absolute time `t`.
    pub fn activation(&self, t: f64) -> f64 {
        let tau = match self.period {
            Some(p) => t.rem_euclid(p),
            None => t,
        };
        if tau >= self.t_start && tau < self.t_end {
            1.0
        } else {
            0.0
        }
    }
}

/// Full cost of a task: running quadratic terms, temporal windows and a
/// final state term.
#[derive(Clone, Debug)]
pub struct CostFunction {
    pub running: Vec<QuadraticTerm>,
    pub temporal: Vec<TemporalActivation>,
    pub final_term: QuadraticTerm,
}

/// Exact second-order expansion of the stage cost rate `L(x, u, t)`.
#[derive(Clone, Debug)]
pub struct StageQuadratization {
    pub constant: f64,
    pub grad_x: DVector<f64>,
    pub hess_x: DMatrix<f64>,
    pub grad_u: DVector<f64>,
    pub hess_u: DMatrix<f64>,
    /// ∂²L/∂u∂x; zero for every shipped term.
    pub cross: DMatrix<f64>,
}

impl StageQuadratization {
    /// Scales the whole expansion (used to turn a cost rate into the
    /// per-stage integral contribution `L·dt`).
    pub fn scaled(mut self, s: f64) -> Self {
        self.constant *= s;
        self.grad_x *= s;
        self.hess_x *= s;
        self.grad_u *= s;
        self.hess_u *= s;
        self.cross *= s;
        self
    }
}

impl CostFunction {
    /// Total cost `h(x_N) + Σ_n L(x_n, u_n, t0 + n·dt)·dt`.
    pub fn evaluate(
        &self,
        states: &[DVector<f64>],
        controls: &[DVector<f64>],
        dt: f64,
        t0: f64,
    ) -> Result<f64, CostError> {
        if states.len() != controls.len() + 1 {
            return Err(CostError::DimensionMismatch(format!(
                "expected |X| == |U| + 1, got {} and {}",
                states.len(),
                controls.len()
            )));
        }
        let mut total = self.final_value(states.last().unwrap());
        for (n, u) in controls.iter().enumerate() {
            total += self.stage_value(&states[n], u, t0 + n as f64 * dt) * dt;
        }
        Ok(total)
    }

    /// Instantaneous stage cost rate at absolute time `t`.
    pub fn stage_value(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> f64 {
        let mut l = 0.0;
        for term in &self.running {
            for i in 0..x.len() {
                let d = x[i] - term.x_ref[i];
                l += term.w_x[i] * d * d;
            }
            for i in 0..u.len() {
                let d = u[i] - term.u_ref[i];
                l += term.w_u[i] * d * d;
            }
        }
        for term in &self.temporal {
            if term.activation(t) > 0.0 {
                for e in &term.entries {
                    let d = x[e.index] - e.target;
                    l += e.weight * d * d;
                }
            }
        }
        l
    }

    pub fn final_value(&self, x: &DVector<f64>) -> f64 {
        let mut h = 0.0;
        for i in 0..x.len() {
            let d = x[i] - self.final_term.x_ref[i];
            h += self.final_term.w_x[i] * d * d;
        }
        h
    }

    /// Gradient and Hessian of the stage cost rate at (x, u, t); exact for
    /// the quadratic terms, temporal terms included iff active at `t`.
    pub fn quadratize(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> StageQuadratization {
        let (nx, nu) = (x.len(), u.len());
        let mut q = StageQuadratization {
            constant: self.stage_value(x, u, t),
            grad_x: DVector::zeros(nx),
            hess_x: DMatrix::zeros(nx, nx),
            grad_u: DVector::zeros(nu),
            hess_u: DMatrix::zeros(nu, nu),
            cross: DMatrix::zeros(nu, nx),
        };
        for term in &self.running {
            for i in 0..nx {
                q.grad_x[i] += 2.0 * term.w_x[i] * (x[i] - term.x_ref[i]);
                q.hess_x[(i, i)] += 2.0 * term.w_x[i];
            }
            for i in 0..nu {
                q.grad_u[i] += 2.0 * term.w_u[i] * (u[i] - term.u_ref[i]);
                q.hess_u[(i, i)] += 2.0 * term.w_u[i];
            }
        }
        for term in &self.temporal {
            if term.activation(t) > 0.0 {
                for e in &term.entries {
                    q.grad_x[e.index] += 2.0 * e.weight * (x[e.index] - e.target);
                    q.hess_x[(e.index, e.index)] += 2.0 * e.weight;
                }
            }
        }
        q
    }

    /// Gradient and Hessian of the final cost term.
    pub fn quadratize_final(&self, x: &DVector<f64>) -> StageQuadratization {
        let nx = x.len();
        let mut q = StageQuadratization {
            constant: self.final_value(x),
            grad_x: DVector::zeros(nx),
            hess_x: DMatrix::zeros(nx, nx),
            grad_u: DVector::zeros(0),
            hess_u: DMatrix::zeros(0, 0),
            cross: DMatrix::zeros(0, nx),
        };
        for i in 0..nx {
            q.grad_x[i] += 2.0 * self.final_term.w_x[i] * (x[i] - self.final_term.x_ref[i]);
            q.hess_x[(i, i)] += 2.0 * self.final_term.w_x[i];
        }
        q
    }
}
