//! Continuous-time dynamics abstraction `ẋ = f(x, u)` with a position /
//! velocity split, and the contact-augmented rigid-body implementation.

use crate::ad::{self, Dual, Real};
use crate::contact::{self, ContactParams, GroundPlane};
use crate::error::ModelError;
use crate::model::{self, RobotModel};
use nalgebra::{DMatrix, DVector};

/// A dynamical system whose state splits as `x = [q; v]`, with `q̇` given by
/// a kinematic map of `v` and `v̇` by an acceleration law. The split is what
/// the semi-implicit integrator and its sensitivity propagation exploit.
pub trait Dynamics: Send + Sync {
    fn nq(&self) -> usize;
    fn nv(&self) -> usize;
    fn nu(&self) -> usize;
    fn nx(&self) -> usize {
        self.nq() + self.nv()
    }

    /// `v̇ = a(q, v, u)`.
    fn acceleration(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError>;

    /// `q̇ = T(q) · v`.
    fn position_rate(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    /// Acceleration together with its exact partials `(a, ∂a/∂q, ∂a/∂v, ∂a/∂u)`.
    #[allow(clippy::type_complexity)]
    fn acceleration_with_jacobians(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>), ModelError>;

    /// `(∂(T(q)·w)/∂q` with `w` held fixed, and `T(q))`.
    fn position_rate_jacobians(
        &self,
        q: &DVector<f64>,
        w: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>);

    /// Full state derivative `ẋ = [T(q)v ; a(q, v, u)]`.
    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let (nq, nv) = (self.nq(), self.nv());
        let q = x.rows(0, nq).into_owned();
        let v = x.rows(nq, nv).into_owned();
        let mut out = DVector::zeros(nq + nv);
        out.rows_mut(0, nq).copy_from(&self.position_rate(&q, &v));
        out.rows_mut(nq, nv).copy_from(&self.acceleration(&q, &v, u)?);
        Ok(out)
    }
}

/// Rigid-body dynamics with the smooth contact model folded in, so contact
/// forces are an explicit function of the state. This is the system handed
/// to the integrator and the NLOC solvers.
#[derive(Clone, Debug)]
pub struct ContactDynamics {
    pub model: RobotModel,
    pub params: ContactParams,
    /// One ground per end-effector (uniform unless a disturbance steps one).
    pub grounds: Vec<GroundPlane>,
    /// Extra generalized force in pose-rate coordinates (disturbance pushes).
    pub external_force: Option<DVector<f64>>,
}

impl ContactDynamics {
    pub fn new(model: RobotModel, params: ContactParams, ground: GroundPlane) -> Self {
        let grounds = vec![ground; model.n_ee];
        ContactDynamics {
            model,
            params,
            grounds,
            external_force: None,
        }
    }

    /// Replaces every per-foot ground with the same plane.
    pub fn set_uniform_ground(&mut self, ground: GroundPlane) {
        for g in &mut self.grounds {
            *g = ground;
        }
    }

    fn accel_generic<T: Real>(
        &self,
        q: &DVector<T>,
        v: &DVector<T>,
        u: &DVector<T>,
    ) -> Result<DVector<T>, ModelError> {
        let pitch = q[2].clone();
        let qdot = model::apply_world_local(&pitch, v);
        let mut rhs = self.model.selection_transpose_apply(u)
            + contact::generalized_contact_forces_generic(
                &self.model,
                &self.params,
                &self.grounds,
                q,
                &qdot,
            )
            - self.model.bias_generic(q, &qdot)
            - self.model.gravity_generic(q);
        if let Some(ext) = &self.external_force {
            for i in 0..rhs.len() {
                rhs[i] += T::constant(ext[i]);
            }
        }
        let m = self.model.mass_matrix_generic(q);
        let qddot = ad::cholesky_solve(&m, &rhs).ok_or(ModelError::FactorizationFailure)?;
        Ok(model::accel_to_local(&pitch, &v[2], v, &qddot))
    }
}

impl Dynamics for ContactDynamics {
    fn nq(&self) -> usize {
        self.model.nq
    }
    fn nv(&self) -> usize {
        self.model.nq
    }
    fn nu(&self) -> usize {
        self.model.nu
    }

    fn acceleration(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        self.accel_generic(q, v, u)
    }

    fn position_rate(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        model::apply_world_local(&q[2], v)
    }

    fn acceleration_with_jacobians(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>), ModelError> {
        let (nq, nv, nu) = (self.nq(), self.nv(), self.nu());
        let ndirs = nq + nv + nu;
        let qd = ad::seed_slice(q.as_slice(), 0, ndirs);
        let vd = ad::seed_slice(v.as_slice(), nq, ndirs);
        let ud = ad::seed_slice(u.as_slice(), nq + nv, ndirs);
        let a: DVector<Dual> = self.accel_generic(&qd, &vd, &ud)?;
        Ok((
            ad::values(&a),
            ad::jacobian_block(&a, 0..nq),
            ad::jacobian_block(&a, nq..nq + nv),
            ad::jacobian_block(&a, nq + nv..ndirs),
        ))
    }

    fn position_rate_jacobians(
        &self,
        q: &DVector<f64>,
        w: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let nq = self.nq();
        let t = model::world_local_transform(q[2], nq);
        // Only the pitch column is nonzero: d/dθ of R(θ)·w_lin.
        let (s, c) = q[2].sin_cos();
        let mut p = DMatrix::zeros(nq, nq);
        p[(0, 2)] = -s * w[0] - c * w[1];
        p[(1, 2)] = c * w[0] - s * w[1];
        (p, t)
    }
}
