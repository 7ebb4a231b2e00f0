//! Generalized-coordinate robot models: a floating planar base plus revolute
//! joints, with analytic inertia, bias, gravity, selection and contact-
//! Jacobian terms. Two desk-scale models ship: a one-legged hopper and a
//! planar quadruped (front/hind leg pair).

pub mod tree;

use crate::ad::{self, Real};
use crate::error::ModelError;
use nalgebra::{DMatrix, DVector, Vector2};
use tree::{BodySpec, EndEffectorSpec, RotTerm};

/// Immutable robot description. Shareable across threads; all evaluation
/// functions are pure.
#[derive(Clone, Debug)]
pub struct RobotModel {
    pub name: String,
    /// Generalized coordinates: 3 base DoF (x, z, pitch) + joints. nq == nv.
    pub nq: usize,
    /// Actuated joints; nu == nq - 3.
    pub nu: usize,
    pub n_ee: usize,
    /// Gravitational acceleration, m/s², acting along -z.
    pub gravity: f64,
    /// Informational joint limits, rad.
    pub joint_limits: Vec<(f64, f64)>,
    /// Joint configuration with all feet on flat ground at z = 0.
    pub standing_joint_pos: Vec<f64>,
    /// Base height matching `standing_joint_pos`, m.
    pub standing_base_height: f64,
    bodies: Vec<BodySpec>,
    end_effectors: Vec<EndEffectorSpec>,
}

/// Robot state per the chosen frame convention: base pose in the world
/// frame, base twist in the local body frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    /// World-frame base position (x, z), m.
    pub base_pos: Vector2<f64>,
    /// World-frame pitch, rad, counter-clockwise positive.
    pub base_pitch: f64,
    pub joint_pos: DVector<f64>,
    /// Local-frame base linear velocity, m/s.
    pub base_vel_local: Vector2<f64>,
    /// Pitch rate, rad/s (identical in both frames in the plane).
    pub base_omega: f64,
    pub joint_vel: DVector<f64>,
}

/// Joint torques, length nu.
pub type ControlInput = DVector<f64>;

/// Kinematic state of one contact end-effector, world frame.
#[derive(Clone, Debug)]
pub struct EndEffectorState {
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
    /// ∂position/∂q, 2 × nq.
    pub jacobian: DMatrix<f64>,
}

/// Inertia matrix, bias vector and gravity vector of the rigid-body dynamics
/// in plain generalized coordinates (pose rates, not local twist).
#[derive(Clone, Debug)]
pub struct RbdTerms {
    pub m: DMatrix<f64>,
    pub c: DVector<f64>,
    pub g: DVector<f64>,
}

impl RobotState {
    /// Packs into the flat state vector
    /// `[x, z, pitch, q_J.., v_x^L, v_z^L, ω, q̇_J..]` of length 2·nq.
    pub fn to_flat(&self) -> DVector<f64> {
        let nq = 3 + self.joint_pos.len();
        let mut x = DVector::zeros(2 * nq);
        x[0] = self.base_pos.x;
        x[1] = self.base_pos.y;
        x[2] = self.base_pitch;
        x.rows_mut(3, self.joint_pos.len()).copy_from(&self.joint_pos);
        x[nq] = self.base_vel_local.x;
        x[nq + 1] = self.base_vel_local.y;
        x[nq + 2] = self.base_omega;
        x.rows_mut(nq + 3, self.joint_vel.len())
            .copy_from(&self.joint_vel);
        x
    }

    pub fn from_flat(x: &DVector<f64>) -> Self {
        debug_assert!(x.len() % 2 == 0);
        let nq = x.len() / 2;
        let nj = nq - 3;
        RobotState {
            base_pos: Vector2::new(x[0], x[1]),
            base_pitch: x[2],
            joint_pos: x.rows(3, nj).into_owned(),
            base_vel_local: Vector2::new(x[nq], x[nq + 1]),
            base_omega: x[nq + 2],
            joint_vel: x.rows(nq + 3, nj).into_owned(),
        }
    }
}

impl RobotModel {
    pub fn nv(&self) -> usize {
        self.nq
    }

    pub fn nx(&self) -> usize {
        2 * self.nq
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.mass).sum()
    }

    pub fn bodies(&self) -> &[BodySpec] {
        &self.bodies
    }

    /// Scales every body mass (plant-mismatch knob).
    pub fn scale_masses(&mut self, factor: f64) {
        for b in &mut self.bodies {
            b.mass *= factor;
        }
    }

    /// Scales every body rotational inertia (plant-mismatch knob).
    pub fn scale_inertias(&mut self, factor: f64) {
        for b in &mut self.bodies {
            b.inertia *= factor;
        }
    }

    /// State standing at rest with feet on flat ground of the given height.
    pub fn standing_state(&self, ground_height: f64) -> RobotState {
        let nj = self.nq - 3;
        RobotState {
            base_pos: Vector2::new(0.0, self.standing_base_height + ground_height),
            base_pitch: 0.0,
            joint_pos: DVector::from_vec(self.standing_joint_pos.clone()),
            base_vel_local: Vector2::zeros(),
            base_omega: 0.0,
            joint_vel: DVector::zeros(nj),
        }
    }

    /// Inertia matrix, bias and gravity terms at (q, q̇), generalized
    /// coordinates. `c` vanishes at q̇ = 0; `g` depends on q only.
    pub fn rbd_terms(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> RbdTerms {
        assert_eq!(q.len(), self.nq);
        assert_eq!(qdot.len(), self.nq);
        RbdTerms {
            m: tree::mass_matrix(&self.bodies, q),
            c: tree::bias(&self.bodies, q, qdot),
            g: tree::gravity_vector(&self.bodies, q, self.gravity),
        }
    }

    /// Generic-scalar mass matrix (used by the derivative engine).
    pub fn mass_matrix_generic<T: Real>(&self, q: &DVector<T>) -> DMatrix<T> {
        tree::mass_matrix(&self.bodies, q)
    }

    pub fn bias_generic<T: Real>(&self, q: &DVector<T>, qdot: &DVector<T>) -> DVector<T> {
        tree::bias(&self.bodies, q, qdot)
    }

    pub fn gravity_generic<T: Real>(&self, q: &DVector<T>) -> DVector<T> {
        tree::gravity_vector(&self.bodies, q, self.gravity)
    }

    /// Selection matrix transpose applied to joint torques: zeros on the
    /// unactuated base rows, τ on the joint rows.
    pub fn selection_transpose_apply<T: Real>(&self, tau: &DVector<T>) -> DVector<T> {
        debug_assert_eq!(tau.len(), self.nu);
        let mut f = DVector::zeros(self.nq);
        for i in 0..self.nu {
            f[3 + i] = tau[i].clone();
        }
        f
    }

    /// World-frame position of end-effector `ee` at configuration `q`.
    pub fn ee_position_generic<T: Real>(&self, q: &DVector<T>, ee: usize) -> Vector2<T> {
        tree::point_position(q, &self.end_effectors[ee].point)
    }

    /// World-frame contact Jacobian ∂p/∂q (2 × nq) of end-effector `ee`.
    pub fn ee_jacobian_generic<T: Real>(&self, q: &DVector<T>, ee: usize) -> DMatrix<T> {
        tree::point_jacobian(q, &self.end_effectors[ee].point)
    }

    /// Position, velocity and Jacobian of one end-effector. The velocity is
    /// `J · q̇` with `q̇ = T_WL · v` reconstructed from the local twist.
    pub fn end_effector_state(
        &self,
        x: &RobotState,
        ee: usize,
    ) -> Result<EndEffectorState, ModelError> {
        if ee >= self.n_ee {
            return Err(ModelError::IndexOutOfRange {
                index: ee,
                count: self.n_ee,
            });
        }
        let flat = x.to_flat();
        let q = flat.rows(0, self.nq).into_owned();
        let v = flat.rows(self.nq, self.nq).into_owned();
        let qdot = apply_world_local(&x.base_pitch, &v);
        let jacobian = self.ee_jacobian_generic(&q, ee);
        let velocity2 = &jacobian * &qdot;
        Ok(EndEffectorState {
            position: self.ee_position_generic(&q, ee),
            velocity: Vector2::new(velocity2[0], velocity2[1]),
            jacobian,
        })
    }

    /// Overall dynamics of the state `[q; v]` with pose in the world frame
    /// and twist in the local frame: `ẋ = [T_WL·v ; v̇]`.
    ///
    /// `lambda_gen` is the generalized contact force `Σ J_cᵀ λ` in pose-rate
    /// coordinates (dimension nv). The acceleration solves the rigid-body
    /// equation through an SPD factorization of M and maps the result back
    /// into the local-twist coordinates.
    pub fn forward_dynamics(
        &self,
        x: &DVector<f64>,
        tau: &DVector<f64>,
        lambda_gen: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        let nq = self.nq;
        let q = x.rows(0, nq).into_owned();
        let v = x.rows(nq, nq).into_owned();
        let pitch = x[2];
        let qdot = apply_world_local(&pitch, &v);

        let m = tree::mass_matrix(&self.bodies, &q);
        let c = tree::bias(&self.bodies, &q, &qdot);
        let g = tree::gravity_vector(&self.bodies, &q, self.gravity);
        let rhs = self.selection_transpose_apply(tau) + lambda_gen - c - g;
        let qddot = ad::cholesky_solve(&m, &rhs).ok_or(ModelError::FactorizationFailure)?;
        let vdot = accel_to_local(&pitch, &v[2], &v, &qddot);

        let mut xdot = DVector::zeros(2 * nq);
        xdot.rows_mut(0, nq).copy_from(&qdot);
        xdot.rows_mut(nq, nq).copy_from(&vdot);
        Ok(xdot)
    }
}

/// The transform T_WL mapping the local twist to world pose rates: a 2×2
/// rotation by the pitch on the linear block, identity elsewhere.
pub fn world_local_transform(base_pitch: f64, n: usize) -> DMatrix<f64> {
    let mut t = DMatrix::identity(n, n);
    let (s, c) = base_pitch.sin_cos();
    t[(0, 0)] = c;
    t[(0, 1)] = -s;
    t[(1, 0)] = s;
    t[(1, 1)] = c;
    t
}

/// `q̇ = T_WL(pitch) · v` without building the matrix.
pub fn apply_world_local<T: Real>(pitch: &T, v: &DVector<T>) -> DVector<T> {
    let (s, c) = (pitch.sin(), pitch.cos());
    let mut qdot = v.clone();
    qdot[0] = c.clone() * v[0].clone() - s.clone() * v[1].clone();
    qdot[1] = s * v[0].clone() + c * v[1].clone();
    qdot
}

/// `v = T_WL(pitch)ᵀ · q̇` (the rotation block is orthonormal).
pub fn apply_local_world<T: Real>(pitch: &T, qdot: &DVector<T>) -> DVector<T> {
    let (s, c) = (pitch.sin(), pitch.cos());
    let mut v = qdot.clone();
    v[0] = c.clone() * qdot[0].clone() + s.clone() * qdot[1].clone();
    v[1] = -s * qdot[0].clone() + c * qdot[1].clone();
    v
}

/// Maps a pose-rate acceleration q̈ into the local-twist acceleration:
/// `v̇ = T⁻¹ (q̈ − Ṫ v)` where `Ṫ v` only affects the linear block.
pub(crate) fn accel_to_local<T: Real>(
    pitch: &T,
    omega: &T,
    v: &DVector<T>,
    qddot: &DVector<T>,
) -> DVector<T> {
    // Ṫ v = ω · dR/dθ · v_lin on the first two rows.
    let (s, c) = (pitch.sin(), pitch.cos());
    let tdot_v_x = omega.clone() * (-s.clone() * v[0].clone() - c.clone() * v[1].clone());
    let tdot_v_y = omega.clone() * (c.clone() * v[0].clone() - s * v[1].clone());
    let mut corrected = qddot.clone();
    corrected[0] -= tdot_v_x;
    corrected[1] -= tdot_v_y;
    apply_local_world(pitch, &corrected)
}

/// Parameter overrides applied to the shipped models.
#[derive(Clone, Copy, Debug)]
pub struct ModelParams {
    pub gravity: f64,
    pub mass_scale: f64,
    pub inertia_scale: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            gravity: 9.81,
            mass_scale: 1.0,
            inertia_scale: 1.0,
        }
    }
}

/// One-legged planar hopper: base (x, z, pitch) + hip + knee, one foot.
/// nq = 5, nu = 2.
pub fn hopper(params: ModelParams) -> RobotModel {
    let l = 0.35; // segment length, m
    let torso = BodySpec {
        mass: 8.0,
        inertia: 0.15,
        com: vec![],
        angle_joints: vec![],
    };
    let thigh = BodySpec {
        mass: 1.0,
        inertia: 0.011,
        com: vec![RotTerm::new(0.0, -l / 2.0, &[0])],
        angle_joints: vec![0],
    };
    let shank = BodySpec {
        mass: 0.5,
        inertia: 0.0055,
        com: vec![RotTerm::new(0.0, -l, &[0]), RotTerm::new(0.0, -l / 2.0, &[0, 1])],
        angle_joints: vec![0, 1],
    };
    let foot = EndEffectorSpec {
        point: vec![RotTerm::new(0.0, -l, &[0]), RotTerm::new(0.0, -l, &[0, 1])],
    };
    let (hip0, knee0) = (0.3, -0.6);
    let mut model = RobotModel {
        name: "hopper".into(),
        nq: 5,
        nu: 2,
        n_ee: 1,
        gravity: params.gravity,
        joint_limits: vec![(-2.5, 2.5); 2],
        standing_joint_pos: vec![hip0, knee0],
        standing_base_height: l * (f64::cos(hip0) + f64::cos(hip0 + knee0)),
        bodies: vec![torso, thigh, shank],
        end_effectors: vec![foot],
    };
    model.scale_masses(params.mass_scale);
    model.scale_inertias(params.inertia_scale);
    model
}

/// Planar quadruped: base (x, z, pitch) + front leg (HFE, KFE) + hind leg
/// (HFE, KFE), two feet. nq = 7, nu = 4. Total mass 30 kg, segment length
/// 0.35 m, hips at ±0.35 m along the torso.
pub fn quadruped(params: ModelParams) -> RobotModel {
    let l = 0.35;
    let hip_x = 0.35;
    let torso = BodySpec {
        mass: 25.0,
        inertia: 1.0,
        com: vec![],
        angle_joints: vec![],
    };
    let leg = |sign: f64, hfe: usize, kfe: usize| -> (BodySpec, BodySpec, EndEffectorSpec) {
        let thigh = BodySpec {
            mass: 1.5,
            inertia: 0.016,
            com: vec![
                RotTerm::new(sign * hip_x, 0.0, &[]),
                RotTerm::new(0.0, -l / 2.0, &[hfe]),
            ],
            angle_joints: vec![hfe],
        };
        let shank = BodySpec {
            mass: 1.0,
            inertia: 0.011,
            com: vec![
                RotTerm::new(sign * hip_x, 0.0, &[]),
                RotTerm::new(0.0, -l, &[hfe]),
                RotTerm::new(0.0, -l / 2.0, &[hfe, kfe]),
            ],
            angle_joints: vec![hfe, kfe],
        };
        let foot = EndEffectorSpec {
            point: vec![
                RotTerm::new(sign * hip_x, 0.0, &[]),
                RotTerm::new(0.0, -l, &[hfe]),
                RotTerm::new(0.0, -l, &[hfe, kfe]),
            ],
        };
        (thigh, shank, foot)
    };
    let (front_thigh, front_shank, front_foot) = leg(1.0, 0, 1);
    let (hind_thigh, hind_shank, hind_foot) = leg(-1.0, 2, 3);
    // X-configuration stance: front knee bends backward, hind forward.
    let standing = vec![0.4, -0.8, -0.4, 0.8];
    let mut model = RobotModel {
        name: "quadruped".into(),
        nq: 7,
        nu: 4,
        n_ee: 2,
        gravity: params.gravity,
        joint_limits: vec![(-2.5, 2.5); 4],
        standing_base_height: l * (f64::cos(0.4) + f64::cos(-0.4)),
        standing_joint_pos: standing,
        bodies: vec![torso, front_thigh, front_shank, hind_thigh, hind_shank],
        end_effectors: vec![front_foot, hind_foot],
    };
    model.scale_masses(params.mass_scale);
    model.scale_inertias(params.inertia_scale);
    model
}

/// Builds a shipped model by name.
pub fn by_name(name: &str, params: ModelParams) -> Result<RobotModel, ModelError> {
    match name {
        "hopper" => Ok(hopper(params)),
        "quadruped" => Ok(quadruped(params)),
        other => Err(ModelError::UnknownModel(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::{fd_gradient, fd_hessian, fd_jacobian, kinetic_energy_fd, FdSettings};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::Vector2;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_state(model: &RobotModel, rng: &mut StdRng) -> (DVector<f64>, DVector<f64>) {
        let nq = model.nq;
        let mut q = DVector::zeros(nq);
        q[0] = rng.random_range(-1.0..1.0);
        q[1] = rng.random_range(0.3..1.2);
        q[2] = rng.random_range(-0.5..0.5);
        for j in 0..nq - 3 {
            let (lo, hi) = model.joint_limits[j];
            q[3 + j] = rng.random_range(lo * 0.4..hi * 0.4);
        }
        let qdot = DVector::from_fn(nq, |_, _| rng.random_range(-2.0..2.0));
        (q, qdot)
    }

    #[test]
    fn bias_vanishes_at_rest() {
        let model = hopper(ModelParams::default());
        let q = DVector::from_vec(vec![0.1, 0.8, 0.2, 0.4, -0.9]);
        let terms = model.rbd_terms(&q, &DVector::zeros(5));
        assert_eq!(terms.c.amax(), 0.0);
    }

    #[test]
    fn gravity_base_z_is_total_weight() {
        let model = hopper(ModelParams::default());
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let (q, _) = random_state(&model, &mut rng);
            let terms = model.rbd_terms(&q, &DVector::zeros(5));
            assert_relative_eq!(terms.g[1], model.total_mass() * model.gravity, epsilon = 1e-12);
        }
    }

    #[test]
    fn mass_matrix_matches_kinetic_energy_hessian() {
        let model = quadruped(ModelParams::default());
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let (q, qdot) = random_state(&model, &mut rng);
            let terms = model.rbd_terms(&q, &qdot);
            let oracle = fd_hessian(
                |qd| kinetic_energy_fd(&model, &q, qd),
                &DVector::zeros(model.nq),
                1e-3,
            );
            for i in 0..model.nq {
                for j in 0..model.nq {
                    assert_abs_diff_eq!(terms.m[(i, j)], oracle[(i, j)], epsilon = 1e-5);
                }
            }
        }
    }

    #[test]
    fn mass_matrix_symmetric_positive_definite() {
        for model in [hopper(ModelParams::default()), quadruped(ModelParams::default())] {
            let mut rng = StdRng::seed_from_u64(3);
            for _ in 0..500 {
                let (q, _) = random_state(&model, &mut rng);
                let m = model.mass_matrix_generic::<f64>(&q);
                assert_relative_eq!(m, m.transpose(), epsilon = 1e-14);
                let eig = m.clone().symmetric_eigen().eigenvalues;
                assert!(eig.min() > 0.0, "non-PD inertia at q = {q:?}");
            }
        }
    }

    #[test]
    fn static_equilibrium_has_zero_acceleration() {
        let model = quadruped(ModelParams::default());
        let x = model.standing_state(0.0).to_flat();
        let q = x.rows(0, 7).into_owned();
        let g = model.gravity_generic::<f64>(&q);
        let xdot = model
            .forward_dynamics(&x, &DVector::zeros(4), &g)
            .unwrap();
        assert_abs_diff_eq!(xdot.amax(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn free_fall_acceleration() {
        let model = hopper(ModelParams::default());
        let mut x = model.standing_state(0.0).to_flat();
        x[1] = 5.0; // high in the air; no contact force passed anyway
        let xdot = model
            .forward_dynamics(&x, &DVector::zeros(2), &DVector::zeros(5))
            .unwrap();
        assert_abs_diff_eq!(xdot[5], 0.0, epsilon = 1e-12); // v̇_x
        assert_relative_eq!(xdot[6], -model.gravity, epsilon = 1e-12); // v̇_z
        assert_abs_diff_eq!(xdot[7], 0.0, epsilon = 1e-12); // pitch
        assert_abs_diff_eq!(xdot[8], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(xdot[9], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn unit_torque_matches_dense_solve() {
        let model = quadruped(ModelParams::default());
        let mut x = model.standing_state(0.0).to_flat();
        x[1] = 3.0;
        let q = x.rows(0, 7).into_owned();
        for i in 0..model.nu {
            let mut tau = DVector::zeros(4);
            tau[i] = 1.0;
            let xdot = model.forward_dynamics(&x, &tau, &DVector::zeros(7)).unwrap();
            // Dense oracle: LU solve of M a = Sᵀe_i − G, gravity removed.
            let terms = model.rbd_terms(&q, &DVector::zeros(7));
            let rhs = model.selection_transpose_apply(&tau) - &terms.g;
            let a_ref = terms.m.lu().solve(&rhs).unwrap();
            let accel = xdot.rows(7, 7).into_owned();
            // pitch = 0 and qdot = 0, so local and world accelerations agree.
            assert_relative_eq!(accel, a_ref, epsilon = 1e-10);
        }
    }

    /// Test-local reimplementation of the Lagrangian dynamics built entirely
    /// from finite differences of energies: M from the KE Hessian, G from
    /// the PE gradient, C from Christoffel symbols of the FD inertia.
    fn fd_lagrangian_accel(
        model: &RobotModel,
        q: &DVector<f64>,
        v: &DVector<f64>,
        tau: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> DVector<f64> {
        let nq = model.nq;
        let (s, c) = q[2].sin_cos();
        // q̇ = T v (independent rewrite of the transform).
        let mut qdot = v.clone();
        qdot[0] = c * v[0] - s * v[1];
        qdot[1] = s * v[0] + c * v[1];

        // The energy is quadratic in q̇, so the Hessian step can be large;
        // that keeps the roundoff amplification of the second difference low.
        let m_at = |qq: &DVector<f64>| {
            fd_hessian(|qd| kinetic_energy_fd(model, qq, qd), &DVector::zeros(nq), 0.5)
        };
        let m0 = m_at(q);
        // ∂M/∂q_k by central differences of the FD mass matrix.
        let h = 1e-2;
        let mut dm = Vec::with_capacity(nq);
        for k in 0..nq {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            dm.push((m_at(&qp) - m_at(&qm)) / (2.0 * h));
        }
        let mut c_vec = DVector::zeros(nq);
        for i in 0..nq {
            let mut acc = 0.0;
            for j in 0..nq {
                for k in 0..nq {
                    acc += (dm[k][(i, j)] - 0.5 * dm[i][(j, k)]) * qdot[j] * qdot[k];
                }
            }
            c_vec[i] = acc;
        }
        let g_vec = fd_gradient(
            |qq| {
                model
                    .bodies()
                    .iter()
                    .map(|b| b.mass * model.gravity * tree::point_position(qq, &b.com).y)
                    .sum()
            },
            q,
            FdSettings { step: 1e-6 },
        );
        let mut rhs = lambda - c_vec - g_vec;
        for i in 0..model.nu {
            rhs[3 + i] += tau[i];
        }
        let qddot = m0.lu().solve(&rhs).unwrap();
        // Local-twist bridge, rewritten: v̇ = Tᵀ(q̈ − ω dR/dθ v_lin).
        let omega = v[2];
        let mut corr = qddot.clone();
        corr[0] -= omega * (-s * v[0] - c * v[1]);
        corr[1] -= omega * (c * v[0] - s * v[1]);
        let mut vdot = corr.clone();
        vdot[0] = c * corr[0] + s * corr[1];
        vdot[1] = -s * corr[0] + c * corr[1];
        vdot
    }

    #[test]
    fn forward_dynamics_matches_fd_lagrangian_oracle() {
        let model = quadruped(ModelParams::default());
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..100 {
            let (q, v) = random_state(&model, &mut rng);
            let tau = DVector::from_fn(4, |_, _| rng.random_range(-10.0..10.0));
            let lambda = DVector::from_fn(7, |_, _| rng.random_range(-30.0..30.0));
            let mut x = DVector::zeros(14);
            x.rows_mut(0, 7).copy_from(&q);
            x.rows_mut(7, 7).copy_from(&v);
            let xdot = model.forward_dynamics(&x, &tau, &lambda).unwrap();
            let v_dot = xdot.rows(7, 7).into_owned();
            let oracle = fd_lagrangian_accel(&model, &q, &v, &tau, &lambda);
            let scale = oracle.amax().max(1.0);
            assert!(
                (v_dot.clone() - &oracle).amax() / scale < 1e-4,
                "accel mismatch: {v_dot:?} vs {oracle:?}"
            );
        }
    }

    #[test]
    fn world_local_transform_properties() {
        let t0 = world_local_transform(0.0, 5);
        assert_relative_eq!(t0, DMatrix::identity(5, 5), epsilon = 1e-15);

        let t = world_local_transform(std::f64::consts::FRAC_PI_2, 5);
        let mut v = DVector::zeros(5);
        v[0] = 1.0;
        let w = &t * &v;
        assert_abs_diff_eq!(w[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(w[1], 1.0, epsilon = 1e-12);

        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let pitch: f64 = rng.random_range(-3.0..3.0);
            let t = world_local_transform(pitch, 4);
            let lin = t.view((0, 0), (2, 2)).into_owned();
            assert_relative_eq!(
                &lin * lin.transpose(),
                DMatrix::identity(2, 2),
                epsilon = 1e-14
            );
            assert_relative_eq!(lin.determinant(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn foot_position_at_zero_configuration() {
        let hopper = hopper(ModelParams::default());
        let mut state = hopper.standing_state(0.0);
        state.base_pos = Vector2::zeros();
        state.joint_pos.fill(0.0);
        let ee = hopper.end_effector_state(&state, 0).unwrap();
        assert_relative_eq!(ee.position, Vector2::new(0.0, -0.7), epsilon = 1e-14);

        let quad = quadruped(ModelParams::default());
        let mut state = quad.standing_state(0.0);
        state.base_pos = Vector2::zeros();
        state.joint_pos.fill(0.0);
        let front = quad.end_effector_state(&state, 0).unwrap();
        let hind = quad.end_effector_state(&state, 1).unwrap();
        assert_relative_eq!(front.position, Vector2::new(0.35, -0.7), epsilon = 1e-14);
        assert_relative_eq!(hind.position, Vector2::new(-0.35, -0.7), epsilon = 1e-14);
    }

    #[test]
    fn foot_velocity_and_jacobian() {
        let model = quadruped(ModelParams::default());
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..30 {
            let (q, v) = random_state(&model, &mut rng);
            let mut flat = DVector::zeros(14);
            flat.rows_mut(0, 7).copy_from(&q);
            flat.rows_mut(7, 7).copy_from(&v);
            let state = RobotState::from_flat(&flat);
            for ee in 0..model.n_ee {
                let st = model.end_effector_state(&state, ee).unwrap();
                // Jacobian against FD of position w.r.t. q.
                let jac_fd = fd_jacobian(
                    |qq| {
                        let p = model.ee_position_generic::<f64>(qq, ee);
                        DVector::from_vec(vec![p.x, p.y])
                    },
                    &q,
                    FdSettings::default(),
                );
                assert!((st.jacobian.clone() - &jac_fd).amax() < 1e-6);
                // Chain rule: velocity == J · q̇ exactly as constructed.
                let qdot = apply_world_local(&q[2], &v);
                let jv = &st.jacobian * &qdot;
                assert_abs_diff_eq!(st.velocity.x, jv[0], epsilon = 1e-10);
                assert_abs_diff_eq!(st.velocity.y, jv[1], epsilon = 1e-10);
            }
            // Zero velocity at zero rates.
            let mut rest = state.clone();
            rest.base_vel_local = Vector2::zeros();
            rest.base_omega = 0.0;
            rest.joint_vel.fill(0.0);
            let st = model.end_effector_state(&rest, 0).unwrap();
            assert_eq!(st.velocity.norm(), 0.0);
        }
    }

    #[test]
    fn ee_index_out_of_range() {
        let model = hopper(ModelParams::default());
        let state = model.standing_state(0.0);
        assert!(matches!(
            model.end_effector_state(&state, 1),
            Err(ModelError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn state_flat_round_trip() {
        let model = quadruped(ModelParams::default());
        let state = model.standing_state(0.1);
        let flat = state.to_flat();
        assert_eq!(flat.len(), model.nx());
        assert_eq!(RobotState::from_flat(&flat), state);
    }

    #[test]
    fn passivity_energy_conservation() {
        use crate::integrator::{step_explicit, Scheme};
        // Free dynamics (no contact, no actuation): total energy conserved.
        let model = hopper(ModelParams::default());
        let dynamics = crate::dynamics::ContactDynamics::new(
            model.clone(),
            crate::contact::ContactParams {
                k: 0.0,
                d: 0.0,
                ..Default::default()
            },
            crate::contact::GroundPlane::flat(-100.0),
        );
        let mut x = model.standing_state(0.0).to_flat();
        x[1] = 2.0;
        x[5] = 0.4; // some initial motion
        x[7] = 1.0;
        x[9] = -2.0;
        let energy = |x: &DVector<f64>| {
            let q = x.rows(0, 5).into_owned();
            let v = x.rows(5, 5).into_owned();
            let qdot = apply_world_local(&x[2], &v);
            tree::kinetic_energy(model.bodies(), &q, &qdot)
                + tree::potential_energy(model.bodies(), &q, model.gravity)
        };
        let e0 = energy(&x);
        let h = 1e-5;
        let u = DVector::zeros(2);
        for _ in 0..100_000 {
            x = step_explicit(&dynamics, &x, &u, h, Scheme::Rk4).unwrap();
        }
        let drift = (energy(&x) - e0).abs() / e0.abs();
        assert!(drift < 1e-3, "energy drift {drift}");
    }
}
