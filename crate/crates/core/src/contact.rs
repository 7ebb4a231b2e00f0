//! Smooth contact model: an exponential spring along the surface normal and
//! a sigmoid-gated damper in all contact-frame directions. The force is an
//! explicit, C¹ function of the robot state, so the solver can reason about
//! contacts before they are established — the normal force never completely
//! vanishes, it only decays exponentially with the gap.

use crate::ad::Real;
use crate::error::ContactError;
use crate::model::RobotModel;
use nalgebra::{DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

/// Spring/damper gains and smoothing sharpness.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ContactParams {
    /// Spring gain, N: normal force at zero penetration.
    pub k: f64,
    /// Damper gain, N·s/m.
    pub d: f64,
    /// Exponential sharpness of the spring, 1/m.
    pub alpha_k: f64,
    /// Sigmoid sharpness of the damper gate, 1/m.
    pub alpha_d: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        // Desk-scale defaults: a 30 kg quadruped at static stance penetrates
        // a few millimetres.
        ContactParams {
            k: 100.0,
            d: 500.0,
            alpha_k: 100.0,
            alpha_d: 500.0,
        }
    }
}

/// Ground line `z = height` (flat) or a single incline through (0, height)
/// with the given outward unit normal.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GroundPlane {
    pub height: f64,
    pub normal: Vector2<f64>,
}

impl GroundPlane {
    pub fn flat(height: f64) -> Self {
        GroundPlane {
            height,
            normal: Vector2::new(0.0, 1.0),
        }
    }

    /// Signed penetration of a world point: positive below the surface.
    pub fn penetration(&self, p: &Vector2<f64>) -> f64 {
        -(p - Vector2::new(0.0, self.height)).dot(&self.normal)
    }

    /// Rotation from the contact frame (tangential, normal) to the world.
    pub fn rotation_to_world(&self) -> Matrix2<f64> {
        let t = Vector2::new(self.normal.y, -self.normal.x);
        Matrix2::from_columns(&[t, self.normal])
    }
}

impl Default for GroundPlane {
    fn default() -> Self {
        GroundPlane::flat(0.0)
    }
}

/// Contact force expressed in the contact frame C (tangential, normal).
#[derive(Clone, Copy, Debug)]
pub struct ContactForce {
    pub force: Vector2<f64>,
}

/// Spring-damper force in the contact frame.
///
/// `p_z > 0` means the foot has penetrated below the surface. The normal
/// spring is `k·exp(alpha_k·p_z)` pushing out of the ground; the damper
/// `d·sig(alpha_d·p_z)` opposes the foot velocity in both contact-frame
/// directions.
pub fn contact_force_contact_frame(
    params: &ContactParams,
    p_z: f64,
    pdot: &Vector2<f64>,
) -> ContactForce {
    let f = contact_force_generic(params, &p_z, &Vector2::new(pdot.x, pdot.y));
    ContactForce { force: f }
}

/// Generic-scalar version used inside the dynamics and its linearization.
pub fn contact_force_generic<T: Real>(
    params: &ContactParams,
    p_z: &T,
    pdot_contact: &Vector2<T>,
) -> Vector2<T> {
    let spring = T::constant(params.k) * (T::constant(params.alpha_k) * p_z.clone()).exp();
    let gate = (T::constant(params.alpha_d) * p_z.clone()).sigmoid();
    let damp = T::constant(params.d) * gate;
    Vector2::new(
        -damp.clone() * pdot_contact.x.clone(),
        spring - damp * pdot_contact.y.clone(),
    )
}

/// Rotates a contact-frame force into the world frame.
pub fn contact_force_world_frame(ground: &GroundPlane, force_c: &ContactForce) -> Vector2<f64> {
    ground.rotation_to_world() * force_c.force
}

/// Rotates a world-frame force back into the contact frame.
pub fn world_force_to_contact_frame(ground: &GroundPlane, force_w: &Vector2<f64>) -> Vector2<f64> {
    ground.rotation_to_world().transpose() * force_w
}

/// Generalized contact force `Σ_i J_c,iᵀ λ_i(q, q̇)` over all end-effectors,
/// in pose-rate coordinates (dimension nv). Pure function of the state.
pub fn generalized_contact_forces(
    model: &RobotModel,
    params: &ContactParams,
    grounds: &[GroundPlane],
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> DVector<f64> {
    generalized_contact_forces_generic(model, params, grounds, q, qdot)
}

/// Generic-scalar generalized contact force assembly.
pub fn generalized_contact_forces_generic<T: Real>(
    model: &RobotModel,
    params: &ContactParams,
    grounds: &[GroundPlane],
    q: &DVector<T>,
    qdot: &DVector<T>,
) -> DVector<T> {
    debug_assert_eq!(grounds.len(), model.n_ee);
    let nq = q.len();
    let mut f = DVector::zeros(nq);
    for (ee, ground) in grounds.iter().enumerate() {
        let p = model.ee_position_generic(q, ee);
        let jac = model.ee_jacobian_generic(q, ee);
        // Foot velocity in the world frame: J q̇.
        let mut pdot_w = Vector2::new(T::zero(), T::zero());
        for i in 0..nq {
            pdot_w.x += jac[(0, i)].clone() * qdot[i].clone();
            pdot_w.y += jac[(1, i)].clone() * qdot[i].clone();
        }
        // Penetration and velocity in the contact frame.
        let n = ground.normal;
        let height = T::constant(ground.height);
        let p_z =
            -(p.x.clone() * T::constant(n.x) + (p.y.clone() - height) * T::constant(n.y));
        let tangent = Vector2::new(n.y, -n.x);
        let pdot_c = Vector2::new(
            pdot_w.x.clone() * T::constant(tangent.x) + pdot_w.y.clone() * T::constant(tangent.y),
            pdot_w.x.clone() * T::constant(n.x) + pdot_w.y.clone() * T::constant(n.y),
        );
        let lambda_c = contact_force_generic(params, &p_z, &pdot_c);
        // Back to world, then through Jᵀ.
        let lambda_w = Vector2::new(
            lambda_c.x.clone() * T::constant(tangent.x) + lambda_c.y.clone() * T::constant(n.x),
            lambda_c.x.clone() * T::constant(tangent.y) + lambda_c.y.clone() * T::constant(n.y),
        );
        for i in 0..nq {
            f[i] += jac[(0, i)].clone() * lambda_w.x.clone()
                + jac[(1, i)].clone() * lambda_w.y.clone();
        }
    }
    f
}

/// Per-foot world-frame contact forces (diagnostics and logging).
pub fn per_foot_forces(
    model: &RobotModel,
    params: &ContactParams,
    grounds: &[GroundPlane],
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> Vec<Vector2<f64>> {
    (0..model.n_ee)
        .map(|ee| {
            let ground = &grounds[ee];
            let p = model.ee_position_generic(q, ee);
            let jac = model.ee_jacobian_generic(q, ee);
            let pdot_w_full = &jac * qdot;
            let pdot_w = Vector2::new(pdot_w_full[0], pdot_w_full[1]);
            let p_z = ground.penetration(&p);
            let pdot_c = world_force_to_contact_frame(ground, &pdot_w);
            let lam_c = contact_force_contact_frame(params, p_z, &pdot_c);
            contact_force_world_frame(ground, &lam_c)
        })
        .collect()
}

/// Fits the ground height through the stance feet (planar reduction of the
/// stance-plane fit): mean height of all stance-foot positions.
pub fn estimate_ground(
    feet: &[Vector2<f64>],
    stance: &[bool],
) -> Result<GroundPlane, ContactError> {
    let heights: Vec<f64> = feet
        .iter()
        .zip(stance)
        .filter(|(_, s)| **s)
        .map(|(p, _)| p.y)
        .collect();
    if heights.is_empty() {
        return Err(ContactError::NoStanceFeet);
    }
    Ok(GroundPlane::flat(
        heights.iter().sum::<f64>() / heights.len() as f64,
    ))
}

/// Stance detection by normal-force threshold.
pub fn stance_flags(
    model: &RobotModel,
    params: &ContactParams,
    grounds: &[GroundPlane],
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    threshold: f64,
) -> Vec<bool> {
    per_foot_forces(model, params, grounds, q, qdot)
        .iter()
        .enumerate()
        .map(|(ee, f)| world_force_to_contact_frame(&grounds[ee], f).y >= threshold)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{self, ModelParams};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::DVector;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn spring_at_surface_equals_gain() {
        let p = ContactParams {
            k: 100.0,
            ..Default::default()
        };
        let f = contact_force_contact_frame(&p, 0.0, &Vector2::zeros());
        assert_relative_eq!(f.force.y, 100.0);
        assert_eq!(f.force.x, 0.0);
    }

    #[test]
    fn spring_decays_above_ground_but_never_vanishes() {
        let p = ContactParams {
            k: 100.0,
            alpha_k: 20.0,
            ..Default::default()
        };
        let f = contact_force_contact_frame(&p, -0.5, &Vector2::zeros());
        assert_relative_eq!(f.force.y, 100.0 * (-10.0f64).exp(), epsilon = 1e-12);
        assert!(f.force.y > 0.0);
    }

    #[test]
    fn damper_half_gated_at_surface() {
        let p = ContactParams {
            k: 100.0,
            d: 50.0,
            ..Default::default()
        };
        let f = contact_force_contact_frame(&p, 0.0, &Vector2::new(1.0, 0.0));
        // sig(0) = 0.5 → tangential damping magnitude 25, opposing pdot.
        assert_relative_eq!(f.force.x, -25.0);
    }

    #[test]
    fn zero_velocity_zero_damper() {
        let p = ContactParams::default();
        for &pz in &[-0.3, 0.0, 0.02] {
            let f = contact_force_contact_frame(&p, pz, &Vector2::zeros());
            assert_eq!(f.force.x, 0.0);
            assert_relative_eq!(f.force.y, p.k * (p.alpha_k * pz).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn normal_force_strictly_increases_with_penetration() {
        let p = ContactParams::default();
        let mut last = 0.0;
        for i in 0..200 {
            let pz = -0.1 + i as f64 * 0.002;
            let f = contact_force_contact_frame(&p, pz, &Vector2::zeros());
            assert!(f.force.y > last);
            last = f.force.y;
        }
    }

    #[test]
    fn force_is_smooth_across_the_surface() {
        // Central differences of the force w.r.t. p_z and pdot match the
        // dual-number partials everywhere sampled, including p_z = 0.
        use crate::ad::{Dual, Real};
        let p = ContactParams::default();
        let h = 1e-7;
        for &pz in &[-0.05, -0.001, 0.0, 0.001, 0.05] {
            for &vy in &[-0.5, 0.0, 0.7] {
                let pdot = Vector2::new(0.3, vy);
                // ∂/∂p_z by FD.
                let fp = contact_force_contact_frame(&p, pz + h, &pdot).force;
                let fm = contact_force_contact_frame(&p, pz - h, &pdot).force;
                let fd_dpz = (fp - fm) / (2.0 * h);
                let pz_d = Dual::variable(pz, 0, 1);
                let pdot_d = Vector2::new(Dual::constant(0.3), Dual::constant(vy));
                let fd = contact_force_generic(&p, &pz_d, &pdot_d);
                assert_abs_diff_eq!(fd.x.deriv(0), fd_dpz.x, epsilon = 1e-5 * fd_dpz.x.abs().max(1.0));
                assert_abs_diff_eq!(fd.y.deriv(0), fd_dpz.y, epsilon = 1e-5 * fd_dpz.y.abs().max(1.0));
                // ∂/∂pdot_y by FD.
                let gp = contact_force_contact_frame(&p, pz, &Vector2::new(0.3, vy + h)).force;
                let gm = contact_force_contact_frame(&p, pz, &Vector2::new(0.3, vy - h)).force;
                let fd_dv = (gp - gm) / (2.0 * h);
                let vy_d = Dual::variable(vy, 0, 1);
                let fd2 = contact_force_generic(
                    &p,
                    &Dual::constant(pz),
                    &Vector2::new(Dual::constant(0.3), vy_d),
                );
                assert_abs_diff_eq!(fd2.y.deriv(0), fd_dv.y, epsilon = 1e-5 * fd_dv.y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn contact_frame_rotations() {
        // Flat ground: contact frame aligned with the world.
        let flat = GroundPlane::flat(0.0);
        let f = ContactForce {
            force: Vector2::new(3.0, 7.0),
        };
        let w = contact_force_world_frame(&flat, &f);
        assert_relative_eq!(w, Vector2::new(3.0, 7.0), epsilon = 1e-15);

        // 45° incline: rotation preserves the norm.
        let incline = GroundPlane {
            height: 0.0,
            normal: Vector2::new(-(0.5f64).sqrt(), (0.5f64).sqrt()),
        };
        let w = contact_force_world_frame(&incline, &f);
        assert_relative_eq!(w.norm(), f.force.norm(), epsilon = 1e-12);

        // Round trip on a random incline.
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..20 {
            let a: f64 = rng.random_range(-0.8..0.8);
            let g = GroundPlane {
                height: rng.random_range(-0.2..0.2),
                normal: Vector2::new(-a.sin(), a.cos()),
            };
            let v = Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let round = world_force_to_contact_frame(&g, &contact_force_world_frame(&g, &ContactForce { force: v }));
            assert_relative_eq!(round, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn feet_high_above_ground_contribute_nothing() {
        let model = model::quadruped(ModelParams::default());
        let p = ContactParams {
            alpha_k: 20.0,
            ..Default::default()
        };
        let grounds = vec![GroundPlane::flat(0.0); 2];
        let mut state = model.standing_state(0.0);
        state.base_pos.y += 1.5; // every foot ≥ 1 m above the ground
        let flat = state.to_flat();
        let q = flat.rows(0, 7).into_owned();
        let qdot = DVector::zeros(7);
        let f = generalized_contact_forces(&model, &p, &grounds, &q, &qdot);
        assert!(f.amax() < 1e-6 * p.k);
    }

    #[test]
    fn symmetric_stance_has_zero_lateral_force() {
        let model = model::quadruped(ModelParams::default());
        let p = ContactParams::default();
        let grounds = vec![GroundPlane::flat(0.0); 2];
        let mut state = model.standing_state(0.0);
        state.base_pos.y -= 0.004; // slight symmetric penetration
        let flat = state.to_flat();
        let q = flat.rows(0, 7).into_owned();
        let f = generalized_contact_forces(&model, &p, &grounds, &q, &DVector::zeros(7));
        assert_abs_diff_eq!(f[0], 0.0, epsilon = 1e-10);
        assert!(f[1] > 0.0);
    }

    #[test]
    fn assembly_matches_brute_force_oracle() {
        let model = model::quadruped(ModelParams::default());
        let p = ContactParams::default();
        let grounds = vec![GroundPlane::flat(0.02); 2];
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..100 {
            let q = DVector::from_fn(7, |i, _| match i {
                0 => rng.random_range(-1.0..1.0),
                1 => rng.random_range(0.3..0.9),
                2 => rng.random_range(-0.4..0.4),
                _ => rng.random_range(-1.0..1.0),
            });
            let qdot = DVector::from_fn(7, |_, _| rng.random_range(-2.0..2.0));
            let f = generalized_contact_forces(&model, &p, &grounds, &q, &qdot);

            // Brute force: explicit per-foot Jᵀλ with FD-checked Jacobians.
            let mut oracle = DVector::zeros(7);
            for ee in 0..2 {
                let jac_fd = crate::validation::fd_jacobian(
                    |qq| {
                        let pos = model.ee_position_generic::<f64>(qq, ee);
                        DVector::from_vec(vec![pos.x, pos.y])
                    },
                    &q,
                    crate::validation::FdSettings { step: 1e-7 },
                );
                let jac = model.ee_jacobian_generic::<f64>(&q, ee);
                assert!((jac.clone() - &jac_fd).amax() < 1e-6);
                let pos = model.ee_position_generic::<f64>(&q, ee);
                let pdot_full = &jac * &qdot;
                let pdot = Vector2::new(pdot_full[0], pdot_full[1]);
                let pz = grounds[ee].penetration(&pos);
                let pdot_c = world_force_to_contact_frame(&grounds[ee], &pdot);
                let lam_c = contact_force_contact_frame(&p, pz, &pdot_c);
                let lam_w = contact_force_world_frame(&grounds[ee], &lam_c);
                oracle += jac.transpose() * DVector::from_vec(vec![lam_w.x, lam_w.y]);
            }
            assert!(
                (f.clone() - &oracle).amax() < 1e-8 * oracle.amax().max(1.0),
                "assembly mismatch"
            );
        }
    }

    #[test]
    fn ground_estimation() {
        let feet = vec![Vector2::new(0.3, 0.0), Vector2::new(-0.3, 0.0)];
        let g = estimate_ground(&feet, &[true, true]).unwrap();
        assert_eq!(g.height, 0.0);

        let feet = vec![Vector2::new(0.3, 0.02), Vector2::new(-0.3, 0.04)];
        let g = estimate_ground(&feet, &[true, true]).unwrap();
        assert_relative_eq!(g.height, 0.03);

        let g = estimate_ground(&feet, &[false, true]).unwrap();
        assert_relative_eq!(g.height, 0.04);

        assert!(matches!(
            estimate_ground(&feet, &[false, false]),
            Err(ContactError::NoStanceFeet)
        ));
    }
}
