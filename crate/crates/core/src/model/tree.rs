//! Planar kinematic tree evaluation, generic over the AD scalar.
//!
//! Bodies hang off a floating base (x, z, pitch). Every point of interest
//! (body center of mass, end-effector) is a sum of vectors, each rotated by
//! the pitch plus a subset of the joint angles. That closed form gives exact
//! analytic positions, Jacobians and velocity-product accelerations for any
//! tree of revolute joints, which is all the shipped models need.

use crate::ad::Real;
use nalgebra::{DMatrix, DVector, Vector2};

/// One rotated vector contributing to a point:
/// `R(pitch + Σ q_J[j] for j in joints) · vec`.
#[derive(Clone, Debug)]
pub struct RotTerm {
    pub vec: Vector2<f64>,
    pub joints: Vec<usize>,
}

impl RotTerm {
    pub fn new(x: f64, z: f64, joints: &[usize]) -> Self {
        RotTerm {
            vec: Vector2::new(x, z),
            joints: joints.to_vec(),
        }
    }
}

/// A rigid body of the tree: inertial parameters plus the closed-form
/// description of its center of mass and absolute orientation.
#[derive(Clone, Debug)]
pub struct BodySpec {
    pub mass: f64,
    pub inertia: f64,
    /// COM position = base position + Σ terms.
    pub com: Vec<RotTerm>,
    /// Absolute orientation = pitch + Σ q_J[j] for j in angle_joints.
    pub angle_joints: Vec<usize>,
}

/// A contact end-effector: a point of the tree.
#[derive(Clone, Debug)]
pub struct EndEffectorSpec {
    pub point: Vec<RotTerm>,
}

#[inline]
fn term_angle<T: Real>(q: &DVector<T>, joints: &[usize]) -> T {
    let mut a = q[2].clone();
    for &j in joints {
        a += q[3 + j].clone();
    }
    a
}

#[inline]
fn rotate<T: Real>(angle: &T, v: &Vector2<f64>) -> Vector2<T> {
    let (s, c) = (angle.sin(), angle.cos());
    Vector2::new(
        c.clone() * T::constant(v.x) - s.clone() * T::constant(v.y),
        s * T::constant(v.x) + c * T::constant(v.y),
    )
}

/// d/dα of `R(α)·v`, i.e. the rotated vector turned by +90°.
#[inline]
fn perp<T: Real>(w: &Vector2<T>) -> Vector2<T> {
    Vector2::new(-w.y.clone(), w.x.clone())
}

/// World position of a point described by `terms`.
pub fn point_position<T: Real>(q: &DVector<T>, terms: &[RotTerm]) -> Vector2<T> {
    let mut p = Vector2::new(q[0].clone(), q[1].clone());
    for t in terms {
        p += rotate(&term_angle(q, &t.joints), &t.vec);
    }
    p
}

/// Jacobian `∂p/∂q` (2 × nq) of a point described by `terms`.
pub fn point_jacobian<T: Real>(q: &DVector<T>, terms: &[RotTerm]) -> DMatrix<T> {
    let nq = q.len();
    let mut jac = DMatrix::zeros(2, nq);
    jac[(0, 0)] = T::one();
    jac[(1, 1)] = T::one();
    for t in terms {
        let w = rotate(&term_angle(q, &t.joints), &t.vec);
        let d = perp(&w);
        jac[(0, 2)] += d.x.clone();
        jac[(1, 2)] += d.y.clone();
        for &j in &t.joints {
            jac[(0, 3 + j)] += d.x.clone();
            jac[(1, 3 + j)] += d.y.clone();
        }
    }
    jac
}

/// Velocity-product (zero joint acceleration) acceleration of a point:
/// each rotated term contributes `-ω² R(α)·v` with ω the term's angle rate.
pub fn point_vp_accel<T: Real>(q: &DVector<T>, qdot: &DVector<T>, terms: &[RotTerm]) -> Vector2<T> {
    let mut a = Vector2::new(T::zero(), T::zero());
    for t in terms {
        let w = rotate(&term_angle(q, &t.joints), &t.vec);
        let omega = term_angle(qdot, &t.joints); // same index pattern as the angle
        a -= w * (omega.clone() * omega);
    }
    a
}

/// Inertia matrix `M(q) = Σ m JᵀJ + I rᵀr` in plain generalized coordinates.
pub fn mass_matrix<T: Real>(bodies: &[BodySpec], q: &DVector<T>) -> DMatrix<T> {
    let nq = q.len();
    let mut m = DMatrix::zeros(nq, nq);
    for b in bodies {
        let jac = point_jacobian(q, &b.com);
        let mass = T::constant(b.mass);
        // m * JᵀJ, exploiting the 2-row structure.
        for i in 0..nq {
            for k in i..nq {
                let v = (jac[(0, i)].clone() * jac[(0, k)].clone()
                    + jac[(1, i)].clone() * jac[(1, k)].clone())
                    * mass.clone();
                m[(i, k)] += v.clone();
                if k != i {
                    m[(k, i)] += v;
                }
            }
        }
        // I * rᵀr with r the constant angular selector row.
        let inertia = T::constant(b.inertia);
        let mut idx = vec![2usize];
        idx.extend(b.angle_joints.iter().map(|j| 3 + j));
        for &i in &idx {
            for &k in &idx {
                m[(i, k)] += inertia.clone();
            }
        }
    }
    m
}

/// Coriolis/centripetal bias vector `C(q, q̇)` (Newton–Euler with zero joint
/// accelerations; the angular selector rows are constant so bodies contribute
/// only through their COM velocity-product acceleration).
pub fn bias<T: Real>(bodies: &[BodySpec], q: &DVector<T>, qdot: &DVector<T>) -> DVector<T> {
    let nq = q.len();
    let mut c = DVector::zeros(nq);
    for b in bodies {
        let jac = point_jacobian(q, &b.com);
        let acc = point_vp_accel(q, qdot, &b.com);
        let mass = T::constant(b.mass);
        for i in 0..nq {
            c[i] += (jac[(0, i)].clone() * acc.x.clone() + jac[(1, i)].clone() * acc.y.clone())
                * mass.clone();
        }
    }
    c
}

/// Gravity vector `G(q) = ∂V/∂q` with `V = Σ m g z_com`.
pub fn gravity_vector<T: Real>(bodies: &[BodySpec], q: &DVector<T>, g: f64) -> DVector<T> {
    let nq = q.len();
    let mut grav = DVector::zeros(nq);
    for b in bodies {
        let jac = point_jacobian(q, &b.com);
        let w = T::constant(b.mass * g);
        for i in 0..nq {
            grav[i] += jac[(1, i)].clone() * w.clone();
        }
    }
    grav
}

/// Kinetic energy `½ q̇ᵀ M q̇` evaluated directly from body velocities.
pub fn kinetic_energy<T: Real>(bodies: &[BodySpec], q: &DVector<T>, qdot: &DVector<T>) -> T {
    let half = T::constant(0.5);
    let mut e = T::zero();
    for b in bodies {
        let jac = point_jacobian(q, &b.com);
        let mut vx = T::zero();
        let mut vy = T::zero();
        for i in 0..q.len() {
            vx += jac[(0, i)].clone() * qdot[i].clone();
            vy += jac[(1, i)].clone() * qdot[i].clone();
        }
        let mut omega = qdot[2].clone();
        for &j in &b.angle_joints {
            omega += qdot[3 + j].clone();
        }
        e += half.clone()
            * (T::constant(b.mass) * (vx.clone() * vx + vy.clone() * vy)
                + T::constant(b.inertia) * omega.clone() * omega);
    }
    e
}

/// Potential energy `Σ m g z_com`.
pub fn potential_energy<T: Real>(bodies: &[BodySpec], q: &DVector<T>, g: f64) -> T {
    let mut e = T::zero();
    for b in bodies {
        let p = point_position(q, &b.com);
        e += T::constant(b.mass * g) * p.y.clone();
    }
    e
}
