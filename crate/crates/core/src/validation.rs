//! Independent numerical oracles for tests and benchmarks: finite-difference
//! differentiators, a position-only kinetic-energy evaluator, a limit-cycle
//! period extractor and the integrator stability-boundary search.
//!
//! Nothing here is used on the runtime path, and none of it shares derivative
//! code with the forward-mode engine it checks.

use crate::dynamics::Dynamics;
use crate::error::ValidationError;
use crate::integrator::{self, Scheme};
use crate::model::RobotModel;
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub struct FdSettings {
    pub step: f64,
}

impl Default for FdSettings {
    fn default() -> Self {
        FdSettings { step: 1e-6 }
    }
}

/// Central-difference Jacobian of a vector function.
pub fn fd_jacobian<F>(f: F, point: &DVector<f64>, settings: FdSettings) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let h = settings.step;
    let n = point.len();
    let m = f(point).len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut plus = point.clone();
        let mut minus = point.clone();
        plus[j] += h;
        minus[j] -= h;
        let df = (f(&plus) - f(&minus)) / (2.0 * h);
        jac.set_column(j, &df);
    }
    jac
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, point: &DVector<f64>, settings: FdSettings) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let h = settings.step;
    let mut grad = DVector::zeros(point.len());
    for j in 0..point.len() {
        let mut plus = point.clone();
        let mut minus = point.clone();
        plus[j] += h;
        minus[j] -= h;
        grad[j] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    grad
}

/// Central-difference Hessian of a scalar function.
pub fn fd_hessian<F>(f: F, point: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = point.len();
    let mut hess = DMatrix::zeros(n, n);
    let f0 = f(point);
    for i in 0..n {
        for j in i..n {
            let mut pp = point.clone();
            let mut pm = point.clone();
            let mut mp = point.clone();
            let mut mm = point.clone();
            pp[i] += step;
            pp[j] += step;
            pm[i] += step;
            pm[j] -= step;
            mp[i] -= step;
            mp[j] += step;
            mm[i] -= step;
            mm[j] -= step;
            let v = if i == j {
                let mut p = point.clone();
                let mut m = point.clone();
                p[i] += step;
                m[i] -= step;
                (f(&p) - 2.0 * f0 + f(&m)) / (step * step)
            } else {
                (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * step * step)
            };
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Kinetic energy evaluated from forward kinematics only: body COM and
/// orientation velocities come from finite differences of positions along
/// the direction q̇, never from Jacobian code.
pub fn kinetic_energy_fd(model: &RobotModel, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
    let h = 1e-7;
    let q_plus = q + qdot * h;
    let q_minus = q - qdot * h;
    let mut energy = 0.0;
    for body in model.bodies() {
        let p_plus = crate::model::tree::point_position(&q_plus, &body.com);
        let p_minus = crate::model::tree::point_position(&q_minus, &body.com);
        let v = (p_plus - p_minus) / (2.0 * h);
        // Absolute orientation rate: pitch rate plus the body's joint rates.
        let mut omega = qdot[2];
        for &j in &body.angle_joints {
            omega += qdot[3 + j];
        }
        energy += 0.5 * body.mass * v.norm_squared() + 0.5 * body.inertia * omega * omega;
    }
    energy
}

/// Dominant period of a sampled signal via the first prominent peak of the
/// unbiased autocorrelation, refined by parabolic interpolation.
pub fn extract_limit_cycle_period(signal: &[f64], dt: f64) -> Result<f64, ValidationError> {
    let n = signal.len();
    if n < 8 {
        return Err(ValidationError::NoPeriodicity);
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = signal.iter().map(|s| s - mean).collect();
    let variance = centered.iter().map(|s| s * s).sum::<f64>() / n as f64;
    if variance < 1e-16 {
        return Err(ValidationError::NoPeriodicity);
    }

    let max_lag = n / 2;
    let mut auto = vec![0.0; max_lag];
    for (lag, a) in auto.iter_mut().enumerate().skip(1) {
        let overlap = n - lag;
        let mut sum = 0.0;
        for i in 0..overlap {
            sum += centered[i] * centered[i + lag];
        }
        *a = sum / (overlap as f64 * variance);
    }

    // Skip to the first dip below zero so the trivial lag-0 correlation does
    // not mask the fundamental.
    let first_neg = auto
        .iter()
        .position(|&a| a < 0.0)
        .ok_or(ValidationError::NoPeriodicity)?;
    let global_max = auto[first_neg..]
        .iter()
        .cloned()
        .fold(f64::MIN, f64::max);
    if global_max < 0.2 {
        return Err(ValidationError::NoPeriodicity);
    }
    // First local maximum comparable to the global one = the fundamental.
    let mut peak_lag = None;
    for lag in (first_neg + 1).max(2)..max_lag - 1 {
        if auto[lag] >= auto[lag - 1] && auto[lag] >= auto[lag + 1] && auto[lag] >= 0.8 * global_max
        {
            peak_lag = Some(lag);
            break;
        }
    }
    let lag = peak_lag.ok_or(ValidationError::NoPeriodicity)?;
    // Parabolic refinement around the peak.
    let (ym, y0, yp) = (auto[lag - 1], auto[lag], auto[lag + 1]);
    let denom = ym - 2.0 * y0 + yp;
    let offset = if denom.abs() > 1e-12 {
        0.5 * (ym - yp) / denom
    } else {
        0.0
    };
    Ok((lag as f64 + offset) * dt)
}

/// Largest stable step size of a scheme on the given dynamics, found by
/// bisection over a fixed 1 s rollout. "Stable" means the state norm stays
/// below 10³ × the initial norm (and finite) over the whole window.
pub fn stability_boundary<D: Dynamics + ?Sized>(
    dynamics: &D,
    scheme: Scheme,
    x0: &DVector<f64>,
    u: &DVector<f64>,
) -> f64 {
    let window = 1.0;
    let tol = 1e-4;
    let stable = |h: f64| -> bool {
        let steps = (window / h).ceil() as usize;
        let limit = 1e3 * x0.norm().max(1.0);
        let mut x = x0.clone();
        for _ in 0..steps {
            match integrator::step(dynamics, &x, u, h, scheme) {
                Ok(next) => x = next,
                Err(_) => return false,
            }
            if !x.iter().all(|v| v.is_finite()) || x.norm() > limit {
                return false;
            }
        }
        true
    };

    let mut lo = 1e-5;
    if !stable(lo) {
        return 0.0;
    }
    let mut hi = lo * 2.0;
    while stable(hi) && hi < 10.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if stable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
