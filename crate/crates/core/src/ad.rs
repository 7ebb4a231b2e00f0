//! Forward-mode automatic differentiation used as the derivative engine
//! for the dynamics linearization.
//!
//! A [`Dual`] carries a value and a vector of partial derivatives, one per
//! seeded direction, so a single evaluation of a generic function produces a
//! full Jacobian row block. Model, contact and dynamics code is written once,
//! generic over [`Real`], and monomorphizes to a plain `f64` fast path and to
//! the dual path.

use nalgebra::{DMatrix, DVector};
use smallvec::SmallVec;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

/// Number of derivative directions stored inline. 18 covers the planar
/// quadruped (nq + nv + nu = 7 + 7 + 4).
const INLINE_DIRS: usize = 18;

/// Scalar abstraction over `f64` and [`Dual`].
pub trait Real:
    nalgebra::Scalar
    + num_traits::Zero
    + num_traits::One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    /// Value part (drops derivative information).
    fn value(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn sqrt(&self) -> Self;

    /// Logistic sigmoid 1/(1 + e^(-s)), written in a form that does not
    /// overflow for large |s|.
    fn sigmoid(&self) -> Self {
        let one = Self::one();
        if self.value() >= 0.0 {
            one.clone() / (one + (-self.clone()).exp())
        } else {
            let e = self.exp();
            e.clone() / (Self::one() + e)
        }
    }
}

impl Real for f64 {
    #[inline]
    fn constant(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    #[inline]
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    #[inline]
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    #[inline]
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
}

/// Forward-mode dual number with a variable number of derivative directions.
///
/// Constants carry an empty derivative vector; arithmetic broadcasts, so
/// mixing constants and seeded variables is cheap.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: SmallVec<[f64; INLINE_DIRS]>,
}

impl Dual {
    pub fn constant(re: f64) -> Self {
        Dual {
            re,
            eps: SmallVec::new(),
        }
    }

    /// A variable seeded with derivative 1 in direction `dir` out of `ndirs`.
    pub fn variable(re: f64, dir: usize, ndirs: usize) -> Self {
        let mut eps = SmallVec::from_elem(0.0, ndirs);
        eps[dir] = 1.0;
        Dual { re, eps }
    }

    /// Partial derivative in direction `dir` (0 for constants).
    pub fn deriv(&self, dir: usize) -> f64 {
        self.eps.get(dir).copied().unwrap_or(0.0)
    }

    fn zip(a: &Dual, b: &Dual, fa: f64, fb: f64) -> SmallVec<[f64; INLINE_DIRS]> {
        let n = a.eps.len().max(b.eps.len());
        let mut eps = SmallVec::with_capacity(n);
        for i in 0..n {
            let da = a.eps.get(i).copied().unwrap_or(0.0);
            let db = b.eps.get(i).copied().unwrap_or(0.0);
            eps.push(fa * da + fb * db);
        }
        eps
    }

    fn scale(&self, f: f64) -> SmallVec<[f64; INLINE_DIRS]> {
        self.eps.iter().map(|d| f * d).collect()
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual {
            re: self.re + rhs.re,
            eps: Dual::zip(&self, &rhs, 1.0, 1.0),
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual {
            re: self.re - rhs.re,
            eps: Dual::zip(&self, &rhs, 1.0, -1.0),
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual {
            re: self.re * rhs.re,
            eps: Dual::zip(&self, &rhs, rhs.re, self.re),
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        // d(a/b) = da/b - (a/b) db/b. The value part is computed as a plain
        // division so the dual path reproduces the f64 path bit for bit.
        let re = self.re / rhs.re;
        let inv = 1.0 / rhs.re;
        Dual {
            re,
            eps: Dual::zip(&self, &rhs, inv, -re * inv),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            re: -self.re,
            eps: self.scale(-1.0),
        }
    }
}

impl AddAssign for Dual {
    fn add_assign(&mut self, rhs: Dual) {
        *self = self.clone() + rhs;
    }
}
impl SubAssign for Dual {
    fn sub_assign(&mut self, rhs: Dual) {
        *self = self.clone() - rhs;
    }
}
impl MulAssign for Dual {
    fn mul_assign(&mut self, rhs: Dual) {
        *self = self.clone() * rhs;
    }
}
impl DivAssign for Dual {
    fn div_assign(&mut self, rhs: Dual) {
        *self = self.clone() / rhs;
    }
}

impl num_traits::Zero for Dual {
    fn zero() -> Self {
        Dual::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.eps.iter().all(|d| *d == 0.0)
    }
}

impl num_traits::One for Dual {
    fn one() -> Self {
        Dual::constant(1.0)
    }
}

impl Real for Dual {
    fn constant(c: f64) -> Self {
        Dual::constant(c)
    }
    fn value(&self) -> f64 {
        self.re
    }
    fn sin(&self) -> Self {
        Dual {
            re: self.re.sin(),
            eps: self.scale(self.re.cos()),
        }
    }
    fn cos(&self) -> Self {
        Dual {
            re: self.re.cos(),
            eps: self.scale(-self.re.sin()),
        }
    }
    fn exp(&self) -> Self {
        let e = self.re.exp();
        Dual {
            re: e,
            eps: self.scale(e),
        }
    }
    fn sqrt(&self) -> Self {
        let s = self.re.sqrt();
        Dual {
            re: s,
            eps: self.scale(0.5 / s),
        }
    }
}

/// Seeds `values` as variables occupying directions `offset..offset+len`
/// within a derivative space of `ndirs` directions.
pub fn seed_slice(values: &[f64], offset: usize, ndirs: usize) -> DVector<Dual> {
    DVector::from_iterator(
        values.len(),
        values
            .iter()
            .enumerate()
            .map(|(i, v)| Dual::variable(*v, offset + i, ndirs)),
    )
}

/// Lifts plain values into constants.
pub fn lift(values: &[f64]) -> DVector<Dual> {
    DVector::from_iterator(values.len(), values.iter().map(|v| Dual::constant(*v)))
}

/// Extracts the Jacobian block `∂out/∂(directions dirs.start..dirs.end)`.
pub fn jacobian_block(out: &DVector<Dual>, dirs: std::ops::Range<usize>) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(out.len(), dirs.len());
    for (row, o) in out.iter().enumerate() {
        for (col, dir) in dirs.clone().enumerate() {
            jac[(row, col)] = o.deriv(dir);
        }
    }
    jac
}

/// Value part of a dual vector.
pub fn values(out: &DVector<Dual>) -> DVector<f64> {
    out.map(|d| d.re)
}

/// Solves `a x = b` for symmetric positive definite `a` by an in-place
/// Cholesky factorization, generic over the scalar.
///
/// Returns `None` when a pivot is non-positive, i.e. the matrix is not SPD.
pub fn cholesky_solve<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> Option<DVector<T>> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.len(), n);
    let mut l = a.clone();
    // In-place lower Cholesky.
    for j in 0..n {
        for k in 0..j {
            let ljk = l[(j, k)].clone();
            for i in j..n {
                let v = l[(i, k)].clone() * ljk.clone();
                l[(i, j)] -= v;
            }
        }
        if l[(j, j)].value() <= 0.0 {
            return None;
        }
        let d = l[(j, j)].sqrt();
        l[(j, j)] = d.clone();
        for i in (j + 1)..n {
            l[(i, j)] /= d.clone();
        }
    }
    // Forward substitution L y = b.
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            let v = l[(i, k)].clone() * y[k].clone();
            y[i] -= v;
        }
        y[i] /= l[(i, i)].clone();
    }
    // Back substitution L^T x = y.
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = l[(k, i)].clone() * y[k].clone();
            y[i] -= v;
        }
        y[i] /= l[(i, i)].clone();
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn product_rule() {
        let ndirs = 2;
        let x = Dual::variable(3.0, 0, ndirs);
        let y = Dual::variable(4.0, 1, ndirs);
        let f = x.clone() * y.clone() + x.clone() * x;
        assert_relative_eq!(f.re, 21.0);
        assert_relative_eq!(f.deriv(0), 4.0 + 6.0); // y + 2x
        assert_relative_eq!(f.deriv(1), 3.0); // x
    }

    #[test]
    fn quotient_and_transcendentals() {
        let x = Dual::variable(0.7, 0, 1);
        let f = x.sin() / x.exp();
        // d/dx sin(x) e^{-x} = (cos x - sin x) e^{-x}
        let expect = (0.7f64.cos() - 0.7f64.sin()) * (-0.7f64).exp();
        assert_relative_eq!(f.deriv(0), expect, epsilon = 1e-14);
    }

    #[test]
    fn sigmoid_matches_fd() {
        for &v in &[-3.0, -0.1, 0.0, 0.4, 5.0] {
            let x = Dual::variable(v, 0, 1);
            let s = x.sigmoid();
            let h = 1e-7;
            let fd = (f64::sigmoid(&(v + h)) - f64::sigmoid(&(v - h))) / (2.0 * h);
            assert_relative_eq!(s.deriv(0), fd, epsilon = 1e-7);
            assert_relative_eq!(s.re, f64::sigmoid(&v), epsilon = 1e-15);
        }
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        assert_relative_eq!(f64::sigmoid(&800.0), 1.0);
        assert_relative_eq!(f64::sigmoid(&-800.0), 0.0);
        let d = Dual::variable(-800.0, 0, 1).sigmoid();
        assert!(d.re.is_finite() && d.deriv(0).is_finite());
    }

    #[test]
    fn constants_broadcast() {
        let x = Dual::variable(2.0, 3, 5);
        let c = Dual::constant(10.0);
        let f = c * x;
        assert_relative_eq!(f.re, 20.0);
        assert_relative_eq!(f.deriv(3), 10.0);
        assert_eq!(f.deriv(0), 0.0);
    }

    #[test]
    fn generic_cholesky_agrees_with_nalgebra() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.3]);
        let x = cholesky_solve(&a, &b).unwrap();
        let x_ref = a.clone().cholesky().unwrap().solve(&b);
        assert_relative_eq!(x, x_ref, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(cholesky_solve(&a, &b).is_none());
    }

    #[test]
    fn dual_cholesky_differentiates_the_solve() {
        // a(t) x = b with a = [[2+t, 0], [0, 1]], b = [1, 1]:
        // x0 = 1/(2+t), dx0/dt = -1/(2+t)^2.
        let t = Dual::variable(0.5, 0, 1);
        let a = DMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => Dual::constant(2.0) + t.clone(),
            (1, 1) => Dual::constant(1.0),
            _ => Dual::constant(0.0),
        });
        let b = DVector::from_vec(vec![Dual::constant(1.0), Dual::constant(1.0)]);
        let x = cholesky_solve(&a, &b).unwrap();
        assert_relative_eq!(x[0].re, 1.0 / 2.5, epsilon = 1e-14);
        assert_relative_eq!(x[0].deriv(0), -1.0 / (2.5 * 2.5), epsilon = 1e-14);
    }
}
