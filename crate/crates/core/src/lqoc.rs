//! Stage-wise linear-quadratic optimal control problem and its solvers.
//!
//! The production path is a Riccati backward sweep with linear complexity in
//! the horizon, producing feedforward increments and feedback gains. A dense
//! KKT solve of the stacked equality-constrained QP ships alongside as an
//! independent oracle for tests; it produces no gains and scales cubically,
//! which is exactly why the Riccati recursion exists.
//!
//! The problem is posed in increment variables (δx, δu) around the nominal
//! trajectory; dynamics-violation defects enter as affine terms c_n.

use crate::cost::StageQuadratization;
use crate::error::LqocError;
use crate::integrator::StageSensitivity;
use nalgebra::{DMatrix, DVector};

/// LQ subproblem: per-stage affine dynamics (with defects) and quadratic
/// cost expansions, plus the initial state increment.
#[derive(Clone, Debug)]
pub struct LqocProblem {
    pub dynamics: Vec<StageSensitivity>,
    pub stage_costs: Vec<StageQuadratization>,
    pub final_cost: StageQuadratization,
    pub dx0: DVector<f64>,
}

impl LqocProblem {
    pub fn horizon(&self) -> usize {
        self.dynamics.len()
    }

    pub fn nx(&self) -> usize {
        self.dx0.len()
    }

    pub fn nu(&self) -> usize {
        self.dynamics[0].b.ncols()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RiccatiSettings {
    /// Additive regularization on the control-space Hessian H_uu.
    pub regularization: f64,
    /// Escalate the regularization ×10 on factorization failure instead of
    /// erroring out.
    pub adaptive: bool,
    pub max_escalations: u32,
}

impl Default for RiccatiSettings {
    fn default() -> Self {
        RiccatiSettings {
            regularization: 1e-9,
            adaptive: true,
            max_escalations: 12,
        }
    }
}

/// Solution of the LQ subproblem: feedforward increments, feedback gains and
/// the predicted state increments, plus the value-function quadratics as
/// diagnostics.
#[derive(Clone, Debug)]
pub struct LqocSolution {
    pub du_ff: Vec<DVector<f64>>,
    pub gains: Vec<DMatrix<f64>>,
    pub dx: Vec<DVector<f64>>,
    pub value_hessians: Vec<DMatrix<f64>>,
    pub value_gradients: Vec<DVector<f64>>,
}

/// Backward value-function recursion from stage N to 0, then a forward pass
/// through the affine dynamics. Exact minimizer of the LQ objective when the
/// regularization is zero.
pub fn solve_riccati(
    problem: &LqocProblem,
    settings: &RiccatiSettings,
) -> Result<LqocSolution, LqocError> {
    let n_stages = problem.horizon();
    let (nx, nu) = (problem.nx(), problem.nu());
    check_dimensions(problem)?;

    let mut s_mat = vec![DMatrix::zeros(nx, nx); n_stages + 1];
    let mut s_vec = vec![DVector::zeros(nx); n_stages + 1];
    s_mat[n_stages] = problem.final_cost.hess_x.clone() * 0.5;
    s_vec[n_stages] = problem.final_cost.grad_x.clone();

    let mut du_ff = vec![DVector::zeros(nu); n_stages];
    let mut gains = vec![DMatrix::zeros(nu, nx); n_stages];

    // The value function is ½δxᵀ(2S)δx + sᵀδx; we store S as the ½-scaled
    // Hessian so stage Hessians (which are plain second derivatives) get the
    // same ½ factor on entry.
    for n in (0..n_stages).rev() {
        let stage = &problem.stage_costs[n];
        let dynamicsn = &problem.dynamics[n];
        let (a, b, c) = (&dynamicsn.a, &dynamicsn.b, &dynamicsn.c);
        let s_next = &s_mat[n + 1];
        let sv_next = &s_vec[n + 1];

        let sbar = sv_next + (s_next * c) * 2.0;
        let h_xx = stage.hess_x.clone() * 0.5 + a.transpose() * s_next * a;
        let h_uu = stage.hess_u.clone() * 0.5 + b.transpose() * s_next * b;
        let h_ux = stage.cross.clone() * 0.5 + b.transpose() * s_next * a;
        let g_x = &stage.grad_x + a.transpose() * &sbar;
        let g_u = &stage.grad_u + b.transpose() * &sbar;

        // Factorize H_uu (+ reg·I), escalating the regularization if allowed.
        let mut reg = settings.regularization;
        let chol = loop {
            let mut h = h_uu.clone() * 2.0;
            for i in 0..nu {
                h[(i, i)] += reg;
            }
            match h.cholesky() {
                Some(c) => break c,
                None if settings.adaptive && reg < f64::INFINITY => {
                    reg = (reg * 10.0).max(1e-12);
                    if reg > 1e12 {
                        return Err(LqocError::NotPositiveDefinite { stage: n });
                    }
                }
                None => return Err(LqocError::NotPositiveDefinite { stage: n }),
            }
        };

        let k = -chol.solve(&(h_ux.clone() * 2.0));
        let du = -chol.solve(&g_u);
        // Value update with the general symmetric form (consistent under
        // regularization): S_n = H_xx + Kᵀ(H_uu_reg)K + KᵀH_ux + H_uxᵀK.
        let h_uu_reg = {
            let mut h = h_uu.clone();
            for i in 0..nu {
                h[(i, i)] += reg * 0.5;
            }
            h
        };
        let mut s_n =
            h_xx + k.transpose() * &h_uu_reg * &k + k.transpose() * &h_ux + h_ux.transpose() * &k;
        // Symmetrize against roundoff drift.
        s_n = (&s_n + s_n.transpose()) * 0.5;
        let s_v = g_x
            + k.transpose() * (&h_uu_reg * &du) * 2.0
            + k.transpose() * &g_u
            + h_ux.transpose() * &du * 2.0;

        s_mat[n] = s_n;
        s_vec[n] = s_v;
        gains[n] = k;
        du_ff[n] = du;
    }

    // Forward pass through the affine dynamics.
    let mut dx = vec![DVector::zeros(nx); n_stages + 1];
    dx[0] = problem.dx0.clone();
    for n in 0..n_stages {
        let du = &du_ff[n] + &gains[n] * &dx[n];
        dx[n + 1] = &problem.dynamics[n].a * &dx[n] + &problem.dynamics[n].b * du
            + &problem.dynamics[n].c;
    }

    Ok(LqocSolution {
        du_ff,
        gains,
        dx,
        value_hessians: s_mat,
        value_gradients: s_vec,
    })
}

/// Independent test oracle: stacks the whole LQ problem as an equality-
/// constrained QP over `z = [δx_0..δx_N, δu_0..δu_{N-1}]` and solves the
/// KKT system with a dense factorization. No feedback gains are produced.
pub fn solve_dense_oracle(problem: &LqocProblem) -> Result<LqocSolution, LqocError> {
    let n_stages = problem.horizon();
    let (nx, nu) = (problem.nx(), problem.nu());
    check_dimensions(problem)?;

    let n_z = (n_stages + 1) * nx + n_stages * nu;
    let n_c = (n_stages + 1) * nx;
    let x_off = |n: usize| n * nx;
    let u_off = |n: usize| (n_stages + 1) * nx + n * nu;

    let mut h = DMatrix::<f64>::zeros(n_z, n_z);
    let mut g = DVector::<f64>::zeros(n_z);
    for n in 0..n_stages {
        let stage = &problem.stage_costs[n];
        h.view_mut((x_off(n), x_off(n)), (nx, nx))
            .copy_from(&stage.hess_x);
        h.view_mut((u_off(n), u_off(n)), (nu, nu))
            .copy_from(&stage.hess_u);
        h.view_mut((u_off(n), x_off(n)), (nu, nx))
            .copy_from(&stage.cross);
        h.view_mut((x_off(n), u_off(n)), (nx, nu))
            .copy_from(&stage.cross.transpose());
        g.rows_mut(x_off(n), nx).copy_from(&stage.grad_x);
        g.rows_mut(u_off(n), nu).copy_from(&stage.grad_u);
    }
    h.view_mut((x_off(n_stages), x_off(n_stages)), (nx, nx))
        .copy_from(&problem.final_cost.hess_x);
    g.rows_mut(x_off(n_stages), nx)
        .copy_from(&problem.final_cost.grad_x);

    // Constraints: δx_0 = dx0; δx_{n+1} − A_n δx_n − B_n δu_n = c_n.
    let mut cons = DMatrix::<f64>::zeros(n_c, n_z);
    let mut rhs = DVector::<f64>::zeros(n_c);
    for i in 0..nx {
        cons[(i, i)] = 1.0;
    }
    rhs.rows_mut(0, nx).copy_from(&problem.dx0);
    for n in 0..n_stages {
        let row = (n + 1) * nx;
        for i in 0..nx {
            cons[(row + i, x_off(n + 1) + i)] = 1.0;
        }
        cons.view_mut((row, x_off(n)), (nx, nx))
            .copy_from(&(-&problem.dynamics[n].a));
        cons.view_mut((row, u_off(n)), (nx, nu))
            .copy_from(&(-&problem.dynamics[n].b));
        rhs.rows_mut(row, nx).copy_from(&problem.dynamics[n].c);
    }

    // KKT system: [H Cᵀ; C 0] [z; ν] = [−g; rhs]. The QP objective is
    // gᵀz + ½zᵀHz with H the plain (un-halved) Hessians.
    let dim = n_z + n_c;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    kkt.view_mut((0, 0), (n_z, n_z)).copy_from(&h);
    kkt.view_mut((0, n_z), (n_z, n_c))
        .copy_from(&cons.transpose());
    kkt.view_mut((n_z, 0), (n_c, n_z)).copy_from(&cons);
    let mut full_rhs = DVector::<f64>::zeros(dim);
    full_rhs.rows_mut(0, n_z).copy_from(&(-&g));
    full_rhs.rows_mut(n_z, n_c).copy_from(&rhs);

    let solution = kkt.lu().solve(&full_rhs).ok_or(LqocError::SingularKkt)?;

    let dx = (0..=n_stages)
        .map(|n| solution.rows(x_off(n), nx).into_owned())
        .collect();
    let du_ff = (0..n_stages)
        .map(|n| solution.rows(u_off(n), nu).into_owned())
        .collect();
    Ok(LqocSolution {
        du_ff,
        gains: Vec::new(),
        dx,
        value_hessians: Vec::new(),
        value_gradients: Vec::new(),
    })
}

fn check_dimensions(problem: &LqocProblem) -> Result<(), LqocError> {
    let n_stages = problem.horizon();
    if n_stages == 0 {
        return Err(LqocError::DimensionMismatch("empty horizon".into()));
    }
    if problem.stage_costs.len() != n_stages {
        return Err(LqocError::DimensionMismatch(format!(
            "{} dynamics stages but {} cost stages",
            n_stages,
            problem.stage_costs.len()
        )));
    }
    let (nx, nu) = (problem.nx(), problem.nu());
    for (n, d) in problem.dynamics.iter().enumerate() {
        if d.a.nrows() != nx || d.a.ncols() != nx || d.b.nrows() != nx || d.b.ncols() != nu {
            return Err(LqocError::DimensionMismatch(format!(
                "stage {n} sensitivity dimensions inconsistent"
            )));
        }
    }
    Ok(())
}
