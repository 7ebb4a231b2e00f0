//! Gauss-Newton nonlinear optimal control: iLQR (single shooting with line
//! search) and GNMS (multiple shooting with defect handling). Both build the
//! same LQ subproblem from exact stage sensitivities and quadratized costs
//! and solve it with the Riccati sweep; they differ in how the nonlinear
//! trajectories are updated.

use crate::cost::CostFunction;
use crate::dynamics::Dynamics;
use crate::error::NlocError;
use crate::integrator::{self, IntegratorSettings};
use crate::lqoc::{self, LqocProblem, RiccatiSettings};
use crate::policy::Policy;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ilqr,
    Gnms,
}

#[derive(Clone, Debug)]
pub struct NlocSettings {
    pub algorithm: Algorithm,
    /// Number of control stages in the horizon.
    pub n_stages: usize,
    /// Control discretization, s.
    pub control_dt: f64,
    pub integrator: IntegratorSettings,
    pub riccati: RiccatiSettings,
    pub max_line_search_steps: u32,
    /// Backtracking factor γ ∈ (0, 1).
    pub backtracking: f64,
    /// GNMS takes full steps by default; enabling this adds a backtracking
    /// search on a cost-plus-defect merit.
    pub gnms_line_search: bool,
    pub cost_tol: f64,
    pub ff_tol: f64,
    pub defect_tol: f64,
    pub max_iterations: usize,
    /// Worker threads for per-stage rollouts/sensitivities (0 = all cores).
    pub workers: usize,
}

impl Default for NlocSettings {
    fn default() -> Self {
        NlocSettings {
            algorithm: Algorithm::Ilqr,
            n_stages: 125,
            control_dt: 0.004,
            integrator: IntegratorSettings::default(),
            riccati: RiccatiSettings::default(),
            max_line_search_steps: 10,
            backtracking: 0.5,
            gnms_line_search: false,
            cost_tol: 1e-6,
            ff_tol: 1e-6,
            defect_tol: 1e-6,
            max_iterations: 100,
            workers: 0,
        }
    }
}

/// One solver iterate: nominal trajectories, the policy of Eq-(8) form, and
/// scalar diagnostics.
#[derive(Clone, Debug)]
pub struct NlocIterate {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub policy: Policy,
    pub cost: f64,
    /// Max-norm of the multiple-shooting defects of (states, controls);
    /// zero by construction for iLQR iterates.
    pub defect_norm: f64,
    pub iteration: usize,
}

/// Diagnostics of one iteration.
#[derive(Clone, Copy, Debug)]
pub struct IterationStats {
    pub cost_before: f64,
    pub cost_after: f64,
    /// Accepted line-search step size (1.0 for full steps).
    pub alpha: f64,
    /// False when the line search rejected every step size.
    pub accepted: bool,
    pub converged: bool,
    pub du_ff_norm: f64,
    pub defect_norm: f64,
}

pub struct IterationResult {
    pub iterate: NlocIterate,
    pub stats: IterationStats,
}

/// Pure diagnostics between two iterates.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceMetrics {
    pub cost_delta: f64,
    pub feedforward_norm: f64,
    pub defect_norm: f64,
}

pub fn convergence_metrics(prev: &NlocIterate, current: &NlocIterate) -> ConvergenceMetrics {
    let feedforward_norm = prev
        .controls
        .iter()
        .zip(&current.controls)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    ConvergenceMetrics {
        cost_delta: current.cost - prev.cost,
        feedforward_norm,
        defect_norm: current.defect_norm,
    }
}

fn max_abs(vectors: &[DVector<f64>]) -> f64 {
    vectors.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

/// The Gauss-Newton NLOC solver. Owns a worker pool for the embarrassingly
/// parallel per-stage work; the Riccati sweep and the iLQR nominal rollout
/// stay sequential.
pub struct NlocSolver<D: Dynamics> {
    pub dynamics: D,
    pub cost: CostFunction,
    pub settings: NlocSettings,
    pool: rayon::ThreadPool,
}

impl<D: Dynamics> NlocSolver<D> {
    pub fn new(dynamics: D, cost: CostFunction, settings: NlocSettings) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(settings.workers)
            .build()
            .expect("worker pool");
        NlocSolver {
            dynamics,
            cost,
            settings,
            pool,
        }
    }

    /// Cold-start iterate: constant node states at `x0`, zero controls,
    /// zero-gain policy.
    pub fn cold_start(&self, x0: &DVector<f64>) -> NlocIterate {
        let n = self.settings.n_stages;
        let states = vec![x0.clone(); n + 1];
        let controls = vec![DVector::zeros(self.dynamics.nu()); n];
        let policy = Policy::feedforward(controls.clone(), states.clone());
        NlocIterate {
            states,
            controls,
            policy,
            cost: f64::INFINITY,
            defect_norm: f64::INFINITY,
            iteration: 0,
        }
    }

    /// Builds the LQ subproblem around nominal trajectories: exact stage
    /// sensitivities plus quadratized costs (scaled by the control period),
    /// computed concurrently per stage. Returns the subproblem and the
    /// per-interval integration endpoints.
    #[allow(clippy::type_complexity)]
    fn build_lqoc(
        &self,
        states: &[DVector<f64>],
        controls: &[DVector<f64>],
        t0: f64,
        dx0: DVector<f64>,
        with_defects: bool,
    ) -> Result<(LqocProblem, Vec<DVector<f64>>, f64), NlocError> {
        let dt = self.settings.control_dt;
        let per_stage: Result<Vec<_>, NlocError> = self.pool.install(|| {
            (0..controls.len())
                .into_par_iter()
                .map(|n| {
                    let (sens, x_end) = integrator::stage_sensitivity(
                        &self.dynamics,
                        &states[n],
                        &controls[n],
                        dt,
                        &self.settings.integrator,
                    )?;
                    let quad = self
                        .cost
                        .quadratize(&states[n], &controls[n], t0 + n as f64 * dt)
                        .scaled(dt);
                    Ok((sens, x_end, quad))
                })
                .collect()
        });
        let per_stage = per_stage?;

        let mut dynamics = Vec::with_capacity(per_stage.len());
        let mut endpoints = Vec::with_capacity(per_stage.len());
        let mut stage_costs = Vec::with_capacity(per_stage.len());
        let mut defect_norm: f64 = 0.0;
        for (n, (mut sens, x_end, quad)) in per_stage.into_iter().enumerate() {
            if with_defects {
                sens.c = &x_end - &states[n + 1];
                defect_norm = defect_norm.max(sens.c.amax());
            }
            dynamics.push(sens);
            endpoints.push(x_end);
            stage_costs.push(quad);
        }

        let final_cost = self.cost.quadratize_final(states.last().unwrap());
        Ok((
            LqocProblem {
                dynamics,
                stage_costs,
                final_cost,
                dx0,
            },
            endpoints,
            defect_norm,
        ))
    }

    /// Max-norm of the multiple-shooting defects of (states, controls),
    /// integrating every interval concurrently.
    pub fn measure_defects(
        &self,
        states: &[DVector<f64>],
        controls: &[DVector<f64>],
    ) -> Result<f64, NlocError> {
        let dt = self.settings.control_dt;
        let defects: Result<Vec<f64>, NlocError> = self.pool.install(|| {
            (0..controls.len())
                .into_par_iter()
                .map(|n| {
                    let x_end = integrator::step_control_period(
                        &self.dynamics,
                        &states[n],
                        &controls[n],
                        dt,
                        &self.settings.integrator,
                    )?;
                    Ok((x_end - &states[n + 1]).amax())
                })
                .collect()
        });
        Ok(defects?.into_iter().fold(0.0, f64::max))
    }

    /// One iLQR iteration: policy rollout from `x0`, LQ subproblem, Riccati
    /// solve, backtracking line search over the feedforward increment, and a
    /// re-rollout that becomes the new reference trajectory.
    pub fn ilqr_iteration(
        &self,
        iterate: &NlocIterate,
        x0: &DVector<f64>,
        t0: f64,
    ) -> Result<IterationResult, NlocError> {
        let settings = &self.settings;
        let dt = settings.control_dt;

        // Nominal rollout with the current policy (single continuous
        // forward simulation; inherently sequential).
        let nominal = integrator::rollout(
            &self.dynamics,
            x0,
            &iterate.policy.u_ff,
            dt,
            &settings.integrator,
            Some(&iterate.policy),
        )?;
        let cost_before = self
            .cost
            .evaluate(&nominal.states, &nominal.controls, dt, t0)
            .expect("rollout dimensions");

        let (problem, _, _) = self.build_lqoc(
            &nominal.states,
            &nominal.controls,
            t0,
            DVector::zeros(self.dynamics.nx()),
            false,
        )?;
        let solution = lqoc::solve_riccati(&problem, &settings.riccati)?;
        let du_ff_norm = max_abs(&solution.du_ff);

        let candidate = Policy {
            u_ff: solution.du_ff.clone(),
            gains: solution.gains.clone(),
            x_ref: nominal.states.clone(),
        };

        if du_ff_norm < settings.ff_tol {
            // Zero increment: already stationary, not a failure.
            let policy = Policy {
                u_ff: nominal.controls.clone(),
                gains: candidate.gains.clone(),
                x_ref: nominal.states.clone(),
            };
            let iterate_out = NlocIterate {
                states: nominal.states,
                controls: nominal.controls,
                policy,
                cost: cost_before,
                defect_norm: 0.0,
                iteration: iterate.iteration + 1,
            };
            return Ok(IterationResult {
                iterate: iterate_out,
                stats: IterationStats {
                    cost_before,
                    cost_after: cost_before,
                    alpha: 0.0,
                    accepted: true,
                    converged: true,
                    du_ff_norm,
                    defect_norm: 0.0,
                },
            });
        }

        match self.line_search(&nominal, &candidate, cost_before, x0, t0) {
            Ok((alpha, accepted_rollout, cost_after)) => {
                let policy = Policy {
                    u_ff: accepted_rollout.controls.clone(),
                    gains: solution.gains,
                    x_ref: accepted_rollout.states.clone(),
                };
                let converged = (cost_before - cost_after).abs()
                    < settings.cost_tol * (1.0 + cost_after.abs())
                    && du_ff_norm < settings.ff_tol;
                Ok(IterationResult {
                    iterate: NlocIterate {
                        states: accepted_rollout.states,
                        controls: accepted_rollout.controls,
                        policy,
                        cost: cost_after,
                        defect_norm: 0.0,
                        iteration: iterate.iteration + 1,
                    },
                    stats: IterationStats {
                        cost_before,
                        cost_after,
                        alpha,
                        accepted: true,
                        converged,
                        du_ff_norm,
                        defect_norm: 0.0,
                    },
                })
            }
            Err(NlocError::LineSearchFailed) => {
                // Step rejected at minimum step size: keep the nominal
                // trajectories, flag the rejection.
                let policy = Policy {
                    u_ff: nominal.controls.clone(),
                    gains: solution.gains,
                    x_ref: nominal.states.clone(),
                };
                Ok(IterationResult {
                    iterate: NlocIterate {
                        states: nominal.states,
                        controls: nominal.controls,
                        policy,
                        cost: cost_before,
                        defect_norm: 0.0,
                        iteration: iterate.iteration + 1,
                    },
                    stats: IterationStats {
                        cost_before,
                        cost_after: cost_before,
                        alpha: 0.0,
                        accepted: false,
                        converged: false,
                        du_ff_norm,
                        defect_norm: 0.0,
                    },
                })
            }
            Err(e) => Err(e),
        }
    }

    /// Backtracking line search over the feedforward increment: the first
    /// α ∈ {1, γ, γ², …} whose rollout cost decreases is accepted, and that
    /// rollout becomes the new reference trajectory. Feedback is applied at
    /// full gain during the search rollouts.
    pub fn line_search(
        &self,
        nominal: &integrator::Rollout,
        candidate: &Policy,
        cost_before: f64,
        x0: &DVector<f64>,
        t0: f64,
    ) -> Result<(f64, integrator::Rollout, f64), NlocError> {
        let settings = &self.settings;
        let dt = settings.control_dt;
        let mut alpha = 1.0;
        for _ in 0..settings.max_line_search_steps {
            let controls: Vec<DVector<f64>> = nominal
                .controls
                .iter()
                .zip(&candidate.u_ff)
                .map(|(u, du)| u + du * alpha)
                .collect();
            let trial = integrator::rollout(
                &self.dynamics,
                x0,
                &controls,
                dt,
                &settings.integrator,
                Some(candidate),
            );
            if let Ok(trial) = trial {
                let cost = self
                    .cost
                    .evaluate(&trial.states, &trial.controls, dt, t0)
                    .expect("rollout dimensions");
                if cost < cost_before {
                    return Ok((alpha, trial, cost));
                }
            }
            alpha *= settings.backtracking;
        }
        Err(NlocError::LineSearchFailed)
    }

    /// One GNMS iteration: per-interval forward integration from each node
    /// (concurrent), defects entering the LQOC as affine terms, Riccati
    /// solve, and a full-step update of both node states and controls.
    pub fn gnms_iteration(
        &self,
        iterate: &NlocIterate,
        x0: &DVector<f64>,
        t0: f64,
    ) -> Result<IterationResult, NlocError> {
        let settings = &self.settings;
        let dt = settings.control_dt;
        let dx0 = x0 - &iterate.states[0];

        let (problem, _, defect_before) =
            self.build_lqoc(&iterate.states, &iterate.controls, t0, dx0, true)?;
        let cost_before = self
            .cost
            .evaluate(&iterate.states, &iterate.controls, dt, t0)
            .expect("node dimensions");
        let solution = lqoc::solve_riccati(&problem, &settings.riccati)?;
        let du_ff_norm = max_abs(&solution.du_ff);

        let apply = |alpha: f64| -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
            let states: Vec<DVector<f64>> = iterate
                .states
                .iter()
                .zip(&solution.dx)
                .map(|(x, dx)| x + dx * alpha)
                .collect();
            let controls: Vec<DVector<f64>> = iterate
                .controls
                .iter()
                .enumerate()
                .map(|(n, u)| u + (&solution.du_ff[n] + &solution.gains[n] * &solution.dx[n]) * alpha)
                .collect();
            (states, controls)
        };

        let (states, controls, alpha) = if settings.gnms_line_search {
            // Optional merit search: total cost plus defect norm penalty.
            let merit_before = cost_before + defect_before;
            let mut alpha = 1.0;
            let mut chosen = None;
            for _ in 0..settings.max_line_search_steps {
                let (s, c) = apply(alpha);
                let defect = self.measure_defects(&s, &c)?;
                let cost = self.cost.evaluate(&s, &c, dt, t0).expect("dims");
                if cost + defect < merit_before || (cost + defect) <= merit_before * (1.0 + 1e-12) {
                    chosen = Some((s, c, alpha));
                    break;
                }
                alpha *= settings.backtracking;
            }
            chosen.ok_or(NlocError::LineSearchFailed)?
        } else {
            let (s, c) = apply(1.0);
            (s, c, 1.0)
        };

        let defect_norm = self.measure_defects(&states, &controls)?;
        let cost_after = self
            .cost
            .evaluate(&states, &controls, dt, t0)
            .expect("node dimensions");
        let policy = Policy {
            u_ff: controls.clone(),
            gains: solution.gains,
            x_ref: states.clone(),
        };
        let converged = (cost_before - cost_after).abs() < settings.cost_tol * (1.0 + cost_after.abs())
            && du_ff_norm < settings.ff_tol
            && defect_norm < settings.defect_tol;
        Ok(IterationResult {
            iterate: NlocIterate {
                states,
                controls,
                policy,
                cost: cost_after,
                defect_norm,
                iteration: iterate.iteration + 1,
            },
            stats: IterationStats {
                cost_before,
                cost_after,
                alpha,
                accepted: true,
                converged,
                du_ff_norm,
                defect_norm,
            },
        })
    }

    /// One iteration of the configured algorithm.
    pub fn iteration(
        &self,
        iterate: &NlocIterate,
        x0: &DVector<f64>,
        t0: f64,
    ) -> Result<IterationResult, NlocError> {
        match self.settings.algorithm {
            Algorithm::Ilqr => self.ilqr_iteration(iterate, x0, t0),
            Algorithm::Gnms => self.gnms_iteration(iterate, x0, t0),
        }
    }

    /// Iterates until the convergence criteria or the iteration cap. Returns
    /// the final iterate and the per-iteration stats trace.
    pub fn solve(
        &self,
        x0: &DVector<f64>,
        t0: f64,
    ) -> Result<(NlocIterate, Vec<IterationStats>), NlocError> {
        let mut iterate = self.cold_start(x0);
        let mut trace = Vec::new();
        for _ in 0..self.settings.max_iterations {
            let result = self.iteration(&iterate, x0, t0)?;
            iterate = result.iterate;
            trace.push(result.stats);
            if result.stats.converged {
                break;
            }
        }
        Ok((iterate, trace))
    }
}

