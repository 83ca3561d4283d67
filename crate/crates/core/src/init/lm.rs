//! Levenberg-Marquardt over a dense block plus per-landmark scalar
//! parameters eliminated with the Schur complement.

use nalgebra::{DMatrix, DVector};

use super::config::LmConfig;
use super::types::{InitError, SolveDiagnostics};

/// Gauss-Newton system `H dx = b` with `b = -Jᵀr`, split into dense and
/// point parameters. The point-point block is diagonal.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub h_dense: DMatrix<f64>,
    pub b_dense: DVector<f64>,
    pub h_cross: DMatrix<f64>,
    pub h_points: DVector<f64>,
    pub b_points: DVector<f64>,
}

impl NormalEquations {
    pub fn new(n_dense: usize, n_points: usize) -> Self {
        Self {
            h_dense: DMatrix::zeros(n_dense, n_dense),
            b_dense: DVector::zeros(n_dense),
            h_cross: DMatrix::zeros(n_dense, n_points),
            h_points: DVector::zeros(n_points),
            b_points: DVector::zeros(n_points),
        }
    }

    /// Adds `w·|r|²` linearized with dense Jacobian blocks `(offset, J)` and
    /// an optional point column `(index, j)`.
    pub fn add(
        &mut self,
        r: &DVector<f64>,
        dense: &[(usize, DMatrix<f64>)],
        point: Option<(usize, &DVector<f64>)>,
        w: f64,
    ) {
        for (oa, ja) in dense {
            let jta = ja.transpose() * w;
            for (ob, jb) in dense {
                let mut view = self.h_dense.view_mut((*oa, *ob), (ja.ncols(), jb.ncols()));
                view += &jta * jb;
            }
            let mut bv = self.b_dense.rows_mut(*oa, ja.ncols());
            bv -= &jta * r;
            if let Some((pi, jp)) = point {
                let mut c = self.h_cross.view_mut((*oa, pi), (ja.ncols(), 1));
                c += &jta * jp;
            }
        }
        if let Some((pi, jp)) = point {
            self.h_points[pi] += w * jp.dot(jp);
            self.b_points[pi] -= w * jp.dot(r);
        }
    }

    pub fn gradient_norm(&self) -> f64 {
        (self.b_dense.norm_squared() + self.b_points.norm_squared()).sqrt()
    }

    /// Solves the damped system `(H + λ diag H) dx = b`.
    pub fn solve(&self, lambda: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        let nd = self.h_dense.nrows();
        let np = self.h_points.len();
        let floor = 1e-12 * self.h_dense.diagonal().amax().max(self.h_points.amax()).max(1e-300);

        let mut hdd = self.h_dense.clone();
        for i in 0..nd {
            hdd[(i, i)] += lambda * self.h_dense[(i, i)].max(floor);
        }
        let inv: DVector<f64> =
            DVector::from_iterator(np, self.h_points.iter().map(|h| 1.0 / (h * (1.0 + lambda)).max(floor)));

        let mut hc_scaled = self.h_cross.clone();
        for (j, mut col) in hc_scaled.column_iter_mut().enumerate() {
            col *= inv[j];
        }
        let s = &hdd - &hc_scaled * self.h_cross.transpose();
        let rhs = &self.b_dense - &hc_scaled * &self.b_points;

        let dd = if nd == 0 {
            DVector::zeros(0)
        } else if let Some(ch) = s.clone().cholesky() {
            ch.solve(&rhs)
        } else {
            s.lu().solve(&rhs)?
        };
        let dp = (&self.b_points - self.h_cross.transpose() * &dd).component_mul(&inv);
        (dd.iter().chain(dp.iter()).all(|v| v.is_finite())).then_some((dd, dp))
    }
}

pub trait LeastSquaresProblem {
    type State: Clone;
    fn cost(&self, state: &Self::State) -> f64;
    fn linearize(&self, state: &Self::State) -> NormalEquations;
    fn retract(&self, state: &Self::State, dense: &DVector<f64>, points: &DVector<f64>) -> Self::State;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative cost change fell below tolerance.
    Converged,
    /// No damping produced a decrease; the state is a local minimum to
    /// working precision.
    NoImprovement,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub cost_history: Vec<f64>,
    pub termination: Termination,
    pub initial_gradient_norm: f64,
    pub final_gradient_norm: f64,
}

impl LmReport {
    pub fn diagnostics(&self, stage: &str) -> SolveDiagnostics {
        SolveDiagnostics {
            stage: stage.to_string(),
            iterations: self.iterations,
            initial_cost: self.initial_cost,
            final_cost: self.final_cost,
            cost_history: self.cost_history.clone(),
        }
    }

    /// True when every recorded cost is strictly below its predecessor.
    pub fn strictly_decreasing(&self) -> bool {
        self.cost_history.windows(2).all(|w| w[1] < w[0])
    }
}

const MAX_LAMBDA: f64 = 1e16;

/// Runs LM; only steps that strictly decrease the cost are accepted.
pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    initial: P::State,
    cfg: &LmConfig,
) -> Result<(P::State, LmReport), InitError> {
    let mut state = initial;
    let mut cost = problem.cost(&state);
    if !cost.is_finite() {
        return Err(InitError::Diverged);
    }
    let mut history = vec![cost];
    let mut lambda = cfg.initial_lambda;
    let mut ne = problem.linearize(&state);
    let initial_gradient_norm = ne.gradient_norm();
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut accepted = None;
        while lambda <= MAX_LAMBDA {
            if let Some((dd, dp)) = ne.solve(lambda) {
                let candidate = problem.retract(&state, &dd, &dp);
                let c = problem.cost(&candidate);
                if c.is_finite() && c < cost {
                    accepted = Some((candidate, c));
                    break;
                }
            }
            lambda *= cfg.lambda_up;
        }
        let Some((candidate, new_cost)) = accepted else {
            termination = Termination::NoImprovement;
            break;
        };
        let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
        state = candidate;
        cost = new_cost;
        history.push(cost);
        lambda = (lambda / cfg.lambda_down).max(1e-12);
        ne = problem.linearize(&state);
        if rel < cfg.relative_cost_tolerance || cost == 0.0 {
            termination = Termination::Converged;
            break;
        }
    }

    Ok((
        state,
        LmReport {
            iterations,
            initial_cost: history[0],
            final_cost: cost,
            cost_history: history,
            termination,
            initial_gradient_norm,
            final_gradient_norm: ne.gradient_norm(),
        },
    ))
}
