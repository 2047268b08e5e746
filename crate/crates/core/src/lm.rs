//! Damped least squares (Levenberg–Marquardt) with Marquardt diagonal
//! scaling and optional projection onto a feasible box.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// r_i = model_i(p) − data_i
    fn residuals(&self, p: &[f64], r: &mut [f64]);
    /// ∂r_i/∂p_j, shape n_residuals × n_params.
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>);
    /// Pull `p` back into the feasible set. Returns true if anything changed.
    fn project(&self, _p: &mut [f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmSettings {
    pub max_iterations: usize,
    /// Converged when an accepted step lowers the RSS by less than this
    /// fraction.
    pub ftol: f64,
    /// Converged when the step is smaller than this relative to ‖p‖.
    pub xtol: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-10,
            xtol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub rss: f64,
    /// One standard error per parameter: sqrt(diag((JᵀJ)⁻¹)·RSS/(n − p)).
    pub stderr: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// True if the projection ever had to pull a trial point back.
    pub projected: bool,
    pub message: Option<String>,
}

const POLISH_ITERATIONS: usize = 20;

fn rss_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub fn minimize<P: LeastSquares + ?Sized>(problem: &P, init: &[f64], settings: &LmSettings) -> LmOutcome {
    let n = problem.n_residuals();
    let m = problem.n_params();
    assert_eq!(init.len(), m, "initial parameter vector has wrong length");

    let mut p = init.to_vec();
    let mut projected = problem.project(&mut p);
    let mut r = vec![0.0; n];
    problem.residuals(&p, &mut r);
    let mut rss = rss_of(&r);
    let mut jac = DMatrix::<f64>::zeros(n, m);

    if !rss.is_finite() {
        return LmOutcome {
            stderr: vec![f64::NAN; m],
            params: p,
            rss,
            iterations: 0,
            converged: false,
            projected,
            message: Some("non-finite residuals at the initial point".into()),
        };
    }

    let mut mu = -1.0;
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut message = None;
    let mut trial = vec![0.0; m];
    let mut r_trial = vec![0.0; n];
    // after the RSS test passes, a few more steps pull p onto the minimum
    let mut budget = settings.max_iterations;

    'outer: while iterations < budget {
        if rss == 0.0 {
            converged = true;
            break;
        }
        problem.jacobian(&p, &mut jac);
        let jtj = jac.tr_mul(&jac);
        let grad = jac.tr_mul(&DVector::from_column_slice(&r));
        let max_diag = (0..m).map(|k| jtj[(k, k)]).fold(0.0_f64, f64::max);
        if !(max_diag > 0.0) || !max_diag.is_finite() {
            message = Some("singular Jacobian".into());
            break;
        }
        if mu < 0.0 {
            mu = 1e-3 * max_diag;
        }
        let floor = 1e-12 * max_diag;

        loop {
            iterations += 1;
            let mut a = jtj.clone();
            for k in 0..m {
                a[(k, k)] += mu * jtj[(k, k)].max(floor);
            }
            let Some(chol) = a.cholesky() else {
                mu *= nu;
                nu *= 2.0;
                if iterations >= budget {
                    break 'outer;
                }
                continue;
            };
            let step = chol.solve(&(-&grad));
            for k in 0..m {
                trial[k] = p[k] + step[k];
            }
            projected |= problem.project(&mut trial);
            problem.residuals(&trial, &mut r_trial);
            let rss_trial = rss_of(&r_trial);

            let step_norm = trial
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let small_step = step_norm <= settings.xtol * (p_norm + settings.xtol);

            if rss_trial.is_finite() && rss_trial < rss {
                let rel_drop = (rss - rss_trial) / rss;
                std::mem::swap(&mut p, &mut trial);
                std::mem::swap(&mut r, &mut r_trial);
                rss = rss_trial;
                mu = (mu / 3.0).max(1e-15 * max_diag);
                nu = 2.0;
                if small_step {
                    converged = true;
                    break 'outer;
                }
                if rel_drop < settings.ftol && !converged {
                    converged = true;
                    budget = budget.min(iterations + POLISH_ITERATIONS);
                }
                continue 'outer;
            }
            if small_step {
                // no decrease is possible at this resolution
                converged = true;
                break 'outer;
            }
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() || mu > 1e30 * max_diag {
                converged = true;
                break 'outer;
            }
            if iterations >= budget {
                break 'outer;
            }
        }
    }
    if !converged && message.is_none() {
        message = Some(format!("no convergence after {iterations} iterations"));
    }

    let stderr = standard_errors(problem, &p, rss, &mut jac);
    LmOutcome {
        params: p,
        rss,
        stderr,
        iterations,
        converged,
        projected,
        message,
    }
}

fn standard_errors<P: LeastSquares + ?Sized>(problem: &P, p: &[f64], rss: f64, jac: &mut DMatrix<f64>) -> Vec<f64> {
    let n = problem.n_residuals();
    let m = problem.n_params();
    problem.jacobian(p, jac);
    if n <= m {
        return vec![f64::NAN; m];
    }
    let jtj = jac.tr_mul(jac);
    let sigma2 = rss / (n - m) as f64;
    match jtj.clone().pseudo_inverse(1e-14 * jtj.norm()) {
        Ok(cov) => (0..m).map(|k| (cov[(k, k)].max(0.0) * sigma2).sqrt()).collect(),
        Err(_) => vec![f64::NAN; m],
    }
}
