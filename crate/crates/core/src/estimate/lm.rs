//! Damped Gauss–Newton (Levenberg–Marquardt) minimisation of a weighted sum
//! of squared residuals.
//!
//! Each trial step solves `(J^T J + lambda diag(J^T J)) delta = -J^T r`. A step
//! is accepted only when it lowers chi-square; the damping then shrinks by a
//! factor of ten, otherwise it grows by ten and the step is retried.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative eigenvalue floor of the scaled normal matrix.
const SINGULAR_RCOND: f64 = 1e-13;
const MAX_DAMPING: f64 = 1e16;
const MIN_DAMPING: f64 = 1e-12;

/// Residuals `(model - data) / sigma` and their Jacobian.
pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;

    /// `None` when `x` lies outside the parameter domain.
    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>>;

    /// Residuals together with the `n_residuals x n_params` Jacobian.
    fn residuals_and_jacobian(&self, x: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)>;

    fn param_names(&self) -> Vec<String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmSettings {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers chi-square by less than this fraction.
    pub chi2_rel_tol: f64,
    /// Stop when the step is smaller than this, relative to the parameter norm.
    pub step_tol: f64,
    pub initial_damping: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings {
            max_iterations: 500,
            chi2_rel_tol: 1e-9,
            step_tol: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub chi2: f64,
    /// Inverse normal matrix at the optimum.
    pub covariance: DMatrix<f64>,
    pub n_iterations: usize,
    pub n_residuals: usize,
    /// Chi-square after the initial point and every accepted step.
    pub chi2_trace: Vec<f64>,
}

fn chi2(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Fails with the names of the parameters spanning the null space when the
/// normal matrix is (numerically) singular.
pub fn check_normal_matrix(jtj: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let n = jtj.nrows();
    let d: Vec<f64> = (0..n).map(|i| jtj[(i, i)]).collect();
    let dead: Vec<String> = (0..n)
        .filter(|&i| !(d[i] > 0.0) || !d[i].is_finite())
        .map(|i| names[i].clone())
        .collect();
    if !dead.is_empty() {
        return Err(Error::SingularNormalMatrix { directions: dead });
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| jtj[(i, j)] / (d[i] * d[j]).sqrt());
    let eig = SymmetricEigen::new(scaled);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (imin, &min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if min <= SINGULAR_RCOND * max {
        let v = eig.eigenvectors.column(imin);
        let largest = v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let directions = (0..n)
            .filter(|&i| v[i].abs() >= 0.1 * largest)
            .map(|i| format!("{} ({:+.3})", names[i], v[i]))
            .collect();
        return Err(Error::SingularNormalMatrix { directions });
    }
    Ok(())
}

fn normal_equations(r: &[f64], j: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let jt = j.transpose();
    let jtj = &jt * j;
    let g = &jt * DVector::from_column_slice(r);
    (jtj, g)
}

pub fn minimize<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    settings: &LmSettings,
) -> Result<LmOutcome> {
    let names = problem.param_names();
    let n = problem.n_params();
    let (mut r, mut jac) = problem
        .residuals_and_jacobian(x0)
        .ok_or_else(|| Error::InvalidInit("initial point outside the parameter domain".into()))?;
    let n_res = r.len();
    if n_res < n {
        return Err(Error::DegenerateData(format!(
            "{n_res} residuals for {n} free parameters"
        )));
    }
    let mut x = x0.to_vec();
    let mut chi = chi2(&r);
    if !chi.is_finite() {
        return Err(Error::InvalidInit("chi-square is not finite at the initial point".into()));
    }
    let (mut jtj, mut g) = normal_equations(&r, &jac);
    check_normal_matrix(&jtj, &names)?;

    let mut lambda = settings.initial_damping;
    let mut trace = vec![chi];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        iterations += 1;
        let mut a = jtj.clone();
        for i in 0..n {
            a[(i, i)] += lambda * jtj[(i, i)];
        }
        let Some(chol) = a.cholesky() else {
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                break;
            }
            continue;
        };
        let delta = chol.solve(&(-&g));
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if delta.norm() <= settings.step_tol * (x_norm + settings.step_tol) {
            converged = true;
            break;
        }
        let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        let trial_chi = problem.residuals(&trial).map(|r| chi2(&r));
        match trial_chi {
            Some(c) if c < chi => {
                let rel = (chi - c) / chi;
                let (r_new, j_new) = problem
                    .residuals_and_jacobian(&trial)
                    .expect("accepted point lies in the domain");
                x = trial;
                r = r_new;
                jac = j_new;
                chi = chi2(&r);
                trace.push(chi);
                (jtj, g) = normal_equations(&r, &jac);
                lambda = (lambda / 10.0).max(MIN_DAMPING);
                if rel < settings.chi2_rel_tol {
                    converged = true;
                    break;
                }
            }
            _ => {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    // no descent direction left at working precision
                    converged = true;
                    break;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            chi2: chi,
        });
    }
    check_normal_matrix(&jtj, &names)?;
    let covariance = jtj
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| jtj.clone().try_inverse())
        .ok_or_else(|| Error::SingularNormalMatrix {
            directions: names.clone(),
        })?;
    Ok(LmOutcome {
        x,
        chi2: chi,
        covariance,
        n_iterations: iterations,
        n_residuals: n_res,
        chi2_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight line y = a + b x with unit errors.
    struct Line {
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl LeastSquaresProblem for Line {
        fn n_params(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64]) -> Option<Vec<f64>> {
            Some(self.xs.iter().zip(&self.ys).map(|(x, y)| p[0] + p[1] * x - y).collect())
        }
        fn residuals_and_jacobian(&self, p: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
            let j = DMatrix::from_fn(self.xs.len(), 2, |i, k| if k == 0 { 1.0 } else { self.xs[i] });
            Some((self.residuals(p)?, j))
        }
        fn param_names(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }
    }

    #[test]
    fn line_fit_matches_normal_equations() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x + if *x as i32 % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let out = minimize(&Line { xs, ys }, &[0.0, 0.0], &LmSettings::default()).unwrap();
        // slope 2 - 0.5 / 82.5, intercept 10 - 4.5 * slope
        let b = 2.0 - 0.5 / 82.5;
        assert!((out.x[1] - b).abs() < 1e-9 && (out.x[0] - (10.0 - 4.5 * b)).abs() < 1e-9, "{:?}", out.x);
        assert!(out.chi2_trace.windows(2).all(|w| w[1] <= w[0]));
        // Var(b) = 1 / Sxx for unit errors
        assert!((out.covariance[(1, 1)] - 1.0 / 82.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_columns_are_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = check_normal_matrix(&m, &["a".into(), "b".into()]).unwrap_err();
        match err {
            Error::SingularNormalMatrix { directions } => assert_eq!(directions.len(), 2),
            e => panic!("{e}"),
        }
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(check_normal_matrix(&z, &["a".into(), "b".into()]).is_err());
    }
}
