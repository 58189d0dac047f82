use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BtFit, EvalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QvObjective {
    /// Squared error between `q_i + q_j` and the contrast variance.
    #[default]
    Variance,
    /// Squared error on the log scale.
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub a: String,
    pub b: String,
    pub contrast_variance: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiVariances {
    pub systems: Vec<String>,
    pub q: BTreeMap<String, f64>,
    /// `(q_a + q_b) / var(β_a − β_b) − 1` for every pair `a < b`.
    pub relative_errors: Vec<PairError>,
    pub notes: Vec<String>,
}

impl QuasiVariances {
    pub fn q_vec(&self) -> Vec<f64> {
        self.systems.iter().map(|s| self.q[s]).collect()
    }

    pub fn max_abs_relative_error(&self) -> f64 {
        self.relative_errors
            .iter()
            .map(|e| e.relative_error.abs())
            .fold(0.0, f64::max)
    }
}

/// Quasi-variances of a fitted model's abilities.
pub fn quasi_variances(fit: &BtFit, objective: QvObjective) -> Result<QuasiVariances, EvalError> {
    let n = fit.systems.len();
    let cov = fit.vcov.view((0, 0), (n, n)).clone_owned();
    quasi_variances_from_cov(&fit.systems, &cov, objective)
}

/// Quasi-variances for an arbitrary ability covariance matrix.
pub fn quasi_variances_from_cov(
    systems: &[String],
    cov: &DMatrix<f64>,
    objective: QvObjective,
) -> Result<QuasiVariances, EvalError> {
    let n = systems.len();
    if n < 2 {
        return Err(EvalError::Input("quasi-variances need at least two systems".into()));
    }
    if cov.nrows() != n || cov.ncols() != n {
        return Err(EvalError::Input(format!(
            "covariance is {}x{}, expected {n}x{n}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let v: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| cov[(i, i)] + cov[(j, j)] - 2.0 * cov[(i, j)])
        .collect();
    if let Some(k) = v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        let (i, j) = pairs[k];
        return Err(EvalError::Input(format!(
            "contrast variance for ({}, {}) is not positive",
            systems[i], systems[j]
        )));
    }
    let mut notes = Vec::new();
    let q: Vec<f64> = if n == 2 {
        notes.push("two systems: q is underdetermined and the contrast variance is split evenly".into());
        vec![v[0] / 2.0; 2]
    } else {
        let mut a = DMatrix::zeros(pairs.len(), n);
        for (r, &(i, j)) in pairs.iter().enumerate() {
            a[(r, i)] = 1.0;
            a[(r, j)] = 1.0;
        }
        let b = DVector::from_vec(v.clone());
        let lin = nnls(&a, &b);
        match objective {
            QvObjective::Variance => lin.iter().copied().collect(),
            QvObjective::Log => log_refine(&pairs, &v, &lin),
        }
    };
    let relative_errors = pairs
        .iter()
        .zip(&v)
        .map(|(&(i, j), &var)| PairError {
            a: systems[i].clone(),
            b: systems[j].clone(),
            contrast_variance: var,
            relative_error: (q[i] + q[j]) / var - 1.0,
        })
        .collect();
    Ok(QuasiVariances {
        systems: systems.to_vec(),
        q: systems.iter().cloned().zip(q).collect(),
        relative_errors,
        notes,
    })
}

/// `β̂ ± 1.96·√q` for one system.
pub fn comparison_interval(fit: &BtFit, qv: &QuasiVariances, system: &str) -> Option<(f64, f64)> {
    let b = *fit.beta.get(system)?;
    let half = 1.959_963_984_540_054 * qv.q.get(system)?.max(0.0).sqrt();
    Some((b - half, b + half))
}

/// Lawson-Hanson non-negative least squares: `min ‖Ax − b‖` with `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let tol = 1e-12 * a.norm().max(1.0) * b.norm().max(1.0);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let solve = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub
            .clone()
            .svd(true, true)
            .solve(b, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut s = DVector::zeros(n);
        for (pos, &k) in idx.iter().enumerate() {
            s[k] = sol[pos];
        }
        s
    };
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n)
            .filter(|&k| !passive[k] && w[k] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = cand else { break };
        passive[t] = true;
        loop {
            let s = solve(&passive);
            if (0..n).filter(|&k| passive[k]).all(|k| s[k] > 0.0) {
                x = s;
                break;
            }
            let step = (0..n)
                .filter(|&k| passive[k] && s[k] <= 0.0)
                .map(|k| x[k] / (x[k] - s[k]))
                .fold(f64::INFINITY, f64::min);
            x = &x + (s - &x) * step;
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    x
}

/// Levenberg-Marquardt on `Σ (ln(q_i + q_j) − ln v_ij)²` with `q = e^ρ`,
/// started from the variance-scale solution.
fn log_refine(pairs: &[(usize, usize)], v: &[f64], start: &DVector<f64>) -> Vec<f64> {
    let n = start.len();
    let floor = v.iter().copied().fold(f64::INFINITY, f64::min) * 1e-3;
    let mut rho = DVector::from_iterator(n, start.iter().map(|q| q.max(floor).ln()));
    let loss = |rho: &DVector<f64>| -> f64 {
        pairs
            .iter()
            .zip(v)
            .map(|(&(i, j), &var)| ((rho[i].exp() + rho[j].exp()).ln() - var.ln()).powi(2))
            .sum()
    };
    let mut lambda = 1e-3;
    let mut cur = loss(&rho);
    for _ in 0..500 {
        let mut jac = DMatrix::zeros(pairs.len(), n);
        let mut res = DVector::zeros(pairs.len());
        for (r, (&(i, j), &var)) in pairs.iter().zip(v).enumerate() {
            let (qi, qj) = (rho[i].exp(), rho[j].exp());
            res[r] = (qi + qj).ln() - var.ln();
            jac[(r, i)] = qi / (qi + qj);
            jac[(r, j)] = qj / (qi + qj);
        }
        let g = jac.transpose() * &res;
        if g.norm() < 1e-14 {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let mut improved = false;
        for _ in 0..30 {
            let m = &jtj + DMatrix::from_diagonal(&jtj.diagonal()) * lambda + DMatrix::identity(n, n) * 1e-15;
            let Some(step) = m.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let cand = &rho - step;
            let l = loss(&cand);
            if l < cur {
                rho = cand;
                cur = l;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    rho.iter().map(|r| r.exp()).collect()
}
