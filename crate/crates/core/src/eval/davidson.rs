use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bt::{identification_map, separation_warnings, BtOptions, ABILITY_CAP};
use super::newton::{maximize, Eval, NewtonOptions};
use super::{aggregate, ComparisonRecord, EvalError, PairCounts, Systems};

/// Bounds on `ln ν` when the tie share is degenerate.
const LOG_NU_CAP: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DavidsonFit {
    pub systems: Vec<String>,
    pub beta: BTreeMap<String, f64>,
    pub alpha: Option<f64>,
    /// Tie parameter; zero when no ties were observed.
    pub nu: f64,
    /// Covariance of `(β_1..β_n, α)` under the chosen identification.
    pub vcov: DMatrix<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl DavidsonFit {
    pub fn beta_vec(&self) -> Vec<f64> {
        self.systems.iter().map(|s| self.beta[s]).collect()
    }

    /// Win, loss and tie probabilities for `first` presented before `second`.
    pub fn probabilities(&self, first: &str, second: &str) -> Option<(f64, f64, f64)> {
        let d = self.alpha.unwrap_or(0.0) + self.beta.get(first)? - self.beta.get(second)?;
        let (a, b) = ((d / 2.0).exp(), (-d / 2.0).exp());
        let den = a + b + self.nu;
        Some((a / den, b / den, self.nu / den))
    }
}

/// With `d` the ability contrast and `λ = ln ν`, the likelihood of a first
/// win, second win and tie is `e^{d/2}/D`, `e^{−d/2}/D` and `ν/D` where
/// `D = 2cosh(d/2) + ν`.
fn davidson_eval(theta: &DVector<f64>, pairs: &[PairCounts], order: bool, ties: bool) -> Eval {
    let p = theta.len();
    let nb = p - usize::from(order) - usize::from(ties);
    let beta = |i: usize| if i == 0 { 0.0 } else { theta[i - 1] };
    let alpha = if order { theta[nb] } else { 0.0 };
    let (nu, lam_idx) = if ties { (theta[p - 1].exp(), Some(p - 1)) } else { (0.0, None) };
    let mut value = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    let mut x = DVector::zeros(p);
    for pc in pairs {
        let d = alpha + beta(pc.first) - beta(pc.second);
        let (s, c) = ((d / 2.0).sinh(), (d / 2.0).cosh());
        let den = 2.0 * c + nu;
        let m = pc.total();
        let a = pc.first_wins - pc.second_wins;
        value += a * d / 2.0 - m * den.ln();
        if ties {
            value += pc.ties * nu.ln();
        }
        x.fill(0.0);
        if pc.first > 0 {
            x[pc.first - 1] += 1.0;
        }
        if pc.second > 0 {
            x[pc.second - 1] -= 1.0;
        }
        if order {
            x[nb] = 1.0;
        }
        let f_d = s / den;
        let f_dd = (0.5 * c * den - s * s) / (den * den);
        grad.axpy(a / 2.0 - m * f_d, &x, 1.0);
        hess.ger(-m * f_dd, &x, &x, 1.0);
        if let Some(l) = lam_idx {
            let f_l = nu / den;
            let f_ll = nu * 2.0 * c / (den * den);
            let f_dl = -s * nu / (den * den);
            grad[l] += pc.ties - m * f_l;
            hess[(l, l)] -= m * f_ll;
            for k in 0..l {
                hess[(k, l)] -= m * f_dl * x[k];
                hess[(l, k)] -= m * f_dl * x[k];
            }
        }
    }
    Eval { value, grad, hess }
}

/// Maximum-likelihood Davidson fit: ties are modelled explicitly with
/// probability proportional to `ν·√(π_i π_j)`.
pub fn fit_davidson(records: &[ComparisonRecord], opts: &BtOptions) -> Result<DavidsonFit, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Input("no comparisons".into()));
    }
    let systems = Systems::from_records(records)?;
    if let Some(c) = systems.components(records) {
        return Err(EvalError::Disconnected(c));
    }
    let n = systems.len();
    let order = opts.order_effect;
    let pairs = aggregate(records, &systems);
    let n_ties: f64 = pairs.iter().map(|p| p.ties).sum();
    let decisive: f64 = pairs.iter().map(|p| p.first_wins + p.second_wins).sum();
    let ties = n_ties > 0.0;
    let mut warnings = Vec::new();
    if !ties {
        warnings.push("no ties observed: ν is 0 and the fit reduces to Bradley-Terry".into());
    }
    if decisive == 0.0 {
        warnings.push("every outcome is a tie: ν diverges and is capped".into());
    }
    warnings.extend(separation_warnings(records).into_iter().filter(|_| decisive > 0.0));
    let free = n - 1 + usize::from(order);
    let mut x0 = DVector::zeros(free + usize::from(ties));
    if ties {
        x0[free] = (2.0 * n_ties / decisive.max(1.0)).ln();
    }
    let res = maximize(
        |t| davidson_eval(t, &pairs, order, ties),
        x0,
        &NewtonOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
            cap: Some(ABILITY_CAP.max(LOG_NU_CAP)),
        },
    );
    if !res.converged && decisive > 0.0 {
        warnings.push(format!(
            "no convergence after {} iterations (gradient norm {:.3e})",
            res.iterations,
            res.eval.grad.norm()
        ));
    }
    let info = -&res.eval.hess;
    let v_all = info
        .clone()
        .try_inverse()
        .or_else(|| info.pseudo_inverse(1e-12).ok())
        .ok_or_else(|| EvalError::Fit("information matrix is not invertible".into()))?;
    let v_free = v_all.view((0, 0), (free, free)).clone_owned();
    let c = identification_map(n, order, &opts.identification, &systems.names)?;
    let est = &c * res.x.rows(0, free);
    let vcov = &c * v_free * c.transpose();
    Ok(DavidsonFit {
        systems: systems.names.clone(),
        beta: systems
            .names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), est[i]))
            .collect(),
        alpha: order.then(|| est[n]),
        nu: if ties { res.x[free].exp() } else { 0.0 },
        vcov,
        loglik: res.eval.value,
        converged: res.converged,
        iterations: res.iterations,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{fit_bradley_terry, Outcome};
    use crate::model::Metric;

    fn rec(a: &str, b: &str, o: Outcome) -> ComparisonRecord {
        ComparisonRecord::new(a, b, Metric::Novelty, o)
    }

    #[test]
    fn all_ties_give_even_abilities_and_large_nu() {
        let recs = vec![
            rec("A", "B", Outcome::Tie),
            rec("B", "C", Outcome::Tie),
            rec("C", "A", Outcome::Tie),
        ];
        let f = fit_davidson(&recs, &BtOptions::without_order_effect()).unwrap();
        assert!(f.beta.values().all(|b| b.abs() < 1e-9));
        assert!(f.nu > 1e6, "nu = {}", f.nu);
        assert!(!f.warnings.is_empty());
    }

    #[test]
    fn no_ties_reduce_to_bradley_terry() {
        let recs = vec![
            rec("A", "B", Outcome::FirstWins),
            rec("A", "B", Outcome::FirstWins),
            rec("B", "A", Outcome::FirstWins),
            rec("B", "C", Outcome::FirstWins),
            rec("C", "B", Outcome::SecondWins),
            rec("C", "B", Outcome::FirstWins),
            rec("A", "C", Outcome::SecondWins),
            rec("C", "A", Outcome::SecondWins),
        ];
        let opts = BtOptions::default();
        let d = fit_davidson(&recs, &opts).unwrap();
        let b = fit_bradley_terry(&recs, &opts).unwrap();
        assert_eq!(d.nu, 0.0);
        assert!(d.warnings.iter().any(|w| w.contains("no ties")));
        for (x, y) in d.beta_vec().iter().zip(b.beta_vec()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let recs = vec![
            rec("A", "B", Outcome::FirstWins),
            rec("A", "B", Outcome::Tie),
            rec("B", "A", Outcome::SecondWins),
            rec("B", "A", Outcome::FirstWins),
        ];
        let f = fit_davidson(&recs, &BtOptions::default()).unwrap();
        let (w, l, t) = f.probabilities("A", "B").unwrap();
        assert!((w + l + t - 1.0).abs() < 1e-12);
    }
}
