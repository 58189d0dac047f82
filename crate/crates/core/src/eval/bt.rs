use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::newton::{maximize, Eval, NewtonOptions};
use super::{aggregate, logistic, ComparisonRecord, EvalError, PairCounts, Systems};

/// Estimates are clamped here when the data are separated.
pub(crate) const ABILITY_CAP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Identification {
    /// Abilities sum to zero.
    SumToZero,
    /// The named system is fixed at zero.
    Reference(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtOptions {
    pub order_effect: bool,
    pub identification: Identification,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BtOptions {
    fn default() -> Self {
        Self {
            order_effect: true,
            identification: Identification::SumToZero,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

impl BtOptions {
    pub fn without_order_effect() -> Self {
        Self {
            order_effect: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtFit {
    pub systems: Vec<String>,
    pub beta: BTreeMap<String, f64>,
    pub alpha: Option<f64>,
    /// Covariance of `(β_1..β_n, α)` under the chosen identification; the α
    /// row and column are present only with an order effect.
    pub vcov: DMatrix<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl BtFit {
    pub fn beta_vec(&self) -> Vec<f64> {
        self.systems.iter().map(|s| self.beta[s]).collect()
    }

    pub fn index_of(&self, system: &str) -> Option<usize> {
        self.systems.iter().position(|s| s == system)
    }

    pub fn se(&self, system: &str) -> Option<f64> {
        self.index_of(system).map(|i| self.vcov[(i, i)].max(0.0).sqrt())
    }

    pub fn alpha_se(&self) -> Option<f64> {
        self.alpha.map(|_| {
            let k = self.systems.len();
            self.vcov[(k, k)].max(0.0).sqrt()
        })
    }

    /// Variance of `β_i − β_j`, invariant to the identification.
    pub fn contrast_variance(&self, i: usize, j: usize) -> f64 {
        self.vcov[(i, i)] + self.vcov[(j, j)] - 2.0 * self.vcov[(i, j)]
    }

    /// Model probability that `first` beats `second` when presented first.
    pub fn win_probability(&self, first: &str, second: &str) -> Option<f64> {
        let a = self.alpha.unwrap_or(0.0);
        Some(logistic(a + self.beta.get(first)? - self.beta.get(second)?))
    }
}

/// Maps free parameters (abilities of systems 1..n with system 0 at zero,
/// then α) to the reported parameterization.
pub(crate) fn identification_map(n: usize, order: bool, ident: &Identification, systems: &[String]) -> Result<DMatrix<f64>, EvalError> {
    let free = n - 1 + usize::from(order);
    let out = n + usize::from(order);
    let mut c = DMatrix::zeros(out, free);
    for k in 1..n {
        c[(k, k - 1)] = 1.0;
    }
    match ident {
        Identification::SumToZero => {
            let centre = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
            let top = &centre * c.rows(0, n);
            c.rows_mut(0, n).copy_from(&top);
        }
        Identification::Reference(name) => {
            let r = systems
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| EvalError::Input(format!("reference system `{name}` not in comparisons")))?;
            let shift = c.row(r).clone_owned();
            for k in 0..n {
                let row = c.row(k) - &shift;
                c.row_mut(k).copy_from(&row);
            }
        }
    }
    if order {
        c[(n, free - 1)] = 1.0;
    }
    Ok(c)
}

fn bt_eval(theta: &DVector<f64>, pairs: &[PairCounts], order: bool) -> Eval {
    let p = theta.len();
    let beta = |i: usize| if i == 0 { 0.0 } else { theta[i - 1] };
    let alpha = if order { theta[p - 1] } else { 0.0 };
    let mut value = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    let mut x = DVector::zeros(p);
    for pc in pairs {
        let w1 = pc.first_wins + 0.5 * pc.ties;
        let w2 = pc.second_wins + 0.5 * pc.ties;
        let eta = alpha + beta(pc.first) - beta(pc.second);
        let prob = logistic(eta);
        let m = w1 + w2;
        value += w1 * ln_logistic(eta) + w2 * ln_logistic(-eta);
        x.fill(0.0);
        if pc.first > 0 {
            x[pc.first - 1] += 1.0;
        }
        if pc.second > 0 {
            x[pc.second - 1] -= 1.0;
        }
        if order {
            x[p - 1] = 1.0;
        }
        grad.axpy(w1 - m * prob, &x, 1.0);
        hess.ger(-m * prob * (1.0 - prob), &x, &x, 1.0);
    }
    Eval { value, grad, hess }
}

pub(crate) fn ln_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Per-system separation check on half-win credit.
pub(crate) fn separation_warnings(records: &[ComparisonRecord]) -> Vec<String> {
    let mut credit: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for r in records {
        let s = r.outcome.first_score();
        let e = credit.entry(&r.first).or_default();
        e.0 += s;
        e.1 += 1.0;
        let e = credit.entry(&r.second).or_default();
        e.0 += 1.0 - s;
        e.1 += 1.0;
    }
    credit
        .into_iter()
        .filter_map(|(name, (c, t))| {
            if c == t {
                Some(format!("`{name}` wins every comparison; its ability diverges and is capped"))
            } else if c == 0.0 {
                Some(format!("`{name}` loses every comparison; its ability diverges and is capped"))
            } else {
                None
            }
        })
        .collect()
}

/// Maximum-likelihood Bradley-Terry fit with an optional order effect.
/// A tie counts as half a win for each side.
pub fn fit_bradley_terry(records: &[ComparisonRecord], opts: &BtOptions) -> Result<BtFit, EvalError> {
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
    let mut warnings = separation_warnings(records);
    let free = n - 1 + usize::from(order);
    let res = maximize(
        |t| bt_eval(t, &pairs, order),
        DVector::zeros(free),
        &NewtonOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
            cap: Some(ABILITY_CAP),
        },
    );
    if !res.converged {
        warnings.push(format!(
            "no convergence after {} iterations (gradient norm {:.3e})",
            res.iterations,
            res.eval.grad.norm()
        ));
    }
    if res.hit_cap && warnings.is_empty() {
        warnings.push(format!("estimates reached the ±{ABILITY_CAP} cap"));
    }
    let info = -&res.eval.hess;
    let v_free = info
        .clone()
        .try_inverse()
        .or_else(|| info.pseudo_inverse(1e-12).ok())
        .ok_or_else(|| EvalError::Fit("information matrix is not invertible".into()))?;
    let c = identification_map(n, order, &opts.identification, &systems.names)?;
    let est = &c * &res.x;
    let vcov = &c * v_free * c.transpose();
    let beta = systems
        .names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), est[i]))
        .collect();
    Ok(BtFit {
        systems: systems.names.clone(),
        beta,
        alpha: order.then(|| est[n]),
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
    use crate::eval::Outcome;
    use crate::model::Metric;

    fn rec(a: &str, b: &str, o: Outcome) -> ComparisonRecord {
        ComparisonRecord::new(a, b, Metric::Novelty, o)
    }

    #[test]
    fn one_win_each_is_even() {
        let recs = vec![rec("A", "B", Outcome::FirstWins), rec("A", "B", Outcome::SecondWins)];
        let f = fit_bradley_terry(&recs, &BtOptions::without_order_effect()).unwrap();
        assert!(f.beta["A"].abs() < 1e-12 && f.beta["B"].abs() < 1e-12);
        assert!((f.win_probability("A", "B").unwrap() - 0.5).abs() < 1e-12);
        assert!(f.converged);
    }

    #[test]
    fn reference_and_sum_to_zero_agree_on_contrasts() {
        let recs = vec![
            rec("A", "B", Outcome::FirstWins),
            rec("A", "B", Outcome::FirstWins),
            rec("B", "A", Outcome::FirstWins),
            rec("B", "C", Outcome::FirstWins),
            rec("C", "B", Outcome::Tie),
            rec("A", "C", Outcome::SecondWins),
            rec("C", "A", Outcome::SecondWins),
        ];
        let s = fit_bradley_terry(&recs, &BtOptions::default()).unwrap();
        let r = fit_bradley_terry(
            &recs,
            &BtOptions {
                identification: Identification::Reference("B".into()),
                ..BtOptions::default()
            },
        )
        .unwrap();
        assert!(r.beta["B"].abs() < 1e-12);
        assert!((s.beta_vec().iter().sum::<f64>()).abs() < 1e-10);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let ds = s.beta_vec()[i] - s.beta_vec()[j];
            let dr = r.beta_vec()[i] - r.beta_vec()[j];
            assert!((ds - dr).abs() < 1e-9);
            assert!((s.contrast_variance(i, j) - r.contrast_variance(i, j)).abs() < 1e-9);
        }
        assert!((s.alpha.unwrap() - r.alpha.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn disconnected_rejected() {
        let recs = vec![rec("A", "B", Outcome::FirstWins), rec("C", "D", Outcome::SecondWins)];
        match fit_bradley_terry(&recs, &BtOptions::default()) {
            Err(EvalError::Disconnected(c)) => assert_eq!(c.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn separation_warns_and_caps() {
        let recs = vec![
            rec("A", "B", Outcome::FirstWins),
            rec("B", "A", Outcome::SecondWins),
            rec("B", "C", Outcome::FirstWins),
            rec("C", "B", Outcome::FirstWins),
        ];
        let f = fit_bradley_terry(&recs, &BtOptions::without_order_effect()).unwrap();
        assert!(f.warnings.iter().any(|w| w.contains("`A` wins every")));
        assert!(f.beta.values().all(|b| b.abs() <= 2.0 * ABILITY_CAP));
    }

    #[test]
    fn all_ties_are_even() {
        let recs = vec![rec("A", "B", Outcome::Tie), rec("B", "C", Outcome::Tie)];
        let f = fit_bradley_terry(&recs, &BtOptions::default()).unwrap();
        assert!(f.beta.values().all(|b| b.abs() < 1e-12));
        assert!(f.alpha.unwrap().abs() < 1e-12);
    }
}
