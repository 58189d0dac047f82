use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use super::newton::{maximize, Eval, NewtonOptions};
use super::EvalError;
use crate::model::Metric;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
/// Bound on every internal parameter; only reached by empty categories.
const PARAM_CAP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub rater: String,
    pub hypothesis: String,
    pub metric: Metric,
    /// Category in `1..=K`.
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaschData {
    pub ratings: Vec<Rating>,
    pub k: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaschPriors {
    pub sigma_u: f64,
    /// `None` fixes every hypothesis-on-metric effect at zero.
    pub sigma_v: Option<f64>,
    /// Weak Gaussian prior on each threshold; `None` leaves them flat.
    pub tau_sd: Option<f64>,
}

impl Default for RaschPriors {
    fn default() -> Self {
        Self {
            sigma_u: 1.0,
            sigma_v: Some(1.0),
            tau_sd: Some(10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEffect {
    pub hypothesis: String,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSe {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaschFit {
    pub k: u8,
    pub tau: Vec<f64>,
    /// Metric effects; the first metric present is the zero reference.
    pub beta_m: BTreeMap<Metric, f64>,
    pub u: BTreeMap<String, f64>,
    pub v: Vec<CellEffect>,
    /// Laplace standard errors on the internal parameterization, where the
    /// thresholds are `τ_1` followed by log increments.
    pub laplace_se: Vec<ParamSe>,
    pub logpost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

struct Obs {
    rater: usize,
    metric: usize,
    cell: usize,
    /// Zero-based category.
    cat: usize,
}

/// Cumulative-probit rating model `P(Y ≤ k) = Φ(τ_k − η)` with
/// `η = β_m + u_i + v_jm`, set up for MAP estimation.
///
/// Parameter layout: `τ_1`, `ln(τ_k − τ_{k−1})` for `k = 2..K−1`, metric
/// effects for every metric after the first, rater effects, then cell
/// effects when they are estimated.
pub struct RaschModel {
    k: usize,
    priors: RaschPriors,
    raters: Vec<String>,
    metrics: Vec<Metric>,
    cells: Vec<(String, Metric)>,
    obs: Vec<Obs>,
}

fn phi(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        (-0.5 * z * z).exp() / SQRT_2PI
    }
}

fn big_phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `Φ(hi) − Φ(lo)` computed on whichever tail keeps precision.
fn interval_prob(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        big_phi(-lo) - big_phi(-hi)
    } else {
        big_phi(hi) - big_phi(lo)
    }
}

impl RaschModel {
    pub fn new(data: &RaschData, priors: RaschPriors) -> Result<Self, EvalError> {
        if data.k < 2 {
            return Err(EvalError::Input(format!("need K >= 2 categories, got {}", data.k)));
        }
        if data.ratings.is_empty() {
            return Err(EvalError::Input("no ratings".into()));
        }
        if !(priors.sigma_u > 0.0) || priors.sigma_v.is_some_and(|s| !(s > 0.0)) || priors.tau_sd.is_some_and(|s| !(s > 0.0)) {
            return Err(EvalError::Input("prior standard deviations must be positive".into()));
        }
        let mut raters = BTreeSet::new();
        let mut metrics = BTreeSet::new();
        let mut cells = BTreeSet::new();
        for (row, r) in data.ratings.iter().enumerate() {
            if r.rating < 1 || r.rating > data.k {
                return Err(EvalError::Schema {
                    row: row + 1,
                    message: format!("rating {} outside 1..={}", r.rating, data.k),
                });
            }
            raters.insert(r.rater.clone());
            metrics.insert(r.metric);
            cells.insert((r.hypothesis.clone(), r.metric));
        }
        let raters: Vec<String> = raters.into_iter().collect();
        let metrics: Vec<Metric> = metrics.into_iter().collect();
        let cells: Vec<(String, Metric)> = cells.into_iter().collect();
        let obs = data
            .ratings
            .iter()
            .map(|r| Obs {
                rater: raters.binary_search(&r.rater).unwrap(),
                metric: metrics.binary_search(&r.metric).unwrap(),
                cell: cells.binary_search(&(r.hypothesis.clone(), r.metric)).unwrap(),
                cat: usize::from(r.rating - 1),
            })
            .collect();
        Ok(Self {
            k: usize::from(data.k),
            priors,
            raters,
            metrics,
            cells,
            obs,
        })
    }

    fn n_tau(&self) -> usize {
        self.k - 1
    }

    fn beta_off(&self) -> usize {
        self.n_tau()
    }

    fn u_off(&self) -> usize {
        self.beta_off() + self.metrics.len() - 1
    }

    fn v_off(&self) -> usize {
        self.u_off() + self.raters.len()
    }

    pub fn n_params(&self) -> usize {
        self.v_off() + if self.priors.sigma_v.is_some() { self.cells.len() } else { 0 }
    }

    pub fn thresholds(&self, theta: &[f64]) -> Vec<f64> {
        let mut tau = Vec::with_capacity(self.n_tau());
        let mut t = theta[0];
        tau.push(t);
        for inc in &theta[1..self.n_tau()] {
            t += inc.exp();
            tau.push(t);
        }
        tau
    }

    fn eta(&self, theta: &[f64], o: &Obs) -> f64 {
        let beta = if o.metric == 0 { 0.0 } else { theta[self.beta_off() + o.metric - 1] };
        let v = if self.priors.sigma_v.is_some() { theta[self.v_off() + o.cell] } else { 0.0 };
        beta + theta[self.u_off() + o.rater] + v
    }

    fn bounds(&self, tau: &[f64], cat: usize, eta: f64) -> (f64, f64) {
        let lo = if cat == 0 { f64::NEG_INFINITY } else { tau[cat - 1] - eta };
        let hi = if cat == self.k - 1 { f64::INFINITY } else { tau[cat] - eta };
        (lo, hi)
    }

    /// Category probabilities for one rater and cell index.
    pub fn category_probabilities(&self, theta: &[f64], eta: f64) -> Vec<f64> {
        let tau = self.thresholds(theta);
        (0..self.k)
            .map(|c| {
                let (lo, hi) = self.bounds(&tau, c, eta);
                interval_prob(lo, hi)
            })
            .collect()
    }

    /// Linear predictor for every observation, in input order.
    pub fn linear_predictors(&self, theta: &[f64]) -> Vec<f64> {
        self.obs.iter().map(|o| self.eta(theta, o)).collect()
    }

    pub fn log_posterior(&self, theta: &[f64]) -> f64 {
        let tau = self.thresholds(theta);
        let mut lp = 0.0;
        for o in &self.obs {
            let (lo, hi) = self.bounds(&tau, o.cat, self.eta(theta, o));
            lp += interval_prob(lo, hi).ln();
        }
        lp += self.log_prior(theta, &tau);
        lp
    }

    fn log_prior(&self, theta: &[f64], tau: &[f64]) -> f64 {
        let mut lp = 0.0;
        let su2 = self.priors.sigma_u.powi(2);
        for r in 0..self.raters.len() {
            lp -= theta[self.u_off() + r].powi(2) / (2.0 * su2);
        }
        if let Some(sv) = self.priors.sigma_v {
            for c in 0..self.cells.len() {
                lp -= theta[self.v_off() + c].powi(2) / (2.0 * sv * sv);
            }
        }
        if let Some(sd) = self.priors.tau_sd {
            lp -= tau.iter().map(|t| t * t).sum::<f64>() / (2.0 * sd * sd);
        }
        lp
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let tau = self.thresholds(theta);
        let mut g = vec![0.0; self.n_params()];
        let mut g_tau = vec![0.0; self.n_tau()];
        for o in &self.obs {
            let (lo, hi) = self.bounds(&tau, o.cat, self.eta(theta, o));
            let p = interval_prob(lo, hi);
            let (f_lo, f_hi) = (phi(lo), phi(hi));
            let d_eta = -(f_hi - f_lo) / p;
            if o.cat < self.k - 1 {
                g_tau[o.cat] += f_hi / p;
            }
            if o.cat > 0 {
                g_tau[o.cat - 1] -= f_lo / p;
            }
            if o.metric > 0 {
                g[self.beta_off() + o.metric - 1] += d_eta;
            }
            g[self.u_off() + o.rater] += d_eta;
            if self.priors.sigma_v.is_some() {
                g[self.v_off() + o.cell] += d_eta;
            }
        }
        if let Some(sd) = self.priors.tau_sd {
            for (gt, t) in g_tau.iter_mut().zip(&tau) {
                *gt -= t / (sd * sd);
            }
        }
        g[0] = g_tau.iter().sum();
        for l in 1..self.n_tau() {
            g[l] = theta[l].exp() * g_tau[l..].iter().sum::<f64>();
        }
        let su2 = self.priors.sigma_u.powi(2);
        for r in 0..self.raters.len() {
            g[self.u_off() + r] -= theta[self.u_off() + r] / su2;
        }
        if let Some(sv) = self.priors.sigma_v {
            for c in 0..self.cells.len() {
                g[self.v_off() + c] -= theta[self.v_off() + c] / (sv * sv);
            }
        }
        g
    }

    /// Hessian by central differences of the analytic gradient.
    pub fn hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let n = self.n_params();
        let mut h = DMatrix::zeros(n, n);
        let mut x = theta.to_vec();
        for j in 0..n {
            let step = 1e-5 * theta[j].abs().max(1.0);
            x[j] = theta[j] + step;
            let gp = self.gradient(&x);
            x[j] = theta[j] - step;
            let gm = self.gradient(&x);
            x[j] = theta[j];
            for i in 0..n {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        (&h + h.transpose()) * 0.5
    }

    /// Starting point: thresholds from the marginal category shares.
    pub fn initial(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.k];
        for o in &self.obs {
            counts[o.cat] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let mut theta = vec![0.0; self.n_params()];
        let mut cum = 0.0;
        let mut prev = f64::NAN;
        for k in 0..self.n_tau() {
            cum += counts[k];
            let p = ((cum + 0.5) / (total + 1.0)).clamp(1e-4, 1.0 - 1e-4);
            let t = normal.inverse_cdf(p);
            if k == 0 {
                theta[0] = t;
            } else {
                theta[k] = (t - prev).max(0.1).ln();
            }
            prev = if k == 0 { t } else { prev + theta[k].exp() };
        }
        theta
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["tau_1".to_string()];
        names.extend((2..self.k).map(|k| format!("log_tau_step_{k}")));
        names.extend(self.metrics.iter().skip(1).map(|m| format!("beta[{m}]")));
        names.extend(self.raters.iter().map(|r| format!("u[{r}]")));
        if self.priors.sigma_v.is_some() {
            names.extend(self.cells.iter().map(|(h, m)| format!("v[{h},{m}]")));
        }
        names
    }
}

/// MAP fit of the cumulative-probit rating model with Laplace standard
/// errors.
pub fn fit_rasch_map(data: &RaschData, priors: RaschPriors) -> Result<RaschFit, EvalError> {
    let model = RaschModel::new(data, priors)?;
    let mut warnings = Vec::new();
    let used: BTreeSet<usize> = model.obs.iter().map(|o| o.cat).collect();
    if used.len() == 1 {
        warnings.push("every rating falls in one category: thresholds diverge".into());
    } else if used.len() < model.k {
        let missing: Vec<String> = (1..=model.k).filter(|c| !used.contains(&(c - 1))).map(|c| c.to_string()).collect();
        warnings.push(format!("categories never used: {}", missing.join(", ")));
    }
    let res = maximize(
        |t| {
            let s = t.as_slice();
            Eval {
                value: model.log_posterior(s),
                grad: DVector::from_vec(model.gradient(s)),
                hess: model.hessian(s),
            }
        },
        DVector::from_vec(model.initial()),
        &NewtonOptions {
            tol: 1e-6,
            max_iter: 200,
            cap: Some(PARAM_CAP),
        },
    );
    if !res.converged {
        warnings.push(format!(
            "no convergence after {} iterations (gradient norm {:.3e})",
            res.iterations,
            res.eval.grad.norm()
        ));
    }
    let theta: Vec<f64> = res.x.iter().copied().collect();
    let info = -&res.eval.hess;
    if info.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::Fit("Hessian has non-finite entries".into()));
    }
    let cov = info
        .clone()
        .try_inverse()
        .or_else(|| info.pseudo_inverse(1e-12).ok())
        .ok_or_else(|| EvalError::Fit("Hessian is singular".into()))?;
    let laplace_se = model
        .param_names()
        .into_iter()
        .enumerate()
        .map(|(i, name)| ParamSe {
            name,
            estimate: theta[i],
            se: cov[(i, i)].max(0.0).sqrt(),
        })
        .collect();
    let tau = model.thresholds(&theta);
    let mut beta_m = BTreeMap::new();
    for (m, metric) in model.metrics.iter().enumerate() {
        let b = if m == 0 { 0.0 } else { theta[model.beta_off() + m - 1] };
        beta_m.insert(*metric, b);
    }
    let u = model
        .raters
        .iter()
        .enumerate()
        .map(|(r, name)| (name.clone(), theta[model.u_off() + r]))
        .collect();
    let v = model
        .cells
        .iter()
        .enumerate()
        .map(|(c, (h, m))| CellEffect {
            hypothesis: h.clone(),
            metric: *m,
            value: if priors.sigma_v.is_some() { theta[model.v_off() + c] } else { 0.0 },
        })
        .collect();
    Ok(RaschFit {
        k: data.k,
        tau,
        beta_m,
        u,
        v,
        laplace_se,
        logpost: res.eval.value,
        converged: res.converged,
        iterations: res.iterations,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(r: &str, h: &str, m: Metric, y: u8) -> Rating {
        Rating {
            rater: r.into(),
            hypothesis: h.into(),
            metric: m,
            rating: y,
        }
    }

    #[test]
    fn probabilities_normalise() {
        let data = RaschData {
            ratings: vec![rating("r", "h", Metric::Novelty, 2)],
            k: 5,
        };
        let m = RaschModel::new(&data, RaschPriors::default()).unwrap();
        let theta = m.initial();
        for eta in [-3.0, -0.2, 0.0, 1.7, 6.0] {
            let p = m.category_probabilities(&theta, eta);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_ratings_give_zero_effects() {
        let mut ratings = Vec::new();
        for r in ["r1", "r2"] {
            for h in ["h1", "h2", "h3"] {
                for m in [Metric::Novelty, Metric::Relevance] {
                    ratings.push(rating(r, h, m, 3));
                }
            }
        }
        let fit = fit_rasch_map(&RaschData { ratings, k: 5 }, RaschPriors::default()).unwrap();
        assert!(fit.u.values().all(|u| u.abs() < 1e-6));
        assert!(fit.v.iter().all(|c| c.value.abs() < 1e-6));
        assert!(fit.beta_m.values().all(|b| b.abs() < 1e-6));
        assert!(fit.tau.windows(2).all(|w| w[0] < w[1]));
        assert!(fit.warnings.iter().any(|w| w.contains("one category")));
    }

    #[test]
    fn out_of_range_rating_rejected() {
        let data = RaschData {
            ratings: vec![rating("r", "h", Metric::Novelty, 6)],
            k: 5,
        };
        assert!(matches!(
            RaschModel::new(&data, RaschPriors::default()),
            Err(EvalError::Schema { row: 1, .. })
        ));
    }
}
