//! Seeded synthetic data with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distributions::Distribution;
use statrs::distribution::Normal;

use super::{logistic, ComparisonRecord, Outcome, Rating};
use crate::model::Metric;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSpec {
    /// System ids with their true abilities.
    pub systems: Vec<(String, f64)>,
    pub alpha: f64,
    pub n: usize,
    pub tie_rate: f64,
    pub metric: Metric,
    pub seed: u64,
}

impl ComparisonSpec {
    /// Five systems with abilities −1, −0.5, 0, 0.5, 1, an order effect of
    /// 0.4, 2000 comparisons and 10% ties.
    pub fn standard() -> Self {
        Self {
            systems: [-1.0, -0.5, 0.0, 0.5, 1.0]
                .iter()
                .enumerate()
                .map(|(i, &b)| (format!("S{}", i + 1), b))
                .collect(),
            alpha: 0.4,
            n: 2000,
            tie_rate: 0.1,
            metric: Metric::Novelty,
            seed: 7,
        }
    }
}

/// Draws comparisons between uniformly chosen pairs in random order. The
/// first-presented system wins with probability `p − t/2`, loses with
/// `1 − p − t/2` and ties with `t`, where `p = σ(α + β_first − β_second)`.
/// Ties are taken evenly from both sides, so the expected half-win share
/// of the first system is exactly `p`.
pub fn generate_comparisons(spec: &ComparisonSpec) -> Vec<ComparisonRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.systems.len();
    assert!(k >= 2, "need at least two systems");
    let mut out = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let i = rng.gen_range(0..k);
        let mut j = rng.gen_range(0..k - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (&spec.systems[i], &spec.systems[j]);
        let p = logistic(spec.alpha + a.1 - b.1);
        let t = spec.tie_rate.min(2.0 * p).min(2.0 * (1.0 - p));
        let u: f64 = rng.gen();
        let outcome = if u < p - t / 2.0 {
            Outcome::FirstWins
        } else if u < p + t / 2.0 {
            Outcome::Tie
        } else {
            Outcome::SecondWins
        };
        out.push(ComparisonRecord::new(a.0.clone(), b.0.clone(), spec.metric, outcome));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingSpec {
    pub raters: usize,
    pub hypotheses: usize,
    pub metrics: Vec<Metric>,
    pub k: u8,
    pub tau: Vec<f64>,
    pub beta_m: Vec<f64>,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub seed: u64,
}

impl RatingSpec {
    pub fn small() -> Self {
        Self {
            raters: 4,
            hypotheses: 6,
            metrics: vec![Metric::Novelty, Metric::Verifiability],
            k: 5,
            tau: vec![-1.5, -0.5, 0.5, 1.5],
            beta_m: vec![0.0, 0.3],
            sigma_u: 0.5,
            sigma_v: 0.7,
            seed: 7,
        }
    }
}

/// Every rater rates every hypothesis on every metric under the
/// cumulative-probit model.
pub fn generate_ratings(spec: &RatingSpec) -> Vec<Rating> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let u: Vec<f64> = (0..spec.raters).map(|_| spec.sigma_u * std.sample(&mut rng)).collect();
    let v: Vec<Vec<f64>> = (0..spec.hypotheses)
        .map(|_| spec.metrics.iter().map(|_| spec.sigma_v * std.sample(&mut rng)).collect())
        .collect();
    let mut out = Vec::new();
    for (r, ur) in u.iter().enumerate() {
        for (h, vh) in v.iter().enumerate() {
            for (m, metric) in spec.metrics.iter().enumerate() {
                let latent = spec.beta_m[m] + ur + vh[m] + std.sample(&mut rng);
                let cat = spec.tau.iter().take_while(|&&t| latent > t).count() + 1;
                out.push(Rating {
                    rater: format!("R{}", r + 1),
                    hypothesis: format!("H{}", h + 1),
                    metric: *metric,
                    rating: cat.min(usize::from(spec.k)) as u8,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_is_reproducible() {
        let s = ComparisonSpec::standard();
        assert_eq!(generate_comparisons(&s), generate_comparisons(&s));
        let ties = generate_comparisons(&s)
            .iter()
            .filter(|r| r.outcome == Outcome::Tie)
            .count();
        assert!((150..250).contains(&ties), "{ties} ties");
    }
}
