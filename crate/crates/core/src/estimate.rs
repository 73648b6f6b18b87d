//! Quasi-likelihood point estimation of θ.
//!
//! The maximizer of the quasi-log-likelihood is found as a root of its
//! θ-score `S(θ) = Σ_l (ȧ/a)(x_l, θ) { q_l / a(x_l, θ)² - d_l }` by
//! Newton steps `θ ← θ + S(θ) / J(θ)` with `J(θ) = Σ_l 2 (ȧ/a)² q_l / a²`,
//! safeguarded by bisection on a sign-change bracket inside Θ.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::measure::VCoefficients;
use crate::model::DiffusionModel;
use crate::quasi_score::BlockForms;
use crate::simulate::BlockSet;

pub const SCORE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub theta_hat: f64,
    pub iterations: usize,
    pub score_at_hat: f64,
    /// Observed information `J(θ̂) / n`.
    pub info_at_hat: f64,
    pub boundary_hit: bool,
}

/// Maximize the augmented quasi-log-likelihood (blocks with `K̃`).
pub fn estimate_augmented(
    blocks: &BlockSet,
    model: &DiffusionModel,
    v: &VCoefficients,
    theta_init: Option<f64>,
) -> Result<EstimateResult> {
    let forms = BlockForms::augmented(blocks, v)?;
    maximize(&forms, model, theta_init)
}

/// Maximize the means-only quasi-log-likelihood (interior increments, `K̂`).
pub fn estimate_means_only(
    observations: &[f64],
    xi0: f64,
    model: &DiffusionModel,
    v: &VCoefficients,
    k: usize,
    theta_init: Option<f64>,
) -> Result<EstimateResult> {
    let forms = BlockForms::observed(observations, xi0, k, v)?;
    maximize(&forms, model, theta_init)
}

/// Safeguarded Newton on the quasi-score over Θ.
pub fn maximize(
    forms: &BlockForms,
    model: &DiffusionModel,
    theta_init: Option<f64>,
) -> Result<EstimateResult> {
    let interval = model.theta_interval;
    let init = theta_init.unwrap_or_else(|| interval.midpoint());
    model.check_theta(init)?;
    if forms.forms.is_empty() {
        return domain("no blocks to estimate from");
    }
    let score = |t: f64| forms.score(model, t);
    let result = |theta: f64, iterations: usize, boundary_hit: bool| EstimateResult {
        theta_hat: theta,
        iterations,
        score_at_hat: score(theta),
        info_at_hat: forms.info(model, theta) / forms.n as f64,
        boundary_hit,
    };

    let s_init = score(init);
    if s_init.abs() <= SCORE_TOL {
        return Ok(result(init, 0, false));
    }
    let (s_lo, s_hi) = (score(interval.lo), score(interval.hi));
    if !(s_lo > 0.0 && s_hi < 0.0) {
        // no interior maximum bracketed: report the better endpoint
        let (l_lo, l_hi) = (forms.loglik(model, interval.lo), forms.loglik(model, interval.hi));
        let theta = if l_hi > l_lo { interval.hi } else { interval.lo };
        return Ok(result(theta, 0, true));
    }

    let (mut lo, mut hi) = (interval.lo, interval.hi);
    let mut theta = init;
    let mut s = s_init;
    for iter in 1..=MAX_ITER {
        if s > 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        let info = forms.info(model, theta);
        let newton = theta + s / info;
        let mut next = if newton > lo && newton < hi && info > 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let mut s_next = score(next);
        if s_next.abs() >= s.abs() && next != 0.5 * (lo + hi) {
            next = 0.5 * (lo + hi);
            s_next = score(next);
        }
        theta = next;
        s = s_next;
        if s.abs() <= SCORE_TOL || hi - lo <= 4.0 * f64::EPSILON * theta.abs() {
            return Ok(result(theta, iter, false));
        }
    }
    Ok(result(theta, MAX_ITER, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::WeightMeasure;
    use crate::model::by_name;
    use crate::simulate::{augment, observe, simulate_path};

    #[test]
    fn multiplicative_closed_form() {
        let model = by_name("multiplicative_bm").unwrap();
        let leb = WeightMeasure::lebesgue();
        let v = leb.v_coefficients();
        let path = simulate_path(model, 1.5, 0.0, 256, 8, 21).unwrap();
        let obs = observe(&path, &leb);
        let blocks = augment(&path, &obs, 10).unwrap();
        let est = estimate_augmented(&blocks, model, &v, None).unwrap();
        let forms = BlockForms::augmented(&blocks, &v).unwrap();
        let closed = (forms.total_form() / forms.total_dim() as f64).sqrt();
        assert!((est.theta_hat - closed).abs() < 1e-8, "{} vs {closed}", est.theta_hat);
        assert!(!est.boundary_hit);
        assert!(est.score_at_hat.abs() <= SCORE_TOL);

        let again = estimate_augmented(&blocks, model, &v, Some(est.theta_hat)).unwrap();
        assert_eq!(again.iterations, 0);
        assert_eq!(again.theta_hat, est.theta_hat);
    }

    #[test]
    fn boundary_when_data_too_small() {
        let model = by_name("multiplicative_bm").unwrap();
        let leb = WeightMeasure::lebesgue();
        let v = leb.v_coefficients();
        let path = simulate_path(model, 0.5, 0.0, 64, 4, 3).unwrap();
        let obs: Vec<f64> = observe(&path, &leb).iter().map(|x| 0.1 * x).collect();
        let est = estimate_means_only(&obs, 0.0, model, &v, 8, None).unwrap();
        assert!(est.boundary_hit);
        assert_eq!(est.theta_hat, 0.5);
    }
}
