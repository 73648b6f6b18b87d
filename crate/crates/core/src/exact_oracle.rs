//! Exact Gaussian likelihood of local means of `θ B` (multiplicative
//! Brownian model started at zero).
//!
//! The observation vector is `N(0, θ² Σ₀)` with
//! `Σ₀[i, j] = ∫∫ min((s+i)/n, (t+j)/n) dμ(s) dμ(t)`. `Σ₀` is dense, but
//! the differenced vector `(X̄_0, X̄_1 - X̄_0, …)` has a tridiagonal
//! covariance `T` (increments of `B` over disjoint cells are independent and
//! consecutive means share one cell). The transform has unit determinant,
//! so `xᵀ Σ₀⁻¹ x = Dᵀ T⁻¹ D` and `det Σ₀ = det T`. Large `n` therefore costs
//! `O(n)` per evaluation; the dense route is kept for cross-checks.

use nalgebra::DMatrix;

use crate::error::{domain, Error, Result};
use crate::measure::WeightMeasure;

#[derive(Debug, Clone)]
pub struct GaussianObsModel {
    n: usize,
    measure: WeightMeasure,
    pivots: Vec<f64>,
    multipliers: Vec<f64>,
    log_det: f64,
}

/// `E[min(S + i, T + j)]` for `S, T` independent with law `μ`.
fn expected_min(measure: &WeightMeasure, i: usize, j: usize) -> f64 {
    let lam = measure.lebesgue_weight();
    let (fi, fj) = (i as f64, j as f64);
    let mut acc = 0.0;
    if lam > 0.0 {
        let ll = if i == j { fi + 1.0 / 3.0 } else { fi.min(fj) + 0.5 };
        acc += lam * lam * ll;
    }
    for a in measure.atoms() {
        if lam > 0.0 {
            acc += lam * a.weight * (lebesgue_vs_atom(i, j, a.position) + lebesgue_vs_atom(j, i, a.position));
        }
        for b in measure.atoms() {
            acc += a.weight * b.weight * (a.position + fi).min(b.position + fj);
        }
    }
    acc
}

/// `E[min(S + i, α + j)]` with `S` uniform on `[0, 1]`.
fn lebesgue_vs_atom(i: usize, j: usize, alpha: f64) -> f64 {
    let (fi, fj) = (i as f64, j as f64);
    match i.cmp(&j) {
        std::cmp::Ordering::Less => fi + 0.5,
        std::cmp::Ordering::Greater => fj + alpha,
        std::cmp::Ordering::Equal => fi + alpha - 0.5 * alpha * alpha,
    }
}

impl GaussianObsModel {
    pub fn build(n: usize, measure: &WeightMeasure) -> Result<Self> {
        if n == 0 {
            return domain("oracle needs n >= 1");
        }
        let mut model = Self {
            n,
            measure: measure.clone(),
            pivots: Vec::with_capacity(n),
            multipliers: Vec::with_capacity(n.saturating_sub(1)),
            log_det: 0.0,
        };
        for i in 0..n {
            let mut d = model.innovation_cov(i, i);
            if i > 0 {
                let off = model.innovation_cov(i, i - 1);
                let l = off / model.pivots[i - 1];
                model.multipliers.push(l);
                d -= l * off;
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { index: i, value: d });
            }
            model.pivots.push(d);
        }
        model.log_det = model.pivots.iter().map(|d| d.ln()).sum();
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `Σ₀[i, j]`.
    pub fn base_cov_entry(&self, i: usize, j: usize) -> f64 {
        expected_min(&self.measure, i.min(j), i.max(j)) / self.n as f64
    }

    fn base_or_zero(&self, i: isize, j: isize) -> f64 {
        if i < 0 || j < 0 {
            0.0
        } else {
            self.base_cov_entry(i as usize, j as usize)
        }
    }

    /// Covariance of the differenced observations `D_i = X̄_i - X̄_{i-1}`
    /// (`X̄_{-1} = 0`), unit θ.
    pub fn innovation_cov(&self, i: usize, j: usize) -> f64 {
        let (i, j) = (i as isize, j as isize);
        self.base_or_zero(i, j) - self.base_or_zero(i - 1, j) - self.base_or_zero(i, j - 1)
            + self.base_or_zero(i - 1, j - 1)
    }

    pub fn dense_base_cov(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.base_cov_entry(i, j))
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `xᵀ Σ₀⁻¹ x`.
    pub fn quadratic(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut acc = 0.0;
        let mut prev_y = 0.0;
        for i in 0..self.n {
            let d = if i == 0 { x[0] } else { x[i] - x[i - 1] };
            let y = if i == 0 {
                d
            } else {
                d - self.multipliers[i - 1] * prev_y
            };
            acc += y * y / self.pivots[i];
            prev_y = y;
        }
        Ok(acc)
    }

    pub fn log_density(&self, theta: f64, x: &[f64]) -> Result<f64> {
        if !(theta > 0.0) {
            return domain(format!("θ = {theta} must be positive"));
        }
        let q = self.quadratic(x)?;
        let nf = self.n as f64;
        Ok(-0.5
            * (nf * (2.0 * std::f64::consts::PI * theta * theta).ln()
                + self.log_det
                + q / (theta * theta)))
    }

    /// `log Z = log p(θ₁; x) - log p(θ₀; x)`.
    pub fn exact_llr(&self, x: &[f64], theta0: f64, theta1: f64) -> Result<f64> {
        if !(theta0 > 0.0 && theta1 > 0.0) {
            return domain(format!("θ₀ = {theta0}, θ₁ = {theta1} must be positive"));
        }
        let q = self.quadratic(x)?;
        let nf = self.n as f64;
        Ok(-nf * (theta1 / theta0).ln()
            - 0.5 * q * (1.0 / (theta1 * theta1) - 1.0 / (theta0 * theta0)))
    }

    /// Maximum likelihood estimate `sqrt(xᵀ Σ₀⁻¹ x / n)`.
    pub fn exact_mle(&self, x: &[f64]) -> Result<f64> {
        let q = self.quadratic(x)?;
        if q == 0.0 {
            return Err(Error::Degenerate("all observations are zero".into()));
        }
        Ok((q / self.n as f64).sqrt())
    }
}

/// Alias for [`GaussianObsModel::build`].
pub fn build_base_cov(n: usize, measure: &WeightMeasure) -> Result<GaussianObsModel> {
    GaussianObsModel::build(n, measure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lebesgue_entries() {
        let gm = GaussianObsModel::build(2, &WeightMeasure::lebesgue()).unwrap();
        assert_abs_diff_eq!(gm.base_cov_entry(0, 0), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gm.base_cov_entry(0, 1), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(gm.base_cov_entry(1, 1), (1.0 + 1.0 / 3.0) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn dirac_variance() {
        let gm = GaussianObsModel::build(1, &WeightMeasure::dirac(0.3).unwrap()).unwrap();
        assert_abs_diff_eq!(gm.base_cov_entry(0, 0), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(gm.exact_mle(&[-1.7]).unwrap(), 1.7 / 0.3f64.sqrt(), epsilon = 1e-12);
        let end = GaussianObsModel::build(1, &WeightMeasure::atomic(vec![(0.5, 0.5), (1.0, 0.5)]).unwrap()).unwrap();
        assert!(end.base_cov_entry(0, 0) > 0.0);
    }

    #[test]
    fn scalar_density() {
        let gm = GaussianObsModel::build(1, &WeightMeasure::lebesgue()).unwrap();
        let x = [(1.0f64 / 3.0).sqrt()];
        let lp = gm.log_density(1.0, &x).unwrap();
        let expected = -0.5 * ((2.0 * std::f64::consts::PI / 3.0).ln() + 1.0);
        assert_abs_diff_eq!(lp, expected, epsilon = 1e-14);
        assert!(gm.log_density(0.0, &x).is_err());
        assert!(gm.log_density(1.0, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn llr_identities() {
        let gm = GaussianObsModel::build(5, &WeightMeasure::lebesgue()).unwrap();
        let x = [0.1, -0.3, 0.2, 0.5, 0.4];
        assert_eq!(gm.exact_llr(&x, 1.3, 1.3).unwrap(), 0.0);
        let a = gm.exact_llr(&x, 1.0, 1.4).unwrap();
        let b = gm.exact_llr(&x, 1.4, 1.0).unwrap();
        assert_abs_diff_eq!(a, -b, epsilon = 1e-14);
        let direct = gm.log_density(1.4, &x).unwrap() - gm.log_density(1.0, &x).unwrap();
        assert_abs_diff_eq!(a, direct, epsilon = 1e-12);
        assert!(matches!(gm.exact_mle(&[0.0; 5]), Err(Error::Degenerate(_))));
    }
}
