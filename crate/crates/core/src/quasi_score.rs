//! Tridiagonal block covariances and the explicit Gaussian quasi-score.
//!
//! Conditionally on its anchor, the increment vector `U` of a block is close
//! to `N(0, a² K̃)` where `K̃` is tridiagonal with diagonal
//! `(v1, v1+v2, …, v1+v2, v2)` and constant off-diagonal `c`. The quadratic
//! form `Uᵀ K̃⁻¹ U` does not depend on θ, so it is computed once per block and
//! every score, information or likelihood evaluation afterwards is `O(L)`.

use crate::error::{domain, Error, Result};
use crate::measure::VCoefficients;
use crate::model::DiffusionModel;
use crate::simulate::BlockSet;
use crate::stats::pairwise_sum;

/// Symmetric tridiagonal matrix with a constant off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TriKMatrix {
    diag: Vec<f64>,
    off: f64,
}

/// `L D Lᵀ` factors of a [`TriKMatrix`].
#[derive(Debug, Clone)]
pub struct TriFactor {
    pivots: Vec<f64>,
    /// `multipliers[i]` is the sub-diagonal entry of `L` in row `i + 1`.
    multipliers: Vec<f64>,
}

impl TriKMatrix {
    pub fn new(diag: Vec<f64>, off: f64) -> Self {
        Self { diag, off }
    }

    /// `K̃` of size `k + 1`. For `k = 1` this is `[[v1, c], [c, v2]]`.
    pub fn k_tilde(k: usize, v: &VCoefficients) -> Result<Self> {
        if k == 0 {
            return domain("K̃ needs k >= 1");
        }
        let mut diag = vec![v.v1 + v.v2; k + 1];
        diag[0] = v.v1;
        diag[k] = v.v2;
        Ok(Self::new(diag, v.c))
    }

    /// Interior matrix `K̂` of size `k - 1`.
    pub fn k_hat(k: usize, v: &VCoefficients) -> Result<Self> {
        if k < 2 {
            return domain("K̂ needs k >= 2");
        }
        Ok(Self::new(vec![v.v1 + v.v2; k - 1], v.c))
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> f64 {
        self.off
    }

    /// `K x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.off * x[i - 1];
                }
                if i + 1 < n {
                    y += self.off * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Symmetric Thomas elimination; fails at the first non-positive pivot.
    pub fn factor(&self) -> Result<TriFactor> {
        let n = self.size();
        if n == 0 {
            return domain("empty tridiagonal matrix");
        }
        let mut pivots = Vec::with_capacity(n);
        let mut multipliers = Vec::with_capacity(n - 1);
        let mut d = self.diag[0];
        for i in 0..n {
            if i > 0 {
                let l = self.off / pivots[i - 1];
                multipliers.push(l);
                d = self.diag[i] - l * self.off;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { index: i, value: d });
            }
            pivots.push(d);
        }
        Ok(TriFactor {
            pivots,
            multipliers,
        })
    }

    /// Solve `K x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.factor()?.solve(rhs)
    }

    /// `uᵀ K⁻¹ u`.
    pub fn quadratic_form(&self, u: &[f64]) -> Result<f64> {
        self.factor()?.quadratic_form(u)
    }
}

impl TriFactor {
    pub fn size(&self) -> usize {
        self.pivots.len()
    }

    pub fn log_det(&self) -> f64 {
        self.pivots.iter().map(|d| d.ln()).sum()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len == self.size() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.size(),
                got: len,
            })
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check(rhs.len())?;
        let n = self.size();
        let mut x = rhs.to_vec();
        for i in 1..n {
            x[i] -= self.multipliers[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.pivots[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.multipliers[i] * x[i + 1];
        }
        Ok(x)
    }

    pub fn quadratic_form(&self, u: &[f64]) -> Result<f64> {
        self.check(u.len())?;
        let mut prev = 0.0;
        let mut acc = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            let y = if i == 0 {
                ui
            } else {
                ui - self.multipliers[i - 1] * prev
            };
            acc += y * y / self.pivots[i];
            prev = y;
        }
        Ok(acc)
    }
}

/// Factors of `K̃` (or `K̂`) for every block size that occurs.
#[derive(Debug, Clone)]
pub struct FactorCache {
    v: VCoefficients,
    interior: bool,
    factors: Vec<Option<TriFactor>>,
}

impl FactorCache {
    pub fn tilde(v: VCoefficients) -> Self {
        Self {
            v,
            interior: false,
            factors: Vec::new(),
        }
    }

    pub fn hat(v: VCoefficients) -> Self {
        Self {
            v,
            interior: true,
            factors: Vec::new(),
        }
    }

    /// Factor for a vector of dimension `dim`.
    pub fn get(&mut self, dim: usize) -> Result<&TriFactor> {
        if self.factors.len() <= dim {
            self.factors.resize(dim + 1, None);
        }
        if self.factors[dim].is_none() {
            let matrix = if self.interior {
                TriKMatrix::k_hat(dim + 1, &self.v)?
            } else {
                TriKMatrix::k_tilde(dim.saturating_sub(1), &self.v)?
            };
            self.factors[dim] = Some(matrix.factor()?);
        }
        Ok(self.factors[dim].as_ref().expect("filled above"))
    }
}

/// θ-free summary of one block: anchor, dimension of the increment vector
/// and its quadratic form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockForm {
    pub anchor: f64,
    pub dim: usize,
    pub form: f64,
}

impl BlockForm {
    /// Block score `(ȧ/a)(x, θ₀) { q / a(x, θ)² - dim }`.
    pub fn xi(&self, model: &DiffusionModel, theta: f64, theta0: f64) -> f64 {
        let a = model.a(self.anchor, theta);
        model.score_ratio(self.anchor, theta0) * (self.form / (a * a) - self.dim as f64)
    }

    /// `∂θ` of [`BlockForm::xi`]: `(ȧ/a)(x, θ₀) (-2 ȧ / a³)(x, θ) q`.
    pub fn xi_dtheta(&self, model: &DiffusionModel, theta: f64, theta0: f64) -> f64 {
        let a = model.a(self.anchor, theta);
        let a_dot = model.a_dot(self.anchor, theta);
        model.score_ratio(self.anchor, theta0) * (-2.0 * a_dot / (a * a * a)) * self.form
    }

    /// `-½ [dim · log a² + q / a²]`.
    pub fn loglik(&self, model: &DiffusionModel, theta: f64) -> f64 {
        let a2 = model.a(self.anchor, theta).powi(2);
        -0.5 * (self.dim as f64 * a2.ln() + self.form / a2)
    }
}

/// Aggregate statistics `N_n = u_n Σ ξ_l(θ₀)` and `I_n = -u_n² Σ ξ̇_l(θ₀)`
/// with `u_n = n^{-1/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreInfo {
    pub score: f64,
    pub info: f64,
}

/// Block forms of a whole data set, either from the augmented observation
/// (`K̃`, dimension `k_l + 1`) or from local means only (`K̂`, dimension
/// `k_l - 1`).
#[derive(Debug, Clone)]
pub struct BlockForms {
    pub n: usize,
    pub forms: Vec<BlockForm>,
}

impl BlockForms {
    pub fn augmented(blocks: &BlockSet, v: &VCoefficients) -> Result<Self> {
        let mut cache = FactorCache::tilde(*v);
        let forms = blocks
            .blocks
            .iter()
            .map(|b| {
                let u = &b.increments;
                Ok(BlockForm {
                    anchor: b.anchor,
                    dim: u.len(),
                    form: cache.get(u.len())?.quadratic_form(u)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { n: blocks.n, forms })
    }

    /// Means-only blocks: interior increments `√n (X̄_{kl+j} - X̄_{kl+j-1})`,
    /// `1 ≤ j ≤ k_l - 1`, anchored at `X̄_{kl-1}` (`ξ₀` for the first block).
    /// Blocks with a single mean carry no interior increment and are skipped.
    pub fn observed(observations: &[f64], xi0: f64, k: usize, v: &VCoefficients) -> Result<Self> {
        let n = observations.len();
        if k < 2 {
            return domain("means-only quasi-score needs k >= 2");
        }
        if k > n {
            return domain(format!("block length k = {k} exceeds n = {n}"));
        }
        let rn = (n as f64).sqrt();
        let mut cache = FactorCache::hat(*v);
        let mut forms = Vec::with_capacity(n / k + 1);
        let mut u = Vec::with_capacity(k);
        for start in (0..n).step_by(k) {
            let end = (start + k).min(n);
            if end - start < 2 {
                continue;
            }
            u.clear();
            u.extend(observations[start..end].windows(2).map(|w| rn * (w[1] - w[0])));
            let anchor = if start == 0 {
                xi0
            } else {
                observations[start - 1]
            };
            forms.push(BlockForm {
                anchor,
                dim: u.len(),
                form: cache.get(u.len())?.quadratic_form(&u)?,
            });
        }
        Ok(Self { n, forms })
    }

    pub fn total_dim(&self) -> usize {
        self.forms.iter().map(|f| f.dim).sum()
    }

    pub fn total_form(&self) -> f64 {
        pairwise_sum(&self.forms.iter().map(|f| f.form).collect::<Vec<_>>())
    }

    fn sum_by(&self, f: impl Fn(&BlockForm) -> f64) -> f64 {
        let terms: Vec<f64> = self.forms.iter().map(f).collect();
        pairwise_sum(&terms)
    }

    pub fn score_and_info(&self, model: &DiffusionModel, theta0: f64) -> ScoreInfo {
        let rn = (self.n as f64).sqrt();
        ScoreInfo {
            score: self.sum_by(|b| b.xi(model, theta0, theta0)) / rn,
            info: -self.sum_by(|b| b.xi_dtheta(model, theta0, theta0)) / self.n as f64,
        }
    }

    /// Quasi-log-likelihood, additive θ-free constants dropped.
    pub fn loglik(&self, model: &DiffusionModel, theta: f64) -> f64 {
        self.sum_by(|b| b.loglik(model, theta))
    }

    /// `∂θ` of [`BlockForms::loglik`]: `Σ ξ_l` with prefactor at θ.
    pub fn score(&self, model: &DiffusionModel, theta: f64) -> f64 {
        self.sum_by(|b| b.xi(model, theta, theta))
    }

    /// `-Σ ξ̇_l(θ)` at `θ₀ = θ`, i.e. `Σ 2 (ȧ/a)² q / a²`; unnormalized.
    pub fn info(&self, model: &DiffusionModel, theta: f64) -> f64 {
        -self.sum_by(|b| b.xi_dtheta(model, theta, theta))
    }
}

fn block_form(u: &[f64], anchor: f64, matrix: TriKMatrix) -> Result<BlockForm> {
    Ok(BlockForm {
        anchor,
        dim: u.len(),
        form: matrix.quadratic_form(u)?,
    })
}

/// Block score `ξ` for increments `U_0..U_k` anchored at `X_{kl/n}`.
pub fn xi(
    u: &[f64],
    anchor: f64,
    theta: f64,
    theta0: f64,
    model: &DiffusionModel,
    v: &VCoefficients,
) -> Result<f64> {
    let k = u.len().saturating_sub(1);
    Ok(block_form(u, anchor, TriKMatrix::k_tilde(k, v)?)?.xi(model, theta, theta0))
}

pub fn xi_dtheta(
    u: &[f64],
    anchor: f64,
    theta: f64,
    theta0: f64,
    model: &DiffusionModel,
    v: &VCoefficients,
) -> Result<f64> {
    let k = u.len().saturating_sub(1);
    Ok(block_form(u, anchor, TriKMatrix::k_tilde(k, v)?)?.xi_dtheta(model, theta, theta0))
}

/// Observable block score from interior increments `U_1..U_{k-1}`, anchored
/// at `X̄_{kl-1}`.
pub fn xi_obs(
    u_interior: &[f64],
    anchor_obs: f64,
    theta: f64,
    theta0: f64,
    model: &DiffusionModel,
    v: &VCoefficients,
) -> Result<f64> {
    let matrix = TriKMatrix::k_hat(u_interior.len() + 1, v)?;
    Ok(block_form(u_interior, anchor_obs, matrix)?.xi(model, theta, theta0))
}

/// `(N_n^aug, I_n^aug)` at `θ₀`.
pub fn score_and_info(
    blocks: &BlockSet,
    theta0: f64,
    model: &DiffusionModel,
    v: &VCoefficients,
) -> Result<ScoreInfo> {
    Ok(BlockForms::augmented(blocks, v)?.score_and_info(model, theta0))
}

pub fn quasi_loglik(
    blocks: &BlockSet,
    theta: f64,
    model: &DiffusionModel,
    v: &VCoefficients,
) -> Result<f64> {
    Ok(BlockForms::augmented(blocks, v)?.loglik(model, theta))
}
