use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{replicate, ExperimentConfig, KRule, Row};
use crate::error::{Error, Result};
use crate::estimate::maximize;
use crate::exact_oracle::GaussianObsModel;
use crate::quasi_score::BlockForms;
use crate::rng::replication_stream;
use crate::simulate::{
    augment, block_increments, gaussian_coupled_increments, observe, simulate_cells,
};
use crate::stats::{excess_kurtosis, linear_fit, mean, skewness, LinearFit, Summary};

/// Stream tag separating sample sizes and experiments that share a seed.
fn tag(n: usize, salt: u64) -> u64 {
    ((n as u64) << 8) ^ salt
}

/// Information inflation of the augmented model: `(k+1)/k` for a fixed
/// block length, `1` when `k_n → ∞`.
fn augmentation_factor(rule: KRule, k: usize) -> f64 {
    match rule {
        KRule::Fixed(_) => (k as f64 + 1.0) / k as f64,
        KRule::Log2 => 1.0,
    }
}

fn mean_row(stat: &str, n: usize, k: usize, xs: &[f64]) -> Row {
    let s = Summary::of(xs);
    Row::new(stat, n, k, s.mean).se(s.mean_se)
}

fn var_row(stat: &str, n: usize, k: usize, xs: &[f64]) -> Row {
    let s = Summary::of(xs);
    Row::new(stat, n, k, s.variance).se(s.variance_se)
}

/// Log-likelihood expansion: exact `log Z_{θ₀, θ₀+h/√n}` (Gaussian models
/// only) against the observable quasi pair `(N_n, I_n)`.
pub fn run_expansion(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<Row>> {
    let model = cfg.model()?;
    let v = cfg.measure.v_coefficients();
    let theta0 = cfg.theta0;
    let mut rows = Vec::new();
    let mut residuals: Vec<(f64, f64)> = Vec::new();

    for &n in &cfg.n {
        let k = cfg.k.block_len(n);
        if k < 2 {
            return Err(Error::Config("the observable quasi-score needs k >= 2".into()));
        }
        let theta1 = theta0 + cfg.h / (n as f64).sqrt();
        let oracle = if model.gaussian {
            Some(GaussianObsModel::build(n, &cfg.measure)?)
        } else {
            None
        };
        let reps = replicate(workers, cfg.replications, |r| {
            let mut rng = replication_stream(cfg.seed, tag(n, 1), r);
            let path = simulate_cells(model, theta0, cfg.xi0, n, cfg.m, n, &mut rng)?;
            let obs = observe(&path, &cfg.measure);
            let si = BlockForms::observed(&obs, cfg.xi0, k, &v)?.score_and_info(model, theta0);
            let info = model.path_information(&path, theta0)?;
            let logz = match &oracle {
                Some(o) => {
                    let centered: Vec<f64> = obs.iter().map(|x| x - cfg.xi0).collect();
                    Some(o.exact_llr(&centered, theta0, theta1)?)
                }
                None => None,
            };
            Ok((si.score, si.info, info, logz))
        })?;

        let score: Vec<f64> = reps.iter().map(|r| r.0).collect();
        let info: Vec<f64> = reps.iter().map(|r| r.1).collect();
        let path_info: Vec<f64> = reps.iter().map(|r| r.2).collect();
        let target_info = mean(&path_info);
        rows.push(mean_row("mean_N", n, k, &score).reference(0.0));
        rows.push(var_row("var_N", n, k, &score).reference(target_info));
        rows.push(mean_row("mean_I", n, k, &info).reference(target_info));
        rows.push(mean_row("mean_path_info", n, k, &path_info));

        if oracle.is_some() {
            let h = cfg.h;
            let logz: Vec<f64> = reps.iter().filter_map(|r| r.3).collect();
            let abs_res: Vec<f64> = reps
                .iter()
                .map(|r| (r.3.unwrap_or(0.0) - (h * r.0 - 0.5 * h * h * r.1)).abs())
                .collect();
            rows.push(mean_row("mean_logz", n, k, &logz).reference(-0.5 * h * h * target_info));
            rows.push(var_row("var_logz", n, k, &logz).reference(h * h * target_info));
            let res = Summary::of(&abs_res);
            rows.push(Row::new("mean_abs_residual", n, k, res.mean).se(res.mean_se));
            residuals.push((res.mean, res.mean_se));
        }
    }

    if residuals.len() >= 2 {
        let non_increasing = residuals
            .windows(2)
            .all(|w| w[1].0 <= w[0].0 + 2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
        let n = *cfg.n.last().expect("validated non-empty");
        rows.push(Row::indicator("residual_trend", n, cfg.k.block_len(n), non_increasing));
    }
    Ok(rows)
}

/// Augmented information `I_n^aug` and the spread of `N_n^aug` against
/// `2 (k+1)/k ∫ (ȧ/a)²` (fixed `k`) or `2 ∫ (ȧ/a)²` (growing `k`).
pub fn run_information(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<Row>> {
    let model = cfg.model()?;
    let v = cfg.measure.v_coefficients();
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let k = cfg.k.block_len(n);
        let reps = replicate(workers, cfg.replications, |r| {
            let mut rng = replication_stream(cfg.seed, tag(n, 2), r);
            let path = simulate_cells(model, cfg.theta0, cfg.xi0, n, cfg.m, n, &mut rng)?;
            let obs = observe(&path, &cfg.measure);
            let blocks = augment(&path, &obs, k)?;
            let si = BlockForms::augmented(&blocks, &v)?.score_and_info(model, cfg.theta0);
            Ok((si.score, si.info, model.path_information(&path, cfg.theta0)?))
        })?;
        let score: Vec<f64> = reps.iter().map(|r| r.0).collect();
        let info: Vec<f64> = reps.iter().map(|r| r.1).collect();
        let path_info: Vec<f64> = reps.iter().map(|r| r.2).collect();
        let target = augmentation_factor(cfg.k, k) * mean(&path_info);
        rows.push(mean_row("mean_info", n, k, &info).reference(target));
        rows.push(var_row("var_N", n, k, &score).reference(target));
        rows.push(mean_row("mean_N", n, k, &score).reference(0.0));
        rows.push(mean_row("mean_path_info", n, k, &path_info));
    }
    Ok(rows)
}

/// Distance between the increments of the first block and their Gaussian
/// coupling, and its decay rate in `n`.
pub fn run_coupling(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<Row>> {
    let model = cfg.model()?;
    let mut rows = Vec::new();
    let mut log_n = Vec::new();
    let mut log_err = Vec::new();
    let mut max_err: f64 = 0.0;
    for &n in &cfg.n {
        let k = cfg.k.block_len(n);
        let errs = replicate(workers, cfg.replications, |r| {
            let mut rng = replication_stream(cfg.seed, tag(n, 4), r);
            let path = simulate_cells(model, cfg.theta0, cfg.xi0, n, cfg.m, k, &mut rng)?;
            let obs = observe(&path, &cfg.measure);
            let u = block_increments(&path, &obs, k, 0)?;
            let coupled = gaussian_coupled_increments(&path, k, 0, &cfg.measure, model, cfg.theta0)?;
            Ok(u.iter()
                .zip(&coupled)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max))
        })?;
        let s = Summary::of(&errs);
        max_err = errs.iter().copied().fold(max_err, f64::max);
        rows.push(Row::new("mean_err", n, k, s.mean).se(s.mean_se));
        log_n.push((n as f64).ln());
        log_err.push(s.mean.ln());
    }
    let n = *cfg.n.last().expect("validated non-empty");
    let k = cfg.k.block_len(n);
    if model.gaussian {
        rows.push(Row::new("max_err", n, k, max_err).reference(0.0));
        rows.push(Row::indicator("exact_coupling", n, k, max_err <= 1e-10));
    } else if log_n.len() >= 2 {
        let fit = linear_fit(&log_n, &log_err);
        rows.push(Row::new("slope", n, k, fit.slope).se(fit.slope_se).reference(-0.5));
        rows.push(Row::new("slope_fit_r2", n, k, fit.r_squared));
    }
    Ok(rows)
}

fn quad_form(cov: &DMatrix<f64>, g: &DVector<f64>) -> Result<f64> {
    if cov.nrows() == 0 {
        return Ok(0.0);
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { index: 0, value: f64::NAN })?;
    let y = chol.l().solve_lower_triangular(g).expect("cholesky factor is invertible");
    Ok(y.norm_squared())
}

/// `gᵀ C⁻¹ g - g_intᵀ C_int⁻¹ g_int`, with `C_int` the covariance of the
/// interior coordinates `1..d-1`.
pub fn chi2_delta(cov: &DMatrix<f64>, g: &DVector<f64>) -> Result<f64> {
    let d = cov.nrows();
    let inner = d.saturating_sub(2);
    let full = quad_form(cov, g)?;
    let interior = quad_form(
        &cov.view((1, 1), (inner, inner)).into_owned(),
        &g.rows(1, inner).into_owned(),
    )?;
    Ok(full - interior)
}

/// Same statistic through Gram–Schmidt: orthonormalize `g_1, …, g_{d-2},
/// g_{d-1}, g_0` (a Cholesky factor of the permuted covariance) and sum the
/// squares of the last two standardized innovations.
pub fn chi2_delta_gram_schmidt(cov: &DMatrix<f64>, g: &DVector<f64>) -> Result<f64> {
    let d = cov.nrows();
    if d < 2 {
        return Err(Error::Domain("need dimension >= 2".into()));
    }
    let order: Vec<usize> = (1..d).chain(std::iter::once(0)).collect();
    let permuted = DMatrix::from_fn(d, d, |i, j| cov[(order[i], order[j])]);
    let gp = DVector::from_fn(d, |i, _| g[order[i]]);
    let chol = permuted
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { index: 0, value: f64::NAN })?;
    let h = chol.l().solve_lower_triangular(&gp).expect("cholesky factor is invertible");
    Ok(h[d - 2].powi(2) + h[d - 1].powi(2))
}

fn random_covariance<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let factor = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &factor * factor.transpose() + DMatrix::identity(d, d) * 0.5
}

/// Nested quadratic forms of a Gaussian vector with a random covariance.
pub fn run_chi2_lemma(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<Row>> {
    let n = cfg.n[0];
    let k = cfg.k.block_len(n);
    let d = k + 1;
    let reps = replicate(workers, cfg.replications, |r| {
        let mut rng = replication_stream(cfg.seed, tag(d, 5), r);
        let cov = random_covariance(d, &mut rng);
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { index: 0, value: f64::NAN })?;
        let g = chol.l() * z;
        Ok((chi2_delta(&cov, &g)?, chi2_delta_gram_schmidt(&cov, &g)?))
    })?;
    let delta: Vec<f64> = reps.iter().map(|r| r.0).collect();
    let s = Summary::of(&delta);
    let min = delta.iter().copied().fold(f64::INFINITY, f64::min);
    let gap = reps
        .iter()
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max);
    Ok(vec![
        Row::new("mean_delta", d, k, s.mean).se(s.mean_se).reference(2.0),
        Row::new("var_delta", d, k, s.variance).se(s.variance_se).reference(4.0),
        Row::new("min_delta", d, k, min),
        Row::indicator("delta_nonnegative", d, k, min >= -1e-9),
        Row::new("max_gram_schmidt_gap", d, k, gap),
        Row::indicator("gram_schmidt_agreement", d, k, gap <= 1e-8),
    ])
}

/// Straight-line fit of the log empirical exceedance `log P(R² > r)`
/// against `r`, on 40 points between the median and the 99.5% quantile.
#[derive(Debug, Clone, Copy)]
pub struct DensityFit {
    pub fit: LinearFit,
    pub exceedance_at_zero: f64,
}

pub fn density_fit(r2: &[f64]) -> DensityFit {
    let mut sorted = r2.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len() as f64;
    let exceed = |x: f64| (sorted.len() - sorted.partition_point(|&v| v <= x)) as f64 / total;
    let quantile = |q: f64| sorted[((sorted.len() - 1) as f64 * q).floor() as usize];
    let (lo, hi) = (quantile(0.5), quantile(0.995));
    let points = 40;
    let xs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| exceed(x).ln()).collect();
    DensityFit {
        fit: linear_fit(&xs, &ys),
        exceedance_at_zero: exceed(0.0),
    }
}

/// Tails of `(U, V) = (√n ∫(X_{s/n} - x₀) dμ, √n (X_{1/n} - x₀))`.
pub fn run_density_tails(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<Row>> {
    let model = cfg.model()?;
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let k = cfg.k.block_len(n);
        let rn = (n as f64).sqrt();
        let r2 = replicate(workers, cfg.replications, |r| {
            let mut rng = replication_stream(cfg.seed, tag(n, 6), r);
            let path = simulate_cells(model, cfg.theta0, cfg.xi0, n, cfg.m, 1, &mut rng)?;
            let u = rn * (cfg.measure.local_mean(path.cell(0))? - cfg.xi0);
            let v = rn * (path.at_cell(1) - cfg.xi0);
            Ok(u * u + v * v)
        })?;
        let fit = density_fit(&r2);
        rows.push(Row::new("exceedance_at_zero", n, k, fit.exceedance_at_zero).reference(1.0));
        rows.push(Row::new("fit_r2", n, k, fit.fit.r_squared).reference(1.0));
        rows.push(Row::new("fit_slope", n, k, fit.fit.slope).se(fit.fit.slope_se));
        rows.push(Row::indicator("slope_negative", n, k, fit.fit.slope < 0.0));
    }
    Ok(rows)
}

struct EstimatorRep {
    aug: f64,
    obs: f64,
    exact: Option<f64>,
    /// `I_n` at θ₀.
    aug_info: f64,
    obs_info: f64,
    aug_info_hat: f64,
    path_info: f64,
    boundary: bool,
}

/// Dispersion of `√n (θ̂ - θ₀)` for the augmented and means-only
/// quasi-likelihood estimators (and the exact MLE for Gaussian models).
pub fn run_estimator(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<Row>> {
    let model = cfg.model()?;
    let v = cfg.measure.v_coefficients();
    let theta0 = cfg.theta0;
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let k = cfg.k.block_len(n);
        let rn = (n as f64).sqrt();
        let oracle = if model.gaussian {
            Some(GaussianObsModel::build(n, &cfg.measure)?)
        } else {
            None
        };
        let reps = replicate(workers, cfg.replications, |r| {
            let mut rng = replication_stream(cfg.seed, tag(n, 7), r);
            let path = simulate_cells(model, theta0, cfg.xi0, n, cfg.m, n, &mut rng)?;
            let obs = observe(&path, &cfg.measure);
            let blocks = augment(&path, &obs, k)?;
            let aug_forms = BlockForms::augmented(&blocks, &v)?;
            let obs_forms = BlockForms::observed(&obs, cfg.xi0, k, &v)?;
            let aug = maximize(&aug_forms, model, None)?;
            let means = maximize(&obs_forms, model, None)?;
            let exact = match &oracle {
                Some(o) => {
                    let centered: Vec<f64> = obs.iter().map(|x| x - cfg.xi0).collect();
                    Some(rn * (o.exact_mle(&centered)? - theta0))
                }
                None => None,
            };
            Ok(EstimatorRep {
                aug: rn * (aug.theta_hat - theta0),
                obs: rn * (means.theta_hat - theta0),
                exact,
                aug_info: aug_forms.score_and_info(model, theta0).info,
                obs_info: obs_forms.score_and_info(model, theta0).info,
                aug_info_hat: aug.info_at_hat,
                path_info: model.path_information(&path, theta0)?,
                boundary: aug.boundary_hit || means.boundary_hit,
            })
        })?;

        let factor = augmentation_factor(cfg.k, k);
        let aug: Vec<f64> = reps.iter().map(|r| r.aug).collect();
        let obs: Vec<f64> = reps.iter().map(|r| r.obs).collect();
        let bound_aug = mean(&reps.iter().map(|r| 1.0 / (factor * r.path_info)).collect::<Vec<_>>());
        let bound_obs = mean(&reps.iter().map(|r| 1.0 / r.path_info).collect::<Vec<_>>());
        rows.push(mean_row("bias_aug", n, k, &aug).reference(0.0));
        rows.push(var_row("var_aug", n, k, &aug).reference(bound_aug));
        rows.push(mean_row("bias_obs", n, k, &obs).reference(0.0));
        rows.push(var_row("var_obs", n, k, &obs).reference(bound_obs));
        let exact: Vec<f64> = reps.iter().filter_map(|r| r.exact).collect();
        if !exact.is_empty() {
            rows.push(mean_row("bias_exact", n, k, &exact).reference(0.0));
            rows.push(var_row("var_exact", n, k, &exact).reference(bound_obs));
        }

        // mixed-normal standardization by I_n(θ₀)
        let std_aug: Vec<f64> = reps.iter().map(|r| r.aug * r.aug_info.sqrt()).collect();
        let std_obs: Vec<f64> = reps.iter().map(|r| r.obs * r.obs_info.sqrt()).collect();
        rows.push(var_row("var_std_aug", n, k, &std_aug).reference(1.0));
        rows.push(Row::new("skew_std_aug", n, k, skewness(&std_aug)).reference(0.0));
        rows.push(Row::new("exkurt_std_aug", n, k, excess_kurtosis(&std_aug)).reference(0.0));
        rows.push(var_row("var_std_obs", n, k, &std_obs).reference(1.0));
        rows.push(Row::new("skew_std_obs", n, k, skewness(&std_obs)).reference(0.0));
        rows.push(Row::new("exkurt_std_obs", n, k, excess_kurtosis(&std_obs)).reference(0.0));
        let std_hat: Vec<f64> = reps.iter().map(|r| r.aug * r.aug_info_hat.sqrt()).collect();
        rows.push(Row::new("skew_std_aug_at_hat", n, k, skewness(&std_hat)));
        rows.push(Row::new("exkurt_std_aug_at_hat", n, k, excess_kurtosis(&std_hat)));
        let hits = reps.iter().filter(|r| r.boundary).count();
        rows.push(Row::new("boundary_hits", n, k, hits as f64));
    }
    Ok(rows)
}
