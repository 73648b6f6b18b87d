//! Sample summaries used by the Monte Carlo harness.

/// Pairwise (cascade) summation; the result depends only on the order of
/// the input, never on scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - mu) * (x - mu)).collect();
    pairwise_sum(&sq) / (xs.len() as f64 - 1.0)
}

/// Mean, variance and their standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub mean_se: f64,
    /// Standard error of the sample variance, from the fourth central moment.
    pub variance_se: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let count = xs.len();
        let mu = mean(xs);
        let var = variance(xs);
        let m4 = mean(&xs.iter().map(|x| (x - mu).powi(4)).collect::<Vec<_>>());
        let nf = count as f64;
        let variance_se = ((m4 - var * var * (nf - 3.0) / (nf - 1.0)) / nf).max(0.0).sqrt();
        Self {
            count,
            mean: mu,
            variance: var,
            mean_se: (var / nf).sqrt(),
            variance_se,
        }
    }
}

/// Sample skewness `m3 / m2^{3/2}`.
pub fn skewness(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    let m2 = mean(&xs.iter().map(|x| (x - mu).powi(2)).collect::<Vec<_>>());
    let m3 = mean(&xs.iter().map(|x| (x - mu).powi(3)).collect::<Vec<_>>());
    m3 / m2.powf(1.5)
}

/// Sample excess kurtosis `m4 / m2² - 3`.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    let m2 = mean(&xs.iter().map(|x| (x - mu).powi(2)).collect::<Vec<_>>());
    let m4 = mean(&xs.iter().map(|x| (x - mu).powi(4)).collect::<Vec<_>>());
    m4 / (m2 * m2) - 3.0
}

/// Ordinary least squares `y ≈ intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len(), "linear_fit: length mismatch");
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if n > 2.0 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    LinearFit {
        slope,
        intercept,
        r_squared,
        slope_se,
    }
}
