//! Coefficient bundles for `dX = a(X, θ) dB + b(X) dt`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::simulate::PathGrid;

/// Compact parameter set `Θ = [lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ThetaInterval {
    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.lo && theta <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// `n` equally spaced points including both ends.
    pub fn grid(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        let step = (self.hi - self.lo) / (n.max(2) - 1) as f64;
        (0..n.max(2)).map(move |i| self.lo + i as f64 * step)
    }
}

/// Diffusion coefficient `a`, its θ-derivative `ȧ`, drift `b`, and the
/// regularity metadata checked on a sample grid.
#[derive(Debug, Clone, Copy)]
pub struct DiffusionModel {
    pub name: &'static str,
    diffusion: fn(f64, f64) -> f64,
    diffusion_dtheta: fn(f64, f64) -> f64,
    drift: fn(f64) -> f64,
    pub theta_interval: ThetaInterval,
    /// Lower bound for `a` over space and Θ.
    pub a_lower: f64,
    /// Observations are exactly Gaussian with a known covariance, so the
    /// exact likelihood is available.
    pub gaussian: bool,
}

impl DiffusionModel {
    #[inline]
    pub fn a(&self, x: f64, theta: f64) -> f64 {
        (self.diffusion)(x, theta)
    }

    #[inline]
    pub fn a_dot(&self, x: f64, theta: f64) -> f64 {
        (self.diffusion_dtheta)(x, theta)
    }

    #[inline]
    pub fn b(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    /// `ȧ / a`.
    #[inline]
    pub fn score_ratio(&self, x: f64, theta: f64) -> f64 {
        self.a_dot(x, theta) / self.a(x, theta)
    }

    /// `(ȧ / a)²(x, θ)`, the integrand of the conditional information.
    #[inline]
    pub fn info_integrand(&self, x: f64, theta: f64) -> f64 {
        let r = self.score_ratio(x, theta);
        r * r
    }

    pub fn check_theta(&self, theta: f64) -> Result<()> {
        if self.theta_interval.contains(theta) {
            Ok(())
        } else {
            domain(format!(
                "θ = {theta} outside Θ = [{}, {}] for model {}",
                self.theta_interval.lo, self.theta_interval.hi, self.name
            ))
        }
    }

    /// Grid check of non-degeneracy and boundedness: `x ∈ [-50, 50]`,
    /// 100 points of Θ.
    pub fn validate(&self) -> Result<()> {
        let bound = 1e6;
        for theta in self.theta_interval.grid(100) {
            for i in 0..=1000 {
                let x = -50.0 + 0.1 * i as f64;
                let a = self.a(x, theta);
                if a < self.a_lower {
                    return domain(format!(
                        "{}: a({x}, {theta}) = {a} below floor {}",
                        self.name, self.a_lower
                    ));
                }
                let values = [a, self.a_dot(x, theta), self.b(x)];
                if values.iter().any(|v| !v.is_finite() || v.abs() > bound) {
                    return domain(format!("{}: unbounded coefficient at x = {x}", self.name));
                }
            }
        }
        Ok(())
    }

    /// Trapezoid approximation of `2 ∫₀¹ (ȧ/a)²(X_s, θ) ds` on the fine grid.
    pub fn path_information(&self, path: &PathGrid, theta: f64) -> Result<f64> {
        if path.cells != path.n {
            return domain("path information needs a path covering [0,1]");
        }
        let v = &path.values;
        let last = v.len() - 1;
        let inner: f64 = v[1..last].iter().map(|&x| self.info_integrand(x, theta)).sum();
        let ends = 0.5 * (self.info_integrand(v[0], theta) + self.info_integrand(v[last], theta));
        Ok(2.0 * (inner + ends) * path.step())
    }
}

fn mult_a(_x: f64, theta: f64) -> f64 {
    theta
}
fn mult_a_dot(_x: f64, _theta: f64) -> f64 {
    1.0
}
fn zero_drift(_x: f64) -> f64 {
    0.0
}

fn sine_a(x: f64, theta: f64) -> f64 {
    theta * (2.0 + x.sin())
}
fn sine_a_dot(x: f64, _theta: f64) -> f64 {
    2.0 + x.sin()
}
fn sine_b(x: f64) -> f64 {
    x.cos()
}

fn cauchy_a(x: f64, theta: f64) -> f64 {
    1.0 + theta / (1.0 + x * x)
}
fn cauchy_a_dot(x: f64, _theta: f64) -> f64 {
    1.0 / (1.0 + x * x)
}
fn cauchy_b(x: f64) -> f64 {
    -x.tanh()
}

const THETA: ThetaInterval = ThetaInterval { lo: 0.5, hi: 3.0 };

static REGISTRY: [DiffusionModel; 3] = [
    DiffusionModel {
        name: "multiplicative_bm",
        diffusion: mult_a,
        diffusion_dtheta: mult_a_dot,
        drift: zero_drift,
        theta_interval: THETA,
        a_lower: 0.5,
        gaussian: true,
    },
    DiffusionModel {
        name: "sine_scale",
        diffusion: sine_a,
        diffusion_dtheta: sine_a_dot,
        drift: sine_b,
        theta_interval: THETA,
        a_lower: 0.5,
        gaussian: false,
    },
    DiffusionModel {
        name: "cauchy_scale",
        diffusion: cauchy_a,
        diffusion_dtheta: cauchy_a_dot,
        drift: cauchy_b,
        theta_interval: THETA,
        a_lower: 1.0,
        gaussian: false,
    },
];

/// Built-in models.
pub fn registry() -> &'static [DiffusionModel] {
    &REGISTRY
}

pub fn by_name(name: &str) -> Result<&'static DiffusionModel> {
    REGISTRY.iter().find(|m| m.name == name).ok_or_else(|| {
        let known: Vec<_> = REGISTRY.iter().map(|m| m.name).collect();
        Error::Config(format!("unknown model '{name}' (known: {})", known.join(", ")))
    })
}
