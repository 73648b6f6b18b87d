//! Weighting measures on `[0, 1]`.
//!
//! A measure is a convex combination of the uniform (Lebesgue) measure and
//! finitely many atoms. Its two mass functions `μ([s,1])` and `μ([0,s])` are
//! piecewise linear, which makes the block covariance coefficients
//! `(v1, v2, c)` available in closed form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const MASS_TOL: f64 = 1e-12;

/// An atom of the measure: position in `[0, 1]` and positive weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub weight: f64,
}

/// Serialized form of a [`WeightMeasure`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec {
    Lebesgue,
    Atomic { atoms: Vec<(f64, f64)> },
    Mixture { lebesgue: f64, atoms: Vec<(f64, f64)> },
}

/// A validated probability measure on `[0, 1]` with `μ((0,1)) > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec", into = "MeasureSpec")]
pub struct WeightMeasure {
    lebesgue: f64,
    atoms: Vec<Atom>,
}

/// Entries of the block covariance matrix:
/// `v1 = ∫ μ([s,1])² ds`, `v2 = ∫ μ([0,s])² ds`, `c = ∫ μ([0,s]) μ([s,1]) ds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VCoefficients {
    pub v1: f64,
    pub v2: f64,
    pub c: f64,
}

impl VCoefficients {
    /// `v1 v2 - c²`, positive for every admissible measure.
    pub fn determinant(&self) -> f64 {
        self.v1 * self.v2 - self.c * self.c
    }
}

impl WeightMeasure {
    pub fn lebesgue() -> Self {
        Self {
            lebesgue: 1.0,
            atoms: Vec::new(),
        }
    }

    pub fn dirac(position: f64) -> Result<Self> {
        Self::mixture(0.0, vec![(position, 1.0)])
    }

    pub fn atomic(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::mixture(0.0, atoms)
    }

    /// `lebesgue · Leb + Σ wᵢ δ_{αᵢ}`; atoms must be sorted by strictly
    /// increasing position and the total mass must be one.
    pub fn mixture(lebesgue: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if !(0.0..=1.0).contains(&lebesgue) {
            return domain(format!("lebesgue weight {lebesgue} outside [0,1]"));
        }
        let mut parsed = Vec::with_capacity(atoms.len());
        for (i, &(position, weight)) in atoms.iter().enumerate() {
            if !(0.0..=1.0).contains(&position) {
                return domain(format!("atom position {position} outside [0,1]"));
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return domain(format!("atom weight {weight} must be positive"));
            }
            if i > 0 && position <= atoms[i - 1].0 {
                return domain("atom positions must be strictly increasing");
            }
            parsed.push(Atom { position, weight });
        }
        let total = lebesgue + parsed.iter().map(|a| a.weight).sum::<f64>();
        if (total - 1.0).abs() > MASS_TOL {
            return domain(format!("total mass {total} is not 1"));
        }
        let interior = lebesgue > 0.0
            || parsed
                .iter()
                .any(|a| a.position > 0.0 && a.position < 1.0);
        if !interior {
            return domain("measure puts no mass on (0,1)");
        }
        Ok(Self {
            lebesgue,
            atoms: parsed,
        })
    }

    pub fn lebesgue_weight(&self) -> f64 {
        self.lebesgue
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `μ([s, 1])`, atoms at `s` included.
    pub fn tail_mass(&self, s: f64) -> Result<f64> {
        check_unit(s)?;
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.position >= s)
            .map(|a| a.weight)
            .sum();
        Ok(self.lebesgue * (1.0 - s) + atoms)
    }

    /// `μ([0, s])`, atoms at `s` included.
    pub fn cum_mass(&self, s: f64) -> Result<f64> {
        check_unit(s)?;
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.position <= s)
            .map(|a| a.weight)
            .sum();
        Ok(self.lebesgue * s + atoms)
    }

    /// Open intervals between consecutive atom positions (and 0, 1), on
    /// which both mass functions are linear.
    fn pieces(&self) -> Vec<(f64, f64)> {
        let mut knots = vec![0.0];
        knots.extend(
            self.atoms
                .iter()
                .map(|a| a.position)
                .filter(|&p| p > 0.0 && p < 1.0),
        );
        knots.push(1.0);
        knots.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Closed-form `(v1, v2, c)`.
    pub fn v_coefficients(&self) -> VCoefficients {
        let lam = self.lebesgue;
        let (mut v1, mut v2, mut c) = (0.0, 0.0, 0.0);
        for (s0, s1) in self.pieces() {
            let below: f64 = self
                .atoms
                .iter()
                .filter(|a| a.position <= s0)
                .map(|a| a.weight)
                .sum();
            let above: f64 = self
                .atoms
                .iter()
                .filter(|a| a.position >= s1)
                .map(|a| a.weight)
                .sum();
            // both functions are affine on the piece, so these are exact
            let (f0, f1) = (below + lam * s0, below + lam * s1);
            let (g0, g1) = (above + lam * (1.0 - s0), above + lam * (1.0 - s1));
            let len = s1 - s0;
            v1 += len * (g0 * g0 + g0 * g1 + g1 * g1) / 3.0;
            v2 += len * (f0 * f0 + f0 * f1 + f1 * f1) / 3.0;
            c += len * (2.0 * f0 * g0 + f0 * g1 + f1 * g0 + 2.0 * f1 * g1) / 6.0;
        }
        VCoefficients { v1, v2, c }
    }

    /// `(v1, v2, c)` by composite Simpson quadrature of the mass functions,
    /// applied separately on each piece where they are continuous. `points`
    /// is the approximate total number of nodes.
    pub fn v_coefficients_quadrature(&self, points: usize) -> VCoefficients {
        let (mut v1, mut v2, mut c) = (0.0, 0.0, 0.0);
        for (s0, s1) in self.pieces() {
            let len = s1 - s0;
            if len < 1e-12 {
                continue;
            }
            let nudge = 1e-13 * len;
            let mut panels = ((points as f64 * len).ceil() as usize).max(2);
            if panels % 2 == 1 {
                panels += 1;
            }
            let h = len / panels as f64;
            for i in 0..=panels {
                let s = (s0 + i as f64 * h).clamp(s0 + nudge, s1 - nudge);
                let w = if i == 0 || i == panels {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                } * h
                    / 3.0;
                // `s` lies strictly inside the piece, so these cannot fail
                let tail = self.tail_mass(s).unwrap_or(0.0);
                let cum = self.cum_mass(s).unwrap_or(0.0);
                v1 += w * tail * tail;
                v2 += w * cum * cum;
                c += w * tail * cum;
            }
        }
        VCoefficients { v1, v2, c }
    }

    /// `∫ x(s) dμ(s)` for a path sampled on a uniform grid over `[0, 1]`.
    ///
    /// The Lebesgue part uses the trapezoid rule and atoms use linear
    /// interpolation between grid points.
    pub fn local_mean(&self, segment: &[f64]) -> Result<f64> {
        if segment.len() < 2 {
            return domain(format!(
                "local mean needs at least 2 grid points, got {}",
                segment.len()
            ));
        }
        let m = segment.len() - 1;
        let mut acc = 0.0;
        if self.lebesgue > 0.0 {
            let inner: f64 = segment[1..m].iter().sum();
            let trap = (0.5 * (segment[0] + segment[m]) + inner) / m as f64;
            acc += self.lebesgue * trap;
        }
        for atom in &self.atoms {
            acc += atom.weight * interpolate(segment, atom.position);
        }
        Ok(acc)
    }
}

fn check_unit(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        domain(format!("mass function evaluated at {s}, outside [0,1]"))
    }
}

/// Linear interpolation of a uniformly sampled path at `alpha ∈ [0, 1]`.
pub(crate) fn interpolate(segment: &[f64], alpha: f64) -> f64 {
    let m = segment.len() - 1;
    let t = alpha * m as f64;
    let i = (t.floor() as usize).min(m - 1);
    let frac = t - i as f64;
    if frac == 0.0 {
        segment[i]
    } else {
        segment[i] * (1.0 - frac) + segment[i + 1] * frac
    }
}

impl TryFrom<MeasureSpec> for WeightMeasure {
    type Error = Error;

    fn try_from(spec: MeasureSpec) -> Result<Self> {
        match spec {
            MeasureSpec::Lebesgue => Ok(Self::lebesgue()),
            MeasureSpec::Atomic { atoms } => Self::atomic(atoms),
            MeasureSpec::Mixture { lebesgue, atoms } => Self::mixture(lebesgue, atoms),
        }
    }
}

impl From<WeightMeasure> for MeasureSpec {
    fn from(m: WeightMeasure) -> Self {
        let atoms: Vec<(f64, f64)> = m.atoms.iter().map(|a| (a.position, a.weight)).collect();
        if m.lebesgue == 1.0 && atoms.is_empty() {
            MeasureSpec::Lebesgue
        } else if m.lebesgue == 0.0 {
            MeasureSpec::Atomic { atoms }
        } else {
            MeasureSpec::Mixture {
                lebesgue: m.lebesgue,
                atoms,
            }
        }
    }
}

/// Accepts either the JSON form or a shorthand:
/// `lebesgue`, `dirac:0.5`, `atomic:0.25@0.5,0.75@0.5`,
/// `mixture:0.5;0.5@0.5` (Lebesgue weight, then `position@weight` atoms).
impl FromStr for WeightMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            return Ok(serde_json::from_str(s)?);
        }
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "lebesgue" | "uniform" => Ok(Self::lebesgue()),
            "dirac" => Self::dirac(parse_num(rest)?),
            "atomic" => Self::atomic(parse_atoms(rest)?),
            "mixture" => {
                let (lam, atoms) = rest
                    .split_once(';')
                    .ok_or_else(|| Error::Domain(format!("bad mixture spec '{s}'")))?;
                Self::mixture(parse_num(lam)?, parse_atoms(atoms)?)
            }
            _ => domain(format!("unknown measure '{s}'")),
        }
    }
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Domain(format!("cannot parse number '{s}'")))
}

fn parse_atoms(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (pos, w) = p
                .split_once('@')
                .ok_or_else(|| Error::Domain(format!("atom '{p}' is not position@weight")))?;
            Ok((parse_num(pos)?, parse_num(w)?))
        })
        .collect()
}

impl fmt::Display for WeightMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let spec: MeasureSpec = self.clone().into();
        match serde_json::to_string(&spec) {
            Ok(s) => f.write_str(&s),
            Err(_) => Err(fmt::Error),
        }
    }
}
