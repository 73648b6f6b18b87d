//! Euler–Maruyama paths, local-mean observations and block increments.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::measure::WeightMeasure;
use crate::model::DiffusionModel;
use crate::rng;

/// Simulated path on the grid `i / (n m)` with its Brownian increments.
///
/// `cells` is the number of observation intervals covered; it equals `n`
/// for a path on `[0, 1]` and is smaller for prefix paths that only cover
/// the first few blocks.
#[derive(Debug, Clone)]
pub struct PathGrid {
    pub n: usize,
    pub m: usize,
    pub cells: usize,
    pub values: Vec<f64>,
    pub dw: Vec<f64>,
    pub theta: f64,
    pub seed: u64,
}

impl PathGrid {
    pub fn step(&self) -> f64 {
        1.0 / (self.n * self.m) as f64
    }

    /// `X_{j/n}`.
    pub fn at_cell(&self, j: usize) -> f64 {
        self.values[j * self.m]
    }

    /// Grid values over `[j/n, (j+1)/n]`.
    pub fn cell(&self, j: usize) -> &[f64] {
        &self.values[j * self.m..=(j + 1) * self.m]
    }

    /// Driving Brownian motion at the grid times, `W_0 = 0`.
    pub fn brownian(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.dw.len() + 1);
        let mut acc = 0.0;
        w.push(0.0);
        for &d in &self.dw {
            acc += d;
            w.push(acc);
        }
        w
    }
}

fn check_sizes(model: &DiffusionModel, theta: f64, n: usize, m: usize) -> Result<()> {
    if n < 2 || m < 2 {
        return domain(format!("need n >= 2 and m >= 2, got n = {n}, m = {m}"));
    }
    model.check_theta(theta)
}

/// Full path on `[0, 1]`, deterministic given `seed`.
pub fn simulate_path(
    model: &DiffusionModel,
    theta: f64,
    xi0: f64,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<PathGrid> {
    let mut rng = rng::seeded(seed);
    let mut path = simulate_cells(model, theta, xi0, n, m, n, &mut rng)?;
    path.seed = seed;
    Ok(path)
}

/// Path covering the first `cells` observation intervals.
pub fn simulate_cells<R: Rng + ?Sized>(
    model: &DiffusionModel,
    theta: f64,
    xi0: f64,
    n: usize,
    m: usize,
    cells: usize,
    rng: &mut R,
) -> Result<PathGrid> {
    check_sizes(model, theta, n, m)?;
    if cells == 0 || cells > n {
        return domain(format!("cells = {cells} must lie in 1..={n}"));
    }
    let sd = (1.0 / (n * m) as f64).sqrt();
    let dw: Vec<f64> = (0..cells * m)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    path_from_increments(model, theta, xi0, n, m, dw)
}

/// Euler scheme driven by the given increments; the number of covered
/// cells is `dw.len() / m`.
pub fn path_from_increments(
    model: &DiffusionModel,
    theta: f64,
    xi0: f64,
    n: usize,
    m: usize,
    dw: Vec<f64>,
) -> Result<PathGrid> {
    check_sizes(model, theta, n, m)?;
    if dw.is_empty() || !dw.len().is_multiple_of(m) || dw.len() > n * m {
        return Err(Error::Dimension {
            expected: n * m,
            got: dw.len(),
        });
    }
    let h = 1.0 / (n * m) as f64;
    let mut values = Vec::with_capacity(dw.len() + 1);
    let mut x = xi0;
    values.push(x);
    for &d in &dw {
        x += model.a(x, theta) * d + model.b(x) * h;
        values.push(x);
    }
    Ok(PathGrid {
        n,
        m,
        cells: dw.len() / m,
        values,
        dw,
        theta,
        seed: 0,
    })
}

/// Local means `X̄_j` for every covered cell.
pub fn observe(path: &PathGrid, measure: &WeightMeasure) -> Vec<f64> {
    (0..path.cells)
        .map(|j| {
            measure
                .local_mean(path.cell(j))
                .expect("cells hold m + 1 >= 3 points")
        })
        .collect()
}

/// One block `B_l`: the exact anchor `X_{kl/n}`, the local means of the
/// block and the exact terminal value, with rescaled increments `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// Index of the first mean, `k l`.
    pub start: usize,
    pub anchor: f64,
    pub means: Vec<f64>,
    pub terminal: f64,
    /// `U_0, …, U_{len}` with `len = means.len()`.
    pub increments: Vec<f64>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    fn build(start: usize, anchor: f64, means: &[f64], terminal: f64, n: usize) -> Self {
        let rn = (n as f64).sqrt();
        let mut increments = Vec::with_capacity(means.len() + 1);
        increments.push(rn * (means[0] - anchor));
        increments.extend(means.windows(2).map(|w| rn * (w[1] - w[0])));
        increments.push(rn * (terminal - means[means.len() - 1]));
        Self {
            start,
            anchor,
            means: means.to_vec(),
            terminal,
            increments,
        }
    }
}

/// Augmented observation split into blocks of `k` means.
#[derive(Debug, Clone)]
pub struct BlockSet {
    pub n: usize,
    pub k: usize,
    /// `L = ⌊n / k⌋`, the number of full blocks.
    pub full_blocks: usize,
    /// `n - L k`; zero means the final block is empty and omitted.
    pub last_block_len: usize,
    pub blocks: Vec<Block>,
}

impl BlockSet {
    /// Rebuild blocks from stored anchors (`X_{kl/n}` for `l = 0..=L`, then
    /// `X_1` if the last block is non-empty) and the means.
    pub fn from_parts(n: usize, k: usize, anchors: &[f64], means: &[f64]) -> Result<Self> {
        if k == 0 || k > n {
            return domain(format!("block length k = {k} must lie in 1..={n}"));
        }
        if means.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: means.len(),
            });
        }
        let full = n / k;
        let last = n - full * k;
        let count = full + usize::from(last > 0);
        if anchors.len() != count + 1 {
            return Err(Error::Dimension {
                expected: count + 1,
                got: anchors.len(),
            });
        }
        let blocks = (0..count)
            .map(|l| {
                let start = k * l;
                let end = (start + k).min(n);
                Block::build(start, anchors[l], &means[start..end], anchors[l + 1], n)
            })
            .collect();
        Ok(Self {
            n,
            k,
            full_blocks: full,
            last_block_len: last,
            blocks,
        })
    }

    /// Exact values at block boundaries, terminal included.
    pub fn anchors(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.blocks.iter().map(|b| b.anchor).collect();
        if let Some(b) = self.blocks.last() {
            out.push(b.terminal);
        }
        out
    }
}

/// Split observations plus exact values at `kl/n` into blocks.
pub fn augment(path: &PathGrid, observations: &[f64], k: usize) -> Result<BlockSet> {
    let n = path.n;
    if k == 0 || k > n {
        return domain(format!("block length k = {k} must lie in 1..={n}"));
    }
    if path.cells != n || observations.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: observations.len().min(path.cells),
        });
    }
    let full = n / k;
    let last = n - full * k;
    let count = full + usize::from(last > 0);
    let mut anchors: Vec<f64> = (0..count).map(|l| path.at_cell(k * l)).collect();
    anchors.push(path.at_cell(n));
    BlockSet::from_parts(n, k, &anchors, observations)
}

/// `U_{0..len, l}` of block `l` read off a (possibly prefix) path.
pub fn block_increments(
    path: &PathGrid,
    observations: &[f64],
    k: usize,
    l: usize,
) -> Result<Vec<f64>> {
    let (start, end) = block_range(path, k, l)?;
    if observations.len() < end {
        return Err(Error::Dimension {
            expected: end,
            got: observations.len(),
        });
    }
    let block = Block::build(
        start,
        path.at_cell(start),
        &observations[start..end],
        path.at_cell(end),
        path.n,
    );
    Ok(block.increments)
}

fn block_range(path: &PathGrid, k: usize, l: usize) -> Result<(usize, usize)> {
    if k == 0 || k > path.n {
        return domain(format!("block length k = {k} must lie in 1..={}", path.n));
    }
    let start = k * l;
    let end = (start + k).min(path.n);
    if start >= end || end > path.cells {
        return domain(format!(
            "block {l} (cells {start}..{end}) not covered by the path ({} cells)",
            path.cells
        ));
    }
    Ok((start, end))
}

/// Gaussian coupling `Ũ_{j,l}` of block `l`: the same Brownian increments,
/// coefficient frozen at `a(X_{kl/n}, θ)` and drift removed.
pub fn gaussian_coupled_increments(
    path: &PathGrid,
    k: usize,
    l: usize,
    measure: &WeightMeasure,
    model: &DiffusionModel,
    theta: f64,
) -> Result<Vec<f64>> {
    let (start, end) = block_range(path, k, l)?;
    let w = path.brownian();
    let m = path.m;
    let scale = model.a(path.at_cell(start), theta) * (path.n as f64).sqrt();
    let means: Vec<f64> = (start..end)
        .map(|j| measure.local_mean(&w[j * m..=(j + 1) * m]))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(means.len() + 1);
    out.push(scale * (means[0] - w[start * m]));
    out.extend(means.windows(2).map(|p| scale * (p[1] - p[0])));
    out.push(scale * (w[end * m] - means[means.len() - 1]));
    Ok(out)
}
