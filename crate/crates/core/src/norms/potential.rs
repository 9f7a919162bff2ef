//! Kato norm, Kato-class profile and Rollnik functional of a sampled 3D
//! potential, and the combined hypothesis check.

use num_complex::Complex64;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fft::FftNd;
use crate::lattice::{lp_norm, Field, Grid, Smoothness};
use crate::{rng, Error, Result};

/// `∫_{[-1/2,1/2]³} dz / |z|`.
pub const CELL_INVERSE_DISTANCE: f64 = 2.380_077_363_979_553_5;
/// `∫_{[-1/2,1/2]³} dz / |z|²`.
pub const CELL_INVERSE_SQUARE_DISTANCE: f64 = 7.674_124_222_443_732;

/// Bound on `‖V‖_K`.
pub const KATO_THRESHOLD: f64 = 4.0 * std::f64::consts::PI;
/// Bound on the Rollnik double integral.
pub const ROLLNIK_THRESHOLD: f64 = 16.0 * std::f64::consts::PI * std::f64::consts::PI;

const ROLLNIK_BLOCK: usize = 1 << 16;

fn require_3d(grid: &Grid) -> Result<()> {
    if grid.dim() != 3 {
        return Err(Error::NotThreeDimensional(grid.dim()));
    }
    Ok(())
}

/// Linear (non-periodic) convolution of `|V|` with a kernel given on integer
/// offsets, evaluated at every grid point, via zero padding to `2N`.
fn convolve_offsets(v: &[f64], grid: &Grid, kernel: impl Fn([i64; 3]) -> f64 + Sync) -> Vec<f64> {
    let n = grid.points_per_axis();
    let m = 2 * n;
    let fft = FftNd::new(m, 3);
    let mut a = vec![Complex64::default(); m * m * m];
    for (i, &val) in v.iter().enumerate() {
        let [x, y, z] = grid.multi_index(i);
        a[x + m * (y + m * z)] = Complex64::new(val, 0.0);
    }
    let offset = |k: usize| if k < n { k as i64 } else if k == n { i64::MAX } else { k as i64 - m as i64 };
    let mut kern = vec![Complex64::default(); m * m * m];
    kern.par_iter_mut().enumerate().for_each(|(idx, out)| {
        let (x, y, z) = (idx % m, (idx / m) % m, idx / (m * m));
        let o = [offset(x), offset(y), offset(z)];
        if o.iter().all(|&c| c != i64::MAX) {
            *out = Complex64::new(kernel(o), 0.0);
        }
    });
    fft.forward(&mut a);
    fft.forward(&mut kern);
    a.par_iter_mut().zip(kern.par_iter()).for_each(|(x, k)| *x *= k);
    fft.inverse(&mut a);
    (0..grid.len())
        .map(|i| {
            let [x, y, z] = grid.multi_index(i);
            a[x + m * (y + m * z)].re
        })
        .collect()
}

fn moduli(v: &Field) -> Vec<f64> {
    v.values().iter().map(|z| z.norm()).collect()
}

/// `sup_x ∫ |V(y)| / |x-y| dy` by lattice quadrature, with the singular cell
/// integrated exactly for piecewise-constant `V`.
pub fn kato_norm(v: &Field) -> Result<f64> {
    let grid = *v.grid();
    require_3d(&grid)?;
    let a = moduli(v);
    if a.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let h = grid.spacing();
    let conv = convolve_offsets(&a, &grid, |o| {
        let r2 = (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64;
        if r2 == 0.0 {
            CELL_INVERSE_DISTANCE * h * h
        } else {
            h * h / r2.sqrt()
        }
    });
    Ok(conv.into_iter().fold(0.0, f64::max).max(0.0))
}

/// `K(δ) = sup_x ∫_{|x-y|<δ} |V(y)| / |x-y| dy` for each `δ`. The deltas are
/// given in decreasing order and must exceed the grid spacing.
///
/// The profile is accumulated shell by shell with nonnegative pointwise
/// contributions, so it is nondecreasing in `δ` exactly.
pub fn kato_profile(v: &Field, deltas: &[f64]) -> Result<Vec<(f64, f64)>> {
    let grid = *v.grid();
    require_3d(&grid)?;
    let h = grid.spacing();
    if let Some(&d) = deltas.iter().find(|&&d| !(d > h)) {
        return Err(Error::InvalidArgument(format!("profile radius {d} must exceed the spacing {h}")));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("profile radii must be strictly decreasing".into()));
    }
    let a = moduli(v);
    let mut ascending: Vec<f64> = deltas.to_vec();
    ascending.reverse();
    let mut acc = vec![0.0; grid.len()];
    let mut inner = 0.0;
    let mut out = Vec::with_capacity(deltas.len());
    let zero = a.iter().all(|&x| x == 0.0);
    for (k, &delta) in ascending.iter().enumerate() {
        if !zero {
            let shell = convolve_offsets(&a, &grid, |o| {
                let r = ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64).sqrt() * h;
                if r == 0.0 {
                    if k == 0 {
                        CELL_INVERSE_DISTANCE * h * h
                    } else {
                        0.0
                    }
                } else if r >= inner && r < delta {
                    h * h * h / r
                } else {
                    0.0
                }
            });
            acc.iter_mut().zip(shell).for_each(|(s, c)| *s += c.max(0.0));
        }
        inner = delta;
        out.push((delta, acc.iter().copied().fold(0.0, f64::max)));
    }
    out.reverse();
    Ok(out)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollnikEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

/// `∫∫ |V(x)||V(y)| / |x-y|² dx dy`, sampling cell pairs with probability
/// proportional to `|V_i||V_j|`. Diagonal pairs use the exact cell integral.
///
/// Samples are drawn in fixed-size blocks, each from its own random stream,
/// and combined in block order: the result depends on `seed` and `samples`
/// only, not on the thread count.
pub fn rollnik_functional(v: &Field, samples: usize, seed: u64) -> Result<RollnikEstimate> {
    let grid = *v.grid();
    require_3d(&grid)?;
    if samples < 2 {
        return Err(Error::InvalidArgument("Rollnik estimate needs at least 2 samples".into()));
    }
    let a = moduli(v);
    let support: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    if support.is_empty() {
        return Ok(RollnikEstimate { estimate: 0.0, stderr: 0.0, samples, seed });
    }
    let weights: Vec<f64> = support.iter().map(|&i| a[i]).collect();
    let alias = WeightedAliasIndex::new(weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let h = grid.spacing();
    let total = a.iter().sum::<f64>() * grid.cell_volume();
    let points: Vec<[f64; 3]> = support.iter().map(|&i| grid.point(i)).collect();
    let diagonal = CELL_INVERSE_SQUARE_DISTANCE / (h * h);
    let blocks = samples.div_ceil(ROLLNIK_BLOCK);
    let partials: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b as u64);
            let count = ROLLNIK_BLOCK.min(samples - b * ROLLNIK_BLOCK);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let i = alias.sample(&mut rng);
                let j = alias.sample(&mut rng);
                let g = if i == j {
                    diagonal
                } else {
                    let (x, y) = (points[i], points[j]);
                    1.0 / ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2))
                };
                s1 += g;
                s2 += g * g;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = partials.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = samples as f64;
    let mean = s1 / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    let w2 = total * total;
    Ok(RollnikEstimate { estimate: w2 * mean, stderr: w2 * (var / n).sqrt(), samples, seed })
}

/// Everything measured about a potential against the decay hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport {
    pub description: String,
    pub smoothness: Smoothness,
    pub kato_norm: f64,
    pub kato_threshold: f64,
    pub rollnik: f64,
    pub rollnik_stderr: f64,
    pub rollnik_samples: usize,
    pub rollnik_seed: u64,
    pub rollnik_threshold: f64,
    pub kato_profile: Vec<(f64, f64)>,
    /// `‖V‖_{L^{3/2}}`, for reference.
    pub lebesgue: f64,
    pub hypotheses_met: bool,
}

/// Default radii for the profile: halving from `L/4` while above `1.5 h`.
pub fn default_profile_radii(grid: &Grid) -> Vec<f64> {
    let mut out = Vec::new();
    let mut d = 0.25 * grid.extent();
    while d > 1.5 * grid.spacing() {
        out.push(d);
        d *= 0.5;
    }
    out
}

/// Kato norm below `4π` and Rollnik estimate plus three standard errors
/// below `(4π)²`.
pub fn hypothesis_check(v: &Field, samples: usize, seed: u64) -> Result<PotentialReport> {
    let grid = *v.grid();
    require_3d(&grid)?;
    let kato = kato_norm(v)?;
    let rollnik = rollnik_functional(v, samples, seed)?;
    let kato_profile = kato_profile(v, &default_profile_radii(&grid))?;
    Ok(PotentialReport {
        description: "sampled".into(),
        smoothness: Smoothness::Unknown,
        kato_norm: kato,
        kato_threshold: KATO_THRESHOLD,
        rollnik: rollnik.estimate,
        rollnik_stderr: rollnik.stderr,
        rollnik_samples: samples,
        rollnik_seed: seed,
        rollnik_threshold: ROLLNIK_THRESHOLD,
        kato_profile,
        lebesgue: lp_norm(v, 1.5)?,
        hypotheses_met: kato < KATO_THRESHOLD && rollnik.estimate + 3.0 * rollnik.stderr < ROLLNIK_THRESHOLD,
    })
}

impl PotentialReport {
    pub fn with_source(mut self, description: impl Into<String>, smoothness: Smoothness) -> Self {
        self.description = description.into();
        self.smoothness = smoothness;
        self
    }

    /// Short human summary with the thresholds.
    pub fn summary(&self) -> String {
        format!(
            "{}\n  Kato norm      {:.6}  (threshold 4π = {:.6})\n  Rollnik        {:.6} ± {:.6}  (threshold (4π)² = {:.6})\n  L^(3/2) norm   {:.6}\n  smoothness     {:?}\n  hypotheses met {}",
            self.description,
            self.kato_norm,
            self.kato_threshold,
            self.rollnik,
            self.rollnik_stderr,
            self.rollnik_threshold,
            self.lebesgue,
            self.smoothness,
            self.hypotheses_met
        )
    }
}
