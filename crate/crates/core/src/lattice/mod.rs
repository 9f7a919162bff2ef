//! Grids, complex grid functions and discrete `L^p` norms.
//!
//! Fields are stored row-major with the last axis fastest. Point `i` along
//! an axis sits at `-L/2 + i h`, `h = L/N`, and every point carries the
//! quadrature weight `h^d`.

mod io;
mod potential;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{load_field, read_field, save_field, write_field};
pub use potential::{concentration_warning, gaussian_packet, sample_potential, PotentialSpec, Smoothness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Periodic,
}

/// Uniform periodic box `[-L/2, L/2)^d`, `N` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extent: f64,
    points: usize,
}

impl Grid {
    pub fn new(dim: usize, extent: f64, points_per_axis: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2, 3}}")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidGrid(format!("extent {extent} must be positive")));
        }
        if points_per_axis < 4 {
            return Err(Error::InvalidGrid(format!(
                "{points_per_axis} points per axis, need at least 4"
            )));
        }
        Ok(Self { dim, extent, points: points_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn boundary(&self) -> Boundary {
        Boundary::Periodic
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.points as f64
    }

    /// Total number of points, `N^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^d`; also the quadrature weight of every point.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.extent + i as f64 * self.spacing()
    }

    /// Angular wavenumber of FFT bin `m`, in `[-π/h, π/h)`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        let n = self.points as i64;
        let m = m as i64;
        let signed = if m < (n + 1) / 2 { m } else { m - n };
        2.0 * std::f64::consts::PI * signed as f64 / self.extent
    }

    /// Per-axis indices of flat index `idx` (unused axes are zero).
    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.points;
            idx /= self.points;
        }
        out
    }

    /// Coordinates of point `idx` (unused axes are zero).
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.coordinate(m[axis]);
        }
        x
    }

    /// `|k|^2` of flat FFT index `idx`.
    pub fn wavenumber_sq(&self, idx: usize) -> f64 {
        let m = self.multi_index(idx);
        (0..self.dim).map(|a| self.wavenumber(m[a]).powi(2)).sum()
    }
}

/// Complex-valued function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: Grid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![Complex64::default(); grid.len()] }
    }

    /// Sample `f` at every grid point.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.point(i);
                f(&x[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn ensure_same_grid(&self, other: &Grid) -> Result<()> {
        if &self.grid != other {
            return Err(Error::GridMismatch(format!(
                "field lives on {:?}, expected {:?}",
                self.grid, other
            )));
        }
        Ok(())
    }

    pub fn scale(&self, c: Complex64) -> Field {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        other.ensure_same_grid(&self.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        other.ensure_same_grid(&self.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field { grid: self.grid, values })
    }

    /// Sum of fields on a common grid.
    pub fn sum<'a>(grid: Grid, fields: impl IntoIterator<Item = &'a Field>) -> Result<Field> {
        let mut acc = vec![Complex64::default(); grid.len()];
        for f in fields {
            f.ensure_same_grid(&grid)?;
            acc.iter_mut().zip(&f.values).for_each(|(a, b)| *a += b);
        }
        Ok(Field { grid, values: acc })
    }

    /// `<self, other> = Σ conj(self) other h^d`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        other.ensure_same_grid(&self.grid)?;
        let terms: Vec<Complex64> =
            self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).collect();
        Ok(pairwise_sum_c(&terms) * self.grid.cell_volume())
    }

    pub fn l2_norm(&self) -> f64 {
        lp_norm(self, 2.0).expect("p = 2 is valid")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Discrete `L^p` norm `(Σ |f_i|^p h^d)^{1/p}`; the grid maximum for `p = ∞`.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("L^p exponent {p} < 1")));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    Ok(lp_norm_of_moduli(&f.values.iter().map(|v| v.norm()).collect::<Vec<_>>(), p, f.grid.cell_volume()))
}

pub(crate) fn lp_norm_of_moduli(moduli: &[f64], p: f64, weight: f64) -> f64 {
    if p.is_infinite() {
        return moduli.iter().copied().fold(0.0, f64::max);
    }
    let powered: Vec<f64> = if p == 2.0 {
        moduli.iter().map(|m| m * m).collect()
    } else if p == 1.0 {
        moduli.to_vec()
    } else {
        moduli.iter().map(|m| m.powf(p)).collect()
    };
    let s = pairwise_sum(&powered) * weight;
    if p == 1.0 {
        s
    } else if p == 2.0 {
        s.sqrt()
    } else {
        s.powf(1.0 / p)
    }
}

const PAIRWISE_BASE: usize = 256;

/// Deterministic tree summation; the split points depend only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BASE {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    if xs.len() > 1 << 16 {
        let (x, y) = rayon::join(|| pairwise_sum(a), || pairwise_sum(b));
        x + y
    } else {
        pairwise_sum(a) + pairwise_sum(b)
    }
}

pub(crate) fn pairwise_sum_c(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= PAIRWISE_BASE {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    if xs.len() > 1 << 16 {
        let (x, y) = rayon::join(|| pairwise_sum_c(a), || pairwise_sum_c(b));
        x + y
    } else {
        pairwise_sum_c(a) + pairwise_sum_c(b)
    }
}

/// Parallel `out[i] = f(i)` over a mutable slice, for large fields only.
pub(crate) fn par_fill(out: &mut [Complex64], f: impl Fn(usize) -> Complex64 + Sync + Send) {
    if out.len() >= 1 << 15 {
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    } else {
        out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
}
