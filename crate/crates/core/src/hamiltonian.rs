//! `H = -Δ + V` on a periodic grid, applied matrix-free.
//!
//! Two Laplacians are available: the exact Fourier multiplier `|k|²` and the
//! second-order periodic stencil. Both are real symmetric, so `H` maps real
//! fields to real fields and has an orthonormal real eigenbasis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fft::FftNd;
use crate::lattice::{par_fill, sample_potential, Field, Grid, PotentialSpec, Smoothness};
use crate::{rng, Error, Result};

pub const DEFAULT_DENSE_LIMIT: usize = 4096;
const LANCZOS_STEPS: usize = 50;
const LANCZOS_SEED: u64 = 0x5eed_1a5c;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianScheme {
    #[default]
    FourierSpectral,
    Fd2,
}

/// Spectral enclosure plus Krylov estimates of the extreme eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralRange {
    /// Every eigenvalue lies in `[lo, hi]`.
    pub lo: f64,
    pub hi: f64,
    /// Smallest Ritz value; `λ_min <= lambda_min_estimate`.
    pub lambda_min_estimate: f64,
    /// `lambda_max_estimate <= λ_max`.
    pub lambda_max_estimate: f64,
    /// `λ_min < -1e-6 · hi`.
    pub negative_spectrum: bool,
}

impl SpectralRange {
    pub fn contains(&self, lambda: f64) -> bool {
        lambda >= self.lo && lambda <= self.hi
    }
}

#[derive(Debug, Clone)]
pub struct Hamiltonian {
    grid: Grid,
    potential: Vec<f64>,
    scheme: LaplacianScheme,
    symbol: Vec<f64>,
    fft: Option<FftNd>,
    range: SpectralRange,
    description: String,
    smoothness: Smoothness,
}

impl Hamiltonian {
    pub fn assemble(grid: &Grid, spec: &PotentialSpec, scheme: LaplacianScheme) -> Result<Self> {
        let v = sample_potential(spec, grid)?;
        let mut h = Self::from_potential(&v, scheme)?;
        h.description = spec.describe();
        h.smoothness = spec.smoothness();
        Ok(h)
    }

    /// Build from a sampled real potential; imaginary parts are ignored.
    pub fn from_potential(potential: &Field, scheme: LaplacianScheme) -> Result<Self> {
        let grid = *potential.grid();
        let potential = potential.real_parts();
        let (symbol, fft) = match scheme {
            LaplacianScheme::FourierSpectral => {
                let symbol = (0..grid.len()).map(|i| grid.wavenumber_sq(i)).collect();
                (symbol, Some(FftNd::new(grid.points_per_axis(), grid.dim())))
            }
            LaplacianScheme::Fd2 => (Vec::new(), None),
        };
        let mut h = Self {
            grid,
            potential,
            scheme,
            symbol,
            fft,
            range: SpectralRange {
                lo: 0.0,
                hi: 0.0,
                lambda_min_estimate: 0.0,
                lambda_max_estimate: 0.0,
                negative_spectrum: false,
            },
            description: "sampled".into(),
            smoothness: Smoothness::Unknown,
        };
        h.range = h.compute_range();
        Ok(h)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn potential_field(&self) -> Field {
        Field::from_real(self.grid, &self.potential).expect("potential matches grid")
    }

    pub fn scheme(&self) -> LaplacianScheme {
        self.scheme
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    /// Largest eigenvalue of the discrete `-Δ`.
    pub fn laplacian_max(&self) -> f64 {
        let h = self.grid.spacing();
        let per_axis = match self.scheme {
            LaplacianScheme::FourierSpectral => (std::f64::consts::PI / h).powi(2),
            LaplacianScheme::Fd2 => 4.0 / (h * h),
        };
        self.grid.dim() as f64 * per_axis
    }

    pub fn spectral_range(&self) -> SpectralRange {
        self.range
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        f.ensure_same_grid(&self.grid)?;
        let mut out = vec![Complex64::default(); self.grid.len()];
        self.apply_into(f.values(), &mut out);
        Field::new(self.grid, out)
    }

    pub(crate) fn apply_into(&self, src: &[Complex64], dst: &mut [Complex64]) {
        match self.scheme {
            LaplacianScheme::FourierSpectral => {
                let fft = self.fft.as_ref().expect("spectral scheme carries an FFT plan");
                dst.copy_from_slice(src);
                fft.forward(dst);
                let symbol = &self.symbol;
                if dst.len() >= 1 << 15 {
                    dst.par_iter_mut().zip(symbol.par_iter()).for_each(|(d, s)| *d *= s);
                } else {
                    dst.iter_mut().zip(symbol).for_each(|(d, s)| *d *= s);
                }
                fft.inverse(dst);
                let v = &self.potential;
                if dst.len() >= 1 << 15 {
                    dst.par_iter_mut().enumerate().for_each(|(i, d)| *d += src[i] * v[i]);
                } else {
                    dst.iter_mut().enumerate().for_each(|(i, d)| *d += src[i] * v[i]);
                }
            }
            LaplacianScheme::Fd2 => {
                let n = self.grid.points_per_axis();
                let dim = self.grid.dim();
                let inv_h2 = 1.0 / (self.grid.spacing() * self.grid.spacing());
                let v = &self.potential;
                par_fill(dst, |i| {
                    let mut acc = src[i] * (2.0 * dim as f64 * inv_h2 + v[i]);
                    let mut stride = 1;
                    let mut rest = i;
                    for _ in 0..dim {
                        let coord = rest % n;
                        rest /= n;
                        let up = if coord + 1 == n { i + stride - n * stride } else { i + stride };
                        let down = if coord == 0 { i + (n - 1) * stride } else { i - stride };
                        acc -= (src[up] + src[down]) * inv_h2;
                        stride *= n;
                    }
                    acc
                });
            }
        }
    }

    /// Rigorous bracket `[min V, λ_max(-Δ) + max V]` and Lanczos estimates.
    fn compute_range(&self) -> SpectralRange {
        let vmin = self.potential.iter().copied().fold(f64::INFINITY, f64::min);
        let vmax = self.potential.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Padding absorbs rounding in the operator and in any eigensolver.
        let pad = 1e-10 * (self.laplacian_max() + vmax.abs().max(vmin.abs()));
        let lo = vmin - pad;
        let hi = self.laplacian_max() + vmax + pad;
        let (ritz_min, ritz_max) = self.lanczos_extremes();
        let lambda_min_estimate = ritz_min.clamp(lo, hi);
        let lambda_max_estimate = ritz_max.clamp(lo, hi);
        SpectralRange {
            lo,
            hi,
            lambda_min_estimate,
            lambda_max_estimate,
            negative_spectrum: lambda_min_estimate < -1e-6 * hi,
        }
    }

    /// Extreme Ritz values after a fixed number of Lanczos steps from a
    /// seed-stable real start vector. Ritz values are inner bounds.
    fn lanczos_extremes(&self) -> (f64, f64) {
        let n = self.grid.len();
        let steps = LANCZOS_STEPS.min(n);
        let mut rng = rng::stream(LANCZOS_SEED, 0);
        let mut q: Vec<Complex64> = (0..n)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(x, 0.0)
            })
            .collect();
        let norm = q.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        q.iter_mut().for_each(|z| *z /= norm);
        let mut q_prev = vec![Complex64::default(); n];
        let mut w = vec![Complex64::default(); n];
        let mut alphas = Vec::with_capacity(steps);
        let mut betas: Vec<f64> = Vec::with_capacity(steps);
        let mut beta_prev = 0.0;
        for _ in 0..steps {
            self.apply_into(&q, &mut w);
            let alpha: f64 = q.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
            for i in 0..n {
                w[i] -= q[i] * alpha + q_prev[i] * beta_prev;
            }
            alphas.push(alpha);
            let beta = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if beta <= 1e-12 * alpha.abs().max(1.0) {
                break;
            }
            betas.push(beta);
            std::mem::swap(&mut q_prev, &mut q);
            for i in 0..n {
                q[i] = w[i] / beta;
            }
            beta_prev = beta;
        }
        let m = alphas.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let ritz = SymmetricEigen::new(t).eigenvalues;
        let min = ritz.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ritz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// Explicit real symmetric matrix of `H` (row/column = flat grid index).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let columns: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![Complex64::default(); n];
                e[j] = Complex64::new(1.0, 0.0);
                let mut out = vec![Complex64::default(); n];
                self.apply_into(&e, &mut out);
                out.iter().map(|z| z.re).collect()
            })
            .collect();
        let mut m = DMatrix::from_fn(n, n, |i, j| columns[j][i]);
        // Symmetrize away FFT roundoff.
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        m
    }

    /// Full eigendecomposition of the materialized operator.
    pub fn dense_eig(&self, max_points: usize) -> Result<EigenDecomposition> {
        let n = self.grid.len();
        if n > max_points {
            return Err(Error::TooLarge { points: n, limit: max_points });
        }
        let m = self.to_dense();
        let eig = SymmetricEigen::try_new(m, f64::EPSILON, 100 * n.max(100)).ok_or(Error::NonConvergence)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
        Ok(EigenDecomposition { grid: self.grid, eigenvalues, vectors })
    }
}

/// Sorted eigenvalues with Euclidean-orthonormal real eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    grid: Grid,
    eigenvalues: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenfield `k`, normalized to unit discrete `L²` norm.
    pub fn eigenfield(&self, k: usize) -> Field {
        let scale = 1.0 / self.grid.cell_volume().sqrt();
        let values = self.vectors.column(k).iter().map(|&v| Complex64::new(v * scale, 0.0)).collect();
        Field::from_values_unchecked(self.grid, values)
    }

    /// `Σ_k g(λ_k) <e_k, f> e_k`.
    pub fn apply_fn(&self, g: impl Fn(f64) -> Complex64, f: &Field) -> Result<Field> {
        f.ensure_same_grid(&self.grid)?;
        let re = DVector::from_iterator(f.len(), f.values().iter().map(|z| z.re));
        let im = DVector::from_iterator(f.len(), f.values().iter().map(|z| z.im));
        let cre = self.vectors.tr_mul(&re);
        let cim = self.vectors.tr_mul(&im);
        let mut out_re = DVector::zeros(f.len());
        let mut out_im = DVector::zeros(f.len());
        let mut wre = DVector::zeros(f.len());
        let mut wim = DVector::zeros(f.len());
        for k in 0..self.len() {
            let c = Complex64::new(cre[k], cim[k]) * g(self.eigenvalues[k]);
            wre[k] = c.re;
            wim[k] = c.im;
        }
        out_re.gemv(1.0, &self.vectors, &wre, 0.0);
        out_im.gemv(1.0, &self.vectors, &wim, 0.0);
        let values = out_re.iter().zip(out_im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect();
        Field::new(self.grid, values)
    }

    /// `max_k ‖H e_k - λ_k e_k‖₂ / max(1, |λ_k|)` over Euclidean-unit eigenvectors.
    pub fn max_relative_residual(&self, ham: &Hamiltonian) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|k| {
                let e: Vec<Complex64> = self.vectors.column(k).iter().map(|&v| Complex64::new(v, 0.0)).collect();
                let mut he = vec![Complex64::default(); e.len()];
                ham.apply_into(&e, &mut he);
                let lam = self.eigenvalues[k];
                let r = he.iter().zip(&e).map(|(a, b)| (a - b * lam).norm_sqr()).sum::<f64>().sqrt();
                r / lam.abs().max(1.0)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `max |V^T V - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.vectors.tr_mul(&self.vectors);
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_field, random_real_field};
    use std::f64::consts::PI;

    fn grid1(n: usize, l: f64) -> Grid {
        Grid::new(1, l, n).unwrap()
    }

    #[test]
    fn fd2_free_spectrum_matches_symbol() {
        let g = grid1(64, 10.0);
        let h = Hamiltonian::assemble(&g, &PotentialSpec::Zero, LaplacianScheme::Fd2).unwrap();
        let eig = h.dense_eig(DEFAULT_DENSE_LIMIT).unwrap();
        let hs = g.spacing();
        let mut expected: Vec<f64> =
            (0..64).map(|k| 2.0 / (hs * hs) * (1.0 - (2.0 * PI * k as f64 / 64.0).cos())).collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in eig.eigenvalues().iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn fourier_free_spectrum_matches_symbol() {
        let g = grid1(32, 7.0);
        let h = Hamiltonian::assemble(&g, &PotentialSpec::Zero, LaplacianScheme::FourierSpectral).unwrap();
        let eig = h.dense_eig(DEFAULT_DENSE_LIMIT).unwrap();
        let mut expected: Vec<f64> = (0..32).map(|m| g.wavenumber(m).powi(2)).collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in eig.eigenvalues().iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let g = grid1(32, 6.0);
        let free = Hamiltonian::assemble(&g, &PotentialSpec::Zero, LaplacianScheme::Fd2).unwrap();
        let c = 2.5;
        let shifted = Hamiltonian::from_potential(&Field::from_fn(g, |_| Complex64::new(c, 0.0)), LaplacianScheme::Fd2)
            .unwrap();
        let a = free.dense_eig(DEFAULT_DENSE_LIMIT).unwrap();
        let b = shifted.dense_eig(DEFAULT_DENSE_LIMIT).unwrap();
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            assert!((x + c - y).abs() < 1e-10);
        }
    }

    #[test]
    fn laplacian_annihilates_constants() {
        for scheme in [LaplacianScheme::FourierSpectral, LaplacianScheme::Fd2] {
            let g = Grid::new(2, 5.0, 8).unwrap();
            let h = Hamiltonian::assemble(&g, &PotentialSpec::Zero, scheme).unwrap();
            let f = Field::from_fn(g, |_| Complex64::new(3.0, -1.0));
            assert!(h.apply(&f).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_is_an_exact_eigenfunction() {
        let l = 9.0;
        let g = Grid::new(1, l, 64).unwrap();
        let h = Hamiltonian::assemble(&g, &PotentialSpec::Zero, LaplacianScheme::FourierSpectral).unwrap();
        let k = 2.0 * PI * 5.0 / l;
        let f = Field::from_fn(g, |x| Complex64::from_polar(1.0, k * x[0]));
        let hf = h.apply(&f).unwrap();
        let diff = hf.sub(&f.scale(Complex64::new(k * k, 0.0))).unwrap();
        assert!(diff.max_abs() < 1e-11);
    }

    #[test]
    fn apply_is_symmetric_and_real() {
        let g = Grid::new(2, 6.0, 16).unwrap();
        let spec = PotentialSpec::GaussianWell { depth: -3.0, width: 1.0, center: vec![] };
        for scheme in [LaplacianScheme::FourierSpectral, LaplacianScheme::Fd2] {
            let h = Hamiltonian::assemble(&g, &spec, scheme).unwrap();
            let norm_h = h.spectral_range().hi.abs().max(h.spectral_range().lo.abs());
            for s in 0..100 {
                let f = random_field(&g, 11, 2 * s);
                let k = random_field(&g, 11, 2 * s + 1);
                let lhs = h.apply(&f).unwrap().inner(&k).unwrap();
                let rhs = f.inner(&h.apply(&k).unwrap()).unwrap();
                assert!((lhs - rhs).norm() <= 1e-10 * f.l2_norm() * k.l2_norm() * norm_h);
                let q = h.apply(&f).unwrap().inner(&f).unwrap();
                assert!(q.im.abs() <= 1e-10 * q.norm());
            }
            let r = random_real_field(&g, 3, 0);
            let hr = h.apply(&r).unwrap();
            assert!(hr.values().iter().all(|z| z.im.abs() < 1e-10 * norm_h));
        }
    }

    #[test]
    fn apply_is_linear() {
        let g = grid1(64, 8.0);
        let h = Hamiltonian::assemble(&g, &PotentialSpec::SmoothBump { height: 1.0, radius: 1.0, center: vec![] }, LaplacianScheme::FourierSpectral).unwrap();
        let f = random_field(&g, 5, 0);
        let k = random_field(&g, 5, 1);
        let c = Complex64::new(0.3, -1.2);
        let lhs = h.apply(&f.scale(c).add(&k).unwrap()).unwrap();
        let rhs = h.apply(&f).unwrap().scale(c).add(&h.apply(&k).unwrap()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().l2_norm() < 1e-10 * rhs.l2_norm());
    }

    #[test]
    fn enclosure_brackets() {
        let g = grid1(64, 10.0);
        let h = Hamiltonian::assemble(&g, &PotentialSpec::Zero, LaplacianScheme::Fd2).unwrap();
        let r = h.spectral_range();
        let hs = g.spacing();
        assert!(r.hi >= 4.0 / (hs * hs));
        assert!(r.lo <= 0.0);
        assert!(!r.negative_spectrum);
    }

    #[test]
    fn enclosure_contains_dense_spectrum() {
        let specs = [
            PotentialSpec::Zero,
            PotentialSpec::GaussianWell { depth: -2.0, width: 1.0, center: vec![] },
            PotentialSpec::GaussianWell { depth: -50.0, width: 1.0, center: vec![] },
            PotentialSpec::SmoothBump { height: 1.0, radius: 1.0, center: vec![] },
            PotentialSpec::BallIndicator { height: 4.0, radius: 2.0, center: vec![] },
        ];
        for spec in &specs {
            for scheme in [LaplacianScheme::FourierSpectral, LaplacianScheme::Fd2] {
                let g = grid1(128, 16.0);
                let h = Hamiltonian::assemble(&g, spec, scheme).unwrap();
                let r = h.spectral_range();
                let eig = h.dense_eig(DEFAULT_DENSE_LIMIT).unwrap();
                let (min, max) = (eig.eigenvalues()[0], *eig.eigenvalues().last().unwrap());
                assert!(eig.eigenvalues().iter().all(|&l| r.contains(l)), "{spec:?} {scheme:?}");
                assert!(r.lambda_min_estimate >= min - 1e-9 * r.hi);
                assert!(r.lambda_max_estimate <= max + 1e-9 * r.hi);
            }
        }
    }

    #[test]
    fn deep_well_flags_negative_spectrum() {
        let g = grid1(256, 20.0);
        let spec = PotentialSpec::GaussianWell { depth: -50.0, width: 1.0, center: vec![] };
        let h = Hamiltonian::assemble(&g, &spec, LaplacianScheme::FourierSpectral).unwrap();
        let eig = h.dense_eig(DEFAULT_DENSE_LIMIT).unwrap();
        assert!(eig.eigenvalues()[0] < 0.0);
        assert!(h.spectral_range().negative_spectrum);

        let bump = PotentialSpec::SmoothBump { height: 1.0, radius: 1.0, center: vec![] };
        let h = Hamiltonian::assemble(&g, &bump, LaplacianScheme::FourierSpectral).unwrap();
        assert!(!h.spectral_range().negative_spectrum);
    }

    #[test]
    fn dense_eig_contract() {
        let g = grid1(96, 12.0);
        let spec = PotentialSpec::GaussianWell { depth: -2.0, width: 1.0, center: vec![] };
        let h = Hamiltonian::assemble(&g, &spec, LaplacianScheme::FourierSpectral).unwrap();
        let eig = h.dense_eig(DEFAULT_DENSE_LIMIT).unwrap();
        assert!(eig.max_relative_residual(&h) <= 1e-8);
        assert!(eig.orthonormality_defect() <= 1e-10);
        assert!((eig.eigenfield(3).l2_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_eig_respects_limit() {
        let g = Grid::new(3, 16.0, 32).unwrap();
        let h = Hamiltonian::assemble(&g, &PotentialSpec::Zero, LaplacianScheme::Fd2).unwrap();
        assert!(matches!(h.dense_eig(DEFAULT_DENSE_LIMIT), Err(Error::TooLarge { points: 32768, .. })));
    }

    #[test]
    fn apply_rejects_foreign_grid() {
        let h = Hamiltonian::assemble(&grid1(16, 4.0), &PotentialSpec::Zero, LaplacianScheme::Fd2).unwrap();
        assert!(h.apply(&Field::zeros(grid1(32, 4.0))).is_err());
    }
}
