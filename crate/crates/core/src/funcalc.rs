//! Functional calculus `g(H) f` by Chebyshev expansion.
//!
//! A scalar function is fitted on an interval `[a, b]` that contains the
//! spectral enclosure of `H` with a 1% margin on each side, then applied to a
//! field with the Clenshaw recurrence in the operator argument
//! `Ĥ = (2H - (a+b)) / (b - a)`. Only matrix-vector products with `H` are
//! needed, so the same machinery serves the dyadic windows `φ_j(H)` and the
//! propagator phases `e^{-itH}`.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use parking_lot::{Mutex, RwLock};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dyadic::{self, DyadicSystem};
use crate::hamiltonian::{EigenDecomposition, Hamiltonian, DEFAULT_DENSE_LIMIT};
use crate::lattice::Field;
use crate::{Error, Result};

const MIN_FIT_POINTS: usize = 32;
const TAIL_LEN: usize = 10;
const PAR_LEN: usize = 1 << 14;

/// What a [`ChebFunction`] approximates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Window { j: usize },
    Phase { t: f64 },
    Custom { label: String },
}

/// Chebyshev expansion `Σ c_k T_k(x)` of a function on `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebFunction {
    pub target: Target,
    interval: (f64, f64),
    coeffs: Vec<Complex64>,
    /// `max |c_k|` over the last ten fitted coefficients.
    tail_bound: f64,
    max_coeff: f64,
    converged: bool,
    fit_points: usize,
}

impl ChebFunction {
    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn max_coeff(&self) -> f64 {
        self.max_coeff
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Number of collocation points of the accepted fit.
    pub fn fit_points(&self) -> usize {
        self.fit_points
    }

    /// Scalar evaluation by Clenshaw.
    pub fn eval(&self, lambda: f64) -> Complex64 {
        let (a, b) = self.interval;
        let x = (2.0 * lambda - (a + b)) / (b - a);
        let mut b1 = Complex64::default();
        let mut b2 = Complex64::default();
        for c in self.coeffs.iter().skip(1).rev() {
            let next = c + b1 * (2.0 * x) - b2;
            b2 = b1;
            b1 = next;
        }
        self.coeffs.first().copied().unwrap_or_default() + b1 * x - b2
    }

    pub fn summary(&self) -> ChebSummary {
        let tail_start = self.coeffs.len().saturating_sub(TAIL_LEN);
        ChebSummary {
            target: self.target.clone(),
            interval: self.interval,
            degree: self.degree(),
            fit_points: self.fit_points,
            tail_bound: self.tail_bound,
            max_coeff: self.max_coeff,
            converged: self.converged,
            tail: self.coeffs[tail_start..].iter().map(|c| c.norm()).collect(),
        }
    }
}

/// Coefficient-tail diagnostics of one expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebSummary {
    pub target: Target,
    pub interval: (f64, f64),
    pub degree: usize,
    pub fit_points: usize,
    pub tail_bound: f64,
    pub max_coeff: f64,
    pub converged: bool,
    pub tail: Vec<f64>,
}

/// Fit `g` on `interval` by collocation at Chebyshev points of the first
/// kind, doubling the point count from `max(32, min_points)` until the last
/// ten coefficients fall below `tol · max|c_k|` or `max_points` is reached.
///
/// A fit that hits the cap is returned with `converged() == false`.
pub fn cheb_fit<G>(
    g: G,
    interval: (f64, f64),
    tol: f64,
    max_points: usize,
    min_points: usize,
    target: Target,
) -> Result<ChebFunction>
where
    G: Fn(f64) -> Complex64 + Sync,
{
    let (a, b) = interval;
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(Error::InvalidArgument(format!("bad interval [{a}, {b}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let max_points = max_points.max(MIN_FIT_POINTS);
    let mut m = min_points.max(MIN_FIT_POINTS).min(max_points);
    let mut planner = FftPlanner::new();
    loop {
        let coeffs = chebyshev_coefficients(&g, interval, m, &mut planner);
        let max_coeff = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let tail_bound = coeffs[m - TAIL_LEN..].iter().map(|c| c.norm()).fold(0.0, f64::max);
        let converged = tail_bound <= tol * max_coeff || max_coeff == 0.0;
        if converged || m >= max_points {
            if !converged {
                log::warn!("Chebyshev fit of {target:?} not converged at {m} points (tail {tail_bound:e})");
            }
            let coeffs = chop(coeffs, 0.1 * tol * max_coeff);
            return Ok(ChebFunction { target, interval, coeffs, tail_bound, max_coeff, converged, fit_points: m });
        }
        m = (2 * m).min(max_points);
    }
}

/// Drop trailing coefficients while their summed modulus stays below `budget`.
fn chop(mut coeffs: Vec<Complex64>, budget: f64) -> Vec<Complex64> {
    let mut dropped = 0.0;
    while coeffs.len() > 1 {
        let last = coeffs[coeffs.len() - 1].norm();
        if dropped + last > budget {
            break;
        }
        dropped += last;
        coeffs.pop();
    }
    coeffs
}

/// DCT-II of samples at `x_j = cos(π(j+1/2)/m)` through a length-`2m` FFT.
fn chebyshev_coefficients<G>(g: &G, (a, b): (f64, f64), m: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex64>
where
    G: Fn(f64) -> Complex64 + Sync,
{
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let pi = std::f64::consts::PI;
    let samples: Vec<Complex64> = (0..m)
        .into_par_iter()
        .map(|j| g(mid + half * (pi * (j as f64 + 0.5) / m as f64).cos()))
        .collect();
    let mut buf = vec![Complex64::default(); 2 * m];
    for (j, &s) in samples.iter().enumerate() {
        buf[j] = s;
        buf[2 * m - 1 - j] = s;
    }
    planner.plan_fft_forward(2 * m).process(&mut buf);
    let mut coeffs: Vec<Complex64> = (0..m)
        .map(|k| Complex64::from_polar(1.0 / m as f64, -pi * k as f64 / (2.0 * m as f64)) * buf[k])
        .collect();
    coeffs[0] *= 0.5;
    coeffs
}

/// Tolerances and caps of the calculus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalculusOptions {
    pub window_tol: f64,
    pub phase_tol: f64,
    /// Cap on collocation points (and hence on the degree).
    pub max_points: usize,
    /// Largest `t (b-a)/2` handled by one propagator step.
    pub max_phase_step: f64,
    /// Relative inflation of the spectral enclosure on each side.
    pub margin: f64,
}

impl Default for CalculusOptions {
    fn default() -> Self {
        Self { window_tol: 1e-10, phase_tol: 1e-9, max_points: 65536, max_phase_step: 2000.0, margin: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum CacheKey {
    Window(usize),
    Phase(u64),
    Custom(String),
}

/// `H` together with its expansion interval, coefficient cache and
/// (lazily) its dense eigendecomposition.
pub struct FunctionalCalculus {
    ham: Hamiltonian,
    interval: (f64, f64),
    options: CalculusOptions,
    cache: RwLock<HashMap<CacheKey, Arc<ChebFunction>>>,
    dense: Mutex<Option<Arc<EigenDecomposition>>>,
}

impl std::fmt::Debug for FunctionalCalculus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionalCalculus")
            .field("grid", self.ham.grid())
            .field("interval", &self.interval)
            .field("options", &self.options)
            .finish()
    }
}

impl FunctionalCalculus {
    pub fn new(ham: Hamiltonian) -> Self {
        Self::with_options(ham, CalculusOptions::default())
    }

    pub fn with_options(ham: Hamiltonian, options: CalculusOptions) -> Self {
        let r = ham.spectral_range();
        let width = (r.hi - r.lo).max(1e-12);
        let interval = (r.lo - options.margin * width, r.hi + options.margin * width);
        Self { ham, interval, options, cache: RwLock::new(HashMap::new()), dense: Mutex::new(None) }
    }

    pub fn ham(&self) -> &Hamiltonian {
        &self.ham
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn options(&self) -> &CalculusOptions {
        &self.options
    }

    /// Smallest dyadic system whose windows cover the spectral enclosure.
    pub fn dyadic_system(&self) -> DyadicSystem {
        let r = self.ham.spectral_range();
        DyadicSystem::for_spectrum(r.lo, r.hi)
    }

    fn cached(&self, key: CacheKey, fit: impl FnOnce() -> Result<ChebFunction>) -> Result<Arc<ChebFunction>> {
        if let Some(cf) = self.cache.read().get(&key) {
            return Ok(cf.clone());
        }
        // Fits are deterministic, so a concurrent duplicate insert is harmless.
        let cf = Arc::new(fit()?);
        self.cache.write().insert(key, cf.clone());
        Ok(cf)
    }

    /// Collocation points needed to put eight points across each band.
    fn resolution_hint(&self, bands: &[(f64, f64)]) -> usize {
        let (a, b) = self.interval;
        let half = 0.5 * (b - a);
        let pi = std::f64::consts::PI;
        let mut need: f64 = 0.0;
        for &(lo, hi) in bands {
            let (lo, hi) = (lo.max(a), hi.min(b));
            if hi <= lo {
                continue;
            }
            let w = hi - lo;
            for lambda in [lo, 0.5 * (lo + hi), hi] {
                let x = ((2.0 * lambda - (a + b)) / (b - a)).clamp(-1.0, 1.0);
                let interior = 8.0 * pi * half * (1.0 - x * x).sqrt() / w;
                let edge = (4.0 * pi * pi * half / w).sqrt();
                need = need.max(interior.max(edge));
            }
        }
        need.ceil() as usize
    }

    pub fn window(&self, j: usize) -> Result<Arc<ChebFunction>> {
        self.cached(CacheKey::Window(j), || {
            let mut bands = DyadicSystem::transition_bands(j);
            bands.extend(bands.clone().into_iter().map(|(lo, hi)| (-hi, -lo)));
            let hint = self.resolution_hint(&bands);
            cheb_fit(
                |x| Complex64::new(dyadic::window(j, x), 0.0),
                self.interval,
                self.options.window_tol,
                self.options.max_points,
                hint,
                Target::Window { j },
            )
        })
    }

    /// Expansion of `e^{-itλ}` for one step; `|t|(b-a)/2` should not exceed
    /// `max_phase_step`.
    pub fn phase(&self, t: f64) -> Result<Arc<ChebFunction>> {
        self.cached(CacheKey::Phase(t.to_bits()), || {
            let (a, b) = self.interval;
            let tau = t.abs() * 0.5 * (b - a);
            let hint = (1.1 * tau).ceil() as usize + 32;
            cheb_fit(
                |lambda| Complex64::from_polar(1.0, -t * lambda),
                self.interval,
                self.options.phase_tol,
                self.options.max_points,
                hint,
                Target::Phase { t },
            )
        })
    }

    /// Fit and cache an arbitrary function under `label`.
    pub fn custom<G>(&self, label: &str, tol: f64, min_points: usize, g: G) -> Result<Arc<ChebFunction>>
    where
        G: Fn(f64) -> Complex64 + Sync,
    {
        self.cached(CacheKey::Custom(label.to_string()), || {
            cheb_fit(g, self.interval, tol, self.options.max_points, min_points, Target::Custom { label: label.into() })
        })
    }

    pub fn resolution_hint_for(&self, bands: &[(f64, f64)]) -> usize {
        self.resolution_hint(bands)
    }

    /// Every cached expansion, for diagnostics dumps.
    pub fn diagnostics(&self) -> Vec<ChebSummary> {
        let mut out: Vec<ChebSummary> = self.cache.read().values().map(|cf| cf.summary()).collect();
        out.sort_by(|a, b| format!("{:?}", a.target).cmp(&format!("{:?}", b.target)));
        out
    }

    /// True when every cached expansion met its tolerance.
    pub fn all_converged(&self) -> bool {
        self.cache.read().values().all(|cf| cf.converged())
    }

    fn check_expansion(&self, cf: &ChebFunction, f: &Field) -> Result<()> {
        f.ensure_same_grid(self.ham.grid())?;
        let (a, b) = cf.interval();
        let r = self.ham.spectral_range();
        if a > r.lo || b < r.hi {
            return Err(Error::IntervalMismatch { a, b, lo: r.lo, hi: r.hi });
        }
        Ok(())
    }

    /// `Σ c_k T_k(Ĥ) f` by Clenshaw's recurrence.
    pub fn apply_function(&self, cf: &ChebFunction, f: &Field) -> Result<Field> {
        self.check_expansion(cf, f)?;
        let (a, b) = cf.interval();
        let scale = 2.0 / (b - a);
        let shift = (a + b) / (b - a);
        let coeffs = cf.coefficients();
        let src = f.values();
        let n = src.len();
        let deg = cf.degree();
        if deg == 0 {
            return Ok(f.scale(coeffs[0]));
        }
        let mut b1 = vec![Complex64::default(); n];
        let mut b2 = vec![Complex64::default(); n];
        let mut hv = vec![Complex64::default(); n];
        // k = deg: b_deg = c_deg f.
        b1.iter_mut().zip(src).for_each(|(d, s)| *d = s * coeffs[deg]);
        for k in (1..deg).rev() {
            self.ham.apply_into(&b1, &mut hv);
            let c = coeffs[k];
            // b2 <- c f + 2 Ĥ b1 - b2, then swap so b1 holds b_k.
            zip4(&mut b2, &hv, &b1, src, |b2, hv, b1, s| s * c + (hv * scale - b1 * shift) * 2.0 - b2);
            std::mem::swap(&mut b1, &mut b2);
        }
        self.ham.apply_into(&b1, &mut hv);
        let c0 = coeffs[0];
        zip4(&mut b2, &hv, &b1, src, |b2, hv, b1, s| s * c0 + (hv * scale - b1 * shift) - b2);
        Field::new(*f.grid(), b2)
    }

    /// Several expansions on the same interval applied to one field through a
    /// shared forward recurrence `t_{k+1} = 2Ĥ t_k - t_{k-1}`: one pass of
    /// matrix-vector products for all of them.
    pub fn apply_many(&self, cfs: &[Arc<ChebFunction>], f: &Field) -> Result<Vec<Field>> {
        for cf in cfs {
            self.check_expansion(cf, f)?;
            if cf.interval() != self.interval {
                let (a, b) = cf.interval();
                return Err(Error::InvalidArgument(format!(
                    "apply_many needs a common interval, got [{a}, {b}] and {:?}",
                    self.interval
                )));
            }
        }
        let (a, b) = self.interval;
        let scale = 2.0 / (b - a);
        let shift = (a + b) / (b - a);
        let n = f.len();
        let src = f.values();
        let max_deg = cfs.iter().map(|cf| cf.degree()).max().unwrap_or(0);
        let mut accs: Vec<Vec<Complex64>> =
            cfs.iter().map(|cf| src.iter().map(|s| s * cf.coefficients()[0]).collect()).collect();
        if max_deg >= 1 {
            let mut prev = src.to_vec();
            let mut cur = vec![Complex64::default(); n];
            let mut hv = vec![Complex64::default(); n];
            self.ham.apply_into(&prev, &mut hv);
            zip2(&mut cur, &hv, &prev, |_, hv, p| hv * scale - p * shift);
            for k in 1..=max_deg {
                if k > 1 {
                    self.ham.apply_into(&cur, &mut hv);
                    // prev <- 2 Ĥ cur - prev, then swap.
                    zip4(&mut prev, &hv, &cur, src, |p, hv, c, _| (hv * scale - c * shift) * 2.0 - p);
                    std::mem::swap(&mut prev, &mut cur);
                }
                let tk = &cur;
                accs.par_iter_mut().zip(cfs.par_iter()).for_each(|(acc, cf)| {
                    if let Some(&c) = cf.coefficients().get(k) {
                        acc.iter_mut().zip(tk).for_each(|(a, t)| *a += t * c);
                    }
                });
            }
        }
        accs.into_iter().map(|v| Field::new(*f.grid(), v)).collect()
    }

    fn check_resolved(&self, sys: &DyadicSystem) -> Result<()> {
        let r = self.ham.spectral_range();
        let needed = r.lo.abs().max(r.hi.abs());
        if sys.resolved_radius() < needed {
            return Err(Error::UnderResolved { resolved: sys.resolved_radius(), needed });
        }
        Ok(())
    }

    /// `φ_j(H) f`.
    pub fn window_project(&self, sys: &DyadicSystem, j: usize, f: &Field) -> Result<Field> {
        self.check_resolved(sys)?;
        if j > sys.j_max() {
            return Err(Error::InvalidArgument(format!("window {j} outside 0..={}", sys.j_max())));
        }
        let cf = self.window(j)?;
        self.apply_function(&cf, f)
    }

    /// `[φ_0(H) f, …, φ_J(H) f]`.
    pub fn lp_decompose(&self, sys: &DyadicSystem, f: &Field) -> Result<Vec<Field>> {
        self.check_resolved(sys)?;
        let cfs = (0..=sys.j_max()).map(|j| self.window(j)).collect::<Result<Vec<_>>>()?;
        self.apply_many(&cfs, f)
    }

    /// Dense eigendecomposition of `H`, computed once.
    pub fn dense(&self) -> Result<Arc<EigenDecomposition>> {
        let mut slot = self.dense.lock();
        if let Some(d) = slot.as_ref() {
            return Ok(d.clone());
        }
        let d = Arc::new(self.ham.dense_eig(DEFAULT_DENSE_LIMIT)?);
        *slot = Some(d.clone());
        Ok(d)
    }

    /// `φ_j(H) f` through the dense eigendecomposition.
    pub fn dense_window_project(&self, j: usize, f: &Field) -> Result<Field> {
        self.dense()?.apply_fn(|l| Complex64::new(dyadic::window(j, l), 0.0), f)
    }
}

fn zip2(
    out: &mut [Complex64],
    x: &[Complex64],
    y: &[Complex64],
    op: impl Fn(Complex64, Complex64, Complex64) -> Complex64 + Sync + Send,
) {
    if out.len() >= PAR_LEN {
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = op(*o, x[i], y[i]));
    } else {
        out.iter_mut().enumerate().for_each(|(i, o)| *o = op(*o, x[i], y[i]));
    }
}

fn zip4(
    out: &mut [Complex64],
    x: &[Complex64],
    y: &[Complex64],
    z: &[Complex64],
    op: impl Fn(Complex64, Complex64, Complex64, Complex64) -> Complex64 + Sync + Send,
) {
    if out.len() >= PAR_LEN {
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = op(*o, x[i], y[i], z[i]));
    } else {
        out.iter_mut().enumerate().for_each(|(i, o)| *o = op(*o, x[i], y[i], z[i]));
    }
}
