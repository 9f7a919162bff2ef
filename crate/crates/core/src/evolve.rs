//! The propagator `e^{-itH}`.
//!
//! Long times are reached by chaining equal steps whose phase expansion stays
//! within `max_phase_step`; each step reuses one cached expansion.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fft::FftNd;
use crate::funcalc::FunctionalCalculus;
use crate::lattice::{save_field, Field, Grid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationMethod {
    #[default]
    ChebyshevPhase,
    DenseOracle,
}

/// Number of equal steps needed to reach `t`.
pub fn step_count(calc: &FunctionalCalculus, t: f64) -> usize {
    let (a, b) = calc.interval();
    let tau = t.abs() * 0.5 * (b - a);
    ((tau / calc.options().max_phase_step).ceil() as usize).max(1)
}

fn evolve_signed(calc: &FunctionalCalculus, f: &Field, t: f64, method: PropagationMethod) -> Result<Field> {
    f.ensure_same_grid(calc.ham().grid())?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t} is not finite")));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    match method {
        PropagationMethod::DenseOracle => calc.dense()?.apply_fn(|l| Complex64::from_polar(1.0, -t * l), f),
        PropagationMethod::ChebyshevPhase => {
            let steps = step_count(calc, t);
            let cf = calc.phase(t / steps as f64)?;
            if !cf.converged() {
                return Err(Error::NonConverged { degree: cf.degree(), tail: cf.tail_bound() });
            }
            let mut u = calc.apply_function(&cf, f)?;
            for _ in 1..steps {
                u = calc.apply_function(&cf, &u)?;
            }
            Ok(u)
        }
    }
}

/// `e^{-itH} f` for `t ≥ 0`.
pub fn propagate(calc: &FunctionalCalculus, f: &Field, t: f64, method: PropagationMethod) -> Result<Field> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time {t} must be nonnegative")));
    }
    evolve_signed(calc, f, t, method)
}

/// `e^{itH} f`, from the conjugate phase expansion.
pub fn propagate_backward(calc: &FunctionalCalculus, f: &Field, t: f64, method: PropagationMethod) -> Result<Field> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time {t} must be nonnegative")));
    }
    evolve_signed(calc, f, -t, method)
}

/// States along a trajectory with conservation diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagationResult {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<Field>,
    /// `max_t |‖u(t)‖₂ - ‖u(0)‖₂|`.
    pub l2_drift: f64,
    /// `max_t |⟨Hu(t), u(t)⟩ - ⟨Hu(0), u(0)⟩| / max(|⟨Hu(0), u(0)⟩|, ‖H‖‖u(0)‖²·ε)`.
    pub energy_drift: f64,
    pub method: PropagationMethod,
    pub converged: bool,
}

fn energy(calc: &FunctionalCalculus, u: &Field) -> Result<f64> {
    Ok(calc.ham().apply(u)?.inner(u)?.re)
}

/// Propagate through ascending `times`, stepping from each state to the next.
pub fn propagate_series(
    calc: &FunctionalCalculus,
    f: &Field,
    times: &[f64],
    method: PropagationMethod,
) -> Result<PropagationResult> {
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must be nonnegative and ascending".into()));
    }
    let n0 = f.l2_norm();
    let e0 = energy(calc, f)?;
    let mut states: Vec<Field> = Vec::with_capacity(times.len());
    let mut current = f.clone();
    let mut t_prev = 0.0;
    let (mut l2_drift, mut e_drift) = (0.0f64, 0.0f64);
    for &t in times {
        current = evolve_signed(calc, &current, t - t_prev, method)?;
        t_prev = t;
        l2_drift = l2_drift.max((current.l2_norm() - n0).abs());
        e_drift = e_drift.max((energy(calc, &current)? - e0).abs());
        states.push(current.clone());
    }
    let floor = calc.ham().spectral_range().hi.abs() * n0 * n0 * 1e-12;
    Ok(PropagationResult {
        times: times.to_vec(),
        states,
        l2_drift,
        energy_drift: e_drift / e0.abs().max(floor).max(f64::MIN_POSITIVE),
        method,
        converged: calc.all_converged(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    t: f64,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    grid: Grid,
    method: PropagationMethod,
    l2_drift: f64,
    energy_drift: f64,
    converged: bool,
    states: Vec<ManifestEntry>,
}

/// One field file per time plus `manifest.json`; returns the manifest path.
pub fn write_trajectory(result: &PropagationResult, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(result.states.len());
    for (k, (t, u)) in result.times.iter().zip(&result.states).enumerate() {
        let file = format!("{stem}_{k:04}.lpsf");
        save_field(u, dir.join(&file))?;
        entries.push(ManifestEntry { t: *t, file });
    }
    let grid = result.states.first().map(|u| *u.grid()).ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let manifest = Manifest {
        grid,
        method: result.method,
        l2_drift: result.l2_drift,
        energy_drift: result.energy_drift,
        converged: result.converged,
        states: entries,
    };
    let path = dir.join(format!("{stem}_manifest.json"));
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&path, json)?;
    Ok(path)
}

/// Position and momentum spread of a packet, for wrap-around control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketEnvelope {
    /// Centre of `|f|²` per axis.
    pub center: Vec<f64>,
    /// `√2 ·` the largest per-axis standard deviation of `|f|²`; equals `σ`
    /// for `exp(-|x|²/(2σ²))`.
    pub width: f64,
    /// `|mean k| + 2 std k` of `|f̂|²` per axis.
    pub k_max: Vec<f64>,
}

impl PacketEnvelope {
    pub fn of(f: &Field) -> Self {
        let grid = *f.grid();
        let dim = grid.dim();
        let weights: Vec<f64> = f.values().iter().map(|z| z.norm_sqr()).collect();
        let (center, std_x) = moments(&grid, &weights, |g, m| g.coordinate(m));
        let fft = FftNd::new(grid.points_per_axis(), dim);
        let mut spec = f.values().to_vec();
        fft.forward(&mut spec);
        let kweights: Vec<f64> = spec.iter().map(|z| z.norm_sqr()).collect();
        let (mean_k, std_k) = moments(&grid, &kweights, |g, m| g.wavenumber(m));
        let width = std::f64::consts::SQRT_2 * std_x.iter().copied().fold(0.0, f64::max);
        let k_max = mean_k.iter().zip(&std_k).map(|(m, s)| m.abs() + 2.0 * s).collect();
        Self { center, width, k_max }
    }

    /// Largest `T` with `L ≥ 2(|c_a| + 6σ + 2 k_max,a T)` on every axis.
    pub fn max_unwrapped_time(&self, grid: &Grid) -> f64 {
        let half = 0.5 * grid.extent();
        self.center
            .iter()
            .zip(&self.k_max)
            .map(|(c, k)| {
                let room = half - c.abs() - 6.0 * self.width;
                if room < 0.0 {
                    0.0
                } else if *k == 0.0 {
                    f64::INFINITY
                } else {
                    room / (2.0 * k)
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn wraps_before(&self, grid: &Grid, t: f64) -> bool {
        t > self.max_unwrapped_time(grid)
    }
}

/// Per-axis mean and standard deviation of `coord(axis index)` under weights.
fn moments(grid: &Grid, weights: &[f64], coord: impl Fn(&Grid, usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let dim = grid.dim();
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; dim];
    let mut second = vec![0.0; dim];
    if total > 0.0 {
        for (i, w) in weights.iter().enumerate() {
            let idx = grid.multi_index(i);
            for a in 0..dim {
                let x = coord(grid, idx[a]);
                mean[a] += w * x;
                second[a] += w * x * x;
            }
        }
    }
    let mut std = vec![0.0; dim];
    for a in 0..dim {
        if total > 0.0 {
            mean[a] /= total;
            std[a] = (second[a] / total - mean[a] * mean[a]).max(0.0).sqrt();
        }
    }
    (mean, std)
}

/// `sup |u(t)| / sup |u(0)|` for a free Gaussian `exp(-|x|²/(2σ²))` in `d`
/// dimensions under `i u_t = -Δu`.
pub fn free_gaussian_sup_ratio(dim: usize, sigma: f64, t: f64) -> f64 {
    (1.0 + 4.0 * t * t / sigma.powi(4)).powf(-(dim as f64) / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{Hamiltonian, LaplacianScheme};
    use crate::lattice::{gaussian_packet, PotentialSpec};
    use crate::rng::random_field;

    fn calc(n: usize, l: f64, spec: PotentialSpec, scheme: LaplacianScheme) -> FunctionalCalculus {
        let g = Grid::new(1, l, n).unwrap();
        FunctionalCalculus::new(Hamiltonian::assemble(&g, &spec, scheme).unwrap())
    }

    fn well() -> PotentialSpec {
        PotentialSpec::GaussianWell { depth: -2.0, width: 1.0, center: vec![] }
    }

    #[test]
    fn zero_time_is_identity() {
        let c = calc(64, 16.0, well(), LaplacianScheme::FourierSpectral);
        let f = random_field(c.ham().grid(), 1, 0);
        let u = propagate(&c, &f, 0.0, PropagationMethod::ChebyshevPhase).unwrap();
        assert!(u.sub(&f).unwrap().l2_norm() <= 1e-12 * f.l2_norm());
        assert!(propagate(&c, &f, -1.0, PropagationMethod::ChebyshevPhase).is_err());
    }

    #[test]
    fn plane_wave_phase() {
        let l = 16.0;
        let c = calc(64, l, PotentialSpec::Zero, LaplacianScheme::FourierSpectral);
        let k = 2.0 * std::f64::consts::PI * 3.0 / l;
        let f = Field::from_fn(*c.ham().grid(), |x| Complex64::from_polar(1.0, k * x[0]));
        let t = 2.5;
        let u = propagate(&c, &f, t, PropagationMethod::ChebyshevPhase).unwrap();
        let expected = f.scale(Complex64::from_polar(1.0, -t * k * k));
        assert!(u.sub(&expected).unwrap().l2_norm() <= 1e-9 * f.l2_norm());
    }

    #[test]
    fn chebyshev_matches_dense_oracle() {
        for scheme in [LaplacianScheme::FourierSpectral, LaplacianScheme::Fd2] {
            let c = calc(128, 16.0, well(), scheme);
            for s in 0..4 {
                let f = random_field(c.ham().grid(), 5, s);
                for t in [0.01, 0.3, 4.0, 17.0] {
                    let a = propagate(&c, &f, t, PropagationMethod::ChebyshevPhase).unwrap();
                    let b = propagate(&c, &f, t, PropagationMethod::DenseOracle).unwrap();
                    assert!(a.sub(&b).unwrap().l2_norm() <= 1e-8 * f.l2_norm(), "{scheme:?} t={t}");
                }
            }
        }
    }

    #[test]
    fn group_law_reversal_and_conservation() {
        let c = calc(128, 16.0, well(), LaplacianScheme::FourierSpectral);
        let f = random_field(c.ham().grid(), 6, 0);
        let m = PropagationMethod::ChebyshevPhase;
        let (t1, t2) = (0.7, 2.9);
        let two = propagate(&c, &propagate(&c, &f, t1, m).unwrap(), t2, m).unwrap();
        let one = propagate(&c, &f, t1 + t2, m).unwrap();
        assert!(two.sub(&one).unwrap().l2_norm() <= 1e-8 * f.l2_norm());
        let back = propagate_backward(&c, &one, t1 + t2, m).unwrap();
        assert!(back.sub(&f).unwrap().l2_norm() <= 1e-8 * f.l2_norm());
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let r = propagate_series(&c, &f, &times, m).unwrap();
        assert_eq!(r.states.len(), times.len());
        assert!(r.converged);
        assert!(r.l2_drift <= 1e-9 * f.l2_norm());
        assert!(r.energy_drift <= 1e-8);
        let only = propagate_series(&c, &f, &[0.0], m).unwrap();
        assert_eq!(only.states[0].values(), f.values());
        assert!(propagate_series(&c, &f, &[1.0, 0.5], m).is_err());
    }

    #[test]
    fn long_times_are_chained() {
        let c = calc(256, 32.0, well(), LaplacianScheme::FourierSpectral);
        assert!(step_count(&c, 60.0) > 1);
        let f = random_field(c.ham().grid(), 2, 0);
        let a = propagate(&c, &f, 60.0, PropagationMethod::ChebyshevPhase).unwrap();
        let b = propagate(&c, &f, 60.0, PropagationMethod::DenseOracle).unwrap();
        assert!(a.sub(&b).unwrap().l2_norm() <= 1e-8 * f.l2_norm());
    }

    #[test]
    fn free_gaussian_sup_law() {
        let g = Grid::new(1, 200.0, 2048).unwrap();
        let c = FunctionalCalculus::new(
            Hamiltonian::assemble(&g, &PotentialSpec::Zero, LaplacianScheme::FourierSpectral).unwrap(),
        );
        let f = gaussian_packet(&g, &[], 1.0, &[]).unwrap();
        let env = PacketEnvelope::of(&f);
        assert!((env.width - 1.0).abs() < 1e-6);
        let times = [0.5, 1.0, 3.0, 10.0];
        let r = propagate_series(&c, &f, &times, PropagationMethod::ChebyshevPhase).unwrap();
        for (t, u) in times.iter().zip(&r.states) {
            assert!(!env.wraps_before(&g, *t));
            let expected = free_gaussian_sup_ratio(1, 1.0, *t) * f.max_abs();
            assert!((u.max_abs() / expected - 1.0).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn envelope_of_moving_packet() {
        let g = Grid::new(2, 40.0, 128).unwrap();
        let f = gaussian_packet(&g, &[3.0, -2.0], 1.5, &[1.0, 0.0]).unwrap();
        let env = PacketEnvelope::of(&f);
        assert!((env.center[0] - 3.0).abs() < 1e-8 && (env.center[1] + 2.0).abs() < 1e-8);
        assert!((env.width - 1.5).abs() < 1e-6);
        let sk = 1.0 / (1.5 * std::f64::consts::SQRT_2);
        assert!((env.k_max[0] - (1.0 + 2.0 * sk)).abs() < 1e-6);
        let t_star = env.max_unwrapped_time(&g);
        let expected = (20.0 - 3.0 - 9.0) / (2.0 * (1.0 + 2.0 * sk));
        assert!((t_star - expected).abs() < 1e-5, "{t_star} {expected}");
        assert!(env.wraps_before(&g, t_star * 1.01));
    }

    #[test]
    fn trajectory_dump() {
        let c = calc(64, 16.0, well(), LaplacianScheme::FourierSpectral);
        let f = random_field(c.ham().grid(), 1, 0);
        let r = propagate_series(&c, &f, &[0.0, 1.0], PropagationMethod::ChebyshevPhase).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_trajectory(&r, dir.path(), "run").unwrap();
        let text = std::fs::read_to_string(manifest).unwrap();
        assert!(text.contains("run_0001.lpsf"));
        let back = crate::lattice::read_field(dir.path().join("run_0001.lpsf")).unwrap();
        assert_eq!(back.values(), r.states[1].values());
    }
}
