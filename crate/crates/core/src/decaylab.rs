//! Decay experiments: measured left-hand sides of the dispersive estimates
//! against their right-hand sides over a time series, with power-law fits.
//!
//! The estimates hide their constants, so a report never asserts one. It
//! records per-time ratios, their supremum and the fitted decay exponent.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dyadic::{profile, DyadicSystem};
use crate::evolve::{propagate, propagate_series, PacketEnvelope, PropagationMethod};
use crate::funcalc::FunctionalCalculus;
use crate::lattice::{lp_norm, Field};
use crate::norms::{besov_from_pieces, conjugate, critical_exponent, triebel_from_pieces, BesovIndex};
use crate::{Error, Result};

/// `⟨t⟩ = (1 + t²)^{1/2}`.
pub fn bracket(t: f64) -> f64 {
    t.hypot(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, absent when `rhs = 0`.
    pub ratio: Option<f64>,
    pub bracket: f64,
}

impl Row {
    fn new(t: f64, lhs: f64, rhs: f64) -> Self {
        Self { t, lhs, rhs, ratio: (rhs > 0.0).then(|| lhs / rhs), bracket: bracket(t) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Least-squares slope of `log lhs` against `log t` over rows with `t` in
/// `window` (inclusive), with its standard error.
pub fn fit_exponent(rows: &[Row], window: (f64, f64)) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.t >= window.0 && r.t <= window.1).map(|r| (r.t, r.lhs)).collect();
    if pts.len() < 5 {
        return Err(Error::Fit(format!("{} points in window {window:?}, need 5", pts.len())));
    }
    if let Some((t, l)) = pts.iter().find(|(t, l)| !(*l > 0.0) || !(*t > 0.0)) {
        return Err(Error::Fit(format!("nonpositive value at t = {t}: lhs = {l}")));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all times in the window coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    Ok((slope, (ssr / (n - 2.0) / sxx).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ShortTime,
    LongTime,
    Dispersive,
    Corollary,
}

/// Smoothness/summability of the long-time right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RhsVariant {
    #[serde(rename = "B2beta_q1")]
    B2BetaQ1,
    #[serde(rename = "B2beta_q2")]
    B2BetaQ2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    B,
    F,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub wrapped: bool,
    pub negative_spectrum: bool,
    /// Only assessed in three dimensions.
    pub hypotheses_met: Option<bool>,
}

/// Everything an experiment needs besides its own parameters.
#[derive(Debug, Clone, Copy)]
pub struct Setup<'a> {
    pub calc: &'a FunctionalCalculus,
    pub sys: &'a DyadicSystem,
    pub f: &'a Field,
    pub f_label: &'a str,
    /// Result of the potential hypothesis check, when one was run.
    pub hypotheses_met: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub hamiltonian: String,
    pub scheme: crate::hamiltonian::LaplacianScheme,
    pub grid: crate::lattice::Grid,
    pub j_max: usize,
    pub field: String,
    pub p: f64,
    pub index: Option<BesovIndex>,
    pub variant: Option<RhsVariant>,
    pub space: Option<Space>,
    pub times: Vec<f64>,
    pub fit_window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub id: String,
    pub kind: ExperimentKind,
    pub config: ReportConfig,
    pub rows: Vec<Row>,
    pub fit: Option<Fit>,
    /// Why no fit was produced, when one was requested.
    pub fit_refused: Option<String>,
    pub theory_exponent: f64,
    pub sup_ratio: Option<f64>,
    /// Latest time before the packet may reach the boundary.
    pub max_unwrapped_time: f64,
    pub flags: Flags,
    pub notes: Vec<String>,
}

impl DecayReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Rows only: `t,lhs,rhs,ratio`; an undefined ratio is left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,lhs,rhs,ratio\n");
        for r in &self.rows {
            let ratio = r.ratio.map(|x| format!("{x:e}")).unwrap_or_default();
            out.push_str(&format!("{:e},{:e},{:e},{}\n", r.t, r.lhs, r.rhs, ratio));
        }
        out
    }

    /// Writes `<id>_<hash>.json` and `<id>_<hash>.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, config_hash: &str) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let stem = format!("{}_{}", self.id, config_hash);
        let json = dir.join(format!("{stem}.json"));
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&json, self.to_json()?)?;
        std::fs::write(&csv, self.to_csv())?;
        Ok((json, csv))
    }

    /// Largest over smallest defined ratio.
    pub fn ratio_spread(&self) -> Option<f64> {
        let ratios: Vec<f64> = self.rows.iter().filter_map(|r| r.ratio).collect();
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        (!ratios.is_empty() && min > 0.0).then(|| max / min)
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} outside [1, 2]")));
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("no times requested".into()));
    }
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("times must be finite, nonnegative and strictly ascending".into()));
    }
    Ok(())
}

fn check_window(window: Option<(f64, f64)>) -> Result<()> {
    if let Some((lo, hi)) = window {
        if !(lo >= 1.0 && hi > lo) {
            return Err(Error::InvalidArgument(format!("fit window [{lo}, {hi}] must satisfy 1 <= lo < hi")));
        }
    }
    Ok(())
}

struct Trajectory {
    states: Vec<Field>,
    t_star: f64,
}

fn trajectory(setup: &Setup, times: &[f64]) -> Result<Trajectory> {
    let r = propagate_series(setup.calc, setup.f, times, PropagationMethod::ChebyshevPhase)?;
    if !r.converged {
        return Err(Error::NonConverged { degree: 0, tail: f64::NAN });
    }
    let t_star = PacketEnvelope::of(setup.f).max_unwrapped_time(setup.f.grid());
    Ok(Trajectory { states: r.states, t_star })
}

fn config(setup: &Setup, p: f64, times: &[f64]) -> ReportConfig {
    let ham = setup.calc.ham();
    ReportConfig {
        hamiltonian: ham.description().to_string(),
        scheme: ham.scheme(),
        grid: *ham.grid(),
        j_max: setup.sys.j_max(),
        field: setup.f_label.to_string(),
        p,
        index: None,
        variant: None,
        space: None,
        times: times.to_vec(),
        fit_window: None,
    }
}

fn assemble(
    setup: &Setup,
    kind: ExperimentKind,
    config: ReportConfig,
    rows: Vec<Row>,
    t_star: f64,
    theory_exponent: f64,
) -> DecayReport {
    let dim = setup.f.grid().dim();
    let max_t = rows.iter().map(|r| r.t).fold(0.0, f64::max);
    let flags = Flags {
        wrapped: max_t > t_star,
        negative_spectrum: setup.calc.ham().spectral_range().negative_spectrum,
        hypotheses_met: if dim == 3 { setup.hypotheses_met } else { None },
    };
    let mut notes = Vec::new();
    if dim != 3 {
        notes.push(format!("{dim}-d run: exponent-scaling analogue of the three-dimensional estimate"));
    }
    if flags.wrapped {
        notes.push(format!("times after t = {t_star:.4} may have wrapped around the periodic box"));
    }
    let (fit, fit_refused) = match config.fit_window {
        None => (None, None),
        Some((lo, hi)) => {
            let usable: Vec<Row> = rows.iter().filter(|r| r.t <= t_star).copied().collect();
            match fit_exponent(&usable, (lo, hi)) {
                Ok((slope, stderr)) => {
                    let points = usable.iter().filter(|r| r.t >= lo && r.t <= hi).count();
                    (Some(Fit { slope, stderr, window: (lo, hi), points }), None)
                }
                Err(e) => (None, Some(e.to_string())),
            }
        }
    };
    let sup_ratio = rows.iter().filter_map(|r| r.ratio).fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    let id = format!("{}_d{}_n{}_p{}", kind_name(kind), dim, setup.f.grid().points_per_axis(), config.p);
    DecayReport {
        id,
        kind,
        config,
        rows,
        fit,
        fit_refused,
        theory_exponent,
        sup_ratio,
        max_unwrapped_time: t_star,
        flags,
        notes,
    }
}

fn kind_name(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::ShortTime => "short_time",
        ExperimentKind::LongTime => "long_time",
        ExperimentKind::Dispersive => "dispersive",
        ExperimentKind::Corollary => "corollary",
    }
}

/// Short-time estimate: `‖u(t)‖_{p'}` against `‖f‖_{p'} + t^β ‖f‖_{B^{β,1}_{p'}}`.
pub fn short_time_experiment(setup: &Setup, p: f64, times: &[f64]) -> Result<DecayReport> {
    check_p(p)?;
    check_times(times)?;
    if times.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::InvalidArgument("short-time experiment needs times in (0, 1]".into()));
    }
    let dim = setup.f.grid().dim();
    let pc = conjugate(p);
    let beta = critical_exponent(dim, p);
    let pieces = setup.calc.lp_decompose(setup.sys, setup.f)?;
    let idx = BesovIndex::new(beta, pc, 1.0)?;
    let besov = besov_from_pieces(&pieces, &idx)?;
    let f_norm = lp_norm(setup.f, pc)?;
    let traj = trajectory(setup, times)?;
    let rows = times
        .iter()
        .zip(&traj.states)
        .map(|(&t, u)| Ok(Row::new(t, lp_norm(u, pc)?, f_norm + t.powf(beta) * besov)))
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = config(setup, p, times);
    cfg.index = Some(idx);
    Ok(assemble(setup, ExperimentKind::ShortTime, cfg, rows, traj.t_star, 0.0))
}

/// Long-time estimate: `‖u(t)‖_{p'}` against `⟨t⟩^{-d(1/p-1/2)} ‖f‖_{B^{2β,q}_p}`.
pub fn long_time_experiment(
    setup: &Setup,
    p: f64,
    times: &[f64],
    variant: RhsVariant,
    fit_window: Option<(f64, f64)>,
) -> Result<DecayReport> {
    check_p(p)?;
    check_times(times)?;
    check_window(fit_window)?;
    let dim = setup.f.grid().dim();
    let rate = dim as f64 * (1.0 / p - 0.5);
    let q = match variant {
        RhsVariant::B2BetaQ1 => 1.0,
        RhsVariant::B2BetaQ2 => 2.0,
    };
    let idx = BesovIndex::new(2.0 * critical_exponent(dim, p), p, q)?;
    let besov = besov_from_pieces(&setup.calc.lp_decompose(setup.sys, setup.f)?, &idx)?;
    let pc = conjugate(p);
    let traj = trajectory(setup, times)?;
    let rows = times
        .iter()
        .zip(&traj.states)
        .map(|(&t, u)| Ok(Row::new(t, lp_norm(u, pc)?, bracket(t).powf(-rate) * besov)))
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = config(setup, p, times);
    cfg.index = Some(idx);
    cfg.variant = Some(variant);
    cfg.fit_window = fit_window;
    Ok(assemble(setup, ExperimentKind::LongTime, cfg, rows, traj.t_star, -rate))
}

/// Plain dispersive estimate: `‖u(t)‖_{p'}` against `|t|^{-d(1/p-1/2)} ‖f‖_p`.
pub fn dispersive_scan(setup: &Setup, p: f64, times: &[f64], fit_window: Option<(f64, f64)>) -> Result<DecayReport> {
    check_p(p)?;
    check_times(times)?;
    check_window(fit_window)?;
    let dim = setup.f.grid().dim();
    let rate = dim as f64 * (1.0 / p - 0.5);
    let f_norm = lp_norm(setup.f, p)?;
    let pc = conjugate(p);
    let traj = trajectory(setup, times)?;
    let rows = times
        .iter()
        .zip(&traj.states)
        .map(|(&t, u)| {
            let rhs = if t == 0.0 && rate > 0.0 { f64::INFINITY } else { t.powf(-rate) * f_norm };
            let mut row = Row::new(t, lp_norm(u, pc)?, rhs);
            if rhs.is_infinite() {
                row.ratio = None;
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = config(setup, p, times);
    cfg.fit_window = fit_window;
    Ok(assemble(setup, ExperimentKind::Dispersive, cfg, rows, traj.t_star, -rate))
}

/// Decay in Besov or Triebel-Lizorkin norm: `‖u(t)‖_{X^{α,q}_p}` against
/// `⟨t⟩^{-d(1/p-1/2)} ‖f‖_{B^{α+2β,q}_p}`.
pub fn corollary_experiment(
    setup: &Setup,
    idx: &BesovIndex,
    times: &[f64],
    space: Space,
    fit_window: Option<(f64, f64)>,
) -> Result<DecayReport> {
    idx.validate()?;
    check_p(idx.p)?;
    check_times(times)?;
    check_window(fit_window)?;
    if space == Space::F && idx.q > idx.p {
        return Err(Error::InvalidArgument(format!("F-space estimate needs q <= p, got q = {} > p = {}", idx.q, idx.p)));
    }
    let dim = setup.f.grid().dim();
    let rate = dim as f64 * (1.0 / idx.p - 0.5);
    let rhs_idx = BesovIndex { alpha: idx.alpha + 2.0 * critical_exponent(dim, idx.p), ..*idx };
    let rhs_norm = besov_from_pieces(&setup.calc.lp_decompose(setup.sys, setup.f)?, &rhs_idx)?;
    let traj = trajectory(setup, times)?;
    let rows = times
        .iter()
        .zip(&traj.states)
        .map(|(&t, u)| {
            let pieces = setup.calc.lp_decompose(setup.sys, u)?;
            let lhs = match space {
                Space::B => besov_from_pieces(&pieces, idx)?,
                Space::F => triebel_from_pieces(&pieces, idx)?,
            };
            Ok(Row::new(t, lhs, bracket(t).powf(-rate) * rhs_norm))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = config(setup, idx.p, times);
    cfg.index = Some(*idx);
    cfg.space = Some(space);
    cfg.fit_window = fit_window;
    let mut report = assemble(setup, ExperimentKind::Corollary, cfg, rows, traj.t_star, -rate);
    let lhs_max = report.rows.iter().map(|r| r.lhs).fold(0.0, f64::max);
    let lhs_min = report.rows.iter().map(|r| r.lhs).fold(f64::INFINITY, f64::min);
    if rate > 0.0 && lhs_max > 0.0 && lhs_max - lhs_min <= 1e-8 * lhs_max {
        report.notes.push(
            "left-hand side constant in t: the datum does not disperse on the finite box (e.g. an eigenfunction); \
             the ratio grows like the bracket factor by finite-volume effect, not by failure of the estimate"
                .into(),
        );
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaRow {
    pub theta: f64,
    pub t: f64,
    pub field: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaScanReport {
    pub p: f64,
    pub beta: f64,
    pub rows: Vec<ThetaRow>,
    /// `(θ, sup over t and fields)`.
    pub sup_by_theta: Vec<(f64, f64)>,
    pub sup: f64,
    pub sup_at: (f64, f64),
    /// Largest over smallest per-θ supremum.
    pub theta_variation: f64,
    pub converged: bool,
}

/// `‖ψ(θH) e^{-itθH} f‖_p / (⟨t⟩^β ‖f‖_p)` over a grid of `(θ, t, f)`, with
/// `ψ` the dyadic profile.
pub fn lemma_jn_scan(
    calc: &FunctionalCalculus,
    fields: &[Field],
    p: f64,
    thetas: &[f64],
    times: &[f64],
) -> Result<ThetaScanReport> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("p = {p} < 1")));
    }
    if let Some(th) = thetas.iter().find(|&&th| !(th > 0.0 && th <= 1.0)) {
        return Err(Error::InvalidArgument(format!("θ = {th} outside (0, 1]")));
    }
    if fields.is_empty() || thetas.is_empty() || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidArgument("scan needs fields, thetas and nonnegative times".into()));
    }
    let dim = calc.ham().grid().dim();
    let beta = critical_exponent(dim, p);
    let (a, b) = calc.interval();
    let f_norms = fields.iter().map(|f| lp_norm(f, p)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut sup_by_theta = Vec::new();
    let mut converged = true;
    for &theta in thetas {
        let mut sup_theta: f64 = 0.0;
        for &t in times {
            let band = [(0.5 / theta, 1.0 / theta), (-1.0 / theta, -0.5 / theta)];
            let hint = calc.resolution_hint_for(&band).max((1.1 * t * theta * 0.5 * (b - a)).ceil() as usize + 32);
            let label = format!("theta_scan:{:016x}:{:016x}", theta.to_bits(), t.to_bits());
            let cf = calc.custom(&label, calc.options().window_tol, hint, |l| {
                Complex64::from_polar(profile(theta * l), -t * theta * l)
            })?;
            converged &= cf.converged();
            for (k, f) in fields.iter().enumerate() {
                let g = calc.apply_function(&cf, f)?;
                let ratio = lp_norm(&g, p)? / (bracket(t).powf(beta) * f_norms[k]);
                sup_theta = sup_theta.max(ratio);
                rows.push(ThetaRow { theta, t, field: k, ratio });
            }
        }
        sup_by_theta.push((theta, sup_theta));
    }
    let best = rows.iter().copied().fold(None::<ThetaRow>, |m, r| match m {
        Some(m) if m.ratio >= r.ratio => Some(m),
        _ => Some(r),
    });
    let best = best.expect("nonempty scan");
    let max = sup_by_theta.iter().map(|s| s.1).fold(0.0, f64::max);
    let min = sup_by_theta.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    Ok(ThetaScanReport {
        p,
        beta,
        rows,
        sup_by_theta,
        sup: best.ratio,
        sup_at: (best.theta, best.t),
        theta_variation: if min > 0.0 { max / min } else { f64::INFINITY },
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub t: f64,
    pub p: f64,
    /// `floor(-log₂ t) + 1`.
    pub split_index: i64,
    /// Low block is exactly `{j : 2^j t ≤ 1}` and equals `{j < j_t}`.
    pub membership_consistent: bool,
    pub low_norm: f64,
    pub high_norm: f64,
    /// `(j, 2^{jβ} ‖φ_j(H) f‖_{p'})` over the high block.
    pub high_terms: Vec<(usize, f64)>,
    /// `t^β Σ_high 2^{jβ} ‖φ_j(H) f‖_{p'}`.
    pub high_bound: f64,
    /// `Σ_high ‖φ_j(H) u(t)‖_{p'}`.
    pub high_triangle: f64,
    /// `‖low + high - u(t)‖₂ / ‖u(t)‖₂`.
    pub reconstruction_defect: f64,
}

/// `j_t = floor(-log₂ t) + 1`.
pub fn split_index(t: f64) -> i64 {
    (-t.log2()).floor() as i64 + 1
}

/// Split `u(t)` into the windows with `2^j t ≤ 1` and the rest.
pub fn dyadic_split_diagnostic(
    calc: &FunctionalCalculus,
    sys: &DyadicSystem,
    f: &Field,
    t: f64,
    p: f64,
) -> Result<SplitReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("split needs t > 0, got {t}")));
    }
    check_p(p)?;
    let pc = conjugate(p);
    let beta = critical_exponent(f.grid().dim(), p);
    let u = propagate(calc, f, t, PropagationMethod::ChebyshevPhase)?;
    let u_pieces = calc.lp_decompose(sys, &u)?;
    let f_pieces = calc.lp_decompose(sys, f)?;
    let j_t = split_index(t);
    let is_low = |j: usize| (j as f64).exp2() * t <= 1.0;
    let membership_consistent = (0..u_pieces.len()).all(|j| is_low(j) == ((j as i64) < j_t));
    let grid = *f.grid();
    let low = Field::sum(grid, u_pieces.iter().enumerate().filter(|(j, _)| is_low(*j)).map(|(_, x)| x))?;
    let high = Field::sum(grid, u_pieces.iter().enumerate().filter(|(j, _)| !is_low(*j)).map(|(_, x)| x))?;
    let mut high_terms = Vec::new();
    let mut high_triangle = 0.0;
    for j in (0..u_pieces.len()).filter(|&j| !is_low(j)) {
        high_terms.push((j, (j as f64 * beta).exp2() * lp_norm(&f_pieces[j], pc)?));
        high_triangle += lp_norm(&u_pieces[j], pc)?;
    }
    let high_bound = t.powf(beta) * high_terms.iter().map(|x| x.1).sum::<f64>();
    let defect = low.add(&high)?.sub(&u)?.l2_norm() / u.l2_norm().max(f64::MIN_POSITIVE);
    Ok(SplitReport {
        t,
        p,
        split_index: j_t,
        membership_consistent,
        low_norm: lp_norm(&low, pc)?,
        high_norm: lp_norm(&high, pc)?,
        high_terms,
        high_bound,
        high_triangle,
        reconstruction_defect: defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{Hamiltonian, LaplacianScheme};
    use crate::lattice::{gaussian_packet, Grid, PotentialSpec};

    fn rows_from(f: impl Fn(f64) -> f64, ts: &[f64]) -> Vec<Row> {
        ts.iter().map(|&t| Row::new(t, f(t), 1.0)).collect()
    }

    #[test]
    fn bracket_values() {
        assert_eq!(bracket(0.0), 1.0);
        for t in [0.1, 1.0, 7.0, 1e3] {
            assert!(bracket(t) >= t.max(1.0));
        }
    }

    #[test]
    fn exact_fits() {
        let ts: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let (s, e) = fit_exponent(&rows_from(|t| 3.0 * t.powf(-1.5), &ts), (1.0, 20.0)).unwrap();
        assert!((s + 1.5).abs() < 1e-8 && e < 1e-8);
        let (s, _) = fit_exponent(&rows_from(|_| 2.0, &ts), (1.0, 20.0)).unwrap();
        assert!(s.abs() < 1e-12);
        assert!(fit_exponent(&rows_from(|_| 2.0, &ts), (1.0, 4.5)).is_err());
        assert!(fit_exponent(&rows_from(|t| if t == 3.0 { 0.0 } else { 1.0 }, &ts), (1.0, 20.0)).is_err());
    }

    #[test]
    fn split_indices() {
        assert_eq!(split_index(1.0), 1);
        assert_eq!(split_index(0.5), 2);
        assert_eq!(split_index(0.1), 4);
        assert_eq!(split_index(0.3), 2);
    }

    fn small_setup() -> (FunctionalCalculus, DyadicSystem, Field) {
        let g = Grid::new(1, 32.0, 128).unwrap();
        let spec = PotentialSpec::GaussianWell { depth: -1.0, width: 1.0, center: vec![] };
        let calc = FunctionalCalculus::new(Hamiltonian::assemble(&g, &spec, LaplacianScheme::FourierSpectral).unwrap());
        let sys = calc.dyadic_system();
        let f = gaussian_packet(&g, &[], 1.0, &[]).unwrap();
        (calc, sys, f)
    }

    #[test]
    fn p2_collapses() {
        let (calc, sys, f) = small_setup();
        let setup = Setup { calc: &calc, sys: &sys, f: &f, f_label: "gaussian", hypotheses_met: None };
        let short = short_time_experiment(&setup, 2.0, &[0.01, 0.1, 0.5, 1.0]).unwrap();
        assert!(short.rows.iter().all(|r| r.ratio.unwrap() <= 1.0));
        let times = [0.5, 1.0, 2.0, 3.0];
        let long = long_time_experiment(&setup, 2.0, &times, RhsVariant::B2BetaQ1, None).unwrap();
        assert_eq!(long.theory_exponent, 0.0);
        assert!(long.ratio_spread().unwrap() - 1.0 < 1e-8);
        let idx = BesovIndex::new(0.5, 2.0, 1.0).unwrap();
        let cor = corollary_experiment(&setup, &idx, &times, Space::B, None).unwrap();
        assert!(cor.ratio_spread().unwrap() - 1.0 < 1e-8);
        let bad = BesovIndex::new(0.0, 1.0, 2.0).unwrap();
        assert!(corollary_experiment(&setup, &bad, &times, Space::F, None).is_err());
        assert!(short_time_experiment(&setup, 2.0, &[0.5, 2.0]).is_err());
        assert!(long_time_experiment(&setup, 2.5, &times, RhsVariant::B2BetaQ2, None).is_err());
        assert!(dispersive_scan(&setup, 1.0, &times, Some((0.5, 3.0))).is_err());
    }

    #[test]
    fn short_time_ratio_tends_to_one() {
        let (calc, sys, f) = small_setup();
        let setup = Setup { calc: &calc, sys: &sys, f: &f, f_label: "gaussian", hypotheses_met: None };
        let r = short_time_experiment(&setup, 1.0, &[1e-8, 1e-2, 1.0]).unwrap();
        assert!((r.rows[0].ratio.unwrap() - 1.0).abs() < 1e-2);
        assert!(r.sup_ratio.unwrap().is_finite());
    }

    #[test]
    fn split_reconstructs() {
        let (calc, sys, f) = small_setup();
        for t in [0.1, 0.5, 1.0, 0.3] {
            let r = dyadic_split_diagnostic(&calc, &sys, &f, t, 1.0).unwrap();
            assert!(r.membership_consistent);
            assert!(r.reconstruction_defect <= 1e-8);
            assert!(r.high_norm <= (1.0 + 1e-6) * r.high_triangle);
        }
        assert!(dyadic_split_diagnostic(&calc, &sys, &f, 0.0, 1.0).is_err());
    }

    #[test]
    fn theta_scan_contracts_in_l2() {
        let (calc, _, f) = small_setup();
        let thetas = [1.0 / 16.0, 0.25, 1.0];
        let r = lemma_jn_scan(&calc, std::slice::from_ref(&f), 2.0, &thetas, &[0.0, 1.0, 4.0]).unwrap();
        assert!(r.converged);
        assert!(r.sup <= 1.0 + 1e-8);
        assert_eq!(r.rows.len(), 9);
        assert!(lemma_jn_scan(&calc, &[f], 2.0, &[2.0], &[0.0]).is_err());
    }

    #[test]
    fn single_eigenfield_does_not_disperse() {
        let g = Grid::new(1, 2.0 * std::f64::consts::PI, 64).unwrap();
        let calc = FunctionalCalculus::new(
            Hamiltonian::assemble(&g, &PotentialSpec::Zero, LaplacianScheme::FourierSpectral).unwrap(),
        );
        let sys = calc.dyadic_system();
        let e = Field::from_fn(g, |x| Complex64::from_polar(1.0, 4.0 * x[0]));
        let setup = Setup { calc: &calc, sys: &sys, f: &e, f_label: "eigenfield", hypotheses_met: None };
        let idx = BesovIndex::new(0.0, 1.0, 1.0).unwrap();
        let r = corollary_experiment(&setup, &idx, &[1.0, 2.0, 4.0], Space::B, None).unwrap();
        assert!(r.notes.iter().any(|n| n.contains("does not disperse")));
        assert!(r.rows[2].ratio.unwrap() > r.rows[0].ratio.unwrap());
    }

    #[test]
    fn report_serializes() {
        let (calc, sys, f) = small_setup();
        let setup = Setup { calc: &calc, sys: &sys, f: &f, f_label: "gaussian", hypotheses_met: None };
        let r = dispersive_scan(&setup, 1.0, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], Some((1.0, 6.0))).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("t,lhs,rhs,ratio"));
        let back: DecayReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let dir = tempfile::tempdir().unwrap();
        let (j, c) = r.write(dir.path(), "abc123").unwrap();
        assert!(j.to_string_lossy().contains("abc123") && c.exists());
    }
}
