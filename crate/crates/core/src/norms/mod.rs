//! Norms adapted to `H`: Besov and Triebel-Lizorkin norms built from the
//! Littlewood-Paley pieces `φ_j(H) f`, plus potential functionals.

mod potential;

pub use potential::{
    default_profile_radii, hypothesis_check, kato_norm, kato_profile, rollnik_functional, PotentialReport, RollnikEstimate,
    CELL_INVERSE_DISTANCE, CELL_INVERSE_SQUARE_DISTANCE, KATO_THRESHOLD, ROLLNIK_THRESHOLD,
};

use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicSystem;
use crate::funcalc::FunctionalCalculus;
use crate::lattice::{lp_norm, lp_norm_of_moduli, pairwise_sum, Field};
use crate::{Error, Result};

/// `p/(p-1)`, with `1' = ∞` and `∞' = 1`.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// `β(p) = d |1/p - 1/2|`.
pub fn critical_exponent(dim: usize, p: f64) -> f64 {
    dim as f64 * (1.0 / p - 0.5).abs()
}

/// Smoothness `α` with integrability `p` and summability `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovIndex {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
}

impl BesovIndex {
    pub fn new(alpha: f64, p: f64, q: f64) -> Result<Self> {
        let idx = Self { alpha, p, q };
        idx.validate()?;
        Ok(idx)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("smoothness {} is not finite", self.alpha)));
        }
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if v.is_nan() || v < 1.0 {
                return Err(Error::InvalidArgument(format!("{name} = {v} outside [1, ∞]")));
            }
        }
        Ok(())
    }

    pub fn conjugate(&self) -> f64 {
        conjugate(self.p)
    }

    pub fn beta(&self, dim: usize) -> f64 {
        critical_exponent(dim, self.p)
    }
}

/// `ℓ^q` norm of nonnegative terms; `q = ∞` is the maximum.
fn lq(terms: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        return terms.fold(0.0, f64::max);
    }
    let powered: Vec<f64> = terms.map(|t| if q == 1.0 { t } else { t.powf(q) }).collect();
    let s = pairwise_sum(&powered);
    if q == 1.0 {
        s
    } else {
        s.powf(1.0 / q)
    }
}

/// `(Σ_j 2^{jαq} ‖f_j‖_p^q)^{1/q}` from precomputed pieces `f_j`.
pub fn besov_from_pieces(pieces: &[Field], idx: &BesovIndex) -> Result<f64> {
    idx.validate()?;
    let norms = pieces.iter().map(|f| lp_norm(f, idx.p)).collect::<Result<Vec<_>>>()?;
    Ok(lq(norms.iter().enumerate().map(|(j, n)| (idx.alpha * j as f64).exp2() * n), idx.q))
}

/// `‖(Σ_j 2^{jαq} |f_j|^q)^{1/q}‖_p` from precomputed pieces `f_j`.
pub fn triebel_from_pieces(pieces: &[Field], idx: &BesovIndex) -> Result<f64> {
    idx.validate()?;
    if idx.p.is_infinite() {
        return Err(Error::InvalidArgument("Triebel-Lizorkin norm needs p < ∞".into()));
    }
    let Some(first) = pieces.first() else { return Ok(0.0) };
    let grid = *first.grid();
    for f in pieces {
        f.ensure_same_grid(&grid)?;
    }
    let weights: Vec<f64> = (0..pieces.len()).map(|j| (idx.alpha * j as f64).exp2()).collect();
    let pointwise: Vec<f64> = (0..grid.len())
        .map(|i| {
            let terms = pieces.iter().zip(&weights).map(|(f, w)| w * f.values()[i].norm());
            if idx.q == idx.p {
                // Keep the q = p case an exact reordering of the Besov sum.
                terms.map(|t| t.powf(idx.p)).sum::<f64>()
            } else {
                lq(terms, idx.q)
            }
        })
        .collect();
    if idx.q == idx.p {
        Ok((pairwise_sum(&pointwise) * grid.cell_volume()).powf(1.0 / idx.p))
    } else {
        Ok(lp_norm_of_moduli(&pointwise, idx.p, grid.cell_volume()))
    }
}

/// `‖f‖_{B_p^{α,q}(H)}`.
pub fn besov_norm(calc: &FunctionalCalculus, sys: &DyadicSystem, f: &Field, idx: &BesovIndex) -> Result<f64> {
    idx.validate()?;
    besov_from_pieces(&calc.lp_decompose(sys, f)?, idx)
}

/// `‖f‖_{F_p^{α,q}(H)}`, defined for `p < ∞`.
pub fn triebel_norm(calc: &FunctionalCalculus, sys: &DyadicSystem, f: &Field, idx: &BesovIndex) -> Result<f64> {
    idx.validate()?;
    if idx.p.is_infinite() {
        return Err(Error::InvalidArgument("Triebel-Lizorkin norm needs p < ∞".into()));
    }
    triebel_from_pieces(&calc.lp_decompose(sys, f)?, idx)
}

/// Relative slack allowed in the embedding inequalities.
pub const EMBEDDING_SLACK: f64 = 1e-10;

/// Outcome of checking `B^{α,min(p,q)} ≥ F^{α,q} ≥ B^{α,max(p,q)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub index: BesovIndex,
    pub fields: usize,
    pub violations: usize,
    /// Smallest `(B_min - F) / F` seen.
    pub worst_lower_margin: f64,
    /// Smallest `(F - B_max) / F` seen.
    pub worst_upper_margin: f64,
    /// Largest `|B^{α,p} - F^{α,p}| / F` seen (exact equality case).
    pub worst_equal_exponent_defect: f64,
}

/// Check the embedding chain on each field, reusing one decomposition per field.
pub fn embedding_check(
    calc: &FunctionalCalculus,
    sys: &DyadicSystem,
    fields: &[Field],
    idx: &BesovIndex,
) -> Result<EmbeddingReport> {
    let decomposed = fields.iter().map(|f| calc.lp_decompose(sys, f)).collect::<Result<Vec<_>>>()?;
    embedding_check_pieces(&decomposed, idx)
}

/// [`embedding_check`] on fields already split into Littlewood-Paley pieces.
pub fn embedding_check_pieces(decomposed: &[Vec<Field>], idx: &BesovIndex) -> Result<EmbeddingReport> {
    idx.validate()?;
    if idx.p.is_infinite() {
        return Err(Error::InvalidArgument("embedding check needs p < ∞".into()));
    }
    let mut report = EmbeddingReport {
        index: *idx,
        fields: decomposed.len(),
        violations: 0,
        worst_lower_margin: f64::INFINITY,
        worst_upper_margin: f64::INFINITY,
        worst_equal_exponent_defect: 0.0,
    };
    let with_q = |q: f64| BesovIndex { q, ..*idx };
    for pieces in decomposed {
        let fnorm = triebel_from_pieces(pieces, idx)?;
        let b_min = besov_from_pieces(pieces, &with_q(idx.p.min(idx.q)))?;
        let b_max = besov_from_pieces(pieces, &with_q(idx.p.max(idx.q)))?;
        let scale = fnorm.max(f64::MIN_POSITIVE);
        let lower = (b_min - fnorm) / scale;
        let upper = (fnorm - b_max) / scale;
        if lower < -EMBEDDING_SLACK || upper < -EMBEDDING_SLACK {
            report.violations += 1;
        }
        report.worst_lower_margin = report.worst_lower_margin.min(lower);
        report.worst_upper_margin = report.worst_upper_margin.min(upper);
        let equal = with_q(idx.p);
        let defect = (besov_from_pieces(pieces, &equal)? - triebel_from_pieces(pieces, &equal)?).abs() / scale;
        report.worst_equal_exponent_defect = report.worst_equal_exponent_defect.max(defect);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{Hamiltonian, LaplacianScheme};
    use crate::lattice::{Grid, PotentialSpec};
    use crate::rng::random_field;
    use crate::Complex64;

    fn calc() -> FunctionalCalculus {
        let g = Grid::new(1, 16.0, 64).unwrap();
        let spec = PotentialSpec::GaussianWell { depth: -2.0, width: 1.0, center: vec![] };
        FunctionalCalculus::new(Hamiltonian::assemble(&g, &spec, LaplacianScheme::FourierSpectral).unwrap())
    }

    #[test]
    fn exponents() {
        assert_eq!(conjugate(2.0), 2.0);
        assert_eq!(conjugate(1.0), f64::INFINITY);
        assert_eq!(conjugate(f64::INFINITY), 1.0);
        assert!((1.0 / 3.0 + 1.0 / conjugate(3.0) - 1.0).abs() < 1e-15);
        assert_eq!(critical_exponent(3, 2.0), 0.0);
        assert_eq!(critical_exponent(3, 1.0), 1.5);
        assert!(BesovIndex::new(0.0, 0.5, 1.0).is_err());
        assert!(BesovIndex::new(f64::NAN, 2.0, 1.0).is_err());
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let c = calc();
        let sys = c.dyadic_system();
        let z = Field::zeros(*c.ham().grid());
        let idx = BesovIndex::new(1.0, 2.0, 1.0).unwrap();
        assert_eq!(besov_norm(&c, &sys, &z, &idx).unwrap(), 0.0);
        assert_eq!(triebel_norm(&c, &sys, &z, &idx).unwrap(), 0.0);
    }

    #[test]
    fn single_window_eigenfield() {
        // Free periodic box with L = 2π: eigenvalues are integers m².
        let g = Grid::new(1, 2.0 * std::f64::consts::PI, 64).unwrap();
        let c = FunctionalCalculus::new(
            Hamiltonian::assemble(&g, &PotentialSpec::Zero, LaplacianScheme::FourierSpectral).unwrap(),
        );
        let sys = c.dyadic_system();
        // λ = 16 = 2^{5-1} is the peak of φ_5.
        let e = Field::from_fn(g, |x| Complex64::from_polar(1.0, 4.0 * x[0]));
        for (alpha, p, q) in [(0.0, 2.0, 1.0), (1.0, 1.0, 2.0), (0.5, 4.0, f64::INFINITY)] {
            let idx = BesovIndex::new(alpha, p, q).unwrap();
            let expected = (5.0 * alpha).exp2() * lp_norm(&e, p).unwrap();
            let b = besov_norm(&c, &sys, &e, &idx).unwrap();
            assert!((b - expected).abs() <= 1e-8 * expected, "{b} {expected}");
            let t = triebel_norm(&c, &sys, &e, &idx).unwrap();
            assert!((t - expected).abs() <= 1e-8 * expected);
        }
    }

    #[test]
    fn l2_besov_is_equivalent_to_l2() {
        let c = calc();
        let sys = c.dyadic_system();
        let idx = BesovIndex::new(0.0, 2.0, 2.0).unwrap();
        for s in 0..10 {
            let f = random_field(c.ham().grid(), 17, s);
            let b = besov_norm(&c, &sys, &f, &idx).unwrap();
            let n = f.l2_norm();
            assert!(b >= n / 2f64.sqrt() * (1.0 - 1e-9) && b <= n * (1.0 + 1e-9));
        }
    }

    #[test]
    fn norm_axioms_and_monotonicity() {
        let c = calc();
        let sys = c.dyadic_system();
        let g = *c.ham().grid();
        let k = Complex64::new(-1.5, 2.0);
        let indices = [(0.0, 2.0, 1.0), (1.0, 1.0, 2.0), (0.5, 3.0, f64::INFINITY)]
            .map(|(a, p, q)| BesovIndex::new(a, p, q).unwrap());
        for s in 0..20 {
            let f = random_field(&g, 40, s);
            let h = random_field(&g, 41, s);
            let pf = c.lp_decompose(&sys, &f).unwrap();
            let ph = c.lp_decompose(&sys, &h).unwrap();
            let psum = c.lp_decompose(&sys, &f.add(&h).unwrap()).unwrap();
            let pscaled = c.lp_decompose(&sys, &f.scale(k)).unwrap();
            for idx in &indices {
                for norm in [besov_from_pieces, triebel_from_pieces] {
                    let nf = norm(&pf, idx).unwrap();
                    let nh = norm(&ph, idx).unwrap();
                    assert!(norm(&psum, idx).unwrap() <= (nf + nh) * (1.0 + 1e-9));
                    let scaled = norm(&pscaled, idx).unwrap();
                    assert!((scaled - k.norm() * nf).abs() <= 1e-9 * scaled);
                }
            }
        }
        let f = random_field(&g, 5, 0);
        let pieces = c.lp_decompose(&sys, &f).unwrap();
        let qs = [1.0, 1.5, 2.0, 4.0, f64::INFINITY];
        let vals: Vec<f64> =
            qs.iter().map(|&q| besov_from_pieces(&pieces, &BesovIndex::new(1.0, 2.0, q).unwrap()).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn embedding_chain_holds() {
        let c = calc();
        let sys = c.dyadic_system();
        let fields: Vec<Field> = (0..10).map(|s| random_field(c.ham().grid(), 9, s)).collect();
        for (p, q) in [(2.0, 1.0), (2.0, f64::INFINITY), (1.0, 1.0), (2.0, 2.0), (3.0, 1.5)] {
            let r = embedding_check(&c, &sys, &fields, &BesovIndex::new(0.5, p, q).unwrap()).unwrap();
            assert_eq!(r.violations, 0, "{r:?}");
            assert!(r.worst_equal_exponent_defect <= 1e-12);
            if p == q {
                assert!(r.worst_lower_margin.abs() <= 1e-12 && r.worst_upper_margin.abs() <= 1e-12);
            }
        }
        let inf = BesovIndex::new(0.0, f64::INFINITY, 1.0).unwrap();
        assert!(embedding_check(&c, &sys, &fields, &inf).is_err());
        assert!(triebel_norm(&c, &sys, &fields[0], &inf).is_err());
    }
}
