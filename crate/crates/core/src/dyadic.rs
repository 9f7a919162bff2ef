//! Smooth dyadic partitions of unity.
//!
//! With the `C^∞` step `s(t) = e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)})` and the
//! profile `ψ(x) = 1 - s(2|x| - 1)` (equal to one on `|x| <= 1/2`, zero on
//! `|x| >= 1`), the windows are
//!
//! ```text
//! φ_0(x) = ψ(x),    φ_j(x) = ψ(2^{-j} x) - ψ(2^{-(j-1)} x),  1 <= j <= J.
//! ```
//!
//! They telescope: `Σ_{j<=J} φ_j = ψ(2^{-J} ·)`, which is one on `|x| <= 2^{J-1}`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The smooth step `s`, exactly 0 for `t <= 0` and exactly 1 for `t >= 1`.
pub fn transition(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// `ψ(x) = 1 - s(2|x| - 1)`.
pub fn profile(x: f64) -> f64 {
    1.0 - transition(2.0 * x.abs() - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicSystem {
    j_max: usize,
}

impl DyadicSystem {
    pub fn new(j_max: usize) -> Result<Self> {
        if j_max < 1 {
            return Err(Error::InvalidArgument("J_max must be at least 1".into()));
        }
        if j_max > 60 {
            return Err(Error::InvalidArgument(format!("J_max = {j_max} is unreasonably large")));
        }
        Ok(Self { j_max })
    }

    /// Smallest system whose partition of unity covers `[lo, hi]`.
    pub fn for_spectrum(lo: f64, hi: f64) -> Self {
        let radius = lo.abs().max(hi.abs()).max(1.0);
        let mut j_max = 1;
        while ((1u64 << (j_max - 1)) as f64) < radius {
            j_max += 1;
        }
        Self { j_max }
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    /// `Λ = 2^{J_max}`.
    pub fn closure_scale(&self) -> f64 {
        (self.j_max as f64).exp2()
    }

    /// `2^{J_max - 1}`: the windows sum to one on `|x|` up to here.
    pub fn resolved_radius(&self) -> f64 {
        ((self.j_max - 1) as f64).exp2()
    }

    /// Closed support interval of `|x|` for window `j`.
    pub fn support(j: usize) -> (f64, f64) {
        if j == 0 {
            (0.0, 1.0)
        } else {
            ((((j as i32) - 2) as f64).exp2(), (j as f64).exp2())
        }
    }

    /// `φ_j(x)`.
    pub fn eval_window(&self, j: usize, x: f64) -> Result<f64> {
        if j > self.j_max {
            return Err(Error::InvalidArgument(format!("window {j} outside 0..={}", self.j_max)));
        }
        Ok(window(j, x))
    }

    /// Intervals of `|x|` where window `j` is not locally constant.
    pub fn transition_bands(j: usize) -> Vec<(f64, f64)> {
        if j == 0 {
            vec![(0.5, 1.0)]
        } else {
            let q = ((j as i32) - 2) as f64;
            vec![(q.exp2(), (q + 1.0).exp2()), ((q + 1.0).exp2(), (q + 2.0).exp2())]
        }
    }

    pub fn validate(&self, samples_per_octave: usize) -> Result<ValidationReport> {
        if samples_per_octave < 16 {
            return Err(Error::InvalidArgument(format!(
                "{samples_per_octave} samples per octave, need at least 16"
            )));
        }
        let jm = self.j_max;
        // [0, 1] plus octaves [2^{m-1}, 2^m] up to 2^{J+1}; positions scale exactly by 2.
        let mut xs: Vec<f64> = (0..samples_per_octave).map(|i| i as f64 / samples_per_octave as f64).collect();
        for m in 1..=jm + 1 {
            let lo = ((m - 1) as f64).exp2();
            xs.extend((0..samples_per_octave).map(|i| lo * (1.0 + i as f64 / samples_per_octave as f64)));
        }
        xs.push(((jm + 1) as f64).exp2());

        let resolved = self.resolved_radius();
        let partition_defect = xs
            .iter()
            .filter(|&&x| x <= resolved)
            .map(|&x| ((0..=jm).map(|j| window(j, x)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);

        let mut support_violations = 0usize;
        for j in 0..=jm {
            let (lo, hi) = Self::support(j);
            for &x in &xs {
                let outside = x > hi || (j > 0 && x < lo);
                if outside && window(j, x) != 0.0 {
                    support_violations += 1;
                }
            }
        }

        let mut derivative_table = Vec::with_capacity(5);
        for k in 0..=4usize {
            let per_scale: Vec<f64> = (0..=jm)
                .map(|j| {
                    let (lo, hi) = Self::support(j);
                    let step = (j as f64).exp2() * 1e-4;
                    let peak = xs
                        .iter()
                        .filter(|&&x| x >= lo && x <= hi)
                        .map(|&x| central_difference(|y| window(j, y), x, step, k).abs())
                        .fold(0.0, f64::max);
                    (k as f64 * j as f64).exp2() * peak
                })
                .collect();
            let compared = if jm >= 2 { &per_scale[2..] } else { &per_scale[..] };
            let c_min = compared.iter().copied().fold(f64::INFINITY, f64::min);
            let c_max = compared.iter().copied().fold(0.0, f64::max);
            derivative_table.push(DerivativeBound {
                k,
                c_min,
                c_max,
                spread: if c_min > 0.0 { c_max / c_min } else { f64::INFINITY },
                per_scale,
            });
        }
        let pass = partition_defect <= 1e-10
            && support_violations == 0
            && derivative_table.iter().all(|row| row.spread <= 4.0);
        Ok(ValidationReport {
            j_max: jm,
            samples_per_octave,
            partition_defect,
            support_violations,
            derivative_table,
            pass,
        })
    }
}

pub(crate) fn window(j: usize, x: f64) -> f64 {
    let x = x.abs();
    if j == 0 {
        profile(x)
    } else {
        profile(x * (-(j as f64)).exp2()) - profile(x * (-((j - 1) as f64)).exp2())
    }
}

fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64, k: usize) -> f64 {
    match k {
        0 => f(x),
        1 => (f(x + h) - f(x - h)) / (2.0 * h),
        2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
        3 => (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h),
        4 => (f(x + 2.0 * h) - 4.0 * f(x + h) + 6.0 * f(x) - 4.0 * f(x - h) + f(x - 2.0 * h)) / (h * h * h * h),
        _ => unreachable!("derivative order {k} not tabulated"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBound {
    pub k: usize,
    pub c_min: f64,
    pub c_max: f64,
    pub spread: f64,
    /// `c_k(j)` for every `j`.
    pub per_scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub j_max: usize,
    pub samples_per_octave: usize,
    pub partition_defect: f64,
    pub support_violations: usize,
    pub derivative_table: Vec<DerivativeBound>,
    pub pass: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn transition_endpoints() {
        assert_eq!(transition(0.0), 0.0);
        assert_eq!(transition(1.0), 1.0);
        assert!((transition(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(profile(0.5), 1.0);
        assert_eq!(profile(1.0), 0.0);
    }

    #[test]
    fn windows_peak_at_dyadic_points() {
        let sys = DyadicSystem::new(8).unwrap();
        for j in 1..=8 {
            let x = ((j - 1) as f64).exp2();
            for i in 0..=8 {
                let v = sys.eval_window(i, x).unwrap();
                assert_eq!(v, if i == j { 1.0 } else { 0.0 }, "phi_{i}({x})");
            }
        }
        assert_eq!(sys.eval_window(1, 3.0).unwrap(), 0.0);
        assert_eq!(sys.eval_window(0, 0.0).unwrap(), 1.0);
        assert_eq!(sys.eval_window(2, 2.0).unwrap(), 1.0);
        // x = 1 is the peak of φ_1 and the lower support edge of φ_2.
        let v = sys.eval_window(2, 1.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(sys.eval_window(1, 1.0).unwrap() + v, 1.0);
        assert!(sys.eval_window(9, 1.0).is_err());
        assert!(DyadicSystem::new(0).is_err());
    }

    #[test]
    fn overlap_point_splits_between_neighbours() {
        let sys = DyadicSystem::new(4).unwrap();
        let x = 1.5;
        let a = sys.eval_window(1, x).unwrap();
        let b = sys.eval_window(2, x).unwrap();
        assert!(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0);
        assert!((a + b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn telescoping_sum_is_scaled_profile() {
        let sys = DyadicSystem::new(6).unwrap();
        for i in 0..2000 {
            let x = i as f64 * 0.05;
            let s: f64 = (0..=6).map(|j| sys.eval_window(j, x).unwrap()).sum();
            assert!((s - profile(x / 64.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn validation_passes_for_j8() {
        let rep = DyadicSystem::new(8).unwrap().validate(256).unwrap();
        assert!(rep.partition_defect <= 1e-10);
        assert_eq!(rep.support_violations, 0);
        for row in &rep.derivative_table {
            assert!(row.spread <= 4.0, "k = {}: spread {}", row.k, row.spread);
        }
        assert!(rep.pass);
        assert!(DyadicSystem::new(8).unwrap().validate(8).is_err());
    }

    /// Closed-form first derivative of the profile.
    fn profile_derivative(x: f64) -> f64 {
        let t = 2.0 * x.abs() - 1.0;
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        let ds = a * b * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / ((a + b) * (a + b));
        -2.0 * ds * x.signum()
    }

    #[test]
    fn first_derivative_bound_matches_closed_form() {
        let sys = DyadicSystem::new(8).unwrap();
        let rep = sys.validate(256).unwrap();
        let row = &rep.derivative_table[1];
        for j in 2..=8usize {
            let scale = (j as f64).exp2();
            let (lo, hi) = DyadicSystem::support(j);
            let exact = (0..=200_000)
                .map(|i| lo + (hi - lo) * i as f64 / 200_000.0)
                .map(|x| (profile_derivative(x / scale) / scale - 2.0 * profile_derivative(2.0 * x / scale) / scale).abs())
                .fold(0.0, f64::max)
                * scale;
            let measured = row.per_scale[j];
            assert!((measured - exact).abs() <= 0.02 * exact, "j={j}: {measured} vs {exact}");
        }
    }

    #[test]
    fn spectrum_sizing() {
        assert_eq!(DyadicSystem::for_spectrum(0.0, 100.0).j_max(), 8);
        assert_eq!(DyadicSystem::for_spectrum(-3.0, 0.5).j_max(), 3);
        assert_eq!(DyadicSystem::for_spectrum(0.0, 128.0).j_max(), 8);
        assert_eq!(DyadicSystem::for_spectrum(0.0, 128.1).j_max(), 9);
    }

    proptest! {
        #[test]
        fn partition_of_unity(x in 0.0..128.0f64) {
            let sys = DyadicSystem::new(8).unwrap();
            let s: f64 = (0..=8).map(|j| sys.eval_window(j, x).unwrap()).sum();
            prop_assert!((s - 1.0).abs() <= 1e-10);
            prop_assert!((0..=8).all(|j| sys.eval_window(j, x).unwrap() >= -1e-15));
        }

        #[test]
        fn exact_support(j in 0usize..=8, u in 0.0..1.0f64) {
            let (lo, hi) = DyadicSystem::support(j);
            let beyond = hi * (1.0 + 3.0 * u) + 1e-12;
            prop_assert_eq!(window(j, beyond), 0.0);
            prop_assert_eq!(window(j, -beyond), 0.0);
            if j > 0 {
                prop_assert_eq!(window(j, lo * u), 0.0);
            }
        }

        #[test]
        fn scale_self_similarity(j in 1usize..8, x in 0.0..300.0f64) {
            prop_assert_eq!(window(j + 1, 2.0 * x), window(j, x));
        }
    }
}
