use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{io, lp_norm, Field, Grid};
use crate::{Error, Result};

/// Real potential families. Negative depth or height means attractive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    /// `depth · exp(-|x-c|² / (2 width²))`.
    GaussianWell {
        depth: f64,
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `height` on the closed ball `|x-c| <= radius`, zero elsewhere.
    BallIndicator {
        height: f64,
        radius: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `height · exp(1 - 1/(1 - r²/radius²))` inside the ball, zero outside.
    SmoothBump {
        height: f64,
        radius: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// Real part of a stored field file.
    FromFile { path: PathBuf },
}

/// What is known about `sup |∂^α V|` for the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    /// Every derivative is bounded (closed-form smooth family).
    Bounded,
    /// Discontinuous; Kato class but no derivative bounds.
    Rough,
    /// Sampled data, no computable criterion.
    Unknown,
}

impl PotentialSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let check_center = |c: &[f64]| {
            if !c.is_empty() && c.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "potential center has {} coordinates on a {dim}-d grid",
                    c.len()
                )));
            }
            Ok(())
        };
        match self {
            PotentialSpec::Zero | PotentialSpec::FromFile { .. } => Ok(()),
            PotentialSpec::GaussianWell { width, center, .. } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidArgument(format!("width {width} must be positive")));
                }
                check_center(center)
            }
            PotentialSpec::BallIndicator { radius, center, .. }
            | PotentialSpec::SmoothBump { radius, center, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidArgument(format!("radius {radius} must be positive")));
                }
                check_center(center)
            }
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        match self {
            PotentialSpec::Zero
            | PotentialSpec::GaussianWell { .. }
            | PotentialSpec::SmoothBump { .. } => Smoothness::Bounded,
            PotentialSpec::BallIndicator { .. } => Smoothness::Rough,
            PotentialSpec::FromFile { .. } => Smoothness::Unknown,
        }
    }

    pub fn is_rough(&self) -> bool {
        self.smoothness() == Smoothness::Rough
    }

    pub fn describe(&self) -> String {
        match self {
            PotentialSpec::Zero => "zero".into(),
            PotentialSpec::GaussianWell { depth, width, .. } => format!("gaussian_well(depth={depth}, width={width})"),
            PotentialSpec::BallIndicator { height, radius, .. } => {
                format!("ball_indicator(height={height}, radius={radius}) [rough]")
            }
            PotentialSpec::SmoothBump { height, radius, .. } => format!("smooth_bump(height={height}, radius={radius})"),
            PotentialSpec::FromFile { path } => format!("from_file({})", path.display()),
        }
    }
}

fn dist_sq(x: &[f64], center: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(a, xa)| {
            let c = center.get(a).copied().unwrap_or(0.0);
            (xa - c).powi(2)
        })
        .sum()
}

/// Pointwise samples of `V` on `grid` (imaginary parts are zero).
pub fn sample_potential(spec: &PotentialSpec, grid: &Grid) -> Result<Field> {
    spec.validate(grid.dim())?;
    let real = |v: f64| Complex64::new(v, 0.0);
    let field = match spec {
        PotentialSpec::Zero => Field::zeros(*grid),
        PotentialSpec::GaussianWell { depth, width, center } => {
            Field::from_fn(*grid, |x| real(depth * (-dist_sq(x, center) / (2.0 * width * width)).exp()))
        }
        PotentialSpec::BallIndicator { height, radius, center } => {
            Field::from_fn(*grid, |x| real(if dist_sq(x, center) <= radius * radius { *height } else { 0.0 }))
        }
        PotentialSpec::SmoothBump { height, radius, center } => Field::from_fn(*grid, |x| {
            let u = dist_sq(x, center) / (radius * radius);
            real(if u < 1.0 { height * (1.0 - 1.0 / (1.0 - u)).exp() } else { 0.0 })
        }),
        PotentialSpec::FromFile { path } => {
            let loaded = io::load_field(grid, path)?;
            loaded.map(|v| real(v.re))
        }
    };
    Ok(field)
}

/// Message when a packet of `width` at `center` sits closer than six widths
/// to the box boundary along some axis.
pub fn concentration_warning(grid: &Grid, center: &[f64], width: f64) -> Option<String> {
    let half = 0.5 * grid.extent();
    (0..grid.dim()).find_map(|a| {
        let c = center.get(a).copied().unwrap_or(0.0);
        let room = half - c.abs();
        (room < 6.0 * width).then(|| {
            format!(
                "packet centered at {c} on axis {a} is {room:.3} from the boundary, less than 6 widths ({:.3})",
                6.0 * width
            )
        })
    })
}

/// `exp(-|x-c|²/(2σ²)) · exp(i k·x)`, normalized to unit `L²` norm.
pub fn gaussian_packet(grid: &Grid, center: &[f64], width: f64, momentum: &[f64]) -> Result<Field> {
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("packet width {width} must be positive")));
    }
    for (name, v) in [("center", center), ("momentum", momentum)] {
        if !v.is_empty() && v.len() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "packet {name} has {} coordinates on a {}-d grid",
                v.len(),
                grid.dim()
            )));
        }
    }
    if let Some(msg) = concentration_warning(grid, center, width) {
        log::warn!("{msg}");
    }
    let raw = Field::from_fn(*grid, |x| {
        let envelope = (-dist_sq(x, center) / (2.0 * width * width)).exp();
        let phase: f64 = x.iter().enumerate().map(|(a, xa)| momentum.get(a).copied().unwrap_or(0.0) * xa).sum();
        Complex64::from_polar(envelope, phase)
    });
    let norm = lp_norm(&raw, 2.0)?;
    if norm == 0.0 {
        return Err(Error::InvalidArgument("packet vanishes on the grid".into()));
    }
    Ok(raw.scale(Complex64::new(1.0 / norm, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_potential_is_zero() {
        let g = Grid::new(2, 4.0, 8).unwrap();
        let v = sample_potential(&PotentialSpec::Zero, &g).unwrap();
        assert!(v.values().iter().all(|z| *z == Complex64::default()));
    }

    #[test]
    fn ball_indicator_values() {
        let g = Grid::new(3, 4.0, 16).unwrap();
        let spec = PotentialSpec::BallIndicator { height: 1.0, radius: 1.0, center: vec![] };
        let v = sample_potential(&spec, &g).unwrap();
        for i in 0..g.len() {
            let x = g.point(i);
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let expected = if r2 <= 1.0 { 1.0 } else { 0.0 };
            assert_eq!(v.values()[i], Complex64::new(expected, 0.0));
        }
        assert!(spec.is_rough());
    }

    #[test]
    fn gaussian_well_peak() {
        let g = Grid::new(1, 10.0, 64).unwrap();
        let spec = PotentialSpec::GaussianWell { depth: -2.0, width: 1.0, center: vec![0.0] };
        let v = sample_potential(&spec, &g).unwrap();
        assert_eq!(v.values()[32].re, -2.0);
        assert!(v.values().iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn smooth_bump_peak_and_support() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let spec = PotentialSpec::SmoothBump { height: 3.0, radius: 1.0, center: vec![] };
        let v = sample_potential(&spec, &g).unwrap();
        assert_eq!(v.values()[32].re, 3.0);
        for i in 0..64 {
            if g.coordinate(i).abs() >= 1.0 {
                assert_eq!(v.values()[i].re, 0.0);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_width() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let spec = PotentialSpec::GaussianWell { depth: 1.0, width: 0.0, center: vec![] };
        assert!(sample_potential(&spec, &g).is_err());
        let spec = PotentialSpec::BallIndicator { height: 1.0, radius: 1.0, center: vec![0.0, 1.0] };
        assert!(sample_potential(&spec, &g).is_err());
    }

    #[test]
    fn from_file_length_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.lpsf");
        let small = Grid::new(1, 8.0, 32).unwrap();
        io::save_field(&Field::zeros(small), &path).unwrap();
        let g = Grid::new(1, 8.0, 64).unwrap();
        assert!(sample_potential(&PotentialSpec::FromFile { path: path.clone() }, &g).is_err());
        assert!(sample_potential(&PotentialSpec::FromFile { path }, &small).is_ok());
        let missing = PotentialSpec::FromFile { path: dir.path().join("missing") };
        assert!(sample_potential(&missing, &small).is_err());
    }

    #[test]
    fn packet_is_normalized() {
        let g = Grid::new(1, 40.0, 512).unwrap();
        let f = gaussian_packet(&g, &[0.0], 1.0, &[0.0]).unwrap();
        assert!((f.l2_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn momentum_only_changes_phase() {
        let g = Grid::new(1, 40.0, 512).unwrap();
        let a = gaussian_packet(&g, &[0.0], 1.0, &[0.0]).unwrap();
        let b = gaussian_packet(&g, &[0.0], 1.0, &[5.0]).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x.norm() - y.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn packet_near_boundary_warns() {
        let g = Grid::new(1, 40.0, 512).unwrap();
        assert!(concentration_warning(&g, &[20.0], 1.0).is_some());
        assert!(concentration_warning(&g, &[0.0], 1.0).is_none());
        assert!(gaussian_packet(&g, &[20.0], 1.0, &[]).is_ok());
    }
}
