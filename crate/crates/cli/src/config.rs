//! Run configuration: a TOML file describing the operator, the data and the
//! experiments. Everything has a canonical JSON form whose SHA-256 names the
//! output files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use schrodecay::decaylab::{RhsVariant, Space};
use schrodecay::dyadic::DyadicSystem;
use schrodecay::funcalc::{CalculusOptions, FunctionalCalculus};
use schrodecay::hamiltonian::{Hamiltonian, LaplacianScheme};
use schrodecay::lattice::{gaussian_packet, read_field, Field, Grid, PotentialSpec};
use schrodecay::rng::random_field;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub extent: f64,
    pub points: usize,
}

/// Tolerance overrides; absent fields keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub window_tol: Option<f64>,
    pub phase_tol: Option<f64>,
    pub max_points: Option<usize>,
    pub max_phase_step: Option<f64>,
}

impl Tolerances {
    pub fn apply(&self) -> CalculusOptions {
        let d = CalculusOptions::default();
        CalculusOptions {
            window_tol: self.window_tol.unwrap_or(d.window_tol),
            phase_tol: self.phase_tol.unwrap_or(d.phase_tol),
            max_points: self.max_points.unwrap_or(d.max_points),
            max_phase_step: self.max_phase_step.unwrap_or(d.max_phase_step),
            margin: d.margin,
        }
    }
}

/// Initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Gaussian {
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default)]
        momentum: Vec<f64>,
    },
    Random {
        #[serde(default)]
        stream: u64,
    },
    File {
        path: PathBuf,
    },
}

impl FieldSpec {
    pub fn build(&self, grid: &Grid, seed: u64) -> Result<Field, CliError> {
        Ok(match self {
            FieldSpec::Gaussian { width, center, momentum } => gaussian_packet(grid, center, *width, momentum)?,
            FieldSpec::Random { stream } => random_field(grid, seed, *stream),
            FieldSpec::File { path } => {
                let f = read_field(path)?;
                f.ensure_same_grid(grid)?;
                f
            }
        })
    }

    pub fn describe(&self) -> String {
        match self {
            FieldSpec::Gaussian { width, center, momentum } => {
                format!("gaussian(width={width}, center={center:?}, momentum={momentum:?})")
            }
            FieldSpec::Random { stream } => format!("random(stream={stream})"),
            FieldSpec::File { path } => format!("file({})", path.display()),
        }
    }
}

/// Ascending times, either listed or log-spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Times {
    List(Vec<f64>),
    Log { log_from: f64, log_to: f64, count: usize },
    Linear { from: f64, to: f64, count: usize },
}

impl Times {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Times::List(ref v) => v.clone(),
            Times::Log { log_from, log_to, count } => (0..count)
                .map(|k| log_from * (log_to / log_from).powf(k as f64 / (count.max(2) - 1) as f64))
                .collect(),
            Times::Linear { from, to, count } => {
                (0..count).map(|k| from + (to - from) * k as f64 / (count.max(2) - 1) as f64).collect()
            }
        }
    }
}

fn default_q() -> f64 {
    1.0
}

fn default_variant() -> RhsVariant {
    RhsVariant::B2BetaQ1
}

fn default_space() -> Space {
    Space::B
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    ShortTime {
        field: FieldSpec,
        p: f64,
        times: Times,
    },
    LongTime {
        field: FieldSpec,
        p: f64,
        times: Times,
        #[serde(default = "default_variant")]
        variant: RhsVariant,
        fit_window: Option<(f64, f64)>,
    },
    Dispersive {
        field: FieldSpec,
        p: f64,
        times: Times,
        fit_window: Option<(f64, f64)>,
    },
    Corollary {
        field: FieldSpec,
        alpha: f64,
        p: f64,
        #[serde(default = "default_q")]
        q: f64,
        #[serde(default = "default_space")]
        space: Space,
        times: Times,
        fit_window: Option<(f64, f64)>,
    },
    LemmaJn {
        fields: Vec<FieldSpec>,
        p: f64,
        thetas: Vec<f64>,
        times: Times,
    },
    DyadicSplit {
        field: FieldSpec,
        p: f64,
        times: Times,
    },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ShortTime { .. } => "short_time",
            Experiment::LongTime { .. } => "long_time",
            Experiment::Dispersive { .. } => "dispersive",
            Experiment::Corollary { .. } => "corollary",
            Experiment::LemmaJn { .. } => "lemma_jn",
            Experiment::DyadicSplit { .. } => "dyadic_split",
        }
    }
}

fn default_rollnik_samples() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default = "default_potential")]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub scheme: LaplacianScheme,
    /// Dyadic depth; sized from the spectral enclosure when absent.
    pub j_max: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rollnik_samples")]
    pub rollnik_samples: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Allow three-dimensional experiments on potentials that fail the
    /// hypothesis check.
    #[serde(default)]
    pub unguarded: bool,
    pub output: Option<PathBuf>,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<Experiment>,
}

fn default_potential() -> PotentialSpec {
    PotentialSpec::Zero
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.grid()?;
        self.potential.validate(self.grid.dim)?;
        if let Some(j) = self.j_max {
            DyadicSystem::new(j)?;
        }
        for e in &self.experiments {
            let times = match e {
                Experiment::ShortTime { times, .. }
                | Experiment::LongTime { times, .. }
                | Experiment::Dispersive { times, .. }
                | Experiment::Corollary { times, .. }
                | Experiment::LemmaJn { times, .. }
                | Experiment::DyadicSplit { times, .. } => times.values(),
            };
            if times.is_empty() || times.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(CliError::Usage(format!("experiment {}: times must be finite and nonnegative", e.name())));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.grid.dim, self.grid.extent, self.grid.points)?)
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian, CliError> {
        Ok(Hamiltonian::assemble(&self.grid()?, &self.potential, self.scheme)?)
    }

    pub fn calculus(&self) -> Result<FunctionalCalculus, CliError> {
        Ok(FunctionalCalculus::with_options(self.hamiltonian()?, self.tolerances.apply()))
    }

    pub fn dyadic(&self, calc: &FunctionalCalculus) -> Result<DyadicSystem, CliError> {
        Ok(match self.j_max {
            Some(j) => DyadicSystem::new(j)?,
            None => calc.dyadic_system(),
        })
    }

    /// Sorted-key JSON; the basis of the config hash.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("JSON value serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 3
scheme = "fd2"

[grid]
dim = 1
extent = 32.0
points = 128

[potential]
kind = "gaussian_well"
depth = -2.0
width = 1.0

[tolerances]
window_tol = 1e-9

[[experiment]]
type = "dispersive"
p = 1.0
times = { log_from = 1.0, log_to = 8.0, count = 6 }
fit_window = [1.0, 8.0]
field = { kind = "gaussian", width = 1.0 }

[[experiment]]
type = "lemma_jn"
p = 2.0
thetas = [0.5, 1.0]
times = [0.0, 1.0]
fields = [{ kind = "random" }]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.scheme, LaplacianScheme::Fd2);
        assert_eq!(cfg.experiments.len(), 2);
        assert_eq!(cfg.tolerances.apply().window_tol, 1e-9);
        let text = toml::to_string(&cfg).unwrap();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let json: RunConfig = serde_json::from_str(&cfg.canonical_json()).unwrap();
        assert_eq!(json, cfg);
    }

    #[test]
    fn times_forms() {
        let t = Times::Log { log_from: 1.0, log_to: 100.0, count: 3 }.values();
        assert!((t[1] - 10.0).abs() < 1e-12 && (t[2] - 100.0).abs() < 1e-9);
        assert_eq!(Times::Linear { from: 0.0, to: 1.0, count: 3 }.values(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::parse(SAMPLE).unwrap();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn rejects_bad_configs() {
        let unknown = SAMPLE.replace("type = \"dispersive\"", "type = \"teleport\"");
        assert!(matches!(RunConfig::parse(&unknown), Err(CliError::Usage(_))));
        let typo = SAMPLE.replace("seed = 3", "sead = 3");
        let err = RunConfig::parse(&typo).unwrap_err().to_string();
        assert!(err.contains("sead"), "{err}");
        let bad_grid = SAMPLE.replace("points = 128", "points = 2");
        assert!(RunConfig::parse(&bad_grid).is_err());
    }
}
