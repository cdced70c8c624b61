//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Every key except `potential.kind` has a default, so a file only
//! needs to list what differs from the built-in Ornstein–Uhlenbeck experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::measure::{Grid, GridDensity};
use crate::potential::{Perturbation, Potential};
use crate::sde::{InitialLaw, SimulationOptions};
use crate::pde::SolverOptions;

/// Initial law of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Gaussian { mean: f64, var: f64 },
    /// Two-column `x,value` CSV on the experiment grid.
    GridFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub potential: Potential,
    pub initial: InitialSpec,
    pub t0: f64,
    /// Final time `T`.
    pub horizon: f64,
    pub dt_pde: f64,
    pub dt_sde: f64,
    pub grid: Grid,
    pub m_paths: usize,
    pub seed: u64,
    pub perturbation: Option<Perturbation>,
    pub save_stride: usize,
    pub record_stride: usize,
    pub output: PathBuf,
    /// At most this many paths are written to `ensemble.csv`.
    pub ensemble_max_paths: usize,
    /// At most this many snapshots are written by `flow` (evenly thinned).
    pub snapshots_max: usize,
    /// `simulate` runs the time-reversed diffusion instead of the forward one.
    pub reversed: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            potential: Potential::ornstein_uhlenbeck(),
            initial: InitialSpec::Gaussian { mean: 1.0, var: 2.0 },
            t0: 0.0,
            horizon: 1.0,
            dt_pde: 1e-4,
            dt_sde: 1e-3,
            grid: Grid::standard(),
            m_paths: 100_000,
            seed: 20_240_601,
            perturbation: None,
            save_stride: 10,
            record_stride: 10,
            output: PathBuf::from("out"),
            ensemble_max_paths: 1000,
            snapshots_max: 101,
            reversed: false,
        }
    }
}

/// Every accepted key, in serialization order.
pub const KEYS: &[&str] = &[
    "potential.kind",
    "potential.theta",
    "potential.c",
    "potential.alpha",
    "initial.kind",
    "initial.mean",
    "initial.var",
    "initial.file",
    "t0",
    "horizon",
    "dt_pde",
    "dt_sde",
    "grid.x_min",
    "grid.x_max",
    "grid.n",
    "m_paths",
    "seed",
    "save_stride",
    "record_stride",
    "perturbation.kind",
    "perturbation.center",
    "perturbation.radius",
    "perturbation.amplitude",
    "output",
    "ensemble.max_paths",
    "snapshots.max",
    "simulate.reversed",
];

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), message: message.into() }
}

struct Fields<'a> {
    map: &'a BTreeMap<String, String>,
    defaults: BTreeMap<String, String>,
}

impl Fields<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).or_else(|| self.defaults.get(key)).map(String::as_str)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key).ok_or_else(|| config_err(key, "missing"))?;
        raw.parse().map_err(|_| config_err(key, format!("cannot parse `{raw}`")))
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v: f64 = self.get(key)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(config_err(key, format!("must be positive, got {v}")))
        }
    }

    fn finite(&self, key: &str) -> Result<f64> {
        let v: f64 = self.get(key)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(config_err(key, "must be finite"))
        }
    }

    fn count(&self, key: &str, min: usize) -> Result<usize> {
        let v: usize = self.get(key)?;
        if v >= min {
            Ok(v)
        } else {
            Err(config_err(key, format!("must be at least {min}, got {v}")))
        }
    }
}

impl ExperimentConfig {
    /// Build from key/value pairs. Unknown keys are rejected and
    /// `potential.kind` must be present.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(config_err(k, "unknown key"));
        }
        if !map.contains_key("potential.kind") {
            return Err(config_err("potential.kind", "missing (one of zero, quadratic, double_well)"));
        }
        let f = Fields { map, defaults: Self::default().to_map() };
        let kind: String = f.get("potential.kind")?;
        let potential = match kind.as_str() {
            "zero" => Potential::Zero,
            "quadratic" => Potential::quadratic(f.positive("potential.theta")?, f.finite("potential.c")?)
                .map_err(|e| config_err("potential.theta", e.to_string()))?,
            "double_well" => Potential::double_well(f.finite("potential.alpha")?)
                .map_err(|e| config_err("potential.alpha", e.to_string()))?,
            other => return Err(config_err("potential.kind", format!("unknown kind `{other}`"))),
        };
        let initial = match f.get::<String>("initial.kind")?.as_str() {
            "gaussian" => InitialSpec::Gaussian { mean: f.finite("initial.mean")?, var: f.positive("initial.var")? },
            "grid" => {
                let file: String = f.get("initial.file")?;
                if file.is_empty() {
                    return Err(config_err("initial.file", "required when initial.kind = grid"));
                }
                InitialSpec::GridFile(PathBuf::from(file))
            }
            other => return Err(config_err("initial.kind", format!("unknown kind `{other}`"))),
        };
        let (x_min, x_max) = (f.finite("grid.x_min")?, f.finite("grid.x_max")?);
        if !(x_max > x_min) {
            return Err(config_err("grid.x_max", "must exceed grid.x_min"));
        }
        let grid = Grid::new(x_min, x_max, f.count("grid.n", 3)?).map_err(|e| config_err("grid.n", e.to_string()))?;
        let perturbation = match f.get::<String>("perturbation.kind")?.as_str() {
            "none" => None,
            "bump" => Some(
                Perturbation::new(
                    f.finite("perturbation.center")?,
                    f.positive("perturbation.radius")?,
                    f.finite("perturbation.amplitude")?,
                )
                .map_err(|e| config_err("perturbation.radius", e.to_string()))?,
            ),
            other => return Err(config_err("perturbation.kind", format!("unknown kind `{other}`"))),
        };
        let dt_sde = f.positive("dt_sde")?;
        if dt_sde > 1e-2 {
            return Err(config_err("dt_sde", format!("must not exceed 1e-2, got {dt_sde}")));
        }
        let reversed = match f.get::<String>("simulate.reversed")?.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(config_err("simulate.reversed", format!("expected true or false, got `{other}`"))),
        };
        Ok(Self {
            potential,
            initial,
            t0: f.finite("t0")?,
            horizon: f.positive("horizon")?,
            dt_pde: f.positive("dt_pde")?,
            dt_sde,
            grid,
            m_paths: f.count("m_paths", 1)?,
            seed: f.get("seed")?,
            perturbation,
            save_stride: f.count("save_stride", 1)?,
            record_stride: f.count("record_stride", 1)?,
            output: PathBuf::from(f.get::<String>("output")?),
            ensemble_max_paths: f.get("ensemble.max_paths")?,
            snapshots_max: f.count("snapshots.max", 2)?,
            reversed,
        })
        .and_then(|c: Self| {
            if c.horizon > c.t0 {
                Ok(c)
            } else {
                Err(config_err("horizon", format!("must exceed t0 = {}", c.t0)))
            }
        })
    }

    /// All keys with their values. Parameters of inactive variants keep their defaults.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let (kind, theta, c, alpha) = match &self.potential {
            Potential::Zero => ("zero", 0.25, 0.0, 1.0),
            Potential::Quadratic { theta, c } => ("quadratic", *theta, *c, 1.0),
            Potential::DoubleWell { alpha } => ("double_well", 0.25, 0.0, *alpha),
            Potential::Custom(_) => ("custom", 0.25, 0.0, 1.0),
        };
        put("potential.kind", kind.into());
        put("potential.theta", theta.to_string());
        put("potential.c", c.to_string());
        put("potential.alpha", alpha.to_string());
        let (ikind, mean, var, file) = match &self.initial {
            InitialSpec::Gaussian { mean, var } => ("gaussian", *mean, *var, String::new()),
            InitialSpec::GridFile(p) => ("grid", 1.0, 2.0, p.display().to_string()),
        };
        put("initial.kind", ikind.into());
        put("initial.mean", mean.to_string());
        put("initial.var", var.to_string());
        put("initial.file", file);
        put("t0", self.t0.to_string());
        put("horizon", self.horizon.to_string());
        put("dt_pde", self.dt_pde.to_string());
        put("dt_sde", self.dt_sde.to_string());
        put("grid.x_min", self.grid.x_min().to_string());
        put("grid.x_max", self.grid.x_max().to_string());
        put("grid.n", self.grid.len().to_string());
        put("m_paths", self.m_paths.to_string());
        put("seed", self.seed.to_string());
        put("save_stride", self.save_stride.to_string());
        put("record_stride", self.record_stride.to_string());
        let (pkind, center, radius, amplitude) = match &self.perturbation {
            None => ("none", 0.0, 1.0, 0.2),
            Some(b) => ("bump", b.center(), b.radius(), b.amplitude()),
        };
        put("perturbation.kind", pkind.into());
        put("perturbation.center", center.to_string());
        put("perturbation.radius", radius.to_string());
        put("perturbation.amplitude", amplitude.to_string());
        put("output", self.output.display().to_string());
        put("ensemble.max_paths", self.ensemble_max_paths.to_string());
        put("snapshots.max", self.snapshots_max.to_string());
        put("simulate.reversed", self.reversed.to_string());
        m
    }

    /// `key = value` lines in [`KEYS`] order; parses back to an equal config.
    pub fn to_config_string(&self) -> String {
        let m = self.to_map();
        KEYS.iter().map(|k| format!("{k} = {}\n", m[*k])).collect()
    }

    pub fn parse_pairs(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
        let mut map = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                message: format!("line {}: expected `key = value`", no + 1),
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(map)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&Self::parse_pairs(text, Path::new("<string>"))?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_map(&Self::parse_pairs(&text, path)?)
    }

    /// Copy with one key replaced (validated like a file entry).
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut m = self.to_map();
        if !KEYS.contains(&key) {
            return Err(config_err(key, "unknown key"));
        }
        m.insert(key.to_string(), value.to_string());
        Self::from_map(&m)
    }

    /// The configured perturbation, or the bump `(0, 1, 0.2)` used by the
    /// perturbed verifications when none is configured.
    pub fn perturbation_or_default(&self) -> Perturbation {
        self.perturbation.unwrap_or_else(|| Perturbation::new(0.0, 1.0, 0.2).expect("valid bump"))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions::new(self.dt_pde, self.save_stride)
    }

    pub fn simulation_options(&self) -> SimulationOptions {
        SimulationOptions::new(self.horizon, self.dt_sde, self.m_paths, self.seed)
            .with_t0(self.t0)
            .with_record_stride(self.record_stride)
    }

    /// Initial density on the experiment grid.
    pub fn initial_density(&self) -> Result<GridDensity> {
        match &self.initial {
            InitialSpec::Gaussian { mean, var } => GridDensity::gaussian(self.grid, *mean, *var),
            InitialSpec::GridFile(p) => {
                let d = GridDensity::read_csv(p)?;
                if !d.grid().same_as(&self.grid) {
                    return Err(config_err("initial.file", "density grid differs from the configured grid"));
                }
                Ok(d)
            }
        }
    }

    /// Initial law for path simulation (exact Gaussian draws when available).
    pub fn initial_law(&self) -> Result<InitialLaw> {
        match &self.initial {
            InitialSpec::Gaussian { mean, var } => InitialLaw::gaussian(*mean, *var),
            InitialSpec::GridFile(_) => Ok(InitialLaw::Grid(self.initial_density()?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.to_config_string()).unwrap(), c);
    }

    #[test]
    fn missing_and_bad_keys_are_named() {
        let err = ExperimentConfig::parse("horizon = 2\n").unwrap_err().to_string();
        assert!(err.contains("potential.kind"), "{err}");
        let err = ExperimentConfig::parse("potential.kind = quadratic\npotential.theta = -1\n").unwrap_err().to_string();
        assert!(err.contains("potential.theta"), "{err}");
        let err = ExperimentConfig::parse("potential.kind = zero\nhorison = 2\n").unwrap_err().to_string();
        assert!(err.contains("horison"), "{err}");
        let err = ExperimentConfig::parse("potential.kind = zero\ndt_sde = 0.5\n").unwrap_err().to_string();
        assert!(err.contains("dt_sde"), "{err}");
        let err = ExperimentConfig::parse("potential.kind = zero\nm_paths = lots\n").unwrap_err().to_string();
        assert!(err.contains("m_paths"), "{err}");
        assert!(ExperimentConfig::parse("potential.kind = zero\nno equals sign\n").is_err());
    }

    #[test]
    fn comments_and_overrides() {
        let c = ExperimentConfig::parse("# double well\npotential.kind = double_well\n\nperturbation.kind = none\n").unwrap();
        assert_eq!(c.potential, Potential::double_well(1.0).unwrap());
        assert!(c.perturbation.is_none());
        let c = c.with_override("seed", "7").unwrap();
        assert_eq!(c.seed, 7);
        assert!(c.with_override("seed", "-1").is_err());
        assert!(c.with_override("nope", "1").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(
            theta in 0.01f64..5.0,
            c in -3.0f64..3.0,
            mean in -5.0f64..5.0,
            var in 0.01f64..10.0,
            horizon in 0.01f64..10.0,
            seed in any::<u64>(),
            amp in -1.0f64..1.0,
            reversed in any::<bool>(),
        ) {
            let cfg = ExperimentConfig {
                potential: Potential::quadratic(theta, c).unwrap(),
                initial: InitialSpec::Gaussian { mean, var },
                horizon,
                seed,
                perturbation: Some(Perturbation::new(0.3, 0.7, amp).unwrap()),
                reversed,
                ..ExperimentConfig::default()
            };
            prop_assert_eq!(ExperimentConfig::parse(&cfg.to_config_string()).unwrap(), cfg);
        }
    }
}
