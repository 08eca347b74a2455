//! Scenario files (TOML).
//!
//! ```toml
//! schema_version = 1
//! name = "single-atom"
//! seed = 7                      # optional, used by chi = "random"
//!
//! [model]
//! kind = "two_level_ensemble"   # or "kerr_mode"
//! atoms = 1
//! rabi = 1.0
//! detuning = 0.0                # optional
//! collective_decay = false      # optional
//! phases = [0.0]                # optional, one per atom
//! # kerr_mode: n_max, kerr, drive, detuning
//!
//! [geometry]
//! modes = 2
//! chi = [[1.0, 0.0], [1.0, 0.0]]   # [re, im] per mode, or "random" / "random:<seed>"
//!
//! [witness]
//! order = 2                     # index sets of total order <= order
//! bipartitions = "all"          # or lists of transposed modes, e.g. [[2], [2, 3]]
//!
//! [correlation]                 # optional
//! tau = [0.0, 0.1, 0.2]         # or tau_max + points
//! two_time_lag = 0.1            # optional two-time witness
//!
//! [oracle]                      # optional, bosonic sources only
//! enabled = true
//!
//! [output]
//! dir = "results"
//!
//! [sweep]                       # only read by `sweep`
//! parameter = "drive"
//! values = [0.1, 0.2]           # or start + stop + points
//! second = { parameter = "kerr", start = 0.0, stop = 1.0, points = 3 }
//! max_points = 10000
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::opalg::{Bipartition, ModeGeometry};
use crate::qcore::EmitterModel;
use crate::{Error, Result, C64};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_POINTS: usize = 10_000;

/// Model section; optional fields default as documented.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    TwoLevelEnsemble {
        atoms: usize,
        rabi: f64,
        #[serde(default)]
        detuning: f64,
        #[serde(default)]
        collective_decay: bool,
        #[serde(default)]
        phases: Option<Vec<f64>>,
    },
    KerrMode {
        n_max: usize,
        kerr: f64,
        drive: f64,
        #[serde(default)]
        detuning: f64,
    },
}

impl ModelSpec {
    pub fn to_model(&self) -> Result<EmitterModel> {
        let model = match self {
            ModelSpec::TwoLevelEnsemble { atoms, rabi, detuning, collective_decay, phases } => {
                let mut m = EmitterModel::ensemble(*atoms, *rabi, *detuning, *collective_decay);
                if let (EmitterModel::TwoLevelEnsemble(e), Some(p)) = (&mut m, phases) {
                    e.phases = p.clone();
                }
                m
            }
            ModelSpec::KerrMode { n_max, kerr, drive, detuning } => EmitterModel::kerr(*n_max, *kerr, *drive, *detuning),
        };
        model.validate().map_err(|e| Error::config("model", e.to_string()))?;
        Ok(model)
    }

    /// Sets a numeric parameter by name.
    pub fn set(&mut self, parameter: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 && v < 1e6 {
                Ok(v as usize)
            } else {
                Err(Error::config(format!("sweep.{parameter}"), format!("{v} is not a count")))
            }
        };
        match (self, parameter) {
            (ModelSpec::TwoLevelEnsemble { rabi, .. }, "rabi") => *rabi = value,
            (ModelSpec::TwoLevelEnsemble { detuning, .. }, "detuning") => *detuning = value,
            (ModelSpec::TwoLevelEnsemble { atoms, phases, .. }, "atoms") => {
                *atoms = as_count(value)?;
                *phases = None;
            }
            (ModelSpec::KerrMode { drive, .. }, "drive") => *drive = value,
            (ModelSpec::KerrMode { kerr, .. }, "kerr") => *kerr = value,
            (ModelSpec::KerrMode { detuning, .. }, "detuning") => *detuning = value,
            (ModelSpec::KerrMode { n_max, .. }, "n_max") => *n_max = as_count(value)?,
            (spec, _) => {
                let kind = match spec {
                    ModelSpec::TwoLevelEnsemble { .. } => "two_level_ensemble",
                    ModelSpec::KerrMode { .. } => "kerr_mode",
                };
                return Err(Error::config("sweep.parameter", format!("`{parameter}` is not a parameter of {kind}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChiSpec {
    Values(Vec<[f64; 2]>),
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub modes: usize,
    #[serde(default)]
    pub chi: Option<ChiSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BipartitionSpec {
    Named(String),
    List(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessSpec {
    pub order: u32,
    #[serde(default)]
    pub bipartitions: Option<BipartitionSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSpec {
    #[serde(default)]
    pub tau: Option<Vec<f64>>,
    #[serde(default)]
    pub tau_max: Option<f64>,
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default)]
    pub two_time_lag: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default)]
    pub enabled: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub parameter: String,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub points: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(flatten)]
    pub first: AxisSpec,
    #[serde(default)]
    pub second: Option<AxisSpec>,
    #[serde(default)]
    pub max_points: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub model: ModelSpec,
    pub geometry: GeometrySpec,
    pub witness: WitnessSpec,
    #[serde(default)]
    pub correlation: Option<CorrelationSpec>,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

/// Largest index-set order accepted from a scenario.
pub const MAX_ORDER: u32 = 6;
/// Largest number of directional modes accepted from a scenario.
pub const MAX_MODES: usize = 6;

impl Scenario {
    pub fn from_toml(text: &str, origin: &str) -> Result<Scenario> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::config(origin, e.to_string().trim_end().to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Scenario::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.model.to_model()?;
        let m = self.geometry.modes;
        if !(2..=MAX_MODES).contains(&m) {
            return Err(Error::config("geometry.modes", format!("must be in 2..={MAX_MODES}, got {m}")));
        }
        if let Some(ChiSpec::Values(v)) = &self.geometry.chi {
            if v.len() != m {
                return Err(Error::config("geometry.chi", format!("{} values for {m} modes", v.len())));
            }
        }
        if let Some(ChiSpec::Named(s)) = &self.geometry.chi {
            parse_random(s)?;
        }
        if !(1..=MAX_ORDER).contains(&self.witness.order) {
            return Err(Error::config("witness.order", format!("must be in 1..={MAX_ORDER}")));
        }
        self.bipartitions()?;
        if let Some(c) = &self.correlation {
            c.grid()?;
            if let Some(lag) = c.two_time_lag {
                if !(lag >= 0.0) || !lag.is_finite() {
                    return Err(Error::config("correlation.two_time_lag", "must be finite and non-negative"));
                }
            }
        }
        if let Some(s) = &self.sweep {
            s.grid()?;
        }
        Ok(())
    }

    /// Seed for random draws: the command-line value, else the one in
    /// `chi = "random:<seed>"`, else the top-level `seed`, else 0.
    pub fn effective_seed(&self, cli_seed: Option<u64>) -> u64 {
        let named = match &self.geometry.chi {
            Some(ChiSpec::Named(s)) => parse_random(s).ok().flatten(),
            _ => None,
        };
        cli_seed.or(named).or(self.seed).unwrap_or(0)
    }

    pub fn geometry(&self, seed: u64) -> Result<ModeGeometry> {
        let m = self.geometry.modes;
        let chi: Vec<C64> = match &self.geometry.chi {
            None => vec![C64::new(1.0, 0.0); m],
            Some(ChiSpec::Values(v)) => v.iter().map(|&[re, im]| C64::new(re, im)).collect(),
            Some(ChiSpec::Named(_)) => random_chi(m, seed),
        };
        ModeGeometry::new(chi).map_err(|e| Error::config("geometry.chi", e.to_string()))
    }

    /// Bipartitions to test; an absent or empty list means all of them.
    pub fn bipartitions(&self) -> Result<Vec<Bipartition>> {
        let m = self.geometry.modes;
        match &self.witness.bipartitions {
            None => Ok(Bipartition::all(m)),
            Some(BipartitionSpec::Named(s)) if s == "all" => Ok(Bipartition::all(m)),
            Some(BipartitionSpec::Named(s)) => {
                Err(Error::config("witness.bipartitions", format!("expected \"all\" or a list, got \"{s}\"")))
            }
            Some(BipartitionSpec::List(l)) if l.is_empty() => Ok(Bipartition::all(m)),
            Some(BipartitionSpec::List(l)) => l
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    Bipartition::new(m, t.iter().copied())
                        .map_err(|e| Error::config(format!("witness.bipartitions[{i}]"), e.to_string()))
                })
                .collect(),
        }
    }
}

fn parse_random(s: &str) -> Result<Option<u64>> {
    match s.split_once(':') {
        None if s == "random" => Ok(None),
        Some(("random", seed)) => seed
            .parse()
            .map(Some)
            .map_err(|_| Error::config("geometry.chi", format!("bad seed in \"{s}\""))),
        _ => Err(Error::config("geometry.chi", format!("expected a list, \"random\" or \"random:<seed>\", got \"{s}\""))),
    }
}

/// Mode functions with modulus uniform in `[0.2, 2]` and uniform phase.
pub fn random_chi(modes: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..modes)
        .map(|_| {
            let r = rng.random_range(0.2..=2.0);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            C64::from_polar(r, phi)
        })
        .collect()
}

impl CorrelationSpec {
    pub fn grid(&self) -> Result<Vec<f64>> {
        let grid = match (&self.tau, self.tau_max, self.points) {
            (Some(t), None, None) => t.clone(),
            (None, Some(max), Some(n)) if n >= 2 && max > 0.0 && max.is_finite() => {
                (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
            }
            (None, None, None) => Vec::new(),
            _ => {
                return Err(Error::config(
                    "correlation",
                    "give either `tau` or `tau_max` with `points >= 2` and tau_max > 0",
                ))
            }
        };
        if grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("correlation.tau", "must be non-negative and strictly increasing"));
        }
        Ok(grid)
    }
}

impl AxisSpec {
    pub fn values(&self, path: &str) -> Result<Vec<f64>> {
        let v = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(1)) if a == b => vec![a],
            (None, Some(a), Some(b), Some(n)) if n >= 2 => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
            _ => return Err(Error::config(path, "give either `values` or `start`, `stop` and `points`")),
        };
        if v.is_empty() {
            return Err(Error::config(path, "empty grid"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::config(path, "grid values must be finite"));
        }
        Ok(v)
    }
}

impl SweepSpec {
    /// Grid points as `(first, second)` values, first axis outermost.
    pub fn grid(&self) -> Result<Vec<(f64, Option<f64>)>> {
        let first = self.first.values("sweep")?;
        let second = match &self.second {
            Some(s) => Some(s.values("sweep.second")?),
            None => None,
        };
        let total = first.len() * second.as_ref().map_or(1, Vec::len);
        let cap = self.max_points.unwrap_or(DEFAULT_MAX_POINTS);
        if total > cap {
            return Err(Error::config("sweep.max_points", format!("grid of {total} points exceeds cap {cap}")));
        }
        Ok(match second {
            None => first.into_iter().map(|a| (a, None)).collect(),
            Some(s) => first.iter().flat_map(|&a| s.iter().map(move |&b| (a, Some(b)))).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ATOM: &str = r#"
        schema_version = 1
        [model]
        kind = "two_level_ensemble"
        atoms = 1
        rabi = 1.0
        [geometry]
        modes = 2
        [witness]
        order = 1
    "#;

    #[test]
    fn minimal_scenario_defaults() {
        let s = Scenario::from_toml(ATOM, "atom.toml").unwrap();
        assert_eq!(s.bipartitions().unwrap(), vec![Bipartition::new(2, [2]).unwrap()]);
        assert_eq!(s.geometry(0).unwrap().chi(), &[C64::new(1.0, 0.0); 2]);
        assert!(!s.oracle.enabled);
    }

    #[test]
    fn empty_bipartition_list_defaults_to_single_split() {
        let text = ATOM.replace("order = 1", "order = 1\nbipartitions = []");
        let s = Scenario::from_toml(&text, "x").unwrap();
        assert_eq!(s.bipartitions().unwrap().len(), 1);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = ATOM.replace("atoms = 1", "atoms = 1\nbogus = 3");
        let e = Scenario::from_toml(&bad, "x").unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
        let bad = ATOM.replace("modes = 2", "modes = 2\nchi = [[1.0, 0.0]]");
        let e = Scenario::from_toml(&bad, "x").unwrap_err().to_string();
        assert!(e.contains("geometry.chi"), "{e}");
        let bad = ATOM.replace("schema_version = 1", "schema_version = 9");
        assert!(Scenario::from_toml(&bad, "x").unwrap_err().to_string().contains("schema_version"));
        let bad = ATOM.replace("order = 1", "order = 1\nbipartitions = [[1, 2]]");
        assert!(Scenario::from_toml(&bad, "x").unwrap_err().to_string().contains("witness.bipartitions[0]"));
    }

    #[test]
    fn random_geometry_is_seeded() {
        let text = ATOM.replace("modes = 2", "modes = 3\nchi = \"random:11\"");
        let s = Scenario::from_toml(&text, "x").unwrap();
        assert_eq!(s.effective_seed(None), 11);
        assert_eq!(s.effective_seed(Some(5)), 5);
        let a = s.geometry(11).unwrap();
        assert_eq!(a, s.geometry(11).unwrap());
        assert_ne!(a, s.geometry(12).unwrap());
        assert!(a.chi().iter().all(|z| (0.2..=2.0).contains(&z.norm())));
    }

    #[test]
    fn sweep_grids() {
        let s = SweepSpec {
            first: AxisSpec { parameter: "drive".into(), values: None, start: Some(0.0), stop: Some(1.0), points: Some(3) },
            second: Some(AxisSpec {
                parameter: "kerr".into(),
                values: Some(vec![1.0, 2.0]),
                start: None,
                stop: None,
                points: None,
            }),
            max_points: None,
        };
        let g = s.grid().unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[1], (0.0, Some(2.0)));
        let capped = SweepSpec { max_points: Some(5), ..s };
        assert!(capped.grid().is_err());
    }

    #[test]
    fn parameter_setting() {
        let mut m = ModelSpec::KerrMode { n_max: 10, kerr: 1.0, drive: 0.1, detuning: 0.0 };
        m.set("drive", 0.5).unwrap();
        assert!(matches!(m, ModelSpec::KerrMode { drive, .. } if drive == 0.5));
        assert!(m.set("rabi", 1.0).is_err());
        assert!(m.set("n_max", 2.5).is_err());
    }
}
