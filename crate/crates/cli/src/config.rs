//! Experiment configuration and its TOML form.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use icdmp::cascades::{HiddenPlacement, InitialScheme};
use icdmp::graph::Topology;
use icdmp::slicer::{Init, LearnConfig};
use serde::{Deserialize, Serialize};

/// Implements serde through the `Display`/`FromStr` pair.
macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec(pub Topology);

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for TopologySpec {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(Self(s.parse().map_err(|e| anyhow!("{e}"))?))
    }
}

string_serde!(TopologySpec);

#[derive(Debug, Clone, PartialEq)]
pub enum ParamScheme {
    Uniform,
    DegreeDependent,
    /// Graph and parameters read from an edge list.
    File(PathBuf),
}

impl fmt::Display for ParamScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamScheme::Uniform => f.write_str("uniform"),
            ParamScheme::DegreeDependent => f.write_str("degree_dependent"),
            ParamScheme::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for ParamScheme {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ParamScheme::Uniform),
            "degree_dependent" => Ok(ParamScheme::DegreeDependent),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(ParamScheme::File(PathBuf::from(p))),
                _ => bail!("unknown parameter scheme '{s}' (uniform, degree_dependent, file:<path>)"),
            },
        }
    }
}

string_serde!(ParamScheme);

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec(pub InitialScheme);

impl fmt::Display for InitialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            InitialScheme::UniformSource => f.write_str("uniform_source"),
            InitialScheme::UniformSeedSet { size } => write!(f, "seed_set:{size}"),
            InitialScheme::Stochastic { mean_seeds } => write!(f, "stochastic:{mean_seeds}"),
        }
    }
}

impl FromStr for InitialSpec {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        let scheme = match s.split_once(':') {
            None if s == "uniform_source" => InitialScheme::UniformSource,
            Some(("seed_set", k)) => InitialScheme::UniformSeedSet {
                size: k.parse().context("seed set size")?,
            },
            Some(("stochastic", m)) => InitialScheme::Stochastic {
                mean_seeds: m.parse().context("mean seed count")?,
            },
            _ => bail!("unknown initial condition '{s}' (uniform_source, seed_set:<k>, stochastic:<mean>)"),
        };
        Ok(Self(scheme))
    }
}

string_serde!(InitialSpec);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementSpec(pub HiddenPlacement);

impl fmt::Display for PlacementSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for PlacementSpec {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(Self(s.parse().map_err(|e| anyhow!("{e}"))?))
    }
}

string_serde!(PlacementSpec);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Learner {
    Slicer,
    Dmprec,
    Ml,
    /// Ladder from one replica up to `count`, perturbing by `sigma` at each rung.
    Replicas {
        count: usize,
        sigma: f64,
    },
}

impl Learner {
    pub fn name(&self) -> &'static str {
        match self {
            Learner::Slicer => "slicer",
            Learner::Dmprec => "dmprec",
            Learner::Ml => "ml",
            Learner::Replicas { .. } => "replicas",
        }
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Learner::Replicas { count, sigma } => write!(f, "replicas:{count}:{sigma}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Learner {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slicer" => Ok(Learner::Slicer),
            "dmprec" => Ok(Learner::Dmprec),
            "ml" => Ok(Learner::Ml),
            _ => {
                let parts: Vec<&str> = s.split(':').collect();
                match parts.as_slice() {
                    ["replicas", r] => Ok(Learner::Replicas {
                        count: r.parse().context("replica count")?,
                        sigma: icdmp::replicas::DEFAULT_PERTURBATION,
                    }),
                    ["replicas", r, sigma] => Ok(Learner::Replicas {
                        count: r.parse().context("replica count")?,
                        sigma: sigma.parse().context("perturbation")?,
                    }),
                    _ => bail!("unknown learner '{s}' (slicer, dmprec, ml, replicas:<R>[:<sigma>])"),
                }
            }
        }
    }
}

string_serde!(Learner);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleSpec {
    None,
    /// Monte Carlo with this many cascades per initial condition.
    MonteCarlo(usize),
}

impl fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleSpec::None => f.write_str("none"),
            OracleSpec::MonteCarlo(n) => write!(f, "mc:{n}"),
        }
    }
}

impl FromStr for OracleSpec {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "none" => Ok(OracleSpec::None),
            Some(("mc", n)) => Ok(OracleSpec::MonteCarlo(n.parse().context("Monte Carlo sample count")?)),
            _ => bail!("unknown oracle '{s}' (none, mc:<samples>)"),
        }
    }
}

string_serde!(OracleSpec);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnSection {
    pub step_constant: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub init: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub patience: usize,
}

impl Default for LearnSection {
    fn default() -> Self {
        let d = LearnConfig::default();
        let init = match d.init {
            Init::Constant(a) => a,
            Init::Values(_) => 0.5,
        };
        Self {
            step_constant: d.step_constant,
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
            init,
            alpha_min: d.alpha_min,
            alpha_max: d.alpha_max,
            patience: d.patience,
        }
    }
}

impl LearnSection {
    pub fn to_config(&self) -> LearnConfig {
        LearnConfig {
            step_constant: self.step_constant,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            init: Init::Constant(self.init),
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            patience: self.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub params: ParamScheme,
    pub horizon: usize,
    /// Number of simulated cascades.
    pub cascades: usize,
    pub initial: InitialSpec,
    /// Fraction of hidden nodes.
    pub xi: f64,
    pub placement: PlacementSpec,
    pub learner: Learner,
    pub oracle: OracleSpec,
    pub seed: u64,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    pub out: PathBuf,
    pub learn: LearnSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology: TopologySpec(Topology::RandomRegular { degree: 3, nodes: 100 }),
            params: ParamScheme::Uniform,
            horizon: 5,
            cascades: 1000,
            initial: InitialSpec(InitialScheme::UniformSource),
            xi: 0.0,
            placement: PlacementSpec(HiddenPlacement::Random),
            learner: Learner::Slicer,
            oracle: OracleSpec::None,
            seed: 1,
            workers: 0,
            out: PathBuf::from("out"),
            learn: LearnSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid config file")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("cannot serialize config")
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            bail!("horizon must be at least 1");
        }
        if !(0.0..1.0).contains(&self.xi) {
            bail!("hidden fraction xi={} must lie in [0, 1)", self.xi);
        }
        if let Learner::Replicas { count, sigma } = self.learner {
            if count == 0 {
                bail!("replica count must be at least 1");
            }
            if !(sigma > 0.0 && sigma.is_finite()) {
                bail!("replica perturbation must be positive, got {sigma}");
            }
        }
        if self.oracle == OracleSpec::MonteCarlo(0) {
            bail!("Monte Carlo oracle needs at least one sample");
        }
        self.learn.to_config().validate()?;
        match self.initial.0 {
            InitialScheme::UniformSeedSet { size: 0 } => bail!("seed sets need at least one node"),
            InitialScheme::Stochastic { mean_seeds } if !(mean_seeds >= 0.0 && mean_seeds.is_finite()) => {
                bail!("mean seed count must be non-negative, got {mean_seeds}")
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn every_variant_round_trips() {
        let c = ExperimentConfig {
            topology: "erdos_renyi:50:3.5".parse().unwrap(),
            params: "file:data/net.edges".parse().unwrap(),
            horizon: 12,
            cascades: 12345,
            initial: "stochastic:10".parse().unwrap(),
            xi: 0.15,
            placement: "high_degree".parse().unwrap(),
            learner: "replicas:3:0.01".parse().unwrap(),
            oracle: "mc:10000".parse().unwrap(),
            seed: u64::MAX,
            workers: 4,
            out: PathBuf::from("/tmp/x y"),
            learn: LearnSection {
                step_constant: 1.0 / 3.0,
                tolerance: 1e-7,
                ..LearnSection::default()
            },
        };
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        for s in ["uniform_source", "seed_set:4"] {
            assert_eq!(s.parse::<InitialSpec>().unwrap().to_string(), s);
        }
        for s in ["slicer", "dmprec", "ml"] {
            assert_eq!(s.parse::<Learner>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn partial_files_use_defaults() {
        let c = ExperimentConfig::from_toml("horizon = 7\n[learn]\nmax_iterations = 10\n").unwrap();
        assert_eq!(c.horizon, 7);
        assert_eq!(c.learn.max_iterations, 10);
        assert_eq!(c.learn.tolerance, 1e-6);
        assert_eq!(c.cascades, ExperimentConfig::default().cascades);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("nonsense = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("learner = \"boosting\"\n").is_err());
        let c = ExperimentConfig {
            xi: 1.0,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            learner: Learner::Replicas { count: 2, sigma: 0.0 },
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            initial: "seed_set:0".parse().unwrap(),
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
