//! Experiment configuration (TOML).
//!
//! ```toml
//! kind = "verify"            # simulate | lln | cov | sde | asympt | verify
//! check = "poisson-corner"   # verify only
//! seed = 1                   # mandatory for stochastic runs
//! workers = 0                # 0 = all cores
//! replicas = 100000
//! out = "out"
//!
//! [model]
//! levels = 1
//! q = 0.5
//! gamma = 2.0
//!
//! [grid]
//! taus = [0.5, 1.0, 2.0]
//!
//! [tolerance]
//! z = 4.0
//! ```
//!
//! Unknown keys are rejected. Tolerance keys are validated against the names a
//! pipeline declares.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::largetime::ZetaMethod;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Simulate,
    Lln,
    Cov,
    Sde,
    Asympt,
    Verify,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Lln => "lln",
            ExperimentKind::Cov => "cov",
            ExperimentKind::Sde => "sde",
            ExperimentKind::Asympt => "asympt",
            ExperimentKind::Verify => "verify",
        }
    }
}

/// The shipped acceptance checks, one per criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckName {
    PoissonCorner,
    MomentCrosscheck,
    DynamicsEquivalence,
    LlnTriple,
    LlnOde,
    ScaledConvergence,
    FluctuationCov,
    Orthopoly,
    ZetaCov,
    Propagator,
    TwoTime,
    LimitCov,
    LogLaw,
    EwMatching,
    PropagatorAsymptotics,
    Positivity,
}

impl CheckName {
    pub const ALL: [CheckName; 16] = [
        CheckName::PoissonCorner,
        CheckName::MomentCrosscheck,
        CheckName::DynamicsEquivalence,
        CheckName::LlnTriple,
        CheckName::LlnOde,
        CheckName::ScaledConvergence,
        CheckName::FluctuationCov,
        CheckName::Orthopoly,
        CheckName::ZetaCov,
        CheckName::Propagator,
        CheckName::TwoTime,
        CheckName::LimitCov,
        CheckName::LogLaw,
        CheckName::EwMatching,
        CheckName::PropagatorAsymptotics,
        CheckName::Positivity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckName::PoissonCorner => "poisson-corner",
            CheckName::MomentCrosscheck => "moment-crosscheck",
            CheckName::DynamicsEquivalence => "dynamics-equivalence",
            CheckName::LlnTriple => "lln-triple",
            CheckName::LlnOde => "lln-ode",
            CheckName::ScaledConvergence => "scaled-convergence",
            CheckName::FluctuationCov => "fluctuation-cov",
            CheckName::Orthopoly => "orthopoly",
            CheckName::ZetaCov => "zeta-cov",
            CheckName::Propagator => "propagator",
            CheckName::TwoTime => "two-time",
            CheckName::LimitCov => "limit-cov",
            CheckName::LogLaw => "log-law",
            CheckName::EwMatching => "ew-matching",
            CheckName::PropagatorAsymptotics => "propagator-asymptotics",
            CheckName::Positivity => "positivity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == s).ok_or_else(|| Error::Config(format!("unknown check '{s}'")))
    }

    /// Whether the check draws random numbers (and so needs a seed).
    pub fn stochastic(self) -> bool {
        matches!(
            self,
            CheckName::PoissonCorner
                | CheckName::MomentCrosscheck
                | CheckName::DynamicsEquivalence
                | CheckName::ScaledConvergence
                | CheckName::FluctuationCov
                | CheckName::TwoTime
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicName {
    Pushblock,
    Rsk,
    Rightpush,
    AlphaPushblock,
    AlphaRsk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdeSystem {
    /// Fluctuation SDE of the ε-scaled push-block heights.
    Xi,
    /// Large-time ζ system.
    Zeta,
}

/// Model parameters; every field is optional and the pipeline fills in its own default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Number of levels N.
    pub levels: Option<usize>,
    /// q ∈ (0,1); exclusive with `eps` (q = e^{−ε}).
    pub q: Option<f64>,
    pub eps: Option<f64>,
    /// Plancherel parameter (continuous time).
    pub gamma: Option<f64>,
    /// Macroscopic time τ (or T for the ζ system).
    pub tau: Option<f64>,
    /// Start time T0 of the ζ system.
    pub t0: Option<f64>,
    /// Level speeds; default all ones.
    pub a: Option<Vec<f64>>,
    /// Alpha history; selects the alpha specialization when present.
    pub alpha: Option<Vec<f64>>,
    pub dynamic: Option<DynamicName>,
    pub system: Option<SdeSystem>,
    /// Euler–Maruyama step.
    pub dt: Option<f64>,
    pub method: Option<ZetaMethod>,
    /// (d, a) of the first bulk point and T for the propagator asymptotics.
    pub d: Option<f64>,
    pub slope: Option<f64>,
    pub time: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub taus: Option<Vec<f64>>,
    pub eps: Option<Vec<f64>>,
    /// Sample times of a trajectory or SDE ensemble.
    pub times: Option<Vec<f64>>,
    /// Times at which simulated heights are compared to the LLN profile.
    pub compare_times: Option<Vec<f64>>,
    /// (d, a, c, b) bulk-point pairs.
    pub points: Option<Vec<[f64; 4]>>,
    /// Values of σ₁ and σ₂ (tensor grid).
    pub sigmas: Option<Vec<f64>>,
    /// System sizes N.
    pub sizes: Option<Vec<usize>>,
    /// Ω-gaps for the log law.
    pub gaps: Option<Vec<f64>>,
    pub max_level: Option<usize>,
    pub step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads, 0 = all cores. Results do not depend on it.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    /// Named threshold overrides (see each pipeline's declared keys).
    #[serde(default)]
    pub tolerance: BTreeMap<String, f64>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            check: None,
            seed: None,
            workers: 0,
            replicas: None,
            out: default_out(),
            model: ModelSection::default(),
            grid: GridSection::default(),
            tolerance: BTreeMap::new(),
        }
    }

    pub fn verify(check: CheckName, seed: u64) -> Self {
        ExperimentConfig { check: Some(check), seed: Some(seed), ..Self::new(ExperimentKind::Verify) }
    }

    /// Schema-checked parse without the semantic checks, for callers that
    /// apply overrides before validating.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn stochastic(&self) -> bool {
        match self.kind {
            ExperimentKind::Simulate | ExperimentKind::Sde => true,
            ExperimentKind::Cov => self.replicas.unwrap_or(0) > 0,
            ExperimentKind::Verify => self.check.is_some_and(|c| c.stochastic()),
            ExperimentKind::Lln | ExperimentKind::Asympt => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.check) {
            (ExperimentKind::Verify, None) => return Err(Error::Config("verify needs a 'check'".into())),
            (k, Some(_)) if k != ExperimentKind::Verify => {
                return Err(Error::Config(format!("'check' is only valid for verify, not {}", k.name())))
            }
            _ => {}
        }
        if self.stochastic() && self.seed.is_none() {
            return Err(Error::Config("a seed is mandatory for stochastic runs".into()));
        }
        if self.model.q.is_some() && self.model.eps.is_some() {
            return Err(Error::Config("give either q or eps, not both".into()));
        }
        if let Some(q) = self.model.q {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Config(format!("q must lie in (0,1), got {q}")));
            }
        }
        if self.replicas == Some(1) {
            return Err(Error::Config("replicas must be at least 2 (or 0 to skip sampling)".into()));
        }
        for (k, v) in &self.tolerance {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Config(format!("tolerance '{k}' must be finite and non-negative")));
            }
        }
        match self.check {
            Some(c) => super::verify::validate_tolerances(self, c),
            None => super::pipelines::validate_tolerances(self),
        }
    }

    /// Run identifier, also the artifact subfolder name.
    pub fn run_id(&self) -> String {
        let tag = match self.check {
            Some(c) => format!("{}-{}", self.kind.name(), c.name()),
            None => self.kind.name().to_string(),
        };
        format!("{tag}-{:016x}", self.seed.unwrap_or(0))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join(self.run_id())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_validate() {
        let c = ExperimentConfig::from_toml(
            "kind = \"verify\"\ncheck = \"poisson-corner\"\nseed = 7\nreplicas = 1000\n[model]\nq = 0.5\n[tolerance]\nz = 3.5\n",
        )
        .unwrap();
        assert_eq!(c.check, Some(CheckName::PoissonCorner));
        assert_eq!(c.run_id(), "verify-poisson-corner-0000000000000007");
        assert_eq!(c.out, PathBuf::from("out"));
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn schema_violations() {
        let bad = [
            "kind = \"verify\"\nseed = 1\n",
            "kind = \"verify\"\ncheck = \"poisson-corner\"\n",
            "kind = \"lln\"\ncheck = \"lln-triple\"\n",
            "kind = \"lln\"\nbogus = 1\n",
            "kind = \"lln\"\n[model]\nq = 0.5\neps = 0.1\n",
            "kind = \"simulate\"\n",
            "kind = \"verify\"\ncheck = \"no-such-check\"\nseed = 1\n",
            "kind = \"lln\"\n[tolerance]\nabs = -1.0\n",
        ];
        for b in bad {
            assert!(ExperimentConfig::from_toml(b).is_err(), "{b}");
        }
        assert!(ExperimentConfig::from_toml("kind = \"lln\"\n").is_ok());
        assert!(ExperimentConfig::from_toml("kind = \"verify\"\ncheck = \"lln-triple\"\n").is_ok());
    }

    #[test]
    fn check_names_round_trip() {
        for c in CheckName::ALL {
            assert_eq!(CheckName::parse(c.name()).unwrap(), c);
        }
    }
}
