//! Run configuration: a TOML file, then environment/flag overrides.

use std::path::{Path, PathBuf};

use anderson_core::bifurcation::{RatioAxis, ShapeRatios, ToyModelParams, TOY_SPACING};
use anderson_core::experiments::{LOCALIZATION_THRESHOLD, STUDY_MEAN};
use anderson_core::operator::BoundaryCondition;
use anderson_core::potential::{DistributionSpec, GridSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub trials: usize,
    /// Worker threads; `0` uses every available core.
    pub threads: usize,
    pub out: PathBuf,
    pub potential: PotentialSection,
    pub operator: OperatorSection,
    pub solve: SolveSection,
    pub experiment: ExperimentSection,
    pub study: StudySection,
    pub fk: FkSection,
    pub toy: ToySection,
    pub sweep: SweepSection,
    pub scaling: ScalingSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 200,
            threads: 0,
            out: PathBuf::from("out"),
            potential: PotentialSection::default(),
            operator: OperatorSection::default(),
            solve: SolveSection::default(),
            experiment: ExperimentSection::default(),
            study: StudySection::default(),
            fk: FkSection::default(),
            toy: ToySection::default(),
            sweep: SweepSection::default(),
            scaling: ScalingSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSection {
    pub dim: usize,
    pub cells: usize,
    /// Mesh intervals per cell per axis; defaults to 8 in 1D and 4 in 2D.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes_per_cell: Option<usize>,
    pub distribution: String,
    pub params: Vec<f64>,
    /// Potential in the plain-text grid format written by `potential`;
    /// replaces sampling when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            dim: 1,
            cells: 50,
            nodes_per_cell: None,
            distribution: "bernoulli".into(),
            params: vec![0.5],
            file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorSection {
    pub k: f64,
    /// `dirichlet`, `neumann`, `robin` or `periodic`.
    pub bc: String,
    /// Robin coefficient.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

impl Default for OperatorSection {
    fn default() -> Self {
        Self {
            k: 1e4,
            bc: "neumann".into(),
            h: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub eigenpairs: usize,
    pub tol: f64,
    pub landscape_tol: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            eigenpairs: 4,
            tol: 1e-8,
            landscape_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub threshold: f64,
    pub eigen_index: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            threshold: LOCALIZATION_THRESHOLD,
            eigen_index: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub families: Vec<String>,
    pub stds: Vec<f64>,
    pub hs: Vec<f64>,
    pub dims: Vec<usize>,
    pub k: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            families: ["bernoulli", "normal", "gamma", "uniform"].map(String::from).to_vec(),
            stds: vec![STUDY_MEAN, STUDY_MEAN / 3f64.sqrt(), STUDY_MEAN / 3.0],
            hs: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3],
            dims: vec![1],
            k: 1e4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FkSection {
    /// Probe points in the unit interval or square.
    pub probes: Vec<Vec<f64>>,
    pub paths: usize,
    pub dt: f64,
    pub dt_min: f64,
    pub t_max: f64,
}

impl Default for FkSection {
    fn default() -> Self {
        Self {
            probes: vec![vec![0.25], vec![0.5], vec![0.75]],
            paths: 10_000,
            dt: 1e-4,
            dt_min: 1e-8,
            t_max: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySection {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
}

impl Default for ToySection {
    fn default() -> Self {
        let p = ToyModelParams::reference();
        Self {
            l1: p.l1,
            l2: p.l2,
            l3: p.l3,
            l4: p.l4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub k_min: f64,
    pub k_max: f64,
    pub points: usize,
    pub spacing: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            k_min: 1e2,
            k_max: 1e6,
            points: 60,
            spacing: TOY_SPACING,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    pub axes: Vec<String>,
    pub points: usize,
    /// Base ratios `P1, P2, P3`; the swept axis is resampled.
    pub base: [f64; 3],
}

impl Default for ScalingSection {
    fn default() -> Self {
        let r = ShapeRatios::reference();
        Self {
            axes: vec!["p1".into(), "p2".into(), "p3".into()],
            points: 30,
            base: [r.p1, r.p2, r.p3],
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)?
            }
            None => Self::default(),
        };
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(t) = overrides.trials {
            cfg.trials = t;
        }
        if let Some(t) = overrides.threads {
            cfg.threads = t;
        }
        if let Some(o) = &overrides.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))
    }

    /// The resolved configuration, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved configuration, without the output directory
    /// and thread count (neither affects results).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.threads = 0;
        Sha256::digest(c.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn grid(&self) -> Result<GridSpec, ConfigError> {
        let p = &self.potential;
        let g = match p.nodes_per_cell {
            Some(r) => GridSpec::new(p.dim, p.cells, r),
            None => GridSpec::with_default_resolution(p.dim, p.cells),
        };
        g.map_err(|e| ConfigError(format!("[potential]: {e}")))
    }

    pub fn distribution(&self) -> Result<DistributionSpec, ConfigError> {
        let p = &self.potential;
        DistributionSpec::from_name(&p.distribution, &p.params).map_err(|e| ConfigError(format!("[potential]: {e}")))
    }

    pub fn boundary(&self) -> Result<BoundaryCondition, ConfigError> {
        let o = &self.operator;
        let bc = match (o.bc.as_str(), o.h) {
            ("dirichlet", None) => BoundaryCondition::Dirichlet,
            ("neumann", None) => BoundaryCondition::Neumann,
            ("periodic", None) => BoundaryCondition::Periodic,
            ("robin", Some(h)) => BoundaryCondition::Robin { h },
            ("robin", None) => return Err(ConfigError("[operator]: robin needs h".into())),
            (other, Some(_)) if ["dirichlet", "neumann", "periodic"].contains(&other) => {
                return Err(ConfigError(format!("[operator]: h is only used with robin, not {other}")))
            }
            (other, _) => return Err(ConfigError(format!("[operator]: unknown boundary condition {other:?}"))),
        };
        bc.validate().map_err(|e| ConfigError(format!("[operator]: {e}")))?;
        Ok(bc)
    }

    pub fn toy(&self) -> Result<ToyModelParams, ConfigError> {
        let t = &self.toy;
        ToyModelParams::new(t.l1, t.l2, t.l3, t.l4).map_err(|e| ConfigError(format!("[toy]: {e}")))
    }

    pub fn axes(&self) -> Result<Vec<RatioAxis>, ConfigError> {
        self.scaling
            .axes
            .iter()
            .map(|a| RatioAxis::from_name(a).map_err(|e| ConfigError(format!("[scaling]: {e}"))))
            .collect()
    }

    pub fn base_ratios(&self) -> Result<ShapeRatios, ConfigError> {
        let [a, b, c] = self.scaling.base;
        ShapeRatios::new(a, b, c).map_err(|e| ConfigError(format!("[scaling]: {e}")))
    }
}
