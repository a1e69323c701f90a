//! Run configuration loaded from a JSON document.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use epidetect::srmc::SrmcConfig;
use epidetect::{CostParams, EpidemicParams, ModelVariant, PoolState, ReducedState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A policy entry of the `evaluate` section. Map-based policies come from the
/// `--map` arguments and are selected by `{"kind": "map"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Map,
    ThresholdP { level: f64 },
    ThresholdT { stage: usize },
}

fn default_x0() -> ReducedState {
    ReducedState { s1: 1990, i1: 10, p: 0.1 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub x0: ReducedState,
    pub n_paths: usize,
    pub horizon: usize,
    pub policies: Vec<PolicySpec>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            x0: default_x0(),
            n_paths: 1000,
            horizon: 50,
            policies: vec![
                PolicySpec::Map,
                PolicySpec::ThresholdP { level: 0.8 },
                PolicySpec::ThresholdT { stage: 8 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub x0: ReducedState,
    pub n_paths: usize,
    pub horizon: usize,
    /// Also simulate the full two-pool epidemic.
    pub two_pool: bool,
    /// Initial state of Pool 2 in two-pool mode; defaults to fully susceptible.
    pub pool2: Option<PoolState>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            x0: default_x0(),
            n_paths: 3,
            horizon: 30,
            two_pool: false,
            pool2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default = "default_variant")]
    pub variant: ModelVariant,
    #[serde(default = "EpidemicParams::case_study")]
    pub epidemic: EpidemicParams,
    #[serde(default = "CostParams::case_study")]
    pub costs: CostParams,
    #[serde(default)]
    pub srmc: SrmcConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_variant() -> ModelVariant {
    ModelVariant::Full3d
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<ModelVariant>,
    pub out: Option<PathBuf>,
    pub c_fa: Option<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Applies overrides, fills the solver seed and validates every section.
    pub fn resolve(mut self, o: &Overrides) -> anyhow::Result<Self> {
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(v) = o.variant {
            self.variant = v;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(c_fa) = o.c_fa {
            self.costs.c_fa = c_fa;
        }
        let Some(seed) = self.seed else {
            bail!("no master seed: set \"seed\" in the config or pass --seed");
        };
        self.srmc.master_seed = seed;
        self.epidemic.validate()?;
        self.costs.validate()?;
        self.srmc.validate(self.variant)?;
        let m1 = self.epidemic.pool_sizes[0];
        for (name, x) in [("evaluate.x0", self.evaluate.x0), ("simulate.x0", self.simulate.x0)] {
            ReducedState::new(x.s1, x.i1, x.p, m1).with_context(|| name.to_string())?;
        }
        if self.evaluate.n_paths == 0 || self.evaluate.horizon == 0 {
            bail!("evaluate.n_paths and evaluate.horizon must be positive");
        }
        if self.simulate.horizon == 0 {
            bail!("simulate.horizon must be positive");
        }
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved config carries a seed")
    }

    /// SHA-256 of the resolved configuration, excluding the output location.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputConfig::default();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
