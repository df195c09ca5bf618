//! Experiment configuration files: TOML with one `key = value` per line and
//! bracketed sections.
//!
//! ```toml
//! experiment = "triangles_scenario"
//! seeds = [0, 1, 2]
//!
//! [env]
//! preset = "triangles"
//! horizon = 5
//!
//! [train]
//! batches = 100
//! optimizer = "adam"
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{EnvParams, InitialCondition, Penalty};
use crate::error::{Error, Result};
use crate::graph::{generate, read_edge_list, Graph, GraphKind, GraphSpec};
use crate::policy::ObservationMode;
use crate::rl::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GridEpidemic,
    TrianglesScenario,
    LwcSweep,
    Truncation,
    DpCertify,
    GradientCheck,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::GridEpidemic => "grid_epidemic",
            ExperimentKind::TrianglesScenario => "triangles_scenario",
            ExperimentKind::LwcSweep => "lwc_sweep",
            ExperimentKind::Truncation => "truncation",
            ExperimentKind::DpCertify => "dp_certify",
            ExperimentKind::GradientCheck => "gradient_check",
        }
    }
}

/// A generated family or an edge-list file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSource {
    File { file: PathBuf },
    Spec(GraphSpec),
}

/// Named parameter set with optional per-field overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    /// `grid` or `triangles`.
    pub preset: Option<String>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub f_iso: Option<f64>,
    pub c_i: Option<f64>,
    pub c_v: Option<f64>,
    pub c_q: Option<f64>,
    pub c_global: Option<f64>,
    pub penalty: Option<Penalty>,
    pub horizon: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub width: usize,
    pub sigma: f64,
    pub obs_mode: ObservationMode,
    /// Observation mode of the ablation arm of the grid study.
    pub ablation_obs_mode: ObservationMode,
    /// Fixed message-pass count of the local baseline arm of the triangles
    /// study.
    pub baseline_passes: usize,
    /// Initial offset of every NoOp logit; zero keeps the uniform start.
    pub noop_prior: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            width: crate::mpnn::DEFAULT_WIDTH,
            sigma: 3.0,
            obs_mode: ObservationMode::Local6,
            ablation_obs_mode: ObservationMode::OwnState,
            baseline_passes: 0,
            noop_prior: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
    /// Draws per scenario for the separation statistic.
    pub separation_draws: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            episodes: 64,
            separation_draws: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpSection {
    /// `deterministic6` or `radius_k`.
    pub policy_class: String,
    pub radius: usize,
    pub mc_policies: usize,
    pub mc_episodes: usize,
    /// Start of the Monte Carlo comparison, as a state string.
    pub mc_start: Option<String>,
    pub mc_beta: f64,
    pub mc_gamma: f64,
}

impl Default for DpSection {
    fn default() -> Self {
        DpSection {
            policy_class: "deterministic6".into(),
            radius: 1,
            mc_policies: 5,
            mc_episodes: 100_000,
            mc_start: None,
            mc_beta: 0.5,
            mc_gamma: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationSection {
    pub k_list: Vec<usize>,
    /// Initial per-node law in `S, I, R, V` order.
    pub marginal: [f64; 4],
}

impl Default for TruncationSection {
    fn default() -> Self {
        TruncationSection {
            k_list: vec![0, 1, 2, 3],
            marginal: [0.5, 0.3, 0.2, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LwcSection {
    pub n_list: Vec<usize>,
    pub mean_degree: f64,
    pub radius: usize,
    pub max_degree: usize,
}

impl Default for LwcSection {
    fn default() -> Self {
        LwcSection {
            n_list: vec![250, 1000, 4000, 16000],
            mean_degree: 3.0,
            radius: 1,
            max_degree: 15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientSection {
    pub episodes: usize,
    pub quadrature_order: usize,
    pub step: f64,
    pub start: String,
}

impl Default for GradientSection {
    fn default() -> Self {
        GradientSection {
            episodes: 100_000,
            quadrature_order: 16,
            step: 1e-5,
            start: "ISS".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub graph: Option<GraphSource>,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub init: Option<InitialCondition>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub dp: DpSection,
    #[serde(default)]
    pub truncation: TruncationSection,
    #[serde(default)]
    pub lwc: LwcSection,
    #[serde(default)]
    pub gradient: GradientSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            experiment,
            seeds,
            out_dir: None,
            graph: None,
            env: EnvSection::default(),
            init: None,
            train: TrainConfig::default(),
            policy: PolicySection::default(),
            eval: EvalSection::default(),
            dp: DpSection::default(),
            truncation: TruncationSection::default(),
            lwc: LwcSection::default(),
            gradient: GradientSection::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if let Some(GraphSource::File { file }) = &self.graph {
            let p = self.resolve(file);
            if !p.is_file() {
                return Err(Error::Config(format!("graph file {} does not exist", p.display())));
            }
        }
        self.env_params()?.validate()?;
        self.train.validate()?;
        if self.policy.width == 0 {
            return Err(Error::Config("policy width must be positive".into()));
        }
        if !(self.policy.sigma > 0.0 && self.policy.sigma.is_finite()) {
            return Err(Error::Config("policy sigma must be positive".into()));
        }
        if self.eval.episodes == 0 {
            return Err(Error::Config("eval episodes must be positive".into()));
        }
        match self.dp.policy_class.as_str() {
            "deterministic6" | "radius_k" => {}
            other => return Err(Error::Config(format!("unknown policy class {other:?}"))),
        }
        if self.truncation.k_list.is_empty() {
            return Err(Error::Config("truncation k_list is empty".into()));
        }
        if self.lwc.n_list.len() < 2 {
            return Err(Error::Config("lwc n_list needs at least two sizes".into()));
        }
        if self.gradient.episodes < 2 || self.gradient.quadrature_order == 0 || !(self.gradient.step > 0.0) {
            return Err(Error::Config("gradient section needs episodes >= 2, a quadrature order and a positive step".into()));
        }
        Ok(())
    }

    /// Preset named in `[env]`, else the experiment's own setup, with
    /// overrides applied.
    pub fn env_params(&self) -> Result<EnvParams> {
        let preset = match self.env.preset.as_deref() {
            Some("grid") => EnvParams::grid_experiment(),
            Some("triangles") => EnvParams::triangles_experiment(),
            Some(other) => return Err(Error::Config(format!("unknown env preset {other:?}"))),
            None => match self.experiment {
                ExperimentKind::TrianglesScenario | ExperimentKind::DpCertify => EnvParams::triangles_experiment(),
                ExperimentKind::GradientCheck => EnvParams {
                    horizon: 1,
                    c_q: 0.0,
                    ..EnvParams::triangles_experiment()
                },
                ExperimentKind::Truncation => EnvParams {
                    beta: 0.1,
                    gamma: 0.0,
                    f_iso: 0.0,
                    c_i: 1.0,
                    c_v: 0.3,
                    c_q: 1.0,
                    c_global: 0.0,
                    penalty: Penalty::None,
                    horizon: 3,
                },
                _ => EnvParams::grid_experiment(),
            },
        };
        let e = &self.env;
        Ok(EnvParams {
            beta: e.beta.unwrap_or(preset.beta),
            gamma: e.gamma.unwrap_or(preset.gamma),
            f_iso: e.f_iso.unwrap_or(preset.f_iso),
            c_i: e.c_i.unwrap_or(preset.c_i),
            c_v: e.c_v.unwrap_or(preset.c_v),
            c_q: e.c_q.unwrap_or(preset.c_q),
            c_global: e.c_global.unwrap_or(preset.c_global),
            penalty: e.penalty.unwrap_or(preset.penalty),
            horizon: e.horizon.unwrap_or(preset.horizon),
        })
    }

    fn default_graph(&self) -> GraphSpec {
        let kind = match self.experiment {
            ExperimentKind::GridEpidemic | ExperimentKind::LwcSweep => GraphKind::Grid { width: 20, height: 20 },
            ExperimentKind::TrianglesScenario => GraphKind::Cliques { count: 20, size: 3 },
            ExperimentKind::DpCertify => GraphKind::Cliques { count: 2, size: 3 },
            ExperimentKind::GradientCheck => GraphKind::Cliques { count: 1, size: 3 },
            ExperimentKind::Truncation => GraphKind::Cycle { n: 6 },
        };
        GraphSpec::new(kind, 0)
    }

    /// The configured graph; generated families take `seed` unless the
    /// config pins one.
    pub fn build_graph(&self, seed: u64) -> Result<Graph> {
        match &self.graph {
            Some(GraphSource::File { file }) => Ok(read_edge_list(&self.resolve(file))?.0),
            Some(GraphSource::Spec(spec)) => generate(&GraphSpec {
                kind: spec.kind.clone(),
                seed: if spec.seed != 0 { spec.seed } else { seed },
            }),
            None => generate(&GraphSpec {
                seed,
                ..self.default_graph()
            }),
        }
    }

    pub fn initial_condition(&self) -> InitialCondition {
        if let Some(init) = &self.init {
            return init.clone();
        }
        match self.experiment {
            ExperimentKind::TrianglesScenario => InitialCondition::triangles(),
            ExperimentKind::GradientCheck => InitialCondition::Fixed {
                states: self.gradient.start.clone(),
            },
            ExperimentKind::DpCertify => InitialCondition::Fixed {
                states: self.dp.mc_start.clone().unwrap_or_else(|| "ISSISS".into()),
            },
            _ => InitialCondition::RandomInfected { count: 10 },
        }
    }

    /// Output directory: the CLI flag wins over the config entry.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        match (flag, &self.out_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => self.resolve(p),
            (None, None) => PathBuf::from("runs").join(self.experiment.as_str()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_toml("experiment = \"grid_epidemic\"\nseeds = [1, 2]\n").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.env_params().unwrap(), EnvParams::grid_experiment());
        assert_eq!(cfg.build_graph(0).unwrap().node_count(), 400);
    }

    #[test]
    fn empty_seeds_rejected() {
        let cfg = ExperimentConfig::from_toml("experiment = \"grid_epidemic\"\nseeds = []\n").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn repeated_seeds_rejected() {
        let cfg = ExperimentConfig::new(ExperimentKind::LwcSweep, vec![3, 3]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("experiment = \"grid_epidemic\"\nseeds = [1]\n[train]\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"nope\"\nseeds = [1]\n").is_err());
    }

    #[test]
    fn sections_and_overrides() {
        let text = r#"
experiment = "triangles_scenario"
seeds = [0, 1]

[graph]
kind = "cliques"
count = 6
size = 3

[env]
horizon = 3
penalty = { cliques_with_two_infected = 0.5 }

[init]
kind = "clique_scenarios"
infected = 2
concentrated_cliques = 1

[train]
batches = 4
optimizer = "adam"
depth = { fixed = 2 }

[policy]
obs_mode = "own_state"
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        cfg.validate().unwrap();
        let p = cfg.env_params().unwrap();
        assert_eq!(p.horizon, 3);
        assert_eq!(p.c_v, 50.0);
        assert_eq!(p.penalty, Penalty::CliquesWithTwoInfected(0.5));
        assert_eq!(cfg.build_graph(0).unwrap().node_count(), 18);
        assert_eq!(cfg.train.batches, 4);
        assert_eq!(cfg.train.depth, crate::rl::DepthSchedule::Fixed(2));
        assert_eq!(cfg.policy.obs_mode, ObservationMode::OwnState);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back.train, cfg.train);
        assert_eq!(back.graph, cfg.graph);
    }

    #[test]
    fn missing_graph_file_rejected() {
        let cfg = ExperimentConfig::from_toml("experiment = \"grid_epidemic\"\nseeds = [1]\n[graph]\nfile = \"/nonexistent/g.txt\"\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bad_env_rejected() {
        let cfg = ExperimentConfig::from_toml("experiment = \"grid_epidemic\"\nseeds = [1]\n[env]\nbeta = 1.5\n").unwrap();
        assert!(cfg.validate().is_err());
    }
}
