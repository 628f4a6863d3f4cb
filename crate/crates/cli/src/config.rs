//! Experiment configuration: a TOML file, optional `--set` overrides, and the
//! typed view used by the commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use sparse_mfc::degree::DegreeDistribution;
use sparse_mfc::graphs::{load_edge_list, sample_chung_lu_from, Graph};
use sparse_mfc::learn::TrainConfig;
use sparse_mfc::meanfield::{LimitModel, PolicyEnsemble, StepMode};
use sparse_mfc::problems::{
    color_problem, rumor_problem, sir_problem, sis_problem, ColorParams, EpidemicParams,
    ProblemSpec, RumorParams,
};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SPARSEMFC_OUT";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output: Option<PathBuf>,
    #[serde(default = "default_k_star")]
    pub k_star: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub graph: Option<GraphConfig>,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub limit: LimitConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub compare: CompareSection,
}

fn default_k_star() -> u32 {
    5
}

fn default_trials() -> usize {
    20
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum GraphSource {
    Sample,
    File,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub source: GraphSource,
    /// Zeta exponent for sampled graphs.
    pub gamma: Option<f64>,
    /// Explicit degree law for sampled graphs, keyed by degree.
    pub pmf: Option<BTreeMap<String, f64>>,
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_problem")]
    pub name: String,
    pub horizon: Option<usize>,
    pub rho_i: Option<f64>,
    pub rho_r: Option<f64>,
    pub c_p: Option<f64>,
    pub c_i: Option<f64>,
    pub mu0_i: Option<f64>,
    pub rho_d: Option<f64>,
    pub c_m: Option<f64>,
    pub c_d: Option<f64>,
    pub c_nu: Option<f64>,
    pub nu: Option<Vec<f64>>,
    pub mu0: Option<Vec<f64>>,
    pub rho_a: Option<f64>,
    pub c_s: Option<f64>,
    pub r_s: Option<f64>,
    pub mu0_a: Option<f64>,
}

fn default_problem() -> String {
    "sis".into()
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            name: default_problem(),
            horizon: None,
            rho_i: None,
            rho_r: None,
            c_p: None,
            c_i: None,
            mu0_i: None,
            rho_d: None,
            c_m: None,
            c_d: None,
            c_nu: None,
            nu: None,
            mu0: None,
            rho_a: None,
            c_s: None,
            r_s: None,
            mu0_a: None,
        }
    }
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum LimitLaw {
    /// The empirical degree law of the configured graph.
    Graph,
    Zeta,
    Explicit,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Exact,
    Sampled,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    pub law: Option<LimitLaw>,
    pub gamma: Option<f64>,
    pub pmf: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub infinity_degree: Option<u32>,
}

fn default_samples() -> usize {
    1000
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            law: None,
            gamma: None,
            pmf: None,
            mode: ModeName::Exact,
            samples: default_samples(),
            infinity_degree: None,
        }
    }
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Uniform,
    /// One `states × actions` matrix shared by every class.
    Constant,
    /// One matrix per class row.
    PerClass,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub kind: PolicyKind,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub classes: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Lwmfc,
    Lwmfmarl,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub resume: bool,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    pub iterations: Option<usize>,
    pub gamma: Option<f64>,
    pub gae_lambda: Option<f64>,
    pub train_batch: Option<usize>,
    pub minibatch: Option<usize>,
    pub epochs_per_batch: Option<usize>,
    pub clip: Option<f64>,
    pub kl_coeff: Option<f64>,
    pub kl_target: Option<f64>,
    pub learning_rate: Option<f64>,
    pub vf_coeff: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub episode_len: Option<usize>,
    pub time_feature: Option<bool>,
    pub init_log_std: Option<f64>,
}

fn default_checkpoint_every() -> usize {
    10
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Lwmfc,
            resume: false,
            checkpoint_every: default_checkpoint_every(),
            iterations: None,
            gamma: None,
            gae_lambda: None,
            train_batch: None,
            minibatch: None,
            epochs_per_batch: None,
            clip: None,
            kl_coeff: None,
            kl_target: None,
            learning_rate: None,
            vf_coeff: None,
            hidden: None,
            episode_len: None,
            time_feature: None,
            init_log_std: None,
        }
    }
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum EvalTargetName {
    Limiting,
    Graph,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    /// Defaults to `checkpoint.txt` in the output directory.
    pub checkpoint: Option<PathBuf>,
    #[serde(default = "default_targets")]
    pub targets: Vec<EvalTargetName>,
    /// Also evaluate the uniform policy.
    #[serde(default = "default_true")]
    pub baseline: bool,
}

fn default_targets() -> Vec<EvalTargetName> {
    vec![EvalTargetName::Limiting]
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            targets: default_targets(),
            baseline: true,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default = "default_true")]
    pub extensive: bool,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { extensive: true }
    }
}

/// A parsed configuration with its provenance.
#[derive(Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// SHA-256 of the merged configuration, hex encoded.
    pub hash: String,
    /// Directory that relative input paths are resolved against.
    pub base_dir: PathBuf,
}

/// Parses `key=value` with `value` read as a TOML value, falling back to a
/// bare string.
fn parse_override(s: &str) -> Result<(Vec<String>, toml::Value), CliError> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set {s:?}: expected key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("--set {s:?}: empty key segment")));
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((path, parsed))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set: `{p}` is not a section")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads the file, applies overrides and deserializes.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for o in overrides {
        let (key, value) = parse_override(o)?;
        apply_override(&mut table, &key, value)?;
    }
    let canonical = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
    let hash = hex(&Sha256::digest(canonical.as_bytes()));
    let config: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, hash, base_dir })
}

fn cfg_err(context: &str) -> impl FnOnce(sparse_mfc::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{context}: {e}"))
}

fn pmf_from_map(map: &BTreeMap<String, f64>, context: &str) -> Result<DegreeDistribution, CliError> {
    let mut pmf = BTreeMap::new();
    for (k, &v) in map {
        let degree: u32 = k
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{context}: degree key {k:?} is not an integer")))?;
        pmf.insert(degree, v);
    }
    DegreeDistribution::explicit(&pmf).map_err(cfg_err(context))
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Output directory: `--out`, then the config's `output`, then the
    /// environment variable, then the working directory.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.config.output.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let c = &self.config.problem;
        let used: &[(&str, bool)] = &[
            ("rho_i", c.rho_i.is_some()),
            ("rho_r", c.rho_r.is_some()),
            ("c_p", c.c_p.is_some()),
            ("c_i", c.c_i.is_some()),
            ("mu0_i", c.mu0_i.is_some()),
            ("rho_d", c.rho_d.is_some()),
            ("c_m", c.c_m.is_some()),
            ("c_d", c.c_d.is_some()),
            ("c_nu", c.c_nu.is_some()),
            ("nu", c.nu.is_some()),
            ("mu0", c.mu0.is_some()),
            ("rho_a", c.rho_a.is_some()),
            ("c_s", c.c_s.is_some()),
            ("r_s", c.r_s.is_some()),
            ("mu0_a", c.mu0_a.is_some()),
        ];
        let allowed: &[&str] = match c.name.as_str() {
            "sis" | "sir" => &["rho_i", "rho_r", "c_p", "c_i", "mu0_i"],
            "color" => &["rho_d", "c_m", "c_d", "c_nu", "nu", "mu0"],
            "rumor" => &["rho_a", "c_s", "r_s", "mu0_a"],
            other => return Err(CliError::Config(format!("problem.name: unknown problem {other:?}"))),
        };
        if let Some((bad, _)) = used.iter().find(|(k, set)| *set && !allowed.contains(k)) {
            return Err(CliError::Config(format!(
                "problem.{bad} does not apply to problem {:?}",
                c.name
            )));
        }
        let built = match c.name.as_str() {
            "sis" | "sir" => {
                let mut p = if c.name == "sis" {
                    EpidemicParams::sis_defaults()
                } else {
                    EpidemicParams::sir_defaults()
                };
                p.rho_i = c.rho_i.unwrap_or(p.rho_i);
                p.rho_r = c.rho_r.unwrap_or(p.rho_r);
                p.c_p = c.c_p.unwrap_or(p.c_p);
                p.c_i = c.c_i.unwrap_or(p.c_i);
                p.mu0_i = c.mu0_i.unwrap_or(p.mu0_i);
                p.horizon = c.horizon.unwrap_or(p.horizon);
                if c.name == "sis" {
                    sis_problem(p)
                } else {
                    sir_problem(p)
                }
            }
            "color" => {
                let mut p = ColorParams::default();
                p.rho_d = c.rho_d.unwrap_or(p.rho_d);
                p.c_m = c.c_m.unwrap_or(p.c_m);
                p.c_d = c.c_d.unwrap_or(p.c_d);
                p.c_nu = c.c_nu.unwrap_or(p.c_nu);
                p.nu = c.nu.clone().unwrap_or(p.nu);
                p.mu0 = c.mu0.clone().unwrap_or(p.mu0);
                p.horizon = c.horizon.unwrap_or(p.horizon);
                color_problem(p)
            }
            _ => {
                let mut p = RumorParams::default();
                p.rho_a = c.rho_a.unwrap_or(p.rho_a);
                p.c_s = c.c_s.unwrap_or(p.c_s);
                p.r_s = c.r_s.unwrap_or(p.r_s);
                p.mu0_a = c.mu0_a.unwrap_or(p.mu0_a);
                p.horizon = c.horizon.unwrap_or(p.horizon);
                rumor_problem(p)
            }
        };
        built.map_err(cfg_err("problem"))
    }

    /// The configured graph; `None` when no `[graph]` section is present.
    pub fn graph(&self) -> Result<Option<Graph>, CliError> {
        let Some(g) = &self.config.graph else {
            return Ok(None);
        };
        match g.source {
            GraphSource::Sample => {
                let n = g
                    .n
                    .ok_or_else(|| CliError::Config("graph.n is required for sampled graphs".into()))?;
                if n == 0 {
                    return Err(CliError::Config("graph.n must be positive".into()));
                }
                let dist = match (&g.gamma, &g.pmf) {
                    (Some(_), Some(_)) => {
                        return Err(CliError::Config("graph: give either gamma or pmf, not both".into()))
                    }
                    (Some(gamma), None) => DegreeDistribution::zeta(*gamma).map_err(cfg_err("graph.gamma"))?,
                    (None, Some(pmf)) => pmf_from_map(pmf, "graph.pmf")?,
                    (None, None) => {
                        return Err(CliError::Config("graph: sampled graphs need gamma or pmf".into()))
                    }
                };
                sample_chung_lu_from(&dist, n, g.seed)
                    .map(Some)
                    .map_err(cfg_err("graph"))
            }
            GraphSource::File => {
                let path = g
                    .path
                    .as_ref()
                    .ok_or_else(|| CliError::Config("graph.path is required for file graphs".into()))?;
                let path = self.resolve(path);
                load_edge_list(&path)
                    .map(|l| Some(l.graph))
                    .map_err(|e| CliError::Config(format!("graph.path {}: {e}", path.display())))
            }
        }
    }

    pub fn require_graph(&self) -> Result<Graph, CliError> {
        self.graph()?
            .ok_or_else(|| CliError::Config("this command needs a [graph] section".into()))
    }

    /// Degree law of the limiting system. Defaults to the graph's empirical
    /// law when a graph is given, else the zeta law.
    pub fn limit_law(&self, graph: Option<&Graph>) -> Result<DegreeDistribution, CliError> {
        let l = &self.config.limit;
        let law = l
            .law
            .unwrap_or(if graph.is_some() { LimitLaw::Graph } else { LimitLaw::Zeta });
        match law {
            LimitLaw::Graph => graph
                .ok_or_else(|| CliError::Config("limit.law = \"graph\" needs a [graph] section".into()))?
                .degree_distribution()
                .map_err(cfg_err("limit (graph degree law)")),
            LimitLaw::Zeta => {
                let gamma = l
                    .gamma
                    .or_else(|| self.config.graph.as_ref().and_then(|g| g.gamma))
                    .unwrap_or(2.5);
                DegreeDistribution::zeta(gamma).map_err(cfg_err("limit.gamma"))
            }
            LimitLaw::Explicit => pmf_from_map(
                l.pmf
                    .as_ref()
                    .ok_or_else(|| CliError::Config("limit.pmf is required for law = \"explicit\"".into()))?,
                "limit.pmf",
            ),
        }
    }

    pub fn limit_model(&self, graph: Option<&Graph>) -> Result<LimitModel, CliError> {
        let dist = self.limit_law(graph)?;
        let mut model = LimitModel::new(&dist, self.config.k_star).map_err(cfg_err("limit"))?;
        if let Some(k) = self.config.limit.infinity_degree {
            if k <= self.config.k_star {
                return Err(CliError::Config("limit.infinity_degree must exceed k_star".into()));
            }
            model = model.with_infinity_degree(k);
        }
        Ok(model)
    }

    pub fn mode(&self) -> Result<StepMode, CliError> {
        match self.config.limit.mode {
            ModeName::Exact => Ok(StepMode::Exact),
            ModeName::Sampled => {
                if self.config.limit.samples == 0 {
                    return Err(CliError::Config("limit.samples must be positive".into()));
                }
                Ok(StepMode::Sampled {
                    samples: self.config.limit.samples,
                    seed: self.config.seed,
                })
            }
        }
    }

    pub fn policy(&self, problem: &ProblemSpec) -> Result<PolicyEnsemble, CliError> {
        let k = self.config.k_star as usize;
        let (d, n_u) = (problem.num_states(), problem.num_actions());
        let p = &self.config.policy;
        let ens = match p.kind {
            PolicyKind::Uniform => Ok(PolicyEnsemble::uniform(k, d, n_u)),
            PolicyKind::Constant => {
                let m = p
                    .matrix
                    .as_ref()
                    .ok_or_else(|| CliError::Config("policy.matrix is required for kind = \"constant\"".into()))?;
                PolicyEnsemble::constant(k, m)
            }
            PolicyKind::PerClass => {
                let rows = p.classes.as_ref().ok_or_else(|| {
                    CliError::Config("policy.classes is required for kind = \"per_class\"".into())
                })?;
                if rows.len() != k + 1 {
                    return Err(CliError::Config(format!(
                        "policy.classes has {} entries, k_star = {k} needs {}",
                        rows.len(),
                        k + 1
                    )));
                }
                let flat: Vec<f64> = rows.iter().flatten().flatten().copied().collect();
                PolicyEnsemble::new(k, d, n_u, flat)
            }
        };
        let ens = ens.map_err(cfg_err("policy"))?;
        if ens.num_states() != d || ens.num_actions() != n_u {
            return Err(CliError::Config(format!(
                "policy: expected {d} states × {n_u} actions for problem {:?}",
                problem.name
            )));
        }
        Ok(ens)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.config.train;
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            gamma: t.gamma.unwrap_or(d.gamma),
            gae_lambda: t.gae_lambda.unwrap_or(d.gae_lambda),
            train_batch: t.train_batch.unwrap_or(d.train_batch),
            minibatch: t.minibatch.unwrap_or(d.minibatch),
            epochs_per_batch: t.epochs_per_batch.unwrap_or(d.epochs_per_batch),
            clip: t.clip.unwrap_or(d.clip),
            kl_coeff: t.kl_coeff.unwrap_or(d.kl_coeff),
            kl_target: t.kl_target.unwrap_or(d.kl_target),
            learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
            vf_coeff: t.vf_coeff.unwrap_or(d.vf_coeff),
            hidden: t.hidden.clone().unwrap_or(d.hidden),
            iterations: t.iterations.unwrap_or(d.iterations),
            episode_len: t.episode_len.or(d.episode_len),
            time_feature: t.time_feature.unwrap_or(d.time_feature),
            init_log_std: t.init_log_std.unwrap_or(d.init_log_std),
            mode: self.mode()?,
        };
        cfg.validate().map_err(cfg_err("train"))?;
        if t.checkpoint_every == 0 {
            return Err(CliError::Config("train.checkpoint_every must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn trials(&self) -> Result<usize, CliError> {
        if self.config.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        Ok(self.config.trials)
    }
}
