//! The subcommands. Each writes CSV files into the output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sparse_mfc::extensive::{extensive_rollout, ExtensiveRoute};
use sparse_mfc::graphs::{partition_classes, row_label, write_edge_list, ClassPartition, Graph};
use sparse_mfc::learn::{
    evaluate_policy, load_checkpoint, save_checkpoint, EvalTarget, IterationStats, Trainer,
};
use sparse_mfc::meanfield::{rollout, MfEnsemble, PolicyEnsemble};
use sparse_mfc::simulate::{delta_mu, estimate_objective, mean_std, simulate, trial_seed};

use sparse_mfc::Error as CoreError;

use crate::config::{Algorithm, EvalTargetName, LoadedConfig};
use crate::CliError;

fn runtime(e: CoreError) -> CliError {
    CliError::Runtime(e.to_string())
}

/// A CSV file whose first line records the configuration hash.
pub struct CsvOut {
    inner: csv::Writer<File>,
    path: PathBuf,
}

impl CsvOut {
    pub fn create(dir: &Path, name: &str, hash: &str, header: &[&str]) -> Result<Self, CliError> {
        let path = dir.join(name);
        let mut file = File::create(&path).map_err(|e| io_err(&path, e))?;
        writeln!(file, "# config-hash: {hash}").map_err(|e| io_err(&path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header).map_err(|e| csv_err(&path, e))?;
        Ok(Self { inner, path })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(|e| csv_err(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush().map_err(|e| io_err(&self.path, e))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn partition(cfg: &LoadedConfig, g: &Graph) -> Result<ClassPartition, CliError> {
    partition_classes(g, cfg.config.k_star).map_err(|e| CliError::Config(format!("graph: {e}")))
}

pub fn sample_graph(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    match cfg.config.graph.as_ref().map(|g| g.source) {
        Some(crate::config::GraphSource::Sample) => {}
        _ => return Err(CliError::Config("sample-graph needs [graph] with source = \"sample\"".into())),
    }
    let g = cfg.require_graph()?;
    ensure_dir(out)?;
    write_edge_list(&g, out.join("graph.edges")).map_err(runtime)?;
    let mut hist: BTreeMap<u32, usize> = BTreeMap::new();
    for d in g.degrees() {
        *hist.entry(d).or_default() += 1;
    }
    let mut csv = CsvOut::create(out, "degree_histogram.csv", &cfg.hash, &["degree", "count"])?;
    for (d, c) in hist {
        csv.row([d.to_string(), c.to_string()])?;
    }
    csv.finish()
}

fn trajectory_rows(csv: &mut CsvOut, method: &str, traj: &[Vec<f64>]) -> Result<(), CliError> {
    for (t, mu) in traj.iter().enumerate() {
        for (x, p) in mu.iter().enumerate() {
            csv.row([method.to_string(), t.to_string(), x.to_string(), p.to_string()])?;
        }
    }
    Ok(())
}

/// Finite simulations against the two-systems and extensive rollouts.
pub fn compare(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let g = cfg.require_graph()?;
    let part = partition(cfg, &g)?;
    let model = cfg.limit_model(Some(&g))?;
    let mode = cfg.mode()?;
    let policy = cfg.policy(&problem)?;
    let trials = cfg.trials()?;
    let seed = cfg.config.seed;
    ensure_dir(out)?;

    let policies = [policy];
    let two = rollout(&policies, &problem, &model, mode).map_err(runtime)?;
    let two_agg = two.aggregates(model.node_mass());
    let ext = if cfg.config.compare.extensive {
        match extensive_rollout(&policies, &problem, &model, ExtensiveRoute::default()) {
            Ok(r) => Ok(r.aggregates(model.node_mass())),
            Err(e @ CoreError::Capacity { .. }) => Err(e.to_string()),
            Err(e) => return Err(runtime(e)),
        }
    } else {
        Err("disabled in config".to_string())
    };

    let runs: Vec<Vec<Vec<f64>>> = (0..trials)
        .map(|tr| {
            simulate(&g, &part, &policies, &problem, trial_seed(seed, tr))
                .map(|s| s.aggregates())
                .map_err(runtime)
        })
        .collect::<Result<_, _>>()?;

    let mut per_trial = CsvOut::create(out, "compare_trials.csv", &cfg.hash, &["method", "trial", "delta_mu"])?;
    let mut summary = CsvOut::create(
        out,
        "compare_summary.csv",
        &cfg.hash,
        &["method", "status", "mean_delta_mu", "std", "trials", "note"],
    )?;
    let methods: Vec<(&str, Result<&Vec<Vec<f64>>, &String>)> = vec![("two-systems", Ok(&two_agg)), ("extensive", ext.as_ref())];
    for (name, lim) in &methods {
        match lim {
            Ok(lim) => {
                let mut values = Vec::with_capacity(trials);
                for (tr, emp) in runs.iter().enumerate() {
                    // t = 0 is the shared initial law; compare from t = 1.
                    let dm = delta_mu(&emp[1..], &lim[1..]).map_err(runtime)?;
                    per_trial.row([name.to_string(), tr.to_string(), dm.to_string()])?;
                    values.push(dm);
                }
                let (m, s) = mean_std(&values);
                summary.row([
                    name.to_string(),
                    "ok".into(),
                    m.to_string(),
                    s.to_string(),
                    trials.to_string(),
                    String::new(),
                ])?;
            }
            Err(reason) => summary.row([
                name.to_string(),
                "skipped".into(),
                String::new(),
                String::new(),
                "0".into(),
                reason.to_string(),
            ])?,
        }
    }
    per_trial.finish()?;
    summary.finish()?;

    let mut traj = CsvOut::create(out, "compare_trajectories.csv", &cfg.hash, &["method", "t", "state", "probability"])?;
    let d = problem.num_states();
    let finite_mean: Vec<Vec<f64>> = (0..=problem.horizon)
        .map(|t| {
            (0..d)
                .map(|x| runs.iter().map(|r| r[t][x]).sum::<f64>() / trials as f64)
                .collect()
        })
        .collect();
    trajectory_rows(&mut traj, "finite", &finite_mean)?;
    trajectory_rows(&mut traj, "two-systems", &two_agg)?;
    if let Ok(e) = &ext {
        trajectory_rows(&mut traj, "extensive", e)?;
    }
    traj.finish()
}

fn curve_csv(cfg: &LoadedConfig, out: &Path, curve: &[IterationStats]) -> Result<(), CliError> {
    let mut csv = CsvOut::create(
        out,
        "learning_curve.csv",
        &cfg.hash,
        &["iteration", "mean_return", "std", "kl", "entropy", "kl_coeff"],
    )?;
    for r in curve {
        csv.row([
            r.iteration.to_string(),
            r.mean_return.to_string(),
            r.std_return.to_string(),
            r.kl.to_string(),
            r.entropy.to_string(),
            r.kl_coeff.to_string(),
        ])?;
    }
    csv.finish()
}

pub fn train(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let tc = cfg.train_config()?;
    let seed = cfg.config.seed;
    let algorithm = cfg.config.train.algorithm;
    let graph = match algorithm {
        Algorithm::Lwmfmarl => Some(cfg.require_graph()?),
        Algorithm::Lwmfc => cfg.graph()?,
    };
    let part = graph.as_ref().map(|g| partition(cfg, g)).transpose()?;
    let model = match algorithm {
        Algorithm::Lwmfc => Some(cfg.limit_model(graph.as_ref())?),
        Algorithm::Lwmfmarl => None,
    };
    ensure_dir(out)?;
    let ckpt_path = out.join("checkpoint.txt");
    let mut trainer = if cfg.config.train.resume && ckpt_path.exists() {
        let ckpt = load_checkpoint(&ckpt_path).map_err(|e| CliError::Config(format!("{}: {e}", ckpt_path.display())))?;
        Trainer::from_checkpoint(ckpt, tc.clone(), seed).map_err(|e| CliError::Config(e.to_string()))?
    } else {
        Trainer::new(&problem, cfg.config.k_star as usize, tc.clone(), seed).map_err(|e| CliError::Config(e.to_string()))?
    };
    if let (Algorithm::Lwmfmarl, Some(g), Some(p)) = (algorithm, &graph, &part) {
        sparse_mfc::learn::GraphEnv::new(g, p, &problem).map_err(|e| CliError::Config(format!("graph: {e}")))?;
    }

    let every = cfg.config.train.checkpoint_every;
    let save = |t: &Trainer| -> Result<(), CliError> {
        save_checkpoint(&ckpt_path, &t.checkpoint()).map_err(runtime)?;
        curve_csv(cfg, out, &t.curve)
    };
    while trainer.iteration < tc.iterations {
        let stats = match (&model, &graph, &part) {
            (Some(m), _, _) => trainer.step(problem.horizon, || {
                sparse_mfc::learn::LimitingEnv::new(&problem, m, tc.mode)
            }),
            (None, Some(g), Some(p)) => trainer.step(problem.horizon, || {
                sparse_mfc::learn::GraphEnv::new(g, p, &problem).expect("validated above")
            }),
            _ => unreachable!("graph is required for lwmfmarl"),
        }
        .map_err(runtime)?;
        eprintln!(
            "iteration {:>4}  return {:>10.4}  kl {:.5}  kl_coeff {:.4}",
            stats.iteration, stats.mean_return, stats.kl, stats.kl_coeff
        );
        if trainer.iteration % every == 0 {
            save(&trainer)?;
        }
    }
    save(&trainer)
}

pub fn evaluate(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let ckpt_path = cfg
        .config
        .evaluate
        .checkpoint
        .as_ref()
        .map(|p| cfg.resolve(p))
        .unwrap_or_else(|| out.join("checkpoint.txt"));
    if !ckpt_path.exists() {
        return Err(CliError::Config(format!("checkpoint {} does not exist", ckpt_path.display())));
    }
    let ckpt = load_checkpoint(&ckpt_path).map_err(|e| CliError::Config(format!("{}: {e}", ckpt_path.display())))?;
    let policy = ckpt.policy;
    if policy.num_states != problem.num_states()
        || policy.num_actions != problem.num_actions()
        || policy.k_star != cfg.config.k_star as usize
    {
        return Err(CliError::Config(
            "checkpoint does not match the configured problem and k_star".into(),
        ));
    }
    let targets = &cfg.config.evaluate.targets;
    let graph = if targets.contains(&EvalTargetName::Graph) {
        Some(cfg.require_graph()?)
    } else {
        cfg.graph()?
    };
    let part = graph.as_ref().map(|g| partition(cfg, g)).transpose()?;
    let trials = cfg.trials()?;
    let seed = cfg.config.seed;
    let uniform = PolicyEnsemble::uniform(policy.k_star, problem.num_states(), problem.num_actions());
    ensure_dir(out)?;

    let mut csv = CsvOut::create(
        out,
        "evaluation.csv",
        &cfg.hash,
        &["policy", "target", "J", "std", "stderr", "trials"],
    )?;
    for target in targets {
        let mut rows: Vec<(&str, f64, f64, usize)> = Vec::new();
        match target {
            EvalTargetName::Limiting => {
                let model = cfg.limit_model(graph.as_ref())?;
                let (j, s) = evaluate_policy(&policy, EvalTarget::Limiting(&model), &problem, 1, seed).map_err(runtime)?;
                rows.push(("trained", j, s, 1));
                if cfg.config.evaluate.baseline {
                    let j = rollout(&[uniform.clone()], &problem, &model, cfg.mode()?)
                        .map_err(runtime)?
                        .objective;
                    rows.push(("uniform", j, 0.0, 1));
                }
            }
            EvalTargetName::Graph => {
                let (g, p) = (graph.as_ref().expect("graph loaded"), part.as_ref().expect("partition"));
                let (j, s) =
                    evaluate_policy(&policy, EvalTarget::Graph(g, p), &problem, trials, seed).map_err(runtime)?;
                rows.push(("trained", j, s, trials));
                if cfg.config.evaluate.baseline {
                    let est = estimate_objective(g, p, &[uniform.clone()], &problem, trials, seed).map_err(runtime)?;
                    rows.push(("uniform", est.mean, est.std, trials));
                }
            }
        }
        let name = match target {
            EvalTargetName::Limiting => "limiting",
            EvalTargetName::Graph => "graph",
        };
        for (pol, j, s, n) in rows {
            csv.row([
                pol.to_string(),
                name.to_string(),
                j.to_string(),
                s.to_string(),
                (s / (n as f64).sqrt()).to_string(),
                n.to_string(),
            ])?;
        }
    }
    csv.finish()
}

fn ensemble_rows(
    csv: &mut CsvOut,
    trajectory: &[MfEnsemble],
    aggregates: &[Vec<f64>],
    k_star: u32,
) -> Result<(), CliError> {
    for (t, (e, agg)) in trajectory.iter().zip(aggregates).enumerate() {
        for row in 0..e.rows() {
            for (x, p) in e.class(row).iter().enumerate() {
                csv.row([t.to_string(), row_label(row, k_star), x.to_string(), p.to_string()])?;
            }
        }
        for (x, p) in agg.iter().enumerate() {
            csv.row([t.to_string(), "aggregate".to_string(), x.to_string(), p.to_string()])?;
        }
    }
    Ok(())
}

fn reward_rows(cfg: &LoadedConfig, out: &Path, name: &str, rewards: &[f64]) -> Result<(), CliError> {
    let mut csv = CsvOut::create(out, name, &cfg.hash, &["t", "reward"])?;
    for (t, r) in rewards.iter().enumerate() {
        csv.row([t.to_string(), r.to_string()])?;
    }
    csv.finish()
}

pub fn mf_rollout(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let graph = cfg.graph()?;
    let model = cfg.limit_model(graph.as_ref())?;
    let policy = cfg.policy(&problem)?;
    let mode = cfg.mode()?;
    ensure_dir(out)?;
    let r = rollout(&[policy], &problem, &model, mode).map_err(runtime)?;
    let mut csv = CsvOut::create(out, "mf_rollout.csv", &cfg.hash, &["t", "class", "state", "probability"])?;
    ensemble_rows(&mut csv, &r.trajectory, &r.aggregates(model.node_mass()), model.k_star())?;
    csv.finish()?;
    reward_rows(cfg, out, "mf_rewards.csv", &r.rewards)
}

pub fn extensive_rollout_cmd(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let graph = cfg.graph()?;
    let model = cfg.limit_model(graph.as_ref())?;
    let policy = cfg.policy(&problem)?;
    ensure_dir(out)?;
    let r = extensive_rollout(&[policy], &problem, &model, ExtensiveRoute::default()).map_err(runtime)?;
    let mut csv = CsvOut::create(
        out,
        "extensive_rollout.csv",
        &cfg.hash,
        &["t", "class", "state", "probability"],
    )?;
    ensemble_rows(&mut csv, &r.trajectory, &r.aggregates(model.node_mass()), model.k_star())?;
    csv.finish()?;
    reward_rows(cfg, out, "extensive_rewards.csv", &r.rewards)
}
