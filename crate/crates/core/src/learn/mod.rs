//! Policy-gradient learning of degree-class policy ensembles, either on the
//! deterministic limiting system or directly on a finite graph.

pub mod checkpoint;
pub mod nn;
pub mod policy;
pub mod ppo;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphs::{ClassPartition, Graph};
use crate::meanfield::{mf_decision_step, LimitModel, MfEnsemble, PolicyEnsemble, StepMode};
use crate::problems::ProblemSpec;
use crate::seeding;
use crate::simulate::{empirical_mf, init_system, mean_std, sim_step, trial_seed, SystemState};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use policy::{gaussian_log_prob, sample_action, HighLevelPolicy, SampledAction};
pub use ppo::{gae, ppo_update, PpoState, TransitionRecord, UpdateDiagnostics};

/// Optimizer and collection settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub train_batch: usize,
    pub minibatch: usize,
    pub epochs_per_batch: usize,
    pub clip: f64,
    pub kl_coeff: f64,
    pub kl_target: f64,
    pub learning_rate: f64,
    pub vf_coeff: f64,
    pub hidden: Vec<usize>,
    pub iterations: usize,
    /// Steps per episode; `None` runs to the horizon.
    pub episode_len: Option<usize>,
    pub time_feature: bool,
    pub init_log_std: f64,
    /// Integration mode of the limiting system.
    pub mode: StepMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 1.0,
            train_batch: 4000,
            minibatch: 1000,
            epochs_per_batch: 5,
            clip: 0.2,
            kl_coeff: 0.2,
            kl_target: 0.03,
            learning_rate: 5e-5,
            vf_coeff: 1.0,
            hidden: vec![256, 256],
            iterations: 200,
            episode_len: None,
            time_feature: false,
            init_log_std: 0.0,
            mode: StepMode::Exact,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("gae_lambda", self.gae_lambda),
            ("kl_target", self.kl_target),
            ("learning_rate", self.learning_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gamma > 1.0 || self.gae_lambda > 1.0 {
            return Err(Error::param("gamma and gae_lambda must not exceed 1"));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::param(format!("clip must lie in (0, 1), got {}", self.clip)));
        }
        if !(self.kl_coeff >= 0.0 && self.vf_coeff >= 0.0) {
            return Err(Error::param("kl_coeff and vf_coeff must be non-negative"));
        }
        if self.train_batch == 0 || self.minibatch == 0 || self.epochs_per_batch == 0 {
            return Err(Error::param("train_batch, minibatch and epochs_per_batch must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::param("hidden layer widths must be positive"));
        }
        if self.episode_len == Some(0) {
            return Err(Error::param("episode_len must be positive"));
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::param("init_log_std must be finite"));
        }
        Ok(())
    }

    fn episode_steps(&self, horizon: usize) -> usize {
        self.episode_len.map_or(horizon, |l| l.min(horizon))
    }
}

/// One transition of the limiting control MDP: the limiting reward at
/// `(μ, π)` and the next ensemble.
pub fn mfc_mdp_step(
    ensemble: &MfEnsemble,
    pi: &PolicyEnsemble,
    problem: &ProblemSpec,
    model: &LimitModel,
) -> Result<(f64, MfEnsemble)> {
    mf_decision_step(ensemble, pi, problem, model, StepMode::Exact).map(|o| (o.reward, o.next))
}

/// An environment whose state is summarized by a class ensemble.
pub trait MdpEnv: Send {
    fn reset(&mut self, seed: u64) -> Result<MfEnsemble>;
    fn step(&mut self, pi: &PolicyEnsemble) -> Result<(f64, MfEnsemble)>;
}

/// The limiting system.
pub struct LimitingEnv<'a> {
    problem: &'a ProblemSpec,
    model: &'a LimitModel,
    mode: StepMode,
    state: MfEnsemble,
}

impl<'a> LimitingEnv<'a> {
    pub fn new(problem: &'a ProblemSpec, model: &'a LimitModel, mode: StepMode) -> Self {
        Self {
            problem,
            model,
            mode,
            state: MfEnsemble::initial(problem, model.k_star() as usize),
        }
    }
}

impl MdpEnv for LimitingEnv<'_> {
    fn reset(&mut self, _seed: u64) -> Result<MfEnsemble> {
        self.state = MfEnsemble::initial(self.problem, self.model.k_star() as usize);
        Ok(self.state.clone())
    }

    fn step(&mut self, pi: &PolicyEnsemble) -> Result<(f64, MfEnsemble)> {
        let out = mf_decision_step(&self.state, pi, self.problem, self.model, self.mode)?;
        self.state = out.next;
        Ok((out.reward, self.state.clone()))
    }
}

/// A finite graph; the observation is the empirical class ensemble, with
/// empty classes filled by the population aggregate.
pub struct GraphEnv<'a> {
    graph: &'a Graph,
    partition: &'a ClassPartition,
    problem: &'a ProblemSpec,
    state: SystemState,
}

impl<'a> GraphEnv<'a> {
    pub fn new(graph: &'a Graph, partition: &'a ClassPartition, problem: &'a ProblemSpec) -> Result<Self> {
        if graph.node_count() == 0 || graph.node_count() == partition.isolated {
            return Err(Error::EmptyGraph("no non-isolated nodes to control".into()));
        }
        Ok(Self {
            graph,
            partition,
            problem,
            state: init_system(graph, problem, 0),
        })
    }

    pub fn observe(&self) -> MfEnsemble {
        let emp = empirical_mf(&self.state, self.partition, self.problem.num_states());
        let mut e = emp.filled(&emp.aggregate());
        e.t = self.state.t;
        e
    }
}

impl MdpEnv for GraphEnv<'_> {
    fn reset(&mut self, seed: u64) -> Result<MfEnsemble> {
        self.state = init_system(self.graph, self.problem, seed);
        Ok(self.observe())
    }

    fn step(&mut self, pi: &PolicyEnsemble) -> Result<(f64, MfEnsemble)> {
        let (next, report) = sim_step(self.graph, self.partition, &self.state, pi, self.problem)?;
        self.state = next;
        Ok((report.mean_reward, self.observe()))
    }
}

/// One point of the learning curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub kl: f64,
    pub entropy: f64,
    pub kl_coeff: f64,
    pub surrogate: f64,
    pub value_loss: f64,
}

/// Policy, optimizer state and learning curve; advances one iteration at a
/// time so runs can be checkpointed and resumed.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub policy: HighLevelPolicy,
    pub state: PpoState,
    pub config: TrainConfig,
    pub seed: u64,
    pub iteration: usize,
    pub curve: Vec<IterationStats>,
}

impl Trainer {
    pub fn new(problem: &ProblemSpec, k_star: usize, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let policy = HighLevelPolicy::new(
            problem,
            k_star,
            &config.hidden,
            config.time_feature,
            config.init_log_std,
            seed,
        );
        Ok(Self {
            state: PpoState::new(&policy, &config),
            policy,
            config,
            seed,
            iteration: 0,
            curve: Vec::new(),
        })
    }

    /// Rebuilds a trainer from a checkpoint written under the same config.
    pub fn from_checkpoint(ckpt: Checkpoint, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if ckpt.policy.policy_shape.hidden != config.hidden || ckpt.policy.time_feature != config.time_feature {
            return Err(Error::Checkpoint("network layout differs from the configuration".into()));
        }
        let mut state = PpoState::new(&ckpt.policy, &config);
        state.adam = ckpt.adam;
        state.adam.lr = config.learning_rate;
        state.kl_coeff = ckpt.kl_coeff;
        Ok(Self {
            policy: ckpt.policy,
            state,
            config,
            seed,
            iteration: ckpt.iteration,
            curve: ckpt.curve,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            policy: self.policy.clone(),
            adam: self.state.adam.clone(),
            kl_coeff: self.state.kl_coeff,
            iteration: self.iteration,
            curve: self.curve.clone(),
        }
    }

    /// Collects one batch from environments built by `make_env` and applies
    /// one update.
    pub fn step<E, F>(&mut self, horizon: usize, make_env: F) -> Result<IterationStats>
    where
        E: MdpEnv,
        F: Fn() -> E,
    {
        let len = self.config.episode_steps(horizon);
        if len == 0 {
            return Err(Error::param("horizon is zero; nothing to learn"));
        }
        let episodes = self.config.train_batch.div_ceil(len);
        let it = self.iteration as u64;
        let mut envs: Vec<E> = (0..episodes).map(|_| make_env()).collect();
        let mut obs: Vec<MfEnsemble> = envs
            .par_iter_mut()
            .enumerate()
            .map(|(e, env)| env.reset(seeding::derive_seed(&[self.seed, it, e as u64, 1])))
            .collect::<Result<_>>()?;
        let mut rngs: Vec<_> = (0..episodes)
            .map(|e| seeding::stream(&[self.seed, it, e as u64, 2]))
            .collect();
        let mut per_episode: Vec<Vec<TransitionRecord>> = (0..episodes).map(|_| Vec::with_capacity(len)).collect();

        for t in 0..len {
            let flat: Vec<Vec<f64>> = obs.iter().map(|e| self.policy.observation(e, t)).collect();
            let x = Array2::from_shape_fn((episodes, self.policy.obs_dim()), |(i, j)| flat[i][j]);
            let (means, _) = self.policy.mean_logits(x.view());
            let policy = &self.policy;
            let done = t + 1 == horizon;
            let truncated = t + 1 == len && !done;
            let steps: Vec<(TransitionRecord, MfEnsemble)> = envs
                .par_iter_mut()
                .zip(rngs.par_iter_mut())
                .zip(flat.into_par_iter())
                .enumerate()
                .map(|(i, ((env, rng), mu_t))| {
                    let mean = means.row(i);
                    let a = policy::sample_from_mean(policy, mean.as_slice().expect("contiguous"), 1.0, rng)?;
                    let (reward, next) = env.step(&a.policy)?;
                    let mu_next = policy.observation(&next, t + 1);
                    Ok((
                        TransitionRecord {
                            mu_t,
                            raw_action: a.raw,
                            pi_t: a.policy,
                            log_prob: a.log_prob,
                            mean: a.mean,
                            reward,
                            done,
                            truncated,
                            mu_next,
                        },
                        next,
                    ))
                })
                .collect::<Result<_>>()?;
            for (i, (rec, next)) in steps.into_iter().enumerate() {
                per_episode[i].push(rec);
                obs[i] = next;
            }
        }

        let returns: Vec<f64> = per_episode.iter().map(|ep| ep.iter().map(|r| r.reward).sum()).collect();
        let batch: Vec<TransitionRecord> = per_episode.into_iter().flatten().collect();
        let diag = ppo_update(
            &mut self.policy,
            &mut self.state,
            &batch,
            &self.config,
            seeding::derive_seed(&[self.seed, it, 3]),
        )?;
        let (mean_return, std_return) = mean_std(&returns);
        let stats = IterationStats {
            iteration: self.iteration,
            mean_return,
            std_return,
            kl: diag.kl,
            entropy: diag.entropy,
            kl_coeff: diag.kl_coeff,
            surrogate: diag.surrogate,
            value_loss: diag.value_loss,
        };
        self.curve.push(stats);
        self.iteration += 1;
        Ok(stats)
    }

    /// Runs until `config.iterations` iterations have been completed.
    pub fn run_limiting(&mut self, problem: &ProblemSpec, model: &LimitModel) -> Result<()> {
        while self.iteration < self.config.iterations {
            let mode = self.config.mode;
            self.step(problem.horizon, || LimitingEnv::new(problem, model, mode))?;
        }
        Ok(())
    }

    pub fn run_graph(&mut self, g: &Graph, partition: &ClassPartition, problem: &ProblemSpec) -> Result<()> {
        GraphEnv::new(g, partition, problem)?;
        while self.iteration < self.config.iterations {
            self.step(problem.horizon, || {
                GraphEnv::new(g, partition, problem).expect("checked above")
            })?;
        }
        Ok(())
    }
}

/// Trains on the limiting system.
pub fn train_lwmfc(
    problem: &ProblemSpec,
    model: &LimitModel,
    config: &TrainConfig,
    seed: u64,
) -> Result<(HighLevelPolicy, Vec<IterationStats>)> {
    let mut tr = Trainer::new(problem, model.k_star() as usize, config.clone(), seed)?;
    tr.run_limiting(problem, model)?;
    Ok((tr.policy, tr.curve))
}

/// Trains directly on a finite graph.
pub fn train_lwmfmarl(
    g: &Graph,
    partition: &ClassPartition,
    problem: &ProblemSpec,
    config: &TrainConfig,
    seed: u64,
) -> Result<(HighLevelPolicy, Vec<IterationStats>)> {
    let mut tr = Trainer::new(problem, partition.k_star as usize, config.clone(), seed)?;
    tr.run_graph(g, partition, problem)?;
    Ok((tr.policy, tr.curve))
}

/// Where a policy is evaluated.
#[derive(Clone, Copy)]
pub enum EvalTarget<'a> {
    Limiting(&'a LimitModel),
    Graph(&'a Graph, &'a ClassPartition),
}

/// Closed-loop evaluation with the zero-noise mean action. Returns the mean
/// objective and its sample standard deviation (zero on the limiting system).
pub fn evaluate_policy(
    policy: &HighLevelPolicy,
    target: EvalTarget<'_>,
    problem: &ProblemSpec,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let run = |env: &mut dyn MdpEnv, seed: u64| -> Result<f64> {
        let mut obs = env.reset(seed)?;
        let mut total = 0.0;
        for t in 0..problem.horizon {
            let pi = policy.deterministic(&policy.observation(&obs, t))?;
            let (r, next) = env.step(&pi)?;
            total += r;
            obs = next;
        }
        Ok(total)
    };
    match target {
        EvalTarget::Limiting(model) => {
            let j = run(&mut LimitingEnv::new(problem, model, StepMode::Exact), seed)?;
            Ok((j, 0.0))
        }
        EvalTarget::Graph(g, partition) => {
            if trials == 0 {
                return Err(Error::param("trials must be at least 1"));
            }
            GraphEnv::new(g, partition, problem)?;
            let per_trial = (0..trials)
                .into_par_iter()
                .map(|tr| {
                    let mut env = GraphEnv::new(g, partition, problem)?;
                    run(&mut env, trial_seed(seed, tr))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(mean_std(&per_trial))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::DegreeDistribution;
    use crate::meanfield::rollout;
    use crate::problems::{mf_reward, problem_by_name, NO_PROTECT};

    fn small_config() -> TrainConfig {
        TrainConfig {
            train_batch: 60,
            minibatch: 20,
            epochs_per_batch: 2,
            hidden: vec![8, 8],
            iterations: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn mdp_step_composes_reward_and_step() {
        let p = problem_by_name("sis").unwrap();
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 3).unwrap();
        let e = MfEnsemble::initial(&p, 3);
        let pi = PolicyEnsemble::uniform(3, 2, 2);
        let (r, next) = mfc_mdp_step(&e, &pi, &p, &model).unwrap();
        let g_hat = crate::meanfield::g_hat_from_masses(&e, model.neighbor_mass());
        let r0 = mf_reward(&p, &e, &pi, &g_hat, model.node_mass()).unwrap();
        assert_eq!(r, r0);
        let roll = rollout(&[pi.clone()], &p.clone().with_horizon(1), &model, StepMode::Exact).unwrap();
        assert_eq!(next.flat(), roll.trajectory[1].flat());
        assert_eq!(mfc_mdp_step(&e, &pi, &p, &model).unwrap().1.flat(), next.flat());
    }

    #[test]
    fn never_protect_from_all_susceptible_is_stationary() {
        let p = problem_by_name("sis").unwrap().with_mu0(vec![1.0, 0.0]).unwrap();
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 2).unwrap();
        let e = MfEnsemble::initial(&p, 2);
        let pi = PolicyEnsemble::from_fn(2, 2, 2, |_, _, u| if u == NO_PROTECT { 1.0 } else { 0.0 }).unwrap();
        let (r, next) = mfc_mdp_step(&e, &pi, &p, &model).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(next.flat(), e.flat());
    }

    #[test]
    fn zero_budget_returns_initial_policy() {
        let p = problem_by_name("sis").unwrap();
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 2).unwrap();
        let config = TrainConfig {
            iterations: 0,
            ..small_config()
        };
        let (pol, curve) = train_lwmfc(&p, &model, &config, 4).unwrap();
        assert!(curve.is_empty());
        assert_eq!(pol, HighLevelPolicy::new(&p, 2, &config.hidden, false, 0.0, 4));
    }

    #[test]
    fn training_is_deterministic() {
        let p = problem_by_name("sis").unwrap().with_horizon(10);
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 2).unwrap();
        let a = train_lwmfc(&p, &model, &small_config(), 11).unwrap();
        let b = train_lwmfc(&p, &model, &small_config(), 11).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.len(), 3);
    }

    #[test]
    fn truncated_episodes_are_marked() {
        let p = problem_by_name("sis").unwrap().with_horizon(10);
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 1).unwrap();
        let config = TrainConfig {
            episode_len: Some(4),
            ..small_config()
        };
        let mut tr = Trainer::new(&p, 1, config, 1).unwrap();
        let stats = tr.step(p.horizon, || LimitingEnv::new(&p, &model, StepMode::Exact)).unwrap();
        assert!(stats.mean_return.is_finite());
    }

    #[test]
    fn limiting_evaluation_is_repeatable() {
        let p = problem_by_name("rumor").unwrap();
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 2).unwrap();
        let pol = HighLevelPolicy::new(&p, 2, &[8], false, 0.0, 3);
        let a = evaluate_policy(&pol, EvalTarget::Limiting(&model), &p, 1, 0).unwrap();
        let b = evaluate_policy(&pol, EvalTarget::Limiting(&model), &p, 1, 0).unwrap();
        assert_eq!(a, b);
    }
}
