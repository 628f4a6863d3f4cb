//! Finite N-agent simulation on a concrete graph with synchronous updates.
//!
//! Every random draw for node `i` at decision step `t` and sub-step `s`
//! comes from a stream keyed by `(seed, t, s, i)`, so results do not depend
//! on the order in which nodes are processed.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphs::{ClassPartition, Graph};
use crate::meanfield::{check_schedule, policy_at, MfEnsemble, PolicyEnsemble};
use crate::problems::ProblemSpec;
use crate::seeding;

const INIT_KEY: u64 = u64::MAX;

/// Per-node states of one trial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemState {
    pub states: Vec<usize>,
    pub t: usize,
    pub seed: u64,
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Round-off: fall back to the last category with positive mass.
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

/// Draws every node's initial state independently from `μ_0`.
pub fn init_system(g: &Graph, problem: &ProblemSpec, seed: u64) -> SystemState {
    let states = (0..g.node_count())
        .map(|i| categorical(&problem.mu0, &mut seeding::stream(&[seed, INIT_KEY, i as u64])))
        .collect();
    SystemState { states, t: 0, seed }
}

/// Outcome of one decision step.
#[derive(Clone, Debug)]
pub struct StepReport {
    /// Mean agent reward over non-isolated nodes, summed over sub-steps.
    pub mean_reward: f64,
    /// Isolated nodes left out of the reward average.
    pub isolated_excluded: usize,
}

fn check_dims(g: &Graph, partition: &ClassPartition, policy: &PolicyEnsemble, problem: &ProblemSpec) -> Result<()> {
    if partition.class_of.len() != g.node_count() {
        return Err(Error::dims("partition and graph differ in node count"));
    }
    if policy.num_states() != problem.num_states() || policy.num_actions() != problem.num_actions() {
        return Err(Error::dims("policy does not match the problem"));
    }
    if policy.rows() != partition.rows() {
        return Err(Error::dims("policy and partition differ in k*"));
    }
    Ok(())
}

/// Histogram over non-isolated nodes.
fn population_histogram(states: &[usize], partition: &ClassPartition, d: usize) -> Vec<f64> {
    let mut h = vec![0.0; d];
    let mut n = 0usize;
    for (i, &x) in states.iter().enumerate() {
        if partition.row_of(i).is_some() {
            h[x] += 1.0;
            n += 1;
        }
    }
    if n > 0 {
        h.iter_mut().for_each(|v| *v /= n as f64);
    }
    h
}

/// Advances all nodes by one decision step.
pub fn sim_step(
    g: &Graph,
    partition: &ClassPartition,
    state: &SystemState,
    policy: &PolicyEnsemble,
    problem: &ProblemSpec,
) -> Result<(SystemState, StepReport)> {
    check_dims(g, partition, policy, problem)?;
    let d = problem.num_states();
    let counted = g.node_count() - partition.isolated;
    let mut current = state.states.clone();
    let mut mean_reward = 0.0;
    for sub in 0..problem.substeps {
        let mu_agg = population_histogram(&current, partition, d);
        let snapshot = &current;
        let results: Vec<(usize, f64)> = (0..g.node_count())
            .into_par_iter()
            .map(|i| {
                let mut rng = seeding::stream(&[state.seed, state.t as u64, sub as u64, i as u64]);
                let x = snapshot[i];
                let row = partition.row_of(i);
                let u = categorical(policy.row(row.unwrap_or(0), x), &mut rng);
                let mut nbh = vec![0.0; d];
                let neighbors = g.neighbors(i);
                if !neighbors.is_empty() {
                    let w = 1.0 / neighbors.len() as f64;
                    for &j in neighbors {
                        nbh[snapshot[j as usize]] += w;
                    }
                }
                let r = if row.is_some() {
                    problem.reward(x, u, &nbh, &mu_agg)
                } else {
                    0.0
                };
                let mut next = vec![0.0; d];
                problem.transition(x, u, &nbh, neighbors.len() as u32, &mut next);
                (categorical(&next, &mut rng), r)
            })
            .collect();
        if counted > 0 {
            mean_reward += results.iter().map(|r| r.1).sum::<f64>() / counted as f64;
        }
        current = results.into_iter().map(|r| r.0).collect();
    }
    Ok((
        SystemState {
            states: current,
            t: state.t + 1,
            seed: state.seed,
        },
        StepReport {
            mean_reward,
            isolated_excluded: partition.isolated,
        },
    ))
}

/// Per-class empirical distributions; classes without members are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMf {
    pub k_star: u32,
    pub per_class: Vec<Option<Vec<f64>>>,
    pub class_sizes: Vec<usize>,
}

impl EmpiricalMf {
    /// Histogram over all non-isolated nodes.
    pub fn aggregate(&self) -> Vec<f64> {
        let n: usize = self.class_sizes.iter().sum();
        let d = self.per_class.iter().flatten().next().map_or(0, Vec::len);
        let mut out = vec![0.0; d];
        for (mu, &size) in self.per_class.iter().zip(&self.class_sizes) {
            if let Some(mu) = mu {
                for (o, p) in out.iter_mut().zip(mu) {
                    *o += p * size as f64 / n as f64;
                }
            }
        }
        out
    }

    /// Ensemble with absent classes replaced by `fallback`.
    pub fn filled(&self, fallback: &[f64]) -> MfEnsemble {
        let rows = self
            .per_class
            .iter()
            .map(|mu| mu.clone().unwrap_or_else(|| fallback.to_vec()))
            .collect::<Vec<_>>();
        MfEnsemble::new(rows).expect("histograms are simplexes")
    }
}

pub fn empirical_mf(state: &SystemState, partition: &ClassPartition, d: usize) -> EmpiricalMf {
    let rows = partition.rows();
    let mut counts = vec![vec![0u64; d]; rows];
    for (i, &x) in state.states.iter().enumerate() {
        if let Some(r) = partition.row_of(i) {
            counts[r][x] += 1;
        }
    }
    let per_class = counts
        .into_iter()
        .map(|c| {
            let n: u64 = c.iter().sum();
            (n > 0).then(|| c.iter().map(|&v| v as f64 / n as f64).collect())
        })
        .collect();
    EmpiricalMf {
        k_star: partition.k_star,
        per_class,
        class_sizes: partition.class_sizes.clone(),
    }
}

/// `(1/2T) Σ_t ‖μ̂_t − μ_t‖₁` over the `T` supplied time points.
pub fn delta_mu(empirical: &[Vec<f64>], limiting: &[Vec<f64>]) -> Result<f64> {
    if empirical.len() != limiting.len() {
        return Err(Error::dims(format!(
            "trajectory lengths differ: {} vs {}",
            empirical.len(),
            limiting.len()
        )));
    }
    if empirical.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (a, b) in empirical.iter().zip(limiting) {
        if a.len() != b.len() {
            return Err(Error::dims("simplexes differ in length"));
        }
        total += a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    }
    Ok(total / (2.0 * empirical.len() as f64))
}

/// One simulated episode.
#[derive(Clone, Debug)]
pub struct SimTrajectory {
    /// Empirical class laws at `t = 0..=T`.
    pub mean_fields: Vec<EmpiricalMf>,
    pub rewards: Vec<f64>,
    pub objective: f64,
    pub isolated_excluded: usize,
}

impl SimTrajectory {
    pub fn aggregates(&self) -> Vec<Vec<f64>> {
        self.mean_fields.iter().map(EmpiricalMf::aggregate).collect()
    }
}

/// Runs one episode of `problem.horizon` decision steps.
pub fn simulate(
    g: &Graph,
    partition: &ClassPartition,
    policies: &[PolicyEnsemble],
    problem: &ProblemSpec,
    seed: u64,
) -> Result<SimTrajectory> {
    check_schedule(policies, problem.horizon)?;
    let d = problem.num_states();
    let mut state = init_system(g, problem, seed);
    let mut mean_fields = vec![empirical_mf(&state, partition, d)];
    let mut rewards = Vec::with_capacity(problem.horizon);
    for t in 0..problem.horizon {
        let (next, report) = sim_step(g, partition, &state, policy_at(policies, t), problem)?;
        rewards.push(report.mean_reward);
        state = next;
        mean_fields.push(empirical_mf(&state, partition, d));
    }
    Ok(SimTrajectory {
        mean_fields,
        objective: rewards.iter().sum(),
        rewards,
        isolated_excluded: partition.isolated,
    })
}

/// Seed of trial `trial` under a base seed.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seeding::derive_seed(&[seed, trial as u64])
}

/// Sample mean and standard deviation (`n − 1` denominator, zero for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Clone, Debug)]
pub struct ObjectiveEstimate {
    pub mean: f64,
    pub std: f64,
    pub per_trial: Vec<f64>,
}

/// Monte Carlo estimate of the finite objective over independent trials.
pub fn estimate_objective(
    g: &Graph,
    partition: &ClassPartition,
    policies: &[PolicyEnsemble],
    problem: &ProblemSpec,
    trials: usize,
    seed: u64,
) -> Result<ObjectiveEstimate> {
    if trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|tr| simulate(g, partition, policies, problem, trial_seed(seed, tr)).map(|s| s.objective))
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = mean_std(&per_trial);
    Ok(ObjectiveEstimate { mean, std, per_trial })
}
