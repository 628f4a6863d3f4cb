//! Two-systems mean-field approximation: class ensembles, multinomial
//! neighborhoods around the aggregate `Ĝ^∞`, forward maps and rollouts.

use rand::Rng;

use crate::combinatorics::{self, DEFAULT_ENUMERATION_CAP};
use crate::degree::{ClassMasses, DegreeDistribution};
use crate::error::{Error, Result};
use crate::problems::{check_simplex, mf_reward, ProblemSpec};
use crate::seeding;

/// Largest tolerated negative entry before clipping.
pub const CLIP_TOLERANCE: f64 = 1e-10;

/// Per-class state distributions: rows `0..k*` are degrees `1..=k*`, row
/// `k*` is the ∞ class.
#[derive(Clone, Debug, PartialEq)]
pub struct MfEnsemble {
    k_star: usize,
    d: usize,
    probs: Vec<f64>,
    pub t: usize,
}

impl MfEnsemble {
    pub fn new(per_class: Vec<Vec<f64>>) -> Result<Self> {
        if per_class.len() < 2 {
            return Err(Error::param("an ensemble needs at least one finite class and ∞"));
        }
        let d = per_class[0].len();
        for (row, mu) in per_class.iter().enumerate() {
            check_simplex(&format!("class row {row}"), mu, d)?;
        }
        Ok(Self {
            k_star: per_class.len() - 1,
            d,
            probs: per_class.concat(),
            t: 0,
        })
    }

    /// `mu` copied into every class.
    pub fn replicate(mu: &[f64], k_star: usize) -> Self {
        Self {
            k_star,
            d: mu.len(),
            probs: mu.repeat(k_star + 1),
            t: 0,
        }
    }

    pub fn initial(problem: &ProblemSpec, k_star: usize) -> Self {
        Self::replicate(&problem.mu0, k_star)
    }

    pub fn from_flat(k_star: usize, d: usize, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != (k_star + 1) * d {
            return Err(Error::dims(format!(
                "flat ensemble has length {}, expected {}",
                flat.len(),
                (k_star + 1) * d
            )));
        }
        let e = Self {
            k_star,
            d,
            probs: flat,
            t: 0,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        for row in 0..self.rows() {
            check_simplex(&format!("class row {row}"), self.class(row), self.d)?;
        }
        Ok(())
    }

    pub fn k_star(&self) -> usize {
        self.k_star
    }

    pub fn rows(&self) -> usize {
        self.k_star + 1
    }

    pub fn num_states(&self) -> usize {
        self.d
    }

    pub fn class(&self, row: usize) -> &[f64] {
        &self.probs[row * self.d..(row + 1) * self.d]
    }

    pub(crate) fn class_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.probs[row * self.d..(row + 1) * self.d]
    }

    /// Row-major `(k*+1)·d` vector.
    pub fn flat(&self) -> &[f64] {
        &self.probs
    }

    /// `Σ_row weights[row] · μ^row`.
    pub fn aggregate(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (row, &w) in weights.iter().enumerate().take(self.rows()) {
            for (o, p) in out.iter_mut().zip(self.class(row)) {
                *o += w * p;
            }
        }
        out
    }
}

/// One state-conditioned action distribution per degree class.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEnsemble {
    k_star: usize,
    d: usize,
    n_u: usize,
    probs: Vec<f64>,
}

impl PolicyEnsemble {
    pub fn new(k_star: usize, d: usize, n_u: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != (k_star + 1) * d * n_u {
            return Err(Error::dims("policy table has the wrong length"));
        }
        let p = Self {
            k_star,
            d,
            n_u,
            probs,
        };
        for row in 0..p.rows() {
            for x in 0..d {
                check_simplex(&format!("policy row ({row}, {x})"), p.row(row, x), n_u)?;
            }
        }
        Ok(p)
    }

    pub fn uniform(k_star: usize, d: usize, n_u: usize) -> Self {
        Self {
            k_star,
            d,
            n_u,
            probs: vec![1.0 / n_u as f64; (k_star + 1) * d * n_u],
        }
    }

    /// The same `d × |U|` matrix in every class.
    pub fn constant(k_star: usize, matrix: &[Vec<f64>]) -> Result<Self> {
        let d = matrix.len();
        let n_u = matrix.first().map_or(0, Vec::len);
        let one: Vec<f64> = matrix.concat();
        Self::new(k_star, d, n_u, one.repeat(k_star + 1))
    }

    pub fn from_fn(
        k_star: usize,
        d: usize,
        n_u: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity((k_star + 1) * d * n_u);
        for row in 0..=k_star {
            for x in 0..d {
                for u in 0..n_u {
                    probs.push(f(row, x, u));
                }
            }
        }
        Self::new(k_star, d, n_u, probs)
    }

    pub fn k_star(&self) -> usize {
        self.k_star
    }

    pub fn rows(&self) -> usize {
        self.k_star + 1
    }

    pub fn num_states(&self) -> usize {
        self.d
    }

    pub fn num_actions(&self) -> usize {
        self.n_u
    }

    pub fn row(&self, class: usize, x: usize) -> &[f64] {
        let start = (class * self.d + x) * self.n_u;
        &self.probs[start..start + self.n_u]
    }

    pub fn flat(&self) -> &[f64] {
        &self.probs
    }
}

/// Neighbor state counts `k·G`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NeighborhoodDist {
    pub counts: Vec<u32>,
}

impl NeighborhoodDist {
    pub fn degree(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn as_simplex(&self) -> Vec<f64> {
        let k = self.degree() as f64;
        self.counts.iter().map(|&c| c as f64 / k).collect()
    }
}

/// All `k·G ∈ N_0^d` with total `k`, lexicographically decreasing.
pub fn enumerate_neighborhoods(k: u32, d: usize) -> Result<Vec<NeighborhoodDist>> {
    enumerate_neighborhoods_capped(k, d, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_neighborhoods_capped(k: u32, d: usize, cap: u128) -> Result<Vec<NeighborhoodDist>> {
    if k == 0 || d == 0 {
        return Err(Error::param("neighborhoods need k ≥ 1 and d ≥ 1"));
    }
    Ok(combinatorics::compositions(k, d, cap)?
        .into_iter()
        .map(|counts| NeighborhoodDist { counts })
        .collect())
}

/// Multinomial probability of the neighborhood `g` under `k` draws from `p`.
pub fn multinomial_pmf(k: u32, p: &[f64], g: &NeighborhoodDist) -> Result<f64> {
    if g.degree() != k {
        return Err(Error::dims(format!("neighborhood has {} draws, expected {k}", g.degree())));
    }
    if p.len() != g.counts.len() {
        return Err(Error::dims("probability and count vectors differ in length"));
    }
    Ok(combinatorics::multinomial_pmf(p, &g.counts))
}

/// `Ĝ^∞ = Σ_row neighbor_mass[row] · μ^row`.
pub fn g_hat_infty(ensemble: &MfEnsemble, dist: &DegreeDistribution) -> Result<Vec<f64>> {
    let masses = dist.class_masses(ensemble.k_star() as u32)?;
    Ok(g_hat_from_masses(ensemble, &masses.neighbor))
}

pub fn g_hat_from_masses(ensemble: &MfEnsemble, neighbor_mass: &[f64]) -> Vec<f64> {
    let mut g = ensemble.aggregate(neighbor_mass);
    let s: f64 = g.iter().sum();
    if s > 0.0 {
        g.iter_mut().for_each(|v| *v /= s);
    }
    g
}

/// How the low-degree neighborhood law is integrated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepMode {
    Exact,
    Sampled { samples: usize, seed: u64 },
}

/// Degree-dependent constants of the limiting system at a fixed `k*`.
#[derive(Clone, Debug)]
pub struct LimitModel {
    k_star: u32,
    masses: ClassMasses,
    infinity_degree: u32,
    cap: u128,
}

impl LimitModel {
    pub fn new(dist: &DegreeDistribution, k_star: u32) -> Result<Self> {
        let masses = dist.class_masses(k_star)?;
        let infinity_degree = dist
            .tail_mean(k_star)
            .map_or(k_star + 1, |m| (m.round() as u32).max(k_star + 1));
        Ok(Self {
            k_star,
            masses,
            infinity_degree,
            cap: DEFAULT_ENUMERATION_CAP,
        })
    }

    /// Overrides the degree passed to the kernel for the ∞ class.
    pub fn with_infinity_degree(mut self, k: u32) -> Self {
        self.infinity_degree = k;
        self
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }

    pub fn k_star(&self) -> u32 {
        self.k_star
    }

    pub fn rows(&self) -> usize {
        self.k_star as usize + 1
    }

    pub fn masses(&self) -> &ClassMasses {
        &self.masses
    }

    pub fn node_mass(&self) -> &[f64] {
        &self.masses.node
    }

    pub fn neighbor_mass(&self) -> &[f64] {
        &self.masses.neighbor
    }

    pub fn infinity_degree(&self) -> u32 {
        self.infinity_degree
    }

    pub fn cap(&self) -> u128 {
        self.cap
    }

    /// Kernel degree argument of a class row.
    pub fn class_degree(&self, row: usize) -> u32 {
        if row < self.k_star as usize {
            row as u32 + 1
        } else {
            self.infinity_degree
        }
    }
}

/// Clips tiny negatives, renormalizes, and returns the pre-clip drift
/// `max(|Σ − 1|, max negative magnitude)`.
pub(crate) fn renormalize(p: &mut [f64]) -> Result<f64> {
    let mut neg: f64 = 0.0;
    for v in p.iter_mut() {
        if *v < 0.0 {
            neg = neg.max(-*v);
            *v = 0.0;
        }
    }
    if neg > CLIP_TOLERANCE {
        return Err(Error::Divergence(format!("negative probability of magnitude {neg:e}")));
    }
    let s: f64 = p.iter().sum();
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Divergence(format!("distribution mass {s} is not positive")));
    }
    p.iter_mut().for_each(|v| *v /= s);
    Ok(neg.max((s - 1.0).abs()))
}

fn check_inputs(
    ensemble: &MfEnsemble,
    policy: &PolicyEnsemble,
    problem: &ProblemSpec,
    model: &LimitModel,
) -> Result<()> {
    let d = problem.num_states();
    if ensemble.num_states() != d || policy.num_states() != d {
        return Err(Error::dims("state counts differ between problem, ensemble and policy"));
    }
    if policy.num_actions() != problem.num_actions() {
        return Err(Error::dims("policy action count differs from the problem"));
    }
    if ensemble.rows() != model.rows() || policy.rows() != model.rows() {
        return Err(Error::dims("class counts differ between ensemble, policy and k*"));
    }
    Ok(())
}

/// Accumulates `Σ_x μ(x) Σ_u π(u|x) P(·|x, u, g, k)` into `out` with weight `w`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn push_forward(
    problem: &ProblemSpec,
    mu: &[f64],
    policy: &PolicyEnsemble,
    row: usize,
    g: &[f64],
    k: u32,
    w: f64,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    for (x, &mx) in mu.iter().enumerate() {
        if mx == 0.0 {
            continue;
        }
        for (u, &pu) in policy.row(row, x).iter().enumerate() {
            if pu == 0.0 {
                continue;
            }
            problem.transition(x, u, g, k, scratch);
            let c = w * mx * pu;
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o += c * s;
            }
        }
    }
}

/// One kernel application from `ensemble`; returns the next ensemble (same
/// `t`) and the largest pre-clip drift.
pub fn mf_substep(
    ensemble: &MfEnsemble,
    policy: &PolicyEnsemble,
    problem: &ProblemSpec,
    model: &LimitModel,
    mode: StepMode,
    substep_key: u64,
) -> Result<(MfEnsemble, f64)> {
    check_inputs(ensemble, policy, problem, model)?;
    let d = problem.num_states();
    let g_hat = g_hat_from_masses(ensemble, model.neighbor_mass());
    let support: Vec<bool> = g_hat.iter().map(|&p| p > 0.0).collect();
    let mut next = ensemble.clone();
    let mut scratch = vec![0.0; d];
    let mut drift: f64 = 0.0;
    for row in 0..model.rows() {
        let k = model.class_degree(row);
        let mu = ensemble.class(row);
        let mut out = vec![0.0; d];
        if row == model.k_star() as usize {
            push_forward(problem, mu, policy, row, &g_hat, k, 1.0, &mut scratch, &mut out);
        } else {
            match mode {
                StepMode::Exact => {
                    let neighborhoods = combinatorics::compositions_on_support(k, &support, model.cap())?;
                    for counts in neighborhoods {
                        let w = combinatorics::multinomial_pmf(&g_hat, &counts);
                        if w == 0.0 {
                            continue;
                        }
                        let g: Vec<f64> = counts.iter().map(|&c| c as f64 / k as f64).collect();
                        push_forward(problem, mu, policy, row, &g, k, w, &mut scratch, &mut out);
                    }
                }
                StepMode::Sampled { samples, seed } => {
                    if samples == 0 {
                        return Err(Error::param("sampled mode needs at least one sample"));
                    }
                    let mut rng = seeding::stream(&[seed, ensemble.t as u64, substep_key, row as u64]);
                    let w = 1.0 / samples as f64;
                    let mut g = vec![0.0; d];
                    for _ in 0..samples {
                        sample_neighborhood(&g_hat, k, &mut rng, &mut g);
                        push_forward(problem, mu, policy, row, &g, k, w, &mut scratch, &mut out);
                    }
                }
            }
        }
        drift = drift.max(renormalize(&mut out)?);
        next.class_mut(row).copy_from_slice(&out);
    }
    Ok((next, drift))
}

/// Draws `k` i.i.d. neighbor states from `p` and stores the empirical simplex.
fn sample_neighborhood<R: Rng + ?Sized>(p: &[f64], k: u32, rng: &mut R, g: &mut [f64]) {
    g.fill(0.0);
    let inc = 1.0 / k as f64;
    for _ in 0..k {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = p.len() - 1;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                pick = i;
                break;
            }
        }
        g[pick] += inc;
    }
}

/// Result of one decision step of the limiting system.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub next: MfEnsemble,
    /// Limiting reward summed over the kernel sub-steps.
    pub reward: f64,
    pub drift: f64,
}

/// Advances one decision step (all kernel sub-steps) and collects the reward
/// evaluated at each sub-step's pre-state.
pub fn mf_decision_step(
    ensemble: &MfEnsemble,
    policy: &PolicyEnsemble,
    problem: &ProblemSpec,
    model: &LimitModel,
    mode: StepMode,
) -> Result<StepOutcome> {
    let mut current = ensemble.clone();
    let mut reward = 0.0;
    let mut drift: f64 = 0.0;
    for sub in 0..problem.substeps {
        let g_hat = g_hat_from_masses(&current, model.neighbor_mass());
        reward += mf_reward(problem, &current, policy, &g_hat, model.node_mass())?;
        let (next, dr) = mf_substep(&current, policy, problem, model, mode, sub as u64)?;
        drift = drift.max(dr);
        current = next;
    }
    current.t = ensemble.t + 1;
    Ok(StepOutcome {
        next: current,
        reward,
        drift,
    })
}

/// The forward map of one decision step.
pub fn mf_step(
    ensemble: &MfEnsemble,
    policy: &PolicyEnsemble,
    problem: &ProblemSpec,
    model: &LimitModel,
    mode: StepMode,
) -> Result<MfEnsemble> {
    mf_decision_step(ensemble, policy, problem, model, mode).map(|o| o.next)
}

/// Policy at decision time `t`: a single entry is broadcast.
pub(crate) fn policy_at(policies: &[PolicyEnsemble], t: usize) -> &PolicyEnsemble {
    if policies.len() == 1 {
        &policies[0]
    } else {
        &policies[t]
    }
}

pub(crate) fn check_schedule(policies: &[PolicyEnsemble], horizon: usize) -> Result<()> {
    if policies.is_empty() && horizon > 0 {
        return Err(Error::param("empty policy sequence"));
    }
    if policies.len() > 1 && policies.len() < horizon {
        return Err(Error::param(format!(
            "policy sequence has {} entries for horizon {horizon}",
            policies.len()
        )));
    }
    Ok(())
}

/// A limiting trajectory `μ_0 .. μ_T` with its per-step rewards.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub trajectory: Vec<MfEnsemble>,
    pub rewards: Vec<f64>,
    pub objective: f64,
    pub max_drift: f64,
}

impl Rollout {
    /// Node-mass weighted aggregate at each visited time.
    pub fn aggregates(&self, node_mass: &[f64]) -> Vec<Vec<f64>> {
        self.trajectory.iter().map(|e| e.aggregate(node_mass)).collect()
    }
}

/// Runs the problem's horizon from `μ_0` replicated across classes;
/// `J = Σ_{t<T} r(μ_t, π_t)`.
pub fn rollout(
    policies: &[PolicyEnsemble],
    problem: &ProblemSpec,
    model: &LimitModel,
    mode: StepMode,
) -> Result<Rollout> {
    let horizon = problem.horizon;
    check_schedule(policies, horizon)?;
    let mut current = MfEnsemble::initial(problem, model.k_star() as usize);
    let mut trajectory = Vec::with_capacity(horizon + 1);
    let mut rewards = Vec::with_capacity(horizon);
    let mut max_drift: f64 = 0.0;
    trajectory.push(current.clone());
    for t in 0..horizon {
        let out = mf_decision_step(&current, policy_at(policies, t), problem, model, mode)?;
        rewards.push(out.reward);
        max_drift = max_drift.max(out.drift);
        current = out.next;
        trajectory.push(current.clone());
    }
    Ok(Rollout {
        objective: rewards.iter().sum(),
        trajectory,
        rewards,
        max_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{problem_by_name, EpidemicParams, NO_PROTECT, PROTECT};
    use std::collections::BTreeMap;

    fn explicit(pairs: &[(u32, f64)]) -> DegreeDistribution {
        DegreeDistribution::explicit(&pairs.iter().copied().collect::<BTreeMap<_, _>>()).unwrap()
    }

    #[test]
    fn neighborhood_enumeration_examples() {
        let n = enumerate_neighborhoods(1, 2).unwrap();
        assert_eq!(n.iter().map(|g| g.counts.clone()).collect::<Vec<_>>(), vec![vec![1, 0], vec![0, 1]]);
        let n = enumerate_neighborhoods(2, 2).unwrap();
        assert_eq!(
            n.iter().map(|g| g.counts.clone()).collect::<Vec<_>>(),
            vec![vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        assert_eq!(enumerate_neighborhoods(10, 5).unwrap().len(), 1001);
        assert!(matches!(
            enumerate_neighborhoods_capped(40, 6, 1000),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn multinomial_examples() {
        let g = NeighborhoodDist { counts: vec![1, 2] };
        assert!((multinomial_pmf(3, &[0.2, 0.8], &g).unwrap() - 0.384).abs() < 1e-15);
        let e = NeighborhoodDist { counts: vec![0, 1, 0] };
        assert_eq!(multinomial_pmf(1, &[0.2, 0.5, 0.3], &e).unwrap(), 0.5);
        assert!(multinomial_pmf(2, &[0.2, 0.8], &g).is_err());
        let all = NeighborhoodDist { counts: vec![0, 4] };
        assert_eq!(multinomial_pmf(4, &[0.0, 1.0], &all).unwrap(), 1.0);
    }

    #[test]
    fn g_hat_examples() {
        let dist = explicit(&[(1, 0.5), (3, 0.5)]);
        let e = MfEnsemble::new(vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        let g = g_hat_infty(&e, &dist).unwrap();
        assert!((g[0] - 0.25).abs() < 1e-15 && (g[1] - 0.75).abs() < 1e-15);

        let same = MfEnsemble::replicate(&[0.3, 0.7], 4);
        let g = g_hat_infty(&same, &DegreeDistribution::zeta(2.5).unwrap()).unwrap();
        assert!((g[0] - 0.3).abs() < 1e-12);

        let point = DegreeDistribution::point_mass(2).unwrap();
        let e = MfEnsemble::new(vec![vec![1.0, 0.0], vec![0.2, 0.8], vec![0.0, 1.0]]).unwrap();
        assert_eq!(g_hat_infty(&e, &point).unwrap(), vec![0.2, 0.8]);
    }

    #[test]
    fn healthy_population_stays_healthy() {
        let p = problem_by_name("sis").unwrap().with_mu0(vec![1.0, 0.0]).unwrap();
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 4).unwrap();
        let pol = PolicyEnsemble::uniform(4, 2, 2);
        let r = rollout(&[pol], &p, &model, StepMode::Exact).unwrap();
        for e in &r.trajectory {
            for row in 0..e.rows() {
                assert_eq!(e.class(row), &[1.0, 0.0]);
            }
        }
        assert!((r.objective - (-0.5 * 0.5 * 50.0)).abs() < 1e-9);
    }

    #[test]
    fn always_protect_decays_geometrically() {
        let p = problem_by_name("sis").unwrap();
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 3).unwrap();
        let protect = PolicyEnsemble::constant(3, &[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let r = rollout(&[protect], &p, &model, StepMode::Exact).unwrap();
        let mut want = 0.0;
        for t in 0..50 {
            let infected = 0.4 * 0.9f64.powi(t);
            assert!((r.trajectory[t as usize].class(2)[1] - infected).abs() < 1e-12);
            want -= 0.5 + infected;
        }
        assert!((r.objective - want).abs() < 1e-9);
    }

    #[test]
    fn zero_horizon_rollout() {
        let p = problem_by_name("sis").unwrap().with_horizon(0);
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 2).unwrap();
        let r = rollout(&[], &p, &model, StepMode::Exact).unwrap();
        assert_eq!(r.trajectory.len(), 1);
        assert_eq!(r.objective, 0.0);
    }

    /// Literal sum over ordered neighbor state sequences `d^k`.
    fn brute_force_step(
        p: &ProblemSpec,
        e: &MfEnsemble,
        pol: &PolicyEnsemble,
        dist: &DegreeDistribution,
        k_star: u32,
    ) -> Vec<Vec<f64>> {
        let d = p.num_states();
        let masses = dist.class_masses(k_star).unwrap();
        let mut g_hat = vec![0.0; d];
        for row in 0..=k_star as usize {
            for x in 0..d {
                g_hat[x] += masses.neighbor[row] * e.class(row)[x];
            }
        }
        let k_inf = dist.tail_mean(k_star).unwrap().round() as u32;
        let mut out = Vec::new();
        for row in 0..=k_star as usize {
            let mut next = vec![0.0; d];
            let mut buf = vec![0.0; d];
            let mut step = |g: &[f64], k: u32, w: f64| {
                for x in 0..d {
                    for u in 0..p.num_actions() {
                        p.transition(x, u, g, k, &mut buf);
                        for y in 0..d {
                            next[y] += w * e.class(row)[x] * pol.row(row, x)[u] * buf[y];
                        }
                    }
                }
            };
            if row == k_star as usize {
                step(&g_hat, k_inf, 1.0);
            } else {
                let k = row as u32 + 1;
                for code in 0..d.pow(k) {
                    let mut c = code;
                    let mut g = vec![0.0; d];
                    let mut w = 1.0;
                    for _ in 0..k {
                        let s = c % d;
                        c /= d;
                        g[s] += 1.0 / k as f64;
                        w *= g_hat[s];
                    }
                    step(&g, k, w);
                }
            }
            out.push(next);
        }
        out
    }

    #[test]
    fn exact_step_matches_brute_force() {
        let dist = DegreeDistribution::zeta(2.5).unwrap();
        for name in ["sis", "sir", "color"] {
            let p = problem_by_name(name).unwrap();
            let k_star = 2;
            let model = LimitModel::new(&dist, k_star).unwrap();
            let d = p.num_states();
            let pol = PolicyEnsemble::from_fn(2, d, p.num_actions(), |row, x, u| {
                let raw: Vec<f64> = (0..p.num_actions()).map(|v| 1.0 + ((row + 2 * x + 3 * v) % 4) as f64).collect();
                raw[u] / raw.iter().sum::<f64>()
            })
            .unwrap();
            let mut e = MfEnsemble::initial(&p, 2);
            for _ in 0..3 {
                let want = brute_force_step(&p, &e, &pol, &dist, k_star);
                let (got, _) = mf_substep(&e, &pol, &p, &model, StepMode::Exact, 0).unwrap();
                for row in 0..3 {
                    for x in 0..d {
                        assert!((got.class(row)[x] - want[row][x]).abs() < 1e-13, "{name}");
                    }
                }
                e = got;
            }
        }
    }

    #[test]
    fn sampled_step_is_deterministic_and_close() {
        let p = problem_by_name("sis").unwrap();
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 5).unwrap();
        let pol = PolicyEnsemble::uniform(5, 2, 2);
        let e = MfEnsemble::initial(&p, 5);
        let exact = mf_step(&e, &pol, &p, &model, StepMode::Exact).unwrap();
        let mode = StepMode::Sampled { samples: 10_000, seed: 3 };
        let a = mf_step(&e, &pol, &p, &model, mode).unwrap();
        let b = mf_step(&e, &pol, &p, &model, mode).unwrap();
        assert_eq!(a, b);
        for row in 0..6 {
            let tv: f64 = a.class(row).iter().zip(exact.class(row)).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
            assert!(tv <= 5.0 / 100.0, "row {row}: {tv}");
        }
    }

    #[test]
    fn policy_dimension_errors() {
        let p = problem_by_name("sis").unwrap();
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 3).unwrap();
        let wrong = PolicyEnsemble::uniform(2, 2, 2);
        let e = MfEnsemble::initial(&p, 3);
        assert!(mf_step(&e, &wrong, &p, &model, StepMode::Exact).is_err());
        assert!(PolicyEnsemble::constant(1, &[vec![0.5, 0.6], vec![1.0, 0.0]]).is_err());
        let seq = vec![PolicyEnsemble::uniform(3, 2, 2); 3];
        assert!(rollout(&seq, &p, &model, StepMode::Exact).is_err());
    }

    #[test]
    fn never_protect_all_healthy_reward_is_zero() {
        let p = crate::problems::sis_problem(EpidemicParams {
            mu0_i: 0.0,
            ..EpidemicParams::sis_defaults()
        })
        .unwrap();
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 3).unwrap();
        let mut m = vec![vec![0.0; 2]; 2];
        m[0][NO_PROTECT] = 1.0;
        m[1][PROTECT] = 1.0;
        let pol = PolicyEnsemble::constant(3, &m).unwrap();
        let r = rollout(&[pol], &p, &model, StepMode::Exact).unwrap();
        assert_eq!(r.objective, 0.0);
    }
}
