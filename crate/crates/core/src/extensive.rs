//! Extensive approximation: per degree class `k ≤ k*`, the joint law of
//! (neighborhood counts, own state), advanced through the degree split of
//! the neighbors (`𝒞^k`), their state-degree table (`𝒜^k_2`) and their
//! state-transition tensor (`𝒜^k_3`). The ∞ class follows the two-systems
//! dynamics.

use crate::combinatorics::{self, binomial, multinomial_coefficient, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::meanfield::{
    check_schedule, g_hat_from_masses, policy_at, push_forward, renormalize, LimitModel,
    MfEnsemble, NeighborhoodDist, PolicyEnsemble,
};
use crate::problems::{mf_reward, ProblemSpec};

/// Refuse configurations whose `𝒜₃` enumeration would exceed this size.
pub const FEASIBILITY_CAP: u128 = 10_000_000;

/// Largest tolerated mass drift before renormalizing a joint.
pub const JOINT_DRIFT_TOLERANCE: f64 = 1e-6;

/// Integer matrix `d × (k*+1)`: neighbors by (state, degree class).
pub type StateDegreeTable = Vec<Vec<u32>>;

/// Integer tensor `[i][j][m]`: neighbors moving from state `j` to `i` in class `m`.
pub type TransitionTensor = Vec<Vec<Vec<u32>>>;

/// Dense lookup from neighborhood counts to their enumeration index.
#[derive(Clone, Debug)]
struct CountIndex {
    k: u32,
    lookup: Vec<usize>,
}

impl CountIndex {
    fn new(k: u32, neighborhoods: &[NeighborhoodDist]) -> Self {
        let d = neighborhoods.first().map_or(0, |g| g.counts.len());
        let mut lookup = vec![usize::MAX; (k as usize + 1).pow(d as u32)];
        let mut this = Self { k, lookup: Vec::new() };
        for (i, g) in neighborhoods.iter().enumerate() {
            lookup[this.code(&g.counts)] = i;
        }
        this.lookup = lookup;
        this
    }

    fn code(&self, counts: &[u32]) -> usize {
        let base = self.k as usize + 1;
        counts.iter().rev().fold(0, |acc, &c| acc * base + c as usize)
    }
}

/// Joint law of (neighborhood counts, own state) for one degree class.
#[derive(Clone, Debug, PartialEq)]
pub struct JointNeighborhoodState {
    pub k: u32,
    pub neighborhoods: Vec<NeighborhoodDist>,
    d: usize,
    /// Row-major `[neighborhood][state]`.
    table: Vec<f64>,
}

impl JointNeighborhoodState {
    /// `μ(x) · Mult(k, g)(G)`.
    pub fn product(k: u32, mu: &[f64], g: &[f64], cap: u128) -> Result<Self> {
        let d = mu.len();
        let neighborhoods: Vec<NeighborhoodDist> = combinatorics::compositions(k, d, cap)?
            .into_iter()
            .map(|counts| NeighborhoodDist { counts })
            .collect();
        let mut table = Vec::with_capacity(neighborhoods.len() * d);
        for nb in &neighborhoods {
            let w = combinatorics::multinomial_pmf(g, &nb.counts);
            table.extend(mu.iter().map(|m| m * w));
        }
        Ok(Self {
            k,
            neighborhoods,
            d,
            table,
        })
    }

    pub fn num_states(&self) -> usize {
        self.d
    }

    pub fn prob(&self, g_index: usize, x: usize) -> f64 {
        self.table[g_index * self.d + x]
    }

    pub fn entries(&self) -> &[f64] {
        &self.table
    }

    pub fn total(&self) -> f64 {
        self.table.iter().sum()
    }

    /// Marginal law of the own state.
    pub fn state_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for row in self.table.chunks(self.d) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    /// Marginal law of the neighborhood counts.
    pub fn neighborhood_marginal(&self) -> Vec<f64> {
        self.table.chunks(self.d).map(|r| r.iter().sum()).collect()
    }

    /// `P(G | x)`, or `None` if state `x` carries no mass.
    pub fn neighborhood_given_state(&self, x: usize) -> Option<Vec<f64>> {
        let col: Vec<f64> = self.table.chunks(self.d).map(|r| r[x]).collect();
        let s: f64 = col.iter().sum();
        (s > 0.0).then(|| col.into_iter().map(|v| v / s).collect())
    }
}

/// All splits `c` of `k` neighbors over the classes `1..=k*, ∞`.
pub fn enumerate_compositions(k: u32, k_star: u32) -> Result<Vec<Vec<u32>>> {
    combinatorics::compositions(k, k_star as usize + 1, DEFAULT_ENUMERATION_CAP)
}

/// Tables with row sums `g_prime` and column sums `c`.
pub fn enumerate_a2(g_prime: &NeighborhoodDist, c: &[u32]) -> Vec<StateDegreeTable> {
    let mut out = Vec::new();
    if g_prime.degree() != c.iter().sum::<u32>() {
        return out;
    }
    let mut current = vec![vec![0u32; c.len()]; g_prime.counts.len()];
    let mut remaining = c.to_vec();
    a2_rows(&g_prime.counts, 0, &mut remaining, &mut current, &mut out);
    out
}

fn a2_rows(
    rows: &[u32],
    j: usize,
    remaining: &mut [u32],
    current: &mut StateDegreeTable,
    out: &mut Vec<StateDegreeTable>,
) {
    if j == rows.len() {
        if remaining.iter().all(|&r| r == 0) {
            out.push(current.clone());
        }
        return;
    }
    a2_cells(rows, j, 0, rows[j], remaining, current, out);
}

fn a2_cells(
    rows: &[u32],
    j: usize,
    m: usize,
    left: u32,
    remaining: &mut [u32],
    current: &mut StateDegreeTable,
    out: &mut Vec<StateDegreeTable>,
) {
    if m + 1 == remaining.len() {
        if left <= remaining[m] {
            current[j][m] = left;
            remaining[m] -= left;
            a2_rows(rows, j + 1, remaining, current, out);
            remaining[m] += left;
            current[j][m] = 0;
        }
        return;
    }
    for v in (0..=left.min(remaining[m])).rev() {
        current[j][m] = v;
        remaining[m] -= v;
        a2_cells(rows, j, m + 1, left - v, remaining, current, out);
        remaining[m] += v;
    }
    current[j][m] = 0;
}

/// Tensors `a[i][j][m]` with `Σ_{j,m} = g_i`, `Σ_{i,m} = g'_j`, `Σ_{i,j} = c_m`.
pub fn enumerate_a3(g: &NeighborhoodDist, g_prime: &NeighborhoodDist, c: &[u32]) -> Vec<TransitionTensor> {
    let d = g.counts.len();
    let kk = c.len();
    let mut out = Vec::new();
    for a2 in enumerate_a2(g_prime, c) {
        let cells: Vec<(usize, usize)> = (0..d).flat_map(|j| (0..kk).map(move |m| (j, m))).collect();
        let mut tensor = vec![vec![vec![0u32; kk]; d]; d];
        let mut left = g.counts.clone();
        a3_cells(&a2, &cells, 0, &mut left, &mut tensor, &mut out);
    }
    out
}

fn a3_cells(
    a2: &StateDegreeTable,
    cells: &[(usize, usize)],
    pos: usize,
    left: &mut [u32],
    tensor: &mut TransitionTensor,
    out: &mut Vec<TransitionTensor>,
) {
    if pos == cells.len() {
        if left.iter().all(|&v| v == 0) {
            out.push(tensor.clone());
        }
        return;
    }
    let (j, m) = cells[pos];
    let parts = left.len();
    // Split the a2[j][m] neighbors over target states within the budget `left`.
    for split in combinatorics::compositions(a2[j][m], parts, u128::MAX).expect("uncapped") {
        if split.iter().zip(left.iter()).any(|(s, l)| s > l) {
            continue;
        }
        for i in 0..parts {
            tensor[i][j][m] = split[i];
            left[i] -= split[i];
        }
        a3_cells(a2, cells, pos + 1, left, tensor, out);
        for i in 0..parts {
            left[i] += split[i];
            tensor[i][j][m] = 0;
        }
    }
}

/// Upper bound on the total number of `𝒜₃` tensors over all classes.
pub fn a3_enumeration_size(d: usize, k_star: u32) -> u128 {
    let cells = (d * d) as u64 * (k_star as u64 + 1);
    (1..=k_star as u64)
        .map(|k| binomial(k + cells - 1, k))
        .fold(0u128, |a, b| a.saturating_add(b))
}

pub fn check_feasible(d: usize, k_star: u32) -> Result<()> {
    let size = a3_enumeration_size(d, k_star);
    if size > FEASIBILITY_CAP {
        return Err(Error::Capacity {
            what: "extensive approximation",
            size,
            cap: FEASIBILITY_CAP,
            hint: "use the two-systems approximation or lower k*",
        });
    }
    Ok(())
}

/// `P(deg = m | neighbor in state s)` from neighbor masses and class laws.
pub fn cond_degree_given_state(m: usize, s: usize, ensemble: &MfEnsemble, neighbor_mass: &[f64]) -> Result<f64> {
    let denom: f64 = (0..ensemble.rows()).map(|r| neighbor_mass[r] * ensemble.class(r)[s]).sum();
    if denom <= 0.0 {
        return Err(Error::UndefinedConditional { state: s });
    }
    Ok(neighbor_mass[m] * ensemble.class(m)[s] / denom)
}

/// Joint laws for classes `1..=k*` plus the ∞-class distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtensiveState {
    pub joints: Vec<JointNeighborhoodState>,
    pub infinity: Vec<f64>,
    pub t: usize,
}

impl ExtensiveState {
    /// Product initialization from `μ_0` in every class.
    pub fn initial(problem: &ProblemSpec, model: &LimitModel) -> Result<Self> {
        check_feasible(problem.num_states(), model.k_star())?;
        let mu0 = &problem.mu0;
        let joints = (1..=model.k_star())
            .map(|k| JointNeighborhoodState::product(k, mu0, mu0, model.cap()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            joints,
            infinity: mu0.clone(),
            t: 0,
        })
    }

    /// Class marginals as an ensemble.
    pub fn ensemble(&self) -> MfEnsemble {
        let mut rows: Vec<Vec<f64>> = self.joints.iter().map(|j| j.state_marginal()).collect();
        rows.push(self.infinity.clone());
        let d = self.infinity.len();
        let mut e = MfEnsemble::from_flat(rows.len() - 1, d, rows.concat())
            .unwrap_or_else(|_| MfEnsemble::replicate(&self.infinity, self.joints.len()));
        e.t = self.t;
        e
    }
}

/// How the neighbor transition sums are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ExtensiveRoute {
    /// Convolution of per-cell multinomials for each state-degree table.
    #[default]
    Convolution,
    /// Literal sums over `𝒞^k`, `𝒜₂` and `𝒜₃`; small instances only.
    Enumeration,
}

/// Per-neighbor quantities shared by every class update.
struct NeighborLaws {
    /// `w[j][m] = q_m μ^m(s_j)`.
    w: Vec<Vec<f64>>,
    /// `p[j][m] = w[j][m] / Σ_m w[j][m]`.
    p: Vec<Vec<f64>>,
    /// `trans[m][j][i]`: next-state law of a class-m neighbor in state `s_j`.
    trans: Vec<Vec<Vec<f64>>>,
}

fn neighbor_laws(
    state: &ExtensiveState,
    ensemble: &MfEnsemble,
    policy: &PolicyEnsemble,
    problem: &ProblemSpec,
    model: &LimitModel,
    g_hat: &[f64],
) -> NeighborLaws {
    let d = problem.num_states();
    let rows = model.rows();
    let q = model.neighbor_mass();
    let mut w = vec![vec![0.0; rows]; d];
    for (j, wj) in w.iter_mut().enumerate() {
        for (m, wjm) in wj.iter_mut().enumerate() {
            *wjm = q[m] * ensemble.class(m)[j];
        }
    }
    let p = w
        .iter()
        .map(|wj| {
            let s: f64 = wj.iter().sum();
            wj.iter().map(|v| if s > 0.0 { v / s } else { 0.0 }).collect()
        })
        .collect();
    let mut scratch = vec![0.0; d];
    let mut trans = vec![vec![vec![0.0; d]; d]; rows];
    for (m, tm) in trans.iter_mut().enumerate() {
        for (j, tmj) in tm.iter_mut().enumerate() {
            let mut point = vec![0.0; d];
            point[j] = 1.0;
            if m == model.k_star() as usize {
                push_forward(problem, &point, policy, m, g_hat, model.class_degree(m), 1.0, &mut scratch, tmj);
                continue;
            }
            let joint = &state.joints[m];
            let Some(cond) = joint.neighborhood_given_state(j) else {
                continue;
            };
            for (nb, &pg) in joint.neighborhoods.iter().zip(&cond) {
                if pg > 0.0 {
                    let g = nb.as_simplex();
                    push_forward(problem, &point, policy, m, &g, joint.k, pg, &mut scratch, tmj);
                }
            }
        }
    }
    NeighborLaws { w, p, trans }
}

/// `M[G'][G] = Σ_c P(c | G') R(G | G', c)` for one class.
fn neighborhood_transition(
    k: u32,
    neighborhoods: &[NeighborhoodDist],
    laws: &NeighborLaws,
    route: ExtensiveRoute,
) -> Vec<Vec<f64>> {
    let index = CountIndex::new(k, neighborhoods);
    match route {
        ExtensiveRoute::Convolution => neighborhoods
            .iter()
            .map(|gp| transition_row_convolution(k, gp, laws, &index, neighborhoods.len()))
            .collect(),
        ExtensiveRoute::Enumeration => neighborhoods
            .iter()
            .map(|gp| transition_row_enumeration(k, gp, laws, neighborhoods))
            .collect(),
    }
}

fn table_weights(a2: &StateDegreeTable, laws: &NeighborLaws, g_prime: &NeighborhoodDist) -> (f64, f64) {
    let mut p2 = 1.0;
    let mut w = 1.0;
    for (j, row) in a2.iter().enumerate() {
        if g_prime.counts[j] > 0 {
            p2 *= multinomial_coefficient(row);
        }
        for (m, &a) in row.iter().enumerate() {
            if a > 0 {
                p2 *= laws.p[j][m].powi(a as i32);
                w *= laws.w[j][m].powi(a as i32);
            }
        }
    }
    (p2, w)
}

fn transition_row_convolution(
    k: u32,
    g_prime: &NeighborhoodDist,
    laws: &NeighborLaws,
    index: &CountIndex,
    n_g: usize,
) -> Vec<f64> {
    let d = g_prime.counts.len();
    let classes = laws.w[0].len();
    // Per class split c: (Σ P2, Σ W, Σ W·Q).
    let mut by_c: Vec<(Vec<u32>, f64, f64, Vec<f64>)> = Vec::new();
    let rows: Vec<Vec<Vec<u32>>> = g_prime
        .counts
        .iter()
        .map(|&g| combinatorics::compositions(g, classes, u128::MAX).expect("uncapped"))
        .collect();
    let mut pick = vec![0usize; d];
    let base = k as usize + 1;
    let radix = base.pow(d as u32);
    loop {
        let a2: StateDegreeTable = (0..d).map(|j| rows[j][pick[j]].clone()).collect();
        let c: Vec<u32> = (0..classes).map(|m| a2.iter().map(|r| r[m]).sum()).collect();
        let (p2, w) = table_weights(&a2, laws, g_prime);
        let slot = match by_c.iter().position(|e| e.0 == c) {
            Some(s) => s,
            None => {
                by_c.push((c, 0.0, 0.0, vec![0.0; n_g]));
                by_c.len() - 1
            }
        };
        by_c[slot].1 += p2;
        if w > 0.0 {
            // Distribution of next-step counts: convolve one neighbor at a time.
            let mut dist = vec![0.0; radix];
            dist[0] = 1.0;
            let mut strides = vec![1usize; d];
            for i in 1..d {
                strides[i] = strides[i - 1] * base;
            }
            for (j, row) in a2.iter().enumerate() {
                for (m, &a) in row.iter().enumerate() {
                    let t = &laws.trans[m][j];
                    for _ in 0..a {
                        let mut next = vec![0.0; radix];
                        for (code, &pv) in dist.iter().enumerate() {
                            if pv == 0.0 {
                                continue;
                            }
                            for (i, &ti) in t.iter().enumerate() {
                                if ti > 0.0 {
                                    next[code + strides[i]] += pv * ti;
                                }
                            }
                        }
                        dist = next;
                    }
                }
            }
            let entry = &mut by_c[slot];
            entry.2 += w;
            for (code, &pv) in dist.iter().enumerate() {
                if pv > 0.0 {
                    entry.3[index.lookup[code]] += w * pv;
                }
            }
        }
        // Advance the mixed-radix pick over per-row compositions.
        let mut j = 0;
        loop {
            if j == d {
                return finish_row(by_c, n_g);
            }
            pick[j] += 1;
            if pick[j] < rows[j].len() {
                break;
            }
            pick[j] = 0;
            j += 1;
        }
    }
}

fn finish_row(by_c: Vec<(Vec<u32>, f64, f64, Vec<f64>)>, n_g: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_g];
    for (_, pc, z, acc) in by_c {
        if z > 0.0 && pc > 0.0 {
            for (o, a) in out.iter_mut().zip(acc) {
                *o += pc * a / z;
            }
        }
    }
    out
}

fn transition_row_enumeration(
    k: u32,
    g_prime: &NeighborhoodDist,
    laws: &NeighborLaws,
    neighborhoods: &[NeighborhoodDist],
) -> Vec<f64> {
    let classes = laws.w[0].len();
    let d = g_prime.counts.len();
    let mut out = vec![0.0; neighborhoods.len()];
    for c in combinatorics::compositions(k, classes, u128::MAX).expect("uncapped") {
        let tables = enumerate_a2(g_prime, &c);
        let mut pc = 0.0;
        let mut z = 0.0;
        for a2 in &tables {
            let (p2, w) = table_weights(a2, laws, g_prime);
            pc += p2;
            z += w;
        }
        if pc == 0.0 || z == 0.0 {
            continue;
        }
        for (gi, g) in neighborhoods.iter().enumerate() {
            let mut num = 0.0;
            for a3 in enumerate_a3(g, g_prime, &c) {
                let mut term = 1.0;
                for j in 0..d {
                    for m in 0..classes {
                        let cell: Vec<u32> = (0..d).map(|i| a3[i][j][m]).collect();
                        term *= multinomial_coefficient(&cell);
                        for (i, &a) in cell.iter().enumerate() {
                            if a > 0 {
                                term *= (laws.w[j][m] * laws.trans[m][j][i]).powi(a as i32);
                            }
                        }
                    }
                }
                num += term;
            }
            out[gi] += pc * num / z;
        }
    }
    out
}

fn check_inputs(state: &ExtensiveState, problem: &ProblemSpec, model: &LimitModel) -> Result<()> {
    let d = problem.num_states();
    if state.joints.len() != model.k_star() as usize || state.infinity.len() != d {
        return Err(Error::dims("extensive state does not match k* or the state set"));
    }
    for (row, j) in state.joints.iter().enumerate() {
        if j.k != row as u32 + 1 || j.num_states() != d {
            return Err(Error::dims(format!("joint for row {row} has the wrong shape")));
        }
    }
    Ok(())
}

/// One kernel application. Returns the next state and the largest
/// renormalization drift.
pub fn extensive_substep(
    state: &ExtensiveState,
    policy: &PolicyEnsemble,
    problem: &ProblemSpec,
    model: &LimitModel,
    route: ExtensiveRoute,
) -> Result<(ExtensiveState, f64)> {
    check_inputs(state, problem, model)?;
    let d = problem.num_states();
    let ensemble = state.ensemble();
    let g_hat = g_hat_from_masses(&ensemble, model.neighbor_mass());
    let laws = neighbor_laws(state, &ensemble, policy, problem, model, &g_hat);
    let mut scratch = vec![0.0; d];
    let mut drift: f64 = 0.0;
    let mut joints = Vec::with_capacity(state.joints.len());
    for (row, joint) in state.joints.iter().enumerate() {
        let k = joint.k;
        let m_trans = neighborhood_transition(k, &joint.neighborhoods, &laws, route);
        let mut table = vec![0.0; joint.table.len()];
        for (gpi, gp) in joint.neighborhoods.iter().enumerate() {
            let g_simplex = gp.as_simplex();
            for xp in 0..d {
                let mass = joint.prob(gpi, xp);
                if mass == 0.0 {
                    continue;
                }
                let mut root = vec![0.0; d];
                let mut point = vec![0.0; d];
                point[xp] = 1.0;
                push_forward(problem, &point, policy, row, &g_simplex, k, 1.0, &mut scratch, &mut root);
                for (gi, &mg) in m_trans[gpi].iter().enumerate() {
                    if mg == 0.0 {
                        continue;
                    }
                    for (x, &rx) in root.iter().enumerate() {
                        table[gi * d + x] += mass * rx * mg;
                    }
                }
            }
        }
        let total: f64 = table.iter().sum();
        let dr = (total - 1.0).abs();
        if dr > JOINT_DRIFT_TOLERANCE {
            return Err(Error::Divergence(format!(
                "joint of class {k} lost mass: total {total}"
            )));
        }
        drift = drift.max(renormalize(&mut table)?);
        joints.push(JointNeighborhoodState {
            k,
            neighborhoods: joint.neighborhoods.clone(),
            d,
            table,
        });
    }
    let inf_row = model.k_star() as usize;
    let mut infinity = vec![0.0; d];
    push_forward(
        problem,
        &state.infinity,
        policy,
        inf_row,
        &g_hat,
        model.class_degree(inf_row),
        1.0,
        &mut scratch,
        &mut infinity,
    );
    drift = drift.max(renormalize(&mut infinity)?);
    Ok((
        ExtensiveState {
            joints,
            infinity,
            t: state.t,
        },
        drift,
    ))
}

/// One decision step (all sub-steps) with the reward at each sub-step's
/// pre-state.
pub fn extensive_step(
    state: &ExtensiveState,
    policy: &PolicyEnsemble,
    problem: &ProblemSpec,
    model: &LimitModel,
    route: ExtensiveRoute,
) -> Result<(ExtensiveState, f64, f64)> {
    let mut current = state.clone();
    let mut reward = 0.0;
    let mut drift: f64 = 0.0;
    for _ in 0..problem.substeps {
        let e = current.ensemble();
        let g_hat = g_hat_from_masses(&e, model.neighbor_mass());
        reward += mf_reward(problem, &e, policy, &g_hat, model.node_mass())?;
        let (next, dr) = extensive_substep(&current, policy, problem, model, route)?;
        drift = drift.max(dr);
        current = next;
    }
    current.t = state.t + 1;
    Ok((current, reward, drift))
}

#[derive(Clone, Debug)]
pub struct ExtensiveRollout {
    pub states: Vec<ExtensiveState>,
    pub trajectory: Vec<MfEnsemble>,
    pub rewards: Vec<f64>,
    pub objective: f64,
    pub max_drift: f64,
}

impl ExtensiveRollout {
    pub fn aggregates(&self, node_mass: &[f64]) -> Vec<Vec<f64>> {
        self.trajectory.iter().map(|e| e.aggregate(node_mass)).collect()
    }
}

pub fn extensive_rollout(
    policies: &[PolicyEnsemble],
    problem: &ProblemSpec,
    model: &LimitModel,
    route: ExtensiveRoute,
) -> Result<ExtensiveRollout> {
    let horizon = problem.horizon;
    check_schedule(policies, horizon)?;
    let mut current = ExtensiveState::initial(problem, model)?;
    let mut states = vec![current.clone()];
    let mut trajectory = vec![current.ensemble()];
    let mut rewards = Vec::with_capacity(horizon);
    let mut max_drift: f64 = 0.0;
    for t in 0..horizon {
        let (next, r, dr) = extensive_step(&current, policy_at(policies, t), problem, model, route)?;
        rewards.push(r);
        max_drift = max_drift.max(dr);
        current = next;
        trajectory.push(current.ensemble());
        states.push(current.clone());
    }
    Ok(ExtensiveRollout {
        states,
        trajectory,
        objective: rewards.iter().sum(),
        rewards,
        max_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::DegreeDistribution;
    use crate::problems::problem_by_name;

    fn nb(c: &[u32]) -> NeighborhoodDist {
        NeighborhoodDist { counts: c.to_vec() }
    }

    #[test]
    fn composition_counts() {
        assert_eq!(enumerate_compositions(1, 1).unwrap(), vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(enumerate_compositions(2, 1).unwrap().len(), 3);
        assert_eq!(enumerate_compositions(4, 3).unwrap().len(), 35);
    }

    #[test]
    fn a2_examples() {
        assert_eq!(enumerate_a2(&nb(&[3]), &[1, 2]), vec![vec![vec![1, 2]]]);
        let set = enumerate_a2(&nb(&[0, 3]), &[2, 1]);
        assert_eq!(set, vec![vec![vec![0, 0], vec![2, 1]]]);
        let set = enumerate_a2(&nb(&[1, 1]), &[1, 1]);
        assert_eq!(set, vec![vec![vec![1, 0], vec![0, 1]], vec![vec![0, 1], vec![1, 0]]]);
    }

    #[test]
    fn a3_examples() {
        assert_eq!(enumerate_a3(&nb(&[2]), &nb(&[2]), &[1, 1]), vec![vec![vec![vec![1, 1]]]]);
        for t in enumerate_a3(&nb(&[2, 0]), &nb(&[2, 0]), &[1, 1]) {
            assert_eq!(t[1], vec![vec![0, 0], vec![0, 0]]);
            assert_eq!(t[0][1], vec![0, 0]);
        }
    }

    #[test]
    fn feasibility_gate() {
        assert!(check_feasible(2, 6).is_ok());
        assert!(check_feasible(2, 10).is_err());
        assert!(check_feasible(5, 10).is_err());
    }

    #[test]
    fn cond_degree_examples() {
        let q = [0.2, 0.3, 0.5];
        let same = MfEnsemble::replicate(&[0.4, 0.6], 2);
        for m in 0..3 {
            assert!((cond_degree_given_state(m, 1, &same, &q).unwrap() - q[m]).abs() < 1e-15);
        }
        let e = MfEnsemble::new(vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        assert_eq!(cond_degree_given_state(0, 1, &e, &q).unwrap(), 0.0);
        let want = 0.3 * 0.5 / (0.3 * 0.5 + 0.5 * 0.75);
        assert!((cond_degree_given_state(1, 1, &e, &q).unwrap() - want).abs() < 1e-15);
        let dead = MfEnsemble::replicate(&[1.0, 0.0], 2);
        assert!(matches!(
            cond_degree_given_state(0, 1, &dead, &q),
            Err(Error::UndefinedConditional { state: 1 })
        ));
    }

    #[test]
    fn routes_agree_on_small_instances() {
        let dist = DegreeDistribution::zeta(2.5).unwrap();
        for (name, k_star) in [("sis", 3), ("sir", 2)] {
            let p = problem_by_name(name).unwrap();
            let model = LimitModel::new(&dist, k_star).unwrap();
            let pol = PolicyEnsemble::uniform(k_star as usize, p.num_states(), p.num_actions());
            let mut s = ExtensiveState::initial(&p, &model).unwrap();
            for _ in 0..3 {
                let (a, _) = extensive_substep(&s, &pol, &p, &model, ExtensiveRoute::Convolution).unwrap();
                let (b, _) = extensive_substep(&s, &pol, &p, &model, ExtensiveRoute::Enumeration).unwrap();
                for (ja, jb) in a.joints.iter().zip(&b.joints) {
                    for (x, y) in ja.entries().iter().zip(jb.entries()) {
                        assert!((x - y).abs() < 1e-12, "{name}: {x} vs {y}");
                    }
                }
                s = a;
            }
        }
    }

    #[test]
    fn initial_marginal_is_mu0() {
        let p = problem_by_name("sir").unwrap();
        let model = LimitModel::new(&DegreeDistribution::zeta(2.5).unwrap(), 3).unwrap();
        let s = ExtensiveState::initial(&p, &model).unwrap();
        for j in &s.joints {
            for (a, b) in j.state_marginal().iter().zip(&p.mu0) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
