//! The cooperative network problems: degree-aware transition kernels,
//! per-agent rewards, and the limiting mean-field reward.
//!
//! Kernels take the agent state `x`, action `u`, neighborhood state
//! distribution `g` (a simplex over states, all-zero for isolated agents)
//! and degree `k`, and write the next-state distribution into `out`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::meanfield::{MfEnsemble, PolicyEnsemble};

/// Degree-aware dynamics and per-agent reward of a network problem.
pub trait Dynamics: Send + Sync + fmt::Debug {
    fn transition(&self, x: usize, u: usize, g: &[f64], k: u32, out: &mut [f64]);

    /// Reward of one agent in state `x` taking `u`, given its neighborhood
    /// `g` and the aggregate population distribution `mu`.
    fn reward(&self, x: usize, u: usize, g: &[f64], mu: &[f64]) -> f64;

    /// Whether [`Dynamics::reward`] reads the neighborhood argument.
    fn reward_uses_neighborhood(&self) -> bool {
        true
    }
}

/// A fully specified problem instance.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub name: String,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    /// Number of decision steps `T`.
    pub horizon: usize,
    /// Kernel applications per decision step (two for the rumor model).
    pub substeps: usize,
    pub mu0: Vec<f64>,
    /// States at which the policy is consulted at decision times.
    pub decision_states: Vec<usize>,
    dynamics: Arc<dyn Dynamics>,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        states: Vec<String>,
        actions: Vec<String>,
        horizon: usize,
        mu0: Vec<f64>,
        dynamics: Arc<dyn Dynamics>,
    ) -> Result<Self> {
        let decision_states = (0..states.len()).collect();
        let spec = Self {
            name: name.into(),
            states,
            actions,
            horizon,
            substeps: 1,
            mu0,
            decision_states,
            dynamics,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.states.is_empty() || self.actions.is_empty() {
            return Err(Error::param("state and action sets must be non-empty"));
        }
        if self.substeps == 0 {
            return Err(Error::param("substeps must be positive"));
        }
        check_simplex("mu0", &self.mu0, self.states.len())
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    /// Total kernel applications over the horizon.
    pub fn kernel_steps(&self) -> usize {
        self.horizon * self.substeps
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn transition(&self, x: usize, u: usize, g: &[f64], k: u32, out: &mut [f64]) {
        self.dynamics.transition(x, u, g, k, out)
    }

    pub fn reward(&self, x: usize, u: usize, g: &[f64], mu: &[f64]) -> f64 {
        self.dynamics.reward(x, u, g, mu)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_mu0(mut self, mu0: Vec<f64>) -> Result<Self> {
        check_simplex("mu0", &mu0, self.states.len())?;
        self.mu0 = mu0;
        Ok(self)
    }
}

pub(crate) fn check_simplex(what: &str, p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(Error::dims(format!("{what} has length {}, expected {len}", p.len())));
    }
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::param(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("{what} sums to {s}, expected 1")));
    }
    Ok(())
}

fn check_unit(what: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(format!("{what} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn check_cost(what: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::param(format!("{what} must be non-negative, got {v}")));
    }
    Ok(())
}

/// Degree factor `2 / (1 + e^{-k/2}) - 1`, zero for isolated agents.
pub fn degree_factor(k: u32) -> f64 {
    2.0 / (1.0 + (-(k as f64) / 2.0).exp()) - 1.0
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------- SIS / SIR

pub const SUSCEPTIBLE: usize = 0;
pub const INFECTED: usize = 1;
pub const RECOVERED: usize = 2;
pub const PROTECT: usize = 0;
pub const NO_PROTECT: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EpidemicParams {
    pub rho_i: f64,
    pub rho_r: f64,
    pub c_p: f64,
    pub c_i: f64,
    pub mu0_i: f64,
    pub horizon: usize,
}

impl EpidemicParams {
    pub fn sis_defaults() -> Self {
        Self {
            rho_i: 0.4,
            rho_r: 0.1,
            c_p: 0.5,
            c_i: 1.0,
            mu0_i: 0.4,
            horizon: 50,
        }
    }

    pub fn sir_defaults() -> Self {
        Self {
            rho_i: 0.1,
            rho_r: 0.02,
            c_p: 0.25,
            c_i: 1.0,
            mu0_i: 0.1,
            horizon: 50,
        }
    }

    fn validate(&self) -> Result<()> {
        check_unit("rho_I", self.rho_i)?;
        check_unit("rho_R", self.rho_r)?;
        check_unit("mu0(I)", self.mu0_i)?;
        check_cost("c_P", self.c_p)?;
        check_cost("c_I", self.c_i)
    }
}

#[derive(Debug)]
struct Epidemic {
    params: EpidemicParams,
    recovered_state: bool,
}

impl Epidemic {
    fn infection(&self, g: &[f64], k: u32) -> f64 {
        (self.params.rho_i * g[INFECTED] * degree_factor(k)).clamp(0.0, 1.0)
    }
}

impl Dynamics for Epidemic {
    fn transition(&self, x: usize, u: usize, g: &[f64], k: u32, out: &mut [f64]) {
        out.fill(0.0);
        match x {
            SUSCEPTIBLE if u == PROTECT => out[SUSCEPTIBLE] = 1.0,
            SUSCEPTIBLE => {
                let p = self.infection(g, k);
                out[INFECTED] = p;
                out[SUSCEPTIBLE] = 1.0 - p;
            }
            INFECTED => {
                let back = if self.recovered_state { RECOVERED } else { SUSCEPTIBLE };
                out[back] = self.params.rho_r;
                out[INFECTED] = 1.0 - self.params.rho_r;
            }
            _ => out[RECOVERED] = 1.0,
        }
    }

    fn reward(&self, x: usize, u: usize, _g: &[f64], _mu: &[f64]) -> f64 {
        let mut r = 0.0;
        if u == PROTECT {
            r -= self.params.c_p;
        }
        if x == INFECTED {
            r -= self.params.c_i;
        }
        r
    }

    fn reward_uses_neighborhood(&self) -> bool {
        false
    }
}

pub fn sis_problem(params: EpidemicParams) -> Result<ProblemSpec> {
    params.validate()?;
    let mu0 = vec![1.0 - params.mu0_i, params.mu0_i];
    let horizon = params.horizon;
    ProblemSpec::new(
        "sis",
        names(&["S", "I"]),
        names(&["P", "NP"]),
        horizon,
        mu0,
        Arc::new(Epidemic {
            params,
            recovered_state: false,
        }),
    )
}

pub fn sir_problem(params: EpidemicParams) -> Result<ProblemSpec> {
    params.validate()?;
    let mu0 = vec![1.0 - params.mu0_i, params.mu0_i, 0.0];
    let horizon = params.horizon;
    ProblemSpec::new(
        "sir",
        names(&["S", "I", "R"]),
        names(&["P", "NP"]),
        horizon,
        mu0,
        Arc::new(Epidemic {
            params,
            recovered_state: true,
        }),
    )
}

// -------------------------------------------------------------------- Color

pub const COLORS: usize = 5;
pub const MOVE_LEFT: usize = 0;
pub const STAY: usize = 1;
pub const MOVE_RIGHT: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct ColorParams {
    pub rho_d: f64,
    pub c_m: f64,
    pub c_d: f64,
    pub c_nu: f64,
    pub nu: Vec<f64>,
    pub mu0: Vec<f64>,
    pub horizon: usize,
}

impl Default for ColorParams {
    fn default() -> Self {
        Self {
            rho_d: 0.9,
            c_m: 0.1,
            c_d: 0.5,
            c_nu: 1.0,
            nu: vec![0.1, 0.2, 0.4, 0.2, 0.1],
            mu0: vec![1.0, 0.0, 0.0, 0.0, 0.0],
            horizon: 20,
        }
    }
}

#[derive(Debug)]
struct Color {
    params: ColorParams,
}

impl Color {
    /// `min(1, G(x)^2 ρ_d e^{-2/k})` at a single color.
    fn noise(&self, gx: f64, k: u32) -> f64 {
        if k == 0 {
            return 0.0;
        }
        (gx * gx * self.params.rho_d * (-2.0 / k as f64).exp()).min(1.0)
    }
}

impl Dynamics for Color {
    fn transition(&self, x: usize, u: usize, g: &[f64], k: u32, out: &mut [f64]) {
        out.fill(0.0);
        let target = match u {
            MOVE_LEFT => (x + COLORS - 1) % COLORS,
            STAY => x,
            _ => (x + 1) % COLORS,
        };
        let noise = self.noise(g[x], k);
        out[target] += 1.0 - noise;
        out[(target + COLORS - 1) % COLORS] += noise / 2.0;
        out[(target + 1) % COLORS] += noise / 2.0;
    }

    fn reward(&self, x: usize, u: usize, g: &[f64], mu: &[f64]) -> f64 {
        let p = &self.params;
        let moving = if u == STAY { 0.0 } else { p.c_m };
        let clash = (g[(x + COLORS - 1) % COLORS] + g[(x + 1) % COLORS]) * p.c_d;
        let deviation: f64 = mu.iter().zip(&p.nu).map(|(m, n)| (m - n).abs()).sum::<f64>() * p.c_nu;
        -moving - clash - deviation
    }
}

pub fn color_problem(params: ColorParams) -> Result<ProblemSpec> {
    if !(params.rho_d.is_finite() && params.rho_d >= 0.0) {
        return Err(Error::param("rho_d must be non-negative"));
    }
    check_simplex("nu", &params.nu, COLORS)?;
    check_simplex("mu0", &params.mu0, COLORS)?;
    check_cost("c_m", params.c_m)?;
    check_cost("c_d", params.c_d)?;
    check_cost("c_nu", params.c_nu)?;
    let mu0 = params.mu0.clone();
    let horizon = params.horizon;
    ProblemSpec::new(
        "color",
        names(&["x1", "x2", "x3", "x4", "x5"]),
        names(&["left", "stay", "right"]),
        horizon,
        mu0,
        Arc::new(Color { params }),
    )
}

// -------------------------------------------------------------------- Rumor

pub const IGNORANT: usize = 0;
pub const AWARE: usize = 1;
pub const SPREAD: usize = 0;
pub const KEEP: usize = 1;

/// Extended state `(base, action)` for the rumor model.
pub fn rumor_extended(base: usize, action: usize) -> usize {
    2 + 2 * base + action
}

#[derive(Clone, Debug, PartialEq)]
pub struct RumorParams {
    pub rho_a: f64,
    pub c_s: f64,
    pub r_s: f64,
    pub mu0_a: f64,
    pub horizon: usize,
}

impl Default for RumorParams {
    fn default() -> Self {
        Self {
            rho_a: 0.3,
            c_s: 16.0,
            r_s: 4.0,
            mu0_a: 0.1,
            horizon: 50,
        }
    }
}

#[derive(Debug)]
struct Rumor {
    params: RumorParams,
}

impl Rumor {
    fn awareness(&self, g: &[f64], k: u32) -> f64 {
        (self.params.rho_a * g[rumor_extended(AWARE, SPREAD)] * degree_factor(k)).clamp(0.0, 1.0)
    }
}

impl Dynamics for Rumor {
    fn transition(&self, x: usize, u: usize, g: &[f64], k: u32, out: &mut [f64]) {
        out.fill(0.0);
        match x {
            IGNORANT | AWARE => out[rumor_extended(x, u)] = 1.0,
            _ if x == rumor_extended(IGNORANT, SPREAD) || x == rumor_extended(IGNORANT, KEEP) => {
                let p = self.awareness(g, k);
                out[AWARE] = p;
                out[IGNORANT] = 1.0 - p;
            }
            _ => out[AWARE] = 1.0,
        }
    }

    fn reward(&self, x: usize, _u: usize, g: &[f64], _mu: &[f64]) -> f64 {
        if x != rumor_extended(AWARE, SPREAD) {
            return 0.0;
        }
        let p = &self.params;
        let ignorant = g[rumor_extended(IGNORANT, SPREAD)] + g[rumor_extended(IGNORANT, KEEP)];
        let aware = g[rumor_extended(AWARE, SPREAD)] + g[rumor_extended(AWARE, KEEP)];
        p.r_s * ignorant - p.c_s * aware
    }
}

pub fn rumor_problem(params: RumorParams) -> Result<ProblemSpec> {
    check_unit("rho_A", params.rho_a)?;
    check_unit("mu0(A)", params.mu0_a)?;
    check_cost("c_S", params.c_s)?;
    check_cost("r_S", params.r_s)?;
    let mu0 = vec![1.0 - params.mu0_a, params.mu0_a, 0.0, 0.0, 0.0, 0.0];
    let horizon = params.horizon;
    let mut spec = ProblemSpec::new(
        "rumor",
        names(&["I", "A", "I,S", "I,NS", "A,S", "A,NS"]),
        names(&["S", "NS"]),
        horizon,
        mu0,
        Arc::new(Rumor { params }),
    )?;
    spec.substeps = 2;
    spec.decision_states = vec![IGNORANT, AWARE];
    Ok(spec)
}

/// Builds one of the four problems by name with default parameters.
pub fn problem_by_name(name: &str) -> Result<ProblemSpec> {
    match name {
        "sis" => sis_problem(EpidemicParams::sis_defaults()),
        "sir" => sir_problem(EpidemicParams::sir_defaults()),
        "color" => color_problem(ColorParams::default()),
        "rumor" => rumor_problem(RumorParams::default()),
        other => Err(Error::param(format!("unknown problem {other:?}"))),
    }
}

// ----------------------------------------------------------- limiting reward

/// Limiting reward of one kernel step:
/// `Σ_c m_c Σ_x μ^c(x) Σ_u π^c(u|x) r(x, u, Ĝ, μ_agg)` with `μ_agg` the
/// node-mass weighted aggregate of the class distributions.
pub fn mf_reward(
    problem: &ProblemSpec,
    ensemble: &MfEnsemble,
    policy: &PolicyEnsemble,
    g_hat: &[f64],
    node_mass: &[f64],
) -> Result<f64> {
    let d = problem.num_states();
    let n_u = problem.num_actions();
    if ensemble.num_states() != d || g_hat.len() != d {
        return Err(Error::dims("ensemble or neighborhood does not match the state set"));
    }
    if policy.num_states() != d || policy.num_actions() != n_u {
        return Err(Error::dims("policy does not match the problem"));
    }
    if node_mass.len() != ensemble.rows() || policy.rows() != ensemble.rows() {
        return Err(Error::dims("class counts differ between ensemble, policy and masses"));
    }
    let mu_agg = ensemble.aggregate(node_mass);
    let mut total = 0.0;
    for (row, &mass) in node_mass.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let mu = ensemble.class(row);
        let mut class_reward = 0.0;
        for x in 0..d {
            if mu[x] == 0.0 {
                continue;
            }
            let pi = policy.row(row, x);
            let mut r = 0.0;
            for u in 0..n_u {
                if pi[u] != 0.0 {
                    r += pi[u] * problem.reward(x, u, g_hat, &mu_agg);
                }
            }
            class_reward += mu[x] * r;
        }
        total += mass * class_reward;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kernel(p: &ProblemSpec, x: usize, u: usize, g: &[f64], k: u32) -> Vec<f64> {
        let mut out = vec![0.0; p.num_states()];
        p.transition(x, u, g, k, &mut out);
        out
    }

    fn random_simplex(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..d).map(|_| -rng.random::<f64>().ln()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn sis_examples() {
        let p = sis_problem(EpidemicParams::sis_defaults()).unwrap();
        assert_eq!(kernel(&p, SUSCEPTIBLE, NO_PROTECT, &[1.0, 0.0], 7), vec![1.0, 0.0]);
        assert_eq!(kernel(&p, SUSCEPTIBLE, PROTECT, &[0.0, 1.0], 30), vec![1.0, 0.0]);
        let expected = 0.4 * 0.5 * (2.0 / (1.0 + (-1.0f64).exp()) - 1.0);
        let out = kernel(&p, SUSCEPTIBLE, NO_PROTECT, &[0.5, 0.5], 2);
        assert!((out[INFECTED] - expected).abs() < 1e-15);
        let out = kernel(&p, INFECTED, PROTECT, &[0.5, 0.5], 2);
        assert!((out[SUSCEPTIBLE] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sis_infection_matches_bernoulli_frequency() {
        // Per-step Monte Carlo cross-check of the direct formula.
        let p = sis_problem(EpidemicParams::sis_defaults()).unwrap();
        let prob = kernel(&p, SUSCEPTIBLE, NO_PROTECT, &[0.5, 0.5], 2)[INFECTED];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        // Draw two neighbors, count infected ones, then infect with ρ·G(I)·factor.
        let hits = (0..n)
            .filter(|_| {
                let g: f64 = (0..2).filter(|_| rng.random::<f64>() < 0.5).count() as f64 / 2.0;
                rng.random::<f64>() < 0.4 * g * degree_factor(2)
            })
            .count();
        let freq = hits as f64 / n as f64;
        let se = (prob * (1.0 - prob) / n as f64).sqrt();
        assert!((freq - prob).abs() < 4.0 * se, "{freq} vs {prob}");
    }

    #[test]
    fn sir_examples() {
        let p = sir_problem(EpidemicParams::sir_defaults()).unwrap();
        for u in [PROTECT, NO_PROTECT] {
            assert_eq!(kernel(&p, RECOVERED, u, &[0.0, 1.0, 0.0], 9), vec![0.0, 0.0, 1.0]);
        }
        let out = kernel(&p, INFECTED, PROTECT, &[0.2, 0.3, 0.5], 3);
        assert!((out[RECOVERED] - 0.02).abs() < 1e-15);
        assert!((out[INFECTED] - 0.98).abs() < 1e-15);
        let out = kernel(&p, SUSCEPTIBLE, NO_PROTECT, &[0.0, 1.0, 0.0], 200);
        assert!((out[INFECTED] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rates_out_of_range_rejected() {
        let mut bad = EpidemicParams::sis_defaults();
        bad.rho_i = 1.5;
        assert!(sis_problem(bad.clone()).is_err());
        assert!(sir_problem(bad).is_err());
        let mut bad = ColorParams::default();
        bad.nu = vec![0.5, 0.5, 0.5, 0.0, 0.0];
        assert!(color_problem(bad).is_err());
        assert!(rumor_problem(RumorParams {
            rho_a: -0.1,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn color_noise_free_moves_are_deterministic() {
        let p = color_problem(ColorParams::default()).unwrap();
        let g = [0.0; COLORS];
        for x in 0..COLORS {
            let left = kernel(&p, x, MOVE_LEFT, &g, 4);
            let stay = kernel(&p, x, STAY, &g, 4);
            let right = kernel(&p, x, MOVE_RIGHT, &g, 4);
            assert_eq!(left[(x + 4) % 5], 1.0);
            assert_eq!(stay[x], 1.0);
            assert_eq!(right[(x + 1) % 5], 1.0);
        }
    }

    #[test]
    fn color_matrices_match_reference_rows() {
        // Rows written out from the 5x5 matrices for a generic noise level.
        let p = color_problem(ColorParams::default()).unwrap();
        let g = [0.7, 0.4, 0.9, 0.2, 0.5];
        let k = 3;
        let gt = |x: usize| (g[x] * g[x] * 0.9 * (-2.0f64 / 3.0).exp()).min(1.0);
        let left0 = kernel(&p, 0, MOVE_LEFT, &g, k);
        let want = [gt(0) / 2.0, 0.0, 0.0, gt(0) / 2.0, 1.0 - gt(0)];
        for (a, b) in left0.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let right3 = kernel(&p, 3, MOVE_RIGHT, &g, k);
        let want = [gt(3) / 2.0, 0.0, 0.0, gt(3) / 2.0, 1.0 - gt(3)];
        for (a, b) in right3.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let stay4 = kernel(&p, 4, STAY, &g, k);
        let want = [gt(4) / 2.0, 0.0, 0.0, gt(4) / 2.0, 1.0 - gt(4)];
        for (a, b) in stay4.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn color_stay_example() {
        let p = color_problem(ColorParams::default()).unwrap();
        let g = [1.0, 0.0, 0.0, 0.0, 0.0];
        let out = kernel(&p, 0, STAY, &g, 2);
        let gt = (0.9f64 * (-1.0f64).exp()).min(1.0);
        assert!((out[0] - (1.0 - gt)).abs() < 1e-15);
        assert!((out[1] - gt / 2.0).abs() < 1e-15);
        assert!((out[4] - gt / 2.0).abs() < 1e-15);
    }

    #[test]
    fn color_without_noise_factor_is_pure_shift() {
        let p = color_problem(ColorParams {
            rho_d: 0.0,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let g = random_simplex(&mut rng, COLORS);
            let x = rng.random_range(0..COLORS);
            let out = kernel(&p, x, STAY, &g, rng.random_range(1..20));
            assert_eq!(out[x], 1.0);
        }
    }

    #[test]
    fn rumor_examples() {
        let p = rumor_problem(RumorParams::default()).unwrap();
        let d = p.num_states();
        let mut g = vec![0.0; d];
        g[rumor_extended(IGNORANT, SPREAD)] = 1.0;
        for u in [SPREAD, KEEP] {
            let ext = kernel(&p, AWARE, u, &g, 3);
            assert_eq!(ext[rumor_extended(AWARE, u)], 1.0);
            assert_eq!(kernel(&p, rumor_extended(AWARE, u), u, &g, 3)[AWARE], 1.0);
            assert_eq!(kernel(&p, rumor_extended(IGNORANT, u), u, &g, 3)[IGNORANT], 1.0);
        }
        let mut g = vec![0.0; d];
        g[rumor_extended(AWARE, SPREAD)] = 0.5;
        g[rumor_extended(IGNORANT, KEEP)] = 0.5;
        let out = kernel(&p, rumor_extended(IGNORANT, SPREAD), SPREAD, &g, 2);
        let want = (0.3 * 0.5 * (2.0 / (1.0 + (-1.0f64).exp()) - 1.0)).min(1.0);
        assert!((out[AWARE] - want).abs() < 1e-15);
    }

    #[test]
    fn rumor_two_substeps_form_a_chain_on_base_states() {
        let p = rumor_problem(RumorParams::default()).unwrap();
        let d = p.num_states();
        let mut g = vec![0.0; d];
        g[rumor_extended(AWARE, SPREAD)] = 0.4;
        g[rumor_extended(IGNORANT, KEEP)] = 0.6;
        let k = 4;
        let single = (0.3 * 0.4 * degree_factor(k)).min(1.0);
        for u in [SPREAD, KEEP] {
            for base in [IGNORANT, AWARE] {
                let first = kernel(&p, base, u, &g, k);
                let mut composed = vec![0.0; d];
                for (mid, &w) in first.iter().enumerate() {
                    if w > 0.0 {
                        let second = kernel(&p, mid, u, &g, k);
                        for (c, s) in composed.iter_mut().zip(second) {
                            *c += w * s;
                        }
                    }
                }
                let want_aware = if base == AWARE { 1.0 } else { single };
                assert!((composed[AWARE] - want_aware).abs() < 1e-15);
                assert!((composed[IGNORANT] + composed[AWARE] - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn every_kernel_row_is_a_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for name in ["sis", "sir", "color", "rumor"] {
            let p = problem_by_name(name).unwrap();
            let d = p.num_states();
            for _ in 0..10_000 {
                let g = random_simplex(&mut rng, d);
                let x = rng.random_range(0..d);
                let u = rng.random_range(0..p.num_actions());
                let k = rng.random_range(0..60);
                let out = kernel(&p, x, u, &g, k);
                assert!(out.iter().all(|v| *v >= 0.0));
                assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{name}");
            }
        }
    }

    #[test]
    fn infection_monotone_in_neighborhood_and_degree() {
        let sis = problem_by_name("sis").unwrap();
        let rumor = problem_by_name("rumor").unwrap();
        let mut prev = -1.0;
        for k in 0..40 {
            for step in 0..=10 {
                let gi = step as f64 / 10.0;
                let p = kernel(&sis, SUSCEPTIBLE, NO_PROTECT, &[1.0 - gi, gi], k)[INFECTED];
                let p_more = kernel(&sis, SUSCEPTIBLE, NO_PROTECT, &[1.0 - gi, gi], k + 1)[INFECTED];
                assert!(p_more >= p);
                if step > 0 {
                    let lower = (gi - 0.1).max(0.0);
                    let q = kernel(&sis, SUSCEPTIBLE, NO_PROTECT, &[1.0 - lower, lower], k)[INFECTED];
                    assert!(p >= q);
                }
                let mut g = vec![0.0; 6];
                g[rumor_extended(AWARE, SPREAD)] = gi;
                g[IGNORANT] = 1.0 - gi;
                let a = kernel(&rumor, rumor_extended(IGNORANT, KEEP), KEEP, &g, k)[AWARE];
                let a_more = kernel(&rumor, rumor_extended(IGNORANT, KEEP), KEEP, &g, k + 1)[AWARE];
                assert!(a_more >= a);
            }
            let p = kernel(&sis, SUSCEPTIBLE, NO_PROTECT, &[0.0, 1.0], k)[INFECTED];
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn mf_reward_examples() {
        let p = problem_by_name("sis").unwrap();
        let k_star = 3;
        let masses = vec![0.4, 0.3, 0.2, 0.1];
        let never = PolicyEnsemble::constant(k_star, &[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let healthy = MfEnsemble::replicate(&[1.0, 0.0], k_star);
        let g = healthy.class(0).to_vec();
        assert_eq!(mf_reward(&p, &healthy, &never, &g, &masses).unwrap(), 0.0);

        let sick = MfEnsemble::replicate(&[0.0, 1.0], k_star);
        assert!((mf_reward(&p, &sick, &never, &[0.0, 1.0], &masses).unwrap() + 1.0).abs() < 1e-15);

        let quarter = PolicyEnsemble::constant(k_star, &[vec![0.25, 0.75], vec![0.25, 0.75]])
            .unwrap();
        let mixed = MfEnsemble::replicate(&[0.6, 0.4], k_star);
        let r = mf_reward(&p, &mixed, &quarter, &[0.6, 0.4], &masses).unwrap();
        assert!((r - (-0.25 * 0.5 - 0.4)).abs() < 1e-14);

        assert!(mf_reward(&p, &mixed, &quarter, &[0.6, 0.4], &masses[..2]).is_err());
    }
}
