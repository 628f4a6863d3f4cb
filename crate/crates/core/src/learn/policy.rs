//! The high-level policy: a network from the flattened ensemble to per-class
//! action logits, a free log-standard-deviation vector, and a separate value
//! network. Actions are Gaussian perturbations of the logits followed by a
//! softmax per (class, state) row.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::nn::{self, MlpCache, MlpShape};
use crate::error::{Error, Result};
use crate::meanfield::{MfEnsemble, PolicyEnsemble};
use crate::problems::ProblemSpec;
use crate::seeding;

/// Parameters of the high-level policy and its critic.
///
/// `theta` holds, in order, the policy network, the log-std vector and the
/// value network.
#[derive(Clone, Debug, PartialEq)]
pub struct HighLevelPolicy {
    pub k_star: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub decision_states: Vec<usize>,
    /// Whether `t / horizon` is appended to the observation.
    pub time_feature: bool,
    pub horizon: usize,
    pub policy_shape: MlpShape,
    pub value_shape: MlpShape,
    pub theta: Vec<f64>,
}

impl HighLevelPolicy {
    pub fn new(
        problem: &ProblemSpec,
        k_star: usize,
        hidden: &[usize],
        time_feature: bool,
        init_log_std: f64,
        seed: u64,
    ) -> Self {
        let rows = k_star + 1;
        let obs = rows * problem.num_states() + usize::from(time_feature);
        let out = rows * problem.decision_states.len() * problem.num_actions();
        let policy_shape = MlpShape::new(obs, hidden, out);
        let value_shape = MlpShape::new(obs, hidden, 1);
        let mut rng = seeding::stream(&[seed, 0x1417]);
        let mut theta = nn::init_params(&policy_shape, 1.0, 0.01, &mut rng);
        theta.extend(std::iter::repeat_n(init_log_std, out));
        theta.extend(nn::init_params(&value_shape, 1.0, 0.01, &mut rng));
        Self {
            k_star,
            num_states: problem.num_states(),
            num_actions: problem.num_actions(),
            decision_states: problem.decision_states.clone(),
            time_feature,
            horizon: problem.horizon,
            policy_shape,
            value_shape,
            theta,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy_shape.input
    }

    pub fn action_dim(&self) -> usize {
        self.policy_shape.output
    }

    pub(crate) fn log_std_offset(&self) -> usize {
        self.policy_shape.param_count()
    }

    pub(crate) fn value_offset(&self) -> usize {
        self.log_std_offset() + self.action_dim()
    }

    pub fn policy_params(&self) -> &[f64] {
        &self.theta[..self.log_std_offset()]
    }

    pub fn log_std(&self) -> &[f64] {
        &self.theta[self.log_std_offset()..self.value_offset()]
    }

    pub fn value_params(&self) -> &[f64] {
        &self.theta[self.value_offset()..]
    }

    /// Flattened ensemble, plus the normalized time if enabled.
    pub fn observation(&self, ensemble: &MfEnsemble, t: usize) -> Vec<f64> {
        let mut obs = ensemble.flat().to_vec();
        if self.time_feature {
            obs.push(t as f64 / self.horizon.max(1) as f64);
        }
        obs
    }

    pub fn mean_logits(&self, obs: ArrayView2<'_, f64>) -> (Array2<f64>, MlpCache) {
        nn::forward(&self.policy_shape, self.policy_params(), obs)
    }

    pub fn values(&self, obs: ArrayView2<'_, f64>) -> (Array2<f64>, MlpCache) {
        nn::forward(&self.value_shape, self.value_params(), obs)
    }

    /// Per-row softmax of `logits`; states outside the decision set get the
    /// uniform row.
    pub fn policy_from_logits(&self, logits: &[f64]) -> Result<PolicyEnsemble> {
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite policy logits".into()));
        }
        let n_u = self.num_actions;
        let nd = self.decision_states.len();
        let mut probs = vec![1.0 / n_u as f64; (self.k_star + 1) * self.num_states * n_u];
        for row in 0..=self.k_star {
            for (di, &x) in self.decision_states.iter().enumerate() {
                let src = &logits[(row * nd + di) * n_u..(row * nd + di + 1) * n_u];
                let dst = &mut probs[(row * self.num_states + x) * n_u..(row * self.num_states + x + 1) * n_u];
                softmax_into(src, dst);
            }
        }
        PolicyEnsemble::new(self.k_star, self.num_states, n_u, probs)
    }

    /// Zero-noise policy at one observation.
    pub fn deterministic(&self, obs: &[f64]) -> Result<PolicyEnsemble> {
        let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).map_err(|e| Error::dims(e.to_string()))?;
        let (mean, _) = self.mean_logits(x.view());
        self.policy_from_logits(mean.row(0).as_slice().expect("contiguous"))
    }
}

pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_prob(raw: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let mut lp = 0.0;
    for ((&a, &m), &s) in raw.iter().zip(mean).zip(log_std) {
        let z = (a - m) / s.exp();
        lp += -0.5 * z * z - s - 0.5 * (2.0 * PI).ln();
    }
    lp
}

/// Entropy of a diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
}

/// One draw of the low-level policy ensemble.
#[derive(Clone, Debug)]
pub struct SampledAction {
    pub policy: PolicyEnsemble,
    pub raw: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_prob: f64,
}

/// Draws `raw ~ N(mean, diag σ²)` given the network mean for this observation.
pub fn sample_from_mean<R: Rng + ?Sized>(
    policy: &HighLevelPolicy,
    mean: &[f64],
    noise_scale: f64,
    rng: &mut R,
) -> Result<SampledAction> {
    let log_std = policy.log_std();
    let raw: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &s)| m + noise_scale * s.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let log_prob = gaussian_log_prob(&raw, mean, log_std);
    Ok(SampledAction {
        policy: policy.policy_from_logits(&raw)?,
        raw,
        mean: mean.to_vec(),
        log_prob,
    })
}

/// Samples an action at `obs` from a seeded stream.
pub fn sample_action(policy: &HighLevelPolicy, obs: &[f64], noise_scale: f64, seed: u64) -> Result<SampledAction> {
    let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).map_err(|e| Error::dims(e.to_string()))?;
    let (mean, _) = policy.mean_logits(x.view());
    let mut rng = seeding::stream(&[seed]);
    sample_from_mean(policy, mean.row(0).as_slice().expect("contiguous"), noise_scale, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::problem_by_name;

    #[test]
    fn zero_noise_gives_softmax_of_mean() {
        let p = problem_by_name("sis").unwrap();
        let pol = HighLevelPolicy::new(&p, 3, &[8, 8], false, 0.0, 5);
        let e = MfEnsemble::initial(&p, 3);
        let obs = pol.observation(&e, 0);
        let a = sample_action(&pol, &obs, 0.0, 1).unwrap();
        let b = pol.deterministic(&obs).unwrap();
        assert_eq!(a.policy, b);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        softmax_into(&[0.1, -2.0, 3.0], &mut a);
        softmax_into(&[5.1, 3.0, 8.0], &mut b);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn rumor_head_covers_decision_states_only() {
        let p = problem_by_name("rumor").unwrap();
        let pol = HighLevelPolicy::new(&p, 2, &[4], false, 0.0, 0);
        assert_eq!(pol.action_dim(), 3 * 2 * 2);
        let logits: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let ens = pol.policy_from_logits(&logits).unwrap();
        assert_eq!(ens.row(0, 4), &[0.5, 0.5]);
        assert!(ens.row(0, 0)[1] > 0.5);
    }

    #[test]
    fn non_finite_logits_are_rejected() {
        let p = problem_by_name("sis").unwrap();
        let pol = HighLevelPolicy::new(&p, 1, &[4], false, 0.0, 0);
        let logits = vec![f64::NAN; pol.action_dim()];
        assert!(matches!(pol.policy_from_logits(&logits), Err(Error::Divergence(_))));
    }
}
