//! Advantage estimation and the clipped-surrogate update with an adaptive KL
//! penalty and a squared-error critic loss.

use ndarray::Array2;
use rand::seq::SliceRandom;

use super::nn::{self, batch_matrix, Adam};
use super::policy::{gaussian_entropy, gaussian_log_prob, HighLevelPolicy};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::meanfield::PolicyEnsemble;
use crate::seeding;

/// One step of experience from the control MDP.
#[derive(Clone, Debug)]
pub struct TransitionRecord {
    /// Observation at `t` (flattened ensemble, plus time if enabled).
    pub mu_t: Vec<f64>,
    /// Logits before the softmax.
    pub raw_action: Vec<f64>,
    pub pi_t: PolicyEnsemble,
    pub log_prob: f64,
    /// Network mean at collection time, used for the KL penalty.
    pub mean: Vec<f64>,
    pub reward: f64,
    /// Set when `t + 1` is the horizon.
    pub done: bool,
    /// Set on the last record of an episode segment that is cut short.
    pub truncated: bool,
    pub mu_next: Vec<f64>,
}

/// Generalized advantage estimates and value targets.
///
/// A record ends its segment when `done` or `truncated`; truncated segments
/// bootstrap from `next_values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for i in (0..n).rev() {
        if ends[i] {
            running = 0.0;
        }
        let bootstrap = if dones[i] { 0.0 } else { next_values[i] };
        let delta = rewards[i] + gamma * bootstrap - values[i];
        running = delta + gamma * lambda * running;
        adv[i] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Training sample with its advantage and value target.
#[derive(Clone, Debug)]
pub struct PreparedSample<'a> {
    pub record: &'a TransitionRecord,
    pub advantage: f64,
    pub value_target: f64,
}

/// Loss components on one minibatch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub surrogate: f64,
    pub kl: f64,
    pub value: f64,
    pub total: f64,
}

/// KL divergence between diagonal Gaussians, `KL(old ‖ new)`.
pub fn gaussian_kl(mean_old: &[f64], log_std_old: &[f64], mean_new: &[f64], log_std_new: &[f64]) -> f64 {
    let mut kl = 0.0;
    for j in 0..mean_old.len() {
        let (s0, s) = (log_std_old[j], log_std_new[j]);
        let var0 = (2.0 * s0).exp();
        let var = (2.0 * s).exp();
        let dm = mean_old[j] - mean_new[j];
        kl += s - s0 + (var0 + dm * dm) / (2.0 * var) - 0.5;
    }
    kl
}

/// Full loss and its gradient with respect to `policy.theta`:
/// `−mean(min(rA, clip(r)A)) + β·mean KL(old‖new) + c_v·mean((V − R)²)`.
pub fn loss_and_grad(
    policy: &HighLevelPolicy,
    samples: &[PreparedSample<'_>],
    old_log_std: &[f64],
    clip: f64,
    kl_coeff: f64,
    vf_coeff: f64,
) -> (LossParts, Vec<f64>) {
    let n = samples.len() as f64;
    let obs = batch_matrix(&samples.iter().map(|s| s.record.mu_t.as_slice()).collect::<Vec<_>>());
    let (mean, pcache) = policy.mean_logits(obs.view());
    let (values, vcache) = policy.values(obs.view());
    let log_std = policy.log_std();
    let inv_var: Vec<f64> = log_std.iter().map(|s| (-2.0 * s).exp()).collect();
    let old_var: Vec<f64> = old_log_std.iter().map(|s| (2.0 * s).exp()).collect();

    let mut grad = vec![0.0; policy.theta.len()];
    let mut d_mean = Array2::zeros(mean.raw_dim());
    let mut d_log_std = vec![0.0; log_std.len()];
    let mut d_value = Array2::zeros(values.raw_dim());
    let mut parts = LossParts::default();

    for (i, s) in samples.iter().enumerate() {
        let mu = mean.row(i);
        let mu = mu.as_slice().expect("contiguous");
        let rec = s.record;
        let a = s.advantage;
        let logp = gaussian_log_prob(&rec.raw_action, mu, log_std);
        let ratio = (logp - rec.log_prob).exp();
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
        let unclipped_term = ratio * a;
        let clipped_term = clipped * a;
        parts.surrogate -= unclipped_term.min(clipped_term) / n;
        // d(min)/d(logp)
        let d_logp = if unclipped_term <= clipped_term || (ratio > 1.0 - clip && ratio < 1.0 + clip) {
            ratio * a
        } else {
            0.0
        };
        let g_logp = -d_logp / n;

        parts.kl += gaussian_kl(&rec.mean, old_log_std, mu, log_std) / n;
        let g_kl = kl_coeff / n;

        for j in 0..mu.len() {
            let diff = rec.raw_action[j] - mu[j];
            let dm_old = rec.mean[j] - mu[j];
            d_mean[[i, j]] = g_logp * diff * inv_var[j] + g_kl * (mu[j] - rec.mean[j]) * inv_var[j];
            d_log_std[j] += g_logp * (diff * diff * inv_var[j] - 1.0)
                + g_kl * (1.0 - (old_var[j] + dm_old * dm_old) * inv_var[j]);
        }

        let err = values[[i, 0]] - s.value_target;
        parts.value += err * err / n;
        d_value[[i, 0]] = 2.0 * vf_coeff * err / n;
    }
    parts.total = parts.surrogate + kl_coeff * parts.kl + vf_coeff * parts.value;

    let ls = policy.log_std_offset();
    let vo = policy.value_offset();
    nn::backward(&policy.policy_shape, policy.policy_params(), &pcache, d_mean.view(), &mut grad[..ls]);
    grad[ls..vo].copy_from_slice(&d_log_std);
    nn::backward(&policy.value_shape, policy.value_params(), &vcache, d_value.view(), &mut grad[vo..]);
    (parts, grad)
}

/// Optimizer state carried across iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoState {
    pub adam: Adam,
    pub kl_coeff: f64,
}

impl PpoState {
    pub fn new(policy: &HighLevelPolicy, config: &TrainConfig) -> Self {
        Self {
            adam: Adam::new(policy.theta.len(), config.learning_rate),
            kl_coeff: config.kl_coeff,
        }
    }

    /// Raises the coefficient by 1.5 when KL exceeds the target and lowers it
    /// by 1.5 when KL is below half the target.
    pub fn adapt_kl(&mut self, kl: f64, target: f64) {
        if kl > target {
            self.kl_coeff *= 1.5;
        } else if kl < target / 2.0 {
            self.kl_coeff /= 1.5;
        }
    }
}

/// Summary of one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateDiagnostics {
    pub surrogate: f64,
    pub value_loss: f64,
    /// Mean KL between the collecting and the updated policy over the batch.
    pub kl: f64,
    pub entropy: f64,
    pub kl_coeff: f64,
}

/// Runs `epochs_per_batch` passes of shuffled minibatch Adam steps.
pub fn ppo_update(
    policy: &mut HighLevelPolicy,
    state: &mut PpoState,
    batch: &[TransitionRecord],
    config: &TrainConfig,
    shuffle_seed: u64,
) -> Result<UpdateDiagnostics> {
    if batch.is_empty() {
        return Err(Error::param("empty training batch"));
    }
    let obs: Vec<&[f64]> = batch.iter().map(|r| r.mu_t.as_slice()).collect();
    let next: Vec<&[f64]> = batch.iter().map(|r| r.mu_next.as_slice()).collect();
    let (v, _) = policy.values(batch_matrix(&obs).view());
    let (vn, _) = policy.values(batch_matrix(&next).view());
    let rewards: Vec<f64> = batch.iter().map(|r| r.reward).collect();
    let dones: Vec<bool> = batch.iter().map(|r| r.done).collect();
    let ends: Vec<bool> = batch.iter().map(|r| r.done || r.truncated).collect();
    let (mut adv, returns) = gae(
        &rewards,
        v.column(0).as_slice_memory_order().expect("contiguous"),
        vn.column(0).as_slice_memory_order().expect("contiguous"),
        &dones,
        &ends,
        config.gamma,
        config.gae_lambda,
    );
    standardize(&mut adv);
    let samples: Vec<PreparedSample<'_>> = batch
        .iter()
        .zip(adv.iter().zip(&returns))
        .map(|(record, (&advantage, &value_target))| PreparedSample {
            record,
            advantage,
            value_target,
        })
        .collect();

    let old_log_std = policy.log_std().to_vec();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = seeding::stream(&[shuffle_seed]);
    let mb = config.minibatch.min(samples.len()).max(1);
    let mut surrogate = 0.0;
    let mut value_loss = 0.0;
    let mut steps = 0usize;
    for _ in 0..config.epochs_per_batch {
        order.shuffle(&mut rng);
        for chunk in order.chunks(mb) {
            let mbatch: Vec<PreparedSample<'_>> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let (parts, grad) = loss_and_grad(
                policy,
                &mbatch,
                &old_log_std,
                config.clip,
                state.kl_coeff,
                config.vf_coeff,
            );
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!(
                    "non-finite loss (surrogate {}, kl {}, value {})",
                    parts.surrogate, parts.kl, parts.value
                )));
            }
            state.adam.step(&mut policy.theta, &grad);
            surrogate += parts.surrogate;
            value_loss += parts.value;
            steps += 1;
        }
    }

    let (mean_new, _) = policy.mean_logits(batch_matrix(&obs).view());
    let kl = batch
        .iter()
        .enumerate()
        .map(|(i, r)| gaussian_kl(&r.mean, &old_log_std, mean_new.row(i).as_slice().expect("contiguous"), policy.log_std()))
        .sum::<f64>()
        / batch.len() as f64;
    if !kl.is_finite() {
        return Err(Error::Divergence("non-finite KL after update".into()));
    }
    state.adapt_kl(kl, config.kl_target);
    Ok(UpdateDiagnostics {
        surrogate: surrogate / steps.max(1) as f64,
        value_loss: value_loss / steps.max(1) as f64,
        kl,
        entropy: gaussian_entropy(policy.log_std()),
        kl_coeff: state.kl_coeff,
    })
}

/// Zero mean, unit variance; constant input maps to zeros.
fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    x.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::policy::sample_action;
    use crate::meanfield::MfEnsemble;
    use crate::problems::problem_by_name;
    use rand::Rng;

    #[test]
    fn gae_lambda_one_is_return_minus_baseline() {
        let mut rng = seeding::stream(&[3]);
        for _ in 0..50 {
            let n = rng.random_range(1..30);
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let vn: Vec<f64> = (0..n).map(|i| if i + 1 < n { v[i + 1] } else { 0.0 }).collect();
            let mut dones = vec![false; n];
            dones[n - 1] = true;
            let (adv, _) = gae(&r, &v, &vn, &dones, &dones, 0.99, 1.0);
            for t in 0..n {
                let mc: f64 = (t..n).map(|s| 0.99f64.powi((s - t) as i32) * r[s]).sum();
                assert!((adv[t] - (mc - v[t])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kl_adaptation_rule() {
        let p = problem_by_name("sis").unwrap();
        let pol = HighLevelPolicy::new(&p, 1, &[4], false, 0.0, 0);
        let mut s = PpoState::new(&pol, &TrainConfig::default());
        s.adapt_kl(0.1, 0.03);
        assert!((s.kl_coeff - 0.3).abs() < 1e-15);
        s.adapt_kl(0.02, 0.03);
        assert!((s.kl_coeff - 0.3).abs() < 1e-15);
        s.adapt_kl(0.001, 0.03);
        assert!((s.kl_coeff - 0.2).abs() < 1e-15);
    }

    fn records(pol: &HighLevelPolicy, n: usize) -> Vec<TransitionRecord> {
        let p = problem_by_name("sis").unwrap();
        let e = MfEnsemble::initial(&p, pol.k_star);
        (0..n)
            .map(|i| {
                let obs = pol.observation(&e, i);
                let a = sample_action(pol, &obs, 1.0, i as u64).unwrap();
                TransitionRecord {
                    mu_t: obs.clone(),
                    raw_action: a.raw,
                    pi_t: a.policy,
                    log_prob: a.log_prob,
                    mean: a.mean,
                    reward: -(i as f64),
                    done: i + 1 == n,
                    truncated: false,
                    mu_next: obs,
                }
            })
            .collect()
    }

    #[test]
    fn zero_advantage_update_is_zero_without_value_loss() {
        let p = problem_by_name("sis").unwrap();
        let mut pol = HighLevelPolicy::new(&p, 1, &[4], false, 0.0, 2);
        let mut batch = records(&pol, 6);
        batch.iter_mut().for_each(|r| {
            r.reward = 0.0;
        });
        // Zero rewards with a zero critic still give nonzero GAE; use a
        // configuration where every advantage is exactly zero.
        let n = pol.value_offset();
        pol.theta[n..].iter_mut().for_each(|v| *v = 0.0);
        let before = pol.theta.clone();
        let config = TrainConfig {
            vf_coeff: 0.0,
            minibatch: 2,
            ..TrainConfig::default()
        };
        let mut st = PpoState::new(&pol, &config);
        ppo_update(&mut pol, &mut st, &batch, &config, 9).unwrap();
        assert_eq!(pol.theta, before);
    }

    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        let p = problem_by_name("sis").unwrap();
        let mut pol = HighLevelPolicy::new(&p, 1, &[4, 4], false, -0.2, 6);
        let batch = records(&pol, 3);
        let old_log_std = pol.log_std().to_vec();
        // Move away from the collecting parameters so ratios differ from one.
        let mut rng = seeding::stream(&[77]);
        pol.theta.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
        let samples: Vec<PreparedSample<'_>> = batch
            .iter()
            .enumerate()
            .map(|(i, record)| PreparedSample {
                record,
                advantage: [0.7, -1.3, 0.4][i],
                value_target: [-1.0, 0.5, 2.0][i],
            })
            .collect();
        let (_, grad) = loss_and_grad(&pol, &samples, &old_log_std, 0.2, 0.2, 1.0);
        let mut probe = pol.clone();
        for i in 0..pol.theta.len() {
            let h = 1e-6;
            probe.theta[i] = pol.theta[i] + h;
            let up = loss_and_grad(&probe, &samples, &old_log_std, 0.2, 0.2, 1.0).0.total;
            probe.theta[i] = pol.theta[i] - h;
            let down = loss_and_grad(&probe, &samples, &old_log_std, 0.2, 0.2, 1.0).0.total;
            probe.theta[i] = pol.theta[i];
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs());
            assert!(
                (fd - grad[i]).abs() <= 1e-4 * scale + 1e-9,
                "param {i}: analytic {} vs numeric {fd}",
                grad[i]
            );
        }
    }
}
