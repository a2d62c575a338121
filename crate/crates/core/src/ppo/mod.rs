//! Proximal policy optimization with generalized advantage estimation.

mod rollout;
mod trainer;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::TrainConfig;
use crate::net::{LossSample, LossSpec, LossStats, MlpParams};

pub use rollout::{collect_rollouts, compute_gae, normalize, EpisodeCursor, RolloutBuffer};
pub use trainer::{Checkpoint, TrainError, TrainSummary, Trainer, UpdateRecord, TAU_TAIL};

#[derive(Debug, Error)]
#[error("non-finite loss in update {update}: {stats:?}")]
pub struct NonFiniteLoss {
    pub update: usize,
    pub stats: LossStats,
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One bias-corrected descent step on `params`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], config: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
}

/// Rescales `grad` so its Euclidean norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// Averages over all minibatches of one update, plus the ratio check on the very first one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: LossStats,
    pub minibatches: usize,
    pub grad_norm: f64,
    /// Largest `|ratio - 1|` in the first minibatch of the first epoch.
    pub first_minibatch_ratio_deviation: f64,
}

/// Epochs of shuffled minibatch steps on the clipped surrogate.
///
/// `advantages` are used as given; normalize them beforehand.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut MlpParams,
    adam: &mut Adam,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    returns: &[f64],
    config: &TrainConfig,
    update: usize,
    rng: &mut R,
) -> Result<UpdateStats, NonFiniteLoss> {
    let n = buffer.len();
    assert!(n > 0 && advantages.len() == n && returns.len() == n);
    let spec = LossSpec {
        clip_epsilon: config.clip_epsilon,
        value_coef: config.value_coef,
        entropy_coef: config.entropy_coef,
    };
    let mut indices: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut sum = LossStats::default();
    for epoch in 0..config.epochs_per_update {
        indices.shuffle(rng);
        for (mb, chunk) in indices.chunks(config.minibatch_size).enumerate() {
            let batch: Vec<LossSample> = chunk
                .iter()
                .map(|&i| LossSample {
                    obs: &buffer.obs[i],
                    action: buffer.actions[i],
                    old_log_prob: buffer.log_probs[i],
                    advantage: advantages[i],
                    ret: returns[i],
                })
                .collect();
            let (loss, mut grad) = params.loss_and_gradient(&batch, &spec);
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NonFiniteLoss {
                    update,
                    stats: loss,
                });
            }
            if epoch == 0 && mb == 0 {
                stats.first_minibatch_ratio_deviation = loss.max_ratio_deviation;
            }
            stats.grad_norm += clip_grad_norm(&mut grad, config.max_grad_norm);
            adam.step(params.values_mut(), &grad, config);
            sum.policy_loss += loss.policy_loss;
            sum.value_loss += loss.value_loss;
            sum.entropy += loss.entropy;
            sum.total += loss.total;
            sum.clip_fraction += loss.clip_fraction;
            sum.approx_kl += loss.approx_kl;
            sum.mean_ratio += loss.mean_ratio;
            sum.max_ratio_deviation = sum.max_ratio_deviation.max(loss.max_ratio_deviation);
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches as f64;
    stats.grad_norm /= k;
    stats.loss = LossStats {
        policy_loss: sum.policy_loss / k,
        value_loss: sum.value_loss / k,
        entropy: sum.entropy / k,
        total: sum.total / k,
        clip_fraction: sum.clip_fraction / k,
        approx_kl: sum.approx_kl / k,
        mean_ratio: sum.mean_ratio / k,
        max_ratio_deviation: sum.max_ratio_deviation,
    };
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::config::Config;
    use crate::env::{Env, ACTION_COUNT, OBS_DIM};

    #[test]
    fn adam_first_step_is_lr_sized() {
        let config = TrainConfig::default();
        let mut p = vec![1.0, -2.0, 0.5];
        let mut adam = Adam::new(3);
        adam.step(&mut p, &[0.3, -4.0, 0.0], &config);
        let lr = config.learning_rate;
        assert!((p[0] - (1.0 - lr)).abs() < 1e-9);
        assert!((p[1] - (-2.0 + lr)).abs() < 1e-9);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn grad_clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![0.3, 0.4];
        clip_grad_norm(&mut g, 1.0);
        assert_eq!(g, vec![0.3, 0.4]);
    }

    #[test]
    fn first_minibatch_is_on_policy() {
        let config = Config::default();
        let mut params = MlpParams::init(OBS_DIM, &config.train.hidden, ACTION_COUNT, 3);
        let mut env = Env::new(&config).unwrap();
        let mut cursor = EpisodeCursor::start(&mut env, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let buf = collect_rollouts(&mut env, &mut cursor, &params, 256, &mut rng).unwrap();
        let (mut adv, ret) = compute_gae(
            &buf.rewards,
            &buf.values,
            &buf.dones,
            buf.bootstrap_value,
            0.99,
            0.95,
        );
        normalize(&mut adv);
        let mut adam = Adam::new(params.param_count());
        let stats = ppo_update(
            &mut params,
            &mut adam,
            &buf,
            &adv,
            &ret,
            &config.train,
            0,
            &mut rng,
        )
        .unwrap();
        assert!(stats.first_minibatch_ratio_deviation <= 1e-12);
        assert_eq!(stats.minibatches, 4 * 4);
        // later minibatches moved off-policy
        assert!(stats.loss.max_ratio_deviation > 0.0);
    }

    #[test]
    fn zero_advantages_only_entropy_moves_policy() {
        let config = Config::default();
        let params = MlpParams::init(OBS_DIM, &[16, 16], ACTION_COUNT, 5);
        let mut env = Env::new(&config).unwrap();
        let mut cursor = EpisodeCursor::start(&mut env, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let buf = collect_rollouts(&mut env, &mut cursor, &params, 64, &mut rng).unwrap();
        let adv = vec![0.0; 64];
        let batch: Vec<LossSample> = (0..64)
            .map(|i| LossSample {
                obs: &buf.obs[i],
                action: buf.actions[i],
                old_log_prob: buf.log_probs[i],
                advantage: adv[i],
                ret: buf.values[i],
            })
            .collect();
        let spec = |entropy_coef| LossSpec {
            clip_epsilon: 0.2,
            value_coef: 0.5,
            entropy_coef,
        };
        let (_, without) = params.loss_and_gradient(&batch, &spec(0.0));
        assert!(without.iter().all(|g| *g == 0.0));
        let (_, with) = params.loss_and_gradient(&batch, &spec(0.01));
        assert!(with[params.policy_head_range()].iter().any(|g| *g != 0.0));
        assert!(with[params.value_head_range()].iter().all(|g| *g == 0.0));
    }
}
