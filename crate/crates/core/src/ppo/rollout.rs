use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{episode_seed, Env, EnvError, EpisodeSummary, Observation, OBS_DIM};
use crate::net::{sample_action, MlpParams};

/// On-policy experience from one collection phase.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    pub obs: Vec<[f64; OBS_DIM]>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub tau_r: Vec<f64>,
    /// Value of the observation following the last step (0 when it ended an episode).
    pub bootstrap_value: f64,
    /// Episodes that finished during collection.
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Where the environment stands between collection phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCursor {
    /// Root of the episode seed stream.
    pub base_seed: u64,
    /// Index of the running episode.
    pub index: u64,
    pub obs: Observation,
}

impl EpisodeCursor {
    /// Resets `env` into the first episode of the stream.
    pub fn start(env: &mut Env, base_seed: u64) -> Result<Self, EnvError> {
        let obs = env.reset(episode_seed(base_seed, 0))?;
        Ok(Self {
            base_seed,
            index: 0,
            obs,
        })
    }
}

/// Samples `horizon` steps from the current policy, resetting the
/// environment into the next seeded episode whenever one ends.
pub fn collect_rollouts<R: Rng + ?Sized>(
    env: &mut Env,
    cursor: &mut EpisodeCursor,
    params: &MlpParams,
    horizon: usize,
    rng: &mut R,
) -> Result<RolloutBuffer, EnvError> {
    let mut buf = RolloutBuffer::default();
    for _ in 0..horizon {
        let x = cursor.obs.encode();
        let out = params.forward(&x);
        let (action, log_prob) = sample_action(&out, rng);
        let t = env.step(action);
        buf.obs.push(x);
        buf.actions.push(action.index());
        buf.log_probs.push(log_prob);
        buf.rewards.push(t.reward.total);
        buf.values.push(out.value);
        buf.dones.push(t.done);
        buf.tau_r.push(action.tau_r());
        if t.done {
            buf.episodes.push(env.summary());
            cursor.index += 1;
            cursor.obs = env.reset(episode_seed(cursor.base_seed, cursor.index))?;
        } else {
            cursor.obs = t.observation;
        }
    }
    buf.bootstrap_value = if buf.dones.last().copied().unwrap_or(true) {
        0.0
    } else {
        params.forward(&cursor.obs.encode()).value
    };
    Ok(buf)
}

/// Generalized advantage estimates and the matching value targets.
///
/// `delta_t = r_t + gamma v_{t+1} (1 - done_t) - v_t` and
/// `A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}`, with `v_T` the bootstrap value.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(
        values.len() == n && dones.len() == n,
        "buffer columns must have equal length"
    );
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Shifts and scales to zero mean and unit (population) variance.
pub fn normalize(values: &mut [f64]) {
    let n = values.len() as f64;
    if values.is_empty() {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v -= mean;
        if std > 1e-12 {
            *v /= std;
        }
    }
}
