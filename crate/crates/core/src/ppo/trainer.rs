use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    collect_rollouts, compute_gae, normalize, ppo_update, Adam, EpisodeCursor, NonFiniteLoss,
};
use crate::config::Config;
use crate::env::{episode_seed, Env, EnvError, ACTION_COUNT, OBS_DIM};
use crate::logging::{JsonlWriter, LogError};
use crate::net::{MlpParams, NetError};

/// Number of most recent training actions whose robot trust is tracked.
pub const TAU_TAIL: usize = 1000;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    NonFinite(#[from] NonFiniteLoss),
    #[error("cannot write checkpoint {path}: {source}; training stopped, resume from the last checkpoint written")]
    CheckpointWrite {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot read checkpoint {path}: {message}")]
    CheckpointRead { path: PathBuf, message: String },
    #[error("cannot create output directory {path}: {source}")]
    OutDir {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update: usize,
    /// Environment steps taken so far.
    pub step: usize,
    /// Episodes finished during this update's rollout.
    pub episodes: usize,
    pub mean_episode_reward: Option<f64>,
    pub success_rate: Option<f64>,
    /// Mean robot trust of the actions taken in this rollout.
    pub mean_tau_r: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Everything besides the weights needed to continue a run bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainerState {
    config: Config,
    step: usize,
    update: usize,
    rng: ChaCha8Rng,
    adam: Adam,
    env: Env,
    cursor: EpisodeCursor,
    tau_tail: VecDeque<f64>,
    episode_rewards: Vec<f64>,
    episode_successes: Vec<bool>,
}

/// A saved trainer: network file format first, then the run state as JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    state: TrainerState,
}

impl Checkpoint {
    pub fn step(&self) -> usize {
        self.state.step
    }

    pub fn config(&self) -> &Config {
        &self.state.config
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        self.params.write_to(w).map_err(|e| match e {
            NetError::Io(e) => e,
            other => io::Error::other(other.to_string()),
        })?;
        let blob = serde_json::to_vec(&self.state).expect("trainer state serializes");
        w.write_all(&(blob.len() as u64).to_le_bytes())?;
        w.write_all(&blob)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, String> {
        let params = MlpParams::read_from(r).map_err(|e| e.to_string())?;
        let mut len = [0u8; 8];
        r.read_exact(&mut len)
            .map_err(|e| format!("missing trainer state: {e}"))?;
        let len = u64::from_le_bytes(len) as usize;
        let mut blob = Vec::new();
        r.take(len as u64)
            .read_to_end(&mut blob)
            .map_err(|e| e.to_string())?;
        if blob.len() != len {
            return Err(format!(
                "trainer state truncated ({} of {len} bytes)",
                blob.len()
            ));
        }
        let state = serde_json::from_slice(&blob).map_err(|e| format!("bad trainer state: {e}"))?;
        Ok(Self { params, state })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let err = |source| TrainError::CheckpointWrite {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(err)?);
        self.write_to(&mut w).map_err(err)?;
        w.flush().map_err(err)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let file = File::open(path).map_err(|e| TrainError::CheckpointRead {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::read_from(&mut BufReader::new(file)).map_err(|message| TrainError::CheckpointRead {
            path: path.to_path_buf(),
            message,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub updates: usize,
    pub steps: usize,
    pub episodes: usize,
    pub final_checkpoint: Option<PathBuf>,
    /// Mean robot trust over the last [`TAU_TAIL`] training actions.
    pub tail_mean_tau_r: f64,
}

pub struct Trainer {
    ckpt: Checkpoint,
}

impl Trainer {
    pub fn new(config: &Config) -> Result<Self, TrainError> {
        let train = &config.train;
        let params = MlpParams::init(
            OBS_DIM,
            &train.hidden,
            ACTION_COUNT,
            episode_seed(train.seed, u64::MAX),
        );
        let mut env = Env::new(config)?;
        let cursor = EpisodeCursor::start(&mut env, train.seed)?;
        let adam = Adam::new(params.param_count());
        Ok(Self {
            ckpt: Checkpoint {
                params,
                state: TrainerState {
                    config: config.clone(),
                    step: 0,
                    update: 0,
                    rng: ChaCha8Rng::seed_from_u64(train.seed),
                    adam,
                    env,
                    cursor,
                    tau_tail: VecDeque::with_capacity(TAU_TAIL),
                    episode_rewards: Vec::new(),
                    episode_successes: Vec::new(),
                },
            },
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Self {
        Self { ckpt }
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.ckpt
    }

    pub fn params(&self) -> &MlpParams {
        &self.ckpt.params
    }

    pub fn config(&self) -> &Config {
        &self.ckpt.state.config
    }

    pub fn step(&self) -> usize {
        self.ckpt.state.step
    }

    pub fn update(&self) -> usize {
        self.ckpt.state.update
    }

    /// Updates in a full run: whole horizons that fit in `total_steps`.
    pub fn total_updates(&self) -> usize {
        let t = &self.config().train;
        t.total_steps / t.horizon
    }

    pub fn is_finished(&self) -> bool {
        self.update() >= self.total_updates()
    }

    /// Returns of every finished training episode, in order.
    pub fn episode_rewards(&self) -> &[f64] {
        &self.ckpt.state.episode_rewards
    }

    pub fn tail_mean_tau_r(&self) -> f64 {
        let tail = &self.ckpt.state.tau_tail;
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }

    /// One collect/advantage/optimize cycle.
    pub fn run_update(&mut self) -> Result<UpdateRecord, TrainError> {
        let Checkpoint { params, state } = &mut self.ckpt;
        let cfg = state.config.train.clone();
        let buf = collect_rollouts(
            &mut state.env,
            &mut state.cursor,
            params,
            cfg.horizon,
            &mut state.rng,
        )?;
        let scaled: Vec<f64> = buf.rewards.iter().map(|r| r * cfg.reward_scale).collect();
        let (mut adv, ret) = compute_gae(
            &scaled,
            &buf.values,
            &buf.dones,
            buf.bootstrap_value,
            cfg.gamma,
            cfg.gae_lambda,
        );
        normalize(&mut adv);
        let stats = ppo_update(
            params,
            &mut state.adam,
            &buf,
            &adv,
            &ret,
            &cfg,
            state.update,
            &mut state.rng,
        )?;

        for tau in &buf.tau_r {
            if state.tau_tail.len() == TAU_TAIL {
                state.tau_tail.pop_front();
            }
            state.tau_tail.push_back(*tau);
        }
        for e in &buf.episodes {
            state.episode_rewards.push(e.reward);
            state.episode_successes.push(e.success);
        }
        state.step += buf.len();
        state.update += 1;

        let episodes = buf.episodes.len();
        let mean = |f: &dyn Fn(&crate::env::EpisodeSummary) -> f64| {
            (episodes > 0).then(|| buf.episodes.iter().map(f).sum::<f64>() / episodes as f64)
        };
        Ok(UpdateRecord {
            update: state.update,
            step: state.step,
            episodes,
            mean_episode_reward: mean(&|e| e.reward),
            success_rate: mean(&|e| f64::from(u8::from(e.success))),
            mean_tau_r: buf.tau_r.iter().sum::<f64>() / buf.len() as f64,
            policy_loss: stats.loss.policy_loss,
            value_loss: stats.loss.value_loss,
            entropy: stats.loss.entropy,
            approx_kl: stats.loss.approx_kl,
            clip_fraction: stats.loss.clip_fraction,
            grad_norm: stats.grad_norm,
        })
    }

    pub fn checkpoint_path(out_dir: &Path, step: usize) -> PathBuf {
        out_dir.join(format!("checkpoint_{step}"))
    }

    /// Runs the remaining updates, appending to `out_dir/metrics.jsonl`
    /// (created fresh when starting from update 0) and writing
    /// `checkpoint_<step>` every `checkpoint_every` updates and at the end.
    pub fn run(&mut self, out_dir: &Path) -> Result<TrainSummary, TrainError> {
        fs::create_dir_all(out_dir).map_err(|source| TrainError::OutDir {
            path: out_dir.to_path_buf(),
            source,
        })?;
        let metrics = out_dir.join("metrics.jsonl");
        let mut log = if self.update() == 0 {
            JsonlWriter::create(&metrics)?
        } else {
            JsonlWriter::append(&metrics)?
        };
        let every = self.config().train.checkpoint_every;
        let mut last = None;
        while !self.is_finished() {
            let record = self.run_update()?;
            log.write(&record)?;
            let final_update = self.is_finished();
            if final_update || (every > 0 && self.update() % every == 0) {
                let path = Self::checkpoint_path(out_dir, self.step());
                self.ckpt.save(&path)?;
                last = Some(path);
            }
        }
        Ok(TrainSummary {
            updates: self.update(),
            steps: self.step(),
            episodes: self.ckpt.state.episode_rewards.len(),
            final_checkpoint: last,
            tail_mean_tau_r: self.tail_mean_tau_r(),
        })
    }
}
