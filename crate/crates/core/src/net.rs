//! Policy/value network with hand-written backpropagation.
//!
//! A tanh trunk feeds two linear heads: action logits and a scalar state
//! value. Parameters live in one flat `f64` buffer. Layers are stored in
//! order: trunk layers, then the policy head, then the value head. Each
//! layer stores its weights row-major as `[fan_out][fan_in]`, followed by
//! its `fan_out` biases.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ActionId, ACTION_COUNT, TAU_BUCKETS};

pub const MAGIC: &[u8; 8] = b"TNAVMLP\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a network file (bad magic)")]
    BadMagic,
    #[error("unsupported network format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt network file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl Layer {
    fn bias_offset(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }

    fn len(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }

    fn apply(&self, params: &[f64], x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let b = self.bias_offset();
        for j in 0..self.fan_out {
            let row = &params[self.offset + j * self.fan_in..self.offset + (j + 1) * self.fan_in];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(z + params[b + j]);
        }
    }

    /// Accumulates weight/bias gradients for output gradient `dz` at input
    /// `x`, and adds `W^T dz` into `dx` when given.
    fn backprop(
        &self,
        params: &[f64],
        x: &[f64],
        dz: &[f64],
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let b = self.bias_offset();
        for j in 0..self.fan_out {
            let row = self.offset + j * self.fan_in;
            for (i, v) in x.iter().enumerate() {
                grad[row + i] += dz[j] * v;
            }
            grad[b + j] += dz[j];
        }
        if let Some(dx) = dx {
            for j in 0..self.fan_out {
                let row =
                    &params[self.offset + j * self.fan_in..self.offset + (j + 1) * self.fan_in];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += w * dz[j];
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    input: usize,
    hidden: Vec<usize>,
    actions: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub value: f64,
}

struct Activations {
    /// Input followed by each hidden layer's tanh output.
    layers: Vec<Vec<f64>>,
    out: PolicyOutput,
}

/// Numerically stable softmax with its logarithm.
pub fn log_softmax(logits: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let log_z = max + sum.ln();
    let log_probs: Vec<f64> = logits.iter().map(|l| l - log_z).collect();
    let probs = log_probs.iter().map(|lp| lp.exp()).collect();
    (probs, log_probs)
}

/// Weights of the PPO composite loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub clip_epsilon: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// One training example for the composite loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample<'a> {
    pub obs: &'a [f64],
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Minibatch means of the loss components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub mean_ratio: f64,
    /// Largest `|ratio - 1|` in the minibatch.
    pub max_ratio_deviation: f64,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(input: usize, hidden: &[usize], actions: usize, seed: u64) -> Self {
        assert!(input > 0 && actions > 0 && !hidden.is_empty() && hidden.iter().all(|h| *h > 0));
        let mut net = Self {
            input,
            hidden: hidden.to_vec(),
            actions,
            values: Vec::new(),
        };
        net.values = vec![0.0; net.layers().iter().map(Layer::len).sum()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in net.layers() {
            let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for w in &mut net.values[layer.offset..layer.bias_offset()] {
                *w = dist.sample(&mut rng);
            }
        }
        net
    }

    fn layers(&self) -> Vec<Layer> {
        let mut sizes = vec![self.input];
        sizes.extend(&self.hidden);
        let last = *sizes.last().expect("non-empty");
        let mut shapes: Vec<(usize, usize)> = sizes.windows(2).map(|w| (w[0], w[1])).collect();
        shapes.push((last, self.actions));
        shapes.push((last, 1));
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let layer = Layer {
                    fan_in,
                    fan_out,
                    offset,
                };
                offset += layer.len();
                layer
            })
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn action_dim(&self) -> usize {
        self.actions
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Index range of the policy head's parameters.
    pub fn policy_head_range(&self) -> std::ops::Range<usize> {
        let layers = self.layers();
        let l = layers[layers.len() - 2];
        l.offset..l.offset + l.len()
    }

    /// Index range of the value head's parameters.
    pub fn value_head_range(&self) -> std::ops::Range<usize> {
        let l = *self.layers().last().expect("value head");
        l.offset..l.offset + l.len()
    }

    fn activations(&self, obs: &[f64]) -> Activations {
        assert_eq!(obs.len(), self.input, "observation length");
        assert!(
            obs.iter().all(|v| v.is_finite()),
            "non-finite observation {obs:?}"
        );
        let layers = self.layers();
        let (trunk, heads) = layers.split_at(self.hidden.len());
        let mut acts = vec![obs.to_vec()];
        for layer in trunk {
            let mut z = Vec::with_capacity(layer.fan_out);
            layer.apply(&self.values, acts.last().expect("input"), &mut z);
            z.iter_mut().for_each(|v| *v = v.tanh());
            acts.push(z);
        }
        let h = acts.last().expect("trunk output");
        let mut logits = Vec::with_capacity(self.actions);
        heads[0].apply(&self.values, h, &mut logits);
        let mut value = Vec::with_capacity(1);
        heads[1].apply(&self.values, h, &mut value);
        let (probs, log_probs) = log_softmax(&logits);
        Activations {
            layers: acts,
            out: PolicyOutput {
                logits,
                probs,
                log_probs,
                value: value[0],
            },
        }
    }

    /// Panics on non-finite input.
    pub fn forward(&self, obs: &[f64]) -> PolicyOutput {
        self.activations(obs).out
    }

    /// Mean composite PPO loss over `batch` and its gradient:
    /// `-min(rA, clip(r, 1-e, 1+e)A) + c_v (R - V)^2 - c_e H`.
    pub fn loss_and_gradient(
        &self,
        batch: &[LossSample<'_>],
        spec: &LossSpec,
    ) -> (LossStats, Vec<f64>) {
        assert!(!batch.is_empty(), "empty minibatch");
        let layers = self.layers();
        let (trunk, heads) = layers.split_at(self.hidden.len());
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.values.len()];
        let mut stats = LossStats::default();
        let (lo, hi) = (1.0 - spec.clip_epsilon, 1.0 + spec.clip_epsilon);

        for sample in batch {
            let acts = self.activations(sample.obs);
            let out = &acts.out;
            let log_p = out.log_probs[sample.action];
            let ratio = (log_p - sample.old_log_prob).exp();
            let a = sample.advantage;
            let unclipped = ratio * a;
            let clipped = ratio.clamp(lo, hi) * a;
            let use_unclipped = unclipped <= clipped;
            let surrogate = unclipped.min(clipped);
            let entropy: f64 = -out
                .probs
                .iter()
                .zip(&out.log_probs)
                .map(|(p, lp)| p * lp)
                .sum::<f64>();
            let value_err = sample.ret - out.value;

            stats.policy_loss -= surrogate / n;
            stats.value_loss += value_err * value_err / n;
            stats.entropy += entropy / n;
            stats.clip_fraction += f64::from(u8::from(!(lo..=hi).contains(&ratio))) / n;
            stats.approx_kl += (sample.old_log_prob - log_p) / n;
            stats.mean_ratio += ratio / n;
            stats.max_ratio_deviation = stats.max_ratio_deviation.max((ratio - 1.0).abs());

            // d loss / d logits
            let mut dlogits = vec![0.0; self.actions];
            if use_unclipped {
                let coef = -a * ratio / n;
                for (j, p) in out.probs.iter().enumerate() {
                    let onehot = if j == sample.action { 1.0 } else { 0.0 };
                    dlogits[j] += coef * (onehot - p);
                }
            }
            if spec.entropy_coef != 0.0 {
                for (j, (p, lp)) in out.probs.iter().zip(&out.log_probs).enumerate() {
                    dlogits[j] += spec.entropy_coef * p * (lp + entropy) / n;
                }
            }
            let dvalue = [-2.0 * spec.value_coef * value_err / n];

            let h = acts.layers.last().expect("trunk output");
            let mut dh = vec![0.0; h.len()];
            heads[0].backprop(&self.values, h, &dlogits, &mut grad, Some(&mut dh));
            heads[1].backprop(&self.values, h, &dvalue, &mut grad, Some(&mut dh));
            for (k, layer) in trunk.iter().enumerate().rev() {
                let out_act = &acts.layers[k + 1];
                let dz: Vec<f64> = dh
                    .iter()
                    .zip(out_act)
                    .map(|(d, y)| d * (1.0 - y * y))
                    .collect();
                let x = &acts.layers[k];
                if k == 0 {
                    layer.backprop(&self.values, x, &dz, &mut grad, None);
                } else {
                    let mut dx = vec![0.0; x.len()];
                    layer.backprop(&self.values, x, &dz, &mut grad, Some(&mut dx));
                    dh = dx;
                }
            }
        }
        stats.total = stats.policy_loss + spec.value_coef * stats.value_loss
            - spec.entropy_coef * stats.entropy;
        (stats, grad)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), NetError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.hidden.len() as u32).to_le_bytes())?;
        w.write_all(&(self.input as u32).to_le_bytes())?;
        for h in &self.hidden {
            w.write_all(&(*h as u32).to_le_bytes())?;
        }
        w.write_all(&(self.actions as u32).to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, NetError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NetError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(NetError::UnsupportedVersion(version));
        }
        let depth = read_u32(r)? as usize;
        if depth == 0 || depth > 64 {
            return Err(NetError::Corrupt(format!("implausible depth {depth}")));
        }
        let input = read_u32(r)? as usize;
        let hidden = (0..depth)
            .map(|_| read_u32(r).map(|v| v as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let actions = read_u32(r)? as usize;
        if input == 0 || actions == 0 || hidden.contains(&0) {
            return Err(NetError::Corrupt("zero layer size".into()));
        }
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let count = u64::from_le_bytes(buf) as usize;
        let mut net = Self {
            input,
            hidden,
            actions,
            values: Vec::new(),
        };
        let expected: usize = net.layers().iter().map(Layer::len).sum();
        if count != expected {
            return Err(NetError::Corrupt(format!(
                "{count} parameters, layout needs {expected}"
            )));
        }
        net.values = (0..count)
            .map(|_| {
                r.read_exact(&mut buf)?;
                Ok(f64::from_le_bytes(buf))
            })
            .collect::<Result<Vec<_>, io::Error>>()?;
        if !net.values.iter().all(|v| v.is_finite()) {
            return Err(NetError::Corrupt("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NetError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Categorical draw; returns the action and its log-probability.
pub fn sample_action<R: Rng + ?Sized>(out: &PolicyOutput, rng: &mut R) -> (ActionId, f64) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut pick = out.probs.len() - 1;
    for (i, p) in out.probs.iter().enumerate() {
        acc += p;
        if u < acc {
            pick = i;
            break;
        }
    }
    (ActionId::new(pick), out.log_probs[pick])
}

/// Deterministic action choice: the reactive behaviour with the largest
/// total probability across its trust buckets, then that behaviour's most
/// probable bucket (lowest index on ties).
///
/// Taking the plain argmax over all 50 actions would favour behaviours whose
/// probability happens to be concentrated in one bucket over behaviours the
/// policy prefers overall but is unsure how much to trust.
pub fn greedy_action(out: &PolicyOutput) -> ActionId {
    let group_mass = |r: usize| -> f64 {
        out.probs[r * TAU_BUCKETS..(r + 1) * TAU_BUCKETS]
            .iter()
            .sum()
    };
    let mut reactive = 0;
    for r in 1..ACTION_COUNT / TAU_BUCKETS {
        if group_mass(r) > group_mass(reactive) {
            reactive = r;
        }
    }
    let mut best = reactive * TAU_BUCKETS;
    for i in best..best + TAU_BUCKETS {
        if out.probs[i] > out.probs[best] {
            best = i;
        }
    }
    ActionId::new(best)
}
