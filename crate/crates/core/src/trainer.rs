//! Gradient-descent training of the predictor: Adam with bias correction,
//! deterministic per-epoch shuffling, global-norm gradient clipping,
//! JSON-lines metrics, checkpointing, and resumable state.
//!
//! Determinism contract: a fixed `(config, data, seed)` triple produces
//! bit-identical metrics logs and checkpoints on every run, and training
//! resumed from a saved checkpoint continues exactly where an
//! uninterrupted run would be. Per-epoch shuffle order is derived from
//! `(seed, epoch)` alone, so it never depends on how often the process
//! was restarted.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{config_hash, TensorStore};
use crate::error::{Error, Result};
use crate::losses::{self, LossMode};
use crate::predictor::{ModelParams, PredictorConfig};
use crate::scalar::Real;
use crate::skeleton_data::SamplePair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss_mode: LossMode,
    /// Penalty-weight temperature.
    pub k: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
    pub lr_decay_per_epoch: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_mode: LossMode::UaFull,
            k: losses::DEFAULT_TEMPERATURE,
            lr: 5e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16,
            epochs: 50,
            grad_clip_norm: Some(1.0),
            seed: 0,
            lr_decay_per_epoch: 0.96,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0)
            || !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0)
        {
            return Err(Error::Argument("Adam betas must lie in (0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Argument("Adam eps must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch size must be >= 1".into()));
        }
        if !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return Err(Error::Argument("lr decay must lie in (0, 1]".into()));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0) {
                return Err(Error::Argument("grad clip norm must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Adam moment estimates, flat in the canonical parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update over flat parameter/gradient buffers.
/// `step` is the post-increment step counter (1 on the first call).
pub fn adam_update_flat<T: Real>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
) -> Result<()> {
    if grads.len() != params.len() || m.len() != params.len() || v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam buffers disagree: params={}, grads={}, m={}, v={}",
            params.len(),
            grads.len(),
            m.len(),
            v.len()
        )));
    }
    if let Some(bad) = grads.iter().find(|g| !g.is_finite()) {
        return Err(Error::Numeric {
            layer: "adam".into(),
            msg: format!("non-finite gradient {bad} after clipping at step {step}"),
        });
    }
    let bc1 = T::one() - beta1.powi(step as i32);
    let bc2 = T::one() - beta2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (T::one() - beta1) * g;
        v[i] = beta2 * v[i] + (T::one() - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Applies one Adam step to the model; increments the step counter.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    state: &mut AdamState<T>,
    grads_flat: &[T],
    lr: T,
    cfg: &TrainConfig,
) -> Result<()> {
    state.step += 1;
    let mut flat = params.to_flat();
    adam_update_flat(
        &mut flat,
        grads_flat,
        &mut state.m,
        &mut state.v,
        state.step,
        lr,
        T::from_f64(cfg.adam_beta1),
        T::from_f64(cfg.adam_beta2),
        T::from_f64(cfg.adam_eps),
    )?;
    params.set_from_flat(&flat);
    Ok(())
}

/// Scales `grads` so its global L2 norm is at most `max_norm`;
/// returns the pre-clip norm.
pub fn clip_global_norm<T: Real>(grads: &mut [T], max_norm: T) -> T {
    let mut sq = T::zero();
    for &g in grads.iter() {
        sq = sq + g * g;
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > T::zero() {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g = *g * scale;
        }
    }
    norm
}

/// Scalar loss components averaged over an epoch, in the metrics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLossSummary {
    pub l_m: f64,
    pub l_m_weighted: f64,
    pub l_n: f64,
    pub total: f64,
}

/// One metrics-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train: TrainLossSummary,
    pub val_mpjpe_mm: f64,
    /// Mean predicted variance per future frame over the validation set.
    pub mean_var_by_frame: Vec<f64>,
    pub mean_w_clean: Option<f64>,
    pub mean_w_corrupted: Option<f64>,
}

/// Serializes metrics as JSON lines, one object per epoch.
pub fn metrics_to_jsonl(metrics: &[EpochMetrics]) -> String {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m).expect("serializable metrics"));
        out.push('\n');
    }
    out
}

/// Model parameters plus optimizer state: everything needed to resume
/// training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint<T> {
    pub params: ModelParams<T>,
    pub adam: AdamState<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub best_val_mpjpe: f64,
    pub train_config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct EmbeddedConfig {
    predictor: PredictorConfig,
    train: TrainConfig,
}

impl<T: Real> ModelCheckpoint<T> {
    /// Fresh checkpoint around initialized parameters.
    pub fn initial(params: ModelParams<T>, train_config: TrainConfig) -> Self {
        let n = params.param_count();
        ModelCheckpoint {
            params,
            adam: AdamState::new(n),
            epoch: 0,
            best_val_mpjpe: f64::INFINITY,
            train_config,
        }
    }

    /// The embedded config JSON (predictor + train).
    pub fn config_json(&self) -> String {
        serde_json::to_string(&EmbeddedConfig {
            predictor: *self.params.config(),
            train: self.train_config,
        })
        .expect("serializable config")
    }

    /// Hex SHA-256 of [`ModelCheckpoint::config_json`].
    pub fn config_hash(&self) -> String {
        config_hash(&self.config_json())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut store = TensorStore::new(self.config_json());
        self.params.visit(|name, dims, data| {
            store.push(
                name,
                dims.to_vec(),
                data.iter().map(|v| v.as_f64()).collect(),
            );
        });
        let n = self.params.param_count();
        store.push(
            "adam.m",
            vec![n],
            self.adam.m.iter().map(|v| v.as_f64()).collect(),
        );
        store.push(
            "adam.v",
            vec![n],
            self.adam.v.iter().map(|v| v.as_f64()).collect(),
        );
        store.push("state.step", vec![], vec![self.adam.step as f64]);
        store.push("state.epoch", vec![], vec![self.epoch as f64]);
        store.push("state.best_val_mpjpe", vec![], vec![self.best_val_mpjpe]);
        store.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let store = TensorStore::from_bytes(bytes)?;
        let cfg: EmbeddedConfig = serde_json::from_str(store.config_json())
            .map_err(|e| Error::Format(format!("bad embedded config: {e}")))?;
        let mut params = ModelParams::<T>::zeros(cfg.predictor)?;
        let mut missing = None;
        params.visit_mut(|name, data| {
            if missing.is_some() {
                return;
            }
            match store.get(name) {
                Some((_, values)) if values.len() == data.len() => {
                    for (d, &v) in data.iter_mut().zip(values.iter()) {
                        *d = T::from_f64(v);
                    }
                }
                Some((_, values)) => {
                    missing = Some(format!(
                        "tensor {name} has {} values, expected {}",
                        values.len(),
                        data.len()
                    ));
                }
                None => missing = Some(format!("missing tensor {name}")),
            }
        });
        if let Some(msg) = missing {
            return Err(Error::Format(msg));
        }
        let n = params.param_count();
        let read_vec = |name: &str| -> Result<Vec<T>> {
            let (_, values) = store
                .get(name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            if values.len() != n {
                return Err(Error::Format(format!(
                    "tensor {name} has {} values, expected {n}",
                    values.len()
                )));
            }
            Ok(values.iter().map(|&v| T::from_f64(v)).collect())
        };
        let read_scalar = |name: &str| -> Result<f64> {
            let (_, values) = store
                .get(name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            if values.len() != 1 {
                return Err(Error::Format(format!("tensor {name} is not a scalar")));
            }
            Ok(values[0])
        };
        let adam = AdamState {
            m: read_vec("adam.m")?,
            v: read_vec("adam.v")?,
            step: read_scalar("state.step")? as u64,
        };
        let epoch = read_scalar("state.epoch")? as usize;
        let best_val_mpjpe = read_scalar("state.best_val_mpjpe")?;
        Ok(ModelCheckpoint {
            params,
            adam,
            epoch,
            best_val_mpjpe,
            train_config: cfg.train,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Writes a checkpoint file; see [`ModelCheckpoint::save`].
pub fn save_checkpoint<T: Real>(ckpt: &ModelCheckpoint<T>, path: &Path) -> Result<()> {
    ckpt.save(path)
}

/// Reads a checkpoint file; see [`ModelCheckpoint::load`].
pub fn load_checkpoint<T: Real>(path: &Path) -> Result<ModelCheckpoint<T>> {
    ModelCheckpoint::load(path)
}

/// Output of a training run.
#[derive(Debug, Clone)]
pub struct TrainResult<T> {
    /// Snapshot with the lowest validation MPJPE seen during this run.
    pub best: ModelCheckpoint<T>,
    /// State after the final completed epoch (resume from this one).
    pub last: ModelCheckpoint<T>,
    pub metrics: Vec<EpochMetrics>,
    /// Set when training aborted on a non-finite loss or gradient; the
    /// checkpoints hold the last good state.
    pub diverged: Option<String>,
}

/// Trains a freshly initialized predictor; see [`resume`] for the
/// continuation path. Returns the best-validation checkpoint, the final
/// state, and the per-epoch metrics log.
pub fn train<T: Real>(
    cfg: &TrainConfig,
    predictor_cfg: PredictorConfig,
    train_pairs: &[SamplePair<T>],
    val_pairs: &[SamplePair<T>],
) -> Result<TrainResult<T>> {
    predictor_cfg.validate()?;
    let params = ModelParams::init(predictor_cfg)?;
    let start = ModelCheckpoint::initial(params, *cfg);
    resume(cfg, start, train_pairs, val_pairs)
}

/// Continues training from a checkpoint until `cfg.epochs` total epochs
/// have completed. With `checkpoint.epoch >= cfg.epochs` this is a no-op
/// that returns the state unchanged.
pub fn resume<T: Real>(
    cfg: &TrainConfig,
    checkpoint: ModelCheckpoint<T>,
    train_pairs: &[SamplePair<T>],
    val_pairs: &[SamplePair<T>],
) -> Result<TrainResult<T>> {
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let pcfg = *checkpoint.params.config();
    check_pairs(train_pairs, &pcfg)?;
    check_pairs(val_pairs, &pcfg)?;

    let k = T::from_f64(cfg.k);
    let mut state = checkpoint;
    state.train_config = *cfg;
    let mut best = state.clone();
    let mut best_val = f64::INFINITY;
    let mut metrics = Vec::new();
    let mut diverged = None;

    'epochs: for epoch in state.epoch..cfg.epochs {
        let lr = T::from_f64(cfg.lr * cfg.lr_decay_per_epoch.powi(epoch as i32));
        let order = shuffled_indices(train_pairs.len(), cfg.seed, epoch);

        let mut sums = TrainLossSummary {
            l_m: 0.0,
            l_m_weighted: 0.0,
            l_n: 0.0,
            total: 0.0,
        };
        let mut n_samples = 0usize;

        for batch in order.chunks(cfg.batch_size) {
            let mut grads_acc = vec![T::zero(); state.params.param_count()];
            let mut ok = true;
            for &idx in batch {
                let pair = &train_pairs[idx];
                let (pred, cache) = state.params.forward_cached(&pair.observed)?;
                let breakdown = losses::total_loss(&pred, &pair.future, k)?;
                let objective = breakdown.objective(cfg.loss_mode).as_f64();
                if !objective.is_finite() {
                    diverged = Some(format!(
                        "non-finite loss {objective} on sample {} at epoch {epoch}",
                        pair.source_id
                    ));
                    ok = false;
                    break;
                }
                sums.l_m += breakdown.l_m.as_f64();
                sums.l_m_weighted += breakdown.l_m_weighted.as_f64();
                sums.l_n += breakdown.l_n.as_f64();
                sums.total += breakdown.total.as_f64();
                n_samples += 1;

                let upstream = losses::gradients_for_mode(&pred, &pair.future, k, cfg.loss_mode)?;
                let sample_grads = state.params.backward(&cache, &upstream)?;
                let mut offset = 0;
                sample_grads.visit(|_, _, data| {
                    for (acc, &g) in grads_acc[offset..offset + data.len()].iter_mut().zip(data) {
                        *acc = *acc + g;
                    }
                    offset += data.len();
                });
            }
            if !ok {
                break 'epochs;
            }
            let inv = T::one() / T::from_usize(batch.len());
            for g in grads_acc.iter_mut() {
                *g = *g * inv;
            }
            if let Some(max_norm) = cfg.grad_clip_norm {
                clip_global_norm(&mut grads_acc, T::from_f64(max_norm));
            }
            if let Err(e) = adam_step(&mut state.params, &mut state.adam, &grads_acc, lr, cfg) {
                diverged = Some(e.to_string());
                break 'epochs;
            }
        }

        state.epoch = epoch + 1;

        let eval_pairs = if val_pairs.is_empty() {
            train_pairs
        } else {
            val_pairs
        };
        let (val_mpjpe, mean_var_by_frame) = validation_stats(&state.params, eval_pairs)?;
        let (mean_w_clean, mean_w_corrupted) = weight_stats(&state.params, train_pairs, k)?;

        let denom = n_samples.max(1) as f64;
        metrics.push(EpochMetrics {
            epoch,
            train: TrainLossSummary {
                l_m: sums.l_m / denom,
                l_m_weighted: sums.l_m_weighted / denom,
                l_n: sums.l_n / denom,
                total: sums.total / denom,
            },
            val_mpjpe_mm: val_mpjpe,
            mean_var_by_frame,
            mean_w_clean,
            mean_w_corrupted,
        });

        if val_mpjpe < best_val {
            best_val = val_mpjpe;
            state.best_val_mpjpe = val_mpjpe.min(state.best_val_mpjpe);
            best = state.clone();
        }
    }

    if best_val.is_infinite() {
        // no epoch ran (or none finished better): best is the start state
        best = state.clone();
    }
    Ok(TrainResult {
        best,
        last: state,
        metrics,
        diverged,
    })
}

fn check_pairs<T: Real>(pairs: &[SamplePair<T>], cfg: &PredictorConfig) -> Result<()> {
    for p in pairs {
        if p.observed.frames() != cfg.t_obs
            || p.future.frames() != cfg.t_future
            || p.joints() != cfg.joints
        {
            return Err(Error::Argument(format!(
                "sample {} has observed {}x{} / future {}x{}, expected {}x{} / {}x{}",
                p.source_id,
                p.observed.frames(),
                p.observed.joints(),
                p.future.frames(),
                p.future.joints(),
                cfg.t_obs,
                cfg.joints,
                cfg.t_future,
                cfg.joints
            )));
        }
    }
    Ok(())
}

/// Deterministic Fisher-Yates permutation keyed by `(seed, epoch)`.
fn shuffled_indices(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1 + epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Mean MPJPE and per-frame mean variance over a sample set.
fn validation_stats<T: Real>(
    params: &ModelParams<T>,
    pairs: &[SamplePair<T>],
) -> Result<(f64, Vec<f64>)> {
    let t_future = params.config().t_future;
    let mut mpjpe_sum = 0.0;
    let mut var_by_frame = vec![0.0f64; t_future];
    let mut var_counts = vec![0usize; t_future];
    for pair in pairs {
        let pred = params.forward(&pair.observed)?;
        let means = pred.means(pair.future.frame_interval_ms());
        mpjpe_sum += losses::mpjpe(&means, &pair.future)?.as_f64();
        for tf in 0..t_future {
            for j in 0..pred.joints() {
                for a in 0..3 {
                    var_by_frame[tf] += pred.get(tf, j, a).var.as_f64();
                    var_counts[tf] += 1;
                }
            }
        }
    }
    let n = pairs.len().max(1) as f64;
    for (v, &c) in var_by_frame.iter_mut().zip(var_counts.iter()) {
        if c > 0 {
            *v /= c as f64;
        }
    }
    Ok((mpjpe_sum / n, var_by_frame))
}

/// Mean penalty weight over clean and corrupted training pairs.
fn weight_stats<T: Real>(
    params: &ModelParams<T>,
    pairs: &[SamplePair<T>],
    k: T,
) -> Result<(Option<f64>, Option<f64>)> {
    let mut clean = (0.0f64, 0usize);
    let mut corrupted = (0.0f64, 0usize);
    for pair in pairs {
        let pred = params.forward(&pair.observed)?;
        let weights = losses::penalty_weights(&pred, k)?;
        let mean =
            weights.iter().map(|w| w.as_f64()).sum::<f64>() / weights.len().max(1) as f64;
        let slot = if pair.corrupted {
            &mut corrupted
        } else {
            &mut clean
        };
        slot.0 += mean;
        slot.1 += 1;
    }
    let avg = |(total, count): (f64, usize)| {
        if count > 0 {
            Some(total / count as f64)
        } else {
            None
        }
    };
    Ok((avg(clean), avg(corrupted)))
}
