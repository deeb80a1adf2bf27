//! Trajectory-space residual predictor with a Gaussian output head.
//!
//! The observed window is padded by repeating its last frame, each
//! joint-axis series is moved to trajectory space (truncated orthonormal
//! DCT), and a stack of residual graph layers mixes channels through a
//! dense learned adjacency. Two decoder streams emit per-frame means and
//! raw log-variances after the inverse transform:
//!
//! - the mean stream is a residual on the padded persistence trajectory,
//!   so the zero-weight model predicts "last observed frame persists";
//! - the variance stream is absolute, `var = exp(clamp(s))`, so the
//!   zero-weight model predicts `var = 1` everywhere.

pub mod dct;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{GaussianCoordinate, GaussianPoseSequence, LossGradients, VAR_MAX, VAR_MIN};
use crate::mat::Mat;
use crate::scalar::Real;
use crate::skeleton_data::PoseSequence;

/// Coordinate scale entering the network, net units per mm.
const INPUT_SCALE: f64 = 1e-2;
/// Scale of the mean-residual stream, mm per net unit.
const MEAN_SCALE: f64 = 1e2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub joints: usize,
    pub t_obs: usize,
    pub t_future: usize,
    /// Retained low-frequency DCT coefficients per joint-axis series.
    pub n_dct_coeffs: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 || self.t_obs == 0 || self.t_future == 0 {
            return Err(Error::Argument(
                "joints, t_obs and t_future must be >= 1".into(),
            ));
        }
        if self.n_dct_coeffs == 0 || self.n_dct_coeffs > self.t_obs + self.t_future {
            return Err(Error::Argument(format!(
                "n_dct_coeffs must be in 1..={}, got {}",
                self.t_obs + self.t_future,
                self.n_dct_coeffs
            )));
        }
        if self.hidden_dim == 0 || self.n_blocks == 0 {
            return Err(Error::Argument(
                "hidden_dim and n_blocks must be >= 1".into(),
            ));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Argument("init_scale must be >= 0".into()));
        }
        Ok(())
    }

    /// Joint-axis channels mixed by the graph layers.
    pub fn channels(&self) -> usize {
        self.joints * 3
    }

    /// Padded trajectory length.
    pub fn window(&self) -> usize {
        self.t_obs + self.t_future
    }
}

/// One channel-mixing layer: `tanh(adj * x * weight + bias)`.
#[derive(Debug, Clone, PartialEq)]
struct GraphLayer<T> {
    adj: Mat<T>,
    weight: Mat<T>,
    bias: Vec<T>,
}

impl<T: Real> GraphLayer<T> {
    fn zeros(channels: usize, in_dim: usize, out_dim: usize) -> Self {
        GraphLayer {
            adj: Mat::zeros(channels, channels),
            weight: Mat::zeros(in_dim, out_dim),
            bias: vec![T::zero(); out_dim],
        }
    }

    /// `adj * (x * weight) + bias`, pre-activation.
    fn apply(&self, x: &Mat<T>) -> Mat<T> {
        let mut u = self.adj.matmul(&x.matmul(&self.weight));
        u.add_row_bias(&self.bias);
        u
    }
}

/// All learnable tensors of the predictor.
///
/// Gradients and optimizer moments reuse this layout (see
/// [`ModelParams::zeros_like`]), so element-wise updates can walk the
/// tensors in one fixed canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    cfg: PredictorConfig,
    embed: GraphLayer<T>,
    blocks: Vec<GraphLayer<T>>,
    head_mean_w: Mat<T>,
    head_mean_b: Vec<T>,
    head_var_w: Mat<T>,
    head_var_b: Vec<T>,
}

/// Cached intermediates of one forward pass, consumed by [`ModelParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Scaled trajectory features, `channels x n_dct_coeffs`.
    xs: Mat<T>,
    /// Hidden state after the embed layer and after each block.
    h_stages: Vec<Mat<T>>,
    /// `tanh` outputs: embed first, then one per block.
    acts: Vec<Mat<T>>,
    /// Raw log-variance trajectories before clamping, per channel.
    s_raw: Vec<Vec<T>>,
}

impl<T: Real> ModelParams<T> {
    /// All-zero parameters: the residual-identity predictor.
    pub fn zeros(cfg: PredictorConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels();
        let m = cfg.n_dct_coeffs;
        let h = cfg.hidden_dim;
        Ok(ModelParams {
            cfg,
            embed: GraphLayer::zeros(c, m, h),
            blocks: (0..cfg.n_blocks).map(|_| GraphLayer::zeros(c, h, h)).collect(),
            head_mean_w: Mat::zeros(h, m),
            head_mean_b: vec![T::zero(); m],
            head_var_w: Mat::zeros(h, m),
            head_var_b: vec![T::zero(); m],
        })
    }

    /// Seeded initialization: weights uniform in
    /// `(-init_scale/sqrt(fan_in), +init_scale/sqrt(fan_in))`, biases zero.
    /// The variance stream starts at zero so the initial prediction has
    /// `var = 1` everywhere.
    pub fn init(cfg: PredictorConfig) -> Result<Self> {
        let mut params = Self::zeros(cfg)?;
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let mut fill = |mat: &mut Mat<T>, fan_in: usize| {
            let bound = cfg.init_scale / (fan_in as f64).sqrt();
            for v in mat.data_mut() {
                *v = if bound > 0.0 {
                    T::from_f64(rng.gen_range(-bound..bound))
                } else {
                    T::zero()
                };
            }
        };
        let c = cfg.channels();
        fill(&mut params.embed.adj, c);
        fill(&mut params.embed.weight, cfg.n_dct_coeffs);
        for b in 0..cfg.n_blocks {
            fill(&mut params.blocks[b].adj, c);
            fill(&mut params.blocks[b].weight, cfg.hidden_dim);
        }
        fill(&mut params.head_mean_w, cfg.hidden_dim);
        // head_var_w and all biases stay zero
        Ok(params)
    }

    /// Same-shape container of zeros (for gradients and moments).
    pub fn zeros_like(&self) -> ModelParams<T> {
        ModelParams::zeros(self.cfg).expect("existing config is valid")
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.cfg
    }

    /// Visits every tensor as `(name, dims, data)` in canonical order.
    pub fn visit(&self, mut f: impl FnMut(&str, &[usize], &[T])) {
        let c = self.cfg.channels();
        let m = self.cfg.n_dct_coeffs;
        let h = self.cfg.hidden_dim;
        f("embed.adj", &[c, c], self.embed.adj.data());
        f("embed.weight", &[m, h], self.embed.weight.data());
        f("embed.bias", &[h], &self.embed.bias);
        for (i, b) in self.blocks.iter().enumerate() {
            f(&format!("block.{i}.adj"), &[c, c], b.adj.data());
            f(&format!("block.{i}.weight"), &[h, h], b.weight.data());
            f(&format!("block.{i}.bias"), &[h], &b.bias);
        }
        f("head.mean.weight", &[h, m], self.head_mean_w.data());
        f("head.mean.bias", &[m], &self.head_mean_b);
        f("head.var.weight", &[h, m], self.head_var_w.data());
        f("head.var.bias", &[m], &self.head_var_b);
    }

    /// Mutable tensor walk in the same canonical order as [`ModelParams::visit`].
    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut [T])) {
        f("embed.adj", self.embed.adj.data_mut());
        f("embed.weight", self.embed.weight.data_mut());
        f("embed.bias", &mut self.embed.bias);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            f(&format!("block.{i}.adj"), b.adj.data_mut());
            f(&format!("block.{i}.weight"), b.weight.data_mut());
            f(&format!("block.{i}.bias"), &mut b.bias);
        }
        f("head.mean.weight", self.head_mean_w.data_mut());
        f("head.mean.bias", &mut self.head_mean_b);
        f("head.var.weight", self.head_var_w.data_mut());
        f("head.var.bias", &mut self.head_var_b);
    }

    /// Total learnable scalar count.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _, data| n += data.len());
        n
    }

    /// All parameters concatenated in canonical tensor order.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(|_, _, data| out.extend_from_slice(data));
        out
    }

    /// Overwrites every parameter from a canonical-order flat buffer.
    pub fn set_from_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.param_count(), "flat buffer length");
        let mut offset = 0;
        self.visit_mut(|_, data| {
            data.copy_from_slice(&flat[offset..offset + data.len()]);
            offset += data.len();
        });
    }

    /// Scalars in the full Gaussian head (mean and variance streams).
    pub fn head_param_count(&self) -> usize {
        self.head_mean_w.data().len()
            + self.head_mean_b.len()
            + self.head_var_w.data().len()
            + self.head_var_b.len()
    }

    /// Per-prediction output count of the Gaussian head: two values
    /// (mean, variance) per coordinate per future frame.
    pub fn gaussian_head_outputs(&self) -> usize {
        2 * 3 * self.cfg.joints * self.cfg.t_future
    }

    /// Per-prediction output count of a mean-only head.
    pub fn mean_only_head_outputs(&self) -> usize {
        3 * self.cfg.joints * self.cfg.t_future
    }

    /// Forward pass; see [`ModelParams::forward_cached`].
    pub fn forward(&self, observed: &PoseSequence<T>) -> Result<GaussianPoseSequence<T>> {
        Ok(self.forward_cached(observed)?.0)
    }

    /// Runs the network on one observed window, returning the Gaussian
    /// prediction for the `t_future` frames plus the cache needed by
    /// [`ModelParams::backward`].
    pub fn forward_cached(
        &self,
        observed: &PoseSequence<T>,
    ) -> Result<(GaussianPoseSequence<T>, ForwardCache<T>)> {
        let cfg = &self.cfg;
        if observed.frames() != cfg.t_obs || observed.joints() != cfg.joints {
            return Err(Error::Argument(format!(
                "observed window is {}x{}, expected {}x{}",
                observed.frames(),
                observed.joints(),
                cfg.t_obs,
                cfg.joints
            )));
        }
        let channels = cfg.channels();
        let window = cfg.window();
        let m = cfg.n_dct_coeffs;

        let padded = padded_trajectories(observed, cfg.t_future);
        let features = encode_trajectories(&padded, m);
        let xs = features.map(|v| v * T::from_f64(INPUT_SCALE));

        // embed
        let u0 = self.embed.apply(&xs);
        let a0 = u0.map(|v| v.tanh());
        check_finite(&a0, "embed")?;
        let mut h = a0.clone();
        let mut h_stages = vec![h.clone()];
        let mut acts = vec![a0];

        for (i, block) in self.blocks.iter().enumerate() {
            let u = block.apply(&h);
            let a = u.map(|v| v.tanh());
            check_finite(&a, &format!("block.{i}"))?;
            h.add_assign(&a);
            h_stages.push(h.clone());
            acts.push(a);
        }

        // decoder streams, per channel: coefficients -> frames
        let mut d_mu = h.matmul(&self.head_mean_w);
        d_mu.add_row_bias(&self.head_mean_b);
        let mut d_s = h.matmul(&self.head_var_w);
        d_s.add_row_bias(&self.head_var_b);
        check_finite(&d_mu, "head.mean")?;
        check_finite(&d_s, "head.var")?;

        let vmin = T::from_f64(VAR_MIN);
        let vmax = T::from_f64(VAR_MAX);
        let mean_scale = T::from_f64(MEAN_SCALE);
        let mut s_raw = Vec::with_capacity(channels);
        let mut params = vec![
            GaussianCoordinate {
                mu: T::zero(),
                var: T::zero(),
            };
            cfg.t_future * cfg.joints * 3
        ];
        for c in 0..channels {
            let r_mu = dct::idct(&dct::dct_zero_pad(d_mu.row(c), window));
            let r_s = dct::idct(&dct::dct_zero_pad(d_s.row(c), window));
            let joint = c / 3;
            let axis = c % 3;
            for tf in 0..cfg.t_future {
                let t = cfg.t_obs + tf;
                let mu = padded[c][t] + mean_scale * r_mu[t];
                let var = clamp(r_s[t].exp(), vmin, vmax);
                if !mu.is_finite() || !var.is_finite() {
                    return Err(Error::Numeric {
                        layer: "output".into(),
                        msg: format!("mu={mu}, var={var} at frame {tf}, channel {c}"),
                    });
                }
                params[(tf * cfg.joints + joint) * 3 + axis] = GaussianCoordinate { mu, var };
            }
            s_raw.push(r_s);
        }

        let pred = GaussianPoseSequence::from_params(cfg.joints, params)?;
        Ok((
            pred,
            ForwardCache {
                xs,
                h_stages,
                acts,
                s_raw,
            },
        ))
    }

    /// Exact reverse-mode gradients of the loss with respect to every
    /// parameter, given the upstream loss gradients (w.r.t. predicted means
    /// and raw log-variances) and the matching forward cache.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        upstream: &LossGradients<T>,
    ) -> Result<ModelParams<T>> {
        let cfg = &self.cfg;
        let channels = cfg.channels();
        let window = cfg.window();
        let m = cfg.n_dct_coeffs;
        let n_out = cfg.t_future * cfg.joints * 3;
        if upstream.d_mu.len() != n_out || upstream.d_raw_var.len() != n_out {
            return Err(Error::Shape(format!(
                "upstream gradient length {} / {}, expected {n_out}",
                upstream.d_mu.len(),
                upstream.d_raw_var.len()
            )));
        }
        if cache.h_stages.len() != cfg.n_blocks + 1 || cache.s_raw.len() != channels {
            return Err(Error::Argument(
                "forward cache does not match this configuration".into(),
            ));
        }

        let vmin = T::from_f64(VAR_MIN);
        let vmax = T::from_f64(VAR_MAX);
        let mean_scale = T::from_f64(MEAN_SCALE);
        let mut grads = self.zeros_like();

        // frame-space gradients back to coefficient space
        let mut dd_mu = Mat::zeros(channels, m);
        let mut dd_s = Mat::zeros(channels, m);
        for c in 0..channels {
            let joint = c / 3;
            let axis = c % 3;
            let mut dr_mu = vec![T::zero(); window];
            let mut dr_s = vec![T::zero(); window];
            for tf in 0..cfg.t_future {
                let t = cfg.t_obs + tf;
                let idx = (tf * cfg.joints + joint) * 3 + axis;
                dr_mu[t] = mean_scale * upstream.d_mu[idx];
                // the clamp is flat outside (vmin, vmax): no gradient there
                let var_unclamped = cache.s_raw[c][t].exp();
                dr_s[t] = if var_unclamped > vmin && var_unclamped < vmax {
                    upstream.d_raw_var[idx]
                } else {
                    T::zero()
                };
            }
            // adjoint of zero-pad then inverse transform
            let c_mu = dct::dct_truncate(&dct::dct_forward(&dr_mu), m);
            let c_s = dct::dct_truncate(&dct::dct_forward(&dr_s), m);
            grads_row_copy(&mut dd_mu, c, &c_mu);
            grads_row_copy(&mut dd_s, c, &c_s);
        }

        // head
        let h_final = cache.h_stages.last().expect("nonempty stages");
        grads
            .head_mean_w
            .data_mut()
            .copy_from_slice(h_final.matmul_tn(&dd_mu).data());
        grads.head_mean_b = dd_mu.col_sums();
        grads
            .head_var_w
            .data_mut()
            .copy_from_slice(h_final.matmul_tn(&dd_s).data());
        grads.head_var_b = dd_s.col_sums();
        let mut dh = dd_mu.matmul_nt(&self.head_mean_w);
        dh.add_assign(&dd_s.matmul_nt(&self.head_var_w));

        // residual blocks, reversed
        for i in (0..cfg.n_blocks).rev() {
            let block = &self.blocks[i];
            let h_in = &cache.h_stages[i];
            let act = &cache.acts[i + 1];
            let du = dh.hadamard(&act.map(|a| T::one() - a * a));
            grads.blocks[i].bias = du.col_sums();
            let mixed = h_in.matmul(&block.weight);
            grads.blocks[i]
                .adj
                .data_mut()
                .copy_from_slice(du.matmul_nt(&mixed).data());
            let dm = block.adj.matmul_tn(&du);
            grads.blocks[i]
                .weight
                .data_mut()
                .copy_from_slice(h_in.matmul_tn(&dm).data());
            dh.add_assign(&dm.matmul_nt(&block.weight));
        }

        // embed
        let du0 = dh.hadamard(&cache.acts[0].map(|a| T::one() - a * a));
        grads.embed.bias = du0.col_sums();
        let mixed0 = cache.xs.matmul(&self.embed.weight);
        grads
            .embed
            .adj
            .data_mut()
            .copy_from_slice(du0.matmul_nt(&mixed0).data());
        let dm0 = self.embed.adj.matmul_tn(&du0);
        grads
            .embed
            .weight
            .data_mut()
            .copy_from_slice(cache.xs.matmul_tn(&dm0).data());

        Ok(grads)
    }
}

#[inline]
fn clamp<T: Real>(v: T, lo: T, hi: T) -> T {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

fn grads_row_copy<T: Real>(mat: &mut Mat<T>, row: usize, values: &[T]) {
    mat.row_mut(row).copy_from_slice(values);
}

fn check_finite<T: Real>(mat: &Mat<T>, layer: &str) -> Result<()> {
    for &v in mat.data() {
        if !v.is_finite() {
            return Err(Error::Numeric {
                layer: layer.into(),
                msg: format!("value {v}"),
            });
        }
    }
    Ok(())
}

/// Joint-axis trajectories of the observed window, padded to
/// `t_obs + pad_len` frames by repeating the last observed frame.
/// Channel `c` is joint `c / 3`, axis `c % 3`; the first `t_obs` entries
/// reproduce the observed series exactly.
pub fn padded_trajectories<T: Real>(observed: &PoseSequence<T>, pad_len: usize) -> Vec<Vec<T>> {
    let t_obs = observed.frames();
    let channels = observed.joints() * 3;
    let mut out = Vec::with_capacity(channels);
    for c in 0..channels {
        let joint = c / 3;
        let axis = c % 3;
        let mut series = Vec::with_capacity(t_obs + pad_len);
        for t in 0..t_obs + pad_len {
            series.push(observed.coord(t.min(t_obs - 1), joint, axis));
        }
        out.push(series);
    }
    out
}

fn encode_trajectories<T: Real>(padded: &[Vec<T>], m: usize) -> Mat<T> {
    let mut features = Mat::zeros(padded.len(), m);
    for (c, series) in padded.iter().enumerate() {
        let coeffs = dct::dct_truncate(&dct::dct_forward(series), m);
        features.row_mut(c).copy_from_slice(&coeffs);
    }
    features
}

/// Trajectory-space features of an observed window: each joint-axis series
/// padded by repeating the last observed frame for `cfg.t_future` steps,
/// then transformed and truncated to `cfg.n_dct_coeffs` coefficients.
/// Returns a `channels x n_dct_coeffs` matrix.
pub fn pad_and_encode<T: Real>(observed: &PoseSequence<T>, cfg: &PredictorConfig) -> Result<Mat<T>> {
    if observed.frames() != cfg.t_obs || observed.joints() != cfg.joints {
        return Err(Error::Argument(format!(
            "observed window is {}x{}, expected {}x{}",
            observed.frames(),
            observed.joints(),
            cfg.t_obs,
            cfg.joints
        )));
    }
    let window = cfg.t_obs + cfg.t_future;
    if cfg.n_dct_coeffs == 0 || cfg.n_dct_coeffs > window {
        return Err(Error::Argument(format!(
            "n_dct_coeffs must be in 1..={window}, got {}",
            cfg.n_dct_coeffs
        )));
    }
    Ok(encode_trajectories(
        &padded_trajectories(observed, cfg.t_future),
        cfg.n_dct_coeffs,
    ))
}
