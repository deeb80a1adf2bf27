//! Loss terms for uncertainty-aware motion prediction.
//!
//! Every predicted coordinate is a Gaussian `(mu, var)`; `var` is the
//! variance in mm^2 (not the standard deviation). The objective combines
//! a per-coordinate Gaussian negative log-likelihood averaged over frames
//! and joints with a coordinate-error term whose per-joint contribution is
//! scaled by a variance-derived penalty weight.
//!
//! All reductions run left-to-right over `(frame, joint, axis)` so repeated
//! evaluations are bit-identical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::skeleton_data::PoseSequence;

/// Variance floor, mm^2. Raw head outputs are clamped so `var` never
/// leaves `[VAR_MIN, VAR_MAX]`.
pub const VAR_MIN: f64 = 1e-6;
/// Variance ceiling, mm^2.
pub const VAR_MAX: f64 = 1e6;
/// Default penalty-weight temperature.
pub const DEFAULT_TEMPERATURE: f64 = -0.2;

/// A single predicted coordinate: mean (mm) and variance (mm^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCoordinate<T> {
    pub mu: T,
    pub var: T,
}

/// Predicted future motion: `frames x joints x 3` Gaussian coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPoseSequence<T> {
    joints: usize,
    params: Vec<GaussianCoordinate<T>>,
}

impl<T: Real> GaussianPoseSequence<T> {
    /// Builds from a flat frame-major buffer of length `frames*joints*3`.
    pub fn from_params(joints: usize, params: Vec<GaussianCoordinate<T>>) -> Result<Self> {
        if joints == 0 {
            return Err(Error::Argument("joint count must be >= 1".into()));
        }
        if params.is_empty() || params.len() % (joints * 3) != 0 {
            return Err(Error::Argument(format!(
                "parameter buffer length {} is not a positive multiple of joints*3 = {}",
                params.len(),
                joints * 3
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if !p.mu.is_finite() {
                return Err(Error::Argument(format!("non-finite mean at index {i}")));
            }
            if !(p.var > T::zero()) || !p.var.is_finite() {
                return Err(Error::Argument(format!(
                    "variance at index {i} must be positive and finite, got {}",
                    p.var
                )));
            }
        }
        Ok(GaussianPoseSequence { joints, params })
    }

    pub fn frames(&self) -> usize {
        self.params.len() / (self.joints * 3)
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    #[inline]
    pub fn get(&self, frame: usize, joint: usize, axis: usize) -> GaussianCoordinate<T> {
        self.params[(frame * self.joints + joint) * 3 + axis]
    }

    pub fn params(&self) -> &[GaussianCoordinate<T>] {
        &self.params
    }

    /// The mean coordinates as a plain pose sequence.
    pub fn means(&self, frame_interval_ms: T) -> PoseSequence<T> {
        let data: Vec<T> = self.params.iter().map(|p| p.mu).collect();
        PoseSequence::from_flat(self.joints, frame_interval_ms, data)
            .expect("means of a valid Gaussian sequence are a valid pose sequence")
    }

    /// Serializes as JSON lines, one frame per line:
    /// `{"t": <int>, "joints": [[mu_x, var_x, mu_y, var_y, mu_z, var_z], ...]}`.
    /// `t` continues from `t_offset`.
    pub fn to_jsonl(&self, t_offset: usize) -> String {
        #[derive(Serialize)]
        struct Line {
            t: usize,
            joints: Vec<Vec<f64>>,
        }
        let mut out = String::new();
        for t in 0..self.frames() {
            let joints: Vec<Vec<f64>> = (0..self.joints)
                .map(|j| {
                    (0..3)
                        .flat_map(|a| {
                            let p = self.get(t, j, a);
                            [p.mu.as_f64(), p.var.as_f64()]
                        })
                        .collect()
                })
                .collect();
            let line = Line {
                t: t_offset + t,
                joints,
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        out
    }

    /// Parses the [`GaussianPoseSequence::to_jsonl`] format.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            #[allow(dead_code)]
            t: i64,
            joints: Vec<Vec<f64>>,
        }
        let mut joints_count: Option<usize> = None;
        let mut params = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let rec: Line = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad JSON object: {e}"),
            })?;
            match joints_count {
                None => joints_count = Some(rec.joints.len()),
                Some(n) if n != rec.joints.len() => {
                    return Err(Error::Schema {
                        line: lineno,
                        msg: format!("expected {n} joints, found {}", rec.joints.len()),
                    });
                }
                _ => {}
            }
            for j in &rec.joints {
                if j.len() != 6 {
                    return Err(Error::Schema {
                        line: lineno,
                        msg: format!("expected 6 Gaussian parameters per joint, found {}", j.len()),
                    });
                }
                for a in 0..3 {
                    params.push(GaussianCoordinate {
                        mu: T::from_f64(j[2 * a]),
                        var: T::from_f64(j[2 * a + 1]),
                    });
                }
            }
        }
        let joints = joints_count.ok_or(Error::Parse {
            line: 0,
            msg: "empty prediction file".into(),
        })?;
        GaussianPoseSequence::from_params(joints, params)
    }
}

/// The decomposed per-coordinate NLL: a residual term scaled by the inverse
/// variance, a variance regularizer, and the `log 2pi` constant.
#[derive(Debug, Clone, Copy)]
pub struct NllTerms<T> {
    /// `(x - mu)^2 / (2 var)`
    pub scaled_residual: T,
    /// `log(var) / 2`
    pub regularizer: T,
    /// `log(2 pi) / 2`
    pub constant: T,
}

impl<T: Real> NllTerms<T> {
    pub fn total(&self) -> T {
        self.scaled_residual + self.regularizer + self.constant
    }
}

fn check_var<T: Real>(var: T) -> Result<()> {
    if !(var > T::zero()) || !var.is_finite() {
        return Err(Error::Domain(format!(
            "variance must be positive and finite, got {var}"
        )));
    }
    Ok(())
}

fn half<T: Real>() -> T {
    T::from_f64(0.5)
}

/// Per-coordinate Gaussian NLL in density form, evaluated in log space:
/// `log(2 pi var) / 2 + (x - mu)^2 / (2 var)`.
pub fn nll_density<T: Real>(x: T, mu: T, var: T) -> Result<T> {
    check_var(var)?;
    let two_pi = T::from_f64(2.0) * T::PI();
    let r = (x - mu) * (x - mu);
    Ok(half::<T>() * (two_pi * var).ln() + r / (T::from_f64(2.0) * var))
}

/// Same value as [`nll_density`] in the three-term decomposition; see
/// [`nll_terms`] for the individual components.
pub fn nll_decomposed<T: Real>(x: T, mu: T, var: T) -> Result<T> {
    Ok(nll_terms(x, mu, var)?.total())
}

/// The decomposition behind [`nll_decomposed`].
pub fn nll_terms<T: Real>(x: T, mu: T, var: T) -> Result<NllTerms<T>> {
    check_var(var)?;
    let r = (x - mu) * (x - mu);
    Ok(NllTerms {
        scaled_residual: half::<T>() * (r / var),
        regularizer: half::<T>() * var.ln(),
        constant: half::<T>() * (T::from_f64(2.0) * T::PI()).ln(),
    })
}

/// `d nll / d var` for one coordinate, in the factored form
/// `(1 - r/var) / (2 var)` which is exactly zero at `var == r`.
pub fn nll_dvar<T: Real>(x: T, mu: T, var: T) -> Result<T> {
    check_var(var)?;
    let r = (x - mu) * (x - mu);
    Ok((T::one() - r / var) / (T::from_f64(2.0) * var))
}

/// `d^2 nll / d var^2` for one coordinate: `(r/var - 1/2) / var^2`.
pub fn nll_d2var<T: Real>(x: T, mu: T, var: T) -> Result<T> {
    check_var(var)?;
    let r = (x - mu) * (x - mu);
    Ok((r / var - half::<T>()) / (var * var))
}

fn check_shapes<T: Real>(pred: &GaussianPoseSequence<T>, truth: &PoseSequence<T>) -> Result<()> {
    if pred.frames() != truth.frames() || pred.joints() != truth.joints() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.frames(),
            pred.joints(),
            truth.frames(),
            truth.joints()
        )));
    }
    Ok(())
}

/// Sequence NLL: mean over frames and joints of the summed per-axis NLL
/// terms. The normalizer is `joints * frames`; the three axis terms are
/// summed inside the mean, not averaged.
pub fn sequence_nll<T: Real>(pred: &GaussianPoseSequence<T>, truth: &PoseSequence<T>) -> Result<T> {
    check_shapes(pred, truth)?;
    let mut acc = T::zero();
    for t in 0..pred.frames() {
        for i in 0..pred.joints() {
            for a in 0..3 {
                let g = pred.get(t, i, a);
                acc = acc + nll_decomposed(truth.coord(t, i, a), g.mu, g.var)?;
            }
        }
    }
    Ok(acc / T::from_usize(pred.frames() * pred.joints()))
}

/// Mean per-joint position error: mean over frames and joints of the
/// Euclidean distance between predicted and true joint positions, in mm.
pub fn mpjpe<T: Real>(pred_means: &PoseSequence<T>, truth: &PoseSequence<T>) -> Result<T> {
    if pred_means.frames() != truth.frames() || pred_means.joints() != truth.joints() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred_means.frames(),
            pred_means.joints(),
            truth.frames(),
            truth.joints()
        )));
    }
    let mut acc = T::zero();
    for t in 0..pred_means.frames() {
        for i in 0..pred_means.joints() {
            acc = acc + joint_error(pred_means.get(t, i), truth.get(t, i));
        }
    }
    Ok(acc / T::from_usize(pred_means.frames() * pred_means.joints()))
}

#[inline]
fn joint_error<T: Real>(p: [T; 3], q: [T; 3]) -> T {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let dz = p[2] - q[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Averaged power-transformed variances of one joint:
/// `(var_x^k + var_y^k + var_z^k) / 3`. With `k < 0` a larger variance
/// yields a smaller weight.
pub fn penalty_weight<T: Real>(var_x: T, var_y: T, var_z: T, k: T) -> Result<T> {
    check_var(var_x)?;
    check_var(var_y)?;
    check_var(var_z)?;
    Ok((var_x.powf(k) + var_y.powf(k) + var_z.powf(k)) / T::from_f64(3.0))
}

/// The `frames x joints` penalty-weight matrix of a prediction.
pub fn penalty_weights<T: Real>(pred: &GaussianPoseSequence<T>, k: T) -> Result<Vec<T>> {
    let mut weights = Vec::with_capacity(pred.frames() * pred.joints());
    for t in 0..pred.frames() {
        for i in 0..pred.joints() {
            let [vx, vy, vz] = [
                pred.get(t, i, 0).var,
                pred.get(t, i, 1).var,
                pred.get(t, i, 2).var,
            ];
            weights.push(penalty_weight(vx, vy, vz, k)?);
        }
    }
    Ok(weights)
}

/// Uncertainty-penalized MPJPE: each joint's Euclidean error is scaled by
/// its penalty weight before averaging. Returns the loss value and the
/// `frames x joints` weight matrix (row-major).
///
/// The weights act as constants during differentiation; no gradient flows
/// into the variances through them.
pub fn weighted_mpjpe<T: Real>(
    pred: &GaussianPoseSequence<T>,
    truth: &PoseSequence<T>,
    k: T,
) -> Result<(T, Vec<T>)> {
    check_shapes(pred, truth)?;
    let weights = penalty_weights(pred, k)?;
    let value = weighted_mpjpe_given(pred, truth, &weights)?;
    Ok((value, weights))
}

/// [`weighted_mpjpe`] with an explicit weight matrix. This is the function
/// the training gradient actually differentiates (weights held constant),
/// so finite-difference oracles should perturb around this form.
pub fn weighted_mpjpe_given<T: Real>(
    pred: &GaussianPoseSequence<T>,
    truth: &PoseSequence<T>,
    weights: &[T],
) -> Result<T> {
    check_shapes(pred, truth)?;
    if weights.len() != pred.frames() * pred.joints() {
        return Err(Error::Shape(format!(
            "weight matrix has {} entries, expected {}",
            weights.len(),
            pred.frames() * pred.joints()
        )));
    }
    let mut acc = T::zero();
    for t in 0..pred.frames() {
        for i in 0..pred.joints() {
            let p = [
                pred.get(t, i, 0).mu,
                pred.get(t, i, 1).mu,
                pred.get(t, i, 2).mu,
            ];
            let q = truth.get(t, i);
            acc = acc + joint_error(p, q) * weights[t * pred.joints() + i];
        }
    }
    Ok(acc / T::from_usize(pred.frames() * pred.joints()))
}

/// Which terms of the objective drive the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Plain coordinate error only; variances receive no gradient.
    MpjpeOnly,
    /// Gaussian NLL only.
    NllOnly,
    /// Weighted coordinate error plus NLL.
    UaFull,
}

/// All loss components of one sample.
#[derive(Debug, Clone, Serialize)]
pub struct LossBreakdown<T> {
    pub l_m: T,
    pub l_m_weighted: T,
    pub l_n: T,
    pub total: T,
    /// `frames x joints` penalty weights, row-major. Not serialized; the
    /// metrics log keeps only the four scalar components.
    #[serde(skip_serializing)]
    pub per_sample_weights: Vec<T>,
}

impl<T: Real> LossBreakdown<T> {
    /// The scalar driven by the given mode.
    pub fn objective(&self, mode: LossMode) -> T {
        match mode {
            LossMode::MpjpeOnly => self.l_m,
            LossMode::NllOnly => self.l_n,
            LossMode::UaFull => self.total,
        }
    }
}

/// Full objective: `total = weighted MPJPE + sequence NLL`, with every
/// component populated.
pub fn total_loss<T: Real>(
    pred: &GaussianPoseSequence<T>,
    truth: &PoseSequence<T>,
    k: T,
) -> Result<LossBreakdown<T>> {
    let weights = penalty_weights(pred, k)?;
    total_loss_with_weights(pred, truth, weights)
}

/// [`total_loss`] with the penalty weights supplied by the caller (the
/// stop-gradient form; see [`weighted_mpjpe_given`]).
pub fn total_loss_with_weights<T: Real>(
    pred: &GaussianPoseSequence<T>,
    truth: &PoseSequence<T>,
    weights: Vec<T>,
) -> Result<LossBreakdown<T>> {
    check_shapes(pred, truth)?;
    let l_m = weighted_mpjpe_given(pred, truth, &vec![T::one(); weights.len()])?;
    let l_m_weighted = weighted_mpjpe_given(pred, truth, &weights)?;
    let l_n = sequence_nll(pred, truth)?;
    Ok(LossBreakdown {
        l_m,
        l_m_weighted,
        l_n,
        total: l_m_weighted + l_n,
        per_sample_weights: weights,
    })
}

/// Gradients of the objective with respect to the predicted means and the
/// raw log-variance parameters, flat over `frame x joint x axis`.
#[derive(Debug, Clone)]
pub struct LossGradients<T> {
    pub d_mu: Vec<T>,
    /// Gradient with respect to `s` where `var = exp(s)`, i.e.
    /// `var * d/dvar`.
    pub d_raw_var: Vec<T>,
}

/// Gradients of the full objective (`UaFull`); see [`gradients_for_mode`].
pub fn loss_gradients<T: Real>(
    pred: &GaussianPoseSequence<T>,
    truth: &PoseSequence<T>,
    k: T,
) -> Result<LossGradients<T>> {
    gradients_for_mode(pred, truth, k, LossMode::UaFull)
}

/// Analytic gradients of the selected objective.
///
/// Per coordinate, with `c = 1 / (joints * frames)`:
/// - NLL mean term: `c * (mu - x) / var`
/// - NLL variance term (as raw log-variance): `c * (1 - r/var) / 2`
/// - coordinate-error term: `c * w * (mu_a - p_a) / ||mu - p||`, defined as
///   zero at the `||mu - p|| = 0` kink; the weight `w` is a constant here.
pub fn gradients_for_mode<T: Real>(
    pred: &GaussianPoseSequence<T>,
    truth: &PoseSequence<T>,
    k: T,
    mode: LossMode,
) -> Result<LossGradients<T>> {
    check_shapes(pred, truth)?;
    let frames = pred.frames();
    let joints = pred.joints();
    let c = T::one() / T::from_usize(frames * joints);
    let mut d_mu = vec![T::zero(); frames * joints * 3];
    let mut d_raw_var = vec![T::zero(); frames * joints * 3];

    let use_nll = matches!(mode, LossMode::NllOnly | LossMode::UaFull);
    let use_coord = matches!(mode, LossMode::MpjpeOnly | LossMode::UaFull);

    for t in 0..frames {
        for i in 0..joints {
            let base = (t * joints + i) * 3;
            let g = [pred.get(t, i, 0), pred.get(t, i, 1), pred.get(t, i, 2)];
            let q = truth.get(t, i);

            if use_nll {
                for a in 0..3 {
                    check_var(g[a].var)?;
                    let diff = g[a].mu - q[a];
                    d_mu[base + a] = d_mu[base + a] + c * diff / g[a].var;
                    let r = diff * diff;
                    d_raw_var[base + a] =
                        d_raw_var[base + a] + c * (T::one() - r / g[a].var) * half::<T>();
                }
            }

            if use_coord {
                let w = match mode {
                    LossMode::MpjpeOnly => T::one(),
                    _ => penalty_weight(g[0].var, g[1].var, g[2].var, k)?,
                };
                let p = [g[0].mu, g[1].mu, g[2].mu];
                let e = joint_error(p, q);
                if e > T::zero() {
                    for a in 0..3 {
                        d_mu[base + a] = d_mu[base + a] + c * w * (p[a] - q[a]) / e;
                    }
                }
            }
        }
    }
    Ok(LossGradients { d_mu, d_raw_var })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

    fn gps(joints: usize, params: Vec<(f64, f64)>) -> GaussianPoseSequence<f64> {
        GaussianPoseSequence::from_params(
            joints,
            params
                .into_iter()
                .map(|(mu, var)| GaussianCoordinate { mu, var })
                .collect(),
        )
        .unwrap()
    }

    fn pose(joints: usize, coords: Vec<f64>) -> PoseSequence<f64> {
        PoseSequence::from_flat(joints, 40.0, coords).unwrap()
    }

    #[test]
    fn nll_density_scalar_values() {
        let v: f64 = nll_density(2.0, 2.0, 1.0).unwrap();
        assert!((v - HALF_LOG_2PI).abs() < 1e-12);
        assert!((v - 0.918939).abs() < 1e-6);
        let v: f64 = nll_density(3.0, 2.0, 1.0).unwrap();
        assert!((v - 1.418939).abs() < 1e-6);
    }

    #[test]
    fn nll_decomposed_scalar_values() {
        let v: f64 = nll_decomposed(2.0, 2.0, 1.0).unwrap();
        assert!((v - 0.918939).abs() < 1e-6);
        // r = 4, var = 4: 0.5*(log 4 + 1) + 0.5 log 2pi
        let v: f64 = nll_decomposed(2.0, 0.0, 4.0).unwrap();
        assert!((v - 2.112086).abs() < 1e-6);
    }

    #[test]
    fn nll_terms_expose_components() {
        let t: NllTerms<f64> = nll_terms(3.0, 1.0, 2.0).unwrap();
        assert!((t.scaled_residual - 1.0).abs() < 1e-15);
        assert!((t.regularizer - 0.5 * 2.0f64.ln()).abs() < 1e-15);
        assert!((t.constant - HALF_LOG_2PI).abs() < 1e-15);
        assert_eq!(t.total(), nll_decomposed(3.0, 1.0, 2.0).unwrap());
    }

    #[test]
    fn nll_rejects_nonpositive_variance() {
        assert!(matches!(
            nll_density(0.0, 0.0, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            nll_decomposed(0.0, 0.0, -1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn density_and_decomposed_agree() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        for _ in 0..2000 {
            let x: f64 = rng.gen_range(-100.0..100.0);
            let mu: f64 = rng.gen_range(-100.0..100.0);
            let var = 10f64.powf(rng.gen_range(-6.0..6.0));
            let a = nll_density(x, mu, var).unwrap();
            let b = nll_decomposed(x, mu, var).unwrap();
            assert!(
                (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
                "x={x} mu={mu} var={var}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn variance_stationary_point_is_squared_error() {
        for x in [1e-3f64, 0.1, 1.0, 7.5, -35.1] {
            let r = x * x;
            let d = nll_dvar(x, 0.0, r).unwrap();
            assert_eq!(d, 0.0, "gradient must vanish exactly at var = r = {r}");
            let d2 = nll_d2var(x, 0.0, r).unwrap();
            assert!(d2 > 0.0, "curvature must be positive at var = r = {r}");
        }
    }

    #[test]
    fn sequence_nll_perfect_prediction() {
        for (frames, joints) in [(1usize, 1usize), (4, 2), (3, 5)] {
            let coords = vec![7.0; frames * joints * 3];
            let truth = pose(joints, coords.clone());
            let pred = gps(joints, coords.iter().map(|&c| (c, 1.0)).collect());
            let v = sequence_nll(&pred, &truth).unwrap();
            assert!(
                (v - 3.0 * HALF_LOG_2PI).abs() < 1e-12,
                "frames={frames} joints={joints}: {v}"
            );
            assert!((v - 2.756816).abs() < 1e-6);
        }
    }

    #[test]
    fn sequence_nll_single_frame_single_joint() {
        let truth = pose(1, vec![1.0, 2.0, 3.0]);
        let pred = gps(1, vec![(0.5, 2.0), (2.5, 0.7), (3.0, 1.3)]);
        let expect = nll_decomposed(1.0, 0.5, 2.0).unwrap()
            + nll_decomposed(2.0, 2.5, 0.7).unwrap()
            + nll_decomposed(3.0, 3.0, 1.3).unwrap();
        assert_eq!(sequence_nll(&pred, &truth).unwrap(), expect);
    }

    #[test]
    fn sequence_nll_mean_invariance_under_joint_duplication() {
        let params = vec![(0.5, 2.0), (2.5, 0.7), (3.0, 1.3)];
        let truth1 = pose(1, vec![1.0, 2.0, 3.0]);
        let pred1 = gps(1, params.clone());
        let truth2 = pose(2, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let pred2 = gps(2, [params.clone(), params].concat());
        let a = sequence_nll(&pred1, &truth1).unwrap();
        let b = sequence_nll(&pred2, &truth2).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn sequence_nll_shape_mismatch() {
        let truth = pose(2, vec![0.0; 6]);
        let pred = gps(1, vec![(0.0, 1.0); 3]);
        assert!(matches!(
            sequence_nll(&pred, &truth),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn mpjpe_values() {
        let truth = pose(2, vec![0.0; 12]);
        assert_eq!(mpjpe(&truth, &truth).unwrap(), 0.0);

        // every joint offset by (3, 4, 0) -> 5
        let shifted = pose(
            2,
            (0..12)
                .map(|i| match i % 3 {
                    0 => 3.0,
                    1 => 4.0,
                    _ => 0.0,
                })
                .collect(),
        );
        assert!((mpjpe(&shifted, &truth).unwrap() - 5.0).abs() < 1e-12);

        // two joints with errors 0 and 10 -> 5
        let one_off = pose(2, vec![0.0, 0.0, 0.0, 10.0, 0.0, 0.0]);
        let zero = pose(2, vec![0.0; 6]);
        assert!((mpjpe(&one_off, &zero).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_weight_values() {
        for k in [-0.7, -0.2, 0.0, 0.3, 2.0] {
            assert_eq!(penalty_weight(1.0, 1.0, 1.0, k).unwrap(), 1.0);
        }
        assert_eq!(penalty_weight(32.0, 32.0, 32.0, -0.2).unwrap(), 0.5);
        let w: f64 = penalty_weight(2.0, 2.0, 2.0, -0.2).unwrap();
        assert!((w - 0.870551).abs() < 1e-6);
        assert!(matches!(
            penalty_weight(0.0, 1.0, 1.0, -0.2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn weighted_mpjpe_reduces_to_mpjpe() {
        let truth = pose(2, vec![0.0; 12]);
        let pred = gps(
            2,
            (0..12)
                .map(|i| (if i % 3 == 0 { 3.0 } else { 4.0 }, 1.0))
                .collect(),
        );
        let means = pred.means(40.0);
        let (w_val, weights) = weighted_mpjpe(&pred, &truth, -0.2).unwrap();
        assert_eq!(w_val, mpjpe(&means, &truth).unwrap());
        assert!(weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn weighted_mpjpe_k_zero_is_bitwise_mpjpe() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let truth = pose(3, (0..18).map(|_| rng.gen_range(-50.0..50.0)).collect());
        let pred = gps(
            3,
            (0..18)
                .map(|_| {
                    (
                        rng.gen_range(-50.0..50.0),
                        10f64.powf(rng.gen_range(-3.0..3.0)),
                    )
                })
                .collect(),
        );
        let (w_val, _) = weighted_mpjpe(&pred, &truth, 0.0).unwrap();
        let plain = mpjpe(&pred.means(40.0), &truth).unwrap();
        assert_eq!(w_val.to_bits(), plain.to_bits());
    }

    #[test]
    fn weighted_mpjpe_single_joint_example() {
        // single joint, error 5, var = 32 on each axis, k = -0.2 -> 2.5
        let truth = pose(1, vec![0.0, 0.0, 0.0]);
        let pred = gps(1, vec![(3.0, 32.0), (4.0, 32.0), (0.0, 32.0)]);
        let (v, weights) = weighted_mpjpe(&pred, &truth, -0.2).unwrap();
        assert_eq!(weights, vec![0.5]);
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn total_loss_composition() {
        let truth = pose(2, vec![1.0; 12]);
        let pred = gps(2, vec![(1.0, 1.0); 12]);
        let b = total_loss(&pred, &truth, -0.2).unwrap();
        assert_eq!(b.l_m, 0.0);
        assert_eq!(b.l_m_weighted, 0.0);
        assert!((b.total - 2.756816).abs() < 1e-6);
        assert!((b.total - (b.l_m_weighted + b.l_n)).abs() <= 1e-12 * (1.0 + b.total.abs()));
    }

    #[test]
    fn loss_breakdown_serializes_scalars_only() {
        let truth = pose(1, vec![0.0, 0.0, 0.0]);
        let pred = gps(1, vec![(1.0, 2.0), (0.0, 1.0), (0.0, 0.5)]);
        let b = total_loss(&pred, &truth, -0.2).unwrap();
        let json = serde_json::to_value(&b).unwrap();
        let obj = json.as_object().unwrap();
        assert_eq!(obj.len(), 4);
        for key in ["l_m", "l_m_weighted", "l_n", "total"] {
            assert!(obj.contains_key(key), "missing {key}");
        }
    }

    #[test]
    fn gradient_single_coordinate_example() {
        // x = 0, mu = 1, var = 1, single coordinate active, NLL only:
        // d l_n / d mu = (mu - x) / var = 1 (normalizer is 1 for 1x1).
        let truth = pose(1, vec![0.0, 0.0, 0.0]);
        let pred = gps(1, vec![(1.0, 1.0), (0.0, 1.0), (0.0, 1.0)]);
        let g = gradients_for_mode(&pred, &truth, -0.2, LossMode::NllOnly).unwrap();
        assert!((g.d_mu[0] - 1.0).abs() < 1e-12);
        assert_eq!(g.d_mu[1], 0.0);
    }

    #[test]
    fn gradient_pushes_variance_down_at_zero_error() {
        let truth = pose(1, vec![2.0, 2.0, 2.0]);
        let pred = gps(1, vec![(2.0, 0.5); 3]);
        let g = gradients_for_mode(&pred, &truth, -0.2, LossMode::NllOnly).unwrap();
        // d/dvar = 1/(2 var) > 0, so d/ds = var * that = 1/2 > 0.
        for a in 0..3 {
            assert!((g.d_raw_var[a] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_zero_residual_kink_is_zero() {
        let truth = pose(1, vec![1.0, 2.0, 3.0]);
        let pred = gps(1, vec![(1.0, 2.0), (2.0, 2.0), (3.0, 2.0)]);
        let g = gradients_for_mode(&pred, &truth, -0.2, LossMode::MpjpeOnly).unwrap();
        assert!(g.d_mu.iter().all(|&v| v == 0.0));
        assert!(g.d_raw_var.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let frames = 3;
        let joints = 2;
        let n = frames * joints * 3;
        let truth = pose(joints, (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect());
        let raw: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(-10.0..10.0), rng.gen_range(-1.0..2.0)))
            .collect();
        let k = -0.2;

        for mode in [LossMode::MpjpeOnly, LossMode::NllOnly, LossMode::UaFull] {
            let build = |s: &[(f64, f64)]| {
                gps(joints, s.iter().map(|&(mu, sv)| (mu, sv.exp())).collect())
            };
            let pred = build(&raw);
            let weights0 = penalty_weights(&pred, k).unwrap();
            let eval = |s: &[(f64, f64)]| -> f64 {
                let p = build(s);
                // weights frozen at the base point: the stop-gradient objective
                let b = total_loss_with_weights(&p, &truth, weights0.clone()).unwrap();
                match mode {
                    LossMode::MpjpeOnly => b.l_m,
                    LossMode::NllOnly => b.l_n,
                    LossMode::UaFull => b.total,
                }
            };
            let g = gradients_for_mode(&pred, &truth, k, mode).unwrap();
            let h = 1e-5;
            for idx in 0..n {
                let mut plus = raw.clone();
                let mut minus = raw.clone();
                plus[idx].0 += h;
                minus[idx].0 -= h;
                let fd_mu = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let tol = 1e-4 * (1.0 + fd_mu.abs().max(g.d_mu[idx].abs()));
                assert!(
                    (fd_mu - g.d_mu[idx]).abs() <= tol,
                    "{mode:?} d_mu[{idx}]: fd={fd_mu} analytic={}",
                    g.d_mu[idx]
                );

                let mut plus = raw.clone();
                let mut minus = raw.clone();
                plus[idx].1 += h;
                minus[idx].1 -= h;
                let fd_s = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let tol = 1e-4 * (1.0 + fd_s.abs().max(g.d_raw_var[idx].abs()));
                assert!(
                    (fd_s - g.d_raw_var[idx]).abs() <= tol,
                    "{mode:?} d_s[{idx}]: fd={fd_s} analytic={}",
                    g.d_raw_var[idx]
                );
            }
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let pred = gps(2, vec![(1.5, 0.25); 12]);
        let text = pred.to_jsonl(10);
        assert!(text.lines().next().unwrap().starts_with("{\"t\":10,"));
        let back = GaussianPoseSequence::<f64>::from_jsonl(&text).unwrap();
        assert_eq!(pred, back);
    }
}
