//! Evaluation and visualization: MPJPE-at-horizon tables, calibration
//! statistics, and the uncertainty artifacts (point-size skeleton SVG,
//! joints-by-time uncertainty map as CSV/PGM/SVG).
//!
//! Renderers are pure functions of their inputs plus the fixed style
//! constants below; identical inputs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::GaussianPoseSequence;
use crate::scalar::Real;
use crate::skeleton_data::PoseSequence;

/// Minimum disc radius in the point-size rendering, px.
const R_MIN: f64 = 1.5;
/// Radius gain per millimeter of predicted standard deviation, px/mm.
const ALPHA: f64 = 0.5;
/// Canvas scale, px per mm.
const SVG_SCALE: f64 = 0.25;
/// Gap between stacked frames, px.
const FRAME_GAP: f64 = 12.0;
/// Canvas margin, px.
const MARGIN: f64 = 16.0;
/// Cell size of the uncertainty-map SVG, px.
const MAP_CELL: f64 = 14.0;

/// Per-joint scalar uncertainty over the prediction horizon:
/// entry `(t, i)` is the mean of joint `i`'s three axis variances at
/// future frame `t`, in mm^2.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap<T> {
    joints: usize,
    values: Vec<T>,
}

impl<T: Real> UncertaintyMap<T> {
    pub fn frames(&self) -> usize {
        self.values.len() / self.joints
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    #[inline]
    pub fn at(&self, frame: usize, joint: usize) -> T {
        self.values[frame * self.joints + joint]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Mean uncertainty per future frame.
    pub fn row_means(&self) -> Vec<T> {
        (0..self.frames())
            .map(|t| {
                let row = &self.values[t * self.joints..(t + 1) * self.joints];
                row.iter().copied().sum::<T>() / T::from_usize(self.joints)
            })
            .collect()
    }

    /// Raw values as CSV, one row per frame, 6 decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for t in 0..self.frames() {
            for i in 0..self.joints {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:.6}", self.at(t, i).as_f64());
            }
            out.push('\n');
        }
        out
    }

    /// Parses the [`UncertaintyMap::to_csv`] format.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut joints = None;
        let mut values = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<T> = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map(T::from_f64).map_err(|e| {
                        Error::Parse {
                            line: idx + 1,
                            msg: format!("bad value `{f}`: {e}"),
                        }
                    })
                })
                .collect::<Result<_>>()?;
            match joints {
                None => joints = Some(row.len()),
                Some(n) if n != row.len() => {
                    return Err(Error::Schema {
                        line: idx + 1,
                        msg: format!("expected {n} columns, found {}", row.len()),
                    });
                }
                _ => {}
            }
            values.extend(row);
        }
        let joints = joints.ok_or(Error::Parse {
            line: 0,
            msg: "empty map file".into(),
        })?;
        Ok(UncertaintyMap { joints, values })
    }

    /// Binary PGM (P5), min-max normalized to 0..=255 per file. A uniform
    /// map renders as all zeros.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(format!("P5\n{} {}\n255\n", self.joints, self.frames()).as_bytes());
        out.extend(self.normalized_bytes());
        out
    }

    /// Grayscale grid SVG with the same normalization as the PGM.
    pub fn to_svg(&self) -> String {
        let bytes = self.normalized_bytes();
        let w = self.joints as f64 * MAP_CELL;
        let h = self.frames() as f64 * MAP_CELL;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
        );
        for t in 0..self.frames() {
            for i in 0..self.joints {
                let v = bytes[t * self.joints + i];
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.1}" y="{:.1}" width="{MAP_CELL:.1}" height="{MAP_CELL:.1}" fill="rgb({v},{v},{v})"/>"#,
                    i as f64 * MAP_CELL,
                    t as f64 * MAP_CELL,
                );
            }
        }
        out.push_str("</svg>\n");
        out
    }

    fn normalized_bytes(&self) -> Vec<u8> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &self.values {
            let v = v.as_f64();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = hi - lo;
        self.values
            .iter()
            .map(|v| {
                if span > 0.0 {
                    (((v.as_f64() - lo) / span) * 255.0).round() as u8
                } else {
                    0
                }
            })
            .collect()
    }
}

/// Builds the joints-by-time uncertainty map of a prediction:
/// entry `(t, i) = (var_x + var_y + var_z) / 3`.
pub fn uncertainty_map<T: Real>(pred: &GaussianPoseSequence<T>) -> UncertaintyMap<T> {
    let third = T::one() / T::from_f64(3.0);
    let mut values = Vec::with_capacity(pred.frames() * pred.joints());
    for t in 0..pred.frames() {
        for i in 0..pred.joints() {
            let v =
                pred.get(t, i, 0).var + pred.get(t, i, 1).var + pred.get(t, i, 2).var;
            values.push(v * third);
        }
    }
    UncertaintyMap {
        joints: pred.joints(),
        values,
    }
}

/// MPJPE, mean variance, and 1-sigma coverage at selected horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizons_ms: Vec<f64>,
    pub mpjpe_mm: Vec<f64>,
    pub mean_var: Vec<f64>,
    pub coverage_1sigma: Vec<f64>,
}

/// Maps each horizon to its (0-based) future-frame index.
/// A horizon must be a positive multiple of the frame interval and land
/// within the predicted frames.
pub fn horizon_frame_indices(
    horizons_ms: &[f64],
    frame_interval_ms: f64,
    n_future: usize,
) -> Result<Vec<usize>> {
    if !(frame_interval_ms > 0.0) {
        return Err(Error::Argument("frame interval must be positive".into()));
    }
    let mut out = Vec::with_capacity(horizons_ms.len());
    for &h in horizons_ms {
        let ratio = h / frame_interval_ms;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.abs().max(1.0) || n < 1.0 {
            return Err(Error::Argument(format!(
                "horizon {h} ms is not a positive multiple of the frame interval {frame_interval_ms} ms"
            )));
        }
        let n = n as usize;
        if n > n_future {
            return Err(Error::Argument(format!(
                "horizon {h} ms needs frame {n} but only {n_future} future frames exist"
            )));
        }
        out.push(n - 1);
    }
    Ok(out)
}

/// Per-horizon single-frame MPJPE (matching per-timestamp table
/// conventions), plus mean variance and 1-sigma coverage at that frame.
pub fn mpjpe_at_horizons<T: Real>(
    pred: &GaussianPoseSequence<T>,
    truth: &PoseSequence<T>,
    horizons_ms: &[f64],
    frame_interval_ms: f64,
) -> Result<HorizonReport> {
    aggregate_horizons(&[(pred, truth)], horizons_ms, frame_interval_ms)
}

/// [`mpjpe_at_horizons`] pooled over several (prediction, truth) samples
/// of identical shape.
pub fn aggregate_horizons<T: Real>(
    samples: &[(&GaussianPoseSequence<T>, &PoseSequence<T>)],
    horizons_ms: &[f64],
    frame_interval_ms: f64,
) -> Result<HorizonReport> {
    if samples.is_empty() {
        return Err(Error::Argument("no samples to evaluate".into()));
    }
    let frames = samples[0].0.frames();
    let indices = horizon_frame_indices(horizons_ms, frame_interval_ms, frames)?;
    let mut mpjpe_mm = vec![0.0f64; indices.len()];
    let mut mean_var = vec![0.0f64; indices.len()];
    let mut covered = vec![0usize; indices.len()];
    let mut coords = vec![0usize; indices.len()];

    for &(pred, truth) in samples {
        if pred.frames() != truth.frames()
            || pred.joints() != truth.joints()
            || pred.frames() != frames
        {
            return Err(Error::Shape(
                "all samples must share the prediction shape".into(),
            ));
        }
        for (slot, &t) in indices.iter().enumerate() {
            let mut err_sum = 0.0;
            for i in 0..pred.joints() {
                let mut sq = 0.0;
                for a in 0..3 {
                    let g = pred.get(t, i, a);
                    let e = g.mu.as_f64() - truth.coord(t, i, a).as_f64();
                    sq += e * e;
                    mean_var[slot] += g.var.as_f64();
                    if e.abs() <= g.var.as_f64().sqrt() {
                        covered[slot] += 1;
                    }
                    coords[slot] += 1;
                }
                err_sum += sq.sqrt();
            }
            mpjpe_mm[slot] += err_sum / pred.joints() as f64;
        }
    }
    let n = samples.len() as f64;
    for slot in 0..indices.len() {
        mpjpe_mm[slot] /= n;
        mean_var[slot] /= coords[slot] as f64;
    }
    Ok(HorizonReport {
        horizons_ms: horizons_ms.to_vec(),
        mpjpe_mm,
        mean_var,
        coverage_1sigma: covered
            .iter()
            .zip(coords.iter())
            .map(|(&c, &n)| c as f64 / n as f64)
            .collect(),
    })
}

/// Agreement between predicted variances and realized errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    /// Pearson correlation between per-coordinate variance and squared
    /// error; `None` when either input is degenerate (zero variance).
    pub pearson_var_vs_sqerr: Option<f64>,
    pub coverage_1sigma: f64,
    pub coverage_2sigma: f64,
}

/// Calibration statistics of one prediction.
pub fn calibration_stats<T: Real>(
    pred: &GaussianPoseSequence<T>,
    truth: &PoseSequence<T>,
) -> Result<CalibrationStats> {
    calibration_stats_pooled(&[(pred, truth)])
}

/// Calibration statistics pooled over several samples' coordinates.
pub fn calibration_stats_pooled<T: Real>(
    samples: &[(&GaussianPoseSequence<T>, &PoseSequence<T>)],
) -> Result<CalibrationStats> {
    let mut vars = Vec::new();
    let mut sqerrs = Vec::new();
    for &(pred, truth) in samples {
        if pred.frames() != truth.frames() || pred.joints() != truth.joints() {
            return Err(Error::Shape(format!(
                "prediction is {}x{}, truth is {}x{}",
                pred.frames(),
                pred.joints(),
                truth.frames(),
                truth.joints()
            )));
        }
        for t in 0..pred.frames() {
            for i in 0..pred.joints() {
                for a in 0..3 {
                    let g = pred.get(t, i, a);
                    let e = g.mu.as_f64() - truth.coord(t, i, a).as_f64();
                    vars.push(g.var.as_f64());
                    sqerrs.push(e * e);
                }
            }
        }
    }
    if vars.len() < 2 {
        return Err(Error::Argument(
            "calibration needs at least 2 coordinates".into(),
        ));
    }
    let n = vars.len() as f64;
    let covered_1 = vars
        .iter()
        .zip(sqerrs.iter())
        .filter(|(&v, &e)| e.sqrt() <= v.sqrt())
        .count() as f64;
    let covered_2 = vars
        .iter()
        .zip(sqerrs.iter())
        .filter(|(&v, &e)| e.sqrt() <= 2.0 * v.sqrt())
        .count() as f64;
    Ok(CalibrationStats {
        pearson_var_vs_sqerr: pearson(&vars, &sqerrs),
        coverage_1sigma: covered_1 / n,
        coverage_2sigma: covered_2 / n,
    })
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Spearman rank correlation; `None` on degenerate (tied-constant) input.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Point-size skeleton rendering: predicted joints drawn as discs whose
/// radius grows with the predicted standard deviation, frames stacked
/// left to right; ground-truth joints (when given) drawn as small fixed
/// dots.
pub fn pointsize_svg<T: Real>(
    pred: &GaussianPoseSequence<T>,
    truth: Option<&PoseSequence<T>>,
) -> Result<String> {
    if let Some(truth) = truth {
        if truth.frames() != pred.frames() || truth.joints() != pred.joints() {
            return Err(Error::Shape(format!(
                "prediction is {}x{}, truth is {}x{}",
                pred.frames(),
                pred.joints(),
                truth.frames(),
                truth.joints()
            )));
        }
    }
    // project (x, z) -> (px, -pz); bounding box over everything drawn
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut visit = |x: f64, z: f64| {
        let p = [x * SVG_SCALE, -z * SVG_SCALE];
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    };
    for t in 0..pred.frames() {
        for i in 0..pred.joints() {
            visit(pred.get(t, i, 0).mu.as_f64(), pred.get(t, i, 2).mu.as_f64());
            if let Some(truth) = truth {
                let c = truth.get(t, i);
                visit(c[0].as_f64(), c[2].as_f64());
            }
        }
    }
    let frame_w = (hi[0] - lo[0]).max(1.0) + FRAME_GAP;
    let frame_h = (hi[1] - lo[1]).max(1.0);
    let width = MARGIN * 2.0 + frame_w * pred.frames() as f64 - FRAME_GAP;
    let height = MARGIN * 2.0 + frame_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for t in 0..pred.frames() {
        let ox = MARGIN - lo[0] + frame_w * t as f64;
        let oy = MARGIN - lo[1];
        if let Some(truth) = truth {
            for i in 0..truth.joints() {
                let c = truth.get(t, i);
                let _ = writeln!(
                    out,
                    r##"<circle cx="{:.2}" cy="{:.2}" r="1.00" fill="#c44e52"/>"##,
                    ox + c[0].as_f64() * SVG_SCALE,
                    oy - c[2].as_f64() * SVG_SCALE,
                );
            }
        }
        for i in 0..pred.joints() {
            let mean_var = (pred.get(t, i, 0).var + pred.get(t, i, 1).var
                + pred.get(t, i, 2).var)
                .as_f64()
                / 3.0;
            let r = R_MIN + ALPHA * mean_var.sqrt();
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="{r:.2}" fill="#4c72b0" fill-opacity="0.65"/>"##,
                ox + pred.get(t, i, 0).mu.as_f64() * SVG_SCALE,
                oy - pred.get(t, i, 2).mu.as_f64() * SVG_SCALE,
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes the point-size rendering to `path`.
pub fn render_pointsize_svg<T: Real>(
    pred: &GaussianPoseSequence<T>,
    truth: Option<&PoseSequence<T>>,
    path: &Path,
) -> Result<()> {
    let svg = pointsize_svg(pred, truth)?;
    fs::write(path, svg).map_err(|e| annotate_io(e, path))?;
    Ok(())
}

/// Output formats of [`render_map`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapFormat {
    Csv,
    Pgm,
    Svg,
}

/// Writes the uncertainty map in the chosen format: CSV holds raw mm^2
/// values, PGM and SVG are min-max normalized brightness.
pub fn render_map<T: Real>(map: &UncertaintyMap<T>, path: &Path, format: MapFormat) -> Result<()> {
    let bytes = match format {
        MapFormat::Csv => map.to_csv().into_bytes(),
        MapFormat::Pgm => map.to_pgm(),
        MapFormat::Svg => map.to_svg().into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| annotate_io(e, path))?;
    Ok(())
}

fn annotate_io(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{e} (path: {})", path.display()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::GaussianCoordinate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

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
    fn uniform_variance_gives_all_ones_map() {
        let pred = gps(3, vec![(0.0, 1.0); 2 * 3 * 3]);
        let map = uncertainty_map(&pred);
        assert_eq!(map.frames(), 2);
        assert_eq!(map.joints(), 3);
        assert!(map.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_hot_entry() {
        let mut params = vec![(0.0, 1.0); 2 * 2 * 3];
        // frame 1, joint 0: var 4 on all axes
        for a in 0..3 {
            params[(1 * 2 + 0) * 3 + a] = (0.0, 4.0);
        }
        let map = uncertainty_map(&gps(2, params));
        assert_eq!(map.at(1, 0), 4.0);
        assert_eq!(map.at(0, 0), 1.0);
        assert_eq!(map.at(1, 1), 1.0);
    }

    #[test]
    fn map_is_permutation_equivariant_in_joints() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let joints = 4;
        let frames = 3;
        let params: Vec<(f64, f64)> = (0..frames * joints * 3)
            .map(|_| (rng.gen_range(-5.0..5.0), rng.gen_range(0.1..9.0)))
            .collect();
        let perm = [2usize, 0, 3, 1];
        let mut permuted = params.clone();
        for t in 0..frames {
            for (new_j, &old_j) in perm.iter().enumerate() {
                for a in 0..3 {
                    permuted[(t * joints + new_j) * 3 + a] = params[(t * joints + old_j) * 3 + a];
                }
            }
        }
        let base = uncertainty_map(&gps(joints, params));
        let mapped = uncertainty_map(&gps(joints, permuted));
        for t in 0..frames {
            for (new_j, &old_j) in perm.iter().enumerate() {
                assert_eq!(mapped.at(t, new_j), base.at(t, old_j));
            }
        }
    }

    #[test]
    fn horizon_frame_arithmetic() {
        let idx = horizon_frame_indices(&[80.0, 160.0], 40.0, 10).unwrap();
        assert_eq!(idx, vec![1, 3]); // frames 2 and 4, 0-based
        assert!(horizon_frame_indices(&[50.0], 40.0, 10).is_err());
        let err = horizon_frame_indices(&[480.0], 40.0, 10).unwrap_err();
        assert!(err.to_string().contains("480"), "{err}");
    }

    #[test]
    fn perfect_prediction_report() {
        let coords: Vec<f64> = (0..4 * 2 * 3).map(|i| i as f64).collect();
        let truth = pose(2, coords.clone());
        let pred = gps(2, coords.iter().map(|&c| (c, 0.5)).collect());
        let report = mpjpe_at_horizons(&pred, &truth, &[40.0, 120.0], 40.0).unwrap();
        assert_eq!(report.mpjpe_mm, vec![0.0, 0.0]);
        assert_eq!(report.coverage_1sigma, vec![1.0, 1.0]);
        assert!(report.mean_var.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        // deterministic repeated run
        let again = mpjpe_at_horizons(&pred, &truth, &[40.0, 120.0], 40.0).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn horizon_mpjpe_matches_single_frame_loss() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let frames = 5;
        let joints = 3;
        let truth_coords: Vec<f64> = (0..frames * joints * 3)
            .map(|_| rng.gen_range(-50.0..50.0))
            .collect();
        let pred_params: Vec<(f64, f64)> = (0..frames * joints * 3)
            .map(|_| (rng.gen_range(-50.0..50.0), 1.0))
            .collect();
        let truth = pose(joints, truth_coords.clone());
        let pred = gps(joints, pred_params);
        let report = mpjpe_at_horizons(&pred, &truth, &[120.0], 40.0).unwrap();
        // frame 2 restricted to a single-frame sequence
        let t = 2;
        let single_truth = pose(
            joints,
            truth_coords[t * joints * 3..(t + 1) * joints * 3].to_vec(),
        );
        let single_means = pose(
            joints,
            (0..joints * 3)
                .map(|i| {
                    let idx = t * joints * 3 + i;
                    pred.params()[idx].mu
                })
                .collect(),
        );
        let expect = crate::losses::mpjpe(&single_means, &single_truth).unwrap();
        assert!((report.mpjpe_mm[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn calibration_perfect_correlation() {
        let truth = pose(1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // variance exactly equals squared error per coordinate
        let errs = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        let pred = gps(
            1,
            truth
                .flat()
                .iter()
                .zip(errs.iter())
                .map(|(&x, &e)| (x + e, e * e))
                .collect(),
        );
        let stats = calibration_stats(&pred, &truth).unwrap();
        assert!((stats.pearson_var_vs_sqerr.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(stats.coverage_1sigma, 1.0);
    }

    #[test]
    fn calibration_degenerate_variance_is_undefined() {
        let truth = pose(1, vec![0.0; 6]);
        let pred = gps(1, vec![(1.0, 2.0), (3.0, 2.0), (0.5, 2.0), (2.0, 2.0), (1.5, 2.0), (0.1, 2.0)]);
        let stats = calibration_stats(&pred, &truth).unwrap();
        assert!(stats.pearson_var_vs_sqerr.is_none());
        let json = serde_json::to_value(&stats).unwrap();
        assert!(json["pearson_var_vs_sqerr"].is_null());
    }

    #[test]
    fn calibration_matched_gaussian_coverage() {
        // errors drawn from the predicted distribution: 1-sigma coverage
        // approaches 0.683 over 1e4 coordinates
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let n_coords = 10_000;
        let joints = n_coords / 3;
        let mut truth_coords = Vec::with_capacity(joints * 3);
        let mut params = Vec::with_capacity(joints * 3);
        for _ in 0..joints * 3 {
            let mu: f64 = rng.gen_range(-100.0..100.0);
            let var = 10f64.powf(rng.gen_range(-1.0..2.0));
            let z: f64 = StandardNormal.sample(&mut rng);
            truth_coords.push(mu + var.sqrt() * z);
            params.push((mu, var));
        }
        let stats =
            calibration_stats(&gps(joints, params), &pose(joints, truth_coords)).unwrap();
        assert!(
            (stats.coverage_1sigma - 0.683).abs() < 0.02,
            "1-sigma coverage {}",
            stats.coverage_1sigma
        );
        assert!(
            (stats.coverage_2sigma - 0.954).abs() < 0.02,
            "2-sigma coverage {}",
            stats.coverage_2sigma
        );
    }

    #[test]
    fn spearman_detects_monotone_trends() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [10.0, 30.0, 31.0, 80.0, 81.0];
        assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let zs = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&xs, &zs).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman(&xs, &[1.0; 5]).is_none());
    }

    #[test]
    fn uniform_map_pgm_is_all_zero() {
        let map = uncertainty_map(&gps(2, vec![(0.0, 3.0); 12]));
        let pgm = map.to_pgm();
        let header_end = pgm.windows(4).position(|w| w == b"255\n").unwrap() + 4;
        assert!(pgm[header_end..].iter().all(|&b| b == 0));
        assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
    }

    #[test]
    fn map_csv_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let params: Vec<(f64, f64)> = (0..3 * 4 * 3)
            .map(|_| (0.0, rng.gen_range(0.5..100.0)))
            .collect();
        let map = uncertainty_map(&gps(4, params));
        let back = UncertaintyMap::<f64>::from_csv(&map.to_csv()).unwrap();
        assert_eq!(back.frames(), map.frames());
        for (a, b) in map.values().iter().zip(back.values().iter()) {
            assert!((a - b).abs() <= 5e-7);
        }
    }

    #[test]
    fn renders_are_deterministic() {
        let pred = gps(2, vec![(15.0, 2.0); 3 * 2 * 3]);
        let truth = pose(2, vec![14.0; 3 * 2 * 3]);
        let a = pointsize_svg(&pred, Some(&truth)).unwrap();
        let b = pointsize_svg(&pred, Some(&truth)).unwrap();
        assert_eq!(a, b);
        let map = uncertainty_map(&pred);
        assert_eq!(map.to_svg(), map.to_svg());
        assert_eq!(map.to_pgm(), map.to_pgm());
    }

    #[test]
    fn uniform_variance_gives_equal_radii() {
        let pred = gps(2, vec![(10.0, 4.0); 2 * 2 * 3]);
        let svg = pointsize_svg(&pred, None).unwrap();
        // r = 1.5 + 0.5 * sqrt(4) = 2.5 on every predicted disc
        let count = svg.matches(r#"r="2.50""#).count();
        assert_eq!(count, 2 * 2);
    }
}
