//! Skeleton pose sequences: loading, saving, windowing into supervised
//! (observed, future) pairs, synthetic generation, and noise corruption.
//!
//! Coordinates are millimeters throughout. A sequence is a dense
//! `frames x joints x 3` array with a fixed frame interval.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Golden-angle increment used to spread per-joint phases.
const JOINT_PHASE_STEP: f64 = 2.399963229728653;

/// On-disk interchange formats for pose sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceFormat {
    /// One row per frame: `frame_index, x_0, y_0, z_0, x_1, y_1, z_1, ...`
    Csv,
    /// One object per line: `{"t": <int>, "joints": [[x,y,z], ...]}`
    Jsonl,
}

/// A motion sequence: `frames x joints x 3` coordinates in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence<T> {
    joints: usize,
    frame_interval_ms: T,
    data: Vec<T>,
}

impl<T: Real> PoseSequence<T> {
    /// Builds a sequence from a flat `frames*joints*3` buffer, frame-major.
    pub fn from_flat(joints: usize, frame_interval_ms: T, data: Vec<T>) -> Result<Self> {
        if joints == 0 {
            return Err(Error::Argument("joint count must be >= 1".into()));
        }
        if !(frame_interval_ms > T::zero()) {
            return Err(Error::Argument("frame interval must be positive".into()));
        }
        if data.is_empty() || data.len() % (joints * 3) != 0 {
            return Err(Error::Argument(format!(
                "coordinate buffer length {} is not a positive multiple of joints*3 = {}",
                data.len(),
                joints * 3
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite coordinate at flat index {idx}"
            )));
        }
        Ok(PoseSequence {
            joints,
            frame_interval_ms,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.data.len() / (self.joints * 3)
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn frame_interval_ms(&self) -> T {
        self.frame_interval_ms
    }

    #[inline]
    pub fn get(&self, frame: usize, joint: usize) -> [T; 3] {
        let base = (frame * self.joints + joint) * 3;
        [self.data[base], self.data[base + 1], self.data[base + 2]]
    }

    #[inline]
    pub fn coord(&self, frame: usize, joint: usize, axis: usize) -> T {
        self.data[(frame * self.joints + joint) * 3 + axis]
    }

    pub fn flat(&self) -> &[T] {
        &self.data
    }

    /// Contiguous sub-sequence covering `range`.
    pub fn slice_frames(&self, start: usize, end: usize) -> PoseSequence<T> {
        assert!(start < end && end <= self.frames(), "frame range");
        let w = self.joints * 3;
        PoseSequence {
            joints: self.joints,
            frame_interval_ms: self.frame_interval_ms,
            data: self.data[start * w..end * w].to_vec(),
        }
    }

    fn translate(&mut self, offset: [T; 3]) {
        for chunk in self.data.chunks_mut(3) {
            chunk[0] = chunk[0] - offset[0];
            chunk[1] = chunk[1] - offset[1];
            chunk[2] = chunk[2] - offset[2];
        }
    }
}

/// One supervised sample: an observed window and the future to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair<T> {
    pub observed: PoseSequence<T>,
    pub future: PoseSequence<T>,
    pub source_id: String,
    pub corrupted: bool,
}

impl<T: Real> SamplePair<T> {
    pub fn new(
        observed: PoseSequence<T>,
        future: PoseSequence<T>,
        source_id: String,
    ) -> Result<Self> {
        if observed.joints() != future.joints() {
            return Err(Error::Argument(format!(
                "observed has {} joints, future has {}",
                observed.joints(),
                future.joints()
            )));
        }
        if observed.frame_interval_ms() != future.frame_interval_ms() {
            return Err(Error::Argument(
                "observed and future frame intervals differ".into(),
            ));
        }
        Ok(SamplePair {
            observed,
            future,
            source_id,
            corrupted: false,
        })
    }

    pub fn joints(&self) -> usize {
        self.observed.joints()
    }

    /// Removes global translation: subtracts the first observed frame's
    /// root joint (index 0) from every frame of the pair.
    pub fn center_on_root(mut self) -> SamplePair<T> {
        let root = self.observed.get(0, 0);
        self.observed.translate(root);
        self.future.translate(root);
        self
    }
}

/// Configuration of the synthetic sinusoid generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub joints: usize,
    pub duration_frames: usize,
    pub frame_interval_ms: f64,
    /// Per-joint oscillation frequency in Hz.
    pub base_frequencies: Vec<f64>,
    /// Per-joint oscillation amplitude in millimeters.
    pub amplitude_mm: Vec<f64>,
    pub noise_floor_mm: f64,
    /// Noise standard deviation added per frame index, in mm/frame.
    pub noise_growth_per_frame: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 || self.duration_frames == 0 {
            return Err(Error::Argument(
                "joints and duration_frames must be >= 1".into(),
            ));
        }
        if self.frame_interval_ms <= 0.0 {
            return Err(Error::Argument("frame interval must be positive".into()));
        }
        if self.base_frequencies.len() != self.joints || self.amplitude_mm.len() != self.joints {
            return Err(Error::Argument(format!(
                "base_frequencies and amplitude_mm must each have one entry per joint ({})",
                self.joints
            )));
        }
        if self.noise_floor_mm < 0.0 || self.noise_growth_per_frame < 0.0 {
            return Err(Error::Argument("noise parameters must be >= 0".into()));
        }
        Ok(())
    }
}

/// Deterministic noiseless signal value for joint `j`, axis `a`, frame `t`.
fn synth_signal(cfg: &SynthConfig, t: usize, j: usize, a: usize) -> f64 {
    let dt_s = cfg.frame_interval_ms / 1000.0;
    let phase = JOINT_PHASE_STEP * j as f64 + (2.0 * std::f64::consts::PI / 3.0) * a as f64;
    cfg.amplitude_mm[j]
        * (2.0 * std::f64::consts::PI * cfg.base_frequencies[j] * t as f64 * dt_s + phase).sin()
}

/// Generates a synthetic sinusoid sequence with a linearly growing noise
/// schedule: frame `t` gets zero-mean Gaussian noise of standard deviation
/// `noise_floor_mm + t * noise_growth_per_frame` on every coordinate.
/// Fully reproducible from `cfg.seed`.
pub fn synth_generate<T: Real>(cfg: &SynthConfig) -> Result<PoseSequence<T>> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut data = Vec::with_capacity(cfg.duration_frames * cfg.joints * 3);
    for t in 0..cfg.duration_frames {
        let std = cfg.noise_floor_mm + t as f64 * cfg.noise_growth_per_frame;
        for j in 0..cfg.joints {
            for a in 0..3 {
                let mut v = synth_signal(cfg, t, j, a);
                if std > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v += std * z;
                }
                data.push(T::from_f64(v));
            }
        }
    }
    PoseSequence::from_flat(cfg.joints, T::from_f64(cfg.frame_interval_ms), data)
}

/// Slides a window of `t_total` frames over `seq` with the given stride and
/// splits each window into `t_obs` observed and `t_total - t_obs` future
/// frames. Sequences shorter than `t_total` yield an empty list.
///
/// Windows tile the source exactly: pair `i` covers source frames
/// `[i*stride, i*stride + t_total)` in order with no recentering.
pub fn window_split<T: Real>(
    seq: &PoseSequence<T>,
    t_obs: usize,
    t_total: usize,
    stride: usize,
) -> Result<Vec<SamplePair<T>>> {
    window_split_with_source(seq, t_obs, t_total, stride, "seq")
}

/// [`window_split`] with an explicit source label recorded in each pair's
/// `source_id` as `label:start_frame`.
pub fn window_split_with_source<T: Real>(
    seq: &PoseSequence<T>,
    t_obs: usize,
    t_total: usize,
    stride: usize,
    source: &str,
) -> Result<Vec<SamplePair<T>>> {
    if t_obs < 1 {
        return Err(Error::Argument("observed length must be >= 1".into()));
    }
    if t_total <= t_obs {
        return Err(Error::Argument(format!(
            "total window length {t_total} must exceed observed length {t_obs}"
        )));
    }
    if stride < 1 {
        return Err(Error::Argument("stride must be >= 1".into()));
    }
    let frames = seq.frames();
    if frames < t_total {
        return Ok(Vec::new());
    }
    let count = (frames - t_total) / stride + 1;
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride;
        let observed = seq.slice_frames(start, start + t_obs);
        let future = seq.slice_frames(start + t_obs, start + t_total);
        pairs.push(SamplePair::new(
            observed,
            future,
            format!("{source}:{start}"),
        )?);
    }
    Ok(pairs)
}

/// Adds i.i.d. Gaussian noise (std `noise_std_mm`) to every future-frame
/// coordinate of a uniformly chosen `floor(fraction * len)` subset of pairs
/// and sets their `corrupted` flag. Deterministic under `seed`.
pub fn corrupt_samples<T: Real>(
    pairs: Vec<SamplePair<T>>,
    fraction: f64,
    noise_std_mm: f64,
    seed: u64,
) -> Result<Vec<SamplePair<T>>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Argument(format!(
            "fraction {fraction} must be in [0, 1]"
        )));
    }
    if noise_std_mm < 0.0 {
        return Err(Error::Argument("noise std must be >= 0".into()));
    }
    let n_corrupt = (fraction * pairs.len() as f64).floor() as usize;
    if n_corrupt == 0 {
        return Ok(pairs);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // Partial Fisher-Yates: the first n_corrupt entries are a uniform subset.
    let mut indices: Vec<usize> = (0..pairs.len()).collect();
    for i in 0..n_corrupt {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    let mut chosen = indices[..n_corrupt].to_vec();
    chosen.sort_unstable();

    let mut pairs = pairs;
    for &idx in &chosen {
        let pair = &mut pairs[idx];
        let f = pair.future.frames();
        let j = pair.future.joints();
        let interval = pair.future.frame_interval_ms();
        let mut data = pair.future.flat().to_vec();
        for v in data.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = *v + T::from_f64(noise_std_mm * z);
        }
        pair.future = PoseSequence::from_flat(j, interval, data)?;
        debug_assert_eq!(pair.future.frames(), f);
        pair.corrupted = true;
    }
    Ok(pairs)
}

#[derive(Deserialize)]
struct JsonlFrame {
    #[allow(dead_code)]
    t: i64,
    joints: Vec<[f64; 3]>,
}

/// Loads a pose sequence from `path` in the given format. The joint count is
/// inferred from the first record and enforced on every later one.
pub fn load_sequence<T: Real>(
    path: &Path,
    format: SequenceFormat,
    frame_interval_ms: T,
) -> Result<PoseSequence<T>> {
    let text = fs::read_to_string(path)?;
    parse_sequence(&text, format, frame_interval_ms)
}

/// Parses sequence text; see [`load_sequence`].
pub fn parse_sequence<T: Real>(
    text: &str,
    format: SequenceFormat,
    frame_interval_ms: T,
) -> Result<PoseSequence<T>> {
    let mut joints: Option<usize> = None;
    let mut data: Vec<T> = Vec::new();
    let mut frames = 0usize;

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = match format {
            SequenceFormat::Csv => parse_csv_row(line, lineno)?,
            SequenceFormat::Jsonl => parse_jsonl_row(line, lineno)?,
        };
        match joints {
            None => {
                if row.is_empty() {
                    return Err(Error::Schema {
                        line: lineno,
                        msg: "record contains no joints".into(),
                    });
                }
                joints = Some(row.len());
            }
            Some(n) if n != row.len() => {
                return Err(Error::Schema {
                    line: lineno,
                    msg: format!("expected {n} joints, found {}", row.len()),
                });
            }
            _ => {}
        }
        for [x, y, z] in &row {
            for &v in &[*x, *y, *z] {
                if !v.is_finite() {
                    return Err(Error::Data {
                        line: lineno,
                        msg: format!("non-finite coordinate {v}"),
                    });
                }
                data.push(T::from_f64(v));
            }
        }
        frames += 1;
    }

    let joints = joints.ok_or(Error::Parse {
        line: 0,
        msg: "empty file".into(),
    })?;
    debug_assert_eq!(data.len(), frames * joints * 3);
    PoseSequence::from_flat(joints, frame_interval_ms, data)
}

fn parse_csv_row(line: &str, lineno: usize) -> Result<Vec<[f64; 3]>> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < 4 {
        return Err(Error::Parse {
            line: lineno,
            msg: format!(
                "expected `frame_index, x_0, y_0, z_0, ...`, found {} field(s)",
                fields.len()
            ),
        });
    }
    fields[0].parse::<i64>().map_err(|e| Error::Parse {
        line: lineno,
        msg: format!("bad frame index `{}`: {e}", fields[0]),
    })?;
    let coords = &fields[1..];
    if coords.len() % 3 != 0 {
        return Err(Error::Schema {
            line: lineno,
            msg: format!(
                "coordinate count {} is not a multiple of 3",
                coords.len()
            ),
        });
    }
    let mut row = Vec::with_capacity(coords.len() / 3);
    for triple in coords.chunks(3) {
        let mut xyz = [0.0f64; 3];
        for (slot, field) in xyz.iter_mut().zip(triple.iter()) {
            *slot = field.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad coordinate `{field}`: {e}"),
            })?;
        }
        row.push(xyz);
    }
    Ok(row)
}

fn parse_jsonl_row(line: &str, lineno: usize) -> Result<Vec<[f64; 3]>> {
    let frame: JsonlFrame = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: lineno,
        msg: format!("bad JSON object: {e}"),
    })?;
    Ok(frame.joints)
}

/// Writes a sequence as CSV with 6 decimal places; loading the result
/// reproduces the sequence to that precision.
pub fn save_sequence<T: Real>(seq: &PoseSequence<T>, path: &Path) -> Result<()> {
    fs::write(path, format_sequence_csv(seq))?;
    Ok(())
}

/// CSV text form of [`save_sequence`].
pub fn format_sequence_csv<T: Real>(seq: &PoseSequence<T>) -> String {
    let mut out = String::new();
    for t in 0..seq.frames() {
        let _ = write!(out, "{t}");
        for j in 0..seq.joints() {
            let [x, y, z] = seq.get(t, j);
            let _ = write!(
                out,
                ",{:.6},{:.6},{:.6}",
                x.as_f64(),
                y.as_f64(),
                z.as_f64()
            );
        }
        out.push('\n');
    }
    out
}
