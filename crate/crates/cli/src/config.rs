//! Run configuration: one JSON file covering data, synthesis, model,
//! training, and evaluation, with dotted-key command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uahmp::predictor::PredictorConfig;
use uahmp::skeleton_data::{SequenceFormat, SynthConfig};
use uahmp::trainer::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub frame_interval_ms: f64,
    /// Subtract each window's first observed root-joint position.
    pub center_root: bool,
    pub data: DataConfig,
    pub synth: SynthSection,
    pub predictor: PredictorSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            frame_interval_ms: 40.0,
            center_root: true,
            data: DataConfig::default(),
            synth: SynthSection::default(),
            predictor: PredictorSection::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub format: SequenceFormat,
    /// Directory whose sorted `*.csv` / `*.jsonl` files form the training set.
    pub train_dir: Option<String>,
    pub train_files: Vec<String>,
    pub val_dir: Option<String>,
    pub val_files: Vec<String>,
    /// Tail fraction of training windows held out when no explicit
    /// validation data is given.
    pub val_fraction: f64,
    pub t_obs: usize,
    pub t_future: usize,
    pub stride: usize,
    /// Fraction of training pairs whose future frames get Gaussian noise.
    pub corrupt_fraction: f64,
    pub corrupt_noise_std_mm: f64,
    pub corrupt_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            format: SequenceFormat::Csv,
            train_dir: None,
            train_files: Vec::new(),
            val_dir: None,
            val_files: Vec::new(),
            val_fraction: 0.25,
            t_obs: 10,
            t_future: 10,
            stride: 1,
            corrupt_fraction: 0.0,
            corrupt_noise_std_mm: 0.0,
            corrupt_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_sequences: usize,
    pub joints: usize,
    pub duration_frames: usize,
    /// Per-joint frequencies (Hz); empty means an even spread over
    /// `[0.5, 2.0]`.
    pub base_frequencies: Vec<f64>,
    /// Per-joint amplitudes (mm); empty means an even spread over
    /// `[60, 150]`.
    pub amplitude_mm: Vec<f64>,
    pub noise_floor_mm: f64,
    pub noise_growth_per_frame: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n_sequences: 4,
            joints: 4,
            duration_frames: 240,
            base_frequencies: Vec::new(),
            amplitude_mm: Vec::new(),
            noise_floor_mm: 1.0,
            noise_growth_per_frame: 0.0,
        }
    }
}

impl SynthSection {
    /// Concrete generator config of sequence `index`.
    pub fn sequence_config(
        &self,
        index: usize,
        seed: u64,
        frame_interval_ms: f64,
    ) -> SynthConfig {
        let spread = |lo: f64, hi: f64, j: usize| {
            if self.joints <= 1 {
                (lo + hi) / 2.0
            } else {
                lo + (hi - lo) * j as f64 / (self.joints - 1) as f64
            }
        };
        let base_frequencies = if self.base_frequencies.is_empty() {
            (0..self.joints).map(|j| spread(0.5, 2.0, j)).collect()
        } else {
            self.base_frequencies.clone()
        };
        let amplitude_mm = if self.amplitude_mm.is_empty() {
            (0..self.joints).map(|j| spread(60.0, 150.0, j)).collect()
        } else {
            self.amplitude_mm.clone()
        };
        SynthConfig {
            joints: self.joints,
            duration_frames: self.duration_frames,
            frame_interval_ms,
            base_frequencies,
            amplitude_mm,
            noise_floor_mm: self.noise_floor_mm,
            noise_growth_per_frame: self.noise_growth_per_frame,
            seed: seed.wrapping_add(index as u64),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    pub n_dct_coeffs: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub init_scale: f64,
}

impl Default for PredictorSection {
    fn default() -> Self {
        PredictorSection {
            n_dct_coeffs: 10,
            hidden_dim: 32,
            n_blocks: 2,
            init_scale: 0.5,
        }
    }
}

impl PredictorSection {
    pub fn to_predictor_config(&self, data: &DataConfig, joints: usize, seed: u64) -> PredictorConfig {
        PredictorConfig {
            joints,
            t_obs: data.t_obs,
            t_future: data.t_future,
            n_dct_coeffs: self.n_dct_coeffs,
            hidden_dim: self.hidden_dim,
            n_blocks: self.n_blocks,
            init_scale: self.init_scale,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub horizons_ms: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            horizons_ms: vec![80.0, 160.0, 320.0, 400.0],
        }
    }
}

impl RunConfig {
    /// Loads the optional config file, applies `--set key=value` overrides
    /// (dotted keys into the JSON tree; values parsed as JSON, falling back
    /// to strings), then an optional top-level seed override.
    pub fn resolve(
        config_path: Option<&Path>,
        sets: &[String],
        seed: Option<u64>,
    ) -> Result<RunConfig, String> {
        let mut tree: serde_json::Value = match config_path {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| format!("bad config {}: {e}", path.display()))?
            }
            None => serde_json::to_value(RunConfig::default()).expect("serializable defaults"),
        };
        for set in sets {
            let (key, value) = set
                .split_once('=')
                .ok_or_else(|| format!("--set expects KEY=VALUE, got `{set}`"))?;
            let parsed: serde_json::Value = serde_json::from_str(value)
                .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
            insert_dotted(&mut tree, key, parsed)?;
        }
        if let Some(seed) = seed {
            insert_dotted(&mut tree, "seed", serde_json::json!(seed))?;
        }
        serde_json::from_value(tree).map_err(|e| format!("invalid configuration: {e}"))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable config")
    }

    /// Canonical single-line JSON used for hashing.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable config")
    }

    /// Sorted `*.csv` / `*.jsonl` paths of the training set.
    pub fn train_paths(&self) -> Result<Vec<PathBuf>, String> {
        collect_paths(&self.data.train_dir, &self.data.train_files, &self.data.format)
    }

    pub fn val_paths(&self) -> Result<Vec<PathBuf>, String> {
        collect_paths(&self.data.val_dir, &self.data.val_files, &self.data.format)
    }
}

fn collect_paths(
    dir: &Option<String>,
    files: &[String],
    format: &SequenceFormat,
) -> Result<Vec<PathBuf>, String> {
    let mut out: Vec<PathBuf> = files.iter().map(PathBuf::from).collect();
    if let Some(dir) = dir {
        let ext = match format {
            SequenceFormat::Csv => "csv",
            SequenceFormat::Jsonl => "jsonl",
        };
        let mut found = Vec::new();
        let entries =
            fs::read_dir(dir).map_err(|e| format!("cannot list data dir {dir}: {e}"))?;
        for entry in entries {
            let path = entry.map_err(|e| format!("cannot list data dir {dir}: {e}"))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some(ext) {
                found.push(path);
            }
        }
        found.sort();
        out.extend(found);
    }
    for p in &out {
        if !p.exists() {
            return Err(format!("data file {} does not exist", p.display()));
        }
    }
    Ok(out)
}

fn insert_dotted(
    tree: &mut serde_json::Value,
    dotted: &str,
    value: serde_json::Value,
) -> Result<(), String> {
    let mut node = tree;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| format!("config key `{dotted}`: `{part}` is not an object"))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        node = obj
            .entry((*part).to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    Err(format!("empty config key `{dotted}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back.to_json(), cfg.to_json());
    }

    #[test]
    fn dotted_overrides() {
        let cfg = RunConfig::resolve(
            None,
            &[
                "train.lr=0.01".to_string(),
                "data.t_obs=8".to_string(),
                "predictor.hidden_dim=16".to_string(),
                "train.loss_mode=\"mpjpe_only\"".to_string(),
            ],
            Some(9),
        )
        .unwrap();
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.data.t_obs, 8);
        assert_eq!(cfg.predictor.hidden_dim, 16);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn bad_override_is_rejected() {
        assert!(RunConfig::resolve(None, &["train.lr".to_string()], None).is_err());
        assert!(RunConfig::resolve(None, &["no_such_key=1".to_string()], None).is_err());
    }

    #[test]
    fn synth_section_fills_per_joint_arrays() {
        let s = SynthSection::default();
        let c = s.sequence_config(2, 10, 40.0);
        assert_eq!(c.seed, 12);
        assert_eq!(c.base_frequencies.len(), s.joints);
        assert_eq!(c.amplitude_mm.len(), s.joints);
        assert!(c.base_frequencies.windows(2).all(|w| w[0] < w[1]));
    }
}
