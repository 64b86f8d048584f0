//! Pipeline configuration: a flat `key = value` text format with dotted keys.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Every key has a documented default, so a config file only needs
//! to list deviations. CLI `--set key=value` overrides are applied through
//! the same parser after the file. [`PipelineConfig::render`] writes the
//! fully resolved config back out in a fixed order, which is what run
//! reports embed.
//!
//! A single root `seed` drives every stage; per-stage seeds are derived from
//! it with fixed labels (`split`, `sample`, `sae1`, `sae2`, `finetune`,
//! `svm`) so one knob reproduces an entire run.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::classify::SvmConfig;
use crate::dataset::SplitSpec;
use crate::deepnet::FineTuneConfig;
use crate::pooling::SpmConfig;
use crate::rng::stage_seed;
use crate::sae::{InitScale, SaeConfig};
use crate::{Error, Result};

/// Square side images are resized to, and dense-SIFT sampling geometry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiftSettings {
    pub resize: usize,
    pub step: usize,
    pub patch_sizes: Vec<usize>,
}

impl Default for SiftSettings {
    fn default() -> Self {
        SiftSettings {
            resize: 90,
            step: 4,
            patch_sizes: vec![12, 16, 24],
        }
    }
}

/// Per-class image counts for the train/test split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSettings {
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            train_per_class: 15,
            test_per_class: 5,
        }
    }
}

/// One auto-encoder layer's hyper-parameters (seed supplied per stage).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaeSettings {
    pub hidden: usize,
    pub rho: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for SaeSettings {
    fn default() -> Self {
        SaeSettings {
            hidden: 1024,
            rho: 0.05,
            beta: 3.0,
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FineTuneSettings {
    pub enabled: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for FineTuneSettings {
    fn default() -> Self {
        FineTuneSettings {
            enabled: true,
            learning_rate: 0.001,
            epochs: 30,
            batch_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpmSettings {
    pub levels: Vec<usize>,
    pub normalize: bool,
}

impl Default for SpmSettings {
    fn default() -> Self {
        SpmSettings {
            levels: vec![1, 2, 4],
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvmSettings {
    pub c_reg: f64,
    pub epochs: usize,
    pub lr0: f64,
}

impl Default for SvmSettings {
    fn default() -> Self {
        SvmSettings {
            c_reg: 1.0,
            epochs: 40,
            lr0: 0.1,
        }
    }
}

/// Fully resolved configuration for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub dataset_root: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub split: SplitSettings,
    pub sift: SiftSettings,
    pub sample_n: usize,
    pub sae1: SaeSettings,
    pub sae2: SaeSettings,
    pub fine_tune: FineTuneSettings,
    pub spm: SpmSettings,
    pub svm: SvmSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset_root: PathBuf::new(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            split: SplitSettings::default(),
            sift: SiftSettings::default(),
            sample_n: 200_000,
            sae1: SaeSettings::default(),
            sae2: SaeSettings::default(),
            fine_tune: FineTuneSettings::default(),
            spm: SpmSettings::default(),
            svm: SvmSettings::default(),
        }
    }
}

fn bad(key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("key '{key}': cannot parse '{value}' as {want}"))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| bad(key, value, "an integer"))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value.parse().map_err(|_| bad(key, value, "an integer"))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value.parse().map_err(|_| bad(key, value, "a number"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value, "true or false")),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| bad(key, value, "a comma-separated integer list")))
        .collect()
}

fn join_list(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl PipelineConfig {
    /// Set one `key = value` pair. Unknown keys are configuration errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let sae = |cfg: &mut SaeSettings, field: &str, key: &str, value: &str| -> Result<bool> {
            match field {
                "hidden" => cfg.hidden = parse_usize(key, value)?,
                "rho" => cfg.rho = parse_f64(key, value)?,
                "beta" => cfg.beta = parse_f64(key, value)?,
                "learning_rate" => cfg.learning_rate = parse_f64(key, value)?,
                "epochs" => cfg.epochs = parse_usize(key, value)?,
                "batch_size" => cfg.batch_size = parse_usize(key, value)?,
                _ => return Ok(false),
            }
            Ok(true)
        };
        let known = match key {
            "dataset_root" => {
                self.dataset_root = PathBuf::from(value);
                true
            }
            "out_dir" => {
                self.out_dir = PathBuf::from(value);
                true
            }
            "seed" => {
                self.seed = parse_u64(key, value)?;
                true
            }
            "sample_n" => {
                self.sample_n = parse_usize(key, value)?;
                true
            }
            "split.train_per_class" => {
                self.split.train_per_class = parse_usize(key, value)?;
                true
            }
            "split.test_per_class" => {
                self.split.test_per_class = parse_usize(key, value)?;
                true
            }
            "sift.resize" => {
                self.sift.resize = parse_usize(key, value)?;
                true
            }
            "sift.step" => {
                self.sift.step = parse_usize(key, value)?;
                true
            }
            "sift.patch_sizes" => {
                self.sift.patch_sizes = parse_list(key, value)?;
                true
            }
            "fine_tune.enabled" => {
                self.fine_tune.enabled = parse_bool(key, value)?;
                true
            }
            "fine_tune.learning_rate" => {
                self.fine_tune.learning_rate = parse_f64(key, value)?;
                true
            }
            "fine_tune.epochs" => {
                self.fine_tune.epochs = parse_usize(key, value)?;
                true
            }
            "fine_tune.batch_size" => {
                self.fine_tune.batch_size = parse_usize(key, value)?;
                true
            }
            "spm.levels" => {
                self.spm.levels = parse_list(key, value)?;
                true
            }
            "spm.normalize" => {
                self.spm.normalize = parse_bool(key, value)?;
                true
            }
            "svm.c_reg" => {
                self.svm.c_reg = parse_f64(key, value)?;
                true
            }
            "svm.epochs" => {
                self.svm.epochs = parse_usize(key, value)?;
                true
            }
            "svm.lr0" => {
                self.svm.lr0 = parse_f64(key, value)?;
                true
            }
            _ => {
                if let Some(field) = key.strip_prefix("sae1.") {
                    sae(&mut self.sae1, field, key, value)?
                } else if let Some(field) = key.strip_prefix("sae2.") {
                    sae(&mut self.sae2, field, key, value)?
                } else {
                    false
                }
            }
        };
        if !known {
            return Err(Error::Config(format!("unknown config key '{key}'")));
        }
        Ok(())
    }

    /// Parse config text (defaults plus the lines present).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Apply `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{line}'", i + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Apply `key=value` override strings (e.g. from CLI flags).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        for pair in pairs {
            let pair = pair.as_ref();
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{pair}': expected key=value")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Emit every key in a fixed order; `from_text` on the result is the
    /// identity. This is the config echo embedded in reports.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line("dataset_root", self.dataset_root.display().to_string());
        line("out_dir", self.out_dir.display().to_string());
        line("seed", self.seed.to_string());
        line("split.train_per_class", self.split.train_per_class.to_string());
        line("split.test_per_class", self.split.test_per_class.to_string());
        line("sift.resize", self.sift.resize.to_string());
        line("sift.step", self.sift.step.to_string());
        line("sift.patch_sizes", join_list(&self.sift.patch_sizes));
        line("sample_n", self.sample_n.to_string());
        for (name, c) in [("sae1", &self.sae1), ("sae2", &self.sae2)] {
            line(&format!("{name}.hidden"), c.hidden.to_string());
            line(&format!("{name}.rho"), c.rho.to_string());
            line(&format!("{name}.beta"), c.beta.to_string());
            line(&format!("{name}.learning_rate"), c.learning_rate.to_string());
            line(&format!("{name}.epochs"), c.epochs.to_string());
            line(&format!("{name}.batch_size"), c.batch_size.to_string());
        }
        line("fine_tune.enabled", self.fine_tune.enabled.to_string());
        line("fine_tune.learning_rate", self.fine_tune.learning_rate.to_string());
        line("fine_tune.epochs", self.fine_tune.epochs.to_string());
        line("fine_tune.batch_size", self.fine_tune.batch_size.to_string());
        line("spm.levels", join_list(&self.spm.levels));
        line("spm.normalize", self.spm.normalize.to_string());
        line("svm.c_reg", self.svm.c_reg.to_string());
        line("svm.epochs", self.svm.epochs.to_string());
        line("svm.lr0", self.svm.lr0.to_string());
        s
    }

    /// Check everything that can be checked without touching the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.dataset_root.as_os_str().is_empty() {
            return Err(Error::Config("dataset_root is not set".into()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("out_dir is not set".into()));
        }
        if self.split.train_per_class == 0 {
            return Err(Error::Config("split.train_per_class must be >= 1".into()));
        }
        if self.sift.resize == 0 || self.sift.step == 0 {
            return Err(Error::Config("sift.resize and sift.step must be >= 1".into()));
        }
        if self.sift.patch_sizes.is_empty() {
            return Err(Error::Config("sift.patch_sizes must be nonempty".into()));
        }
        if self.sample_n == 0 {
            return Err(Error::Config("sample_n must be >= 1".into()));
        }
        self.sae_config(&self.sae1, 0).validate()?;
        self.sae_config(&self.sae2, 0).validate()?;
        if self.fine_tune.enabled {
            self.fine_tune_config(0).validate()?;
        }
        self.spm_config().validate()?;
        self.svm_config(0).validate()?;
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_per_class: self.split.train_per_class,
            test_per_class: self.split.test_per_class,
            seed: stage_seed(self.seed, "split"),
        }
    }

    fn sae_config(&self, s: &SaeSettings, seed: u64) -> SaeConfig {
        SaeConfig {
            hidden: s.hidden,
            rho: s.rho,
            beta: s.beta,
            learning_rate: s.learning_rate,
            epochs: s.epochs,
            batch_size: s.batch_size,
            seed,
            init_scale: InitScale::Glorot,
        }
    }

    pub fn sae1_config(&self) -> SaeConfig {
        self.sae_config(&self.sae1, stage_seed(self.seed, "sae1"))
    }

    pub fn sae2_config(&self) -> SaeConfig {
        self.sae_config(&self.sae2, stage_seed(self.seed, "sae2"))
    }

    fn fine_tune_config(&self, seed: u64) -> FineTuneConfig {
        FineTuneConfig {
            learning_rate: self.fine_tune.learning_rate,
            epochs: self.fine_tune.epochs,
            batch_size: self.fine_tune.batch_size,
            seed,
        }
    }

    pub fn fine_tune_cfg(&self) -> FineTuneConfig {
        self.fine_tune_config(stage_seed(self.seed, "finetune"))
    }

    pub fn sample_seed(&self) -> u64 {
        stage_seed(self.seed, "sample")
    }

    pub fn spm_config(&self) -> SpmConfig {
        SpmConfig {
            levels: self.spm.levels.clone(),
            normalize: self.spm.normalize,
        }
    }

    fn svm_config(&self, seed: u64) -> SvmConfig {
        SvmConfig {
            c_reg: self.svm.c_reg,
            epochs: self.svm.epochs,
            lr0: self.svm.lr0,
            seed,
        }
    }

    pub fn svm_cfg(&self) -> SvmConfig {
        self.svm_config(stage_seed(self.seed, "svm"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_protocol() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.sift.resize, 90);
        assert_eq!(cfg.sift.patch_sizes, vec![12, 16, 24]);
        assert_eq!(cfg.sample_n, 200_000);
        assert_eq!(cfg.sae1.hidden, 1024);
        assert_eq!(cfg.sae1.rho, 0.05);
        assert_eq!(cfg.sae1.beta, 3.0);
        assert_eq!(cfg.spm.levels, vec![1, 2, 4]);
        assert_eq!(cfg.split.train_per_class, 15);
        assert_eq!(cfg.split.test_per_class, 5);
    }

    #[test]
    fn parses_comments_blanks_and_values() {
        let text = "\
# benchmark config
dataset_root = data/glyphs

sae1.hidden = 128
sae2.hidden = 128
sift.patch_sizes = 16
fine_tune.enabled = false
seed = 7
";
        let cfg = PipelineConfig::from_text(text).unwrap();
        assert_eq!(cfg.dataset_root, PathBuf::from("data/glyphs"));
        assert_eq!(cfg.sae1.hidden, 128);
        assert_eq!(cfg.sae2.hidden, 128);
        assert_eq!(cfg.sift.patch_sizes, vec![16]);
        assert!(!cfg.fine_tune.enabled);
        assert_eq!(cfg.seed, 7);
        // untouched keys keep defaults
        assert_eq!(cfg.sample_n, 200_000);
    }

    #[test]
    fn render_parse_is_identity() {
        let mut cfg = PipelineConfig::default();
        cfg.set("dataset_root", "d").unwrap();
        cfg.set("sae1.beta", "0.5").unwrap();
        cfg.set("spm.levels", "1,3").unwrap();
        cfg.set("svm.lr0", "0.25").unwrap();
        let back = PipelineConfig::from_text(&cfg.render()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_is_rejected_with_line_number() {
        let err = PipelineConfig::from_text("x = 1\nsae3.rho = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
        assert!(msg.contains("unknown config key 'x'"), "{msg}");
    }

    #[test]
    fn bad_value_is_rejected() {
        let err = PipelineConfig::from_text("seed = banana\n").unwrap_err();
        assert!(err.to_string().contains("banana"), "{err}");
        let err = PipelineConfig::from_text("spm.normalize = yes\n").unwrap_err();
        assert!(err.to_string().contains("true or false"), "{err}");
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut cfg = PipelineConfig::from_text("seed = 1\n").unwrap();
        cfg.apply_overrides(&["seed=2", "sae1.epochs = 3"]).unwrap();
        assert_eq!(cfg.seed, 2);
        assert_eq!(cfg.sae1.epochs, 3);
        assert!(cfg.apply_overrides(&["nonsense"]).is_err());
    }

    #[test]
    fn stage_seeds_are_distinct_and_deterministic() {
        let mut cfg = PipelineConfig::default();
        cfg.seed = 1;
        let seeds = [
            cfg.split_spec().seed,
            cfg.sample_seed(),
            cfg.sae1_config().seed,
            cfg.sae2_config().seed,
            cfg.fine_tune_cfg().seed,
            cfg.svm_cfg().seed,
        ];
        for i in 0..seeds.len() {
            for j in i + 1..seeds.len() {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
        assert_eq!(cfg.sae1_config().seed, cfg.sae1_config().seed);
        let mut other = cfg.clone();
        other.seed = 2;
        assert_ne!(other.sae1_config().seed, cfg.sae1_config().seed);
    }

    #[test]
    fn validate_requires_dataset_root() {
        let cfg = PipelineConfig::default();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = cfg;
        cfg.set("dataset_root", "d").unwrap();
        cfg.validate().unwrap();
        cfg.set("sae1.rho", "1.5").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_echo_serializes_to_json() {
        let cfg = PipelineConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"sample_n\":200000"), "{json}");
    }
}
