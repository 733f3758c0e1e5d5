//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every
//! [`TrainConfig`] field has a key; unknown or repeated keys are errors.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::dataset::DEFAULT_VAL_FRACTION;
use crate::harness::eval::DropMode;
use crate::harness::train::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub seed: u64,
    pub per_class: usize,
    pub val_fraction: f64,
    /// Read this dataset file instead of generating one.
    pub file: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            per_class: 100,
            val_fraction: DEFAULT_VAL_FRACTION,
            file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Pairs drawn for mixed accuracy.
    pub pairs: usize,
    /// Pairs drawn for the inconsistency study.
    pub study_pairs: usize,
    pub drop_mode: DropMode,
    /// Independent random drop orders averaged per image.
    pub occlusion_repeats: usize,
    pub drop_ratios: Vec<f64>,
    /// Evaluate this checkpoint instead of training a model.
    pub checkpoint: Option<PathBuf>,
    /// Directory of per-record gaze grids; mask-derived gaze when absent.
    pub gaze_dir: Option<PathBuf>,
    /// Records used by `mix`.
    pub mix_a: usize,
    pub mix_b: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pairs: 500,
            study_pairs: 500,
            drop_mode: DropMode::Random,
            occlusion_repeats: 5,
            drop_ratios: (0..=10).map(|k| k as f64 / 10.0).collect(),
            checkpoint: None,
            gaze_dir: None,
            mix_a: 0,
            mix_b: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, ()> {
    if s == "none" {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| ())
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, ()> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| ()))
        .collect()
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "image_height",
        "image_width",
        "channels",
        "patch",
        "embed_dim",
        "heads",
        "blocks",
        "classes",
        "attention_block",
        "epochs",
        "batch_size",
        "lr",
        "momentum",
        "clip_norm",
        "mixer",
        "sigma",
        "beta",
        "reduction",
        "loss_mode",
        "seed",
        "check_every",
        "data_seed",
        "per_class",
        "val_fraction",
        "data_file",
        "eval_pairs",
        "study_pairs",
        "drop_mode",
        "occlusion_repeats",
        "drop_ratios",
        "checkpoint",
        "gaze_dir",
        "mix_a",
        "mix_b",
    ];

    /// Current value of `key` in file syntax.
    pub fn get(&self, key: &str) -> Option<String> {
        let (t, v, d, e) = (&self.train, &self.train.vit, &self.data, &self.eval);
        let path = |p: &Option<PathBuf>| opt(&p.as_ref().map(|p| p.display().to_string()));
        Some(match key {
            "image_height" => v.image_height.to_string(),
            "image_width" => v.image_width.to_string(),
            "channels" => v.channels.to_string(),
            "patch" => v.patch.to_string(),
            "embed_dim" => v.embed_dim.to_string(),
            "heads" => v.heads.to_string(),
            "blocks" => v.blocks.to_string(),
            "classes" => v.classes.to_string(),
            "attention_block" => opt(&v.attention_block),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "lr" => t.lr.to_string(),
            "momentum" => t.momentum.to_string(),
            "clip_norm" => opt(&t.clip_norm),
            "mixer" => t.mixer.to_string(),
            "sigma" => t.sigma.to_string(),
            "beta" => t.beta.to_string(),
            "reduction" => t.reduction.to_string(),
            "loss_mode" => t.loss_mode.to_string(),
            "seed" => t.seed.to_string(),
            "check_every" => t.check_every.to_string(),
            "data_seed" => d.seed.to_string(),
            "per_class" => d.per_class.to_string(),
            "val_fraction" => d.val_fraction.to_string(),
            "data_file" => path(&d.file),
            "eval_pairs" => e.pairs.to_string(),
            "study_pairs" => e.study_pairs.to_string(),
            "drop_mode" => e.drop_mode.to_string(),
            "occlusion_repeats" => e.occlusion_repeats.to_string(),
            "drop_ratios" => list(&e.drop_ratios),
            "checkpoint" => path(&e.checkpoint),
            "gaze_dir" => path(&e.gaze_dir),
            "mix_a" => e.mix_a.to_string(),
            "mix_b" => e.mix_b.to_string(),
            _ => return None,
        })
    }

    /// Sets `key` from its text form. Errors are [`Error::Config`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::config(format!("invalid value '{}' for {}", value, key));
        fn num<T: std::str::FromStr>(s: &str, bad: impl Fn() -> Error) -> Result<T> {
            s.parse().map_err(|_| bad())
        }
        let path = || (value != "none").then(|| PathBuf::from(value));
        let (t, d, e) = (&mut self.train, &mut self.data, &mut self.eval);
        match key {
            "image_height" => t.vit.image_height = num(value, bad)?,
            "image_width" => t.vit.image_width = num(value, bad)?,
            "channels" => t.vit.channels = num(value, bad)?,
            "patch" => t.vit.patch = num(value, bad)?,
            "embed_dim" => t.vit.embed_dim = num(value, bad)?,
            "heads" => t.vit.heads = num(value, bad)?,
            "blocks" => t.vit.blocks = num(value, bad)?,
            "classes" => t.vit.classes = num(value, bad)?,
            "attention_block" => t.vit.attention_block = parse_opt(value).map_err(|_| bad())?,
            "epochs" => t.epochs = num(value, bad)?,
            "batch_size" => t.batch_size = num(value, bad)?,
            "lr" => t.lr = num(value, bad)?,
            "momentum" => t.momentum = num(value, bad)?,
            "clip_norm" => t.clip_norm = parse_opt(value).map_err(|_| bad())?,
            "mixer" => t.mixer = value.parse()?,
            "sigma" => t.sigma = num(value, bad)?,
            "beta" => t.beta = value.parse()?,
            "reduction" => t.reduction = value.parse()?,
            "loss_mode" => t.loss_mode = value.parse()?,
            "seed" => t.seed = num(value, bad)?,
            "check_every" => t.check_every = num(value, bad)?,
            "data_seed" => d.seed = num(value, bad)?,
            "per_class" => d.per_class = num(value, bad)?,
            "val_fraction" => d.val_fraction = num(value, bad)?,
            "data_file" => d.file = path(),
            "eval_pairs" => e.pairs = num(value, bad)?,
            "study_pairs" => e.study_pairs = num(value, bad)?,
            "drop_mode" => e.drop_mode = value.parse()?,
            "occlusion_repeats" => e.occlusion_repeats = num(value, bad)?,
            "drop_ratios" => e.drop_ratios = parse_list(value).map_err(|_| bad())?,
            "checkpoint" => e.checkpoint = path(),
            "gaze_dir" => e.gaze_dir = path(),
            "mix_a" => e.mix_a = num(value, bad)?,
            "mix_b" => e.mix_b = num(value, bad)?,
            _ => return Err(Error::config(format!("unknown key '{}'", key))),
        }
        Ok(())
    }

    /// Applies `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen: Vec<&str> = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len();
            let body = line.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(Error::parse(at, format!("expected key = value, got '{}'", body)));
            };
            let (k, v) = (k.trim(), v.trim());
            if seen.contains(&k) {
                return Err(Error::parse(at, format!("duplicate key '{}'", k)));
            }
            seen.push(k);
            self.set(k, v).map_err(|e| Error::parse(at, e.to_string()))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let d = &self.data;
        if d.per_class == 0 {
            return Err(Error::config("per_class must be positive"));
        }
        if !(0.0..1.0).contains(&d.val_fraction) {
            return Err(Error::config("val_fraction must lie in [0, 1)"));
        }
        let e = &self.eval;
        if e.drop_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("drop ratios must lie in [0, 1]"));
        }
        if e.occlusion_repeats == 0 {
            return Err(Error::config("occlusion_repeats must be positive"));
        }
        Ok(())
    }

    /// Every key in file syntax; parsing the result gives back `self`.
    pub fn format(&self) -> String {
        let mut out = String::new();
        for k in Self::KEYS {
            let _ = writeln!(out, "{} = {}", k, self.get(k).expect("listed key"));
        }
        out
    }
}
