//! Run configuration: a flat `key = value` text format with dotted section
//! prefixes and `#` comments. Unknown keys are errors. Lists are
//! comma-separated; sweep grids list their values separated by whitespace.
//!
//! [`RunConfig::entries`] renders every key in a fixed order, and parsing
//! that rendering gives back an equal config.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::SYNTHETIC_NOISE_STD;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::loss::AlignmentMode;
use crate::model::Activation;
use crate::retrieval::GcCosine;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    ToyRotation,
    Translate,
    Sweep,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Synth => "synth",
            Command::ToyRotation => "toy-rotation",
            Command::Translate => "translate",
            Command::Sweep => "sweep",
        })
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synth" => Ok(Command::Synth),
            "toy-rotation" => Ok(Command::ToyRotation),
            "translate" => Ok(Command::Translate),
            "sweep" => Ok(Command::Sweep),
            other => Err(Error::Config(format!("unknown command {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub scale: f64,
    pub width: f64,
    pub num_scales: usize,
    /// `None` means every rung has weight 1.
    pub coefficients: Option<Vec<f64>>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            scale: 1.0,
            width: 4.0,
            num_scales: 10,
            coefficients: None,
        }
    }
}

impl KernelConfig {
    pub fn spec(&self) -> Result<KernelSpec> {
        let coeffs = self
            .coefficients
            .clone()
            .unwrap_or_else(|| vec![1.0; self.num_scales + 1]);
        KernelSpec::new(self.scale, self.width, self.num_scales, coeffs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub points: usize,
    /// Standard deviation; the default has variance 0.1.
    pub noise_std: f64,
    pub num_paired: usize,
    pub test_points: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            points: 20_000,
            noise_std: SYNTHETIC_NOISE_STD,
            num_paired: 15,
            test_points: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub points: usize,
    pub theta_star: f64,
    pub noise_std: f64,
    /// Scan step in degrees.
    pub resolution: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            points: 500,
            theta_star: 255.0,
            noise_std: crate::data::TOY_NOISE_STD,
            resolution: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslateConfig {
    pub source_embeddings: Option<PathBuf>,
    pub target_embeddings: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub train_sizes: Vec<usize>,
    pub bin_edges: Vec<usize>,
    pub test_per_bin: usize,
    pub eval_n: Vec<usize>,
}

impl Default for TranslateConfig {
    fn default() -> Self {
        Self {
            source_embeddings: None,
            target_embeddings: None,
            lexicon: None,
            train_sizes: vec![750],
            bin_edges: vec![0, 5_000, 20_000, 50_000, 100_000, 200_000],
            test_per_bin: 400,
            eval_n: vec![1, 5, 10],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetrievalConfig {
    /// 0 means the whole target table.
    pub gc_pool_size: usize,
    pub gc_cosine: GcCosine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepConfig {
    pub command: Command,
    /// Keys in declaration order, each with its candidate values.
    pub grid: Vec<(String, Vec<String>)>,
    pub jobs: usize,
    /// Retrain the selected cell with every pair (no validation hold-out).
    pub refit: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            command: Command::Synth,
            grid: Vec::new(),
            jobs: 1,
            refit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub kernel: KernelConfig,
    /// `train.seed` is ignored; [`RunConfig::train_config`] fills it in.
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub synth: SynthConfig,
    pub toy: ToyConfig,
    pub translate: TranslateConfig,
    pub retrieval: RetrievalConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kernel: KernelConfig::default(),
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            synth: SynthConfig::default(),
            toy: ToyConfig::default(),
            translate: TranslateConfig::default(),
            retrieval: RetrievalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

const GRID_PREFIX: &str = "sweep.grid.";

fn bad(key: &str, value: &str, what: impl fmt::Display) -> Error {
    Error::Config(format!("{key} = {value:?}: {what}"))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v)).collect()
}

fn parse_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_list<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn fmt_f64_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

fn fmt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected \"key = value\", got {raw:?}", i + 1)))?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Applies `key=value`, as given to `--set`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(grid_key) = key.strip_prefix(GRID_PREFIX) {
            return self.set_grid(grid_key, value);
        }
        let t = &mut self.train;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "kernel.scale" => self.kernel.scale = parse(key, value)?,
            "kernel.width" => self.kernel.width = parse(key, value)?,
            "kernel.num_scales" => self.kernel.num_scales = parse(key, value)?,
            "kernel.coefficients" => {
                self.kernel.coefficients = match value.trim() {
                    "uniform" => None,
                    v => Some(parse_list(key, v)?),
                }
            }
            "train.alpha_pair" => t.blend.alpha_pair = parse(key, value)?,
            "train.alignment_mode" => t.blend.alignment_mode = parse::<AlignmentMode>(key, value)?,
            "train.batch_paired" => t.batch_paired = parse(key, value)?,
            "train.batch_unpaired" => t.batch_unpaired = parse(key, value)?,
            "train.learning_rate" => t.learning_rate = parse(key, value)?,
            "train.rms_decay" => t.rms_decay = parse(key, value)?,
            "train.rms_epsilon" => t.rms_epsilon = parse(key, value)?,
            "train.epochs_pretrain" => t.epochs_pretrain = parse(key, value)?,
            "train.epochs_joint" => t.epochs_joint = parse(key, value)?,
            "train.validation_fraction" => t.validation_fraction = parse(key, value)?,
            "train.fit_bias" => t.fit_bias = parse(key, value)?,
            "train.early_stop_patience" => t.early_stop_patience = parse(key, value)?,
            "model.hidden" => self.model.hidden = parse_list(key, value)?,
            "model.activation" => self.model.activation = parse(key, value)?,
            "synth.dim" => self.synth.dim = parse(key, value)?,
            "synth.points" => self.synth.points = parse(key, value)?,
            "synth.noise_std" => self.synth.noise_std = parse(key, value)?,
            "synth.num_paired" => self.synth.num_paired = parse(key, value)?,
            "synth.test_points" => self.synth.test_points = parse(key, value)?,
            "toy.points" => self.toy.points = parse(key, value)?,
            "toy.theta_star" => self.toy.theta_star = parse(key, value)?,
            "toy.noise_std" => self.toy.noise_std = parse(key, value)?,
            "toy.resolution" => self.toy.resolution = parse(key, value)?,
            "translate.source_embeddings" => self.translate.source_embeddings = parse_path(value),
            "translate.target_embeddings" => self.translate.target_embeddings = parse_path(value),
            "translate.lexicon" => self.translate.lexicon = parse_path(value),
            "translate.train_sizes" => self.translate.train_sizes = parse_list(key, value)?,
            "translate.bin_edges" => self.translate.bin_edges = parse_list(key, value)?,
            "translate.test_per_bin" => self.translate.test_per_bin = parse(key, value)?,
            "translate.eval_n" => self.translate.eval_n = parse_list(key, value)?,
            "retrieval.gc_pool_size" => self.retrieval.gc_pool_size = parse(key, value)?,
            "retrieval.gc_cosine" => self.retrieval.gc_cosine = parse(key, value)?,
            "sweep.command" => self.sweep.command = parse(key, value)?,
            "sweep.jobs" => self.sweep.jobs = parse(key, value)?,
            "sweep.refit" => self.sweep.refit = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    fn set_grid(&mut self, key: &str, value: &str) -> Result<()> {
        if key.starts_with("sweep.") {
            return Err(Error::Config(format!("cannot sweep over {key:?}")));
        }
        let values: Vec<String> = value.split_whitespace().map(str::to_string).collect();
        if values.is_empty() {
            return Err(Error::Config(format!("{GRID_PREFIX}{key} lists no values")));
        }
        let mut probe = self.clone();
        for v in &values {
            probe.set(key, v)?;
        }
        match self.sweep.grid.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = values,
            None => self.sweep.grid.push((key.to_string(), values)),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let fixed: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("kernel.scale", fmt_f64(self.kernel.scale)),
            ("kernel.width", fmt_f64(self.kernel.width)),
            ("kernel.num_scales", self.kernel.num_scales.to_string()),
            (
                "kernel.coefficients",
                self.kernel
                    .coefficients
                    .as_ref()
                    .map_or_else(|| "uniform".to_string(), |c| fmt_f64_list(c)),
            ),
            ("train.alpha_pair", fmt_f64(t.blend.alpha_pair)),
            ("train.alignment_mode", t.blend.alignment_mode.to_string()),
            ("train.batch_paired", t.batch_paired.to_string()),
            ("train.batch_unpaired", t.batch_unpaired.to_string()),
            ("train.learning_rate", fmt_f64(t.learning_rate)),
            ("train.rms_decay", fmt_f64(t.rms_decay)),
            ("train.rms_epsilon", fmt_f64(t.rms_epsilon)),
            ("train.epochs_pretrain", t.epochs_pretrain.to_string()),
            ("train.epochs_joint", t.epochs_joint.to_string()),
            ("train.validation_fraction", fmt_f64(t.validation_fraction)),
            ("train.fit_bias", t.fit_bias.to_string()),
            ("train.early_stop_patience", t.early_stop_patience.to_string()),
            ("model.hidden", fmt_list(&self.model.hidden)),
            ("model.activation", self.model.activation.to_string()),
            ("synth.dim", self.synth.dim.to_string()),
            ("synth.points", self.synth.points.to_string()),
            ("synth.noise_std", fmt_f64(self.synth.noise_std)),
            ("synth.num_paired", self.synth.num_paired.to_string()),
            ("synth.test_points", self.synth.test_points.to_string()),
            ("toy.points", self.toy.points.to_string()),
            ("toy.theta_star", fmt_f64(self.toy.theta_star)),
            ("toy.noise_std", fmt_f64(self.toy.noise_std)),
            ("toy.resolution", fmt_f64(self.toy.resolution)),
            ("translate.source_embeddings", fmt_path(&self.translate.source_embeddings)),
            ("translate.target_embeddings", fmt_path(&self.translate.target_embeddings)),
            ("translate.lexicon", fmt_path(&self.translate.lexicon)),
            ("translate.train_sizes", fmt_list(&self.translate.train_sizes)),
            ("translate.bin_edges", fmt_list(&self.translate.bin_edges)),
            ("translate.test_per_bin", self.translate.test_per_bin.to_string()),
            ("translate.eval_n", fmt_list(&self.translate.eval_n)),
            ("retrieval.gc_pool_size", self.retrieval.gc_pool_size.to_string()),
            ("retrieval.gc_cosine", self.retrieval.gc_cosine.to_string()),
            ("sweep.command", self.sweep.command.to_string()),
            ("sweep.jobs", self.sweep.jobs.to_string()),
            ("sweep.refit", self.sweep.refit.to_string()),
        ];
        fixed
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .chain(self.sweep.grid.iter().map(|(k, v)| (format!("{GRID_PREFIX}{k}"), v.join(" "))))
            .collect()
    }

    /// The config file text for [`RunConfig::entries`].
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Training settings with the run seed filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Checks the settings shared by every command.
    pub fn validate(&self) -> Result<()> {
        self.kernel.spec()?;
        self.train_config().validate()?;
        if self.sweep.jobs == 0 {
            return Err(Error::Config("sweep.jobs must be at least 1".into()));
        }
        Ok(())
    }
}
