//! Plain-text experiment configuration.
//!
//! The config file is line-oriented `key = value`; `#` starts a comment.
//! Unknown keys and duplicate keys are rejected. Every key except `seeds`
//! has a default. Schema (defaults in parentheses):
//!
//! ```text
//! # task
//! task.feature_dim        usize   (8)
//! task.num_classes        usize   (4)
//! task.snr_low_db         f64     (-4)
//! task.snr_high_db        f64     (6)
//! task.clean_generator    gaussian_classes | sinusoid_bank  (gaussian_classes)
//! task.noise_generator    gaussian | impulsive | structured (gaussian)
//! task.train_size         usize   (400)
//! task.val_size           usize   (300)
//! task.test_size          usize   (600)
//! task.label_fraction     f64 in (0,1] (1.0)
//! task.seed               u64     (0)   # class geometry seed, shared across run seeds
//!
//! # fine-tuning
//! trainer.total_steps     u64     (4000)
//! trainer.epsilon         f64     (1e-3)
//! trainer.langevin        auto | on | off (auto: on in SRPR/D4AM, off elsewhere)
//! trainer.batch_size_cls  usize   (8)
//! trainer.batch_size_reg  usize   (8)
//! trainer.eval_every      u64     (200)
//!
//! # coefficient machinery
//! combiner.beta            f64    (0.05)
//! combiner.update_period   u32    (16)
//! combiner.clamp_lo        f64    (-1)
//! combiner.clamp_hi        f64    (1)
//! combiner.alpha_srpr_init f64    (1)
//! combiner.eps_guard       f64    (1e-12)
//!
//! # pre-training stage
//! pretrain.steps          u64     (3000)
//! pretrain.epsilon        f64     (1e-2)
//! pretrain.batch_size     usize   (8)
//!
//! # models
//! enhancer.hidden_dims    comma-separated usizes (16)
//! evaluators.count        usize   (4)
//! classifier.accuracy_floor f64   (0.95)
//! classifier.max_steps    u64     (10000)
//!
//! # experiment matrix
//! modes        comma-separated of NOIS,INIT,CLSO,SRPR,GCLB,D4AM (all six)
//! grid_weights comma-separated f64 (0,0.1,1.0,10,20,30,40,50,60)
//! seeds        comma-separated u64, no duplicates (required)
//! output_dir   path (out)
//! jobs         usize (1)
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use auxcal_core::combiner::CombinerConfig;
use auxcal_core::task::{ClassifierTrainConfig, CleanGenerator, NoiseGenerator, TaskSpec};
use auxcal_core::trainer::{EpsilonSchedule, Mode, TrainerConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HarnessMode {
    Nois,
    Init,
    Clso,
    Srpr,
    Gclb,
    D4am,
}

impl HarnessMode {
    pub const ALL: [HarnessMode; 6] = [
        HarnessMode::Nois,
        HarnessMode::Init,
        HarnessMode::Clso,
        HarnessMode::Srpr,
        HarnessMode::Gclb,
        HarnessMode::D4am,
    ];

    /// Fine-tuning mode for joint modes; `None` for NOIS/INIT which never
    /// run a fine-tuning trajectory.
    pub fn trainer_mode(&self) -> Option<Mode> {
        match self {
            HarnessMode::Nois | HarnessMode::Init => None,
            HarnessMode::Clso => Some(Mode::Clso),
            HarnessMode::Srpr => Some(Mode::Srpr),
            HarnessMode::Gclb => Some(Mode::Gclb),
            HarnessMode::D4am => Some(Mode::D4am),
        }
    }
}

impl fmt::Display for HarnessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HarnessMode::Nois => "NOIS",
            HarnessMode::Init => "INIT",
            HarnessMode::Clso => "CLSO",
            HarnessMode::Srpr => "SRPR",
            HarnessMode::Gclb => "GCLB",
            HarnessMode::D4am => "D4AM",
        };
        f.write_str(s)
    }
}

impl FromStr for HarnessMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NOIS" => Ok(HarnessMode::Nois),
            "INIT" => Ok(HarnessMode::Init),
            "CLSO" => Ok(HarnessMode::Clso),
            "SRPR" => Ok(HarnessMode::Srpr),
            "GCLB" => Ok(HarnessMode::Gclb),
            "D4AM" => Ok(HarnessMode::D4am),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LangevinSetting {
    /// Noise on in SRPR and D4AM, off in CLSO/GCLB/FIXED_WEIGHT.
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub steps: u64,
    pub epsilon: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub total_steps: u64,
    pub epsilon: f64,
    pub langevin: LangevinSetting,
    pub batch_size_cls: usize,
    pub batch_size_reg: usize,
    pub eval_every: u64,
    pub combiner: CombinerConfig,
    pub pretrain: PretrainConfig,
    pub enhancer_hidden: Vec<usize>,
    pub evaluator_count: usize,
    pub classifier: ClassifierTrainConfig,
    pub ablation_modes: Vec<HarnessMode>,
    pub grid_weights: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskSpec {
                feature_dim: 8,
                num_classes: 4,
                snr_range_db: (-4.0, 6.0),
                clean_generator: CleanGenerator::GaussianClasses,
                noise_generator: NoiseGenerator::Gaussian,
                train_size: 400,
                val_size: 300,
                test_size: 600,
                label_fraction: 1.0,
                seed: 0,
            },
            total_steps: 4000,
            epsilon: 1e-3,
            langevin: LangevinSetting::Auto,
            batch_size_cls: 8,
            batch_size_reg: 8,
            eval_every: 200,
            combiner: CombinerConfig::default(),
            pretrain: PretrainConfig { steps: 3000, epsilon: 1e-2, batch_size: 8 },
            enhancer_hidden: vec![16],
            evaluator_count: 4,
            classifier: ClassifierTrainConfig::default(),
            ablation_modes: HarnessMode::ALL.to_vec(),
            grid_weights: vec![0.0, 0.1, 1.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            seeds: Vec::new(),
            output_dir: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

fn cfg_err(key: &str, what: impl fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {what}"))
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| cfg_err(key, e))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| cfg_err(key, e)))
        .collect()
}

impl ExperimentConfig {
    /// Parse a config file, fill defaults, and validate.
    pub fn parse_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(path.display().to_string(), e))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, CliError> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("duplicate key {key:?}")));
            }
        }
        Self::from_entries(entries)
    }

    fn from_entries(mut entries: BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut cfg = ExperimentConfig::default();
        let mut take = |key: &str| entries.remove(key);

        macro_rules! scalar {
            ($key:expr, $slot:expr) => {
                if let Some(v) = take($key) {
                    $slot = parse_scalar($key, &v)?;
                }
            };
        }

        scalar!("task.feature_dim", cfg.task.feature_dim);
        scalar!("task.num_classes", cfg.task.num_classes);
        scalar!("task.snr_low_db", cfg.task.snr_range_db.0);
        scalar!("task.snr_high_db", cfg.task.snr_range_db.1);
        if let Some(v) = take("task.clean_generator") {
            cfg.task.clean_generator = match v.as_str() {
                "gaussian_classes" => CleanGenerator::GaussianClasses,
                "sinusoid_bank" => CleanGenerator::SinusoidBank,
                other => return Err(cfg_err("task.clean_generator", format!("unknown {other:?}"))),
            };
        }
        if let Some(v) = take("task.noise_generator") {
            cfg.task.noise_generator = match v.as_str() {
                "gaussian" => NoiseGenerator::Gaussian,
                "impulsive" => NoiseGenerator::Impulsive,
                "structured" => NoiseGenerator::Structured,
                other => return Err(cfg_err("task.noise_generator", format!("unknown {other:?}"))),
            };
        }
        scalar!("task.train_size", cfg.task.train_size);
        scalar!("task.val_size", cfg.task.val_size);
        scalar!("task.test_size", cfg.task.test_size);
        scalar!("task.label_fraction", cfg.task.label_fraction);
        scalar!("task.seed", cfg.task.seed);

        scalar!("trainer.total_steps", cfg.total_steps);
        scalar!("trainer.epsilon", cfg.epsilon);
        if let Some(v) = take("trainer.langevin") {
            cfg.langevin = match v.as_str() {
                "auto" => LangevinSetting::Auto,
                "on" => LangevinSetting::On,
                "off" => LangevinSetting::Off,
                other => return Err(cfg_err("trainer.langevin", format!("unknown {other:?}"))),
            };
        }
        scalar!("trainer.batch_size_cls", cfg.batch_size_cls);
        scalar!("trainer.batch_size_reg", cfg.batch_size_reg);
        scalar!("trainer.eval_every", cfg.eval_every);

        scalar!("combiner.beta", cfg.combiner.beta);
        scalar!("combiner.update_period", cfg.combiner.update_period);
        scalar!("combiner.clamp_lo", cfg.combiner.clamp_lo);
        scalar!("combiner.clamp_hi", cfg.combiner.clamp_hi);
        scalar!("combiner.alpha_srpr_init", cfg.combiner.alpha_srpr_init);
        scalar!("combiner.eps_guard", cfg.combiner.eps_guard);

        scalar!("pretrain.steps", cfg.pretrain.steps);
        scalar!("pretrain.epsilon", cfg.pretrain.epsilon);
        scalar!("pretrain.batch_size", cfg.pretrain.batch_size);

        if let Some(v) = take("enhancer.hidden_dims") {
            cfg.enhancer_hidden = parse_list("enhancer.hidden_dims", &v)?;
        }
        scalar!("evaluators.count", cfg.evaluator_count);
        scalar!("classifier.accuracy_floor", cfg.classifier.accuracy_floor);
        scalar!("classifier.max_steps", cfg.classifier.max_steps);

        if let Some(v) = take("modes") {
            cfg.ablation_modes = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<HarnessMode>().map_err(|e| cfg_err("modes", e)))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = take("grid_weights") {
            cfg.grid_weights = parse_list("grid_weights", &v)?;
        }
        if let Some(v) = take("seeds") {
            cfg.seeds = parse_list("seeds", &v)?;
        }
        if let Some(v) = take("output_dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        scalar!("jobs", cfg.jobs);

        if let Some((key, _)) = entries.into_iter().next() {
            return Err(CliError::Config(format!("unknown key {key:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.task.validate().map_err(CliError::Core)?;
        self.combiner.validate().map_err(CliError::Core)?;
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds: at least one seed required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::Config("seeds: duplicate seeds rejected".into()));
        }
        if self.ablation_modes.is_empty() && self.grid_weights.is_empty() {
            return Err(CliError::Config(
                "modes/grid_weights: need at least one mode or grid weight".into(),
            ));
        }
        if !(self.epsilon > 0.0) || !(self.pretrain.epsilon > 0.0) {
            return Err(CliError::Config("trainer.epsilon: must be positive".into()));
        }
        if self.total_steps == 0 || self.eval_every == 0 {
            return Err(CliError::Config(
                "trainer.total_steps/eval_every: must be >= 1".into(),
            ));
        }
        if self.batch_size_cls == 0 || self.batch_size_reg == 0 || self.pretrain.batch_size == 0 {
            return Err(CliError::Config("batch sizes must be >= 1".into()));
        }
        if self.grid_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(CliError::Config("grid_weights: weights must be >= 0".into()));
        }
        if self.jobs == 0 {
            return Err(CliError::Config("jobs: must be >= 1".into()));
        }
        Ok(())
    }

    /// Effective Langevin toggle for a fine-tuning mode.
    pub fn langevin_for(&self, mode: Mode) -> bool {
        match self.langevin {
            LangevinSetting::On => true,
            LangevinSetting::Off => false,
            LangevinSetting::Auto => matches!(mode, Mode::Srpr | Mode::D4am),
        }
    }

    /// Trainer configuration for one fine-tuning run.
    pub fn trainer_config(&self, mode: Mode, seed: u64) -> TrainerConfig {
        TrainerConfig {
            mode,
            total_steps: self.total_steps,
            epsilon: EpsilonSchedule::Constant(self.epsilon),
            langevin: self.langevin_for(mode),
            seed,
            batch_size_cls: self.batch_size_cls,
            batch_size_reg: self.batch_size_reg,
            combiner: self.combiner,
            eval_every: self.eval_every,
        }
    }
}
