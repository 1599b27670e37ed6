//! Run configuration: a flat, human-readable key-value file with `[section]`
//! headers. Unknown keys are hard errors, and every run writes its fully
//! resolved configuration (defaults expanded) next to its outputs so the run
//! can be reproduced from the artifact alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use mosrank_core::model::OptimizerKind;
use mosrank_core::semisup::RangePolicy;
use mosrank_core::simulate::{DistortionKind, DistortionSpec, DistortionTarget};
use mosrank_core::{
    Activation, Architecture, BApMOSConfig, Error, LossConfig, LossFamily, Result, SimConfig,
    SplitSpec, TrainConfig,
};

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: "config".into(),
        msg: msg.into(),
    }
}

fn field_err(field: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: field.into(),
        msg: msg.into(),
    }
}

/// Parsed key-value sections. Keys are removed as they are consumed;
/// leftovers are reported as unknown-key errors by [`RawConfig::finish`].
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(format!("line {}: malformed section header", lineno + 1)))?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let section = sections.entry(current.clone()).or_default();
            if section.insert(key.clone(), value).is_some() {
                return Err(cfg_err(format!(
                    "line {}: duplicate key '{key}' in section [{current}]",
                    lineno + 1
                )));
            }
        }
        Ok(RawConfig { sections })
    }

    pub fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.sections.get_mut(section)?.remove(key)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    /// Errors on any key that no command consumed (typos never pass silently).
    pub fn finish(self) -> Result<()> {
        for (section, keys) in &self.sections {
            if let Some(key) = keys.keys().next() {
                let place = if section.is_empty() {
                    "at top level".to_string()
                } else {
                    format!("in section [{section}]")
                };
                return Err(cfg_err(format!("unknown key '{key}' {place}")));
            }
        }
        Ok(())
    }
}

struct Field<'a> {
    raw: &'a mut RawConfig,
}

impl<'a> Field<'a> {
    fn f64(&mut self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.raw.take(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| field_err(format!("{section}.{key}"), format!("invalid number '{v}'"))),
        }
    }

    fn usize(&mut self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.raw.take(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| field_err(format!("{section}.{key}"), format!("invalid integer '{v}'"))),
        }
    }

    fn u64_opt(&mut self, section: &str, key: &str) -> Result<Option<u64>> {
        match self.raw.take(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|_| field_err(format!("{section}.{key}"), format!("invalid integer '{v}'"))),
        }
    }

    fn bool(&mut self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.raw.take(section, key) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(field_err(
                    format!("{section}.{key}"),
                    format!("expected true or false, got '{v}'"),
                )),
            },
        }
    }

    fn string(&mut self, section: &str, key: &str, default: &str) -> String {
        self.raw
            .take(section, key)
            .unwrap_or_else(|| default.to_string())
    }

    fn path_opt(&mut self, section: &str, key: &str) -> Option<PathBuf> {
        self.raw.take(section, key).map(PathBuf::from)
    }
}

/// Where the input data comes from: one file plus a split, or explicit files.
#[derive(Debug, Clone)]
pub enum DataSource {
    SplitOne { dataset: PathBuf },
    Explicit {
        train: PathBuf,
        dev: PathBuf,
        test: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
pub struct ModelSection {
    pub architecture: Architecture,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
}

impl ModelSection {
    pub fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        if self.architecture == Architecture::Mlp {
            sizes.extend(&self.hidden_sizes);
        }
        sizes.push(1);
        sizes
    }
}

fn parse_model(f: &mut Field<'_>) -> Result<ModelSection> {
    let architecture = match f.string("model", "architecture", "linear").as_str() {
        "linear" => Architecture::Linear,
        "mlp" => Architecture::Mlp,
        other => {
            return Err(field_err(
                "model.architecture",
                format!("expected linear or mlp, got '{other}'"),
            ))
        }
    };
    let hidden_raw = f.string("model", "hidden_sizes", "32");
    let hidden_sizes: Vec<usize> = hidden_raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| field_err("model.hidden_sizes", format!("invalid size '{s}'")))
        })
        .collect::<Result<_>>()?;
    let activation = match f.string("model", "activation", "relu").as_str() {
        "relu" => Activation::Relu,
        "tanh" => Activation::Tanh,
        other => {
            return Err(field_err(
                "model.activation",
                format!("expected relu or tanh, got '{other}'"),
            ))
        }
    };
    Ok(ModelSection {
        architecture,
        hidden_sizes,
        activation,
    })
}

fn parse_loss(f: &mut Field<'_>) -> Result<LossConfig> {
    let family = match f.string("loss", "family", "prs").as_str() {
        "l1" => LossFamily::L1,
        "prs" => LossFamily::Prs,
        "eprs" => LossFamily::Eprs,
        "combined" => LossFamily::Combined,
        "utmos_margin" => LossFamily::UtmosMargin,
        other => {
            return Err(field_err(
                "loss.family",
                format!("expected l1|prs|eprs|combined|utmos_margin, got '{other}'"),
            ))
        }
    };
    let cache_capacity = match f.raw.take("loss", "cache_capacity") {
        None => None,
        Some(v) => Some(v.parse::<usize>().map_err(|_| {
            field_err("loss.cache_capacity", format!("invalid integer '{v}'"))
        })?),
    };
    let cfg = LossConfig {
        family,
        p: f.f64("loss", "p", 1.0)?,
        lambda_c: f.f64("loss", "lambda_c", 1.0)?,
        alpha: f.f64("loss", "alpha", 1.0)?,
        beta: f.f64("loss", "beta", 0.0)?,
        gamma: f.f64("loss", "gamma", 0.0)?,
        cache_capacity,
        cache_scale: f.f64("loss", "cache_scale", 0.1)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_train(f: &mut Field<'_>, seed: u64, loss: LossConfig) -> Result<TrainConfig> {
    let optimizer = match f.string("train", "optimizer", "adam").as_str() {
        "sgd" => OptimizerKind::Sgd,
        "adam" => OptimizerKind::Adam {
            beta1: f.f64("train", "adam_beta1", 0.9)?,
            beta2: f.f64("train", "adam_beta2", 0.999)?,
            epsilon: f.f64("train", "adam_epsilon", 1e-8)?,
        },
        other => {
            return Err(field_err(
                "train.optimizer",
                format!("expected sgd or adam, got '{other}'"),
            ))
        }
    };
    let cfg = TrainConfig {
        batch_size: f.usize("train", "batch_size", 32)?,
        epochs: f.usize("train", "epochs", 100)?,
        learning_rate: f.f64("train", "learning_rate", 1e-3)?,
        optimizer,
        seed,
        loss,
        patience: f.usize("train", "patience", 10)?,
        shuffle: f.bool("train", "shuffle", true)?,
        weight_decay: f.f64("train", "weight_decay", 0.0)?,
        dropout: f.f64("train", "dropout", 0.0)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_split(f: &mut Field<'_>, seed: u64) -> Result<SplitSpec> {
    let spec = SplitSpec {
        train_fraction: f.f64("split", "train_fraction", 0.7)?,
        dev_fraction: f.f64("split", "dev_fraction", 0.15)?,
        test_fraction: f.f64("split", "test_fraction", 0.15)?,
        seed,
        group_by_system: f.bool("split", "group_by_system", false)?,
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_sim(f: &mut Field<'_>, seed: u64) -> Result<SimConfig> {
    let d = SimConfig::default();
    let cfg = SimConfig {
        n_systems: f.usize("sim", "n_systems", d.n_systems)?,
        samples_per_system: f.usize("sim", "samples_per_system", d.samples_per_system)?,
        raters_per_sample: f.usize("sim", "raters_per_sample", d.raters_per_sample)?,
        feature_dim: f.usize("sim", "feature_dim", d.feature_dim)?,
        quality_noise_sd: f.f64("sim", "quality_noise_sd", d.quality_noise_sd)?,
        feature_noise_sd: f.f64("sim", "feature_noise_sd", d.feature_noise_sd)?,
        listener_bias_shift: f.f64("sim", "listener_bias_shift", d.listener_bias_shift)?,
        listener_bias_scale: f.f64("sim", "listener_bias_scale", d.listener_bias_scale)?,
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_bapmos(f: &mut Field<'_>, seed: u64) -> Result<BApMOSConfig> {
    let range_policy = match f.string("bapmos", "range_policy", "data_min_max").as_str() {
        "data_min_max" => RangePolicy::DataMinMax,
        "fixed" => RangePolicy::Fixed {
            lo: f.f64("bapmos", "range_lo", 1.0)?,
            hi: f.f64("bapmos", "range_hi", 5.0)?,
        },
        other => {
            return Err(field_err(
                "bapmos.range_policy",
                format!("expected data_min_max or fixed, got '{other}'"),
            ))
        }
    };
    let cfg = BApMOSConfig {
        bins: f.usize("bapmos", "bins", 5)?,
        range_policy,
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Resolved `train` command configuration.
#[derive(Debug, Clone)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub data: DataSource,
    pub split: SplitSpec,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub out_dir: Option<PathBuf>,
}

/// Resolved `semisup` command configuration.
#[derive(Debug, Clone)]
pub struct SemiSupRunConfig {
    pub seed: u64,
    pub labeled: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    pub dev: PathBuf,
    pub start_checkpoint: Option<PathBuf>,
    pub rounds_max: usize,
    pub selection_is_bapmos: bool,
    pub bapmos: BApMOSConfig,
    pub regenerate_on_dev_improvement: bool,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub out_dir: Option<PathBuf>,
}

/// What the `simulate` command should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Generate,
    Distortion,
    Comparison,
}

/// Resolved `simulate` command configuration.
#[derive(Debug, Clone)]
pub struct SimulateRunConfig {
    pub seed: u64,
    pub mode: SimMode,
    pub sim: SimConfig,
    pub distortion: Option<DistortionSpec>,
    pub families: Vec<LossFamily>,
    pub split: SplitSpec,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub out_dir: Option<PathBuf>,
}

fn global_seed(f: &mut Field<'_>, seed_override: Option<u64>) -> Result<u64> {
    let configured = f.u64_opt("", "seed")?.unwrap_or(0);
    Ok(seed_override.unwrap_or(configured))
}

impl TrainRunConfig {
    pub fn from_text(text: &str, seed_override: Option<u64>) -> Result<TrainRunConfig> {
        let mut raw = RawConfig::parse(text)?;
        let mut f = Field { raw: &mut raw };
        let seed = global_seed(&mut f, seed_override)?;

        let dataset = f.path_opt("data", "dataset");
        let train = f.path_opt("data", "train");
        let dev = f.path_opt("data", "dev");
        let test = f.path_opt("data", "test");
        let data = match (dataset, train, dev) {
            (Some(dataset), None, None) => DataSource::SplitOne { dataset },
            (None, Some(train), Some(dev)) => DataSource::Explicit { train, dev, test },
            _ => {
                return Err(field_err(
                    "data",
                    "set either data.dataset (with [split]) or data.train plus data.dev",
                ))
            }
        };

        let split = parse_split(&mut f, seed)?;
        let model = parse_model(&mut f)?;
        let loss = parse_loss(&mut f)?;
        let train_cfg = parse_train(&mut f, seed, loss)?;
        let out_dir = f.path_opt("output", "dir");
        raw.finish()?;
        Ok(TrainRunConfig {
            seed,
            data,
            split,
            model,
            train: train_cfg,
            out_dir,
        })
    }

    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s);
        let _ = writeln!(s, "[data]");
        match &self.data {
            DataSource::SplitOne { dataset } => {
                let _ = writeln!(s, "dataset = {}", dataset.display());
            }
            DataSource::Explicit { train, dev, test } => {
                let _ = writeln!(s, "train = {}", train.display());
                let _ = writeln!(s, "dev = {}", dev.display());
                if let Some(test) = test {
                    let _ = writeln!(s, "test = {}", test.display());
                }
            }
        }
        write_split(&mut s, &self.split);
        write_model(&mut s, &self.model);
        write_loss(&mut s, &self.train.loss);
        write_train(&mut s, &self.train);
        write_output(&mut s, &self.out_dir);
        s
    }
}

impl SemiSupRunConfig {
    pub fn from_text(text: &str, seed_override: Option<u64>) -> Result<SemiSupRunConfig> {
        let mut raw = RawConfig::parse(text)?;
        let mut f = Field { raw: &mut raw };
        let seed = global_seed(&mut f, seed_override)?;

        let labeled = f.path_opt("data", "labeled");
        let unlabeled = f.path_opt("data", "unlabeled");
        let dev = f
            .path_opt("data", "dev")
            .ok_or_else(|| field_err("data.dev", "a labeled development set is required"))?;
        let start_checkpoint = f.path_opt("data", "start_checkpoint");
        if labeled.is_none() && start_checkpoint.is_none() {
            return Err(field_err(
                "data.start_checkpoint",
                "required when no labeled training data is given",
            ));
        }

        let rounds_max = f.usize("semisup", "rounds_max", 4)?;
        if rounds_max == 0 {
            return Err(field_err("semisup.rounds_max", "must be at least 1"));
        }
        let selection_is_bapmos = match f.string("semisup", "selection", "all").as_str() {
            "all" => false,
            "bapmos" => true,
            other => {
                return Err(field_err(
                    "semisup.selection",
                    format!("expected all or bapmos, got '{other}'"),
                ))
            }
        };
        let regenerate = f.bool("semisup", "regenerate_on_dev_improvement", true)?;
        let bapmos = parse_bapmos(&mut f, seed)?;
        let model = parse_model(&mut f)?;
        let loss = parse_loss(&mut f)?;
        let train_cfg = parse_train(&mut f, seed, loss)?;
        let out_dir = f.path_opt("output", "dir");
        raw.finish()?;
        Ok(SemiSupRunConfig {
            seed,
            labeled,
            unlabeled,
            dev,
            start_checkpoint,
            rounds_max,
            selection_is_bapmos,
            bapmos,
            regenerate_on_dev_improvement: regenerate,
            model,
            train: train_cfg,
            out_dir,
        })
    }

    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s);
        let _ = writeln!(s, "[data]");
        if let Some(p) = &self.labeled {
            let _ = writeln!(s, "labeled = {}", p.display());
        }
        if let Some(p) = &self.unlabeled {
            let _ = writeln!(s, "unlabeled = {}", p.display());
        }
        let _ = writeln!(s, "dev = {}", self.dev.display());
        if let Some(p) = &self.start_checkpoint {
            let _ = writeln!(s, "start_checkpoint = {}", p.display());
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[semisup]");
        let _ = writeln!(s, "rounds_max = {}", self.rounds_max);
        let _ = writeln!(
            s,
            "selection = {}",
            if self.selection_is_bapmos { "bapmos" } else { "all" }
        );
        let _ = writeln!(
            s,
            "regenerate_on_dev_improvement = {}",
            self.regenerate_on_dev_improvement
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "[bapmos]");
        let _ = writeln!(s, "bins = {}", self.bapmos.bins);
        match self.bapmos.range_policy {
            RangePolicy::DataMinMax => {
                let _ = writeln!(s, "range_policy = data_min_max");
            }
            RangePolicy::Fixed { lo, hi } => {
                let _ = writeln!(s, "range_policy = fixed");
                let _ = writeln!(s, "range_lo = {lo}");
                let _ = writeln!(s, "range_hi = {hi}");
            }
        }
        write_model(&mut s, &self.model);
        write_loss(&mut s, &self.train.loss);
        write_train(&mut s, &self.train);
        write_output(&mut s, &self.out_dir);
        s
    }
}

impl SimulateRunConfig {
    pub fn from_text(text: &str, seed_override: Option<u64>) -> Result<SimulateRunConfig> {
        let mut raw = RawConfig::parse(text)?;
        let mut f = Field { raw: &mut raw };
        let seed = global_seed(&mut f, seed_override)?;

        let mode = match f.string("sim", "mode", "generate").as_str() {
            "generate" => SimMode::Generate,
            "distortion" => SimMode::Distortion,
            "comparison" => SimMode::Comparison,
            other => {
                return Err(field_err(
                    "sim.mode",
                    format!("expected generate|distortion|comparison, got '{other}'"),
                ))
            }
        };
        let sim = parse_sim(&mut f, seed)?;

        let distortion = if mode == SimMode::Distortion || raw.has_section("distortion") {
            let mut f = Field { raw: &mut raw };
            let kind = match f.string("distortion", "kind", "shift").as_str() {
                "shift" => DistortionKind::Shift {
                    c: f.f64("distortion", "c", 100.0)?,
                },
                "affine" => DistortionKind::Affine {
                    a: f.f64("distortion", "a", 1.0)?,
                    b: f.f64("distortion", "b", 0.0)?,
                },
                "monotone_cubic" => DistortionKind::MonotoneCubic,
                other => {
                    return Err(field_err(
                        "distortion.kind",
                        format!("expected shift|affine|monotone_cubic, got '{other}'"),
                    ))
                }
            };
            let applied_to = match f.string("distortion", "applied_to", "truth").as_str() {
                "truth" => DistortionTarget::Truth,
                "predictions" => DistortionTarget::Predictions,
                other => {
                    return Err(field_err(
                        "distortion.applied_to",
                        format!("expected truth or predictions, got '{other}'"),
                    ))
                }
            };
            Some(DistortionSpec::new(kind, applied_to)?)
        } else {
            None
        };

        let families_raw = {
            let mut f = Field { raw: &mut raw };
            f.string("comparison", "families", "l1,prs,combined,utmos_margin")
        };
        let families: Vec<LossFamily> = families_raw
            .split(',')
            .map(|name| match name.trim() {
                "l1" => Ok(LossFamily::L1),
                "prs" => Ok(LossFamily::Prs),
                "eprs" => Ok(LossFamily::Eprs),
                "combined" => Ok(LossFamily::Combined),
                "utmos_margin" => Ok(LossFamily::UtmosMargin),
                other => Err(field_err(
                    "comparison.families",
                    format!("unknown family '{other}'"),
                )),
            })
            .collect::<Result<_>>()?;

        let mut f = Field { raw: &mut raw };
        let split = parse_split(&mut f, seed)?;
        let model = parse_model(&mut f)?;
        let loss = parse_loss(&mut f)?;
        let train_cfg = parse_train(&mut f, seed, loss)?;
        let out_dir = f.path_opt("output", "dir");
        raw.finish()?;
        Ok(SimulateRunConfig {
            seed,
            mode,
            sim,
            distortion,
            families,
            split,
            model,
            train: train_cfg,
            out_dir,
        })
    }

    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s);
        let _ = writeln!(s, "[sim]");
        let mode = match self.mode {
            SimMode::Generate => "generate",
            SimMode::Distortion => "distortion",
            SimMode::Comparison => "comparison",
        };
        let _ = writeln!(s, "mode = {mode}");
        let _ = writeln!(s, "n_systems = {}", self.sim.n_systems);
        let _ = writeln!(s, "samples_per_system = {}", self.sim.samples_per_system);
        let _ = writeln!(s, "raters_per_sample = {}", self.sim.raters_per_sample);
        let _ = writeln!(s, "feature_dim = {}", self.sim.feature_dim);
        let _ = writeln!(s, "quality_noise_sd = {}", self.sim.quality_noise_sd);
        let _ = writeln!(s, "feature_noise_sd = {}", self.sim.feature_noise_sd);
        let _ = writeln!(s, "listener_bias_shift = {}", self.sim.listener_bias_shift);
        let _ = writeln!(s, "listener_bias_scale = {}", self.sim.listener_bias_scale);
        if let Some(spec) = &self.distortion {
            let _ = writeln!(s);
            let _ = writeln!(s, "[distortion]");
            match spec.kind {
                DistortionKind::Shift { c } => {
                    let _ = writeln!(s, "kind = shift");
                    let _ = writeln!(s, "c = {c}");
                }
                DistortionKind::Affine { a, b } => {
                    let _ = writeln!(s, "kind = affine");
                    let _ = writeln!(s, "a = {a}");
                    let _ = writeln!(s, "b = {b}");
                }
                DistortionKind::MonotoneCubic => {
                    let _ = writeln!(s, "kind = monotone_cubic");
                }
            }
            let target = match spec.applied_to {
                DistortionTarget::Truth => "truth",
                DistortionTarget::Predictions => "predictions",
            };
            let _ = writeln!(s, "applied_to = {target}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[comparison]");
        let names: Vec<&str> = self
            .families
            .iter()
            .map(|f| match f {
                LossFamily::L1 => "l1",
                LossFamily::Prs => "prs",
                LossFamily::Eprs => "eprs",
                LossFamily::Combined => "combined",
                LossFamily::UtmosMargin => "utmos_margin",
            })
            .collect();
        let _ = writeln!(s, "families = {}", names.join(","));
        write_split(&mut s, &self.split);
        write_model(&mut s, &self.model);
        write_loss(&mut s, &self.train.loss);
        write_train(&mut s, &self.train);
        write_output(&mut s, &self.out_dir);
        s
    }
}

fn write_split(s: &mut String, split: &SplitSpec) {
    let _ = writeln!(s);
    let _ = writeln!(s, "[split]");
    let _ = writeln!(s, "train_fraction = {}", split.train_fraction);
    let _ = writeln!(s, "dev_fraction = {}", split.dev_fraction);
    let _ = writeln!(s, "test_fraction = {}", split.test_fraction);
    let _ = writeln!(s, "group_by_system = {}", split.group_by_system);
}

fn write_model(s: &mut String, model: &ModelSection) {
    let _ = writeln!(s);
    let _ = writeln!(s, "[model]");
    let arch = match model.architecture {
        Architecture::Linear => "linear",
        Architecture::Mlp => "mlp",
    };
    let _ = writeln!(s, "architecture = {arch}");
    let sizes: Vec<String> = model.hidden_sizes.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(s, "hidden_sizes = {}", sizes.join(","));
    let act = match model.activation {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
    };
    let _ = writeln!(s, "activation = {act}");
}

fn write_loss(s: &mut String, loss: &LossConfig) {
    let _ = writeln!(s);
    let _ = writeln!(s, "[loss]");
    let family = match loss.family {
        LossFamily::L1 => "l1",
        LossFamily::Prs => "prs",
        LossFamily::Eprs => "eprs",
        LossFamily::Combined => "combined",
        LossFamily::UtmosMargin => "utmos_margin",
    };
    let _ = writeln!(s, "family = {family}");
    let _ = writeln!(s, "p = {}", loss.p);
    let _ = writeln!(s, "lambda_c = {}", loss.lambda_c);
    let _ = writeln!(s, "alpha = {}", loss.alpha);
    let _ = writeln!(s, "beta = {}", loss.beta);
    let _ = writeln!(s, "gamma = {}", loss.gamma);
    if let Some(c) = loss.cache_capacity {
        let _ = writeln!(s, "cache_capacity = {c}");
    }
    let _ = writeln!(s, "cache_scale = {}", loss.cache_scale);
}

fn write_train(s: &mut String, train: &TrainConfig) {
    let _ = writeln!(s);
    let _ = writeln!(s, "[train]");
    let _ = writeln!(s, "batch_size = {}", train.batch_size);
    let _ = writeln!(s, "epochs = {}", train.epochs);
    let _ = writeln!(s, "learning_rate = {}", train.learning_rate);
    match train.optimizer {
        OptimizerKind::Sgd => {
            let _ = writeln!(s, "optimizer = sgd");
        }
        OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            let _ = writeln!(s, "optimizer = adam");
            let _ = writeln!(s, "adam_beta1 = {beta1}");
            let _ = writeln!(s, "adam_beta2 = {beta2}");
            let _ = writeln!(s, "adam_epsilon = {epsilon}");
        }
    }
    let _ = writeln!(s, "patience = {}", train.patience);
    let _ = writeln!(s, "shuffle = {}", train.shuffle);
    let _ = writeln!(s, "weight_decay = {}", train.weight_decay);
    let _ = writeln!(s, "dropout = {}", train.dropout);
}

fn write_output(s: &mut String, out_dir: &Option<PathBuf>) {
    if let Some(dir) = out_dir {
        let _ = writeln!(s);
        let _ = writeln!(s, "[output]");
        let _ = writeln!(s, "dir = {}", dir.display());
    }
}
