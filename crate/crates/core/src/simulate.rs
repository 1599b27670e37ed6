//! Synthetic listening-test generator and the experiments built on it.
//!
//! The generator draws a true quality per system, jitters it per sample,
//! embeds it into feature vectors, and produces MOS labels by averaging
//! integer ratings from simulated listeners with biased judgments. The
//! distortion experiment then makes the metric-reliability argument
//! executable: strictly monotone label distortions leave rank correlations
//! untouched while absolute-value metrics swing, which is exactly why MSE and
//! LCC mislead when comparing rank-trained predictors. The loss-comparison
//! experiment trains one model per objective on identical splits and reports
//! both metric levels plus per-epoch dev-SRCC curves.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{split, Dataset, DatasetRecord, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{both_level_reports, metric_report, Level, MetricReport};
use crate::model::{init_regressor, predict, train, Activation, Architecture, Regressor, TrainConfig};
use crate::rankloss::LossConfig;
use crate::rng::substream;

/// Synthetic listening-test shape and noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_systems: usize,
    pub samples_per_system: usize,
    /// Listeners averaged per sample; labels are multiples of 1/R.
    pub raters_per_sample: usize,
    pub feature_dim: usize,
    /// Per-sample latent quality jitter around the system quality.
    pub quality_noise_sd: f64,
    /// Noise on the informative feature and scale of the distractor dims.
    pub feature_noise_sd: f64,
    /// Mean of the per-rating listener bias.
    pub listener_bias_shift: f64,
    /// Spread of the per-rating listener bias.
    pub listener_bias_scale: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_systems: 40,
            samples_per_system: 20,
            raters_per_sample: 8,
            feature_dim: 16,
            quality_noise_sd: 0.3,
            feature_noise_sd: 0.5,
            listener_bias_shift: 0.0,
            listener_bias_scale: 0.5,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: usize| -> Result<()> {
            if v == 0 {
                return Err(Error::InvalidConfig {
                    field: field.into(),
                    msg: "must be at least 1".into(),
                });
            }
            Ok(())
        };
        positive("sim.n_systems", self.n_systems)?;
        positive("sim.samples_per_system", self.samples_per_system)?;
        positive("sim.raters_per_sample", self.raters_per_sample)?;
        positive("sim.feature_dim", self.feature_dim)?;
        for (field, v) in [
            ("sim.quality_noise_sd", self.quality_noise_sd),
            ("sim.feature_noise_sd", self.feature_noise_sd),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig {
                    field: field.into(),
                    msg: format!("must be nonnegative, got {v}"),
                });
            }
        }
        if !self.listener_bias_shift.is_finite() || !self.listener_bias_scale.is_finite()
            || self.listener_bias_scale < 0.0
        {
            return Err(Error::InvalidConfig {
                field: "sim.listener_bias".into(),
                msg: "shift must be finite, scale nonnegative".into(),
            });
        }
        Ok(())
    }
}

/// Generated dataset plus the hidden per-system true qualities.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub dataset: Dataset,
    pub system_quality: Vec<f64>,
}

/// Rating model: round half away from zero, clip to the 1..5 scale.
fn clip_round(x: f64) -> f64 {
    x.round().clamp(1.0, 5.0)
}

fn draw_noise(rng: &mut rand_chacha::ChaCha12Rng, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).expect("valid sd").sample(rng)
    } else {
        0.0
    }
}

/// Generates a dataset and exposes the hidden system qualities.
pub fn simulate_full(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, "sim");
    let mut records = Vec::with_capacity(cfg.n_systems * cfg.samples_per_system);
    let mut system_quality = Vec::with_capacity(cfg.n_systems);

    for s in 0..cfg.n_systems {
        let q: f64 = rng.random_range(1.0..5.0);
        system_quality.push(q);
        for k in 0..cfg.samples_per_system {
            let latent = q + draw_noise(&mut rng, cfg.quality_noise_sd);

            // Feature 0 is an affine embedding of the latent quality; the
            // remaining dimensions are pure distractor noise.
            let mut features = Vec::with_capacity(cfg.feature_dim);
            features.push(0.5 * latent - 1.5 + draw_noise(&mut rng, cfg.feature_noise_sd));
            for _ in 1..cfg.feature_dim {
                features.push(draw_noise(&mut rng, cfg.feature_noise_sd));
            }

            let mut rating_total = 0.0;
            for _ in 0..cfg.raters_per_sample {
                let bias =
                    cfg.listener_bias_shift + draw_noise(&mut rng, cfg.listener_bias_scale);
                rating_total += clip_round(latent + bias);
            }
            let mos = rating_total / cfg.raters_per_sample as f64;

            records.push(DatasetRecord {
                id: format!("sys{s:03}_utt{k:04}"),
                system_id: format!("sys{s:03}"),
                features,
                mos: Some(mos),
            });
        }
    }

    Ok(SimOutput {
        dataset: Dataset::new(format!("sim{}", cfg.seed), records)?,
        system_quality,
    })
}

/// Generates a synthetic listening-test dataset. Deterministic in the seed.
pub fn simulate_dataset(cfg: &SimConfig) -> Result<Dataset> {
    simulate_full(cfg).map(|out| out.dataset)
}

/// Strictly increasing label transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    Shift { c: f64 },
    Affine { a: f64, b: f64 },
    /// x + x^3: strictly increasing and decidedly non-affine.
    MonotoneCubic,
}

/// Which side of the comparison gets distorted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistortionTarget {
    Truth,
    Predictions,
}

/// A validated strictly increasing distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub applied_to: DistortionTarget,
}

impl DistortionSpec {
    /// Rejects non-monotone maps (affine with a <= 0) at construction.
    pub fn new(kind: DistortionKind, applied_to: DistortionTarget) -> Result<DistortionSpec> {
        match kind {
            DistortionKind::Affine { a, .. } if !(a.is_finite() && a > 0.0) => {
                Err(Error::InvalidConfig {
                    field: "distortion.a".into(),
                    msg: format!("affine slope must be positive, got {a}"),
                })
            }
            DistortionKind::Shift { c } if !c.is_finite() => Err(Error::InvalidConfig {
                field: "distortion.c".into(),
                msg: "shift must be finite".into(),
            }),
            _ => Ok(DistortionSpec { kind, applied_to }),
        }
    }

    fn apply_one(&self, x: f64) -> f64 {
        match self.kind {
            DistortionKind::Shift { c } => x + c,
            DistortionKind::Affine { a, b } => a * x + b,
            DistortionKind::MonotoneCubic => x + x * x * x,
        }
    }
}

/// Element-wise application of a distortion.
pub fn distort(labels: &[f64], spec: &DistortionSpec) -> Vec<f64> {
    labels.iter().map(|&x| spec.apply_one(x)).collect()
}

/// Utterance-level metrics before and after distorting one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionExperiment {
    pub spec: DistortionSpec,
    pub before: MetricReport,
    pub after: MetricReport,
}

impl DistortionExperiment {
    pub fn mse_delta(&self) -> f64 {
        self.after.mse - self.before.mse
    }

    pub fn srcc_delta(&self) -> Option<f64> {
        Some(self.after.srcc? - self.before.srcc?)
    }

    pub fn ktau_delta(&self) -> Option<f64> {
        Some(self.after.ktau? - self.before.ktau?)
    }

    pub fn lcc_delta(&self) -> Option<f64> {
        Some(self.after.lcc? - self.before.lcc?)
    }
}

/// Evaluates a model on `test` against the original and the distorted labels
/// (or with distorted predictions, when the spec targets that side).
pub fn run_distortion_experiment(
    model: &Regressor,
    test: &Dataset,
    spec: &DistortionSpec,
) -> Result<DistortionExperiment> {
    let preds = predict(model, test)?;
    let truth = test.labels()?;
    let before = metric_report(&preds, &truth, Level::Utterance)?;
    let after = match spec.applied_to {
        DistortionTarget::Truth => {
            let distorted = distort(&truth, spec);
            metric_report(&preds, &distorted, Level::Utterance)?
        }
        DistortionTarget::Predictions => {
            let distorted = distort(&preds, spec);
            metric_report(&distorted, &truth, Level::Utterance)?
        }
    };
    Ok(DistortionExperiment {
        spec: *spec,
        before,
        after,
    })
}

/// One row of the loss-comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub family: String,
    pub report: MetricReport,
}

/// One point of a per-epoch dev-SRCC curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub family: String,
    pub dev_srcc: f64,
}

/// Test metrics per loss family (both levels) plus dev-SRCC training curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub curves: Vec<CurvePoint>,
}

impl ComparisonTable {
    /// CSV with one row per loss family per level.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["family", "level", "n", "mse", "lcc", "srcc", "ktau"])?;
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for row in &self.rows {
            let level = match row.report.level {
                Level::Utterance => "utterance",
                Level::System => "system",
            };
            w.write_record([
                row.family.clone(),
                level.to_string(),
                row.report.n.to_string(),
                format!("{:.6}", row.report.mse),
                fmt(row.report.lcc),
                fmt(row.report.srcc),
                fmt(row.report.ktau),
            ])?;
        }
        w.flush()
    }

    /// CSV of per-epoch dev SRCC, ready for external plotting.
    pub fn write_curves_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "family", "dev_srcc"])?;
        for p in &self.curves {
            w.write_record([
                p.epoch.to_string(),
                p.family.clone(),
                format!("{:.6}", p.dev_srcc),
            ])?;
        }
        w.flush()
    }

    pub fn metrics_for(&self, family: &str, level: Level) -> Option<&MetricReport> {
        self.rows
            .iter()
            .find(|r| r.family == family && r.report.level == level)
            .map(|r| &r.report)
    }
}

fn family_label(cfg: &LossConfig) -> String {
    match cfg.family {
        crate::rankloss::LossFamily::L1 => "l1",
        crate::rankloss::LossFamily::Prs => "prs",
        crate::rankloss::LossFamily::Eprs => "eprs",
        crate::rankloss::LossFamily::Combined => "combined",
        crate::rankloss::LossFamily::UtmosMargin => "utmos_margin",
    }
    .to_string()
}

/// Trains one model per loss configuration on identical data, splits, and
/// initial parameters, then reports test metrics at both levels and the dev
/// SRCC trajectory of every arm.
pub fn run_loss_comparison(
    sim: &SimConfig,
    arms: &[LossConfig],
    train_cfg: &TrainConfig,
    architecture: Architecture,
    layer_sizes: &[usize],
    activation: Activation,
) -> Result<ComparisonTable> {
    if arms.is_empty() {
        return Err(Error::InvalidConfig {
            field: "comparison.families".into(),
            msg: "need at least one loss family".into(),
        });
    }
    let ds = simulate_dataset(sim)?;
    let spec = SplitSpec::new(0.7, 0.15, 0.15, sim.seed);
    let (train_ds, dev_ds, test_ds) = split(&ds, &spec)?;
    let init = init_regressor(architecture, layer_sizes, activation, train_cfg.seed)?;

    let test_truth = test_ds.labels()?;
    let test_groups = crate::data::group_by_system(&test_ds);

    // Disambiguate repeated families in the label.
    let mut labels: Vec<String> = arms.iter().map(family_label).collect();
    for i in 0..labels.len() {
        let dup = labels[..i].iter().filter(|l| **l == labels[i]).count();
        if dup > 0 {
            labels[i] = format!("{}_{}", labels[i], dup + 1);
        }
    }

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (loss, label) in arms.iter().zip(&labels) {
        let mut cfg = train_cfg.clone();
        cfg.loss = loss.clone();
        let (model, log) = train(&init, &train_ds, &dev_ds, &cfg)?;
        let preds = predict(&model, &test_ds)?;
        let (utt, sys) = both_level_reports(&preds, &test_truth, &test_groups)?;
        rows.push(ComparisonRow {
            family: label.clone(),
            report: utt,
        });
        rows.push(ComparisonRow {
            family: label.clone(),
            report: sys,
        });
        for e in &log.epochs {
            if let Some(srcc) = e.dev_utterance.srcc {
                curves.push(CurvePoint {
                    epoch: e.epoch,
                    family: label.clone(),
                    dev_srcc: srcc,
                });
            }
        }
    }

    Ok(ComparisonTable { rows, curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::save_jsonl;
    use crate::metrics::srcc;
    use crate::rankloss::LossFamily;

    #[test]
    fn labels_are_multiples_of_inverse_rater_count() {
        let cfg = SimConfig {
            n_systems: 5,
            samples_per_system: 6,
            raters_per_sample: 7,
            feature_dim: 3,
            seed: 2,
            ..Default::default()
        };
        let ds = simulate_dataset(&cfg).unwrap();
        for rec in &ds.records {
            let m = rec.mos.unwrap();
            assert!((1.0..=5.0).contains(&m));
            let scaled = m * 7.0;
            assert!((scaled - scaled.round()).abs() < 1e-9, "{m}");
        }
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let cfg = SimConfig {
            n_systems: 4,
            samples_per_system: 5,
            seed: 11,
            ..Default::default()
        };
        let a = simulate_dataset(&cfg).unwrap();
        let b = simulate_dataset(&cfg).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        save_jsonl(&a, &mut ba).unwrap();
        save_jsonl(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn noiseless_feature_zero_tracks_labels() {
        let cfg = SimConfig {
            n_systems: 12,
            samples_per_system: 8,
            raters_per_sample: 200,
            feature_dim: 4,
            quality_noise_sd: 0.0,
            feature_noise_sd: 0.0,
            listener_bias_shift: 0.0,
            listener_bias_scale: 0.6,
            seed: 3,
        };
        let ds = simulate_dataset(&cfg).unwrap();
        let f0: Vec<f64> = ds.records.iter().map(|r| r.features[0]).collect();
        let labels = ds.labels().unwrap();
        assert!(srcc(&f0, &labels).unwrap() > 0.99);
    }

    #[test]
    fn system_means_follow_true_quality_order() {
        // Zero strict inversions at R=50 and 50 samples per system.
        for seed in [1u64, 2, 3] {
            let cfg = SimConfig {
                n_systems: 8,
                samples_per_system: 50,
                raters_per_sample: 50,
                feature_dim: 2,
                quality_noise_sd: 0.15,
                feature_noise_sd: 0.2,
                listener_bias_shift: 0.0,
                listener_bias_scale: 0.4,
                seed,
            };
            let out = simulate_full(&cfg).unwrap();
            let groups = crate::data::group_by_system(&out.dataset);
            let labels = out.dataset.labels().unwrap();
            let mut means = Vec::new();
            for (sys, idx) in &groups {
                let m: f64 = idx.iter().map(|&i| labels[i]).sum::<f64>() / idx.len() as f64;
                let s: usize = sys.trim_start_matches("sys").parse().unwrap();
                means.push((out.system_quality[s], m));
            }
            means.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let inversions = means
                .windows(2)
                .filter(|w| w[1].1 < w[0].1)
                .count();
            assert_eq!(inversions, 0, "seed {seed}: {means:?}");
        }
    }

    #[test]
    fn distort_examples() {
        let shift = DistortionSpec::new(
            DistortionKind::Shift { c: 100.0 },
            DistortionTarget::Truth,
        )
        .unwrap();
        assert_eq!(distort(&[1.0, 2.0, 3.0], &shift), vec![101.0, 102.0, 103.0]);

        let identity = DistortionSpec::new(
            DistortionKind::Affine { a: 1.0, b: 0.0 },
            DistortionTarget::Truth,
        )
        .unwrap();
        assert_eq!(distort(&[1.5, 2.5], &identity), vec![1.5, 2.5]);

        let cubic = DistortionSpec::new(DistortionKind::MonotoneCubic, DistortionTarget::Truth)
            .unwrap();
        let xs = [0.25, 1.0, 3.5, 2.0, 4.75];
        let ys = distort(&xs, &cubic);
        assert_eq!(
            crate::metrics::fractional_ranks(&xs),
            crate::metrics::fractional_ranks(&ys)
        );
    }

    #[test]
    fn non_monotone_affine_rejected() {
        assert!(DistortionSpec::new(
            DistortionKind::Affine { a: 0.0, b: 1.0 },
            DistortionTarget::Truth
        )
        .is_err());
        assert!(DistortionSpec::new(
            DistortionKind::Affine { a: -2.0, b: 1.0 },
            DistortionTarget::Truth
        )
        .is_err());
    }

    #[test]
    fn distortion_experiment_identities() {
        let cfg = SimConfig {
            n_systems: 10,
            samples_per_system: 10,
            raters_per_sample: 8,
            feature_dim: 3,
            seed: 21,
            ..Default::default()
        };
        let ds = simulate_dataset(&cfg).unwrap();
        let model =
            init_regressor(Architecture::Linear, &[3, 1], Activation::Relu, 5).unwrap();

        let shift = DistortionSpec::new(
            DistortionKind::Shift { c: 100.0 },
            DistortionTarget::Truth,
        )
        .unwrap();
        let exp = run_distortion_experiment(&model, &ds, &shift).unwrap();
        assert_eq!(exp.srcc_delta(), Some(0.0));
        assert_eq!(exp.ktau_delta(), Some(0.0));
        let preds = predict(&model, &ds).unwrap();
        let truth = ds.labels().unwrap();
        let mean_resid: f64 =
            preds.iter().zip(&truth).map(|(p, t)| p - t).sum::<f64>() / preds.len() as f64;
        let expect = 10000.0 - 200.0 * mean_resid;
        assert!((exp.mse_delta() - expect).abs() < 1e-9);

        let affine = DistortionSpec::new(
            DistortionKind::Affine { a: 2.0, b: -1.0 },
            DistortionTarget::Truth,
        )
        .unwrap();
        let exp = run_distortion_experiment(&model, &ds, &affine).unwrap();
        assert_eq!(exp.srcc_delta(), Some(0.0));
        assert_eq!(exp.ktau_delta(), Some(0.0));
        assert!(exp.lcc_delta().unwrap().abs() < 1e-12);

        let cubic =
            DistortionSpec::new(DistortionKind::MonotoneCubic, DistortionTarget::Truth).unwrap();
        let exp = run_distortion_experiment(&model, &ds, &cubic).unwrap();
        assert_eq!(exp.srcc_delta(), Some(0.0));
        assert_eq!(exp.ktau_delta(), Some(0.0));
        assert!(exp.lcc_delta().unwrap().abs() > 1e-6);
    }

    #[test]
    fn loss_comparison_table_shape() {
        let sim = SimConfig {
            n_systems: 6,
            samples_per_system: 10,
            raters_per_sample: 8,
            feature_dim: 4,
            seed: 33,
            ..Default::default()
        };
        let train_cfg = TrainConfig {
            batch_size: 8,
            epochs: 3,
            patience: 3,
            seed: 1,
            ..Default::default()
        };
        let arms = vec![
            LossConfig {
                family: LossFamily::L1,
                ..Default::default()
            },
            LossConfig {
                family: LossFamily::Prs,
                ..Default::default()
            },
        ];
        let table = run_loss_comparison(
            &sim,
            &arms,
            &train_cfg,
            Architecture::Linear,
            &[4, 1],
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(table.rows.len(), 4);
        assert!(table.metrics_for("l1", Level::Utterance).is_some());
        assert!(table.metrics_for("prs", Level::System).is_some());
        assert!(!table.curves.is_empty());

        let mut csv_rows = Vec::new();
        table.write_csv(&mut csv_rows).unwrap();
        let text = String::from_utf8(csv_rows).unwrap();
        assert_eq!(text.lines().count(), 5);
    }
}
