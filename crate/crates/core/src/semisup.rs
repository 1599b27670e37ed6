//! Balanced pseudo-label selection and the iterative self-training driver.
//!
//! Self-training alternates between predicting pseudo-MOS values for an
//! unlabeled pool and finetuning on the merge of real labels and selected
//! pseudo labels. Selection can take everything or balance the pseudo-label
//! histogram: equal-width bins, the same count sampled from every non-empty
//! bin, so no score region dominates the next round. A round is accepted only
//! if dev SRCC improves; the first non-improving round ends the loop.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetRecord};
use crate::error::{Error, Result};
use crate::metrics::{both_level_reports, MetricReport};
use crate::model::{predict, train, Regressor, TrainConfig, TrainLog};
use crate::rng::{mix_seed, substream};

/// Unlabeled records with their current pseudo-MOS values.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelPool {
    pub records: Vec<DatasetRecord>,
    pub pseudo_mos: Vec<f64>,
    /// How many times the pseudo values have been regenerated.
    pub generation: u32,
}

impl PseudoLabelPool {
    /// Wraps unlabeled records with no pseudo values yet (generation 0).
    pub fn new(records: Vec<DatasetRecord>) -> Self {
        let n = records.len();
        PseudoLabelPool {
            records,
            pseudo_mos: vec![0.0; n],
            generation: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// How the histogram range for balanced selection is chosen.
///
/// Rank-trained predictors produce shift-invariant (off-scale) outputs, so
/// the default follows the data; a fixed range suits absolute-scale models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangePolicy {
    DataMinMax,
    Fixed { lo: f64, hi: f64 },
}

/// Balanced pseudo-MOS selection parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BApMOSConfig {
    pub bins: usize,
    pub range_policy: RangePolicy,
    pub seed: u64,
}

impl BApMOSConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::InvalidConfig {
                field: "bapmos.bins".into(),
                msg: "must be at least 1".into(),
            });
        }
        if let RangePolicy::Fixed { lo, hi } = self.range_policy {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig {
                    field: "bapmos.range".into(),
                    msg: format!("need lo < hi, got [{lo}, {hi}]"),
                });
            }
        }
        Ok(())
    }
}

/// Refreshes the pool's pseudo values with the model's current predictions.
pub fn generate_pseudo(model: &Regressor, pool: &PseudoLabelPool) -> Result<PseudoLabelPool> {
    let ds = Dataset {
        name: "pool".into(),
        records: pool.records.clone(),
    };
    let pseudo_mos = predict(model, &ds)?;
    Ok(PseudoLabelPool {
        records: pool.records.clone(),
        pseudo_mos,
        generation: pool.generation + 1,
    })
}

/// Selects a balanced subset of the pool by pseudo-MOS histogram.
///
/// Builds `bins` equal-width bins over the configured range, takes the
/// minimum count over non-empty bins, and samples that many indices
/// uniformly (seeded, without replacement) from every non-empty bin. The
/// result is sorted and has `(#non-empty bins) * min(count)` entries.
pub fn bapmos_select(pool: &PseudoLabelPool, cfg: &BApMOSConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let values = &pool.pseudo_mos;
    let (lo, hi) = match cfg.range_policy {
        RangePolicy::Fixed { lo, hi } => (lo, hi),
        RangePolicy::DataMinMax => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };

    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); cfg.bins];
    if hi <= lo {
        // Degenerate range: everything lands in one bin.
        bins[0].extend(0..values.len());
    } else {
        let width = (hi - lo) / cfg.bins as f64;
        for (idx, &v) in values.iter().enumerate() {
            let b = (((v - lo) / width).floor() as isize).clamp(0, cfg.bins as isize - 1) as usize;
            bins[b].push(idx);
        }
    }

    let min_count = bins
        .iter()
        .filter(|b| !b.is_empty())
        .map(Vec::len)
        .min()
        .expect("pool is nonempty");

    let mut rng = substream(cfg.seed, "bapmos");
    let mut selected = Vec::new();
    for bin in bins.iter().filter(|b| !b.is_empty()) {
        if bin.len() == min_count {
            selected.extend_from_slice(bin);
        } else {
            for pick in sample(&mut rng, bin.len(), min_count) {
                selected.push(bin[pick]);
            }
        }
    }
    selected.sort_unstable();
    Ok(selected)
}

/// Pseudo-label selection strategy for self-training rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    All,
    Bapmos(BApMOSConfig),
}

/// Everything a self-training run needs.
#[derive(Debug, Clone)]
pub struct SemiSupConfig {
    /// Labeled target-domain records; may be empty (then a starting model is
    /// required).
    pub labeled: Dataset,
    pub unlabeled: PseudoLabelPool,
    pub dev: Dataset,
    pub rounds_max: usize,
    pub selection: Selection,
    pub train: TrainConfig,
    /// When false, pseudo labels are generated exactly once up front and
    /// reused in every round.
    pub regenerate_on_dev_improvement: bool,
}

/// Snapshot of one pseudo-labeled record, as written to round artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSnapshotRow {
    pub id: String,
    pub pseudo_mos: f64,
    pub generation: u32,
}

/// What one self-training round did.
#[derive(Debug, Clone)]
pub struct RoundArtifact {
    pub round: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub selected_indices: Vec<usize>,
    pub pseudo_snapshot: Vec<PseudoSnapshotRow>,
    pub dev_utterance: MetricReport,
    pub dev_system: MetricReport,
    pub accepted: bool,
}

/// Result of a full self-training run.
#[derive(Debug, Clone)]
pub struct SemiSupOutcome {
    pub model: Regressor,
    pub round_logs: Vec<TrainLog>,
    pub rounds: Vec<RoundArtifact>,
    pub dev_utterance: MetricReport,
    pub dev_system: MetricReport,
}

fn dev_reports(model: &Regressor, dev: &Dataset) -> Result<(MetricReport, MetricReport)> {
    let preds = predict(model, dev)?;
    let truth = dev.labels()?;
    let groups = crate::data::group_by_system(dev);
    both_level_reports(&preds, &truth, &groups)
}

/// Runs zero-shot / few-shot / semi-supervised finetuning.
///
/// Round 0 trains `start` on the labeled set alone when it is nonempty,
/// otherwise it keeps `start` as-is (the zero-shot base). Every later round
/// predicts pseudo values with the best model so far (or reuses the first
/// generation), selects, merges with the labeled set, trains, and is accepted
/// only if dev SRCC improves; the first rejected round stops the loop.
/// Returns the best-dev-SRCC model across all rounds.
pub fn run_semisup(cfg: &SemiSupConfig, start: &Regressor) -> Result<SemiSupOutcome> {
    cfg.train.validate()?;
    if cfg.dev.is_empty() || cfg.dev.labeled_indices().len() != cfg.dev.len() {
        return Err(Error::InvalidConfig {
            field: "semisup.dev".into(),
            msg: "development set must be nonempty and fully labeled".into(),
        });
    }
    if let Selection::Bapmos(b) = &cfg.selection {
        b.validate()?;
    }

    let mut round_logs = Vec::new();
    let mut rounds = Vec::new();

    // Round 0: few-shot on the labeled set, or the starting model as-is.
    let mut best_model = if cfg.labeled.is_empty() {
        start.clone()
    } else {
        let (model, log) = train(start, &cfg.labeled, &cfg.dev, &cfg.train)?;
        round_logs.push(log);
        model
    };

    let (mut best_utt, mut best_sys) = dev_reports(&best_model, &cfg.dev)?;
    let mut best_srcc = best_utt.srcc.ok_or_else(|| Error::UndefinedMetric {
        metric: "srcc".into(),
        reason: "dev SRCC undefined at round 0".into(),
    })?;
    rounds.push(RoundArtifact {
        round: 0,
        n_labeled: cfg.labeled.len(),
        n_unlabeled: cfg.unlabeled.len(),
        selected_indices: Vec::new(),
        pseudo_snapshot: Vec::new(),
        dev_utterance: best_utt.clone(),
        dev_system: best_sys.clone(),
        accepted: true,
    });

    if cfg.unlabeled.is_empty() {
        return Ok(SemiSupOutcome {
            model: best_model,
            round_logs,
            rounds,
            dev_utterance: best_utt,
            dev_system: best_sys,
        });
    }

    let mut pool = generate_pseudo(&best_model, &cfg.unlabeled)?;

    for round in 1..=cfg.rounds_max {
        if cfg.regenerate_on_dev_improvement && pool.generation > 0 && round > 1 {
            pool = generate_pseudo(&best_model, &pool)?;
        }

        let selected = match &cfg.selection {
            Selection::All => (0..pool.len()).collect::<Vec<_>>(),
            Selection::Bapmos(b) => {
                // Vary the sampling stream per round; the base seed still
                // pins the whole run.
                let mut per_round = b.clone();
                per_round.seed = mix_seed(b.seed, "bapmos-round", round as u64);
                bapmos_select(&pool, &per_round)?
            }
        };
        if selected.is_empty() {
            return Err(Error::EmptySelection);
        }

        let snapshot: Vec<PseudoSnapshotRow> = selected
            .iter()
            .map(|&i| PseudoSnapshotRow {
                id: pool.records[i].id.clone(),
                pseudo_mos: pool.pseudo_mos[i],
                generation: pool.generation,
            })
            .collect();

        // Merge labeled records with the selected pseudo-labeled ones.
        let mut records: Vec<DatasetRecord> = cfg.labeled.records.clone();
        records.extend(selected.iter().map(|&i| DatasetRecord {
            mos: Some(pool.pseudo_mos[i]),
            ..pool.records[i].clone()
        }));
        let merged = Dataset::new(format!("round{round}"), records)?;

        let mut round_cfg = cfg.train.clone();
        round_cfg.seed = mix_seed(cfg.train.seed, "round", round as u64);
        let (candidate, log) = train(&best_model, &merged, &cfg.dev, &round_cfg)?;
        round_logs.push(log);

        let (utt, sys) = dev_reports(&candidate, &cfg.dev)?;
        let srcc = utt.srcc.ok_or_else(|| Error::UndefinedMetric {
            metric: "srcc".into(),
            reason: format!("dev SRCC undefined at round {round}"),
        })?;
        let accepted = srcc > best_srcc;

        rounds.push(RoundArtifact {
            round,
            n_labeled: cfg.labeled.len(),
            n_unlabeled: pool.len(),
            selected_indices: selected,
            pseudo_snapshot: snapshot,
            dev_utterance: utt.clone(),
            dev_system: sys.clone(),
            accepted,
        });

        if accepted {
            best_model = candidate;
            best_srcc = srcc;
            best_utt = utt;
            best_sys = sys;
        } else {
            break;
        }
    }

    Ok(SemiSupOutcome {
        model: best_model,
        round_logs,
        rounds,
        dev_utterance: best_utt,
        dev_system: best_sys,
    })
}
