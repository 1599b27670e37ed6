//! Evaluation metrics: MSE, Pearson (LCC), Spearman (SRCC), and Kendall
//! tau-b (KTAU), at utterance level and at system level (per-system means).
//!
//! Correlations that are undefined (zero variance, all pairs tied) are
//! surfaced as errors and serialized as JSON nulls with an explicit status,
//! never silently coerced to 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean, Accumulator};

/// Granularity a report was computed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Utterance,
    System,
}

/// Whether all four metrics were defined for the compared vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStatus {
    Ok,
    Undefined,
}

/// The four metrics over one (predictions, truth) pairing.
///
/// Serializes flat: `{"level","n","mse","lcc","srcc","ktau","status"}` with
/// `null` for any undefined correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub level: Level,
    pub n: usize,
    pub mse: f64,
    pub lcc: Option<f64>,
    pub srcc: Option<f64>,
    pub ktau: Option<f64>,
    pub status: ReportStatus,
}

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = Accumulator::new();
    for (p, t) in pred.iter().zip(truth) {
        let r = p - t;
        acc.add(r * r);
    }
    Ok(acc.value() / pred.len() as f64)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    if x.len() < 2 {
        return Err(Error::UndefinedMetric {
            metric: "lcc".into(),
            reason: format!("needs at least 2 points, got {}", x.len()),
        });
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = Accumulator::new();
    let mut sxx = Accumulator::new();
    let mut syy = Accumulator::new();
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    let (sxx, syy) = (sxx.value(), syy.value());
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "lcc".into(),
            reason: "zero variance".into(),
        });
    }
    Ok(sxy.value() / (sxx * syy).sqrt())
}

/// Pearson linear correlation coefficient.
pub fn lcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    pearson(pred, truth)
}

/// Fractional (average) ranks, 1-based; ties share the mean of their positions.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average 1-based rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson over fractional ranks.
pub fn srcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.len() < 2 {
        return Err(Error::UndefinedMetric {
            metric: "srcc".into(),
            reason: format!("needs at least 2 points, got {}", pred.len()),
        });
    }
    let rp = fractional_ranks(pred);
    let rt = fractional_ranks(truth);
    pearson(&rp, &rt).map_err(|e| match e {
        Error::UndefinedMetric { reason, .. } => Error::UndefinedMetric {
            metric: "srcc".into(),
            reason,
        },
        other => other,
    })
}

/// Kendall tau-b with tie corrections, by O(n^2) pair counting.
///
/// tau_b = (C - D) / sqrt((n0 - t_pred)(n0 - t_truth)) where n0 = n(n-1)/2
/// and t_* counts pairs tied in that input.
pub fn ktau(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let n = pred.len();
    if n < 2 {
        return Err(Error::UndefinedMetric {
            metric: "ktau".into(),
            reason: format!("needs at least 2 points, got {n}"),
        });
    }
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    let mut ties_pred = 0u64;
    let mut ties_truth = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dp = pred[i] - pred[j];
            let dt = truth[i] - truth[j];
            if dp == 0.0 {
                ties_pred += 1;
            }
            if dt == 0.0 {
                ties_truth += 1;
            }
            if dp != 0.0 && dt != 0.0 {
                if (dp > 0.0) == (dt > 0.0) {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    let denom = (n0 - ties_pred as f64) * (n0 - ties_truth as f64);
    if denom <= 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "ktau".into(),
            reason: "all pairs tied".into(),
        });
    }
    Ok((concordant as f64 - discordant as f64) / denom.sqrt())
}

/// Collapses predictions and truth to one mean pair per system.
///
/// Output order is sorted system id, so results are deterministic.
pub fn system_level(
    pred: &[f64],
    truth: &[f64],
    groups: &BTreeMap<String, Vec<usize>>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(pred, truth)?;
    let covered: usize = groups.values().map(Vec::len).sum();
    if covered != pred.len() {
        return Err(Error::LengthMismatch {
            left: covered,
            right: pred.len(),
        });
    }
    let mut pred_sys = Vec::with_capacity(groups.len());
    let mut truth_sys = Vec::with_capacity(groups.len());
    let mut seen = vec![false; pred.len()];
    for (sys, indices) in groups {
        if indices.is_empty() {
            return Err(Error::EmptyGroup { group: sys.clone() });
        }
        let mut ap = Accumulator::new();
        let mut at = Accumulator::new();
        for &i in indices {
            if i >= pred.len() || seen[i] {
                return Err(Error::InvalidConfig {
                    field: "groups".into(),
                    msg: format!("index {i} out of range or repeated"),
                });
            }
            seen[i] = true;
            ap.add(pred[i]);
            at.add(truth[i]);
        }
        pred_sys.push(ap.value() / indices.len() as f64);
        truth_sys.push(at.value() / indices.len() as f64);
    }
    Ok((pred_sys, truth_sys))
}

/// Computes all four metrics; undefined correlations become `None` and flip
/// the report status.
pub fn metric_report(pred: &[f64], truth: &[f64], level: Level) -> Result<MetricReport> {
    let mse = mse(pred, truth)?;
    let allow_undefined = |r: Result<f64>| -> Result<Option<f64>> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let lcc = allow_undefined(lcc(pred, truth))?;
    let srcc = allow_undefined(srcc(pred, truth))?;
    let ktau = allow_undefined(ktau(pred, truth))?;
    let status = if lcc.is_some() && srcc.is_some() && ktau.is_some() {
        ReportStatus::Ok
    } else {
        ReportStatus::Undefined
    };
    Ok(MetricReport {
        level,
        n: pred.len(),
        mse,
        lcc,
        srcc,
        ktau,
        status,
    })
}

/// Utterance-level and system-level reports for one prediction run.
pub fn both_level_reports(
    pred: &[f64],
    truth: &[f64],
    groups: &BTreeMap<String, Vec<usize>>,
) -> Result<(MetricReport, MetricReport)> {
    let utt = metric_report(pred, truth, Level::Utterance)?;
    let (ps, ts) = system_level(pred, truth, groups)?;
    let sys = metric_report(&ps, &ts, Level::System)?;
    Ok((utt, sys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[2.0, 2.0]).unwrap(), 4.0);
    }

    #[test]
    fn mse_shift_identity() {
        let pred = [1.25, 3.5, 2.0, 4.75, 0.5];
        let truth = [1.0, 3.0, 2.5, 5.0, 1.5];
        let shifted: Vec<f64> = truth.iter().map(|t| t + 100.0).collect();
        let base = mse(&pred, &truth).unwrap();
        let after = mse(&pred, &shifted).unwrap();
        let mean_resid = mean(&pred.iter().zip(&truth).map(|(p, t)| p - t).collect::<Vec<_>>());
        assert_close(after, base + 10000.0 - 200.0 * mean_resid, 1e-9);
    }

    #[test]
    fn lcc_examples() {
        assert_close(lcc(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0, 1e-15);
        assert_close(lcc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0, 1e-15);
        assert_close(lcc(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5, 1e-15);
    }

    #[test]
    fn lcc_zero_variance_is_undefined() {
        let err = lcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric { .. }));
    }

    #[test]
    fn srcc_examples() {
        assert_close(srcc(&[1.0, 5.0, 9.0], &[2.0, 3.0, 4.0]).unwrap(), 1.0, 1e-15);
        // rank vectors (1,2,3) vs (1,3,2): 1 - 6*2/24 = 0.5
        assert_close(srcc(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5, 1e-15);
    }

    #[test]
    fn srcc_invariant_under_monotone_maps() {
        let pred = [0.5, 2.0, 1.5, 3.0, 2.5, 2.0];
        let truth = [1.0, 4.0, 2.0, 5.0, 3.0, 4.0];
        let base = srcc(&pred, &truth).unwrap();
        let affine: Vec<f64> = truth.iter().map(|t| 3.0 * t + 11.0).collect();
        let cubic: Vec<f64> = truth.iter().map(|t| t * t * t).collect();
        let expo: Vec<f64> = truth.iter().map(|t| t.exp()).collect();
        assert_eq!(srcc(&pred, &affine).unwrap(), base);
        assert_eq!(srcc(&pred, &cubic).unwrap(), base);
        assert_eq!(srcc(&pred, &expo).unwrap(), base);
        // ktau shares the property.
        let kt = ktau(&pred, &truth).unwrap();
        assert_eq!(ktau(&pred, &cubic).unwrap(), kt);
        // mse does not.
        assert_ne!(mse(&pred, &truth).unwrap(), mse(&pred, &affine).unwrap());
    }

    #[test]
    fn ktau_examples() {
        assert_close(ktau(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), 1.0, 1e-15);
        assert_close(ktau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 1.0 / 3.0, 1e-15);
        assert_close(ktau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0, 1e-15);
    }

    #[test]
    fn ktau_all_ties_is_undefined() {
        let err = ktau(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric { .. }));
    }

    #[test]
    fn fractional_ranks_average_ties() {
        assert_eq!(fractional_ranks(&[10.0, 20.0, 20.0, 30.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn system_level_means() {
        let mut groups = BTreeMap::new();
        groups.insert("A".to_string(), vec![0, 1]);
        groups.insert("B".to_string(), vec![2]);
        let (ps, ts) = system_level(&[1.0, 3.0, 5.0], &[2.0, 2.0, 4.0], &groups).unwrap();
        assert_eq!(ps, vec![2.0, 5.0]);
        assert_eq!(ts, vec![2.0, 4.0]);
    }

    #[test]
    fn single_system_report_is_undefined_not_masked() {
        let mut groups = BTreeMap::new();
        groups.insert("only".to_string(), vec![0, 1, 2]);
        let (ps, ts) = system_level(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0], &groups).unwrap();
        assert_eq!(ps.len(), 1);
        let report = metric_report(&ps, &ts, Level::System).unwrap();
        assert_eq!(report.status, ReportStatus::Undefined);
        assert_eq!(report.srcc, None);
    }

    #[test]
    fn system_srcc_matches_direct_recomputation() {
        let mut groups = BTreeMap::new();
        groups.insert("a".to_string(), vec![0, 3]);
        groups.insert("b".to_string(), vec![1, 4]);
        groups.insert("c".to_string(), vec![2]);
        let pred = [1.0, 4.0, 2.0, 3.0, 2.0];
        let truth = [2.0, 5.0, 1.0, 4.0, 3.0];
        let (ps, ts) = system_level(&pred, &truth, &groups).unwrap();
        // Recompute the grouped means by hand and compare the correlations.
        let manual_p = [(1.0 + 3.0) / 2.0, (4.0 + 2.0) / 2.0, 2.0];
        let manual_t = [(2.0 + 4.0) / 2.0, (5.0 + 3.0) / 2.0, 1.0];
        assert_eq!(ps, manual_p);
        assert_eq!(ts, manual_t);
        assert_eq!(
            srcc(&ps, &ts).unwrap(),
            srcc(&manual_p, &manual_t).unwrap()
        );
    }

    #[test]
    fn report_serializes_null_for_undefined() {
        let report = metric_report(&[1.0], &[2.0], Level::System).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"srcc\":null"), "{json}");
        assert!(json.contains("\"status\":\"undefined\""), "{json}");
    }

    proptest! {
        #[test]
        fn correlation_symmetry(
            a in prop::collection::vec(0i32..20, 4..30),
            b in prop::collection::vec(0i32..20, 4..30),
        ) {
            let n = a.len().min(b.len());
            let x: Vec<f64> = a[..n].iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = b[..n].iter().map(|&v| v as f64).collect();
            if let (Ok(s1), Ok(s2)) = (srcc(&x, &y), srcc(&y, &x)) {
                prop_assert!((s1 - s2).abs() < 1e-12);
            }
            if let (Ok(k1), Ok(k2)) = (ktau(&x, &y), ktau(&y, &x)) {
                prop_assert!((k1 - k2).abs() < 1e-12);
            }
        }

        #[test]
        fn ktau_reversal_antisymmetry(perm in Just(()).prop_perturb(|_, mut rng| {
            use proptest::prelude::Rng as _;
            let n = 8;
            let mut v: Vec<f64> = (0..n).map(|i| i as f64).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                v.swap(i, j);
            }
            v
        })) {
            let base: Vec<f64> = (0..8).map(|i| i as f64).collect();
            let neg: Vec<f64> = perm.iter().map(|v| -v).collect();
            let k = ktau(&base, &perm).unwrap();
            let kr = ktau(&base, &neg).unwrap();
            prop_assert!((k + kr).abs() < 1e-12);
        }
    }
}
