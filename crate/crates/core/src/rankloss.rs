//! Rank-similarity training objectives.
//!
//! The family is built around the partial rank matrix of a score vector: the
//! antisymmetric matrix of all pairwise differences within a batch. Losses
//! compare the predicted and ground-truth matrices entry-wise under a p-norm,
//! optionally down-weighting pairs whose relative order is already correct
//! (`lambda_c`), extending the comparison set with a FIFO cache of previous
//! batches' outputs, mixing in a plain p-norm regression term, or hinging on
//! a margin (the margin baseline deliberately reproduces the blind spot where
//! small rank inversions cost nothing).
//!
//! Every loss returns both its value and the analytic gradient with respect
//! to the predictions, so the regressor can be trained without an autodiff
//! framework. Gradients use subgradient 0 at kinks and treat the pair weights
//! as locally constant.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which objective to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    L1,
    Prs,
    Eprs,
    Combined,
    UtmosMargin,
}

impl LossFamily {
    /// Families whose loss is built from pairwise rank comparisons.
    pub fn is_rank_family(self) -> bool {
        !matches!(self, LossFamily::L1)
    }

    /// Families that read the cross-batch comparison cache.
    pub fn uses_cache(self) -> bool {
        matches!(self, LossFamily::Eprs | LossFamily::Combined)
    }
}

/// Loss family selector plus every knob the family members share.
///
/// `cache_capacity = None` lets the trainer pick its default of four times
/// the batch size; `Some(0)` disables the cache outright.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub family: LossFamily,
    pub p: f64,
    pub lambda_c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub cache_capacity: Option<usize>,
    pub cache_scale: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            family: LossFamily::Prs,
            p: 1.0,
            lambda_c: 1.0,
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            cache_capacity: None,
            cache_scale: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidConfig {
                    field: field.into(),
                    msg: format!("must be a positive finite number, got {v}"),
                });
            }
            Ok(())
        };
        let nonneg = |field: &str, v: f64| -> Result<()> {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig {
                    field: field.into(),
                    msg: format!("must be a nonnegative finite number, got {v}"),
                });
            }
            Ok(())
        };
        positive("loss.p", self.p)?;
        positive("loss.cache_scale", self.cache_scale)?;
        nonneg("loss.alpha", self.alpha)?;
        nonneg("loss.beta", self.beta)?;
        nonneg("loss.gamma", self.gamma)?;
        if !self.lambda_c.is_finite() || !(0.0..=1.0).contains(&self.lambda_c) {
            return Err(Error::InvalidConfig {
                field: "loss.lambda_c".into(),
                msg: format!("must lie in [0, 1], got {}", self.lambda_c),
            });
        }
        Ok(())
    }

    /// Evaluates the configured family. `cache` is only consulted by the
    /// cache-extended families and never mutated.
    pub fn evaluate(
        &self,
        yhat: &[f64],
        y: &[f64],
        cache: Option<&ComparisonCache>,
    ) -> Result<LossResult> {
        static EMPTY: ComparisonCache = ComparisonCache::empty();
        let cache = cache.unwrap_or(&EMPTY);
        match self.family {
            LossFamily::L1 => l1_loss(yhat, y, self.p),
            LossFamily::Prs => prs_loss(yhat, y, self),
            LossFamily::Eprs => eprs_loss(yhat, y, cache, self),
            LossFamily::Combined => combined_loss(yhat, y, cache, self),
            LossFamily::UtmosMargin => utmos_margin_loss(yhat, y, self.gamma, self.p),
        }
    }
}

/// Antisymmetric matrix of pairwise score differences: `entry(i, j) = l_i - l_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRankMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl PartialRankMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Row-major view of all entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Builds the partial rank matrix of a score vector.
pub fn partial_rank_matrix(scores: &[f64]) -> Result<PartialRankMatrix> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "scores".into(),
        });
    }
    let n = scores.len();
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            entries.push(scores[i] - scores[j]);
        }
    }
    Ok(PartialRankMatrix { n, entries })
}

/// FIFO cache of `(prediction, target)` pairs from previous batches.
///
/// Cached predictions are stored as plain constants: no gradient ever flows
/// through them, and they are never refreshed when the model parameters move.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonCache {
    capacity: usize,
    entries: VecDeque<(f64, f64)>,
}

impl ComparisonCache {
    pub fn new(capacity: usize) -> Self {
        ComparisonCache {
            capacity,
            entries: VecDeque::new(),
        }
    }

    pub const fn empty() -> Self {
        ComparisonCache {
            capacity: 0,
            entries: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.entries.iter().copied()
    }

    /// Appends one batch of `(prediction, target)` pairs, evicting the oldest
    /// entries once capacity is exceeded.
    pub fn push(&mut self, yhat: &[f64], y: &[f64]) {
        assert_eq!(yhat.len(), y.len(), "cache push with mismatched lengths");
        if self.capacity == 0 {
            return;
        }
        for (&p, &t) in yhat.iter().zip(y) {
            self.entries.push_back((p, t));
            if self.entries.len() > self.capacity {
                self.entries.pop_front();
            }
        }
    }
}

/// Loss value plus the analytic gradient with respect to the predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn powp(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x
    } else if p == 2.0 {
        x * x
    } else {
        x.powf(p)
    }
}

/// d(value)/d(sum) factor for value = sum^(1/p), guarded at perfect prediction.
fn root_chain_coeff(value: f64, p: f64) -> f64 {
    if p == 1.0 {
        1.0
    } else {
        value.max(1e-12).powf(1.0 - p) / p
    }
}

fn check_pair_inputs(yhat: &[f64], y: &[f64]) -> Result<()> {
    if yhat.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: yhat.len(),
            right: y.len(),
        });
    }
    if yhat.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "loss inputs".into(),
        });
    }
    Ok(())
}

/// Accumulates the in-batch pair block shared by the plain and cache-extended
/// rank losses. Keeping one code path makes the two bitwise-identical when
/// the cache is empty.
fn accumulate_pair_block(
    yhat: &[f64],
    y: &[f64],
    lambda_c: f64,
    p: f64,
    sum: &mut f64,
    grad_sum: &mut [f64],
) {
    let n = yhat.len();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d_hat = yhat[i] - yhat[j];
            let d_true = y[i] - y[j];
            let diff = d_hat - d_true;
            let lam = if d_hat * d_true <= 0.0 { 1.0 } else { lambda_c };
            *sum += lam * powp(diff.abs(), p);
            if diff != 0.0 {
                let w = lam * p * powp(diff.abs(), p - 1.0) * sign(diff);
                grad_sum[i] += w;
                grad_sum[j] -= w;
            }
        }
    }
}

/// Rank-similarity loss over all in-batch pairs.
///
/// value = (sum_ij lambda_ij * |PR_ij(yhat) - PR_ij(y)|^p)^(1/p), with
/// lambda_ij = 1 when the predicted and true pairwise differences disagree in
/// sign (or either is zero) and `lambda_c` otherwise.
pub fn prs_loss(yhat: &[f64], y: &[f64], cfg: &LossConfig) -> Result<LossResult> {
    check_pair_inputs(yhat, y)?;
    if yhat.len() < 2 {
        return Err(Error::BatchTooSmall { n: yhat.len() });
    }
    let mut sum = 0.0;
    let mut grad = vec![0.0; yhat.len()];
    accumulate_pair_block(yhat, y, cfg.lambda_c, cfg.p, &mut sum, &mut grad);
    finish_root(sum, grad, cfg.p)
}

fn finish_root(sum: f64, mut grad_sum: Vec<f64>, p: f64) -> Result<LossResult> {
    let value = if p == 1.0 { sum } else { sum.powf(1.0 / p) };
    let coeff = root_chain_coeff(value, p);
    if coeff != 1.0 {
        for g in grad_sum.iter_mut() {
            *g *= coeff;
        }
    }
    Ok(LossResult {
        value,
        grad: grad_sum,
    })
}

/// Rank-similarity loss extended with comparisons against cached pairs.
///
/// Adds, inside the same outer p-th root, `cache_scale` times the pair
/// summands of the current batch rows against each cached column. Gradients
/// flow only through the in-batch predictions; the cache itself is not
/// mutated here.
pub fn eprs_loss(
    yhat: &[f64],
    y: &[f64],
    cache: &ComparisonCache,
    cfg: &LossConfig,
) -> Result<LossResult> {
    check_pair_inputs(yhat, y)?;
    if yhat.len() < 2 && cache.is_empty() {
        return Err(Error::BatchTooSmall { n: yhat.len() });
    }
    let mut sum = 0.0;
    let mut grad = vec![0.0; yhat.len()];
    accumulate_pair_block(yhat, y, cfg.lambda_c, cfg.p, &mut sum, &mut grad);
    for i in 0..yhat.len() {
        for (cached_pred, cached_target) in cache.entries() {
            let d_hat = yhat[i] - cached_pred;
            let d_true = y[i] - cached_target;
            let diff = d_hat - d_true;
            let lam = if d_hat * d_true <= 0.0 { 1.0 } else { cfg.lambda_c };
            sum += cfg.cache_scale * lam * powp(diff.abs(), cfg.p);
            if diff != 0.0 {
                grad[i] +=
                    cfg.cache_scale * lam * cfg.p * powp(diff.abs(), cfg.p - 1.0) * sign(diff);
            }
        }
    }
    finish_root(sum, grad, cfg.p)
}

/// Plain p-norm regression loss: `(sum_i |yhat_i - y_i|^p)^(1/p)`.
pub fn l1_loss(yhat: &[f64], y: &[f64], p: f64) -> Result<LossResult> {
    check_pair_inputs(yhat, y)?;
    if yhat.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sum = 0.0;
    let mut grad = vec![0.0; yhat.len()];
    for i in 0..yhat.len() {
        let r = yhat[i] - y[i];
        sum += powp(r.abs(), p);
        if r != 0.0 {
            grad[i] = p * powp(r.abs(), p - 1.0) * sign(r);
        }
    }
    finish_root(sum, grad, p)
}

/// Weighted sum of the cache-extended rank loss and the plain regression
/// loss: `alpha * eprs + beta * l1`.
pub fn combined_loss(
    yhat: &[f64],
    y: &[f64],
    cache: &ComparisonCache,
    cfg: &LossConfig,
) -> Result<LossResult> {
    let rank = eprs_loss(yhat, y, cache, cfg)?;
    let reg = l1_loss(yhat, y, cfg.p)?;
    let grad = rank
        .grad
        .iter()
        .zip(&reg.grad)
        .map(|(r, l)| cfg.alpha * r + cfg.beta * l)
        .collect();
    Ok(LossResult {
        value: cfg.alpha * rank.value + cfg.beta * reg.value,
        grad,
    })
}

/// Margin-hinged pairwise baseline:
/// `(sum_ij max(0, |PR_ij(yhat) - PR_ij(y)| - gamma)^p)^(1/p)`.
///
/// Pairs whose difference error stays inside the margin contribute nothing,
/// even when their rank order is inverted.
pub fn utmos_margin_loss(yhat: &[f64], y: &[f64], gamma: f64, p: f64) -> Result<LossResult> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidConfig {
            field: "loss.gamma".into(),
            msg: format!("must be a nonnegative finite number, got {gamma}"),
        });
    }
    check_pair_inputs(yhat, y)?;
    let n = yhat.len();
    if n < 2 {
        return Err(Error::BatchTooSmall { n });
    }
    let mut sum = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let diff = (yhat[i] - yhat[j]) - (y[i] - y[j]);
            let hinge = (diff.abs() - gamma).max(0.0);
            sum += powp(hinge, p);
            if diff.abs() > gamma {
                let w = p * powp(hinge, p - 1.0) * sign(diff);
                grad[i] += w;
                grad[j] -= w;
            }
        }
    }
    finish_root(sum, grad, p)
}

/// A loss family bound to fixed targets (and cache), leaving predictions as
/// the only free variable. This is the unit the finite-difference checker
/// works on.
pub struct BoundLoss<'a> {
    cfg: LossConfig,
    y: &'a [f64],
    cache: Option<&'a ComparisonCache>,
}

impl<'a> BoundLoss<'a> {
    pub fn new(cfg: LossConfig, y: &'a [f64], cache: Option<&'a ComparisonCache>) -> Self {
        BoundLoss { cfg, y, cache }
    }

    pub fn eval(&self, yhat: &[f64]) -> Result<LossResult> {
        self.cfg.evaluate(yhat, self.y, self.cache)
    }

    /// Distance from `yhat` to the nearest nondifferentiable point of the
    /// bound loss: absolute-value kinks, pair-weight sign boundaries, and
    /// margin boundaries.
    pub fn kink_distance(&self, yhat: &[f64]) -> f64 {
        let mut dist = f64::INFINITY;
        let n = yhat.len();
        match self.cfg.family {
            LossFamily::L1 => {
                for i in 0..n {
                    dist = dist.min((yhat[i] - self.y[i]).abs());
                }
            }
            LossFamily::UtmosMargin => {
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let diff = (yhat[i] - yhat[j]) - (self.y[i] - self.y[j]);
                        dist = dist.min((diff.abs() - self.cfg.gamma).abs());
                        if self.cfg.gamma == 0.0 {
                            dist = dist.min(diff.abs());
                        }
                    }
                }
            }
            LossFamily::Prs | LossFamily::Eprs | LossFamily::Combined => {
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let d_hat = yhat[i] - yhat[j];
                        let diff = d_hat - (self.y[i] - self.y[j]);
                        dist = dist.min(diff.abs()).min(d_hat.abs());
                    }
                }
                if self.cfg.family != LossFamily::Prs {
                    if let Some(cache) = self.cache {
                        for i in 0..n {
                            for (cp, ct) in cache.entries() {
                                let d_hat = yhat[i] - cp;
                                let diff = d_hat - (self.y[i] - ct);
                                dist = dist.min(diff.abs()).min(d_hat.abs());
                            }
                        }
                    }
                }
                if self.cfg.family == LossFamily::Combined {
                    for i in 0..n {
                        dist = dist.min((yhat[i] - self.y[i]).abs());
                    }
                }
            }
        }
        dist
    }
}

/// Compares the analytic gradient against central finite differences and
/// returns the maximum per-component relative error.
///
/// Errors if `yhat` sits within `10 * epsilon` of a kink, where the two
/// estimates legitimately disagree.
pub fn gradient_check(loss: &BoundLoss<'_>, yhat: &[f64], epsilon: f64) -> Result<f64> {
    let distance = loss.kink_distance(yhat);
    let required = 10.0 * epsilon;
    if distance < required {
        return Err(Error::KinkProximity { distance, required });
    }
    let analytic = loss.eval(yhat)?;
    let mut point = yhat.to_vec();
    let mut max_rel = 0.0f64;
    for k in 0..yhat.len() {
        let orig = point[k];
        point[k] = orig + epsilon;
        let plus = loss.eval(&point)?.value;
        point[k] = orig - epsilon;
        let minus = loss.eval(&point)?.value;
        point[k] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic.grad[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
