//! Detection and agreement statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::raster::BBox;
use crate::report::PlateAnalysis;

/// Intersection over union of two boxes; 0 when either is empty.
pub fn iou(a: BBox, b: BBox) -> f64 {
    let iw = a.right().min(b.right()).saturating_sub(a.x.max(b.x));
    let ih = a.bottom().min(b.bottom()).saturating_sub(a.y.max(b.y));
    let inter = (iw * ih) as f64;
    let union = (a.area() + b.area()) as f64 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub gt: usize,
    pub pred: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
    pub threshold: f64,
}

impl MatchReport {
    pub fn true_positives(&self) -> usize {
        self.pairs.len()
    }

    pub fn precision(&self) -> f64 {
        ratio(self.pairs.len(), self.pairs.len() + self.unmatched_pred.len())
    }

    pub fn recall(&self) -> f64 {
        ratio(self.pairs.len(), self.pairs.len() + self.unmatched_gt.len())
    }
}

/// `num / den` with 0/0 read as a perfect score.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Greedy one-to-one matching by descending IoU (ties by gt, then pred index);
/// pairs below `threshold` are never matched.
pub fn match_detections(gt: &[BBox], pred: &[BBox], threshold: f64) -> MatchReport {
    let mut cands: Vec<MatchPair> = Vec::new();
    for (g, &gb) in gt.iter().enumerate() {
        for (p, &pb) in pred.iter().enumerate() {
            let v = iou(gb, pb);
            if v > 0.0 && v >= threshold {
                cands.push(MatchPair { gt: g, pred: p, iou: v });
            }
        }
    }
    cands.sort_by(|a, b| b.iou.total_cmp(&a.iou).then(a.gt.cmp(&b.gt)).then(a.pred.cmp(&b.pred)));
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for c in cands {
        if !gt_used[c.gt] && !pred_used[c.pred] {
            gt_used[c.gt] = true;
            pred_used[c.pred] = true;
            pairs.push(c);
        }
    }
    MatchReport {
        pairs,
        unmatched_gt: (0..gt.len()).filter(|&i| !gt_used[i]).collect(),
        unmatched_pred: (0..pred.len()).filter(|&i| !pred_used[i]).collect(),
        threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall of one detection set at each IoU threshold.
pub fn pr_sweep(gt: &[BBox], pred: &[BBox], thresholds: &[f64]) -> Vec<PrPoint> {
    pr_sweep_many(&[(gt.to_vec(), pred.to_vec())], thresholds)
}

/// Like [`pr_sweep`], pooling true/false positives over several images
/// (matching never crosses image boundaries).
pub fn pr_sweep_many(images: &[(Vec<BBox>, Vec<BBox>)], thresholds: &[f64]) -> Vec<PrPoint> {
    thresholds
        .iter()
        .map(|&t| {
            let (mut tp, mut n_pred, mut n_gt) = (0, 0, 0);
            for (g, p) in images {
                tp += match_detections(g, p, t).true_positives();
                n_pred += p.len();
                n_gt += g.len();
            }
            PrPoint {
                threshold: t,
                precision: ratio(tp, n_pred),
                recall: ratio(tp, n_gt),
            }
        })
        .collect()
}

/// Bland–Altman agreement of `pred` against `gt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub bias: f64,
    pub sd: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub n: usize,
}

/// Differences are `pred − gt`; `sd` uses the n − 1 denominator and the
/// limits are `bias ± 1.96·sd`.
pub fn bland_altman(gt: &[f64], pred: &[f64]) -> Result<AgreementStats> {
    check_paired(gt, pred)?;
    let n = gt.len();
    let d: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| p - g).collect();
    let bias = d.iter().sum::<f64>() / n as f64;
    let sd = (d.iter().map(|v| (v - bias).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    Ok(AgreementStats {
        bias,
        sd,
        loa_low: bias - 1.96 * sd,
        loa_high: bias + 1.96 * sd,
        n,
    })
}

fn check_paired(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Input(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 pairs, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y)?;
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("a sample has zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `|gt − pred| / (gt + pred)`, undefined when both are zero.
pub fn symmetric_error(gt: f64, pred: f64) -> Result<f64> {
    if gt + pred <= 0.0 {
        return Err(Error::Domain("symmetric error needs gt + pred > 0".into()));
    }
    Ok((gt - pred).abs() / (gt + pred))
}

/// Share of truly empty wells (`gt == 0`) with at least one prediction;
/// `None` when there are no empty wells.
pub fn empty_well_fp_rate(wells: &[(usize, usize)]) -> Option<f64> {
    let empty: Vec<usize> = wells.iter().filter(|w| w.0 == 0).map(|w| w.1).collect();
    if empty.is_empty() {
        return None;
    }
    Some(empty.iter().filter(|&&p| p >= 1).count() as f64 / empty.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_two_sided: f64,
}

/// Midranks of the pooled sample, plus the tie term `Σ(t³ − t)`.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// Mann–Whitney U with a two-sided p from the normal approximation
/// (tie-corrected variance, continuity correction 0.5).
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("both samples must be non-empty".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let ra: f64 = ranks[..a.len()].iter().sum();
    let u = ra - na * (na + 1.0) / 2.0;
    let n = na + nb;
    let mean = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitney { u, p_two_sided: 1.0 });
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * std.sf(z)).min(1.0);
    Ok(MannWhitney { u, p_two_sided: p })
}

/// Inclusive arithmetic range `start, start + step, …, stop`, rounded to
/// suppress accumulated float error.
pub fn threshold_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || !(0.0..=1.0).contains(&start) || !(start..=1.0).contains(&stop) {
        return Err(Error::Input(format!("bad threshold range {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// Comparison of a predicted plate against its annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateEvaluation {
    /// Plaque boxes in full-image coordinates, pooled over wells present in both.
    pub plaque_pr: Vec<PrPoint>,
    pub wells_compared: usize,
    /// Annotated wells the prediction reports missing.
    pub wells_missed: usize,
    pub count_agreement: Option<AgreementStats>,
    pub count_pearson: Option<f64>,
    /// Mean over wells where at least one side is non-zero.
    pub mean_symmetric_error: Option<f64>,
    pub empty_well_fp_rate: Option<f64>,
}

/// Matches wells by `(row, col)` and scores plaque boxes and counts.
/// Statistics that are undefined for the data at hand come back as `None`.
pub fn evaluate_plate(gt: &PlateAnalysis, pred: &PlateAnalysis, thresholds: &[f64]) -> PlateEvaluation {
    let mut images = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut missed = 0;
    for g in gt.wells.iter().filter(|w| !w.missing) {
        match pred.well(g.row, g.col).filter(|p| !p.missing) {
            Some(p) => {
                images.push((g.plaque_boxes_full(), p.plaque_boxes_full()));
                pairs.push((g.count, p.count));
            }
            None => missed += 1,
        }
    }
    let gc: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
    let pc: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
    let sym: Vec<f64> = pairs
        .iter()
        .filter_map(|&(g, p)| symmetric_error(g as f64, p as f64).ok())
        .collect();
    PlateEvaluation {
        plaque_pr: pr_sweep_many(&images, thresholds),
        wells_compared: pairs.len(),
        wells_missed: missed,
        count_agreement: bland_altman(&gc, &pc).ok(),
        count_pearson: pearson(&gc, &pc).ok(),
        mean_symmetric_error: (!sym.is_empty()).then(|| sym.iter().sum::<f64>() / sym.len() as f64),
        empty_well_fp_rate: empty_well_fp_rate(&pairs),
    }
}
