//! Mask-level grounding metrics (gIoU, cIoU, precision at IoU thresholds)
//! and saliency-style map comparisons (KLD, SIM, NSS).
//!
//! Saliency conventions: both maps are normalized to unit mass with
//! [`SALIENCY_EPS`] added to the denominators. KLD is
//! `Σ G·ln(G / (P + ε))`, floored at 0 and capped at [`KLD_CAP`]; SIM is the
//! histogram intersection `Σ min(P, G)`; NSS is the mean standardized
//! prediction (population std) over ground-truth foreground pixels.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::MaskGrid;

pub const SALIENCY_EPS: f64 = 1e-12;
pub const KLD_CAP: f64 = 1e6;
/// 0.50, 0.55, ..., 0.95
pub const COCO_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("prediction is {pred_w}x{pred_h} but ground truth is {gt_w}x{gt_h}")]
    DimensionMismatch {
        pred_w: u32,
        pred_h: u32,
        gt_w: u32,
        gt_h: u32,
    },
    #[error("metric needs at least one sample")]
    EmptySet,
    #[error("prediction map sums to zero")]
    AllZeroPrediction,
    #[error("ground truth has no foreground pixel")]
    EmptyGroundTruth,
    #[error("{0} requires a binary mask")]
    NonBinary(&'static str),
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<CompensatedSum>().value()
}

#[derive(Debug, Clone)]
pub struct EvalPair {
    pub id: String,
    pub pred: MaskGrid,
    pub gt: MaskGrid,
}

fn check_dims(pred: &MaskGrid, gt: &MaskGrid) -> Result<(), MetricError> {
    if pred.same_shape(gt) {
        Ok(())
    } else {
        Err(MetricError::DimensionMismatch {
            pred_w: pred.width(),
            pred_h: pred.height(),
            gt_w: gt.width(),
            gt_h: gt.height(),
        })
    }
}

/// Intersection and union pixel counts of two binary masks.
pub fn overlap_counts(pred: &MaskGrid, gt: &MaskGrid) -> Result<(u64, u64), MetricError> {
    check_dims(pred, gt)?;
    if !pred.is_binary() || !gt.is_binary() {
        return Err(MetricError::NonBinary("mask IoU"));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        let (p, g) = (p > 0.0, g > 0.0);
        inter += u64::from(p && g);
        union += u64::from(p || g);
    }
    Ok((inter, union))
}

/// Pixelwise IoU. Two empty masks score 1; exactly one empty scores 0.
pub fn mask_iou(pred: &MaskGrid, gt: &MaskGrid) -> Result<f64, MetricError> {
    let (inter, union) = overlap_counts(pred, gt)?;
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Mean per-sample IoU.
pub fn compute_giou(pairs: &[EvalPair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let ious = pairs
        .iter()
        .map(|p| mask_iou(&p.pred, &p.gt))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(compensated_sum(ious) / pairs.len() as f64)
}

/// Pooled IoU: total intersection over total union. An all-empty set scores 1.
pub fn compute_ciou(pairs: &[EvalPair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for p in pairs {
        let (i, u) = overlap_counts(&p.pred, &p.gt)?;
        inter += i;
        union += u;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Fraction of pairs whose mask IoU exceeds each threshold.
pub fn compute_precision(
    pairs: &[EvalPair],
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let ious = pairs
        .iter()
        .map(|p| mask_iou(&p.pred, &p.gt))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(precision_from_ious(&ious, thresholds))
}

fn precision_from_ious(ious: &[f64], thresholds: &[f64]) -> Vec<(f64, f64)> {
    thresholds
        .iter()
        .map(|&t| {
            let hits = ious.iter().filter(|&&iou| iou > t).count();
            (t, hits as f64 / ious.len() as f64)
        })
        .collect()
}

/// Mean of precision over the ten thresholds 0.50..=0.95.
pub fn compute_p50_95(pairs: &[EvalPair]) -> Result<f64, MetricError> {
    let ps = compute_precision(pairs, &COCO_THRESHOLDS)?;
    Ok(compensated_sum(ps.iter().map(|(_, p)| *p)) / ps.len() as f64)
}

fn normalized(m: &MaskGrid) -> (Vec<f64>, f64) {
    let total = compensated_sum(m.values().iter().copied());
    let denom = total + SALIENCY_EPS;
    (m.values().iter().map(|v| v / denom).collect(), total)
}

pub fn compute_kld(pred: &MaskGrid, gt: &MaskGrid) -> Result<f64, MetricError> {
    check_dims(pred, gt)?;
    let (p, pred_total) = normalized(pred);
    if pred_total == 0.0 {
        return Err(MetricError::AllZeroPrediction);
    }
    let (g, _) = normalized(gt);
    let kld = compensated_sum(
        g.iter()
            .zip(&p)
            .filter(|(gi, _)| **gi > 0.0)
            .map(|(gi, pi)| gi * (gi / (pi + SALIENCY_EPS)).ln()),
    );
    Ok(kld.clamp(0.0, KLD_CAP))
}

pub fn compute_sim(pred: &MaskGrid, gt: &MaskGrid) -> Result<f64, MetricError> {
    check_dims(pred, gt)?;
    let (p, pred_total) = normalized(pred);
    if pred_total == 0.0 {
        return Err(MetricError::AllZeroPrediction);
    }
    let (g, _) = normalized(gt);
    Ok(compensated_sum(p.iter().zip(&g).map(|(a, b)| a.min(*b))).clamp(0.0, 1.0))
}

pub fn compute_nss(pred: &MaskGrid, gt: &MaskGrid) -> Result<f64, MetricError> {
    check_dims(pred, gt)?;
    let fg: Vec<usize> = gt
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, _)| i)
        .collect();
    if fg.is_empty() {
        return Err(MetricError::EmptyGroundTruth);
    }
    let v = pred.values();
    let n = v.len() as f64;
    let mean = compensated_sum(v.iter().copied()) / n;
    let var = compensated_sum(v.iter().map(|x| (x - mean) * (x - mean))) / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return Ok(0.0);
    }
    Ok(compensated_sum(fg.iter().map(|&i| (v[i] - mean) / std)) / fg.len() as f64)
}

/// Per-pair metric values, as written to the detail JSONL.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDetail {
    pub id: String,
    pub intersection: u64,
    pub union: u64,
    pub iou: f64,
    pub kld: f64,
    pub sim: f64,
    pub nss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub n: usize,
    pub giou: f64,
    pub ciou: f64,
    pub p50: f64,
    pub p50_95: f64,
    pub kld: f64,
    pub sim: f64,
    pub nss: f64,
}

impl EvalSummary {
    /// Flat `key=value` report, one metric per line.
    pub fn to_report(&self) -> String {
        format!(
            "n={}\ngiou={}\nciou={}\np50={}\np50_95={}\nkld={}\nsim={}\nnss={}\n",
            self.n, self.giou, self.ciou, self.p50, self.p50_95, self.kld, self.sim, self.nss
        )
    }
}

/// Scores one pair. IoU-family metrics use `iou_pred`; saliency metrics use
/// `saliency_pred`, which may be real-valued. An all-zero saliency
/// prediction scores the worst values (KLD at the cap, SIM 0).
pub fn evaluate_pair(
    id: &str,
    iou_pred: &MaskGrid,
    saliency_pred: &MaskGrid,
    gt: &MaskGrid,
) -> Result<PairDetail, MetricError> {
    let (intersection, union) = overlap_counts(iou_pred, gt)?;
    let iou = if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    };
    let kld = match compute_kld(saliency_pred, gt) {
        Err(MetricError::AllZeroPrediction) => KLD_CAP,
        other => other?,
    };
    let sim = match compute_sim(saliency_pred, gt) {
        Err(MetricError::AllZeroPrediction) => 0.0,
        other => other?,
    };
    let nss = compute_nss(saliency_pred, gt)?;
    Ok(PairDetail {
        id: id.to_string(),
        intersection,
        union,
        iou,
        kld,
        sim,
        nss,
    })
}

pub fn summarize(details: &[PairDetail]) -> Result<EvalSummary, MetricError> {
    if details.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let n = details.len() as f64;
    let mean = |f: fn(&PairDetail) -> f64| compensated_sum(details.iter().map(f)) / n;
    let inter: u64 = details.iter().map(|d| d.intersection).sum();
    let union: u64 = details.iter().map(|d| d.union).sum();
    let ious: Vec<f64> = details.iter().map(|d| d.iou).collect();
    let p = precision_from_ious(&ious, &COCO_THRESHOLDS);
    Ok(EvalSummary {
        n: details.len(),
        giou: mean(|d| d.iou),
        ciou: if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        },
        p50: p[0].1,
        p50_95: compensated_sum(p.iter().map(|(_, v)| *v)) / p.len() as f64,
        kld: mean(|d| d.kld),
        sim: mean(|d| d.sim),
        nss: mean(|d| d.nss),
    })
}

/// Full summary over binary pairs, using each prediction for both metric
/// families.
pub fn evaluate(pairs: &[EvalPair]) -> Result<(EvalSummary, Vec<PairDetail>), MetricError> {
    let details = pairs
        .iter()
        .map(|p| evaluate_pair(&p.id, &p.pred, &p.pred, &p.gt))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((summarize(&details)?, details))
}
