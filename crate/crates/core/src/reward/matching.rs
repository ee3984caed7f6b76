use serde::Serialize;
use thiserror::Error;

use crate::geometry::{box_iou, box_l1, point_l1};
use crate::parser::GroundingEntry;

/// Larger entry lists are rejected; enumeration cost grows factorially.
pub const MAX_MATCH_ENTRIES: usize = 8;

// Totals closer than this count as ties.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("no predicted entries to match")]
    EmptyPrediction,
    #[error("no ground-truth targets to match")]
    EmptyGroundTruth,
    #[error("{count} entries exceed the matching limit of {MAX_MATCH_ENTRIES}")]
    TooManyEntries { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
    /// Box L1 plus point L1.
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
}

impl Matching {
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|p| (p.pred, p.gt)).collect()
    }

    pub fn total_iou(&self) -> f64 {
        self.pairs.iter().map(|p| p.iou).sum()
    }
}

/// One-to-one assignment of `min(|pred|, |gt|)` pairs maximising total box
/// IoU. Among optimal assignments the lexicographically smallest pair list,
/// ordered by `(pred, gt)`, wins.
pub fn match_entries(
    pred: &[GroundingEntry],
    gt: &[GroundingEntry],
) -> Result<Matching, MatchError> {
    if pred.is_empty() {
        return Err(MatchError::EmptyPrediction);
    }
    if gt.is_empty() {
        return Err(MatchError::EmptyGroundTruth);
    }
    let largest = pred.len().max(gt.len());
    if largest > MAX_MATCH_ENTRIES {
        return Err(MatchError::TooManyEntries { count: largest });
    }

    let iou: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| gt.iter().map(|g| box_iou(&p.bbox, &g.bbox)).collect())
        .collect();

    let mut search = Search {
        iou: &iou,
        gt_count: gt.len(),
        current: Vec::new(),
        best: Vec::new(),
        best_total: f64::NEG_INFINITY,
    };
    search.run(0, 0, pred.len().min(gt.len()), 0.0);

    let pairs = search
        .best
        .iter()
        .map(|&(p, g)| MatchedPair {
            pred: p,
            gt: g,
            iou: iou[p][g],
            l1: box_l1(&pred[p].bbox, &gt[g].bbox) + point_l1(&pred[p].point, &gt[g].point),
        })
        .collect();
    Ok(Matching { pairs })
}

struct Search<'a> {
    iou: &'a [Vec<f64>],
    gt_count: usize,
    current: Vec<(usize, usize)>,
    best: Vec<(usize, usize)>,
    best_total: f64,
}

impl Search<'_> {
    // Depth-first over pair lists in lexicographic order, so the first list
    // reaching the optimum is the tie-break winner.
    fn run(&mut self, next_pred: usize, used: u32, remaining: usize, total: f64) {
        if remaining == 0 {
            if total > self.best_total + TIE_TOLERANCE {
                self.best_total = total;
                self.best.clone_from(&self.current);
            }
            return;
        }
        let pred_count = self.iou.len();
        for p in next_pred..pred_count {
            if pred_count - p < remaining {
                break;
            }
            for g in 0..self.gt_count {
                if used & (1 << g) != 0 {
                    continue;
                }
                self.current.push((p, g));
                self.run(
                    p + 1,
                    used | (1 << g),
                    remaining - 1,
                    total + self.iou[p][g],
                );
                self.current.pop();
            }
        }
    }
}
