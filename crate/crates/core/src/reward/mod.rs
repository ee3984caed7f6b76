//! Composite affordance reward: format, perception and recognition.
//!
//! Components are scored independently and summed with per-component
//! weights. Disabling a component removes it from the total without touching
//! any other component.

mod lexicon;
mod matching;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::GroundingRecord;
use crate::parser::{parse_response, FailureStage, GroundingEntry, ParseReport};

pub use lexicon::{EmbeddingLexicon, LexiconError, UnknownToken};
pub use matching::{match_entries, MatchError, MatchedPair, Matching, MAX_MATCH_ENTRIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    FormatThink,
    FormatRethink,
    FormatAnswer,
    Iou,
    L1,
    BoxNum,
    Recognition,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::FormatThink,
        Component::FormatRethink,
        Component::FormatAnswer,
        Component::Iou,
        Component::L1,
        Component::BoxNum,
        Component::Recognition,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Component::FormatThink => "format_think",
            Component::FormatRethink => "format_rethink",
            Component::FormatAnswer => "format_answer",
            Component::Iou => "iou",
            Component::L1 => "l1",
            Component::BoxNum => "box_num",
            Component::Recognition => "recognition",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = RewardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Component::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| RewardError::UnknownComponent(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("unknown reward component {0:?}")]
    UnknownComponent(String),
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    UnknownToken(#[from] UnknownToken),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    pub iou_threshold: f64,
    /// Pixels; compared against box L1 plus point L1.
    pub l1_threshold: f64,
    pub similarity_threshold: f64,
    weights: [f64; 7],
    enabled: BTreeSet<Component>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            l1_threshold: 10.0,
            similarity_threshold: 0.8,
            weights: [1.0; 7],
            enabled: Component::ALL.into_iter().collect(),
        }
    }
}

impl RewardConfig {
    pub fn weight(&self, c: Component) -> f64 {
        self.weights[c.index()]
    }

    pub fn set_weight(&mut self, c: Component, w: f64) {
        self.weights[c.index()] = w;
    }

    pub fn is_enabled(&self, c: Component) -> bool {
        self.enabled.contains(&c)
    }

    pub fn enabled(&self) -> impl Iterator<Item = Component> + '_ {
        self.enabled.iter().copied()
    }

    pub fn set_enabled(&mut self, c: Component, on: bool) {
        if on {
            self.enabled.insert(c);
        } else {
            self.enabled.remove(&c);
        }
    }

    pub fn with_disabled(mut self, c: Component) -> Self {
        self.set_enabled(c, false);
        self
    }

    pub fn set_enabled_exactly(&mut self, components: impl IntoIterator<Item = Component>) {
        self.enabled = components.into_iter().collect();
    }

    /// Sum of enabled weights, the upper bound on `total`.
    pub fn max_total(&self) -> f64 {
        self.enabled().map(|c| self.weight(c)).sum()
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let bad = |m: String| Err(RewardError::InvalidConfig(m));
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return bad(format!(
                "iou_threshold {} outside (0, 1)",
                self.iou_threshold
            ));
        }
        if !(self.l1_threshold > 0.0 && self.l1_threshold.is_finite()) {
            return bad(format!(
                "l1_threshold {} must be positive",
                self.l1_threshold
            ));
        }
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold < 1.0) {
            return bad(format!(
                "similarity_threshold {} outside (0, 1)",
                self.similarity_threshold
            ));
        }
        for c in Component::ALL {
            let w = self.weight(c);
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("weight for {c} must be finite and >= 0, got {w}"));
            }
        }
        Ok(())
    }
}

/// Binary format scores in staged order: a block scores only if every check
/// before it passed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FormatScores {
    pub think: f64,
    pub rethink: f64,
    pub answer: f64,
}

pub fn format_reward(report: &ParseReport) -> FormatScores {
    let stage = report.failure_stage;
    let passed = |s: FailureStage| if stage > s { 1.0 } else { 0.0 };
    FormatScores {
        think: passed(FailureStage::MissingThink),
        rethink: passed(FailureStage::MissingRethink),
        answer: if report.format_ok { 1.0 } else { 0.0 },
    }
}

fn fraction(pairs: &[MatchedPair], pass: impl Fn(&MatchedPair) -> bool) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().filter(|p| pass(p)).count() as f64 / pairs.len() as f64
}

/// Fraction of matched pairs with IoU strictly above the threshold.
pub fn iou_reward(matching: &Matching, config: &RewardConfig) -> f64 {
    fraction(&matching.pairs, |p| p.iou > config.iou_threshold)
}

/// Fraction of matched pairs whose box L1 plus point L1 is strictly below
/// the threshold.
pub fn l1_reward(matching: &Matching, config: &RewardConfig) -> f64 {
    fraction(&matching.pairs, |p| p.l1 < config.l1_threshold)
}

pub fn box_num_reward(pred_count: usize, gt_count: usize) -> f64 {
    if pred_count == gt_count {
        1.0
    } else {
        0.0
    }
}

/// 1 when the labels' embedding cosine exceeds the threshold. Identical
/// labels score 1 without a lexicon lookup.
pub fn recognition_reward(
    pred_label: &str,
    gt_label: &str,
    lexicon: &EmbeddingLexicon,
    config: &RewardConfig,
) -> Result<f64, RewardError> {
    if pred_label == gt_label {
        return Ok(1.0);
    }
    let s = lexicon.similarity(pred_label, gt_label)?;
    Ok(if s > config.similarity_threshold {
        1.0
    } else {
        0.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub format_ok: bool,
    pub failure_stage: FailureStage,
    /// `None` marks a disabled component.
    pub format_think: Option<f64>,
    pub format_rethink: Option<f64>,
    pub format_answer: Option<f64>,
    pub iou: Option<f64>,
    pub l1: Option<f64>,
    pub box_num: Option<f64>,
    pub recognition: Option<f64>,
    pub total: f64,
    pub matching: Vec<(usize, usize)>,
    /// Component-level problems that were scored as 0.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl RewardBreakdown {
    pub fn get(&self, c: Component) -> Option<f64> {
        match c {
            Component::FormatThink => self.format_think,
            Component::FormatRethink => self.format_rethink,
            Component::FormatAnswer => self.format_answer,
            Component::Iou => self.iou,
            Component::L1 => self.l1,
            Component::BoxNum => self.box_num,
            Component::Recognition => self.recognition,
        }
    }

    fn slot(&mut self, c: Component) -> &mut Option<f64> {
        match c {
            Component::FormatThink => &mut self.format_think,
            Component::FormatRethink => &mut self.format_rethink,
            Component::FormatAnswer => &mut self.format_answer,
            Component::Iou => &mut self.iou,
            Component::L1 => &mut self.l1,
            Component::BoxNum => &mut self.box_num,
            Component::Recognition => &mut self.recognition,
        }
    }
}

/// Scores `text` against ground-truth entries. Total and deterministic.
pub fn score_response(
    text: &str,
    gt: &[GroundingEntry],
    lexicon: &EmbeddingLexicon,
    config: &RewardConfig,
) -> RewardBreakdown {
    let report = parse_response(text);
    score_report(&report, gt, lexicon, config)
}

pub fn score_report(
    report: &ParseReport,
    gt: &[GroundingEntry],
    lexicon: &EmbeddingLexicon,
    config: &RewardConfig,
) -> RewardBreakdown {
    let mut values = [0.0f64; 7];
    let mut flags = Vec::new();
    let mut matching = Matching::default();

    let fmt = format_reward(report);
    values[Component::FormatThink.index()] = fmt.think;
    values[Component::FormatRethink.index()] = fmt.rethink;
    values[Component::FormatAnswer.index()] = fmt.answer;

    if let Some(response) = &report.response {
        let pred = response.answer_entries();
        values[Component::BoxNum.index()] = box_num_reward(pred.len(), gt.len());
        match match_entries(pred, gt) {
            Ok(m) => {
                values[Component::Iou.index()] = iou_reward(&m, config);
                values[Component::L1.index()] = l1_reward(&m, config);
                if config.is_enabled(Component::Recognition) {
                    let mut hits = 0usize;
                    for pair in &m.pairs {
                        let p = pred[pair.pred].affordance();
                        let g = gt[pair.gt].affordance();
                        match recognition_reward(p, g, lexicon, config) {
                            Ok(r) => hits += r as usize,
                            Err(e) => flags.push(format!("recognition: {e}")),
                        }
                    }
                    values[Component::Recognition.index()] = hits as f64 / m.pairs.len() as f64;
                }
                matching = m;
            }
            Err(e) => flags.push(format!("matching: {e}")),
        }
    }

    let mut out = RewardBreakdown {
        format_ok: report.format_ok,
        failure_stage: report.failure_stage,
        format_think: None,
        format_rethink: None,
        format_answer: None,
        iou: None,
        l1: None,
        box_num: None,
        recognition: None,
        total: 0.0,
        matching: matching.index_pairs(),
        flags,
    };
    let mut total = 0.0;
    for c in Component::ALL {
        if config.is_enabled(c) {
            let v = values[c.index()];
            *out.slot(c) = Some(v);
            total += config.weight(c) * v;
        }
    }
    out.total = total;
    out
}

/// Scores `text` against a dataset record's targets.
pub fn total_reward(
    text: &str,
    record: &GroundingRecord,
    lexicon: &EmbeddingLexicon,
    config: &RewardConfig,
) -> RewardBreakdown {
    score_response(text, &record.ground_truth(), lexicon, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundingBox, Point};

    fn lexicon() -> EmbeddingLexicon {
        EmbeddingLexicon::parse("3\nopenable 1 0 0\ngraspable 0 1 0\nopen 0.9 0.435889894354 0\n")
            .unwrap()
    }

    fn entry(c: [u32; 4], p: [u32; 2], label: &str) -> GroundingEntry {
        GroundingEntry::new(
            BoundingBox::new(c[0], c[1], c[2], c[3]).unwrap(),
            Point::new(p[0], p[1]),
            label,
        )
        .unwrap()
    }

    fn text(entries: &[GroundingEntry]) -> String {
        let body: Vec<String> = entries
            .iter()
            .map(|e| {
                let c = e.bbox.coords();
                format!(
                    "{{\"bbox_2d\":[{},{},{},{}],\"point_2d\":[{},{}],\"affordance\":\"{}\"}}",
                    c[0],
                    c[1],
                    c[2],
                    c[3],
                    e.point.x,
                    e.point.y,
                    e.affordance()
                )
            })
            .collect();
        format!(
            "<think>t</think><rethink>r</rethink><answer>[{}]</answer>",
            body.join(",")
        )
    }

    #[test]
    fn format_scores_are_staged() {
        let full = parse_response(&text(&[entry([0, 0, 9, 9], [4, 4], "openable")]));
        assert_eq!(
            format_reward(&full),
            FormatScores {
                think: 1.0,
                rethink: 1.0,
                answer: 1.0
            }
        );
        let no_rethink = parse_response("<think>t</think><answer>[]</answer>");
        assert_eq!(
            format_reward(&no_rethink),
            FormatScores {
                think: 1.0,
                rethink: 0.0,
                answer: 0.0
            }
        );
        let empty = parse_response("");
        assert_eq!(
            format_reward(&empty),
            FormatScores {
                think: 0.0,
                rethink: 0.0,
                answer: 0.0
            }
        );
        let bad_payload = parse_response("<think>t</think><rethink>r</rethink><answer>[1</answer>");
        assert_eq!(
            format_reward(&bad_payload),
            FormatScores {
                think: 1.0,
                rethink: 1.0,
                answer: 0.0
            }
        );
    }

    #[test]
    fn fractional_iou_over_pairs() {
        let gt = [
            entry([0, 0, 9, 0], [5, 0], "openable"),
            entry([100, 0, 109, 0], [105, 0], "openable"),
        ];
        // IoUs 10/12 and 6/14
        let pred = [
            entry([0, 0, 11, 0], [5, 0], "openable"),
            entry([104, 0, 113, 0], [105, 0], "openable"),
        ];
        let m = match_entries(&pred, &gt).unwrap();
        let ious: Vec<f64> = m.pairs.iter().map(|p| p.iou).collect();
        assert!(ious[0] > 0.5 && ious[1] < 0.5);
        assert_eq!(iou_reward(&m, &RewardConfig::default()), 0.5);
    }

    #[test]
    fn l1_rule_sums_box_and_point() {
        let gt = [entry([10, 10, 20, 20], [15, 15], "openable")];
        // box L1 8, point L1 1
        let pass = [entry([12, 12, 22, 22], [16, 15], "openable")];
        let m = match_entries(&pass, &gt).unwrap();
        assert_eq!(m.pairs[0].l1, 9.0);
        assert_eq!(l1_reward(&m, &RewardConfig::default()), 1.0);
        let fail = [entry([13, 13, 23, 23], [15, 15], "openable")];
        let m = match_entries(&fail, &gt).unwrap();
        assert_eq!(m.pairs[0].l1, 12.0);
        assert_eq!(l1_reward(&m, &RewardConfig::default()), 0.0);
        let same = match_entries(&gt, &gt).unwrap();
        assert_eq!(l1_reward(&same, &RewardConfig::default()), 1.0);
    }

    #[test]
    fn box_num_rule() {
        assert_eq!(box_num_reward(2, 2), 1.0);
        assert_eq!(box_num_reward(1, 2), 0.0);
        assert_eq!(box_num_reward(3, 2), 0.0);
    }

    #[test]
    fn recognition_rule() {
        let cfg = RewardConfig::default();
        let empty = EmbeddingLexicon::new(1);
        assert_eq!(
            recognition_reward("openable", "openable", &empty, &cfg),
            Ok(1.0)
        );
        let lex = lexicon();
        assert_eq!(
            recognition_reward("openable", "graspable", &lex, &cfg),
            Ok(0.0)
        );
        // cos = 0.9 by construction
        assert!((lex.similarity("open", "openable").unwrap() - 0.9).abs() < 1e-9);
        assert_eq!(recognition_reward("open", "openable", &lex, &cfg), Ok(1.0));
        assert!(matches!(
            recognition_reward("pushable", "openable", &lex, &cfg),
            Err(RewardError::UnknownToken(_))
        ));
    }

    #[test]
    fn perfect_response_scores_seven() {
        let gt = [entry([0, 0, 9, 9], [4, 4], "openable")];
        let b = score_response(&text(&gt), &gt, &lexicon(), &RewardConfig::default());
        assert_eq!(b.total, 7.0);
        assert_eq!(b.matching, vec![(0, 0)]);
        assert!(b.flags.is_empty());
    }

    #[test]
    fn empty_string_scores_zero() {
        let gt = [entry([0, 0, 9, 9], [4, 4], "openable")];
        let b = score_response("", &gt, &lexicon(), &RewardConfig::default());
        assert_eq!(b.total, 0.0);
        assert_eq!(b.iou, Some(0.0));
        assert!(b.matching.is_empty());
    }

    #[test]
    fn format_only_scores_three() {
        let gt = [
            entry([0, 0, 9, 9], [4, 4], "openable"),
            entry([40, 40, 49, 49], [44, 44], "openable"),
        ];
        let pred = [entry([20, 20, 29, 29], [24, 24], "graspable")];
        let b = score_response(&text(&pred), &gt, &lexicon(), &RewardConfig::default());
        assert_eq!(b.total, 3.0);
        assert_eq!(
            [b.iou, b.l1, b.box_num, b.recognition],
            [Some(0.0), Some(0.0), Some(0.0), Some(0.0)]
        );
    }

    #[test]
    fn unknown_token_degrades_to_zero() {
        let gt = [entry([0, 0, 9, 9], [4, 4], "openable")];
        let pred = [entry([0, 0, 9, 9], [4, 4], "mystery")];
        let b = score_response(&text(&pred), &gt, &lexicon(), &RewardConfig::default());
        assert_eq!(b.recognition, Some(0.0));
        assert_eq!(b.total, 6.0);
        assert_eq!(b.flags.len(), 1);
    }

    #[test]
    fn disabling_components_is_isolated() {
        let gt = [
            entry([0, 0, 9, 9], [4, 4], "openable"),
            entry([30, 30, 39, 39], [34, 34], "graspable"),
        ];
        let pred = [entry([1, 0, 9, 9], [4, 4], "openable")];
        let lex = lexicon();
        let full = score_response(&text(&pred), &gt, &lex, &RewardConfig::default());
        for c in Component::ALL {
            let cfg = RewardConfig::default().with_disabled(c);
            let b = score_response(&text(&pred), &gt, &lex, &cfg);
            assert_eq!(b.get(c), None);
            for other in Component::ALL.into_iter().filter(|o| *o != c) {
                assert_eq!(b.get(other), full.get(other), "{c} changed {other}");
            }
            assert_eq!(b.total, full.total - full.get(c).unwrap());
        }
    }

    #[test]
    fn weights_scale_total() {
        let gt = [entry([0, 0, 9, 9], [4, 4], "openable")];
        let mut cfg = RewardConfig::default();
        cfg.set_weight(Component::Iou, 2.5);
        cfg.set_weight(Component::FormatThink, 0.0);
        let b = score_response(&text(&gt), &gt, &lexicon(), &cfg);
        assert_eq!(b.total, 7.5);
        assert!(b.total <= cfg.max_total());
    }

    #[test]
    fn config_validation() {
        assert!(RewardConfig::default().validate().is_ok());
        let c = RewardConfig {
            iou_threshold: 1.0,
            ..RewardConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = RewardConfig::default();
        c.set_weight(Component::L1, -1.0);
        assert!(c.validate().is_err());
        assert_eq!("box_num".parse::<Component>(), Ok(Component::BoxNum));
        assert!("boxnum".parse::<Component>().is_err());
    }
}
