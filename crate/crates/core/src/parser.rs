//! Parser for tagged chain-of-thought responses.
//!
//! A well-formed response is exactly one `<think>` block, then one
//! `<rethink>` block, then one `<answer>` block, separated by whitespace only.
//! The answer body is a JSON array of grounding objects:
//!
//! ```text
//! <think>...</think><rethink>...</rethink><answer>[{"bbox_2d":[x1,y1,x2,y2],"point_2d":[x,y],"affordance":"label"}]</answer>
//! ```
//!
//! See `docs/response-format.md` for the full grammar.

use std::fmt;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{BoundingBox, Point};

const TAGS: [&str; 3] = ["think", "rethink", "answer"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseError {
    #[error("affordance label {0:?} must be non-empty lowercase letters or underscores")]
    InvalidLabel(String),
    #[error("{field} text must be non-empty and free of block tags")]
    InvalidText { field: &'static str },
    #[error("a response needs at least one grounding entry")]
    NoEntries,
}

/// One grounded answer: box, point and predicted affordance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroundingEntry {
    pub bbox: BoundingBox,
    pub point: Point,
    affordance: String,
}

impl GroundingEntry {
    pub fn new(
        bbox: BoundingBox,
        point: Point,
        affordance: impl Into<String>,
    ) -> Result<Self, ResponseError> {
        let affordance = affordance.into();
        if !is_valid_label(&affordance) {
            return Err(ResponseError::InvalidLabel(affordance));
        }
        Ok(Self {
            bbox,
            point,
            affordance,
        })
    }

    pub fn affordance(&self) -> &str {
        &self.affordance
    }
}

pub fn is_valid_label(label: &str) -> bool {
    !label.is_empty() && label.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

/// Parsed think/rethink/answer triple.
///
/// Equality compares content only; `raw` records the text it was parsed from.
#[derive(Debug, Clone)]
pub struct StructuredResponse {
    think_text: String,
    rethink_text: String,
    answer_entries: Vec<GroundingEntry>,
    raw: String,
}

impl PartialEq for StructuredResponse {
    fn eq(&self, other: &Self) -> bool {
        self.think_text == other.think_text
            && self.rethink_text == other.rethink_text
            && self.answer_entries == other.answer_entries
    }
}

impl StructuredResponse {
    /// Builds a response from parts. Texts are stored trimmed; `raw` is set to
    /// the canonical rendering.
    pub fn new(
        think: &str,
        rethink: &str,
        entries: Vec<GroundingEntry>,
    ) -> Result<Self, ResponseError> {
        let think_text = clean_text(think, "think")?;
        let rethink_text = clean_text(rethink, "rethink")?;
        if entries.is_empty() {
            return Err(ResponseError::NoEntries);
        }
        let mut r = Self {
            think_text,
            rethink_text,
            answer_entries: entries,
            raw: String::new(),
        };
        r.raw = render_response(&r);
        Ok(r)
    }

    pub fn think_text(&self) -> &str {
        &self.think_text
    }

    pub fn rethink_text(&self) -> &str {
        &self.rethink_text
    }

    pub fn answer_entries(&self) -> &[GroundingEntry] {
        &self.answer_entries
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }
}

fn clean_text(text: &str, field: &'static str) -> Result<String, ResponseError> {
    let t = text.trim();
    let has_tag = TAGS
        .iter()
        .any(|tag| t.contains(&format!("<{tag}>")) || t.contains(&format!("</{tag}>")));
    if t.is_empty() || has_tag {
        return Err(ResponseError::InvalidText { field });
    }
    Ok(t.to_string())
}

/// First check that failed, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    MissingThink,
    MissingRethink,
    MissingAnswer,
    TagOrder,
    PayloadSyntax,
    PayloadSemantics,
    Ok,
}

impl FailureStage {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureStage::MissingThink => "missing_think",
            FailureStage::MissingRethink => "missing_rethink",
            FailureStage::MissingAnswer => "missing_answer",
            FailureStage::TagOrder => "tag_order",
            FailureStage::PayloadSyntax => "payload_syntax",
            FailureStage::PayloadSemantics => "payload_semantics",
            FailureStage::Ok => "ok",
        }
    }
}

impl fmt::Display for FailureStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseReport {
    pub format_ok: bool,
    pub failure_stage: FailureStage,
    pub response: Option<StructuredResponse>,
}

impl ParseReport {
    fn failed(stage: FailureStage) -> Self {
        debug_assert_ne!(stage, FailureStage::Ok);
        Self {
            format_ok: false,
            failure_stage: stage,
            response: None,
        }
    }
}

struct Block<'a> {
    start: usize,
    end: usize,
    body: &'a str,
}

/// Exactly one open tag and one close tag, in order, with a non-blank body.
fn find_block<'a>(text: &'a str, tag: &str) -> Option<Block<'a>> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut opens = text.match_indices(&open);
    let mut closes = text.match_indices(&close);
    let (o, _) = opens.next()?;
    let (c, _) = closes.next()?;
    if opens.next().is_some() || closes.next().is_some() {
        return None;
    }
    let body_start = o + open.len();
    if c < body_start {
        return None;
    }
    let body = &text[body_start..c];
    if body.trim().is_empty() {
        return None;
    }
    Some(Block {
        start: o,
        end: c + close.len(),
        body,
    })
}

/// Validates `text` against the response grammar. Never panics; every
/// failure is reported through [`ParseReport::failure_stage`].
pub fn parse_response(text: &str) -> ParseReport {
    let Some(think) = find_block(text, "think") else {
        return ParseReport::failed(FailureStage::MissingThink);
    };
    let Some(rethink) = find_block(text, "rethink") else {
        return ParseReport::failed(FailureStage::MissingRethink);
    };
    let Some(answer) = find_block(text, "answer") else {
        return ParseReport::failed(FailureStage::MissingAnswer);
    };

    let ordered = think.end <= rethink.start && rethink.end <= answer.start;
    if !ordered {
        return ParseReport::failed(FailureStage::TagOrder);
    }
    let outside = [
        &text[..think.start],
        &text[think.end..rethink.start],
        &text[rethink.end..answer.start],
        &text[answer.end..],
    ];
    if outside.iter().any(|s| !s.trim().is_empty()) {
        return ParseReport::failed(FailureStage::TagOrder);
    }

    let entries = match parse_payload(answer.body) {
        Ok(e) => e,
        Err(stage) => return ParseReport::failed(stage),
    };

    let response = StructuredResponse {
        think_text: think.body.trim().to_string(),
        rethink_text: rethink.body.trim().to_string(),
        answer_entries: entries,
        raw: text.to_string(),
    };
    ParseReport {
        format_ok: true,
        failure_stage: FailureStage::Ok,
        response: Some(response),
    }
}

/// Integer JSON values, still unchecked for range.
struct RawEntry {
    bbox: [i128; 4],
    point: [i128; 2],
    affordance: String,
}

fn parse_payload(body: &str) -> Result<Vec<GroundingEntry>, FailureStage> {
    let value: Value =
        serde_json::from_str(body.trim()).map_err(|_| FailureStage::PayloadSyntax)?;
    let items = value.as_array().ok_or(FailureStage::PayloadSyntax)?;
    let raw = items
        .iter()
        .map(raw_entry)
        .collect::<Option<Vec<_>>>()
        .ok_or(FailureStage::PayloadSyntax)?;
    if raw.is_empty() {
        return Err(FailureStage::PayloadSemantics);
    }
    raw.into_iter()
        .map(|r| checked_entry(r).ok_or(FailureStage::PayloadSemantics))
        .collect()
}

fn raw_entry(item: &Value) -> Option<RawEntry> {
    let obj = item.as_object()?;
    if obj.len() != 3 {
        return None;
    }
    let bbox = int_array::<4>(obj.get("bbox_2d")?)?;
    let point = int_array::<2>(obj.get("point_2d")?)?;
    let affordance = obj.get("affordance")?.as_str()?.to_string();
    Some(RawEntry {
        bbox,
        point,
        affordance,
    })
}

fn int_array<const N: usize>(v: &Value) -> Option<[i128; N]> {
    let arr = v.as_array()?;
    if arr.len() != N {
        return None;
    }
    let mut out = [0i128; N];
    for (slot, x) in out.iter_mut().zip(arr) {
        *slot = if let Some(i) = x.as_i64() {
            i128::from(i)
        } else {
            i128::from(x.as_u64()?)
        };
    }
    Some(out)
}

fn checked_entry(r: RawEntry) -> Option<GroundingEntry> {
    let c = |v: i128| u32::try_from(v).ok();
    let bbox = BoundingBox::new(c(r.bbox[0])?, c(r.bbox[1])?, c(r.bbox[2])?, c(r.bbox[3])?).ok()?;
    let point = Point::new(c(r.point[0])?, c(r.point[1])?);
    GroundingEntry::new(bbox, point, r.affordance).ok()
}

/// Canonical single-line rendering with key order `bbox_2d`, `point_2d`,
/// `affordance`.
pub fn render_response(r: &StructuredResponse) -> String {
    let entries: Vec<String> = r
        .answer_entries
        .iter()
        .map(|e| {
            let [x1, y1, x2, y2] = e.bbox.coords();
            format!(
                "{{\"bbox_2d\":[{x1},{y1},{x2},{y2}],\"point_2d\":[{},{}],\"affordance\":\"{}\"}}",
                e.point.x, e.point.y, e.affordance
            )
        })
        .collect();
    format!(
        "<think>{}</think><rethink>{}</rethink><answer>[{}]</answer>",
        r.think_text,
        r.rethink_text,
        entries.join(",")
    )
}
