//! Browser bindings for the static demo page in `www/`.
//!
//! Every export takes plain numbers/strings and returns a JSON string, so the
//! page needs no generated type glue beyond the wasm-bindgen shim. The
//! functions are ordinary Rust too and are tested natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use affordance_grpo::geometry::{box_iou, box_l1, BoundingBox};
use affordance_grpo::parser::{render_response, GroundingEntry, StructuredResponse};
use affordance_grpo::reward::{score_response, Component, RewardConfig};
use affordance_grpo::toy::{generate_scene, toy_lexicon, train_toy, Difficulty, ToyTrainConfig};

use rand_chacha::rand_core::SeedableRng;

fn error(message: impl std::fmt::Display) -> String {
    json!({ "error": message.to_string() }).to_string()
}

fn difficulty(name: &str) -> Result<Difficulty, String> {
    name.parse()
}

/// IoU, intersection area and corner L1 between two inclusive-corner boxes.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn box_metrics(
    ax1: u32,
    ay1: u32,
    ax2: u32,
    ay2: u32,
    bx1: u32,
    by1: u32,
    bx2: u32,
    by2: u32,
) -> String {
    let (a, b) = match (
        BoundingBox::new(ax1, ay1, ax2, ay2),
        BoundingBox::new(bx1, by1, bx2, by2),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return error(e),
    };
    let iou = box_iou(&a, &b);
    let config = RewardConfig::default();
    json!({
        "iou": iou,
        "intersection": a.intersection_area(&b),
        "union": a.area() + b.area() - a.intersection_area(&b),
        "box_l1": box_l1(&a, &b),
        "iou_reward": if iou > config.iou_threshold { 1.0 } else { 0.0 },
    })
    .to_string()
}

/// A synthetic scene plus its canonical perfect response.
#[wasm_bindgen]
pub fn toy_scene(seed: u32, difficulty_name: &str) -> String {
    let d = match difficulty(difficulty_name) {
        Ok(d) => d,
        Err(e) => return error(e),
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(u64::from(seed));
    let scene = generate_scene(&mut rng, d);
    let perfect = StructuredResponse::new(
        &format!("The instruction asks for {} regions.", scene.target_label),
        "Each chosen region matches the request.",
        scene.targets.clone(),
    )
    .map(|r| render_response(&r))
    .unwrap_or_default();
    json!({ "scene": scene, "perfect_response": perfect }).to_string()
}

/// Scores `response` against `targets_json` (an answer-style array of
/// `{bbox_2d, point_2d, affordance}` objects) with the toy lexicon.
/// `disabled` is a comma-separated list of reward components to switch off.
#[wasm_bindgen]
pub fn score(response: &str, targets_json: &str, disabled: &str) -> String {
    let targets: Vec<Value> = match serde_json::from_str(targets_json) {
        Ok(Value::Array(v)) => v,
        Ok(_) => return error("targets must be a JSON array"),
        Err(e) => return error(e),
    };
    let mut gt = Vec::with_capacity(targets.len());
    for t in &targets {
        let parsed = (|| -> Option<GroundingEntry> {
            let b: Vec<u32> = serde_json::from_value(t.get("bbox_2d")?.clone()).ok()?;
            let p: [u32; 2] = serde_json::from_value(t.get("point_2d")?.clone()).ok()?;
            let bbox = BoundingBox::new(*b.first()?, *b.get(1)?, *b.get(2)?, *b.get(3)?).ok()?;
            GroundingEntry::new(bbox, p.into(), t.get("affordance")?.as_str()?).ok()
        })();
        match parsed {
            Some(e) => gt.push(e),
            None => return error(format!("bad target {t}")),
        }
    }
    let mut config = RewardConfig::default();
    for name in disabled.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name.parse::<Component>() {
            Ok(c) => config.set_enabled(c, false),
            Err(e) => return error(e),
        }
    }
    let breakdown = score_response(response, &gt, &toy_lexicon(), &config);
    serde_json::to_string(&breakdown).unwrap_or_else(error)
}

/// Runs toy GRPO training and returns the per-step curves.
#[wasm_bindgen]
pub fn train_curve(
    difficulty_name: &str,
    seed: u32,
    steps: usize,
    min_targets: usize,
    disable_box_num: bool,
) -> String {
    let d = match difficulty(difficulty_name) {
        Ok(d) => d,
        Err(e) => return error(e),
    };
    let mut cfg = ToyTrainConfig::for_difficulty(d);
    cfg.grpo.seed = u64::from(seed);
    cfg.grpo.steps = steps;
    cfg.min_targets = min_targets;
    if disable_box_num {
        cfg.reward.set_enabled(Component::BoxNum, false);
    }
    match train_toy(&cfg, |_| {}) {
        Ok(r) => json!({
            "initial_expected_reward": r.initial_expected_reward,
            "max_reward": r.max_reward,
            "expected_reward": r.steps.iter().map(|s| s.expected_reward).collect::<Vec<_>>(),
            "mean_reward": r.steps.iter().map(|s| s.mean_reward).collect::<Vec<_>>(),
            "count_accuracy": r.steps.iter().map(|s| s.count_accuracy).collect::<Vec<_>>(),
            "theta": r.theta,
        })
        .to_string(),
        Err(e) => error(e),
    }
}
