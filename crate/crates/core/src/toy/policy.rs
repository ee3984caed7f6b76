use rand::Rng;
use serde::Serialize;

use crate::geometry::{BoundingBox, Point};
use crate::grpo::Policy;
use crate::parser::{render_response, GroundingEntry, StructuredResponse};

use super::scene::ToyScene;

pub const FEATURE_DIM: usize = 7;
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "label_match",
    "precision",
    "coverage",
    "center_offset",
    "size_deviation",
    "missing_rethink",
    "malformed_payload",
];

const SHIFT: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Jitter {
    Exact,
    Shifted,
    Shrunk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    None,
    MissingRethink,
    MalformedPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyCandidate {
    pub text: String,
    pub features: [f64; FEATURE_DIM],
    /// Bit `i` set when scene object `i` is referenced.
    pub objects: u32,
    pub label: String,
    pub jitter: Jitter,
    pub corruption: Corruption,
    pub entry_count: usize,
}

impl ToyCandidate {
    /// True when the response parses and names exactly as many regions as
    /// the scene has targets.
    pub fn has_exact_count(&self, scene: &ToyScene) -> bool {
        self.corruption == Corruption::None && self.entry_count == scene.target_count()
    }
}

/// A scene together with its finite response space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreparedScene {
    pub scene: ToyScene,
    pub candidates: Vec<ToyCandidate>,
}

impl PreparedScene {
    pub fn new(scene: ToyScene) -> Self {
        let candidates = build_candidates(&scene);
        Self { scene, candidates }
    }
}

fn jitter_box(b: &BoundingBox, jitter: Jitter, width: u32, height: u32) -> BoundingBox {
    let [x1, y1, x2, y2] = b.coords();
    match jitter {
        Jitter::Exact => *b,
        Jitter::Shifted => {
            let (nx1, nx2) = if x2 + SHIFT < width {
                (x1 + SHIFT, x2 + SHIFT)
            } else {
                (x1 - SHIFT, x2 - SHIFT)
            };
            let (ny1, ny2) = if y2 + SHIFT < height {
                (y1 + SHIFT, y2 + SHIFT)
            } else {
                (y1 - SHIFT, y2 - SHIFT)
            };
            BoundingBox::new(nx1, ny1, nx2, ny2).expect("shift keeps order")
        }
        Jitter::Shrunk => {
            let w = (b.width() as u32).div_ceil(2);
            let h = (b.height() as u32).div_ceil(2);
            BoundingBox::new(x1, y1, x1 + w - 1, y1 + h - 1).expect("shrink keeps order")
        }
    }
}

fn center_distance(a: Point, b: Point) -> f64 {
    let dx = a.x as f64 - b.x as f64;
    let dy = a.y as f64 - b.y as f64;
    (dx * dx + dy * dy).sqrt()
}

fn describe(scene: &ToyScene, label: &str) -> (String, String) {
    let think = format!(
        "The instruction asks for {} regions; there are {} objects in view.",
        scene.target_label,
        scene.objects.len()
    );
    let rethink = format!("Checking that every chosen region is {label}.");
    (think, rethink)
}

/// Enumerates every non-empty object subset × scene label × box jitter, plus
/// corrupted variants of the single-object answers that use the instructed
/// label. Order is deterministic.
pub fn build_candidates(scene: &ToyScene) -> Vec<ToyCandidate> {
    let n = scene.objects.len();
    assert!(n < 32, "subset masks are u32");
    let target_total = scene.target_count() as f64;
    let mut out = Vec::new();

    for subset in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| subset & (1 << i) != 0).collect();
        let on_target = members.iter().filter(|&&i| scene.is_target(i)).count() as f64;
        for label in &scene.labels {
            for jitter in [Jitter::Exact, Jitter::Shifted, Jitter::Shrunk] {
                let mut entries = Vec::with_capacity(members.len());
                let mut offset = 0.0;
                let mut size_dev = 0.0;
                for &i in &members {
                    let region = scene.objects[i].region;
                    let b = jitter_box(&region, jitter, scene.width, scene.height);
                    offset += center_distance(b.center(), region.center());
                    size_dev += (1.0 - b.area() as f64 / region.area() as f64).abs();
                    entries.push(
                        GroundingEntry::new(b, b.center(), label.clone())
                            .expect("scene labels are valid"),
                    );
                }
                let k = members.len() as f64;
                let features = [
                    f64::from(u8::from(*label == scene.target_label)),
                    on_target / k,
                    on_target / target_total,
                    offset / k / SHIFT as f64,
                    size_dev / k,
                    0.0,
                    0.0,
                ];
                let (think, rethink) = describe(scene, label);
                let resp =
                    StructuredResponse::new(&think, &rethink, entries).expect("non-empty entries");
                let text = render_response(&resp);
                let base = ToyCandidate {
                    text: text.clone(),
                    features,
                    objects: subset,
                    label: label.clone(),
                    jitter,
                    corruption: Corruption::None,
                    entry_count: members.len(),
                };

                if members.len() == 1 && *label == scene.target_label {
                    let rethink_block = format!("<rethink>{}</rethink>", resp.rethink_text());
                    let mut missing = base.clone();
                    missing.text = text.replace(&rethink_block, "");
                    missing.features[5] = 1.0;
                    missing.corruption = Corruption::MissingRethink;

                    let mut malformed = base.clone();
                    malformed.text = text.replace("}]</answer>", "</answer>");
                    malformed.features[6] = 1.0;
                    malformed.corruption = Corruption::MalformedPayload;

                    out.push(base);
                    out.push(missing);
                    out.push(malformed);
                } else {
                    out.push(base);
                }
            }
        }
    }
    out
}

/// Linear-softmax policy over a scene's candidates: `π(c) ∝ exp(θ·φ(c))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SoftmaxPolicy;

fn logits(params: &[f64], candidates: &[ToyCandidate]) -> Vec<f64> {
    candidates
        .iter()
        .map(|c| c.features.iter().zip(params).map(|(f, t)| f * t).sum())
        .collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl SoftmaxPolicy {
    pub fn probabilities(&self, params: &[f64], query: &PreparedScene) -> Vec<f64> {
        let z = logits(params, &query.candidates);
        let lse = log_sum_exp(&z);
        z.iter().map(|x| (x - lse).exp()).collect()
    }

    /// `E_π[φ]` under the current parameters.
    pub fn expected_features(&self, params: &[f64], query: &PreparedScene) -> [f64; FEATURE_DIM] {
        let p = self.probabilities(params, query);
        let mut e = [0.0; FEATURE_DIM];
        for (pi, c) in p.iter().zip(&query.candidates) {
            for (acc, f) in e.iter_mut().zip(c.features) {
                *acc += pi * f;
            }
        }
        e
    }

    /// Exact `KL(π_params ‖ π_ref)` by enumeration.
    pub fn exact_kl(&self, params: &[f64], ref_params: &[f64], query: &PreparedScene) -> f64 {
        let zp = logits(params, &query.candidates);
        let zq = logits(ref_params, &query.candidates);
        let (lp, lq) = (log_sum_exp(&zp), log_sum_exp(&zq));
        zp.iter()
            .zip(&zq)
            .map(|(a, b)| {
                let lpa = a - lp;
                lpa.exp() * (lpa - (b - lq))
            })
            .sum::<f64>()
            .max(0.0)
    }

    /// Exact expectation of per-candidate `values` under the policy.
    pub fn expectation(&self, params: &[f64], query: &PreparedScene, values: &[f64]) -> f64 {
        self.probabilities(params, query)
            .iter()
            .zip(values)
            .map(|(p, v)| p * v)
            .sum()
    }
}

impl Policy for SoftmaxPolicy {
    type Query = PreparedScene;
    type Action = usize;

    fn param_count(&self) -> usize {
        FEATURE_DIM
    }

    fn sample<R: Rng + ?Sized>(&self, params: &[f64], query: &PreparedScene, rng: &mut R) -> usize {
        let p = self.probabilities(params, query);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    }

    fn log_prob(&self, params: &[f64], query: &PreparedScene, action: &usize) -> f64 {
        let z = logits(params, &query.candidates);
        z[*action] - log_sum_exp(&z)
    }

    fn grad_log_prob(&self, params: &[f64], query: &PreparedScene, action: &usize) -> Vec<f64> {
        let e = self.expected_features(params, query);
        query.candidates[*action]
            .features
            .iter()
            .zip(e)
            .map(|(f, m)| f - m)
            .collect()
    }

    fn render(&self, query: &PreparedScene, action: &usize) -> String {
        query.candidates[*action].text.clone()
    }

    fn query_id(&self, query: &PreparedScene) -> String {
        query.scene.instruction.clone()
    }
}
