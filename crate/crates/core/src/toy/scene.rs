use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;
use crate::parser::GroundingEntry;
use crate::reward::EmbeddingLexicon;

pub const AFFORDANCE_VOCAB: [&str; 8] = [
    "openable",
    "graspable",
    "pourable",
    "sittable",
    "cuttable",
    "pushable",
    "liftable",
    "hangable",
];

const TEMPLATES: [&str; 3] = [
    "Find every part of the scene that is {}.",
    "Which regions would I use if I need something {}?",
    "Point out all {} areas.",
];

pub const SCENE_SIZE: u32 = 64;
const MIN_SIDE: u32 = 8;
const MAX_SIDE: u32 = 16;
const GAP: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

impl Difficulty {
    pub fn object_count(&self) -> usize {
        match self {
            Difficulty::Easy => 2,
            Difficulty::Hard => 5,
        }
    }

    pub fn label_count(&self) -> usize {
        match self {
            Difficulty::Easy => 2,
            Difficulty::Hard => 4,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "hard" => Ok(Difficulty::Hard),
            other => Err(format!(
                "unknown difficulty {other:?}; expected easy or hard"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SceneObject {
    pub region: BoundingBox,
    pub affordance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToyScene {
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SceneObject>,
    /// Labels available in this scene, in draw order.
    pub labels: Vec<String>,
    pub template_id: usize,
    pub target_label: String,
    pub instruction: String,
    pub targets: Vec<GroundingEntry>,
}

impl ToyScene {
    pub fn is_target(&self, object_index: usize) -> bool {
        self.objects[object_index].affordance == self.target_label
    }

    pub fn target_count(&self) -> usize {
        self.targets.len()
    }
}

fn place_regions<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<BoundingBox> {
    'restart: loop {
        let mut placed: Vec<BoundingBox> = Vec::with_capacity(count);
        for _ in 0..count {
            let mut ok = None;
            for _attempt in 0..200 {
                let w = rng.random_range(MIN_SIDE..=MAX_SIDE);
                let h = rng.random_range(MIN_SIDE..=MAX_SIDE);
                let x = rng.random_range(0..=SCENE_SIZE - w);
                let y = rng.random_range(0..=SCENE_SIZE - h);
                let b = BoundingBox::new(x, y, x + w - 1, y + h - 1).expect("ordered corners");
                let clear = placed.iter().all(|p| {
                    b.x1() > p.x2() + GAP
                        || p.x1() > b.x2() + GAP
                        || b.y1() > p.y2() + GAP
                        || p.y1() > b.y2() + GAP
                });
                if clear {
                    ok = Some(b);
                    break;
                }
            }
            match ok {
                Some(b) => placed.push(b),
                None => continue 'restart,
            }
        }
        return placed;
    }
}

/// Draws a reproducible scene. Targets are exactly the objects whose label
/// matches the instruction's affordance.
pub fn generate_scene<R: Rng + ?Sized>(rng: &mut R, difficulty: Difficulty) -> ToyScene {
    let mut vocab: Vec<&str> = AFFORDANCE_VOCAB.to_vec();
    vocab.shuffle(rng);
    let labels: Vec<String> = vocab[..difficulty.label_count()]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let regions = place_regions(rng, difficulty.object_count());
    let assigned: Vec<usize> = loop {
        let a: Vec<usize> = (0..regions.len())
            .map(|_| rng.random_range(0..labels.len()))
            .collect();
        // hard scenes always keep at least one distractor
        if difficulty == Difficulty::Easy || a.iter().any(|&l| l != a[0]) {
            break a;
        }
    };
    let objects: Vec<SceneObject> = regions
        .into_iter()
        .zip(&assigned)
        .map(|(region, &l)| SceneObject {
            region,
            affordance: labels[l].clone(),
        })
        .collect();

    let target_label = objects[rng.random_range(0..objects.len())]
        .affordance
        .clone();
    let template_id = rng.random_range(0..TEMPLATES.len());
    let instruction = TEMPLATES[template_id].replace("{}", &target_label);
    let targets = objects
        .iter()
        .filter(|o| o.affordance == target_label)
        .map(|o| {
            GroundingEntry::new(o.region, o.region.center(), o.affordance.clone())
                .expect("vocab labels are valid")
        })
        .collect();

    ToyScene {
        width: SCENE_SIZE,
        height: SCENE_SIZE,
        objects,
        labels,
        template_id,
        target_label,
        instruction,
        targets,
    }
}

/// Draws scenes until one has at least `min_targets` targets.
pub fn generate_scene_with_min_targets<R: Rng + ?Sized>(
    rng: &mut R,
    difficulty: Difficulty,
    min_targets: usize,
) -> ToyScene {
    assert!(
        min_targets <= difficulty.object_count(),
        "at most {} targets possible",
        difficulty.object_count()
    );
    loop {
        let s = generate_scene(rng, difficulty);
        if s.target_count() >= min_targets {
            return s;
        }
    }
}

/// One-hot embeddings for the toy vocabulary; distinct labels have cosine 0.
pub fn toy_lexicon() -> EmbeddingLexicon {
    let d = AFFORDANCE_VOCAB.len();
    let mut lex = EmbeddingLexicon::new(d);
    for (i, tok) in AFFORDANCE_VOCAB.iter().enumerate() {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        lex.insert(*tok, v).expect("unit vectors are valid");
    }
    lex
}
