//! A synthetic grounding environment with a finite response space, small
//! enough to train a linear-softmax policy with GRPO in seconds.

pub mod policy;
pub mod scene;
pub mod train;

pub use policy::{
    build_candidates, Corruption, Jitter, PreparedScene, SoftmaxPolicy, ToyCandidate, FEATURE_DIM,
    FEATURE_NAMES,
};
pub use scene::{
    generate_scene, generate_scene_with_min_targets, toy_lexicon, Difficulty, SceneObject,
    ToyScene, AFFORDANCE_VOCAB, SCENE_SIZE,
};
pub use train::{
    build_pool, count_ablation, train_toy, AblationRun, EvalPool, ToyError, ToyStepRecord,
    ToyTrainConfig, ToyTrainResult,
};
