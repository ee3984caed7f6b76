//! Reward-driven training toolkit for affordance grounding: box geometry, a
//! staged parser for structured model responses, a composable rule-based
//! reward, a GRPO objective with exact gradients, a synthetic training
//! environment, evaluation metrics and dataset conversion.

pub mod config;
pub mod dataset;
pub mod geometry;
pub mod grpo;
pub mod metrics;
pub mod parser;
pub mod pgm;
pub mod reward;
pub mod toy;

pub use geometry::{BoundingBox, GeometryError, MaskGrid, Point};
pub use parser::{
    parse_response, render_response, FailureStage, GroundingEntry, ParseReport, StructuredResponse,
};
pub use reward::{score_response, Component, EmbeddingLexicon, RewardBreakdown, RewardConfig};
