//! A 2D CAD editing kernel for collaborative design games between a Designer,
//! who sees a target, and a Maker, who edits a shared design from the
//! Designer's text and sketch instructions.
//!
//! The crate covers the geometry and edit-action model, the normalized
//! chamfer metric, multimodal messages, rendering, the game engine, dataset
//! tooling and the evaluation harness.

// `!(x > 0.0)` is used on purpose so NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod bridge;
pub mod config;
pub mod dataset;
pub mod design;
pub mod eval;
pub mod game;
pub mod geometry;
pub mod message;
pub mod metric;
pub mod par;
pub mod render;
pub mod synth;

pub use action::{Action, ActionError, ApplyMode, ApplyReport};
pub use design::{design_equal, Design};
pub use game::{GameConfig, Outcome, Rollout, Round};
pub use geometry::{Curve, CurveKind, GeometryError, Point};
pub use message::{Drawing, Message, Stroke};
pub use metric::{chamfer, Distance, MetricConfig};
