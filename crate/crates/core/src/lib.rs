//! Engine for human-assisted dynamic target search.
//!
//! An online tree-search planner chases a ground target across a road
//! network while a human collaborator sketches landmarks, answers queries
//! and volunteers structured statements. Each sketch is turned into a
//! softmax likelihood, labelled with compass semantics, and folded into both
//! the particle belief and the planner's generative model at the next
//! decision boundary.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, wall-clock pacing,
//! the batch harness and the session gateway live in the `sketchsearch`
//! companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autolabel;
pub mod belief;
pub mod episode;
pub mod geometry;
pub mod math;
pub mod planner;
pub mod rng;
pub mod semantics;
pub mod sim_human;
pub mod sketch;
pub mod world;

pub use geometry::{ConvexPolygon, GeometryError, Point2};
