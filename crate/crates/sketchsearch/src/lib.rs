//! Runtime companion to `sketchsearch-core`: map and experiment files,
//! episode transcripts, the batch experiment harness with significance
//! testing, and the WebSocket session gateway for live operators.

pub mod config;
pub mod harness;
pub mod logio;
pub mod mapfile;
pub mod report;
pub mod stats;
pub mod summary;
pub mod service;
