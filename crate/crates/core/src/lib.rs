//! Semantic multi-object tracking at toy scale.
//!
//! Detections are linked into tracks by a Kalman/Hungarian tracker
//! ([`tracker`]). Per-track appearance features are pooled by temporal
//! attention, paired into relation queries and folded into a video context
//! by recursive multi-head attention ([`fusion`]). A small causal language
//! model with LoRA adapters reads those vectors as a prefix ([`reasoner`]);
//! captions, summaries and interaction labels come out of
//! [`pipeline::Describer`]. [`train`] runs the three staged objectives and
//! [`metrics`] scores tracks (CLEAR, identity, HOTA), captions (BLEU-4,
//! ROUGE-L, METEOR-lite, CIDEr) and interactions.
//!
//! Everything is deterministic given a seed; [`synth`] generates datasets
//! in the on-disk layout that [`dataset`] reads.

pub mod autodiff;
pub mod bundle;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fusion;
pub mod ingest;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod reasoner;
pub mod rng;
pub mod synth;
pub mod tracker;
pub mod train;
pub mod types;
