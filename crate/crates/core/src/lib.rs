//! Point-supervised temporal action localization, desk scale.
//!
//! Pipeline: synthesize or load per-snippet features, cluster point
//! annotations into dense pseudo labels, train an action proposal network
//! (boundary detection, proposal generation, proposal evaluation against
//! class embeddings) with a fine-grained contrastive refinement loss, then
//! localize actions at inference and score them with tIoU/mAP.

pub mod apn;
pub mod io;
pub mod losses;
pub mod nn;
pub mod pipeline;
pub mod pseudo;
pub mod synth;
pub mod types;
