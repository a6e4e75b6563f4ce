//! Deterministic synthesis of document-layout training pages.
//!
//! A small pool of cropped document elements ([`pool`]) is turned into
//! well-aligned synthetic pages by mesh-candidate best-fit packing
//! ([`layout`]), scored with alignment/density metrics ([`metrics`]) and
//! rendered with COCO annotations ([`render`]). [`crm`] holds a standalone
//! numerical reference of the multi-dilation receptive module.

pub mod coco;
pub mod crm;
pub mod error;
pub mod layout;
pub mod metrics;
pub mod pool;
pub mod render;
pub mod rng;

pub use error::{Error, Result};
