//! Head tissue segmentation pipeline.
//!
//! Takes co-registered T1/T2-weighted intensity volumes and produces head
//! models labelled with 15 tissue classes, via two independent routes: a
//! deterministic rule pipeline ([`ruleseg`]) and a two-encoder multi-decoder
//! convolutional network ([`net`]) whose tri-axial slice predictions are
//! fused by majority vote ([`fuse`]). Procedural phantoms ([`phantom`])
//! provide training data and ground truth, and [`morpho`] computes the
//! morphometric statistics used to validate generated cohorts.

pub mod fuse;
pub mod io;
pub mod morpho;
pub mod net;
pub mod phantom;
pub mod preprocess;
pub mod ruleseg;
pub mod vol;
