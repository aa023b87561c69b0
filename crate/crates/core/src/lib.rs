//! Core algorithms for training and evaluating under noisy category labels.
//!
//! - [`geometry`]: oriented boxes and rotated IoU.
//! - [`annotations`]: DOTA label model, parser/writer, label-noise injection.
//! - [`metrics`]: VOC-style matching, AP/mAP, ACC against noisy labels and the
//!   correct/incorrect subset split.
//! - [`dynamics`]: polynomial fits of accuracy curves and early-learning
//!   endpoint detection.
//! - [`dld`]: cross-entropy, label smoothing, top-K selection and the dynamic
//!   loss decay objective.
//! - [`trainer`]: a small MLP harness that reproduces early learning and
//!   memorization on synthetic data.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod annotations;
pub mod dld;
pub mod dynamics;
pub mod geometry;
pub mod metrics;
pub mod trainer;
