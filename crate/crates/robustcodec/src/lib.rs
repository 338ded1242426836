//! Learned compression workbench with worst-case guarantees in mind.
//!
//! The crate trains small quantized autoencoders and evaluates how they
//! degrade away from the training distribution. Three robustness mechanisms
//! are covered:
//!
//! * adversarial (Wasserstein-ball) training via an inner gradient ascent on
//!   a transport-penalized distortion objective ([`dro`]),
//! * a two-stage successive-refinement code whose second stage is trained
//!   robustly while the first stays tuned to clean data ([`codec`]),
//! * rotation shifts, both as an explicit worst-case over angles and as a
//!   predict-then-derotate pipeline that spends a few bits on the angle
//!   ([`groupshift`]).
//!
//! The [`qtheory`] module is independent of the learned models: it carries the
//! exact distortion analysis of midpoint interval quantizers on uniform
//! sources, and the minimax-quantizer search used to demonstrate that
//! worst-case-optimal quantizers must give up clean-source performance.

pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod config;
pub mod data;
pub mod dro;
pub mod error;
pub mod eval;
pub mod groupshift;
pub mod nn;
pub mod qtheory;
pub mod quantizer;

pub use error::{Error, Result};
