//! Gaze geometry toolkit: a rigid 3D eyeball template, ground-truth and
//! pseudo-label eye meshes, supervised and multi-view consistency losses,
//! and a synthetic world for desk-scale training experiments.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod gaze;
pub mod geometry;
pub mod io;
pub mod labeling;
pub mod losses;
pub mod synthworld;
pub mod template;
pub mod trainer;

pub use error::{OcuError, Result};
