//! Uncalibrated photometric stereo by differentiable inverse rendering.
//!
//! Depth, reflectance, cast shadows, and per-image lights are recovered
//! jointly from a single-view image stack. The crate is `no_std` (with
//! `alloc`); file formats and the command-line tool live in the companion
//! `photostereo` crate.

#![no_std]

extern crate alloc;

pub mod autodiff;
mod error;
pub mod fields;
pub mod geometry;
pub mod metrics;
pub mod observation;
pub mod reflectance;
pub mod shadow;
pub mod synthetic;
pub mod training;
pub mod vec3;

pub use error::{Error, Result};
