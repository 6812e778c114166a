//! Dialogue scripts to staged, voiced, gesturing scenes.

pub mod annotator;
pub mod camera;
pub mod characters;
pub mod kinematics;
pub mod model;
pub mod motion;
pub mod parallel;
pub mod pipeline;
pub mod speech;
pub mod store;
pub mod validate;
