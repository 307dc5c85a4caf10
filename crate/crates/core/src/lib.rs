//! Multimodal trajectory prediction with lane-guided supervision.
//!
//! Geometry and lane graphs, the training losses and evaluation metrics, a
//! small reverse-mode autodiff engine, the two-stage prediction model, a
//! synthetic scenario generator and the training/evaluation harness.

pub mod autodiff;
pub mod geom;
pub mod harness;
pub mod lanegraph;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod scenario;
