//! Discrete p-Laplacian flow `ρ(x) ∂ₜu = Δₚu` with a radial density on
//! truncated integer lattices, plus the functional inequalities, energy
//! identities and decay statistics that go with it.
//!
//! Every numerical type is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

// `!(x > 0)` style guards are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decay;
pub mod density;
pub mod error;
pub mod evolution;
pub mod graph;
pub mod inequalities;
pub mod operator;
pub mod scalar;
pub mod scaling;

pub use error::{Error, Result};
pub use scalar::Real;

pub type WeightedGraph = graph::WeightedGraph<f64>;
pub type VertexSet = graph::VertexSet<f64>;
pub type WeightScheme = graph::WeightScheme<f64>;
pub type DensityProfile = density::DensityProfile<f64>;
pub type ScalingToolkit = scaling::ScalingToolkit<f64>;
pub type FieldState = operator::FieldState<f64>;
pub type EvolutionConfig = evolution::EvolutionConfig<f64>;
pub type FlowTrace = evolution::FlowTrace<f64>;
pub type DecayReport = decay::DecayReport<f64>;
pub type InequalityReport = inequalities::InequalityReport<f64>;
