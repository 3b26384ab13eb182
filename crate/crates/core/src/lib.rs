//! Compile rules over categorical concepts into the set of admissible joint
//! states, the polytope of feasible concept marginals, and differentiable
//! output heads whose predictions always satisfy the rules.

pub mod compile;
pub mod data;
pub mod error;
pub mod experiments;
pub mod heads;
pub mod logic;
pub mod metrics;
pub mod nn;
pub mod polytope;
pub mod rules;
pub mod scalar;
pub mod schema;
pub mod state_space;

pub use error::{Error, Result};
pub use heads::{HeadKind, HeadSpec};
pub use scalar::Scalar;
pub use schema::{ConceptSchema, ConceptVector, MarginalVector};

pub type Marginals = MarginalVector<f64>;
pub type Marginals32 = MarginalVector<f32>;
pub type Head = HeadSpec<f64>;
pub type Head32 = HeadSpec<f32>;
pub type Model = nn::Model<f64>;
pub type Model32 = nn::Model<f32>;
pub type Dataset = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Vertices = state_space::VertexMatrix<f64>;
