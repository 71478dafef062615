//! Data-driven reduced models by Wiener projection.
//!
//! The pipeline: generate data from a full spectral PDE model ([`models`]),
//! evaluate a predictor basis along it ([`predictors`]), fit a cascade-form
//! NARMAX model ([`fit`]), model the residual noise ([`noise`]), run the
//! reduced model ([`sim`]) and compare statistics and forecast skill ([`eval`]).

pub mod cascade;
pub mod error;
pub mod eval;
pub mod fit;
pub mod model;
pub mod models;
pub mod noise;
pub mod optim;
pub mod poly;
pub mod predictors;
pub mod series;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{expand_cascade, CascadeCoefficients, CascadeModel, ForcingWeights, ModelOrders, DEFAULT_MARGIN};
pub use poly::{roots_inside_unit_disc, triangle_contains};
pub use series::ComplexSeries;
