pub mod baselines;
pub mod config;
pub mod discretize;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod filter;
pub mod graph;
pub mod io;
pub mod learner;
mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod synthetic;
pub mod theory;
