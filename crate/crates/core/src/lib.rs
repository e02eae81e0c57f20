//! Sum-product network inference and hard-EM learning, and a deep
//! generative spatial model of places built on top of it.

pub mod spn;
pub mod polar;
pub mod structure;
pub mod learning;
pub mod dataset;
pub mod tasks;
