//! Hyperparameter search for physics-informed neural networks.
//!
//! The pieces: a catalog of benchmark PDEs with reference solutions, a
//! fixed PINN trainer, a store of past runs, label-based retrieval of
//! configurations from similar problems, and a Monte Carlo memory tree that
//! searches the configuration grid under a planner prior.

pub mod catalog;
pub mod db;
pub mod orchestrator;
pub mod pgkr;
pub mod policy;
pub mod seed;
pub mod space;
pub mod trainer;
pub mod tree;
