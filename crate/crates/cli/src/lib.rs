//! Configuration-driven experiment runner for the coupled PCA rules.

pub mod analysis;
pub mod config;
pub mod manifest;
pub mod simulate;
pub mod verify;
