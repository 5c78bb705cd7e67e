//! Tunable-kernel search spaces, measurement backends, search strategies and
//! landscape analysis of tuning caches.

pub mod cli;
pub mod landscape;
pub mod measure;
pub mod paramspace;
pub mod store;
pub mod strategies;
