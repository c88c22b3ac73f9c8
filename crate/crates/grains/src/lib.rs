//! File formats, pipeline steps, command line and HTTP service built on
//! `grains-core`.

pub mod cli;
pub mod formats;
pub mod pipeline;
pub mod render;
pub mod service;
