pub mod backbone;
pub mod brep;
pub mod cli;
pub mod config;
pub mod features;
pub mod geom;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sketch;
pub mod synth;
pub mod train;
