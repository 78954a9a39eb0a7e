pub mod config;
pub mod error;
pub mod generator;
pub mod latent;
pub mod nn;
pub mod synth;
pub mod tape;
