//! Multi-adversarial variational autoencoder networks: a VAE-GAN whose
//! generator and encoder are trained against an ensemble of semi-supervised
//! discriminators, plus the metrics, data pipeline and experiment runner
//! around it.

pub mod batch;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod histogram;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod nn;
pub mod optim;
pub mod training;

pub use batch::{ImageBatch, ImageShape};
pub use error::{Error, Result};
