//! Road traffic flow estimation from aggregated LTE counter histograms.
//!
//! The pipeline runs ingest ([`data`]) → featurize ([`features`]) → train
//! ([`regress`], [`neural`]) → transfer ([`transfer`]) → evaluate ([`eval`]), with
//! [`synth`] providing seeded synthetic scenarios that have a known coupling between
//! traffic and counters.

pub mod data;
pub mod eval;
pub mod error;
pub mod features;
pub mod metrics;
pub mod neural;
pub mod rng;
pub mod regress;
pub mod synth;
pub mod transfer;

pub use error::{Error, Result};

/// Lowercase hex SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
