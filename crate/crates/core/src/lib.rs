//! Information flow from a driving stimulus through multichannel responses
//! into a linear reconstruction of that stimulus.
//!
//! The crate is organised bottom-up:
//!
//! - [`signals`]: time-series containers, normalisation, envelopes, lag embedding, CSV ingestion.
//! - [`decoder`]: ridge-regularised backward decoders and Pearson correlation.
//! - [`infotheory`]: Gaussian mutual information, conditional mutual information and transfer entropy.
//! - [`redundancy`]: per-channel minimum rates and the directed-redundancy upper bound.
//! - [`analysis`]: distortion, density estimation, distortion-rate binning and linear fits.
//! - [`synth`]: stationary VAR(1) generators with exact transfer-entropy oracles.
//!
//! All information quantities are reported in bits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod decoder;
mod error;
pub mod infotheory;
mod lagcov;
pub mod redundancy;
pub mod signals;
pub mod special;
pub mod synth;

pub use error::{Error, Result};

/// Trial condition tag shared by recordings, rate bundles and distortion points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Attended,
    Distractor,
    Unlabeled,
}

impl Condition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Attended => "attended",
            Condition::Distractor => "distractor",
            Condition::Unlabeled => "unlabeled",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attended" => Ok(Condition::Attended),
            "distractor" => Ok(Condition::Distractor),
            "unlabeled" => Ok(Condition::Unlabeled),
            other => Err(Error::InvalidInput(format!("unknown condition `{other}`"))),
        }
    }
}
