//! Single-channel two-source separation with gain-adapted factorial HMMs.
//!
//! The pipeline frames a mixture into log10-magnitude spectra, jointly decodes
//! the hidden state paths of two speaker models together with the
//! target-to-interference ratio θ, and rebuilds both sources through binary
//! spectral masks and overlap-add synthesis.
//!
//! Modules follow the pipeline order:
//!
//! - [`signal`]: framing, log spectra, masked overlap-add reconstruction, WAV I/O
//! - [`gain`]: θ ↔ gain algebra and observation/source RMS estimates
//! - [`quantize`]: LBG codebooks and the gain-adapted VQ frame decoder
//! - [`models`]: diagonal-Gaussian HMMs, Baum-Welch, model files
//! - [`mixmax`]: max-approximation combination and joint emission likelihood
//! - [`decode`]: parallel Viterbi, θ search, alternating inference loops
//! - [`separate`]: mask construction and the end-to-end separation entry point
//! - [`eval`]: mixing, SNR scoring, synthetic sources, batch experiments

#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::single_range_in_vec_init
)]

pub mod decode;
pub mod error;
pub mod eval;
pub mod gain;
pub mod mixmax;
pub mod models;
pub mod quantize;
pub mod separate;
pub mod signal;

pub use error::{Error, Result};
