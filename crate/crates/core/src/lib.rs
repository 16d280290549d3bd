//! Deterministic simulation of chaos-keyed spread-spectrum links.
//!
//! A master Lorenz system and an adaptively synchronized slave share a
//! private control channel; their synchronized broadband states key two
//! public-channel schemes: a frequency-hopping FM link whose carrier is
//! selected per hop from a quantized chaotic sample, and a direct-sequence
//! link that spreads 4-bit symbols by XOR with chaos-derived chip words.
//! AWGN models and seeded Monte Carlo BER sweeps sit alongside.
//!
//! Everything is deterministic: fixed-step integration, seeded noise, and
//! order-independent trial aggregation, so every result is reproducible bit
//! for bit.

pub mod channel;
pub mod chaos;
pub mod dsp;
pub mod dsss;
pub mod error;
pub mod fhss;
pub mod fir;

pub use error::{Error, Result};
