//! Simulator and protocol library for secure-repeater networks.
//!
//! Quantum secure direct communication (QSDC) hops carry lattice-encrypted
//! ciphertext through classical repeaters that read it out and forward it.
//! The crate contains:
//!
//! - [`quantum`]: exact pure-state simulation of single qubits and EPR pairs,
//!   generic over the scalar type;
//! - [`channel`]: lossy, noisy hops with an intercept–resend eavesdropper;
//! - [`fec`]: a (3,6)-regular LDPC code with a sum-product decoder;
//! - [`qsdc`]: the entanglement-based two-step protocol and DL04;
//! - [`pqc`]: a Ring-LWE block cipher with a 32-byte → 1024-byte shape;
//! - [`network`]: routing, secure- and trusted-repeater relay, compromise
//!   oracle and eavesdropping localization;
//! - [`harness`]: scenario files, the deterministic event loop and reports.

pub mod channel;
pub mod classical;
pub mod events;
pub mod fec;
pub mod harness;
pub mod network;
pub mod pqc;
pub mod qsdc;
pub mod quantum;
pub mod scalar;
pub mod streams;
pub mod transcript;

pub use scalar::Real;

/// Double-precision pure state; the protocols run on this.
pub type PureState = quantum::State<f64>;
/// Single-precision pure state.
pub type PureStateF32 = quantum::State<f32>;
/// Double-precision sum-product decoder.
pub type LdpcDecoder = fec::BpDecoder<f64>;
/// Single-precision sum-product decoder.
pub type LdpcDecoderF32 = fec::BpDecoder<f32>;

pub use channel::{ChannelModel, EveKind, EveStrategy, HopId};
pub use fec::LdpcCode;
pub use harness::{run_scenario, validate_scenario, RunReport, Scenario};
pub use qsdc::{QberEstimate, SessionOutcome, SessionStatus};
