//! Security analysis toolkit for the loss-tolerant three-state QKD protocol
//! when the receiver's two single-photon detectors do not share the same
//! efficiency operator.
//!
//! The crate is organised around the stages of the analysis:
//!
//! - [`qstate`]: qubit states on the XZ plane of the Bloch sphere, the flawed
//!   signal states and the virtual X states built from them.
//! - [`detector`]: detector characterisation, from dead-time count-rate fits
//!   to the 2x2 efficiency operators obtained by polarisation tomography.
//! - [`security`]: the key-rate machinery itself, i.e. the Gram
//!   diagonalisation, the Procrustean filter matrix, the lambda operator
//!   bounds (analytical and optimised), the transfer-coefficient inversion
//!   and the phase-error/key-rate formulas.
//! - [`channel`]: asymptotic detection statistics for a lossy channel with
//!   dark counts and a polarisation-steering eavesdropper.
//! - [`proofcheck`]: finite-dimensional brute-force verification of the
//!   operator identities and inequalities the analysis relies on.
//! - [`cli`]: configuration handling and the batch subcommands exposed by
//!   the `ltdem` binary.

pub mod channel;
pub mod cli;
pub mod detector;
pub mod linalg;
pub mod proofcheck;
pub mod qstate;
pub mod security;
