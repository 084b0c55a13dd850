//! Format-preserving stream encryption of the 1000BASE-X 8b10b symbol flow.
//!
//! A bank of nine chaotic generator cells (skew tent map perturbed by a
//! 61-bit LFSR) yields one value in `0..267` per symbol; the cipher adds it
//! to the symbol's index in the 267-symbol alphabet, so ciphertext is always
//! a valid 8b10b symbol and the line rate is unchanged. Encryption is
//! switched in band with the `/X/` ordered set (`pcs_sync`); `link_sim`
//! drives two endpoints over a channel with bit errors.

pub mod cipher;
pub mod codec;
pub mod keystream;
pub mod link_sim;
pub mod pcs_sync;
pub mod stats;
pub mod stream;
pub mod symbol;

pub use symbol::Symbol;
