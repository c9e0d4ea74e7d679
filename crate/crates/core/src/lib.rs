//! Planar switching affine systems: two affine dynamics `ẋ = A·x + b` that
//! take turns on either side of a line `C·x = d`.
//!
//! The crate covers the whole loop around such oscillators:
//!
//! * [`flow`] evaluates each mode in closed form,
//! * [`simulate`] runs the hybrid system with exact switching times and
//!   extracts limit cycles, amplitudes and frequencies,
//! * [`verify`] checks the sufficient conditions for a unique cycle and
//!   certifies global stability through return-map contraction,
//! * [`design`] synthesises a system from a desired cycle,
//! * [`identify`] recovers a system from measured periodic data,
//! * [`refosc`] generates data from a relaxation oscillator,
//! * [`cli`] ties everything together behind the `psas` binary.

pub mod cli;
pub mod design;
pub mod error;
pub mod flow;
pub mod identify;
pub mod linalg;
pub mod model;
pub mod reference;
pub mod refosc;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{EigenDecomp, Mat2, Vec2};
pub use model::{AffineMode, ModeId, Psas, SwitchingLine};
