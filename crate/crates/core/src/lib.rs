//! Bit-exact posit and quire arithmetic, a posit-extended RV32IMF emulator,
//! and the accuracy and cycle study kernels built on top of them.

pub mod posit;
pub mod quire;
pub mod melodica;
pub mod isa;
pub mod emulator;
pub mod numerics;
pub mod programs;

pub use posit::{PositBits, PositConfig, UnpackedPosit};
pub use quire::{FusedOp, Quire};
