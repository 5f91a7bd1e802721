//! Keller–Segel chemotaxis in two dimensions through its McKean–Vlasov
//! representation: closed-form kernel and constant algebra, a spectral
//! solver for the mild system, and a memory-carrying particle system.

pub mod analysis;
pub mod cli;
pub mod compare;
pub mod config;
pub mod constants;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod numerics;
pub mod particles;
pub mod pde;
pub mod special;

pub use error::{Error, Result};
