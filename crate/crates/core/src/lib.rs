//! Sensorless field-oriented control of a surface-mount permanent-magnet
//! synchronous motor.
//!
//! The crate holds the pure numerical parts: reference-frame transforms, the
//! motor model, the cascaded PI controllers and their gain synthesis, the
//! sliding-mode position/speed observer, a fixed-step Bogacki-Shampine
//! simulation engine and step-response metrics. It is `no_std` and only needs
//! an allocator for run logs.

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod control;
pub mod engine;
mod error;
pub mod frames;
pub mod observer;
pub mod ode;
pub mod plant;

pub use error::{Error, Result};
