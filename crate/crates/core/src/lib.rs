//! Laser-induced bound-state (Stark) phases in high-order harmonic generation
//! from oriented polar molecules.
//!
//! The crate is organised bottom-up:
//!
//! * [`pulse`]: driving field, vector potential, focusing geometry, unit conversions.
//! * [`molecule`]: Stark-shifted orbital energy and effective ionization potential.
//! * [`trajectories`]: classical ionization/return pairs and the time/frequency map.
//! * [`starkphase`]: first- and second-order Stark phases in time and frequency form.
//! * [`lewenstein`]: strong-field-approximation dipole, spectra, phase extraction.
//! * [`macroprop`]: reduced macroscopic propagation, far-field filtering, radial averaging.
//! * [`config`], [`commands`], [`figures`], [`output`]: batch front-end used by the `stark-hhg` binary.
//!
//! All internal quantities are in atomic units unless a name says otherwise.

pub mod commands;
pub mod config;
pub mod error;
pub mod figures;
pub mod lewenstein;
pub mod macroprop;
pub mod molecule;
pub mod output;
pub mod pulse;
pub mod quadrature;
pub mod starkphase;
pub mod trajectories;
pub mod units;

pub use error::{Error, Result};
