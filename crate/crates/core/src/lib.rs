//! Electrochemical-thermal simulation of a pouch cell preheated by a PTC film
//! and bidirectional current pulses, with a safety supervisor, an RL
//! environment and an MPO trainer.

pub mod electrochem;
pub mod env;
pub mod error;
pub mod experiments;
pub mod io;
pub mod ocp;
pub mod params;
pub mod ptc;
pub mod rl;
pub mod supervisor;
pub mod thermal;

pub use error::{Error, Result};
pub use params::{DfnParameters, Electrode};
