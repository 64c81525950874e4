//! Walking-human FMCW radar scene simulator.
//!
//! A subject is a torso plus four limb point scatterers whose radial
//! velocities are sinusoidally modulated around the torso speed. A room
//! ([`DomainEnv`]) adds static clutter, delayed multipath copies of the body
//! return, receiver noise and a sensor gain. Everything is a pure function of
//! its inputs and explicit seeds.

mod env;
mod profile;
mod radar;
mod walk;

pub use env::{make_domain_env, ClutterReflector, DomainEnv, DomainPreset, MultipathPath};
pub use profile::{synth_subject_profile, synth_roster, BodyPart, GaitProfile, LimbScatterer, RosterConfig};
pub use radar::{BeatSignal, BeatSignalHeader, RadarConfig, SPEED_OF_LIGHT};
pub use walk::{simulate_walk, Direction, Walk, WalkConfig};
