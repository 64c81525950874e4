//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod criteria;
pub mod dsp;
pub mod oracles;
pub mod toy;
