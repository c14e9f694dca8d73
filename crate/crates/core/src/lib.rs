//! Neuromorphic split computing over multipath channels.
//!
//! Spiking encoders on each device map sensed spike rasters to impulse-radio
//! pulses, which cross a multiple-access multipath channel to a spiking
//! decoder whose synaptic weights are rescaled by a pilot-conditioned
//! hypernetwork. A frame-based digital pipeline (source coding, LDPC, BPSK,
//! slotted ALOHA, an ANN classifier) serves as the baseline.
//!
//! The crate is `no_std` with `alloc`. File formats, configuration and the
//! command-line harness live in the `neurocomm` crate.

#![no_std]

extern crate alloc;

pub mod baseline;
pub mod channel;
pub mod data;
pub mod error;
pub mod exec;
pub mod hypernet;
pub mod modem;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod snn;
pub mod trainer;

pub use error::{Error, Result};
pub use raster::SpikeRaster;
