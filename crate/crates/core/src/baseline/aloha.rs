//! Slotted ALOHA access: every device transmits independently with
//! probability `p`, and a slot is delivered only without collision.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlohaOutcome {
    pub transmit: Vec<bool>,
    /// The lone transmitter, if exactly one device transmitted.
    pub delivered: Option<usize>,
}

pub fn aloha_round<R: Rng + ?Sized>(devices: usize, p: f64, rng: &mut R) -> Result<AlohaOutcome> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config("transmit probability must lie in [0, 1]"));
    }
    let transmit: Vec<bool> = (0..devices).map(|_| rng.random_bool(p)).collect();
    let mut active = transmit.iter().enumerate().filter(|(_, &t)| t).map(|(k, _)| k);
    let delivered = match (active.next(), active.next()) {
        (Some(k), None) => Some(k),
        _ => None,
    };
    Ok(AlohaOutcome { transmit, delivered })
}
