//! Parametric MAC abstraction.
//!
//! A hop costs its serialization time, a fixed channel-access delay and a
//! contention penalty proportional to the number of in-range neighbors that
//! are transmitting when the hop starts. Queueing is not modeled here: each
//! node sends one frame at a time and the event loop holds the rest.
//!
//! Per-hop success is Bernoulli with probability
//! `base / (1 + distance_penalty * (d / range)^2)`, so longer links, and
//! extended-range links in particular, fail more often.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacModel {
    pub bit_rate_bps: f64,
    pub access_delay_s: f64,
    pub contention_delay_s: f64,
    pub success_base: f64,
    pub distance_penalty: f64,
}

impl Default for MacModel {
    fn default() -> Self {
        MacModel {
            bit_rate_bps: 1e6,
            access_delay_s: 0.5e-3,
            contention_delay_s: 0.2e-3,
            success_base: 0.95,
            distance_penalty: 0.2,
        }
    }
}

impl MacModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.bit_rate_bps > 0.0 && self.bit_rate_bps.is_finite()) {
            return Err(format!(
                "bit_rate_bps must be positive, got {}",
                self.bit_rate_bps
            ));
        }
        if [self.access_delay_s, self.contention_delay_s]
            .iter()
            .any(|x| x.is_nan() || *x < 0.0)
        {
            return Err("MAC delays must be non-negative".into());
        }
        if !(self.success_base > 0.0 && self.success_base <= 1.0) {
            return Err(format!(
                "link_success_base must lie in (0, 1], got {}",
                self.success_base
            ));
        }
        if !(self.distance_penalty >= 0.0 && self.distance_penalty.is_finite()) {
            return Err(format!(
                "link_distance_penalty must be >= 0, got {}",
                self.distance_penalty
            ));
        }
        Ok(())
    }

    pub fn transmission_time(&self, bits: u64) -> f64 {
        bits as f64 / self.bit_rate_bps
    }

    /// Time from the start of a hop until the receiver holds the frame.
    pub fn hop_delay(&self, bits: u64, active_contenders: usize) -> f64 {
        self.transmission_time(bits)
            + self.access_delay_s
            + self.contention_delay_s * active_contenders as f64
    }

    pub fn success_probability(&self, distance: f64, radio_range: f64) -> f64 {
        let r = distance / radio_range;
        self.success_base / (1.0 + self.distance_penalty * r * r)
    }
}
