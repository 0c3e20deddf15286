//! Added-noise budget from measured efficiency and noise visibility ratio.
//!
//! With `n_q = 1/2`, the efficiency referred to the amplifier input and the
//! NVR read
//!
//! ```text
//! η   = n_q / (n_q + n_spa + n_sys/G)
//! NVR = (n_sys + G(n_q + n_spa)) / (n_q + n_sys)
//! ```
//!
//! Eliminating `n_spa` gives `n_q + n_sys = G·n_q/(η·NVR)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_Q: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub g_spa: f64,
    pub nvr: f64,
    pub eta_corr: f64,
    pub n_q: f64,
    pub n_spa: f64,
    pub n_sys: f64,
}

impl NoiseBudget {
    /// Efficiency implied by the noise figures.
    pub fn efficiency(&self) -> f64 {
        self.n_q / (self.n_q + self.n_spa + self.n_sys / self.g_spa)
    }

    pub fn noise_visibility(&self) -> f64 {
        (self.n_sys + self.g_spa * (self.n_q + self.n_spa)) / (self.n_q + self.n_sys)
    }
}

fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn noise_budget_solve(g_spa_db: f64, nvr_db: f64, eta_corr: f64) -> Result<NoiseBudget> {
    if !(g_spa_db.is_finite() && g_spa_db > 0.0) {
        return Err(Error::Invalid(format!(
            "amplifier gain {g_spa_db} dB must be positive"
        )));
    }
    if !(nvr_db.is_finite() && nvr_db > 0.0) {
        return Err(Error::Invalid(format!("NVR {nvr_db} dB must be positive")));
    }
    if !(eta_corr > 0.0 && eta_corr <= 1.0) {
        return Err(Error::Invalid(format!(
            "efficiency {eta_corr} must lie in (0, 1]"
        )));
    }
    let g = from_db(g_spa_db);
    let nvr = from_db(nvr_db);
    let n_sys = g * N_Q / (eta_corr * nvr) - N_Q;
    if n_sys < 0.0 {
        return Err(Error::InconsistentMeasurement {
            quantity: "n_sys".into(),
            value: n_sys,
        });
    }
    let n_spa = N_Q / eta_corr - N_Q - n_sys / g;
    if n_spa < 0.0 {
        return Err(Error::InconsistentMeasurement {
            quantity: "n_spa".into(),
            value: n_spa,
        });
    }
    Ok(NoiseBudget {
        g_spa: g,
        nvr,
        eta_corr,
        n_q: N_Q,
        n_spa,
        n_sys,
    })
}

/// Extra loss of channel 1 relative to channel 2, `10·log10(η1/η2)` dB.
pub fn delta_a_db(eta1: f64, eta2: f64) -> Result<f64> {
    if !(eta1 > 0.0 && eta2 > 0.0) {
        return Err(Error::Invalid("efficiencies must be positive".into()));
    }
    Ok(10.0 * (eta1 / eta2).log10())
}

/// Efficiency of channel 2 referred to the amplifier input.
///
/// The loss ahead of the amplifier is taken as half the inter-channel loss
/// difference plus the circulator insertion loss (both dB, ≤ 0).
pub fn eta_at_amplifier_input(eta1: f64, eta2: f64, circulator_loss_db: f64) -> Result<f64> {
    let a2 = 0.5 * delta_a_db(eta1, eta2)? + circulator_loss_db;
    Ok(eta2 / from_db(a2))
}
