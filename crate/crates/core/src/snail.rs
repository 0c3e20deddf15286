//! Pumped SNAIL-array immittance.
//!
//! Under a pump near twice the signal frequency the array behaves as its
//! linear inductance in parallel with a negative resistance,
//!
//! ```text
//! Y(ω_s) = 1/(jω_s L) − Z0·C1 / (L·|c3·φp/2|²)  =  1/(jω_s L) − 1/R_p
//! ```
//!
//! The pump enters only through the scalar `c3_phi_p` = |c3·φp/2|.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Junction-size ratio of the fabricated SNAILs (metadata; not consumed).
pub const SNAIL_JUNCTION_RATIO: f64 = 0.1;
/// Large-junction critical current in A (metadata; not consumed).
pub const SNAIL_CRITICAL_CURRENT_A: f64 = 7e-6;
/// Number of SNAILs in the array (metadata; not consumed).
pub const SNAIL_COUNT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpedArrayParams {
    /// Linear array inductance, H.
    #[serde(rename = "l_array_H")]
    pub l_array: f64,
    /// |c3·φp/2|, dimensionless.
    pub c3_phi_p: f64,
    #[serde(rename = "z0_ohm")]
    pub z0: f64,
    /// First-pole capacitance, F.
    #[serde(rename = "c1_F")]
    pub c1: f64,
    #[serde(rename = "pump_freq_hz")]
    pub pump_freq: f64,
}

impl PumpedArrayParams {
    pub fn new(l_array: f64, c3_phi_p: f64, z0: f64, c1: f64, pump_freq: f64) -> Result<Self> {
        let p = Self {
            l_array,
            c3_phi_p,
            z0,
            c1,
            pump_freq,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_array_H", self.l_array),
            ("z0_ohm", self.z0),
            ("c1_F", self.c1),
            ("pump_freq_hz", self.pump_freq),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Invalid(format!(
                    "pump.{name} = {v} must be positive"
                )));
            }
        }
        if !(self.c3_phi_p.is_finite() && self.c3_phi_p >= 0.0) {
            return Err(Error::Invalid(format!(
                "pump.c3_phi_p = {} must be non-negative",
                self.c3_phi_p
            )));
        }
        Ok(())
    }

    /// Pump strength that realises a given negative-resistance magnitude.
    pub fn with_negative_resistance(self, r_p: f64) -> Result<Self> {
        if !(r_p.is_finite() && r_p > 0.0) {
            return Err(Error::Domain(format!("R_p = {r_p} must be positive")));
        }
        Ok(Self {
            c3_phi_p: (r_p * self.z0 * self.c1 / self.l_array).sqrt(),
            ..self
        })
    }

    pub fn with_inductance(self, l_array: f64) -> Self {
        Self { l_array, ..self }
    }

    /// |R_p| = L·|c3 φp|²/(4 Z0 C1); `None` with the pump off.
    pub fn negative_resistance(&self) -> Option<f64> {
        if self.c3_phi_p == 0.0 {
            None
        } else {
            Some(self.l_array * self.c3_phi_p * self.c3_phi_p / (self.z0 * self.c1))
        }
    }

    /// Real part of the array admittance, −1/R_p (zero with the pump off).
    pub fn conductance(&self) -> f64 {
        match self.negative_resistance() {
            Some(r_p) => -1.0 / r_p,
            None => 0.0,
        }
    }
}

/// Magnitude of a negative resistance; never equal to the port impedance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeResistance {
    pub r_p: f64,
}

impl NegativeResistance {
    pub fn new(r_p: f64, z0: f64) -> Result<Self> {
        if !(r_p.is_finite() && r_p > 0.0) {
            return Err(Error::Invalid(format!("R_p = {r_p} must be positive")));
        }
        if r_p == z0 {
            return Err(Error::Domain(format!(
                "R_p = Z0 = {z0} is the oscillation threshold"
            )));
        }
        Ok(Self { r_p })
    }
}

/// Complex admittance of the pumped array at angular frequency `omega_s`.
pub fn array_admittance(p: &PumpedArrayParams, omega_s: f64) -> Result<Complex64> {
    if !(omega_s.is_finite() && omega_s > 0.0) {
        return Err(Error::Domain(format!("ω_s = {omega_s} must be positive")));
    }
    let susceptance = -1.0 / (omega_s * p.l_array);
    Ok(Complex64::new(p.conductance(), susceptance))
}

/// Which root of the gain equation to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// R_p > Z0.
    Above,
    /// R_p < Z0.
    Below,
}

/// Peak reflection gain |(−R − Z0)/(−R + Z0)|² of a bare negative resistor.
pub fn g_max(r_p: f64, z0: f64) -> f64 {
    let r = (r_p + z0) / (r_p - z0);
    r * r
}

pub fn g_max_db(r_p: f64, z0: f64) -> f64 {
    10.0 * g_max(r_p, z0).log10()
}

/// Negative resistance whose bare reflection gain equals `g_target_db`.
pub fn rp_for_target_gain(g_target_db: f64, z0: f64, branch: Branch) -> Result<NegativeResistance> {
    if !(g_target_db.is_finite() && g_target_db > 0.0) {
        return Err(Error::Domain(format!(
            "target gain {g_target_db} dB has no finite negative-resistance solution"
        )));
    }
    if !(z0.is_finite() && z0 > 0.0) {
        return Err(Error::Invalid(format!("z0 = {z0} must be positive")));
    }
    // |(R+z0)/(R−z0)| = m  =>  R = z0(m+1)/(m−1) above, z0(m−1)/(m+1) below
    let m = 10f64.powf(g_target_db / 20.0);
    let r_p = match branch {
        Branch::Above => z0 * (m + 1.0) / (m - 1.0),
        Branch::Below => z0 * (m - 1.0) / (m + 1.0),
    };
    NegativeResistance::new(r_p, z0)
}

/// Stark-shift renormalised inductance `L·(1 + k·P)`.
///
/// `stark_coeff` is the fractional inductance shift per watt of
/// circulating power.
pub fn renormalized_inductance(
    p: &PumpedArrayParams,
    circulating_power: f64,
    stark_coeff: f64,
) -> Result<f64> {
    if !(circulating_power.is_finite() && circulating_power >= 0.0) {
        return Err(Error::Domain(format!(
            "circulating power {circulating_power} W must be non-negative"
        )));
    }
    if !(stark_coeff.is_finite() && stark_coeff >= 0.0) {
        return Err(Error::Domain(format!(
            "Stark coefficient {stark_coeff} 1/W must be non-negative"
        )));
    }
    Ok(p.l_array * (1.0 + stark_coeff * circulating_power))
}
