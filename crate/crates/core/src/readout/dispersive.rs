//! Steady-state dispersive response of a qubit-coupled readout resonator.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates are angular (rad/s). `chi` is the total g–e pull; each state sits
/// `∓χ/2` from the bare resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersiveSystem {
    pub readout_freq_hz: f64,
    pub kappa: f64,
    pub kappa_ext: f64,
    pub chi: f64,
    pub t1_s: f64,
    #[serde(default)]
    pub drive_detuning: f64,
}

impl DispersiveSystem {
    /// Overcoupled system from lab-frame parameters (MHz, µs).
    pub fn from_mhz(readout_freq_hz: f64, kappa_mhz: f64, chi_mhz: f64, t1_us: f64) -> Self {
        let w = |mhz: f64| 2.0 * PI * mhz * 1e6;
        Self {
            readout_freq_hz,
            kappa: w(kappa_mhz),
            kappa_ext: w(kappa_mhz),
            chi: w(chi_mhz),
            t1_s: t1_us * 1e-6,
            drive_detuning: 0.0,
        }
    }

    /// First device in the two-qubit experiment.
    pub fn system1() -> Self {
        Self::from_mhz(9.0982e9, 1.9, -1.8, 75.0)
    }

    /// Second device in the two-qubit experiment.
    pub fn system2() -> Self {
        Self::from_mhz(9.0350e9, 6.6, -1.3, 82.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_ext > 0.0 && self.kappa_ext <= self.kappa && self.kappa.is_finite()) {
            return Err(Error::Invalid(format!(
                "need 0 < kappa_ext ({}) <= kappa ({})",
                self.kappa_ext, self.kappa
            )));
        }
        if !(self.t1_s > 0.0) {
            return Err(Error::Invalid(format!(
                "t1_s = {} must be positive",
                self.t1_s
            )));
        }
        if !(self.chi.is_finite()
            && self.drive_detuning.is_finite()
            && self.readout_freq_hz.is_finite())
        {
            return Err(Error::Invalid(
                "chi, detuning and readout frequency must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Complex decay rate `κ/2 + i·δ` for the qubit in `excited` or not.
    pub fn lambda(&self, excited: bool) -> Complex64 {
        let half = 0.5 * self.chi;
        let delta = if excited {
            self.drive_detuning + half
        } else {
            self.drive_detuning - half
        };
        Complex64::new(0.5 * self.kappa, delta)
    }

    /// Drive amplitude (√(photons/s)) whose steady state holds `n` photons
    /// with the qubit in the ground state.
    pub fn drive_for_photons(&self, n: f64) -> f64 {
        n.max(0.0).sqrt() * self.lambda(false).norm() / self.kappa_ext.sqrt()
    }
}

/// Steady-state pointer states `(α_g, α_e)`.
pub fn pointer_states(s: &DispersiveSystem, drive_amp: f64) -> (Complex64, Complex64) {
    let a = s.kappa_ext.sqrt() * drive_amp;
    (a / s.lambda(false), a / s.lambda(true))
}

/// Measurement-induced dephasing `(κ/2)|α_g − α_e|²`.
pub fn dephasing_rate(s: &DispersiveSystem, drive_amp: f64) -> f64 {
    let (g, e) = pointer_states(s, drive_amp);
    0.5 * s.kappa * (g - e).norm_sqr()
}

/// Steady-state measurement rate `2ηκ_ext|α_g − α_e|²`.
pub fn measurement_rate(s: &DispersiveSystem, drive_amp: f64, eta: f64) -> f64 {
    let (g, e) = pointer_states(s, drive_amp);
    2.0 * eta * s.kappa_ext * (g - e).norm_sqr()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub eta: f64,
    /// Present when `κ_ext < κ`, where the identity does not hold.
    pub warning: Option<String>,
}

/// `η = M/(4Γ_φ)` from a measured rate at the given drive.
pub fn efficiency(
    s: &DispersiveSystem,
    drive_amp: f64,
    measurement_rate: f64,
) -> Result<Efficiency> {
    let gamma = dephasing_rate(s, drive_amp);
    if gamma == 0.0 {
        return Err(Error::Domain(
            "no dephasing at this drive; efficiency undefined".into(),
        ));
    }
    let warning = (s.kappa_ext < s.kappa).then(|| {
        format!(
            "kappa_ext/kappa = {:.4}; M/(4Γφ) assumes an overcoupled resonator",
            s.kappa_ext / s.kappa
        )
    });
    Ok(Efficiency {
        eta: measurement_rate / (4.0 * gamma),
        warning,
    })
}
