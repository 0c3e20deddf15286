//! Matching-network and pump-filter synthesis.
//!
//! The signal-port match is a two-pole coupled-resonator network whose
//! first pole is the array inductance itself. A series coupling capacitor
//! `cc` transforms the 50 Ω port up to `Z_in`; the second resonator
//! (`l2`, `c2`) sits behind it; `c12` is the capacitive J-inverter between
//! the poles; `c1` completes the first resonator with the array.
//!
//! ```text
//! port ── Cc ──┬──────┬── C12 ──┬─────┬── array (L_array ∥ −R_p)
//!              L2     C2        C1    │
//!              ⏚      ⏚         ⏚     ⏚
//! ```
//!
//! The pump-port filter is two shunt LC resonators joined by a series
//! capacitor, designed from an all-pole Chebyshev prototype and checked by
//! simulating it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netlist::{cascade, FrequencyGrid, LadderNetwork, LumpedElement};

/// Low-pass prototype coefficients of a two-pole network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChebyshevPrototype {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
}

impl ChebyshevPrototype {
    /// 0.1 dB ripple, two poles, 20 dB nominal gain (negative-resistance
    /// amplifier table).
    pub const RIPPLE_0P1_DB_N2: ChebyshevPrototype = ChebyshevPrototype {
        g1: 0.237197,
        g2: 0.135667,
        g3: 1.119170,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("g1", self.g1), ("g2", self.g2), ("g3", self.g3)] {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Invalid(format!(
                    "prototype {name} = {g} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Normalised negative resistance `Z0/g3` on the prototype port.
    pub fn normalized_resistance(&self, z0: f64) -> f64 {
        z0 / self.g3
    }
}

impl Default for ChebyshevPrototype {
    fn default() -> Self {
        Self::RIPPLE_0P1_DB_N2
    }
}

/// Shipped prototype tables, keyed by (ripple dB, poles, nominal gain dB).
pub const PROTOTYPE_TABLE: &[(f64, usize, f64, ChebyshevPrototype)] =
    &[(0.1, 2, 20.0, ChebyshevPrototype::RIPPLE_0P1_DB_N2)];

pub fn lookup_prototype(ripple_db: f64, poles: usize, gain_db: f64) -> Option<ChebyshevPrototype> {
    PROTOTYPE_TABLE
        .iter()
        .find(|(r, n, g, _)| {
            (*r - ripple_db).abs() < 1e-9 && *n == poles && (*g - gain_db).abs() < 1e-9
        })
        .map(|t| t.3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    #[serde(rename = "f0_hz")]
    pub f0: f64,
    /// Fractional bandwidth Δf/f0.
    #[serde(rename = "fractional_bw")]
    pub w: f64,
    #[serde(rename = "z0_ohm")]
    pub z0: f64,
    #[serde(rename = "cc_F")]
    pub cc: f64,
    #[serde(rename = "l_array_H")]
    pub l_array: f64,
    #[serde(default)]
    pub prototype: ChebyshevPrototype,
}

impl SynthesisSpec {
    /// Reference design: 9 GHz, w = 0.03, 50 Ω, 0.2 pF, 3.16 nH.
    pub fn reference_design() -> Self {
        Self {
            f0: 9e9,
            w: 0.03,
            z0: 50.0,
            cc: 0.2e-12,
            l_array: 3.16e-9,
            prototype: ChebyshevPrototype::RIPPLE_0P1_DB_N2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("f0_hz", self.f0),
            ("z0_ohm", self.z0),
            ("cc_F", self.cc),
            ("l_array_H", self.l_array),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Invalid(format!(
                    "synthesis.{name} = {v} must be positive"
                )));
            }
        }
        if !(self.w > 0.0 && self.w < 1.0) {
            return Err(Error::Invalid(format!(
                "synthesis.fractional_bw = {} must lie in (0, 1)",
                self.w
            )));
        }
        self.prototype.validate()
    }

    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.f0
    }

    /// Negative resistance the array must present across the first pole.
    ///
    /// The first resonator has reactance `Z1 = ω0·L_array` and must carry
    /// the prototype's external Q of `g1/w`, so `R_p = Z1·g1/w`. This is
    /// the array-node image of the prototype termination `Z0/g3`; its
    /// band-centre gain is `g_max(Z0/g3, Z0)`.
    pub fn design_negative_resistance(&self) -> f64 {
        self.omega0() * self.l_array * self.prototype.g1 / self.w
    }
}

/// Intermediate quantities of the matching synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchingIntermediates {
    pub q_in: f64,
    pub z_in: f64,
    pub z1: f64,
    pub z2: f64,
    pub j12: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchingNetworkValues {
    #[serde(rename = "l_array_H")]
    pub l_array: f64,
    #[serde(rename = "l2_H")]
    pub l2: f64,
    #[serde(rename = "cc_F")]
    pub cc: f64,
    #[serde(rename = "c12_F")]
    pub c12: f64,
    #[serde(rename = "c1_F")]
    pub c1: f64,
    #[serde(rename = "c2_F")]
    pub c2: f64,
}

impl MatchingNetworkValues {
    /// Nominal element values of the reference design.
    pub const REFERENCE: MatchingNetworkValues = MatchingNetworkValues {
        l_array: 3.16e-9,
        l2: 0.72e-9,
        cc: 0.2e-12,
        c12: 0.036e-12,
        c1: 0.057e-12,
        c2: 0.233e-12,
    };

    /// Ladder from the signal port to the array node. Port 2 is the array
    /// node and is terminated by the array immittance.
    pub fn ladder(&self, z0: f64) -> Result<LadderNetwork> {
        LadderNetwork::with_z0(
            vec![
                LumpedElement::series_c(self.cc)?,
                LumpedElement::shunt_l(self.l2)?,
                LumpedElement::shunt_c(self.c2)?,
                LumpedElement::series_c(self.c12)?,
                LumpedElement::shunt_c(self.c1)?,
            ],
            z0,
        )
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.l_array, self.l2, self.cc, self.c12, self.c1, self.c2]
    }

    /// Largest relative element change with respect to `other`.
    pub fn max_relative_change(&self, other: &MatchingNetworkValues) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max)
    }
}

/// Closed-form synthesis plus its intermediates.
pub fn synthesize_matching_detailed(
    spec: &SynthesisSpec,
) -> Result<(MatchingNetworkValues, MatchingIntermediates)> {
    spec.validate()?;
    let w0 = spec.omega0();
    let ChebyshevPrototype { g1, g2, g3 } = spec.prototype;

    let q_in = w0 * spec.z0 * spec.cc;
    let z_in = spec.z0 * (1.0 + q_in * q_in) / (q_in * q_in);
    let z2 = spec.w * z_in / (g3 * g2);
    let l2 = z2 / w0;
    let z1 = w0 * spec.l_array;
    let j12 = spec.w / (z1 * z2 * g1 * g2).sqrt();
    let c12 = j12 / w0;
    let c1 = 1.0 / (w0 * z1) - c12;
    let c2 = 1.0 / (w0 * z2) - c12 - spec.cc / (1.0 + q_in * q_in);

    for (name, v) in [("C1", c1), ("C2", c2)] {
        if v <= 0.0 {
            return Err(Error::Infeasible {
                element: name.into(),
                value: v,
                deficit: -v,
            });
        }
    }

    Ok((
        MatchingNetworkValues {
            l_array: spec.l_array,
            l2,
            cc: spec.cc,
            c12,
            c1,
            c2,
        },
        MatchingIntermediates {
            q_in,
            z_in,
            z1,
            z2,
            j12,
        },
    ))
}

pub fn synthesize_matching(spec: &SynthesisSpec) -> Result<MatchingNetworkValues> {
    synthesize_matching_detailed(spec).map(|(v, _)| v)
}

/// Pump-port filter elements. Resonator 3 faces the pump port, resonator 4
/// faces the array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpFilterValues {
    #[serde(rename = "l3_H")]
    pub l3: f64,
    #[serde(rename = "l4_H")]
    pub l4: f64,
    #[serde(rename = "c3_F")]
    pub c3: f64,
    #[serde(rename = "c4_F")]
    pub c4: f64,
    #[serde(rename = "c34_F")]
    pub c34: f64,
}

impl PumpFilterValues {
    /// Nominal pump-filter values of the reference design.
    pub const REFERENCE: PumpFilterValues = PumpFilterValues {
        l3: 0.072e-9,
        l4: 0.072e-9,
        c3: 0.247e-12,
        c4: 0.257e-12,
        c34: 0.153e-12,
    };

    /// Port 1 = pump port, port 2 = array node.
    pub fn ladder(&self, z0: f64) -> Result<LadderNetwork> {
        LadderNetwork::with_z0(
            vec![
                LumpedElement::shunt_l(self.l3)?,
                LumpedElement::shunt_c(self.c3)?,
                LumpedElement::series_c(self.c34)?,
                LumpedElement::shunt_c(self.c4)?,
                LumpedElement::shunt_l(self.l4)?,
            ],
            z0,
        )
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.l3, self.l4, self.c3, self.c4, self.c34]
    }
}

/// Standard all-pole Chebyshev low-pass g-values `[g1..gn, g_{n+1}]`.
pub fn chebyshev_g_values(order: usize, ripple_db: f64) -> Result<Vec<f64>> {
    if order == 0 {
        return Err(Error::Invalid("prototype order must be at least 1".into()));
    }
    if !(ripple_db.is_finite() && ripple_db > 0.0) {
        return Err(Error::Invalid(format!(
            "ripple {ripple_db} dB must be positive"
        )));
    }
    let n = order as f64;
    let beta = (1.0 / (ripple_db / (40.0 / std::f64::consts::LN_10)).tanh()).ln();
    let gamma = (beta / (2.0 * n)).sinh();
    let a: Vec<f64> = (1..=order)
        .map(|k| ((2 * k - 1) as f64 * PI / (2.0 * n)).sin())
        .collect();
    let b: Vec<f64> = (1..=order)
        .map(|k| gamma * gamma + (k as f64 * PI / n).sin().powi(2))
        .collect();
    let mut g = vec![2.0 * a[0] / gamma];
    for k in 1..order {
        let prev = g[k - 1];
        g.push(4.0 * a[k - 1] * a[k] / (b[k - 1] * prev));
    }
    g.push(if order % 2 == 1 {
        1.0
    } else {
        1.0 / (beta / 4.0).tanh().powi(2)
    });
    Ok(g)
}

/// Ratio of the 3 dB bandwidth to the ripple bandwidth of an all-pole
/// Chebyshev response.
pub fn chebyshev_3db_ratio(order: usize, ripple_db: f64) -> f64 {
    let eps = (10f64.powf(ripple_db / 10.0) - 1.0).sqrt();
    if eps >= 1.0 {
        1.0
    } else {
        ((1.0 / eps).acosh() / order as f64).cosh()
    }
}

/// Design knobs of the pump-port filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpFilterSpec {
    #[serde(rename = "center_hz")]
    pub center: f64,
    /// Target 3 dB passband width.
    #[serde(rename = "passband_hz")]
    pub passband: f64,
    #[serde(rename = "z0_ohm")]
    pub z0: f64,
    /// Passband ripple of the Chebyshev prototype.
    #[serde(default = "PumpFilterSpec::default_ripple")]
    pub ripple_db: f64,
}

impl PumpFilterSpec {
    pub fn new(center: f64, passband: f64, z0: f64) -> Self {
        Self {
            center,
            passband,
            z0,
            ripple_db: Self::default_ripple(),
        }
    }

    fn default_ripple() -> f64 {
        2.0
    }
}

/// Simulated figures of a synthesized pump filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpFilterCheck {
    pub peak_hz: f64,
    pub peak_s21_db: f64,
    pub lower_3db_hz: f64,
    pub upper_3db_hz: f64,
}

impl PumpFilterCheck {
    pub fn bw_3db(&self) -> f64 {
        self.upper_3db_hz - self.lower_3db_hz
    }

    pub fn passband_center(&self) -> f64 {
        0.5 * (self.upper_3db_hz + self.lower_3db_hz)
    }
}

/// Simulate a pump filter on a dense grid around `center` and locate its
/// transmission peak and 3 dB passband.
pub fn characterize_pump_filter(
    values: &PumpFilterValues,
    z0: f64,
    center: f64,
) -> Result<PumpFilterCheck> {
    let grid = FrequencyGrid::linspace(0.25 * center, 2.5 * center, 9001)?;
    let resp = cascade(&values.ladder(z0)?, &grid)?;
    let db: Vec<f64> = resp.s21.iter().map(|s| 20.0 * s.norm().log10()).collect();
    let (ipk, &peak) = db
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    let f = grid.points();
    let level = peak - 3.0;
    let mut lo = ipk;
    while lo > 0 && db[lo] >= level {
        lo -= 1;
    }
    let mut hi = ipk;
    while hi + 1 < db.len() && db[hi] >= level {
        hi += 1;
    }
    let cross = |i: usize, j: usize| {
        let t = (level - db[i]) / (db[j] - db[i]);
        f[i] + t * (f[j] - f[i])
    };
    if db[lo] >= level || db[hi] >= level {
        return Err(Error::Domain(
            "3 dB edges lie outside the characterization window".into(),
        ));
    }
    Ok(PumpFilterCheck {
        peak_hz: f[ipk],
        peak_s21_db: peak,
        lower_3db_hz: cross(lo, lo + 1),
        upper_3db_hz: cross(hi - 1, hi),
    })
}

/// Two-pole capacitively coupled shunt-resonator bandpass.
///
/// The prototype is rescaled so its 3 dB width equals `passband`; the
/// resonators are connected directly across the ports, so each carries the
/// external Q of its end of the prototype.
pub fn synthesize_pump_filter(
    spec: &PumpFilterSpec,
) -> Result<(PumpFilterValues, PumpFilterCheck)> {
    let PumpFilterSpec {
        center,
        passband,
        z0,
        ripple_db,
    } = *spec;
    if !(center.is_finite() && center > 0.0 && passband > 0.0 && passband < center) {
        return Err(Error::Invalid(format!(
            "pump filter needs 0 < passband ({passband}) < center ({center})"
        )));
    }
    if !(z0.is_finite() && z0 > 0.0) {
        return Err(Error::Invalid(format!(
            "pump filter z0 = {z0} must be positive"
        )));
    }
    let g = chebyshev_g_values(2, ripple_db)?;
    let (g1, g2, g3) = (g[0], g[1], g[2]);
    let w = passband / chebyshev_3db_ratio(2, ripple_db) / center;
    let w0 = 2.0 * PI * center;

    // Resonator susceptance slopes from the external Qs.
    let b3 = g1 / (w * z0);
    let b4 = g2 * g3 / (w * z0);
    let j34 = w * (b3 * b4 / (g1 * g2)).sqrt();
    let c34 = j34 / w0;
    let values = PumpFilterValues {
        l3: 1.0 / (w0 * b3),
        l4: 1.0 / (w0 * b4),
        c3: b3 / w0 - c34,
        c4: b4 / w0 - c34,
        c34,
    };
    for (name, v) in [
        ("L3", values.l3),
        ("L4", values.l4),
        ("C3", values.c3),
        ("C4", values.c4),
        ("C34", values.c34),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Infeasible {
                element: name.into(),
                value: v,
                deficit: -v,
            });
        }
    }

    let check = characterize_pump_filter(&values, z0, center)?;
    if (check.passband_center() - center).abs() > 0.05 * center
        || (check.peak_hz - center).abs() > 0.05 * center
    {
        return Err(Error::Infeasible {
            element: "passband centre".into(),
            value: check.peak_hz,
            deficit: check.peak_hz - center,
        });
    }
    if (check.bw_3db() - passband).abs() > 0.25 * passband {
        return Err(Error::Infeasible {
            element: "3 dB passband".into(),
            value: check.bw_3db(),
            deficit: check.bw_3db() - passband,
        });
    }
    Ok((values, check))
}

/// Re-synthesize the match with the array inductance renormalised by the
/// pump filter's array-side inductor until the elements stop moving.
///
/// Returns the converged values (with `l_array` holding the effective
/// first-pole inductance) and the number of synthesis passes taken.
pub fn corenormalize(
    spec: &SynthesisSpec,
    pump_filter: &PumpFilterValues,
    tol: f64,
    max_iter: usize,
) -> Result<(MatchingNetworkValues, usize)> {
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance {tol} must be positive")));
    }
    let mut previous = synthesize_matching(spec)?;
    for iteration in 1..=max_iter {
        let effective = SynthesisSpec {
            l_array: spec.l_array + pump_filter.l4,
            ..*spec
        };
        let next = synthesize_matching(&effective)?;
        if next.max_relative_change(&previous) < tol {
            return Ok((next, iteration));
        }
        previous = next;
        if iteration == max_iter {
            return Err(Error::NonConvergence {
                iterations: max_iter,
                detail: format!("last iterates {previous:?} / {next:?}"),
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        detail: format!("max_iter = 0; initial synthesis {previous:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn intermediates_of_reference_design() {
        let (_, m) = synthesize_matching_detailed(&SynthesisSpec::reference_design()).unwrap();
        // 2π·9e9·50·0.2e-12
        assert_relative_eq!(m.q_in, 0.5654866776461628, max_relative = 1e-12);
        assert_relative_eq!(m.z_in, 206.35985129990394, max_relative = 1e-10);
    }

    #[test]
    fn vanishing_bandwidth_limit() {
        let mut spec = SynthesisSpec::reference_design();
        let base = synthesize_matching(&spec).unwrap();
        spec.w = 1e-6;
        let tiny = synthesize_matching(&spec).unwrap();
        // Z2 ∝ w, so the inverter capacitance falls as √w and the first
        // pole decouples onto the bare array resonance.
        assert_relative_eq!(
            tiny.c12 / base.c12,
            (1e-6f64 / 0.03).sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(tiny.l2 / base.l2, 1e-6 / 0.03, max_relative = 1e-12);
        let w0 = spec.omega0();
        assert_relative_eq!(tiny.c1, 1.0 / (w0 * w0 * spec.l_array), max_relative = 1e-2);
    }

    #[test]
    fn infeasible_c1_is_reported() {
        // A huge array inductance leaves no room for the inverter.
        let mut spec = SynthesisSpec::reference_design();
        spec.w = 0.9;
        spec.l_array = 200e-9;
        let err = synthesize_matching(&spec).unwrap_err();
        match err {
            Error::Infeasible {
                element,
                value,
                deficit,
            } => {
                assert!(element == "C1" || element == "C2");
                assert!(value <= 0.0);
                assert_eq!(deficit, -value);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        let mut spec = SynthesisSpec::reference_design();
        spec.w = 1.0;
        assert!(synthesize_matching(&spec).is_err());
        spec = SynthesisSpec::reference_design();
        spec.cc = 0.0;
        assert!(synthesize_matching(&spec).is_err());
    }

    #[test]
    fn prototype_table_lookup() {
        assert_eq!(
            lookup_prototype(0.1, 2, 20.0),
            Some(ChebyshevPrototype::default())
        );
        assert_eq!(lookup_prototype(0.5, 2, 20.0), None);
    }

    #[test]
    fn chebyshev_g_values_match_published_tables() {
        // Matthaei et al. tables, 0.1 dB and 0.5 dB ripple.
        let g = chebyshev_g_values(2, 0.1).unwrap();
        assert_relative_eq!(g[0], 0.8431, epsilon = 1e-4);
        assert_relative_eq!(g[1], 0.6220, epsilon = 1e-4);
        assert_relative_eq!(g[2], 1.3554, epsilon = 1e-4);
        let g = chebyshev_g_values(3, 0.5).unwrap();
        assert_relative_eq!(g[0], 1.5963, epsilon = 1e-4);
        assert_relative_eq!(g[1], 1.0967, epsilon = 1e-4);
        assert_relative_eq!(g[2], 1.5963, epsilon = 1e-4);
        assert_eq!(g[3], 1.0);
    }

    #[test]
    fn corenormalize_without_pump_inductor_is_identity() {
        let spec = SynthesisSpec::reference_design();
        let pf = PumpFilterValues {
            l4: 0.0,
            ..PumpFilterValues::REFERENCE
        };
        let (v, it) = corenormalize(&spec, &pf, 1e-12, 10).unwrap();
        assert_eq!(it, 1);
        assert_eq!(v, synthesize_matching(&spec).unwrap());
    }

    #[test]
    fn corenormalize_with_table_inductor() {
        let spec = SynthesisSpec::reference_design();
        let base = synthesize_matching(&spec).unwrap();
        let (v, it) = corenormalize(&spec, &PumpFilterValues::REFERENCE, 1e-12, 10).unwrap();
        assert!(it <= 3, "took {it} iterations");
        assert_relative_eq!(v.l_array, 3.232e-9, max_relative = 1e-12);
        assert!(v.max_relative_change(&base) < 0.03);
        assert!(matches!(
            corenormalize(&spec, &PumpFilterValues::REFERENCE, 1e-12, 1),
            Err(Error::NonConvergence { .. })
        ));
        assert!(corenormalize(&spec, &PumpFilterValues::REFERENCE, 0.0, 5).is_err());
    }

    #[test]
    fn pump_filter_rejects_bad_design() {
        assert!(synthesize_pump_filter(&PumpFilterSpec::new(20e9, 25e9, 50.0)).is_err());
        assert!(synthesize_pump_filter(&PumpFilterSpec::new(20e9, 0.0, 50.0)).is_err());
    }
}
