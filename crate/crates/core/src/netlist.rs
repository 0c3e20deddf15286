//! Lumped-element ladder two-ports.
//!
//! A [`LadderNetwork`] is an ordered list of series and shunt elements from
//! port 1 to port 2. Every element becomes an ABCD (chain) matrix; the chain
//! product gives the network, from which S-parameters and terminated
//! reflection coefficients are derived. Resistors may be negative, which is
//! how the pumped array's gain enters a circuit.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const J: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative threshold below which a reflection denominator counts as a pole.
pub const POLE_THRESHOLD: f64 = 1e-12;

/// Strictly increasing list of positive frequencies in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("frequency grid is empty".into()));
        }
        if let Some(bad) = points.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(Error::Invalid(format!(
                "frequency grid point {bad} is not a positive finite value"
            )));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(format!(
                "frequency grid not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { points })
    }

    /// `n` evenly spaced points from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("grid needs at least one point".into()));
        }
        if n == 1 {
            return Self::new(vec![start]);
        }
        let step = (stop - start) / (n - 1) as f64;
        Self::new((0..n).map(|i| start + step * i as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for FrequencyGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FrequencyGrid> for Vec<f64> {
    fn from(g: FrequencyGrid) -> Self {
        g.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementKind {
    #[serde(rename = "L")]
    Inductor,
    #[serde(rename = "C")]
    Capacitor,
    #[serde(rename = "R")]
    Resistor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Series,
    Shunt,
}

/// One ladder rung. Values are SI: henry, farad, ohm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ElementRecord", into = "ElementRecord")]
pub struct LumpedElement {
    kind: ElementKind,
    topology: Topology,
    value: f64,
}

impl LumpedElement {
    /// Reactive values must be non-negative (zero is the degenerate
    /// identity case); resistors must be non-zero but may be negative.
    pub fn new(kind: ElementKind, topology: Topology, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Invalid(format!(
                "{kind:?} value {value} is not finite"
            )));
        }
        match kind {
            ElementKind::Inductor | ElementKind::Capacitor if value < 0.0 => Err(Error::Invalid(
                format!("{kind:?} value {value} must be non-negative"),
            )),
            ElementKind::Resistor if value == 0.0 => {
                Err(Error::Invalid("resistor value must be non-zero".into()))
            }
            _ => Ok(Self {
                kind,
                topology,
                value,
            }),
        }
    }

    pub fn series_l(h: f64) -> Result<Self> {
        Self::new(ElementKind::Inductor, Topology::Series, h)
    }
    pub fn shunt_l(h: f64) -> Result<Self> {
        Self::new(ElementKind::Inductor, Topology::Shunt, h)
    }
    pub fn series_c(f: f64) -> Result<Self> {
        Self::new(ElementKind::Capacitor, Topology::Series, f)
    }
    pub fn shunt_c(f: f64) -> Result<Self> {
        Self::new(ElementKind::Capacitor, Topology::Shunt, f)
    }
    pub fn series_r(ohm: f64) -> Result<Self> {
        Self::new(ElementKind::Resistor, Topology::Series, ohm)
    }
    pub fn shunt_r(ohm: f64) -> Result<Self> {
        Self::new(ElementKind::Resistor, Topology::Shunt, ohm)
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }
    pub fn topology(&self) -> Topology {
        self.topology
    }
    pub fn value(&self) -> f64 {
        self.value
    }

    fn is_reactive(&self) -> bool {
        self.kind != ElementKind::Resistor
    }
}

/// Wire form of an element: `{"kind":"L","topology":"series","value_H":3.16e-9}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementRecord {
    kind: ElementKind,
    topology: Topology,
    #[serde(rename = "value_H", default, skip_serializing_if = "Option::is_none")]
    value_h: Option<f64>,
    #[serde(rename = "value_F", default, skip_serializing_if = "Option::is_none")]
    value_f: Option<f64>,
    #[serde(rename = "value_ohm", default, skip_serializing_if = "Option::is_none")]
    value_ohm: Option<f64>,
}

impl TryFrom<ElementRecord> for LumpedElement {
    type Error = Error;
    fn try_from(r: ElementRecord) -> Result<Self> {
        let (wanted, key) = match r.kind {
            ElementKind::Inductor => (r.value_h, "value_H"),
            ElementKind::Capacitor => (r.value_f, "value_F"),
            ElementKind::Resistor => (r.value_ohm, "value_ohm"),
        };
        let extra = [r.value_h, r.value_f, r.value_ohm]
            .iter()
            .filter(|v| v.is_some())
            .count();
        let value = wanted
            .ok_or_else(|| Error::Invalid(format!("{:?} element requires `{key}`", r.kind)))?;
        if extra != 1 {
            return Err(Error::Invalid(format!(
                "{:?} element must carry only `{key}`",
                r.kind
            )));
        }
        LumpedElement::new(r.kind, r.topology, value)
    }
}

impl From<LumpedElement> for ElementRecord {
    fn from(e: LumpedElement) -> Self {
        let mut r = ElementRecord {
            kind: e.kind,
            topology: e.topology,
            value_h: None,
            value_f: None,
            value_ohm: None,
        };
        match e.kind {
            ElementKind::Inductor => r.value_h = Some(e.value),
            ElementKind::Capacitor => r.value_f = Some(e.value),
            ElementKind::Resistor => r.value_ohm = Some(e.value),
        }
        r
    }
}

/// Ordered elements from port 1 to port 2 plus the two port impedances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRecord", into = "NetworkRecord")]
pub struct LadderNetwork {
    elements: Vec<LumpedElement>,
    z0: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkRecord {
    elements: Vec<LumpedElement>,
    z0: [f64; 2],
}

impl TryFrom<NetworkRecord> for LadderNetwork {
    type Error = Error;
    fn try_from(r: NetworkRecord) -> Result<Self> {
        LadderNetwork::new(r.elements, (r.z0[0], r.z0[1]))
    }
}

impl From<LadderNetwork> for NetworkRecord {
    fn from(n: LadderNetwork) -> Self {
        NetworkRecord {
            elements: n.elements,
            z0: [n.z0.0, n.z0.1],
        }
    }
}

impl LadderNetwork {
    pub fn new(elements: Vec<LumpedElement>, z0: (f64, f64)) -> Result<Self> {
        for z in [z0.0, z0.1] {
            if !(z.is_finite() && z > 0.0) {
                return Err(Error::Invalid(format!(
                    "port impedance {z} must be positive"
                )));
            }
        }
        Ok(Self { elements, z0 })
    }

    /// Network between two ports of equal impedance.
    pub fn with_z0(elements: Vec<LumpedElement>, z0: f64) -> Result<Self> {
        Self::new(elements, (z0, z0))
    }

    pub fn elements(&self) -> &[LumpedElement] {
        &self.elements
    }

    pub fn z0(&self) -> (f64, f64) {
        self.z0
    }

    pub fn is_lossless(&self) -> bool {
        self.elements.iter().all(LumpedElement::is_reactive)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Chain matrix of the whole ladder at one frequency.
    pub fn abcd_at(&self, freq_hz: f64) -> Result<Abcd> {
        abcd_product(&self.elements, freq_hz)
    }
}

/// Complex 2x2 chain matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Abcd {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Abcd {
    pub const IDENTITY: Abcd = Abcd {
        a: ONE,
        b: ZERO,
        c: ZERO,
        d: ONE,
    };

    pub fn series(z: Complex64) -> Self {
        Abcd {
            b: z,
            ..Self::IDENTITY
        }
    }

    pub fn shunt(y: Complex64) -> Self {
        Abcd {
            c: y,
            ..Self::IDENTITY
        }
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    /// `self` followed by `next` (port-1 to port-2 order).
    pub fn then(&self, next: &Abcd) -> Abcd {
        Abcd {
            a: self.a * next.a + self.b * next.c,
            b: self.a * next.b + self.b * next.d,
            c: self.c * next.a + self.d * next.c,
            d: self.c * next.b + self.d * next.d,
        }
    }

    /// Largest entry-wise modulus, used for relative comparisons.
    pub fn max_norm(&self) -> f64 {
        [self.a, self.b, self.c, self.d]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

fn check_freq(freq_hz: f64) -> Result<()> {
    if freq_hz.is_finite() && freq_hz > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "frequency {freq_hz} Hz must be positive"
        )))
    }
}

/// Chain matrix of a single element.
///
/// Zero-valued shunt capacitors and series inductors are the identity. A
/// zero series capacitor (open) or zero shunt inductor (short) has no finite
/// chain matrix and is rejected.
pub fn element_abcd(e: &LumpedElement, freq_hz: f64) -> Result<Abcd> {
    check_freq(freq_hz)?;
    let omega = 2.0 * PI * freq_hz;
    let m = match (e.kind, e.topology) {
        (ElementKind::Resistor, Topology::Series) => Abcd::series(Complex64::new(e.value, 0.0)),
        (ElementKind::Resistor, Topology::Shunt) => Abcd::shunt(Complex64::new(1.0 / e.value, 0.0)),
        (ElementKind::Inductor, Topology::Series) => Abcd::series(J * omega * e.value),
        (ElementKind::Capacitor, Topology::Shunt) => Abcd::shunt(J * omega * e.value),
        (ElementKind::Inductor, Topology::Shunt) => {
            if e.value == 0.0 {
                return Err(Error::Domain(
                    "zero shunt inductor is a short circuit".into(),
                ));
            }
            Abcd::shunt(1.0 / (J * omega * e.value))
        }
        (ElementKind::Capacitor, Topology::Series) => {
            if e.value == 0.0 {
                return Err(Error::Domain(
                    "zero series capacitor is an open circuit".into(),
                ));
            }
            Abcd::series(1.0 / (J * omega * e.value))
        }
    };
    Ok(m)
}

/// Product of the element chain matrices in list order.
pub fn abcd_product(elements: &[LumpedElement], freq_hz: f64) -> Result<Abcd> {
    check_freq(freq_hz)?;
    elements.iter().try_fold(Abcd::IDENTITY, |acc, e| {
        Ok(acc.then(&element_abcd(e, freq_hz)?))
    })
}

/// S-parameters of one chain matrix between real port impedances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SParams {
    pub s11: Complex64,
    pub s12: Complex64,
    pub s21: Complex64,
    pub s22: Complex64,
}

pub fn abcd_to_s(m: &Abcd, z01: f64, z02: f64, freq_hz: f64) -> Result<SParams> {
    let (a, b, c, d) = (m.a, m.b, m.c, m.d);
    let den = a * z02 + b + c * z01 * z02 + d * z01;
    if den.norm() == 0.0 || !den.is_finite() {
        return Err(Error::Degenerate {
            freq_hz,
            what: "S-parameter conversion denominator A*Z02 + B + C*Z01*Z02 + D*Z01 is zero".into(),
        });
    }
    let k = 2.0 * (z01 * z02).sqrt();
    Ok(SParams {
        s11: (a * z02 + b - c * z01 * z02 - d * z01) / den,
        s12: k * m.det() / den,
        s21: k / den,
        s22: (-a * z02 + b - c * z01 * z02 + d * z01) / den,
    })
}

/// Swept response of a ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPortResponse {
    pub grid: FrequencyGrid,
    pub abcd: Vec<Abcd>,
    pub s11: Vec<Complex64>,
    pub s21: Vec<Complex64>,
    pub s22: Vec<Complex64>,
}

impl TwoPortResponse {
    /// CSV with header `freq_hz,re_s11,im_s11,re_s21,im_s21`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["freq_hz", "re_s11", "im_s11", "re_s21", "im_s21"])?;
        for ((f, s11), s21) in self.grid.points().iter().zip(&self.s11).zip(&self.s21) {
            w.write_record(&[
                f.to_string(),
                s11.re.to_string(),
                s11.im.to_string(),
                s21.re.to_string(),
                s21.im.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluate the ladder across the grid.
pub fn cascade(net: &LadderNetwork, grid: &FrequencyGrid) -> Result<TwoPortResponse> {
    let (z01, z02) = net.z0;
    let per_point: Vec<(Abcd, SParams)> = grid
        .points()
        .par_iter()
        .map(|&f| {
            let m = net.abcd_at(f)?;
            let s = abcd_to_s(&m, z01, z02, f)?;
            Ok((m, s))
        })
        .collect::<Result<_>>()?;
    let mut resp = TwoPortResponse {
        grid: grid.clone(),
        abcd: Vec::with_capacity(grid.len()),
        s11: Vec::with_capacity(grid.len()),
        s21: Vec::with_capacity(grid.len()),
        s22: Vec::with_capacity(grid.len()),
    };
    for (m, s) in per_point {
        resp.abcd.push(m);
        resp.s11.push(s.s11);
        resp.s21.push(s.s21);
        resp.s22.push(s.s22);
    }
    Ok(resp)
}

/// Termination placed on port 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Load {
    Open,
    Impedance(Complex64),
}

/// Reflection at port 1 with port 2 terminated in `load(f)` at one
/// frequency, relative to the port-1 impedance.
pub fn reflection_at(m: &Abcd, z01: f64, load: Load, freq_hz: f64) -> Result<Complex64> {
    let (num, den, scale) = match load {
        Load::Open => {
            let n = m.a - m.c * z01;
            let d = m.a + m.c * z01;
            (n, d, m.a.norm() + (m.c * z01).norm())
        }
        Load::Impedance(zl) => {
            if !zl.is_finite() {
                return Err(Error::Domain(format!(
                    "termination at {freq_hz} Hz is not finite; use Load::Open"
                )));
            }
            let v = m.a * zl + m.b;
            let i = (m.c * zl + m.d) * z01;
            (
                v - i,
                v + i,
                (m.a * zl).norm() + m.b.norm() + (m.c * zl * z01).norm() + (m.d * z01).norm(),
            )
        }
    };
    let magnitude = den.norm();
    if !(magnitude > POLE_THRESHOLD * scale) {
        return Err(Error::Pole {
            freq_hz,
            magnitude: if scale > 0.0 {
                magnitude / scale
            } else {
                magnitude
            },
        });
    }
    Ok(num / den)
}

/// Γ(f) seen from port 1 with port 2 terminated in `load(f)`.
///
/// A termination with negative real part yields |Γ| > 1, i.e. reflection
/// gain. Poles are reported, never clamped.
pub fn reflection_from_termination<F>(
    net: &LadderNetwork,
    grid: &FrequencyGrid,
    load: F,
) -> Result<Vec<Complex64>>
where
    F: Fn(f64) -> Load + Sync,
{
    let z01 = net.z0.0;
    grid.points()
        .par_iter()
        .map(|&f| {
            let m = net.abcd_at(f)?;
            reflection_at(&m, z01, load(f), f)
        })
        .collect()
}
