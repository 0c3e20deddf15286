//! Intermodulation products, polynomial mixer spectra and power-law fits.
//!
//! A product is labelled by integers `(n_p, n_1, …, n_k)` and sits at
//! `n_p·f_p + Σ n_i·f_i`. Its order counts signal photons only, `Σ|n_i|`.
//!
//! Intercepts use the per-tone convention: the input power of a two-tone
//! test is the power of one tone, i.e. half the total.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::{dbm_to_watts, GainProfile};

/// Products closer than this are the same line.
pub const DEDUP_TOL_HZ: f64 = 1.0;
/// Largest pump multiplicity considered.
pub const MAX_PUMP_INDEX: i32 = 3;
/// Largest number of input tones accepted by the mixer expansion.
pub const MAX_MIXER_TONES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tone {
    pub freq_hz: f64,
    pub power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSet {
    pub tones: Vec<Tone>,
    pub pump_freq_hz: f64,
}

impl ToneSet {
    pub fn new(tones: Vec<Tone>, pump_freq_hz: f64) -> Result<Self> {
        let t = Self {
            tones,
            pump_freq_hz,
        };
        t.validate()?;
        Ok(t)
    }

    /// Equal-power tones.
    pub fn equal_power(freqs: &[f64], power_dbm: f64, pump_freq_hz: f64) -> Result<Self> {
        Self::new(
            freqs
                .iter()
                .map(|&freq_hz| Tone { freq_hz, power_dbm })
                .collect(),
            pump_freq_hz,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pump_freq_hz.is_finite() && self.pump_freq_hz >= 0.0) {
            return Err(Error::Invalid(format!(
                "pump frequency {} must be non-negative",
                self.pump_freq_hz
            )));
        }
        for (i, t) in self.tones.iter().enumerate() {
            if !(t.freq_hz.is_finite() && t.freq_hz > 0.0) {
                return Err(Error::Invalid(format!(
                    "tone {i} frequency {} must be positive",
                    t.freq_hz
                )));
            }
            if !t.power_dbm.is_finite() {
                return Err(Error::Invalid(format!("tone {i} power must be finite")));
            }
            if self.tones[..i].iter().any(|u| u.freq_hz == t.freq_hz) {
                return Err(Error::Invalid(format!(
                    "tone {i} duplicates frequency {}",
                    t.freq_hz
                )));
            }
        }
        Ok(())
    }
}

/// Integer label of a mixing process.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub n_p: i32,
    pub n: Vec<i32>,
}

impl Triple {
    pub fn order(&self) -> u32 {
        self.n.iter().map(|v| v.unsigned_abs()).sum()
    }

    pub fn freq(&self, t: &ToneSet) -> f64 {
        self.n_p as f64 * t.pump_freq_hz
            + self
                .n
                .iter()
                .zip(&t.tones)
                .map(|(n, tone)| *n as f64 * tone.freq_hz)
                .sum::<f64>()
    }

    /// The idler partner `(1 − n_p, −n)` at `f_p − f`.
    pub fn idler(&self) -> Triple {
        Triple {
            n_p: 1 - self.n_p,
            n: self.n.iter().map(|v| -v).collect(),
        }
    }

    fn is_tone(&self, index: usize) -> bool {
        self.n_p == 0
            && self
                .n
                .iter()
                .enumerate()
                .all(|(i, v)| *v == i32::from(i == index))
    }

    /// Built from tone `index` (and the pump) alone.
    fn only_uses(&self, index: usize) -> bool {
        self.n
            .iter()
            .enumerate()
            .all(|(i, v)| i == index || *v == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingProduct {
    pub freq_hz: f64,
    /// Lowest order among the contributing triples.
    pub order: u32,
    /// Every triple landing on this frequency, lowest order first.
    pub triples: Vec<Triple>,
}

impl MixingProduct {
    pub fn primary(&self) -> &Triple {
        &self.triples[0]
    }
}

/// Signal index vectors of length `k` with `Σ|n_i| ≤ max_order`.
fn signal_vectors(k: usize, max_order: u32) -> Vec<Vec<i32>> {
    fn rec(k: usize, budget: i32, cur: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in -budget..=budget {
            cur.push(v);
            rec(k, budget - v.abs(), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, max_order as i32, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Sort by frequency and merge lines within the dedup tolerance.
fn merge(mut raw: Vec<(f64, Triple)>) -> Vec<MixingProduct> {
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut out: Vec<MixingProduct> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    for (f, tr) in raw {
        match out.last_mut() {
            Some(last) if f - anchor <= DEDUP_TOL_HZ => last.triples.push(tr),
            _ => {
                anchor = f;
                out.push(MixingProduct {
                    freq_hz: f,
                    order: 0,
                    triples: vec![tr],
                });
            }
        }
    }
    for p in &mut out {
        p.triples
            .sort_by(|a, b| a.order().cmp(&b.order()).then_with(|| a.cmp(b)));
        p.order = p.triples[0].order();
    }
    out
}

/// All positive-frequency products with order ≤ `max_order` and
/// `|n_p| ≤ 3` inside `band` (inclusive), ascending in frequency.
pub fn enumerate_products(
    t: &ToneSet,
    max_order: u32,
    band: (f64, f64),
) -> Result<Vec<MixingProduct>> {
    t.validate()?;
    if max_order < 1 {
        return Err(Error::Invalid("max_order must be at least 1".into()));
    }
    if !(band.0 <= band.1) {
        return Err(Error::Invalid(format!("band {band:?} is reversed")));
    }
    let k = t.tones.len();
    if k > MAX_MIXER_TONES {
        return Err(Error::OrderCap(format!(
            "{k} tones exceed the limit of {MAX_MIXER_TONES}"
        )));
    }
    let mut raw = Vec::new();
    for n in signal_vectors(k, max_order) {
        for n_p in -MAX_PUMP_INDEX..=MAX_PUMP_INDEX {
            let tr = Triple { n_p, n: n.clone() };
            let f = tr.freq(t);
            if f > 0.0 && f >= band.0 && f <= band.1 {
                raw.push((f, tr));
            }
        }
    }
    Ok(merge(raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutChannel {
    pub freq_hz: f64,
    /// Half-width of the collision window around the channel.
    pub acq_bw_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub product: MixingProduct,
    pub channel: usize,
    /// Product minus channel frequency.
    pub detuning_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub collisions: Vec<Collision>,
    pub threshold_hz: f64,
}

/// Products within each channel's window. Each channel is assumed driven
/// by the tone of the same index when the counts agree. A channel's own
/// tone is never a collision. With several tones, products of a channel's
/// own tone and the pump alone (its idler and self-mixing images) are
/// part of that channel's response and are skipped too.
pub fn collision_scan(
    t: &ToneSet,
    channels: &[ReadoutChannel],
    max_order: u32,
) -> Result<CollisionReport> {
    if channels.is_empty() {
        return Err(Error::Invalid(
            "collision scan needs at least one channel".into(),
        ));
    }
    for c in channels {
        if !(c.freq_hz > 0.0 && c.acq_bw_hz >= 0.0 && c.acq_bw_hz.is_finite()) {
            return Err(Error::Invalid(format!("bad readout channel {c:?}")));
        }
    }
    let lo = channels
        .iter()
        .map(|c| c.freq_hz - c.acq_bw_hz)
        .fold(f64::INFINITY, f64::min);
    let hi = channels
        .iter()
        .map(|c| c.freq_hz + c.acq_bw_hz)
        .fold(f64::NEG_INFINITY, f64::max);
    let products = enumerate_products(t, max_order, (lo - DEDUP_TOL_HZ, hi + DEDUP_TOL_HZ))?;
    let mut collisions = Vec::new();
    for (ci, c) in channels.iter().enumerate() {
        for p in &products {
            let det = p.freq_hz - c.freq_hz;
            if det.abs() > c.acq_bw_hz {
                continue;
            }
            let multiplexed = t.tones.len() > 1;
            let own = |tr: &Triple| {
                ci < t.tones.len() && (tr.is_tone(ci) || (multiplexed && tr.only_uses(ci)))
            };
            let foreign: Vec<Triple> = p.triples.iter().filter(|tr| !own(tr)).cloned().collect();
            if foreign.is_empty() {
                continue;
            }
            collisions.push(Collision {
                product: MixingProduct {
                    freq_hz: p.freq_hz,
                    order: foreign[0].order(),
                    triples: foreign,
                },
                channel: ci,
                detuning_hz: det,
            });
        }
    }
    Ok(CollisionReport {
        collisions,
        threshold_hz: channels.iter().map(|c| c.acq_bw_hz).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLine {
    pub freq_hz: f64,
    pub power_dbm: f64,
    pub triple: Triple,
}

/// Coefficients of the `e^{j n·ω t}` components of `x^p` for
/// `x = Σ A_i cos ω_i t`, keyed by signal index vector.
fn power_components(amps: &[f64], p: u32) -> BTreeMap<Vec<i32>, f64> {
    let k = amps.len();
    // Phasors: +ω_i at 2i, −ω_i at 2i+1, each with weight A_i/2.
    let mut out = BTreeMap::new();
    let mut counts = vec![0u32; 2 * k];
    fn rec(
        idx: usize,
        left: u32,
        p: u32,
        amps: &[f64],
        counts: &mut Vec<u32>,
        out: &mut BTreeMap<Vec<i32>, f64>,
    ) {
        if idx == counts.len() - 1 {
            counts[idx] = left;
            let mut coef = factorial(p);
            for (m, &c) in counts.iter().enumerate() {
                coef *= (amps[m / 2] / 2.0).powi(c as i32) / factorial(c);
            }
            let n: Vec<i32> = (0..amps.len())
                .map(|i| counts[2 * i] as i32 - counts[2 * i + 1] as i32)
                .collect();
            *out.entry(n).or_insert(0.0) += coef;
            return;
        }
        for c in 0..=left {
            counts[idx] = c;
            rec(idx + 1, left - c, p, amps, counts, out);
        }
    }
    if k > 0 {
        rec(0, p, p, amps, &mut counts, &mut out);
    }
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Output spectrum of `y = x + a3·x³ + a5·x⁵` for the tone set, each line
/// scaled by the gain profile at its frequency.
///
/// Tone amplitudes are `sqrt(2·P)` with `P` in mW, so a line of amplitude
/// `a` carries `a²/2` mW. Lines outside the gain grid and at DC are
/// dropped. The pump does not enter the polynomial, so every line has
/// `n_p = 0`.
pub fn mixer_spectrum(
    t: &ToneSet,
    a3: f64,
    a5: f64,
    gain: &GainProfile,
) -> Result<Vec<SpectrumLine>> {
    t.validate()?;
    if t.tones.len() > MAX_MIXER_TONES {
        return Err(Error::OrderCap(format!(
            "{} tones exceed the limit of {MAX_MIXER_TONES}",
            t.tones.len()
        )));
    }
    if !(a3.is_finite() && a5.is_finite()) {
        return Err(Error::Invalid(
            "nonlinear coefficients must be finite".into(),
        ));
    }
    let amps: Vec<f64> = t
        .tones
        .iter()
        .map(|x| (2.0 * dbm_to_watts(x.power_dbm) * 1e3).sqrt())
        .collect();
    let mut total: BTreeMap<Vec<i32>, f64> = BTreeMap::new();
    for (p, c) in [(1u32, 1.0), (3, a3), (5, a5)] {
        if c == 0.0 {
            continue;
        }
        for (n, v) in power_components(&amps, p) {
            *total.entry(n).or_insert(0.0) += c * v;
        }
    }
    let (lo, hi) = (gain.grid.first(), gain.grid.last());
    let mut raw: Vec<(f64, Triple, f64)> = Vec::new();
    for (n, coef) in total {
        let tr = Triple { n_p: 0, n };
        let f = tr.freq(t);
        if f <= DEDUP_TOL_HZ || f < lo || f > hi || coef == 0.0 {
            continue;
        }
        // The +f and −f components pair into a cosine of amplitude 2·coef.
        raw.push((f, tr, 2.0 * coef));
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut lines: Vec<(f64, Triple, f64)> = Vec::new();
    for (f, tr, a) in raw {
        match lines.last_mut() {
            Some(last) if f - last.0 <= DEDUP_TOL_HZ => {
                last.2 += a;
                if tr.order() < last.1.order() {
                    last.1 = tr;
                }
            }
            _ => lines.push((f, tr, a)),
        }
    }
    Ok(lines
        .into_iter()
        .filter(|l| l.2 != 0.0)
        .map(|(f, triple, a)| SpectrumLine {
            freq_hz: f,
            power_dbm: 10.0 * (a * a / 2.0).log10() + gain.gain_at(f),
            triple,
        })
        .collect())
}

/// Spectrum lines as CSV with one `n_i` column per tone.
pub fn write_spectrum_csv<W: Write>(lines: &[SpectrumLine], n_tones: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["freq_hz".to_string(), "power_dbm".into(), "n_p".into()];
    header.extend((1..=n_tones).map(|i| format!("n_{i}")));
    header.push("order".into());
    w.write_record(&header)?;
    for l in lines {
        let mut rec = vec![
            l.freq_hz.to_string(),
            l.power_dbm.to_string(),
            l.triple.n_p.to_string(),
        ];
        rec.extend(l.triple.n.iter().map(|v| v.to_string()));
        rec.push(l.triple.order().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Signal and product powers of a two-tone sweep, tracking the tone at
/// `f1` and the product labelled `product`.
pub fn two_tone_sweep(
    f1: f64,
    f2: f64,
    pump_freq: f64,
    input_powers_dbm: &[f64],
    a3: f64,
    a5: f64,
    gain: &GainProfile,
    product: &[i32; 2],
) -> Result<Vec<(f64, f64, f64)>> {
    let signal = vec![1, 0];
    let product = product.to_vec();
    input_powers_dbm
        .iter()
        .map(|&p| {
            let t = ToneSet::equal_power(&[f1, f2], p, pump_freq)?;
            let lines = mixer_spectrum(&t, a3, a5, gain)?;
            let find = |n: &Vec<i32>| {
                lines
                    .iter()
                    .find(|l| &l.triple.n == n)
                    .map(|l| l.power_dbm)
                    .ok_or_else(|| Error::InsufficientData {
                        trace: format!("{n:?}"),
                        detail: "line missing from spectrum (outside gain grid?)".into(),
                    })
            };
            Ok((p, find(&signal)?, find(&product)?))
        })
        .collect()
}

/// Per-tone IIP3 of `y = x + a3·x³` for two equal tones, in dBm.
pub fn analytic_iip3_dbm(a3: f64) -> f64 {
    10.0 * (2.0 / (3.0 * a3.abs())).log10()
}

/// Cubic coefficient giving a per-tone IIP3 of `iip3_dbm`.
pub fn a3_for_iip3(iip3_dbm: f64) -> f64 {
    -2.0 / (3.0 * 10f64.powf(iip3_dbm / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept_dbm: f64,
    /// Input-power range (dBm) used for the fit.
    pub fit_window: (f64, f64),
    pub residual_db: f64,
}

impl PowerLawFit {
    pub fn eval(&self, p_in: f64) -> f64 {
        self.slope * p_in + self.intercept_dbm
    }
}

pub const FIT_RESIDUAL_DB: f64 = 0.5;
pub const FIT_MIN_POINTS: usize = 5;

/// Longest low-power run fitted by a fixed-slope line within the residual
/// budget.
fn fixed_slope_fit(x: &[f64], y: &[f64], slope: f64, trace: &str) -> Result<PowerLawFit> {
    let fit_upto = |m: usize| {
        let b = (0..m).map(|i| y[i] - slope * x[i]).sum::<f64>() / m as f64;
        let r = (0..m)
            .map(|i| (y[i] - slope * x[i] - b).abs())
            .fold(0.0, f64::max);
        (b, r)
    };
    let mut best = None;
    for m in FIT_MIN_POINTS..=x.len() {
        let (b, r) = fit_upto(m);
        if !(r < FIT_RESIDUAL_DB) {
            break;
        }
        best = Some((m, b, r));
    }
    let Some((m, b, r)) = best else {
        return Err(Error::InsufficientData {
            trace: trace.into(),
            detail: format!(
                "no run of {FIT_MIN_POINTS}+ low-power points fits slope {slope} within {FIT_RESIDUAL_DB} dB"
            ),
        });
    };
    Ok(PowerLawFit {
        slope,
        intercept_dbm: b,
        fit_window: (x[0], x[m - 1]),
        residual_db: r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterceptFit {
    pub signal: PowerLawFit,
    pub product: PowerLawFit,
    pub intercept_dbm: f64,
    /// `None` when the signal never compresses by 1 dB in the sweep.
    pub p1db_dbm: Option<f64>,
    /// Set for fifth-order intercepts, which are poorly constrained.
    pub low_confidence: bool,
}

fn sorted_sweep(sweep: &[(f64, f64, f64)]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if sweep
        .iter()
        .any(|(a, b, c)| !(a.is_finite() && b.is_finite() && c.is_finite()))
    {
        return Err(Error::Invalid("sweep contains non-finite powers".into()));
    }
    let mut s = sweep.to_vec();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    if s.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Invalid("sweep repeats an input power".into()));
    }
    Ok((
        s.iter().map(|v| v.0).collect(),
        s.iter().map(|v| v.1).collect(),
        s.iter().map(|v| v.2).collect(),
    ))
}

fn intercept_fit(
    sweep: &[(f64, f64, f64)],
    product_slope: f64,
    trace: &str,
) -> Result<InterceptFit> {
    let (x, ys, yp) = sorted_sweep(sweep)?;
    let signal = fixed_slope_fit(&x, &ys, 1.0, "signal")?;
    let product = fixed_slope_fit(&x, &yp, product_slope, trace)?;
    let intercept = (signal.intercept_dbm - product.intercept_dbm) / (product_slope - 1.0);

    let dev: Vec<f64> = x
        .iter()
        .zip(&ys)
        .map(|(p, y)| y - signal.eval(*p))
        .collect();
    let p1db = (1..x.len()).find(|&i| dev[i] <= -1.0).map(|i| {
        let t = (-1.0 - dev[i - 1]) / (dev[i] - dev[i - 1]);
        x[i - 1] + t * (x[i] - x[i - 1])
    });
    Ok(InterceptFit {
        signal,
        product,
        intercept_dbm: intercept,
        p1db_dbm: p1db,
        low_confidence: product_slope > 3.0,
    })
}

/// Fit slope-1 signal and slope-3 IM3 asymptotes; IIP3 is their crossing.
/// Rows are `(P_in, P_out signal, P_out IM3)` in dBm.
pub fn fit_power_laws(sweep: &[(f64, f64, f64)]) -> Result<InterceptFit> {
    intercept_fit(sweep, 3.0, "im3")
}

/// Fifth-order analogue of [`fit_power_laws`]; always low confidence.
pub fn fit_fifth_order(sweep: &[(f64, f64, f64)]) -> Result<InterceptFit> {
    intercept_fit(sweep, 5.0, "im5")
}

/// Convert a per-tone intercept to the total-input-power convention.
pub fn per_tone_to_total_dbm(per_tone_dbm: f64) -> f64 {
    per_tone_dbm + 10.0 * 2f64.log10()
}

/// Relative IM3 suppression expected from line geometry.
pub fn im3_suppression_db(iip3_dbm: f64, p_in_dbm: f64) -> f64 {
    2.0 * (iip3_dbm - p_in_dbm)
}
