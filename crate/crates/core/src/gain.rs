//! Reflection-gain profiles and their summary metrics.
//!
//! The amplifier is the matching ladder terminated on the pumped array
//! admittance. Detuned pumping is approximated by re-centering: the fixed
//! network response is translated by half the pump offset from the
//! reference pump `array.pump_freq`.
//!
//! Compression uses a linear Stark renormalisation of the array inductance.
//! The circulating power is seeded with the small-signal estimate
//! `P_in·|Γ_ss|²` and then relaxed self-consistently.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netlist::{Abcd, FrequencyGrid, Load};
use crate::snail::{array_admittance, PumpedArrayParams};
use crate::synthesis::MatchingNetworkValues;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainProfile {
    pub grid: FrequencyGrid,
    pub gain_db: Vec<f64>,
    pub phase_deg: Vec<f64>,
}

impl GainProfile {
    pub fn new(grid: FrequencyGrid, gain_db: Vec<f64>, phase_deg: Vec<f64>) -> Result<Self> {
        if gain_db.len() != grid.len() || phase_deg.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "profile lengths {}/{} do not match grid of {}",
                gain_db.len(),
                phase_deg.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            gain_db,
            phase_deg,
        })
    }

    /// Gain linearly interpolated at `freq`, clamped to the grid ends.
    pub fn gain_at(&self, freq: f64) -> f64 {
        interpolate(self.grid.points(), &self.gain_db, freq)
    }

    /// Largest minus smallest gain over the samples inside `[lo, hi]`.
    pub fn ripple_within(&self, lo: f64, hi: f64) -> Option<f64> {
        let inside = self
            .grid
            .points()
            .iter()
            .zip(&self.gain_db)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, g)| *g);
        let (mn, mx) = inside.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), g| {
            (a.min(g), b.max(g))
        });
        (mn <= mx).then_some(mx - mn)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["freq_hz", "gain_db", "phase_deg"])?;
        for ((f, g), p) in self
            .grid
            .points()
            .iter()
            .zip(&self.gain_db)
            .zip(&self.phase_deg)
        {
            w.write_record([f.to_string(), g.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn interpolate(x: &[f64], y: &[f64], at: f64) -> f64 {
    if at <= x[0] {
        return y[0];
    }
    let n = x.len();
    if at >= x[n - 1] {
        return y[n - 1];
    }
    let j = x.partition_point(|v| *v <= at);
    let t = (at - x[j - 1]) / (x[j] - x[j - 1]);
    y[j - 1] + t * (y[j] - y[j - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatTopMetrics {
    pub peak_db: f64,
    /// Midpoint of the 3 dB edges.
    pub center_hz: f64,
    pub bw_3db_hz: f64,
    pub lower_3db_hz: f64,
    pub upper_3db_hz: f64,
    /// Widest contiguous band inside the 3 dB band whose gain spread stays
    /// within the ripple budget.
    pub bw_ripple_hz: f64,
    pub ripple_lo_hz: f64,
    pub ripple_hi_hz: f64,
    pub ripple_db: f64,
}

/// Matching ladder evaluated once per grid point, ready for repeated
/// termination by different array states.
struct Prepared {
    freqs: Vec<f64>,
    abcd: Vec<Abcd>,
    z0: f64,
}

impl Prepared {
    fn new(net: &MatchingNetworkValues, z0: f64, grid: &FrequencyGrid, shift: f64) -> Result<Self> {
        let ladder = net.ladder(z0)?;
        let freqs: Vec<f64> = grid.points().iter().map(|f| f - shift).collect();
        if let Some(f) = freqs.iter().find(|f| **f <= 0.0) {
            return Err(Error::Domain(format!(
                "re-centred evaluation frequency {f} Hz is not positive"
            )));
        }
        let abcd = freqs
            .par_iter()
            .map(|f| ladder.abcd_at(*f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { freqs, abcd, z0 })
    }

    fn gamma(&self, i: usize, array: &PumpedArrayParams) -> Result<num_complex::Complex64> {
        let f = self.freqs[i];
        let y = array_admittance(array, 2.0 * std::f64::consts::PI * f)?;
        crate::netlist::reflection_at(&self.abcd[i], self.z0, Load::Impedance(1.0 / y), f)
    }

    fn profile(&self, grid: &FrequencyGrid, array: &PumpedArrayParams) -> Result<GainProfile> {
        let gammas = (0..self.freqs.len())
            .into_par_iter()
            .map(|i| self.gamma(i, array))
            .collect::<Result<Vec<_>>>()?;
        let gain_db = gammas.iter().map(|g| 20.0 * g.norm().log10()).collect();
        let phase_deg = gammas.iter().map(|g| g.arg().to_degrees()).collect();
        GainProfile::new(grid.clone(), gain_db, phase_deg)
    }

    fn peak_db(&self, array: &PumpedArrayParams) -> Result<f64> {
        (0..self.freqs.len())
            .into_par_iter()
            .map(|i| self.gamma(i, array).map(|g| 20.0 * g.norm().log10()))
            .try_reduce(|| f64::NEG_INFINITY, |a, b| Ok(a.max(b)))
    }
}

/// Reflection gain of the matched array.
pub fn gain_profile(
    net: &MatchingNetworkValues,
    array: &PumpedArrayParams,
    grid: &FrequencyGrid,
) -> Result<GainProfile> {
    array.validate()?;
    Prepared::new(net, array.z0, grid, 0.0)?.profile(grid, array)
}

/// Gain with the pump moved to `pump_freq`, by re-centering on the
/// reference pump `array.pump_freq`.
pub fn recentered_gain_profile(
    net: &MatchingNetworkValues,
    array: &PumpedArrayParams,
    pump_freq: f64,
    grid: &FrequencyGrid,
) -> Result<GainProfile> {
    array.validate()?;
    let shift = 0.5 * (pump_freq - array.pump_freq);
    Prepared::new(net, array.z0, grid, shift)?.profile(
        grid,
        &PumpedArrayParams {
            pump_freq,
            ..*array
        },
    )
}

pub fn flat_top_metrics(p: &GainProfile, ripple_budget_db: f64) -> Result<FlatTopMetrics> {
    if p.grid.is_empty() {
        return Err(Error::Invalid("empty gain profile".into()));
    }
    if !(ripple_budget_db.is_finite() && ripple_budget_db >= 0.0) {
        return Err(Error::Invalid(format!(
            "ripple budget {ripple_budget_db} dB must be non-negative"
        )));
    }
    let f = p.grid.points();
    let g = &p.gain_db;
    let (ipk, peak) = g
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        });
    if !(peak >= 3.0) {
        return Err(Error::NoGain { peak_db: peak });
    }

    let level = peak - 3.0;
    let mut lo = ipk;
    while lo > 0 && g[lo - 1] >= level {
        lo -= 1;
    }
    let mut hi = ipk;
    while hi + 1 < g.len() && g[hi + 1] >= level {
        hi += 1;
    }
    let edge = |inside: usize, outside: usize| {
        let t = (level - g[inside]) / (g[outside] - g[inside]);
        f[inside] + t * (f[outside] - f[inside])
    };
    let lower = if lo == 0 { f[0] } else { edge(lo, lo - 1) };
    let upper = if hi + 1 == g.len() {
        f[hi]
    } else {
        edge(hi, hi + 1)
    };

    let (a, b) = widest_window(&g[lo..=hi], &f[lo..=hi], ripple_budget_db);
    let (a, b) = (a + lo, b + lo);
    let (mn, mx) = g[a..=b]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(x, y), v| {
            (x.min(*v), y.max(*v))
        });

    Ok(FlatTopMetrics {
        peak_db: peak,
        center_hz: 0.5 * (lower + upper),
        bw_3db_hz: upper - lower,
        lower_3db_hz: lower,
        upper_3db_hz: upper,
        bw_ripple_hz: f[b] - f[a],
        ripple_lo_hz: f[a],
        ripple_hi_hz: f[b],
        ripple_db: mx - mn,
    })
}

/// Widest index window with spread ≤ budget (sliding min/max deques).
/// The first maximal window wins ties, i.e. the lower-frequency one.
fn widest_window(g: &[f64], f: &[f64], budget: f64) -> (usize, usize) {
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best = (0, 0);
    let mut start = 0;
    for end in 0..g.len() {
        while maxq.back().is_some_and(|&k| g[k] <= g[end]) {
            maxq.pop_back();
        }
        maxq.push_back(end);
        while minq.back().is_some_and(|&k| g[k] >= g[end]) {
            minq.pop_back();
        }
        minq.push_back(end);
        while g[maxq[0]] - g[minq[0]] > budget {
            start += 1;
            if maxq[0] < start {
                maxq.pop_front();
            }
            if minq[0] < start {
                minq.pop_front();
            }
        }
        if f[end] - f[start] > f[best.1] - f[best.0] {
            best = (start, end);
        }
    }
    best
}

/// One point of a pump-frequency sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunablePoint {
    pub pump_freq_hz: f64,
    pub c3_phi_p: f64,
    pub metrics: Option<FlatTopMetrics>,
    /// Reason the target could not be held, if any.
    pub flag: Option<String>,
}

const GAIN_HOLD_TOL_DB: f64 = 0.1;

/// Pump strength giving `target_db` peak gain on the prepared network.
fn hold_peak_gain(
    prep: &Prepared,
    array: &PumpedArrayParams,
    target_db: f64,
) -> std::result::Result<f64, String> {
    let peak = |c: f64| -> f64 {
        match prep.peak_db(&PumpedArrayParams {
            c3_phi_p: c,
            ..*array
        }) {
            Ok(v) => v,
            // A pole on the grid means the threshold has been crossed.
            Err(Error::Pole { .. }) => f64::INFINITY,
            Err(_) => f64::NAN,
        }
    };
    // Keep the starting strength when it already holds the target.
    if array.c3_phi_p > 0.0 && (peak(array.c3_phi_p) - target_db).abs() <= 0.25 * GAIN_HOLD_TOL_DB {
        return Ok(array.c3_phi_p);
    }
    let mut lo = 0.0;
    let mut hi = if array.c3_phi_p > 0.0 {
        array.c3_phi_p
    } else {
        0.1
    };
    let mut tries = 0;
    while !(peak(hi) >= target_db) {
        lo = hi;
        hi *= 1.5;
        tries += 1;
        if tries > 200 {
            return Err(format!("no pump strength reaches {target_db} dB"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = peak(mid);
        if (v - target_db).abs() <= 0.25 * GAIN_HOLD_TOL_DB {
            return Ok(mid);
        }
        if v >= target_db {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let v = peak(hi);
    if (v - target_db).abs() <= GAIN_HOLD_TOL_DB {
        Ok(hi)
    } else {
        Err(format!(
            "peak gain jumps past {target_db} dB (nearest {v:.3} dB)"
        ))
    }
}

/// Re-centre the amplifier at each pump frequency, retune the pump
/// strength to hold the target peak gain, and report the flat-top metrics.
pub fn tunable_band_sweep(
    net: &MatchingNetworkValues,
    array: &PumpedArrayParams,
    pump_freqs: &[f64],
    gain_target_db: f64,
    ripple_budget_db: f64,
    grid: &FrequencyGrid,
) -> Result<Vec<TunablePoint>> {
    array.validate()?;
    let mut out = Vec::with_capacity(pump_freqs.len());
    for &fp in pump_freqs {
        if !(fp.is_finite() && fp > 0.0) {
            return Err(Error::Invalid(format!(
                "pump frequency {fp} must be positive"
            )));
        }
        let centre = 0.5 * fp;
        if centre < grid.first() || centre > grid.last() {
            return Err(Error::Domain(format!(
                "pump {fp} Hz puts the band centre outside the grid"
            )));
        }
        let prep = Prepared::new(net, array.z0, grid, 0.5 * (fp - array.pump_freq))?;
        let point = match hold_peak_gain(&prep, array, gain_target_db) {
            Ok(c) => {
                let tuned = PumpedArrayParams {
                    c3_phi_p: c,
                    pump_freq: fp,
                    ..*array
                };
                let prof = prep.profile(grid, &tuned)?;
                TunablePoint {
                    pump_freq_hz: fp,
                    c3_phi_p: c,
                    metrics: Some(flat_top_metrics(&prof, ripple_budget_db)?),
                    flag: None,
                }
            }
            Err(reason) => TunablePoint {
                pump_freq_hz: fp,
                c3_phi_p: f64::NAN,
                metrics: None,
                flag: Some(reason),
            },
        };
        out.push(point);
    }
    Ok(out)
}

/// Self-consistent compression state of one frequency point.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Solved {
    gain_db: f64,
    phase_deg: f64,
    converged: bool,
}

const FIXED_POINT_TOL: f64 = 1e-9;
const FIXED_POINT_DAMPING: f64 = 0.5;
const FIXED_POINT_MAX_ITER: usize = 2000;

/// Solve `y = u·G(L(1 + y))` where `y = k·P_circ` and `u = k·P_in`.
fn solve_point(prep: &Prepared, i: usize, array: &PumpedArrayParams, u: f64) -> Solved {
    let eval = |y: f64| {
        prep.gamma(i, &array.with_inductance(array.l_array * (1.0 + y)))
            .ok()
            .filter(|g| g.norm().is_finite())
    };
    let Some(g0) = eval(0.0) else {
        return Solved {
            gain_db: f64::NAN,
            phase_deg: f64::NAN,
            converged: false,
        };
    };
    let mut last = g0;
    if u == 0.0 {
        return Solved {
            gain_db: 20.0 * g0.norm().log10(),
            phase_deg: g0.arg().to_degrees(),
            converged: true,
        };
    }
    let mut y = u * g0.norm_sqr();
    let mut converged = false;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let Some(g) = eval(y) else { break };
        last = g;
        let next = (1.0 - FIXED_POINT_DAMPING) * y + FIXED_POINT_DAMPING * u * g.norm_sqr();
        let done = (next - y).abs() <= FIXED_POINT_TOL * y.abs().max(f64::MIN_POSITIVE);
        y = next;
        if done {
            converged = true;
            if let Some(g) = eval(y) {
                last = g;
            }
            break;
        }
    }
    Solved {
        gain_db: 20.0 * last.norm().log10(),
        phase_deg: last.arg().to_degrees(),
        converged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionSweep {
    pub input_powers_w: Vec<f64>,
    /// Profile at each input power.
    pub profiles: Vec<GainProfile>,
    /// `flagged[power][freq]` marks a diverged fixed point.
    pub flagged: Vec<Vec<bool>>,
    pub small_signal: GainProfile,
    /// Per-frequency input 1 dB compression power; `None` means no
    /// compression within the sampled powers.
    pub p1db_w: Vec<Option<f64>>,
}

impl CompressionSweep {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["freq_hz", "gain_db", "phase_deg", "power_dbm"])?;
        for (p, prof) in self.input_powers_w.iter().zip(&self.profiles) {
            let dbm = watts_to_dbm(*p);
            for ((f, g), ph) in prof
                .grid
                .points()
                .iter()
                .zip(&prof.gain_db)
                .zip(&prof.phase_deg)
            {
                w.write_record([
                    f.to_string(),
                    g.to_string(),
                    ph.to_string(),
                    dbm.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn watts_to_dbm(p: f64) -> f64 {
    10.0 * (p * 1e3).log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

/// Bisect the scaled drive `u = k·P_in` at which grid point `i` sits
/// `1 dB` below its small-signal gain, to within `resolution_db`.
fn bisect_p1db(
    prep: &Prepared,
    i: usize,
    array: &PumpedArrayParams,
    mut lo: f64,
    mut hi: f64,
    ss_db: f64,
    resolution_db: f64,
) -> f64 {
    let target = ss_db - 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = solve_point(prep, i, array, mid);
        if s.converged && (s.gain_db - target).abs() <= resolution_db {
            return mid;
        }
        if s.converged && s.gain_db > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Gain versus input power with a Stark-renormalised array inductance.
///
/// P_1dB is bracketed by the sampled powers and refined by bisection to
/// `p1db_resolution_db` in gain.
pub fn compression_sweep(
    net: &MatchingNetworkValues,
    array: &PumpedArrayParams,
    stark_coeff: f64,
    input_powers: &[f64],
    grid: &FrequencyGrid,
    p1db_resolution_db: f64,
) -> Result<CompressionSweep> {
    array.validate()?;
    if !(stark_coeff.is_finite() && stark_coeff >= 0.0) {
        return Err(Error::Domain(format!(
            "Stark coefficient {stark_coeff} must be non-negative"
        )));
    }
    if input_powers.iter().any(|p| !(p.is_finite() && *p >= 0.0))
        || input_powers.windows(2).any(|w| w[1] < w[0])
    {
        return Err(Error::Invalid(
            "input powers must be non-negative and ascending".into(),
        ));
    }
    if !(p1db_resolution_db > 0.0) {
        return Err(Error::Invalid("P1dB resolution must be positive".into()));
    }
    let prep = Prepared::new(net, array.z0, grid, 0.0)?;
    let small_signal = prep.profile(grid, array)?;
    let n = grid.len();

    let columns: Vec<(Vec<Solved>, Option<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ss = small_signal.gain_db[i];
            let sols: Vec<Solved> = input_powers
                .iter()
                .map(|p| solve_point(&prep, i, array, stark_coeff * p))
                .collect();
            let mut p1db = None;
            if stark_coeff > 0.0 {
                let mut prev_u = 0.0;
                for (p, s) in input_powers.iter().zip(&sols) {
                    let u = stark_coeff * p;
                    if !s.converged || s.gain_db <= ss - 1.0 {
                        let u1 = bisect_p1db(&prep, i, array, prev_u, u, ss, p1db_resolution_db);
                        p1db = Some(u1 / stark_coeff);
                        break;
                    }
                    prev_u = u;
                }
            }
            (sols, p1db)
        })
        .collect();

    let mut profiles = Vec::with_capacity(input_powers.len());
    let mut flagged = Vec::with_capacity(input_powers.len());
    for k in 0..input_powers.len() {
        let gain = columns.iter().map(|c| c.0[k].gain_db).collect();
        let phase = columns.iter().map(|c| c.0[k].phase_deg).collect();
        flagged.push(columns.iter().map(|c| !c.0[k].converged).collect());
        profiles.push(GainProfile::new(grid.clone(), gain, phase)?);
    }
    Ok(CompressionSweep {
        input_powers_w: input_powers.to_vec(),
        profiles,
        flagged,
        small_signal,
        p1db_w: columns.into_iter().map(|c| c.1).collect(),
    })
}

/// Stark coefficient (1/W) that puts the 1 dB compression point at
/// `freq` at input power `p1db_target_w`.
///
/// The solution depends on drive only through `k·P_in`, so the scaled
/// compression drive is bisected once and divided by the target power.
pub fn calibrate_stark_coeff(
    net: &MatchingNetworkValues,
    array: &PumpedArrayParams,
    freq: f64,
    p1db_target_w: f64,
) -> Result<f64> {
    array.validate()?;
    if !(p1db_target_w.is_finite() && p1db_target_w > 0.0) {
        return Err(Error::Invalid(format!(
            "target P1dB {p1db_target_w} W must be positive"
        )));
    }
    let grid = FrequencyGrid::new(vec![freq])?;
    let prep = Prepared::new(net, array.z0, &grid, 0.0)?;
    let ss = solve_point(&prep, 0, array, 0.0);
    if !ss.converged {
        return Err(Error::Pole {
            freq_hz: freq,
            magnitude: 0.0,
        });
    }
    let mut hi = 1e-6;
    loop {
        let s = solve_point(&prep, 0, array, hi);
        if !s.converged || s.gain_db <= ss.gain_db - 1.0 {
            break;
        }
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NonConvergence {
                iterations: 0,
                detail: format!("gain at {freq} Hz never compresses by 1 dB"),
            });
        }
    }
    let u = bisect_p1db(&prep, 0, array, 0.0, hi, ss.gain_db, 1e-6);
    Ok(u / p1db_target_w)
}
