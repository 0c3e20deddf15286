//! Monte-Carlo heterodyne records of multiplexed dispersive readout.
//!
//! Each channel's record is already at baseband. Per time step the cavity
//! field follows `dα/dt = −λα + √κ_ext·ε`, integrated exactly, and the
//! sample holds the output `√κ_ext ∫α dt` over the step plus complex white
//! noise.
//!
//! Noise calibration: a coherent output mode of amplitude `β` read out by
//! heterodyne at efficiency `η` gives an outcome with mean `√η·β` and
//! variance `1/2` per quadrature. Dividing by `√η`, each quadrature of a
//! sample of length `dt` gets variance `dt/(2η)`. For a steady state the
//! matched-filter separation `d` and per-quadrature spread `σ` then obey
//! `(d/σ)² = 2η·κ_ext·|Δα|²·τ`.
//!
//! Relaxation is a single jump e→g at an exponential time with mean `T1`,
//! applied at the start of the step that contains it.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dispersive::DispersiveSystem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QubitState {
    G,
    E,
}

impl QubitState {
    pub fn is_excited(self) -> bool {
        self == QubitState::E
    }
}

/// A coherent spur added to every channel at its baseband offset. Its sign
/// follows the first qubit: `+` for g, `−` for e.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedLine {
    pub freq_hz: f64,
    /// Output-field amplitude, √(photons/s).
    pub amplitude: f64,
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub systems: Vec<DispersiveSystem>,
    /// Drive amplitude per channel, √(photons/s).
    pub drive_amps: Vec<f64>,
    pub eta: Vec<f64>,
    pub duration_s: f64,
    pub timestep_s: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub injected_lines: Vec<InjectedLine>,
    /// Joint qubit preparations, one state per channel.
    pub preparations: Vec<Vec<QubitState>>,
}

impl SimulationConfig {
    /// Reference preparations: all ground, then each qubit excited alone.
    pub fn reference_preparations(channels: usize) -> Vec<Vec<QubitState>> {
        let mut out = vec![vec![QubitState::G; channels]];
        for k in 0..channels {
            let mut p = vec![QubitState::G; channels];
            p[k] = QubitState::E;
            out.push(p);
        }
        out
    }

    pub fn samples(&self) -> usize {
        (self.duration_s / self.timestep_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.systems.len();
        if n == 0 {
            return Err(Error::Invalid(
                "at least one readout channel is required".into(),
            ));
        }
        if self.drive_amps.len() != n || self.eta.len() != n {
            return Err(Error::Invalid(format!(
                "{n} channels need {n} drive amplitudes and efficiencies"
            )));
        }
        for s in &self.systems {
            s.validate()?;
        }
        if self
            .drive_amps
            .iter()
            .any(|a| !(a.is_finite() && *a >= 0.0))
        {
            return Err(Error::Invalid(
                "drive amplitudes must be non-negative".into(),
            ));
        }
        if self.eta.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Invalid("efficiencies must be positive".into()));
        }
        if !(self.duration_s > 0.0 && self.timestep_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Invalid(
                "duration and timestep must be positive".into(),
            ));
        }
        let kmax = self.systems.iter().map(|s| s.kappa).fold(0.0, f64::max);
        let limit = 1.0 / (10.0 * kmax);
        if self.timestep_s > limit {
            return Err(Error::Undersampled {
                timestep_s: self.timestep_s,
                limit_s: limit,
            });
        }
        if self.samples() == 0 {
            return Err(Error::Invalid("duration shorter than one timestep".into()));
        }
        if self.trajectories == 0 {
            return Err(Error::Invalid("trajectory count must be positive".into()));
        }
        if self.preparations.is_empty() || self.preparations.iter().any(|p| p.len() != n) {
            return Err(Error::Invalid(format!(
                "each preparation must list {n} qubit states"
            )));
        }
        for l in &self.injected_lines {
            if !(l.freq_hz.is_finite()
                && l.amplitude.is_finite()
                && l.amplitude >= 0.0
                && l.phase_rad.is_finite())
            {
                return Err(Error::Invalid(format!("bad injected line {l:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IQRecord {
    pub timestep_s: f64,
    pub samples: Vec<Complex64>,
}

impl IQRecord {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "re_i", "im_q"])?;
        for (i, s) in self.samples.iter().enumerate() {
            w.write_record([
                (i as f64 * self.timestep_s).to_string(),
                s.re.to_string(),
                s.im.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulated ensembles indexed `records[preparation][channel][trajectory]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSet {
    pub timestep_s: f64,
    pub preparations: Vec<Vec<QubitState>>,
    pub records: Vec<Vec<Vec<IQRecord>>>,
}

impl RecordSet {
    pub fn channels(&self) -> usize {
        self.preparations.first().map_or(0, Vec::len)
    }

    pub fn find_preparation(&self, states: &[QubitState]) -> Option<usize> {
        self.preparations.iter().position(|p| p == states)
    }

    /// Copy with channel `a` and `b` exchanged everywhere.
    pub fn swap_channels(&self, a: usize, b: usize) -> RecordSet {
        let mut out = self.clone();
        for p in &mut out.preparations {
            p.swap(a, b);
        }
        for r in &mut out.records {
            r.swap(a, b);
        }
        out
    }
}

fn trajectory_rng(seed: u64, prep: usize, channel: usize, traj: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((prep as u64) << 48) ^ ((channel as u64) << 32) ^ traj as u64);
    rng
}

fn simulate_one(
    cfg: &SimulationConfig,
    channel: usize,
    prep: &[QubitState],
    mut rng: ChaCha8Rng,
) -> IQRecord {
    let sys = &cfg.systems[channel];
    let dt = cfg.timestep_s;
    let n = cfg.samples();
    let sqrt_kext = sys.kappa_ext.sqrt();
    let drive = sqrt_kext * cfg.drive_amps[channel];
    let sigma = (dt / (2.0 * cfg.eta[channel])).sqrt();

    let mut excited = prep[channel].is_excited();
    let jump_at = if excited {
        Exp::new(1.0 / sys.t1_s).map_or(f64::INFINITY, |d| d.sample(&mut rng))
    } else {
        f64::INFINITY
    };
    let sign = if prep[0].is_excited() { -1.0 } else { 1.0 };
    let lines: Vec<(Complex64, f64)> = cfg
        .injected_lines
        .iter()
        .map(|l| {
            (
                Complex64::from_polar(sign * l.amplitude, l.phase_rad),
                2.0 * std::f64::consts::PI * (l.freq_hz - sys.readout_freq_hz),
            )
        })
        .collect();

    let mut alpha = Complex64::new(0.0, 0.0);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t0 = k as f64 * dt;
        if excited && jump_at < t0 + dt {
            excited = false;
        }
        let lam = sys.lambda(excited);
        let ss = drive / lam;
        let decay = (-lam * dt).exp();
        let integral = ss * dt + (alpha - ss) * (1.0 - decay) / lam;
        alpha = ss + (alpha - ss) * decay;

        let mut s = sqrt_kext * integral;
        for (a, w) in &lines {
            // ∫ a·e^{iwt} dt over the step
            s += if *w == 0.0 {
                a * dt
            } else {
                a * (Complex64::new(0.0, w * (t0 + dt)).exp() - Complex64::new(0.0, w * t0).exp())
                    / Complex64::new(0.0, *w)
            };
        }
        let nr: f64 = rng.sample(StandardNormal);
        let ni: f64 = rng.sample(StandardNormal);
        samples.push(s + Complex64::new(sigma * nr, sigma * ni));
    }
    IQRecord {
        timestep_s: dt,
        samples,
    }
}

/// Simulate every preparation, channel and trajectory. Each trajectory has
/// its own random stream, so results do not depend on scheduling.
pub fn simulate_records(cfg: &SimulationConfig) -> Result<RecordSet> {
    cfg.validate()?;
    let channels = cfg.systems.len();
    let records = cfg
        .preparations
        .iter()
        .enumerate()
        .map(|(pi, prep)| {
            (0..channels)
                .map(|c| {
                    (0..cfg.trajectories)
                        .into_par_iter()
                        .map(|t| simulate_one(cfg, c, prep, trajectory_rng(cfg.seed, pi, c, t)))
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(RecordSet {
        timestep_s: cfg.timestep_s,
        preparations: cfg.preparations.clone(),
        records,
    })
}
