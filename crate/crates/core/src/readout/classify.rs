//! Demodulation, matched-envelope integration and state assignment.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::filter::Butterworth;
use super::simulate::{QubitState, RecordSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    #[serde(default = "ClassifierConfig::default_cutoff")]
    pub filter_cutoff_hz: f64,
    #[serde(default = "ClassifierConfig::default_order")]
    pub filter_order: usize,
}

impl ClassifierConfig {
    fn default_cutoff() -> f64 {
        10e6
    }

    fn default_order() -> usize {
        4
    }
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            filter_cutoff_hz: Self::default_cutoff(),
            filter_order: Self::default_order(),
        }
    }
}

/// Integrated-point statistics of one prepared state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub mean: [f64; 2],
    /// `[[xx, xy], [xy, yy]]` of the integrated IQ points.
    pub covariance: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub fidelity: f64,
    pub p0_given_g: f64,
    pub p1_given_e: f64,
    /// Threshold on the discriminant axis, `Re(∫ w·x)`.
    pub threshold: f64,
    pub blob_g: Blob,
    pub blob_e: Blob,
    /// Blob separation over the mean spread on the discriminant axis.
    pub separation_sigma: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub channels: Vec<ChannelReport>,
    /// `P(0_RO2|g_q1) + P(1_RO2|e_q1) − 1` with qubit 2 in g.
    pub eps12: Option<f64>,
    /// The same with the roles of the two channels exchanged.
    pub eps21: Option<f64>,
    /// Binomial standard error of `eps12` under independence.
    pub eps12_sigma: Option<f64>,
}

/// Separations below this many σ are reported as degenerate.
pub const DEGENERATE_SEPARATION: f64 = 0.1;

fn blob(points: &[Complex64]) -> Blob {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.re).sum::<f64>() / n;
    let my = points.iter().map(|p| p.im).sum::<f64>() / n;
    let dof = (n - 1.0).max(1.0);
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.re - mx, p.im - my);
        xx += dx * dx;
        xy += dx * dy;
        yy += dy * dy;
    }
    Blob {
        mean: [mx, my],
        covariance: [[xx / dof, xy / dof], [xy / dof, yy / dof]],
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

/// Equal-likelihood point of two 1-D Gaussians, between the means.
pub fn equal_likelihood_threshold(mg: f64, vg: f64, me: f64, ve: f64) -> f64 {
    let mid = 0.5 * (mg + me);
    let tiny = 1e-12 * (me - mg).powi(2).max(f64::MIN_POSITIVE);
    if vg <= tiny || ve <= tiny || ((vg - ve) / (vg + ve)).abs() < 1e-12 {
        return mid;
    }
    // (x−mg)²/vg + ln vg = (x−me)²/ve + ln ve
    let a = 1.0 / vg - 1.0 / ve;
    let b = -2.0 * (mg / vg - me / ve);
    let c = mg * mg / vg - me * me / ve + (vg / ve).ln();
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return mid;
    }
    let r1 = (-b + disc.sqrt()) / (2.0 * a);
    let r2 = (-b - disc.sqrt()) / (2.0 * a);
    let (lo, hi) = if mg < me { (mg, me) } else { (me, mg) };
    [r1, r2]
        .into_iter()
        .filter(|r| *r >= lo && *r <= hi)
        .min_by(|x, y| (x - mid).abs().total_cmp(&(y - mid).abs()))
        .unwrap_or(mid)
}

struct Channel {
    envelope: Vec<Complex64>,
    threshold: f64,
}

fn preprocess(
    set: &RecordSet,
    filter: &Butterworth,
    prep: usize,
    channel: usize,
) -> Vec<Vec<Complex64>> {
    set.records[prep][channel]
        .iter()
        .map(|r| filter.apply(&r.samples))
        .collect()
}

fn mean_trace(traces: &[Vec<Complex64>]) -> Vec<Complex64> {
    let n = traces.len() as f64;
    let mut m = vec![Complex64::new(0.0, 0.0); traces[0].len()];
    for t in traces {
        for (a, b) in m.iter_mut().zip(t) {
            *a += b;
        }
    }
    m.iter().map(|v| v / n).collect()
}

fn integrate(w: &[Complex64], x: &[Complex64]) -> Complex64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Filter each channel, integrate against the matched envelope built from
/// the reference preparations, and assign states with the optimal
/// threshold.
pub fn demodulate_and_classify(set: &RecordSet, cfg: &ClassifierConfig) -> Result<FidelityReport> {
    let n_ch = set.channels();
    if n_ch == 0 || set.records.iter().any(|p| p.iter().any(|c| c.is_empty())) {
        return Err(Error::Invalid("record set is empty".into()));
    }
    let filter =
        Butterworth::lowpass(cfg.filter_order, cfg.filter_cutoff_hz, 1.0 / set.timestep_s)?;
    let ground = vec![QubitState::G; n_ch];
    let g_idx = set
        .find_preparation(&ground)
        .ok_or_else(|| Error::Invalid("records lack the all-ground preparation".into()))?;

    let mut reports = Vec::with_capacity(n_ch);
    let mut channels = Vec::with_capacity(n_ch);
    for k in 0..n_ch {
        let mut excited = ground.clone();
        excited[k] = QubitState::E;
        let e_idx = set.find_preparation(&excited).ok_or_else(|| {
            Error::Invalid(format!(
                "records lack the preparation exciting qubit {}",
                k + 1
            ))
        })?;
        let tg = preprocess(set, &filter, g_idx, k);
        let te = preprocess(set, &filter, e_idx, k);
        let envelope: Vec<Complex64> = mean_trace(&te)
            .iter()
            .zip(mean_trace(&tg))
            .map(|(e, g)| (e - g).conj())
            .collect();
        let sg: Vec<Complex64> = tg.iter().map(|x| integrate(&envelope, x)).collect();
        let se: Vec<Complex64> = te.iter().map(|x| integrate(&envelope, x)).collect();
        let dg: Vec<f64> = sg.iter().map(|s| s.re).collect();
        let de: Vec<f64> = se.iter().map(|s| s.re).collect();
        let (mg, vg) = mean_var(&dg);
        let (me, ve) = mean_var(&de);
        let threshold = equal_likelihood_threshold(mg, vg, me, ve);
        let p0g = dg.iter().filter(|d| **d <= threshold).count() as f64 / dg.len() as f64;
        let p1e = de.iter().filter(|d| **d > threshold).count() as f64 / de.len() as f64;
        let spread = (0.5 * (vg + ve)).sqrt();
        let separation = if spread > 0.0 {
            (me - mg).abs() / spread
        } else {
            f64::INFINITY
        };
        let warning = (separation < DEGENERATE_SEPARATION)
            .then(|| format!("blobs separated by only {separation:.3}σ; assignment is degenerate"));
        reports.push(ChannelReport {
            fidelity: 0.5 * (p0g + p1e),
            p0_given_g: p0g,
            p1_given_e: p1e,
            threshold,
            blob_g: blob(&sg),
            blob_e: blob(&se),
            separation_sigma: separation,
            warning,
        });
        channels.push(Channel {
            envelope,
            threshold,
        });
    }

    // Assignment of channel `victim` with qubit `source` in g or e and all
    // others in g.
    let crosstalk = |source: usize, victim: usize| -> Option<(f64, f64)> {
        let mut e_src = ground.clone();
        e_src[source] = QubitState::E;
        let e_idx = set.find_preparation(&e_src)?;
        let ch = &channels[victim];
        let ones = |prep: usize| {
            let traces = preprocess(set, &filter, prep, victim);
            let n = traces.len() as f64;
            let hits = traces
                .iter()
                .filter(|x| integrate(&ch.envelope, x).re > ch.threshold)
                .count() as f64;
            (hits / n, n)
        };
        let (p1_g, n_g) = ones(g_idx);
        let (p1_e, n_e) = ones(e_idx);
        let eps = (1.0 - p1_g) + p1_e - 1.0;
        let pooled = 0.5 * (p1_g + p1_e);
        let sigma = (pooled * (1.0 - pooled) * (1.0 / n_g + 1.0 / n_e)).sqrt();
        Some((eps, sigma))
    };
    let (eps12, eps12_sigma, eps21) = if n_ch >= 2 {
        let a = crosstalk(0, 1);
        let b = crosstalk(1, 0);
        (a.map(|v| v.0), a.map(|v| v.1), b.map(|v| v.0))
    } else {
        (None, None, None)
    };

    Ok(FidelityReport {
        channels: reports,
        eps12,
        eps21,
        eps12_sigma,
    })
}
