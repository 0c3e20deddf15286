//! Command bodies. Each returns its artifacts in memory so that nothing is
//! written unless the whole command succeeds.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use paramp_core::gain::{
    calibrate_stark_coeff, compression_sweep, dbm_to_watts, flat_top_metrics, gain_profile,
    tunable_band_sweep, watts_to_dbm, FlatTopMetrics, GainProfile, TunablePoint,
};
use paramp_core::imd::{
    a3_for_iip3, collision_scan, enumerate_products, fit_fifth_order, fit_power_laws,
    mixer_spectrum, two_tone_sweep, write_spectrum_csv, CollisionReport, InterceptFit, ToneSet,
};
use paramp_core::netlist::{cascade, FrequencyGrid};
use paramp_core::readout::{
    delta_a_db, demodulate_and_classify, eta_at_amplifier_input, noise_budget_solve,
    simulate_records, FidelityReport, NoiseBudget, QubitState, RecordSet, SimulationConfig,
};
use paramp_core::snail::PumpedArrayParams;
use paramp_core::synthesis::{
    characterize_pump_filter, corenormalize, synthesize_matching_detailed, synthesize_pump_filter,
    MatchingNetworkValues, PumpFilterValues, SynthesisSpec,
};
use paramp_core::Complex64;

use crate::config::{GridSpec, NetworkChoice, ProjectConfig};

/// Files produced by a command, relative to the output directory.
#[derive(Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: String,
}

impl Outputs {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.files.push((name.to_string(), text.into_bytes()));
        Ok(())
    }

    fn raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn line(&mut self, text: impl AsRef<str>) {
        self.summary.push_str(text.as_ref());
        self.summary.push('\n');
    }
}

fn grid(g: &GridSpec) -> Result<FrequencyGrid> {
    Ok(FrequencyGrid::linspace(g.start_hz, g.stop_hz, g.points)?)
}

fn pump_filter(cfg: &ProjectConfig) -> Result<PumpFilterValues> {
    Ok(synthesize_pump_filter(&cfg.pump_filter.design)?.0)
}

/// Matching network selected by `gain.network`.
pub fn matching_network(cfg: &ProjectConfig) -> Result<MatchingNetworkValues> {
    Ok(match cfg.gain.network {
        NetworkChoice::Synthesized => synthesize_matching_detailed(&cfg.synthesis)?.0,
        NetworkChoice::Reference => MatchingNetworkValues::REFERENCE,
        NetworkChoice::Corenormalized => {
            let pf = pump_filter(cfg)?;
            corenormalize(
                &cfg.synthesis,
                &pf,
                cfg.pump_filter.tol,
                cfg.pump_filter.max_iter,
            )?
            .0
        }
    })
}

/// Pumped array terminating `net`, with the pump strength derived from the
/// design negative resistance unless given.
pub fn pumped_array(cfg: &ProjectConfig, net: &MatchingNetworkValues) -> Result<PumpedArrayParams> {
    let p = &cfg.pump;
    let l = p.l_array.unwrap_or(net.l_array);
    let c1 = p.c1.unwrap_or(net.c1);
    let z0 = p.z0.unwrap_or(cfg.synthesis.z0);
    let base = PumpedArrayParams::new(l, p.c3_phi_p.unwrap_or(1.0), z0, c1, p.pump_freq_hz)?;
    Ok(match p.c3_phi_p {
        Some(_) => base,
        None => {
            let rp = SynthesisSpec {
                l_array: l,
                ..cfg.synthesis
            }
            .design_negative_resistance();
            base.with_negative_resistance(rp)?
        }
    })
}

fn element_row(label: &str, v: &[f64; 6]) -> String {
    format!(
        "{label:<12}{:>10.3}{:>10.3}{:>10.3}{:>10.4}{:>10.4}{:>10.4}",
        v[0] * 1e9,
        v[1] * 1e9,
        v[2] * 1e12,
        v[3] * 1e12,
        v[4] * 1e12,
        v[5] * 1e12
    )
}

pub fn synthesize(cfg: &ProjectConfig) -> Result<Outputs> {
    let (values, inter) = synthesize_matching_detailed(&cfg.synthesis)?;
    let mut out = Outputs::default();
    out.line(format!(
        "{:<12}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}",
        "", "L_a[nH]", "L2[nH]", "Cc[pF]", "C12[pF]", "C1[pF]", "C2[pF]"
    ));
    out.line(element_row("synthesized", &values.as_array()));
    out.line(element_row(
        "reference",
        &MatchingNetworkValues::REFERENCE.as_array(),
    ));
    let mut record = json!({
        "values": values,
        "intermediates": inter,
        "design_negative_resistance_ohm": cfg.synthesis.design_negative_resistance(),
    });
    if cfg.pump_filter.corenormalize {
        let pf = pump_filter(cfg)?;
        let (co, iters) = corenormalize(
            &cfg.synthesis,
            &pf,
            cfg.pump_filter.tol,
            cfg.pump_filter.max_iter,
        )?;
        out.line(element_row("corenorm.", &co.as_array()));
        out.line(format!("corenormalization converged in {iters} passes"));
        record["corenormalized"] = json!({ "values": co, "iterations": iters });
    }
    out.line(format!(
        "design negative resistance {:.2} ohm",
        cfg.synthesis.design_negative_resistance()
    ));
    out.json("synthesis.json", &record)?;
    let ladder = values.ladder(cfg.synthesis.z0)?;
    let mut netlist = ladder.to_json()?;
    netlist.push('\n');
    out.raw("matching_netlist.json", netlist.into_bytes());
    Ok(out)
}

pub fn pump_filter_cmd(cfg: &ProjectConfig) -> Result<Outputs> {
    let pf_cfg = &cfg.pump_filter;
    let (values, check) = synthesize_pump_filter(&pf_cfg.design)?;
    let z0 = pf_cfg.design.z0;
    let ladder = values.ladder(z0)?;

    let band = |lo: f64, hi: f64| FrequencyGrid::linspace(lo, hi, 601);
    let rej = cascade(
        &ladder,
        &band(pf_cfg.rejection_band_hz.0, pf_cfg.rejection_band_hz.1)?,
    )?;
    let worst_rejection_db = rej
        .s21
        .iter()
        .map(|s| -20.0 * s.norm().log10())
        .fold(f64::INFINITY, f64::min);
    let ph = cascade(
        &ladder,
        &band(pf_cfg.phase_band_hz.0, pf_cfg.phase_band_hz.1)?,
    )?;
    let phase_range = |s: &[Complex64]| {
        let v: Vec<f64> = s.iter().map(|c| c.im.atan2(c.re).to_degrees()).collect();
        (
            v.iter().copied().fold(f64::INFINITY, f64::min),
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let s11_phase = phase_range(&ph.s11);
    let s22_phase = phase_range(&ph.s22);

    let mut out = Outputs::default();
    out.line(format!(
        "L3 {:.3} pH  L4 {:.3} pH  C3 {:.4} pF  C4 {:.4} pF  C34 {:.4} pF",
        values.l3 * 1e12,
        values.l4 * 1e12,
        values.c3 * 1e12,
        values.c4 * 1e12,
        values.c34 * 1e12
    ));
    out.line(format!(
        "peak {:.3} GHz ({:.2} dB), 3 dB band {:.3}-{:.3} GHz",
        check.peak_hz / 1e9,
        check.peak_s21_db,
        check.lower_3db_hz / 1e9,
        check.upper_3db_hz / 1e9
    ));
    out.line(format!(
        "rejection over {:.3}-{:.3} GHz: >= {:.1} dB",
        pf_cfg.rejection_band_hz.0 / 1e9,
        pf_cfg.rejection_band_hz.1 / 1e9,
        worst_rejection_db
    ));
    out.line(format!(
        "reflection phase over {:.3}-{:.3} GHz: s11 {:.2}..{:.2} deg, s22 {:.2}..{:.2} deg",
        pf_cfg.phase_band_hz.0 / 1e9,
        pf_cfg.phase_band_hz.1 / 1e9,
        s11_phase.0,
        s11_phase.1,
        s22_phase.0,
        s22_phase.1
    ));
    let mut record = json!({
        "values": values,
        "check": check,
        "rejection_band_hz": pf_cfg.rejection_band_hz,
        "min_rejection_db": worst_rejection_db,
        "phase_band_hz": pf_cfg.phase_band_hz,
        "s11_phase_deg": s11_phase,
        "s22_phase_deg": s22_phase,
        "reference_check": characterize_pump_filter(&PumpFilterValues::REFERENCE, z0, pf_cfg.design.center)?,
    });
    if pf_cfg.corenormalize {
        let (co, iters) = corenormalize(&cfg.synthesis, &values, pf_cfg.tol, pf_cfg.max_iter)?;
        out.line(format!(
            "corenormalized match after {iters} passes, effective L_a {:.4} nH",
            co.l_array * 1e9
        ));
        record["corenormalized"] = json!({ "values": co, "iterations": iters });
    }
    out.json("pump_filter.json", &record)?;
    let mut netlist = ladder.to_json()?;
    netlist.push('\n');
    out.raw("pump_filter_netlist.json", netlist.into_bytes());
    let wide = FrequencyGrid::linspace(
        0.05 * pf_cfg.design.center,
        2.0 * pf_cfg.design.center,
        4001,
    )?;
    let mut csv = Vec::new();
    cascade(&ladder, &wide)?.write_csv(&mut csv)?;
    out.raw("pump_filter_sparams.csv", csv);
    Ok(out)
}

fn metrics_line(m: &FlatTopMetrics) -> String {
    format!(
        "peak {:.2} dB, centre {:.4} GHz, 3 dB bw {:.1} MHz, ripple band {:.1} MHz ({:.3} dB)",
        m.peak_db,
        m.center_hz / 1e9,
        m.bw_3db_hz / 1e6,
        m.bw_ripple_hz / 1e6,
        m.ripple_db
    )
}

pub struct GainRun {
    pub net: MatchingNetworkValues,
    pub array: PumpedArrayParams,
    pub profile: GainProfile,
    pub metrics: FlatTopMetrics,
}

pub fn gain_run(cfg: &ProjectConfig) -> Result<GainRun> {
    let net = matching_network(cfg)?;
    let array = pumped_array(cfg, &net)?;
    let profile = gain_profile(&net, &array, &grid(&cfg.gain.grid)?)?;
    let metrics = flat_top_metrics(&profile, cfg.gain.ripple_budget_db)?;
    Ok(GainRun {
        net,
        array,
        profile,
        metrics,
    })
}

pub fn tunable(cfg: &ProjectConfig, run: &GainRun) -> Result<Vec<TunablePoint>> {
    if cfg.gain.sweep_pump_hz.is_empty() {
        bail!("gain.sweep_pump_hz is empty");
    }
    Ok(tunable_band_sweep(
        &run.net,
        &run.array,
        &cfg.gain.sweep_pump_hz,
        cfg.gain.gain_target_db,
        cfg.gain.ripple_budget_db,
        &grid(&cfg.gain.grid)?,
    )?)
}

#[derive(Serialize)]
pub struct CompressionSummary {
    pub stark_coeff_per_w: f64,
    pub calibrated: bool,
    pub calibration_freq_hz: f64,
    pub freq_hz: Vec<f64>,
    pub small_signal_db: Vec<f64>,
    pub p1db_dbm: Vec<Option<f64>>,
    /// Grid points whose fixed point diverged at some sampled power.
    pub flagged_freq_hz: Vec<f64>,
}

pub fn compression(cfg: &ProjectConfig, run: &GainRun) -> Result<(CompressionSummary, Vec<u8>)> {
    let c = &cfg.gain.compression;
    let cal_freq = c.calibration_freq_hz.unwrap_or(run.metrics.center_hz);
    let (k, calibrated) = match c.stark_coeff {
        Some(k) => (k, false),
        None => (
            calibrate_stark_coeff(
                &run.net,
                &run.array,
                cal_freq,
                dbm_to_watts(c.p1db_target_dbm),
            )?,
            true,
        ),
    };
    let powers: Vec<f64> = c
        .powers_dbm
        .values()?
        .into_iter()
        .map(dbm_to_watts)
        .collect();
    let g = grid(&c.grid)?;
    let sweep = compression_sweep(&run.net, &run.array, k, &powers, &g, c.resolution_db)?;
    let flagged_freq_hz = g
        .points()
        .iter()
        .enumerate()
        .filter(|(i, _)| sweep.flagged.iter().any(|row| row[*i]))
        .map(|(_, f)| *f)
        .collect();
    let mut csv = Vec::new();
    sweep.write_csv(&mut csv)?;
    Ok((
        CompressionSummary {
            stark_coeff_per_w: k,
            calibrated,
            calibration_freq_hz: cal_freq,
            freq_hz: g.points().to_vec(),
            small_signal_db: sweep.small_signal.gain_db.clone(),
            p1db_dbm: sweep.p1db_w.iter().map(|p| p.map(watts_to_dbm)).collect(),
            flagged_freq_hz,
        },
        csv,
    ))
}

pub fn gain_cmd(cfg: &ProjectConfig, sweep_pump: bool, with_compression: bool) -> Result<Outputs> {
    let run = gain_run(cfg)?;
    let mut out = Outputs::default();
    out.line(format!(
        "pump strength c3*phi_p = {:.5}",
        run.array.c3_phi_p
    ));
    out.line(metrics_line(&run.metrics));
    let mut csv = Vec::new();
    run.profile.write_csv(&mut csv)?;
    out.raw("gain_profile.csv", csv);
    out.json(
        "gain_metrics.json",
        &json!({ "c3_phi_p": run.array.c3_phi_p, "metrics": run.metrics }),
    )?;
    if sweep_pump {
        let points = tunable(cfg, &run)?;
        out.line(format!(
            "{:>12}{:>10}{:>10}{:>12}{:>12}",
            "pump[GHz]", "c3phi", "peak[dB]", "centre[GHz]", "bw3dB[MHz]"
        ));
        for p in &points {
            match (&p.metrics, &p.flag) {
                (Some(m), _) => out.line(format!(
                    "{:>12.3}{:>10.5}{:>10.2}{:>12.4}{:>12.1}",
                    p.pump_freq_hz / 1e9,
                    p.c3_phi_p,
                    m.peak_db,
                    m.center_hz / 1e9,
                    m.bw_3db_hz / 1e6
                )),
                (None, flag) => out.line(format!(
                    "{:>12.3}  {}",
                    p.pump_freq_hz / 1e9,
                    flag.as_deref().unwrap_or("no metrics")
                )),
            }
        }
        out.json("tunable_sweep.json", &points)?;
    }
    if with_compression {
        let (summary, csv) = compression(cfg, &run)?;
        let i = nearest(&summary.freq_hz, summary.calibration_freq_hz);
        out.line(format!(
            "Stark coefficient {:.4e} 1/W ({}); P1dB at {:.4} GHz: {}",
            summary.stark_coeff_per_w,
            if summary.calibrated {
                "calibrated"
            } else {
                "given"
            },
            summary.freq_hz[i] / 1e9,
            summary.p1db_dbm[i].map_or("none in sweep".into(), |p| format!("{p:.2} dBm"))
        ));
        if !summary.flagged_freq_hz.is_empty() {
            out.line(format!(
                "{} grid points flagged (fixed point diverged)",
                summary.flagged_freq_hz.len()
            ));
        }
        out.raw("compression.csv", csv);
        out.json("compression.json", &summary)?;
    }
    Ok(out)
}

fn nearest(xs: &[f64], x: f64) -> usize {
    xs.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map_or(0, |v| v.0)
}

fn tones(cfg: &ProjectConfig) -> Result<ToneSet> {
    let i = &cfg.imd;
    Ok(ToneSet::equal_power(
        &i.tones_hz,
        i.power_dbm,
        i.pump_freq_hz,
    )?)
}

pub fn imd_enumerate(cfg: &ProjectConfig) -> Result<Outputs> {
    let t = tones(cfg)?;
    let products = enumerate_products(&t, cfg.imd.max_order, cfg.imd.band_hz)?;
    let mut csv = String::from("freq_hz,power_dbm,n_p");
    for k in 1..=t.tones.len() {
        write!(csv, ",n_{k}")?;
    }
    csv.push_str(",order\n");
    let mut out = Outputs::default();
    out.line(format!(
        "{} products of order <= {} in {:.4}-{:.4} GHz",
        products.len(),
        cfg.imd.max_order,
        cfg.imd.band_hz.0 / 1e9,
        cfg.imd.band_hz.1 / 1e9
    ));
    for p in &products {
        let tr = p.primary();
        write!(csv, "{},,{}", p.freq_hz, tr.n_p)?;
        for n in &tr.n {
            write!(csv, ",{n}")?;
        }
        writeln!(csv, ",{}", p.order)?;
        out.line(format!(
            "{:>12.6} GHz  order {}  (n_p {}, n {:?})",
            p.freq_hz / 1e9,
            p.order,
            tr.n_p,
            tr.n
        ));
    }
    out.raw("imd_products.csv", csv.into_bytes());
    out.json("imd_products.json", &products)?;
    Ok(out)
}

pub fn imd_spectrum(cfg: &ProjectConfig) -> Result<Outputs> {
    let run = gain_run(cfg)?;
    let t = tones(cfg)?;
    let lines = mixer_spectrum(&t, a3_for_iip3(cfg.imd.iip3_dbm), cfg.imd.a5, &run.profile)?;
    let mut csv = Vec::new();
    write_spectrum_csv(&lines, t.tones.len(), &mut csv)?;
    let mut out = Outputs::default();
    out.line(format!(
        "{} spectral lines at {:.1} dBm per tone",
        lines.len(),
        cfg.imd.power_dbm
    ));
    for l in lines
        .iter()
        .filter(|l| l.triple.order() <= cfg.imd.max_order)
    {
        out.line(format!(
            "{:>12.6} GHz  {:>8.2} dBm  n {:?}",
            l.freq_hz / 1e9,
            l.power_dbm,
            l.triple.n
        ));
    }
    out.raw("imd_spectrum.csv", csv);
    Ok(out)
}

fn read_sweep(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading sweep {}", path.display()))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = cols.iter().map(|c| c.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 3 => rows.push((v[0], v[1], v[2])),
            // A non-numeric first line is a header.
            None if rows.is_empty() && ln == 0 => {}
            _ => bail!(
                "{}:{}: expected p_in_dbm,p_signal_dbm,p_product_dbm",
                path.display(),
                ln + 1
            ),
        }
    }
    Ok(rows)
}

pub struct ImdFit {
    pub sweep: Vec<(f64, f64, f64)>,
    pub fit: InterceptFit,
}

pub fn imd_fit_run(cfg: &ProjectConfig, input: Option<&Path>) -> Result<ImdFit> {
    let i = &cfg.imd;
    let order: i32 = i.product.iter().map(|n| n.abs()).sum();
    let sweep = match input {
        Some(p) => read_sweep(p)?,
        None => {
            if i.tones_hz.len() < 2 {
                bail!("imd.tones_hz needs two tones for a two-tone sweep");
            }
            let run = gain_run(cfg)?;
            two_tone_sweep(
                i.tones_hz[0],
                i.tones_hz[1],
                i.pump_freq_hz,
                &i.sweep_dbm.values()?,
                a3_for_iip3(i.iip3_dbm),
                i.a5,
                &run.profile,
                &i.product,
            )?
        }
    };
    let fit = match order {
        3 => fit_power_laws(&sweep)?,
        5 => fit_fifth_order(&sweep)?,
        _ => bail!(
            "imd.product {:?} has order {order}; only 3 and 5 are fitted",
            i.product
        ),
    };
    Ok(ImdFit { sweep, fit })
}

pub fn imd_fit(cfg: &ProjectConfig, input: Option<&Path>) -> Result<Outputs> {
    let r = imd_fit_run(cfg, input)?;
    let mut out = Outputs::default();
    out.line(format!(
        "intercept {:.2} dBm per tone{}",
        r.fit.intercept_dbm,
        if r.fit.low_confidence {
            " (low confidence)"
        } else {
            ""
        }
    ));
    out.line(format!(
        "signal fit over {:.1}..{:.1} dBm (residual {:.3} dB), product fit over {:.1}..{:.1} dBm (residual {:.3} dB)",
        r.fit.signal.fit_window.0,
        r.fit.signal.fit_window.1,
        r.fit.signal.residual_db,
        r.fit.product.fit_window.0,
        r.fit.product.fit_window.1,
        r.fit.product.residual_db
    ));
    out.line(format!(
        "input P1dB: {}",
        r.fit
            .p1db_dbm
            .map_or("not reached".into(), |p| format!("{p:.2} dBm"))
    ));
    let mut csv = String::from("p_in_dbm,p_signal_dbm,p_product_dbm\n");
    for (a, b, c) in &r.sweep {
        writeln!(csv, "{a},{b},{c}")?;
    }
    out.raw("imd_sweep.csv", csv.into_bytes());
    out.json("imd_fit.json", &r.fit)?;
    Ok(out)
}

pub fn collisions(cfg: &ProjectConfig, pump_hz: Option<f64>) -> Result<CollisionReport> {
    let i = &cfg.imd;
    // The readout tones themselves drive the mixer.
    let t = ToneSet::equal_power(
        &i.readout_channels,
        i.power_dbm,
        pump_hz.unwrap_or(i.pump_freq_hz),
    )?;
    Ok(collision_scan(&t, &i.channels(), i.collision_max_order)?)
}

pub fn imd_collide(cfg: &ProjectConfig, pump_hz: Option<f64>) -> Result<Outputs> {
    let report = collisions(cfg, pump_hz)?;
    let mut out = Outputs::default();
    out.line(format!(
        "{} collisions within +/-{:.2} MHz at pump {:.4} GHz",
        report.collisions.len(),
        cfg.imd.collision_window_hz / 1e6,
        pump_hz.unwrap_or(cfg.imd.pump_freq_hz) / 1e9
    ));
    for c in &report.collisions {
        let tr = c.product.primary();
        out.line(format!(
            "channel {} ({:.4} GHz): product {:.6} GHz, detuning {:+.3} MHz, order {}, (n_p {}, n {:?})",
            c.channel + 1,
            cfg.imd.readout_channels[c.channel] / 1e9,
            c.product.freq_hz / 1e9,
            c.detuning_hz / 1e6,
            c.product.order,
            tr.n_p,
            tr.n
        ));
    }
    out.json("collisions.json", &report)?;
    Ok(out)
}

pub fn simulation_config(cfg: &ProjectConfig) -> SimulationConfig {
    let r = &cfg.readout;
    SimulationConfig {
        drive_amps: r
            .systems
            .iter()
            .zip(&r.photons)
            .map(|(s, n)| s.drive_for_photons(*n))
            .collect(),
        systems: r.systems.clone(),
        eta: r.eta.clone(),
        duration_s: r.duration_s,
        timestep_s: r.timestep_s,
        trajectories: r.trajectories,
        seed: cfg.seed,
        injected_lines: r.injected_lines.clone(),
        preparations: SimulationConfig::reference_preparations(r.systems.len()),
    }
}

fn prep_label(p: &[QubitState]) -> String {
    p.iter()
        .map(|s| if s.is_excited() { 'e' } else { 'g' })
        .collect()
}

fn mean_record(set: &RecordSet, prep: usize, ch: usize) -> paramp_core::readout::IQRecord {
    let recs = &set.records[prep][ch];
    let n = recs.len() as f64;
    let mut samples = recs[0].samples.clone();
    for r in &recs[1..] {
        for (a, b) in samples.iter_mut().zip(&r.samples) {
            *a += b;
        }
    }
    for s in &mut samples {
        *s /= n;
    }
    paramp_core::readout::IQRecord {
        timestep_s: set.timestep_s,
        samples,
    }
}

pub fn readout_simulate(cfg: &ProjectConfig) -> Result<Outputs> {
    let sim = simulation_config(cfg);
    let set = simulate_records(&sim)?;
    let mut out = Outputs::default();
    out.line(format!(
        "{} preparations x {} channels x {} trajectories, {} samples each",
        set.preparations.len(),
        set.channels(),
        sim.trajectories,
        sim.samples()
    ));
    let mut summary = Vec::new();
    for (pi, prep) in set.preparations.iter().enumerate() {
        let label = prep_label(prep);
        for ch in 0..set.channels() {
            let mean = mean_record(&set, pi, ch);
            let total: Complex64 = mean.samples.iter().sum();
            summary.push(json!({
                "preparation": label,
                "channel": ch + 1,
                "mean_integrated": [total.re, total.im],
            }));
            let mut csv = Vec::new();
            mean.write_csv(&mut csv)?;
            out.raw(&format!("records/mean_{label}_ch{}.csv", ch + 1), csv);
            for (t, rec) in set.records[pi][ch]
                .iter()
                .take(cfg.readout.export_trajectories)
                .enumerate()
            {
                let mut csv = Vec::new();
                rec.write_csv(&mut csv)?;
                out.raw(&format!("records/{label}_ch{}_traj{t:05}.csv", ch + 1), csv);
            }
        }
    }
    out.json(
        "readout_summary.json",
        &json!({
            "timestep_s": set.timestep_s,
            "samples": sim.samples(),
            "trajectories": sim.trajectories,
            "drive_amps": sim.drive_amps,
            "records": summary,
        }),
    )?;
    Ok(out)
}

pub fn classify_run(cfg: &ProjectConfig) -> Result<FidelityReport> {
    let set = simulate_records(&simulation_config(cfg))?;
    Ok(demodulate_and_classify(&set, &cfg.readout.classifier)?)
}

pub fn readout_classify(cfg: &ProjectConfig) -> Result<Outputs> {
    let report = classify_run(cfg)?;
    let mut out = Outputs::default();
    for (k, c) in report.channels.iter().enumerate() {
        out.line(format!(
            "channel {}: fidelity {:.4} (P0|g {:.4}, P1|e {:.4}), separation {:.2} sigma{}",
            k + 1,
            c.fidelity,
            c.p0_given_g,
            c.p1_given_e,
            c.separation_sigma,
            c.warning
                .as_ref()
                .map_or(String::new(), |w| format!("  [{w}]"))
        ));
    }
    if let (Some(e), Some(s)) = (report.eps12, report.eps12_sigma) {
        out.line(format!("eps12 {e:+.4} +/- {s:.4}"));
    }
    if let Some(e) = report.eps21 {
        out.line(format!("eps21 {e:+.4}"));
    }
    out.json("fidelity.json", &report)?;
    Ok(out)
}

pub fn budget_run(cfg: &ProjectConfig) -> Result<(NoiseBudget, f64)> {
    let r = &cfg.readout;
    let nb = &r.noise_budget;
    if r.eta.len() < 2 && nb.eta_corr.is_none() {
        bail!("readout.noise_budget.eta_corr is required with fewer than two channels");
    }
    let delta = if r.eta.len() >= 2 {
        delta_a_db(r.eta[0], r.eta[1])?
    } else {
        0.0
    };
    let eta = match nb.eta_corr {
        Some(e) => e,
        None => eta_at_amplifier_input(r.eta[0], r.eta[1], nb.circulator_loss_db)?,
    };
    Ok((noise_budget_solve(nb.g_spa_db, nb.nvr_db, eta)?, delta))
}

pub fn readout_budget(cfg: &ProjectConfig) -> Result<Outputs> {
    let (b, delta) = budget_run(cfg)?;
    let mut out = Outputs::default();
    out.line(format!("inter-channel loss difference {delta:.3} dB"));
    out.line(format!(
        "eta at amplifier input {:.4}: n_spa {:.4}, n_sys {:.3}",
        b.eta_corr, b.n_spa, b.n_sys
    ));
    out.json(
        "noise_budget.json",
        &json!({ "delta_a_db": delta, "budget": b }),
    )?;
    Ok(out)
}

pub fn report(cfg: &ProjectConfig) -> Result<Outputs> {
    let (values, _) = synthesize_matching_detailed(&cfg.synthesis)?;
    let (pf, pf_check) = synthesize_pump_filter(&cfg.pump_filter.design)?;
    let run = gain_run(cfg)?;
    let sweep = tunable(cfg, &run)?;
    let held: Vec<&FlatTopMetrics> = sweep.iter().filter_map(|p| p.metrics.as_ref()).collect();
    let (comp, _) = compression(cfg, &run)?;
    let ci = nearest(&comp.freq_hz, comp.calibration_freq_hz);
    let collide = collisions(cfg, None)?;
    let fit = imd_fit_run(cfg, None)?;
    let fidelity = classify_run(cfg)?;
    let (budget, delta) = budget_run(cfg)?;

    let summary = json!({
        "matching_network": values,
        "pump_filter": { "values": pf, "check": pf_check },
        "gain": {
            "network": cfg.gain.network,
            "c3_phi_p": run.array.c3_phi_p,
            "metrics": run.metrics,
        },
        "tunable": {
            "pump_range_hz": [
                cfg.gain.sweep_pump_hz.iter().copied().fold(f64::INFINITY, f64::min),
                cfg.gain.sweep_pump_hz.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ],
            "points_holding_target": held.len(),
            "points": sweep.len(),
            "min_bw_3db_hz": held.iter().map(|m| m.bw_3db_hz).fold(f64::INFINITY, f64::min),
        },
        "compression": {
            "stark_coeff_per_w": comp.stark_coeff_per_w,
            "freq_hz": comp.freq_hz[ci],
            "p1db_dbm": comp.p1db_dbm[ci],
        },
        "imd": {
            "intercept_dbm": fit.fit.intercept_dbm,
            "p1db_dbm": fit.fit.p1db_dbm,
            "collisions_at_pump": collide.collisions.len(),
        },
        "readout": {
            "fidelity": fidelity.channels.iter().map(|c| c.fidelity).collect::<Vec<_>>(),
            "eps12": fidelity.eps12,
            "eps21": fidelity.eps21,
            "delta_a_db": delta,
            "eta_corr": budget.eta_corr,
            "n_spa": budget.n_spa,
            "n_sys": budget.n_sys,
        },
    });
    let mut out = Outputs::default();
    out.line(format!(
        "matching: {}",
        element_row("", &values.as_array()).trim()
    ));
    out.line(format!("gain: {}", metrics_line(&run.metrics)));
    out.line(format!(
        "tunable: {}/{} pumps hold {:.1} dB",
        held.len(),
        sweep.len(),
        cfg.gain.gain_target_db
    ));
    out.line(format!(
        "compression: P1dB {} at {:.4} GHz",
        comp.p1db_dbm[ci].map_or("n/a".into(), |p| format!("{p:.2} dBm")),
        comp.freq_hz[ci] / 1e9
    ));
    out.line(format!(
        "imd: intercept {:.2} dBm, {} collisions at {:.4} GHz pump",
        fit.fit.intercept_dbm,
        collide.collisions.len(),
        cfg.imd.pump_freq_hz / 1e9
    ));
    out.line(format!(
        "readout: fidelity {:?}, eps12 {:?}",
        fidelity
            .channels
            .iter()
            .map(|c| (c.fidelity * 1e4).round() / 1e4)
            .collect::<Vec<_>>(),
        fidelity.eps12.map(|e| (e * 1e4).round() / 1e4)
    ));
    out.line(format!(
        "noise: n_spa {:.3}, n_sys {:.2}",
        budget.n_spa, budget.n_sys
    ));
    out.json("summary.json", &summary)?;
    Ok(out)
}
