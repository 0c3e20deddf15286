//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Tolerances are pinned below. Any failing criterion makes the binary exit
//! non-zero after every criterion has been reported.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use paramp_core::gain::{flat_top_metrics, gain_profile, GainProfile};
use paramp_core::imd::{
    a3_for_iip3, collision_scan, enumerate_products, fit_power_laws, im3_suppression_db,
    mixer_spectrum, two_tone_sweep, ReadoutChannel, SpectrumLine, ToneSet,
};
use paramp_core::netlist::{
    abcd_product, abcd_to_s, cascade, FrequencyGrid, LadderNetwork, LumpedElement,
};
use paramp_core::readout::{
    delta_a_db, demodulate_and_classify, noise_budget_solve, pointer_states, simulate_records,
    ClassifierConfig, DispersiveSystem, FidelityReport, InjectedLine, SimulationConfig,
};
use paramp_core::snail::PumpedArrayParams;
use paramp_core::synthesis::{
    synthesize_matching, synthesize_pump_filter, MatchingNetworkValues, PumpFilterSpec,
    SynthesisSpec,
};

// Criterion 1
const NOMINAL_TOL: f64 = 0.15;
const ORACLE_TOL: f64 = 1e-3;
// Independent hand evaluation of the closed-form synthesis.
const ORACLE: [f64; 4] = [
    7.210307747255173e-10,
    3.4646897428110376e-14,
    6.43150337743605e-14,
    2.4752414565621855e-13,
];
// Criterion 2
const CENTER_TOL: f64 = 0.02;
const RIPPLE_MAX_DB: f64 = 0.3;
const RIPPLE_FBW: f64 = 0.03;
const BW_NOMINAL_HZ: f64 = 500e6;
const BW_TOL: f64 = 0.2;
const GRID_POINTS: usize = 10_001;
// Criterion 3
const REJECTION_DB: f64 = 60.0;
const SHORT_PHASE_TOL_DEG: f64 = 20.0;
// Criterion 4
const FREQ_TOL_HZ: f64 = 1e3;
// Criterion 5
const SLOPE_TOL: f64 = 0.02;
const IIP3_TOL_DB: f64 = 0.2;
const SUPPRESSION_FLOOR_DB: f64 = 23.0;
// Criterion 6
const N_SPA_TOL: f64 = 0.02;
const DELTA_A_TOL_DB: f64 = 0.01;
// Criterion 7
const FIDELITY_RANGE: (f64, f64) = (0.98, 0.999);
const TRAJECTORIES: usize = 5000;
const READOUT_BUDGET: Duration = Duration::from_secs(60);
// Criterion 8
const PROPERTY_CASES: u32 = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let v = synthesize_matching(&SynthesisSpec::reference_design()).unwrap();
    let elapsed = t.elapsed();
    let nominal = MatchingNetworkValues::REFERENCE;
    let got = [v.l2, v.c12, v.c1, v.c2];
    let want = [nominal.l2, nominal.c12, nominal.c1, nominal.c2];
    let nominal_err = got
        .iter()
        .zip(&want)
        .map(|(g, w)| ((g - w) / w).abs())
        .fold(0.0, f64::max);
    let oracle_err = got
        .iter()
        .zip(&ORACLE)
        .map(|(g, w)| ((g - w) / w).abs())
        .fold(0.0, f64::max);
    outcome(
        nominal_err <= NOMINAL_TOL && oracle_err <= ORACLE_TOL && elapsed < Duration::from_secs(1),
        format!(
            "L2 {:.3} nH, C12 {:.4} pF, C1 {:.4} pF, C2 {:.4} pF; worst vs nominal {:.1}%, vs oracle {:.1e}; {:?}",
            v.l2 * 1e9,
            v.c12 * 1e12,
            v.c1 * 1e12,
            v.c2 * 1e12,
            100.0 * nominal_err,
            oracle_err,
            elapsed
        ),
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let spec = SynthesisSpec::reference_design();
    let net = synthesize_matching(&spec).unwrap();
    let arr = PumpedArrayParams::new(spec.l_array, 0.0, spec.z0, net.c1, 2.0 * spec.f0)
        .and_then(|p| p.with_negative_resistance(spec.design_negative_resistance()))
        .unwrap();
    let grid = FrequencyGrid::linspace(8e9, 10e9, GRID_POINTS).unwrap();
    let p = gain_profile(&net, &arr, &grid).unwrap();
    let m = flat_top_metrics(&p, 1.0).unwrap();
    let half = 0.5 * RIPPLE_FBW * spec.f0;
    let ripple = p.ripple_within(spec.f0 - half, spec.f0 + half).unwrap();
    let elapsed = t.elapsed();
    let center_ok = (m.center_hz / spec.f0 - 1.0).abs() <= CENTER_TOL;
    let bw_ok = (m.bw_3db_hz / BW_NOMINAL_HZ - 1.0).abs() <= BW_TOL;
    outcome(
        center_ok && bw_ok && ripple <= RIPPLE_MAX_DB && elapsed < Duration::from_secs(1),
        format!(
            "peak {:.2} dB, centre {:.4} GHz, 3 dB bandwidth {:.0} MHz, ripple over ±{:.0} MHz {:.3} dB (limit {RIPPLE_MAX_DB}); {:?}",
            m.peak_db,
            m.center_hz / 1e9,
            m.bw_3db_hz / 1e6,
            half / 1e6,
            ripple,
            elapsed
        ),
    )
}

fn criterion_3() -> Outcome {
    let (values, check) = synthesize_pump_filter(&PumpFilterSpec::new(20e9, 2e9, 50.0)).unwrap();
    let ladder = values.ladder(50.0).unwrap();
    let stop = cascade(
        &ladder,
        &FrequencyGrid::linspace(9.0e9, 9.2e9, 201).unwrap(),
    )
    .unwrap();
    let rejection = stop
        .s21
        .iter()
        .map(|s| check.peak_s21_db - 20.0 * s.norm().log10())
        .fold(f64::INFINITY, f64::min);
    let band = cascade(
        &ladder,
        &FrequencyGrid::linspace(8.85e9, 9.93e9, 1081).unwrap(),
    )
    .unwrap();
    let phase_err = band
        .s11
        .iter()
        .chain(&band.s22)
        .map(|s| 180.0 - s.arg().to_degrees().abs())
        .fold(0.0, f64::max);
    outcome(
        rejection >= REJECTION_DB && phase_err <= SHORT_PHASE_TOL_DEG,
        format!("minimum rejection {rejection:.1} dB, worst reflection phase offset from 180° {phase_err:.2}°"),
    )
}

fn criterion_4() -> Outcome {
    let t = ToneSet::equal_power(&[9.07e9, 9.12e9], -110.0, 18.11e9).unwrap();
    let products = enumerate_products(&t, 5, (8.855e9, 9.255e9)).unwrap();
    let order_at = |f: f64| {
        products
            .iter()
            .find(|p| (p.freq_hz - f).abs() <= FREQ_TOL_HZ)
            .map(|p| p.order)
    };
    let facts_ok = order_at(9.02e9) == Some(3) && order_at(8.97e9) == Some(5);

    let (fp, tones) = (18.192e9, [9.098e9, 9.035e9]);
    let t = ToneSet::equal_power(&tones, -110.0, fp).unwrap();
    let channels: Vec<ReadoutChannel> = tones
        .iter()
        .map(|&freq_hz| ReadoutChannel {
            freq_hz,
            acq_bw_hz: 5e6,
        })
        .collect();
    let scan = collision_scan(&t, &channels, 3).unwrap();
    let got: BTreeSet<(usize, i64)> = scan
        .collisions
        .iter()
        .map(|c| (c.channel, c.product.freq_hz.round() as i64))
        .collect();
    let mut oracle = BTreeSet::new();
    for np in -3..=3 {
        for n1 in -3i32..=3 {
            for n2 in -3i32..=3 {
                if n1.abs() + n2.abs() > 3 {
                    continue;
                }
                let f = np as f64 * fp + n1 as f64 * tones[0] + n2 as f64 * tones[1];
                for (ci, fc) in tones.iter().enumerate() {
                    let foreign = if ci == 0 { n2 != 0 } else { n1 != 0 };
                    if foreign && (f - fc).abs() <= 5e6 {
                        oracle.insert((ci, f.round() as i64));
                    }
                }
            }
        }
    }
    let pair_ok = [9.031e9, 9.039e9].iter().all(|want| {
        scan.collisions
            .iter()
            .any(|c| (c.product.freq_hz - want).abs() <= FREQ_TOL_HZ)
    });
    outcome(
        facts_ok && pair_ok && got == oracle,
        format!(
            "IM3 at 9.02 GHz and IM5 at 8.97 GHz {}; collisions {:?} Hz, brute force agrees: {}",
            if facts_ok { "found" } else { "missing" },
            got.iter().map(|c| c.1).collect::<Vec<_>>(),
            got == oracle
        ),
    )
}

fn line_dbm(lines: &[SpectrumLine], n: &[i32]) -> f64 {
    lines
        .iter()
        .find(|l| l.triple.n == n)
        .map(|l| l.power_dbm)
        .unwrap()
}

fn criterion_5() -> Outcome {
    let (f1, f2, fp) = (9.07e9, 9.12e9, 18.11e9);
    let grid = FrequencyGrid::linspace(8e9, 10e9, 201).unwrap();
    let flat = GainProfile::new(grid, vec![20.0; 201], vec![0.0; 201]).unwrap();
    let a3 = a3_for_iip3(-102.0);
    let at = |p: f64, a5: f64| {
        mixer_spectrum(
            &ToneSet::equal_power(&[f1, f2], p, fp).unwrap(),
            a3,
            a5,
            &flat,
        )
        .unwrap()
    };
    let (lo, hi) = (at(-150.0, 1e19), at(-140.0, 1e19));
    let slopes: Vec<f64> = [vec![1, 0], vec![2, -1], vec![3, -2]]
        .iter()
        .map(|n| (line_dbm(&hi, n) - line_dbm(&lo, n)) / 10.0)
        .collect();
    let slopes_ok = slopes
        .iter()
        .zip([1.0, 3.0, 5.0])
        .all(|(s, w)| (s - w).abs() <= SLOPE_TOL);

    let powers: Vec<f64> = (0..=40).map(|i| -140.0 + i as f64).collect();
    let sweep = two_tone_sweep(f1, f2, fp, &powers, a3, 0.0, &flat, &[2, -1]).unwrap();
    let fit = fit_power_laws(&sweep).unwrap();

    let analytic = im3_suppression_db(-102.0, -120.0);
    let spectrum = at(-120.0, 0.0);
    let simulated = line_dbm(&spectrum, &[1, 0]) - line_dbm(&spectrum, &[2, -1]);
    outcome(
        slopes_ok
            && (fit.intercept_dbm + 102.0).abs() <= IIP3_TOL_DB
            && (analytic - 36.0).abs() <= 1e-9
            && simulated >= SUPPRESSION_FLOOR_DB,
        format!(
            "slopes {:.4}/{:.4}/{:.4}, fitted IIP3 {:.3} dBm, suppression {analytic:.2} dB (mixer spectrum {simulated:.2} dB)",
            slopes[0], slopes[1], slopes[2], fit.intercept_dbm
        ),
    )
}

fn criterion_6() -> Outcome {
    let b = noise_budget_solve(20.0, 8.0, 0.38).unwrap();
    let da = delta_a_db(0.212, 0.297).unwrap();
    outcome(
        (b.n_spa - 0.61).abs() <= N_SPA_TOL && (da + 1.46).abs() <= DELTA_A_TOL_DB,
        format!(
            "n_spa {:.4} photons, n_sys {:.2}, δA {da:.4} dB",
            b.n_spa, b.n_sys
        ),
    )
}

fn readout_config(photons: [f64; 2]) -> SimulationConfig {
    let systems = vec![DispersiveSystem::system1(), DispersiveSystem::system2()];
    SimulationConfig {
        drive_amps: systems
            .iter()
            .zip(photons)
            .map(|(s, n)| s.drive_for_photons(n))
            .collect(),
        systems,
        eta: vec![0.212, 0.297],
        duration_s: 400e-9,
        timestep_s: 2e-9,
        trajectories: TRAJECTORIES,
        seed: 7,
        injected_lines: vec![],
        preparations: SimulationConfig::reference_preparations(2),
    }
}

fn classify(cfg: &SimulationConfig) -> FidelityReport {
    demodulate_and_classify(
        &simulate_records(cfg).unwrap(),
        &ClassifierConfig::default(),
    )
    .unwrap()
}

fn criterion_7() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let t = Instant::now();
    pool.install(|| {
        // Look for a drive per channel that lands in the target window.
        let mut chosen: [Option<(f64, f64)>; 2] = [None, None];
        for n in [4.0, 8.0, 16.0, 24.0, 32.0] {
            let r = classify(&readout_config([n, n]));
            for (ch, slot) in chosen.iter_mut().enumerate() {
                let f = r.channels[ch].fidelity;
                if slot.is_none() && (FIDELITY_RANGE.0..=FIDELITY_RANGE.1).contains(&f) {
                    *slot = Some((n, f));
                }
            }
        }
        let [Some(c1), Some(c2)] = chosen else {
            return outcome(false, format!("no drive in {FIDELITY_RANGE:?}: {chosen:?}"));
        };
        let base = readout_config([c1.0, c2.0]);
        let quiet = classify(&base);
        let (eps0, sigma0) = (quiet.eps12.unwrap(), quiet.eps12_sigma.unwrap());

        let s2 = base.systems[1];
        let (g, e) = pointer_states(&s2, base.drive_amps[1]);
        let scale = s2.kappa_ext.sqrt() * (e - g).norm();
        let mut eps = vec![eps0];
        for frac in [0.05, 0.1, 0.2] {
            let cfg = SimulationConfig {
                injected_lines: vec![InjectedLine {
                    freq_hz: s2.readout_freq_hz,
                    amplitude: frac * scale,
                    phase_rad: (g - e).arg(),
                }],
                ..base.clone()
            };
            eps.push(classify(&cfg).eps12.unwrap());
        }
        let elapsed = t.elapsed();
        let monotone = eps.windows(2).all(|w| w[1] > w[0]);
        outcome(
            eps0.abs() <= 3.0 * sigma0 && monotone && elapsed < READOUT_BUDGET,
            format!(
                "F1 {:.4} at {} photons, F2 {:.4} at {} photons; eps12 {eps0:.4} ± {sigma0:.4}; with line {:?}; {:?} on one thread",
                c1.1, c1.0, c2.1, c2.0, &eps[1..], elapsed
            ),
        )
    })
}

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, test)
        .map_err(|e| format!("{name}: {e}"))
}

/// Kinds 0..4 are reactive, 4 and 5 resistive.
fn element(kinds: usize) -> impl Strategy<Value = LumpedElement> {
    (0..kinds, -1.0f64..1.0).prop_map(|(k, e)| {
        let s = 10f64.powf(e);
        match k {
            0 => LumpedElement::series_l(1e-9 * s),
            1 => LumpedElement::shunt_l(1e-9 * s),
            2 => LumpedElement::series_c(1e-12 * s),
            3 => LumpedElement::shunt_c(1e-12 * s),
            4 => LumpedElement::series_r(50.0 * s),
            _ => LumpedElement::shunt_r(500.0 * s),
        }
        .unwrap()
    })
}

fn close(a: Complex64, b: Complex64, scale: f64, tol: f64) -> bool {
    (a - b).norm() <= tol * scale.max(1.0)
}

fn criterion_8() -> Outcome {
    let elements = || prop::collection::vec(element(6), 1..8);
    let reactive = || prop::collection::vec(element(4), 1..8);
    let results = [
        run_property("unitarity", (reactive(), 1e9f64..20e9), |(els, f)| {
            let net = LadderNetwork::with_z0(els, 50.0).unwrap();
            let s = abcd_to_s(&net.abcd_at(f).unwrap(), 50.0, 50.0, f).unwrap();
            prop_assert!((s.s11.norm_sqr() + s.s21.norm_sqr() - 1.0).abs() < 1e-9);
            prop_assert!((s.s12.norm_sqr() + s.s22.norm_sqr() - 1.0).abs() < 1e-9);
            prop_assert!((s.s11 * s.s12.conj() + s.s21 * s.s22.conj()).norm() < 1e-9);
            Ok(())
        }),
        run_property(
            "reciprocity",
            (elements(), 1e9f64..20e9, 10.0f64..200.0),
            |(els, f, z2)| {
                let s = abcd_to_s(&abcd_product(&els, f).unwrap(), 50.0, z2, f).unwrap();
                prop_assert!(close(s.s12, s.s21, 1.0, 1e-9));
                Ok(())
            },
        ),
        run_property(
            "associativity",
            (elements(), elements(), elements(), 1e9f64..20e9),
            |(a, b, c, f)| {
                let (ma, mb, mc) = (
                    abcd_product(&a, f).unwrap(),
                    abcd_product(&b, f).unwrap(),
                    abcd_product(&c, f).unwrap(),
                );
                let (l, r) = (ma.then(&mb).then(&mc), ma.then(&mb.then(&mc)));
                let scale = ma.max_norm() * mb.max_norm() * mc.max_norm();
                for (x, y) in [(l.a, r.a), (l.b, r.b), (l.c, r.c), (l.d, r.d)] {
                    prop_assert!(close(x, y, scale, 1e-12));
                }
                Ok(())
            },
        ),
        run_property(
            "synthesis scaling",
            (
                4e9f64..12e9,
                0.01f64..0.08,
                0.1e-12f64..0.4e-12,
                1e-9f64..5e-9,
                0.2f64..5.0,
            ),
            |(f0, w, cc, l, k)| {
                let spec = SynthesisSpec {
                    f0,
                    w,
                    cc,
                    l_array: l,
                    ..SynthesisSpec::reference_design()
                };
                let Ok(base) = synthesize_matching(&spec) else {
                    return Ok(());
                };
                let scaled = synthesize_matching(&SynthesisSpec {
                    f0: k * f0,
                    l_array: l / k,
                    cc: cc / k,
                    ..spec
                })
                .unwrap();
                for (a, b) in base.as_array().iter().zip(scaled.as_array()) {
                    prop_assert!((b * k / a - 1.0).abs() < 1e-9);
                }
                Ok(())
            },
        ),
        run_property(
            "fit translation covariance",
            (
                -150.0f64..-120.0,
                0.5f64..2.0,
                12usize..40,
                5.0f64..30.0,
                -120.0f64..-80.0,
                25.0f64..50.0,
                -30.0f64..30.0,
            ),
            |(start, step, n, gain, iip3, sat_above, c)| {
                let trace = |shift: f64| -> Vec<(f64, f64, f64)> {
                    (0..n)
                        .map(|i| {
                            let p = start + i as f64 * step;
                            let sat =
                                10.0 * (1.0 + 10f64.powf((p - start - sat_above) / 10.0)).log10();
                            (
                                p + shift,
                                p + gain - sat,
                                3.0 * p + gain - 2.0 * iip3 - 3.0 * sat,
                            )
                        })
                        .collect()
                };
                let (a, b) = (
                    fit_power_laws(&trace(0.0)).unwrap(),
                    fit_power_laws(&trace(c)).unwrap(),
                );
                prop_assert!((b.intercept_dbm - a.intercept_dbm - c).abs() < 1e-9);
                match (a.p1db_dbm, b.p1db_dbm) {
                    (Some(x), Some(y)) => prop_assert!((y - x - c).abs() < 1e-9),
                    (None, None) => {}
                    _ => prop_assert!(false, "P1dB presence changed"),
                }
                Ok(())
            },
        ),
        run_property(
            "seed determinism",
            (any::<u64>(), 2usize..6, 10usize..40),
            |(seed, trajectories, samples)| {
                let cfg = SimulationConfig {
                    trajectories,
                    duration_s: samples as f64 * 2e-9,
                    seed,
                    ..readout_config([6.0, 6.0])
                };
                let (a, b) = (
                    simulate_records(&cfg).unwrap(),
                    simulate_records(&cfg).unwrap(),
                );
                prop_assert!(a == b);
                Ok(())
            },
        ),
    ];
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("six properties × {PROPERTY_CASES} cases")
        } else {
            format!("{failures:?}")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("matching synthesis values", criterion_1),
        ("synthesized network gain", criterion_2),
        ("pump filter targets", criterion_3),
        ("IMD frequency facts", criterion_4),
        ("slope laws and IIP3 closure", criterion_5),
        ("noise budget", criterion_6),
        ("readout simulation", criterion_7),
        ("property suites", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "{} criterion {} ({name}): {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
