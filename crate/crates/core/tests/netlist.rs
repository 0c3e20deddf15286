use num_complex::Complex64;
use proptest::prelude::*;

use paramp_core::netlist::{
    abcd_product, abcd_to_s, cascade, element_abcd, reflection_at, reflection_from_termination,
    FrequencyGrid, LadderNetwork, Load, LumpedElement,
};
use paramp_core::Error;

fn reactive_element() -> impl Strategy<Value = LumpedElement> {
    (0..4usize, -1.0f64..1.0).prop_map(|(k, e)| match k {
        0 => LumpedElement::series_l(1e-9 * 10f64.powf(e)).unwrap(),
        1 => LumpedElement::shunt_l(1e-9 * 10f64.powf(e)).unwrap(),
        2 => LumpedElement::series_c(1e-12 * 10f64.powf(e)).unwrap(),
        _ => LumpedElement::shunt_c(1e-12 * 10f64.powf(e)).unwrap(),
    })
}

fn any_element() -> impl Strategy<Value = LumpedElement> {
    prop_oneof![
        4 => reactive_element(),
        1 => (1.0f64..500.0).prop_map(|r| LumpedElement::series_r(r).unwrap()),
        1 => (1.0f64..5000.0).prop_map(|r| LumpedElement::shunt_r(r).unwrap()),
    ]
}

fn close(a: Complex64, b: Complex64, scale: f64, tol: f64) -> bool {
    (a - b).norm() <= tol * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn lossless_ladders_are_unitary(
        elements in prop::collection::vec(reactive_element(), 1..8),
        f in 1e9f64..20e9,
        z0 in 10.0f64..200.0,
    ) {
        let net = LadderNetwork::with_z0(elements, z0).unwrap();
        prop_assert!(net.is_lossless());
        let s = abcd_to_s(&net.abcd_at(f).unwrap(), z0, z0, f).unwrap();
        let p1 = s.s11.norm_sqr() + s.s21.norm_sqr();
        let p2 = s.s12.norm_sqr() + s.s22.norm_sqr();
        prop_assert!((p1 - 1.0).abs() < 1e-9, "column 1 power {p1}");
        prop_assert!((p2 - 1.0).abs() < 1e-9, "column 2 power {p2}");
        let cross = s.s11 * s.s12.conj() + s.s21 * s.s22.conj();
        prop_assert!(cross.norm() < 1e-9, "columns not orthogonal: {cross}");
    }

    #[test]
    fn rlc_ladders_are_reciprocal(
        elements in prop::collection::vec(any_element(), 1..8),
        f in 1e9f64..20e9,
        z01 in 10.0f64..200.0,
        z02 in 10.0f64..200.0,
    ) {
        let net = LadderNetwork::new(elements, (z01, z02)).unwrap();
        let m = net.abcd_at(f).unwrap();
        prop_assert!((m.det() - 1.0).norm() < 1e-9 * m.max_norm().powi(2).max(1.0));
        let s = abcd_to_s(&m, z01, z02, f).unwrap();
        prop_assert!(close(s.s12, s.s21, 1.0, 1e-9), "s12 {} s21 {}", s.s12, s.s21);
    }

    #[test]
    fn cascade_is_associative(
        a in prop::collection::vec(any_element(), 1..4),
        b in prop::collection::vec(any_element(), 1..4),
        c in prop::collection::vec(any_element(), 1..4),
        f in 1e9f64..20e9,
    ) {
        let ma = abcd_product(&a, f).unwrap();
        let mb = abcd_product(&b, f).unwrap();
        let mc = abcd_product(&c, f).unwrap();
        let left = ma.then(&mb).then(&mc);
        let right = ma.then(&mb.then(&mc));
        let scale = ma.max_norm() * mb.max_norm() * mc.max_norm();
        for (x, y) in [(left.a, right.a), (left.b, right.b), (left.c, right.c), (left.d, right.d)] {
            prop_assert!(close(x, y, scale, 1e-12));
        }
        let all: Vec<LumpedElement> = a.iter().chain(&b).chain(&c).cloned().collect();
        let flat = abcd_product(&all, f).unwrap();
        prop_assert!(close(flat.b, left.b, scale, 1e-12));
    }

    #[test]
    fn passive_terminations_never_reflect_gain(
        elements in prop::collection::vec(any_element(), 1..6),
        f in 1e9f64..20e9,
        r in 0.0f64..1000.0,
        x in -1000.0f64..1000.0,
    ) {
        let net = LadderNetwork::with_z0(elements, 50.0).unwrap();
        let m = net.abcd_at(f).unwrap();
        let g = match reflection_at(&m, 50.0, Load::Impedance(Complex64::new(r, x)), f) {
            Ok(g) => g,
            // A purely reactive load on a lossless ladder can sit on a pole.
            Err(Error::Pole { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(g.norm() <= 1.0 + 1e-9, "|Γ| = {}", g.norm());
    }
}

#[test]
fn single_elements_match_closed_forms() {
    let (z0, f) = (50.0, 9e9);
    let w = 2.0 * std::f64::consts::PI * f;
    let j = Complex64::i();

    let s = abcd_to_s(
        &element_abcd(&LumpedElement::series_l(2e-9).unwrap(), f).unwrap(),
        z0,
        z0,
        f,
    )
    .unwrap();
    let zl = j * w * 2e-9;
    assert!((s.s21 - 2.0 * z0 / (2.0 * z0 + zl)).norm() < 1e-14);
    assert!((s.s11 - zl / (2.0 * z0 + zl)).norm() < 1e-14);

    let s = abcd_to_s(
        &element_abcd(&LumpedElement::shunt_c(0.3e-12).unwrap(), f).unwrap(),
        z0,
        z0,
        f,
    )
    .unwrap();
    let yc = j * w * 0.3e-12;
    assert!((s.s21 - 2.0 / (2.0 + yc * z0)).norm() < 1e-14);

    // A resistive divider between unequal ports: series 50 Ω into 100 Ω.
    let s = abcd_to_s(
        &element_abcd(&LumpedElement::series_r(50.0).unwrap(), f).unwrap(),
        50.0,
        100.0,
        f,
    )
    .unwrap();
    assert!((s.s11.re - 0.5).abs() < 1e-14);
    assert!((s.s21.re - 2.0 * 5000f64.sqrt() / 200.0).abs() < 1e-14);
}

#[test]
fn quarter_wave_like_lc_section_transforms_impedance() {
    // Low-pass L-section matching 50 Ω to 200 Ω at 9 GHz.
    let (r_s, r_l, f) = (50.0, 200.0, 9e9);
    let w = 2.0 * std::f64::consts::PI * f;
    let q = (r_l / r_s - 1.0f64).sqrt();
    let l = q * r_s / w;
    let c = q / (w * r_l);
    let net = LadderNetwork::with_z0(
        vec![
            LumpedElement::series_l(l).unwrap(),
            LumpedElement::shunt_c(c).unwrap(),
        ],
        r_s,
    )
    .unwrap();
    let g = reflection_at(
        &net.abcd_at(f).unwrap(),
        r_s,
        Load::Impedance(Complex64::new(r_l, 0.0)),
        f,
    )
    .unwrap();
    assert!(g.norm() < 1e-12, "{g}");
}

#[test]
fn open_and_infinite_terminations() {
    let net = LadderNetwork::with_z0(vec![LumpedElement::series_l(1e-9).unwrap()], 50.0).unwrap();
    let grid = FrequencyGrid::linspace(4e9, 12e9, 5).unwrap();
    let open = reflection_from_termination(&net, &grid, |_| Load::Open).unwrap();
    assert!(open.iter().all(|g| (g - 1.0).norm() < 1e-12));
    let inf = reflection_from_termination(&net, &grid, |_| {
        Load::Impedance(Complex64::new(f64::INFINITY, 0.0))
    });
    assert!(matches!(inf, Err(Error::Domain(_))));
}

#[test]
fn resonant_termination_is_a_pole() {
    // Shunt L‖C tank against a negative resistance equal to the port:
    // the reflection denominator vanishes at resonance.
    let (l, c): (f64, f64) = (1e-9, 1e-12);
    let f0 = 1.0 / (2.0 * std::f64::consts::PI * (l * c).sqrt());
    let net = LadderNetwork::with_z0(
        vec![
            LumpedElement::shunt_l(l).unwrap(),
            LumpedElement::shunt_c(c).unwrap(),
        ],
        50.0,
    )
    .unwrap();
    let g = reflection_at(
        &net.abcd_at(f0).unwrap(),
        50.0,
        Load::Impedance(Complex64::new(-50.0, 0.0)),
        f0,
    );
    assert!(matches!(g, Err(Error::Pole { .. })), "{g:?}");
}

#[test]
fn wire_format() {
    let text = r#"{
        "elements": [
            {"kind": "L", "topology": "series", "value_H": 1e-9},
            {"kind": "C", "topology": "shunt", "value_F": 2e-13},
            {"kind": "R", "topology": "shunt", "value_ohm": 1000.0}
        ],
        "z0": [50.0, 75.0]
    }"#;
    let net = LadderNetwork::from_json(text).unwrap();
    assert_eq!(net.z0(), (50.0, 75.0));
    assert!(!net.is_lossless());
    assert!(LadderNetwork::from_json(&text.replace("value_F", "value_H")).is_err());
    assert!(LadderNetwork::from_json(&text.replace("\"z0\"", "\"extra\": 1, \"z0\"")).is_err());
}

#[test]
fn swept_response_matches_pointwise() {
    let net = LadderNetwork::with_z0(
        vec![
            LumpedElement::series_c(0.2e-12).unwrap(),
            LumpedElement::shunt_l(0.72e-9).unwrap(),
            LumpedElement::shunt_c(0.233e-12).unwrap(),
        ],
        50.0,
    )
    .unwrap();
    let grid = FrequencyGrid::linspace(8e9, 10e9, 11).unwrap();
    let resp = cascade(&net, &grid).unwrap();
    for (i, f) in grid.points().iter().enumerate() {
        let s = abcd_to_s(&net.abcd_at(*f).unwrap(), 50.0, 50.0, *f).unwrap();
        assert_eq!(resp.s21[i], s.s21);
    }
    let mut csv = Vec::new();
    resp.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("freq_hz,re_s11,im_s11,re_s21,im_s21\n"));
    assert_eq!(text.lines().count(), 12);
}
