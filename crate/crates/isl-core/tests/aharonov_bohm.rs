use std::f64::consts::PI;

use isl_core::aharonov_bohm::*;
use isl_core::catalog::{direction, perp, FieldShape, FieldSpec};
use isl_core::field::make_grid;
use isl_core::Error;
use num_complex::Complex64;

fn probe(v: f64) -> PhaseProbeSpec {
    PhaseProbeSpec {
        v,
        widths: [1.0, 0.25],
        spacing: [0.25, 0.0625],
        mass: 1.0,
        coulomb_window: None,
        stepper: Stepper::Split,
    }
}

fn ring(amplitude: f64) -> FieldSpec {
    FieldSpec::single(FieldShape::Ring {
        amplitude,
        center: [0.0, 0.0],
        radius: 3.0,
        width: 0.5,
    })
}

fn blob() -> FieldSpec {
    FieldSpec::single(FieldShape::gaussian(0.3, [2.5, 1.5], 0.5))
}

fn both() -> FieldSpec {
    FieldSpec(vec![ring(0.1).0.remove(0), blob().0.remove(0)])
}

fn flux(alpha: f64) -> GaugeField {
    GaugeField::new(alpha, FieldSpec::zero(), 1.0).unwrap()
}

#[test]
fn zero_field_gives_unit_phases() {
    let g = flux(0.0);
    let p = &phase_probe(&g, &[0.4], &[-3.0, -2.75, 2.75, 3.0], &probe(64.0)).unwrap()[0];
    for (z, m) in p.measured.iter().zip(&p.mask) {
        assert!(!m);
        assert!((z - 1.0).norm() < 1e-10, "{z}");
    }
    assert_eq!(g.vector_potential([1.5, -2.0]), [0.0, 0.0]);
}

#[test]
fn circulation_equals_normalized_flux() {
    let g = flux(0.7);
    assert!((g.circulation(2.0, 4096) - 0.7).abs() < 1e-6);
    let g = GaugeField::new(0.7, ring(0.1), 1.0).unwrap();
    let expected = 0.7 + ring(0.1).total() / (2.0 * PI);
    assert!((g.circulation(6.5, 8192) - expected).abs() < 1e-6);
    assert!((g.beta() - expected).abs() < 1e-12);
}

#[test]
fn curl_of_regular_potential_is_the_field() {
    let g = GaugeField::new(0.4, blob(), 1.0).unwrap();
    let curl = |x: [f64; 2], h: f64| {
        let a = |p: [f64; 2]| g.vector_potential(p);
        (a([x[0] + h, x[1]])[1] - a([x[0] - h, x[1]])[1]) / (2.0 * h)
            - (a([x[0], x[1] + h])[0] - a([x[0], x[1] - h])[0]) / (2.0 * h)
    };
    for x in [[2.3, 1.2], [2.9, 1.5], [2.0, 2.0], [-2.0, 0.5]] {
        let e1 = (curl(x, 0.04) - blob().eval(x)).abs();
        let e2 = (curl(x, 0.02) - blob().eval(x)).abs();
        assert!(e2 < 2e-4, "{x:?}: {e2}");
        if e1 > 1e-9 {
            let ratio = e1 / e2;
            assert!((3.0..5.0).contains(&ratio), "{x:?}: ratio {ratio}");
        }
    }
}

#[test]
fn closed_form_potential_matches_convolution_quadrature() {
    // A_R(x) = (1/2π)∫B(y)(-(x₂-y₂), x₁-y₁)/|x-y|² dy by the midpoint rule.
    let b = blob();
    let g = GaugeField::new(0.0, b.clone(), 1.0).unwrap();
    let h = 0.01;
    let n = 700;
    let c = [2.5, 1.5];
    for x in [[4.0, 1.0], [2.5, 3.6], [-1.0, -1.0]] {
        let mut a = [0.0, 0.0];
        for i in 0..n {
            for j in 0..n {
                let y = [
                    c[0] - 3.5 + (i as f64 + 0.5) * h,
                    c[1] - 3.5 + (j as f64 + 0.5) * h,
                ];
                let (dx, dy) = (x[0] - y[0], x[1] - y[1]);
                let w = b.eval(y) / (dx * dx + dy * dy);
                a[0] -= w * dy;
                a[1] += w * dx;
            }
        }
        let a = [a[0] * h * h / (2.0 * PI), a[1] * h * h / (2.0 * PI)];
        let closed = g.vector_potential(x);
        let err = (a[0] - closed[0]).hypot(a[1] - closed[1]);
        assert!(
            err < 1e-4 * closed[0].hypot(closed[1]).max(1e-3),
            "{x:?}: {a:?} vs {closed:?}"
        );
    }
}

#[test]
fn admissible_centers_clear_the_obstacle() {
    let grid = make_grid(2, 12.8, 64).unwrap();
    let mask = omega_vhat_mask(Some(1.0), [1.0, 0.0], 3.0 * 0.5, &grid).unwrap();
    for k in 0..grid.len() {
        let x = grid.node(k);
        assert_eq!(mask[k], x[1].abs() >= 2.5, "{x:?}");
    }
    // A center exactly at b = 2.5 is on the boundary and admitted.
    let line = make_grid(2, 10.0, 16).unwrap();
    let k = (0..line.len())
        .find(|&k| line.node(k) == [-5.0, 2.5])
        .unwrap();
    assert!(omega_vhat_mask(Some(1.0), [1.0, 0.0], 1.5, &line).unwrap()[k]);
    assert!(omega_vhat_mask(None, [0.0, 1.0], 1.5, &grid)
        .unwrap()
        .iter()
        .all(|m| *m));
    let small = make_grid(2, 4.0, 16).unwrap();
    assert!(matches!(
        omega_vhat_mask(Some(1.0), [1.0, 0.0], 1.5, &small),
        Err(Error::Coverage(_))
    ));
}

#[test]
fn solenoid_line_phase_is_minus_pi_alpha_above() {
    let g = flux(0.5);
    let l = g.line_phase(0.0, &[2.0, -2.0]);
    assert!((l[0] + PI / 2.0).abs() < 1e-12);
    assert!((l[1] - PI / 2.0).abs() < 1e-12);
}

#[test]
fn line_phase_derivative_is_minus_the_field_radon() {
    let b = both();
    let g = GaugeField::new(0.3, b.clone(), 1.0).unwrap();
    let h = 1e-3;
    for angle in [0.0, 0.7, 2.2] {
        let d = direction(angle);
        let n = perp(d);
        for off in [1.5, 2.6, 3.1, -2.8, -4.0] {
            let l = g.line_phase(angle, &[off - h, off + h]);
            let deriv = (l[1] - l[0]) / (2.0 * h);
            let w = b.line_integral([off * n[0], off * n[1]], d);
            assert!(
                (deriv + w).abs() < 1e-4,
                "angle {angle} b {off}: {deriv} vs {w}"
            );
        }
    }
}

#[test]
fn reversing_direction_negates_the_phase() {
    let b = both();
    let g = GaugeField::new(0.3, b, 1.0).unwrap();
    let offsets = [-3.7, -2.6, 2.6, 3.3];
    let rev: Vec<f64> = offsets.iter().map(|b| -b).collect();
    let l = g.line_phase(0.9, &offsets);
    let r = g.line_phase(0.9 + PI, &rev);
    for (a, b) in l.iter().zip(&r) {
        assert!((a + b).abs() < 1e-7, "{a} {b}");
    }
    let fwd = phase_sample(&g, 0.9, 3.3, &probe(64.0)).unwrap();
    let back = phase_sample(&g, 0.9 + PI, -3.3, &probe(64.0)).unwrap();
    assert!((fwd.predicted - back.predicted.conj()).norm() < 1e-7);
    let tol = 2.0
        * (fwd.measured - fwd.predicted)
            .norm()
            .max((back.measured - back.predicted).norm());
    assert!((fwd.measured - back.measured.conj()).norm() <= tol);
}

#[test]
fn flux_is_recovered_modulo_two() {
    let offsets = [-3.25, -2.75, 2.75, 3.25];
    for (alpha, expected, tol) in [
        (0.3, 0.3, 1e-2),
        (2.3, 0.3, 1e-2),
        (0.0, 0.0, 1e-3),
        (1.7, 1.7, 1e-2),
    ] {
        let p = &phase_probe(&flux(alpha), &[0.7], &offsets, &probe(64.0)).unwrap()[0];
        let est = extract_flux_mod2(p, &FieldSpec::zero(), 1e-2).unwrap();
        assert!(
            mod2_distance(est.alpha_mod2, expected) < tol,
            "α = {alpha}: {est:?}"
        );
        assert!((0.0..2.0).contains(&est.alpha_mod2));
    }
}

#[test]
fn flux_shift_by_two_is_invisible() {
    let offsets = [-3.0, 2.75, 3.5];
    let a = &phase_probe(&flux(0.3), &[1.1], &offsets, &probe(64.0)).unwrap()[0];
    let b = &phase_probe(&flux(2.3), &[1.1], &offsets, &probe(64.0)).unwrap()[0];
    let tol = 2.0 * a.max_deviation().max(b.max_deviation()) + 1e-9;
    for (x, y) in a.measured.iter().zip(&b.measured) {
        assert!((x - y).norm() <= tol, "{x} {y} tol {tol}");
    }
}

#[test]
fn half_integer_flux_flips_the_sign() {
    let g = flux(1.0);
    let p = &phase_probe(&g, &[0.0], &[-3.0, 3.0], &probe(64.0)).unwrap()[0];
    for z in &p.measured {
        assert!((z + 1.0).norm() < 1e-3, "{z}");
    }
}

#[test]
fn probe_is_isometric() {
    let g = GaugeField::new(0.3, ring(0.1), 1.0).unwrap();
    for b in [-3.0, 2.75, 4.0] {
        let s = phase_sample(&g, 0.3, b, &probe(64.0)).unwrap();
        assert!(s.norm_drift < 1e-8, "{}", s.norm_drift);
        assert!(s.measured.norm() <= 1.0 + 1e-8);
        assert!(s.predicted.norm() <= 1.0 + 1e-12);
    }
}

#[test]
fn pure_solenoid_gives_zero_field_data() {
    let angles: Vec<f64> = (0..16).map(|k| k as f64 * PI / 16.0).collect();
    let offsets: Vec<f64> = (0..15).map(|k| -3.5 + 0.5 * k as f64).collect();
    let profiles = phase_probe(&flux(0.8), &angles, &offsets, &probe(128.0)).unwrap();
    let s = b_field_radon_from_phase(&profiles).unwrap();
    assert_eq!(s.offsets.len(), offsets.len() - 1);
    for k in 0..s.values.len() {
        if !s.mask[k] {
            assert!(s.values[k].abs() < 1e-3, "{}", s.values[k]);
        }
    }
    // Pairs reaching into the masked band around K are masked.
    assert!((0..16).all(|i| s.mask[s.index(i, 7)] && !s.mask[s.index(i, 0)]));
}

#[test]
fn split_and_crank_nicolson_stepping_agree() {
    let g = GaugeField::new(0.3, ring(0.1), 1.0).unwrap();
    let split = phase_sample(&g, 0.5, 3.0, &probe(64.0)).unwrap();
    let cn = phase_sample(
        &g,
        0.5,
        3.0,
        &PhaseProbeSpec {
            stepper: Stepper::Cn,
            ..probe(64.0)
        },
    )
    .unwrap();
    assert!((split.measured - cn.measured).norm() < 1e-4);
}

#[test]
fn coulomb_gauge_window_matches_the_truncated_line_integral() {
    let g = flux(0.3);
    let spec = PhaseProbeSpec {
        coulomb_window: Some(0.4),
        ..probe(32.0)
    };
    let s = phase_sample(&g, 0.0, 3.0, &spec).unwrap();
    // The finite window misses the tails of v̂·A, so the phase differs from -πα.
    assert!((s.predicted.arg() + 0.3 * PI).abs() > 0.05);
    assert!(
        (s.measured - s.predicted).norm() < 5e-3,
        "{} {}",
        s.measured,
        s.predicted
    );
}

#[test]
fn deviation_halves_when_velocity_doubles() {
    let b = FieldSpec::single(FieldShape::gaussian(0.3, [0.0, 6.0], 0.6));
    let g = GaugeField::new(0.3, b, 1.0).unwrap();
    let spec = |v| PhaseProbeSpec {
        widths: [1.0, 0.3],
        spacing: [0.25, 0.075],
        ..probe(v)
    };
    let e8 = phase_sample(&g, 0.0, 6.0, &spec(8.0)).unwrap();
    let e16 = phase_sample(&g, 0.0, 6.0, &spec(16.0)).unwrap();
    let ratio = (e8.measured - e8.predicted).norm() / (e16.measured - e16.predicted).norm();
    assert!((1.2..=2.8).contains(&ratio), "ratio {ratio}");
}

#[test]
fn grazing_lines_are_rejected() {
    let g = flux(0.3);
    assert!(!line_admissible(1.0, 1.5, &probe(64.0)));
    assert!(line_admissible(1.0, 2.75, &probe(64.0)));
    assert!(matches!(
        phase_sample(&g, 0.0, 1.5, &probe(64.0)),
        Err(Error::ObstacleContact { .. })
    ));
    let p = &phase_probe(&g, &[0.0], &[-1.5, 0.0, 1.5, 3.0], &probe(64.0)).unwrap()[0];
    assert_eq!(p.mask, vec![true, true, true, false]);
}

#[test]
fn flux_extraction_needs_both_sides_and_consistency() {
    let g = flux(0.3);
    let above = &phase_probe(&g, &[0.0], &[2.75, 3.25], &probe(64.0)).unwrap()[0];
    assert!(matches!(
        extract_flux_mod2(above, &FieldSpec::zero(), 1e-2),
        Err(Error::Coverage(_))
    ));
    // Ignoring a B_R that is present leaves the two sides inconsistent.
    let high = FieldSpec::single(FieldShape::gaussian(0.3, [0.0, 4.0], 0.5));
    let g = GaugeField::new(0.3, high.clone(), 1.0).unwrap();
    let p = &phase_probe(&g, &[0.0], &[-3.0, 4.0], &probe(64.0)).unwrap()[0];
    assert!(matches!(
        extract_flux_mod2(p, &FieldSpec::zero(), 1e-2),
        Err(Error::InconsistentSides(_))
    ));
    let est = extract_flux_mod2(p, &high, 1e-2).unwrap();
    assert!(mod2_distance(est.alpha_mod2, 0.3) < 1e-2, "{est:?}");
}

#[test]
fn unwrapping_is_continuous_and_flags_jumps() {
    let offsets: Vec<f64> = (0..8).map(|k| -3.5 + k as f64).collect();
    let phase = |b: f64| 0.9 * b;
    let values: Vec<Option<Complex64>> = offsets
        .iter()
        .map(|&b| (b.abs() > 1.0).then(|| Complex64::from_polar(1.0, phase(b))))
        .collect();
    let u = unwrap_phases(&offsets, &values).unwrap();
    for (j, b) in offsets.iter().enumerate() {
        match u[j] {
            Some(l) => {
                let anchor = if *b > 0.0 { phase(3.5) } else { phase(-3.5) };
                let wrapped_anchor = Complex64::from_polar(1.0, anchor).arg();
                assert!((l - (phase(*b) - anchor + wrapped_anchor)).abs() < 1e-12);
            }
            None => assert!(b.abs() < 1.0),
        }
    }
    let jumps: Vec<Option<Complex64>> = offsets
        .iter()
        .map(|&b| Some(Complex64::from_polar(1.0, 2.0 * b)))
        .collect();
    assert!(matches!(
        unwrap_phases(&offsets, &jumps),
        Err(Error::UnwrapAmbiguity(_))
    ));
}

#[test]
fn field_data_needs_sixteen_directions() {
    let g = flux(0.3);
    let profiles = phase_probe(&g, &[0.0, 1.0], &[2.75, 3.0, 3.25], &probe(64.0)).unwrap();
    assert!(matches!(
        b_field_radon_from_phase(&profiles),
        Err(Error::Coverage(_))
    ));
}

#[test]
fn gauge_field_validation() {
    assert!(GaugeField::new(f64::NAN, FieldSpec::zero(), 1.0).is_err());
    assert!(GaugeField::new(0.3, FieldSpec::zero(), 0.0).is_err());
    let inside = FieldSpec::single(FieldShape::gaussian(1.0, [0.5, 0.0], 0.5));
    assert!(GaugeField::new(0.3, inside, 1.0).is_err());
    let g: GaugeField = serde_json::from_str(r#"{"alpha": 0.3}"#).unwrap();
    assert_eq!(g.obstacle_radius, 1.0);
    assert!(g.b_r.is_zero());
}

#[test]
fn profile_csv_layout() {
    let g = flux(0.3);
    let p = phase_probe(&g, &[0.0], &[-3.0, 0.0, 3.0], &probe(64.0)).unwrap();
    let dir = std::env::temp_dir().join(format!("isl-ab-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("profile.csv");
    PhaseProfile::write_csv(&p, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "angle,offset,re,im,predicted_re,predicted_im,mask"
    );
    assert_eq!(lines.len(), 4);
    assert!(lines[2].ends_with(",,,,1"));
    assert!(lines[3].ends_with(",0"));
    std::fs::remove_dir_all(&dir).unwrap();
}
