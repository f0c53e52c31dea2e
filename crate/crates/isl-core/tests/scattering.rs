use isl_core::catalog::{direction, perp, FieldShape, FieldSpec};
use isl_core::field::{
    gaussian_packet, gaussian_packet_aniso, make_grid, ComplexField, UniformGrid, I,
};
use isl_core::fit::loglog_slope;
use isl_core::scattering::*;
use num_complex::Complex64;

fn bump(amplitude: f64) -> FieldSpec {
    FieldSpec::single(FieldShape::gaussian(amplitude, [0.0, 0.0], 1.0))
}

fn spec(v: f64, angle: f64, offset: f64) -> ProbeSpec {
    ProbeSpec {
        angle,
        offset,
        v,
        widths: [1.0, 1.0],
        spacing: [0.2, 0.2],
        mass: 1.0,
        verify_window: false,
    }
}

#[test]
fn zero_potential_scatters_trivially() {
    let p = ScatteringProbe::for_potential(spec(16.0, 0.3, 0.0), &FieldSpec::zero()).unwrap();
    let out = p.scatter(&FieldSpec::zero()).unwrap().state;
    assert!(out.distance(&p.phi0) < 1e-12);
    assert!(p.pairing_only(&FieldSpec::zero()).unwrap().norm() < 1e-10);
}

#[test]
fn scattering_is_unitary() {
    let v = bump(1.0);
    let p = ScatteringProbe::for_potential(spec(16.0, 1.1, 0.4), &v).unwrap();
    let out = p.scatter(&v).unwrap().state;
    assert!((out.norm() - p.phi0.norm()).abs() < 1e-10);
}

#[test]
fn doubled_window_agrees() {
    let v = bump(1.0);
    let p = ScatteringProbe::for_potential(
        ProbeSpec {
            verify_window: true,
            ..spec(16.0, 0.3, 0.0)
        },
        &v,
    )
    .unwrap();
    let r = p.pairing(&v).unwrap();
    assert!(r.window_change.unwrap() < WINDOW_TOLERANCE);
}

#[test]
fn born_state_is_leading_order() {
    let v = bump(0.25);
    let p = ScatteringProbe::for_potential(spec(8.0, 0.0, 0.3), &v).unwrap();
    let diff: Vec<Complex64> = p
        .scatter(&v)
        .unwrap()
        .state
        .values
        .iter()
        .zip(&p.phi0.values)
        .map(|(a, b)| a - b)
        .collect();
    let diff = ComplexField {
        grid: p.grid,
        values: diff,
    };
    let born = p.born_state(&v).scaled(-I / 8.0);
    assert!(
        diff.distance(&born) < 0.1 * diff.norm(),
        "{} vs {}",
        diff.distance(&born),
        diff.norm()
    );
}

#[test]
fn pairing_approaches_xray_target_at_rate_one_over_v() {
    let v = bump(1.0);
    let vs = [8.0, 16.0, 32.0];
    let results: Vec<PairingResult> = vs
        .iter()
        .map(|&s| {
            ScatteringProbe::for_potential(spec(s, 0.3, 0.0), &v)
                .unwrap()
                .pairing(&v)
                .unwrap()
        })
        .collect();
    let errs: Vec<f64> = results.iter().map(|r| r.error()).collect();
    let rems: Vec<f64> = results.iter().map(|r| r.remainder.norm()).collect();
    let slope = loglog_slope(&vs, &errs);
    assert!((-1.3..=-0.7).contains(&slope), "error slope {slope}");
    assert!(loglog_slope(&vs, &rems) <= -0.7);
    let target = results[0].target.re;
    assert!((target - std::f64::consts::PI.sqrt() / 3f64.sqrt()).abs() < 0.02 * target);
}

#[test]
fn born_term_matches_target_at_high_velocity() {
    let v = bump(1.0);
    let r = ScatteringProbe::for_potential(spec(64.0, 0.9, 0.5), &v)
        .unwrap()
        .pairing(&v)
        .unwrap();
    assert!((r.born - r.target).norm() < 0.02 * r.target.norm());
}

#[test]
fn remainder_is_quadratic_in_the_potential() {
    let p = ScatteringProbe::for_potential(spec(16.0, 0.3, 0.0), &bump(1.0)).unwrap();
    let r1 = p.pairing(&bump(0.5)).unwrap().remainder.norm();
    let r2 = p.pairing(&bump(1.0)).unwrap().remainder.norm();
    assert!((r2 / r1 - 4.0).abs() < 0.4, "ratio {}", r2 / r1);
}

#[test]
fn disjoint_envelopes_have_no_target() {
    let v = bump(1.0);
    let sp = ProbeSpec {
        widths: [1.0, 0.3],
        spacing: [0.2, 0.05],
        ..spec(16.0, 0.0, 0.0)
    };
    let p = ScatteringProbe::for_potential(sp, &v).unwrap();
    let grid = p.grid;
    let phi = gaussian_packet_aniso(&grid, &[0.0, -2.5], [1.0, 0.3], &[0.0, 0.0]).unwrap();
    let psi = gaussian_packet_aniso(&grid, &[0.0, 2.5], [1.0, 0.3], &[0.0, 0.0]).unwrap();
    let p = ScatteringProbe { phi0: phi, ..p }.with_psi(psi).unwrap();
    assert!(p.xray_target(&v).norm() < 1e-10);
}

#[test]
fn born_integrand_vanishes_at_the_window_ends() {
    let v = bump(1.0);
    let b = ScatteringProbe::for_potential(spec(16.0, 0.3, 0.0), &v)
        .unwrap()
        .born(&v)
        .unwrap();
    let peak = b.profile.iter().map(|x| x.1).fold(0.0, f64::max);
    assert!(b.profile[0].1 < 1e-10 * peak && b.profile.last().unwrap().1 < 1e-10 * peak);
}

#[test]
fn edge_outrunning_probe_is_rejected() {
    let v = bump(1.0);
    let r = ScatteringProbe::for_potential(spec(2.0, 0.0, 0.0), &v);
    assert!(r.is_err());
}

#[test]
fn co_moving_probe_matches_lab_frame_evolution() {
    let v = bump(0.5);
    let (speed, angle) = (6.0, 0.0);
    let sp = ProbeSpec {
        widths: [1.5, 1.5],
        spacing: [0.1, 0.2],
        ..spec(speed, angle, 0.5)
    };
    let p = ScatteringProbe::for_potential(sp, &v).unwrap();
    let co = p.pairing_only(&v).unwrap();

    let reach = speed * p.t_half + 10.0 * spread(1.5, p.t_half, 1.0);
    let n0 = ((2.0 * reach / 0.1).ceil() as usize).next_power_of_two();
    let grid = UniformGrid::new(2, [n0 as f64 * 0.1, 51.2], [n0, 256]).unwrap();
    let centre = perp(direction(angle)).map(|c| 0.5 * c);
    let phi = gaussian_packet(&grid, &centre, 1.5, &[speed, 0.0]).unwrap();
    let sampled: Vec<f64> = (0..grid.len()).map(|k| v.eval(grid.node(k))).collect();
    let w = Window {
        t_half: p.t_half,
        dt: p.dt(),
        mass: 1.0,
    };
    let out = apply_s_fixed(&phi, &Interaction::Scalar(&sampled), &w).unwrap();
    let diff: Vec<Complex64> = out
        .values
        .iter()
        .zip(&phi.values)
        .map(|(a, b)| a - b)
        .collect();
    let lab = I * speed * isl_core::field::inner(&diff, &phi.values) * grid.cell_volume();
    assert!(
        (lab - co).norm() < 1e-3 * co.norm(),
        "lab {lab} co-moving {co}"
    );
}

#[test]
fn forbidden_mass_decays_fast() {
    let g = make_grid(1, 256.0, 4096).unwrap();
    let width = 3.0;
    let eta = isl_core::field::StateClass::gaussian_eta(width, 1, 1.0);
    assert!(eta <= 1.0);
    let psi = gaussian_packet(&g, &[0.0], width, &[0.0]).unwrap();
    let taus = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
    let mass: Vec<f64> = taus
        .iter()
        .map(|&t| forbidden_mass(&psi, t, 8.0, 1.0, 1.0).unwrap().forbidden)
        .collect();
    let floor = 1e-30;
    let slope = loglog_slope(
        &taus,
        &mass.iter().map(|m| m.max(floor)).collect::<Vec<_>>(),
    );
    assert!(slope <= -4.0, "slope {slope}, {mass:?}");
    for w in mass[3..].windows(2) {
        assert!(w[1] <= w[0]);
    }
}
