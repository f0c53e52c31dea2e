use std::f64::consts::PI;

use isl_core::catalog::{direction, perp, FieldShape, FieldSpec, Frame};
use isl_core::field::UniformGrid;
use isl_core::radon::*;
use isl_core::Error;

fn gaussian() -> FieldSpec {
    FieldSpec::single(FieldShape::gaussian(1.0, [0.0, 0.0], 1.0))
}

fn sampled(v: &FieldSpec, grid: &UniformGrid) -> Vec<f64> {
    v.sample(grid, &Frame::default())
}

fn exact_sinogram(v: &FieldSpec, angles: Vec<f64>, offsets: Vec<f64>) -> Sinogram {
    let mut s = Sinogram::zeros(angles, offsets).unwrap();
    for i in 0..s.angles.len() {
        let d = direction(s.angles[i]);
        let n = perp(d);
        for j in 0..s.offsets.len() {
            let b = s.offsets[j];
            let k = s.index(i, j);
            s.values[k] = v.line_integral([b * n[0], b * n[1]], d);
        }
    }
    s
}

#[test]
fn forward_of_zero_is_zero() {
    let g = UniformGrid::new(2, [12.8, 12.8], [64, 64]).unwrap();
    let s = radon_forward(
        &g,
        &vec![0.0; g.len()],
        &uniform_angles(8),
        &centered_offsets(16, 0.5),
    )
    .unwrap();
    assert!(s.values.iter().all(|x| *x == 0.0));
}

#[test]
fn forward_gaussian_matches_closed_form() {
    let g = UniformGrid::new(2, [12.8, 12.8], [1024, 1024]).unwrap();
    let f = sampled(&gaussian(), &g);
    let s = radon_forward(&g, &f, &[0.0, 0.4, 1.3, 2.9], &centered_offsets(21, 0.3)).unwrap();
    for (k, v) in s.values.iter().enumerate() {
        let b = s.offsets[k % s.offsets.len()];
        assert!(
            (v - PI.sqrt() * (-b * b).exp()).abs() < 1e-4,
            "b = {b}: {v}"
        );
    }
}

#[test]
fn forward_is_rotation_equivariant() {
    let g = UniformGrid::new(2, [12.8, 12.8], [128, 128]).unwrap();
    let blob = |c: [f64; 2]| FieldSpec::single(FieldShape::gaussian(1.0, c, 0.8));
    let k = 16;
    let angles = uniform_angles(k);
    let offsets = centered_offsets(24, 0.25);
    let shift = 3;
    let t0 = shift as f64 * PI / k as f64;
    let c = [1.2, -0.5];
    let rc = [
        c[0] * t0.cos() - c[1] * t0.sin(),
        c[0] * t0.sin() + c[1] * t0.cos(),
    ];
    let a = radon_forward(&g, &sampled(&blob(c), &g), &angles, &offsets).unwrap();
    let b = radon_forward(&g, &sampled(&blob(rc), &g), &angles, &offsets).unwrap();
    for i in 0..k - shift {
        for j in 0..offsets.len() {
            let d = (a.values[a.index(i, j)] - b.values[b.index(i + shift, j)]).abs();
            assert!(d < 5e-3, "angle {i} offset {j}: {d}");
        }
    }
}

#[test]
fn forward_rejects_support_on_the_boundary() {
    let g = UniformGrid::new(2, [6.4, 6.4], [64, 64]).unwrap();
    let f = sampled(&gaussian(), &g);
    let r = radon_forward(&g, &f, &uniform_angles(4), &centered_offsets(8, 0.5));
    assert!(matches!(r, Err(Error::InvalidParameter(_))));
}

#[test]
fn fbp_round_trip_is_within_five_percent() {
    let g = UniformGrid::new(2, [12.8, 12.8], [128, 128]).unwrap();
    let truth = sampled(&gaussian(), &g);
    let s = radon_forward(&g, &truth, &uniform_angles(64), &centered_offsets(128, 0.1)).unwrap();
    let r = fbp_invert(&s, &g).unwrap();
    let e = r.relative_l2(&truth, None);
    assert!(e <= 0.05, "relative error {e}");
}

#[test]
fn fbp_is_linear_and_maps_zero_to_zero() {
    let g = UniformGrid::new(2, [12.8, 12.8], [64, 64]).unwrap();
    let s = exact_sinogram(&gaussian(), uniform_angles(32), centered_offsets(64, 0.2));
    let a = fbp_invert(&s, &g).unwrap();
    let b = fbp_invert(&s.scaled(-2.5), &g).unwrap();
    let peak = a.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((y + 2.5 * x).abs() < 1e-12 * peak);
    }
    let z = fbp_invert(&s.scaled(0.0), &g).unwrap();
    assert!(z.values.iter().all(|x| *x == 0.0));
}

#[test]
fn fbp_rejects_masks_and_sparse_angles() {
    let g = UniformGrid::new(2, [12.8, 12.8], [64, 64]).unwrap();
    let mut s = exact_sinogram(&gaussian(), uniform_angles(32), centered_offsets(64, 0.2));
    s.mask[5] = true;
    assert!(matches!(fbp_invert(&s, &g), Err(Error::Masked(_))));
    let s = exact_sinogram(&gaussian(), uniform_angles(16), centered_offsets(64, 0.2));
    assert!(matches!(fbp_invert(&s, &g), Err(Error::Coverage(_))));
}

#[test]
fn art_agrees_with_fbp_on_full_data() {
    let g = UniformGrid::new(2, [12.8, 12.8], [128, 128]).unwrap();
    let truth = sampled(&gaussian(), &g);
    let s = radon_forward(&g, &truth, &uniform_angles(64), &centered_offsets(128, 0.1)).unwrap();
    let fbp = fbp_invert(&s, &g).unwrap();
    let art = art_invert_masked(&s, &g, &vec![true; g.len()], &ArtOptions::default()).unwrap();
    assert!(relative_l2(&art.values, &fbp.values, None) <= 0.05);
    assert!(art.residuals.last().unwrap() < &art.residuals[0]);
}

#[test]
fn art_of_zero_data_is_zero() {
    let g = UniformGrid::new(2, [12.8, 12.8], [32, 32]).unwrap();
    let s = Sinogram::zeros(uniform_angles(8), centered_offsets(16, 0.5)).unwrap();
    let r = art_invert_masked(&s, &g, &vec![true; g.len()], &ArtOptions::default()).unwrap();
    assert!(r.values.iter().all(|x| *x == 0.0));
}

#[test]
fn art_reports_heldout_residual() {
    let g = UniformGrid::new(2, [12.8, 12.8], [64, 64]).unwrap();
    let truth = sampled(&gaussian(), &g);
    let support: Vec<bool> = (0..g.len())
        .map(|k| g.node(k)[0].hypot(g.node(k)[1]) < 3.5)
        .collect();
    let s = radon_forward(&g, &truth, &uniform_angles(48), &centered_offsets(64, 0.2)).unwrap();
    let opts = ArtOptions {
        holdout_every: Some(5),
        ..ArtOptions::default()
    };
    let r = art_invert_masked(&s, &g, &support, &opts).unwrap();
    let h = r.heldout_residual.unwrap();
    assert!(
        h < 0.05,
        "held-out residual {h}, fit {:?}",
        r.residuals.last()
    );
}

#[test]
fn art_residual_does_not_grow_with_more_lines() {
    let g = UniformGrid::new(2, [12.8, 12.8], [64, 64]).unwrap();
    let truth = sampled(
        &FieldSpec::single(FieldShape::gaussian(1.0, [0.8, -0.4], 0.9)),
        &g,
    );
    let full = radon_forward(&g, &truth, &uniform_angles(24), &centered_offsets(48, 0.25)).unwrap();
    let opts = ArtOptions {
        iterations: 40,
        ..ArtOptions::default()
    };
    let mut previous = f64::INFINITY;
    for keep in [6usize, 12, 24] {
        let mut s = full.clone();
        for i in keep..s.angles.len() {
            for j in 0..s.offsets.len() {
                let k = s.index(i, j);
                s.mask[k] = true;
            }
        }
        let r = art_invert_masked(&s, &g, &vec![true; g.len()], &opts).unwrap();
        let res = *r.residuals.last().unwrap();
        assert!(
            res <= previous * (1.0 + 1e-9),
            "{keep} directions: {res} after {previous}"
        );
        previous = res;
    }
}

#[test]
fn registry_resolves_both_methods() {
    let reg = ReconstructorRegistry::default();
    assert_eq!(reg.names(), vec!["art", "fbp"]);
    assert!(matches!(reg.get("sart"), Err(Error::Unknown { .. })));
    let g = UniformGrid::new(2, [12.8, 12.8], [64, 64]).unwrap();
    let s = exact_sinogram(&gaussian(), uniform_angles(32), centered_offsets(64, 0.2));
    let r = reg
        .get("fbp")
        .unwrap()
        .reconstruct(&s, &g, &ReconOptions::default())
        .unwrap();
    assert_eq!(r.method, "fbp");
}

#[test]
fn sinogram_csv_round_trip() {
    let mut s = exact_sinogram(&gaussian(), uniform_angles(4), centered_offsets(5, 0.7));
    s.mask[3] = true;
    s.err[7] = 1.0 / 3.0;
    let dir = std::env::temp_dir().join(format!("isl-sino-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sino.csv");
    s.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "angle,offset,value,mask,err");
    assert!(lines[4].ends_with(",,1,"), "{}", lines[4]);
    let back = Sinogram::read_csv(&path).unwrap();
    s.values[3] = 0.0;
    assert_eq!(back, s);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn decay_slope_recovers_power_laws() {
    let inv: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0]
        .iter()
        .map(|&v| (v, 3.0 / v))
        .collect();
    assert!((decay_slope(&inv).unwrap() + 1.0).abs() < 1e-6);
    let half: Vec<(f64, f64)> = [8.0f64, 16.0, 32.0]
        .iter()
        .map(|&v| (v, 0.2 / v.sqrt()))
        .collect();
    assert!((decay_slope(&half).unwrap() + 0.5).abs() < 1e-6);
    assert!(decay_slope(&inv[..2]).is_err());
    assert!(decay_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
}

fn template(v: f64) -> ProbeTemplate {
    ProbeTemplate {
        v,
        widths: [1.0, 0.2],
        spacing: [0.25, 0.05],
        mass: 1.0,
        verify_window: false,
    }
}

#[test]
fn probe_sinogram_of_zero_potential_vanishes() {
    let s = probe_sinogram(
        &FieldSpec::zero(),
        &[0.0, 1.0],
        &centered_offsets(3, 1.0),
        &template(32.0),
    )
    .unwrap();
    assert!(s.values.iter().all(|x| x.abs() < 1e-10));
}

#[test]
fn probe_sinogram_sees_the_gaussian_line_integral() {
    let offsets = centered_offsets(9, 0.5);
    let s = probe_sinogram(&gaussian(), &[0.7], &offsets, &template(32.0)).unwrap();
    let peak = PI.sqrt();
    for (j, b) in offsets.iter().enumerate() {
        let exact = peak * (-b * b).exp();
        assert!(
            (s.values[j] - exact).abs() <= 0.05 * peak,
            "b = {b}: {} vs {exact}",
            s.values[j]
        );
        assert!(s.err[j] > 0.0);
    }
}

#[test]
fn probe_sinogram_sees_a_disk() {
    let disk = FieldSpec::single(FieldShape::Disk {
        amplitude: 0.5,
        center: [0.0, 0.0],
        radius: 1.0,
    });
    let offsets = [0.0, 0.5];
    // A sharp edge needs a fine along-track step: the quadrature error is O(Δs).
    let probe = ProbeTemplate {
        widths: [0.5, 0.2],
        spacing: [0.05, 0.05],
        ..template(32.0)
    };
    let s = probe_sinogram(&disk, &[0.3], &offsets, &probe).unwrap();
    for (j, b) in offsets.iter().enumerate() {
        let exact = 2.0 * 0.5 * (1.0 - b * b).sqrt();
        assert!(
            (s.values[j] - exact).abs() <= 0.05 * exact,
            "b = {b}: {}",
            s.values[j]
        );
    }
}

#[test]
fn probe_sinogram_at_high_velocity_matches_forward_projection() {
    let v = FieldSpec::single(FieldShape::gaussian(1.0, [0.5, 0.3], 0.9));
    let g = UniformGrid::new(2, [12.8, 12.8], [256, 256]).unwrap();
    let angles = [0.2, 1.9];
    let offsets = centered_offsets(7, 0.6);
    let probe = probe_sinogram(&v, &angles, &offsets, &template(64.0)).unwrap();
    let forward = radon_forward(&g, &sampled(&v, &g), &angles, &offsets).unwrap();
    let scale = forward.max_abs();
    for k in 0..probe.values.len() {
        let d = (probe.values[k] - forward.values[k]).abs();
        assert!(d <= 0.05 * scale + 1.0 / 64.0, "line {k}: {d}");
    }
}
