//! The six canonical experiments, each a function from a config to metrics and artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use isl_core::aharonov_bohm::*;
use isl_core::catalog::Frame;
use isl_core::field::{gaussian_packet, ComplexField, UniformGrid};
use isl_core::fit::loglog_slope;
use isl_core::nls_inverse::*;
use isl_core::radon::*;
use isl_core::scattering::{PairingResult, ScatteringProbe};
use isl_core::Result;
use rayon::prelude::*;

use crate::config::{Envelope, ExperimentConfig, ExperimentId, GridSpec, Packet};
use crate::record::{Metric, Sample};

/// Everything an experiment produces. Kept outside the experiment so that a run stopped
/// by an error still leaves the finished part behind.
pub struct Recorder {
    dir: PathBuf,
    pub metrics: Vec<Metric>,
    pub slopes: BTreeMap<String, f64>,
    pub samples: Vec<Sample>,
    pub artifacts: Vec<String>,
}

impl Recorder {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            metrics: Vec::new(),
            slopes: BTreeMap::new(),
            samples: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn artifact(&mut self, name: String) -> PathBuf {
        let path = self.dir.join(&name);
        self.artifacts.push(name);
        path
    }

    fn slope(&mut self, name: &str, value: f64) {
        if value.is_finite() {
            self.slopes.insert(name.into(), value);
        }
    }
}

pub type Runner = fn(&ExperimentConfig, &mut Recorder) -> Result<()>;

pub const REGISTRY: [(ExperimentId, Runner); 6] = [
    (ExperimentId::LinearXray, linear_xray),
    (ExperimentId::RadonRoundtrip, radon_roundtrip),
    (ExperimentId::AbFlux, ab_flux),
    (ExperimentId::AbBfield, ab_bfield),
    (ExperimentId::NlsLinearize, nls_linearize),
    (ExperimentId::NlsRecover, nls_recover),
];

pub fn runner(id: ExperimentId) -> Runner {
    REGISTRY
        .iter()
        .find(|(k, _)| *k == id)
        .map(|(_, r)| *r)
        .expect("every experiment is registered")
}

fn or<T: Clone>(list: &[T], default: &[T]) -> Vec<T> {
    if list.is_empty() {
        default.to_vec()
    } else {
        list.to_vec()
    }
}

fn envelope(cfg: &ExperimentConfig, widths: [f64; 2], spacing: [f64; 2]) -> Envelope {
    cfg.envelope.unwrap_or(Envelope {
        widths,
        spacing,
        mass: 1.0,
        stepper: Stepper::Split,
        verify_window: false,
    })
}

fn packet(cfg: &ExperimentConfig, grid: &UniformGrid, default: Packet) -> Result<ComplexField> {
    let p = cfg.packet.unwrap_or(default);
    gaussian_packet(grid, &[p.center], p.width, &[p.momentum])
}

/// Pairing against the X-ray target on every (angle, offset) line, per velocity.
fn linear_xray(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let env = envelope(cfg, [1.0, 1.0], [0.2, 0.2]);
    let vs = or(&cfg.v, &[8.0, 16.0, 32.0]);
    let angles = or(&cfg.angles, &[0.3]);
    let offsets = or(&cfg.offsets, &[0.0]);
    let lines: Vec<(f64, f64)> = angles
        .iter()
        .flat_map(|&a| offsets.iter().map(move |&b| (a, b)))
        .collect();
    let mut errors = Vec::new();
    let mut remainders = Vec::new();
    for &v in &vs {
        let results: Vec<PairingResult> = lines
            .par_iter()
            .map(|&(a, b)| {
                ScatteringProbe::for_potential(env.probe(v, a, b), &cfg.potential)?
                    .pairing(&cfg.potential)
            })
            .collect::<Result<_>>()?;
        let mut measured = Sinogram::zeros(angles.clone(), offsets.clone())?;
        let mut target = measured.clone();
        for (k, r) in results.iter().enumerate() {
            measured.values[k] = r.pairing.re;
            measured.err[k] = r.error();
            target.values[k] = r.target.re;
        }
        measured.write_csv(&rec.artifact(format!("sinogram_v{v}.csv")))?;
        target.write_csv(&rec.artifact(format!("target_v{v}.csv")))?;
        let err = results.iter().map(|r| r.error()).fold(0.0, f64::max);
        let rem = results
            .iter()
            .map(|r| r.remainder.norm())
            .fold(0.0, f64::max);
        rec.samples.push(Sample::new(
            format!("v={v}"),
            &[("v", v), ("max_error", err), ("max_remainder", rem)],
        ));
        errors.push(err);
        remainders.push(rem);
    }
    let max_error = errors.iter().cloned().fold(0.0, f64::max);
    rec.metrics.push(Metric::info("max_error", max_error));
    // Exact agreement (V = 0) has nothing to fit.
    if vs.len() >= 2 && errors.iter().all(|&e| e > 1e-12) {
        let slope = loglog_slope(&vs, &errors);
        rec.slope("error_vs_v", slope);
        rec.metrics
            .push(Metric::within("error_slope", slope, -1.3, -0.7));
        let rslope = loglog_slope(&vs, &remainders);
        rec.slope("remainder_vs_v", rslope);
        rec.metrics
            .push(Metric::at_most("remainder_slope", rslope, -0.7));
    }
    Ok(())
}

fn radon_roundtrip(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let grid = cfg.grid.planar()?;
    let truth = cfg.potential.sample(&grid, &Frame::default());
    let angles = cfg.angle_list(64);
    let offsets = or(
        &cfg.offsets,
        &centered_offsets(cfg.grid.points, cfg.grid.extent / cfg.grid.points as f64),
    );
    let sino = radon_forward(&grid, &truth, &angles, &offsets)?;
    sino.write_csv(&rec.artifact("sinogram.csv".into()))?;
    let fbp = fbp_invert(&sino, &grid)?;
    fbp.write_csv(&rec.artifact("reconstruction.csv".into()))?;
    write_grid_csv(&rec.artifact("truth.csv".into()), &grid, &truth)?;
    let e = if truth.iter().all(|&x| x == 0.0) {
        fbp.values.iter().map(|x| x.abs()).fold(0.0, f64::max)
    } else {
        fbp.relative_l2(&truth, None)
    };
    rec.metrics.push(Metric::at_most("fbp_rel_l2", e, 0.05));

    let peak = truth.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let support: Vec<bool> = truth
        .iter()
        .map(|&x| x.abs() >= 1e-2 * peak && peak > 0.0)
        .collect();
    let env = envelope(cfg, [1.0, 0.2], [0.25, 0.05]);
    for &v in &cfg.v {
        let template = ProbeTemplate {
            v,
            widths: env.widths,
            spacing: env.spacing,
            mass: env.mass,
            verify_window: env.verify_window,
        };
        let s = probe_sinogram(&cfg.potential, &angles, &offsets, &template)?;
        s.write_csv(&rec.artifact(format!("probe_sinogram_v{v}.csv")))?;
        let r = fbp_invert(&s, &grid)?;
        r.write_csv(&rec.artifact(format!("probe_reconstruction_v{v}.csv")))?;
        let e = if peak > 0.0 {
            r.relative_l2(&truth, Some(&support))
        } else {
            r.values.iter().map(|x| x.abs()).fold(0.0, f64::max)
        };
        rec.samples
            .push(Sample::new(format!("v={v}"), &[("v", v), ("rel_l2", e)]));
        rec.metrics
            .push(Metric::at_most(&format!("probe_rel_l2_v{v}"), e, 0.12));
    }
    Ok(())
}

fn ab_flux(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let field = GaugeField::new(cfg.alpha, cfg.b_r.clone(), cfg.obstacle_radius)?;
    let env = envelope(cfg, [1.0, 0.25], [0.25, 0.0625]);
    let angles = or(&cfg.angles, &[0.7]);
    let offsets = or(&cfg.offsets, &[-3.25, -2.75, 2.75, 3.25]);
    let expected = cfg.alpha.rem_euclid(2.0);
    let mut worst: f64 = 0.0;
    for &v in &or(&cfg.v, &[64.0]) {
        let profiles = phase_probe(&field, &angles, &offsets, &env.phase(v))?;
        PhaseProfile::write_csv(&profiles, &rec.artifact(format!("phase_v{v}.csv")))?;
        for p in &profiles {
            let est = extract_flux_mod2(p, &cfg.b_r, 1e-2)?;
            let d = mod2_distance(est.alpha_mod2, expected);
            worst = worst.max(d);
            rec.samples.push(Sample::new(
                format!("v={v} angle={}", p.angle),
                &[
                    ("v", v),
                    ("angle", p.angle),
                    ("alpha_mod2", est.alpha_mod2),
                    ("residual", est.residual),
                    ("max_deviation", p.max_deviation()),
                ],
            ));
        }
    }
    rec.metrics
        .push(Metric::at_most("alpha_error", worst, 1e-2));
    Ok(())
}

fn ab_bfield(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let field = GaugeField::new(cfg.alpha, cfg.b_r.clone(), cfg.obstacle_radius)?;
    let env = envelope(cfg, [1.0, 0.15], [0.25, 0.0375]);
    let v = cfg.v.first().copied().unwrap_or(128.0);
    let profiles = phase_probe(
        &field,
        &cfg.angle_list(16),
        &or(&cfg.offsets, &centered_offsets(47, 0.2)),
        &env.phase(v),
    )?;
    PhaseProfile::write_csv(&profiles, &rec.artifact("phase.csv".into()))?;
    let sino = b_field_radon_from_phase(&profiles)?;
    sino.write_csv(&rec.artifact("field_sinogram.csv".into()))?;
    let grid = cfg.grid.planar()?;
    let truth = cfg.b_r.sample(&grid, &Frame::default());
    let [inner, outer] = cfg.support.unwrap_or([2.0, 4.0]);
    let support: Vec<bool> = (0..grid.len())
        .map(|k| {
            let x = grid.node(k);
            (inner..=outer).contains(&x[0].hypot(x[1]))
        })
        .collect();
    let opts = cfg.art.clone().unwrap_or(ArtOptions {
        iterations: 100,
        relaxation: 0.5,
        holdout_every: None,
    });
    let r = art_invert_masked(&sino, &grid, &support, &opts)?;
    r.write_csv(&rec.artifact("reconstruction.csv".into()))?;
    let e = r.relative_l2(&truth, Some(&support));
    rec.samples.push(Sample::new(
        "lines",
        &[
            ("measured", sino.measured() as f64),
            (
                "max_deviation",
                profiles
                    .iter()
                    .map(|p| p.max_deviation())
                    .fold(0.0, f64::max),
            ),
        ],
    ));
    rec.metrics.push(Metric::at_most("rel_l2", e, 0.15));
    Ok(())
}

fn nls_linearize(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let grid = cfg.grid.line()?;
    let phi = packet(
        cfg,
        &grid,
        Packet {
            center: 0.0,
            width: 2.0,
            momentum: 2.0,
        },
    )?;
    let spec = cfg
        .scattering
        .clone()
        .unwrap_or(ScatteringSpec::new(10.0, 0.01));
    let r = linearize_s(
        &phi,
        &cfg.model,
        &or(&cfg.epsilons, &[0.2, 0.1, 0.05]),
        &spec,
    )?;
    r.write_csv(&rec.artifact("linearization.csv".into()))?;
    for (e, err) in r.epsilons.iter().zip(&r.errors) {
        rec.samples.push(Sample::new(
            format!("eps={e}"),
            &[("epsilon", *e), ("error", *err)],
        ));
    }
    rec.slope("error_vs_epsilon", r.slope);
    rec.metrics.push(Metric::within("slope", r.slope, 3.2, 5.0));
    rec.metrics.push(Metric::at_most(
        "extrapolation_error",
        r.extrapolation_error,
        1e-4,
    ));
    Ok(())
}

fn nls_recover(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    cfg.model.validate()?;
    let grid = cfg.grid.line()?;
    let v0 = &cfg.model.v0;
    let data = reflection_coefficient(&s_l_action(v0), &grid, &cfg.reflection)?;
    data.write_csv(&rec.artifact("reflection.csv".into()))?;
    let jost = data
        .k
        .par_iter()
        .zip(&data.r)
        .map(|(&k, r)| {
            let (rj, _) = jost_scattering(v0, k, 1e-3)?;
            Ok(if rj.norm() > 0.0 {
                (r - rj).norm() / rj.norm()
            } else {
                r.norm()
            })
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let reference = cfg
        .calibration
        .clone()
        .unwrap_or(Profile::gaussian(0.04, 0.0, 1.2));
    let calibration = Calibration::from_simulation(&reference, &grid, &cfg.reflection)?;
    let out = cfg
        .output_grid
        .unwrap_or(GridSpec {
            extent: 16.0,
            points: 256,
        })
        .line()?;
    let recovered = born_invert_v0(&data, &calibration, &out)?;
    write_line_csv(&rec.artifact("v0_recovered.csv".into()), &out, &recovered)?;
    let truth = v0.sample(&out);
    let peak = truth.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let linf = recovered
        .iter()
        .zip(&truth)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / if peak > 0.0 { peak } else { 1.0 };
    rec.metrics.push(Metric::at_most("born_linf", linf, 0.10));
    rec.metrics
        .push(Metric::at_most("reflection_vs_jost", jost, 0.02));
    rec.metrics.push(Metric::at_most(
        "unitarity_defect",
        data.unitarity_defect(),
        1e-3,
    ));
    rec.samples.push(Sample::new(
        "calibration",
        &[
            ("kappa", calibration.kappa),
            ("residual", calibration.residual),
        ],
    ));

    let Some(v1) = cfg.model.coefficients.first() else {
        return Ok(());
    };
    let ladder_grid = cfg
        .ladder_grid
        .unwrap_or(GridSpec {
            extent: 256.0,
            points: 4096,
        })
        .line()?;
    let phi = packet(
        cfg,
        &ladder_grid,
        Packet {
            center: 0.0,
            width: 1.0,
            momentum: 0.0,
        },
    )?;
    let lambdas = or(&cfg.lambdas, &[1.0, 2.0, 4.0, 8.0]);
    let scale = v1
        .sample(&ladder_grid)
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for &x in &or(&cfg.probe_points, &[0.0]) {
        let ladder =
            scaling_limit_vj(&cfg.model, &phi, x, &lambdas, 1, &QuadratureSpec::default())?;
        ladder.write_csv(&rec.artifact(format!("ladder_x{x}.csv")))?;
        let last = *ladder.values.last().expect("ladder is nonempty");
        let exact = v1.eval(x);
        worst = worst.max((last - exact).abs() / scale);
        rec.samples.push(Sample::new(
            format!("x={x}"),
            &[
                ("x", x),
                ("value", last),
                ("limit", ladder.limit),
                ("exact", exact),
                ("spread", ladder.spread),
            ],
        ));
    }
    rec.metrics
        .push(Metric::at_most("ladder_error", worst, 0.10));
    Ok(())
}
