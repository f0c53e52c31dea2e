//! Small-amplitude nonlinear scattering on the line and recovery of its coefficients.
//!
//! The free Hamiltonian is H₀ = -∂², realised as p²/2m with m = ½.

mod pairing;
mod reflection;

pub use pairing::{
    nonlinear_pairing, scaling_frame_evolve, scaling_limit_vj, spacetime_integral, LadderRecord,
    QuadratureSpec, Weight, LADDER_SPREAD,
};
pub use reflection::{
    born_invert_v0, classify_potential, jost_scattering, reflection_coefficient, s_l_action,
    Calibration, Classification, PotentialClass, ReflectionData, ReflectionSpec, CALIBRATION_LIMIT,
    WRONSKIAN_THRESHOLD,
};

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{FieldShape, FieldSpec};
use crate::error::{Error, Result};
use crate::field::{edge_mass, ComplexField, UniformGrid, BOUNDARY_TAIL};
use crate::fit::loglog_slope;
use crate::propagators::{
    nls_evolve, DenseEvolution, DenseSystem, EvolutionConfig, Laplacian, NlsSystem, SplitStepper,
};
use crate::radon::fmt_float;

/// Mass giving p²/2m = -∂².
pub const H0_MASS: f64 = 0.5;

/// Positive root of ½(ρ-1)/(ρ+1) = 1/ρ.
pub const RHO: f64 = 3.561_552_812_808_830_3;

/// Tolerance on the lowest discrete eigenvalue of H.
pub const SPECTRUM_FLOOR: f64 = -1e-8;

/// Relative change allowed when the scattering window is doubled.
pub const WINDOW_TOLERANCE: f64 = 1e-6;

/// Real profile on the line: a constant plus catalog shapes evaluated along the first axis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub shapes: FieldSpec,
}

impl Profile {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            shapes: FieldSpec::zero(),
        }
    }

    /// A·exp(-(x-c)²/w²)
    pub fn gaussian(amplitude: f64, center: f64, width: f64) -> Self {
        Self {
            constant: 0.0,
            shapes: FieldSpec::single(FieldShape::gaussian(amplitude, [center, 0.0], width)),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.constant + self.shapes.eval_1d(x)
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.shapes.is_zero()
    }

    /// Half-width of the interval outside which the profile is negligible; infinite for a nonzero constant.
    pub fn reach(&self) -> f64 {
        if self.constant != 0.0 {
            f64::INFINITY
        } else {
            self.shapes
                .0
                .iter()
                .map(|s| s.center()[0].abs() + s.support_radius())
                .fold(0.0, f64::max)
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.constant *= factor;
        for s in &mut out.shapes.0 {
            match s {
                FieldShape::Gaussian { amplitude, .. }
                | FieldShape::Ring { amplitude, .. }
                | FieldShape::Disk { amplitude, .. }
                | FieldShape::Bump { amplitude, .. } => *amplitude *= factor,
            }
        }
        out
    }

    pub fn sample(&self, grid: &UniformGrid) -> Vec<f64> {
        grid.coords(0).into_iter().map(|x| self.eval(x)).collect()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.constant.is_finite() {
            return Err("constant must be finite".into());
        }
        self.shapes.validate()
    }
}

fn default_j0() -> usize {
    1
}

fn default_p() -> f64 {
    5.0
}

/// i∂u = (H₀ + V₀)u + Σ_j V_j |u|^{2(j₀+j)} u with growth exponent p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlsModel {
    #[serde(default)]
    pub v0: Profile,
    /// V_1, …, V_jmax.
    #[serde(default)]
    pub coefficients: Vec<Profile>,
    #[serde(default = "default_j0")]
    pub j0: usize,
    #[serde(default = "default_p")]
    pub p: f64,
}

impl Default for NlsModel {
    fn default() -> Self {
        Self {
            v0: Profile::zero(),
            coefficients: Vec::new(),
            j0: default_j0(),
            p: default_p(),
        }
    }
}

impl NlsModel {
    /// Quintic leading term V₁|u|⁴u (j₀ = 1, p = 5).
    pub fn quintic(v0: Profile, v1: Profile) -> Self {
        Self {
            v0,
            coefficients: vec![v1],
            ..Self::default()
        }
    }

    pub fn linear_part(&self) -> Self {
        Self {
            coefficients: Vec::new(),
            ..self.clone()
        }
    }

    pub fn is_linear(&self) -> bool {
        self.coefficients.iter().all(Profile::is_zero)
    }

    /// Exponent of the leading nonlinear term, 2(j₀+1)+1.
    pub fn leading_power(&self) -> usize {
        2 * (self.j0 + 1) + 1
    }

    /// Whether p exceeds ρ, the regime covered by the small-data theory; smaller p is allowed but flagged.
    pub fn within_hypotheses(&self) -> bool {
        self.p > RHO
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if let Err(m) = self.v0.validate() {
            return bad(format!("v0: {m}"));
        }
        for (j, c) in self.coefficients.iter().enumerate() {
            if let Err(m) = c.validate() {
                return bad(format!("coefficients[{j}]: {m}"));
            }
        }
        if self.v0.constant != 0.0 {
            return bad("v0 must decay at infinity (constant part must be zero)".into());
        }
        if !(self.p > 1.0) || !self.p.is_finite() {
            return bad(format!("growth exponent p must exceed 1, got {}", self.p));
        }
        if (self.j0 as f64) < (self.p - 3.0) / 2.0 {
            return bad(format!(
                "j0 = {} is below (p-3)/2 = {}",
                self.j0,
                (self.p - 3.0) / 2.0
            ));
        }
        Ok(())
    }

    /// Lowest eigenvalue of the periodic spectral discretisation of H on a coarse copy of the grid.
    pub fn lowest_eigenvalue(&self, grid: &UniformGrid) -> Result<f64> {
        let n = grid.points(0).min(crate::propagators::DENSE_LIMIT_1D);
        let coarse = UniformGrid::new(1, [grid.extent(0), 0.0], [n, 1])?;
        let v = self.v0.sample(&coarse);
        let dense = DenseEvolution::new(
            &coarse,
            &DenseSystem::Scalar {
                potential: Some(&v),
                laplacian: Laplacian::Spectral,
                mass: H0_MASS,
            },
        )?;
        Ok(dense
            .eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min))
    }

    /// Rejects potentials that bind: the lowest eigenvalue must be at least -1e-8.
    pub fn check_spectrum(&self, grid: &UniformGrid) -> Result<f64> {
        let e = self.lowest_eigenvalue(grid)?;
        if e < SPECTRUM_FLOOR {
            return Err(Error::InvalidParameter(format!(
                "H has a negative eigenvalue {e:.3e}"
            )));
        }
        Ok(e)
    }

    pub fn system(&self, grid: &UniformGrid, blowup_bound: Option<f64>) -> NlsSystem {
        NlsSystem {
            v0: self.v0.sample(grid),
            coeffs: self.coefficients.iter().map(|c| c.sample(grid)).collect(),
            j0: self.j0,
            blowup_bound,
        }
    }

    fn reach(&self) -> f64 {
        self.coefficients
            .iter()
            .map(Profile::reach)
            .fold(self.v0.reach(), f64::max)
    }
}

/// Free states compared against e^{-itH₀} or e^{-itH} at t → ±∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Asymptotics {
    /// S = W₊* S_{V₀} W₋, comparison with the free flow.
    #[default]
    Free,
    /// S_{V₀}, comparison with the linear flow of H = H₀ + V₀.
    Interacting,
}

fn default_verify() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatteringSpec {
    /// Half-window T; the nonlinear flow runs over [-T, T].
    pub time: f64,
    pub dt: f64,
    #[serde(default)]
    pub asymptotics: Asymptotics,
    /// Repeat with 2T and require agreement to 1e-6.
    #[serde(default = "default_verify")]
    pub verify_window: bool,
}

impl ScatteringSpec {
    pub fn new(time: f64, dt: f64) -> Self {
        Self {
            time,
            dt,
            asymptotics: Asymptotics::Free,
            verify_window: true,
        }
    }

    pub fn interacting(mut self) -> Self {
        self.asymptotics = Asymptotics::Interacting;
        self
    }

    pub fn unverified(mut self) -> Self {
        self.verify_window = false;
        self
    }
}

/// Mean momentum and position spread of a 1D state.
pub(crate) fn packet_moments(phi: &ComplexField) -> (f64, f64, f64) {
    let g = &phi.grid;
    let spec = phi.spectrum();
    let (mut m0, mut m1) = (0.0, 0.0);
    for (k, z) in spec.iter().enumerate() {
        let w = z.norm_sqr();
        m0 += w;
        m1 += w * g.momentum(0, k);
    }
    let (mut n0, mut x1, mut x2) = (0.0, 0.0, 0.0);
    for (k, z) in phi.values.iter().enumerate() {
        let w = z.norm_sqr();
        let x = g.coord(0, k);
        n0 += w;
        x1 += w * x;
        x2 += w * x * x;
    }
    let xm = x1 / n0;
    (m1 / m0, xm, (x2 / n0 - xm * xm).max(0.0).sqrt())
}

/// Linear flow e^{-itH_a} for the chosen asymptotics; the interacting flow reuses the Strang step of the
/// nonlinear solver so that forward and backward legs cancel exactly.
fn asymptotic_flow(
    u: &ComplexField,
    linear: &NlsSystem,
    asym: Asymptotics,
    t: f64,
    dt: f64,
) -> Result<ComplexField> {
    match asym {
        Asymptotics::Free => {
            let mut out = u.clone();
            if t != 0.0 {
                SplitStepper::free(&u.grid, H0_MASS, t).apply(&mut out.values);
            }
            Ok(out)
        }
        Asymptotics::Interacting => {
            let cfg = EvolutionConfig::new(dt, t, "nls-strang", H0_MASS);
            Ok(nls_evolve(u, linear, &cfg, 0)?.last)
        }
    }
}

fn scatter_once(
    phi: &ComplexField,
    model: &NlsModel,
    t_half: f64,
    spec: &ScatteringSpec,
) -> Result<ComplexField> {
    let n_half = ((t_half / spec.dt) - 1e-9).ceil().max(1.0);
    let dt = t_half / n_half;
    let bound = 4.0 * phi.max_abs().max(f64::MIN_POSITIVE);
    let sys = model.system(&phi.grid, Some(bound));
    let linear = NlsSystem::linear(sys.v0.clone());
    let start = asymptotic_flow(phi, &linear, spec.asymptotics, -t_half, dt)?;
    let edge = edge_mass(&start);
    if edge > BOUNDARY_TAIL {
        return Err(Error::TailMass {
            mass: edge,
            limit: BOUNDARY_TAIL,
        });
    }
    let cfg = EvolutionConfig::new(dt, 2.0 * t_half, "nls-strang", H0_MASS);
    let end = nls_evolve(&start, &sys, &cfg, 0)?.last;
    let edge = edge_mass(&end);
    if edge > BOUNDARY_TAIL {
        return Err(Error::TailMass {
            mass: edge,
            limit: BOUNDARY_TAIL,
        });
    }
    asymptotic_flow(&end, &linear, spec.asymptotics, -t_half, dt)
}

/// φ₊ = S φ₋ through e^{iH_aT} ∘ (nonlinear flow over [-T, T]) ∘ e^{iH_aT}.
pub fn nls_scattering(
    phi: &ComplexField,
    model: &NlsModel,
    spec: &ScatteringSpec,
) -> Result<ComplexField> {
    model.validate()?;
    if phi.grid.dim() != 1 {
        return Err(Error::InvalidParameter(
            "nonlinear scattering is one-dimensional".into(),
        ));
    }
    if !(spec.time > 0.0) || !(spec.dt > 0.0) {
        return Err(Error::InvalidParameter(
            "window time and dt must be positive".into(),
        ));
    }
    let (k_mean, x_mean, x_std) = packet_moments(phi);
    let reach = model.reach();
    if !model.v0.is_zero() || !model.is_linear() {
        let travel = 2.0 * k_mean.abs() * spec.time;
        if reach.is_finite() && travel < reach + x_mean.abs() + 3.0 * x_std {
            return Err(Error::InvalidParameter(format!(
                "window T = {} too short: packet travels {travel:.3} but must clear {:.3}",
                spec.time,
                reach + x_mean.abs() + 3.0 * x_std
            )));
        }
    }
    let out = scatter_once(phi, model, spec.time, spec)?;
    if spec.verify_window {
        let doubled = scatter_once(phi, model, 2.0 * spec.time, spec)?;
        let change = out.distance(&doubled) / out.norm().max(f64::MIN_POSITIVE);
        if change > WINDOW_TOLERANCE {
            return Err(Error::WindowTooSmall { change });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LinearizationRecord {
    /// Descending ε ladder.
    pub epsilons: Vec<f64>,
    /// S(εφ)/ε per ε.
    pub quotients: Vec<ComplexField>,
    /// S_Lφ from the same pipeline with the nonlinearity removed.
    pub direct: ComplexField,
    /// Richardson limit of the two smallest quotients.
    pub extrapolated: ComplexField,
    /// ‖S(εφ)/ε - S_Lφ‖ / ‖S_Lφ‖ per ε.
    pub errors: Vec<f64>,
    /// ‖q_i - q_{i+1}‖ / ‖S_Lφ‖ between consecutive quotients.
    pub differences: Vec<f64>,
    /// Log-log slope of `errors` against ε.
    pub slope: f64,
    /// ‖extrapolated - S_Lφ‖ / ‖S_Lφ‖.
    pub extrapolation_error: f64,
}

/// Quotients S(εφ)/ε along a descending ladder and their ε → 0 limit.
pub fn linearize_s(
    phi: &ComplexField,
    model: &NlsModel,
    epsilons: &[f64],
    spec: &ScatteringSpec,
) -> Result<LinearizationRecord> {
    if epsilons.len() < 2 {
        return Err(Error::InvalidParameter(
            "linearization needs at least two ε values".into(),
        ));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter(
            "ε ladder must be positive and strictly descending".into(),
        ));
    }
    let direct = nls_scattering(phi, &model.linear_part(), spec)?;
    let quotients: Vec<ComplexField> = epsilons
        .par_iter()
        .map(|&e| {
            let s = nls_scattering(&phi.scaled(Complex64::new(e, 0.0)), model, spec)?;
            Ok(s.scaled(Complex64::new(1.0 / e, 0.0)))
        })
        .collect::<Result<_>>()?;
    let scale = direct.norm().max(f64::MIN_POSITIVE);
    let errors: Vec<f64> = quotients
        .iter()
        .map(|q| q.distance(&direct) / scale)
        .collect();
    let differences: Vec<f64> = quotients
        .windows(2)
        .map(|w| w[0].distance(&w[1]) / scale)
        .collect();
    if differences.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Divergence(format!(
            "quotient differences are not decreasing: {differences:?}"
        )));
    }
    let n = epsilons.len();
    let ratio = (epsilons[n - 2] / epsilons[n - 1]).powi((model.leading_power() - 1) as i32);
    let (a, b) = (&quotients[n - 1], &quotients[n - 2]);
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x * ratio - y) / (ratio - 1.0))
        .collect();
    let extrapolated = ComplexField {
        grid: a.grid,
        values,
    };
    let extrapolation_error = extrapolated.distance(&direct) / scale;
    let slope = if errors.iter().all(|&e| e > 0.0) {
        loglog_slope(epsilons, &errors)
    } else {
        f64::NAN
    };
    Ok(LinearizationRecord {
        epsilons: epsilons.to_vec(),
        quotients,
        direct,
        extrapolated,
        errors,
        differences,
        slope,
        extrapolation_error,
    })
}

impl LinearizationRecord {
    /// Columns epsilon,error,difference; the difference to the next ε is empty on the last row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epsilon", "error", "difference"])?;
        for (i, (&e, &err)) in self.epsilons.iter().zip(&self.errors).enumerate() {
            let d = self
                .differences
                .get(i)
                .map(|&d| fmt_float(d))
                .unwrap_or_default();
            w.write_record([fmt_float(e), fmt_float(err), d])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Real samples on a 1D grid as columns x,value.
pub fn write_line_csv(path: &Path, grid: &UniformGrid, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "value"])?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([fmt_float(grid.coord(0, k)), fmt_float(*v)])?;
    }
    w.flush()?;
    Ok(())
}
