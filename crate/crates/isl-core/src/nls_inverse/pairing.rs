use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{nls_scattering, Asymptotics, NlsModel, Profile, ScatteringSpec, H0_MASS};
use crate::error::{Error, Result};
use crate::field::{edge_mass, ComplexField, Spectral, UniformGrid, BOUNDARY_TAIL, I};
use crate::propagators::{splitstep_evolve, EvolutionConfig, SplitStepper};
use crate::radon::fmt_float;

/// Spread of the last two ladder values, in units of sup|V_j|, above which the λ trend is rejected.
pub const LADDER_SPREAD: f64 = 0.15;

fn default_dt() -> f64 {
    0.01
}

fn default_near_time() -> f64 {
    4.0
}

fn default_truncation() -> f64 {
    1e-8
}

fn default_log_step() -> f64 {
    0.05
}

/// Time quadrature for ∫∫ w(x)|e^{-itH}φ|^q dt dx.
///
/// On |t| ≤ near_time the state is stepped with H on the grid. Beyond it the potential is dropped and
/// the free flow is evaluated in closed form from the Fresnel kernel, so the domain never has to hold
/// the spreading packet. The far field is sampled on a logarithmic time lattice and stops once the
/// instantaneous value falls below `truncation` times its peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_near_time")]
    pub near_time: f64,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
    #[serde(default = "default_log_step")]
    pub log_step: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            near_time: default_near_time(),
            truncation: default_truncation(),
            log_step: default_log_step(),
        }
    }
}

/// Spatial weight x ↦ V(scale·x + shift), or 1 everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    pub profile: Option<Profile>,
    pub scale: f64,
    pub shift: f64,
}

impl Weight {
    pub fn uniform() -> Self {
        Self {
            profile: None,
            scale: 1.0,
            shift: 0.0,
        }
    }

    pub fn profile(v: &Profile) -> Self {
        Self {
            profile: Some(v.clone()),
            scale: 1.0,
            shift: 0.0,
        }
    }

    /// x̃ ↦ V(x̃/λ + x́), the weight seen in the scaled frame.
    pub fn scaled(v: &Profile, lambda: f64, x_acute: f64) -> Self {
        Self {
            profile: Some(v.clone()),
            scale: 1.0 / lambda,
            shift: x_acute,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        match &self.profile {
            None => 1.0,
            Some(v) => v.eval(self.scale * x + self.shift),
        }
    }

    /// Interval outside which the weight vanishes, if bounded.
    fn support(&self) -> Option<(f64, f64)> {
        let v = self.profile.as_ref()?;
        let r = v.reach();
        if !r.is_finite() {
            return None;
        }
        Some((
            (-r - self.shift) / self.scale,
            (r - self.shift) / self.scale,
        ))
    }
}

fn density(psi: &[Complex64], w: &[f64], power: i32, dx: f64) -> f64 {
    psi.iter()
        .zip(w)
        .map(|(z, &wk)| wk * z.norm_sqr().powi(power / 2))
        .sum::<f64>()
        * dx
}

/// ∫w|e^{-iτH₀}χ|^q dx for a signed τ, via the Fresnel representation
/// |ψ(2τp)|² = |ĝ(p)|²/(2|τ|) with ĝ the unitary transform of χ(y)e^{iy²/4τ}.
struct FarField {
    grid: UniformGrid,
    chi: Vec<Complex64>,
    padded: Spectral,
    pad: UniformGrid,
}

const PAD: usize = 4;

impl FarField {
    fn new(chi: &ComplexField) -> Result<Self> {
        let g = chi.grid;
        let pad = UniformGrid::new(1, [g.extent(0) * PAD as f64, 0.0], [g.points(0) * PAD, 1])?;
        Ok(Self {
            grid: g,
            chi: chi.values.clone(),
            padded: Spectral::new(&pad),
            pad,
        })
    }

    fn chirped(&self, tau: f64) -> Vec<Complex64> {
        self.chi
            .iter()
            .enumerate()
            .map(|(k, z)| {
                let y = self.grid.coord(0, k);
                z * Complex64::from_polar(1.0, y * y / (4.0 * tau))
            })
            .collect()
    }

    fn integral(&mut self, tau: f64, weight: &Weight, power: i32) -> f64 {
        let c = self.chirped(tau);
        let dx = self.grid.dx(0);
        let norm = dx / (2.0 * PI).sqrt();
        let jacobian = 2.0 * tau.abs();
        let term = |g2: f64| (g2 / jacobian).powi(power / 2) * jacobian;
        match weight.support() {
            Some((a, b)) => {
                // p-nodes on the weight's support mapped through x = 2τp.
                let (pa, pb) = {
                    let (u, v) = (a / (2.0 * tau), b / (2.0 * tau));
                    (u.min(v), u.max(v))
                };
                let m = 256;
                let h = (pb - pa) / m as f64;
                let ys = self.grid.coords(0);
                // e^{-ipy} advanced node to node by a fixed rotation per y.
                let mut rot: Vec<Complex64> = ys
                    .iter()
                    .zip(&c)
                    .map(|(y, z)| z * Complex64::from_polar(1.0, -pa * y))
                    .collect();
                let step: Vec<Complex64> = ys
                    .iter()
                    .map(|y| Complex64::from_polar(1.0, -h * y))
                    .collect();
                let mut s = 0.0;
                for i in 0..=m {
                    let p = pa + i as f64 * h;
                    let ghat = rot.iter().sum::<Complex64>() * norm;
                    rot.iter_mut().zip(&step).for_each(|(r, st)| *r *= st);
                    let wt = if i == 0 || i == m {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    s += wt * weight.eval(2.0 * tau * p) * term(ghat.norm_sqr());
                }
                s * h / 3.0
            }
            None => {
                let n = self.pad.len();
                let offset = (n - self.grid.len()) / 2;
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                buf[offset..offset + c.len()].copy_from_slice(&c);
                self.padded.forward(&mut buf);
                // Coordinates of the padded grid share the origin, so only the modulus matters.
                let dp = self.pad.dp(0);
                buf.iter()
                    .enumerate()
                    .map(|(k, z)| {
                        let p = self.pad.momentum(0, k);
                        weight.eval(2.0 * tau * p) * term((z * norm).norm_sqr())
                    })
                    .sum::<f64>()
                    * dp
            }
        }
    }
}

/// ∫_ℝ∫ w(x)|e^{-itH}φ|^power dx dt with H = H₀ + potential (sampled on φ's grid).
pub fn spacetime_integral(
    phi: &ComplexField,
    potential: &[f64],
    weight: &Weight,
    power: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let g = phi.grid;
    if g.dim() != 1 || potential.len() != g.len() {
        return Err(Error::InvalidParameter(
            "space-time integral needs a 1D state and matching potential".into(),
        ));
    }
    if power < 2 || power % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "power must be an even integer ≥ 2, got {power}"
        )));
    }
    if !(spec.dt > 0.0)
        || !(spec.near_time > 0.0)
        || !(spec.log_step > 0.0)
        || !(spec.truncation > 0.0)
    {
        return Err(Error::InvalidParameter(
            "quadrature parameters must be positive".into(),
        ));
    }
    let power = power as i32;
    let w: Vec<f64> = g.coords(0).into_iter().map(|x| weight.eval(x)).collect();
    let dx = g.dx(0);
    let n = ((spec.near_time / spec.dt) - 1e-9).ceil().max(1.0) as usize;
    let h = spec.near_time / n as f64;
    let mut near = 0.0;
    let mut peak: f64 = density(&phi.values, &w, power, dx);
    let mut ends = Vec::new();
    for sign in [1.0, -1.0] {
        let cfg = EvolutionConfig::new(h, sign * h, "strang", H0_MASS);
        let mut psi = phi.clone();
        let mut prev = density(&psi.values, &w, power, dx);
        for _ in 0..n {
            psi = splitstep_evolve(&psi, potential, &cfg)?;
            let cur = density(&psi.values, &w, power, dx);
            near += 0.5 * (prev + cur) * h;
            peak = peak.max(cur);
            prev = cur;
        }
        let edge = edge_mass(&psi);
        if edge > BOUNDARY_TAIL {
            return Err(Error::TailMass {
                mass: edge,
                limit: BOUNDARY_TAIL,
            });
        }
        ends.push((sign, psi, prev));
    }
    let tau_min = g.extent(0) / (2.0 * g.p_max(0));
    let mut far = 0.0;
    for (sign, chi, start) in ends {
        let mut ff = FarField::new(&chi)?;
        let mut spectral = SplitStepper::free(&g, H0_MASS, 0.0);
        // Lattice t = T e^u, integrated in u with the trapezoid rule (integrand t·I(t)).
        let t0 = spec.near_time;
        let mut prev = t0 * start;
        let mut u = 0.0;
        let mut steps = 0usize;
        loop {
            u += spec.log_step;
            steps += 1;
            let t = t0 * u.exp();
            let tau = sign * (t - t0);
            let val = if tau.abs() < tau_min {
                let mut buf = chi.values.clone();
                let sp = spectral.spectral();
                sp.forward(&mut buf);
                let scale = 1.0 / g.len() as f64;
                for (k, z) in buf.iter_mut().enumerate() {
                    let p = g.momentum(0, k);
                    *z *= Complex64::from_polar(scale, -p * p * tau);
                }
                sp.backward(&mut buf);
                density(&buf, &w, power, dx)
            } else {
                ff.integral(tau, weight, power)
            };
            let cur = t * val;
            far += 0.5 * (prev + cur) * spec.log_step;
            prev = cur;
            if val < spec.truncation * peak && steps > 4 {
                break;
            }
            if steps > 2000 {
                return Err(Error::Truncation(format!(
                    "integrand still {val:.3e} at t = {t:.3e}"
                )));
            }
        }
    }
    Ok(near + far)
}

/// i⟨(S_{V₀} - I)(εφ), φ⟩ with S_{V₀} compared against the linear flow of H.
pub fn nonlinear_pairing(
    phi: &ComplexField,
    model: &NlsModel,
    eps: f64,
    spec: &ScatteringSpec,
) -> Result<Complex64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("ε must be positive".into()));
    }
    let mut spec = spec.clone();
    spec.asymptotics = Asymptotics::Interacting;
    let start = phi.scaled(Complex64::new(eps, 0.0));
    let out = nls_scattering(&start, model, &spec)?;
    let diff = ComplexField {
        grid: phi.grid,
        values: out
            .values
            .iter()
            .zip(&start.values)
            .map(|(a, b)| a - b)
            .collect(),
    };
    Ok(I * diff.inner(phi))
}

/// e^{-it̃H_λ}φ with H_λ = H₀ + λ^{-2}V₀(x/λ + x́).
pub fn scaling_frame_evolve(
    phi: &ComplexField,
    v0: &Profile,
    lambda: f64,
    x_acute: f64,
    t: f64,
    dt: f64,
) -> Result<ComplexField> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("λ must be positive".into()));
    }
    let v = scaled_potential(&phi.grid, v0, lambda, x_acute);
    splitstep_evolve(phi, &v, &EvolutionConfig::new(dt, t, "strang", H0_MASS))
}

fn scaled_potential(grid: &UniformGrid, v0: &Profile, lambda: f64, x_acute: f64) -> Vec<f64> {
    grid.coords(0)
        .into_iter()
        .map(|x| v0.eval(x / lambda + x_acute) / (lambda * lambda))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRecord {
    pub lambdas: Vec<f64>,
    /// λ³∫∫V_j|e^{-itH}φ_λ|^q / ∫∫|e^{-itH₀}φ|^q per λ.
    pub values: Vec<f64>,
    /// Extrapolation of the last two values assuming an O(1/λ) approach.
    pub limit: f64,
    /// |v_n - v_{n-1}| / sup|V_j|.
    pub spread: f64,
}

impl LadderRecord {
    /// Columns lambda,value.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["lambda", "value"])?;
        for (l, v) in self.lambdas.iter().zip(&self.values) {
            w.write_record([fmt_float(*l), fmt_float(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// V_j(x́) from the λ → ∞ limit of the scaled space-time integrals, evaluated in the H_λ frame.
pub fn scaling_limit_vj(
    model: &NlsModel,
    phi: &ComplexField,
    x_acute: f64,
    lambdas: &[f64],
    j: usize,
    spec: &QuadratureSpec,
) -> Result<LadderRecord> {
    if j != 1 {
        return Err(Error::InvalidParameter(format!(
            "only j = 1 is recoverable without the correction terms Q_j (got j = {j})"
        )));
    }
    let vj = model
        .coefficients
        .get(j - 1)
        .ok_or_else(|| Error::InvalidParameter(format!("model has no coefficient V_{j}")))?;
    if lambdas.len() < 2 || lambdas.windows(2).any(|w| !(w[1] > w[0])) || !(lambdas[0] > 0.0) {
        return Err(Error::InvalidParameter(
            "λ ladder must be positive and strictly ascending".into(),
        ));
    }
    if phi.norm() == 0.0 {
        return Err(Error::InvalidParameter("φ must be nonzero".into()));
    }
    let power = 2 * (model.j0 + j + 1);
    let zero = vec![0.0; phi.grid.len()];
    let den = spacetime_integral(phi, &zero, &Weight::uniform(), power, spec)?;
    let values: Vec<f64> = lambdas
        .par_iter()
        .map(|&l| {
            let v = scaled_potential(&phi.grid, &model.v0, l, x_acute);
            Ok(spacetime_integral(phi, &v, &Weight::scaled(vj, l, x_acute), power, spec)? / den)
        })
        .collect::<Result<_>>()?;
    let n = values.len();
    let (la, lb) = (lambdas[n - 2], lambdas[n - 1]);
    let limit = (lb * values[n - 1] - la * values[n - 2]) / (lb - la);
    let scale = (vj.constant.abs() + vj.shapes.max_abs()).max(f64::MIN_POSITIVE);
    let spread = (values[n - 1] - values[n - 2]).abs() / scale;
    if spread > LADDER_SPREAD {
        return Err(Error::Divergence(format!(
            "λ ladder not converging: spread {spread:.3} of sup|V_j|"
        )));
    }
    Ok(LadderRecord {
        lambdas: lambdas.to_vec(),
        values,
        limit,
        spread,
    })
}
