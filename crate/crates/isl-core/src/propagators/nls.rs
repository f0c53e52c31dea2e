use nalgebra::DVector;
use num_complex::Complex64;

use super::dense::{DenseEvolution, DenseSystem};
use super::split::SplitStepper;
use super::{EvolutionConfig, Laplacian};
use crate::error::{Error, Result};
use crate::field::{ComplexField, I};

/// Sampled nonlinear model i∂u = -∂²u + V₀u + Σ_j V_j |u|^{2(j₀+j)} u on a 1D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NlsSystem {
    pub v0: Vec<f64>,
    /// V_1, …, V_jmax sampled on the grid.
    pub coeffs: Vec<Vec<f64>>,
    pub j0: usize,
    /// Evolution aborts once sup|u| exceeds twice this bound.
    pub blowup_bound: Option<f64>,
}

impl NlsSystem {
    pub fn linear(v0: Vec<f64>) -> Self {
        Self {
            v0,
            coeffs: Vec::new(),
            j0: 1,
            blowup_bound: None,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.coeffs.iter().all(|c| c.iter().all(|&x| x == 0.0))
    }

    /// Potential plus nonlinear phase rate at node k for density |u|² = rho.
    pub fn phase_rate(&self, k: usize, rho: f64) -> f64 {
        let mut r = self.v0[k];
        for (jm1, c) in self.coeffs.iter().enumerate() {
            if c[k] != 0.0 {
                r += c[k] * rho.powi((self.j0 + jm1 + 1) as i32);
            }
        }
        r
    }

    /// F(x_k, u) = Σ_j V_j |u|^{2(j₀+j)} u.
    pub fn nonlinearity(&self, k: usize, u: Complex64) -> Complex64 {
        let rho = u.norm_sqr();
        let mut r = 0.0;
        for (jm1, c) in self.coeffs.iter().enumerate() {
            if c[k] != 0.0 {
                r += c[k] * rho.powi((self.j0 + jm1 + 1) as i32);
            }
        }
        u * r
    }

    fn apply_phase(&self, u: &mut [Complex64], dt: f64) {
        for (k, z) in u.iter_mut().enumerate() {
            let rate = self.phase_rate(k, z.norm_sqr());
            *z *= Complex64::from_polar(1.0, -rate * dt);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ComplexField>,
    pub last: ComplexField,
}

/// Strang splitting with the pointwise potential-plus-nonlinear phase solved exactly.
///
/// `sample_every = k > 0` records the state every k steps (and at t = 0).
pub fn nls_evolve(
    u0: &ComplexField,
    sys: &NlsSystem,
    cfg: &EvolutionConfig,
    sample_every: usize,
) -> Result<Trajectory> {
    if sys.v0.len() != u0.grid.len() || sys.coeffs.iter().any(|c| c.len() != u0.grid.len()) {
        return Err(Error::InvalidParameter(
            "model not sampled on the field grid".into(),
        ));
    }
    let (n, dt) = cfg.steps()?;
    let mut u = u0.clone();
    let mut times = Vec::new();
    let mut states = Vec::new();
    if sample_every > 0 {
        times.push(0.0);
        states.push(u.clone());
    }
    if n == 0 {
        return Ok(Trajectory {
            times,
            states,
            last: u,
        });
    }
    let mut kin = SplitStepper::free(&u0.grid, cfg.mass, dt);
    let buf = &mut u.values;
    sys.apply_phase(buf, 0.5 * dt);
    for step in 0..n {
        kin.apply(buf);
        let last = step + 1 == n;
        let recorded = sample_every > 0 && ((step + 1) % sample_every == 0 || last);
        if last || recorded {
            sys.apply_phase(buf, 0.5 * dt);
            if recorded {
                times.push((step + 1) as f64 * dt);
                states.push(ComplexField {
                    grid: u0.grid,
                    values: buf.clone(),
                });
            }
            if !last {
                sys.apply_phase(buf, 0.5 * dt);
            }
        } else {
            sys.apply_phase(buf, dt);
        }
        if let Some(bound) = sys.blowup_bound {
            let sup = buf.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if sup > 2.0 * bound || !sup.is_finite() {
                return Err(Error::BlowUp {
                    time: (step + 1) as f64 * dt,
                    sup,
                });
            }
        }
    }
    Ok(Trajectory {
        times,
        states,
        last: u,
    })
}

#[derive(Debug, Clone)]
pub struct PicardResult {
    pub state: ComplexField,
    pub residuals: Vec<f64>,
    /// Mean ratio of successive residuals.
    pub contraction: f64,
    pub iterations: usize,
}

/// Fixed-point iteration of u(t) = e^{-itH}φ - i∫_{-T}^{t} e^{-i(t-τ)H} F(u(τ)) dτ on [-T, T].
///
/// The linear flow is the exact exponential of the dense spectral Hamiltonian and the
/// Duhamel integral uses the trapezoid rule with step `dt`. Returns u(T).
pub fn picard_solve(
    phi: &ComplexField,
    sys: &NlsSystem,
    t_half: f64,
    dt: f64,
    mass: f64,
    iterations: usize,
    tol: f64,
) -> Result<PicardResult> {
    let grid = phi.grid;
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter(
            "Picard oracle is one-dimensional".into(),
        ));
    }
    let dense = DenseEvolution::new(
        &grid,
        &DenseSystem::Scalar {
            potential: Some(&sys.v0),
            laplacian: Laplacian::Spectral,
            mass,
        },
    )?;
    let nt = ((2.0 * t_half / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = 2.0 * t_half / nt as f64;
    let step = dense.propagator(h);
    let start = DVector::from_vec(dense.evolve(phi, -t_half).values);
    let n = grid.len();

    let mut linear = Vec::with_capacity(nt + 1);
    linear.push(start.clone());
    for k in 0..nt {
        let next = &step * &linear[k];
        linear.push(next);
    }
    let mut u = linear.clone();
    let forcing = |state: &DVector<Complex64>| -> DVector<Complex64> {
        DVector::from_iterator(n, (0..n).map(|k| sys.nonlinearity(k, state[k])))
    };
    let mut residuals = Vec::new();
    let mut iterations_done = 0;
    for _ in 0..iterations.max(1) {
        iterations_done += 1;
        let f: Vec<DVector<Complex64>> = u.iter().map(forcing).collect();
        let mut next = Vec::with_capacity(nt + 1);
        next.push(start.clone());
        let half = I * (0.5 * h);
        for k in 0..nt {
            let w = &next[k] - &f[k] * half;
            next.push(&step * w - &f[k + 1] * half);
        }
        let res = next
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).norm() * grid.dx(0).sqrt())
            .fold(0.0, f64::max);
        u = next;
        residuals.push(res);
        let r = residuals.len();
        if r >= 3 && residuals[r - 1] > residuals[r - 2] && residuals[r - 2] > residuals[r - 3] {
            return Err(Error::Divergence(format!(
                "Picard residual grew to {res:.3e}"
            )));
        }
        if res <= tol {
            break;
        }
    }
    let ratios: Vec<f64> = residuals
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let contraction = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    let state = ComplexField {
        grid,
        values: u[nt].iter().copied().collect(),
    };
    Ok(PicardResult {
        state,
        residuals,
        contraction,
        iterations: iterations_done,
    })
}
