//! Magnetic fields outside an impenetrable obstacle: gauge fields, high-velocity phase
//! probes, and recovery of the enclosed flux (mod 2) and of the exterior field.
//!
//! Probes run in the co-moving frame, where the envelope obeys
//! i∂φ = ((p - Ã)²/2m - v·Ã)φ with Ã(y, t) = A(y + vt). The long-range part of A is
//! removed by a gauge transformation that equals β·θ̃ far away (θ̃ is the polar angle
//! measured from v̂, cut along the forward ray); the asymptotic gauge factors are then
//! applied exactly, so the finite window carries no 1/(vT) truncation error.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{direction, perp, FieldSpec, Frame};
use crate::error::{Error, Result};
use crate::field::{gaussian_packet_aniso, ComplexField, Spectral, UniformGrid};
use crate::propagators::{LatticeView, MagneticSystem};
use crate::radon::{fmt_float, Sinogram};
use crate::scattering::{half_window, spread, window_grid, wrap_check};
use statrs::function::erf::erfc;

/// Largest fraction of the envelope mass allowed on the obstacle during a probe.
pub const GRAZING_LIMIT: f64 = 1e-8;
/// Largest value of B_R inside K, relative to its peak, accepted as "supported outside K".
pub const OBSTACLE_LEAK: f64 = 1e-6;
/// Adjacent unwrapped phases further apart than this are ambiguous.
pub const UNWRAP_LIMIT: f64 = 0.5 * PI;

/// (-x₂, x₁)/|x|² about `c`: the Coulomb potential of a unit solenoid (flux 2π).
fn a_unit(x: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
    let r2 = dx * dx + dy * dy;
    if r2 == 0.0 {
        return [0.0, 0.0];
    }
    [-dy / r2, dx / r2]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Singular solenoid of normalized flux α inside the disk K of radius `obstacle_radius`
/// about the origin, plus a regular field B_R outside K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeField {
    pub alpha: f64,
    #[serde(default)]
    pub b_r: FieldSpec,
    #[serde(default = "unit_radius")]
    pub obstacle_radius: f64,
}

fn unit_radius() -> f64 {
    1.0
}

impl GaugeField {
    pub fn new(alpha: f64, b_r: FieldSpec, obstacle_radius: f64) -> Result<Self> {
        let g = Self {
            alpha,
            b_r,
            obstacle_radius,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::InvalidParameter("α must be finite".into()));
        }
        if !(self.obstacle_radius > 0.0) {
            return Err(Error::InvalidParameter(
                "the obstacle must be a disk of positive radius".into(),
            ));
        }
        self.b_r.validate().map_err(Error::InvalidParameter)?;
        let peak = self.b_r.max_abs();
        if peak > 0.0 {
            let r = self.obstacle_radius;
            let inside = (0..40)
                .flat_map(|i| {
                    (0..64).map(move |j| (r * i as f64 / 40.0, 2.0 * PI * j as f64 / 64.0))
                })
                .map(|(rho, t)| self.b_r.eval([rho * t.cos(), rho * t.sin()]).abs())
                .fold(0.0, f64::max);
            if inside > OBSTACLE_LEAK * peak {
                return Err(Error::InvalidParameter(format!(
                    "B_R reaches into the obstacle ({:.2e} of its peak)",
                    inside / peak
                )));
            }
        }
        Ok(())
    }

    /// Total flux of B_R.
    pub fn flux_r(&self) -> f64 {
        self.b_r.total()
    }

    /// Normalized flux seen from far away: α + Φ_R/2π.
    pub fn beta(&self) -> f64 {
        self.alpha + self.flux_r() / (2.0 * PI)
    }

    pub fn in_obstacle(&self, x: [f64; 2]) -> bool {
        x[0].hypot(x[1]) < self.obstacle_radius
    }

    /// A_s = α(-x₂, x₁)/|x|².
    pub fn a_singular(&self, x: [f64; 2]) -> [f64; 2] {
        let u = a_unit(x, [0.0, 0.0]);
        [self.alpha * u[0], self.alpha * u[1]]
    }

    /// Coulomb-gauge potential of B_R. Each catalog shape is radial about its center, where
    /// the convolution formula reduces to the enclosed flux: A = Φ(ρ)/(2πρ²)·(-ρ₂, ρ₁).
    pub fn a_regular(&self, x: [f64; 2]) -> [f64; 2] {
        let mut a = [0.0, 0.0];
        for s in &self.b_r.0 {
            let c = s.center();
            let rho = (x[0] - c[0]).hypot(x[1] - c[1]);
            let e = s.enclosed(rho) / (2.0 * PI);
            let u = a_unit(x, c);
            a[0] += e * u[0];
            a[1] += e * u[1];
        }
        a
    }

    /// Coulomb-gauge vector potential A = A_s + A_R.
    pub fn vector_potential(&self, x: [f64; 2]) -> [f64; 2] {
        let (s, r) = (self.a_singular(x), self.a_regular(x));
        [s[0] + r[0], s[1] + r[1]]
    }

    /// (1/2π)∮A·dx counter-clockwise on the circle of the given radius (midpoint rule).
    pub fn circulation(&self, radius: f64, points: usize) -> f64 {
        let h = 2.0 * PI / points as f64;
        (0..points)
            .map(|k| {
                let t = (k as f64 + 0.5) * h;
                let a = self.vector_potential([radius * t.cos(), radius * t.sin()]);
                radius * (-a[0] * t.sin() + a[1] * t.cos())
            })
            .sum::<f64>()
            * h
            / (2.0 * PI)
    }

    /// Λ(b) = ∫v̂·A(b·v̂⊥ + τv̂)dτ over the full line, from Stokes' theorem:
    /// Λ(b) = -πα·sign(b) - Φ_R/2 + ∫_b^∞ R[B_R](b') db'.
    pub fn line_phase(&self, angle: f64, offsets: &[f64]) -> Vec<f64> {
        let reg = regular_phase(&self.b_r, angle, offsets);
        offsets
            .iter()
            .zip(reg)
            .map(|(b, r)| -PI * self.alpha * b.signum() + r)
            .collect()
    }

    /// Peierls lattice of the Coulomb-gauge potential on `grid`, with K deleted.
    pub fn lattice(&self, grid: &UniformGrid, mass: f64) -> Result<MagneticSystem> {
        let sys = MagneticSystem::from_links(*grid, mass, |a, b| {
            let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            dot(self.vector_potential(m), [b[0] - a[0], b[1] - a[1]])
        })?;
        let mask = (0..grid.len())
            .map(|k| self.in_obstacle(grid.node(k)))
            .collect();
        sys.with_mask(mask)
    }
}

/// -Φ_R/2 + ∫_b^∞ R[B_R](b') db'. Panel integrals use 5-point Gauss–Legendre; between
/// panel ends the cumulative integral is interpolated by cubic Hermite, with the exact
/// derivative -R[B_R] at the nodes.
fn regular_phase(b_r: &FieldSpec, angle: f64, offsets: &[f64]) -> Vec<f64> {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683,
        0.538_469_310_105_683,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
        0.236_926_885_056_189,
    ];
    if b_r.is_zero() || offsets.is_empty() {
        return vec![0.0; offsets.len()];
    }
    let d = direction(angle);
    let n = perp(d);
    let top = b_r
        .0
        .iter()
        .map(|s| dot(s.center(), n) + s.support_radius())
        .fold(f64::MIN, f64::max);
    let low = offsets.iter().copied().fold(f64::INFINITY, f64::min);
    let half = -0.5 * b_r.total();
    if low >= top {
        return vec![half; offsets.len()];
    }
    let w = |b: f64| b_r.line_integral([b * n[0], b * n[1]], d);
    let h = (b_r.feature_width().max(0.05) / 8.0).min(0.05);
    let count = ((top - low) / h).ceil() as usize + 1;
    let h = (top - low) / (count - 1) as f64;
    // Node k sits at top - kh; cumulative[k] = ∫ over [top - kh, top].
    let values: Vec<f64> = (0..count).map(|k| w(top - k as f64 * h)).collect();
    let mut cumulative = vec![0.0; count];
    for k in 1..count {
        let mid = top - (k as f64 - 0.5) * h;
        let panel: f64 = NODES
            .iter()
            .zip(WEIGHTS)
            .map(|(x, wt)| wt * w(mid + 0.5 * h * x))
            .sum();
        cumulative[k] = cumulative[k - 1] + 0.5 * h * panel;
    }
    offsets
        .iter()
        .map(|&b| {
            if b >= top {
                return half;
            }
            let pos = (top - b) / h;
            let k = (pos.floor() as usize).min(count - 2);
            let t = pos - k as f64;
            // In the variable pos, dC/dpos = h·W.
            let (c0, c1, m0, m1) = (
                cumulative[k],
                cumulative[k + 1],
                h * values[k],
                h * values[k + 1],
            );
            let (t2, t3) = (t * t, t * t * t);
            let hermite = (2.0 * t3 - 3.0 * t2 + 1.0) * c0
                + (t3 - 2.0 * t2 + t) * m0
                + (-2.0 * t3 + 3.0 * t2) * c1
                + (t3 - t2) * m1;
            half + hermite
        })
        .collect()
}

/// Gauge field together with its samples on a grid.
#[derive(Debug, Clone)]
pub struct SampledGauge {
    pub field: GaugeField,
    pub grid: UniformGrid,
    /// Coulomb-gauge A at every node (zero inside K).
    pub a: Vec<[f64; 2]>,
    pub b_r: Vec<f64>,
    pub system: MagneticSystem,
}

pub fn build_gauge(
    alpha: f64,
    b_r: FieldSpec,
    obstacle_radius: f64,
    grid: &UniformGrid,
    mass: f64,
) -> Result<SampledGauge> {
    let field = GaugeField::new(alpha, b_r, obstacle_radius)?;
    let system = field.lattice(grid, mass)?;
    let a = (0..grid.len())
        .map(|k| {
            let x = grid.node(k);
            if field.in_obstacle(x) {
                [0.0, 0.0]
            } else {
                field.vector_potential(x)
            }
        })
        .collect();
    let b = field.b_r.sample(grid, &Frame::default());
    Ok(SampledGauge {
        field,
        grid: *grid,
        a,
        b_r: b,
        system,
    })
}

/// Envelope centers whose whole line along v̂ stays at least `clearance` from K.
///
/// `obstacle_radius = None` means K = ∅. K must be the disk about the origin.
pub fn omega_vhat_mask(
    obstacle_radius: Option<f64>,
    vhat: [f64; 2],
    clearance: f64,
    grid: &UniformGrid,
) -> Result<Vec<bool>> {
    let Some(r) = obstacle_radius else {
        return Ok(vec![true; grid.len()]);
    };
    let n = perp(vhat);
    let norm = n[0].hypot(n[1]);
    let mask: Vec<bool> = (0..grid.len())
        .map(|k| dot(grid.node(k), n).abs() / norm >= r + clearance)
        .collect();
    if !mask.iter().any(|m| *m) {
        return Err(Error::Coverage(
            "no admissible envelope center on the grid".into(),
        ));
    }
    Ok(mask)
}

/// Largest fraction of a freely spreading Gaussian envelope found on the square
/// circumscribing K during a pass at offset `b`, from the separable Gaussian tails.
pub fn grazing_estimate(obstacle_radius: f64, b: f64, spec: &PhaseProbeSpec) -> f64 {
    let r = obstacle_radius;
    let gap = b.abs() - r;
    if gap <= 0.0 {
        return 1.0;
    }
    let horizon = 2.0 * (r + 10.0 * spec.widths[0]) / spec.v;
    (0..=400)
        .map(|k| {
            let t = horizon * (k as f64 / 400.0 - 0.5);
            let (ws, wu) = (
                spread(spec.widths[0], t, spec.mass),
                spread(spec.widths[1], t, spec.mass),
            );
            let z = std::f64::consts::SQRT_2;
            let along =
                0.5 * (erfc((spec.v * t - r) / (z * ws)) - erfc((spec.v * t + r) / (z * ws)));
            along * 0.5 * erfc(gap / (z * wu))
        })
        .fold(0.0, f64::max)
}

/// Whether a probe at offset `b` is expected to stay a factor 10 inside the grazing limit.
pub fn line_admissible(obstacle_radius: f64, b: f64, spec: &PhaseProbeSpec) -> bool {
    grazing_estimate(obstacle_radius, b, spec) <= 0.1 * GRAZING_LIMIT
}

/// Smooth step from 0 at r₁ to 1 at r₂ (C², quintic), with its derivative.
fn smooth_step(r: f64, r1: f64, r2: f64) -> (f64, f64) {
    if r <= r1 {
        return (0.0, 0.0);
    }
    if r >= r2 {
        return (1.0, 0.0);
    }
    let w = r2 - r1;
    let t = (r - r1) / w;
    (
        t * t * t * (10.0 - 15.0 * t + 6.0 * t * t),
        30.0 * t * t * (1.0 - t) * (1.0 - t) / w,
    )
}

/// Gauge representative used inside a probe: A' = A - ∇χ with
/// χ = c(|x|)·(βθ̃ + k + Σᵢ ψᵢ), where ψᵢ = (Φᵢ/2π)(θ(x - cᵢ) - θ(x)) moves each shape's
/// far field to the origin. A' vanishes outside r₂ except on the cut.
struct ProbeGauge<'a> {
    g: &'a GaugeField,
    vhat: [f64; 2],
    nhat: [f64; 2],
    /// Transition radii; None keeps the Coulomb gauge.
    radii: Option<(f64, f64)>,
    beta: f64,
    fluxes: Vec<f64>,
    /// Constant added to βθ̃ so that |χ| ≤ π|β|/2 on both ends of the probed line.
    shift: f64,
}

impl<'a> ProbeGauge<'a> {
    fn new(g: &'a GaugeField, angle: f64, offset: f64, coulomb: bool) -> Self {
        let vhat = direction(angle);
        let far = g.b_r.0.iter().map(|s| {
            let c = s.center();
            c[0].hypot(c[1])
        });
        let r1 = far.fold(1.5 * g.obstacle_radius, |m, c| m.max(1.1 * c + 0.1));
        Self {
            g,
            vhat,
            nhat: perp(vhat),
            radii: (!coulomb).then_some((r1, r1 + 2.0)),
            beta: g.beta(),
            fluxes: g.b_r.0.iter().map(|s| s.total()).collect(),
            shift: -PI * g.beta() * if offset < 0.0 { 1.5 } else { 0.5 },
        }
    }

    /// Radius outside which A' vanishes (off the cut).
    fn reach(&self) -> f64 {
        let shapes = self.g.b_r.0.iter().map(|s| {
            let c = s.center();
            c[0].hypot(c[1]) + s.support_radius()
        });
        let r2 = self.radii.map_or(f64::INFINITY, |r| r.1);
        shapes.fold(r2.max(self.g.obstacle_radius), f64::max)
    }

    fn theta_tilde(&self, x: [f64; 2]) -> f64 {
        dot(x, self.nhat)
            .atan2(dot(x, self.vhat))
            .rem_euclid(2.0 * PI)
    }

    /// Smooth part of A' at x.
    fn a_prime(&self, x: [f64; 2]) -> [f64; 2] {
        let Some((r1, r2)) = self.radii else {
            return self.g.vector_potential(x);
        };
        let r = x[0].hypot(x[1]);
        let (c, dc) = smooth_step(r, r1, r2);
        let s = a_unit(x, [0.0, 0.0]);
        let mut a = [
            (1.0 - c) * self.g.alpha * s[0],
            (1.0 - c) * self.g.alpha * s[1],
        ];
        let mut chi = self.beta * self.theta_tilde(x) + self.shift;
        let th0 = x[1].atan2(x[0]);
        for (shape, flux) in self.g.b_r.0.iter().zip(&self.fluxes) {
            let ctr = shape.center();
            let rho = (x[0] - ctr[0]).hypot(x[1] - ctr[1]);
            let e = shape.enclosed(rho) / (2.0 * PI);
            let u = a_unit(x, ctr);
            let k = e - c * flux / (2.0 * PI);
            a[0] += k * u[0];
            a[1] += k * u[1];
            if dc != 0.0 {
                chi += flux / (2.0 * PI) * wrap((x[1] - ctr[1]).atan2(x[0] - ctr[0]) - th0);
            }
        }
        if dc != 0.0 && r > 0.0 {
            a[0] -= dc * chi * x[0] / r;
            a[1] -= dc * chi * x[1] / r;
        }
        a
    }

    /// χ(x) = c(|x|)·(βθ̃ + Σᵢ ψᵢ), discontinuous across the cut.
    fn chi(&self, x: [f64; 2]) -> f64 {
        let Some((r1, r2)) = self.radii else {
            return 0.0;
        };
        let (c, _) = smooth_step(x[0].hypot(x[1]), r1, r2);
        if c == 0.0 {
            return 0.0;
        }
        let th0 = x[1].atan2(x[0]);
        let shapes: f64 = self
            .g
            .b_r
            .0
            .iter()
            .zip(&self.fluxes)
            .map(|(s, flux)| {
                let ctr = s.center();
                flux / (2.0 * PI) * wrap((x[1] - ctr[1]).atan2(x[0] - ctr[0]) - th0)
            })
            .sum();
        c * (self.beta * self.theta_tilde(x) + self.shift + shapes)
    }

    /// Hopping phase from a to b: exp(-i∫A·dl) in the Coulomb gauge by the midpoint rule,
    /// times the exact lattice gauge factor exp(i(χ(b) - χ(a))).
    fn link(&self, a: [f64; 2], b: [f64; 2]) -> Complex64 {
        let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let phase = -dot(self.g.vector_potential(m), [b[0] - a[0], b[1] - a[1]]) + self.chi(b)
            - self.chi(a);
        Complex64::from_polar(1.0, phase)
    }

    /// exp(i(χ_out - χ_in)) for the line at offset b: e^{-iπβ·sign(b)}.
    fn asymptotic_factor(&self, b: f64) -> Complex64 {
        if self.radii.is_none() {
            return Complex64::new(1.0, 0.0);
        }
        Complex64::from_polar(1.0, -PI * self.beta * b.signum())
    }
}

/// Envelope and velocity of a magnetic phase probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseProbeSpec {
    pub v: f64,
    /// Envelope widths along v̂ and v̂⊥.
    pub widths: [f64; 2],
    pub spacing: [f64; 2],
    #[serde(default = "unit_mass")]
    pub mass: f64,
    /// Run in the Coulomb gauge over this fixed half-window instead of the asymptotic gauge.
    #[serde(default)]
    pub coulomb_window: Option<f64>,
    #[serde(default)]
    pub stepper: Stepper,
}

/// Time stepping of the co-moving lattice Hamiltonian.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    /// Strang product of exact tridiagonal Cayley factors along s and u.
    #[default]
    Split,
    /// Full Crank–Nicolson step, solved iteratively.
    Cn,
}

fn unit_mass() -> f64 {
    1.0
}

impl PhaseProbeSpec {
    fn validate(&self) -> Result<()> {
        let ok = self.v > 0.0
            && self.mass > 0.0
            && self.widths.iter().chain(&self.spacing).all(|x| *x > 0.0)
            && self.coulomb_window.is_none_or(|t| t > 0.0);
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "phase probe parameters out of range: {self:?}"
            )));
        }
        Ok(())
    }
}

/// One probe line: the measured and predicted normalized diagonal pairings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    /// ⟨S(A)Φ_v, Φ_v⟩/‖Φ₀‖².
    pub measured: Complex64,
    /// ⟨e^{iΛ}Φ₀, Φ₀⟩/‖Φ₀‖².
    pub predicted: Complex64,
    /// |‖S̃Φ₀‖ - ‖Φ₀‖|.
    pub norm_drift: f64,
    pub t_half: f64,
}

/// Powers of the free one-step propagator of the probe lattice, applied spectrally through
/// the finite-difference symbols ω_a.
fn free_step_power(
    psi: &mut ComplexField,
    dt: f64,
    power: f64,
    mass: f64,
    stepper: Stepper,
    spectral: &mut Spectral,
) {
    let g = psi.grid;
    let cayley =
        |h: f64, w: f64| Complex64::new(1.0, -0.5 * h * w) / Complex64::new(1.0, 0.5 * h * w);
    spectral.forward(&mut psi.values);
    for (k, z) in psi.values.iter_mut().enumerate() {
        let p = g.momentum_node(k);
        let w = [0, 1].map(|a| (1.0 - (p[a] * g.dx(a)).cos()) / (mass * g.dx(a).powi(2)));
        let step = match stepper {
            Stepper::Split => cayley(0.5 * dt, w[0]).powi(2) * cayley(dt, w[1]),
            Stepper::Cn => cayley(dt, w[0] + w[1]),
        };
        *z *= step.powf(power);
    }
    spectral.inverse(&mut psi.values);
}

/// Lattice Hamiltonian of one probe step, split into hopping along s and along u.
/// The scalar potential goes with the u part.
struct StripStep<'a> {
    n0: usize,
    n1: usize,
    c: [f64; 2],
    link0: &'a [Complex64],
    link1: &'a [Complex64],
    potential: &'a [f64],
    mask: &'a [bool],
}

#[derive(Default)]
struct LineSolver {
    psi: Vec<Complex64>,
    link: Vec<Complex64>,
    pot: Vec<f64>,
    mask: Vec<bool>,
    upper: Vec<Complex64>,
    rhs: Vec<Complex64>,
}

impl LineSolver {
    /// (I + ih/2·H)x = (I - ih/2·H)ψ for the tridiagonal H with diagonal 2c + pot and
    /// H[k, k+1] = -c·link[k], by the Thomas algorithm. Masked nodes are held at zero.
    fn cayley(&mut self, c: f64, h: f64) {
        let n = self.psi.len();
        let a = Complex64::new(0.0, 0.5 * h);
        let off = |k: usize| -> Complex64 {
            if self.mask[k] || self.mask[k + 1] {
                Complex64::default()
            } else {
                -c * self.link[k]
            }
        };
        self.rhs.clear();
        for k in 0..n {
            if self.mask[k] {
                self.rhs.push(Complex64::default());
                continue;
            }
            let mut hp = (2.0 * c + self.pot[k]) * self.psi[k];
            if k + 1 < n {
                hp += off(k) * self.psi[k + 1];
            }
            if k > 0 {
                hp += off(k - 1).conj() * self.psi[k - 1];
            }
            self.rhs.push(self.psi[k] - a * hp);
        }
        self.upper.resize(n, Complex64::default());
        let mut prev_upper = Complex64::default();
        for k in 0..n {
            let (diag, lower) = if self.mask[k] {
                (Complex64::new(1.0, 0.0), Complex64::default())
            } else {
                let lower = if k > 0 {
                    a * off(k - 1).conj()
                } else {
                    Complex64::default()
                };
                (1.0 + a * (2.0 * c + self.pot[k]), lower)
            };
            let up = if k + 1 < n && !self.mask[k] {
                a * off(k)
            } else {
                Complex64::default()
            };
            let denom = diag - lower * prev_upper;
            self.upper[k] = up / denom;
            let r = if k > 0 {
                self.rhs[k] - lower * self.rhs[k - 1]
            } else {
                self.rhs[k]
            };
            self.rhs[k] = r / denom;
            prev_upper = self.upper[k];
        }
        for k in (0..n.saturating_sub(1)).rev() {
            let next = self.rhs[k + 1];
            self.rhs[k] -= self.upper[k] * next;
        }
        std::mem::swap(&mut self.psi, &mut self.rhs);
    }
}

impl StripStep<'_> {
    fn axis(&self, psi: &mut [Complex64], axis: usize, h: f64, lines: &mut LineSolver) {
        let (count, len, stride, step) = if axis == 0 {
            (self.n1, self.n0, 1, self.n1)
        } else {
            (self.n0, self.n1, self.n1, 1)
        };
        let links = if axis == 0 { self.link0 } else { self.link1 };
        for line in 0..count {
            let base = line * stride;
            let idx = |k: usize| base + k * step;
            lines.psi.clear();
            lines.link.clear();
            lines.pot.clear();
            lines.mask.clear();
            for k in 0..len {
                let i = idx(k);
                lines.psi.push(psi[i]);
                lines.link.push(links[i]);
                lines
                    .pot
                    .push(if axis == 1 { self.potential[i] } else { 0.0 });
                lines.mask.push(self.mask[i]);
            }
            lines.cayley(self.c[axis], h);
            for k in 0..len {
                psi[idx(k)] = lines.psi[k];
            }
        }
    }

    /// Half a step of s-hopping, a full step of u-hopping plus potential, half a step of s.
    fn strang(&self, psi: &mut [Complex64], dt: f64, lines: &mut LineSolver) {
        self.axis(psi, 0, 0.5 * dt, lines);
        self.axis(psi, 1, dt, lines);
        self.axis(psi, 0, 0.5 * dt, lines);
    }
}

/// Co-moving phase probe along one line.
pub fn phase_sample(
    g: &GaugeField,
    angle: f64,
    offset: f64,
    spec: &PhaseProbeSpec,
) -> Result<PhaseSample> {
    spec.validate()?;
    g.validate()?;
    let gauge = ProbeGauge::new(g, angle, offset, spec.coulomb_window.is_some());
    let frame = Frame::new([offset * gauge.nhat[0], offset * gauge.nhat[1]], gauge.vhat);
    let (t_half, feature) = match spec.coulomb_window {
        Some(t) => (t, g.obstacle_radius),
        None => {
            let feature = g
                .b_r
                .feature_width()
                .min(gauge.radii.map_or(f64::INFINITY, |r| r.1 - r.0));
            (
                half_window(gauge.reach(), spec.v, spec.widths[0], spec.mass)?,
                feature,
            )
        }
    };
    let ds = spec.spacing[0];
    let n = (t_half * spec.v / ds).ceil().max(1.0) as usize;
    let t_half = n as f64 * ds / spec.v;
    let dt = ds / spec.v;
    let grid = window_grid(spec.widths, spec.spacing, t_half, spec.mass, feature)?;
    let phi0 = gaussian_packet_aniso(&grid, &[0.0, 0.0], spec.widths, &[0.0, 0.0])?;

    // Strip rows q sit at s = s₀ + (q - n + ½)Δs: the lattice of step j → j+1 is rows j..j+ns.
    let (ns, nu) = (grid.points(0), grid.points(1));
    let rows = ns + 2 * n;
    let s0 = grid.coord(0, 0);
    let du = grid.dx(1);
    let mut potential = vec![0.0; rows * nu];
    let mut link0 = vec![Complex64::new(1.0, 0.0); rows * nu];
    let mut link1 = vec![Complex64::new(1.0, 0.0); rows * nu];
    let mut mask = vec![false; rows * nu];
    let build_row =
        |q: usize, pot: &mut [f64], l0: &mut [Complex64], l1: &mut [Complex64], m: &mut [bool]| {
            let s = s0 + (q as f64 - n as f64 + 0.5) * ds;
            for j in 0..nu {
                let u = grid.coord(1, j);
                let x = frame.to_lab([s, u]);
                m[j] = g.in_obstacle(x);
                pot[j] = -spec.v * dot(gauge.vhat, gauge.a_prime(x));
                l0[j] = gauge.link(x, frame.to_lab([s + ds, u]));
                l1[j] = gauge.link(x, frame.to_lab([s, u + du]));
            }
        };
    potential
        .par_chunks_mut(nu)
        .zip(link0.par_chunks_mut(nu))
        .zip(link1.par_chunks_mut(nu))
        .zip(mask.par_chunks_mut(nu))
        .enumerate()
        .for_each(|(q, (((p, a), b), m))| build_row(q, p, a, b, m));

    let mut spectral = Spectral::new(&grid);
    let mut psi = phi0.clone();
    free_step_power(
        &mut psi,
        dt,
        -(n as f64),
        spec.mass,
        spec.stepper,
        &mut spectral,
    );
    wrap_check(&psi)?;
    let len = grid.len();
    let mut lines = LineSolver::default();
    let mut work = Vec::new();
    for j in 0..2 * n {
        let r = j * nu..j * nu + len;
        let total: f64 = psi.values.iter().map(|z| z.norm_sqr()).sum();
        let on_k: f64 = psi
            .values
            .iter()
            .zip(&mask[r.clone()])
            .filter(|(_, m)| **m)
            .map(|(z, _)| z.norm_sqr())
            .sum();
        if on_k > GRAZING_LIMIT * total {
            return Err(Error::ObstacleContact {
                mass: on_k / total,
                limit: GRAZING_LIMIT,
            });
        }
        let (l0, l1, pot, m) = (
            &link0[r.clone()],
            &link1[r.clone()],
            &potential[r.clone()],
            &mask[r],
        );
        match spec.stepper {
            Stepper::Split => {
                let c = [
                    1.0 / (2.0 * spec.mass * ds * ds),
                    1.0 / (2.0 * spec.mass * du * du),
                ];
                let step = StripStep {
                    n0: ns,
                    n1: nu,
                    c,
                    link0: l0,
                    link1: l1,
                    potential: pot,
                    mask: m,
                };
                step.strang(&mut psi.values, dt, &mut lines);
            }
            Stepper::Cn => {
                let view = LatticeView::new(&grid, spec.mass, l0, l1, m).with_potential(pot);
                view.cn_step(&mut psi.values, dt, &mut work)?;
            }
        }
    }
    wrap_check(&psi)?;
    free_step_power(
        &mut psi,
        dt,
        -(n as f64),
        spec.mass,
        spec.stepper,
        &mut spectral,
    );

    let norm0 = phi0.norm_sq();
    let measured = psi.inner(&phi0) / norm0 * gauge.asymptotic_factor(offset);
    let norm_drift = (psi.norm() - phi0.norm()).abs();

    let weights: Vec<f64> = phi0.values.iter().map(|z| z.norm_sqr()).collect();
    let weights_max = weights.iter().copied().fold(0.0, f64::max);
    let predicted = match spec.coulomb_window {
        None => {
            let cols: Vec<f64> = (0..nu).map(|j| offset + grid.coord(1, j)).collect();
            let lambda = g.line_phase(angle, &cols);
            let mut acc = Complex64::default();
            for (k, w) in weights.iter().enumerate() {
                acc += Complex64::from_polar(*w, lambda[k % nu]);
            }
            acc / weights.iter().sum::<f64>()
        }
        Some(_) => {
            let reach = spec.v * t_half;
            let acc: Complex64 = (0..len)
                .into_par_iter()
                .map(|k| {
                    if weights[k] < 1e-14 * weights_max {
                        return Complex64::default();
                    }
                    let su = grid.node(k);
                    let lambda = segment_phase(g, &frame, su[0] - reach, su[0] + reach, su[1]);
                    Complex64::from_polar(weights[k], lambda)
                })
                .sum();
            acc / weights.iter().sum::<f64>()
        }
    };
    Ok(PhaseSample {
        measured,
        predicted,
        norm_drift,
        t_half,
    })
}

/// ∫v̂·A along the line at window coordinate u from s = a to s = b (Simpson).
fn segment_phase(g: &GaugeField, frame: &Frame, a: f64, b: f64, u: f64) -> f64 {
    let m = 2 * (((b - a) / 0.01).ceil() as usize / 2 + 1);
    let h = (b - a) / m as f64;
    let f = |s: f64| dot(frame.axis, g.vector_potential(frame.to_lab([s, u])));
    let mut acc = f(a) + f(b);
    for k in 1..m {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Phases along one direction, with the unwrapped argument of the measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    pub angle: f64,
    pub offsets: Vec<f64>,
    pub measured: Vec<Complex64>,
    pub predicted: Vec<Complex64>,
    /// true where the line comes too close to K and was not probed.
    pub mask: Vec<bool>,
    pub unwrapped: Vec<Option<f64>>,
    pub predicted_unwrapped: Vec<Option<f64>>,
}

impl PhaseProfile {
    /// RFC-4180 CSV with columns angle,offset,re,im,predicted_re,predicted_im,mask.
    pub fn write_csv(profiles: &[PhaseProfile], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "angle",
            "offset",
            "re",
            "im",
            "predicted_re",
            "predicted_im",
            "mask",
        ])?;
        for p in profiles {
            for (j, b) in p.offsets.iter().enumerate() {
                let cells = if p.mask[j] {
                    [String::new(), String::new(), String::new(), String::new()]
                } else {
                    [
                        fmt_float(p.measured[j].re),
                        fmt_float(p.measured[j].im),
                        fmt_float(p.predicted[j].re),
                        fmt_float(p.predicted[j].im),
                    ]
                };
                let [a, b2, c, d] = cells;
                w.write_record([
                    fmt_float(p.angle),
                    fmt_float(*b),
                    a,
                    b2,
                    c,
                    d,
                    u8::from(p.mask[j]).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Largest |measured - predicted| over probed lines.
    pub fn max_deviation(&self) -> f64 {
        self.measured
            .iter()
            .zip(&self.predicted)
            .zip(&self.mask)
            .filter(|(_, m)| !**m)
            .map(|((a, b), _)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Unwraps arg(z) on each contiguous run of present values on one side of b = 0, anchored
/// at the end of the run farthest from b = 0.
pub fn unwrap_phases(offsets: &[f64], values: &[Option<Complex64>]) -> Result<Vec<Option<f64>>> {
    let mut out = vec![None; values.len()];
    let mut start = 0;
    while start < values.len() {
        if values[start].is_none() {
            start += 1;
            continue;
        }
        let mut end = start;
        while end + 1 < values.len()
            && values[end + 1].is_some()
            && (offsets[end + 1] > 0.0) == (offsets[start] > 0.0)
        {
            end += 1;
        }
        let order: Vec<usize> = if offsets[end].abs() >= offsets[start].abs() {
            (start..=end).rev().collect()
        } else {
            (start..=end).collect()
        };
        let mut prev = values[order[0]].unwrap().arg();
        out[order[0]] = Some(prev);
        for &k in &order[1..] {
            let step = wrap(values[k].unwrap().arg() - prev);
            if step.abs() > UNWRAP_LIMIT {
                return Err(Error::UnwrapAmbiguity(offsets[k]));
            }
            prev += step;
            out[k] = Some(prev);
        }
        start = end + 1;
    }
    Ok(out)
}

/// Phase probes for every direction and admissible offset, in parallel over lines.
pub fn phase_probe(
    g: &GaugeField,
    angles: &[f64],
    offsets: &[f64],
    spec: &PhaseProbeSpec,
) -> Result<Vec<PhaseProfile>> {
    let nb = offsets.len();
    let jobs: Vec<(usize, usize)> = (0..angles.len())
        .flat_map(|i| (0..nb).map(move |j| (i, j)))
        .filter(|&(_, j)| line_admissible(g.obstacle_radius, offsets[j], spec))
        .collect();
    let samples: Vec<Result<PhaseSample>> = jobs
        .par_iter()
        .map(|&(i, j)| phase_sample(g, angles[i], offsets[j], spec))
        .collect();
    let mut profiles: Vec<PhaseProfile> = angles
        .iter()
        .map(|&a| PhaseProfile {
            angle: a,
            offsets: offsets.to_vec(),
            measured: vec![Complex64::default(); nb],
            predicted: vec![Complex64::default(); nb],
            mask: vec![true; nb],
            unwrapped: vec![None; nb],
            predicted_unwrapped: vec![None; nb],
        })
        .collect();
    for (&(i, j), s) in jobs.iter().zip(samples) {
        let s = s?;
        profiles[i].measured[j] = s.measured;
        profiles[i].predicted[j] = s.predicted;
        profiles[i].mask[j] = false;
    }
    for p in &mut profiles {
        let present = |v: &[Complex64]| -> Vec<Option<Complex64>> {
            v.iter()
                .zip(&p.mask)
                .map(|(z, m)| (!m).then_some(*z))
                .collect()
        };
        p.unwrapped = unwrap_phases(&p.offsets, &present(&p.measured))?;
        p.predicted_unwrapped = unwrap_phases(&p.offsets, &present(&p.predicted))?;
    }
    Ok(profiles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxEstimate {
    /// α̂ reduced into [0, 2).
    pub alpha_mod2: f64,
    /// |(λ_above - λ_below) + 2πα̂| reduced mod 2π, after removing B_R.
    pub residual: f64,
}

/// Recovers α mod 2 from one phase profile, removing the B_R contribution predicted by
/// `b_r_estimate`.
pub fn extract_flux_mod2(
    profile: &PhaseProfile,
    b_r_estimate: &FieldSpec,
    tolerance: f64,
) -> Result<FluxEstimate> {
    let correction = regular_phase(b_r_estimate, profile.angle, &profile.offsets);
    let mut above = Complex64::default();
    let mut below = Complex64::default();
    for j in 0..profile.offsets.len() {
        if profile.mask[j] {
            continue;
        }
        let z = profile.measured[j] * Complex64::from_polar(1.0, -correction[j]);
        let unit = z / z.norm();
        if profile.offsets[j] > 0.0 {
            above += unit;
        } else if profile.offsets[j] < 0.0 {
            below += unit;
        }
    }
    if above.norm() == 0.0 || below.norm() == 0.0 {
        return Err(Error::Coverage(
            "need a measured line on each side of K".into(),
        ));
    }
    let (la, lb) = (above.arg(), below.arg());
    let alpha_mod2 = (-la / PI).rem_euclid(2.0);
    let alpha_mod2 = if alpha_mod2 >= 2.0 { 0.0 } else { alpha_mod2 };
    let residual = wrap(la - lb + 2.0 * PI * alpha_mod2).abs();
    if residual > tolerance {
        return Err(Error::InconsistentSides(residual));
    }
    Ok(FluxEstimate {
        alpha_mod2,
        residual,
    })
}

/// Distance between two values on the circle ℝ/2ℤ.
pub fn mod2_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0);
    d.min(2.0 - d)
}

/// Line integrals of B, R[B](b; v̂) = -∂λ/∂b, at the midpoints between adjacent offsets.
///
/// λ(b) - λ(b + Δb) is exactly the flux of B through the strip between the two lines, so
/// the midpoint difference is the strip mean of R[B]. Pairs with a masked end are masked.
/// The err column holds the same difference taken from the predicted phase, minus the
/// measured one: the probe's own deviation.
pub fn b_field_radon_from_phase(profiles: &[PhaseProfile]) -> Result<Sinogram> {
    if profiles.len() < 16 {
        return Err(Error::Coverage(format!(
            "{} directions, at least 16 required",
            profiles.len()
        )));
    }
    let offsets = profiles[0].offsets.clone();
    if offsets.len() < 3 || profiles.iter().any(|p| p.offsets != offsets) {
        return Err(Error::InvalidParameter(
            "profiles must share at least three offsets".into(),
        ));
    }
    let h = offsets[1] - offsets[0];
    let mids: Vec<f64> = offsets.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut s = Sinogram::zeros(profiles.iter().map(|p| p.angle).collect(), mids)?;
    let slope = |l: &[Option<f64>], j: usize| Some(-(l[j + 1]? - l[j]?) / h);
    for (i, p) in profiles.iter().enumerate() {
        for j in 0..offsets.len() - 1 {
            let k = s.index(i, j);
            match (slope(&p.unwrapped, j), slope(&p.predicted_unwrapped, j)) {
                (Some(d), Some(e)) => {
                    s.values[k] = d;
                    s.err[k] = (d - e).abs();
                }
                _ => s.mask[k] = true,
            }
        }
    }
    Ok(s)
}
