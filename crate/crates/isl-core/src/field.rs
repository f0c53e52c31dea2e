//! Grids, complex fields, Fourier conventions, packets, boosts and norms.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Uniform periodic grid in one or two dimensions, symmetric about the origin.
///
/// Two-dimensional data is stored row-major with axis 1 contiguous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    dim: usize,
    extent: [f64; 2],
    points: [usize; 2],
}

pub fn make_grid(dim: usize, extent: f64, points: usize) -> Result<UniformGrid> {
    match dim {
        1 => UniformGrid::new(1, [extent, 0.0], [points, 1]),
        2 => UniformGrid::new(2, [extent, extent], [points, points]),
        _ => Err(Error::InvalidGrid(format!("dimension {dim} not supported"))),
    }
}

impl UniformGrid {
    pub fn new(dim: usize, extent: [f64; 2], points: [usize; 2]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} not supported")));
        }
        for axis in 0..dim {
            let n = points[axis];
            if n < 16 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "points per axis must be a power of two >= 16, got {n}"
                )));
            }
            if !(extent[axis] > 0.0 && extent[axis].is_finite()) {
                return Err(Error::InvalidGrid(format!(
                    "extent must be positive, got {}",
                    extent[axis]
                )));
            }
        }
        let (extent, points) = if dim == 1 {
            ([extent[0], 0.0], [points[0], 1])
        } else {
            (extent, points)
        };
        Ok(Self {
            dim,
            extent,
            points,
        })
    }

    /// Two-dimensional grid with independent extent and resolution per axis.
    pub fn anisotropic(extent: [f64; 2], points: [usize; 2]) -> Result<Self> {
        Self::new(2, extent, points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis]
    }

    pub fn points(&self, axis: usize) -> usize {
        self.points[axis]
    }

    pub fn len(&self) -> usize {
        self.points[0] * self.points[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    pub fn dp(&self, axis: usize) -> f64 {
        2.0 * PI / self.extent[axis]
    }

    pub fn p_max(&self, axis: usize) -> f64 {
        PI / self.dx(axis)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.dx(a)).product()
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        -0.5 * self.extent[axis] + k as f64 * self.dx(axis)
    }

    /// Momentum of DFT index `k` in standard layout (non-negative first).
    pub fn momentum(&self, axis: usize, k: usize) -> f64 {
        let n = self.points[axis];
        let kk = if k < n / 2 {
            k as isize
        } else {
            k as isize - n as isize
        };
        kk as f64 * self.dp(axis)
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis])
            .map(|k| self.coord(axis, k))
            .collect()
    }

    pub fn momenta(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis])
            .map(|k| self.momentum(axis, k))
            .collect()
    }

    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.points[1], idx % self.points[1])
    }

    pub fn node(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.split(idx);
        if self.dim == 1 {
            [self.coord(0, i), 0.0]
        } else {
            [self.coord(0, i), self.coord(1, j)]
        }
    }

    pub fn momentum_node(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.split(idx);
        if self.dim == 1 {
            [self.momentum(0, i), 0.0]
        } else {
            [self.momentum(0, i), self.momentum(1, j)]
        }
    }

    /// Same spacing, `factor` times as many points along axis 0.
    pub fn stretched(&self, factor: usize) -> Result<Self> {
        let mut extent = self.extent;
        let mut points = self.points;
        extent[0] *= factor as f64;
        points[0] *= factor;
        Self::new(self.dim, extent, points)
    }
}

/// Reusable FFT plans for one grid. Transforms are unnormalized.
pub struct Spectral {
    n: [usize; 2],
    dim: usize,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
    scratch: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl Spectral {
    pub fn new(grid: &UniformGrid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points;
        let fwd = [
            planner.plan_fft_forward(n[0]),
            planner.plan_fft_forward(n[1]),
        ];
        let inv = [
            planner.plan_fft_inverse(n[0]),
            planner.plan_fft_inverse(n[1]),
        ];
        let scratch_len = fwd
            .iter()
            .chain(inv.iter())
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            n,
            dim: grid.dim,
            fwd,
            inv,
            scratch: vec![Complex64::default(); scratch_len],
            work: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.transform(buf, true);
    }

    /// Inverse transform including the 1/N normalization.
    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        self.transform(buf, false);
        let scale = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }

    /// Inverse transform without normalization.
    pub fn backward(&mut self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    fn transform(&mut self, buf: &mut [Complex64], forward: bool) {
        let plans = if forward { &self.fwd } else { &self.inv };
        if self.dim == 1 {
            plans[0].process_with_scratch(buf, &mut self.scratch);
            return;
        }
        let (n0, n1) = (self.n[0], self.n[1]);
        plans[1].process_with_scratch(buf, &mut self.scratch);
        for i in 0..n0 {
            for j in 0..n1 {
                self.work[j * n0 + i] = buf[i * n1 + j];
            }
        }
        plans[0].process_with_scratch(&mut self.work, &mut self.scratch);
        for j in 0..n1 {
            for i in 0..n0 {
                buf[i * n1 + j] = self.work[j * n0 + i];
            }
        }
    }
}

/// Complex amplitudes sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: UniformGrid,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: UniformGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidParameter("non-finite field value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: UniformGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn from_fn(grid: UniformGrid, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.node(k))).collect();
        Self { grid, values }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Linear in `self`, conjugate-linear in `other`.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        inner(&self.values, &other.values) * self.grid.cell_volume()
    }

    pub fn distance(&self, other: &ComplexField) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn scaled(&self, c: Complex64) -> ComplexField {
        ComplexField {
            grid: self.grid,
            values: self.values.iter().map(|z| z * c).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Fourier coefficients in the unitary convention
    /// f̂(p) = (2π)^{-n/2} ∫ e^{-ip·x} f(x) dx, in DFT layout.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let g = &self.grid;
        let mut buf = self.values.clone();
        Spectral::new(g).forward(&mut buf);
        let pref = (2.0 * PI).powf(-(g.dim as f64) / 2.0) * g.cell_volume();
        for (k, z) in buf.iter_mut().enumerate() {
            let p = g.momentum_node(k);
            let phase = 0.5 * (p[0] * g.extent[0] + p[1] * g.extent[1]);
            *z *= Complex64::from_polar(pref, phase);
        }
        buf
    }

    /// Momentum node carrying the largest spectral density.
    pub fn momentum_peak(&self) -> [f64; 2] {
        let s = self.spectrum();
        let (k, _) = s.iter().enumerate().fold((0, -1.0), |acc, (k, z)| {
            if z.norm_sqr() > acc.1 {
                (k, z.norm_sqr())
            } else {
                acc
            }
        });
        self.grid.momentum_node(k)
    }

    /// Periodic translation by whole nodes: result(x) = self(x - shift·Δx).
    pub fn translate_nodes(&self, shift: [isize; 2]) -> ComplexField {
        let g = &self.grid;
        let (n0, n1) = (g.points[0] as isize, g.points[1] as isize);
        let mut out = vec![Complex64::default(); g.len()];
        for i in 0..n0 {
            for j in 0..n1 {
                let si = (i - shift[0]).rem_euclid(n0);
                let sj = (j - shift[1]).rem_euclid(n1);
                out[(i * n1 + j) as usize] = self.values[(si * n1 + sj) as usize];
            }
        }
        ComplexField {
            grid: *g,
            values: out,
        }
    }

    /// Spectral gradient, one component per axis.
    pub fn gradient(&self) -> Vec<Vec<Complex64>> {
        let g = self.grid;
        let mut spec = Spectral::new(&g);
        let mut hat = self.values.clone();
        spec.forward(&mut hat);
        (0..g.dim)
            .map(|axis| {
                let n = g.points[axis];
                let mut d: Vec<Complex64> = hat
                    .iter()
                    .enumerate()
                    .map(|(k, z)| {
                        let (i, j) = g.split(k);
                        let kk = if axis == 0 { i } else { j };
                        if 2 * kk == n {
                            Complex64::default()
                        } else {
                            z * I * g.momentum(axis, kk)
                        }
                    })
                    .collect();
                spec.inverse(&mut d);
                d
            })
            .collect()
    }
}

pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Velocity class of a state: momentum support inside the ball of radius mη about m·v.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateClass {
    pub eta: f64,
    pub center: [f64; 2],
    pub mass: f64,
}

pub const CLASS_TAIL: f64 = 1e-8;

impl StateClass {
    pub fn new(eta: f64, center: [f64; 2], mass: f64) -> Result<Self> {
        if !(eta > 0.0) || !(mass > 0.0) {
            return Err(Error::InvalidParameter(
                "eta and mass must be positive".into(),
            ));
        }
        Ok(Self { eta, center, mass })
    }

    /// Smallest η whose ball holds a Gaussian packet of position width σ up to the class tail.
    pub fn gaussian_eta(width: f64, dim: usize, mass: f64) -> f64 {
        let s = 1.0 / (2.0 * width);
        let r = if dim == 1 {
            s * 2f64.sqrt() * erfc_inv(CLASS_TAIL)
        } else {
            s * (2.0 * (1.0 / CLASS_TAIL).ln()).sqrt()
        };
        r / mass
    }

    /// Relative spectral mass outside the class ball.
    pub fn tail_fraction(&self, field: &ComplexField) -> f64 {
        let s = field.spectrum();
        let g = &field.grid;
        let r = self.mass * self.eta;
        let (mut out, mut total) = (0.0, 0.0);
        for (k, z) in s.iter().enumerate() {
            let p = g.momentum_node(k);
            let d0 = p[0] - self.mass * self.center[0];
            let d1 = if g.dim == 2 {
                p[1] - self.mass * self.center[1]
            } else {
                0.0
            };
            let w = z.norm_sqr();
            total += w;
            if d0.hypot(d1) > r {
                out += w;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            out / total
        }
    }

    pub fn check(&self, field: &ComplexField) -> Result<f64> {
        let t = self.tail_fraction(field);
        if t > CLASS_TAIL {
            return Err(Error::TailMass {
                mass: t,
                limit: CLASS_TAIL,
            });
        }
        Ok(t)
    }
}

pub const BOUNDARY_TAIL: f64 = 1e-8;

/// Normalized Gaussian packet (2πσ²)^{-d/4} exp(-|x-c|²/4σ²) e^{ik·x}.
pub fn gaussian_packet(
    grid: &UniformGrid,
    center: &[f64],
    width: f64,
    momentum: &[f64],
) -> Result<ComplexField> {
    let kabs = momentum
        .iter()
        .take(grid.dim)
        .map(|k| k * k)
        .sum::<f64>()
        .sqrt();
    for axis in 0..grid.dim {
        if kabs + 3.0 / width > 0.9 * grid.p_max(axis) {
            return Err(Error::Nyquist(format!(
                "|k| + 3/width = {:.3} exceeds 0.9 p_max = {:.3}",
                kabs + 3.0 / width,
                0.9 * grid.p_max(axis)
            )));
        }
    }
    gaussian_packet_aniso(grid, center, [width, width], momentum)
}

/// Gaussian packet with separate widths per axis.
pub fn gaussian_packet_aniso(
    grid: &UniformGrid,
    center: &[f64],
    widths: [f64; 2],
    momentum: &[f64],
) -> Result<ComplexField> {
    let dim = grid.dim;
    let c = [
        center.first().copied().unwrap_or(0.0),
        center.get(1).copied().unwrap_or(0.0),
    ];
    let k = [
        momentum.first().copied().unwrap_or(0.0),
        momentum.get(1).copied().unwrap_or(0.0),
    ];
    let mut tail = 0.0;
    for axis in 0..dim {
        let floor = 4.0 * grid.dx(axis);
        if widths[axis] < floor * (1.0 - 1e-12) {
            return Err(Error::Resolution {
                width: widths[axis],
                floor,
            });
        }
        if k[axis].abs() + 3.0 / widths[axis] > 0.9 * grid.p_max(axis) {
            return Err(Error::Nyquist(format!(
                "axis {axis}: |k| + 3/width exceeds 0.9 p_max = {:.3}",
                0.9 * grid.p_max(axis)
            )));
        }
        let half = 0.5 * grid.extent(axis);
        let s = widths[axis] * 2f64.sqrt();
        tail += 0.5 * erfc((half + c[axis]) / s) + 0.5 * erfc((half - c[axis]) / s);
    }
    if tail > BOUNDARY_TAIL {
        return Err(Error::TailMass {
            mass: tail,
            limit: BOUNDARY_TAIL,
        });
    }
    let mut f = ComplexField::from_fn(*grid, |x| {
        let mut e = 0.0;
        let mut ph = 0.0;
        for a in 0..dim {
            e -= (x[a] - c[a]).powi(2) / (4.0 * widths[a] * widths[a]);
            ph += k[a] * x[a];
        }
        Complex64::from_polar(e.exp(), ph)
    });
    let n = f.norm();
    f.values.iter_mut().for_each(|z| *z /= n);
    Ok(f)
}

/// Multiplication by e^{i m v·x}.
pub fn boost(field: &ComplexField, v: &[f64], m: f64) -> Result<ComplexField> {
    let g = field.grid;
    let mv = [
        m * v.first().copied().unwrap_or(0.0),
        m * v.get(1).copied().unwrap_or(0.0),
    ];
    let s = field.spectrum();
    let total: f64 = s.iter().map(|z| z.norm_sqr()).sum();
    let mut aliased = 0.0;
    for (k, z) in s.iter().enumerate() {
        let p = g.momentum_node(k);
        if (0..g.dim).any(|a| (p[a] + mv[a]).abs() >= g.p_max(a)) {
            aliased += z.norm_sqr();
        }
    }
    if total > 0.0 && aliased / total > 1e-10 {
        return Err(Error::Nyquist(format!(
            "boosted spectrum puts {:.2e} of its mass beyond p_max",
            aliased / total
        )));
    }
    let values = field
        .values
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let x = g.node(k);
            z * Complex64::from_polar(1.0, mv[0] * x[0] + mv[1] * x[1])
        })
        .collect();
    Ok(ComplexField { grid: g, values })
}

/// Norms used by the hypotheses of the theorems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormId {
    L2,
    W12,
    /// W^{1,q} with exponent q (q = p + 1 for the NLS growth exponent p).
    W1q(f64),
    /// L¹ with weight (1+|x|)^γ.
    L1Gamma(f64),
    /// sup over unit windows of the local L² mass (1D).
    NV,
}

impl NormId {
    /// Parses `L2`, `W12`, `W1q:<q>`, `L1g:<gamma>` or `NV`.
    pub fn parse(s: &str) -> Result<Self> {
        let unknown = || Error::Unknown {
            kind: "norm",
            name: s.to_string(),
        };
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a.parse::<f64>().map_err(|_| unknown())?)),
            None => (s, None),
        };
        match (head, arg) {
            ("L2", None) => Ok(NormId::L2),
            ("W12", None) => Ok(NormId::W12),
            ("W1q", Some(q)) => Ok(NormId::W1q(q)),
            ("L1g", Some(g)) => Ok(NormId::L1Gamma(g)),
            ("NV", None) => Ok(NormId::NV),
            _ => Err(unknown()),
        }
    }
}

pub enum NormInput<'a> {
    Field(&'a ComplexField),
    Real {
        grid: &'a UniformGrid,
        values: &'a [f64],
    },
}

pub fn norm_suite(input: NormInput<'_>, id: NormId) -> Result<f64> {
    let field = match input {
        NormInput::Field(f) => f.clone(),
        NormInput::Real { grid, values } => ComplexField::new(
            *grid,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )?,
    };
    let g = field.grid;
    let dv = g.cell_volume();
    match id {
        NormId::L2 => Ok(field.norm()),
        NormId::W12 => {
            let grad = field.gradient();
            let d: f64 = grad.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() * dv;
            Ok((field.norm_sq() + d).sqrt())
        }
        NormId::W1q(q) => {
            if !(q >= 1.0) {
                return Err(Error::InvalidParameter(format!("exponent {q} < 1")));
            }
            let grad = field.gradient();
            let mut s = 0.0;
            for k in 0..g.len() {
                let gn: f64 = grad.iter().map(|c| c[k].norm_sqr()).sum::<f64>().sqrt();
                s += field.values[k].norm().powf(q) + gn.powf(q);
            }
            Ok((s * dv).powf(1.0 / q))
        }
        NormId::L1Gamma(gamma) => {
            if gamma < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "weight exponent {gamma} < 0"
                )));
            }
            let s: f64 = (0..g.len())
                .map(|k| {
                    let x = g.node(k);
                    field.values[k].norm() * (1.0 + x[0].hypot(x[1])).powf(gamma)
                })
                .sum();
            Ok(s * dv)
        }
        NormId::NV => {
            if g.dim != 1 {
                return Err(Error::InvalidParameter(
                    "N(V) is defined on the line".into(),
                ));
            }
            let dx = g.dx(0);
            let w = 1.0 / dx;
            let full = w.floor() as usize;
            let frac = w - full as f64;
            let sq: Vec<f64> = field.values.iter().map(|z| z.norm_sqr()).collect();
            let n = sq.len();
            let mut best: f64 = 0.0;
            for j in 0..n {
                let mut s = 0.0;
                for i in 0..full {
                    s += sq.get(j + i).copied().unwrap_or(0.0);
                }
                s += frac * sq.get(j + full).copied().unwrap_or(0.0);
                best = best.max(s * dx);
            }
            Ok(best)
        }
    }
}

/// Fraction of the field's mass in the outer eighth of each axis.
pub fn edge_mass(field: &ComplexField) -> f64 {
    let g = &field.grid;
    let total: f64 = field.values.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let band = |axis: usize, k: usize| {
        let n = g.points(axis);
        let b = (n / 8).max(1);
        k < b || k >= n - b
    };
    let edge: f64 = field
        .values
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let (i, j) = g.split(*k);
            band(0, i) || (g.dim() == 2 && band(1, j))
        })
        .map(|(_, z)| z.norm_sqr())
        .sum();
    edge / total
}
