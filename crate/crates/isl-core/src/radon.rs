//! Sinograms of the X-ray transform, their inversion, and probe-driven acquisition.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::catalog::{direction, perp, FieldSpec};
use crate::error::{Error, Result};
use crate::field::UniformGrid;
use crate::scattering::{ProbeSpec, ScatteringProbe};

pub use crate::fit::decay_slope;

/// Samples W(b; v̂) on an angle × offset lattice, angle-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sinogram {
    /// Flight directions v̂ = (cos θ, sin θ), θ ∈ [0, π).
    pub angles: Vec<f64>,
    /// Impact parameters b along v̂⊥, uniformly spaced.
    pub offsets: Vec<f64>,
    pub values: Vec<f64>,
    /// true where the line is excluded; the value there is meaningless.
    pub mask: Vec<bool>,
    pub err: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(angles: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        validate_axes(&angles, &offsets)?;
        let n = angles.len() * offsets.len();
        Ok(Self {
            angles,
            offsets,
            values: vec![0.0; n],
            mask: vec![false; n],
            err: vec![0.0; n],
        })
    }

    pub fn index(&self, angle: usize, offset: usize) -> usize {
        angle * self.offsets.len() + offset
    }

    pub fn value(&self, angle: usize, offset: usize) -> Option<f64> {
        let k = self.index(angle, offset);
        (!self.mask[k]).then_some(self.values[k])
    }

    pub fn measured(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    pub fn offset_step(&self) -> f64 {
        if self.offsets.len() < 2 {
            0.0
        } else {
            self.offsets[1] - self.offsets[0]
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|x| *x *= a);
        s.err.iter_mut().for_each(|x| *x *= a.abs());
        s
    }

    /// Largest |value| over measured lines.
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| !**m)
            .map(|(x, _)| x.abs())
            .fold(0.0, f64::max)
    }

    /// RFC-4180 CSV with columns angle,offset,value,mask,err; masked lines have empty value and err.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["angle", "offset", "value", "mask", "err"])?;
        for (i, a) in self.angles.iter().enumerate() {
            for (j, b) in self.offsets.iter().enumerate() {
                let k = self.index(i, j);
                let (value, err) = if self.mask[k] {
                    (String::new(), String::new())
                } else {
                    (fmt_float(self.values[k]), fmt_float(self.err[k]))
                };
                w.write_record([
                    fmt_float(*a),
                    fmt_float(*b),
                    value,
                    u8::from(self.mask[k]).to_string(),
                    err,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let expected = ["angle", "offset", "value", "mask", "err"];
        if headers.iter().ne(expected) {
            return Err(Error::Io(format!(
                "sinogram header must be {}",
                expected.join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Io(format!("column {}: {e}", expected[i])))
            };
            let mask = match &rec[3] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Io(format!("mask must be 0 or 1, got `{other}`"))),
            };
            let (value, err) = if mask { (0.0, 0.0) } else { (num(2)?, num(4)?) };
            rows.push((num(0)?, num(1)?, value, mask, err));
        }
        let mut angles: Vec<f64> = Vec::new();
        let mut offsets: Vec<f64> = Vec::new();
        for r in &rows {
            if angles.last() != Some(&r.0) {
                angles.push(r.0);
            }
            if angles.len() == 1 {
                offsets.push(r.1);
            }
        }
        if angles.len() * offsets.len() != rows.len() {
            return Err(Error::Io(
                "sinogram rows do not form an angle × offset lattice".into(),
            ));
        }
        let mut s = Sinogram::zeros(angles, offsets)?;
        for (k, r) in rows.iter().enumerate() {
            if r.1 != s.offsets[k % s.offsets.len()] {
                return Err(Error::Io(format!("row {k}: offsets differ between angles")));
            }
            s.values[k] = r.2;
            s.mask[k] = r.3;
            s.err[k] = r.4;
        }
        Ok(s)
    }
}

/// Seventeen significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn validate_axes(angles: &[f64], offsets: &[f64]) -> Result<()> {
    if angles.iter().any(|a| !(0.0..PI).contains(a)) {
        return Err(Error::InvalidParameter("angles must lie in [0, π)".into()));
    }
    if offsets.len() >= 2 {
        let h = offsets[1] - offsets[0];
        let uniform = h > 0.0
            && offsets
                .windows(2)
                .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1.0));
        if !uniform {
            return Err(Error::InvalidParameter(
                "offsets must be uniform and increasing".into(),
            ));
        }
    }
    Ok(())
}

/// K equally spaced angles kπ/K.
pub fn uniform_angles(count: usize) -> Vec<f64> {
    (0..count).map(|k| k as f64 * PI / count as f64).collect()
}

/// `count` offsets spaced `step` apart, symmetric about 0.
pub fn centered_offsets(count: usize, step: f64) -> Vec<f64> {
    (0..count)
        .map(|k| (k as f64 - 0.5 * (count as f64 - 1.0)) * step)
        .collect()
}

/// Real field on a planar grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedField {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
    /// Name of the reconstructor that produced the field.
    pub method: String,
    /// Relative data residual per sweep (a single entry for direct methods).
    pub residuals: Vec<f64>,
    /// Relative residual on lines withheld from the inversion.
    pub heldout_residual: Option<f64>,
}

impl ReconstructedField {
    /// ‖f - g‖/‖g‖ over the nodes selected by `region` (all when None).
    pub fn relative_l2(&self, truth: &[f64], region: Option<&[bool]>) -> f64 {
        relative_l2(&self.values, truth, region)
    }

    /// RFC-4180 CSV with columns x,y,value.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_grid_csv(path, &self.grid, &self.values)
    }
}

pub fn write_grid_csv(path: &Path, grid: &UniformGrid, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "value"])?;
    for (k, v) in values.iter().enumerate() {
        let x = grid.node(k);
        w.write_record([fmt_float(x[0]), fmt_float(x[1]), fmt_float(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn relative_l2(values: &[f64], truth: &[f64], region: Option<&[bool]>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..truth.len() {
        if region.map_or(true, |r| r[k]) {
            num += (values[k] - truth[k]).powi(2);
            den += truth[k].powi(2);
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Bilinear sampling weights of the line b·v̂⊥ + t·v̂ at step Δx/2, as a sparse row.
fn line_row(
    grid: &UniformGrid,
    angle: f64,
    b: f64,
    scratch: &mut Vec<f64>,
    touched: &mut Vec<usize>,
) -> Vec<(usize, f64)> {
    let d = direction(angle);
    let n = perp(d);
    let (n0, n1) = (grid.points(0), grid.points(1));
    let (dx0, dx1) = (grid.dx(0), grid.dx(1));
    let (x0, y0) = (grid.coord(0, 0), grid.coord(1, 0));
    let h = 0.5 * dx0.min(dx1);
    let reach = 0.5 * grid.extent(0).hypot(grid.extent(1));
    let steps = (reach / h).ceil() as isize;
    scratch.resize(grid.len(), 0.0);
    for k in -steps..=steps {
        let t = k as f64 * h;
        let px = b * n[0] + t * d[0];
        let py = b * n[1] + t * d[1];
        let fx = (px - x0) / dx0;
        let fy = (py - y0) / dx1;
        if fx < 0.0 || fy < 0.0 {
            continue;
        }
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        if i + 1 >= n0 || j + 1 >= n1 {
            continue;
        }
        let (a, c) = (fx - i as f64, fy - j as f64);
        for (idx, w) in [
            (i * n1 + j, (1.0 - a) * (1.0 - c)),
            ((i + 1) * n1 + j, a * (1.0 - c)),
            (i * n1 + j + 1, (1.0 - a) * c),
            ((i + 1) * n1 + j + 1, a * c),
        ] {
            if w == 0.0 {
                continue;
            }
            if scratch[idx] == 0.0 {
                touched.push(idx);
            }
            scratch[idx] += w * h;
        }
    }
    touched.sort_unstable();
    let row = touched.iter().map(|&i| (i, scratch[i])).collect();
    for &i in touched.iter() {
        scratch[i] = 0.0;
    }
    touched.clear();
    row
}

fn check_planar(grid: &UniformGrid, values: &[f64]) -> Result<()> {
    if grid.dim() != 2 || values.len() != grid.len() {
        return Err(Error::InvalidParameter(
            "expected a planar field sampled on the grid".into(),
        ));
    }
    Ok(())
}

/// Numerical line integrals of a sampled field.
pub fn radon_forward(
    grid: &UniformGrid,
    values: &[f64],
    angles: &[f64],
    offsets: &[f64],
) -> Result<Sinogram> {
    check_planar(grid, values)?;
    let peak = values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let (n0, n1) = (grid.points(0), grid.points(1));
    let edge = (0..grid.len())
        .filter(|&k| {
            let (i, j) = grid.split(k);
            i == 0 || j == 0 || i + 1 == n0 || j + 1 == n1
        })
        .map(|k| values[k].abs())
        .fold(0.0, f64::max);
    if edge > 1e-10 * peak {
        return Err(Error::InvalidParameter(format!(
            "field support touches the grid boundary ({edge:.2e})"
        )));
    }
    let mut s = Sinogram::zeros(angles.to_vec(), offsets.to_vec())?;
    let rows: Vec<f64> = (0..angles.len() * offsets.len())
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(scratch, touched), k| {
                let row = line_row(
                    grid,
                    angles[k / offsets.len()],
                    offsets[k % offsets.len()],
                    scratch,
                    touched,
                );
                row.iter().map(|(i, w)| w * values[*i]).sum()
            },
        )
        .collect();
    s.values = rows;
    Ok(s)
}

/// Band-limited ramp (Ram-Lak) filter apodized by a Hann window, in DFT layout.
fn ramp_filter(len: usize, db: f64) -> Vec<f64> {
    let mut h = vec![Complex64::default(); len];
    for (k, z) in h.iter_mut().enumerate() {
        let n = if k <= len / 2 {
            k as isize
        } else {
            k as isize - len as isize
        };
        let val = if n == 0 {
            0.25 / (db * db)
        } else if n % 2 != 0 {
            -1.0 / (PI * PI * (n * n) as f64 * db * db)
        } else {
            0.0
        };
        *z = Complex64::new(val, 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut h);
    (0..len)
        .map(|k| {
            let n = if k <= len / 2 {
                k as f64
            } else {
                len as f64 - k as f64
            };
            let hann = 0.5 * (1.0 + (PI * n / (len as f64 / 2.0)).cos());
            h[k].re * hann
        })
        .collect()
}

/// Filtered backprojection f(x) = ∫₀^π Q_θ(x·v̂⊥) dθ.
pub fn fbp_invert(sino: &Sinogram, grid: &UniformGrid) -> Result<ReconstructedField> {
    if sino.mask.iter().any(|m| *m) {
        return Err(Error::Masked(
            "filtered backprojection needs every line; use ART".into(),
        ));
    }
    let na = sino.angles.len();
    if na < 32 {
        return Err(Error::Coverage(format!(
            "{na} angles, at least 32 required"
        )));
    }
    let dtheta = PI / na as f64;
    if sino
        .angles
        .iter()
        .enumerate()
        .any(|(k, a)| (a - k as f64 * dtheta).abs() > 1e-9)
    {
        return Err(Error::Coverage("angles must be kπ/K".into()));
    }
    let nb = sino.offsets.len();
    if nb < 2 || grid.dim() != 2 {
        return Err(Error::InvalidParameter(
            "need at least two offsets and a planar grid".into(),
        ));
    }
    let db = sino.offset_step();
    let len = (2 * nb).next_power_of_two();
    let filter = ramp_filter(len, db);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut filtered = vec![0.0; na * nb];
    for i in 0..na {
        let mut buf = vec![Complex64::default(); len];
        for j in 0..nb {
            buf[j] = Complex64::new(sino.values[sino.index(i, j)], 0.0);
        }
        fwd.process(&mut buf);
        buf.iter_mut()
            .zip(&filter)
            .for_each(|(z, f)| *z *= f * db / len as f64);
        inv.process(&mut buf);
        for j in 0..nb {
            filtered[i * nb + j] = buf[j].re;
        }
    }
    let b0 = sino.offsets[0];
    let dirs: Vec<[f64; 2]> = sino.angles.iter().map(|a| perp(direction(*a))).collect();
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.node(k);
            let mut acc = 0.0;
            for (i, n) in dirs.iter().enumerate() {
                let pos = (x[0] * n[0] + x[1] * n[1] - b0) / db;
                if pos < 0.0 || pos > (nb - 1) as f64 {
                    continue;
                }
                let j = (pos.floor() as usize).min(nb - 2);
                let a = pos - j as f64;
                acc += (1.0 - a) * filtered[i * nb + j] + a * filtered[i * nb + j + 1];
            }
            acc * dtheta
        })
        .collect();
    let residual = data_residual(grid, &values, sino, None)?;
    Ok(ReconstructedField {
        grid: *grid,
        values,
        method: "fbp".into(),
        residuals: vec![residual],
        heldout_residual: None,
    })
}

/// ‖Rf - p‖/‖p‖ over measured lines (restricted to `lines` when given).
fn data_residual(
    grid: &UniformGrid,
    values: &[f64],
    sino: &Sinogram,
    lines: Option<&[usize]>,
) -> Result<f64> {
    let all: Vec<usize> = (0..sino.values.len()).filter(|&k| !sino.mask[k]).collect();
    let lines = lines.unwrap_or(&all);
    let nb = sino.offsets.len();
    let pairs: Vec<(f64, f64)> = lines
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(scratch, touched), &k| {
                let row = line_row(
                    grid,
                    sino.angles[k / nb],
                    sino.offsets[k % nb],
                    scratch,
                    touched,
                );
                let model: f64 = row.iter().map(|(i, w)| w * values[*i]).sum();
                ((model - sino.values[k]).powi(2), sino.values[k].powi(2))
            },
        )
        .collect();
    let (num, den) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok(if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtOptions {
    pub iterations: usize,
    pub relaxation: f64,
    /// Withhold every k-th measured line and report the residual there.
    #[serde(default)]
    pub holdout_every: Option<usize>,
}

impl Default for ArtOptions {
    fn default() -> Self {
        Self {
            iterations: 60,
            relaxation: 0.5,
            holdout_every: None,
        }
    }
}

/// Kaczmarz sweeps over measured lines, projecting onto `support` after every sweep.
pub fn art_invert_masked(
    sino: &Sinogram,
    grid: &UniformGrid,
    support: &[bool],
    opts: &ArtOptions,
) -> Result<ReconstructedField> {
    if grid.dim() != 2 || support.len() != grid.len() {
        return Err(Error::InvalidParameter(
            "support must cover the planar grid".into(),
        ));
    }
    if !(opts.relaxation > 0.0 && opts.relaxation < 2.0) {
        return Err(Error::InvalidParameter(
            "relaxation must lie in (0, 2)".into(),
        ));
    }
    let nb = sino.offsets.len();
    let na = sino.angles.len();
    // Visit angles with a large coprime stride so consecutive rows are far from parallel.
    let mut stride = ((na as f64 * 0.618).round() as usize).max(1);
    while gcd(stride, na) != 1 {
        stride += 1;
    }
    let mut order = Vec::with_capacity(sino.values.len());
    for q in 0..na {
        let i = (q * stride) % na;
        for j in 0..nb {
            order.push(i * nb + j);
        }
    }
    let measured: Vec<usize> = order.into_iter().filter(|&k| !sino.mask[k]).collect();
    let (used, heldout): (Vec<usize>, Vec<usize>) = match opts.holdout_every {
        Some(e) if e >= 2 => {
            let (h, u): (Vec<_>, Vec<_>) = measured
                .iter()
                .enumerate()
                .partition(|(q, _)| q % e == e - 1);
            (
                u.into_iter().map(|(_, k)| *k).collect(),
                h.into_iter().map(|(_, k)| *k).collect(),
            )
        }
        _ => (measured, Vec::new()),
    };
    let rows: Vec<(usize, Vec<(usize, f64)>, f64)> = used
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(scratch, touched), &k| {
                let row = line_row(
                    grid,
                    sino.angles[k / nb],
                    sino.offsets[k % nb],
                    scratch,
                    touched,
                );
                let norm: f64 = row.iter().map(|(_, w)| w * w).sum();
                (k, row, norm)
            },
        )
        .collect();
    let data_norm: f64 = used
        .iter()
        .map(|&k| sino.values[k].powi(2))
        .sum::<f64>()
        .sqrt();
    let mut f = vec![0.0; grid.len()];
    let mut residuals = Vec::new();
    if data_norm > 0.0 {
        for _ in 0..opts.iterations {
            for (k, row, norm) in &rows {
                if *norm == 0.0 {
                    continue;
                }
                let model: f64 = row.iter().map(|(i, w)| w * f[*i]).sum();
                let c = opts.relaxation * (sino.values[*k] - model) / norm;
                for (i, w) in row {
                    f[*i] += c * w;
                }
            }
            f.iter_mut().zip(support).for_each(|(x, s)| {
                if !s {
                    *x = 0.0
                }
            });
            let res: f64 = rows
                .iter()
                .map(|(k, row, _)| {
                    let model: f64 = row.iter().map(|(i, w)| w * f[*i]).sum();
                    (model - sino.values[*k]).powi(2)
                })
                .sum::<f64>()
                .sqrt()
                / data_norm;
            residuals.push(res);
            let r = residuals.len();
            if r >= 4 && (r - 3..r).all(|q| residuals[q] > residuals[q - 1]) {
                return Err(Error::Divergence(format!(
                    "ART residual rose for 3 sweeps to {res:.3e}"
                )));
            }
        }
    } else {
        residuals.push(0.0);
    }
    let heldout_residual = if heldout.is_empty() {
        None
    } else {
        Some(data_residual(grid, &f, sino, Some(&heldout))?)
    };
    Ok(ReconstructedField {
        grid: *grid,
        values: f,
        method: "art".into(),
        residuals,
        heldout_residual,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReconOptions {
    /// Nodes allowed to be nonzero; everything when None.
    pub support: Option<Vec<bool>>,
    pub art: ArtOptions,
}

pub trait Reconstructor: Send + Sync {
    fn name(&self) -> &'static str;
    fn reconstruct(
        &self,
        sino: &Sinogram,
        grid: &UniformGrid,
        opts: &ReconOptions,
    ) -> Result<ReconstructedField>;
}

pub struct Fbp;

impl Reconstructor for Fbp {
    fn name(&self) -> &'static str {
        "fbp"
    }

    fn reconstruct(
        &self,
        sino: &Sinogram,
        grid: &UniformGrid,
        _opts: &ReconOptions,
    ) -> Result<ReconstructedField> {
        fbp_invert(sino, grid)
    }
}

pub struct Art;

impl Reconstructor for Art {
    fn name(&self) -> &'static str {
        "art"
    }

    fn reconstruct(
        &self,
        sino: &Sinogram,
        grid: &UniformGrid,
        opts: &ReconOptions,
    ) -> Result<ReconstructedField> {
        let everywhere = vec![true; grid.len()];
        art_invert_masked(
            sino,
            grid,
            opts.support.as_deref().unwrap_or(&everywhere),
            &opts.art,
        )
    }
}

pub struct ReconstructorRegistry {
    methods: BTreeMap<&'static str, Box<dyn Reconstructor>>,
}

impl Default for ReconstructorRegistry {
    fn default() -> Self {
        let mut r = Self {
            methods: BTreeMap::new(),
        };
        r.register(Box::new(Fbp));
        r.register(Box::new(Art));
        r
    }
}

impl ReconstructorRegistry {
    pub fn register(&mut self, method: Box<dyn Reconstructor>) {
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Reconstructor> {
        self.methods
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::Unknown {
                kind: "reconstructor",
                name: name.into(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }
}

/// Envelope and velocity shared by every line of a probe sinogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeTemplate {
    pub v: f64,
    pub widths: [f64; 2],
    pub spacing: [f64; 2],
    #[serde(default = "unit_mass")]
    pub mass: f64,
    #[serde(default)]
    pub verify_window: bool,
}

fn unit_mass() -> f64 {
    1.0
}

impl ProbeTemplate {
    pub fn at(&self, angle: f64, offset: f64) -> ProbeSpec {
        ProbeSpec {
            angle,
            offset,
            v: self.v,
            widths: self.widths,
            spacing: self.spacing,
            mass: self.mass,
            verify_window: self.verify_window,
        }
    }
}

/// W(b; v̂) = Re iv⟨(S-I)Φ_v, Φ_v⟩/‖Φ₀‖² on every line, computed in parallel.
///
/// The error estimate adds the envelope blur bound σ⊥·max_b|∂_bW| per direction to
/// |Im iv⟨(S-I)Φ_v, Φ_v⟩|, the size of the multiple-scattering term at this v.
pub fn probe_sinogram(
    potential: &FieldSpec,
    angles: &[f64],
    offsets: &[f64],
    probe: &ProbeTemplate,
) -> Result<Sinogram> {
    let mut s = Sinogram::zeros(angles.to_vec(), offsets.to_vec())?;
    let nb = offsets.len();
    let samples: Vec<Result<Complex64>> = (0..angles.len() * nb)
        .into_par_iter()
        .map(|k| {
            let p = ScatteringProbe::for_potential(
                probe.at(angles[k / nb], offsets[k % nb]),
                potential,
            )?;
            Ok(p.pairing_only(potential)? / p.phi0.norm_sq())
        })
        .collect();
    let mut imag = vec![0.0; samples.len()];
    for (k, r) in samples.into_iter().enumerate() {
        let z = r?;
        s.values[k] = z.re;
        imag[k] = z.im.abs();
    }
    let db = s.offset_step();
    for i in 0..angles.len() {
        let mut slope = 0.0f64;
        for j in 1..nb.saturating_sub(1) {
            let d = (s.values[s.index(i, j + 1)] - s.values[s.index(i, j - 1)]) / (2.0 * db);
            slope = slope.max(d.abs());
        }
        for j in 0..nb {
            let k = s.index(i, j);
            s.err[k] = probe.widths[1] * slope + imag[k];
        }
    }
    Ok(s)
}
