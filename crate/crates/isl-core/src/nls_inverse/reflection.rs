use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{nls_scattering, packet_moments, NlsModel, Profile, ScatteringSpec};
use crate::error::{Error, Result};
use crate::field::{gaussian_packet, ComplexField, UniformGrid, I};
use crate::radon::fmt_float;

/// Calibration misfit above which the Born relation is rejected.
pub const CALIBRATION_LIMIT: f64 = 0.05;

/// Wronskian magnitude separating generic from exceptional potentials.
pub const WRONSKIAN_THRESHOLD: f64 = 1e-6;

fn default_momenta() -> Vec<f64> {
    vec![0.4, 0.6, 0.9, 1.35, 2.0, 3.0]
}

fn default_width_factor() -> f64 {
    5.25
}

fn default_threshold() -> f64 {
    1e-3
}

fn default_k_range() -> [f64; 2] {
    [0.25, 4.0]
}

/// Packet family used to sample R(k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionSpec {
    /// Central momenta of the probing packets.
    #[serde(default = "default_momenta")]
    pub momenta: Vec<f64>,
    /// Packet width is width_factor / k₀, so the 1e-3 window spans roughly [k₀/2, 3k₀/2].
    #[serde(default = "default_width_factor")]
    pub width_factor: f64,
    /// Spectral window |φ̂(k)| ≥ threshold·max|φ̂|.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Momentum interval that must be covered without gaps.
    #[serde(default = "default_k_range")]
    pub k_range: [f64; 2],
}

impl Default for ReflectionSpec {
    fn default() -> Self {
        Self {
            momenta: default_momenta(),
            width_factor: default_width_factor(),
            threshold: default_threshold(),
            k_range: default_k_range(),
        }
    }
}

/// Linear scattering S_L for V₀ with a window adapted to each packet.
pub fn s_l_action(v0: &Profile) -> impl Fn(&ComplexField) -> Result<ComplexField> + Sync + '_ {
    move |phi: &ComplexField| {
        let (k, x, sigma) = packet_moments(phi);
        if !(k.abs() > 0.0) {
            return Err(Error::InvalidParameter(
                "probing packet has zero mean momentum".into(),
            ));
        }
        let time = (6.0 * sigma + v0.reach() + x.abs()) / k.abs();
        let dt = (0.1 / (1.5 * k).powi(2)).min(0.05);
        let model = NlsModel {
            v0: v0.clone(),
            ..NlsModel::default()
        };
        nls_scattering(phi, &model, &ScatteringSpec::new(time, dt).unverified())
    }
}

/// R(k) and T(k) for k > 0, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionData {
    pub k: Vec<f64>,
    pub r: Vec<Complex64>,
    pub t: Vec<Complex64>,
}

impl ReflectionData {
    /// max_k ||R|² + |T|² - 1|.
    pub fn unitarity_defect(&self) -> f64 {
        self.r
            .iter()
            .zip(&self.t)
            .map(|(r, t)| (r.norm_sqr() + t.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Born data G(k) = 2ik·R(k)/T(k) ≈ ∫V₀(y)e^{2iky}dy.
    ///
    /// Dividing by T removes most of the second-order phase that R alone carries at low k.
    pub fn born_data(&self) -> Vec<Complex64> {
        self.k
            .iter()
            .zip(self.r.iter().zip(&self.t))
            .map(|(&k, (&r, &t))| 2.0 * I * k * r / t)
            .collect()
    }

    /// Columns k,r_re,r_im,t_re,t_im.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "r_re", "r_im", "t_re", "t_im"])?;
        for ((k, r), t) in self.k.iter().zip(&self.r).zip(&self.t) {
            w.write_record([
                fmt_float(*k),
                fmt_float(r.re),
                fmt_float(r.im),
                fmt_float(t.re),
                fmt_float(t.im),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn check_coverage(&self, range: [f64; 2]) -> Result<()> {
        if self.k.is_empty() {
            return Err(Error::Coverage(format!(
                "no momenta covered in [{}, {}]",
                range[0], range[1]
            )));
        }
        let dk = self
            .k
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let mut gaps = Vec::new();
        if self.k[0] > range[0] + dk {
            gaps.push(format!("[{}, {:.4}]", range[0], self.k[0]));
        }
        for w in self.k.windows(2) {
            if w[1] - w[0] > 1.5 * dk && w[1] > range[0] && w[0] < range[1] {
                gaps.push(format!("[{:.4}, {:.4}]", w[0], w[1]));
            }
        }
        if *self.k.last().unwrap() < range[1] - dk {
            gaps.push(format!("[{:.4}, {}]", self.k.last().unwrap(), range[1]));
        }
        if gaps.is_empty() {
            Ok(())
        } else {
            Err(Error::Coverage(format!(
                "uncovered momenta {}",
                gaps.join(", ")
            )))
        }
    }
}

/// R(k) = F(S_Lφ)(-k)/Fφ(k) on each packet's window, combined with |φ̂|² weights.
pub fn reflection_coefficient(
    action: &(dyn Fn(&ComplexField) -> Result<ComplexField> + Sync),
    grid: &UniformGrid,
    spec: &ReflectionSpec,
) -> Result<ReflectionData> {
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter(
            "reflection data live on a 1D grid".into(),
        ));
    }
    if spec.momenta.iter().any(|&k| !(k > 0.0)) || !(spec.width_factor > 0.0) {
        return Err(Error::InvalidParameter(
            "packet momenta and width factor must be positive".into(),
        ));
    }
    let n = grid.len();
    let partial: Vec<(Vec<Complex64>, Vec<Complex64>, Vec<f64>)> = spec
        .momenta
        .par_iter()
        .map(|&k0| {
            let phi = gaussian_packet(grid, &[0.0], spec.width_factor / k0, &[k0])?;
            let out = action(&phi)?;
            let p = phi.spectrum();
            let o = out.spectrum();
            let peak = p.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let mut rn = vec![Complex64::new(0.0, 0.0); n];
            let mut tn = rn.clone();
            let mut w = vec![0.0; n];
            for j in 0..n {
                if grid.momentum(0, j) > 0.0 && p[j].norm() >= spec.threshold * peak {
                    let wt = p[j].norm_sqr();
                    rn[j] = o[(n - j) % n] / p[j] * wt;
                    tn[j] = o[j] / p[j] * wt;
                    w[j] = wt;
                }
            }
            Ok((rn, tn, w))
        })
        .collect::<Result<_>>()?;
    let mut idx: Vec<usize> = (0..n)
        .filter(|&j| partial.iter().any(|p| p.2[j] > 0.0))
        .collect();
    idx.sort_by(|&a, &b| grid.momentum(0, a).total_cmp(&grid.momentum(0, b)));
    let mut data = ReflectionData {
        k: Vec::new(),
        r: Vec::new(),
        t: Vec::new(),
    };
    for j in idx {
        let w: f64 = partial.iter().map(|p| p.2[j]).sum();
        data.k.push(grid.momentum(0, j));
        data.r
            .push(partial.iter().map(|p| p.0[j]).sum::<Complex64>() / w);
        data.t
            .push(partial.iter().map(|p| p.1[j]).sum::<Complex64>() / w);
    }
    data.check_coverage(spec.k_range)?;
    Ok(data)
}

/// Integrates y'' = q(x)y for complex (y, y') from `a` to `b` with classical RK4.
fn rk4(
    q: impl Fn(f64) -> Complex64,
    a: f64,
    b: f64,
    steps: usize,
    mut y: [Complex64; 2],
) -> [Complex64; 2] {
    let h = (b - a) / steps as f64;
    let f = |x: f64, y: [Complex64; 2]| [y[1], q(x) * y[0]];
    for i in 0..steps {
        let x = a + i as f64 * h;
        let k1 = f(x, y);
        let k2 = f(
            x + 0.5 * h,
            [y[0] + k1[0] * (0.5 * h), y[1] + k1[1] * (0.5 * h)],
        );
        let k3 = f(
            x + 0.5 * h,
            [y[0] + k2[0] * (0.5 * h), y[1] + k2[1] * (0.5 * h)],
        );
        let k4 = f(x + h, [y[0] + k3[0] * h, y[1] + k3[1] * h]);
        for c in 0..2 {
            y[c] += (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) * (h / 6.0);
        }
    }
    y
}

/// Left-incidence (R(k), T(k)) of -u'' + V₀u = k²u from the Jost solution e^{ikx} at +X.
pub fn jost_scattering(v0: &Profile, k: f64, step: f64) -> Result<(Complex64, Complex64)> {
    if !(k > 0.0) || !(step > 0.0) {
        return Err(Error::InvalidParameter(
            "Jost scattering needs k > 0 and a positive step".into(),
        ));
    }
    let x = v0.reach().max(1.0);
    if !x.is_finite() {
        return Err(Error::InvalidParameter(
            "potential must decay at infinity".into(),
        ));
    }
    let steps = (2.0 * x / step).ceil() as usize;
    let e = |x: f64| Complex64::from_polar(1.0, k * x);
    let y = rk4(
        |s| Complex64::new(v0.eval(s) - k * k, 0.0),
        x,
        -x,
        steps,
        [e(x), I * k * e(x)],
    );
    let a = (y[0] * I * k + y[1]) / (2.0 * I * k) / e(-x);
    let b = (y[0] * I * k - y[1]) / (2.0 * I * k) * e(-x);
    if !(a.norm().is_finite()) {
        return Err(Error::Divergence("Jost integration overflowed".into()));
    }
    Ok((b / a, 1.0 / a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialClass {
    Generic,
    Exceptional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: PotentialClass,
    pub wronskian: f64,
}

/// Zero-energy Wronskian [f₁, f₂] = f₁'f₂ - f₁f₂' of the Jost solutions, evaluated at x = 0.
pub fn classify_potential(v0: &Profile, step: f64) -> Result<Classification> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    let x = v0.reach().max(1.0);
    if !x.is_finite() {
        return Err(Error::InvalidParameter(
            "potential must decay at infinity".into(),
        ));
    }
    let steps = (x / step).ceil() as usize;
    let q = |s: f64| Complex64::new(v0.eval(s), 0.0);
    let one = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let f1 = rk4(q, x, 0.0, steps, one);
    let f2 = rk4(q, -x, 0.0, steps, one);
    let w = (f1[1] * f2[0] - f1[0] * f2[1]).re;
    if !w.is_finite() || f1[0].norm() > 1e12 || f2[0].norm() > 1e12 {
        return Err(Error::Divergence(format!(
            "zero-energy integration unstable (W = {w:e})"
        )));
    }
    let class = if w.abs() > WRONSKIAN_THRESHOLD {
        PotentialClass::Generic
    } else {
        PotentialClass::Exceptional
    };
    Ok(Classification {
        class,
        wronskian: w,
    })
}

/// ∫V(y)e^{2iky}dy by composite Simpson over the profile's reach.
fn fourier_2k(v: &Profile, k: f64) -> Complex64 {
    let x = v.reach().max(1.0);
    let n = 2 * ((2.0 * x / 0.005).ceil() as usize / 2 + 1);
    let h = 2.0 * x / n as f64;
    (0..=n)
        .map(|i| {
            let y = -x + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            Complex64::from_polar(w * v.eval(y), 2.0 * k * y)
        })
        .sum::<Complex64>()
        * (h / 3.0)
}

/// Scale κ with V̂(2k) ≈ κ·2ik·R(k)/T(k), fitted once on a reference potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub reference: Profile,
    pub kappa: f64,
    /// ‖κG - V̂_ref(2k)‖ / ‖V̂_ref(2k)‖ over the covered momenta.
    pub residual: f64,
}

impl Calibration {
    pub fn fit(reference: &Profile, data: &ReflectionData) -> Result<Self> {
        let g = data.born_data();
        let truth: Vec<Complex64> = data.k.iter().map(|&k| fourier_2k(reference, k)).collect();
        let gg: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        if !(gg > 0.0) {
            return Err(Error::Calibration(1.0));
        }
        let kappa = g
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a.conj() * b).re)
            .sum::<f64>()
            / gg;
        let num: f64 = g
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a * kappa - b).norm_sqr())
            .sum();
        let den: f64 = truth.iter().map(|z| z.norm_sqr()).sum();
        let residual = (num / den).sqrt();
        if residual > CALIBRATION_LIMIT {
            return Err(Error::Calibration(residual));
        }
        Ok(Self {
            reference: reference.clone(),
            kappa,
            residual,
        })
    }

    /// Forward-simulates the reference with S_L on `grid` and fits κ.
    pub fn from_simulation(
        reference: &Profile,
        grid: &UniformGrid,
        spec: &ReflectionSpec,
    ) -> Result<Self> {
        let action = s_l_action(reference);
        let data = reflection_coefficient(&action, grid, spec)?;
        Self::fit(reference, &data)
    }
}

/// Least-squares polynomial coefficients (ascending powers) for y ≈ Σ c_m b_m(x).
fn lsq(basis: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let m = basis.len();
    let a = nalgebra::DMatrix::from_fn(y.len(), m, |i, j| basis[j][i]);
    let b = nalgebra::DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-14)
        .map(|c| c.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; m])
}

/// First-Born inversion V₀(y) = (2/π)∫₀^{k_max} Re[κG(k)e^{-2iky}] w(k) dk with a Hann window w.
///
/// Momenta below the first sample are filled by a low-order fit on the lowest 0.6 of data: even
/// quadratic in k² for Re G, odd cubic for Im G.
pub fn born_invert_v0(
    data: &ReflectionData,
    calibration: &Calibration,
    grid: &UniformGrid,
) -> Result<Vec<f64>> {
    if data.k.len() < 8 {
        return Err(Error::Coverage(
            "too few reflection samples for inversion".into(),
        ));
    }
    let dk = data.k[1] - data.k[0];
    if data.k.windows(2).any(|w| w[1] - w[0] > 1.5 * dk) {
        return Err(Error::Coverage("reflection data have gaps".into()));
    }
    let g: Vec<Complex64> = data
        .born_data()
        .iter()
        .map(|z| z * calibration.kappa)
        .collect();
    let k0 = data.k[0];
    let fit_idx: Vec<usize> = (0..data.k.len())
        .filter(|&i| data.k[i] <= k0 + 0.6)
        .collect();
    let ks: Vec<f64> = fit_idx.iter().map(|&i| data.k[i]).collect();
    let re: Vec<f64> = fit_idx.iter().map(|&i| g[i].re).collect();
    let im: Vec<f64> = fit_idx.iter().map(|&i| g[i].im).collect();
    let even = lsq(
        &[
            ks.iter().map(|_| 1.0).collect(),
            ks.iter().map(|k| k * k).collect(),
            ks.iter().map(|k| k.powi(4)).collect(),
        ],
        &re,
    );
    let odd = lsq(&[ks.clone(), ks.iter().map(|k| k.powi(3)).collect()], &im);
    let mut kk = Vec::new();
    let mut gg = Vec::new();
    let n_low = (k0 / dk).floor() as usize;
    for i in 0..n_low {
        let k = k0 - (n_low - i) as f64 * dk;
        let k = k.max(0.0);
        kk.push(k);
        gg.push(Complex64::new(
            even[0] + even[1] * k * k + even[2] * k.powi(4),
            odd[0] * k + odd[1] * k.powi(3),
        ));
    }
    kk.extend_from_slice(&data.k);
    gg.extend_from_slice(&g);
    let k_max = *kk.last().unwrap();
    let window: Vec<f64> = kk
        .iter()
        .map(|&k| 0.5 * (1.0 + (PI * k / k_max).cos()))
        .collect();
    let out = grid
        .coords(0)
        .into_iter()
        .map(|y| {
            let f = |i: usize| (gg[i] * Complex64::from_polar(window[i], -2.0 * kk[i] * y)).re;
            let mut s = 0.0;
            for i in 1..kk.len() {
                s += 0.5 * (f(i) + f(i - 1)) * (kk[i] - kk[i - 1]);
            }
            if kk[0] > 0.0 {
                s += f(0) * kk[0];
            }
            2.0 / PI * s
        })
        .collect();
    Ok(out)
}
