use num_complex::Complex64;

use super::EvolutionConfig;
use crate::error::{Error, Result};
use crate::field::{ComplexField, Spectral, UniformGrid};

/// Kinetic factor e^{-iK(p)dt} applied through the FFT, with K any real symbol.
pub struct SplitStepper {
    spectral: Spectral,
    symbol: Vec<f64>,
    dt: f64,
    multiplier: Vec<Complex64>,
}

impl SplitStepper {
    pub fn new(grid: &UniformGrid, symbol: impl Fn([f64; 2]) -> f64, dt: f64) -> Self {
        let scale = 1.0 / grid.len() as f64;
        let symbol: Vec<f64> = (0..grid.len())
            .map(|k| symbol(grid.momentum_node(k)))
            .collect();
        let multiplier = symbol
            .iter()
            .map(|s| Complex64::from_polar(scale, -s * dt))
            .collect();
        Self {
            spectral: Spectral::new(grid),
            symbol,
            dt,
            multiplier,
        }
    }

    /// Kinetic energy p²/2m.
    pub fn free(grid: &UniformGrid, mass: f64, dt: f64) -> Self {
        Self::new(grid, |p| (p[0] * p[0] + p[1] * p[1]) / (2.0 * mass), dt)
    }

    pub fn apply(&mut self, buf: &mut [Complex64]) {
        self.spectral.forward(buf);
        buf.iter_mut()
            .zip(&self.multiplier)
            .for_each(|(z, m)| *z *= m);
        self.spectral.backward(buf);
    }

    /// Applies the factor `n` times using a single pair of transforms.
    pub fn apply_n(&mut self, buf: &mut [Complex64], n: usize) {
        if n == 0 {
            return;
        }
        self.spectral.forward(buf);
        let scale = 1.0 / buf.len() as f64;
        let t = self.dt * n as f64;
        buf.iter_mut()
            .zip(&self.symbol)
            .for_each(|(z, s)| *z *= Complex64::from_polar(scale, -s * t));
        self.spectral.backward(buf);
    }

    pub fn spectral(&mut self) -> &mut Spectral {
        &mut self.spectral
    }
}

/// Exact free evolution e^{-ip²t/2m}.
pub fn free_step(psi: &ComplexField, t: f64, m: f64) -> ComplexField {
    let mut out = psi.clone();
    if t != 0.0 {
        SplitStepper::free(&psi.grid, m, t).apply(&mut out.values);
    }
    out
}

pub(crate) fn phases(v: &[f64], dt: f64) -> Vec<Complex64> {
    v.iter()
        .map(|&x| Complex64::from_polar(1.0, -x * dt))
        .collect()
}

/// Strang splitting: half potential phase, full free step, half potential phase.
pub fn splitstep_evolve(
    psi: &ComplexField,
    v: &[f64],
    cfg: &EvolutionConfig,
) -> Result<ComplexField> {
    if v.len() != psi.grid.len() {
        return Err(Error::InvalidParameter(
            "potential not sampled on the field grid".into(),
        ));
    }
    let (n, dt) = cfg.steps()?;
    let vmax = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if dt.abs() * vmax > 0.5 {
        return Err(Error::Cfl(dt.abs() * vmax));
    }
    let mut out = psi.clone();
    if n == 0 {
        return Ok(out);
    }
    let mut kin = SplitStepper::free(&psi.grid, cfg.mass, dt);
    if vmax == 0.0 {
        kin.apply_n(&mut out.values, n);
        return Ok(out);
    }
    let half = phases(v, 0.5 * dt);
    let full = phases(v, dt);
    let buf = &mut out.values;
    buf.iter_mut().zip(&half).for_each(|(z, p)| *z *= p);
    for step in 0..n {
        kin.apply(buf);
        let ph = if step + 1 == n { &half } else { &full };
        buf.iter_mut().zip(ph).for_each(|(z, p)| *z *= p);
    }
    Ok(out)
}
