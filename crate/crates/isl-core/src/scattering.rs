//! Finite-window scattering operators and high-velocity pairings.
//!
//! Probes are computed in the frame co-moving with the boost: for
//! ψ(t, x) = e^{imv·x - imv²t/2} φ(t, x - vt) the envelope φ obeys
//! i∂φ = (p²/2m + V(x + vt))φ, so ⟨SΦ_v, Ψ_v⟩ = ⟨S̃Φ₀, Ψ₀⟩ with S̃ built from the
//! sliding potential. The grid only has to resolve the envelope, not the momentum mv.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::catalog::{direction, perp, FieldSpec, Frame};
use crate::error::{Error, Result};
use crate::field::{
    edge_mass, gaussian_packet_aniso, inner, ComplexField, Spectral, StateClass, UniformGrid, I,
};
use crate::propagators::{
    free_step, magnetic_cn_evolve, splitstep_evolve, EvolutionConfig, MagneticSystem, SplitStepper,
};

/// Largest change allowed when the time window is doubled.
pub const WINDOW_TOLERANCE: f64 = 1e-6;
/// Largest mass fraction allowed in the outer band of a periodic window.
pub const WRAP_LIMIT: f64 = 1e-6;
/// Born integrand norm below which the τ-quadrature is considered converged.
pub const BORN_CUTOFF: f64 = 1e-10;

/// Clearance between envelope and potential at ±T, in spread envelope widths; the
/// envelope amplitude there is e^{-25}.
const CLEARANCE_WIDTHS: f64 = 10.0;
/// Half-extent of a probe window, in spread envelope widths. The outer eighth then
/// starts 5.25 widths out, where the Gaussian mass is 1.5e-7.
const WINDOW_WIDTHS: f64 = 7.0;

pub enum Interaction<'a> {
    Free,
    Scalar(&'a [f64]),
    Magnetic(&'a MagneticSystem),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub t_half: f64,
    pub dt: f64,
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct ScatteredState {
    pub state: ComplexField,
    /// ‖S_T φ - S_{2T} φ‖ when the window was verified.
    pub change: Option<f64>,
}

pub(crate) fn wrap_check(f: &ComplexField) -> Result<()> {
    let m = edge_mass(f);
    if m > WRAP_LIMIT {
        return Err(Error::WrapAround {
            mass: m,
            limit: WRAP_LIMIT,
        });
    }
    Ok(())
}

/// e^{iH₀T} e^{-2iHT} e^{iH₀T} φ for one fixed window.
pub fn apply_s_fixed(
    phi: &ComplexField,
    system: &Interaction<'_>,
    w: &Window,
) -> Result<ComplexField> {
    let t = w.t_half;
    match system {
        Interaction::Free => {
            let incoming = free_step(phi, -t, w.mass);
            wrap_check(&incoming)?;
            let out = free_step(&incoming, 2.0 * t, w.mass);
            Ok(free_step(&out, -t, w.mass))
        }
        Interaction::Scalar(v) => {
            let incoming = free_step(phi, -t, w.mass);
            wrap_check(&incoming)?;
            let out = splitstep_evolve(
                &incoming,
                v,
                &EvolutionConfig::new(w.dt, 2.0 * t, "strang", w.mass),
            )?;
            wrap_check(&out)?;
            Ok(free_step(&out, -t, w.mass))
        }
        Interaction::Magnetic(sys) => {
            // The free reference is the same lattice without links or mask, so S = I at A = 0.
            let free = MagneticSystem::free(sys.grid, sys.mass)?;
            let back = EvolutionConfig::new(w.dt, -t, "magnetic-cn", sys.mass);
            let incoming = magnetic_cn_evolve(phi, &free, &back)?;
            wrap_check(&incoming)?;
            let out = magnetic_cn_evolve(
                &incoming,
                sys,
                &EvolutionConfig::new(w.dt, 2.0 * t, "magnetic-cn", sys.mass),
            )?;
            wrap_check(&out)?;
            magnetic_cn_evolve(&out, &free, &back)
        }
    }
}

/// Finite-window scattering operator with the T-doubling stability check.
pub fn apply_s(phi: &ComplexField, system: &Interaction<'_>, w: &Window) -> Result<ScatteredState> {
    let state = apply_s_fixed(phi, system, w)?;
    let doubled = apply_s_fixed(
        phi,
        system,
        &Window {
            t_half: 2.0 * w.t_half,
            ..*w
        },
    )?;
    let change = state.distance(&doubled);
    if change > WINDOW_TOLERANCE {
        return Err(Error::WindowTooSmall { change });
    }
    Ok(ScatteredState {
        state,
        change: Some(change),
    })
}

/// Position width of a free Gaussian of initial width σ after time t.
pub fn spread(width: f64, t: f64, mass: f64) -> f64 {
    width * (1.0 + (t / (2.0 * mass * width * width)).powi(2)).sqrt()
}

/// Smallest T with vT ≥ clearance + 10σ_s(T).
pub(crate) fn half_window(clearance: f64, v: f64, width_s: f64, mass: f64) -> Result<f64> {
    // The envelope edge recedes at 10/(2mσ) per unit time; the probe must outrun it.
    let edge_speed = CLEARANCE_WIDTHS / (2.0 * mass * width_s);
    if v <= edge_speed {
        return Err(Error::InvalidParameter(format!(
            "v = {v} does not outrun the envelope spreading ({edge_speed:.3}); widen the envelope"
        )));
    }
    let mut t = (clearance + CLEARANCE_WIDTHS * width_s) / v;
    for _ in 0..200 {
        let next = (clearance + CLEARANCE_WIDTHS * spread(width_s, t, mass)) / v;
        if (next - t).abs() <= 1e-12 * t {
            return Ok(next);
        }
        t = next;
    }
    Ok(t)
}

/// Width of the scattered part of an envelope of width σ hit by a feature of width w.
///
/// The outgoing wave carries the transverse momenta of V, so it spreads like a packet
/// with envelope e^{-u²/w²}e^{-u²/4σ²}.
pub fn scattered_width(width: f64, feature: f64) -> f64 {
    0.5 / (1.0 / (feature * feature) + 0.25 / (width * width)).sqrt()
}

/// Periodic window holding both envelope widths spread over time `t`, and in the
/// transverse direction also the scattered wave of a feature of width `feature`.
pub(crate) fn window_grid(
    widths: [f64; 2],
    spacing: [f64; 2],
    t: f64,
    mass: f64,
    feature: f64,
) -> Result<UniformGrid> {
    let mut points = [0usize; 2];
    for a in 0..2 {
        let mut spreadw = spread(widths[a], t, mass);
        if a == 1 {
            spreadw = spreadw.max(spread(
                scattered_width(widths[a], feature.max(spacing[a])),
                t,
                mass,
            ));
        }
        let half = WINDOW_WIDTHS * spreadw;
        points[a] = ((2.0 * half / spacing[a]).ceil() as usize)
            .max(16)
            .next_power_of_two();
    }
    UniformGrid::new(
        2,
        [points[0] as f64 * spacing[0], points[1] as f64 * spacing[1]],
        points,
    )
}

/// Geometry of one high-velocity measurement along a line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    /// Direction of flight v̂ = (cos angle, sin angle).
    pub angle: f64,
    /// Impact parameter b: the envelope is centered at b·v̂⊥.
    pub offset: f64,
    pub v: f64,
    /// Envelope widths along v̂ and v̂⊥.
    pub widths: [f64; 2],
    /// Window spacing along v̂ and v̂⊥.
    pub spacing: [f64; 2],
    #[serde(default = "unit_mass")]
    pub mass: f64,
    /// Rerun with 2T and compare; the window is then sized for 2T.
    #[serde(default = "yes")]
    pub verify_window: bool,
}

fn unit_mass() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl ProbeSpec {
    pub fn vhat(&self) -> [f64; 2] {
        direction(self.angle)
    }

    pub fn frame(&self) -> Frame {
        let n = perp(self.vhat());
        Frame::new([self.offset * n[0], self.offset * n[1]], self.vhat())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.v > 0.0
            && self.mass > 0.0
            && self.widths.iter().all(|w| *w > 0.0)
            && self.spacing.iter().all(|d| *d > 0.0)
            && self.angle.is_finite()
            && self.offset.is_finite();
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "probe parameters out of range: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Along-track distance from the envelope center beyond which `potential` is negligible.
pub fn along_track_reach(potential: &FieldSpec, frame: &Frame) -> f64 {
    potential
        .0
        .iter()
        .map(|s| frame.to_local(s.center())[0].abs() + s.support_radius())
        .fold(0.0, f64::max)
}

/// One envelope pair in the co-moving frame, with its time window.
#[derive(Debug, Clone)]
pub struct ScatteringProbe {
    pub spec: ProbeSpec,
    pub frame: Frame,
    /// Window grid: axis 0 along v̂, axis 1 along v̂⊥.
    pub grid: UniformGrid,
    pub phi0: ComplexField,
    pub psi0: ComplexField,
    /// Velocity-support radius of the envelopes.
    pub eta: f64,
    pub t_half: f64,
    /// Number of steps of size Δs/v in [0, T].
    pub steps: usize,
}

impl ScatteringProbe {
    /// Diagonal Gaussian probe whose window clears everything within `clearance` of the
    /// envelope center along the line, for a potential whose finest feature is `feature`.
    pub fn new(spec: ProbeSpec, clearance: f64, feature: f64) -> Result<Self> {
        spec.validate()?;
        let t = half_window(clearance, spec.v, spec.widths[0], spec.mass)?;
        let steps = (t * spec.v / spec.spacing[0]).ceil().max(1.0) as usize;
        let t_half = steps as f64 * spec.spacing[0] / spec.v;
        let span = if spec.verify_window {
            2.0 * t_half
        } else {
            t_half
        };
        let grid = window_grid(spec.widths, spec.spacing, span, spec.mass, feature)?;
        let phi0 = gaussian_packet_aniso(&grid, &[0.0, 0.0], spec.widths, &[0.0, 0.0])?;
        let eta = StateClass::gaussian_eta(spec.widths[0].min(spec.widths[1]), 2, spec.mass);
        Ok(Self {
            spec,
            frame: spec.frame(),
            grid,
            psi0: phi0.clone(),
            phi0,
            eta,
            t_half,
            steps,
        })
    }

    pub fn for_potential(spec: ProbeSpec, potential: &FieldSpec) -> Result<Self> {
        Self::new(
            spec,
            along_track_reach(potential, &spec.frame()),
            potential.feature_width(),
        )
    }

    /// Replaces Ψ₀ for off-diagonal pairings.
    pub fn with_psi(mut self, psi0: ComplexField) -> Result<Self> {
        if psi0.grid != self.grid {
            return Err(Error::InvalidParameter(
                "Ψ₀ must live on the probe window".into(),
            ));
        }
        self.psi0 = psi0;
        Ok(self)
    }

    /// Whether v ≥ 4η, the regime of the uniform integrable bound.
    pub fn regime_ok(&self) -> bool {
        self.spec.v >= 4.0 * self.eta
    }

    pub fn dt(&self) -> f64 {
        self.spec.spacing[0] / self.spec.v
    }

    /// Lab position of window node k.
    pub fn lab(&self, k: usize) -> [f64; 2] {
        self.frame.to_lab(self.grid.node(k))
    }

    /// Potential on the window rows extended by `n` rows on each side:
    /// row r sits at s = s₀ + (r - n)Δs.
    pub fn potential_strip(&self, potential: &FieldSpec, n: usize) -> Vec<f64> {
        let (ns, nu) = (self.grid.points(0), self.grid.points(1));
        let ds = self.spec.spacing[0];
        let s0 = self.grid.coord(0, 0);
        let mut out = Vec::with_capacity((ns + 2 * n) * nu);
        for r in 0..ns + 2 * n {
            let s = s0 + (r as f64 - n as f64) * ds;
            for j in 0..nu {
                out.push(potential.eval(self.frame.to_lab([s, self.grid.coord(1, j)])));
            }
        }
        out
    }

    /// S̃Φ₀ over [-nΔt, nΔt] with the sliding potential read from `strip` (built for `strip_n ≥ n`).
    fn scatter_with(&self, strip: &[f64], strip_n: usize, n: usize) -> Result<ComplexField> {
        let len = self.grid.len();
        let nu = self.grid.points(1);
        let dt = self.dt();
        let t = n as f64 * dt;
        let half: Vec<Complex64> = strip
            .iter()
            .map(|&x| Complex64::from_polar(1.0, -0.5 * x * dt))
            .collect();
        let vmax = strip.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if dt * vmax > 0.5 {
            return Err(Error::Cfl(dt * vmax));
        }
        let rows = |j: usize| {
            let start = (strip_n - n + j) * nu;
            &half[start..start + len]
        };
        let mut psi = free_step(&self.phi0, -t, self.spec.mass);
        wrap_check(&psi)?;
        let mut kin = SplitStepper::free(&self.grid, self.spec.mass, dt);
        let buf = &mut psi.values;
        let mul = |buf: &mut [Complex64], ph: &[Complex64]| {
            buf.iter_mut().zip(ph).for_each(|(z, p)| *z *= p)
        };
        mul(buf, rows(0));
        for j in 0..2 * n {
            kin.apply(buf);
            mul(buf, rows(j + 1));
            if j + 1 < 2 * n {
                mul(buf, rows(j + 1));
            }
        }
        wrap_check(&psi)?;
        Ok(free_step(&psi, -t, self.spec.mass))
    }

    /// S̃Φ₀ for the probe window, with the doubling change when verification is on.
    pub fn scatter(&self, potential: &FieldSpec) -> Result<ScatteredState> {
        let n = self.steps;
        let strip_n = if self.spec.verify_window { 2 * n } else { n };
        let strip = self.potential_strip(potential, strip_n);
        self.scatter_checked(&strip, strip_n)
    }

    fn scatter_checked(&self, strip: &[f64], strip_n: usize) -> Result<ScatteredState> {
        let n = self.steps;
        let state = self.scatter_with(strip, strip_n, n)?;
        let mut change = None;
        if self.spec.verify_window {
            let doubled = self.scatter_with(strip, strip_n, 2 * n)?;
            let c = state.distance(&doubled);
            if c > WINDOW_TOLERANCE {
                return Err(Error::WindowTooSmall { change: c });
            }
            change = Some(c);
        }
        Ok(ScatteredState { state, change })
    }

    /// Born state L_vΦ₀ = ∫e^{iH₀τ/v}V(x+v̂τ)e^{-iH₀τ/v}Φ₀dτ; (S̃-I)Φ₀ ≈ -iL_vΦ₀/v.
    pub fn born_state(&self, potential: &FieldSpec) -> ComplexField {
        let n = self.steps;
        let strip = self.potential_strip(potential, n);
        let len = self.grid.len();
        let nu = self.grid.points(1);
        let ds = self.spec.spacing[0];
        let symbol = self.kinetic_symbol();
        let mut spectral = Spectral::new(&self.grid);
        let mut hat = self.phi0.values.clone();
        spectral.forward(&mut hat);
        let scale = 1.0 / len as f64;
        let mut acc = vec![Complex64::default(); len];
        for j in 0..=2 * n {
            let t = (j as f64 - n as f64) * ds / self.spec.v;
            let mut b: Vec<Complex64> = hat
                .iter()
                .zip(&symbol)
                .map(|(z, s)| z * Complex64::from_polar(scale, -s * t))
                .collect();
            spectral.backward(&mut b);
            b.iter_mut()
                .zip(&strip[j * nu..j * nu + len])
                .for_each(|(z, x)| *z *= x);
            spectral.forward(&mut b);
            let w = if j == 0 || j == 2 * n { 0.5 } else { 1.0 };
            for ((a, z), s) in acc.iter_mut().zip(&b).zip(&symbol) {
                *a += z * Complex64::from_polar(scale * w * ds, s * t);
            }
        }
        spectral.backward(&mut acc);
        ComplexField {
            grid: self.grid,
            values: acc,
        }
    }

    fn kinetic_symbol(&self) -> Vec<f64> {
        let m = self.spec.mass;
        (0..self.grid.len())
            .map(|k| {
                let p = self.grid.momentum_node(k);
                (p[0] * p[0] + p[1] * p[1]) / (2.0 * m)
            })
            .collect()
    }

    /// ⟨WΦ₀, Ψ₀⟩ with W the closed-form line integral along v̂.
    pub fn xray_target(&self, potential: &FieldSpec) -> Complex64 {
        let d = self.spec.vhat();
        let s: Complex64 = (0..self.grid.len())
            .map(|k| {
                potential.line_integral(self.lab(k), d)
                    * self.phi0.values[k]
                    * self.psi0.values[k].conj()
            })
            .sum();
        s * self.grid.cell_volume()
    }

    /// Born term ∫⟨V(x+v̂τ)e^{-iH₀τ/v}Φ₀, e^{-iH₀τ/v}Ψ₀⟩dτ by the trapezoid rule at Δτ = Δs.
    pub fn born(&self, potential: &FieldSpec) -> Result<BornTerm> {
        let n = self.steps;
        let strip = self.potential_strip(potential, n);
        self.born_with(&strip, n)
    }

    fn born_with(&self, strip: &[f64], n: usize) -> Result<BornTerm> {
        let len = self.grid.len();
        let nu = self.grid.points(1);
        let ds = self.spec.spacing[0];
        let mut spectral = Spectral::new(&self.grid);
        let symbol = self.kinetic_symbol();
        let transform = |spectral: &mut Spectral, f: &ComplexField| {
            let mut b = f.values.clone();
            spectral.forward(&mut b);
            b
        };
        let phi_hat = transform(&mut spectral, &self.phi0);
        let diagonal = self.psi0 == self.phi0;
        let psi_hat = if diagonal {
            Vec::new()
        } else {
            transform(&mut spectral, &self.psi0)
        };
        let scale = 1.0 / len as f64;
        let evolve = |spectral: &mut Spectral, hat: &[Complex64], t: f64| {
            let mut b: Vec<Complex64> = hat
                .iter()
                .zip(&symbol)
                .map(|(z, s)| z * Complex64::from_polar(scale, -s * t))
                .collect();
            spectral.backward(&mut b);
            b
        };
        let dv = self.grid.cell_volume();
        let mut value = Complex64::default();
        let mut profile = Vec::with_capacity(2 * n + 1);
        for j in 0..=2 * n {
            let tau = (j as f64 - n as f64) * ds;
            let t = tau / self.spec.v;
            let a = evolve(&mut spectral, &phi_hat, t);
            let vrow = &strip[j * nu..j * nu + len];
            let va: Vec<Complex64> = a.iter().zip(vrow).map(|(z, x)| z * x).collect();
            let integrand = if diagonal {
                inner(&va, &a)
            } else {
                inner(&va, &evolve(&mut spectral, &psi_hat, t))
            } * dv;
            let norm = (va.iter().map(|z| z.norm_sqr()).sum::<f64>() * dv).sqrt();
            let w = if j == 0 || j == 2 * n { 0.5 } else { 1.0 };
            value += integrand * (w * ds);
            profile.push((tau, norm));
        }
        let reference = self.phi0.norm().max(f64::MIN_POSITIVE);
        let ends = profile[0].1.max(profile[2 * n].1) / reference;
        if ends > BORN_CUTOFF {
            return Err(Error::Truncation(format!(
                "Born integrand {ends:.2e} at |τ| = {:.3}",
                n as f64 * ds
            )));
        }
        Ok(BornTerm { value, profile })
    }

    /// iv⟨(S-I)Φ_v, Ψ_v⟩ with its X-ray target and Born decomposition.
    pub fn pairing(&self, potential: &FieldSpec) -> Result<PairingResult> {
        let n = self.steps;
        let strip_n = if self.spec.verify_window { 2 * n } else { n };
        let strip = self.potential_strip(potential, strip_n);
        let scattered = self.scatter_checked(&strip, strip_n)?;
        let pairing = self.pair(&scattered.state);
        let born = self
            .born_with(&strip[(strip_n - n) * self.grid.points(1)..], n)?
            .value;
        Ok(PairingResult {
            pairing,
            target: self.xray_target(potential),
            born,
            remainder: pairing - born,
            v: self.spec.v,
            regime_ok: self.regime_ok(),
            t_half: self.t_half,
            window_change: scattered.change,
        })
    }

    /// iv⟨(S-I)Φ_v, Ψ_v⟩ alone.
    pub fn pairing_only(&self, potential: &FieldSpec) -> Result<Complex64> {
        Ok(self.pair(&self.scatter(potential)?.state))
    }

    fn pair(&self, scattered: &ComplexField) -> Complex64 {
        let diff: Vec<Complex64> = scattered
            .values
            .iter()
            .zip(&self.phi0.values)
            .map(|(a, b)| a - b)
            .collect();
        I * self.spec.v * inner(&diff, &self.psi0.values) * self.grid.cell_volume()
    }
}

#[derive(Debug, Clone)]
pub struct BornTerm {
    pub value: Complex64,
    /// (τ, ‖V(x+v̂τ)e^{-iH₀τ/v}Φ₀‖) along the quadrature.
    pub profile: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub pairing: Complex64,
    pub target: Complex64,
    pub born: Complex64,
    /// pairing - born.
    pub remainder: Complex64,
    pub v: f64,
    /// v ≥ 4η for the envelope class.
    pub regime_ok: bool,
    pub t_half: f64,
    pub window_change: Option<f64>,
}

impl PairingResult {
    pub fn error(&self) -> f64 {
        (self.pairing - self.target).norm()
    }
}

pub fn pairing_s_minus_i(probe: &ScatteringProbe, potential: &FieldSpec) -> Result<PairingResult> {
    probe.pairing(potential)
}

pub fn born_term_pairing(probe: &ScatteringProbe, potential: &FieldSpec) -> Result<Complex64> {
    Ok(probe.born(potential)?.value)
}

/// |pairing - Born term|: the multiple-scattering part.
pub fn remainder_estimate(probe: &ScatteringProbe, potential: &FieldSpec) -> Result<f64> {
    Ok(probe.pairing(potential)?.remainder.norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForbiddenMass {
    /// Mass of e^{-iH₀τ/v}ψ in |x| ≥ |τ|/4 + η|τ|/v.
    pub forbidden: f64,
    /// Mass of ψ outside the initial ball |x| ≤ |τ|/8.
    pub initial_outside: f64,
}

/// Free propagation into the classically forbidden region, about the origin.
pub fn forbidden_mass(
    psi: &ComplexField,
    tau: f64,
    v: f64,
    eta: f64,
    mass: f64,
) -> Result<ForbiddenMass> {
    if !(v > 0.0) || !(eta > 0.0) {
        return Err(Error::InvalidParameter("v and η must be positive".into()));
    }
    let g = psi.grid;
    let radius = |k: usize| {
        let x = g.node(k);
        if g.dim() == 1 {
            x[0].abs()
        } else {
            x[0].hypot(x[1])
        }
    };
    let evolved = free_step(psi, tau / v, mass);
    let edge = 0.25 * tau.abs() + eta * tau.abs() / v;
    let dv = g.cell_volume();
    let forbidden = (0..g.len())
        .filter(|&k| radius(k) >= edge)
        .map(|k| evolved.values[k].norm_sqr())
        .sum::<f64>()
        * dv;
    let inside = tau.abs() / 8.0;
    let initial_outside = (0..g.len())
        .filter(|&k| radius(k) > inside)
        .map(|k| psi.values[k].norm_sqr())
        .sum::<f64>()
        * dv;
    Ok(ForbiddenMass {
        forbidden,
        initial_outside,
    })
}
