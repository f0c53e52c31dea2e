//! Closed-form field catalog: gaussian, ring, disk and bump profiles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::field::UniformGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldShape {
    /// A·exp(-|x-c|²/w²)
    Gaussian {
        amplitude: f64,
        center: [f64; 2],
        width: f64,
    },
    /// A·exp(-(|x-c|-r)²/w²)
    Ring {
        amplitude: f64,
        center: [f64; 2],
        radius: f64,
        width: f64,
    },
    /// A on |x-c| < r
    Disk {
        amplitude: f64,
        center: [f64; 2],
        radius: f64,
    },
    /// A·exp(1 - 1/(1-|x-c|²/r²)) on |x-c| < r
    Bump {
        amplitude: f64,
        center: [f64; 2],
        radius: f64,
    },
}

/// Relative level below which a profile counts as vanished.
const NEGLIGIBLE: f64 = 1e-12;

impl FieldShape {
    pub fn gaussian(amplitude: f64, center: [f64; 2], width: f64) -> Self {
        FieldShape::Gaussian {
            amplitude,
            center,
            width,
        }
    }

    pub fn center(&self) -> [f64; 2] {
        match *self {
            FieldShape::Gaussian { center, .. }
            | FieldShape::Ring { center, .. }
            | FieldShape::Disk { center, .. }
            | FieldShape::Bump { center, .. } => center,
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            FieldShape::Gaussian { amplitude, .. }
            | FieldShape::Ring { amplitude, .. }
            | FieldShape::Disk { amplitude, .. }
            | FieldShape::Bump { amplitude, .. } => amplitude,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive and finite"))
            }
        };
        if !self.amplitude().is_finite() {
            return Err("amplitude must be finite".into());
        }
        match *self {
            FieldShape::Gaussian { width, .. } => ok(width, "width"),
            FieldShape::Ring { radius, width, .. } => ok(radius, "radius").and(ok(width, "width")),
            FieldShape::Disk { radius, .. } | FieldShape::Bump { radius, .. } => {
                ok(radius, "radius")
            }
        }
    }

    /// Value as a function of the distance ρ from the center.
    pub fn radial(&self, rho: f64) -> f64 {
        match *self {
            FieldShape::Gaussian {
                amplitude, width, ..
            } => amplitude * (-(rho / width).powi(2)).exp(),
            FieldShape::Ring {
                amplitude,
                radius,
                width,
                ..
            } => amplitude * (-((rho - radius) / width).powi(2)).exp(),
            FieldShape::Disk {
                amplitude, radius, ..
            } => {
                if rho < radius {
                    amplitude
                } else {
                    0.0
                }
            }
            FieldShape::Bump {
                amplitude, radius, ..
            } => {
                let q = rho / radius;
                if q < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - q * q)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let c = self.center();
        self.radial((x[0] - c[0]).hypot(x[1] - c[1]))
    }

    /// Value on the line, using only the first center coordinate.
    pub fn eval_1d(&self, x: f64) -> f64 {
        self.radial((x - self.center()[0]).abs())
    }

    /// Radius beyond which the profile is negligible.
    pub fn support_radius(&self) -> f64 {
        let cut = (1.0 / NEGLIGIBLE).ln().sqrt();
        match *self {
            FieldShape::Gaussian { width, .. } => width * cut,
            FieldShape::Ring { radius, width, .. } => radius + width * cut,
            FieldShape::Disk { radius, .. } | FieldShape::Bump { radius, .. } => radius,
        }
    }

    /// Length scale of the finest structure; zero for a sharp edge.
    pub fn feature_width(&self) -> f64 {
        match *self {
            FieldShape::Gaussian { width, .. } | FieldShape::Ring { width, .. } => width,
            FieldShape::Bump { radius, .. } => radius / 3.0,
            FieldShape::Disk { .. } => 0.0,
        }
    }

    /// ∫ f(p + τ d) dτ for a unit direction d.
    pub fn line_integral(&self, p: [f64; 2], d: [f64; 2]) -> f64 {
        let c = self.center();
        let (rx, ry) = (p[0] - c[0], p[1] - c[1]);
        let u = (rx * d[1] - ry * d[0]).abs();
        match *self {
            FieldShape::Gaussian {
                amplitude, width, ..
            } => amplitude * width * PI.sqrt() * (-(u / width).powi(2)).exp(),
            FieldShape::Disk {
                amplitude, radius, ..
            } => {
                if u < radius {
                    2.0 * amplitude * (radius * radius - u * u).sqrt()
                } else {
                    0.0
                }
            }
            FieldShape::Bump { radius, .. } => {
                if u >= radius {
                    return 0.0;
                }
                let h = (radius * radius - u * u).sqrt();
                let n = 2000;
                let step = 2.0 * h / n as f64;
                (1..n)
                    .map(|k| self.radial(u.hypot(-h + k as f64 * step)))
                    .sum::<f64>()
                    * step
            }
            FieldShape::Ring { radius, width, .. } => {
                let reach = radius + 8.0 * width;
                if u >= reach {
                    return 0.0;
                }
                let h = (reach * reach - u * u).sqrt();
                let step = width / 40.0;
                let n = (2.0 * h / step).ceil() as usize;
                let step = 2.0 * h / n as f64;
                (0..=n)
                    .map(|k| {
                        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                        w * self.radial(u.hypot(-h + k as f64 * step))
                    })
                    .sum::<f64>()
                    * step
            }
        }
    }

    /// Integral over the disk of radius ρ about the center (planar profile).
    pub fn enclosed(&self, rho: f64) -> f64 {
        match *self {
            FieldShape::Gaussian {
                amplitude, width, ..
            } => amplitude * PI * width * width * (1.0 - (-(rho / width).powi(2)).exp()),
            FieldShape::Disk {
                amplitude, radius, ..
            } => amplitude * PI * rho.min(radius).powi(2),
            FieldShape::Ring {
                amplitude,
                radius,
                width,
                ..
            } => {
                let edge = |t: f64| {
                    -0.5 * width * width * (-(t / width).powi(2)).exp()
                        + radius * 0.5 * width * PI.sqrt() * erf(t / width)
                };
                2.0 * PI * amplitude * (edge(rho - radius) - edge(-radius))
            }
            _ => {
                let top = rho.min(self.support_radius());
                if top <= 0.0 {
                    return 0.0;
                }
                let n = 4000;
                let h = top / n as f64;
                let f = |r: f64| 2.0 * PI * r * self.radial(r);
                let mut s = f(0.0) + f(top);
                for k in 1..n {
                    s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
                }
                s * h / 3.0
            }
        }
    }

    /// Total planar integral.
    pub fn total(&self) -> f64 {
        match *self {
            FieldShape::Ring {
                amplitude,
                radius,
                width,
                ..
            } => {
                2.0 * PI
                    * amplitude
                    * (0.5 * width * width * (-(radius / width).powi(2)).exp()
                        + radius * 0.5 * width * PI.sqrt() * (1.0 + erf(radius / width)))
            }
            FieldShape::Gaussian { .. } | FieldShape::Disk { .. } => self.enclosed(f64::INFINITY),
            FieldShape::Bump { .. } => self.enclosed(self.support_radius()),
        }
    }
}

/// Sum of catalog shapes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldSpec(pub Vec<FieldShape>);

impl FieldSpec {
    pub fn zero() -> Self {
        FieldSpec(Vec::new())
    }

    pub fn single(shape: FieldShape) -> Self {
        FieldSpec(vec![shape])
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|s| s.amplitude() == 0.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.0.iter().try_for_each(|s| s.validate())
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.0.iter().map(|s| s.eval(x)).sum()
    }

    pub fn eval_1d(&self, x: f64) -> f64 {
        self.0.iter().map(|s| s.eval_1d(x)).sum()
    }

    pub fn line_integral(&self, p: [f64; 2], d: [f64; 2]) -> f64 {
        self.0.iter().map(|s| s.line_integral(p, d)).sum()
    }

    /// Radius about the origin outside which every term is negligible.
    pub fn reach(&self) -> f64 {
        self.0
            .iter()
            .map(|s| {
                let c = s.center();
                c[0].hypot(c[1]) + s.support_radius()
            })
            .fold(0.0, f64::max)
    }

    /// Finest feature width over all terms (zero field: infinite).
    pub fn feature_width(&self) -> f64 {
        self.0
            .iter()
            .filter(|s| s.amplitude() != 0.0)
            .map(|s| s.feature_width())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|s| s.amplitude().abs()).sum()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().map(|s| s.total()).sum()
    }

    /// Samples on a grid whose nodes are placed in the plane by `frame`.
    pub fn sample(&self, grid: &UniformGrid, frame: &Frame) -> Vec<f64> {
        (0..grid.len())
            .map(|k| {
                let n = grid.node(k);
                if grid.dim() == 1 {
                    self.eval_1d(frame.origin[0] + n[0])
                } else {
                    self.eval(frame.to_lab(n))
                }
            })
            .collect()
    }
}

/// Placement of a grid in the plane: node (s, u) sits at origin + s·axis + u·axis⊥.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: [f64; 2],
    pub axis: [f64; 2],
}

impl Default for Frame {
    fn default() -> Self {
        Self {
            origin: [0.0, 0.0],
            axis: [1.0, 0.0],
        }
    }
}

pub fn perp(a: [f64; 2]) -> [f64; 2] {
    [-a[1], a[0]]
}

pub fn direction(angle: f64) -> [f64; 2] {
    [angle.cos(), angle.sin()]
}

impl Frame {
    pub fn new(origin: [f64; 2], axis: [f64; 2]) -> Self {
        let n = axis[0].hypot(axis[1]);
        Self {
            origin,
            axis: [axis[0] / n, axis[1] / n],
        }
    }

    pub fn to_lab(&self, su: [f64; 2]) -> [f64; 2] {
        let n = perp(self.axis);
        [
            self.origin[0] + su[0] * self.axis[0] + su[1] * n[0],
            self.origin[1] + su[0] * self.axis[1] + su[1] * n[1],
        ]
    }

    pub fn to_local(&self, x: [f64; 2]) -> [f64; 2] {
        let n = perp(self.axis);
        let (dx, dy) = (x[0] - self.origin[0], x[1] - self.origin[1]);
        [dx * self.axis[0] + dy * self.axis[1], dx * n[0] + dy * n[1]]
    }
}
