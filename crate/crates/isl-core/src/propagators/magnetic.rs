use num_complex::Complex64;

use super::EvolutionConfig;
use crate::error::{Error, Result};
use crate::field::{ComplexField, UniformGrid, I};
use crate::linalg::bicgstab;

/// Relative residual demanded from every Crank–Nicolson solve.
pub const CN_TOLERANCE: f64 = 1e-12;
const CN_MAX_ITER: usize = 500;
const MASK_TOLERANCE: f64 = 1e-10;

/// Peierls lattice on a 2D grid with Dirichlet conditions outside the grid and on the mask.
///
/// `link0[k]` is the hopping phase exp(-i∫A·dl) from node k to its neighbour along axis 0,
/// `link1[k]` likewise along axis 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MagneticSystem {
    pub grid: UniformGrid,
    pub link0: Vec<Complex64>,
    pub link1: Vec<Complex64>,
    pub mask: Vec<bool>,
    pub mass: f64,
}

impl MagneticSystem {
    pub fn free(grid: UniformGrid, mass: f64) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::InvalidParameter(
                "magnetic systems are planar".into(),
            ));
        }
        let one = Complex64::new(1.0, 0.0);
        Ok(Self {
            grid,
            link0: vec![one; grid.len()],
            link1: vec![one; grid.len()],
            mask: vec![false; grid.len()],
            mass,
        })
    }

    /// Builds links from a line-integral routine `flux(a, b) = ∫_a^b A·dl` in grid coordinates.
    pub fn from_links(
        grid: UniformGrid,
        mass: f64,
        flux: impl Fn([f64; 2], [f64; 2]) -> f64,
    ) -> Result<Self> {
        let mut sys = Self::free(grid, mass)?;
        let (n0, n1) = (grid.points(0), grid.points(1));
        for k in 0..grid.len() {
            let (i, j) = grid.split(k);
            let x = grid.node(k);
            if i + 1 < n0 {
                sys.link0[k] = Complex64::from_polar(1.0, -flux(x, [x[0] + grid.dx(0), x[1]]));
            }
            if j + 1 < n1 {
                sys.link1[k] = Complex64::from_polar(1.0, -flux(x, [x[0], x[1] + grid.dx(1)]));
            }
        }
        Ok(sys)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.grid.len() {
            return Err(Error::InvalidParameter(
                "mask size differs from grid".into(),
            ));
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn view(&self) -> LatticeView<'_> {
        LatticeView::new(&self.grid, self.mass, &self.link0, &self.link1, &self.mask)
    }

    pub fn links_unimodular(&self, tol: f64) -> bool {
        self.link0
            .iter()
            .chain(&self.link1)
            .all(|z| (z.norm() - 1.0).abs() <= tol)
    }

    pub fn mask_mass(&self, psi: &[Complex64]) -> f64 {
        psi.iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(z, _)| z.norm_sqr())
            .sum()
    }
}

/// Borrowed Peierls lattice: a block of rows of a larger link array.
#[derive(Clone, Copy)]
pub struct LatticeView<'a> {
    pub n0: usize,
    pub n1: usize,
    c0: f64,
    c1: f64,
    pub link0: &'a [Complex64],
    pub link1: &'a [Complex64],
    pub mask: &'a [bool],
    /// Optional scalar potential added on the diagonal.
    pub potential: Option<&'a [f64]>,
}

impl<'a> LatticeView<'a> {
    pub fn new(
        grid: &UniformGrid,
        mass: f64,
        link0: &'a [Complex64],
        link1: &'a [Complex64],
        mask: &'a [bool],
    ) -> Self {
        Self {
            n0: grid.points(0),
            n1: grid.points(1),
            c0: 1.0 / (2.0 * mass * grid.dx(0).powi(2)),
            c1: 1.0 / (2.0 * mass * grid.dx(1).powi(2)),
            link0,
            link1,
            mask,
            potential: None,
        }
    }

    pub fn with_potential(mut self, potential: &'a [f64]) -> Self {
        self.potential = Some(potential);
        self
    }

    /// out = H ψ with H the Peierls finite-difference operator (p - A)²/2m plus the potential.
    pub fn apply_h(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let (n0, n1) = (self.n0, self.n1);
        let diag = 2.0 * (self.c0 + self.c1);
        for i in 0..n0 {
            let row = i * n1;
            for j in 0..n1 {
                let k = row + j;
                if self.mask[k] {
                    out[k] = Complex64::default();
                    continue;
                }
                let mut acc = psi[k] * (diag + self.potential.map_or(0.0, |v| v[k]));
                if i + 1 < n0 {
                    acc -= self.c0 * self.link0[k] * psi[k + n1];
                }
                if i > 0 {
                    acc -= self.c0 * self.link0[k - n1].conj() * psi[k - n1];
                }
                if j + 1 < n1 {
                    acc -= self.c1 * self.link1[k] * psi[k + 1];
                }
                if j > 0 {
                    acc -= self.c1 * self.link1[k - 1].conj() * psi[k - 1];
                }
                out[k] = acc;
            }
        }
    }

    /// One Crank–Nicolson step (I + i dt H/2) ψ' = (I - i dt H/2) ψ, in place.
    pub fn cn_step(
        &self,
        psi: &mut [Complex64],
        dt: f64,
        work: &mut Vec<Complex64>,
    ) -> Result<usize> {
        let n = psi.len();
        work.resize(2 * n, Complex64::default());
        let (hpsi, rhs) = work.split_at_mut(n);
        for (z, &m) in psi.iter_mut().zip(self.mask) {
            if m {
                *z = Complex64::default();
            }
        }
        self.apply_h(psi, hpsi);
        let a = I * (0.5 * dt);
        for k in 0..n {
            rhs[k] = psi[k] - a * hpsi[k];
            psi[k] = rhs[k] - a * hpsi[k];
        }
        let apply = |x: &[Complex64], y: &mut [Complex64]| {
            self.apply_h(x, y);
            for k in 0..x.len() {
                y[k] = x[k] + a * y[k];
            }
        };
        bicgstab(apply, rhs, psi, CN_TOLERANCE, CN_MAX_ITER)
    }
}

/// Crank–Nicolson evolution under the Peierls Hamiltonian with the obstacle deleted.
pub fn magnetic_cn_evolve(
    psi: &ComplexField,
    sys: &MagneticSystem,
    cfg: &EvolutionConfig,
) -> Result<ComplexField> {
    if psi.grid != sys.grid {
        return Err(Error::InvalidParameter(
            "field and magnetic system grids differ".into(),
        ));
    }
    let total: f64 = psi.values.iter().map(|z| z.norm_sqr()).sum();
    let on_mask = sys.mask_mass(&psi.values);
    if total > 0.0 && on_mask / total > MASK_TOLERANCE {
        return Err(Error::ObstacleContact {
            mass: on_mask / total,
            limit: MASK_TOLERANCE,
        });
    }
    let (n, dt) = cfg.steps()?;
    let view = sys.view();
    let mut out = psi.clone();
    let mut work = Vec::new();
    for _ in 0..n {
        view.cn_step(&mut out.values, dt, &mut work)?;
    }
    Ok(out)
}
