use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{Laplacian, MagneticSystem};
use crate::error::{Error, Result};
use crate::field::{ComplexField, UniformGrid};

pub const DENSE_LIMIT_1D: usize = 256;
pub const DENSE_LIMIT_2D: usize = 32 * 32;

pub enum DenseSystem<'a> {
    Scalar {
        potential: Option<&'a [f64]>,
        laplacian: Laplacian,
        mass: f64,
    },
    Magnetic(&'a MagneticSystem),
}

fn check_size(grid: &UniformGrid) -> Result<()> {
    let limit = if grid.dim() == 1 {
        DENSE_LIMIT_1D
    } else {
        DENSE_LIMIT_2D
    };
    if grid.len() > limit {
        return Err(Error::GridTooLarge {
            nodes: grid.len(),
            limit,
        });
    }
    Ok(())
}

/// Periodic spectral second-derivative operator -∂²/2m along one axis.
fn spectral_kinetic_1d(grid: &UniformGrid, axis: usize, mass: f64) -> DMatrix<f64> {
    let n = grid.points(axis);
    let dx = grid.dx(axis);
    let p: Vec<f64> = grid.momenta(axis);
    // Row-independent kernel depending on the index difference only.
    let kernel: Vec<f64> = (0..n)
        .map(|d| {
            p.iter()
                .map(|&pk| pk * pk / (2.0 * mass) * (pk * d as f64 * dx).cos())
                .sum::<f64>()
                / n as f64
        })
        .collect();
    DMatrix::from_fn(n, n, |j, l| {
        kernel[(j as isize - l as isize).rem_euclid(n as isize) as usize]
    })
}

/// Dense Hamiltonian restricted to the active (unmasked) nodes.
pub fn dense_hamiltonian(
    grid: &UniformGrid,
    system: &DenseSystem<'_>,
) -> Result<(DMatrix<Complex64>, Vec<usize>)> {
    check_size(grid)?;
    let n0 = grid.points(0);
    let n1 = grid.points(1);
    let dim = grid.dim();
    match system {
        DenseSystem::Scalar {
            potential,
            laplacian,
            mass,
        } => {
            let len = grid.len();
            let mut h = DMatrix::<f64>::zeros(len, len);
            match laplacian {
                Laplacian::FiniteDifference => {
                    for idx in 0..len {
                        let (i, j) = grid.split(idx);
                        for axis in 0..dim {
                            let c = 1.0 / (2.0 * mass * grid.dx(axis).powi(2));
                            h[(idx, idx)] += 2.0 * c;
                            let (pos, n) = if axis == 0 { (i, n0) } else { (j, n1) };
                            let stride = if axis == 0 { n1 } else { 1 };
                            if pos + 1 < n {
                                h[(idx, idx + stride)] -= c;
                                h[(idx + stride, idx)] -= c;
                            }
                        }
                    }
                }
                Laplacian::Spectral => {
                    let k0 = spectral_kinetic_1d(grid, 0, *mass);
                    if dim == 1 {
                        h += k0;
                    } else {
                        let k1 = spectral_kinetic_1d(grid, 1, *mass);
                        for i in 0..n0 {
                            for j in 0..n1 {
                                let a = i * n1 + j;
                                for l in 0..n1 {
                                    h[(a, i * n1 + l)] += k1[(j, l)];
                                }
                                for l in 0..n0 {
                                    h[(a, l * n1 + j)] += k0[(i, l)];
                                }
                            }
                        }
                    }
                }
            }
            if let Some(v) = potential {
                for (k, &x) in v.iter().enumerate() {
                    h[(k, k)] += x;
                }
            }
            Ok((h.map(|x| Complex64::new(x, 0.0)), (0..len).collect()))
        }
        DenseSystem::Magnetic(sys) => {
            if sys.grid != *grid {
                return Err(Error::InvalidParameter(
                    "magnetic system grid differs from field grid".into(),
                ));
            }
            let active: Vec<usize> = (0..grid.len()).filter(|&k| !sys.mask[k]).collect();
            let mut pos = vec![usize::MAX; grid.len()];
            for (a, &k) in active.iter().enumerate() {
                pos[k] = a;
            }
            let m = active.len();
            let mut h = DMatrix::<Complex64>::zeros(m, m);
            let c = [
                1.0 / (2.0 * sys.mass * grid.dx(0).powi(2)),
                1.0 / (2.0 * sys.mass * grid.dx(1).powi(2)),
            ];
            for (a, &k) in active.iter().enumerate() {
                let (i, j) = grid.split(k);
                h[(a, a)] += Complex64::new(2.0 * (c[0] + c[1]), 0.0);
                if i + 1 < n0 && pos[k + n1] != usize::MAX {
                    let b = pos[k + n1];
                    h[(a, b)] -= c[0] * sys.link0[k];
                    h[(b, a)] -= c[0] * sys.link0[k].conj();
                }
                if j + 1 < n1 && pos[k + 1] != usize::MAX {
                    let b = pos[k + 1];
                    h[(a, b)] -= c[1] * sys.link1[k];
                    h[(b, a)] -= c[1] * sys.link1[k].conj();
                }
            }
            Ok((h, active))
        }
    }
}

/// Eigendecomposition of a dense Hamiltonian, reusable for many evolution times.
pub struct DenseEvolution {
    grid: UniformGrid,
    active: Vec<usize>,
    eigenvalues: Vec<f64>,
    vectors: DMatrix<Complex64>,
}

impl DenseEvolution {
    pub fn new(grid: &UniformGrid, system: &DenseSystem<'_>) -> Result<Self> {
        let (h, active) = dense_hamiltonian(grid, system)?;
        let (eigenvalues, vectors) = if h.iter().all(|z| z.im == 0.0) {
            let e = h.map(|z| z.re).symmetric_eigen();
            (
                e.eigenvalues.iter().copied().collect(),
                e.eigenvectors.map(|x| Complex64::new(x, 0.0)),
            )
        } else {
            let e = h.symmetric_eigen();
            (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
        };
        Ok(Self {
            grid: *grid,
            active,
            eigenvalues,
            vectors,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn evolve(&self, psi: &ComplexField, t: f64) -> ComplexField {
        let x = DVector::from_iterator(
            self.active.len(),
            self.active.iter().map(|&k| psi.values[k]),
        );
        let mut c = self.vectors.ad_mul(&x);
        for (ck, &l) in c.iter_mut().zip(&self.eigenvalues) {
            *ck *= Complex64::from_polar(1.0, -l * t);
        }
        let y = &self.vectors * c;
        let mut out = ComplexField::zeros(self.grid);
        for (a, &k) in self.active.iter().enumerate() {
            out.values[k] = y[a];
        }
        out
    }

    /// Full matrix of e^{-iHt} on the active nodes.
    pub fn propagator(&self, t: f64) -> DMatrix<Complex64> {
        let mut scaled = self.vectors.clone();
        for (col, &l) in self.eigenvalues.iter().enumerate() {
            let ph = Complex64::from_polar(1.0, -l * t);
            scaled.column_mut(col).iter_mut().for_each(|z| *z *= ph);
        }
        scaled * self.vectors.adjoint()
    }
}

/// Reference evolution by exponentiating the full discrete Hamiltonian.
pub fn dense_oracle_evolve(
    psi: &ComplexField,
    system: &DenseSystem<'_>,
    t: f64,
) -> Result<ComplexField> {
    Ok(DenseEvolution::new(&psi.grid, system)?.evolve(psi, t))
}
