//! Kernels and Gram matrices.
//!
//! A [`Kernel`] is a closed description of a positive-semidefinite
//! similarity function together with its bound `B = sup_x K(x, x)`.
//! Kernels are plain data: they serialize into family and solution files and
//! are immutable once built, so they can be shared freely across workers.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue tolerance for PSD checks: `lambda_min >= -PSD_TOL * trace`.
pub const PSD_TOL: f64 = 1e-8;

/// An input point.
pub type Point = Vec<f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `scale * <x_S, x'_S>`; `radius_sq` bounds `|x_S|^2` on the input domain.
    Linear {
        scale: f64,
        radius_sq: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coords: Option<Vec<usize>>,
    },
    /// `exp(-|x_S - x'_S|^2 / (2 bandwidth^2))`.
    Rbf {
        bandwidth: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coords: Option<Vec<usize>>,
    },
    /// `(<x_S, x'_S> + offset)^degree` with `offset >= 0`.
    Polynomial {
        degree: u32,
        offset: f64,
        radius_sq: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coords: Option<Vec<usize>>,
    },
    /// `exp(-(x - x')^T P (x - x') / 2)` for a PSD matrix `P`.
    ///
    /// With `P = Sigma^-1` this is the Gaussian with covariance `Sigma`; a
    /// rank-deficient `P` gives the low-rank family.
    Gaussian { precision: Vec<Vec<f64>> },
    /// Non-negative combination `sum_i w_i K_i`.
    Combination {
        weights: Vec<f64>,
        kernels: Vec<Kernel>,
    },
}

fn select<'a>(x: &'a [f64], coords: &'a Option<Vec<usize>>) -> Box<dyn Iterator<Item = f64> + 'a> {
    match coords {
        Some(c) => Box::new(c.iter().map(move |&i| x[i])),
        None => Box::new(x.iter().copied()),
    }
}

fn dot_sel(x: &[f64], y: &[f64], coords: &Option<Vec<usize>>) -> f64 {
    match coords {
        Some(c) => c.iter().map(|&i| x[i] * y[i]).sum(),
        None => x.iter().zip(y).map(|(a, b)| a * b).sum(),
    }
}

fn sqdist_sel(x: &[f64], y: &[f64], coords: &Option<Vec<usize>>) -> f64 {
    select(x, coords)
        .zip(select(y, coords))
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

impl Kernel {
    pub fn linear(radius_sq: f64) -> Self {
        Kernel::Linear {
            scale: 1.0,
            radius_sq,
            coords: None,
        }
    }

    pub fn rbf(bandwidth: f64) -> Self {
        Kernel::Rbf {
            bandwidth,
            coords: None,
        }
    }

    /// Isotropic Gaussian restricted to a coordinate subset.
    pub fn rbf_on(bandwidth: f64, coords: Vec<usize>) -> Self {
        Kernel::Rbf {
            bandwidth,
            coords: Some(coords),
        }
    }

    pub fn linear_on(radius_sq: f64, coords: Vec<usize>) -> Self {
        Kernel::Linear {
            scale: 1.0,
            radius_sq,
            coords: Some(coords),
        }
    }

    /// Evaluates `K(x, y)`. Dimensions are assumed checked with
    /// [`Kernel::check_dim`].
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Kernel::Linear { scale, coords, .. } => scale * dot_sel(x, y, coords),
            Kernel::Rbf { bandwidth, coords } => {
                (-sqdist_sel(x, y, coords) / (2.0 * bandwidth * bandwidth)).exp()
            }
            Kernel::Polynomial {
                degree,
                offset,
                coords,
                ..
            } => (dot_sel(x, y, coords) + offset).powi(*degree as i32),
            Kernel::Gaussian { precision } => {
                let d = precision.len();
                let mut q = 0.0;
                for i in 0..d {
                    let di = x[i] - y[i];
                    let mut row = 0.0;
                    for j in 0..d {
                        row += precision[i][j] * (x[j] - y[j]);
                    }
                    q += di * row;
                }
                (-0.5 * q).exp()
            }
            Kernel::Combination { weights, kernels } => weights
                .iter()
                .zip(kernels)
                .filter(|(w, _)| **w != 0.0)
                .map(|(w, k)| w * k.eval(x, y))
                .sum(),
        }
    }

    /// The bound `B >= sup_x K(x, x)` on the declared input domain.
    pub fn bound(&self) -> f64 {
        match self {
            Kernel::Linear {
                scale, radius_sq, ..
            } => scale * radius_sq,
            Kernel::Rbf { .. } | Kernel::Gaussian { .. } => 1.0,
            Kernel::Polynomial {
                degree,
                offset,
                radius_sq,
                ..
            } => (radius_sq + offset).powi(*degree as i32),
            Kernel::Combination { weights, kernels } => weights
                .iter()
                .zip(kernels)
                .map(|(w, k)| w * k.bound())
                .sum(),
        }
    }

    /// Structural validation: positive hyperparameters, non-negative
    /// combination weights, symmetric PSD precision.
    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Linear {
                scale, radius_sq, ..
            } => {
                if !(*scale > 0.0) || !(*radius_sq > 0.0) {
                    return Err(Error::input("linear kernel needs scale > 0 and radius_sq > 0"));
                }
            }
            Kernel::Rbf { bandwidth, .. } => {
                if !(*bandwidth > 0.0) || !bandwidth.is_finite() {
                    return Err(Error::input("rbf bandwidth must be positive and finite"));
                }
            }
            Kernel::Polynomial {
                degree,
                offset,
                radius_sq,
                ..
            } => {
                if *degree == 0 || !(*offset >= 0.0) || !(*radius_sq > 0.0) {
                    return Err(Error::input(
                        "polynomial kernel needs degree >= 1, offset >= 0, radius_sq > 0",
                    ));
                }
            }
            Kernel::Gaussian { precision } => {
                let d = precision.len();
                if d == 0 || precision.iter().any(|r| r.len() != d) {
                    return Err(Error::input("gaussian precision must be a non-empty square matrix"));
                }
                let p = DMatrix::from_fn(d, d, |i, j| precision[i][j]);
                if (&p - p.transpose()).amax() > 1e-12 * (1.0 + p.amax()) {
                    return Err(Error::input("gaussian precision must be symmetric"));
                }
                let min_eig = p.symmetric_eigenvalues().min();
                if min_eig < -PSD_TOL * p.trace().abs().max(1.0) {
                    return Err(Error::input("gaussian precision must be positive semidefinite"));
                }
            }
            Kernel::Combination { weights, kernels } => {
                if weights.len() != kernels.len() || kernels.is_empty() {
                    return Err(Error::input("combination weights and kernels differ in length"));
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return Err(Error::input("combination weights must be non-negative"));
                }
                for k in kernels {
                    k.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Checks that points of dimension `dim` can be fed to this kernel.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        let coords_ok = |coords: &Option<Vec<usize>>| match coords {
            Some(c) if c.iter().any(|&i| i >= dim) => Err(Error::input(format!(
                "kernel coordinate subset exceeds point dimension {dim}"
            ))),
            _ => Ok(()),
        };
        match self {
            Kernel::Linear { coords, .. }
            | Kernel::Rbf { coords, .. }
            | Kernel::Polynomial { coords, .. } => coords_ok(coords),
            Kernel::Gaussian { precision } => {
                if precision.len() != dim {
                    Err(Error::input(format!(
                        "gaussian kernel of dimension {} applied to points of dimension {dim}",
                        precision.len()
                    )))
                } else {
                    Ok(())
                }
            }
            Kernel::Combination { kernels, .. } => {
                kernels.iter().try_for_each(|k| k.check_dim(dim))
            }
        }
    }
}

/// Symmetric kernel matrix over a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries.clone().symmetric_eigenvalues().min()
    }

    /// Errors with a numeric failure when the smallest eigenvalue is below
    /// `-PSD_TOL * trace`.
    pub fn check_psd(&self) -> Result<()> {
        let min = self.min_eigenvalue();
        let tol = PSD_TOL * self.trace().abs();
        if min < -tol {
            return Err(Error::numeric(format!(
                "gram matrix is indefinite: min eigenvalue {min:e} below -{tol:e}"
            )));
        }
        Ok(())
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        SymmetricEigen::new(self.entries.clone())
    }

    /// Entrywise `sum_i w_i G_i` over Gram matrices of equal size.
    pub fn combine(weights: &[f64], grams: &[&GramMatrix]) -> GramMatrix {
        let m = grams[0].size();
        let mut entries = DMatrix::zeros(m, m);
        for (w, g) in weights.iter().zip(grams) {
            if *w != 0.0 {
                entries += &g.entries * *w;
            }
        }
        GramMatrix { entries }
    }
}

pub(crate) fn check_sample(sample: &[Point]) -> Result<usize> {
    let first = sample
        .first()
        .ok_or_else(|| Error::input("sample must be nonempty"))?;
    let dim = first.len();
    if let Some(bad) = sample.iter().position(|x| x.len() != dim) {
        return Err(Error::input(format!(
            "point {bad} has dimension {} but point 0 has dimension {dim}",
            sample[bad].len()
        )));
    }
    Ok(dim)
}

/// Builds `G[i][j] = K(x_i, x_j)`, computing the upper triangle and mirroring.
pub fn gram(kernel: &Kernel, sample: &[Point]) -> Result<GramMatrix> {
    let dim = check_sample(sample)?;
    kernel.check_dim(dim)?;
    let m = sample.len();
    let mut entries = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = kernel.eval(&sample[i], &sample[j]);
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(GramMatrix { entries })
}

/// Cross-kernel matrix `C[i][j] = K(a_i, b_j)`.
pub fn cross_gram(kernel: &Kernel, a: &[Point], b: &[Point]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| kernel.eval(&a[i], &b[j]))
}
