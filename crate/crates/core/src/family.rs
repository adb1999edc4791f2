//! Parametric kernel families and their analytic pseudodimension bounds.

use std::f64::consts::E;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Slack allowed on simplex constraints.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A set of kernels indexed by a finite-dimensional parameter.
///
/// Parameter spaces:
/// - `LinearCombo`: `w_i >= 0`, `sum w_i <= 1`, not all zero.
/// - `ConvexCombo`: the probability simplex.
/// - `SparseCombo`: the simplex with at most `k` non-zero weights.
/// - `GaussianCovariance`: symmetric positive-definite covariance `Sigma`,
///   giving `exp(-(x-x')^T Sigma^-1 (x-x') / 2)`.
/// - `GaussianLowRank`: a factor `L` (`dimension x r`, `r <= max_rank`),
///   giving `exp(-|L^T (x-x')|^2 / 2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFamily {
    LinearCombo { dictionary: Vec<Kernel> },
    ConvexCombo { dictionary: Vec<Kernel> },
    SparseCombo { dictionary: Vec<Kernel>, k: usize },
    GaussianCovariance { dimension: usize },
    GaussianLowRank { dimension: usize, max_rank: usize },
}

/// A point of a family's parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FamilyParams {
    Weights(Vec<f64>),
    Covariance(Vec<Vec<f64>>),
    LowRankFactor(Vec<Vec<f64>>),
}

impl KernelFamily {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let family: KernelFamily =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        family.validate()?;
        Ok(family)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("kernel families always serialize")
    }

    pub fn dictionary(&self) -> Option<&[Kernel]> {
        match self {
            KernelFamily::LinearCombo { dictionary }
            | KernelFamily::ConvexCombo { dictionary }
            | KernelFamily::SparseCombo { dictionary, .. } => Some(dictionary),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelFamily::LinearCombo { dictionary }
            | KernelFamily::ConvexCombo { dictionary }
            | KernelFamily::SparseCombo { dictionary, .. } => {
                if dictionary.is_empty() {
                    return Err(Error::input("kernel dictionary is empty"));
                }
                dictionary.iter().try_for_each(Kernel::validate)?;
                if let KernelFamily::SparseCombo { k, .. } = self {
                    if *k == 0 || *k > dictionary.len() {
                        return Err(Error::input(format!(
                            "sparsity k={k} must lie in 1..={}",
                            dictionary.len()
                        )));
                    }
                }
            }
            KernelFamily::GaussianCovariance { dimension } => {
                if *dimension == 0 {
                    return Err(Error::input("gaussian family dimension must be >= 1"));
                }
            }
            KernelFamily::GaussianLowRank {
                dimension,
                max_rank,
            } => {
                if *dimension == 0 || *max_rank == 0 || max_rank > dimension {
                    return Err(Error::input(
                        "low-rank gaussian family needs 1 <= max_rank <= dimension",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Bound `B` shared by every member of the family.
    pub fn bound(&self) -> f64 {
        match self.dictionary() {
            Some(dict) => dict.iter().map(Kernel::bound).fold(0.0, f64::max),
            None => 1.0,
        }
    }

    /// Analytic upper bound on the pseudodimension.
    ///
    /// Linear and convex combinations of `k` kernels: `k`. Gaussians with a
    /// learned covariance in `R^l`: `l(l+1)/2`. Low-rank Gaussians:
    /// `k l log2(8 e k l)`. Sparse combinations of at most `k` out of `N`
    /// kernels: `2k ln k + 2k ln(4eN)` (natural log).
    pub fn pd_upper_bound(&self) -> f64 {
        match self {
            KernelFamily::LinearCombo { dictionary } | KernelFamily::ConvexCombo { dictionary } => {
                dictionary.len() as f64
            }
            KernelFamily::SparseCombo { dictionary, k } => {
                sparse_combo_pd_bound(*k, dictionary.len())
            }
            KernelFamily::GaussianCovariance { dimension } => {
                let l = *dimension as f64;
                l * (l + 1.0) / 2.0
            }
            KernelFamily::GaussianLowRank {
                dimension,
                max_rank,
            } => {
                let kl = (*max_rank * *dimension) as f64;
                kl * (8.0 * E * kl).log2()
            }
        }
    }

    /// Builds the member kernel at `params`.
    pub fn instantiate(&self, params: &FamilyParams) -> Result<Kernel> {
        match (self, params) {
            (KernelFamily::LinearCombo { dictionary }, FamilyParams::Weights(w)) => {
                check_len(w, dictionary.len())?;
                if w.iter().any(|&x| x < -SIMPLEX_TOL || !x.is_finite()) {
                    return Err(Error::input("linear-combination weights must be non-negative"));
                }
                let total: f64 = w.iter().sum();
                if total > 1.0 + SIMPLEX_TOL || total <= 0.0 {
                    return Err(Error::input(format!(
                        "linear-combination weights must sum to a value in (0, 1], got {total}"
                    )));
                }
                Ok(combination(dictionary, w))
            }
            (KernelFamily::ConvexCombo { dictionary }, FamilyParams::Weights(w)) => {
                check_len(w, dictionary.len())?;
                check_simplex(w)?;
                Ok(combination(dictionary, w))
            }
            (KernelFamily::SparseCombo { dictionary, k }, FamilyParams::Weights(w)) => {
                check_len(w, dictionary.len())?;
                check_simplex(w)?;
                let nnz = w.iter().filter(|&&x| x != 0.0).count();
                if nnz > *k {
                    return Err(Error::input(format!(
                        "{nnz} non-zero weights exceed sparsity k={k}"
                    )));
                }
                Ok(combination(dictionary, w))
            }
            (KernelFamily::GaussianCovariance { dimension }, FamilyParams::Covariance(cov)) => {
                let sigma = square(cov, *dimension)?;
                if (&sigma - sigma.transpose()).amax() > 1e-12 * (1.0 + sigma.amax()) {
                    return Err(Error::input("covariance must be symmetric"));
                }
                let chol = sigma
                    .cholesky()
                    .ok_or_else(|| Error::input("covariance must be positive definite"))?;
                let inv = chol.inverse();
                let inv = (&inv + inv.transpose()) * 0.5;
                Ok(Kernel::Gaussian {
                    precision: rows(&inv),
                })
            }
            (
                KernelFamily::GaussianLowRank {
                    dimension,
                    max_rank,
                },
                FamilyParams::LowRankFactor(factor),
            ) => {
                if factor.len() != *dimension {
                    return Err(Error::input(format!(
                        "low-rank factor must have {dimension} rows"
                    )));
                }
                let r = factor.first().map_or(0, Vec::len);
                if r == 0 || r > *max_rank || factor.iter().any(|row| row.len() != r) {
                    return Err(Error::input(format!(
                        "low-rank factor must have between 1 and {max_rank} columns"
                    )));
                }
                let l = DMatrix::from_fn(*dimension, r, |i, j| factor[i][j]);
                Ok(Kernel::Gaussian {
                    precision: rows(&(&l * l.transpose())),
                })
            }
            _ => Err(Error::input("parameters do not match the family variant")),
        }
    }
}

/// `2k ln k + 2k ln(4eN)`.
pub fn sparse_combo_pd_bound(k: usize, n: usize) -> f64 {
    let k = k as f64;
    2.0 * k * k.ln() + 2.0 * k * (4.0 * E * n as f64).ln()
}

fn check_len(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::input(format!(
            "expected {n} weights, got {}",
            w.len()
        )));
    }
    Ok(())
}

fn check_simplex(w: &[f64]) -> Result<()> {
    if w.iter().any(|&x| x < -SIMPLEX_TOL || !x.is_finite()) {
        return Err(Error::input("weights must be non-negative"));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::input(format!("weights must sum to 1, got {total}")));
    }
    Ok(())
}

fn combination(dictionary: &[Kernel], w: &[f64]) -> Kernel {
    Kernel::Combination {
        weights: w.iter().map(|&x| x.max(0.0)).collect(),
        kernels: dictionary.to_vec(),
    }
}

fn square(m: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if m.len() != d || m.iter().any(|r| r.len() != d) {
        return Err(Error::input(format!("expected a {d}x{d} matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| m[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram, Point};
    use proptest::prelude::*;

    fn dict() -> Vec<Kernel> {
        vec![
            Kernel::rbf(0.5),
            Kernel::rbf(2.0),
            Kernel::linear(8.0),
            Kernel::rbf_on(1.0, vec![1]),
            Kernel::Polynomial {
                degree: 2,
                offset: 1.0,
                radius_sq: 8.0,
                coords: None,
            },
        ]
    }

    fn pts() -> Vec<Point> {
        vec![
            vec![0.1, 0.2],
            vec![-1.0, 1.5],
            vec![1.9, -0.4],
            vec![0.0, 0.0],
        ]
    }

    #[test]
    fn pd_bounds_catalog() {
        let convex = KernelFamily::ConvexCombo { dictionary: dict() };
        assert_eq!(convex.pd_upper_bound(), 5.0);
        assert_eq!(
            KernelFamily::GaussianCovariance { dimension: 3 }.pd_upper_bound(),
            6.0
        );
        let low = KernelFamily::GaussianLowRank {
            dimension: 4,
            max_rank: 2,
        };
        assert!((low.pd_upper_bound() - 8.0 * (64.0 * E).log2()).abs() < 1e-12);
    }

    #[test]
    fn sparse_combo_reference_value() {
        let v = sparse_combo_pd_bound(2, 8);
        let expected = 4.0 * 2f64.ln() + 4.0 * (32.0 * E).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 20.64).abs() < 5e-3);
    }

    #[test]
    fn simplex_vertex_reproduces_dictionary_kernel() {
        let fam = KernelFamily::ConvexCombo { dictionary: dict() };
        let p = pts();
        for idx in 0..5 {
            let mut w = vec![0.0; 5];
            w[idx] = 1.0;
            let k = fam.instantiate(&FamilyParams::Weights(w)).unwrap();
            for x in &p {
                for y in &p {
                    assert_eq!(k.eval(x, y), dict()[idx].eval(x, y));
                }
            }
        }
    }

    #[test]
    fn midpoint_combo_averages_grams() {
        let d = vec![Kernel::rbf(0.5), Kernel::linear(8.0)];
        let fam = KernelFamily::ConvexCombo { dictionary: d.clone() };
        let k = fam.instantiate(&FamilyParams::Weights(vec![0.5, 0.5])).unwrap();
        let g = gram(&k, &pts()).unwrap();
        let g0 = gram(&d[0], &pts()).unwrap();
        let g1 = gram(&d[1], &pts()).unwrap();
        let avg = (g0.entries + g1.entries) * 0.5;
        assert!((g.entries - avg).amax() < 1e-15);
    }

    #[test]
    fn identity_covariance_is_isotropic_rbf() {
        let fam = KernelFamily::GaussianCovariance { dimension: 2 };
        let k = fam
            .instantiate(&FamilyParams::Covariance(vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
            ]))
            .unwrap();
        let rbf = Kernel::rbf(1.0);
        for x in &pts() {
            for y in &pts() {
                assert!((k.eval(x, y) - rbf.eval(x, y)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn parameter_space_violations_are_input_errors() {
        let fam = KernelFamily::ConvexCombo { dictionary: dict() };
        let off = FamilyParams::Weights(vec![0.5, 0.5, 0.1, 0.0, 0.0]);
        assert!(matches!(fam.instantiate(&off), Err(Error::Input(_))));
        let neg = FamilyParams::Weights(vec![1.5, -0.5, 0.0, 0.0, 0.0]);
        assert!(matches!(fam.instantiate(&neg), Err(Error::Input(_))));
        let sparse = KernelFamily::SparseCombo {
            dictionary: dict(),
            k: 1,
        };
        let two = FamilyParams::Weights(vec![0.5, 0.5, 0.0, 0.0, 0.0]);
        assert!(matches!(sparse.instantiate(&two), Err(Error::Input(_))));
        let gauss = KernelFamily::GaussianCovariance { dimension: 2 };
        let bad = FamilyParams::Covariance(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(gauss.instantiate(&bad), Err(Error::Input(_))));
        let low = KernelFamily::GaussianLowRank {
            dimension: 2,
            max_rank: 1,
        };
        let wide = FamilyParams::LowRankFactor(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(low.instantiate(&wide), Err(Error::Input(_))));
        assert!(fam
            .instantiate(&FamilyParams::Covariance(vec![vec![1.0]]))
            .is_err());
    }

    #[test]
    fn family_file_round_trip_and_strictness() {
        let text = r#"
variant = "sparse_combo"
k = 2

[[dictionary]]
type = "rbf"
bandwidth = 0.5

[[dictionary]]
type = "linear"
scale = 1.0
radius_sq = 4.0
coords = [0, 1]
"#;
        let fam = KernelFamily::from_toml_str(text).unwrap();
        assert_eq!(fam.pd_upper_bound(), sparse_combo_pd_bound(2, 2));
        assert_eq!(KernelFamily::from_toml_str(&fam.to_toml_string()).unwrap(), fam);
        let typo = text.replace("bandwidth", "bandwith");
        assert!(matches!(
            KernelFamily::from_toml_str(&typo),
            Err(Error::Parse(_))
        ));
        let k_too_big = text.replace("k = 2", "k = 3");
        assert!(matches!(
            KernelFamily::from_toml_str(&k_too_big),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn combination_bound_does_not_exceed_family_bound() {
        let fam = KernelFamily::ConvexCombo { dictionary: dict() };
        let k = fam
            .instantiate(&FamilyParams::Weights(vec![0.2; 5]))
            .unwrap();
        assert!(k.bound() <= fam.bound() * (1.0 + 1e-12));
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, n).prop_filter_map("nonzero", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-3).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn combo_gram_is_weighted_sum(
            w in simplex(5),
            sample in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 2), 1..20),
        ) {
            let d = dict();
            let total: f64 = w.iter().sum();
            prop_assume!((total - 1.0).abs() <= SIMPLEX_TOL);
            let fam = KernelFamily::ConvexCombo { dictionary: d.clone() };
            let k = fam.instantiate(&FamilyParams::Weights(w.clone())).unwrap();
            let g = gram(&k, &sample).unwrap();
            let mut expected = nalgebra::DMatrix::zeros(sample.len(), sample.len());
            for (wi, ki) in w.iter().zip(&d) {
                expected += gram(ki, &sample).unwrap().entries * *wi;
            }
            for (a, b) in g.entries.iter().zip(expected.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300));
            }
            prop_assert!(g.min_eigenvalue() >= -crate::kernel::PSD_TOL * g.trace());
        }

        #[test]
        fn sparse_bound_monotone(k in 1usize..20, n in 1usize..200) {
            let kk = k.min(n);
            prop_assert!(sparse_combo_pd_bound(kk, n + 1) > sparse_combo_pd_bound(kk, n));
            if kk < n {
                prop_assert!(sparse_combo_pd_bound(kk + 1, n) > sparse_combo_pd_bound(kk, n));
            }
        }
    }
}
