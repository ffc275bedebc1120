//! Initial node representations: raw features concatenated with the
//! transformed eigenbasis, and the featureless baselines compared against it.

use std::path::Path;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix_io::{read_matrix_csv, write_matrix_csv};
use crate::rng;
use crate::spectral::{apply_f, EigenBasis, FMode};

pub const ONE_HOT_MAX_NODES: usize = 20_000;
pub const DEFAULT_RANDOM_DIM: usize = 32;

/// `[X, f(Q)]`: columns `[0, feature_cols)` are raw features, the rest the
/// transformed eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialBasis {
    pub matrix: Array2<f64>,
    pub feature_cols: usize,
    pub eigen_cols: usize,
    pub f_mode: FMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialBasisSidecar {
    pub feature_cols: usize,
    pub eigen_cols: usize,
    pub f_mode: FMode,
    pub d: usize,
    pub seed: u64,
}

pub fn build_initial_basis(x: Option<&Array2<f64>>, basis: Option<&EigenBasis>, f_mode: FMode) -> Result<InitialBasis> {
    let q = basis.map(|b| apply_f(b, f_mode));
    let matrix = match (x, &q) {
        (None, None) => return Err(Error::MissingInputs),
        (Some(x), None) => x.clone(),
        (None, Some(q)) => q.clone(),
        (Some(x), Some(q)) => {
            if x.nrows() != q.nrows() {
                return Err(Error::Dimension(format!(
                    "features have {} rows, eigenbasis has {}",
                    x.nrows(),
                    q.nrows()
                )));
            }
            concatenate(Axis(1), &[x.view(), q.view()]).map_err(|e| Error::Dimension(e.to_string()))?
        }
    };
    let out = InitialBasis {
        feature_cols: x.map_or(0, |x| x.ncols()),
        eigen_cols: q.as_ref().map_or(0, |q| q.ncols()),
        f_mode,
        matrix,
    };
    if out.feature_cols + out.eigen_cols == 0 {
        return Err(Error::MissingInputs);
    }
    Ok(out)
}

impl InitialBasis {
    /// Writes the matrix to `path` and the sidecar next to it with a `.json`
    /// extension.
    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        write_matrix_csv(path, &self.matrix)?;
        let sidecar = InitialBasisSidecar {
            feature_cols: self.feature_cols,
            eigen_cols: self.eigen_cols,
            f_mode: self.f_mode,
            d: self.eigen_cols,
            seed,
        };
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(InitialBasis, InitialBasisSidecar)> {
        let matrix = read_matrix_csv(path)?;
        let sidecar: InitialBasisSidecar = serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
        if sidecar.feature_cols + sidecar.eigen_cols != matrix.ncols() {
            return Err(Error::Dimension(format!(
                "sidecar declares {} + {} columns, matrix has {}",
                sidecar.feature_cols,
                sidecar.eigen_cols,
                matrix.ncols()
            )));
        }
        Ok((
            InitialBasis {
                matrix,
                feature_cols: sidecar.feature_cols,
                eigen_cols: sidecar.eigen_cols,
                f_mode: sidecar.f_mode,
            },
            sidecar,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    OneHotId,
    DegreeOneHot,
    RandomGaussian,
}

pub fn baseline_features(g: &SparseGraph, mode: BaselineMode, seed: u64) -> Result<Array2<f64>> {
    match mode {
        BaselineMode::OneHotId => one_hot_id(g.num_nodes()),
        BaselineMode::DegreeOneHot => Ok(degree_one_hot(g, None)),
        BaselineMode::RandomGaussian => Ok(random_gaussian(g.num_nodes(), DEFAULT_RANDOM_DIM, seed)),
    }
}

pub fn one_hot_id(n: usize) -> Result<Array2<f64>> {
    if n > ONE_HOT_MAX_NODES {
        return Err(Error::OneHotTooLarge(n));
    }
    Ok(Array2::eye(n))
}

/// Degree indicators (self-loops excluded). `width` pads the encoding so
/// graphs of one dataset share a column count; it defaults to the graph's
/// own `max_degree + 1`.
pub fn degree_one_hot(g: &SparseGraph, width: Option<usize>) -> Array2<f64> {
    let degrees = g.degrees();
    let own = degrees.iter().max().map_or(1, |&d| d + 1);
    let width = width.unwrap_or(own).max(own);
    let mut out = Array2::zeros((g.num_nodes(), width));
    for (i, &d) in degrees.iter().enumerate() {
        out[[i, d]] = 1.0;
    }
    out
}

pub fn random_gaussian(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, 0);
    Array2::from_shape_fn((n, dim), |_| rng::standard_normal(&mut r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::dense_eig_oracle;
    use crate::structure::renormalized_adjacency;
    use ndarray::{array, s};

    fn triangle() -> SparseGraph {
        SparseGraph::from_edge_list(&[(0, 1), (1, 2), (0, 2)], 3).unwrap()
    }

    fn basis_of(g: &SparseGraph, d: usize) -> EigenBasis {
        let e = dense_eig_oracle(renormalized_adjacency(g).to_dense().view()).unwrap();
        EigenBasis {
            eigenvalues: e.eigenvalues[..d].to_vec(),
            vectors: e.vectors.slice(s![.., ..d]).to_owned(),
            residuals: vec![0.0; d],
            iterations_used: 0,
            converged: true,
        }
    }

    #[test]
    fn features_only_is_passthrough() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let b = build_initial_basis(Some(&x), None, FMode::Identity).unwrap();
        assert_eq!(b.matrix, x);
        assert_eq!((b.feature_cols, b.eigen_cols), (2, 0));
    }

    #[test]
    fn basis_only_is_q() {
        let basis = basis_of(&triangle(), 2);
        let b = build_initial_basis(None, Some(&basis), FMode::Identity).unwrap();
        assert_eq!(b.matrix, basis.vectors);
    }

    #[test]
    fn features_come_first() {
        let g = crate::graph::connected_erdos_renyi(8, 0.5, 1);
        let x = random_gaussian(8, 3, 2);
        let basis = basis_of(&g, 2);
        let b = build_initial_basis(Some(&x), Some(&basis), FMode::Abs).unwrap();
        assert_eq!(b.matrix.dim(), (8, 5));
        assert_eq!(b.matrix.slice(s![.., ..3]), x);
        assert_eq!(b.matrix.slice(s![.., 3..]), basis.vectors.mapv(f64::abs));
    }

    #[test]
    fn missing_inputs_and_row_mismatch() {
        assert!(matches!(build_initial_basis(None, None, FMode::Abs), Err(Error::MissingInputs)));
        let basis = basis_of(&triangle(), 1);
        assert!(build_initial_basis(Some(&Array2::zeros((4, 1))), Some(&basis), FMode::Abs).is_err());
    }

    #[test]
    fn baselines() {
        assert_eq!(one_hot_id(3).unwrap(), Array2::<f64>::eye(3));
        assert!(matches!(one_hot_id(20_001), Err(Error::OneHotTooLarge(20_001))));
        let csl = crate::csl::build_csl(41, 2).unwrap();
        let deg = degree_one_hot(&csl, None);
        assert_eq!(deg.ncols(), 5);
        for row in deg.rows() {
            assert_eq!(row, deg.row(0));
            assert_eq!(row[4], 1.0);
        }
        let r = random_gaussian(1000, 32, 9);
        assert_eq!(r, random_gaussian(1000, 32, 9));
        for c in r.columns() {
            assert!(c.mean().unwrap().abs() < 0.2);
        }
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h0.csv");
        let x = random_gaussian(3, 2, 1);
        let b = build_initial_basis(Some(&x), Some(&basis_of(&triangle(), 1)), FMode::FrobeniusNorm).unwrap();
        b.save(&path, 17).unwrap();
        let (back, side) = InitialBasis::load(&path).unwrap();
        assert_eq!(back, b);
        assert_eq!(side.seed, 17);
        assert_eq!(side.d, 1);
    }
}
