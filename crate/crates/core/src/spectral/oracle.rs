//! Full eigendecomposition of small dense symmetric matrices by cyclic Jacobi
//! rotations. Serves as the independent reference for the iterative solver.

use ndarray::{Array2, ArrayView2};

use super::{canonical_order, columns, fix_sign, from_columns};
use crate::error::{Error, Result};

pub const ORACLE_MAX_DIM: usize = 500;
const SYMMETRY_TOL: f64 = 1e-12;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseEigen {
    /// Sorted by descending |λ|, same tie rule as the iterative solver.
    pub eigenvalues: Vec<f64>,
    /// Columns are unit eigenvectors with the solver's sign convention.
    pub vectors: Array2<f64>,
    /// Off-diagonal Frobenius norm left after the last sweep.
    pub off_diagonal: f64,
}

pub fn dense_eig_oracle(m: ArrayView2<'_, f64>) -> Result<DenseEigen> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension(format!("{}x{} is not square", n, m.ncols())));
    }
    if n > ORACLE_MAX_DIM {
        return Err(Error::Dimension(format!(
            "oracle limited to {ORACLE_MAX_DIM} rows, got {n}"
        )));
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    if asym > SYMMETRY_TOL {
        return Err(Error::Asymmetric(asym));
    }

    let mut a = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (m[[i, j]] + m[[j, i]]));
    let mut v = Array2::<f64>::eye(n);
    let mut off = off_diagonal_norm(&a);
    for _ in 0..MAX_SWEEPS {
        if off < OFF_DIAGONAL_TOL {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
        off = off_diagonal_norm(&a);
    }

    let values: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    let mut cols = columns(&v);
    cols.iter_mut().for_each(|c| fix_sign(c));
    let order = canonical_order(&values, &cols);
    let sorted: Vec<Vec<f64>> = order.iter().map(|&i| cols[i].clone()).collect();
    Ok(DenseEigen {
        eigenvalues: order.iter().map(|&i| values[i]).collect(),
        vectors: from_columns(&sorted, n),
        off_diagonal: off,
    })
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let mut s = 0.0;
    for ((i, j), &x) in a.indexed_iter() {
        if i != j {
            s += x * x;
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn diagonal_matrix() {
        let e = dense_eig_oracle(array![[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]].view()).unwrap();
        assert_eq!(e.eigenvalues, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn swap_matrix() {
        let e = dense_eig_oracle(array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((e.eigenvalues[1] + 1.0).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[[0, 0]] - s).abs() < 1e-15 && (e.vectors[[1, 0]] - s).abs() < 1e-15);
        // second column is ±(1,-1)/√2; lowest-index tie gets the nonnegative sign
        assert!((e.vectors[[0, 1]] - s).abs() < 1e-15 && (e.vectors[[1, 1]] + s).abs() < 1e-15);
    }

    #[test]
    fn reconstructs_random_symmetric() {
        let mut rng = crate::rng::stream(3, 0);
        let b = Array2::from_shape_fn((10, 10), |_| rng.random_range(-1.0..1.0));
        let m = &b + &b.t();
        let e = dense_eig_oracle(m.view()).unwrap();
        let lam = Array2::from_diag(&ndarray::Array1::from(e.eigenvalues.clone()));
        let rec = e.vectors.dot(&lam).dot(&e.vectors.t());
        let err = (&rec - &m).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(err < 1e-10, "reconstruction error {err}");
        assert!(e.off_diagonal < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let err = dense_eig_oracle(array![[1.0, 2.0], [2.5, 1.0]].view()).unwrap_err();
        match err {
            Error::Asymmetric(v) => assert!((v - 0.5).abs() < 1e-15),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn spectra_of_small_normalized_adjacencies() {
        use crate::graph::SparseGraph;
        use crate::structure::{plain_normalized_adjacency, renormalized_adjacency};
        let tri = SparseGraph::from_edge_list(&[(0, 1), (1, 2), (0, 2)], 3).unwrap();
        let e = dense_eig_oracle(renormalized_adjacency(&tri).to_dense().view()).unwrap();
        for (got, want) in e.eigenvalues.iter().zip([1.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        let e = dense_eig_oracle(plain_normalized_adjacency(&tri).unwrap().to_dense().view()).unwrap();
        for (got, want) in e.eigenvalues.iter().zip([1.0, -0.5, -0.5]) {
            assert!((got - want).abs() < 1e-14);
        }
        let c4 = SparseGraph::from_edge_list(&[(0, 1), (1, 2), (2, 3), (3, 0)], 4).unwrap();
        let e = dense_eig_oracle(plain_normalized_adjacency(&c4).unwrap().to_dense().view()).unwrap();
        for (got, want) in e.eigenvalues.iter().zip([1.0, -1.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-14, "{:?}", e.eigenvalues);
        }
    }
}
