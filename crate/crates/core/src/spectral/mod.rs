//! Top-|λ| eigenpairs of structure matrices, the post-transform applied to
//! the eigenbasis, and numerical checks of the properties the eigenbasis is
//! expected to have.

mod checks;
mod lanczos;
mod oracle;
mod transform;

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::structure::StructureMatrix;

pub use checks::{equivariance_check, equivariance_check_with, principal_angle, sgc_limit_check, top_gap_violation, EQUIVARIANCE_GAP};
pub use lanczos::{top_eigenpairs, top_eigenpairs_with, SolverOptions};
pub use oracle::{dense_eig_oracle, DenseEigen};
pub use transform::{apply_f, FMode};

/// Symmetric linear operator applied to row-major blocks.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// `out = A x` for a single vector; `out` is overwritten.
    fn apply(&self, exec: Exec, x: &[f64], out: &mut [f64]);
}

impl SymmetricOperator for StructureMatrix {
    fn dim(&self) -> usize {
        StructureMatrix::dim(self)
    }

    fn apply(&self, exec: Exec, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.apply_rows(exec, x, 1, out);
    }
}

/// Dense symmetric matrix as an operator (tests and small problems).
pub struct DenseOperator<'a>(pub ArrayView2<'a, f64>);

impl SymmetricOperator for DenseOperator<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, _exec: Exec, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Top-d eigenpairs ordered by descending |λ|.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub eigenvalues: Vec<f64>,
    /// N x d, unit-norm columns.
    pub vectors: Array2<f64>,
    /// `||A q - λ q||_2` per pair.
    pub residuals: Vec<f64>,
    /// Operator applications spent by the solver.
    pub iterations_used: usize,
    pub converged: bool,
}

impl EigenBasis {
    pub fn d(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn worst_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |a, &r| a.max(r))
    }

    /// CSV: first row the eigenvalues, then one row per node.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_row(&mut out, self.eigenvalues.iter().copied())?;
        for row in self.vectors.rows() {
            write_row(&mut out, row.iter().copied())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV layout of [`EigenBasis::write_csv`]. Residuals are not
    /// stored and come back as NaN.
    pub fn read_csv(path: &Path) -> Result<EigenBasis> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: k + 1,
                        message: format!("invalid number {t:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let Some(values) = rows.first().cloned() else {
            return Err(Error::Parse {
                line: 1,
                message: "empty eigenbasis file".into(),
            });
        };
        let d = values.len();
        let n = rows.len() - 1;
        let mut vectors = Array2::zeros((n, d));
        for (i, row) in rows[1..].iter().enumerate() {
            if row.len() != d {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("expected {d} columns, found {}", row.len()),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                vectors[[i, j]] = v;
            }
        }
        Ok(EigenBasis {
            eigenvalues: values,
            vectors,
            residuals: vec![f64::NAN; d],
            iterations_used: 0,
            converged: true,
        })
    }
}

pub(crate) fn write_row<W: Write>(out: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            write!(out, ",")?;
        }
        // shortest representation that round-trips
        write!(out, "{v:?}")?;
        first = false;
    }
    writeln!(out)?;
    Ok(())
}

/// Relative tolerance under which two |λ| count as tied for ordering.
const TIE_TOL: f64 = 1e-10;

/// Orders eigenpairs by descending |λ|; pairs whose magnitudes agree within
/// [`TIE_TOL`] are ordered by descending signed value, then by the first
/// differing vector entry (larger first). Returns the permutation of input
/// indices.
pub(crate) fn canonical_order(values: &[f64], vectors: &[Vec<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len()
            && (values[idx[end - 1]].abs() - values[idx[end]].abs()).abs()
                <= TIE_TOL * values[idx[start]].abs().max(1.0)
        {
            end += 1;
        }
        idx[start..end].sort_by(|&a, &b| {
            values[b]
                .total_cmp(&values[a])
                .then_with(|| lexicographic_desc(&vectors[a], &vectors[b]))
        });
        start = end;
    }
    idx
}

fn lexicographic_desc(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return y.total_cmp(x);
        }
    }
    std::cmp::Ordering::Equal
}

/// Flips `v` so its entry of largest magnitude (lowest index on ties) is
/// nonnegative.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Columns of `vectors` as owned vectors.
pub(crate) fn columns(vectors: &Array2<f64>) -> Vec<Vec<f64>> {
    vectors.columns().into_iter().map(|c| c.to_vec()).collect()
}

/// Assembles columns into an N x d matrix.
pub(crate) fn from_columns(cols: &[Vec<f64>], n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, cols.len()), |(i, j)| cols[j][i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_breaks_magnitude_ties_by_signed_value() {
        let vals = [-1.0, 0.3, 1.0 - 1e-13, -0.5];
        let vecs = vec![vec![1.0]; 4];
        assert_eq!(canonical_order(&vals, &vecs), vec![2, 0, 3, 1]);
    }

    #[test]
    fn sign_convention_uses_largest_entry() {
        let mut v = vec![0.1, -0.9, 0.3];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
        let mut v = vec![-0.5, 0.5];
        fix_sign(&mut v);
        assert_eq!(v, vec![0.5, -0.5]);
    }

    #[test]
    fn csv_round_trip() {
        let g = crate::graph::connected_erdos_renyi(12, 0.4, 1);
        let m = crate::structure::renormalized_adjacency(&g);
        let basis = top_eigenpairs(&m, &SolverOptions::new(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.csv");
        basis.write_csv(&path).unwrap();
        let back = EigenBasis::read_csv(&path).unwrap();
        assert_eq!(back.eigenvalues, basis.eigenvalues);
        assert_eq!(back.vectors, basis.vectors);
    }
}
