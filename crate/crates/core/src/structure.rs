//! Graph structure matrices: the propagation operator of a GNN layer and the
//! source of the eigenbasis.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::par::{self, Exec};

/// Largest node count for which K-step transition powers are densified.
pub const DENSIFY_MAX_NODES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    /// `D~^-1/2 (A + I) D~^-1/2`
    RenormAdjacency,
    /// `D^-1/2 A D^-1/2`
    PlainNormAdjacency,
    /// `D^1/2 (D^-1 A)^K D^-1/2`, the symmetric form of the K-step walk.
    TransitionPower(usize),
}

impl std::fmt::Display for StructureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StructureKind::RenormAdjacency => write!(f, "renorm"),
            StructureKind::PlainNormAdjacency => write!(f, "plain"),
            StructureKind::TransitionPower(k) => write!(f, "transition:{k}"),
        }
    }
}

impl std::str::FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "renorm" | "renorm_adjacency" => Ok(StructureKind::RenormAdjacency),
            "plain" | "plain_norm_adjacency" => Ok(StructureKind::PlainNormAdjacency),
            _ => {
                let k = s
                    .strip_prefix("transition:")
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| Error::Config(format!("unknown structure kind {s:?}")))?;
                Ok(StructureKind::TransitionPower(k))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Sparse(SparseGraph),
    Dense(Array2<f64>),
}

/// A symmetric matrix derived from a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMatrix {
    kind: StructureKind,
    storage: Storage,
}

impl StructureMatrix {
    /// Builds the requested kind from a graph.
    pub fn build(g: &SparseGraph, kind: StructureKind) -> Result<Self> {
        match kind {
            StructureKind::RenormAdjacency => Ok(renormalized_adjacency(g)),
            StructureKind::PlainNormAdjacency => plain_normalized_adjacency(g),
            StructureKind::TransitionPower(k) => transition_power(g, k),
        }
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.storage {
            Storage::Sparse(m) => m.num_nodes(),
            Storage::Dense(m) => m.nrows(),
        }
    }

    /// Stored nonzeros (every entry for dense storage).
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Sparse(m) => m.nnz(),
            Storage::Dense(m) => m.len(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// Sparse pattern and values, if stored sparse.
    pub fn as_sparse(&self) -> Option<&SparseGraph> {
        match &self.storage {
            Storage::Sparse(m) => Some(m),
            Storage::Dense(_) => None,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match &self.storage {
            Storage::Sparse(m) => m.to_dense(),
            Storage::Dense(m) => m.clone(),
        }
    }

    /// Exact product `M H`.
    pub fn spmm(&self, h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.spmm_with(Exec::default(), h)
    }

    /// `M H` with an explicit execution mode. Within each output row the
    /// terms are summed in ascending column order in both modes.
    pub fn spmm_with(&self, exec: Exec, h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let n = self.dim();
        if h.nrows() != n {
            return Err(Error::Dimension(format!(
                "matrix is {n}x{n} but operand has {} rows",
                h.nrows()
            )));
        }
        if h.ncols() == 0 {
            return Err(Error::Dimension("operand has no columns".into()));
        }
        let width = h.ncols();
        let h = h.as_standard_layout();
        let src = h.as_slice().expect("standard layout");
        let mut out = vec![0.0; n * width];
        self.apply_rows(exec, src, width, &mut out);
        Ok(Array2::from_shape_vec((n, width), out).expect("shape matches"))
    }

    /// Row-major kernel shared by `spmm` and the eigensolver.
    pub(crate) fn apply_rows(&self, exec: Exec, src: &[f64], width: usize, out: &mut [f64]) {
        match &self.storage {
            Storage::Sparse(m) => {
                let offsets = m.row_offsets();
                let cols = m.col_indices();
                let vals = m.values();
                if width == 1 {
                    par::for_each_row(exec, out, 1, |i, row| {
                        let mut s = row[0];
                        for k in offsets[i]..offsets[i + 1] {
                            s += vals[k] * src[cols[k]];
                        }
                        row[0] = s;
                    });
                    return;
                }
                par::for_each_row(exec, out, width, |i, row| {
                    for k in offsets[i]..offsets[i + 1] {
                        let a = vals[k];
                        let x = &src[cols[k] * width..(cols[k] + 1) * width];
                        for (y, &xv) in row.iter_mut().zip(x) {
                            *y += a * xv;
                        }
                    }
                });
            }
            Storage::Dense(m) => {
                let n = m.ncols();
                par::for_each_row(exec, out, width, |i, row| {
                    for j in 0..n {
                        let a = m[[i, j]];
                        if a == 0.0 {
                            continue;
                        }
                        let x = &src[j * width..(j + 1) * width];
                        for (y, &xv) in row.iter_mut().zip(x) {
                            *y += a * xv;
                        }
                    }
                });
            }
        }
    }
}

/// `D~^-1/2 (A + I) D~^-1/2`. Existing self-loops are replaced by weight 1,
/// so every node ends up with exactly one unit self-loop.
pub fn renormalized_adjacency(g: &SparseGraph) -> StructureMatrix {
    let n = g.num_nodes();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(g.nnz() + n);
    let mut vals = Vec::with_capacity(g.nnz() + n);
    let mut deg = vec![0.0; n];
    row_offsets.push(0);
    for i in 0..n {
        let mut placed = false;
        for (&j, &w) in g.neighbors(i).iter().zip(g.row_values(i)) {
            if j == i {
                continue;
            }
            if j > i && !placed {
                cols.push(i);
                vals.push(1.0);
                placed = true;
            }
            cols.push(j);
            vals.push(w);
        }
        if !placed {
            cols.push(i);
            vals.push(1.0);
        }
        row_offsets.push(cols.len());
        deg[i] = vals[row_offsets[i]..].iter().sum();
    }
    for i in 0..n {
        for k in row_offsets[i]..row_offsets[i + 1] {
            vals[k] /= (deg[i] * deg[cols[k]]).sqrt();
        }
    }
    StructureMatrix {
        kind: StructureKind::RenormAdjacency,
        storage: Storage::Sparse(SparseGraph::from_canonical_parts(n, row_offsets, cols, vals)),
    }
}

/// `D^-1/2 A D^-1/2`, the variant whose smallest eigenvalue is -1 exactly
/// on bipartite graphs.
pub fn plain_normalized_adjacency(g: &SparseGraph) -> Result<StructureMatrix> {
    let inv_sqrt = inverse_sqrt_degrees(g)?;
    Ok(StructureMatrix {
        kind: StructureKind::PlainNormAdjacency,
        storage: Storage::Sparse(scale_symmetric(g, &inv_sqrt)),
    })
}

/// Symmetrized K-step transition matrix `D^1/2 (D^-1 A)^K D^-1/2`.
/// K = 1 stays sparse; larger K is densified.
pub fn transition_power(g: &SparseGraph, k: usize) -> Result<StructureMatrix> {
    if k == 0 {
        return Err(Error::Config("transition power needs K >= 1".into()));
    }
    let inv_sqrt = inverse_sqrt_degrees(g)?;
    let n = g.num_nodes();
    let kind = StructureKind::TransitionPower(k);
    if k == 1 {
        return Ok(StructureMatrix {
            kind,
            storage: Storage::Sparse(scale_symmetric(g, &inv_sqrt)),
        });
    }
    if n > DENSIFY_MAX_NODES {
        return Err(Error::DensificationBound {
            k,
            num_nodes: n,
            max: DENSIFY_MAX_NODES,
        });
    }
    let s = scale_symmetric(g, &inv_sqrt);
    let base = StructureMatrix {
        kind,
        storage: Storage::Sparse(s),
    };
    // S^K = D^1/2 P^K D^-1/2 with S the K=1 symmetric form
    let mut power = base.to_dense();
    for _ in 1..k {
        power = base.spmm(power.view())?;
    }
    // average away rounding asymmetry
    let sym = (&power + &power.t()) * 0.5;
    Ok(StructureMatrix {
        kind,
        storage: Storage::Dense(sym),
    })
}

/// Row-stochastic `(D^-1 A)^K` as a dense matrix (before symmetrization).
pub fn transition_power_rows(g: &SparseGraph, k: usize) -> Result<Array2<f64>> {
    let n = g.num_nodes();
    if k > 1 && n > DENSIFY_MAX_NODES {
        return Err(Error::DensificationBound {
            k,
            num_nodes: n,
            max: DENSIFY_MAX_NODES,
        });
    }
    let deg = g.weighted_degrees();
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::ZeroDegree(i));
    }
    let mut p = g.to_dense();
    for i in 0..n {
        p.row_mut(i).mapv_inplace(|v| v / deg[i]);
    }
    let mut power = Array2::eye(n);
    for _ in 0..k {
        power = power.dot(&p);
    }
    Ok(power)
}

fn inverse_sqrt_degrees(g: &SparseGraph) -> Result<Vec<f64>> {
    g.weighted_degrees()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d > 0.0 {
                Ok(1.0 / d.sqrt())
            } else {
                Err(Error::ZeroDegree(i))
            }
        })
        .collect()
}

fn scale_symmetric(g: &SparseGraph, s: &[f64]) -> SparseGraph {
    let n = g.num_nodes();
    let mut vals = g.values().to_vec();
    let offsets = g.row_offsets();
    let cols = g.col_indices();
    for i in 0..n {
        for k in offsets[i]..offsets[i + 1] {
            vals[k] *= s[i] * s[cols[k]];
        }
    }
    SparseGraph::from_canonical_parts(n, offsets.to_vec(), cols.to_vec(), vals)
}
