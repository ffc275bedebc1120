//! Undirected graphs in canonical compressed sparse row form.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// Symmetric CSR adjacency. Rows are sorted and deduplicated, so two graphs
/// with the same edge set compare equal structurally.
///
/// `nnz` counts directed entries: an undirected edge contributes two entries,
/// a self-loop one.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseGraph {
    /// Builds a graph from unweighted pairs. Both orientations and repeated
    /// pairs collapse into one undirected edge. Errors carry the 1-based
    /// position of the offending pair.
    pub fn from_edge_list(edges: &[(usize, usize)], num_nodes: usize) -> Result<Self> {
        let weighted: Vec<(usize, usize, f64)> =
            edges.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        Self::from_weighted_edges(&weighted, num_nodes)
    }

    /// Weighted variant; on repeated pairs the first weight wins.
    pub fn from_weighted_edges(edges: &[(usize, usize, f64)], num_nodes: usize) -> Result<Self> {
        for (pos, &(i, j, _)) in edges.iter().enumerate() {
            for index in [i, j] {
                if index >= num_nodes {
                    return Err(Error::IndexOutOfRange {
                        line: pos + 1,
                        index,
                        num_nodes,
                    });
                }
            }
        }
        let mut counts = vec![0usize; num_nodes];
        for &(i, j, _) in edges {
            counts[i] += 1;
            if i != j {
                counts[j] += 1;
            }
        }
        let mut offsets = vec![0usize; num_nodes + 1];
        for i in 0..num_nodes {
            offsets[i + 1] = offsets[i] + counts[i];
        }
        let mut fill = offsets.clone();
        let mut entries = vec![(0usize, 0usize, 0.0f64); offsets[num_nodes]];
        // (col, original position, weight); position keeps "first wins" stable
        for (pos, &(i, j, w)) in edges.iter().enumerate() {
            entries[fill[i]] = (j, pos, w);
            fill[i] += 1;
            if i != j {
                entries[fill[j]] = (i, pos, w);
                fill[j] += 1;
            }
        }
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_offsets.push(0);
        for i in 0..num_nodes {
            let row = &mut entries[offsets[i]..offsets[i + 1]];
            row.sort_unstable_by_key(|&(c, pos, _)| (c, pos));
            let mut last = usize::MAX;
            for &(c, _, w) in row.iter() {
                if c != last {
                    col_indices.push(c);
                    values.push(w);
                    last = c;
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseGraph {
            num_nodes,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles a graph from rows that are already canonical (sorted,
    /// deduplicated, symmetric).
    pub(crate) fn from_canonical_parts(
        num_nodes: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_offsets.len(), num_nodes + 1);
        debug_assert_eq!(col_indices.len(), values.len());
        SparseGraph {
            num_nodes,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Directed nonzero count.
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn self_loop_count(&self) -> usize {
        (0..self.num_nodes)
            .filter(|&i| self.neighbors(i).binary_search(&i).is_ok())
            .count()
    }

    /// Undirected edge count M, self-loops excluded.
    pub fn num_edges(&self) -> usize {
        (self.nnz() - self.self_loop_count()) / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Neighbor count excluding a self-loop.
    pub fn degree(&self, i: usize) -> usize {
        let nb = self.neighbors(i);
        nb.len() - usize::from(nb.binary_search(&i).is_ok())
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|i| self.degree(i)).collect()
    }

    /// Row sums of the adjacency values (self-loop weights included).
    pub fn weighted_degrees(&self) -> Vec<f64> {
        (0..self.num_nodes)
            .map(|i| self.row_values(i).iter().sum())
            .collect()
    }

    /// Undirected edges `(i, j, w)` with `i <= j`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_nodes).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .zip(self.row_values(i))
                .filter(move |(&j, _)| j >= i)
                .map(move |(&j, &w)| (i, j, w))
        })
    }

    pub fn is_connected(&self) -> bool {
        if self.num_nodes == 0 {
            return true;
        }
        let mut seen = vec![false; self.num_nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.num_nodes
    }

    /// Two-coloring by BFS over every component. A self-loop makes the graph
    /// non-bipartite.
    pub fn is_bipartite(&self) -> bool {
        let mut color = vec![u8::MAX; self.num_nodes];
        for start in 0..self.num_nodes {
            if color[start] != u8::MAX {
                continue;
            }
            color[start] = 0;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if color[v] == u8::MAX {
                        color[v] = 1 - color[u];
                        queue.push_back(v);
                    } else if color[v] == color[u] {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<SparseGraph> {
        check_permutation(perm, self.num_nodes)?;
        let mut inverse = vec![0usize; perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            inverse[new] = old;
        }
        let mut row_offsets = Vec::with_capacity(self.num_nodes + 1);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_offsets.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for &old in &inverse {
            row.clear();
            row.extend(
                self.neighbors(old)
                    .iter()
                    .zip(self.row_values(old))
                    .map(|(&j, &w)| (perm[j], w)),
            );
            row.sort_unstable_by_key(|&(j, _)| j);
            for &(j, w) in &row {
                col_indices.push(j);
                values.push(w);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseGraph::from_canonical_parts(
            self.num_nodes,
            row_offsets,
            col_indices,
            values,
        ))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.num_nodes, self.num_nodes));
        for i in 0..self.num_nodes {
            for (&j, &w) in self.neighbors(i).iter().zip(self.row_values(i)) {
                a[[i, j]] = w;
            }
        }
        a
    }

    /// Parses the edge-list text format: two whitespace-separated 0-based
    /// indices per line, `#` comments and blank lines ignored. When
    /// `num_nodes` is `None` it is inferred as the largest index plus one.
    pub fn parse_edge_list<R: BufRead>(reader: R, num_nodes: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        let mut lines = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.split_whitespace();
            let mut next = |what: &str| -> Result<usize> {
                let tok = parts.next().ok_or_else(|| Error::Parse {
                    line: k + 1,
                    message: format!("missing {what} endpoint"),
                })?;
                tok.parse().map_err(|_| Error::Parse {
                    line: k + 1,
                    message: format!("invalid node index {tok:?}"),
                })
            };
            let i = next("first")?;
            let j = next("second")?;
            edges.push((i, j));
            lines.push(k + 1);
        }
        let n = match num_nodes {
            Some(n) => n,
            None => edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0),
        };
        SparseGraph::from_edge_list(&edges, n).map_err(|e| match e {
            Error::IndexOutOfRange {
                line,
                index,
                num_nodes,
            } => Error::IndexOutOfRange {
                line: lines[line - 1],
                index,
                num_nodes,
            },
            other => other,
        })
    }

    pub fn read_edge_list(path: &Path, num_nodes: Option<usize>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse_edge_list(BufReader::new(file), num_nodes)
    }

    /// Writes one `i j` line per undirected edge, preceded by a node-count
    /// comment.
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# nodes {}", self.num_nodes)?;
        for (i, j, _) in self.edges() {
            writeln!(out, "{i} {j}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads the `# nodes N` header written by [`SparseGraph::write_edge_list`].
pub fn edge_list_node_count(path: &Path) -> Result<Option<usize>> {
    let file = std::fs::File::open(path)?;
    for line in BufReader::new(file).lines() {
        let line = line?;
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("# nodes") {
            return Ok(rest.trim().parse().ok());
        }
        if !t.is_empty() && !t.starts_with('#') {
            break;
        }
    }
    Ok(None)
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::InvalidPermutation(format!(
            "length {} for {n} nodes",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidPermutation(format!(
                "value {p} out of range or repeated"
            )));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Erdos-Renyi G(n, p) without self-loops, sampled by geometric skipping so
/// the cost is proportional to the number of edges drawn.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> SparseGraph {
    let mut rng = rng::stream(seed, 0);
    let mut edges = Vec::new();
    if p > 0.0 && n > 1 {
        if p >= 1.0 {
            for i in 0..n {
                for j in i + 1..n {
                    edges.push((i, j));
                }
            }
        } else {
            let log_q = (1.0 - p).ln();
            // walk the strict lower triangle row by row: pair (v, w), w < v
            let mut v: usize = 1;
            let mut w: i64 = -1;
            while v < n {
                let r: f64 = rng.random();
                let skip = ((1.0 - r).ln() / log_q).floor() as i64;
                w += 1 + skip;
                while v < n && w >= v as i64 {
                    w -= v as i64;
                    v += 1;
                }
                if v < n {
                    edges.push((w as usize, v));
                }
            }
        }
    }
    SparseGraph::from_edge_list(&edges, n).expect("indices in range by construction")
}

/// Connected Erdos-Renyi sample: redraws with successive seeds until connected.
pub fn connected_erdos_renyi(n: usize, p: f64, seed: u64) -> SparseGraph {
    let mut s = seed;
    loop {
        let g = erdos_renyi(n, p, s);
        if g.is_connected() {
            return g;
        }
        s = s.wrapping_add(0x9E37_79B9);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_edge_is_stored_twice() {
        let g = SparseGraph::from_edge_list(&[(0, 1)], 2).unwrap();
        assert_eq!(g.nnz(), 2);
        assert_eq!(g.row_offsets(), &[0, 1, 2]);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn duplicates_and_orientations_collapse() {
        let g = SparseGraph::from_edge_list(&[(0, 1), (1, 0), (0, 1)], 2).unwrap();
        assert_eq!(g.nnz(), 2);
    }

    #[test]
    fn triangle_rows_have_two_neighbors() {
        let g = SparseGraph::from_edge_list(&[(0, 1), (1, 2), (0, 2)], 3).unwrap();
        assert_eq!(g.nnz(), 6);
        for i in 0..3 {
            assert_eq!(g.neighbors(i).len(), 2);
        }
    }

    #[test]
    fn self_loops_count_once() {
        let g = SparseGraph::from_edge_list(&[(0, 0), (0, 1)], 2).unwrap();
        assert_eq!(g.nnz(), 3);
        assert_eq!(g.self_loop_count(), 1);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.degree(0), 1);
        assert!(!g.is_bipartite());
    }

    #[test]
    fn out_of_range_reports_position() {
        let err = SparseGraph::from_edge_list(&[(0, 1), (1, 5)], 3).unwrap_err();
        match err {
            Error::IndexOutOfRange { line, index, .. } => {
                assert_eq!(line, 2);
                assert_eq!(index, 5);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn parser_reports_file_line_numbers() {
        let text = "# header\n0 1\n\n1 2\n2 9\n";
        let err = SparseGraph::parse_edge_list(text.as_bytes(), Some(3)).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { line: 5, index: 9, .. }));
        let err = SparseGraph::parse_edge_list("0 x\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let g = SparseGraph::parse_edge_list("# c\n0 1\n1 2 \n".as_bytes(), None).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 2);
    }

    #[test]
    fn connectivity_and_bipartiteness() {
        let p3 = SparseGraph::from_edge_list(&[(0, 1), (1, 2)], 3).unwrap();
        assert!(p3.is_connected());
        assert!(p3.is_bipartite());
        let tri = SparseGraph::from_edge_list(&[(0, 1), (1, 2), (0, 2)], 3).unwrap();
        assert!(!tri.is_bipartite());
        let split = SparseGraph::from_edge_list(&[(0, 1), (2, 3)], 4).unwrap();
        assert!(!split.is_connected());
    }

    #[test]
    fn identity_permutation_is_a_no_op() {
        let g = SparseGraph::from_edge_list(&[(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)], 4).unwrap();
        let id: Vec<usize> = (0..4).collect();
        assert_eq!(g.permute(&id).unwrap(), g);
    }

    #[test]
    fn rejects_non_bijective_permutation() {
        let g = SparseGraph::from_edge_list(&[(0, 1)], 3).unwrap();
        assert!(g.permute(&[0, 0, 1]).is_err());
        assert!(g.permute(&[0, 1]).is_err());
        assert!(g.permute(&[0, 1, 3]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let g = erdos_renyi(30, 0.2, 4);
        g.write_edge_list(&path).unwrap();
        let n = edge_list_node_count(&path).unwrap();
        assert_eq!(n, Some(30));
        let back = SparseGraph::read_edge_list(&path, n).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn erdos_renyi_edge_count_is_plausible() {
        let n = 2000;
        let p = 0.01;
        let g = erdos_renyi(n, p, 11);
        let pairs = (n * (n - 1) / 2) as f64;
        let mean = pairs * p;
        let sd = (pairs * p * (1.0 - p)).sqrt();
        assert!((g.num_edges() as f64 - mean).abs() < 4.0 * sd);
        assert_eq!(g.self_loop_count(), 0);
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..15).prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec((0..n, 0..n), 0..40),
            )
        })
    }

    proptest! {
        #[test]
        fn construction_is_canonical((n, edges) in arb_graph()) {
            let g = SparseGraph::from_edge_list(&edges, n).unwrap();
            let a = g.to_dense();
            for i in 0..n {
                let nb = g.neighbors(i);
                prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
                for j in 0..n {
                    prop_assert_eq!(a[[i, j]], a[[j, i]]);
                }
            }
            let loops = edges.iter().filter(|(i, j)| i == j).map(|&(i, _)| i)
                .collect::<std::collections::BTreeSet<_>>().len();
            prop_assert_eq!(g.nnz(), 2 * g.num_edges() + loops);
        }

        #[test]
        fn permutation_relabels_adjacency((n, edges) in arb_graph(), seed in 0u64..1000) {
            let g = SparseGraph::from_edge_list(&edges, n).unwrap();
            let perm = rng::permutation(&mut rng::stream(seed, 0), n);
            let h = g.permute(&perm).unwrap();
            let (a, b) = (g.to_dense(), h.to_dense());
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(a[[i, j]], b[[perm[i], perm[j]]]);
                }
            }
            prop_assert_eq!(g.is_bipartite(), h.is_bipartite());
            prop_assert_eq!(g.is_connected(), h.is_connected());
        }
    }
}
