use ndarray::{concatenate, Array2, Axis};

use super::lanczos::{top_eigenpairs, SolverOptions};
use super::transform::{apply_f, FMode};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::nn::{gin_forward, Arch, Model};
use crate::structure::{renormalized_adjacency, StructureMatrix};

/// Minimum eigenvalue separation for the eigenbasis to be unique up to sign.
pub const EQUIVARIANCE_GAP: f64 = 1e-6;

/// Angle in radians between the lines spanned by `a` and `b`.
pub fn principal_angle(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    let perp = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let r = x / na - dot * y / nb;
            r * r
        })
        .sum::<f64>()
        .sqrt();
    perp.atan2(dot.abs())
}

/// Smooths `x` by `l` applications of the renormalized adjacency and returns
/// each column's angle to the dominant eigenvector.
pub fn sgc_limit_check(g: &SparseGraph, x: &Array2<f64>, l: usize) -> Result<Vec<f64>> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let m = renormalized_adjacency(g);
    let q1 = top_eigenpairs(&m, &SolverOptions::new(1))?;
    let q1: Vec<f64> = q1.vectors.column(0).to_vec();
    let u = crate::nn::sgc_propagate(&m, x, l)?;
    Ok(u.columns().into_iter().map(|c| principal_angle(&c.to_vec(), &q1)).collect())
}

/// First adjacent pair among the top `d` eigenvalues (plus the boundary
/// with eigenvalue `d + 1`, compared by magnitude) closer than `threshold`.
pub fn top_gap_violation(values: &[f64], d: usize, threshold: f64) -> Option<(f64, f64, f64)> {
    let top = &values[..d.min(values.len())];
    let mut sorted = top.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for w in sorted.windows(2) {
        if w[0] - w[1] <= threshold {
            return Some((w[0], w[1], w[0] - w[1]));
        }
    }
    if d > 0 && values.len() > d {
        let (a, b) = (values[d - 1], values[d]);
        if a.abs() - b.abs() <= threshold {
            return Some((a, b, a.abs() - b.abs()));
        }
    }
    None
}

fn eigen_input(m: &StructureMatrix, x: Option<&Array2<f64>>, d: usize, f: FMode) -> Result<(Array2<f64>, Vec<f64>)> {
    let want = (d + 1).min(m.dim());
    let basis = top_eigenpairs(m, &SolverOptions::new(want))?;
    let values = basis.eigenvalues.clone();
    let q = apply_f(&basis, f);
    let q = q.slice(ndarray::s![.., ..d]).to_owned();
    let h0 = match x {
        Some(x) => concatenate(Axis(1), &[x.view(), q.view()]).map_err(|e| Error::Dimension(e.to_string()))?,
        None => q,
    };
    Ok((h0, values))
}

/// Per-node representations of every layer, including the input.
fn node_layers(model: &Model, g: &SparseGraph, m: &StructureMatrix, h0: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
    match model.arch {
        Arch::Gin => {
            let f = gin_forward(g, h0, model, None)?;
            Ok(vec![h0.clone(), f.aggregated, f.hidden])
        }
        _ => Ok(model.forward_nodes(m, h0, None)?.layers),
    }
}

/// Runs the eigenbasis-augmented model on `g` and on `g` relabeled by
/// `perm`, returning the largest entrywise deviation between matching node
/// rows over all layers. Uses `f = |x|`; rejects graphs whose top `d`
/// eigenvalues are not separated by [`EQUIVARIANCE_GAP`].
pub fn equivariance_check(
    g: &SparseGraph,
    x: Option<&Array2<f64>>,
    perm: &[usize],
    d: usize,
    model: &Model,
) -> Result<f64> {
    equivariance_check_with(g, x, perm, d, model, FMode::Abs)
}

/// [`equivariance_check`] with an explicit post-transform, used to exhibit
/// the sign-flip failure of the identity map.
pub fn equivariance_check_with(
    g: &SparseGraph,
    x: Option<&Array2<f64>>,
    perm: &[usize],
    d: usize,
    model: &Model,
    f: FMode,
) -> Result<f64> {
    let n = g.num_nodes();
    crate::graph::check_permutation(perm, n)?;
    if let Some(x) = x {
        if x.nrows() != n {
            return Err(Error::Dimension(format!("features have {} rows for {n} nodes", x.nrows())));
        }
    }
    let gp = g.permute(perm)?;
    let xp = x.map(|x| {
        let mut out = Array2::zeros(x.dim());
        for (i, &p) in perm.iter().enumerate() {
            out.row_mut(p).assign(&x.row(i));
        }
        out
    });

    let m = renormalized_adjacency(g);
    let mp = renormalized_adjacency(&gp);
    let (h0, values) = eigen_input(&m, x, d, f)?;
    if let Some((first, second, gap)) = top_gap_violation(&values, d, EQUIVARIANCE_GAP) {
        return Err(Error::EigenvalueGap {
            first,
            second,
            gap,
            threshold: EQUIVARIANCE_GAP,
        });
    }
    let (hp0, _) = eigen_input(&mp, xp.as_ref(), d, f)?;

    let a = node_layers(model, g, &m, &h0)?;
    let b = node_layers(model, &gp, &mp, &hp0)?;
    let mut worst = 0.0f64;
    for (ha, hb) in a.iter().zip(&b) {
        for (i, &p) in perm.iter().enumerate() {
            for (u, v) in ha.row(i).iter().zip(hb.row(p).iter()) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn fixed_point_has_zero_angle() {
        let g = crate::graph::connected_erdos_renyi(30, 0.2, 1);
        let m = renormalized_adjacency(&g);
        let q = top_eigenpairs(&m, &SolverOptions::new(1)).unwrap().vectors;
        for l in [0, 1, 7] {
            let angles = sgc_limit_check(&g, &q, l).unwrap();
            assert!(angles[0] < 1e-8, "L={l}: {angles:?}");
        }
    }

    #[test]
    fn triangle_converges_to_constant() {
        let g = SparseGraph::from_edge_list(&[(0, 1), (1, 2), (0, 2)], 3).unwrap();
        let x = ndarray::array![[1.0], [0.0], [0.0]];
        let angle = sgc_limit_check(&g, &x, 50).unwrap()[0];
        assert!(angle < 1e-10);
        let direct = principal_angle(&[1.0, 1.0, 1.0], &[1.0 / 3.0; 3]);
        assert!(direct < 1e-15);
    }

    #[test]
    fn disconnected_is_rejected() {
        let g = SparseGraph::from_edge_list(&[(0, 1), (2, 3)], 4).unwrap();
        let err = sgc_limit_check(&g, &Array2::ones((4, 1)), 3).unwrap_err();
        assert!(matches!(err, Error::Disconnected));
    }

    fn path4() -> SparseGraph {
        SparseGraph::from_edge_list(&[(0, 1), (1, 2), (2, 3)], 4).unwrap()
    }

    #[test]
    fn identity_permutation_is_exact() {
        let model = Model::gcn(&[2, 4, 2], false, 3).unwrap();
        let dev = equivariance_check(&path4(), None, &[0, 1, 2, 3], 2, &model).unwrap();
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn path_with_abs_is_equivariant() {
        let model = Model::gcn(&[3, 4, 2], false, 3).unwrap();
        let mut r = rng::stream(5, 0);
        let x = Array2::from_shape_fn((4, 1), |_| r.random_range(-1.0..1.0));
        for seed in 0..5 {
            let perm = rng::permutation(&mut rng::stream(seed, 1), 4);
            let dev = equivariance_check(&path4(), Some(&x), &perm, 2, &model).unwrap();
            assert!(dev < 1e-8, "perm {perm:?}: {dev}");
        }
    }

    #[test]
    fn degenerate_spectrum_is_rejected() {
        let c6 = SparseGraph::from_edge_list(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)], 6).unwrap();
        let model = Model::gcn(&[2, 2], false, 0).unwrap();
        let err = equivariance_check(&c6, None, &[1, 2, 3, 4, 5, 0], 2, &model).unwrap_err();
        assert!(matches!(err, Error::EigenvalueGap { .. }));
    }

    #[test]
    fn gap_rule() {
        assert!(top_gap_violation(&[1.0, 0.5, 0.2], 2, 1e-6).is_none());
        assert!(top_gap_violation(&[1.0, 0.5, -0.5], 2, 1e-6).is_some());
        assert!(top_gap_violation(&[1.0, 1.0 - 1e-9, 0.2], 2, 1e-6).is_some());
        assert!(top_gap_violation(&[1.0, -1.0, 0.2], 2, 1e-6).is_none());
    }
}
