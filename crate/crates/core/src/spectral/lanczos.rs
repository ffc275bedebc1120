//! Thick-restart Lanczos with full reorthogonalization for the eigenpairs of
//! largest magnitude.
//!
//! Each step costs one operator application plus a projection against the
//! current basis, so a solve costs O(T (nnz + N m)) for T steps and Krylov
//! dimension m. Restarts keep the leading Ritz vectors and the residual
//! direction. A single start vector only ever sees one direction of a
//! degenerate eigenspace, so after the first pass the solver re-runs on the
//! operator deflated by everything found so far and merges any eigenvalue
//! that outranks the current d-th one.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{canonical_order, fix_sign, from_columns, EigenBasis, SymmetricOperator};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Number of eigenpairs.
    pub d: usize,
    /// Residual tolerance `||A q - λ q||`.
    pub tol: f64,
    /// Budget of operator applications.
    pub max_iters: usize,
    pub seed: u64,
    /// Krylov dimension; defaults to `max(2d + 10, 40)` capped at N.
    pub krylov_dim: Option<usize>,
}

impl SolverOptions {
    pub fn new(d: usize) -> Self {
        SolverOptions {
            d,
            tol: 1e-10,
            max_iters: 200_000,
            seed: 0,
            krylov_dim: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }
}

/// Top-d eigenpairs by magnitude. On budget exhaustion the best available
/// pairs are returned with `converged == false` and honest residuals.
pub fn top_eigenpairs<A: SymmetricOperator + ?Sized>(op: &A, opts: &SolverOptions) -> Result<EigenBasis> {
    top_eigenpairs_with(Exec::default(), op, opts)
}

pub fn top_eigenpairs_with<A: SymmetricOperator + ?Sized>(
    exec: Exec,
    op: &A,
    opts: &SolverOptions,
) -> Result<EigenBasis> {
    let n = op.dim();
    let d = opts.d;
    if d == 0 || d > n {
        return Err(Error::TooManyEigenpairs { requested: d, dim: n });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let m = opts
        .krylov_dim
        .unwrap_or_else(|| (2 * d + 10).max(40))
        .max(d + 1)
        .min(n);
    let mut rng = rng::stream(opts.seed, 0);
    let mut budget = Budget {
        used: 0,
        max: opts.max_iters,
    };

    let first = thick_restart(exec, op, d, m, &[], opts.tol, &mut budget, &mut rng);
    let mut converged = first.converged;
    let mut pairs: Vec<(f64, Vec<f64>)> = first.values.into_iter().zip(first.vectors).collect();
    truncate_top(&mut pairs, d);

    let mut want = 1;
    let mut exhausted = first.exhausted;
    while converged && !exhausted && budget.used < budget.max {
        let avail = n - pairs.len();
        if avail == 0 {
            break;
        }
        let locked: Vec<f64> = pairs.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        let w = want.min(avail);
        let mv = m.min(avail).max(w);
        let pass = thick_restart(exec, op, w, mv, &locked, opts.tol, &mut budget, &mut rng);
        if !pass.converged {
            converged = false;
            break;
        }
        exhausted = pass.exhausted;
        let threshold = pairs.last().map_or(0.0, |(v, _)| v.abs()) + opts.tol;
        let before = pairs.len();
        pairs.extend(
            pass.values
                .into_iter()
                .zip(pass.vectors)
                .filter(|(v, _)| v.abs() > threshold),
        );
        if pairs.len() == before {
            break;
        }
        truncate_top(&mut pairs, d);
        want = (2 * want).min(d);
    }

    finish(exec, op, pairs, opts.tol, converged, budget.used)
}

struct Budget {
    used: usize,
    max: usize,
}

struct PassResult {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    converged: bool,
    /// The Krylov basis filled the whole available space; every pair is exact.
    exhausted: bool,
}

fn truncate_top(pairs: &mut Vec<(f64, Vec<f64>)>, d: usize) {
    pairs.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
    pairs.truncate(d);
}

/// Recomputes Rayleigh quotients and true residuals, applies the sign
/// convention and the canonical ordering.
fn finish<A: SymmetricOperator + ?Sized>(
    exec: Exec,
    op: &A,
    pairs: Vec<(f64, Vec<f64>)>,
    tol: f64,
    converged: bool,
    iterations: usize,
) -> Result<EigenBasis> {
    let n = op.dim();
    let mut values = Vec::with_capacity(pairs.len());
    let mut vectors = Vec::with_capacity(pairs.len());
    let mut residuals = Vec::with_capacity(pairs.len());
    let mut av = vec![0.0; n];
    for (_, mut v) in pairs {
        let nv = par::norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        fix_sign(&mut v);
        op.apply(exec, &v, &mut av);
        let lambda = par::dot(&v, &av);
        let r = av
            .iter()
            .zip(&v)
            .map(|(a, x)| (a - lambda * x).powi(2))
            .sum::<f64>()
            .sqrt();
        values.push(lambda);
        vectors.push(v);
        residuals.push(r);
    }
    let order = canonical_order(&values, &vectors);
    let values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let residuals: Vec<f64> = order.iter().map(|&i| residuals[i]).collect();
    let cols: Vec<Vec<f64>> = order.iter().map(|&i| std::mem::take(&mut vectors[i])).collect();
    let converged = converged && residuals.iter().all(|&r| r < tol);
    Ok(EigenBasis {
        eigenvalues: values,
        vectors: from_columns(&cols, n),
        residuals,
        iterations_used: iterations,
        converged,
    })
}

/// One thick-restart Lanczos run on the operator restricted to the
/// orthogonal complement of `locked` (row-major, N columns).
#[allow(clippy::too_many_arguments)]
fn thick_restart<A: SymmetricOperator + ?Sized>(
    exec: Exec,
    op: &A,
    want: usize,
    m: usize,
    locked: &[f64],
    tol: f64,
    budget: &mut Budget,
    rng: &mut Rng,
) -> PassResult {
    let n = op.dim();
    let avail = n - locked.len() / n.max(1);
    let m = m.min(avail);
    let want = want.min(m);
    let mut basis = vec![0.0; (m + 1) * n];
    let mut t = Array2::<f64>::zeros((m, m));
    let mut w = vec![0.0; n];
    let mut coeffs = vec![0.0; m + 1];
    let mut scratch = vec![0.0; locked.len() / n.max(1)];

    random_unit_vector(exec, rng, locked, &[], n, &mut basis[..n]);

    let mut kept = 0;
    loop {
        let mut dim = m;
        let mut exhausted = false;
        let mut beta = 0.0;
        for j in kept..m {
            let (head, tail) = basis.split_at_mut((j + 1) * n);
            op.apply(exec, &head[j * n..], &mut w);
            budget.used += 1;
            let norm_before = par::norm(&w);
            if !locked.is_empty() {
                orthogonalize(exec, locked, n, &mut w, &mut scratch);
            }
            let h = &mut coeffs[..=j];
            beta = if j > kept {
                recurrence_then_orthogonalize(exec, head, n, j, &mut w, h)
            } else {
                orthogonalize(exec, head, n, &mut w, h)
            };
            for (i, &hi) in h.iter().enumerate() {
                t[[i, j]] = hi;
                t[[j, i]] = hi;
            }
            if j + 1 == avail {
                exhausted = true;
                dim = j + 1;
                beta = 0.0;
                break;
            }
            let next = &mut tail[..n];
            if beta <= 1e-12 * norm_before {
                // invariant subspace reached; continue in a fresh direction
                random_unit_vector(exec, rng, locked, head, n, next);
                beta = 0.0;
            } else {
                for (x, &y) in next.iter_mut().zip(&w) {
                    *x = y / beta;
                }
            }
        }

        let (theta, y) = small_eigen(t.slice(ndarray::s![..dim, ..dim]));
        let order = magnitude_order(&theta);
        let top = want.min(dim);
        let resid = |i: usize| beta * y[[dim - 1, i]].abs();
        let all_conv = order[..top].iter().all(|&i| resid(i) < tol);
        let out_of_budget = budget.used >= budget.max;

        if exhausted || all_conv || out_of_budget {
            let count = if exhausted { dim } else { top };
            let sel = &order[..count];
            let vecs = ritz_vectors(&y, sel, &basis[..dim * n], n);
            return PassResult {
                values: sel.iter().map(|&i| theta[i]).collect(),
                vectors: vecs.rows().into_iter().map(|r| r.to_vec()).collect(),
                converged: exhausted || all_conv,
                exhausted,
            };
        }

        let keep = (top + (dim - top) / 2).clamp(top, dim - 1);
        let sel = &order[..keep];
        let ritz = ritz_vectors(&y, sel, &basis[..dim * n], n);
        let residual_dir: Vec<f64> = basis[dim * n..(dim + 1) * n].to_vec();
        basis[..keep * n].copy_from_slice(ritz.as_slice().expect("standard layout"));
        basis[keep * n..(keep + 1) * n].copy_from_slice(&residual_dir);
        t.fill(0.0);
        for (k, &i) in sel.iter().enumerate() {
            t[[k, k]] = theta[i];
        }
        kept = keep;
    }
}

/// Orthogonalizes `w` against the rows of `rows` (classical Gram-Schmidt with
/// a second pass when cancellation is detected). Accumulates the projection
/// coefficients into `coeffs` and returns the final norm of `w`.
fn orthogonalize(exec: Exec, rows: &[f64], n: usize, w: &mut [f64], coeffs: &mut [f64]) -> f64 {
    let k = rows.len() / n;
    let coeffs = &mut coeffs[..k];
    let norm0 = par::norm(w);
    if k == 0 {
        return norm0;
    }
    par::row_dots(exec, rows, n, w, coeffs);
    par::subtract_combination(exec, rows, n, coeffs, w);
    let mut norm1 = par::norm(w);
    if norm1 < std::f64::consts::FRAC_1_SQRT_2 * norm0 {
        let mut again = vec![0.0; k];
        par::row_dots(exec, rows, n, w, &mut again);
        par::subtract_combination(exec, rows, n, &again, w);
        for (c, a) in coeffs.iter_mut().zip(&again) {
            *c += a;
        }
        norm1 = par::norm(w);
    }
    norm1
}

/// Removes the two components the three-term recurrence predicts, then runs
/// one full Gram-Schmidt pass to catch what rounding left behind. The
/// cancellation test is measured after the cheap local step, so the second
/// full pass is only paid when orthogonality has really degraded.
fn recurrence_then_orthogonalize(exec: Exec, head: &[f64], n: usize, j: usize, w: &mut [f64], coeffs: &mut [f64]) -> f64 {
    coeffs.fill(0.0);
    for i in [j, j - 1] {
        let q = &head[i * n..(i + 1) * n];
        let c = par::dot(q, w);
        for (x, &v) in w.iter_mut().zip(q) {
            *x -= c * v;
        }
        coeffs[i] += c;
    }
    let mut fix = vec![0.0; j + 1];
    let norm = orthogonalize(exec, head, n, w, &mut fix);
    for (c, f) in coeffs.iter_mut().zip(&fix) {
        *c += f;
    }
    norm
}

fn random_unit_vector(exec: Exec, rng: &mut Rng, locked: &[f64], basis: &[f64], n: usize, out: &mut [f64]) {
    let mut scratch = vec![0.0; (locked.len() + basis.len()) / n.max(1) + 1];
    loop {
        for x in out.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        for rows in [locked, basis] {
            if !rows.is_empty() {
                for _ in 0..2 {
                    orthogonalize(exec, rows, n, out, &mut scratch);
                }
            }
        }
        let nrm = par::norm(out);
        if nrm > 1e-8 {
            out.iter_mut().for_each(|x| *x /= nrm);
            return;
        }
    }
}

fn small_eigen(t: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
    let k = t.nrows();
    let m = DMatrix::from_fn(k, k, |i, j| 0.5 * (t[[i, j]] + t[[j, i]]));
    let eig = SymmetricEigen::new(m);
    let vecs = Array2::from_shape_fn((k, k), |(i, j)| eig.eigenvectors[(i, j)]);
    (eig.eigenvalues.iter().copied().collect(), vecs)
}

fn magnitude_order(theta: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..theta.len()).collect();
    idx.sort_by(|&a, &b| {
        theta[b]
            .abs()
            .total_cmp(&theta[a].abs())
            .then_with(|| theta[b].total_cmp(&theta[a]))
    });
    idx
}

/// Rows of the result are `sum_i y[i, sel[k]] * basis_i`.
fn ritz_vectors(y: &Array2<f64>, sel: &[usize], basis: &[f64], n: usize) -> Array2<f64> {
    let dim = basis.len() / n;
    let b = ArrayView2::from_shape((dim, n), basis).expect("basis shape");
    let ysel = Array2::from_shape_fn((sel.len(), dim), |(k, i)| y[[i, sel[k]]]);
    ysel.dot(&b)
}
