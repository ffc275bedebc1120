//! Masked softmax cross-entropy with L2 penalty, and the hand-written
//! reverse pass for each architecture.

use std::borrow::Borrow;

use ndarray::{Array1, Array2, Axis};

use super::forward::{GinForward, NodeForward};
use super::model::{Arch, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Array2<f64>>,
    pub epsilon: f64,
}

impl Grads {
    pub fn zeros_like(model: &Model) -> Grads {
        Grads {
            weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            epsilon: 0.0,
        }
    }
}

/// Mean cross-entropy of `logits` rows listed in `mask`, and its gradient
/// with respect to the full logits matrix.
pub fn masked_cross_entropy(logits: &Array2<f64>, labels: &[usize], mask: &[usize]) -> Result<(f64, Array2<f64>)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let classes = logits.ncols();
    let scale = 1.0 / mask.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.dim());
    for &i in mask {
        let y = labels[i];
        if y >= classes {
            return Err(Error::Dimension(format!("label {y} with {classes} classes")));
        }
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
        loss += max + sum.ln() - row[y];
        let mut g = grad.row_mut(i);
        for (c, x) in row.iter().enumerate() {
            g[c] = (x - max).exp() / sum * scale;
        }
        g[y] -= scale;
    }
    Ok((loss * scale, grad))
}

fn l2_term(model: &Model, weight_decay: f64) -> f64 {
    0.5 * weight_decay * model.squared_norm()
}

/// Loss and gradients for a node-level model (GCN, SGC, MLP).
pub fn loss_and_grads(
    model: &Model,
    fwd: &NodeForward<'_>,
    labels: &[usize],
    mask: &[usize],
    weight_decay: f64,
) -> Result<(f64, Grads)> {
    if model.arch == Arch::Gin {
        return Err(Error::Config("use graph_loss_and_grads for GIN".into()));
    }
    let (ce, mut delta) = masked_cross_entropy(fwd.logits(), labels, mask)?;
    let mut grads = Grads::zeros_like(model);
    for l in (0..model.weights.len()).rev() {
        let cache = &fwd.caches[l];
        let delta_out = delta;
        let delta_pre = if cache.relu {
            let mut d = delta_out.clone();
            d.zip_mut_with(&cache.pre, |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            d
        } else {
            delta_out.clone()
        };
        let w = &model.weights[l];
        grads.weights[l] = cache.operand.t().dot(&delta_pre);
        grads.weights[l].scaled_add(weight_decay, w);
        if l == 0 {
            break;
        }
        let delta_operand = delta_pre.dot(&w.t());
        let mut delta_in = match (cache.propagate, fwd.structure) {
            (true, Some(m)) => m.spmm(delta_operand.view())?,
            _ => delta_operand,
        };
        if let Some(mask) = &cache.mask {
            delta_in *= mask;
        }
        if cache.residual {
            delta_in += &delta_out;
        }
        delta = delta_in;
    }
    Ok((ce + l2_term(model, weight_decay), grads))
}

/// Adds the gradient of `dlogits · logits` for one graph into `grads`.
pub fn gin_backward(model: &Model, fwd: &GinForward, dlogits: &Array1<f64>, grads: &mut Grads) {
    let w1 = &model.weights[0];
    let w2 = &model.weights[1];
    let outer = fwd
        .pooled_dropped
        .view()
        .insert_axis(Axis(1))
        .dot(&dlogits.view().insert_axis(Axis(0)));
    grads.weights[1] += &outer;
    let mut d_pooled = w2.dot(dlogits);
    if let Some(m) = &fwd.pool_mask {
        d_pooled *= m;
    }
    let mut d_pre = Array2::from_shape_fn(fwd.pre.dim(), |(_, c)| d_pooled[c]);
    d_pre.zip_mut_with(&fwd.pre, |d, &z| {
        if z <= 0.0 {
            *d = 0.0
        }
    });
    grads.weights[0] += &fwd.aggregated.t().dot(&d_pre);
    let d_agg = d_pre.dot(&w1.t());
    grads.epsilon += (&d_agg * &fwd.input).sum();
}

/// Loss and gradients for GIN over the graphs listed in `mask`.
pub fn graph_loss_and_grads<F: Borrow<GinForward>>(
    model: &Model,
    forwards: &[F],
    labels: &[usize],
    mask: &[usize],
    weight_decay: f64,
) -> Result<(f64, Grads)> {
    if model.arch != Arch::Gin {
        return Err(Error::Config("graph_loss_and_grads needs a GIN model".into()));
    }
    let classes = model.output_dim();
    let mut logits = Array2::zeros((forwards.len(), classes));
    for (i, f) in forwards.iter().enumerate() {
        logits.row_mut(i).assign(&f.borrow().logits);
    }
    let (ce, dlogits) = masked_cross_entropy(&logits, labels, mask)?;
    let mut grads = Grads::zeros_like(model);
    for &i in mask {
        gin_backward(model, forwards[i].borrow(), &dlogits.row(i).to_owned(), &mut grads);
    }
    for (gw, w) in grads.weights.iter_mut().zip(&model.weights) {
        gw.scaled_add(weight_decay, w);
    }
    Ok((ce + l2_term(model, weight_decay), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward::{gin_forward, Dropout};
    use crate::graph::SparseGraph;
    use crate::rng;
    use crate::structure::renormalized_adjacency;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = Array2::zeros((4, 5));
        let (loss, _) = masked_cross_entropy(&logits, &[0, 1, 2, 3], &[0, 2, 3]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn saturated_softmax_leaves_only_l2() {
        let logits = array![[1e4, 0.0, 0.0]];
        let (loss, _) = masked_cross_entropy(&logits, &[0], &[0]).unwrap();
        assert!(loss.abs() < 1e-300);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let logits = Array2::zeros((2, 2));
        assert!(matches!(masked_cross_entropy(&logits, &[0, 1], &[]), Err(Error::EmptyMask)));
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::stream(seed, 7);
        Array2::from_shape_fn((rows, cols), |_| r.random_range(-1.0..1.0))
    }

    /// Central differences for every weight entry (and epsilon), compared
    /// with the analytic gradient.
    fn check_gradients(model: &Model, loss: impl Fn(&Model) -> f64, analytic: &Grads, check_eps: bool) {
        let h = 1e-5;
        let mut worst = 0.0f64;
        for l in 0..model.weights.len() {
            for idx in 0..model.weights[l].len() {
                let (r, c) = (idx / model.weights[l].ncols(), idx % model.weights[l].ncols());
                let mut plus = model.clone();
                plus.weights[l][[r, c]] += h;
                let mut minus = model.clone();
                minus.weights[l][[r, c]] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = analytic.weights[l][[r, c]];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
                worst = worst.max(rel);
            }
        }
        if check_eps {
            let mut plus = model.clone();
            plus.epsilon += h;
            let mut minus = model.clone();
            minus.epsilon -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (fd - analytic.epsilon).abs() / fd.abs().max(analytic.epsilon.abs()).max(1e-7);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    fn node_setup(n: usize, seed: u64) -> (SparseGraph, Array2<f64>, Vec<usize>, Vec<usize>) {
        let g = crate::graph::erdos_renyi(n, 0.3, seed);
        let x = random(n, 4, seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let mask: Vec<usize> = (0..n).step_by(2).collect();
        (g, x, labels, mask)
    }

    #[test]
    fn node_model_gradients_match_finite_differences() {
        for (seed, model) in [
            (1, Model::gcn(&[4, 5, 3], false, 1).unwrap()),
            (2, Model::gcn(&[4, 5, 5, 3], true, 2).unwrap()),
            (3, Model::gcn(&[4, 3], false, 3).unwrap()),
            (4, Model::sgc(4, 3, 2, 4)),
            (5, Model::mlp(4, 5, 3, 5)),
        ] {
            let (g, x, labels, mask) = node_setup(12 + seed as usize, seed);
            let m = renormalized_adjacency(&g);
            let wd = 5e-3;
            let drop = Some(Dropout { rate: 0.3, seed });
            let loss = |mm: &Model| {
                let f = mm.forward_nodes(&m, &x, drop).unwrap();
                loss_and_grads(mm, &f, &labels, &mask, wd).unwrap().0
            };
            let fwd = model.forward_nodes(&m, &x, drop).unwrap();
            let (_, grads) = loss_and_grads(&model, &fwd, &labels, &mask, wd).unwrap();
            check_gradients(&model, loss, &grads, false);
        }
    }

    #[test]
    fn gin_gradients_match_finite_differences() {
        let graphs: Vec<SparseGraph> = (0..4).map(|s| crate::graph::erdos_renyi(6 + s, 0.4, s as u64)).collect();
        let feats: Vec<Array2<f64>> = graphs.iter().enumerate().map(|(i, g)| random(g.num_nodes(), 3, i as u64)).collect();
        let labels = vec![0, 1, 1, 0];
        let mask = vec![0, 1, 3];
        let mut model = Model::gin(3, 4, 2, 9);
        model.epsilon = 0.2;
        for drop in [None, Some(Dropout { rate: 0.25, seed: 4 })] {
            let forwards = |mm: &Model| -> Vec<GinForward> {
                graphs
                    .iter()
                    .zip(&feats)
                    .enumerate()
                    .map(|(i, (g, x))| {
                        let d = drop.map(|d| Dropout { seed: d.seed + i as u64, ..d });
                        gin_forward(g, x, mm, d).unwrap()
                    })
                    .collect()
            };
            let loss = |mm: &Model| graph_loss_and_grads(mm, &forwards(mm), &labels, &mask, 1e-2).unwrap().0;
            let (_, grads) = graph_loss_and_grads(&model, &forwards(&model), &labels, &mask, 1e-2).unwrap();
            check_gradients(&model, loss, &grads, true);
        }
    }
}
