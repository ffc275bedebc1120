//! Forward passes. Node-level models (GCN, SGC, MLP) share one layer engine:
//! each layer optionally drops out its input, optionally propagates it through
//! the structure matrix, applies its weight, then ReLU on hidden layers.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;

use super::model::{Arch, Model};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::rng;
use crate::structure::StructureMatrix;

/// Training-time dropout on layer inputs, with masks drawn from `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    /// Inverted-dropout multipliers (0 or 1/(1-p)).
    pub mask: Option<Array2<f64>>,
    /// The matrix multiplied by the weight: `F D(H)` or `D(H)`.
    pub operand: Array2<f64>,
    pub pre: Array2<f64>,
    pub relu: bool,
    pub propagate: bool,
    pub residual: bool,
}

/// Activations of a node-level model.
#[derive(Debug, Clone)]
pub struct NodeForward<'a> {
    /// `H^(0) .. H^(L)`; the last entry holds the logits.
    pub layers: Vec<Array2<f64>>,
    pub(crate) caches: Vec<LayerCache>,
    pub(crate) structure: Option<&'a StructureMatrix>,
}

impl NodeForward<'_> {
    pub fn logits(&self) -> &Array2<f64> {
        self.layers.last().expect("at least one layer")
    }
}

/// `H^(l+1) = σ(F D(H^(l)) W^(l))`, with logits (no activation) last.
pub fn gcn_forward<'a>(
    m: &'a StructureMatrix,
    h0: &Array2<f64>,
    model: &Model,
    dropout: Option<Dropout>,
) -> Result<NodeForward<'a>> {
    let Arch::Gcn { residual, .. } = model.arch else {
        return Err(Error::Config("gcn_forward needs a GCN model".into()));
    };
    model.validate()?;
    check_rows(h0, m.dim())?;
    run_layers(Some(m), h0.clone(), model, dropout, true, residual)
}

/// Two-layer perceptron; ignores graph structure.
pub fn mlp_forward(h0: &Array2<f64>, model: &Model, dropout: Option<Dropout>) -> Result<NodeForward<'static>> {
    if model.arch != Arch::Mlp {
        return Err(Error::Config("mlp_forward needs an MLP model".into()));
    }
    model.validate()?;
    run_layers(None, h0.clone(), model, dropout, false, false)
}

/// `F^L X`, the parameter-free part of SGC.
pub fn sgc_propagate(m: &StructureMatrix, x: &Array2<f64>, steps: usize) -> Result<Array2<f64>> {
    check_rows(x, m.dim())?;
    let mut u = x.clone();
    for _ in 0..steps {
        u = m.spmm(u.view())?;
    }
    Ok(u)
}

/// `(F^L X) W`.
pub fn sgc_logits(m: &StructureMatrix, x: &Array2<f64>, steps: usize, w: &Array2<f64>) -> Result<Array2<f64>> {
    let u = sgc_propagate(m, x, steps)?;
    if u.ncols() != w.nrows() {
        return Err(Error::Dimension(format!(
            "features have {} columns, weight expects {}",
            u.ncols(),
            w.nrows()
        )));
    }
    Ok(u.dot(w))
}

/// SGC forward; `layers` holds `[X, F^L X, logits]`.
pub fn sgc_forward<'a>(
    m: &'a StructureMatrix,
    x: &Array2<f64>,
    model: &Model,
    dropout: Option<Dropout>,
) -> Result<NodeForward<'a>> {
    let Arch::Sgc { propagations } = model.arch else {
        return Err(Error::Config("sgc_forward needs an SGC model".into()));
    };
    model.validate()?;
    let u = sgc_propagate(m, x, propagations)?;
    let mut fwd = run_layers(Some(m), u, model, dropout, false, false)?;
    fwd.layers.insert(0, x.clone());
    Ok(fwd)
}

impl Model {
    /// Input as consumed by the trainable layers: `F^L X` for SGC, the raw
    /// input otherwise. Lets training hoist the SGC smoothing out of the loop.
    pub fn prepare_input(&self, m: &StructureMatrix, h0: &Array2<f64>) -> Result<Array2<f64>> {
        match self.arch {
            Arch::Sgc { propagations } => sgc_propagate(m, h0, propagations),
            _ => Ok(h0.clone()),
        }
    }

    /// Node-level forward from an input produced by [`Model::prepare_input`].
    pub fn forward_prepared<'a>(
        &self,
        m: &'a StructureMatrix,
        prepared: &Array2<f64>,
        dropout: Option<Dropout>,
    ) -> Result<NodeForward<'a>> {
        self.validate()?;
        check_rows(prepared, m.dim())?;
        match self.arch {
            Arch::Gcn { residual, .. } => run_layers(Some(m), prepared.clone(), self, dropout, true, residual),
            Arch::Sgc { .. } => run_layers(Some(m), prepared.clone(), self, dropout, false, false),
            Arch::Mlp => run_layers(None, prepared.clone(), self, dropout, false, false),
            Arch::Gin => Err(Error::Config("GIN is a graph-level model".into())),
        }
    }

    /// Node-level forward from the raw input.
    pub fn forward_nodes<'a>(
        &self,
        m: &'a StructureMatrix,
        h0: &Array2<f64>,
        dropout: Option<Dropout>,
    ) -> Result<NodeForward<'a>> {
        match self.arch {
            Arch::Gcn { .. } => gcn_forward(m, h0, self, dropout),
            Arch::Sgc { .. } => sgc_forward(m, h0, self, dropout),
            Arch::Mlp => {
                check_rows(h0, m.dim())?;
                mlp_forward(h0, self, dropout)
            }
            Arch::Gin => Err(Error::Config("GIN is a graph-level model".into())),
        }
    }
}

fn check_rows(h: &Array2<f64>, n: usize) -> Result<()> {
    if h.nrows() != n {
        return Err(Error::Dimension(format!(
            "input has {} rows for {n} nodes",
            h.nrows()
        )));
    }
    Ok(())
}

fn run_layers<'a>(
    structure: Option<&'a StructureMatrix>,
    h0: Array2<f64>,
    model: &Model,
    dropout: Option<Dropout>,
    propagate: bool,
    residual: bool,
) -> Result<NodeForward<'a>> {
    if h0.ncols() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "input has {} columns, model expects {}",
            h0.ncols(),
            model.input_dim()
        )));
    }
    let depth = model.weights.len();
    let mut layers = vec![h0];
    let mut caches = Vec::with_capacity(depth);
    for (l, w) in model.weights.iter().enumerate() {
        let h = &layers[l];
        let (dropped, mask) = apply_dropout(h, dropout, l as u64);
        let operand = match (propagate, structure) {
            (true, Some(m)) => m.spmm(dropped.view())?,
            _ => dropped,
        };
        let pre = operand.dot(w);
        let hidden = l + 1 < depth;
        let mut out = if hidden { pre.mapv(relu) } else { pre.clone() };
        let skip = residual && hidden && h.ncols() == out.ncols();
        if skip {
            out += h;
        }
        caches.push(LayerCache {
            mask,
            operand,
            pre,
            relu: hidden,
            propagate,
            residual: skip,
        });
        layers.push(out);
    }
    Ok(NodeForward {
        layers,
        caches,
        structure,
    })
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn apply_dropout(h: &Array2<f64>, dropout: Option<Dropout>, stream: u64) -> (Array2<f64>, Option<Array2<f64>>) {
    match dropout {
        Some(Dropout { rate, seed }) if rate > 0.0 => {
            let mut r = rng::stream(seed, stream);
            let keep = 1.0 / (1.0 - rate);
            let mask = Array2::from_shape_fn(h.dim(), |_| {
                if r.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            });
            (h * &mask, Some(mask))
        }
        _ => (h.clone(), None),
    }
}

/// GIN activations for one graph.
#[derive(Debug, Clone)]
pub struct GinForward {
    pub(crate) input: Array2<f64>,
    /// `(1 + ε) h_v + Σ_{u ∈ N(v)} h_u`
    pub aggregated: Array2<f64>,
    pub(crate) pre: Array2<f64>,
    /// ReLU MLP output per node.
    pub hidden: Array2<f64>,
    /// Sum over nodes of `hidden`.
    pub pooled: Array1<f64>,
    pub(crate) pooled_dropped: Array1<f64>,
    pub(crate) pool_mask: Option<Array1<f64>>,
    pub logits: Array1<f64>,
}

/// Neighbor sum `A h` over non-loop edges, weighted by the edge values.
pub fn neighbor_sum(g: &SparseGraph, h: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(h.dim());
    for v in 0..g.num_nodes() {
        let mut row = out.row_mut(v);
        for (&u, &w) in g.neighbors(v).iter().zip(g.row_values(v)) {
            if u != v {
                row.scaled_add(w, &h.row(u));
            }
        }
    }
    out
}

pub fn gin_forward(g: &SparseGraph, h0: &Array2<f64>, model: &Model, dropout: Option<Dropout>) -> Result<GinForward> {
    if model.arch != Arch::Gin {
        return Err(Error::Config("gin_forward needs a GIN model".into()));
    }
    model.validate()?;
    check_rows(h0, g.num_nodes())?;
    if h0.ncols() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "input has {} columns, model expects {}",
            h0.ncols(),
            model.input_dim()
        )));
    }
    let (input, _) = apply_dropout(h0, dropout, 0);
    let mut aggregated = neighbor_sum(g, &input);
    aggregated.scaled_add(1.0 + model.epsilon, &input);
    let pre = aggregated.dot(&model.weights[0]);
    let hidden = pre.mapv(relu);
    let pooled = hidden.sum_axis(Axis(0));
    let (pooled_dropped, pool_mask) = match dropout {
        Some(Dropout { rate, seed }) if rate > 0.0 => {
            let as_row = pooled.clone().insert_axis(Axis(0));
            let (d, mask) = apply_dropout(&as_row, Some(Dropout { rate, seed }), 1);
            (
                d.index_axis_move(Axis(0), 0),
                mask.map(|m| m.index_axis_move(Axis(0), 0)),
            )
        }
        _ => (pooled.clone(), None),
    };
    let logits = pooled_dropped.dot(&model.weights[1]);
    Ok(GinForward {
        input,
        aggregated,
        pre,
        hidden,
        pooled,
        pooled_dropped,
        pool_mask,
        logits,
    })
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    out
}
