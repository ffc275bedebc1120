use ndarray::{s, Array2};

use super::config::{FeatureSource, MethodSpec, ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::nn::{train_nodes, Model, NodeTask, TrainConfig, TrainOutcome};
use crate::plugin::{build_initial_basis, degree_one_hot, one_hot_id, random_gaussian, DEFAULT_RANDOM_DIM};
use crate::spectral::{top_eigenpairs, EigenBasis, FMode, SolverOptions};
use crate::structure::{renormalized_adjacency, StructureMatrix};
use crate::synth::Splits;

/// Derives an independent seed from `seed` and a tag (splitmix64 finalizer).
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Leading `d` pairs of a larger basis.
pub fn truncate_basis(b: &EigenBasis, d: usize) -> EigenBasis {
    let d = d.min(b.d());
    EigenBasis {
        eigenvalues: b.eigenvalues[..d].to_vec(),
        vectors: b.vectors.slice(s![.., ..d]).to_owned(),
        residuals: b.residuals[..d].to_vec(),
        iterations_used: b.iterations_used,
        converged: b.converged,
    }
}

/// Top-`d` eigenbasis of the renormalized adjacency.
pub fn graph_eigenbasis(g: &SparseGraph, d: usize, seed: u64) -> Result<EigenBasis> {
    top_eigenpairs(&renormalized_adjacency(g), &SolverOptions::new(d).with_seed(seed))
}

/// Initial node representation for `source`. `degree_width` pads the degree
/// encoding to a dataset-wide width.
pub fn node_input(
    source: FeatureSource,
    g: &SparseGraph,
    features: Option<&Array2<f64>>,
    basis: Option<&EigenBasis>,
    f_mode: FMode,
    degree_width: Option<usize>,
    seed: u64,
) -> Result<Array2<f64>> {
    let need_features = || features.ok_or_else(|| Error::Config(format!("{source:?} input needs node features")));
    let need_basis = || basis.ok_or_else(|| Error::Config(format!("{source:?} input needs an eigenbasis")));
    match source {
        FeatureSource::Feat => Ok(need_features()?.clone()),
        FeatureSource::Eigen => Ok(build_initial_basis(None, Some(need_basis()?), f_mode)?.matrix),
        FeatureSource::FeatEigen => Ok(build_initial_basis(Some(need_features()?), Some(need_basis()?), f_mode)?.matrix),
        FeatureSource::OneHot => one_hot_id(g.num_nodes()),
        FeatureSource::Degree => Ok(degree_one_hot(g, degree_width)),
        FeatureSource::Random => Ok(random_gaussian(g.num_nodes(), DEFAULT_RANDOM_DIM, seed)),
    }
}

pub fn build_model(spec: &ModelSpec, input: usize, classes: usize, seed: u64) -> Result<Model> {
    match spec.kind {
        ModelKind::Gcn => {
            let mut dims = vec![input];
            dims.extend(std::iter::repeat_n(spec.hidden, spec.hidden_layers));
            dims.push(classes);
            Model::gcn(&dims, spec.residual, seed)
        }
        ModelKind::Sgc => Ok(Model::sgc(input, classes, spec.propagations, seed)),
        ModelKind::Gin => Ok(Model::gin(input, spec.hidden, classes, seed)),
        ModelKind::Mlp => Ok(Model::mlp(input, spec.hidden, classes, seed)),
    }
}

/// Trains one node-classification method on a prepared input.
pub fn train_node_method(
    method: &MethodSpec,
    m: &StructureMatrix,
    h0: &Array2<f64>,
    labels: &[usize],
    classes: usize,
    splits: &Splits,
    train: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let model = build_model(&method.model, h0.ncols(), classes, sub_seed(seed, 1))?;
    let task = NodeTask {
        structure: m,
        features: h0,
        labels,
        train: &splits.train,
        val: &splits.val,
        test: &splits.test,
    };
    let cfg = TrainConfig {
        seed: sub_seed(seed, 2),
        ..train.clone()
    };
    train_nodes(model, &task, &cfg)
}
