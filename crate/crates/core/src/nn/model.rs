use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// The four supported architectures. None of them carries bias terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// `layers` graph convolutions; hidden layers use ReLU, optionally with an
    /// identity skip when input and output widths agree.
    Gcn { layers: usize, residual: bool },
    /// `propagations` parameter-free smoothing steps, then one linear map.
    Sgc { propagations: usize },
    /// One GIN aggregation with learnable epsilon, one ReLU MLP layer, sum
    /// pooling, linear head.
    Gin,
    /// Two fully connected layers.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub arch: Arch,
    /// `weights[l]` maps width `d_l` to `d_{l+1}`.
    pub weights: Vec<Array2<f64>>,
    /// GIN self-weight; unused elsewhere.
    pub epsilon: f64,
}

impl Model {
    /// GCN with widths `dims = [input, hidden..., classes]`.
    pub fn gcn(dims: &[usize], residual: bool, seed: u64) -> Result<Model> {
        if dims.len() < 2 {
            return Err(Error::Config("a GCN needs at least one layer".into()));
        }
        Ok(Model {
            arch: Arch::Gcn {
                layers: dims.len() - 1,
                residual,
            },
            weights: glorot_chain(dims, seed),
            epsilon: 0.0,
        })
    }

    pub fn sgc(input: usize, classes: usize, propagations: usize, seed: u64) -> Model {
        Model {
            arch: Arch::Sgc { propagations },
            weights: glorot_chain(&[input, classes], seed),
            epsilon: 0.0,
        }
    }

    pub fn gin(input: usize, hidden: usize, classes: usize, seed: u64) -> Model {
        Model {
            arch: Arch::Gin,
            weights: glorot_chain(&[input, hidden, classes], seed),
            epsilon: 0.0,
        }
    }

    pub fn mlp(input: usize, hidden: usize, classes: usize, seed: u64) -> Model {
        Model {
            arch: Arch::Mlp,
            weights: glorot_chain(&[input, hidden, classes], seed),
            epsilon: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, |w| w.ncols())
    }

    /// Checks that consecutive weight shapes chain and the count fits the
    /// architecture.
    pub fn validate(&self) -> Result<()> {
        let expected = match self.arch {
            Arch::Gcn { layers, .. } => layers,
            Arch::Sgc { .. } => 1,
            Arch::Gin | Arch::Mlp => 2,
        };
        if self.weights.len() != expected {
            return Err(Error::Dimension(format!(
                "{:?} expects {expected} weight matrices, found {}",
                self.arch,
                self.weights.len()
            )));
        }
        for (l, pair) in self.weights.windows(2).enumerate() {
            if pair[0].ncols() != pair[1].nrows() {
                return Err(Error::Dimension(format!(
                    "layer {l} outputs {} columns but layer {} expects {} rows",
                    pair[0].ncols(),
                    l + 1,
                    pair[1].nrows()
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.epsilon.is_finite() && self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }
}

fn glorot_chain(dims: &[usize], seed: u64) -> Vec<Array2<f64>> {
    dims.windows(2)
        .enumerate()
        .map(|(l, pair)| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = rng::stream(seed, 100 + l as u64);
            Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound))
        })
        .collect()
}
