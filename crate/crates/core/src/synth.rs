//! Synthetic node classification data where labels follow either the graph
//! communities or the feature groups.
//!
//! Edges come from a stochastic blockmodel, features from Gaussian clusters
//! around well-separated group vectors, and each node's label is its
//! community with probability γ and its feature group otherwise. One master
//! seed is split into independent streams, so changing γ alone leaves the
//! graph and the features untouched.

use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix_io::{read_matrix_csv, write_matrix_csv};
use crate::rng;

const STREAM_STRUCTURE: u64 = 1;
const STREAM_GROUPS: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_MIXING: u64 = 4;
const STREAM_SPLITS: u64 = 5;
const STREAM_ASSIGN: u64 = 6;

pub const MAX_GROUP_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_nodes: usize,
    pub num_communities: usize,
    pub prob_in: f64,
    pub prob_out: f64,
    pub feature_dim: usize,
    /// Group vectors are drawn from N(0, group_var I).
    pub group_var: f64,
    pub min_group_dist: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::desk()
    }
}

impl SynthConfig {
    /// 5,000 nodes in 10 communities, p_in 0.025, p_out 0.001.
    pub fn paper() -> SynthConfig {
        SynthConfig {
            num_nodes: 5000,
            num_communities: 10,
            prob_in: 0.025,
            prob_out: 0.001,
            feature_dim: 32,
            group_var: 4.0,
            min_group_dist: 1.0,
            gamma: 0.5,
            seed: 0,
        }
    }

    /// A fifth of the nodes with five times the edge probabilities, keeping
    /// the expected degree.
    pub fn desk() -> SynthConfig {
        SynthConfig {
            num_nodes: 1000,
            prob_in: 0.125,
            prob_out: 0.005,
            ..SynthConfig::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_communities == 0 || self.num_communities > self.num_nodes {
            return bad(format!(
                "{} communities for {} nodes",
                self.num_communities, self.num_nodes
            ));
        }
        if !(0.0 <= self.prob_out && self.prob_out <= self.prob_in && self.prob_in <= 1.0) {
            return bad(format!(
                "need 0 <= prob_out <= prob_in <= 1, got {} and {}",
                self.prob_out, self.prob_in
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.group_var > 0.0) || self.feature_dim == 0 {
            return bad("group_var must be positive and feature_dim nonzero".into());
        }
        Ok(())
    }

    /// Expected number of directed adjacency entries.
    pub fn expected_nnz(&self) -> f64 {
        let (within, between) = self.pair_counts();
        2.0 * (within * self.prob_in + between * self.prob_out)
    }

    /// Standard deviation of the directed entry count (each pair is an
    /// independent Bernoulli contributing 0 or 2).
    pub fn nnz_std(&self) -> f64 {
        let (within, between) = self.pair_counts();
        let var = within * self.prob_in * (1.0 - self.prob_in) + between * self.prob_out * (1.0 - self.prob_out);
        2.0 * var.sqrt()
    }

    fn pair_counts(&self) -> (f64, f64) {
        let within: f64 = community_sizes(self.num_nodes, self.num_communities)
            .iter()
            .map(|&s| (s * s.saturating_sub(1) / 2) as f64)
            .sum();
        let n = self.num_nodes as f64;
        (within, n * (n - 1.0) / 2.0 - within)
    }
}

/// Balanced sizes; the first `n mod l` communities get one extra node.
pub fn community_sizes(n: usize, l: usize) -> Vec<usize> {
    (0..l).map(|c| n / l + usize::from(c < n % l)).collect()
}

fn balanced_assignment(n: usize, l: usize) -> Vec<usize> {
    community_sizes(n, l)
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect()
}

/// Blockmodel graph over contiguous balanced communities.
pub fn generate_structure(cfg: &SynthConfig) -> Result<(SparseGraph, Vec<usize>)> {
    cfg.validate()?;
    let n = cfg.num_nodes;
    let c_struc = balanced_assignment(n, cfg.num_communities);
    let mut r = rng::stream(cfg.seed, STREAM_STRUCTURE);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if c_struc[i] == c_struc[j] { cfg.prob_in } else { cfg.prob_out };
            if r.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Ok((SparseGraph::from_edge_list(&edges, n)?, c_struc))
}

/// Group vectors redrawn as a whole until every pair is farther apart than
/// `min_group_dist`.
pub fn group_vectors(cfg: &SynthConfig) -> Result<Array2<f64>> {
    let (l, f) = (cfg.num_communities, cfg.feature_dim);
    let sd = cfg.group_var.sqrt();
    let mut r = rng::stream(cfg.seed, STREAM_GROUPS);
    for _ in 0..MAX_GROUP_REDRAWS {
        let g = Array2::from_shape_fn((l, f), |_| sd * rng::standard_normal(&mut r));
        let separated = (0..l).all(|a| {
            (a + 1..l).all(|b| {
                let d2: f64 = g.row(a).iter().zip(g.row(b)).map(|(x, y)| (x - y).powi(2)).sum();
                d2.sqrt() > cfg.min_group_dist
            })
        });
        if separated {
            return Ok(g);
        }
    }
    Err(Error::GroupVectorRedraws {
        min_dist: cfg.min_group_dist,
        cap: MAX_GROUP_REDRAWS,
    })
}

/// Features and their group ids; groups are balanced and assigned
/// independently of the communities.
pub fn generate_features(cfg: &SynthConfig) -> Result<(Array2<f64>, Vec<usize>)> {
    cfg.validate()?;
    let groups = group_vectors(cfg)?;
    let mut c_feat = balanced_assignment(cfg.num_nodes, cfg.num_communities);
    rng::shuffle(&mut rng::stream(cfg.seed, STREAM_ASSIGN), &mut c_feat);
    let mut r = rng::stream(cfg.seed, STREAM_NOISE);
    let x = Array2::from_shape_fn((cfg.num_nodes, cfg.feature_dim), |(i, j)| {
        groups[[c_feat[i], j]] + rng::standard_normal(&mut r)
    });
    Ok((x, c_feat))
}

pub fn mix_labels(c_struc: &[usize], c_feat: &[usize], gamma: f64, seed: u64) -> Result<Vec<usize>> {
    if c_struc.len() != c_feat.len() {
        return Err(Error::Dimension(format!(
            "{} structural and {} feature labels",
            c_struc.len(),
            c_feat.len()
        )));
    }
    let mut r = rng::stream(seed, STREAM_MIXING);
    Ok(c_struc
        .iter()
        .zip(c_feat)
        .map(|(&s, &f)| if r.random::<f64>() < gamma { s } else { f })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per class, `n_train` and `n_val` nodes without replacement; everything
/// else is test. Index lists are sorted.
pub fn split_per_class(labels: &[usize], n_train: usize, n_val: usize, seed: u64) -> Result<Splits> {
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    let mut members = vec![Vec::new(); classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    let mut r = rng::stream(seed, STREAM_SPLITS);
    let mut s = Splits {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (c, m) in members.iter_mut().enumerate() {
        if m.len() < n_train + n_val {
            return Err(Error::ClassTooSmall {
                class: c,
                size: m.len(),
                needed: n_train + n_val,
            });
        }
        rng::shuffle(&mut r, m);
        s.train.extend_from_slice(&m[..n_train]);
        s.val.extend_from_slice(&m[n_train..n_train + n_val]);
        s.test.extend_from_slice(&m[n_train + n_val..]);
    }
    s.train.sort_unstable();
    s.val.sort_unstable();
    s.test.sort_unstable();
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub graph: SparseGraph,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub c_struc: Vec<usize>,
    pub c_feat: Vec<usize>,
    pub splits: Splits,
}

/// Full pipeline. The split stream is seeded from the config seed as well,
/// so the whole dataset is a function of `(cfg, n_train, n_val)`.
pub fn generate(cfg: &SynthConfig, n_train: usize, n_val: usize) -> Result<SynthDataset> {
    let (graph, c_struc) = generate_structure(cfg)?;
    let (features, c_feat) = generate_features(cfg)?;
    let labels = mix_labels(&c_struc, &c_feat, cfg.gamma, cfg.seed)?;
    let splits = split_per_class(&labels, n_train, n_val, cfg.seed)?;
    Ok(SynthDataset {
        config: cfg.clone(),
        graph,
        features,
        labels,
        c_struc,
        c_feat,
        splits,
    })
}

impl SynthDataset {
    pub fn num_classes(&self) -> usize {
        self.config.num_communities
    }

    /// Writes edges.txt, features.csv, labels.csv, splits.json and
    /// config.json into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.graph.write_edge_list(&dir.join("edges.txt"))?;
        write_matrix_csv(&dir.join("features.csv"), &self.features)?;
        let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
        w.write_record(["label", "c_struc", "c_feat"])?;
        for i in 0..self.labels.len() {
            w.write_record([
                self.labels[i].to_string(),
                self.c_struc[i].to_string(),
                self.c_feat[i].to_string(),
            ])?;
        }
        w.flush()?;
        std::fs::write(dir.join("splits.json"), serde_json::to_string(&self.splits)?)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.config)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<SynthDataset> {
        let config: SynthConfig = serde_json::from_str(&std::fs::read_to_string(dir.join("config.json"))?)?;
        let graph = SparseGraph::read_edge_list(&dir.join("edges.txt"), Some(config.num_nodes))?;
        let features = read_matrix_csv(&dir.join("features.csv"))?;
        let mut rdr = csv::Reader::from_path(dir.join("labels.csv"))?;
        let (mut labels, mut c_struc, mut c_feat) = (Vec::new(), Vec::new(), Vec::new());
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |j: usize| -> Result<usize> {
                rec.get(j).and_then(|t| t.trim().parse().ok()).ok_or_else(|| Error::Parse {
                    line: k + 2,
                    message: "expected three integer columns".into(),
                })
            };
            labels.push(field(0)?);
            c_struc.push(field(1)?);
            c_feat.push(field(2)?);
        }
        let splits: Splits = serde_json::from_str(&std::fs::read_to_string(dir.join("splits.json"))?)?;
        if features.nrows() != graph.num_nodes() || labels.len() != graph.num_nodes() {
            return Err(Error::Dimension("dataset files disagree on the node count".into()));
        }
        Ok(SynthDataset {
            config,
            graph,
            features,
            labels,
            c_struc,
            c_feat,
            splits,
        })
    }
}
