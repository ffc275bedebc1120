use serde::{Deserialize, Serialize};

use crate::csl::CslConfig;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::spectral::FMode;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    SynthSweep,
    TrainSizeSweep,
    Csl,
    Verify,
    BenchScaling,
    DSweep,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::Config(format!("unknown task {s:?}")))
    }
}

/// What a method is fed as its initial node representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Feat,
    Eigen,
    FeatEigen,
    OneHot,
    Degree,
    Random,
}

impl FeatureSource {
    pub fn uses_features(self) -> bool {
        matches!(self, FeatureSource::Feat | FeatureSource::FeatEigen)
    }

    pub fn uses_eigen(self) -> bool {
        matches!(self, FeatureSource::Eigen | FeatureSource::FeatEigen)
    }

    /// Suffix used in method names, as in `GIN_degree`.
    pub fn tag(self) -> &'static str {
        match self {
            FeatureSource::Feat => "feature",
            FeatureSource::Eigen => "eigen",
            FeatureSource::FeatEigen => "feature_eigen",
            FeatureSource::OneHot => "onehot",
            FeatureSource::Degree => "degree",
            FeatureSource::Random => "random",
        }
    }
}

impl std::str::FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = match s {
            "feat+eigen" => "feat_eigen",
            other => other,
        };
        serde_json::from_value(serde_json::Value::String(key.replace('-', "_")))
            .map_err(|_| Error::Config(format!("unknown feature source {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gcn,
    Sgc,
    Gin,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// GCN hidden layers; a GCN with X hidden layers has X + 1 convolutions.
    pub hidden_layers: usize,
    pub hidden: usize,
    pub residual: bool,
    /// SGC smoothing steps.
    pub propagations: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Gcn,
            hidden_layers: 1,
            hidden: 16,
            residual: false,
            propagations: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub model: ModelSpec,
    pub features: FeatureSource,
}

impl MethodSpec {
    pub fn new(name: &str, model: ModelSpec, features: FeatureSource) -> MethodSpec {
        MethodSpec {
            name: name.to_string(),
            model,
            features,
        }
    }

    pub fn gcn(hidden_layers: usize, features: FeatureSource) -> MethodSpec {
        let name = match features {
            FeatureSource::FeatEigen => "Eigen-GCN".to_string(),
            FeatureSource::Feat => format!("GCN{hidden_layers}_feature"),
            other => format!("GCN{hidden_layers}_{}", other.tag()),
        };
        MethodSpec {
            name,
            model: ModelSpec {
                kind: ModelKind::Gcn,
                hidden_layers,
                residual: hidden_layers > 1,
                ..ModelSpec::default()
            },
            features,
        }
    }

    pub fn mlp_feature() -> MethodSpec {
        MethodSpec::new(
            "MLP_feature",
            ModelSpec {
                kind: ModelKind::Mlp,
                ..ModelSpec::default()
            },
            FeatureSource::Feat,
        )
    }

    pub fn gin(features: FeatureSource) -> MethodSpec {
        let name = match features {
            FeatureSource::Eigen => "Eigen-GIN".to_string(),
            other => format!("GIN_{}", other.tag()),
        };
        MethodSpec::new(
            &name,
            ModelSpec {
                kind: ModelKind::Gin,
                ..ModelSpec::default()
            },
            features,
        )
    }
}

/// MLP, GCN with 1/2/3/5 hidden layers (residual from 2 on) and Eigen-GCN,
/// which shares the GCN2 architecture.
pub fn synth_roster() -> Vec<MethodSpec> {
    let mut out = vec![MethodSpec::mlp_feature()];
    for x in [1, 2, 3, 5] {
        out.push(MethodSpec::gcn(x, FeatureSource::Feat));
    }
    out.push(MethodSpec::gcn(2, FeatureSource::FeatEigen));
    out
}

pub fn csl_roster() -> Vec<MethodSpec> {
    vec![
        MethodSpec::gin(FeatureSource::Degree),
        MethodSpec::gin(FeatureSource::Random),
        MethodSpec::gin(FeatureSource::Eigen),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub d: usize,
    pub tol: f64,
    pub base_nodes: usize,
    /// Undirected edges.
    pub base_edges: usize,
    /// How many times nodes and edges are each doubled from the base.
    pub doublings: usize,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            d: 128,
            tol: 1e-8,
            base_nodes: 10_000,
            base_edges: 1_000_000,
            doublings: 2,
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub oracle_graphs: usize,
    pub bound_graphs: usize,
    pub limit_graphs: usize,
    pub equivariance_pairs: usize,
    pub gradient_instances: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            oracle_graphs: 50,
            bound_graphs: 100,
            limit_graphs: 10,
            equivariance_pairs: 20,
            gradient_instances: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Empty means the task's default roster.
    pub methods: Vec<MethodSpec>,
    pub d: usize,
    pub f_mode: FMode,
    pub train: TrainConfig,
    pub repetitions: usize,
    pub seed: u64,
    pub synth: SynthConfig,
    pub gammas: Vec<f64>,
    /// Training and validation nodes per class.
    pub n_train: usize,
    pub n_val: usize,
    pub train_sizes: Vec<usize>,
    pub d_grid: Vec<usize>,
    pub csl: CslConfig,
    pub bench: BenchConfig,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::SynthSweep,
            methods: Vec::new(),
            d: 32,
            f_mode: FMode::Identity,
            train: TrainConfig::default(),
            repetitions: 10,
            seed: 0,
            synth: SynthConfig::desk(),
            gammas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            n_train: 10,
            n_val: 30,
            train_sizes: vec![5, 10, 20, 50],
            d_grid: vec![8, 16, 32, 64, 128],
            csl: CslConfig::default(),
            bench: BenchConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults for `task`, including the CSL training recipe.
    pub fn for_task(task: Task) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            task,
            ..ExperimentConfig::default()
        };
        match task {
            Task::Csl => {
                cfg.d = 16;
                cfg.f_mode = FMode::Abs;
                cfg.train = TrainConfig {
                    dropout: 0.0,
                    weight_decay: 0.0,
                    max_epochs: 200,
                    early_stop_rounds: 0,
                    batch_size: 32,
                    ..TrainConfig::default()
                };
            }
            Task::TrainSizeSweep | Task::DSweep => cfg.gammas = vec![1.0],
            _ => {}
        }
        cfg
    }

    pub fn resolved_methods(&self) -> Vec<MethodSpec> {
        if !self.methods.is_empty() {
            return self.methods.clone();
        }
        match self.task {
            Task::Csl => csl_roster(),
            Task::DSweep => vec![MethodSpec::gcn(2, FeatureSource::FeatEigen)],
            _ => synth_roster(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.train.validate()?;
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        let methods = self.resolved_methods();
        for m in &methods {
            let graph_level = m.model.kind == ModelKind::Gin;
            if self.task == Task::Csl {
                if m.features.uses_features() {
                    return bad(format!("{}: CSL graphs carry no node features", m.name));
                }
                if !graph_level {
                    return bad(format!("{}: CSL is graph classification and needs a GIN", m.name));
                }
            } else if graph_level && matches!(self.task, Task::SynthSweep | Task::TrainSizeSweep | Task::DSweep) {
                return bad(format!("{}: GIN is a graph classifier", m.name));
            }
            if m.model.kind == ModelKind::Gcn && m.model.hidden_layers == 0 && m.model.hidden == 0 {
                return bad(format!("{}: empty GCN", m.name));
            }
        }
        match self.task {
            Task::SynthSweep | Task::TrainSizeSweep | Task::DSweep => {
                self.synth.validate()?;
                if self.gammas.is_empty() || self.gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
                    return bad(format!("gamma grid must be a nonempty subset of [0, 1], got {:?}", self.gammas));
                }
                let grid = if self.task == Task::DSweep { &self.d_grid } else { &vec![self.d] };
                if grid.iter().any(|&d| d == 0 || d >= self.synth.num_nodes) {
                    return bad(format!("eigenbasis sizes {grid:?} must lie in [1, N)"));
                }
                if self.task == Task::TrainSizeSweep && self.train_sizes.is_empty() {
                    return bad("train_sizes is empty".into());
                }
            }
            Task::Csl => {
                if self.d == 0 || self.d >= self.csl.n {
                    return bad(format!("d = {} must lie in [1, {})", self.d, self.csl.n));
                }
            }
            Task::BenchScaling => {
                let b = &self.bench;
                if b.d == 0 || b.d >= b.base_nodes || b.repeats == 0 {
                    return bad("bench needs 0 < d < base_nodes and at least one repeat".into());
                }
                let pairs = b.base_nodes as f64 * (b.base_nodes as f64 - 1.0) / 2.0;
                if b.base_edges as f64 * 2f64.powi(b.doublings as i32) > pairs {
                    return bad("bench edge counts exceed the number of node pairs".into());
                }
            }
            Task::Verify => {}
        }
        Ok(())
    }
}
