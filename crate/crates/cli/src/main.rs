use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use eigengnn::csl::{build_csl_dataset, CslConfig};
use eigengnn::graph::{edge_list_node_count, SparseGraph};
use eigengnn::harness::{self, ExperimentConfig, FeatureSource, MethodSpec, ModelKind, Report, ResultRow, Task};
use eigengnn::matrix_io::read_matrix_csv;
use eigengnn::plugin::build_initial_basis;
use eigengnn::spectral::{top_eigenpairs, FMode, SolverOptions};
use eigengnn::structure::renormalized_adjacency;
use eigengnn::synth::{self, SynthConfig, SynthDataset};
use eigengnn::{StructureKind, StructureMatrix};

#[derive(Parser)]
#[command(name = "eigengnn", version, about = "Eigenbasis-augmented GNN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic blockmodel dataset.
    GenSynth(GenSynthArgs),
    /// Generate the circulant skip-link graph classification dataset.
    GenCsl(GenCslArgs),
    /// Top-d eigenbasis of a graph's structure matrix.
    Eigen(EigenArgs),
    /// Train one method on a saved synthetic dataset.
    Train(TrainCmdArgs),
    /// Check the eigensolver, spectral bounds, smoothing limit, equivariance and gradients.
    Verify(VerifyArgs),
    /// Time the eigenbasis while doubling edges and nodes.
    Bench(BenchArgs),
    /// Run an experiment sweep: synth_sweep, train_size_sweep, d_sweep or csl.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    early_stop: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args, Default)]
struct SynthFlags {
    /// `desk` or `paper`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    communities: Option<usize>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    group_var: Option<f64>,
}

#[derive(Args, Default)]
struct MethodFlags {
    /// gcn, sgc, gin or mlp; replaces the task's default roster.
    #[arg(long)]
    model: Option<String>,
    /// feat, eigen, feat+eigen, one_hot, degree or random.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    residual: Option<bool>,
    #[arg(long)]
    propagations: Option<usize>,
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct GenSynthArgs {
    #[command(flatten)]
    synth: SynthFlags,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n_train: usize,
    #[arg(long, default_value_t = 30)]
    n_val: usize,
    #[arg(long, default_value = "synth")]
    out: PathBuf,
}

#[derive(Args)]
struct GenCslArgs {
    #[arg(long, default_value_t = 41)]
    n: usize,
    /// Comma-separated skip intervals.
    #[arg(long, value_delimiter = ',', default_values_t = eigengnn::csl::PAPER_R_SET)]
    r_set: Vec<usize>,
    #[arg(long, default_value_t = 60)]
    copies: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep every copy identical to its base graph.
    #[arg(long)]
    no_permute: bool,
    #[arg(long, default_value = "csl")]
    out: PathBuf,
}

#[derive(Args)]
struct EigenArgs {
    /// Edge list, one `i j` pair per line.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, default_value_t = 32)]
    d: usize,
    /// renorm, plain or transition:K.
    #[arg(long, default_value = "renorm")]
    structure: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Node features to prepend to the transformed eigenvectors.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value = "identity")]
    f_mode: String,
    #[arg(long, default_value = "eigen")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCmdArgs {
    /// Dataset directory written by gen-synth.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    method: MethodFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, default_value_t = 32)]
    d: usize,
    #[arg(long, default_value = "identity")]
    f_mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "train")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    oracle_graphs: Option<usize>,
    #[arg(long)]
    bound_graphs: Option<usize>,
    #[arg(long)]
    limit_graphs: Option<usize>,
    #[arg(long)]
    equivariance_pairs: Option<usize>,
    #[arg(long)]
    gradient_instances: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    base_nodes: Option<usize>,
    /// Undirected edges at the base point.
    #[arg(long)]
    base_edges: Option<usize>,
    #[arg(long)]
    doublings: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    task: Option<String>,
    #[command(flatten)]
    synth: SynthFlags,
    #[command(flatten)]
    method: MethodFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    d_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    train_sizes: Option<Vec<usize>>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    f_mode: Option<String>,
    #[arg(long)]
    csl_copies: Option<usize>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::GenCsl(a) => gen_csl(a),
        Command::Eigen(a) => eigen(a),
        Command::Train(a) => train(a),
        Command::Verify(a) => {
            let mut cfg = base_config(&a.common, Task::Verify)?;
            let v = &mut cfg.verify;
            set(&mut v.oracle_graphs, a.oracle_graphs);
            set(&mut v.bound_graphs, a.bound_graphs);
            set(&mut v.limit_graphs, a.limit_graphs);
            set(&mut v.equivariance_pairs, a.equivariance_pairs);
            set(&mut v.gradient_instances, a.gradient_instances);
            experiment(&cfg, &a.common.out)
        }
        Command::Bench(a) => {
            let mut cfg = base_config(&a.common, Task::BenchScaling)?;
            let b = &mut cfg.bench;
            set(&mut b.d, a.d);
            set(&mut b.tol, a.tol);
            set(&mut b.base_nodes, a.base_nodes);
            set(&mut b.base_edges, a.base_edges);
            set(&mut b.doublings, a.doublings);
            set(&mut b.repeats, a.repeats);
            experiment(&cfg, &a.common.out)
        }
        Command::Sweep(a) => sweep(a),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn base_config(common: &Common, task: Task) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            cfg.task = task;
            cfg
        }
        None => ExperimentConfig::for_task(task),
    };
    set(&mut cfg.seed, common.seed);
    set(&mut cfg.repetitions, common.repetitions);
    Ok(cfg)
}

fn apply_train(cfg: &mut eigengnn::nn::TrainConfig, t: &TrainFlags) {
    set(&mut cfg.learning_rate, t.lr);
    set(&mut cfg.weight_decay, t.weight_decay);
    set(&mut cfg.dropout, t.dropout);
    set(&mut cfg.max_epochs, t.epochs);
    set(&mut cfg.early_stop_rounds, t.early_stop);
    set(&mut cfg.batch_size, t.batch_size);
}

fn apply_synth(cfg: &mut SynthConfig, s: &SynthFlags) -> Result<()> {
    if let Some(p) = &s.preset {
        let seed = cfg.seed;
        *cfg = match p.as_str() {
            "desk" => SynthConfig::desk(),
            "paper" => SynthConfig::paper(),
            other => bail!("unknown preset {other:?}; use desk or paper"),
        };
        cfg.seed = seed;
    }
    set(&mut cfg.num_nodes, s.nodes);
    set(&mut cfg.num_communities, s.communities);
    set(&mut cfg.prob_in, s.p_in);
    set(&mut cfg.prob_out, s.p_out);
    set(&mut cfg.feature_dim, s.feature_dim);
    set(&mut cfg.group_var, s.group_var);
    Ok(())
}

fn method_from_flags(m: &MethodFlags, default: MethodSpec) -> Result<Option<MethodSpec>> {
    if m.model.is_none() && m.features.is_none() {
        return Ok(None);
    }
    let mut spec = default;
    if let Some(kind) = &m.model {
        spec.model.kind = match kind.as_str() {
            "gcn" => ModelKind::Gcn,
            "sgc" => ModelKind::Sgc,
            "gin" => ModelKind::Gin,
            "mlp" => ModelKind::Mlp,
            other => bail!("unknown model {other:?}"),
        };
    }
    if let Some(f) = &m.features {
        spec.features = f.parse::<FeatureSource>()?;
    }
    set(&mut spec.model.hidden_layers, m.hidden_layers);
    set(&mut spec.model.hidden, m.hidden);
    set(&mut spec.model.residual, m.residual);
    set(&mut spec.model.propagations, m.propagations);
    spec.name = m.name.clone().unwrap_or_else(|| {
        let kind = format!("{:?}", spec.model.kind).to_uppercase();
        match spec.model.kind {
            ModelKind::Gcn => format!("{kind}{}_{}", spec.model.hidden_layers, spec.features.tag()),
            _ => format!("{kind}_{}", spec.features.tag()),
        }
    });
    Ok(Some(spec))
}

fn sweep(a: SweepArgs) -> Result<bool> {
    let task = match &a.task {
        Some(t) => t.parse::<Task>()?,
        None => Task::SynthSweep,
    };
    if matches!(task, Task::Verify | Task::BenchScaling) {
        bail!("use the verify or bench subcommand for {task:?}");
    }
    let mut cfg = base_config(&a.common, task)?;
    apply_synth(&mut cfg.synth, &a.synth)?;
    apply_train(&mut cfg.train, &a.train);
    set(&mut cfg.gammas, a.gammas);
    set(&mut cfg.d, a.d);
    set(&mut cfg.d_grid, a.d_grid);
    set(&mut cfg.train_sizes, a.train_sizes);
    set(&mut cfg.n_train, a.n_train);
    set(&mut cfg.n_val, a.n_val);
    set(&mut cfg.csl.copies, a.csl_copies);
    if let Some(f) = &a.f_mode {
        cfg.f_mode = f.parse()?;
    }
    let default = if task == Task::Csl {
        MethodSpec::gin(FeatureSource::Eigen)
    } else {
        MethodSpec::gcn(2, FeatureSource::FeatEigen)
    };
    if let Some(m) = method_from_flags(&a.method, default)? {
        cfg.methods = vec![m];
    }
    experiment(&cfg, &a.common.out)
}

fn experiment(cfg: &ExperimentConfig, out: &Path) -> Result<bool> {
    let report = harness::run(cfg)?;
    report.write(out, cfg)?;
    print_report(&report);
    println!("results written to {}", out.display());
    Ok(report.passed())
}

fn print_report(report: &Report) {
    for s in &report.summary {
        let mut key = s.method.clone();
        if let Some(g) = s.gamma {
            key += &format!(" gamma={g}");
        }
        if let Some(t) = s.train_per_class {
            key += &format!(" train={t}");
        }
        if let Some(d) = s.d {
            key += &format!(" d={d}");
        }
        println!("{key:<40} {:.4} ± {:.4} ({} runs)", s.mean, s.std, s.runs);
    }
    for b in &report.bench {
        println!(
            "{:<6} N={:<7} M={:<8} d={} {:.3}s ({} steps)",
            b.series, b.nodes, b.edges, b.d, b.seconds, b.iterations
        );
    }
    for c in &report.checks {
        println!("{c}");
    }
}

fn write_manifest(dir: &Path, command: &str, config: serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = json!({
        "toolkit_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn gen_synth(a: GenSynthArgs) -> Result<bool> {
    let mut cfg = SynthConfig {
        gamma: a.gamma,
        seed: a.seed,
        ..SynthConfig::desk()
    };
    apply_synth(&mut cfg, &a.synth)?;
    cfg.validate()?;
    let ds = synth::generate(&cfg, a.n_train, a.n_val)?;
    ds.save(&a.out)?;
    write_manifest(
        &a.out,
        "gen-synth",
        json!({"synth": cfg, "n_train": a.n_train, "n_val": a.n_val}),
    )?;
    println!(
        "{} nodes, {} directed entries (expected {:.0} ± {:.0}), {} train / {} val / {} test nodes -> {}",
        ds.graph.num_nodes(),
        ds.graph.nnz(),
        cfg.expected_nnz(),
        cfg.nnz_std(),
        ds.splits.train.len(),
        ds.splits.val.len(),
        ds.splits.test.len(),
        a.out.display()
    );
    Ok(true)
}

fn gen_csl(a: GenCslArgs) -> Result<bool> {
    let cfg = CslConfig {
        n: a.n,
        r_set: a.r_set,
        copies: a.copies,
        num_folds: a.folds,
        seed: a.seed,
        permute: !a.no_permute,
    };
    let ds = build_csl_dataset(&cfg)?;
    ds.save(&a.out)?;
    println!("{} graphs in {} classes -> {}", ds.graphs.len(), ds.num_classes(), a.out.display());
    Ok(true)
}

fn eigen(a: EigenArgs) -> Result<bool> {
    let nodes = match a.nodes {
        Some(n) => Some(n),
        None => edge_list_node_count(&a.graph).with_context(|| format!("reading {}", a.graph.display()))?,
    };
    let g = SparseGraph::read_edge_list(&a.graph, nodes).with_context(|| format!("reading {}", a.graph.display()))?;
    let kind: StructureKind = a.structure.parse()?;
    let m = StructureMatrix::build(&g, kind)?;
    let f_mode: FMode = a.f_mode.parse()?;
    let opts = SolverOptions::new(a.d).with_tol(a.tol).with_seed(a.seed);
    let start = std::time::Instant::now();
    let basis = top_eigenpairs(&m, &opts)?;
    let seconds = start.elapsed().as_secs_f64();
    std::fs::create_dir_all(&a.out)?;
    basis.write_csv(&a.out.join("basis.csv"))?;
    let features = a.features.as_ref().map(|p| read_matrix_csv(p)).transpose()?;
    let initial = build_initial_basis(features.as_ref(), Some(&basis), f_mode)?;
    initial.save(&a.out.join("initial_basis.csv"), a.seed)?;
    write_manifest(
        &a.out,
        "eigen",
        json!({
            "graph": a.graph,
            "nodes": g.num_nodes(),
            "structure": kind.to_string(),
            "solver": opts,
            "f_mode": f_mode,
            "features": a.features,
        }),
    )?;
    let shown: Vec<String> = basis.eigenvalues.iter().take(8).map(|v| format!("{v:.6}")).collect();
    println!(
        "N={} nnz={} d={} in {seconds:.3}s, {} operator applications, worst residual {:.2e}, converged {}",
        g.num_nodes(),
        m.nnz(),
        basis.d(),
        basis.iterations_used,
        basis.worst_residual(),
        basis.converged
    );
    println!("leading eigenvalues: {}", shown.join(" "));
    Ok(basis.converged)
}

fn train(a: TrainCmdArgs) -> Result<bool> {
    let ds = SynthDataset::load(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let method = method_from_flags(&a.method, MethodSpec::gcn(2, FeatureSource::FeatEigen))?
        .unwrap_or_else(|| MethodSpec::gcn(2, FeatureSource::FeatEigen));
    if method.model.kind == ModelKind::Gin {
        bail!("GIN is a graph classifier; use `sweep --task csl`");
    }
    let mut tcfg = eigengnn::nn::TrainConfig::default();
    apply_train(&mut tcfg, &a.train);
    let f_mode: FMode = a.f_mode.parse()?;
    let m = renormalized_adjacency(&ds.graph);
    let basis = if method.features.uses_eigen() {
        Some(harness::graph_eigenbasis(&ds.graph, a.d, a.seed)?)
    } else {
        None
    };
    let h0 = harness::node_input(
        method.features,
        &ds.graph,
        Some(&ds.features),
        basis.as_ref(),
        f_mode,
        None,
        harness::sub_seed(a.seed, 3),
    )?;
    let out = harness::train_node_method(&method, &m, &h0, &ds.labels, ds.num_classes(), &ds.splits, &tcfg, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    out.write_history(std::fs::File::create(a.out.join("history.jsonl"))?)?;
    std::fs::write(a.out.join("model.json"), serde_json::to_string(&out.model)?)?;
    let row = ResultRow {
        method: method.name.clone(),
        gamma: Some(ds.config.gamma),
        train_per_class: None,
        d: method.features.uses_eigen().then_some(a.d),
        fold: None,
        repetition: 0,
        seed: a.seed,
        test_acc: out.test_acc,
        val_acc: out.best_val_acc,
        best_epoch: out.best_epoch,
    };
    let mut w = csv::Writer::from_path(a.out.join("results.csv"))?;
    w.serialize(&row)?;
    w.flush()?;
    write_manifest(
        &a.out,
        "train",
        json!({
            "data": a.data,
            "dataset": ds.config,
            "method": method,
            "train": tcfg,
            "d": a.d,
            "f_mode": f_mode,
            "seed": a.seed,
        }),
    )?;
    println!(
        "{}: best epoch {}, val {:.4}, test {:.4} -> {}",
        method.name,
        out.best_epoch,
        out.best_val_acc,
        out.test_acc,
        a.out.display()
    );
    Ok(true)
}
