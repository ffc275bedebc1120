use ndarray::Array2;
use proptest::prelude::*;

use eigengnn::csl::{build_csl, build_csl_dataset, CslConfig};
use eigengnn::graph::{connected_erdos_renyi, erdos_renyi};
use eigengnn::nn::{softmax, Model};
use eigengnn::plugin::build_initial_basis;
use eigengnn::rng;
use eigengnn::spectral::{dense_eig_oracle, top_eigenpairs, FMode, SolverOptions};
use eigengnn::structure::{plain_normalized_adjacency, renormalized_adjacency};
use eigengnn::synth::{community_sizes, generate, SynthConfig};
use eigengnn::{SparseGraph, StructureKind, StructureMatrix};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(32)
}

fn sorted_spectrum(m: &StructureMatrix) -> Vec<f64> {
    let mut v = dense_eig_oracle(m.to_dense().view()).unwrap().eigenvalues;
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// A random tree with extra edges only between opposite parity classes.
fn bipartite_graph(n: usize, extra: usize, seed: u64) -> SparseGraph {
    let mut r = rng::stream(seed, 0);
    let mut edges = Vec::new();
    let mut side = vec![false; n];
    for v in 1..n {
        let u = rand::Rng::random_range(&mut r, 0..v);
        side[v] = !side[u];
        edges.push((u, v));
    }
    for _ in 0..extra {
        let (a, b) = (rand::Rng::random_range(&mut r, 0..n), rand::Rng::random_range(&mut r, 0..n));
        if side[a] != side[b] {
            edges.push((a, b));
        }
    }
    SparseGraph::from_edge_list(&edges, n).unwrap()
}

fn random_features(n: usize, f: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, 9);
    Array2::from_shape_fn((n, f), |_| rng::standard_normal(&mut r))
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn renormalized_spectrum_lies_in_unit_interval(n in 2usize..40, p in 0.05f64..0.6, seed in any::<u64>()) {
        let g = connected_erdos_renyi(n, p, seed);
        let s = sorted_spectrum(&renormalized_adjacency(&g));
        prop_assert!(s[0] >= -1.0 - 1e-8);
        prop_assert!((s[n - 1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn plain_norm_reaches_minus_one_iff_bipartite(n in 2usize..40, extra in 0usize..60, p in 0.1f64..0.6, seed in any::<u64>(), bip in any::<bool>()) {
        let g = if bip { bipartite_graph(n, extra, seed) } else { connected_erdos_renyi(n, p, seed) };
        let s = sorted_spectrum(&plain_normalized_adjacency(&g).unwrap());
        let hits = (s[0] + 1.0).abs() < 1e-8;
        prop_assert_eq!(hits, g.is_bipartite());
    }

    #[test]
    fn renormalization_commutes_with_relabeling(n in 1usize..30, p in 0.0f64..0.7, seed in any::<u64>()) {
        let g = erdos_renyi(n, p, seed);
        let perm = rng::permutation(&mut rng::stream(seed, 1), n);
        let a = renormalized_adjacency(&g).to_dense();
        let b = renormalized_adjacency(&g.permute(&perm).unwrap()).to_dense();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(b[[perm[i], perm[j]]], a[[i, j]]);
            }
        }
    }

    #[test]
    fn spmm_matches_dense_product(n in 1usize..50, p in 0.0f64..0.5, k in 1usize..6, seed in any::<u64>(), kind in 0usize..3) {
        // the degree-normalized kinds need every degree positive
        let g = if kind == 0 { erdos_renyi(n, p, seed) } else { connected_erdos_renyi(n + 1, p.max(0.05), seed) };
        let kind = [StructureKind::RenormAdjacency, StructureKind::PlainNormAdjacency, StructureKind::TransitionPower(2)][kind];
        let m = StructureMatrix::build(&g, kind).unwrap();
        let h = random_features(m.dim(), k, seed);
        let got = m.spmm(h.view()).unwrap();
        let want = m.to_dense().dot(&h);
        for (a, b) in got.iter().zip(want.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_is_orthonormal_and_residuals_are_truthful(n in 12usize..80, p in 0.1f64..0.5, d in 1usize..6, budget in prop::option::of(1usize..60), seed in any::<u64>()) {
        let g = connected_erdos_renyi(n, p, seed);
        let m = renormalized_adjacency(&g);
        let mut opts = SolverOptions::new(d).with_seed(seed);
        if let Some(b) = budget {
            opts = opts.with_max_iters(b);
        }
        let basis = top_eigenpairs(&m, &opts).unwrap();
        let q = &basis.vectors;
        let gram = q.t().dot(q);
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[[i, j]] - want).abs() < 1e-10);
            }
        }
        let aq = m.to_dense().dot(q);
        for j in 0..d {
            let r = (&aq.column(j) - &(&q.column(j) * basis.eigenvalues[j])).mapv(|x| x * x).sum().sqrt();
            prop_assert!((r - basis.residuals[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn solver_is_bitwise_deterministic(n in 12usize..60, d in 1usize..6, seed in any::<u64>()) {
        let g = connected_erdos_renyi(n, 0.2, seed);
        let m = renormalized_adjacency(&g);
        let opts = SolverOptions::new(d).with_seed(seed).with_tol(1e-9);
        prop_assert_eq!(top_eigenpairs(&m, &opts).unwrap(), top_eigenpairs(&m, &opts).unwrap());
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..20, cols in 1usize..12, scale in 0.1f64..500.0, seed in any::<u64>()) {
        let logits = random_features(rows, cols, seed) * scale;
        let p = softmax(&logits);
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn forward_without_dropout_is_pure(n in 2usize..25, arch in 0usize..4, seed in any::<u64>()) {
        let g = erdos_renyi(n, 0.3, seed);
        let m = renormalized_adjacency(&g);
        let x = random_features(n, 4, seed);
        let model = match arch {
            0 => Model::gcn(&[4, 8, 3], false, seed).unwrap(),
            1 => Model::gcn(&[4, 8, 8, 3], true, seed).unwrap(),
            2 => Model::sgc(4, 3, 2, seed),
            _ => Model::mlp(4, 8, 3, seed),
        };
        let a = model.forward_nodes(&m, &x, None).unwrap().logits().clone();
        let b = model.forward_nodes(&m, &x, None).unwrap().logits().clone();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn features_only_basis_leaves_the_model_unchanged(n in 2usize..25, f in 1usize..6, seed in any::<u64>()) {
        let g = erdos_renyi(n, 0.3, seed);
        let m = renormalized_adjacency(&g);
        let x = random_features(n, f, seed);
        let init = build_initial_basis(Some(&x), None, FMode::Abs).unwrap();
        let model = Model::gcn(&[f, 8, 3], false, seed).unwrap();
        let a = model.forward_nodes(&m, &x, None).unwrap().logits().clone();
        let b = model.forward_nodes(&m, &init.matrix, None).unwrap().logits().clone();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn communities_are_balanced(n in 1usize..5000, l in 1usize..50) {
        prop_assume!(l <= n);
        let sizes = community_sizes(n, l);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn synthetic_pipeline_is_deterministic_and_consistent(seed in any::<u64>(), gamma in 0.0f64..=1.0) {
        let cfg = SynthConfig { num_nodes: 200, num_communities: 4, prob_in: 0.2, prob_out: 0.02, gamma, seed, ..SynthConfig::desk() };
        let a = generate(&cfg, 5, 10).unwrap();
        prop_assert_eq!(&a, &generate(&cfg, 5, 10).unwrap());
        for i in 0..200 {
            prop_assert!(a.labels[i] == a.c_struc[i] || a.labels[i] == a.c_feat[i]);
        }
        let mut all: Vec<usize> = a.splits.train.iter().chain(&a.splits.val).chain(&a.splits.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..200).collect::<Vec<_>>());
    }

    #[test]
    fn csl_copies_are_four_regular_isospectral_relabelings(r_idx in 0usize..10, seed in any::<u64>()) {
        let r = eigengnn::csl::PAPER_R_SET[r_idx];
        let base = build_csl(41, r).unwrap();
        let cfg = CslConfig { r_set: vec![r], copies: 3, num_folds: 3, seed, ..CslConfig::default() };
        let ds = build_csl_dataset(&cfg).unwrap();
        let want = sorted_spectrum(&renormalized_adjacency(&base));
        for g in &ds.graphs {
            prop_assert!((0..41).all(|i| g.degree(i) == 4));
            prop_assert!(g.is_connected());
            let got = sorted_spectrum(&renormalized_adjacency(g));
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
