use std::time::Instant;

use ndarray::Array2;
use rand::Rng as _;

use super::config::ExperimentConfig;
use super::report::{Check, Report};
use crate::csl::build_csl;
use crate::error::{Error, Result};
use crate::graph::{connected_erdos_renyi, SparseGraph};
use crate::nn::{gin_forward, graph_loss_and_grads, loss_and_grads, Dropout, GinForward, Grads, Model};
use crate::rng;
use crate::spectral::{dense_eig_oracle, equivariance_check, principal_angle, sgc_limit_check, top_eigenpairs, SolverOptions};
use crate::structure::{plain_normalized_adjacency, renormalized_adjacency};
use crate::synth::{generate_structure, SynthConfig};

/// Runs every check and reports each with its measured deviation.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<Report> {
    let v = &cfg.verify;
    let mut report = Report::default();
    let checks: [(&str, Box<dyn Fn() -> Result<Check>>); 5] = [
        ("eigensolver vs dense oracle", Box::new(|| oracle_check(v.oracle_graphs, cfg.seed))),
        ("spectral bounds", Box::new(|| bounds_check(v.bound_graphs, cfg.seed))),
        ("smoothing limit", Box::new(|| limit_check(v.limit_graphs, cfg.seed))),
        ("permutation equivariance", Box::new(|| equivariance_suite(v.equivariance_pairs, cfg.seed))),
        ("gradients", Box::new(|| gradient_suite(v.gradient_instances, cfg.seed))),
    ];
    for (name, f) in checks {
        match f() {
            Ok(c) => report.checks.push(c),
            Err(e) => report.checks.push(Check::new(name, false, e.to_string())),
        }
    }
    Ok(report)
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Result<Check> {
    let start = Instant::now();
    let (passed, detail) = f()?;
    Ok(Check::new(
        name,
        passed,
        format!("{detail} ({:.2}s)", start.elapsed().as_secs_f64()),
    ))
}

/// A mix of Erdos-Renyi, blockmodel and circulant graphs with at most 200 nodes.
pub fn mixed_graph(k: usize, seed: u64) -> SparseGraph {
    let mut r = rng::stream(seed, 50 + k as u64);
    match k % 3 {
        0 => {
            let n = r.random_range(20..=200);
            connected_erdos_renyi(n, r.random_range(0.05..0.3), r.random())
        }
        1 => {
            let l = r.random_range(2..=5);
            let cfg = SynthConfig {
                num_nodes: r.random_range(60..=200),
                num_communities: l,
                prob_in: 0.3,
                prob_out: 0.03,
                seed: r.random(),
                ..SynthConfig::desk()
            };
            generate_structure(&cfg).expect("valid blockmodel").0
        }
        _ => {
            let n = r.random_range(11..=120);
            let rr = r.random_range(2..n - 1);
            build_csl(n, rr).expect("valid skip")
        }
    }
}

/// Top-d eigenvalues against the dense oracle, and eigenvector angles where
/// the eigenvalue is separated from its neighbors.
pub fn oracle_check(graphs: usize, seed: u64) -> Result<Check> {
    timed("eigensolver vs dense oracle", || {
        let (mut worst_val, mut worst_angle) = (0.0f64, 0.0f64);
        let mut r = rng::stream(seed, 49);
        for k in 0..graphs {
            let g = mixed_graph(k, seed);
            let m = renormalized_adjacency(&g);
            let d = r.random_range(1..=10usize).min(g.num_nodes() - 1);
            let got = top_eigenpairs(&m, &SolverOptions::new(d).with_seed(seed + k as u64))?;
            let want = dense_eig_oracle(m.to_dense().view())?;
            for j in 0..d {
                worst_val = worst_val.max((got.eigenvalues[j] - want.eigenvalues[j]).abs());
                let lam = want.eigenvalues[j];
                let isolated = want
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .all(|(i, &mu)| i == j || (mu - lam).abs() > 1e-6);
                if isolated {
                    let a = got.vectors.column(j).to_vec();
                    let b = want.vectors.column(j).to_vec();
                    worst_angle = worst_angle.max(principal_angle(&a, &b));
                }
            }
        }
        Ok((
            worst_val < 1e-8 && worst_angle < 1e-6,
            format!("{graphs} graphs, max eigenvalue error {worst_val:.2e} (< 1e-8), max angle {worst_angle:.2e} (< 1e-6)"),
        ))
    })
}

/// Connected graphs of which every third is bipartite.
pub fn bounds_graph(k: usize, seed: u64) -> SparseGraph {
    let mut r = rng::stream(seed, 200 + k as u64);
    let n = r.random_range(4..=60usize);
    match k % 3 {
        0 => {
            // random tree plus edges between the two color classes
            let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (r.random_range(0..v), v)).collect();
            let mut depth = vec![0usize; n];
            for &(u, v) in &edges {
                depth[v] = depth[u] + 1;
            }
            for _ in 0..n {
                let (a, b) = (r.random_range(0..n), r.random_range(0..n));
                if depth[a] % 2 != depth[b] % 2 {
                    edges.push((a, b));
                }
            }
            SparseGraph::from_edge_list(&edges, n).expect("in range")
        }
        _ => connected_erdos_renyi(n, r.random_range(0.15..0.6), r.random()),
    }
}

pub fn bounds_check(graphs: usize, seed: u64) -> Result<Check> {
    timed("spectral bounds", || {
        let (mut out_of_range, mut top_err, mut bip_err, mut margin) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
        let mut bipartite = 0;
        for k in 0..graphs {
            let g = bounds_graph(k, seed);
            let renorm = dense_eig_oracle(renormalized_adjacency(&g).to_dense().view())?;
            let lo = renorm.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = renorm.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out_of_range = out_of_range.max((lo.abs() - 1.0).max(hi.abs() - 1.0).max(0.0));
            top_err = top_err.max((hi - 1.0).abs());
            let plain = dense_eig_oracle(plain_normalized_adjacency(&g)?.to_dense().view())?;
            let min = plain.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            if g.is_bipartite() {
                bipartite += 1;
                bip_err = bip_err.max((min + 1.0).abs());
            } else {
                margin = margin.min(min + 1.0);
            }
        }
        Ok((
            out_of_range <= 1e-8 && top_err <= 1e-8 && bip_err <= 1e-8 && margin > 1e-8,
            format!(
                "{graphs} graphs ({bipartite} bipartite): excess beyond [-1, 1] {out_of_range:.1e}, |lambda_max - 1| {top_err:.1e}, \
                 bipartite |lambda_min + 1| {bip_err:.1e}, non-bipartite min gap to -1 {margin:.1e}"
            ),
        ))
    })
}

/// Angle between F^200 x and the dominant eigenvector on ER(100, 0.1).
pub fn limit_check(graphs: usize, seed: u64) -> Result<Check> {
    timed("smoothing limit", || {
        let mut worst = 0.0f64;
        for k in 0..graphs {
            let g = connected_erdos_renyi(100, 0.1, seed.wrapping_add(300 + k as u64));
            let mut r = rng::stream(seed, 300 + k as u64);
            let x = Array2::from_shape_fn((100, 4), |_| r.random_range(-1.0..1.0));
            for a in sgc_limit_check(&g, &x, 200)? {
                worst = worst.max(a);
            }
        }
        Ok((worst < 1e-6, format!("{graphs} graphs, max angle {worst:.2e} (< 1e-6)")))
    })
}

/// Equivariance with `f = |x|` on graphs whose top eigenvalues are simple;
/// graphs that fail the gap test are redrawn.
pub fn equivariance_suite(pairs: usize, seed: u64) -> Result<Check> {
    timed("permutation equivariance", || {
        let d = 6;
        let mut worst = 0.0f64;
        let mut redrawn = 0;
        let mut attempt = 0u64;
        let mut done = 0;
        while done < pairs {
            attempt += 1;
            if attempt > 50 * pairs as u64 + 50 {
                return Err(Error::Config("could not find graphs with separated eigenvalues".into()));
            }
            let mut r = rng::stream(seed, 400 + attempt);
            let n = r.random_range(15..=60);
            let g = connected_erdos_renyi(n, r.random_range(0.1..0.4), r.random());
            let x = Array2::from_shape_fn((n, 3), |_| r.random_range(-1.0..1.0));
            let perm = rng::permutation(&mut r, n);
            let model = match done % 4 {
                0 => Model::gcn(&[3 + d, 8, 4], false, attempt)?,
                1 => Model::gcn(&[3 + d, 8, 8, 4], true, attempt)?,
                2 => Model::sgc(3 + d, 4, 2, attempt),
                _ => Model::gin(3 + d, 8, 4, attempt),
            };
            match equivariance_check(&g, Some(&x), &perm, d, &model) {
                Ok(dev) => {
                    worst = worst.max(dev);
                    done += 1;
                }
                Err(Error::EigenvalueGap { .. }) => redrawn += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((
            worst < 1e-8,
            format!("{pairs} pairs ({redrawn} graphs redrawn for gaps), max deviation {worst:.2e} (< 1e-8)"),
        ))
    })
}

/// Largest relative error between central differences and the analytic
/// gradient over all weights (and epsilon for GIN).
pub fn gradient_error(model: &Model, loss: impl Fn(&Model) -> f64, analytic: &Grads) -> f64 {
    let h = 1e-5;
    let rel = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
    let mut worst = 0.0f64;
    for l in 0..model.weights.len() {
        let cols = model.weights[l].ncols();
        for idx in 0..model.weights[l].len() {
            let (r, c) = (idx / cols, idx % cols);
            let mut plus = model.clone();
            plus.weights[l][[r, c]] += h;
            let mut minus = model.clone();
            minus.weights[l][[r, c]] -= h;
            worst = worst.max(rel((loss(&plus) - loss(&minus)) / (2.0 * h), analytic.weights[l][[r, c]]));
        }
    }
    if model.arch == crate::nn::Arch::Gin {
        let mut plus = model.clone();
        plus.epsilon += h;
        let mut minus = model.clone();
        minus.epsilon -= h;
        worst = worst.max(rel((loss(&plus) - loss(&minus)) / (2.0 * h), analytic.epsilon));
    }
    worst
}

/// Finite-difference checks for GCN, SGC, MLP and GIN on random small
/// instances, with dropout and weight decay active.
pub fn gradient_suite(instances: usize, seed: u64) -> Result<Check> {
    timed("gradients", || {
        let mut worst = [0.0f64; 4];
        for k in 0..instances {
            let mut r = rng::stream(seed, 600 + k as u64);
            let (f, h, c) = (r.random_range(2..6), r.random_range(2..6), r.random_range(2..4));
            let drop = Some(Dropout {
                rate: 0.2,
                seed: r.random(),
            });
            let wd = 1e-3;
            let n = r.random_range(6..14);
            let g = connected_erdos_renyi(n, 0.4, r.random());
            let m = renormalized_adjacency(&g);
            let x = Array2::from_shape_fn((n, f), |_| r.random_range(-1.0..1.0));
            let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
            let mask: Vec<usize> = (0..n).filter(|i| i % 3 != 0).collect();
            let node_models = [
                Model::gcn(&[f, h, h, c], k % 2 == 0, r.random())?,
                Model::sgc(f, c, r.random_range(1..4), r.random()),
                Model::mlp(f, h, c, r.random()),
            ];
            for (slot, model) in node_models.iter().enumerate() {
                let loss = |mm: &Model| {
                    let fwd = mm.forward_nodes(&m, &x, drop).expect("valid shapes");
                    loss_and_grads(mm, &fwd, &labels, &mask, wd).expect("nonempty mask").0
                };
                let fwd = model.forward_nodes(&m, &x, drop)?;
                let (_, grads) = loss_and_grads(model, &fwd, &labels, &mask, wd)?;
                worst[slot] = worst[slot].max(gradient_error(model, loss, &grads));
            }

            let graphs: Vec<SparseGraph> = (0..4).map(|_| connected_erdos_renyi(r.random_range(4..9), 0.5, r.random())).collect();
            let feats: Vec<Array2<f64>> = graphs
                .iter()
                .map(|g| Array2::from_shape_fn((g.num_nodes(), f), |_| r.random_range(-1.0..1.0)))
                .collect();
            let glabels: Vec<usize> = (0..4).map(|_| r.random_range(0..c)).collect();
            let gmask = vec![0, 1, 2, 3];
            let mut model = Model::gin(f, h, c, r.random());
            model.epsilon = r.random_range(-0.5..0.5);
            let forwards = |mm: &Model| -> Vec<GinForward> {
                graphs
                    .iter()
                    .zip(&feats)
                    .enumerate()
                    .map(|(i, (g, x))| {
                        let d = drop.map(|d| Dropout {
                            seed: d.seed.wrapping_add(i as u64),
                            ..d
                        });
                        gin_forward(g, x, mm, d).expect("valid shapes")
                    })
                    .collect()
            };
            let loss = |mm: &Model| graph_loss_and_grads(mm, &forwards(mm), &glabels, &gmask, wd).expect("nonempty").0;
            let (_, grads) = graph_loss_and_grads(&model, &forwards(&model), &glabels, &gmask, wd)?;
            worst[3] = worst[3].max(gradient_error(&model, loss, &grads));
        }
        let max = worst.iter().copied().fold(0.0, f64::max);
        Ok((
            max < 1e-4,
            format!(
                "{instances} instances, max relative error GCN {:.1e}, SGC {:.1e}, MLP {:.1e}, GIN {:.1e} (< 1e-4)",
                worst[0], worst[1], worst[2], worst[3]
            ),
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_verify_passes() {
        let mut cfg = ExperimentConfig::for_task(super::super::config::Task::Verify);
        cfg.verify.oracle_graphs = 6;
        cfg.verify.bound_graphs = 9;
        cfg.verify.limit_graphs = 2;
        cfg.verify.equivariance_pairs = 4;
        cfg.verify.gradient_instances = 2;
        let r = run_verify(&cfg).unwrap();
        assert_eq!(r.checks.len(), 5);
        for c in &r.checks {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn bounds_family_has_bipartite_members() {
        let count = (0..9).filter(|&k| bounds_graph(k, 0).is_bipartite()).count();
        assert!(count >= 3);
        assert!((0..9).all(|k| bounds_graph(k, 0).is_connected()));
    }

    #[test]
    fn broken_gradient_is_detected() {
        let model = Model::mlp(2, 2, 2, 0);
        let mut fake = Grads::zeros_like(&model);
        fake.weights[0][[0, 0]] = 1.0;
        let err = gradient_error(&model, |mm| mm.weights[0][[0, 0]] * 0.0, &fake);
        assert!(err > 0.5);
    }
}
