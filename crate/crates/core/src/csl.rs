//! Circulant skip-link graphs: a cycle on `n` nodes plus chords of length
//! `r`. Graphs with different `r` are 4-regular and locally identical, which
//! makes them hard for message passing with uninformative node inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::rng;

pub const PAPER_N: usize = 41;
pub const PAPER_R_SET: [usize; 10] = [2, 3, 4, 5, 6, 9, 11, 12, 13, 16];
pub const PAPER_COPIES: usize = 60;
pub const PAPER_FOLDS: usize = 5;

pub fn build_csl(n: usize, r: usize) -> Result<SparseGraph> {
    if !(r > 1 && r + 1 < n) {
        return Err(Error::InvalidSkip { n, r });
    }
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| [(i, (i + 1) % n), (i, (i + r) % n)]).collect();
    SparseGraph::from_edge_list(&edges, n)
}

/// Adjacency eigenvalues `2cos(2πj/n) + 2cos(2πjr/n)`, j = 0..n, in that
/// order. When `2r = n` each chord is shared by its two endpoints and the
/// second term halves.
pub fn circulant_spectrum_oracle(n: usize, r: usize) -> Result<Vec<f64>> {
    if !(r > 1 && r + 1 < n) {
        return Err(Error::InvalidSkip { n, r });
    }
    let chord = if 2 * r == n { 1.0 } else { 2.0 };
    let tau = std::f64::consts::TAU;
    Ok((0..n)
        .map(|j| {
            let a = tau * j as f64 / n as f64;
            2.0 * a.cos() + chord * (a * r as f64).cos()
        })
        .collect())
}

/// Eigenvalues of the renormalized adjacency: `(1 + λ_A) / (deg + 1)`.
pub fn circulant_renormalized_spectrum(n: usize, r: usize) -> Result<Vec<f64>> {
    let degree = if 2 * r == n { 3.0 } else { 4.0 };
    Ok(circulant_spectrum_oracle(n, r)?
        .into_iter()
        .map(|l| (1.0 + l) / (degree + 1.0))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CslConfig {
    pub n: usize,
    pub r_set: Vec<usize>,
    pub copies: usize,
    pub num_folds: usize,
    pub seed: u64,
    /// Relabel each copy by a random permutation; off keeps base graphs.
    pub permute: bool,
}

impl Default for CslConfig {
    fn default() -> Self {
        CslConfig {
            n: PAPER_N,
            r_set: PAPER_R_SET.to_vec(),
            copies: PAPER_COPIES,
            num_folds: PAPER_FOLDS,
            seed: 0,
            permute: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CslDataset {
    pub config: CslConfig,
    pub graphs: Vec<SparseGraph>,
    /// Index of the graph's `r` in the sorted `r_set`.
    pub labels: Vec<usize>,
    pub folds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CslManifest {
    pub n: usize,
    pub r_set: Vec<usize>,
    pub copies: usize,
    pub seed: u64,
    pub num_folds: usize,
    pub permute: bool,
    pub labels: Vec<usize>,
    pub folds: Vec<usize>,
}

pub fn build_csl_dataset(cfg: &CslConfig) -> Result<CslDataset> {
    let mut r_set = cfg.r_set.clone();
    r_set.sort_unstable();
    for (a, &r) in r_set.iter().enumerate() {
        for &s in &r_set[a + 1..] {
            if s == r || s + r == cfg.n {
                return Err(Error::AliasingSkip(r, s));
            }
        }
    }
    if cfg.num_folds == 0 || cfg.copies < cfg.num_folds {
        return Err(Error::Config(format!(
            "{} copies cannot fill {} folds",
            cfg.copies, cfg.num_folds
        )));
    }
    let bases = r_set.iter().map(|&r| build_csl(cfg.n, r)).collect::<Result<Vec<_>>>()?;
    let mut graphs = Vec::with_capacity(bases.len() * cfg.copies);
    let mut labels = Vec::with_capacity(graphs.capacity());
    for (label, base) in bases.iter().enumerate() {
        for copy in 0..cfg.copies {
            let index = (label * cfg.copies + copy) as u64;
            let g = if cfg.permute {
                base.permute(&rng::permutation(&mut rng::stream(cfg.seed, 1000 + index), cfg.n))?
            } else {
                base.clone()
            };
            graphs.push(g);
            labels.push(label);
        }
    }
    let folds = stratified_folds(&labels, cfg.num_folds, cfg.seed);
    Ok(CslDataset {
        config: CslConfig { r_set, ..cfg.clone() },
        graphs,
        labels,
        folds,
    })
}

/// Fold id per item: within each class, a seeded shuffle dealt round-robin.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    let mut folds = vec![0; labels.len()];
    let mut r = rng::stream(seed, 7);
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rng::shuffle(&mut r, &mut members);
        for (pos, i) in members.into_iter().enumerate() {
            folds[i] = pos % k;
        }
    }
    folds
}

impl CslDataset {
    pub fn num_classes(&self) -> usize {
        self.config.r_set.len()
    }

    /// `(train, test)` graph indices for one fold.
    pub fn fold_split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.graphs.len()).partition(|&i| self.folds[i] != fold)
    }

    pub fn manifest(&self) -> CslManifest {
        CslManifest {
            n: self.config.n,
            r_set: self.config.r_set.clone(),
            copies: self.config.copies,
            seed: self.config.seed,
            num_folds: self.config.num_folds,
            permute: self.config.permute,
            labels: self.labels.clone(),
            folds: self.folds.clone(),
        }
    }

    /// `manifest.json` plus `graph_0000.txt`, `graph_0001.txt`, ...
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, g) in self.graphs.iter().enumerate() {
            g.write_edge_list(&dir.join(format!("graph_{i:04}.txt")))?;
        }
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest())?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<CslDataset> {
        let m: CslManifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let graphs = (0..m.labels.len())
            .map(|i| SparseGraph::read_edge_list(&dir.join(format!("graph_{i:04}.txt")), Some(m.n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CslDataset {
            config: CslConfig {
                n: m.n,
                r_set: m.r_set,
                copies: m.copies,
                num_folds: m.num_folds,
                seed: m.seed,
                permute: m.permute,
            },
            graphs,
            labels: m.labels,
            folds: m.folds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::dense_eig_oracle;
    use crate::structure::renormalized_adjacency;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    #[test]
    fn small_examples() {
        let g = build_csl(13, 2).unwrap();
        assert_eq!(g.num_nodes(), 13);
        assert_eq!(g.num_edges(), 26);
        assert!(g.degrees().iter().all(|&d| d == 4));
        let g = build_csl(41, 2).unwrap();
        assert!(g.degrees().iter().all(|&d| d == 4));
        assert!(g.is_connected());
        assert!(build_csl(10, 1).is_err());
        assert!(build_csl(10, 9).is_err());
        assert!(build_csl(10, 10).is_err());
    }

    #[test]
    fn spectrum_matches_dense_oracle() {
        for (n, r) in [(13, 2), (13, 3), (41, 9), (12, 6)] {
            let g = build_csl(n, r).unwrap();
            let analytic = circulant_spectrum_oracle(n, r).unwrap();
            let dense = dense_eig_oracle(g.to_dense().view()).unwrap();
            for (a, b) in sorted(analytic).iter().zip(sorted(dense.eigenvalues)) {
                assert!((a - b).abs() < 1e-10, "n={n} r={r}");
            }
            let renorm = circulant_renormalized_spectrum(n, r).unwrap();
            let dense = dense_eig_oracle(renormalized_adjacency(&g).to_dense().view()).unwrap();
            for (a, b) in sorted(renorm).iter().zip(sorted(dense.eigenvalues)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trivial_spectral_facts() {
        let s = circulant_spectrum_oracle(13, 2).unwrap();
        assert!((s[0] - 4.0).abs() < 1e-15);
        assert!((circulant_renormalized_spectrum(13, 2).unwrap()[0] - 1.0).abs() < 1e-15);
        for j in 1..13 {
            assert!((s[j] - s[13 - j]).abs() < 1e-12);
        }
    }

    #[test]
    fn class_spectra_are_distinct() {
        let spectra: Vec<Vec<f64>> = PAPER_R_SET
            .iter()
            .map(|&r| sorted(circulant_spectrum_oracle(PAPER_N, r).unwrap()))
            .collect();
        for a in 0..spectra.len() {
            for b in a + 1..spectra.len() {
                let gap = spectra[a].iter().zip(&spectra[b]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(gap > 1e-6, "classes {a} and {b}");
            }
        }
    }

    #[test]
    fn dataset_shapes_and_folds() {
        let ds = build_csl_dataset(&CslConfig::default()).unwrap();
        assert_eq!(ds.graphs.len(), 600);
        for c in 0..10 {
            assert_eq!(ds.labels.iter().filter(|&&l| l == c).count(), 60);
            for f in 0..5 {
                let count = (0..600).filter(|&i| ds.labels[i] == c && ds.folds[i] == f).count();
                assert_eq!(count, 12);
            }
        }
        let base = build_csl(41, 2).unwrap();
        let want = sorted(dense_eig_oracle(base.to_dense().view()).unwrap().eigenvalues);
        for g in &ds.graphs[..3] {
            let got = sorted(dense_eig_oracle(g.to_dense().view()).unwrap().eigenvalues);
            for (a, b) in want.iter().zip(&got) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unpermuted_single_copies() {
        let cfg = CslConfig {
            copies: 1,
            num_folds: 1,
            permute: false,
            ..CslConfig::default()
        };
        let ds = build_csl_dataset(&cfg).unwrap();
        assert_eq!(ds.graphs.len(), 10);
        for (g, &r) in ds.graphs.iter().zip(&PAPER_R_SET) {
            assert_eq!(g, &build_csl(41, r).unwrap());
        }
    }

    #[test]
    fn aliasing_is_rejected() {
        let cfg = CslConfig {
            r_set: vec![2, 39],
            ..CslConfig::default()
        };
        assert!(matches!(build_csl_dataset(&cfg), Err(Error::AliasingSkip(2, 39))));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CslConfig {
            n: 13,
            r_set: vec![2, 3],
            copies: 4,
            num_folds: 2,
            ..CslConfig::default()
        };
        let ds = build_csl_dataset(&cfg).unwrap();
        ds.save(dir.path()).unwrap();
        assert_eq!(CslDataset::load(dir.path()).unwrap(), ds);
    }
}
