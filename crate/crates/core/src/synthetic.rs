//! Seeded synthetic dataset generators: stochastic block models for the
//! similarity-error oracle and planted coarse/fine Gaussian hierarchies for
//! end-to-end recovery experiments.

use crate::error::Result;
use crate::graph::{NodeSplit, TextRichGraph};
use crate::matrix::Matrix;
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng as _;

/// Stochastic block model settings.
#[derive(Clone, Debug)]
pub struct SbmConfig {
    pub n: usize,
    pub blocks: usize,
    /// Within-block edge probability.
    pub p_in: f64,
    /// Across-block edge probability.
    pub p_out: f64,
    /// Fraction of nodes put into the train split.
    pub train_fraction: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig {
            n: 100,
            blocks: 2,
            p_in: 0.1,
            p_out: 0.01,
            train_fraction: 0.3,
            feature_dim: 4,
            seed: 0,
        }
    }
}

/// Generates a fully labeled SBM graph (block = class) with Gaussian features
/// around per-block means and a seeded train/val/test split.
pub fn generate_sbm(config: &SbmConfig) -> Result<(TextRichGraph, NodeSplit)> {
    let n = config.n;
    let blocks = config.blocks.max(2);
    let labels: Vec<i32> = (0..n).map(|i| (i % blocks) as i32).collect();

    let mut edge_rng = rng::stream(config.seed, &[0xb1]);
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for j in (i + 1)..n as u32 {
            let p = if labels[i as usize] == labels[j as usize] {
                config.p_in
            } else {
                config.p_out
            };
            if edge_rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let mut feat_rng = rng::stream(config.seed, &[0xb2]);
    let mut features = Matrix::zeros(n, config.feature_dim);
    for i in 0..n {
        let block = labels[i] as usize;
        for j in 0..config.feature_dim {
            let mean = if j % blocks == block { 1.0 } else { 0.0 };
            features.set(i, j, mean + 0.3 * gauss(&mut feat_rng));
        }
    }

    let graph = TextRichGraph::new(n, edges, features, labels, blocks, None)?;

    let mut split_rng = rng::stream(config.seed, &[0xb3]);
    let mut ids: Vec<u32> = (0..n as u32).collect();
    ids.shuffle(&mut split_rng);
    let n_train = ((n as f64) * config.train_fraction).round() as usize;
    let n_val = ((n - n_train) / 2).max(1).min(n - n_train);
    let train = ids[..n_train].to_vec();
    let val = ids[n_train..n_train + n_val].to_vec();
    let test = ids[n_train + n_val..].to_vec();
    let split = NodeSplit::new(train, val, test, &graph)?;
    Ok((graph, split))
}

/// Planted two-level Gaussian mixture settings.
#[derive(Clone, Debug)]
pub struct PlantedHierarchyConfig {
    pub coarse: usize,
    /// Fine clusters per coarse cluster.
    pub fine_per_coarse: usize,
    pub nodes_per_fine: usize,
    pub feature_dim: usize,
    /// Distance between coarse centers.
    pub coarse_scale: f64,
    /// Distance of fine centers from their coarse center.
    pub fine_scale: f64,
    /// Standard deviation of point noise around fine centers.
    pub sigma: f64,
    /// Edges sampled per node, endpoints drawn within the same fine cluster.
    pub edges_per_node: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for PlantedHierarchyConfig {
    fn default() -> Self {
        PlantedHierarchyConfig {
            coarse: 4,
            fine_per_coarse: 4,
            nodes_per_fine: 100,
            feature_dim: 16,
            coarse_scale: 10.0,
            fine_scale: 2.0,
            sigma: 0.4,
            edges_per_node: 3,
            train_fraction: 0.3,
            seed: 0,
        }
    }
}

/// A planted dataset: the graph (labels = coarse classes, texts tagged with
/// the fine cluster), the split, and the ground-truth fine labels.
pub struct PlantedHierarchy {
    pub graph: TextRichGraph,
    pub split: NodeSplit,
    pub fine_labels: Vec<i32>,
}

/// Marker tag of fine cluster `f`, embedded in synthetic texts for the mock
/// refiner.
pub fn fine_tag(f: usize) -> String {
    format!("F{f:02}")
}

/// Generates a coarse x fine Gaussian mixture with homophilous edges inside
/// fine clusters and marker-tagged texts.
pub fn generate_planted_hierarchy(config: &PlantedHierarchyConfig) -> Result<PlantedHierarchy> {
    let num_fine = config.coarse * config.fine_per_coarse;
    let n = num_fine * config.nodes_per_fine;
    let d = config.feature_dim;

    let mut center_rng = rng::stream(config.seed, &[0xc1]);
    // Coarse centers: random unit directions scaled apart.
    let mut coarse_centers = Vec::with_capacity(config.coarse);
    for _ in 0..config.coarse {
        let mut c: Vec<f64> = (0..d).map(|_| gauss(&mut center_rng)).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        for v in &mut c {
            *v *= config.coarse_scale / norm;
        }
        coarse_centers.push(c);
    }
    // Fine centers: offsets from their coarse center.
    let mut fine_centers = Vec::with_capacity(num_fine);
    for coarse in 0..config.coarse {
        for _ in 0..config.fine_per_coarse {
            let mut offset: Vec<f64> = (0..d).map(|_| gauss(&mut center_rng)).collect();
            let norm = offset.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
            let center: Vec<f64> = coarse_centers[coarse]
                .iter()
                .zip(&offset)
                .map(|(c, o)| c + o * config.fine_scale / norm)
                .collect();
            let _ = &mut offset;
            fine_centers.push(center);
        }
    }

    let mut point_rng = rng::stream(config.seed, &[0xc2]);
    let mut features = Matrix::zeros(n, d);
    let mut fine_labels = vec![0i32; n];
    let mut coarse_labels = vec![0i32; n];
    let mut texts = Vec::with_capacity(n);
    for i in 0..n {
        let fine = i / config.nodes_per_fine;
        let coarse = fine / config.fine_per_coarse;
        fine_labels[i] = fine as i32;
        coarse_labels[i] = coarse as i32;
        for j in 0..d {
            features.set(i, j, fine_centers[fine][j] + config.sigma * gauss(&mut point_rng));
        }
        texts.push(format!(
            "[{}] document {i} about topic {} in area {coarse}",
            fine_tag(fine),
            fine_tag(fine)
        ));
    }

    // Homophilous edges: per node, a few partners from the same fine cluster.
    let mut edge_rng = rng::stream(config.seed, &[0xc3]);
    let mut edges = Vec::new();
    let per_fine = config.nodes_per_fine;
    for i in 0..n {
        let fine = i / per_fine;
        let base = fine * per_fine;
        for _ in 0..config.edges_per_node {
            let j = base + edge_rng.random_range(0..per_fine);
            if j != i {
                edges.push((i as u32, j as u32));
            }
        }
    }

    let graph = TextRichGraph::new(
        n,
        edges,
        features,
        coarse_labels,
        config.coarse,
        Some(texts),
    )?;

    let mut split_rng = rng::stream(config.seed, &[0xc4]);
    let mut ids: Vec<u32> = (0..n as u32).collect();
    ids.shuffle(&mut split_rng);
    let n_train = ((n as f64) * config.train_fraction).round() as usize;
    let n_val = (n - n_train) / 2;
    let split = NodeSplit::new(
        ids[..n_train].to_vec(),
        ids[n_train..n_train + n_val].to_vec(),
        ids[n_train + n_val..].to_vec(),
        &graph,
    )?;

    Ok(PlantedHierarchy {
        graph,
        split,
        fine_labels,
    })
}

/// Standard normal via Box-Muller.
fn gauss(rng: &mut rng::Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmeans::{kmeans, KMeansConfig};
    use crate::metrics::ari;
    use crate::similarity::edge_homophily;

    #[test]
    fn sbm_is_homophilous() {
        let (graph, _) = generate_sbm(&SbmConfig::default()).unwrap();
        let h = edge_homophily(&graph).unwrap();
        assert!(h > 0.5, "homophily {h}");
    }

    #[test]
    fn sbm_is_deterministic() {
        let a = generate_sbm(&SbmConfig::default()).unwrap();
        let b = generate_sbm(&SbmConfig::default()).unwrap();
        assert_eq!(a.0.edges(), b.0.edges());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn zero_noise_mixture_is_exactly_recoverable() {
        let config = PlantedHierarchyConfig {
            coarse: 2,
            fine_per_coarse: 2,
            nodes_per_fine: 20,
            sigma: 0.0,
            seed: 3,
            ..Default::default()
        };
        let planted = generate_planted_hierarchy(&config).unwrap();
        let clustering = kmeans(planted.graph.features(), &KMeansConfig::new(4, 0)).unwrap();
        let truth: Vec<u32> = planted.fine_labels.iter().map(|&l| l as u32).collect();
        assert_eq!(ari(&clustering.assignment, &truth), 1.0);
    }

    #[test]
    fn planted_texts_carry_fine_tags() {
        let config = PlantedHierarchyConfig {
            coarse: 2,
            fine_per_coarse: 2,
            nodes_per_fine: 5,
            ..Default::default()
        };
        let planted = generate_planted_hierarchy(&config).unwrap();
        let texts = planted.graph.texts().unwrap();
        assert!(texts[0].starts_with("[F00]"));
        assert!(texts[19].starts_with("[F03]"));
    }
}
