//! Pipeline orchestration: contrastive pretraining, taxonomy construction,
//! regularized classifier training, and evaluation.
//!
//! Stage one and stage two train separate encoders. The stage-one encoder is
//! frozen for taxonomy construction and unused afterwards; stage two starts
//! fresh and keeps the leaf membership fixed while prototypes follow the
//! embeddings.

use crate::encoder::{
    augment, backprop, classify, encode, encode_traced, AugmentedView, EncoderConfig,
    EncoderParams, ForwardMode, LinearHead,
};
use crate::error::{Error, Result};
use crate::graph::{NodeSplit, TextRichGraph};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::matrix::Matrix;
use crate::metrics::{accuracy, ari, mean_std, pca_2d, per_class_accuracy};
use crate::objectives::{
    ccc, pairwise_distances, prototypes, sgcl_loss, total_loss, LossReport,
};
use crate::optim::Adam;
use crate::refiner::{
    refine, LlmConfig, LlmRefiner, MockRefiner, Refiner, RefinerConfig, Transcript,
};
use crate::rng;
use crate::similarity::{build_similarity, SimilarityMode};
use crate::taxonomy::{build_hierarchy, cophenetic_matrix, TaxonomyTree, TreeShape};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

/// Encoder architecture knobs, instantiated per graph (the input dimension
/// comes from the data).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct EncoderSettings {
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
    pub use_batchnorm: bool,
    pub use_residual: bool,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        EncoderSettings {
            hidden_dims: vec![64, 64],
            dropout: 0.5,
            use_batchnorm: false,
            use_residual: false,
        }
    }
}

impl EncoderSettings {
    fn instantiate(&self, input_dim: usize, seed: u64) -> Result<EncoderParams> {
        EncoderParams::init(EncoderConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            dropout: self.dropout,
            use_batchnorm: self.use_batchnorm,
            use_residual: self.use_residual,
            seed,
        })
    }
}

/// Stage-one (contrastive) settings.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SgclStageConfig {
    pub gamma: f64,
    pub epochs: usize,
    pub p_edge: f64,
    pub p_feat: f64,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for SgclStageConfig {
    fn default() -> Self {
        SgclStageConfig {
            gamma: 1.0,
            epochs: 300,
            p_edge: 0.3,
            p_feat: 0.3,
            lr: 1e-3,
            weight_decay: 5e-4,
        }
    }
}

/// Stage-two (classification) settings.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct DownstreamConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        DownstreamConfig {
            lambda: 1.0,
            epochs: 300,
            lr: 1e-3,
            weight_decay: 5e-4,
            patience: 50,
        }
    }
}

/// Which refiner backs taxonomy construction.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RefinerChoice {
    /// Pure hierarchical K-Means, no refinement pass.
    None,
    /// Deterministic marker-tag mock.
    Mock,
    /// OpenAI-compatible chat endpoint.
    Llm { base_url: String, model: String },
}

impl RefinerChoice {
    fn build(&self, seed: u64) -> Result<Option<Box<dyn Refiner>>> {
        match self {
            RefinerChoice::None => Ok(None),
            RefinerChoice::Mock => Ok(Some(Box::new(MockRefiner::new(seed)))),
            RefinerChoice::Llm { base_url, model } => {
                let refiner = LlmRefiner::new(LlmConfig::new(base_url.clone(), model.clone()))?;
                Ok(Some(Box::new(refiner)))
            }
        }
    }
}

/// Everything one experiment needs. The three ablation switches are
/// `similarity_mode` (supcon removes the structural rule), `refiner_choice`
/// (`None` removes LLM refinement), and `downstream.lambda` (0 removes the
/// cophenetic regularizer).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PipelineConfig {
    pub encoder_pretrain: EncoderSettings,
    pub encoder_classifier: EncoderSettings,
    pub sgcl: SgclStageConfig,
    pub shape: TreeShape,
    pub refiner: RefinerConfig,
    pub refiner_choice: RefinerChoice,
    pub similarity_mode: SimilarityMode,
    pub downstream: DownstreamConfig,
    pub seeds: Vec<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            encoder_pretrain: EncoderSettings::default(),
            encoder_classifier: EncoderSettings::default(),
            sgcl: SgclStageConfig::default(),
            shape: TreeShape::dataset_default("cora").unwrap(),
            refiner: RefinerConfig::default(),
            refiner_choice: RefinerChoice::Mock,
            similarity_mode: SimilarityMode::Full,
            downstream: DownstreamConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

impl PipelineConfig {
    /// Stable hash of the canonical JSON form; recorded in metrics and
    /// manifests.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        crate::refiner::fnv1a_hex(&json)
    }
}

// ---------------------------------------------------------------------------
// Stage 1: contrastive pretraining
// ---------------------------------------------------------------------------

/// Pretrains the contrastive encoder. Each epoch draws two seeded
/// augmentations, encodes both views with the shared encoder, and steps on
/// the similarity-guided loss.
pub fn pretrain(
    graph: &TextRichGraph,
    split: &NodeSplit,
    config: &PipelineConfig,
    seed: u64,
) -> Result<(EncoderParams, Vec<LossReport>)> {
    let mut params = config
        .encoder_pretrain
        .instantiate(graph.feature_dim(), rng::derive_seed(seed, &[0x10]))?;
    let sim = build_similarity(graph, split, config.similarity_mode);
    let mut adam = Adam::new(params.num_params(), config.sgcl.lr, config.sgcl.weight_decay);
    let mut log = Vec::with_capacity(config.sgcl.epochs);

    for epoch in 0..config.sgcl.epochs {
        let view1 = augment(
            graph,
            config.sgcl.p_edge,
            config.sgcl.p_feat,
            rng::derive_seed(seed, &[0x20, epoch as u64, 1]),
        );
        let view2 = augment(
            graph,
            config.sgcl.p_edge,
            config.sgcl.p_feat,
            rng::derive_seed(seed, &[0x20, epoch as u64, 2]),
        );
        let mode1 = ForwardMode::Train {
            dropout_seed: rng::derive_seed(seed, &[0x21, epoch as u64, 1]),
        };
        let mode2 = ForwardMode::Train {
            dropout_seed: rng::derive_seed(seed, &[0x21, epoch as u64, 2]),
        };
        let (z1, tape1) = encode_traced(&params, graph, &view1, mode1, true);
        let (z2, tape2) = encode_traced(&params, graph, &view2, mode2, true);
        let (loss, g1, g2) = sgcl_loss(&z1, &z2, &sim, config.sgcl.gamma)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: "contrastive loss".into(),
            });
        }
        let mut grads = backprop(&params, &view1, &tape1, &g1);
        grads.add_assign(&backprop(&params, &view2, &tape2, &g2));
        if !grads.all_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: "contrastive gradients".into(),
            });
        }
        let mut flat = params.to_flat();
        adam.step(&mut flat, &grads.to_flat());
        params.assign_flat(&flat);

        let mut components = BTreeMap::new();
        components.insert("sgcl".to_string(), loss);
        log.push(LossReport {
            total: loss,
            components,
            ccc_value: None,
        });
    }
    Ok((params, log))
}

// ---------------------------------------------------------------------------
// Taxonomy construction
// ---------------------------------------------------------------------------

/// Embeds the graph with the frozen encoder, clusters to the finest level,
/// optionally refines, and builds the tree bottom-up. Leaf labels and
/// summaries come from the refiner when one runs. The transcript accumulates
/// in `transcript` even when refinement aborts, so callers can persist it.
pub fn construct_taxonomy(
    encoder: &EncoderParams,
    graph: &TextRichGraph,
    shape: &TreeShape,
    refiner_config: &RefinerConfig,
    refiner: Option<&mut dyn Refiner>,
    seed: u64,
    transcript: &mut Transcript,
) -> Result<TaxonomyTree> {
    shape.validate()?;
    if shape.leaf_count() < 2 {
        return Err(Error::InvalidConfig(
            "finest level must have at least 2 clusters".into(),
        ));
    }
    let z = encode(
        encoder,
        graph,
        &AugmentedView::full(graph),
        ForwardMode::Eval,
        true,
    );
    let clustering = kmeans(
        &z,
        &KMeansConfig::new(shape.leaf_count(), rng::derive_seed(seed, &[0x30])),
    )?;

    let (clustering, digests) = match refiner {
        Some(refiner) => {
            let texts = graph.texts().ok_or_else(|| {
                Error::InvalidConfig("refinement requires node texts".into())
            })?;
            let outcome = refine(&clustering, &z, texts, refiner, refiner_config, transcript)?;
            (outcome.assignment, Some(outcome.digests))
        }
        None => (clustering, None),
    };

    let mut tree = build_hierarchy(&clustering, shape, rng::derive_seed(seed, &[0x31]))?;
    if let Some(digests) = digests {
        let leaf_ids: Vec<u32> = tree.leaves().map(|l| l.id).collect();
        for (leaf_id, digest) in leaf_ids.into_iter().zip(digests) {
            let node = tree.nodes.iter_mut().find(|n| n.id == leaf_id).unwrap();
            node.label = digest.label;
            node.summary = digest.summary;
        }
        tree.validate()?;
    }
    Ok(tree)
}

// ---------------------------------------------------------------------------
// Stage 2: regularized classifier
// ---------------------------------------------------------------------------

/// Per-seed result of stage two.
#[derive(Clone, Debug, Serialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub accuracy: f64,
    pub val_accuracy: f64,
    pub per_class: Vec<(i32, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ccc_final: Option<f64>,
    pub epochs_run: usize,
    pub config_hash: String,
}

/// Trained stage-two model plus its metrics and per-epoch loss log.
pub struct TrainOutcome {
    pub encoder: EncoderParams,
    pub head: LinearHead,
    pub metrics: SeedMetrics,
    pub log: Vec<LossReport>,
}

/// Trains the classification encoder and head with the cophenetic
/// regularizer from the tree. Leaf membership stays fixed; prototypes are
/// recomputed from the current embeddings each step. The best-validation
/// parameters are returned.
pub fn train_classifier(
    graph: &TextRichGraph,
    split: &NodeSplit,
    tree: &TaxonomyTree,
    config: &PipelineConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if split.train.is_empty() {
        return Err(Error::EmptySupervision);
    }
    if tree.num_graph_nodes() != graph.n() {
        return Err(Error::DimensionMismatch(format!(
            "tree covers {} nodes, graph has {}",
            tree.num_graph_nodes(),
            graph.n()
        )));
    }
    let assignment = tree.leaf_assignment()?;
    let d_coph = cophenetic_matrix(tree);
    let lambda = config.downstream.lambda;

    let mut encoder = config
        .encoder_classifier
        .instantiate(graph.feature_dim(), rng::derive_seed(seed, &[0x40]))?;
    let mut head = LinearHead::init(
        encoder.config.embedding_dim(),
        graph.num_classes(),
        rng::derive_seed(seed, &[0x41]),
    );
    let n_params = encoder.num_params() + head.num_params();
    let mut adam = Adam::new(n_params, config.downstream.lr, config.downstream.weight_decay);
    let full_view = AugmentedView::full(graph);

    let mut best: Option<(f64, EncoderParams, LinearHead)> = None;
    let mut best_epoch = 0usize;
    let mut epochs_run = 0usize;
    let mut log = Vec::new();

    for epoch in 0..config.downstream.epochs {
        epochs_run = epoch + 1;
        let mode = ForwardMode::Train {
            dropout_seed: rng::derive_seed(seed, &[0x42, epoch as u64]),
        };
        let (z, tape) = encode_traced(&encoder, graph, &full_view, mode, false);
        let logits = head.forward(&z);
        let total = total_loss(
            &logits,
            graph.labels(),
            &split.train,
            &z,
            &assignment,
            &d_coph,
            lambda,
        )?;
        if !total.report.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: "classification loss".into(),
            });
        }

        let (g_w, g_b, g_z_head) = head.backward(&z, &total.grad_logits);
        let g_z = g_z_head.add(&total.grad_z);
        let enc_grads = backprop(&encoder, &full_view, &tape, &g_z);
        if !enc_grads.all_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: "classification gradients".into(),
            });
        }

        let mut flat = encoder.to_flat();
        flat.extend(head.to_flat());
        let mut grad_flat = enc_grads.to_flat();
        grad_flat.extend(g_w.data());
        grad_flat.extend(&g_b);
        adam.step(&mut flat, &grad_flat);
        let enc_len = encoder.num_params();
        encoder.assign_flat(&flat[..enc_len]);
        head.assign_flat(&flat[enc_len..]);

        log.push(total.report);

        // Validation selection; ties keep the most recent model, so training
        // on a plateau still accumulates regularization.
        let z_eval = encode(&encoder, graph, &full_view, ForwardMode::Eval, false);
        let logits_eval = head.forward(&z_eval);
        let val_acc = accuracy(&logits_eval, graph.labels(), &split.val);
        if best.as_ref().is_none_or(|(b, _, _)| val_acc >= *b) {
            best = Some((val_acc, encoder.clone(), head.clone()));
            best_epoch = epoch;
        }
        if epoch - best_epoch >= config.downstream.patience {
            break;
        }
    }

    let (val_accuracy, encoder, head) = best.unwrap_or((0.0, encoder, head));
    let z = encode(&encoder, graph, &full_view, ForwardMode::Eval, false);
    let logits = classify(&head, &z);
    let test_accuracy = accuracy(&logits, graph.labels(), &split.test);
    let per_class = per_class_accuracy(&logits, graph.labels(), &split.test);
    let protos = prototypes(&z, &assignment)?;
    let ccc_final = ccc(&pairwise_distances(&protos), &d_coph);

    Ok(TrainOutcome {
        encoder,
        head,
        metrics: SeedMetrics {
            seed,
            accuracy: test_accuracy,
            val_accuracy,
            per_class,
            ccc_final,
            epochs_run,
            config_hash: config.config_hash(),
        },
        log,
    })
}

// ---------------------------------------------------------------------------
// Evaluation and exports
// ---------------------------------------------------------------------------

/// Evaluation artifacts for a trained model.
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class: Vec<(i32, f64)>,
    pub ccc_final: Option<f64>,
    /// Prototype-distance matrix over leaf clusters.
    pub distances: Matrix,
    /// `n x 2` PCA projection of the embeddings.
    pub projection: Matrix,
}

/// Evaluates a trained encoder and head against the taxonomy.
pub fn evaluate(
    encoder: &EncoderParams,
    head: &LinearHead,
    graph: &TextRichGraph,
    split: &NodeSplit,
    tree: &TaxonomyTree,
) -> Result<EvalReport> {
    let z = encode(
        encoder,
        graph,
        &AugmentedView::full(graph),
        ForwardMode::Eval,
        false,
    );
    let logits = classify(head, &z);
    let assignment = tree.leaf_assignment()?;
    let d_coph = cophenetic_matrix(tree);
    let protos = prototypes(&z, &assignment)?;
    let distances = pairwise_distances(&protos);
    Ok(EvalReport {
        accuracy: accuracy(&logits, graph.labels(), &split.test),
        per_class: per_class_accuracy(&logits, graph.labels(), &split.test),
        ccc_final: ccc(&distances, &d_coph),
        distances,
        projection: pca_2d(&z),
    })
}

/// Writes a symmetric distance matrix as a plain CSV of floats.
pub fn write_distance_csv(path: &std::path::Path, d: &Matrix) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..d.rows() {
        let row: Vec<String> = (0..d.cols()).map(|j| format!("{}", d.get(i, j))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a distance CSV back.
pub fn read_distance_csv(path: &std::path::Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Other(format!("bad distance csv: {e}")))?;
        rows.push(row);
    }
    Ok(Matrix::from_rows(&rows))
}

/// Writes the `node,x,y,label` projection CSV.
pub fn write_projection_csv(
    path: &std::path::Path,
    projection: &Matrix,
    labels: &[i32],
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "node,x,y,label")?;
    for i in 0..projection.rows() {
        writeln!(
            w,
            "{},{},{},{}",
            i,
            projection.get(i, 0),
            projection.get(i, 1),
            labels[i]
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

/// One seed end to end: pretrain, build the taxonomy, train the classifier.
pub struct PipelineOutcome {
    pub tree: TaxonomyTree,
    pub transcript: Transcript,
    pub outcome: TrainOutcome,
}

pub fn run_seed(
    graph: &TextRichGraph,
    split: &NodeSplit,
    config: &PipelineConfig,
    seed: u64,
) -> Result<PipelineOutcome> {
    let (encoder1, _) = pretrain(graph, split, config, seed)?;
    let mut refiner = config.refiner_choice.build(seed)?;
    let mut transcript = Transcript::default();
    let tree = construct_taxonomy(
        &encoder1,
        graph,
        &config.shape,
        &config.refiner,
        refiner.as_mut().map(|r| r.as_mut() as &mut dyn Refiner),
        seed,
        &mut transcript,
    )?;
    let outcome = train_classifier(graph, split, &tree, config, seed)?;
    Ok(PipelineOutcome {
        tree,
        transcript,
        outcome,
    })
}

/// Aggregate over the configured seed list.
#[derive(Clone, Debug, Serialize)]
pub struct AggregateReport {
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub ccc_mean: f64,
    pub seeds: Vec<SeedMetrics>,
}

/// Runs every configured seed (in waves of `jobs` threads) and aggregates
/// mean and standard deviation over exactly that seed list.
pub fn run_seeds(
    graph: &TextRichGraph,
    split: &NodeSplit,
    config: &PipelineConfig,
    jobs: usize,
) -> Result<AggregateReport> {
    let jobs = jobs.max(1);
    let mut metrics: Vec<SeedMetrics> = Vec::with_capacity(config.seeds.len());
    for wave in config.seeds.chunks(jobs) {
        let results: Vec<Result<PipelineOutcome>> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|&seed| scope.spawn(move || run_seed(graph, split, config, seed)))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for r in results {
            metrics.push(r?.outcome.metrics);
        }
    }
    let accs: Vec<f64> = metrics.iter().map(|m| m.accuracy).collect();
    let cccs: Vec<f64> = metrics.iter().filter_map(|m| m.ccc_final).collect();
    let (accuracy_mean, accuracy_std) = mean_std(&accs);
    let (ccc_mean, _) = mean_std(&cccs);
    Ok(AggregateReport {
        accuracy_mean,
        accuracy_std,
        ccc_mean,
        seeds: metrics,
    })
}

/// Mean pairwise cosine separation of a labeled embedding: intra-class mean
/// minus inter-class mean. Positive means classes are separated.
pub fn cosine_separation(z: &Matrix, labels: &[i32]) -> f64 {
    let n = z.rows();
    let mut intra = (0.0, 0usize);
    let mut inter = (0.0, 0usize);
    for i in 0..n {
        for j in (i + 1)..n {
            let cos = crate::matrix::cosine(z.row(i), z.row(j), 1e-12);
            if labels[i] == labels[j] {
                intra.0 += cos;
                intra.1 += 1;
            } else {
                inter.0 += cos;
                inter.1 += 1;
            }
        }
    }
    intra.0 / intra.1.max(1) as f64 - inter.0 / inter.1.max(1) as f64
}

/// ARI of the tree's leaf clustering against reference labels, and of the
/// coarse grouping induced by the level-2 ancestors.
pub fn tree_recovery_ari(tree: &TaxonomyTree, fine: &[i32], coarse: &[i32]) -> Result<(f64, f64)> {
    let assignment = tree.leaf_assignment()?;
    let fine_truth: Vec<u32> = fine.iter().map(|&l| l as u32).collect();
    let leaf_ari = ari(&assignment.assignment, &fine_truth);

    // Map each leaf to its ancestor at level 2 (or the root for depth 1).
    let leaves: Vec<&crate::taxonomy::TaxoNode> = tree.leaves().collect();
    let mut leaf_to_coarse = vec![0u32; leaves.len()];
    for (c, leaf) in leaves.iter().enumerate() {
        let mut cur = *leaf;
        while cur.level > 2 {
            cur = tree.node(cur.parent.unwrap()).unwrap();
        }
        leaf_to_coarse[c] = cur.id;
    }
    let coarse_pred: Vec<u32> = assignment
        .assignment
        .iter()
        .map(|&c| leaf_to_coarse[c as usize])
        .collect();
    let coarse_truth: Vec<u32> = coarse.iter().map(|&l| l as u32).collect();
    Ok((leaf_ari, ari(&coarse_pred, &coarse_truth)))
}
