//! The `taxograph` pipeline CLI: synthetic data generation, contrastive
//! pretraining, taxonomy construction, regularized classification, and
//! artifact export. Every command is re-runnable: identical inputs and seeds
//! produce identical outputs, and each output directory carries a manifest
//! of input hashes.

mod manifest;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use manifest::Manifest;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use taxograph_core::encoder::{load_checkpoint, save_checkpoint, LinearHead};
use taxograph_core::io::{load_graph, DatasetPaths, GraphSummary};
use taxograph_core::refiner::{Refiner, Transcript};
use taxograph_core::similarity::{theorem1_oracle, SimilarityMode};
use taxograph_core::synthetic::{
    generate_planted_hierarchy, generate_sbm, PlantedHierarchyConfig, SbmConfig,
};
use taxograph_core::taxonomy::{
    emit_dot, emit_radial_json, load_taxonomy, save_taxonomy, VizFormat,
};
use taxograph_core::trainer::{
    construct_taxonomy, evaluate, pretrain, train_classifier, write_distance_csv,
    write_projection_csv, PipelineConfig, RefinerChoice, SeedMetrics,
};
use taxograph_core::{Matrix, TreeShape};

#[derive(Parser)]
#[command(
    name = "taxograph",
    version,
    about = "Taxonomy-informed representation learning on text-rich networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (SBM or planted hierarchy).
    GenSynthetic(GenSyntheticArgs),
    /// Stage 1: contrastive pretraining of the taxonomy encoder.
    Pretrain(PretrainArgs),
    /// Cluster frozen embeddings, refine, and build the taxonomy tree.
    BuildTaxonomy(BuildTaxonomyArgs),
    /// Stage 2: train the classifier with cophenetic regularization.
    Train(TrainArgs),
    /// Evaluate a trained model and export visualization data.
    Evaluate(EvaluateArgs),
    /// Measure similarity-matrix approximation errors on seeded SBM graphs.
    OracleTheorem1(OracleArgs),
    /// Export a taxonomy tree as DOT or nested radial JSON.
    Viz(VizArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config file (.toml or .json); flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Contrastive similarity construction.
    #[arg(long, value_parser = ["full", "supcon", "identity"])]
    similarity: Option<String>,
    /// Negative-pair weight in the contrastive loss.
    #[arg(long)]
    gamma: Option<f64>,
    /// Cophenetic regularization weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Taxonomy shape, e.g. `1,7,64`, or a dataset name like `cora`.
    #[arg(long)]
    shape: Option<String>,
    /// Refiner backing taxonomy construction.
    #[arg(long, value_parser = ["mock", "llm", "none"])]
    refiner: Option<String>,
    /// Chat-completions endpoint root (refiner = llm).
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name at the endpoint (refiner = llm).
    #[arg(long)]
    model: Option<String>,
    /// Training epochs (applies to the stage the command runs).
    #[arg(long)]
    epochs: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config: PipelineConfig = match &self.config {
            None => PipelineConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                match path.extension().and_then(|e| e.to_str()) {
                    Some("toml") => toml::from_str(&text)?,
                    _ => serde_json::from_str(&text)?,
                }
            }
        };
        if let Some(mode) = &self.similarity {
            config.similarity_mode = mode.parse::<SimilarityMode>()?;
        }
        if let Some(gamma) = self.gamma {
            config.sgcl.gamma = gamma;
        }
        if let Some(lambda) = self.lambda {
            if lambda < 0.0 {
                bail!("--lambda must be non-negative");
            }
            config.downstream.lambda = lambda;
        }
        if let Some(shape) = &self.shape {
            config.shape = if shape.contains(',') {
                TreeShape::parse(shape)?
            } else {
                TreeShape::dataset_default(shape)
                    .with_context(|| format!("unknown dataset shape `{shape}`"))?
            };
        }
        if let Some(refiner) = &self.refiner {
            config.refiner_choice = match refiner.as_str() {
                "mock" => RefinerChoice::Mock,
                "none" => RefinerChoice::None,
                "llm" => RefinerChoice::Llm {
                    base_url: self
                        .endpoint
                        .clone()
                        .context("--refiner llm requires --endpoint")?,
                    model: self.model.clone().context("--refiner llm requires --model")?,
                },
                _ => unreachable!("clap validated"),
            };
        }
        Ok(config)
    }
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Generator family.
    #[arg(long, value_parser = ["sbm", "planted-hierarchy"])]
    kind: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Nodes (sbm).
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Blocks (sbm).
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    #[arg(long, default_value_t = 0.1)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    /// Coarse clusters (planted-hierarchy).
    #[arg(long, default_value_t = 4)]
    coarse: usize,
    /// Fine clusters per coarse cluster (planted-hierarchy).
    #[arg(long, default_value_t = 4)]
    fine: usize,
    #[arg(long, default_value_t = 100)]
    nodes_per_fine: usize,
    #[arg(long, default_value_t = 0.4)]
    sigma: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0.3)]
    train_fraction: f64,
}

#[derive(Args)]
struct PretrainArgs {
    /// Dataset directory (features.trnf, edges.txt, labels.txt, splits).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct BuildTaxonomyArgs {
    #[arg(long)]
    data: PathBuf,
    /// Stage-1 checkpoint from `pretrain`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Taxonomy JSON from `build-taxonomy`.
    #[arg(long)]
    taxonomy: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seed list.
    #[arg(long, default_value = "0,1,2,3,4")]
    seeds: String,
    /// Parallel seed jobs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    taxonomy: PathBuf,
    /// Stage-2 encoder checkpoint from `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Classification head JSON from `train`.
    #[arg(long)]
    head: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// Number of seeded SBM graphs to test.
    #[arg(long, default_value_t = 20)]
    graphs: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    #[arg(long, default_value_t = 0.3)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VizArgs {
    #[arg(long)]
    taxonomy: PathBuf,
    #[arg(long, value_parser = ["dot", "radial-json"], default_value = "dot")]
    format: String,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .with_context(|| format!("bad seed `{tok}`"))
        })
        .collect()
}

fn dataset_inputs(paths: &DatasetPaths) -> Vec<PathBuf> {
    let mut v = vec![
        paths.features.clone(),
        paths.edges.clone(),
        paths.labels.clone(),
        paths.train.clone(),
        paths.val.clone(),
        paths.test.clone(),
    ];
    if let Some(t) = &paths.texts {
        v.push(t.clone());
    }
    v
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn cmd_gen_synthetic(args: GenSyntheticArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let summary = match args.kind.as_str() {
        "sbm" => {
            let (graph, split) = generate_sbm(&SbmConfig {
                n: args.n,
                blocks: args.blocks,
                p_in: args.p_in,
                p_out: args.p_out,
                train_fraction: args.train_fraction,
                feature_dim: args.feature_dim,
                seed: args.seed,
            })?;
            taxograph_core::io::write_dataset(&args.out, &graph, &split, None)?;
            GraphSummary::of(&graph)
        }
        "planted-hierarchy" => {
            let planted = generate_planted_hierarchy(&PlantedHierarchyConfig {
                coarse: args.coarse,
                fine_per_coarse: args.fine,
                nodes_per_fine: args.nodes_per_fine,
                feature_dim: args.feature_dim,
                sigma: args.sigma,
                train_fraction: args.train_fraction,
                seed: args.seed,
                ..Default::default()
            })?;
            taxograph_core::io::write_dataset(
                &args.out,
                &planted.graph,
                &planted.split,
                Some(("labels_fine.txt", &planted.fine_labels)),
            )?;
            GraphSummary::of(&planted.graph)
        }
        _ => unreachable!("clap validated"),
    };
    write_json(&args.out.join("summary.json"), &summary)?;
    Manifest::new("gen-synthetic")
        .with_seeds(&[args.seed])
        .write(&args.out)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn cmd_pretrain(args: PretrainArgs) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(epochs) = args.config.epochs {
        config.sgcl.epochs = epochs;
    }
    let paths = DatasetPaths::in_dir(&args.data);
    let (graph, split) = load_graph(&paths)?;
    println!(
        "{}",
        serde_json::to_string(&GraphSummary::of(&graph))?
    );
    std::fs::create_dir_all(&args.out)?;
    let (params, log) = pretrain(&graph, &split, &config, args.seed)?;
    save_checkpoint(&params, &args.out.join("encoder1.ckpt"))?;
    let mut log_file = std::fs::File::create(args.out.join("train_log.jsonl"))?;
    for report in &log {
        writeln!(log_file, "{}", serde_json::to_string(report)?)?;
    }
    let mut manifest = Manifest::new("pretrain")
        .with_config_hash(config.config_hash())
        .with_seeds(&[args.seed]);
    manifest.add_inputs(&dataset_inputs(&paths))?;
    manifest.write(&args.out)?;
    Ok(())
}

fn cmd_build_taxonomy(args: BuildTaxonomyArgs) -> Result<()> {
    let config = args.config.load()?;
    let paths = DatasetPaths::in_dir(&args.data);
    let (graph, _split) = load_graph(&paths)?;
    let encoder = load_checkpoint(&args.checkpoint)?;
    std::fs::create_dir_all(&args.out)?;

    let mut refiner: Option<Box<dyn Refiner>> = match &config.refiner_choice {
        RefinerChoice::None => None,
        RefinerChoice::Mock => Some(Box::new(taxograph_core::refiner::MockRefiner::new(
            args.seed,
        ))),
        RefinerChoice::Llm { base_url, model } => Some(Box::new(
            taxograph_core::refiner::LlmRefiner::new(taxograph_core::refiner::LlmConfig::new(
                base_url.clone(),
                model.clone(),
            ))?,
        )),
    };

    let mut transcript = Transcript::default();
    let result = construct_taxonomy(
        &encoder,
        &graph,
        &config.shape,
        &config.refiner,
        refiner.as_mut().map(|r| r.as_mut() as &mut dyn Refiner),
        args.seed,
        &mut transcript,
    );
    // The transcript survives even an aborted refinement pass.
    transcript.save(&args.out.join("transcript.jsonl"))?;
    let tree = result?;
    save_taxonomy(&tree, &args.out.join("taxonomy.json"))?;

    let mut manifest = Manifest::new("build-taxonomy")
        .with_config_hash(config.config_hash())
        .with_seeds(&[args.seed]);
    manifest.add_inputs(&dataset_inputs(&paths))?;
    manifest.add_input(&args.checkpoint)?;
    manifest.write(&args.out)?;
    println!(
        "{}",
        serde_json::to_string(&serde_json::json!({
            "leaves": tree.level_sizes.last(),
            "depth": tree.depth,
            "level_sizes": tree.level_sizes,
            "refiner_queries": transcript.entries.len(),
        }))?
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(epochs) = args.config.epochs {
        config.downstream.epochs = epochs;
    }
    config.seeds = parse_seeds(&args.seeds)?;
    let jobs = args.jobs.max(1);
    let paths = DatasetPaths::in_dir(&args.data);
    let (graph, split) = load_graph(&paths)?;
    let tree = load_taxonomy(&args.taxonomy)?;
    std::fs::create_dir_all(&args.out)?;

    let mut all_metrics: Vec<SeedMetrics> = Vec::new();
    let mut best: Option<(f64, u64)> = None;
    for wave in config.seeds.chunks(jobs) {
        let results: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|&seed| {
                    let (graph, split, tree, config) = (&graph, &split, &tree, &config);
                    scope.spawn(move || train_classifier(graph, split, tree, config, seed))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for result in results {
            let outcome = result?;
            let seed = outcome.metrics.seed;
            save_checkpoint(
                &outcome.encoder,
                &args.out.join(format!("encoder2_seed{seed}.ckpt")),
            )?;
            write_json(
                &args.out.join(format!("head_seed{seed}.json")),
                &head_to_json(&outcome.head),
            )?;
            let mut log_file =
                std::fs::File::create(args.out.join(format!("train_log_seed{seed}.jsonl")))?;
            for report in &outcome.log {
                writeln!(log_file, "{}", serde_json::to_string(report)?)?;
            }
            write_json(
                &args.out.join(format!("metrics_seed{seed}.json")),
                &outcome.metrics,
            )?;
            if best.is_none_or(|(acc, _)| outcome.metrics.val_accuracy > acc) {
                best = Some((outcome.metrics.val_accuracy, seed));
            }
            all_metrics.push(outcome.metrics);
        }
    }

    let accs: Vec<f64> = all_metrics.iter().map(|m| m.accuracy).collect();
    let (mean, std) = taxograph_core::metrics::mean_std(&accs);
    let aggregate = serde_json::json!({
        "accuracy_mean": mean,
        "accuracy_std": std,
        "best_val_seed": best.map(|(_, s)| s),
        "seeds": all_metrics,
    });
    write_json(&args.out.join("metrics.json"), &aggregate)?;

    let mut manifest = Manifest::new("train")
        .with_config_hash(config.config_hash())
        .with_seeds(&config.seeds);
    manifest.add_inputs(&dataset_inputs(&paths))?;
    manifest.add_input(&args.taxonomy)?;
    manifest.write(&args.out)?;
    println!("{}", serde_json::to_string(&aggregate)?);
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct HeadJson {
    dim: usize,
    classes: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

fn head_to_json(head: &LinearHead) -> HeadJson {
    HeadJson {
        dim: head.weight.rows(),
        classes: head.weight.cols(),
        weight: head.weight.data().to_vec(),
        bias: head.bias.clone(),
    }
}

fn head_from_json(json: HeadJson) -> LinearHead {
    LinearHead {
        weight: Matrix::from_vec(json.dim, json.classes, json.weight),
        bias: json.bias,
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let paths = DatasetPaths::in_dir(&args.data);
    let (graph, split) = load_graph(&paths)?;
    let tree = load_taxonomy(&args.taxonomy)?;
    let encoder = load_checkpoint(&args.checkpoint)?;
    let head: HeadJson = serde_json::from_str(&std::fs::read_to_string(&args.head)?)?;
    let head = head_from_json(head);
    std::fs::create_dir_all(&args.out)?;

    let report = evaluate(&encoder, &head, &graph, &split, &tree)?;
    write_distance_csv(&args.out.join("distances.csv"), &report.distances)?;
    write_projection_csv(
        &args.out.join("projection.csv"),
        &report.projection,
        graph.labels(),
    )?;
    let metrics = serde_json::json!({
        "accuracy": report.accuracy,
        "per_class": report.per_class,
        "ccc_final": report.ccc_final,
    });
    write_json(&args.out.join("eval.json"), &metrics)?;

    let mut manifest = Manifest::new("evaluate");
    manifest.add_inputs(&dataset_inputs(&paths))?;
    manifest.add_input(&args.taxonomy)?;
    manifest.add_input(&args.checkpoint)?;
    manifest.add_input(&args.head)?;
    manifest.write(&args.out)?;
    println!("{}", serde_json::to_string(&metrics)?);
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let mut reports = Vec::with_capacity(args.graphs);
    let mut holds = 0usize;
    for g in 0..args.graphs {
        let (graph, split) = generate_sbm(&SbmConfig {
            n: args.n,
            p_in: args.p_in,
            p_out: args.p_out,
            train_fraction: args.train_fraction,
            seed: args.seed + g as u64,
            ..Default::default()
        })?;
        let report = theorem1_oracle(&graph, &split)?;
        if report.holds {
            holds += 1;
        }
        reports.push(report);
    }
    let out = serde_json::json!({
        "graphs": args.graphs,
        "holds": holds,
        "reports": reports,
    });
    let text = serde_json::to_string_pretty(&out)? + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_viz(args: VizArgs) -> Result<()> {
    let tree = load_taxonomy(&args.taxonomy)?;
    let format: VizFormat = args.format.parse()?;
    let text = match format {
        VizFormat::Dot => emit_dot(&tree)?,
        VizFormat::RadialJson => emit_radial_json(&tree)?,
    };
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::GenSynthetic(args) => cmd_gen_synthetic(args),
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::BuildTaxonomy(args) => cmd_build_taxonomy(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::OracleTheorem1(args) => cmd_oracle(args),
        Command::Viz(args) => cmd_viz(args),
    }
}

fn main() {
    if let Err(err) = run() {
        // One machine-parsable line on stderr.
        let line = serde_json::json!({ "error": format!("{err:#}") });
        eprintln!("{line}");
        std::process::exit(1);
    }
}
