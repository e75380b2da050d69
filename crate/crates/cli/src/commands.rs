//! Subcommand definitions and their implementations.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Subcommand, ValueEnum};

use trivec_core::recommend::{BasketContext, RecommendConfig};
use trivec_core::{
    eval, item_frequencies, load_baskets, sample_triples, save_model, split_holdout, triples,
    CatalogIndex, CatalogLayout, FrequencyTable, IndexBackend, IndexParams, PostProcessConfig,
    Recommender, Strategy, TrainConfig, TransactionLog,
};

use crate::config::{resolve, FileConfig};
use crate::service::{AnchorSeedMode, ServiceConfig};

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample training triples from a basket CSV into a cache file.
    Ingest(IngestArgs),
    /// Train embeddings from a basket CSV (optionally using a triple cache).
    Train(TrainArgs),
    /// Build a retrieval index from a trained model.
    BuildIndex(BuildIndexArgs),
    /// Evaluate ranking strategies under the basket-split protocol.
    Eval(EvalArgs),
    /// Measure end-to-end recommendation latency per backend.
    Bench(BenchArgs),
    /// One-shot recommendation from the command line.
    Recommend(RecommendArgs),
    /// Serve the HTTP recommendation API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Exact,
    Hnsw,
}

impl From<BackendArg> for IndexBackend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Exact => IndexBackend::Exact,
            BackendArg::Hnsw => IndexBackend::Hnsw,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Full,
    Asymmetric,
}

impl From<LayoutArg> for CatalogLayout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Full => CatalogLayout::Full,
            LayoutArg::Asymmetric => CatalogLayout::Asymmetric,
        }
    }
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Basket CSV (header: user_id,basket_id,item_id).
    #[arg(long, value_name = "CSV")]
    pub input: PathBuf,
    /// Triple cache to write.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
    /// Number of triples to sample [default: 1000000].
    #[arg(long)]
    pub count: Option<usize>,
}

pub fn run_ingest(args: IngestArgs, file: &FileConfig, seed: u64) -> anyhow::Result<()> {
    let log = load_baskets(&args.input)?;
    println!(
        "loaded {} baskets, {} users, {} items",
        log.basket_count(),
        log.user_count(),
        log.item_count()
    );
    let count = resolve(args.count, file.train.triples, 1_000_000);
    let triples = sample_triples(&log, count, seed)?;
    triples::write_triple_cache(&args.output, &triples)?;
    println!("wrote {} triples to {}", triples.len(), args.output.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Basket CSV (header: user_id,basket_id,item_id).
    #[arg(long, value_name = "CSV")]
    pub input: PathBuf,
    /// Model file to write; a popularity sidecar is written next to it.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
    /// Read triples from a cache instead of sampling them.
    #[arg(long, value_name = "FILE")]
    pub triples: Option<PathBuf>,
    /// Triples to sample when no cache is given [default: 1000000].
    #[arg(long)]
    pub triples_count: Option<usize>,
    /// Embedding dimension [default: 64].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Initial learning rate [default: 1.0].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Mini-batch size [default: 1000].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training epochs [default: 100].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Noise draws per NCE target [default: 5].
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Hold out this basket fraction before training [default: 0.0].
    /// Use the same value and seed in `eval` to score the held-out side.
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

pub fn run_train(args: TrainArgs, file: &FileConfig, seed: u64) -> anyhow::Result<()> {
    let full_log = load_baskets(&args.input)?;
    let test_fraction = resolve(args.test_fraction, file.train.test_fraction, 0.0);
    let train_log: TransactionLog = if test_fraction > 0.0 {
        let (train, test) = split_holdout(&full_log, test_fraction, seed)?;
        println!(
            "split {} baskets into {} train / {} test",
            full_log.basket_count(),
            train.basket_count(),
            test.basket_count()
        );
        drop(test);
        train
    } else {
        full_log
    };

    let triples = match &args.triples {
        Some(path) => {
            let cached = triples::read_triple_cache(path)?;
            let (n, m) = (train_log.item_count() as u32, train_log.user_count() as u32);
            if let Some(bad) = cached
                .iter()
                .find(|t| t.user >= m || t.item_a >= n || t.item_b >= n)
            {
                anyhow::bail!(
                    "triple cache {} does not match this corpus (triple {bad:?} out of range)",
                    path.display()
                );
            }
            cached
        }
        None => {
            let count = resolve(args.triples_count, file.train.triples, 1_000_000);
            sample_triples(&train_log, count, seed)?
        }
    };

    let cfg = TrainConfig {
        dim: resolve(args.dim, file.train.dim, 64),
        learning_rate: resolve(args.learning_rate, file.train.learning_rate, 1.0),
        batch_size: resolve(args.batch_size, file.train.batch_size, 1000),
        max_epochs: resolve(args.epochs, file.train.epochs, 100),
        negatives: resolve(args.negatives, file.train.negatives, 5),
        init_scale: None,
        seed,
    };
    println!(
        "training: {} triples, dim {}, lr {}, batch {}, epochs {}, negatives {}",
        triples.len(),
        cfg.dim,
        cfg.learning_rate,
        cfg.batch_size,
        cfg.max_epochs,
        cfg.negatives
    );
    let (model, stats) = trivec_core::train(&train_log, &triples, &cfg)?;
    if let Some(last) = stats.epoch_losses.last() {
        println!("final epoch loss {last:.6}");
    }
    save_model(&model, &train_log.vocab, &args.output)?;
    let pop_path = args.output.with_extension("t2vp");
    item_frequencies(&train_log).save(&pop_path)?;
    println!(
        "wrote model to {} and popularity to {}",
        args.output.display(),
        pop_path.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct BuildIndexArgs {
    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Index file to write.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
    /// Retrieval backend [default: hnsw].
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    /// Catalog layout [default: full].
    #[arg(long, value_enum, default_value = "full")]
    pub layout: LayoutArg,
    /// Graph degree [default: 16].
    #[arg(long)]
    pub degree: Option<usize>,
    /// Construction beam width [default: 200].
    #[arg(long)]
    pub ef_construction: Option<usize>,
    /// Search beam width [default: 100].
    #[arg(long)]
    pub ef_search: Option<usize>,
}

fn index_params(args_degree: Option<usize>, args_efc: Option<usize>, args_efs: Option<usize>, file: &FileConfig, seed: u64) -> IndexParams {
    IndexParams {
        graph_degree: resolve(args_degree, file.index.degree, 16),
        ef_construction: resolve(args_efc, file.index.ef_construction, 200),
        ef_search: resolve(args_efs, file.index.ef_search, 100),
        seed,
    }
}

fn backend_from(arg: Option<BackendArg>, file: &FileConfig, default: IndexBackend) -> anyhow::Result<IndexBackend> {
    if let Some(b) = arg {
        return Ok(b.into());
    }
    match file.index.backend.as_deref() {
        None => Ok(default),
        Some("exact") => Ok(IndexBackend::Exact),
        Some("hnsw") => Ok(IndexBackend::Hnsw),
        Some(other) => anyhow::bail!("unknown backend {other:?} in config (use exact or hnsw)"),
    }
}

pub fn run_build_index(args: BuildIndexArgs, file: &FileConfig, seed: u64) -> anyhow::Result<()> {
    let (model, _) = trivec_core::load_model(&args.model)?;
    let backend = backend_from(args.backend, file, IndexBackend::Hnsw)?;
    let params = index_params(args.degree, args.ef_construction, args.ef_search, file, seed);
    let started = std::time::Instant::now();
    let index = CatalogIndex::build(&model, args.layout.into(), backend, params)?;
    index.save(&args.output)?;
    println!(
        "built {} {:?} index over {} items (dim {}) in {:.2}s -> {}",
        backend.label(),
        index.layout(),
        index.len(),
        index.dim(),
        started.elapsed().as_secs_f64(),
        args.output.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Basket CSV the model was trained from.
    #[arg(long, value_name = "CSV")]
    pub input: PathBuf,
    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Prebuilt full-layout index; defaults to an in-memory exact one.
    #[arg(long, value_name = "FILE")]
    pub index: Option<PathBuf>,
    /// Report CSV to write.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Ranking cutoff [default: 20].
    #[arg(long)]
    pub k: Option<usize>,
    /// Basket fraction held out as the test set [default: 0.2].
    /// Must match the value given to `train`.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Per-basket inference fraction [default: 0.8].
    #[arg(long)]
    pub inference_fraction: Option<f64>,
}

pub fn run_eval(args: EvalArgs, file: &FileConfig, seed: u64) -> anyhow::Result<()> {
    let full_log = load_baskets(&args.input)?;
    let test_fraction = resolve(args.test_fraction, file.eval.test_fraction, 0.2);
    let (train_log, test_log) = split_holdout(&full_log, test_fraction, seed)?;
    let (model, _) = trivec_core::load_model(&args.model)?;
    if model.item_count() != full_log.item_count() || model.user_count() != full_log.user_count() {
        anyhow::bail!(
            "model {} was not trained on {} (vocabulary sizes differ; check --seed/--test-fraction)",
            args.model.display(),
            args.input.display()
        );
    }
    let index = match &args.index {
        Some(path) => {
            let idx = CatalogIndex::load(path)?;
            if idx.layout() != CatalogLayout::Full {
                anyhow::bail!("evaluation needs a full-layout index, {} is asymmetric", path.display());
            }
            idx
        }
        None => CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Exact, IndexParams {
            seed,
            ..IndexParams::default()
        })?,
    };
    let popularity = item_frequencies(&train_log);
    let k = resolve(args.k, file.eval.k, 20);
    let inference_fraction = resolve(args.inference_fraction, file.eval.inference_fraction, 0.8);
    let splits = eval::make_eval_split(&test_log, inference_fraction, seed);
    println!(
        "evaluating {} baskets ({} skipped) at k={k} on backend {}",
        splits.splits.len(),
        splits.skipped,
        index.backend().label()
    );
    let report = eval::evaluate(
        &model,
        &index,
        &popularity,
        &splits,
        k,
        &Strategy::default_suite(),
        seed,
    )?;
    print!("{report}");
    if let Some(path) = &args.output {
        std::fs::write(path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Trained model file; mutually exclusive with --synthetic-items.
    #[arg(long, value_name = "FILE", conflicts_with = "synthetic_items")]
    pub model: Option<PathBuf>,
    /// Benchmark a random synthetic catalog of this many items.
    #[arg(long)]
    pub synthetic_items: Option<usize>,
    /// Users in the synthetic catalog [default: 1000].
    #[arg(long)]
    pub synthetic_users: Option<usize>,
    /// Embedding dimension for the synthetic catalog [default: 64].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Latency CSV to write.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Basket sizes to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20")]
    pub basket_sizes: Vec<usize>,
    /// Requests per (backend, size) cell [default: 50].
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Recommendations per request [default: 10].
    #[arg(long)]
    pub k: Option<usize>,
    /// Search beam width for the graph backend [default: 100].
    #[arg(long)]
    pub ef_search: Option<usize>,
}

pub fn run_bench(args: BenchArgs, file: &FileConfig, seed: u64) -> anyhow::Result<()> {
    let model = match (&args.model, args.synthetic_items) {
        (Some(path), _) => trivec_core::load_model(path)?.0,
        (None, Some(items)) => {
            use rand::SeedableRng;
            let users = args.synthetic_users.unwrap_or(1000);
            let dim = args.dim.unwrap_or(64);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            trivec_core::TripleModel::init_random(items, users, dim, 0.5, &mut rng)
        }
        (None, None) => anyhow::bail!("pass --model FILE or --synthetic-items N"),
    };
    let params = index_params(None, None, args.ef_search, file, seed);
    println!(
        "building catalogs over {} items (dim {})...",
        model.item_count(),
        model.dim()
    );
    let exact = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Exact, params)?;
    let approx = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Hnsw, params)?;
    let popularity = FrequencyTable::uniform(model.item_count());
    let repetitions = args.repetitions.unwrap_or(50);
    let k = args.k.unwrap_or(10);
    let table = eval::benchmark_latency(
        &model,
        &[("exact", &exact), ("hnsw", &approx)],
        &popularity,
        &args.basket_sizes,
        repetitions,
        k,
        seed,
    )?;
    print!("{table}");
    if let Some(path) = &args.output {
        std::fs::write(path, table.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct RecommendArgs {
    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Prebuilt full-layout index file.
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,
    /// Basket as comma-separated external item ids.
    #[arg(long, value_delimiter = ',', required = true)]
    pub basket: Vec<String>,
    /// External user id; omit for anonymous recommendations.
    #[arg(long)]
    pub user: Option<String>,
    /// Recommendations to return [default: 10].
    #[arg(long)]
    pub k: Option<usize>,
    /// Post-process config (TOML).
    #[arg(long, value_name = "FILE")]
    pub postprocess: Option<PathBuf>,
}

pub fn run_recommend(args: RecommendArgs, file: &FileConfig, seed: u64) -> anyhow::Result<()> {
    let (model, vocab) = trivec_core::load_model(&args.model)?;
    let index = CatalogIndex::load(&args.index)?;
    let pop_path = args.model.with_extension("t2vp");
    let popularity = if pop_path.exists() {
        FrequencyTable::load(&pop_path)?
    } else {
        FrequencyTable::uniform(model.item_count())
    };
    let post = match &args.postprocess {
        Some(path) => PostProcessConfig::load(path, &vocab)?,
        None => PostProcessConfig::default(),
    };
    let config = RecommendConfig {
        anchor_threshold: resolve(None, file.service.anchor_threshold, 6),
        post,
        ..RecommendConfig::default()
    };
    let recommender = Recommender::new(&model, &index, &popularity, config)?;

    let mut items = Vec::new();
    let mut unknown = Vec::new();
    for name in &args.basket {
        match vocab.item_index(name) {
            Some(id) => items.push(id),
            None => unknown.push(name.clone()),
        }
    }
    let user = args.user.as_deref().and_then(|u| vocab.user_index(u));
    if args.user.is_some() && user.is_none() {
        println!("# user unknown, using anonymous mode");
    }
    if !unknown.is_empty() {
        println!("# unknown items ignored: {}", unknown.join(","));
    }
    let ctx = BasketContext {
        user,
        items,
        k: args.k.unwrap_or(10),
    };
    let set = recommender.recommend(&ctx, seed)?;
    if set.flags.fallback {
        println!("# popularity fallback");
    }
    for entry in &set.entries {
        println!(
            "{}\t{:.6}",
            vocab.item_name(entry.item).unwrap_or("<unknown>"),
            entry.score
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Trained model file.
    #[arg(long, value_name = "FILE", env = "TRIVEC_MODEL")]
    pub model: PathBuf,
    /// Prebuilt full-layout index file.
    #[arg(long, value_name = "FILE", env = "TRIVEC_INDEX")]
    pub index: PathBuf,
    /// Post-process config (TOML).
    #[arg(long, value_name = "FILE", env = "TRIVEC_POSTPROCESS")]
    pub postprocess: Option<PathBuf>,
    /// Popularity sidecar [default: model path with .t2vp extension].
    #[arg(long, value_name = "FILE", env = "TRIVEC_POPULARITY")]
    pub popularity: Option<PathBuf>,
    /// Listen address [default: 127.0.0.1:8080].
    #[arg(long, env = "TRIVEC_ADDR")]
    pub addr: Option<SocketAddr>,
    /// Default k when requests omit it [default: 10].
    #[arg(long)]
    pub default_k: Option<usize>,
    /// Anchor-sampling threshold [default: 6].
    #[arg(long)]
    pub anchor_threshold: Option<usize>,
    /// Sample anchors with fresh entropy per request instead of the
    /// fixed service seed.
    #[arg(long)]
    pub per_request_seed: bool,
    /// Request timeout in milliseconds [default: 2000].
    #[arg(long)]
    pub timeout_ms: Option<u64>,
}

pub fn service_config(args: &ServeArgs, file: &FileConfig, seed: u64) -> anyhow::Result<ServiceConfig> {
    let addr = match (&args.addr, &file.service.addr) {
        (Some(a), _) => *a,
        (None, Some(s)) => s.parse().map_err(|e| anyhow::anyhow!("bad addr {s:?} in config: {e}"))?,
        (None, None) => SocketAddr::from(([127, 0, 0, 1], 8080)),
    };
    Ok(ServiceConfig {
        model_path: args.model.clone(),
        index_path: args.index.clone(),
        postprocess_path: args.postprocess.clone(),
        popularity_path: args.popularity.clone().or(file.service.popularity.clone()),
        addr,
        default_k: resolve(args.default_k, file.service.default_k, 10),
        anchor_threshold: resolve(args.anchor_threshold, file.service.anchor_threshold, 6),
        anchor_seed: if args.per_request_seed {
            AnchorSeedMode::PerRequest
        } else {
            AnchorSeedMode::Fixed(seed)
        },
        request_timeout: Duration::from_millis(resolve(args.timeout_ms, file.service.timeout_ms, 2000)),
    })
}

pub fn run_serve(args: ServeArgs, file: &FileConfig, seed: u64) -> anyhow::Result<()> {
    let config = service_config(&args, file, seed)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(crate::service::start(config))
}
