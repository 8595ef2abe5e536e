use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use guicurate::client::ModelClient;
use guicurate::difficulty::{partition_by_difficulty, DifficultyOutcome, PredictionCache};
use guicurate::diversity::{select_diverse, EmbeddingMatrix, EmbeddingRow};
use guicurate::geometry::{BBox, Point};
use guicurate::metrics::{
    classification_report, element_accuracy, grounding_report, predictions_by_id, PredictionRow,
};
use guicurate::pipeline::server::{serve_review, ReviewServerConfig};
use guicurate::pipeline::{assemble_run, run_pipeline, ClientBinding, PipelineConfig};
use guicurate::ranker::{
    build_training_triplets, expand_benchmark_binary, load_benchmark_groups, Label,
};
use guicurate::record::GroundingRecord;
use guicurate::reward::{score_batch, RewardEngine, RewardRequest};
use guicurate::{fixtures, jsonl, Error, Result};

#[derive(Parser)]
#[command(
    name = "guicurate",
    version,
    about = "GUI grounding data curation toolkit"
)]
struct Cli {
    /// Pipeline config (TOML); supplies client bindings, seeds and settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every seeded step; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the offline mock backend for every model role.
    #[arg(long, global = true)]
    mock: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split records into easy and hard by zero-shot grounding.
    Partition {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build ranker training triplets from a partition output directory.
    BuildRankerData {
        /// Directory written by `partition`.
        #[arg(long)]
        partition_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick one representative record per embedding cluster.
    SelectDiverse {
        #[arg(long)]
        input: PathBuf,
        /// `{id, vector}` rows; computed with the embedder when absent.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Score `{id, text, gt_bbox}` rollouts.
    Rewards {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grounding, classification or element-accuracy evaluation.
    Eval {
        #[arg(long, value_enum, default_value_t = EvalMode::Grounding)]
        mode: EvalMode,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Row label for the printed table.
        #[arg(long, default_value = "model")]
        label: String,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expand benchmark annotations into binary ranker triplets.
    ConvertBenchmark {
        /// GroundingRecord rows or `{image, width, height, annotations}` groups.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full curation pipeline.
    Run,
    /// Combine survivors, review decisions and traces into the final set.
    Assemble {
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Serve the review API for a run directory.
    ServeReview {
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Require this bearer token on every request.
        #[arg(long, env = "GUICURATE_REVIEW_TOKEN")]
        token: Option<String>,
        #[arg(long)]
        image_root: Option<PathBuf>,
    },
    /// Write a synthetic fixture (records, optional images, mock config).
    MakeFixture {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long)]
        images: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Grounding,
    Classification,
    Element,
}

struct Ctx {
    config: Option<PipelineConfig>,
    seed: Option<u64>,
    mock: bool,
}

impl Ctx {
    fn load(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(p) => {
                let mut c = PipelineConfig::load(p)?;
                if cli.mock {
                    c.force_mock();
                }
                if let Some(s) = cli.seed {
                    c.override_seed(s);
                }
                Some(c)
            }
            None => None,
        };
        Ok(Self {
            config,
            seed: cli.seed,
            mock: cli.mock,
        })
    }

    fn seed(&self, pick: impl Fn(&PipelineConfig) -> u64) -> Result<u64> {
        self.seed
            .or_else(|| self.config.as_ref().map(pick))
            .ok_or_else(|| Error::Config("a seed is required: pass --seed or --config".into()))
    }

    fn client(
        &self,
        role: &str,
        pick: impl Fn(&PipelineConfig) -> &ClientBinding,
    ) -> Result<ModelClient> {
        let mock_seed = self.seed(|c| c.seeds.mock)?;
        match &self.config {
            Some(c) => pick(c).build(role, mock_seed, c.image_root.as_deref()),
            None if self.mock => ClientBinding::mock().build(role, mock_seed, None),
            None => Err(Error::Config(format!(
                "the {role} needs a client binding: pass --config or --mock"
            ))),
        }
    }

    fn run_dir(&self, explicit: Option<PathBuf>) -> Result<PathBuf> {
        explicit
            .or_else(|| self.config.as_ref().map(|c| c.output_dir.clone()))
            .ok_or_else(|| Error::Config("pass --run-dir or --config".into()))
    }

    fn config(&self) -> Result<&PipelineConfig> {
        self.config
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs --config".into()))
    }
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn partition(ctx: &Ctx, input: &Path, out_dir: &Path) -> Result<()> {
    let records: Vec<GroundingRecord> = jsonl::read(input)?;
    let client = ctx.client("grounder", |c| &c.clients.grounder)?;
    let cache_path = out_dir.join("predictions_cache.jsonl");
    let mut cache = PredictionCache::load(&cache_path)?;
    let p = partition_by_difficulty(&records, &client, &mut cache)?;
    cache.save(&cache_path)?;
    jsonl::write(out_dir.join("easy.jsonl"), &p.easy)?;
    jsonl::write(out_dir.join("hard.jsonl"), &p.hard)?;
    jsonl::write(out_dir.join("outcomes.jsonl"), &p.outcomes)?;
    jsonl::write(out_dir.join("deferred.jsonl"), &p.deferred)?;
    println!(
        "easy {}  hard {}  deferred {}  requests {}",
        p.easy.len(),
        p.hard.len(),
        p.deferred.len(),
        client.requests()
    );
    Ok(())
}

fn build_ranker_data(ctx: &Ctx, dir: &Path, out: &Path) -> Result<()> {
    let easy: Vec<GroundingRecord> = jsonl::read(dir.join("easy.jsonl"))?;
    let outcomes: Vec<DifficultyOutcome> = jsonl::read(dir.join("outcomes.jsonl"))?;
    let rule = ctx
        .config
        .as_ref()
        .map(|c| c.eligibility.clone())
        .unwrap_or_default();
    let seed = ctx.seed(|c| c.seeds.ranker)?;
    let (triplets, stats) = build_training_triplets(&easy, &outcomes, &rule, seed)?;
    jsonl::write(out, &triplets)?;
    println!(
        "groups {}/{} included  positives {}  negatives {}",
        stats.groups_included, stats.groups_seen, stats.positives, stats.negatives
    );
    Ok(())
}

fn select(
    ctx: &Ctx,
    input: &Path,
    embeddings: Option<&Path>,
    out: &Path,
    ratio: Option<f64>,
) -> Result<()> {
    let records: Vec<GroundingRecord> = jsonl::read(input)?;
    let rows: Vec<EmbeddingRow> = match embeddings {
        Some(p) => jsonl::read(p)?,
        None => {
            let client = ctx.client("embedder", |c| &c.clients.embedder)?;
            client
                .fan_out(&records, |r| client.embed(r))
                .into_iter()
                .zip(&records)
                .map(|(v, r)| {
                    Ok(EmbeddingRow {
                        id: r.id.clone(),
                        vector: v?.values,
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    let mut cfg = ctx
        .config
        .as_ref()
        .map(|c| c.diversity.clone())
        .unwrap_or_default();
    if let Some(r) = ratio {
        cfg.ratio = r;
    }
    let seed = ctx.seed(|c| c.seeds.clustering)?;
    let (selected, report) =
        select_diverse(&records, &EmbeddingMatrix::from_rows(rows)?, &cfg, seed)?;
    jsonl::write(out, &selected)?;
    write_pretty(&out.with_extension("report.json"), &report)?;
    println!(
        "selected {} of {} (pca dim {}, {} iterations)",
        report.k, report.n, report.pca_dim, report.iterations
    );
    Ok(())
}

fn rewards(ctx: &Ctx, input: &Path, out: &Path) -> Result<()> {
    let cfg = ctx
        .config
        .as_ref()
        .map(|c| c.reward.clone())
        .unwrap_or_default();
    let engine = RewardEngine::new(cfg)?;
    let reqs: Vec<RewardRequest> = jsonl::read(input)?;
    let rows = score_batch(&engine, &reqs);
    jsonl::write(out, &rows)?;
    let mean = rows.iter().map(|r| r.reward.total as f64).sum::<f64>() / rows.len().max(1) as f64;
    println!("scored {}  mean total {mean:.3}", rows.len());
    Ok(())
}

#[derive(Deserialize)]
struct LabelRow {
    id: String,
    label: Label,
}

#[derive(Deserialize)]
struct ElementGold {
    id: String,
    bbox: BBox,
}

#[derive(Deserialize)]
struct PointRow {
    id: String,
    point: Point,
}

fn eval(mode: EvalMode, gold: &Path, preds: &Path, label: &str, out: Option<&Path>) -> Result<()> {
    match mode {
        EvalMode::Grounding => {
            let gold: Vec<GroundingRecord> = jsonl::read(gold)?;
            let rows: Vec<PredictionRow> = jsonl::read(preds)?;
            let report = grounding_report(&predictions_by_id(&rows), &gold);
            print!("{}", report.to_table(label));
            if !report.missing.is_empty() {
                println!("missing predictions: {}", report.missing.len());
            }
            if let Some(p) = out {
                write_pretty(p, &report)?;
            }
        }
        EvalMode::Classification => {
            let gold: Vec<LabelRow> = jsonl::read(gold)?;
            let pred: HashMap<String, Label> = jsonl::read::<LabelRow>(preds)?
                .into_iter()
                .map(|r| (r.id, r.label))
                .collect();
            let mut labels = Vec::with_capacity(gold.len());
            let mut guesses = Vec::with_capacity(gold.len());
            for g in &gold {
                let p = pred
                    .get(&g.id)
                    .ok_or_else(|| Error::Input(format!("no prediction for {}", g.id)))?;
                labels.push(g.label == Label::Positive);
                guesses.push(*p == Label::Positive);
            }
            let report = classification_report(&labels, &guesses)?;
            print!("{}", report.to_table());
            if let Some(p) = out {
                write_pretty(p, &report)?;
            }
        }
        EvalMode::Element => {
            let gold: BTreeMap<String, BBox> = jsonl::read::<ElementGold>(gold)?
                .into_iter()
                .map(|g| (g.id, g.bbox))
                .collect();
            let pred: HashMap<String, Point> = jsonl::read::<PointRow>(preds)?
                .into_iter()
                .map(|r| (r.id, r.point))
                .collect();
            let acc = element_accuracy(&pred, &gold);
            println!(
                "element accuracy {:.1}% ({}/{}, {} missing)",
                acc.accuracy * 100.0,
                acc.correct,
                acc.total,
                acc.missing.len()
            );
            if let Some(p) = out {
                write_pretty(p, &acc)?;
            }
        }
    }
    Ok(())
}

fn convert_benchmark(input: &Path, out: &Path) -> Result<()> {
    let groups = load_benchmark_groups(input)?;
    let exp = expand_benchmark_binary(&groups)?;
    jsonl::write(out, &exp.triplets)?;
    println!(
        "triplets {}  negative fraction {:.1}%  duplicates dropped {}",
        exp.triplets.len(),
        exp.negative_fraction() * 100.0,
        exp.duplicates.len()
    );
    Ok(())
}

fn make_fixture(ctx: &Ctx, dir: &Path, n: usize, images: bool) -> Result<()> {
    let seed = ctx.seed(|c| c.seeds.mock)?;
    let files = fixtures::write_fixture(dir, n, seed, images)?;
    let mut cfg = fixtures::mock_pipeline_config(&files, &dir.join("run"), seed);
    cfg.traces.enabled = images;
    // paths relative to the config file keep the fixture relocatable
    cfg.output_dir = PathBuf::from("run");
    cfg.sources[0].path = PathBuf::from("records.jsonl");
    cfg.image_root = Some(PathBuf::from("images"));
    std::fs::write(dir.join("pipeline.toml"), cfg.to_toml_string()?).map_err(|e| Error::Io {
        path: dir.join("pipeline.toml"),
        source: e,
    })?;
    println!("wrote {} records and pipeline.toml to {}", n, dir.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let ctx = Ctx::load(&cli)?;
    match cli.cmd {
        Command::Partition { input, out_dir } => partition(&ctx, &input, &out_dir),
        Command::BuildRankerData { partition_dir, out } => {
            build_ranker_data(&ctx, &partition_dir, &out)
        }
        Command::SelectDiverse {
            input,
            embeddings,
            out,
            ratio,
        } => select(&ctx, &input, embeddings.as_deref(), &out, ratio),
        Command::Rewards { input, out } => rewards(&ctx, &input, &out),
        Command::Eval {
            mode,
            gold,
            predictions,
            label,
            out,
        } => eval(mode, &gold, &predictions, &label, out.as_deref()),
        Command::ConvertBenchmark { input, out } => convert_benchmark(&input, &out),
        Command::Run => {
            let m = run_pipeline(ctx.config()?)?;
            for s in &m.stages {
                println!(
                    "{:<11} {:>6} -> {:<6} deferred {:<3} requests {:<5}{}",
                    s.name,
                    s.input_count,
                    s.output_count,
                    s.deferred,
                    s.requests,
                    if s.reused { " (reused)" } else { "" }
                );
            }
            Ok(())
        }
        Command::Assemble { run_dir } => {
            let a = assemble_run(ctx.run_dir(run_dir)?)?;
            println!(
                "final {}  rejected {}  pending {}  unknown {}",
                a.records.len(),
                a.rejected.len(),
                a.pending.len(),
                a.unknown.len()
            );
            Ok(())
        }
        Command::ServeReview {
            run_dir,
            addr,
            token,
            image_root,
        } => {
            let dir = ctx.run_dir(run_dir)?;
            let root =
                image_root.or_else(|| ctx.config.as_ref().and_then(|c| c.image_root.clone()));
            let mut cfg = ReviewServerConfig::for_run(dir, root);
            cfg.token = token;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Io {
                path: "tokio runtime".into(),
                source: e,
            })?;
            println!("review API on http://{addr}");
            rt.block_on(serve_review(cfg, addr, async {
                let _ = tokio::signal::ctrl_c().await;
            }))
        }
        Command::MakeFixture { out_dir, n, images } => make_fixture(&ctx, &out_dir, n, images),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
