use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use mbti_rank_core::grpo::RewardTerms;
use mbti_rank_core::metrics::F1Average;
use mbti_rank_core::pipeline::MaskMode;
use mbti_rank_core::{parse_type, total_reward, RewardConfig};
use serde::{Deserialize, Serialize};

use mbti_rank::config::RunConfig;
use mbti_rank::eval::{evaluate_file, render_report, EvalOptions};
use mbti_rank::io::{read_lines, IoError};
use mbti_rank::prepare::{self, PrepareJob, RecordFormat};
use mbti_rank::scoring::CompletionScore;
use mbti_rank::service;
use mbti_rank::train::{run_dataset, run_synthetic, write_artifacts};

/// Ranking rewards, GRPO training and evaluation for MBTI type prediction.
#[derive(Debug, Parser)]
#[command(name = "mbti-rank", version)]
struct Cli {
    /// Flat `section.key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mask, truncate and filter a dataset into SFT and RL splits.
    Prepare(PrepareArgs),
    /// Score completions against a ground-truth type.
    Score(ScoreArgs),
    /// Train the ranking policy with GRPO.
    Train(TrainArgs),
    /// Evaluate a prediction file against a truth file.
    Eval(EvalArgs),
    /// Serve the scoring API over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct RewardArgs {
    /// Length of the ranked answer list.
    #[arg(long)]
    k: Option<usize>,
    /// Per-dimension weight increment of the similarity.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MaskModeArg {
    Replace,
    Remove,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum F1AverageArg {
    Macro,
    Micro,
    Weighted,
}

impl From<F1AverageArg> for F1Average {
    fn from(a: F1AverageArg) -> Self {
        match a {
            F1AverageArg::Macro => F1Average::Macro,
            F1AverageArg::Micro => F1Average::Micro,
            F1AverageArg::Weighted => F1Average::Weighted,
        }
    }
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// User records, one `{user_id, posts, label}` object per line.
    #[arg(long)]
    records: PathBuf,
    /// Read records from a `type,posts` CSV with `|||`-separated posts.
    #[arg(long)]
    csv: bool,
    /// Teacher completions, one `{user_id, completion}` object per line.
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Directory for sft.jsonl, rl.jsonl and rejections.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
    /// Keep at most this many filtered samples (seeded selection).
    #[arg(long)]
    max_kept: Option<usize>,
    #[arg(long)]
    max_posts: Option<usize>,
    /// Whitespace tokens kept per post.
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    mask_token: Option<String>,
    #[arg(long, value_enum)]
    mask_mode: Option<MaskModeArg>,
    /// Also mask wildcard codes such as xNTP.
    #[arg(long)]
    mask_wildcards: bool,
    /// Accept `<answer>` as the closer of a teacher's answer block.
    #[arg(long)]
    lenient_closer: bool,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Ground-truth type code.
    #[arg(long)]
    truth: Option<String>,
    /// Completion text; repeat for several.
    #[arg(long, conflicts_with = "file")]
    completion: Vec<String>,
    /// Lines of `{completion, ground_truth?}`; `--truth` fills a missing ground_truth.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Write the records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    reward: RewardArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Train on a generated separable task.
    #[arg(long, conflicts_with = "dataset")]
    synthetic: bool,
    /// Lines of `{features, truth}`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Held-out lines of `{features, truth}`; defaults to the dataset.
    #[arg(long, requires = "dataset")]
    heldout: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    prompts_per_step: Option<usize>,
    #[arg(long)]
    clip_epsilon: Option<f64>,
    #[arg(long)]
    kl_beta: Option<f64>,
    /// Drop the dimension-similarity term from the optimized reward.
    #[arg(long)]
    no_ds_reward: bool,
    /// Drop the NDCG term from the optimized reward.
    #[arg(long)]
    no_ndcg_reward: bool,
    /// Directory for training_log.jsonl and policy.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    reward: RewardArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Lines of `{user_id, completion}` or `{user_id, answers}`.
    #[arg(long)]
    predictions: PathBuf,
    /// Lines of `{user_id, label}`.
    #[arg(long)]
    truth: PathBuf,
    /// Fail on missing users and malformed lines instead of counting them invalid.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum)]
    f1_average: Option<F1AverageArg>,
    /// Accept `<answer>` as the closer of an answer block.
    #[arg(long)]
    lenient_closer: bool,
    /// Write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    host: Option<IpAddr>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    max_body_bytes: Option<usize>,
    #[command(flatten)]
    reward: RewardArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Prepare(a) => cmd_prepare(cfg, a),
        Command::Score(a) => cmd_score(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Eval(a) => cmd_eval(cfg, a),
        Command::Serve(a) => cmd_serve(cfg, a),
    }
}

fn apply_reward(cfg: &mut RunConfig, a: &RewardArgs) {
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(e) = a.epsilon {
        cfg.epsilon = e;
    }
}

fn echo(cfg: &RunConfig) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "# effective configuration");
    let _ = err.write_all(cfg.render().as_bytes());
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn cmd_prepare(mut cfg: RunConfig, a: PrepareArgs) -> Result<()> {
    let p = &mut cfg.pipeline;
    if let Some(v) = a.max_posts {
        p.max_posts_per_user = v;
    }
    if let Some(v) = a.max_tokens {
        p.max_tokens_per_post = v;
    }
    if let Some(v) = a.mask_token {
        p.mask_token = v;
    }
    if let Some(m) = a.mask_mode {
        p.mask_mode = match m {
            MaskModeArg::Replace => MaskMode::Replace,
            MaskModeArg::Remove => MaskMode::Remove,
        };
    }
    p.mask_wildcards |= a.mask_wildcards;
    p.lenient_closer |= a.lenient_closer;
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if a.max_kept.is_some() {
        cfg.max_kept = a.max_kept;
    }
    echo(&cfg);

    let job = PrepareJob {
        records: a.records,
        format: if a.csv {
            RecordFormat::KaggleCsv
        } else {
            RecordFormat::Jsonl
        },
        teacher: a.teacher,
        out_dir: a.out_dir,
        max_kept: cfg.max_kept,
        seed: cfg.seed,
    };
    let s = prepare::run(&job, &cfg.pipeline()?)?;
    println!(
        "records {}\nteacher samples {}\nkept {}\nrejected {}\nsft users {}\nrl users {}",
        s.records, s.teacher_samples, s.kept, s.rejected, s.sft, s.rl
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ScoreLine {
    completion: String,
    ground_truth: Option<String>,
}

#[derive(Debug, Serialize)]
struct ScoreRecord {
    ground_truth: String,
    #[serde(flatten)]
    score: CompletionScore,
}

fn cmd_score(mut cfg: RunConfig, a: ScoreArgs) -> Result<()> {
    apply_reward(&mut cfg, &a.reward);
    echo(&cfg);
    let reward = cfg.reward()?;
    let default_truth = a.truth.as_deref().map(parse_type).transpose()?;

    let mut jobs = Vec::new();
    match &a.file {
        Some(path) => {
            for (n, line) in read_lines(path)? {
                let item: ScoreLine = serde_json::from_str(&line)
                    .map_err(|e| IoError::schema(path, n, e.to_string()))?;
                let truth = match item.ground_truth.as_deref() {
                    Some(t) => parse_type(t).map_err(|e| IoError::schema(path, n, e.to_string()))?,
                    None => default_truth
                        .ok_or_else(|| IoError::schema(path, n, "no ground_truth and no --truth"))?,
                };
                jobs.push((item.completion, truth));
            }
        }
        None => {
            let Some(truth) = default_truth else {
                bail!("--truth is required with --completion");
            };
            if a.completion.is_empty() {
                bail!("give --completion or --file");
            }
            jobs.extend(a.completion.iter().map(|c| (c.clone(), truth)));
        }
    }

    let mut out = output(a.out.as_deref())?;
    for (completion, truth) in jobs {
        let record = ScoreRecord {
            ground_truth: truth.to_string(),
            score: total_reward(&completion, truth, &reward).into(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    apply_reward(&mut cfg, &a.reward);
    let g = &mut cfg.grpo;
    if let Some(v) = a.steps {
        g.steps = v;
    }
    if let Some(v) = a.group_size {
        g.group_size = v;
    }
    if let Some(v) = a.learning_rate {
        g.learning_rate = v;
    }
    if let Some(v) = a.prompts_per_step {
        g.prompts_per_step = v;
    }
    if let Some(v) = a.clip_epsilon {
        g.clip_epsilon = v;
    }
    if let Some(v) = a.kl_beta {
        g.kl_beta = v;
    }
    echo(&cfg);

    let reward = cfg.reward()?;
    let grpo = cfg.grpo()?;
    let terms = RewardTerms {
        ndcg: !a.no_ndcg_reward,
        ds: !a.no_ds_reward,
    };
    let outcome = match (&a.dataset, a.synthetic) {
        (Some(path), _) => run_dataset(path, a.heldout.as_deref(), cfg.synthetic.init_scale, &grpo, &reward, terms)?,
        (None, true) => run_synthetic(&cfg.synthetic, &grpo, &reward, terms)?,
        (None, false) => bail!("give --synthetic or --dataset"),
    };
    if let Some(last) = outcome.log.steps.last() {
        info!("final step mean reward {:.4}", last.mean_reward);
    }
    if let Some(dir) = &a.out_dir {
        write_artifacts(dir, &outcome)?;
        info!("wrote artifacts to {}", dir.display());
    } else {
        warn!("no --out-dir given; the trained policy is not saved");
    }
    println!("steps {}", outcome.log.steps.len());
    println!("heldout ndcg@{} {:.6}", reward.k(), outcome.heldout.ndcg);
    println!("heldout ds {:.6}", outcome.heldout.ds);
    println!("heldout top1 accuracy {:.6}", outcome.heldout.top1_accuracy);
    Ok(())
}

fn cmd_eval(mut cfg: RunConfig, a: EvalArgs) -> Result<()> {
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(avg) = a.f1_average {
        cfg.f1_average = avg.into();
    }
    cfg.strict |= a.strict;
    cfg.pipeline.lenient_closer |= a.lenient_closer;
    echo(&cfg);
    let opts = EvalOptions {
        reward: cfg.reward()?,
        f1_average: cfg.f1_average,
        strict: cfg.strict,
        lenient_closer: cfg.pipeline.lenient_closer,
    };
    let report = evaluate_file(&a.predictions, &a.truth, &opts)?;
    print!("{}", render_report(&report));
    if let Some(path) = &a.out {
        let body = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, body + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn cmd_serve(mut cfg: RunConfig, a: ServeArgs) -> Result<()> {
    apply_reward(&mut cfg, &a.reward);
    if let Some(h) = a.host {
        cfg.service.host = h;
    }
    if let Some(p) = a.port {
        cfg.service.port = p;
    }
    if let Some(m) = a.max_body_bytes {
        cfg.service.max_body_bytes = m;
    }
    echo(&cfg);
    let reward: RewardConfig = cfg.reward()?;
    let addr = SocketAddr::new(cfg.service.host, cfg.service.port);

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = service::bind(addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        eprintln!("listening on {}", listener.local_addr()?);
        let app = service::router(reward, cfg.service.max_body_bytes);
        service::serve(listener, app, async {
            let _ = tokio::signal::ctrl_c().await;
            info!("shutting down");
        })
        .await?;
        Ok(())
    })
}
