//! `align`: command-line front end for training, retrieval, evaluation and
//! the HTTP service.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use align_core::backend::{AppendRefiner, LengthJudge, RubricJudge, ScoreJudge, TableResponder};
use align_core::features::HashedBagFeaturizer;
use align_core::io::{load_feedback, load_preferences, load_qac, read_jsonl, write_jsonl, PreferenceRow, RewardArtifact};
use align_core::llf::{self_improve, train_feedback_model, FeedbackModel, FeedbackTrainConfig};
use align_core::policy::{gibbs_optimum, max_total_variation, objective_from_rewards, optimize_policy_with_rewards, TabularPolicy};
use align_core::reward::{pairwise_accuracy, train_reward_model, RewardModelSpec, RlhfConfig, ScorerKind};
use align_core::synthetic::w2s_world;
use align_core::w2s::{w2s_cycle, write_cycle_artifacts, CorrectorConfig, W2sConfig};
use align_core::{Lang, Prompt, Provenance, ResponseText};
use align_evalkit::{
    read_items, run_bench, write_raw, CharSets, EvalItem, HttpJudge, Judge, Judgment, LabelJudge, RefusalDetector, RuleJudge,
    RunMeta, System,
};
use align_pipeline::{Pipeline, PipelineConfig};
use align_retrieval::{build_index, load_corpus, InvertedIndex};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "align", version, about = "Preference alignment, retrieval and evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a Bradley-Terry reward model on a preference file.
    TrainReward {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Scorer::Linear)]
        scorer: Scorer,
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value_t = 256)]
        dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize a random tabular policy and compare it with the Gibbs optimum.
    RlhfToy {
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        /// Defaults to 1/beta.
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        prompts: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
    },
    /// Train a critique model on `{prompt, response, feedback}` lines.
    LlfTrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 32)]
        max_len: usize,
    },
    /// Generate, critique and refine; write accepted pairs as preferences.
    LlfImprove {
        #[arg(long)]
        model: PathBuf,
        /// `{id, text, lang, answer}` lines.
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long, default_value_t = 3)]
        iters: usize,
        /// Comma-separated phrases; switches the judge from length to rubric.
        #[arg(long)]
        reward_phrases: Option<String>,
        #[arg(long)]
        penalize_phrases: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the correction-driven training cycle and write its artifacts.
    W2s {
        #[arg(long, required_unless_present = "synthetic")]
        qac: Option<PathBuf>,
        /// `{id, text, lang, answer}` lines.
        #[arg(long, required_unless_present = "synthetic")]
        prompts: Option<PathBuf>,
        /// Use the seeded synthetic world instead of files.
        #[arg(long, conflicts_with_all = ["qac", "prompts"])]
        synthetic: Option<u64>,
        #[arg(long, default_value_t = 2)]
        iterations: usize,
        #[arg(long, default_value_t = 150)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Index(IndexCommand),
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Send queries through the answer pipeline in one session.
    Chat {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "cli")]
        session: String,
        #[arg(required = true)]
        queries: Vec<String>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Subcommand)]
enum IndexCommand {
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        q: String,
        #[arg(short, default_value_t = 5)]
        k: usize,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    Run {
        #[arg(long)]
        items: PathBuf,
        #[arg(long, value_enum, default_value_t = JudgeArg::Rule)]
        judge: JudgeArg,
        /// JSON object of item id to judgment, for `--judge labels`.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        judge_url: Option<String>,
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long, default_value = "cli")]
        run_id: String,
        #[arg(long, default_value = "1970-01-01T00:00:00Z")]
        timestamp: String,
        #[arg(long, default_value_t = 2)]
        precision: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        raw: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scorer {
    Linear,
    Mlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum JudgeArg {
    Rule,
    Labels,
    Http,
}

#[derive(Debug, Serialize, Deserialize)]
struct PromptRow {
    id: String,
    text: String,
    #[serde(default)]
    lang: Lang,
    answer: String,
}

fn load_prompts(path: &Path) -> Result<(Vec<Prompt>, TableResponder)> {
    let rows: Vec<PromptRow> = read_jsonl(path).with_context(|| format!("reading {}", path.display()))?;
    let mut prompts = Vec::with_capacity(rows.len());
    let mut answers = BTreeMap::new();
    for r in rows {
        prompts.push(Prompt::new(r.id.clone(), r.text, r.lang)?);
        answers.insert(r.id, r.answer);
    }
    Ok((prompts, TableResponder { answers }))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn phrases(s: &Option<String>) -> Vec<String> {
    s.as_deref().map(|s| s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()).unwrap_or_default()
}

fn random_instance(seed: u64, prompts: usize, k: usize) -> Result<(TabularPolicy, Vec<Vec<f64>>)> {
    if k < 2 {
        bail!("k must be at least 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::new();
    let mut rewards = Vec::new();
    for j in 0..prompts {
        let p = Prompt::new(format!("p{j}"), format!("prompt {j}"), Lang::English)?;
        let cands = (0..k)
            .map(|i| ResponseText::new(format!("p{j}/{i}"), &p, format!("candidate {i}"), Provenance::Base))
            .collect::<align_core::Result<Vec<_>>>()?;
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        sets.push((p, cands, raw.iter().map(|x| x / s).collect()));
        rewards.push((0..k).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    Ok((TabularPolicy::from_probs(sets)?, rewards))
}

struct PipelineSystem<'a>(&'a Pipeline);

impl System for PipelineSystem<'_> {
    fn id(&self) -> &str {
        self.0.backend.id()
    }

    fn respond(&self, item: &EvalItem) -> std::result::Result<String, String> {
        let mut session = self.0.new_session(item.id.clone());
        self.0.run(&mut session, &item.question).map(|a| a.text).map_err(|e| e.to_string())
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainReward { data, steps, lr, seed, scorer, hidden, dim, out } => {
            let pairs = load_preferences(&data)?;
            let kind = match scorer {
                Scorer::Linear => ScorerKind::Linear,
                Scorer::Mlp => ScorerKind::Mlp { hidden },
            };
            let cfg = RlhfConfig { steps, learning_rate: lr, seed, ..Default::default() };
            let spec = RewardModelSpec { featurizer: HashedBagFeaturizer::new(dim), kind };
            let t = train_reward_model(&pairs, spec, &cfg)?;
            let acc = pairwise_accuracy(&t.model, &pairs)?;
            println!("pairs {}  final loss {:.6}  train accuracy {:.4}", pairs.len(), t.loss_history.last().copied().unwrap_or(f64::NAN), acc);
            if let Some(out) = out {
                write_json(&out, &RewardArtifact::new(&t, cfg))?;
            }
        }
        Command::RlhfToy { beta, steps, lr, seed, prompts, k } => {
            let (base, rewards) = random_instance(seed, prompts, k)?;
            let cfg = RlhfConfig { beta, learning_rate: lr.unwrap_or(1.0 / beta), steps, seed };
            let policy = optimize_policy_with_rewards(&base, &base, &rewards, &cfg)?;
            let target = gibbs_optimum(&base, &rewards, beta)?;
            let tv = max_total_variation(&policy.probs(), &target);
            let obj = objective_from_rewards(&policy, &base, &rewards, beta)?;
            println!("beta {beta}  steps {steps}  objective {obj:.9}  max TV to Gibbs {tv:.3e}");
        }
        Command::LlfTrain { data, out, alpha, max_len } => {
            let records = load_feedback(&data)?;
            let cfg = FeedbackTrainConfig { alpha, max_len, ..Default::default() };
            let model = train_feedback_model(&records, &cfg)?;
            let loss = align_core::llf::feedback_loss(&model, &records)?;
            println!("records {}  train loss {loss:.6}", records.len());
            write_json(&out, &model)?;
        }
        Command::LlfImprove { model, prompts, iters, reward_phrases, penalize_phrases, out } => {
            let model: FeedbackModel = serde_json::from_slice(&fs::read(&model)?)?;
            let (prompts, responder) = load_prompts(&prompts)?;
            let rubric = RubricJudge { rewarded: phrases(&reward_phrases), penalized: phrases(&penalize_phrases) };
            let judge: &dyn ScoreJudge = if rubric.rewarded.is_empty() && rubric.penalized.is_empty() { &LengthJudge } else { &rubric };
            let mut rows = Vec::new();
            for p in &prompts {
                let pairs = self_improve(p, &responder, &model, &AppendRefiner, judge, iters)?;
                rows.extend(pairs.iter().map(PreferenceRow::from_pair));
            }
            println!("prompts {}  pairs {}  judge {}", prompts.len(), rows.len(), judge.id());
            write_jsonl(&out, &rows)?;
        }
        Command::W2s { qac, prompts, synthetic, iterations, steps, beta, out } => {
            let (seed_qac, train, base) = match synthetic {
                Some(seed) => {
                    let w = w2s_world(seed, 20, 40, 0);
                    (w.seed_qac, w.train_prompts, w.base)
                }
                None => {
                    let seed_qac = load_qac(qac.as_deref().expect("required by clap"))?;
                    let (p, base) = load_prompts(prompts.as_deref().expect("required by clap"))?;
                    (seed_qac, p, base)
                }
            };
            let cfg = W2sConfig {
                rlhf: RlhfConfig { steps, beta, ..Default::default() },
                corrector: CorrectorConfig::default(),
                reward: RewardModelSpec::default(),
            };
            let artifacts = w2s_cycle(&seed_qac, &train, &base, iterations, &cfg, &LengthJudge)?;
            fs::create_dir_all(&out)?;
            write_cycle_artifacts(&out, &artifacts, &cfg)?;
            for a in &artifacts {
                let m = &a.metrics;
                println!(
                    "iteration {}  pairs {}  judge original {:.3}  corrected {:.3}  policy {:.3}  reward acc {:.3}",
                    a.iteration, m.pairs_emitted, m.mean_judge_original, m.mean_judge_corrected, m.mean_judge_policy, m.reward_train_accuracy
                );
            }
        }
        Command::Index(IndexCommand::Build { corpus, out }) => {
            let docs = load_corpus(&corpus)?;
            let idx = build_index(&docs)?;
            idx.save(&out)?;
            println!("indexed {} documents, {} terms", idx.doc_count, idx.postings.len());
        }
        Command::Index(IndexCommand::Query { index, q, k }) => {
            let idx = InvertedIndex::load(&index)?;
            for hit in idx.retrieve(&q, k)? {
                println!("{:.6}\t{}\t{}", hit.score, hit.doc_id, hit.snippet.replace('\n', " "));
            }
        }
        Command::Eval(EvalCommand::Run { items, judge, labels, judge_url, pipeline, run_id, timestamp, precision, out, raw }) => {
            let items = read_items(&items)?;
            let p = Pipeline::from_config(&PipelineConfig::load(&pipeline)?)?;
            let templates: Vec<String> = p.rules.templates().values().cloned().collect();
            let detector = RefusalDetector::with_templates(templates);
            let judge: Box<dyn Judge> = match judge {
                JudgeArg::Rule => Box::new(RuleJudge::new(detector.clone())),
                JudgeArg::Labels => {
                    let path = labels.context("--labels is required with --judge labels")?;
                    let labels: BTreeMap<String, Judgment> = serde_json::from_slice(&fs::read(&path)?)?;
                    Box::new(LabelJudge { labels })
                }
                JudgeArg::Http => {
                    let url = judge_url.context("--judge-url is required with --judge http")?;
                    Box::new(HttpJudge::new(url, std::time::Duration::from_secs(30)))
                }
            };
            let meta = RunMeta {
                run_id,
                system_id: format!("pipeline:{}", p.backend.id()),
                judge_id: judge.id().to_string(),
                timestamp,
                precision,
            };
            let (report, raw_results) = run_bench(&items, &PipelineSystem(&p), judge.as_ref(), &detector, &CharSets::default(), meta)?;
            write_json(&out, &report)?;
            if let Some(raw) = raw {
                write_raw(&raw, &raw_results)?;
            }
            println!("items {}  responses {}  failures {}  coverage {}", report.items, report.responses, report.failures, report.coverage);
        }
        Command::Chat { config, session, queries } => {
            let p = Pipeline::from_config(&PipelineConfig::load(&config)?)?;
            let mut s = p.new_session(session);
            for q in queries {
                match p.run(&mut s, &q) {
                    Ok(a) => println!("{}", serde_json::to_string_pretty(&a)?),
                    Err(e) => eprintln!("{q}: {e}"),
                }
            }
        }
        Command::Serve { data_dir, port } => {
            let mut cfg = align_service::ServiceConfig::from_env().map_err(anyhow::Error::msg)?;
            if let Some(d) = data_dir {
                let keep = cfg.port;
                cfg = align_service::ServiceConfig::new(d);
                cfg.port = keep;
            }
            if let Some(p) = port {
                cfg.port = p;
            }
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on 0.0.0.0:{}", cfg.port);
            rt.block_on(align_service::serve(cfg))?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
