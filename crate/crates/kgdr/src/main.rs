use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgdr::pcst;
use kgdr::pipeline::{
    parse_key_value_config, run_alpha_sweep, run_eval, run_k_sweep, sibling_with_suffix,
    PipelineConfig, RoleEndpoint,
};
use kgdr::retrieve::AlphaOrientation;
use kgdr::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(
    name = "kgdr",
    version,
    about = "Decompositional retrieval over textual knowledge graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline over a dataset and write records and summaries.
    Run(RunArgs),
    /// Run one evaluation per alpha value and write sweep_alpha.csv.
    SweepAlpha(SweepAlphaArgs),
    /// Run one evaluation per (K_n, K_e) pair and write sweep_k.csv.
    SweepK(SweepKArgs),
    /// Generate a planted-answer synthetic dataset with embeddings and mock
    /// scripts.
    GenSynth(GenSynthArgs),
    /// Cross-check the PCST solver against exhaustive enumeration on random
    /// instances.
    PcstCheck(PcstCheckArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Dataset file: one JSON record per line.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Node embedding file (defaults to <dataset stem>.nodes.emb).
    #[arg(long)]
    node_emb: Option<PathBuf>,
    /// Edge embedding file (defaults to <dataset stem>.edges.emb).
    #[arg(long)]
    edge_emb: Option<PathBuf>,
    /// Key-value config file; command-line flags win over file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight of the subquestion similarity term, in [0,1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Which term alpha weights: 'subquestion' or 'complex-question'.
    #[arg(long)]
    alpha_orientation: Option<AlphaOrientation>,
    /// Number of prized nodes per round (K_n).
    #[arg(long)]
    kn: Option<usize>,
    /// Number of prized edges per round (K_e).
    #[arg(long)]
    ke: Option<usize>,
    /// Constant PCST edge cost.
    #[arg(long)]
    edge_cost: Option<f64>,
    /// Cosine threshold of the relaxed Matching metric.
    #[arg(long)]
    matching_threshold: Option<f64>,
    #[arg(long)]
    decomposer_endpoint: Option<String>,
    #[arg(long)]
    decomposer_model: Option<String>,
    #[arg(long)]
    subanswer_endpoint: Option<String>,
    #[arg(long)]
    subanswer_model: Option<String>,
    #[arg(long)]
    final_endpoint: Option<String>,
    #[arg(long)]
    final_model: Option<String>,
    /// Embedding service endpoint for query strings.
    #[arg(long)]
    embed_endpoint: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    /// Use scripted mock clients and the hash embedder (fully offline).
    #[arg(long)]
    mock: bool,
    /// Mock script file (defaults to <dataset stem>.mock.json when present).
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Ablation: drop the answer-conditioning between subquestions.
    #[arg(long)]
    no_sq_dependency: bool,
    /// Ablation: replace PCST with the plain top-k union.
    #[arg(long)]
    no_connectivity: bool,
    /// Skip answering subquestions (retrieval-only rounds).
    #[arg(long)]
    no_sub_answering: bool,
    /// Record every prompt and response in records.jsonl.
    #[arg(long)]
    log_prompts: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent questions.
    #[arg(long)]
    jobs: Option<usize>,
    /// Truncate decomposition plans to this many subquestions.
    #[arg(long)]
    max_subquestions: Option<usize>,
}

#[derive(Args)]
struct SweepAlphaArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated alpha values.
    #[arg(long, default_value = "0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    alphas: String,
}

#[derive(Args)]
struct SweepKArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated K_n:K_e pairs, e.g. "3:5,5:7".
    #[arg(long, default_value = "1:1,3:5,5:7")]
    k_pairs: String,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "synth")]
    name: String,
    #[arg(long, default_value_t = 6)]
    questions: usize,
    #[arg(long, default_value_t = 20)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    decoy_shared_edges: usize,
    #[arg(long, default_value_t = 6)]
    noise_edges: usize,
}

#[derive(Args)]
struct PcstCheckArgs {
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 12)]
    max_nodes: usize,
    #[arg(long, default_value_t = 0.5)]
    edge_cost: f64,
    #[arg(long, default_value_t = 5.0)]
    prize_max: f64,
    #[arg(long, default_value_t = 13)]
    seed: u64,
}

fn env_default(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.is_empty())
}

/// Builds the pipeline config with precedence: flags > config file > env
/// vars (KGDR_ENDPOINT, KGDR_API_KEY) > built-in defaults.
fn build_pipeline_config(args: &RunArgs) -> Result<PipelineConfig, String> {
    let file: HashMap<String, String> = match &args.config {
        Some(path) => parse_key_value_config(path).map_err(|e| e.to_string())?,
        None => HashMap::new(),
    };
    let file_get = |key: &str| file.get(key).cloned();
    let file_parse = |key: &str| -> Result<Option<f64>, String> {
        file_get(key)
            .map(|v| v.parse::<f64>().map_err(|e| format!("config {key}: {e}")))
            .transpose()
    };
    let file_parse_usize = |key: &str| -> Result<Option<usize>, String> {
        file_get(key)
            .map(|v| v.parse::<usize>().map_err(|e| format!("config {key}: {e}")))
            .transpose()
    };
    let file_bool = |key: &str| -> Result<bool, String> {
        match file_get(key).as_deref() {
            None => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(other) => Err(format!("config {key}: expected true/false, got '{other}'")),
        }
    };

    let dataset = args
        .dataset
        .clone()
        .or_else(|| file_get("dataset").map(PathBuf::from))
        .ok_or("--dataset is required (flag or config file)")?;

    let out = args
        .out
        .clone()
        .or_else(|| file_get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut cfg = PipelineConfig::new(&dataset, out);

    if let Some(p) = args.node_emb.clone().or_else(|| file_get("node_emb").map(PathBuf::from)) {
        cfg.node_emb = p;
    } else {
        cfg.node_emb = sibling_with_suffix(&dataset, "nodes.emb");
    }
    if let Some(p) = args.edge_emb.clone().or_else(|| file_get("edge_emb").map(PathBuf::from)) {
        cfg.edge_emb = p;
    } else {
        cfg.edge_emb = sibling_with_suffix(&dataset, "edges.emb");
    }

    if let Some(alpha) = args.alpha.or(file_parse("alpha")?) {
        cfg.retrieval.alpha = alpha;
    }
    if let Some(orientation) =
        args.alpha_orientation.or(file_get("alpha_orientation").map(|v| v.parse()).transpose()?)
    {
        cfg.retrieval.alpha_orientation = orientation;
    }
    if let Some(kn) = args.kn.or(file_parse_usize("kn")?) {
        cfg.retrieval.k_nodes = kn;
    }
    if let Some(ke) = args.ke.or(file_parse_usize("ke")?) {
        cfg.retrieval.k_edges = ke;
    }
    if let Some(cost) = args.edge_cost.or(file_parse("edge_cost")?) {
        cfg.retrieval.edge_cost = cost;
    }
    if let Some(threshold) = args.matching_threshold.or(file_parse("matching_threshold")?) {
        cfg.retrieval.matching_threshold = threshold;
    }

    let env_endpoint = env_default("KGDR_ENDPOINT");
    let env_key = env_default("KGDR_API_KEY");
    let role = |endpoint_flag: &Option<String>,
                model_flag: &Option<String>,
                endpoint_key: &str,
                model_key: &str|
     -> RoleEndpoint {
        let mut role = RoleEndpoint::default();
        if let Some(endpoint) = &env_endpoint {
            role.endpoint = endpoint.clone();
        }
        if let Some(endpoint) = file_get(endpoint_key) {
            role.endpoint = endpoint;
        }
        if let Some(endpoint) = endpoint_flag {
            role.endpoint = endpoint.clone();
        }
        if let Some(model) = file_get(model_key) {
            role.model = model;
        }
        if let Some(model) = model_flag {
            role.model = model.clone();
        }
        role.api_key = env_key.clone();
        role
    };
    cfg.decomposer = role(
        &args.decomposer_endpoint,
        &args.decomposer_model,
        "decomposer_endpoint",
        "decomposer_model",
    );
    cfg.sub_answerer = role(
        &args.subanswer_endpoint,
        &args.subanswer_model,
        "subanswer_endpoint",
        "subanswer_model",
    );
    cfg.final_answerer =
        role(&args.final_endpoint, &args.final_model, "final_endpoint", "final_model");
    cfg.embedding = role(&args.embed_endpoint, &args.embed_model, "embed_endpoint", "embed_model");

    cfg.no_sq_dependency = args.no_sq_dependency || file_bool("no_sq_dependency")?;
    cfg.no_connectivity = args.no_connectivity || file_bool("no_connectivity")?;
    cfg.no_sub_answering = args.no_sub_answering || file_bool("no_sub_answering")?;
    cfg.mock = args.mock || file_bool("mock")?;
    cfg.mock_script =
        args.mock_script.clone().or_else(|| file_get("mock_script").map(PathBuf::from));
    cfg.log_prompts = args.log_prompts || file_bool("log_prompts")?;
    if let Some(jobs) = args.jobs.or(file_parse_usize("jobs")?) {
        cfg.jobs = jobs;
    }
    cfg.max_subquestions = args.max_subquestions.or(file_parse_usize("max_subquestions")?);
    Ok(cfg)
}

fn parse_alphas(raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("bad alpha '{s}': {e}")))
        .collect()
}

fn parse_k_pairs(raw: &str) -> Result<Vec<(usize, usize)>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let (kn, ke) = s.split_once(':').ok_or(format!("bad pair '{s}', expected Kn:Ke"))?;
            Ok((
                kn.trim().parse().map_err(|e| format!("bad K_n '{kn}': {e}"))?,
                ke.trim().parse().map_err(|e| format!("bad K_e '{ke}': {e}"))?,
            ))
        })
        .collect()
}

fn print_summary(summary: &kgdr::eval::RunSummary) {
    println!(
        "questions={} failed={} hit1={:.4} f1={:.4} exact_matching={:.4} matching={:.4} \
         connected={:.4} mean_density={:.4} mean_subquestions={:.2} mean_llm_calls={:.2}",
        summary.num_questions,
        summary.num_failed,
        summary.hit1,
        summary.f1,
        summary.exact_matching,
        summary.matching,
        summary.connected_fraction,
        summary.mean_density,
        summary.mean_subquestions,
        summary.mean_llm_calls,
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run(args) => {
            let cfg = build_pipeline_config(&args)?;
            let summary = run_eval(&cfg).map_err(|e| e.to_string())?;
            print_summary(&summary);
            println!("records: {}", cfg.out_dir.join("records.jsonl").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepAlpha(args) => {
            let cfg = build_pipeline_config(&args.run)?;
            let alphas = parse_alphas(&args.alphas)?;
            let summaries = run_alpha_sweep(&cfg, &alphas).map_err(|e| e.to_string())?;
            for summary in &summaries {
                print!("alpha={:<5} ", summary.alpha);
                print_summary(summary);
            }
            println!("sweep: {}", cfg.out_dir.join("sweep_alpha.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepK(args) => {
            let cfg = build_pipeline_config(&args.run)?;
            let pairs = parse_k_pairs(&args.k_pairs)?;
            let summaries = run_k_sweep(&cfg, &pairs).map_err(|e| e.to_string())?;
            for summary in &summaries {
                print!(
                    "kn={} ke={} merged_nodes={:.2} ",
                    summary.k_nodes, summary.k_edges, summary.mean_merged_nodes
                );
                print_summary(summary);
            }
            println!("sweep: {}", cfg.out_dir.join("sweep_k.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::GenSynth(args) => {
            let out = generate(&SynthConfig {
                out_dir: args.out,
                name: args.name,
                questions: args.questions,
                nodes_per_graph: args.nodes,
                hops: args.hops,
                dim: args.dim,
                seed: args.seed,
                decoy_shared_edges: args.decoy_shared_edges,
                noise_edges: args.noise_edges,
            })
            .map_err(|e| e.to_string())?;
            println!("dataset: {}", out.dataset.display());
            println!("node embeddings: {}", out.node_emb.display());
            println!("edge embeddings: {}", out.edge_emb.display());
            println!("mock script: {}", out.mock_script.display());
            println!(
                "mock script (no decomposition): {}",
                out.mock_script_no_decomposition.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::PcstCheck(args) => {
            let report = pcst::oracle_check(
                args.instances,
                args.max_nodes,
                args.edge_cost,
                args.prize_max,
                args.seed,
            )
            .map_err(|e| e.to_string())?;
            println!(
                "instances={} (trees: {}) disconnected={} guarantee_violations={} \
                 tree_mismatches={} worst_ratio={:.4}",
                report.instances,
                report.tree_instances,
                report.disconnected_solutions,
                report.guarantee_violations,
                report.tree_mismatches,
                if report.worst_ratio.is_finite() { report.worst_ratio } else { 1.0 },
            );
            if report.passed() {
                println!("pcst-check: PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("pcst-check: FAIL");
                Ok(ExitCode::FAILURE)
            }
        }
    }
}
