use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use optfuzz::generator::ConstraintLevel;
use optfuzz::graph_model::{from_text, to_text, NodeInfoTable};
use optfuzz::harness::{
    count_active_nodes, load_case, run_campaign, shrink, sweep, AdapterClient, AdapterReply, AdapterSpec,
    CampaignConfig, CaseRecord, ConfigError, Corpus, HarnessError, PlannedCase, Reproducer, SweepGrid, EXIT_BUGS,
    EXIT_CLEAN, EXIT_CONFIG,
};
use optfuzz::mini_ir::{print_module, run_backend, Backend, Pipeline, SeededBug};
use optfuzz::oracles::{draw_inputs, run_case};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Overrides the corpus directory of any configuration.
const CORPUS_ENV: &str = "OPTFUZZ_CORPUS_DIR";

#[derive(Parser)]
#[command(name = "optfuzz", version, about = "Generation-based fuzzer for graph-level compiler optimizations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fuzzing campaign.
    Fuzz(CampaignArgs),
    /// Re-run a persisted case and print its verdict.
    Replay { case: PathBuf },
    /// Minimize a persisted failing case.
    Shrink {
        case: PathBuf,
        /// Output stem; defaults to `<case>.min`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one campaign per (p0, alpha) grid point.
    Sweep {
        #[command(flatten)]
        campaign: CampaignArgs,
        /// p0 values; defaults to 0.0, 0.2, ..., 1.0.
        #[arg(long = "grid-p0", value_delimiter = ',')]
        grid_p0: Vec<f64>,
        /// alpha values; defaults to the configured alpha.
        #[arg(long = "grid-alpha", value_delimiter = ',')]
        grid_alpha: Vec<f64>,
        /// Directory for sweep.json and sweep.csv.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Count active nodes of a graph file or persisted case.
    ActiveNodes {
        graph: PathBuf,
        /// Seeded defects to activate in the pipeline.
        #[arg(long = "bug")]
        bugs: Vec<SeededBug>,
    },
    /// Handshake with an adapter and compare it against the tree backend.
    AdapterCheck {
        /// Adapter program and arguments.
        #[arg(required = true, trailing_var_arg = true, allow_hyphen_values = true)]
        command: Vec<String>,
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
    },
}

#[derive(Args)]
struct CampaignArgs {
    /// TOML campaign configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Seeded defect to activate (repeatable).
    #[arg(long = "bug")]
    bugs: Vec<SeededBug>,
    /// External adapter command line, split on whitespace (repeatable).
    #[arg(long = "adapter")]
    adapters: Vec<String>,
}

impl CampaignArgs {
    fn resolve(&self) -> Result<CampaignConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(p) => CampaignConfig::load(p)?,
            None => CampaignConfig::default(),
        };
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.p0 {
            cfg.p0 = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.parallelism {
            cfg.parallelism = v;
        }
        if let Some(v) = &self.corpus {
            cfg.corpus_dir = Some(v.clone());
        }
        if let Some(v) = &self.report {
            cfg.report_path = Some(v.clone());
        }
        for b in &self.bugs {
            cfg.case.faults.insert(*b);
        }
        for (i, a) in self.adapters.iter().enumerate() {
            cfg.adapters.push(AdapterSpec {
                name: format!("adapter{i}"),
                command: a.split_whitespace().map(String::from).collect(),
                timeout_secs: 10.0,
            });
        }
        if let Some(dir) = std::env::var_os(CORPUS_ENV) {
            cfg.corpus_dir = Some(PathBuf::from(dir));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fuzz(args: &CampaignArgs) -> Result<i32> {
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("optfuzz: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    let report = match run_campaign(&cfg) {
        Ok(r) => r,
        Err(e @ HarnessError::Config(_)) => {
            eprintln!("optfuzz: {e}");
            return Ok(EXIT_CONFIG);
        }
        Err(e) => return Err(e.into()),
    };
    println!(
        "{} cases (level0 {}, level1 {}), {} new bugs, final p {:.4}",
        report.iterations,
        report.cases_at(ConstraintLevel::Unconstrained),
        report.cases_at(ConstraintLevel::Constrained),
        report.new_bugs,
        report.final_p
    );
    for b in &report.bugs {
        println!("  bug {} at iteration {}: {} {} {}", b.id, b.iteration, b.oracle, b.outcome, b.graph_file);
    }
    for e in &report.adapter_errors {
        println!("  adapter error: {e}");
    }
    Ok(report.exit_code())
}

fn replay(path: &Path) -> Result<i32> {
    let (g, rec) = load_case(path)?;
    let t = NodeInfoTable::rebuild(&g);
    let v = run_case(&g, &t, rec.level, &rec.case, rec.case_seed);
    println!("{}", v.to_json());
    eprintln!("recorded {} {:?}; replayed {} {:?}", rec.verdict.outcome, rec.verdict.oracle, v.outcome, v.oracle);
    Ok(if v.outcome.is_failure() { EXIT_BUGS } else { EXIT_CLEAN })
}

fn shrink_case(path: &Path, out: Option<&Path>) -> Result<i32> {
    let (g, rec) = load_case(path)?;
    if !rec.verdict.outcome.is_failure() {
        bail!("case {} is not a failure", path.display());
    }
    let dedup = Default::default();
    let r = Reproducer { level: rec.level, case: &rec.case, case_seed: rec.case_seed, target: &rec.verdict, dedup: &dedup };
    let res = shrink(&g, &r)?;
    let stem = out.map(Path::to_path_buf).unwrap_or_else(|| path.with_extension("min"));
    let dir = stem.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = stem.file_name().context("output needs a file name")?.to_string_lossy().into_owned();
    let corpus = Corpus::open(dir)?;
    let record = CaseRecord {
        fingerprint: optfuzz::graph_model::fingerprint(&res.graph),
        verdict: res.verdict.clone(),
        ..rec
    };
    let file = corpus.write_case(&name, &res.graph, &record)?;
    println!("{} -> {} nodes in {} runs: {}", g.len(), res.graph.len(), res.attempts, dir.join(file).display());
    print!("{}", to_text(&res.graph));
    Ok(EXIT_BUGS)
}

fn run_sweep(args: &CampaignArgs, p0: &[f64], alpha: &[f64], out_dir: &Path) -> Result<i32> {
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("optfuzz: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    let grid = SweepGrid {
        p0: if p0.is_empty() { SweepGrid::p0_range(0.0, 1.0, 5, cfg.alpha).p0 } else { p0.to_vec() },
        alpha: if alpha.is_empty() { vec![cfg.alpha] } else { alpha.to_vec() },
    };
    let report = match sweep(&cfg, &grid) {
        Ok(r) => r,
        Err(e @ HarnessError::Config(_)) => {
            eprintln!("optfuzz: {e}");
            return Ok(EXIT_CONFIG);
        }
        Err(e) => return Err(e.into()),
    };
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("sweep.json"), report.to_json())?;
    let csv = report.to_csv();
    std::fs::write(out_dir.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(if report.points.iter().any(|p| p.new_bugs > 0) { EXIT_BUGS } else { EXIT_CLEAN })
}

fn active_nodes(path: &Path, bugs: &[SeededBug]) -> Result<i32> {
    let (g, mut faults) = if path.with_extension("json").exists() {
        let (g, rec) = load_case(path)?;
        (g, rec.case.faults)
    } else {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        (from_text(&text)?, Default::default())
    };
    for b in bugs {
        faults.insert(*b);
    }
    let n = count_active_nodes(&g, &Pipeline::full().with_faults(faults));
    println!("{n}/{}", g.len());
    Ok(EXIT_CLEAN)
}

fn adapter_check(command: &[String], cases: usize, seed: u64, timeout: f64) -> Result<i32> {
    let spec = AdapterSpec { name: "check".into(), command: command.to_vec(), timeout_secs: timeout };
    let client = AdapterClient::start(spec)?;
    println!("hello: {}", serde_json::to_string(client.capabilities())?);
    let cfg = CampaignConfig { master_seed: seed, ..CampaignConfig::default() };
    let (mut agree, mut skipped) = (0, 0);
    let mut disagreements = BTreeMap::new();
    for i in 0..cases {
        let plan = PlannedCase::new(&cfg, i, ConstraintLevel::Constrained);
        let (g, t) = plan.generate(&cfg);
        let m = optfuzz::mini_ir::lower(&g, &t)?;
        let m = optfuzz::mini_ir::infer_types(&m)?;
        if !client.supports(&m) {
            skipped += 1;
            continue;
        }
        let inputs = draw_inputs(&m, &mut ChaCha8Rng::seed_from_u64(plan.case_seed));
        let expected = run_backend(&m, &inputs, Backend::Tree)?;
        let verdict = match client.run_raw(&print_module(&m), &[], &inputs) {
            Ok(AdapterReply::Outputs(got)) => {
                if got.len() == expected.len() && got.iter().zip(&expected).all(|(a, b)| a.agrees(b, 1e-6)) {
                    None
                } else {
                    Some("outputs differ".to_string())
                }
            }
            Ok(AdapterReply::Unsupported) => {
                skipped += 1;
                continue;
            }
            Ok(AdapterReply::Error(e)) => Some(format!("error: {e}")),
            Err(e) => Some(format!("{e}")),
        };
        match verdict {
            None => agree += 1,
            Some(msg) => {
                disagreements.insert(i, msg);
            }
        }
    }
    println!("{agree} agree, {} disagree, {skipped} skipped", disagreements.len());
    for (i, msg) in &disagreements {
        println!("  case {i}: {msg}");
    }
    Ok(if disagreements.is_empty() { EXIT_CLEAN } else { EXIT_BUGS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Fuzz(args) => fuzz(args),
        Command::Replay { case } => replay(case),
        Command::Shrink { case, out } => shrink_case(case, out.as_deref()),
        Command::Sweep { campaign, grid_p0, grid_alpha, out_dir } => run_sweep(campaign, grid_p0, grid_alpha, out_dir),
        Command::ActiveNodes { graph, bugs } => active_nodes(graph, bugs),
        Command::AdapterCheck { command, cases, seed, timeout } => adapter_check(command, *cases, *seed, *timeout),
    };
    match code {
        Ok(c) => ExitCode::from(c as u8),
        Err(e) => {
            eprintln!("optfuzz: {e:#}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
