// SPDX-License-Identifier: Apache-2.0
//! `rtlforge` command line.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rtlforge::agents::{Backend, MockBackend, RemoteConfig};
use rtlforge::kmap::solve_spec;
use rtlforge::knowledge::{index_reference_library, save_index, IndexOptions};
use rtlforge::nn::TensorFile;
use rtlforge::orchestrator::{
    read_transitions, world_model_train, world_transition, PolicyNetwork, PpoHyperparameters, PpoTrainer,
    WorldTrainOptions,
};
use rtlforge::pipeline::{
    generate_module, module_name_of, run_benchmark, BackendConfig, JsonlSink, NullSink, Outcome, PipelineConfig,
    Planner, Resources, ThoughtSink,
};
use rtlforge::spec::Spec;
use rtlforge::validation::LintMode;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rtlforge", version, about = "Validated RTL generation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Global {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    planner: Option<PlannerArg>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Thought stream destination (JSON lines).
    #[arg(long, global = true)]
    trace_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    Ppo,
    Mpc,
    Heuristic,
}

/// `remote` reads RTLFORGE_LLM_URL and RTLFORGE_LLM_KEY.
#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one module from a spec file.
    Generate {
        spec: PathBuf,
        #[arg(long)]
        testbench: Option<PathBuf>,
        /// Scripted responses (JSON array of strings) for the scripted backend.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Write the Verilog here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        episode: u64,
    },
    /// Run every problem in a directory.
    Benchmark {
        problems: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Exit non-zero when pass@1 falls below this.
        #[arg(long)]
        min_pass: Option<f64>,
    },
    /// PPO updates from logged transitions.
    TrainPolicy {
        /// JSON-lines transition logs.
        #[arg(required = true)]
        transitions: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        /// Start from this checkpoint instead of zeros.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        /// Also fit the planner's dynamics model and save it here.
        #[arg(long)]
        world_model: Option<PathBuf>,
    },
    /// Lint and index a directory of reference Verilog.
    IndexLibrary {
        dir: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        max_lines: usize,
    },
    /// Minimize the K-map or truth table in a spec and print Verilog.
    SolveKmap {
        spec: PathBuf,
        #[arg(long)]
        module: Option<String>,
    },
    /// Lint, simulate and synthesize a source file.
    Validate {
        source: PathBuf,
        #[arg(long)]
        testbench: Option<PathBuf>,
        #[arg(long)]
        top: Option<String>,
        /// Allow SystemVerilog constructs.
        #[arg(long)]
        sv: bool,
    },
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut c = match &g.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = g.planner {
        c.planner = match p {
            PlannerArg::Ppo => Planner::Ppo,
            PlannerArg::Mpc => Planner::Mpc,
            PlannerArg::Heuristic => Planner::Heuristic,
        };
    }
    match g.backend {
        Some(BackendArg::Remote) if !matches!(c.backend, BackendConfig::Remote(_)) => {
            c.backend = BackendConfig::Remote(RemoteConfig::from_env()?);
        }
        Some(BackendArg::Scripted) => c.backend = BackendConfig::Scripted,
        _ => {}
    }
    if let Some(s) = g.seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn write(p: &Path, text: &str) -> Result<()> {
    std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Command::Generate { spec, testbench, script, out, record, episode } => {
            let res = Resources::load(load_config(&cli.global)?)?;
            let spec = Spec::load(&spec)?;
            let tb = testbench.as_deref().map(read).transpose()?;
            let scripted;
            let remote = res.remote_backend();
            let backend: &dyn Backend = match &remote {
                Some(r) => r,
                None => {
                    let lines: Vec<String> = match &script {
                        Some(p) => serde_json::from_str(&read(p)?).context("script must be a JSON array of strings")?,
                        None => Vec::new(),
                    };
                    scripted = MockBackend::new(lines);
                    &scripted
                }
            };
            let mut file_sink;
            let mut null = NullSink;
            let sink: &mut dyn ThoughtSink = match &cli.global.trace_out {
                Some(p) => {
                    file_sink = JsonlSink::create(p).with_context(|| format!("creating {}", p.display()))?;
                    &mut file_sink
                }
                None => &mut null,
            };
            let run = generate_module(&res, &spec, backend, tb.as_deref(), episode, sink)?;
            match &out {
                Some(p) => write(p, &run.source)?,
                None => print!("{}", run.source),
            }
            if let Some(p) = &record {
                write(p, &serde_json::to_string_pretty(&run.record)?)?;
            }
            let r = &run.record;
            eprintln!(
                "{:?}: {} iteration(s), {} backend call(s), {} tokens",
                r.outcome,
                r.iterations_used,
                r.backend_calls,
                r.tokens_in + r.tokens_out
            );
            Ok(if r.outcome == Outcome::Solved { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Benchmark { problems, out, min_pass } => {
            let res = Resources::load(load_config(&cli.global)?)?;
            let b = run_benchmark(&problems, &res, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&b.summary)?);
            let s = &b.summary;
            eprintln!("pass@1 {:.3} ({}/{})", s.pass_at_1, s.solved, s.total);
            Ok(match min_pass {
                Some(m) if s.pass_at_1 < m => ExitCode::from(1),
                _ => ExitCode::SUCCESS,
            })
        }
        Command::TrainPolicy { transitions, out, init, rounds, world_model } => {
            let cfg = load_config(&cli.global)?;
            let mut data = Vec::new();
            for p in &transitions {
                data.extend(read_transitions(p).with_context(|| format!("reading {}", p.display()))?);
            }
            if data.is_empty() {
                bail!("no transitions in the given logs");
            }
            let net = match init.as_ref().or(cfg.policy_checkpoint.as_ref()) {
                Some(p) => PolicyNetwork::from_tensor_file(&TensorFile::load(p)?)?,
                None => PolicyNetwork::zeros(),
            };
            let hyper = PpoHyperparameters { seed: cfg.seed, ..PpoHyperparameters::default() };
            let mut trainer = PpoTrainer::new(net, hyper)?;
            for round in 0..rounds {
                let stats = trainer.update(&data)?;
                eprintln!(
                    "round {}: {} samples, loss {:.4} -> {:.4}",
                    round + 1,
                    stats.samples,
                    stats.initial.total,
                    stats.last.total
                );
            }
            trainer.net.to_tensor_file().save(&out)?;
            if let Some(p) = &world_model {
                let wt: Vec<_> = data.iter().map(world_transition).collect();
                let opts = WorldTrainOptions { seed: cfg.seed, ..WorldTrainOptions::default() };
                let (m, loss) = world_model_train(&wt, &opts)?;
                m.to_tensor_file().save(p)?;
                eprintln!("world model loss {loss:.5}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::IndexLibrary { dir, out, max_lines } => {
            let res = Resources::load(load_config(&cli.global)?)?;
            let lint = |src: &str| res.validator.lint(src, &[], LintMode::SystemVerilog).is_ok_and(|o| o.passed);
            let outcome = index_reference_library(&dir, &IndexOptions { max_lines }, &lint)?;
            save_index(&outcome.modules, &out)?;
            for r in &outcome.rejected {
                eprintln!("rejected {}: {}", r.path, r.reason);
            }
            eprintln!("indexed {} module(s), rejected {}", outcome.modules.len(), outcome.rejected.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::SolveKmap { spec, module } => {
            let spec = Spec::load(&spec)?;
            let name = module.unwrap_or_else(|| module_name_of(&spec));
            print!("{}", solve_spec(&spec, &name)?.source);
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { source, testbench, top, sv } => {
            let res = Resources::load(load_config(&cli.global)?)?;
            if !res.real_tools {
                eprintln!("note: EDA tools not found, using the structural checker");
            }
            let src = read(&source)?;
            let tb = testbench.as_deref().map(read).transpose()?;
            let mode = if sv { LintMode::SystemVerilog } else { LintMode::Strict2001 };
            let report = res.validator.validate(&src, &[], tb.as_deref(), top.as_deref(), mode)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            let want = if tb.is_some() { report.sim_passed() } else { report.stage_reached.rank() == 3 };
            Ok(if want { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
