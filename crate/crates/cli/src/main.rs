use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpuzzle_cli::commands::{cmd_batch, cmd_eval, cmd_generate, cmd_render, cmd_solve, EVAL_FILE};
use cpuzzle_cli::config::{GenerateConfig, Layout, RenderConfig, MAX_SEED};
use cpuzzle_cli::error::{CliError, EXIT_NON_CONVERGENCE, EXIT_OK, EXIT_VALIDATION};
use cpuzzle_core::corpus::SynthSpec;
use cpuzzle_core::cycles::{DEFAULT_ALPHA, DEFAULT_MAX_MATINGS, DEFAULT_TAU};
use cpuzzle_core::evaluation::AlignMode;
use cpuzzle_core::pictorial::{
    ExtrapolatorContract, ExtrapolatorMode, DEFAULT_BAND_WIDTH, DEFAULT_GRID_WIDTH, DEFAULT_THRESHOLD,
};
use cpuzzle_core::pipeline::SolveConfig;
use cpuzzle_core::spring::SimConfig;

#[derive(Parser)]
#[command(name = "cpuzzle", version, about = "Generate, solve and evaluate convex partition jigsaw puzzles")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a corpus of puzzle bundles.
    Generate {
        /// Output directory for the bundles.
        #[arg(long)]
        out: PathBuf,
        /// Source image; a synthetic image per puzzle when omitted.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = 25)]
        count: usize,
        #[arg(long, default_value_t = 6)]
        min_pieces: usize,
        #[arg(long, default_value_t = 40)]
        max_pieces: usize,
        /// Noise levels as fractions of the puzzle diameter.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.001, 0.0025])]
        xi: Vec<f64>,
        #[arg(long, default_value_t = 0.4)]
        merge_probability: f64,
        #[arg(long, default_value_t = 480)]
        width: u32,
        #[arg(long, default_value_t = 360)]
        height: u32,
        #[arg(long, default_value_t = 0, value_parser = seed_parser())]
        seed: u64,
    },
    /// Solve one bundle.
    Solve {
        bundle: PathBuf,
        /// Output directory; `<bundle>/solution` when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Score a solution against the bundle's ground truth.
    Eval {
        bundle: PathBuf,
        solution: PathBuf,
        /// Report file; `eval.toml` beside the solution when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = AlignMode::Anchor)]
        align: AlignMode,
    },
    /// Render pieces at true, solved or shuffled poses.
    Render {
        bundle: PathBuf,
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long, default_value_t = Layout::Gt)]
        layout: Layout,
        #[arg(long)]
        no_outlines: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve and evaluate every bundle of a corpus and print the per-noise
    /// summary table.
    Batch {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = AlignMode::Anchor)]
        align: AlignMode,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Args)]
struct SolverArgs {
    /// Assumed noise level; the bundle's own level when omitted.
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID_WIDTH)]
    grid_width: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pictorial_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_MATINGS)]
    max_matings: usize,
    /// Seed of the simulation's initial poses.
    #[arg(long, default_value_t = 0, value_parser = seed_parser())]
    seed: u64,
    /// `baseline` or `dir:<path>`.
    #[arg(long, default_value_t = ExtrapolatorMode::Baseline)]
    extrapolator: ExtrapolatorMode,
    #[arg(long, default_value_t = DEFAULT_BAND_WIDTH)]
    band_width: u32,
}

fn seed_parser() -> clap::builder::RangedU64ValueParser<u64> {
    clap::value_parser!(u64).range(0..=MAX_SEED)
}

impl SolverArgs {
    fn config(&self) -> SolveConfig {
        let defaults = SolveConfig::default();
        SolveConfig {
            grid_width: self.grid_width,
            tau: self.tau,
            alpha: self.alpha,
            pictorial_threshold: self.pictorial_threshold,
            max_matings: self.max_matings,
            xi: self.xi,
            extrapolator: ExtrapolatorContract {
                band_width_px: self.band_width,
                mode: self.extrapolator.clone(),
            },
            sim: SimConfig {
                rng_seed: self.seed,
                ..defaults.sim
            },
            cycle_sim: SimConfig {
                rng_seed: self.seed,
                ..defaults.cycle_sim
            },
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Generate {
            out,
            image,
            count,
            min_pieces,
            max_pieces,
            xi,
            merge_probability,
            width,
            height,
            seed,
        } => {
            let config = GenerateConfig {
                image,
                synthetic_width: width,
                synthetic_height: height,
                count,
                seed,
                synth: SynthSpec {
                    min_pieces,
                    max_pieces,
                    merge_probability,
                    xis: xi,
                    ..SynthSpec::default()
                },
            };
            for dir in cmd_generate(&out, &config)? {
                println!("{}", dir.display());
            }
            Ok(EXIT_OK)
        }
        Command::Solve { bundle, out, solver } => {
            let out = out.unwrap_or_else(|| bundle.join("solution"));
            let r = cmd_solve(&bundle, &out, &solver.config())?;
            let d = &r.diagnostics;
            println!(
                "links {} -> {} -> {}, cycles {} ({} kept), aggregates {}, matings {}, energy {:.6e}",
                d.links_initial,
                d.links_geometric,
                d.links_pictorial,
                d.cycles_found,
                d.cycles_kept,
                d.aggregates,
                d.final_matings,
                d.energy
            );
            println!("{}", r.solution_path.display());
            if d.converged {
                Ok(EXIT_OK)
            } else {
                eprintln!("warning: {}", CliError::NonConvergence(bundle.display().to_string()));
                Ok(EXIT_NON_CONVERGENCE)
            }
        }
        Command::Eval {
            bundle,
            solution,
            out,
            align,
        } => {
            let out = out.unwrap_or_else(|| {
                solution
                    .parent()
                    .map_or_else(|| PathBuf::from(EVAL_FILE), |d| d.join(EVAL_FILE))
            });
            let r = cmd_eval(&bundle, &solution, align, &out)?;
            println!(
                "precision {:.4} recall {:.4} f1 {:.4} q_pos {:.4}",
                r.precision, r.recall, r.f1, r.q_pos
            );
            Ok(EXIT_OK)
        }
        Command::Render {
            bundle,
            solution,
            layout,
            no_outlines,
            out,
        } => {
            let config = RenderConfig {
                layout,
                solution,
                outlines: !no_outlines,
            };
            cmd_render(&bundle, &config, &out)?;
            println!("{}", out.display());
            Ok(EXIT_OK)
        }
        Command::Batch {
            corpus,
            out,
            align,
            solver,
        } => {
            let r = cmd_batch(&corpus, &out, &solver.config(), align)?;
            print!("{}", r.table);
            let stalled: Vec<String> = r
                .entries
                .iter()
                .filter(|e| !e.diagnostics.converged)
                .map(|e| e.bundle.display().to_string())
                .collect();
            if stalled.is_empty() {
                Ok(EXIT_OK)
            } else {
                eprintln!("warning: {}", CliError::NonConvergence(stalled.join(", ")));
                Ok(EXIT_NON_CONVERGENCE)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
