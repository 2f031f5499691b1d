use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evomg_cli::{cmd_benchmark_reference, cmd_evaluate, cmd_export_plots, cmd_search};

/// Evolutionary search for multigrid preconditioners of the 2D
/// indefinite Helmholtz equation, plus benchmarking and export tooling.
#[derive(Parser)]
#[command(name = "evomg", version, about)]
struct Cli {
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evaluation worker threads (0 = all cores). Never changes results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolutionary search described by a key=value config file.
    Search {
        #[arg(long)]
        config: PathBuf,
        /// Directory receiving front.csv, snapshots.jsonl, genotypes.txt
        /// and manifest.json.
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
    },
    /// Benchmark the 15 tuned reference cycles at the given wavenumbers.
    BenchmarkReference {
        /// Comma-separated wavenumbers (on the 0.625 * 2^m ladder).
        #[arg(long, value_delimiter = ',', default_value = "160")]
        ks: Vec<f64>,
        /// Re-tune each cycle's relaxation factor over the component menu.
        #[arg(long)]
        sweep_relaxation: bool,
        /// Wavenumber at which the sweep is performed.
        #[arg(long, default_value_t = 160.0)]
        sweep_k: f64,
        /// Report measured milliseconds per iteration (non-reproducible)
        /// in addition to work units.
        #[arg(long)]
        wall_clock: bool,
        /// Timed solve repetitions in wall-clock mode.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
    },
    /// Evaluate serialized genotypes (one per line) across wavenumbers.
    Evaluate {
        #[arg(long)]
        genotype: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "160,320")]
        ks: Vec<f64>,
        #[arg(long)]
        wall_clock: bool,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
    },
    /// Export plot-ready CSVs from one or more run manifests.
    ExportPlots {
        #[arg(long, num_args = 1.., required = true)]
        manifest: Vec<PathBuf>,
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> evomg_core::Result<()> {
    match cli.command {
        Command::Search { config, out_dir } => {
            let manifest = cmd_search(&config, cli.seed, cli.workers, &out_dir)?;
            println!("wrote {}", manifest.display());
        }
        Command::BenchmarkReference {
            ks,
            sweep_relaxation,
            sweep_k,
            wall_clock,
            repeats,
            out_dir,
        } => {
            if wall_clock {
                eprintln!("note: wall-clock timings are machine-dependent and not reproducible");
            }
            let csv = cmd_benchmark_reference(
                &ks,
                sweep_relaxation,
                sweep_k,
                wall_clock,
                repeats,
                Some(&out_dir),
            )?;
            print!("{csv}");
        }
        Command::Evaluate {
            genotype,
            ks,
            wall_clock,
            repeats,
            out_dir,
        } => {
            if wall_clock {
                eprintln!("note: wall-clock timings are machine-dependent and not reproducible");
            }
            let table = cmd_evaluate(&genotype, &ks, wall_clock, repeats, Some(&out_dir))?;
            print!("{}", table.to_csv());
        }
        Command::ExportPlots { manifest, out_dir } => {
            cmd_export_plots(&manifest, &out_dir)?;
            println!(
                "wrote {} and {}",
                out_dir.join("scatter.csv").display(),
                out_dir.join("cost_per_point.csv").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
