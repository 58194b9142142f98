//! Command-line front end for the uvgreedy imaging library.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uvgreedy::error::ErrorKind;
use uvgreedy::greedy::SelectionMode;
use uvgreedy::io;
use uvgreedy::pipeline::{ExperimentConfig, Fixture};
use uvgreedy::Error;

#[derive(Parser)]
#[command(
    name = "uvgreedy",
    version,
    about = "Greedy subsampling, kernel interpolation and Landweber inversion for visibility data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration file (TOML). Overrides --fixture.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Built-in experiment: single, double or loop.
    #[arg(long, default_value = "single")]
    fixture: String,

    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the greedy subset size.
    #[arg(long)]
    n_select: Option<usize>,

    /// Override the noise level.
    #[arg(long)]
    noise: Option<f64>,

    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,

    /// Print progress details.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl ConfigArgs {
    fn load(&self) -> Result<(ExperimentConfig, String), Error> {
        let (mut cfg, title) = match &self.config {
            Some(path) => {
                let cfg = io::read_config_toml(path)?;
                let title = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "experiment".to_string());
                (cfg, title)
            }
            None => {
                let fixture: Fixture = self.fixture.parse()?;
                let mut title = fixture.name().to_string();
                if let Some(first) = title.get_mut(0..1) {
                    first.make_ascii_uppercase();
                }
                (fixture.config(), title)
            }
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(noise) = self.noise {
            cfg.noise_level = noise;
        }
        if let Some(n) = self.n_select {
            cfg.greedy.n_select = n;
        }
        if cfg.greedy.n_select > cfg.n_samples {
            eprintln!(
                "warning: n_select {} exceeds the {} available samples; clamping",
                cfg.greedy.n_select, cfg.n_samples
            );
        }
        cfg.validate()?;
        if self.verbose > 0 {
            eprintln!(
                "config: {} samples, r_max {}, noise {}, seed {}, subset {}",
                cfg.n_samples,
                cfg.r_max,
                cfg.noise_level,
                cfg.seed,
                cfg.effective_n_select()
            );
        }
        Ok((cfg, title))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render the ground truth and write it with simulated visibilities.
    Simulate(ConfigArgs),

    /// Run greedy selection and write the selection document.
    Select {
        #[command(flatten)]
        args: ConfigArgs,

        /// Selection strategy.
        #[arg(long, default_value = "error-based", value_parser = parse_mode)]
        mode: SelectionMode,

        /// Visibility CSV to select from (defaults to simulating from the
        /// configuration).
        #[arg(long)]
        vis: Option<PathBuf>,
    },

    /// Reconstruct an image from all points or from a stored selection.
    Reconstruct {
        #[command(flatten)]
        args: ConfigArgs,

        /// Selection JSON restricting the samples (defaults to all points).
        #[arg(long)]
        selection: Option<PathBuf>,

        /// Visibility CSV to reconstruct from (defaults to simulating).
        #[arg(long)]
        vis: Option<PathBuf>,
    },

    /// Run all three sampling strategies and emit the full artifact set.
    Experiment(ConfigArgs),

    /// Evaluate data-fitting metrics of an image against a visibility file.
    Metrics {
        /// Visibility CSV.
        #[arg(long)]
        vis: PathBuf,

        /// Image file (.csv or .pgm).
        #[arg(long)]
        image: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<SelectionMode, String> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "error-based" => Ok(SelectionMode::ErrorBased),
        "residual-based" => Ok(SelectionMode::ResidualBased),
        other => Err(format!("unknown mode '{other}' (expected error-based or residual-based)")),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => {
            let (cfg, _) = args.load()?;
            let artifacts = io::cmd_simulate(&cfg, &args.out)?;
            println!("wrote {}", artifacts.truth_csv.display());
            println!("wrote {}", artifacts.truth_pgm.display());
            println!(
                "wrote {} ({} samples)",
                artifacts.visibilities.display(),
                artifacts.samples.len()
            );
        }
        Command::Select { args, mode, vis } => {
            let (cfg, _) = args.load()?;
            let samples = vis.map(|p| io::read_visibilities_csv(&p)).transpose()?;
            let (result, path) = io::cmd_select(&cfg, samples, mode, &args.out)?;
            println!("selected {} samples -> {}", result.order.len(), path.display());
            for (step, (idx, value)) in
                result.order.iter().zip(&result.indicator_trace).enumerate()
            {
                println!("step {step:4}  index {idx:5}  indicator {value:.6e}");
            }
        }
        Command::Reconstruct { args, selection, vis } => {
            let (cfg, _) = args.load()?;
            let samples = vis.map(|p| io::read_visibilities_csv(&p)).transpose()?;
            let selection = selection.map(|p| io::read_selection_json(&p)).transpose()?;
            let report = io::cmd_reconstruct(&cfg, samples, selection.as_ref(), &args.out)?;
            println!(
                "{}: n={} iterations={} chi2={:.4} chi2_sq={:.4} rmse={:.4} mre={:.4}",
                report.sampling_mode.id(),
                report.n_used,
                report.iterations_used,
                report.metrics.chi2,
                report.metrics.chi2_sq,
                report.metrics.rmse,
                report.metrics.mre
            );
            for artifact in &report.artifacts {
                println!("wrote {artifact}");
            }
        }
        Command::Experiment(args) => {
            let (cfg, title) = args.load()?;
            let artifacts = io::cmd_experiment(&cfg, &title, &args.out)?;
            print!("{}", std::fs::read_to_string(&artifacts.table_txt)?);
            for file in &artifacts.files {
                println!("wrote {}", file.display());
            }
        }
        Command::Metrics { vis, image } => {
            let (metrics, n) = io::cmd_metrics(&vis, &image)?;
            println!(
                "n={n} chi2={:.6} chi2_sq={:.6} rmse={:.6} mre={:.6}",
                metrics.chi2, metrics.chi2_sq, metrics.rmse, metrics.mre
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            match err.kind() {
                ErrorKind::Validation => ExitCode::from(2),
                ErrorKind::Numerical => ExitCode::from(3),
                ErrorKind::Io => ExitCode::from(4),
            }
        }
    }
}
