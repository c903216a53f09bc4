use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;
use symmod_cli::commands::{self, DEFAULT_SPLIT_HZ};
use symmod_cli::config::parse_json;
use symmod_cli::{pipeline, CliError, Overrides, SystemConfig, Variation};
use symmod_core::modal::Classification;
use symmod_core::simkit::Scenario;

#[derive(Debug, Parser)]
#[command(
    name = "symmod",
    version,
    about = "Symmetry-aware modal analysis of grouped inverter systems"
)]
struct Cli {
    /// System configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Absolute eigenvalue clustering distance (lower bound).
    #[arg(long, global = true)]
    cluster_tol: Option<f64>,
    /// Relative deviation up to which subsystems share a group.
    #[arg(long, global = true)]
    tol_quasi: Option<f64>,
    /// Grid participation threshold of the mode classification.
    #[arg(long, global = true)]
    tau_ext: Option<f64>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, env = "SYMMOD_LOG", default_value = "warn")]
    log_level: LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalues, participation factors, clusters and pole map.
    Analyze,
    /// Grouping report only.
    Classify,
    /// Relative change of every mode under parameter changes.
    Invariance {
        /// `<element>.<param>=<±x%|value>`, repeatable.
        #[arg(long, required = true)]
        vary: Vec<Variation>,
    },
    /// Time-domain run with an FFT cross-check against the modes.
    Simulate {
        /// Scenario (JSON).
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Poles of the string topology against its parallel equivalent.
    StringVsParallel {
        /// Collector impedances in p.u.; default 0 and 1e-4 .. 1e-2 in five log steps.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<f64>,
        /// Frequency separating low- from mid/high-frequency poles.
        #[arg(long, default_value_t = DEFAULT_SPLIT_HZ)]
        split_hz: f64,
    },
}

fn summary(an: &pipeline::Analysis) {
    println!(
        "{} states, {} ({} group(s)), cluster_tol {:.3e}, tau_ext {:.1e}",
        an.modal.n(),
        an.grouping.symmetry().as_str(),
        an.grouping.partition.n_groups(),
        an.cluster_tol,
        an.tau_ext
    );
    let count = |f: fn(&Classification) -> bool| {
        an.clusters.iter().filter(|c| f(&c.classification)).count()
    };
    println!(
        "{} clusters: {} inner-group, {} group-grid, {} unclassified",
        an.clusters.len(),
        count(|c| matches!(c, Classification::InnerGroup(_))),
        count(|c| matches!(c, Classification::GroupGrid)),
        count(|c| matches!(c, Classification::Unclassified))
    );
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = SystemConfig::load(path)?;
    let ov = Overrides {
        cluster_tol: cli.cluster_tol,
        tol_quasi: cli.tol_quasi,
        tau_ext: cli.tau_ext,
    };
    let out = cli.out.as_path();
    match &cli.command {
        Command::Analyze => {
            let an = pipeline::analyze(&cfg, &ov)?;
            commands::write_analysis(&an, out, &title(path))?;
            summary(&an);
        }
        Command::Classify => {
            let g = pipeline::group(&cfg, &ov)?;
            commands::write_classify(&g, out)?;
            println!("{}", g.symmetry().as_str());
            for gr in &g.partition.groups {
                println!(
                    "{}: {:?} {:?} deviation {:.3e}",
                    gr.id, gr.member_ids, gr.class, gr.deviation
                );
            }
        }
        Command::Invariance { vary } => {
            let o = commands::run_invariance(&cfg, &ov, vary)?;
            commands::write_invariance(&o, out)?;
            for c in o.tracked(|_| true) {
                println!(
                    "{:>4} {:<20} max RC {:.4}%",
                    c,
                    o.before.clusters[c].classification.label(),
                    o.max_rc(c).unwrap_or(0.0)
                );
            }
        }
        Command::Simulate { scenario } => {
            let text = std::fs::read_to_string(scenario).map_err(|e| CliError::Io {
                path: scenario.display().to_string(),
                source: e,
            })?;
            let sc: Scenario = parse_json(&text)?;
            let o = commands::run_simulation(&cfg, &ov, &sc)?;
            commands::write_simulation(&o, &sc, out)?;
            for r in &o.crosscheck {
                println!(
                    "{} #{}: {:.3} Hz vs {:.3} Hz ({}){}",
                    r.probe,
                    r.rank,
                    r.fft_hz,
                    r.predicted_hz,
                    r.classification.label(),
                    if r.within_bin() {
                        ""
                    } else {
                        " outside one bin"
                    }
                );
            }
        }
        Command::StringVsParallel { sweep, split_hz } => {
            let sweep = if sweep.is_empty() {
                commands::default_sweep()
            } else {
                sweep.clone()
            };
            let points = commands::run_string_vs_parallel(&cfg, &sweep)?;
            commands::write_string_vs_parallel(&points, *split_hz, out)?;
            for p in &points {
                println!(
                    "z = {:.3e}: max pole distance {:.3e}",
                    p.z,
                    p.max_distance()
                );
            }
        }
    }
    Ok(())
}

fn title(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
