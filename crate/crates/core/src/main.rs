use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rsu_autolabel::io::{read_labels, write_labels, RunConfig, Source};
use rsu_autolabel::stages::{
    discover_stage, evaluate_labels, flow_stats, refine_labels, run_pipeline, simulate_to_dir, track_labels,
    write_json, Sequence,
};
use rsu_autolabel::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_CONFIG: u8 = 4;
const EXIT_RUNTIME: u8 = 5;

/// Geometry-only auto-labeling of vehicles in roadside LiDAR recordings.
#[derive(Parser, Debug)]
#[command(name = "rsu-autolabel", version, after_help = EXIT_HELP)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

const EXIT_HELP: &str = "Exit status: 0 success, 2 usage, 3 unparsable input, 4 invalid configuration, 5 runtime failure.";

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for the simulator and randomised stages.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (outputs do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a simulated scene into a dataset directory.
    Simulate {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Built-in scene; defaults to the config's scenario.
        #[arg(long)]
        preset: Option<String>,
        /// Sequence id written into the manifest.
        #[arg(long)]
        sequence: Option<String>,
    },
    /// Scene flow statistics between two frames.
    Flow {
        #[arg(long)]
        manifest: PathBuf,
        /// Source frame position.
        #[arg(long)]
        from: usize,
        /// Target frame position.
        #[arg(long)]
        to: usize,
        /// Also write the statistics as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discover vehicles in every frame.
    Discover {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Link discovered boxes into tracklets.
    Track {
        #[arg(long)]
        manifest: PathBuf,
        /// Discovered label file.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine tracklets by aggregating their instances.
    Refine {
        #[arg(long)]
        manifest: PathBuf,
        /// Tracked label file.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a label file against ground truth.
    Eval {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate or load a sequence, then discover, track, refine and evaluate.
    Pipeline {
        /// Output directory for the dataset, label files and report.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Built-in scene, overriding the config's scenario.
        #[arg(long, conflicts_with = "manifest")]
        preset: Option<String>,
        /// Existing dataset, overriding the config's scenario.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Format(_) => EXIT_PARSE,
        Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn load_config(g: &Global) -> Result<RunConfig, Error> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    if g.threads.is_some() {
        cfg.threads = g.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn scenario_override(cfg: &mut RunConfig, preset_name: Option<String>, manifest: Option<PathBuf>) -> Result<(), Error> {
    if preset_name.is_some() || manifest.is_some() {
        cfg.scenario.preset = preset_name;
        cfg.scenario.simulation = None;
        cfg.scenario.manifest = manifest;
        cfg.validate()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = load_config(&cli.global)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let pc = cfg.pipeline();
    match cli.command {
        Command::Simulate { out, preset: p, sequence } => {
            scenario_override(&mut cfg, p, None)?;
            if let Some(s) = sequence {
                cfg.scenario.sequence = Some(s);
                cfg.validate()?;
            }
            match cfg.source()? {
                Some(Source::Simulate { sequence, config }) => {
                    let loaded = simulate_to_dir(&out, &sequence, &config)?;
                    println!(
                        "wrote {} frames of {sequence:?} to {}",
                        loaded.manifest.frames.len(),
                        out.display()
                    );
                }
                Some(Source::Manifest(_)) => {
                    return Err(Error::Config("simulate needs a preset or simulation scenario".into()))
                }
                None => return Err(Error::Config(format!("no scenario: pass --preset (one of {})", preset_names()))),
            }
        }
        Command::Flow { manifest, from, to, out } => {
            let seq = Sequence::load(&manifest)?;
            let stats = flow_stats(&seq, from, to, &pc.discovery.flow)?;
            println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialise"));
            if let Some(out) = out {
                write_json(out, &stats)?;
            }
        }
        Command::Discover { manifest, out } => {
            let seq = Sequence::load(&manifest)?;
            let labels = discover_stage(&seq, &pc)?;
            write_labels(&out, &labels)?;
            report_written(&out, labels.label_count());
        }
        Command::Track { manifest, labels, out } => {
            let seq = Sequence::load(&manifest)?;
            let tracked = track_labels(&seq, &read_labels(&labels)?, &pc)?;
            write_labels(&out, &tracked)?;
            report_written(&out, tracked.label_count());
        }
        Command::Refine { manifest, labels, out } => {
            let seq = Sequence::load(&manifest)?;
            let refined = refine_labels(&seq, &read_labels(&labels)?, &pc)?;
            write_labels(&out, &refined)?;
            report_written(&out, refined.label_count());
        }
        Command::Eval { labels, gt, out } => {
            let report = evaluate_labels(&read_labels(&labels)?, &read_labels(&gt)?, &pc.evaluation)?;
            if let Some(out) = out {
                write_json(out, &report)?;
            }
            println!("{report}");
        }
        Command::Pipeline { out, preset: p, manifest } => {
            scenario_override(&mut cfg, p, manifest)?;
            let Some(source) = cfg.source()? else {
                return Err(Error::Config(format!(
                    "no scenario: pass --preset (one of {}) or --manifest",
                    preset_names()
                )));
            };
            let outputs = run_pipeline(&cfg, &source, &out)?;
            match outputs.report {
                Some((path, report)) => {
                    println!("sequence {}", report.sequence);
                    for (stage, r) in [
                        ("discovered", &report.discovered),
                        ("tracked", &report.tracked),
                        ("refined", &report.refined),
                    ] {
                        println!("\n[{stage}]\n{r}");
                    }
                    println!("\nreport written to {}", path.display());
                }
                None => println!("no ground truth; labels written to {}", out.display()),
            }
        }
    }
    Ok(())
}

fn report_written(path: &Path, count: usize) {
    println!("wrote {count} labels to {}", path.display());
}

fn preset_names() -> String {
    rsu_autolabel::simulator::fixture_library()
        .iter()
        .map(|p| p.name)
        .collect::<Vec<_>>()
        .join(", ")
}
