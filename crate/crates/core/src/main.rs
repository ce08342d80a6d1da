use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nest_core::analysis::{self, AnalyzeOptions, ChickReference};
use nest_core::harness::{self, HarnessError, PopulationOptions, RunConfig};
use nest_core::intrinsic::Algorithm;
use nest_core::render::{render_observation, Camera, DisplayContent, TextureCache};
use nest_core::world::{stimulus_azimuth_with, Pose};

#[derive(Parser)]
#[command(
    name = "nest",
    version,
    about = "Rear and test pixels-to-actions agents in a virtual chick chamber"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rear one agent and write its run directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_algo)]
        algo: Option<Algorithm>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        condition: Option<u8>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Frozen-weight test phase for a trained checkpoint.
    Test {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Take the most probable action instead of sampling.
        #[arg(long)]
        greedy: bool,
    },
    /// Train and test agents × algorithms × rearing conditions.
    Population {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Agents per (algorithm, condition).
        #[arg(long, default_value_t = 26)]
        agents: usize,
        #[arg(long, value_delimiter = ',', value_parser = parse_algo)]
        algos: Option<Vec<Algorithm>>,
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=4))]
        conditions: Option<Vec<u8>>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        greedy: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare tested runs with a chick reference and write the report.
    Analyze {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render the agent's view at one pose as a binary PPM.
    Frame {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        #[arg(long, default_value_t = 0.0)]
        heading: f64,
        /// Stimulus time step (rocking phase).
        #[arg(long, default_value_t = 0)]
        step: u64,
        /// Content of the x = L wall: blank, A or B.
        #[arg(long, default_value = "blank")]
        xl: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse()
        .map_err(|e: nest_core::intrinsic::IntrinsicError| e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, HarnessError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cmd: Command) -> Result<(), (i32, String)> {
    let h = |e: HarnessError| (e.exit_code(), e.to_string());
    match cmd {
        Command::Train {
            config,
            seed,
            algo,
            condition,
            out,
            quiet,
        } => {
            let mut cfg = load_config(config.as_deref()).map_err(h)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(a) = algo {
                cfg.intrinsic.algorithm = a;
            }
            if let Some(c) = condition {
                cfg.condition = c;
            }
            cfg.output_dir = Some(out.clone());
            let total = cfg.episodes;
            let done = harness::run_training_with(&cfg, &out, |e| {
                if !quiet {
                    eprintln!(
                        "episode {}/{total}  step {}  reward mean {:.4}",
                        e.episode + 1,
                        e.env_step_end,
                        e.reward_mean
                    );
                }
            })
            .map_err(h)?;
            println!(
                "trained {} steps, {} updates -> {}",
                done.manifest.env_steps,
                done.manifest.updates,
                done.checkpoint.display()
            );
        }
        Command::Test {
            checkpoint,
            out,
            greedy,
        } => {
            let t = harness::run_test(&checkpoint, &out, greedy).map_err(h)?;
            let ha = t
                .summary
                .heading_alignment_deg
                .map_or("n/a".to_string(), |d| format!("{d:.1}°"));
            println!(
                "{} trials -> {}  heading alignment {ha}",
                t.records.len(),
                out.display()
            );
        }
        Command::Population {
            config,
            agents,
            algos,
            conditions,
            jobs,
            greedy,
            out,
        } => {
            let cfg = load_config(config.as_deref()).map_err(h)?;
            let opts = PopulationOptions {
                agents,
                algorithms: algos.unwrap_or_else(|| Algorithm::ALL.to_vec()),
                conditions: conditions.unwrap_or_else(|| vec![1, 2, 3, 4]),
                greedy,
                jobs,
            };
            let results = harness::run_population(&cfg, &opts, &out).map_err(h)?;
            let failed: Vec<_> = results.iter().filter(|r| r.error.is_some()).collect();
            println!("{} jobs, {} failed -> {}", results.len(), failed.len(), out.display());
            if let Some(f) = failed.first() {
                return Err((
                    f.exit_code,
                    format!("{}: {}", f.job.dir, f.error.as_deref().unwrap_or("")),
                ));
            }
        }
        Command::Analyze {
            runs,
            reference,
            out,
            perplexity,
            iterations,
            seed,
        } => {
            let a = |e: analysis::AnalysisError| (e.exit_code(), e.to_string());
            let r = ChickReference::load(&reference).map_err(a)?;
            let opts = AnalyzeOptions {
                perplexity,
                iterations,
                seed,
            };
            let report = analysis::emit_report(&runs, &r, &out, &opts).map_err(a)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for c in &report.comparison {
                println!(
                    "{:<12} {:<12} machine {:6.2}  chick {:6.2} ± {:5.2}  gap {:6.2}  {}",
                    c.group,
                    format!("{:?}", c.metric).to_lowercase(),
                    c.machine_mean,
                    c.chick_center,
                    c.chick_halfwidth,
                    c.gap,
                    if c.inside_band { "inside" } else { "outside" }
                );
            }
            println!(
                "predictively adequate: {}  ({} agents, {} absent) -> {}",
                report.predictively_adequate,
                report.agents.len(),
                report.absent_runs.len(),
                out.display()
            );
        }
        Command::Frame {
            config,
            x,
            y,
            heading,
            step,
            xl,
            out,
        } => {
            let cfg = load_config(config.as_deref()).map_err(h)?;
            let cond = cfg.rearing().map_err(h)?;
            let pose = Pose::new(x, y, heading);
            if !pose.within_margins(&cfg.chamber, &cfg.body) {
                return Err((2, format!("pose ({x}, {y}) is outside the chamber margins")));
            }
            let xl: DisplayContent = xl
                .parse()
                .map_err(|e: nest_core::render::RenderError| (1, e.to_string()))?;
            let range = cond.familiar_range();
            let az = stimulus_azimuth_with(step, &range, cfg.stimulus_period_steps, cfg.waveform);
            let mut c0 = TextureCache::new();
            let mut c1 = TextureCache::new();
            let t0 = c0.get(DisplayContent::Object(cond.object_id), az, range.elevation);
            let t1 = c1.get(xl, az, range.elevation);
            let cam = Camera::from_pose(&pose, cfg.body.camera_height, cfg.camera.fov_deg, cfg.camera.near);
            let frame = render_observation(&cfg.chamber, t0, t1, &cam);
            write_bytes(&out, &frame.to_ppm()).map_err(h)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
