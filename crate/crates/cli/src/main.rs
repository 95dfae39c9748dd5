//! `probenav`: batch tooling and the live session server.
//!
//! Exit codes: 0 ok, 2 validation failure, 3 budget failure, 1 anything else.

mod server;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use probenav::bench::{run_bench, BenchConfig, Budgets};
use probenav::cases::{gen_cases, CaseConstraints, CaseError, CaseSet, PlanDocument};
use probenav::planner::{default_familiar_views, default_target_pose, PlanError, PlannerRegistry, PlanningContext};
use probenav::report::export_report;
use probenav::wire::{verify_replay, ServerContext, SessionLog};
use probenav::{generate_phantom, load_volume, save_volume, LabeledVolume, PhantomSpec, ProbePose, SliceGeometry};

/// Failure that maps to a dedicated exit code.
#[derive(Debug)]
enum Exit {
    Validation(String),
    Budget(String),
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exit::Validation(m) => write!(f, "validation failed: {m}"),
            Exit::Budget(m) => write!(f, "budget exceeded: {m}"),
        }
    }
}

impl std::error::Error for Exit {}

#[derive(Parser)]
#[command(name = "probenav", version, about = "Probe navigation tutoring tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct VolumeArgs {
    /// Volume file; the default phantom is generated when omitted.
    #[arg(long)]
    volume: Option<PathBuf>,
    /// Resolution of the generated phantom when --volume is omitted.
    #[arg(long, default_value_t = 128)]
    resolution: usize,
}

impl VolumeArgs {
    fn load(&self) -> Result<LabeledVolume> {
        match &self.volume {
            Some(p) => load_volume(p).with_context(|| format!("loading volume {}", p.display())),
            None => Ok(generate_phantom(&PhantomSpec::with_resolution(self.resolution))?),
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    volume: VolumeArgs,
    /// Start pose `x,y,z,fan,rock,rotate` (degrees).
    #[arg(long, allow_hyphen_values = true, conflicts_with = "case")]
    start: Option<String>,
    /// Target pose, same format; defaults to the phantom's long-axis view.
    #[arg(long, allow_hyphen_values = true)]
    target: Option<String>,
    /// Take start and target from this case of --cases.
    #[arg(long, requires = "cases")]
    case: Option<String>,
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom volume.
    Phantom {
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a validated question set.
    Gen {
        #[command(flatten)]
        volume: VolumeArgs,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "greedy")]
        planner: String,
        /// Build starts within this many movements of the target.
        #[arg(long)]
        within: Option<usize>,
        #[arg(long)]
        require_converged: bool,
        #[arg(long)]
        max_attempts: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subgoal plan for one start pose.
    Plan {
        #[command(flatten)]
        args: PlanArgs,
        #[arg(long, default_value = "greedy")]
        planner: String,
    },
    /// Six-step naive plan for one start pose.
    NaivePlan {
        #[command(flatten)]
        args: PlanArgs,
    },
    /// Per-case HTML reports with step panels.
    Report {
        #[command(flatten)]
        volume: VolumeArgs,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure latency budgets; exits 3 when one is exceeded.
    Bench {
        #[command(flatten)]
        volume: VolumeArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        iters: usize,
        #[arg(long, default_value_t = 3)]
        plan_runs: usize,
        #[arg(long, default_value_t = 10.0)]
        budget_slice_ms: f64,
        #[arg(long, default_value_t = 16.0)]
        budget_frame_ms: f64,
        #[arg(long, default_value_t = 5.0)]
        budget_plan_s: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve tutoring sessions over WebSocket at /ws.
    Serve {
        #[command(flatten)]
        volume: VolumeArgs,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory for per-connection JSONL logs.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Replay a session log and compare the server messages byte for byte.
    Replay {
        #[command(flatten)]
        volume: VolumeArgs,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
}

fn parse_pose(s: &str) -> Result<ProbePose> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("pose {s:?}"))?;
    let [x, y, z, a, b, c] = v[..] else {
        bail!("pose {s:?} needs six comma-separated numbers");
    };
    Ok(ProbePose::from_euler_deg([x, y, z], [a, b, c]))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_cases(path: &Path, vol: &LabeledVolume) -> Result<CaseSet> {
    match CaseSet::load(path, vol) {
        Ok(s) => Ok(s),
        Err(e @ (CaseError::Io(_) | CaseError::Json(_))) => {
            Err(anyhow!(e).context(format!("reading case file {}", path.display())))
        }
        Err(e) => Err(Exit::Validation(format!("{}: {e}", path.display())).into()),
    }
}

fn run_plan(args: &PlanArgs, planner_name: &str) -> Result<()> {
    let vol = args.volume.load()?;
    let geom = SliceGeometry::default();
    let (start, target) = match (&args.case, &args.cases) {
        (Some(id), Some(path)) => {
            let set = load_cases(path, &vol)?;
            let c = set
                .cases
                .iter()
                .find(|c| &c.id == id)
                .ok_or_else(|| anyhow!("no case {id:?} in {}", path.display()))?;
            (c.start_pose, c.target_pose)
        }
        _ => {
            let start = args.start.as_deref().ok_or_else(|| anyhow!("pass --start or --case"))?;
            let target = match &args.target {
                Some(t) => parse_pose(t)?,
                None => default_target_pose(),
            };
            (parse_pose(start)?, target)
        }
    };
    let planner = PlannerRegistry::default().create(planner_name)?;
    let familiar = default_familiar_views(&vol, &geom);
    let ctx = PlanningContext::new(&vol, geom, &familiar);
    match planner.plan(&ctx, &start, &target) {
        Ok(plan) => {
            eprintln!("{}: {} steps, similarity {:.3}", plan.planner, plan.len(), plan.final_similarity());
            write_out(args.out.as_deref(), &PlanDocument::new(&vol, geom, plan).to_json()?)
        }
        Err(PlanError::NonConvergence { plan, reason }) => {
            write_out(args.out.as_deref(), &PlanDocument::new(&vol, geom, *plan).to_json()?)?;
            Err(Exit::Validation(format!("plan did not converge: {reason}")).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom {
            resolution,
            seed,
            jitter,
            out,
        } => {
            let mut spec = PhantomSpec::with_resolution(resolution);
            spec.seed = seed;
            spec.jitter = jitter;
            let vol = generate_phantom(&spec)?;
            save_volume(&vol, &out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} ({})", out.display(), vol.provenance());
        }
        Command::Gen {
            volume,
            n,
            seed,
            planner,
            within,
            require_converged,
            max_attempts,
            out,
        } => {
            let vol = volume.load()?;
            let geom = SliceGeometry::default();
            let familiar = default_familiar_views(&vol, &geom);
            let ctx = PlanningContext::new(&vol, geom, &familiar);
            let planner = PlannerRegistry::default().create(&planner)?;
            let mut constraints = CaseConstraints {
                within_movements: within,
                require_converged,
                ..CaseConstraints::default()
            };
            if let Some(m) = max_attempts {
                constraints.max_attempts = m;
            }
            let cases = match gen_cases(&ctx, planner.as_ref(), &default_target_pose(), n, seed, &constraints) {
                Ok(c) => c,
                Err(e @ CaseError::SamplingExhausted { .. }) => return Err(Exit::Validation(e.to_string()).into()),
                Err(e) => return Err(e.into()),
            };
            let set = CaseSet::new(&vol, geom, seed, constraints, cases);
            set.validate(&vol).map_err(|e| Exit::Validation(e.to_string()))?;
            set.save(&out).with_context(|| format!("writing {}", out.display()))?;
            let converged = set.cases.iter().filter(|c| c.plan.converged).count();
            eprintln!("wrote {} cases to {} ({converged} converged)", set.cases.len(), out.display());
        }
        Command::Plan { args, planner } => run_plan(&args, &planner)?,
        Command::NaivePlan { args } => run_plan(&args, "naive")?,
        Command::Report {
            volume,
            cases,
            case,
            out,
        } => {
            let vol = volume.load()?;
            let set = load_cases(&cases, &vol)?;
            let selected: Vec<_> = set.cases.iter().filter(|c| case.as_ref().is_none_or(|id| &c.id == id)).collect();
            if selected.is_empty() {
                bail!("no matching case in {}", cases.display());
            }
            for c in selected {
                let report = export_report(c, &vol, &set.geometry)?;
                let dir = out.join(&c.id);
                report.write_to(&dir)?;
                eprintln!("wrote {}", dir.join("index.html").display());
            }
        }
        Command::Bench {
            volume,
            seed,
            iters,
            plan_runs,
            budget_slice_ms,
            budget_frame_ms,
            budget_plan_s,
            out,
        } => {
            let vol = volume.load()?;
            let cfg = BenchConfig {
                slice_iters: iters,
                frame_iters: iters,
                plan_runs,
                seed,
                budgets: Budgets {
                    slice_ms: budget_slice_ms,
                    frame_p99_ms: budget_frame_ms,
                    plan_s: budget_plan_s,
                },
            };
            let report = run_bench(&vol, &SliceGeometry::default(), &cfg)?;
            print!("{}", report.summary());
            if let Some(p) = out {
                std::fs::write(&p, serde_json::to_string_pretty(&report)?)?;
            }
            if !report.passed() {
                return Err(Exit::Budget(report.violations.join("; ")).into());
            }
        }
        Command::Serve {
            volume,
            cases,
            bind,
            port,
            log_dir,
        } => {
            let vol = volume.load()?;
            let set = load_cases(&cases, &vol)?;
            let ctx = ServerContext::from_case_set(vol, &set);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(ctx, &bind, port, log_dir))?;
        }
        Command::Replay { volume, cases, log } => {
            let vol = volume.load()?;
            let set = load_cases(&cases, &vol)?;
            let ctx = ServerContext::from_case_set(vol, &set);
            let text = std::fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            let log = SessionLog::from_jsonl(&text)?;
            verify_replay(&ctx, &log).map_err(|e| Exit::Validation(e.to_string()))?;
            eprintln!("replay identical ({} server messages)", log.server_texts().count());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Exit>() {
                Some(Exit::Validation(_)) => ExitCode::from(2),
                Some(Exit::Budget(_)) => ExitCode::from(3),
                None => ExitCode::FAILURE,
            }
        }
    }
}
