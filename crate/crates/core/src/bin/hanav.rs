use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hanav::bench::{load_suite, parse_report_csv, render_report, render_trace_svg, run_suite, ReportFormat};
use hanav::global_plan::plan_global_with;
use hanav::costmap::CostmapStack;
use hanav::sim::{run_episode_with, PlannerKind};
use hanav::world::load_scenario_file;
use hanav::{Config, Error, Result};

#[derive(Parser)]
#[command(name = "hanav", version, about = "Human-aware navigation planner and scenario benchmark")]
struct Cli {
    /// TOML file overriding defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "cohan")]
        planner: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Run every scenario in a directory with repeated seeds.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value_t = 10)]
        repeats: u32,
        #[arg(long, default_value = "cohan,baseline", value_delimiter = ',')]
        planners: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a saved CSV report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "table")]
        format: String,
    },
}

fn write(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Run {
            scenario,
            planner,
            seed,
            dt,
            out,
            plot,
        } => {
            let spec = load_scenario_file(&scenario)?;
            let kind: PlannerKind = planner.parse()?;
            if let Some(dt) = dt {
                cfg.sim.dt = dt;
                cfg.validate()?;
            }
            let trace = run_episode_with(&spec, kind, seed, cfg.sim.dt, &cfg);
            trace.save(&out)?;
            if let Some(plot) = plot {
                let inflated = CostmapStack::from_grid(spec.map.clone()).inflate(spec.robot.radius, cfg.planner.inflation_decay);
                let path = plan_global_with(&inflated, spec.robot.start, spec.robot.goal, &cfg.planner.global)
                    .ok()
                    .map(|p| p.waypoints.iter().map(|w| [w.x, w.y]).collect::<Vec<_>>());
                write(&plot, &render_trace_svg(&trace, &spec.map, path.as_deref()))?;
            }
            if let Some(f) = &trace.footer {
                eprintln!("{} {} seed {}: {:?} at t = {:.1} s", spec.name, kind, seed, f.outcome, f.time);
            }
            Ok(())
        }
        Command::Bench {
            suite,
            repeats,
            planners,
            seed,
            out,
        } => {
            let specs = load_suite(&suite)?;
            let kinds = planners.iter().map(|p| p.parse()).collect::<Result<Vec<PlannerKind>>>()?;
            let report = run_suite(&specs, &kinds, repeats, seed, &cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write(&out, &render_report(&report, ReportFormat::Csv)?)?;
            print!("{}", render_report(&report, ReportFormat::Table)?);
            Ok(())
        }
        Command::Report { input, format } => {
            let format: ReportFormat = format.parse()?;
            let text = std::fs::read_to_string(&input).map_err(|e| Error::Io(format!("{}: {e}", input.display())))?;
            let report = parse_report_csv(&text)?;
            print!("{}", render_report(&report, format)?);
            Ok(())
        }
    }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
