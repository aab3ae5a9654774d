//! `snow run | sweep | verify`: scenario runner and tree checker.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad config or refused
//! overwrite, 3 invariant violation or counterexample.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use snow_sim::config::{ScenarioConfig, Sweep};
use snow_sim::metrics::Scope;
use snow_sim::output::{aggregate, render_table, write_all, OutputError};
use snow_sim::scenario::{run_all, RunResult};
use snow_sim::verify::{verify, CellKind, ColorBlind, OutOfSection, Pickers, Standard, VerifySpec};

#[derive(Parser)]
#[command(name = "snow", version, about = "Snow broadcast simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSVs.
    Run(RunArgs),
    /// Run a scenario over a grid of n or k and print one row per cell.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated cluster sizes, replacing the config's sweep.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// Comma-separated fan-outs, replacing the config's sweep.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Check tree coverage, balance, height and coloring exhaustively.
    Verify {
        /// Grid spec (JSON); defaults to n 1..=300, k 2,4,6,8.
        config: Option<PathBuf>,
        /// Check a deliberately broken rule instead.
        #[arg(long, value_enum)]
        negative_control: Option<Control>,
        /// Print failing cells only.
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config (JSON).
    config: PathBuf,
    /// Run this seed only.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output`, then `results/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Nodes the reliability and LDT columns cover.
    #[arg(long, value_enum)]
    scope: Option<ScopeArg>,
    /// Replace existing result files.
    #[arg(long)]
    force: bool,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Fixed,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Control {
    ColorBlind,
    OutOfSection,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(&args, None),
        Command::Sweep { run: args, n, k } => {
            let grid = Sweep {
                n: (!n.is_empty()).then_some(n),
                k: (!k.is_empty()).then_some(k),
            };
            run(&args, Some(grid))
        }
        Command::Verify {
            config,
            negative_control,
            quiet,
        } => verify_cmd(config.as_deref(), negative_control, quiet),
    }
}

fn load(args: &RunArgs, grid: Option<Sweep>) -> Result<(ScenarioConfig, Scope), String> {
    let mut cfg = ScenarioConfig::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.replications.clear();
    }
    if let Some(grid) = grid {
        if grid.n.is_some() || grid.k.is_some() {
            let old = cfg.sweep.take().unwrap_or_default();
            cfg.sweep = Some(Sweep {
                n: grid.n.or(old.n),
                k: grid.k.or(old.k),
            });
        }
        if cfg.sweep.is_none() {
            return Err("sweep needs --n, --k or a `sweep` entry in the config".into());
        }
    }
    cfg.validate().map_err(|e| e.to_string())?;
    let scope = match args.scope {
        Some(ScopeArg::Fixed) => Scope::Fixed,
        Some(ScopeArg::All) => Scope::All,
        None => cfg.scope,
    };
    Ok((cfg, scope))
}

fn run(args: &RunArgs, grid: Option<Sweep>) -> ExitCode {
    let sweeping = grid.is_some();
    let (cfg, scope) = match load(args, grid) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = match run_all(&cfg, scope, threads) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| Path::new("results").join(cfg.name()));
    match write_all(&dir, cfg.name(), &results, args.force) {
        Ok(paths) => eprintln!("wrote {} file(s) to {}", paths.len(), dir.display()),
        Err(e @ OutputError::Exists(_)) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    }
    print!("{}", render_table(&aggregate(&results), sweeping));
    report_violations(&results)
}

fn report_violations(results: &[RunResult]) -> ExitCode {
    let mut bad = false;
    for r in results.iter().filter(|r| !r.passed()) {
        bad = true;
        for v in &r.violations {
            eprintln!("VIOLATION {} n={} k={} seed={}: {}: {}", r.algorithm, r.n, r.k, r.seed, v.rule, v.detail);
        }
    }
    if bad {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn verify_cmd(config: Option<&Path>, control: Option<Control>, quiet: bool) -> ExitCode {
    let spec = match config {
        None => VerifySpec::default(),
        Some(p) => match std::fs::read_to_string(p)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<VerifySpec>(&t).map_err(|e| e.to_string()))
        {
            Ok(s) => s,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(2);
            }
        },
    };
    let pickers: &dyn Pickers = match control {
        None => &Standard,
        Some(Control::ColorBlind) => &ColorBlind,
        Some(Control::OutOfSection) => &OutOfSection,
    };
    let cells = verify(&spec, pickers, true);
    for c in &cells {
        let kind = match c.kind {
            CellKind::Plain => "plain",
            CellKind::Colored => "colored",
        };
        match &c.failure {
            None if !quiet => println!("PASS {kind} n={} k={} roots={}", c.n, c.k, c.roots),
            None => {}
            Some(cx) => {
                println!("FAIL {kind} n={} k={} rule={}", c.n, c.k, cx.rule);
                println!("{}", serde_json::to_string_pretty(cx).expect("serializable"));
                return ExitCode::from(3);
            }
        }
    }
    println!("verified {} cell(s) with the {} rules", cells.len(), pickers.name());
    ExitCode::SUCCESS
}
