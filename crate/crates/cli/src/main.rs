//! `dgp` — command-line pipeline for dispersion-generated portfolios:
//! simulate a price panel, normalize it, backtest strategies against the
//! price-weighted market, decompose relative returns into drift and
//! dispersion change, and report performance statistics.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use dgp_core::backtest::{performance_report, run_backtest, RebalanceSchedule};
use dgp_core::decomposition::component_stats_monthly;
use dgp_core::panel::{NormalizedPanel, RawPanel, DEFAULT_FILL_LIMIT};
use dgp_core::portfolio::StrategyKind;
use dgp_core::simulator::{convergence_study, simulate, SimConfig};
use dgp_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dgp",
    version,
    about = "Dispersion-generated portfolios: simulate, normalize, backtest, decompose, report",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a correlated price panel and write it as CSV.
    Simulate(SimulateArgs),
    /// Rebase a raw price panel so every asset indexes to 1.0 at a base date.
    Normalize(NormalizeArgs),
    /// Backtest strategies against the one-share-each market portfolio.
    Backtest(BacktestArgs),
    /// Decompose a strategy's relative return into drift and dispersion
    /// change, or run a step-refinement convergence study.
    Decompose(DecomposeArgs),
    /// Summarize backtests as performance tables (text, JSON, or CSV).
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Key=value config file (n_assets, years, steps_per_year, mu, sigma,
    /// rho, regime, kappa, seed); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config file (or the default).
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path for the simulated price panel.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct NormalizeArgs {
    /// Raw price panel CSV (first column date, one column per asset).
    #[arg(long)]
    input: PathBuf,
    /// Date every present asset is rebased to 1.0 at (default: first date).
    #[arg(long)]
    base_date: Option<NaiveDate>,
    /// Longest internal gap to carry the last price across.
    #[arg(long, default_value_t = DEFAULT_FILL_LIMIT)]
    fill_limit: usize,
    /// Output CSV path for the normalized panel.
    #[arg(long)]
    output: PathBuf,
}

/// Loading and backtest options shared by the pipeline subcommands.
#[derive(Args)]
struct PanelArgs {
    /// Price panel CSV (raw prices or already-normalized index levels).
    #[arg(long)]
    input: PathBuf,
    /// Normalization base date (default: first date in the panel).
    #[arg(long)]
    base_date: Option<NaiveDate>,
    /// Longest internal gap to carry the last price across.
    #[arg(long, default_value_t = DEFAULT_FILL_LIMIT)]
    fill_limit: usize,
    /// Rebalance schedule.
    #[arg(long, value_enum, default_value_t = ScheduleArg::Monthly)]
    rebalance: ScheduleArg,
    /// Years to wait after the panel start before forming portfolios.
    #[arg(long, default_value_t = 5.0)]
    burn_in_years: f64,
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Strategy spec, repeatable: market, equal, ces:gamma=G, additive-geo,
    /// additive-ces:gamma=G (default: market, equal, ces:gamma=-0.5).
    #[arg(long = "strategy")]
    strategies: Vec<String>,
    /// Directory for values_<label>.csv and rebalances_<label>.csv files.
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Price panel CSV; mutually exclusive with --steps.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Normalization base date (default: first date in the panel).
    #[arg(long)]
    base_date: Option<NaiveDate>,
    /// Longest internal gap to carry the last price across.
    #[arg(long, default_value_t = DEFAULT_FILL_LIMIT)]
    fill_limit: usize,
    /// Rebalance schedule (panel mode).
    #[arg(long, value_enum, default_value_t = ScheduleArg::Monthly)]
    rebalance: ScheduleArg,
    /// Years to wait after the panel start before forming portfolios.
    #[arg(long, default_value_t = 5.0)]
    burn_in_years: f64,
    /// Strategy whose generating measure drives the decomposition
    /// (default: equal; the market has no generating measure).
    #[arg(long)]
    strategy: Option<String>,
    /// Steps-per-year list for a convergence study (e.g. 252,504,1008);
    /// switches to simulation mode, mutually exclusive with --input.
    #[arg(long, value_delimiter = ',')]
    steps: Vec<usize>,
    /// Simulation config file for the convergence study.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override for the convergence study.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Strategy spec, repeatable (default: market, equal, ces:gamma=-0.5).
    #[arg(long = "strategy")]
    strategies: Vec<String>,
    /// Sub-period length in years (default 10: decade rows).
    #[arg(long, default_value_t = 10)]
    periods: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Output path (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy)]
enum ScheduleArg {
    Monthly,
    EveryStep,
}

impl From<ScheduleArg> for RebalanceSchedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Monthly => RebalanceSchedule::Monthly,
            ScheduleArg::EveryStep => RebalanceSchedule::EveryStep,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum Format {
    Text,
    Json,
    Csv,
}

/// Warnings from the library (non-convex custom measures, CES exponents
/// above 1) go to stderr.
struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Warn
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("{}: {}", record.level().to_string().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

fn main() -> ExitCode {
    // Rust ignores SIGPIPE by default, turning a closed downstream pipe
    // (`dgp report | head`) into a write-error panic. Restore the default
    // disposition so the process ends quietly instead, like other
    // line-oriented tools.
    //
    // SAFETY: installing a standard disposition for SIGPIPE has no
    // preconditions; it runs before any other thread exists.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(log::LevelFilter::Warn);
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Normalize(args) => cmd_normalize(args),
        Command::Backtest(args) => cmd_backtest(args),
        Command::Decompose(args) => cmd_decompose(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn sim_config(path: Option<&Path>, seed: Option<u64>) -> Result<SimConfig> {
    let mut cfg = match path {
        Some(p) => SimConfig::parse(&fs::read_to_string(p)?)?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let cfg = sim_config(args.config.as_deref(), args.seed)?;
    let sim = simulate(&cfg)?;
    let panel = sim.panel();
    panel.write_csv(fs::File::create(&args.output)?)?;
    println!(
        "wrote {} dates x {} assets to {}",
        panel.n_dates(),
        panel.n_assets(),
        args.output.display()
    );
    Ok(())
}

fn cmd_normalize(args: NormalizeArgs) -> Result<()> {
    let raw = RawPanel::load(&args.input, args.fill_limit)?;
    let base = match args.base_date {
        Some(d) => d,
        None => first_date(&raw)?,
    };
    let norm = NormalizedPanel::from_raw(&raw, base)?;
    norm.write_csv(fs::File::create(&args.output)?)?;
    println!(
        "normalized {} assets at base {} to {}",
        norm.n_assets(),
        base,
        args.output.display()
    );
    Ok(())
}

fn first_date(raw: &RawPanel) -> Result<NaiveDate> {
    raw.dates().first().copied().ok_or_else(|| Error::Parse {
        location: "panel".to_string(),
        message: "panel has no rows".to_string(),
    })
}

fn load_panel(args: &PanelArgs) -> Result<NormalizedPanel> {
    let raw = RawPanel::load(&args.input, args.fill_limit)?;
    let base = match args.base_date {
        Some(d) => d,
        None => first_date(&raw)?,
    };
    NormalizedPanel::from_raw(&raw, base)
}

fn parse_strategies(specs: &[String]) -> Result<Vec<StrategyKind>> {
    if specs.is_empty() {
        return Ok(vec![
            StrategyKind::Market,
            StrategyKind::Equal,
            StrategyKind::parse("ces:gamma=-0.5")?,
        ]);
    }
    specs.iter().map(|s| StrategyKind::parse(s)).collect()
}

fn cmd_backtest(args: BacktestArgs) -> Result<()> {
    let panel = load_panel(&args.panel)?;
    let strategies = parse_strategies(&args.strategies)?;
    fs::create_dir_all(&args.output_dir)?;
    for strat in &strategies {
        let res = run_backtest(
            &panel,
            strat,
            args.panel.rebalance.into(),
            args.panel.burn_in_years,
        )?;
        let values = args.output_dir.join(format!("values_{}.csv", res.label));
        res.write_values_csv(fs::File::create(&values)?)?;
        let rebalances = args.output_dir.join(format!("rebalances_{}.csv", res.label));
        res.write_rebalances_csv(fs::File::create(&rebalances)?, &panel)?;
        println!(
            "{}: {} dates, {} rebalances -> {}",
            res.label,
            res.len(),
            res.rebalances.len(),
            values.display()
        );
    }
    Ok(())
}

fn cmd_decompose(args: DecomposeArgs) -> Result<()> {
    let strat = StrategyKind::parse(args.strategy.as_deref().unwrap_or("equal"))?;
    let (measure, kind) = strat.generating_measure().ok_or_else(|| {
        Error::Parameter(
            "the market strategy has no generating measure to decompose with; \
             choose equal, ces:gamma=G, additive-geo, or additive-ces:gamma=G"
                .to_string(),
        )
    })?;

    match (&args.input, args.steps.is_empty()) {
        (Some(_), false) => Err(Error::Parameter(
            "--input and --steps are mutually exclusive: decompose a panel or run a convergence study".to_string(),
        )),
        (None, true) => Err(Error::Parameter(
            "nothing to decompose: pass --input PANEL or --steps LIST".to_string(),
        )),
        (None, false) => {
            let cfg = sim_config(args.config.as_deref(), args.seed)?;
            let rows = convergence_study(&cfg, &args.steps, &measure, kind)?;
            let mut out = fs::File::create(&args.output)?;
            writeln!(out, "steps_per_year,dt,max_abs_gap,terminal_abs_gap")?;
            for r in &rows {
                writeln!(
                    out,
                    "{},{},{},{}",
                    r.steps_per_year, r.dt, r.max_abs_gap, r.terminal_abs_gap
                )?;
            }
            println!(
                "convergence study over {:?} steps/year -> {}",
                args.steps,
                args.output.display()
            );
            Ok(())
        }
        (Some(input), true) => {
            let panel_args = PanelArgs {
                input: input.clone(),
                base_date: args.base_date,
                fill_limit: args.fill_limit,
                rebalance: args.rebalance,
                burn_in_years: args.burn_in_years,
            };
            let panel = load_panel(&panel_args)?;
            let res = run_backtest(&panel, &strat, args.rebalance.into(), args.burn_in_years)?;
            let series = res.decompose(&measure, kind)?;
            series.write_csv(fs::File::create(&args.output)?)?;
            let stats = component_stats_monthly(&series);
            let rendered = serde_json::to_string_pretty(&stats)
                .map_err(|e| Error::Parameter(format!("cannot serialize component stats: {e}")))?;
            println!("{rendered}");
            Ok(())
        }
    }
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let panel = load_panel(&args.panel)?;
    let strategies = parse_strategies(&args.strategies)?;
    let mut reports = Vec::with_capacity(strategies.len());
    for strat in &strategies {
        let res = run_backtest(
            &panel,
            strat,
            args.panel.rebalance.into(),
            args.panel.burn_in_years,
        )?;
        reports.push(performance_report(&res, Some(args.periods))?);
    }

    let rendered = match args.format {
        Format::Text => {
            let mut s = String::new();
            for (i, r) in reports.iter().enumerate() {
                if i > 0 {
                    s.push('\n');
                }
                s.push_str(&r.render_text());
            }
            s
        }
        Format::Json => serde_json::to_string_pretty(&reports)
            .map_err(|e| Error::Parameter(format!("cannot serialize reports: {e}")))?
            + "\n",
        Format::Csv => {
            let mut s = String::new();
            for (i, r) in reports.iter().enumerate() {
                let mut buf = Vec::new();
                r.write_csv(&mut buf)?;
                let text = String::from_utf8(buf).expect("CSV output is UTF-8");
                if i == 0 {
                    s.push_str(&text);
                } else if let Some((_, rows)) = text.split_once('\n') {
                    s.push_str(rows);
                }
            }
            s
        }
    };

    match &args.output {
        Some(path) => {
            fs::write(path, rendered)?;
            println!("wrote {} report(s) to {}", reports.len(), path.display());
        }
        None => print!("{rendered}"),
    }
    Ok(())
}
