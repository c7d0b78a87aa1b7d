//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on input or configuration errors, 2 when an
//! internal invariant is violated and 64 on usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calibration::{calibrate_groups, load_thresholds, write_thresholds, CalibrationError, Selection};
use crate::config::{Config, ConfigError};
use crate::fleet::{BessAsset, RiskGroup, Thresholds};
use crate::market_data::{
    generate_synthetic, load_bid_ladders, load_price_series, load_si_series, write_bid_ladders,
    write_si_series, DataError, PriceSeries,
};
use crate::metrics::{save_isp_records, save_metrics, MetricsError};
use crate::simulator::{
    run_capacity_sweep, run_scenario, DataSource, IspRow, MarketInputs, ScenarioConfig, SimError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "imbalance-sim", version, about = "Imbalance price formula simulator with a price-responsive storage fleet")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate controller thresholds per risk group and write thresholds.csv.
    Calibrate(CommonArgs),
    /// Run one scenario and write isp_records.csv and metrics.csv.
    Run(CommonArgs),
    /// Run the capacity by formula grid and write isp_records.csv and metrics.csv.
    Sweep(CommonArgs),
    /// Write synthetic si.csv and bids.csv.
    Synth(CommonArgs),
    /// Check the configured input files and print a report.
    Validate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario configuration file (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Random seed; overrides `seed`.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Calibrate(a) | Command::Run(a) | Command::Sweep(a) | Command::Synth(a) | Command::Validate(a) => a,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("calibration failed: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("cannot write output: {0}")]
    Metrics(#[from] MetricsError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{0}")]
    Validation(String),
    #[error("invalid --jobs: {0}")]
    Jobs(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => EXIT_INVARIANT,
            CliError::Sim(e) if e.is_invariant_violation() => EXIT_INVARIANT,
            CliError::Jobs(_) => EXIT_USAGE,
            _ => EXIT_INPUT,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// A loaded configuration together with the metadata written to every output file.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: Config,
    pub config_sha256: String,
    pub out_dir: PathBuf,
}

impl Invocation {
    pub fn load(args: &CommonArgs) -> Result<Self> {
        let bytes = std::fs::read(&args.config).map_err(|source| ConfigError::Io {
            path: args.config.clone(),
            source,
        })?;
        let mut config = Config::load(&args.config)?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        if let Some(seed) = args.seed {
            config.seed = seed;
            hasher.update(format!("\nseed={seed}\n").as_bytes());
        }
        let out_dir = args.out.clone().unwrap_or_else(|| config.output_dir());
        Ok(Invocation {
            config,
            config_sha256: hex::encode(hasher.finalize()),
            out_dir,
        })
    }

    /// Comment lines leading every output file.
    pub fn preamble(&self) -> Vec<String> {
        let c = &self.config;
        vec![
            format!("imbalance-sim {VERSION} config_sha256={}", self.config_sha256),
            format!(
                "seed={} delay_min={} cycle_limit={} c_rate={} efficiency={} asset_size_mw={} aggregation={:?}",
                c.seed, c.delay_min, c.cycle_limit, c.c_rate, c.efficiency, c.asset_size_mw, c.aggregation
            ),
        ]
    }

    fn output(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir).map_err(|source| CliError::Io {
            path: self.out_dir.clone(),
            source,
        })?;
        Ok(self.out_dir.join(name))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_preamble(out: &mut impl Write, path: &Path, preamble: &[String]) -> Result<()> {
    for line in preamble {
        writeln!(out, "# {line}").map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

fn progress(message: impl AsRef<str>) {
    eprintln!("imbalance-sim: {}", message.as_ref());
}

/// Training prices for threshold calibration.
pub fn calibration_prices(config: &Config) -> Result<PriceSeries> {
    let block = config.calibration();
    if let Some(path) = &block.prices_path {
        return Ok(load_price_series(config.resolve(path))?);
    }
    let data = match config.data_source() {
        DataSource::Synthetic { params, .. } => DataSource::Synthetic {
            seed: config.calibration_seed(),
            days: block.days,
            params,
        },
        files => files,
    };
    let mut baseline = ScenarioConfig::new(config.formula, config.fleet(), data);
    baseline.rule.aggregation = config.aggregation;
    baseline.fleet.total_capacity = 0.0;
    let result = run_scenario(&baseline)?;
    Ok(result.intermediate_prices()?)
}

/// Calibrates every risk group on the configured training prices.
pub fn calibrate_from_config(config: &Config) -> Result<BTreeMap<RiskGroup, Selection>> {
    let prices = calibration_prices(config)?;
    let asset = BessAsset::new(
        1.0,
        config.c_rate,
        Thresholds { upper: 0.0, lower: 0.0 },
        RiskGroup::RiskNeutral,
        config.efficiency,
        config.cycle_limit,
    )
    .map_err(SimError::from)?;
    Ok(calibrate_groups(&config.calibration().grid(), &prices, &asset)?)
}

/// Scenario of the configuration with thresholds from explicit keys, the
/// thresholds file or, failing both, a calibration run.
pub fn resolve_scenario(config: &Config) -> Result<ScenarioConfig> {
    let mut scenario = config.scenario()?;
    let missing = |s: &ScenarioConfig| RiskGroup::ALL.into_iter().any(|g| s.fleet.thresholds_for(g).is_none());
    if missing(&scenario) {
        if let Some(path) = config.thresholds_path() {
            for (group, t) in load_thresholds(&path)? {
                if scenario.fleet.thresholds_for(group).is_none() {
                    scenario.fleet.set_thresholds(group, t);
                }
            }
        }
    }
    if missing(&scenario) && config.calibration.is_some() {
        progress("calibrating thresholds");
        for (group, s) in calibrate_from_config(config)? {
            if scenario.fleet.thresholds_for(group).is_none() {
                scenario.fleet.set_thresholds(group, s.thresholds());
            }
        }
    }
    Ok(scenario)
}

fn check_audit(audits: impl IntoIterator<Item = crate::simulator::FleetAudit>) -> Result<()> {
    for audit in audits {
        if !audit.is_clean(1e-9) {
            return Err(CliError::Invariant(format!("fleet audit failed: {audit:?}")));
        }
    }
    Ok(())
}

fn cmd_calibrate(inv: &Invocation) -> Result<Vec<PathBuf>> {
    progress("calibrating thresholds");
    let selections = calibrate_from_config(&inv.config)?;
    let path = inv.output("thresholds.csv")?;
    let mut out = create(&path)?;
    write_preamble(&mut out, &path, &inv.preamble())?;
    write_thresholds(&mut out, &selections)?;
    Ok(vec![path])
}

fn write_results(inv: &Invocation, rows: &[IspRow], metrics: &[crate::metrics::MetricRow]) -> Result<Vec<PathBuf>> {
    let preamble = inv.preamble();
    let records = inv.output("isp_records.csv")?;
    save_isp_records(&records, &preamble, rows)?;
    let metrics_path = inv.output("metrics.csv")?;
    save_metrics(&metrics_path, &preamble, metrics)?;
    Ok(vec![records, metrics_path])
}

fn cmd_run(inv: &Invocation) -> Result<Vec<PathBuf>> {
    let scenario = resolve_scenario(&inv.config)?;
    progress(format!(
        "running {} MW with formula {}",
        scenario.fleet.total_capacity, scenario.rule.formula
    ));
    let result = run_scenario(&scenario)?;
    check_audit([result.audit])?;
    let rows = IspRow::rows(&result);
    let metrics = crate::metrics::scenario_metrics(&result);
    write_results(inv, &rows, &metrics)
}

fn cmd_sweep(inv: &Invocation) -> Result<Vec<PathBuf>> {
    let scenario = resolve_scenario(&inv.config)?;
    let (caps, formulas) = (&inv.config.capacities_mw, &inv.config.formulas);
    progress(format!("sweeping {} capacities x {} formulas", caps.len(), formulas.len()));
    let table = run_capacity_sweep(&scenario, caps, formulas)?;
    check_audit(table.cells.iter().map(|c| c.audit))?;
    let rows: Vec<IspRow> = table.isp_rows().copied().collect();
    let metrics: Vec<_> = table.metric_rows().cloned().collect();
    write_results(inv, &rows, &metrics)
}

fn cmd_synth(inv: &Invocation) -> Result<Vec<PathBuf>> {
    let c = &inv.config;
    progress(format!("generating {} synthetic days with seed {}", c.synth_days, c.seed));
    let (si, ladders) = generate_synthetic(c.seed, c.synth_days, &c.synth)?;
    let preamble = inv.preamble();
    let si_path = inv.output("si.csv")?;
    let mut out = create(&si_path)?;
    write_preamble(&mut out, &si_path, &preamble)?;
    write_si_series(&mut out, &si)?;
    let bids_path = inv.output("bids.csv")?;
    let mut out = create(&bids_path)?;
    write_preamble(&mut out, &bids_path, &preamble)?;
    write_bid_ladders(&mut out, &ladders)?;
    Ok(vec![si_path, bids_path])
}

/// Checks every configured input file; returns one report line per check.
pub fn validate_inputs(config: &Config) -> (Vec<String>, bool) {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut report = |name: &str, result: std::result::Result<String, String>| match result {
        Ok(detail) => lines.push(format!("ok     {name}: {detail}")),
        Err(e) => {
            ok = false;
            lines.push(format!("FAILED {name}: {e}"));
        }
    };
    match config.data_source() {
        DataSource::Files { si_path, bids_path } => {
            let si = load_si_series(&si_path);
            report(
                &si_path.display().to_string(),
                si.as_ref()
                    .map(|s| format!("{} minutes, {} periods", s.len(), s.isp_count()))
                    .map_err(ToString::to_string),
            );
            let ladders = load_bid_ladders(&bids_path);
            report(
                &bids_path.display().to_string(),
                ladders
                    .as_ref()
                    .map(|l| format!("{} ladders", l.len()))
                    .map_err(ToString::to_string),
            );
            if let (Ok(si), Ok(ladders)) = (si, ladders) {
                report(
                    "coverage",
                    MarketInputs::new(si, ladders)
                        .map(|i| format!("every one of {} periods has a ladder", i.isp_count()))
                        .map_err(|e| e.to_string()),
                );
            }
        }
        DataSource::Synthetic { seed, days, .. } => {
            report("data", Ok(format!("synthetic, {days} days, seed {seed}")));
        }
    }
    if let Some(path) = config.thresholds_path() {
        report(
            &path.display().to_string(),
            load_thresholds(&path)
                .map(|t| format!("thresholds for {} risk groups", t.len()))
                .map_err(|e| e.to_string()),
        );
    }
    if let Some(path) = config.calibration.as_ref().and_then(|c| c.prices_path.as_ref()) {
        let path = config.resolve(path);
        report(
            &path.display().to_string(),
            load_price_series(&path)
                .map(|p| format!("{} minutes", p.len()))
                .map_err(|e| e.to_string()),
        );
    }
    report(
        "scenario",
        config.scenario().map(|s| format!("formula {}", s.rule.formula)).map_err(|e| e.to_string()),
    );
    (lines, ok)
}

fn cmd_validate(inv: &Invocation) -> Result<Vec<PathBuf>> {
    let (lines, ok) = validate_inputs(&inv.config);
    let mut stdout = std::io::stdout().lock();
    for line in &lines {
        let _ = writeln!(stdout, "{line}");
    }
    if ok {
        Ok(Vec::new())
    } else {
        Err(CliError::Validation("input validation failed".into()))
    }
}

/// Executes a parsed command and returns the written files.
pub fn execute(command: &Command) -> Result<Vec<PathBuf>> {
    let args = command.args();
    let inv = Invocation::load(args)?;
    let run = || match command {
        Command::Calibrate(_) => cmd_calibrate(&inv),
        Command::Run(_) => cmd_run(&inv),
        Command::Sweep(_) => cmd_sweep(&inv),
        Command::Synth(_) => cmd_synth(&inv),
        Command::Validate(_) => cmd_validate(&inv),
    };
    match args.jobs {
        Some(0) => Err(CliError::Jobs("must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Jobs(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(files) => {
            for f in files {
                progress(format!("wrote {}", f.display()));
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("imbalance-sim: error: {e}");
            e.exit_code()
        }
    }
}

