//! Batch command-line front end.
//!
//! Exit codes are stable:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | command-line usage error |
//! | 3 | invalid configuration |
//! | 4 | input file cannot be read |
//! | 5 | malformed CSV or date |
//! | 6 | missing column |
//! | 7 | missing or invalid cell value |
//! | 8 | dates not strictly increasing |
//! | 9 | insufficient data |
//! | 10 | model or numerical failure |
//! | 11 | output cannot be written |

pub mod config;
pub mod describe;
pub mod ingest;
pub mod output;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use thiserror::Error;

use crate::inference::viterbi;
use crate::model::{FittedModel, MsmParams, ReturnPanel};
use crate::sim::simulate;
use config::RunConfig;
use output::{num, Artifacts, CsvTable};

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const INPUT: i32 = 4;
    pub const CSV: i32 = 5;
    pub const MISSING_COLUMN: i32 = 6;
    pub const BAD_VALUE: i32 = 7;
    pub const DATE_ORDER: i32 = 8;
    pub const INSUFFICIENT_DATA: i32 = 9;
    pub const MODEL: i32 = 10;
    pub const OUTPUT: i32 = 11;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read input: {0}")]
    Input(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("invalid value: {0}")]
    MissingValue(String),
    #[error("dates out of order: {0}")]
    DateOrder(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Input(_) => exit::INPUT,
            CliError::Csv(_) => exit::CSV,
            CliError::MissingColumn(_) => exit::MISSING_COLUMN,
            CliError::MissingValue(_) => exit::BAD_VALUE,
            CliError::DateOrder(_) => exit::DATE_ORDER,
            CliError::InsufficientData(_) => exit::INSUFFICIENT_DATA,
            CliError::Model(_) => exit::MODEL,
            CliError::Output(_) => exit::OUTPUT,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "msrisk", version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("MSRISK_GIT_DESCRIBE"), ")"))]
#[command(
    about = "Markov-switching tail-risk models: fit, decode, risk paths and Shapley attribution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-asset summary statistics of the input panel
    Describe(Common),
    /// Fit one model and write model.json
    Fit(Common),
    /// Fit every requested (family, L) pair; writes selection.csv and the chosen model.json
    Select(Common),
    /// Viterbi path and state probabilities (states.csv)
    Decode(Common),
    /// Risk-measure paths (risk_path.csv)
    Risk(Common),
    /// Shapley attribution paths (shapley_path.csv, summary.json)
    Shapley(Common),
    /// Simulate a panel from model parameters
    Simulate(SimulateArgs),
    /// Run every stage and write all artifacts
    Pipeline(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with a date column and one column per asset
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// gaussian, t, or both
    #[arg(long)]
    family: Option<String>,
    /// State count, range (1-3) or list (1,2,4)
    #[arg(long)]
    states: Option<String>,
    #[arg(long)]
    tau1: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    /// paper or standard
    #[arg(long)]
    dof_convention: Option<String>,
    /// Treat the input as prices and convert to log returns
    #[arg(long)]
    to_returns: bool,
    /// Market index column; the attribution target
    #[arg(long)]
    market: Option<String>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Comma-separated risk measures
    #[arg(long)]
    measures: Option<String>,
    /// Previously fitted model.json to use instead of fitting
    #[arg(long)]
    model: Option<PathBuf>,
    /// Any configuration key, as KEY=VALUE; may be repeated
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// MsmParams JSON, or a model.json whose parameters are used
    #[arg(long)]
    params: PathBuf,
    /// Number of observations
    #[arg(long, short = 'T')]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated asset names (default Y1..Yp)
    #[arg(long)]
    assets: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.load_file(path)?;
        }
        let pairs: [(&str, Option<String>); 11] = [
            (
                "input",
                self.input
                    .as_ref()
                    .map(|p| p.to_string_lossy().into_owned()),
            ),
            (
                "output_dir",
                self.out.as_ref().map(|p| p.to_string_lossy().into_owned()),
            ),
            ("seed", self.seed.map(|v| v.to_string())),
            ("family", self.family.clone()),
            ("states", self.states.clone()),
            ("tau1", self.tau1.map(|v| v.to_string())),
            ("tau2", self.tau2.map(|v| v.to_string())),
            ("dof_convention", self.dof_convention.clone()),
            ("market_column", self.market.clone()),
            ("restarts", self.restarts.map(|v| v.to_string())),
            ("horizon", self.horizon.map(|v| v.to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        if let Some(m) = &self.measures {
            cfg.set("measures", m)?;
        }
        if self.to_returns {
            cfg.to_returns = true;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(&k.trim().replace('-', "_"), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn model_or_fit(
        &self,
        cfg: &RunConfig,
        panel: &ReturnPanel,
        out: &mut Artifacts,
    ) -> Result<FittedModel, CliError> {
        match &self.model {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                let model = FittedModel::from_json(&text)?;
                if model.n_obs() != panel.len() || model.dim() != panel.dim() {
                    return Err(CliError::Config(format!(
                        "model was fitted to a {}x{} panel, input is {}x{}",
                        model.n_obs(),
                        model.dim(),
                        panel.len(),
                        panel.dim()
                    )));
                }
                Ok(model)
            }
            None => {
                let (model, _) = pipeline::fit_model(cfg, panel)?;
                out.write("model.json", (model.to_json()? + "\n").as_bytes())?;
                Ok(model)
            }
        }
    }
}

fn with_artifacts(
    dir: &std::path::Path,
    f: impl FnOnce(&mut Artifacts) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut out = Artifacts::new(dir)?;
    f(&mut out).inspect_err(|_| out.discard())
}

fn run_describe(c: &Common) -> Result<(), CliError> {
    let cfg = c.resolve()?;
    let prep = pipeline::prepare(&cfg)?;
    let rows = describe::describe(&prep.panel)?;
    let mut table = CsvTable::new([
        "asset",
        "min",
        "max",
        "mean_x1000",
        "std",
        "skewness",
        "kurtosis",
        "q01",
        "jarque_bera",
    ]);
    for r in &rows {
        table.push(vec![
            r.asset.clone(),
            num(r.min),
            num(r.max),
            num(r.mean_x1000),
            num(r.std),
            num(r.skewness),
            num(r.kurtosis),
            num(r.q01),
            num(r.jarque_bera),
        ]);
    }
    let bytes = table.to_bytes()?;
    print!("{}", String::from_utf8_lossy(&bytes));
    if c.out.is_some() || c.config.is_some() {
        with_artifacts(&cfg.output_dir, |out| {
            out.write("describe.csv", &bytes).map(drop)
        })?;
    }
    Ok(())
}

fn run_fit(c: &Common) -> Result<(), CliError> {
    let cfg = c.resolve()?;
    let panel = pipeline::prepare(&cfg)?.panel;
    with_artifacts(&cfg.output_dir, |out| {
        let (model, table) = pipeline::fit_model(&cfg, &panel)?;
        if let Some(t) = &table {
            out.write_csv("selection.csv", &pipeline::selection_csv(t))?;
        }
        out.write("model.json", (model.to_json()? + "\n").as_bytes())?;
        Ok(())
    })
}

fn run_stage(c: &Common, stage: &str) -> Result<(), CliError> {
    let cfg = c.resolve()?;
    let prep = pipeline::prepare(&cfg)?;
    with_artifacts(&cfg.output_dir, |out| {
        let model = c.model_or_fit(&cfg, &prep.panel, out)?;
        match stage {
            "decode" => {
                let states = viterbi(&prep.panel, &model.params)?;
                out.write_csv(
                    "states.csv",
                    &pipeline::states_csv(&prep.panel, &model, &states),
                )?;
            }
            "risk" => {
                let (table, gaps) = pipeline::risk_csv(&cfg, &prep, &model)?;
                for g in &gaps {
                    log::warn!("{} at t = {}: {}", g.measure, g.t, g.reason);
                }
                out.write_csv("risk_path.csv", &table)?;
            }
            _ => {
                let states = viterbi(&prep.panel, &model.params)?;
                let paths = pipeline::attribution(&cfg, &prep, &model)?;
                out.write_csv(
                    "shapley_path.csv",
                    &pipeline::shapley_csv(&prep.panel, &paths),
                )?;
                out.write_json(
                    "summary.json",
                    &pipeline::summary(&cfg, &prep, &model, &states, &paths, Vec::new())?,
                )?;
            }
        }
        Ok(())
    })
}

fn run_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.params)
        .map_err(|e| CliError::Input(format!("{}: {e}", a.params.display())))?;
    let params = match MsmParams::from_json(&text) {
        Ok(p) => p,
        Err(first) => FittedModel::from_json(&text)
            .map(|m| m.params)
            .map_err(|_| CliError::Config(format!("{}: {first}", a.params.display())))?,
    };
    let sim = simulate(&params, a.length, a.seed)?;
    let values: &DMatrix<f64> = sim.panel.values();
    let names: Vec<String> = match &a.assets {
        Some(s) => s.split(',').map(|x| x.trim().to_string()).collect(),
        None => sim.panel.assets().to_vec(),
    };
    if names.len() != values.ncols() {
        return Err(CliError::Config(format!(
            "{} asset names for {} columns",
            names.len(),
            values.ncols()
        )));
    }
    let mut panel = CsvTable::new(std::iter::once("date".to_string()).chain(names));
    let mut states = CsvTable::new(["date", "state"]);
    for t in 0..values.nrows() {
        let date = sim.panel.timestamps()[t].clone();
        panel.push(
            std::iter::once(date.clone())
                .chain(values.row(t).iter().map(|&v| num(v)))
                .collect(),
        );
        states.push(vec![date, (sim.states[t] + 1).to_string()]);
    }
    with_artifacts(&a.out, |out| {
        out.write_csv("panel.csv", &panel)?;
        out.write_csv("true_states.csv", &states)?;
        Ok(())
    })
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("MSRISK_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("MSRISK_THREADS = '{v}' is not a count")))?;
        if n == 0 {
            return Err(CliError::Config("MSRISK_THREADS must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
        }
    };
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Describe(c) => run_describe(c),
        Command::Fit(c) => run_fit(c),
        Command::Select(c) => run_fit(c),
        Command::Decode(c) => run_stage(c, "decode"),
        Command::Risk(c) => run_stage(c, "risk"),
        Command::Shapley(c) => run_stage(c, "shapley"),
        Command::Simulate(a) => run_simulate(a),
        Command::Pipeline(c) => c
            .resolve()
            .and_then(|cfg| pipeline::run_pipeline(&cfg))
            .map(drop),
    });
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("msrisk: {e}");
            e.exit_code()
        }
    }
}
