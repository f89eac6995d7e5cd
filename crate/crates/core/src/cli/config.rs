//! Run configuration: defaults, then a flat INI file, then command-line flags.

use std::path::{Path, PathBuf};

use ini::Ini;
use serde::Serialize;

use crate::cli::CliError;
use crate::inference::{FitOptions, NuUpdate};
use crate::model::ModelFamily;
use crate::predictive::DofConvention;
use crate::risk::{ProbabilitySource, RiskMeasure};
use crate::shapley::ValueMode;

/// Information criterion used to pick the reported model from a selection run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    #[default]
    Bic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub date_column: String,
    /// Empty means every column except the date column.
    pub asset_columns: Vec<String>,
    pub market_column: Option<String>,
    /// Target when no market column is set; defaults to the first asset.
    pub target: Option<String>,
    pub to_returns: bool,
    pub families: Vec<ModelFamily>,
    pub states: Vec<usize>,
    pub criterion: Criterion,
    pub tau1: f64,
    pub tau2: f64,
    pub horizon: usize,
    pub measures: Vec<RiskMeasure>,
    pub restarts: usize,
    pub max_iter: usize,
    pub loglik_tol: f64,
    pub nu_update: NuUpdate,
    pub seed: u64,
    pub dof_convention: DofConvention,
    pub probabilities: ProbabilitySource,
    pub value_mode: ValueMode,
    /// Left out of the manifest so identical runs into different directories match.
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitOptions::default();
        RunConfig {
            input: None,
            date_column: "date".into(),
            asset_columns: Vec::new(),
            market_column: None,
            target: None,
            to_returns: false,
            families: vec![ModelFamily::StudentT],
            states: vec![2],
            criterion: Criterion::Bic,
            tau1: 0.05,
            tau2: 0.05,
            horizon: 1,
            measures: vec![RiskMeasure::DeltaMCoVaR, RiskMeasure::DeltaMCoES],
            restarts: fit.restarts,
            max_iter: fit.max_iter,
            loglik_tol: fit.loglik_tol,
            nu_update: fit.nu_update,
            seed: fit.seed,
            dof_convention: DofConvention::Paper,
            probabilities: ProbabilitySource::Filtered,
            value_mode: ValueMode::Absolute,
            output_dir: PathBuf::from("msrisk-out"),
        }
    }
}

/// Keys accepted in a configuration file and on the command line.
pub const KEYS: &[&str] = &[
    "input",
    "date_column",
    "asset_columns",
    "market_column",
    "target",
    "to_returns",
    "family",
    "states",
    "criterion",
    "tau1",
    "tau2",
    "horizon",
    "measures",
    "restarts",
    "max_iter",
    "loglik_tol",
    "nu_update",
    "seed",
    "dof_convention",
    "probabilities",
    "value_mode",
    "output_dir",
];

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key} = '{value}': {why}"))
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

/// `2`, `1-3` or `1,2,4`.
pub fn parse_states(value: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for part in list(value) {
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (usize, usize) = (parse("states", a)?, parse("states", b)?);
            if a > b {
                return Err(bad("states", value, "empty range"));
            }
            out.extend(a..=b);
        } else {
            out.push(parse("states", &part)?);
        }
    }
    if out.is_empty() || out.contains(&0) {
        return Err(bad("states", value, "need positive state counts"));
    }
    out.dedup();
    Ok(out)
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "input" => self.input = Some(PathBuf::from(v)),
            "date_column" => self.date_column = v.to_string(),
            "asset_columns" => self.asset_columns = list(v),
            "market_column" => self.market_column = (!v.is_empty()).then(|| v.to_string()),
            "target" => self.target = (!v.is_empty()).then(|| v.to_string()),
            "to_returns" => self.to_returns = parse_bool(key, v)?,
            "family" => {
                self.families = match v.to_ascii_lowercase().as_str() {
                    "both" | "all" => vec![ModelFamily::Gaussian, ModelFamily::StudentT],
                    _ => list(v)
                        .iter()
                        .map(|f| parse(key, f))
                        .collect::<Result<_, _>>()?,
                };
                if self.families.is_empty() {
                    return Err(bad(key, v, "no family given"));
                }
            }
            "states" => self.states = parse_states(v)?,
            "criterion" => {
                self.criterion = match v.to_ascii_lowercase().as_str() {
                    "aic" => Criterion::Aic,
                    "bic" => Criterion::Bic,
                    _ => return Err(bad(key, v, "expected aic or bic")),
                }
            }
            "tau1" => self.tau1 = parse(key, v)?,
            "tau2" => self.tau2 = parse(key, v)?,
            "horizon" => self.horizon = parse(key, v)?,
            "measures" => {
                self.measures = list(v)
                    .iter()
                    .map(|m| parse(key, m))
                    .collect::<Result<_, _>>()?
            }
            "restarts" => self.restarts = parse(key, v)?,
            "max_iter" => self.max_iter = parse(key, v)?,
            "loglik_tol" => self.loglik_tol = parse(key, v)?,
            "nu_update" => {
                self.nu_update = match v.to_ascii_lowercase().as_str() {
                    "shoham" => NuUpdate::Shoham,
                    "bisection" | "exact" => NuUpdate::Bisection,
                    _ => return Err(bad(key, v, "expected shoham or bisection")),
                }
            }
            "seed" => self.seed = parse(key, v)?,
            "dof_convention" => self.dof_convention = parse(key, v)?,
            "probabilities" => {
                self.probabilities = match v.to_ascii_lowercase().as_str() {
                    "filtered" => ProbabilitySource::Filtered,
                    "smoothed" => ProbabilitySource::Smoothed,
                    _ => return Err(bad(key, v, "expected filtered or smoothed")),
                }
            }
            "value_mode" => self.value_mode = parse(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            other => {
                return Err(CliError::Config(format!(
                    "unknown key '{other}' (known keys: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Reads every key of a flat INI file; relative paths resolve against the file's directory.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let ini = Ini::load_from_file(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for (section, props) in ini.iter() {
            if let Some(name) = section {
                return Err(CliError::Config(format!(
                    "sections are not supported ([{name}])"
                )));
            }
            for (k, v) in props.iter() {
                let key = k.trim().to_ascii_lowercase().replace('-', "_");
                self.set(&key, v)?;
                if matches!(key.as_str(), "input" | "output_dir") {
                    let p = PathBuf::from(v.trim());
                    if p.is_relative() {
                        let joined = base.join(p);
                        if key == "input" {
                            self.input = Some(joined);
                        } else {
                            self.output_dir = joined;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            restarts: self.restarts,
            max_iter: self.max_iter,
            loglik_tol: self.loglik_tol,
            seed: self.seed,
            nu_update: self.nu_update,
            ..FitOptions::default()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (k, tau) in [("tau1", self.tau1), ("tau2", self.tau2)] {
            if !(tau > 0.0 && tau < 0.5) {
                return Err(CliError::Config(format!(
                    "{k} = {tau} must lie in (0, 0.5)"
                )));
            }
        }
        if self.horizon == 0 {
            return Err(CliError::Config("horizon must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(CliError::Config("restarts must be at least 1".into()));
        }
        if !(self.loglik_tol > 0.0) {
            return Err(CliError::Config("loglik_tol must be positive".into()));
        }
        if self.measures.is_empty() {
            return Err(CliError::Config("no risk measure requested".into()));
        }
        if self.market_column.is_some()
            && self.target.is_some()
            && self.market_column != self.target
        {
            return Err(CliError::Config("target and market_column disagree".into()));
        }
        self.fit_options()
            .check()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config("no input file given".into()))
    }

    /// True when more than one `(family, L)` pair is requested.
    pub fn is_selection(&self) -> bool {
        self.families.len() * self.states.len() > 1
    }
}
