//! The stages of a batch run and the tables each one emits.

use std::path::PathBuf;

use serde::Serialize;

use crate::cli::config::{Criterion, RunConfig};
use crate::cli::ingest::{ingest, Columns};
use crate::cli::output::{num, opt_num, Artifacts, CsvTable};
use crate::cli::CliError;
use crate::inference::{fit, select, viterbi, SelectionTable};
use crate::model::{ConditioningSpec, FittedModel, ReturnPanel};
use crate::risk::{risk_path, PathOptions, RiskMeasure};
use crate::shapley::{attribution_path, summarize_by_state, AttributionOptions, AttributionPath};

/// Ingested panel with the attribution roles resolved.
pub struct Prepared {
    pub panel: ReturnPanel,
    pub target: usize,
    pub players: Vec<usize>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let extra = cfg.market_column.as_deref().or(cfg.target.as_deref());
    let cols = Columns {
        date: &cfg.date_column,
        assets: &cfg.asset_columns,
        extra,
    };
    let panel = ingest(cfg.input()?, &cols, cfg.to_returns)?;
    let target = match extra {
        Some(name) => panel
            .asset_index(name)
            .ok_or_else(|| CliError::MissingColumn(format!("target column '{name}'")))?,
        None => 0,
    };
    let players = (0..panel.dim()).filter(|&j| j != target).collect();
    Ok(Prepared {
        panel,
        target,
        players,
    })
}

/// Fits the configured model, running a selection over every requested
/// `(family, L)` pair when there is more than one.
pub fn fit_model(
    cfg: &RunConfig,
    panel: &ReturnPanel,
) -> Result<(FittedModel, Option<SelectionTable>), CliError> {
    let opts = cfg.fit_options();
    if !cfg.is_selection() {
        log::info!(
            "fitting {} L={} with {} restarts",
            cfg.families[0],
            cfg.states[0],
            opts.restarts
        );
        return Ok((fit(panel, cfg.states[0], cfg.families[0], &opts)?, None));
    }
    log::info!(
        "selecting over {} models",
        cfg.families.len() * cfg.states.len()
    );
    let table = select(panel, &cfg.states, &cfg.families, &opts)?;
    let best = match cfg.criterion {
        Criterion::Aic => table.best_aic_row(),
        Criterion::Bic => table.best_bic_row(),
    };
    let model = best.and_then(|r| r.model.clone()).ok_or_else(|| {
        CliError::Model(crate::Error::FitFailed(
            table.rows.iter().filter_map(|r| r.error.clone()).collect(),
        ))
    })?;
    Ok((model, Some(table)))
}

pub fn selection_csv(table: &SelectionTable) -> CsvTable {
    let mut out = CsvTable::new([
        "family", "L", "loglik", "n_params", "aic", "bic", "best_aic", "best_bic", "error",
    ]);
    for (i, r) in table.rows.iter().enumerate() {
        out.push(vec![
            r.family.label().to_string(),
            r.n_states.to_string(),
            opt_num(r.loglik),
            r.n_params.to_string(),
            opt_num(r.aic),
            opt_num(r.bic),
            (table.best_aic == Some(i)).to_string(),
            (table.best_bic == Some(i)).to_string(),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    out
}

/// Viterbi path (1-based states) with smoothed and filtered probabilities.
pub fn states_csv(panel: &ReturnPanel, model: &FittedModel, path: &[usize]) -> CsvTable {
    let l = model.params.n_states;
    let mut header = vec!["t".to_string(), "date".into(), "state".into()];
    header.extend((1..=l).map(|k| format!("smoothed_{k}")));
    header.extend((1..=l).map(|k| format!("filtered_{k}")));
    let mut out = CsvTable::new(header);
    for (t, s) in path.iter().enumerate() {
        let mut row = vec![
            (t + 1).to_string(),
            panel.timestamps()[t].clone(),
            (s + 1).to_string(),
        ];
        row.extend((0..l).map(|k| num(model.smoothed[(t, k)])));
        row.extend((0..l).map(|k| num(model.filtered[(t, k)])));
        out.push(row);
    }
    out
}

pub fn path_options(cfg: &RunConfig) -> PathOptions {
    PathOptions {
        horizon: cfg.horizon,
        source: cfg.probabilities,
        convention: cfg.dof_convention,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Gap {
    pub measure: RiskMeasure,
    pub asset: String,
    pub t: usize,
    pub date: String,
    pub reason: String,
}

/// Unconditional measures for every asset, conditional ones for the target
/// with every other asset distressed.
pub fn risk_csv(
    cfg: &RunConfig,
    prep: &Prepared,
    model: &FittedModel,
) -> Result<(CsvTable, Vec<Gap>), CliError> {
    let panel = &prep.panel;
    let opts = path_options(cfg);
    let mut out = CsvTable::new(["t", "date", "asset", "measure", "value"]);
    let mut gaps = Vec::new();
    for &measure in &cfg.measures {
        let assets: Vec<usize> = if measure.is_conditional() {
            if prep.players.is_empty() {
                log::warn!("skipping {measure}: a single asset has nothing to condition on");
                continue;
            }
            vec![prep.target]
        } else {
            (0..panel.dim()).collect()
        };
        for asset in assets {
            let spec = ConditioningSpec {
                target: asset,
                distressed: prep.players.clone(),
                tau1: cfg.tau1,
                tau2: cfg.tau2,
            };
            let path = risk_path(model, measure, &spec, &opts)?;
            let name = &panel.assets()[asset];
            for p in &path.points {
                out.push(vec![
                    (p.t + 1).to_string(),
                    panel.timestamps()[p.t].clone(),
                    name.clone(),
                    measure.to_string(),
                    num(p.value),
                ]);
            }
            gaps.extend(path.gaps.into_iter().map(|(t, reason)| Gap {
                measure,
                asset: name.clone(),
                t: t + 1,
                date: panel.timestamps()[t].clone(),
                reason,
            }));
        }
    }
    Ok((out, gaps))
}

/// Spillover measures used for attribution, in configuration order.
pub fn attribution_measures(cfg: &RunConfig) -> Vec<RiskMeasure> {
    let ms: Vec<RiskMeasure> = cfg
        .measures
        .iter()
        .copied()
        .filter(|m| matches!(m, RiskMeasure::DeltaMCoVaR | RiskMeasure::DeltaMCoES))
        .collect();
    if ms.is_empty() {
        vec![RiskMeasure::DeltaMCoVaR]
    } else {
        ms
    }
}

pub fn attribution(
    cfg: &RunConfig,
    prep: &Prepared,
    model: &FittedModel,
) -> Result<Vec<(RiskMeasure, AttributionPath)>, CliError> {
    if prep.players.is_empty() {
        log::warn!("skipping attribution: a single asset has no counterparties");
        return Ok(Vec::new());
    }
    attribution_measures(cfg)
        .into_iter()
        .map(|measure| {
            let opts = AttributionOptions {
                target: prep.target,
                measure,
                tau1: cfg.tau1,
                tau2: cfg.tau2,
                mode: cfg.value_mode,
                path: path_options(cfg),
            };
            Ok((measure, attribution_path(model, &opts)?))
        })
        .collect()
}

pub fn shapley_csv(panel: &ReturnPanel, paths: &[(RiskMeasure, AttributionPath)]) -> CsvTable {
    let mut out = CsvTable::new([
        "t",
        "date",
        "measure",
        "institution",
        "share",
        "share_pct",
        "total",
    ]);
    for (measure, path) in paths {
        for pt in &path.points {
            for (k, &j) in path.players.iter().enumerate() {
                out.push(vec![
                    (pt.t + 1).to_string(),
                    panel.timestamps()[pt.t].clone(),
                    measure.to_string(),
                    panel.assets()[j].clone(),
                    num(pt.report.shares[k]),
                    num(pt.report.share_pct[k]),
                    num(pt.report.total),
                ]);
            }
        }
    }
    out
}

#[derive(Serialize)]
struct InstitutionStats {
    institution: String,
    mean_share: Option<f64>,
    var_share: Option<f64>,
    mean_pct: Option<f64>,
    var_pct: Option<f64>,
}

#[derive(Serialize)]
struct StateBlock {
    state: usize,
    n_obs: usize,
    institutions: Vec<InstitutionStats>,
}

#[derive(Serialize)]
struct MeasureSummary {
    measure: RiskMeasure,
    n_points: usize,
    individually_rational: usize,
    superadditive: usize,
    by_state: Vec<StateBlock>,
    gaps: Vec<Gap>,
}

#[derive(Serialize)]
pub struct Summary {
    target: String,
    institutions: Vec<String>,
    value_mode: crate::shapley::ValueMode,
    measures: Vec<MeasureSummary>,
    risk_gaps: Vec<Gap>,
}

/// State-conditional share statistics for every attribution path.
pub fn summary(
    cfg: &RunConfig,
    prep: &Prepared,
    model: &FittedModel,
    states: &[usize],
    paths: &[(RiskMeasure, AttributionPath)],
    risk_gaps: Vec<Gap>,
) -> Result<Summary, CliError> {
    let panel = &prep.panel;
    let names = |idx: &[usize]| {
        idx.iter()
            .map(|&j| panel.assets()[j].clone())
            .collect::<Vec<_>>()
    };
    let mut measures = Vec::new();
    for (measure, path) in paths {
        let by_state = summarize_by_state(path, states, model.params.n_states)?
            .into_iter()
            .map(|s| StateBlock {
                state: s.state,
                n_obs: s.n_obs,
                institutions: (0..s.players.len())
                    .map(|k| InstitutionStats {
                        institution: panel.assets()[s.players[k]].clone(),
                        mean_share: s.mean_share[k],
                        var_share: s.var_share[k],
                        mean_pct: s.mean_pct[k],
                        var_pct: s.var_pct[k],
                    })
                    .collect(),
            })
            .collect();
        let gaps = path
            .gaps
            .iter()
            .map(|(t, reason)| Gap {
                measure: *measure,
                asset: panel.assets()[prep.target].clone(),
                t: t + 1,
                date: panel.timestamps()[*t].clone(),
                reason: reason.clone(),
            })
            .collect();
        measures.push(MeasureSummary {
            measure: *measure,
            n_points: path.points.len(),
            individually_rational: path
                .points
                .iter()
                .filter(|p| p.report.properties.individually_rational)
                .count(),
            superadditive: path
                .points
                .iter()
                .filter(|p| p.report.properties.superadditive == Some(true))
                .count(),
            by_state,
            gaps,
        });
    }
    Ok(Summary {
        target: panel.assets()[prep.target].clone(),
        institutions: names(&prep.players),
        value_mode: cfg.value_mode,
        measures,
        risk_gaps,
    })
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub name: &'static str,
    pub version: &'static str,
    pub git_describe: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub artifacts: Vec<String>,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, cfg: &'a RunConfig, written: &[PathBuf]) -> Self {
        Manifest {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            git_describe: env!("MSRISK_GIT_DESCRIBE"),
            command,
            seed: cfg.seed,
            config: cfg,
            artifacts: written
                .iter()
                .filter_map(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .collect(),
        }
    }
}

fn run_stages(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let prep = prepare(cfg)?;
    let (model, table) = fit_model(cfg, &prep.panel)?;
    if let Some(table) = &table {
        out.write_csv("selection.csv", &selection_csv(table))?;
    }
    out.write("model.json", (model.to_json()? + "\n").as_bytes())?;
    let states = viterbi(&prep.panel, &model.params)?;
    out.write_csv("states.csv", &states_csv(&prep.panel, &model, &states))?;
    log::info!("evaluating risk paths");
    let (risk, risk_gaps) = risk_csv(cfg, &prep, &model)?;
    out.write_csv("risk_path.csv", &risk)?;
    log::info!("evaluating Shapley attribution");
    let paths = attribution(cfg, &prep, &model)?;
    out.write_csv("shapley_path.csv", &shapley_csv(&prep.panel, &paths))?;
    out.write_json(
        "summary.json",
        &summary(cfg, &prep, &model, &states, &paths, risk_gaps)?,
    )?;
    let manifest = Manifest::new("pipeline", cfg, out.written());
    out.write_json("run_manifest.json", &manifest)?;
    Ok(())
}

/// Full fit, selection, decoding, risk and attribution run. On failure every
/// artifact written by this run is removed.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let mut out = Artifacts::new(&cfg.output_dir)?;
    match run_stages(cfg, &mut out) {
        Ok(()) => Ok(out.written().to_vec()),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}
