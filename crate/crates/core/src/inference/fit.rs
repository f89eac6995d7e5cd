//! EM driver with random restarts and information-criterion model selection.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::filter::{e_step_with, emissions};
use crate::inference::{m_step, FitOptions};
use crate::model::{self, FittedModel, ModelFamily, MsmParams, ReturnPanel};
use crate::sim::{stream, streams};

const INITIAL_NU: f64 = 10.0;
const INITIAL_STAY: f64 = 0.9;
const RELATIVE_TOL: f64 = 1e-10;

/// Outcome of a single EM run from one starting point.
#[derive(Clone, Debug)]
pub struct EmRun {
    pub params: MsmParams,
    pub loglik: f64,
    /// Log-likelihood of every iterate, starting with the initial parameters.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Moment-based starting values from a random hard partition: `L` distinct
/// observations are drawn as seeds and every observation joins the nearest
/// seed in standardised Euclidean distance.
pub fn initial_params<R: Rng>(
    panel: &ReturnPanel,
    l: usize,
    family: ModelFamily,
    rng: &mut R,
) -> Result<MsmParams> {
    let (t_len, p) = (panel.len(), panel.dim());
    if l == 0 || l > t_len {
        return Err(Error::invalid(format!(
            "cannot start {l} states from {t_len} observations"
        )));
    }
    let rows = panel.rows();
    let all: Vec<usize> = (0..t_len).collect();
    let (overall_mu, overall_s) = moments(&rows, &all);
    let scale: Vec<f64> = (0..p)
        .map(|j| overall_s[(j, j)].sqrt().max(f64::MIN_POSITIVE))
        .collect();
    let seeds = sample(rng, t_len, l).into_vec();
    let mut groups = vec![Vec::new(); l];
    for (t, y) in rows.iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, &s) in seeds.iter().enumerate() {
            let d: f64 = (0..p)
                .map(|j| ((y[j] - rows[s][j]) / scale[j]).powi(2))
                .sum();
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        groups[best].push(t);
    }
    let mut mu = Vec::with_capacity(l);
    let mut sigma = Vec::with_capacity(l);
    // shrink small groups toward the pooled covariance so every start is PD
    let prior = (p + 1) as f64;
    for g in &groups {
        if g.is_empty() {
            mu.push(overall_mu.clone());
            sigma.push(overall_s.clone());
            continue;
        }
        let (m, s) = moments(&rows, g);
        let n = g.len() as f64;
        mu.push(m);
        sigma.push((s * n + &overall_s * prior) / (n + prior));
    }
    let transition = if l == 1 {
        DMatrix::identity(1, 1)
    } else {
        let off = (1.0 - INITIAL_STAY) / (l - 1) as f64;
        DMatrix::from_fn(l, l, |i, j| if i == j { INITIAL_STAY } else { off })
    };
    let nu = family.is_student().then(|| vec![INITIAL_NU; l]);
    let params = MsmParams {
        n_states: l,
        delta: DVector::from_element(l, 1.0 / l as f64),
        transition,
        mu,
        sigma,
        nu,
    };
    params.ensure_valid()?;
    Ok(params)
}

fn moments(rows: &[DVector<f64>], idx: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let p = rows[0].len();
    let n = idx.len() as f64;
    let mut m = DVector::zeros(p);
    for &t in idx {
        m += &rows[t];
    }
    m /= n;
    let mut s = DMatrix::zeros(p, p);
    for &t in idx {
        let e = &rows[t] - &m;
        s.ger(1.0, &e, &e, 1.0);
    }
    (m, s / n)
}

/// Runs EM from `init` until the log-likelihood gain drops below the tolerance.
pub fn run_em(panel: &ReturnPanel, init: MsmParams, opts: &FitOptions) -> Result<EmRun> {
    opts.check()?;
    init.ensure_valid()?;
    if panel.dim() != init.dim() {
        return Err(Error::DimensionMismatch("panel and starting values".into()));
    }
    let mut params = init;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let em = emissions(panel, &params)?;
        let stats = e_step_with(&params, &em)?;
        let ll = stats.loglik;
        if let Some(&prev) = trace.last() {
            let gain: f64 = ll - prev;
            if gain.abs() < opts.loglik_tol || gain.abs() < RELATIVE_TOL * ll.abs() {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iterations == opts.max_iter {
            break;
        }
        params = m_step(panel, &stats, &params, opts)?;
        iterations += 1;
    }
    let loglik = *trace.last().expect("at least one evaluation");
    Ok(EmRun {
        params,
        loglik,
        trace,
        converged,
        iterations,
    })
}

/// Relabels states by ascending `trace(Sigma_l)`.
fn order_by_volatility(params: &MsmParams) -> MsmParams {
    let mut order: Vec<usize> = (0..params.n_states).collect();
    order.sort_by(|&a, &b| params.sigma[a].trace().total_cmp(&params.sigma[b].trace()));
    params.permuted(&order)
}

/// Best-of-restarts EM fit of an `L`-state model.
pub fn fit(
    panel: &ReturnPanel,
    l: usize,
    family: ModelFamily,
    opts: &FitOptions,
) -> Result<FittedModel> {
    opts.check()?;
    let (t_len, p) = (panel.len(), panel.dim());
    if l == 0 {
        return Err(Error::invalid("need at least one state"));
    }
    if t_len <= l * p {
        return Err(Error::invalid(format!(
            "T = {t_len} is too short for {l} states in dimension {p}"
        )));
    }
    let runs: Vec<Result<EmRun>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(opts.seed, streams::RESTART + r as u64);
            let init = initial_params(panel, l, family, &mut rng)?;
            run_em(panel, init, opts)
        })
        .collect();
    let restart_logliks: Vec<Option<f64>> = runs
        .iter()
        .map(|r| r.as_ref().ok().map(|x| x.loglik))
        .collect();
    let mut best: Option<&EmRun> = None;
    for run in runs.iter().flatten() {
        if !run.loglik.is_finite() {
            continue;
        }
        if best.is_none_or(|b| run.loglik > b.loglik) {
            best = Some(run);
        }
    }
    let Some(best) = best else {
        let msgs = runs
            .iter()
            .enumerate()
            .map(|(r, x)| match x {
                Err(e) => format!("restart {}: {e}", r + 1),
                Ok(run) => format!("restart {}: log-likelihood {}", r + 1, run.loglik),
            })
            .collect();
        return Err(Error::FitFailed(msgs));
    };
    let params = order_by_volatility(&best.params);
    let em = emissions(panel, &params)?;
    let stats = e_step_with(&params, &em)?;
    let n_params = params.n_params();
    Ok(FittedModel {
        family,
        loglik: stats.loglik,
        n_params,
        aic: model::aic(stats.loglik, n_params),
        bic: model::bic(stats.loglik, n_params, t_len),
        filtered: stats.filtered,
        smoothed: stats.zhat,
        smoothed_pairs: stats.zzhat,
        w_hat: family.is_student().then_some(stats.what),
        converged: best.converged,
        iterations: best.iterations,
        restart_logliks,
        params,
    })
}

/// One `(family, L)` row of a model-selection table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionRow {
    pub family: ModelFamily,
    #[serde(rename = "L")]
    pub n_states: usize,
    pub loglik: Option<f64>,
    pub n_params: usize,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub model: Option<FittedModel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
    /// Index of the first row with the smallest AIC.
    pub best_aic: Option<usize>,
    pub best_bic: Option<usize>,
}

impl SelectionTable {
    pub fn best_aic_row(&self) -> Option<&SelectionRow> {
        self.best_aic.map(|i| &self.rows[i])
    }

    pub fn best_bic_row(&self) -> Option<&SelectionRow> {
        self.best_bic.map(|i| &self.rows[i])
    }
}

fn argmin(rows: &[SelectionRow], key: impl Fn(&SelectionRow) -> Option<f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        if let Some(v) = key(r) {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Fits every `(family, L)` combination; failures are recorded per row.
pub fn select(
    panel: &ReturnPanel,
    states: &[usize],
    families: &[ModelFamily],
    opts: &FitOptions,
) -> Result<SelectionTable> {
    if states.is_empty() || families.is_empty() {
        return Err(Error::invalid(
            "model selection needs at least one state count and one family",
        ));
    }
    let mut rows = Vec::new();
    for &family in families {
        for &l in states {
            let n_params = if l == 0 {
                0
            } else {
                model::n_params(l, panel.dim(), family)
            };
            let row = match fit(panel, l, family, opts) {
                Ok(m) => SelectionRow {
                    family,
                    n_states: l,
                    loglik: Some(m.loglik),
                    n_params,
                    aic: Some(m.aic),
                    bic: Some(m.bic),
                    error: None,
                    model: Some(m),
                },
                Err(e) => SelectionRow {
                    family,
                    n_states: l,
                    loglik: None,
                    n_params,
                    aic: None,
                    bic: None,
                    error: Some(e.to_string()),
                    model: None,
                },
            };
            rows.push(row);
        }
    }
    let best_aic = argmin(&rows, |r| r.aic);
    let best_bic = argmin(&rows, |r| r.bic);
    Ok(SelectionTable {
        rows,
        best_aic,
        best_bic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_gaussian_state_hits_the_closed_form_mle() {
        let values = DMatrix::from_row_slice(
            6,
            2,
            &[
                0.1, 0.3, -0.4, 0.2, 0.9, -0.5, 0.0, 0.1, -0.3, 0.6, 0.5, -0.2,
            ],
        );
        let panel = ReturnPanel::with_default_dates(values).unwrap();
        let opts = FitOptions {
            restarts: 2,
            ..FitOptions::default()
        };
        let m = fit(&panel, 1, ModelFamily::Gaussian, &opts).unwrap();
        let rows = panel.rows();
        let all: Vec<usize> = (0..6).collect();
        let (mu, s) = moments(&rows, &all);
        assert!((&m.params.mu[0] - &mu).amax() < 1e-14);
        assert!((&m.params.sigma[0] - &s).amax() < 1e-14);
        let direct = crate::inference::forward_loglik(
            &panel,
            &MsmParams::new(
                DVector::from_element(1, 1.0),
                DMatrix::identity(1, 1),
                vec![mu],
                vec![s],
                None,
            )
            .unwrap(),
        )
        .unwrap()
        .0;
        assert!((m.loglik - direct).abs() < 1e-12);
        assert!((m.aic - (-2.0 * m.loglik + 2.0 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn too_short_panel_is_rejected() {
        let panel = ReturnPanel::with_default_dates(DMatrix::zeros(4, 2)).unwrap();
        assert!(fit(&panel, 2, ModelFamily::Gaussian, &FitOptions::default()).is_err());
    }
}
