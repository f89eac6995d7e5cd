//! The h-step-ahead predictive mixture and its marginal and conditional laws.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::normal::LN_SQRT_2PI;
use crate::dist::student::mvt_log_kernel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Component, FittedModel, MixtureDistribution, MsmParams};

/// Origin (0-based row of the filtered probabilities) and horizon of a forecast.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictiveSpec {
    pub origin: usize,
    pub horizon: usize,
}

impl PredictiveSpec {
    pub fn new(origin: usize, horizon: usize) -> Self {
        PredictiveSpec { origin, horizon }
    }
}

/// Degrees of freedom used for conditional Student-t components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DofConvention {
    /// `p1 + nu` with scale `(nu + m)/(p1 + nu) Sigma_{1|2}`.
    #[default]
    Paper,
    /// `nu + p2` with scale `(nu + m)/(nu + p2) Sigma_{1|2}`.
    Standard,
}

impl std::str::FromStr for DofConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(DofConvention::Paper),
            "standard" => Ok(DofConvention::Standard),
            other => Err(Error::invalid(format!(
                "unknown dof convention '{other}' (expected paper or standard)"
            ))),
        }
    }
}

/// `filtered * Q^h` as a probability vector.
pub fn predictive_weights(
    filtered: &DVector<f64>,
    transition: &DMatrix<f64>,
    horizon: usize,
) -> Result<DVector<f64>> {
    let l = transition.nrows();
    if filtered.len() != l || transition.ncols() != l {
        return Err(Error::DimensionMismatch(
            "filtered probabilities and transition matrix".into(),
        ));
    }
    if horizon == 0 {
        return Err(Error::invalid("forecast horizon must be at least 1"));
    }
    let mut w = filtered.transpose();
    for _ in 0..horizon {
        w = &w * transition;
    }
    let mut w = w.transpose().map(|v| v.max(0.0));
    let s = w.sum();
    if !(s > 0.0) {
        return Err(Error::invalid("predictive weights vanish"));
    }
    w /= s;
    Ok(w)
}

/// Mixture with the given weights over the states of `params`.
pub fn state_mixture(params: &MsmParams, weights: DVector<f64>) -> Result<MixtureDistribution> {
    let comps = (0..params.n_states)
        .map(|l| Component {
            mu: params.mu[l].clone(),
            sigma: params.sigma[l].clone(),
            nu: params.nu_of(l),
        })
        .collect();
    MixtureDistribution::new(weights, comps, params.family())
}

/// Law of `Y_{t+h}` given the data up to the origin.
pub fn predictive_mixture(
    model: &FittedModel,
    spec: PredictiveSpec,
) -> Result<MixtureDistribution> {
    let t_len = model.filtered.nrows();
    if spec.origin >= t_len {
        return Err(Error::invalid(format!(
            "origin {} outside 0..{t_len}",
            spec.origin
        )));
    }
    let row = model.filtered.row(spec.origin).transpose();
    let w = predictive_weights(&row, &model.params.transition, spec.horizon)?;
    state_mixture(&model.params, w)
}

fn check_indices(idx: &[usize], dim: usize, what: &str) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::invalid(format!("{what} index set is empty")));
    }
    let mut seen = vec![false; dim];
    for &i in idx {
        if i >= dim {
            return Err(Error::invalid(format!("{what} index {i} outside 0..{dim}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid(format!("{what} index {i} repeated")));
        }
    }
    Ok(())
}

/// Marginal law of the coordinates in `keep` (in that order).
pub fn marginalize(mix: &MixtureDistribution, keep: &[usize]) -> Result<MixtureDistribution> {
    check_indices(keep, mix.dim(), "kept")?;
    let comps = mix
        .components()
        .iter()
        .map(|c| Component {
            mu: linalg::sub_vector(&c.mu, keep),
            sigma: linalg::sub_matrix(&c.sigma, keep, keep),
            nu: c.nu,
        })
        .collect();
    MixtureDistribution::new(mix.weights().clone(), comps, mix.family())
}

/// Law of the free coordinates (ascending order) given `Y_given = values`.
pub fn condition(
    mix: &MixtureDistribution,
    given: &[usize],
    values: &[f64],
    convention: DofConvention,
) -> Result<MixtureDistribution> {
    let d = mix.dim();
    check_indices(given, d, "conditioning")?;
    if values.len() != given.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} conditioning coordinates",
            values.len(),
            given.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("conditioning values must be finite"));
    }
    if given.len() == d {
        return Err(Error::invalid("cannot condition on every coordinate"));
    }
    let free: Vec<usize> = (0..d).filter(|j| !given.contains(j)).collect();
    let (p1, p2) = (free.len() as f64, given.len() as f64);
    let y2 = DVector::from_column_slice(values);

    let mut log_w = Vec::with_capacity(mix.len());
    let mut comps = Vec::with_capacity(mix.len());
    for (eta, c) in mix.weights().iter().zip(mix.components()) {
        let s22 = linalg::sub_matrix(&c.sigma, given, given);
        let s12 = linalg::sub_matrix(&c.sigma, &free, given);
        let s11 = linalg::sub_matrix(&c.sigma, &free, &free);
        let chol = linalg::cholesky(&s22, "Sigma_22")?;
        let mu2 = linalg::sub_vector(&c.mu, given);
        let resid = &y2 - &mu2;
        let gain = chol.solve(&s12.transpose()).transpose();
        let mu = linalg::sub_vector(&c.mu, &free) + &gain * &resid;
        let mut schur = s11 - &gain * s12.transpose();
        linalg::symmetrize(&mut schur);
        let m = linalg::mahalanobis(&chol, &y2, &mu2);
        let log_det = linalg::log_det(&chol);
        let (log_dens, comp) = match c.nu {
            None => (
                -p2 * LN_SQRT_2PI - 0.5 * log_det - 0.5 * m,
                Component::gaussian(mu, schur),
            ),
            Some(nu) => {
                let dof = match convention {
                    DofConvention::Paper => p1 + nu,
                    DofConvention::Standard => nu + p2,
                };
                (
                    mvt_log_kernel(given.len(), nu, log_det, m),
                    Component::student(mu, schur * ((nu + m) / dof), dof),
                )
            }
        };
        log_w.push(if *eta > 0.0 {
            eta.ln() + log_dens
        } else {
            f64::NEG_INFINITY
        });
        comps.push(comp);
    }
    let norm = linalg::log_sum_exp(&log_w);
    if !norm.is_finite() {
        return Err(Error::invalid(
            "conditioning values have zero density under every component",
        ));
    }
    let mut w = DVector::from_iterator(log_w.len(), log_w.iter().map(|v| (v - norm).exp()));
    w /= w.sum();
    MixtureDistribution::new(w, comps, mix.family())
}

/// Log density of a mixture at `x`.
pub fn mixture_logpdf(mix: &MixtureDistribution, x: &DVector<f64>) -> Result<f64> {
    if x.len() != mix.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point of length {} for dimension {}",
            x.len(),
            mix.dim()
        )));
    }
    let mut terms = Vec::with_capacity(mix.len());
    for (eta, c) in mix.weights().iter().zip(mix.components()) {
        let lf = match c.nu {
            None => crate::dist::mvn_logpdf(x, &c.mu, &c.sigma)?,
            Some(nu) => crate::dist::mvt_logpdf(x, &c.mu, &c.sigma, nu)?,
        };
        terms.push(if *eta > 0.0 {
            eta.ln() + lf
        } else {
            f64::NEG_INFINITY
        });
    }
    Ok(linalg::log_sum_exp(&terms))
}
