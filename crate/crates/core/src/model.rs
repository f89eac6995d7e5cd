//! Domain types shared across the crate.
//!
//! Every constructor validates the structural invariants of its type, so a
//! value that exists is safe to hand to any downstream operation.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::serde_util;

/// Admissible range for Student-t degrees of freedom.
pub const NU_MIN: f64 = 2.1;
pub const NU_MAX: f64 = 200.0;

const PROB_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    Gaussian,
    StudentT,
}

impl ModelFamily {
    pub fn is_student(self) -> bool {
        matches!(self, ModelFamily::StudentT)
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelFamily::Gaussian => "gaussian",
            ModelFamily::StudentT => "t",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" | "mvn" => Ok(ModelFamily::Gaussian),
            "t" | "student" | "studentt" | "student_t" | "mvt" => Ok(ModelFamily::StudentT),
            other => Err(Error::invalid(format!("unknown family '{other}'"))),
        }
    }
}

/// A `T x p` panel of asset returns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    timestamps: Vec<String>,
    assets: Vec<String>,
    #[serde(with = "serde_util::matrix")]
    values: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(timestamps: Vec<String>, assets: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        let (t, p) = values.shape();
        if t < 2 || p < 1 {
            return Err(Error::Data(format!(
                "panel must have T >= 2 and p >= 1, got {t}x{p}"
            )));
        }
        if timestamps.len() != t || assets.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "{} timestamps and {} assets for a {t}x{p} panel",
                timestamps.len(),
                assets.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Data(format!(
                "timestamps not strictly increasing at row {} ({} >= {})",
                w + 1,
                timestamps[w],
                timestamps[w + 1]
            )));
        }
        for (i, a) in assets.iter().enumerate() {
            if assets[..i].contains(a) {
                return Err(Error::Data(format!("duplicate asset label '{a}'")));
            }
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            // column-major storage
            return Err(Error::Data(format!(
                "missing or non-finite value at row {}, column {}",
                k % t + 1,
                k / t + 1
            )));
        }
        Ok(ReturnPanel {
            timestamps,
            assets,
            values,
        })
    }

    /// Panel with synthetic weekly ISO dates starting 2000-01-03. Panels too
    /// long for weekly dates before year 10000 get one-second timestamps instead.
    pub fn with_default_dates(values: DMatrix<f64>) -> Result<Self> {
        let t = values.nrows();
        let p = values.ncols();
        let start = chrono::NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
        let weekly_fits = t <= 400_000;
        let timestamps = (0..t as i64)
            .map(|i| {
                if weekly_fits {
                    (start + chrono::Duration::weeks(i))
                        .format("%Y-%m-%d")
                        .to_string()
                } else {
                    (start.and_hms_opt(0, 0, 0).expect("valid time") + chrono::Duration::seconds(i))
                        .format("%Y-%m-%dT%H:%M:%S")
                        .to_string()
                }
            })
            .collect();
        let assets = (1..=p).map(|j| format!("Y{j}")).collect();
        ReturnPanel::new(timestamps, assets, values)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }

    pub fn rows(&self) -> Vec<DVector<f64>> {
        (0..self.len()).map(|t| self.row(t)).collect()
    }

    pub fn asset_index(&self, name: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == name)
    }
}

/// Full parameter set of an `L`-state Markov-switching model.
///
/// `nu` is present exactly when the emission family is Student-t.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsmParams {
    #[serde(rename = "L")]
    pub n_states: usize,
    #[serde(with = "serde_util::vector")]
    pub delta: DVector<f64>,
    #[serde(rename = "Q", with = "serde_util::matrix")]
    pub transition: DMatrix<f64>,
    #[serde(with = "serde_util::vectors")]
    pub mu: Vec<DVector<f64>>,
    #[serde(rename = "Sigma", with = "serde_util::matrices")]
    pub sigma: Vec<DMatrix<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
}

/// A single failed invariant reported by [`MsmParams::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl MsmParams {
    /// Builds and validates a parameter set.
    pub fn new(
        delta: DVector<f64>,
        transition: DMatrix<f64>,
        mu: Vec<DVector<f64>>,
        sigma: Vec<DMatrix<f64>>,
        nu: Option<Vec<f64>>,
    ) -> Result<Self> {
        let params = MsmParams {
            n_states: delta.len(),
            delta,
            transition,
            mu,
            sigma,
            nu,
        };
        params.ensure_valid()?;
        Ok(params)
    }

    pub fn family(&self) -> ModelFamily {
        if self.nu.is_some() {
            ModelFamily::StudentT
        } else {
            ModelFamily::Gaussian
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.first().map_or(0, |m| m.len())
    }

    pub fn nu_of(&self, state: usize) -> Option<f64> {
        self.nu.as_ref().map(|v| v[state])
    }

    pub fn n_params(&self) -> usize {
        n_params(self.n_states, self.dim(), self.family())
    }

    /// `Sigma_l = Lambda Omega Lambda`: per-asset scales and the implied correlation matrix.
    pub fn scale_correlation(&self, state: usize) -> (DVector<f64>, DMatrix<f64>) {
        linalg::scale_and_correlation(&self.sigma[state])
    }

    /// Every invariant that does not hold. Empty iff the parameters are valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: String| {
            out.push(Violation {
                field: field.to_string(),
                message,
            })
        };
        let l = self.n_states;
        if l == 0 {
            bad("L", "must be at least 1".into());
        }
        if self.delta.len() != l {
            bad(
                "delta",
                format!("has length {} but L = {l}", self.delta.len()),
            );
        } else {
            if self.delta.iter().any(|&d| !(d >= 0.0)) {
                bad("delta", "has negative or non-finite entries".into());
            }
            let s: f64 = self.delta.iter().sum();
            if (s - 1.0).abs() > PROB_TOL {
                bad("delta", format!("delta sums to {s}"));
            }
        }
        if self.transition.shape() != (l, l) {
            bad(
                "Q",
                format!("has shape {:?} but L = {l}", self.transition.shape()),
            );
        } else {
            for r in 0..l {
                let row = self.transition.row(r);
                if row.iter().any(|&q| !(q >= 0.0)) {
                    bad(
                        "Q",
                        format!("row {} has negative or non-finite entries", r + 1),
                    );
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > PROB_TOL {
                    bad("Q", format!("row {} sums to {s}", r + 1));
                }
            }
        }
        let p = self.dim();
        if p == 0 {
            bad("mu", "dimension p must be at least 1".into());
        }
        if self.mu.len() != l {
            bad(
                "mu",
                format!("has {} state vectors but L = {l}", self.mu.len()),
            );
        }
        for (k, m) in self.mu.iter().enumerate() {
            if m.len() != p {
                bad(
                    "mu",
                    format!("mu_{} has length {} but p = {p}", k + 1, m.len()),
                );
            } else if m.iter().any(|v| !v.is_finite()) {
                bad("mu", format!("mu_{} has non-finite entries", k + 1));
            }
        }
        if self.sigma.len() != l {
            bad(
                "Sigma",
                format!("has {} state matrices but L = {l}", self.sigma.len()),
            );
        }
        for (k, s) in self.sigma.iter().enumerate() {
            let name = format!("Sigma_{}", k + 1);
            if s.shape() != (p, p) {
                bad(
                    "Sigma",
                    format!("{name} has shape {:?} but p = {p}", s.shape()),
                );
                continue;
            }
            if s.iter().any(|v| !v.is_finite()) {
                bad("Sigma", format!("{name} has non-finite entries"));
                continue;
            }
            let asym = linalg::max_asymmetry(s);
            if asym > SYMMETRY_TOL {
                bad(
                    "Sigma",
                    format!("{name} not symmetric (max asymmetry {asym:e})"),
                );
            }
            let eig = SymmetricEigen::new(s.clone());
            let min = eig
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if !(min > 0.0) {
                bad(
                    "Sigma",
                    format!("{name} not PD (smallest eigenvalue {min:e})"),
                );
            }
        }
        if let Some(nu) = &self.nu {
            if nu.len() != l {
                bad("nu", format!("has length {} but L = {l}", nu.len()));
            }
            for (k, &v) in nu.iter().enumerate() {
                if !(NU_MIN..=NU_MAX).contains(&v) {
                    bad(
                        "nu",
                        format!("nu_{} = {v} outside [{NU_MIN}, {NU_MAX}]", k + 1),
                    );
                }
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            Err(Error::InvalidArgument(format!(
                "invalid parameters: {}",
                msgs.join("; ")
            )))
        }
    }

    /// Relabels states so that new state `k` is old state `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> MsmParams {
        let l = self.n_states;
        MsmParams {
            n_states: l,
            delta: DVector::from_fn(l, |k, _| self.delta[order[k]]),
            transition: DMatrix::from_fn(l, l, |i, j| self.transition[(order[i], order[j])]),
            mu: order.iter().map(|&k| self.mu[k].clone()).collect(),
            sigma: order.iter().map(|&k| self.sigma[k].clone()).collect(),
            nu: self
                .nu
                .as_ref()
                .map(|nu| order.iter().map(|&k| nu[k]).collect()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: MsmParams = serde_json::from_str(s)?;
        p.ensure_valid()?;
        Ok(p)
    }
}

/// Number of free parameters of an `L`-state model in dimension `p`.
pub fn n_params(l: usize, p: usize, family: ModelFamily) -> usize {
    l * p + l * p * (p + 1) / 2 + l * (l - 1) + (l - 1) + if family.is_student() { l } else { 0 }
}

/// One component of a mixture: location, covariance/scale and optional dof.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    #[serde(with = "serde_util::vector")]
    pub mu: DVector<f64>,
    #[serde(rename = "Sigma", with = "serde_util::matrix")]
    pub sigma: DMatrix<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl Component {
    pub fn gaussian(mu: DVector<f64>, sigma: DMatrix<f64>) -> Self {
        Component {
            mu,
            sigma,
            nu: None,
        }
    }

    pub fn student(mu: DVector<f64>, sigma: DMatrix<f64>, nu: f64) -> Self {
        Component {
            mu,
            sigma,
            nu: Some(nu),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Finite mixture of Gaussian or Student-t laws of a common dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureDistribution {
    dim: usize,
    #[serde(with = "serde_util::vector")]
    weights: DVector<f64>,
    components: Vec<Component>,
    family: ModelFamily,
}

impl MixtureDistribution {
    pub fn new(
        weights: DVector<f64>,
        components: Vec<Component>,
        family: ModelFamily,
    ) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::invalid("mixture weights must be non-negative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > PROB_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {s}")));
        }
        let dim = components[0].dim();
        if dim == 0 {
            return Err(Error::invalid("mixture dimension must be at least 1"));
        }
        for (k, c) in components.iter().enumerate() {
            if c.dim() != dim || c.sigma.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!(
                    "component {} has wrong dimension",
                    k + 1
                )));
            }
            match (family, c.nu) {
                (ModelFamily::Gaussian, None) => {}
                (ModelFamily::StudentT, Some(nu)) if nu > 0.0 && nu.is_finite() => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "component {} does not match the {family} family",
                        k + 1
                    )))
                }
            }
        }
        Ok(MixtureDistribution {
            dim,
            weights,
            components,
            family,
        })
    }

    /// Single-component mixture.
    pub fn single(c: Component) -> Result<Self> {
        let family = if c.nu.is_some() {
            ModelFamily::StudentT
        } else {
            ModelFamily::Gaussian
        };
        MixtureDistribution::new(DVector::from_element(1, 1.0), vec![c], family)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    /// Shifts the location of coordinate `coord` in every component by `c`.
    pub fn shifted(&self, coord: usize, c: f64) -> MixtureDistribution {
        let mut out = self.clone();
        for comp in &mut out.components {
            comp.mu[coord] += c;
        }
        out
    }
}

/// A fitted model together with its smoothing output and information criteria.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub params: MsmParams,
    pub family: ModelFamily,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
    #[serde(with = "serde_util::matrix")]
    pub filtered: DMatrix<f64>,
    #[serde(with = "serde_util::matrix")]
    pub smoothed: DMatrix<f64>,
    #[serde(with = "serde_util::matrices")]
    pub smoothed_pairs: Vec<DMatrix<f64>>,
    #[serde(
        default,
        with = "serde_util::opt_matrix",
        skip_serializing_if = "Option::is_none"
    )]
    pub w_hat: Option<DMatrix<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub restart_logliks: Vec<Option<f64>>,
}

impl FittedModel {
    pub fn n_obs(&self) -> usize {
        self.filtered.nrows()
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: FittedModel = serde_json::from_str(s)?;
        m.params.ensure_valid()?;
        if m.params.family() != m.family {
            return Err(Error::invalid("family does not match the presence of nu"));
        }
        Ok(m)
    }
}

pub fn aic(loglik: f64, n_params: usize) -> f64 {
    -2.0 * loglik + 2.0 * n_params as f64
}

pub fn bic(loglik: f64, n_params: usize, n_obs: usize) -> f64 {
    -2.0 * loglik + n_params as f64 * (n_obs as f64).ln()
}

/// Which institutions are distressed when evaluating a conditional risk measure.
///
/// Indices are 0-based asset positions. Every asset other than the target and
/// the distressed set is held at its normal (median) level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditioningSpec {
    pub target: usize,
    pub distressed: Vec<usize>,
    pub tau1: f64,
    pub tau2: f64,
}

impl ConditioningSpec {
    /// Level at which non-distressed institutions are held.
    pub const NORMAL_LEVEL: f64 = 0.5;

    pub fn new(
        target: usize,
        distressed: Vec<usize>,
        tau1: f64,
        tau2: f64,
        p: usize,
    ) -> Result<Self> {
        let spec = ConditioningSpec {
            target,
            distressed,
            tau1,
            tau2,
        };
        spec.check(p)?;
        Ok(spec)
    }

    pub fn check(&self, p: usize) -> Result<()> {
        if self.target >= p {
            return Err(Error::invalid(format!(
                "target {} out of range for p = {p}",
                self.target
            )));
        }
        if self.distressed.is_empty() {
            return Err(Error::invalid("distressed set must be nonempty"));
        }
        for (k, &j) in self.distressed.iter().enumerate() {
            if j >= p || j == self.target {
                return Err(Error::invalid(format!("invalid distressed index {j}")));
            }
            if self.distressed[..k].contains(&j) {
                return Err(Error::invalid(format!("duplicate distressed index {j}")));
            }
        }
        for tau in [self.tau1, self.tau2] {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::invalid(format!("level {tau} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// Assets held at the normal level: everything except target and distressed.
    pub fn normal_set(&self, p: usize) -> Vec<usize> {
        (0..p)
            .filter(|&j| j != self.target && !self.distressed.contains(&j))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state() -> MsmParams {
        MsmParams {
            n_states: 1,
            delta: DVector::from_vec(vec![1.0]),
            transition: DMatrix::from_element(1, 1, 1.0),
            mu: vec![DVector::zeros(2)],
            sigma: vec![DMatrix::identity(2, 2)],
            nu: None,
        }
    }

    #[test]
    fn single_state_is_valid() {
        assert!(one_state().validate().is_empty());
    }

    #[test]
    fn delta_sum_violation_is_reported() {
        let mut p = one_state();
        p.n_states = 2;
        p.delta = DVector::from_vec(vec![0.6, 0.6]);
        p.transition = DMatrix::identity(2, 2);
        p.mu = vec![DVector::zeros(2); 2];
        p.sigma = vec![DMatrix::identity(2, 2); 2];
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "delta");
        assert_eq!(v[0].message, "delta sums to 1.2");
    }

    #[test]
    fn indefinite_sigma_is_reported() {
        // eigenvalues 1 +- 1.001 -> smallest is -1e-3
        let mut p = one_state();
        p.sigma[0] = DMatrix::from_row_slice(2, 2, &[1.0, 1.001, 1.001, 1.0]);
        let eig = SymmetricEigen::new(p.sigma[0].clone());
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!((min + 1e-3).abs() < 1e-12);
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].message.starts_with("Sigma_1 not PD"), "{}", v[0]);
    }

    #[test]
    fn nu_bounds_enforced() {
        let mut p = one_state();
        p.nu = Some(vec![2.0]);
        assert_eq!(p.validate().len(), 1);
        p.nu = Some(vec![2.1]);
        assert!(p.validate().is_empty());
        p.nu = Some(vec![200.5]);
        assert_eq!(p.validate()[0].field, "nu");
    }

    #[test]
    fn parameter_count() {
        // L p + L p(p+1)/2 + L(L-1) + (L-1) (+ L for t)
        assert_eq!(n_params(1, 1, ModelFamily::Gaussian), 2);
        assert_eq!(n_params(2, 3, ModelFamily::Gaussian), 6 + 12 + 2 + 1);
        assert_eq!(n_params(2, 3, ModelFamily::StudentT), 23);
    }

    #[test]
    fn json_roundtrip_is_byte_identical() {
        let mut p = one_state();
        p.mu[0] = DVector::from_vec(vec![0.1 + 0.2, -1.0 / 3.0]);
        p.sigma[0] = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        p.nu = Some(vec![7.123456789012345]);
        let a = p.to_json().unwrap();
        let b = MsmParams::from_json(&a).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"Sigma\"") && a.contains("\"Q\"") && a.contains("\"L\""));
    }

    #[test]
    fn panel_rejects_bad_input() {
        let v = DMatrix::from_row_slice(3, 1, &[0.1, 0.2, 0.3]);
        let ts = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(ReturnPanel::new(ts(&["a", "b", "c"]), ts(&["X"]), v.clone()).is_ok());
        assert!(ReturnPanel::new(ts(&["a", "c", "b"]), ts(&["X"]), v.clone()).is_err());
        let mut nan = v.clone();
        nan[(1, 0)] = f64::NAN;
        let err = ReturnPanel::new(ts(&["a", "b", "c"]), ts(&["X"]), nan).unwrap_err();
        assert!(err.to_string().contains("row 2, column 1"));
        let two = DMatrix::from_row_slice(3, 2, &[0.0; 6]);
        assert!(ReturnPanel::new(ts(&["a", "b", "c"]), ts(&["X", "X"]), two).is_err());
    }

    #[test]
    fn conditioning_spec_checks() {
        assert!(ConditioningSpec::new(0, vec![1], 0.05, 0.05, 3).is_ok());
        assert!(ConditioningSpec::new(0, vec![0], 0.05, 0.05, 3).is_err());
        assert!(ConditioningSpec::new(0, vec![], 0.05, 0.05, 3).is_err());
        assert!(ConditioningSpec::new(0, vec![1, 1], 0.05, 0.05, 3).is_err());
        assert!(ConditioningSpec::new(0, vec![1], 0.0, 0.05, 3).is_err());
        let s = ConditioningSpec::new(1, vec![3], 0.05, 0.05, 4).unwrap();
        assert_eq!(s.normal_set(4), vec![0, 2]);
    }
}
