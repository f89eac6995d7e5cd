//! VaR, ES and the multiple conditional measures MCoVaR, MCoES, ΔᴹCoVaR and
//! ΔᴹCoES on predictive mixtures, plus their time paths.
//!
//! All quantiles are lower-tail: `P(Y <= VaR_tau) = tau`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::mixture::{self, cdf_unchecked, loc_scale};
use crate::dist::tce_mixture_uni;
use crate::error::{Error, Result};
use crate::model::{ConditioningSpec, FittedModel, MixtureDistribution};
use crate::predictive::{self, DofConvention, PredictiveSpec};

const BRACKET_SCALES: f64 = 6.0;
const CDF_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RiskMeasure {
    VaR,
    ES,
    MCoVaR,
    MCoES,
    DeltaMCoVaR,
    DeltaMCoES,
}

impl RiskMeasure {
    pub const ALL: [RiskMeasure; 6] = [
        RiskMeasure::VaR,
        RiskMeasure::ES,
        RiskMeasure::MCoVaR,
        RiskMeasure::MCoES,
        RiskMeasure::DeltaMCoVaR,
        RiskMeasure::DeltaMCoES,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RiskMeasure::VaR => "VaR",
            RiskMeasure::ES => "ES",
            RiskMeasure::MCoVaR => "MCoVaR",
            RiskMeasure::MCoES => "MCoES",
            RiskMeasure::DeltaMCoVaR => "DeltaMCoVaR",
            RiskMeasure::DeltaMCoES => "DeltaMCoES",
        }
    }

    /// Whether the measure needs a distressed set.
    pub fn is_conditional(self) -> bool {
        !matches!(self, RiskMeasure::VaR | RiskMeasure::ES)
    }
}

impl fmt::Display for RiskMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RiskMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', '-'], "");
        RiskMeasure::ALL
            .into_iter()
            .find(|m| m.label().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::invalid(format!("unknown risk measure '{s}'")))
    }
}

fn require_univariate(mix: &MixtureDistribution) -> Result<()> {
    if mix.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "expected a univariate mixture, got dimension {}",
            mix.dim()
        )));
    }
    Ok(())
}

/// `tau`-quantile of a univariate mixture.
///
/// The root is bracketed by the extreme component quantiles widened by six
/// scale units, then refined by secant steps safeguarded with bisection.
pub fn var_mixture(mix: &MixtureDistribution, tau: f64) -> Result<f64> {
    require_univariate(mix)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("level {tau} outside (0, 1)")));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut widest: f64 = 0.0;
    for (eta, c) in mix.weights().iter().zip(mix.components()) {
        if *eta == 0.0 {
            continue;
        }
        let (m, s) = loc_scale(c);
        let q = m + s * mixture::std_quantile(tau, c.nu);
        lo = lo.min(q);
        hi = hi.max(q);
        widest = widest.max(s);
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::RootFinding(format!(
            "no finite component quantile at level {tau}"
        )));
    }
    lo -= BRACKET_SCALES * widest;
    hi += BRACKET_SCALES * widest;
    let f = |x: f64| cdf_unchecked(mix, x) - tau;
    let (mut flo, mut fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::RootFinding(format!(
            "level {tau} not bracketed by [{lo}, {hi}]"
        )));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    let mut bisect_next = false;
    for _ in 0..400 {
        let width = hi - lo;
        let x = if bisect_next || fhi == flo {
            0.5 * (lo + hi)
        } else {
            let s = lo - flo * width / (fhi - flo);
            if s > lo && s < hi {
                s
            } else {
                0.5 * (lo + hi)
            }
        };
        let fx = f(x);
        if fx.abs() < CDF_TOL * 1e-2 || fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        bisect_next = hi - lo > 0.5 * width;
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let x = if flo.abs() <= fhi.abs() { lo } else { hi };
    if f(x).abs() < CDF_TOL {
        Ok(x)
    } else {
        Err(Error::RootFinding(format!(
            "quantile at level {tau} did not converge"
        )))
    }
}

/// Expected shortfall `E[Y | Y <= VaR_tau]` of a univariate mixture.
pub fn es_mixture(mix: &MixtureDistribution, tau: f64) -> Result<f64> {
    let q = var_mixture(mix, tau)?;
    tce_mixture_uni(mix, q)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Level {
    Quantile(u64),
    Shortfall(u64),
}

/// Evaluates marginal and conditional measures on one joint mixture,
/// caching the marginal VaR and ES levels that feed the conditioning values.
pub struct RiskEvaluator<'a> {
    mix: &'a MixtureDistribution,
    convention: DofConvention,
    marginals: Vec<MixtureDistribution>,
    cache: Mutex<HashMap<(usize, Level), f64>>,
}

impl<'a> RiskEvaluator<'a> {
    pub fn new(mix: &'a MixtureDistribution, convention: DofConvention) -> Result<Self> {
        let marginals = (0..mix.dim())
            .map(|j| predictive::marginalize(mix, &[j]))
            .collect::<Result<Vec<_>>>()?;
        Ok(RiskEvaluator {
            mix,
            convention,
            marginals,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn mixture(&self) -> &MixtureDistribution {
        self.mix
    }

    pub fn dim(&self) -> usize {
        self.mix.dim()
    }

    fn check_asset(&self, asset: usize) -> Result<()> {
        if asset >= self.dim() {
            return Err(Error::invalid(format!(
                "asset {asset} out of range for dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }

    fn cached(
        &self,
        asset: usize,
        level: Level,
        compute: impl FnOnce() -> Result<f64>,
    ) -> Result<f64> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&(asset, level)) {
            return Ok(*v);
        }
        let v = compute()?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert((asset, level), v);
        Ok(v)
    }

    /// Marginal VaR of `asset` at level `tau`.
    pub fn var(&self, asset: usize, tau: f64) -> Result<f64> {
        self.check_asset(asset)?;
        self.cached(asset, Level::Quantile(tau.to_bits()), || {
            var_mixture(&self.marginals[asset], tau)
        })
    }

    /// Marginal ES of `asset` at level `tau`.
    pub fn es(&self, asset: usize, tau: f64) -> Result<f64> {
        self.check_asset(asset)?;
        self.cached(asset, Level::Shortfall(tau.to_bits()), || {
            let q = self.var(asset, tau)?;
            tce_mixture_uni(&self.marginals[asset], q)
        })
    }

    /// Law of the target given every other asset pinned at a level chosen by `level_of`.
    fn conditional(
        &self,
        spec: &ConditioningSpec,
        level_of: impl Fn(usize) -> Result<f64>,
    ) -> Result<MixtureDistribution> {
        spec.check(self.dim())?;
        let given: Vec<usize> = (0..self.dim()).filter(|&j| j != spec.target).collect();
        let values = given
            .iter()
            .map(|&j| level_of(j))
            .collect::<Result<Vec<_>>>()?;
        predictive::condition(self.mix, &given, &values, self.convention)
    }

    fn stressed_var_law(&self, spec: &ConditioningSpec) -> Result<MixtureDistribution> {
        self.conditional(spec, |j| {
            let tau = if spec.distressed.contains(&j) {
                spec.tau2
            } else {
                ConditioningSpec::NORMAL_LEVEL
            };
            self.var(j, tau)
        })
    }

    fn median_var_law(&self, spec: &ConditioningSpec) -> Result<MixtureDistribution> {
        self.conditional(spec, |j| self.var(j, ConditioningSpec::NORMAL_LEVEL))
    }

    fn stressed_es_law(&self, spec: &ConditioningSpec) -> Result<MixtureDistribution> {
        self.conditional(spec, |j| {
            let tau = if spec.distressed.contains(&j) {
                spec.tau2
            } else {
                ConditioningSpec::NORMAL_LEVEL
            };
            self.es(j, tau)
        })
    }

    fn median_es_law(&self, spec: &ConditioningSpec) -> Result<MixtureDistribution> {
        self.conditional(spec, |j| self.es(j, ConditioningSpec::NORMAL_LEVEL))
    }

    /// `tau1`-quantile of the target given the distressed set at its `tau2`
    /// VaR levels and the rest at their medians.
    pub fn mcovar(&self, spec: &ConditioningSpec) -> Result<f64> {
        var_mixture(&self.stressed_var_law(spec)?, spec.tau1)
    }

    /// Expected shortfall of the target below its own conditional `tau1`-quantile,
    /// given the distressed set at its `tau2` ES levels and the rest at their ES
    /// at level one half.
    pub fn mcoes(&self, spec: &ConditioningSpec) -> Result<f64> {
        es_mixture(&self.stressed_es_law(spec)?, spec.tau1)
    }

    /// MCoVaR with every other asset at its median.
    pub fn mcovar_median(&self, spec: &ConditioningSpec) -> Result<f64> {
        var_mixture(&self.median_var_law(spec)?, spec.tau1)
    }

    /// MCoES with every other asset at its ES of level one half.
    pub fn mcoes_median(&self, spec: &ConditioningSpec) -> Result<f64> {
        es_mixture(&self.median_es_law(spec)?, spec.tau1)
    }

    pub fn delta_mcovar(&self, spec: &ConditioningSpec) -> Result<f64> {
        Ok(self.mcovar(spec)? - self.mcovar_median(spec)?)
    }

    pub fn delta_mcoes(&self, spec: &ConditioningSpec) -> Result<f64> {
        Ok(self.mcoes(spec)? - self.mcoes_median(spec)?)
    }

    /// Any measure; VaR and ES use `spec.target` at level `spec.tau1`.
    pub fn evaluate(&self, measure: RiskMeasure, spec: &ConditioningSpec) -> Result<f64> {
        match measure {
            RiskMeasure::VaR => self.var(spec.target, spec.tau1),
            RiskMeasure::ES => self.es(spec.target, spec.tau1),
            RiskMeasure::MCoVaR => self.mcovar(spec),
            RiskMeasure::MCoES => self.mcoes(spec),
            RiskMeasure::DeltaMCoVaR => self.delta_mcovar(spec),
            RiskMeasure::DeltaMCoES => self.delta_mcoes(spec),
        }
    }
}

pub fn mcovar(
    mix: &MixtureDistribution,
    spec: &ConditioningSpec,
    convention: DofConvention,
) -> Result<f64> {
    RiskEvaluator::new(mix, convention)?.mcovar(spec)
}

pub fn mcoes(
    mix: &MixtureDistribution,
    spec: &ConditioningSpec,
    convention: DofConvention,
) -> Result<f64> {
    RiskEvaluator::new(mix, convention)?.mcoes(spec)
}

pub fn delta_mcovar(
    mix: &MixtureDistribution,
    spec: &ConditioningSpec,
    convention: DofConvention,
) -> Result<f64> {
    RiskEvaluator::new(mix, convention)?.delta_mcovar(spec)
}

pub fn delta_mcoes(
    mix: &MixtureDistribution,
    spec: &ConditioningSpec,
    convention: DofConvention,
) -> Result<f64> {
    RiskEvaluator::new(mix, convention)?.delta_mcoes(spec)
}

/// Which state probabilities drive the predictive weights along a path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbabilitySource {
    #[default]
    Filtered,
    Smoothed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathOptions {
    pub horizon: usize,
    pub source: ProbabilitySource,
    pub convention: DofConvention,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            horizon: 1,
            source: ProbabilitySource::Filtered,
            convention: DofConvention::Paper,
        }
    }
}

/// Predictive mixture at row `t` of the chosen probabilities.
pub fn mixture_at(
    model: &FittedModel,
    t: usize,
    opts: &PathOptions,
) -> Result<MixtureDistribution> {
    match opts.source {
        ProbabilitySource::Filtered => {
            predictive::predictive_mixture(model, PredictiveSpec::new(t, opts.horizon))
        }
        ProbabilitySource::Smoothed => {
            if t >= model.smoothed.nrows() {
                return Err(Error::invalid(format!("time index {t} out of range")));
            }
            let row = model.smoothed.row(t).transpose();
            let w = predictive::predictive_weights(&row, &model.params.transition, opts.horizon)?;
            predictive::state_mixture(&model.params, w)
        }
    }
}

/// One evaluated measure at one time point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskPoint {
    pub t: usize,
    pub asset: usize,
    pub measure: RiskMeasure,
    pub value: f64,
    pub spec: Option<ConditioningSpec>,
}

/// A time path of one measure; failed time points are kept as gaps.
#[derive(Clone, Debug, Default)]
pub struct RiskPath {
    pub points: Vec<RiskPoint>,
    pub gaps: Vec<(usize, String)>,
}

/// Evaluates `measure` at every time point of the fitted model.
pub fn risk_path(
    model: &FittedModel,
    measure: RiskMeasure,
    spec: &ConditioningSpec,
    opts: &PathOptions,
) -> Result<RiskPath> {
    if measure.is_conditional() {
        spec.check(model.dim())?;
    } else if spec.target >= model.dim() {
        return Err(Error::invalid(format!(
            "asset {} out of range for dimension {}",
            spec.target,
            model.dim()
        )));
    }
    let results: Vec<(usize, Result<f64>)> = (0..model.n_obs())
        .into_par_iter()
        .map(|t| {
            let v = mixture_at(model, t, opts)
                .and_then(|mix| RiskEvaluator::new(&mix, opts.convention)?.evaluate(measure, spec));
            (t, v)
        })
        .collect();
    let mut path = RiskPath::default();
    for (t, r) in results {
        match r {
            Ok(value) if value.is_finite() => path.points.push(RiskPoint {
                t,
                asset: spec.target,
                measure,
                value,
                spec: measure.is_conditional().then(|| spec.clone()),
            }),
            Ok(value) => path.gaps.push((t, format!("non-finite value {value}"))),
            Err(e) => path.gaps.push((t, e.to_string())),
        }
    }
    Ok(path)
}
