//! Exact Shapley attribution of a target's conditional tail risk to the
//! other institutions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::model::{ConditioningSpec, FittedModel};
use crate::risk::{mixture_at, PathOptions, RiskEvaluator, RiskMeasure};

/// Largest number of players the exact enumeration accepts.
pub const MAX_PLAYERS: usize = 20;
/// Largest game for which superadditivity is checked (3^n subset pairs).
pub const MAX_SUPERADDITIVITY_PLAYERS: usize = 12;

/// How the signed spillover measure maps to a subset value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueMode {
    /// `|Delta|`, so a deeper tail is a larger contribution.
    #[default]
    Absolute,
    Signed,
}

impl std::str::FromStr for ValueMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "absolute" | "abs" => Ok(ValueMode::Absolute),
            "signed" => Ok(ValueMode::Signed),
            other => Err(Error::invalid(format!(
                "unknown value mode '{other}' (expected absolute or signed)"
            ))),
        }
    }
}

/// Values of a cooperative game over every coalition of `players`.
///
/// `values[mask]` is the value of the coalition whose members are the players
/// at the set bit positions of `mask`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetValueTable {
    pub target: usize,
    pub players: Vec<usize>,
    pub values: Vec<f64>,
}

impl SubsetValueTable {
    pub fn new(target: usize, players: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let table = SubsetValueTable {
            target,
            players,
            values,
        };
        table.check()?;
        Ok(table)
    }

    /// Table over players `0..n` filled from a function of the coalition mask.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        if n > MAX_PLAYERS {
            return Err(Error::invalid(format!(
                "{n} players exceed the enumeration limit {MAX_PLAYERS}"
            )));
        }
        let values = (0..1usize << n)
            .map(|m| if m == 0 { 0.0 } else { f(m) })
            .collect();
        SubsetValueTable::new(usize::MAX, (0..n).collect(), values)
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    /// Value of the grand coalition.
    pub fn total(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn value(&self, mask: usize) -> f64 {
        self.values[mask]
    }

    pub fn check(&self) -> Result<()> {
        let n = self.players.len();
        if n == 0 || n > MAX_PLAYERS {
            return Err(Error::invalid(format!(
                "player count {n} outside 1..={MAX_PLAYERS}"
            )));
        }
        if self.values.len() != 1 << n {
            return Err(Error::IncompleteTable(format!(
                "{} values, expected {}",
                self.values.len(),
                1usize << n
            )));
        }
        if self.values[0] != 0.0 {
            return Err(Error::invalid("value of the empty coalition must be zero"));
        }
        if let Some(m) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "coalition {m:#b} has a non-finite value"
            )));
        }
        Ok(())
    }

    /// Pointwise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &SubsetValueTable, b: f64) -> Result<SubsetValueTable> {
        if self.players != other.players {
            return Err(Error::invalid("tables are over different players"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        SubsetValueTable::new(self.target, self.players.clone(), values)
    }
}

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for k in 1..=n {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

/// Shapley value of every player, in the order of `table.players`.
pub fn shapley_values(table: &SubsetValueTable) -> Result<Vec<f64>> {
    table.check()?;
    let n = table.n_players();
    let fact = factorials(n);
    let weight: Vec<f64> = (0..n)
        .map(|s| fact[s] * fact[n - s - 1] / fact[n])
        .collect();
    let full = (1usize << n) - 1;
    Ok((0..n)
        .map(|j| {
            let bit = 1usize << j;
            let mut terms: Vec<f64> = (0..=full)
                .filter(|m| m & bit == 0)
                .map(|m| {
                    weight[m.count_ones() as usize] * (table.values[m | bit] - table.values[m])
                })
                .collect();
            // a label-free summation order makes relabelled players get bit-identical shares
            terms.sort_unstable_by(f64::total_cmp);
            pairwise_sum(&terms)
        })
        .collect())
}

/// Spillover values `theta(H)` for every coalition `H` of the non-target assets.
///
/// Only [`RiskMeasure::DeltaMCoVaR`] and [`RiskMeasure::DeltaMCoES`] define a game.
pub fn build_value_table(
    evaluator: &RiskEvaluator<'_>,
    target: usize,
    measure: RiskMeasure,
    tau1: f64,
    tau2: f64,
    mode: ValueMode,
) -> Result<SubsetValueTable> {
    let p = evaluator.dim();
    let players: Vec<usize> = (0..p).filter(|&j| j != target).collect();
    let n = players.len();
    if n == 0 || n > MAX_PLAYERS {
        return Err(Error::invalid(format!(
            "{n} players outside 1..={MAX_PLAYERS}"
        )));
    }
    let grand = ConditioningSpec::new(target, players.clone(), tau1, tau2, p)?;
    // the median baseline does not depend on the coalition
    let baseline = match measure {
        RiskMeasure::DeltaMCoVaR => evaluator.mcovar_median(&grand)?,
        RiskMeasure::DeltaMCoES => evaluator.mcoes_median(&grand)?,
        other => {
            return Err(Error::invalid(format!(
                "{other} does not define a coalition value"
            )))
        }
    };
    let rest: Vec<f64> = (1..1usize << n)
        .into_par_iter()
        .map(|mask| {
            let distressed = (0..n)
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| players[b])
                .collect();
            let spec = ConditioningSpec {
                target,
                distressed,
                tau1,
                tau2,
            };
            let stressed = if measure == RiskMeasure::DeltaMCoVaR {
                evaluator.mcovar(&spec)?
            } else {
                evaluator.mcoes(&spec)?
            };
            let delta = stressed - baseline;
            Ok(match mode {
                ValueMode::Absolute => delta.abs(),
                ValueMode::Signed => delta,
            })
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(1 << n);
    values.push(0.0);
    values.extend(rest);
    SubsetValueTable::new(target, players, values)
}

/// Whether a game satisfies the usual cooperative requirements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GameProperties {
    /// Every player receives at least its stand-alone value.
    pub individually_rational: bool,
    /// `theta(A + B) >= theta(A) + theta(B)` for disjoint coalitions; `None`
    /// above [`MAX_SUPERADDITIVITY_PLAYERS`].
    pub superadditive: Option<bool>,
}

pub fn game_properties(table: &SubsetValueTable, shares: &[f64]) -> GameProperties {
    const TOL: f64 = 1e-12;
    let n = table.n_players();
    let scale = table
        .values
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1.0);
    let individually_rational = shares
        .iter()
        .enumerate()
        .all(|(j, s)| *s >= table.values[1 << j] - TOL * scale);
    let superadditive = (n <= MAX_SUPERADDITIVITY_PLAYERS).then(|| {
        let full = (1usize << n) - 1;
        (1..=full).all(|a| {
            let free = full & !a;
            // nonempty submasks b of the complement with b > a to visit each pair once
            let mut b = free;
            while b > 0 {
                if b > a && table.values[a | b] < table.values[a] + table.values[b] - TOL * scale {
                    return false;
                }
                b = (b - 1) & free;
            }
            true
        })
    });
    GameProperties {
        individually_rational,
        superadditive,
    }
}

/// Shares of one game together with the table they came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapleyReport {
    pub table: SubsetValueTable,
    pub shares: Vec<f64>,
    /// `100 * share_j / sum(shares)`; `NaN` when the shares sum to zero.
    pub share_pct: Vec<f64>,
    /// Grand-coalition value.
    pub total: f64,
    /// `sum(shares) - total`.
    pub efficiency_gap: f64,
    pub properties: GameProperties,
}

impl ShapleyReport {
    pub fn from_table(table: SubsetValueTable) -> Result<Self> {
        let shares = shapley_values(&table)?;
        let sum = pairwise_sum(&shares);
        let share_pct = shares
            .iter()
            .map(|s| {
                if sum != 0.0 {
                    100.0 * s / sum
                } else {
                    f64::NAN
                }
            })
            .collect();
        let total = table.total();
        let properties = game_properties(&table, &shares);
        Ok(ShapleyReport {
            shares,
            share_pct,
            total,
            efficiency_gap: sum - total,
            properties,
            table,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionOptions {
    pub target: usize,
    pub measure: RiskMeasure,
    pub tau1: f64,
    pub tau2: f64,
    pub mode: ValueMode,
    pub path: PathOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttributionPoint {
    pub t: usize,
    pub report: ShapleyReport,
}

#[derive(Clone, Debug, Default)]
pub struct AttributionPath {
    pub players: Vec<usize>,
    pub points: Vec<AttributionPoint>,
    pub gaps: Vec<(usize, String)>,
}

/// Shapley attribution at every time point of the fitted model.
pub fn attribution_path(model: &FittedModel, opts: &AttributionOptions) -> Result<AttributionPath> {
    let p = model.dim();
    if opts.target >= p {
        return Err(Error::invalid(format!(
            "target {} out of range for p = {p}",
            opts.target
        )));
    }
    let players: Vec<usize> = (0..p).filter(|&j| j != opts.target).collect();
    if players.is_empty() || players.len() > MAX_PLAYERS {
        return Err(Error::invalid(format!(
            "{} players outside 1..={MAX_PLAYERS}",
            players.len()
        )));
    }
    let results: Vec<(usize, Result<ShapleyReport>)> = (0..model.n_obs())
        .into_par_iter()
        .map(|t| {
            let r = mixture_at(model, t, &opts.path).and_then(|mix| {
                let ev = RiskEvaluator::new(&mix, opts.path.convention)?;
                let table = build_value_table(
                    &ev,
                    opts.target,
                    opts.measure,
                    opts.tau1,
                    opts.tau2,
                    opts.mode,
                )?;
                ShapleyReport::from_table(table)
            });
            (t, r)
        })
        .collect();
    let mut path = AttributionPath {
        players,
        ..AttributionPath::default()
    };
    for (t, r) in results {
        match r {
            Ok(report) => path.points.push(AttributionPoint { t, report }),
            Err(e) => path.gaps.push((t, e.to_string())),
        }
    }
    Ok(path)
}

/// Mean and sample variance of each player's share within one decoded state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateShareSummary {
    /// 1-based state label.
    pub state: usize,
    pub n_obs: usize,
    pub players: Vec<usize>,
    pub mean_share: Vec<Option<f64>>,
    pub var_share: Vec<Option<f64>>,
    pub mean_pct: Vec<Option<f64>>,
    pub var_pct: Vec<Option<f64>>,
}

fn mean_var(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    let xs: Vec<f64> = xs.iter().copied().filter(|v| v.is_finite()).collect();
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(&xs) / n;
    let var = (xs.len() > 1).then(|| {
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
        pairwise_sum(&sq) / (n - 1.0)
    });
    (Some(mean), var)
}

/// Groups the attribution path by the (0-based) decoded state of each time point.
pub fn summarize_by_state(
    path: &AttributionPath,
    states: &[usize],
    n_states: usize,
) -> Result<Vec<StateShareSummary>> {
    let n = path.players.len();
    let mut out = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let mut shares = vec![Vec::new(); n];
        let mut pct = vec![Vec::new(); n];
        let mut count = 0;
        for pt in &path.points {
            let Some(&state) = states.get(pt.t) else {
                return Err(Error::DimensionMismatch(format!(
                    "no decoded state for time {}",
                    pt.t
                )));
            };
            if state != s {
                continue;
            }
            count += 1;
            for j in 0..n {
                shares[j].push(pt.report.shares[j]);
                pct[j].push(pt.report.share_pct[j]);
            }
        }
        let (mean_share, var_share) = shares.iter().map(|v| mean_var(v)).unzip();
        let (mean_pct, var_pct) = pct.iter().map(|v| mean_var(v)).unzip();
        out.push(StateShareSummary {
            state: s + 1,
            n_obs: count,
            players: path.players.clone(),
            mean_share,
            var_share,
            mean_pct,
            var_pct,
        });
    }
    Ok(out)
}
