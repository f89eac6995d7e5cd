//! Log-domain forward filtering, backward smoothing and Viterbi decoding.

use nalgebra::DMatrix;

use crate::dist::normal::LN_SQRT_2PI;
use crate::dist::student::mvt_log_kernel;
use crate::error::{Error, Result};
use crate::inference::SufficientStats;
use crate::linalg::{self, log_sum_exp};
use crate::model::{MsmParams, ReturnPanel};

/// Per-observation log densities and Mahalanobis distances, both `T x L`.
pub(crate) struct Emissions {
    pub log_density: DMatrix<f64>,
    pub mahalanobis: DMatrix<f64>,
}

fn check_inputs(panel: &ReturnPanel, params: &MsmParams) -> Result<()> {
    params.ensure_valid()?;
    if panel.dim() != params.dim() {
        return Err(Error::DimensionMismatch(format!(
            "panel has {} assets, parameters have dimension {}",
            panel.dim(),
            params.dim()
        )));
    }
    Ok(())
}

pub(crate) fn emissions(panel: &ReturnPanel, params: &MsmParams) -> Result<Emissions> {
    let (t_len, l_len, p) = (panel.len(), params.n_states, params.dim());
    let mut log_density = DMatrix::zeros(t_len, l_len);
    let mut mahalanobis = DMatrix::zeros(t_len, l_len);
    let rows = panel.rows();
    for l in 0..l_len {
        let chol =
            linalg::cholesky(&params.sigma[l], &format!("Sigma_{}", l + 1)).map_err(|e| {
                Error::NumericalFailure {
                    t: 1,
                    state: l + 1,
                    reason: e.to_string(),
                }
            })?;
        let log_det = linalg::log_det(&chol);
        for (t, y) in rows.iter().enumerate() {
            let m = linalg::mahalanobis(&chol, y, &params.mu[l]);
            let lf = match params.nu_of(l) {
                None => -(p as f64) * LN_SQRT_2PI - 0.5 * log_det - 0.5 * m,
                Some(nu) => mvt_log_kernel(p, nu, log_det, m),
            };
            if !lf.is_finite() {
                return Err(Error::NumericalFailure {
                    t: t + 1,
                    state: l + 1,
                    reason: format!("log density is {lf}"),
                });
            }
            log_density[(t, l)] = lf;
            mahalanobis[(t, l)] = m;
        }
    }
    Ok(Emissions {
        log_density,
        mahalanobis,
    })
}

fn ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Forward pass: per-step log normalisers and filtered probabilities.
fn forward(params: &MsmParams, em: &Emissions) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (t_len, l_len) = em.log_density.shape();
    let log_q = params.transition.map(ln);
    let mut filtered = DMatrix::zeros(t_len, l_len);
    let mut log_c = Vec::with_capacity(t_len);
    let mut log_prev: Vec<f64> = Vec::new();
    let mut log_a = vec![0.0; l_len];
    let mut terms = vec![0.0; l_len];
    for t in 0..t_len {
        for k in 0..l_len {
            let prior = if t == 0 {
                ln(params.delta[k])
            } else {
                for l in 0..l_len {
                    terms[l] = log_prev[l] + log_q[(l, k)];
                }
                log_sum_exp(&terms)
            };
            log_a[k] = prior + em.log_density[(t, k)];
        }
        let c = log_sum_exp(&log_a);
        if !c.is_finite() {
            let state = (0..l_len)
                .max_by(|&a, &b| em.log_density[(t, a)].total_cmp(&em.log_density[(t, b)]))
                .unwrap_or(0);
            return Err(Error::NumericalFailure {
                t: t + 1,
                state: state + 1,
                reason: "observation has zero probability under every reachable state".into(),
            });
        }
        log_c.push(c);
        let normalised: Vec<f64> = log_a.iter().map(|v| v - c).collect();
        for k in 0..l_len {
            filtered[(t, k)] = normalised[k].exp();
        }
        log_prev = normalised;
    }
    Ok((log_c, filtered))
}

/// Log-likelihood and filtered probabilities `P(S_t | y_1..y_t)`.
pub fn forward_loglik(panel: &ReturnPanel, params: &MsmParams) -> Result<(f64, DMatrix<f64>)> {
    check_inputs(panel, params)?;
    let em = emissions(panel, params)?;
    let (log_c, filtered) = forward(params, &em)?;
    Ok((linalg::pairwise_sum(&log_c), filtered))
}

fn normalise_row(m: &mut DMatrix<f64>, t: usize) {
    let s: f64 = m.row(t).iter().sum();
    if s > 0.0 {
        for v in m.row_mut(t).iter_mut() {
            *v /= s;
        }
    }
}

/// Smoothed and pairwise state probabilities plus the expected scale weights.
pub fn e_step(panel: &ReturnPanel, params: &MsmParams) -> Result<SufficientStats> {
    check_inputs(panel, params)?;
    let em = emissions(panel, params)?;
    e_step_with(params, &em)
}

pub(crate) fn e_step_with(params: &MsmParams, em: &Emissions) -> Result<SufficientStats> {
    let (t_len, l_len) = em.log_density.shape();
    let (log_c, filtered) = forward(params, em)?;
    let log_q = params.transition.map(ln);
    let log_filtered = filtered.map(ln);

    // log beta_t(l), scaled by the forward normalisers
    let mut log_beta = DMatrix::zeros(t_len, l_len);
    let mut terms = vec![0.0; l_len];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for l in 0..l_len {
            for k in 0..l_len {
                terms[k] = log_q[(l, k)] + em.log_density[(t + 1, k)] + log_beta[(t + 1, k)];
            }
            log_beta[(t, l)] = log_sum_exp(&terms) - log_c[t + 1];
        }
    }

    let mut zhat = DMatrix::zeros(t_len, l_len);
    for t in 0..t_len {
        for l in 0..l_len {
            zhat[(t, l)] = (log_filtered[(t, l)] + log_beta[(t, l)]).exp();
        }
        normalise_row(&mut zhat, t);
    }

    let mut zzhat = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 0..t_len.saturating_sub(1) {
        let mut xi = DMatrix::zeros(l_len, l_len);
        for l in 0..l_len {
            for k in 0..l_len {
                let v = log_filtered[(t, l)]
                    + log_q[(l, k)]
                    + em.log_density[(t + 1, k)]
                    + log_beta[(t + 1, k)]
                    - log_c[t + 1];
                xi[(l, k)] = v.exp();
            }
        }
        let s = xi.sum();
        if s > 0.0 {
            xi /= s;
        }
        zzhat.push(xi);
    }

    let p = params.dim() as f64;
    let what = match &params.nu {
        None => DMatrix::from_element(t_len, l_len, 1.0),
        Some(nu) => DMatrix::from_fn(t_len, l_len, |t, l| {
            (nu[l] + p) / (nu[l] + em.mahalanobis[(t, l)])
        }),
    };

    Ok(SufficientStats {
        zhat,
        zzhat,
        what,
        mahalanobis: em.mahalanobis.clone(),
        filtered,
        loglik: linalg::pairwise_sum(&log_c),
    })
}

/// Joint log-probability of `path` and the observations.
pub fn path_log_prob(panel: &ReturnPanel, params: &MsmParams, path: &[usize]) -> Result<f64> {
    check_inputs(panel, params)?;
    if path.len() != panel.len() || path.iter().any(|&s| s >= params.n_states) {
        return Err(Error::DimensionMismatch(
            "state path does not match the panel".into(),
        ));
    }
    let em = emissions(panel, params)?;
    let mut acc = ln(params.delta[path[0]]) + em.log_density[(0, path[0])];
    for t in 1..path.len() {
        acc += ln(params.transition[(path[t - 1], path[t])]) + em.log_density[(t, path[t])];
    }
    Ok(acc)
}

/// Most probable state path (0-based), ties resolved toward the lower state index.
pub fn viterbi(panel: &ReturnPanel, params: &MsmParams) -> Result<Vec<usize>> {
    check_inputs(panel, params)?;
    let em = emissions(panel, params)?;
    let (t_len, l_len) = em.log_density.shape();
    let log_q = params.transition.map(ln);
    let mut score: Vec<f64> = (0..l_len)
        .map(|k| ln(params.delta[k]) + em.log_density[(0, k)])
        .collect();
    let mut back = vec![vec![0usize; l_len]; t_len];
    let mut next = vec![0.0; l_len];
    for t in 1..t_len {
        for k in 0..l_len {
            let mut best = 0;
            let mut best_v = score[0] + log_q[(0, k)];
            for l in 1..l_len {
                let v = score[l] + log_q[(l, k)];
                if v > best_v {
                    best = l;
                    best_v = v;
                }
            }
            back[t][k] = best;
            next[k] = best_v + em.log_density[(t, k)];
        }
        std::mem::swap(&mut score, &mut next);
    }
    let mut last = 0;
    for k in 1..l_len {
        if score[k] > score[last] {
            last = k;
        }
    }
    if score[last] == f64::NEG_INFINITY {
        return Err(Error::NumericalFailure {
            t: t_len,
            state: last + 1,
            reason: "every path has zero probability".into(),
        });
    }
    let mut path = vec![0; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn params(delta: [f64; 2], q: [f64; 4]) -> MsmParams {
        MsmParams::new(
            DVector::from_row_slice(&delta),
            DMatrix::from_row_slice(2, 2, &q),
            vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![1.0])],
            vec![
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 4.0),
            ],
            None,
        )
        .unwrap()
    }

    fn panel(v: &[f64]) -> ReturnPanel {
        ReturnPanel::with_default_dates(DMatrix::from_column_slice(v.len(), 1, v)).unwrap()
    }

    #[test]
    fn absorbing_start_reduces_to_one_state() {
        let pr = params([1.0, 0.0], [1.0, 0.0, 0.0, 1.0]);
        let y = panel(&[0.3, -1.2, 2.0, 0.1]);
        let (ll, filt) = forward_loglik(&y, &pr).unwrap();
        let direct: f64 = [0.3f64, -1.2, 2.0, 0.1]
            .iter()
            .map(|x| -LN_SQRT_2PI - 0.5 * x * x)
            .sum();
        assert!((ll - direct).abs() < 1e-12);
        assert!(filt.column(1).iter().all(|&v| v == 0.0));
        assert_eq!(viterbi(&y, &pr).unwrap(), vec![0; 4]);
    }

    #[test]
    fn pairs_marginalise_to_smoothed() {
        let pr = params([0.3, 0.7], [0.8, 0.2, 0.35, 0.65]);
        let y = panel(&[0.3, -1.2, 2.0, 0.1, 3.5, -0.4]);
        let s = e_step(&y, &pr).unwrap();
        for t in 0..5 {
            for l in 0..2 {
                let row: f64 = s.zzhat[t].row(l).sum();
                assert!((row - s.zhat[(t, l)]).abs() < 1e-12);
                let col: f64 = s.zzhat[t].column(l).sum();
                assert!((col - s.zhat[(t + 1, l)]).abs() < 1e-12);
            }
        }
        assert!(s.what.iter().all(|&w| w == 1.0));
        let last: Vec<f64> = s.zhat.row(5).iter().copied().collect();
        let filt: Vec<f64> = s.filtered.row(5).iter().copied().collect();
        assert!((last[0] - filt[0]).abs() < 1e-14);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let pr = params([0.5, 0.5], [0.9, 0.1, 0.1, 0.9]);
        let y = ReturnPanel::with_default_dates(DMatrix::zeros(4, 2)).unwrap();
        assert!(matches!(
            forward_loglik(&y, &pr),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
