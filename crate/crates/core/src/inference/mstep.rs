//! Closed-form M-step and the degrees-of-freedom update.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::inference::{FitOptions, NuUpdate, SufficientStats};
use crate::linalg;
use crate::model::{MsmParams, ReturnPanel, NU_MAX, NU_MIN};

pub const SHOHAM_A0: f64 = 0.0416;
pub const SHOHAM_A1: f64 = 0.6594;
pub const SHOHAM_A2: f64 = 2.1971;

const MIN_RESPONSIBILITY: f64 = 1e-8;

/// Left side of the stationarity condition `ln(nu/2) - psi(nu/2) + 1 - h = 0`.
pub fn nu_equation(nu: f64, h: f64) -> f64 {
    (0.5 * nu).ln() - digamma(0.5 * nu) + 1.0 - h
}

/// Root of [`nu_equation`] by bisection in `ln nu`; `+inf` when `h <= 1`
/// (the equation has no finite root).
pub fn solve_nu_bisection(h: f64) -> f64 {
    if !(h > 1.0) {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (1e-6f64.ln(), 1e12f64.ln());
    // the left side decreases in nu
    if nu_equation(hi.exp(), h) > 0.0 {
        return f64::INFINITY;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if nu_equation(mid.exp(), h) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Shoham's closed-form approximation of the dof root, falling back to
/// bisection outside its domain `h + ln h > 1`.
pub fn update_nu_shoham(h: f64) -> f64 {
    let y = h + h.ln() - 1.0;
    if !(y > 0.0) || !y.is_finite() {
        return solve_nu_bisection(h);
    }
    2.0 / y + SHOHAM_A0 * (1.0 + libm::erf(SHOHAM_A1 * (SHOHAM_A2 / y).ln()))
}

/// `h_l` from the E-step quantities of state `l`.
fn h_statistic(stats: &SufficientStats, l: usize, nu: f64, p: f64) -> f64 {
    let shift = digamma(0.5 * (p + nu));
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..stats.zhat.nrows() {
        let z = stats.zhat[(t, l)];
        let m = stats.mahalanobis[(t, l)];
        num += z * (shift + (2.0 / (nu + m)).ln() - stats.what[(t, l)]);
        den += z;
    }
    -num / den
}

/// One M-step given the E-step output.
///
/// The scale update divides by the total responsibility `sum_t zhat_{t,l}`,
/// which is what maximises the expected complete-data log-likelihood.
pub fn m_step(
    panel: &ReturnPanel,
    stats: &SufficientStats,
    prev: &MsmParams,
    opts: &FitOptions,
) -> Result<MsmParams> {
    let (t_len, l_len, p) = (panel.len(), prev.n_states, prev.dim());
    if stats.zhat.shape() != (t_len, l_len)
        || stats.what.shape() != (t_len, l_len)
        || stats.zzhat.len() + 1 != t_len
    {
        return Err(Error::DimensionMismatch(
            "sufficient statistics do not match the panel".into(),
        ));
    }
    let rows = panel.rows();
    let totals: Vec<f64> = (0..l_len).map(|l| stats.zhat.column(l).sum()).collect();
    if let Some(l) = totals.iter().position(|&n| !(n >= MIN_RESPONSIBILITY)) {
        return Err(Error::DegenerateState(l + 1));
    }

    let mut delta = DVector::from_fn(l_len, |l, _| stats.zhat[(0, l)]);
    delta /= delta.sum();

    let mut transition = DMatrix::zeros(l_len, l_len);
    for xi in &stats.zzhat {
        transition += xi;
    }
    for l in 0..l_len {
        let s: f64 = transition.row(l).sum();
        if s > 0.0 {
            for k in 0..l_len {
                transition[(l, k)] /= s;
            }
        } else {
            transition.set_row(l, &prev.transition.row(l));
        }
    }

    let mut mu = Vec::with_capacity(l_len);
    let mut sigma = Vec::with_capacity(l_len);
    for l in 0..l_len {
        let mut weight = 0.0;
        let mut m = DVector::zeros(p);
        for (t, y) in rows.iter().enumerate() {
            let zw = stats.zhat[(t, l)] * stats.what[(t, l)];
            weight += zw;
            m.axpy(zw, y, 1.0);
        }
        if !(weight > 0.0) {
            return Err(Error::DegenerateState(l + 1));
        }
        m /= weight;
        let mut s = DMatrix::zeros(p, p);
        for (t, y) in rows.iter().enumerate() {
            let zw = stats.zhat[(t, l)] * stats.what[(t, l)];
            let e = y - &m;
            s.ger(zw, &e, &e, 1.0);
        }
        s /= totals[l];
        linalg::symmetrize(&mut s);
        let (_, repaired) =
            linalg::cholesky_with_jitter(&s, opts.jitter, &format!("Sigma_{}", l + 1))?;
        mu.push(m);
        sigma.push(repaired);
    }

    let nu = prev.nu.as_ref().map(|old| {
        (0..l_len)
            .map(|l| {
                let h = h_statistic(stats, l, old[l], p as f64);
                let v = match opts.nu_update {
                    NuUpdate::Shoham => update_nu_shoham(h),
                    NuUpdate::Bisection => solve_nu_bisection(h),
                };
                if v.is_nan() {
                    old[l]
                } else {
                    v.clamp(NU_MIN, NU_MAX)
                }
            })
            .collect()
    });

    Ok(MsmParams {
        n_states: l_len,
        delta,
        transition,
        mu,
        sigma,
        nu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shoham_tracks_the_exact_root() {
        for &nu in &[2.1f64, 3.0, 5.0, 10.0, 25.0, 50.0, 100.0, 200.0] {
            let h = 1.0 + (0.5 * nu).ln() - digamma(0.5 * nu);
            let exact = solve_nu_bisection(h);
            assert!(
                (exact / nu - 1.0).abs() < 1e-9,
                "bisection at {nu}: {exact}"
            );
            assert!((update_nu_shoham(h) - exact).abs() < 1e-3);
        }
    }

    #[test]
    fn shoham_decreases_in_h() {
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let h = 1.01 + i as f64 * (3.0 - 1.01) / 200.0;
            let v = update_nu_shoham(h);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn no_finite_root_at_or_below_one() {
        assert_eq!(solve_nu_bisection(1.0), f64::INFINITY);
        assert_eq!(update_nu_shoham(0.9), f64::INFINITY);
    }
}
