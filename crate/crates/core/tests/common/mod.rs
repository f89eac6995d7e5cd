//! Independent oracles and random instance generators shared by the
//! integration tests. Nothing here calls into the numerical code under test.

#![allow(dead_code)]

use msrisk::{Component, MixtureDistribution, ModelFamily, MsmParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::{digamma, ln_gamma};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Random correlation matrix from a random factor model, well away from singular.
pub fn random_correlation(rng: &mut impl Rng, d: usize, max_abs: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| uniform(rng, -1.0, 1.0));
    let mut s = &b * b.transpose() + DMatrix::identity(d, d) * 0.5 * d as f64;
    let sd: Vec<f64> = (0..d).map(|i| s[(i, i)].sqrt()).collect();
    for i in 0..d {
        for j in 0..d {
            s[(i, j)] /= sd[i] * sd[j];
            if i != j {
                s[(i, j)] *= max_abs;
            }
        }
    }
    s
}

/// Random correlation matrix whose inverse has nonpositive off-diagonal
/// entries, so Gaussian laws with it are multivariate totally positive.
pub fn random_mtp2_correlation(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let mut prec = DMatrix::from_fn(
        d,
        d,
        |i, j| if i == j { 0.0 } else { -uniform(rng, 0.0, 1.0) },
    );
    prec = (&prec + prec.transpose()) * 0.5;
    for i in 0..d {
        let off: f64 = (0..d).filter(|&j| j != i).map(|j| prec[(i, j)].abs()).sum();
        prec[(i, i)] = off + uniform(rng, 0.3, 1.0);
    }
    let s = prec.try_inverse().expect("diagonally dominant");
    let sd: Vec<f64> = (0..d).map(|i| s[(i, i)].sqrt()).collect();
    DMatrix::from_fn(d, d, |i, j| s[(i, j)] / (sd[i] * sd[j]))
}

pub fn random_covariance(rng: &mut impl Rng, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let c = random_correlation(rng, d, 0.8);
    let sd: Vec<f64> = (0..d).map(|_| uniform(rng, lo, hi)).collect();
    DMatrix::from_fn(d, d, |i, j| c[(i, j)] * sd[i] * sd[j])
}

pub fn random_mixture(
    rng: &mut impl Rng,
    k: usize,
    d: usize,
    student: bool,
    nu_range: (f64, f64),
) -> MixtureDistribution {
    let raw: Vec<f64> = (0..k).map(|_| uniform(rng, 0.2, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = DVector::from_iterator(k, raw.iter().map(|w| w / total));
    let comps = (0..k)
        .map(|_| {
            let mu = DVector::from_fn(d, |_, _| uniform(rng, -1.0, 1.0));
            let sigma = random_covariance(rng, d, 0.5, 2.0);
            if student {
                Component::student(mu, sigma, uniform(rng, nu_range.0, nu_range.1))
            } else {
                Component::gaussian(mu, sigma)
            }
        })
        .collect();
    let family = if student {
        ModelFamily::StudentT
    } else {
        ModelFamily::Gaussian
    };
    MixtureDistribution::new(weights, comps, family).unwrap()
}

/// Random `L`-state parameters with state means spread along the diagonal.
pub fn random_params(rng: &mut impl Rng, l: usize, p: usize, family: ModelFamily) -> MsmParams {
    let mut q = DMatrix::zeros(l, l);
    for i in 0..l {
        let stay = uniform(rng, 0.8, 0.97);
        let off: Vec<f64> = (0..l).map(|_| uniform(rng, 0.1, 1.0)).collect();
        let off_total: f64 = (0..l).filter(|&j| j != i).map(|j| off[j]).sum();
        for j in 0..l {
            q[(i, j)] = if l == 1 {
                1.0
            } else if i == j {
                stay
            } else {
                (1.0 - stay) * off[j] / off_total
            };
        }
    }
    let delta = DVector::from_element(l, 1.0 / l as f64);
    let mu = (0..l)
        .map(|k| DVector::from_fn(p, |_, _| 2.0 * k as f64 + uniform(rng, -0.3, 0.3)))
        .collect();
    let sigma = (0..l)
        .map(|_| random_covariance(rng, p, 0.5, 1.5))
        .collect();
    let nu = family
        .is_student()
        .then(|| (0..l).map(|_| uniform(rng, 3.0, 30.0)).collect());
    MsmParams::new(delta, q, mu, sigma, nu).unwrap()
}

/// Emission log density written out from the textbook formulas.
pub fn emission_logpdf(
    y: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    nu: Option<f64>,
) -> f64 {
    let p = y.len() as f64;
    let chol = sigma.clone().cholesky().expect("positive definite");
    let e = y - mu;
    let m = e.dot(&chol.solve(&e));
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    match nu {
        None => -0.5 * p * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * m,
        Some(nu) => {
            ln_gamma(0.5 * (nu + p))
                - ln_gamma(0.5 * nu)
                - 0.5 * p * (nu * std::f64::consts::PI).ln()
                - 0.5 * log_det
                - 0.5 * (nu + p) * (1.0 + m / nu).ln()
        }
    }
}

/// Density of a univariate mixture from statrs distributions.
pub fn uni_pdf(mix: &MixtureDistribution, y: f64) -> f64 {
    mix.weights()
        .iter()
        .zip(mix.components())
        .map(|(w, c)| {
            let (m, s) = (c.mu[0], c.sigma[(0, 0)].sqrt());
            w * match c.nu {
                None => Normal::new(m, s).unwrap().pdf(y),
                Some(nu) => StudentsT::new(m, s, nu).unwrap().pdf(y),
            }
        })
        .sum()
}

pub fn uni_cdf(mix: &MixtureDistribution, y: f64) -> f64 {
    mix.weights()
        .iter()
        .zip(mix.components())
        .map(|(w, c)| {
            let (m, s) = (c.mu[0], c.sigma[(0, 0)].sqrt());
            w * match c.nu {
                None => Normal::new(m, s).unwrap().cdf(y),
                Some(nu) => StudentsT::new(m, s, nu).unwrap().cdf(y),
            }
        })
        .sum()
}

pub fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1)
        + simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1)
}

/// Adaptive Simpson quadrature with Richardson correction, started from a
/// fixed partition so narrow features are not skipped.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, eps: f64) -> f64 {
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    let mut acc = 0.0;
    for i in 0..pieces {
        let lo = a + h * i as f64;
        let hi = if i + 1 == pieces { b } else { lo + h };
        let m = 0.5 * (lo + hi);
        let (flo, fhi, fm) = (f(lo), f(hi), f(m));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
        acc += simpson_step(&f, lo, flo, hi, fhi, m, fm, whole, eps / pieces as f64, 40);
    }
    acc
}

/// `int_{-inf}^{upper} f` through `y = upper - s / (1 - s)`.
pub fn integrate_below<F: Fn(f64) -> f64>(f: F, upper: f64, eps: f64) -> f64 {
    integrate(
        |s| {
            if s >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - s;
            f(upper - s / one_minus) / (one_minus * one_minus)
        },
        0.0,
        1.0,
        eps,
    )
}

/// Bivariate standard normal orthant probability `P(Z1 <= a, Z2 <= b)` by quadrature.
pub fn bvn_orthant(a: f64, b: f64, rho: f64) -> f64 {
    let n = std_normal();
    let s = (1.0 - rho * rho).sqrt();
    integrate_below(|x| n.pdf(x) * n.cdf((b - rho * x) / s), a, 1e-14)
}

/// Shapley values by averaging marginal contributions over every ordering.
pub fn shapley_by_permutations(n: usize, v: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut sums = vec![0.0; n];
    let mut count = 0usize;
    permute(&mut order, 0, &mut |perm| {
        let mut mask = 0usize;
        for &j in perm {
            let before = v(mask);
            mask |= 1 << j;
            sums[j] += v(mask) - before;
        }
        count += 1;
    });
    sums.iter().map(|s| s / count as f64).collect()
}

fn permute(xs: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == xs.len() {
        visit(xs);
        return;
    }
    for i in k..xs.len() {
        xs.swap(k, i);
        permute(xs, k + 1, visit);
        xs.swap(k, i);
    }
}

/// Root in `nu` of `ln(nu/2) - psi(nu/2) + 1 - h` by plain bisection.
pub fn dof_root(h: f64) -> f64 {
    let g = |nu: f64| (0.5 * nu).ln() - digamma(0.5 * nu) + 1.0 - h;
    let (mut lo, mut hi) = (1e-3, 1e7);
    assert!(g(lo) > 0.0 && g(hi) < 0.0, "no root bracketed for h = {h}");
    for _ in 0..300 {
        let mid = (lo * hi).sqrt();
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// `h` value whose dof root is exactly `nu`.
pub fn h_of(nu: f64) -> f64 {
    (0.5 * nu).ln() - digamma(0.5 * nu) + 1.0
}

/// Relative difference with an absolute floor of 1.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
