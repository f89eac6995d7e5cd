//! Exact simulation from Markov-switching parameters and from mixtures,
//! including draws from a mixture restricted to a thin slab around
//! conditioning values.
//!
//! Every random stream is a ChaCha8 generator keyed by `(seed, tag)`, so
//! draws for different purposes never overlap.

use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal, Uniform};

use crate::dist::normal::LN_SQRT_2PI;
use crate::dist::student::mvt_log_kernel;
use crate::error::{Error, Result};
use crate::linalg::{self, Chol};
use crate::model::{Component, MixtureDistribution, MsmParams, ReturnPanel};

/// Stream tags separating the uses of one seed.
pub mod streams {
    pub const SIMULATE: u64 = 1;
    pub const MIXTURE: u64 = 2;
    pub const SLAB: u64 = 3;
    pub const TRUNCATED: u64 = 4;
    /// Fit restart `r` uses `RESTART + r`.
    pub const RESTART: u64 = 1 << 32;
}

/// Generator for stream `tag` of `seed`.
pub fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// A simulated panel with its hidden state path (0-based labels).
#[derive(Clone, Debug)]
pub struct SimOutput {
    pub panel: ReturnPanel,
    pub states: Vec<usize>,
    pub seed: u64,
}

/// Draws from one Gaussian or Student-t component.
#[derive(Clone, Debug)]
struct ComponentSampler {
    mu: DVector<f64>,
    chol_l: DMatrix<f64>,
    gamma: Option<Gamma<f64>>,
}

impl ComponentSampler {
    fn new(c: &Component) -> Result<Self> {
        let chol = linalg::cholesky(&c.sigma, "Sigma")?;
        let gamma = match c.nu {
            None => None,
            Some(nu) => Some(
                Gamma::new(0.5 * nu, 2.0 / nu)
                    .map_err(|e| Error::invalid(format!("nu = {nu}: {e}")))?,
            ),
        };
        Ok(ComponentSampler {
            mu: c.mu.clone(),
            chol_l: chol.l(),
            gamma,
        })
    }

    fn draw_into<R: Rng>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let scale = match &self.gamma {
            None => 1.0,
            Some(g) => g.sample(rng).sqrt().recip(),
        };
        let d = z.len();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.chol_l[(i, j)] * z[j];
            }
            out[i] = self.mu[i] + scale * s;
        }
    }
}

fn pick(cum: &[f64], u: f64) -> usize {
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
}

fn cumulative(w: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    w.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

/// Simulates `t` observations from `params`; the family follows from `params.nu`.
pub fn simulate(params: &MsmParams, t: usize, seed: u64) -> Result<SimOutput> {
    params.ensure_valid()?;
    if t < 2 {
        return Err(Error::invalid(
            "need at least two observations to form a panel",
        ));
    }
    let p = params.dim();
    let samplers = (0..params.n_states)
        .map(|l| {
            let comp = Component {
                mu: params.mu[l].clone(),
                sigma: params.sigma[l].clone(),
                nu: params.nu_of(l),
            };
            ComponentSampler::new(&comp)
        })
        .collect::<Result<Vec<_>>>()?;
    let init = cumulative(params.delta.iter().copied());
    let rows: Vec<Vec<f64>> = (0..params.n_states)
        .map(|l| cumulative(params.transition.row(l).iter().copied()))
        .collect();
    let mut rng = stream(seed, streams::SIMULATE);
    let unit = Uniform::new(0.0, 1.0).expect("unit interval");
    let mut states = Vec::with_capacity(t);
    let mut values = DMatrix::zeros(t, p);
    let mut z = vec![0.0; p];
    let mut y = vec![0.0; p];
    let mut s = pick(&init, unit.sample(&mut rng));
    for step in 0..t {
        if step > 0 {
            s = pick(&rows[s], unit.sample(&mut rng));
        }
        states.push(s);
        samplers[s].draw_into(&mut rng, &mut z, &mut y);
        for j in 0..p {
            values[(step, j)] = y[j];
        }
    }
    let panel = ReturnPanel::with_default_dates(values)?;
    Ok(SimOutput {
        panel,
        states,
        seed,
    })
}

/// `n` independent draws from a mixture, one per row.
pub fn sample_mixture(mix: &MixtureDistribution, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut draws = MixtureDraws::new(mix, stream(seed, streams::MIXTURE))?;
    let d = mix.dim();
    let mut out = DMatrix::zeros(n, d);
    let mut y = vec![0.0; d];
    for i in 0..n {
        draws.next_into(&mut y);
        for j in 0..d {
            out[(i, j)] = y[j];
        }
    }
    Ok(out)
}

/// Streaming mixture sampler for Monte-Carlo oracles.
pub struct MixtureDraws {
    samplers: Vec<ComponentSampler>,
    cum: Vec<f64>,
    rng: ChaCha8Rng,
    z: Vec<f64>,
}

impl MixtureDraws {
    pub fn new(mix: &MixtureDistribution, rng: ChaCha8Rng) -> Result<Self> {
        let samplers = mix
            .components()
            .iter()
            .map(ComponentSampler::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(MixtureDraws {
            samplers,
            cum: cumulative(mix.weights().iter().copied()),
            rng,
            z: vec![0.0; mix.dim()],
        })
    }

    pub fn next_into(&mut self, out: &mut [f64]) {
        let u: f64 = self.rng.random();
        let k = pick(&self.cum, u);
        self.samplers[k].draw_into(&mut self.rng, &mut self.z, out);
    }
}

/// Rows drawn from a mixture restricted to a slab, with the slab's probability.
#[derive(Clone, Debug)]
pub struct SlabSample {
    pub rows: DMatrix<f64>,
    /// Probability that an unrestricted draw lands in the slab.
    pub acceptance_rate: f64,
}

/// Per-component pieces needed to sample inside the slab.
struct SlabComponent {
    log_norm: f64,
    nu: Option<f64>,
    mu_g: DVector<f64>,
    chol_g: Chol,
    /// `Sigma_fg Sigma_gg^{-1}`
    gain: DMatrix<f64>,
    /// upper bound of the marginal density over the slab
    bound: f64,
    sampler: ComponentSampler,
}

impl SlabComponent {
    fn log_density(&self, y: &DVector<f64>) -> f64 {
        let m = linalg::mahalanobis(&self.chol_g, y, &self.mu_g);
        self.log_kernel(m)
    }

    fn log_kernel(&self, m: f64) -> f64 {
        match self.nu {
            None => self.log_norm - 0.5 * m,
            Some(nu) => self.log_norm - 0.5 * (nu + self.mu_g.len() as f64) * (m / nu).ln_1p(),
        }
    }
}

/// Draws `n_target` rows of a mixture restricted to `|y_g - values| <= halfwidth`
/// for every conditioned coordinate `g`.
///
/// The slab law is sampled exactly: the conditioned block comes from uniform
/// proposals in the slab thinned by the marginal mixture density, the component
/// is drawn from its posterior at that point, and the free block from the
/// component law given the conditioned block.
pub fn slab_conditional_sample(
    mix: &MixtureDistribution,
    given: &[usize],
    values: &[f64],
    halfwidth: f64,
    n_target: usize,
    seed: u64,
) -> Result<SlabSample> {
    let d = mix.dim();
    if !(halfwidth > 0.0 && halfwidth.is_finite()) {
        return Err(Error::invalid("slab halfwidth must be positive"));
    }
    if n_target < 10_000 {
        return Err(Error::invalid(format!(
            "need at least 10000 accepted rows, asked for {n_target}"
        )));
    }
    if given.is_empty() || given.len() != values.len() || given.iter().any(|&g| g >= d) {
        return Err(Error::DimensionMismatch(
            "conditioning indices and values".into(),
        ));
    }
    let mut seen = vec![false; d];
    for &g in given {
        if std::mem::replace(&mut seen[g], true) {
            return Err(Error::invalid(format!("coordinate {g} conditioned twice")));
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("conditioning values must be finite"));
    }
    let free: Vec<usize> = (0..d).filter(|j| !seen[*j]).collect();
    let k = given.len();
    let centre = DVector::from_column_slice(values);
    let radius = halfwidth * (k as f64).sqrt();

    let mut comps = Vec::new();
    let mut weights = Vec::new();
    for (eta, c) in mix.weights().iter().zip(mix.components()) {
        if *eta == 0.0 {
            continue;
        }
        let s_gg = linalg::sub_matrix(&c.sigma, given, given);
        let s_fg = linalg::sub_matrix(&c.sigma, &free, given);
        let chol_g = linalg::cholesky(&s_gg, "Sigma_gg")?;
        let gain = chol_g.solve(&s_fg.transpose()).transpose();
        let log_det = linalg::log_det(&chol_g);
        let log_norm = match c.nu {
            None => -(k as f64) * LN_SQRT_2PI - 0.5 * log_det,
            Some(nu) => mvt_log_kernel(k, nu, log_det, 0.0),
        };
        let mu_g = linalg::sub_vector(&c.mu, given);
        // ||L^{-1} (y - y0)|| <= ||L^{-1}||_F ||y - y0||
        let l_inv = chol_g
            .l()
            .try_inverse()
            .ok_or_else(|| Error::NotPositiveDefinite("Sigma_gg".into()))?;
        let m0 = linalg::mahalanobis(&chol_g, &centre, &mu_g).sqrt();
        let closest = (m0 - l_inv.norm() * radius).max(0.0);
        let mut sc = SlabComponent {
            log_norm,
            nu: c.nu,
            mu_g,
            chol_g,
            gain,
            bound: 0.0,
            sampler: ComponentSampler::new(c)?,
        };
        sc.bound = sc.log_kernel(closest * closest).exp();
        comps.push(sc);
        weights.push(*eta);
    }
    let bound: f64 = comps.iter().zip(&weights).map(|(c, w)| w * c.bound).sum();
    if !(bound > 0.0) {
        return Err(Error::InfeasibleSlab(0.0));
    }
    let volume = (2.0 * halfwidth).powi(k as i32);

    let mut rng = stream(seed, streams::SLAB);
    let offset = Uniform::new_inclusive(-halfwidth, halfwidth).expect("positive halfwidth");
    let mut rows = DMatrix::zeros(n_target, d);
    let mut y_g = DVector::zeros(k);
    let mut dens = vec![0.0; comps.len()];
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut proposals = 0u64;
    let mut mass_sum = 0.0;
    let mut accepted = 0;
    while accepted < n_target {
        proposals += 1;
        for i in 0..k {
            y_g[i] = values[i] + offset.sample(&mut rng);
        }
        let mut g = 0.0;
        for (i, c) in comps.iter().enumerate() {
            dens[i] = weights[i] * c.log_density(&y_g).exp();
            g += dens[i];
        }
        mass_sum += g;
        if proposals == 10_000 {
            let rate = volume * mass_sum / 10_000.0;
            if rate < 1e-6 {
                return Err(Error::InfeasibleSlab(rate));
            }
        }
        if rng.random::<f64>() * bound >= g {
            continue;
        }
        // component posterior at y_g
        let mut u = rng.random::<f64>() * g;
        let mut l = 0;
        while l + 1 < comps.len() && u >= dens[l] {
            u -= dens[l];
            l += 1;
        }
        let comp = &comps[l];
        let mut draw_scale = 1.0;
        if let Some(nu) = comp.nu {
            let m = linalg::mahalanobis(&comp.chol_g, &y_g, &comp.mu_g);
            let shape = 0.5 * (nu + k as f64);
            let rate = 0.5 * (nu + m);
            let w: f64 = Gamma::new(shape, 1.0 / rate)
                .expect("positive shape")
                .sample(&mut rng);
            draw_scale = w.sqrt().recip();
        }
        // draw the full vector from the Gaussian component and move it onto y_g
        let gaussian = ComponentSampler {
            gamma: None,
            ..comp.sampler.clone()
        };
        gaussian.draw_into(&mut rng, &mut z, &mut x);
        let resid: Vec<f64> = given
            .iter()
            .enumerate()
            .map(|(i, &gi)| {
                y_g[i] - comp.sampler.mu[gi] - draw_scale * (x[gi] - comp.sampler.mu[gi])
            })
            .collect();
        for (fi, &f) in free.iter().enumerate() {
            let mut v = comp.sampler.mu[f] + draw_scale * (x[f] - comp.sampler.mu[f]);
            for i in 0..k {
                v += comp.gain[(fi, i)] * resid[i];
            }
            rows[(accepted, f)] = v;
        }
        for (i, &gi) in given.iter().enumerate() {
            rows[(accepted, gi)] = y_g[i];
        }
        accepted += 1;
    }
    let acceptance_rate = volume * mass_sum / proposals as f64;
    if acceptance_rate < 1e-6 {
        return Err(Error::InfeasibleSlab(acceptance_rate));
    }
    Ok(SlabSample {
        rows,
        acceptance_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelFamily;

    fn two_state() -> MsmParams {
        MsmParams::new(
            DVector::from_vec(vec![0.5, 0.5]),
            DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]),
            vec![
                DVector::from_vec(vec![0.0, 1.0]),
                DVector::from_vec(vec![-1.0, 0.5]),
            ],
            vec![
                DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]),
                DMatrix::from_row_slice(2, 2, &[2.0, -0.4, -0.4, 1.5]),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn absorbing_chain_stays_put() {
        let mut p = two_state();
        p.delta = DVector::from_vec(vec![1.0, 0.0]);
        p.transition = DMatrix::identity(2, 2);
        let out = simulate(&p, 200, 3).unwrap();
        assert!(out.states.iter().all(|&s| s == 0));
    }

    #[test]
    fn same_seed_same_panel() {
        let a = simulate(&two_state(), 300, 11).unwrap();
        let b = simulate(&two_state(), 300, 11).unwrap();
        let c = simulate(&two_state(), 300, 12).unwrap();
        assert_eq!(a.panel.values(), b.panel.values());
        assert_eq!(a.states, b.states);
        assert_ne!(a.panel.values(), c.panel.values());
    }

    #[test]
    fn transition_frequencies_follow_q() {
        let p = two_state();
        let out = simulate(&p, 100_000, 5).unwrap();
        let mut counts = [[0.0f64; 2]; 2];
        for w in out.states.windows(2) {
            counts[w[0]][w[1]] += 1.0;
        }
        for i in 0..2 {
            let n = counts[i][0] + counts[i][1];
            for j in 0..2 {
                assert!((counts[i][j] / n - p.transition[(i, j)]).abs() < 0.01);
            }
        }
    }

    #[test]
    fn single_state_mean_within_clt_bound() {
        let p = MsmParams::new(
            DVector::from_element(1, 1.0),
            DMatrix::identity(1, 1),
            vec![DVector::from_vec(vec![0.2, -0.3, 1.0])],
            vec![DMatrix::from_row_slice(
                3,
                3,
                &[1.0, 0.2, 0.0, 0.2, 2.0, 0.5, 0.0, 0.5, 0.5],
            )],
            None,
        )
        .unwrap();
        let t = 100_000;
        let out = simulate(&p, t, 9).unwrap();
        for j in 0..3 {
            let mean = out.panel.values().column(j).mean();
            let bound = 4.0 * (p.sigma[0][(j, j)] / t as f64).sqrt();
            assert!((mean - p.mu[0][j]).abs() < bound);
        }
    }

    #[test]
    fn slab_sample_matches_gaussian_conditional_mean() {
        let c = Component::gaussian(
            DVector::from_vec(vec![0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        );
        let mix = MixtureDistribution::single(c).unwrap();
        let s = slab_conditional_sample(&mix, &[1], &[1.0], 0.05, 20_000, 1).unwrap();
        let col = s.rows.column(0);
        let mean = col.mean();
        let se = (col.variance() / col.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "{mean}");
        assert!(s.rows.column(1).iter().all(|v| (v - 1.0).abs() <= 0.05));
        // P(|Y2 - 1| <= 0.05) for a standard normal
        let exact = crate::dist::normal::std_cdf(1.05) - crate::dist::normal::std_cdf(0.95);
        assert!((s.acceptance_rate / exact - 1.0).abs() < 0.01);
    }

    #[test]
    fn infeasible_slab_is_reported() {
        let c = Component::gaussian(DVector::zeros(2), DMatrix::identity(2, 2));
        let mix = MixtureDistribution::single(c).unwrap();
        let r = slab_conditional_sample(&mix, &[0, 1], &[9.0, 9.0], 0.01, 10_000, 1);
        assert!(matches!(r, Err(Error::InfeasibleSlab(_))));
    }

    #[test]
    fn mixture_sampler_hits_weights() {
        let comps = vec![
            Component::gaussian(DVector::from_element(1, -10.0), DMatrix::identity(1, 1)),
            Component::gaussian(DVector::from_element(1, 10.0), DMatrix::identity(1, 1)),
        ];
        let mix = MixtureDistribution::new(
            DVector::from_vec(vec![0.3, 0.7]),
            comps,
            ModelFamily::Gaussian,
        )
        .unwrap();
        let x = sample_mixture(&mix, 50_000, 2).unwrap();
        let neg = x.iter().filter(|v| **v < 0.0).count();
        let frac = neg as f64 / 50_000.0;
        assert!((frac - 0.3).abs() < 0.01);
    }
}
