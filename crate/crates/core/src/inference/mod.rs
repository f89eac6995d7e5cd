//! Maximum-likelihood fitting of Gaussian and Student-t Markov-switching
//! models by EM, with forward-backward smoothing, Viterbi decoding and
//! information-criterion model selection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

mod filter;
mod fit;
mod mstep;

pub use filter::{e_step, forward_loglik, path_log_prob, viterbi};
pub use fit::{fit, initial_params, run_em, select, EmRun, SelectionRow, SelectionTable};
pub use mstep::{
    m_step, nu_equation, solve_nu_bisection, update_nu_shoham, SHOHAM_A0, SHOHAM_A1, SHOHAM_A2,
};

/// How the degrees of freedom are updated in the M-step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuUpdate {
    #[default]
    Shoham,
    Bisection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub loglik_tol: f64,
    pub seed: u64,
    pub nu_update: NuUpdate,
    pub jitter: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 20,
            max_iter: 1000,
            loglik_tol: 1e-5,
            seed: 0,
            nu_update: NuUpdate::Shoham,
            jitter: 1e-8,
        }
    }
}

impl FitOptions {
    pub fn check(&self) -> crate::Result<()> {
        if self.restarts == 0 {
            return Err(crate::Error::invalid("need at least one restart"));
        }
        if !(self.loglik_tol > 0.0) {
            return Err(crate::Error::invalid("loglik_tol must be positive"));
        }
        if !(self.jitter >= 0.0) {
            return Err(crate::Error::invalid("jitter must be non-negative"));
        }
        Ok(())
    }
}

/// Posterior expectations from one E-step.
#[derive(Clone, Debug, PartialEq)]
pub struct SufficientStats {
    /// `T x L` smoothed state probabilities.
    pub zhat: DMatrix<f64>,
    /// `T - 1` matrices of joint probabilities of `(S_t, S_{t+1})`.
    pub zzhat: Vec<DMatrix<f64>>,
    /// `T x L` expected latent scale weights; all ones for Gaussian emissions.
    pub what: DMatrix<f64>,
    /// `T x L` squared Mahalanobis distances under the current parameters.
    pub mahalanobis: DMatrix<f64>,
    /// `T x L` filtered probabilities.
    pub filtered: DMatrix<f64>,
    pub loglik: f64,
}
