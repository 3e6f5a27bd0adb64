//! Forward pilot patterns, pilot reception at the users, and Monte Carlo
//! estimation of conditional effective-gain statistics.
//!
//! The base-station transmits `tau_f` precoded pilot symbols `A q^(t)`. With
//! one pilot the combining vector is all ones; with two, `sqrt(2)`-scaled
//! even/odd indicator vectors; in general pilot `t` is the `sqrt(tau_f)`-
//! scaled indicator of the users whose column index is congruent to `t`
//! modulo `tau_f`.
//!
//! Conditional moments of the effective gains given a pilot observation are
//! estimated by importance-weighting i.i.d. prior samples with the Gaussian
//! pilot-noise density ([`conditional_mean_mc`]); weights are computed in
//! log space with max subtraction.

use num_complex::Complex64;

use crate::cmat::{CMatrix, CVector};
use crate::config::SystemConfig;
use crate::estimation::ChannelEstimate;
use crate::rng::RngStream;
use crate::selection::Selection;
use crate::{Error, Result};

/// Pilot combining vectors, one column per pilot symbol (`N x tau_f`).
#[derive(Debug, Clone)]
pub struct PilotPattern {
    pub tau_f: usize,
    pub vectors: CMatrix,
}

/// Residue-class pilot construction for `N` served users.
///
/// `tau_f = 0` yields an empty pattern (reverse-training-only operation).
pub fn build_pilot_pattern(tau_f: usize, n: usize) -> PilotPattern {
    let mut q = CMatrix::zeros(n, tau_f);
    if tau_f > 0 {
        let scale = (tau_f as f64).sqrt();
        for col in 0..n {
            q[(col, col % tau_f)] = Complex64::new(scale, 0.0);
        }
    }
    PilotPattern { tau_f, vectors: q }
}

impl PilotPattern {
    /// Noiseless pilot response of one effective-gain row:
    /// entry `t` is `g^T q^(t)`.
    pub fn respond(&self, gain_row: &CVector) -> CVector {
        self.vectors.transpose() * gain_row
    }
}

/// Effective gain row of one user: `sqrt(rho) * h_row * A`, a length-`N`
/// vector whose `i`-th entry couples the user to the `i`-th transmitted
/// stream.
pub fn effective_gain_row(h_row_owner: &CMatrix, row: usize, a: &CMatrix, rho: f64) -> CVector {
    let scale = rho.sqrt();
    let n = a.ncols();
    let m = a.nrows();
    CVector::from_fn(n, |j, _| {
        let mut acc = Complex64::ZERO;
        for i in 0..m {
            acc += h_row_owner[(row, i)] * a[(i, j)];
        }
        acc * scale
    })
}

/// Simulate pilot reception for every selected user: row `n` of the result
/// is user `selection[n]`'s observation
/// `x(t) = sqrt(rho_k) h_k^T A q^(t) + CN(0, 1)`.
pub fn receive_pilots(
    h: &CMatrix,
    a: &CMatrix,
    selection: &Selection,
    cfg: &SystemConfig,
    pattern: &PilotPattern,
    rng: &mut RngStream,
) -> CMatrix {
    let n = selection.len();
    let mut x = CMatrix::zeros(n, pattern.tau_f);
    for (pos, &k) in selection.indices().iter().enumerate() {
        let g = effective_gain_row(h, k, a, cfg.forward_snr[k]);
        let clean = pattern.respond(&g);
        for t in 0..pattern.tau_f {
            x[(pos, t)] = clean[t] + rng.complex_gaussian(1.0);
        }
    }
    x
}

/// Log-likelihoods `-||observed - predicted_i||^2 / noise_var` of each
/// predicted observation under per-component complex Gaussian noise.
pub fn log_weights(predicted: &[CVector], observed: &CVector, noise_var: f64) -> Vec<f64> {
    predicted
        .iter()
        .map(|p| {
            let mut d = 0.0;
            for (o, q) in observed.iter().zip(p.iter()) {
                d += (o - q).norm_sqr();
            }
            -d / noise_var
        })
        .collect()
}

/// Normalize log weights by max subtraction. Errors if every weight
/// underflows (all log weights are `-inf` or NaN).
fn normalized_weights(logw: &[f64]) -> Result<Vec<f64>> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let mut w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    for x in w.iter_mut() {
        *x /= sum;
    }
    Ok(w)
}

/// Importance-weighted conditional mean: given i.i.d. samples of
/// `(value, predicted observation)` and an observation `Y = X + Z` with
/// per-component `CN(0, noise_var)` noise `Z`,
///
/// ```text
/// E[value | Y = observed] ~ sum_i value_i f_Z(observed - predicted_i) / sum_i f_Z(...)
/// ```
///
/// With an empty observation (no pilots) the weights are uniform and the
/// estimate is the prior mean.
pub fn conditional_mean_mc(
    samples: &[(Complex64, CVector)],
    observed: &CVector,
    noise_var: f64,
) -> Result<Complex64> {
    assert!(!samples.is_empty());
    assert!(noise_var > 0.0);
    let predicted: Vec<CVector> = samples.iter().map(|(_, p)| p.clone()).collect();
    let w = normalized_weights(&log_weights(&predicted, observed, noise_var))?;
    Ok(samples
        .iter()
        .zip(&w)
        .map(|((v, _), wi)| v * *wi)
        .sum())
}

/// Conditional statistics of one user's effective gains given its pilot
/// observation.
#[derive(Debug, Clone)]
pub struct PosteriorGainStats {
    /// `E[g_own | x]`: conditional mean of the user's own gain.
    pub mean_gain: Complex64,
    /// `var{g_own | x}`, never negative.
    pub var_gain: f64,
    /// `sum_{i != own} E[|g_i|^2 | x]`: conditional interference power.
    pub interference: f64,
}

/// Estimate the conditional gain statistics of user `user` (serving column
/// `own_col` of `a`) by sampling `l_post` realizations of that user's
/// estimation-error row and importance-weighting them against the observed
/// pilots. Only the user's own error row is treated as unknown here; the
/// estimate (and hence the precoder) is held fixed.
#[allow(clippy::too_many_arguments)]
pub fn posterior_gain_stats(
    est: &ChannelEstimate,
    user: usize,
    own_col: usize,
    a: &CMatrix,
    cfg: &SystemConfig,
    pattern: &PilotPattern,
    observed: &CVector,
    l_post: usize,
    rng: &mut RngStream,
) -> Result<PosteriorGainStats> {
    assert!(l_post >= 1);
    let rho = cfg.forward_snr[user];
    let err_var = est.err_var[user];
    let base = effective_gain_row(&est.h_hat, user, a, rho);
    let n = a.ncols();
    let m = a.nrows();
    let scale = rho.sqrt();

    let mut logw = Vec::with_capacity(l_post);
    let mut own = Vec::with_capacity(l_post);
    let mut own_sq = Vec::with_capacity(l_post);
    let mut other_sq = Vec::with_capacity(l_post);
    let mut err_row = vec![Complex64::ZERO; m];
    for _ in 0..l_post {
        for e in err_row.iter_mut() {
            *e = rng.complex_gaussian(err_var);
        }
        // g = base + sqrt(rho) * err_row^T A
        let mut g = base.clone();
        for j in 0..n {
            let mut acc = Complex64::ZERO;
            for i in 0..m {
                acc += err_row[i] * a[(i, j)];
            }
            g[j] += acc * scale;
        }
        let clean = pattern.respond(&g);
        let mut d = 0.0;
        for (o, p) in observed.iter().zip(clean.iter()) {
            d += (o - p).norm_sqr();
        }
        logw.push(-d);
        let own_g = g[own_col];
        let total_sq: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        own.push(own_g);
        own_sq.push(own_g.norm_sqr());
        other_sq.push(total_sq - own_g.norm_sqr());
    }
    let w = normalized_weights(&logw)?;
    let mean_gain: Complex64 = own.iter().zip(&w).map(|(g, wi)| g * *wi).sum();
    let e_own_sq: f64 = own_sq.iter().zip(&w).map(|(s, wi)| s * wi).sum();
    let interference: f64 = other_sq.iter().zip(&w).map(|(s, wi)| s * wi).sum();
    Ok(PosteriorGainStats {
        mean_gain,
        var_gain: (e_own_sq - mean_gain.norm_sqr()).max(0.0),
        interference,
    })
}
