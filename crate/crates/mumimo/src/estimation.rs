//! Rayleigh block-fading channel draws, reverse-link pilot transmission, and
//! LMMSE channel estimation.
//!
//! The estimate and its error are independent complex Gaussians: user `k`'s
//! estimated row has per-entry variance `rho_k tau_r / (1 + rho_k tau_r)` and
//! the error row the complementary `1 / (1 + rho_k tau_r)`. Monte Carlo
//! estimators use [`draw_estimate_direct`], which samples estimate and error
//! directly from those statistics; the physical pipeline
//! ([`reverse_train`] + [`lmmse_estimate`]) is distributionally identical and
//! is kept for validation.

use num_complex::Complex64;

use crate::cmat::{scale_rows, CMatrix};
use crate::config::SystemConfig;
use crate::rng::RngStream;

/// An LMMSE channel estimate with its per-user entry variances.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// Estimated channel, `K x M`.
    pub h_hat: CMatrix,
    /// Per-user variance of the estimated entries.
    pub est_var: Vec<f64>,
    /// Per-user variance of the estimation-error entries.
    pub err_var: Vec<f64>,
}

/// Draw a `K x M` channel with i.i.d. `CN(0, 1)` entries.
pub fn draw_channel(antennas: usize, users: usize, rng: &mut RngStream) -> CMatrix {
    rng.complex_gaussian_matrix(users, antennas, 1.0)
}

/// The fixed pilot convention: `psi_k` is the `k`-th column of the
/// `tau_r x tau_r` identity. Any orthonormal pilot set yields identical
/// estimate statistics; this one makes the receive processing a row
/// selection.
pub fn pilot_matrix(tau_r: usize, users: usize) -> CMatrix {
    let mut psi = CMatrix::zeros(tau_r, users);
    for k in 0..users {
        psi[(k, k)] = Complex64::ONE;
    }
    psi
}

/// Simulate reverse-link training: `Y = sqrt(tau_r) H^T E^r Psi^H + V`,
/// with `Y` of size `M x tau_r` and fresh unit-variance noise `V`.
pub fn reverse_train(h: &CMatrix, cfg: &SystemConfig, rng: &mut RngStream) -> CMatrix {
    let psi = pilot_matrix(cfg.reverse_training, cfg.users);
    reverse_train_with_pilots(h, cfg, &psi, rng)
}

/// As [`reverse_train`] but with an arbitrary orthonormal pilot matrix
/// (`tau_r x K`, orthonormal columns).
pub fn reverse_train_with_pilots(
    h: &CMatrix,
    cfg: &SystemConfig,
    psi: &CMatrix,
    rng: &mut RngStream,
) -> CMatrix {
    assert_eq!(psi.nrows(), cfg.reverse_training);
    assert_eq!(psi.ncols(), cfg.users);
    let amplitudes: Vec<f64> = cfg
        .reverse_snr
        .iter()
        .map(|rho| (rho * cfg.reverse_training as f64).sqrt())
        .collect();
    // sqrt(tau_r) * H^T * E^r * Psi^H: row k of the scaled channel carries
    // amplitude sqrt(rho_k tau_r)
    let scaled = scale_rows(h, &amplitudes);
    let noise = rng.complex_gaussian_matrix(cfg.antennas, cfg.reverse_training, 1.0);
    scaled.transpose() * psi.adjoint() + noise
}

/// LMMSE estimate from the received training block under the identity pilot
/// convention.
pub fn lmmse_estimate(y: &CMatrix, cfg: &SystemConfig) -> ChannelEstimate {
    let psi = pilot_matrix(cfg.reverse_training, cfg.users);
    lmmse_estimate_with_pilots(y, cfg, &psi)
}

/// LMMSE estimate for an arbitrary orthonormal pilot matrix:
/// `H_hat = diag{ sqrt(rho_k tau_r) / (1 + rho_k tau_r) } Psi^T Y^T`.
pub fn lmmse_estimate_with_pilots(
    y: &CMatrix,
    cfg: &SystemConfig,
    psi: &CMatrix,
) -> ChannelEstimate {
    let despread = psi.transpose() * y.transpose(); // K x M
    let gains: Vec<f64> = cfg
        .reverse_snr
        .iter()
        .map(|rho| {
            let rt = rho * cfg.reverse_training as f64;
            rt.sqrt() / (1.0 + rt)
        })
        .collect();
    ChannelEstimate {
        h_hat: scale_rows(&despread, &gains),
        est_var: cfg.estimate_variances(),
        err_var: cfg.error_variances(),
    }
}

/// Statistical shortcut: draw the estimate and the error directly from their
/// (independent) distributions and return `(H, estimate)` with
/// `H = H_hat + H_err`. Distributionally identical to
/// `draw_channel` -> `reverse_train` -> `lmmse_estimate`.
pub fn draw_estimate_direct(cfg: &SystemConfig, rng: &mut RngStream) -> (CMatrix, ChannelEstimate) {
    let est = draw_estimate_only(cfg, rng);
    let mut h = est.h_hat.clone();
    for k in 0..cfg.users {
        let v = est.err_var[k];
        for j in 0..cfg.antennas {
            h[(k, j)] += rng.complex_gaussian(v);
        }
    }
    (h, est)
}

/// Draw just the estimate. Sufficient for statistics (like chi) that do not
/// involve the realized error.
pub fn draw_estimate_only(cfg: &SystemConfig, rng: &mut RngStream) -> ChannelEstimate {
    let mut h_hat = CMatrix::zeros(cfg.users, cfg.antennas);
    let est_var = cfg.estimate_variances();
    for k in 0..cfg.users {
        for j in 0..cfg.antennas {
            h_hat[(k, j)] = rng.complex_gaussian(est_var[k]);
        }
    }
    ChannelEstimate {
        h_hat,
        est_var,
        err_var: cfg.error_variances(),
    }
}
