//! Generalized zero-forcing precoding.
//!
//! The precoder inverts the row-scaled channel estimate: with
//! `D_S = diag(p_k^{-1/2})` over the selected users and
//! `H_ds = D_S H_hat_S`,
//!
//! ```text
//! A = H_ds^H (H_ds H_ds^H)^{-1} / sqrt(Tr[(H_ds H_ds^H)^{-1}])
//! ```
//!
//! so that `Tr(A^H A) = 1` and `H_ds A = chi I` with the scalar gain
//! `chi = (Tr[(H_ds H_ds^H)^{-1}])^{-1/2}`. The per-user parameters `p`
//! allocate resources across heterogeneous users; their optimizer
//! ([`optimize_precoder_params`]) maximizes the large-array surrogate
//! objective `J(p)` via the water-filling structure of its KKT conditions.

use crate::cmat::{gram_of_rows, inv_hermitian, scale_rows, select_rows, trace_real, CMatrix};
use crate::config::SystemConfig;
use crate::selection::Selection;
use crate::{Error, Result};

/// A built precoder: matrix, common scalar gain, and the users it serves.
#[derive(Debug, Clone)]
pub struct GzfPrecoder {
    /// `M x N`; column `n` serves `selection.indices()[n]`.
    pub matrix: CMatrix,
    /// The common effective gain `chi`.
    pub chi: f64,
    pub selection: Selection,
    /// Precoder parameters of the selected users, in selection order.
    pub params: Vec<f64>,
}

/// Coefficients of the large-array surrogate objective:
/// `a_j = (1 + rho_j tau_r) / (rho_j tau_r)` (inverse estimate variance) and
/// `b_i = M rho_i / (1 + rho_i / (1 + rho_i^r tau_r))`.
#[derive(Debug, Clone)]
pub struct AsymptoticCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl AsymptoticCoefficients {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        let a = (0..cfg.users).map(|k| 1.0 / cfg.estimate_variance(k)).collect();
        let b = (0..cfg.users)
            .map(|k| {
                let rho_f = cfg.forward_snr[k];
                cfg.antennas as f64 * rho_f / (1.0 + rho_f * cfg.error_variance(k))
            })
            .collect();
        Self { a, b }
    }
}

/// Build the precoder for the selected rows of a channel estimate.
///
/// `params` holds one entry per user (length `K`); every selected user must
/// have a strictly positive parameter. Fails when the scaled Gram matrix is
/// numerically singular.
pub fn build_gzf(h_hat: &CMatrix, selection: &Selection, params: &[f64]) -> Result<GzfPrecoder> {
    let n = selection.len();
    if n > h_hat.ncols() {
        return Err(Error::Config(format!(
            "cannot zero-force {n} users with {} antennas",
            h_hat.ncols()
        )));
    }
    let p_s: Vec<f64> = selection.indices().iter().map(|&k| params[k]).collect();
    if p_s.iter().any(|&p| p <= 0.0) {
        return Err(Error::Config(
            "selected users must have strictly positive precoder parameters".into(),
        ));
    }
    let rows = select_rows(h_hat, selection.indices());
    let scales: Vec<f64> = p_s.iter().map(|p| 1.0 / p.sqrt()).collect();
    let h_ds = scale_rows(&rows, &scales);

    let gram = gram_of_rows(&h_ds);
    let gram_inv = inv_hermitian(&gram, "zero-forcing Gram")?;
    let tr = trace_real(&gram_inv);
    let matrix = (h_ds.adjoint() * gram_inv).scale(1.0 / tr.sqrt());
    Ok(GzfPrecoder {
        matrix,
        chi: 1.0 / tr.sqrt(),
        selection: selection.clone(),
        params: p_s,
    })
}

/// The scalar gain alone: `chi = (Tr[(H_ds H_ds^H)^{-1}])^{-1/2}`.
pub fn compute_chi(h_ds: &CMatrix) -> Result<f64> {
    let gram = gram_of_rows(h_ds);
    let gram_inv = inv_hermitian(&gram, "chi Gram")?;
    Ok(1.0 / trace_real(&gram_inv).sqrt())
}

/// Large-array approximation `chi ~ sqrt(M / sum_j a_j p_j)`.
pub fn large_m_chi(params: &[f64], coeffs: &AsymptoticCoefficients, antennas: usize) -> f64 {
    let denom: f64 = params.iter().zip(&coeffs.a).map(|(p, a)| p * a).sum();
    assert!(denom > 0.0, "sum of a_j p_j must be positive");
    (antennas as f64 / denom).sqrt()
}

/// The surrogate objective `J(p) = sum_i w_i log2(1 + b_i p_i / sum_j a_j p_j)`.
/// Invariant under positive scaling of `p`.
pub fn surrogate_objective(params: &[f64], coeffs: &AsymptoticCoefficients, weights: &[f64]) -> f64 {
    let denom: f64 = params.iter().zip(&coeffs.a).map(|(p, a)| p * a).sum();
    params
        .iter()
        .zip(&coeffs.b)
        .zip(weights)
        .map(|((p, b), w)| w * (1.0 + b * p / denom).log2())
        .sum()
}

const NU_TOL: f64 = 1e-10;
const NU_MAX_ITER: usize = 200;

/// Maximize `J(p)` over `p >= 0`.
///
/// The optimum has the water-filling form
/// `p_i = max(0, w_i / (nu a_i) - 1 / b_i)` where the multiplier `nu` is the
/// unique root of `sum_i a_i p_i(nu) = 1`; the left-hand side is monotone in
/// `1/nu`, so the root is found by doubling out a bracket and bisecting.
/// Returns the representative with `sum_i a_i p_i = 1` together with `nu`.
pub fn optimize_precoder_params(cfg: &SystemConfig) -> (Vec<f64>, f64) {
    let coeffs = AsymptoticCoefficients::from_config(cfg);
    let p_of = |nu: f64| -> Vec<f64> {
        (0..cfg.users)
            .map(|i| (cfg.weights[i] / (nu * coeffs.a[i]) - 1.0 / coeffs.b[i]).max(0.0))
            .collect()
    };
    let residual = |nu: f64| -> f64 {
        p_of(nu)
            .iter()
            .zip(&coeffs.a)
            .map(|(p, a)| p * a)
            .sum::<f64>()
            - 1.0
    };

    // residual is decreasing in nu: bracket a sign change by doubling
    let mut lo = 1.0;
    while residual(lo) <= 0.0 {
        lo /= 2.0;
        assert!(lo > f64::MIN_POSITIVE, "failed to bracket the multiplier");
    }
    let mut hi = 1.0;
    while residual(hi) >= 0.0 {
        hi *= 2.0;
        assert!(hi < f64::MAX / 2.0, "failed to bracket the multiplier");
    }

    let mut nu = 0.5 * (lo + hi);
    for _ in 0..NU_MAX_ITER {
        let r = residual(nu);
        if r.abs() < NU_TOL {
            break;
        }
        if r > 0.0 {
            lo = nu;
        } else {
            hi = nu;
        }
        nu = 0.5 * (lo + hi);
    }
    (p_of(nu), nu)
}

/// Users with strictly positive optimized parameters, in index order.
/// Only these can be served by a precoder built from the optimized `p`.
pub fn positive_support(params: &[f64]) -> Vec<usize> {
    params
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmat::max_abs_entry;
    use crate::rng::RngStream;
    use num_complex::Complex64;

    const EPS: f64 = 1e-9;

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn hand_evaluated_single_row() {
        // H_s = [2, 0], p = 1: A = [1, 0]^T, chi = 2
        let h = CMatrix::from_row_slice(1, 2, &[re(2.0), re(0.0)]);
        let pre = build_gzf(&h, &Selection::all(1), &[1.0]).unwrap();
        assert!((pre.chi - 2.0).abs() < EPS);
        assert!((pre.matrix[(0, 0)] - re(1.0)).norm() < EPS);
        assert!(pre.matrix[(1, 0)].norm() < EPS);
        let prod = &h * &pre.matrix;
        assert!((prod[(0, 0)].re - 2.0).abs() < EPS);
    }

    #[test]
    fn identity_channel() {
        // H_s = I2, p = (1,1): A = I2/sqrt(2), chi = 1/sqrt(2)
        let h = CMatrix::identity(2, 2);
        let pre = build_gzf(&h, &Selection::all(2), &[1.0, 1.0]).unwrap();
        let expect = 1.0 / 2f64.sqrt();
        assert!((pre.chi - expect).abs() < EPS);
        assert!(max_abs_entry(&(&pre.matrix - CMatrix::identity(2, 2).scale(expect))) < EPS);
    }

    #[test]
    fn zero_forcing_identity_and_normalization() {
        // random 3x6 estimate rows: H_ds A = chi I within 1e-9, Tr(A^H A) = 1,
        // and A matches the pseudo-inverse route.
        let mut rng = RngStream::new(20);
        for _ in 0..50 {
            let h = rng.complex_gaussian_matrix(3, 6, 1.0);
            let p = [0.5, 2.0, 1.3];
            let pre = build_gzf(&h, &Selection::all(3), &p).unwrap();

            let scales: Vec<f64> = p.iter().map(|x| 1.0 / x.sqrt()).collect();
            let h_ds = scale_rows(&h, &scales);
            let prod = &h_ds * &pre.matrix;
            let target = CMatrix::identity(3, 3).scale(pre.chi);
            assert!(max_abs_entry(&(prod - target)) < EPS);

            let trace = trace_real(&(pre.matrix.adjoint() * &pre.matrix));
            assert!((trace - 1.0).abs() < EPS);

            // independent pseudo-inverse: pinv = H^H (H H^H)^-1 for full row rank
            let pinv = h_ds.adjoint()
                * gram_of_rows(&h_ds)
                    .try_inverse()
                    .expect("full row rank");
            let tr = trace_real(&(pinv.adjoint() * &pinv));
            let a_ref = pinv.scale(1.0 / tr.sqrt());
            assert!(max_abs_entry(&(&pre.matrix - a_ref)) < 1e-8);
        }
    }

    #[test]
    fn chi_hand_values_and_scaling() {
        let h = CMatrix::from_row_slice(1, 2, &[re(2.0), re(0.0)]);
        assert!((compute_chi(&h).unwrap() - 2.0).abs() < EPS);
        let eye = CMatrix::identity(2, 2);
        assert!((compute_chi(&eye).unwrap() - 1.0 / 2f64.sqrt()).abs() < EPS);

        // homogeneity: chi(c H) = c chi(H)
        let mut rng = RngStream::new(21);
        let h = rng.complex_gaussian_matrix(2, 5, 1.0);
        let c = 3.0;
        let chi1 = compute_chi(&h).unwrap();
        let chi3 = compute_chi(&h.scale(c)).unwrap();
        assert!((chi3 - c * chi1).abs() < 1e-9 * c);
    }

    #[test]
    fn rank_deficient_rows_error() {
        let mut h = CMatrix::zeros(2, 4);
        h[(0, 0)] = re(1.0);
        h[(1, 0)] = re(1.0); // identical rows
        assert!(build_gzf(&h, &Selection::all(2), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn large_m_chi_arithmetic() {
        let coeffs = AsymptoticCoefficients {
            a: vec![2.0, 2.0],
            b: vec![1.0, 1.0],
        };
        // M = 16, a = (2,2), p = (1,1): sqrt(16/4) = 2
        assert!((large_m_chi(&[1.0, 1.0], &coeffs, 16) - 2.0).abs() < 1e-12);
        // doubling p divides by sqrt(2)
        let half = large_m_chi(&[2.0, 2.0], &coeffs, 16);
        assert!((half - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn objective_scale_invariance() {
        let cfg = SystemConfig {
            antennas: 32,
            users: 3,
            coherence: 40,
            reverse_training: 4,
            forward_training: 0,
            forward_snr: vec![1.0, 3.0, 0.4],
            reverse_snr: vec![0.2, 0.9, 0.5],
            weights: vec![1.0, 2.0, 0.7],
            comp_delay: 1,
        }
        .validate()
        .unwrap();
        let coeffs = AsymptoticCoefficients::from_config(&cfg);
        let mut rng = RngStream::new(22);
        for _ in 0..20 {
            let p: Vec<f64> = (0..3).map(|_| rng.uniform(0.01, 5.0)).collect();
            let c = rng.uniform(0.1, 10.0);
            let scaled: Vec<f64> = p.iter().map(|x| x * c).collect();
            let j1 = surrogate_objective(&p, &coeffs, &cfg.weights);
            let j2 = surrogate_objective(&scaled, &coeffs, &cfg.weights);
            assert!((j1 - j2).abs() < 1e-10, "J not scale invariant: {j1} vs {j2}");
        }
    }

    #[test]
    fn homogeneous_optimum_is_uniform() {
        // K = 4, rho_r tau_r = 1 (a = 2), unit weights: p_i = 1/8 each
        let cfg = SystemConfig::homogeneous(64, 4, 40, 4, 0, 1.0, 0.25)
            .validate()
            .unwrap();
        let (p, _nu) = optimize_precoder_params(&cfg);
        for (i, &pi) in p.iter().enumerate() {
            assert!((pi - 0.125).abs() < 1e-8, "p[{i}] = {pi}");
        }
    }

    #[test]
    fn single_user_optimum() {
        // K = 1, rho tau = 1: constraint a p = 1 with a = 2 gives p = 0.5
        let cfg = SystemConfig::homogeneous(64, 1, 40, 4, 0, 1.0, 0.25)
            .validate()
            .unwrap();
        let (p, _) = optimize_precoder_params(&cfg);
        assert!((p[0] - 0.5).abs() < 1e-8, "p = {:?}", p);
    }

    #[test]
    fn constraint_normalization_holds() {
        let cfg = SystemConfig {
            antennas: 32,
            users: 5,
            coherence: 40,
            reverse_training: 5,
            forward_training: 0,
            forward_snr: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            reverse_snr: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            weights: vec![1.0, 1.0, 2.0, 0.5, 1.0],
            comp_delay: 1,
        }
        .validate()
        .unwrap();
        let coeffs = AsymptoticCoefficients::from_config(&cfg);
        let (p, nu) = optimize_precoder_params(&cfg);
        assert!(nu > 0.0);
        let dot: f64 = p.iter().zip(&coeffs.a).map(|(p, a)| p * a).sum();
        assert!((dot - 1.0).abs() < 1e-8, "a.p = {dot}");
    }

    #[test]
    fn kkt_matches_grid_search_two_users() {
        // exhaustive search over the constraint line a.p = 1
        let mut rng = RngStream::new(23);
        for trial in 0..20 {
            let cfg = SystemConfig {
                antennas: 32,
                users: 2,
                coherence: 40,
                reverse_training: 4,
                forward_training: 0,
                forward_snr: vec![rng.uniform(0.1, 20.0), rng.uniform(0.1, 20.0)],
                reverse_snr: vec![rng.uniform(0.02, 2.0), rng.uniform(0.02, 2.0)],
                weights: vec![rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0)],
                comp_delay: 1,
            }
            .validate()
            .unwrap();
            let coeffs = AsymptoticCoefficients::from_config(&cfg);
            let (p_star, _) = optimize_precoder_params(&cfg);
            let j_star = surrogate_objective(&p_star, &coeffs, &cfg.weights);

            let steps = 200_000;
            let mut best = f64::NEG_INFINITY;
            for s in 0..=steps {
                let p0 = s as f64 / steps as f64 / coeffs.a[0];
                let p1 = (1.0 - coeffs.a[0] * p0) / coeffs.a[1];
                let j = surrogate_objective(&[p0, p1], &coeffs, &cfg.weights);
                best = best.max(j);
            }
            assert!(
                j_star >= best - 1e-3,
                "trial {trial}: KKT {j_star} below grid {best}"
            );
        }
    }

    #[test]
    fn kkt_coordinate_perturbations_do_not_improve() {
        // no single-coordinate move (projected back onto a.p = 1) gains
        // more than 1e-6
        let cfg = SystemConfig {
            antennas: 32,
            users: 4,
            coherence: 40,
            reverse_training: 4,
            forward_training: 0,
            forward_snr: vec![0.3, 1.0, 3.0, 10.0],
            reverse_snr: vec![0.03, 0.1, 0.3, 1.0],
            weights: vec![1.0, 2.0, 1.0, 0.5],
            comp_delay: 1,
        }
        .validate()
        .unwrap();
        let coeffs = AsymptoticCoefficients::from_config(&cfg);
        let (p_star, _) = optimize_precoder_params(&cfg);
        let j_star = surrogate_objective(&p_star, &coeffs, &cfg.weights);
        for i in 0..4 {
            for delta in [-0.02, -0.001, 0.001, 0.02] {
                let mut p = p_star.clone();
                p[i] = (p[i] + delta).max(0.0);
                let dot: f64 = p.iter().zip(&coeffs.a).map(|(p, a)| p * a).sum();
                if dot <= 0.0 {
                    continue;
                }
                for x in p.iter_mut() {
                    *x /= dot;
                }
                let j = surrogate_objective(&p, &coeffs, &cfg.weights);
                assert!(
                    j <= j_star + 1e-6,
                    "perturbing p[{i}] by {delta} improved J: {j} > {j_star}"
                );
            }
        }
    }

    #[test]
    fn homogeneous_params_match_unit_scheme() {
        // equal SNRs and weights: optimized p is a constant vector, so the
        // optimized precoder equals the unit-parameter precoder up to scale
        let cfg = SystemConfig::homogeneous(16, 4, 40, 4, 0, 2.0, 0.5)
            .validate()
            .unwrap();
        let (p, _) = optimize_precoder_params(&cfg);
        for w in p.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-9, "p = {p:?}");
        }
        let mut rng = RngStream::new(24);
        let h = rng.complex_gaussian_matrix(4, 16, 1.0);
        let sel = Selection::all(4);
        let a_opt = build_gzf(&h, &sel, &p).unwrap();
        let a_unit = build_gzf(&h, &sel, &[1.0; 4]).unwrap();
        assert!(max_abs_entry(&(&a_opt.matrix - &a_unit.matrix)) < 1e-9);
    }
}
