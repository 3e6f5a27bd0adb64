//! Generalized zero-forcing in action: the precoder identity, and how the
//! Monte Carlo mean of the scalar gain chi approaches its large-array
//! approximation as antennas grow.

use mumimo::cmat::max_abs_entry;
use mumimo::config::SystemConfig;
use mumimo::gzf::{build_gzf, large_m_chi, AsymptoticCoefficients};
use mumimo::rates::estimate_chi_stats;
use mumimo::rng::RngStream;
use mumimo::selection::{Selection, SelectionRule};
use nalgebra::DMatrix;

fn main() {
    let mut rng = RngStream::new(3);

    // the defining identity: H_ds A = chi I, Tr(A^H A) = 1
    let h = rng.complex_gaussian_matrix(3, 8, 1.0);
    let pre = build_gzf(&h, &Selection::all(3), &[1.0, 2.0, 0.5]).expect("full rank");
    let scales: Vec<f64> = [1.0, 2.0, 0.5].iter().map(|p: &f64| 1.0 / p.sqrt()).collect();
    let h_ds = mumimo::cmat::scale_rows(&h, &scales);
    let residual = max_abs_entry(&(&h_ds * &pre.matrix - DMatrix::identity(3, 3).scale(pre.chi)));
    println!("chi = {:.5}, zero-forcing residual = {residual:.2e}", pre.chi);

    // asymptotic consistency of E[chi] with sqrt(M / sum a_j p_j)
    let users = 4;
    println!("\nE[chi] vs large-array approximation (K = {users}, unit params):");
    for antennas in [8, 16, 32, 64, 128, 256] {
        let cfg = SystemConfig::homogeneous(antennas, users, 40, 8, 0, 1.0, 1.0)
            .validate()
            .unwrap();
        let stats = estimate_chi_stats(
            &cfg,
            &SelectionRule::All,
            &vec![1.0; users],
            5_000,
            &RngStream::new(antennas as u64),
        )
        .unwrap();
        let approx = large_m_chi(
            &vec![1.0; users],
            &AsymptoticCoefficients::from_config(&cfg),
            antennas,
        );
        println!(
            "  M = {antennas:3}: E[chi] = {:.4}, approx = {:.4} ({:+.2}%)",
            stats.mean,
            approx,
            100.0 * (stats.mean - approx) / approx
        );
    }
}
