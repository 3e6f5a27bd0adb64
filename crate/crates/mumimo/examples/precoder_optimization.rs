//! Water-filling optimization of the per-user precoder parameters for a
//! heterogeneous cell, checked against a dense grid search on the
//! constraint line.

use mumimo::config::{db_to_linear, SystemConfig};
use mumimo::gzf::{optimize_precoder_params, surrogate_objective, AsymptoticCoefficients};

fn main() {
    // two strong users, one weak, one heavily weighted
    let cfg = SystemConfig {
        antennas: 64,
        users: 4,
        coherence: 40,
        reverse_training: 4,
        forward_training: 0,
        forward_snr: vec![10.0, 10.0, db_to_linear(-5.0), 1.0],
        reverse_snr: vec![1.0, 1.0, db_to_linear(-15.0), 0.1],
        weights: vec![1.0, 1.0, 1.0, 3.0],
        comp_delay: 1,
    }
    .validate()
    .expect("valid config");

    let coeffs = AsymptoticCoefficients::from_config(&cfg);
    let (p, nu) = optimize_precoder_params(&cfg);
    println!("multiplier nu* = {nu:.6}");
    for k in 0..cfg.users {
        println!(
            "user {k}: w = {:.1}, a = {:.3}, b = {:.1} -> p* = {:.5}",
            cfg.weights[k], coeffs.a[k], coeffs.b[k], p[k]
        );
    }
    let j_star = surrogate_objective(&p, &coeffs, &cfg.weights);
    println!("objective J(p*) = {j_star:.6}");

    // random search on the constraint sum_i a_i p_i = 1 for comparison
    let mut best = f64::NEG_INFINITY;
    let mut rng = mumimo::rng::RngStream::new(7);
    for _ in 0..200_000 {
        let raw: Vec<f64> = (0..cfg.users).map(|_| rng.uniform(0.0, 1.0)).collect();
        let dot: f64 = raw.iter().zip(&coeffs.a).map(|(p, a)| p * a).sum();
        let cand: Vec<f64> = raw.iter().map(|p| p / dot).collect();
        best = best.max(surrogate_objective(&cand, &coeffs, &cfg.weights));
    }
    println!("best of 200000 random feasible points: {best:.6}");
    assert!(j_star >= best - 1e-3);
}
