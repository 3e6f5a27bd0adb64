//! Reverse-link training and LMMSE estimation: runs the physical pipeline
//! (pilots in noise) and compares the empirical estimate/error variances
//! and their correlation against the closed-form values.

use mumimo::config::SystemConfig;
use mumimo::estimation::{draw_channel, lmmse_estimate, reverse_train};
use mumimo::rng::RngStream;
use num_complex::Complex64;

fn main() {
    let cfg = SystemConfig::homogeneous(16, 4, 30, 6, 0, 1.0, 0.5)
        .validate()
        .expect("valid config");
    let mut rng = RngStream::new(42);

    let trials = 20_000;
    let (mut est_sq, mut err_sq) = (0.0, 0.0);
    let mut cross = Complex64::ZERO;
    let mut entries = 0usize;
    for _ in 0..trials {
        let h = draw_channel(cfg.antennas, cfg.users, &mut rng);
        let y = reverse_train(&h, &cfg, &mut rng);
        let est = lmmse_estimate(&y, &cfg);
        let err = &h - &est.h_hat;
        for (e, d) in est.h_hat.iter().zip(err.iter()) {
            est_sq += e.norm_sqr();
            err_sq += d.norm_sqr();
            cross += e * d.conj();
            entries += 1;
        }
    }

    let est_var = est_sq / entries as f64;
    let err_var = err_sq / entries as f64;
    let corr = cross.norm() / (est_sq * err_sq).sqrt();
    println!(
        "rho_r = {:.2}, tau_r = {} -> rho tau = {:.1}",
        cfg.reverse_snr[0],
        cfg.reverse_training,
        cfg.reverse_snr[0] * cfg.reverse_training as f64
    );
    println!(
        "estimate variance: empirical {est_var:.4}, theory {:.4}",
        cfg.estimate_variance(0)
    );
    println!(
        "error variance:    empirical {err_var:.4}, theory {:.4}",
        cfg.error_variance(0)
    );
    println!("estimate/error correlation magnitude: {corr:.2e} (should be ~0)");
}
