//! The training/data trade-off: optimal reverse training length per SNR for
//! a 32-antenna, 8-user system. Roughly half the coherence interval at very
//! low SNR, the minimum (K symbols) at high SNR.

use mumimo::config::SystemConfig;
use mumimo::experiments::{options_for_trials, training_sweep};
use mumimo::rates::Scheme;

fn main() {
    let base = SystemConfig::homogeneous(32, 8, 30, 8, 0, 1.0, 0.1)
        .validate()
        .unwrap();
    let scheme = Scheme::parse("zf-sch").unwrap();
    let snrs: Vec<f64> = vec![-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 20.0, 30.0];
    let rows = training_sweep(&base, scheme, &snrs, 1, &options_for_trials(10_000)).unwrap();

    println!("M = 32, K = 8, T = 30, reverse SNR = forward - 10 dB");
    println!("{:>10} {:>7} {:>10} {:>4}", "fwd dB", "tau_r*", "net", "N*");
    for row in rows {
        println!(
            "{:>10.1} {:>7} {:>10.4} {:>4}",
            row.sweep_value, row.tau_r, row.net, row.selected
        );
    }
}
