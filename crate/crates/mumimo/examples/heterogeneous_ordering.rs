//! Heterogeneous benchmark (12 users spread over 0/5/10 dB): parameter
//! optimization and user selection each add net rate on top of plain
//! zero-forcing.

use mumimo::experiments::{heterogeneous_preset, options_for_trials};
use mumimo::rates::{evaluate_scheme, Scheme};
use mumimo::rng::RngStream;

fn main() {
    let opts = options_for_trials(20_000);
    for antennas in [16, 32] {
        let cfg = heterogeneous_preset(antennas);
        println!("M = {antennas}, K = 12, T = 30, tau_r = 12:");
        let root = RngStream::new(antennas as u64);
        for (i, (name, describe)) in [
            ("zf", "plain zero-forcing"),
            ("gzf-opt", "+ optimized parameters"),
            ("gzf-sch", "+ user selection"),
        ]
        .iter()
        .enumerate()
        {
            let scheme = Scheme::parse(name).unwrap();
            let r = evaluate_scheme(&cfg, scheme, &opts, &root.substream(i as u64)).unwrap();
            println!(
                "  {:<24} net = {:.3} +- {:.3}  (N = {})",
                *describe,
                r.net,
                r.half_width,
                r.selected
            );
        }
    }
}
