//! One operating point, every scheme: net achievable rates with and without
//! forward pilots, next to the genie bounds (a single column of the
//! benchmark grid).

use mumimo::experiments::{options_for_trials, table1_config};
use mumimo::rates::{evaluate_scheme, evaluate_upper_bound, Scheme};
use mumimo::rng::RngStream;

fn main() {
    let snr_db = 20.0;
    let cfg = table1_config(snr_db).unwrap();
    let opts = options_for_trials(10_000);
    let root = RngStream::new(1);

    println!("M = K = 8, tau_r = 8, T = 30, forward {snr_db} dB, reverse {} dB", snr_db - 10.0);
    println!("{:<16} {:>8} {:>8} {:>4}", "scheme", "net", "sum", "N");
    for (i, name) in [
        "zf",
        "zf-sch",
        "zf-sch:fp1",
        "zf-sch:fp2",
        "svh:fp1",
        "mod-svh:fp1",
        "mod-svh:fp2",
    ]
    .iter()
    .enumerate()
    {
        let scheme = Scheme::parse(name).unwrap();
        let r = evaluate_scheme(&cfg, scheme, &opts, &root.substream(i as u64)).unwrap();
        println!(
            "{:<16} {:>8.3} {:>8.3} {:>4}",
            r.scheme, r.net, r.weighted_sum, r.selected
        );
    }
    for (i, name) in ["zf", "zf-sch", "svh", "mod-svh"].iter().enumerate() {
        let scheme = Scheme::parse(name).unwrap();
        let mut opts = opts.clone();
        opts.restarts = if *name == "mod-svh" { 10 } else { 1 };
        let r = evaluate_upper_bound(&cfg, scheme, &opts, &root.substream(50 + i as u64)).unwrap();
        println!(
            "{:<16} {:>8.3} {:>8.3} {:>4}",
            r.scheme, r.net, r.weighted_sum, r.selected
        );
    }
}
