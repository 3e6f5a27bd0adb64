//! Selection probabilities under the two opportunistic rules: uniform for
//! homogeneous users, biased by the optimized precoder parameters for
//! heterogeneous ones.

use mumimo::config::{db_to_linear, SystemConfig};
use mumimo::gzf::optimize_precoder_params;
use mumimo::rng::RngStream;
use mumimo::selection::{estimate_selection_probabilities, SelectionRule};

fn main() {
    let trials = 50_000;

    let homog = SystemConfig::homogeneous(16, 6, 30, 6, 0, 1.0, 0.1)
        .validate()
        .unwrap();
    let stats = estimate_selection_probabilities(
        &SelectionRule::TopNorm { n: 3 },
        &homog,
        trials,
        &RngStream::new(1),
    );
    println!("homogeneous, top-norm, N = 3 of K = 6 (expect 0.5 each):");
    println!("  gamma = {:?}", rounded(&stats.gamma));

    // heterogeneous: users at -5, 0, +5, +10 dB forward (reverse 10 dB lower)
    let fwd_db = [-5.0, 0.0, 5.0, 10.0];
    let het = SystemConfig {
        antennas: 16,
        users: 4,
        coherence: 30,
        reverse_training: 4,
        forward_training: 0,
        forward_snr: fwd_db.iter().map(|&d| db_to_linear(d)).collect(),
        reverse_snr: fwd_db.iter().map(|&d| db_to_linear(d - 10.0)).collect(),
        weights: vec![1.0; 4],
        comp_delay: 1,
    }
    .validate()
    .unwrap();
    let (params, _) = optimize_precoder_params(&het);
    println!("\nheterogeneous, optimized params p* = {:?}", rounded(&params));
    let stats = estimate_selection_probabilities(
        &SelectionRule::WeightedNorm {
            n: 2,
            params: params.clone(),
        },
        &het,
        trials,
        &RngStream::new(2),
    );
    println!("weighted-norm, N = 2 of K = 4:");
    println!("  gamma = {:?}", rounded(&stats.gamma));
    let total: f64 = stats.gamma.iter().sum();
    println!("  sum(gamma) = {total} (equals N exactly)");
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
