//! What a forward pilot buys: conditional gain statistics at a user before
//! and after observing precoded pilots, for increasing pilot counts.

use mumimo::config::SystemConfig;
use mumimo::estimation::draw_estimate_direct;
use mumimo::gzf::build_gzf;
use mumimo::pilots::{build_pilot_pattern, posterior_gain_stats, receive_pilots};
use mumimo::rng::RngStream;
use mumimo::selection::Selection;

fn main() {
    let cfg = SystemConfig::homogeneous(8, 4, 30, 4, 0, 31.6, 3.16) // 15 / 5 dB
        .validate()
        .unwrap();
    let sel = Selection::all(cfg.users);
    let outer = 400;
    let l_post = 4000;

    for tau_f in [0usize, 1, 2] {
        let mut rng = RngStream::new(11);
        let pattern = build_pilot_pattern(tau_f, sel.len());
        let mut avg_var = 0.0;
        let mut avg_interf = 0.0;
        for _ in 0..outer {
            let (h, est) = draw_estimate_direct(&cfg, &mut rng);
            let pre = build_gzf(&est.h_hat, &sel, &[1.0; 4]).unwrap();
            let x = receive_pilots(&h, &pre.matrix, &sel, &cfg, &pattern, &mut rng);
            let stats = posterior_gain_stats(
                &est,
                0,
                0,
                &pre.matrix,
                &cfg,
                &pattern,
                &x.row(0).transpose(),
                l_post,
                &mut rng,
            )
            .unwrap();
            avg_var += stats.var_gain;
            avg_interf += stats.interference;
        }
        avg_var /= outer as f64;
        avg_interf /= outer as f64;
        println!(
            "tau_f = {tau_f}: E[var(own gain | pilots)] = {avg_var:.4}, \
             E[interference | pilots] = {avg_interf:.4}"
        );
    }
    println!("\nconditioning on more pilots shrinks the user's gain uncertainty;");
    println!("the unconditional row (tau_f = 0) is the reverse-training-only scheme");
}
