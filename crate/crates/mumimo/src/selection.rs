//! Opportunistic user selection from the channel estimate.
//!
//! Two short-term rules: the homogeneous rule keeps the `N` users with the
//! largest estimated channel gains; the heterogeneous rule first normalizes
//! each estimated row to unit entry variance and orders users by
//! `p_k * ||z_k||^2`, so the long-term precoder parameters bias the ordering.
//! Ties break toward the lower user index, which makes both rules total and
//! deterministic.

use rayon::prelude::*;

use crate::cmat::{row_norms_sq, CMatrix};
use crate::config::SystemConfig;
use crate::rng::RngStream;
use crate::{Error, Result};

/// An ordered set of selected user indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    indices: Vec<usize>,
}

impl Selection {
    /// Build from ordered indices, checking distinctness and range.
    pub fn new(indices: Vec<usize>, users: usize) -> Result<Self> {
        if indices.is_empty() || indices.len() > users {
            return Err(Error::Config(format!(
                "selection size must be between 1 and K = {users}"
            )));
        }
        let mut seen = vec![false; users];
        for &i in &indices {
            if i >= users || seen[i] {
                return Err(Error::Config(format!(
                    "selection indices must be distinct and below K = {users}"
                )));
            }
            seen[i] = true;
        }
        Ok(Self { indices })
    }

    /// Every user, in index order.
    pub fn all(users: usize) -> Self {
        Self {
            indices: (0..users).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, user: usize) -> bool {
        self.indices.contains(&user)
    }

    /// Position of `user` within the selection, if selected.
    pub fn position(&self, user: usize) -> Option<usize> {
        self.indices.iter().position(|&i| i == user)
    }
}

/// Empirical per-user selection probabilities.
#[derive(Debug, Clone)]
pub struct SelectionStats {
    /// `gamma[k]` = fraction of trials in which user `k` was selected.
    pub gamma: Vec<f64>,
    pub trials: usize,
}

/// A selection rule with its target size.
#[derive(Debug, Clone)]
pub enum SelectionRule {
    /// Serve every user.
    All,
    /// Largest estimated row norms (homogeneous rule).
    TopNorm { n: usize },
    /// Largest `p_k ||z_k||^2` with variance-normalized rows
    /// (heterogeneous rule). `params` has one entry per user.
    WeightedNorm { n: usize, params: Vec<f64> },
}

impl SelectionRule {
    pub fn apply(&self, h_hat: &CMatrix, cfg: &SystemConfig) -> Selection {
        match self {
            SelectionRule::All => Selection::all(cfg.users),
            SelectionRule::TopNorm { n } => select_top_norm(h_hat, *n),
            SelectionRule::WeightedNorm { n, params } => {
                select_weighted_norm(h_hat, params, cfg, *n)
            }
        }
    }

    pub fn size(&self, cfg: &SystemConfig) -> usize {
        match self {
            SelectionRule::All => cfg.users,
            SelectionRule::TopNorm { n } | SelectionRule::WeightedNorm { n, .. } => *n,
        }
    }
}

fn take_top(scores: &[f64], n: usize) -> Selection {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .expect("selection scores must not be NaN")
            .then(i.cmp(&j))
    });
    order.truncate(n);
    Selection { indices: order }
}

/// Keep the `N` users with the largest estimated channel gains
/// `||h_hat_k||^2`; ties break toward the lower index.
pub fn select_top_norm(h_hat: &CMatrix, n: usize) -> Selection {
    assert!(n >= 1 && n <= h_hat.nrows());
    take_top(&row_norms_sq(h_hat), n)
}

/// Heterogeneous rule: normalize each row to unit entry variance
/// (`z_k = h_hat_k * sqrt((1 + rho_k tau_r) / (rho_k tau_r))`), order by
/// `p_k ||z_k||^2` descending, and keep the first `N`. Users with `p_k = 0`
/// rank last.
pub fn select_weighted_norm(
    h_hat: &CMatrix,
    params: &[f64],
    cfg: &SystemConfig,
    n: usize,
) -> Selection {
    assert!(n >= 1 && n <= h_hat.nrows());
    assert_eq!(params.len(), cfg.users);
    let norms = row_norms_sq(h_hat);
    let scores: Vec<f64> = (0..cfg.users)
        .map(|k| params[k] * norms[k] / cfg.estimate_variance(k))
        .collect();
    take_top(&scores, n)
}

/// Monte Carlo estimate of the per-user selection probabilities under a
/// rule. Trials parallelize over independent substreams; the reduction is
/// an ordered count, so the result is deterministic in `(seed, trials)`.
pub fn estimate_selection_probabilities(
    rule: &SelectionRule,
    cfg: &SystemConfig,
    trials: usize,
    rng: &RngStream,
) -> SelectionStats {
    assert!(trials >= 1);
    let counts = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = rng.substream(t as u64);
            let est = crate::estimation::draw_estimate_only(cfg, &mut stream);
            let sel = rule.apply(&est.h_hat, cfg);
            let mut hit = vec![0u32; cfg.users];
            for &k in sel.indices() {
                hit[k] = 1;
            }
            hit
        })
        .collect::<Vec<_>>();
    let mut gamma = vec![0.0; cfg.users];
    for hit in counts {
        for (g, h) in gamma.iter_mut().zip(hit) {
            *g += h as f64;
        }
    }
    for g in gamma.iter_mut() {
        *g /= trials as f64;
    }
    SelectionStats { gamma, trials }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmat::select_rows;
    use crate::estimation::draw_estimate_only;

    fn cfg(users: usize) -> SystemConfig {
        SystemConfig::homogeneous(8, users, 32, users.max(4), 0, 1.0, 1.0)
            .validate()
            .unwrap()
    }

    fn matrix_with_row_norms(norms: &[f64], cols: usize) -> CMatrix {
        let mut m = CMatrix::zeros(norms.len(), cols);
        for (i, &s) in norms.iter().enumerate() {
            m[(i, 0)] = num_complex::Complex64::new(s.sqrt(), 0.0);
        }
        m
    }

    #[test]
    fn top_norm_selects_all_when_n_is_k() {
        let m = matrix_with_row_norms(&[3.0, 1.0, 2.0], 4);
        let sel = select_top_norm(&m, 3);
        assert_eq!(sel.len(), 3);
        assert!(sel.contains(0) && sel.contains(1) && sel.contains(2));
    }

    #[test]
    fn top_norm_orders_by_gain() {
        // row norms (3, 1, 2) -> users {0, 2} for N = 2
        let m = matrix_with_row_norms(&[3.0, 1.0, 2.0], 4);
        let sel = select_top_norm(&m, 2);
        assert_eq!(sel.indices(), &[0, 2]);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let m = matrix_with_row_norms(&[2.0, 2.0, 2.0], 4);
        let sel = select_top_norm(&m, 2);
        assert_eq!(sel.indices(), &[0, 1]);
    }

    #[test]
    fn weighted_rule_reduces_to_top_norm() {
        // equal params and homogeneous SNRs: identical output on every draw
        let cfg = cfg(6);
        let mut rng = RngStream::new(10);
        for _ in 0..200 {
            let est = draw_estimate_only(&cfg, &mut rng);
            let a = select_top_norm(&est.h_hat, 3);
            let b = select_weighted_norm(&est.h_hat, &[0.7; 6], &cfg, 3);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_param_ranks_last() {
        let cfg = cfg(2);
        let mut rng = RngStream::new(11);
        for _ in 0..100 {
            let est = draw_estimate_only(&cfg, &mut rng);
            let sel = select_weighted_norm(&est.h_hat, &[1.0, 0.0], &cfg, 1);
            assert_eq!(sel.indices(), &[0]);
        }
    }

    #[test]
    fn permutation_equivariance() {
        // permuting user rows together with their SNRs/params permutes the
        // selection the same way
        let mut cfg = cfg(4);
        cfg.reverse_snr = vec![0.3, 0.9, 0.5, 1.1];
        let params = vec![1.0, 0.4, 2.0, 0.8];
        let perm = [2usize, 0, 3, 1]; // row i of permuted = row perm[i] of original
        let mut rng = RngStream::new(16);
        for _ in 0..100 {
            let est = draw_estimate_only(&cfg, &mut rng);
            let sel = select_weighted_norm(&est.h_hat, &params, &cfg, 2);

            let mut pcfg = cfg.clone();
            pcfg.reverse_snr = perm.iter().map(|&i| cfg.reverse_snr[i]).collect();
            let pparams: Vec<f64> = perm.iter().map(|&i| params[i]).collect();
            let ph = select_rows(&est.h_hat, &perm);
            let psel = select_weighted_norm(&ph, &pparams, &pcfg, 2);

            let mapped: Vec<usize> = psel.indices().iter().map(|&i| perm[i]).collect();
            assert_eq!(mapped, sel.indices());
        }
    }

    #[test]
    fn homogeneous_probabilities_are_symmetric() {
        let cfg = cfg(4);
        let rng = RngStream::new(12);
        let stats = estimate_selection_probabilities(
            &SelectionRule::TopNorm { n: 2 },
            &cfg,
            20_000,
            &rng,
        );
        // each user selected with probability N/K = 0.5
        let se = (0.5f64 * 0.5 / 20_000.0).sqrt();
        for (k, g) in stats.gamma.iter().enumerate() {
            assert!((g - 0.5).abs() < 4.0 * se, "gamma[{k}] = {g}");
        }
        let total: f64 = stats.gamma.iter().sum();
        assert!((total - 2.0).abs() < 1e-12, "fixed N per trial: sum = {total}");
    }

    #[test]
    fn single_user_selection_is_uniform() {
        let cfg = cfg(4);
        let rng = RngStream::new(17);
        let stats =
            estimate_selection_probabilities(&SelectionRule::TopNorm { n: 1 }, &cfg, 20_000, &rng);
        let se = (0.25f64 * 0.75 / 20_000.0).sqrt();
        for g in &stats.gamma {
            assert!((g - 0.25).abs() < 3.0 * se, "gamma = {:?}", stats.gamma);
        }
    }

    #[test]
    fn select_all_gives_probability_one() {
        let cfg = cfg(3);
        let rng = RngStream::new(13);
        let stats = estimate_selection_probabilities(&SelectionRule::All, &cfg, 50, &rng);
        assert!(stats.gamma.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn weighted_rule_favors_larger_params() {
        // equal SNRs, p = (2, 1): user 0 selected more often for N = 1
        let cfg = cfg(2);
        let rng = RngStream::new(14);
        let stats = estimate_selection_probabilities(
            &SelectionRule::WeightedNorm {
                n: 1,
                params: vec![2.0, 1.0],
            },
            &cfg,
            20_000,
            &rng,
        );
        assert!(
            stats.gamma[0] > stats.gamma[1] + 10.0 / (stats.trials as f64).sqrt(),
            "gamma = {:?}",
            stats.gamma
        );
    }

    #[test]
    fn determinism_same_estimate_same_selection() {
        let cfg = cfg(5);
        let mut rng = RngStream::new(15);
        let est = draw_estimate_only(&cfg, &mut rng);
        let a = select_top_norm(&est.h_hat, 3);
        let b = select_top_norm(&est.h_hat, 3);
        assert_eq!(a, b);
    }
}
