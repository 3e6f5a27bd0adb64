//! Achievable-rate evaluation: Monte Carlo statistics of the random
//! precoder gains, the closed-form rate expressions built from them, genie
//! upper bounds, and brute-force optimization of training length and
//! selection size.
//!
//! Two evaluation routes cover all schemes:
//!
//! * **Moment route** (reverse training only, zero-forcing family): the
//!   per-user rate depends on the estimate only through the mean and
//!   variance of the scalar gain `chi` (or its selection counterpart `eta`)
//!   and the selection probabilities `gamma`, all estimated by Monte Carlo
//!   over the long-term statistics.
//! * **Observation route** (forward pilots, and any precoder without a
//!   scalar-gain structure): an outer Monte Carlo simulates the full
//!   transmission; each served user's conditional gain statistics given its
//!   pilot observation are computed by importance-weighting gain/observation
//!   samples collected across the *other* outer trials. The users only know
//!   long-term statistics, so the sample bank — drawn from exactly the joint
//!   distribution of gains and observations — is the faithful realization of
//!   their conditional estimator. Samples from the trial being decoded are
//!   excluded (they share the realized precoder), and with several pilot
//!   symbols only samples from the same pilot residue class are pooled.
//!
//! Net rates discount the sum rate by the fraction of the coherence
//! interval spent on training and computation, minus a one-bit-per-user
//! signaling charge when the served set varies between intervals.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cmat::{scale_rows, select_rows, CMatrix, CVector};
use crate::config::SystemConfig;
use crate::estimation::{draw_estimate_direct, draw_estimate_only, ChannelEstimate};
use crate::gzf::{build_gzf, compute_chi, optimize_precoder_params, positive_support};
use crate::pilots::{build_pilot_pattern, effective_gain_row, posterior_gain_stats, receive_pilots};
use crate::rng::RngStream;
use crate::selection::{Selection, SelectionRule};
use crate::svh::{mod_svh_precoder, multi_restart_best, svh_precoder, SvhInit, SvhProblem};
use crate::{Error, Result};

/// Monte Carlo mean and variance of the zero-forcing gain `chi`.
#[derive(Debug, Clone)]
pub struct ChiStats {
    pub mean: f64,
    pub variance: f64,
    pub trials: usize,
}

/// Monte Carlo mean and variance of `eta`, the gain of the top-norm
/// selection applied to a unit-variance channel.
#[derive(Debug, Clone)]
pub struct EtaStats {
    pub mean: f64,
    pub variance: f64,
    pub antennas: usize,
    pub users: usize,
    pub selected: usize,
    pub trials: usize,
}

/// A rate evaluation outcome.
#[derive(Debug, Clone)]
pub struct RateReport {
    /// Mean data-phase rate of each user in bits/symbol, averaged over
    /// intervals (zero when the user is not served), without its weight.
    pub per_user: Vec<f64>,
    /// Weighted sum rate over the data phase.
    pub weighted_sum: f64,
    /// Net rate after training, computation, and signaling overhead.
    pub net: f64,
    /// 95% Monte Carlo half-width of `weighted_sum`.
    pub half_width: f64,
    pub tau_r: usize,
    pub tau_f: usize,
    /// Number of users served per interval.
    pub selected: usize,
    pub scheme: String,
}

fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var)
}

/// Sample mean/variance of `chi` under a selection rule. The rule is applied
/// to a fresh estimate draw each trial and `chi` is computed from the
/// realized selection, so the statistics are conditioned on the rule the
/// same way the rate formula uses them.
pub fn estimate_chi_stats(
    cfg: &SystemConfig,
    rule: &SelectionRule,
    params: &[f64],
    trials: usize,
    rng: &RngStream,
) -> Result<ChiStats> {
    assert!(trials >= 1);
    let values = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = rng.substream(t as u64);
            let est = draw_estimate_only(cfg, &mut stream);
            let sel = rule.apply(&est.h_hat, cfg);
            let rows = select_rows(&est.h_hat, sel.indices());
            let scales: Vec<f64> = sel
                .indices()
                .iter()
                .map(|&k| 1.0 / params[k].sqrt())
                .collect();
            compute_chi(&scale_rows(&rows, &scales))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, variance) = mean_and_variance(&values);
    Ok(ChiStats {
        mean,
        variance,
        trials,
    })
}

/// Sample mean/variance of `eta`: draw a `K x M` matrix of i.i.d. `CN(0,1)`
/// entries, keep the `N` rows with the largest norms, and evaluate the
/// zero-forcing gain of that submatrix.
pub fn estimate_eta_stats(
    antennas: usize,
    users: usize,
    selected: usize,
    trials: usize,
    rng: &RngStream,
) -> EtaStats {
    assert!(selected >= 1 && selected <= users && selected <= antennas);
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = rng.substream(t as u64);
            let z = stream.complex_gaussian_matrix(users, antennas, 1.0);
            let sel = crate::selection::select_top_norm(&z, selected);
            let u = select_rows(&z, sel.indices());
            compute_chi(&u).expect("Gaussian rows are almost surely full rank")
        })
        .collect();
    let (mean, variance) = mean_and_variance(&values);
    EtaStats {
        mean,
        variance,
        antennas,
        users,
        selected,
        trials,
    }
}

/// Weighted-sum rate of the reverse-training-only scheme from the gain
/// statistics: user `k` contributes
/// `gamma_k w_k log2(1 + rho_k p_k E[chi]^2 / (1 + rho_k (err_k + p_k var chi)))`.
pub fn rate_reverse_only(
    cfg: &SystemConfig,
    params: &[f64],
    chi: &ChiStats,
    gamma: &[f64],
) -> RateReport {
    let mut per_user = vec![0.0; cfg.users];
    let mut weighted = 0.0;
    for k in 0..cfg.users {
        let rho = cfg.forward_snr[k];
        let signal = rho * params[k] * chi.mean * chi.mean;
        let denom = 1.0 + rho * (cfg.error_variance(k) + params[k] * chi.variance);
        let rate = gamma[k] * (1.0 + signal / denom).log2();
        per_user[k] = rate;
        weighted += cfg.weights[k] * rate;
    }
    RateReport {
        per_user,
        weighted_sum: weighted,
        net: weighted,
        half_width: 0.0,
        tau_r: cfg.reverse_training,
        tau_f: 0,
        selected: cfg.users,
        scheme: String::new(),
    }
}

/// Homogeneous specialization with top-norm selection of `N` users:
/// `N log2(1 + rho e E[eta]^2 / (1 + rho(err + e var eta)))` with
/// `e = rho_r tau_r / (1 + rho_r tau_r)`.
pub fn rate_homogeneous(cfg: &SystemConfig, selected: usize, eta: &EtaStats) -> Result<RateReport> {
    if !cfg.is_homogeneous() {
        return Err(Error::Misuse(
            "homogeneous rate formula called on a heterogeneous configuration".into(),
        ));
    }
    let rho = cfg.forward_snr[0];
    let e = cfg.estimate_variance(0);
    let signal = rho * e * eta.mean * eta.mean;
    let denom = 1.0 + rho * (cfg.error_variance(0) + e * eta.variance);
    let per = (1.0 + signal / denom).log2();
    let weighted = selected as f64 * per;
    // each user is served a fraction N/K of the intervals
    let share = selected as f64 / cfg.users as f64;
    Ok(RateReport {
        per_user: vec![share * per; cfg.users],
        weighted_sum: weighted,
        net: weighted,
        half_width: 0.0,
        tau_r: cfg.reverse_training,
        tau_f: 0,
        selected,
        scheme: String::new(),
    })
}

/// Net rate: `((T - tau_r - tau_f - comp_delay)/T) R - 1{N < K} sum(w)/T`,
/// floored at zero.
pub fn net_rate(cfg: &SystemConfig, r_sigma: f64, tau_r: usize, tau_f: usize, selected: usize) -> f64 {
    net_with_signaling(cfg, r_sigma, tau_r, tau_f, selected < cfg.users)
}

fn net_with_signaling(
    cfg: &SystemConfig,
    r_sigma: f64,
    tau_r: usize,
    tau_f: usize,
    signaled: bool,
) -> f64 {
    let data = cfg
        .coherence
        .saturating_sub(tau_r + tau_f + cfg.comp_delay) as f64;
    let penalty = if signaled { cfg.weight_sum() / cfg.coherence as f64 } else { 0.0 };
    (data / cfg.coherence as f64 * r_sigma - penalty).max(0.0)
}

/// Genie bound for one channel draw: the rate if each served user knew its
/// effective gains exactly:
/// `sum_j w_j log2(1 + rho_j |h_j a_j|^2 / (1 + rho_j sum_{l != j} |h_j a_l|^2))`.
pub fn genie_upper_bound(h: &CMatrix, a: &CMatrix, selection: &Selection, cfg: &SystemConfig) -> f64 {
    let mut total = 0.0;
    for (pos, &k) in selection.indices().iter().enumerate() {
        let g = effective_gain_row(h, k, a, cfg.forward_snr[k]);
        let own = g[pos].norm_sqr();
        let interf: f64 = g.iter().map(|z| z.norm_sqr()).sum::<f64>() - own;
        total += cfg.weights[k] * (1.0 + own / (1.0 + interf)).log2();
    }
    total
}

// ---------------------------------------------------------------------------
// Schemes
// ---------------------------------------------------------------------------

/// Precoding/selection scheme families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeBase {
    /// Zero-forcing with unit parameters, all users served.
    Zf,
    /// Zero-forcing with top-norm selection of an optimized user count.
    ZfSch,
    /// Generalized zero-forcing with optimized parameters, no short-term
    /// selection.
    GzfOpt,
    /// Optimized parameters plus weighted-norm selection.
    GzfSch,
    /// Fixed-point sum-rate precoder run on the estimate as if exact.
    Svh,
    /// Fixed-point precoder averaged over sampled estimation errors.
    ModSvh,
}

impl SchemeBase {
    fn label(self) -> &'static str {
        match self {
            SchemeBase::Zf => "ZF",
            SchemeBase::ZfSch => "ZF-Sch",
            SchemeBase::GzfOpt => "GZF-Opt",
            SchemeBase::GzfSch => "GZF-Sch",
            SchemeBase::Svh => "SVH",
            SchemeBase::ModSvh => "Mod-SVH",
        }
    }
}

/// A scheme is a base family plus a forward-pilot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scheme {
    pub base: SchemeBase,
    pub forward_pilots: usize,
}

impl Scheme {
    pub fn new(base: SchemeBase, forward_pilots: usize) -> Self {
        Self {
            base,
            forward_pilots,
        }
    }

    /// Parse identifiers like `zf`, `zf-sch:fp1`, `mod-svh:fp2`.
    pub fn parse(s: &str) -> Result<Self> {
        let (base_str, fp) = match s.split_once(":fp") {
            Some((b, n)) => (
                b,
                n.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad pilot count in scheme {s:?}")))?,
            ),
            None => (s, 0),
        };
        let base = match base_str {
            "zf" => SchemeBase::Zf,
            "zf-sch" => SchemeBase::ZfSch,
            "gzf-opt" => SchemeBase::GzfOpt,
            "gzf-sch" => SchemeBase::GzfSch,
            "svh" => SchemeBase::Svh,
            "mod-svh" => SchemeBase::ModSvh,
            other => {
                return Err(Error::Parse(format!(
                    "unknown scheme {other:?}; expected zf, zf-sch, gzf-opt, gzf-sch, svh or mod-svh"
                )))
            }
        };
        Ok(Self::new(base, fp))
    }

    pub fn label(&self) -> String {
        format!("{}-FP({})", self.base.label(), self.forward_pilots)
    }

    pub fn ub_label(&self) -> String {
        format!("{}-UB", self.base.label())
    }

    fn has_short_term_selection(&self) -> bool {
        matches!(self.base, SchemeBase::ZfSch | SchemeBase::GzfSch)
    }

    fn is_gzf_family(&self) -> bool {
        !matches!(self.base, SchemeBase::Svh | SchemeBase::ModSvh)
    }
}

/// Monte Carlo budgets and variants for scheme evaluation.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Trials for chi/eta/gamma statistics.
    pub stat_trials: usize,
    /// Outer transmission trials for the observation route and bounds.
    pub outer_trials: usize,
    /// Posterior samples per user for the estimate-conditioned posterior.
    pub l_post: usize,
    /// Error samples in the estimated-channel fixed-point precoder.
    pub svh_samples: usize,
    pub svh_iterations: usize,
    /// Restarts for the bound-side fixed-point search.
    pub restarts: usize,
    /// Serve exactly this many users instead of optimizing the count.
    pub fixed_selection_size: Option<usize>,
    /// Which uncertainty set the users' conditional estimator integrates.
    pub posterior: PosteriorModel,
}

/// What the decoding user is assumed not to know.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorModel {
    /// The user knows only long-term statistics; gains and observations are
    /// sampled jointly across outer trials (faithful to the system model).
    Marginal,
    /// The user additionally knows the realized estimate; only its own
    /// error row is integrated. Optimistic, kept for comparison.
    ConditionalOnEstimate,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            stat_trials: 10_000,
            outer_trials: 500,
            l_post: 2000,
            svh_samples: 50,
            svh_iterations: 5,
            restarts: 1,
            fixed_selection_size: None,
            posterior: PosteriorModel::Marginal,
        }
    }
}

/// Resolved per-configuration scheme state.
struct SchemePlan {
    scheme: Scheme,
    /// Precoder parameters (unit for plain zero-forcing).
    params: Vec<f64>,
    /// Users a selection can ever pick (positive-parameter support).
    candidates: usize,
}

impl SchemePlan {
    fn resolve(cfg: &SystemConfig, scheme: Scheme) -> Self {
        let (params, candidates) = match scheme.base {
            SchemeBase::GzfOpt | SchemeBase::GzfSch => {
                let (p, _nu) = optimize_precoder_params(cfg);
                let support = positive_support(&p).len();
                (p, support)
            }
            _ => (vec![1.0; cfg.users], cfg.users),
        };
        Self {
            scheme,
            params,
            candidates,
        }
    }

    /// Largest selectable size.
    fn max_selection(&self) -> usize {
        self.candidates
    }

    fn selection_rule(&self, n: usize) -> SelectionRule {
        match self.scheme.base {
            SchemeBase::Zf | SchemeBase::Svh | SchemeBase::ModSvh => SelectionRule::All,
            SchemeBase::GzfOpt => SelectionRule::WeightedNorm {
                n: self.candidates,
                params: self.params.clone(),
            },
            SchemeBase::ZfSch => SelectionRule::TopNorm { n },
            SchemeBase::GzfSch => SelectionRule::WeightedNorm {
                n,
                params: self.params.clone(),
            },
        }
    }

    /// Whether serving `n` users requires per-interval signaling: only when
    /// the served set actually varies (a short-term rule choosing fewer
    /// users than it has candidates).
    fn signaled(&self, n: usize) -> bool {
        self.scheme.has_short_term_selection() && n < self.candidates
    }

    /// Build the transmission precoder for one estimate draw. Returns the
    /// served users and the trace-normalized `M x N` matrix.
    fn build(
        &self,
        est: &ChannelEstimate,
        cfg: &SystemConfig,
        n: usize,
        restarts: usize,
        opts: &EvalOptions,
        rng: &mut RngStream,
    ) -> Result<(Selection, CMatrix)> {
        match self.scheme.base {
            SchemeBase::Zf | SchemeBase::ZfSch | SchemeBase::GzfOpt | SchemeBase::GzfSch => {
                let sel = self.selection_rule(n).apply(&est.h_hat, cfg);
                let pre = build_gzf(&est.h_hat, &sel, &self.params)?;
                Ok((sel, pre.matrix))
            }
            SchemeBase::Svh => {
                let scales: Vec<f64> = cfg.forward_snr.iter().map(|r| r.sqrt()).collect();
                let problem = SvhProblem {
                    h_eff: scale_rows(&est.h_hat, &scales),
                    sigma2: 1.0,
                    iterations: opts.svh_iterations,
                };
                let res = svh_precoder(&problem, SvhInit::Identity, rng)?;
                Ok((Selection::all(cfg.users), normalize_trace(res.matrix)))
            }
            SchemeBase::ModSvh => {
                let scales: Vec<f64> = cfg.forward_snr.iter().map(|r| r.sqrt()).collect();
                let h_eff = scale_rows(&est.h_hat, &scales);
                let err_eff: Vec<f64> = (0..cfg.users)
                    .map(|k| cfg.forward_snr[k] * est.err_var[k])
                    .collect();
                let res = if restarts > 1 {
                    multi_restart_best(
                        &h_eff,
                        &err_eff,
                        restarts,
                        opts.svh_samples,
                        opts.svh_iterations,
                        rng,
                    )?
                } else {
                    mod_svh_precoder(
                        &h_eff,
                        &err_eff,
                        opts.svh_samples,
                        opts.svh_iterations,
                        rng,
                    )?
                };
                Ok((Selection::all(cfg.users), normalize_trace(res.matrix)))
            }
        }
    }
}

fn normalize_trace(a: CMatrix) -> CMatrix {
    let tr: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    a.scale(1.0 / tr.sqrt())
}

// ---------------------------------------------------------------------------
// Moment route (reverse training only, zero-forcing family)
// ---------------------------------------------------------------------------

const HALF_WIDTH_BATCHES: usize = 10;

/// chi statistics and selection frequencies from one shared Monte Carlo
/// pass, with per-batch values for the half-width.
fn moment_route(
    cfg: &SystemConfig,
    plan: &SchemePlan,
    n: usize,
    trials: usize,
    rng: &RngStream,
) -> Result<RateReport> {
    let rule = plan.selection_rule(n);
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = rng.substream(t as u64);
            let est = draw_estimate_only(cfg, &mut stream);
            let sel = rule.apply(&est.h_hat, cfg);
            let rows = select_rows(&est.h_hat, sel.indices());
            let scales: Vec<f64> = sel
                .indices()
                .iter()
                .map(|&k| 1.0 / plan.params[k].sqrt())
                .collect();
            let chi = compute_chi(&scale_rows(&rows, &scales))?;
            Ok((chi, sel))
        })
        .collect::<Result<Vec<(f64, Selection)>>>()?;

    let evaluate = |slice: &[(f64, Selection)]| -> RateReport {
        let chis: Vec<f64> = slice.iter().map(|(c, _)| *c).collect();
        let (mean, variance) = mean_and_variance(&chis);
        let mut gamma = vec![0.0; cfg.users];
        for (_, sel) in slice {
            for &k in sel.indices() {
                gamma[k] += 1.0;
            }
        }
        for g in gamma.iter_mut() {
            *g /= slice.len() as f64;
        }
        let chi = ChiStats {
            mean,
            variance,
            trials: slice.len(),
        };
        rate_reverse_only(cfg, &plan.params, &chi, &gamma)
    };

    let mut report = evaluate(&per_trial);
    // batched half-width from independent sub-estimates
    let batch = trials / HALF_WIDTH_BATCHES;
    if batch >= 2 {
        let nets: Vec<f64> = (0..HALF_WIDTH_BATCHES)
            .map(|b| evaluate(&per_trial[b * batch..(b + 1) * batch]).weighted_sum)
            .collect();
        let (_, var) = mean_and_variance(&nets);
        report.half_width = 1.96 * (var / HALF_WIDTH_BATCHES as f64).sqrt();
    }
    report.selected = n;
    report.tau_f = 0;
    report.net = net_with_signaling(
        cfg,
        report.weighted_sum,
        cfg.reverse_training,
        0,
        plan.signaled(n),
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// Observation route (forward pilots / arbitrary precoders)
// ---------------------------------------------------------------------------

struct BankSample {
    trial: usize,
    user: usize,
    residue: usize,
    own: Complex64,
    own_sq: f64,
    other_sq: f64,
    predicted: CVector,
    observed: CVector,
}

/// Outer Monte Carlo of the full transmission with conditional decoding.
///
/// `precoder` maps an estimate draw to the served users and a normalized
/// precoding matrix; it runs once per outer trial.
pub fn rate_forward_pilots<F>(
    cfg: &SystemConfig,
    tau_f: usize,
    trials: usize,
    posterior: PosteriorModel,
    l_post: usize,
    precoder: F,
    rng: &RngStream,
) -> Result<RateReport>
where
    F: Fn(&ChannelEstimate, &mut RngStream) -> Result<(Selection, CMatrix)> + Sync,
{
    assert!(trials >= 2);
    match posterior {
        PosteriorModel::Marginal => {
            rate_forward_pilots_marginal(cfg, tau_f, trials, precoder, rng)
        }
        PosteriorModel::ConditionalOnEstimate => {
            rate_forward_pilots_conditional(cfg, tau_f, trials, l_post, precoder, rng)
        }
    }
}

fn finalize_observation_report(
    cfg: &SystemConfig,
    tau_f: usize,
    trials: usize,
    selected: usize,
    per_user_sum: Vec<f64>,
    per_trial_weighted: Vec<f64>,
) -> RateReport {
    let per_user: Vec<f64> = per_user_sum.iter().map(|s| s / trials as f64).collect();
    let (weighted, var) = mean_and_variance(&per_trial_weighted);
    RateReport {
        per_user,
        weighted_sum: weighted,
        net: weighted,
        half_width: 1.96 * (var / trials as f64).sqrt(),
        tau_r: cfg.reverse_training,
        tau_f,
        selected,
        scheme: String::new(),
    }
}

fn rate_forward_pilots_marginal<F>(
    cfg: &SystemConfig,
    tau_f: usize,
    trials: usize,
    precoder: F,
    rng: &RngStream,
) -> Result<RateReport>
where
    F: Fn(&ChannelEstimate, &mut RngStream) -> Result<(Selection, CMatrix)> + Sync,
{
    // pass 1: simulate transmissions and collect the gain/observation bank
    let per_trial: Vec<Vec<BankSample>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = rng.substream(t as u64);
            let (h, est) = draw_estimate_direct(cfg, &mut stream);
            let (sel, a) = precoder(&est, &mut stream)?;
            let pattern = build_pilot_pattern(tau_f, sel.len());
            let x = receive_pilots(&h, &a, &sel, cfg, &pattern, &mut stream);
            let samples = sel
                .indices()
                .iter()
                .enumerate()
                .map(|(pos, &k)| {
                    let g = effective_gain_row(&h, k, &a, cfg.forward_snr[k]);
                    let own = g[pos];
                    let total_sq: f64 = g.iter().map(|z| z.norm_sqr()).sum();
                    BankSample {
                        trial: t,
                        user: k,
                        residue: if tau_f > 0 { pos % tau_f } else { 0 },
                        own,
                        own_sq: own.norm_sqr(),
                        other_sq: total_sq - own.norm_sqr(),
                        predicted: pattern.respond(&g),
                        observed: x.row(pos).transpose(),
                    }
                })
                .collect();
            Ok(samples)
        })
        .collect::<Result<Vec<_>>>()?;
    let selected = per_trial[0].len();
    let bank: Vec<&BankSample> = per_trial.iter().flatten().collect();

    // pooling across users is valid only when users are exchangeable
    let pool_users = cfg.is_homogeneous();

    // pass 2: conditional decoding of every served user against the bank
    let rates: Vec<f64> = bank
        .par_iter()
        .map(|target| {
            let mut num = Complex64::ZERO;
            let mut own_sq = 0.0;
            let mut other_sq = 0.0;
            let mut wsum = 0.0;
            let mut max_log = f64::NEG_INFINITY;
            // two passes over the bank: max log-weight, then accumulate
            let relevant = |s: &&&BankSample| {
                s.trial != target.trial
                    && s.residue == target.residue
                    && (pool_users || s.user == target.user)
            };
            for s in bank.iter().filter(|s| relevant(&s)) {
                let mut d = 0.0;
                for (o, p) in target.observed.iter().zip(s.predicted.iter()) {
                    d += (o - p).norm_sqr();
                }
                max_log = max_log.max(-d);
            }
            if !max_log.is_finite() {
                return Err(Error::Misuse(format!(
                    "empty posterior bank for user {}; increase outer trials",
                    target.user
                )));
            }
            for s in bank.iter().filter(|s| relevant(&s)) {
                let mut d = 0.0;
                for (o, p) in target.observed.iter().zip(s.predicted.iter()) {
                    d += (o - p).norm_sqr();
                }
                let w = (-d - max_log).exp();
                num += s.own * w;
                own_sq += s.own_sq * w;
                other_sq += s.other_sq * w;
                wsum += w;
            }
            let mean = num / wsum;
            let var = (own_sq / wsum - mean.norm_sqr()).max(0.0);
            let interf = other_sq / wsum;
            let sinr = mean.norm_sqr() / (1.0 + interf + var);
            Ok((1.0 + sinr).log2())
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut per_user_sum = vec![0.0; cfg.users];
    let mut per_trial_weighted = vec![0.0; trials];
    for (s, r) in bank.iter().zip(&rates) {
        per_user_sum[s.user] += r;
        per_trial_weighted[s.trial] += cfg.weights[s.user] * r;
    }
    Ok(finalize_observation_report(
        cfg,
        tau_f,
        trials,
        selected,
        per_user_sum,
        per_trial_weighted,
    ))
}

fn rate_forward_pilots_conditional<F>(
    cfg: &SystemConfig,
    tau_f: usize,
    trials: usize,
    l_post: usize,
    precoder: F,
    rng: &RngStream,
) -> Result<RateReport>
where
    F: Fn(&ChannelEstimate, &mut RngStream) -> Result<(Selection, CMatrix)> + Sync,
{
    let results: Vec<(Vec<(usize, f64)>, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            // a degenerate posterior retries the whole trial on a fresh
            // substream, up to 3 times
            let mut last_err = None;
            for attempt in 0..3u64 {
                let mut stream = rng.substream(t as u64).substream(attempt);
                match conditional_trial(cfg, tau_f, l_post, &precoder, &mut stream) {
                    Ok(v) => return Ok(v),
                    Err(e @ Error::DegeneratePosterior) => last_err = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last_err.unwrap())
        })
        .collect::<Result<Vec<_>>>()?;

    let selected = results[0].0.len();
    let mut per_user_sum = vec![0.0; cfg.users];
    let mut per_trial_weighted = Vec::with_capacity(trials);
    for (users, weighted) in results {
        for (k, r) in users {
            per_user_sum[k] += r;
        }
        per_trial_weighted.push(weighted);
    }
    Ok(finalize_observation_report(
        cfg,
        tau_f,
        trials,
        selected,
        per_user_sum,
        per_trial_weighted,
    ))
}

fn conditional_trial<F>(
    cfg: &SystemConfig,
    tau_f: usize,
    l_post: usize,
    precoder: &F,
    stream: &mut RngStream,
) -> Result<(Vec<(usize, f64)>, f64)>
where
    F: Fn(&ChannelEstimate, &mut RngStream) -> Result<(Selection, CMatrix)> + Sync,
{
    let (h, est) = draw_estimate_direct(cfg, stream);
    let (sel, a) = precoder(&est, stream)?;
    let pattern = build_pilot_pattern(tau_f, sel.len());
    let x = receive_pilots(&h, &a, &sel, cfg, &pattern, stream);
    let mut rates = Vec::with_capacity(sel.len());
    let mut weighted = 0.0;
    for (pos, &k) in sel.indices().iter().enumerate() {
        let stats = posterior_gain_stats(
            &est,
            k,
            pos,
            &a,
            cfg,
            &pattern,
            &x.row(pos).transpose(),
            l_post,
            stream,
        )?;
        let sinr = stats.mean_gain.norm_sqr() / (1.0 + stats.interference + stats.var_gain);
        let r = (1.0 + sinr).log2();
        rates.push((k, r));
        weighted += cfg.weights[k] * r;
    }
    Ok((rates, weighted))
}

// ---------------------------------------------------------------------------
// Scheme evaluation and optimizers
// ---------------------------------------------------------------------------

fn observation_route(
    cfg: &SystemConfig,
    plan: &SchemePlan,
    n: usize,
    opts: &EvalOptions,
    rng: &RngStream,
) -> Result<RateReport> {
    let mut report = rate_forward_pilots(
        cfg,
        plan.scheme.forward_pilots,
        opts.outer_trials,
        opts.posterior,
        opts.l_post,
        |est, stream| plan.build(est, cfg, n, 1, opts, stream),
        rng,
    )?;
    report.net = net_with_signaling(
        cfg,
        report.weighted_sum,
        cfg.reverse_training,
        plan.scheme.forward_pilots,
        plan.signaled(n),
    );
    report.half_width *= cfg.data_symbols(cfg.reverse_training, plan.scheme.forward_pilots) as f64
        / cfg.coherence as f64;
    Ok(report)
}

fn scheme_point(
    cfg: &SystemConfig,
    plan: &SchemePlan,
    n: usize,
    opts: &EvalOptions,
    rng: &RngStream,
) -> Result<RateReport> {
    let mut report = if plan.scheme.forward_pilots == 0 && plan.scheme.is_gzf_family() {
        moment_route(cfg, plan, n, opts.stat_trials, rng)?
    } else {
        let mut r = observation_route(cfg, plan, n, opts, rng)?;
        // the moment-route half-width already refers to the sum rate; scale
        // the observation one identically for comparability
        r.half_width /= cfg.data_symbols(cfg.reverse_training, plan.scheme.forward_pilots) as f64
            / cfg.coherence as f64;
        r
    };
    report.scheme = plan.scheme.label();
    Ok(report)
}

/// Evaluate a scheme's net rate, optimizing the served-user count for the
/// selection schemes (unless pinned in the options).
pub fn evaluate_scheme(
    cfg: &SystemConfig,
    scheme: Scheme,
    opts: &EvalOptions,
    rng: &RngStream,
) -> Result<RateReport> {
    let plan = SchemePlan::resolve(cfg, scheme);
    if plan.candidates == 0 {
        return Err(Error::Misuse(
            "no user has a positive optimized precoder parameter".into(),
        ));
    }
    if scheme.has_short_term_selection() && opts.fixed_selection_size.is_none() {
        let (_, report) = optimize_selection_size_impl(cfg, &plan, opts, rng)?;
        Ok(report)
    } else {
        let n = opts
            .fixed_selection_size
            .unwrap_or(plan.max_selection())
            .min(plan.max_selection());
        scheme_point(cfg, &plan, n, opts, rng)
    }
}

/// Brute force over the served-user count; ties prefer the larger count
/// (which avoids the signaling charge at `N = K`). Candidates share the
/// same random substreams, so the comparison uses common random numbers.
pub fn optimize_selection_size(
    cfg: &SystemConfig,
    scheme: Scheme,
    opts: &EvalOptions,
    rng: &RngStream,
) -> Result<(usize, RateReport)> {
    let plan = SchemePlan::resolve(cfg, scheme);
    optimize_selection_size_impl(cfg, &plan, opts, rng)
}

fn optimize_selection_size_impl(
    cfg: &SystemConfig,
    plan: &SchemePlan,
    opts: &EvalOptions,
    rng: &RngStream,
) -> Result<(usize, RateReport)> {
    let mut best: Option<(usize, RateReport)> = None;
    for n in 1..=plan.max_selection() {
        let report = scheme_point(cfg, plan, n, opts, rng)?;
        let better = match &best {
            None => true,
            Some((_, b)) => report.net >= b.net,
        };
        if better {
            best = Some((n, report));
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Brute force over the reverse training length
/// `tau_r in [K, T - tau_f - comp_delay - 1]`, re-estimating the statistics
/// at every candidate; ties prefer the shorter training.
///
/// Homogeneous zero-forcing schemes without forward pilots use the `eta`
/// formulation, whose statistics do not depend on `tau_r`; they are
/// estimated once per candidate count and reused across the sweep.
pub fn optimize_training_length(
    cfg: &SystemConfig,
    scheme: Scheme,
    opts: &EvalOptions,
    rng: &RngStream,
) -> Result<(usize, RateReport)> {
    let hi = cfg
        .coherence
        .saturating_sub(scheme.forward_pilots + cfg.comp_delay + 1);
    if cfg.users > hi {
        return Err(Error::Config(format!(
            "no feasible training length: K = {} exceeds budget {hi}",
            cfg.users
        )));
    }

    if scheme.is_gzf_family() && scheme.forward_pilots == 0 && cfg.is_homogeneous() {
        return training_sweep_homogeneous(cfg, scheme, opts, rng, hi);
    }

    let mut best: Option<(usize, RateReport)> = None;
    for tau_r in cfg.users..=hi {
        let candidate = cfg.with_reverse_training(tau_r).validate()?;
        let report = evaluate_scheme(&candidate, scheme, opts, &rng.substream(tau_r as u64))?;
        if best.as_ref().map_or(true, |(_, b)| report.net > b.net) {
            best = Some((tau_r, report));
        }
    }
    Ok(best.expect("non-empty training range"))
}

fn training_sweep_homogeneous(
    cfg: &SystemConfig,
    scheme: Scheme,
    opts: &EvalOptions,
    rng: &RngStream,
    hi: usize,
) -> Result<(usize, RateReport)> {
    let select = scheme.has_short_term_selection();
    let sizes: Vec<usize> = if select {
        (1..=cfg.users).collect()
    } else {
        vec![cfg.users]
    };
    let eta_by_n: Vec<EtaStats> = sizes
        .iter()
        .map(|&n| {
            estimate_eta_stats(
                cfg.antennas,
                cfg.users,
                n,
                opts.stat_trials,
                &rng.substream(n as u64),
            )
        })
        .collect();

    let mut best: Option<(usize, RateReport)> = None;
    for tau_r in cfg.users..=hi {
        let candidate = cfg.with_reverse_training(tau_r).validate()?;
        for (idx, &n) in sizes.iter().enumerate() {
            let mut report = rate_homogeneous(&candidate, n, &eta_by_n[idx])?;
            report.net = net_with_signaling(
                &candidate,
                report.weighted_sum,
                tau_r,
                0,
                select && n < cfg.users,
            );
            report.scheme = scheme.label();
            let better = match &best {
                None => true,
                // strictly-greater keeps the smallest tau_r on ties; within
                // a tau_r the later (larger) n wins ties via >=
                Some((bt, b)) => {
                    report.net > b.net || (*bt == tau_r && report.net >= b.net)
                }
            };
            if better {
                best = Some((tau_r, report));
            }
        }
    }
    Ok(best.expect("non-empty training range"))
}

/// Genie upper bound for a scheme: the same precoder evaluated against the
/// true channel with exact gain knowledge at the users, averaged over
/// draws, and discounted by the reverse-training overhead (a genie needs no
/// forward pilots). For the selection schemes the served-user count is
/// optimized against the bound itself.
pub fn evaluate_upper_bound(
    cfg: &SystemConfig,
    scheme: Scheme,
    opts: &EvalOptions,
    rng: &RngStream,
) -> Result<RateReport> {
    let plan = SchemePlan::resolve(cfg, scheme);
    let sizes: Vec<usize> = if scheme.has_short_term_selection() {
        match opts.fixed_selection_size {
            Some(n) => vec![n.min(plan.max_selection())],
            None => (1..=plan.max_selection()).collect(),
        }
    } else {
        vec![opts
            .fixed_selection_size
            .unwrap_or(plan.max_selection())
            .min(plan.max_selection())]
    };

    let mut best: Option<RateReport> = None;
    for &n in &sizes {
        let values: Vec<f64> = (0..opts.outer_trials)
            .into_par_iter()
            .map(|t| {
                let mut stream = rng.substream(t as u64);
                let (h, est) = draw_estimate_direct(cfg, &mut stream);
                let (sel, a) = plan.build(&est, cfg, n, opts.restarts, opts, &mut stream)?;
                Ok(genie_upper_bound(&h, &a, &sel, cfg))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, var) = mean_and_variance(&values);
        let mut report = RateReport {
            per_user: vec![f64::NAN; cfg.users],
            weighted_sum: mean,
            net: net_with_signaling(cfg, mean, cfg.reverse_training, 0, plan.signaled(n)),
            half_width: 1.96 * (var / values.len() as f64).sqrt(),
            tau_r: cfg.reverse_training,
            tau_f: 0,
            selected: n,
            scheme: scheme.ub_label(),
        };
        report.per_user = vec![mean / (n as f64).max(1.0); cfg.users];
        if best.as_ref().map_or(true, |b| report.net >= b.net) {
            best = Some(report);
        }
    }
    Ok(best.expect("at least one size"))
}
