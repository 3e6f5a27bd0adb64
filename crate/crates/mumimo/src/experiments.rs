//! Scenario running: load a scenario file, dispatch the scheme pipelines
//! over an optional sweep axis, and emit CSV rows.
//!
//! Output is deterministic: every Monte Carlo consumer derives its random
//! substream from `(seed, point index, purpose)`, reductions run in trial
//! order, and floats are printed with six significant digits, so a scenario
//! re-run with the same seed reproduces the CSV byte for byte.

use std::io::Write;
use std::path::Path;

use crate::config::{db_to_linear, ScenarioFile, SystemConfig};
use crate::rates::{
    evaluate_scheme, evaluate_upper_bound, optimize_training_length, EvalOptions, RateReport,
    Scheme,
};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Sweep axes supported by scenario files and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    ForwardSnrDb,
    Users,
    Antennas,
    ReverseTraining,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "snr_f_db" => Ok(Self::ForwardSnrDb),
            "K" => Ok(Self::Users),
            "M" => Ok(Self::Antennas),
            "tau_r" => Ok(Self::ReverseTraining),
            other => Err(Error::Parse(format!(
                "unknown sweep axis {other:?}; expected snr_f_db, K, M or tau_r"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ForwardSnrDb => "snr_f_db",
            Self::Users => "K",
            Self::Antennas => "M",
            Self::ReverseTraining => "tau_r",
        }
    }
}

/// A fully resolved scenario: what to run and with which budgets.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub file: ScenarioFile,
    pub scheme: Scheme,
    pub sweep: Option<(SweepAxis, Vec<f64>)>,
    pub seed: u64,
    pub upper_bound: bool,
    pub options: EvalOptions,
}

impl ScenarioSpec {
    /// Resolve a scenario file; `scheme_override` replaces the file's
    /// scheme, as the CLI flags do for seed/trials.
    pub fn from_file(file: ScenarioFile, scheme_override: Option<&str>) -> Result<Self> {
        let scheme_str = scheme_override
            .map(str::to_owned)
            .or_else(|| file.scheme.clone())
            .ok_or_else(|| {
                Error::Config("no scheme given (file key `scheme` or --scheme flag)".into())
            })?;
        let scheme = Scheme::parse(&scheme_str)?;
        let sweep = match (&file.sweep_axis, &file.sweep_values) {
            (Some(axis), Some(values)) if !values.is_empty() => {
                Some((SweepAxis::parse(axis)?, values.clone()))
            }
            (Some(_), _) => {
                return Err(Error::Config(
                    "sweep_axis given without non-empty sweep_values".into(),
                ))
            }
            (None, _) => None,
        };
        let seed = file.seed;
        let options = options_for_trials(file.trials);
        Ok(Self {
            file,
            scheme,
            sweep,
            seed,
            upper_bound: false,
            options,
        })
    }

    /// The configuration at one sweep point (or the base one).
    fn config_at(&self, point: Option<(SweepAxis, f64)>) -> Result<SystemConfig> {
        let mut file = self.file.clone();
        if let Some((axis, value)) = point {
            match axis {
                SweepAxis::ForwardSnrDb => {
                    file.rho_f_db = crate::config::PerUser::Scalar(value);
                }
                SweepAxis::Users => {
                    file.K = value as usize;
                    file.tau_r = file.tau_r.max(file.K);
                }
                SweepAxis::Antennas => file.M = value as usize,
                SweepAxis::ReverseTraining => file.tau_r = value as usize,
            }
        }
        file.system_config()
    }
}

/// Map a single trial budget onto the two Monte Carlo loops, keeping the
/// default 10000:500 ratio between statistics trials and transmission
/// trials.
pub fn options_for_trials(trials: usize) -> EvalOptions {
    EvalOptions {
        stat_trials: trials.max(10),
        outer_trials: (trials / 20).max(100),
        ..EvalOptions::default()
    }
}

/// One CSV output row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: String,
    pub sweep_axis: String,
    /// Value on the sweep axis; NaN when there is no sweep.
    pub sweep_value: f64,
    pub net: f64,
    pub sum_rate: f64,
    pub upper_bound: Option<f64>,
    pub tau_r: usize,
    pub selected: usize,
    pub seed: u64,
    pub trials: usize,
    pub half_width: f64,
}

impl ResultRow {
    fn from_report(
        report: &RateReport,
        axis: &str,
        value: f64,
        ub: Option<f64>,
        seed: u64,
        trials: usize,
    ) -> Self {
        Self {
            scheme: report.scheme.clone(),
            sweep_axis: axis.to_string(),
            sweep_value: value,
            net: report.net,
            sum_rate: report.weighted_sum,
            upper_bound: ub,
            tau_r: report.tau_r,
            selected: report.selected,
            seed,
            trials,
            half_width: report.half_width,
        }
    }
}

/// Run a scenario: evaluate the scheme (and optionally its genie bound) at
/// every sweep point.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Vec<ResultRow>> {
    let root = RngStream::new(spec.seed);
    let points: Vec<(Option<(SweepAxis, f64)>, f64, String)> = match &spec.sweep {
        None => vec![(None, f64::NAN, "none".to_string())],
        Some((axis, values)) => values
            .iter()
            .map(|&v| (Some((*axis, v)), v, axis.name().to_string()))
            .collect(),
    };
    let mut rows = Vec::with_capacity(points.len());
    for (idx, (point, value, axis)) in points.into_iter().enumerate() {
        let cfg = spec.config_at(point)?;
        let point_rng = root.substream(idx as u64);
        let report = evaluate_scheme(&cfg, spec.scheme, &spec.options, &point_rng.substream(0))?;
        let ub = if spec.upper_bound {
            Some(
                evaluate_upper_bound(&cfg, spec.scheme, &spec.options, &point_rng.substream(1))?
                    .net,
            )
        } else {
            None
        };
        rows.push(ResultRow::from_report(
            &report,
            &axis,
            value,
            ub,
            spec.seed,
            spec.file.trials,
        ));
    }
    Ok(rows)
}

/// The benchmark grid: `M = K = 8`, `tau_r = 8`, `T = 30`, reverse SNR
/// 10 dB below the forward SNR swept over 5..30 dB, twelve scheme rows
/// (three families, each with achievable variants and a genie bound).
pub fn reproduce_table1(seed: u64, trials: usize, restarts: usize) -> Result<Vec<ResultRow>> {
    let snrs_db = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
    let achievable = [
        "zf",
        "zf-sch",
        "zf-sch:fp1",
        "zf-sch:fp2",
        "svh:fp1",
        "svh:fp2",
        "mod-svh:fp1",
        "mod-svh:fp2",
    ];
    let bounded = ["zf", "zf-sch", "svh", "mod-svh"];

    let mut opts = options_for_trials(trials);
    let mut rows = Vec::new();
    let root = RngStream::new(seed);
    for (si, &snr_db) in snrs_db.iter().enumerate() {
        let cfg = table1_config(snr_db)?;
        for (ri, name) in achievable.iter().enumerate() {
            let scheme = Scheme::parse(name)?;
            let rng = root.substream((si * 100 + ri) as u64);
            let report = evaluate_scheme(&cfg, scheme, &opts, &rng)?;
            rows.push(ResultRow::from_report(
                &report, "snr_f_db", snr_db, None, seed, trials,
            ));
        }
        for (ri, name) in bounded.iter().enumerate() {
            let scheme = Scheme::parse(name)?;
            let rng = root.substream((si * 100 + 50 + ri) as u64);
            opts.restarts = if scheme.base == crate::rates::SchemeBase::ModSvh {
                restarts
            } else {
                1
            };
            let report = evaluate_upper_bound(&cfg, scheme, &opts, &rng)?;
            rows.push(ResultRow::from_report(
                &report, "snr_f_db", snr_db, None, seed, trials,
            ));
        }
    }
    Ok(rows)
}

/// The benchmark operating point at one forward SNR.
pub fn table1_config(snr_f_db: f64) -> Result<SystemConfig> {
    SystemConfig::homogeneous(
        8,
        8,
        30,
        8,
        0,
        db_to_linear(snr_f_db),
        db_to_linear(snr_f_db - 10.0),
    )
    .validate()
}

/// Training-length sweep: for each forward SNR (reverse 10 dB lower), find
/// the net-rate-maximizing reverse training length.
pub fn training_sweep(
    base: &SystemConfig,
    scheme: Scheme,
    snrs_db: &[f64],
    seed: u64,
    opts: &EvalOptions,
) -> Result<Vec<ResultRow>> {
    let root = RngStream::new(seed);
    let mut rows = Vec::with_capacity(snrs_db.len());
    for (idx, &snr_db) in snrs_db.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.forward_snr = vec![db_to_linear(snr_db); cfg.users];
        cfg.reverse_snr = vec![db_to_linear(snr_db - 10.0); cfg.users];
        let cfg = cfg.validate()?;
        let (tau_r, report) =
            optimize_training_length(&cfg, scheme, opts, &root.substream(idx as u64))?;
        let mut row = ResultRow::from_report(&report, "snr_f_db", snr_db, None, seed, opts.stat_trials);
        row.tau_r = tau_r;
        rows.push(row);
    }
    Ok(rows)
}

/// Heterogeneous benchmark: 12 users with forward SNRs
/// {0,0,0,5,5,5,5,5,5,10,10,10} dB, reverse 10 dB lower, unit weights,
/// `T = 30`, `tau_r = 12`.
pub fn heterogeneous_preset(antennas: usize) -> SystemConfig {
    let fwd_db = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 10.0, 10.0, 10.0];
    SystemConfig {
        antennas,
        users: 12,
        coherence: 30,
        reverse_training: 12,
        forward_training: 0,
        forward_snr: fwd_db.iter().map(|&d| db_to_linear(d)).collect(),
        reverse_snr: fwd_db.iter().map(|&d| db_to_linear(d - 10.0)).collect(),
        weights: vec![1.0; 12],
        comp_delay: 1,
    }
    .validate()
    .expect("preset is valid")
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

const CSV_HEADER: [&str; 11] = [
    "scheme",
    "sweep_axis",
    "sweep_value",
    "net_rate",
    "sum_rate",
    "upper_bound",
    "tau_r",
    "n_selected",
    "seed",
    "trials",
    "half_width",
];

/// Format with six significant digits, plain decimal notation.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return String::new();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn row_record(row: &ResultRow) -> Vec<String> {
    vec![
        row.scheme.clone(),
        row.sweep_axis.clone(),
        if row.sweep_value.is_nan() {
            String::new()
        } else {
            format_sig6(row.sweep_value)
        },
        format_sig6(row.net),
        format_sig6(row.sum_rate),
        row.upper_bound.map(format_sig6).unwrap_or_default(),
        row.tau_r.to_string(),
        row.selected.to_string(),
        row.seed.to_string(),
        row.trials.to_string(),
        format_sig6(row.half_width),
    ]
}

/// Serialize rows to CSV (header plus one line per row).
pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for row in rows {
        w.write_record(row_record(row)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Write rows to a CSV file.
pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(rows_to_csv(rows).as_bytes())?;
    Ok(())
}

/// Parse rows back from CSV text.
pub fn read_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let parse_f64 = |s: &str, what: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Parse(format!("bad {what}: {s:?}")))
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| Error::Parse(e.to_string()))?;
        if r.len() != CSV_HEADER.len() {
            return Err(Error::Parse(format!("expected {} fields", CSV_HEADER.len())));
        }
        rows.push(ResultRow {
            scheme: r[0].to_string(),
            sweep_axis: r[1].to_string(),
            sweep_value: if r[2].is_empty() {
                f64::NAN
            } else {
                parse_f64(&r[2], "sweep_value")?
            },
            net: parse_f64(&r[3], "net_rate")?,
            sum_rate: parse_f64(&r[4], "sum_rate")?,
            upper_bound: if r[5].is_empty() {
                None
            } else {
                Some(parse_f64(&r[5], "upper_bound")?)
            },
            tau_r: r[6].parse().map_err(|_| Error::Parse("bad tau_r".into()))?,
            selected: r[7].parse().map_err(|_| Error::Parse("bad n_selected".into()))?,
            seed: r[8].parse().map_err(|_| Error::Parse("bad seed".into()))?,
            trials: r[9].parse().map_err(|_| Error::Parse("bad trials".into()))?,
            half_width: parse_f64(&r[10], "half_width")?,
        });
    }
    Ok(rows)
}
