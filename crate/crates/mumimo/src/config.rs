//! System configuration, validation, unit conversion, and the scenario file
//! format.
//!
//! All SNRs are stored internally as linear power ratios; scenario files
//! accept dB values (every rate formula uses linear SNRs). The scenario file
//! is TOML with the keys `M`, `K`, `T`, `tau_r`, `tau_f`, `rho_f_db`,
//! `rho_r_db`, `weights`, `comp_delay`, `seed`, `trials`, plus optional
//! runner keys (`scheme`, `sweep_axis`, `sweep_values`).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Convert a dB value to a linear power ratio.
pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

/// Convert a linear power ratio to dB.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Long-term system parameters, constant over many coherence intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Base-station antenna count (M).
    pub antennas: usize,
    /// Number of single-antenna users (K).
    pub users: usize,
    /// Coherence interval length in symbols (T).
    pub coherence: usize,
    /// Reverse-link training length in symbols.
    pub reverse_training: usize,
    /// Forward-link training length in symbols (0 disables forward pilots).
    pub forward_training: usize,
    /// Per-user forward SNRs, linear.
    pub forward_snr: Vec<f64>,
    /// Per-user reverse SNRs, linear.
    pub reverse_snr: Vec<f64>,
    /// Per-user positive rate weights.
    pub weights: Vec<f64>,
    /// Symbols reserved for precoder computation between training and data.
    pub comp_delay: usize,
}

impl SystemConfig {
    /// Homogeneous configuration: every user shares the same SNRs and unit
    /// weight.
    pub fn homogeneous(
        antennas: usize,
        users: usize,
        coherence: usize,
        reverse_training: usize,
        forward_training: usize,
        forward_snr: f64,
        reverse_snr: f64,
    ) -> Self {
        Self {
            antennas,
            users,
            coherence,
            reverse_training,
            forward_training,
            forward_snr: vec![forward_snr; users],
            reverse_snr: vec![reverse_snr; users],
            weights: vec![1.0; users],
            comp_delay: 1,
        }
    }

    /// Check every invariant, returning the config unchanged when valid.
    pub fn validate(self) -> Result<Self> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.antennas == 0 || self.users == 0 || self.coherence == 0 {
            return err("M, K and T must all be at least 1".into());
        }
        if self.users > self.reverse_training {
            return err(format!(
                "orthogonal pilots require K <= tau_r (got K = {}, tau_r = {})",
                self.users, self.reverse_training
            ));
        }
        if self.reverse_training + self.forward_training + self.comp_delay
            >= self.coherence
        {
            return err(format!(
                "tau_r + tau_f + comp_delay must leave at least one data symbol \
                 (got {} + {} + {} >= T = {})",
                self.reverse_training, self.forward_training, self.comp_delay, self.coherence
            ));
        }
        for (name, v) in [
            ("rho_f", &self.forward_snr),
            ("rho_r", &self.reverse_snr),
            ("weights", &self.weights),
        ] {
            if v.len() != self.users {
                return err(format!("{name} must have one entry per user"));
            }
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return err(format!("all {name} entries must be finite and positive"));
            }
        }
        Ok(self)
    }

    /// Channel-estimate variance per entry of user `k`'s estimated row:
    /// `rho_k tau_r / (1 + rho_k tau_r)`.
    pub fn estimate_variance(&self, k: usize) -> f64 {
        // computed as 1 - err so the two variances sum to exactly 1.0
        1.0 - self.error_variance(k)
    }

    /// Estimation-error variance per entry of user `k`'s row:
    /// `1 / (1 + rho_k tau_r)`.
    pub fn error_variance(&self, k: usize) -> f64 {
        1.0 / (1.0 + self.reverse_snr[k] * self.reverse_training as f64)
    }

    pub fn estimate_variances(&self) -> Vec<f64> {
        (0..self.users).map(|k| self.estimate_variance(k)).collect()
    }

    pub fn error_variances(&self) -> Vec<f64> {
        (0..self.users).map(|k| self.error_variance(k)).collect()
    }

    /// True when all users share identical SNRs and weights.
    pub fn is_homogeneous(&self) -> bool {
        let same = |v: &[f64]| v.iter().all(|x| *x == v[0]);
        same(&self.forward_snr) && same(&self.reverse_snr) && same(&self.weights)
    }

    /// Sum of the user weights (the selection-signaling overhead numerator).
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Data symbols left in a coherence interval for given training lengths.
    pub fn data_symbols(&self, tau_r: usize, tau_f: usize) -> usize {
        self.coherence
            .saturating_sub(tau_r + tau_f + self.comp_delay)
    }

    /// Copy with a different reverse training length.
    pub fn with_reverse_training(&self, tau_r: usize) -> Self {
        let mut c = self.clone();
        c.reverse_training = tau_r;
        c
    }

    /// Copy with a different forward training length.
    pub fn with_forward_training(&self, tau_f: usize) -> Self {
        let mut c = self.clone();
        c.forward_training = tau_f;
        c
    }
}

/// Scalar applied to every user, or one value per user.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUser {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerUser {
    fn expand(&self, users: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            PerUser::Scalar(x) => Ok(vec![*x; users]),
            PerUser::List(v) if v.len() == users => Ok(v.clone()),
            PerUser::List(v) => Err(Error::Config(format!(
                "{name} must be a scalar or a list of K = {users} values (got {})",
                v.len()
            ))),
        }
    }
}

/// Reverse SNR specification: explicit values, or `"offset:<d>"` meaning
/// forward SNR minus `d` dB per user.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReverseSnr {
    Values(PerUser),
    Offset(String),
}

/// On-disk scenario file. Field names are the file keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ScenarioFile {
    pub M: usize,
    pub K: usize,
    pub T: usize,
    pub tau_r: usize,
    #[serde(default)]
    pub tau_f: usize,
    pub rho_f_db: PerUser,
    pub rho_r_db: ReverseSnr,
    #[serde(default = "default_weights")]
    pub weights: PerUser,
    #[serde(default = "default_comp_delay")]
    pub comp_delay: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Scheme identifier for the runner, e.g. `"zf-sch:fp1"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    /// Sweep axis: one of `snr_f_db`, `K`, `M`, `tau_r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_axis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_values: Option<Vec<f64>>,
}

fn default_weights() -> PerUser {
    PerUser::Scalar(1.0)
}

fn default_comp_delay() -> usize {
    1
}

fn default_trials() -> usize {
    10_000
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialization cannot fail")
    }

    /// Build and validate the `SystemConfig` this file describes.
    pub fn system_config(&self) -> Result<SystemConfig> {
        let forward_db = self.rho_f_db.expand(self.K, "rho_f_db")?;
        let reverse_db = match &self.rho_r_db {
            ReverseSnr::Values(v) => v.expand(self.K, "rho_r_db")?,
            ReverseSnr::Offset(s) => {
                let d: f64 = s
                    .strip_prefix("offset:")
                    .and_then(|x| x.trim().parse().ok())
                    .ok_or_else(|| {
                        Error::Parse(format!("rho_r_db string must be \"offset:<d>\", got {s:?}"))
                    })?;
                forward_db.iter().map(|f| f - d).collect()
            }
        };
        SystemConfig {
            antennas: self.M,
            users: self.K,
            coherence: self.T,
            reverse_training: self.tau_r,
            forward_training: self.tau_f,
            forward_snr: forward_db.iter().copied().map(db_to_linear).collect(),
            reverse_snr: reverse_db.iter().copied().map(db_to_linear).collect(),
            weights: self.weights.expand(self.K, "weights")?,
            comp_delay: self.comp_delay,
        }
        .validate()
    }

    /// Inverse of [`ScenarioFile::system_config`] for round-tripping.
    pub fn from_system_config(cfg: &SystemConfig, seed: u64, trials: usize) -> Self {
        Self {
            M: cfg.antennas,
            K: cfg.users,
            T: cfg.coherence,
            tau_r: cfg.reverse_training,
            tau_f: cfg.forward_training,
            rho_f_db: PerUser::List(cfg.forward_snr.iter().copied().map(linear_to_db).collect()),
            rho_r_db: ReverseSnr::Values(PerUser::List(
                cfg.reverse_snr.iter().copied().map(linear_to_db).collect(),
            )),
            weights: PerUser::List(cfg.weights.clone()),
            comp_delay: cfg.comp_delay,
            seed,
            trials,
            scheme: None,
            sweep_axis: None,
            sweep_values: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_conversions() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((db_to_linear(-10.0) - 0.1).abs() < 1e-12);
        assert!((linear_to_db(100.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn valid_config_passes() {
        let cfg = SystemConfig::homogeneous(16, 8, 30, 8, 0, 1.0, 0.1);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn too_many_users_for_pilots() {
        let cfg = SystemConfig::homogeneous(16, 9, 30, 8, 0, 1.0, 0.1);
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("K <= tau_r"), "{err}");
    }

    #[test]
    fn no_data_symbol_left() {
        let mut cfg = SystemConfig::homogeneous(16, 8, 30, 29, 0, 1.0, 0.1);
        cfg.comp_delay = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn nonpositive_snr_rejected() {
        let mut cfg = SystemConfig::homogeneous(4, 2, 10, 2, 0, 1.0, 0.1);
        cfg.forward_snr[1] = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn variance_split_sums_to_one_exactly() {
        let cfg = SystemConfig::homogeneous(4, 3, 20, 5, 0, 2.0, 0.37);
        for k in 0..3 {
            assert_eq!(cfg.estimate_variance(k) + cfg.error_variance(k), 1.0);
            assert!(cfg.estimate_variance(k) > 0.0 && cfg.estimate_variance(k) < 1.0);
        }
    }

    #[test]
    fn scenario_file_round_trip() {
        let text = r#"
            M = 8
            K = 8
            T = 30
            tau_r = 8
            tau_f = 1
            rho_f_db = 20.0
            rho_r_db = "offset:10"
            weights = 1.0
            seed = 7
            trials = 500
            scheme = "zf-sch:fp1"
        "#;
        let file = ScenarioFile::parse(text).unwrap();
        let cfg = file.system_config().unwrap();
        assert!((cfg.forward_snr[0] - 100.0).abs() < 1e-9);
        assert!((cfg.reverse_snr[0] - 10.0).abs() < 1e-9);

        let re = ScenarioFile::from_system_config(&cfg, 7, 500);
        let cfg2 = ScenarioFile::parse(&re.to_toml()).unwrap().system_config().unwrap();
        assert_eq!(cfg.antennas, cfg2.antennas);
        assert_eq!(cfg.reverse_training, cfg2.reverse_training);
        for k in 0..cfg.users {
            assert!((cfg.forward_snr[k] - cfg2.forward_snr[k]).abs() / cfg.forward_snr[k] < 1e-12);
            assert!((cfg.reverse_snr[k] - cfg2.reverse_snr[k]).abs() / cfg.reverse_snr[k] < 1e-12);
            assert_eq!(cfg.weights[k], cfg2.weights[k]);
        }
    }

    #[test]
    fn per_user_lists_and_errors() {
        let text = r#"
            M = 4
            K = 3
            T = 20
            tau_r = 4
            rho_f_db = [0.0, 5.0, 10.0]
            rho_r_db = [-10.0, -5.0, 0.0]
            weights = [1.0, 2.0, 3.0]
        "#;
        let cfg = ScenarioFile::parse(text).unwrap().system_config().unwrap();
        assert_eq!(cfg.weights, vec![1.0, 2.0, 3.0]);
        assert!((cfg.forward_snr[2] - 10.0).abs() < 1e-12);

        let bad = r#"
            M = 4
            K = 3
            T = 20
            tau_r = 4
            rho_f_db = [0.0, 5.0]
            rho_r_db = 0.0
        "#;
        assert!(ScenarioFile::parse(bad).unwrap().system_config().is_err());
    }
}
