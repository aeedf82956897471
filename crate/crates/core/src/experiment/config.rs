use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{dbm_to_watts, noise_variance_dbm, NoiseLevels};
use crate::error::{Error, Result};
use crate::learning::Model;
use crate::oaa::UplinkFidelity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Simultaneous training with over-the-air aggregation.
    Multimodel,
    /// Simultaneous training over error-free links.
    Ideal,
    /// One model at a time with all devices and an SNR-maximizing beamformer.
    Seqnmodel,
    /// All three, in the order above.
    All,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Multimodel => "multimodel",
            Scheme::Ideal => "ideal",
            Scheme::Seqnmodel => "seqnmodel",
            Scheme::All => "all",
        }
    }

    pub fn expand(self) -> Vec<Scheme> {
        match self {
            Scheme::All => vec![Scheme::Multimodel, Scheme::Ideal, Scheme::Seqnmodel],
            s => vec![s],
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multimodel" => Ok(Scheme::Multimodel),
            "ideal" => Ok(Scheme::Ideal),
            "seqnmodel" => Ok(Scheme::Seqnmodel),
            "all" => Ok(Scheme::All),
            other => Err(Error::Config(format!(
                "unknown scheme '{other}' (expected multimodel, ideal, seqnmodel or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// An independent Gaussian-cluster task per model.
    Synthetic,
    /// MNIST IDX files shared by every model.
    Mnist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKindName {
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityName {
    Analytic,
    PerChannelUse,
}

/// Every experiment parameter. Unknown keys in a config file are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub scheme: Scheme,
    /// K
    pub devices: usize,
    /// M
    pub models: usize,
    /// N
    pub antennas: usize,
    /// T, the total number of communication rounds.
    pub rounds: usize,
    /// J
    pub local_iters: usize,
    /// Mini-batch size; defaults to `600 / K`.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub l2_reg: f64,

    pub dataset: DatasetKind,
    pub mnist_dir: Option<String>,
    /// Use only the first this-many MNIST training samples.
    pub mnist_train_limit: Option<usize>,
    pub mnist_test_limit: Option<usize>,
    pub classes: usize,
    pub model_kinds: Vec<ModelKindName>,
    /// Feature dimension of each model's synthetic task.
    pub model_features: Vec<usize>,
    /// Hidden units of each MLP model (ignored for logistic models).
    pub model_hidden: Vec<usize>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub class_margin: f64,

    pub device_power_dbm: f64,
    /// Per-channel-use device transmit power `2 P^ul` in watts; overrides
    /// `device_power_dbm`.
    pub device_power_w: Option<f64>,
    /// Base-station power budget. Recorded only; the downlink is modeled as
    /// additive noise.
    pub bs_power_dbm: f64,
    pub uplink_bandwidth_hz: f64,
    pub downlink_bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub bs_noise_figure_db: f64,
    pub device_noise_figure_db: f64,
    pub sigma2_ul: Option<f64>,
    pub sigma2_dl: Option<f64>,

    pub distance_min_km: f64,
    pub distance_max_km: f64,
    pub distances_km: Option<Vec<f64>>,
    pub shadowing_std_db: f64,

    pub seed: u64,
    pub realizations: usize,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    /// Let the sequential baseline give the first `T mod M` models one extra
    /// round instead of rejecting `T mod M != 0`.
    pub seqn_uneven_split: bool,
    pub uplink_fidelity: FidelityName,

    /// Evaluate `H_n` and the optimality-gap bound (logistic models only).
    pub compute_bound: bool,
    pub bound_gd_iters: usize,
    pub phi: Option<f64>,
    pub delta: Option<f64>,

    /// Fill the `elapsed_ms` column. Off by default so reruns are byte-identical.
    pub record_timing: bool,
    pub output: String,
    pub diagnostics_dir: Option<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Multimodel,
            devices: 12,
            models: 3,
            antennas: 16,
            rounds: 30,
            local_iters: 20,
            batch_size: None,
            learning_rate: 0.1,
            l2_reg: 1e-3,
            dataset: DatasetKind::Synthetic,
            mnist_dir: None,
            mnist_train_limit: None,
            mnist_test_limit: None,
            classes: 4,
            model_kinds: vec![ModelKindName::Logistic; 3],
            model_features: vec![40, 60, 80],
            model_hidden: vec![0; 3],
            train_samples: 1200,
            test_samples: 1000,
            class_margin: 2.0,
            device_power_dbm: 23.0,
            device_power_w: None,
            bs_power_dbm: 47.0,
            uplink_bandwidth_hz: 1e6,
            downlink_bandwidth_hz: 1e7,
            noise_psd_dbm_hz: -174.0,
            bs_noise_figure_db: 2.0,
            device_noise_figure_db: 8.0,
            sigma2_ul: None,
            sigma2_dl: None,
            distance_min_km: 0.02,
            distance_max_km: 0.5,
            distances_km: None,
            shadowing_std_db: 8.0,
            seed: 1,
            realizations: 10,
            solver_tol: 1e-6,
            solver_max_iter: 100,
            seqn_uneven_split: false,
            uplink_fidelity: FidelityName::Analytic,
            compute_bound: false,
            bound_gd_iters: 2000,
            phi: None,
            delta: None,
            record_timing: false,
            output: "results.csv".into(),
            diagnostics_dir: None,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn batch(&self) -> usize {
        self.batch_size.unwrap_or(600 / self.devices.max(1)).max(1)
    }

    pub fn frames(&self) -> usize {
        self.rounds.div_ceil(self.models.max(1))
    }

    pub fn fidelity(&self) -> UplinkFidelity {
        match self.uplink_fidelity {
            FidelityName::Analytic => UplinkFidelity::Analytic,
            FidelityName::PerChannelUse => UplinkFidelity::PerChannelUse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.devices == 0 || self.models == 0 || !self.devices.is_multiple_of(self.models) {
            return fail(format!("K = {} must be a positive multiple of M = {}", self.devices, self.models));
        }
        if self.antennas == 0 || self.rounds == 0 || self.local_iters == 0 {
            return fail("antennas, rounds and local_iters must be >= 1".into());
        }
        if self.realizations == 0 {
            return fail("realizations must be >= 1".into());
        }
        if !(self.solver_tol > 0.0) || self.solver_max_iter == 0 {
            return fail("solver_tol must be > 0 and solver_max_iter >= 1".into());
        }
        if !(self.learning_rate > 0.0) || !(self.l2_reg >= 0.0) {
            return fail("learning_rate must be > 0 and l2_reg >= 0".into());
        }
        if self.model_kinds.len() != self.models || self.model_hidden.len() != self.models {
            return fail(format!(
                "model_kinds and model_hidden need one entry per model (M = {})",
                self.models
            ));
        }
        if self.dataset == DatasetKind::Synthetic && self.model_features.len() != self.models {
            return fail(format!("model_features needs one entry per model (M = {})", self.models));
        }
        for (m, (kind, &h)) in self.model_kinds.iter().zip(&self.model_hidden).enumerate() {
            if *kind == ModelKindName::Mlp && h == 0 {
                return fail(format!("model {} is an MLP with zero hidden units", m + 1));
            }
        }
        if self.classes < 2 {
            return fail("classes must be >= 2".into());
        }
        if self.dataset == DatasetKind::Synthetic {
            if self.model_features.contains(&0) {
                return fail("synthetic feature dimensions must be >= 1".into());
            }
            if !self.train_samples.is_multiple_of(self.devices) || self.train_samples == 0 {
                return fail(format!(
                    "train_samples = {} must split evenly over K = {}",
                    self.train_samples, self.devices
                ));
            }
            if self.batch() > self.train_samples / self.devices {
                return fail(format!(
                    "batch size {} exceeds the {} samples per device",
                    self.batch(),
                    self.train_samples / self.devices
                ));
            }
            if self.test_samples < self.classes {
                return fail("test_samples must be >= classes".into());
            }
        } else if self.mnist_dir.is_none() {
            return fail("dataset = \"mnist\" needs mnist_dir".into());
        }
        if let Some(d) = &self.distances_km {
            if d.len() != self.devices || d.iter().any(|x| !(*x > 0.0)) {
                return fail("distances_km needs K positive entries".into());
            }
        } else if !(self.distance_min_km > 0.0 && self.distance_max_km > self.distance_min_km) {
            return fail("need 0 < distance_min_km < distance_max_km".into());
        }
        if !(self.shadowing_std_db >= 0.0) {
            return fail("shadowing_std_db must be >= 0".into());
        }
        for (name, v) in [("sigma2_ul", self.sigma2_ul), ("sigma2_dl", self.sigma2_dl)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return fail(format!("{name} must be > 0"));
                }
            }
        }
        if let Some(p) = self.device_power_w {
            if !(p > 0.0) {
                return fail("device_power_w must be > 0".into());
            }
        }
        if matches!(self.scheme, Scheme::Seqnmodel | Scheme::All)
            && !self.rounds.is_multiple_of(self.models)
            && !self.seqn_uneven_split
        {
            return fail(format!(
                "seqnmodel splits T = {} rounds over M = {} models; set seqn_uneven_split = true to allow a remainder",
                self.rounds, self.models
            ));
        }
        self.noise_levels()?;
        Ok(())
    }

    /// Uplink and downlink noise from the link budget unless overridden.
    pub fn noise_levels(&self) -> Result<NoiseLevels> {
        let sigma2_ul = match self.sigma2_ul {
            Some(v) => v,
            None => dbm_to_watts(noise_variance_dbm(
                self.noise_psd_dbm_hz,
                self.uplink_bandwidth_hz,
                self.bs_noise_figure_db,
            )?),
        };
        let sigma2_dl = match self.sigma2_dl {
            Some(v) => v,
            None => dbm_to_watts(noise_variance_dbm(
                self.noise_psd_dbm_hz,
                self.downlink_bandwidth_hz,
                self.device_noise_figure_db,
            )?),
        };
        Ok(NoiseLevels { sigma2_ul, sigma2_dl })
    }

    /// Device transmit power per channel use, `2 P^ul`, in watts.
    pub fn device_power_per_use(&self) -> f64 {
        self.device_power_w.unwrap_or_else(|| dbm_to_watts(self.device_power_dbm))
    }

    /// Power cap `D * P^ul / 2` of every device: the per-use budget over the
    /// `D / 2` complex channel uses of a packed `D`-entry model.
    pub fn power_caps(&self, d: usize) -> Vec<f64> {
        vec![d as f64 * self.device_power_per_use() / 2.0; self.devices]
    }

    /// Architecture of every model for the given feature counts.
    pub fn build_models(&self, features: &[usize]) -> Vec<Model> {
        self.model_kinds
            .iter()
            .zip(&self.model_hidden)
            .zip(features)
            .map(|((kind, &h), &b)| match kind {
                ModelKindName::Logistic => Model::logistic(b, self.classes, self.l2_reg),
                ModelKindName::Mlp => Model::mlp(b, h, self.classes, self.l2_reg),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
        assert_eq!(SimConfig::default().batch(), 50);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = SimConfig::from_toml_str("devcies = 12\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("devcies"));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = SimConfig {
            scheme: Scheme::All,
            sigma2_ul: Some(1e-9),
            ..SimConfig::default()
        };
        let back = SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn divisibility_and_split_rules() {
        let bad = SimConfig {
            devices: 6,
            models: 4,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        let seqn = SimConfig {
            scheme: Scheme::Seqnmodel,
            models: 4,
            model_kinds: vec![ModelKindName::Logistic; 4],
            model_features: vec![8; 4],
            model_hidden: vec![0; 4],
            ..SimConfig::default()
        };
        assert!(seqn.validate().is_err());
        SimConfig {
            seqn_uneven_split: true,
            ..seqn
        }
        .validate()
        .unwrap();
    }

    #[test]
    fn link_budget_defaults() {
        let n = SimConfig::default().noise_levels().unwrap();
        assert!((n.sigma2_ul - dbm_to_watts(-112.0)).abs() < 1e-25);
        assert!((n.sigma2_dl - dbm_to_watts(-96.0)).abs() < 1e-25);
        assert!((SimConfig::default().device_power_per_use() - 0.19952623149688797).abs() < 1e-12);
    }
}
