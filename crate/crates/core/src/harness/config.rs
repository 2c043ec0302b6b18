//! Experiment configuration: a flat TOML table, every key optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::{PartitionScheme, PHISHING_SAMPLES};
use crate::aggregators::{default_bucket_size, default_c, AggregatorKind};
use crate::algorithms::Algorithm;
use crate::attacks::{AttackKind, ALIE_DEFAULT_Z, IPM_DEFAULT_Z};
use crate::compressors::CompressorKind;
use crate::error::{Error, Result};
use crate::objective::RegularizerKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// Phishing-shaped logistic data.
    Phishing,
    /// Two groups of shifted quadratics.
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorName {
    Identity,
    Randk,
    Topk,
    Natural,
    /// RandK scaled by `1/(ω+1)`, a contractive operator.
    ScaledRandk,
    ScaledNatural,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorName {
    Mean,
    Cm,
    Gm,
    Krum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackName {
    None,
    Bf,
    Lf,
    Ipm,
    Alie,
    Mimic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeMode {
    /// `gamma_mult ×` the non-convex theoretical stepsize.
    Theoretical,
    /// Same as `Theoretical`; kept as a separate name for sweeps.
    Multiplier,
    /// `gamma_mult ×` the PŁ theoretical stepsize.
    TheoreticalPl,
    /// The value of `gamma`.
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// LibSVM file; when absent the synthetic source is used.
    pub dataset: Option<PathBuf>,
    /// Feature dimension override for the LibSVM file.
    pub dim: Option<usize>,
    pub synthetic: SyntheticKind,
    /// Sample count of the phishing-shaped generator.
    pub samples: usize,
    pub data_seed: u64,
    /// Quadratic source: dimension, size of the first good group and the
    /// seeds of the two shifts.
    pub quad_dim: usize,
    pub quad_group1: usize,
    pub zeta_seed1: u64,
    pub zeta_seed2: u64,

    pub n: usize,
    pub n_byz: usize,
    pub partition: PartitionScheme,
    pub regularizer: RegularizerKind,
    pub lambda: f64,

    pub algorithm: Algorithm,
    pub rounds: usize,
    /// Mini-batch size; default `max(1, round(batch_frac · m))`.
    pub batch: Option<usize>,
    pub batch_frac: f64,
    pub p: Option<f64>,
    pub momentum: Option<f64>,
    pub compressor: CompressorName,
    /// Sparsity; default `max(1, round(k_frac · d))`.
    pub k: Option<usize>,
    pub k_frac: f64,
    pub downlink: CompressorName,
    pub downlink_k: Option<usize>,
    pub aggregator: AggregatorName,
    /// Bucket size; default `⌊0.5 / δ⌋`, no bucketing when it is 1.
    pub bucket_s: Option<usize>,
    pub c: Option<f64>,
    pub attack: AttackName,
    pub attack_z: Option<f64>,
    /// Heterogeneity multiplier used only in the δ tolerance checks.
    pub hetero_b: f64,

    pub stepsize: StepsizeMode,
    pub gamma_mult: f64,
    pub gamma: Option<f64>,

    pub metrics_every: usize,
    pub f_star: Option<f64>,
    /// Estimate `f*` by gradient descent when `f_star` is absent.
    pub estimate_f_star: bool,
    pub f_star_tol: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            dim: None,
            synthetic: SyntheticKind::Phishing,
            samples: PHISHING_SAMPLES,
            data_seed: 0,
            quad_dim: 100,
            quad_group1: 10,
            zeta_seed1: 1,
            zeta_seed2: 2,
            n: 16,
            n_byz: 3,
            partition: PartitionScheme::Homogeneous,
            regularizer: RegularizerKind::NonConvex,
            lambda: 0.1,
            algorithm: Algorithm::Marina2,
            rounds: 1000,
            batch: None,
            batch_frac: 0.01,
            p: None,
            momentum: None,
            compressor: CompressorName::Randk,
            k: None,
            k_frac: 0.1,
            downlink: CompressorName::Identity,
            downlink_k: None,
            aggregator: AggregatorName::Cm,
            bucket_s: None,
            c: None,
            attack: AttackName::Bf,
            attack_z: None,
            hetero_b: 0.0,
            stepsize: StepsizeMode::Theoretical,
            gamma_mult: 1.0,
            gamma: None,
            metrics_every: 1,
            f_star: None,
            estimate_f_star: false,
            f_star_tol: 1e-20,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_byz * 2 >= self.n {
            return Err(Error::Config(format!(
                "need n_byz < n/2, got n = {}, n_byz = {}",
                self.n, self.n_byz
            )));
        }
        if self.n_byz > 0 && self.attack == AttackName::None {
            return Err(Error::Config("n_byz > 0 needs an attack".into()));
        }
        if self.metrics_every == 0 {
            return Err(Error::Config("metrics_every must be >= 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if self.stepsize == StepsizeMode::Explicit && self.gamma.is_none() {
            return Err(Error::Config("explicit stepsize needs gamma".into()));
        }
        if !(self.gamma_mult > 0.0) {
            return Err(Error::Config("gamma_mult must be > 0".into()));
        }
        if self.attack == AttackName::Mimic && !self.is_quadratic() {
            return Err(Error::Config("the mimic attack needs the quadratic source".into()));
        }
        if self.is_quadratic() && (self.quad_group1 == 0 || self.quad_group1 > self.num_good()) {
            return Err(Error::Config(format!(
                "quad_group1 must lie in 1..={}",
                self.num_good()
            )));
        }
        Ok(())
    }

    pub fn is_quadratic(&self) -> bool {
        self.dataset.is_none() && self.synthetic == SyntheticKind::Quadratic
    }

    pub fn num_good(&self) -> usize {
        self.n - self.n_byz
    }

    /// Byzantine fraction `δ = n_byz / n`.
    pub fn delta(&self) -> f64 {
        self.n_byz as f64 / self.n as f64
    }

    pub fn compressor_kind(name: CompressorName, k: Option<usize>, k_frac: f64, d: usize) -> CompressorKind {
        let k = k.unwrap_or_else(|| ((k_frac * d as f64).round() as usize).clamp(1, d));
        match name {
            CompressorName::Identity => CompressorKind::Identity,
            CompressorName::Randk => CompressorKind::RandK(k),
            CompressorName::Topk => CompressorKind::TopK(k),
            CompressorName::Natural => CompressorKind::Natural,
            CompressorName::ScaledRandk => CompressorKind::ScaledUnbiased(Box::new(CompressorKind::RandK(k))),
            CompressorName::ScaledNatural => CompressorKind::ScaledUnbiased(Box::new(CompressorKind::Natural)),
        }
    }

    pub fn uplink(&self, d: usize) -> CompressorKind {
        Self::compressor_kind(self.compressor, self.k, self.k_frac, d)
    }

    pub fn downlink_kind(&self, d: usize) -> CompressorKind {
        Self::compressor_kind(self.downlink, self.downlink_k, self.k_frac, d)
    }

    pub fn bucket_size(&self) -> usize {
        self.bucket_s.unwrap_or_else(|| default_bucket_size(self.delta()))
    }

    pub fn aggregator_kind(&self) -> AggregatorKind {
        let base = match self.aggregator {
            AggregatorName::Mean => AggregatorKind::Mean,
            AggregatorName::Cm => AggregatorKind::CM,
            AggregatorName::Gm => AggregatorKind::gm(),
            AggregatorName::Krum => AggregatorKind::Krum { num_byz: self.n_byz },
        };
        match self.bucket_size() {
            1 => base,
            s => AggregatorKind::bucketed(base, s),
        }
    }

    /// Aggregation constant for the stepsize rules.
    pub fn c_value(&self) -> f64 {
        self.c.unwrap_or_else(|| default_c(&self.aggregator_kind()))
    }

    pub fn attack_kind(&self) -> Option<AttackKind> {
        match self.attack {
            AttackName::None => None,
            AttackName::Bf => Some(AttackKind::BitFlip),
            AttackName::Lf => Some(AttackKind::LabelFlip),
            AttackName::Ipm => Some(AttackKind::Ipm {
                z: self.attack_z.unwrap_or(IPM_DEFAULT_Z),
            }),
            AttackName::Alie => Some(AttackKind::Alie {
                z: self.attack_z.unwrap_or(ALIE_DEFAULT_Z),
            }),
            AttackName::Mimic => Some(AttackKind::Mimic),
        }
    }
}
