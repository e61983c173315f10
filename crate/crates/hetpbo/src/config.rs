//! Experiment configuration, read from a TOML file with the sections
//! `[benchmark]`, `[acquisition]`, `[experiment]`, `[inference]` and
//! `[output]`. Every key except `benchmark.function` has a default.
//!
//! ```toml
//! [benchmark]
//! function = "sine1d"
//! noise_scale = 0.1
//!
//! [acquisition]
//! kinds = ["ei", "ucb", "anpei", "rahbo"]
//! gamma = 1.0
//!
//! [experiment]
//! iterations = 30
//! seeds = 30          # or an explicit list: [1, 2, 3]
//! rhos = ["3fmax"]    # numbers are absolute values
//!
//! [inference]
//! backend = "hb"
//! bandwidth = "loo"   # "evidence", or a number for a fixed bandwidth
//! ```

use std::path::{Path, PathBuf};

use hetpbo_core::acquisition::{AcqConfig, AcqKind};
use hetpbo_core::benchmarks::{BenchmarkFunction, BenchmarkSpec};
use hetpbo_core::engine::{Backend, BandwidthMode, EngineConfig};
use hetpbo_core::inference::{GibbsSettings, PredictiveNoise};
use hetpbo_core::oracle::{DensityFamily, TrueUncertaintyOracle};
use hetpbo_core::trial::{RhoSpec, TrialConfig};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkSection,
    #[serde(default)]
    pub acquisition: AcquisitionSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub inference: InferenceSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub function: BenchmarkFunction,
    /// `a`; defaults to the benchmark's own value.
    pub noise_scale: Option<f64>,
    #[serde(default)]
    pub oracle_family: FamilyName,
    /// Degrees of freedom of the student-t oracle.
    #[serde(default = "default_dof")]
    pub oracle_dof: f64,
    pub oracle_center: Option<Vec<f64>>,
    pub oracle_scale: Option<Vec<f64>>,
}

fn default_dof() -> f64 {
    5.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    #[default]
    Gaussian,
    StudentT,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSection {
    pub kinds: Vec<AcqKind>,
    pub gamma: f64,
    pub eta: f64,
    pub pool_per_dim: usize,
    pub pool_size: Option<usize>,
    pub refine_top: usize,
    pub refine_steps: usize,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        let d = AcqConfig::default();
        Self {
            kinds: AcqKind::ALL.to_vec(),
            gamma: d.gamma,
            eta: d.eta,
            pool_per_dim: d.pool_per_dim,
            pool_size: d.pool_size,
            refine_top: d.refine_top,
            refine_steps: d.refine_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    /// Seeds `1..=n`.
    Count(u64),
    List(Vec<u64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoValue {
    Absolute(f64),
    /// `"<k>fmax"`, a multiple of `|f(x_max)|`.
    Named(String),
}

impl RhoValue {
    pub fn to_spec(&self) -> Result<RhoSpec> {
        match self {
            RhoValue::Absolute(v) => Ok(RhoSpec::Absolute(*v)),
            RhoValue::Named(s) => {
                let s = s.trim();
                if let Some(k) = s.strip_suffix("fmax") {
                    let k = if k.is_empty() { 1.0 } else { parse_f64(k)? };
                    Ok(RhoSpec::FmaxMultiple(k))
                } else {
                    Ok(RhoSpec::Absolute(parse_f64(s)?))
                }
            }
        }
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Config(format!("bad rho value {s:?}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub n_anchors: usize,
    pub n_initial_duels: usize,
    pub iterations: usize,
    pub seeds: Seeds,
    /// Risk levels reported besides `ρ = 0`, which is always included.
    pub rhos: Vec<RhoValue>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n_anchors: 30,
            n_initial_duels: 5,
            iterations: 30,
            seeds: Seeds::Count(30),
            rhos: vec![RhoValue::Named("3fmax".into())],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BandwidthSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub backend: Backend,
    pub bandwidth: BandwidthSetting,
    pub predictive_noise: PredictiveNoise,
    pub gibbs_burn_in: usize,
    pub gibbs_thinning: usize,
    pub refit: bool,
    pub initial_lengthscale: f64,
    pub lengthscale_bounds: (f64, f64),
    pub lengthscale_grid: usize,
    pub lengthscale_refine: usize,
    pub joint_grid: usize,
    pub signal_variance: f64,
}

impl Default for InferenceSection {
    fn default() -> Self {
        let e = EngineConfig::default();
        Self {
            backend: e.backend,
            bandwidth: BandwidthSetting::Named("loo".into()),
            predictive_noise: e.predictive_noise,
            gibbs_burn_in: e.gibbs.burn_in,
            gibbs_thinning: e.gibbs.thinning,
            refit: e.refit,
            initial_lengthscale: e.initial_lengthscale,
            lengthscale_bounds: e.lengthscale_bounds,
            lengthscale_grid: e.lengthscale_grid,
            lengthscale_refine: e.lengthscale_refine,
            joint_grid: e.joint_grid,
            signal_variance: e.signal_variance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Record per-round wall time. Off by default so that traces are
    /// byte-reproducible.
    pub wall_time: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), wall_time: false }
    }
}

impl ExperimentConfig {
    /// Defaults for everything but the benchmark.
    pub fn for_benchmark(function: BenchmarkFunction) -> Self {
        Self {
            benchmark: BenchmarkSection {
                function,
                noise_scale: None,
                oracle_family: FamilyName::Gaussian,
                oracle_dof: default_dof(),
                oracle_center: None,
                oracle_scale: None,
            },
            acquisition: AcquisitionSection::default(),
            experiment: ExperimentSection::default(),
            inference: InferenceSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.acquisition.kinds.is_empty() {
            return Err(Error::Config("acquisition.kinds must not be empty".into()));
        }
        if self.seeds().is_empty() {
            return Err(Error::Config("experiment.seeds must not be empty".into()));
        }
        let mut seen = self.seeds();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds().len() {
            return Err(Error::Config("experiment.seeds contains duplicates".into()));
        }
        let mut labels = vec![String::from("0")];
        for rho in self.rho_specs()? {
            if labels.contains(&rho.label()) {
                return Err(Error::Config(format!("rho {} is listed twice (0 is always included)", rho.label())));
            }
            labels.push(rho.label());
            let v = match rho {
                RhoSpec::Absolute(v) | RhoSpec::FmaxMultiple(v) => v,
            };
            if !v.is_finite() {
                return Err(Error::Config("rho values must be finite".into()));
            }
        }
        for kind in &self.acquisition.kinds {
            self.trial_config(*kind)?.validate()?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        match &self.experiment.seeds {
            Seeds::Count(n) => (1..=*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }

    pub fn rho_specs(&self) -> Result<Vec<RhoSpec>> {
        self.experiment.rhos.iter().map(RhoValue::to_spec).collect()
    }

    pub fn spec(&self) -> Result<BenchmarkSpec> {
        let b = &self.benchmark;
        let family = match b.oracle_family {
            FamilyName::Gaussian => DensityFamily::Gaussian,
            FamilyName::StudentT => DensityFamily::StudentT { dof: b.oracle_dof },
            FamilyName::Uniform => DensityFamily::Uniform,
        };
        let default = BenchmarkSpec::default_oracle(b.function, family);
        let oracle = TrueUncertaintyOracle::new(
            family,
            b.oracle_center.clone().unwrap_or_else(|| default.center().to_vec()),
            b.oracle_scale.clone().unwrap_or_else(|| default.scale().to_vec()),
            b.noise_scale.unwrap_or(default.noise_scale()),
        )?;
        Ok(BenchmarkSpec::new(b.function, oracle)?)
    }

    pub fn engine_config(&self, kind: AcqKind) -> Result<EngineConfig> {
        let i = &self.inference;
        let a = &self.acquisition;
        let bandwidth = match &i.bandwidth {
            BandwidthSetting::Fixed(h) => BandwidthMode::Fixed(*h),
            BandwidthSetting::Named(s) => match s.as_str() {
                "loo" => BandwidthMode::Loo,
                "evidence" => BandwidthMode::Evidence,
                other => return Err(Error::Config(format!("unknown bandwidth mode {other:?}"))),
            },
        };
        let cfg = EngineConfig {
            backend: i.backend,
            bandwidth,
            lengthscale_bounds: i.lengthscale_bounds,
            initial_lengthscale: i.initial_lengthscale,
            refit: i.refit,
            signal_variance: i.signal_variance,
            gibbs: GibbsSettings { burn_in: i.gibbs_burn_in, thinning: i.gibbs_thinning },
            predictive_noise: i.predictive_noise,
            acquisition: AcqConfig {
                kind,
                gamma: a.gamma,
                eta: a.eta,
                pool_per_dim: a.pool_per_dim,
                pool_size: a.pool_size,
                refine_top: a.refine_top,
                refine_steps: a.refine_steps,
            },
            lengthscale_grid: i.lengthscale_grid,
            lengthscale_refine: i.lengthscale_refine,
            joint_grid: i.joint_grid,
            ..EngineConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn trial_config(&self, kind: AcqKind) -> Result<TrialConfig> {
        let e = &self.experiment;
        let mut cfg = TrialConfig::new(self.spec()?, self.engine_config(kind)?);
        cfg.n_anchors = e.n_anchors;
        cfg.n_initial_duels = e.n_initial_duels;
        cfg.iterations = e.iterations;
        cfg.rhos = self.rho_specs()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[benchmark]\nfunction = \"sine1d\"\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::for_benchmark(BenchmarkFunction::Sine1d));
        assert_eq!(cfg.seeds(), (1..=30).collect::<Vec<_>>());
        let t = cfg.trial_config(AcqKind::Anpei).unwrap();
        assert_eq!(t.spec, BenchmarkSpec::sine1d());
        assert_eq!(t.rhos, vec![RhoSpec::FmaxMultiple(3.0)]);
        assert_eq!(t.engine.acquisition.kind, AcqKind::Anpei);
    }

    #[test]
    fn full_file() {
        let text = r#"
            [benchmark]
            function = "hartmann4d"
            noise_scale = 1.0
            oracle_family = "student_t"
            oracle_dof = 5

            [acquisition]
            kinds = ["ei", "anpei"]
            gamma = 2.5
            pool_size = 64

            [experiment]
            iterations = 40
            seeds = [3, 7]
            rhos = [0.5, "3fmax", "fmax"]

            [inference]
            backend = "laplace"
            bandwidth = "evidence"
            gibbs_burn_in = 10

            [output]
            dir = "runs/h4"
            wall_time = true
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.seeds(), vec![3, 7]);
        assert_eq!(
            cfg.rho_specs().unwrap(),
            vec![RhoSpec::Absolute(0.5), RhoSpec::FmaxMultiple(3.0), RhoSpec::FmaxMultiple(1.0)]
        );
        let spec = cfg.spec().unwrap();
        assert_eq!(spec.oracle.family(), DensityFamily::StudentT { dof: 5.0 });
        assert_eq!(spec.noise_scale(), 1.0);
        let e = cfg.engine_config(AcqKind::Ei).unwrap();
        assert_eq!(e.backend, Backend::Laplace);
        assert_eq!(e.bandwidth, BandwidthMode::Evidence);
        assert_eq!(e.gibbs.burn_in, 10);
        assert_eq!(e.acquisition.gamma, 2.5);
        assert_eq!(e.acquisition.pool_size, Some(64));
        // round trip through the serializer
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn fixed_bandwidth_is_a_number() {
        let cfg =
            ExperimentConfig::from_toml_str("[benchmark]\nfunction = \"branin2d\"\n[inference]\nbandwidth = 0.7\n")
                .unwrap();
        assert_eq!(cfg.engine_config(AcqKind::Ei).unwrap().bandwidth, BandwidthMode::Fixed(0.7));
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "[benchmark]\nfunction = \"nope\"\n",
            "[benchmark]\nfunction = \"sine1d\"\ncolour = 1\n",
            "[benchmark]\nfunction = \"sine1d\"\n[experiment]\niterations = 0\n",
            "[benchmark]\nfunction = \"sine1d\"\n[experiment]\nseeds = []\n",
            "[benchmark]\nfunction = \"sine1d\"\n[experiment]\nseeds = [1, 1]\n",
            "[benchmark]\nfunction = \"sine1d\"\n[experiment]\nrhos = [\"xfmax\"]\n",
            "[benchmark]\nfunction = \"sine1d\"\n[acquisition]\nkinds = []\n",
            "[benchmark]\nfunction = \"sine1d\"\n[experiment]\nrhos = [0.0]\n",
            "[benchmark]\nfunction = \"sine1d\"\n[experiment]\nrhos = [\"3fmax\", \"3fmax\"]\n",
            "[benchmark]\nfunction = \"sine1d\"\nnoise_scale = -1.0\n",
            "[benchmark]\nfunction = \"sine1d\"\n[inference]\nbandwidth = \"magic\"\n",
            "[benchmark]\nfunction = \"sine1d\"\noracle_center = [0.1, 0.2]\n",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}
