//! Experiment configuration.
//!
//! A config is a JSON document. It may name a `preset`, in which case the
//! preset is expanded first and every field present in the document replaces
//! the preset's value (objects merge key by key, arrays and scalars replace).

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use sigsel_core::baselines::{Scenario, Summary};
use sigsel_core::mcmc::{McmcConfig, ModelSpec};
use sigsel_core::params::{Block, ParameterSpace};
use sigsel_core::sigkernel::{KernelConfig, PdeConfig, StaticKernelParams};
use sigsel_core::wf::{HaplotypeFrequencies, RecombinationMap, SelectionMode, SimConfig};

use crate::presets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Master seed; every random stream of a run derives from it.
    pub seed: u64,
    pub model: ModelConfig,
    pub sim: SimSection,
    pub inference: InferenceConfig,
    pub parameter_space: ParameterSpace,
    #[serde(default)]
    pub io: IoConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub loci: usize,
    #[serde(default)]
    pub mode: SelectionMode,
    pub dominance: Vec<f64>,
    /// Per-generation crossover probability between adjacent loci.
    pub recombination: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub pop_size: u64,
    #[serde(default)]
    pub t0: i64,
    pub intervals: usize,
    pub delta_t: usize,
    /// Haplotype frequencies at `t0`, locus 1 as the most significant bit.
    pub init_haps: Vec<f64>,
    /// Selection coefficients used by `simulate`.
    pub true_s: Vec<f64>,
    /// Observed replicates written by `simulate`.
    #[serde(default = "one")]
    pub replicates: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// RBF bandwidth, `k(u, v) = exp(-|u - v|^2 / gamma)`.
    pub gamma: f64,
    #[serde(default = "default_dyadic_order")]
    pub dyadic_order: u32,
    #[serde(default = "yes")]
    pub add_time: bool,
}

fn default_dyadic_order() -> u32 {
    PdeConfig::default().dyadic_order
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    pub w: f64,
    pub m: usize,
    pub c: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub kernel: KernelSection,
    /// Point estimate reported by `benchmark`.
    #[serde(default)]
    pub summary: Summary,
    /// Infer the initial haplotype frequencies jointly with selection.
    #[serde(default)]
    pub infer_init_haps: bool,
    /// Selection-coefficient start; the LLS estimate when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_s: Option<Vec<f64>>,
    /// Simplex start `(h_1..h_n, r_aux)`; uniform with `r_aux = 0` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_haps: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            out_dir: default_out_dir(),
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "gblfi-sigsr")]
    Gblfi,
    #[serde(rename = "lls")]
    Lls,
    /// Returns the true coefficients; checks the benchmark plumbing.
    #[serde(rename = "truth")]
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub s_true: Vec<f64>,
    pub recombination: Vec<f64>,
}

/// Precomputed RMSE column for a method this tool does not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalColumn {
    pub method: String,
    /// CSV with header `scenario,mean_rmse,sd_rmse`.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub scenarios: Vec<ScenarioSpec>,
    pub methods: Vec<Method>,
    pub n_reps: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub external: Vec<ExternalColumn>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let loci = self.model.loci;
        ensure!(loci >= 1, "model.loci must be at least 1");
        ensure!(
            self.model.dominance.len() == loci,
            "model.dominance has {} entries for {} loci",
            self.model.dominance.len(),
            loci
        );
        ensure!(
            self.model.recombination.len() == loci - 1,
            "model.recombination has {} entries, need {}",
            self.model.recombination.len(),
            loci - 1
        );
        ensure!(
            self.sim.init_haps.len() == 1 << loci,
            "sim.init_haps has {} entries, need {}",
            self.sim.init_haps.len(),
            1usize << loci
        );
        ensure!(
            self.sim.true_s.len() == loci,
            "sim.true_s has {} entries for {} loci",
            self.sim.true_s.len(),
            loci
        );
        ensure!(self.sim.replicates >= 1, "sim.replicates must be at least 1");
        let spec = self.model_spec().context("invalid model or sim section")?;
        spec.validate()?;
        spec.check_space(&self.parameter_space)
            .context("parameter_space does not match the model")?;
        self.mcmc().validate()?;
        self.kernel().validate()?;
        if let Some(init) = &self.inference.init_s {
            ensure!(init.len() == loci, "inference.init_s has {} entries", init.len());
        }
        if let Some(init) = &self.inference.init_haps {
            ensure!(
                self.inference.infer_init_haps,
                "inference.init_haps given but infer_init_haps is off"
            );
            ensure!(
                init.len() == (1 << loci) + 1,
                "inference.init_haps needs {} haplotype entries plus r_aux",
                1usize << loci
            );
        }
        if let Some(b) = &self.benchmark {
            ensure!(b.n_reps >= 1, "benchmark.n_reps must be at least 1");
            for sc in &b.scenarios {
                ensure!(
                    sc.s_true.len() == loci && sc.recombination.len() == loci - 1,
                    "benchmark scenario {:?} does not match {} loci",
                    sc.name,
                    loci
                );
            }
        }
        Ok(())
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        Ok(SimConfig {
            pop_size: self.sim.pop_size,
            t0: self.sim.t0,
            intervals: self.sim.intervals,
            delta_t: self.sim.delta_t,
            init_haps: HaplotypeFrequencies::new(self.sim.init_haps.clone())?,
            seed: self.seed,
        })
    }

    pub fn rmap(&self) -> Result<RecombinationMap> {
        Ok(RecombinationMap::new(self.model.recombination.clone())?)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        Ok(ModelSpec {
            sim: self.sim_config()?,
            dominance: self.model.dominance.clone(),
            mode: self.model.mode,
            rmap: self.rmap()?,
            infer_init_haps: self.inference.infer_init_haps,
        })
    }

    pub fn mcmc(&self) -> McmcConfig {
        let i = &self.inference;
        McmcConfig {
            w: i.w,
            m: i.m,
            c: i.c,
            n_steps: i.n_steps,
            burn_in: i.burn_in,
            seed: self.seed,
        }
    }

    pub fn kernel(&self) -> KernelConfig {
        let k = self.inference.kernel;
        KernelConfig {
            static_kernel: StaticKernelParams::rbf(k.gamma),
            pde: PdeConfig {
                dyadic_order: k.dyadic_order,
            },
            add_time: k.add_time,
        }
    }

    /// Bounds of the selection-coefficient block.
    pub fn selection_bounds(&self) -> (f64, f64) {
        match self.parameter_space.blocks().first() {
            Some(Block::Interval { low, high, .. }) => (*low, *high),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let Some(b) = &self.benchmark else {
            bail!("config has no benchmark section");
        };
        let sim = self.sim_config()?;
        b.scenarios
            .iter()
            .map(|sc| {
                Ok(Scenario {
                    name: sc.name.clone(),
                    s_true: sc.s_true.clone(),
                    dominance: self.model.dominance.clone(),
                    mode: self.model.mode,
                    rmap: RecombinationMap::new(sc.recombination.clone())?,
                    sim: sim.clone(),
                    n_reps: b.n_reps,
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        resolve(serde_json::from_str(text).context("config is not valid JSON")?, None)
    }
}

/// Objects merge recursively; anything else in `overlay` replaces `base`.
pub fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Expands the preset named by `preset` (or by the document) and overlays `doc`.
pub fn resolve(doc: Value, preset: Option<&str>) -> Result<ExperimentConfig> {
    let named = preset
        .map(str::to_string)
        .or_else(|| doc.get("preset").and_then(Value::as_str).map(str::to_string));
    let merged = match named {
        Some(name) => {
            let base = presets::preset(&name)?;
            let mut v = serde_json::to_value(&base)?;
            merge(&mut v, doc);
            if let Value::Object(map) = &mut v {
                map.insert("preset".into(), Value::String(name));
            }
            v
        }
        None => doc,
    };
    let cfg: ExperimentConfig =
        serde_json::from_value(merged).context("config does not match the schema")?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a config from `path` and/or a preset name; at least one is required.
pub fn load(path: Option<&Path>, preset: Option<&str>) -> Result<ExperimentConfig> {
    let doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("config {} is not valid JSON", p.display()))?
        }
        None => {
            ensure!(preset.is_some(), "give --config or --preset");
            Value::Object(Default::default())
        }
    };
    resolve(doc, preset).with_context(|| match path {
        Some(p) => format!("in config {}", p.display()),
        None => format!("in preset {}", preset.unwrap_or_default()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn every_preset_round_trips() {
        for name in presets::NAMES {
            let cfg = presets::preset(name).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_json();
            let again = ExperimentConfig::from_json(&text).unwrap();
            assert_eq!(cfg, again, "{name}");
            assert_eq!(text, again.to_json());
        }
    }

    #[test]
    fn overrides_merge_field_by_field() {
        let doc = json!({
            "preset": "fig2-two-locus",
            "seed": 9,
            "inference": {"n_steps": 10, "burn_in": 2, "kernel": {"gamma": 0.5}}
        });
        let cfg = resolve(doc, None).unwrap();
        let base = presets::preset("fig2-two-locus").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.inference.n_steps, 10);
        assert_eq!(cfg.inference.kernel.gamma, 0.5);
        assert_eq!(cfg.inference.kernel.dyadic_order, base.inference.kernel.dyadic_order);
        assert_eq!(cfg.inference.c, base.inference.c);
        assert_eq!(cfg.sim, base.sim);
    }

    #[test]
    fn flag_preset_wins_over_document() {
        let cfg = resolve(json!({"preset": "fig2-two-locus"}), Some("three-locus")).unwrap();
        assert_eq!(cfg.model.loci, 3);
        assert_eq!(cfg.preset.as_deref(), Some("three-locus"));
    }

    #[test]
    fn schema_errors_are_reported() {
        assert!(resolve(json!({"preset": "no-such"}), None).is_err());
        assert!(resolve(json!({"preset": "fig2-two-locus", "bogus": 1}), None).is_err());
        let err = resolve(
            json!({"preset": "fig2-two-locus", "model": {"dominance": [0.5]}}),
            None,
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("dominance"), "{err:#}");
        let err = resolve(
            json!({"preset": "fig2-two-locus", "inference": {"burn_in": 5000}}),
            None,
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("burn-in"), "{err:#}");
    }

    #[test]
    fn fig2_preset_values() {
        let cfg = presets::preset("fig2-two-locus").unwrap();
        assert_eq!(cfg.sim.pop_size, 5000);
        assert_eq!(cfg.sim.intervals * cfg.sim.delta_t, 100);
        assert_eq!(cfg.sim.delta_t, 10);
        assert_eq!(cfg.inference.kernel.gamma, 0.1);
        assert_eq!(cfg.inference.c, 1e-4);
        assert_eq!((cfg.inference.n_steps, cfg.inference.burn_in), (1000, 200));
        assert_eq!((cfg.inference.w, cfg.inference.m), (1.0, 8));
        assert_eq!(cfg.sim.true_s, vec![0.02, 0.07]);
        assert_eq!(cfg.model.recombination, vec![1e-6]);
    }
}
