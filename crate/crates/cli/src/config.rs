//! Flat JSON run configuration.
//!
//! Every key is optional except `scenario`; missing keys take the defaults of
//! [`RunConfig::default`]. Unknown and duplicate keys are rejected.

use std::path::Path;

use rgflow::nonlinear::{EvolutionConfig, Nonlinearity, PicardInit, QuadratureRule};
use rgflow::rg::RGConfig;
use rgflow::timescale::CSpec;
use rgflow::{Interp, KernelSpec, RgError, SpaceConfig, TimeScale};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    ValidateKernel,
    RunLinear,
    RunRg,
    RunDirect,
    Compare,
    Constants,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::ValidateKernel => "validate-kernel",
            Scenario::RunLinear => "run-linear",
            Scenario::RunRg => "run-rg",
            Scenario::RunDirect => "run-direct",
            Scenario::Compare => "compare",
            Scenario::Constants => "constants",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    /// `gauss`, `quartic` or `sextic`.
    pub kernel: String,
    /// Leading exponent of `c(t) = t^p + Σ coef·t^exp`.
    pub p: f64,
    /// Lower-order `(coef, exp)` terms of `c`.
    pub c_lower: Vec<(f64, f64)>,
    pub q: f64,
    pub omega_max: f64,
    /// Frequency nodes (odd).
    pub n: usize,
    pub interp: Interp,
    pub dealias_pad: usize,
    /// Nonlinearity `Σ_{j>=alpha} a_j u^j ∂u`, `coeffs[0] = a_alpha`.
    pub alpha: u32,
    pub coeffs: Vec<f64>,
    pub radius: Option<f64>,
    pub lambda: f64,
    /// RG scale `L`.
    pub scale: f64,
    pub n_max: u32,
    pub delta: f64,
    /// `f0 = amplitude·G_p + perturbation·(-ω² ĝ)`.
    pub amplitude: f64,
    pub perturbation: f64,
    /// End time of `run-direct`; defaults to `L²`.
    pub horizon: Option<f64>,
    pub nt: usize,
    pub quadrature: QuadratureRule,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub picard_init: PicardInit,
    /// Seed of the random contraction corpus.
    pub seed: u64,
    pub corpus_size: usize,
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let evo = EvolutionConfig::default();
        let space = SpaceConfig::default();
        Self {
            scenario: None,
            kernel: "gauss".into(),
            p: 0.0,
            c_lower: Vec::new(),
            q: space.q,
            omega_max: space.omega_max,
            n: space.n,
            interp: space.interp,
            dealias_pad: space.dealias_pad,
            alpha: 1,
            coeffs: vec![1.0],
            radius: None,
            lambda: 0.0,
            scale: 4.0,
            n_max: 8,
            delta: 0.2,
            amplitude: 1.0,
            perturbation: 0.0,
            horizon: None,
            nt: evo.nt,
            quadrature: evo.quadrature,
            picard_tol: evo.picard_tol,
            picard_max: evo.picard_max,
            picard_init: evo.init,
            seed: 0,
            corpus_size: 8,
            out: "rgflow-out".into(),
        }
    }
}

/// Everything a scenario needs, built from a validated [`RunConfig`].
pub struct Resolved {
    pub scenario: Scenario,
    pub kernel: KernelSpec,
    pub ts: TimeScale,
    pub space: SpaceConfig,
    pub nl: Nonlinearity,
    pub evolution: EvolutionConfig,
}

impl Resolved {
    pub fn rg(&self, cfg: &RunConfig) -> RGConfig {
        RGConfig {
            scale: cfg.scale,
            n_max: cfg.n_max,
            delta: cfg.delta,
            lambda: cfg.lambda,
            kernel: self.kernel.clone(),
            ts: self.ts.clone(),
            nl: self.nl.clone(),
            evolution: self.evolution,
        }
    }
}

impl RunConfig {
    /// Parses JSON text. Duplicate and unknown keys are errors.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies `key=value` pairs. Values are read as JSON, falling back to a
    /// bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, CliError> {
        let Value::Object(mut map) = serde_json::to_value(self).map_err(|e| CliError::Config(e.to_string()))? else {
            unreachable!("RunConfig serializes to an object");
        };
        let mut patch = Map::new();
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override '{o}' is not of the form key=value")))?;
            let key = key.trim();
            if patch.contains_key(key) {
                return Err(CliError::Config(format!("key '{key}' overridden twice")));
            }
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            patch.insert(key.to_string(), value);
        }
        for (k, v) in patch {
            map.insert(k, v);
        }
        serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Pretty JSON with keys in declaration order.
    pub fn canonical(&self) -> String {
        serde_json::to_string_pretty(self).expect("RunConfig is always serializable")
    }

    pub fn uses_nonlinearity(&self) -> bool {
        self.lambda != 0.0 || self.scenario == Some(Scenario::Constants)
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let scenario = self.scenario.ok_or_else(|| CliError::Config("no scenario given (config key or --scenario)".into()))?;
        if self.uses_nonlinearity() && !(self.q > 1.5) {
            return Err(RgError::Hypothesis(format!(
                "q = {} is not admissible with a nonlinearity: the existence theory requires q > 3/2",
                self.q
            ))
            .into());
        }
        let kernel = KernelSpec::by_name(&self.kernel)?;
        let spec = if self.c_lower.is_empty() {
            CSpec::PurePower
        } else {
            CSpec::PowerPlusLower { terms: self.c_lower.clone() }
        };
        let ts = TimeScale::from_spec(self.p, &spec)?;
        let space = SpaceConfig {
            q: self.q,
            omega_max: self.omega_max,
            n: self.n,
            interp: self.interp,
            dealias_pad: self.dealias_pad,
        };
        space.validate()?;
        let nl = Nonlinearity::new(self.alpha, self.coeffs.clone(), self.radius)?;
        let evolution = EvolutionConfig {
            nt: self.nt,
            quadrature: self.quadrature,
            picard_tol: self.picard_tol,
            picard_max: self.picard_max,
            init: self.picard_init,
        };
        evolution.validate()?;
        if !(self.scale > 1.0) {
            return Err(RgError::Config(format!("scale must exceed 1, got {}", self.scale)).into());
        }
        if self.corpus_size == 0 {
            return Err(RgError::Config("corpus_size must be >= 1".into()).into());
        }
        Ok(Resolved { scenario, kernel, ts, space, nl, evolution })
    }
}
