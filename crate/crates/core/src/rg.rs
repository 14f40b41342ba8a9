//! The nonlinear RG iteration `f_n ↦ f_{n+1}` and the prefactor recursion.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, RgError};
use crate::kernel::KernelSpec;
use crate::linear::{decompose_against, dilation_exponent, rg_dilate, rg_linear_step};
use crate::nonlinear::{nu_of, picard_solve, EvolutionConfig, Nonlinearity, StepContext};
use crate::space::{bq_norm, make_gp, SampledFunction};
use crate::timescale::TimeScale;

/// Mass drift above which a step is rejected as inconsistent.
pub const MASS_DRIFT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Class {
    Relevant,
    Marginal,
    Irrelevant,
}

impl std::fmt::Display for Class {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Class::Relevant => "relevant",
            Class::Marginal => "marginal",
            Class::Irrelevant => "irrelevant",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub class: Class,
    pub alpha_c: f64,
    pub d_f: f64,
}

/// Sign of the scaling dimension `d_F`.
pub fn classify(nl: &Nonlinearity, p: f64, d: f64) -> Classification {
    let d_f = nl.d_f(p, d);
    let class = if d_f.abs() <= 1e-12 {
        Class::Marginal
    } else if d_f < 0.0 {
        Class::Relevant
    } else {
        Class::Irrelevant
    };
    Classification { class, alpha_c: Nonlinearity::alpha_c(p, d), d_f }
}

/// `λ_n = L^{-n d_F/d} λ`.
pub fn lambda_law(lambda: f64, n: u32, scale: f64, nl: &Nonlinearity, p: f64, d: f64) -> f64 {
    scale.powf(-(n as f64) * nl.d_f(p, d) / d) * lambda
}

/// `a_j ↦ a_j L^{2n(p+1)(alpha-j)/d}`.
pub fn scaled_coeffs(nl: &Nonlinearity, n: u32, scale: f64, p: f64, d: f64) -> Nonlinearity {
    let alpha = nl.alpha as f64;
    nl.rescaled(|j| {
        if j == nl.alpha {
            1.0
        } else {
            scale.powf(2.0 * n as f64 * (p + 1.0) * (alpha - j as f64) / d)
        }
    })
}

/// Everything fixed along an orbit.
#[derive(Debug, Clone)]
pub struct RGConfig {
    pub scale: f64,
    pub n_max: u32,
    pub delta: f64,
    pub lambda: f64,
    pub kernel: KernelSpec,
    pub ts: TimeScale,
    pub nl: Nonlinearity,
    pub evolution: EvolutionConfig,
}

impl RGConfig {
    /// Checks `L > L1`, `δ ∈ (0,1)` and, for nonlinear runs, `d_F > 0` and
    /// `(1-δ)(p+1) < d_F`.
    pub fn validate(&self) -> Result<()> {
        self.ts.require_admissible_scale(self.scale)?;
        self.evolution.validate()?;
        self.nl.validate()?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(RgError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.lambda != 0.0 {
            let p = self.ts.p();
            let c = classify(&self.nl, p, self.kernel.d);
            if c.class != Class::Irrelevant {
                return Err(RgError::NotIrrelevant { class: c.class.to_string(), d_f: c.d_f });
            }
            if (1.0 - self.delta) * (p + 1.0) >= c.d_f {
                return Err(RgError::Hypothesis(format!(
                    "(1 - delta)(p + 1) = {} must be below d_F = {}",
                    (1.0 - self.delta) * (p + 1.0),
                    c.d_f
                )));
            }
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        dilation_exponent(&self.kernel, &self.ts)
    }

    pub fn lambda_n(&self, n: u32) -> f64 {
        lambda_law(self.lambda, n, self.scale, &self.nl, self.ts.p(), self.kernel.d)
    }

    pub fn nl_n(&self, n: u32) -> Nonlinearity {
        scaled_coeffs(&self.nl, n, self.scale, self.ts.p(), self.kernel.d)
    }

    /// Per-step decay `L^{-d_F/d}` of the coupling.
    pub fn coupling_ratio(&self) -> f64 {
        self.scale.powf(-self.nl.d_f(self.ts.p(), self.kernel.d) / self.kernel.d)
    }
}

/// One row of the orbit manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub n: u32,
    pub lambda_n: f64,
    pub a_n: f64,
    /// `A_{n+1} - A_n`; absent on the last row.
    pub delta_a: Option<f64>,
    pub norm_f: f64,
    pub norm_g: f64,
    pub picard_iters: Option<usize>,
    pub picard_residual: Option<f64>,
    pub max_lipschitz: Option<f64>,
    pub ball_excess: Option<f64>,
    pub interp_error: Option<f64>,
    /// `‖f_n - A_limit G_p‖`, filled once the orbit is complete.
    pub rescaled_error: Option<f64>,
    /// `‖f_n - A_n R_{L^n} G_p - g_n‖`.
    pub decomposition_residual: f64,
}

/// State at step `n`.
#[derive(Debug, Clone)]
pub struct RGState {
    pub n: u32,
    pub f: SampledFunction,
    pub a: f64,
    pub g: SampledFunction,
    pub lambda_n: f64,
    /// Linear RG image of `G_p` after `n` steps.
    pub reference: SampledFunction,
    pub history: Vec<StepRecord>,
}

impl RGState {
    /// Step-0 state: `f_0 = A G_p + g_0`.
    pub fn initial(f0: &SampledFunction, cfg: &RGConfig) -> Result<Self> {
        let norm = bq_norm(f0)?;
        let mass = f0.moments().mass.norm();
        if mass > MASS_DRIFT_TOL * norm.max(f64::MIN_POSITIVE) {
            return Err(RgError::NotZeroMass { mass, threshold: MASS_DRIFT_TOL * norm });
        }
        let reference = make_gp(&cfg.kernel, cfg.ts.p(), *f0.cfg());
        let (a, g) = decompose_against(f0, &reference)?;
        let mut f = f0.clone();
        let c = f.cfg().center();
        f.spectra_mut()[0][c] = Complex64::new(0.0, 0.0);
        Ok(Self { n: 0, f, a, g, lambda_n: cfg.lambda, reference, history: Vec::new() })
    }

    /// The manifest row for this state, without step statistics.
    pub fn record(&self) -> Result<StepRecord> {
        let resid = &(&self.f - &self.reference.scale(self.a)) - &self.g;
        Ok(StepRecord {
            n: self.n,
            lambda_n: self.lambda_n,
            a_n: self.a,
            delta_a: None,
            norm_f: bq_norm(&self.f)?,
            norm_g: bq_norm(&self.g)?,
            picard_iters: None,
            picard_residual: None,
            max_lipschitz: None,
            ball_excess: None,
            interp_error: None,
            rescaled_error: None,
            decomposition_residual: bq_norm(&resid)?,
        })
    }
}

/// Zeroes the center node of `F0` (and of `F1` when `first` is set) after
/// checking that it is at the level of rounding.
fn clean_center(mut f: SampledFunction, first: bool, what: &str) -> Result<SampledFunction> {
    let norm = bq_norm(&f)?;
    let c = f.cfg().center();
    let m = f.moments();
    let tol = MASS_DRIFT_TOL * norm.max(1e-300);
    if m.mass.norm() > tol || (first && m.first.norm() > tol) {
        return Err(RgError::Internal(format!(
            "{what}: center moments drifted (mass {:.3e}, first {:.3e})",
            m.mass.norm(),
            m.first.norm()
        )));
    }
    let s = f.spectra_mut();
    s[0][c] = Complex64::new(0.0, 0.0);
    if first {
        s[1][c] = Complex64::new(0.0, 0.0);
    }
    Ok(f)
}

/// One nonlinear RG step.
pub fn rg_step(state: &RGState, cfg: &RGConfig) -> Result<RGState> {
    let n = state.n;
    let lambda_n = cfg.lambda_n(n);
    let nl_n = cfg.nl_n(n);
    let ctx = StepContext { kernel: &cfg.kernel, ts: &cfg.ts, n, scale: cfg.scale };
    let traj = picard_solve(&state.f, &nl_n, lambda_n, ctx, &cfg.evolution)?;
    let beta = cfg.beta();
    let (f_next, info) = rg_dilate(traj.last(), cfg.scale, beta)?;
    let f_next = clean_center(f_next, false, "f_{n+1}")?;

    let nu = nu_of(&traj)?;
    let nu_first = nu.moments().first;
    let delta_a = (-Complex64::i() * nu_first).re;
    let a_next = state.a + delta_a;

    let reference = rg_linear_step(&state.reference, n, cfg.scale, &cfg.kernel, &cfg.ts)?;
    let g_lin = rg_linear_step(&state.g, n, cfg.scale, &cfg.kernel, &cfg.ts)?;
    let (nu_dilated, _) = rg_dilate(nu, cfg.scale, beta)?;
    let g_next = (&g_lin + &nu_dilated).axpy(-delta_a, &reference);
    let g_next = clean_center(g_next, true, "g_{n+1}")?;

    let mut record = state.record()?;
    record.delta_a = Some(delta_a);
    record.picard_iters = Some(traj.picard_iters);
    record.picard_residual = Some(traj.final_residual);
    record.max_lipschitz = Some(traj.max_ratio());
    record.ball_excess = Some(traj.ball_excess);
    record.interp_error = Some(info.interp_error.max(info.tail_bound));
    let mut history = state.history.clone();
    history.push(record);

    Ok(RGState {
        n: n + 1,
        f: f_next,
        a: a_next,
        g: g_next,
        lambda_n: cfg.lambda_n(n + 1),
        reference,
        history,
    })
}

/// Geometric extrapolation of the remaining prefactor increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    /// Fitted ratio `|ΔA_{k+1}| / |ΔA_k|` from the last three increments.
    pub ratio: f64,
    /// `Σ_{k >= n_max} |ΔA_k|` under the geometric model.
    pub tail_sum: f64,
    /// `A_{n_max}` plus the signed geometric tail.
    pub extrapolated: f64,
}

/// Result of [`run_flow`].
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub records: Vec<StepRecord>,
    /// `f_0, …, f_{n_reached}`.
    pub orbit: Vec<SampledFunction>,
    pub final_state: RGState,
    /// `A` at the last completed step.
    pub a_limit: f64,
    pub tail: Option<TailEstimate>,
    /// Set when a step failed; the orbit then stops early.
    pub failure: Option<RgError>,
}

impl FlowResult {
    pub fn complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn delta_a(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.delta_a).collect()
    }
}

fn tail_estimate(a_last: f64, deltas: &[f64]) -> Option<TailEstimate> {
    if deltas.len() < 3 {
        return None;
    }
    let k = deltas.len();
    let (d1, d3) = (deltas[k - 3].abs(), deltas[k - 1].abs());
    if d1 == 0.0 {
        return (d3 == 0.0).then_some(TailEstimate { ratio: 0.0, tail_sum: 0.0, extrapolated: a_last });
    }
    let ratio = (d3 / d1).sqrt();
    if !(ratio < 1.0) {
        return None;
    }
    let factor = ratio / (1.0 - ratio);
    Some(TailEstimate { ratio, tail_sum: d3 * factor, extrapolated: a_last + deltas[k - 1] * factor })
}

/// Runs `n_max` RG steps from `f0`. A failing step stops the orbit; the
/// partial orbit is returned with the failure recorded. Errors in the
/// preconditions are returned directly.
pub fn run_flow(f0: &SampledFunction, cfg: &RGConfig) -> Result<FlowResult> {
    cfg.validate()?;
    let mut state = RGState::initial(f0, cfg)?;
    let mut orbit = vec![state.f.clone()];
    let mut failure = None;
    for step in 0..cfg.n_max {
        match rg_step(&state, cfg) {
            Ok(next) => {
                log::info!("rg step {} -> {}: A = {:.12}", step, step + 1, next.a);
                state = next;
                orbit.push(state.f.clone());
            }
            Err(e) => {
                log::error!("rg step {step} failed: {e}");
                failure = Some(e);
                break;
            }
        }
    }
    let mut records = state.history.clone();
    records.push(state.record()?);
    let a_limit = state.a;
    let deltas: Vec<f64> = records.iter().filter_map(|r| r.delta_a).collect();
    let tail = tail_estimate(a_limit, &deltas);
    let gp = make_gp(&cfg.kernel, cfg.ts.p(), *f0.cfg());
    for (rec, f) in records.iter_mut().zip(&orbit) {
        rec.rescaled_error = Some(bq_norm(&f.axpy(-a_limit, &gp))?);
    }
    Ok(FlowResult { records, orbit, final_state: state, a_limit, tail, failure })
}
