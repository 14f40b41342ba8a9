//! Scenario runners. Each one fills a [`Report`]; the caller writes the
//! manifest whether or not the run succeeded.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgflow::diagnostics::{
    contraction_corpus, direct_solve, empirical_contraction_constant, empirical_threshold, fit_rate,
    monomial_gaussian, reference_orbit_sup, rescaled_error, theory_ledger, LedgerInputs,
};
use rgflow::io::{save_spectra, write_json, write_linear_reports, write_profile_comparison};
use rgflow::kernel::{default_scan, validate_kernel};
use rgflow::linear::{dilation_exponent, linear_orbit, measure_contraction};
use rgflow::rg::{classify, run_flow};
use rgflow::space::{bq_norm, make_gp, make_second_derivative_profile};
use rgflow::{RgError, SampledFunction, SpaceConfig};
use serde::Serialize;
use serde_json::Value;

use crate::config::{Resolved, RunConfig, Scenario};
use crate::CliError;

/// Results, their definitions and the files written next to the manifest.
pub struct Report {
    dir: PathBuf,
    results: BTreeMap<String, Value>,
    schema: BTreeMap<String, String>,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
pub struct Manifest {
    pub scenario: String,
    /// `ok`, `partial` (some artifacts missing) or `failed`.
    pub status: String,
    pub error: Option<String>,
    pub exit_code: i32,
    pub config: Value,
    pub results: BTreeMap<String, Value>,
    /// Definition of every key in `results`, nested keys as `parent[].field`.
    pub schema: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), results: BTreeMap::new(), schema: BTreeMap::new(), artifacts: Vec::new() }
    }

    fn put<T: Serialize>(&mut self, key: &str, value: T, definition: &str) {
        self.results.insert(key.to_string(), serde_json::to_value(value).expect("report values serialize"));
        self.schema.insert(key.to_string(), definition.to_string());
    }

    fn define(&mut self, key: &str, definition: &str) {
        self.schema.insert(key.to_string(), definition.to_string());
    }

    fn file(&mut self, name: &str, definition: &str) -> Result<BufWriter<File>, CliError> {
        self.artifacts.push(name.to_string());
        self.schema.insert(format!("file:{name}"), definition.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn spectra(&mut self, name: &str, f: &SampledFunction, definition: &str) -> Result<(), CliError> {
        self.artifacts.push(name.to_string());
        self.schema.insert(format!("file:{name}"), definition.to_string());
        save_spectra(f, &self.dir.join(name))?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T, definition: &str) -> Result<(), CliError> {
        self.artifacts.push(name.to_string());
        self.schema.insert(format!("file:{name}"), definition.to_string());
        write_json(value, &self.dir.join(name))?;
        Ok(())
    }

    pub fn into_manifest(self, cfg: &RunConfig, outcome: &Result<(), CliError>) -> Manifest {
        let (status, error, exit_code) = match outcome {
            Ok(()) => ("ok", None, 0),
            Err(e) if self.artifacts.is_empty() && self.results.is_empty() => ("failed", Some(e.to_string()), e.exit_code()),
            Err(e) => ("partial", Some(e.to_string()), e.exit_code()),
        };
        Manifest {
            scenario: cfg.scenario.map(|s| s.name().to_string()).unwrap_or_default(),
            status: status.into(),
            error,
            exit_code,
            config: serde_json::to_value(cfg).expect("config serializes"),
            results: self.results,
            schema: self.schema,
            artifacts: self.artifacts,
        }
    }
}

pub fn run(cfg: &RunConfig, res: &Resolved, report: &mut Report) -> Result<(), CliError> {
    match res.scenario {
        Scenario::ValidateKernel => validate(cfg, res, report),
        Scenario::RunLinear => run_linear(cfg, res, report),
        Scenario::RunRg => run_rg(cfg, res, report),
        Scenario::RunDirect => run_direct(cfg, res, report),
        Scenario::Compare => compare(cfg, res, report),
        Scenario::Constants => constants(cfg, res, report),
    }
}

fn initial_data(cfg: &RunConfig, res: &Resolved) -> SampledFunction {
    let gp = make_gp(&res.kernel, res.ts.p(), res.space);
    let bump = make_second_derivative_profile(&res.kernel, res.space);
    gp.scale(cfg.amplitude).axpy(cfg.perturbation, &bump).with_tag("f0")
}

/// Random real-valued data with vanishing mass and first moment: sums of
/// three `c ω^k e^{-bω²}`, `k ∈ [2, 5]`, `b ∈ [0.25, 2)`.
pub fn random_corpus(space: SpaceConfig, seed: u64, size: usize) -> Vec<SampledFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|m| {
            let mut f = SampledFunction::zeros(space);
            for _ in 0..3 {
                let k: i32 = rng.random_range(2..=5);
                let b: f64 = rng.random_range(0.25..2.0);
                let w: f64 = rng.random_range(-1.0..1.0);
                // Even powers need a real coefficient and odd powers an
                // imaginary one for the profile to be real in x.
                let c = if k % 2 == 0 { Complex64::new(w, 0.0) } else { Complex64::new(0.0, w) };
                f = f.axpy(1.0, &monomial_gaussian(space, k, b, c));
            }
            f.with_tag(format!("random[{seed}:{m}]"))
        })
        .collect()
}

fn validate(cfg: &RunConfig, res: &Resolved, report: &mut Report) -> Result<(), CliError> {
    let grid = res.space.omegas();
    let v = validate_kernel(&res.kernel, cfg.q, &grid, 1e-10);
    report.put("passed", v.passed, "all kernel checks passed");
    report.put("mass_residual", v.mass_residual, "|ĝ(0) - 1|");
    report.put("max_multiplicativity_residual", v.max_multiplicativity_residual, "max over grid and time pairs of |Ĝ(t) - Ĝ(t-s)Ĝ(s)|");
    report.put("tail_ratio", v.tail_ratio, "weighted profile in the outer 10% band relative to its sup, dimensionless");
    report.json("kernel_validation.json", &v, "full kernel validation record")?;
    if !v.passed {
        return Err(RgError::Hypothesis(format!("kernel '{}' failed validation", res.kernel.name)).into());
    }
    Ok(())
}

fn run_linear(cfg: &RunConfig, res: &Resolved, report: &mut Report) -> Result<(), CliError> {
    res.ts.require_admissible_scale(cfg.scale)?;
    let beta = dilation_exponent(&res.kernel, &res.ts);
    let f0 = initial_data(cfg, res);
    let a = f0.moments().prefactor;
    let gp = make_gp(&res.kernel, res.ts.p(), res.space);
    let orbit = linear_orbit(&f0, cfg.n_max, cfg.scale, &res.kernel, &res.ts)?;
    let mut out = report.file("orbit.csv", "columns n, t = L^n, norm_f = ‖f_n‖, distance = ‖f_n - A G_p‖ (B_q norm)")?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["n", "t", "norm_f", "distance"]).map_err(RgError::from)?;
    let mut series = Vec::new();
    for (n, f) in orbit.iter().enumerate() {
        let t = cfg.scale.powi(n as i32);
        let dist = bq_norm(&f.axpy(-a, &gp))?;
        w.serialize((n, t, bq_norm(f)?, dist)).map_err(RgError::from)?;
        series.push((t, dist));
    }
    w.flush()?;
    drop(w);
    report.put("beta", beta, "dilation exponent (p+1)/d");
    report.put("prefactor", a, "A = -i f̂0′(0), conserved by the linear flow");
    let tail: Vec<(f64, f64)> = series.into_iter().skip(1).filter(|(_, e)| *e > 0.0).collect();
    match fit_rate(&tail) {
        Ok(fit) => report.put("distance_slope", fit.slope, "fitted exponent of ‖f_n - A G_p‖ against t = L^n"),
        Err(e) => log::warn!("no rate fit: {e}"),
    }

    let mut corpus = contraction_corpus(res.space);
    corpus.extend(random_corpus(res.space, cfg.seed, cfg.corpus_size));
    let rows = corpus
        .iter()
        .map(|g| measure_contraction(g, 0, cfg.scale, &res.kernel, &res.ts))
        .collect::<Result<Vec<_>, _>>()?;
    let c = rows.iter().map(|r| r.constant(beta)).fold(0.0, f64::max);
    write_linear_reports(&rows, report.file("contraction.csv", "one row per corpus member: n, L, input_norm, output_norm, contraction_ratio, interp_error")?)?;
    report.put("contraction_constant", c, "max over corpus of contraction_ratio · L^β, dimensionless");
    report.put("corpus_size", rows.len(), "fixed monomial-Gaussian corpus plus seeded random members");
    Ok(())
}

fn run_rg(cfg: &RunConfig, res: &Resolved, report: &mut Report) -> Result<(), CliError> {
    let rg = res.rg(cfg);
    let class = classify(&res.nl, res.ts.p(), res.kernel.d);
    report.put("classification", class, "class of the nonlinearity with α_c and d_F");
    report.put("extension", res.ts.is_extension(), "true when p = 0, outside the proven range p > 0");
    let f0 = initial_data(cfg, res);
    let flow = run_flow(&f0, &rg)?;
    report.put("a_limit", flow.a_limit, "A at the last completed step");
    report.put("a_limit_abs", flow.a_limit.abs(), "|A_limit|");
    report.put("tail", flow.tail, "geometric extrapolation of the remaining ΔA (ratio, tail_sum, extrapolated)");
    report.put("steps_completed", flow.records.len() - 1, "RG steps completed");
    report.put("records", &flow.records, "per-step orbit records");
    for (k, d) in [
        ("n", "step index"),
        ("lambda_n", "coupling L^{-n d_F/d} λ"),
        ("a_n", "prefactor A_n"),
        ("delta_a", "A_{n+1} - A_n"),
        ("norm_f", "‖f_n‖ (B_q)"),
        ("norm_g", "‖g_n‖ = ‖f_n - A_n R_{L^n} G_p‖ (B_q)"),
        ("picard_iters", "Picard iterations of the step leaving n"),
        ("picard_residual", "final sup_t ‖u^{k+1} - u^k‖"),
        ("max_lipschitz", "largest successive-difference ratio of the Picard iterates"),
        ("ball_excess", "max(0, ‖u - u_f‖ - ‖f‖) over the step"),
        ("interp_error", "interpolation error estimate of the dilation"),
        ("rescaled_error", "‖f_n - A_limit G_p‖ (B_q)"),
        ("decomposition_residual", "‖f_n - A_n R G_p - g_n‖"),
    ] {
        report.define(&format!("records[].{k}"), d);
    }
    let deltas: Vec<(f64, f64)> =
        flow.delta_a().iter().enumerate().map(|(n, d)| (cfg.scale.powi(n as i32), d.abs())).filter(|(_, d)| *d > 0.0).collect();
    if let Ok(fit) = fit_rate(&deltas) {
        report.put("delta_a_ratio", cfg.scale.powf(fit.slope), "fitted per-step ratio of |ΔA_n|");
        report.put("delta_a_ratio_theory", rg.coupling_ratio(), "L^{-d_F/d}");
    }
    let mut w = csv::Writer::from_writer(report.file("rates.csv", "columns n, t = L^n, abs_delta_a, norm_g, rescaled_error")?);
    w.write_record(["n", "t", "abs_delta_a", "norm_g", "rescaled_error"]).map_err(RgError::from)?;
    for r in &flow.records {
        w.serialize((r.n, cfg.scale.powi(r.n as i32), r.delta_a.map(f64::abs), r.norm_g, r.rescaled_error)).map_err(RgError::from)?;
    }
    w.flush()?;
    drop(w);
    let last = flow.orbit.last().expect("orbit holds f0");
    let target = make_gp(&res.kernel, res.ts.p(), res.space).scale(flow.a_limit);
    write_profile_comparison(last, &target, report.file("profile.csv", "columns ω, Re/Im of f_n and of A_limit·Ĝ_p at the last step")?)?;
    report.spectra("final_state.csv", last, "spectra of the last orbit state")?;
    match flow.failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn horizon(cfg: &RunConfig) -> f64 {
    cfg.horizon.unwrap_or(cfg.scale * cfg.scale)
}

fn run_direct(cfg: &RunConfig, res: &Resolved, report: &mut Report) -> Result<(), CliError> {
    let t = horizon(cfg);
    let beta = dilation_exponent(&res.kernel, &res.ts);
    let f0 = initial_data(cfg, res);
    let u = direct_solve(&f0, cfg.lambda, &res.nl, &res.kernel, &res.ts, t, &res.evolution)?;
    let a = u.moments().prefactor;
    let gp = make_gp(&res.kernel, res.ts.p(), res.space);
    report.put("horizon", t, "end time T");
    report.put("prefactor", a, "A(T) = -i û_T′(0)");
    report.put("rescaled_error", rescaled_error(&u, t, a, &gp, beta)?, "‖T^{2β} u_T(T^β ·) - A(T) G_p‖ (B_q)");
    report.spectra("u_T.csv", &u, "spectra of u(·, T)")?;
    let (rescaled, _) = rgflow::linear::rg_dilate(&u, t, beta)?;
    write_profile_comparison(&rescaled, &gp.scale(a), report.file("profile.csv", "columns ω, Re/Im of the rescaled û_T and of A·Ĝ_p")?)?;
    Ok(())
}

fn compare(cfg: &RunConfig, res: &Resolved, report: &mut Report) -> Result<(), CliError> {
    if cfg.n_max > 3 {
        log::warn!("compare with n_max = {} runs a direct solve to L^{}; expect a long run", cfg.n_max, cfg.n_max);
    }
    let rg = res.rg(cfg);
    let beta = dilation_exponent(&res.kernel, &res.ts);
    let f0 = initial_data(cfg, res);
    let flow = run_flow(&f0, &rg)?;
    if let Some(e) = flow.failure {
        return Err(e.into());
    }
    let t = cfg.scale.powi(cfg.n_max as i32);
    let u = direct_solve(&f0, cfg.lambda, &res.nl, &res.kernel, &res.ts, t, &res.evolution)?;
    let (direct, _) = rgflow::linear::rg_dilate(&u, t, beta)?;
    let composite = flow.orbit.last().expect("orbit holds f0");
    let diff = bq_norm(&(composite - &direct))?;
    report.put("steps", cfg.n_max, "RG steps composed");
    report.put("horizon", t, "T = L^n_max");
    report.put("error", diff, "‖f_n - rescaled direct solution‖ (B_q)");
    report.put("relative_error", diff / bq_norm(&direct)?, "error / ‖rescaled direct solution‖");
    write_profile_comparison(composite, &direct, report.file("profile.csv", "columns ω, Re/Im of the RG composite and of the rescaled direct solution")?)?;
    Ok(())
}

fn constants(cfg: &RunConfig, res: &Resolved, report: &mut Report) -> Result<(), CliError> {
    res.ts.require_admissible_scale(cfg.scale)?;
    let mut corpus = contraction_corpus(res.space);
    corpus.extend(random_corpus(res.space, cfg.seed, cfg.corpus_size));
    let c = empirical_contraction_constant(&corpus, cfg.scale, &res.kernel, &res.ts)?;
    let scan = default_scan();
    let ledger = theory_ledger(&LedgerInputs {
        kernel: &res.kernel,
        ts: &res.ts,
        nl: &res.nl,
        q: cfg.q,
        scale: cfg.scale,
        delta: cfg.delta,
        contraction_constant: c,
        scan: &scan,
        n_uniform: 12,
    })?;
    let k_emp = reference_orbit_sup(&res.kernel, &res.ts, cfg.scale, 12, res.space)?;
    let lambda = if cfg.lambda == 0.0 { 1.0 } else { cfg.lambda };
    let threshold = empirical_threshold(&res.kernel, &res.ts, &res.nl, lambda, cfg.scale, res.space, &res.evolution, 8)?;
    report.json("constants.json", &ledger, "closed-form constants of the existence and convergence bounds")?;
    report.put("theory", &ledger, "closed-form constants; field names follow the bound they enter");
    for (k, d) in [
        ("k", "K_j = sup|ĝ⁽ʲ⁾|"),
        ("c", "C_j = sup (1+|ω|^q) ω² |ĝ⁽ʲ⁾|"),
        ("c_q", "sup-norm constant 1/(q sin(π/q))"),
        ("c_conv", "convolution constant (2^{q+1}+3)·2(π/q)/sin(π/q)"),
        ("rho", "analyticity ball radius; null when entire"),
        ("rho_eval", "argument used for S_1, S_2"),
        ("s1", "S_1(ρ)"),
        ("s2", "S_2(ρ)"),
        ("c_bar_l", "1 + K0 + 2K1 s(L)^{1/d} + K2 s(L)^{2/d}"),
        ("c_t_d", "∫_0^{L-1} (s(L) - s(L-τ))^{-1/d} dτ"),
        ("b_l_d", "local existence constant B_{L,d}"),
        ("epsilon", "local existence smallness on [1, L]"),
        ("epsilon_n", "per-step smallness, n = 0..12"),
        ("sigma", "uniform smallness over n <= 12"),
        ("epsilon_bar", "smallness of the convergence theorem"),
        ("l_delta", "scale threshold L_δ using the measured contraction constant"),
    ] {
        report.define(&format!("theory.{k}"), d);
    }
    report.put("contraction_constant", c, "max over corpus of contraction_ratio · L^β");
    report.put("reference_orbit_sup", k_emp, "max_{n<=12} ‖R_{L^n} G_p‖, empirical counterpart of K̃");
    report.put("empirical_threshold", threshold, "bisection on a in f = a G_p for convergence of the step-0 Picard solve");
    report.put("coupling_used", lambda, "λ used for the empirical threshold (1 when the config has λ = 0)");
    Ok(())
}
