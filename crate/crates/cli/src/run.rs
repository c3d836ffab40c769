//! Validation, orchestration and persistence of a run.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use doss_core::assumptions::{check_a1, check_a2_derivatives, check_a2_double, epsilon_window, AssumptionReport, DoubleTimes, Verdict};
use doss_core::engine::{Diagnostics, McParams};
use doss_core::oracles::{cn_evolve, free_evolve, GridSolverConfig};
use doss_core::potentials::TimeDependentPotential;
use doss_core::propagator::{propagate, propagate_grid, schrodinger_residual, PropagatorRequest};
use doss_core::states::InitialState;
use doss_core::ufunctional::{analyticity_probe, eval_ray, growth_probe, UFunctionalRequest};
use doss_core::validation::{fit_slope, run_all};
use doss_core::McEstimate;

use crate::config::{Axis, Mode, RunConfig};

/// A configuration rejected before any sampling.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(e: impl fmt::Display) -> anyhow::Error {
    let msg = e.to_string();
    let msg = msg.strip_prefix("invalid configuration: ").unwrap_or(&msg);
    Invalid(msg.to_owned()).into()
}

/// Everything a mode needs, resolved and checked.
pub struct Plan {
    pub mode: Mode,
    pub config: RunConfig,
    potential: TimeDependentPotential,
    state: InitialState,
    times: (f64, f64, f64),
    xs: Vec<f64>,
    mc: McParams,
}

/// Resolves the configuration and checks every precondition of the
/// requested mode.
pub fn prepare(mode: Mode, config: RunConfig) -> anyhow::Result<Plan> {
    let mc = config.mc();
    mc.validate().map_err(invalid)?;
    let potential = config.potential().map_err(invalid)?;
    let state = config.state().map_err(invalid)?;
    let xs = config.grid().map_err(invalid)?;
    let times = if mode == Mode::Validate {
        config.times().unwrap_or((0.0, 0.0, 1.0))
    } else {
        config.times().map_err(invalid)?
    };
    let (t0, t, horizon) = times;
    potential.base.validate(Some(horizon)).map_err(invalid)?;
    if mode != Mode::Validate {
        for &x in &xs {
            potential.base.check_real_point(x).map_err(invalid)?;
        }
    }

    match mode {
        Mode::Propagate => {
            let o = config.oracles;
            if o.free && !(potential.base.is_zero() && potential.source.is_zero()) {
                return Err(invalid("the free oracle needs a zero potential and no source"));
            }
            if o.free && !(t > t0) {
                return Err(invalid("the free oracle needs t > t0"));
            }
        }
        Mode::Ufunctional => {
            config.window().map_err(invalid)?;
            let u = config.ufunctional.clone().unwrap_or_else(default_ufunctional);
            if u.radii.iter().any(|r| !(*r > 0.0)) || (!u.radii.is_empty() && u.contour_nodes < 16) {
                return Err(invalid("contour radii must be positive and contour_nodes >= 16"));
            }
            if !u.growth.is_empty() && (config.g().map_err(invalid)?.is_zero() || u.growth.len() < 3) {
                return Err(invalid("the growth fit needs a nonzero g and at least 3 samples"));
            }
        }
        Mode::CheckAssumptions => {
            let Some(a) = config.assumptions else {
                return Err(invalid("check-assumptions needs an [assumptions] section"));
            };
            let limit = epsilon_window(&potential.base, horizon);
            if !(a.epsilon > 0.0 && a.epsilon < limit) {
                return Err(invalid(format!("epsilon = {} outside the window (0, {limit}) for T = {horizon}", a.epsilon)));
            }
            if let Some(d) = a.double {
                if [d.u, d.v, d.r, d.l].iter().any(|s| !(0.0..=horizon).contains(s)) {
                    return Err(invalid("double-expectation times must lie in [0, T]"));
                }
            }
            if let Some(d) = a.derivatives {
                if !(d.epsilon_h > 0.0) {
                    return Err(invalid("epsilon_h must be positive"));
                }
            }
        }
        Mode::Convergence => {
            let Some(c) = &config.convergence else {
                return Err(invalid("convergence needs a [convergence] section"));
            };
            check_ladder(&c.values).map_err(invalid)?;
            if matches!(c.axis, Axis::NPaths | Axis::NSteps) && c.values.iter().any(|v| v.fract() != 0.0 || *v < 2.0) {
                return Err(invalid("path and step counts must be integers >= 2"));
            }
            if c.axis == Axis::HT && c.values.iter().any(|h| !(t0 < t - h)) {
                return Err(invalid("every h_t must satisfy t0 < t - h_t"));
            }
            if c.axis == Axis::HX {
                for h in &c.values {
                    for x in [xs[0] - h, xs[0] + h] {
                        potential.base.check_real_point(x).map_err(invalid)?;
                    }
                }
            }
        }
        Mode::Validate => {}
    }
    Ok(Plan {
        mode,
        config,
        potential,
        state,
        times,
        xs,
        mc,
    })
}

/// A doubling ladder: at least three rungs, each twice or each half the
/// previous one.
pub fn check_ladder(values: &[f64]) -> Result<(), String> {
    if values.len() < 3 {
        return Err(format!("a ladder needs at least 3 rungs, got {}", values.len()));
    }
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err("ladder values must be positive".into());
    }
    let ratio = values[1] / values[0];
    let doubling = |r: f64| (r - ratio).abs() < 1e-9 * ratio && ((r - 2.0).abs() < 1e-9 || (r - 0.5).abs() < 1e-9);
    if !values.windows(2).all(|w| doubling(w[1] / w[0])) {
        return Err("ladder values must double (or halve) at every rung".into());
    }
    Ok(())
}

fn default_ufunctional() -> crate::config::UFunctionalConfig {
    toml::from_str("").expect("all fields have defaults")
}

#[derive(Debug, Serialize)]
struct RunInfo {
    mode: Mode,
    engine_version: &'static str,
    config_hash: String,
    seed: u64,
    chunk_size: usize,
    workers: usize,
    wall_time_s: f64,
    passed: bool,
}

#[derive(Debug, Default, Serialize)]
struct DiagnosticsInfo {
    paths_attempted: u64,
    domain_violations: u64,
    overflows: u64,
    weight_modulus_max: f64,
    weight_modulus_mean: f64,
}

impl From<&Diagnostics> for DiagnosticsInfo {
    fn from(d: &Diagnostics) -> Self {
        Self {
            paths_attempted: d.paths_attempted,
            domain_violations: d.domain_violations,
            overflows: d.overflows,
            weight_modulus_max: d.weight_modulus_max,
            weight_modulus_mean: d.weight_modulus_mean(),
        }
    }
}

#[derive(Debug, Serialize)]
struct AssumptionInfo {
    quantity: String,
    x: f64,
    estimate: f64,
    stderr: f64,
    bound_i: Option<f64>,
    doubled: Option<f64>,
    epsilon: f64,
    verdict: String,
}

impl AssumptionInfo {
    fn new(x: f64, r: &AssumptionReport) -> Self {
        Self {
            quantity: format!("{:?}", r.quantity),
            x,
            estimate: r.estimate.mean.re,
            stderr: r.estimate.stderr_re,
            bound_i: r.bound_i,
            doubled: r.doubled.map(|d| d.mean.re),
            epsilon: r.epsilon,
            verdict: format!("{:?}", r.verdict),
        }
    }
}

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    value: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    run: RunInfo,
    diagnostics: DiagnosticsInfo,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    assumptions: Vec<AssumptionInfo>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    checks: Vec<Check>,
    config: &'a RunConfig,
}

/// Files produced by a mode, written only once the whole run succeeded.
#[derive(Default)]
struct Artifacts {
    files: Vec<(&'static str, String)>,
    diagnostics: Diagnostics,
    assumptions: Vec<AssumptionInfo>,
    checks: Vec<Check>,
}

impl Artifacts {
    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
            && self.assumptions.iter().all(|a| a.verdict != format!("{:?}", Verdict::Fail))
    }
}

/// Seventeen significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn config_hash(config: &RunConfig) -> anyhow::Result<String> {
    let text = toml::to_string(config).context("serializing config")?;
    Ok(Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs the plan and writes its artifacts under `out`. Returns whether every
/// check of the run passed.
pub fn execute(plan: &Plan, out: &Path, workers: usize) -> anyhow::Result<bool> {
    let start = Instant::now();
    let artifacts = match plan.mode {
        Mode::Propagate => run_propagate(plan)?,
        Mode::Ufunctional => run_ufunctional(plan)?,
        Mode::CheckAssumptions => run_assumptions(plan)?,
        Mode::Validate => run_validate(plan),
        Mode::Convergence => run_convergence(plan)?,
    };
    let passed = artifacts.passed();
    let manifest = Manifest {
        run: RunInfo {
            mode: plan.mode,
            engine_version: doss_core::VERSION,
            config_hash: config_hash(&plan.config)?,
            seed: plan.mc.seed,
            chunk_size: plan.mc.chunk_size,
            workers,
            wall_time_s: start.elapsed().as_secs_f64(),
            passed,
        },
        diagnostics: (&artifacts.diagnostics).into(),
        assumptions: artifacts.assumptions,
        checks: artifacts.checks,
        config: &plan.config,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, body) in &artifacts.files {
        fs::write(out.join(name), body).with_context(|| format!("writing {name}"))?;
    }
    let text = toml::to_string(&manifest).context("serializing manifest")?;
    fs::write(out.join("manifest.toml"), text).context("writing manifest.toml")?;
    Ok(passed)
}

fn request(plan: &Plan, mc: McParams) -> PropagatorRequest {
    let (t0, t, horizon) = plan.times;
    PropagatorRequest::new(plan.potential.clone(), plan.state.clone(), t0, t, Complex64::new(plan.xs[0], 0.0), mc)
        .with_horizon(horizon)
}

fn run_propagate(plan: &Plan) -> anyhow::Result<Artifacts> {
    let (t0, t, _) = plan.times;
    let wf = propagate_grid(&request(plan, plan.mc), &plan.xs)?;
    let mut table = String::from("t,x,re_psi,im_psi,stderr_re,stderr_im,n_paths\n");
    let mut abs = String::from("# x |psi|\n");
    let mut arg = String::from("# x arg(psi)\n");
    for (x, e) in plan.xs.iter().zip(&wf.estimates) {
        table += &format!(
            "{},{},{},{},{},{},{}\n",
            num(t),
            num(*x),
            num(e.mean.re),
            num(e.mean.im),
            num(e.stderr_re),
            num(e.stderr_im),
            e.n_paths
        );
        abs += &format!("{} {}\n", num(*x), num(e.mean.norm()));
        arg += &format!("{} {}\n", num(*x), num(e.mean.arg()));
    }
    let mut artifacts = Artifacts {
        files: vec![("results.csv", table), ("plot_abs.dat", abs), ("plot_arg.dat", arg)],
        diagnostics: wf.diagnostics,
        ..Default::default()
    };

    let oracles = plan.config.oracles;
    if oracles.free || oracles.crank_nicolson {
        let mut table = String::from("oracle,x,re,im,z_score\n");
        let mut compare = |name: &str, values: Vec<Complex64>| {
            let mut worst = 0.0f64;
            for ((x, e), v) in plan.xs.iter().zip(&wf.estimates).zip(values) {
                let z = e.z_score(v);
                worst = worst.max(z);
                table += &format!("{name},{},{},{},{}\n", num(*x), num(v.re), num(v.im), num(z));
            }
            artifacts.checks.push(Check {
                name: format!("{name} oracle max z-score"),
                value: worst,
                passed: worst <= 3.0,
            });
        };
        if oracles.free {
            let values = plan.xs.iter().map(|&x| free_evolve(&plan.state, t - t0, x)).collect::<Result<Vec<_>, _>>()?;
            compare("free", values);
        }
        if oracles.crank_nicolson {
            let reach = plan.xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let l = oracles.cn_half_width.unwrap_or((reach + 4.0).max(8.0));
            let grid = GridSolverConfig::new(l, oracles.cn_dx.unwrap_or(0.01), oracles.cn_dt.unwrap_or(1e-3))?;
            let state = &plan.state;
            let psi = cn_evolve(&grid, &plan.potential, |x| state.eval(Complex64::new(x, 0.0)).unwrap_or_default(), t0, t)?;
            let values = plan.xs.iter().map(|&x| psi.value_at(x)).collect::<Result<Vec<_>, _>>()?;
            compare("crank_nicolson", values);
        }
        artifacts.files.push(("oracle.csv", table));
    }
    Ok(artifacts)
}

fn ufunctional_request(plan: &Plan) -> anyhow::Result<UFunctionalRequest> {
    let (t0, t, horizon) = plan.times;
    let cfg = plan.config.ufunctional.clone().unwrap_or_else(default_ufunctional);
    let mut req = UFunctionalRequest::new(
        plan.config.window()?,
        plan.potential.source.clone(),
        plan.potential.base.clone(),
        plan.state.clone(),
        t0,
        t,
        plan.mc,
    );
    req.convention = plan.potential.convention;
    req.x_order = cfg.x_order;
    req.horizon = Some(horizon);
    Ok(req)
}

fn run_ufunctional(plan: &Plan) -> anyhow::Result<Artifacts> {
    let cfg = plan.config.ufunctional.clone().unwrap_or_else(default_ufunctional);
    let req = ufunctional_request(plan)?;
    let h = plan.config.h()?;
    let ws: Vec<Complex64> = cfg.ray.iter().map(|w| w.value()).collect();
    let ray = eval_ray(&req, &h, &ws, &[])?;
    let mut table = String::from("w_re,w_im,re_f,im_f,stderr_re,stderr_im,n_paths\n");
    for (w, e) in ws.iter().zip(&ray.estimates) {
        table += &format!(
            "{},{},{},{},{},{},{}\n",
            num(w.re),
            num(w.im),
            num(e.mean.re),
            num(e.mean.im),
            num(e.stderr_re),
            num(e.stderr_im),
            e.n_paths
        );
    }
    let mut diagnostics = ray.diagnostics;
    let mut checks = Vec::new();
    for &r in &cfg.radii {
        let a = analyticity_probe(&req, &h, r, cfg.contour_nodes)?;
        diagnostics.merge(&a.diagnostics);
        checks.push(Check {
            name: format!("contour ratio r={r} (tolerance {})", num(a.tolerance)),
            value: a.ratio,
            passed: a.passes,
        });
    }
    if !cfg.growth.is_empty() {
        let samples: Vec<Complex64> = cfg.growth.iter().map(|w| w.value()).collect();
        let g = growth_probe(&req, &samples)?;
        diagnostics.merge(&g.diagnostics);
        let finite = g.k.is_finite() && g.d.is_finite();
        checks.push(Check { name: "growth K".into(), value: g.k, passed: finite });
        checks.push(Check { name: "growth D".into(), value: g.d, passed: finite });
        checks.push(Check {
            name: "growth envelope violations".into(),
            value: g.violations as f64,
            passed: g.violations == 0,
        });
    }
    Ok(Artifacts {
        files: vec![("ufunctional.csv", table)],
        diagnostics,
        checks,
        ..Default::default()
    })
}

fn run_assumptions(plan: &Plan) -> anyhow::Result<Artifacts> {
    let a = plan.config.assumptions.expect("checked in prepare");
    let (t0, t, horizon) = plan.times;
    let mut reports = Vec::new();
    for &x in &plan.xs {
        let z = Complex64::new(x, 0.0);
        reports.push((x, check_a1(z, &plan.potential.base, &plan.state, horizon, a.epsilon, plan.mc)?));
        if let Some(d) = a.double {
            let times = DoubleTimes { u: d.u, v: d.v, r: d.r, l: d.l };
            let r = check_a2_double(z, &plan.potential, &plan.state, times, horizon, d.n_outer, d.n_inner, plan.mc)?;
            reports.push((x, r));
        }
        if let Some(d) = a.derivatives {
            let [v, l] = check_a2_derivatives(z, &plan.potential, &plan.state, t0, t, d.epsilon_h, d.n_outer, d.n_inner, plan.mc)?;
            reports.push((x, v));
            reports.push((x, l));
        }
    }
    let mut table = String::from("quantity,x,estimate,stderr,bound_i,epsilon,verdict\n");
    let mut diagnostics = Diagnostics::default();
    for (x, r) in &reports {
        diagnostics.merge(&r.diagnostics);
        table += &format!(
            "{:?},{},{},{},{},{},{:?}\n",
            r.quantity,
            num(*x),
            num(r.estimate.mean.re),
            num(r.estimate.stderr_re),
            r.bound_i.map(num).unwrap_or_default(),
            num(r.epsilon),
            r.verdict
        );
    }
    Ok(Artifacts {
        files: vec![("assumptions.csv", table)],
        diagnostics,
        assumptions: reports.iter().map(|(x, r)| AssumptionInfo::new(*x, r)).collect(),
        ..Default::default()
    })
}

fn run_validate(plan: &Plan) -> Artifacts {
    let results = run_all(plan.config.validate.scale());
    let mut summary = String::new();
    for r in &results {
        summary += &format!("{r}\n");
    }
    let passed = results.iter().filter(|r| r.passed).count();
    summary += &format!("{passed} of {} criteria passed\n", results.len());
    Artifacts {
        files: vec![("validation.txt", summary)],
        checks: results
            .iter()
            .map(|r| Check {
                name: format!("criterion {} {}", r.id, r.name),
                value: if r.passed { 1.0 } else { 0.0 },
                passed: r.passed,
            })
            .collect(),
        ..Default::default()
    }
}

/// Step used for the stencil direction that is not being varied.
const FIXED_STENCIL_STEP: f64 = 0.02;

fn run_convergence(plan: &Plan) -> anyhow::Result<Artifacts> {
    let c = plan.config.convergence.clone().expect("checked in prepare");
    let mut rungs: Vec<(f64, McEstimate)> = Vec::new();
    let mut diagnostics = Diagnostics::default();
    for &v in &c.values {
        let est = match c.axis {
            Axis::NPaths => propagate(&request(plan, plan.mc.with_paths(v as u64)))?,
            Axis::NSteps => propagate(&request(plan, plan.mc.with_steps(v as usize)))?,
            Axis::HT | Axis::HX => {
                let (h_t, h_x) = if c.axis == Axis::HT { (v, FIXED_STENCIL_STEP) } else { (FIXED_STENCIL_STEP, v) };
                let r = schrodinger_residual(&request(plan, plan.mc), h_t, h_x)?;
                diagnostics.merge(&r.diagnostics);
                McEstimate {
                    mean: r.residual,
                    stderr_re: r.stderr,
                    stderr_im: 0.0,
                    n_paths: r.stencil[0].n_paths,
                    seed: plan.mc.seed,
                }
            }
        };
        rungs.push((v, est));
    }
    let mut table = String::from("value,re,im,stderr,diff_re,diff_im,diff_abs\n");
    for (k, (v, e)) in rungs.iter().enumerate() {
        let diff = if k == 0 { None } else { Some(e.mean - rungs[k - 1].1.mean) };
        table += &format!(
            "{},{},{},{},{},{},{}\n",
            num(*v),
            num(e.mean.re),
            num(e.mean.im),
            num(e.combined_stderr()),
            diff.map(|d| num(d.re)).unwrap_or_default(),
            diff.map(|d| num(d.im)).unwrap_or_default(),
            diff.map(|d| num(d.norm())).unwrap_or_default(),
        );
    }
    let mut checks = Vec::new();
    if c.axis == Axis::NPaths {
        let points: Vec<(f64, f64)> = rungs.iter().map(|(v, e)| (v.ln(), e.combined_stderr().ln())).collect();
        let exponent = -fit_slope(&points);
        checks.push(Check {
            name: "stderr exponent in n_paths".into(),
            value: exponent,
            passed: (0.4..=0.6).contains(&exponent),
        });
    }
    Ok(Artifacts {
        files: vec![("convergence.csv", table)],
        diagnostics,
        checks,
        ..Default::default()
    })
}
