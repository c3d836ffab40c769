//! The acceptance matrix: eight property and oracle checks that together
//! exercise every layer of the crate.

use std::fmt;

use crate::assumptions::{check_a1, Verdict};
use crate::engine::{reduce_paths, Execution, McParams};
use crate::error::Result;
use crate::numerics::{sqrt_i, Complex64, QuadratureRule};
use crate::oracles::{cn_evolve, free_evolve, GridSolverConfig};
use crate::paths::{discrete_sup, supnorm_bound_rhs};
use crate::potentials::{doss_bound, PotentialSpec, PotentialTerm, TimeDependentPotential};
use crate::propagator::{
    propagate_grid, schrodinger_residual, semigroup_check, PathBuffers, PointsAcc, PropagatorRequest,
    DEFAULT_INNER_PATHS, DEFAULT_OUTER_PATHS,
};
use crate::states::{hermite_function, InitialState};
use crate::testfunctions::{complement_l2, TestFunction};
use crate::ufunctional::{analyticity_probe, eval_F, growth_probe, UFunctionalRequest, WindowFunction, DEFAULT_CONTOUR_NODES};

/// Sizing of the acceptance runs. `Full` uses the stated path counts;
/// `Smoke` divides them by ten for quick end-to-end exercising.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    #[default]
    Full,
    Smoke,
}

impl Scale {
    fn paths(self, n: u64) -> u64 {
        match self {
            Scale::Full => n,
            Scale::Smoke => (n / 10).max(100),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {} {tag} {}: {}", self.id, self.name, self.detail)
    }
}

pub const CRITERIA: [(u8, &str); 8] = [
    (1, "free particle"),
    (2, "quadratic eigenstate"),
    (3, "sextic polynomial"),
    (4, "inverse power"),
    (5, "sup-norm bound"),
    (6, "U-functional axioms"),
    (7, "reproducibility and scaling"),
    (8, "Hermite layer"),
];

/// Runs one criterion; errors count as failures.
pub fn run_criterion(id: u8, scale: Scale) -> CriterionResult {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map_or("unknown", |c| c.1);
    let outcome = match id {
        1 => free_particle(scale),
        2 => quadratic_eigenstate(scale),
        3 => sextic(scale),
        4 => inverse_power(scale),
        5 => supnorm(scale),
        6 => ufunctional_axioms(scale),
        7 => reproducibility(scale),
        8 => hermite_layer(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult { id, name, passed, detail }
}

pub fn run_all(scale: Scale) -> Vec<CriterionResult> {
    CRITERIA.iter().map(|c| run_criterion(c.0, scale)).collect()
}

type Outcome = Result<(bool, String)>;

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn free_particle(scale: Scale) -> Outcome {
    let xs: Vec<f64> = (0..9).map(|k| -3.0 + 0.75 * k as f64).collect();
    let state = InitialState::hermite(0);
    let mut max_z = 0.0f64;
    let mut max_se = 0.0f64;
    for len in [0.25, 1.0] {
        let req = PropagatorRequest::new(
            TimeDependentPotential::default(),
            state.clone(),
            0.0,
            len,
            real(0.0),
            McParams::new(scale.paths(100_000), 1000, 11),
        );
        let wf = propagate_grid(&req, &xs)?;
        for (x, est) in xs.iter().zip(&wf.estimates) {
            let exact = free_evolve(&state, len, *x)?;
            max_z = max_z.max(est.z_score(exact));
            max_se = max_se.max(est.stderr_re.max(est.stderr_im));
        }
    }
    Ok((max_z <= 3.0 && max_se <= 0.01, format!("max z-score {max_z:.3}, max stderr {max_se:.2e}")))
}

fn quadratic_eigenstate(scale: Scale) -> Outcome {
    let t = 0.5;
    let base = PotentialSpec::quadratic(0.0, 0.0, 0.5);
    let potential = TimeDependentPotential::time_independent(base);
    let state = InitialState::hermite(0);
    let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let req = PropagatorRequest::new(
        potential.clone(),
        state.clone(),
        0.0,
        t,
        real(0.0),
        McParams::new(scale.paths(200_000), 500, 12),
    )
    .with_horizon(t);
    let wf = propagate_grid(&req, &xs)?;
    let grid = cn_evolve(
        &GridSolverConfig::new(8.0, 0.01, 1e-3)?,
        &potential,
        |x| state.eval(real(x)).unwrap_or_default(),
        0.0,
        t,
    )?;
    let phase = Complex64::from_polar(1.0, -0.5 * t);
    let mut ok = true;
    let mut worst_phase = 0.0f64;
    let mut worst_cn = 0.0f64;
    for (x, est) in xs.iter().zip(&wf.estimates) {
        let f0 = state.eval(real(*x))?;
        let rel_se = est.combined_stderr() / f0.norm();
        let dev = (est.mean / f0 - phase).norm();
        let cn = grid.value_at(*x)?;
        let cn_dev = (est.mean - cn).norm() / f0.norm();
        worst_phase = worst_phase.max(dev / rel_se);
        worst_cn = worst_cn.max(cn_dev / rel_se);
        ok &= dev < 3.0 * rel_se && cn_dev < 3.0 * rel_se;
    }
    Ok((
        ok,
        format!("max deviation from e^(-it/2) {worst_phase:.3} rel-stderr, from Crank-Nicolson {worst_cn:.3} rel-stderr"),
    ))
}

fn sextic(scale: Scale) -> Outcome {
    let horizon = 0.5;
    let base = PotentialSpec::new(vec![PotentialTerm::sextic(1.0)])?;
    let potential = TimeDependentPotential::time_independent(base.clone());
    let mut ok = true;
    let mut notes = Vec::new();
    for m in [0, 2] {
        let state = InitialState::hermite(m);
        for x in [0.0, 1.0] {
            let a1 = check_a1(real(x), &base, &state, horizon, 0.9, McParams::new(scale.paths(100_000), 200, 31))?;
            let req = PropagatorRequest::new(
                potential.clone(),
                state.clone(),
                0.0,
                horizon,
                real(x),
                McParams::new(scale.paths(20_000), 100, 32),
            )
            .with_horizon(horizon);
            let sg = semigroup_check(&req, 0.25, scale.paths(DEFAULT_OUTER_PATHS), DEFAULT_INNER_PATHS)?;
            let h = 0.02;
            let res = schrodinger_residual(&req, h, h)?;
            let res_ok = res.passes(1.0, h, h);
            ok &= a1.verdict == Verdict::Pass && sg.z_score <= 3.0 && res_ok;
            notes.push(format!(
                "f{m} x={x}: A1 {:?} ({:.3} <= {:.3e}), semigroup z {:.2}, residual {:.2e}/{:.2e}",
                a1.verdict,
                a1.estimate.mean.re,
                a1.bound_i.unwrap_or(f64::NAN),
                sg.z_score,
                res.residual.norm() / res.scale,
                5.0 * res.stderr / res.scale + 2.0 * h * h,
            ));
        }
    }
    Ok((ok, notes.join("; ")))
}

fn inverse_power(scale: Scale) -> Outcome {
    let horizon = 0.5;
    let term = PotentialTerm::InversePowerAbs { a: real(1.0), b: 0.0, n: 1 };
    let base = PotentialSpec::new(vec![term.clone()])?;
    let potential = TimeDependentPotential::time_independent(base.clone());
    let state = InitialState::hermite(0);
    let mut ok = true;
    let mut notes = Vec::new();
    for x in [1.5, 3.0] {
        let z = real(x);
        let a1 = check_a1(z, &base, &state, horizon, 0.2 / horizon, McParams::new(scale.paths(20_000), 200, 41))?;

        // the uniform bound on 10⁴ points of sampled scaled paths
        let bound = doss_bound(&term, x)?;
        let mut buffers = PathBuffers::default();
        let mut worst = 0.0f64;
        for p in 0..100 {
            let path = buffers.draw(42, p, 100, horizon / 100.0);
            for b in &path[1..] {
                let v = base.eval(z + sqrt_i() * b)?;
                worst = worst.max(v.norm() / bound);
            }
        }

        let req = PropagatorRequest::new(
            potential.clone(),
            state.clone(),
            0.0,
            horizon,
            z,
            McParams::new(scale.paths(20_000), 100, 43),
        )
        .with_horizon(horizon);
        let sg = semigroup_check(&req, 0.25, scale.paths(DEFAULT_OUTER_PATHS), DEFAULT_INNER_PATHS)?;
        ok &= a1.verdict == Verdict::Pass && worst <= 1.0 && sg.z_score <= 3.0;
        notes.push(format!(
            "x={x}: A1 {:?} ({:.3} <= {:.3e}), max |V|/bound {worst:.3}, semigroup z {:.2}",
            a1.verdict,
            a1.estimate.mean.re,
            a1.bound_i.unwrap_or(f64::NAN),
            sg.z_score
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn supnorm_k(j: usize, u: f64) -> f64 {
    match j {
        0 => 1.0,
        1 => u,
        2 => u * u,
        _ => (0.05 * u * u).exp(),
    }
}

fn supnorm(scale: Scale) -> Outcome {
    let quad = QuadratureRule::gauss_legendre(200, 0.0, 1.0)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for horizon in [0.25, 1.0] {
        let n_steps = 1000;
        let mc = McParams::new(scale.paths(100_000), n_steps, 51);
        let out = reduce_paths(
            mc.n_paths,
            mc.chunk_size,
            mc.execution,
            || PointsAcc::new(4),
            |p, acc| {
                let mut buffers = std::mem::take(&mut acc.buffers);
                let sup = discrete_sup(buffers.draw(mc.seed, p, n_steps, horizon / n_steps as f64));
                for j in 0..4 {
                    acc.record(j, Ok((real(supnorm_k(j, sup)), 1.0)));
                }
                acc.buffers = buffers;
            },
        );
        let (est, _) = out.finish(mc.seed)?;
        for (j, e) in est.iter().enumerate() {
            let bound = supnorm_bound_rhs(|u| supnorm_k(j, u), horizon, &quad, None)?;
            let below = e.mean.re <= bound.value + 3.0 * e.stderr_re;
            let exact = j != 0 || (bound.value - 2.0).abs() < 1e-12;
            ok &= below && exact;
            notes.push(format!("T={horizon} k{j}: {:.4} <= {:.4}", e.mean.re, bound.value));
        }
    }
    Ok((ok, notes.join(", ")))
}

fn ufunctional_axioms(scale: Scale) -> Outcome {
    let g = TestFunction::unit_bump();
    let h = TestFunction::gaussian(1.0, 0.25, 1.0);
    let ws: Vec<Complex64> = [0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
        .iter()
        .flat_map(|&r| [real(r), Complex64::new(0.0, r)])
        .collect();
    let mut ok = true;
    let mut notes = Vec::new();
    let bases = [
        ("free", PotentialSpec::zero()),
        ("sextic", PotentialSpec::new(vec![PotentialTerm::sextic(1.0)])?),
    ];
    for (label, base) in bases {
        let req = UFunctionalRequest::new(
            WindowFunction::delta(0.3),
            g.clone(),
            base.clone(),
            InitialState::hermite(0),
            0.0,
            0.5,
            McParams::new(scale.paths(20_000), 100, 61),
        );
        for radius in [0.5, 2.0] {
            let a = analyticity_probe(&req, &h, radius, DEFAULT_CONTOUR_NODES)?;
            ok &= a.passes;
            notes.push(format!("{label} r={radius}: ratio {:.2e} < {:.2e}", a.ratio, a.tolerance));
        }
        let growth = growth_probe(&req, &ws)?;
        let growth_ok = growth.k.is_finite() && growth.d.is_finite() && growth.violations == 0;
        ok &= growth_ok;
        notes.push(format!("{label} growth K={:.3e} D={:.3e} violations {}", growth.k, growth.d, growth.violations));

        // at g = 0 the functional is the propagator value with unit prefactors
        let zero = req.with_g(TestFunction::zero());
        let prefactor = complement_l2(&TestFunction::zero(), 0.0, 0.5)?;
        let f = eval_F(&zero)?;
        let psi = crate::propagator::propagate(&PropagatorRequest::new(
            TimeDependentPotential::time_independent(base),
            InitialState::hermite(0),
            0.0,
            0.5,
            real(0.3),
            zero.mc,
        ))?;
        let gap = (f.mean - psi.mean).norm() / psi.mean.norm().max(f64::MIN_POSITIVE);
        let reduction = prefactor.value == real(0.0) && gap < 1e-13;
        ok &= reduction;
        notes.push(format!("{label} g=0 relative gap {gap:.1e}"));
    }
    Ok((ok, notes.join("; ")))
}

fn free_request(n_paths: u64, seed: u64) -> PropagatorRequest {
    PropagatorRequest::new(
        TimeDependentPotential::default(),
        InitialState::hermite(0),
        0.0,
        0.5,
        real(0.0),
        McParams::new(n_paths, 100, seed),
    )
}

#[cfg(feature = "parallel")]
fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn with_workers<T: Send>(_workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(f())
}

fn reproducibility(scale: Scale) -> Outcome {
    let xs = [-1.0, 0.0, 0.7];
    let req = free_request(scale.paths(20_000), 71);
    let one = with_workers(1, || propagate_grid(&req, &xs))??;
    let four = with_workers(4, || propagate_grid(&req, &xs))??;
    let seq = propagate_grid(
        &PropagatorRequest {
            mc: req.mc.with_execution(Execution::Sequential),
            ..req.clone()
        },
        &xs,
    )?;
    let identical = one.estimates == four.estimates && one.estimates == seq.estimates;

    let ladder: Vec<u64> = [2_500u64, 5_000, 10_000, 20_000, 40_000].iter().map(|&n| scale.paths(n * 4) / 4).collect();
    let points: Vec<(f64, f64)> = ladder
        .iter()
        .map(|&n| {
            let e = crate::propagator::propagate(&free_request(n, 72))?;
            Ok(((n as f64).ln(), e.combined_stderr().ln()))
        })
        .collect::<Result<_>>()?;
    let exponent = -fit_slope(&points);
    Ok((
        identical && (0.4..=0.6).contains(&exponent),
        format!("bit-identical across 1/4 workers and sequential: {identical}; stderr exponent {exponent:.3}"),
    ))
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `H_m` from the explicit sum `m!·Σ_k (-1)^k (2x)^{m-2k} / (k!(m-2k)!)`.
fn hermite_explicit(m: u32, x: f64) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    (0..=m / 2)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * fact(m) * (2.0 * x).powi((m - 2 * k) as i32) / (fact(k) * fact(m - 2 * k))
        })
        .sum()
}

fn hermite_layer() -> Outcome {
    let quad = QuadratureRule::gauss_legendre(400, -14.0, 14.0)?;
    let mut orth = 0.0f64;
    for j in 0..=6 {
        for k in 0..=6 {
            let v = quad.integrate_real(|x| {
                let a = hermite_function(j, real(x)).map(|f| f[0].re).unwrap_or(f64::NAN);
                let b = hermite_function(k, real(x)).map(|f| f[0].re).unwrap_or(f64::NAN);
                a * b
            })?;
            let target = if j == k { 1.0 } else { 0.0 };
            orth = orth.max((v - target).abs());
        }
    }
    let mut explicit = 0.0f64;
    let mut eigen = 0.0f64;
    for m in 0..=6u32 {
        let norm = 1.0 / (2f64.powi(m as i32) * (1..=m).map(f64::from).product::<f64>() * std::f64::consts::PI.sqrt()).sqrt();
        for k in -40..=40 {
            let x = 0.1 * k as f64;
            let [f, _, f2] = hermite_function(m, real(x))?;
            let reference = norm * hermite_explicit(m, x) * (-0.5 * x * x).exp();
            explicit = explicit.max((f.re - reference).abs());
            let lhs = -0.5 * f2 + 0.5 * x * x * f;
            eigen = eigen.max((lhs - (m as f64 + 0.5) * f).norm());
        }
    }
    Ok((
        orth < 1e-8 && explicit < 1e-10 && eigen < 1e-8,
        format!("orthonormality {orth:.1e}, explicit-sum gap {explicit:.1e}, eigenrelation {eigen:.1e}"),
    ))
}
