//! Monte Carlo evaluation of `U(t,t0)f(z)`:
//!
//! `U(t,t0)f(z) = E[exp(-i∫_0^{t-t0} V_ġ(t-s, z+√i·B_s) ds)·f(z+√i·B_{t-t0})]`.

use crate::engine::{reduce_paths, Diagnostics, McParams, Mergeable};
use crate::error::{Error, Result};
use crate::numerics::{sqrt_i, ComplexAccumulator, Complex64, McEstimate};
use crate::paths::{brownian_from_normals, derive_seed, fill_normals};
use crate::potentials::{PotentialSpec, TimeDependentPotential};
use crate::states::InitialState;
use crate::testfunctions::TestFunction;

/// Largest real part accepted in `exp(-i·J)`.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorRequest {
    pub potential: TimeDependentPotential,
    pub state: InitialState,
    pub t0: f64,
    pub t: f64,
    pub z: Complex64,
    pub mc: McParams,
    /// Time horizon `T`; defaults to `t`.
    pub horizon: Option<f64>,
}

impl PropagatorRequest {
    pub fn new(
        potential: TimeDependentPotential,
        state: InitialState,
        t0: f64,
        t: f64,
        z: Complex64,
        mc: McParams,
    ) -> Self {
        Self {
            potential,
            state,
            t0,
            t,
            z,
            mc,
            horizon: None,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn at(&self, z: Complex64) -> Self {
        Self { z, ..self.clone() }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(self.t)
    }

    pub fn validate(&self) -> Result<()> {
        let horizon = self.horizon();
        if !(self.t0 >= 0.0 && self.t0 <= self.t && self.t <= horizon) {
            return Err(Error::Precondition(format!(
                "need 0 <= t0 <= t <= T, got t0 = {}, t = {}, T = {horizon}",
                self.t0, self.t
            )));
        }
        self.mc.validate()?;
        self.state.validate()?;
        self.potential.base.validate(Some(horizon))?;
        check_point(&self.potential.base, self.z)
    }
}

fn check_point(v: &PotentialSpec, z: Complex64) -> Result<()> {
    if z.im == 0.0 {
        v.check_real_point(z.re)?;
    }
    Ok(())
}

/// Scratch space for one path.
#[derive(Debug, Clone, Default)]
pub(crate) struct PathBuffers {
    pub normals: Vec<f64>,
    pub values: Vec<f64>,
}

impl PathBuffers {
    /// Draws path `index` of stream `seed` with `n_steps` steps of size `dt`.
    pub fn draw(&mut self, seed: u64, index: u64, n_steps: usize, dt: f64) -> &[f64] {
        self.normals.resize(n_steps, 0.0);
        fill_normals(seed, index, &mut self.normals);
        brownian_from_normals(&self.normals, dt, &mut self.values);
        &self.values
    }

    /// Rebuilds the path from the current normals with a new step size.
    pub fn rescale(&mut self, dt: f64) -> &[f64] {
        brownian_from_normals(&self.normals, dt, &mut self.values);
        &self.values
    }
}

/// The deterministic pieces of one evolution `t0 → t` on a fixed grid.
#[derive(Debug, Clone)]
pub(crate) struct Evolution<'a> {
    pub base: &'a PotentialSpec,
    pub state: &'a InitialState,
    pub n_steps: usize,
    pub dt: f64,
    /// `ġ` at the source time of every grid node, empty for `g ≡ 0`.
    pub gdot: Vec<Complex64>,
}

impl<'a> Evolution<'a> {
    pub fn new(potential: &'a TimeDependentPotential, state: &'a InitialState, t0: f64, t: f64, n_steps: usize) -> Self {
        let n_steps = n_steps.max(1);
        let dt = (t - t0) / n_steps as f64;
        let gdot = source_nodes(potential, &potential.source, t0, t, n_steps);
        Self {
            base: &potential.base,
            state,
            n_steps,
            dt,
            gdot,
        }
    }

    /// `∫ V₀(z+√i·B_s) ds` by the trapezoid rule.
    pub fn base_action(&self, z: Complex64, path: &[f64]) -> Result<Complex64> {
        if self.base.is_zero() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let c = sqrt_i();
        trapezoid(path, self.dt, |k, b| {
            self.base.eval(z + c * b).map_err(|e| with_path_time(e, k as f64 * self.dt))
        })
    }

    /// `∫ ġ(τ(s))·(z+√i·B_s) ds` for source values on the grid nodes.
    pub fn source_action(&self, gdot: &[Complex64], z: Complex64, path: &[f64]) -> Complex64 {
        if gdot.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let c = sqrt_i();
        trapezoid(path, self.dt, |k, b| Ok(gdot[k] * (z + c * b))).expect("source action is infallible")
    }

    pub fn action(&self, z: Complex64, path: &[f64]) -> Result<Complex64> {
        Ok(self.base_action(z, path)? + self.source_action(&self.gdot, z, path))
    }

    /// `exp(-i·J)·f(z+√i·B_τ)` together with `|exp(-i·J)|`.
    pub fn sample(&self, z: Complex64, path: &[f64]) -> Result<(Complex64, f64)> {
        let w = weight(self.action(z, path)?, z)?;
        let end = z + sqrt_i() * path[path.len() - 1];
        Ok((w * self.state.eval(end)?, w.norm()))
    }
}

/// `ġ` at the source time of each of the `n_steps + 1` nodes.
pub(crate) fn source_nodes(
    potential: &TimeDependentPotential,
    g: &TestFunction,
    t0: f64,
    t: f64,
    n_steps: usize,
) -> Vec<Complex64> {
    if g.is_zero() {
        return Vec::new();
    }
    let dt = (t - t0) / n_steps as f64;
    (0..=n_steps)
        .map(|k| g.eval_all(potential.source_time(t0, t, k as f64 * dt))[1])
        .collect()
}

pub(crate) fn trapezoid<F>(path: &[f64], dt: f64, mut f: F) -> Result<Complex64>
where
    F: FnMut(usize, f64) -> Result<Complex64>,
{
    let n = path.len() - 1;
    if n == 0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut sum = (f(0, path[0])? + f(n, path[n])?) * 0.5;
    for (k, &b) in path.iter().enumerate().take(n).skip(1) {
        sum += f(k, b)?;
    }
    Ok(sum * dt)
}

/// `exp(-i·J)`, rejecting exponents that would overflow.
pub(crate) fn weight(action: Complex64, z: Complex64) -> Result<Complex64> {
    let e = -Complex64::i() * action;
    if !(e.re <= MAX_EXPONENT) {
        return Err(Error::AmplitudeOverflow { z });
    }
    Ok(e.exp())
}

fn with_path_time(e: Error, s: f64) -> Error {
    match e {
        Error::DomainViolation { z, .. } => Error::DomainViolation { z, s: Some(s) },
        other => other,
    }
}

/// Per-chunk state of a multi-point estimator.
#[derive(Debug, Clone)]
pub(crate) struct PointsAcc {
    pub acc: Vec<ComplexAccumulator>,
    pub diagnostics: Diagnostics,
    pub fatal: Option<Error>,
    pub buffers: PathBuffers,
}

impl PointsAcc {
    pub fn new(n: usize) -> Self {
        Self {
            acc: vec![ComplexAccumulator::new(); n],
            diagnostics: Diagnostics::default(),
            fatal: None,
            buffers: PathBuffers::default(),
        }
    }

    /// Records a per-path outcome; recoverable failures only drop the sample.
    pub fn record(&mut self, i: usize, outcome: Result<(Complex64, f64)>) {
        self.diagnostics.paths_attempted += 1;
        match outcome {
            Ok((v, modulus)) => {
                self.acc[i].push(v);
                self.diagnostics.record_weight(modulus);
            }
            Err(e) => self.record_failure(e),
        }
    }

    pub fn record_failure(&mut self, e: Error) {
        match e {
            Error::DomainViolation { .. } => self.diagnostics.domain_violations += 1,
            Error::AmplitudeOverflow { .. } => self.diagnostics.overflows += 1,
            other => {
                if self.fatal.is_none() {
                    self.fatal = Some(other);
                }
            }
        }
    }

    pub fn finish(self, seed: u64) -> Result<(Vec<McEstimate>, Diagnostics)> {
        if let Some(e) = self.fatal {
            return Err(e);
        }
        self.diagnostics.check_threshold()?;
        let estimates = self
            .acc
            .iter()
            .map(|a| {
                if a.count() < 2 {
                    Err(Error::InsufficientSamples(a.count()))
                } else {
                    Ok(a.estimate(seed))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((estimates, self.diagnostics))
    }
}

impl Mergeable for PointsAcc {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.acc.iter_mut().zip(&other.acc) {
            a.merge(b);
        }
        self.diagnostics.merge(&other.diagnostics);
        if self.fatal.is_none() {
            self.fatal = other.fatal;
        }
    }
}

/// `ψ(t, ·)` on a set of points, all sharing one path stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    pub t: f64,
    pub points: Vec<Complex64>,
    pub estimates: Vec<McEstimate>,
    pub diagnostics: Diagnostics,
}

/// Estimates `U(t,t0)f(z)` at the request's point.
pub fn propagate(req: &PropagatorRequest) -> Result<McEstimate> {
    Ok(propagate_points(req, &[req.z])?.estimates[0])
}

/// Estimates `U(t,t0)f` at every point with common random numbers: path `k`
/// is the same Brownian path for all points.
pub fn propagate_points(req: &PropagatorRequest, points: &[Complex64]) -> Result<Wavefunction> {
    req.validate()?;
    for &z in points {
        check_point(&req.potential.base, z)?;
    }
    let mc = req.mc;
    if req.t == req.t0 {
        let estimates = points
            .iter()
            .map(|&z| Ok(McEstimate::exact(req.state.eval(z)?, mc.n_paths, mc.seed)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Wavefunction {
            t: req.t,
            points: points.to_vec(),
            estimates,
            diagnostics: Diagnostics::default(),
        });
    }
    let evo = Evolution::new(&req.potential, &req.state, req.t0, req.t, mc.n_steps);
    let out = reduce_paths(
        mc.n_paths,
        mc.chunk_size,
        mc.execution,
        || PointsAcc::new(points.len()),
        |p, acc| {
            let mut buffers = std::mem::take(&mut acc.buffers);
            let path = buffers.draw(mc.seed, p, evo.n_steps, evo.dt);
            for (i, &z) in points.iter().enumerate() {
                acc.record(i, evo.sample(z, path));
            }
            acc.buffers = buffers;
        },
    );
    let (estimates, diagnostics) = out.finish(mc.seed)?;
    Ok(Wavefunction {
        t: req.t,
        points: points.to_vec(),
        estimates,
        diagnostics,
    })
}

/// Estimates `U(t,t0)f` on real grid points.
pub fn propagate_grid(req: &PropagatorRequest, xs: &[f64]) -> Result<Wavefunction> {
    let points: Vec<Complex64> = xs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    propagate_points(req, &points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupReport {
    pub lhs: McEstimate,
    pub rhs: McEstimate,
    pub z_score: f64,
    pub diagnostics: Diagnostics,
}

pub const DEFAULT_OUTER_PATHS: u64 = 2000;
pub const DEFAULT_INNER_PATHS: u64 = 500;

/// Compares `U(t,t0)f(z)` against the nested estimate of `U(t,r)(U(r,t0)f)(z)`.
///
/// The outer stage runs `n_outer` paths over `[r, t]` drawn from the same
/// stream as the direct estimate; each outer endpoint `y` seeds `n_inner`
/// paths over `[t0, r]` on the child stream `derive_seed(seed, k)`. Steps per
/// stage follow the request's step size.
pub fn semigroup_check(req: &PropagatorRequest, r: f64, n_outer: u64, n_inner: u64) -> Result<SemigroupReport> {
    req.validate()?;
    if !(req.t0 <= r && r <= req.t) {
        return Err(Error::Precondition(format!(
            "need t0 <= r <= t, got t0 = {}, r = {r}, t = {}",
            req.t0, req.t
        )));
    }
    if n_outer < 2 || n_inner < 1 {
        return Err(Error::Config("need n_outer >= 2 and n_inner >= 1".into()));
    }
    let lhs = propagate(req)?;
    if r == req.t {
        // the outer stage has zero length
        return Ok(SemigroupReport {
            lhs,
            rhs: lhs,
            z_score: 0.0,
            diagnostics: Diagnostics::default(),
        });
    }
    let mc = req.mc;
    let dt = (req.t - req.t0) / mc.n_steps as f64;
    let steps = |len: f64| ((len / dt).round() as usize).max(1);
    let outer = Evolution::new(&req.potential, &req.state, r, req.t, steps(req.t - r));
    let inner = Evolution::new(&req.potential, &req.state, req.t0, r, steps(r - req.t0));
    let inner_len = r - req.t0;
    let c = sqrt_i();

    let out = reduce_paths(
        n_outer,
        mc.chunk_size,
        mc.execution,
        || PointsAcc::new(1),
        |k, acc| {
            let mut buffers = std::mem::take(&mut acc.buffers);
            let path = buffers.draw(mc.seed, k, outer.n_steps, outer.dt);
            let y = req.z + c * path[path.len() - 1];
            let outcome = outer.action(req.z, path).and_then(|j| weight(j, req.z)).and_then(|w| {
                if inner_len == 0.0 {
                    return Ok((w * req.state.eval(y)?, w.norm()));
                }
                let child = derive_seed(mc.seed, k);
                let mut inner_buf = PathBuffers::default();
                let mut sum = Complex64::new(0.0, 0.0);
                for q in 0..n_inner {
                    let p = inner_buf.draw(child, q, inner.n_steps, inner.dt);
                    sum += inner.sample(y, p)?.0;
                }
                Ok((w * sum / n_inner as f64, w.norm()))
            });
            acc.record(0, outcome);
            acc.buffers = buffers;
        },
    );
    let (est, diagnostics) = out.finish(mc.seed)?;
    let rhs = est[0];
    let z_score = crate::numerics::z_score(lhs.mean - rhs.mean, lhs.combined_stderr().hypot(rhs.combined_stderr()));
    Ok(SemigroupReport {
        lhs,
        rhs,
        z_score,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `i∂_tψ + ½∂_x²ψ - V_ġψ` by central differences, averaged over paths.
    pub residual: Complex64,
    /// Standard error of the residual (combined real/imaginary).
    pub stderr: f64,
    /// `max |ψ|` over the stencil.
    pub scale: f64,
    pub stencil: [McEstimate; 5],
    pub diagnostics: Diagnostics,
}

impl ResidualReport {
    /// `|residual|/scale < 5·stderr/scale + c·(h_t² + h_x²)`.
    pub fn passes(&self, c: f64, h_t: f64, h_x: f64) -> bool {
        self.residual.norm() / self.scale < 5.0 * self.stderr / self.scale + c * (h_t * h_t + h_x * h_x)
    }
}

/// Schrödinger residual at `(t, z)` on the five-point stencil
/// `(t±h_t, z)`, `(t, z±h_x)`, `(t, z)`.
///
/// All five values come from the same normals per path: the time-shifted
/// evaluations use the same `n_steps` with a rescaled step size, so the
/// residual is computed pathwise and its standard error is that of the
/// pathwise combination.
pub fn schrodinger_residual(req: &PropagatorRequest, h_t: f64, h_x: f64) -> Result<ResidualReport> {
    if !(h_t > 0.0 && h_x > 0.0) {
        return Err(Error::Config("stencil steps must be positive".into()));
    }
    if !(req.t0 < req.t - h_t) {
        return Err(Error::Precondition(format!(
            "need t0 < t - h_t, got t0 = {}, t = {}, h_t = {h_t}",
            req.t0, req.t
        )));
    }
    let horizon = req.horizon().max(req.t + h_t);
    let shifted = PropagatorRequest {
        horizon: Some(horizon),
        ..req.clone()
    };
    shifted.validate()?;
    let z = req.z;
    let hx = Complex64::new(h_x, 0.0);
    for p in [z - hx, z + hx] {
        check_point(&req.potential.base, p)?;
    }
    let mc = req.mc;
    let pot = &req.potential;
    let evo_minus = Evolution::new(pot, &req.state, req.t0, req.t - h_t, mc.n_steps);
    let evo = Evolution::new(pot, &req.state, req.t0, req.t, mc.n_steps);
    let evo_plus = Evolution::new(pot, &req.state, req.t0, req.t + h_t, mc.n_steps);
    let v_tz = pot.eval(req.t, z)?;
    let i = Complex64::i();

    // slot 0..5: stencil values, slot 5: pathwise residual
    let out = reduce_paths(
        mc.n_paths,
        mc.chunk_size,
        mc.execution,
        || PointsAcc::new(6),
        |p, acc| {
            let mut buffers = std::mem::take(&mut acc.buffers);
            buffers.draw(mc.seed, p, mc.n_steps, evo.dt);
            let mut values = [Complex64::new(0.0, 0.0); 5];
            let mut modulus = 0.0f64;
            let mut run = || -> Result<()> {
                let path = buffers.rescale(evo_minus.dt);
                values[0] = evo_minus.sample(z, path)?.0;
                let path = buffers.rescale(evo_plus.dt);
                values[1] = evo_plus.sample(z, path)?.0;
                let path = buffers.rescale(evo.dt);
                for (slot, point) in [(2, z - hx), (3, z), (4, z + hx)] {
                    let (v, m) = evo.sample(point, path)?;
                    values[slot] = v;
                    modulus = modulus.max(m);
                }
                Ok(())
            };
            match run() {
                Ok(()) => {
                    acc.diagnostics.paths_attempted += 1;
                    acc.diagnostics.record_weight(modulus);
                    for (slot, v) in values.iter().enumerate() {
                        acc.acc[slot].push(*v);
                    }
                    let res = i * (values[1] - values[0]) / (2.0 * h_t)
                        + 0.5 * (values[4] - 2.0 * values[3] + values[2]) / (h_x * h_x)
                        - v_tz * values[3];
                    acc.acc[5].push(res);
                }
                Err(e) => {
                    acc.diagnostics.paths_attempted += 1;
                    acc.record_failure(e);
                }
            }
            acc.buffers = buffers;
        },
    );
    let (est, diagnostics) = out.finish(mc.seed)?;
    let stencil = [est[0], est[1], est[2], est[3], est[4]];
    let scale = stencil.iter().map(|e| e.mean.norm()).fold(0.0, f64::max);
    Ok(ResidualReport {
        residual: est[5].mean,
        stderr: est[5].combined_stderr(),
        scale,
        stencil,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Execution;
    use crate::potentials::PotentialTerm;

    fn free(t0: f64, t: f64, x: f64, n: u64) -> PropagatorRequest {
        PropagatorRequest::new(
            TimeDependentPotential::default(),
            InitialState::hermite(0),
            t0,
            t,
            Complex64::new(x, 0.0),
            McParams::new(n, 10, 7),
        )
    }

    #[test]
    fn zero_length_is_exact() {
        let est = propagate(&free(0.3, 0.3, 0.7, 10)).unwrap();
        let f = InitialState::hermite(0).eval(Complex64::new(0.7, 0.0)).unwrap();
        assert_eq!(est.mean, f);
        assert_eq!(est.combined_stderr(), 0.0);
    }

    #[test]
    fn free_ground_state_at_unit_time() {
        let est = propagate(&free(0.0, 1.0, 0.0, 20_000)).unwrap();
        let expected = std::f64::consts::PI.powf(-0.25) / Complex64::new(1.0, 1.0).sqrt();
        assert!(est.z_score(expected) < 4.0, "{est:?}");
    }

    #[test]
    fn linear_in_the_initial_state() {
        let a = Complex64::new(0.3, -1.2);
        let b = Complex64::new(2.0, 0.5);
        let v = TimeDependentPotential::new(
            PotentialSpec::new(vec![PotentialTerm::sextic(1.0)]).unwrap(),
            TestFunction::unit_bump(),
        );
        let f1 = InitialState::hermite(0);
        let f2 = InitialState::hermite(3);
        let combo = f1.scaled(a).plus(&f2.scaled(b));
        let mk = |s: InitialState| PropagatorRequest::new(v.clone(), s, 0.0, 0.5, Complex64::new(0.4, 0.0), McParams::new(500, 20, 3));
        let e1 = propagate(&mk(f1)).unwrap().mean;
        let e2 = propagate(&mk(f2)).unwrap().mean;
        let ec = propagate(&mk(combo)).unwrap().mean;
        assert!((ec - (a * e1 + b * e2)).norm() < 1e-12 * ec.norm().max(1.0));
    }

    #[test]
    fn execution_mode_does_not_change_bits() {
        let req = free(0.0, 0.5, 0.2, 3000);
        let par = propagate(&req).unwrap();
        let seq = propagate(&PropagatorRequest {
            mc: req.mc.with_execution(Execution::Sequential),
            ..req.clone()
        })
        .unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn grid_points_share_paths() {
        let req = free(0.0, 0.5, 0.0, 200);
        let grid = propagate_grid(&req, &[-1.0, 0.0, 1.0]).unwrap();
        let single = propagate(&req.at(Complex64::new(1.0, 0.0))).unwrap();
        assert_eq!(grid.estimates[2], single);
    }

    #[test]
    fn semigroup_endpoints_are_structural() {
        let req = free(0.0, 0.5, 0.3, 400);
        let start = semigroup_check(&req, 0.0, 400, 10).unwrap();
        assert_eq!(start.lhs.mean, start.rhs.mean);
        assert_eq!(start.z_score, 0.0);
        let end = semigroup_check(&req, 0.5, 400, 10).unwrap();
        assert_eq!(end.z_score, 0.0);
        assert!(semigroup_check(&req, 0.6, 400, 10).is_err());
    }

    #[test]
    fn residual_rejects_degenerate_stencil() {
        let req = free(0.5, 0.5, 0.0, 100);
        assert!(matches!(schrodinger_residual(&req, 0.02, 0.02), Err(Error::Precondition(_))));
    }

    #[test]
    fn singular_evaluation_point_is_rejected() {
        let v = PotentialSpec::new(vec![PotentialTerm::InversePowerAbs { a: Complex64::new(1.0, 0.0), b: 0.0, n: 1 }]).unwrap();
        let req = PropagatorRequest::new(
            TimeDependentPotential::time_independent(v),
            InitialState::hermite(0),
            0.0,
            0.5,
            Complex64::new(0.0, 0.0),
            McParams::new(100, 10, 1),
        );
        assert!(matches!(propagate(&req), Err(Error::SingularPoint { .. })));
    }
}
