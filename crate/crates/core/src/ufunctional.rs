//! T-transform values `F(g)` of the Feynman integrand with a source term and
//! numerical probes of the U-functional properties (ray analyticity and
//! second-order growth).
//!
//! For a window `φ` and test function `g`,
//!
//! `F(g) = exp(-½∫_{[t0,t]ᶜ} g²) ∫ e^{-ig(t0)x} φ(x) E[e^{-iJ_g(x)} e^{ig(t)Z} f(Z)] dx`
//!
//! with `Z = x + √i·B_{t-t0}` and `J_g(x) = ∫_0^{t-t0} V_ġ(t-s, x+√i·B_s) ds`.
//! Along a ray `g + w·h` every factor is the exponential of a polynomial of
//! degree at most two in `w`, so one path yields the sample for every `w`.

use crate::engine::{reduce_paths, Diagnostics, McParams};
use crate::error::{Error, Result};
use crate::numerics::{sqrt_i, Complex64, McEstimate, QuadratureRule};
use crate::potentials::{PotentialSpec, SourceConvention, TimeDependentPotential};
use crate::propagator::{source_nodes, Evolution, PointsAcc};
use crate::states::InitialState;
use crate::testfunctions::{complement_inner, l2_norm_sq, TestFunction};

const MAX_EXPONENT: f64 = 700.0;

/// `p((x - center)/scale)` on `[lo, hi]`, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyPiece {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub scale: f64,
    /// Coefficients of `p` in increasing degree.
    pub coefficients: Vec<f64>,
}

impl PolyPiece {
    fn eval(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.scale;
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowFunction {
    /// Point evaluation at `x`.
    Delta { x: f64 },
    /// Bounded piecewise-polynomial window with compact support.
    Compact { pieces: Vec<PolyPiece> },
}

impl WindowFunction {
    pub fn delta(x: f64) -> Self {
        WindowFunction::Delta { x }
    }

    /// Indicator of `[a, b]`.
    pub fn indicator(a: f64, b: f64) -> Self {
        WindowFunction::Compact {
            pieces: vec![PolyPiece {
                lo: a,
                hi: b,
                center: 0.0,
                scale: 1.0,
                coefficients: vec![1.0],
            }],
        }
    }

    /// Unit-mass biweight `15/(16w)·(1 - u²)²`, `u = (x - c)/w`, on `[c-w, c+w]`.
    pub fn biweight(center: f64, half_width: f64) -> Self {
        let a = 15.0 / (16.0 * half_width);
        WindowFunction::Compact {
            pieces: vec![PolyPiece {
                lo: center - half_width,
                hi: center + half_width,
                center,
                scale: half_width,
                coefficients: vec![a, 0.0, -2.0 * a, 0.0, a],
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WindowFunction::Delta { x } if x.is_finite() => Ok(()),
            WindowFunction::Delta { x } => Err(Error::Config(format!("non-finite delta point {x}"))),
            WindowFunction::Compact { pieces } => {
                if pieces.is_empty() {
                    return Err(Error::Config("compact window has no pieces".into()));
                }
                for p in pieces {
                    let finite = [p.lo, p.hi, p.center, p.scale].iter().all(|v| v.is_finite())
                        && p.coefficients.iter().all(|c| c.is_finite());
                    if !finite || !(p.lo < p.hi) || p.scale == 0.0 {
                        return Err(Error::Config(format!("invalid window piece {p:?}")));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            WindowFunction::Delta { .. } => 0.0,
            WindowFunction::Compact { pieces } => pieces
                .iter()
                .filter(|p| p.lo <= x && x <= p.hi)
                .map(|p| p.eval(x))
                .sum(),
        }
    }

    /// Quadrature nodes `x_j` with weights `ω_j φ(x_j)`; a single unit node for
    /// a delta window.
    pub fn nodes(&self, order: usize) -> Result<Vec<(f64, f64)>> {
        match self {
            WindowFunction::Delta { x } => Ok(vec![(*x, 1.0)]),
            WindowFunction::Compact { pieces } => {
                let mut out = Vec::new();
                for p in pieces {
                    let rule = QuadratureRule::gauss_legendre(order, p.lo, p.hi)?;
                    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
                        out.push((x, w * p.eval(x)));
                    }
                }
                Ok(out)
            }
        }
    }
}

pub const DEFAULT_WINDOW_ORDER: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct UFunctionalRequest {
    pub window: WindowFunction,
    /// The T-transform argument; `ġ` is also the source of the potential.
    pub g: TestFunction,
    pub base: PotentialSpec,
    pub convention: SourceConvention,
    pub state: InitialState,
    pub t0: f64,
    pub t: f64,
    pub mc: McParams,
    /// Gauss–Legendre order per window piece.
    pub x_order: usize,
    pub horizon: Option<f64>,
}

impl UFunctionalRequest {
    pub fn new(
        window: WindowFunction,
        g: TestFunction,
        base: PotentialSpec,
        state: InitialState,
        t0: f64,
        t: f64,
        mc: McParams,
    ) -> Self {
        Self {
            window,
            g,
            base,
            convention: SourceConvention::Backward,
            state,
            t0,
            t,
            mc,
            x_order: DEFAULT_WINDOW_ORDER,
            horizon: None,
        }
    }

    pub fn with_g(&self, g: TestFunction) -> Self {
        Self { g, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let horizon = self.horizon.unwrap_or(self.t);
        if !(self.t0 >= 0.0 && self.t0 <= self.t && self.t <= horizon) {
            return Err(Error::Precondition(format!(
                "need 0 <= t0 <= t <= T, got t0 = {}, t = {}, T = {horizon}",
                self.t0, self.t
            )));
        }
        self.window.validate()?;
        self.mc.validate()?;
        self.state.validate()?;
        self.base.validate(Some(horizon))
    }
}

/// Estimates of `F(g + w·h)` along a ray, all from the same paths.
#[derive(Debug, Clone, PartialEq)]
pub struct RayEvaluation {
    pub ws: Vec<Complex64>,
    pub estimates: Vec<McEstimate>,
    /// Estimates of pathwise linear functionals `Σ_k c_k F(g + w_k·h)`.
    pub functionals: Vec<McEstimate>,
    pub diagnostics: Diagnostics,
}

/// Per-node sample `amplitude·exp(base + w·slope)` before the prefactor.
struct NodeTerms {
    base: Complex64,
    slope: Complex64,
    amplitude: Complex64,
}

/// `F(g + w·h)` for every `w` in `ws` plus the requested linear functionals.
pub fn eval_ray(
    req: &UFunctionalRequest,
    h: &TestFunction,
    ws: &[Complex64],
    functionals: &[Vec<Complex64>],
) -> Result<RayEvaluation> {
    req.validate()?;
    if functionals.iter().any(|c| c.len() != ws.len()) {
        return Err(Error::Config("functional length does not match the number of ray points".into()));
    }
    let nodes = req.window.nodes(req.x_order)?;
    for &(x, _) in &nodes {
        req.base.check_real_point(x)?;
    }
    let (t0, t) = (req.t0, req.t);
    let a_gg = complement_inner(&req.g, &req.g, t0, t)?.value;
    let a_gh = complement_inner(&req.g, h, t0, t)?.value;
    let a_hh = complement_inner(h, h, t0, t)?.value;
    let log_pref: Vec<Complex64> = ws.iter().map(|w| -0.5 * (a_gg + 2.0 * w * a_gh + w * w * a_hh)).collect();
    let [g0, gt, h0, ht] = [
        req.g.eval_all(t0)[0],
        req.g.eval_all(t)[0],
        h.eval_all(t0)[0],
        h.eval_all(t)[0],
    ];

    let potential = TimeDependentPotential {
        base: req.base.clone(),
        source: TestFunction::zero(),
        convention: req.convention,
    };
    let mc = req.mc;
    let n_steps = if t > t0 { mc.n_steps } else { 1 };
    let evo = Evolution::new(&potential, &req.state, t0, t, n_steps);
    let with_source = TimeDependentPotential {
        convention: req.convention,
        ..TimeDependentPotential::default()
    };
    let gdot_g = source_nodes(&with_source, &req.g, t0, t, n_steps);
    let gdot_h = source_nodes(&with_source, h, t0, t, n_steps);
    let c = sqrt_i();
    let i = Complex64::i();

    let path_terms = |path: &[f64]| -> Result<(Vec<NodeTerms>, f64)> {
        let end = c * path[path.len() - 1];
        let mut terms = Vec::with_capacity(nodes.len());
        let mut modulus = 0.0f64;
        for &(x, weight) in &nodes {
            let z = Complex64::new(x, 0.0);
            let j0 = evo.base_action(z, path)? + evo.source_action(&gdot_g, z, path);
            let jh = evo.source_action(&gdot_h, z, path);
            let zend = z + end;
            let amplitude = req.state.eval(zend)? * weight;
            modulus = modulus.max((-i * j0).re.exp());
            terms.push(NodeTerms {
                base: -i * g0 * x - i * j0 + i * gt * zend,
                slope: -i * h0 * x - i * jh + i * ht * zend,
                amplitude,
            });
        }
        Ok((terms, modulus))
    };
    let samples = |terms: &[NodeTerms]| -> Result<Vec<Complex64>> {
        ws.iter()
            .zip(&log_pref)
            .map(|(w, lp)| {
                let mut sum = Complex64::new(0.0, 0.0);
                for nt in terms {
                    let e = nt.base + w * nt.slope + lp;
                    if !(e.re <= MAX_EXPONENT) {
                        return Err(Error::AmplitudeOverflow { z: *w });
                    }
                    sum += nt.amplitude * e.exp();
                }
                Ok(sum)
            })
            .collect()
    };
    let n_slots = ws.len() + functionals.len();
    let combine = |values: &[Complex64]| -> Vec<Complex64> {
        let mut out = values.to_vec();
        for coef in functionals {
            out.push(coef.iter().zip(values).map(|(c, v)| c * v).sum());
        }
        out
    };

    if t == t0 {
        let values = samples(&path_terms(&[0.0, 0.0])?.0)?;
        let estimates = combine(&values)
            .into_iter()
            .map(|v| McEstimate::exact(v, mc.n_paths, mc.seed))
            .collect::<Vec<_>>();
        return Ok(RayEvaluation {
            ws: ws.to_vec(),
            functionals: estimates[ws.len()..].to_vec(),
            estimates: estimates[..ws.len()].to_vec(),
            diagnostics: Diagnostics::default(),
        });
    }

    let out = reduce_paths(
        mc.n_paths,
        mc.chunk_size,
        mc.execution,
        || PointsAcc::new(n_slots),
        |p, acc| {
            let mut buffers = std::mem::take(&mut acc.buffers);
            let path = buffers.draw(mc.seed, p, evo.n_steps, evo.dt);
            acc.diagnostics.paths_attempted += 1;
            match path_terms(path).and_then(|(terms, m)| Ok((samples(&terms)?, m))) {
                Ok((values, modulus)) => {
                    acc.diagnostics.record_weight(modulus);
                    for (slot, v) in combine(&values).into_iter().enumerate() {
                        acc.acc[slot].push(v);
                    }
                }
                Err(e) => acc.record_failure(e),
            }
            acc.buffers = buffers;
        },
    );
    let (mut estimates, diagnostics) = out.finish(mc.seed)?;
    let functionals = estimates.split_off(ws.len());
    Ok(RayEvaluation {
        ws: ws.to_vec(),
        estimates,
        functionals,
        diagnostics,
    })
}

/// `F(g)` for the request's window and test function.
#[allow(non_snake_case)]
pub fn eval_F(req: &UFunctionalRequest) -> Result<McEstimate> {
    Ok(eval_ray(req, &TestFunction::zero(), &[Complex64::new(0.0, 0.0)], &[])?.estimates[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticityReport {
    pub radius: f64,
    pub n_contour: usize,
    /// Pathwise trapezoid estimate of `∮ F(g + w·h) dw` over `|w| = radius`.
    pub contour_integral: McEstimate,
    pub contour_integral_modulus: f64,
    pub max_on_contour: f64,
    /// Difference between the full rule and the rule on every other node.
    pub rule_error: f64,
    /// `|∮F dw| / max|F|`.
    pub ratio: f64,
    /// `10·(stderr + rule error)` relative to `max|F|`, plus a round-off floor.
    pub tolerance: f64,
    pub passes: bool,
    pub diagnostics: Diagnostics,
}

pub const DEFAULT_CONTOUR_NODES: usize = 32;

/// Integrates `w ↦ F(g + w·h)` around the circle `|w| = radius`.
pub fn analyticity_probe(req: &UFunctionalRequest, h: &TestFunction, radius: f64, n_contour: usize) -> Result<AnalyticityReport> {
    if !(radius > 0.0) || n_contour < 16 {
        return Err(Error::Precondition(format!(
            "need radius > 0 and n_contour >= 16, got {radius} and {n_contour}"
        )));
    }
    let step = std::f64::consts::TAU / n_contour as f64;
    let ws: Vec<Complex64> = (0..n_contour)
        .map(|k| Complex64::from_polar(radius, k as f64 * step))
        .collect();
    let full: Vec<Complex64> = ws.iter().map(|w| Complex64::i() * w * step).collect();
    let half: Vec<Complex64> = full
        .iter()
        .enumerate()
        .map(|(k, c)| if k % 2 == 0 { 2.0 * c } else { Complex64::new(0.0, 0.0) })
        .collect();
    let eval = eval_ray(req, h, &ws, &[full, half])?;
    let max_on_contour = eval.estimates.iter().map(|e| e.mean.norm()).fold(0.0, f64::max);
    let mut integral = eval.functionals[0];
    let mut rule_error = (eval.functionals[0].mean - eval.functionals[1].mean).norm();
    if h.is_zero() {
        // constant integrand
        integral = McEstimate::exact(Complex64::new(0.0, 0.0), integral.n_paths, integral.seed);
        rule_error = 0.0;
    }
    let modulus = integral.mean.norm();
    let scale = if max_on_contour > 0.0 { max_on_contour } else { 1.0 };
    let roundoff = f64::EPSILON * n_contour as f64 * radius * max_on_contour;
    let ratio = modulus / scale;
    let tolerance = 10.0 * (integral.combined_stderr() + rule_error + roundoff) / scale;
    Ok(AnalyticityReport {
        radius,
        n_contour,
        contour_integral: integral,
        contour_integral_modulus: modulus,
        max_on_contour,
        rule_error,
        ratio,
        tolerance,
        passes: ratio < tolerance || modulus == 0.0,
        diagnostics: eval.diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    /// Smallest `K` with `|F(w·g)| ≤ K·exp(D·|w|²‖g‖²)` on the samples.
    pub k: f64,
    /// Least-squares slope of `log|F|` against `|w|²‖g‖²`, clamped at 0.
    pub d: f64,
    /// The same slope using only samples with `|w|` up to half the range.
    pub d_half: f64,
    /// Samples above the envelope by more than three standard errors, or
    /// with a non-finite value.
    pub violations: usize,
    pub norm_sq: f64,
    pub samples: Vec<(Complex64, McEstimate)>,
    pub diagnostics: Diagnostics,
}

impl GrowthReport {
    /// Finite constants, no violations and a slope that does not move by more
    /// than `tol` (absolute, plus the same fraction of the slope) when the
    /// `|w|`-range is halved.
    pub fn stable(&self, tol: f64) -> bool {
        self.k.is_finite()
            && self.d.is_finite()
            && self.d_half.is_finite()
            && self.violations == 0
            && (self.d - self.d_half).abs() <= tol * (1.0 + self.d.max(self.d_half))
    }
}

fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Samples `|F(w·g)|` and fits the order-two envelope.
pub fn growth_probe(req: &UFunctionalRequest, w_samples: &[Complex64]) -> Result<GrowthReport> {
    let norm_sq = l2_norm_sq(&req.g)?;
    if !(norm_sq > 0.0) {
        return Err(Error::Precondition("growth probe needs ||g|| > 0".into()));
    }
    if w_samples.len() < 3 {
        return Err(Error::Config("growth probe needs at least 3 samples".into()));
    }
    let zero_g = req.with_g(TestFunction::zero());
    let eval = eval_ray(&zero_g, &req.g, w_samples, &[])?;
    let samples: Vec<(Complex64, McEstimate)> = w_samples.iter().copied().zip(eval.estimates.iter().copied()).collect();
    let w_max = w_samples.iter().map(|w| w.norm()).fold(0.0, f64::max);
    let points = |limit: f64| -> Vec<(f64, f64)> {
        samples
            .iter()
            .filter(|(w, e)| w.norm() <= limit * (1.0 + 1e-12) && e.mean.norm() > 0.0)
            .map(|(w, e)| (w.norm_sqr() * norm_sq, e.mean.norm().ln()))
            .collect()
    };
    let full = points(w_max);
    let d = ls_slope(&full).max(0.0);
    let d_half = ls_slope(&points(0.5 * w_max)).max(0.0);
    let k = full.iter().map(|(x, y)| (y - d * x).exp()).fold(0.0, f64::max);
    let violations = samples
        .iter()
        .filter(|(w, e)| {
            let bound = k * (d * w.norm_sqr() * norm_sq).exp();
            !e.mean.is_finite() || e.mean.norm() - 3.0 * e.combined_stderr() > bound * (1.0 + 1e-12)
        })
        .count();
    Ok(GrowthReport {
        k,
        d,
        d_half,
        violations,
        norm_sq,
        samples,
        diagnostics: eval.diagnostics,
    })
}
