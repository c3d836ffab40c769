//! Reference solutions that do not sample paths: closed-form and quadrature
//! free evolution, the gauge-transformed linear-source evolution, and a
//! Crank–Nicolson grid solver.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{composite_gauss_legendre, Complex64, QuadratureRule};
use crate::potentials::TimeDependentPotential;
use crate::states::InitialState;
use crate::testfunctions::TestFunction;

/// Agreement required between the two free-evolution methods.
pub const FREE_AGREEMENT: f64 = 1e-6;

/// Half-width of the initial-data window for kernel quadrature.
const KERNEL_RADIUS: f64 = 12.0;
const PANEL_ORDER: usize = 16;

fn hermite_poly_derivs(m: u32, z: Complex64) -> [Complex64; 3] {
    let mut h = [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
    for k in 0..m {
        let next = 2.0 * z * h[2] - 2.0 * k as f64 * h[1];
        h = [h[1], h[2], next];
    }
    let mf = m as f64;
    [h[2], 2.0 * mf * h[1], 4.0 * mf * (mf - 1.0) * h[0]]
}

fn hermite_norm(m: u32) -> f64 {
    let mut log = -0.25 * PI.ln();
    for k in 1..=m {
        log -= 0.5 * (2.0 * k as f64).ln();
    }
    log.exp()
}

/// `[ψ, ∂_zψ, ∂_z²ψ]` of the free evolution of `f_m` over time `t ≥ 0`,
/// analytically continued to complex `z`:
///
/// `ψ = N_m (1+it)^{-1/2} e^{-i m·atan t} H_m(z/√(1+t²)) e^{-z²/(2(1+it))}`.
pub fn free_closed_form_hermite(m: u32, t: f64, z: Complex64) -> [Complex64; 3] {
    let one_it = Complex64::new(1.0, t);
    let a = 1.0 / (1.0 + t * t).sqrt();
    let c = one_it.inv();
    let pref = hermite_norm(m) / one_it.sqrt() * Complex64::from_polar(1.0, -(m as f64) * t.atan());
    let e = (-0.5 * c * z * z).exp() * pref;
    let [h, dh, ddh] = hermite_poly_derivs(m, a * z);
    [
        e * h,
        e * (a * dh - c * z * h),
        e * (a * a * ddh - 2.0 * a * c * z * dh + (c * c * z * z - c) * h),
    ]
}

/// Closed-form free evolution of a Hermite combination with derivatives.
pub fn free_closed_form(state: &InitialState, t: f64, z: Complex64) -> [Complex64; 3] {
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for (coef, m) in state.terms() {
        let v = free_closed_form_hermite(*m, t, z);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += coef * vi;
        }
    }
    out
}

/// `∫ K₀(x,t|x₀) k(x₀) dx₀` over `[-12, 12]` with the free kernel
/// `(2πit)^{-1/2} exp(i(x-x₀)²/(2t))`, by composite Gauss–Legendre with
/// panels short enough to resolve the kernel oscillation.
pub fn free_kernel_quadrature<K>(k: K, t: f64, x: f64) -> Result<Complex64>
where
    K: Fn(f64) -> Complex64,
{
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("free kernel needs t > 0, got {t}")));
    }
    let rule = kernel_rule(t, x)?;
    let pref = (Complex64::new(0.0, 2.0 * PI * t)).sqrt().inv();
    let mut sum = Complex64::new(0.0, 0.0);
    for (&x0, &w) in rule.nodes().iter().zip(rule.weights()) {
        let d = x - x0;
        sum += Complex64::from_polar(w, d * d / (2.0 * t)) * k(x0);
    }
    Ok(pref * sum)
}

fn kernel_rule(t: f64, x: f64) -> Result<QuadratureRule> {
    // the kernel phase turns by at most 2 rad per panel
    let max_freq = (x.abs() + KERNEL_RADIUS) / t;
    let width = (2.0 / max_freq).min(0.5);
    let panels = ((2.0 * KERNEL_RADIUS) / width).ceil() as usize;
    composite_gauss_legendre(PANEL_ORDER, panels.max(25), -KERNEL_RADIUS, KERNEL_RADIUS)
}

/// Free evolution `∫K₀ f` of a Hermite combination at real `x`, computed by
/// kernel quadrature and checked against the closed form.
pub fn free_evolve(state: &InitialState, t: f64, x: f64) -> Result<Complex64> {
    state.validate()?;
    let quad = free_kernel_quadrature(
        |x0| state.eval(Complex64::new(x0, 0.0)).expect("Hermite functions are finite on the real line"),
        t,
        x,
    )?;
    let closed = free_closed_form(state, t, Complex64::new(x, 0.0))[0];
    let diff = (quad - closed).norm();
    if diff > FREE_AGREEMENT * closed.norm().max(1.0) {
        return Err(Error::OracleIntegrity(format!(
            "free quadrature {quad} and closed form {closed} differ by {diff:.3e} at t = {t}, x = {x}"
        )));
    }
    Ok(quad)
}

/// Solution of `i∂ψ = -½ψ'' + ġ(τ)·x·ψ` from `ψ(t0) = k` to time `t` at `x`.
///
/// With `P(τ) = g(τ) - g(t0)`, `Q = ∫P`, `S = ½∫P²` over `[t0, t]`,
/// `ψ(t,x) = e^{-iP(t)x - iS} φ(t - t0, x + Q)` where `φ` is the free
/// evolution of `k`, evaluated by kernel quadrature.
pub fn linear_source_evolve<K>(k: K, g: &TestFunction, t0: f64, t: f64, x: f64) -> Result<Complex64>
where
    K: Fn(f64) -> Complex64,
{
    if !(t0 <= t) {
        return Err(Error::Precondition(format!("need t0 <= t, got {t0} > {t}")));
    }
    let g0 = g.eval_all(t0)[0];
    let (mut q, mut s) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    if t > t0 {
        let rule = QuadratureRule::gauss_legendre(64, t0, t)?;
        for (&tau, &w) in rule.nodes().iter().zip(rule.weights()) {
            let p = g.eval_all(tau)[0] - g0;
            q += p * w;
            s += 0.5 * p * p * w;
        }
    }
    let p_t = g.eval_all(t)[0] - g0;
    let phase = (-Complex64::i() * (s + p_t * x)).exp();
    if t == t0 {
        return Ok(phase * k(x));
    }
    if q.im != 0.0 {
        return Err(Error::Precondition("linear-source oracle needs a real source".into()));
    }
    Ok(phase * free_kernel_quadrature(k, t - t0, x + q.re)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSolverConfig {
    /// Domain `[-l, l]` with homogeneous Dirichlet boundaries.
    pub l: f64,
    /// Number of grid points including the two boundary points.
    pub n_x: usize,
    pub dt: f64,
}

impl GridSolverConfig {
    pub fn new(l: f64, dx: f64, dt: f64) -> Result<Self> {
        let n = (2.0 * l / dx).round();
        if !(l > 0.0 && dx > 0.0 && dt > 0.0) || n < 4.0 {
            return Err(Error::Config(format!("bad grid l = {l}, dx = {dx}, dt = {dt}")));
        }
        Ok(Self {
            l,
            n_x: n as usize + 1,
            dt,
        })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.l / (self.n_x - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.l + j as f64 * self.dx()
    }
}

/// Wavefunction on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    pub xs: Vec<f64>,
    pub psi: Vec<Complex64>,
    pub t: f64,
}

impl GridWavefunction {
    /// `∫|ψ|²` by the trapezoid rule.
    pub fn mass(&self) -> f64 {
        let dx = self.xs[1] - self.xs[0];
        let n = self.psi.len();
        let inner: f64 = self.psi[1..n - 1].iter().map(|p| p.norm_sqr()).sum();
        dx * (inner + 0.5 * (self.psi[0].norm_sqr() + self.psi[n - 1].norm_sqr()))
    }

    /// Linear interpolation at `x`.
    pub fn value_at(&self, x: f64) -> Result<Complex64> {
        let (lo, hi) = (self.xs[0], self.xs[self.xs.len() - 1]);
        if !(lo..=hi).contains(&x) {
            return Err(Error::Precondition(format!("x = {x} outside grid [{lo}, {hi}]")));
        }
        let dx = self.xs[1] - self.xs[0];
        let pos = (x - lo) / dx;
        let j = (pos.floor() as usize).min(self.xs.len() - 2);
        let frac = pos - j as f64;
        if frac.abs() < 1e-9 {
            return Ok(self.psi[j]);
        }
        Ok(self.psi[j] * (1.0 - frac) + self.psi[j + 1] * frac)
    }
}

/// Crank–Nicolson stepping of `i∂ψ = -½ψ'' + V(τ,x)ψ` from `t0` to `t`, with
/// the potential sampled at the midpoint time of each step.
pub fn cn_evolve<F>(config: &GridSolverConfig, potential: &TimeDependentPotential, f: F, t0: f64, t: f64) -> Result<GridWavefunction>
where
    F: Fn(f64) -> Complex64,
{
    if !(t0 <= t) {
        return Err(Error::Precondition(format!("need t0 <= t, got {t0} > {t}")));
    }
    let n = config.n_x;
    let dx = config.dx();
    let xs: Vec<f64> = (0..n).map(|j| config.x(j)).collect();
    for &x in &xs[1..n - 1] {
        potential.base.check_real_point(x)?;
    }
    let mut psi: Vec<Complex64> = xs.iter().map(|&x| f(x)).collect();
    psi[0] = Complex64::new(0.0, 0.0);
    psi[n - 1] = Complex64::new(0.0, 0.0);

    let n_steps = ((t - t0) / config.dt).round().max(if t > t0 { 1.0 } else { 0.0 }) as usize;
    if n_steps == 0 {
        return Ok(GridWavefunction { xs, psi, t });
    }
    let dt = (t - t0) / n_steps as f64;
    let m = n - 2;
    let base: Vec<Complex64> = xs[1..n - 1]
        .iter()
        .map(|&x| potential.base.eval(Complex64::new(x, 0.0)))
        .collect::<Result<_>>()?;
    let time_dependent = !potential.source.is_zero();
    let half = Complex64::new(0.0, 0.5 * dt);
    let kinetic = 1.0 / (dx * dx);
    // H = -½D² + V: diagonal 1/dx² + V, off-diagonal -1/(2dx²)
    let off = half * (-0.5 * kinetic);
    let mut v = base.clone();
    let mut diag = vec![Complex64::new(0.0, 0.0); m];
    let mut rhs = vec![Complex64::new(0.0, 0.0); m];
    let mut c_prime = vec![Complex64::new(0.0, 0.0); m];
    for step in 0..n_steps {
        if time_dependent || step == 0 {
            let tau = t0 + (step as f64 + 0.5) * dt;
            let gdot = potential.source.eval_all(tau)[1];
            for (j, vj) in v.iter_mut().enumerate() {
                *vj = base[j] + if time_dependent { gdot * xs[j + 1] } else { Complex64::new(0.0, 0.0) };
            }
            for (d, vj) in diag.iter_mut().zip(&v) {
                *d = 1.0 + half * (kinetic + vj);
            }
        }
        // rhs = (1 - i dt/2 H) ψ on the interior
        for j in 0..m {
            let left = psi[j];
            let right = psi[j + 2];
            let centre = psi[j + 1];
            rhs[j] = centre * (2.0 - diag[j]) - off * (left + right);
        }
        // Thomas algorithm with constant off-diagonals
        let mut denom = diag[0];
        if denom.norm() < 1e-300 {
            return Err(Error::SingularSystem);
        }
        c_prime[0] = off / denom;
        rhs[0] /= denom;
        for j in 1..m {
            denom = diag[j] - off * c_prime[j - 1];
            if denom.norm() < 1e-300 {
                return Err(Error::SingularSystem);
            }
            c_prime[j] = off / denom;
            rhs[j] = (rhs[j] - off * rhs[j - 1]) / denom;
        }
        for j in (0..m - 1).rev() {
            let next = rhs[j + 1];
            rhs[j] -= c_prime[j] * next;
        }
        psi[1..n - 1].copy_from_slice(&rhs);
    }
    Ok(GridWavefunction { xs, psi, t })
}
