//! Complex constants, Monte Carlo accumulation and fixed quadrature rules.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub use num_complex::Complex64;

use crate::error::{Error, Result};

/// The principal square root of `i`, `e^{iπ/4}`.
///
/// Every complex-scaled path in this crate is built from this one constant.
#[inline]
pub fn sqrt_i() -> Complex64 {
    Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2)
}

/// Running mean and second central moment (Welford), mergeable with Chan's
/// pairwise update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = other.mean - self.mean;
        self.mean += delta * n_b / n;
        self.m2 += other.m2 + delta * delta * n_a * n_b / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Sample standard deviation divided by `sqrt(n)`.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Componentwise Welford accumulator for complex samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComplexAccumulator {
    re: Welford,
    im: Welford,
}

impl ComplexAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, z: Complex64) {
        self.re.push(z.re);
        self.im.push(z.im);
    }

    pub fn merge(&mut self, other: &ComplexAccumulator) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }

    pub fn count(&self) -> u64 {
        self.re.count()
    }

    pub fn mean(&self) -> Complex64 {
        Complex64::new(self.re.mean(), self.im.mean())
    }

    pub fn estimate(&self, seed: u64) -> McEstimate {
        McEstimate {
            mean: self.mean(),
            stderr_re: self.re.stderr(),
            stderr_im: self.im.stderr(),
            n_paths: self.count(),
            seed,
        }
    }
}

/// A Monte Carlo estimate of a complex expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub n_paths: u64,
    pub seed: u64,
}

impl McEstimate {
    /// A value known without sampling error.
    pub fn exact(value: Complex64, n_paths: u64, seed: u64) -> Self {
        Self {
            mean: value,
            stderr_re: 0.0,
            stderr_im: 0.0,
            n_paths,
            seed,
        }
    }

    /// `sqrt(stderr_re² + stderr_im²)`, the standard error of the complex mean
    /// measured in modulus.
    pub fn combined_stderr(&self) -> f64 {
        self.stderr_re.hypot(self.stderr_im)
    }

    /// Distance to `value` in units of the combined standard error.
    /// Returns 0 for an exact match and infinity for a mismatch with zero error.
    pub fn z_score(&self, value: Complex64) -> f64 {
        z_score(self.mean - value, self.combined_stderr())
    }
}

pub(crate) fn z_score(diff: Complex64, sigma: f64) -> f64 {
    let d = diff.norm();
    if d == 0.0 {
        0.0
    } else if sigma == 0.0 {
        f64::INFINITY
    } else {
        d / sigma
    }
}

/// Accumulates a stream of samples into an estimate.
pub fn mc_accumulate<I>(samples: I, seed: u64) -> Result<McEstimate>
where
    I: IntoIterator<Item = Complex64>,
{
    let mut acc = ComplexAccumulator::new();
    for z in samples {
        acc.push(z);
    }
    if acc.count() < 2 {
        return Err(Error::InsufficientSamples(acc.count()));
    }
    Ok(acc.estimate(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    GaussLegendre,
    Trapezoid,
}

/// A fixed rule `∫_a^b f ≈ Σ w_k f(x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    kind: QuadratureKind,
    order: usize,
    interval: (f64, f64),
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// `order`-point Gauss–Legendre rule, exact for polynomials of degree
    /// `2·order − 1`.
    pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Result<Self> {
        check_rule_args(order, a, b)?;
        let (unit_nodes, unit_weights) = gauss_legendre_unit(order);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let nodes = unit_nodes.iter().map(|x| mid + half * x).collect();
        let weights = unit_weights.iter().map(|w| half * w).collect();
        Ok(Self {
            kind: QuadratureKind::GaussLegendre,
            order,
            interval: (a, b),
            nodes,
            weights,
        })
    }

    /// Composite trapezoid rule on `order` equispaced nodes.
    pub fn trapezoid(order: usize, a: f64, b: f64) -> Result<Self> {
        check_rule_args(order, a, b)?;
        let h = (b - a) / (order - 1) as f64;
        let nodes = (0..order)
            .map(|k| if k + 1 == order { b } else { a + h * k as f64 })
            .collect();
        let weights = (0..order)
            .map(|k| if k == 0 || k + 1 == order { 0.5 * h } else { h })
            .collect();
        Ok(Self {
            kind: QuadratureKind::Trapezoid,
            order,
            interval: (a, b),
            nodes,
            weights,
        })
    }

    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The same kind and order mapped onto another interval.
    pub fn on_interval(&self, a: f64, b: f64) -> Result<Self> {
        match self.kind {
            QuadratureKind::GaussLegendre => Self::gauss_legendre(self.order, a, b),
            QuadratureKind::Trapezoid => Self::trapezoid(self.order, a, b),
        }
    }

    pub fn integrate_real<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<f64> {
        let mut sum = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFiniteNode { node: x });
            }
            sum += w * v;
        }
        Ok(sum)
    }
}

fn check_rule_args(order: usize, a: f64, b: f64) -> Result<()> {
    if order < 2 {
        return Err(Error::Config(format!("quadrature order must be >= 2, got {order}")));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Config(format!("invalid quadrature interval [{a}, {b}]")));
    }
    Ok(())
}

/// Weighted node sum of a complex-valued integrand.
pub fn integrate<F>(f: F, rule: &QuadratureRule) -> Result<Complex64>
where
    F: FnMut(f64) -> Complex64,
{
    let mut f = f;
    let mut sum = Complex64::new(0.0, 0.0);
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(x);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFiniteNode { node: x });
        }
        sum += v * w;
    }
    Ok(sum)
}

/// Composite Gauss–Legendre over `[a, b]` split into `panels` equal pieces.
pub(crate) fn composite_gauss_legendre(
    order: usize,
    panels: usize,
    a: f64,
    b: f64,
) -> Result<QuadratureRule> {
    let panels = panels.max(1);
    let (unit_nodes, unit_weights) = gauss_legendre_unit(order);
    let width = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(order * panels);
    let mut weights = Vec::with_capacity(order * panels);
    for p in 0..panels {
        let lo = a + width * p as f64;
        let mid = lo + 0.5 * width;
        for (x, w) in unit_nodes.iter().zip(&unit_weights) {
            nodes.push(mid + 0.5 * width * x);
            weights.push(0.5 * width * w);
        }
    }
    check_rule_args(order, a, b)?;
    Ok(QuadratureRule {
        kind: QuadratureKind::GaussLegendre,
        order,
        interval: (a, b),
        nodes,
        weights,
    })
}

/// Nodes (ascending) and weights of the `n`-point rule on `[-1, 1]`,
/// by Newton iteration on the Legendre recurrence.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
