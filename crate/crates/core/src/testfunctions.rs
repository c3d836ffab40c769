//! Test functions `g` entering the T-transform: finite combinations of
//! Gaussian bumps and Hermite functions with complex coefficients.

use crate::error::{Error, Result};
use crate::numerics::{composite_gauss_legendre, Complex64};
use crate::states::hermite_function;

/// Truncation radius in units of the basis width.
const SUPPORT_RADIUS: f64 = 12.0;
const PANEL_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Basis {
    /// `A·e^{-(t-μ)²/(2σ²)}`.
    Gaussian { amplitude: f64, mean: f64, sigma: f64 },
    /// The Hermite function `f_m(t)`.
    Hermite { m: u32 },
}

impl Basis {
    fn eval(&self, t: f64) -> [f64; 3] {
        match *self {
            Basis::Gaussian {
                amplitude,
                mean,
                sigma,
            } => {
                let u = (t - mean) / sigma;
                let g = amplitude * (-0.5 * u * u).exp();
                let s2 = sigma * sigma;
                [g, -(t - mean) / s2 * g, ((t - mean) * (t - mean) / (s2 * s2) - 1.0 / s2) * g]
            }
            Basis::Hermite { m } => {
                // real argument: no overflow possible
                let v = hermite_function(m, Complex64::new(t, 0.0))
                    .expect("Hermite function is finite on the real line");
                [v[0].re, v[1].re, v[2].re]
            }
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            Basis::Gaussian { mean, sigma, .. } => {
                (mean - SUPPORT_RADIUS * sigma, mean + SUPPORT_RADIUS * sigma)
            }
            Basis::Hermite { m } => {
                let r = SUPPORT_RADIUS + (2.0 * m as f64 + 1.0).sqrt();
                (-r, r)
            }
        }
    }

    fn width(&self) -> f64 {
        match *self {
            Basis::Gaussian { sigma, .. } => sigma,
            Basis::Hermite { m } => 1.0 / (1.0 + (m as f64).sqrt()),
        }
    }
}

/// `g = Σ c_k φ_k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TestFunction {
    terms: Vec<(Complex64, Basis)>,
}

impl TestFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn gaussian(amplitude: f64, mean: f64, sigma: f64) -> Self {
        Self {
            terms: vec![(
                Complex64::new(1.0, 0.0),
                Basis::Gaussian {
                    amplitude,
                    mean,
                    sigma,
                },
            )],
        }
    }

    /// The bump `e^{-t²/2}`.
    pub fn unit_bump() -> Self {
        Self::gaussian(1.0, 0.0, 1.0)
    }

    pub fn hermite(m: u32) -> Self {
        Self {
            terms: vec![(Complex64::new(1.0, 0.0), Basis::Hermite { m })],
        }
    }

    pub fn from_terms(terms: Vec<(Complex64, Basis)>) -> Result<Self> {
        for (_, b) in &terms {
            if let Basis::Gaussian {
                amplitude,
                mean,
                sigma,
            } = b
            {
                if !(*sigma > 0.0 && amplitude.is_finite() && mean.is_finite()) {
                    return Err(Error::Config(format!("invalid Gaussian basis term {b:?}")));
                }
            }
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[(Complex64, Basis)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(c, _)| *c == Complex64::new(0.0, 0.0))
    }

    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|(c, _)| c.im == 0.0)
    }

    pub fn scaled(&self, w: Complex64) -> Self {
        Self {
            terms: self.terms.iter().map(|(c, b)| (c * w, *b)).collect(),
        }
    }

    /// `[g(t), ġ(t), g̈(t)]`.
    pub fn eval_all(&self, t: f64) -> [Complex64; 3] {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (c, b) in &self.terms {
            let v = b.eval(t);
            for (o, vi) in out.iter_mut().zip(v) {
                *o += c * vi;
            }
        }
        out
    }

    fn support(&self) -> Option<(f64, f64)> {
        self.terms
            .iter()
            .map(|(_, b)| b.support())
            .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }

    fn min_width(&self) -> f64 {
        self.terms
            .iter()
            .map(|(_, b)| b.width())
            .fold(f64::INFINITY, f64::min)
    }
}

/// `g(t)`, `ġ(t)` or `g̈(t)`.
pub fn eval_g(g: &TestFunction, t: f64, derivative: u8) -> Result<Complex64> {
    match derivative {
        0..=2 => Ok(g.eval_all(t)[derivative as usize]),
        d => Err(Error::Config(format!("derivative order {d} not supported (0..=2)"))),
    }
}

/// A quadrature value with the estimated mass lost to support truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedIntegral {
    pub value: Complex64,
    pub truncation_error: f64,
}

fn integrate_product(g: &TestFunction, h: &TestFunction, a: f64, b: f64, width: f64) -> Result<Complex64> {
    if b <= a {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let panels = ((b - a) / (0.5 * width)).ceil() as usize;
    let rule = composite_gauss_legendre(PANEL_ORDER, panels, a, b)?;
    let mut sum = Complex64::new(0.0, 0.0);
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        sum += g.eval_all(x)[0] * h.eval_all(x)[0] * w;
    }
    Ok(sum)
}

/// Bilinear complement integral `∫_{[t0,t]^c} g(s) h(s) ds` (no complex
/// conjugation), by composite Gauss–Legendre on the truncated supports.
pub fn complement_inner(g: &TestFunction, h: &TestFunction, t0: f64, t: f64) -> Result<TruncatedIntegral> {
    if t0 > t {
        return Err(Error::Precondition(format!("t0 = {t0} > t = {t}")));
    }
    let (Some(sg), Some(sh)) = (g.support(), h.support()) else {
        return Ok(TruncatedIntegral {
            value: Complex64::new(0.0, 0.0),
            truncation_error: 0.0,
        });
    };
    let lo = sg.0.max(sh.0);
    let hi = sg.1.min(sh.1);
    let width = g.min_width().min(h.min_width());
    let left = integrate_product(g, h, lo, t0.min(hi), width)?;
    let right = integrate_product(g, h, t.max(lo), hi, width)?;
    let span = hi - lo;
    let tail = integrate_product(g, h, hi, hi + span, width)?.norm()
        + integrate_product(g, h, lo - span, lo, width)?.norm();
    Ok(TruncatedIntegral {
        value: left + right,
        truncation_error: tail,
    })
}

/// `∫_ℝ g² - ∫_{t0}^{t} g²`, the exponent of the T-transform prefactor.
///
/// The square is taken without conjugation so the result is analytic along
/// complex rays `g + w·h`; for real `g` it is the usual squared L² mass of
/// `g` outside `[t0, t]`.
pub fn complement_l2(g: &TestFunction, t0: f64, t: f64) -> Result<TruncatedIntegral> {
    let r = complement_inner(g, g, t0, t)?;
    if g.is_real() && r.value.re < -1e-10 {
        return Err(Error::Consistency(format!(
            "negative complement mass {} for a real test function",
            r.value.re
        )));
    }
    Ok(r)
}

/// `∫_ℝ |g|²`.
pub fn l2_norm_sq(g: &TestFunction) -> Result<f64> {
    let Some((lo, hi)) = g.support() else {
        return Ok(0.0);
    };
    let width = g.min_width();
    let panels = ((hi - lo) / (0.5 * width)).ceil() as usize;
    let rule = composite_gauss_legendre(PANEL_ORDER, panels, lo, hi)?;
    rule.integrate_real(|x| g.eval_all(x)[0].norm_sqr())
}

/// `g + w·h`, merging equal basis terms coefficient-wise.
pub fn ray(g: &TestFunction, h: &TestFunction, w: Complex64) -> TestFunction {
    if w == Complex64::new(0.0, 0.0) {
        return g.clone();
    }
    let mut terms = g.terms.clone();
    for (c, b) in &h.terms {
        match terms.iter_mut().find(|(_, bb)| bb == b) {
            Some((cc, _)) => *cc += w * c,
            None => terms.push((w * c, *b)),
        }
    }
    TestFunction { terms }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn bump_values() {
        let g = TestFunction::unit_bump();
        assert_eq!(eval_g(&g, 0.0, 0).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(eval_g(&g, 0.0, 1).unwrap().norm(), 0.0);
        let d = eval_g(&g, 1.0, 1).unwrap();
        assert!((d.re + (-0.5f64).exp()).abs() < 1e-15);
        let z = TestFunction::zero();
        for d in 0..=2 {
            assert_eq!(eval_g(&z, 0.3, d).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn second_derivative_matches_differences() {
        let g = ray(&TestFunction::gaussian(0.7, 0.2, 0.5), &TestFunction::hermite(3), Complex64::new(0.4, -1.0));
        let h = 1e-4;
        for t in [-1.0, 0.1, 0.9] {
            let [v, d1, d2] = g.eval_all(t);
            let fd1 = (g.eval_all(t + h)[0] - g.eval_all(t - h)[0]) / (2.0 * h);
            let fd2 = (g.eval_all(t + h)[0] - 2.0 * v + g.eval_all(t - h)[0]) / (h * h);
            assert!((fd1 - d1).norm() < 1e-7);
            assert!((fd2 - d2).norm() < 1e-5);
        }
    }

    #[test]
    fn complement_closed_forms() {
        let zero = complement_l2(&TestFunction::zero(), 0.0, 1.0).unwrap();
        assert_eq!(zero.value, Complex64::new(0.0, 0.0));
        let g = TestFunction::unit_bump();
        let full = complement_l2(&g, 0.0, 0.0).unwrap();
        assert!((full.value.re - PI.sqrt()).abs() < 1e-12, "{}", full.value);
        assert!(full.truncation_error < 1e-12);
        let none = complement_l2(&g, -12.0, 12.0).unwrap();
        assert!(none.value.norm() < 1e-12);
        assert!(complement_l2(&g, 1.0, 0.0).is_err());
    }

    #[test]
    fn hermite_basis_has_unit_mass() {
        for m in [0, 2, 5] {
            let n = l2_norm_sq(&TestFunction::hermite(m)).unwrap();
            assert!((n - 1.0).abs() < 1e-8, "m={m}: {n}");
        }
    }

    #[test]
    fn complement_shrinks_as_interval_grows() {
        let g = ray(&TestFunction::gaussian(1.0, 0.3, 0.8), &TestFunction::hermite(1), Complex64::new(0.5, 0.0));
        let mut last = f64::INFINITY;
        for (t0, t) in [(0.0, 0.0), (0.0, 0.25), (-0.5, 0.5), (-1.0, 2.0), (-5.0, 5.0)] {
            let v = complement_l2(&g, t0, t).unwrap().value.re;
            assert!(v >= 0.0 && v <= last + 1e-14);
            last = v;
        }
    }

    #[test]
    fn ray_coefficients() {
        let g = ray(&TestFunction::unit_bump(), &TestFunction::hermite(2), Complex64::new(0.0, 1.0));
        assert_eq!(ray(&g, &TestFunction::hermite(4), Complex64::new(0.0, 0.0)), g);
        let doubled = ray(&g, &g, Complex64::new(1.0, 0.0));
        assert_eq!(doubled.terms().len(), g.terms().len());
        for ((c2, b2), (c, b)) in doubled.terms().iter().zip(g.terms()) {
            assert_eq!(b2, b);
            assert_eq!(*c2, 2.0 * c);
        }
    }

    #[test]
    fn complement_is_quadratic_along_rays() {
        let g = TestFunction::gaussian(1.0, 0.2, 0.7);
        let h = TestFunction::hermite(1);
        let (t0, t) = (0.0, 0.5);
        let value = |w: Complex64| complement_l2(&ray(&g, &h, w), t0, t).unwrap().value;
        let monomials = |w: Complex64| {
            let (a, b) = (w.re, w.im);
            [1.0, a, b, a * a, a * b, b * b]
        };
        let fit_points = [
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.5),
            Complex64::new(0.7, -1.3),
            Complex64::new(2.0, 2.0),
        ];
        // solve the 6x6 system for complex coefficients by Gaussian elimination
        let mut a: Vec<Vec<Complex64>> = fit_points
            .iter()
            .map(|&w| {
                let mut row: Vec<Complex64> = monomials(w).iter().map(|&m| Complex64::new(m, 0.0)).collect();
                row.push(value(w));
                row
            })
            .collect();
        for col in 0..6 {
            let piv = (col..6).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
            a.swap(col, piv);
            for row in 0..6 {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    let pivot_row = a[col].clone();
                    for (dst, src) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                        *dst -= f * src;
                    }
                }
            }
        }
        let coef: Vec<Complex64> = (0..6).map(|i| a[i][6] / a[i][i]).collect();
        for w in [Complex64::new(-0.3, 2.2), Complex64::new(1.5, -0.4), Complex64::new(-2.0, -1.0)] {
            let pred: Complex64 = monomials(w).iter().zip(&coef).map(|(m, c)| c * m).sum();
            assert!((pred - value(w)).norm() < 1e-8, "w={w}");
        }
    }
}
