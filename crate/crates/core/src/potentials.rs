//! Analytic potentials evaluated at complex points, plus the linear source
//! term `ġ(t)·z`.

use crate::error::{Error, Result};
use crate::numerics::{sqrt_i, Complex64};
use crate::paths::PotentialField;
use crate::testfunctions::TestFunction;

/// Distance below which a point counts as sitting on a singularity.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

/// How `|z - b|^{-n}` is continued off the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branch {
    /// `exp(-(n/2)·Log((z-b)²))` with the principal logarithm. Cut along
    /// `Re z = b`.
    Principal,
    /// Continuation that keeps the sign of `x - b` for `z = x + √i·y`,
    /// i.e. `sign(x-b)^n·(z-b)^{-n}`. Cut along the rotated line
    /// `b + √i·ℝ`, which scaled paths started at a real `x ≠ b` never meet.
    #[default]
    Sheet,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialTerm {
    /// `Σ_{k<4n+2} a_k z^k + (-1)^{n+1} a_{4n+2} z^{4n+2}` with
    /// `a_{4n+2} > 0` stored positive as the last coefficient.
    Polynomial { coefficients: Vec<Complex64> },
    /// Real quadratic `a0 + a1·z + a2·z²`, e.g. the harmonic oscillator.
    /// Only well posed for `|a2| < 1/(2T²)`.
    Quadratic { a0: f64, a1: f64, a2: f64 },
    /// `a / |z - b|^n`, continued according to [`Branch`].
    InversePowerAbs { a: Complex64, b: f64, n: u32 },
    /// `a / (z - b)^n`.
    InversePowerPlain { a: Complex64, b: f64, n: u32 },
}

impl PotentialTerm {
    /// `z^6` (`n = 1`, `a_6 = 1`), applied as `(+1)·z^6`.
    pub fn sextic(a6: f64) -> Self {
        let mut coefficients = vec![Complex64::new(0.0, 0.0); 7];
        coefficients[6] = Complex64::new(a6, 0.0);
        PotentialTerm::Polynomial { coefficients }
    }

    fn polynomial_n(coefficients: &[Complex64]) -> Result<usize> {
        let len = coefficients.len();
        if len < 3 || !(len - 3).is_multiple_of(4) {
            return Err(Error::Config(format!(
                "polynomial needs 4n+3 coefficients a_0..a_(4n+2), got {len}"
            )));
        }
        Ok((len - 3) / 4)
    }

    fn validate(&self) -> Result<()> {
        match self {
            PotentialTerm::Polynomial { coefficients } => {
                Self::polynomial_n(coefficients)?;
                let lead = coefficients[coefficients.len() - 1];
                if !(lead.im == 0.0 && lead.re > 0.0) {
                    return Err(Error::Config(format!(
                        "leading polynomial coefficient must be real and > 0, got {lead}"
                    )));
                }
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config("non-finite polynomial coefficient".into()));
                }
            }
            PotentialTerm::Quadratic { a0, a1, a2 } => {
                if ![a0, a1, a2].iter().all(|v| v.is_finite()) {
                    return Err(Error::Config("non-finite quadratic coefficient".into()));
                }
            }
            PotentialTerm::InversePowerAbs { a, b, n } | PotentialTerm::InversePowerPlain { a, b, n } => {
                if *n < 1 {
                    return Err(Error::Config("inverse power needs n >= 1".into()));
                }
                if !(a.is_finite() && b.is_finite()) {
                    return Err(Error::Config("non-finite inverse-power parameter".into()));
                }
            }
        }
        Ok(())
    }

    /// `[V, V', V'']` at `z`.
    fn eval_all(&self, z: Complex64, branch: Branch) -> Result<[Complex64; 3]> {
        let zero = Complex64::new(0.0, 0.0);
        match self {
            PotentialTerm::Polynomial { coefficients } => {
                let n = Self::polynomial_n(coefficients)?;
                let deg = coefficients.len() - 1;
                let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
                let coef = |k: usize| {
                    if k == deg {
                        coefficients[k] * sign
                    } else {
                        coefficients[k]
                    }
                };
                let (mut p, mut dp, mut ddp) = (zero, zero, zero);
                for k in (0..=deg).rev() {
                    ddp = ddp * z + dp * 2.0;
                    dp = dp * z + p;
                    p = p * z + coef(k);
                }
                Ok([p, dp, ddp])
            }
            PotentialTerm::Quadratic { a0, a1, a2 } => Ok([
                z * z * *a2 + z * *a1 + *a0,
                z * (2.0 * a2) + *a1,
                Complex64::new(2.0 * a2, 0.0),
            ]),
            PotentialTerm::InversePowerAbs { a, b, n } => {
                let w = z - *b;
                if w.norm() < SINGULAR_TOLERANCE {
                    return Err(Error::DomainViolation { z, s: None });
                }
                let side = match branch {
                    Branch::Principal => {
                        if w.re.abs() <= SINGULAR_TOLERANCE * w.norm() {
                            return Err(Error::DomainViolation { z, s: None });
                        }
                        w.re
                    }
                    Branch::Sheet => {
                        // z = x + √i·y  ⇒  x = Re z - Im z
                        let x = z.re - z.im;
                        if (x - b).abs() < SINGULAR_TOLERANCE {
                            return Err(Error::DomainViolation { z, s: None });
                        }
                        x - b
                    }
                };
                let sign = if side < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
                Ok(inverse_power(*a * sign, w, *n))
            }
            PotentialTerm::InversePowerPlain { a, b, n } => {
                let w = z - *b;
                if w.norm() < SINGULAR_TOLERANCE {
                    return Err(Error::DomainViolation { z, s: None });
                }
                Ok(inverse_power(*a, w, *n))
            }
        }
    }
}

fn inverse_power(a: Complex64, w: Complex64, n: u32) -> [Complex64; 3] {
    let inv = w.inv();
    let v = a * inv.powu(n);
    let nf = n as f64;
    [v, -v * inv * nf, v * inv * inv * (nf * (nf + 1.0))]
}

/// `V₀` as a finite sum of terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PotentialSpec {
    terms: Vec<PotentialTerm>,
    branch: Branch,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(terms: Vec<PotentialTerm>) -> Result<Self> {
        let spec = Self {
            terms,
            branch: Branch::default(),
        };
        spec.validate(None)?;
        Ok(spec)
    }

    pub fn with_branch(mut self, branch: Branch) -> Self {
        self.branch = branch;
        self
    }

    /// `a0 + a1·z + a2·z²`.
    pub fn quadratic(a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            terms: vec![PotentialTerm::Quadratic { a0, a1, a2 }],
            branch: Branch::default(),
        }
    }

    pub fn terms(&self) -> &[PotentialTerm] {
        &self.terms
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn has_inverse_power(&self) -> bool {
        self.terms.iter().any(|t| {
            matches!(
                t,
                PotentialTerm::InversePowerAbs { .. } | PotentialTerm::InversePowerPlain { .. }
            )
        })
    }

    /// The real singular points `b` of the inverse-power terms.
    pub fn excluded_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .terms
            .iter()
            .filter_map(|t| match t {
                PotentialTerm::InversePowerAbs { b, .. } | PotentialTerm::InversePowerPlain { b, .. } => Some(*b),
                _ => None,
            })
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Checks coefficients and, when a horizon `T` is given, the window
    /// `|a2| < 1/(2T²)` of every quadratic term.
    pub fn validate(&self, horizon: Option<f64>) -> Result<()> {
        for term in &self.terms {
            term.validate()?;
        }
        if let Some(t) = horizon {
            if let Some(a2) = self.quadratic_out_of_window(t) {
                return Err(Error::Config(format!(
                    "quadratic coefficient a2 = {a2} outside |a2| < 1/(2T^2) = {} for T = {t}",
                    0.5 / (t * t)
                )));
            }
        }
        Ok(())
    }

    fn quadratic_out_of_window(&self, horizon: f64) -> Option<f64> {
        let limit = 0.5 / (horizon * horizon);
        self.terms.iter().find_map(|t| match t {
            PotentialTerm::Quadratic { a2, .. } if a2.abs() >= limit => Some(*a2),
            _ => None,
        })
    }

    /// Rejects real evaluation points that coincide with a singularity.
    pub fn check_real_point(&self, x: f64) -> Result<()> {
        if self
            .excluded_points()
            .iter()
            .any(|b| (x - b).abs() < SINGULAR_TOLERANCE)
        {
            return Err(Error::SingularPoint { x });
        }
        Ok(())
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let mut sum = Complex64::new(0.0, 0.0);
        for term in &self.terms {
            sum += term.eval_all(z, self.branch)?[0];
        }
        Ok(sum)
    }

    /// `[V₀, V₀', V₀'']` at `z`.
    pub fn eval_all(&self, z: Complex64) -> Result<[Complex64; 3]> {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for term in &self.terms {
            let v = term.eval_all(z, self.branch)?;
            for (o, vi) in out.iter_mut().zip(v) {
                *o += vi;
            }
        }
        Ok(out)
    }

    /// Sum of [`doss_bound`] over the inverse-power terms, a bound on
    /// `|V₀(x + √i·y)|` uniform in `y`. Zero when there are none.
    pub fn inverse_power_bound(&self, x: f64) -> Result<f64> {
        self.terms
            .iter()
            .filter(|t| {
                matches!(
                    t,
                    PotentialTerm::InversePowerAbs { .. } | PotentialTerm::InversePowerPlain { .. }
                )
            })
            .map(|t| doss_bound(t, x))
            .sum()
    }
}

/// `|V₀|`-type potential evaluation, `V₀(z)`.
pub fn eval_potential(v: &PotentialSpec, z: Complex64) -> Result<Complex64> {
    v.eval(z)
}

/// `|a|·((x-b)²/2)^{-n/2}`, which bounds `|a|/|z-b|^n` on the whole line
/// `z = x + √i·y` because `|x + √i·y - b|² ≥ (x-b)²/2`.
pub fn doss_bound(term: &PotentialTerm, x: f64) -> Result<f64> {
    match term {
        PotentialTerm::InversePowerAbs { a, b, n } | PotentialTerm::InversePowerPlain { a, b, n } => {
            let d = x - b;
            if d.abs() < SINGULAR_TOLERANCE {
                return Err(Error::SingularPoint { x });
            }
            Ok(a.norm() * (0.5 * d * d).powf(-0.5 * *n as f64))
        }
        other => Err(Error::Config(format!("no uniform bound for {other:?}"))),
    }
}

/// Result of sampling `|exp(|g(t)|·(|z|+|y|) - i·V₀(z + √i·y))|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingReport {
    /// Sampled supremum, `+∞` on overflow.
    pub sup: f64,
    pub argmax_t: f64,
    pub argmax_y: f64,
    /// A quadratic term violates `|a2| < 1/(2T²)`.
    pub out_of_window: bool,
}

/// Grid spacing in `y`; fixed so that a smaller `y_max` samples a subset of
/// the points of a larger one.
const DAMPING_DY: f64 = 0.01;
const DAMPING_T_POINTS: usize = 65;

/// Samples the damped weight over `t ∈ [0, horizon]` and `|y| ≤ y_max`.
pub fn scaled_damping_check(
    v: &PotentialSpec,
    z: Complex64,
    horizon: f64,
    g: &TestFunction,
    y_max: f64,
) -> Result<DampingReport> {
    if !(horizon >= 0.0 && y_max >= 0.0) {
        return Err(Error::Config("horizon and y_max must be >= 0".into()));
    }
    let out_of_window = horizon > 0.0 && v.quadratic_out_of_window(horizon).is_some();
    let (mut g_max, mut argmax_t) = (0.0f64, 0.0);
    for k in 0..DAMPING_T_POINTS {
        let t = horizon * k as f64 / (DAMPING_T_POINTS - 1) as f64;
        let gt = g.eval_all(t)[0].norm();
        if gt > g_max {
            g_max = gt;
            argmax_t = t;
        }
    }
    let c = sqrt_i();
    let n = (y_max / DAMPING_DY).round() as i64;
    let mut best = f64::NEG_INFINITY;
    let mut argmax_y = 0.0;
    for k in -n..=n {
        let y = k as f64 * DAMPING_DY;
        let val = match v.eval(z + c * y) {
            Ok(val) => val,
            Err(Error::DomainViolation { .. }) => continue,
            Err(e) => return Err(e),
        };
        let log = g_max * (z.norm() + y.abs()) + (-Complex64::i() * val).re;
        if log > best {
            best = log;
            argmax_y = y;
        }
    }
    let sup = if best > 709.0 { f64::INFINITY } else { best.exp() };
    Ok(DampingReport {
        sup,
        argmax_t,
        argmax_y,
        out_of_window,
    })
}

/// Whether the source is read at `t - s` (the Doss representation) or at
/// `t0 + s` (its time reversal) for path time `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceConvention {
    #[default]
    Backward,
    Forward,
}

/// `V_ġ(t, z) = V₀(z) + ġ(t)·z`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeDependentPotential {
    pub base: PotentialSpec,
    pub source: TestFunction,
    pub convention: SourceConvention,
}

impl TimeDependentPotential {
    pub fn new(base: PotentialSpec, source: TestFunction) -> Self {
        Self {
            base,
            source,
            convention: SourceConvention::Backward,
        }
    }

    pub fn time_independent(base: PotentialSpec) -> Self {
        Self::new(base, TestFunction::zero())
    }

    pub fn with_convention(mut self, convention: SourceConvention) -> Self {
        self.convention = convention;
        self
    }

    /// Physical time at which the source is read for path time `s` of an
    /// evolution from `t0` to `t`.
    pub fn source_time(&self, t0: f64, t: f64, s: f64) -> f64 {
        match self.convention {
            SourceConvention::Backward => t - s,
            SourceConvention::Forward => t0 + s,
        }
    }

    pub fn eval(&self, t: f64, z: Complex64) -> Result<Complex64> {
        Ok(self.base.eval(z)? + self.source.eval_all(t)[1] * z)
    }
}

impl PotentialField for TimeDependentPotential {
    fn value(&self, t: f64, z: Complex64) -> Result<Complex64> {
        self.eval(t, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn abs_inverse(n: u32, branch: Branch) -> PotentialSpec {
        PotentialSpec::new(vec![PotentialTerm::InversePowerAbs { a: c(1.0, 0.0), b: 0.0, n }])
            .unwrap()
            .with_branch(branch)
    }

    #[test]
    fn spec_values() {
        let v = PotentialSpec::new(vec![PotentialTerm::sextic(1.0)]).unwrap();
        assert!((v.eval(sqrt_i()).unwrap() - c(0.0, -1.0)).norm() < 1e-14);

        let p = abs_inverse(1, Branch::Principal);
        assert!((p.eval(c(3.0, 0.0)).unwrap() - c(1.0 / 3.0, 0.0)).norm() < 1e-15);
        let expected = c(0.5f64.sqrt(), -(0.5f64.sqrt()));
        assert!((p.eval(sqrt_i()).unwrap() - expected).norm() < 1e-14);

        let plain = PotentialSpec::new(vec![PotentialTerm::InversePowerPlain { a: c(1.0, 0.0), b: 0.0, n: 2 }]).unwrap();
        assert!((plain.eval(c(1.0, 1.0)).unwrap() - c(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn principal_branch_matches_log_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=3 {
            let p = abs_inverse(n, Branch::Principal);
            for _ in 0..200 {
                let z = c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                let direct = (-(n as f64) / 2.0 * (z * z).ln()).exp();
                match p.eval(z) {
                    Ok(v) => assert!((v - direct).norm() < 1e-12 * direct.norm()),
                    Err(e) => assert!(matches!(e, Error::DomainViolation { .. })),
                }
            }
        }
    }

    #[test]
    fn singular_points_are_rejected() {
        let p = abs_inverse(1, Branch::Principal);
        assert!(matches!(p.eval(c(0.0, 0.0)), Err(Error::DomainViolation { .. })));
        assert!(matches!(p.eval(c(0.0, 2.0)), Err(Error::DomainViolation { .. })));
        let s = abs_inverse(1, Branch::Sheet);
        assert!(s.eval(c(0.0, 2.0)).is_ok());
        assert!(matches!(s.eval(sqrt_i() * 2.0), Err(Error::DomainViolation { .. })));
        assert_eq!(s.excluded_points(), vec![0.0]);
        assert!(matches!(s.check_real_point(0.0), Err(Error::SingularPoint { .. })));
    }

    #[test]
    fn real_restriction_is_plain_power() {
        for branch in [Branch::Principal, Branch::Sheet] {
            for n in 1..=4 {
                let v = PotentialSpec::new(vec![PotentialTerm::InversePowerAbs { a: c(0.7, 0.2), b: 1.0, n }])
                    .unwrap()
                    .with_branch(branch);
                for x in [1.5, 2.0, 7.25] {
                    let expected = c(0.7, 0.2) / c(x - 1.0, 0.0).powu(n);
                    assert!((v.eval(c(x, 0.0)).unwrap() - expected).norm() < 1e-15 * expected.norm().max(1.0));
                    let left = c(0.7, 0.2) / (1.0 - (2.0 - x)).abs().powi(n as i32);
                    assert!((v.eval(c(2.0 - x, 0.0)).unwrap() - left).norm() < 1e-14 * left.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn bound_examples() {
        let t1 = PotentialTerm::InversePowerAbs { a: c(1.0, 0.0), b: 0.0, n: 1 };
        let b = doss_bound(&t1, 3.0).unwrap();
        assert!((b - (2.0f64 / 9.0).sqrt()).abs() < 1e-15);
        let t2 = PotentialTerm::InversePowerAbs { a: c(1.0, 0.0), b: 0.0, n: 2 };
        assert!((doss_bound(&t2, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(doss_bound(&t1, 0.0), Err(Error::SingularPoint { .. })));
        let mut last = 0.0;
        for x in [1.0, 0.5, 0.1, 1e-3, 1e-6] {
            let v = doss_bound(&t1, x).unwrap();
            assert!(v > last);
            last = v;
        }
        for branch in [Branch::Principal, Branch::Sheet] {
            let v = abs_inverse(1, branch);
            for k in -1000..=1000 {
                let y = k as f64 * 0.01;
                if let Ok(val) = v.eval(c(3.0, 0.0) + sqrt_i() * y) {
                    assert!(val.norm() <= b * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn bound_holds_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let terms = [
            PotentialTerm::InversePowerAbs { a: c(1.0, 0.0), b: 0.0, n: 1 },
            PotentialTerm::InversePowerAbs { a: c(-0.5, 2.0), b: 1.0, n: 3 },
            PotentialTerm::InversePowerPlain { a: c(2.0, 0.0), b: -1.0, n: 2 },
        ];
        for term in terms {
            for branch in [Branch::Principal, Branch::Sheet] {
                let v = PotentialSpec::new(vec![term.clone()]).unwrap().with_branch(branch);
                for _ in 0..10_000 {
                    let x = rng.random_range(-5.0..5.0);
                    let y = rng.random_range(-20.0..20.0);
                    let Ok(bound) = doss_bound(&term, x) else { continue };
                    if let Ok(val) = v.eval(c(x, 0.0) + sqrt_i() * y) {
                        assert!(val.norm() <= bound * (1.0 + 1e-12), "{term:?} x={x} y={y}");
                    }
                }
            }
        }
    }

    #[test]
    fn horner_matches_power_sum_and_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 0..3usize {
            let deg = 4 * n + 2;
            let mut coefficients: Vec<Complex64> = (0..deg)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            coefficients.push(c(rng.random_range(0.1..2.0), 0.0));
            let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
            let v = PotentialSpec::new(vec![PotentialTerm::Polynomial { coefficients: coefficients.clone() }]).unwrap();
            for _ in 0..100 {
                let r = rng.random_range(0.0..5.0);
                let z = Complex64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU));
                let naive: Complex64 = coefficients
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * z.powu(k as u32) * if k == deg { sign } else { 1.0 })
                    .sum();
                let [val, d1, d2] = v.eval_all(z).unwrap();
                assert!((val - naive).norm() <= 1e-12 * naive.norm().max(1.0));
                let h = 1e-5;
                let fd1 = (v.eval(z + h).unwrap() - v.eval(z - h).unwrap()) / (2.0 * h);
                assert!((fd1 - d1).norm() <= 1e-6 * d1.norm().max(1.0));
                let fd2 = (v.eval(z + h).unwrap() - 2.0 * val + v.eval(z - h).unwrap()) / (h * h);
                assert!((fd2 - d2).norm() <= 1e-3 * d2.norm().max(1.0));
            }
        }
    }

    #[test]
    fn inverse_power_derivatives() {
        for branch in [Branch::Principal, Branch::Sheet] {
            let v = PotentialSpec::new(vec![
                PotentialTerm::InversePowerAbs { a: c(1.0, 0.5), b: 0.3, n: 3 },
                PotentialTerm::InversePowerPlain { a: c(-1.0, 0.0), b: -2.0, n: 2 },
            ])
            .unwrap()
            .with_branch(branch);
            let z = c(1.4, -0.3) + sqrt_i() * 0.7;
            let [val, d1, d2] = v.eval_all(z).unwrap();
            let h = 1e-5;
            let fd1 = (v.eval(z + h).unwrap() - v.eval(z - h).unwrap()) / (2.0 * h);
            let fd2 = (v.eval(z + h).unwrap() - 2.0 * val + v.eval(z - h).unwrap()) / (h * h);
            assert!((fd1 - d1).norm() < 1e-6 * d1.norm());
            assert!((fd2 - d2).norm() < 1e-3 * d2.norm());
        }
    }

    #[test]
    fn valid_polynomials_are_damped_along_the_rotated_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 0..3usize {
            let deg = 4 * n + 2;
            let mut coefficients: Vec<Complex64> = (0..deg)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            coefficients.push(c(1.0, 0.0));
            let v = PotentialSpec::new(vec![PotentialTerm::Polynomial { coefficients }]).unwrap();
            for x in [-1.0, 0.0, 2.0] {
                let mut last = f64::INFINITY;
                for y in [10.0, 100.0, 1000.0] {
                    let r = (-Complex64::i() * v.eval(c(x, 0.0) + sqrt_i() * y).unwrap()).re;
                    assert!(r < 0.0 && r < last, "n={n} x={x} y={y}: {r}");
                    last = r;
                }
            }
        }
    }

    #[test]
    fn polynomial_validation() {
        assert!(PotentialSpec::new(vec![PotentialTerm::Polynomial { coefficients: vec![c(1.0, 0.0); 4] }]).is_err());
        let mut coefficients = vec![c(0.0, 0.0); 7];
        coefficients[6] = c(-1.0, 0.0);
        assert!(PotentialSpec::new(vec![PotentialTerm::Polynomial { coefficients }]).is_err());
        assert!(PotentialSpec::new(vec![PotentialTerm::InversePowerAbs { a: c(1.0, 0.0), b: 0.0, n: 0 }]).is_err());
    }

    #[test]
    fn damping_examples() {
        let v = PotentialSpec::new(vec![PotentialTerm::sextic(1.0)]).unwrap();
        let zero = TestFunction::zero();
        let r = scaled_damping_check(&v, c(0.0, 0.0), 1.0, &zero, 10.0).unwrap();
        assert_eq!(r.sup, 1.0);
        assert_eq!(r.argmax_y, 0.0);
        let a = scaled_damping_check(&v, c(1.0, 0.0), 1.0, &zero, 10.0).unwrap();
        let b = scaled_damping_check(&v, c(1.0, 0.0), 1.0, &zero, 100.0).unwrap();
        assert!(a.sup.is_finite());
        assert_eq!(a.sup, b.sup);

        let q = PotentialSpec::quadratic(0.0, 0.0, 0.6);
        assert!(scaled_damping_check(&q, c(0.0, 0.0), 1.0, &zero, 1.0).unwrap().out_of_window);
        assert!(q.validate(Some(1.0)).is_err());
        let h = PotentialSpec::quadratic(0.0, 0.0, 0.5);
        assert!(h.validate(Some(0.5)).is_ok());
        assert!(!scaled_damping_check(&h, c(0.0, 0.0), 0.5, &zero, 1.0).unwrap().out_of_window);
    }

    #[test]
    fn damping_overflow_is_infinite() {
        let q = PotentialSpec::quadratic(0.0, 0.0, 10.0);
        let r = scaled_damping_check(&q, c(0.0, 0.0), 1.0, &TestFunction::zero(), 100.0).unwrap();
        assert!(r.sup.is_infinite());
        assert!(r.argmax_y.abs() > 8.0);
    }

    #[test]
    fn source_term_is_linear_in_z() {
        let v = TimeDependentPotential::new(PotentialSpec::zero(), TestFunction::unit_bump());
        let val = v.eval(1.0, c(2.0, 1.0)).unwrap();
        let gdot = -(-0.5f64).exp();
        assert!((val - c(2.0, 1.0) * gdot).norm() < 1e-15);
        assert_eq!(v.source_time(0.1, 0.5, 0.2), 0.3);
        let f = v.clone().with_convention(SourceConvention::Forward);
        assert!((f.source_time(0.1, 0.5, 0.2) - 0.3).abs() < 1e-15);
        assert_eq!(f.source_time(0.0, 0.5, 0.1), 0.1);
    }
}
