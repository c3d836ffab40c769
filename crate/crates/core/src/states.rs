//! Hermite initial states `f_m`, evaluable at complex arguments together with
//! their first two derivatives.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::numerics::{sqrt_i, Complex64};

/// Largest Hermite index accepted by validation.
pub const MAX_HERMITE_INDEX: u32 = 12;

/// Largest exponent for which `e^{x}` is evaluated.
const MAX_EXPONENT: f64 = 700.0;

/// Finite linear combination `Σ c_j f_{m_j}` of Hermite functions.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    terms: Vec<(Complex64, u32)>,
}

impl InitialState {
    /// The orthonormal Hermite function `f_m`.
    pub fn hermite(m: u32) -> Self {
        Self {
            terms: vec![(Complex64::new(1.0, 0.0), m)],
        }
    }

    pub fn combination(terms: Vec<(Complex64, u32)>) -> Result<Self> {
        let state = Self { terms };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Config("initial state has no terms".into()));
        }
        if let Some((_, m)) = self.terms.iter().find(|(_, m)| *m > MAX_HERMITE_INDEX) {
            return Err(Error::Config(format!(
                "Hermite index {m} exceeds the maximum {MAX_HERMITE_INDEX}"
            )));
        }
        Ok(())
    }

    pub fn terms(&self) -> &[(Complex64, u32)] {
        &self.terms
    }

    pub fn max_index(&self) -> u32 {
        self.terms.iter().map(|(_, m)| *m).max().unwrap_or(0)
    }

    /// `[f(z), f'(z), f''(z)]`.
    pub fn eval_all(&self, z: Complex64) -> Result<[Complex64; 3]> {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (c, m) in &self.terms {
            let v = hermite_function(*m, z)?;
            for (o, vi) in out.iter_mut().zip(v) {
                *o += c * vi;
            }
        }
        Ok(out)
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        if let [(c, m)] = self.terms.as_slice() {
            return Ok(c * hermite_value(*m, z)?);
        }
        Ok(self.eval_all(z)?[0])
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            terms: self.terms.iter().map(|(c, m)| (c * factor, *m)).collect(),
        }
    }

    pub fn plus(&self, other: &InitialState) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self { terms }
    }
}

/// `f^{(order)}(z)` for `order` in `0..=2`.
pub fn eval_state(state: &InitialState, z: Complex64, derivative_order: u8) -> Result<Complex64> {
    match derivative_order {
        0 => state.eval(z),
        1 | 2 => Ok(state.eval_all(z)?[derivative_order as usize]),
        d => Err(Error::Config(format!("derivative order {d} not supported (0..=2)"))),
    }
}

fn normalization(m: u32) -> f64 {
    // (2^m m!)^{-1/2} π^{-1/4}
    let mut log = -0.25 * PI.ln();
    for k in 1..=m {
        log -= 0.5 * (2.0 * k as f64).ln();
    }
    log.exp()
}

fn gaussian_factor(z: Complex64) -> Result<Complex64> {
    let e = -0.5 * z * z;
    if e.re > MAX_EXPONENT || !e.re.is_finite() {
        return Err(Error::AmplitudeOverflow { z });
    }
    Ok(e.exp())
}

/// Physicists' Hermite polynomials `(H_{m-2}, H_{m-1}, H_m)`.
fn hermite_polys(m: u32, z: Complex64) -> (Complex64, Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    let mut h_prev2 = zero;
    let mut h_prev = zero;
    let mut h = Complex64::new(1.0, 0.0);
    for k in 0..m {
        let next = 2.0 * z * h - 2.0 * k as f64 * h_prev;
        h_prev2 = h_prev;
        h_prev = h;
        h = next;
    }
    (h_prev2, h_prev, h)
}

fn hermite_value(m: u32, z: Complex64) -> Result<Complex64> {
    let g = gaussian_factor(z)?;
    let (_, _, h) = hermite_polys(m, z);
    let v = normalization(m) * h * g;
    check_finite(v, z)
}

/// `[f_m(z), f_m'(z), f_m''(z)]` from `f_m = N_m H_m(z) e^{-z²/2}`.
pub fn hermite_function(m: u32, z: Complex64) -> Result<[Complex64; 3]> {
    let g = normalization(m) * gaussian_factor(z)?;
    let (h2, h1, h) = hermite_polys(m, z);
    let mf = m as f64;
    let dh = 2.0 * mf * h1;
    let ddh = 4.0 * mf * (mf - 1.0) * h2;
    let v0 = g * h;
    let v1 = g * (dh - z * h);
    let v2 = g * (ddh - 2.0 * z * dh + (z * z - 1.0) * h);
    Ok([check_finite(v0, z)?, check_finite(v1, z)?, check_finite(v2, z)?])
}

fn check_finite(v: Complex64, z: Complex64) -> Result<Complex64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::AmplitudeOverflow { z })
    }
}

/// Rectangle of base points `z` for the growth probe; `n = 1` samples the
/// lower-left corner only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZBox {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub n: usize,
}

impl ZBox {
    pub fn point(z: Complex64) -> Self {
        Self {
            re: (z.re, z.re),
            im: (z.im, z.im),
            n: 1,
        }
    }

    fn points(&self) -> Vec<Complex64> {
        if self.n <= 1 {
            return vec![Complex64::new(self.re.0, self.im.0)];
        }
        let step = |(a, b): (f64, f64), k: usize| a + (b - a) * k as f64 / (self.n - 1) as f64;
        let mut out = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.push(Complex64::new(step(self.re, i), step(self.im, j)));
            }
        }
        out
    }
}

/// Shape of the `y`-power in the growth envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrowthEnvelope {
    /// `|y|^{m+l}`; the point `y = 0` is left out of the sample grid.
    #[default]
    Power,
    /// `max(1, |y|)^{m+l}`, which also bounds the function near `y = 0`.
    FlooredPower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteGrowthReport {
    /// Smallest constant satisfying the envelope on `|y| ≤ 10`.
    pub c: f64,
    /// The same constant on the doubled range `|y| ≤ 20`.
    pub c_extended: f64,
    pub passes: bool,
    pub argmax_z: Complex64,
    pub argmax_y: f64,
}

const PROBE_DY: f64 = 0.01;
const PROBE_Y_MAX: f64 = 10.0;

/// Fits the smallest `c` with
/// `|f^{(l)}(z + √i·y)| ≤ c·|y|^{m+l}·e^{(1/2 + 1/(√2 ε))|z|²}·e^{ε y²/2}`
/// over `z` in `z_box` and a grid of `|y| ≤ 10`. The probe passes when `c`
/// is finite and does not grow when the `y` range is doubled.
pub fn hermite_growth_probe(
    state: &InitialState,
    l: u8,
    z_box: &ZBox,
    epsilon: f64,
    envelope: GrowthEnvelope,
) -> HermiteGrowthReport {
    let failed = HermiteGrowthReport {
        c: f64::INFINITY,
        c_extended: f64::INFINITY,
        passes: false,
        argmax_z: Complex64::new(f64::NAN, f64::NAN),
        argmax_y: f64::NAN,
    };
    if !(epsilon > 0.0) || l > 2 {
        return failed;
    }
    let power = (state.max_index() + l as u32) as f64;
    let z_coeff = 0.5 + 1.0 / (SQRT_2 * epsilon);
    let c = sqrt_i();
    let k_max = (PROBE_Y_MAX / PROBE_DY).round() as i64;

    let mut best = f64::NEG_INFINITY;
    let mut best_ext = f64::NEG_INFINITY;
    let mut argmax = (failed.argmax_z, failed.argmax_y);
    for z in z_box.points() {
        let z_term = z_coeff * z.norm_sqr();
        for k in -2 * k_max..=2 * k_max {
            if k == 0 && envelope == GrowthEnvelope::Power {
                continue;
            }
            let y = k as f64 * PROBE_DY;
            let value = match eval_state(state, z + c * y, l) {
                Ok(v) => v.norm(),
                Err(_) => return failed,
            };
            let y_env = match envelope {
                GrowthEnvelope::Power => y.abs(),
                GrowthEnvelope::FlooredPower => y.abs().max(1.0),
            };
            let log_ratio = value.ln() - power * y_env.ln() - z_term - 0.5 * epsilon * y * y;
            if log_ratio.is_nan() {
                return failed;
            }
            if k.abs() <= k_max && log_ratio > best {
                best = log_ratio;
                argmax = (z, y);
            }
            best_ext = best_ext.max(log_ratio);
        }
    }
    let c_val = best.exp();
    let c_ext = best_ext.exp();
    HermiteGrowthReport {
        c: c_val,
        c_extended: c_ext,
        passes: c_val.is_finite() && c_ext <= c_val * (1.0 + 1e-9),
        argmax_z: argmax.0,
        argmax_y: argmax.1,
    }
}
