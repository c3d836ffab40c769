//! Discretized real Brownian paths and path-time integrals along
//! complex-scaled paths `z + √i·B_s`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{sqrt_i, Complex64, QuadratureRule};

/// Uniform grid `t_start = s_0 < s_1 < … < s_n = t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_start >= 0.0 && t_end > t_start && t_end.is_finite()) {
            return Err(Error::Config(format!(
                "time grid needs 0 <= t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        if n_steps < 1 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        Ok(Self {
            t_start,
            t_end,
            n_steps,
        })
    }

    /// Grid on `[0, length]`.
    pub fn span(length: f64, n_steps: usize) -> Result<Self> {
        Self::new(0.0, length, n_steps)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    pub fn length(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t_start + self.dt() * k as f64
        }
    }
}

/// Generator for path `path_index` of the stream keyed by `seed`.
///
/// ChaCha is a counter-mode generator: the stream id selects the path and the
/// block counter the position along it, so draw `k` of a path is a pure
/// function of `(seed, path_index, k)`.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Fills `out` with the standard normal increments `ξ_1, …, ξ_n` of a path.
pub fn fill_normals(seed: u64, path_index: u64, out: &mut [f64]) {
    let mut rng = path_rng(seed, path_index);
    for x in out.iter_mut() {
        *x = rng.sample(StandardNormal);
    }
}

/// Builds `B_0 = 0, B_k = B_{k-1} + sqrt(dt)·ξ_k` into `values` (length n+1).
pub fn brownian_from_normals(normals: &[f64], dt: f64, values: &mut Vec<f64>) {
    values.clear();
    values.reserve(normals.len() + 1);
    let sd = dt.sqrt();
    let mut b = 0.0;
    values.push(b);
    for xi in normals {
        b += sd * xi;
        values.push(b);
    }
}

/// Seed of a child stream, e.g. the inner paths of a nested estimator.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ 0x6a09_e667_f3bc_c909).wrapping_add(index))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    values: Vec<f64>,
    sup_norm: f64,
}

impl BrownianPath {
    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps() + 1 || values[0] != 0.0 {
            return Err(Error::Config(
                "path values must start at 0 and have one entry per grid node".into(),
            ));
        }
        let sup_norm = discrete_sup(&values);
        Ok(Self {
            grid,
            values,
            sup_norm,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Maximum of `|B|` over the grid nodes.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn endpoint(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Sup-norm with a Brownian-bridge correction between nodes.
    ///
    /// The maximum and the minimum of each bridge segment are drawn from their
    /// exact marginal laws with independent uniforms, which ignores their
    /// (weak) dependence. The discrete maximum underestimates the continuous
    /// one; this corrected value is closer to it.
    pub fn bridge_sup_norm(&self, seed: u64, path_index: u64) -> f64 {
        let mut rng = path_rng(derive_seed(seed, u64::MAX), path_index);
        let dt = self.grid.dt();
        let mut sup = self.sup_norm;
        for w in self.values.windows(2) {
            let (a, b) = (w[0], w[1]);
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = 1.0 - rng.random::<f64>();
            let spread1 = ((b - a) * (b - a) - 2.0 * dt * u1.ln()).sqrt();
            let spread2 = ((b - a) * (b - a) - 2.0 * dt * u2.ln()).sqrt();
            let hi = 0.5 * (a + b + spread1);
            let lo = 0.5 * (a + b - spread2);
            sup = sup.max(hi.abs()).max(lo.abs());
        }
        sup
    }
}

pub(crate) fn discrete_sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Draws path `path_index` of the stream `seed` on `grid`. Identical inputs
/// give bit-identical paths on any thread.
pub fn sample_path(grid: &TimeGrid, seed: u64, path_index: u64) -> BrownianPath {
    let mut normals = vec![0.0; grid.n_steps()];
    fill_normals(seed, path_index, &mut normals);
    let mut values = Vec::new();
    brownian_from_normals(&normals, grid.dt(), &mut values);
    let sup_norm = discrete_sup(&values);
    BrownianPath {
        grid: *grid,
        values,
        sup_norm,
    }
}

/// A complex potential `V(t, z)`.
pub trait PotentialField: Sync {
    fn value(&self, t: f64, z: Complex64) -> Result<Complex64>;
}

impl<F> PotentialField for F
where
    F: Fn(f64, Complex64) -> Result<Complex64> + Sync,
{
    fn value(&self, t: f64, z: Complex64) -> Result<Complex64> {
        self(t, z)
    }
}

/// Trapezoidal approximation of `∫_0^{t-t0} V(t - s, z + √i·B_s) ds` on the
/// path's grid.
pub fn path_potential_integral<V: PotentialField + ?Sized>(
    path: &BrownianPath,
    potential: &V,
    z: Complex64,
    t: f64,
    t0: f64,
) -> Result<Complex64> {
    let grid = path.grid();
    let length = t - t0;
    if (grid.length() - length).abs() > 1e-9 * length.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "path grid length {} does not match t - t0 = {}",
            grid.length(),
            length
        )));
    }
    let c = sqrt_i();
    let dt = grid.dt();
    let n = grid.n_steps();
    let mut sum = Complex64::new(0.0, 0.0);
    for (k, &b) in path.values().iter().enumerate() {
        let s = dt * k as f64;
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        let v = potential.value(t - s, z + c * b).map_err(|e| match e {
            Error::DomainViolation { z, .. } => Error::DomainViolation { z, s: Some(s) },
            other => other,
        })?;
        sum += v * w;
    }
    Ok(sum * dt)
}

/// Value of the reflection bound `2·(2/(πT))^{1/2} ∫_0^∞ k(u) e^{-u²/2T} du`
/// with the integral truncated at `u_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupnormBound {
    pub value: f64,
    pub u_max: f64,
    /// The same rule applied on `[u_max, 2·u_max]`: an estimate of the mass lost
    /// to truncation.
    pub truncation_error: f64,
}

/// Evaluates the sup-norm bound for `k ≥ 0`. The default truncation is
/// `10·sqrt(T)`; `quad` supplies the rule kind and order.
pub fn supnorm_bound_rhs<K: Fn(f64) -> f64>(
    k: K,
    horizon: f64,
    quad: &QuadratureRule,
    u_max: Option<f64>,
) -> Result<SupnormBound> {
    if !(horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    let u_max = u_max.unwrap_or(10.0 * horizon.sqrt());
    let prefactor = 2.0 * (2.0 / (PI * horizon)).sqrt();
    let integrand = |u: f64| k(u) * (-u * u / (2.0 * horizon)).exp();
    let main = quad.on_interval(0.0, u_max)?.integrate_real(integrand)?;
    let tail = quad.on_interval(u_max, 2.0 * u_max)?.integrate_real(integrand)?;
    Ok(SupnormBound {
        value: prefactor * main,
        u_max,
        truncation_error: prefactor * tail.abs(),
    })
}
