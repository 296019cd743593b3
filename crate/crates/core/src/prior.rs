//! Product prior: uniform on the order `s`, log-Gaussian on the coefficient
//! through a truncated cosine Karhunen–Loève expansion `a = exp(−v)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Coefficient, Mesh1D};

/// Uniform prior on `[s_lo, s_hi] ⊂ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderPrior {
    pub s_lo: f64,
    pub s_hi: f64,
}

impl OrderPrior {
    pub fn new(s_lo: f64, s_hi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s_lo) || !(0.0..=1.0).contains(&s_hi) || s_lo >= s_hi {
            return Err(Error::InvalidPrior(format!(
                "order support [{s_lo}, {s_hi}] must be a non-degenerate subinterval of [0, 1]"
            )));
        }
        Ok(Self { s_lo, s_hi })
    }

    pub fn unit() -> Self {
        Self { s_lo: 0.0, s_hi: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.s_hi - self.s_lo
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.s_lo && s <= self.s_hi
    }

    pub fn density(&self, s: f64) -> f64 {
        if self.contains(s) {
            1.0 / self.width()
        } else {
            0.0
        }
    }

    pub fn log_density(&self, s: f64) -> f64 {
        if self.contains(s) {
            -self.width().ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.s_lo + self.width() * rng.random::<f64>()
    }

    /// Reflects `s` back into the support (mirror at both ends).
    pub fn reflect(&self, mut s: f64) -> f64 {
        let w = self.width();
        // fold onto one period of length 2w
        s = (s - self.s_lo).rem_euclid(2.0 * w);
        if s > w {
            s = 2.0 * w - s;
        }
        self.s_lo + s
    }
}

/// `v(x) = shift + σ_v Σ_{k=1}^{n_kl} k^{−τ} ξ_k cos(kπ(x − x_left)/L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPrior {
    pub n_kl: usize,
    pub tau: f64,
    pub sigma_v: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub mean_shift: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl Default for CoefficientPrior {
    fn default() -> Self {
        Self {
            n_kl: 16,
            tau: 2.0,
            sigma_v: 0.5,
            mean_shift: 0.0,
        }
    }
}

impl CoefficientPrior {
    pub fn new(n_kl: usize, tau: f64, sigma_v: f64) -> Result<Self> {
        let p = Self {
            n_kl,
            tau,
            sigma_v,
            mean_shift: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Adds a constant to `v`, so that `ξ = 0` gives `a ≡ e^{−c}`.
    pub fn with_mean_shift(mut self, c: f64) -> Self {
        self.mean_shift = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.5) {
            return Err(Error::InvalidPrior(format!("decay τ = {} must exceed 1/2", self.tau)));
        }
        if !(self.sigma_v.is_finite() && self.sigma_v >= 0.0) {
            return Err(Error::InvalidPrior(format!(
                "amplitude σ_v = {} must be ≥ 0",
                self.sigma_v
            )));
        }
        if !self.mean_shift.is_finite() {
            return Err(Error::InvalidPrior("mean shift must be finite".into()));
        }
        Ok(())
    }

    pub fn log_field(&self, xi: &[f64], mesh: &Mesh1D, x: f64) -> f64 {
        let u = PI * (x - mesh.x_left) / mesh.length();
        self.mean_shift
            + self.sigma_v
                * xi.iter()
                    .enumerate()
                    .map(|(i, z)| {
                        let k = (i + 1) as f64;
                        k.powf(-self.tau) * z * (k * u).cos()
                    })
                    .sum::<f64>()
    }

    /// Cell values `exp(−v(midpoint))`.
    pub fn realize(&self, xi: &[f64], mesh: &Mesh1D) -> Result<Coefficient> {
        if xi.len() != self.n_kl {
            return Err(Error::DimensionMismatch {
                what: "KL coordinates",
                expected: self.n_kl,
                actual: xi.len(),
            });
        }
        Coefficient::from_fn(mesh, |x| (-self.log_field(xi, mesh, x)).exp())
    }

    /// `max_c |v(midpoint_c)|`.
    pub fn log_field_sup(&self, xi: &[f64], mesh: &Mesh1D) -> f64 {
        (0..mesh.n_cells)
            .map(|c| self.log_field(xi, mesh, mesh.cell_midpoint(c)).abs())
            .fold(0.0, f64::max)
    }
}

/// `u = (s, ξ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub s: f64,
    pub xi: Vec<f64>,
}

/// Product prior `μ₀ = μ₀,₁ ⊗ μ₀,₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub order: OrderPrior,
    pub coefficient: CoefficientPrior,
}

/// Flat on-disk prior block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default = "default_s_lo")]
    pub s_lo: f64,
    #[serde(default = "default_s_hi")]
    pub s_hi: f64,
    #[serde(default = "default_n_kl")]
    pub n_kl: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_sigma_v")]
    pub sigma_v: f64,
}

fn default_s_lo() -> f64 {
    0.05
}
fn default_s_hi() -> f64 {
    0.95
}
fn default_n_kl() -> usize {
    16
}
fn default_tau() -> f64 {
    2.0
}
fn default_sigma_v() -> f64 {
    0.5
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            s_lo: default_s_lo(),
            s_hi: default_s_hi(),
            n_kl: default_n_kl(),
            tau: default_tau(),
            sigma_v: default_sigma_v(),
        }
    }
}

impl PriorConfig {
    pub fn build(&self) -> Result<Prior> {
        Ok(Prior {
            order: OrderPrior::new(self.s_lo, self.s_hi)?,
            coefficient: CoefficientPrior::new(self.n_kl, self.tau, self.sigma_v)?,
        })
    }
}

impl Prior {
    pub fn new(order: OrderPrior, coefficient: CoefficientPrior) -> Result<Self> {
        OrderPrior::new(order.s_lo, order.s_hi)?;
        coefficient.validate()?;
        Ok(Self { order, coefficient })
    }

    pub fn n_kl(&self) -> usize {
        self.coefficient.n_kl
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamPoint {
        let s = self.order.sample(rng);
        let xi = (0..self.n_kl()).map(|_| rng.sample(StandardNormal)).collect();
        ParamPoint { s, xi }
    }

    /// Reproducible draw from `ChaCha8(seed)`.
    pub fn sample_seeded(&self, seed: u64) -> ParamPoint {
        self.sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// `log U(s) + log N(ξ; 0, I)`; `−∞` outside the order support.
    pub fn log_density(&self, u: &ParamPoint) -> f64 {
        let ls = self.order.log_density(u.s);
        if ls == f64::NEG_INFINITY {
            return ls;
        }
        let sq: f64 = u.xi.iter().map(|z| z * z).sum();
        ls - 0.5 * u.xi.len() as f64 * (2.0 * PI).ln() - 0.5 * sq
    }

    pub fn realize_coefficient(&self, xi: &[f64], mesh: &Mesh1D) -> Result<Coefficient> {
        self.coefficient.realize(xi, mesh)
    }
}

pub fn sample_prior(prior: &Prior, seed: u64) -> ParamPoint {
    prior.sample_seeded(seed)
}

pub fn realize_coefficient(prior: &Prior, xi: &[f64], mesh: &Mesh1D) -> Result<Coefficient> {
    prior.realize_coefficient(xi, mesh)
}

pub fn log_prior_density(prior: &Prior, u: &ParamPoint) -> f64 {
    prior.log_density(u)
}
