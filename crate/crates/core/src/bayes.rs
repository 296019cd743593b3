//! Likelihood potential, grid posteriors on the order `s`, and pCN MCMC for
//! the joint `(s, ξ)` posterior.

use std::io::Write;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{DataVector, OrderSweepModel};
use crate::mesh::{AssembledOperator, Coefficient, Mesh1D};
use crate::prior::{CoefficientPrior, OrderPrior, ParamPoint, Prior};
use crate::spectral::{eigendecompose, Field};

/// Parameter-to-observation map `G(u)`.
pub trait ForwardModel: Sync {
    /// Number of KL coordinates the model reads from `u.xi`.
    fn n_kl(&self) -> usize;
    fn observe(&self, u: &ParamPoint) -> Result<Vec<f64>>;
}

/// Coefficient held fixed; only `s` varies. `u.xi` is ignored.
#[derive(Debug, Clone)]
pub struct OrderOnlyModel {
    sweep: OrderSweepModel,
}

impl OrderOnlyModel {
    pub fn new(mesh: &Mesh1D, a: &Coefficient, f: &Field, points: &[f64], modes: usize) -> Result<Self> {
        let op = AssembledOperator::assemble(mesh, a)?;
        let eig = eigendecompose(&op, modes.min(op.n_nodes() - 1))?;
        Ok(Self {
            sweep: OrderSweepModel::new(mesh, &eig, f, points)?,
        })
    }

    pub fn from_sweep(sweep: OrderSweepModel) -> Self {
        Self { sweep }
    }

    pub fn observe_s(&self, s: f64) -> Result<Vec<f64>> {
        self.sweep.observe(s)
    }
}

impl ForwardModel for OrderOnlyModel {
    fn n_kl(&self) -> usize {
        0
    }

    fn observe(&self, u: &ParamPoint) -> Result<Vec<f64>> {
        self.sweep.observe(u.s)
    }
}

/// Joint model: `a = exp(−v(ξ))`. The eigendecomposition for the most recent
/// `ξ` is cached, so repeated evaluations in `s` cost one `K`-term sum each.
#[derive(Debug)]
pub struct JointModel {
    mesh: Mesh1D,
    prior: CoefficientPrior,
    f: Field,
    points: Vec<f64>,
    modes: usize,
    cache: Mutex<Option<(Vec<f64>, Arc<OrderSweepModel>)>>,
}

impl JointModel {
    pub fn new(mesh: &Mesh1D, prior: CoefficientPrior, f: Field, points: &[f64], modes: usize) -> Result<Self> {
        prior.validate()?;
        if f.len() != mesh.n_nodes() {
            return Err(Error::DimensionMismatch {
                what: "source field",
                expected: mesh.n_nodes(),
                actual: f.len(),
            });
        }
        Ok(Self {
            mesh: mesh.clone(),
            prior,
            f,
            points: points.to_vec(),
            modes: modes.min(mesh.n_nodes() - 1),
            cache: Mutex::new(None),
        })
    }

    fn sweep_for(&self, xi: &[f64]) -> Result<Arc<OrderSweepModel>> {
        if let Some((cached, sweep)) = self.cache.lock().expect("cache poisoned").as_ref() {
            if cached.as_slice() == xi {
                return Ok(Arc::clone(sweep));
            }
        }
        let a = self.prior.realize(xi, &self.mesh)?;
        let op = AssembledOperator::assemble(&self.mesh, &a)?;
        let eig = eigendecompose(&op, self.modes)?;
        let sweep = Arc::new(OrderSweepModel::new(&self.mesh, &eig, &self.f, &self.points)?);
        *self.cache.lock().expect("cache poisoned") = Some((xi.to_vec(), Arc::clone(&sweep)));
        Ok(sweep)
    }
}

impl ForwardModel for JointModel {
    fn n_kl(&self) -> usize {
        self.prior.n_kl
    }

    fn observe(&self, u: &ParamPoint) -> Result<Vec<f64>> {
        self.sweep_for(&u.xi)?.observe(u.s)
    }
}

/// `Φ = ½ Σ (y_j − G_j)² / γ²`.
pub fn potential_of(g: &[f64], data: &DataVector) -> Result<f64> {
    if g.len() != data.y.len() {
        return Err(Error::DimensionMismatch {
            what: "model output vs data",
            expected: data.y.len(),
            actual: g.len(),
        });
    }
    if !(data.gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level γ = {} must be positive",
            data.gamma
        )));
    }
    let inv = 1.0 / (data.gamma * data.gamma);
    Ok(0.5 * inv * data.y.iter().zip(g).map(|(y, g)| (y - g) * (y - g)).sum::<f64>())
}

/// `Φ(u; y)`. Empty data gives `Φ ≡ 0` without a forward solve.
pub fn potential(model: &dyn ForwardModel, u: &ParamPoint, data: &DataVector) -> Result<f64> {
    if data.y.is_empty() {
        return Ok(0.0);
    }
    potential_of(&model.observe(u)?, data)
}

/// Grid posterior on `s` with trapezoid-normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDensity1D {
    pub s_grid: Vec<f64>,
    pub weights: Vec<f64>,
    /// `log Z`, `Z = ∫ exp(−Φ(s)) dμ₀(s)`.
    pub log_z: f64,
}

pub fn trapezoid(x: &[f64], w: &[f64]) -> f64 {
    x.windows(2)
        .zip(w.windows(2))
        .map(|(x, w)| 0.5 * (x[1] - x[0]) * (w[0] + w[1]))
        .sum()
}

pub const DEFAULT_GRID_POINTS: usize = 401;

impl PosteriorDensity1D {
    /// Normalizes `log prior + log likelihood` values given on `s_grid`.
    pub fn from_log_weights(s_grid: Vec<f64>, log_w: &[f64]) -> Result<Self> {
        if s_grid.len() != log_w.len() || s_grid.len() < 2 {
            return Err(Error::DimensionMismatch {
                what: "log weights",
                expected: s_grid.len(),
                actual: log_w.len(),
            });
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::IllConditionedNormalization(format!(
                "maximum log weight is {max}"
            )));
        }
        let raw: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let mass = trapezoid(&s_grid, &raw);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::IllConditionedNormalization(format!("grid mass {mass}")));
        }
        let weights = raw.iter().map(|w| w / mass).collect();
        Ok(Self {
            s_grid,
            weights,
            log_z: max + mass.ln(),
        })
    }

    pub fn len(&self) -> usize {
        self.s_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_grid.is_empty()
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.s_grid, &self.weights)
    }

    pub fn summary(&self) -> PosteriorSummary {
        let x = &self.s_grid;
        let w = &self.weights;
        let mass = self.integral();
        let sw: Vec<f64> = x.iter().zip(w).map(|(s, w)| s * w).collect();
        let mean = trapezoid(x, &sw) / mass;
        let vw: Vec<f64> = x.iter().zip(w).map(|(s, w)| (s - mean).powi(2) * w).collect();
        let std = (trapezoid(x, &vw) / mass).max(0.0).sqrt();
        let imax = w
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > w[best] { i } else { best });

        let mut cdf = vec![0.0; x.len()];
        for i in 1..x.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (x[i] - x[i - 1]) * (w[i - 1] + w[i]) / mass;
        }
        let quantile = |q: f64| {
            let i = cdf.partition_point(|c| *c < q).clamp(1, x.len() - 1);
            let (c0, c1) = (cdf[i - 1], cdf[i]);
            let t = if c1 > c0 {
                ((q - c0) / (c1 - c0)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            x[i - 1] + t * (x[i] - x[i - 1])
        };
        PosteriorSummary {
            mean,
            std,
            mode: x[imax],
            ci_lo: quantile(0.05),
            ci_hi: quantile(0.95),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,weight")?;
        for (s, v) in self.s_grid.iter().zip(&self.weights) {
            writeln!(w, "{s},{v}")?;
        }
        Ok(())
    }
}

/// Mean, standard deviation, mode and equal-tailed 90% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub std: f64,
    pub mode: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// `μ^y(s) ∝ π₀(s) exp(−Φ(s, ξ; y))` on a uniform grid over the prior support,
/// with `ξ` held fixed.
pub fn posterior_grid_1d(
    model: &dyn ForwardModel,
    data: &DataVector,
    prior: &OrderPrior,
    xi: &[f64],
    grid_points: usize,
) -> Result<PosteriorDensity1D> {
    if grid_points < 51 {
        return Err(Error::InvalidArgument(format!(
            "need at least 51 grid points, got {grid_points}"
        )));
    }
    let s_grid = uniform_grid(prior.s_lo, prior.s_hi, grid_points);
    let log_w = s_grid
        .par_iter()
        .map(|&s| {
            let u = ParamPoint { s, xi: xi.to_vec() };
            Ok(prior.log_density(s) - potential(model, &u, data)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    PosteriorDensity1D::from_log_weights(s_grid, &log_w)
}

/// Proposal for the order `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OrderProposal {
    /// `s′ = reflect(s + step·ζ)` into the support.
    ReflectedWalk { step: f64 },
    /// `s′ ~ U[s_lo, s_hi]`.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_steps: usize,
    pub beta: f64,
    pub order_proposal: OrderProposal,
    /// Starting point; drawn from the prior when absent.
    pub init: Option<ParamPoint>,
}

impl McmcConfig {
    pub fn new(n_steps: usize, beta: f64) -> Self {
        Self {
            n_steps,
            beta,
            order_proposal: OrderProposal::ReflectedWalk { step: 0.05 },
            init: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be ≥ 1".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pCN β = {} must lie in (0, 1]",
                self.beta
            )));
        }
        if let OrderProposal::ReflectedWalk { step } = self.order_proposal {
            if !(step.is_finite() && step >= 0.0) {
                return Err(Error::InvalidArgument(format!("order step {step} must be ≥ 0")));
            }
        }
        Ok(())
    }
}

/// Markov chain output; `samples[i]` is the state after step `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<ParamPoint>,
    pub potentials: Vec<f64>,
    pub accepted: Vec<bool>,
    pub acceptance_rate: f64,
    pub beta: f64,
    pub order_proposal: OrderProposal,
    /// Longest run of consecutive rejections.
    pub longest_rejection_run: usize,
}

/// Window over which zero acceptance is flagged.
pub const STALL_WINDOW: usize = 1000;

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True when some window of [`STALL_WINDOW`] steps accepted nothing.
    pub fn stalled(&self) -> bool {
        self.longest_rejection_run >= STALL_WINDOW
    }

    pub fn s_values(&self) -> Vec<f64> {
        self.samples.iter().map(|u| u.s).collect()
    }

    pub fn xi_component(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|u| u.xi[k]).collect()
    }

    /// Summary of the `s` marginal after discarding `burn_in` steps.
    pub fn summary(&self, burn_in: usize) -> Result<PosteriorSummary> {
        let s: Vec<f64> = self.samples.iter().skip(burn_in).map(|u| u.s).collect();
        sample_summary(&s)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.samples.first().map_or(0, |u| u.xi.len());
        write!(w, "step,s")?;
        for k in 1..=n {
            write!(w, ",xi_{k}")?;
        }
        writeln!(w, ",phi,accepted")?;
        for (i, ((u, phi), acc)) in self
            .samples
            .iter()
            .zip(&self.potentials)
            .zip(&self.accepted)
            .enumerate()
        {
            write!(w, "{},{}", i + 1, u.s)?;
            for z in &u.xi {
                write!(w, ",{z}")?;
            }
            writeln!(w, ",{phi},{}", u8::from(*acc))?;
        }
        Ok(())
    }
}

/// Sample mean/std, histogram mode (50 bins) and sorted-quantile 90% interval.
pub fn sample_summary(values: &[f64]) -> Result<PosteriorSummary> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty chain".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let i = pos.floor() as usize;
        let j = (i + 1).min(sorted.len() - 1);
        sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
    };
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let bins = 50;
    let mode = if hi > lo {
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for v in &sorted {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
        let best = counts
            .iter()
            .enumerate()
            .fold(0, |b, (i, c)| if *c > counts[b] { i } else { b });
        lo + (best as f64 + 0.5) * width
    } else {
        lo
    };
    Ok(PosteriorSummary {
        mean,
        std: var.sqrt(),
        mode,
        ci_lo: quantile(0.05),
        ci_hi: quantile(0.95),
    })
}

/// Metropolis acceptance for a prior-reversible proposal.
pub fn accept_probability(phi_current: f64, phi_proposed: f64) -> f64 {
    (phi_current - phi_proposed).exp().min(1.0)
}

/// pCN MCMC: joint proposal `ξ′ = √(1−β²) ξ + β ζ` with an `s`-move that
/// preserves the uniform prior; accepted with `min{1, exp(Φ(u) − Φ(u′))}`.
pub fn pcn_mcmc(
    model: &dyn ForwardModel,
    data: &DataVector,
    prior: &Prior,
    config: &McmcConfig,
    seed: u64,
) -> Result<Chain> {
    config.validate()?;
    let n_kl = model.n_kl();
    if n_kl != 0 && n_kl != prior.n_kl() {
        return Err(Error::DimensionMismatch {
            what: "model vs prior KL modes",
            expected: prior.n_kl(),
            actual: n_kl,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = match &config.init {
        Some(init) => init.clone(),
        None => {
            let mut u = prior.sample(&mut rng);
            u.xi.truncate(n_kl);
            u
        }
    };
    if !prior.order.contains(u.s) || u.xi.len() != n_kl {
        return Err(Error::InvalidArgument("initial state outside prior support".into()));
    }
    let mut phi = potential(model, &u, data)?;
    let rho = (1.0 - config.beta * config.beta).max(0.0).sqrt();

    let mut chain = Chain {
        samples: Vec::with_capacity(config.n_steps),
        potentials: Vec::with_capacity(config.n_steps),
        accepted: Vec::with_capacity(config.n_steps),
        acceptance_rate: 0.0,
        beta: config.beta,
        order_proposal: config.order_proposal,
        longest_rejection_run: 0,
    };
    let (mut n_acc, mut run) = (0usize, 0usize);
    for _ in 0..config.n_steps {
        let s_new = match config.order_proposal {
            OrderProposal::ReflectedWalk { step } => {
                let z: f64 = rng.sample(StandardNormal);
                prior.order.reflect(u.s + step * z)
            }
            OrderProposal::Independent => prior.order.sample(&mut rng),
        };
        let xi_new: Vec<f64> =
            u.xi.iter()
                .map(|x| {
                    let z: f64 = rng.sample(StandardNormal);
                    rho * x + config.beta * z
                })
                .collect();
        let proposal = ParamPoint { s: s_new, xi: xi_new };
        let phi_new = potential(model, &proposal, data)?;
        let uniform: f64 = rng.random();
        let accept = uniform < accept_probability(phi, phi_new);
        if accept {
            u = proposal;
            phi = phi_new;
            n_acc += 1;
            run = 0;
        } else {
            run += 1;
            chain.longest_rejection_run = chain.longest_rejection_run.max(run);
        }
        chain.samples.push(u.clone());
        chain.potentials.push(phi);
        chain.accepted.push(accept);
    }
    chain.acceptance_rate = n_acc as f64 / config.n_steps as f64;
    Ok(chain)
}
