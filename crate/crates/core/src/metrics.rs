//! Hellinger distances, well-posedness sweeps and numerical checks of the
//! coefficient-perturbation bounds for the solution operator and its spectrum.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{posterior_grid_1d, trapezoid, ForwardModel, PosteriorDensity1D};
use crate::error::{Error, Result};
use crate::forward::DataVector;
use crate::linalg::dot;
use crate::mesh::{AssembledOperator, Mesh1D};
use crate::prior::OrderPrior;
use crate::spectral::{eigendecompose, Field};

/// `D_Hell(p, q) = (½ ∫ (√p − √q)²)^{1/2}` by the trapezoid rule.
pub fn hellinger_1d(p: &PosteriorDensity1D, q: &PosteriorDensity1D) -> Result<f64> {
    if p.s_grid != q.s_grid {
        return Err(Error::GridMismatch(
            "posterior densities live on different grids".into(),
        ));
    }
    let sq: Vec<f64> = p
        .weights
        .iter()
        .zip(&q.weights)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .collect();
    Ok((0.5 * trapezoid(&p.s_grid, &sq)).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HellingerPair {
    pub eps: f64,
    /// `|Δy|`.
    pub delta_y: f64,
    pub d_hell: f64,
    /// `D_Hell / |Δy|` (0 when `|Δy| = 0`).
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HellingerReport {
    pub pairs: Vec<HellingerPair>,
    /// Least-squares slope of `log D_Hell` against `log |Δy|`; `NaN` with
    /// fewer than two positive pairs.
    pub slope: f64,
}

impl HellingerReport {
    /// `max ratio / min ratio` over pairs with `|Δy| > 0`.
    pub fn ratio_spread(&self) -> f64 {
        let r: Vec<f64> = self.pairs.iter().filter(|p| p.delta_y > 0.0).map(|p| p.ratio).collect();
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = r.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eps,delta_y,d_hell,ratio")?;
        for p in &self.pairs {
            writeln!(w, "{},{},{},{}", p.eps, p.delta_y, p.d_hell, p.ratio)?;
        }
        Ok(())
    }
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Seeded unit vector in `R^m`.
pub fn random_direction(m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dot(&v, &v).sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Compares `μ^y` with `μ^{y + ε e}` on a shared `s`-grid for each `ε`.
pub fn wellposedness_sweep(
    model: &dyn ForwardModel,
    data: &DataVector,
    prior: &OrderPrior,
    xi: &[f64],
    epsilons: &[f64],
    direction: &[f64],
    grid_points: usize,
) -> Result<HellingerReport> {
    if direction.len() != data.y.len() {
        return Err(Error::DimensionMismatch {
            what: "perturbation direction",
            expected: data.y.len(),
            actual: direction.len(),
        });
    }
    if let Some(e) = epsilons.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::InvalidArgument(format!("perturbation size {e} must be ≥ 0")));
    }
    let norm = dot(direction, direction).sqrt();
    let base = posterior_grid_1d(model, data, prior, xi, grid_points)?;
    let pairs = epsilons
        .par_iter()
        .map(|&eps| {
            let shifted = posterior_grid_1d(model, &data.perturbed(direction, eps), prior, xi, grid_points)?;
            let d_hell = hellinger_1d(&base, &shifted)?;
            let delta_y = eps * norm;
            let ratio = if delta_y > 0.0 { d_hell / delta_y } else { 0.0 };
            Ok(HellingerPair {
                eps,
                delta_y,
                d_hell,
                ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (lx, ly): (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .filter(|p| p.delta_y > 0.0 && p.d_hell > 0.0)
        .map(|p| (p.delta_y.ln(), p.d_hell.ln()))
        .unzip();
    Ok(HellingerReport {
        pairs,
        slope: fit_slope(&lx, &ly),
    })
}

/// Relative tolerance and iteration cap of the power iteration.
pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 20_000;

/// `‖L_a^{−1} − L_{a′}^{−1}‖` on the zero-mean space in the discrete `L²`
/// norm, by power iteration on the square of the (mass-self-adjoint)
/// difference.
pub fn op_norm_diff(a: &AssembledOperator, b: &AssembledOperator) -> Result<f64> {
    if a.mesh != b.mesh {
        return Err(Error::GridMismatch("operators on different meshes".into()));
    }
    let apply = |v: &[f64]| -> Result<Vec<f64>> {
        let pa = a.solve_neumann(v)?;
        let pb = b.solve_neumann(v)?;
        Ok(pa.iter().zip(&pb).map(|(x, y)| x - y).collect())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..a.n_nodes()).map(|_| StandardNormal.sample(&mut rng)).collect();
    a.project_zero_mean(&mut v);
    let mut est = 0.0;
    let mut change = f64::INFINITY;
    for it in 0..POWER_MAX_ITER {
        let nv = a.l2_norm(&v);
        if nv == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let mut w = apply(&apply(&v)?)?;
        a.project_zero_mean(&mut w);
        // ‖D v‖² = ⟨D² v, v⟩_M for unit v
        let next = a.mass.bilinear(&w, &v).max(0.0).sqrt();
        if next == 0.0 {
            return Ok(0.0);
        }
        change = (next - est).abs() / next;
        est = next;
        if it > 2 && change <= POWER_TOL {
            return Ok(est);
        }
        v = w;
    }
    Err(Error::PowerIterationStagnation {
        iterations: POWER_MAX_ITER,
        change,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    /// `|1/λ_i − 1/λ′_i|`, `i = 1..N`.
    pub reciprocal_gaps: Vec<f64>,
    /// `‖ψ_i − ψ′_i‖` after matching and sign alignment.
    pub eigvec_distances: Vec<f64>,
    pub op_norm: f64,
    pub coefficient_gap: f64,
    /// `λ_A`, `λ_{A′}`: lower ellipticity bounds.
    pub ellipticity: (f64, f64),
    /// Smallest separation of `1/λ_1..1/λ_{N+1}` of the unperturbed operator.
    pub min_spectral_gap: f64,
    /// Gap condition `min_spectral_gap > 2·op_norm` holds; eigenvector
    /// distances are meaningful only then.
    pub applicable: bool,
    /// `max_i |1/λ_i − 1/λ′_i| / ‖Δa‖_∞`.
    pub eigenvalue_constant: f64,
    /// `max_i ‖ψ_i − ψ′_i‖ / ‖Δa‖_∞`.
    pub eigvec_constant: f64,
    /// `op_norm · λ_A λ_{A′} / ‖Δa‖_∞`.
    pub op_norm_constant: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Compares the first `n` eigenpairs of `a` and `b`.
pub fn eigen_perturbation_check(a: &AssembledOperator, b: &AssembledOperator, n: usize) -> Result<PerturbationReport> {
    if a.mesh != b.mesh {
        return Err(Error::GridMismatch("operators on different meshes".into()));
    }
    let extra = (n + 3).min(a.n_nodes() - 1);
    let ea = eigendecompose(a, extra)?;
    let eb = eigendecompose(b, n)?;
    let op_norm = op_norm_diff(a, b)?;
    let coefficient_gap = a.coefficient.sup_distance(&b.coefficient)?;

    let reciprocal_gaps: Vec<f64> = (0..n)
        .map(|i| (1.0 / ea.eigenvalues()[i] - 1.0 / eb.eigenvalues()[i]).abs())
        .collect();
    let inv: Vec<f64> = ea.eigenvalues().iter().take(n + 1).map(|l| 1.0 / l).collect();
    let min_spectral_gap = inv
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .fold(f64::INFINITY, f64::min);

    // greedy matching by largest |⟨ψ′_i, ψ_j⟩_M|, then sign alignment
    let mut used = vec![false; ea.n_modes()];
    let mut eigvec_distances = Vec::with_capacity(n);
    for psi_b in eb.eigenvectors().iter().take(n) {
        let mb = a.mass.matvec(psi_b);
        let (j, proj) = ea
            .eigenvectors()
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, psi_a)| (j, dot(psi_a, &mb)))
            .fold((usize::MAX, 0.0f64), |best, cur| {
                if cur.1.abs() > best.1.abs() {
                    cur
                } else {
                    best
                }
            });
        if j == usize::MAX {
            return Err(Error::InvalidArgument("no eigenvector left to match".into()));
        }
        used[j] = true;
        let sign = if proj >= 0.0 { 1.0 } else { -1.0 };
        let diff: Vec<f64> = psi_b
            .iter()
            .zip(&ea.eigenvectors()[j])
            .map(|(x, y)| x - sign * y)
            .collect();
        eigvec_distances.push(a.l2_norm(&diff));
    }

    let (la, lb) = (
        a.coefficient.ellipticity_bounds().0,
        b.coefficient.ellipticity_bounds().0,
    );
    let eigenvalue_constant = ratio(reciprocal_gaps.iter().copied().fold(0.0, f64::max), coefficient_gap);
    let eigvec_constant = ratio(eigvec_distances.iter().copied().fold(0.0, f64::max), coefficient_gap);
    Ok(PerturbationReport {
        applicable: min_spectral_gap > 2.0 * op_norm,
        op_norm_constant: ratio(op_norm * la * lb, coefficient_gap),
        reciprocal_gaps,
        eigvec_distances,
        op_norm,
        coefficient_gap,
        ellipticity: (la, lb),
        min_spectral_gap,
        eigenvalue_constant,
        eigvec_constant,
    })
}

/// `[p_{s,a} − p_{s,a′}]_{H^s} / ‖a − a′‖_∞`, with the seminorm taken in the
/// eigenbasis of `a`; 0 when `a = a′`.
pub fn forward_lipschitz_probe(
    s: f64,
    a: &AssembledOperator,
    b: &AssembledOperator,
    f: &Field,
    modes: usize,
) -> Result<f64> {
    if a.mesh != b.mesh {
        return Err(Error::GridMismatch("operators on different meshes".into()));
    }
    let gap = a.coefficient.sup_distance(&b.coefficient)?;
    if gap == 0.0 {
        return Ok(0.0);
    }
    let modes = modes.min(a.n_nodes() - 1);
    let ea = eigendecompose(a, modes)?;
    let eb = eigendecompose(b, modes)?;
    let pa = ea.fractional_solve(f, s)?;
    let pb = eb.fractional_solve(f, s)?;
    Ok(ea.hs_seminorm(&pa.combine(1.0, &pb, -1.0), s) / gap)
}

/// Discrete `C^{0,α}` seminorm over all node pairs.
pub fn holder_seminorm(mesh: &Mesh1D, v: &[f64], alpha: f64) -> f64 {
    let x = mesh.nodes();
    let mut best = 0.0f64;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            best = best.max((v[i] - v[j]).abs() / (x[j] - x[i]).powf(alpha));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    /// `‖p − q‖_∞`.
    pub lhs: f64,
    /// `C max{[p]_α, [q]_α}^{1/(2α+1)} ‖p − q‖_{L²}^{2α/(2α+1)}`.
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Calibrated interpolation constant for `d = 1`.
pub const HOLDER_CONSTANT: f64 = 4.0;

/// Checks `‖p − q‖_∞ ≤ C max{[p]_α, [q]_α}^{d/(2α+d)} ‖p − q‖_{L²}^{2α/(2α+d)}`
/// for zero-mean fields in one dimension.
pub fn holder_interpolation_check(
    op: &AssembledOperator,
    p: &Field,
    q: &Field,
    alpha: f64,
    c: f64,
) -> Result<HolderCheck> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Hölder exponent {alpha} must lie in (0, 1]"
        )));
    }
    if p.len() != op.n_nodes() || q.len() != op.n_nodes() {
        return Err(Error::DimensionMismatch {
            what: "fields",
            expected: op.n_nodes(),
            actual: p.len().min(q.len()),
        });
    }
    let diff: Vec<f64> = p.values().iter().zip(q.values()).map(|(a, b)| a - b).collect();
    let lhs = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let semi = holder_seminorm(&op.mesh, p.values(), alpha).max(holder_seminorm(&op.mesh, q.values(), alpha));
    let d = 1.0;
    let rhs = c * semi.powf(d / (2.0 * alpha + d)) * op.l2_norm(&diff).powf(2.0 * alpha / (2.0 * alpha + d));
    Ok(HolderCheck {
        lhs,
        rhs,
        slack: rhs - lhs,
        pass: lhs <= rhs,
    })
}
