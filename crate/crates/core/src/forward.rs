//! Forward map `F(s, A)`, observation maps and the composite `G = O ∘ F`,
//! plus the closed-form cosine-source example on `[−π, π]`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{solve_extension, ExtensionGrid};
use crate::mesh::{AssembledOperator, Coefficient, Mesh1D};
use crate::spectral::{eigendecompose, EigenSystem, Field};

/// Observation locations and the noise level `γ` (covariance `γ² I`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSetup {
    pub points: Vec<f64>,
    pub gamma: f64,
}

impl ObservationSetup {
    pub fn new(points: Vec<f64>, gamma: f64, mesh: &Mesh1D) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise level γ = {gamma} must be positive"
            )));
        }
        if let Some(x) = points.iter().find(|x| !mesh.contains(**x)) {
            return Err(Error::PointOutsideDomain {
                x: *x,
                left: mesh.x_left,
                right: mesh.x_right,
            });
        }
        Ok(Self { points, gamma })
    }

    /// `m = 1 ⇒ {π}`; `m ≥ 2 ⇒ x_j = −π + 2πj/(m−1)`. `m = 0` yields the
    /// empty (no-data) setup.
    pub fn uniform_grid(m: usize, gamma: f64) -> Result<Self> {
        let points = match m {
            0 => Vec::new(),
            1 => vec![PI],
            _ => {
                let h = 2.0 * PI / (m - 1) as f64;
                (0..m)
                    .map(|j| if j == m - 1 { PI } else { -PI + j as f64 * h })
                    .collect()
            }
        };
        let mesh = Mesh1D::periodic_box(2)?;
        Self::new(points, gamma, &mesh)
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }
}

/// Observed data `y = G(u) + η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataVector {
    pub points: Vec<f64>,
    pub gamma: f64,
    pub y: Vec<f64>,
    pub seed: u64,
}

impl DataVector {
    pub fn new(setup: &ObservationSetup, y: Vec<f64>, seed: u64) -> Result<Self> {
        if y.len() != setup.m() {
            return Err(Error::DimensionMismatch {
                what: "data vector",
                expected: setup.m(),
                actual: y.len(),
            });
        }
        Ok(Self {
            points: setup.points.clone(),
            gamma: setup.gamma,
            y,
            seed,
        })
    }

    pub fn setup(&self) -> ObservationSetup {
        ObservationSetup {
            points: self.points.clone(),
            gamma: self.gamma,
        }
    }

    /// Same locations and noise level, shifted values.
    pub fn perturbed(&self, direction: &[f64], eps: f64) -> Self {
        let y = self.y.iter().zip(direction).map(|(y, e)| y + eps * e).collect();
        Self { y, ..self.clone() }
    }
}

/// P1 interpolation of nodal values at arbitrary points.
pub fn interpolate_at(mesh: &Mesh1D, values: &[f64], points: &[f64]) -> Result<Vec<f64>> {
    if values.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch {
            what: "nodal values",
            expected: mesh.n_nodes(),
            actual: values.len(),
        });
    }
    points
        .iter()
        .map(|&x| {
            let (c, t) = mesh.locate(x)?;
            Ok((1.0 - t) * values[c] + t * values[c + 1])
        })
        .collect()
}

/// `O(p) = (p(x_1), …, p(x_m))` by piecewise-linear interpolation.
pub fn observe_pointwise(mesh: &Mesh1D, p: &Field, setup: &ObservationSetup) -> Result<Vec<f64>> {
    interpolate_at(mesh, p.values(), &setup.points)
}

/// Window averages `|W|^{−1} ∫_W p` of the piecewise-linear interpolant.
pub fn observe_average(mesh: &Mesh1D, p: &Field, windows: &[(f64, f64)]) -> Result<Vec<f64>> {
    let v = p.values();
    windows
        .iter()
        .map(|&(lo, hi)| {
            if !(hi > lo) || !mesh.contains(lo) || !mesh.contains(hi) {
                return Err(Error::InvalidWindow { lo, hi });
            }
            let (c0, _) = mesh.locate(lo)?;
            let (c1, _) = mesh.locate(hi)?;
            let value = |x: f64, c: usize| {
                let t = ((x - mesh.node(c)) / mesh.h()).clamp(0.0, 1.0);
                (1.0 - t) * v[c] + t * v[c + 1]
            };
            // trapezoid rule on the breakpoints is exact for P1 functions
            let mut integral = 0.0;
            for c in c0..=c1 {
                let a = lo.max(mesh.node(c));
                let b = hi.min(mesh.node(c + 1));
                if b > a {
                    integral += 0.5 * (b - a) * (value(a, c) + value(b, c));
                }
            }
            Ok(integral / (hi - lo))
        })
        .collect()
}

/// Forward solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Solver {
    Spectral { modes: usize },
    Extension { layers: usize, y_max: f64, grading: f64 },
}

impl Solver {
    pub fn default_extension() -> Self {
        Solver::Extension {
            layers: 128,
            y_max: 8.0,
            grading: 3.0,
        }
    }
}

/// Solves `L_A^s p = f` with the selected method.
pub fn solve_forward(mesh: &Mesh1D, s: f64, a: &Coefficient, f: &Field, solver: Solver) -> Result<Field> {
    match solver {
        Solver::Spectral { modes } => {
            let op = AssembledOperator::assemble(mesh, a)?;
            let eig = eigendecompose(&op, modes.min(op.n_nodes() - 1))?;
            eig.fractional_solve(f, s)
        }
        Solver::Extension { layers, y_max, grading } => {
            let grid = ExtensionGrid::graded(mesh, s, layers, y_max, grading)?;
            Ok(solve_extension(a, s, f, &grid)?.trace())
        }
    }
}

/// `G(s, A) = O(F(s, A))` with pointwise observations.
pub fn forward_g(
    mesh: &Mesh1D,
    s: f64,
    a: &Coefficient,
    f: &Field,
    setup: &ObservationSetup,
    solver: Solver,
) -> Result<Vec<f64>> {
    let p = solve_forward(mesh, s, a, f, solver)?;
    observe_pointwise(mesh, &p, setup)
}

/// Spectral forward map for a fixed coefficient, specialized to sweeps in `s`.
///
/// Holds `B_jk = ⟨f, ψ_k⟩ ψ_k(x_j)`, so that `G(s)_j = Σ_k λ_k^{−s} B_jk`.
#[derive(Debug, Clone)]
pub struct OrderSweepModel {
    eigenvalues: Vec<f64>,
    weights: Vec<f64>,
    m: usize,
}

impl OrderSweepModel {
    pub fn new(mesh: &Mesh1D, eig: &EigenSystem, f: &Field, points: &[f64]) -> Result<Self> {
        let coeffs = eig.coefficients(f.values());
        let k = eig.n_modes();
        let mut weights = vec![0.0; points.len() * k];
        for (j, &x) in points.iter().enumerate() {
            let (c, t) = mesh.locate(x)?;
            for (kk, psi) in eig.eigenvectors().iter().enumerate() {
                weights[j * k + kk] = coeffs[kk] * ((1.0 - t) * psi[c] + t * psi[c + 1]);
            }
        }
        Ok(Self {
            eigenvalues: eig.eigenvalues().to_vec(),
            weights,
            m: points.len(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn observe(&self, s: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::OrderOutOfRange { s, range: "[0, 1]" });
        }
        let k = self.eigenvalues.len();
        let scale: Vec<f64> = self.eigenvalues.iter().map(|l| l.powf(-s)).collect();
        Ok((0..self.m)
            .map(|j| {
                self.weights[j * k..(j + 1) * k]
                    .iter()
                    .zip(&scale)
                    .map(|(w, c)| w * c)
                    .sum()
            })
            .collect())
    }
}

fn check_nonresonant(b: f64) -> Result<()> {
    if !b.is_finite() || b == 0.0 || (b - b.round()).abs() < 1e-12 {
        return Err(Error::ResonantSource(b));
    }
    Ok(())
}

/// `f(x) = cos(bx) − sin(bπ)/(bπ)`, the zero-mean cosine source.
pub fn analytic_source(b: f64, x: f64) -> Result<f64> {
    check_nonresonant(b)?;
    Ok((b * x).cos() - (b * PI).sin() / (b * PI))
}

/// Cosine coefficient `f_k = (−1)^k 2b sin(bπ) / (π (b² − k²))` of the source.
pub fn analytic_coefficient(b: f64, k: usize) -> f64 {
    let kf = k as f64;
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * 2.0 * b * (b * PI).sin() / (PI * (b * b - kf * kf))
}

/// Truncated cosine series of `(−Δ)^{−s} f`; returns the value and an upper
/// bound on the neglected tail.
pub fn analytic_solution_with_tail(b: f64, s: f64, x: f64, k_terms: usize) -> Result<(f64, f64)> {
    check_nonresonant(b)?;
    if k_terms < 16 {
        return Err(Error::InvalidArgument(format!("need at least 16 terms, got {k_terms}")));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OrderOutOfRange { s, range: "[0, 1]" });
    }
    let mut sum = 0.0;
    // sum from the small end up for accuracy
    for k in (1..=k_terms).rev() {
        let kf = k as f64;
        sum += analytic_coefficient(b, k) * kf.powf(-2.0 * s) * (kf * x).cos();
    }
    let kf = k_terms as f64;
    let amp = 2.0 * b.abs() * (b * PI).sin().abs() / PI;
    let tail = amp * kf.powf(-1.0 - 2.0 * s) / ((1.0 + 2.0 * s) * (1.0 - (b / kf).powi(2)));
    Ok((sum, tail))
}

pub fn analytic_solution(b: f64, s: f64, x: f64, k_terms: usize) -> Result<f64> {
    analytic_solution_with_tail(b, s, x, k_terms).map(|(v, _)| v)
}

/// `y = G(s*, a*) + γ ξ`, `ξ` standard normal from a seeded generator.
/// Returns the data and the noiseless observations.
pub fn synth_data(
    mesh: &Mesh1D,
    s_star: f64,
    a_star: &Coefficient,
    b: f64,
    setup: &ObservationSetup,
    solver: Solver,
    seed: u64,
) -> Result<(DataVector, Vec<f64>)> {
    let op = AssembledOperator::assemble(mesh, a_star)?;
    let source = |x: f64| analytic_source(b, x).unwrap_or(f64::NAN);
    check_nonresonant(b)?;
    let f = Field::interpolate(&op, source);
    let clean = forward_g(mesh, s_star, a_star, &f, setup, solver)?;
    let y = add_noise(&clean, setup.gamma, seed);
    Ok((DataVector::new(setup, y, seed)?, clean))
}

/// `clean + γ ξ` with `ξ ~ N(0, I)` drawn from `ChaCha8(seed)`.
pub fn add_noise(clean: &[f64], gamma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    clean
        .iter()
        .map(|g| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            g + gamma * xi
        })
        .collect()
}
