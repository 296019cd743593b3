//! Generalized eigendecomposition of the discrete Neumann operator on the
//! zero-mean space, and the spectral fractional power `L_A^s`.
//!
//! Eigenvalues of the pencil `(K, M)` are located by bisection on the inertia
//! of `K − σM` (both matrices are tridiagonal, so each count is `O(n)`), and
//! eigenvectors by shifted inverse iteration followed by mass-orthogonal
//! deflation of the constant vector and of the previously accepted modes.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{dot, SymTridiagonal, TridiagonalLu};
use crate::mesh::AssembledOperator;

/// Default number of retained modes: `min(256, n_nodes − 1)`.
pub fn default_modes(n_nodes: usize) -> usize {
    256.min(n_nodes.saturating_sub(1))
}

const INVERSE_ITERATIONS: usize = 3;
const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Nodal function with zero mass-weighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    /// Wraps nodal values after checking the zero-mean invariant.
    pub fn new(op: &AssembledOperator, values: Vec<f64>) -> Result<Self> {
        check_len(op.n_nodes(), values.len(), "field values")?;
        let mean = op.mean(&values);
        let scale = op.l2_norm(&values) / op.mesh.length().sqrt();
        if mean.abs() > 1e-10 * scale.max(1e-300) && mean.abs() > 1e-14 {
            return Err(Error::NotZeroMean { mean });
        }
        Ok(Self { values })
    }

    /// Projects arbitrary nodal values onto the zero-mean space.
    pub fn projected(op: &AssembledOperator, mut values: Vec<f64>) -> Result<Self> {
        check_len(op.n_nodes(), values.len(), "field values")?;
        op.project_zero_mean(&mut values);
        Ok(Self { values })
    }

    /// Nodal interpolant of `f`, projected to zero mean.
    pub fn interpolate(op: &AssembledOperator, f: impl Fn(f64) -> f64) -> Self {
        let mut values: Vec<f64> = op.mesh.nodes().into_iter().map(f).collect();
        op.project_zero_mean(&mut values);
        Self { values }
    }

    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            values: vec![0.0; n_nodes],
        }
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `α·self + β·other`; the zero-mean space is closed under this.
    pub fn combine(&self, alpha: f64, other: &Field, beta: f64) -> Field {
        Field {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        }
    }

    pub fn sup_distance(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn check_len(expected: usize, actual: usize, what: &'static str) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { what, expected, actual });
    }
    Ok(())
}

fn check_order(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OrderOutOfRange { s, range: "[0, 1]" });
    }
    Ok(())
}

/// First `K` nonzero eigenpairs of `Kψ = λMψ`, mass-orthonormal and zero mean.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    mass: SymTridiagonal,
    max_residual: f64,
}

impl EigenSystem {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.eigenvectors
    }

    pub fn mass(&self) -> &SymTridiagonal {
        &self.mass
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.mass.dim()
    }

    /// Largest relative residual `‖Kψ − λMψ‖ / (‖Kψ‖ + λ‖Mψ‖)` seen.
    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    /// `max_{i,j} |ψ_iᵀMψ_j − δ_ij|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        let mpsi: Vec<Vec<f64>> = self.eigenvectors.iter().map(|v| self.mass.matvec(v)).collect();
        for i in 0..self.n_modes() {
            for j in 0..=i {
                let g = dot(&self.eigenvectors[j], &mpsi[i]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// `max_k |ψ_kᵀM1|`.
    pub fn mean_residual(&self) -> f64 {
        let m1 = self.mass.matvec(&vec![1.0; self.n_nodes()]);
        self.eigenvectors.iter().map(|v| dot(v, &m1).abs()).fold(0.0, f64::max)
    }

    /// Mass inner products `⟨v, ψ_k⟩_M` for every retained mode.
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        let mv = self.mass.matvec(v);
        self.eigenvectors.iter().map(|psi| dot(psi, &mv)).collect()
    }

    /// `Σ_k c_k ψ_k`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for (c, psi) in coeffs.iter().zip(&self.eigenvectors) {
            if *c != 0.0 {
                crate::linalg::axpy(*c, psi, &mut out);
            }
        }
        out
    }

    /// Orthogonal projection onto the retained modes.
    pub fn project(&self, f: &Field) -> Field {
        Field::from_raw(self.synthesize(&self.coefficients(f.values())))
    }

    fn power_apply(&self, f: &Field, exponent: f64) -> Result<Field> {
        check_len(self.n_nodes(), f.len(), "field values")?;
        let coeffs: Vec<f64> = self
            .coefficients(f.values())
            .into_iter()
            .zip(&self.eigenvalues)
            .map(|(c, lam)| c * lam.powf(exponent))
            .collect();
        Ok(Field::from_raw(self.synthesize(&coeffs)))
    }

    /// `Σ λ_k^{−s} ⟨f, ψ_k⟩ ψ_k`.
    pub fn fractional_solve(&self, f: &Field, s: f64) -> Result<Field> {
        check_order(s)?;
        self.power_apply(f, -s)
    }

    /// `Σ λ_k^{s} ⟨p, ψ_k⟩ ψ_k`.
    pub fn fractional_apply(&self, p: &Field, s: f64) -> Result<Field> {
        check_order(s)?;
        self.power_apply(p, s)
    }

    /// `(Σ λ_k^s ⟨p, ψ_k⟩²)^{1/2}` over the retained modes.
    pub fn hs_seminorm(&self, p: &Field, s: f64) -> f64 {
        self.coefficients(p.values())
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, lam)| lam.powf(s) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Debug dump: one column per eigenvector, first data row holds `λ_k`.
    pub fn write_csv<W: Write>(&self, nodes: &[f64], mut out: W) -> Result<()> {
        write!(out, "x")?;
        for k in 1..=self.n_modes() {
            write!(out, ",psi_{k}")?;
        }
        writeln!(out)?;
        write!(out, "lambda")?;
        for lam in &self.eigenvalues {
            write!(out, ",{lam:.17e}")?;
        }
        writeln!(out)?;
        for (i, x) in nodes.iter().enumerate() {
            write!(out, "{x:.17e}")?;
            for psi in &self.eigenvectors {
                write!(out, ",{:.17e}", psi[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Computes the first `n_modes` nonzero eigenpairs of the assembled operator.
pub fn eigendecompose(op: &AssembledOperator, n_modes: usize) -> Result<EigenSystem> {
    let n = op.n_nodes();
    let available = n - 1;
    if n_modes == 0 || n_modes > available {
        return Err(Error::TooManyModes {
            requested: n_modes,
            available,
        });
    }
    let k = &op.stiffness;
    let m = &op.mass;

    // element-wise bound on the largest generalized eigenvalue: 12 a / h²
    let h = op.mesh.h();
    let (_, upper_a) = op.coefficient.ellipticity_bounds();
    let mut upper = 12.0 * upper_a / (h * h) * (1.0 + 1e-6) + 1.0;
    while k.inertia_below(upper, m) < n {
        upper *= 2.0;
    }

    let m1 = m.matvec(&vec![1.0; n]);
    let total_mass = dot(&m1, &vec![1.0; n]);
    let constant = vec![1.0 / total_mass.sqrt(); n];

    let mut eigenvalues = Vec::with_capacity(n_modes);
    let mut eigenvectors: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    let mut m_eigenvectors: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    let mut lower = 0.0_f64;
    let mut max_residual = 0.0_f64;

    for idx in 1..=n_modes {
        let shift = bisect_eigenvalue(k, m, idx, lower, upper);
        lower = shift;

        let shifted = k.shifted(shift, m);
        let lu = TridiagonalLu::factor(&shifted)?;
        let mut x: Vec<f64> = (0..n)
            .map(|i| 0.3 + ((i as f64) * 1.618_033_988_75 + idx as f64 * 0.754_877_666).sin())
            .collect();
        for _ in 0..INVERSE_ITERATIONS {
            let rhs = m.matvec(&x);
            x = lu.solve(&rhs)?;
            deflate(&mut x, m, &constant, &eigenvectors, &m_eigenvectors);
            let norm = m.bilinear(&x, &x).sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::EigenNonConvergence {
                    mode: idx,
                    residual: f64::NAN,
                });
            }
            x.iter_mut().for_each(|v| *v /= norm);
        }
        orient(&mut x);
        // Rayleigh quotient refines the bisection value (x is mass-normalized)
        let lambda = k.bilinear(&x, &x);

        let kx = k.matvec(&x);
        let mx = m.matvec(&x);
        let num = kx
            .iter()
            .zip(&mx)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - lambda * b).abs()));
        // normwise backward error in the ∞-norm
        let den = (row_norm(k) + lambda * row_norm(m)) * crate::linalg::max_abs(&x);
        let residual = num / den.max(f64::MIN_POSITIVE);
        if !(residual <= RESIDUAL_TOLERANCE) {
            return Err(Error::EigenNonConvergence { mode: idx, residual });
        }
        max_residual = max_residual.max(residual);
        eigenvalues.push(lambda);
        m_eigenvectors.push(mx);
        eigenvectors.push(x);
    }

    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
        mass: m.clone(),
        max_residual,
    })
}

/// Bisection for the eigenvalue with 0-based index `idx` of the pencil.
fn bisect_eigenvalue(k: &SymTridiagonal, m: &SymTridiagonal, idx: usize, mut lo: f64, mut hi: f64) -> f64 {
    // invariant: count(lo) ≤ idx < count(hi)
    for _ in 0..200 {
        let width = hi - lo;
        if width <= 2.0 * f64::EPSILON * hi.abs().max(lo.abs()) + f64::MIN_POSITIVE {
            break;
        }
        let mid = lo + 0.5 * width;
        if mid <= lo || mid >= hi {
            break;
        }
        if k.inertia_below(mid, m) > idx {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mass-orthogonal Gram–Schmidt against the constant mode and accepted modes.
fn deflate(x: &mut [f64], m: &SymTridiagonal, constant: &[f64], basis: &[Vec<f64>], m_basis: &[Vec<f64>]) {
    for _ in 0..2 {
        let c = m.bilinear(constant, x);
        crate::linalg::axpy(-c, constant, x);
        for (psi, mpsi) in basis.iter().zip(m_basis) {
            let c = dot(mpsi, x);
            crate::linalg::axpy(-c, psi, x);
        }
    }
}

/// `‖A‖_∞` of a symmetric tridiagonal matrix.
fn row_norm(a: &SymTridiagonal) -> f64 {
    (0..a.dim())
        .map(|i| {
            let left = if i > 0 { a.off[i - 1].abs() } else { 0.0 };
            let right = a.off.get(i).map_or(0.0, |v| v.abs());
            a.diag[i].abs() + left + right
        })
        .fold(0.0, f64::max)
}

/// Fixes the sign so that the first significant nodal value is positive.
fn orient(x: &mut [f64]) {
    let scale = crate::linalg::max_abs(x);
    if let Some(first) = x.iter().find(|v| v.abs() > 1e-8 * scale) {
        if *first < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Free-function form of [`EigenSystem::fractional_solve`].
pub fn fractional_solve(eig: &EigenSystem, f: &Field, s: f64) -> Result<Field> {
    eig.fractional_solve(f, s)
}

pub fn fractional_apply(eig: &EigenSystem, p: &Field, s: f64) -> Result<Field> {
    eig.fractional_apply(p, s)
}

pub fn hs_seminorm(eig: &EigenSystem, p: &Field, s: f64) -> f64 {
    eig.hs_seminorm(p, s)
}
