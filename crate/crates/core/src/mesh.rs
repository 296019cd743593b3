//! Uniform 1D meshes, piecewise-constant diffusion coefficients and P1
//! assembly of `L_A = −(a(x) p′)′` with homogeneous Neumann conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymTridiagonal;

/// Uniform partition of `[x_left, x_right]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh1D {
    pub x_left: f64,
    pub x_right: f64,
    pub n_cells: usize,
}

impl Mesh1D {
    pub fn new(x_left: f64, x_right: f64, n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidMesh(format!("need at least 2 cells, got {n_cells}")));
        }
        if !(x_left.is_finite() && x_right.is_finite()) || x_left >= x_right {
            return Err(Error::InvalidMesh(format!("degenerate interval [{x_left}, {x_right}]")));
        }
        Ok(Self {
            x_left,
            x_right,
            n_cells,
        })
    }

    /// The domain `[−π, π]`.
    pub fn periodic_box(n_cells: usize) -> Result<Self> {
        Self::new(-std::f64::consts::PI, std::f64::consts::PI, n_cells)
    }

    pub fn h(&self) -> f64 {
        (self.x_right - self.x_left) / self.n_cells as f64
    }

    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.x_right
        } else {
            self.x_left + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    pub fn cell_midpoint(&self, c: usize) -> f64 {
        self.x_left + (c as f64 + 0.5) * self.h()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_left && x <= self.x_right
    }

    /// Cell index containing `x` and the local coordinate `t ∈ [0, 1]`.
    pub fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let tol = 1e-12 * self.length();
        if !(x >= self.x_left - tol && x <= self.x_right + tol) {
            return Err(Error::PointOutsideDomain {
                x,
                left: self.x_left,
                right: self.x_right,
            });
        }
        let u = (x - self.x_left) / self.h();
        let c = (u.floor().max(0.0) as usize).min(self.n_cells - 1);
        let t = (u - c as f64).clamp(0.0, 1.0);
        Ok((c, t))
    }
}

/// Piecewise-constant positive coefficient, one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    cells: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl Coefficient {
    pub fn new(cells: Vec<f64>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidCoefficient("no cell values".into()));
        }
        if let Some((i, v)) = cells.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidCoefficient(format!(
                "cell {i} has non-positive or non-finite value {v}"
            )));
        }
        let lower = cells.iter().copied().fold(f64::INFINITY, f64::min);
        let upper = cells.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { cells, lower, upper })
    }

    pub fn constant(mesh: &Mesh1D, value: f64) -> Result<Self> {
        Self::new(vec![value; mesh.n_cells])
    }

    /// Samples `a` at the cell midpoints.
    pub fn from_fn(mesh: &Mesh1D, a: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..mesh.n_cells).map(|c| a(mesh.cell_midpoint(c))).collect())
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// `(λ_A, Λ_A)`: the sharp ellipticity bounds.
    pub fn ellipticity_bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn ellipticity_ratio(&self) -> f64 {
        self.upper / self.lower
    }

    /// `‖a − b‖_∞` over cells.
    pub fn sup_distance(&self, other: &Coefficient) -> Result<f64> {
        if self.n_cells() != other.n_cells() {
            return Err(Error::DimensionMismatch {
                what: "coefficient cells",
                expected: self.n_cells(),
                actual: other.n_cells(),
            });
        }
        Ok(self
            .cells
            .iter()
            .zip(&other.cells)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.cells.iter().map(|v| v * c).collect())
    }
}

/// Free function form of [`Coefficient::ellipticity_bounds`].
pub fn ellipticity_bounds(a: &Coefficient) -> (f64, f64) {
    a.ellipticity_bounds()
}

/// On-disk coefficient: mesh descriptor plus the flat array of cell values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFile {
    pub mesh: Mesh1D,
    pub cells: Vec<f64>,
}

impl CoefficientFile {
    pub fn new(mesh: &Mesh1D, a: &Coefficient) -> Self {
        Self {
            mesh: mesh.clone(),
            cells: a.cells().to_vec(),
        }
    }

    pub fn into_parts(self) -> Result<(Mesh1D, Coefficient)> {
        let mesh = Mesh1D::new(self.mesh.x_left, self.mesh.x_right, self.mesh.n_cells)?;
        if self.cells.len() != mesh.n_cells {
            return Err(Error::DimensionMismatch {
                what: "coefficient cells",
                expected: mesh.n_cells,
                actual: self.cells.len(),
            });
        }
        Ok((mesh, Coefficient::new(self.cells)?))
    }
}

/// Stiffness `K` and consistent mass `M` of the P1 discretization.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub mesh: Mesh1D,
    pub coefficient: Coefficient,
    pub stiffness: SymTridiagonal,
    pub mass: SymTridiagonal,
}

impl AssembledOperator {
    pub fn assemble(mesh: &Mesh1D, a: &Coefficient) -> Result<Self> {
        if a.n_cells() != mesh.n_cells {
            return Err(Error::DimensionMismatch {
                what: "coefficient cells vs mesh cells",
                expected: mesh.n_cells,
                actual: a.n_cells(),
            });
        }
        let n = mesh.n_nodes();
        let h = mesh.h();
        let mut k = SymTridiagonal::zeros(n);
        let mut m = SymTridiagonal::zeros(n);
        for (c, &ac) in a.cells().iter().enumerate() {
            let ks = ac / h;
            k.diag[c] += ks;
            k.diag[c + 1] += ks;
            k.off[c] -= ks;
            m.diag[c] += h / 3.0;
            m.diag[c + 1] += h / 3.0;
            m.off[c] += h / 6.0;
        }
        Ok(Self {
            mesh: mesh.clone(),
            coefficient: a.clone(),
            stiffness: k,
            mass: m,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    /// Mass-weighted mean `vᵀM1 / |D|`.
    pub fn mean(&self, v: &[f64]) -> f64 {
        let m1 = self.mass_times_ones();
        crate::linalg::dot(v, &m1) / self.mesh.length()
    }

    /// `M·1`, the lumped nodal weights.
    pub fn mass_times_ones(&self) -> Vec<f64> {
        self.mass.matvec(&vec![1.0; self.n_nodes()])
    }

    /// Removes the mass-weighted mean.
    pub fn project_zero_mean(&self, v: &mut [f64]) {
        let mu = self.mean(v);
        v.iter_mut().for_each(|x| *x -= mu);
    }

    pub fn rayleigh_quotient(&self, v: &[f64]) -> f64 {
        self.stiffness.bilinear(v, v) / self.mass.bilinear(v, v)
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.mass.bilinear(v, v).max(0.0).sqrt()
    }

    /// Direct solve of the integer-order Neumann problem `K p = M g` on the
    /// zero-mean space (`g` must have zero mass-weighted mean).
    ///
    /// The constant null space is removed by pinning the first node; the
    /// returned `p` is shifted to zero mean.
    pub fn solve_neumann(&self, g: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_nodes();
        if g.len() != n {
            return Err(Error::DimensionMismatch {
                what: "Neumann right-hand side",
                expected: n,
                actual: g.len(),
            });
        }
        let rhs = self.mass.matvec(g);
        let reduced = SymTridiagonal {
            diag: self.stiffness.diag[1..].to_vec(),
            off: self.stiffness.off[1..].to_vec(),
        };
        let tail = reduced.solve(&rhs[1..])?;
        let mut p = Vec::with_capacity(n);
        p.push(0.0);
        p.extend(tail);
        self.project_zero_mean(&mut p);
        Ok(p)
    }

    /// Perturbs one stiffness diagonal entry. Used only for fault injection
    /// in verification runs.
    #[doc(hidden)]
    pub fn corrupt_stiffness(&mut self, node: usize, delta: f64) {
        self.stiffness.diag[node] += delta;
    }

    /// `max_i |(K·1)_i|` relative to `max |K_ij|`.
    pub fn null_space_residual(&self) -> f64 {
        let r = self.stiffness.matvec(&vec![1.0; self.n_nodes()]);
        let scale = crate::linalg::max_abs(&self.stiffness.diag).max(f64::MIN_POSITIVE);
        crate::linalg::max_abs(&r) / scale
    }
}

/// Builds the uniform mesh; see [`Mesh1D::new`].
pub fn build_mesh(x_left: f64, x_right: f64, n_cells: usize) -> Result<Mesh1D> {
    Mesh1D::new(x_left, x_right, n_cells)
}

pub fn assemble(mesh: &Mesh1D, a: &Coefficient) -> Result<AssembledOperator> {
    AssembledOperator::assemble(mesh, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn four_cell_mesh_nodes() {
        let m = build_mesh(-PI, PI, 4).unwrap();
        let expected = [-PI, -PI / 2.0, 0.0, PI / 2.0, PI];
        for (x, e) in m.nodes().iter().zip(expected) {
            assert!((x - e).abs() < 1e-15);
        }
        assert!((m.h() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn mesh_spacing_arithmetic() {
        let m = build_mesh(-PI, PI, 1024).unwrap();
        assert!((m.h() - 2.0 * PI / 1024.0).abs() < 1e-15);
        let m = build_mesh(0.0, 1.0, 10).unwrap();
        assert_eq!(m.nodes().len(), 11);
        assert!((m.h() - 0.1).abs() < 1e-15);
        let nodes = m.nodes();
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn mesh_rejects_bad_input() {
        assert!(build_mesh(0.0, 1.0, 1).is_err());
        assert!(build_mesh(1.0, 1.0, 4).is_err());
        assert!(build_mesh(2.0, 1.0, 4).is_err());
    }

    #[test]
    fn textbook_stiffness_two_cells() {
        let mesh = build_mesh(0.0, 2.0, 2).unwrap();
        let a = Coefficient::constant(&mesh, 1.0).unwrap();
        let op = assemble(&mesh, &a).unwrap();
        let rows = op.stiffness.to_rows();
        let expected = [[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        for (r, e) in rows.iter().zip(expected) {
            for (u, v) in r.iter().zip(e) {
                assert!((u - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_is_linear_in_coefficient() {
        let mesh = build_mesh(-1.0, 3.0, 7).unwrap();
        let a = Coefficient::from_fn(&mesh, |x| 1.0 + 0.3 * x.sin()).unwrap();
        let op1 = assemble(&mesh, &a).unwrap();
        let op3 = assemble(&mesh, &a.scaled(3.0).unwrap()).unwrap();
        for (u, v) in op1.stiffness.diag.iter().zip(&op3.stiffness.diag) {
            assert!((3.0 * u - v).abs() < 1e-12);
        }
        for (u, v) in op1.stiffness.off.iter().zip(&op3.stiffness.off) {
            assert!((3.0 * u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn null_space_and_mass_total() {
        let mesh = build_mesh(-PI, PI, 64).unwrap();
        let a = Coefficient::from_fn(&mesh, |x| (0.4 * x.cos()).exp()).unwrap();
        let op = assemble(&mesh, &a).unwrap();
        assert!(op.null_space_residual() <= 1e-12);
        assert!((op.mass.total() - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn rayleigh_quotient_of_cosine() {
        let mesh = build_mesh(-PI, PI, 1024).unwrap();
        let a = Coefficient::constant(&mesh, 1.0).unwrap();
        let op = assemble(&mesh, &a).unwrap();
        let v: Vec<f64> = mesh.nodes().iter().map(|x| x.cos()).collect();
        assert!((op.rayleigh_quotient(&v) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn assemble_rejects_mismatch() {
        let mesh = build_mesh(0.0, 1.0, 4).unwrap();
        let a = Coefficient::new(vec![1.0; 3]).unwrap();
        assert!(matches!(assemble(&mesh, &a), Err(Error::DimensionMismatch { .. })));
        assert!(Coefficient::new(vec![1.0, 0.0]).is_err());
        assert!(Coefficient::new(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn ellipticity_examples() {
        let mesh = build_mesh(0.0, 1.0, 4).unwrap();
        assert_eq!(
            Coefficient::constant(&mesh, 2.0).unwrap().ellipticity_bounds(),
            (2.0, 2.0)
        );
        let a = Coefficient::new(vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(ellipticity_bounds(&a), (1.0, 3.0));
    }

    #[test]
    fn neumann_solve_recovers_cosine() {
        let mesh = build_mesh(-PI, PI, 512).unwrap();
        let op = assemble(&mesh, &Coefficient::constant(&mesh, 1.0).unwrap()).unwrap();
        let mut g: Vec<f64> = mesh.nodes().iter().map(|x| (2.0 * x).cos()).collect();
        op.project_zero_mean(&mut g);
        let p = op.solve_neumann(&g).unwrap();
        let err = mesh
            .nodes()
            .iter()
            .zip(&p)
            .fold(0.0_f64, |m, (x, v)| m.max((v - (2.0 * x).cos() / 4.0).abs()));
        assert!(err < 1e-4, "err = {err}");
    }

    #[test]
    fn coefficient_file_round_trip() {
        let mesh = build_mesh(-PI, PI, 3).unwrap();
        let a = Coefficient::new(vec![1.0, 3.0, 2.0]).unwrap();
        let json = serde_json::to_string(&CoefficientFile::new(&mesh, &a)).unwrap();
        assert!(json.contains("\"cells\":[1.0,3.0,2.0]"));
        let back: CoefficientFile = serde_json::from_str(&json).unwrap();
        let (m2, a2) = back.into_parts().unwrap();
        assert_eq!(m2, mesh);
        assert_eq!(a2, a);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ellipticity_gap_bounded_by_sup_distance(
                cells in proptest::collection::vec((0.1f64..5.0, 0.1f64..5.0), 2..40)
            ) {
                let (a, b): (Vec<f64>, Vec<f64>) = cells.into_iter().unzip();
                let a = Coefficient::new(a).unwrap();
                let b = Coefficient::new(b).unwrap();
                let d = a.sup_distance(&b).unwrap();
                let (la, ua) = a.ellipticity_bounds();
                let (lb, ub) = b.ellipticity_bounds();
                prop_assert!((la - lb).abs() <= d);
                prop_assert!((ua - ub).abs() <= d);
            }

            #[test]
            fn rayleigh_quotient_monotone_in_coefficient(
                base in proptest::collection::vec(0.2f64..3.0, 16),
                bump in 0.0f64..2.0,
                cell in 0usize..16,
                v in proptest::collection::vec(-1.0f64..1.0, 17),
            ) {
                let mesh = build_mesh(0.0, 1.0, 16).unwrap();
                let a = Coefficient::new(base.clone()).unwrap();
                let mut raised = base;
                raised[cell] += bump;
                let b = Coefficient::new(raised).unwrap();
                let oa = assemble(&mesh, &a).unwrap();
                let ob = assemble(&mesh, &b).unwrap();
                let mut v = v;
                oa.project_zero_mean(&mut v);
                prop_assume!(oa.l2_norm(&v) > 1e-6);
                prop_assert!(ob.rayleigh_quotient(&v) >= oa.rayleigh_quotient(&v) - 1e-12);
            }

            #[test]
            fn assembled_matrices_symmetric_with_null_space(
                cells in proptest::collection::vec(0.05f64..20.0, 2..50)
            ) {
                let mesh = build_mesh(-2.0, 1.0, cells.len()).unwrap();
                let op = assemble(&mesh, &Coefficient::new(cells).unwrap()).unwrap();
                // symmetry is structural (single off-diagonal); check the invariants
                prop_assert!(op.null_space_residual() <= 1e-12);
                prop_assert!((op.mass.total() - 3.0).abs() <= 1e-12);
            }
        }
    }
}
