//! Degenerate elliptic extension problem `div(y^a B ∇P) = 0` on the truncated
//! strip `D × (0, Y_max)` with `a = 1 − 2s`. The Neumann trace `P(·, 0)`
//! approximates the fractional solution `L_A^{−s} f`.
//!
//! Bilinear (Q1) elements on a tensor grid, graded towards `y = 0`. The weight
//! `y^a` is frozen per layer at the layer midpoint, so every element integral
//! is exact for the frozen weight and the weight is never evaluated at `y = 0`.

use std::io::Write;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::linalg::{dot, SymBand};
use crate::mesh::{AssembledOperator, Coefficient, Mesh1D};
use crate::spectral::Field;

/// Normalization `c_s = 2^{1−2s} Γ(1−s) / Γ(s)` of the Neumann datum.
pub fn extension_constant(s: f64) -> f64 {
    2f64.powf(1.0 - 2.0 * s) * gamma(1.0 - s) / gamma(s)
}

/// Tensor grid: the base mesh in `x` and a graded partition in `y`.
#[derive(Debug, Clone)]
pub struct ExtensionGrid {
    mesh: Mesh1D,
    y_nodes: Vec<f64>,
    order: f64,
}

impl ExtensionGrid {
    /// `y_j = Y_max (j / layers)^grading`, `j = 0..=layers`.
    pub fn graded(mesh: &Mesh1D, s: f64, layers: usize, y_max: f64, grading: f64) -> Result<Self> {
        check_open_order(s)?;
        if layers < 1 {
            return Err(Error::InvalidArgument("need at least one y layer".into()));
        }
        if !(y_max.is_finite() && y_max > 0.0) {
            return Err(Error::InvalidArgument(format!("Y_max = {y_max} must be positive")));
        }
        if !(grading >= 1.0) {
            return Err(Error::InvalidArgument(format!("grading {grading} must be ≥ 1")));
        }
        let y_nodes = (0..=layers)
            .map(|j| y_max * (j as f64 / layers as f64).powf(grading))
            .collect();
        Ok(Self {
            mesh: mesh.clone(),
            y_nodes,
            order: s,
        })
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn y_nodes(&self) -> &[f64] {
        &self.y_nodes
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    /// `a = 1 − 2s`.
    pub fn a_exponent(&self) -> f64 {
        1.0 - 2.0 * self.order
    }

    pub fn nx(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn ny(&self) -> usize {
        self.y_nodes.len()
    }

    fn layer_weight(&self, j: usize) -> f64 {
        let mid = 0.5 * (self.y_nodes[j] + self.y_nodes[j + 1]);
        mid.powf(self.a_exponent())
    }
}

fn check_open_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::OrderOutOfRange { s, range: "(0, 1)" });
    }
    Ok(())
}

/// Nodal values `P(x_i, y_j)`, stored with `y` fastest.
#[derive(Debug, Clone)]
pub struct ExtensionField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
    energy: f64,
    boundary_work: f64,
}

impl ExtensionField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ny + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Level `j` as a nodal function of `x`.
    pub fn level(&self, j: usize) -> Vec<f64> {
        (0..self.nx).map(|i| self.at(i, j)).collect()
    }

    /// The trace `P(·, 0)`.
    pub fn trace(&self) -> Field {
        Field::from_raw(self.level(0))
    }

    /// `∫∫ ⟨B∇P, ∇P⟩ y^a` of the discrete solution.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `c_s ∫ f P(·, 0)`.
    pub fn boundary_work(&self) -> f64 {
        self.boundary_work
    }

    /// Relative mismatch of the discrete energy identity.
    pub fn energy_residual(&self) -> f64 {
        (self.energy - self.boundary_work).abs() / self.energy.abs().max(f64::MIN_POSITIVE)
    }

    pub fn write_csv<W: Write>(&self, grid: &ExtensionGrid, mut out: W) -> Result<()> {
        writeln!(out, "x,y,P")?;
        for i in 0..self.nx {
            let x = grid.mesh.node(i);
            for j in 0..self.ny {
                writeln!(out, "{x:.17e},{:.17e},{:.17e}", grid.y_nodes[j], self.at(i, j))?;
            }
        }
        Ok(())
    }
}

const MX: [[f64; 2]; 2] = [[2.0 / 6.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 6.0]];
const KX: [[f64; 2]; 2] = [[1.0, -1.0], [-1.0, 1.0]];

/// Quadratic form `Σ_cells w_j (a_i Kx⊗My + Mx⊗Ky)` evaluated on `u, v`.
fn weighted_form(grid: &ExtensionGrid, coef: Option<&[f64]>, u: &[f64], v: &[f64]) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let hx = grid.mesh.h();
    let mut acc = 0.0;
    for i in 0..nx - 1 {
        let ai = coef.map_or(1.0, |c| c[i]);
        for j in 0..ny - 1 {
            let hy = grid.y_nodes[j + 1] - grid.y_nodes[j];
            let w = grid.layer_weight(j);
            let at = |z: &[f64], p: usize, r: usize| z[(i + p) * ny + (j + r)];
            // x-differences on the two y-edges, y-differences on the two x-edges
            let dxu = [at(u, 1, 0) - at(u, 0, 0), at(u, 1, 1) - at(u, 0, 1)];
            let dxv = [at(v, 1, 0) - at(v, 0, 0), at(v, 1, 1) - at(v, 0, 1)];
            let dyu = [at(u, 0, 1) - at(u, 0, 0), at(u, 1, 1) - at(u, 1, 0)];
            let dyv = [at(v, 0, 1) - at(v, 0, 0), at(v, 1, 1) - at(v, 1, 0)];
            let mut ex = 0.0;
            let mut ey = 0.0;
            for r in 0..2 {
                for t in 0..2 {
                    ex += MX[r][t] * dxu[r] * dxv[t];
                    ey += MX[r][t] * dyu[r] * dyv[t];
                }
            }
            acc += w * (ai * ex * hy / hx + ey * hx / hy);
        }
    }
    acc
}

/// Solves the discrete extension problem with Neumann datum `c_s f` at `y = 0`.
pub fn solve_extension(a: &Coefficient, s: f64, f: &Field, grid: &ExtensionGrid) -> Result<ExtensionField> {
    check_open_order(s)?;
    if (grid.order - s).abs() > 1e-14 {
        return Err(Error::InvalidArgument(format!(
            "grid built for s = {} but solve requested s = {s}",
            grid.order
        )));
    }
    let op = AssembledOperator::assemble(&grid.mesh, a)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    if f.len() != nx {
        return Err(Error::DimensionMismatch {
            what: "source field",
            expected: nx,
            actual: f.len(),
        });
    }
    let mean = op.mean(f.values());
    let scale = op.l2_norm(f.values()) / op.mesh.length().sqrt();
    if mean.abs() > 1e-10 * scale.max(1e-300) && mean.abs() > 1e-14 {
        return Err(Error::NotZeroMean { mean });
    }

    // order unknowns along the shorter direction first to keep the band narrow
    let y_fast = ny <= nx;
    let perm = |i: usize, j: usize| if y_fast { i * ny + j } else { j * nx + i };
    let bw = if y_fast { ny + 1 } else { nx + 1 };
    let n = nx * ny;
    let mut mat = SymBand::zeros(n, bw);
    let hx = grid.mesh.h();
    let cells = a.cells();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let hy = grid.y_nodes[j + 1] - grid.y_nodes[j];
            let w = grid.layer_weight(j);
            for p in 0..2 {
                for r in 0..2 {
                    let row = perm(i + p, j + r);
                    for q in 0..2 {
                        for t in 0..2 {
                            let col = perm(i + q, j + t);
                            if col > row {
                                continue;
                            }
                            let e = cells[i] * KX[p][q] / hx * MX[r][t] * hy + MX[p][q] * hx * KX[r][t] / hy;
                            mat.add(row, col, w * e);
                        }
                    }
                }
            }
        }
    }

    let cs = extension_constant(s);
    let mf = op.mass.matvec(f.values());
    let mut rhs = vec![0.0; n];
    for i in 0..nx {
        rhs[perm(i, 0)] = cs * mf[i];
    }

    // constants span the null space; pin one node, the datum is compatible
    let pinned = perm(nx - 1, ny - 1);
    mat.pin(pinned);
    rhs[pinned] = 0.0;
    // one refinement step: the graded layers make the band stiff, and the
    // energy identity is sensitive to the algebraic residual
    let chol = mat.clone().cholesky()?;
    let mut sol = chol.solve(&rhs);
    let residual: Vec<f64> = rhs.iter().zip(mat.matvec(&sol)).map(|(b, ax)| b - ax).collect();
    sol.iter_mut().zip(chol.solve(&residual)).for_each(|(x, d)| *x += d);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("non-finite extension solution".into()));
    }

    let mut values = vec![0.0; n];
    for i in 0..nx {
        for j in 0..ny {
            values[i * ny + j] = sol[perm(i, j)];
        }
    }
    // per-level zero mean
    let m1 = op.mass_times_ones();
    let length = op.mesh.length();
    for j in 0..ny {
        let level: Vec<f64> = (0..nx).map(|i| values[i * ny + j]).collect();
        let mu = dot(&level, &m1) / length;
        for i in 0..nx {
            values[i * ny + j] -= mu;
        }
    }

    let energy = weighted_form(grid, Some(cells), &values, &values);
    let trace: Vec<f64> = (0..nx).map(|i| values[i * ny]).collect();
    let boundary_work = cs * dot(&mf, &trace);
    Ok(ExtensionField {
        nx,
        ny,
        values,
        energy,
        boundary_work,
    })
}

/// `(∫∫ |∇P|² y^a)^{1/2}` on the grid.
pub fn weighted_h1_seminorm(p: &ExtensionField, grid: &ExtensionGrid) -> f64 {
    weighted_form(grid, None, &p.values, &p.values).max(0.0).sqrt()
}

/// Seminorm of the difference of two fields on the same grid.
pub fn weighted_h1_distance(p: &ExtensionField, q: &ExtensionField, grid: &ExtensionGrid) -> f64 {
    let d: Vec<f64> = p.values.iter().zip(&q.values).map(|(a, b)| a - b).collect();
    weighted_form(grid, None, &d, &d).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::spectral::eigendecompose;
    use std::f64::consts::PI;

    fn setup(n: usize) -> (Mesh1D, Coefficient, AssembledOperator) {
        let mesh = build_mesh(-PI, PI, n).unwrap();
        let a = Coefficient::constant(&mesh, 1.0).unwrap();
        let op = AssembledOperator::assemble(&mesh, &a).unwrap();
        (mesh, a, op)
    }

    fn rel_l2(op: &AssembledOperator, u: &[f64], v: &[f64]) -> f64 {
        let d: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        op.l2_norm(&d) / op.l2_norm(v)
    }

    #[test]
    fn constant_matches_closed_form_at_half() {
        // Γ(1/2)/Γ(1/2) = 1
        assert!((extension_constant(0.5) - 1.0).abs() < 1e-14);
        assert!(extension_constant(0.3) > 0.0);
    }

    #[test]
    fn rejects_bad_orders_and_grids() {
        let (mesh, a, op) = setup(8);
        assert!(ExtensionGrid::graded(&mesh, 0.0, 4, 8.0, 3.0).is_err());
        assert!(ExtensionGrid::graded(&mesh, 1.0, 4, 8.0, 3.0).is_err());
        assert!(ExtensionGrid::graded(&mesh, 0.5, 4, 8.0, 0.5).is_err());
        let grid = ExtensionGrid::graded(&mesh, 0.5, 4, 8.0, 3.0).unwrap();
        let f = Field::interpolate(&op, |x| x.cos());
        assert!(solve_extension(&a, 0.4, &f, &grid).is_err());
        assert!((grid.a_exponent()).abs() < 1e-15);
        assert!(grid.y_nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_mode_trace_is_fixed_point() {
        let (mesh, a, op) = setup(128);
        let f = Field::interpolate(&op, |x| x.cos());
        let grid = ExtensionGrid::graded(&mesh, 0.5, 64, 8.0, 3.0).unwrap();
        let sol = solve_extension(&a, 0.5, &f, &grid).unwrap();
        let err = rel_l2(&op, sol.trace().values(), f.values());
        assert!(err <= 5e-2, "{err}");
    }

    #[test]
    fn energy_identity_is_discretely_exact() {
        let (mesh, _, op) = setup(64);
        let a = Coefficient::from_fn(&mesh, |x| 1.0 + 0.4 * x.sin()).unwrap();
        let f = Field::interpolate(&op, |x| (0.5 * x).cos() + 0.2 * x);
        for s in [0.3, 0.5, 0.8] {
            let grid = ExtensionGrid::graded(&mesh, s, 32, 8.0, 3.0).unwrap();
            let sol = solve_extension(&a, s, &f, &grid).unwrap();
            assert!(sol.energy_residual() <= 1e-8, "s = {s}: {}", sol.energy_residual());
        }
    }

    #[test]
    fn every_level_has_zero_mean() {
        let (mesh, a, op) = setup(64);
        let f = Field::interpolate(&op, |x| (1.5 * x).sin() + x.cos());
        let grid = ExtensionGrid::graded(&mesh, 0.3, 24, 8.0, 3.0).unwrap();
        let sol = solve_extension(&a, 0.3, &f, &grid).unwrap();
        for j in 0..grid.ny() {
            let level = sol.level(j);
            let norm = op.l2_norm(&level).max(1e-300);
            assert!(op.mean(&level).abs() * op.mesh.length().sqrt() <= 1e-8 * norm.max(1e-12));
        }
    }

    #[test]
    fn seminorm_vanishes_on_constants() {
        let (mesh, _, _) = setup(16);
        let grid = ExtensionGrid::graded(&mesh, 0.5, 8, 8.0, 3.0).unwrap();
        let (nx, ny) = (grid.nx(), grid.ny());
        let zero = ExtensionField {
            nx,
            ny,
            values: vec![0.0; nx * ny],
            energy: 0.0,
            boundary_work: 0.0,
        };
        assert_eq!(weighted_h1_seminorm(&zero, &grid), 0.0);
        let constant = ExtensionField {
            values: vec![2.5; nx * ny],
            ..zero
        };
        assert!(weighted_h1_seminorm(&constant, &grid) < 1e-10);
    }

    #[test]
    fn coefficient_lipschitz_bound_in_weighted_seminorm() {
        let (mesh, _, op) = setup(64);
        let f = Field::interpolate(&op, |x| (0.5 * x).cos());
        let a = Coefficient::from_fn(&mesh, |x| 0.8 + 0.3 * x.cos()).unwrap();
        let b = Coefficient::from_fn(&mesh, |x| 0.8 + 0.3 * x.cos() + 0.05 * (2.0 * x).sin()).unwrap();
        let s = 0.6;
        let grid = ExtensionGrid::graded(&mesh, s, 32, 8.0, 3.0).unwrap();
        let pa = solve_extension(&a, s, &f, &grid).unwrap();
        let pb = solve_extension(&b, s, &f, &grid).unwrap();
        let lhs = weighted_h1_distance(&pa, &pb, &grid);
        let (lambda_a, _) = a.ellipticity_bounds();
        let rhs = (1.0f64).max(1.0 / lambda_a) * a.sup_distance(&b).unwrap() * weighted_h1_seminorm(&pb, &grid);
        assert!(lhs <= 2.0 * rhs, "{lhs} > 2 × {rhs}");
    }

    #[test]
    fn trace_error_decreases_under_refinement() {
        let mut errors = Vec::new();
        for (n, m) in [(32, 16), (64, 32), (128, 64)] {
            let (mesh, a, op) = setup(n);
            let f = Field::interpolate(&op, |x| (0.5 * x).cos() - (0.5 * PI).sin() / (0.5 * PI));
            let eig = eigendecompose(&op, n).unwrap();
            let reference = eig.fractional_solve(&f, 0.5).unwrap();
            let grid = ExtensionGrid::graded(&mesh, 0.5, m, 8.0, 3.0).unwrap();
            let sol = solve_extension(&a, 0.5, &f, &grid).unwrap();
            errors.push(rel_l2(&op, sol.trace().values(), reference.values()));
        }
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    }

    #[test]
    fn trace_norm_ratio_is_refinement_stable() {
        let mut ratios = Vec::new();
        for (n, m) in [(64, 32), (128, 64)] {
            let (mesh, a, op) = setup(n);
            let f = Field::interpolate(&op, |x| x.cos() + 0.5 * (2.0 * x).cos());
            let eig = eigendecompose(&op, n).unwrap();
            let grid = ExtensionGrid::graded(&mesh, 0.4, m, 8.0, 3.0).unwrap();
            let sol = solve_extension(&a, 0.4, &f, &grid).unwrap();
            let trace_norm = eig.hs_seminorm(&sol.trace(), 0.4);
            ratios.push(trace_norm / weighted_h1_seminorm(&sol, &grid));
        }
        assert!((ratios[1] / ratios[0] - 1.0).abs() < 0.05, "{ratios:?}");
    }

    #[test]
    fn csv_dump_lists_every_node() {
        let (mesh, a, op) = setup(4);
        let grid = ExtensionGrid::graded(&mesh, 0.5, 2, 8.0, 3.0).unwrap();
        let f = Field::interpolate(&op, |x| x.cos());
        let sol = solve_extension(&a, 0.5, &f, &grid).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&grid, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 * 3);
    }
}
