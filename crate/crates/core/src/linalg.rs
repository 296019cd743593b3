//! Small dense kernels: symmetric tridiagonal matrices, a pivoted tridiagonal
//! solver and a banded Cholesky factorization.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix stored by its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            acc += x[i] * self.diag[i] * y[i];
            if i + 1 < n {
                acc += self.off[i] * (x[i] * y[i + 1] + x[i + 1] * y[i]);
            }
        }
        acc
    }

    /// Sum of all entries, i.e. `1ᵀ A 1`.
    pub fn total(&self) -> f64 {
        self.diag.iter().sum::<f64>() + 2.0 * self.off.iter().sum::<f64>()
    }

    /// `self − shift · other`.
    pub fn shifted(&self, shift: f64, other: &SymTridiagonal) -> SymTridiagonal {
        SymTridiagonal {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a - shift * b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a - shift * b).collect(),
        }
    }

    /// Number of negative pivots of the LDLᵀ factorization of `self − σ·other`.
    ///
    /// For `other` positive definite this is the number of generalized
    /// eigenvalues strictly below `σ` (Sylvester's law of inertia).
    pub fn inertia_below(&self, sigma: f64, other: &SymTridiagonal) -> usize {
        let n = self.dim();
        let mut count = 0;
        let mut d = 0.0_f64;
        for i in 0..n {
            let a = self.diag[i] - sigma * other.diag[i];
            d = if i == 0 {
                a
            } else {
                let b = self.off[i - 1] - sigma * other.off[i - 1];
                a - b * b / d
            };
            if d == 0.0 {
                d = -f64::EPSILON * (a.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][i] = self.diag[i];
            if i + 1 < n {
                rows[i][i + 1] = self.off[i];
                rows[i + 1][i] = self.off[i];
            }
        }
        rows
    }

    /// Solves `A x = b` for a nonsingular (possibly indefinite) matrix with
    /// partial pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        TridiagonalLu::factor(self)?.solve(rhs)
    }
}

/// LU factorization with partial pivoting of a tridiagonal matrix
/// (the LAPACK `gttrf` layout: one extra super-diagonal from row swaps).
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    dl: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    pub fn factor(a: &SymTridiagonal) -> Result<Self> {
        let n = a.dim();
        let mut d = a.diag.clone();
        let mut du = a.off.clone();
        let mut dl = a.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let scale = a
            .diag
            .iter()
            .chain(&a.off)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);

        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = f64::EPSILON * scale;
                }
                let l = dl[i] / d[i];
                dl[i] = l;
                d[i + 1] -= l * du[i];
            } else {
                let l = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = l;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - l * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -l;
                }
                swapped[i] = true;
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            // exactly singular; nudge so inverse iteration can proceed
            d[n - 1] = f64::EPSILON * scale;
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem(
                "non-finite pivot in tridiagonal factorization".into(),
            ));
        }
        Ok(Self {
            d,
            du,
            du2,
            dl,
            swapped,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.d.len();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                what: "tridiagonal right-hand side",
                expected: n,
                actual: rhs.len(),
            });
        }
        let mut x = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.dl[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            if i + 1 < n {
                v -= self.du[i] * x[i + 1];
            }
            if i + 2 < n {
                v -= self.du2[i] * x[i + 2];
            }
            x[i] = v / self.d[i];
        }
        Ok(x)
    }
}

/// Symmetric positive-definite band matrix, lower storage: `band[i][k]` holds
/// `A[i][i − k]` for `k = 0..=bw`.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, k: usize) -> usize {
        i * (self.bw + 1) + k
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= self.bw);
        let k = self.idx(r, r - c);
        self.band[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.band[self.idx(r, r - c)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.band[self.idx(i, i - j)];
                if a != 0.0 {
                    y[i] += a * x[j];
                    if i != j {
                        y[j] += a * x[i];
                    }
                }
            }
        }
        y
    }

    /// Replaces row and column `p` by the identity row (Dirichlet pin).
    pub fn pin(&mut self, p: usize) {
        for j in p.saturating_sub(self.bw)..p {
            let k = self.idx(p, p - j);
            self.band[k] = 0.0;
        }
        for i in p + 1..(p + self.bw + 1).min(self.n) {
            let k = self.idx(i, i - p);
            self.band[k] = 0.0;
        }
        let k = self.idx(p, 0);
        self.band[k] = 1.0;
    }

    /// In-place band Cholesky `A = L Lᵀ`.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let bw = self.bw;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut sum = self.band[self.idx(i, i - j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    sum -= self.band[self.idx(i, i - k)] * self.band[self.idx(j, j - k)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::SingularSystem(format!("band Cholesky pivot {sum:e} at row {i}")));
                    }
                    let k = self.idx(i, 0);
                    self.band[k] = sum.sqrt();
                } else {
                    let k = self.idx(i, i - j);
                    self.band[k] = sum / self.band[self.idx(j, 0)];
                }
            }
        }
        Ok(BandCholesky { factor: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    factor: SymBand,
}

impl BandCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let n = l.n;
        let bw = l.bw;
        let mut x = rhs.to_vec();
        for i in 0..n {
            let mut v = x[i];
            for k in i.saturating_sub(bw)..i {
                v -= l.band[l.idx(i, i - k)] * x[k];
            }
            x[i] = v / l.band[l.idx(i, 0)];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in i + 1..(i + bw + 1).min(n) {
                v -= l.band[l.idx(k, k - i)] * x[k];
            }
            x[i] = v / l.band[l.idx(i, 0)];
        }
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SymTridiagonal {
        SymTridiagonal {
            diag: vec![2.0, -1.0, 3.0, 0.5, 4.0],
            off: vec![1.0, 2.0, -1.5, 0.25],
        }
    }

    #[test]
    fn pivoted_solve_matches_dense_product() {
        let a = sample();
        let x_true = vec![1.0, -2.0, 0.5, 3.0, -1.0];
        let b = a.matvec(&x_true);
        let x = a.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_counts_negative_eigenvalues() {
        // diag(1, 2, 3) against identity: eigenvalues 1, 2, 3
        let a = SymTridiagonal {
            diag: vec![1.0, 2.0, 3.0],
            off: vec![0.0, 0.0],
        };
        let id = SymTridiagonal {
            diag: vec![1.0; 3],
            off: vec![0.0; 2],
        };
        assert_eq!(a.inertia_below(0.5, &id), 0);
        assert_eq!(a.inertia_below(1.5, &id), 1);
        assert_eq!(a.inertia_below(2.5, &id), 2);
        assert_eq!(a.inertia_below(10.0, &id), 3);
    }

    #[test]
    fn band_cholesky_solves_spd_system() {
        let n = 6;
        let mut a = SymBand::zeros(n, 2);
        for i in 0..n {
            a.add(i, i, 6.0);
            if i + 1 < n {
                a.add(i + 1, i, -1.0);
            }
            if i + 2 < n {
                a.add(i + 2, i, 0.5);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let b = a.matvec(&x_true);
        let x = a.clone().cholesky().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn band_cholesky_rejects_indefinite() {
        let mut a = SymBand::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(a.cholesky().is_err());
    }
}
