//! Reusable experiment fixtures: the cosine-source problem with `a ≡ 1` and
//! seeded random coefficient pairs for perturbation studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::OrderOnlyModel;
use crate::error::Result;
use crate::forward::{add_noise, analytic_source, DataVector, ObservationSetup};
use crate::mesh::{AssembledOperator, Coefficient, Mesh1D};
use crate::metrics::{eigen_perturbation_check, forward_lipschitz_probe, PerturbationReport};
use crate::prior::CoefficientPrior;
use crate::spectral::{eigendecompose, Field};

/// `(−Δ)^s p = cos(bx) − sin(bπ)/(bπ)` on `[−π, π]` with Neumann conditions.
#[derive(Debug, Clone)]
pub struct CosineProblem {
    pub mesh: Mesh1D,
    pub b: f64,
    pub op: AssembledOperator,
    pub source: Field,
}

impl CosineProblem {
    pub fn new(n_cells: usize, b: f64) -> Result<Self> {
        analytic_source(b, 0.0)?;
        let mesh = Mesh1D::periodic_box(n_cells)?;
        let op = AssembledOperator::assemble(&mesh, &Coefficient::constant(&mesh, 1.0)?)?;
        let source = Field::interpolate(&op, |x| analytic_source(b, x).unwrap_or(f64::NAN));
        Ok(Self { mesh, b, op, source })
    }

    pub fn unit_coefficient(&self) -> &Coefficient {
        &self.op.coefficient
    }

    /// The `s`-only forward map for `a ≡ 1` at the given observation points.
    pub fn order_model(&self, points: &[f64], modes: usize) -> Result<OrderOnlyModel> {
        OrderOnlyModel::new(&self.mesh, self.unit_coefficient(), &self.source, points, modes)
    }

    /// Noisy data `G(s*) + γ ξ` for the `s`-only model.
    pub fn synthesize(
        &self,
        model: &OrderOnlyModel,
        setup: &ObservationSetup,
        s_star: f64,
        seed: u64,
    ) -> Result<(DataVector, Vec<f64>)> {
        let clean = model.observe_s(s_star)?;
        let y = add_noise(&clean, setup.gamma, seed);
        Ok((DataVector::new(setup, y, seed)?, clean))
    }
}

/// Resolution on which pair amplitudes are measured, independent of the
/// mesh the pair is later realized on.
pub const REFERENCE_CELLS: usize = 4096;

/// Seeded pair of smooth coefficients `a = exp(−v(ξ))`, `a′ = a + t·w`,
/// where `w` is a KL field scaled so that `‖a − a′‖_∞ = amplitude` on the
/// reference grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPair {
    pub prior: CoefficientPrior,
    pub base_xi: Vec<f64>,
    pub direction_xi: Vec<f64>,
    pub amplitude: f64,
    scale: f64,
}

impl CoefficientPair {
    pub fn random(prior: CoefficientPrior, amplitude: f64, seed: u64, domain: &Mesh1D) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            (0..prior.n_kl)
                .map(|_| rng.sample(StandardNormal))
                .collect::<Vec<f64>>()
        };
        let base_xi = draw();
        let direction_xi = draw();
        let reference = Mesh1D::new(domain.x_left, domain.x_right, REFERENCE_CELLS)?;
        let unit = CoefficientPrior {
            sigma_v: 1.0,
            mean_shift: 0.0,
            ..prior
        };
        let sup = (0..reference.n_cells)
            .map(|c| {
                unit.log_field(&direction_xi, &reference, reference.cell_midpoint(c))
                    .abs()
            })
            .fold(0.0, f64::max);
        Ok(Self {
            prior,
            base_xi,
            direction_xi,
            amplitude,
            scale: amplitude / sup,
        })
    }

    /// `(a, a′)` sampled at the midpoints of `mesh`.
    pub fn realize(&self, mesh: &Mesh1D) -> Result<(Coefficient, Coefficient)> {
        let unit = CoefficientPrior {
            sigma_v: 1.0,
            mean_shift: 0.0,
            ..self.prior
        };
        let a = self.prior.realize(&self.base_xi, mesh)?;
        let shifted = a
            .cells()
            .iter()
            .enumerate()
            .map(|(c, v)| v + self.scale * unit.log_field(&self.direction_xi, mesh, mesh.cell_midpoint(c)))
            .collect();
        Ok((a, Coefficient::new(shifted)?))
    }
}

/// Amplitude of pair `k`: log-uniform in `[max/100, max]` along a golden-ratio
/// sequence, so that small and large perturbations are both represented.
pub fn pair_amplitude(max_amplitude: f64, k: usize) -> f64 {
    let u = (k as f64 * 0.618_033_988_749_894_9).fract();
    max_amplitude * 10f64.powf(-2.0 * u)
}

/// Constants measured on one resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConstants {
    pub n_cells: usize,
    /// `max ‖L_a^{−1} − L_{a′}^{−1}‖ λ_A λ_{A′} / ‖Δa‖_∞`.
    pub op_norm: f64,
    /// `max_i |1/λ_i − 1/λ′_i| / ‖Δa‖_∞`.
    pub eigenvalue: f64,
    /// `max_i ‖ψ_i − ψ′_i‖ / ‖Δa‖_∞` over pairs meeting the gap condition.
    pub eigvec: f64,
    /// `max [p_a − p_{a′}]_{H^s} λ_1^s / (max{1, 1/λ_A} ‖Δa‖_∞)`.
    pub forward: f64,
    pub applicable_pairs: usize,
    /// Largest `|1/λ_i − 1/λ′_i| / ‖L_a^{−1} − L_{a′}^{−1}‖` (≤ 1 by Weyl).
    pub weyl_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStudy {
    pub amplitudes: Vec<f64>,
    pub coarse: PerturbationConstants,
    pub fine: PerturbationConstants,
}

impl PerturbationStudy {
    /// `(name, fine / coarse − 1)` for each calibrated constant.
    pub fn drifts(&self) -> [(&'static str, f64); 4] {
        let d = |f: f64, c: f64| if c > 0.0 { f / c - 1.0 } else { 0.0 };
        [
            ("op_norm", d(self.fine.op_norm, self.coarse.op_norm)),
            ("eigenvalue", d(self.fine.eigenvalue, self.coarse.eigenvalue)),
            ("eigvec", d(self.fine.eigvec, self.coarse.eigvec)),
            ("forward", d(self.fine.forward, self.coarse.forward)),
        ]
    }
}

/// Settings of [`perturbation_study`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudySettings {
    pub prior: CoefficientPrior,
    pub pairs: usize,
    pub max_amplitude: f64,
    pub coarse_cells: usize,
    pub fine_cells: usize,
    pub n_eigen: usize,
    /// Order and source frequency of the forward-map probe.
    pub s: f64,
    pub b: f64,
    pub seed: u64,
}

fn constants_on(settings: &StudySettings, pairs: &[CoefficientPair], n_cells: usize) -> Result<PerturbationConstants> {
    let problem = CosineProblem::new(n_cells, settings.b)?;
    let modes = (4 * settings.n_eigen).max(64).min(n_cells);
    let rows = pairs
        .par_iter()
        .map(|pair| {
            let (a, b) = pair.realize(&problem.mesh)?;
            let oa = AssembledOperator::assemble(&problem.mesh, &a)?;
            let ob = AssembledOperator::assemble(&problem.mesh, &b)?;
            let rep = eigen_perturbation_check(&oa, &ob, settings.n_eigen)?;
            let probe = forward_lipschitz_probe(settings.s, &oa, &ob, &problem.source, modes)?;
            let lambda1 = eigendecompose(&oa, 1)?.eigenvalues()[0];
            let shape = (1.0 / rep.ellipticity.0).max(1.0) / lambda1.powf(settings.s);
            let weyl = rep.reciprocal_gaps.iter().copied().fold(0.0, f64::max) / rep.op_norm;
            Ok((rep, probe / shape, weyl))
        })
        .collect::<Result<Vec<_>>>()?;
    let max = |f: &dyn Fn(&(PerturbationReport, f64, f64)) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(PerturbationConstants {
        n_cells,
        op_norm: max(&|r| r.0.op_norm_constant),
        eigenvalue: max(&|r| r.0.eigenvalue_constant),
        eigvec: max(&|r| if r.0.applicable { r.0.eigvec_constant } else { 0.0 }),
        forward: max(&|r| r.1),
        applicable_pairs: rows.iter().filter(|r| r.0.applicable).count(),
        weyl_ratio: max(&|r| r.2),
    })
}

/// Calibrates the perturbation constants on `coarse_cells` and re-measures
/// them on `fine_cells` for the same continuous coefficient pairs.
pub fn perturbation_study(settings: &StudySettings) -> Result<PerturbationStudy> {
    let domain = Mesh1D::periodic_box(2)?;
    let amplitudes: Vec<f64> = (0..settings.pairs)
        .map(|k| pair_amplitude(settings.max_amplitude, k))
        .collect();
    let pairs = amplitudes
        .iter()
        .enumerate()
        .map(|(k, amp)| CoefficientPair::random(settings.prior, *amp, settings.seed.wrapping_add(k as u64), &domain))
        .collect::<Result<Vec<_>>>()?;
    Ok(PerturbationStudy {
        coarse: constants_on(settings, &pairs, settings.coarse_cells)?,
        fine: constants_on(settings, &pairs, settings.fine_cells)?,
        amplitudes,
    })
}

/// Monotonicity of posterior spread over an `m × γ` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// `(row, col, next/previous − 1)` for each adjacent increase.
    pub inversions: Vec<(usize, usize, f64)>,
    pub pass: bool,
}

/// `std[i][j]`: row `i` is an observation count (increasing), column `j` a
/// noise level (decreasing). Spread must not increase along rows or columns;
/// one increase of at most `tolerance` is allowed.
pub fn concentration_check(std: &[Vec<f64>], tolerance: f64) -> ConcentrationReport {
    let mut inversions = Vec::new();
    for (i, row) in std.iter().enumerate() {
        for j in 0..row.len() {
            if j + 1 < row.len() && row[j + 1] > row[j] {
                inversions.push((i, j + 1, row[j + 1] / row[j] - 1.0));
            }
            if i + 1 < std.len() && std[i + 1][j] > row[j] {
                inversions.push((i + 1, j, std[i + 1][j] / row[j] - 1.0));
            }
        }
    }
    let pass = inversions.len() <= 1 && inversions.iter().all(|(_, _, r)| *r <= tolerance);
    ConcentrationReport { inversions, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_problem_source_is_zero_mean() {
        let p = CosineProblem::new(256, 0.5).unwrap();
        assert!(p.op.mean(p.source.values()).abs() < 1e-12);
        assert!(CosineProblem::new(256, 1.0).is_err());
    }

    #[test]
    fn synthesized_data_is_seeded() {
        let p = CosineProblem::new(128, 0.5).unwrap();
        let setup = ObservationSetup::uniform_grid(7, 0.1).unwrap();
        let model = p.order_model(&setup.points, 64).unwrap();
        let (d1, clean) = p.synthesize(&model, &setup, 0.7, 3).unwrap();
        let (d2, _) = p.synthesize(&model, &setup, 0.7, 3).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(clean.len(), 7);
    }

    #[test]
    fn pair_amplitude_matches_request_on_fine_meshes() {
        let domain = Mesh1D::periodic_box(2).unwrap();
        let pair = CoefficientPair::random(CoefficientPrior::default(), 0.05, 8, &domain).unwrap();
        for n in [512, 2048] {
            let mesh = Mesh1D::periodic_box(n).unwrap();
            let (a, b) = pair.realize(&mesh).unwrap();
            let gap = a.sup_distance(&b).unwrap();
            assert!((0.049..=0.05 * (1.0 + 1e-9)).contains(&gap), "{gap}");
        }
        assert_eq!(
            pair,
            CoefficientPair::random(CoefficientPrior::default(), 0.05, 8, &domain).unwrap()
        );
    }

    #[test]
    fn amplitudes_span_two_decades() {
        let amps: Vec<f64> = (0..20).map(|k| pair_amplitude(0.1, k)).collect();
        assert_eq!(amps[0], 0.1);
        assert!(amps.iter().all(|a| (0.001..=0.1).contains(a)));
        assert!(amps.iter().any(|a| *a < 0.005) && amps.iter().any(|a| *a > 0.05));
    }

    #[test]
    fn concentration_rules() {
        let good = vec![vec![0.3, 0.2, 0.1], vec![0.2, 0.1, 0.05]];
        assert!(concentration_check(&good, 0.1).pass);
        let one_small = vec![vec![0.3, 0.31, 0.1], vec![0.2, 0.1, 0.05]];
        let r = concentration_check(&one_small, 0.1);
        assert!(r.pass && r.inversions.len() == 1);
        let one_large = vec![vec![0.3, 0.4, 0.1], vec![0.2, 0.1, 0.05]];
        assert!(!concentration_check(&one_large, 0.1).pass);
        let two = vec![vec![0.3, 0.31, 0.1], vec![0.31, 0.1, 0.05]];
        assert!(!concentration_check(&two, 0.1).pass);
    }

    #[test]
    fn small_study_is_consistent() {
        let st = perturbation_study(&StudySettings {
            prior: CoefficientPrior::default(),
            pairs: 4,
            max_amplitude: 0.01,
            coarse_cells: 64,
            fine_cells: 128,
            n_eigen: 3,
            s: 0.7,
            b: 0.5,
            seed: 1,
        })
        .unwrap();
        assert!(st.coarse.weyl_ratio <= 1.0 + 1e-6 && st.fine.weyl_ratio <= 1.0 + 1e-6);
        for (name, d) in st.drifts() {
            assert!(d.abs() < 0.1, "{name}: {d}");
        }
    }
}
