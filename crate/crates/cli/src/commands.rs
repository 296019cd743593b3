//! The five pipelines. Each computes into plain serializable values first and
//! writes its artifacts only after every step succeeded.

use fracbayes_core::bayes::{posterior_grid_1d, OrderOnlyModel, PosteriorDensity1D, PosteriorSummary};
use fracbayes_core::experiment::{
    concentration_check, perturbation_study, CoefficientPair, ConcentrationReport, CosineProblem, PerturbationStudy,
    StudySettings,
};
use fracbayes_core::extension::{solve_extension, ExtensionGrid};
use fracbayes_core::forward::{analytic_solution, synth_data, DataVector, ObservationSetup, Solver};
use fracbayes_core::mesh::{AssembledOperator, Coefficient, Mesh1D};
use fracbayes_core::metrics::{
    hellinger_1d, holder_interpolation_check, random_direction, wellposedness_sweep, HellingerReport, HOLDER_CONSTANT,
};
use fracbayes_core::spectral::{eigendecompose, Field};
use fracbayes_core::{pcn_mcmc, ForwardModel, JointModel};
use serde::Serialize;

use crate::config::{FaultInjection, RunConfig};
use crate::error::CliError;
use crate::output::OutputDir;

/// Noise and chain streams are decorrelated by offsetting the run seed.
const CHAIN_SEED_OFFSET: u64 = 0x9e37_79b9;
const DIRECTION_SEED_OFFSET: u64 = 7;

/// Mesh, source and true coefficient shared by all pipelines.
struct Setting {
    problem: CosineProblem,
    truth: Coefficient,
}

impl Setting {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let problem = CosineProblem::new(cfg.mesh.n_cells, cfg.source.b)?;
        let truth = match &cfg.truth.xi {
            None => problem.unit_coefficient().clone(),
            Some(xi) => cfg.prior()?.realize_coefficient(xi, &problem.mesh)?,
        };
        Ok(Self { problem, truth })
    }

    fn mesh(&self) -> &Mesh1D {
        &self.problem.mesh
    }

    fn order_model(&self, points: &[f64], modes: usize) -> Result<OrderOnlyModel, CliError> {
        Ok(OrderOnlyModel::new(
            self.mesh(),
            &self.truth,
            &self.problem.source,
            points,
            modes,
        )?)
    }

    /// Data from the `s`-only model at the true coefficient.
    fn data(&self, model: &OrderOnlyModel, m: usize, gamma: f64, s: f64, seed: u64) -> Result<DataVector, CliError> {
        let setup = ObservationSetup::uniform_grid(m, gamma)?;
        let clean = model.observe_s(s)?;
        let y = fracbayes_core::forward::add_noise(&clean, gamma, seed);
        Ok(DataVector::new(&setup, y, seed)?)
    }
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Serialize)]
struct SynthArtifact {
    #[serde(flatten)]
    data: DataVector,
    s_star: f64,
    noiseless: Vec<f64>,
}

pub fn synth(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let setting = Setting::new(cfg)?;
    let setup = ObservationSetup::uniform_grid(cfg.observation.m, cfg.observation.gamma)?;
    let (data, noiseless) = synth_data(
        setting.mesh(),
        cfg.truth.s,
        &setting.truth,
        cfg.source.b,
        &setup,
        Solver::Spectral { modes: cfg.mesh.modes },
        cfg.seed,
    )?;
    out.write_json(
        "data.json",
        &SynthArtifact {
            data,
            s_star: cfg.truth.s,
            noiseless,
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------- posterior-grid

#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub m: usize,
    pub gamma: f64,
    pub file: String,
    #[serde(flatten)]
    pub summary: PosteriorSummary,
    pub log_z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub s_star: f64,
    pub cells: Vec<GridCell>,
    pub concentration: ConcentrationReport,
    /// `|mode − s*|` in the cell with most observations and least noise.
    pub finest_mode_error: f64,
}

/// Relative size of the single tolerated increase of posterior spread.
pub const CONCENTRATION_TOLERANCE: f64 = 0.1;

fn density_name(m: usize, gamma: f64) -> String {
    format!("density_m{m}_gamma{gamma}.csv")
}

/// Posterior densities over the full `m × γ` table; one eigendecomposition
/// serves every cell.
pub fn posterior_sweep(
    cfg: &RunConfig,
    ms: &[usize],
    gammas: &[f64],
) -> Result<(SweepSummary, Vec<PosteriorDensity1D>), CliError> {
    let setting = Setting::new(cfg)?;
    let prior = cfg.prior()?;
    let eig = eigendecompose(
        &AssembledOperator::assemble(setting.mesh(), &setting.truth)?,
        cfg.mesh.modes,
    )?;
    let mut cells = Vec::new();
    let mut densities = Vec::new();
    let mut std = Vec::new();
    for &m in ms {
        let points = ObservationSetup::uniform_grid(m, 1.0)?.points;
        let sweep =
            fracbayes_core::forward::OrderSweepModel::new(setting.mesh(), &eig, &setting.problem.source, &points)?;
        let model = OrderOnlyModel::from_sweep(sweep);
        let mut row = Vec::new();
        for &gamma in gammas {
            let data = setting.data(&model, m, gamma, cfg.truth.s, cfg.seed)?;
            let density = posterior_grid_1d(&model, &data, &prior.order, &[], cfg.experiment.grid_points)?;
            let summary = density.summary();
            row.push(summary.std);
            cells.push(GridCell {
                m,
                gamma,
                file: density_name(m, gamma),
                summary,
                log_z: density.log_z,
            });
            densities.push(density);
        }
        std.push(row);
    }
    let finest = cells.last().expect("non-empty sweep");
    let finest_mode_error = (finest.summary.mode - cfg.truth.s).abs();
    Ok((
        SweepSummary {
            s_star: cfg.truth.s,
            concentration: concentration_check(&std, CONCENTRATION_TOLERANCE),
            finest_mode_error,
            cells,
        },
        densities,
    ))
}

pub fn posterior_grid(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let (ms, gammas) = match &cfg.experiment.sweep {
        Some(sweep) => (sweep.m.clone(), sweep.gamma.clone()),
        None => (vec![cfg.observation.m], vec![cfg.observation.gamma]),
    };
    let (summary, densities) = posterior_sweep(cfg, &ms, &gammas)?;
    if cfg.experiment.sweep.is_some() {
        for (cell, density) in summary.cells.iter().zip(&densities) {
            out.write_csv(&cell.file, |w| density.write_csv(w))?;
        }
        out.write_json("summary.json", &summary)?;
    } else {
        out.write_csv("density.csv", |w| densities[0].write_csv(w))?;
        out.write_json("summary.json", &summary.cells[0])?;
    }
    Ok(())
}

// ---------------------------------------------------------------- mcmc

#[derive(Debug, Serialize)]
struct McmcArtifact {
    n_steps: usize,
    burn_in: usize,
    beta: f64,
    infer_coefficient: bool,
    m: usize,
    acceptance_rate: f64,
    longest_rejection_run: usize,
    stalled: bool,
    s: PosteriorSummary,
    xi_mean: Vec<f64>,
}

pub fn mcmc(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let setting = Setting::new(cfg)?;
    let prior = cfg.prior()?;
    let block = cfg.experiment.mcmc;
    let points = ObservationSetup::uniform_grid(cfg.observation.m, 1.0)?.points;
    let order_model = setting.order_model(&points, cfg.mesh.modes)?;
    let data = setting.data(
        &order_model,
        cfg.observation.m,
        cfg.observation.gamma,
        cfg.truth.s,
        cfg.seed,
    )?;
    let joint;
    let model: &dyn ForwardModel = if block.infer_coefficient {
        let inversion = CosineProblem::new(block.n_cells, cfg.source.b)?;
        joint = JointModel::new(
            &inversion.mesh,
            prior.coefficient,
            inversion.source,
            &points,
            block.modes,
        )?;
        &joint
    } else {
        &order_model
    };
    let chain = pcn_mcmc(
        model,
        &data,
        &prior,
        &cfg.mcmc_config(),
        cfg.seed.wrapping_add(CHAIN_SEED_OFFSET),
    )?;
    let kept = &chain.samples[block.burn_in..];
    let n_kl = model.n_kl();
    let xi_mean = (0..n_kl)
        .map(|k| kept.iter().map(|u| u.xi[k]).sum::<f64>() / kept.len() as f64)
        .collect();
    let summary = McmcArtifact {
        n_steps: block.n_steps,
        burn_in: block.burn_in,
        beta: block.beta,
        infer_coefficient: block.infer_coefficient,
        m: cfg.observation.m,
        acceptance_rate: chain.acceptance_rate,
        longest_rejection_run: chain.longest_rejection_run,
        stalled: chain.stalled(),
        s: chain.summary(block.burn_in)?,
        xi_mean,
    };
    out.write_csv("chain.csv", |w| chain.write_csv(w))?;
    out.write_json("mcmc_summary.json", &summary)?;
    Ok(())
}

// ---------------------------------------------------------------- hellinger-sweep

/// Sensitivity of the `s`-posterior to data perturbations along one seeded
/// direction, at the configured observation count and noise level `gamma`.
pub fn hellinger_report(cfg: &RunConfig, gamma: f64) -> Result<HellingerReport, CliError> {
    let m = cfg.observation.m;
    if m == 0 {
        return Err(CliError::Config("hellinger-sweep needs observation.m ≥ 1".into()));
    }
    let setting = Setting::new(cfg)?;
    let prior = cfg.prior()?;
    let points = ObservationSetup::uniform_grid(m, gamma)?.points;
    let model = setting.order_model(&points, cfg.mesh.modes)?;
    let data = setting.data(&model, m, gamma, cfg.truth.s, cfg.seed)?;
    let direction = random_direction(m, cfg.seed.wrapping_add(DIRECTION_SEED_OFFSET));
    Ok(wellposedness_sweep(
        &model,
        &data,
        &prior.order,
        &[],
        &cfg.experiment.epsilons,
        &direction,
        cfg.experiment.grid_points,
    )?)
}

#[derive(Debug, Serialize)]
struct HellingerArtifact<'a> {
    m: usize,
    gamma: f64,
    #[serde(flatten)]
    report: &'a HellingerReport,
    ratio_spread: f64,
}

pub fn hellinger_sweep(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let report = hellinger_report(cfg, cfg.observation.gamma)?;
    out.write_csv("hellinger.csv", |w| report.write_csv(w))?;
    out.write_json(
        "hellinger.json",
        &HellingerArtifact {
            m: cfg.observation.m,
            gamma: cfg.observation.gamma,
            report: &report,
            ratio_spread: report.ratio_spread(),
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------- verify

/// One measured quantity and the interval it must fall in.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, upper: f64) -> Self {
        Self::within(name, value, None, Some(upper))
    }

    fn within(name: impl Into<String>, value: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        let pass = value.is_finite() && lower.is_none_or(|l| value >= l) && upper.is_none_or(|u| value <= u);
        Self {
            name: name.into(),
            value,
            lower,
            upper,
            pass,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub checks: Vec<Check>,
    pub perturbation: PerturbationStudy,
    pub wellposedness: HellingerReport,
}

fn rel_l2(op: &AssembledOperator, u: &[f64], v: &[f64]) -> f64 {
    let d: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    op.l2_norm(&d) / op.l2_norm(v)
}

/// Closed form `√(1 − exp(−Δ²/8σ²))` for two equal-width Gaussians.
pub fn gaussian_hellinger(delta: f64, sigma: f64) -> f64 {
    (1.0 - (-delta * delta / (8.0 * sigma * sigma)).exp()).sqrt()
}

/// Discretized `N(μ₁, σ²)` vs `N(μ₂, σ²)` on a wide grid, against the closed form.
pub fn hellinger_oracle_error(mu1: f64, mu2: f64, sigma: f64) -> Result<f64, CliError> {
    let grid = fracbayes_core::bayes::uniform_grid(mu1.min(mu2) - 10.0 * sigma, mu1.max(mu2) + 10.0 * sigma, 4001);
    let log_w = |mu: f64| {
        grid.iter()
            .map(|x| -0.5 * ((x - mu) / sigma).powi(2))
            .collect::<Vec<_>>()
    };
    let p = PosteriorDensity1D::from_log_weights(grid.clone(), &log_w(mu1))?;
    let q = PosteriorDensity1D::from_log_weights(grid.clone(), &log_w(mu2))?;
    Ok((hellinger_1d(&p, &q)? - gaussian_hellinger(mu2 - mu1, sigma)).abs())
}

/// Semigroup, inverse-pair and integer-order identities on the config mesh.
fn spectral_checks(cfg: &RunConfig, setting: &Setting, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let op = AssembledOperator::assemble(setting.mesh(), &setting.truth)?;
    let eig = eigendecompose(&op, cfg.mesh.modes)?;
    checks.push(Check::at_most("eigen_residual", eig.max_residual(), 1e-8));
    checks.push(Check::at_most(
        "eigen_orthonormality",
        eig.orthonormality_residual(),
        1e-10,
    ));
    let f = eig.project(&setting.problem.source);
    let (s, t) = (0.3, 0.4);
    let lhs = eig.fractional_solve(&eig.fractional_solve(&f, s)?, t)?;
    let rhs = eig.fractional_solve(&f, s + t)?;
    checks.push(Check::at_most(
        "semigroup_identity",
        rel_l2(&op, lhs.values(), rhs.values()),
        1e-10,
    ));
    let back = eig.fractional_apply(&eig.fractional_solve(&f, s)?, s)?;
    checks.push(Check::at_most(
        "inverse_pair_identity",
        rel_l2(&op, back.values(), f.values()),
        1e-10,
    ));
    let direct = op.solve_neumann(f.values())?;
    let spectral = eig.fractional_solve(&f, 1.0)?;
    checks.push(Check::at_most(
        "integer_order_vs_direct",
        rel_l2(&op, spectral.values(), &direct),
        1e-8,
    ));
    if cfg.truth.xi.is_none() {
        let p = eig.fractional_solve(&setting.problem.source, cfg.truth.s)?;
        let mut err = 0.0f64;
        for (i, v) in p.values().iter().enumerate() {
            let exact = analytic_solution(cfg.source.b, cfg.truth.s, setting.mesh().node(i), 4096)?;
            err = err.max((v - exact).abs());
        }
        checks.push(Check::at_most("analytic_series_sup_error", err, 1e-3));
    }
    Ok(())
}

fn extension_checks(cfg: &RunConfig, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let v = cfg.experiment.verify;
    let problem = CosineProblem::new(v.extension_cells, cfg.source.b)?;
    let eig = eigendecompose(&problem.op, problem.op.n_nodes() - 1)?;
    for s in [0.3, 0.5, 0.7] {
        let grid = ExtensionGrid::graded(&problem.mesh, s, v.extension_layers, v.y_max, v.grading)?;
        let sol = solve_extension(problem.unit_coefficient(), s, &problem.source, &grid)?;
        let reference = eig.fractional_solve(&problem.source, s)?;
        let err = rel_l2(&problem.op, sol.trace().values(), reference.values());
        checks.push(Check::at_most(format!("extension_trace_error_s{s}"), err, 5e-2));
        checks.push(Check::at_most(
            format!("extension_energy_identity_s{s}"),
            sol.energy_residual(),
            1e-8,
        ));
    }
    Ok(())
}

fn study_settings(cfg: &RunConfig) -> Result<StudySettings, CliError> {
    let v = cfg.experiment.verify;
    Ok(StudySettings {
        prior: cfg.prior()?.coefficient,
        pairs: v.pairs,
        max_amplitude: v.max_amplitude,
        coarse_cells: v.coarse_cells,
        fine_cells: v.fine_cells,
        n_eigen: v.n_eigen,
        s: cfg.truth.s,
        b: cfg.source.b,
        seed: cfg.seed,
    })
}

/// Sup-norm interpolation bound for the forward solutions of each pair.
fn holder_checks(cfg: &RunConfig, settings: &StudySettings, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let problem = CosineProblem::new(settings.coarse_cells, cfg.source.b)?;
    let domain = Mesh1D::periodic_box(2)?;
    let modes = problem.op.n_nodes() - 1;
    let mut worst = 0.0f64;
    for k in 0..settings.pairs {
        let amp = fracbayes_core::experiment::pair_amplitude(settings.max_amplitude, k);
        let pair = CoefficientPair::random(settings.prior, amp, settings.seed.wrapping_add(k as u64), &domain)?;
        let (a, b) = pair.realize(&problem.mesh)?;
        let oa = AssembledOperator::assemble(&problem.mesh, &a)?;
        let ob = AssembledOperator::assemble(&problem.mesh, &b)?;
        let solve = |op: &AssembledOperator| -> Result<Field, CliError> {
            Ok(eigendecompose(op, modes)?.fractional_solve(&problem.source, settings.s)?)
        };
        let (p, q) = (solve(&oa)?, solve(&ob)?);
        let rep = holder_interpolation_check(&oa, &p, &q, 0.5, HOLDER_CONSTANT)?;
        if rep.rhs > 0.0 {
            worst = worst.max(rep.lhs / rep.rhs);
        }
    }
    checks.push(Check::at_most("holder_interpolation_ratio", worst, 1.0));
    Ok(())
}

pub fn verify_report(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let setting = Setting::new(cfg)?;
    let mut checks = Vec::new();

    let mut op = AssembledOperator::assemble(setting.mesh(), &setting.truth)?;
    if cfg.experiment.fault_injection == Some(FaultInjection::CorruptStiffness) {
        let mid = op.n_nodes() / 2;
        op.corrupt_stiffness(mid, 1.0);
    }
    checks.push(Check::at_most("stiffness_null_space", op.null_space_residual(), 1e-12));

    spectral_checks(cfg, &setting, &mut checks)?;
    extension_checks(cfg, &mut checks)?;

    let mut wp_cfg = cfg.clone();
    wp_cfg.observation.m = cfg.observation.m.max(1);
    let wellposedness = hellinger_report(&wp_cfg, cfg.experiment.verify.wellposedness_gamma)?;
    checks.push(Check::at_most(
        "hellinger_ratio_spread",
        wellposedness.ratio_spread(),
        2.0,
    ));
    checks.push(Check::within(
        "hellinger_loglog_slope",
        wellposedness.slope,
        Some(0.9),
        Some(1.1),
    ));

    let settings = study_settings(cfg)?;
    let perturbation = perturbation_study(&settings)?;
    for (name, drift) in perturbation.drifts() {
        checks.push(Check::at_most(format!("{name}_constant_drift"), drift.abs(), 0.1));
    }
    for level in [&perturbation.coarse, &perturbation.fine] {
        checks.push(Check::at_most(
            format!("weyl_ratio_n{}", level.n_cells),
            level.weyl_ratio,
            1.0 + 1e-6,
        ));
    }
    holder_checks(cfg, &settings, &mut checks)?;

    checks.push(Check::at_most(
        "hellinger_gaussian_oracle",
        hellinger_oracle_error(0.0, 0.01, 0.1)?,
        1e-4,
    ));

    Ok(VerifyReport {
        pass: checks.iter().all(|c| c.pass),
        checks,
        perturbation,
        wellposedness,
    })
}

pub fn verify(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let report = verify_report(cfg)?;
    out.write_json("verify.json", &report)?;
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}
