//! Shared fixtures for the benchmarks.

use fracbayes_core::experiment::CosineProblem;
use fracbayes_core::forward::{add_noise, DataVector, ObservationSetup};
use fracbayes_core::OrderOnlyModel;

/// `a ≡ 1`, `b = 1/2` on `n_cells` cells.
pub fn cosine_problem(n_cells: usize) -> CosineProblem {
    CosineProblem::new(n_cells, 0.5).expect("valid problem")
}

/// `s`-only model and noisy data at `s* = 0.7`.
pub fn order_fixture(n_cells: usize, modes: usize, m: usize, gamma: f64) -> (OrderOnlyModel, DataVector) {
    let problem = cosine_problem(n_cells);
    let setup = ObservationSetup::uniform_grid(m, gamma).expect("valid setup");
    let model = problem.order_model(&setup.points, modes).expect("model");
    let clean = model.observe_s(0.7).expect("forward map");
    let data = DataVector::new(&setup, add_noise(&clean, gamma, 2024), 2024).expect("data");
    (model, data)
}
