//! Shared fixtures for the benchmarks in `benches/`.

use spotlab_core::model::build_b_matrix;
use spotlab_core::sigma::{solve_sigma, SigmaOptions};
use spotlab_core::{BMatrix, LiouvilleProfile, ModelParams};

/// Interaction matrix and balanced profile of the corner-spot preset.
pub fn fig1_profile() -> (ModelParams, BMatrix, LiouvilleProfile) {
    let params = ModelParams::fig1();
    let b = build_b_matrix(&params, false).expect("preset satisfies the hypotheses");
    let profile = solve_sigma(&params, &b, &SigmaOptions::default()).expect("preset has a root").profile;
    (params, b, profile)
}
