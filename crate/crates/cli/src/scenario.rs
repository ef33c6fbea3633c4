//! Built-in scenarios.

use anyhow::{bail, Result};
use spotlab_core::ModelParams;

use crate::config::{
    Config, DomainSection, Expectations, ModelSection, PipelineSection, SimulationSection, SpotsSection, Stage,
    DEFAULT_SEED,
};

pub const NAMES: [&str; 4] = ["fig1", "fig2", "fig3", "symmetric-check"];

fn base(name: &str, params: ModelParams, allow_override: bool) -> Config {
    Config {
        name: name.into(),
        seed: DEFAULT_SEED,
        model: ModelSection::from_params(params, allow_override),
        domain: DomainSection::default(),
        spots: SpotsSection::default(),
        simulation: SimulationSection::default(),
        pipeline: PipelineSection::default(),
        expect: Expectations::default(),
    }
}

/// Corner spot at `χ = 8.5`, with the full asymptotic pipeline and the
/// comparison against the simulated steady state.
pub fn fig1() -> Config {
    let mut c = base("fig1", ModelParams::fig1(), false);
    c.spots = SpotsSection { m: 1, o: 0, points: Some(vec![[0.0, 0.0]]), seeds: 4, corrections: false };
    c.pipeline.scan_points = 24;
    c.expect = Expectations {
        spot_at: Some([0.0, 0.0]),
        steady: Some(true),
        positive_chemicals: Some(true),
        max_offset_cells: Some(2.0),
        mass_factor: Some(2.0),
        ..Expectations::default()
    };
    c
}

/// Interior spot at `χ = 1` with slow chemical diffusion. The asymptotic
/// stages do not apply at `ε = 1`, so only the simulation runs.
pub fn fig2() -> Config {
    let mut c = base("fig2", ModelParams::fig2(), false);
    c.simulation.dv = [0.05, 0.05];
    c.simulation.center = [1.0, 1.0];
    c.pipeline.stages = vec![Stage::Model, Stage::Simulate];
    c.expect = Expectations { spot_at: Some([1.0, 1.0]), steady: Some(true), ..Expectations::default() };
    c
}

/// Repulsive cross production; the structural hypotheses fail, so only
/// the simulation runs.
pub fn fig3() -> Config {
    let mut c = base("fig3", ModelParams::fig3(), true);
    c.simulation.t_end = 400.0;
    c.pipeline.stages = vec![Stage::Model, Stage::Simulate];
    c.expect = Expectations { min_separation: Some(0.5), steady: Some(true), ..Expectations::default() };
    c
}

/// All production rates equal: `σ1 = σ2 = 2/b` in closed form.
pub fn symmetric_check() -> Config {
    let b = 2.0;
    let params = ModelParams {
        chi1: 5.0,
        chi2: 5.0,
        lambda1: 1.0,
        lambda2: 1.0,
        ubar1: 1.5,
        ubar2: 1.5,
        a11: b,
        a12: b,
        a21: b,
        a22: b,
    };
    let mut c = base("symmetric-check", params, true);
    c.pipeline.stages = vec![Stage::Model, Stage::Liouville, Stage::Sigma];
    c.expect = Expectations { sigma: Some([2.0 / b; 2]), sigma_tol: Some(1e-10), ..Expectations::default() };
    c
}

pub fn lookup(name: &str) -> Result<Config> {
    Ok(match name {
        "fig1" => fig1(),
        "fig2" => fig2(),
        "fig3" => fig3(),
        "symmetric-check" => symmetric_check(),
        _ => bail!("unknown scenario {name:?}; known: {}", NAMES.join(", ")),
    })
}
