//! Shared inputs for the benchmarks.

use cde_core::simulation::{default_instrument_basis, full_effect_model};
use cde_core::{
    build_design, fit_baseline_outcome, fit_propensity_constant, generate, BaselineOutcomeFit, DesignMatrices,
    DgmParams, PhiSpec, PropensityFit,
};

/// Design and fitted nuisances for one simulated dataset of size `n`.
pub fn simulated_inputs(n: usize, seed: u64) -> (DesignMatrices, PropensityFit, BaselineOutcomeFit) {
    let draw = generate(n, seed, &DgmParams::default()).expect("valid parameters");
    let ds = &draw.dataset;
    let design = build_design(ds, &full_effect_model(), &default_instrument_basis()).expect("design builds");
    let ps = fit_propensity_constant(ds).expect("both arms present");
    let bl = fit_baseline_outcome(ds, &PhiSpec::intercept()).expect("baseline units present");
    (design, ps, bl)
}
