//! Fixtures shared by the benchmarks.

use heatbath_core::bath::{build_debye_bath, FrequencyPlacement};
use heatbath_core::potential::PotentialKind;
use heatbath_core::sampler::sample_zwanzig_bath;
use heatbath_core::{FullState, GibbsSpec, HeavyModel, SpectralBathModel, StreamRng};
use nalgebra::{DMatrix, DVector};

/// Debye bath coupled isotropically to `dof` heavy coordinates.
pub fn debye_bath(modes: usize, dof: usize) -> SpectralBathModel {
    let kappa = DMatrix::from_element(dof, dof, 1.0 / dof as f64);
    build_debye_bath(modes, 10.0, &kappa, 1.0, FrequencyPlacement::Stratified).expect("valid bath")
}

pub fn double_well(dof: usize) -> HeavyModel {
    HeavyModel::new(dof, PotentialKind::DoubleWell).expect("valid potential")
}

/// Heavy particle at rest in the left well with a Gibbs bath at `temperature`.
pub fn thermal_state(bath: &SpectralBathModel, dof: usize, temperature: f64) -> FullState {
    let mut rng = StreamRng::new(7, 0);
    let wave = sample_zwanzig_bath(bath, &GibbsSpec::new(temperature), &mut rng);
    FullState::new(DVector::from_element(dof, -1.0), DVector::zeros(dof), wave.amplitudes)
}
