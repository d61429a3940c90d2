//! Random initial data for bath modes and electron wave functions.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bath::SpectralBathModel;
use crate::rng::StreamRng;
use crate::{Error, Result, C64};

/// Default bound on `T Σ 1/λ̃_j` above which a draw is flagged.
pub const LOW_TEMPERATURE_THRESHOLD: f64 = 0.1;

/// Which per-component variance the Gibbs draws use.
///
/// `Covariance` gives real and imaginary parts variance `2T/(mλ)`, so that
/// `E|γ|² = 4T/(mλ)` and the noise covariance is `2T f`. `Density` samples the
/// Boltzmann weight of the bath energy, with half that variance, which is the
/// law whose heavy marginal is the Gibbs density at temperature `T`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceConvention {
    #[default]
    Covariance,
    Density,
}

impl VarianceConvention {
    fn factor(self) -> f64 {
        match self {
            Self::Covariance => 1.0,
            Self::Density => 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSpec {
    pub temperature: f64,
    /// Ehrenfest normalization constant `C`.
    #[serde(default = "one")]
    pub normalization: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub convention: VarianceConvention,
}

fn one() -> f64 {
    1.0
}

impl GibbsSpec {
    pub fn new(temperature: f64) -> Self {
        Self {
            temperature,
            normalization: 1.0,
            seed: 0,
            stream: 0,
            convention: VarianceConvention::Covariance,
        }
    }

    pub fn with_convention(mut self, convention: VarianceConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_normalization(mut self, c: f64) -> Self {
        self.normalization = c;
        self
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::new(self.seed, self.stream)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::config("temperature", format!("must be nonnegative, got {}", self.temperature)));
        }
        if !(self.normalization.is_finite() && self.normalization > 0.0) {
            return Err(Error::config("normalization", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    BathEigenbasis,
    ElectronEigenbasis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveVector {
    pub amplitudes: Vec<C64>,
    pub basis: Basis,
    pub normalized: bool,
}

impl WaveVector {
    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
}

fn complex_normal(rng: &mut StreamRng, sd: f64) -> C64 {
    let re = rng.normal();
    let im = rng.normal();
    C64::new(sd * re, sd * im)
}

/// Gibbs draw of the bath wave, independent across modes.
pub fn sample_zwanzig_bath(bath: &SpectralBathModel, spec: &GibbsSpec, rng: &mut StreamRng) -> WaveVector {
    let scale = 2.0 * spec.temperature * spec.convention.factor() / bath.mass();
    let amplitudes = bath
        .eigenvalues()
        .iter()
        .map(|l| complex_normal(rng, (scale / l).sqrt()))
        .collect();
    WaveVector {
        amplitudes,
        basis: Basis::BathEigenbasis,
        normalized: false,
    }
}

/// Theoretical `E|γ_j|²` for [`sample_zwanzig_bath`].
pub fn zwanzig_mode_second_moment(bath: &SpectralBathModel, spec: &GibbsSpec, j: usize) -> f64 {
    4.0 * spec.temperature * spec.convention.factor() / (bath.mass() * bath.eigenvalues()[j])
}

/// `T Σ_{j≥1} 1/λ̃_j`, the expected excited weight relative to the ground state.
pub fn check_low_temperature(excited: &[f64], temperature: f64) -> f64 {
    temperature * excited.iter().map(|l| 1.0 / l).sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EhrenfestSamplerOptions {
    pub random_phase: bool,
    pub threshold: f64,
}

impl Default for EhrenfestSamplerOptions {
    fn default() -> Self {
        Self {
            random_phase: false,
            threshold: LOW_TEMPERATURE_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EhrenfestDraw {
    pub wave: WaveVector,
    /// Σ_{j≥1}|γ_j|² / |γ_0|² before normalization.
    pub ratio: f64,
    pub warning: Option<String>,
}

/// Normalized electron wave with the ground amplitude fixed at one and
/// excited amplitudes drawn from the Gibbs law of `C⟨γ, H̃ γ⟩/T`.
///
/// `excited` lists `λ̃_1..λ̃_J`; the result has `J + 1` components.
pub fn sample_ehrenfest_modes(
    excited: &[f64],
    spec: &GibbsSpec,
    options: EhrenfestSamplerOptions,
    rng: &mut StreamRng,
) -> Result<EhrenfestDraw> {
    if let Some(bad) = excited.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::ModelInvalid(format!("excited level {bad} is not positive")));
    }
    let ground = if options.random_phase {
        C64::from_polar(1.0, 2.0 * PI * rng.uniform())
    } else {
        C64::new(1.0, 0.0)
    };
    let scale = spec.temperature * spec.convention.factor() / spec.normalization;
    let mut amplitudes = Vec::with_capacity(excited.len() + 1);
    amplitudes.push(ground);
    amplitudes.extend(excited.iter().map(|l| complex_normal(rng, (scale / l).sqrt())));
    let excited_weight: f64 = amplitudes[1..].iter().map(|z| z.norm_sqr()).sum();
    let ratio = excited_weight;
    let norm = (1.0 + excited_weight).sqrt();
    for z in &mut amplitudes {
        *z /= norm;
    }
    let expected = check_low_temperature(excited, spec.temperature);
    let warning = (expected > options.threshold || ratio > options.threshold).then(|| {
        format!(
            "low-temperature condition not met: T Σ 1/λ̃ = {expected:.3e}, drawn ratio = {ratio:.3e}, threshold {}",
            options.threshold
        )
    });
    Ok(EhrenfestDraw {
        wave: WaveVector {
            amplitudes,
            basis: Basis::ElectronEigenbasis,
            normalized: true,
        },
        ratio,
        warning,
    })
}

/// Boltzmann weights `e^{−λ̄_j/T}/Z`.
pub fn pure_state_probabilities(levels: &[f64], temperature: f64) -> Vec<f64> {
    let lowest = levels.iter().copied().fold(f64::INFINITY, f64::min);
    if temperature <= 0.0 {
        let mut q: Vec<f64> = levels.iter().map(|&l| if l == lowest { 1.0 } else { 0.0 }).collect();
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        return q;
    }
    let mut q: Vec<f64> = levels.iter().map(|l| (-(l - lowest) / temperature).exp()).collect();
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
    q
}

/// Single eigenstate `e^{iα} e_j` with `j` drawn from the Boltzmann weights.
pub fn sample_pure_states(levels: &[f64], temperature: f64, rng: &mut StreamRng) -> (usize, WaveVector) {
    let q = pure_state_probabilities(levels, temperature);
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut index = q.len() - 1;
    for (j, p) in q.iter().enumerate() {
        acc += p;
        if u < acc {
            index = j;
            break;
        }
    }
    let phase = 2.0 * PI * rng.uniform();
    let mut amplitudes = vec![C64::new(0.0, 0.0); levels.len()];
    amplitudes[index] = C64::from_polar(1.0, phase);
    (
        index,
        WaveVector {
            amplitudes,
            basis: Basis::ElectronEigenbasis,
            normalized: true,
        },
    )
}

/// Appends rows `stream,j,re,im`; writes the header when `header` is set.
pub fn write_draws_csv(out: &mut impl Write, stream: u64, wave: &WaveVector, header: bool) -> Result<()> {
    if header {
        writeln!(out, "stream,j,re,im")?;
    }
    for (j, z) in wave.amplitudes.iter().enumerate() {
        writeln!(out, "{stream},{j},{:e},{:e}", z.re, z.im)?;
    }
    Ok(())
}
