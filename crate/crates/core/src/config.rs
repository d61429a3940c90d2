//! Declarative experiment configuration.
//!
//! A config is one JSON document. Unknown keys are rejected everywhere and
//! [`ExperimentConfig::validate`] reports the first bad field by its dotted
//! path, e.g. `run.temperature`.
//!
//! Units: time is the slow time `τ`; temperatures are in the energy unit of
//! the heavy potential; `h` and `horizon` share the time unit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bath::{build_debye_bath, build_scaled_debye_bath_with, BathDocument, FrequencyPlacement, SpectralBathModel};
use crate::ehrenfest::{EhrenfestModel, FrictionOptions};
use crate::harness::ObservableSpec;
use crate::langevin::{FrictionModel, FrictionSource};
use crate::linalg::from_rows;
use crate::potential::{HeavyModel, PotentialKind};
use crate::sampler::{GibbsSpec, VarianceConvention};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    Zwanzig,
    Ehrenfest,
    Langevin,
    BornOppenheimer,
}

/// Heavy particle: potential and deterministic initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeavySection {
    pub dof: usize,
    #[serde(default = "free_potential")]
    pub potential: PotentialKind,
    pub x0: Vec<f64>,
    pub p0: Vec<f64>,
}

fn free_potential() -> PotentialKind {
    PotentialKind::Free
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BathSection {
    /// Debye bath with `κ = kappa · u uᵀ`.
    Debye {
        modes: usize,
        cutoff: f64,
        kappa: f64,
        #[serde(default = "one")]
        mass: f64,
        direction: Option<Vec<f64>>,
        #[serde(default)]
        placement: FrequencyPlacement,
    },
    /// Debye bath scaled by the run's mass ratio so its point-mass friction
    /// is `M^{-1/2} friction · u uᵀ`.
    ScaledDebye {
        modes: usize,
        reduced_cutoff: f64,
        friction: f64,
        direction: Option<Vec<f64>>,
        #[serde(default)]
        placement: FrequencyPlacement,
    },
    Explicit {
        document: BathDocument,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElectronSection {
    DefaultFamily,
    DebyeSynthetic {
        modes: usize,
        reduced_cutoff: f64,
        friction: f64,
        direction: Option<Vec<f64>>,
    },
    Explicit {
        model: EhrenfestModel,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrictionSection {
    /// `K` as rows; the damping acting on `p` is `M^{-1/2}K`.
    Constant { matrix: Vec<Vec<f64>> },
    /// Point-mass limit of the configured bath.
    Debye,
    /// Spectral estimate from the configured electron model.
    Ehrenfest {
        #[serde(default = "default_friction_cutoff")]
        cutoff: f64,
        bandwidth: Option<f64>,
    },
}

fn default_friction_cutoff() -> f64 {
    FrictionOptions::default().cutoff
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub bath: Option<BathSection>,
    pub electrons: Option<ElectronSection>,
    pub friction: Option<FrictionSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SamplerSection {
    Gibbs {
        #[serde(default)]
        convention: VarianceConvention,
        #[serde(default = "one")]
        normalization: f64,
        #[serde(default)]
        random_phase: bool,
    },
    PureState,
    Zero,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self::Zero
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub h: f64,
    pub horizon: f64,
    pub n_samples: usize,
    #[serde(default)]
    pub temperature: f64,
    pub mass_ratio: Option<f64>,
    pub mass_ratios: Option<Vec<f64>>,
    /// Steps between recorded time points; only the endpoints when absent.
    pub stride: Option<usize>,
    /// Fraction of aborted samples above which a result is partial.
    #[serde(default = "default_abort_fraction")]
    pub max_abort_fraction: f64,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_abort_fraction() -> f64 {
    0.01
}

fn default_batches() -> usize {
    32
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub format: OutputFormat,
    /// Number of sample trajectories dumped as CSV.
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub binary: bool,
}

fn default_dir() -> String {
    "out".into()
}

fn default_trajectories() -> usize {
    1
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: OutputFormat::Json,
            trajectories: default_trajectories(),
            binary: false,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub dynamics: DynamicsKind,
    #[serde(default)]
    pub seed: u64,
    pub heavy: HeavySection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    pub run: RunSection,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub outputs: OutputSection,
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive, got {v}")))
    }
}

fn direction_or_unit(dir: &Option<Vec<f64>>, dof: usize, path: &str) -> Result<DVector<f64>> {
    let d = match dir {
        Some(v) => {
            if v.len() != dof {
                return Err(Error::config(path, format!("expected {dof} components, got {}", v.len())));
            }
            DVector::from_column_slice(v)
        }
        None => DVector::from_element(dof, 1.0),
    };
    if !(d.norm() > 0.0) {
        return Err(Error::config(path, "must be nonzero"));
    }
    Ok(d.normalize())
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::config(json_path(&e), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization, ignoring `outputs.dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.outputs.dir = default_dir();
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The single mass ratio of a simulate run; `1` when none is given.
    pub fn mass_ratio(&self) -> f64 {
        self.run.mass_ratio.unwrap_or(1.0)
    }

    pub fn with_mass_ratio(&self, m: f64) -> Self {
        let mut c = self.clone();
        c.run.mass_ratio = Some(m);
        c
    }

    pub fn n_steps(&self) -> usize {
        (self.run.horizon / self.run.h).round() as usize
    }

    pub fn stride(&self) -> usize {
        self.run.stride.unwrap_or(self.n_steps()).clamp(1, self.n_steps().max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let dof = self.heavy.dof;
        if dof == 0 {
            return Err(Error::config("heavy.dof", "must be positive"));
        }
        for (name, v) in [("heavy.x0", &self.heavy.x0), ("heavy.p0", &self.heavy.p0)] {
            if v.len() != dof {
                return Err(Error::config(name, format!("expected {dof} components, got {}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::config(name, "must be finite"));
            }
        }
        let run = &self.run;
        positive("run.h", run.h)?;
        positive("run.horizon", run.horizon)?;
        if run.n_samples == 0 {
            return Err(Error::config("run.n_samples", "must be positive"));
        }
        if !(run.temperature.is_finite() && run.temperature >= 0.0) {
            return Err(Error::config("run.temperature", format!("must be nonnegative, got {}", run.temperature)));
        }
        if let Some(m) = run.mass_ratio {
            positive("run.mass_ratio", m)?;
        }
        if let Some(ms) = &run.mass_ratios {
            for (i, m) in ms.iter().enumerate() {
                positive(&format!("run.mass_ratios[{i}]"), *m)?;
            }
        }
        if run.stride == Some(0) {
            return Err(Error::config("run.stride", "must be positive"));
        }
        if !(0.0..=1.0).contains(&run.max_abort_fraction) {
            return Err(Error::config("run.max_abort_fraction", "must lie in [0, 1]"));
        }
        if run.batches < 2 {
            return Err(Error::config("run.batches", "must be at least 2"));
        }
        let steps = run.horizon / run.h;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::config("run.horizon", "must be an integer multiple of run.h"));
        }
        for (i, o) in self.observables.iter().enumerate() {
            o.validate(&format!("observables[{i}]"), run.horizon)?;
        }
        if let SamplerSection::Gibbs { normalization, .. } = &self.sampler {
            positive("sampler.normalization", *normalization)?;
        }
        let need = |present: bool, path: &str, what: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::config(path, format!("required for {what} dynamics")))
            }
        };
        match self.dynamics {
            DynamicsKind::Zwanzig => need(self.model.bath.is_some(), "model.bath", "zwanzig")?,
            DynamicsKind::Ehrenfest | DynamicsKind::BornOppenheimer => {
                need(self.model.electrons.is_some(), "model.electrons", "ehrenfest")?
            }
            DynamicsKind::Langevin => need(self.model.friction.is_some(), "model.friction", "langevin")?,
        }
        if matches!(self.model.friction, Some(FrictionSection::Debye)) && self.model.bath.is_none() {
            return Err(Error::config("model.friction", "debye friction needs model.bath"));
        }
        if matches!(self.model.friction, Some(FrictionSection::Ehrenfest { .. })) && self.model.electrons.is_none() {
            return Err(Error::config("model.friction", "ehrenfest friction needs model.electrons"));
        }
        match &self.model.bath {
            Some(BathSection::Debye { modes, cutoff, kappa, mass, direction, .. }) => {
                if *modes == 0 {
                    return Err(Error::config("model.bath.modes", "must be positive"));
                }
                positive("model.bath.cutoff", *cutoff)?;
                positive("model.bath.mass", *mass)?;
                if !(kappa.is_finite() && *kappa >= 0.0) {
                    return Err(Error::config("model.bath.kappa", "must be nonnegative"));
                }
                direction_or_unit(direction, dof, "model.bath.direction")?;
            }
            Some(BathSection::ScaledDebye { modes, reduced_cutoff, friction, direction, .. }) => {
                if *modes == 0 {
                    return Err(Error::config("model.bath.modes", "must be positive"));
                }
                positive("model.bath.reduced_cutoff", *reduced_cutoff)?;
                if !(friction.is_finite() && *friction >= 0.0) {
                    return Err(Error::config("model.bath.friction", "must be nonnegative"));
                }
                direction_or_unit(direction, dof, "model.bath.direction")?;
            }
            _ => {}
        }
        if let Some(ElectronSection::DebyeSynthetic { modes, reduced_cutoff, friction, direction }) = &self.model.electrons {
            if *modes == 0 {
                return Err(Error::config("model.electrons.modes", "must be positive"));
            }
            positive("model.electrons.reduced_cutoff", *reduced_cutoff)?;
            positive("model.electrons.friction", *friction)?;
            direction_or_unit(direction, dof, "model.electrons.direction")?;
        }
        if let Some(FrictionSection::Constant { matrix }) = &self.model.friction {
            let k = from_rows(matrix, "friction row").map_err(|e| Error::config("model.friction.matrix", e.to_string()))?;
            if k.nrows() != dof || k.ncols() != dof {
                return Err(Error::config("model.friction.matrix", format!("expected {dof}×{dof}")));
            }
        }
        if let Some(FrictionSection::Ehrenfest { cutoff, bandwidth }) = &self.model.friction {
            positive("model.friction.cutoff", *cutoff)?;
            if let Some(b) = bandwidth {
                positive("model.friction.bandwidth", *b)?;
            }
        }
        Ok(())
    }

    pub fn heavy_model(&self) -> Result<HeavyModel> {
        HeavyModel::new(self.heavy.dof, self.heavy.potential.clone())
    }

    pub fn x0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.heavy.x0)
    }

    pub fn p0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.heavy.p0)
    }

    pub fn bath_model(&self) -> Result<Option<SpectralBathModel>> {
        let dof = self.heavy.dof;
        let Some(section) = &self.model.bath else { return Ok(None) };
        let bath = match section {
            BathSection::Debye { modes, cutoff, kappa, mass, direction, placement } => {
                let u = direction_or_unit(direction, dof, "model.bath.direction")?;
                let k = &u * u.transpose() * *kappa;
                build_debye_bath(*modes, *cutoff, &k, *mass, *placement)?
            }
            BathSection::ScaledDebye { modes, reduced_cutoff, friction, direction, placement } => {
                let u = direction_or_unit(direction, dof, "model.bath.direction")?;
                build_scaled_debye_bath_with(*modes, self.mass_ratio(), *reduced_cutoff, *friction, &u, *placement)?
            }
            BathSection::Explicit { document } => SpectralBathModel::from_document(document)?,
        };
        Error::check_dim("bath coupling dimension", dof, bath.dof())?;
        Ok(Some(bath))
    }

    pub fn electron_model(&self) -> Result<Option<EhrenfestModel>> {
        let dof = self.heavy.dof;
        let m = self.mass_ratio();
        let Some(section) = &self.model.electrons else { return Ok(None) };
        let model = match section {
            ElectronSection::DefaultFamily => EhrenfestModel::default_family(dof, m),
            ElectronSection::DebyeSynthetic { modes, reduced_cutoff, friction, direction } => {
                let u = direction_or_unit(direction, dof, "model.electrons.direction")?;
                EhrenfestModel::debye_synthetic(*modes, m, *reduced_cutoff, *friction, &u)?
            }
            ElectronSection::Explicit { model } => {
                let model = if self.run.mass_ratio.is_some() { model.with_mass_ratio(m)? } else { model.clone() };
                model.validate()?;
                model
            }
        };
        Error::check_dim("electron model dimension", dof, model.dof)?;
        Ok(Some(model))
    }

    /// Friction for Langevin and Born–Oppenheimer runs; zero when absent.
    pub fn friction_model(&self) -> Result<FrictionModel> {
        let dof = self.heavy.dof;
        let t = self.run.temperature;
        let m = self.mass_ratio();
        match &self.model.friction {
            None => FrictionModel::constant(DMatrix::zeros(dof, dof), t, m),
            Some(FrictionSection::Constant { matrix }) => FrictionModel::constant(from_rows(matrix, "friction row")?, t, m),
            Some(FrictionSection::Debye) => {
                let bath = self.bath_model()?.ok_or_else(|| Error::config("model.bath", "missing"))?;
                let (Some(kappa), Some(cutoff)) = (bath.kappa(), bath.debye_cutoff()) else {
                    return Err(Error::config("model.friction", "debye friction needs a Debye bath"));
                };
                FrictionModel::new(
                    FrictionSource::Debye { kappa: kappa.clone(), mass: bath.mass(), cutoff },
                    t,
                    m,
                )
            }
            Some(FrictionSection::Ehrenfest { cutoff, bandwidth }) => {
                let model = self.electron_model()?.ok_or_else(|| Error::config("model.electrons", "missing"))?;
                FrictionModel::new(
                    FrictionSource::Ehrenfest {
                        model: Box::new(model),
                        options: FrictionOptions { cutoff: *cutoff, bandwidth: *bandwidth },
                    },
                    t,
                    m,
                )
            }
        }
    }

    pub fn gibbs_spec(&self) -> GibbsSpec {
        let mut spec = GibbsSpec::new(self.run.temperature);
        spec.seed = self.seed;
        if let SamplerSection::Gibbs { convention, normalization, .. } = &self.sampler {
            spec = spec.with_convention(*convention).with_normalization(*normalization);
        }
        spec
    }

    /// Mass ratios of a convergence sweep.
    pub fn sweep(&self) -> Result<Vec<f64>> {
        match &self.run.mass_ratios {
            Some(ms) if ms.len() >= 3 => Ok(ms.clone()),
            Some(_) => Err(Error::config("run.mass_ratios", "needs at least three values")),
            None => Err(Error::config("run.mass_ratios", "required for a convergence sweep")),
        }
    }
}

/// Best-effort field path from a serde error message.
fn json_path(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    if let Some(start) = msg.find("field `") {
        let rest = &msg[start + 7..];
        if let Some(end) = rest.find('`') {
            return rest[..end].to_string();
        }
    }
    format!("line {} column {}", e.line(), e.column())
}
