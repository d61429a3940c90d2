//! Monte Carlo ensembles, weak errors and the statistical consistency checks.
//!
//! Every sample `i` draws its initial data from stream
//! `(seed, 4i + InitialData)` and its Wiener path from `(seed, 4i + Wiener)`.
//! Samples are evaluated in parallel and folded in index order, so results
//! are bit-identical for any worker count.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{memory_kernel_spectral, SpectralBathModel};
use crate::config::{BathSection, DynamicsKind, ExperimentConfig, FrictionSection, SamplerSection};
use crate::ehrenfest::{
    adiabatic_overlap, fluctuation_projection, integrate_ehrenfest, BornOppenheimer, CVector, EhrenfestModel,
    EhrenfestState,
};
use crate::langevin::{
    GaussianSource, GibbsTarget, InvariantCheck, InvariantOptions, InvariantReport, LangevinState, LangevinStepper,
    ReplayNoise,
};
use crate::potential::{HeavyModel, Potential};
use crate::rng::{StreamRng, StreamRole};
use crate::sampler::{
    sample_ehrenfest_modes, sample_pure_states, sample_zwanzig_bath, zwanzig_mode_second_moment, EhrenfestSamplerOptions,
    GibbsSpec, VarianceConvention,
};
use crate::stats::{batch_means, fit_line, t_quantile, CheckStatus, LineFit, RunningStats};
use crate::zwanzig::{integrate, IntegrateOptions, TrajectoryMeta, TrajectoryRecord};
use crate::{Error, FullState, FrictionModel, Result, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableKind {
    /// `|X^τ − X⁰|² / (2·dof·τ)`.
    Diffusion,
    /// `|p|² / dof`.
    KineticTemperature,
    /// Heavy potential, or the ground level for matrix models.
    Potential,
    /// `dof⁻¹ Σ_k Σ_i a_i X_k^i`.
    Polynomial { coefficients: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub name: String,
    pub kind: ObservableKind,
    /// Evaluation time; the run horizon when absent.
    #[serde(default)]
    pub horizon: Option<f64>,
}

impl ObservableSpec {
    pub fn new(name: impl Into<String>, kind: ObservableKind) -> Self {
        Self {
            name: name.into(),
            kind,
            horizon: None,
        }
    }

    pub fn diffusion() -> Self {
        Self::new("diffusion", ObservableKind::Diffusion)
    }

    pub fn kinetic_temperature() -> Self {
        Self::new("kinetic_temperature", ObservableKind::KineticTemperature)
    }

    pub(crate) fn validate(&self, path: &str, run_horizon: f64) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::config(format!("{path}.name"), "must not be empty"));
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0 && t <= run_horizon * (1.0 + 1e-12)) {
                return Err(Error::config(format!("{path}.horizon"), "must lie in (0, run.horizon]"));
            }
        }
        if let ObservableKind::Polynomial { coefficients } = &self.kind {
            if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                return Err(Error::config(format!("{path}.kind.coefficients"), "must be finite and nonempty"));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x0: &DVector<f64>, x: &DVector<f64>, p: &DVector<f64>, tau: f64, potential: &dyn Potential) -> Result<f64> {
        let dof = x.len() as f64;
        Ok(match &self.kind {
            ObservableKind::Diffusion => {
                if tau <= 0.0 {
                    0.0
                } else {
                    (x - x0).norm_squared() / (2.0 * dof * tau)
                }
            }
            ObservableKind::KineticTemperature => p.norm_squared() / dof,
            ObservableKind::Potential => potential.energy(x)?,
            ObservableKind::Polynomial { coefficients } => {
                x.iter()
                    .map(|v| coefficients.iter().rev().fold(0.0, |acc, a| acc * v + a))
                    .sum::<f64>()
                    / dof
            }
        })
    }
}

/// Builds models from a config and runs single samples.
pub struct Simulation {
    config: ExperimentConfig,
    heavy: HeavyModel,
    bath: Option<SpectralBathModel>,
    electrons: Option<EhrenfestModel>,
    friction: Option<FrictionModel>,
    spec: GibbsSpec,
    noise_role: StreamRole,
    p0: DVector<f64>,
}

impl Simulation {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let friction = match config.dynamics {
            DynamicsKind::Langevin | DynamicsKind::BornOppenheimer => Some(config.friction_model()?),
            _ => None,
        };
        if config.dynamics == DynamicsKind::Zwanzig && config.sampler == SamplerSection::PureState {
            return Err(Error::config("sampler.kind", "pure-state sampling applies to electron models only"));
        }
        let sim = Self {
            heavy: config.heavy_model()?,
            bath: config.bath_model()?,
            electrons: config.electron_model()?,
            friction,
            spec: config.gibbs_spec(),
            noise_role: StreamRole::Wiener,
            p0: config.p0(),
            config: config.clone(),
        };
        if let Some(f) = &sim.friction {
            // validates the step bound before any sample runs
            LangevinStepper::new(f, &*sim.potential(), config.run.h)?;
        }
        Ok(sim)
    }

    /// Draws Wiener increments from `role` instead of the default stream.
    pub fn with_noise_role(mut self, role: StreamRole) -> Self {
        self.noise_role = role;
        self
    }

    pub fn with_initial_momentum(mut self, p0: DVector<f64>) -> Self {
        self.p0 = p0;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn bath(&self) -> Option<&SpectralBathModel> {
        self.bath.as_ref()
    }

    pub fn electrons(&self) -> Option<&EhrenfestModel> {
        self.electrons.as_ref()
    }

    pub fn friction(&self) -> Option<&FrictionModel> {
        self.friction.as_ref()
    }

    pub fn potential(&self) -> Box<dyn Potential + '_> {
        match (self.config.dynamics, &self.electrons) {
            (DynamicsKind::Ehrenfest | DynamicsKind::BornOppenheimer, Some(m)) => Box::new(BornOppenheimer(m)),
            _ => Box::new(self.heavy.clone()),
        }
    }

    fn meta(&self, index: u64) -> TrajectoryMeta {
        TrajectoryMeta {
            h: self.config.run.h,
            seed: Some(self.config.seed),
            stream: Some(index),
            model_hash: None,
        }
    }

    /// Initial bath wave of sample `index`.
    pub fn bath_wave(&self, index: u64) -> Result<Vec<C64>> {
        let bath = self.bath.as_ref().ok_or_else(|| Error::config("model.bath", "missing"))?;
        Ok(match self.config.sampler {
            SamplerSection::Zero => vec![C64::new(0.0, 0.0); bath.modes()],
            _ => {
                let mut rng = StreamRng::for_sample(self.config.seed, index, StreamRole::InitialData);
                sample_zwanzig_bath(bath, &self.spec, &mut rng).amplitudes
            }
        })
    }

    pub fn run_sample(&self, index: u64) -> Result<TrajectoryRecord> {
        match self.config.dynamics {
            DynamicsKind::Zwanzig => self.zwanzig_sample(index, self.bath_wave(index)?),
            DynamicsKind::Ehrenfest => self.ehrenfest_sample(index),
            DynamicsKind::Langevin | DynamicsKind::BornOppenheimer => {
                let mut rng = StreamRng::for_sample(self.config.seed, index, self.noise_role);
                self.langevin_sample(index, &mut rng)
            }
        }
    }

    fn zwanzig_sample(&self, index: u64, psi: Vec<C64>) -> Result<TrajectoryRecord> {
        let bath = self.bath.as_ref().ok_or_else(|| Error::config("model.bath", "missing"))?;
        let state = FullState::new(self.config.x0(), self.p0.clone(), psi);
        let opts = IntegrateOptions {
            stride: self.config.stride(),
            ..Default::default()
        };
        let (_, mut record) = integrate(&state, self.config.run.h, self.config.n_steps(), bath, &self.heavy, opts, |_| {})?;
        record.meta = self.meta(index);
        Ok(record)
    }

    fn ehrenfest_state(&self, index: u64) -> Result<EhrenfestState> {
        let model = self.electrons.as_ref().ok_or_else(|| Error::config("model.electrons", "missing"))?;
        let x0 = self.config.x0();
        let frame = model.frame(&x0)?;
        let mut rng = StreamRng::for_sample(self.config.seed, index, StreamRole::InitialData);
        let psi = match &self.config.sampler {
            SamplerSection::Zero => return EhrenfestState::eigenstate(model, x0, self.p0.clone(), 0),
            SamplerSection::Gibbs { random_phase, .. } => {
                let opts = EhrenfestSamplerOptions {
                    random_phase: *random_phase,
                    ..Default::default()
                };
                let draw = sample_ehrenfest_modes(&frame.excited(), &self.spec, opts, &mut rng)?;
                frame.wave_from_sample(&draw.wave)?
            }
            SamplerSection::PureState => {
                let levels: Vec<f64> = frame.values.iter().copied().collect();
                let (_, wave) = sample_pure_states(&levels, self.config.run.temperature, &mut rng);
                frame.wave_from_sample(&wave)?
            }
        };
        Ok(EhrenfestState {
            tau: 0.0,
            x: x0,
            p: self.p0.clone(),
            psi,
            tracers: None,
        })
    }

    fn ehrenfest_sample(&self, index: u64) -> Result<TrajectoryRecord> {
        let model = self.electrons.as_ref().ok_or_else(|| Error::config("model.electrons", "missing"))?;
        let state = self.ehrenfest_state(index)?;
        let (_, path) = integrate_ehrenfest(&state, self.config.run.h, self.config.n_steps(), self.config.stride(), model)?;
        Ok(TrajectoryRecord {
            times: path.times,
            x: path.xs,
            p: path.ps,
            energy: path.energy,
            waves: None,
            meta: self.meta(index),
        })
    }

    /// Langevin or Born–Oppenheimer path driven by `noise`.
    pub fn langevin_sample(&self, index: u64, noise: &mut dyn GaussianSource) -> Result<TrajectoryRecord> {
        let friction = self.friction.as_ref().ok_or_else(|| Error::config("model.friction", "missing"))?;
        let potential = self.potential();
        let mut stepper = LangevinStepper::new(friction, &*potential, self.config.run.h)?;
        let mut state = LangevinState::new(self.config.x0(), self.p0.clone());
        let stride = self.config.stride();
        let mut record = TrajectoryRecord {
            meta: self.meta(index),
            ..Default::default()
        };
        let energy = |s: &LangevinState| -> Result<f64> { Ok(0.5 * s.p.norm_squared() + potential.energy(&s.x)?) };
        record.push(state.tau, &state.x, &state.p, energy(&state)?, None);
        for k in 1..=self.config.n_steps() {
            stepper.step(&mut state, noise)?;
            if k % stride == 0 {
                if !state.x.iter().chain(state.p.iter()).all(|v| v.is_finite()) {
                    return Err(Error::InternalConsistency(format!("non-finite state at τ = {}", state.tau)));
                }
                record.push(state.tau, &state.x, &state.p, energy(&state)?, None);
            }
        }
        Ok(record)
    }

    /// `values[o][t]` for every configured observable along `record`.
    pub fn observe(&self, observables: &[ObservableSpec], record: &TrajectoryRecord) -> Result<Vec<Vec<f64>>> {
        let potential = self.potential();
        let x0 = self.config.x0();
        observables
            .iter()
            .map(|o| {
                record
                    .times
                    .iter()
                    .zip(record.x.iter().zip(&record.p))
                    .map(|(&t, (x, p))| o.evaluate(&x0, x, p, t, &*potential))
                    .collect()
            })
            .collect()
    }
}

fn pool(workers: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    match workers {
        None => Ok(None),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(Some)
            .map_err(|e| Error::InternalConsistency(format!("thread pool: {e}"))),
    }
}

fn map_indices<T: Send>(range: Range<u64>, workers: Option<usize>, f: impl Fn(u64) -> T + Sync + Send) -> Result<Vec<T>> {
    let run = || range.clone().into_par_iter().map(&f).collect::<Vec<T>>();
    Ok(match pool(workers)? {
        Some(p) => p.install(run),
        None => run(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub tau: f64,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub stats: RunningStats,
}

impl SeriesPoint {
    fn from_stats(tau: f64, stats: RunningStats) -> Self {
        Self {
            tau,
            mean: stats.mean,
            variance: stats.variance(),
            stderr: stats.stderr(),
            stats,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSummary {
    pub name: String,
    pub horizon: f64,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub samples: u64,
    pub series: Vec<SeriesPoint>,
    horizon_index: usize,
}

impl ObservableSummary {
    fn refresh(&mut self) {
        let s = self.series[self.horizon_index].stats;
        self.mean = s.mean;
        self.variance = s.variance();
        self.stderr = s.stderr();
        self.samples = s.count;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub index: u64,
    pub reason: String,
}

/// How every random stream of a result was derived.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLedger {
    pub master_seed: u64,
    /// Half-open sample index ranges that contributed.
    pub sample_ranges: Vec<(u64, u64)>,
    /// `stream = 4·index + role`.
    pub roles: Vec<(String, u64)>,
}

impl SeedLedger {
    fn new(seed: u64, range: Range<u64>) -> Self {
        Self {
            master_seed: seed,
            sample_ranges: vec![(range.start, range.end)],
            roles: [StreamRole::InitialData, StreamRole::Wiener, StreamRole::Auxiliary, StreamRole::Model]
                .iter()
                .map(|r| (format!("{r:?}"), *r as u64))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub dynamics: DynamicsKind,
    pub mass_ratio: f64,
    pub requested: u64,
    pub completed: u64,
    pub aborted: Vec<AbortRecord>,
    /// More than the configured fraction of samples aborted.
    pub partial: bool,
    pub max_abort_fraction: f64,
    pub observables: Vec<ObservableSummary>,
    pub config_hash: String,
    pub seed_ledger: SeedLedger,
}

impl EnsembleResult {
    pub fn observable(&self, name: &str) -> Option<&ObservableSummary> {
        self.observables.iter().find(|o| o.name == name)
    }

    /// Pooled statistics of two results from the same config.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.config_hash != other.config_hash {
            return Err(Error::config("config_hash", "results come from different configs"));
        }
        if self.observables.len() != other.observables.len() {
            return Err(Error::config("observables", "observable lists differ"));
        }
        let mut out = self.clone();
        for (a, b) in out.observables.iter_mut().zip(&other.observables) {
            if a.name != b.name || a.series.len() != b.series.len() {
                return Err(Error::config("observables", format!("observable `{}` differs", a.name)));
            }
            for (pa, pb) in a.series.iter_mut().zip(&b.series) {
                *pa = SeriesPoint::from_stats(pa.tau, pa.stats.merge(&pb.stats));
            }
            a.refresh();
        }
        out.requested += other.requested;
        out.completed += other.completed;
        out.aborted.extend(other.aborted.iter().cloned());
        out.aborted.sort_by_key(|a| a.index);
        out.partial = abort_fraction(out.aborted.len() as u64, out.requested) > out.max_abort_fraction;
        out.seed_ledger.sample_ranges.extend(other.seed_ledger.sample_ranges.iter().copied());
        out.seed_ledger.sample_ranges.sort_unstable();
        Ok(out)
    }
}

fn abort_fraction(aborted: u64, requested: u64) -> f64 {
    if requested == 0 {
        0.0
    } else {
        aborted as f64 / requested as f64
    }
}

/// One sample's observable table or the reason it aborted.
type SampleOutcome = std::result::Result<(Vec<f64>, Vec<Vec<f64>>), String>;

fn outcome(sim: &Simulation, observables: &[ObservableSpec], record: Result<TrajectoryRecord>) -> SampleOutcome {
    let record = record.map_err(|e| e.to_string())?;
    let values = sim.observe(observables, &record).map_err(|e| e.to_string())?;
    Ok((record.times, values))
}

fn horizon_index(times: &[f64], horizon: f64) -> usize {
    times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - horizon).abs().total_cmp(&(b.1 - horizon).abs()))
        .map_or(0, |(i, _)| i)
}

fn aggregate(config: &ExperimentConfig, range: Range<u64>, outcomes: Vec<SampleOutcome>) -> Result<EnsembleResult> {
    let observables = &config.observables;
    let mut series: Option<(Vec<f64>, Vec<Vec<RunningStats>>)> = None;
    let mut aborted = Vec::new();
    let mut completed = 0;
    for (index, o) in range.clone().zip(outcomes) {
        match o {
            Err(reason) => aborted.push(AbortRecord { index, reason }),
            Ok((times, values)) => {
                completed += 1;
                let (_, stats) = series.get_or_insert_with(|| {
                    let n = times.len();
                    (times.clone(), vec![vec![RunningStats::new(); n]; observables.len()])
                });
                for (s, v) in stats.iter_mut().zip(&values) {
                    for (st, x) in s.iter_mut().zip(v) {
                        st.push(*x);
                    }
                }
            }
        }
    }
    let (times, stats) = series.unwrap_or_else(|| (vec![0.0], vec![vec![RunningStats::new()]; observables.len()]));
    let summaries = observables
        .iter()
        .zip(stats)
        .map(|(o, st)| {
            let horizon = o.horizon.unwrap_or(config.run.horizon);
            let mut s = ObservableSummary {
                name: o.name.clone(),
                horizon,
                mean: 0.0,
                variance: 0.0,
                stderr: 0.0,
                samples: 0,
                series: times.iter().zip(st).map(|(&t, s)| SeriesPoint::from_stats(t, s)).collect(),
                horizon_index: horizon_index(&times, horizon),
            };
            s.refresh();
            s
        })
        .collect();
    let requested = range.end - range.start;
    Ok(EnsembleResult {
        dynamics: config.dynamics,
        mass_ratio: config.mass_ratio(),
        requested,
        completed,
        partial: abort_fraction(aborted.len() as u64, requested) > config.run.max_abort_fraction,
        aborted,
        max_abort_fraction: config.run.max_abort_fraction,
        observables: summaries,
        config_hash: config.hash(),
        seed_ledger: SeedLedger::new(config.seed, range),
    })
}

/// Ensemble over samples `0..n_samples`.
pub fn run_ensemble(config: &ExperimentConfig) -> Result<EnsembleResult> {
    run_ensemble_range(config, 0..config.run.n_samples as u64, None)
}

pub fn run_ensemble_range(config: &ExperimentConfig, range: Range<u64>, workers: Option<usize>) -> Result<EnsembleResult> {
    Ok(run_ensemble_detailed(config, range, workers, 0)?.0)
}

/// Ensemble plus the full trajectories of the first `keep` samples.
pub fn run_ensemble_detailed(
    config: &ExperimentConfig,
    range: Range<u64>,
    workers: Option<usize>,
    keep: usize,
) -> Result<(EnsembleResult, Vec<TrajectoryRecord>)> {
    let sim = Simulation::new(config)?;
    let keep_below = range.start + keep as u64;
    let results = map_indices(range.clone(), workers, |i| {
        let record = sim.run_sample(i);
        let kept = if i < keep_below { record.as_ref().ok().cloned() } else { None };
        (outcome(&sim, &config.observables, record), kept)
    })?;
    let mut kept = Vec::new();
    let mut outcomes = Vec::with_capacity(results.len());
    for (o, k) in results {
        outcomes.push(o);
        kept.extend(k);
    }
    Ok((aggregate(config, range, outcomes)?, kept))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakErrorEstimate {
    pub mass_ratio: f64,
    pub target_mean: f64,
    pub reference_mean: f64,
    /// Mean of the paired differences `g(target) − g(reference)`.
    pub difference: f64,
    /// `|difference|`.
    pub error: f64,
    pub stderr: f64,
    pub ci_half_width: f64,
    pub level: f64,
    pub samples: u64,
    pub batches: usize,
    pub aborted: u64,
    /// Whether the reference noise was coupled to the target's bath.
    pub coupled: bool,
    /// `Inconclusive` when the interval half-width exceeds the error.
    pub status: CheckStatus,
}

pub const CI_LEVEL: f64 = 0.95;

/// Batched estimate of `|E[a] − E[b]|` from paired samples.
pub fn weak_error_from_pairs(target: &[f64], reference: &[f64], batches: usize) -> Result<WeakErrorEstimate> {
    Error::check_dim("paired samples", target.len(), reference.len())?;
    let diffs: Vec<f64> = target.iter().zip(reference).map(|(a, b)| a - b).collect();
    let est = batch_means(&diffs, batches)
        .ok_or_else(|| Error::Insufficient(format!("{} pairs for {batches} batches", diffs.len())))?;
    let half = est.ci_half_width(CI_LEVEL);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(WeakErrorEstimate {
        mass_ratio: f64::NAN,
        target_mean: mean(target),
        reference_mean: mean(reference),
        difference: est.mean,
        error: est.mean.abs(),
        stderr: est.stderr,
        ci_half_width: half,
        level: CI_LEVEL,
        samples: diffs.len() as u64,
        batches: est.batches,
        aborted: 0,
        coupled: false,
        status: if half > est.mean.abs() { CheckStatus::Inconclusive } else { CheckStatus::Pass },
    })
}

/// Langevin (or Born–Oppenheimer) config that `config`'s dynamics should
/// approach: same heavy data, seed and observables, with the friction of
/// the bath's point-mass limit or of the electron spectral density.
///
/// The reference temperature is the Gibbs temperature of the sampled
/// noise: `T` under the density convention and `2T` under the covariance
/// convention.
pub fn langevin_reference(config: &ExperimentConfig) -> Result<ExperimentConfig> {
    let mut r = config.clone();
    let factor = match &config.sampler {
        SamplerSection::Gibbs { convention: VarianceConvention::Density, .. } => 1.0,
        SamplerSection::Gibbs { convention: VarianceConvention::Covariance, .. } => 2.0,
        _ => 1.0,
    };
    match config.dynamics {
        DynamicsKind::Zwanzig => {
            r.dynamics = DynamicsKind::Langevin;
            r.model.friction = Some(FrictionSection::Debye);
            r.run.temperature = factor * config.run.temperature;
        }
        DynamicsKind::Ehrenfest => {
            r.dynamics = DynamicsKind::BornOppenheimer;
            if !matches!(r.model.friction, Some(FrictionSection::Ehrenfest { .. })) {
                r.model.friction = Some(FrictionSection::Ehrenfest {
                    cutoff: crate::ehrenfest::FrictionOptions::default().cutoff,
                    bandwidth: None,
                });
            }
            r.run.temperature = factor * config.run.temperature;
        }
        DynamicsKind::Langevin | DynamicsKind::BornOppenheimer => {}
    }
    r.sampler = SamplerSection::Zero;
    r.validate()?;
    Ok(r)
}

/// Maps a Zwanzig bath draw to the standard normals of a Langevin path.
///
/// The half-step integrals of the bath noise along `u` are a linear image
/// `ι = A z` of the standardized bath amplitudes `z`. With the thin SVD
/// `A = U S Vᵀ`, `η = U Vᵀ z` is exactly standard normal and is the
/// orthonormal transform of `z` closest to `A`, so the Langevin path sees
/// the noise of its partner bath as closely as an exact law allows.
pub struct NoiseCoupling {
    q: DMatrix<f64>,
    sd: Vec<f64>,
    direction: DVector<f64>,
}

impl NoiseCoupling {
    pub fn new(bath: &SpectralBathModel, spec: &GibbsSpec, h: f64, n_steps: usize) -> Result<Self> {
        let direction = bath
            .common_direction()
            .ok_or_else(|| Error::UnsupportedModel("noise coupling needs a rank-one coupling direction".into()))?;
        let windows = 2 * n_steps;
        let modes = bath.modes();
        if windows > 2 * modes {
            return Err(Error::UnsupportedModel(format!(
                "{windows} half-step windows exceed the {} real bath amplitudes",
                2 * modes
            )));
        }
        let sd: Vec<f64> = (0..modes).map(|j| (0.5 * zwanzig_mode_second_moment(bath, spec, j)).sqrt()).collect();
        let m = bath.mass();
        let mut a = DMatrix::zeros(windows, 2 * modes);
        for (j, &l) in bath.eigenvalues().iter().enumerate() {
            let weight = m * bath.coupling(j).dot(&direction) * sd[j];
            for w in 0..windows {
                let (t0, t1) = (0.5 * h * w as f64, 0.5 * h * (w + 1) as f64);
                // (e^{−i t0 λ} − e^{−i t1 λ}) / i
                let d = (C64::from_polar(1.0, -t0 * l) - C64::from_polar(1.0, -t1 * l)) * C64::new(0.0, -1.0);
                a[(w, 2 * j)] = weight * d.re;
                a[(w, 2 * j + 1)] = -weight * d.im;
            }
        }
        let svd = SVD::new(a, true, true);
        let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        Ok(Self {
            q: u * vt,
            sd,
            direction,
        })
    }

    /// Normals for [`ReplayNoise`]: one `dof` vector per `O` half-step.
    pub fn langevin_normals(&self, psi: &[C64]) -> Vec<f64> {
        let z = DVector::from_iterator(
            2 * self.sd.len(),
            psi.iter().zip(&self.sd).flat_map(|(g, s)| {
                if *s > 0.0 {
                    [g.re / s, g.im / s]
                } else {
                    [0.0, 0.0]
                }
            }),
        );
        let eta = &self.q * z;
        let mut out = Vec::with_capacity(eta.len() * self.direction.len());
        for e in eta.iter() {
            out.extend(self.direction.iter().map(|u| e * u));
        }
        out
    }
}

fn final_value(values: &[Vec<f64>], times: &[f64], horizon: f64) -> f64 {
    values[0][horizon_index(times, horizon)]
}

fn coupled_pair(target: &ExperimentConfig, reference: &ExperimentConfig) -> bool {
    target.dynamics == DynamicsKind::Zwanzig
        && reference.dynamics == DynamicsKind::Langevin
        && reference.model.friction == Some(FrictionSection::Debye)
        && reference.model.bath == target.model.bath
        && reference.seed == target.seed
        && reference.run.h == target.run.h
        && reference.run.horizon == target.run.horizon
        && matches!(target.sampler, SamplerSection::Gibbs { .. })
        && matches!(target.model.bath, Some(BathSection::Debye { .. } | BathSection::ScaledDebye { .. }))
}

/// Paired weak error of `observable` between `target` and `reference`.
///
/// Both sides start from the same deterministic heavy data. A Zwanzig
/// target against its Debye Langevin reference shares noise through
/// [`NoiseCoupling`]; other pairs use disjoint streams.
pub fn weak_error(
    target: &ExperimentConfig,
    reference: &ExperimentConfig,
    observable: &ObservableSpec,
    workers: Option<usize>,
) -> Result<WeakErrorEstimate> {
    if target.heavy.x0 != reference.heavy.x0 {
        return Err(Error::config("heavy.x0", "target and reference start from different positions"));
    }
    if target.heavy.p0 != reference.heavy.p0 {
        return Err(Error::config("heavy.p0", "target and reference start from different momenta"));
    }
    if !matches!(reference.dynamics, DynamicsKind::Langevin | DynamicsKind::BornOppenheimer) {
        return Err(Error::config("dynamics", "the reference must be a Langevin-type dynamics"));
    }
    let horizon = observable.horizon.unwrap_or(target.run.horizon);
    observable.validate("observable", target.run.horizon.min(reference.run.horizon))?;
    let observables = std::slice::from_ref(observable);
    let sim_t = Simulation::new(target)?;
    let same_dynamics = target.dynamics == reference.dynamics;
    let sim_r = Simulation::new(reference)?.with_noise_role(if same_dynamics {
        StreamRole::Auxiliary
    } else {
        StreamRole::Wiener
    });
    let coupling = if coupled_pair(target, reference) {
        let bath = sim_t.bath().expect("zwanzig has a bath");
        Some(NoiseCoupling::new(bath, &target.gibbs_spec(), target.run.h, target.n_steps())?)
    } else {
        None
    };
    let n = target.run.n_samples.min(reference.run.n_samples) as u64;
    let pairs = map_indices(0..n, workers, |i| -> std::result::Result<(f64, f64), String> {
        let (rec_t, rec_r) = match &coupling {
            Some(c) => {
                let psi = sim_t.bath_wave(i).map_err(|e| e.to_string())?;
                let normals = c.langevin_normals(&psi);
                let rec_t = sim_t.zwanzig_sample(i, psi).map_err(|e| e.to_string())?;
                let rec_r = sim_r.langevin_sample(i, &mut ReplayNoise::new(&normals)).map_err(|e| e.to_string())?;
                (rec_t, rec_r)
            }
            None => (
                sim_t.run_sample(i).map_err(|e| e.to_string())?,
                sim_r.run_sample(i).map_err(|e| e.to_string())?,
            ),
        };
        let vt = sim_t.observe(observables, &rec_t).map_err(|e| e.to_string())?;
        let vr = sim_r.observe(observables, &rec_r).map_err(|e| e.to_string())?;
        Ok((final_value(&vt, &rec_t.times, horizon), final_value(&vr, &rec_r.times, horizon)))
    })?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut aborted = 0;
    for p in pairs {
        match p {
            Ok((x, y)) => {
                a.push(x);
                b.push(y);
            }
            Err(_) => aborted += 1,
        }
    }
    let mut est = weak_error_from_pairs(&a, &b, target.run.batches)?;
    est.mass_ratio = target.mass_ratio();
    est.aborted = aborted;
    est.coupled = coupling.is_some();
    if abort_fraction(aborted, n) > target.run.max_abort_fraction {
        est.status = est.status.and(CheckStatus::Inconclusive);
    }
    Ok(est)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<WeakErrorEstimate>,
    pub fit: Option<LineFit>,
    pub strictly_decreasing: bool,
    /// `slope ≤ −1/2 + slope_stderr`.
    pub slope_bound_met: bool,
    pub status: CheckStatus,
}

/// Log–log fit of error against mass ratio with the acceptance rule:
/// errors strictly decreasing and slope at most `−1/2` within one fit
/// standard error. Unresolved points make the sweep inconclusive.
pub fn assess_convergence(points: Vec<WeakErrorEstimate>) -> SweepReport {
    let strictly_decreasing = points.windows(2).all(|w| w[1].error < w[0].error);
    let usable = points.len() >= 3 && points.iter().all(|p| p.error > 0.0 && p.mass_ratio > 0.0);
    let fit = usable
        .then(|| {
            let x: Vec<f64> = points.iter().map(|p| p.mass_ratio.ln()).collect();
            let y: Vec<f64> = points.iter().map(|p| p.error.ln()).collect();
            let sigma: Vec<f64> = points.iter().map(|p| (p.stderr / p.error).max(1e-12)).collect();
            let weighted = points.iter().all(|p| p.stderr > 0.0);
            fit_line(&x, &y, weighted.then_some(sigma.as_slice()))
        })
        .flatten();
    let slope_bound_met = fit.is_some_and(|f| f.slope <= -0.5 + f.slope_stderr);
    let resolved = points.iter().all(|p| p.status == CheckStatus::Pass);
    let status = if !usable || !resolved {
        CheckStatus::Inconclusive
    } else {
        CheckStatus::from_bool(strictly_decreasing && slope_bound_met)
    };
    SweepReport {
        points,
        fit,
        strictly_decreasing,
        slope_bound_met,
        status,
    }
}

/// Weak error against the Langevin reference at every mass ratio of
/// `config.run.mass_ratios`.
pub fn convergence_sweep(config: &ExperimentConfig, observable: &ObservableSpec, workers: Option<usize>) -> Result<SweepReport> {
    let mut points = Vec::new();
    for m in config.sweep()? {
        let target = config.with_mass_ratio(m);
        let reference = langevin_reference(&target)?;
        points.push(weak_error(&target, &reference, observable, workers)?);
    }
    Ok(assess_convergence(points))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdtOptions {
    pub lags: Vec<f64>,
    pub draws: usize,
    pub seed: u64,
    /// Tolerance in standard errors.
    pub z: f64,
}

impl Default for FdtOptions {
    fn default() -> Self {
        Self {
            lags: (0..=10).map(|k| 0.1 * k as f64).collect(),
            draws: 20_000,
            seed: 0,
            z: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdtLag {
    pub lag: f64,
    pub empirical: Vec<Vec<f64>>,
    pub expected: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// Largest `|empirical − expected| / stderr` over components.
    pub max_z: f64,
    pub status: CheckStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdtReport {
    pub temperature: f64,
    pub draws: usize,
    pub lags: Vec<FdtLag>,
    pub status: CheckStatus,
}

/// Empirical `E[ζ⁰ ⊗ ζ^τ]` over Gibbs bath draws (covariance convention)
/// against `2T f(τ)` from the spectral kernel. The noise of a linearly
/// coupled bath does not depend on the heavy path, so no dynamics run.
pub fn fdt_check(bath: &SpectralBathModel, temperature: f64, options: &FdtOptions) -> Result<FdtReport> {
    if options.draws < 2 {
        return Err(Error::config("draws", "need at least two draws"));
    }
    let spec = GibbsSpec::new(temperature).with_convention(VarianceConvention::Covariance);
    spec.validate()?;
    let dof = bath.dof();
    let m = bath.mass();
    let lambda = bath.eigenvalues();
    let phases: Vec<Vec<C64>> = options
        .lags
        .iter()
        .map(|t| lambda.iter().map(|l| C64::from_polar(1.0, -t * l)).collect())
        .collect();
    let mut stats = vec![vec![RunningStats::new(); dof * dof]; options.lags.len()];
    let mut w = DVector::zeros(bath.modes());
    for i in 0..options.draws as u64 {
        let mut rng = StreamRng::for_sample(options.seed, i, StreamRole::InitialData);
        let gamma = sample_zwanzig_bath(bath, &spec, &mut rng).amplitudes;
        for (j, (l, g)) in lambda.iter().zip(&gamma).enumerate() {
            w[j] = m * l * g.re;
        }
        let z0 = bath.couplings().tr_mul(&w);
        for (k, ph) in phases.iter().enumerate() {
            for (j, (l, (g, e))) in lambda.iter().zip(gamma.iter().zip(ph)).enumerate() {
                w[j] = m * l * (e * g).re;
            }
            let zt = bath.couplings().tr_mul(&w);
            for a in 0..dof {
                for b in 0..dof {
                    stats[k][a * dof + b].push(z0[a] * zt[b]);
                }
            }
        }
    }
    let mut status = CheckStatus::Pass;
    let lags = options
        .lags
        .iter()
        .zip(stats)
        .map(|(&lag, st)| {
            let expected = memory_kernel_spectral(bath, lag) * (2.0 * temperature);
            let scale = expected.amax().max(1e-300);
            let mut max_z: f64 = 0.0;
            let mut ok = true;
            let table = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
                (0..dof).map(|a| (0..dof).map(|b| f(a, b)).collect()).collect()
            };
            for a in 0..dof {
                for b in 0..dof {
                    let s = st[a * dof + b];
                    let diff = (s.mean - expected[(a, b)]).abs();
                    if s.stderr() > 0.0 {
                        max_z = max_z.max(diff / s.stderr());
                        ok &= diff <= options.z * s.stderr();
                    } else {
                        ok &= diff <= 1e-12 * scale;
                    }
                }
            }
            let s = CheckStatus::from_bool(ok);
            status = status.and(s);
            FdtLag {
                lag,
                empirical: table(&|a, b| st[a * dof + b].mean),
                expected: table(&|a, b| expected[(a, b)]),
                stderr: table(&|a, b| st[a * dof + b].stderr()),
                max_z,
                status: s,
            }
        })
        .collect();
    Ok(FdtReport {
        temperature,
        draws: options.draws,
        lags,
        status,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongTimePoint {
    pub horizon: f64,
    pub target_mean: f64,
    pub target_stderr: f64,
    pub reference_mean: Option<f64>,
    pub reference_stderr: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongTimeReport {
    pub observable: String,
    pub points: Vec<LongTimePoint>,
    /// Running averages at the two longest horizons agree.
    pub settled: bool,
    pub status: CheckStatus,
}

/// Per-sample running averages `𝒯⁻¹∫₀^𝒯 g dτ` (trapezoid on the recorded grid).
fn running_averages(sim: &Simulation, observable: &ObservableSpec, horizons: &[f64], workers: Option<usize>) -> Result<Vec<RunningStats>> {
    let n = sim.config().run.n_samples as u64;
    let per_sample = map_indices(0..n, workers, |i| -> Result<Vec<f64>> {
        let rec = sim.run_sample(i)?;
        let v = sim.observe(std::slice::from_ref(observable), &rec)?;
        let (t, g) = (&rec.times, &v[0]);
        let mut integral = vec![0.0; t.len()];
        for k in 1..t.len() {
            integral[k] = integral[k - 1] + 0.5 * (t[k] - t[k - 1]) * (g[k] + g[k - 1]);
        }
        Ok(horizons
            .iter()
            .map(|&h| {
                let k = horizon_index(t, h);
                if t[k] > 0.0 {
                    integral[k] / t[k]
                } else {
                    g[0]
                }
            })
            .collect())
    })?;
    let mut stats = vec![RunningStats::new(); horizons.len()];
    let mut aborted = 0;
    for s in per_sample {
        match s {
            Ok(v) => stats.iter_mut().zip(v).for_each(|(st, x)| st.push(x)),
            Err(_) => aborted += 1,
        }
    }
    if abort_fraction(aborted, n) > sim.config().run.max_abort_fraction {
        return Err(Error::InternalConsistency(format!("{aborted} of {n} samples aborted")));
    }
    Ok(stats)
}

/// Long-time averages of `observable` for `target` and optionally a
/// Langevin `reference`, at each horizon in `horizons` (each at most the
/// run horizon). Inconclusive when the running average has not settled.
pub fn long_time_average(
    target: &ExperimentConfig,
    reference: Option<&ExperimentConfig>,
    observable: &ObservableSpec,
    horizons: &[f64],
    workers: Option<usize>,
) -> Result<LongTimeReport> {
    if horizons.is_empty() || horizons.iter().any(|h| !(*h > 0.0 && *h <= target.run.horizon * (1.0 + 1e-12))) {
        return Err(Error::config("horizons", "must be nonempty and lie in (0, run.horizon]"));
    }
    let t = running_averages(&Simulation::new(target)?, observable, horizons, workers)?;
    let r = match reference {
        Some(cfg) => {
            let sim = Simulation::new(cfg)?;
            let role = if cfg.dynamics == target.dynamics { StreamRole::Auxiliary } else { StreamRole::Wiener };
            Some(running_averages(&sim.with_noise_role(role), observable, horizons, workers)?)
        }
        None => None,
    };
    let points: Vec<LongTimePoint> = horizons
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            let rs = r.as_ref().map(|r| r[k]);
            LongTimePoint {
                horizon: h,
                target_mean: t[k].mean,
                target_stderr: t[k].stderr(),
                reference_mean: rs.map(|s| s.mean),
                reference_stderr: rs.map(|s| s.stderr()),
                gap: rs.map(|s| (t[k].mean - s.mean).abs()),
            }
        })
        .collect();
    let settled = match points.len() {
        0 | 1 => true,
        n => {
            let (a, b) = (&points[n - 2], &points[n - 1]);
            let tol = 3.0 * a.target_stderr.hypot(b.target_stderr) + 0.05 * b.target_mean.abs();
            (a.target_mean - b.target_mean).abs() <= tol
        }
    };
    Ok(LongTimeReport {
        observable: observable.name.clone(),
        points,
        settled,
        status: if settled { CheckStatus::Pass } else { CheckStatus::Inconclusive },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub delta: f64,
    pub times: Vec<f64>,
    /// Sample mean of `((g(p⁰ + δe) − g(p⁰)) / δ)²` at each time.
    pub mean_square: Vec<f64>,
}

/// Paired-trajectory proxy for the decay of observable sensitivity to the
/// initial momentum: both runs of a pair share every random stream.
pub fn sensitivity_decay(config: &ExperimentConfig, observable: &ObservableSpec, delta: f64, workers: Option<usize>) -> Result<SensitivityReport> {
    if !(delta > 0.0) {
        return Err(Error::config("delta", "must be positive"));
    }
    let base = Simulation::new(config)?;
    let dof = config.heavy.dof;
    let shift = DVector::from_element(dof, delta / (dof as f64).sqrt());
    let bumped = Simulation::new(config)?.with_initial_momentum(config.p0() + shift);
    let obs = std::slice::from_ref(observable);
    let n = config.run.n_samples as u64;
    let rows = map_indices(0..n, workers, |i| -> Result<(Vec<f64>, Vec<f64>)> {
        let a = base.run_sample(i)?;
        let b = bumped.run_sample(i)?;
        let ga = base.observe(obs, &a)?;
        let gb = bumped.observe(obs, &b)?;
        Ok((a.times, ga[0].iter().zip(&gb[0]).map(|(x, y)| ((y - x) / delta).powi(2)).collect()))
    })?;
    let mut times = Vec::new();
    let mut stats: Vec<RunningStats> = Vec::new();
    for row in rows.into_iter().flatten() {
        if stats.is_empty() {
            times = row.0;
            stats = vec![RunningStats::new(); times.len()];
        }
        stats.iter_mut().zip(row.1).for_each(|(s, v)| s.push(v));
    }
    Ok(SensitivityReport {
        delta,
        times,
        mean_square: stats.iter().map(|s| s.mean).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConsistencyReport {
    pub target_temperature: f64,
    pub bath_temperature: f64,
    pub horizon: f64,
    pub relaxation: Option<f64>,
    pub invariant: InvariantReport,
    pub status: CheckStatus,
}

/// Ensemble of Zwanzig runs over bath draws; the heavy `(X, p)` law at the
/// horizon is compared with the Gibbs marginals at `target_temperature`.
pub fn gibbs_consistency_test(config: &ExperimentConfig, target_temperature: f64, workers: Option<usize>) -> Result<GibbsConsistencyReport> {
    if config.dynamics != DynamicsKind::Zwanzig {
        return Err(Error::config("dynamics", "gibbs consistency needs zwanzig dynamics"));
    }
    let sim = Simulation::new(config)?;
    let n = config.run.n_samples as u64;
    let finals = map_indices(0..n, workers, |i| {
        sim.run_sample(i).map(|r| (r.x.last().cloned(), r.p.last().cloned()))
    })?;
    let target = GibbsTarget::from_heavy(&config.heavy_model()?, target_temperature);
    let options = InvariantOptions {
        batches: config.run.batches,
        max_order: 2,
        ks_samples: n as usize,
        ..Default::default()
    };
    let mut check = InvariantCheck::new(target, n, options);
    let mut aborted = 0;
    for f in finals {
        match f {
            Ok((Some(x), Some(p))) => check.push(&x, &p),
            _ => aborted += 1,
        }
    }
    let invariant = check.report();
    // slowest damping rate of the point-mass friction
    let relaxation = sim.bath().and_then(|b| {
        let (k, c) = (b.kappa()?, b.debye_cutoff()?);
        let khat = crate::bath::friction_limit_debye(k, b.mass(), c).ok()?;
        let eig = crate::linalg::SortedEigen::new(&khat);
        Some(eig.values[eig.values.len() - 1])
    });
    let mut status = invariant.status;
    if relaxation.is_some_and(|r| r * config.run.horizon < 3.0) {
        status = status.and(CheckStatus::Inconclusive);
    }
    if abort_fraction(aborted, n) > config.run.max_abort_fraction {
        status = status.and(CheckStatus::Inconclusive);
    }
    Ok(GibbsConsistencyReport {
        target_temperature,
        bath_temperature: config.run.temperature,
        horizon: config.run.horizon,
        relaxation,
        invariant,
        status,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticPoint {
    pub mass_ratio: f64,
    pub h: f64,
    pub steps: usize,
    pub max_remainder: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticReport {
    pub points: Vec<AdiabaticPoint>,
    pub strictly_decreasing: bool,
    pub status: CheckStatus,
}

/// Starts in the ground state at `(x0, p0)` and records the largest norm
/// of the wave's component orthogonal to `Ψ₀(X)` over `[0, horizon]`.
pub fn adiabatic_check(
    model: &EhrenfestModel,
    x0: &DVector<f64>,
    p0: &DVector<f64>,
    mass_ratios: &[f64],
    horizon: f64,
    max_h: f64,
) -> Result<AdiabaticReport> {
    if mass_ratios.len() < 2 {
        return Err(Error::config("mass_ratios", "need at least two values"));
    }
    let mut points = Vec::new();
    for &m in mass_ratios {
        let model = model.with_mass_ratio(m)?;
        let frame = model.frame(x0)?;
        let spread = frame.values[frame.levels() - 1] - frame.values[0];
        let h_cap = 0.25 * std::f64::consts::PI / (model.sqrt_mass_ratio() * spread.max(1e-12));
        let steps = (horizon / max_h.min(h_cap)).ceil() as usize;
        let h = horizon / steps as f64;
        let state = EhrenfestState::eigenstate(&model, x0.clone(), p0.clone(), 0)?;
        let (_, path) = integrate_ehrenfest(&state, h, steps, 1, &model)?;
        let r = adiabatic_overlap(&model, &path.xs, &path.waves, 0)?;
        points.push(AdiabaticPoint {
            mass_ratio: m,
            h,
            steps,
            max_remainder: r.into_iter().fold(0.0, f64::max),
        });
    }
    let strictly_decreasing = points.windows(2).all(|w| w[1].max_remainder < w[0].max_remainder);
    Ok(AdiabaticReport {
        status: CheckStatus::from_bool(strictly_decreasing),
        points,
        strictly_decreasing,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureStateContrast {
    pub pure: ContrastEstimate,
    pub gibbs: ContrastEstimate,
    /// Pure-state mean within three standard errors of zero.
    pub pure_vanishes: bool,
    /// Gibbs mean more than five standard errors above zero.
    pub gibbs_separated: bool,
    pub status: CheckStatus,
}

/// `E[|Re⟨ψ̃⁰, H̃ γ̃₀ ∂_XΨ₀⟩|²]` under pure-state and Gibbs sampling at `x`.
pub fn pure_state_contrast(model: &EhrenfestModel, x: &DVector<f64>, temperature: f64, draws: usize, seed: u64) -> Result<PureStateContrast> {
    if draws < 2 {
        return Err(Error::config("draws", "need at least two draws"));
    }
    let frame = model.frame(x)?;
    let levels: Vec<f64> = frame.values.iter().copied().collect();
    let excited = frame.excited();
    let spec = GibbsSpec::new(temperature);
    let mut pure = RunningStats::new();
    let mut gibbs = RunningStats::new();
    for i in 0..draws as u64 {
        let mut rng = StreamRng::for_sample(seed, i, StreamRole::InitialData);
        let (_, wave) = sample_pure_states(&levels, temperature, &mut rng);
        let psi: CVector = frame.wave_from_sample(&wave)?;
        pure.push(fluctuation_projection(&frame, &psi).norm_squared());
        let mut rng = StreamRng::for_sample(seed, i, StreamRole::Auxiliary);
        let draw = sample_ehrenfest_modes(&excited, &spec, EhrenfestSamplerOptions::default(), &mut rng)?;
        let psi = frame.wave_from_sample(&draw.wave)?;
        gibbs.push(fluctuation_projection(&frame, &psi).norm_squared());
    }
    let est = |s: RunningStats| ContrastEstimate {
        mean: s.mean,
        stderr: s.stderr(),
        samples: s.count as usize,
    };
    let (pure, gibbs) = (est(pure), est(gibbs));
    let pure_vanishes = pure.mean.abs() <= 3.0 * pure.stderr + 1e-14;
    let gibbs_separated = gibbs.mean > 5.0 * gibbs.stderr && gibbs.stderr > 0.0;
    Ok(PureStateContrast {
        status: CheckStatus::from_bool(pure_vanishes && gibbs_separated),
        pure,
        gibbs,
        pure_vanishes,
        gibbs_separated,
    })
}

/// Two-sided t critical value used for the weak-error intervals.
pub fn ci_factor(batches: usize) -> f64 {
    t_quantile(0.5 + 0.5 * CI_LEVEL, (batches.max(2) - 1) as f64)
}
