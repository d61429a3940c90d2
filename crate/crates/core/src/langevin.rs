//! Itô Langevin dynamics with position-dependent friction
//!
//! ```text
//! dX = p dτ
//! dp = (−∂λ₀(X) − M^{-1/2} K(X) p) dτ + √(2T M^{-1/2}) K^{1/2}(X) dW
//! ```
//!
//! integrated with the symmetric splitting `O(h/2) B(h/2) A(h) B(h/2) O(h/2)`
//! in which each `O` is the exact Ornstein–Uhlenbeck flow of `p` with `K`
//! frozen at the current `X`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bath::friction_limit_debye;
use crate::ehrenfest::{friction_matrix, EhrenfestModel, FrictionOptions};
use crate::linalg::{symmetrize, symmetry_defect, SortedEigen};
use crate::potential::{HeavyModel, Potential, PotentialKind};
use crate::quad::gauss_legendre;
use crate::rng::StreamRng;
use crate::stats::{ks_pvalue, ks_statistic, normal_cdf, BatchAccumulator, BatchEstimate, CheckStatus};
use crate::{Error, Result};

pub use crate::linalg::matrix_sqrt_psd;

/// Eigenvalues of K above `−PSD_TOL·max(1, |K|)` are clamped to zero.
pub const PSD_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub enum FrictionSource {
    /// `K` itself.
    Constant(DMatrix<f64>),
    /// Point-mass limit of a Debye bath, which already equals `M^{-1/2}K`.
    Debye { kappa: DMatrix<f64>, mass: f64, cutoff: f64 },
    /// `K(X)` from the ground-state spectral density of an Ehrenfest model.
    Ehrenfest { model: Box<EhrenfestModel>, options: FrictionOptions },
}

#[derive(Clone, Debug)]
pub struct FrictionModel {
    pub source: FrictionSource,
    pub temperature: f64,
    pub mass_ratio: f64,
    /// Multiplies the diffusion coefficient `2T M^{-1/2} K`; 1 for the
    /// Einstein-consistent pairing.
    pub diffusion_scale: f64,
    dof: usize,
}

impl FrictionModel {
    pub fn new(source: FrictionSource, temperature: f64, mass_ratio: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(Error::ModelInvalid(format!("temperature {temperature} is negative")));
        }
        if !(mass_ratio.is_finite() && mass_ratio > 0.0) {
            return Err(Error::ModelInvalid(format!("mass ratio {mass_ratio} is not positive")));
        }
        let dof = match &source {
            FrictionSource::Constant(k) => {
                check_psd(k)?;
                k.nrows()
            }
            FrictionSource::Debye { kappa, mass, cutoff } => {
                friction_limit_debye(kappa, *mass, *cutoff)?;
                kappa.nrows()
            }
            FrictionSource::Ehrenfest { model, .. } => model.dof,
        };
        Ok(Self {
            source,
            temperature,
            mass_ratio,
            diffusion_scale: 1.0,
            dof,
        })
    }

    pub fn constant(k: DMatrix<f64>, temperature: f64, mass_ratio: f64) -> Result<Self> {
        Self::new(FrictionSource::Constant(k), temperature, mass_ratio)
    }

    /// Scalar friction `γ` on every coordinate, given as the effective
    /// damping rate `M^{-1/2}K = γ`.
    pub fn isotropic_rate(dof: usize, rate: f64, temperature: f64) -> Result<Self> {
        Self::constant(DMatrix::identity(dof, dof) * rate, temperature, 1.0)
    }

    pub fn with_diffusion_scale(mut self, scale: f64) -> Self {
        self.diffusion_scale = scale;
        self
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self.source, FrictionSource::Ehrenfest { .. })
    }

    /// `K(X)`.
    pub fn k(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.effective(x)? * self.mass_ratio.sqrt())
    }

    /// `M^{-1/2} K(X)`, the damping matrix acting on `p`.
    pub fn effective(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Error::check_dim("heavy position", self.dof, x.len())?;
        let scale = 1.0 / self.mass_ratio.sqrt();
        match &self.source {
            FrictionSource::Constant(k) => Ok(k * scale),
            FrictionSource::Debye { kappa, mass, cutoff } => friction_limit_debye(kappa, *mass, *cutoff),
            FrictionSource::Ehrenfest { model, options } => Ok(friction_matrix(model, x, *options)?.k * scale),
        }
    }

    /// `K^{1/2}(X)`.
    pub fn sqrt(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        matrix_sqrt_psd(&self.k(x)?, PSD_TOL * self.k(x)?.amax().max(1.0))
    }
}

fn check_psd(k: &DMatrix<f64>) -> Result<()> {
    if !k.is_square() {
        return Err(Error::ModelInvalid("friction matrix must be square".into()));
    }
    let scale = k.amax().max(1.0);
    if symmetry_defect(k) > 1e-12 * scale {
        return Err(Error::ModelInvalid("friction matrix must be symmetric".into()));
    }
    let min = SortedEigen::new(k).values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL * scale {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangevinState {
    pub tau: f64,
    pub x: DVector<f64>,
    pub p: DVector<f64>,
}

impl LangevinState {
    pub fn new(x: DVector<f64>, p: DVector<f64>) -> Self {
        Self { tau: 0.0, x, p }
    }
}

/// Source of independent standard normals for the `O` substeps.
pub trait GaussianSource {
    fn fill_standard_normal(&mut self, out: &mut [f64]);
}

impl GaussianSource for StreamRng {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        self.fill_normal(out);
    }
}

/// Replays a fixed sequence of normals, two vectors per step.
pub struct ReplayNoise<'a> {
    data: &'a [f64],
    pos: usize,
}

impl<'a> ReplayNoise<'a> {
    pub fn new(data: &'a [f64]) -> Self {
        Self { data, pos: 0 }
    }
}

impl GaussianSource for ReplayNoise<'_> {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        let n = out.len();
        out.copy_from_slice(&self.data[self.pos..self.pos + n]);
        self.pos += n;
    }
}

struct OuFactors {
    decay: DMatrix<f64>,
    noise: DMatrix<f64>,
}

fn ou_factors(effective: &DMatrix<f64>, s: f64, variance: f64, h: f64) -> Result<OuFactors> {
    let eig = SortedEigen::new(&symmetrize(effective));
    let scale = effective.amax().max(1.0);
    let min = eig.values[0];
    if min < -PSD_TOL * scale {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let max = eig.values[eig.values.len() - 1];
    if h * max >= 1.0 {
        return Err(Error::StepSize {
            h,
            reason: format!("h·‖M^(-1/2)K‖ = {:.3} must stay below 1", h * max),
        });
    }
    Ok(OuFactors {
        decay: eig.apply(|w| (-s * w.max(0.0)).exp()),
        noise: eig.apply(|w| (variance * -(-2.0 * s * w.max(0.0)).exp_m1()).sqrt()),
    })
}

/// Reusable integrator; caches the OU factors when the friction is constant
/// and the potential gradient between steps.
pub struct LangevinStepper<'a> {
    friction: &'a FrictionModel,
    potential: &'a dyn Potential,
    h: f64,
    constant: Option<OuFactors>,
    grad: DVector<f64>,
    grad_at: Option<DVector<f64>>,
    xi: DVector<f64>,
    tmp: DVector<f64>,
}

impl<'a> LangevinStepper<'a> {
    pub fn new(friction: &'a FrictionModel, potential: &'a dyn Potential, h: f64) -> Result<Self> {
        Error::check_dim("friction vs potential dof", potential.dim(), friction.dof())?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::StepSize { h, reason: "step must be positive".into() });
        }
        let dof = friction.dof();
        let constant = if friction.is_constant() {
            let eff = friction.effective(&DVector::zeros(dof))?;
            Some(ou_factors(&eff, 0.5 * h, friction.diffusion_scale * friction.temperature, h)?)
        } else {
            None
        };
        Ok(Self {
            friction,
            potential,
            h,
            constant,
            grad: DVector::zeros(dof),
            grad_at: None,
            xi: DVector::zeros(dof),
            tmp: DVector::zeros(dof),
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    fn ou(&mut self, state: &mut LangevinState, noise: &mut dyn GaussianSource) -> Result<()> {
        let fresh;
        let f = match &self.constant {
            Some(f) => f,
            None => {
                let eff = self.friction.effective(&state.x)?;
                fresh = ou_factors(&eff, 0.5 * self.h, self.friction.diffusion_scale * self.friction.temperature, self.h)?;
                &fresh
            }
        };
        noise.fill_standard_normal(self.xi.as_mut_slice());
        self.tmp.gemv(1.0, &f.decay, &state.p, 0.0);
        self.tmp.gemv(1.0, &f.noise, &self.xi, 1.0);
        std::mem::swap(&mut state.p, &mut self.tmp);
        Ok(())
    }

    fn kick(&mut self, state: &mut LangevinState) -> Result<()> {
        if self.grad_at.as_ref() != Some(&state.x) {
            self.potential.gradient_into(&state.x, &mut self.grad)?;
            match self.grad_at.as_mut() {
                Some(g) => g.copy_from(&state.x),
                None => self.grad_at = Some(state.x.clone()),
            }
        }
        state.p.axpy(-0.5 * self.h, &self.grad, 1.0);
        Ok(())
    }

    pub fn step(&mut self, state: &mut LangevinState, noise: &mut dyn GaussianSource) -> Result<()> {
        Error::check_dim("heavy position", self.friction.dof(), state.x.len())?;
        Error::check_dim("heavy momentum", self.friction.dof(), state.p.len())?;
        self.ou(state, noise)?;
        self.kick(state)?;
        state.x.axpy(self.h, &state.p, 1.0);
        self.kick(state)?;
        self.ou(state, noise)?;
        state.tau += self.h;
        Ok(())
    }
}

/// One step; see [`LangevinStepper`] for repeated use.
pub fn langevin_step(
    state: &LangevinState,
    h: f64,
    friction: &FrictionModel,
    potential: &dyn Potential,
    noise: &mut dyn GaussianSource,
) -> Result<LangevinState> {
    let mut stepper = LangevinStepper::new(friction, potential, h)?;
    let mut next = state.clone();
    stepper.step(&mut next, noise)?;
    Ok(next)
}

/// `2T e^{−Γ|τ−σ|} + e^{−Γτ} (S − 2T) e^{−Γσ}` with `Γ = M^{-1/2}K` and
/// `S = E[p⁰ ⊗ p⁰]`; for `S ∝ I` this is the closed-form covariance of the
/// force-free OU momentum with stationary variance `2T`.
pub fn ou_covariance_exact(
    k: &DMatrix<f64>,
    temperature: f64,
    mass_ratio: f64,
    p0_second_moment: &DMatrix<f64>,
    tau: f64,
    sigma: f64,
) -> Result<DMatrix<f64>> {
    check_psd(k)?;
    let n = k.nrows();
    Error::check_dim("initial second moment", n, p0_second_moment.nrows())?;
    let eig = SortedEigen::new(&(symmetrize(k) / mass_ratio.sqrt()));
    let e = |t: f64| eig.apply(|w| (-w * t).exp());
    let two_t = DMatrix::identity(n, n) * (2.0 * temperature);
    Ok(&e((tau - sigma).abs()) * &two_t + e(tau) * (p0_second_moment - &two_t) * e(sigma))
}

/// [`ou_covariance_exact`] for a friction model; only constant sources apply.
pub fn ou_covariance_for(
    friction: &FrictionModel,
    temperature: f64,
    p0_second_moment: &DMatrix<f64>,
    tau: f64,
    sigma: f64,
) -> Result<DMatrix<f64>> {
    if !friction.is_constant() {
        return Err(Error::UnsupportedModel("OU covariance needs a constant friction matrix".into()));
    }
    let k = friction.k(&DVector::zeros(friction.dof()))?;
    ou_covariance_exact(&k, temperature, friction.mass_ratio, p0_second_moment, tau, sigma)
}

/// One-dimensional marginal of a Gibbs law.
#[derive(Clone, Debug, PartialEq)]
pub enum Marginal {
    Gaussian { variance: f64 },
    Tabulated { grid: Vec<f64>, cdf: Vec<f64>, moments: [f64; 4] },
    /// Not normalizable (free coordinate); only the momentum is checked.
    Unavailable,
}

impl Marginal {
    /// Density `∝ e^{−v(x)/T}` tabulated on `[lo, hi]`.
    pub fn from_density(v: impl Fn(f64) -> f64, temperature: f64, lo: f64, hi: f64) -> Self {
        let weight = |x: f64| (-(v(x)) / temperature).exp();
        let panels = 400;
        let z = gauss_legendre(&weight, lo, hi, panels);
        let mut moments = [0.0; 4];
        for (k, m) in moments.iter_mut().enumerate() {
            *m = gauss_legendre(|x| x.powi(k as i32 + 1) * weight(x), lo, hi, panels) / z;
        }
        let n = 8001;
        let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let mut cdf = vec![0.0; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1] + gauss_legendre(&weight, grid[i - 1], grid[i], 1) / z;
        }
        Self::Tabulated { grid, cdf, moments }
    }

    pub fn moment(&self, order: usize) -> Option<f64> {
        match self {
            Self::Gaussian { variance } => Some(match order {
                2 => *variance,
                4 => 3.0 * variance * variance,
                _ => 0.0,
            }),
            Self::Tabulated { moments, .. } => moments.get(order - 1).copied(),
            Self::Unavailable => None,
        }
    }

    pub fn cdf(&self, x: f64) -> Option<f64> {
        match self {
            Self::Gaussian { variance } => Some(normal_cdf(x / variance.sqrt())),
            Self::Tabulated { grid, cdf, .. } => {
                if x <= grid[0] {
                    return Some(0.0);
                }
                if x >= grid[grid.len() - 1] {
                    return Some(1.0);
                }
                let step = grid[1] - grid[0];
                let i = ((x - grid[0]) / step) as usize;
                let t = (x - grid[i]) / step;
                Some(cdf[i] + t * (cdf[i + 1] - cdf[i]))
            }
            Self::Unavailable => None,
        }
    }
}

/// Per-coordinate marginals of `e^{−(|p|²/2 + λ(X))/T}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsTarget {
    pub temperature: f64,
    pub x: Vec<Marginal>,
    pub p: Vec<Marginal>,
}

impl GibbsTarget {
    pub fn from_heavy(heavy: &HeavyModel, temperature: f64) -> Self {
        let dof = heavy.dof();
        let x = match heavy.kind() {
            PotentialKind::Free => vec![Marginal::Unavailable; dof],
            PotentialKind::Quadratic { .. } => {
                let a = heavy.quadratic_matrix().expect("quadratic");
                match a.clone().cholesky() {
                    Some(ch) => {
                        let inv = ch.inverse();
                        (0..dof).map(|k| Marginal::Gaussian { variance: temperature * inv[(k, k)] }).collect()
                    }
                    None => vec![Marginal::Unavailable; dof],
                }
            }
            PotentialKind::DoubleWell => {
                let reach = (1.0 + (200.0 * temperature).sqrt()).sqrt() + 0.5;
                let m = Marginal::from_density(|v| 0.25 * (v * v - 1.0).powi(2), temperature, -reach, reach);
                vec![m; dof]
            }
        };
        Self {
            temperature,
            x,
            p: vec![Marginal::Gaussian { variance: temperature }; dof],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantOptions {
    pub batches: usize,
    /// Moment tolerance in standard errors.
    pub z: f64,
    /// KS p-value below which the check fails.
    pub significance: f64,
    /// Approximate number of thinned samples kept for the KS test.
    pub ks_samples: usize,
    pub max_order: usize,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        Self {
            batches: 32,
            z: 3.0,
            significance: 1e-3,
            ks_samples: 2000,
            max_order: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    X,
    P,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub variable: Variable,
    pub coordinate: usize,
    pub order: usize,
    pub expected: f64,
    pub estimate: Option<BatchEstimate>,
    pub status: CheckStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsCheck {
    pub variable: Variable,
    pub coordinate: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub samples: usize,
    pub status: CheckStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub status: CheckStatus,
    pub samples: u64,
    pub moments: Vec<MomentCheck>,
    pub ks: Vec<KsCheck>,
    /// Fraction of samples with `X_k > 0` per coordinate.
    pub positive_fraction: Vec<Option<BatchEstimate>>,
}

impl InvariantReport {
    pub fn moment(&self, variable: Variable, coordinate: usize, order: usize) -> Option<&MomentCheck> {
        self.moments
            .iter()
            .find(|m| m.variable == variable && m.coordinate == coordinate && m.order == order)
    }
}

/// Streaming comparison of sampled `(X, p)` against a Gibbs target.
pub struct InvariantCheck {
    target: GibbsTarget,
    options: InvariantOptions,
    thin: u64,
    count: u64,
    // [variable][coordinate][order - 1]
    moments: [Vec<Vec<BatchAccumulator>>; 2],
    kept: [Vec<Vec<f64>>; 2],
    positive: Vec<BatchAccumulator>,
}

impl InvariantCheck {
    pub fn new(target: GibbsTarget, expected_samples: u64, options: InvariantOptions) -> Self {
        let dof = target.p.len();
        let batch_len = (expected_samples / options.batches.max(2) as u64).max(1);
        let acc = || (0..dof).map(|_| (0..options.max_order).map(|_| BatchAccumulator::new(batch_len)).collect()).collect();
        Self {
            thin: (expected_samples / options.ks_samples.max(1) as u64).max(1),
            count: 0,
            moments: [acc(), acc()],
            kept: [vec![Vec::new(); dof], vec![Vec::new(); dof]],
            positive: (0..dof).map(|_| BatchAccumulator::new(batch_len)).collect(),
            target,
            options,
        }
    }

    pub fn push(&mut self, x: &DVector<f64>, p: &DVector<f64>) {
        let keep = self.count % self.thin == 0;
        for (v, data) in [x, p].into_iter().enumerate() {
            for (c, &value) in data.iter().enumerate() {
                let mut power = 1.0;
                for acc in &mut self.moments[v][c] {
                    power *= value;
                    acc.push(power);
                }
                if keep {
                    self.kept[v][c].push(value);
                }
            }
        }
        for (c, acc) in self.positive.iter_mut().enumerate() {
            acc.push(if x[c] > 0.0 { 1.0 } else { 0.0 });
        }
        self.count += 1;
    }

    pub fn report(&self) -> InvariantReport {
        let mut status = CheckStatus::Pass;
        let mut moments = Vec::new();
        let mut ks = Vec::new();
        for (v, variable) in [Variable::X, Variable::P].into_iter().enumerate() {
            let marginals = if v == 0 { &self.target.x } else { &self.target.p };
            for (c, marginal) in marginals.iter().enumerate() {
                if matches!(marginal, Marginal::Unavailable) {
                    continue;
                }
                for order in 1..=self.options.max_order {
                    let expected = marginal.moment(order).unwrap_or(f64::NAN);
                    let estimate = self.moments[v][c][order - 1].estimate();
                    let s = match estimate {
                        Some(e) if e.batches >= self.options.batches.max(2) / 2 => {
                            CheckStatus::from_bool((e.mean - expected).abs() <= self.options.z * e.stderr)
                        }
                        _ => CheckStatus::Inconclusive,
                    };
                    status = status.and(s);
                    moments.push(MomentCheck { variable, coordinate: c, order, expected, estimate, status: s });
                }
                let kept = &self.kept[v][c];
                if kept.len() < 20 {
                    status = status.and(CheckStatus::Inconclusive);
                    continue;
                }
                let d = ks_statistic(kept, |t| marginal.cdf(t).unwrap_or(0.5));
                let p_value = ks_pvalue(d, kept.len());
                let s = CheckStatus::from_bool(p_value >= self.options.significance);
                status = status.and(s);
                ks.push(KsCheck { variable, coordinate: c, statistic: d, p_value, samples: kept.len(), status: s });
            }
        }
        if moments.is_empty() {
            status = CheckStatus::Inconclusive;
        }
        InvariantReport {
            status,
            samples: self.count,
            moments,
            ks,
            positive_fraction: self.positive.iter().map(BatchAccumulator::estimate).collect(),
        }
    }
}

/// Runs one long Langevin path and checks its empirical law against the
/// Gibbs marginals of `heavy` at the friction model's temperature.
pub fn invariant_measure_check(
    heavy: &HeavyModel,
    friction: &FrictionModel,
    state0: &LangevinState,
    h: f64,
    n_steps: u64,
    burn_in: u64,
    rng: &mut StreamRng,
    options: InvariantOptions,
) -> Result<InvariantReport> {
    let target = GibbsTarget::from_heavy(heavy, friction.temperature);
    let mut check = InvariantCheck::new(target, n_steps, options);
    let mut stepper = LangevinStepper::new(friction, heavy, h)?;
    let mut state = state0.clone();
    for _ in 0..burn_in {
        stepper.step(&mut state, rng)?;
    }
    for _ in 0..n_steps {
        stepper.step(&mut state, rng)?;
        check.push(&state.x, &state.p);
    }
    Ok(check.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::stats::RunningStats;

    #[test]
    fn sqrt_of_random_psd() {
        let mut rng = StreamRng::new(1, 0);
        let a = DMatrix::from_fn(4, 3, |_, _| rng.normal());
        let k = &a * a.transpose();
        let s = matrix_sqrt_psd(&k, 1e-12).unwrap();
        assert!((&s * &s - &k).amax() < 1e-10);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.1]));
        assert!(matches!(matrix_sqrt_psd(&bad, 1e-12), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn zero_friction_is_verlet_bitwise() {
        let heavy = HeavyModel::double_well(2);
        let fr = FrictionModel::constant(DMatrix::zeros(2, 2), 0.7, 1e4).unwrap();
        let mut stepper = LangevinStepper::new(&fr, &heavy, 0.01).unwrap();
        let mut s = LangevinState::new(DVector::from_vec(vec![0.3, -1.2]), DVector::from_vec(vec![0.1, 0.4]));
        let (mut x, mut p) = (s.x.clone(), s.p.clone());
        let mut rng = StreamRng::new(2, 0);
        for _ in 0..1000 {
            stepper.step(&mut s, &mut rng).unwrap();
            p.axpy(-0.005, &heavy.grad(&x), 1.0);
            x.axpy(0.01, &p, 1.0);
            p.axpy(-0.005, &heavy.grad(&x), 1.0);
        }
        assert_eq!(s.x, x);
        assert_eq!(s.p, p);
    }

    #[test]
    fn zero_temperature_decay() {
        let heavy = HeavyModel::free(1);
        let k = 3.0;
        let mass = 100.0;
        let fr = FrictionModel::constant(DMatrix::from_element(1, 1, k), 0.0, mass).unwrap();
        let mut s = LangevinState::new(DVector::zeros(1), DVector::from_element(1, 2.0));
        let mut stepper = LangevinStepper::new(&fr, &heavy, 0.05).unwrap();
        let mut rng = StreamRng::new(0, 0);
        for _ in 0..200 {
            stepper.step(&mut s, &mut rng).unwrap();
        }
        assert_relative_eq!(s.p[0], 2.0 * (-k / mass.sqrt() * s.tau).exp(), max_relative = 1e-12);
    }

    #[test]
    fn step_bound_enforced() {
        let heavy = HeavyModel::free(1);
        let fr = FrictionModel::isotropic_rate(1, 50.0, 1.0).unwrap();
        assert!(matches!(LangevinStepper::new(&fr, &heavy, 0.05), Err(Error::StepSize { .. })));
    }

    #[test]
    fn debye_source_is_point_mass_limit() {
        let kappa = DMatrix::from_element(1, 1, 2.0);
        let fr = FrictionModel::new(FrictionSource::Debye { kappa: kappa.clone(), mass: 0.5, cutoff: 3.0 }, 1.0, 400.0).unwrap();
        let eff = fr.effective(&DVector::zeros(1)).unwrap();
        assert_relative_eq!(eff, friction_limit_debye(&kappa, 0.5, 3.0).unwrap());
        assert_relative_eq!(fr.k(&DVector::zeros(1)).unwrap(), eff * 20.0, max_relative = 1e-14);
    }

    #[test]
    fn ou_formula_examples() {
        let k = DMatrix::from_element(1, 1, 2.0);
        let s0 = DMatrix::from_element(1, 1, 0.7);
        assert_relative_eq!(ou_covariance_exact(&k, 0.3, 4.0, &s0, 0.0, 0.0).unwrap()[(0, 0)], 0.7, epsilon = 1e-15);
        assert_relative_eq!(ou_covariance_exact(&k, 0.3, 4.0, &s0, 200.0, 200.0).unwrap()[(0, 0)], 0.6, epsilon = 1e-12);
        let fr = FrictionModel::new(
            FrictionSource::Ehrenfest { model: Box::new(EhrenfestModel::default_family(1, 1e4)), options: Default::default() },
            1.0,
            1e4,
        )
        .unwrap();
        assert!(matches!(ou_covariance_for(&fr, 1.0, &s0, 1.0, 1.0), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn harmonic_gibbs_moments() {
        let heavy = HeavyModel::harmonic(1, 1.0);
        let t = 0.4;
        let fr = FrictionModel::isotropic_rate(1, 1.0, t).unwrap();
        let s0 = LangevinState::new(DVector::zeros(1), DVector::zeros(1));
        let report = invariant_measure_check(&heavy, &fr, &s0, 0.05, 400_000, 1000, &mut StreamRng::new(3, 0), Default::default()).unwrap();
        let x2 = report.moment(Variable::X, 0, 2).unwrap();
        let p2 = report.moment(Variable::P, 0, 2).unwrap();
        assert!(x2.status.passed() && p2.status.passed(), "{x2:?} {p2:?}");
        assert_eq!(report.status, CheckStatus::Pass, "{report:?}");
    }

    #[test]
    fn halved_diffusion_fails() {
        let heavy = HeavyModel::harmonic(1, 1.0);
        let fr = FrictionModel::isotropic_rate(1, 1.0, 0.4).unwrap().with_diffusion_scale(0.5);
        let s0 = LangevinState::new(DVector::zeros(1), DVector::zeros(1));
        let report = invariant_measure_check(&heavy, &fr, &s0, 0.05, 400_000, 1000, &mut StreamRng::new(3, 0), Default::default()).unwrap();
        assert_eq!(report.status, CheckStatus::Fail);
        assert!(!report.moment(Variable::P, 0, 2).unwrap().status.passed());
    }

    #[test]
    fn double_well_modes_are_balanced() {
        let heavy = HeavyModel::double_well(1);
        let t = 0.15;
        let target = GibbsTarget::from_heavy(&heavy, t);
        // odd moments vanish by symmetry
        assert!(target.x[0].moment(1).unwrap().abs() < 1e-12);
        assert!(target.x[0].moment(3).unwrap().abs() < 1e-12);
        let fr = FrictionModel::isotropic_rate(1, 1.0, t).unwrap();
        let s0 = LangevinState::new(DVector::from_element(1, 1.0), DVector::zeros(1));
        let report = invariant_measure_check(&heavy, &fr, &s0, 0.05, 2_000_000, 1000, &mut StreamRng::new(4, 0), Default::default()).unwrap();
        let frac = report.positive_fraction[0].unwrap();
        assert!((frac.mean - 0.5).abs() < 3.0 * frac.stderr, "{frac:?}");
        assert_eq!(report.status, CheckStatus::Pass, "{report:?}");
    }

    #[test]
    fn too_few_samples_is_inconclusive() {
        let heavy = HeavyModel::harmonic(1, 1.0);
        let fr = FrictionModel::isotropic_rate(1, 1.0, 0.4).unwrap();
        let s0 = LangevinState::new(DVector::zeros(1), DVector::zeros(1));
        let report = invariant_measure_check(&heavy, &fr, &s0, 0.05, 10, 0, &mut StreamRng::new(3, 0), Default::default()).unwrap();
        assert_eq!(report.status, CheckStatus::Inconclusive);
    }

    #[test]
    fn tabulated_marginal_matches_gaussian() {
        let m = Marginal::from_density(|x| 0.5 * x * x, 0.5, -8.0, 8.0);
        assert_relative_eq!(m.moment(2).unwrap(), 0.5, max_relative = 1e-10);
        assert_relative_eq!(m.moment(4).unwrap(), 0.75, max_relative = 1e-10);
        for x in [-1.0, -0.2, 0.0, 0.7] {
            assert!((m.cdf(x).unwrap() - normal_cdf(x / 0.5f64.sqrt())).abs() < 1e-6);
        }
    }

    #[test]
    fn ou_ensemble_matches_formula_small() {
        // ensemble of force-free paths started from N(0, s²); Gibbs temperature
        // T_L has stationary variance T_L, i.e. the formula's 2T with T = T_L/2
        let (rate, t_l, s2): (f64, f64, f64) = (1.0, 0.6, 0.2);
        let fr = FrictionModel::isotropic_rate(1, rate, t_l).unwrap();
        let heavy = HeavyModel::free(1);
        let h = 0.01;
        let times = [50usize, 100];
        let mut stats = vec![RunningStats::new(); 3];
        for i in 0..4000u64 {
            let mut rng = StreamRng::new(7, i);
            let p0 = s2.sqrt() * rng.normal();
            let mut s = LangevinState::new(DVector::zeros(1), DVector::from_element(1, p0));
            let mut stepper = LangevinStepper::new(&fr, &heavy, h).unwrap();
            let mut at = [0.0; 2];
            for k in 1..=100 {
                stepper.step(&mut s, &mut rng).unwrap();
                if let Some(pos) = times.iter().position(|&t| t == k) {
                    at[pos] = s.p[0];
                }
            }
            stats[0].push(at[0] * at[0]);
            stats[1].push(at[0] * at[1]);
            stats[2].push(at[1] * at[1]);
        }
        let k = DMatrix::from_element(1, 1, rate);
        let s0 = DMatrix::from_element(1, 1, s2);
        let pairs = [(0.5, 0.5), (0.5, 1.0), (1.0, 1.0)];
        for (st, (a, b)) in stats.iter().zip(pairs) {
            let c = ou_covariance_exact(&k, 0.5 * t_l, 1.0, &s0, a, b).unwrap()[(0, 0)];
            assert!((st.mean - c).abs() < 5.0 * st.stderr(), "{} vs {c}", st.mean);
        }
    }
}
