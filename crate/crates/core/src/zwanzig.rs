//! Hamiltonian heavy-particle plus harmonic-bath dynamics.
//!
//! The bath is carried as the wave `ψ_j = x_j − c_j·X + i q_j/m`, in which the
//! frozen-X bath flow is a pure rotation. One step is the symmetric
//! composition
//!
//! ```text
//! B(h/2) A(h/2) C(h) A(h/2) B(h/2)
//! ```
//!
//! with `B` the potential kick, `A` the heavy drift (which shifts every `ψ_j`
//! by `−c_j·ΔX`) and `C` the exact bath flow at fixed `X` together with the
//! exactly integrated bath impulse on `p`.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bath::{memory_kernel_spectral, SpectralBathModel};
use crate::potential::HeavyModel;
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub tau: f64,
    pub x: DVector<f64>,
    pub p: DVector<f64>,
    pub psi: Vec<C64>,
}

impl FullState {
    pub fn new(x: DVector<f64>, p: DVector<f64>, psi: Vec<C64>) -> Self {
        Self { tau: 0.0, x, p, psi }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.p.iter()).all(|v| v.is_finite())
            && self.psi.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Reverses all momenta: `p → −p` and `q → −q`, i.e. `ψ → ψ*`.
    pub fn time_reversed(&self) -> Self {
        Self {
            tau: self.tau,
            x: self.x.clone(),
            p: -&self.p,
            psi: self.psi.iter().map(|z| z.conj()).collect(),
        }
    }
}

/// ½|p|² + λ(X) + (m/2)Σ λ_j |ψ_j|².
pub fn zwanzig_energy(state: &FullState, bath: &SpectralBathModel, heavy: &HeavyModel) -> f64 {
    let bath_energy: f64 = bath
        .eigenvalues()
        .iter()
        .zip(&state.psi)
        .map(|(l, z)| l * z.norm_sqr())
        .sum();
    0.5 * state.p.norm_squared() + heavy.value(&state.x) + 0.5 * bath.mass() * bath_energy
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ZwanzigOptions {
    /// Keep `X` and `p` fixed and only rotate the bath.
    pub freeze_heavy: bool,
}

/// Step-size specific factors, reusable across many steps and trajectories.
pub struct ZwanzigStepper<'a> {
    bath: &'a SpectralBathModel,
    heavy: &'a HeavyModel,
    h: f64,
    options: ZwanzigOptions,
    rotation: Vec<C64>,
    impulse: Vec<C64>,
    shift: DVector<f64>,
    weights: DVector<f64>,
    delta: DVector<f64>,
    grad: DVector<f64>,
}

impl<'a> ZwanzigStepper<'a> {
    pub fn new(bath: &'a SpectralBathModel, heavy: &'a HeavyModel, h: f64, options: ZwanzigOptions) -> Result<Self> {
        Error::check_dim("heavy model vs bath dof", bath.dof(), heavy.dof())?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::StepSize { h, reason: "step must be positive".into() });
        }
        if h * bath.max_frequency() >= PI {
            return Err(Error::StepSize {
                h,
                reason: format!("h·λ_J = {:.3} must stay below π", h * bath.max_frequency()),
            });
        }
        let m = bath.mass();
        let rotation = bath.eigenvalues().iter().map(|l| C64::from_polar(1.0, -l * h)).collect();
        let impulse = bath
            .eigenvalues()
            .iter()
            .map(|l| {
                let one_minus = C64::new(1.0, 0.0) - C64::from_polar(1.0, -l * h);
                one_minus * C64::new(0.0, -m)
            })
            .collect();
        let dof = bath.dof();
        Ok(Self {
            bath,
            heavy,
            h,
            options,
            rotation,
            impulse,
            shift: DVector::zeros(bath.modes()),
            weights: DVector::zeros(bath.modes()),
            delta: DVector::zeros(dof),
            grad: DVector::zeros(dof),
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    fn drift(&mut self, state: &mut FullState, s: f64) {
        self.delta.copy_from(&state.p);
        self.delta *= s;
        state.x += &self.delta;
        self.shift.gemv(1.0, self.bath.couplings(), &self.delta, 0.0);
        for (z, d) in state.psi.iter_mut().zip(self.shift.iter()) {
            z.re -= d;
        }
    }

    fn kick(&mut self, state: &mut FullState, s: f64) {
        self.heavy.grad_into(&state.x, &mut self.grad);
        state.p.axpy(-s, &self.grad, 1.0);
    }

    fn bath_flow(&mut self, state: &mut FullState) {
        for (j, z) in state.psi.iter_mut().enumerate() {
            self.weights[j] = (*z * self.impulse[j]).re;
            *z *= self.rotation[j];
        }
        if !self.options.freeze_heavy {
            state.p.gemv_tr(1.0, self.bath.couplings(), &self.weights, 1.0);
        }
    }

    pub fn step(&mut self, state: &mut FullState) -> Result<()> {
        Error::check_dim("heavy position", self.bath.dof(), state.x.len())?;
        Error::check_dim("heavy momentum", self.bath.dof(), state.p.len())?;
        Error::check_dim("bath wave", self.bath.modes(), state.psi.len())?;
        let half = 0.5 * self.h;
        if self.options.freeze_heavy {
            self.bath_flow(state);
        } else {
            self.kick(state, half);
            self.drift(state, half);
            self.bath_flow(state);
            self.drift(state, half);
            self.kick(state, half);
        }
        state.tau += self.h;
        Ok(())
    }
}

/// One step from `state`; see [`ZwanzigStepper`] for repeated use.
pub fn step_zwanzig(
    state: &FullState,
    h: f64,
    bath: &SpectralBathModel,
    heavy: &HeavyModel,
    options: ZwanzigOptions,
) -> Result<FullState> {
    let mut stepper = ZwanzigStepper::new(bath, heavy, h, options)?;
    let mut next = state.clone();
    stepper.step(&mut next)?;
    Ok(next)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub h: f64,
    pub seed: Option<u64>,
    pub stream: Option<u64>,
    pub model_hash: Option<u64>,
}

/// Sampled heavy coordinates along one trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub p: Vec<DVector<f64>>,
    pub energy: Vec<f64>,
    /// Bath or electron waves, when requested.
    pub waves: Option<Vec<Vec<C64>>>,
    pub meta: TrajectoryMeta,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, tau: f64, x: &DVector<f64>, p: &DVector<f64>, energy: f64, wave: Option<&[C64]>) {
        self.times.push(tau);
        self.x.push(x.clone());
        self.p.push(p.clone());
        self.energy.push(energy);
        if let (Some(ws), Some(w)) = (self.waves.as_mut(), wave) {
            ws.push(w.to_vec());
        }
    }

    /// Largest `|E(τ) − E(0)| / |E(0)|`.
    pub fn max_relative_energy_drift(&self) -> f64 {
        let Some(&e0) = self.energy.first() else { return 0.0 };
        self.energy
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
            / e0.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntegrateOptions {
    pub stride: usize,
    pub keep_waves: bool,
    pub zwanzig: ZwanzigOptions,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            keep_waves: false,
            zwanzig: ZwanzigOptions::default(),
        }
    }
}

/// Runs `n_steps` steps, recording the state every `stride` steps (and at
/// the start). The observer sees every recorded state.
pub fn integrate(
    state0: &FullState,
    h: f64,
    n_steps: usize,
    bath: &SpectralBathModel,
    heavy: &HeavyModel,
    options: IntegrateOptions,
    mut observer: impl FnMut(&FullState),
) -> Result<(FullState, TrajectoryRecord)> {
    if options.stride == 0 {
        return Err(Error::config("stride", "must be positive"));
    }
    let mut stepper = ZwanzigStepper::new(bath, heavy, h, options.zwanzig)?;
    let mut record = TrajectoryRecord {
        waves: options.keep_waves.then(Vec::new),
        meta: TrajectoryMeta { h, ..Default::default() },
        ..Default::default()
    };
    let mut state = state0.clone();
    let mut observe = |s: &FullState, record: &mut TrajectoryRecord| {
        record.push(s.tau, &s.x, &s.p, zwanzig_energy(s, bath, heavy), Some(&s.psi));
        observer(s);
    };
    observe(&state, &mut record);
    for k in 1..=n_steps {
        stepper.step(&mut state)?;
        if k % options.stride == 0 {
            if !state.is_finite() {
                return Err(Error::InternalConsistency(format!("non-finite state at τ = {}", state.tau)));
            }
            observe(&state, &mut record);
        }
    }
    Ok((state, record))
}

/// ζ^τ = Σ_j m λ_j Re(e^{−iτλ_j} γ_j) c_j at each requested time.
pub fn noise_process(gamma: &[C64], bath: &SpectralBathModel, taus: &[f64]) -> Result<Vec<DVector<f64>>> {
    Error::check_dim("bath wave", bath.modes(), gamma.len())?;
    let m = bath.mass();
    let mut w = DVector::zeros(bath.modes());
    Ok(taus
        .iter()
        .map(|&t| {
            for (j, (l, g)) in bath.eigenvalues().iter().zip(gamma).enumerate() {
                w[j] = m * l * (C64::from_polar(1.0, -t * l) * g).re;
            }
            bath.couplings().tr_mul(&w)
        })
        .collect())
}

/// ∫_{a}^{b} ζ^τ dτ = Σ_j m Re(γ_j (e^{−iaλ_j} − e^{−ibλ_j})/i) c_j.
pub fn noise_integral(gamma: &[C64], bath: &SpectralBathModel, a: f64, b: f64) -> Result<DVector<f64>> {
    Error::check_dim("bath wave", bath.modes(), gamma.len())?;
    let m = bath.mass();
    let w = DVector::from_iterator(
        bath.modes(),
        bath.eigenvalues().iter().zip(gamma).map(|(l, g)| {
            let d = C64::from_polar(1.0, -a * l) - C64::from_polar(1.0, -b * l);
            m * (g * d * C64::new(0.0, -1.0)).re
        }),
    );
    Ok(bath.couplings().tr_mul(&w))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GleResidual {
    pub times: Vec<f64>,
    pub residual: Vec<DVector<f64>>,
    /// Always false for linear coupling: the frozen-coupling kernel is exact.
    pub couplings_vary: bool,
}

impl GleResidual {
    pub fn max_abs(&self) -> f64 {
        self.residual.iter().map(|r| r.amax()).fold(0.0, f64::max)
    }
}

/// Largest `Δτ λ_J` accepted by [`generalized_langevin_residual`].
pub const MAX_QUADRATURE_PHASE: f64 = 0.5;

/// `r(τ) = Ẍ + λ′(X) + ∫₀^τ f(τ−σ) Ẋ^σ dσ − ζ^τ` at the interior record
/// points, with `Ẋ = p`, a central difference for `Ẍ` and the trapezoid rule
/// on the record grid for the memory integral. `gamma0` is the bath wave at
/// `τ = 0`; the record must be uniformly spaced.
pub fn generalized_langevin_residual(
    record: &TrajectoryRecord,
    gamma0: &[C64],
    bath: &SpectralBathModel,
    heavy: &HeavyModel,
) -> Result<GleResidual> {
    let n = record.len();
    if n < 3 {
        return Err(Error::QuadratureResolution("need at least three samples".into()));
    }
    let dt = record.times[1] - record.times[0];
    if record
        .times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0))
    {
        return Err(Error::QuadratureResolution("record grid is not uniform".into()));
    }
    let phase = dt * bath.max_frequency();
    if phase > MAX_QUADRATURE_PHASE {
        return Err(Error::QuadratureResolution(format!(
            "sampling step {dt} resolves the fastest bath mode with phase {phase:.3} > {MAX_QUADRATURE_PHASE}"
        )));
    }
    let t0 = record.times[0];
    let kernels: Vec<_> = (0..n).map(|k| memory_kernel_spectral(bath, k as f64 * dt)).collect();
    let offsets: Vec<f64> = record.times.iter().map(|t| t - t0).collect();
    let zeta = noise_process(gamma0, bath, &offsets)?;
    let mut times = Vec::with_capacity(n - 2);
    let mut residual = Vec::with_capacity(n - 2);
    for k in 1..n - 1 {
        let accel = (&record.p[k + 1] - &record.p[k - 1]) / (2.0 * dt);
        let mut memory = DVector::zeros(bath.dof());
        for s in 0..=k {
            let w = if s == 0 || s == k { 0.5 * dt } else { dt };
            memory += &kernels[k - s] * &record.p[s] * w;
        }
        let r = accel + heavy.grad(&record.x[k]) + memory - &zeta[k];
        times.push(record.times[k]);
        residual.push(r);
    }
    Ok(GleResidual {
        times,
        residual,
        couplings_vary: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{build_debye_bath, build_scaled_debye_bath, FrequencyPlacement};
    use crate::rng::StreamRng;
    use crate::sampler::{sample_zwanzig_bath, GibbsSpec};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn coupled_bath(modes: usize) -> SpectralBathModel {
        build_scaled_debye_bath(modes, 100.0, 1.0, 1.0, &DVector::from_element(1, 1.0)).unwrap()
    }

    fn thermal_state(bath: &SpectralBathModel, t: f64, seed: u64) -> FullState {
        let w = sample_zwanzig_bath(bath, &GibbsSpec::new(t), &mut StreamRng::new(seed, 0));
        FullState::new(DVector::from_element(1, -1.0), DVector::from_element(1, 0.3), w.amplitudes)
    }

    #[test]
    fn decoupled_heavy_is_verlet_and_bath_rotates() {
        let bath = SpectralBathModel::new(vec![1.0, 3.0], DMatrix::zeros(2, 1), 1.0, None, None).unwrap();
        let heavy = HeavyModel::harmonic(1, 1.0);
        let mut s = FullState::new(DVector::from_element(1, 1.0), DVector::zeros(1), vec![C64::new(0.3, 0.1), C64::new(-1.0, 2.0)]);
        let (mut x, mut p) = (1.0f64, 0.0f64);
        let h = 0.01;
        let mut stepper = ZwanzigStepper::new(&bath, &heavy, h, Default::default()).unwrap();
        let mods: Vec<f64> = s.psi.iter().map(|z| z.norm()).collect();
        for _ in 0..500 {
            stepper.step(&mut s).unwrap();
            p -= 0.5 * h * x;
            x += h * p;
            p -= 0.5 * h * x;
        }
        assert_relative_eq!(s.x[0], x, epsilon = 1e-13);
        assert_relative_eq!(s.p[0], p, epsilon = 1e-13);
        for (z, m) in s.psi.iter().zip(&mods) {
            assert_relative_eq!(z.norm(), *m, epsilon = 1e-13);
        }
    }

    #[test]
    fn frozen_heavy_bath_is_exact_rotation() {
        let bath = SpectralBathModel::new(vec![2.5], DMatrix::from_element(1, 1, 0.7), 1.0, None, None).unwrap();
        let heavy = HeavyModel::double_well(1);
        let g0 = C64::new(0.4, -0.2);
        let mut s = FullState::new(DVector::from_element(1, 0.5), DVector::from_element(1, 1.0), vec![g0]);
        let opts = ZwanzigOptions { freeze_heavy: true };
        let mut stepper = ZwanzigStepper::new(&bath, &heavy, 0.1, opts).unwrap();
        for _ in 0..1000 {
            stepper.step(&mut s).unwrap();
        }
        let expect = C64::from_polar(1.0, -250.0) * g0;
        assert!((s.tau - 100.0).abs() < 1e-10);
        assert!((s.psi[0] - expect).norm() < 1e-11, "{}", (s.psi[0] - expect).norm());
        assert_eq!(s.x[0], 0.5);
    }

    #[test]
    fn rejects_unresolved_step() {
        let bath = coupled_bath(10);
        let heavy = HeavyModel::double_well(1);
        let h = 3.2 / bath.max_frequency();
        assert!(matches!(ZwanzigStepper::new(&bath, &heavy, h, Default::default()), Err(Error::StepSize { .. })));
    }

    #[test]
    fn bath_flow_conserves_mode_norms() {
        let bath = coupled_bath(50);
        let heavy = HeavyModel::double_well(1);
        let mut s = thermal_state(&bath, 0.5, 1);
        let before: f64 = s.psi.iter().map(|z| z.norm_sqr()).sum();
        let mut stepper = ZwanzigStepper::new(&bath, &heavy, 0.01, Default::default()).unwrap();
        stepper.bath_flow(&mut s);
        let after: f64 = s.psi.iter().map(|z| z.norm_sqr()).sum();
        assert_relative_eq!(before, after, max_relative = 1e-14);
    }

    #[test]
    fn energy_matches_coordinate_form() {
        let bath = coupled_bath(20);
        let heavy = HeavyModel::double_well(1);
        let s = thermal_state(&bath, 0.5, 2);
        let (xb, qb) = crate::bath::bath_from_wave(&s.psi, &s.x, &bath).unwrap();
        let e = crate::bath::hamiltonian_total(&s.x, &s.p, &xb, &qb, &bath, &heavy).unwrap();
        assert_relative_eq!(zwanzig_energy(&s, &bath, &heavy), e, max_relative = 1e-12);
    }

    #[test]
    fn energy_drift_is_second_order() {
        let bath = coupled_bath(100);
        let heavy = HeavyModel::double_well(1);
        let s0 = thermal_state(&bath, 0.5, 3);
        let drift = |h: f64| {
            let n = (10.0 / h).round() as usize;
            integrate(&s0, h, n, &bath, &heavy, Default::default(), |_| {}).unwrap().1.max_relative_energy_drift()
        };
        let (a, b, c) = (drift(0.01), drift(0.005), drift(0.0025));
        let order = crate::stats::fit_line(&[0.01f64.ln(), 0.005f64.ln(), 0.0025f64.ln()], &[a.ln(), b.ln(), c.ln()], None)
            .unwrap()
            .slope;
        assert!(order >= 1.8, "order {order} from {a:e} {b:e} {c:e}");
    }

    #[test]
    fn time_reversal_returns_home() {
        let bath = coupled_bath(100);
        let heavy = HeavyModel::double_well(1);
        let s0 = thermal_state(&bath, 0.5, 4);
        let (end, _) = integrate(&s0, 1e-3, 1000, &bath, &heavy, Default::default(), |_| {}).unwrap();
        let (back, _) = integrate(&end.time_reversed(), 1e-3, 1000, &bath, &heavy, Default::default(), |_| {}).unwrap();
        let back = back.time_reversed();
        assert!((&back.x - &s0.x).amax() < 1e-8);
        assert!((&back.p - &s0.p).amax() < 1e-8);
        for (a, b) in back.psi.iter().zip(&s0.psi) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn record_lengths() {
        let bath = coupled_bath(5);
        let heavy = HeavyModel::double_well(1);
        let s0 = thermal_state(&bath, 0.1, 5);
        let (_, r) = integrate(&s0, 0.01, 0, &bath, &heavy, Default::default(), |_| {}).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.x[0], s0.x);
        let mut seen = 0;
        let opts = IntegrateOptions { stride: 7, ..Default::default() };
        let (_, r) = integrate(&s0, 0.01, 100, &bath, &heavy, opts, |_| seen += 1).unwrap();
        assert_eq!(r.len(), 100 / 7 + 1);
        assert_eq!(seen, r.len());
        assert!(r.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn noise_examples() {
        let bath = SpectralBathModel::new(vec![1.3], DMatrix::from_element(1, 2, 0.5), 2.0, None, None).unwrap();
        let z = noise_process(&[C64::new(0.0, 0.0)], &bath, &[0.0, 1.0]).unwrap();
        assert!(z.iter().all(|v| v.amax() == 0.0));
        let z = noise_process(&[C64::new(1.0, 0.0)], &bath, &[0.7]).unwrap();
        let expect = 2.0 * 1.3 * (0.7f64 * 1.3).cos() * 0.5;
        assert_relative_eq!(z[0][0], expect, epsilon = 1e-14);
        assert_relative_eq!(z[0][1], expect, epsilon = 1e-14);
    }

    #[test]
    fn noise_integral_matches_quadrature() {
        let bath = coupled_bath(30);
        let g = thermal_state(&bath, 1.0, 6).psi;
        let (a, b) = (0.2, 0.45);
        let exact = noise_integral(&g, &bath, a, b).unwrap()[0];
        let numeric = crate::quad::gauss_legendre(|t| noise_process(&g, &bath, &[t]).unwrap()[0][0], a, b, 200);
        assert_relative_eq!(exact, numeric, max_relative = 1e-10);
    }

    #[test]
    fn residual_vanishes_without_coupling() {
        let bath = SpectralBathModel::new(vec![1.0], DMatrix::zeros(1, 1), 1.0, None, None).unwrap();
        let heavy = HeavyModel::double_well(1);
        let s0 = FullState::new(DVector::from_element(1, 0.3), DVector::from_element(1, 0.2), vec![C64::new(1.0, 0.0)]);
        let (_, r) = integrate(&s0, 1e-3, 2000, &bath, &heavy, Default::default(), |_| {}).unwrap();
        let res = generalized_langevin_residual(&r, &s0.psi, &bath, &heavy).unwrap();
        assert!(res.max_abs() < 1e-5, "{}", res.max_abs());
    }

    #[test]
    fn residual_frozen_heavy_is_force_balance() {
        // p stays zero, so Ẍ = 0 and the memory term vanishes; the residual is
        // then λ′(X) − ζ = −heavy_force at the exactly rotated bath.
        let bath = coupled_bath(20);
        let heavy = HeavyModel::double_well(1);
        let mut s0 = thermal_state(&bath, 0.5, 7);
        s0.p[0] = 0.0;
        let opts = IntegrateOptions { zwanzig: ZwanzigOptions { freeze_heavy: true }, ..Default::default() };
        let h = 0.2 / bath.max_frequency();
        let (_, r) = integrate(&s0, h, 50, &bath, &heavy, opts.clone(), |_| {}).unwrap();
        let opts_waves = IntegrateOptions { keep_waves: true, ..opts };
        let (_, rw) = integrate(&s0, h, 50, &bath, &heavy, opts_waves, |_| {}).unwrap();
        let res = generalized_langevin_residual(&r, &s0.psi, &bath, &heavy).unwrap();
        let waves = rw.waves.unwrap();
        for (k, r) in res.residual.iter().enumerate() {
            let (xb, _) = crate::bath::bath_from_wave(&waves[k + 1], &s0.x, &bath).unwrap();
            let f = crate::bath::heavy_force(&s0.x, &xb, &bath, &heavy).unwrap();
            assert!((r + &f).amax() < 1e-10 * f.amax().max(1.0));
        }
    }

    #[test]
    fn residual_small_for_full_system() {
        let bath = coupled_bath(50);
        let heavy = HeavyModel::double_well(1);
        let s0 = thermal_state(&bath, 0.5, 8);
        let run = |h: f64| {
            let n = (1.0 / h).round() as usize;
            let (_, r) = integrate(&s0, h, n, &bath, &heavy, Default::default(), |_| {}).unwrap();
            generalized_langevin_residual(&r, &s0.psi, &bath, &heavy).unwrap().max_abs()
        };
        let coarse = run(2e-3);
        let fine = run(1e-3);
        // central difference, trapezoid and the splitting are all second order
        assert!(fine < coarse / 3.0, "{coarse:e} -> {fine:e}");
        let h = 1e-3;
        let bound = 10.0 * (h * h + h * h) * bath.kernel_bound().max(1.0) * bath.max_frequency();
        assert!(fine < bound, "{fine:e} vs {bound:e}");
    }

    #[test]
    fn residual_rejects_coarse_sampling() {
        let bath = coupled_bath(20);
        let heavy = HeavyModel::double_well(1);
        let s0 = thermal_state(&bath, 0.5, 9);
        let opts = IntegrateOptions { stride: 10, ..Default::default() };
        let (_, r) = integrate(&s0, 0.02, 100, &bath, &heavy, opts, |_| {}).unwrap();
        assert!(matches!(generalized_langevin_residual(&r, &s0.psi, &bath, &heavy), Err(Error::QuadratureResolution(_))));
    }

    #[test]
    fn debye_bath_energy_conserved() {
        let u = DMatrix::from_element(1, 1, 1.0);
        let bath = build_debye_bath(200, 10.0, &u, 1.0, FrequencyPlacement::Stratified).unwrap();
        let heavy = HeavyModel::double_well(1);
        let s0 = thermal_state(&bath, 0.5, 10);
        let (_, r) = integrate(&s0, 1e-3, 5000, &bath, &heavy, IntegrateOptions { stride: 50, ..Default::default() }, |_| {}).unwrap();
        assert!(r.max_relative_energy_drift() < 1e-4);
    }
}
