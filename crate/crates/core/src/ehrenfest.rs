//! Finite-dimensional Ehrenfest model: heavy coordinates coupled to a
//! normalized wave function through an X-dependent symmetric matrix.
//!
//! `H(X) = D + ε Σ_t a_t φ_t(b_t·X) (E_{ij} + E_{ji})` with `D` diagonal and
//! `φ ∈ {tanh, linear, constant}`. Level separation is checked wherever the
//! model is evaluated. Dynamics run on the slow scale, where the wave
//! evolves with `M^{1/2} H̃(X)` and `H̃ = H − λ₀`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bath::build_scaled_debye_bath;
use crate::linalg::{psd_projection, symmetrize, SortedEigen};
use crate::potential::Potential;
use crate::rng::StreamRng;
use crate::sampler::WaveVector;
use crate::{Error, Result, C64};

pub type CVector = DVector<C64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Tanh,
    Linear,
    Constant,
}

impl Profile {
    fn value(self, s: f64) -> f64 {
        match self {
            Self::Tanh => s.tanh(),
            Self::Linear => s,
            Self::Constant => 1.0,
        }
    }

    fn slope(self, s: f64) -> f64 {
        match self {
            Self::Tanh => {
                let t = s.tanh();
                1.0 - t * t
            }
            Self::Linear => 1.0,
            Self::Constant => 0.0,
        }
    }
}

/// One symmetric perturbation entry `a φ(b·X)` at `(i, j)` and `(j, i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub i: usize,
    pub j: usize,
    pub a: f64,
    pub b: Vec<f64>,
    pub profile: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EhrenfestModel {
    pub dof: usize,
    pub diagonal: Vec<f64>,
    pub epsilon: f64,
    pub terms: Vec<Perturbation>,
    pub mass_ratio: f64,
    pub gap_floor: f64,
}

impl EhrenfestModel {
    pub fn new(
        dof: usize,
        diagonal: Vec<f64>,
        epsilon: f64,
        terms: Vec<Perturbation>,
        mass_ratio: f64,
        gap_floor: f64,
    ) -> Result<Self> {
        let model = Self {
            dof,
            diagonal,
            epsilon,
            terms,
            mass_ratio,
            gap_floor,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dof == 0 {
            return Err(Error::ModelInvalid("model needs at least one heavy coordinate".into()));
        }
        let n = self.diagonal.len();
        if n < 2 {
            return Err(Error::ModelInvalid("model needs at least two levels".into()));
        }
        if self.diagonal.iter().any(|d| !d.is_finite()) {
            return Err(Error::ModelInvalid("diagonal entries must be finite".into()));
        }
        if !(self.mass_ratio.is_finite() && self.mass_ratio > 0.0) {
            return Err(Error::ModelInvalid(format!("mass ratio {} is not positive", self.mass_ratio)));
        }
        if !(self.gap_floor.is_finite() && self.gap_floor > 0.0) {
            return Err(Error::ModelInvalid(format!("gap floor {} is not positive", self.gap_floor)));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::ModelInvalid("epsilon is not finite".into()));
        }
        for t in &self.terms {
            if t.i >= n || t.j >= n {
                return Err(Error::ModelInvalid(format!("perturbation index ({}, {}) out of range", t.i, t.j)));
            }
            Error::check_dim("perturbation direction", self.dof, t.b.len())?;
            if !t.a.is_finite() || t.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::ModelInvalid("perturbation parameters must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.diagonal.len()
    }

    pub fn sqrt_mass_ratio(&self) -> f64 {
        self.mass_ratio.sqrt()
    }

    pub fn with_mass_ratio(&self, mass_ratio: f64) -> Result<Self> {
        let mut m = self.clone();
        m.mass_ratio = mass_ratio;
        m.validate()?;
        Ok(m)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Four-level family with smooth tanh couplings between all pairs and a
    /// tanh shift of the ground level, giving a double-well-like λ₀.
    pub fn default_family(dof: usize, mass_ratio: f64) -> Self {
        let diagonal = vec![0.0, 1.0, 1.7, 2.5];
        let mut terms = Vec::new();
        let n = diagonal.len();
        for i in 0..n {
            for j in i..n {
                let b: Vec<f64> = (0..dof)
                    .map(|k| 1.0 + 0.25 * ((i + 2 * j + k) % 3) as f64)
                    .collect();
                let a = if i == j { 0.5 / (1.0 + i as f64) } else { 1.0 / (1 + j - i) as f64 };
                terms.push(Perturbation { i, j, a, b, profile: Profile::Tanh });
            }
        }
        Self::new(dof, diagonal, 0.3, terms, mass_ratio, 0.1).expect("default family is valid")
    }

    /// Ground level coupled linearly to a Debye-distributed band:
    /// `H = diag(0, λ̃_j) + X·u (−c_j λ̃_j)` in row/column zero. The couplings
    /// `c_j` are those of the mass-scaled Debye bath with point-mass friction
    /// `M^{-1/2} K`, so the Ehrenfest friction at `X = 0` is `K u uᵀ`.
    pub fn debye_synthetic(modes: usize, mass_ratio: f64, reduced_cutoff: f64, friction: f64, direction: &DVector<f64>) -> Result<Self> {
        let bath = build_scaled_debye_bath(modes, mass_ratio, reduced_cutoff, friction, direction)?;
        let u = bath.common_direction().unwrap_or_else(|| direction.normalize());
        let sqrt_m = mass_ratio.sqrt();
        let mut diagonal = vec![0.0];
        let mut terms = Vec::with_capacity(modes);
        for (j, l) in bath.eigenvalues().iter().enumerate() {
            let reduced = l / sqrt_m;
            diagonal.push(reduced);
            let amp = bath.coupling(j).dot(&u);
            terms.push(Perturbation {
                i: 0,
                j: j + 1,
                a: -amp * reduced,
                b: u.iter().copied().collect(),
                profile: Profile::Linear,
            });
        }
        let spacing = diagonal.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        Self::new(direction.len(), diagonal, 1.0, terms, mass_ratio, 0.5 * spacing)
    }

    /// Copy with every perturbation amplitude multiplied by an independent
    /// standard normal.
    pub fn redraw(&self, rng: &mut StreamRng) -> Self {
        let mut m = self.clone();
        for t in &mut m.terms {
            t.a *= rng.normal();
        }
        m
    }

    pub fn hamiltonian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Error::check_dim("heavy position", self.dof, x.len())?;
        let n = self.levels();
        let mut h = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diagonal));
        for t in &self.terms {
            let s: f64 = t.b.iter().zip(x.iter()).map(|(b, x)| b * x).sum();
            let v = self.epsilon * t.a * t.profile.value(s);
            h[(t.i, t.j)] += v;
            if t.i != t.j {
                h[(t.j, t.i)] += v;
            }
        }
        debug_assert_eq!(h.nrows(), n);
        Ok(h)
    }

    /// `∂_{X_n} H` for every heavy coordinate `n`.
    pub fn hamiltonian_gradient(&self, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        Error::check_dim("heavy position", self.dof, x.len())?;
        let n = self.levels();
        let mut out = vec![DMatrix::zeros(n, n); self.dof];
        for t in &self.terms {
            let s: f64 = t.b.iter().zip(x.iter()).map(|(b, x)| b * x).sum();
            let d = self.epsilon * t.a * t.profile.slope(s);
            for (k, dh) in out.iter_mut().enumerate() {
                let v = d * t.b[k];
                dh[(t.i, t.j)] += v;
                if t.i != t.j {
                    dh[(t.j, t.i)] += v;
                }
            }
        }
        Ok(out)
    }

    /// Eigenframe at `X`, failing when two levels come closer than the floor.
    pub fn frame(&self, x: &DVector<f64>) -> Result<Frame> {
        let h = self.hamiltonian(x)?;
        let mut eig = if is_diagonal(&h) { diagonal_eigen(&h) } else { SortedEigen::new(&h) };
        fix_signs(&mut eig.vectors);
        let gap = eig.values.as_slice().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if gap <= self.gap_floor {
            return Err(Error::GapViolation {
                gap,
                floor: self.gap_floor,
                at: x.iter().copied().collect(),
            });
        }
        let dh = self.hamiltonian_gradient(x)?;
        Ok(Frame {
            x: x.clone(),
            h,
            values: eig.values,
            vectors: eig.vectors,
            dh,
        })
    }

    /// Sampled gap and coupling-derivative bounds over `points`.
    pub fn check_domain(&self, points: &[DVector<f64>]) -> Result<DomainReport> {
        let mut report = DomainReport {
            min_gap: f64::INFINITY,
            max_derivative: 0.0,
        };
        for x in points {
            let f = self.frame(x)?;
            report.min_gap = report.min_gap.min(f.min_gap());
            for dh in &f.dh {
                report.max_derivative = report.max_derivative.max(dh.amax());
            }
        }
        Ok(report)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainReport {
    pub min_gap: f64,
    pub max_derivative: f64,
}

fn is_diagonal(h: &DMatrix<f64>) -> bool {
    h.column_iter()
        .enumerate()
        .all(|(j, col)| col.iter().enumerate().all(|(i, v)| i == j || *v == 0.0))
}

fn diagonal_eigen(h: &DMatrix<f64>) -> SortedEigen {
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| h[(a, a)].total_cmp(&h[(b, b)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| h[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors[(src, dst)] = 1.0;
    }
    SortedEigen { values, vectors }
}

fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let lead = col.iamax();
        if col[lead] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Eigendecomposition and coupling derivatives at one heavy position.
#[derive(Clone, Debug)]
pub struct Frame {
    pub x: DVector<f64>,
    pub h: DMatrix<f64>,
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
    pub dh: Vec<DMatrix<f64>>,
}

impl Frame {
    pub fn levels(&self) -> usize {
        self.values.len()
    }

    pub fn min_gap(&self) -> f64 {
        self.values.as_slice().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// `λ̃_j = λ_j − λ₀`.
    pub fn excited(&self) -> Vec<f64> {
        self.values.iter().skip(1).map(|l| l - self.values[0]).collect()
    }

    /// `⟨Ψ_j, ∂_n H Ψ₀⟩` for every level `j`, column `n`.
    fn couplings_to_ground(&self) -> DMatrix<f64> {
        let psi0 = self.vectors.column(0);
        let mut out = DMatrix::zeros(self.levels(), self.dh.len());
        for (n, dh) in self.dh.iter().enumerate() {
            let v = dh * psi0;
            out.set_column(n, &self.vectors.tr_mul(&v));
        }
        out
    }

    pub fn ground_state(&self) -> GroundState {
        let proj = self.couplings_to_ground();
        let l0 = self.values[0];
        let dof = self.dh.len();
        let dlambda0 = DVector::from_iterator(dof, (0..dof).map(|n| proj[(0, n)]));
        let mut dpsi0 = DMatrix::zeros(self.levels(), dof);
        for n in 0..dof {
            for m in 1..self.levels() {
                let w = proj[(m, n)] / (l0 - self.values[m]);
                dpsi0.column_mut(n).axpy(w, &self.vectors.column(m), 1.0);
            }
        }
        GroundState {
            lambda0: l0,
            psi0: self.vectors.column(0).into_owned(),
            dlambda0,
            dpsi0,
        }
    }

    /// Amplitudes `Vᵀψ` in this eigenbasis.
    pub fn to_eigenbasis(&self, psi: &CVector) -> CVector {
        let (re, im) = split(psi);
        join(&self.vectors.tr_mul(&re), &self.vectors.tr_mul(&im))
    }

    /// `Σ_j γ_j Ψ_j`.
    pub fn from_eigenbasis(&self, gamma: &[C64]) -> Result<CVector> {
        Error::check_dim("eigenbasis amplitudes", self.levels(), gamma.len())?;
        let g = CVector::from_column_slice(gamma);
        let (re, im) = split(&g);
        Ok(join(&(&self.vectors * re), &(&self.vectors * im)))
    }

    pub fn wave_from_sample(&self, wave: &WaveVector) -> Result<CVector> {
        self.from_eigenbasis(&wave.amplitudes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundState {
    pub lambda0: f64,
    pub psi0: DVector<f64>,
    pub dlambda0: DVector<f64>,
    /// Column `n` is `∂_{X_n} Ψ₀`.
    pub dpsi0: DMatrix<f64>,
}

pub fn ground_state(model: &EhrenfestModel, x: &DVector<f64>) -> Result<GroundState> {
    Ok(model.frame(x)?.ground_state())
}

fn split(v: &CVector) -> (DVector<f64>, DVector<f64>) {
    (v.map(|z| z.re), v.map(|z| z.im))
}

fn join(re: &DVector<f64>, im: &DVector<f64>) -> CVector {
    re.zip_map(im, C64::new)
}

fn real_apply(m: &DMatrix<f64>, v: &CVector) -> CVector {
    let (re, im) = split(v);
    join(&(m * re), &(m * im))
}

/// `⟨a, b⟩ = Σ a_i* b_i`.
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn check_wave(model: &EhrenfestModel, psi: &CVector) -> Result<()> {
    Error::check_dim("wave function", model.levels(), psi.len())
}

/// Force from the direct quadratic form and from the ground-state split.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceRoutes {
    pub direct: DVector<f64>,
    pub decomposed: DVector<f64>,
}

pub fn ehrenfest_force_routes(frame: &Frame, psi: &CVector) -> ForceRoutes {
    let dof = frame.dh.len();
    let direct = DVector::from_iterator(dof, frame.dh.iter().map(|dh| -inner(psi, &real_apply(dh, psi)).re));
    let gs = frame.ground_state();
    let psi0 = gs.psi0.map(|v| C64::new(v, 0.0));
    let g0 = inner(&psi0, psi);
    let tilde = psi - &psi0 * g0;
    let h_tilde = &frame.h - DMatrix::identity(frame.levels(), frame.levels()) * gs.lambda0;
    let decomposed = DVector::from_iterator(
        dof,
        (0..dof).map(|n| {
            let d = gs.dpsi0.column(n).map(|v| C64::new(v, 0.0)) * g0;
            let second = 2.0 * inner(&tilde, &real_apply(&h_tilde, &d)).re;
            let dh_tilde = &frame.dh[n] - DMatrix::identity(frame.levels(), frame.levels()) * gs.dlambda0[n];
            let third = inner(&tilde, &real_apply(&dh_tilde, &tilde)).re;
            -gs.dlambda0[n] + second - third
        }),
    );
    ForceRoutes { direct, decomposed }
}

/// Relative agreement required between the two force routes.
pub const FORCE_ROUTE_TOL: f64 = 1e-10;

/// `−⟨ψ, ∂_X H(X) ψ⟩`, cross-checked against the ground-state split.
pub fn ehrenfest_force(x: &DVector<f64>, psi: &CVector, model: &EhrenfestModel) -> Result<DVector<f64>> {
    check_wave(model, psi)?;
    let frame = model.frame(x)?;
    let routes = ehrenfest_force_routes(&frame, psi);
    let scale = frame.dh.iter().map(|d| d.amax()).fold(1.0, f64::max) * psi.norm_squared().max(1.0);
    let diff = (&routes.direct - &routes.decomposed).amax();
    if diff > FORCE_ROUTE_TOL * scale {
        return Err(Error::InternalConsistency(format!("force routes differ by {diff:.3e}")));
    }
    Ok(routes.direct)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EhrenfestState {
    pub tau: f64,
    pub x: DVector<f64>,
    pub p: DVector<f64>,
    pub psi: CVector,
    /// Columns are propagated copies of the eigenvectors at the start.
    pub tracers: Option<DMatrix<C64>>,
}

impl EhrenfestState {
    pub fn new(x: DVector<f64>, p: DVector<f64>, psi: CVector) -> Self {
        Self {
            tau: 0.0,
            x,
            p,
            psi,
            tracers: None,
        }
    }

    /// State with `ψ = Ψ_level(X)`.
    pub fn eigenstate(model: &EhrenfestModel, x: DVector<f64>, p: DVector<f64>, level: usize) -> Result<Self> {
        let frame = model.frame(&x)?;
        if level >= frame.levels() {
            return Err(Error::ModelInvalid(format!("level {level} out of range")));
        }
        let psi = frame.vectors.column(level).map(|v| C64::new(v, 0.0));
        Ok(Self::new(x, p, psi))
    }

    /// Starts propagating the eigenvectors at the current `X` alongside `ψ`.
    pub fn with_tracers(mut self, model: &EhrenfestModel) -> Result<Self> {
        let frame = model.frame(&self.x)?;
        self.tracers = Some(frame.vectors.map(|v| C64::new(v, 0.0)));
        Ok(self)
    }

    /// `max |G − I|` for the tracer Gram matrix.
    pub fn tracer_orthogonality_defect(&self) -> Option<f64> {
        let t = self.tracers.as_ref()?;
        let g = t.adjoint() * t;
        let n = g.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        Some(worst)
    }
}

/// `|p|²/2 + ⟨ψ, H(X) ψ⟩`.
pub fn ehrenfest_energy(state: &EhrenfestState, model: &EhrenfestModel) -> Result<f64> {
    let h = model.hamiltonian(&state.x)?;
    Ok(0.5 * state.p.norm_squared() + inner(&state.psi, &real_apply(&h, &state.psi)).re)
}

/// `e^{iθ} − 1` without cancellation.
fn phase_minus_one(theta: f64) -> C64 {
    let s = (0.5 * theta).sin();
    C64::new(-2.0 * s * s, theta.sin())
}

/// `∫₀^h e^{iΔu} du`.
fn phase_integral(delta: f64, h: f64) -> C64 {
    let half = 0.5 * delta * h;
    let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
    C64::from_polar(h * sinc, half)
}

/// One symmetric step `A(h/2) P(h) A(h/2)`: `A` drifts `X`, `P` is the exact
/// flow of `(p, ψ)` at the midpoint `X`, with `ψ(u) = e^{−iuM^{1/2}H̃}ψ` and
/// `p` receiving `−∫₀^h ⟨ψ(u), ∂_X H ψ(u)⟩ du`.
pub fn ehrenfest_step_in_place(state: &mut EhrenfestState, h: f64, model: &EhrenfestModel) -> Result<()> {
    check_wave(model, &state.psi)?;
    Error::check_dim("heavy momentum", model.dof, state.p.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::StepSize { h, reason: "step must be positive".into() });
    }
    let mut x_mid = state.x.clone();
    x_mid.axpy(0.5 * h, &state.p, 1.0);
    let frame = model.frame(&x_mid)?;
    let n = frame.levels();
    let sqrt_m = model.sqrt_mass_ratio();
    let omega: Vec<f64> = frame.values.iter().map(|l| sqrt_m * (l - frame.values[0])).collect();
    if h * omega[n - 1] >= PI {
        return Err(Error::StepSize {
            h,
            reason: format!("h·M^(1/2)·λ̃_max = {:.3} must stay below π", h * omega[n - 1]),
        });
    }
    let a = frame.to_eigenbasis(&state.psi);
    for (k, dh) in frame.dh.iter().enumerate() {
        let g = frame.vectors.tr_mul(&(dh * &frame.vectors));
        let mut total = C64::new(0.0, 0.0);
        for i in 0..n {
            let ai = a[i].conj();
            for j in 0..n {
                total += ai * a[j] * g[(i, j)] * phase_integral(omega[i] - omega[j], h);
            }
        }
        state.p[k] -= total.re;
    }
    // ψ + V (e^{−iωh} − 1) Vᵀψ: rounding in V only touches the increment
    let shift: Vec<C64> = omega.iter().map(|w| phase_minus_one(-w * h)).collect();
    let delta: Vec<C64> = a.iter().zip(&shift).map(|(z, d)| z * d).collect();
    state.psi += frame.from_eigenbasis(&delta)?;
    if let Some(t) = state.tracers.as_mut() {
        let v = frame.vectors.map(|v| C64::new(v, 0.0));
        let mut coeff = v.transpose() * &*t;
        for (i, d) in shift.iter().enumerate() {
            for z in coeff.row_mut(i).iter_mut() {
                *z *= *d;
            }
        }
        *t += v * coeff;
    }
    state.x = x_mid;
    state.x.axpy(0.5 * h, &state.p, 1.0);
    state.tau += h;
    Ok(())
}

pub fn ehrenfest_step(state: &EhrenfestState, h: f64, model: &EhrenfestModel) -> Result<EhrenfestState> {
    let mut next = state.clone();
    ehrenfest_step_in_place(&mut next, h, model)?;
    Ok(next)
}

/// Ground-state surface λ₀ as a heavy potential.
pub struct BornOppenheimer<'a>(pub &'a EhrenfestModel);

impl Potential for BornOppenheimer<'_> {
    fn dim(&self) -> usize {
        self.0.dof
    }

    fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.0.frame(x)?.values[0])
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(ground_state(self.0, x)?.dlambda0)
    }
}

/// Velocity Verlet on λ₀.
pub fn born_oppenheimer_step(
    x: &DVector<f64>,
    p: &DVector<f64>,
    h: f64,
    model: &EhrenfestModel,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let bo = BornOppenheimer(model);
    let mut p = p - bo.gradient(x)? * (0.5 * h);
    let x = x + &p * h;
    p -= bo.gradient(&x)? * (0.5 * h);
    Ok((x, p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrictionOptions {
    /// Fast-scale horizon `σ̂_max` of the time-domain estimator.
    pub cutoff: f64,
    /// Kernel-density bandwidth; four mean level spacings when absent.
    pub bandwidth: Option<f64>,
}

impl Default for FrictionOptions {
    fn default() -> Self {
        Self {
            cutoff: 200.0,
            bandwidth: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrictionEstimate {
    pub k_time: DMatrix<f64>,
    pub k_time_cesaro: DMatrix<f64>,
    pub k_spec: DMatrix<f64>,
    /// PSD projection of `k_spec`.
    pub k: DMatrix<f64>,
    pub clamped_fraction: f64,
    pub bandwidth: f64,
    pub warnings: Vec<String>,
}

fn spectral_weights(frame: &Frame) -> (Vec<f64>, DMatrix<f64>) {
    let gs = frame.ground_state();
    let excited = frame.excited();
    // row j-1 holds ⟨∂_n Ψ₀, Ψ_j⟩
    let proj = frame.vectors.columns(1, excited.len()).tr_mul(&gs.dpsi0);
    (excited, proj)
}

fn mean_spacing(excited: &[f64]) -> f64 {
    if excited.len() < 2 {
        return excited.first().copied().unwrap_or(1.0);
    }
    (excited[excited.len() - 1] - excited[0]) / (excited.len() - 1) as f64
}

/// Time-domain and spectral-density estimates of the friction matrix.
pub fn friction_matrix(model: &EhrenfestModel, x: &DVector<f64>, options: FrictionOptions) -> Result<FrictionEstimate> {
    let frame = model.frame(x)?;
    friction_from_frame(&frame, options)
}

pub fn friction_from_frame(frame: &Frame, options: FrictionOptions) -> Result<FrictionEstimate> {
    if !(options.cutoff > 0.0) {
        return Err(Error::config("friction.cutoff", "must be positive"));
    }
    let (excited, proj) = spectral_weights(frame);
    let dof = frame.dh.len();
    let bandwidth = options.bandwidth.unwrap_or_else(|| 4.0 * mean_spacing(&excited));
    if !(bandwidth > 0.0) {
        return Err(Error::config("friction.bandwidth", "must be positive"));
    }
    let s = options.cutoff;
    let norm = 1.0 / (bandwidth * (2.0 * PI).sqrt());
    let mut k_time = DMatrix::zeros(dof, dof);
    let mut k_cesaro = DMatrix::zeros(dof, dof);
    let mut k_spec = DMatrix::zeros(dof, dof);
    for (j, &l) in excited.iter().enumerate() {
        let row = proj.row(j).transpose();
        let w = &row * row.transpose() * l;
        let time = 2.0 * (s * l).sin() / l;
        let cesaro = 2.0 * (1.0 - (s * l).cos()) / (s * l * l);
        // reflected at zero so the one-sided density keeps its full mass at 0⁺
        let kde = 2.0 * norm * (-0.5 * (l / bandwidth).powi(2)).exp();
        k_time += &w * time;
        k_cesaro += &w * cesaro;
        k_spec += &w * (PI * kde);
    }
    let k_spec = symmetrize(&k_spec);
    let (k, clamped) = psd_projection(&k_spec);
    let scale = k_spec.norm();
    let clamped_fraction = if scale > 0.0 { clamped / scale } else { 0.0 };
    let mut warnings = Vec::new();
    if !excited.iter().any(|&l| l < 3.0 * bandwidth) {
        warnings.push(format!(
            "zero friction: no excited level within 3·bandwidth = {:.3e} of the ground state",
            3.0 * bandwidth
        ));
    }
    if clamped_fraction >= 0.05 {
        warnings.push(format!("PSD projection removed {:.1}% of the spectral estimate", 100.0 * clamped_fraction));
    }
    Ok(FrictionEstimate {
        k_time: symmetrize(&k_time),
        k_time_cesaro: symmetrize(&k_cesaro),
        k_spec,
        k,
        clamped_fraction,
        bandwidth,
        warnings,
    })
}

/// Average of the spectral estimate over `draws` redrawn perturbations.
pub fn friction_matrix_randomized(
    model: &EhrenfestModel,
    x: &DVector<f64>,
    options: FrictionOptions,
    draws: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if draws == 0 {
        return Err(Error::config("friction.draws", "must be positive"));
    }
    let mut total = DMatrix::zeros(model.dof, model.dof);
    for d in 0..draws {
        let mut rng = StreamRng::for_sample(seed, d as u64, crate::rng::StreamRole::Model);
        total += friction_matrix(&model.redraw(&mut rng), x, options)?.k;
    }
    Ok(total / draws as f64)
}

/// `Re⟨ψ̃, H̃ γ̃₀ ∂_{X_n}Ψ₀⟩` for each `n`, with `γ̃₀ = ⟨Ψ₀, ψ⟩` and
/// `ψ̃ = ψ − γ̃₀Ψ₀`.
pub fn fluctuation_projection(frame: &Frame, psi: &CVector) -> DVector<f64> {
    let gs = frame.ground_state();
    let psi0 = gs.psi0.map(|v| C64::new(v, 0.0));
    let g0 = inner(&psi0, psi);
    let tilde = psi - &psi0 * g0;
    let n = frame.levels();
    let h_tilde = &frame.h - DMatrix::identity(n, n) * gs.lambda0;
    DVector::from_iterator(
        frame.dh.len(),
        (0..frame.dh.len()).map(|k| {
            let d = gs.dpsi0.column(k).map(|v| C64::new(v, 0.0)) * g0;
            inner(&tilde, &real_apply(&h_tilde, &d)).re
        }),
    )
}

/// Norm of the part of `ψ` orthogonal to `Ψ_level(X)` at each sample.
pub fn adiabatic_overlap(model: &EhrenfestModel, xs: &[DVector<f64>], waves: &[CVector], level: usize) -> Result<Vec<f64>> {
    Error::check_dim("wave samples", xs.len(), waves.len())?;
    xs.iter()
        .zip(waves)
        .map(|(x, psi)| {
            let frame = model.frame(x)?;
            if level >= frame.levels() {
                return Err(Error::ModelInvalid(format!("level {level} out of range")));
            }
            let a = frame.to_eigenbasis(psi);
            let rest: f64 = a.iter().enumerate().filter(|(k, _)| *k != level).map(|(_, z)| z.norm_sqr()).sum();
            Ok(rest.sqrt())
        })
        .collect()
}

/// Heavy path and wave samples of an Ehrenfest run.
#[derive(Clone, Debug, Default)]
pub struct EhrenfestPath {
    pub times: Vec<f64>,
    pub xs: Vec<DVector<f64>>,
    pub ps: Vec<DVector<f64>>,
    pub waves: Vec<CVector>,
    pub energy: Vec<f64>,
}

pub fn integrate_ehrenfest(state0: &EhrenfestState, h: f64, n_steps: usize, stride: usize, model: &EhrenfestModel) -> Result<(EhrenfestState, EhrenfestPath)> {
    if stride == 0 {
        return Err(Error::config("stride", "must be positive"));
    }
    let mut path = EhrenfestPath::default();
    let mut state = state0.clone();
    let record = |s: &EhrenfestState, path: &mut EhrenfestPath| -> Result<()> {
        path.times.push(s.tau);
        path.xs.push(s.x.clone());
        path.ps.push(s.p.clone());
        path.waves.push(s.psi.clone());
        path.energy.push(ehrenfest_energy(s, model)?);
        Ok(())
    };
    record(&state, &mut path)?;
    for k in 1..=n_steps {
        ehrenfest_step_in_place(&mut state, h, model)?;
        if k % stride == 0 {
            record(&state, &mut path)?;
        }
    }
    Ok((state, path))
}
