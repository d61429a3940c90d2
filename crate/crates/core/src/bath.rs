//! Harmonic heat bath in its eigenbasis: spectral data, memory kernels and
//! the Debye point-mass friction limit.
//!
//! Bath mode `j` has frequency `λ_j`, coupling vector `c_j` (the gradient of
//! the linear coupling map `Ψ̂_j(X) = c_j·X`) and all modes share the light
//! mass `m`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{from_rows, symmetry_defect, to_rows, SortedEigen};
use crate::potential::HeavyModel;
use crate::rng::StreamRng;
use crate::{Error, Result, C64};

/// Relative tolerance used when checking that κ has rank one.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBathModel {
    eigenvalues: Vec<f64>,
    /// Row `j` is `c_j`.
    couplings: DMatrix<f64>,
    mass: f64,
    debye_cutoff: Option<f64>,
    kappa: Option<DMatrix<f64>>,
}

/// How Debye frequencies are placed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrequencyPlacement {
    /// Mid-point quantiles of the Debye CDF.
    #[default]
    Stratified,
    /// Independent draws from the Debye density, sorted.
    Iid { seed: u64 },
    /// Equally spaced frequencies `(j − ½) λ_d / J` with weights making the
    /// spectral sum a midpoint rule for the Debye kernel. Resolves the low
    /// frequencies that carry the friction; `κ` holds on average rather than
    /// per mode.
    Uniform,
}

/// JSON document form of a bath.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathDocument {
    #[serde(rename = "J")]
    pub modes: usize,
    pub lambda: Vec<f64>,
    pub couplings: Vec<Vec<f64>>,
    pub m: f64,
    pub lambda_d: Option<f64>,
    pub kappa: Option<Vec<Vec<f64>>>,
}

impl SpectralBathModel {
    pub fn new(
        eigenvalues: Vec<f64>,
        couplings: DMatrix<f64>,
        mass: f64,
        debye_cutoff: Option<f64>,
        kappa: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let j = eigenvalues.len();
        if j == 0 {
            return Err(Error::ModelInvalid("bath needs at least one mode".into()));
        }
        Error::check_dim("coupling rows", j, couplings.nrows())?;
        if couplings.ncols() == 0 {
            return Err(Error::ModelInvalid("couplings need at least one heavy coordinate".into()));
        }
        if let Some(bad) = eigenvalues.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::ModelInvalid(format!("bath eigenvalue {bad} is not positive")));
        }
        if eigenvalues.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ModelInvalid("bath eigenvalues must be strictly increasing".into()));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::ModelInvalid(format!("bath mass {mass} is not positive")));
        }
        if let Some(ld) = debye_cutoff {
            if !(ld.is_finite() && ld > 0.0) {
                return Err(Error::ModelInvalid(format!("Debye cutoff {ld} is not positive")));
            }
        }
        if let Some(k) = &kappa {
            let dof = couplings.ncols();
            Error::check_dim("kappa rows", dof, k.nrows())?;
            Error::check_dim("kappa columns", dof, k.ncols())?;
            if symmetry_defect(k) > 1e-12 * k.amax().max(1e-300) {
                return Err(Error::ModelInvalid("kappa must be symmetric".into()));
            }
        }
        Ok(Self {
            eigenvalues,
            couplings,
            mass,
            debye_cutoff,
            kappa,
        })
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dof(&self) -> usize {
        self.couplings.ncols()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.couplings
    }

    pub fn coupling(&self, j: usize) -> DVector<f64> {
        self.couplings.row(j).transpose()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn debye_cutoff(&self) -> Option<f64> {
        self.debye_cutoff
    }

    pub fn kappa(&self) -> Option<&DMatrix<f64>> {
        self.kappa.as_ref()
    }

    pub fn max_frequency(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty")
    }

    /// Ψ̂(X) = C X.
    pub fn coupling_map(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.couplings * x
    }

    /// Uniform bound `m Σ_j λ_j |c_j|²` on every entry of the spectral kernel.
    pub fn kernel_bound(&self) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(j, l)| self.mass * l * self.couplings.row(j).norm_squared())
            .sum()
    }

    /// The couplings all point along one unit direction `u`; returns it.
    pub fn common_direction(&self) -> Option<DVector<f64>> {
        let (j_max, _) = (0..self.modes())
            .map(|j| (j, self.couplings.row(j).norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        let lead = self.coupling(j_max);
        let norm = lead.norm();
        if norm == 0.0 {
            return None;
        }
        let u = lead / norm;
        for j in 0..self.modes() {
            let c = self.coupling(j);
            let along = c.dot(&u);
            if (c - &u * along).norm() > 1e-12 * norm {
                return None;
            }
        }
        Some(u)
    }

    pub fn to_document(&self) -> BathDocument {
        BathDocument {
            modes: self.modes(),
            lambda: self.eigenvalues.clone(),
            couplings: to_rows(&self.couplings),
            m: self.mass,
            lambda_d: self.debye_cutoff,
            kappa: self.kappa.as_ref().map(to_rows),
        }
    }

    pub fn from_document(doc: &BathDocument) -> Result<Self> {
        Error::check_dim("bath J vs lambda", doc.modes, doc.lambda.len())?;
        let couplings = from_rows(&doc.couplings, "coupling row")?;
        let kappa = doc
            .kappa
            .as_ref()
            .map(|k| from_rows(k, "kappa row"))
            .transpose()?;
        Self::new(doc.lambda.clone(), couplings, doc.m, doc.lambda_d, kappa)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("bath document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}

fn check_state(
    bath: &SpectralBathModel,
    heavy: &HeavyModel,
    x_heavy: &DVector<f64>,
    x_bath: &DVector<f64>,
) -> Result<()> {
    Error::check_dim("heavy model vs bath dof", bath.dof(), heavy.dof())?;
    Error::check_dim("heavy position", bath.dof(), x_heavy.len())?;
    Error::check_dim("bath positions", bath.modes(), x_bath.len())
}

/// H_Z = ½|p|² + λ(X) + (m/2)Σ λ_j (x_j − Ψ̂_j(X))² + (1/2m)Σ λ_j q_j².
pub fn hamiltonian_total(
    x_heavy: &DVector<f64>,
    p: &DVector<f64>,
    x_bath: &DVector<f64>,
    q_bath: &DVector<f64>,
    bath: &SpectralBathModel,
    heavy: &HeavyModel,
) -> Result<f64> {
    check_state(bath, heavy, x_heavy, x_bath)?;
    Error::check_dim("heavy momentum", bath.dof(), p.len())?;
    Error::check_dim("bath momenta", bath.modes(), q_bath.len())?;
    let shift = bath.coupling_map(x_heavy);
    let m = bath.mass();
    let mut bath_energy = 0.0;
    for (j, &l) in bath.eigenvalues().iter().enumerate() {
        let d = x_bath[j] - shift[j];
        bath_energy += 0.5 * m * l * d * d + 0.5 / m * l * q_bath[j] * q_bath[j];
    }
    Ok(0.5 * p.norm_squared() + heavy.value(x_heavy) + bath_energy)
}

/// −λ′(X) + Σ_j m λ_j (x_j − Ψ̂_j(X)) c_j.
pub fn heavy_force(
    x_heavy: &DVector<f64>,
    x_bath: &DVector<f64>,
    bath: &SpectralBathModel,
    heavy: &HeavyModel,
) -> Result<DVector<f64>> {
    check_state(bath, heavy, x_heavy, x_bath)?;
    let shift = bath.coupling_map(x_heavy);
    let weights = DVector::from_iterator(
        bath.modes(),
        bath.eigenvalues()
            .iter()
            .enumerate()
            .map(|(j, l)| bath.mass() * l * (x_bath[j] - shift[j])),
    );
    Ok(bath.couplings().tr_mul(&weights) - heavy.grad(x_heavy))
}

/// ψ_j = (x_j − Ψ̂_j(X)) + i q_j/m.
pub fn wave_from_bath(
    x_bath: &DVector<f64>,
    q_bath: &DVector<f64>,
    x_heavy: &DVector<f64>,
    bath: &SpectralBathModel,
) -> Result<Vec<C64>> {
    Error::check_dim("bath positions", bath.modes(), x_bath.len())?;
    Error::check_dim("bath momenta", bath.modes(), q_bath.len())?;
    Error::check_dim("heavy position", bath.dof(), x_heavy.len())?;
    let shift = bath.coupling_map(x_heavy);
    Ok((0..bath.modes())
        .map(|j| C64::new(x_bath[j] - shift[j], q_bath[j] / bath.mass()))
        .collect())
}

/// Inverse of [`wave_from_bath`].
pub fn bath_from_wave(
    psi: &[C64],
    x_heavy: &DVector<f64>,
    bath: &SpectralBathModel,
) -> Result<(DVector<f64>, DVector<f64>)> {
    Error::check_dim("bath wave", bath.modes(), psi.len())?;
    Error::check_dim("heavy position", bath.dof(), x_heavy.len())?;
    let shift = bath.coupling_map(x_heavy);
    let x = DVector::from_iterator(bath.modes(), psi.iter().zip(shift.iter()).map(|(z, s)| z.re + s));
    let q = DVector::from_iterator(bath.modes(), psi.iter().map(|z| z.im * bath.mass()));
    Ok((x, q))
}

/// Frozen-coupling kernel f(τ) = Σ_j m λ_j cos(τ λ_j) c_j ⊗ c_j.
pub fn memory_kernel_spectral(bath: &SpectralBathModel, tau: f64) -> DMatrix<f64> {
    let mut weights = DVector::zeros(bath.modes());
    for (j, &l) in bath.eigenvalues().iter().enumerate() {
        weights[j] = bath.mass() * l * (tau * l).cos();
    }
    let c = bath.couplings();
    let mut out = DMatrix::zeros(bath.dof(), bath.dof());
    for j in 0..bath.modes() {
        let row = c.row(j);
        out.ger(weights[j], &row.transpose(), &row.transpose(), 1.0);
    }
    out.fill_lower_triangle_with_upper_triangle();
    out
}

/// (m κ/λ_d³) sin(λ_d τ)/τ, continued to m κ/λ_d² at τ = 0.
pub fn memory_kernel_debye(kappa: &DMatrix<f64>, mass: f64, cutoff: f64, tau: f64) -> DMatrix<f64> {
    let x = cutoff * tau;
    let sinc = if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    };
    kappa * (mass / (cutoff * cutoff) * sinc)
}

/// K̂ = π m κ / (2 λ_d³).
pub fn friction_limit_debye(kappa: &DMatrix<f64>, mass: f64, cutoff: f64) -> Result<DMatrix<f64>> {
    if !(cutoff > 0.0) {
        return Err(Error::ModelInvalid(format!("Debye cutoff {cutoff} is not positive")));
    }
    if kappa.nrows() > 0 {
        let eig = SortedEigen::new(&crate::linalg::symmetrize(kappa));
        let scale = kappa.amax().max(1e-300);
        if eig.values[0] < -1e-12 * scale {
            return Err(Error::ModelInvalid(format!(
                "kappa is not PSD (eigenvalue {:.3e})",
                eig.values[0]
            )));
        }
    }
    Ok(kappa * (PI * mass / (2.0 * cutoff.powi(3))))
}

/// Writes κ as `k u uᵀ` with `|u| = 1`, rejecting rank above one.
pub fn rank_one_factor(kappa: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    if !kappa.is_square() || kappa.nrows() == 0 {
        return Err(Error::ModelInvalid("kappa must be a non-empty square matrix".into()));
    }
    let eig = SortedEigen::new(&crate::linalg::symmetrize(kappa));
    let n = eig.values.len();
    let k = eig.values[n - 1];
    let scale = kappa.amax();
    if eig.values[0] < -RANK_TOL * scale.max(1e-300) {
        return Err(Error::ModelInvalid("kappa is not PSD".into()));
    }
    if n > 1 && eig.values[n - 2] > RANK_TOL * scale {
        return Err(Error::UnsupportedModel(format!(
            "kappa has rank > 1 (second eigenvalue {:.3e}); linear coupling needs c_j ⊗ c_j ∝ κ",
            eig.values[n - 2]
        )));
    }
    let mut u = eig.vectors.column(n - 1).into_owned();
    let lead = u.iamax();
    if u[lead] < 0.0 {
        u.neg_mut();
    }
    Ok((k.max(0.0), u))
}

/// Bath whose frequencies follow the Debye density 3λ²/λ_d³ on [0, λ_d] and
/// whose couplings satisfy 3 λ_j³ J c_j ⊗ c_j = κ mode by mode.
pub fn build_debye_bath(
    modes: usize,
    cutoff: f64,
    kappa: &DMatrix<f64>,
    mass: f64,
    placement: FrequencyPlacement,
) -> Result<SpectralBathModel> {
    if modes == 0 {
        return Err(Error::ModelInvalid("bath needs at least one mode".into()));
    }
    if !(cutoff > 0.0) {
        return Err(Error::ModelInvalid(format!("Debye cutoff {cutoff} is not positive")));
    }
    let (k, u) = rank_one_factor(kappa)?;
    let jf = modes as f64;
    let mut eigenvalues: Vec<f64> = match placement {
        FrequencyPlacement::Stratified => (1..=modes)
            .map(|j| cutoff * ((j as f64 - 0.5) / jf).cbrt())
            .collect(),
        FrequencyPlacement::Iid { seed } => {
            let mut rng = StreamRng::new(seed, 0);
            (0..modes)
                .map(|_| cutoff * (1.0 - rng.uniform()).cbrt())
                .collect()
        }
        FrequencyPlacement::Uniform => (1..=modes).map(|j| cutoff * (j as f64 - 0.5) / jf).collect(),
    };
    eigenvalues.sort_by(f64::total_cmp);
    let mut couplings = DMatrix::zeros(modes, u.len());
    for (j, &l) in eigenvalues.iter().enumerate() {
        let amp = match placement {
            FrequencyPlacement::Uniform => (k / (cutoff.powi(2) * l * jf)).sqrt(),
            _ => (k / (3.0 * l.powi(3) * jf)).sqrt(),
        };
        couplings.set_row(j, &(&u * amp).transpose());
    }
    SpectralBathModel::new(eigenvalues, couplings, mass, Some(cutoff), Some(kappa.clone()))
}

/// Debye bath in the mass-ratio scaling that maps a heat bath onto the
/// electron problem: frequencies `M^{1/2} λ̃`, light mass `2 M^{-1/2}` and
/// coupling strength chosen so the point-mass friction equals `M^{-1/2} K`.
///
/// `friction` is the target `K` along the unit `direction`.
pub fn build_scaled_debye_bath(
    modes: usize,
    mass_ratio: f64,
    reduced_cutoff: f64,
    friction: f64,
    direction: &DVector<f64>,
) -> Result<SpectralBathModel> {
    build_scaled_debye_bath_with(modes, mass_ratio, reduced_cutoff, friction, direction, FrequencyPlacement::Stratified)
}

pub fn build_scaled_debye_bath_with(
    modes: usize,
    mass_ratio: f64,
    reduced_cutoff: f64,
    friction: f64,
    direction: &DVector<f64>,
    placement: FrequencyPlacement,
) -> Result<SpectralBathModel> {
    if !(mass_ratio > 0.0) {
        return Err(Error::ModelInvalid(format!("mass ratio {mass_ratio} is not positive")));
    }
    if friction < 0.0 {
        return Err(Error::ModelInvalid("friction must be nonnegative".into()));
    }
    let norm = direction.norm();
    if norm == 0.0 {
        return Err(Error::ModelInvalid("coupling direction is zero".into()));
    }
    let u = direction / norm;
    let sqrt_m = mass_ratio.sqrt();
    let cutoff = sqrt_m * reduced_cutoff;
    let mass = 2.0 / sqrt_m;
    let k = mass_ratio.powf(1.5) * reduced_cutoff.powi(3) * friction / PI;
    let kappa = &u * u.transpose() * k;
    build_debye_bath(modes, cutoff, &kappa, mass, placement)
}

/// Kernel sampled on a grid.
#[derive(Clone, Debug)]
pub struct MemoryKernel {
    pub taus: Vec<f64>,
    pub values: Vec<DMatrix<f64>>,
    pub provenance: KernelProvenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelProvenance {
    SpectralSum,
    DebyeAnalytic,
    Empirical,
}

impl MemoryKernel {
    pub fn spectral(bath: &SpectralBathModel, taus: &[f64]) -> Self {
        Self {
            taus: taus.to_vec(),
            values: taus.iter().map(|&t| memory_kernel_spectral(bath, t)).collect(),
            provenance: KernelProvenance::SpectralSum,
        }
    }

    pub fn debye(kappa: &DMatrix<f64>, mass: f64, cutoff: f64, taus: &[f64]) -> Self {
        Self {
            taus: taus.to_vec(),
            values: taus
                .iter()
                .map(|&t| memory_kernel_debye(kappa, mass, cutoff, t))
                .collect(),
            provenance: KernelProvenance::DebyeAnalytic,
        }
    }

    /// Largest entrywise difference over the shared grid.
    pub fn sup_distance(&self, other: &MemoryKernel) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn random_bath(rng: &mut StreamRng, modes: usize, dof: usize) -> SpectralBathModel {
        let mut ev: Vec<f64> = (0..modes).map(|_| 0.1 + 5.0 * rng.uniform()).collect();
        ev.sort_by(f64::total_cmp);
        let c = DMatrix::from_fn(modes, dof, |_, _| rng.normal());
        SpectralBathModel::new(ev, c, 0.7, None, None).unwrap()
    }

    #[test]
    fn energy_vanishes_at_origin() {
        let bath = SpectralBathModel::new(vec![1.0, 2.0], DMatrix::from_element(2, 1, 0.5), 1.0, None, None).unwrap();
        let heavy = HeavyModel::double_well(1);
        let z1 = DVector::zeros(1);
        let z2 = DVector::zeros(2);
        // double well has λ(0) = 1/4
        let e = hamiltonian_total(&z1, &z1, &z2, &z2, &bath, &heavy).unwrap();
        assert_relative_eq!(e, 0.25, epsilon = 1e-15);
        let e = hamiltonian_total(&z1, &z1, &z2, &z2, &bath, &HeavyModel::free(1)).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn single_mode_energy() {
        let bath = SpectralBathModel::new(vec![2.0], DMatrix::zeros(1, 1), 2.0, None, None).unwrap();
        let e = hamiltonian_total(
            &DVector::zeros(1),
            &DVector::zeros(1),
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 1.0),
            &bath,
            &HeavyModel::free(1),
        )
        .unwrap();
        assert_relative_eq!(e, 2.5, epsilon = 1e-15);
    }

    #[test]
    fn energy_matches_per_mode_summation() {
        let mut rng = StreamRng::new(3, 0);
        let bath = random_bath(&mut rng, 8, 2);
        let heavy = HeavyModel::double_well(2);
        let xh = DVector::from_fn(2, |_, _| rng.normal());
        let p = DVector::from_fn(2, |_, _| rng.normal());
        let xb = DVector::from_fn(8, |_, _| rng.normal());
        let qb = DVector::from_fn(8, |_, _| rng.normal());
        let got = hamiltonian_total(&xh, &p, &xb, &qb, &bath, &heavy).unwrap();
        // naive oracle: loop over modes with explicit coupling dot products
        let mut expect = 0.5 * (p[0] * p[0] + p[1] * p[1]);
        expect += xh.iter().map(|v| 0.25 * (v * v - 1.0).powi(2)).sum::<f64>();
        for j in 0..8 {
            let shift = bath.couplings()[(j, 0)] * xh[0] + bath.couplings()[(j, 1)] * xh[1];
            let l = bath.eigenvalues()[j];
            expect += bath.mass() / 2.0 * l * (xb[j] - shift).powi(2);
            expect += l * qb[j] * qb[j] / (2.0 * bath.mass());
        }
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }

    #[test]
    fn force_at_bath_equilibrium_is_potential_force() {
        let mut rng = StreamRng::new(4, 0);
        let bath = random_bath(&mut rng, 5, 2);
        let heavy = HeavyModel::double_well(2);
        let xh = DVector::from_vec(vec![0.4, -0.9]);
        let xb = bath.coupling_map(&xh);
        let f = heavy_force(&xh, &xb, &bath, &heavy).unwrap();
        assert_relative_eq!(f, -heavy.grad(&xh), epsilon = 1e-14);
    }

    #[test]
    fn single_mode_force() {
        let mut c = DMatrix::zeros(1, 3);
        c[(0, 0)] = 1.0;
        let bath = SpectralBathModel::new(vec![3.0], c, 1.0, None, None).unwrap();
        let f = heavy_force(&DVector::zeros(3), &DVector::from_element(1, 2.0), &bath, &HeavyModel::free(3)).unwrap();
        assert_relative_eq!(f, DVector::from_vec(vec![6.0, 0.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn force_is_negative_energy_gradient() {
        let mut rng = StreamRng::new(5, 0);
        let bath = random_bath(&mut rng, 8, 2);
        let heavy = HeavyModel::double_well(2);
        for _ in 0..100 {
            let xh = DVector::from_fn(2, |_, _| rng.normal());
            let p = DVector::from_fn(2, |_, _| rng.normal());
            let xb = DVector::from_fn(8, |_, _| rng.normal());
            let qb = DVector::from_fn(8, |_, _| rng.normal());
            let f = heavy_force(&xh, &xb, &bath, &heavy).unwrap();
            let eps = 1e-5;
            for k in 0..2 {
                let mut a = xh.clone();
                let mut b = xh.clone();
                a[k] += eps;
                b[k] -= eps;
                let fd = -(hamiltonian_total(&a, &p, &xb, &qb, &bath, &heavy).unwrap()
                    - hamiltonian_total(&b, &p, &xb, &qb, &bath, &heavy).unwrap())
                    / (2.0 * eps);
                assert!((fd - f[k]).abs() < 1e-6 * f[k].abs().max(1.0), "{fd} vs {}", f[k]);
            }
        }
    }

    #[test]
    fn wave_conversion() {
        let bath = SpectralBathModel::new(vec![1.0], DMatrix::from_element(1, 1, 0.3), 2.0, None, None).unwrap();
        let xh = DVector::from_element(1, 1.5);
        let shift = bath.coupling_map(&xh);
        let psi = wave_from_bath(&shift, &DVector::zeros(1), &xh, &bath).unwrap();
        assert_eq!(psi[0], C64::new(0.0, 0.0));
        let psi = wave_from_bath(&(shift.add_scalar(1.0)), &DVector::from_element(1, 4.0), &xh, &bath).unwrap();
        assert_relative_eq!(psi[0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(psi[0].im, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn wave_round_trip() {
        let mut rng = StreamRng::new(6, 0);
        let bath = random_bath(&mut rng, 6, 2);
        let xh = DVector::from_fn(2, |_, _| rng.normal());
        let psi: Vec<C64> = (0..6).map(|_| C64::new(rng.normal(), rng.normal())).collect();
        let (x, q) = bath_from_wave(&psi, &xh, &bath).unwrap();
        let back = wave_from_bath(&x, &q, &xh, &bath).unwrap();
        for (a, b) in psi.iter().zip(&back) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn spectral_kernel_examples() {
        let bath = SpectralBathModel::new(vec![2.0], DMatrix::from_element(1, 1, 1.0), 1.0, None, None).unwrap();
        assert_relative_eq!(memory_kernel_spectral(&bath, PI / 2.0)[(0, 0)], -2.0, epsilon = 1e-14);
        let mut rng = StreamRng::new(8, 0);
        let bath = random_bath(&mut rng, 7, 3);
        let f0 = memory_kernel_spectral(&bath, 0.0);
        let mut expect = DMatrix::zeros(3, 3);
        for j in 0..7 {
            let c = bath.coupling(j);
            expect += &c * c.transpose() * (bath.mass() * bath.eigenvalues()[j]);
        }
        assert_relative_eq!(f0, expect, epsilon = 1e-12);
        assert!(SortedEigen::new(&f0).values[0] > -1e-12);
        for t in [0.3, 1.7, 9.0] {
            let f = memory_kernel_spectral(&bath, t);
            assert!(symmetry_defect(&f) == 0.0);
            assert!(f.amax() <= bath.kernel_bound() + 1e-12);
        }
    }

    #[test]
    fn debye_kernel_examples() {
        let k = scalar(1.0);
        assert_relative_eq!(memory_kernel_debye(&k, 2.0, 3.0, 0.0)[(0, 0)], 2.0 / 9.0, epsilon = 1e-15);
        assert!(memory_kernel_debye(&k, 1.0, 1.0, PI)[(0, 0)].abs() < 1e-15);
        for kk in 1..6 {
            let tau = kk as f64 * PI / 2.5;
            assert!(memory_kernel_debye(&k, 1.0, 2.5, tau)[(0, 0)].abs() < 1e-15);
        }
        let small = memory_kernel_debye(&k, 1.0, 2.0, 1e-9)[(0, 0)];
        assert_relative_eq!(small, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn debye_friction_limit() {
        assert_relative_eq!(friction_limit_debye(&scalar(1.0), 2.0, 1.0).unwrap()[(0, 0)], PI, epsilon = 1e-15);
        assert_eq!(friction_limit_debye(&scalar(0.0), 2.0, 1.0).unwrap()[(0, 0)], 0.0);
        assert!(friction_limit_debye(&scalar(-1.0), 2.0, 1.0).is_err());
    }

    #[test]
    fn debye_bath_construction() {
        let bath = build_debye_bath(1, 2.0, &scalar(3.0), 1.0, FrequencyPlacement::Stratified).unwrap();
        let l1 = 2.0 * 0.5f64.cbrt();
        assert_relative_eq!(bath.eigenvalues()[0], l1, epsilon = 1e-14);
        assert_relative_eq!(bath.couplings()[(0, 0)], (3.0 / (3.0 * l1.powi(3))).sqrt(), epsilon = 1e-14);

        // median frequency sits at λ_d 2^{-1/3}
        let bath = build_debye_bath(1000, 1.0, &scalar(1.0), 1.0, FrequencyPlacement::Stratified).unwrap();
        let median = 0.5 * (bath.eigenvalues()[499] + bath.eigenvalues()[500]);
        assert!((median - 0.5f64.cbrt()).abs() < 1e-3);
    }

    #[test]
    fn kappa_identity_holds_per_mode() {
        let u = DVector::from_vec(vec![1.0, 2.0, -2.0]) / 3.0;
        let kappa = &u * u.transpose() * 0.7;
        for placement in [FrequencyPlacement::Stratified, FrequencyPlacement::Iid { seed: 9 }] {
            let bath = build_debye_bath(200, 5.0, &kappa, 0.5, placement).unwrap();
            let jf = bath.modes() as f64;
            for j in 0..bath.modes() {
                let c = bath.coupling(j);
                let lhs = &c * c.transpose() * (3.0 * bath.eigenvalues()[j].powi(3) * jf);
                assert!((lhs - &kappa).amax() < 1e-12);
            }
            assert!(bath.common_direction().is_some());
        }
    }

    #[test]
    fn uniform_placement_resolves_low_frequencies() {
        let kappa = scalar(1.0);
        let (cutoff, mass) = (100.0, 0.02);
        let uniform = build_debye_bath(1000, cutoff, &kappa, mass, FrequencyPlacement::Uniform).unwrap();
        let strat = build_debye_bath(1000, cutoff, &kappa, mass, FrequencyPlacement::Stratified).unwrap();
        let khat = friction_limit_debye(&kappa, mass, cutoff).unwrap()[(0, 0)];
        // ∫₀^S f over a horizon much longer than 1/λ_d
        let integral = |b: &SpectralBathModel, s: f64| -> f64 {
            b.eigenvalues()
                .iter()
                .enumerate()
                .map(|(j, l)| mass * b.coupling(j).norm_squared() * (l * s).sin())
                .sum()
        };
        assert!((integral(&uniform, 1.0) / khat - 1.0).abs() < 0.01);
        assert!((integral(&strat, 1.0) / khat - 1.0).abs() > 0.05);
        for t in [0.0, 0.013, 0.2, 1.0] {
            let f = memory_kernel_spectral(&uniform, t)[(0, 0)];
            let g = memory_kernel_debye(&kappa, mass, cutoff, t)[(0, 0)];
            assert!((f - g).abs() < 1e-3 * memory_kernel_debye(&kappa, mass, cutoff, 0.0)[(0, 0)], "{t}: {f} {g}");
        }
    }

    #[test]
    fn rejects_rank_two_kappa() {
        let kappa = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            build_debye_bath(10, 1.0, &kappa, 1.0, FrequencyPlacement::Stratified),
            Err(Error::UnsupportedModel(_))
        ));
    }

    #[test]
    fn rejects_invalid_spectra() {
        let c = DMatrix::zeros(2, 1);
        assert!(matches!(SpectralBathModel::new(vec![-1.0, 1.0], c.clone(), 1.0, None, None), Err(Error::ModelInvalid(_))));
        assert!(SpectralBathModel::new(vec![2.0, 1.0], c.clone(), 1.0, None, None).is_err());
        assert!(SpectralBathModel::new(vec![1.0, 2.0], c, 0.0, None, None).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let u = DVector::from_vec(vec![0.6, 0.8]);
        let kappa = &u * u.transpose() * 1.3;
        let bath = build_debye_bath(50, 7.0, &kappa, 0.3, FrequencyPlacement::Stratified).unwrap();
        let back = SpectralBathModel::from_json(&bath.to_json()).unwrap();
        assert_eq!(bath, back);
    }

    #[test]
    fn scaled_bath_friction() {
        let u = DVector::from_element(1, 1.0);
        let bath = build_scaled_debye_bath(100, 1e4, 1.5, 2.0, &u).unwrap();
        let k_hat = friction_limit_debye(bath.kappa().unwrap(), bath.mass(), bath.debye_cutoff().unwrap()).unwrap();
        assert_relative_eq!(k_hat[(0, 0)], 2.0 / 100.0, max_relative = 1e-12);
        assert_relative_eq!(bath.mass(), 0.02, max_relative = 1e-15);
    }
}
