//! Heavy-particle potentials λ(X) with closed-form derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{from_rows, symmetry_defect, to_rows};
use crate::{Error, Result};

/// A potential energy surface for the heavy coordinates.
///
/// Implemented by [`HeavyModel`] and by the Born–Oppenheimer ground-state
/// surface of an [`EhrenfestModel`](crate::EhrenfestModel).
pub trait Potential: Sync {
    fn dim(&self) -> usize;
    fn energy(&self, x: &DVector<f64>) -> Result<f64>;
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        *out = self.gradient(x)?;
        Ok(())
    }
}

/// Analytic potential family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialKind {
    /// λ = 0.
    Free,
    /// λ = ½ X·A X with symmetric `A`.
    Quadratic { matrix: Vec<Vec<f64>> },
    /// λ = Σ_k (X_k² − 1)²/4.
    DoubleWell,
}

#[derive(Clone, Debug)]
pub struct HeavyModel {
    dof: usize,
    kind: PotentialKind,
    quadratic: Option<DMatrix<f64>>,
}

impl HeavyModel {
    pub fn new(dof: usize, kind: PotentialKind) -> Result<Self> {
        if dof == 0 {
            return Err(Error::ModelInvalid("heavy model needs at least one degree of freedom".into()));
        }
        let quadratic = match &kind {
            PotentialKind::Quadratic { matrix } => {
                let a = from_rows(matrix, "quadratic potential row")?;
                Error::check_dim("quadratic potential rows", dof, a.nrows())?;
                Error::check_dim("quadratic potential columns", dof, a.ncols())?;
                if symmetry_defect(&a) > 1e-12 * a.amax().max(1.0) {
                    return Err(Error::ModelInvalid("quadratic potential matrix must be symmetric".into()));
                }
                Some(a)
            }
            _ => None,
        };
        Ok(Self {
            dof,
            kind,
            quadratic,
        })
    }

    pub fn free(dof: usize) -> Self {
        Self::new(dof, PotentialKind::Free).expect("dof > 0")
    }

    pub fn double_well(dof: usize) -> Self {
        Self::new(dof, PotentialKind::DoubleWell).expect("dof > 0")
    }

    /// Isotropic harmonic well ½ ω² |X|².
    pub fn harmonic(dof: usize, omega: f64) -> Self {
        let a = DMatrix::<f64>::identity(dof, dof) * (omega * omega);
        Self::new(
            dof,
            PotentialKind::Quadratic {
                matrix: to_rows(&a),
            },
        )
        .expect("dof > 0")
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn quadratic_matrix(&self) -> Option<&DMatrix<f64>> {
        self.quadratic.as_ref()
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        Error::check_dim("heavy position", self.dof, x.len())
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match &self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::Quadratic { .. } => {
                let a = self.quadratic.as_ref().expect("built in new");
                0.5 * x.dot(&(a * x))
            }
            PotentialKind::DoubleWell => x.iter().map(|v| 0.25 * (v * v - 1.0).powi(2)).sum(),
        }
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            PotentialKind::Free => DVector::zeros(x.len()),
            PotentialKind::Quadratic { .. } => self.quadratic.as_ref().expect("built in new") * x,
            PotentialKind::DoubleWell => x.map(|v| v * (v * v - 1.0)),
        }
    }

    /// Writes λ′(X) into `out` without allocating.
    pub fn grad_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        match &self.kind {
            PotentialKind::Free => out.fill(0.0),
            PotentialKind::Quadratic { .. } => {
                out.gemv(1.0, self.quadratic.as_ref().expect("built in new"), x, 0.0)
            }
            PotentialKind::DoubleWell => {
                for (o, v) in out.iter_mut().zip(x.iter()) {
                    *o = v * (v * v - 1.0);
                }
            }
        }
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            PotentialKind::Free => DMatrix::zeros(x.len(), x.len()),
            PotentialKind::Quadratic { .. } => self.quadratic.clone().expect("built in new"),
            PotentialKind::DoubleWell => {
                DMatrix::from_diagonal(&x.map(|v| 3.0 * v * v - 1.0))
            }
        }
    }
}

impl Potential for HeavyModel {
    fn dim(&self) -> usize {
        self.dof
    }

    fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        self.check(x)?;
        Ok(self.value(x))
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(self.grad(x))
    }

    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        self.check(x)?;
        Error::check_dim("gradient buffer", self.dof, out.len())?;
        self.grad_into(x, out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;

    fn models() -> Vec<HeavyModel> {
        let a = vec![vec![2.0, 0.3, 0.0], vec![0.3, 1.0, -0.2], vec![0.0, -0.2, 0.5]];
        vec![
            HeavyModel::free(3),
            HeavyModel::double_well(3),
            HeavyModel::new(3, PotentialKind::Quadratic { matrix: a }).unwrap(),
        ]
    }

    #[test]
    fn gradient_matches_central_difference() {
        let mut rng = StreamRng::new(1, 0);
        for model in models() {
            for _ in 0..50 {
                let x = DVector::from_fn(3, |_, _| 2.0 * rng.normal());
                let g = model.grad(&x);
                let eps = 1e-5;
                for k in 0..3 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += eps;
                    xm[k] -= eps;
                    let fd = (model.value(&xp) - model.value(&xm)) / (2.0 * eps);
                    let scale = g[k].abs().max(1.0);
                    assert!((fd - g[k]).abs() / scale < 1e-6, "{:?}: {fd} vs {}", model.kind(), g[k]);
                }
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_difference() {
        let x = DVector::from_vec(vec![0.3, -1.2, 0.7]);
        for model in models() {
            let h = model.hessian(&x);
            let eps = 1e-6;
            for k in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += eps;
                xm[k] -= eps;
                let col = (model.grad(&xp) - model.grad(&xm)) / (2.0 * eps);
                for i in 0..3 {
                    assert!((col[i] - h[(i, k)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(HeavyModel::new(0, PotentialKind::Free).is_err());
        let asym = vec![vec![1.0, 2.0], vec![0.0, 1.0]];
        assert!(HeavyModel::new(2, PotentialKind::Quadratic { matrix: asym }).is_err());
        let m = HeavyModel::free(2);
        assert!(m.energy(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn grad_into_matches_grad() {
        let x = DVector::from_vec(vec![0.3, -1.2, 0.7]);
        for model in models() {
            let mut out = DVector::zeros(3);
            model.grad_into(&x, &mut out);
            assert_eq!(out, model.grad(&x));
        }
    }
}
