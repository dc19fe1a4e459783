//! Covariance-form learner. Every step solves against and re-factorizes each
//! full covariance matrix, so a step costs O(K D^3). It exists as the ground
//! truth the precision-form learner is checked against.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::model::{GaussianComponent, Mixture, SpreadKernel, SpreadStep, UpdateTrace};
use crate::numerics::{SymMatrix, Vector};

fn covariance(comp: &GaussianComponent) -> Result<&SymMatrix> {
    comp.covariance()
        .ok_or_else(|| Error::config("reference learner requires the covariance representation"))
}

/// `(x - mu)' Sigma^-1 (x - mu)` through a Cholesky solve.
pub fn mahalanobis_dense(comp: &GaussianComponent, x: &Vector) -> Result<f64> {
    let e = x - &comp.mean;
    solve_distance(covariance(comp)?, &e)
}

fn solve_distance(cov: &SymMatrix, e: &Vector) -> Result<f64> {
    let chol = Cholesky::new(cov.clone())
        .ok_or_else(|| Error::degenerate("covariance is not positive definite"))?;
    let mut y = e.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut y);
    Ok(y.norm_squared())
}

/// `ln |Sigma|` from a fresh Cholesky factorization.
pub fn dense_log_det(cov: &SymMatrix) -> Option<f64> {
    let chol = Cholesky::new(cov.clone())?;
    Some(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `Sigma(t) = (1 - w) Sigma(t-1) + w e* e*' - dmu dmu'`, then a dense
/// determinant. On a non positive definite result the component is restored
/// and [`Error::SkippedUpdate`] returned.
pub fn covariance_update(
    comp: &mut GaussianComponent,
    e_star: &Vector,
    mean_shift: &Vector,
    omega: f64,
) -> Result<()> {
    let cov = comp
        .spread
        .matrix_mut();
    let previous = cov.clone();
    let n = e_star.len();
    let (es, dm) = (e_star.as_slice(), mean_shift.as_slice());
    // entry-wise so a symmetric matrix stays bitwise symmetric
    for (j, col) in cov.as_mut_slice().chunks_exact_mut(n).enumerate() {
        for (i, cij) in col.iter_mut().enumerate() {
            *cij = (1.0 - omega) * *cij + omega * (es[i] * es[j]) - dm[i] * dm[j];
        }
    }
    match dense_log_det(cov) {
        Some(ld) if ld.is_finite() => {
            comp.log_det_cov = ld;
            Ok(())
        }
        _ => {
            *comp.spread.matrix_mut() = previous;
            Err(Error::SkippedUpdate { guard: f64::NAN })
        }
    }
}

struct Dense;

impl SpreadKernel for Dense {
    type Scratch = ();

    fn distance(&self, comp: &GaussianComponent, e: &Vector) -> Result<(f64, ())> {
        Ok((solve_distance(covariance(comp)?, e)?, ()))
    }

    fn update(&self, comp: &mut GaussianComponent, step: &SpreadStep<'_>, _: ()) -> Result<bool> {
        covariance(comp)?;
        match covariance_update(comp, step.e_star, step.mean_shift, step.omega) {
            Ok(()) => Ok(true),
            Err(Error::SkippedUpdate { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

/// One learning step of the covariance-form learner.
pub fn step_reference(mix: &mut Mixture, x: &Vector) -> Result<UpdateTrace> {
    mix.step_with(&Dense, x)
}
