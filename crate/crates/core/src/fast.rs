//! Precision-form learner.
//!
//! Each component keeps `Lambda = Sigma^-1` and `ln |Sigma|`. The covariance
//! update `Sigma(t) = (1-w) Sigma(t-1) + c e e'`, `c = w (1 - 3w + w^2)`, is a
//! single rank-one modification, so both the precision matrix
//! (Sherman-Morrison) and the determinant (matrix determinant lemma) follow
//! in O(D^2):
//!
//! ```text
//! g         = 1 + c/(1-w) e' Lambda e
//! Lambda(t) = Lambda/(1-w) - c/((1-w)^2 g) (Lambda e)(Lambda e)'
//! |Sigma(t)| = (1-w)^D |Sigma(t-1)| g
//! ```
//!
//! Nothing reachable from [`step_fast`] factorizes, inverts or takes a dense
//! determinant.
//!
//! The two-step variants split the update into `+ w e* e*'` followed by
//! `- dmu dmu'`; they are kept as an independent validation path.

use crate::error::{check_len, Error, Result};
use crate::model::{
    combined_coeff, combined_guard, GaussianComponent, Mixture, SpreadKernel, SpreadStep, UpdateTrace, GUARD_EPS,
};
use crate::numerics::{quadratic_form, sm_rank_one, scale_sub_outer, SymMatrix, Vector, SM_EPS};

fn precision(comp: &GaussianComponent) -> Result<&SymMatrix> {
    comp.precision()
        .ok_or_else(|| Error::config("fast learner requires the precision representation"))
}

/// `(x - mu)' Lambda (x - mu)`; no inversion.
pub fn mahalanobis_precision(comp: &GaussianComponent, x: &Vector) -> Result<f64> {
    check_len(comp.dim(), x.len())?;
    Ok(quadratic_form(precision(comp)?, &(x - &comp.mean)))
}

/// Combined-form precision update for error `e = x - mu(t-1)`.
pub fn precision_update_combined(comp: &mut GaussianComponent, e: &Vector, omega: f64) -> Result<()> {
    let prec = precision(comp)?;
    let lambda_e = prec * e;
    let guard = combined_guard(omega, e.dot(&lambda_e));
    if !(guard > GUARD_EPS) {
        return Err(Error::SkippedUpdate { guard });
    }
    apply_precision(comp.spread.matrix_mut(), &lambda_e, omega, guard);
    Ok(())
}

fn apply_precision(prec: &mut SymMatrix, lambda_e: &Vector, omega: f64, guard: f64) {
    let decay = 1.0 - omega;
    scale_sub_outer(prec, 1.0 / decay, lambda_e, combined_coeff(omega) / (decay * decay * guard));
}

/// Combined-form determinant update. Reads `Lambda(t-1)`, so it must run
/// before [`precision_update_combined`].
pub fn determinant_update_combined(comp: &mut GaussianComponent, e: &Vector, omega: f64) -> Result<()> {
    let guard = combined_guard(omega, quadratic_form(precision(comp)?, e));
    if !(guard > GUARD_EPS) {
        return Err(Error::SkippedUpdate { guard });
    }
    comp.log_det_cov += comp.dim() as f64 * (1.0 - omega).ln() + guard.ln();
    Ok(())
}

/// First half of the split update: `Lambda_bar = ((1-w) Sigma + w e* e*')^-1`.
fn precision_first_half(prec: &SymMatrix, e_star: &Vector, omega: f64) -> Result<SymMatrix> {
    sm_rank_one(&(prec / (1.0 - omega)), e_star, omega)
}

/// Two-step precision update: add `w e* e*'` with decay, then subtract
/// `dmu dmu'`.
pub fn precision_update_two_step(
    comp: &mut GaussianComponent,
    e_star: &Vector,
    mean_shift: &Vector,
    omega: f64,
) -> Result<()> {
    let bar = precision_first_half(precision(comp)?, e_star, omega)?;
    let updated = sm_rank_one(&bar, mean_shift, -1.0)?;
    *comp.spread.matrix_mut() = updated;
    Ok(())
}

/// Two-step determinant update, reading `Lambda(t-1)`.
pub fn determinant_update_two_step(
    comp: &mut GaussianComponent,
    e_star: &Vector,
    mean_shift: &Vector,
    omega: f64,
) -> Result<()> {
    let prec = precision(comp)?;
    let decay = 1.0 - omega;
    let first = 1.0 + omega / decay * quadratic_form(prec, e_star);
    if !(first > SM_EPS) {
        return Err(Error::SingularUpdate { denominator: first });
    }
    let bar = precision_first_half(prec, e_star, omega)?;
    let second = 1.0 - quadratic_form(&bar, mean_shift);
    if !(second > SM_EPS) {
        return Err(Error::SingularUpdate { denominator: second });
    }
    comp.log_det_cov += comp.dim() as f64 * decay.ln() + first.ln() + second.ln();
    Ok(())
}

struct RankOne;

impl SpreadKernel for RankOne {
    /// `Lambda e`, shared by the distance and the update.
    type Scratch = Vector;

    fn distance(&self, comp: &GaussianComponent, e: &Vector) -> Result<(f64, Vector)> {
        let lambda_e = precision(comp)? * e;
        Ok((e.dot(&lambda_e), lambda_e))
    }

    fn update(&self, comp: &mut GaussianComponent, step: &SpreadStep<'_>, lambda_e: Vector) -> Result<bool> {
        // guard > GUARD_EPS was checked by the caller
        comp.log_det_cov += comp.dim() as f64 * (1.0 - step.omega).ln() + step.guard.ln();
        apply_precision(comp.spread.matrix_mut(), &lambda_e, step.omega, step.guard);
        Ok(true)
    }
}

/// One learning step of the precision-form learner.
pub fn step_fast(mix: &mut Mixture, x: &Vector) -> Result<UpdateTrace> {
    mix.step_with(&RankOne, x)
}
