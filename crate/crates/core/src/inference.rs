//! Conditional inference on a trained mixture.
//!
//! The dimensions are split into a known block `i` and a target block `t`.
//! Posteriors use only the known block; each component then contributes its
//! Gaussian conditional of `t` given `x_i`.
//!
//! Under the precision representation nothing of size `|i|` is ever
//! factorized. With `Lambda` partitioned like `Sigma`:
//!
//! ```text
//! Sigma_i^-1      = Lambda_i - Lambda_it Lambda_t^-1 Lambda_ti
//! |Sigma_i|       = |Sigma| |Lambda_t|
//! E[x_t | x_i]    = mu_t - Lambda_t^-1 Lambda_ti (x_i - mu_i)
//! Cov[x_t | x_i]  = Lambda_t^-1
//! ```
//!
//! so the only factorization is the `o x o` Cholesky of `Lambda_t`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{check_len, Error, Result};
use crate::model::{normalize_log_weights, GaussianComponent, Mixture, Spread};
use crate::numerics::{symmetrize, SymMatrix, Vector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Split of `0..D` into known (`i`) and target (`t`) dimensions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    known: Vec<usize>,
    target: Vec<usize>,
}

impl Partition {
    /// Both lists keep the given order; together they must cover `0..dim`
    /// exactly once.
    pub fn new(known: Vec<usize>, target: Vec<usize>, dim: usize) -> Result<Self> {
        let mut seen = vec![false; dim];
        for &k in known.iter().chain(&target) {
            if k >= dim {
                return Err(Error::config(format!("dimension index {k} out of range 0..{dim}")));
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::config(format!("dimension {k} listed twice")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::config("partition does not cover every dimension"));
        }
        Ok(Self { known, target })
    }

    /// Targets are the listed indices, everything else is known.
    pub fn with_targets(dim: usize, target: &[usize]) -> Result<Self> {
        let known = (0..dim).filter(|k| !target.contains(k)).collect();
        Self::new(known, target.to_vec(), dim)
    }

    /// The last `n_targets` dimensions are targets.
    pub fn trailing(dim: usize, n_targets: usize) -> Result<Self> {
        if n_targets > dim {
            return Err(Error::config("more targets than dimensions"));
        }
        Self::new((0..dim - n_targets).collect(), (dim - n_targets..dim).collect(), dim)
    }

    pub fn known(&self) -> &[usize] {
        &self.known
    }
    pub fn target(&self) -> &[usize] {
        &self.target
    }
    pub fn dim(&self) -> usize {
        self.known.len() + self.target.len()
    }

    /// Known entries of a full-length vector.
    pub fn known_of(&self, x: &[f64]) -> Vec<f64> {
        self.known.iter().map(|&k| x[k]).collect()
    }

    /// Target entries of a full-length vector.
    pub fn target_of(&self, x: &[f64]) -> Vec<f64> {
        self.target.iter().map(|&k| x[k]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Prediction {
    /// Posterior-weighted conditional mean of the targets.
    pub target_mean: Vector,
    /// Mixture conditional covariance (law of total variance over components).
    pub target_cov: SymMatrix,
    /// `p(j | x_i)`.
    pub component_posteriors: Vec<f64>,
    pub component_means: Vec<Vector>,
    /// Per-component conditional covariance.
    pub component_covs: Vec<SymMatrix>,
}

/// Everything one component contributes to a prediction.
#[derive(Clone, Debug)]
pub struct ComponentConditional {
    /// `ln p(x_i | j)`
    pub log_density: f64,
    /// Squared Mahalanobis distance on the known block.
    pub d2: f64,
    pub mean: Vector,
    pub cov: SymMatrix,
}

fn block(m: &SymMatrix, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

fn gather(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_iterator(idx.len(), idx.iter().map(|&k| v[k]))
}

fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::degenerate(format!("{what} is not positive definite")))
}

fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `r' M[idx, idx] r` without copying the block.
fn block_quadratic(m: &SymMatrix, idx: &[usize], r: &Vector) -> f64 {
    let mut acc = 0.0;
    for (b, &cb) in idx.iter().enumerate() {
        let col = m.column(cb);
        let s: f64 = idx.iter().zip(r.iter()).map(|(&ra, x)| col[ra] * x).sum();
        acc += r[b] * s;
    }
    acc
}

/// Marginal density on the known block and conditional moments of the
/// target block, for one component.
pub fn component_conditional(comp: &GaussianComponent, part: &Partition, x_i: &[f64]) -> Result<ComponentConditional> {
    check_len(comp.dim(), part.dim())?;
    check_len(part.known.len(), x_i.len())?;
    let (known, target) = (&part.known[..], &part.target[..]);
    let r = Vector::from_column_slice(x_i) - gather(&comp.mean, known);
    let mu_t = gather(&comp.mean, target);
    let n_known = known.len() as f64;

    match &comp.spread {
        Spread::Precision(prec) => {
            let quad_known = block_quadratic(prec, known, &r);
            let (d2, log_det_known, mean, cov) = if target.is_empty() {
                (quad_known, comp.log_det_cov, mu_t, SymMatrix::zeros(0, 0))
            } else {
                let chol = cholesky(block(prec, target, target), "target precision block")?;
                let w = block(prec, target, known) * &r;
                let solved = chol.solve(&w);
                let mut cov = chol.inverse();
                symmetrize(&mut cov);
                let d2 = quad_known - w.dot(&solved);
                (d2, comp.log_det_cov + chol_log_det(&chol), mu_t - solved, cov)
            };
            let log_density = if known.is_empty() {
                0.0
            } else {
                -0.5 * (n_known * LN_2PI + log_det_known + d2)
            };
            Ok(ComponentConditional { log_density, d2, mean, cov })
        }
        Spread::Covariance(sigma) => {
            if known.is_empty() {
                let cov = block(sigma, target, target);
                return Ok(ComponentConditional {
                    log_density: 0.0,
                    d2: 0.0,
                    mean: mu_t,
                    cov,
                });
            }
            let chol = cholesky(block(sigma, known, known), "known covariance block")?;
            let mut y = r.clone();
            chol.l_dirty().solve_lower_triangular_mut(&mut y);
            let d2 = y.norm_squared();
            let log_density = -0.5 * (n_known * LN_2PI + chol_log_det(&chol) + d2);
            let sigma_ti = block(sigma, target, known);
            let mean = mu_t + &sigma_ti * chol.solve(&r);
            let mut cov = block(sigma, target, target) - &sigma_ti * chol.solve(&sigma_ti.transpose());
            symmetrize(&mut cov);
            Ok(ComponentConditional { log_density, d2, mean, cov })
        }
    }
}

/// `ln p(x_i | j)` using only the known dimensions.
pub fn marginal_log_density(comp: &GaussianComponent, part: &Partition, x_i: &[f64]) -> Result<f64> {
    Ok(component_conditional(comp, part, x_i)?.log_density)
}

/// Conditional mean and covariance of the targets given `x_i`.
pub fn conditional_moments(comp: &GaussianComponent, part: &Partition, x_i: &[f64]) -> Result<(Vector, SymMatrix)> {
    let c = component_conditional(comp, part, x_i)?;
    Ok((c.mean, c.cov))
}

fn conditionals(mix: &Mixture, part: &Partition, x_i: &[f64]) -> Result<(Vec<ComponentConditional>, Vec<f64>)> {
    if mix.is_empty() {
        return Err(Error::config("cannot infer from an empty mixture"));
    }
    let conds = mix
        .components()
        .iter()
        .map(|c| component_conditional(c, part, x_i))
        .collect::<Result<Vec<_>>>()?;
    let terms: Vec<f64> = conds
        .iter()
        .zip(mix.components())
        .map(|(c, comp)| c.log_density + comp.prior.ln())
        .collect();
    let d2: Vec<f64> = conds.iter().map(|c| c.d2).collect();
    let post = normalize_log_weights(&terms, &d2);
    Ok((conds, post))
}

/// `p(j | x_i)`.
pub fn posterior_given_known(mix: &Mixture, part: &Partition, x_i: &[f64]) -> Result<Vec<f64>> {
    Ok(conditionals(mix, part, x_i)?.1)
}

/// Conditional mean (and covariance) of the target block given `x_i`.
pub fn predict(mix: &Mixture, part: &Partition, x_i: &[f64]) -> Result<Prediction> {
    if part.target.is_empty() {
        return Err(Error::config("prediction needs at least one target dimension"));
    }
    let (conds, post) = conditionals(mix, part, x_i)?;
    let o = part.target.len();
    let mut target_mean = Vector::zeros(o);
    let mut second = SymMatrix::zeros(o, o);
    for (c, p) in conds.iter().zip(&post) {
        target_mean.axpy(*p, &c.mean, 1.0);
        second += (&c.cov + &c.mean * c.mean.transpose()) * *p;
    }
    let mut target_cov = second - &target_mean * target_mean.transpose();
    symmetrize(&mut target_cov);
    let (component_means, component_covs) = conds.into_iter().map(|c| (c.mean, c.cov)).unzip();
    Ok(Prediction {
        target_mean,
        target_cov,
        component_posteriors: post,
        component_means,
        component_covs,
    })
}

/// Class label as the argmax of the predicted one-hot block; ties go to the
/// lowest index.
pub fn classify(mix: &Mixture, part: &Partition, x_i: &[f64], class_count: usize) -> Result<(usize, Vector)> {
    check_len(class_count, part.target.len())?;
    let scores = predict(mix, part, x_i)?.target_mean;
    Ok((argmax(scores.as_slice()), scores))
}

/// Index of the largest entry, first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Mixture {
    pub fn predict(&self, part: &Partition, x_i: &[f64]) -> Result<Prediction> {
        predict(self, part, x_i)
    }
}
