//! Mixture data model shared by the covariance-form and precision-form
//! learners: configuration, component lifecycle and the generic learning
//! step both learners run.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::numerics::{log_sum_exp, novelty_threshold, SymMatrix, Vector};

/// Floor applied to per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-9;

/// Smallest accepted guard `1 + c/(1-w) e' Lambda e` for a covariance update.
pub const GUARD_EPS: f64 = 1e-8;

/// Default novelty parameter: the smallest positive binary64 value, so the
/// novelty threshold is the (clamped) maximal chi-squared percentile.
pub const DEFAULT_BETA: f64 = 4.9e-324;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    /// Full covariance matrices, dense solves and determinants (O(D^3) per step).
    Covariance,
    /// Precision matrices with rank-one updates (O(D^2) per step).
    Precision,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Covariance => "covariance",
            Representation::Precision => "precision",
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "covariance" | "reference" => Ok(Representation::Covariance),
            "precision" | "fast" => Ok(Representation::Precision),
            other => Err(Error::config(format!("unknown representation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    delta: f64,
    beta: f64,
    v_min: u64,
    sp_min: f64,
    pruning: bool,
    dataset_std: Vector,
    representation: Representation,
    threshold: f64,
}

impl LearnerConfig {
    pub fn builder(dataset_std: &[f64]) -> LearnerConfigBuilder {
        LearnerConfigBuilder {
            delta: 0.5,
            beta: DEFAULT_BETA,
            v_min: 5,
            sp_min: 3.0,
            pruning: true,
            dataset_std: dataset_std.to_vec(),
            representation: Representation::Precision,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn v_min(&self) -> u64 {
        self.v_min
    }
    pub fn sp_min(&self) -> f64 {
        self.sp_min
    }
    pub fn pruning(&self) -> bool {
        self.pruning
    }
    pub fn dataset_std(&self) -> &Vector {
        &self.dataset_std
    }
    pub fn representation(&self) -> Representation {
        self.representation
    }
    pub fn dim(&self) -> usize {
        self.dataset_std.len()
    }
    /// Cached chi-squared novelty threshold.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Initial per-dimension standard deviation `delta * std(x)`.
    pub fn sigma_ini(&self) -> Vector {
        &self.dataset_std * self.delta
    }

    pub fn with_representation(&self, representation: Representation) -> Self {
        Self {
            representation,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct LearnerConfigBuilder {
    delta: f64,
    beta: f64,
    v_min: u64,
    sp_min: f64,
    pruning: bool,
    dataset_std: Vec<f64>,
    representation: Representation,
}

impl LearnerConfigBuilder {
    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }
    pub fn beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }
    pub fn v_min(mut self, v_min: u64) -> Self {
        self.v_min = v_min;
        self
    }
    pub fn sp_min(mut self, sp_min: f64) -> Self {
        self.sp_min = sp_min;
        self
    }
    pub fn pruning(mut self, enabled: bool) -> Self {
        self.pruning = enabled;
        self
    }
    pub fn representation(mut self, representation: Representation) -> Self {
        self.representation = representation;
        self
    }

    pub fn build(self) -> Result<LearnerConfig> {
        if self.dataset_std.is_empty() {
            return Err(Error::config("dimension must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config(format!("delta must be positive, got {}", self.delta)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::config(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if !(self.sp_min > 0.0) {
            return Err(Error::config(format!("sp_min must be positive, got {}", self.sp_min)));
        }
        if self.v_min == 0 {
            return Err(Error::config("v_min must be positive"));
        }
        if let Some(bad) = self.dataset_std.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(Error::config(format!("invalid standard deviation {bad}")));
        }
        let dataset_std = Vector::from_iterator(
            self.dataset_std.len(),
            self.dataset_std.iter().map(|s| s.max(STD_FLOOR)),
        );
        let threshold = novelty_threshold(dataset_std.len(), self.beta);
        Ok(LearnerConfig {
            delta: self.delta,
            beta: self.beta,
            v_min: self.v_min,
            sp_min: self.sp_min,
            pruning: self.pruning,
            dataset_std,
            representation: self.representation,
            threshold,
        })
    }
}

/// Spread matrix of a component, in whichever form the mixture keeps.
#[derive(Clone, Debug, PartialEq)]
pub enum Spread {
    Covariance(SymMatrix),
    Precision(SymMatrix),
}

impl Spread {
    pub fn matrix(&self) -> &SymMatrix {
        match self {
            Spread::Covariance(m) | Spread::Precision(m) => m,
        }
    }

    pub fn matrix_mut(&mut self) -> &mut SymMatrix {
        match self {
            Spread::Covariance(m) | Spread::Precision(m) => m,
        }
    }

    pub fn representation(&self) -> Representation {
        match self {
            Spread::Covariance(_) => Representation::Covariance,
            Spread::Precision(_) => Representation::Precision,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent {
    pub mean: Vector,
    pub spread: Spread,
    /// `ln |Sigma|`, tracked under both representations.
    pub log_det_cov: f64,
    /// Accumulated responsibilities (`sp`).
    pub sp: f64,
    /// Number of update steps survived, starting at one.
    pub age: u64,
    pub prior: f64,
}

impl GaussianComponent {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn det_cov(&self) -> f64 {
        self.log_det_cov.exp()
    }

    pub fn covariance(&self) -> Option<&SymMatrix> {
        match &self.spread {
            Spread::Covariance(m) => Some(m),
            Spread::Precision(_) => None,
        }
    }

    pub fn precision(&self) -> Option<&SymMatrix> {
        match &self.spread {
            Spread::Precision(m) => Some(m),
            Spread::Covariance(_) => None,
        }
    }

    /// `ln p(x|j)` given the squared Mahalanobis distance of `x`.
    pub fn log_density(&self, d2: f64) -> Result<f64> {
        log_density(self.log_det_cov, d2, self.dim())
    }
}

/// Log of the multivariate normal density with `ln |Sigma| = log_det_cov`.
pub fn log_density(log_det_cov: f64, d2: f64, dim: usize) -> Result<f64> {
    if !log_det_cov.is_finite() {
        return Err(Error::degenerate(format!(
            "covariance determinant is not positive (ln det = {log_det_cov})"
        )));
    }
    Ok(-0.5 * dim as f64 * (2.0 * PI).ln() - 0.5 * log_det_cov - 0.5 * d2)
}

/// Normalized posterior weights from unnormalized log terms. When every
/// term is `-inf` the whole mass goes to the entry with smallest `d2`.
pub fn normalize_log_weights(log_terms: &[f64], d2: &[f64]) -> Vec<f64> {
    debug_assert_eq!(log_terms.len(), d2.len());
    let total = log_sum_exp(log_terms);
    if total == f64::NEG_INFINITY || total.is_nan() {
        let nearest = d2
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        return (0..log_terms.len()).map(|i| if i == nearest { 1.0 } else { 0.0 }).collect();
    }
    log_terms.iter().map(|t| (t - total).exp()).collect()
}

/// `true` means "update": some component is closer than the threshold.
pub fn novelty_check(d2: &[f64], threshold: f64) -> bool {
    d2.iter().any(|d| *d < threshold)
}

/// Transient values of one component's update.
#[derive(Clone, Debug)]
pub struct ComponentUpdate {
    pub log_density: f64,
    pub responsibility: f64,
    /// `e = x - mu(t-1)`
    pub error_before: Vector,
    /// `e* = x - mu(t)`
    pub error_after: Vector,
    pub mean_shift: Vector,
    pub omega: f64,
    /// `c = w (1 - 3w + w^2)`, the weight of the combined rank-one term.
    pub coeff_c: f64,
    /// `g = 1 + c/(1-w) e' Lambda e`
    pub guard_g: f64,
    /// Spread and determinant left unchanged this step.
    pub skipped: bool,
}

#[derive(Clone, Debug)]
pub enum StepOutcome {
    Created(usize),
    Updated(Vec<ComponentUpdate>),
}

#[derive(Clone, Debug)]
pub struct UpdateTrace {
    /// Squared Mahalanobis distances to the components present before the step.
    pub d2: Vec<f64>,
    pub outcome: StepOutcome,
    /// Indices (after the update/creation) of components removed by pruning.
    pub pruned: Vec<usize>,
}

impl UpdateTrace {
    pub fn created(&self) -> bool {
        matches!(self.outcome, StepOutcome::Created(_))
    }

    pub fn updates(&self) -> &[ComponentUpdate] {
        match &self.outcome {
            StepOutcome::Updated(u) => u,
            StepOutcome::Created(_) => &[],
        }
    }
}

/// Rank-one step data handed to a learner's spread update.
pub(crate) struct SpreadStep<'a> {
    pub e_star: &'a Vector,
    pub mean_shift: &'a Vector,
    pub omega: f64,
    pub guard: f64,
}

/// What differs between the covariance-form and precision-form learners.
pub(crate) trait SpreadKernel {
    /// Per-component data computed with the distance and reused by the update.
    type Scratch;

    /// Squared Mahalanobis distance of `e = x - mu`.
    fn distance(&self, comp: &GaussianComponent, e: &Vector) -> Result<(f64, Self::Scratch)>;

    /// Update spread and determinant. `Ok(false)` means the update was
    /// rejected and the component left as it was.
    fn update(&self, comp: &mut GaussianComponent, step: &SpreadStep<'_>, scratch: Self::Scratch) -> Result<bool>;
}

/// Weight of the single rank-one term in `Sigma(t) = (1-w) Sigma + c e e'`.
pub fn combined_coeff(omega: f64) -> f64 {
    omega * (1.0 + omega * (omega - 3.0))
}

/// Factor `1 + c/(1-w) e' Lambda e`; positive iff the updated covariance is
/// positive definite.
pub fn combined_guard(omega: f64, d2: f64) -> f64 {
    1.0 + combined_coeff(omega) / (1.0 - omega) * d2
}

#[derive(Clone, Debug)]
pub struct Mixture {
    components: Vec<GaussianComponent>,
    config: LearnerConfig,
    skipped_updates: u64,
    steps: u64,
}

impl Mixture {
    /// Empty mixture (`K = 0`).
    pub fn new(config: LearnerConfig) -> Self {
        Self {
            components: Vec::new(),
            config,
            skipped_updates: 0,
            steps: 0,
        }
    }

    /// Reassembles a mixture from stored parts. Fails when a component's
    /// spread does not match the configured representation or sizes disagree.
    pub fn from_parts(config: LearnerConfig, components: Vec<GaussianComponent>) -> Result<Self> {
        let dim = config.dim();
        for comp in &components {
            check_len(dim, comp.mean.len())?;
            let m = comp.spread.matrix();
            check_len(dim, m.nrows())?;
            check_len(dim, m.ncols())?;
            if comp.spread.representation() != config.representation() {
                return Err(Error::config("component representation differs from configuration"));
            }
        }
        Ok(Self {
            components,
            config,
            skipped_updates: 0,
            steps: 0,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }
    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }
    pub fn components_mut(&mut self) -> &mut [GaussianComponent] {
        &mut self.components
    }
    pub fn len(&self) -> usize {
        self.components.len()
    }
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.config.dim()
    }
    pub fn representation(&self) -> Representation {
        self.config.representation()
    }
    /// Spread updates rejected by the positive-definiteness guard so far.
    pub fn skipped_updates(&self) -> u64 {
        self.skipped_updates
    }
    /// Points presented so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Presents one point to whichever learner matches the representation.
    pub fn learn(&mut self, x: &[f64]) -> Result<UpdateTrace> {
        let x = Vector::from_column_slice(x);
        match self.representation() {
            Representation::Covariance => crate::reference::step_reference(self, &x),
            Representation::Precision => crate::fast::step_fast(self, &x),
        }
    }

    /// Presents every row in order.
    pub fn learn_all<'a, I>(&mut self, rows: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        for row in rows {
            self.learn(row)?;
        }
        Ok(())
    }

    pub fn priors(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.prior).collect()
    }

    /// Posterior `p(j|x)` from per-component log densities.
    pub fn responsibilities(&self, log_densities: &[f64], d2: &[f64]) -> Vec<f64> {
        assert_eq!(log_densities.len(), self.len(), "responsibilities: one density per component");
        let terms: Vec<f64> = log_densities
            .iter()
            .zip(&self.components)
            .map(|(ld, c)| ld + c.prior.ln())
            .collect();
        normalize_log_weights(&terms, d2)
    }

    /// Appends a component centred on `x` and renormalizes every prior.
    pub fn create_component(&mut self, x: &Vector) -> Result<usize> {
        check_len(self.dim(), x.len())?;
        let sigma = self.config.sigma_ini();
        if sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::config("initial standard deviations must be positive"));
        }
        let variances = sigma.map(|s| s * s);
        let log_det_cov = variances.iter().map(|v| v.ln()).sum();
        let spread = match self.representation() {
            Representation::Covariance => Spread::Covariance(DMatrix::from_diagonal(&variances)),
            Representation::Precision => Spread::Precision(DMatrix::from_diagonal(&variances.map(|v| 1.0 / v))),
        };
        self.components.push(GaussianComponent {
            mean: x.clone(),
            spread,
            log_det_cov,
            sp: 1.0,
            age: 1,
            prior: 0.0,
        });
        self.renormalize_priors();
        Ok(self.components.len() - 1)
    }

    /// Removes components older than `v_min` whose accumulator is below
    /// `sp_min`. Returns the removed indices in ascending order.
    pub fn prune(&mut self) -> Vec<usize> {
        let (v_min, sp_min) = (self.config.v_min, self.config.sp_min);
        let mut removed = Vec::new();
        let mut idx = 0;
        self.components.retain(|c| {
            let drop = c.age > v_min && c.sp < sp_min;
            if drop {
                removed.push(idx);
            }
            idx += 1;
            !drop
        });
        if !removed.is_empty() && !self.components.is_empty() {
            self.renormalize_priors();
        }
        removed
    }

    /// `p(j) = sp_j / sum_q sp_q`.
    pub fn renormalize_priors(&mut self) {
        let total: f64 = self.components.iter().map(|c| c.sp).sum();
        for c in &mut self.components {
            c.prior = c.sp / total;
        }
    }

    /// The shared learning step: distances, novelty test, then either
    /// creation or the per-component update, then priors and pruning.
    pub(crate) fn step_with<K: SpreadKernel>(&mut self, kernel: &K, x: &Vector) -> Result<UpdateTrace> {
        check_len(self.dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("input contains non-finite values"));
        }
        self.steps += 1;

        let mut errors = Vec::with_capacity(self.len());
        let mut d2 = Vec::with_capacity(self.len());
        let mut scratch = Vec::with_capacity(self.len());
        for comp in &self.components {
            let e = x - &comp.mean;
            let (d, s) = kernel.distance(comp, &e)?;
            errors.push(e);
            d2.push(d);
            scratch.push(s);
        }

        let outcome = if novelty_check(&d2, self.config.threshold) {
            let log_densities = self
                .components
                .iter()
                .zip(&d2)
                .map(|(c, d)| c.log_density(*d))
                .collect::<Result<Vec<_>>>()?;
            let post = self.responsibilities(&log_densities, &d2);

            let mut updates = Vec::with_capacity(self.len());
            let parts = self.components.iter_mut().zip(errors).zip(scratch);
            for (j, ((comp, e), s)) in parts.enumerate() {
                comp.age += 1;
                comp.sp += post[j];
                let omega = post[j] / comp.sp;
                let mean_shift = &e * omega;
                comp.mean += &mean_shift;
                let e_star = x - &comp.mean;
                let coeff = combined_coeff(omega);
                let guard = combined_guard(omega, d2[j]);
                let step = SpreadStep {
                    e_star: &e_star,
                    mean_shift: &mean_shift,
                    omega,
                    guard,
                };
                let applied = guard > GUARD_EPS && kernel.update(comp, &step, s)?;
                if !applied {
                    self.skipped_updates += 1;
                }
                updates.push(ComponentUpdate {
                    log_density: log_densities[j],
                    responsibility: post[j],
                    error_before: e,
                    error_after: e_star,
                    mean_shift,
                    omega,
                    coeff_c: coeff,
                    guard_g: guard,
                    skipped: !applied,
                });
            }
            self.renormalize_priors();
            StepOutcome::Updated(updates)
        } else {
            StepOutcome::Created(self.create_component(x)?)
        };

        let pruned = if self.config.pruning { self.prune() } else { Vec::new() };
        Ok(UpdateTrace { d2, outcome, pruned })
    }
}
