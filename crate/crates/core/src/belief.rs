//! Bayesian intention estimation.
//!
//! Each type's likelihood of an observed end state is a Gaussian mixture whose
//! components sit at the end states of that type's recorded plans, weighted by
//! the plans' equilibrium probabilities. Everything is evaluated in log space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{PlayerId, Prior, TypeVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("covariance must be a symmetric positive-definite {0}x{0} matrix")]
    NotPositiveDefinite(usize),
    #[error("end state has dimension {got}, the model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("observation inconsistent with all types of player {0}")]
    Inconsistent(usize),
    #[error("invalid belief: {0}")]
    Invalid(String),
}

/// Gaussian observation noise on end states, `N(μ, Σ)`.
#[derive(Clone, Debug)]
pub struct ObservationModel {
    cov: DMatrix<f64>,
    /// Lower Cholesky factor `L` with `Σ = L Lᵀ`.
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl ObservationModel {
    pub fn new(cov: DMatrix<f64>) -> Result<Self, BeliefError> {
        let k = cov.nrows();
        if k == 0 || cov.ncols() != k || (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(BeliefError::NotPositiveDefinite(k));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(BeliefError::NotPositiveDefinite(k))?
            .l();
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (k as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(ObservationModel { cov, chol, log_norm })
    }

    /// Independent noise with standard deviation `std` on each of `dim` coordinates.
    pub fn isotropic(std: f64, dim: usize) -> Result<Self, BeliefError> {
        Self::new(DMatrix::from_diagonal_element(dim, dim, std * std))
    }

    /// Model over concatenated end states of several vehicles.
    pub fn block_diagonal(models: &[ObservationModel]) -> Result<Self, BeliefError> {
        let k: usize = models.iter().map(|m| m.dim()).sum();
        let mut cov = DMatrix::zeros(k, k);
        let mut at = 0;
        for m in models {
            let d = m.dim();
            cov.view_mut((at, at), (d, d)).copy_from(&m.cov);
            at += d;
        }
        Self::new(cov)
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn log_density(&self, x: &[f64], mean: &[f64]) -> Result<f64, BeliefError> {
        let k = self.dim();
        for v in [x, mean] {
            if v.len() != k {
                return Err(BeliefError::Dimension {
                    expected: k,
                    got: v.len(),
                });
            }
        }
        let diff = DVector::from_iterator(k, x.iter().zip(mean).map(|(a, b)| a - b));
        let z = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        Ok(self.log_norm - 0.5 * z.norm_squared())
    }

    pub fn density(&self, x: &[f64], mean: &[f64]) -> Result<f64, BeliefError> {
        self.log_density(x, mean).map(f64::exp)
    }
}

/// One mixture component: the end state a plan leads to and its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub end_state: Vec<f64>,
    pub weight: f64,
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln f = ln Σ_s η(μ(a); μ(s)) ψ(s)`; `-∞` when no component has positive weight.
pub fn log_likelihood(
    observed: &[f64],
    components: &[MixtureComponent],
    model: &ObservationModel,
) -> Result<f64, BeliefError> {
    let terms = components
        .iter()
        .filter(|c| c.weight > 0.0)
        .map(|c| Ok(model.log_density(observed, &c.end_state)? + c.weight.ln()))
        .collect::<Result<Vec<f64>, BeliefError>>()?;
    Ok(log_sum_exp(terms.into_iter()))
}

pub fn likelihood_marginal(
    observed: &[f64],
    components: &[MixtureComponent],
    model: &ObservationModel,
) -> Result<f64, BeliefError> {
    log_likelihood(observed, components, model).map(f64::exp)
}

/// Per-player categorical beliefs over types.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub marginals: Vec<Vec<f64>>,
}

impl Belief {
    pub fn uniform(num_types: &[usize]) -> Self {
        Belief {
            marginals: num_types.iter().map(|&k| vec![1.0 / k as f64; k]).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), BeliefError> {
        for (p, m) in self.marginals.iter().enumerate() {
            let total: f64 = m.iter().sum();
            if m.is_empty() || m.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(BeliefError::Invalid(format!("marginal of player {p} is {m:?}")));
            }
        }
        Ok(())
    }

    pub fn marginal(&self, player: PlayerId) -> &[f64] {
        &self.marginals[player.0]
    }

    /// Product prior with every probability raised to at least `floor` and
    /// renormalized, so that no type is starved of samples.
    pub fn to_prior(&self, floor: f64) -> Prior {
        Prior::Product(
            self.marginals
                .iter()
                .map(|m| {
                    let raised: Vec<f64> = m.iter().map(|&x| x.max(floor)).collect();
                    let total: f64 = raised.iter().sum();
                    raised.into_iter().map(|x| x / total).collect()
                })
                .collect(),
        )
    }
}

/// Bayes update of one player's marginal. `components[t]` is the mixture of
/// type `t`; other players' marginals are left as they are.
pub fn update_marginal(
    belief: &Belief,
    player: PlayerId,
    observed: &[f64],
    components: &[Vec<MixtureComponent>],
    model: &ObservationModel,
) -> Result<Belief, BeliefError> {
    let prior = &belief.marginals[player.0];
    if components.len() != prior.len() {
        return Err(BeliefError::Invalid(format!(
            "{} mixtures for {} types",
            components.len(),
            prior.len()
        )));
    }
    let logs = components
        .iter()
        .zip(prior)
        .map(|(c, &p)| Ok(log_likelihood(observed, c, model)? + p.ln()))
        .collect::<Result<Vec<f64>, BeliefError>>()?;
    let post = normalize_log(&logs).ok_or(BeliefError::Inconsistent(player.0))?;
    let mut out = belief.clone();
    out.marginals[player.0] = post;
    Ok(out)
}

fn normalize_log(logs: &[f64]) -> Option<Vec<f64>> {
    let z = log_sum_exp(logs.iter().copied());
    if !z.is_finite() {
        return None;
    }
    Some(logs.iter().map(|l| (l - z).exp()).collect())
}

/// Belief over whole type vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointBelief {
    pub entries: Vec<(TypeVector, f64)>,
}

impl JointBelief {
    /// Product of per-player marginals over every type vector.
    pub fn from_marginals(belief: &Belief) -> Self {
        let radix: Vec<usize> = belief.marginals.iter().map(|m| m.len()).collect();
        let mut digits = vec![0usize; radix.len()];
        let mut entries = Vec::new();
        loop {
            let w: f64 = digits.iter().enumerate().map(|(p, &t)| belief.marginals[p][t]).product();
            entries.push((
                TypeVector(digits.iter().map(|&t| crate::game::TypeId(t)).collect()),
                w,
            ));
            if !crate::game::increment(&mut digits, &radix) {
                break;
            }
        }
        JointBelief { entries }
    }

    pub fn to_prior(&self) -> Prior {
        Prior::Joint(self.entries.clone())
    }

    /// Marginal of `player` implied by the joint belief.
    pub fn marginal(&self, player: PlayerId, num_types: usize) -> Vec<f64> {
        self.to_prior().marginal(player, num_types)
    }
}

/// Bayes update over type vectors. `components[k]` is the mixture for the
/// type vector `belief.entries[k]`, with end states concatenated over
/// vehicles and `model` typically [`ObservationModel::block_diagonal`].
pub fn update_joint(
    belief: &JointBelief,
    observed: &[f64],
    components: &[Vec<MixtureComponent>],
    model: &ObservationModel,
) -> Result<JointBelief, BeliefError> {
    if components.len() != belief.entries.len() {
        return Err(BeliefError::Invalid(format!(
            "{} mixtures for {} type vectors",
            components.len(),
            belief.entries.len()
        )));
    }
    let logs = components
        .iter()
        .zip(&belief.entries)
        .map(|(c, (_, p))| Ok(log_likelihood(observed, c, model)? + p.ln()))
        .collect::<Result<Vec<f64>, BeliefError>>()?;
    let post = normalize_log(&logs).ok_or(BeliefError::Inconsistent(usize::MAX))?;
    Ok(JointBelief {
        entries: belief
            .entries
            .iter()
            .zip(post)
            .map(|((t, _), w)| (t.clone(), w))
            .collect(),
    })
}
