//! Quasi-likelihood information criterion for choosing among nested effect
//! models.
//!
//! For a candidate `J` the submodel estimate `ξ̂_J` solves the estimating
//! equation with instruments `G_Jᵀ Z` and regressors `G_Jᵀ τ`. The criterion is
//!
//! ```text
//! QGIC(J) = −2 Q(ξ̂_J) + λ_n tr{Σ̃_J K_J⁻¹}
//! Q(ξ)    = Σ w_i [ −½ (τ_Jᵢᵀξ)² + (τ_Jᵢᵀξ)(y_i − φ_i) ]
//! K_J     = (1/n) Σ w_i τ_Jᵢ τ_Jᵢᵀ,   Σ̃_J = (1/n) Σ w_i² r_i² τ_Jᵢ τ_Jᵢᵀ
//! ```
//!
//! `K_J` is the curvature of `−Q/n`. Using it (rather than its negative) keeps
//! the penalty positive for well-posed submodels, which is what makes larger
//! models pay for their extra parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{CdeError, Result};
use crate::estimator::{exposure_weights, fit_with_instruments, offset_outcome, weighted_cross, FittedCde};
use crate::linalg::{self, symmetrize};
use crate::model::{CandidateModel, DesignMatrices};
use crate::nuisance::{BaselineOutcomeFit, PropensityFit};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// `λ_n = 2`.
    Aic,
    /// `λ_n = log n`.
    Gic,
    /// Caller-chosen constant; consistency conditions are the caller's concern.
    Fixed(f64),
}

impl Penalty {
    pub fn lambda(&self, n: usize) -> f64 {
        match *self {
            Penalty::Aic => 2.0,
            Penalty::Gic => (n as f64).ln(),
            Penalty::Fixed(l) => l,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionConfig {
    pub penalty: Penalty,
    pub candidates: Vec<CandidateModel>,
}

/// Submodel estimate with instruments `G_Jᵀ Z`; the full model reproduces
/// [`crate::estimate_xi`].
pub fn fit_submodel(
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    model: &CandidateModel,
) -> Result<FittedCde> {
    check_indices(model, design.p())?;
    let inst = design.instruments.select_columns(model.indices());
    fit_with_instruments(design, ps, bl, model.indices(), &inst)
}

fn check_indices(model: &CandidateModel, p: usize) -> Result<()> {
    match model.indices().iter().find(|&&j| j >= p) {
        Some(&j) => Err(CdeError::IndexOutOfRange { index: j, dim: p }),
        None => Ok(()),
    }
}

struct Working {
    tau: DMatrix<f64>,
    w: Vec<f64>,
    ytilde: DVector<f64>,
}

fn working(design: &DesignMatrices, ps: &PropensityFit, bl: &BaselineOutcomeFit, model: &CandidateModel, xi: &DVector<f64>) -> Result<Working> {
    check_indices(model, design.p())?;
    if xi.len() != model.len() {
        return Err(CdeError::Dimension(format!(
            "xi_J has length {}, model {} has {} parameters",
            xi.len(),
            model.label(),
            model.len()
        )));
    }
    Ok(Working {
        tau: design.tau.select_columns(model.indices()),
        w: exposure_weights(design, ps)?,
        ytilde: offset_outcome(design, bl)?,
    })
}

pub fn quasi_likelihood(
    xi: &DVector<f64>,
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    model: &CandidateModel,
) -> Result<f64> {
    let wk = working(design, ps, bl, model, xi)?;
    let fitted = &wk.tau * xi;
    Ok(fitted
        .iter()
        .zip(wk.ytilde.iter())
        .zip(&wk.w)
        .map(|((f, yt), w)| w * (-0.5 * f * f + f * yt))
        .sum())
}

/// `∂Q/∂ξ = Σ w_i τ_Jᵢ (y_i − φ_i − τ_Jᵢᵀξ)`.
pub fn quasi_likelihood_gradient(
    xi: &DVector<f64>,
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    model: &CandidateModel,
) -> Result<DVector<f64>> {
    let wk = working(design, ps, bl, model, xi)?;
    let resid = &wk.ytilde - &wk.tau * xi;
    let wr: Vec<f64> = wk.w.iter().zip(resid.iter()).map(|(w, r)| w * r).collect();
    Ok(wk.tau.tr_mul(&DVector::from_vec(wr)))
}

/// `tr{Σ̃_J K_J⁻¹}` evaluated at `ξ_J`.
pub fn penalty_trace(
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    xi: &DVector<f64>,
    model: &CandidateModel,
) -> Result<f64> {
    let wk = working(design, ps, bl, model, xi)?;
    let n = design.n() as f64;
    let k = symmetrize(&(weighted_cross(&wk.tau, &wk.tau, &wk.w) / n));
    let resid = &wk.ytilde - &wk.tau * xi;
    let w2: Vec<f64> = wk.w.iter().zip(resid.iter()).map(|(w, r)| (w * r).powi(2)).collect();
    let sigma = symmetrize(&(weighted_cross(&wk.tau, &wk.tau, &w2) / n));
    let (kinv, _) = linalg::inverse_checked(&k, |cond| CdeError::Singular {
        context: format!("penalty curvature for {}", model.label()),
        cond,
    })?;
    Ok((sigma * kinv).trace())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEvaluation {
    pub model: CandidateModel,
    pub fit: FittedCde,
    pub q: f64,
    pub trace: f64,
    pub lambda: f64,
    pub value: f64,
}

/// Scores an already-fitted submodel.
pub fn evaluate_fit(
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    penalty: Penalty,
    model: &CandidateModel,
    fit: FittedCde,
) -> Result<CandidateEvaluation> {
    let q = quasi_likelihood(&fit.xi_hat, design, ps, bl, model)?;
    let trace = penalty_trace(design, ps, bl, &fit.xi_hat, model)?;
    let lambda = penalty.lambda(design.n());
    Ok(CandidateEvaluation {
        model: model.clone(),
        fit,
        q,
        trace,
        lambda,
        value: -2.0 * q + lambda * trace,
    })
}

pub fn qgic(
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    penalty: Penalty,
    model: &CandidateModel,
) -> Result<CandidateEvaluation> {
    let fit = fit_submodel(design, ps, bl, model)?;
    evaluate_fit(design, ps, bl, penalty, model, fit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// One entry per candidate, in the configured order.
    pub candidates: Vec<(CandidateModel, Result<CandidateEvaluation>)>,
    /// Index into `candidates` of the chosen model.
    pub chosen: usize,
}

impl SelectionResult {
    pub fn chosen(&self) -> &CandidateEvaluation {
        match &self.candidates[self.chosen].1 {
            Ok(e) => e,
            Err(_) => unreachable!("chosen candidate always evaluated successfully"),
        }
    }

    pub fn failures(&self) -> usize {
        self.candidates.iter().filter(|(_, r)| r.is_err()).count()
    }
}

/// Argmin with ties broken toward fewer parameters, then lexicographically
/// smaller index sets.
fn better(a: &CandidateEvaluation, b: &CandidateEvaluation) -> bool {
    if a.value != b.value {
        return a.value < b.value;
    }
    (a.model.len(), a.model.indices()) < (b.model.len(), b.model.indices())
}

/// Selects among candidates fitted by `fitter`; candidates whose fit or
/// criterion fails are recorded and skipped.
pub fn select_with<F>(
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    config: &CriterionConfig,
    fitter: F,
) -> Result<SelectionResult>
where
    F: Fn(&CandidateModel) -> Result<FittedCde>,
{
    if config.candidates.is_empty() {
        return Err(CdeError::Config("no candidate models".into()));
    }
    let candidates: Vec<_> = config
        .candidates
        .iter()
        .map(|m| {
            let eval = fitter(m).and_then(|fit| evaluate_fit(design, ps, bl, config.penalty, m, fit));
            (m.clone(), eval)
        })
        .collect();
    let mut chosen: Option<usize> = None;
    for (k, (_, r)) in candidates.iter().enumerate() {
        if let Ok(e) = r {
            let replace = match chosen {
                None => true,
                Some(c) => match &candidates[c].1 {
                    Ok(cur) => better(e, cur),
                    Err(_) => true,
                },
            };
            if replace {
                chosen = Some(k);
            }
        }
    }
    let chosen = chosen.ok_or(CdeError::AllCandidatesFailed)?;
    Ok(SelectionResult { candidates, chosen })
}

pub fn select(
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    config: &CriterionConfig,
) -> Result<SelectionResult> {
    select_with(design, ps, bl, config, |m| fit_submodel(design, ps, bl, m))
}
