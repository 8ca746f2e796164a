//! Closed-form IV estimating-equation solver, sandwich covariance and the
//! derived effect summaries (CDE, TE, PE).
//!
//! With weights `w_i = A_i − e_i` and offset outcome `ỹ_i = y_i − φ_i`, the
//! estimating equation `Σ w_i Z_i (ỹ_i − τ_iᵀξ) = 0` is linear in `ξ`, so
//!
//! ```text
//! ξ̂ = [Σ w_i Z_i τ_iᵀ]⁻¹ Σ w_i Z_i ỹ_i
//! ```
//!
//! Every estimator in the crate (submodels, the ordinary SMM, 2SLS) is this
//! solver with a different instrument matrix.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{CdeError, Result};
use crate::linalg::{self, symmetrize};
use crate::model::{DesignMatrices, EffectModelSpec};
use crate::nuisance::{BaselineOutcomeFit, PropensityFit, PropensityKind};

/// Compact record of the nuisance fits a `FittedCde` was computed with.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSummary {
    pub propensity: PropensityKind,
    pub alpha: Vec<f64>,
    pub zeta: Vec<f64>,
    pub n_baseline: usize,
}

impl NuisanceSummary {
    pub fn new(ps: &PropensityFit, bl: &BaselineOutcomeFit) -> Self {
        Self {
            propensity: ps.kind,
            alpha: ps.alpha.clone(),
            zeta: bl.zeta.clone(),
            n_baseline: bl.n_baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedCde {
    pub spec: EffectModelSpec,
    /// Positions in the full `ξ` of the estimated entries (all of them unless a
    /// submodel was fitted).
    pub indices: Vec<usize>,
    pub xi_hat: DVector<f64>,
    /// Sandwich covariance of `ξ̂`, already divided by `n`.
    pub cov: DMatrix<f64>,
    pub gamma_hat: DMatrix<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub cond_gamma: f64,
    pub x_mean: Vec<f64>,
    pub n: usize,
    pub nuisance: NuisanceSummary,
}

impl FittedCde {
    /// `ξ̂` embedded in the full parameter vector, zeros outside the submodel.
    pub fn xi_full(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.spec.len());
        for (k, &j) in self.indices.iter().enumerate() {
            out[j] = self.xi_hat[k];
        }
        out
    }

    /// CDE at mediator level `m`, with covariates at the analysis means.
    pub fn cde(&self, m: &[f64]) -> Result<(f64, f64)> {
        cde_at(self, m, &self.x_mean)
    }
}

pub(crate) fn exposure_weights(design: &DesignMatrices, ps: &PropensityFit) -> Result<Vec<f64>> {
    if ps.fitted.len() != design.n() {
        return Err(CdeError::Dimension(format!(
            "propensity fit has {} units but the design has {}",
            ps.fitted.len(),
            design.n()
        )));
    }
    Ok(ps.residuals(design.a.as_slice()))
}

pub(crate) fn offset_outcome(design: &DesignMatrices, bl: &BaselineOutcomeFit) -> Result<DVector<f64>> {
    if bl.fitted.len() != design.n() {
        return Err(CdeError::Dimension(format!(
            "baseline fit has {} units but the design has {}",
            bl.fitted.len(),
            design.n()
        )));
    }
    Ok(DVector::from_iterator(
        design.n(),
        design.y.iter().zip(&bl.fitted).map(|(y, f)| y - f),
    ))
}

/// `Σ w_i u_i v_iᵀ` over rows of `u` and `v`.
pub(crate) fn weighted_cross(u: &DMatrix<f64>, v: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut scaled = u.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= w[i];
    }
    scaled.tr_mul(v)
}

/// Solves the linear estimating equation for arbitrary regressors `tau` and
/// instruments `inst` (both `n × p`).
pub(crate) fn solve_equation(
    tau: &DMatrix<f64>,
    inst: &DMatrix<f64>,
    w: &[f64],
    ytilde: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let lhs = weighted_cross(inst, tau, w);
    let rhs = weighted_cross(inst, &DMatrix::from_column_slice(ytilde.len(), 1, ytilde.as_slice()), w).column(0).into_owned();
    linalg::solve_checked(&lhs, &rhs, |cond| CdeError::WeakInstrument { cond })
}

/// `Γ̂ = −(1/n) Σ w Z τᵀ`, `Σ̂ = (1/n) Σ w² r² Z Zᵀ` and `Γ̂⁻¹ Σ̂ Γ̂⁻ᵀ / n`.
pub(crate) fn sandwich_parts(
    tau: &DMatrix<f64>,
    inst: &DMatrix<f64>,
    w: &[f64],
    ytilde: &DVector<f64>,
    xi: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = tau.nrows() as f64;
    let gamma = weighted_cross(inst, tau, w) / -n;
    let resid = ytilde - tau * xi;
    let w2: Vec<f64> = w.iter().zip(resid.iter()).map(|(w, r)| (w * r).powi(2)).collect();
    let sigma = symmetrize(&(weighted_cross(inst, inst, &w2) / n));
    let (ginv, _) = linalg::inverse_checked(&gamma, |cond| CdeError::Singular {
        context: "sandwich covariance (Gamma)".into(),
        cond,
    })?;
    let cov = symmetrize(&(&ginv * &sigma * ginv.transpose() / n));
    Ok((gamma, sigma, cov))
}

/// Fits `ξ` on the columns `indices` of the design using the given
/// instrument matrix (`n × |indices|`). Shared by every estimator.
pub(crate) fn fit_with_instruments(
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    indices: &[usize],
    inst: &DMatrix<f64>,
) -> Result<FittedCde> {
    let w = exposure_weights(design, ps)?;
    let ytilde = offset_outcome(design, bl)?;
    let tau = design.tau.select_columns(indices);
    if inst.shape() != tau.shape() {
        return Err(CdeError::Dimension(format!(
            "instrument matrix is {:?}, regressors are {:?}",
            inst.shape(),
            tau.shape()
        )));
    }
    let (xi, cond) = solve_equation(&tau, inst, &w, &ytilde)?;
    let (gamma_hat, sigma_hat, cov) = sandwich_parts(&tau, inst, &w, &ytilde, &xi)?;
    Ok(FittedCde {
        spec: design.spec.clone(),
        indices: indices.to_vec(),
        xi_hat: xi,
        cov,
        gamma_hat,
        sigma_hat,
        cond_gamma: cond,
        x_mean: design.x_mean.clone(),
        n: design.n(),
        nuisance: NuisanceSummary::new(ps, bl),
    })
}

/// Full-model estimate with the design's own instrument vectors.
pub fn estimate_xi(design: &DesignMatrices, ps: &PropensityFit, bl: &BaselineOutcomeFit) -> Result<FittedCde> {
    let all: Vec<usize> = (0..design.p()).collect();
    fit_with_instruments(design, ps, bl, &all, &design.instruments)
}

/// Sandwich covariance of a given full-model `ξ̂` (divided by `n`).
pub fn sandwich_cov(
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    xi_hat: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if xi_hat.len() != design.p() {
        return Err(CdeError::Dimension(format!("xi has length {}, expected {}", xi_hat.len(), design.p())));
    }
    let w = exposure_weights(design, ps)?;
    let ytilde = offset_outcome(design, bl)?;
    Ok(sandwich_parts(&design.tau, &design.instruments, &w, &ytilde, xi_hat)?.2)
}

/// `(c(m)ᵀξ̂, sqrt(c(m)ᵀ cov c(m)))` with `c(m)` the `τ1` contrast at `a = 1`.
pub fn cde_at(fit: &FittedCde, m: &[f64], x_bar: &[f64]) -> Result<(f64, f64)> {
    let d_m = fit.spec.terms().flat_map(|t| t.factors()).filter_map(|f| match f {
        crate::model::Factor::Mediator(j) => Some(*j + 1),
        _ => None,
    });
    if let Some(need) = d_m.max() {
        if m.len() < need {
            return Err(CdeError::Dimension(format!("mediator level has {} components, model needs {need}", m.len())));
        }
    }
    if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(CdeError::InvalidData(format!("mediator level {m:?} must be finite and nonnegative")));
    }
    let full = fit.spec.contrast(m, x_bar);
    let c = DVector::from_iterator(fit.indices.len(), fit.indices.iter().map(|&j| full[j]));
    let point = c.dot(&fit.xi_hat);
    let var = (c.transpose() * &fit.cov * &c)[(0, 0)];
    Ok((point, var.max(0.0).sqrt()))
}

/// Two-sided normal critical value for the given confidence level.
pub fn normal_critical(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(CdeError::Config(format!("confidence level {confidence} must lie in (0, 1)")));
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf(1.0 - (1.0 - confidence) / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub point: f64,
    pub se: f64,
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn normal(point: f64, se: f64, confidence: f64) -> Result<Self> {
        let z = normal_critical(confidence)?;
        Ok(Self {
            point,
            se,
            low: point - z * se,
            high: point + z * se,
        })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.low <= value && value <= self.high
    }
}

/// Difference of arm means with a two-sample normal-approximation interval.
pub fn total_effect(ds: &Dataset, confidence: f64) -> Result<Interval> {
    let mut sums = [(0usize, 0.0f64); 2];
    for (a, y) in ds.a().iter().zip(ds.y()) {
        let arm = &mut sums[usize::from(*a == 1.0)];
        arm.0 += 1;
        arm.1 += y;
    }
    for (k, (count, _)) in sums.iter().enumerate() {
        if *count == 0 {
            return Err(CdeError::SingleArm(1 - k as u8));
        }
    }
    let means = [sums[0].1 / sums[0].0 as f64, sums[1].1 / sums[1].0 as f64];
    let mut ss = [0.0f64; 2];
    for (a, y) in ds.a().iter().zip(ds.y()) {
        let k = usize::from(*a == 1.0);
        ss[k] += (y - means[k]).powi(2);
    }
    let var_of_mean = |k: usize| {
        let c = sums[k].0;
        if c > 1 {
            ss[k] / (c - 1) as f64 / c as f64
        } else {
            0.0
        }
    };
    let se = (var_of_mean(0) + var_of_mean(1)).sqrt();
    Interval::normal(means[1] - means[0], se, confidence)
}

/// `PE(m) = (TE − CDE(m)) / TE`.
pub fn proportion_eliminated(te: f64, cde: f64) -> Result<f64> {
    if te == 0.0 {
        return Err(CdeError::UndefinedPe);
    }
    Ok((te - cde) / te)
}

/// Delta-method interval for PE treating TE and CDE(m) as independent.
pub fn proportion_eliminated_interval(te: &Interval, cde: &Interval, confidence: f64) -> Result<Interval> {
    let pe = proportion_eliminated(te.point, cde.point)?;
    let t = te.point;
    let var = (cde.se / t).powi(2) + (cde.point * te.se / (t * t)).powi(2);
    Interval::normal(pe, var.sqrt(), confidence)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelEffect {
    pub m: Vec<f64>,
    pub cde: Interval,
    /// `None` when TE is exactly zero.
    pub pe: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectReport {
    pub confidence: f64,
    pub te: Interval,
    pub levels: Vec<LevelEffect>,
}

pub fn effect_report(ds: &Dataset, fit: &FittedCde, levels: &[Vec<f64>], confidence: f64) -> Result<EffectReport> {
    let te = total_effect(ds, confidence)?;
    let levels = levels
        .iter()
        .map(|m| {
            let (point, se) = fit.cde(m)?;
            let cde = Interval::normal(point, se, confidence)?;
            let pe = match proportion_eliminated_interval(&te, &cde, confidence) {
                Ok(pe) => Some(pe),
                Err(CdeError::UndefinedPe) => None,
                Err(e) => return Err(e),
            };
            Ok(LevelEffect { m: m.clone(), cde, pe })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EffectReport { confidence, te, levels })
}
