//! Working models for the propensity score `e(x; α)` and the baseline outcome
//! `φ(x; ζ) = E[Y | A = 0, M = 0, X = x]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CdeError, Result};
use crate::linalg::{self, ols};

const NEWTON_MAX_ITER: usize = 100;
const SCORE_TOL: f64 = 1e-8;
/// Coefficient sup-norm beyond which the logistic MLE is treated as diverging.
const SEPARATION_NORM: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropensityKind {
    ConstantMean,
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityFit {
    pub kind: PropensityKind,
    /// Intercept first, then one coefficient per selected covariate. For the
    /// constant-mean kind this is `(Ā)`.
    pub alpha: Vec<f64>,
    pub covariates: Vec<usize>,
    pub fitted: Vec<f64>,
    pub iterations: usize,
}

impl PropensityFit {
    /// `A_i − e_i` for every unit.
    pub fn residuals(&self, a: &[f64]) -> Vec<f64> {
        a.iter().zip(&self.fitted).map(|(a, e)| a - e).collect()
    }
}

/// `e ≡ Ā`, the correctly specified propensity under complete randomisation.
pub fn fit_propensity_constant(ds: &Dataset) -> Result<PropensityFit> {
    let n = ds.n();
    if n == 0 {
        return Err(CdeError::InvalidData("empty dataset".into()));
    }
    let treated = ds.treated_count();
    if treated == 0 {
        return Err(CdeError::SingleArm(0));
    }
    if treated == n {
        return Err(CdeError::SingleArm(1));
    }
    let abar = treated as f64 / n as f64;
    Ok(PropensityFit {
        kind: PropensityKind::ConstantMean,
        alpha: vec![abar],
        covariates: Vec::new(),
        fitted: vec![abar; n],
        iterations: 0,
    })
}

fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(design: &DMatrix<f64>, a: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = design * beta;
    eta.iter()
        .zip(a.iter())
        .map(|(&t, &ai)| {
            // log(1 + e^t) computed stably
            let softplus = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
            ai * t - softplus
        })
        .sum()
}

/// Logistic-regression MLE by Newton–Raphson on an intercept plus the
/// selected covariate columns.
pub fn fit_propensity_logistic(ds: &Dataset, covariates: &[usize]) -> Result<PropensityFit> {
    let n = ds.n();
    if let Some(&k) = covariates.iter().find(|&&k| k >= ds.d_x()) {
        return Err(CdeError::IndexOutOfRange { index: k, dim: ds.d_x() });
    }
    fit_propensity_constant(ds)?;
    let p = covariates.len() + 1;
    let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { ds.covariates()[covariates[j - 1]][i] });
    let a = DVector::from_column_slice(ds.a());

    // Rank check up front so collinearity is reported as such, not as divergence.
    ols(&design, &a, "propensity design")?;

    let mut beta = DVector::zeros(p);
    let abar = ds.treated_count() as f64 / n as f64;
    beta[0] = (abar / (1.0 - abar)).ln();
    let mut ll = log_likelihood(&design, &a, &beta);

    for iter in 1..=NEWTON_MAX_ITER {
        let eta = &design * &beta;
        let mu = eta.map(expit);
        let score = design.tr_mul(&(&a - &mu));
        if score.amax() <= SCORE_TOL {
            return finish(beta, &design, covariates, iter - 1);
        }
        let w = mu.map(|m| m * (1.0 - m));
        let weighted = DMatrix::from_fn(n, p, |i, j| design[(i, j)] * w[i]);
        let info = design.tr_mul(&weighted);
        let (step, _) = linalg::solve_checked(&info, &score, |_| {
            CdeError::Separation("information matrix became singular (fitted values at 0 or 1)".into())
        })?;
        let mut t = 1.0;
        let mut candidate = &beta + &step * t;
        let mut cand_ll = log_likelihood(&design, &a, &candidate);
        while cand_ll < ll - 1e-12 * ll.abs().max(1.0) && t > 1e-6 {
            t *= 0.5;
            candidate = &beta + &step * t;
            cand_ll = log_likelihood(&design, &a, &candidate);
        }
        beta = candidate;
        ll = cand_ll;
        if beta.amax() > SEPARATION_NORM {
            return Err(CdeError::Separation(format!(
                "coefficients diverged (sup-norm {:.1} after {iter} iterations)",
                beta.amax()
            )));
        }
        // Rounding can stall the score just above the absolute tolerance on
        // large n; accept once the Newton step itself is negligible.
        if step.amax() * t < 1e-13 * (1.0 + beta.amax()) {
            let mu = (&design * &beta).map(expit);
            let score = design.tr_mul(&(&a - &mu));
            if score.amax() <= SCORE_TOL * n as f64 {
                return finish(beta, &design, covariates, iter);
            }
        }
    }
    Err(CdeError::Separation(format!(
        "Newton-Raphson did not converge within {NEWTON_MAX_ITER} iterations"
    )))
}

fn finish(beta: DVector<f64>, design: &DMatrix<f64>, covariates: &[usize], iterations: usize) -> Result<PropensityFit> {
    let fitted: Vec<f64> = (design * &beta).iter().map(|&t| expit(t)).collect();
    if fitted.iter().any(|&e| e <= 1e-12 || e >= 1.0 - 1e-12) {
        return Err(CdeError::Separation("fitted probabilities reached 0 or 1".into()));
    }
    Ok(PropensityFit {
        kind: PropensityKind::Logistic,
        alpha: beta.iter().copied().collect(),
        covariates: covariates.to_vec(),
        fitted,
        iterations,
    })
}

/// Which units enter the baseline-outcome fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineSubset {
    /// `{A = 0, M = 0}`, the correct stratum.
    #[default]
    Baseline,
    /// `{A = 0}` ignoring the mediator: a deliberately misspecified fit.
    UnexposedOnly,
}

/// Linear baseline outcome `φ(x; ζ) = ζ0 + Σ ζ_k x_k` over selected covariates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhiSpec {
    pub covariates: Vec<usize>,
    pub subset: BaselineSubset,
}

impl PhiSpec {
    pub fn intercept() -> Self {
        Self::default()
    }

    pub fn misspecified() -> Self {
        Self {
            covariates: Vec::new(),
            subset: BaselineSubset::UnexposedOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcomeFit {
    pub zeta: Vec<f64>,
    pub covariates: Vec<usize>,
    pub fitted: Vec<f64>,
    pub n_baseline: usize,
}

impl BaselineOutcomeFit {
    /// The same fit with the intercept moved by `delta`; used to build
    /// deliberately biased baselines.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.zeta[0] += delta;
        out.fitted.iter_mut().for_each(|f| *f += delta);
        out
    }
}

fn phi_row<'a>(ds: &'a Dataset, covariates: &'a [usize], i: usize) -> impl Iterator<Item = f64> + 'a {
    std::iter::once(1.0).chain(covariates.iter().map(move |&k| ds.covariates()[k][i]))
}

/// Solves `Σ φ̇_i (y_i − φ_i) 1{subset} = 0`, which for linear `φ` is OLS on the
/// subset. Fitted values are returned for every unit.
pub fn fit_baseline_outcome(ds: &Dataset, phi: &PhiSpec) -> Result<BaselineOutcomeFit> {
    if let Some(&k) = phi.covariates.iter().find(|&&k| k >= ds.d_x()) {
        return Err(CdeError::IndexOutOfRange { index: k, dim: ds.d_x() });
    }
    let rows: Vec<usize> = (0..ds.n())
        .filter(|&i| match phi.subset {
            BaselineSubset::Baseline => ds.is_baseline(i),
            BaselineSubset::UnexposedOnly => ds.a()[i] == 0.0,
        })
        .collect();
    if rows.is_empty() {
        return Err(CdeError::EmptyBaseline);
    }
    let p = phi.covariates.len() + 1;
    let mut design = DMatrix::zeros(rows.len(), p);
    for (r, &i) in rows.iter().enumerate() {
        for (j, v) in phi_row(ds, &phi.covariates, i).enumerate() {
            design[(r, j)] = v;
        }
    }
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| ds.y()[i]));
    let zeta = ols(&design, &y, "baseline outcome design")?;
    let fitted = (0..ds.n())
        .map(|i| phi_row(ds, &phi.covariates, i).zip(zeta.iter()).map(|(v, z)| v * z).sum())
        .collect();
    Ok(BaselineOutcomeFit {
        zeta: zeta.iter().copied().collect(),
        covariates: phi.covariates.clone(),
        fitted,
        n_baseline: rows.len(),
    })
}
