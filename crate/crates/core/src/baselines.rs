//! Comparison estimators: the ordinary structural mean model (no external
//! instruments) and two-stage least squares on a predicted mediator.
//!
//! Both reuse the closed-form estimating-equation solver and differ from the
//! proposed estimator only in the instrument matrix:
//!
//! * ordinary SMM: each unit is its own instrument, `G_Jᵀ τ_i`;
//! * 2SLS: `τ(A_i, M̂_i, X_i)` where `M̂` is the first-stage OLS prediction of
//!   `M` from `(1, Z, X)`.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::Result;
use crate::estimator::{fit_with_instruments, FittedCde};
use crate::linalg::ols;
use crate::model::{CandidateModel, DesignMatrices, EffectModelSpec};
use crate::nuisance::{BaselineOutcomeFit, PropensityFit};
use crate::selection::{select_with, CriterionConfig, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    OrdinarySmm,
    TwoStageLs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit {
    pub method: BaselineMethod,
    pub fit: FittedCde,
    /// First-stage coefficients per mediator component, `(1, Z, X)` order.
    pub stage1: Option<Vec<Vec<f64>>>,
}

pub fn ordinary_smm_fit(
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    model: &CandidateModel,
) -> Result<BaselineFit> {
    crate::model::selection_matrix(model, design.p())?;
    let own = design.tau.select_columns(model.indices());
    Ok(BaselineFit {
        method: BaselineMethod::OrdinarySmm,
        fit: fit_with_instruments(design, ps, bl, model.indices(), &own)?,
        stage1: None,
    })
}

/// Ordinary-SMM fits scored with the same criterion as the proposed method.
pub fn ordinary_smm_select(
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    config: &CriterionConfig,
) -> Result<SelectionResult> {
    select_with(design, ps, bl, config, |m| ordinary_smm_fit(design, ps, bl, m).map(|b| b.fit))
}

/// Coefficients and fitted values of the OLS of each mediator on `(1, Z, X)`.
pub fn mediator_first_stage(ds: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = ds.n();
    let cols: Vec<&Vec<f64>> = ds.instruments().iter().chain(ds.covariates()).collect();
    let design = DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
    let mut coefs = Vec::with_capacity(ds.d_m());
    let mut fitted = Vec::with_capacity(ds.d_m());
    for m in ds.mediators() {
        let beta = ols(&design, &DVector::from_column_slice(m), "2SLS first stage")?;
        fitted.push((&design * &beta).iter().copied().collect());
        coefs.push(beta.iter().copied().collect());
    }
    Ok((coefs, fitted))
}

/// Two-stage least squares with stage-2 model `G_Jᵀ τ`.
pub fn two_stage_least_squares(
    ds: &Dataset,
    design: &DesignMatrices,
    ps: &PropensityFit,
    bl: &BaselineOutcomeFit,
    model: &CandidateModel,
) -> Result<BaselineFit> {
    crate::model::selection_matrix(model, design.p())?;
    let (coefs, m_hat) = mediator_first_stage(ds)?;
    let spec: &EffectModelSpec = &design.spec;
    let mut inst = DMatrix::zeros(ds.n(), spec.len());
    for i in 0..ds.n() {
        let m_row: Vec<f64> = m_hat.iter().map(|c| c[i]).collect();
        let row = spec.evaluate(ds.a()[i], &m_row, &ds.covariate_row(i));
        for (k, v) in row.into_iter().enumerate() {
            inst[(i, k)] = v;
        }
    }
    Ok(BaselineFit {
        method: BaselineMethod::TwoStageLs,
        fit: fit_with_instruments(design, ps, bl, model.indices(), &inst.select_columns(model.indices()))?,
        stage1: Some(coefs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnRoles;
    use crate::model::{build_design, InstrumentBasis};
    use crate::nuisance::{fit_baseline_outcome, fit_propensity_constant, PhiSpec};
    use crate::selection::fit_submodel;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn roles() -> ColumnRoles {
        ColumnRoles {
            exposure: "a".into(),
            mediators: vec!["m".into()],
            covariates: vec!["x".into()],
            instruments: vec!["z".into()],
            outcome: "y".into(),
        }
    }

    fn data(seed: u64, n: usize, exact: bool) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut a, mut m, mut x, mut z, mut y) = (vec![], vec![], vec![], vec![], vec![]);
        for i in 0..n {
            let ai = (i % 2) as f64;
            let zi = if i % 7 == 0 { 0.0 } else { rng.random::<f64>() * 3.0 };
            let xi = rng.random::<f64>() - 0.5;
            let mi = if exact || zi == 0.0 { 5.0 * zi } else { 5.0 * zi + 2.0 * rng.random::<f64>() };
            let noise = if exact { 0.0 } else { rng.random::<f64>() - 0.5 };
            a.push(ai);
            m.push(mi);
            x.push(xi);
            z.push(zi);
            y.push(2.0 * ai + 0.4 * mi + 42.0 + noise);
        }
        Dataset::new(roles(), a, vec![m], vec![x], vec![z], y).unwrap()
    }

    fn parts(ds: &Dataset) -> (DesignMatrices, PropensityFit, BaselineOutcomeFit) {
        let spec = EffectModelSpec::parse(&["a", "a*m"], &["m"], ds.roles()).unwrap();
        let iv = InstrumentBasis::parse(&["1", "z", "z*z"], None, ds.roles()).unwrap();
        (
            build_design(ds, &spec, &iv).unwrap(),
            fit_propensity_constant(ds).unwrap(),
            fit_baseline_outcome(ds, &PhiSpec::intercept()).unwrap(),
        )
    }

    #[test]
    fn tsls_noiseless_cde_is_constant() {
        let ds = data(1, 300, true);
        let (d, ps, bl) = parts(&ds);
        let b = two_stage_least_squares(&ds, &d, &ps, &bl, &CandidateModel::full(3, "M2").unwrap()).unwrap();
        for m in [0.0, 10.0, 20.0] {
            assert_relative_eq!(b.fit.cde(&[m]).unwrap().0, 2.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn first_stage_residuals_are_orthogonal() {
        let ds = data(2, 400, false);
        let (_, fitted) = mediator_first_stage(&ds).unwrap();
        let regs: [Vec<f64>; 3] = [vec![1.0; ds.n()], ds.instruments()[0].clone(), ds.covariates()[0].clone()];
        for r in &regs {
            let dot: f64 = (0..ds.n()).map(|i| (ds.mediators()[0][i] - fitted[0][i]) * r[i]).sum();
            assert!(dot.abs() < 1e-8, "{dot}");
        }
    }

    #[test]
    fn smm_with_external_instruments_is_the_submodel_fit() {
        let ds = data(3, 300, false);
        let (d, ps, bl) = parts(&ds);
        let j = CandidateModel::new(vec![0, 2], "J").unwrap();
        let proposed = fit_submodel(&d, &ps, &bl, &j).unwrap();
        let shared = fit_with_instruments(&d, &ps, &bl, j.indices(), &d.instruments.select_columns(j.indices())).unwrap();
        assert_eq!(proposed, shared);
    }

    #[test]
    fn baselines_are_deterministic() {
        let ds = data(4, 300, false);
        let (d, ps, bl) = parts(&ds);
        let j = CandidateModel::new(vec![0, 1], "J").unwrap();
        assert_eq!(ordinary_smm_fit(&d, &ps, &bl, &j).unwrap(), ordinary_smm_fit(&d, &ps, &bl, &j).unwrap());
        assert_eq!(
            two_stage_least_squares(&ds, &d, &ps, &bl, &j).unwrap(),
            two_stage_least_squares(&ds, &d, &ps, &bl, &j).unwrap()
        );
    }

    #[test]
    fn smm_recovers_truth_without_confounding() {
        let ds = data(5, 2000, false);
        let (d, ps, bl) = parts(&ds);
        let j = CandidateModel::new(vec![0, 2], "J").unwrap();
        let b = ordinary_smm_fit(&d, &ps, &bl, &j).unwrap();
        for (k, truth) in [2.0, 0.4].into_iter().enumerate() {
            assert!((b.fit.xi_hat[k] - truth).abs() < 4.0 * b.fit.cov[(k, k)].sqrt());
        }
    }
}
