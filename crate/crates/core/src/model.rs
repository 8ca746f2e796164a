//! Effect-model basis, instrument basis and candidate-model bookkeeping.
//!
//! The effect model is `τ(a, m, x)ᵀ ξ = τ1(a, m, x)ᵀ ξ1 + τ2(m, x)ᵀ ξ2`, where every
//! `τ1` term vanishes at `a = 0` and every `τ2` term vanishes at `m = 0`. Terms are
//! products of the exposure, mediator components and covariates; the vanishing
//! constraints are enforced when a spec is built, so every design row satisfies
//! them exactly.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::data::{ColumnRoles, Dataset};
use crate::error::{CdeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    Exposure,
    Mediator(usize),
    Covariate(usize),
}

/// A product of factors. Stored in canonical (sorted) order so that `a*m` and
/// `m*a` are the same term.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term {
    factors: Vec<Factor>,
    label: String,
}

impl Term {
    pub fn new(mut factors: Vec<Factor>, label: impl Into<String>) -> Self {
        factors.sort();
        Self {
            factors,
            label: label.into(),
        }
    }

    /// Parses `name*name*...` against the role names. The exposure may also be
    /// written `a`.
    pub fn parse(text: &str, roles: &ColumnRoles) -> Result<Self> {
        let invalid = |reason: &str| CdeError::InvalidTerm {
            term: text.to_string(),
            reason: reason.to_string(),
        };
        let mut factors = Vec::new();
        for raw in text.split('*') {
            let name = raw.trim();
            if name.is_empty() {
                return Err(invalid("empty factor"));
            }
            let factor = if name == roles.exposure || name == "a" {
                Factor::Exposure
            } else if let Some(j) = roles.mediators.iter().position(|c| c == name) {
                Factor::Mediator(j)
            } else if let Some(k) = roles.covariates.iter().position(|c| c == name) {
                Factor::Covariate(k)
            } else {
                return Err(CdeError::UnknownColumn(name.to_string()));
            };
            factors.push(factor);
        }
        let label = text.split('*').map(str::trim).collect::<Vec<_>>().join("*");
        Ok(Self::new(factors, label))
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_exposure(&self) -> bool {
        self.factors.contains(&Factor::Exposure)
    }

    pub fn has_mediator(&self) -> bool {
        self.factors.iter().any(|f| matches!(f, Factor::Mediator(_)))
    }

    pub fn evaluate(&self, a: f64, m: &[f64], x: &[f64]) -> f64 {
        self.factors.iter().fold(1.0, |acc, f| {
            acc * match *f {
                Factor::Exposure => a,
                Factor::Mediator(j) => m[j],
                Factor::Covariate(k) => x[k],
            }
        })
    }

    fn check_dims(&self, d_m: usize, d_x: usize) -> Result<()> {
        for f in &self.factors {
            match *f {
                Factor::Mediator(j) if j >= d_m => {
                    return Err(CdeError::UnknownColumn(format!("mediator #{j} in `{}`", self.label)))
                }
                Factor::Covariate(k) if k >= d_x => {
                    return Err(CdeError::UnknownColumn(format!("covariate #{k} in `{}`", self.label)))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// The `τ = (τ1, τ2)` basis of the effect model and so the layout of `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectModelSpec {
    tau1: Vec<Term>,
    tau2: Vec<Term>,
}

impl EffectModelSpec {
    pub fn new(tau1: Vec<Term>, tau2: Vec<Term>) -> Result<Self> {
        if tau1.is_empty() && tau2.is_empty() {
            return Err(CdeError::Config("effect model needs at least one term".into()));
        }
        for t in &tau1 {
            let exposures = t.factors.iter().filter(|f| **f == Factor::Exposure).count();
            if exposures != 1 {
                return Err(CdeError::InvalidTerm {
                    term: t.label.clone(),
                    reason: "a tau1 term must contain the exposure exactly once".into(),
                });
            }
        }
        for t in &tau2 {
            if t.has_exposure() {
                return Err(CdeError::InvalidTerm {
                    term: t.label.clone(),
                    reason: "a tau2 term must not contain the exposure".into(),
                });
            }
            if !t.has_mediator() {
                return Err(CdeError::InvalidTerm {
                    term: t.label.clone(),
                    reason: "a tau2 term must contain a mediator so that it vanishes at m = 0".into(),
                });
            }
        }
        let mut seen = HashSet::new();
        for t in tau1.iter().chain(&tau2) {
            if !seen.insert(t.factors.clone()) {
                return Err(CdeError::InvalidTerm {
                    term: t.label.clone(),
                    reason: "duplicate term".into(),
                });
            }
        }
        Ok(Self { tau1, tau2 })
    }

    pub fn parse(tau1: &[&str], tau2: &[&str], roles: &ColumnRoles) -> Result<Self> {
        let parse_all = |items: &[&str]| items.iter().map(|t| Term::parse(t, roles)).collect::<Result<Vec<_>>>();
        Self::new(parse_all(tau1)?, parse_all(tau2)?)
    }

    /// Number of parameters `L`.
    pub fn len(&self) -> usize {
        self.tau1.len() + self.tau2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tau1_len(&self) -> usize {
        self.tau1.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.tau1.iter().chain(&self.tau2)
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms().map(|t| t.label.clone()).collect()
    }

    /// Position of the term with the given label (or equivalent factor set).
    pub fn index_of(&self, text: &str, roles: &ColumnRoles) -> Result<usize> {
        let probe = Term::parse(text, roles)?;
        self.terms()
            .position(|t| t.factors == probe.factors)
            .ok_or_else(|| CdeError::InvalidCandidate(format!("term `{text}` is not in the effect model")))
    }

    pub fn check_dims(&self, d_m: usize, d_x: usize) -> Result<()> {
        self.terms().try_for_each(|t| t.check_dims(d_m, d_x))
    }

    /// `τ(a, m, x)`, the `τ1` block followed by the `τ2` block.
    pub fn evaluate(&self, a: f64, m: &[f64], x: &[f64]) -> Vec<f64> {
        self.terms().map(|t| t.evaluate(a, m, x)).collect()
    }

    /// Contrast `c(m)` with `c(m)ᵀξ = Δ(m)`: the `τ1` block at `a = 1` with
    /// covariates at `x_bar`, zeros for the `τ2` block (it cancels between arms).
    pub fn contrast(&self, m: &[f64], x_bar: &[f64]) -> Vec<f64> {
        self.tau1
            .iter()
            .map(|t| t.evaluate(1.0, m, x_bar))
            .chain(self.tau2.iter().map(|_| 0.0))
            .collect()
    }
}

/// One factor of an instrument-basis column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InstrumentFactor {
    Raw(usize),
    Covariate(usize),
    Score,
}

/// A product of instrument factors; the empty product is the constant column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrumentColumn {
    factors: Vec<InstrumentFactor>,
    label: String,
}

impl InstrumentColumn {
    pub fn constant() -> Self {
        Self {
            factors: Vec::new(),
            label: "1".into(),
        }
    }

    pub fn new(mut factors: Vec<InstrumentFactor>, label: impl Into<String>) -> Self {
        factors.sort();
        Self {
            factors,
            label: label.into(),
        }
    }

    /// Parses `1`, `score`, a raw-instrument or covariate name, or a `*` product.
    pub fn parse(text: &str, roles: &ColumnRoles) -> Result<Self> {
        let text = text.trim();
        if text == "1" {
            return Ok(Self::constant());
        }
        let mut factors = Vec::new();
        for raw in text.split('*') {
            let name = raw.trim();
            let f = if name == "score" {
                InstrumentFactor::Score
            } else if let Some(j) = roles.instruments.iter().position(|c| c == name) {
                InstrumentFactor::Raw(j)
            } else if let Some(k) = roles.covariates.iter().position(|c| c == name) {
                InstrumentFactor::Covariate(k)
            } else {
                return Err(CdeError::UnknownColumn(name.to_string()));
            };
            factors.push(f);
        }
        Ok(Self::new(factors, text))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn uses_score(&self) -> bool {
        self.factors.contains(&InstrumentFactor::Score)
    }

    fn evaluate(&self, z: &[f64], x: &[f64], score: f64) -> f64 {
        self.factors.iter().fold(1.0, |acc, f| {
            acc * match *f {
                InstrumentFactor::Raw(j) => z[j],
                InstrumentFactor::Covariate(k) => x[k],
                InstrumentFactor::Score => score,
            }
        })
    }
}

/// Weighted allele score over a subset of the raw instrument columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AlleleScoreSpec {
    pub columns: Vec<usize>,
    pub weights: Option<Vec<f64>>,
}

/// Working instrument vector `Z_i`, one generator per effect-model parameter.
///
/// Column `k` is paired with parameter `k` of the effect model: submodels use
/// `G_Jᵀ Z`, so the basis must be ordered congruently with the `τ` terms.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentBasis {
    columns: Vec<InstrumentColumn>,
    score: Option<AlleleScoreSpec>,
}

impl InstrumentBasis {
    pub fn new(columns: Vec<InstrumentColumn>, score: Option<AlleleScoreSpec>) -> Result<Self> {
        if columns.is_empty() {
            return Err(CdeError::Config("instrument basis is empty".into()));
        }
        if score.is_none() && columns.iter().any(InstrumentColumn::uses_score) {
            return Err(CdeError::Config("instrument basis uses `score` but no allele score is defined".into()));
        }
        Ok(Self { columns, score })
    }

    pub fn parse(columns: &[&str], score: Option<AlleleScoreSpec>, roles: &ColumnRoles) -> Result<Self> {
        let cols = columns
            .iter()
            .map(|c| InstrumentColumn::parse(c, roles))
            .collect::<Result<Vec<_>>>()?;
        Self::new(cols, score)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.label.clone()).collect()
    }

    pub fn score(&self) -> Option<&AlleleScoreSpec> {
        self.score.as_ref()
    }

    fn check_dims(&self, d_z: usize, d_x: usize) -> Result<()> {
        for c in &self.columns {
            for f in &c.factors {
                match *f {
                    InstrumentFactor::Raw(j) if j >= d_z => {
                        return Err(CdeError::UnknownColumn(format!("instrument #{j} in `{}`", c.label)))
                    }
                    InstrumentFactor::Covariate(k) if k >= d_x => {
                        return Err(CdeError::UnknownColumn(format!("covariate #{k} in `{}`", c.label)))
                    }
                    _ => {}
                }
            }
        }
        if let Some(s) = &self.score {
            if let Some(&j) = s.columns.iter().find(|&&j| j >= d_z) {
                return Err(CdeError::UnknownColumn(format!("instrument #{j} in allele score")));
            }
        }
        Ok(())
    }

    fn score_column(&self, ds: &Dataset) -> Result<Option<Vec<f64>>> {
        match &self.score {
            None => Ok(None),
            Some(s) => {
                let cols: Vec<&[f64]> = s.columns.iter().map(|&j| ds.instruments()[j].as_slice()).collect();
                allele_score(&cols, s.weights.as_deref()).map(Some)
            }
        }
    }
}

/// Weighted per-unit sum of instrument columns; weights default to 1.
pub fn allele_score(columns: &[&[f64]], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let first = columns
        .first()
        .ok_or_else(|| CdeError::Config("allele score needs at least one column".into()))?;
    let n = first.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(CdeError::Dimension("allele-score columns differ in length".into()));
    }
    if let Some(w) = weights {
        if w.len() != columns.len() {
            return Err(CdeError::Dimension(format!(
                "allele score has {} columns but {} weights",
                columns.len(),
                w.len()
            )));
        }
    }
    Ok((0..n)
        .map(|i| {
            columns
                .iter()
                .enumerate()
                .map(|(j, c)| weights.map_or(1.0, |w| w[j]) * c[i])
                .sum()
        })
        .collect())
}

/// A candidate submodel `J`: sorted, 0-based parameter indices into `ξ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidateModel {
    indices: Vec<usize>,
    label: String,
}

impl CandidateModel {
    pub fn new(indices: Vec<usize>, label: impl Into<String>) -> Result<Self> {
        if indices.is_empty() {
            return Err(CdeError::InvalidCandidate("J must be nonempty".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CdeError::InvalidCandidate(format!(
                "indices {indices:?} must be strictly increasing"
            )));
        }
        Ok(Self {
            indices,
            label: label.into(),
        })
    }

    /// Builds `J` from term names of the full effect model.
    pub fn from_terms(spec: &EffectModelSpec, roles: &ColumnRoles, terms: &[&str], label: impl Into<String>) -> Result<Self> {
        let mut idx = terms.iter().map(|t| spec.index_of(t, roles)).collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        Self::new(idx, label)
    }

    pub fn full(p: usize, label: impl Into<String>) -> Result<Self> {
        Self::new((0..p).collect(), label)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, other: &CandidateModel) -> bool {
        other.indices.iter().all(|i| self.indices.contains(i))
    }
}

/// `G_J`: the `p × |J|` submatrix of `I_p` whose `k`-th column is `e_{J[k]}`.
pub fn selection_matrix(model: &CandidateModel, p: usize) -> Result<DMatrix<f64>> {
    if let Some(&bad) = model.indices.iter().find(|&&j| j >= p) {
        return Err(CdeError::IndexOutOfRange { index: bad, dim: p });
    }
    let mut g = DMatrix::zeros(p, model.len());
    for (k, &j) in model.indices.iter().enumerate() {
        g[(j, k)] = 1.0;
    }
    Ok(g)
}

/// Per-unit `τ_i` and `Z_i` stacked as rows, plus the exposure and outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub spec: EffectModelSpec,
    pub tau: DMatrix<f64>,
    pub instruments: DMatrix<f64>,
    pub a: DVector<f64>,
    pub y: DVector<f64>,
    pub x_mean: Vec<f64>,
}

impl DesignMatrices {
    pub fn n(&self) -> usize {
        self.tau.nrows()
    }

    pub fn p(&self) -> usize {
        self.tau.ncols()
    }

    /// Same design with a different instrument matrix (one row per unit, `L` columns).
    pub fn with_instruments(&self, instruments: DMatrix<f64>) -> Result<Self> {
        if instruments.shape() != self.tau.shape() {
            return Err(CdeError::Dimension(format!(
                "instrument matrix is {:?}, expected {:?}",
                instruments.shape(),
                self.tau.shape()
            )));
        }
        Ok(Self {
            instruments,
            ..self.clone()
        })
    }
}

pub fn build_design(ds: &Dataset, spec: &EffectModelSpec, iv: &InstrumentBasis) -> Result<DesignMatrices> {
    if iv.len() != spec.len() {
        return Err(CdeError::Dimension(format!(
            "instrument basis has {} columns but the effect model has L = {}",
            iv.len(),
            spec.len()
        )));
    }
    spec.check_dims(ds.d_m(), ds.d_x())?;
    iv.check_dims(ds.d_z(), ds.d_x())?;
    let n = ds.n();
    let l = spec.len();
    let score = iv.score_column(ds)?;
    let mut tau = DMatrix::zeros(n, l);
    let mut z = DMatrix::zeros(n, l);
    for i in 0..n {
        let m = ds.mediator_row(i);
        let x = ds.covariate_row(i);
        let zr = ds.instrument_row(i);
        let s = score.as_ref().map_or(0.0, |s| s[i]);
        for (k, t) in spec.terms().enumerate() {
            tau[(i, k)] = t.evaluate(ds.a()[i], &m, &x);
        }
        for (k, c) in iv.columns.iter().enumerate() {
            z[(i, k)] = c.evaluate(&zr, &x, s);
        }
    }
    Ok(DesignMatrices {
        spec: spec.clone(),
        tau,
        instruments: z,
        a: DVector::from_column_slice(ds.a()),
        y: DVector::from_column_slice(ds.y()),
        x_mean: ds.covariate_means(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roles(dx: usize) -> ColumnRoles {
        ColumnRoles {
            exposure: "a".into(),
            mediators: vec!["m".into()],
            covariates: (0..dx).map(|k| if dx == 1 { "x".to_string() } else { format!("x{}", k + 1) }).collect(),
            instruments: vec!["z1".into(), "z2".into()],
            outcome: "y".into(),
        }
    }

    fn one_unit(a: f64, m: f64, x: Option<f64>) -> Dataset {
        let dx = usize::from(x.is_some());
        Dataset::new(
            roles(dx),
            vec![a],
            vec![vec![m]],
            x.map(|v| vec![vec![v]]).unwrap_or_default(),
            vec![vec![0.5], vec![1.5]],
            vec![0.0],
        )
        .unwrap()
    }

    fn basis(l: usize, r: &ColumnRoles) -> InstrumentBasis {
        let cols = ["1", "z1", "z2", "z1*z2"];
        InstrumentBasis::parse(&cols[..l], None, r).unwrap()
    }

    #[test]
    fn tau1_vanishes_when_unexposed() {
        let ds = one_unit(0.0, 5.0, None);
        let spec = EffectModelSpec::parse(&["a", "a*m"], &["m"], ds.roles()).unwrap();
        let d = build_design(&ds, &spec, &basis(3, ds.roles())).unwrap();
        assert_eq!(d.tau.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 5.0]);
    }

    #[test]
    fn tau2_vanishes_without_mediator() {
        let ds = one_unit(1.0, 0.0, None);
        let spec = EffectModelSpec::parse(&["a", "a*m"], &["m"], ds.roles()).unwrap();
        let d = build_design(&ds, &spec, &basis(3, ds.roles())).unwrap();
        assert_eq!(d.tau.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn products_with_covariates() {
        let ds = one_unit(1.0, 10.0, Some(2.0));
        let spec = EffectModelSpec::parse(&["a", "a*m"], &["m", "m*x"], ds.roles()).unwrap();
        let d = build_design(&ds, &spec, &basis(4, ds.roles())).unwrap();
        assert_eq!(d.tau.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 10.0, 10.0, 20.0]);
        assert_eq!(
            d.instruments.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.5, 1.5, 0.75]
        );
    }

    #[test]
    fn basis_length_must_match() {
        let ds = one_unit(1.0, 1.0, None);
        let spec = EffectModelSpec::parse(&["a", "a*m"], &["m"], ds.roles()).unwrap();
        assert!(matches!(
            build_design(&ds, &spec, &basis(2, ds.roles())),
            Err(CdeError::Dimension(_))
        ));
    }

    #[test]
    fn unknown_names_are_rejected() {
        let r = roles(0);
        assert!(matches!(Term::parse("a*w", &r), Err(CdeError::UnknownColumn(_))));
        assert!(matches!(InstrumentColumn::parse("z9", &r), Err(CdeError::UnknownColumn(_))));
    }

    #[test]
    fn vanishing_constraints_enforced_at_construction() {
        let r = roles(1);
        assert!(EffectModelSpec::parse(&["m"], &[], &r).is_err());
        assert!(EffectModelSpec::parse(&["a*a"], &[], &r).is_err());
        assert!(EffectModelSpec::parse(&["a"], &["x"], &r).is_err());
        assert!(EffectModelSpec::parse(&["a"], &["a*m"], &r).is_err());
        assert!(EffectModelSpec::parse(&["a", "a"], &[], &r).is_err());
        assert!(EffectModelSpec::parse(&["a*m", "m*a"], &[], &r).is_err());
    }

    #[test]
    fn selection_matrix_examples() {
        let g = selection_matrix(&CandidateModel::new(vec![0, 1], "J").unwrap(), 3).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
        let g = selection_matrix(&CandidateModel::new(vec![0, 2], "J").unwrap(), 3).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
        let g = selection_matrix(&CandidateModel::full(3, "full").unwrap(), 3).unwrap();
        assert_eq!(g, DMatrix::identity(3, 3));
    }

    #[test]
    fn selection_matrix_out_of_range() {
        let j = CandidateModel::new(vec![0, 3], "J").unwrap();
        assert_eq!(
            selection_matrix(&j, 3).unwrap_err(),
            CdeError::IndexOutOfRange { index: 3, dim: 3 }
        );
    }

    #[test]
    fn candidate_indices_must_increase() {
        assert!(CandidateModel::new(vec![], "J").is_err());
        assert!(CandidateModel::new(vec![1, 0], "J").is_err());
        assert!(CandidateModel::new(vec![1, 1], "J").is_err());
    }

    #[test]
    fn allele_score_examples() {
        let c1 = [1.0, 2.0];
        let c2 = [0.0, 1.0];
        assert_eq!(allele_score(&[&c1, &c2], None).unwrap(), vec![1.0, 3.0]);
        assert_eq!(allele_score(&[&c1], Some(&[2.0])).unwrap(), vec![2.0, 4.0]);
        let c3 = [5.0, 7.0];
        assert_eq!(
            allele_score(&[&c1, &c2, &c3], Some(&[1.0, 0.0, 1.0])).unwrap(),
            vec![6.0, 9.0]
        );
        assert!(allele_score(&[], None).is_err());
        assert!(allele_score(&[&c1], Some(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn contrast_drops_tau2_and_uses_x_bar() {
        let r = roles(1);
        let spec = EffectModelSpec::parse(&["a", "a*m", "a*m*x"], &["m", "m*x"], &r).unwrap();
        assert_eq!(spec.contrast(&[10.0], &[0.5]), vec![1.0, 10.0, 5.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn design_rows_respect_vanishing_constraints(
            rows in prop::collection::vec((0u8..2, prop_oneof![Just(0.0), 0.0f64..20.0], -3.0f64..3.0), 1..40)
        ) {
            let r = roles(1);
            let n = rows.len();
            let ds = Dataset::new(
                r.clone(),
                rows.iter().map(|t| f64::from(t.0)).collect(),
                vec![rows.iter().map(|t| t.1).collect()],
                vec![rows.iter().map(|t| t.2).collect()],
                vec![vec![1.0; n], vec![2.0; n]],
                vec![0.0; n],
            ).unwrap();
            let spec = EffectModelSpec::parse(&["a", "a*m", "a*m*x"], &["m", "m*x"], &r).unwrap();
            let iv = InstrumentBasis::parse(&["1", "z1", "z2", "x", "z1*x"], None, &r).unwrap();
            let d = build_design(&ds, &spec, &iv).unwrap();
            let d2 = build_design(&ds, &spec, &iv).unwrap();
            prop_assert_eq!(&d, &d2);
            for i in 0..n {
                if ds.a()[i] == 0.0 {
                    for k in 0..3 { prop_assert_eq!(d.tau[(i, k)], 0.0); }
                }
                if ds.mediators()[0][i] == 0.0 {
                    for k in 3..5 { prop_assert_eq!(d.tau[(i, k)], 0.0); }
                }
            }
        }

        #[test]
        fn selection_extracts_indexed_entries(v in prop::collection::vec(-100.0f64..100.0, 5), mask in 1u8..32) {
            let idx: Vec<usize> = (0..5).filter(|k| mask & (1 << k) != 0).collect();
            let j = CandidateModel::new(idx.clone(), "J").unwrap();
            let g = selection_matrix(&j, 5).unwrap();
            let picked = g.transpose() * DVector::from_vec(v.clone());
            for (k, &i) in idx.iter().enumerate() {
                prop_assert_eq!(picked[k], v[i]);
            }
            prop_assert_eq!(g.transpose() * &g, DMatrix::identity(idx.len(), idx.len()));
        }
    }
}
