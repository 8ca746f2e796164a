//! Data-generating mechanism, scenario runner and Monte Carlo metrics.
//!
//! Mechanism (per unit):
//!
//! ```text
//! U ~ N(0, 2),  A ~ Ber(0.5),  Z1, Z2 ~ Gamma(shape 2, rate 4),  X ~ N(0, 1)
//! M̃ ~ Bin(4, expit(k·(−1 + Z1 + Z2 + 0.4U + 0.4AU))),  M = 5M̃
//! Y00 = 42 + 0.2U + ε,  ε ~ N(0, 2),   Y = 2A + 0.4M + Y00
//! ```
//!
//! `k` is the mediator logit scale. With `k = 1` the mediator is far more
//! diffuse than the published summary moments; `k = 5` matches them (mean 9.8,
//! SD 8.7, Cor(M, Z1+Z2) 0.44, Pr(Y > 48) 0.43) and is the default.
//!
//! Each replication draws from its own ChaCha stream keyed by `(seed, rep)`, so
//! results do not depend on how the reps are scheduled across threads.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ordinary_smm_fit, ordinary_smm_select, two_stage_least_squares};
use crate::data::{ColumnRoles, Dataset};
use crate::error::{CdeError, Result};
use crate::estimator::{FittedCde, Interval};
use crate::model::{build_design, AlleleScoreSpec, CandidateModel, EffectModelSpec, InstrumentBasis};
use crate::nuisance::{fit_baseline_outcome, fit_propensity_constant, PhiSpec};
use crate::selection::{fit_submodel, select, CriterionConfig, Penalty};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgmParams {
    pub u_var: f64,
    pub p_treat: f64,
    pub z_shape: f64,
    pub z_rate: f64,
    pub m_intercept: f64,
    pub m_z: f64,
    pub m_u: f64,
    pub m_au: f64,
    pub mediator_logit_scale: f64,
    pub m_trials: u64,
    pub m_step: f64,
    pub y_base: f64,
    pub y_u: f64,
    pub eps_var: f64,
    pub effect_a: f64,
    pub effect_am: f64,
    pub effect_m: f64,
}

impl Default for DgmParams {
    fn default() -> Self {
        Self {
            u_var: 2.0,
            p_treat: 0.5,
            z_shape: 2.0,
            z_rate: 4.0,
            m_intercept: -1.0,
            m_z: 1.0,
            m_u: 0.4,
            m_au: 0.4,
            mediator_logit_scale: 5.0,
            m_trials: 4,
            m_step: 5.0,
            y_base: 42.0,
            y_u: 0.2,
            eps_var: 2.0,
            effect_a: 2.0,
            effect_am: 0.0,
            effect_m: 0.4,
        }
    }
}

impl DgmParams {
    /// True `Δ(m) = E[Y_{1m} − Y_{0m}]`.
    pub fn true_cde(&self, m: f64) -> f64 {
        self.effect_a + self.effect_am * m
    }

    fn validate(&self) -> Result<()> {
        let pos = [
            ("dgm.u_var", self.u_var),
            ("dgm.z_shape", self.z_shape),
            ("dgm.z_rate", self.z_rate),
            ("dgm.eps_var", self.eps_var),
        ];
        for (key, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CdeError::Config(format!("{key} must be positive, got {v}")));
            }
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return Err(CdeError::Config(format!("dgm.p_treat must lie in (0, 1), got {}", self.p_treat)));
        }
        if self.m_trials == 0 || self.m_step.is_nan() || self.m_step <= 0.0 {
            return Err(CdeError::Config("dgm.m_trials and dgm.m_step must be positive".into()));
        }
        Ok(())
    }
}

pub fn sim_roles() -> ColumnRoles {
    ColumnRoles {
        exposure: "a".into(),
        mediators: vec!["m".into()],
        covariates: vec!["x".into()],
        instruments: vec!["z1".into(), "z2".into()],
        outcome: "y".into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDraw {
    pub dataset: Dataset,
    pub u: Vec<f64>,
    pub y00: Vec<f64>,
    pub params: DgmParams,
}

impl SimDraw {
    pub fn true_cde(&self, m: f64) -> f64 {
        self.params.true_cde(m)
    }
}

fn expit(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// RNG for replication `rep` of a run seeded with `seed`.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

pub fn generate_with<R: Rng + ?Sized>(n: usize, params: &DgmParams, rng: &mut R) -> Result<SimDraw> {
    params.validate()?;
    let normal = |var: f64| Normal::new(0.0, var.sqrt()).map_err(|e| CdeError::Config(e.to_string()));
    let u_dist = normal(params.u_var)?;
    let eps_dist = normal(params.eps_var)?;
    let x_dist = normal(1.0)?;
    let z_dist = Gamma::new(params.z_shape, 1.0 / params.z_rate).map_err(|e| CdeError::Config(e.to_string()))?;

    let (mut a, mut m, mut x, mut z1, mut z2, mut y, mut u, mut y00) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let ui = u_dist.sample(rng);
        let ai = f64::from(u8::from(rng.random::<f64>() < params.p_treat));
        let z1i = z_dist.sample(rng);
        let z2i = z_dist.sample(rng);
        let xi = x_dist.sample(rng);
        let lin = params.m_intercept + params.m_z * (z1i + z2i) + params.m_u * ui + params.m_au * ai * ui;
        let p = expit(params.mediator_logit_scale * lin);
        let trials = Binomial::new(params.m_trials, p).map_err(|e| CdeError::Config(e.to_string()))?;
        let mi = params.m_step * trials.sample(rng) as f64;
        let y00i = params.y_base + params.y_u * ui + eps_dist.sample(rng);
        let yi = params.effect_a * ai + params.effect_am * ai * mi + params.effect_m * mi + y00i;
        a.push(ai);
        m.push(mi);
        x.push(xi);
        z1.push(z1i);
        z2.push(z2i);
        y.push(yi);
        u.push(ui);
        y00.push(y00i);
    }
    Ok(SimDraw {
        dataset: Dataset::new(sim_roles(), a, vec![m], vec![x], vec![z1, z2], y)?,
        u,
        y00,
        params: *params,
    })
}

/// Deterministic draw of `n` units: replication 0 of `seed`.
pub fn generate(n: usize, seed: u64, params: &DgmParams) -> Result<SimDraw> {
    generate_with(n, params, &mut rep_rng(seed, 0))
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Summary moments compared against the published description of the mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgmMoments {
    pub mean_m: f64,
    pub sd_m: f64,
    pub cor_m_score: f64,
    pub cor_m_u: f64,
    pub prevalence: f64,
}

pub const PREVALENCE_THRESHOLD: f64 = 48.0;

pub fn dgm_moments(draw: &SimDraw) -> DgmMoments {
    let ds = &draw.dataset;
    let m = &ds.mediators()[0];
    let n = m.len() as f64;
    let mean_m = m.iter().sum::<f64>() / n;
    let sd_m = (m.iter().map(|v| (v - mean_m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let score: Vec<f64> = ds.instruments()[0].iter().zip(&ds.instruments()[1]).map(|(a, b)| a + b).collect();
    DgmMoments {
        mean_m,
        sd_m,
        cor_m_score: pearson(m, &score),
        cor_m_u: pearson(m, &draw.u),
        prevalence: ds.y().iter().filter(|&&y| y > PREVALENCE_THRESHOLD).count() as f64 / n,
    }
}

/// `(name, value, low, high)` for each published moment target.
pub fn dgm_targets(m: &DgmMoments) -> Vec<(&'static str, f64, f64, f64)> {
    vec![
        ("mean(M)", m.mean_m, 9.6, 10.0),
        ("SD(M)", m.sd_m, 8.4, 9.0),
        ("Cor(M, Z1+Z2)", m.cor_m_score, 0.40, 0.46),
        ("Cor(M, U)", m.cor_m_u, 0.72, 0.78),
        ("Pr(Y > 48)", m.prevalence, 0.40, 0.46),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "proposed")]
    Proposed,
    #[serde(rename = "ordinary-smm")]
    OrdinarySmm,
    #[serde(rename = "2sls")]
    TwoStageLs,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Proposed => "proposed",
            Method::OrdinarySmm => "ordinary-smm",
            Method::TwoStageLs => "2sls",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Gic,
    None,
}

impl Criterion {
    pub fn penalty(&self) -> Option<Penalty> {
        match self {
            Criterion::Aic => Some(Penalty::Aic),
            Criterion::Gic => Some(Penalty::Gic),
            Criterion::None => None,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Aic => "aic",
            Criterion::Gic => "gic",
            Criterion::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiKind {
    #[default]
    Correct,
    /// Intercept fitted on all unexposed units, ignoring `M = 0`.
    Misspecified,
}

impl PhiKind {
    pub fn spec(&self) -> PhiSpec {
        match self {
            PhiKind::Correct => PhiSpec::intercept(),
            PhiKind::Misspecified => PhiSpec::misspecified(),
        }
    }
}

impl fmt::Display for PhiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhiKind::Correct => "correct",
            PhiKind::Misspecified => "misspecified",
        })
    }
}

/// Full effect model `τ = (a, a·m, m, m·x)` shared by all candidates.
pub fn full_effect_model() -> EffectModelSpec {
    EffectModelSpec::parse(&["a", "a*m"], &["m", "m*x"], &sim_roles()).expect("static effect model")
}

/// Instrument basis `(1, S, S², x·S)` with `S = Z1 + Z2`, co-indexed with
/// `(a, a·m, m, m·x)`.
pub fn default_instrument_basis() -> InstrumentBasis {
    let score = AlleleScoreSpec {
        columns: vec![0, 1],
        weights: None,
    };
    InstrumentBasis::parse(&["1", "score", "score*score", "x*score"], Some(score), &sim_roles()).expect("static basis")
}

/// Model 1 `{a, a·m}`, Model 2 `{a, a·m, m}` (the true model) and Model 3
/// `{a, a·m, m, m·x}`.
pub fn candidate_models() -> Vec<CandidateModel> {
    vec![
        CandidateModel::new(vec![0, 1], "Model 1").expect("static"),
        CandidateModel::new(vec![0, 1, 2], "Model 2").expect("static"),
        CandidateModel::new(vec![0, 1, 2, 3], "Model 3").expect("static"),
    ]
}

pub fn true_model() -> CandidateModel {
    candidate_models().swap_remove(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub method: Method,
    pub criterion: Criterion,
    #[serde(default)]
    pub phi: PhiKind,
    #[serde(default = "default_levels")]
    pub m_levels: Vec<f64>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub dgm: DgmParams,
}

fn default_levels() -> Vec<f64> {
    vec![0.0, 10.0, 20.0]
}

fn default_confidence() -> f64 {
    0.95
}

impl ScenarioConfig {
    pub fn new(n: usize, reps: usize, seed: u64, method: Method, criterion: Criterion) -> Self {
        Self {
            n,
            reps,
            seed,
            method,
            criterion,
            phi: PhiKind::Correct,
            m_levels: default_levels(),
            confidence: default_confidence(),
            dgm: DgmParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(CdeError::Config("reps must be at least 1".into()));
        }
        if self.n < 100 {
            return Err(CdeError::Config(format!("n must be at least 100, got {}", self.n)));
        }
        if self.m_levels.is_empty() || self.m_levels.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(CdeError::Config("m_levels must be a nonempty list of nonnegative numbers".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(CdeError::Config(format!("confidence must lie in (0, 1), got {}", self.confidence)));
        }
        self.dgm.validate()
    }
}

/// Per-replication outcome. `estimates` and `intervals` follow `m_levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub rep: usize,
    pub outcome: std::result::Result<RepFit, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepFit {
    pub chosen: CandidateModel,
    pub intervals: Vec<Interval>,
    pub xi: Vec<f64>,
}

/// Fits one dataset under the scenario's method and criterion.
pub fn fit_replication(ds: &Dataset, cfg: &ScenarioConfig) -> Result<RepFit> {
    let spec = full_effect_model();
    let design = build_design(ds, &spec, &default_instrument_basis())?;
    let ps = fit_propensity_constant(ds)?;
    let bl = fit_baseline_outcome(ds, &cfg.phi.spec())?;
    let fixed = true_model();
    let (chosen, fit): (CandidateModel, FittedCde) = match (cfg.method, cfg.criterion.penalty()) {
        (Method::TwoStageLs, _) => (fixed.clone(), two_stage_least_squares(ds, &design, &ps, &bl, &fixed)?.fit),
        (Method::Proposed, None) => (fixed.clone(), fit_submodel(&design, &ps, &bl, &fixed)?),
        (Method::OrdinarySmm, None) => (fixed.clone(), ordinary_smm_fit(&design, &ps, &bl, &fixed)?.fit),
        (method, Some(penalty)) => {
            let crit = CriterionConfig {
                penalty,
                candidates: candidate_models(),
            };
            let res = if method == Method::Proposed {
                select(&design, &ps, &bl, &crit)?
            } else {
                ordinary_smm_select(&design, &ps, &bl, &crit)?
            };
            let e = res.chosen().clone();
            (e.model, e.fit)
        }
    };
    let intervals = cfg
        .m_levels
        .iter()
        .map(|&m| {
            let (p, se) = fit.cde(&[m])?;
            Interval::normal(p, se, cfg.confidence)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RepFit {
        chosen,
        intervals,
        xi: fit.xi_full().iter().copied().collect(),
    })
}

/// Aggregate of the estimates at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mean: f64,
    /// Sample SD (`n − 1` denominator); `None` for a single estimate.
    pub ese: Option<f64>,
    /// `None` when the true value is zero.
    pub pct_bias: Option<f64>,
    pub rmse: f64,
}

pub fn percent_bias(mean: f64, theta0: f64) -> Result<f64> {
    if theta0 == 0.0 {
        return Err(CdeError::UndefinedBias);
    }
    Ok(100.0 * (mean - theta0) / theta0)
}

pub fn metrics(estimates: &[f64], theta0: f64) -> Result<Metrics> {
    if estimates.is_empty() {
        return Err(CdeError::InvalidData("no estimates to aggregate".into()));
    }
    let k = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / k;
    let ese = (estimates.len() > 1)
        .then(|| (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt());
    let rmse = (estimates.iter().map(|e| (e - theta0).powi(2)).sum::<f64>() / k).sqrt();
    Ok(Metrics {
        mean,
        ese,
        pct_bias: percent_bias(mean, theta0).ok(),
        rmse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionSummary {
    pub total: usize,
    pub correct: usize,
    pub including: usize,
}

impl SelectionSummary {
    pub fn correct_rate(&self) -> f64 {
        self.correct as f64 / self.total.max(1) as f64
    }

    pub fn including_rate(&self) -> f64 {
        self.including as f64 / self.total.max(1) as f64
    }
}

/// Counts exact hits of `truth` and choices whose parameter set contains it.
pub fn selection_summary(chosen: &[CandidateModel], truth: &CandidateModel) -> SelectionSummary {
    SelectionSummary {
        total: chosen.len(),
        correct: chosen.iter().filter(|c| c.indices() == truth.indices()).count(),
        including: chosen.iter().filter(|c| c.contains(truth)).count(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub level: f64,
    pub truth: f64,
    pub metrics: Metrics,
    /// Share of successful reps whose interval covers the truth.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub reps: Vec<RepRecord>,
    /// Empty when every replication failed.
    pub levels: Vec<LevelSummary>,
    pub selection: SelectionSummary,
    pub failures: usize,
}

impl ScenarioResult {
    pub fn successes(&self) -> impl Iterator<Item = &RepFit> {
        self.reps.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    pub fn level(&self, m: f64) -> Option<&LevelSummary> {
        self.levels.iter().find(|l| l.level == m)
    }
}

/// Runs all replications on the current rayon pool.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    cfg.validate()?;
    let reps: Vec<RepRecord> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let outcome = generate_with(cfg.n, &cfg.dgm, &mut rep_rng(cfg.seed, rep as u64))
                .and_then(|draw| fit_replication(&draw.dataset, cfg))
                .map_err(|e| e.to_string());
            RepRecord { rep, outcome }
        })
        .collect();
    Ok(summarize(cfg, reps))
}

pub fn summarize(cfg: &ScenarioConfig, reps: Vec<RepRecord>) -> ScenarioResult {
    let ok: Vec<&RepFit> = reps.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let failures = reps.len() - ok.len();
    let levels = if ok.is_empty() {
        Vec::new()
    } else {
        cfg.m_levels
            .iter()
            .enumerate()
            .map(|(k, &level)| {
                let truth = cfg.dgm.true_cde(level);
                let est: Vec<f64> = ok.iter().map(|r| r.intervals[k].point).collect();
                let covered = ok.iter().filter(|r| r.intervals[k].covers(truth)).count();
                LevelSummary {
                    level,
                    truth,
                    metrics: metrics(&est, truth).expect("nonempty"),
                    coverage: covered as f64 / ok.len() as f64,
                }
            })
            .collect()
    };
    let chosen: Vec<CandidateModel> = ok.iter().map(|r| r.chosen.clone()).collect();
    ScenarioResult {
        config: cfg.clone(),
        levels,
        selection: selection_summary(&chosen, &true_model()),
        failures,
        reps,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub const AGGREGATE_HEADER: [&str; 12] = [
    "method", "criterion", "level", "mean", "ese", "pct_bias", "rmse", "coverage", "n", "phi", "reps_ok", "failures",
];

/// One row per scenario and level; columns as in [`AGGREGATE_HEADER`].
pub fn write_aggregate_csv<W: Write>(results: &[ScenarioResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for r in results {
        let ok = r.reps.len() - r.failures;
        for l in &r.levels {
            w.write_record([
                r.config.method.to_string(),
                r.config.criterion.to_string(),
                format!("CDE({})", l.level),
                l.metrics.mean.to_string(),
                opt(l.metrics.ese),
                opt(l.metrics.pct_bias),
                l.metrics.rmse.to_string(),
                l.coverage.to_string(),
                r.config.n.to_string(),
                r.config.phi.to_string(),
                ok.to_string(),
                r.failures.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| CdeError::Csv(e.to_string()))
}

/// One row per replication with the chosen model, estimates and standard errors.
pub fn write_reps_csv<W: Write>(results: &[ScenarioResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let levels = results.first().map(|r| r.config.m_levels.clone()).unwrap_or_default();
    let mut header: Vec<String> = ["method", "criterion", "n", "phi", "rep", "status", "chosen"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for l in &levels {
        header.push(format!("cde_{l}"));
        header.push(format!("se_{l}"));
    }
    w.write_record(&header)?;
    for r in results {
        if r.config.m_levels != levels {
            return Err(CdeError::Config("all scenarios in one file must share m_levels".into()));
        }
        for rec in &r.reps {
            let mut row = vec![
                r.config.method.to_string(),
                r.config.criterion.to_string(),
                r.config.n.to_string(),
                r.config.phi.to_string(),
                rec.rep.to_string(),
            ];
            match &rec.outcome {
                Ok(fit) => {
                    row.push("ok".into());
                    row.push(fit.chosen.label().to_string());
                    for iv in &fit.intervals {
                        row.push(iv.point.to_string());
                        row.push(iv.se.to_string());
                    }
                }
                Err(msg) => {
                    row.push(format!("failed: {msg}"));
                    row.push(String::new());
                    row.extend(std::iter::repeat_n(String::new(), 2 * levels.len()));
                }
            }
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| CdeError::Csv(e.to_string()))
}

/// Fixed-width rendering laid out like the published tables: estimates per
/// level, then selection counts.
pub fn render_table(results: &[ScenarioResult]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<13} {:<5} {:>6} {:<8} {:>9} {:>8} {:>9} {:>8} {:>8}\n",
        "method", "crit", "n", "level", "mean", "ESE", "%bias", "RMSE", "cover"
    ));
    for r in results {
        for l in &r.levels {
            s.push_str(&format!(
                "{:<13} {:<5} {:>6} {:<8} {:>9.3} {:>8} {:>9} {:>8.3} {:>8.3}\n",
                r.config.method.to_string(),
                r.config.criterion.to_string(),
                r.config.n,
                format!("CDE({})", l.level),
                l.metrics.mean,
                l.metrics.ese.map_or("NA".into(), |v| format!("{v:.3}")),
                l.metrics.pct_bias.map_or("NA".into(), |v| format!("{v:.3}")),
                l.metrics.rmse,
                l.coverage,
            ));
        }
    }
    s.push('\n');
    s.push_str(&format!(
        "{:<13} {:<5} {:>6} {:>16} {:>16} {:>9}\n",
        "method", "crit", "n", "correct (%)", "including (%)", "failures"
    ));
    for r in results {
        let sel = &r.selection;
        s.push_str(&format!(
            "{:<13} {:<5} {:>6} {:>16} {:>16} {:>9}\n",
            r.config.method.to_string(),
            r.config.criterion.to_string(),
            r.config.n,
            format!("{} ({:.1})", sel.correct, 100.0 * sel.correct_rate()),
            format!("{} ({:.1})", sel.including, 100.0 * sel.including_rate()),
            r.failures,
        ));
    }
    s
}
