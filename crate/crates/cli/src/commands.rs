//! The `simulate`, `analyze` and `dgm-check` commands.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use cde_core::simulation::{
    dgm_moments, dgm_targets, generate, render_table, run_scenario, write_aggregate_csv, write_reps_csv, DgmParams,
    ScenarioResult,
};
use cde_core::{
    build_design, effect_report, estimate_xi, fit_baseline_outcome, fit_propensity_constant, fit_propensity_logistic,
    fit_submodel, select, AlleleScoreSpec, BaselineSubset, CandidateModel, CdeError, CriterionConfig, EffectModelSpec,
    EffectReport, FittedCde, InstrumentBasis, PhiSpec, RawTable, SelectionResult,
};
use serde::{Deserialize, Serialize};

use crate::config::{read_config, to_toml, AnalyzeConfig, PropensityChoice, SimulateConfig};
use crate::preprocess;
use crate::CliError;

/// Flags shared by the config-driven commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn out_dir(opts: &RunOptions, default: &str) -> Result<PathBuf, CliError> {
    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start thread pool: {e}")))
}

pub struct SimulateOutcome {
    pub seed: u64,
    pub results: Vec<ScenarioResult>,
    pub files: Vec<PathBuf>,
}

pub fn simulate(config_path: &Path, opts: &RunOptions) -> Result<SimulateOutcome, CliError> {
    let mut cfg: SimulateConfig = read_config(config_path)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    simulate_config(&cfg, opts)
}

pub fn simulate_config(cfg: &SimulateConfig, opts: &RunOptions) -> Result<SimulateOutcome, CliError> {
    let scenarios = cfg.scenario_configs()?;
    if scenarios.windows(2).any(|w| w[0].m_levels != w[1].m_levels) {
        return Err(CliError::Config("key `scenario.m_levels`: all scenarios must use the same levels".into()));
    }
    let pool = thread_pool(opts.threads)?;
    let results = pool.install(|| scenarios.iter().map(run_scenario).collect::<Result<Vec<_>, _>>())?;

    let dir = out_dir(opts, "cde-out")?;
    let files = vec![dir.join("reps.csv"), dir.join("aggregate.csv"), dir.join("table.txt"), dir.join("config.toml")];
    write_reps_csv(&results, create(&files[0])?)?;
    write_aggregate_csv(&results, create(&files[1])?)?;
    fs::write(&files[2], render_table(&results))?;
    fs::write(&files[3], to_toml(cfg)?)?;
    Ok(SimulateOutcome {
        seed: cfg.seed,
        results,
        files,
    })
}

/// Everything the analysis produced, ready to render.
pub struct AnalyzeOutcome {
    pub rows_read: usize,
    pub rows_excluded: usize,
    pub rows_dropped_missing: usize,
    pub n: usize,
    pub n_baseline: usize,
    pub propensity: String,
    pub selection: Option<SelectionResult>,
    pub chosen_label: String,
    pub fit: FittedCde,
    pub report: EffectReport,
    pub files: Vec<PathBuf>,
}

fn names_to_indices(names: &[String], pool: &[String], key: &str) -> Result<Vec<usize>, CliError> {
    names
        .iter()
        .map(|n| {
            pool.iter()
                .position(|p| p == n)
                .ok_or_else(|| CliError::Config(format!("key `{key}`: `{n}` is not listed in the matching [roles] entry")))
        })
        .collect()
}

fn schema(key: &str) -> impl Fn(CdeError) -> CliError + '_ {
    move |e| match CliError::from_input(e) {
        CliError::Schema(m) => CliError::Config(format!("key `{key}`: {m}")),
        other => other,
    }
}

pub fn analyze(config_path: &Path, opts: &RunOptions) -> Result<AnalyzeOutcome, CliError> {
    let cfg: AnalyzeConfig = read_config(config_path)?;
    analyze_config(&cfg, &cfg.data_path(config_path), opts)
}

pub fn analyze_config(cfg: &AnalyzeConfig, data_path: &Path, opts: &RunOptions) -> Result<AnalyzeOutcome, CliError> {
    let file = File::open(data_path)
        .map_err(|e| CliError::Schema(format!("cannot open data {}: {e}", data_path.display())))?;
    let mut table = RawTable::from_csv(file).map_err(CliError::from_input)?;
    let rows_read = table.n_rows();
    let pre = preprocess::apply(&mut table, &cfg.steps)?;
    let (ds, ingest) = table.into_dataset(&cfg.roles).map_err(CliError::from_input)?;
    let roles = &cfg.roles;

    let spec = EffectModelSpec::parse(&as_str(&cfg.model.tau1), &as_str(&cfg.model.tau2), roles).map_err(schema("model"))?;
    let score = match &cfg.allele_score {
        Some(s) => Some(AlleleScoreSpec {
            columns: names_to_indices(&s.columns, &roles.instruments, "allele_score.columns")?,
            weights: s.weights.clone(),
        }),
        None => None,
    };
    let basis = InstrumentBasis::parse(&as_str(&cfg.model.instruments), score, roles).map_err(schema("model.instruments"))?;
    let design = build_design(&ds, &spec, &basis).map_err(schema("model"))?;

    let ps = match cfg.propensity.kind {
        PropensityChoice::ConstantMean => fit_propensity_constant(&ds)?,
        PropensityChoice::Logistic => {
            let idx = names_to_indices(&cfg.propensity.covariates, &roles.covariates, "propensity.covariates")?;
            fit_propensity_logistic(&ds, &idx)?
        }
    };
    let phi = PhiSpec {
        covariates: names_to_indices(&cfg.baseline.covariates, &roles.covariates, "baseline.covariates")?,
        subset: BaselineSubset::Baseline,
    };
    let bl = fit_baseline_outcome(&ds, &phi)?;

    let candidates = cfg
        .selection
        .candidates
        .iter()
        .enumerate()
        .map(|(k, c)| {
            CandidateModel::from_terms(&spec, roles, &as_str(&c.terms), c.label.clone())
                .map_err(|e| CliError::Config(format!("key `selection.candidates[{k}]`: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let (selection, chosen_label, fit) = match (cfg.selection.criterion.penalty(), candidates.len()) {
        (_, 0) => (None, "full model".to_string(), estimate_xi(&design, &ps, &bl)?),
        (None, 1) => (None, candidates[0].label().to_string(), fit_submodel(&design, &ps, &bl, &candidates[0])?),
        (None, _) => {
            return Err(CliError::Config(
                "key `selection.criterion`: `none` needs zero or one candidate".into(),
            ))
        }
        (Some(penalty), _) => {
            let res = select(&design, &ps, &bl, &CriterionConfig { penalty, candidates })?;
            let chosen = res.chosen().clone();
            (Some(res), chosen.model.label().to_string(), chosen.fit)
        }
    };

    let report = effect_report(&ds, &fit, &cfg.report.levels, cfg.report.confidence).map_err(|e| match e {
        CdeError::Config(m) => CliError::Config(format!("key `report.confidence`: {m}")),
        CdeError::Dimension(m) => CliError::Config(format!("key `report.levels`: {m}")),
        other => CliError::Runtime(other.to_string()),
    })?;

    let mut outcome = AnalyzeOutcome {
        rows_read,
        rows_excluded: pre.rows_excluded,
        rows_dropped_missing: ingest.rows_dropped_missing,
        n: ds.n(),
        n_baseline: bl.n_baseline,
        propensity: match cfg.propensity.kind {
            PropensityChoice::ConstantMean => format!("constant mean ({:.4})", ps.alpha[0]),
            PropensityChoice::Logistic => format!("logistic, coefficients {:?}", ps.alpha),
        },
        selection,
        chosen_label,
        fit,
        report,
        files: Vec::new(),
    };

    let dir = out_dir(opts, "cde-out")?;
    let files = vec![dir.join("report.txt"), dir.join("report.csv"), dir.join("config.toml")];
    fs::write(&files[0], render_report(&outcome))?;
    write_report_csv(&outcome.report, &files[1])?;
    fs::write(&files[2], to_toml(cfg)?)?;
    outcome.files = files;
    Ok(outcome)
}

fn as_str(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn level_label(m: &[f64]) -> String {
    m.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

pub fn render_report(o: &AnalyzeOutcome) -> String {
    let mut s = String::new();
    let r = &o.report;
    let _ = writeln!(s, "Controlled direct effect analysis");
    let _ = writeln!(
        s,
        "rows read {}, excluded by preprocessing {}, dropped for missing values {}, analysed {}",
        o.rows_read, o.rows_excluded, o.rows_dropped_missing, o.n
    );
    let _ = writeln!(s, "baseline units (A = 0, M = 0): {}", o.n_baseline);
    let _ = writeln!(s, "propensity: {}", o.propensity);
    if let Some(sel) = &o.selection {
        let _ = writeln!(s, "\n{:<16} {:>4} {:>14} {:>12} {:>14}", "candidate", "|J|", "-2Q", "penalty", "criterion");
        for (m, res) in &sel.candidates {
            match res {
                Ok(e) => {
                    let _ = writeln!(
                        s,
                        "{:<16} {:>4} {:>14.4} {:>12.4} {:>14.4}",
                        m.label(),
                        m.len(),
                        -2.0 * e.q,
                        e.lambda * e.trace,
                        e.value
                    );
                }
                Err(err) => {
                    let _ = writeln!(s, "{:<16} {:>4} failed: {err}", m.label(), m.len());
                }
            }
        }
    }
    let _ = writeln!(s, "\nchosen model: {}", o.chosen_label);
    let labels = o.fit.spec.labels();
    for (k, &j) in o.fit.indices.iter().enumerate() {
        let _ = writeln!(
            s,
            "  xi[{}] = {:.6} (se {:.6})",
            labels[j],
            o.fit.xi_hat[k],
            o.fit.cov[(k, k)].max(0.0).sqrt()
        );
    }
    let _ = writeln!(s, "condition number of the estimating equation: {:.3e}", o.fit.cond_gamma);
    let pct = 100.0 * r.confidence;
    let _ = writeln!(s, "\n{:<6} {:<8} {:>10} {:>10} {:>22}", "", "level", "estimate", "se", format!("{pct}% CI"));
    let row = |s: &mut String, name: &str, level: &str, iv: &cde_core::Interval| {
        let _ = writeln!(
            s,
            "{:<6} {:<8} {:>10.4} {:>10.4} {:>22}",
            name,
            level,
            iv.point,
            iv.se,
            format!("({:.4}, {:.4})", iv.low, iv.high)
        );
    };
    row(&mut s, "TE", "-", &r.te);
    for l in &r.levels {
        row(&mut s, "CDE", &level_label(&l.m), &l.cde);
    }
    for l in &r.levels {
        match &l.pe {
            Some(pe) => row(&mut s, "PE", &level_label(&l.m), pe),
            None => {
                let _ = writeln!(s, "{:<6} {:<8} {:>10}", "PE", level_label(&l.m), "undefined");
            }
        }
    }
    s
}

fn write_report_csv(r: &EffectReport, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["quantity", "level", "estimate", "se", "ci_low", "ci_high"]).map_err(io)?;
    let rec = |name: &str, level: String, iv: &cde_core::Interval| {
        vec![
            name.to_string(),
            level,
            iv.point.to_string(),
            iv.se.to_string(),
            iv.low.to_string(),
            iv.high.to_string(),
        ]
    };
    w.write_record(rec("TE", String::new(), &r.te)).map_err(io)?;
    for l in &r.levels {
        w.write_record(rec("CDE", level_label(&l.m), &l.cde)).map_err(io)?;
    }
    for l in &r.levels {
        let row = match &l.pe {
            Some(pe) => rec("PE", level_label(&l.m), pe),
            None => {
                let mut v = vec!["PE".to_string(), level_label(&l.m)];
                v.extend(std::iter::repeat_n("undefined".to_string(), 4));
                v
            }
        };
        w.write_record(row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Smallest sample size accepted by `dgm-check`.
pub const DGM_CHECK_MIN_N: usize = 10_000;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DgmFile {
    #[serde(default)]
    dgm: DgmParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgmCheckLine {
    pub name: &'static str,
    pub value: f64,
    pub low: f64,
    pub high: f64,
}

impl DgmCheckLine {
    pub fn pass(&self) -> bool {
        self.low <= self.value && self.value <= self.high
    }
}

/// Draws `n` units and compares the summary moments with their targets.
pub fn dgm_check(n: usize, seed: u64, config: Option<&Path>) -> Result<Vec<DgmCheckLine>, CliError> {
    if n < DGM_CHECK_MIN_N {
        return Err(CliError::Config(format!("--n must be at least {DGM_CHECK_MIN_N}, got {n}")));
    }
    let params = match config {
        Some(p) => read_config::<DgmFile>(p)?.dgm,
        None => DgmParams::default(),
    };
    let draw = generate(n, seed, &params).map_err(|e| CliError::Config(e.to_string()))?;
    let moments = dgm_moments(&draw);
    Ok(dgm_targets(&moments)
        .into_iter()
        .map(|(name, value, low, high)| DgmCheckLine { name, value, low, high })
        .collect())
}
