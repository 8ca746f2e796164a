//! Declarative column transforms applied to the raw table before role
//! assignment and complete-case filtering.

use cde_core::RawTable;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// IFCC (mmol/mol) to NGSP (%) HbA1c: `0.09148 × IFCC + 2.152`.
pub const IFCC_TO_NGSP: (f64, f64) = (0.09148, 2.152);

pub fn ifcc_to_ngsp(ifcc: f64) -> f64 {
    IFCC_TO_NGSP.0 * ifcc + IFCC_TO_NGSP.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Step {
    /// Values strictly above `above` become `value`.
    Cap { column: String, above: f64, value: f64 },
    /// Listed codes become 0 (e.g. "less than one a day").
    RecodeToZero { column: String, values: Vec<f64> },
    /// Listed codes become missing (e.g. "do not know").
    SetMissing { column: String, values: Vec<f64> },
    /// Rows with a value strictly above `threshold` are dropped.
    ExcludeAbove { column: String, threshold: f64 },
    /// `scale × value + offset`.
    Affine { column: String, scale: f64, offset: f64 },
    /// Shorthand for the IFCC to NGSP affine map.
    IfccToNgsp { column: String },
}

impl Step {
    pub fn column(&self) -> &str {
        match self {
            Step::Cap { column, .. }
            | Step::RecodeToZero { column, .. }
            | Step::SetMissing { column, .. }
            | Step::ExcludeAbove { column, .. }
            | Step::Affine { column, .. }
            | Step::IfccToNgsp { column } => column,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PreprocessReport {
    pub rows_excluded: usize,
}

fn map_values(col: &mut [Option<f64>], f: impl Fn(f64) -> Option<f64>) {
    for cell in col.iter_mut() {
        if let Some(v) = *cell {
            *cell = f(v);
        }
    }
}

pub fn apply(table: &mut RawTable, steps: &[Step]) -> Result<PreprocessReport, CliError> {
    let mut report = PreprocessReport::default();
    for (k, step) in steps.iter().enumerate() {
        let col = table
            .column_mut(step.column())
            .map_err(|_| CliError::Schema(format!("key `preprocess[{k}].column`: no column `{}` in the data", step.column())))?;
        match step {
            Step::Cap { above, value, .. } => map_values(col, |v| Some(if v > *above { *value } else { v })),
            Step::RecodeToZero { values, .. } => map_values(col, |v| Some(if values.contains(&v) { 0.0 } else { v })),
            Step::SetMissing { values, .. } => map_values(col, |v| (!values.contains(&v)).then_some(v)),
            Step::Affine { scale, offset, .. } => map_values(col, |v| Some(scale * v + offset)),
            Step::IfccToNgsp { .. } => map_values(col, |v| Some(ifcc_to_ngsp(v))),
            Step::ExcludeAbove { threshold, .. } => {
                let keep: Vec<bool> = col.iter().map(|c| c.is_none_or(|v| v <= *threshold)).collect();
                report.rows_excluded += keep.iter().filter(|k| !**k).count();
                table.retain_rows(&keep);
            }
        }
    }
    Ok(report)
}
