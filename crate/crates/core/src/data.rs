//! Per-unit analysis data and CSV ingestion.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{CdeError, Result};

/// Column names for each role. Roles come from configuration, never from
/// column position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub exposure: String,
    pub mediators: Vec<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub instruments: Vec<String>,
    pub outcome: String,
}

impl ColumnRoles {
    pub fn all_columns(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.exposure.as_str())
            .chain(self.mediators.iter().map(String::as_str))
            .chain(self.covariates.iter().map(String::as_str))
            .chain(self.instruments.iter().map(String::as_str))
            .chain(std::iter::once(self.outcome.as_str()))
    }
}

/// Observed data: binary exposure `a`, nonnegative mediators `m`, measured
/// confounders `x`, raw instruments `z` and outcome `y`. Columns are stored
/// column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    roles: ColumnRoles,
    a: Vec<f64>,
    m: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(
        roles: ColumnRoles,
        a: Vec<f64>,
        m: Vec<Vec<f64>>,
        x: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        y: Vec<f64>,
    ) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(CdeError::InvalidData("dataset has no units".into()));
        }
        if m.is_empty() {
            return Err(CdeError::InvalidData("at least one mediator column is required".into()));
        }
        if roles.mediators.len() != m.len()
            || roles.covariates.len() != x.len()
            || roles.instruments.len() != z.len()
        {
            return Err(CdeError::Dimension(
                "column-role names do not match the number of data columns".into(),
            ));
        }
        let check_len = |what: &str, col: &[f64]| -> Result<()> {
            if col.len() != n {
                return Err(CdeError::Dimension(format!(
                    "column `{what}` has length {} but the exposure has length {n}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(CdeError::InvalidData(format!("column `{what}` has non-finite values")));
            }
            Ok(())
        };
        check_len(&roles.exposure, &a)?;
        check_len(&roles.outcome, &y)?;
        for (name, col) in roles.mediators.iter().zip(&m) {
            check_len(name, col)?;
            if let Some(v) = col.iter().find(|v| **v < 0.0) {
                return Err(CdeError::InvalidData(format!("mediator `{name}` has negative value {v}")));
            }
        }
        for (name, col) in roles.covariates.iter().zip(&x) {
            check_len(name, col)?;
        }
        for (name, col) in roles.instruments.iter().zip(&z) {
            check_len(name, col)?;
        }
        if let Some(v) = a.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(CdeError::InvalidData(format!("exposure must be 0/1, found {v}")));
        }
        Ok(Self { roles, a, m, x, z, y })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn roles(&self) -> &ColumnRoles {
        &self.roles
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn mediators(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn instruments(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn d_m(&self) -> usize {
        self.m.len()
    }

    pub fn d_x(&self) -> usize {
        self.x.len()
    }

    pub fn d_z(&self) -> usize {
        self.z.len()
    }

    pub fn mediator_row(&self, i: usize) -> Vec<f64> {
        self.m.iter().map(|c| c[i]).collect()
    }

    pub fn covariate_row(&self, i: usize) -> Vec<f64> {
        self.x.iter().map(|c| c[i]).collect()
    }

    pub fn instrument_row(&self, i: usize) -> Vec<f64> {
        self.z.iter().map(|c| c[i]).collect()
    }

    /// `A = 0` and every mediator component equal to zero.
    pub fn is_baseline(&self, i: usize) -> bool {
        self.a[i] == 0.0 && self.m.iter().all(|c| c[i] == 0.0)
    }

    pub fn baseline_count(&self) -> usize {
        (0..self.n()).filter(|&i| self.is_baseline(i)).count()
    }

    pub fn treated_count(&self) -> usize {
        self.a.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn covariate_means(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.x.iter().map(|c| c.iter().sum::<f64>() / n).collect()
    }

    pub fn require_baseline(&self) -> Result<()> {
        if self.baseline_count() == 0 {
            Err(CdeError::EmptyBaseline)
        } else {
            Ok(())
        }
    }
}

/// A numeric table read from CSV, before roles are assigned. Missing cells are
/// kept as `None` so preprocessing can run before complete-case filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    headers: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

/// What complete-case filtering removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped_missing: usize,
}

const MISSING_TOKENS: [&str; 5] = ["", "NA", "NaN", "nan", "."];

impl RawTable {
    pub fn new(headers: Vec<String>, columns: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if headers.len() != columns.len() {
            return Err(CdeError::Dimension("header count differs from column count".into()));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(CdeError::Dimension("ragged table".into()));
            }
        }
        Ok(Self { headers, columns })
    }

    /// Reads a UTF-8 CSV with a header row and `.` as the decimal separator.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); headers.len()];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(CdeError::Csv(format!(
                    "row {} has {} fields, expected {}",
                    row + 2,
                    record.len(),
                    headers.len()
                )));
            }
            for (j, field) in record.iter().enumerate() {
                let value = if MISSING_TOKENS.contains(&field) {
                    None
                } else {
                    Some(field.parse::<f64>().map_err(|_| {
                        CdeError::Csv(format!(
                            "column `{}` row {}: cannot parse `{field}` as a number",
                            headers[j],
                            row + 2
                        ))
                    })?)
                };
                columns[j].push(value);
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.index_of(name).map(|j| self.columns[j].as_slice())
    }

    pub fn column_mut(&mut self, name: &str) -> Result<&mut Vec<Option<f64>>> {
        let j = self.index_of(name)?;
        Ok(&mut self.columns[j])
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CdeError::UnknownColumn(name.to_string()))
    }

    /// Keeps only the rows for which `keep` is true.
    pub fn retain_rows(&mut self, keep: &[bool]) {
        for col in &mut self.columns {
            let mut it = keep.iter();
            col.retain(|_| *it.next().unwrap_or(&true));
        }
    }

    /// Assigns roles and drops every row with a missing cell in a role column.
    pub fn into_dataset(self, roles: &ColumnRoles) -> Result<(Dataset, IngestReport)> {
        let role_cols: Vec<&[Option<f64>]> = roles.all_columns().map(|c| self.column(c)).collect::<Result<_>>()?;
        let rows_read = self.n_rows();
        let complete: Vec<usize> = (0..rows_read)
            .filter(|&i| role_cols.iter().all(|c| c[i].is_some()))
            .collect();
        let take = |name: &str| -> Result<Vec<f64>> {
            let col = self.column(name)?;
            Ok(complete.iter().map(|&i| col[i].unwrap_or(f64::NAN)).collect())
        };
        let many = |names: &[String]| -> Result<Vec<Vec<f64>>> { names.iter().map(|c| take(c)).collect() };
        let ds = Dataset::new(
            roles.clone(),
            take(&roles.exposure)?,
            many(&roles.mediators)?,
            many(&roles.covariates)?,
            many(&roles.instruments)?,
            take(&roles.outcome)?,
        )?;
        Ok((
            ds,
            IngestReport {
                rows_read,
                rows_dropped_missing: rows_read - complete.len(),
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles() -> ColumnRoles {
        ColumnRoles {
            exposure: "a".into(),
            mediators: vec!["m".into()],
            covariates: vec!["x".into()],
            instruments: vec!["z".into()],
            outcome: "y".into(),
        }
    }

    #[test]
    fn csv_roles_are_assigned_by_name() {
        let csv = "y,z,x,m,a\n1.5,0.2,3,0,1\n2.5,0.4,4,5,0\n";
        let table = RawTable::from_csv(csv.as_bytes()).unwrap();
        let (ds, report) = table.into_dataset(&roles()).unwrap();
        assert_eq!(report.rows_dropped_missing, 0);
        assert_eq!(ds.a(), &[1.0, 0.0]);
        assert_eq!(ds.y(), &[1.5, 2.5]);
        assert_eq!(ds.mediators()[0], vec![0.0, 5.0]);
    }

    #[test]
    fn incomplete_rows_are_dropped() {
        let csv = "a,m,x,z,y\n1,0,1,1,2\n0,NA,1,1,2\n0,0,,1,3\n";
        let (ds, report) = RawTable::from_csv(csv.as_bytes()).unwrap().into_dataset(&roles()).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(report.rows_dropped_missing, 2);
    }

    #[test]
    fn garbage_cell_is_an_error() {
        let csv = "a,m,x,z,y\n1,zero,1,1,2\n";
        assert!(matches!(RawTable::from_csv(csv.as_bytes()), Err(CdeError::Csv(_))));
    }

    #[test]
    fn missing_role_column_is_reported() {
        let csv = "a,m,x,y\n1,0,1,2\n";
        let err = RawTable::from_csv(csv.as_bytes()).unwrap().into_dataset(&roles()).unwrap_err();
        assert_eq!(err, CdeError::UnknownColumn("z".into()));
    }

    #[test]
    fn rejects_non_binary_exposure_and_negative_mediator() {
        let r = roles();
        let bad_a = Dataset::new(r.clone(), vec![2.0], vec![vec![0.0]], vec![vec![0.0]], vec![vec![0.0]], vec![0.0]);
        assert!(matches!(bad_a, Err(CdeError::InvalidData(_))));
        let bad_m = Dataset::new(r, vec![1.0], vec![vec![-1.0]], vec![vec![0.0]], vec![vec![0.0]], vec![0.0]);
        assert!(matches!(bad_m, Err(CdeError::InvalidData(_))));
    }

    #[test]
    fn baseline_needs_all_mediators_zero() {
        let r = ColumnRoles {
            mediators: vec!["m1".into(), "m2".into()],
            ..roles()
        };
        let ds = Dataset::new(
            r,
            vec![0.0, 0.0, 1.0],
            vec![vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            vec![vec![0.0; 3]],
            vec![vec![0.0; 3]],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        assert_eq!(ds.baseline_count(), 1);
    }
}
