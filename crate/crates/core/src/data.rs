//! Right-censored two-arm samples and their CSV form.
//!
//! The CSV layout is a header row followed by one record per subject. The
//! columns `time`, `status` (1 = event, 0 = censored) and `arm` (0 or 1) are
//! required; every other column is a covariate, in file order.

use std::io::{Read, Write};

use crate::error::{Error, Result, RowIssue, ValidationErrors};

/// Dense row-major matrix of covariates (one row per subject).
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let data = self.iter_rows().flat_map(|r| cols.iter().map(move |&j| r[j])).collect();
        Self {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// An unvalidated record, as read from a file or built by a caller.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub time: f64,
    pub status: f64,
    pub arm: f64,
    pub covariates: Vec<f64>,
}

/// Validated right-censored observations `(y, delta, a, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSample {
    time: Vec<f64>,
    event: Vec<bool>,
    arm: Vec<u8>,
    x: Design,
    covariate_names: Vec<String>,
}

fn flag(value: f64) -> Option<bool> {
    if value == 0.0 {
        Some(false)
    } else if value == 1.0 {
        Some(true)
    } else {
        None
    }
}

impl SurvivalSample {
    /// Validates raw records, reporting every violated invariant by row.
    pub fn validate(records: &[RawRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("no records".into()));
        }
        let p = records[0].covariates.len();
        let mut issues = Vec::new();
        let mut issue = |row: usize, field: &str, message: String| {
            issues.push(RowIssue {
                row,
                field: field.to_string(),
                message,
            })
        };
        for (i, r) in records.iter().enumerate() {
            if !r.time.is_finite() {
                issue(i, "time", format!("non-finite value {}", r.time));
            } else if r.time < 0.0 {
                issue(i, "time", format!("negative time {}", r.time));
            }
            if flag(r.status).is_none() {
                issue(i, "status", format!("expected 0 or 1, got {}", r.status));
            }
            if flag(r.arm).is_none() {
                issue(i, "arm", format!("expected 0 or 1, got {}", r.arm));
            }
            if r.covariates.len() != p {
                issue(
                    i,
                    "covariates",
                    format!("ragged row: {} covariates, expected {p}", r.covariates.len()),
                );
            } else if let Some(j) = r.covariates.iter().position(|v| !v.is_finite()) {
                issue(i, "covariates", format!("non-finite value in column {j}"));
            }
        }
        if !issues.is_empty() {
            return Err(ValidationErrors(issues).into());
        }
        let mut data = Vec::with_capacity(records.len() * p);
        for r in records {
            data.extend_from_slice(&r.covariates);
        }
        Ok(Self {
            time: records.iter().map(|r| r.time).collect(),
            event: records.iter().map(|r| r.status == 1.0).collect(),
            arm: records.iter().map(|r| r.arm as u8).collect(),
            x: Design::new(records.len(), p, data)?,
            covariate_names: (1..=p).map(|j| format!("x{j}")).collect(),
        })
    }

    /// Assembles a sample from columns, applying the same checks as
    /// [`SurvivalSample::validate`].
    pub fn from_columns(time: Vec<f64>, event: Vec<bool>, arm: Vec<u8>, x: Design) -> Result<Self> {
        let n = time.len();
        for len in [event.len(), arm.len(), x.rows()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        let records: Vec<RawRecord> = (0..n)
            .map(|i| RawRecord {
                time: time[i],
                status: if event[i] { 1.0 } else { 0.0 },
                arm: arm[i] as f64,
                covariates: x.row(i).to_vec(),
            })
            .collect();
        Self::validate(&records)
    }

    pub fn with_covariate_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.x.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.x.cols(),
                got: names.len(),
            });
        }
        self.covariate_names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.cols()
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn arm(&self) -> &[u8] {
        &self.arm
    }

    pub fn covariates(&self) -> &Design {
        &self.x
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn arm_indices(&self, arm: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.arm[i] == arm).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            time: idx.iter().map(|&i| self.time[i]).collect(),
            event: idx.iter().map(|&i| self.event[i]).collect(),
            arm: idx.iter().map(|&i| self.arm[i]).collect(),
            x: self.x.select_rows(idx),
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Same records keeping only the covariates at `cols`, in that order.
    pub fn select_covariates(&self, cols: &[usize]) -> Self {
        Self {
            time: self.time.clone(),
            event: self.event.clone(),
            arm: self.arm.clone(),
            x: self.x.select_columns(cols),
            covariate_names: cols.iter().map(|&j| self.covariate_names[j].clone()).collect(),
        }
    }

    /// The records of one arm; errors if the arm is empty.
    pub fn arm_sample(&self, arm: u8) -> Result<Self> {
        let idx = self.arm_indices(arm);
        if idx.is_empty() {
            return Err(Error::EmptyArm(arm));
        }
        Ok(self.subset(&idx))
    }

    /// Distinct event times, ascending, across both arms.
    pub fn distinct_event_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .time
            .iter()
            .zip(&self.event)
            .filter(|(_, &e)| e)
            .map(|(&t, _)| t)
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// Same records with arm labels 0 and 1 exchanged.
    pub fn with_arms_swapped(&self) -> Self {
        let mut out = self.clone();
        for a in &mut out.arm {
            *a = 1 - *a;
        }
        out
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::InvalidInput(format!("missing required column `{name}`")))
        };
        let (ti, si, ai) = (find("time")?, find("status")?, find("arm")?);
        let cov_cols: Vec<usize> = (0..headers.len()).filter(|c| ![ti, si, ai].contains(c)).collect();
        let names: Vec<String> = cov_cols.iter().map(|&c| headers[c].trim().to_string()).collect();

        let mut records = Vec::new();
        let mut issues = Vec::new();
        for (row, result) in rdr.records().enumerate() {
            let rec = result?;
            let mut parse = |col: usize, field: &str| -> f64 {
                match rec.get(col).map(str::trim).unwrap_or("").parse::<f64>() {
                    Ok(v) => v,
                    Err(_) => {
                        issues.push(RowIssue {
                            row,
                            field: field.to_string(),
                            message: format!("cannot parse `{}`", rec.get(col).unwrap_or("")),
                        });
                        f64::NAN
                    }
                }
            };
            let time = parse(ti, "time");
            let status = parse(si, "status");
            let arm = parse(ai, "arm");
            let covariates = cov_cols
                .iter()
                .zip(&names)
                .map(|(&c, name)| parse(c, name))
                .collect();
            records.push(RawRecord {
                time,
                status,
                arm,
                covariates,
            });
        }
        if !issues.is_empty() {
            return Err(ValidationErrors(issues).into());
        }
        Self::validate(&records)?.with_covariate_names(names)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string(), "status".into(), "arm".into()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![
                self.time[i].to_string(),
                (self.event[i] as u8).to_string(),
                self.arm[i].to_string(),
            ];
            row.extend(self.x.row(i).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
