use super::DataError;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// A balanced longitudinal dataset: `N` subjects each observed at the same
/// `n` time points, with an `r`-dimensional covariate vector per observation.
///
/// Times are ordinals `1..=n`; original time values are only used to order
/// observations within a subject. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    responses: DMatrix<f64>,
    covariates: Vec<DMatrix<f64>>,
    group_labels: Option<Vec<usize>>,
}

impl LongitudinalDataset {
    /// Assembles a dataset from a response matrix (`N×n`) and per-subject
    /// design matrices (`n×r` each).
    pub fn new(
        responses: DMatrix<f64>,
        covariates: Vec<DMatrix<f64>>,
        group_labels: Option<Vec<usize>>,
    ) -> Result<Self, DataError> {
        let n_subjects = responses.nrows();
        let n_times = responses.ncols();
        if n_subjects < 2 {
            return Err(DataError::Dimension("need at least 2 subjects".into()));
        }
        if n_times < 1 {
            return Err(DataError::Dimension("need at least 1 time point".into()));
        }
        if covariates.len() != n_subjects {
            return Err(DataError::Dimension(format!(
                "covariates for {} subjects, responses for {n_subjects}",
                covariates.len()
            )));
        }
        let r = covariates[0].ncols();
        if r < 1 {
            return Err(DataError::Dimension("need at least 1 covariate".into()));
        }
        for (i, x) in covariates.iter().enumerate() {
            if x.nrows() != n_times || x.ncols() != r {
                return Err(DataError::Dimension(format!(
                    "subject {} design is {}x{}, expected {n_times}x{r}",
                    i + 1,
                    x.nrows(),
                    x.ncols()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite(format!("covariates of subject {}", i + 1)));
            }
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite("responses".into()));
        }
        if let Some(labels) = &group_labels {
            if labels.len() != n_subjects {
                return Err(DataError::Dimension(
                    "group labels must cover every subject".into(),
                ));
            }
        }
        Ok(LongitudinalDataset {
            responses,
            covariates,
            group_labels,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.responses.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.responses.ncols()
    }

    /// Covariate dimension `r`.
    pub fn n_covariates(&self) -> usize {
        self.covariates[0].ncols()
    }

    /// Responses of subject `i` as a column vector of length `n`.
    pub fn response(&self, i: usize) -> DVector<f64> {
        self.responses.row(i).transpose()
    }

    /// Design matrix of subject `i` (`n×r`).
    pub fn design(&self, i: usize) -> &DMatrix<f64> {
        &self.covariates[i]
    }

    pub fn responses(&self) -> &DMatrix<f64> {
        &self.responses
    }

    pub fn group_labels(&self) -> Option<&[usize]> {
        self.group_labels.as_deref()
    }
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub subject: String,
    pub time: String,
    pub response: String,
    pub covariates: Vec<String>,
    /// Optional per-subject group column.
    pub group: Option<String>,
}

impl CsvSchema {
    /// The conventional layout: `subject, time, y, x1..xr`.
    pub fn standard(r: usize) -> Self {
        CsvSchema {
            subject: "subject".into(),
            time: "time".into(),
            response: "y".into(),
            covariates: (1..=r).map(|k| format!("x{k}")).collect(),
            group: None,
        }
    }

    pub fn with_group(mut self, column: &str) -> Self {
        self.group = Some(column.into());
        self
    }
}

struct Row {
    time: f64,
    y: f64,
    x: Vec<f64>,
    group: Option<usize>,
    line: usize,
}

/// Loads a balanced longitudinal dataset from a headed CSV file.
///
/// Subjects are ordered by first appearance, observations within a subject by
/// ascending time. Every subject must appear at exactly the same number of
/// distinct times.
pub fn load_dataset(path: &Path, schema: &CsvSchema) -> Result<LongitudinalDataset, DataError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| DataError::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::Parse {
                line: 1,
                message: format!("missing column '{name}'"),
            })
    };
    let subject_col = col(&schema.subject)?;
    let time_col = col(&schema.time)?;
    let y_col = col(&schema.response)?;
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>, _>>()?;
    let group_col = schema.group.as_deref().map(col).transpose()?;

    let parse = |field: &str, line: usize, what: &str| -> Result<f64, DataError> {
        let value = field.trim().parse::<f64>().map_err(|_| DataError::Parse {
            line,
            message: format!("non-numeric {what} '{field}'"),
        })?;
        if !value.is_finite() {
            return Err(DataError::Parse {
                line,
                message: format!("non-finite {what} '{field}'"),
            });
        }
        Ok(value)
    };

    let mut order: Vec<String> = Vec::new();
    let mut by_subject: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| DataError::Parse {
            line,
            message: e.to_string(),
        })?;
        let subject = record
            .get(subject_col)
            .unwrap_or_default()
            .trim()
            .to_string();
        let time = parse(record.get(time_col).unwrap_or_default(), line, "time")?;
        let y = parse(record.get(y_col).unwrap_or_default(), line, "response")?;
        let x = x_cols
            .iter()
            .map(|&c| parse(record.get(c).unwrap_or_default(), line, "covariate"))
            .collect::<Result<Vec<_>, _>>()?;
        let group = match group_col {
            Some(c) => {
                let field = record.get(c).unwrap_or_default().trim();
                Some(field.parse::<usize>().map_err(|_| DataError::Parse {
                    line,
                    message: format!("non-integer group '{field}'"),
                })?)
            }
            None => None,
        };
        if !by_subject.contains_key(&subject) {
            order.push(subject.clone());
        }
        by_subject.entry(subject).or_default().push(Row {
            time,
            y,
            x,
            group,
            line,
        });
    }

    if order.len() < 2 {
        return Err(DataError::Dimension(format!(
            "found {} subjects, need at least 2",
            order.len()
        )));
    }
    let n_times = by_subject[&order[0]].len();
    let r = schema.covariates.len();

    let mut responses = DMatrix::zeros(order.len(), n_times);
    let mut covariates = Vec::with_capacity(order.len());
    let mut groups = Vec::with_capacity(order.len());
    let mut has_groups = false;
    for (i, subject) in order.iter().enumerate() {
        let rows = by_subject.get_mut(subject).unwrap();
        rows.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap_or(std::cmp::Ordering::Equal));
        for pair in rows.windows(2) {
            if pair[0].time == pair[1].time {
                return Err(DataError::Duplicate {
                    subject: subject.clone(),
                    time: format!("{}", pair[0].time),
                });
            }
        }
        if rows.len() != n_times {
            return Err(DataError::Balance {
                subject: subject.clone(),
                found: rows.len(),
                expected: n_times,
            });
        }
        let mut x = DMatrix::zeros(n_times, r);
        for (j, row) in rows.iter().enumerate() {
            responses[(i, j)] = row.y;
            for (k, &v) in row.x.iter().enumerate() {
                x[(j, k)] = v;
            }
            if !row.y.is_finite() || row.x.iter().any(|v| !v.is_finite()) {
                return Err(DataError::Parse {
                    line: row.line,
                    message: "non-finite value".into(),
                });
            }
        }
        covariates.push(x);
        if let Some(g) = rows[0].group {
            has_groups = true;
            groups.push(g);
        } else {
            groups.push(0);
        }
    }

    LongitudinalDataset::new(responses, covariates, has_groups.then_some(groups))
}

/// Writes a dataset as CSV in the standard layout, with subjects numbered by
/// position and times as ordinals. Floats are printed in shortest
/// round-trippable form, so `load_dataset` reproduces the dataset exactly.
pub fn write_dataset(dataset: &LongitudinalDataset, path: &Path) -> Result<(), DataError> {
    let r = dataset.n_covariates();
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = String::from("subject,time,y");
    for k in 1..=r {
        header.push_str(&format!(",x{k}"));
    }
    if dataset.group_labels().is_some() {
        header.push_str(",group");
    }
    writeln!(file, "{header}")?;
    for i in 0..dataset.n_subjects() {
        let x = dataset.design(i);
        for j in 0..dataset.n_times() {
            let mut line = format!("{},{},{}", i + 1, j + 1, dataset.responses()[(i, j)]);
            for k in 0..r {
                line.push_str(&format!(",{}", x[(j, k)]));
            }
            if let Some(labels) = dataset.group_labels() {
                line.push_str(&format!(",{}", labels[i]));
            }
            writeln!(file, "{line}")?;
        }
    }
    Ok(())
}
