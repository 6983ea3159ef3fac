//! CSV ingestion and emission.
//!
//! * responses: `subject_id,task_id,response`, one row per cell (long format)
//! * stimuli: `task_id,x1,..,xd`
//! * covariates: `subject_id,z1,..,zq`, binary
//!
//! Tasks follow the stimuli file order, subjects their first appearance in
//! the responses file.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sieve_core::estimator::ExperimentData;

use crate::error::{CliError, CliResult};

/// Fixed 17-significant-digit rendering used in every CSV we write.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn open(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    CliError::schema(path, line, e.to_string())
}

fn header(path: &Path, reader: &mut csv::Reader<std::fs::File>) -> CliResult<Vec<String>> {
    Ok(reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect())
}

/// Rows as `(line, fields)`.
fn rows(path: &Path, reader: &mut csv::Reader<std::fs::File>, width: usize) -> CliResult<Vec<(u64, Vec<String>)>> {
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(CliError::schema(
                path,
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn number(path: &Path, line: u64, column: &str, field: &str) -> CliResult<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::schema(
            path,
            line,
            format!("column '{column}': '{field}' is not a finite number"),
        )),
    }
}

fn expect_indexed_header(path: &Path, got: &[String], first: &str, prefix: &str) -> CliResult<usize> {
    let k = got.len().saturating_sub(1);
    let want: Vec<String> = std::iter::once(first.to_string())
        .chain((1..=k).map(|j| format!("{prefix}{j}")))
        .collect();
    if k == 0 || got != want.as_slice() {
        return Err(CliError::schema(
            path,
            1,
            format!("header must be {first},{prefix}1,..,{prefix}k; found '{}'", got.join(",")),
        ));
    }
    Ok(k)
}

#[derive(Debug, Clone)]
pub struct Stimuli {
    pub task_ids: Vec<String>,
    pub points: DMatrix<f64>,
}

pub fn read_stimuli(path: &Path) -> CliResult<Stimuli> {
    let mut rdr = open(path)?;
    let head = header(path, &mut rdr)?;
    let d = expect_indexed_header(path, &head, "task_id", "x")?;
    let body = rows(path, &mut rdr, d + 1)?;
    if body.is_empty() {
        return Err(CliError::schema(path, 1, "no tasks"));
    }
    let mut seen = HashMap::new();
    let mut task_ids = Vec::with_capacity(body.len());
    let mut points = DMatrix::zeros(body.len(), d);
    for (t, (line, fields)) in body.iter().enumerate() {
        if let Some(prev) = seen.insert(fields[0].clone(), *line) {
            return Err(CliError::schema(
                path,
                *line,
                format!("task '{}' already defined on line {prev}", fields[0]),
            ));
        }
        task_ids.push(fields[0].clone());
        for k in 0..d {
            points[(t, k)] = number(path, *line, &head[k + 1], &fields[k + 1])?;
        }
    }
    Ok(Stimuli { task_ids, points })
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub subject_ids: Vec<String>,
    pub responses: DMatrix<f64>,
}

/// Long-format responses joined to the stimuli tasks; every cell must be present exactly once.
pub fn read_responses(path: &Path, task_ids: &[String]) -> CliResult<Panel> {
    let mut rdr = open(path)?;
    let head = header(path, &mut rdr)?;
    if head != ["subject_id", "task_id", "response"] {
        return Err(CliError::schema(
            path,
            1,
            format!("header must be subject_id,task_id,response; found '{}'", head.join(",")),
        ));
    }
    let task_index: HashMap<&str, usize> = task_ids.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
    let mut subject_index: HashMap<String, usize> = HashMap::new();
    let mut subject_ids = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (line, f) in rows(path, &mut rdr, 3)? {
        let j = *task_index.get(f[1].as_str()).ok_or_else(|| {
            CliError::schema(path, line, format!("task '{}' is not in the stimuli file", f[1]))
        })?;
        let i = *subject_index.entry(f[0].clone()).or_insert_with(|| {
            subject_ids.push(f[0].clone());
            cells.push(vec![None; task_ids.len()]);
            subject_ids.len() - 1
        });
        // an empty or NA response is a missing cell, caught by the completeness check
        if f[2].is_empty() || f[2] == "NA" {
            continue;
        }
        let v = number(path, line, "response", &f[2])?;
        if cells[i][j].replace(v).is_some() {
            return Err(CliError::schema(
                path,
                line,
                format!("duplicate response for subject '{}', task '{}'", f[0], f[1]),
            ));
        }
    }
    if subject_ids.is_empty() {
        return Err(CliError::schema(path, 1, "no responses"));
    }
    let n = subject_ids.len();
    let mut responses = DMatrix::zeros(n, task_ids.len());
    for i in 0..n {
        for (j, cell) in cells[i].iter().enumerate() {
            match cell {
                Some(v) => responses[(i, j)] = *v,
                None => {
                    return Err(CliError::IncompletePanel {
                        subject: subject_ids[i].clone(),
                        task: task_ids[j].clone(),
                    })
                }
            }
        }
    }
    Ok(Panel {
        subject_ids,
        responses,
    })
}

/// `n x q` covariates aligned to `subject_ids`.
pub fn read_covariates(path: &Path, subject_ids: &[String]) -> CliResult<DMatrix<f64>> {
    let mut rdr = open(path)?;
    let head = header(path, &mut rdr)?;
    let q = expect_indexed_header(path, &head, "subject_id", "z")?;
    let mut by_subject: HashMap<String, (u64, Vec<f64>)> = HashMap::new();
    for (line, f) in rows(path, &mut rdr, q + 1)? {
        let mut z = Vec::with_capacity(q);
        for k in 0..q {
            let v = number(path, line, &head[k + 1], &f[k + 1])?;
            if v != 0.0 && v != 1.0 {
                return Err(CliError::schema(
                    path,
                    line,
                    format!("column '{}': covariates must be 0 or 1, found {v}", head[k + 1]),
                ));
            }
            z.push(v);
        }
        if let Some((prev, _)) = by_subject.insert(f[0].clone(), (line, z)) {
            return Err(CliError::schema(
                path,
                line,
                format!("subject '{}' already listed on line {prev}", f[0]),
            ));
        }
    }
    let mut out = DMatrix::zeros(subject_ids.len(), q);
    for (i, s) in subject_ids.iter().enumerate() {
        let (_, z) = by_subject.get(s).ok_or_else(|| {
            CliError::schema(path, 0, format!("no covariates for subject '{s}'"))
        })?;
        for k in 0..q {
            out[(i, k)] = z[k];
        }
    }
    Ok(out)
}

/// Joined, validated panel.
pub fn load_experiment(
    responses: &Path,
    stimuli: &Path,
    covariates: Option<&Path>,
    domain: &[(f64, f64)],
) -> CliResult<ExperimentData> {
    let stim = read_stimuli(stimuli)?;
    if stim.points.ncols() != domain.len() {
        return Err(CliError::schema(
            stimuli,
            1,
            format!(
                "stimuli have {} coordinates but the basis has {} axes",
                stim.points.ncols(),
                domain.len()
            ),
        ));
    }
    let panel = read_responses(responses, &stim.task_ids)?;
    let z = covariates.map(|p| read_covariates(p, &panel.subject_ids)).transpose()?;
    let mut data = ExperimentData::new(panel.responses, stim.points, domain.to_vec())
        .map_err(|e| match e {
            sieve_core::SieveError::AtRow { row, source } => CliError::schema(
                stimuli,
                row as u64 + 2,
                format!("task '{}': {source}", stim.task_ids[row]),
            ),
            other => other.into(),
        })?
        .with_ids(panel.subject_ids, stim.task_ids)?;
    if let Some(z) = z {
        data = data.with_covariates(z)?;
    }
    Ok(data)
}

/// Numeric matrix with a header row; `header` checks the column names.
pub fn read_matrix(path: &Path, header_check: impl Fn(&[String]) -> Result<(), String>) -> CliResult<DMatrix<f64>> {
    let mut rdr = open(path)?;
    let head = header(path, &mut rdr)?;
    header_check(&head).map_err(|m| CliError::schema(path, 1, m))?;
    let body = rows(path, &mut rdr, head.len())?;
    let mut m = DMatrix::zeros(body.len(), head.len());
    for (r, (line, f)) in body.iter().enumerate() {
        for c in 0..head.len() {
            m[(r, c)] = number(path, *line, &head[c], &f[c])?;
        }
    }
    Ok(m)
}

/// Restriction file: header `c1,..,cP,gamma0`, one row per restriction.
pub fn read_restriction(path: &Path, params: usize) -> CliResult<(DMatrix<f64>, DVector<f64>)> {
    let m = read_matrix(path, |head| {
        let want: Vec<String> = (1..=params)
            .map(|j| format!("c{j}"))
            .chain(std::iter::once("gamma0".to_string()))
            .collect();
        if head == want.as_slice() {
            Ok(())
        } else {
            Err(format!(
                "header must be c1,..,c{params},gamma0 for a basis with {params} terms; found '{}'",
                head.join(",")
            ))
        }
    })?;
    if m.nrows() == 0 {
        return Err(CliError::schema(path, 1, "no restriction rows"));
    }
    Ok((m.columns(0, params).into_owned(), m.column(params).into_owned()))
}

/// Known `T x T` covariance whose header lists the task ids in stimuli order.
pub fn read_sigma(path: &Path, task_ids: &[String]) -> CliResult<DMatrix<f64>> {
    let m = read_matrix(path, |head| {
        if head == task_ids {
            Ok(())
        } else {
            Err(format!(
                "header must list the {} task ids in stimuli order",
                task_ids.len()
            ))
        }
    })?;
    if m.nrows() != task_ids.len() {
        return Err(CliError::schema(
            path,
            1,
            format!("expected {} rows, found {}", task_ids.len(), m.nrows()),
        ));
    }
    Ok(m)
}

/// Rendered CSV text from a header and numeric or string rows.
pub fn render(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing to memory cannot fail
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn stimuli_csv(task_ids: &[String], points: &DMatrix<f64>) -> Vec<u8> {
    let header: Vec<String> = std::iter::once("task_id".to_string())
        .chain((1..=points.ncols()).map(|k| format!("x{k}")))
        .collect();
    let rows: Vec<Vec<String>> = (0..points.nrows())
        .map(|t| {
            std::iter::once(task_ids[t].clone())
                .chain(points.row(t).iter().map(|&v| fmt_f64(v)))
                .collect()
        })
        .collect();
    render(&header, &rows)
}

pub fn responses_csv(subject_ids: &[String], task_ids: &[String], y: &DMatrix<f64>) -> Vec<u8> {
    let header = ["subject_id", "task_id", "response"].map(String::from);
    let mut rows = Vec::with_capacity(y.len());
    for (i, s) in subject_ids.iter().enumerate() {
        for (j, t) in task_ids.iter().enumerate() {
            rows.push(vec![s.clone(), t.clone(), fmt_f64(y[(i, j)])]);
        }
    }
    render(&header, &rows)
}
