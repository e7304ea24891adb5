//! Per-subject CSV ingestion and export.
//!
//! Header: `id,arm,baseline,y<week>...,disc_week,withdraw_week,withdraw_type`.
//! The visit grid comes from the `y` columns, `arm` is `0` (control) or `1`
//! (experimental), empty cells mean missing/none and `withdraw_type` is
//! `admin`, `other` or empty.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rdmi_core::model::{validate_dataset, Arm, SubjectRecord, TrialDataset, VisitGrid, WithdrawalType};
use thiserror::Error;

/// One problem with one input row (`row` is the 1-based line number).
#[derive(Debug, Clone, PartialEq)]
pub struct RowDiagnostic {
    pub row: usize,
    pub column: Option<String>,
    pub message: String,
}

impl fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.column {
            Some(c) => write!(f, "row {}: column `{c}`: {}", self.row, self.message),
            None => write!(f, "row {}: {}", self.row, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("{} invalid row(s):\n{}", .0.len(), join_lines(.0))]
    Rows(Vec<RowDiagnostic>),
}

fn join_lines(d: &[RowDiagnostic]) -> String {
    d.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

struct Layout {
    id: usize,
    arm: usize,
    baseline: usize,
    visits: Vec<usize>,
    disc: usize,
    withdraw: usize,
    withdraw_type: usize,
    grid: VisitGrid,
}

fn layout(headers: &csv::StringRecord) -> Result<Layout, IngestError> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::Header(format!("missing column `{name}`")))
    };
    let mut visits: Vec<(f64, usize)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(week) = h.trim().strip_prefix('y') {
            let t: f64 = week
                .parse()
                .map_err(|_| IngestError::Header(format!("visit column `{h}` must be `y<week>`")))?;
            visits.push((t, i));
        }
    }
    if visits.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(IngestError::Header(
            "visit columns must appear in increasing week order".into(),
        ));
    }
    let grid = VisitGrid::new(visits.iter().map(|v| v.0).collect()).map_err(|e| IngestError::Header(e.to_string()))?;
    Ok(Layout {
        id: find("id")?,
        arm: find("arm")?,
        baseline: find("baseline")?,
        visits: visits.iter().map(|v| v.1).collect(),
        disc: find("disc_week")?,
        withdraw: find("withdraw_week")?,
        withdraw_type: find("withdraw_type")?,
        grid,
    })
}

fn optional_f64(cell: &str) -> Result<Option<f64>, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("`{cell}` is not a finite number")),
    }
}

fn parse_row(
    rec: &csv::StringRecord,
    l: &Layout,
    headers: &csv::StringRecord,
    row: usize,
    out: &mut Vec<RowDiagnostic>,
) -> Option<SubjectRecord> {
    let mut ok = true;
    let mut fail = |col: usize, message: String| {
        out.push(RowDiagnostic {
            row,
            column: Some(headers[col].trim().to_string()),
            message,
        });
        ok = false;
    };
    let cell = |i: usize| rec.get(i).unwrap_or("").trim();

    let id = cell(l.id).to_string();
    if id.is_empty() {
        fail(l.id, "subject id is empty".into());
    }
    let arm = match cell(l.arm) {
        "0" => Some(Arm::Control),
        "1" => Some(Arm::Experimental),
        other => {
            fail(l.arm, format!("arm must be 0 or 1, got `{other}`"));
            None
        }
    };
    let baseline = match optional_f64(cell(l.baseline)) {
        Ok(Some(v)) => Some(v),
        Ok(None) => {
            fail(l.baseline, "baseline is required".into());
            None
        }
        Err(m) => {
            fail(l.baseline, m);
            None
        }
    };
    let mut outcomes = Vec::with_capacity(l.visits.len());
    for &c in &l.visits {
        match optional_f64(cell(c)) {
            Ok(v) => outcomes.push(v),
            Err(m) => {
                fail(c, m);
                outcomes.push(None);
            }
        }
    }
    let mut times = [None, None];
    for (slot, col) in times.iter_mut().zip([l.disc, l.withdraw]) {
        match optional_f64(cell(col)) {
            Ok(v) => *slot = v,
            Err(m) => fail(col, m),
        }
    }
    let withdraw_type = match cell(l.withdraw_type) {
        "" => None,
        "admin" => Some(WithdrawalType::Administrative),
        "other" => Some(WithdrawalType::Other),
        other => {
            fail(
                l.withdraw_type,
                format!("expected `admin`, `other` or empty, got `{other}`"),
            );
            None
        }
    };
    if !ok {
        return None;
    }
    let missing = outcomes.iter().map(Option::is_none).collect();
    Some(SubjectRecord {
        id,
        arm: arm?,
        baseline: baseline?,
        outcomes,
        missing,
        disc_time: times[0],
        withdraw_time: times[1],
        withdraw_type,
    })
}

/// Parses and validates a dataset; every bad row is reported.
pub fn read_dataset<R: Read>(reader: R, provenance: &str) -> Result<TrialDataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let l = layout(&headers)?;
    let mut diagnostics = Vec::new();
    let mut subjects = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != headers.len() {
            diagnostics.push(RowDiagnostic {
                row,
                column: None,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
            continue;
        }
        if let Some(s) = parse_row(&rec, &l, &headers, row, &mut diagnostics) {
            subjects.push(s);
            rows.push(row);
        }
    }
    if !diagnostics.is_empty() {
        return Err(IngestError::Rows(diagnostics));
    }
    let data = TrialDataset {
        grid: l.grid,
        subjects,
        provenance: provenance.to_string(),
    };
    let violations = validate_dataset(&data);
    if !violations.is_empty() {
        return Err(IngestError::Rows(
            violations
                .into_iter()
                .map(|v| RowDiagnostic {
                    row: rows[v.index],
                    column: None,
                    message: format!("subject `{}`: {}", v.id, v.violation),
                })
                .collect(),
        ));
    }
    Ok(data)
}

pub fn read_dataset_file(path: &Path) -> Result<TrialDataset, IngestError> {
    let file = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(file), &path.display().to_string())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes a dataset; numbers use the shortest representation that parses
/// back to the same value.
pub fn write_dataset<W: Write>(data: &TrialDataset, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "arm".into(), "baseline".into()];
    header.extend(data.grid.times().iter().map(|t| format!("y{t}")));
    header.extend(["disc_week".into(), "withdraw_week".into(), "withdraw_type".into()]);
    w.write_record(&header)?;
    for s in &data.subjects {
        let mut rec = vec![s.id.clone(), s.arm.code().to_string(), format!("{}", s.baseline)];
        rec.extend(s.outcomes.iter().map(|y| cell(*y)));
        rec.push(cell(s.disc_time));
        rec.push(cell(s.withdraw_time));
        rec.push(
            match s.withdraw_type {
                Some(WithdrawalType::Administrative) => "admin",
                Some(WithdrawalType::Other) => "other",
                None => "",
            }
            .to_string(),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
