//! Long-format dataset CSV.
//!
//! Canonical header:
//! `subject_id,visit_index,years_since_baseline,age_at_visit,dx,educ,gender,race_lat,outcome`.
//! Numbers are written in shortest round-trip form with a `.` decimal point,
//! switching to scientific notation below `1e-4` in magnitude. Reading
//! accepts the columns in any order; day-based files carry
//! `days_since_baseline` in place of `visit_index` and `years_since_baseline`.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::{derive_timing, validate_dataset, DayRecord, LongitudinalDataset, VisitRecord};
use crate::error::{Error, Result};

pub const DATASET_HEADER: [&str; 9] = [
    "subject_id",
    "visit_index",
    "years_since_baseline",
    "age_at_visit",
    "dx",
    "educ",
    "gender",
    "race_lat",
    "outcome",
];

pub const DAYS_HEADER: [&str; 8] = [
    "subject_id",
    "days_since_baseline",
    "age_at_visit",
    "dx",
    "educ",
    "gender",
    "race_lat",
    "outcome",
];

/// Locale-independent number formatting used by every emitted file.
pub fn format_number(x: f64) -> String {
    if x != 0.0 && x.is_finite() && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn write_dataset<W: Write>(dataset: &LongitudinalDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Write(e.to_string());
    w.write_record(DATASET_HEADER).map_err(io)?;
    for r in dataset.records() {
        w.write_record([
            r.subject_id.clone(),
            r.visit_index.to_string(),
            format_number(r.years_since_baseline),
            format_number(r.age_at_visit),
            r.dx.to_string(),
            format_number(r.educ),
            format_number(r.gender),
            format_number(r.race_lat),
            format_number(r.outcome),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Write(e.to_string()))?;
    Ok(())
}

pub fn write_dataset_file(dataset: &LongitudinalDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = std::io::BufWriter::new(file);
    write_dataset(dataset, &mut buf)?;
    buf.flush().map_err(|e| Error::io(path, e))
}

struct Columns {
    index: Vec<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord, wanted: &[&str]) -> Result<Self> {
        let mut index = Vec::with_capacity(wanted.len());
        let mut missing = Vec::new();
        for name in wanted {
            match headers.iter().position(|h| h.trim() == *name) {
                Some(i) => index.push(i),
                None => missing.push(name.to_string()),
            }
        }
        if missing.is_empty() {
            Ok(Self { index })
        } else {
            Err(Error::Schema { missing })
        }
    }
}

struct Row<'a> {
    rec: &'a csv::StringRecord,
    cols: &'a Columns,
    names: &'a [&'a str],
    line: u64,
}

impl Row<'_> {
    fn raw(&self, k: usize) -> Result<&str> {
        self.rec
            .get(self.cols.index[k])
            .map(str::trim)
            .ok_or_else(|| Error::Parse {
                line: self.line,
                message: format!("missing field {}", self.names[k]),
            })
    }

    fn parse<T: std::str::FromStr>(&self, k: usize) -> Result<T> {
        let s = self.raw(k)?;
        s.parse().map_err(|_| Error::Parse {
            line: self.line,
            message: format!("cannot parse {} from {s:?}", self.names[k]),
        })
    }
}

fn read_rows<R: Read, T>(
    input: R,
    names: &[&str],
    mut convert: impl FnMut(&Row) -> Result<T>,
) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let cols = Columns::locate(&headers, names)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        out.push(convert(&Row {
            rec: &rec,
            cols: &cols,
            names,
            line,
        })?);
    }
    Ok(out)
}

/// Read visit rows without validation.
pub fn read_visit_records<R: Read>(input: R) -> Result<Vec<VisitRecord>> {
    read_rows(input, &DATASET_HEADER, |row| {
        Ok(VisitRecord {
            subject_id: row.raw(0)?.to_string(),
            visit_index: row.parse(1)?,
            years_since_baseline: row.parse(2)?,
            age_at_visit: row.parse(3)?,
            dx: row.parse(4)?,
            educ: row.parse(5)?,
            gender: row.parse(6)?,
            race_lat: row.parse(7)?,
            outcome: row.parse(8)?,
        })
    })
}

pub fn read_day_records<R: Read>(input: R) -> Result<Vec<DayRecord>> {
    read_rows(input, &DAYS_HEADER, |row| {
        Ok(DayRecord {
            subject_id: row.raw(0)?.to_string(),
            days_since_baseline: row.parse(1)?,
            age_at_visit: row.parse(2)?,
            dx: row.parse(3)?,
            educ: row.parse(4)?,
            gender: row.parse(5)?,
            race_lat: row.parse(6)?,
            outcome: row.parse(7)?,
        })
    })
}

/// Read and validate a dataset. With `days_column`, timing is derived from
/// `days_since_baseline`.
pub fn read_dataset<R: Read>(input: R, days_column: bool) -> Result<LongitudinalDataset> {
    let records = if days_column {
        derive_timing(read_day_records(input)?)?
    } else {
        read_visit_records(input)?
    };
    validate_dataset(records)
}

pub fn read_dataset_file(path: &Path, days_column: bool) -> Result<LongitudinalDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(std::io::BufReader::new(file), days_column)
}
