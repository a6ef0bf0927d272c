//! CSV ingest and export for exam datasets.
//!
//! Fixed 46-column schema, UTF-8, LF line endings, `.` decimal separator.
//! Temperatures are written with Rust's shortest round-trip float
//! formatting, so write -> parse reproduces every value bit for bit.
//! No quoting: ids must not contain commas.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Dataset, Label, MwrExam, FEATURES, TEMP_MAX, TEMP_MIN};
use crate::error::{Error, Result};

/// The exact header row, one exam per following line.
pub const CSV_HEADER: &str = "id,label,l_skin_0,l_skin_1,l_skin_2,l_skin_3,l_skin_4,l_skin_5,l_skin_6,l_skin_7,l_skin_8,l_skin_9,l_int_0,l_int_1,l_int_2,l_int_3,l_int_4,l_int_5,l_int_6,l_int_7,l_int_8,l_int_9,r_skin_0,r_skin_1,r_skin_2,r_skin_3,r_skin_4,r_skin_5,r_skin_6,r_skin_7,r_skin_8,r_skin_9,r_int_0,r_int_1,r_int_2,r_int_3,r_int_4,r_int_5,r_int_6,r_int_7,r_int_8,r_int_9,t1_skin,t1_int,t2_skin,t2_int";

fn column_names() -> Vec<&'static str> {
    CSV_HEADER.split(',').collect()
}

pub fn write_csv_string(dataset: &Dataset) -> String {
    let mut out = String::with_capacity(64 * (dataset.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for exam in &dataset.exams {
        out.push_str(&exam.id);
        let _ = write!(out, ",{}", exam.label.as_u8());
        for v in &exam.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, write_csv_string(dataset))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn parse_csv_reader(content: &str, origin: &str) -> Result<Dataset> {
    let columns = column_names();
    let mut lines = content.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(format!("{origin}, row 1"), "missing header"))?;
    if header.trim_end() != CSV_HEADER {
        return Err(Error::parse(
            format!("{origin}, row 1"),
            format!("header does not match schema (expected {} columns)", columns.len()),
        ));
    }

    let mut exams = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2; // 1-based, after the header
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            // Name the first column that is missing (or report the overflow).
            let msg = if fields.len() < columns.len() {
                format!(
                    "row has {} columns, missing `{}`",
                    fields.len(),
                    columns[fields.len()]
                )
            } else {
                format!("row has {} columns, expected {}", fields.len(), columns.len())
            };
            return Err(Error::parse(format!("{origin}, row {row}"), msg));
        }
        let id = fields[0].to_string();
        let label_raw: u8 = fields[1].parse().map_err(|_| {
            Error::parse(
                format!("{origin}, row {row}, column `label`"),
                format!("non-integer label `{}`", fields[1]),
            )
        })?;
        let label = Label::from_u8(label_raw).map_err(|_| {
            Error::parse(
                format!("{origin}, row {row}, column `label`"),
                format!("label must be 0 or 1, got {label_raw}"),
            )
        })?;
        let mut values = [0.0; FEATURES];
        for (k, value) in values.iter_mut().enumerate() {
            let col = columns[2 + k];
            let cell = fields[2 + k];
            let parsed: f64 = cell.parse().map_err(|_| {
                Error::parse(
                    format!("{origin}, row {row}, column `{col}`"),
                    format!("non-numeric cell `{cell}`"),
                )
            })?;
            if !(TEMP_MIN..=TEMP_MAX).contains(&parsed) {
                return Err(Error::parse(
                    format!("{origin}, row {row}, column `{col}`"),
                    format!("temperature {parsed} outside plausible range {TEMP_MIN}-{TEMP_MAX}"),
                ));
            }
            *value = parsed;
        }
        exams.push(MwrExam { id, label, values });
    }
    Ok(Dataset { exams })
}

pub fn parse_csv(path: &Path) -> Result<Dataset> {
    let content =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_csv_reader(&content, &path.display().to_string())
}
