//! Reading training-log CSVs back, with line-numbered errors.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::train::{LogRow, TrainingLog};

pub fn read_log(path: &Path, tag: impl Into<String>) -> Result<TrainingLog> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_log(path, &text, tag)
}

/// Parses text produced by [`TrainingLog::to_csv`].
pub fn parse_log(path: &Path, text: &str, tag: impl Into<String>) -> Result<TrainingLog> {
    let fail = |line: u64, msg: String| Error::Csv {
        path: path.into(),
        line: line as usize,
        msg,
    };
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| fail(1, e.to_string()))?.clone();
    let expected: Vec<&str> = TrainingLog::HEADER.split(',').collect();
    if header.iter().map(str::trim).collect::<Vec<_>>() != expected {
        return Err(fail(1, format!("expected header `{}`", TrainingLog::HEADER)));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            fail(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            return Err(fail(line, format!("expected {} fields, found {}", expected.len(), record.len())));
        }
        let field = |i: usize| record[i].trim();
        let float = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|_| fail(line, format!("{} `{}` is not a number", expected[i], field(i))))
        };
        let int = |i: usize| {
            field(i)
                .parse::<u64>()
                .map_err(|_| fail(line, format!("{} `{}` is not a non-negative integer", expected[i], field(i))))
        };
        rows.push(LogRow {
            epoch: int(0)? as usize,
            train_loss: float(1)?,
            clean_acc: float(2)?,
            noisy_acc: float(3)?,
            wall_ms: int(4)?,
        });
    }
    Ok(TrainingLog { tag: tag.into(), rows })
}
