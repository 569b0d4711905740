//! Recomputes a run's summary from its trace files.

use std::path::{Path, PathBuf};

use thiserror::Error;

use super::trace::{BackhaulMeter, DecisionRow, RateRow, Summary, Tally, DECISIONS_HEADER, RATES_HEADER};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: &'static str,
        line: usize,
        message: String,
    },
}

fn rows<'a>(file: &'static str, text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, &'a str)>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == header => Ok(lines.map(|(i, l)| (i + 1, l))),
        _ => Err(ReportError::Parse {
            file,
            line: 1,
            message: "unexpected header".into(),
        }),
    }
}

/// Replays decision and rate rows in file order.
pub fn summarize(decisions: &str, rates: &str) -> Result<Summary, ReportError> {
    let mut tally = Tally::default();
    for (line, text) in rows("decisions.log", decisions, DECISIONS_HEADER)? {
        let row = DecisionRow::parse(text).map_err(|message| ReportError::Parse {
            file: "decisions.log",
            line,
            message,
        })?;
        tally.feed(&row);
    }
    tally.finish();
    let mut meter = BackhaulMeter::default();
    for (line, text) in rows("rates.log", rates, RATES_HEADER)? {
        let row = RateRow::parse(text).map_err(|message| ReportError::Parse {
            file: "rates.log",
            line,
            message,
        })?;
        meter.feed(&row);
    }
    Ok(Summary::from_parts(&tally, &meter))
}

pub fn report(dir: &Path) -> Result<Summary, ReportError> {
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|e| ReportError::Io {
            path,
            message: e.to_string(),
        })
    };
    summarize(&read("decisions.log")?, &read("rates.log")?)
}
