//! CSV, TXT and Monash TSF readers producing [`TimeSeries`] values.
//!
//! All readers make a single pass over the input bytes. CSV and TXT go
//! through the `csv` crate's streaming reader; TSF is read line by line.

use std::collections::HashSet;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{Channel, Period, SeriesError, TimeSeries};

const NANOS_PER_SECOND: i64 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("timestamps are not strictly increasing at data row {row}")]
    NonMonotoneTimestamps { row: usize },
    #[error("no numeric value columns")]
    NoNumericColumns,
    #[error("line {line}: expected {expected} fields, found {got}")]
    RaggedRows {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: cannot parse timestamp `{value}`")]
    BadTimestamp { line: usize, value: String },
    #[error("timestamp column {0} is out of range")]
    BadTimestampColumn(usize),
    #[error("no @data section")]
    MissingDataSection,
    #[error("unknown frequency token `{0}`")]
    UnknownFrequencyToken(String),
    #[error("line {line}: expected {expected} attribute values, found {got}")]
    AttributeCountMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: {message}")]
    BadDirective { line: usize, message: String },
    #[error("line {line}: cannot parse value `{token}`")]
    BadValue { line: usize, token: String },
    #[error("duplicate series name `{0}`")]
    DuplicateSeriesName(String),
    #[error("dataset contains no series")]
    EmptyDataset,
    #[error("line {line}: invalid UTF-8")]
    Utf8 { line: usize },
    #[error("unsupported file extension `{0}`")]
    UnknownFormat(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Csv,
    Txt,
    Tsf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    String,
    Date,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsfAttribute {
    pub name: String,
    pub kind: AttributeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsfHeader {
    pub relation: Option<String>,
    pub attributes: Vec<TsfAttribute>,
    pub frequency: Option<String>,
    pub horizon: Option<u64>,
    pub missing: bool,
    pub equallength: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDataset {
    pub name: String,
    pub source_format: SourceFormat,
    pub series: Vec<TimeSeries>,
    pub tsf_header: Option<TsfHeader>,
}

impl ParsedDataset {
    fn new(
        name: String,
        source_format: SourceFormat,
        series: Vec<TimeSeries>,
        tsf_header: Option<TsfHeader>,
    ) -> Result<Self, IngestError> {
        if series.is_empty() {
            return Err(IngestError::EmptyDataset);
        }
        let mut seen = HashSet::new();
        for s in &series {
            if !seen.insert(s.name()) {
                return Err(IngestError::DuplicateSeriesName(s.name().to_owned()));
            }
        }
        Ok(Self {
            name,
            source_format,
            series,
            tsf_header,
        })
    }

    pub fn value_count(&self) -> usize {
        self.series
            .iter()
            .map(|s| s.len() * s.channel_count())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    /// Field delimiter; `None` sniffs one from the first line.
    pub delimiter: Option<u8>,
    pub timestamp_column: usize,
    pub header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: Some(b','),
            timestamp_column: 0,
            header: true,
        }
    }
}

/// Parses delimited text with one timestamp column and numeric value columns.
///
/// The timestamp column holds either ISO-8601 datetimes or integer indices;
/// integer `i` maps to `i` seconds after the epoch. Columns containing any
/// non-numeric, non-empty cell are dropped. Empty cells become NaN. The
/// sampling period is set when all consecutive timestamp gaps are equal.
pub fn parse_csv(name: &str, bytes: &[u8], options: &CsvOptions) -> Result<ParsedDataset, IngestError> {
    let delimiter = options.delimiter.unwrap_or_else(|| sniff_delimiter(bytes));
    let series = read_delimited(name, bytes, delimiter, options)?;
    ParsedDataset::new(name.to_owned(), SourceFormat::Csv, vec![series], None)
}

/// TXT input: CSV with a delimiter sniffed from `, ; tab space`. Runs of
/// spaces count as one separator when space is chosen.
pub fn parse_txt(name: &str, bytes: &[u8], header: bool) -> Result<ParsedDataset, IngestError> {
    let delimiter = sniff_delimiter(bytes);
    let options = CsvOptions {
        delimiter: Some(delimiter),
        timestamp_column: 0,
        header,
    };
    let series = if delimiter == b' ' {
        read_delimited(name, &collapse_spaces(bytes), delimiter, &options)?
    } else {
        read_delimited(name, bytes, delimiter, &options)?
    };
    ParsedDataset::new(name.to_owned(), SourceFormat::Txt, vec![series], None)
}

/// Dispatches on the file extension (`csv`, `txt`, `tsf`).
pub fn parse_by_extension(file_name: &str, bytes: &[u8]) -> Result<ParsedDataset, IngestError> {
    let path = Path::new(file_name);
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    let ext = path
        .extension()
        .and_then(|s| s.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "csv" => parse_csv(stem, bytes, &CsvOptions::default()),
        "txt" => parse_txt(stem, bytes, true),
        "tsf" => parse_tsf(bytes),
        other => Err(IngestError::UnknownFormat(other.to_owned())),
    }
}

pub fn parse_path(path: &Path) -> Result<ParsedDataset, IngestError> {
    let bytes = std::fs::read(path)?;
    let file_name = path
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    parse_by_extension(file_name, &bytes)
}

fn sniff_delimiter(bytes: &[u8]) -> u8 {
    let first = bytes
        .split(|&b| b == b'\n')
        .find(|l| !l.iter().all(u8::is_ascii_whitespace))
        .unwrap_or(&[]);
    let mut best = (0usize, b' ');
    for cand in *b",;\t" {
        let count = first.iter().filter(|&&b| b == cand).count();
        if count > best.0 {
            best = (count, cand);
        }
    }
    best.1
}

fn collapse_spaces(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes.len());
    for line in bytes.split(|&b| b == b'\n') {
        let mut prev_space = true;
        let start = out.len();
        for &b in line {
            if b == b' ' || b == b'\t' {
                if !prev_space {
                    out.push(b' ');
                }
                prev_space = true;
            } else if b != b'\r' {
                out.push(b);
                prev_space = false;
            }
        }
        if out.len() > start && out.last() == Some(&b' ') {
            out.pop();
        }
        out.push(b'\n');
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
enum IndexMode {
    Integer,
    DateTime,
}

fn read_delimited(
    name: &str,
    bytes: &[u8],
    delimiter: u8,
    options: &CsvOptions,
) -> Result<TimeSeries, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let ts_col = options.timestamp_column;
    let mut names: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    let mut timestamps: Vec<i64> = Vec::new();
    // None once a column has seen a non-numeric cell.
    let mut columns: Vec<Option<Vec<f64>>> = Vec::new();
    let mut mode: Option<IndexMode> = None;
    let mut record = csv::StringRecord::new();
    let mut first = true;

    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => {
                if ts_col >= record.len() {
                    return Err(IngestError::BadTimestampColumn(ts_col));
                }
                width = Some(record.len());
                columns = (0..record.len()).map(|_| Some(Vec::new())).collect();
                names = (0..record.len()).map(|j| format!("col{j}")).collect();
            }
            Some(expected) if expected != record.len() => {
                return Err(IngestError::RaggedRows {
                    line,
                    expected,
                    got: record.len(),
                });
            }
            Some(_) => {}
        }
        if first && options.header {
            first = false;
            names = record.iter().map(str::to_owned).collect();
            continue;
        }
        first = false;

        let raw_ts = &record[ts_col];
        let mode = *mode.get_or_insert_with(|| {
            if raw_ts.parse::<i64>().is_ok() {
                IndexMode::Integer
            } else {
                IndexMode::DateTime
            }
        });
        let ts = match mode {
            IndexMode::Integer => raw_ts
                .parse::<i64>()
                .ok()
                .and_then(|i| i.checked_mul(NANOS_PER_SECOND)),
            IndexMode::DateTime => parse_datetime(raw_ts),
        }
        .ok_or_else(|| IngestError::BadTimestamp {
            line,
            value: raw_ts.to_owned(),
        })?;
        timestamps.push(ts);

        for (j, cell) in record.iter().enumerate() {
            if j == ts_col {
                continue;
            }
            if let Some(col) = &mut columns[j] {
                if cell.is_empty() {
                    col.push(f64::NAN);
                } else if let Ok(v) = cell.parse::<f64>() {
                    col.push(v);
                } else {
                    columns[j] = None;
                }
            }
        }
    }

    if timestamps.is_empty() {
        return Err(IngestError::NoNumericColumns);
    }
    let channels: Vec<Channel> = columns
        .into_iter()
        .enumerate()
        .filter(|(j, _)| *j != ts_col)
        .filter_map(|(j, col)| col.map(|values| Channel::new(names[j].clone(), values)))
        .collect();
    if channels.is_empty() {
        return Err(IngestError::NoNumericColumns);
    }
    if let Some(row) = timestamps.windows(2).position(|w| w[0] >= w[1]) {
        return Err(IngestError::NonMonotoneTimestamps { row: row + 1 });
    }
    let frequency = infer_period(&timestamps);
    Ok(TimeSeries::new(name, timestamps, channels, frequency)?)
}

/// Common gap between timestamps when all gaps are equal.
fn infer_period(timestamps: &[i64]) -> Option<Period> {
    let gap = timestamps.get(1)? - timestamps[0];
    if gap <= 0 || timestamps.windows(2).any(|w| w[1] - w[0] != gap) {
        return None;
    }
    Some(Period::new(gap as u64, NANOS_PER_SECOND as u64))
}

const DATETIME_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%d %H-%M-%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// ISO-8601 (with or without offset), Monash `YYYY-MM-DD HH-MM-SS`, or a
/// bare date; result in epoch nanoseconds.
pub fn parse_datetime(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return dt.timestamp_nanos_opt();
    }
    for fmt in DATETIME_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return dt.and_utc().timestamp_nanos_opt();
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .and_then(|dt| dt.and_utc().timestamp_nanos_opt())
}

/// Seconds for the supported `@frequency` tokens.
pub fn frequency_token_seconds(token: &str) -> Option<u64> {
    match token {
        "4_seconds" => Some(4),
        "minutely" => Some(60),
        "10_minutes" => Some(600),
        "hourly" => Some(3600),
        "daily" => Some(86_400),
        _ => None,
    }
}

fn parse_bool(line: usize, directive: &str, value: Option<&str>) -> Result<bool, IngestError> {
    match value.map(str::to_ascii_lowercase).as_deref() {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        _ => Err(IngestError::BadDirective {
            line,
            message: format!("@{directive} expects true or false"),
        }),
    }
}

/// Parses a Monash `.tsf` file: one [`TimeSeries`] per `@data` line.
pub fn parse_tsf(bytes: &[u8]) -> Result<ParsedDataset, IngestError> {
    let mut header = TsfHeader {
        relation: None,
        attributes: Vec::new(),
        frequency: None,
        horizon: None,
        missing: false,
        equallength: false,
    };
    let mut period: Option<u64> = None;
    let mut in_data = false;
    let mut series = Vec::new();

    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| IngestError::Utf8 { line: line_no })?
            .trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            let Some(directive) = line.strip_prefix('@') else {
                return Err(IngestError::BadDirective {
                    line: line_no,
                    message: "data line before @data".into(),
                });
            };
            let mut parts = directive.split_whitespace();
            let key = parts.next().unwrap_or("").to_ascii_lowercase();
            match key.as_str() {
                "relation" => header.relation = parts.next().map(str::to_owned),
                "attribute" => {
                    let (Some(name), Some(kind)) = (parts.next(), parts.next()) else {
                        return Err(IngestError::BadDirective {
                            line: line_no,
                            message: "@attribute expects a name and a type".into(),
                        });
                    };
                    let kind = match kind.to_ascii_lowercase().as_str() {
                        "string" => AttributeKind::String,
                        "date" => AttributeKind::Date,
                        "numeric" => AttributeKind::Numeric,
                        other => {
                            return Err(IngestError::BadDirective {
                                line: line_no,
                                message: format!("unknown attribute type `{other}`"),
                            })
                        }
                    };
                    header.attributes.push(TsfAttribute {
                        name: name.to_owned(),
                        kind,
                    });
                }
                "frequency" => {
                    let token = parts.next().unwrap_or("");
                    period = Some(
                        frequency_token_seconds(token)
                            .ok_or_else(|| IngestError::UnknownFrequencyToken(token.to_owned()))?,
                    );
                    header.frequency = Some(token.to_owned());
                }
                "horizon" => {
                    header.horizon = Some(parts.next().and_then(|h| h.parse().ok()).ok_or_else(
                        || IngestError::BadDirective {
                            line: line_no,
                            message: "@horizon expects an integer".into(),
                        },
                    )?)
                }
                "missing" => header.missing = parse_bool(line_no, "missing", parts.next())?,
                "equallength" => {
                    header.equallength = parse_bool(line_no, "equallength", parts.next())?
                }
                "data" => {
                    if header.attributes.is_empty() {
                        return Err(IngestError::BadDirective {
                            line: line_no,
                            message: "@data requires at least one @attribute".into(),
                        });
                    }
                    in_data = true;
                }
                // Other Monash directives carry nothing the reader needs.
                _ => {}
            }
            continue;
        }

        let index = series.len();
        series.push(parse_tsf_row(&header, period, line, line_no, index)?);
    }

    if !in_data {
        return Err(IngestError::MissingDataSection);
    }
    let name = header.relation.clone().unwrap_or_else(|| "tsf".to_owned());
    ParsedDataset::new(name, SourceFormat::Tsf, series, Some(header))
}

fn parse_tsf_row(
    header: &TsfHeader,
    period: Option<u64>,
    line: &str,
    line_no: usize,
    index: usize,
) -> Result<TimeSeries, IngestError> {
    let n_attrs = header.attributes.len();
    let (attr_part, value_part) = line.rsplit_once(':').ok_or(IngestError::AttributeCountMismatch {
        line: line_no,
        expected: n_attrs,
        got: 0,
    })?;
    let fields: Vec<&str> = attr_part.split(':').collect();
    let date_pos = header
        .attributes
        .iter()
        .position(|a| a.kind == AttributeKind::Date);
    // ISO dates contain ':'; the date attribute absorbs the surplus fields.
    let attrs: Vec<String> = match (fields.len().cmp(&n_attrs), date_pos) {
        (std::cmp::Ordering::Equal, _) => fields.iter().map(|s| s.to_string()).collect(),
        (std::cmp::Ordering::Greater, Some(d)) => {
            let extra = fields.len() - n_attrs;
            let mut out: Vec<String> = fields[..d].iter().map(|s| s.to_string()).collect();
            out.push(fields[d..=d + extra].join(":"));
            out.extend(fields[d + extra + 1..].iter().map(|s| s.to_string()));
            out
        }
        _ => {
            return Err(IngestError::AttributeCountMismatch {
                line: line_no,
                expected: n_attrs,
                got: fields.len(),
            })
        }
    };

    let mut name = None;
    let mut start_ns = 0i64;
    for (attr, value) in header.attributes.iter().zip(&attrs) {
        match attr.kind {
            AttributeKind::String if name.is_none() => name = Some(value.clone()),
            AttributeKind::Date => {
                start_ns = parse_datetime(value).ok_or_else(|| IngestError::BadTimestamp {
                    line: line_no,
                    value: value.clone(),
                })?;
            }
            _ => {}
        }
    }
    let name = name.unwrap_or_else(|| format!("series_{index}"));

    let values = value_part
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            if tok == "?" {
                Ok(f64::NAN)
            } else {
                tok.parse::<f64>().map_err(|_| IngestError::BadValue {
                    line: line_no,
                    token: tok.to_owned(),
                })
            }
        })
        .collect::<Result<Vec<f64>, _>>()?;

    let step = period.unwrap_or(1) as i64 * NANOS_PER_SECOND;
    let timestamps = (0..values.len() as i64).map(|i| start_ns + i * step).collect();
    Ok(TimeSeries::new(
        name.clone(),
        timestamps,
        vec![Channel::new(name, values)],
        Some(Period::from_integer(period.unwrap_or(1))),
    )?)
}
