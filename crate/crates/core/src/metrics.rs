//! Per-city sustainability metrics and the delta comparison between the
//! two recommendation sets.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::domain::{delta_s, MetricsDelta, SustainabilityMetrics};

pub const HEADER: [&str; 6] = [
    "city",
    "country",
    "co2_index",
    "visitor_pressure",
    "seasonality_index",
    "walkability",
];

const BUNDLED_CSV: &str = include_str!("../data/city_metrics.csv");

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("metrics file is empty")]
    Empty,
    #[error("unexpected header {found:?}, expected {HEADER:?}")]
    Header { found: Vec<String> },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: {city} {column} = {value} outside [0, 1]")]
    OutOfRange {
        line: u64,
        city: String,
        column: &'static str,
        value: f64,
    },
    #[error("line {line}: duplicate city key {key:?}")]
    Duplicate { line: u64, key: String },
    #[error("no data rows")]
    NoRows,
}

/// Lowercased, trimmed, diacritics-folded lookup key.
pub fn city_key(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for ch in name.trim().nfd() {
        if is_combining_mark(ch) {
            continue;
        }
        match ch {
            'ø' | 'Ø' => out.push('o'),
            'æ' | 'Æ' => out.push_str("ae"),
            'ß' => out.push_str("ss"),
            'ł' | 'Ł' => out.push('l'),
            'đ' | 'Đ' => out.push('d'),
            c => out.extend(c.to_lowercase()),
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityMetrics {
    pub city: String,
    pub country: String,
    pub metrics: SustainabilityMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    rows: BTreeMap<String, CityMetrics>,
    provenance: String,
    version: String,
}

impl MetricsTable {
    /// The 50-city table shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_csv_bytes(BUNDLED_CSV.as_bytes(), "bundled:data/city_metrics.csv")
            .expect("bundled metrics table is valid")
    }

    pub fn from_csv_bytes(bytes: &[u8], provenance: impl Into<String>) -> Result<Self, DataError> {
        if bytes.iter().all(|b| b.is_ascii_whitespace()) {
            return Err(DataError::Empty);
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(bytes);
        let headers = reader.headers().map_err(|e| csv_error(&e))?;
        if headers.iter().ne(HEADER.iter().copied()) {
            return Err(DataError::Header {
                found: headers.iter().map(str::to_owned).collect(),
            });
        }

        let mut rows = BTreeMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(&e))?;
            let line = record.position().map_or(0, |p| p.line());
            let city = record[0].to_owned();
            if city.is_empty() {
                return Err(DataError::Malformed {
                    line,
                    message: "empty city".into(),
                });
            }
            let mut values = [0.0; 4];
            for (i, slot) in values.iter_mut().enumerate() {
                let column = HEADER[i + 2];
                let raw = &record[i + 2];
                let value: f64 = raw.parse().map_err(|_| DataError::Malformed {
                    line,
                    message: format!("{column} = {raw:?} is not a decimal number"),
                })?;
                if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                    return Err(DataError::OutOfRange {
                        line,
                        city: city.clone(),
                        column,
                        value,
                    });
                }
                *slot = value;
            }
            let metrics =
                SustainabilityMetrics::new(values[0], values[1], values[2], values[3]).expect("range checked above");
            let key = city_key(&city);
            if rows.contains_key(&key) {
                return Err(DataError::Duplicate { line, key });
            }
            rows.insert(
                key,
                CityMetrics {
                    city,
                    country: record[1].to_owned(),
                    metrics,
                },
            );
        }
        if rows.is_empty() {
            return Err(DataError::NoRows);
        }

        let digest = Sha256::digest(bytes);
        let version = format!("sha256:{}", &format!("{digest:x}")[..16]);
        Ok(Self {
            rows,
            provenance: provenance.into(),
            version,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn rows(&self) -> impl Iterator<Item = &CityMetrics> {
        self.rows.values()
    }

    pub fn city(&self, name: &str) -> Option<&CityMetrics> {
        self.rows.get(&city_key(name))
    }

    pub fn lookup(&self, city: &str) -> Option<SustainabilityMetrics> {
        self.city(city).map(|row| row.metrics)
    }

    /// Metrics of `city_r1` minus those of `city_r0`, when both are in the table.
    pub fn compare(&self, city_r1: &str, city_r0: &str) -> Option<MetricsDelta> {
        Some(delta_s(&self.lookup(city_r1)?, &self.lookup(city_r0)?))
    }
}

fn csv_error(e: &csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::Malformed {
        line,
        message: e.to_string(),
    }
}

/// Loads a metrics table from a comma-separated file.
pub fn load_city_metrics(path: impl AsRef<Path>) -> Result<MetricsTable, DataError> {
    let path = path.as_ref();
    let io = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io)?;
    MetricsTable::from_csv_bytes(&bytes, format!("file:{}", path.display()))
}

pub fn lookup_metrics(table: &MetricsTable, city: &str) -> Option<SustainabilityMetrics> {
    table.lookup(city)
}

pub fn compare(table: &MetricsTable, city_r1: &str, city_r0: &str) -> Option<MetricsDelta> {
    table.compare(city_r1, city_r0)
}
