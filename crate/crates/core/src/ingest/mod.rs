//! Readers and writers for the on-disk formats, plus synthetic fixtures.
//!
//! All parsers stream their input line by line and report malformed input
//! with the 1-based line (and, where meaningful, column) at which it was found.

mod ascii_grid;
mod cities;
mod cru;
mod migration_tables;
pub mod synthetic;

pub use ascii_grid::{parse_ascii_grid, read_ascii_grid, write_ascii_grid, AsciiGridHeader};
pub use cities::{parse_city_table, read_city_table, write_city_table, CityRecord, CityTable};
pub use cru::{parse_cru_dat, read_cru_dat, write_cru_dat, CruLayout, CruReader, MonthGrid};
pub use migration_tables::{
    parse_migration_tables, read_migration_tables, write_country_populations, write_country_temperatures,
    write_stocks, CountryPopulation, CountryTemperature, MigrationStockTable, StockEntry,
};

use thiserror::Error;

use crate::raster::RasterError;
use crate::Year;

/// Sentinel for missing cells in ASCII grid files.
pub const ASCII_NODATA: f64 = -9999.0;
/// Sentinel for missing fields in CRU `.dat` files.
pub const CRU_NODATA: f64 = -999.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}, column {column}: cannot parse {token:?} as a number")]
    Parse { line: u64, column: usize, token: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("line {line}: expected {expected} cells in total, found {found}")]
    CellCount { line: u64, expected: usize, found: usize },
    #[error("line {line}: expected {expected} data rows, found {found}")]
    RowCount { line: u64, expected: usize, found: usize },
    #[error("headerless grid needs caller-supplied dimensions")]
    MissingDimensions,
    #[error("line {line}: bad header: {message}")]
    Header { line: u64, message: String },
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("line {line}: coordinates ({lat}, {lon}) out of range")]
    InvalidCoordinate { line: u64, lat: f64, lon: f64 },
    #[error("line {line}: negative population {value} in column {column:?}")]
    NegativePopulation { line: u64, column: String, value: f64 },
    #[error("line {line}: negative migrant stock {value}")]
    NegativeStock { line: u64, value: f64 },
    #[error("line {line}: country {code:?} is not in the country temperature table")]
    UnknownCountry { line: u64, code: String },
    #[error("line {line}: country {country:?} has no temperature for epoch {epoch}")]
    MissingEpoch { line: u64, country: String, epoch: Year },
    #[error("line {line}: duplicate entry {what}")]
    Duplicate { line: u64, what: String },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Geometry(#[from] RasterError),
}

/// Splits a byte line into whitespace-separated tokens with their 1-based
/// starting column.
pub(crate) fn tokens(line: &[u8]) -> impl Iterator<Item = (usize, &[u8])> {
    let mut pos = 0usize;
    std::iter::from_fn(move || {
        while pos < line.len() && line[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= line.len() {
            return None;
        }
        let start = pos;
        while pos < line.len() && !line[pos].is_ascii_whitespace() {
            pos += 1;
        }
        Some((start + 1, &line[start..pos]))
    })
}

/// Parses a numeric token. Plain integers take a fast path; everything
/// else goes through the standard correctly rounded float parser.
#[inline]
pub(crate) fn parse_number(token: &[u8]) -> Option<f64> {
    let (neg, digits) = match token.first() {
        Some(b'-') => (true, &token[1..]),
        Some(b'+') => (false, &token[1..]),
        _ => (false, token),
    };
    if !digits.is_empty() && digits.len() <= 15 && digits.iter().all(u8::is_ascii_digit) {
        let mut v: i64 = 0;
        for d in digits {
            v = v * 10 + (d - b'0') as i64;
        }
        return Some(if neg { -(v as f64) } else { v as f64 });
    }
    std::str::from_utf8(token).ok()?.parse::<f64>().ok()
}

pub(crate) fn parse_error(line: u64, column: usize, token: &[u8]) -> IngestError {
    IngestError::Parse {
        line,
        column,
        token: String::from_utf8_lossy(token).into_owned(),
    }
}
