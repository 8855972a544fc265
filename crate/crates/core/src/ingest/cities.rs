use std::io::{Read, Write};

use super::IngestError;
use crate::numfmt::g17;
use crate::Year;

const FIXED_COLUMNS: [&str; 5] = ["city_id", "name", "country", "lat", "lon"];
const POP_PREFIX: &str = "pop_";

/// One urban agglomeration.
#[derive(Clone, Debug, PartialEq)]
pub struct CityRecord {
    pub id: String,
    pub name: String,
    pub country: String,
    pub lat: f64,
    pub lon: f64,
    /// Population per epoch of the owning table; `None` where absent.
    pub populations: Vec<Option<f64>>,
}

/// Cities with populations for a common, strictly increasing set of epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct CityTable {
    epochs: Vec<Year>,
    records: Vec<CityRecord>,
}

impl CityTable {
    /// Validates coordinates, populations and epoch order. Errors report the
    /// record's 1-based position as a data line number (header is line 1).
    pub fn new(epochs: Vec<Year>, records: Vec<CityRecord>) -> Result<Self, IngestError> {
        for w in epochs.windows(2) {
            if w[1] <= w[0] {
                return Err(IngestError::Schema {
                    line: 1,
                    message: format!("epochs must be strictly increasing ({} then {})", w[0], w[1]),
                });
            }
        }
        for (i, r) in records.iter().enumerate() {
            let line = i as u64 + 2;
            validate_record(line, r, &epochs)?;
        }
        Ok(Self { epochs, records })
    }

    pub fn epochs(&self) -> &[Year] {
        &self.epochs
    }

    pub fn records(&self) -> &[CityRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn epoch_index(&self, epoch: Year) -> Option<usize> {
        self.epochs.binary_search(&epoch).ok()
    }

    /// Population of every city at `epoch`, or `None` if the table lacks it.
    pub fn populations_at(&self, epoch: Year) -> Option<impl Iterator<Item = (&CityRecord, Option<f64>)>> {
        let i = self.epoch_index(epoch)?;
        Some(self.records.iter().map(move |r| (r, r.populations[i])))
    }
}

fn validate_record(line: u64, r: &CityRecord, epochs: &[Year]) -> Result<(), IngestError> {
    if !(r.lat.is_finite() && r.lon.is_finite() && r.lat.abs() <= 90.0 && r.lon.abs() <= 180.0) {
        return Err(IngestError::InvalidCoordinate {
            line,
            lat: r.lat,
            lon: r.lon,
        });
    }
    if r.populations.len() != epochs.len() {
        return Err(IngestError::Schema {
            line,
            message: format!("{} populations for {} epochs", r.populations.len(), epochs.len()),
        });
    }
    for (p, e) in r.populations.iter().zip(epochs) {
        if let Some(p) = p {
            if !(*p >= 0.0) || !p.is_finite() {
                return Err(IngestError::NegativePopulation {
                    line,
                    column: format!("{POP_PREFIX}{e}"),
                    value: *p,
                });
            }
        }
    }
    Ok(())
}

/// Reads a city table CSV:
/// `city_id,name,country,lat,lon,pop_<year>...`, empty population = absent.
pub fn read_city_table<R: Read>(reader: R) -> Result<CityTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.len() < FIXED_COLUMNS.len() || names[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(IngestError::Schema {
            line: 1,
            message: format!("header must start with {}", FIXED_COLUMNS.join(",")),
        });
    }
    let epochs = names[FIXED_COLUMNS.len()..]
        .iter()
        .map(|h| {
            h.strip_prefix(POP_PREFIX)
                .and_then(|y| y.parse::<Year>().ok())
                .ok_or_else(|| IngestError::Schema {
                    line: 1,
                    message: format!("column {h:?} is not pop_<year>"),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    for w in epochs.windows(2) {
        if w[1] <= w[0] {
            return Err(IngestError::Schema {
                line: 1,
                message: format!("population columns must be in increasing year order ({} then {})", w[0], w[1]),
            });
        }
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != names.len() {
            return Err(IngestError::Schema {
                line,
                message: format!("expected {} fields, found {}", names.len(), row.len()),
            });
        }
        let number = |i: usize| -> Result<f64, IngestError> {
            row[i].trim().parse::<f64>().map_err(|_| IngestError::Schema {
                line,
                message: format!("{}: cannot parse {:?} as a number", names[i], &row[i]),
            })
        };
        let record = CityRecord {
            id: row[0].trim().to_string(),
            name: row[1].trim().to_string(),
            country: row[2].trim().to_string(),
            lat: number(3)?,
            lon: number(4)?,
            populations: (FIXED_COLUMNS.len()..names.len())
                .map(|i| if row[i].trim().is_empty() { Ok(None) } else { number(i).map(Some) })
                .collect::<Result<Vec<_>, _>>()?,
        };
        validate_record(line, &record, &epochs)?;
        records.push(record);
    }
    Ok(CityTable { epochs, records })
}

/// Parses an in-memory city table. See [`read_city_table`].
pub fn parse_city_table(bytes: &[u8]) -> Result<CityTable, IngestError> {
    read_city_table(bytes)
}

pub fn write_city_table<W: Write>(out: W, table: &CityTable) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(table.epochs.iter().map(|e| format!("{POP_PREFIX}{e}")));
    w.write_record(&header)?;
    for r in &table.records {
        let mut row = vec![r.id.clone(), r.name.clone(), r.country.clone(), g17(r.lat), g17(r.lon)];
        row.extend(r.populations.iter().map(|p| p.map(g17).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
