use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use super::IngestError;
use crate::numfmt::g17;
use crate::Year;

const STOCK_HEADER: [&str; 4] = ["epoch", "origin", "destination", "stock"];
const TEMP_HEADER: [&str; 3] = ["country", "epoch", "mean_temp_c"];
const POP_HEADER: [&str; 3] = ["country", "epoch", "population"];

/// Migrant stock from `origin` living in `destination` at `epoch`.
#[derive(Clone, Debug, PartialEq)]
pub struct StockEntry {
    pub epoch: Year,
    pub origin: String,
    pub destination: String,
    pub stock: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountryTemperature {
    pub country: String,
    pub epoch: Year,
    pub mean_temp_c: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountryPopulation {
    pub country: String,
    pub epoch: Year,
    pub population: f64,
}

/// Origin x destination migrant stocks per epoch, with country mean
/// temperatures and (optionally) country population totals.
///
/// The country universe is the set of codes in the temperature table, sorted.
/// Stock matrices are dense and row-major with origin as the row. Diagonal
/// entries are accepted on input and dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct MigrationStockTable {
    countries: Vec<String>,
    stock_epochs: Vec<Year>,
    stocks: Vec<Vec<f64>>,
    given: Vec<Vec<bool>>,
    temperatures: BTreeMap<Year, Vec<Option<f64>>>,
    populations: BTreeMap<Year, Vec<Option<f64>>>,
}

impl MigrationStockTable {
    /// Builds a table from in-memory records. Errors report the position each
    /// record would have in its CSV file (header is line 1).
    pub fn from_records(
        stocks: &[StockEntry],
        temperatures: &[CountryTemperature],
        populations: &[CountryPopulation],
    ) -> Result<Self, IngestError> {
        let numbered = |n: usize| (0..n).map(|i| i as u64 + 2);
        Self::build(
            numbered(stocks.len()).zip(stocks.iter().cloned()).collect(),
            numbered(temperatures.len()).zip(temperatures.iter().cloned()).collect(),
            numbered(populations.len()).zip(populations.iter().cloned()).collect(),
        )
    }

    fn build(
        stocks: Vec<(u64, StockEntry)>,
        temperatures: Vec<(u64, CountryTemperature)>,
        populations: Vec<(u64, CountryPopulation)>,
    ) -> Result<Self, IngestError> {
        let countries: Vec<String> = temperatures
            .iter()
            .map(|(_, t)| t.country.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let n = countries.len();
        let index = |line: u64, code: &str| {
            countries
                .binary_search_by(|c| c.as_str().cmp(code))
                .map_err(|_| IngestError::UnknownCountry {
                    line,
                    code: code.to_string(),
                })
        };

        let mut temps: BTreeMap<Year, Vec<Option<f64>>> = BTreeMap::new();
        for (line, t) in &temperatures {
            if !t.mean_temp_c.is_finite() {
                return Err(IngestError::Schema {
                    line: *line,
                    message: format!("non-finite temperature {}", t.mean_temp_c),
                });
            }
            let i = index(*line, &t.country)?;
            let slot = &mut temps.entry(t.epoch).or_insert_with(|| vec![None; n])[i];
            if slot.is_some() {
                return Err(IngestError::Duplicate {
                    line: *line,
                    what: format!("temperature for {} at {}", t.country, t.epoch),
                });
            }
            *slot = Some(t.mean_temp_c);
        }

        let mut pops: BTreeMap<Year, Vec<Option<f64>>> = BTreeMap::new();
        for (line, p) in &populations {
            if !(p.population >= 0.0) || !p.population.is_finite() {
                return Err(IngestError::NegativePopulation {
                    line: *line,
                    column: "population".to_string(),
                    value: p.population,
                });
            }
            let i = index(*line, &p.country)?;
            let slot = &mut pops.entry(p.epoch).or_insert_with(|| vec![None; n])[i];
            if slot.is_some() {
                return Err(IngestError::Duplicate {
                    line: *line,
                    what: format!("population for {} at {}", p.country, p.epoch),
                });
            }
            *slot = Some(p.population);
        }

        let mut matrices: BTreeMap<Year, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
        for (line, s) in &stocks {
            let line = *line;
            if !(s.stock >= 0.0) || !s.stock.is_finite() {
                return Err(IngestError::NegativeStock { line, value: s.stock });
            }
            let o = index(line, &s.origin)?;
            let d = index(line, &s.destination)?;
            for (code, i) in [(&s.origin, o), (&s.destination, d)] {
                if temps.get(&s.epoch).and_then(|v| v[i]).is_none() {
                    return Err(IngestError::MissingEpoch {
                        line,
                        country: code.clone(),
                        epoch: s.epoch,
                    });
                }
            }
            if o == d {
                continue;
            }
            let (values, given) = matrices
                .entry(s.epoch)
                .or_insert_with(|| (vec![0.0; n * n], vec![false; n * n]));
            let k = o * n + d;
            if given[k] {
                return Err(IngestError::Duplicate {
                    line,
                    what: format!("stock {}->{} at {}", s.origin, s.destination, s.epoch),
                });
            }
            given[k] = true;
            values[k] = s.stock;
        }

        let mut stock_epochs = Vec::with_capacity(matrices.len());
        let mut stock_values = Vec::with_capacity(matrices.len());
        let mut given = Vec::with_capacity(matrices.len());
        for (epoch, (v, g)) in matrices {
            stock_epochs.push(epoch);
            stock_values.push(v);
            given.push(g);
        }
        Ok(Self {
            countries,
            stock_epochs,
            stocks: stock_values,
            given,
            temperatures: temps,
            populations: pops,
        })
    }

    /// Sorted country codes; matrix rows and columns follow this order.
    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn country_index(&self, code: &str) -> Option<usize> {
        self.countries.binary_search_by(|c| c.as_str().cmp(code)).ok()
    }

    /// Epochs with at least one stock row, increasing.
    pub fn stock_epochs(&self) -> &[Year] {
        &self.stock_epochs
    }

    fn stock_position(&self, epoch: Year) -> Option<usize> {
        self.stock_epochs.binary_search(&epoch).ok()
    }

    /// Dense origin x destination stocks at `epoch`.
    pub fn stock_matrix(&self, epoch: Year) -> Option<&[f64]> {
        self.stock_position(epoch).map(|i| self.stocks[i].as_slice())
    }

    pub fn stock(&self, epoch: Year, origin: usize, destination: usize) -> Option<f64> {
        self.stock_matrix(epoch).map(|m| m[origin * self.countries.len() + destination])
    }

    /// Countries named as origin or destination of an off-diagonal stock row
    /// at `epoch`.
    pub fn countries_present(&self, epoch: Year) -> Option<Vec<bool>> {
        let g = &self.given[self.stock_position(epoch)?];
        let n = self.countries.len();
        let mut present = vec![false; n];
        for o in 0..n {
            for d in 0..n {
                if g[o * n + d] {
                    present[o] = true;
                    present[d] = true;
                }
            }
        }
        Some(present)
    }

    /// Mean temperature per country at `epoch`, in country order.
    pub fn temperatures_at(&self, epoch: Year) -> Option<&[Option<f64>]> {
        self.temperatures.get(&epoch).map(Vec::as_slice)
    }

    pub fn temperature(&self, country: usize, epoch: Year) -> Option<f64> {
        self.temperatures_at(epoch).and_then(|v| v[country])
    }

    pub fn populations_at(&self, epoch: Year) -> Option<&[Option<f64>]> {
        self.populations.get(&epoch).map(Vec::as_slice)
    }

    /// Sum of country populations at `epoch`, if the table has that epoch.
    pub fn world_population(&self, epoch: Year) -> Option<f64> {
        self.populations_at(epoch)
            .map(|v| crate::sum::compensated_sum(v.iter().flatten().copied()))
    }

    pub fn stock_entries(&self) -> Vec<StockEntry> {
        let n = self.countries.len();
        let mut out = Vec::new();
        for (i, &epoch) in self.stock_epochs.iter().enumerate() {
            for k in 0..n * n {
                if self.given[i][k] {
                    out.push(StockEntry {
                        epoch,
                        origin: self.countries[k / n].clone(),
                        destination: self.countries[k % n].clone(),
                        stock: self.stocks[i][k],
                    });
                }
            }
        }
        out
    }

    pub fn temperature_entries(&self) -> Vec<CountryTemperature> {
        let mut out = Vec::new();
        for (i, c) in self.countries.iter().enumerate() {
            for (&epoch, v) in &self.temperatures {
                if let Some(t) = v[i] {
                    out.push(CountryTemperature {
                        country: c.clone(),
                        epoch,
                        mean_temp_c: t,
                    });
                }
            }
        }
        out
    }

    pub fn population_entries(&self) -> Vec<CountryPopulation> {
        let mut out = Vec::new();
        for (i, c) in self.countries.iter().enumerate() {
            for (&epoch, v) in &self.populations {
                if let Some(p) = v[i] {
                    out.push(CountryPopulation {
                        country: c.clone(),
                        epoch,
                        population: p,
                    });
                }
            }
        }
        out
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str], what: &str) -> Result<(), IngestError> {
    let h = rdr.headers()?;
    if h.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(IngestError::Schema {
            line: 1,
            message: format!("{what} header must be {}", expected.join(",")),
        });
    }
    Ok(())
}

/// Reads every row of a headered CSV, handing each record's fields and line
/// to `f`.
fn rows<R: Read, T>(
    reader: R,
    header: &[&str],
    what: &str,
    mut f: impl FnMut(u64, &csv::StringRecord) -> Result<T, IngestError>,
) -> Result<Vec<(u64, T)>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    check_header(&mut rdr, header, what)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(IngestError::Schema {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        out.push((line, f(line, &rec)?));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, IngestError> {
    rec[i].trim().parse().map_err(|_| IngestError::Schema {
        line,
        message: format!("{name}: cannot parse {:?}", &rec[i]),
    })
}

/// Reads the stock, country temperature and optional country population
/// tables and checks them against each other.
pub fn read_migration_tables<S: Read, T: Read, P: Read>(
    stocks: S,
    temperatures: T,
    populations: Option<P>,
) -> Result<MigrationStockTable, IngestError> {
    let temps = rows(temperatures, &TEMP_HEADER, "country temperature", |line, r| {
        Ok(CountryTemperature {
            country: r[0].trim().to_string(),
            epoch: field(line, r, 1, "epoch")?,
            mean_temp_c: field(line, r, 2, "mean_temp_c")?,
        })
    })?;
    let pops = match populations {
        Some(p) => rows(p, &POP_HEADER, "country population", |line, r| {
            Ok(CountryPopulation {
                country: r[0].trim().to_string(),
                epoch: field(line, r, 1, "epoch")?,
                population: field(line, r, 2, "population")?,
            })
        })?,
        None => Vec::new(),
    };
    let stock_rows = rows(stocks, &STOCK_HEADER, "migration stock", |line, r| {
        Ok(StockEntry {
            epoch: field(line, r, 0, "epoch")?,
            origin: r[1].trim().to_string(),
            destination: r[2].trim().to_string(),
            stock: field(line, r, 3, "stock")?,
        })
    })?;
    MigrationStockTable::build(stock_rows, temps, pops)
}

/// Parses in-memory tables. See [`read_migration_tables`].
pub fn parse_migration_tables(
    stocks: &[u8],
    temperatures: &[u8],
    populations: Option<&[u8]>,
) -> Result<MigrationStockTable, IngestError> {
    read_migration_tables(stocks, temperatures, populations)
}

pub fn write_stocks<W: Write>(out: W, table: &MigrationStockTable) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STOCK_HEADER)?;
    for e in table.stock_entries() {
        w.write_record([e.epoch.to_string(), e.origin, e.destination, g17(e.stock)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_country_temperatures<W: Write>(out: W, table: &MigrationStockTable) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TEMP_HEADER)?;
    for e in table.temperature_entries() {
        w.write_record([e.country, e.epoch.to_string(), g17(e.mean_temp_c)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_country_populations<W: Write>(out: W, table: &MigrationStockTable) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POP_HEADER)?;
    for e in table.population_entries() {
        w.write_record([e.country, e.epoch.to_string(), g17(e.population)])?;
    }
    w.flush()?;
    Ok(())
}
