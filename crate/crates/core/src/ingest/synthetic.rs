//! Deterministic synthetic worlds for tests and benchmarks.
//!
//! [`generate_synthetic_world`] builds in-memory snapshot series with known
//! structure. [`write_fixture_files`] writes a raw-input file set (fine
//! population grids, a monthly `.dat` archive, city and migration tables)
//! that exercises the whole pipeline, up to full global resolution.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cities::{CityRecord, CityTable};
use super::migration_tables::{CountryPopulation, CountryTemperature, MigrationStockTable, StockEntry};
use super::{write_city_table, write_country_populations, write_country_temperatures, write_stocks, ASCII_NODATA};
use crate::numfmt::write_g17;
use crate::raster::{GridGeometry, GridRaster, Orientation, SnapshotSeries};
use crate::Year;

/// Temperatures are multiples of this, so adding small dyadic steps is exact.
const QUANTUM: f64 = 1.0 / 64.0;

/// Shape of the trends built into a synthetic world.
#[derive(Clone, Debug, PartialEq)]
pub struct TrendSpec {
    /// Warming shared by every cell, °C per epoch.
    pub warming_per_epoch: f64,
    /// Half-width of the per-cell spread around `warming_per_epoch`.
    pub warming_spread: f64,
    /// Log-rate at which population moves toward warm cells, per epoch and
    /// per standard deviation of base temperature.
    pub population_shift: f64,
    /// Uniform population growth per epoch (0.1 = +10 %).
    pub population_growth: f64,
    /// Share of cells with neither temperature nor population.
    pub ocean_fraction: f64,
    /// Share of populated cells whose temperature is missing.
    pub missing_temp_fraction: f64,
}

impl TrendSpec {
    /// Every cell warms by exactly `d` per epoch; population grows uniformly.
    pub fn uniform_warming(d: f64) -> Self {
        Self {
            warming_per_epoch: d,
            warming_spread: 0.0,
            population_shift: 0.0,
            population_growth: 0.1,
            ocean_fraction: 0.3,
            missing_temp_fraction: 0.0,
        }
    }

    /// Cellwise-constant temperatures; population drifts toward warm cells.
    pub fn population_shift(rate: f64) -> Self {
        Self {
            warming_per_epoch: 0.0,
            warming_spread: 0.0,
            population_shift: rate,
            population_growth: 0.0,
            ocean_fraction: 0.3,
            missing_temp_fraction: 0.0,
        }
    }

    /// Uneven warming, population drift and missing temperatures together.
    pub fn mixed() -> Self {
        Self {
            warming_per_epoch: 0.25,
            warming_spread: 0.5,
            population_shift: 0.2,
            population_growth: 0.08,
            ocean_fraction: 0.3,
            missing_temp_fraction: 0.05,
        }
    }
}

impl Default for TrendSpec {
    fn default() -> Self {
        Self::mixed()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld {
    pub area: GridRaster,
    pub pop: SnapshotSeries,
    pub temp: SnapshotSeries,
    pub cities: CityTable,
    pub migration: MigrationStockTable,
}

fn quantize(v: f64) -> f64 {
    (v / QUANTUM).round() * QUANTUM
}

/// Country code for stripe `i`: "AAA", "BBB", ..., then "AAB" and so on.
fn country_code(i: usize) -> String {
    let a = (b'A' + (i % 26) as u8) as char;
    let b = (b'A' + (i / 26 % 26) as u8) as char;
    format!("{a}{a}{b}")
}

/// Country owning column `col` when `n_countries` stripes split the grid.
fn country_of(col: usize, n_cols: usize, n_countries: usize) -> usize {
    col * n_countries / n_cols
}

/// Cell area in km², proportional to the cosine of latitude.
fn cell_area(geometry: &GridGeometry, row: usize) -> f64 {
    let km = geometry.cell_size() * 111.195;
    geometry.row_center_lat(row).to_radians().cos() * km * km
}

/// A random point strictly inside cell (row, col).
fn point_in_cell(rng: &mut ChaCha8Rng, g: &GridGeometry, row: usize, col: usize) -> (f64, f64) {
    let half = 0.4 * g.cell_size();
    (
        g.row_center_lat(row) + rng.gen_range(-half..half),
        g.col_center_lon(col) + rng.gen_range(-half..half),
    )
}

/// Stocks for every ordered pair of distinct countries, drifting by a random
/// factor each epoch so that some pairs shrink.
fn random_stocks(rng: &mut ChaCha8Rng, codes: &[String], epochs: &[Year]) -> Vec<StockEntry> {
    let n = codes.len();
    let mut level: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0..=100_000) as f64).collect();
    let mut out = Vec::new();
    for (e, &epoch) in epochs.iter().enumerate() {
        if e > 0 {
            for v in level.iter_mut() {
                *v = (*v * rng.gen_range(0.85..1.35)).round();
            }
        }
        for o in 0..n {
            for d in 0..n {
                if o != d {
                    out.push(StockEntry {
                        epoch,
                        origin: codes[o].clone(),
                        destination: codes[d].clone(),
                        stock: level[o * n + d],
                    });
                }
            }
        }
    }
    out
}

/// Builds a world on a global `n_rows` x `n_cols` south-to-north grid.
///
/// The same seed always gives the same world. Temperatures are quantized to
/// 1/64 °C, so with `warming_spread` 0 and a dyadic `warming_per_epoch` every
/// cell changes by exactly that amount. Ocean and missing-temperature masks
/// are fixed across epochs. Countries are column stripes; their temperatures
/// are population-weighted means of the stripe and their populations are
/// stripe totals.
pub fn generate_synthetic_world(
    seed: u64,
    n_rows: usize,
    n_cols: usize,
    epochs: &[Year],
    spec: &TrendSpec,
) -> SyntheticWorld {
    assert!(n_rows >= 1 && n_cols >= 1 && !epochs.is_empty(), "empty world");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geometry = GridGeometry::global(n_rows, n_cols, Orientation::SouthToNorth).expect("global grid");
    let n = n_rows * n_cols;

    let ocean: Vec<bool> = (0..n).map(|_| rng.gen_bool(spec.ocean_fraction)).collect();
    // Keep at least one populated, observed cell.
    let mut ocean = ocean;
    ocean[0] = false;
    let no_temp: Vec<bool> = (0..n)
        .map(|i| i != 0 && !ocean[i] && rng.gen_bool(spec.missing_temp_fraction))
        .collect();

    let base_temp: Vec<f64> = (0..n)
        .map(|i| {
            let lat = geometry.row_center_lat(i / n_cols);
            quantize(28.0 - 40.0 * (lat / 90.0).powi(2) + rng.gen_range(-3.0..3.0))
        })
        .collect();
    let rate: Vec<f64> = (0..n)
        .map(|_| quantize(spec.warming_per_epoch + spec.warming_spread * rng.gen_range(-1.0..=1.0)))
        .collect();
    let base_pop: Vec<f64> = (0..n).map(|_| (rng.gen_range(5.0..14.0f64)).exp().round()).collect();

    let land: Vec<usize> = (0..n).filter(|&i| !ocean[i]).collect();
    let mean = land.iter().map(|&i| base_temp[i]).sum::<f64>() / land.len() as f64;
    let var = land.iter().map(|&i| (base_temp[i] - mean).powi(2)).sum::<f64>() / land.len() as f64;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };

    let mut temps = Vec::with_capacity(epochs.len());
    let mut pops = Vec::with_capacity(epochs.len());
    for e in 0..epochs.len() {
        let ef = e as f64;
        let t: Vec<Option<f64>> = (0..n)
            .map(|i| (!ocean[i] && !no_temp[i]).then(|| base_temp[i] + ef * rate[i]))
            .collect();
        let growth = (1.0 + spec.population_growth).powi(e as i32);
        let p: Vec<Option<f64>> = (0..n)
            .map(|i| {
                let z = (base_temp[i] - mean) / sd;
                (!ocean[i]).then(|| (base_pop[i] * growth * (spec.population_shift * ef * z).exp()).round())
            })
            .collect();
        temps.push(GridRaster::from_options(geometry, &t).expect("shape"));
        pops.push(GridRaster::from_options(geometry, &p).expect("shape"));
    }
    let area_values: Vec<f64> = (0..n).map(|i| cell_area(&geometry, i / n_cols)).collect();
    let area = GridRaster::from_values(geometry, area_values).expect("shape");

    let n_cities = (land.len() / 8).max(1);
    let mut records = Vec::with_capacity(n_cities);
    for k in 0..n_cities {
        let cell = land[rng.gen_range(0..land.len())];
        let (lat, lon) = point_in_cell(&mut rng, &geometry, cell / n_cols, cell % n_cols);
        let frac = rng.gen_range(0.05..0.4);
        let absent_first = rng.gen_bool(0.1);
        let populations = pops
            .iter()
            .enumerate()
            .map(|(e, p)| {
                if e == 0 && absent_first && epochs.len() > 1 {
                    None
                } else {
                    p.get_flat(cell).map(|v| (v * frac).round())
                }
            })
            .collect();
        records.push(CityRecord {
            id: format!("C{k}"),
            name: format!("City {k}"),
            country: country_code(country_of(cell % n_cols, n_cols, n_cols.min(5))),
            lat,
            lon,
            populations,
        });
    }
    let cities = CityTable::new(epochs.to_vec(), records).expect("generated cities are valid");

    let n_countries = n_cols.min(5);
    let codes: Vec<String> = (0..n_countries).map(country_code).collect();
    let mut country_temps = Vec::new();
    let mut country_pops = Vec::new();
    for (e, &epoch) in epochs.iter().enumerate() {
        for (k, code) in codes.iter().enumerate() {
            let (mut tw, mut w, mut tsum, mut tn, mut ptot) = (0.0, 0.0, 0.0, 0usize, 0.0);
            for i in (0..n).filter(|i| country_of(i % n_cols, n_cols, n_countries) == k) {
                let p = pops[e].get_flat(i);
                ptot += p.unwrap_or(0.0);
                if let Some(t) = temps[e].get_flat(i) {
                    tsum += t;
                    tn += 1;
                    if let Some(p) = p {
                        tw += t * p;
                        w += p;
                    }
                }
            }
            let mean_temp_c = if w > 0.0 {
                tw / w
            } else if tn > 0 {
                tsum / tn as f64
            } else {
                10.0 + k as f64
            };
            country_temps.push(CountryTemperature {
                country: code.clone(),
                epoch,
                mean_temp_c,
            });
            country_pops.push(CountryPopulation {
                country: code.clone(),
                epoch,
                population: ptot,
            });
        }
    }
    let stocks = random_stocks(&mut rng, &codes, epochs);
    let migration =
        MigrationStockTable::from_records(&stocks, &country_temps, &country_pops).expect("generated tables are valid");

    SyntheticWorld {
        area,
        pop: SnapshotSeries::new(epochs.to_vec(), pops).expect("epochs"),
        temp: SnapshotSeries::new(epochs.to_vec(), temps).expect("epochs"),
        cities,
        migration,
    }
}

/// Raw input files for a pipeline run.
///
/// Temperatures are built in whole tenths of a degree: a per-cell base, a
/// seasonal cycle that repeats every year, a trend of
/// `(warming_tenths_per_decade + cell spread) · years / 10` (integer
/// division), and optional uniform noise. With zero spread and noise every
/// cell's annual mean moves by the same amount, and with zero warming too,
/// every cell's annual mean is constant.
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureSpec {
    pub seed: u64,
    /// Fine (population) grid dimensions.
    pub fine_rows: usize,
    pub fine_cols: usize,
    /// Fine cells per coarse (temperature) cell along each axis.
    pub factor: usize,
    pub start_year: Year,
    pub n_years: usize,
    pub pop_epochs: Vec<Year>,
    pub warming_tenths_per_decade: i64,
    /// Per-cell trend varies uniformly within ± this many tenths per decade.
    pub warming_spread_tenths: i64,
    /// Monthly noise amplitude in tenths.
    pub noise_tenths: i64,
    /// As in [`TrendSpec::population_shift`], per population epoch.
    pub population_shift: f64,
    pub population_growth: f64,
    pub ocean_fraction: f64,
    /// Chance that one land cell-month is missing.
    pub missing_month_fraction: f64,
    pub n_countries: usize,
}

impl FixtureSpec {
    /// Global 5' population grids for 1900..=2000 by decade, with a 0.5°
    /// monthly archive for 1900..=2012.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            seed,
            fine_rows: 2160,
            fine_cols: 4320,
            factor: 6,
            start_year: 1900,
            n_years: 113,
            pop_epochs: (1900..=2000).step_by(10).collect(),
            warming_tenths_per_decade: 1,
            warming_spread_tenths: 1,
            noise_tenths: 15,
            population_shift: 0.03,
            population_growth: 0.1,
            ocean_fraction: 0.3,
            missing_month_fraction: 0.0001,
            n_countries: 20,
        }
    }

    /// A 4 x 8 coarse world for 1900..=1940 with population epochs
    /// 1910, 1920 and 1930, enough for a 21-year window around each.
    pub fn small(seed: u64) -> Self {
        Self {
            seed,
            fine_rows: 24,
            fine_cols: 48,
            factor: 6,
            start_year: 1900,
            n_years: 41,
            pop_epochs: vec![1910, 1920, 1930],
            warming_tenths_per_decade: 2,
            warming_spread_tenths: 3,
            noise_tenths: 10,
            population_shift: 0.2,
            population_growth: 0.05,
            ocean_fraction: 0.25,
            missing_month_fraction: 0.002,
            n_countries: 5,
        }
    }

    /// Identical warming everywhere, no noise, no gaps.
    pub fn uniform_warming(mut self) -> Self {
        self.warming_spread_tenths = 0;
        self.noise_tenths = 0;
        self.missing_month_fraction = 0.0;
        self
    }

    /// Constant temperatures, population drifting toward warm cells.
    pub fn pure_shift(mut self) -> Self {
        self.warming_tenths_per_decade = 0;
        self.warming_spread_tenths = 0;
        self.noise_tenths = 0;
        self.missing_month_fraction = 0.0;
        self
    }

    pub fn coarse_rows(&self) -> usize {
        self.fine_rows / self.factor
    }

    pub fn coarse_cols(&self) -> usize {
        self.fine_cols / self.factor
    }

    /// Epochs for city populations: those from 1950 on, or the last epoch
    /// if none are that late.
    pub fn city_epochs(&self) -> Vec<Year> {
        let late: Vec<Year> = self.pop_epochs.iter().copied().filter(|&e| e >= 1950).collect();
        if late.is_empty() {
            self.pop_epochs.last().copied().into_iter().collect()
        } else {
            late
        }
    }

    /// Epochs for migration tables: the last three population epochs.
    pub fn migration_epochs(&self) -> Vec<Year> {
        let k = self.pop_epochs.len().saturating_sub(3);
        self.pop_epochs[k..].to_vec()
    }
}

/// Paths written by [`write_fixture_files`].
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureFiles {
    pub area: PathBuf,
    /// Population file path with `{epoch}` in place of the year.
    pub population_pattern: String,
    pub temperature_archive: PathBuf,
    pub city_table: PathBuf,
    pub migration_stocks: PathBuf,
    pub country_temperatures: PathBuf,
    pub country_populations: PathBuf,
}

impl FixtureFiles {
    pub fn population(&self, epoch: Year) -> PathBuf {
        PathBuf::from(self.population_pattern.replace("{epoch}", &epoch.to_string()))
    }
}

/// Per coarse cell properties shared by every file of a fixture.
struct CoarseCell {
    land: bool,
    base_tenths: i64,
    trend_tenths: i64,
    /// Standardized base temperature, for population drift.
    z: f64,
    density: f64,
}

fn coarse_cells(spec: &FixtureSpec, geometry: &GridGeometry) -> Vec<CoarseCell> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (rows, cols) = (geometry.n_rows(), geometry.n_cols());
    let mut cells: Vec<CoarseCell> = (0..rows * cols)
        .map(|i| {
            let lat = geometry.row_center_lat(i / cols);
            let spread = spec.warming_spread_tenths;
            CoarseCell {
                land: i == 0 || !rng.gen_bool(spec.ocean_fraction),
                base_tenths: (280.0 - 450.0 * (lat / 90.0).powi(2)).round() as i64 + rng.gen_range(-30..=30),
                trend_tenths: spec.warming_tenths_per_decade + rng.gen_range(-spread..=spread),
                z: 0.0,
                density: rng.gen_range(0.0..8.0f64).exp(),
            }
        })
        .collect();
    let land: Vec<f64> = cells.iter().filter(|c| c.land).map(|c| c.base_tenths as f64).collect();
    let mean = land.iter().sum::<f64>() / land.len() as f64;
    let sd = (land.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / land.len() as f64).sqrt();
    for c in &mut cells {
        c.z = if sd > 0.0 { (c.base_tenths as f64 - mean) / sd } else { 0.0 };
    }
    cells
}

fn header<W: Write>(out: &mut W, g: &GridGeometry) -> io::Result<()> {
    let mut s = String::new();
    for (key, v) in [
        ("ncols", g.n_cols() as f64),
        ("nrows", g.n_rows() as f64),
        ("xllcorner", g.west()),
        ("yllcorner", g.south()),
        ("cellsize", g.cell_size()),
        ("NODATA_value", ASCII_NODATA),
    ] {
        s.push_str(key);
        s.push(' ');
        write_g17(&mut s, v);
        s.push('\n');
    }
    out.write_all(s.as_bytes())
}

/// Appends the decimal digits of `v`.
fn push_int(buf: &mut Vec<u8>, v: i64) {
    if v < 0 {
        buf.push(b'-');
    }
    let mut digits = [0u8; 20];
    let mut n = v.unsigned_abs();
    let mut k = digits.len();
    loop {
        k -= 1;
        digits[k] = b'0' + (n % 10) as u8;
        n /= 10;
        if n == 0 {
            break;
        }
    }
    buf.extend_from_slice(&digits[k..]);
}

/// Appends `v` right-aligned in a five-character field.
fn push_int5(buf: &mut Vec<u8>, v: i64) {
    let start = buf.len();
    push_int(buf, v);
    let len = buf.len() - start;
    if len < 5 {
        buf.splice(start..start, std::iter::repeat_n(b' ', 5 - len));
    } else {
        buf.insert(start, b' ');
    }
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::with_capacity(1 << 20, File::create(path)?))
}

/// Writes a raw-input file set for `spec` into `dir`.
///
/// Population and area grids are headered ASCII grids at the fine
/// resolution, north row first; the archive is a `.dat` file at the coarse
/// resolution. Generation streams row by row, so memory stays small even at
/// full scale.
pub fn write_fixture_files(dir: &Path, spec: &FixtureSpec) -> io::Result<FixtureFiles> {
    assert!(spec.factor >= 1 && spec.fine_rows.is_multiple_of(spec.factor) && spec.fine_cols.is_multiple_of(spec.factor));
    std::fs::create_dir_all(dir)?;
    let fine = GridGeometry::global(spec.fine_rows, spec.fine_cols, Orientation::NorthToSouth)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let coarse = GridGeometry::global(spec.coarse_rows(), spec.coarse_cols(), Orientation::SouthToNorth)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let cells = coarse_cells(spec, &coarse);
    let (ccols, crows) = (coarse.n_cols(), coarse.n_rows());
    // Coarse cell under fine (row, col); fine rows run north to south.
    let coarse_index = |fr: usize, fc: usize| (crows - 1 - fr / spec.factor) * ccols + fc / spec.factor;

    let files = FixtureFiles {
        area: dir.join("area.asc"),
        population_pattern: dir.join("pop_{epoch}.asc").to_string_lossy().into_owned(),
        temperature_archive: dir.join("tmp.dat"),
        city_table: dir.join("cities.csv"),
        migration_stocks: dir.join("stocks.csv"),
        country_temperatures: dir.join("country_temps.csv"),
        country_populations: dir.join("country_pops.csv"),
    };

    let mut out = create(&files.area)?;
    header(&mut out, &fine)?;
    let mut line = Vec::new();
    let mut text = String::new();
    for r in 0..fine.n_rows() {
        text.clear();
        write_g17(&mut text, cell_area(&fine, r));
        line.clear();
        for c in 0..fine.n_cols() {
            if c > 0 {
                line.push(b' ');
            }
            line.extend_from_slice(text.as_bytes());
        }
        line.push(b'\n');
        out.write_all(&line)?;
    }
    out.flush()?;

    // Cell (expected) coarse populations of the last epoch, for sizing cities.
    let mut coarse_pop = vec![0.0f64; crows * ccols];
    for (e, &epoch) in spec.pop_epochs.iter().enumerate() {
        let mut out = create(&files.population(epoch))?;
        header(&mut out, &fine)?;
        let growth = (1.0 + spec.population_growth).powi(e as i32);
        let last = e + 1 == spec.pop_epochs.len();
        for r in 0..fine.n_rows() {
            // One stream per row, the same for every epoch, so fine-scale
            // texture is fixed and only the trends move.
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(r as u64);
            line.clear();
            for c in 0..fine.n_cols() {
                if c > 0 {
                    line.push(b' ');
                }
                let u: f64 = rng.gen();
                let k = coarse_index(r, c);
                let cell = &cells[k];
                if !cell.land || u < 0.05 {
                    push_int(&mut line, ASCII_NODATA as i64);
                } else {
                    let p = (cell.density * u * growth * (spec.population_shift * e as f64 * cell.z).exp()).round();
                    if last {
                        coarse_pop[k] += p;
                    }
                    push_int(&mut line, p as i64);
                }
            }
            line.push(b'\n');
            out.write_all(&line)?;
        }
        out.flush()?;
    }

    let mut out = create(&files.temperature_archive)?;
    let seasonal: Vec<[i64; 12]> = (0..crows)
        .map(|r| {
            let lat = coarse.row_center_lat(r);
            let amp = 120.0 * lat / 90.0;
            let mut s = [0i64; 12];
            for (m, v) in s.iter_mut().enumerate() {
                *v = (amp * (2.0 * std::f64::consts::PI * (m as f64 - 6.0) / 12.0).cos()).round() as i64;
            }
            s
        })
        .collect();
    for y in 0..spec.n_years {
        for m in 0..12 {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5151_5151);
            rng.set_stream((y * 12 + m) as u64);
            for r in 0..crows {
                line.clear();
                for c in 0..ccols {
                    let cell = &cells[r * ccols + c];
                    let noise = if spec.noise_tenths > 0 {
                        rng.gen_range(-spec.noise_tenths..=spec.noise_tenths)
                    } else {
                        0
                    };
                    let missing = spec.missing_month_fraction > 0.0 && rng.gen_bool(spec.missing_month_fraction);
                    let v = if !cell.land || missing {
                        -999
                    } else {
                        let trend = (cell.trend_tenths * y as i64).div_euclid(10);
                        (cell.base_tenths + seasonal[r][m] + trend + noise).clamp(-998, 9999)
                    };
                    push_int5(&mut line, v);
                }
                line.push(b'\n');
                out.write_all(&line)?;
            }
        }
    }
    out.flush()?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(17));
    let land: Vec<usize> = (0..cells.len()).filter(|&k| cells[k].land).collect();
    let city_epochs = spec.city_epochs();
    let n_cities = (land.len() / 20).clamp(3, 2000);
    let records: Vec<CityRecord> = (0..n_cities)
        .map(|k| {
            let cell = land[rng.gen_range(0..land.len())];
            let (lat, lon) = point_in_cell(&mut rng, &coarse, cell / ccols, cell % ccols);
            let frac = rng.gen_range(0.02..0.3);
            let n_epochs = city_epochs.len();
            let populations = (0..n_epochs)
                .map(|e| {
                    let scale = 0.5 + 0.5 * (e + 1) as f64 / n_epochs as f64;
                    Some((coarse_pop[cell] * frac * scale).round())
                })
                .collect();
            CityRecord {
                id: format!("C{k}"),
                name: format!("City {k}"),
                country: country_code(country_of(cell % ccols, ccols, spec.n_countries.min(ccols))),
                lat,
                lon,
                populations,
            }
        })
        .collect();
    let table = CityTable::new(city_epochs, records).expect("generated cities are valid");
    let mut out = create(&files.city_table)?;
    write_city_table(&mut out, &table).map_err(io::Error::other)?;

    let epochs = spec.migration_epochs();
    let codes: Vec<String> = (0..spec.n_countries.min(ccols)).map(country_code).collect();
    let mut temps = Vec::new();
    let mut pops = Vec::new();
    for code in &codes {
        let t0: f64 = rng.gen_range(0.0..28.0);
        let p0: f64 = rng.gen_range(1e6..1e8);
        for (e, &epoch) in epochs.iter().enumerate() {
            temps.push(CountryTemperature {
                country: code.clone(),
                epoch,
                mean_temp_c: quantize(t0 + 0.1 * e as f64),
            });
            pops.push(CountryPopulation {
                country: code.clone(),
                epoch,
                population: (p0 * (1.0 + 0.1 * e as f64)).round(),
            });
        }
    }
    let stocks = random_stocks(&mut rng, &codes, &epochs);
    let table = MigrationStockTable::from_records(&stocks, &temps, &pops).expect("generated tables are valid");
    write_stocks(create(&files.migration_stocks)?, &table).map_err(io::Error::other)?;
    write_country_temperatures(create(&files.country_temperatures)?, &table).map_err(io::Error::other)?;
    write_country_populations(create(&files.country_populations)?, &table).map_err(io::Error::other)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world() {
        let a = generate_synthetic_world(1, 6, 10, &[1950, 1960, 1970], &TrendSpec::mixed());
        let b = generate_synthetic_world(1, 6, 10, &[1950, 1960, 1970], &TrendSpec::mixed());
        assert_eq!(a, b);
        let c = generate_synthetic_world(2, 6, 10, &[1950, 1960, 1970], &TrendSpec::mixed());
        assert_ne!(a.temp, c.temp);
    }

    #[test]
    fn uniform_warming_is_exact() {
        let w = generate_synthetic_world(3, 8, 12, &[1900, 1910, 1920, 1930], &TrendSpec::uniform_warming(1.0));
        for pair in w.temp.grids().windows(2) {
            for (a, b) in pair[0].cells().zip(pair[1].cells()) {
                assert_eq!(a.is_some(), b.is_some());
                if let (Some(a), Some(b)) = (a, b) {
                    assert_eq!(b - a, 1.0);
                }
            }
        }
    }

    #[test]
    fn population_shift_keeps_temperatures() {
        let w = generate_synthetic_world(4, 8, 12, &[1900, 1910, 1920], &TrendSpec::population_shift(0.3));
        let first = &w.temp.grids()[0];
        assert!(w.temp.grids().iter().all(|g| g == first));
        assert_ne!(w.pop.grids()[0], w.pop.grids()[2]);
    }

    #[test]
    fn tables_are_consistent() {
        let w = generate_synthetic_world(5, 10, 10, &[1990, 2000], &TrendSpec::mixed());
        assert_eq!(w.migration.n_countries(), 5);
        assert_eq!(w.migration.stock_epochs(), &[1990, 2000]);
        assert!(!w.cities.is_empty());
        for r in w.cities.records() {
            assert!(w.pop.geometry().cell_containing(r.lat, r.lon).is_some());
        }
    }

    #[test]
    fn int5_fields() {
        let mut b = Vec::new();
        for v in [0, -999, 12345, -1234, 7] {
            push_int5(&mut b, v);
        }
        assert_eq!(b, b"    0 -999 12345 -1234    7");
    }
}
