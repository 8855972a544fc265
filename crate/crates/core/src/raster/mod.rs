//! Grid data model.
//!
//! A [`GridRaster`] is a regular lat/lon field with an explicit validity
//! mask. The stored number of a masked-out cell is never read by any
//! operation in this crate.
//!
//! Geometry is stored as the south/west edges of the grid plus an
//! [`Orientation`] flag, so flipping row order only changes the flag and the
//! row layout; `origin_lat` (the centre of row 0) is derived.

mod aggregate;
mod temporal;

pub use aggregate::{aggregate_blocks, convert_units, reorient, Reducer};
pub use temporal::{centered_mean, monthly_to_annual, AnnualAccumulator};

use std::fmt;

use thiserror::Error;

use crate::Year;

/// Slack allowed on the global extent checks, in degrees.
const EXTENT_TOLERANCE: f64 = 1e-6;

/// Two grids are considered co-registered when their edges and cell sizes
/// agree to within this many degrees. Header cell sizes such as
/// `0.0833333333333333` only approximate 1/12 degree.
const PLACEMENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),
    #[error("values/mask length {found} does not match {n_rows}x{n_cols} grid")]
    ShapeMismatch {
        n_rows: usize,
        n_cols: usize,
        found: usize,
    },
    #[error("aggregation factor must be at least 1")]
    ZeroFactor,
    #[error("{n_rows}x{n_cols} grid is not divisible into {factor}x{factor} blocks")]
    NotDivisible {
        n_rows: usize,
        n_cols: usize,
        factor: usize,
    },
    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("orientation mismatch: expected {expected}, found {found}")]
    OrientationMismatch {
        expected: Orientation,
        found: Orientation,
    },
    #[error("averaging window must be odd, got {0}")]
    EvenWindow(usize),
    #[error(
        "window of {window} years centred on {center} needs {first}..={last}, \
         but only {available_first}..={available_last} are available"
    )]
    WindowOutOfRange {
        center: Year,
        window: usize,
        first: Year,
        last: Year,
        available_first: Year,
        available_last: Year,
    },
    #[error("year {year} ended after {months} of 12 months")]
    IncompleteYear { year: Year, months: u32 },
    #[error("year {0} is missing from the annual series")]
    MissingYear(Year),
    #[error("snapshot series is empty")]
    EmptySeries,
    #[error("epochs must be strictly increasing ({previous} followed by {next})")]
    EpochsNotIncreasing { previous: Year, next: Year },
    #[error("{epochs} epochs but {grids} grids")]
    LengthMismatch { epochs: usize, grids: usize },
}

/// Row order of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// Row 0 is the northernmost row (ASCII grid files, HYDE).
    NorthToSouth,
    /// Row 0 is the southernmost row (CRU layout; the canonical orientation).
    SouthToNorth,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::NorthToSouth => Orientation::SouthToNorth,
            Orientation::SouthToNorth => Orientation::NorthToSouth,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::NorthToSouth => "north-to-south",
            Orientation::SouthToNorth => "south-to-north",
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Placement and shape of a regular lat/lon grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    n_rows: usize,
    n_cols: usize,
    south: f64,
    west: f64,
    cell_size: f64,
    orientation: Orientation,
}

impl GridGeometry {
    /// Builds a geometry from its south-west corner.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        south: f64,
        west: f64,
        cell_size: f64,
        orientation: Orientation,
    ) -> Result<Self, RasterError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(RasterError::InvalidGeometry(format!(
                "grid must have at least one cell, got {n_rows}x{n_cols}"
            )));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(RasterError::InvalidGeometry(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if !(south.is_finite() && west.is_finite()) {
            return Err(RasterError::InvalidGeometry("non-finite corner".into()));
        }
        if n_rows as f64 * cell_size > 180.0 + EXTENT_TOLERANCE {
            return Err(RasterError::InvalidGeometry(format!(
                "{n_rows} rows of {cell_size} degrees exceed 180 degrees"
            )));
        }
        if n_cols as f64 * cell_size > 360.0 + EXTENT_TOLERANCE {
            return Err(RasterError::InvalidGeometry(format!(
                "{n_cols} columns of {cell_size} degrees exceed 360 degrees"
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            south,
            west,
            cell_size,
            orientation,
        })
    }

    /// Builds a geometry from the centre of cell (0, 0).
    pub fn from_origin(
        n_rows: usize,
        n_cols: usize,
        origin_lat: f64,
        origin_lon: f64,
        cell_size: f64,
        orientation: Orientation,
    ) -> Result<Self, RasterError> {
        let half = cell_size / 2.0;
        let south = match orientation {
            Orientation::SouthToNorth => origin_lat - half,
            Orientation::NorthToSouth => origin_lat + half - n_rows as f64 * cell_size,
        };
        Self::new(n_rows, n_cols, south, origin_lon - half, cell_size, orientation)
    }

    /// A grid of square cells centred on the equator and the prime meridian,
    /// as large as fits on the globe: `180 / n_rows` degree cells unless
    /// the columns would then wrap past 360 degrees.
    pub fn global(n_rows: usize, n_cols: usize, orientation: Orientation) -> Result<Self, RasterError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(RasterError::InvalidGeometry(format!(
                "grid must have at least one cell, got {n_rows}x{n_cols}"
            )));
        }
        let cell_size = (180.0 / n_rows as f64).min(360.0 / n_cols as f64);
        let south = -(n_rows as f64) * cell_size / 2.0;
        let west = -(n_cols as f64) * cell_size / 2.0;
        Self::new(n_rows, n_cols, south, west, cell_size, orientation)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn len(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn south(&self) -> f64 {
        self.south
    }

    pub fn north(&self) -> f64 {
        self.south + self.n_rows as f64 * self.cell_size
    }

    pub fn west(&self) -> f64 {
        self.west
    }

    pub fn east(&self) -> f64 {
        self.west + self.n_cols as f64 * self.cell_size
    }

    /// Latitude of the centre of row 0.
    pub fn origin_lat(&self) -> f64 {
        self.row_center_lat(0)
    }

    /// Longitude of the centre of column 0.
    pub fn origin_lon(&self) -> f64 {
        self.west + self.cell_size / 2.0
    }

    pub fn row_center_lat(&self, row: usize) -> f64 {
        let from_south = match self.orientation {
            Orientation::SouthToNorth => row,
            Orientation::NorthToSouth => self.n_rows - 1 - row,
        };
        self.south + (from_south as f64 + 0.5) * self.cell_size
    }

    pub fn col_center_lon(&self, col: usize) -> f64 {
        self.west + (col as f64 + 0.5) * self.cell_size
    }

    /// Same grid with the other row order.
    pub fn with_orientation(&self, orientation: Orientation) -> Self {
        Self {
            orientation,
            ..*self
        }
    }

    /// Grid whose cells are `factor`x`factor` blocks of this one.
    pub fn coarsened(&self, factor: usize) -> Result<Self, RasterError> {
        if factor == 0 {
            return Err(RasterError::ZeroFactor);
        }
        if !self.n_rows.is_multiple_of(factor) || !self.n_cols.is_multiple_of(factor) {
            return Err(RasterError::NotDivisible {
                n_rows: self.n_rows,
                n_cols: self.n_cols,
                factor,
            });
        }
        Self::new(
            self.n_rows / factor,
            self.n_cols / factor,
            self.south,
            self.west,
            self.cell_size * factor as f64,
            self.orientation,
        )
    }

    /// Row and column of the cell containing a point. Points on the
    /// north or east edge belong to the last row or column.
    pub fn cell_containing(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        let north = self.north();
        let east = self.east();
        if !(lat >= self.south && lat <= north && lon >= self.west && lon <= east) {
            return None;
        }
        let from_south = (((lat - self.south) / self.cell_size).floor() as usize).min(self.n_rows - 1);
        let col = (((lon - self.west) / self.cell_size).floor() as usize).min(self.n_cols - 1);
        let row = match self.orientation {
            Orientation::SouthToNorth => from_south,
            Orientation::NorthToSouth => self.n_rows - 1 - from_south,
        };
        Some((row, col))
    }

    /// Checks that two grids cover the same cells in the same row order.
    pub fn ensure_compatible(&self, other: &GridGeometry) -> Result<(), RasterError> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(RasterError::GeometryMismatch(format!(
                "{}x{} vs {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let close = |a: f64, b: f64| (a - b).abs() <= PLACEMENT_TOLERANCE;
        if !close(self.cell_size, other.cell_size) {
            return Err(RasterError::GeometryMismatch(format!(
                "cell size {} vs {}",
                self.cell_size, other.cell_size
            )));
        }
        if !close(self.south, other.south) || !close(self.west, other.west) {
            return Err(RasterError::GeometryMismatch(format!(
                "south-west corner ({}, {}) vs ({}, {})",
                self.south, self.west, other.south, other.west
            )));
        }
        if self.orientation != other.orientation {
            return Err(RasterError::OrientationMismatch {
                expected: self.orientation,
                found: other.orientation,
            });
        }
        Ok(())
    }
}

/// A lat/lon field of values with a validity mask (`true` = valid datum).
#[derive(Clone, Debug)]
pub struct GridRaster {
    geometry: GridGeometry,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl GridRaster {
    pub fn new(geometry: GridGeometry, values: Vec<f64>, mask: Vec<bool>) -> Result<Self, RasterError> {
        for len in [values.len(), mask.len()] {
            if len != geometry.len() {
                return Err(RasterError::ShapeMismatch {
                    n_rows: geometry.n_rows,
                    n_cols: geometry.n_cols,
                    found: len,
                });
            }
        }
        Ok(Self {
            geometry,
            values,
            mask,
        })
    }

    /// Every cell valid with the given values.
    pub fn from_values(geometry: GridGeometry, values: Vec<f64>) -> Result<Self, RasterError> {
        let mask = vec![true; values.len()];
        Self::new(geometry, values, mask)
    }

    /// Builds a grid from per-cell options; `None` is masked out.
    pub fn from_options(geometry: GridGeometry, cells: &[Option<f64>]) -> Result<Self, RasterError> {
        let values = cells.iter().map(|c| c.unwrap_or(0.0)).collect();
        let mask = cells.iter().map(Option::is_some).collect();
        Self::new(geometry, values, mask)
    }

    pub fn filled(geometry: GridGeometry, value: f64) -> Self {
        Self {
            values: vec![value; geometry.len()],
            mask: vec![true; geometry.len()],
            geometry,
        }
    }

    pub fn masked(geometry: GridGeometry) -> Self {
        Self {
            values: vec![0.0; geometry.len()],
            mask: vec![false; geometry.len()],
            geometry,
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn n_rows(&self) -> usize {
        self.geometry.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.geometry.n_cols
    }

    pub fn orientation(&self) -> Orientation {
        self.geometry.orientation
    }

    /// Raw cell values in row-major order. Masked cells hold unspecified numbers.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.geometry.n_cols + col
    }

    /// Value of a cell, or `None` if it is masked out.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = self.index(row, col);
        self.mask[i].then(|| self.values[i])
    }

    #[inline]
    pub fn get_flat(&self, i: usize) -> Option<f64> {
        self.mask[i].then(|| self.values[i])
    }

    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        let i = self.index(row, col);
        match value {
            Some(v) => {
                self.values[i] = v;
                self.mask[i] = true;
            }
            None => self.mask[i] = false,
        }
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Iterates cells in row-major order as options.
    pub fn cells(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.values.iter().zip(&self.mask).map(|(v, m)| m.then_some(*v))
    }

    /// Cellwise map over valid cells; the mask is preserved.
    pub fn map_valid(&self, f: impl Fn(f64) -> f64) -> GridRaster {
        let values = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(v, m)| if *m { f(*v) } else { 0.0 })
            .collect();
        GridRaster {
            geometry: self.geometry,
            values,
            mask: self.mask.clone(),
        }
    }

    pub fn into_parts(self) -> (GridGeometry, Vec<f64>, Vec<bool>) {
        (self.geometry, self.values, self.mask)
    }
}

/// Equal geometry, equal mask, and equal values in every valid cell.
impl PartialEq for GridRaster {
    fn eq(&self, other: &Self) -> bool {
        self.geometry == other.geometry
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), m)| !*m || a == b)
    }
}

/// Grids for an ordered sequence of epochs, all on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSeries {
    epochs: Vec<Year>,
    grids: Vec<GridRaster>,
}

impl SnapshotSeries {
    pub fn new(epochs: Vec<Year>, grids: Vec<GridRaster>) -> Result<Self, RasterError> {
        if epochs.len() != grids.len() {
            return Err(RasterError::LengthMismatch {
                epochs: epochs.len(),
                grids: grids.len(),
            });
        }
        if epochs.is_empty() {
            return Err(RasterError::EmptySeries);
        }
        ensure_increasing(&epochs)?;
        let first = *grids[0].geometry();
        for g in &grids[1..] {
            first.ensure_compatible(g.geometry())?;
        }
        Ok(Self { epochs, grids })
    }

    pub fn epochs(&self) -> &[Year] {
        &self.epochs
    }

    pub fn grids(&self) -> &[GridRaster] {
        &self.grids
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.grids[0].geometry()
    }

    pub fn get(&self, epoch: Year) -> Option<&GridRaster> {
        self.position(epoch).map(|i| &self.grids[i])
    }

    pub fn position(&self, epoch: Year) -> Option<usize> {
        self.epochs.binary_search(&epoch).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Year, &GridRaster)> {
        self.epochs.iter().copied().zip(&self.grids)
    }

    /// Keeps only the listed epochs, in the given order.
    pub fn select(&self, epochs: &[Year]) -> Result<SnapshotSeries, RasterError> {
        let grids = epochs
            .iter()
            .map(|e| self.get(*e).cloned().ok_or(RasterError::MissingYear(*e)))
            .collect::<Result<Vec<_>, _>>()?;
        SnapshotSeries::new(epochs.to_vec(), grids)
    }

    pub fn into_parts(self) -> (Vec<Year>, Vec<GridRaster>) {
        (self.epochs, self.grids)
    }
}

pub(crate) fn ensure_increasing(epochs: &[Year]) -> Result<(), RasterError> {
    for w in epochs.windows(2) {
        if w[1] <= w[0] {
            return Err(RasterError::EpochsNotIncreasing {
                previous: w[0],
                next: w[1],
            });
        }
    }
    Ok(())
}

/// Monthly grids for consecutive whole years, in (year, month) order.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthlyArchive {
    start_year: Year,
    n_years: usize,
    grids: Vec<GridRaster>,
}

impl MonthlyArchive {
    pub fn new(start_year: Year, n_years: usize, grids: Vec<GridRaster>) -> Result<Self, RasterError> {
        if grids.len() != 12 * n_years {
            return Err(RasterError::LengthMismatch {
                epochs: 12 * n_years,
                grids: grids.len(),
            });
        }
        if let Some(first) = grids.first() {
            for g in &grids[1..] {
                first.geometry().ensure_compatible(g.geometry())?;
            }
        }
        Ok(Self {
            start_year,
            n_years,
            grids,
        })
    }

    pub fn start_year(&self) -> Year {
        self.start_year
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn grids(&self) -> &[GridRaster] {
        &self.grids
    }

    /// Grid for `month` (1-based) of `year`.
    pub fn month(&self, year: Year, month: u32) -> Option<&GridRaster> {
        let y = usize::try_from(year - self.start_year).ok()?;
        if y >= self.n_years || !(1..=12).contains(&month) {
            return None;
        }
        self.grids.get(y * 12 + month as usize - 1)
    }
}
