//! Population-weighted temperature trends.
//!
//! Gridded temperature and population snapshots are combined into index
//! series the way price statisticians combine prices and quantities:
//! area-weighted means, naive population-weighted means, fixed-base and
//! chained Laspeyres/Paasche/Fisher changes, plus urban heat island and
//! international migration adjustments.
//!
//! The crate is organised bottom-up:
//!
//! - [`raster`]: grid data model, block aggregation, orientation, temporal means
//! - [`ingest`]: parsers and writers for the on-disk formats, synthetic fixtures
//! - [`indices`]: index-number mathematics
//! - [`urban`]: urban heat island model and adjusted indices
//! - [`migration`]: migrant stocks, flows and the experienced temperature change

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod indices;
pub mod ingest;
pub mod migration;
pub mod numfmt;
pub mod raster;
pub mod sum;
pub mod urban;

pub use error::Error;
pub use indices::{ChangeSeries, IndexSeries, MaskPolicy, Method, SeriesKind};
pub use raster::{GridGeometry, GridRaster, MonthlyArchive, Orientation, SnapshotSeries};

/// A calendar year labelling an epoch.
pub type Year = i32;
