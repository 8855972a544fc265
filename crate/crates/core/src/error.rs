use thiserror::Error;

use crate::indices::IndexError;
use crate::ingest::IngestError;
use crate::migration::MigrationError;
use crate::raster::RasterError;
use crate::urban::UrbanError;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Urban(#[from] UrbanError),
    #[error(transparent)]
    Migration(#[from] MigrationError),
}
