//! The prepared bundle: coarse grids ready for index computation.
//!
//! `prepare` aggregates the fine population and area grids to the
//! temperature grid, averages the monthly archive into annual and centred
//! multi-year means, and writes everything under `<output_dir>/prepared`
//! with a `manifest.txt` listing each file's SHA-256. Later stages read the
//! bundle back and refuse files whose checksum or settings no longer match.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use log::info;
use poptemp::ingest::{read_ascii_grid, write_ascii_grid, CruReader, ASCII_NODATA};
use poptemp::numfmt::g17;
use poptemp::raster::{aggregate_blocks, centered_mean, convert_units, reorient, AnnualAccumulator, Reducer};
use poptemp::{GridRaster, Orientation, SnapshotSeries, Year};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::output::Staging;

pub const MANIFEST: &str = "manifest.txt";
const MANIFEST_TITLE: &str = "# poptemp prepared bundle";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Area,
    Population,
    /// Centred multi-year mean, °C.
    Temperature,
    /// One year's mean, °C.
    Annual,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Area => "area",
            Kind::Population => "population",
            Kind::Temperature => "temperature",
            Kind::Annual => "annual",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Kind::Area, Kind::Population, Kind::Temperature, Kind::Annual]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub kind: Kind,
    pub epoch: Option<Year>,
    pub sha256: String,
    /// Relative to the output directory.
    pub path: String,
}

/// Settings that change prepared grids, recorded so a stale bundle is caught.
fn fingerprint(cfg: &RunConfig) -> Vec<(&'static str, String)> {
    vec![
        ("aggregation_factor", cfg.aggregation_factor.to_string()),
        ("window", cfg.window.to_string()),
        ("temperature_scale", g17(cfg.temperature_scale)),
        ("temperature_offset", g17(cfg.temperature_offset)),
        ("cru_start_year", cfg.cru.start_year.to_string()),
        ("cru_n_years", cfg.cru.n_years.to_string()),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub settings: Vec<(String, String)>,
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{MANIFEST_TITLE}")?;
        for (k, v) in &self.settings {
            writeln!(out, "setting\t{k}\t{v}")?;
        }
        for e in &self.entries {
            let epoch = e.epoch.map(|y| y.to_string()).unwrap_or_else(|| "-".into());
            writeln!(out, "file\t{}\t{epoch}\t{}\t{}", e.kind.as_str(), e.sha256, e.path)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, MANIFEST_TITLE)) => {}
            _ => bail!("not a prepared bundle manifest"),
        }
        let mut m = Manifest {
            settings: Vec::new(),
            entries: Vec::new(),
        };
        for (i, line) in lines {
            let bad = || anyhow!("manifest line {}: cannot parse {line:?}", i + 1);
            let f: Vec<&str> = line.split('\t').collect();
            match f[..] {
                ["setting", k, v] => m.settings.push((k.into(), v.into())),
                ["file", kind, epoch, sha, path] => m.entries.push(Entry {
                    kind: Kind::parse(kind).ok_or_else(bad)?,
                    epoch: match epoch {
                        "-" => None,
                        e => Some(e.parse().map_err(|_| bad())?),
                    },
                    sha256: sha.into(),
                    path: path.into(),
                }),
                _ => return Err(bad()),
            }
        }
        Ok(m)
    }

    pub fn find(&self, kind: Kind, epoch: Option<Year>) -> Option<&Entry> {
        self.entries.iter().find(|e| e.kind == kind && e.epoch == epoch)
    }

    pub fn read(output_dir: &Path) -> Result<Self> {
        let path = output_dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading {}; run `prepare` first", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }
}

fn read_fine(path: &Path, nodata: f64, dims: Option<(usize, usize)>, what: &str) -> Result<GridRaster> {
    let file = File::open(path).with_context(|| format!("opening {what} {}", path.display()))?;
    let grid = read_ascii_grid(BufReader::with_capacity(1 << 20, file), nodata, dims)
        .with_context(|| format!("reading {what} {}", path.display()))?;
    Ok(grid)
}

fn coarse_sum(fine: &GridRaster, factor: usize, what: &str) -> Result<GridRaster> {
    let coarse = aggregate_blocks(fine, factor, Reducer::Sum).with_context(|| format!("aggregating {what}"))?;
    Ok(reorient(&coarse, Orientation::SouthToNorth))
}

/// Streams the monthly archive into annual means (archive units).
fn read_annual(cfg: &RunConfig) -> Result<SnapshotSeries> {
    let path = &cfg.temperature_archive;
    let file = File::open(path).with_context(|| format!("opening temperature archive {}", path.display()))?;
    let reader = CruReader::new(BufReader::with_capacity(1 << 20, file), cfg.cru)?;
    let mut acc = AnnualAccumulator::new(*reader.geometry());
    let (mut years, mut grids) = (Vec::new(), Vec::new());
    for month in reader {
        let m = month.with_context(|| format!("reading {}", path.display()))?;
        if let Some(annual) = acc.push(m.year, &m.grid)? {
            years.push(m.year);
            grids.push(annual);
        }
    }
    ensure!(
        years.len() == cfg.cru.n_years,
        "{}: expected {} years from {}, found {}",
        path.display(),
        cfg.cru.n_years,
        cfg.cru.start_year,
        years.len()
    );
    Ok(SnapshotSeries::new(years, grids)?)
}

fn stage_grid(staging: &mut Staging, cfg: &RunConfig, rel: String, grid: &GridRaster, kind: Kind, epoch: Option<Year>) -> Result<Entry> {
    let sha256 = staging.write(&cfg.output_dir.join(&rel), |w| Ok(write_ascii_grid(w, grid, ASCII_NODATA)?))?;
    Ok(Entry {
        kind,
        epoch,
        sha256,
        path: rel,
    })
}

/// Builds the prepared bundle. Nothing is left behind if any step fails.
pub fn prepare(cfg: &RunConfig) -> Result<Manifest> {
    let factor = cfg.aggregation_factor;
    let mut staging = Staging::new();
    let mut entries = Vec::new();

    info!("reading temperature archive {}", cfg.temperature_archive.display());
    let annual = read_annual(cfg)?;
    let geometry = *annual.geometry();
    // Refuse before the long aggregation work if any window is out of range.
    let centred = centered_mean(&annual, &cfg.epochs, cfg.window)?;

    info!("aggregating area grid {}", cfg.area_grid.display());
    let area = coarse_sum(&read_fine(&cfg.area_grid, cfg.area_nodata, cfg.fine_dims, "area grid")?, factor, "area grid")?;
    area.geometry()
        .ensure_compatible(&geometry)
        .context("aggregated area grid does not match the temperature grid")?;
    entries.push(stage_grid(&mut staging, cfg, "prepared/area.asc".into(), &area, Kind::Area, None)?);
    drop(area);

    for &epoch in &cfg.population_epochs {
        let path = cfg.population_path(epoch);
        info!("aggregating population {epoch} from {}", path.display());
        let what = format!("population grid for {epoch}");
        let pop = coarse_sum(&read_fine(&path, cfg.population_nodata, cfg.fine_dims, &what)?, factor, &what)?;
        pop.geometry()
            .ensure_compatible(&geometry)
            .with_context(|| format!("aggregated {what} does not match the temperature grid"))?;
        let rel = format!("prepared/population_{epoch}.asc");
        entries.push(stage_grid(&mut staging, cfg, rel, &pop, Kind::Population, Some(epoch))?);
    }

    info!("writing temperature means");
    for (epoch, g) in centred.iter() {
        let g = convert_units(g, cfg.temperature_scale, cfg.temperature_offset);
        let rel = format!("prepared/temperature_{epoch}.asc");
        entries.push(stage_grid(&mut staging, cfg, rel, &g, Kind::Temperature, Some(epoch))?);
    }
    if cfg.write_annual {
        for (year, g) in annual.iter() {
            let g = convert_units(g, cfg.temperature_scale, cfg.temperature_offset);
            let rel = format!("prepared/annual/temperature_{year}.asc");
            entries.push(stage_grid(&mut staging, cfg, rel, &g, Kind::Annual, Some(year))?);
        }
    }

    let manifest = Manifest {
        settings: fingerprint(cfg)
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        entries,
    };
    staging.write(&cfg.output_dir.join(MANIFEST), |w| Ok(manifest.write(w)?))?;
    staging.commit()?;
    info!("prepared {} grids in {}", manifest.entries.len(), cfg.prepared_dir().display());
    Ok(manifest)
}

/// Coarse grids for the analysis epochs, south-to-north.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub area: GridRaster,
    pub pops: SnapshotSeries,
    pub temps: SnapshotSeries,
}

fn load_entry(output_dir: &Path, entry: &Entry) -> Result<GridRaster> {
    let path: PathBuf = output_dir.join(&entry.path);
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    ensure!(
        digest == entry.sha256,
        "{} has changed since it was prepared (checksum mismatch); rerun `prepare`",
        path.display()
    );
    let grid = read_ascii_grid(&bytes[..], ASCII_NODATA, None).with_context(|| format!("parsing {}", path.display()))?;
    Ok(reorient(&grid, Orientation::SouthToNorth))
}

impl Bundle {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let manifest = Manifest::read(&cfg.output_dir)?;
        for (k, v) in fingerprint(cfg) {
            let recorded = manifest.settings.iter().find(|(rk, _)| rk == k).map(|(_, rv)| rv.as_str());
            ensure!(
                recorded == Some(v.as_str()),
                "bundle was prepared with {k} = {}, config says {v}; rerun `prepare`",
                recorded.unwrap_or("(unset)")
            );
        }
        let get = |kind: Kind, epoch: Option<Year>| -> Result<GridRaster> {
            let entry = manifest.find(kind, epoch).ok_or_else(|| {
                anyhow!(
                    "bundle has no {} grid{}; rerun `prepare`",
                    kind.as_str(),
                    epoch.map(|e| format!(" for {e}")).unwrap_or_default()
                )
            })?;
            load_entry(&cfg.output_dir, entry)
        };
        let area = get(Kind::Area, None)?;
        let pops = cfg
            .epochs
            .iter()
            .map(|e| get(Kind::Population, Some(*e)))
            .collect::<Result<Vec<_>>>()?;
        let temps = cfg
            .epochs
            .iter()
            .map(|e| get(Kind::Temperature, Some(*e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Bundle {
            area,
            pops: SnapshotSeries::new(cfg.epochs.clone(), pops)?,
            temps: SnapshotSeries::new(cfg.epochs.clone(), temps)?,
        })
    }
}
