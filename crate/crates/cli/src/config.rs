//! Run configuration.
//!
//! A config file is a list of `key = value` lines; `#` starts a comment.
//! Command-line `--set key=value` overrides are applied on top. Relative
//! paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use poptemp::ingest::{CruLayout, ASCII_NODATA, CRU_NODATA};
use poptemp::urban::{UhiMethod, UhiParams};
use poptemp::{MaskPolicy, Year};

/// Every recognised key with a one-line description, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    ("area_grid", "fine-resolution cell area grid (ASCII)"),
    ("population_pattern", "population grid path with {epoch} standing for the year"),
    ("population_epochs", "epochs with a population grid; defaults to `epochs`"),
    ("fine_rows", "rows of headerless fine grids"),
    ("fine_cols", "columns of headerless fine grids"),
    ("temperature_archive", "monthly temperature archive (.dat)"),
    ("cru_n_lat", "latitude bands in the archive (360)"),
    ("cru_n_cols", "longitude columns in the archive (720)"),
    ("cru_start_year", "first year of the archive (1901)"),
    ("cru_n_years", "years in the archive (113)"),
    ("city_table", "city population table (CSV)"),
    ("migration_stocks", "bilateral migrant stocks (CSV)"),
    ("country_temperatures", "country mean temperatures (CSV)"),
    ("country_populations", "country populations (CSV)"),
    ("epochs", "analysis epochs, e.g. `1910,1920` or `1910:2000:10`"),
    ("migration_epochs", "stock epochs to difference; defaults to all in the table"),
    ("aggregation_factor", "fine cells per coarse cell along each axis (6)"),
    ("window", "years in the centred temperature mean, odd (21)"),
    ("mask_policy", "strict or paper_compat (strict)"),
    ("base_epoch", "epoch every anomaly series is zero at; defaults to the first"),
    ("uhi_alpha", "urban heat island coefficient (0.00174)"),
    ("uhi_beta", "urban heat island exponent (0.45)"),
    ("uhi_method", "weights for urban-adjusted changes: laspeyres, paasche or fisher (fisher)"),
    ("histogram_bin_width", "experienced-change histogram bin width in °C (1)"),
    ("temperature_scale", "archive units to °C, multiplied (0.1)"),
    ("temperature_offset", "added after scaling (0)"),
    ("population_nodata", "population grid sentinel (-9999)"),
    ("area_nodata", "area grid sentinel (-9999)"),
    ("cru_nodata", "archive sentinel (-999)"),
    ("output_dir", "where prepared grids and CSVs go (out)"),
    ("write_annual", "also write one annual temperature grid per year (true)"),
];

/// Where a setting came from, for error messages.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    File { path: PathBuf, line: usize },
    Override,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::File { path, line } => write!(f, "{}:{line}", path.display()),
            Source::Override => f.write_str("--set"),
        }
    }
}

/// Raw settings before validation.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, (String, Source)>,
}

impl Settings {
    /// Parses config file text. Later duplicates are an error.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let source = Source::File {
                path: path.to_path_buf(),
                line: i + 1,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{source}: expected `key = value`, found {line:?}"))?;
            let k = k.trim();
            if s.values.contains_key(k) {
                bail!("{source}: {k} is set twice");
            }
            s.insert(k, v.trim(), source)?;
        }
        Ok(s)
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects key=value, found {assignment:?}"))?;
        self.insert(k.trim(), v.trim(), Source::Override)
    }

    fn insert(&mut self, key: &str, value: &str, source: Source) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            bail!("{source}: unknown key {key:?}");
        }
        let value = value.trim_matches('"').to_string();
        self.values.insert(key.to_string(), (value, source));
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&(String, Source)> {
        self.values.get(key)
    }

    fn parsed<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, src)) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("{src}: {key} = {v:?}: {e}")),
        }
    }

    fn or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn epochs(&self, key: &str) -> Result<Option<Vec<Year>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, src)) => parse_epochs(v).map(Some).with_context(|| format!("{src}: {key}")),
        }
    }
}

/// Parses `1910,1920,1930` or `first:last:step`.
pub fn parse_epochs(text: &str) -> Result<Vec<Year>> {
    let epochs: Vec<Year> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        let [first, last, step] = parts[..] else {
            bail!("range must be first:last:step, found {text:?}");
        };
        let (first, last, step): (Year, Year, usize) = (first.parse()?, last.parse()?, step.parse()?);
        if step == 0 {
            bail!("range step must be positive");
        }
        (first..=last).step_by(step).collect()
    } else {
        text.split(',')
            .map(|t| t.trim().parse::<Year>().with_context(|| format!("bad epoch {t:?}")))
            .collect::<Result<_>>()?
    };
    if epochs.is_empty() {
        bail!("no epochs given");
    }
    if epochs.windows(2).any(|w| w[0] >= w[1]) {
        bail!("epochs must be strictly increasing: {text:?}");
    }
    Ok(epochs)
}

/// Validated configuration for a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub area_grid: PathBuf,
    pub population_pattern: String,
    pub population_epochs: Vec<Year>,
    /// (rows, columns) for headerless fine grids.
    pub fine_dims: Option<(usize, usize)>,
    pub temperature_archive: PathBuf,
    pub cru: CruLayout,
    pub city_table: Option<PathBuf>,
    pub migration_stocks: Option<PathBuf>,
    pub country_temperatures: Option<PathBuf>,
    pub country_populations: Option<PathBuf>,
    pub epochs: Vec<Year>,
    pub migration_epochs: Option<Vec<Year>>,
    pub aggregation_factor: usize,
    pub window: usize,
    pub mask_policy: MaskPolicy,
    pub base_epoch: Year,
    pub uhi: UhiParams,
    pub uhi_method: UhiMethod,
    pub histogram_bin_width: f64,
    pub temperature_scale: f64,
    pub temperature_offset: f64,
    pub population_nodata: f64,
    pub area_nodata: f64,
    pub output_dir: PathBuf,
    pub write_annual: bool,
}

impl RunConfig {
    /// Reads a config file and applies overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut settings = Settings::parse(&text, path)?;
        for o in overrides {
            settings.set(o)?;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_settings(&settings, base)
    }

    pub fn from_settings(s: &Settings, base_dir: &Path) -> Result<Self> {
        let resolve = |p: &str| -> PathBuf {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let path = |key: &str| s.raw(key).map(|(v, _)| resolve(v));
        let required = |key: &str| path(key).ok_or_else(|| anyhow!("missing required key {key}"));

        let epochs = s.epochs("epochs")?.ok_or_else(|| anyhow!("missing required key epochs"))?;
        let population_epochs = s.epochs("population_epochs")?.unwrap_or_else(|| epochs.clone());
        if let Some(e) = epochs.iter().find(|e| !population_epochs.contains(e)) {
            bail!("analysis epoch {e} has no population grid (not in population_epochs)");
        }
        let population_pattern = resolve(
            &s.raw("population_pattern")
                .ok_or_else(|| anyhow!("missing required key population_pattern"))?
                .0,
        )
        .to_string_lossy()
        .into_owned();
        if population_epochs.len() > 1 && !population_pattern.contains("{epoch}") {
            bail!("population_pattern must contain {{epoch}} when there are several population epochs");
        }
        let fine_dims = match (s.parsed::<usize>("fine_rows")?, s.parsed::<usize>("fine_cols")?) {
            (Some(r), Some(c)) => Some((r, c)),
            (None, None) => None,
            _ => bail!("fine_rows and fine_cols must be given together"),
        };

        let mut cru = CruLayout::new(
            s.or("cru_n_lat", 360)?,
            s.or("cru_n_cols", 720)?,
            s.or("cru_start_year", 1901)?,
            s.or("cru_n_years", 113)?,
        );
        cru.nodata = s.or("cru_nodata", CRU_NODATA)?;

        let aggregation_factor: usize = s.or("aggregation_factor", 6)?;
        if aggregation_factor == 0 {
            bail!("aggregation_factor must be positive");
        }
        let window: usize = s.or("window", 21)?;
        if window.is_multiple_of(2) {
            bail!("window must be odd, got {window}");
        }
        let mask_policy: MaskPolicy = s.or("mask_policy", MaskPolicy::Strict)?;
        let base_epoch: Year = s.or("base_epoch", epochs[0])?;
        if !epochs.contains(&base_epoch) {
            bail!("base_epoch {base_epoch} is not one of the analysis epochs");
        }
        let uhi = UhiParams::new(
            s.or("uhi_alpha", UhiParams::PAPER.alpha())?,
            s.or("uhi_beta", UhiParams::PAPER.beta())?,
        )?;
        let uhi_method = match s.raw("uhi_method").map(|(v, src)| (v.as_str(), src)) {
            None | Some(("fisher", _)) => UhiMethod::Fisher,
            Some(("laspeyres", _)) => UhiMethod::Laspeyres,
            Some(("paasche", _)) => UhiMethod::Paasche,
            Some((v, src)) => bail!("{src}: uhi_method must be laspeyres, paasche or fisher, found {v:?}"),
        };
        let histogram_bin_width: f64 = s.or("histogram_bin_width", 1.0)?;
        if !(histogram_bin_width > 0.0 && histogram_bin_width.is_finite()) {
            bail!("histogram_bin_width must be positive");
        }
        let temperature_scale: f64 = s.or("temperature_scale", 0.1)?;
        let temperature_offset: f64 = s.or("temperature_offset", 0.0)?;
        if !(temperature_scale.is_finite() && temperature_scale != 0.0 && temperature_offset.is_finite()) {
            bail!("temperature_scale must be finite and nonzero, temperature_offset finite");
        }

        let cfg = RunConfig {
            area_grid: required("area_grid")?,
            population_pattern,
            population_epochs,
            fine_dims,
            temperature_archive: required("temperature_archive")?,
            cru,
            city_table: path("city_table"),
            migration_stocks: path("migration_stocks"),
            country_temperatures: path("country_temperatures"),
            country_populations: path("country_populations"),
            epochs,
            migration_epochs: s.epochs("migration_epochs")?,
            aggregation_factor,
            window,
            mask_policy,
            base_epoch,
            uhi,
            uhi_method,
            histogram_bin_width,
            temperature_scale,
            temperature_offset,
            population_nodata: s.or("population_nodata", ASCII_NODATA)?,
            area_nodata: s.or("area_nodata", ASCII_NODATA)?,
            output_dir: path("output_dir").unwrap_or_else(|| base_dir.join("out")),
            write_annual: s.or("write_annual", true)?,
        };
        if cfg.migration_stocks.is_some() != cfg.country_temperatures.is_some() {
            bail!("migration_stocks and country_temperatures must be given together");
        }
        if cfg.country_populations.is_some() && cfg.migration_stocks.is_none() {
            bail!("country_populations needs migration_stocks");
        }
        cfg.check_distinct_inputs()?;
        Ok(cfg)
    }

    pub fn population_path(&self, epoch: Year) -> PathBuf {
        PathBuf::from(self.population_pattern.replace("{epoch}", &epoch.to_string()))
    }

    fn check_distinct_inputs(&self) -> Result<()> {
        let mut seen: BTreeMap<PathBuf, String> = BTreeMap::new();
        let mut inputs = vec![
            ("area_grid".to_string(), self.area_grid.clone()),
            ("temperature_archive".to_string(), self.temperature_archive.clone()),
        ];
        for e in &self.population_epochs {
            inputs.push((format!("population grid {e}"), self.population_path(*e)));
        }
        for (name, p) in [
            ("city_table", &self.city_table),
            ("migration_stocks", &self.migration_stocks),
            ("country_temperatures", &self.country_temperatures),
            ("country_populations", &self.country_populations),
        ] {
            if let Some(p) = p {
                inputs.push((name.to_string(), p.clone()));
            }
        }
        for (name, p) in inputs {
            if let Some(other) = seen.insert(p.clone(), name.clone()) {
                bail!("{name} and {other} point at the same file {}", p.display());
            }
        }
        Ok(())
    }

    /// Directory holding prepared grids.
    pub fn prepared_dir(&self) -> PathBuf {
        self.output_dir.join("prepared")
    }
}
