//! Urban heat island adjustment.
//!
//! Each city warms its surroundings by `U = α·P^β`. Cities are binned into
//! the grid cell containing their coordinates, giving per cell an urban
//! population share ν and a population-weighted mean U. The adjusted level
//! treats the urban part of a cell's population as living at T + U.

use log::warn;
use thiserror::Error;

use crate::indices::{
    chain, fisher_change, rebase_anomaly, reduce_cells, weighted_change_detail, ChangeSeries, IndexError, IndexSeries,
    MaskPolicy, Method,
};
use crate::ingest::CityTable;
use crate::raster::{GridRaster, RasterError, SnapshotSeries};
use crate::sum::CompensatedSum;
use crate::Year;

#[derive(Debug, Error, PartialEq)]
pub enum UrbanError {
    #[error("invalid UHI parameters: {0}")]
    InvalidParams(String),
    #[error("negative population {0}")]
    NegativePopulation(f64),
    #[error("city {id} at ({lat}, {lon}) lies outside the grid")]
    CityOutsideGrid { id: String, lat: f64, lon: f64 },
    #[error("city table has no populations for {0}")]
    EpochAbsent(Year),
    #[error("urban epoch {0} is not among the series epochs")]
    EpochMismatch(Year),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Geometry(#[from] RasterError),
}

/// Parameters of `U = alpha · P^beta` (°C, persons).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UhiParams {
    alpha: f64,
    beta: f64,
}

impl UhiParams {
    /// Values fitted for cities of over 100,000 people.
    pub const PAPER: UhiParams = UhiParams {
        alpha: 0.00174,
        beta: 0.45,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self, UrbanError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(UrbanError::InvalidParams(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(UrbanError::InvalidParams(format!("beta must lie in (0, 1), got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for UhiParams {
    fn default() -> Self {
        Self::PAPER
    }
}

/// Heat island intensity of a city of `pop` people, in °C.
pub fn uhi_intensity(pop: f64, params: &UhiParams) -> Result<f64, UrbanError> {
    if !(pop >= 0.0) {
        return Err(UrbanError::NegativePopulation(pop));
    }
    if pop == 0.0 {
        return Ok(0.0);
    }
    Ok(params.alpha * pop.powf(params.beta))
}

/// Urbanization on the population grid for one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct UrbanGridEpoch {
    pub epoch: Year,
    /// ν: urban share of cell population, valid where population is.
    pub urban_frac: GridRaster,
    /// U: population-weighted mean intensity of the cell's cities, 0 without
    /// cities; valid everywhere.
    pub uhi: GridRaster,
    /// Cells whose city population exceeded the gridded population.
    pub capped_cells: usize,
}

/// Bins the cities' `epoch` populations into `pop`'s grid.
///
/// Cities without a population for the epoch are skipped. Urban population
/// above the cell's own population is capped there, and each capped cell is
/// logged and counted.
pub fn build_urban_epoch(
    cities: &CityTable,
    pop: &GridRaster,
    epoch: Year,
    params: &UhiParams,
) -> Result<UrbanGridEpoch, UrbanError> {
    let g = pop.geometry();
    let n = g.len();
    let mut urban = vec![0.0f64; n];
    let mut weighted_uhi = vec![0.0f64; n];
    let populations = cities.populations_at(epoch).ok_or(UrbanError::EpochAbsent(epoch))?;
    for (city, p) in populations {
        let Some(p) = p else { continue };
        let (r, c) = g.cell_containing(city.lat, city.lon).ok_or_else(|| UrbanError::CityOutsideGrid {
            id: city.id.clone(),
            lat: city.lat,
            lon: city.lon,
        })?;
        let k = pop.index(r, c);
        urban[k] += p;
        weighted_uhi[k] += uhi_intensity(p, params)? * p;
    }

    let mut frac = vec![0.0; n];
    let mut uhi = vec![0.0; n];
    let mut capped_cells = 0;
    for k in 0..n {
        if urban[k] == 0.0 {
            continue;
        }
        uhi[k] = weighted_uhi[k] / urban[k];
        let cell_pop = pop.get_flat(k).unwrap_or(0.0);
        if urban[k] > cell_pop {
            capped_cells += 1;
            let (r, c) = (k / g.n_cols(), k % g.n_cols());
            warn!(
                "{epoch}: city population {} exceeds cell population {cell_pop} at ({:.4}, {:.4}); capped",
                urban[k],
                g.row_center_lat(r),
                g.col_center_lon(c)
            );
        }
        if cell_pop > 0.0 {
            frac[k] = urban[k].min(cell_pop) / cell_pop;
        }
    }
    if capped_cells > 0 {
        warn!("{epoch}: capped urban population in {capped_cells} cells");
    }
    Ok(UrbanGridEpoch {
        epoch,
        urban_frac: GridRaster::new(*g, frac, pop.mask().to_vec())?,
        uhi: GridRaster::from_values(*g, uhi)?,
        capped_cells,
    })
}

/// Builds one [`UrbanGridEpoch`] per population epoch the city table covers.
pub fn build_urban_epochs(
    cities: &CityTable,
    pops: &SnapshotSeries,
    params: &UhiParams,
) -> Result<Vec<UrbanGridEpoch>, UrbanError> {
    pops.iter()
        .filter(|(e, _)| cities.epoch_index(*e).is_some())
        .map(|(e, p)| build_urban_epoch(cities, p, e, params))
        .collect()
}

fn check_grids(t: &GridRaster, p: &GridRaster, urban: &UrbanGridEpoch) -> Result<(), UrbanError> {
    let g = t.geometry();
    g.ensure_compatible(p.geometry())?;
    g.ensure_compatible(urban.urban_frac.geometry())?;
    g.ensure_compatible(urban.uhi.geometry())?;
    Ok(())
}

/// Unadjusted level and the urban addition Σ U·P·ν / Σ P, over the cells
/// `policy` admits.
pub fn uhi_level_parts(
    temps: &GridRaster,
    pop: &GridRaster,
    urban: &UrbanGridEpoch,
    policy: MaskPolicy,
) -> Result<(f64, f64), UrbanError> {
    check_grids(temps, pop, urban)?;
    let (t, tm, p, pm) = (temps.values(), temps.mask(), pop.values(), pop.mask());
    let (nu, u) = (urban.urban_frac.values(), urban.uhi.values());
    let paper = policy == MaskPolicy::PaperCompat;
    let [tp, up, den] = reduce_cells(t.len(), |i, s: &mut [CompensatedSum; 3]| {
        if !pm[i] || !(tm[i] || paper) {
            return;
        }
        if tm[i] {
            s[0].add(t[i] * p[i]);
        }
        s[1].add(u[i] * p[i] * nu[i]);
        s[2].add(p[i]);
    });
    if !(den > 0.0) {
        return Err(IndexError::ZeroWeight.into());
    }
    Ok((tp / den, up / den))
}

/// Population-weighted mean with urban dwellers at T + U.
pub fn uhi_adjusted_level(
    temps: &GridRaster,
    pop: &GridRaster,
    urban: &UrbanGridEpoch,
    policy: MaskPolicy,
) -> Result<f64, UrbanError> {
    let (base, extra) = uhi_level_parts(temps, pop, urban, policy)?;
    Ok(base + extra)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UhiMethod {
    Laspeyres,
    Paasche,
    Fisher,
}

/// Parts of one adjusted change under frozen weights.
#[derive(Clone, Copy, Debug, PartialEq)]
struct UhiTransition {
    adjusted: f64,
    base: f64,
    /// Σ P·ν / Σ P.
    share: f64,
    /// Σ ΔU·P·ν / Σ P·ν, or 0 without urban population.
    uhi_index: f64,
    /// Σ ΔU·P·ν / Σ P.
    contribution: f64,
}

fn frozen_transition(
    t0: &GridRaster,
    t1: &GridRaster,
    pop: &GridRaster,
    u0: &UrbanGridEpoch,
    u1: &UrbanGridEpoch,
    weights: &UrbanGridEpoch,
    policy: MaskPolicy,
) -> Result<UhiTransition, UrbanError> {
    check_grids(t0, pop, u0)?;
    check_grids(t1, pop, u1)?;
    check_grids(t0, pop, weights)?;
    let base = weighted_change_detail(t0, t1, pop, policy)?.value;
    let (a, am, b, bm) = (t0.values(), t0.mask(), t1.values(), t1.mask());
    let (p, pm) = (pop.values(), pop.mask());
    let nu = weights.urban_frac.values();
    let (ua, ub) = (u0.uhi.values(), u1.uhi.values());
    let paper = policy == MaskPolicy::PaperCompat;
    let [adj, du, pnu, den] = reduce_cells(a.len(), |i, s: &mut [CompensatedSum; 4]| {
        if !pm[i] {
            return;
        }
        let (x0, x1) = if am[i] && bm[i] {
            (a[i], b[i])
        } else if paper {
            (if am[i] { a[i] } else { 0.0 }, if bm[i] { b[i] } else { 0.0 })
        } else {
            return;
        };
        let w = p[i] * nu[i];
        let d = (ub[i] - ua[i]) * w;
        s[0].add((x1 - x0) * p[i] + d);
        s[1].add(d);
        s[2].add(w);
        s[3].add(p[i]);
    });
    if !(den > 0.0) {
        return Err(IndexError::ZeroWeight.into());
    }
    Ok(UhiTransition {
        adjusted: adj / den,
        base,
        share: pnu / den,
        uhi_index: if pnu > 0.0 { du / pnu } else { 0.0 },
        contribution: du / den,
    })
}

/// Adjusted and unadjusted changes with their urban components.
///
/// Transitions whose two epochs both have urban data satisfy
/// `adjusted = base + urban_share · uhi_index`; the others carry the base
/// change, a zero index and no share.
#[derive(Clone, Debug, PartialEq)]
pub struct UhiChanges {
    pub adjusted: ChangeSeries,
    pub base: ChangeSeries,
    /// ΔU weighted by urban population.
    pub uhi_index: ChangeSeries,
    /// urban_share · uhi_index.
    pub uhi_contribution: ChangeSeries,
    /// Σ P·ν / Σ P per transition, `None` where not adjusted.
    pub urban_share: Vec<Option<f64>>,
}

/// Urban-adjusted chained changes for every transition of `temps`.
pub fn uhi_adjusted_changes(
    temps: &SnapshotSeries,
    pops: &SnapshotSeries,
    urban: &[UrbanGridEpoch],
    method: UhiMethod,
    policy: MaskPolicy,
) -> Result<UhiChanges, UrbanError> {
    if temps.epochs() != pops.epochs() {
        return Err(IndexError::EpochMismatch {
            left: temps.epochs().to_vec(),
            right: pops.epochs().to_vec(),
        }
        .into());
    }
    for u in urban {
        if temps.position(u.epoch).is_none() {
            return Err(UrbanError::EpochMismatch(u.epoch));
        }
    }
    let find = |e: Year| urban.iter().find(|u| u.epoch == e);
    let (t, p) = (temps.grids(), pops.grids());
    let epochs = temps.epochs();
    let n = epochs.len().saturating_sub(1);
    let (mut adjusted, mut base, mut index, mut contribution) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut share = Vec::with_capacity(n);
    for i in 1..epochs.len() {
        let (Some(u0), Some(u1)) = (find(epochs[i - 1]), find(epochs[i])) else {
            let l = weighted_change_detail(&t[i - 1], &t[i], &p[i - 1], policy)?.value;
            let pa = weighted_change_detail(&t[i - 1], &t[i], &p[i], policy)?.value;
            let b = match method {
                UhiMethod::Laspeyres => l,
                UhiMethod::Paasche => pa,
                UhiMethod::Fisher => fisher_change(l, pa)?,
            };
            adjusted.push(b);
            base.push(b);
            index.push(0.0);
            contribution.push(0.0);
            share.push(None);
            continue;
        };
        let las = || frozen_transition(&t[i - 1], &t[i], &p[i - 1], u0, u1, u0, policy);
        let paa = || frozen_transition(&t[i - 1], &t[i], &p[i], u0, u1, u1, policy);
        let x = match method {
            UhiMethod::Laspeyres => las()?,
            UhiMethod::Paasche => paa()?,
            UhiMethod::Fisher => {
                let (l, pa) = (las()?, paa()?);
                let s = 0.5 * (l.share + pa.share);
                let c = 0.5 * (l.contribution + pa.contribution);
                UhiTransition {
                    adjusted: fisher_change(l.adjusted, pa.adjusted)?,
                    base: fisher_change(l.base, pa.base)?,
                    share: s,
                    uhi_index: if s > 0.0 { c / s } else { 0.0 },
                    contribution: c,
                }
            }
        };
        adjusted.push(x.adjusted);
        base.push(x.base);
        index.push(x.uhi_index);
        contribution.push(x.contribution);
        share.push(Some(x.share));
    }
    let method_tag = match method {
        UhiMethod::Laspeyres => Method::LaspeyresChained,
        UhiMethod::Paasche => Method::PaascheChained,
        UhiMethod::Fisher => Method::FisherChained,
    };
    let series = |d: Vec<f64>, m: Method| ChangeSeries::new(epochs.to_vec(), d, m);
    Ok(UhiChanges {
        adjusted: series(adjusted, Method::UhiAdjusted)?,
        base: series(base, method_tag)?,
        uhi_index: series(index, Method::UhiAdjusted)?,
        uhi_contribution: series(contribution, Method::UhiAdjusted)?,
        urban_share: share,
    })
}

/// Global summary of urbanization at one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UrbanDiagnostics {
    pub epoch: Year,
    /// Σ P·ν / Σ P over all populated cells.
    pub urban_share: f64,
    /// Σ U·P·ν / Σ P·ν: heat island felt by the average urban dweller.
    pub mean_urban_uhi: f64,
    /// urban_share · mean_urban_uhi.
    pub level_contribution: f64,
    pub capped_cells: usize,
}

pub fn urban_diagnostics(pop: &GridRaster, urban: &UrbanGridEpoch) -> Result<UrbanDiagnostics, UrbanError> {
    pop.geometry().ensure_compatible(urban.urban_frac.geometry())?;
    let (p, pm) = (pop.values(), pop.mask());
    let (nu, u) = (urban.urban_frac.values(), urban.uhi.values());
    let [total, urban_pop, felt] = reduce_cells(p.len(), |i, s: &mut [CompensatedSum; 3]| {
        if pm[i] {
            s[0].add(p[i]);
            s[1].add(p[i] * nu[i]);
            s[2].add(u[i] * p[i] * nu[i]);
        }
    });
    if !(total > 0.0) {
        return Err(IndexError::ZeroWeight.into());
    }
    let urban_share = urban_pop / total;
    let mean_urban_uhi = if urban_pop > 0.0 { felt / urban_pop } else { 0.0 };
    Ok(UrbanDiagnostics {
        epoch: urban.epoch,
        urban_share,
        mean_urban_uhi,
        level_contribution: felt / total,
        capped_cells: urban.capped_cells,
    })
}

/// Chained series with and without the urban adjustment, as anomalies.
#[derive(Clone, Debug, PartialEq)]
pub struct UrbanReport {
    pub unadjusted: IndexSeries,
    pub adjusted: IndexSeries,
    /// adjusted − unadjusted per epoch.
    pub difference: Vec<f64>,
    pub changes: UhiChanges,
    /// Per epoch, `None` before urban data start.
    pub diagnostics: Vec<Option<UrbanDiagnostics>>,
}

/// Builds both series from the naive level of the first epoch. At the
/// first epoch with urban data the adjusted series takes on that epoch's
/// urban level addition (Σ U·P·ν / Σ P); from then on it accumulates the
/// adjusted changes. Both are then rebased to `base_epoch`.
pub fn urban_report(
    temps: &SnapshotSeries,
    pops: &SnapshotSeries,
    urban: &[UrbanGridEpoch],
    method: UhiMethod,
    policy: MaskPolicy,
    base_epoch: Year,
) -> Result<UrbanReport, UrbanError> {
    let changes = uhi_adjusted_changes(temps, pops, urban, method, policy)?;
    let epochs = temps.epochs();
    let anchor = crate::indices::weighted_mean(&temps.grids()[0], &pops.grids()[0], policy)?;
    let unadjusted = chain(&changes.base, anchor);

    let first_urban = epochs.iter().position(|e| urban.iter().any(|u| u.epoch == *e));
    let offset = match first_urban {
        Some(i) => {
            let u = urban.iter().find(|u| u.epoch == epochs[i]).expect("found above");
            Some((i, uhi_level_parts(&temps.grids()[i], &pops.grids()[i], u, policy)?.1))
        }
        None => None,
    };
    let mut values = Vec::with_capacity(epochs.len());
    let mut acc = CompensatedSum::new();
    acc.add(anchor);
    for i in 0..epochs.len() {
        if i > 0 {
            acc.add(changes.adjusted.deltas()[i - 1]);
        }
        if let Some((k, extra)) = offset {
            if k == i {
                acc.add(extra);
            }
        }
        values.push(acc.total());
    }
    let adjusted = IndexSeries::new(
        epochs.to_vec(),
        values,
        crate::indices::SeriesKind::Level,
        Method::UhiAdjusted,
        epochs[0],
    )?;
    let unadjusted = rebase_anomaly(&unadjusted, base_epoch)?;
    let adjusted = rebase_anomaly(&adjusted, base_epoch)?;
    let difference = adjusted
        .values()
        .iter()
        .zip(unadjusted.values())
        .map(|(a, u)| a - u)
        .collect();
    let diagnostics = epochs
        .iter()
        .zip(pops.grids())
        .map(|(e, p)| match urban.iter().find(|u| u.epoch == *e) {
            Some(u) => urban_diagnostics(p, u).map(Some),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(UrbanReport {
        unadjusted,
        adjusted,
        difference,
        changes,
        diagnostics,
    })
}
