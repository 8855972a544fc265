//! International migration and the temperature change it brings.
//!
//! Stock tables give how many people born in `o` live in `d` at each epoch.
//! Between two epochs the positive change in a stock is taken as the flow
//! of migrants, who left `o`'s climate at the first epoch and live in `d`'s
//! at the second.

use log::warn;
use thiserror::Error;

use crate::ingest::MigrationStockTable;
use crate::sum::CompensatedSum;
use crate::Year;

#[derive(Debug, Error, PartialEq)]
pub enum MigrationError {
    #[error("no stock data for epoch {0}")]
    MissingEpoch(Year),
    #[error("countries in the stock tables differ between {from} and {to}: {differing:?}")]
    CountrySetMismatch { from: Year, to: Year, differing: Vec<String> },
    #[error("epochs must increase ({from} -> {to})")]
    EpochOrder { from: Year, to: Year },
    #[error("no temperature for {country} at {epoch}")]
    MissingTemperature { country: String, epoch: Year },
    #[error("total migrant flow is zero")]
    ZeroFlow,
    #[error("world population must be positive, got {0}")]
    WorldPopulation(f64),
    #[error("histogram bin width must be positive, got {0}")]
    BinWidth(f64),
}

/// Migrants between two epochs, origin x destination, row-major by origin.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMatrix {
    pub epoch_from: Year,
    pub epoch_to: Year,
    pub countries: Vec<String>,
    pub flows: Vec<f64>,
    /// Country temperatures at `epoch_from`, in country order.
    pub temps_from: Vec<Option<f64>>,
    /// Country temperatures at `epoch_to`.
    pub temps_to: Vec<Option<f64>>,
    /// Sum of stock decreases, which do not count as flows.
    pub clamped_total: f64,
}

impl FlowMatrix {
    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn flow(&self, origin: usize, destination: usize) -> f64 {
        self.flows[origin * self.countries.len() + destination]
    }

    pub fn total(&self) -> f64 {
        self.flows.iter().copied().collect::<CompensatedSum>().total()
    }
}

/// Flow = max(0, stock(to) − stock(from)) per pair.
pub fn stocks_to_flows(table: &MigrationStockTable, from: Year, to: Year) -> Result<FlowMatrix, MigrationError> {
    if to <= from {
        return Err(MigrationError::EpochOrder { from, to });
    }
    let s0 = table.stock_matrix(from).ok_or(MigrationError::MissingEpoch(from))?;
    let s1 = table.stock_matrix(to).ok_or(MigrationError::MissingEpoch(to))?;
    let p0 = table.countries_present(from).expect("epoch has stocks");
    let p1 = table.countries_present(to).expect("epoch has stocks");
    if p0 != p1 {
        let differing = table
            .countries()
            .iter()
            .zip(p0.iter().zip(&p1))
            .filter(|(_, (a, b))| a != b)
            .map(|(c, _)| c.clone())
            .collect();
        return Err(MigrationError::CountrySetMismatch { from, to, differing });
    }
    let mut clamped = CompensatedSum::new();
    let flows = s0
        .iter()
        .zip(s1)
        .map(|(&a, &b)| {
            if b < a {
                clamped.add(a - b);
            }
            (b - a).max(0.0)
        })
        .collect();
    let temps = |e: Year| {
        table
            .temperatures_at(e)
            .map(<[_]>::to_vec)
            .unwrap_or_else(|| vec![None; table.n_countries()])
    };
    Ok(FlowMatrix {
        epoch_from: from,
        epoch_to: to,
        countries: table.countries().to_vec(),
        flows,
        temps_from: temps(from),
        temps_to: temps(to),
        clamped_total: clamped.total(),
    })
}

/// A group of migrants sharing one experienced temperature change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Experience {
    /// Destination minus origin temperature, °C.
    pub delta_t: f64,
    pub migrants: f64,
}

/// One entry per positive flow: T(d, to) − T(o, from).
pub fn flow_experiences(flows: &FlowMatrix) -> Result<Vec<Experience>, MigrationError> {
    let n = flows.n_countries();
    let mut out = Vec::new();
    for o in 0..n {
        for d in 0..n {
            let m = flows.flows[o * n + d];
            if m <= 0.0 {
                continue;
            }
            let missing = |c: usize, e: Year| MigrationError::MissingTemperature {
                country: flows.countries[c].clone(),
                epoch: e,
            };
            let to = flows.temps_to[d].ok_or_else(|| missing(d, flows.epoch_to))?;
            let from = flows.temps_from[o].ok_or_else(|| missing(o, flows.epoch_from))?;
            out.push(Experience {
                delta_t: to - from,
                migrants: m,
            });
        }
    }
    Ok(out)
}

/// One entry per positive stock at `epoch`, with both temperatures taken at
/// that epoch.
pub fn stock_experiences(table: &MigrationStockTable, epoch: Year) -> Result<Vec<Experience>, MigrationError> {
    let s = table.stock_matrix(epoch).ok_or(MigrationError::MissingEpoch(epoch))?;
    let n = table.n_countries();
    let mut out = Vec::new();
    for o in 0..n {
        for d in 0..n {
            let m = s[o * n + d];
            if m <= 0.0 {
                continue;
            }
            let temp = |c: usize| {
                table.temperature(c, epoch).ok_or_else(|| MigrationError::MissingTemperature {
                    country: table.countries()[c].clone(),
                    epoch,
                })
            };
            out.push(Experience {
                delta_t: temp(d)? - temp(o)?,
                migrants: m,
            });
        }
    }
    Ok(out)
}

/// Migrant-weighted mean of the experienced changes.
pub fn mean_experience(experiences: &[Experience]) -> Result<f64, MigrationError> {
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for e in experiences {
        num.add(e.delta_t * e.migrants);
        den.add(e.migrants);
    }
    if !(den.total() > 0.0) {
        return Err(MigrationError::ZeroFlow);
    }
    Ok(num.total() / den.total())
}

/// Σ (T(d, to) − T(o, from))·M / Σ M.
pub fn migration_delta(flows: &FlowMatrix) -> Result<f64, MigrationError> {
    mean_experience(&flow_experiences(flows)?)
}

/// `delta` scaled by the share of the world that migrated.
pub fn migration_adjustment(delta: f64, total_migrants: f64, world_pop: f64) -> Result<f64, MigrationError> {
    if !(world_pop > 0.0) || !world_pop.is_finite() {
        return Err(MigrationError::WorldPopulation(world_pop));
    }
    Ok(delta * (total_migrants / world_pop))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramBin {
    /// Inclusive lower edge, °C.
    pub lower: f64,
    /// Exclusive upper edge, °C.
    pub upper: f64,
    pub migrants: f64,
    pub share: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    /// Contiguous bins from the lowest to the highest occupied one.
    pub bins: Vec<HistogramBin>,
    pub total_migrants: f64,
    /// Share with |ΔT| ≤ 2 °C.
    pub share_within_2: f64,
    /// Share with |ΔT| ≥ 10 °C.
    pub share_beyond_10: f64,
    /// Share with ΔT < 0.
    pub share_cooling: f64,
}

/// Bins migrants by experienced change; bin `k` covers `[k·w, (k+1)·w)`.
pub fn experienced_histogram(experiences: &[Experience], bin_width: f64) -> Result<Histogram, MigrationError> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(MigrationError::BinWidth(bin_width));
    }
    let occupied: Vec<(i64, &Experience)> = experiences
        .iter()
        .filter(|e| e.migrants > 0.0)
        .map(|e| ((e.delta_t / bin_width).floor() as i64, e))
        .collect();
    let mut total = CompensatedSum::new();
    let (mut within, mut beyond, mut cooling) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    for (_, e) in &occupied {
        total.add(e.migrants);
        if e.delta_t.abs() <= 2.0 {
            within.add(e.migrants);
        }
        if e.delta_t.abs() >= 10.0 {
            beyond.add(e.migrants);
        }
        if e.delta_t < 0.0 {
            cooling.add(e.migrants);
        }
    }
    let total = total.total();
    let share = |x: f64| if total > 0.0 { x / total } else { 0.0 };
    let bins = match (occupied.iter().map(|b| b.0).min(), occupied.iter().map(|b| b.0).max()) {
        (Some(lo), Some(hi)) => {
            let mut counts = vec![CompensatedSum::new(); (hi - lo + 1) as usize];
            for (k, e) in &occupied {
                counts[(k - lo) as usize].add(e.migrants);
            }
            counts
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let k = lo + i as i64;
                    HistogramBin {
                        lower: k as f64 * bin_width,
                        upper: (k + 1) as f64 * bin_width,
                        migrants: c.total(),
                        share: share(c.total()),
                    }
                })
                .collect()
        }
        _ => Vec::new(),
    };
    Ok(Histogram {
        bin_width,
        bins,
        total_migrants: total,
        share_within_2: share(within.total()),
        share_beyond_10: share(beyond.total()),
        share_cooling: share(cooling.total()),
    })
}

/// Which migrant population a summary describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    /// New migrants between two epochs; origin temperature at the first,
    /// destination temperature at the second.
    Flow,
    /// Everyone living abroad at one epoch, temperatures at that epoch.
    Stock,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Flow => "flow",
            View::Stock => "stock",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MigrationSummary {
    pub view: View,
    pub epoch_from: Year,
    pub epoch_to: Year,
    pub total_migrants: f64,
    /// Stock decreases ignored when forming flows (0 for stocks).
    pub clamped_total: f64,
    /// `None` when there are no migrants.
    pub mean_delta: Option<f64>,
    /// World population at `epoch_to`, if the population table has it.
    pub world_pop: Option<f64>,
    pub migrant_share: Option<f64>,
    /// mean_delta · migrant_share for flows; 0 without migrants; `None` for
    /// stocks or without world population.
    pub adjustment: Option<f64>,
    pub histogram: Histogram,
}

fn share_of_world(table: &MigrationStockTable, epoch: Year, migrants: f64) -> (Option<f64>, Option<f64>) {
    match table.world_population(epoch) {
        Some(w) if w > 0.0 => (Some(w), Some(migrants / w)),
        Some(w) => (Some(w), None),
        None => (None, None),
    }
}

/// Flow view of the transition `from` → `to`.
pub fn summarize_flows(
    table: &MigrationStockTable,
    from: Year,
    to: Year,
    bin_width: f64,
) -> Result<MigrationSummary, MigrationError> {
    let flows = stocks_to_flows(table, from, to)?;
    let experiences = flow_experiences(&flows)?;
    let histogram = experienced_histogram(&experiences, bin_width)?;
    let total = histogram.total_migrants;
    let mean_delta = (total > 0.0).then(|| mean_experience(&experiences)).transpose()?;
    let (world_pop, migrant_share) = share_of_world(table, to, total);
    let adjustment = match (mean_delta, world_pop) {
        (None, _) => Some(0.0),
        (Some(d), Some(w)) if w > 0.0 => Some(migration_adjustment(d, total, w)?),
        _ => {
            warn!("no world population for {to}; migration adjustment for {from}-{to} left empty");
            None
        }
    };
    Ok(MigrationSummary {
        view: View::Flow,
        epoch_from: from,
        epoch_to: to,
        total_migrants: total,
        clamped_total: flows.clamped_total,
        mean_delta,
        world_pop,
        migrant_share,
        adjustment,
        histogram,
    })
}

/// Stock view at `epoch`.
pub fn summarize_stocks(
    table: &MigrationStockTable,
    epoch: Year,
    bin_width: f64,
) -> Result<MigrationSummary, MigrationError> {
    let experiences = stock_experiences(table, epoch)?;
    let histogram = experienced_histogram(&experiences, bin_width)?;
    let total = histogram.total_migrants;
    let mean_delta = (total > 0.0).then(|| mean_experience(&experiences)).transpose()?;
    let (world_pop, migrant_share) = share_of_world(table, epoch, total);
    Ok(MigrationSummary {
        view: View::Stock,
        epoch_from: epoch,
        epoch_to: epoch,
        total_migrants: total,
        clamped_total: 0.0,
        mean_delta,
        world_pop,
        migrant_share,
        adjustment: None,
        histogram,
    })
}
