//! Index-number mathematics over gridded snapshots.
//!
//! Temperatures play the role of prices and populations (or areas) the role
//! of quantities. Changes are additive, in °C per transition, and levels are
//! weighted means.
//!
//! Every weighted sum takes a [`MaskPolicy`]. Under `Strict` a cell counts
//! only where every grid involved is valid there; under `PaperCompat`
//! missing temperatures become 0 and the denominator keeps every valid
//! weight, which is how the original Matlab pipeline behaves.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::raster::{GridRaster, RasterError, SnapshotSeries};
use crate::sum::{ordered_reduce, CompensatedSum};
use crate::Year;

const CHUNK: usize = 1 << 14;

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error(transparent)]
    Geometry(#[from] RasterError),
    #[error("total weight is zero")]
    ZeroWeight,
    #[error("epochs differ: {left:?} vs {right:?}")]
    EpochMismatch { left: Vec<Year>, right: Vec<Year> },
    #[error("epoch {0} is not in the series")]
    MissingEpoch(Year),
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("{0}")]
    InvalidSeries(String),
    #[error("unknown mask policy {0:?} (expected strict or paper_compat)")]
    UnknownPolicy(String),
}

/// How masked cells enter weighted sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum MaskPolicy {
    /// A cell contributes only if its value and weight are both valid.
    #[default]
    Strict,
    /// Masked values count as 0 and masked weights as 0; denominators sum
    /// every valid weight.
    PaperCompat,
}

impl MaskPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskPolicy::Strict => "strict",
            MaskPolicy::PaperCompat => "paper_compat",
        }
    }
}

impl fmt::Display for MaskPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskPolicy {
    type Err = IndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "strict" => Ok(MaskPolicy::Strict),
            "paper_compat" => Ok(MaskPolicy::PaperCompat),
            other => Err(IndexError::UnknownPolicy(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SeriesKind {
    Level,
    Anomaly,
}

impl SeriesKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeriesKind::Level => "level",
            SeriesKind::Anomaly => "anomaly",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Area,
    NaivePop,
    LaspeyresFixed,
    PaascheFixed,
    LaspeyresChained,
    PaascheChained,
    FisherChained,
    UhiAdjusted,
    MigrationAdjusted,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Area => "area",
            Method::NaivePop => "naive_pop",
            Method::LaspeyresFixed => "laspeyres_fixed",
            Method::PaascheFixed => "paasche_fixed",
            Method::LaspeyresChained => "laspeyres_chained",
            Method::PaascheChained => "paasche_chained",
            Method::FisherChained => "fisher_chained",
            Method::UhiAdjusted => "uhi_adjusted",
            Method::MigrationAdjusted => "migration_adjusted",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One value per epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexSeries {
    epochs: Vec<Year>,
    values: Vec<f64>,
    kind: SeriesKind,
    method: Method,
    base_epoch: Year,
}

impl IndexSeries {
    pub fn new(
        epochs: Vec<Year>,
        values: Vec<f64>,
        kind: SeriesKind,
        method: Method,
        base_epoch: Year,
    ) -> Result<Self, IndexError> {
        if epochs.len() != values.len() {
            return Err(IndexError::InvalidSeries(format!(
                "{} epochs but {} values",
                epochs.len(),
                values.len()
            )));
        }
        let base = epochs
            .iter()
            .position(|&e| e == base_epoch)
            .ok_or(IndexError::MissingEpoch(base_epoch))?;
        if kind == SeriesKind::Anomaly && values[base] != 0.0 {
            return Err(IndexError::InvalidSeries(format!(
                "anomaly series is {} at its base epoch {base_epoch}",
                values[base]
            )));
        }
        Ok(Self {
            epochs,
            values,
            kind,
            method,
            base_epoch,
        })
    }

    pub fn epochs(&self) -> &[Year] {
        &self.epochs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn base_epoch(&self) -> Year {
        self.base_epoch
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_at(&self, epoch: Year) -> Option<f64> {
        self.epochs.iter().position(|&e| e == epoch).map(|i| self.values[i])
    }
}

/// Changes between consecutive epochs; `deltas[i]` belongs to the
/// transition from `epochs[i]` to `epochs[i + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChangeSeries {
    epochs: Vec<Year>,
    deltas: Vec<f64>,
    method: Method,
}

impl ChangeSeries {
    pub fn new(epochs: Vec<Year>, deltas: Vec<f64>, method: Method) -> Result<Self, IndexError> {
        if epochs.is_empty() || deltas.len() + 1 != epochs.len() {
            return Err(IndexError::InvalidSeries(format!(
                "{} deltas for {} epochs",
                deltas.len(),
                epochs.len()
            )));
        }
        Ok(Self { epochs, deltas, method })
    }

    pub fn epochs(&self) -> &[Year] {
        &self.epochs
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// (from, to, delta) per transition.
    pub fn transitions(&self) -> impl Iterator<Item = (Year, Year, f64)> + '_ {
        self.epochs
            .windows(2)
            .zip(&self.deltas)
            .map(|(w, &d)| (w[0], w[1], d))
    }
}

/// A weighted mean with its bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedMean {
    pub value: f64,
    /// Denominator actually used.
    pub weight: f64,
    /// Sum of every valid weight.
    pub total_weight: f64,
    /// Valid weight sitting on cells whose value is missing.
    pub excluded_weight: f64,
}

impl WeightedMean {
    /// Share of valid weight on cells without a value.
    pub fn excluded_fraction(&self) -> f64 {
        if self.total_weight > 0.0 {
            self.excluded_weight / self.total_weight
        } else {
            0.0
        }
    }
}

/// Compensated sums of `N` quantities over `n` cells, chunked in a fixed
/// order so the result does not depend on the thread count.
pub(crate) fn reduce_cells<const N: usize, F>(n: usize, cell: F) -> [f64; N]
where
    F: Fn(usize, &mut [CompensatedSum; N]) + Sync + Send,
{
    let acc = ordered_reduce(n.div_ceil(CHUNK), |k| {
        let mut a = [CompensatedSum::new(); N];
        for i in k * CHUNK..((k + 1) * CHUNK).min(n) {
            cell(i, &mut a);
        }
        a
    });
    acc.map(|s| s.total())
}

/// Σ v·w / Σ w under `policy`, with weight bookkeeping.
pub fn weighted_mean_detail(
    value: &GridRaster,
    weight: &GridRaster,
    policy: MaskPolicy,
) -> Result<WeightedMean, IndexError> {
    value.geometry().ensure_compatible(weight.geometry())?;
    let (v, vm) = (value.values(), value.mask());
    let (w, wm) = (weight.values(), weight.mask());
    let paper = policy == MaskPolicy::PaperCompat;
    let [num, den, total, excluded] = reduce_cells(v.len(), |i, a: &mut [CompensatedSum; 4]| {
        if !wm[i] {
            return;
        }
        a[2].add(w[i]);
        if vm[i] {
            a[0].add(v[i] * w[i]);
            a[1].add(w[i]);
        } else {
            a[3].add(w[i]);
            if paper {
                a[1].add(w[i]);
            }
        }
    });
    if !(den > 0.0) {
        return Err(IndexError::ZeroWeight);
    }
    Ok(WeightedMean {
        value: num / den,
        weight: den,
        total_weight: total,
        excluded_weight: excluded,
    })
}

/// Σ v·w / Σ w under `policy`.
pub fn weighted_mean(value: &GridRaster, weight: &GridRaster, policy: MaskPolicy) -> Result<f64, IndexError> {
    weighted_mean_detail(value, weight, policy).map(|m| m.value)
}

/// Σ (T1 − T0)·w / Σ w. Under `Strict` only cells valid in all three grids
/// count; under `PaperCompat` missing temperatures are 0.
pub fn weighted_change_detail(
    t0: &GridRaster,
    t1: &GridRaster,
    weight: &GridRaster,
    policy: MaskPolicy,
) -> Result<WeightedMean, IndexError> {
    t0.geometry().ensure_compatible(t1.geometry())?;
    t0.geometry().ensure_compatible(weight.geometry())?;
    let (a, am, b, bm) = (t0.values(), t0.mask(), t1.values(), t1.mask());
    let (w, wm) = (weight.values(), weight.mask());
    let paper = policy == MaskPolicy::PaperCompat;
    let [num, den, total, excluded] = reduce_cells(a.len(), |i, s: &mut [CompensatedSum; 4]| {
        if !wm[i] {
            return;
        }
        s[2].add(w[i]);
        if am[i] && bm[i] {
            s[0].add((b[i] - a[i]) * w[i]);
            s[1].add(w[i]);
        } else {
            s[3].add(w[i]);
            if paper {
                let x0 = if am[i] { a[i] } else { 0.0 };
                let x1 = if bm[i] { b[i] } else { 0.0 };
                s[0].add((x1 - x0) * w[i]);
                s[1].add(w[i]);
            }
        }
    });
    if !(den > 0.0) {
        return Err(IndexError::ZeroWeight);
    }
    Ok(WeightedMean {
        value: num / den,
        weight: den,
        total_weight: total,
        excluded_weight: excluded,
    })
}

/// Additive Laspeyres change: temperatures at t and t+1 weighted by
/// population at t.
pub fn laspeyres_change(
    t0: &GridRaster,
    t1: &GridRaster,
    pop0: &GridRaster,
    policy: MaskPolicy,
) -> Result<f64, IndexError> {
    weighted_change_detail(t0, t1, pop0, policy).map(|m| m.value)
}

/// Additive Paasche change: weights are population at t+1.
pub fn paasche_change(
    t0: &GridRaster,
    t1: &GridRaster,
    pop1: &GridRaster,
    policy: MaskPolicy,
) -> Result<f64, IndexError> {
    weighted_change_detail(t0, t1, pop1, policy).map(|m| m.value)
}

/// Arithmetic mean of the Laspeyres and Paasche changes.
pub fn fisher_change(laspeyres: f64, paasche: f64) -> Result<f64, IndexError> {
    for v in [laspeyres, paasche] {
        if !v.is_finite() {
            return Err(IndexError::NonFinite(v));
        }
    }
    Ok(0.5 * (laspeyres + paasche))
}

fn ensure_same_epochs(a: &SnapshotSeries, b: &SnapshotSeries) -> Result<(), IndexError> {
    if a.epochs() != b.epochs() {
        return Err(IndexError::EpochMismatch {
            left: a.epochs().to_vec(),
            right: b.epochs().to_vec(),
        });
    }
    a.geometry().ensure_compatible(b.geometry())?;
    Ok(())
}

fn level_series(epochs: &[Year], values: Vec<f64>, method: Method) -> IndexSeries {
    IndexSeries {
        epochs: epochs.to_vec(),
        values,
        kind: SeriesKind::Level,
        method,
        base_epoch: epochs[0],
    }
}

/// Area-weighted mean temperature per epoch.
pub fn area_series(temps: &SnapshotSeries, area: &GridRaster, policy: MaskPolicy) -> Result<IndexSeries, IndexError> {
    let values = temps
        .grids()
        .iter()
        .map(|t| weighted_mean(t, area, policy))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(level_series(temps.epochs(), values, Method::Area))
}

/// Per-epoch mean weighted by that epoch's population.
pub fn naive_pop_series(
    temps: &SnapshotSeries,
    pops: &SnapshotSeries,
    policy: MaskPolicy,
) -> Result<IndexSeries, IndexError> {
    ensure_same_epochs(temps, pops)?;
    let values = temps
        .grids()
        .iter()
        .zip(pops.grids())
        .map(|(t, p)| weighted_mean(t, p, policy))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(level_series(temps.epochs(), values, Method::NaivePop))
}

/// Which epoch's population a fixed-base series freezes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixedBase {
    /// First epoch (Laspeyres).
    First,
    /// Last epoch (Paasche).
    Last,
}

/// Every epoch's temperature weighted by one frozen population grid.
pub fn fixed_base_series(
    temps: &SnapshotSeries,
    pops: &SnapshotSeries,
    which: FixedBase,
    policy: MaskPolicy,
) -> Result<IndexSeries, IndexError> {
    ensure_same_epochs(temps, pops)?;
    let (weight, method) = match which {
        FixedBase::First => (&pops.grids()[0], Method::LaspeyresFixed),
        FixedBase::Last => (&pops.grids()[pops.len() - 1], Method::PaascheFixed),
    };
    let values = temps
        .grids()
        .iter()
        .map(|t| weighted_mean(t, weight, policy))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(level_series(temps.epochs(), values, method))
}

/// Laspeyres, Paasche and Fisher changes for every transition.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainedChanges {
    pub laspeyres: ChangeSeries,
    pub paasche: ChangeSeries,
    pub fisher: ChangeSeries,
}

pub fn chained_changes(
    temps: &SnapshotSeries,
    pops: &SnapshotSeries,
    policy: MaskPolicy,
) -> Result<ChainedChanges, IndexError> {
    ensure_same_epochs(temps, pops)?;
    let (t, p) = (temps.grids(), pops.grids());
    let mut l = Vec::with_capacity(t.len().saturating_sub(1));
    let mut pa = Vec::with_capacity(l.capacity());
    let mut f = Vec::with_capacity(l.capacity());
    for i in 1..t.len() {
        let cl = laspeyres_change(&t[i - 1], &t[i], &p[i - 1], policy)?;
        let cp = paasche_change(&t[i - 1], &t[i], &p[i], policy)?;
        l.push(cl);
        pa.push(cp);
        f.push(fisher_change(cl, cp)?);
    }
    let epochs = temps.epochs().to_vec();
    Ok(ChainedChanges {
        laspeyres: ChangeSeries::new(epochs.clone(), l, Method::LaspeyresChained)?,
        paasche: ChangeSeries::new(epochs.clone(), pa, Method::PaascheChained)?,
        fisher: ChangeSeries::new(epochs, f, Method::FisherChained)?,
    })
}

/// Accumulates changes from `base_value` at the first epoch. A base of
/// exactly 0 yields an anomaly series, anything else a level series.
pub fn chain(changes: &ChangeSeries, base_value: f64) -> IndexSeries {
    let mut values = Vec::with_capacity(changes.epochs.len());
    let mut acc = CompensatedSum::new();
    acc.add(base_value);
    values.push(base_value);
    for &d in &changes.deltas {
        acc.add(d);
        values.push(acc.total());
    }
    IndexSeries {
        epochs: changes.epochs.clone(),
        values,
        kind: if base_value == 0.0 { SeriesKind::Anomaly } else { SeriesKind::Level },
        method: changes.method,
        base_epoch: changes.epochs[0],
    }
}

/// First differences of a series.
pub fn diff(series: &IndexSeries) -> Result<ChangeSeries, IndexError> {
    let deltas = series.values.windows(2).map(|w| w[1] - w[0]).collect();
    ChangeSeries::new(series.epochs.clone(), deltas, series.method)
}

/// Subtracts the value at `base_epoch` from every value.
pub fn rebase_anomaly(series: &IndexSeries, base_epoch: Year) -> Result<IndexSeries, IndexError> {
    let base = series.value_at(base_epoch).ok_or(IndexError::MissingEpoch(base_epoch))?;
    Ok(IndexSeries {
        epochs: series.epochs.clone(),
        values: series.values.iter().map(|v| v - base).collect(),
        kind: SeriesKind::Anomaly,
        method: series.method,
        base_epoch,
    })
}

/// Split of the naive population-weighted change into a pure temperature
/// term, a composition term and the second-order remainder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposition {
    /// T^P(t+1) − T^P(t).
    pub total: f64,
    /// Σ ΔT·P(t)/ΣP(t).
    pub pure_temp: f64,
    /// Σ T(t)·Δ(P/ΣP).
    pub composition: f64,
    /// total − pure_temp − composition, equal to Σ ΔT·Δ(P/ΣP).
    pub residual: f64,
}

/// Decomposes one transition. Under `Strict` all terms use the cells where
/// both temperatures and both populations are valid, so the parts add up to
/// the total on a common footing.
pub fn conflation_decomposition(
    t0: &GridRaster,
    t1: &GridRaster,
    p0: &GridRaster,
    p1: &GridRaster,
    policy: MaskPolicy,
) -> Result<Decomposition, IndexError> {
    let g = t0.geometry();
    for other in [t1, p0, p1] {
        g.ensure_compatible(other.geometry())?;
    }
    let paper = policy == MaskPolicy::PaperCompat;
    let (a, am, b, bm) = (t0.values(), t0.mask(), t1.values(), t1.mask());
    let (w0, w0m, w1, w1m) = (p0.values(), p0.mask(), p1.values(), p1.mask());
    let [s0, s1, a0, b1, d0, e1] = reduce_cells(a.len(), |i, s: &mut [CompensatedSum; 6]| {
        let (x0, x1, q0, q1) = if paper {
            (
                if am[i] { a[i] } else { 0.0 },
                if bm[i] { b[i] } else { 0.0 },
                if w0m[i] { w0[i] } else { 0.0 },
                if w1m[i] { w1[i] } else { 0.0 },
            )
        } else if am[i] && bm[i] && w0m[i] && w1m[i] {
            (a[i], b[i], w0[i], w1[i])
        } else {
            return;
        };
        s[0].add(q0);
        s[1].add(q1);
        s[2].add(x0 * q0);
        s[3].add(x1 * q1);
        s[4].add((x1 - x0) * q0);
        s[5].add(x0 * q1);
    });
    if !(s0 > 0.0 && s1 > 0.0) {
        return Err(IndexError::ZeroWeight);
    }
    let total = b1 / s1 - a0 / s0;
    let pure_temp = d0 / s0;
    let composition = e1 / s1 - a0 / s0;
    Ok(Decomposition {
        total,
        pure_temp,
        composition,
        residual: total - pure_temp - composition,
    })
}

/// Every series for one run, as anomalies from a common base epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexSuite {
    pub policy: MaskPolicy,
    pub base_epoch: Year,
    pub area: IndexSeries,
    pub naive_pop: IndexSeries,
    pub laspeyres_fixed: IndexSeries,
    pub paasche_fixed: IndexSeries,
    pub laspeyres_chained: IndexSeries,
    pub paasche_chained: IndexSeries,
    pub fisher_chained: IndexSeries,
    pub area_changes: ChangeSeries,
    pub naive_changes: ChangeSeries,
    pub chained: ChainedChanges,
    /// One per transition.
    pub decomposition: Vec<Decomposition>,
    /// Share of population on cells without temperature, per epoch.
    pub excluded_pop_fraction: Vec<f64>,
}

impl IndexSuite {
    pub fn epochs(&self) -> &[Year] {
        self.area.epochs()
    }

    /// The seven anomaly series in reporting order.
    pub fn series(&self) -> [&IndexSeries; 7] {
        [
            &self.area,
            &self.naive_pop,
            &self.laspeyres_fixed,
            &self.paasche_fixed,
            &self.laspeyres_chained,
            &self.paasche_chained,
            &self.fisher_chained,
        ]
    }
}

/// Computes every index series. Chained series start from the naive level
/// of the first epoch before rebasing, as the fixed-base ones do.
pub fn compute_suite(
    temps: &SnapshotSeries,
    pops: &SnapshotSeries,
    area: &GridRaster,
    policy: MaskPolicy,
    base_epoch: Year,
) -> Result<IndexSuite, IndexError> {
    ensure_same_epochs(temps, pops)?;
    if temps.position(base_epoch).is_none() {
        return Err(IndexError::MissingEpoch(base_epoch));
    }
    let area_levels = area_series(temps, area, policy)?;
    let naive_details = temps
        .grids()
        .iter()
        .zip(pops.grids())
        .map(|(t, p)| weighted_mean_detail(t, p, policy))
        .collect::<Result<Vec<_>, _>>()?;
    let naive_levels = level_series(
        temps.epochs(),
        naive_details.iter().map(|m| m.value).collect(),
        Method::NaivePop,
    );
    let lf = fixed_base_series(temps, pops, FixedBase::First, policy)?;
    let pf = fixed_base_series(temps, pops, FixedBase::Last, policy)?;
    let chained = chained_changes(temps, pops, policy)?;
    let anchor = naive_levels.values[0];
    let decomposition = (1..temps.len())
        .map(|i| {
            conflation_decomposition(
                &temps.grids()[i - 1],
                &temps.grids()[i],
                &pops.grids()[i - 1],
                &pops.grids()[i],
                policy,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rebase = |s: &IndexSeries| rebase_anomaly(s, base_epoch);
    Ok(IndexSuite {
        policy,
        base_epoch,
        area_changes: diff(&area_levels)?,
        naive_changes: diff(&naive_levels)?,
        area: rebase(&area_levels)?,
        naive_pop: rebase(&naive_levels)?,
        laspeyres_fixed: rebase(&lf)?,
        paasche_fixed: rebase(&pf)?,
        laspeyres_chained: rebase(&chain(&chained.laspeyres, anchor))?,
        paasche_chained: rebase(&chain(&chained.paasche, anchor))?,
        fisher_chained: rebase(&chain(&chained.fisher, anchor))?,
        chained,
        decomposition,
        excluded_pop_fraction: naive_details.iter().map(WeightedMean::excluded_fraction).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridGeometry, Orientation};

    fn row(values: &[Option<f64>]) -> GridRaster {
        let g = GridGeometry::global(1, values.len(), Orientation::SouthToNorth).unwrap();
        GridRaster::from_options(g, values).unwrap()
    }

    fn full(values: &[f64]) -> GridRaster {
        row(&values.iter().map(|&v| Some(v)).collect::<Vec<_>>())
    }

    fn series(grids: &[&[f64]]) -> SnapshotSeries {
        let epochs = (0..grids.len() as Year).map(|i| 2000 + 10 * i).collect();
        SnapshotSeries::new(epochs, grids.iter().map(|g| full(g)).collect()).unwrap()
    }

    #[test]
    fn weighted_mean_examples() {
        let s = MaskPolicy::Strict;
        assert_eq!(weighted_mean(&full(&[10.0, 20.0]), &full(&[1.0, 1.0]), s), Ok(15.0));
        assert_eq!(weighted_mean(&full(&[10.0, 20.0]), &full(&[3.0, 1.0]), s), Ok(12.5));
        let v = row(&[None, Some(20.0)]);
        let w = full(&[3.0, 1.0]);
        assert_eq!(weighted_mean(&v, &w, s), Ok(20.0));
        assert_eq!(weighted_mean(&v, &w, MaskPolicy::PaperCompat), Ok(5.0));
        let d = weighted_mean_detail(&v, &w, s).unwrap();
        assert_eq!((d.weight, d.total_weight, d.excluded_weight), (1.0, 4.0, 3.0));
        assert_eq!(d.excluded_fraction(), 0.75);
    }

    #[test]
    fn weighted_mean_errors() {
        let s = MaskPolicy::Strict;
        assert_eq!(
            weighted_mean(&row(&[None, None]), &full(&[1.0, 1.0]), s),
            Err(IndexError::ZeroWeight)
        );
        assert!(matches!(
            weighted_mean(&full(&[1.0, 2.0]), &full(&[1.0, 2.0, 3.0]), s),
            Err(IndexError::Geometry(_))
        ));
        let flipped = crate::raster::reorient(&full(&[1.0, 2.0]), Orientation::NorthToSouth);
        assert!(matches!(
            weighted_mean(&full(&[1.0, 2.0]), &flipped, s),
            Err(IndexError::Geometry(RasterError::OrientationMismatch { .. }))
        ));
    }

    #[test]
    fn two_cell_fixture() {
        let s = MaskPolicy::Strict;
        let (t0, t1) = (full(&[10.0, 20.0]), full(&[11.0, 23.0]));
        let (p0, p1) = (full(&[3.0, 1.0]), full(&[1.0, 3.0]));
        let l = laspeyres_change(&t0, &t1, &p0, s).unwrap();
        let p = paasche_change(&t0, &t1, &p1, s).unwrap();
        assert_eq!(l, 1.5);
        assert_eq!(p, 2.5);
        assert_eq!(fisher_change(l, p), Ok(2.0));
        assert_eq!(laspeyres_change(&t0, &t0, &p0, s), Ok(0.0));

        let temps = series(&[&[10.0, 20.0], &[11.0, 23.0]]);
        let pops = series(&[&[3.0, 1.0], &[1.0, 3.0]]);
        assert_eq!(naive_pop_series(&temps, &pops, s).unwrap().values(), &[12.5, 20.0]);

        let d = conflation_decomposition(&t0, &t1, &p0, &p1, s).unwrap();
        assert_eq!(d.total, 7.5);
        assert_eq!(d.pure_temp, 1.5);
        assert_eq!(d.composition, 5.0);
        assert_eq!(d.residual, 1.0);
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_change(0.7, 0.7), Ok(0.7));
        assert_eq!(fisher_change(-1.25, 1.25), Ok(0.0));
        assert!(matches!(fisher_change(f64::NAN, 1.0), Err(IndexError::NonFinite(_))));
        assert_eq!(fisher_change(1.0, f64::INFINITY), Err(IndexError::NonFinite(f64::INFINITY)));
    }

    #[test]
    fn chain_and_rebase() {
        let c = ChangeSeries::new(vec![1, 2, 3, 4], vec![1.0, -0.5, 2.0], Method::FisherChained).unwrap();
        let s = chain(&c, 0.0);
        assert_eq!(s.values(), &[0.0, 1.0, 0.5, 2.5]);
        assert_eq!(s.kind(), SeriesKind::Anomaly);
        let s = chain(&ChangeSeries::new(vec![1, 2], vec![0.0], Method::Area).unwrap(), 14.0);
        assert_eq!((s.values(), s.kind()), (&[14.0, 14.0][..], SeriesKind::Level));

        let levels = IndexSeries::new(vec![1910, 1920], vec![288.0, 289.0], SeriesKind::Level, Method::Area, 1910).unwrap();
        let a = rebase_anomaly(&levels, 1910).unwrap();
        assert_eq!(a.values(), &[0.0, 1.0]);
        assert_eq!(rebase_anomaly(&a, 1910).unwrap(), a);
        assert_eq!(rebase_anomaly(&levels, 1930), Err(IndexError::MissingEpoch(1930)));
        assert_eq!(diff(&levels).unwrap().deltas(), &[1.0]);
    }

    #[test]
    fn series_validation() {
        assert!(IndexSeries::new(vec![1, 2], vec![1.0], SeriesKind::Level, Method::Area, 1).is_err());
        assert!(IndexSeries::new(vec![1, 2], vec![1.0, 2.0], SeriesKind::Anomaly, Method::Area, 1).is_err());
        assert!(IndexSeries::new(vec![1, 2], vec![0.0, 2.0], SeriesKind::Anomaly, Method::Area, 3).is_err());
        assert!(ChangeSeries::new(vec![1, 2], vec![], Method::Area).is_err());
    }

    #[test]
    fn fixed_base_three_epochs() {
        let temps = series(&[&[10.0, 20.0, 30.0], &[12.0, 19.0, 33.0], &[15.0, 21.0, 30.0]]);
        let pops = series(&[&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0], &[5.0, 1.0, 0.0]]);
        let lf = fixed_base_series(&temps, &pops, FixedBase::First, MaskPolicy::Strict).unwrap();
        let pf = fixed_base_series(&temps, &pops, FixedBase::Last, MaskPolicy::Strict).unwrap();
        // Oracle: frozen weights [1,2,3] and [5,1,0].
        let expect = |w: [f64; 3], t: [f64; 3]| (w[0] * t[0] + w[1] * t[1] + w[2] * t[2]) / (w[0] + w[1] + w[2]);
        let t = [[10.0, 20.0, 30.0], [12.0, 19.0, 33.0], [15.0, 21.0, 30.0]];
        for e in 0..3 {
            assert!((lf.values()[e] - expect([1.0, 2.0, 3.0], t[e])).abs() < 1e-12);
            assert!((pf.values()[e] - expect([5.0, 1.0, 0.0], t[e])).abs() < 1e-12);
        }
        assert_eq!(lf.method(), Method::LaspeyresFixed);
    }

    #[test]
    fn mismatched_epochs_are_rejected() {
        let temps = series(&[&[1.0], &[2.0]]);
        let pops = SnapshotSeries::new(vec![2000], vec![full(&[1.0])]).unwrap();
        assert!(matches!(
            naive_pop_series(&temps, &pops, MaskPolicy::Strict),
            Err(IndexError::EpochMismatch { .. })
        ));
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("strict".parse::<MaskPolicy>(), Ok(MaskPolicy::Strict));
        assert_eq!("paper_compat".parse::<MaskPolicy>(), Ok(MaskPolicy::PaperCompat));
        assert!("lenient".parse::<MaskPolicy>().is_err());
        assert_eq!(MaskPolicy::default().to_string(), "strict");
    }

    #[test]
    fn suite_on_pure_shift() {
        let temps = series(&[&[10.0, 20.0], &[10.0, 20.0], &[10.0, 20.0]]);
        let pops = series(&[&[3.0, 1.0], &[2.0, 2.0], &[1.0, 3.0]]);
        let area = full(&[1.0, 1.0]);
        let s = compute_suite(&temps, &pops, &area, MaskPolicy::Strict, 2000).unwrap();
        assert_eq!(s.fisher_chained.values(), &[0.0, 0.0, 0.0]);
        assert_eq!(s.naive_pop.values(), &[0.0, 2.5, 5.0]);
        assert_eq!(s.excluded_pop_fraction, vec![0.0; 3]);
        assert!(s.series().iter().all(|x| x.kind() == SeriesKind::Anomaly && x.base_epoch() == 2000));
    }
}
