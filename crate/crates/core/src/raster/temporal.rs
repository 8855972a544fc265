use std::collections::BTreeMap;

use super::{GridGeometry, GridRaster, MonthlyArchive, RasterError, SnapshotSeries};
use crate::sum::CompensatedSum;
use crate::Year;

/// Streaming monthly-to-annual averaging.
///
/// Feed the twelve monthly grids of a year in any order; once the twelfth
/// arrives the annual grid is emitted. A cell is masked in the annual grid
/// iff any of its monthly values is masked.
#[derive(Debug)]
pub struct AnnualAccumulator {
    geometry: GridGeometry,
    year: Option<Year>,
    months_seen: u32,
    sums: Vec<CompensatedSum>,
    valid: Vec<bool>,
}

impl AnnualAccumulator {
    pub fn new(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            year: None,
            months_seen: 0,
            sums: vec![CompensatedSum::new(); geometry.len()],
            valid: vec![true; geometry.len()],
        }
    }

    /// Adds one month. Returns the finished annual grid after the twelfth
    /// month of a year. Months of different years must not interleave.
    pub fn push(&mut self, year: Year, grid: &GridRaster) -> Result<Option<GridRaster>, RasterError> {
        self.geometry.ensure_compatible(grid.geometry())?;
        match self.year {
            Some(y) if y != year => {
                return Err(RasterError::IncompleteYear {
                    year: y,
                    months: self.months_seen,
                })
            }
            _ => self.year = Some(year),
        }
        for ((s, ok), (v, m)) in self
            .sums
            .iter_mut()
            .zip(self.valid.iter_mut())
            .zip(grid.values().iter().zip(grid.mask()))
        {
            if *m {
                s.add(*v);
            } else {
                *ok = false;
            }
        }
        self.months_seen += 1;
        if self.months_seen < 12 {
            return Ok(None);
        }
        let values = self
            .sums
            .iter()
            .zip(&self.valid)
            .map(|(s, ok)| if *ok { s.total() / 12.0 } else { 0.0 })
            .collect();
        let annual = GridRaster::new(self.geometry, values, self.valid.clone())?;
        self.year = None;
        self.months_seen = 0;
        self.sums.iter_mut().for_each(|s| *s = CompensatedSum::new());
        self.valid.iter_mut().for_each(|v| *v = true);
        Ok(Some(annual))
    }
}

/// Averages each year's twelve months into one grid per year.
pub fn monthly_to_annual(archive: &MonthlyArchive) -> Result<SnapshotSeries, RasterError> {
    let first = archive.grids().first().ok_or(RasterError::EmptySeries)?;
    let mut acc = AnnualAccumulator::new(*first.geometry());
    let mut epochs = Vec::with_capacity(archive.n_years());
    let mut grids = Vec::with_capacity(archive.n_years());
    for (i, g) in archive.grids().iter().enumerate() {
        let year = archive.start_year() + (i / 12) as Year;
        if let Some(annual) = acc.push(year, g)? {
            epochs.push(year);
            grids.push(annual);
        }
    }
    SnapshotSeries::new(epochs, grids)
}

/// Per-cell mean over `window` consecutive years centred on each of
/// `center_years`. Windows reaching outside the available years are rejected.
pub fn centered_mean(
    annual: &SnapshotSeries,
    center_years: &[Year],
    window: usize,
) -> Result<SnapshotSeries, RasterError> {
    if window.is_multiple_of(2) {
        return Err(RasterError::EvenWindow(window));
    }
    let half = (window / 2) as Year;
    let by_year: BTreeMap<Year, &GridRaster> = annual.iter().collect();
    let available_first = annual.epochs()[0];
    let available_last = *annual.epochs().last().expect("non-empty series");
    let geometry = *annual.geometry();

    let mut grids = Vec::with_capacity(center_years.len());
    for &center in center_years {
        let (first, last) = (center - half, center + half);
        if first < available_first || last > available_last {
            return Err(RasterError::WindowOutOfRange {
                center,
                window,
                first,
                last,
                available_first,
                available_last,
            });
        }
        let mut sums = vec![CompensatedSum::new(); geometry.len()];
        let mut valid = vec![true; geometry.len()];
        for year in first..=last {
            let g = by_year.get(&year).ok_or(RasterError::MissingYear(year))?;
            for ((s, ok), (v, m)) in sums.iter_mut().zip(valid.iter_mut()).zip(g.values().iter().zip(g.mask())) {
                if *m {
                    s.add(*v);
                } else {
                    *ok = false;
                }
            }
        }
        let values = sums
            .iter()
            .zip(&valid)
            .map(|(s, ok)| if *ok { s.total() / window as f64 } else { 0.0 })
            .collect();
        grids.push(GridRaster::new(geometry, values, valid)?);
    }
    SnapshotSeries::new(center_years.to_vec(), grids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Orientation;
    use crate::sum::compensated_sum;
    use proptest::prelude::*;

    fn geom(r: usize, c: usize) -> GridGeometry {
        GridGeometry::global(r, c, Orientation::SouthToNorth).unwrap()
    }

    fn archive_from(start: Year, months: Vec<GridRaster>) -> MonthlyArchive {
        let n_years = months.len() / 12;
        MonthlyArchive::new(start, n_years, months).unwrap()
    }

    #[test]
    fn constant_months() {
        let months = (0..12).map(|_| GridRaster::filled(geom(1, 1), 5.0)).collect();
        let annual = monthly_to_annual(&archive_from(1901, months)).unwrap();
        assert_eq!(annual.epochs(), &[1901]);
        assert_eq!(annual.grids()[0].get(0, 0), Some(5.0));
    }

    #[test]
    fn months_one_to_twelve_average() {
        let months = (1..=12).map(|m| GridRaster::filled(geom(1, 1), m as f64)).collect();
        let annual = monthly_to_annual(&archive_from(1901, months)).unwrap();
        let oracle = (1..=12).map(|m| m as f64).sum::<f64>() / 12.0;
        assert_eq!(oracle, 6.5);
        assert_eq!(annual.grids()[0].get(0, 0), Some(oracle));
    }

    #[test]
    fn one_missing_month_masks_the_year() {
        let mut months: Vec<GridRaster> = (0..24).map(|_| GridRaster::filled(geom(1, 2), 1.0)).collect();
        months[7].set(0, 1, None);
        let annual = monthly_to_annual(&archive_from(1901, months)).unwrap();
        assert_eq!(annual.grids()[0].get(0, 0), Some(1.0));
        assert_eq!(annual.grids()[0].get(0, 1), None);
        assert_eq!(annual.grids()[1].get(0, 1), Some(1.0));
    }

    fn yearly(values: &[f64], start: Year) -> SnapshotSeries {
        let epochs = (0..values.len()).map(|i| start + i as Year).collect();
        let grids = values.iter().map(|v| GridRaster::filled(geom(1, 1), *v)).collect();
        SnapshotSeries::new(epochs, grids).unwrap()
    }

    #[test]
    fn centered_mean_cases() {
        let constant = yearly(&[3.25; 30], 1901);
        let m = centered_mean(&constant, &[1911, 1920], 21).unwrap();
        assert!(m.grids().iter().all(|g| g.get(0, 0) == Some(3.25)));

        let ramp: Vec<f64> = (0..=20).map(|v| v as f64).collect();
        let s = yearly(&ramp, 1);
        let m = centered_mean(&s, &[11], 21).unwrap();
        assert_eq!(m.grids()[0].get(0, 0), Some(10.0));

        let id = centered_mean(&s, &[3, 7], 1).unwrap();
        assert_eq!(id.grids()[0].get(0, 0), Some(2.0));
        assert_eq!(id.grids()[1].get(0, 0), Some(6.0));
    }

    #[test]
    fn centered_mean_rejects_bad_windows() {
        let s = yearly(&[0.0; 113], 1901);
        assert_eq!(centered_mean(&s, &[1950], 20).unwrap_err(), RasterError::EvenWindow(20));
        // 1910 +/- 10 needs 1900, one year before the archive starts
        assert!(matches!(
            centered_mean(&s, &[1910], 21),
            Err(RasterError::WindowOutOfRange { first: 1900, .. })
        ));
        assert!(centered_mean(&s, &[1911, 2000], 21).is_ok());
    }

    #[test]
    fn masked_year_masks_the_window() {
        let mut s = yearly(&[1.0; 5], 2000).into_parts();
        s.1[1].set(0, 0, None);
        let s = SnapshotSeries::new(s.0, s.1).unwrap();
        assert_eq!(centered_mean(&s, &[2001], 3).unwrap().grids()[0].get(0, 0), None);
        assert_eq!(centered_mean(&s, &[2003], 3).unwrap().grids()[0].get(0, 0), Some(1.0));
    }

    proptest! {
        #[test]
        fn annual_mean_preserves_global_mean(values in proptest::collection::vec(-500.0f64..500.0, 24 * 6)) {
            let months: Vec<GridRaster> = values
                .chunks(6)
                .map(|c| GridRaster::from_values(geom(2, 3), c.to_vec()).unwrap())
                .collect();
            let annual = monthly_to_annual(&archive_from(1990, months)).unwrap();
            let monthly_mean = compensated_sum(values.iter().copied()) / values.len() as f64;
            let annual_cells: Vec<f64> = annual.grids().iter().flat_map(|g| g.values().to_vec()).collect();
            let annual_mean = compensated_sum(annual_cells.iter().copied()) / annual_cells.len() as f64;
            prop_assert!((monthly_mean - annual_mean).abs() <= 1e-12 * monthly_mean.abs().max(1.0));
        }

        #[test]
        fn centered_mean_is_linear(
            xs in proptest::collection::vec(-100.0f64..100.0, 9),
            ys in proptest::collection::vec(-100.0f64..100.0, 9),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let combo: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let mx = centered_mean(&yearly(&xs, 0), &[2, 4, 6], 5).unwrap();
            let my = centered_mean(&yearly(&ys, 0), &[2, 4, 6], 5).unwrap();
            let mc = centered_mean(&yearly(&combo, 0), &[2, 4, 6], 5).unwrap();
            for i in 0..3 {
                let lhs = mc.grids()[i].get(0, 0).unwrap();
                let (x, y) = (mx.grids()[i].get(0, 0).unwrap(), my.grids()[i].get(0, 0).unwrap());
                let rhs = a * x + b * y;
                let scale = (a * x).abs() + (b * y).abs() + 1.0;
                prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
            }
        }
    }
}
