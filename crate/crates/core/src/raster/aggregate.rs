use rayon::prelude::*;

use super::{GridRaster, Orientation, RasterError};
use crate::sum::CompensatedSum;

/// How a block of fine cells collapses into one coarse cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reducer {
    /// Extensive quantities (counts, areas): invalid cells contribute zero.
    Sum,
    /// Intensive quantities: mean over the valid cells only.
    Mean,
}

/// Collapses `factor`x`factor` blocks of `fine` into single cells.
///
/// A coarse cell is valid iff at least one fine cell in its block is valid.
pub fn aggregate_blocks(fine: &GridRaster, factor: usize, reducer: Reducer) -> Result<GridRaster, RasterError> {
    let geometry = fine.geometry().coarsened(factor)?;
    let (n_rows, n_cols) = (geometry.n_rows(), geometry.n_cols());
    let fine_cols = fine.n_cols();

    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..n_rows)
        .into_par_iter()
        .map(|r| {
            let mut acc = vec![CompensatedSum::new(); n_cols];
            let mut count = vec![0usize; n_cols];
            for fr in r * factor..(r + 1) * factor {
                let base = fr * fine_cols;
                let values = &fine.values()[base..base + fine_cols];
                let mask = &fine.mask()[base..base + fine_cols];
                for (c, (a, n)) in acc.iter_mut().zip(count.iter_mut()).enumerate() {
                    for k in c * factor..(c + 1) * factor {
                        if mask[k] {
                            a.add(values[k]);
                            *n += 1;
                        }
                    }
                }
            }
            let values = acc
                .iter()
                .zip(&count)
                .map(|(a, n)| match (reducer, *n) {
                    (_, 0) => 0.0,
                    (Reducer::Sum, _) => a.total(),
                    (Reducer::Mean, n) => a.total() / n as f64,
                })
                .collect();
            let mask = count.iter().map(|n| *n > 0).collect();
            (values, mask)
        })
        .collect();

    let mut values = Vec::with_capacity(geometry.len());
    let mut mask = Vec::with_capacity(geometry.len());
    for (v, m) in rows {
        values.extend(v);
        mask.extend(m);
    }
    GridRaster::new(geometry, values, mask)
}

/// Returns `g` with rows in `target` order.
pub fn reorient(g: &GridRaster, target: Orientation) -> GridRaster {
    if g.orientation() == target {
        return g.clone();
    }
    let n_cols = g.n_cols();
    let mut values = Vec::with_capacity(g.values().len());
    let mut mask = Vec::with_capacity(g.mask().len());
    for r in (0..g.n_rows()).rev() {
        let span = r * n_cols..(r + 1) * n_cols;
        values.extend_from_slice(&g.values()[span.clone()]);
        mask.extend_from_slice(&g.mask()[span]);
    }
    GridRaster::new(g.geometry().with_orientation(target), values, mask).expect("shape preserved")
}

/// Affine unit change `v * scale + offset` on valid cells.
pub fn convert_units(g: &GridRaster, scale: f64, offset: f64) -> GridRaster {
    g.map_valid(|v| v * scale + offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridGeometry;
    use crate::sum::compensated_sum;
    use proptest::prelude::*;

    fn geom(n_rows: usize, n_cols: usize, o: Orientation) -> GridGeometry {
        GridGeometry::global(n_rows, n_cols, o).unwrap()
    }

    #[test]
    fn uniform_block_sums() {
        let g = GridRaster::filled(geom(6, 6, Orientation::NorthToSouth), 1.0);
        let c = aggregate_blocks(&g, 6, Reducer::Sum).unwrap();
        assert_eq!((c.n_rows(), c.n_cols()), (1, 1));
        assert_eq!(c.get(0, 0), Some(36.0));
        assert_eq!(c.geometry().cell_size(), g.geometry().cell_size() * 6.0);
    }

    #[test]
    fn empty_block_is_masked() {
        let g = GridRaster::masked(geom(6, 6, Orientation::NorthToSouth));
        let c = aggregate_blocks(&g, 6, Reducer::Sum).unwrap();
        assert_eq!(c.get(0, 0), None);
    }

    #[test]
    fn block_sums_match_double_loop() {
        let geometry = geom(12, 12, Orientation::NorthToSouth);
        let values: Vec<f64> = (0..144).map(|i| i as f64).collect();
        let g = GridRaster::from_values(geometry, values).unwrap();
        let c = aggregate_blocks(&g, 6, Reducer::Sum).unwrap();
        // independent double loop over the fine cells of each block
        let mut expected = [[0.0f64; 2]; 2];
        for (i, row) in expected.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                for k in 0..6 {
                    for l in 0..6 {
                        let r = k + i * 6;
                        let col = l + j * 6;
                        *cell += (r * 12 + col) as f64;
                    }
                }
            }
        }
        assert_eq!(expected, [[1170.0, 1386.0], [3762.0, 3978.0]]);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(c.get(i, j), Some(expected[i][j]));
            }
        }
    }

    #[test]
    fn mean_reducer_ignores_invalid_cells() {
        let geometry = geom(2, 2, Orientation::SouthToNorth);
        let g = GridRaster::from_options(geometry, &[Some(1.0), None, Some(3.0), None]).unwrap();
        assert_eq!(aggregate_blocks(&g, 2, Reducer::Mean).unwrap().get(0, 0), Some(2.0));
        assert_eq!(aggregate_blocks(&g, 2, Reducer::Sum).unwrap().get(0, 0), Some(4.0));
    }

    #[test]
    fn coarse_geometry_keeps_the_corner() {
        let fine = GridGeometry::new(2160, 4320, -90.0, -180.0, 1.0 / 12.0, Orientation::NorthToSouth).unwrap();
        let c = aggregate_blocks(&GridRaster::masked(fine), 6, Reducer::Sum).unwrap();
        let g = c.geometry();
        assert_eq!((g.n_rows(), g.n_cols()), (360, 720));
        assert!((g.origin_lat() - 89.75).abs() < 1e-9);
        assert!((g.origin_lon() + 179.75).abs() < 1e-9);
    }

    #[test]
    fn aggregation_errors() {
        let g = GridRaster::filled(geom(6, 6, Orientation::NorthToSouth), 1.0);
        assert_eq!(aggregate_blocks(&g, 0, Reducer::Sum).unwrap_err(), RasterError::ZeroFactor);
        assert!(matches!(
            aggregate_blocks(&g, 4, Reducer::Sum),
            Err(RasterError::NotDivisible { factor: 4, .. })
        ));
        assert_eq!(aggregate_blocks(&g, 1, Reducer::Sum).unwrap(), g);
    }

    #[test]
    fn reorient_cases() {
        let g = GridRaster::from_values(geom(2, 1, Orientation::NorthToSouth), vec![1.0, 2.0]).unwrap();
        let s = reorient(&g, Orientation::SouthToNorth);
        assert_eq!(s.values(), &[2.0, 1.0]);
        assert_eq!(s.orientation(), Orientation::SouthToNorth);
        assert_eq!(s.geometry().origin_lat(), g.geometry().origin_lat() - 90.0);
        let same = reorient(&g, Orientation::NorthToSouth);
        assert_eq!(same.values(), g.values());
        assert_eq!(same.geometry(), g.geometry());
    }

    #[test]
    fn convert_units_cases() {
        let geometry = geom(1, 2, Orientation::SouthToNorth);
        let g = GridRaster::from_options(geometry, &[Some(156.0), None]).unwrap();
        let k = convert_units(&g, 0.1, 273.15);
        assert!((k.get(0, 0).unwrap() - 288.75).abs() < 1e-12);
        assert_eq!(k.get(0, 1), None);
        assert_eq!(convert_units(&g, 1.0, 0.0), g);
    }

    fn arb_grid(max: usize) -> impl Strategy<Value = GridRaster> {
        (1..=max, 1..=max, any::<bool>()).prop_flat_map(|(r, c, north)| {
            let o = if north { Orientation::NorthToSouth } else { Orientation::SouthToNorth };
            proptest::collection::vec(proptest::option::weighted(0.8, -1e6f64..1e6), r * c)
                .prop_map(move |cells| GridRaster::from_options(geom(r, c, o), &cells).unwrap())
        })
    }

    proptest! {
        #[test]
        fn reorient_is_an_involution(g in arb_grid(8)) {
            let back = reorient(&reorient(&g, g.orientation().flipped()), g.orientation());
            prop_assert_eq!(back.geometry(), g.geometry());
            prop_assert_eq!(back.mask(), g.mask());
            prop_assert_eq!(back.values(), g.values());
        }

        #[test]
        fn block_sum_conserves_total(
            (g, factor) in (1usize..4).prop_flat_map(|f| {
                (1usize..5, 1usize..5).prop_flat_map(move |(r, c)| {
                    proptest::collection::vec(proptest::option::weighted(0.7, 0.0f64..1e7), r * f * c * f)
                        .prop_map(move |cells| {
                            (GridRaster::from_options(geom(r * f, c * f, Orientation::NorthToSouth), &cells).unwrap(), f)
                        })
                })
            })
        ) {
            let coarse = aggregate_blocks(&g, factor, Reducer::Sum).unwrap();
            let fine_total = compensated_sum(g.cells().flatten());
            let coarse_total = compensated_sum(coarse.cells().flatten());
            prop_assert!((fine_total - coarse_total).abs() <= 1e-9 * fine_total.abs().max(1.0));
        }
    }
}
