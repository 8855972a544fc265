//! Library results against hand-computed values and loop oracles.

mod common;

use common::*;
use poptemp::indices::{compute_suite, conflation_decomposition, fisher_change, laspeyres_change, paasche_change};
use poptemp::ingest::synthetic::{generate_synthetic_world, TrendSpec};
use poptemp::{GridGeometry, GridRaster, MaskPolicy, Orientation, SnapshotSeries};

fn row(values: &[f64]) -> GridRaster {
    let g = GridGeometry::global(1, values.len(), Orientation::SouthToNorth).unwrap();
    GridRaster::from_values(g, values.to_vec()).unwrap()
}

#[test]
fn two_cell_fixture() {
    let (t0, t1) = (row(&[10.0, 20.0]), row(&[11.0, 23.0]));
    let (p0, p1) = (row(&[3.0, 1.0]), row(&[1.0, 3.0]));
    let l = laspeyres_change(&t0, &t1, &p0, MaskPolicy::Strict).unwrap();
    let p = paasche_change(&t0, &t1, &p1, MaskPolicy::Strict).unwrap();
    let f = fisher_change(l, p).unwrap();
    // L = (1·3 + 3·1)/4, P = (1·1 + 3·3)/4, naive = 70/4 − 50/4.
    assert!((l - 1.5).abs() < 1e-12);
    assert!((p - 2.5).abs() < 1e-12);
    assert!((f - 2.0).abs() < 1e-12);
    let d = conflation_decomposition(&t0, &t1, &p0, &p1, MaskPolicy::Strict).unwrap();
    assert!((d.total - 7.5).abs() < 1e-12);
    assert!((d.pure_temp - 1.5).abs() < 1e-12);
    assert!((d.composition - 5.0).abs() < 1e-12);
    assert!((d.residual - 1.0).abs() < 1e-12);
}

fn check_suite(temps: &SnapshotSeries, pops: &SnapshotSeries, area: &GridRaster, base: usize, tol: f64) {
    let suite = compute_suite(temps, pops, area, MaskPolicy::Strict, temps.epochs()[base]).unwrap();
    let t: Vec<Cells> = temps.grids().iter().map(cells).collect();
    let p: Vec<Cells> = pops.grids().iter().map(cells).collect();
    let o = loop_suite(&t, &p, &cells(area), base);
    let pairs: [(&str, &[f64], &[f64]); 12] = [
        ("area", suite.area.values(), &o.area),
        ("naive_pop", suite.naive_pop.values(), &o.naive),
        ("laspeyres_fixed", suite.laspeyres_fixed.values(), &o.laspeyres_fixed),
        ("paasche_fixed", suite.paasche_fixed.values(), &o.paasche_fixed),
        ("laspeyres_chained", suite.laspeyres_chained.values(), &o.laspeyres_chained),
        ("paasche_chained", suite.paasche_chained.values(), &o.paasche_chained),
        ("fisher_chained", suite.fisher_chained.values(), &o.fisher_chained),
        ("cl", suite.chained.laspeyres.deltas(), &o.cl),
        ("cp", suite.chained.paasche.deltas(), &o.cp),
        ("cf", suite.chained.fisher.deltas(), &o.cf),
        ("area changes", suite.area_changes.deltas(), &o.area_changes),
        ("naive changes", suite.naive_changes.deltas(), &o.naive_changes),
    ];
    for (name, got, want) in pairs {
        let err = max_abs_diff(got, want);
        assert!(err <= tol, "{name}: max error {err:e}");
    }
    for (d, (total, pure, comp, resid)) in suite.decomposition.iter().zip(&o.decomposition) {
        assert!((d.total - total).abs() <= tol);
        assert!((d.pure_temp - pure).abs() <= tol);
        assert!((d.composition - comp).abs() <= tol);
        assert!((d.residual - resid).abs() <= tol);
    }
}

#[test]
fn three_cell_three_epoch_fixture() {
    let g = GridGeometry::global(1, 3, Orientation::SouthToNorth).unwrap();
    let grid = |v: [Option<f64>; 3]| GridRaster::from_options(g, &v).unwrap();
    let temps = SnapshotSeries::new(
        vec![1950, 1960, 1970],
        vec![
            grid([Some(10.0), Some(20.0), Some(-5.0)]),
            grid([Some(10.5), None, Some(-4.0)]),
            grid([Some(11.5), Some(21.0), Some(-3.5)]),
        ],
    )
    .unwrap();
    let pops = SnapshotSeries::new(
        vec![1950, 1960, 1970],
        vec![
            grid([Some(5.0), Some(3.0), Some(2.0)]),
            grid([Some(4.0), Some(4.0), Some(2.5)]),
            grid([Some(3.0), Some(6.0), None]),
        ],
    )
    .unwrap();
    let area = grid([Some(1.0), Some(2.0), Some(1.5)]);
    check_suite(&temps, &pops, &area, 0, 1e-12);
    check_suite(&temps, &pops, &area, 2, 1e-12);

    // Hand values for the first transition: cell 1 is missing at 1960.
    let suite = compute_suite(&temps, &pops, &area, MaskPolicy::Strict, 1950).unwrap();
    let cl = (0.5 * 5.0 + 1.0 * 2.0) / 7.0;
    let cp = (0.5 * 4.0 + 1.0 * 2.5) / 6.5;
    assert!((suite.chained.laspeyres.deltas()[0] - cl).abs() < 1e-12);
    assert!((suite.chained.paasche.deltas()[0] - cp).abs() < 1e-12);
}

#[test]
fn seeded_world_matches_loop_oracle() {
    for seed in 0..8 {
        let w = generate_synthetic_world(seed, 10, 10, &[1970, 1980, 1990, 2000], &TrendSpec::mixed());
        check_suite(&w.temp, &w.pop, &w.area, 0, 1e-9);
        check_suite(&w.temp, &w.pop, &w.area, 3, 1e-9);
    }
}

#[test]
fn paper_compat_matches_processall() {
    for seed in 0..4 {
        let case = compat_case(seed, 12, 24, 10);
        let want = processall(&case.t_tenths, &case.pops, &case.area);
        let (temps, pops, area) = compat_grids(&case);
        let suite = compute_suite(&temps, &pops, &area, MaskPolicy::PaperCompat, 1910).unwrap();
        let pairs: [(&str, &[f64], &[f64]); 10] = [
            ("GMT", suite.area.values(), &want.gmt),
            ("GMTL", suite.laspeyres_fixed.values(), &want.gmtl),
            ("GMTP", suite.paasche_fixed.values(), &want.gmtp),
            ("GMTp", suite.naive_pop.values(), &want.gmt_pop),
            ("CL", suite.chained.laspeyres.deltas(), &want.cl[1..]),
            ("CP", suite.chained.paasche.deltas(), &want.cp[1..]),
            ("CF", suite.chained.fisher.deltas(), &want.cf[1..]),
            ("GMTCL", suite.laspeyres_chained.values(), &want.gmtcl),
            ("GMTCP", suite.paasche_chained.values(), &want.gmtcp),
            ("GMTCF", suite.fisher_chained.values(), &want.gmtcf),
        ];
        for (name, got, want) in pairs {
            let err = max_abs_diff(got, want);
            assert!(err <= 1e-12, "seed {seed} {name}: max error {err:e}");
        }
    }
}
