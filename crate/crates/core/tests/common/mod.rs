//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls the library's index code: sums are plain
//! loops over `Option<f64>` cells.
#![allow(dead_code)]

/// Cells of one grid, row-major, `None` where masked.
pub type Cells = Vec<Option<f64>>;

#[derive(Clone, Debug, Default)]
pub struct LoopSuite {
    pub area: Vec<f64>,
    pub naive: Vec<f64>,
    pub laspeyres_fixed: Vec<f64>,
    pub paasche_fixed: Vec<f64>,
    pub laspeyres_chained: Vec<f64>,
    pub paasche_chained: Vec<f64>,
    pub fisher_chained: Vec<f64>,
    pub cl: Vec<f64>,
    pub cp: Vec<f64>,
    pub cf: Vec<f64>,
    pub area_changes: Vec<f64>,
    pub naive_changes: Vec<f64>,
    /// (total, pure, composition, residual) per transition.
    pub decomposition: Vec<(f64, f64, f64, f64)>,
}

/// Σ t·w / Σ w over cells where both are present.
pub fn loop_mean(t: &Cells, w: &Cells) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..t.len() {
        if let (Some(t), Some(w)) = (t[i], w[i]) {
            num += t * w;
            den += w;
        }
    }
    num / den
}

/// Σ (t1 − t0)·w / Σ w over cells where all three are present.
pub fn loop_change(t0: &Cells, t1: &Cells, w: &Cells) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..t0.len() {
        if let (Some(a), Some(b), Some(w)) = (t0[i], t1[i], w[i]) {
            num += (b - a) * w;
            den += w;
        }
    }
    num / den
}

fn loop_decomposition(t0: &Cells, t1: &Cells, p0: &Cells, p1: &Cells) -> (f64, f64, f64, f64) {
    let (mut s0, mut s1, mut a, mut b, mut d, mut e) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..t0.len() {
        if let (Some(x0), Some(x1), Some(q0), Some(q1)) = (t0[i], t1[i], p0[i], p1[i]) {
            s0 += q0;
            s1 += q1;
            a += x0 * q0;
            b += x1 * q1;
            d += (x1 - x0) * q0;
            e += x0 * q1;
        }
    }
    let total = b / s1 - a / s0;
    let pure = d / s0;
    let comp = e / s1 - a / s0;
    (total, pure, comp, total - pure - comp)
}

fn anomalies(levels: &[f64], base: usize) -> Vec<f64> {
    levels.iter().map(|v| v - levels[base]).collect()
}

fn accumulate(start: f64, changes: &[f64]) -> Vec<f64> {
    let mut out = vec![start];
    for c in changes {
        let last = *out.last().unwrap();
        out.push(last + c);
    }
    out
}

/// Every series under the strict policy, as anomalies from epoch `base`.
pub fn loop_suite(temps: &[Cells], pops: &[Cells], area: &Cells, base: usize) -> LoopSuite {
    let n = temps.len();
    let area_levels: Vec<f64> = temps.iter().map(|t| loop_mean(t, area)).collect();
    let naive: Vec<f64> = temps.iter().zip(pops).map(|(t, p)| loop_mean(t, p)).collect();
    let lf: Vec<f64> = temps.iter().map(|t| loop_mean(t, &pops[0])).collect();
    let pf: Vec<f64> = temps.iter().map(|t| loop_mean(t, &pops[n - 1])).collect();
    let cl: Vec<f64> = (1..n).map(|i| loop_change(&temps[i - 1], &temps[i], &pops[i - 1])).collect();
    let cp: Vec<f64> = (1..n).map(|i| loop_change(&temps[i - 1], &temps[i], &pops[i])).collect();
    let cf: Vec<f64> = cl.iter().zip(&cp).map(|(l, p)| 0.5 * (l + p)).collect();
    let decomposition = (1..n)
        .map(|i| loop_decomposition(&temps[i - 1], &temps[i], &pops[i - 1], &pops[i]))
        .collect();
    LoopSuite {
        area: anomalies(&area_levels, base),
        naive: anomalies(&naive, base),
        laspeyres_fixed: anomalies(&lf, base),
        paasche_fixed: anomalies(&pf, base),
        laspeyres_chained: anomalies(&accumulate(naive[0], &cl), base),
        paasche_chained: anomalies(&accumulate(naive[0], &cp), base),
        fisher_chained: anomalies(&accumulate(naive[0], &cf), base),
        area_changes: area_levels.windows(2).map(|w| w[1] - w[0]).collect(),
        naive_changes: naive.windows(2).map(|w| w[1] - w[0]).collect(),
        cl,
        cp,
        cf,
        decomposition,
    }
}

/// A MATLAB-style matrix: `m[row][col]`.
pub type Matrix = Vec<Vec<f64>>;

fn flipud(m: &Matrix) -> Matrix {
    m.iter().rev().cloned().collect()
}

/// `sum(sum(m))`: column sums first, then their sum, left to right.
fn sum2(m: &Matrix) -> f64 {
    let cols = m[0].len();
    let mut total = 0.0;
    for c in 0..cols {
        let mut s = 0.0;
        for row in m {
            s += row[c];
        }
        total += s;
    }
    total
}

fn times(a: &Matrix, b: &Matrix) -> Matrix {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).collect())
        .collect()
}

/// The ten series of the original MATLAB script.
#[derive(Clone, Debug, Default)]
pub struct Processall {
    pub gmt: Vec<f64>,
    pub gmtl: Vec<f64>,
    pub gmtp: Vec<f64>,
    pub gmt_pop: Vec<f64>,
    pub cl: Vec<f64>,
    pub cp: Vec<f64>,
    pub cf: Vec<f64>,
    pub gmtcl: Vec<f64>,
    pub gmtcp: Vec<f64>,
    pub gmtcf: Vec<f64>,
}

/// Line-by-line port of `processall.m`, generalised from ten decades to
/// any number of epochs.
///
/// `t_tenths` are centred means in tenths of a degree, row 0 south, NaN
/// where missing. `pops` and `area` are as read from the population files,
/// row 0 north, with no NaN.
pub fn processall(t_tenths: &[Matrix], pops: &[Matrix], area: &Matrix) -> Processall {
    let n = t_tenths.len();
    let totarea = sum2(area);
    // Divide by ten, add 273.15, then zero the missing cells.
    let t: Vec<Matrix> = t_tenths
        .iter()
        .map(|m| {
            m.iter()
                .map(|row| {
                    row.iter()
                        .map(|v| {
                            let k = v / 10.0 + 273.15;
                            if k.is_nan() {
                                0.0
                            } else {
                                k
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let area = flipud(area);
    let mut gmt: Vec<f64> = t.iter().map(|ti| sum2(&times(ti, &area)) / totarea).collect();
    let p: Vec<Matrix> = pops.iter().map(flipud).collect();
    let first = &p[0];
    let last = &p[n - 1];
    let mut gmtl: Vec<f64> = t.iter().map(|ti| sum2(&times(ti, first)) / sum2(first)).collect();
    let mut gmtp: Vec<f64> = t.iter().map(|ti| sum2(&times(ti, last)) / sum2(last)).collect();
    let mut gmt_pop: Vec<f64> = (0..n).map(|i| sum2(&times(&t[i], &p[i])) / sum2(&p[i])).collect();
    let mut cl = vec![0.0];
    let mut cp = vec![0.0];
    for i in 1..n {
        cl.push(sum2(&times(&t[i], &p[i - 1])) / sum2(&p[i - 1]) - sum2(&times(&t[i - 1], &p[i - 1])) / sum2(&p[i - 1]));
        cp.push(sum2(&times(&t[i], &p[i])) / sum2(&p[i]) - sum2(&times(&t[i - 1], &p[i])) / sum2(&p[i]));
    }
    let cf: Vec<f64> = cl.iter().zip(&cp).map(|(l, p)| 0.5 * (l + p)).collect();
    let mut gmtcl = vec![gmtl[0]];
    let mut gmtcp = vec![gmtl[0]];
    let mut gmtcf = vec![gmtl[0]];
    for i in 1..n {
        gmtcl.push(gmtcl[i - 1] + cl[i]);
        gmtcp.push(gmtcp[i - 1] + cp[i]);
        gmtcf.push(gmtcf[i - 1] + cf[i]);
    }
    for s in [&mut gmt, &mut gmtl, &mut gmtp, &mut gmt_pop, &mut gmtcl, &mut gmtcp, &mut gmtcf] {
        let base = s[0];
        s.iter_mut().for_each(|v| *v -= base);
    }
    Processall {
        gmt,
        gmtl,
        gmtp,
        gmt_pop,
        cl,
        cp,
        cf,
        gmtcl,
        gmtcp,
        gmtcf,
    }
}

/// Largest absolute elementwise difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Cell `l, c` of month `m` of year `y` in a `.dat` file, by counting lines
/// and fields the slow way.
pub fn cru_triple_loop(text: &str, n_lat: usize, n_cols: usize, n_years: usize) -> Vec<Vec<Vec<f64>>> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::new();
    for y in 0..n_years {
        for m in 0..12 {
            let mut grid = Vec::new();
            for l in 0..n_lat {
                let line = lines[l + m * n_lat + y * n_lat * 12];
                let row: Vec<f64> = (0..n_cols)
                    .map(|c| line[5 * c..5 * c + 5].trim().parse().unwrap())
                    .collect();
                grid.push(row);
            }
            out.push(grid);
        }
    }
    out
}

use poptemp::raster::{convert_units, reorient};
use poptemp::{GridGeometry, GridRaster, Orientation, SnapshotSeries, Year};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inputs laid out as the MATLAB script sees them, plus which population
/// cells are missing (zero in the matrices, masked for the library).
#[derive(Clone, Debug)]
pub struct CompatCase {
    pub epochs: Vec<Year>,
    pub t_tenths: Vec<Matrix>,
    pub pops: Vec<Matrix>,
    pub pop_valid: Vec<Vec<Vec<bool>>>,
    pub area: Matrix,
}

/// Random centred means (some missing), populations and areas.
pub fn compat_case(seed: u64, rows: usize, cols: usize, n_epochs: usize) -> CompatCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let epochs: Vec<Year> = (0..n_epochs as Year).map(|i| 1910 + 10 * i).collect();
    let base: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-300..=300) as f64).collect())
        .collect();
    let t_tenths = (0..n_epochs)
        .map(|e| {
            base.iter()
                .map(|row| {
                    row.iter()
                        .map(|b| {
                            if rng.gen_bool(0.05) {
                                f64::NAN
                            } else {
                                b + (e as f64) * rng.gen_range(-2..=6) as f64 + rng.gen_range(-20..=20) as f64 / 3.0
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut pops = Vec::new();
    let mut pop_valid = Vec::new();
    for _ in 0..n_epochs {
        let mut p = vec![vec![0.0; cols]; rows];
        let mut v = vec![vec![false; cols]; rows];
        for r in 0..rows {
            for c in 0..cols {
                if rng.gen_bool(0.85) {
                    v[r][c] = true;
                    p[r][c] = rng.gen_range(0.0..5.0e5_f64).floor();
                }
            }
        }
        pops.push(p);
        pop_valid.push(v);
    }
    let area = (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(100.0..3000.0)).collect())
        .collect();
    CompatCase {
        epochs,
        t_tenths,
        pops,
        pop_valid,
        area,
    }
}

/// Library inputs for `case`: Kelvin temperatures, populations and area,
/// all south-to-north.
pub fn compat_grids(case: &CompatCase) -> (SnapshotSeries, SnapshotSeries, GridRaster) {
    let rows = case.area.len();
    let cols = case.area[0].len();
    let s2n = GridGeometry::global(rows, cols, Orientation::SouthToNorth).unwrap();
    let n2s = GridGeometry::global(rows, cols, Orientation::NorthToSouth).unwrap();
    let temps = case
        .t_tenths
        .iter()
        .map(|m| {
            let cells: Cells = m.iter().flatten().map(|v| (!v.is_nan()).then_some(*v)).collect();
            convert_units(&GridRaster::from_options(s2n, &cells).unwrap(), 0.1, 273.15)
        })
        .collect();
    let pops = case
        .pops
        .iter()
        .zip(&case.pop_valid)
        .map(|(p, v)| {
            let cells: Cells = p
                .iter()
                .flatten()
                .zip(v.iter().flatten())
                .map(|(x, ok)| ok.then_some(*x))
                .collect();
            reorient(&GridRaster::from_options(n2s, &cells).unwrap(), Orientation::SouthToNorth)
        })
        .collect();
    let area = reorient(
        &GridRaster::from_values(n2s, case.area.iter().flatten().copied().collect()).unwrap(),
        Orientation::SouthToNorth,
    );
    (
        SnapshotSeries::new(case.epochs.clone(), temps).unwrap(),
        SnapshotSeries::new(case.epochs.clone(), pops).unwrap(),
        area,
    )
}

/// Grid cells as options, in storage order.
pub fn cells(g: &GridRaster) -> Cells {
    g.cells().collect()
}
