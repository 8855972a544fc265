//! Compensated summation.
//!
//! Grid statistics accumulate hundreds of millions of terms. Every sum in the
//! crate goes through [`CompensatedSum`] (Neumaier's variant of Kahan
//! summation), and parallel reductions combine per-chunk partials in a fixed
//! order so results never depend on the thread count.

use rayon::prelude::*;

/// Neumaier compensated accumulator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one.
    #[inline]
    pub fn merge(&mut self, other: CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        s.extend(iter);
        s
    }
}

/// Compensated sum of an iterator of values.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().total()
}

/// Runs `chunk` for every index in `0..n_chunks` (possibly in parallel) and
/// merges the `N` partial accumulators in index order.
pub fn ordered_reduce<const N: usize, F>(n_chunks: usize, chunk: F) -> [CompensatedSum; N]
where
    F: Fn(usize) -> [CompensatedSum; N] + Sync + Send,
{
    let parts: Vec<[CompensatedSum; N]> = (0..n_chunks).into_par_iter().map(chunk).collect();
    let mut acc = [CompensatedSum::new(); N];
    for part in parts {
        for (a, p) in acc.iter_mut().zip(part) {
            a.merge(p);
        }
    }
    acc
}
