//! Within transformation for one or more crossed fixed effects by
//! alternating projections.

use crate::error::{Error, Result};
use crate::exec;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Group memberships of an estimation sample, one id vector per key.
#[derive(Debug, Clone)]
pub struct FixedEffects {
    keys: Vec<GroupIds>,
    nrows: usize,
}

#[derive(Debug, Clone)]
struct GroupIds {
    ids: Vec<u32>,
    counts: Vec<f64>,
}

impl GroupIds {
    fn new(ids: Vec<u32>) -> Self {
        let n_groups = ids.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
        let mut counts = vec![0.0; n_groups];
        for &g in &ids {
            counts[g as usize] += 1.0;
        }
        Self { ids, counts }
    }

    fn means(&self, col: &[f64], sums: &mut Vec<f64>) {
        sums.clear();
        sums.resize(self.counts.len(), 0.0);
        for (&g, &v) in self.ids.iter().zip(col) {
            sums[g as usize] += v;
        }
        for (s, &c) in sums.iter_mut().zip(&self.counts) {
            *s /= c;
        }
    }
}

impl FixedEffects {
    /// `keys[k][i]` is the dense group id of row `i` under key `k`. With no
    /// keys, a single all-rows group is used (a constant term).
    pub fn new(keys: Vec<Vec<u32>>, nrows: usize) -> Self {
        let keys = if keys.is_empty() {
            vec![vec![0u32; nrows]]
        } else {
            keys
        };
        debug_assert!(keys.iter().all(|k| k.len() == nrows));
        Self {
            keys: keys.into_iter().map(GroupIds::new).collect(),
            nrows,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    /// Largest absolute group mean of `col` over all keys.
    pub fn worst_mean(&self, col: &[f64]) -> f64 {
        let mut buf = Vec::new();
        let mut worst = 0.0f64;
        for key in &self.keys {
            key.means(col, &mut buf);
            worst = buf.iter().fold(worst, |w, m| w.max(m.abs()));
        }
        worst
    }

    /// Demeans `col` in place; returns the number of sweeps used.
    pub fn demean(&self, col: &mut [f64], tol: f64, max_iter: usize) -> Result<usize> {
        debug_assert_eq!(col.len(), self.nrows);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("cannot demean a column with missing values".into()));
        }
        let mut buf = Vec::new();
        let mut worst = f64::INFINITY;
        for iter in 1..=max_iter.max(1) {
            for key in &self.keys {
                key.means(col, &mut buf);
                for (v, &g) in col.iter_mut().zip(&key.ids) {
                    *v -= buf[g as usize];
                }
            }
            if self.keys.len() == 1 {
                return Ok(iter);
            }
            worst = self.worst_mean(col);
            if worst < tol {
                return Ok(iter);
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            worst,
        })
    }

    /// Demeans several columns, in parallel when enabled.
    pub fn demean_all(&self, cols: &mut [Vec<f64>], tol: f64, max_iter: usize) -> Result<()> {
        let mut results: Vec<(Vec<f64>, Result<usize>)> = cols
            .iter_mut()
            .map(|c| (std::mem::take(c), Ok(0)))
            .collect();
        exec::for_each_mut(&mut results, |(col, res)| {
            *res = self.demean(col, tol, max_iter);
        });
        for (slot, (col, res)) in cols.iter_mut().zip(results) {
            res?;
            *slot = col;
        }
        Ok(())
    }
}
