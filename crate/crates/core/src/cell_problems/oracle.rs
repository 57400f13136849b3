//! Brute-force 1D oracle for the bulk cell problem.
//!
//! In 1D the constraints decouple: the slopes must average to `B` and the
//! jumps must sum to `A − B`, so the bulk and jump parts are enumerated
//! separately.

use serde::{Deserialize, Serialize};

use crate::densities::{BulkDensity, SurfaceDensity};
use crate::error::{Error, Result};
use crate::tensor::{Mat, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    /// Candidate slopes and jump heights.
    pub values: Vec<f64>,
    /// Volume fractions are multiples of `1/fraction_steps`.
    pub fraction_steps: usize,
}

impl OracleGrid {
    pub fn uniform(radius: f64, points: usize, fraction_steps: usize) -> Self {
        let values = if points <= 1 {
            vec![0.0]
        } else {
            (0..points).map(|i| -radius + 2.0 * radius * i as f64 / (points - 1) as f64).collect()
        };
        Self { values, fraction_steps }
    }
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self::uniform(6.0, 25, 10)
    }
}

/// Minimum over competitors whose slope takes at most three values (the last
/// closing the mean `B`) and with at most `k_max` jumps (the last closing
/// `A − B`); `W` and `ψ` are frozen at `x₀`.
#[allow(non_snake_case)]
pub fn oracle_1d_H(
    w: &BulkDensity,
    psi: &SurfaceDensity,
    x0: f64,
    a: f64,
    b: f64,
    k_max: usize,
    grid: &OracleGrid,
) -> Result<f64> {
    if w.dim() != 1 || psi.dim() != 1 {
        return Err(Error::Unsupported("oracle_1d_H is one-dimensional".into()));
    }
    if !(1..=4).contains(&k_max) {
        return Err(Error::InvalidInput(format!("k_max must be in 1..=4, got {k_max}")));
    }
    if grid.values.is_empty() || grid.fraction_steps == 0 || grid.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("oracle grid must be finite and nonempty".into()));
    }
    let x = Vector::scalar(x0);
    let nu = Vector::scalar(1.0);
    let wv = |s: f64| w.eval(&x, &Mat::scalar(s));
    let pv = |j: f64| if j == 0.0 { 0.0 } else { psi.eval(&x, &[j], &nu) };

    let m = grid.fraction_steps;
    let mut bulk = f64::INFINITY;
    for i1 in 0..=m {
        for i2 in 0..=(m - i1) {
            let (t1, t2) = (i1 as f64 / m as f64, i2 as f64 / m as f64);
            let t3 = 1.0 - t1 - t2;
            let s1_list: &[f64] = if i1 == 0 { &[0.0] } else { &grid.values };
            let s2_list: &[f64] = if i2 == 0 { &[0.0] } else { &grid.values };
            for &s1 in s1_list {
                for &s2 in s2_list {
                    let rest = b - t1 * s1 - t2 * s2;
                    let cost = if i1 + i2 == m {
                        if rest.abs() > 1e-12 {
                            continue;
                        }
                        t1 * wv(s1) + t2 * wv(s2)
                    } else {
                        t1 * wv(s1) + t2 * wv(s2) + t3 * wv(rest / t3)
                    };
                    bulk = bulk.min(cost);
                }
            }
        }
    }

    let total = a - b;
    let mut jumps = pv(total);
    let mut stack: Vec<(usize, f64, f64)> = vec![(1, 0.0, 0.0)];
    while let Some((count, sum, cost)) = stack.pop() {
        if count >= k_max {
            continue;
        }
        for &j in &grid.values {
            let (s, c) = (sum + j, cost + pv(j));
            jumps = jumps.min(c + pv(total - s));
            stack.push((count + 1, s, c));
        }
    }
    Ok(bulk + jumps)
}
