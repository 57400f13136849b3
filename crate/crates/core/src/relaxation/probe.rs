//! Numerical check of lower semicontinuity along a converging sequence.

use serde::Serialize;

use super::{evaluate_with, RelaxedDensities, StructuredDeformation};
use crate::error::{Error, Result};
use crate::fields::{l1_distance, Mesh};
use crate::tensor::Mat;

/// Highest total degree of the monomials that test weak convergence of `G`.
pub const MOMENT_DEGREE: usize = 3;

fn exponents(dim: usize) -> Vec<[u32; 2]> {
    let d = MOMENT_DEGREE as u32;
    let mut out = Vec::new();
    for i in 0..=d {
        if dim == 1 {
            out.push([i, 0]);
        } else {
            for j in 0..=(d - i) {
                out.push([i, j]);
            }
        }
    }
    out
}

/// `∫ G_ij x^α` for `|α| ≤ 3`, per symmetric coordinate. Two Gauss points per
/// axis integrate cubics exactly on each cell.
pub fn moments(mesh: &Mesh, g: &[Mat]) -> Vec<f64> {
    let alphas = exponents(mesh.dim());
    let k = crate::tensor::sym_len(mesh.dim());
    let mut out = vec![0.0; alphas.len() * k];
    for (c, cell) in mesh.cells().iter().enumerate() {
        let coords = g[c].sym_coords();
        for (d, w) in mesh.cell_gauss(c, 2) {
            let x = cell.center + d;
            for (a, alpha) in alphas.iter().enumerate() {
                let mut m = w;
                for (axis, &e) in alpha.iter().enumerate().take(mesh.dim()) {
                    m *= x.get(axis).powi(e as i32);
                }
                for (s, v) in coords.iter().enumerate() {
                    out[a * k + s] += m * v;
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct LscReport {
    pub limit_value: f64,
    pub values: Vec<f64>,
    /// Minimum over the last `⌈len/2⌉` members.
    pub tail_min: f64,
    /// `tail_min − limit_value`; lower semicontinuity asks for ≥ −tol.
    pub slack: f64,
    pub holds: bool,
    pub l1_gaps: Vec<f64>,
    pub moment_gaps: Vec<f64>,
    /// Set when the inequality fails: a solver-accuracy finding.
    pub finding: Option<String>,
}

/// Compares `I_p(sd)` with the tail of `I_p(sd_n)`; reports how far the
/// sequence is from `sd` in `L¹` for `g` and in moments for `G`.
pub fn lower_semicontinuity_probe(
    sd: &StructuredDeformation,
    sequence: &[StructuredDeformation],
    densities: &dyn RelaxedDensities,
    tol: f64,
) -> Result<LscReport> {
    if sequence.is_empty() {
        return Err(Error::InvalidInput("the probe needs a nonempty sequence".into()));
    }
    let limit_value = evaluate_with(sd, densities)?.total;
    let target = moments(sd.mesh(), &sd.big_g);
    let mut values = Vec::with_capacity(sequence.len());
    let mut l1_gaps = Vec::with_capacity(sequence.len());
    let mut moment_gaps = Vec::with_capacity(sequence.len());
    for s in sequence {
        values.push(evaluate_with(s, densities)?.total);
        l1_gaps.push(l1_distance(&s.g, &sd.g)?);
        let m = moments(s.mesh(), &s.big_g);
        moment_gaps.push(m.iter().zip(&target).fold(0.0, |acc: f64, (a, b)| acc.max((a - b).abs())));
    }
    let k = values.len().div_ceil(2);
    let tail_min = values[values.len() - k..].iter().copied().fold(f64::INFINITY, f64::min);
    let slack = tail_min - limit_value;
    let holds = slack >= -tol;
    let finding = (!holds).then(|| {
        format!(
            "solver accuracy: I(limit) = {limit_value:.6e} exceeds the tail minimum {tail_min:.6e} by {:.3e}",
            -slack
        )
    });
    Ok(LscReport { limit_value, values, tail_min, slack, holds, l1_gaps, moment_gaps, finding })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::densities::{BulkDensity, SurfaceDensity};
    use crate::fields::{BrokenField, CellData};
    use crate::relaxation::{RelaxOptions, SolvedDensities};
    use crate::tensor::Vector;

    fn densities() -> SolvedDensities {
        SolvedDensities::new(BulkDensity::w2(1), SurfaceDensity::psi1(1), 2.0, RelaxOptions::default()).unwrap()
    }

    #[test]
    fn constant_sequence_is_tight() {
        let mesh = Arc::new(Mesh::unit(1, 4).unwrap());
        let sd = StructuredDeformation::uniform(BrokenField::zero(mesh), Mat::scalar(0.5), 2.0).unwrap();
        let r = lower_semicontinuity_probe(&sd, &[sd.clone(), sd.clone(), sd.clone()], &densities(), 1e-8).unwrap();
        assert!(r.holds);
        assert_eq!(r.slack, 0.0);
        assert!(r.l1_gaps.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn oscillating_strain_and_vanishing_jumps() {
        let d = densities();
        let coarse = Arc::new(Mesh::unit(1, 2).unwrap());
        let limit = StructuredDeformation::uniform(BrokenField::zero(coarse), Mat::zeros(1), 2.0).unwrap();
        let laminates: Vec<StructuredDeformation> = [4, 8, 16]
            .iter()
            .map(|&n| {
                let mesh = Arc::new(Mesh::unit(1, n).unwrap());
                let g: Vec<Mat> = (0..n).map(|c| Mat::scalar(if c % 2 == 0 { 1.0 } else { -1.0 })).collect();
                StructuredDeformation::new(BrokenField::zero(mesh), g, 2.0).unwrap()
            })
            .collect();
        let r = lower_semicontinuity_probe(&limit, &laminates, &d, 1e-6).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(r.moment_gaps.windows(2).all(|w| w[1] < w[0]));

        // a single jump of height 1/n at x = 1/2
        let jumps: Vec<StructuredDeformation> = [2.0, 4.0, 8.0]
            .iter()
            .map(|&k| {
                let mesh = Arc::new(Mesh::unit(1, 2).unwrap());
                let g =
                    BrokenField::from_fn(mesh, |c, _| CellData::affine(Vector::scalar(c as f64 / k), Mat::zeros(1)));
                StructuredDeformation::uniform(g.unwrap(), Mat::zeros(1), 2.0).unwrap()
            })
            .collect();
        let r = lower_semicontinuity_probe(&limit, &jumps, &d, 1e-6).unwrap();
        assert!(r.holds && r.limit_value == 0.0);
        assert!((r.l1_gaps[2] - 1.0 / 16.0).abs() < 1e-15);
    }
}
