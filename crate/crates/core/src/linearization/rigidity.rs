//! Level-set construction of the exceptional set `S_δ` and the three
//! quantities bounded by the rigidity estimate.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{deformation, eval_F_dis, NonsimpleConfig};
use crate::error::{Error, Result};
use crate::fields::{l1_distance_to_constant, BrokenField};
use crate::tensor::{Mat, Vector};

#[derive(Clone, Debug, Serialize)]
pub struct RigidityOptions {
    /// Candidate offsets of the level grid, as fractions `k/offsets` of `T_δ`.
    pub offsets: usize,
    /// Reject the family when some `F_δ^dis(u_δ)` exceeds this value.
    pub energy_bound: Option<f64>,
}

impl Default for RigidityOptions {
    fn default() -> Self {
        Self { offsets: 16, energy_bound: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RigidityReport {
    pub delta: f64,
    pub energy: f64,
    /// Level spacing `T_δ = δ^γ`.
    pub spacing: f64,
    /// Chosen grid offset as a fraction of the spacing.
    pub offset: f64,
    /// Cells of `S_δ`.
    pub exceptional: Vec<usize>,
    pub s_volume: f64,
    /// `H^{N−1}(∂S_δ ∩ Ω)`: boundary points in 1D, edge length in 2D.
    pub perimeter: f64,
    pub l1_norm: f64,
    /// `‖∇u_δ‖_{L∞(Ω∖S_δ)} / δ^{γ−1}`.
    pub gradient_bound: f64,
    /// `‖𝓔u_δ‖_{L²(Ω∖S_δ)}`.
    pub strain_l2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RigidityDiagnostics {
    pub reports: Vec<RigidityReport>,
    /// Largest `‖u‖_{L¹}`, scaled gradient and strain norm over the family.
    pub constants: [f64; 3],
    /// Per quantity: the maximum over the later half of the family is within
    /// twice the maximum over the earlier half.
    pub stable: [bool; 3],
    /// The last perimeter does not exceed the first.
    pub perimeter_decreasing: bool,
}

impl RigidityDiagnostics {
    pub fn bounded(&self) -> bool {
        self.stable.iter().all(|&s| s)
    }
}

/// Level index of every gradient component for one cell.
fn level_key(z: &Mat, spacing: f64, offset: f64) -> Vec<i64> {
    z.flat().iter().map(|x| ((x - offset) / spacing).floor() as i64).collect()
}

fn crossing_perimeter(u: &BrokenField, keys: &[Vec<i64>]) -> f64 {
    u.mesh().interior_facets().iter().filter(|f| keys[f.minus] != keys[f.plus.expect("interior")]).map(|f| f.area).sum()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Cells outside the largest connected component of equal level keys.
fn exceptional_set(y: &BrokenField, keys: &[Vec<i64>]) -> Vec<usize> {
    let mesh = y.mesh();
    let n = mesh.cells().len();
    let mut parent: Vec<usize> = (0..n).collect();
    for f in mesh.interior_facets() {
        let p = f.plus.expect("interior");
        if keys[f.minus] == keys[p] {
            let (a, b) = (find(&mut parent, f.minus), find(&mut parent, p));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut volume: BTreeMap<usize, f64> = BTreeMap::new();
    for c in 0..n {
        let r = find(&mut parent, c);
        *volume.entry(r).or_default() += mesh.cells()[c].volume;
    }
    // largest volume, ties to the lowest root
    let best = volume.iter().fold((usize::MAX, -1.0), |acc, (&r, &v)| if v > acc.1 { (r, v) } else { acc }).0;
    (0..n).filter(|&c| find(&mut parent, c) != best).collect()
}

fn max_gradient(u: &BrokenField, c: usize) -> f64 {
    let cd = u.cell(c);
    match cd.h {
        None => cd.z.norm(),
        // |∇u| is convex along the cell, so its maximum sits at a vertex
        Some(_) => u.mesh().cell_vertices(c).iter().map(|x| u.gradient(c, x).norm()).fold(0.0, f64::max),
    }
}

fn strain_sq(u: &BrokenField, c: usize) -> f64 {
    let mesh = u.mesh();
    let cell = &mesh.cells()[c];
    let cd = u.cell(c);
    match cd.h {
        None => cell.volume * cd.z.sym().norm().powi(2),
        Some(_) => mesh
            .cell_gauss(c, 3)
            .into_iter()
            .map(|(d, w)| w * u.gradient(c, &(cell.center + d)).sym().norm().powi(2))
            .sum(),
    }
}

fn report(delta: f64, u: &BrokenField, cfg: &NonsimpleConfig, opts: &RigidityOptions) -> Result<RigidityReport> {
    let cfg = cfg.with_delta(delta)?;
    let energy = eval_F_dis(u, &cfg);
    if !energy.is_finite() {
        return Err(Error::UnboundedEnergy(format!("F_dis is infinite at δ = {delta}")));
    }
    if let Some(b) = opts.energy_bound.filter(|b| energy > *b) {
        return Err(Error::UnboundedEnergy(format!("F_dis = {energy:e} exceeds {b:e} at δ = {delta}")));
    }
    let y = deformation(u, delta)?;
    let spacing = delta.powf(cfg.gamma);
    let grads: Vec<Mat> = y.cells().iter().map(|cd| cd.z).collect();
    let mut best: Option<(f64, f64, Vec<Vec<i64>>)> = None;
    for k in 0..opts.offsets.max(1) {
        let offset = k as f64 / opts.offsets.max(1) as f64 * spacing;
        let keys: Vec<Vec<i64>> = grads.iter().map(|z| level_key(z, spacing, offset)).collect();
        let p = crossing_perimeter(&y, &keys);
        if best.as_ref().is_none_or(|b| p < b.0) {
            best = Some((p, offset, keys));
        }
    }
    let (_, offset, keys) = best.expect("at least one offset");
    let exceptional = exceptional_set(&y, &keys);
    let mesh = y.mesh();
    let mut in_s = vec![false; mesh.cells().len()];
    for &c in &exceptional {
        in_s[c] = true;
    }
    let perimeter = mesh
        .interior_facets()
        .iter()
        .filter(|f| in_s[f.minus] != in_s[f.plus.expect("interior")])
        .map(|f| f.area)
        .fold(0.0, |a, b| a + b);
    let s_volume = exceptional.iter().map(|&c| mesh.cells()[c].volume).fold(0.0, |a, b| a + b);
    let good = (0..mesh.cells().len()).filter(|&c| !in_s[c]);
    let grad_sup = good.clone().map(|c| max_gradient(u, c)).fold(0.0, f64::max);
    let strain_l2 = good.map(|c| strain_sq(u, c)).sum::<f64>().sqrt();
    Ok(RigidityReport {
        delta,
        energy,
        spacing,
        offset: offset / spacing,
        exceptional,
        s_volume,
        perimeter,
        l1_norm: l1_distance_to_constant(u, &Vector::zeros(u.dim())),
        gradient_bound: grad_sup * delta.powf(1.0 - cfg.gamma),
        strain_l2,
    })
}

/// Builds `S_δ` for each member `(δ, u_δ)` of a family ordered by decreasing δ.
pub fn rigidity_diagnostics(
    family: &[(f64, BrokenField)],
    cfg: &NonsimpleConfig,
    opts: &RigidityOptions,
) -> Result<RigidityDiagnostics> {
    if family.is_empty() {
        return Err(Error::InvalidInput("empty family".into()));
    }
    if family.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(Error::Schedule("δ must decrease along the family".into()));
    }
    let reports: Vec<RigidityReport> =
        family.par_iter().map(|(d, u)| report(*d, u, cfg, opts)).collect::<Result<Vec<_>>>()?;
    let series = |f: fn(&RigidityReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let quantities = [series(|r| r.l1_norm), series(|r| r.gradient_bound), series(|r| r.strain_l2)];
    let mut constants = [0.0; 3];
    let mut stable = [true; 3];
    let half = reports.len().div_ceil(2);
    for (k, q) in quantities.iter().enumerate() {
        let head = q[..half].iter().copied().fold(0.0, f64::max);
        let all = q.iter().copied().fold(0.0, f64::max);
        constants[k] = all;
        stable[k] = all <= 2.0 * head + 1e-12 && all.is_finite();
    }
    let perimeter_decreasing = reports.last().expect("nonempty").perimeter <= reports[0].perimeter + 1e-12;
    Ok(RigidityDiagnostics { reports, constants, stable, perimeter_decreasing })
}
