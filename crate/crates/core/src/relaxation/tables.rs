//! Precomputed density tables with multilinear interpolation.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RelaxedDensities, SolvedDensities};
use crate::cell_problems::HSample;
use crate::densities::DensityId;
use crate::error::{Error, Result};
use crate::fields::JUMP_TOL;
use crate::tensor::{sym_len, Mat, Vector};

/// Identifies the densities and discretization a table was built with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fingerprint {
    pub w: DensityId,
    pub psi: DensityId,
    pub p: f64,
    pub dim: usize,
    pub n_bulk: usize,
    pub n_surface: usize,
    pub seed: u64,
}

impl Fingerprint {
    pub fn of(d: &SolvedDensities, seed: u64) -> Self {
        let dim = d.dim();
        Self {
            w: d.w().id().clone(),
            psi: d.psi().id().clone(),
            p: d.p(),
            dim,
            n_bulk: d.options().n_bulk(dim),
            n_surface: d.options().n_surface(dim),
            seed,
        }
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "W={} psi={} p={} dim={} n_bulk={} n_surface={} seed={}",
            self.w, self.psi, self.p, self.dim, self.n_bulk, self.n_surface, self.seed
        )
    }
}

/// Values on a tensor lattice; the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeTable {
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl LatticeTable {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        check_axes(&axes)?;
        let count: usize = axes.iter().map(Vec::len).product();
        if values.len() != count {
            return Err(Error::InvalidInput(format!("lattice has {count} nodes but {} values", values.len())));
        }
        Ok(Self { axes, values })
    }

    /// Lattice points in storage order.
    pub fn nodes(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new()];
        for axis in axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Multilinear interpolation; `None` outside the lattice box.
    pub fn interpolate(&self, q: &[f64]) -> Option<f64> {
        if q.len() != self.axes.len() {
            return None;
        }
        let mut lo = Vec::with_capacity(q.len());
        let mut t = Vec::with_capacity(q.len());
        for (axis, &x) in self.axes.iter().zip(q) {
            let (first, last) = (axis[0], axis[axis.len() - 1]);
            if !(x >= first && x <= last) {
                return None;
            }
            if axis.len() == 1 {
                lo.push(0);
                t.push(0.0);
                continue;
            }
            // largest i with axis[i] ≤ x, kept below the last node
            let i = axis.partition_point(|&v| v <= x).saturating_sub(1).min(axis.len() - 2);
            lo.push(i);
            t.push((x - axis[i]) / (axis[i + 1] - axis[i]));
        }
        let mut strides = vec![1usize; q.len()];
        for k in (0..q.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.axes[k + 1].len();
        }
        let mut sum = 0.0;
        for corner in 0..(1usize << q.len()) {
            let mut weight = 1.0;
            let mut idx = 0;
            for k in 0..q.len() {
                let up = corner >> k & 1 == 1;
                if up && self.axes[k].len() == 1 {
                    weight = 0.0;
                    break;
                }
                weight *= if up { t[k] } else { 1.0 - t[k] };
                idx += (lo[k] + usize::from(up)) * strides[k];
            }
            if weight != 0.0 {
                sum += weight * self.values[idx];
            }
        }
        Some(sum)
    }
}

fn check_axes(axes: &[Vec<f64>]) -> Result<()> {
    for a in axes {
        if a.is_empty() || a.iter().any(|v| !v.is_finite()) || a.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("lattice axes must be nonempty, finite and strictly increasing".into()));
        }
    }
    Ok(())
}

/// `h_p` on `([φ_ν,] [|λ|,] θ)` in 2D or on `λ·ν` in 1D. With
/// `homogeneous` the magnitude axis is dropped and `h = |λ|·table(direction)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceTable {
    pub homogeneous: bool,
    /// 2D only: the orientation of `ν` is a lattice axis.
    pub nu_axis: bool,
    pub table: LatticeTable,
}

impl SurfaceTable {
    /// Lattice coordinates and the homogeneity factor of a query.
    fn coords(&self, dim: usize, lambda: &Vector, nu: &Vector) -> (Vec<f64>, f64) {
        if dim == 1 {
            let s = lambda.get(0) * nu.get(0);
            return if self.homogeneous { (vec![s.signum()], s.abs()) } else { (vec![s], 1.0) };
        }
        let perp = Vector::new2(-nu.get(1), nu.get(0));
        let theta = lambda.dot(&perp).atan2(lambda.dot(nu));
        let mut c = Vec::with_capacity(3);
        if self.nu_axis {
            c.push(nu.get(1).atan2(nu.get(0)));
        }
        if self.homogeneous {
            c.push(theta);
            (c, lambda.norm())
        } else {
            c.push(lambda.norm());
            c.push(theta);
            (c, 1.0)
        }
    }

    /// The `(λ, ν)` represented by a lattice node.
    fn query(&self, dim: usize, node: &[f64]) -> (Vector, Vector) {
        if dim == 1 {
            return (Vector::scalar(node[0]), Vector::scalar(1.0));
        }
        let mut it = node.iter().copied();
        let nu = if self.nu_axis {
            let phi = it.next().expect("ν axis");
            Vector::new2(phi.cos(), phi.sin())
        } else {
            Vector::new2(1.0, 0.0)
        };
        let r = if self.homogeneous { 1.0 } else { it.next().expect("radius axis") };
        let theta = it.next().expect("angle axis");
        let perp = Vector::new2(-nu.get(1), nu.get(0));
        (nu.scale(r * theta.cos()) + perp.scale(r * theta.sin()), nu)
    }
}

/// Which tables to build and on which lattices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSpec {
    /// One axis per symmetric coordinate of `A`, then of `B`; empty skips `H`.
    pub bulk_axes: Vec<Vec<f64>>,
    pub surface: bool,
    /// Magnitudes `|λ| > 0` used when `h` is not homogeneous (`p = 1`).
    pub surface_radii: Vec<f64>,
    /// 2D: angle nodes over `[−π, π]`.
    pub surface_angles: usize,
    pub recession: bool,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self { bulk_axes: Vec::new(), surface: false, surface_radii: Vec::new(), surface_angles: 17, recession: false }
    }
}

impl LatticeSpec {
    /// 1D `(A, B)` lattice on the same nodes along both axes.
    pub fn bulk_1d(nodes: Vec<f64>) -> Self {
        Self { bulk_axes: vec![nodes.clone(), nodes], ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.bulk_axes.is_empty() && !self.surface && !self.recession
    }
}

fn angle_axis(k: usize) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    (0..k).map(|i| -pi + 2.0 * pi * i as f64 / (k - 1) as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityTables {
    pub fingerprint: Fingerprint,
    pub bulk: Option<LatticeTable>,
    pub surface: Option<SurfaceTable>,
    /// `H^∞(d, 0)` on the axis `d ∈ {−1, 1}` (1D).
    pub recession: Option<LatticeTable>,
}

impl DensityTables {
    fn dim(&self) -> usize {
        self.fingerprint.dim
    }

    pub fn bulk_value(&self, a: &Mat, b: &Mat) -> Option<f64> {
        let t = self.bulk.as_ref()?;
        let mut q = a.sym_coords();
        q.extend(b.sym_coords());
        t.interpolate(&q)
    }

    pub fn surface_value(&self, lambda: &Vector, nu: &Vector) -> Option<f64> {
        if lambda.norm() <= JUMP_TOL {
            return Some(0.0);
        }
        let s = self.surface.as_ref()?;
        let (q, factor) = s.coords(self.dim(), lambda, nu);
        s.table.interpolate(&q).map(|v| factor * v)
    }

    pub fn recession_value(&self, direction: f64) -> Option<f64> {
        self.recession.as_ref()?.interpolate(&[direction.signum()])
    }

    /// Bulk nodes as `(A, B, H)` samples.
    pub fn bulk_samples(&self) -> Vec<HSample> {
        let Some(t) = &self.bulk else { return Vec::new() };
        let dim = self.dim();
        let k = sym_len(dim);
        LatticeTable::nodes(&t.axes)
            .into_iter()
            .zip(&t.values)
            .map(|(n, &value)| HSample {
                a: Mat::from_sym_coords(dim, &n[..k]),
                b: Mat::from_sym_coords(dim, &n[k..]),
                value,
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

fn solve_nodes(nodes: &[Vec<f64>], f: impl Fn(&[f64]) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    let out: Vec<Result<f64>> = nodes.par_iter().map(|n| f(n)).collect();
    out.into_iter().collect()
}

/// Solves every lattice node (in parallel). The bulk table needs an
/// x-independent `W`; densities are frozen at the cell center.
pub fn build_density_tables(densities: &SolvedDensities, lattice: &LatticeSpec, seed: u64) -> Result<DensityTables> {
    if lattice.is_empty() {
        return Err(Error::InvalidInput("empty spec".into()));
    }
    let dim = densities.dim();
    let x0 = Vector::filled(dim, 0.5);
    let k = sym_len(dim);

    let bulk = if lattice.bulk_axes.is_empty() {
        None
    } else {
        if densities.w().x_dependent {
            return Err(Error::Unsupported("bulk tables need an x-independent W".into()));
        }
        if lattice.bulk_axes.len() != 2 * k {
            return Err(Error::InvalidInput(format!(
                "bulk lattice needs {} axes, got {}",
                2 * k,
                lattice.bulk_axes.len()
            )));
        }
        check_axes(&lattice.bulk_axes)?;
        let nodes = LatticeTable::nodes(&lattice.bulk_axes);
        let values = solve_nodes(&nodes, |n| {
            densities.bulk(&x0, &Mat::from_sym_coords(dim, &n[..k]), &Mat::from_sym_coords(dim, &n[k..]))
        })?;
        Some(LatticeTable::new(lattice.bulk_axes.clone(), values)?)
    };

    let surface = if lattice.surface {
        let homogeneous = densities.p() > 1.0;
        let nu_axis = dim == 2 && !(homogeneous && densities.psi().flags.jointly_isotropic);
        if !homogeneous && (lattice.surface_radii.is_empty() || lattice.surface_radii.iter().any(|r| !(*r > 0.0))) {
            return Err(Error::InvalidInput("p = 1 surface tables need positive radii".into()));
        }
        if dim == 2 && lattice.surface_angles < 3 {
            return Err(Error::InvalidInput("surface tables need at least 3 angle nodes".into()));
        }
        let mut radii = lattice.surface_radii.clone();
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        let axes: Vec<Vec<f64>> = match (dim, homogeneous) {
            (1, true) => vec![vec![-1.0, 1.0]],
            (1, false) => {
                let mut s: Vec<f64> = radii.iter().rev().map(|r| -r).collect();
                s.push(0.0);
                s.extend(&radii);
                vec![s]
            }
            (_, h) => {
                let mut a = Vec::new();
                if nu_axis {
                    a.push(angle_axis(lattice.surface_angles));
                }
                if !h {
                    let mut r = vec![0.0];
                    r.extend(&radii);
                    a.push(r);
                }
                a.push(angle_axis(lattice.surface_angles));
                a
            }
        };
        check_axes(&axes)?;
        let shell =
            SurfaceTable { homogeneous, nu_axis, table: LatticeTable { axes: axes.clone(), values: Vec::new() } };
        let nodes = LatticeTable::nodes(&axes);
        let values = solve_nodes(&nodes, |n| {
            let (lambda, nu) = shell.query(dim, n);
            densities.surface(&x0, &lambda, &nu)
        })?;
        Some(SurfaceTable { table: LatticeTable::new(axes, values)?, ..shell })
    } else {
        None
    };

    let recession = if lattice.recession {
        if dim != 1 {
            return Err(Error::Unsupported("recession tables are one-dimensional".into()));
        }
        let axes = vec![vec![-1.0, 1.0]];
        let values = solve_nodes(&LatticeTable::nodes(&axes), |n| densities.cantor(n[0]))?;
        Some(LatticeTable::new(axes, values)?)
    } else {
        None
    };

    Ok(DensityTables { fingerprint: Fingerprint::of(densities, seed), bulk, surface, recession })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multilinear_is_exact_at_nodes_and_on_affine_data() {
        let axes = vec![vec![-1.0, 0.0, 2.0], vec![0.0, 0.5, 1.0, 3.0]];
        let f = |p: &[f64]| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
        let nodes = LatticeTable::nodes(&axes);
        let t = LatticeTable::new(axes, nodes.iter().map(|n| f(n)).collect()).unwrap();
        for n in &nodes {
            assert_eq!(t.interpolate(n), Some(f(n)));
        }
        assert!((t.interpolate(&[0.7, 2.1]).unwrap() - f(&[0.7, 2.1])).abs() < 1e-14);
        assert_eq!(t.interpolate(&[2.1, 0.0]), None);
    }

    #[test]
    fn surface_coordinates_round_trip() {
        let s = SurfaceTable {
            homogeneous: false,
            nu_axis: true,
            table: LatticeTable { axes: Vec::new(), values: Vec::new() },
        };
        let node = [0.4, 1.5, -2.0];
        let (l, n) = s.query(2, &node);
        let (c, f) = s.coords(2, &l, &n);
        assert_eq!(f, 1.0);
        for (a, b) in c.iter().zip(node) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
