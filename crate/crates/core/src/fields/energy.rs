//! Energies, measure decomposition and the Korn-Poincaré gap of broken fields.

use serde::Serialize;

use super::field::{BrokenField, CantorDescriptor};
use super::mesh::{Facet, FacetRule};
use crate::densities::{BulkDensity, SurfaceDensity};
use crate::error::{Error, Result};
use crate::tensor::{Mat, Vector};

/// Jumps smaller than this are treated as roundoff.
pub const JUMP_TOL: f64 = 1e-12;

/// Jump values at facet quadrature points.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpTrace {
    pub normal: Vector,
    /// `(point, weight, [u](point))`.
    pub points: Vec<(Vector, f64, Vector)>,
}

impl JumpTrace {
    pub fn max_abs(&self) -> f64 {
        self.points.iter().fold(0.0, |m, p| m.max(p.2.norm()))
    }
}

pub fn jump_trace(field: &BrokenField, facet: &Facet, rule: FacetRule) -> Result<JumpTrace> {
    if facet.plus.is_none() {
        return Err(Error::InvalidInput("jump_trace needs an interior facet".into()));
    }
    let points = facet.quadrature(rule).into_iter().map(|(x, w)| (x, w, field.jump_at(facet, &x))).collect();
    Ok(JumpTrace { normal: facet.normal, points })
}

/// `∫_Ω W(x, 𝓔u)`; midpoint in x for affine cells, Gauss for quadratic ones.
pub fn bulk_energy(field: &BrokenField, w: &BulkDensity) -> f64 {
    let mesh = field.mesh();
    let mut total = 0.0;
    for (c, cell) in mesh.cells().iter().enumerate() {
        let cd = field.cell(c);
        total += match cd.h {
            None => cell.volume * w.eval(&cell.center, &cd.z.sym()),
            Some(_) => mesh
                .cell_gauss(c, 3)
                .into_iter()
                .map(|(d, wt)| {
                    let x = cell.center + d;
                    wt * w.eval(&x, &field.gradient(c, &x).sym())
                })
                .sum(),
        };
    }
    total
}

/// `Σ_f ∫_f ψ(x, [u], ν_f)` over interior facets.
pub fn surface_energy(field: &BrokenField, psi: &SurfaceDensity, rule: FacetRule) -> f64 {
    let mut total = 0.0;
    for f in field.mesh().interior_facets() {
        let pts: Vec<(Vector, f64, Vector)> =
            f.quadrature(rule).into_iter().map(|(x, w)| (x, w, field.jump_at(f, &x))).collect();
        if pts.iter().all(|p| p.2.norm() < JUMP_TOL) {
            continue;
        }
        total += pts.iter().map(|(x, w, j)| w * psi.eval_vec(x, j, &f.normal)).sum::<f64>();
    }
    total
}

/// `Σ_f ∫_f Ψ(x, [∇u], ν_f)` over interior facets, λ flattened row-major.
pub fn gradient_jump_energy(field: &BrokenField, big_psi: &SurfaceDensity, rule: FacetRule) -> f64 {
    let mut total = 0.0;
    for f in field.mesh().interior_facets() {
        let pts: Vec<(Vector, f64, Mat)> =
            f.quadrature(rule).into_iter().map(|(x, w)| (x, w, field.gradient_jump_at(f, &x))).collect();
        if pts.iter().all(|p| p.2.norm() < JUMP_TOL) {
            continue;
        }
        total += pts.iter().map(|(x, w, j)| w * big_psi.eval(x, &j.flat(), &f.normal)).sum::<f64>();
    }
    total
}

/// `∫_Ω |∇²u|²` (Hessians are constant per cell).
pub fn second_gradient_energy(field: &BrokenField) -> f64 {
    field
        .mesh()
        .cells()
        .iter()
        .zip(field.cells())
        .map(|(cell, cd)| cd.h.map_or(0.0, |h| cell.volume * h.norm_sq()))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureDecomposition {
    pub ac_part: Vec<Vec<f64>>,
    pub jump_part: Vec<Vec<f64>>,
    pub cantor_mass: f64,
    pub total_variation: f64,
    pub boundary_flux: Vec<Vec<f64>>,
    /// `|ac + jump + cantor − flux|_∞`.
    pub gauss_green_residual: f64,
}

impl MeasureDecomposition {
    pub fn ac(&self) -> Mat {
        Mat::from_rows(&self.ac_part).expect("square")
    }

    pub fn jump(&self) -> Mat {
        Mat::from_rows(&self.jump_part).expect("square")
    }

    pub fn flux(&self) -> Mat {
        Mat::from_rows(&self.boundary_flux).expect("square")
    }
}

/// Boundary flux `∫_{∂Ω} tr(u) ⊗ ν` (full gradient), Cantor part included.
pub fn boundary_flux_full(field: &BrokenField) -> Mat {
    let dim = field.dim();
    let mut flux = Mat::zeros(dim);
    for f in field.mesh().boundary_facets() {
        for (x, w) in f.gauss(3) {
            flux += Mat::outer(&field.value_with_cantor(f.minus, &x), &f.normal).scale(w);
        }
    }
    flux
}

/// Decomposition `Eu = 𝓔u + [u]⊙ν H^{N−1}⌊J_u + E^c u` with the
/// Gauss-Green residual against the boundary flux.
pub fn decompose(field: &BrokenField) -> MeasureDecomposition {
    let mesh = field.mesh();
    let dim = field.dim();
    let mut ac = Mat::zeros(dim);
    let mut tv = 0.0;
    for (c, cell) in mesh.cells().iter().enumerate() {
        let cd = field.cell(c);
        // a Hessian integrates to zero over the symmetric cell
        ac += cd.z.sym().scale(cell.volume);
        tv += match cd.h {
            None => cd.z.sym().norm() * cell.volume,
            Some(_) => mesh
                .cell_gauss(c, 3)
                .into_iter()
                .map(|(d, w)| w * field.gradient(c, &(cell.center + d)).sym().norm())
                .sum(),
        };
    }
    let mut jump = Mat::zeros(dim);
    for f in mesh.interior_facets() {
        let pts: Vec<(Vector, f64, Vector)> =
            f.gauss(3).into_iter().map(|(x, w)| (x, w, field.jump_at(f, &x))).collect();
        if pts.iter().all(|p| p.2.norm() < JUMP_TOL) {
            continue;
        }
        for (_, w, j) in &pts {
            let m = Mat::sym_outer(j, &f.normal);
            jump += m.scale(*w);
            tv += w * m.norm();
        }
    }
    let cantor = field.cantor().map_or(0.0, |c| c.mass);
    tv += cantor.abs();
    let flux = boundary_flux_full(field).sym();
    let mut residual = ac + jump - flux;
    if dim == 1 {
        residual += Mat::scalar(cantor);
    }
    MeasureDecomposition {
        ac_part: ac.rows(),
        jump_part: jump.rows(),
        cantor_mass: cantor.abs(),
        total_variation: tv,
        boundary_flux: flux.rows(),
        gauss_green_residual: residual.max_abs(),
    }
}

/// `∫_Ω |u − v|` for a constant `v` (Cantor part included).
pub fn l1_distance_to_constant(field: &BrokenField, v: &Vector) -> f64 {
    let mesh = field.mesh();
    let exact_1d = field.dim() == 1 && field.cantor().is_none() && !field.has_hessian();
    let mut total = 0.0;
    for (c, cell) in mesh.cells().iter().enumerate() {
        if exact_1d {
            // |α + βs| on s ∈ [−h/2, h/2]
            let alpha = field.cell(c).a.get(0) - v.get(0);
            let beta = field.cell(c).z.get(0, 0) * mesh.axis(0).get(0);
            total += abs_affine_integral(alpha, beta, 0.5 * mesh.h());
        } else {
            total += composite_cell_integral(field, c, 16, |x| (field.value_with_cantor(c, x) - *v).norm());
            let _ = cell;
        }
    }
    total
}

/// `‖u − v‖_{L¹}` for fields on nested unit meshes.
pub fn l1_distance(u: &BrokenField, v: &BrokenField) -> Result<f64> {
    let (nu, nv) = (u.mesh().n(), v.mesh().n());
    let (fine, coarse) = if nu >= nv { (u, v) } else { (v, u) };
    let (nf, nc) = (fine.mesh().n(), coarse.mesh().n());
    if nf % nc != 0 {
        return Err(Error::MeshMismatch(format!("resolutions {nf} and {nc} are not nested")));
    }
    let lifted = if nf == nc { coarse.clone() } else { coarse.refine(nf / nc)? };
    let diff = fine.axpy(-1.0, &lifted)?;
    Ok(l1_distance_to_constant(&diff, &Vector::zeros(u.dim())))
}

/// `∫_{−r}^{r} |α + βs| ds`.
pub(crate) fn abs_affine_integral(alpha: f64, beta: f64, r: f64) -> f64 {
    if beta == 0.0 {
        return 2.0 * r * alpha.abs();
    }
    let s0 = -alpha / beta;
    let prim = |s: f64| alpha * s + 0.5 * beta * s * s;
    if s0 <= -r || s0 >= r {
        (prim(r) - prim(-r)).abs()
    } else {
        (prim(s0) - prim(-r)).abs() + (prim(r) - prim(s0)).abs()
    }
}

/// Composite 3-point Gauss over `k^N` sub-cells of cell `c`.
pub(crate) fn composite_cell_integral(field: &BrokenField, c: usize, k: usize, f: impl Fn(&Vector) -> f64) -> f64 {
    let mesh = field.mesh();
    let center = mesh.cells()[c].center;
    let h = mesh.h();
    let sub = h / k as f64;
    let rule = crate::quadrature::scaled(3, 0.5 * sub);
    let mut total = 0.0;
    match field.dim() {
        1 => {
            for i in 0..k {
                let mid = -0.5 * h + (i as f64 + 0.5) * sub;
                for &(s, w) in &rule {
                    total += w * f(&(center + mesh.axis(0).scale(mid + s)));
                }
            }
        }
        _ => {
            for i in 0..k {
                for j in 0..k {
                    let mi = -0.5 * h + (i as f64 + 0.5) * sub;
                    let mj = -0.5 * h + (j as f64 + 0.5) * sub;
                    for &(s, ws) in &rule {
                        for &(t, wt) in &rule {
                            let x = center + mesh.axis(0).scale(mi + s) + mesh.axis(1).scale(mj + t);
                            total += ws * wt * f(&x);
                        }
                    }
                }
            }
        }
    }
    total
}

/// `∫_Ω u` including the Cantor component.
pub fn integral(field: &BrokenField) -> Vector {
    let mesh = field.mesh();
    let mut s = Vector::zeros(field.dim());
    for (c, cell) in mesh.cells().iter().enumerate() {
        s += field.cell_average(c).scale(cell.volume);
    }
    if let Some(k) = field.cantor() {
        s += Vector::scalar(k.mass * CantorDescriptor::cantor_integral(1.0));
    }
    s
}

pub fn mean(field: &BrokenField) -> Vector {
    integral(field).scale(1.0 / field.mesh().volume())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KornPoincareGap {
    pub lhs: f64,
    pub rhs_core: f64,
    pub ratio: Option<f64>,
}

/// `‖u − ū‖_{L¹}` against `|Eu|(Ω) + |Du(Ω)|`, with `Du(Ω)` from the
/// boundary flux.
pub fn korn_poincare_gap(field: &BrokenField) -> Result<KornPoincareGap> {
    let lhs = l1_distance_to_constant(field, &mean(field));
    let tv = decompose(field).total_variation;
    let du = boundary_flux_full(field);
    let rhs_core = tv + du.norm();
    if rhs_core <= 1e-14 {
        if lhs > 1e-10 {
            return Err(Error::KornPoincare { lhs });
        }
        return Ok(KornPoincareGap { lhs, rhs_core, ratio: None });
    }
    Ok(KornPoincareGap { lhs, rhs_core, ratio: Some(lhs / rhs_core) })
}
