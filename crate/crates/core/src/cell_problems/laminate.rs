//! Laminate competitors: explicit upper-bound constructions and the
//! laminate-ansatz backend.

use std::sync::Arc;

use crate::densities::{BulkDensity, SurfaceDensity};
use crate::error::{Error, Result};
use crate::fields::{BrokenField, CellData, Mesh};
use crate::tensor::{Mat, Vector};

/// Bulk competitor with boundary datum `Ax` and mean strain `B`.
///
/// 1D: slope `B` everywhere and one jump `A − B` at the last interior facet.
/// 2D: the ring of boundary cells carries `Ax` and the interior the strain
/// `B'` that restores the mean.
pub(crate) fn bulk_laminate(mesh: &Arc<Mesh>, a: &Mat, b: &Mat) -> Result<BrokenField> {
    let n = mesh.n();
    match mesh.dim() {
        1 => {
            let last = n - 1;
            BrokenField::from_fn(mesh.clone(), |c, x| {
                if c == last {
                    let one = Vector::scalar(1.0);
                    CellData::affine(a.mul_vec(&one) + b.mul_vec(&(*x - one)), *b)
                } else {
                    CellData::affine(b.mul_vec(x), *b)
                }
            })
        }
        _ => {
            if n < 3 {
                return Err(Error::InvalidInput("2D bulk laminate needs n ≥ 3".into()));
            }
            let ring = |g: [usize; 2]| g[0] == 0 || g[1] == 0 || g[0] == n - 1 || g[1] == n - 1;
            let h2 = mesh.h() * mesh.h();
            let vol_ring = mesh.cells().iter().filter(|c| ring(c.grid)).count() as f64 * h2;
            let inner = (*b - a.scale(vol_ring)).scale(1.0 / (1.0 - vol_ring));
            let cells = mesh.cells().to_vec();
            BrokenField::from_fn(mesh.clone(), |c, x| {
                let m = if ring(cells[c].grid) { *a } else { inner };
                CellData::affine(m.mul_vec(x), m)
            })
        }
    }
}

/// Flat-interface competitor `u = v_{λ,ν}` sampled at cell centers.
pub(crate) fn surface_laminate(mesh: &Arc<Mesh>, lambda: &Vector, nu: &Vector) -> Result<BrokenField> {
    let dim = mesh.dim();
    BrokenField::from_fn(mesh.clone(), |_, x| {
        let a = if x.dot(nu) > 0.0 { *lambda } else { Vector::zeros(dim) };
        CellData::affine(a, Mat::zeros(dim))
    })
}

/// 1D two-phase laminate: slopes `s₁, s₂` with fractions `θ, 1−θ` averaging
/// to `B` on a grid, plus one jump `A − B`.
pub(crate) fn ansatz_1d_bulk(w: &BulkDensity, psi: &SurfaceDensity, x0: &Vector, a: f64, b: f64) -> f64 {
    let wv = |s: f64| w.eval(x0, &Mat::scalar(s));
    let mut bulk = wv(b);
    let radius = 4.0 * (1.0 + b.abs());
    let pts = 81;
    for i in 0..pts {
        let s1 = b - radius + 2.0 * radius * i as f64 / (pts - 1) as f64;
        for k in 1..20 {
            let theta = k as f64 / 20.0;
            let s2 = (b - theta * s1) / (1.0 - theta);
            bulk = bulk.min(theta * wv(s1) + (1.0 - theta) * wv(s2));
        }
    }
    let jump = a - b;
    let j = if jump == 0.0 { 0.0 } else { psi.eval(x0, &[jump], &Vector::scalar(1.0)) };
    bulk + j
}

/// Minimum over laminates of at most four interfaces parallel to the flat
/// one, the jumps `λ_i` summing to `λ` with components on a grid.
pub(crate) fn ansatz_surface(psi: &SurfaceDensity, x0: &Vector, lambda: &Vector, nu: &Vector) -> f64 {
    let dim = lambda.dim();
    let pv = |l: &Vector| if l.norm() == 0.0 { 0.0 } else { psi.eval_vec(x0, l, nu) };
    let mut best = pv(lambda);
    let scale = lambda.norm().max(1e-300);
    let steps: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.25 * scale).collect();
    let parts: Vec<Vector> = if dim == 1 {
        steps.iter().map(|&s| Vector::scalar(s)).collect()
    } else {
        steps.iter().flat_map(|&s| steps.iter().map(move |&t| Vector::new2(s, t))).collect()
    };
    // k interfaces: choose k − 1 parts, the last closes the sum
    let mut frontier: Vec<(Vector, f64)> = vec![(Vector::zeros(dim), 0.0)];
    for _ in 1..4 {
        let mut next = Vec::with_capacity(frontier.len() * parts.len());
        for (sum, cost) in &frontier {
            for p in &parts {
                let s = *sum + *p;
                let c = cost + pv(p);
                best = best.min(c + pv(&(*lambda - s)));
                if c < best {
                    next.push((s, c));
                }
            }
        }
        frontier = next;
        if frontier.len() > 20_000 {
            break;
        }
    }
    best
}
