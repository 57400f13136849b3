//! Constructive approximation of a structured deformation `(g, G)` by fields
//! `u_n = g + h − h_n` with `𝓔u_n = G`, where `𝓔h = G − 𝓔g` and `h_n` are cell
//! averages of `h` on the level-`n` partition.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::loglog_slope;
use crate::error::{Error, Result};
use crate::fields::{
    composite_cell_integral, decompose, l1_distance, BrokenField, CantorDescriptor, CellData, Frame, Mesh,
};
use crate::quadrature;
use crate::relaxation::StructuredDeformation;
use crate::tensor::{Mat, Vector};

/// Finest resolution (cells per axis) the construction will allocate.
pub const MAX_RESOLUTION: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlbertiMode {
    /// 1D continuous primitive `h(x) = ∫₀ˣ M`.
    Primitive,
    /// Per-cell `h|_c = M_c(x − x_c)` with zero offsets; jumps across facets.
    Laminate,
}

impl AlbertiMode {
    pub fn default_for(dim: usize) -> Self {
        if dim == 1 {
            AlbertiMode::Primitive
        } else {
            AlbertiMode::Laminate
        }
    }
}

#[derive(Clone, Debug)]
pub struct AlbertiPrimitive {
    pub h: BrokenField,
    /// `C` with `|Dh|(Ω) ≤ C‖M‖_{L¹}`: 1 for the primitive, `1 + 2N` for the laminate.
    pub constant: f64,
}

fn check_unit_mesh(mesh: &Mesh) -> Result<()> {
    if mesh.frame() != Frame::Standard || !mesh.is_full() {
        return Err(Error::MeshMismatch("the construction works on the full unit cube".into()));
    }
    Ok(())
}

/// `h` with `𝓔h = M` cellwise, in the default mode for the dimension.
pub fn alberti_primitive(mesh: &Arc<Mesh>, m: &[Mat]) -> Result<AlbertiPrimitive> {
    alberti_with(mesh, m, AlbertiMode::default_for(mesh.dim()))
}

pub fn alberti_with(mesh: &Arc<Mesh>, m: &[Mat], mode: AlbertiMode) -> Result<AlbertiPrimitive> {
    check_unit_mesh(mesh)?;
    let dim = mesh.dim();
    if m.len() != mesh.cells().len() {
        return Err(Error::MeshMismatch(format!("{} matrices for {} cells", m.len(), mesh.cells().len())));
    }
    if m.iter().any(|x| x.dim() != dim || !x.is_finite() || !x.is_symmetric(1e-12)) {
        return Err(Error::InvalidInput("M must be finite and symmetric".into()));
    }
    match mode {
        AlbertiMode::Primitive => {
            if dim != 1 {
                return Err(Error::Unsupported("the continuous primitive is one-dimensional".into()));
            }
            let h = mesh.h();
            let mut left = 0.0;
            let mut cells = Vec::with_capacity(m.len());
            for mc in m {
                let s = mc.get(0, 0);
                cells.push(CellData::affine(Vector::scalar(left + 0.5 * h * s), *mc));
                left += h * s;
            }
            Ok(AlbertiPrimitive { h: BrokenField::new(mesh.clone(), cells)?, constant: 1.0 })
        }
        AlbertiMode::Laminate => {
            let cells = m.iter().map(|mc| CellData::affine(Vector::zeros(dim), *mc)).collect();
            Ok(AlbertiPrimitive { h: BrokenField::new(mesh.clone(), cells)?, constant: 1.0 + 2.0 * dim as f64 })
        }
    }
}

/// Cell averages of `h` on the uniform level-`n` partition of the unit cube.
pub fn piecewise_constant_approx(h: &BrokenField, n: usize) -> Result<BrokenField> {
    if n == 0 {
        return Err(Error::InvalidInput("partition count must be ≥ 1".into()));
    }
    let src = h.mesh();
    check_unit_mesh(src)?;
    let dim = h.dim();
    let m = src.n();
    let target = Arc::new(Mesh::unit(dim, n)?);
    let rule = quadrature::gauss_legendre(2);
    // source cell ranges overlapping [lo, hi] along one axis
    let overlap = |lo: f64, hi: f64| {
        let first = ((lo * m as f64).floor() as usize).min(m - 1);
        let last = (((hi * m as f64).ceil() as usize).max(first + 1)).min(m);
        (first..last).filter_map(move |i| {
            let (a, b) = ((i as f64 / m as f64).max(lo), ((i + 1) as f64 / m as f64).min(hi));
            (b > a).then_some((i, a, b))
        })
    };
    let cells: Vec<CellData> = target
        .cells()
        .par_iter()
        .map(|cell| {
            let (tx, ty) = (cell.grid[0], cell.grid[1]);
            let span = |t: usize| (t as f64 / n as f64, (t + 1) as f64 / n as f64);
            let mut sum = Vector::zeros(dim);
            let mut vol = 0.0;
            // two Gauss points per axis: exact on each affine or quadratic piece
            let mut add = |c: usize, lo: [f64; 2], hi: [f64; 2]| {
                let (xs, ws) = rule;
                let ny = if dim == 2 { xs.len() } else { 1 };
                for (&xi, &wi) in xs.iter().zip(ws) {
                    for j in 0..ny {
                        let mut x = Vector::zeros(dim);
                        let mut w = 0.5 * (hi[0] - lo[0]) * wi;
                        x.set(0, 0.5 * (lo[0] + hi[0]) + 0.5 * (hi[0] - lo[0]) * xi);
                        if dim == 2 {
                            x.set(1, 0.5 * (lo[1] + hi[1]) + 0.5 * (hi[1] - lo[1]) * xs[j]);
                            w *= 0.5 * (hi[1] - lo[1]) * ws[j];
                        }
                        sum += h.value(c, &x).scale(w);
                    }
                }
                vol += (hi[0] - lo[0]) * if dim == 2 { hi[1] - lo[1] } else { 1.0 };
            };
            let (x0, x1) = span(tx);
            if dim == 1 {
                for (i, a, b) in overlap(x0, x1) {
                    add(src.cell_at_grid([i, 0]).expect("full mesh"), [a, 0.0], [b, 0.0]);
                }
            } else {
                let (y0, y1) = span(ty);
                for (i, a, b) in overlap(x0, x1) {
                    for (j, c, d) in overlap(y0, y1) {
                        add(src.cell_at_grid([i, j]).expect("full mesh"), [a, c], [b, d]);
                    }
                }
            }
            let mut avg = sum.scale(1.0 / vol);
            if let Some(k) = h.cantor() {
                let (x0, x1) = span(tx);
                let ci = |x: f64| CantorDescriptor::cantor_integral(x);
                avg += Vector::scalar(k.mass * (ci(x1) - ci(x0)) / (x1 - x0));
            }
            CellData::affine(avg, Mat::zeros(dim))
        })
        .collect();
    BrokenField::new(target, cells)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `g` with its Cantor part replaced by the level-`L` jump surrogate, each
/// jump snapped to the nearest interior facet.
pub fn cantor_surrogate(g: &BrokenField) -> Result<BrokenField> {
    let Some(k) = g.cantor() else { return Ok(g.clone()) };
    let mesh = g.mesh();
    let m = mesh.n();
    if m < 2 {
        return Err(Error::InvalidInput("the jump surrogate needs at least two cells".into()));
    }
    let mut offsets = vec![0.0; m];
    for (x, height) in k.surrogate_jumps() {
        let facet = ((x * m as f64).round() as usize).clamp(1, m - 1);
        for o in &mut offsets[facet..] {
            *o += height;
        }
    }
    let cells = (0..m)
        .map(|c| {
            let cell = mesh.cells()[c].grid[0];
            let mut cd = *g.cell(c);
            cd.a += Vector::scalar(offsets[cell]);
            cd
        })
        .collect();
    Ok(g.clone().without_cantor().with_cells(cells)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproxDiagnostics {
    pub n: usize,
    /// Cells per axis of the mesh carrying `u_n`.
    pub resolution: usize,
    pub mode: AlbertiMode,
    /// `max_c |𝓔u_n − G|`.
    pub strain_error: f64,
    pub l1_error: f64,
    /// `|Eu_n|(Ω)`.
    pub total_variation: f64,
    /// `|Eg|(Ω) + ‖G‖_{L¹}`.
    pub reference: f64,
    pub ratio: f64,
    pub constant: f64,
    /// `ratio ≤ constant + 1`.
    pub bound_ok: bool,
    pub gauss_green_residual: f64,
    /// Level of the jump surrogate that replaced a Cantor part.
    pub cantor_surrogate: Option<u32>,
}

/// `u_n` and its diagnostics in the default mode.
pub fn approximate(sd: &StructuredDeformation, n: usize) -> Result<(BrokenField, ApproxDiagnostics)> {
    approximate_with(sd, n, AlbertiMode::default_for(sd.dim()))
}

pub fn approximate_with(
    sd: &StructuredDeformation,
    n: usize,
    mode: AlbertiMode,
) -> Result<(BrokenField, ApproxDiagnostics)> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be ≥ 1".into()));
    }
    let mesh = sd.mesh();
    check_unit_mesh(mesh)?;
    if sd.g.has_hessian() {
        return Err(Error::Unsupported("g must be per-cell affine".into()));
    }
    let m = mesh.n();
    let res = m / gcd(m, n) * n;
    if res > MAX_RESOLUTION {
        return Err(Error::InvalidInput(format!("common resolution {res} exceeds {MAX_RESOLUTION}")));
    }
    let base = cantor_surrogate(&sd.g)?;
    let k = res / m;
    let g_fine = if k == 1 { base.clone() } else { base.refine(k)? };
    let fine = g_fine.mesh().clone();
    let big_g: Vec<Mat> = fine
        .cells()
        .iter()
        .map(|c| sd.big_g[mesh.cell_at_grid([c.grid[0] / k, c.grid[1] / k]).expect("parent cell")])
        .collect();
    let defect: Vec<Mat> = big_g.iter().zip(g_fine.cells()).map(|(gm, cd)| *gm - cd.z.sym()).collect();
    let alberti = alberti_with(&fine, &defect, mode)?;
    let h_n = piecewise_constant_approx(&alberti.h, n)?;
    let h_n = if res == n { h_n } else { h_n.refine(res / n)? };
    let u = g_fine.axpy(1.0, &alberti.h)?.axpy(-1.0, &h_n)?;

    let strain_error = u.cells().iter().zip(&big_g).fold(0.0_f64, |e, (cd, gm)| e.max((cd.z.sym() - *gm).max_abs()));
    let l1_error = l1_distance(&u, &sd.g)?;
    let dec = decompose(&u);
    let reference = sd.g.total_variation() + sd.g_norm_1();
    let ratio = if reference > 0.0 { dec.total_variation / reference } else { 0.0 };
    let diag = ApproxDiagnostics {
        n,
        resolution: res,
        mode,
        strain_error,
        l1_error,
        total_variation: dec.total_variation,
        reference,
        ratio,
        constant: alberti.constant,
        bound_ok: ratio <= alberti.constant + 1.0 + 1e-12,
        gauss_green_residual: dec.gauss_green_residual,
        cantor_surrogate: sd.g.cantor().map(|c| c.level),
    };
    Ok((u, diag))
}

/// `∂_k` of `η(x)·x^α` with the cutoff `η = Π x_i(1 − x_i)`.
fn test_gradient(alpha: [u32; 2], dim: usize, x: &Vector) -> Vector {
    let mono = |i: usize| x.get(i).powi(alpha[i] as i32);
    let dmono = |i: usize| if alpha[i] == 0 { 0.0 } else { alpha[i] as f64 * x.get(i).powi(alpha[i] as i32 - 1) };
    let eta = |i: usize| x.get(i) * (1.0 - x.get(i));
    let deta = |i: usize| 1.0 - 2.0 * x.get(i);
    let mut g = Vector::zeros(dim);
    for k in 0..dim {
        let mut v = deta(k) * mono(k) + eta(k) * dmono(k);
        for i in (0..dim).filter(|&i| i != k) {
            v *= eta(i) * mono(i);
        }
        g.set(k, v);
    }
    g
}

/// Pairings `⟨Eu, φ⟩ = −∫ u · div φ` over the dictionary `φ = η x^α E`,
/// `|α| ≤ 3`, `E` a symmetric unit basis matrix.
pub fn pairings(u: &BrokenField) -> Vec<f64> {
    let dim = u.dim();
    let mut alphas = Vec::new();
    for i in 0..=3u32 {
        if dim == 1 {
            alphas.push([i, 0]);
        } else {
            alphas.extend((0..=(3 - i)).map(|j| [i, j]));
        }
    }
    let basis: Vec<Mat> = if dim == 1 {
        vec![Mat::scalar(1.0)]
    } else {
        vec![Mat::sym2(1.0, 0.0, 0.0), Mat::sym2(0.0, 1.0, 0.0), Mat::sym2(0.0, 0.0, 1.0)]
    };
    // polynomial data of degree ≤ 5 per axis: one 3-point Gauss cell is exact
    let sub = if u.cantor().is_some() { 16 } else { 1 };
    let mut out = Vec::with_capacity(alphas.len() * basis.len());
    for alpha in &alphas {
        for e in &basis {
            let mut total = 0.0;
            for c in 0..u.cells().len() {
                total -= composite_cell_integral(u, c, sub, |x| {
                    u.value_with_cantor(c, x).dot(&e.mul_vec(&test_gradient(*alpha, dim, x)))
                });
            }
            out.push(total);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakStarReport {
    pub gaps: Vec<f64>,
    /// Gaps never increase beyond roundoff and the last is below the first
    /// (or all vanish).
    pub decreasing: bool,
    /// Log-log slope of gap against mesh resolution, when every gap is positive.
    pub slope: Option<f64>,
}

/// Maximal pairing gap of each `Eu_n` against `Eg` on the test dictionary.
pub fn weakstar_diagnostics(sequence: &[BrokenField], target: &BrokenField) -> Result<WeakStarReport> {
    if sequence.len() < 3 {
        return Err(Error::InvalidInput("weak-* diagnostics need at least three members".into()));
    }
    for u in sequence.iter().chain(std::iter::once(target)) {
        check_unit_mesh(u.mesh())?;
        if u.dim() != target.dim() {
            return Err(Error::DimensionMismatch { expected: target.dim(), got: u.dim() });
        }
    }
    let reference = pairings(target);
    let gaps: Vec<f64> = sequence
        .par_iter()
        .map(|u| pairings(u).iter().zip(&reference).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
        .collect();
    let scale = reference.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let noise = 1e-13 * scale;
    let decreasing = gaps.windows(2).all(|w| w[1] <= w[0] + noise)
        && (gaps[gaps.len() - 1] < gaps[0] || gaps.iter().all(|g| *g <= noise));
    let points: Vec<(f64, f64)> = sequence.iter().zip(&gaps).map(|(u, g)| (u.mesh().n() as f64, *g)).collect();
    let slope = if gaps.iter().all(|g| *g > noise) { loglog_slope(&points) } else { None };
    Ok(WeakStarReport { gaps, decreasing, slope })
}
