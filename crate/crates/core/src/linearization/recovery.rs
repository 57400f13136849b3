//! Recovery families `u_δ` for a structured deformation and the gap between
//! `F_δ^dis(u_δ)` and the linearized relaxed energy.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::{deformation, displacement, eval_F_dis_terms, normalize_frame, NonsimpleConfig, FD_STEP};
use crate::approximation::{approximate, piecewise_constant_approx, weakstar_diagnostics, WeakStarReport};
use crate::densities::{linearize, loglog_slope};
use crate::error::{Error, Result};
use crate::fields::{l1_distance, mean, BrokenField, CellData};
use crate::relaxation::{evaluate_Ip, RelaxOptions, RelaxationBreakdown, StructuredDeformation};
use crate::tensor::{Hess, Mat, Vector};

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryOptions {
    /// The partition count is the next power of two at or above `cells_per_delta / δ`.
    pub cells_per_delta: f64,
    pub max_resolution: usize,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self { cells_per_delta: 4.0, max_resolution: 1 << 12 }
    }
}

/// Partition count `n(δ)` of the approximating fields.
pub fn resolution_for(delta: f64, opts: &RecoveryOptions) -> usize {
    let want = (opts.cells_per_delta / delta).ceil().max(1.0);
    let n = if want >= opts.max_resolution as f64 { opts.max_resolution } else { (want as usize).next_power_of_two() };
    n.min(opts.max_resolution).max(1)
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryMember {
    pub delta: f64,
    pub n: usize,
    pub cap: f64,
    pub grad_sup: f64,
    pub hess_sup: f64,
    pub kinks_smoothed: usize,
    /// `‖u_δ − (g − ḡ)‖_{L¹}`.
    pub l1_error: f64,
    #[serde(skip)]
    pub u: BrokenField,
}

/// Replaces every kink of a 1D per-cell affine field by a linear ramp of the
/// gradient over the fewest whole cells that keep `‖∇u‖_∞ + ‖∇²u‖_∞ ≤ cap`.
/// Values and jumps are unchanged outside the ramps and at their centers.
pub fn smooth_kinks(u: &BrokenField, cap: f64) -> Result<(BrokenField, usize)> {
    if u.dim() != 1 || u.has_hessian() {
        return Err(Error::Unsupported("kink smoothing needs a 1D per-cell affine field".into()));
    }
    let mesh = u.mesh();
    let n = mesh.n();
    let h = mesh.h();
    let slopes: Vec<f64> = u.cells().iter().map(|c| c.z.get(0, 0)).collect();
    let zmax = slopes.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if zmax > cap {
        return Err(Error::CapInfeasible(format!("‖∇u‖_∞ = {zmax:e} exceeds the cap {cap:e}")));
    }
    let kinks: Vec<usize> = (1..n).filter(|&k| (slopes[k] - slopes[k - 1]).abs() > 1e-14).collect();
    let mut cells = u.cells().to_vec();
    let mut free_from = 0;
    for (i, &k) in kinks.iter().enumerate() {
        let jump = slopes[k] - slopes[k - 1];
        let room = cap - zmax;
        if room <= 0.0 {
            return Err(Error::CapInfeasible(format!("no room for curvature at x = {}", k as f64 * h)));
        }
        let j = (jump.abs() / (2.0 * h * room)).ceil().max(1.0) as usize;
        let next = kinks.get(i + 1).copied().unwrap_or(n);
        if j > k - free_from || k + j > next.min(n) || k + j > n {
            return Err(Error::CapInfeasible(format!(
                "kink at x = {} needs {j} cells per side; refine the mesh",
                k as f64 * h
            )));
        }
        let (xl, xk, xr) = ((k - j) as f64 * h, k as f64 * h, (k + j) as f64 * h);
        let w = xr - xl;
        let curv = jump / w;
        for (c, cd) in cells.iter_mut().enumerate().take(k + j).skip(k - j) {
            let x = mesh.cells()[c].center.get(0);
            let corr = if x < xk { curv * (x - xl).powi(2) / 2.0 } else { curv * (xr - x).powi(2) / 2.0 };
            *cd = CellData {
                a: cd.a + Vector::scalar(corr),
                z: Mat::scalar(slopes[k - 1] + curv * (x - xl)),
                h: Some(Hess::scalar(curv)),
            };
        }
        free_from = k + j;
    }
    Ok((u.with_cells(cells)?, kinks.len()))
}

fn gradient_sups(u: &BrokenField) -> (f64, f64) {
    let mesh = u.mesh();
    let mut g: f64 = 0.0;
    let mut hs: f64 = 0.0;
    for (c, cd) in u.cells().iter().enumerate() {
        match cd.h {
            None => g = g.max(cd.z.norm()),
            Some(hh) => {
                hs = hs.max(hh.norm_sq().sqrt());
                for x in mesh.cell_vertices(c) {
                    g = g.max(u.gradient(c, &x).norm());
                }
            }
        }
    }
    (g, hs)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `Λ = λ ⊗ e_k` with `sym Λ = M`, when `M` has that laminate form.
fn laminate_gradient(m: &Mat) -> Option<Mat> {
    let tol = 1e-14;
    if m.max_abs() <= tol {
        Some(Mat::zeros(2))
    } else if m.get(1, 1).abs() <= tol {
        Some(Mat::new2(m.get(0, 0), 0.0, 2.0 * m.get(0, 1), 0.0))
    } else if m.get(0, 0).abs() <= tol {
        Some(Mat::new2(0.0, 2.0 * m.get(0, 1), 0.0, m.get(1, 1)))
    } else {
        None
    }
}

/// 2D laminate recovery: `u = g + Λx − (Λx)_n` with `sym Λ = G − 𝓔g` constant.
fn laminate_member(sd: &StructuredDeformation, n: usize) -> Result<BrokenField> {
    let g = &sd.g;
    let z0 = g.cell(0).z;
    if g.has_hessian() || g.cells().iter().any(|c| (c.z - z0).max_abs() > 1e-14) {
        return Err(Error::Unsupported("2D recovery needs g with a single gradient".into()));
    }
    let defect = sd.big_g[0] - z0.sym();
    if sd.big_g.iter().any(|b| (*b - sd.big_g[0]).max_abs() > 1e-14) {
        return Err(Error::Unsupported("2D recovery needs a constant G".into()));
    }
    let lambda = laminate_gradient(&defect)
        .ok_or_else(|| Error::Unsupported("G − 𝓔g is not a laminate along a mesh axis".into()))?;
    let m = g.mesh().n();
    let res = m / gcd(m, n) * n;
    let g_fine = if res == m { g.clone() } else { g.refine(res / m)? };
    let h = BrokenField::affine(g_fine.mesh().clone(), &lambda, &Vector::zeros(2));
    let h_n = piecewise_constant_approx(&h, n)?;
    let h_n = if res == n { h_n } else { h_n.refine(res / n)? };
    g_fine.axpy(1.0, &h)?.axpy(-1.0, &h_n)
}

fn member(
    sd: &StructuredDeformation,
    delta: f64,
    cfg: &NonsimpleConfig,
    opts: &RecoveryOptions,
) -> Result<RecoveryMember> {
    let cfg = cfg.with_delta(delta)?;
    let n = resolution_for(delta, opts);
    let cap = cfg.cap();
    let (u, kinks_smoothed) = match sd.dim() {
        1 => {
            let (raw, _) = approximate(sd, n)?;
            let (smooth, k) = smooth_kinks(&raw, cap)?;
            (smooth.translate(&mean(&smooth).scale(-1.0)), k)
        }
        _ => {
            let raw = laminate_member(sd, n)?;
            let y = normalize_frame(&deformation(&raw, delta)?)?.y;
            (displacement(&y, delta)?, 0)
        }
    };
    let (grad_sup, hess_sup) = gradient_sups(&u);
    if grad_sup + hess_sup > cap * (1.0 + 1e-12) {
        return Err(Error::CapInfeasible(format!(
            "‖∇u‖_∞ + ‖∇²u‖_∞ = {:e} exceeds {cap:e} at δ = {delta}",
            grad_sup + hess_sup
        )));
    }
    let target = sd.g.translate(&mean(&sd.g).scale(-1.0));
    let l1_error = l1_distance(&u, &target)?;
    Ok(RecoveryMember { delta, n, cap, grad_sup, hess_sup, kinks_smoothed, l1_error, u })
}

/// One recovery field per entry of the δ-schedule.
pub fn recovery_sequence(
    sd: &StructuredDeformation,
    deltas: &[f64],
    cfg: &NonsimpleConfig,
    opts: &RecoveryOptions,
) -> Result<Vec<RecoveryMember>> {
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Schedule("δ-schedule must be nonempty and positive".into()));
    }
    if sd.dim() != cfg.dim() {
        return Err(Error::DimensionMismatch { expected: cfg.dim(), got: sd.dim() });
    }
    deltas.par_iter().map(|&d| member(sd, d, cfg, opts)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaRow {
    pub delta: f64,
    pub n: usize,
    pub bulk: f64,
    pub second_gradient: f64,
    pub jump: f64,
    pub gradient_jump: f64,
    pub f_dis: f64,
    pub i_lin: f64,
    pub gap: f64,
    /// `gap / |I_lin|` (the absolute gap when `I_lin` vanishes).
    pub rel_gap: f64,
    pub l1_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaGapReport {
    pub i_lin: RelaxationBreakdown,
    pub rows: Vec<GammaRow>,
    /// Log-log slope of the gap against δ.
    pub slope: Option<f64>,
    pub decreasing: bool,
    /// The last second-gradient plus gradient-jump contribution is no larger
    /// than the first.
    pub higher_order_vanishing: bool,
    pub weakstar: Option<WeakStarReport>,
}

/// `|F_δ^dis(u_δ) − I_lin(sd)|` along the schedule, with `I_lin` the relaxed
/// energy for `p = 2` and the linearization of `V`.
pub fn gamma_gap(
    sd: &StructuredDeformation,
    deltas: &[f64],
    cfg: &NonsimpleConfig,
    relax: &RelaxOptions,
    seed: u64,
    opts: &RecoveryOptions,
) -> Result<GammaGapReport> {
    let w = linearize(&cfg.v, FD_STEP)?.bulk;
    let sd2 = StructuredDeformation::new(sd.g.clone(), sd.big_g.clone(), 2.0)?;
    let i_lin = evaluate_Ip(&sd2, &w, &cfg.psi, relax, seed, None)?;
    let members = recovery_sequence(sd, deltas, cfg, opts)?;
    let rows: Vec<GammaRow> = members
        .par_iter()
        .map(|m| {
            let c = cfg.with_delta(m.delta)?;
            let t = eval_F_dis_terms(&m.u, &c)
                .ok_or_else(|| Error::Linearization(format!("recovery field at δ = {} is not normalized", m.delta)))?;
            let gap = (t.total - i_lin.total).abs();
            let rel_gap = if i_lin.total.abs() > 1e-12 { gap / i_lin.total.abs() } else { gap };
            Ok(GammaRow {
                delta: m.delta,
                n: m.n,
                bulk: t.bulk,
                second_gradient: t.second_gradient,
                jump: t.jump,
                gradient_jump: t.gradient_jump,
                f_dis: t.total,
                i_lin: i_lin.total,
                gap,
                rel_gap,
                l1_error: m.l1_error,
            })
        })
        .collect::<Result<_>>()?;
    let slope = loglog_slope(&rows.iter().map(|r| (r.delta, r.gap)).collect::<Vec<_>>());
    let decreasing = rows.windows(2).all(|w| w[1].gap <= w[0].gap + 1e-12);
    let higher = |r: &GammaRow| r.second_gradient + r.gradient_jump;
    let higher_order_vanishing = rows.last().is_some_and(|l| higher(l) <= higher(&rows[0]) + 1e-12);
    let weakstar = if members.len() >= 3 {
        let seq: Vec<BrokenField> = members.iter().map(|m| m.u.clone()).collect();
        let target = sd.g.translate(&mean(&sd.g).scale(-1.0));
        Some(weakstar_diagnostics(&seq, &target)?)
    } else {
        None
    };
    Ok(GammaGapReport { i_lin, rows, slope, decreasing, higher_order_vanishing, weakstar })
}

pub const GAMMA_CSV_HEADER: &str = "delta,n,bulk,second_gradient,jump,gradient_jump,f_dis,i_lin,gap,rel_gap,l1_error";

pub fn gamma_csv(report: &GammaGapReport) -> String {
    let mut out = String::from(GAMMA_CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            r.delta,
            r.n,
            r.bulk,
            r.second_gradient,
            r.jump,
            r.gradient_jump,
            r.f_dis,
            r.i_lin,
            r.gap,
            r.rel_gap,
            r.l1_error
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::densities::{NonlinearDensity, SurfaceDensity};
    use crate::fields::Mesh;
    use crate::linearization::{eval_F_dis, rigidity_diagnostics, RigidityOptions};

    fn cfg() -> NonsimpleConfig {
        NonsimpleConfig::new(
            0.1,
            0.7,
            0.68,
            NonlinearDensity::v_sq(),
            SurfaceDensity::psi1(1),
            SurfaceDensity::psi1_matrix(1),
        )
        .unwrap()
    }

    fn sd_1d(m: usize, f: impl Fn(f64) -> (f64, f64), big_g: impl Fn(f64) -> f64) -> StructuredDeformation {
        let mesh = Arc::new(Mesh::unit(1, m).unwrap());
        let g = BrokenField::from_fn(mesh.clone(), |_, x| {
            let (a, z) = f(x.get(0));
            CellData::affine(Vector::scalar(a), Mat::scalar(z))
        })
        .unwrap();
        let gs = mesh.cells().iter().map(|c| Mat::scalar(big_g(c.center.get(0)))).collect();
        StructuredDeformation::new(g, gs, 2.0).unwrap()
    }

    #[test]
    fn resolution_schedule() {
        let o = RecoveryOptions::default();
        assert_eq!(resolution_for(0.1, &o), 64);
        assert_eq!(resolution_for(0.01, &o), 512);
        assert_eq!(resolution_for(1e-3, &o), 4096);
        assert_eq!(resolution_for(1e-6, &o), 4096);
    }

    #[test]
    fn smoothing_keeps_jumps_and_meets_cap() {
        let mesh = Arc::new(Mesh::unit(1, 32).unwrap());
        let u = BrokenField::from_fn(mesh, |c, x| {
            let s = if c < 16 { 0.2 } else { -0.3 };
            let jump = if c >= 16 { 0.5 } else { 0.0 };
            CellData::affine(Vector::scalar(s * (x.get(0) - 0.5) + jump), Mat::scalar(s))
        })
        .unwrap();
        let (v, k) = smooth_kinks(&u, 2.0).unwrap();
        assert_eq!(k, 1);
        let (g, h) = gradient_sups(&v);
        assert!(g + h <= 2.0, "{g} {h}");
        // the jump at 1/2 and values outside the ramp are unchanged
        let f = &v.mesh().interior_facets()[15];
        let x = f.center;
        assert!(((v.jump_at(f, &x).get(0)) - u.jump_at(f, &x).get(0)).abs() < 1e-14);
        assert_eq!(v.cell(0), u.cell(0));
        // no gradient jumps remain
        assert!(
            crate::fields::gradient_jump_energy(&v, &SurfaceDensity::psi1_matrix(1), crate::fields::FacetRule::Gauss2)
                < 1e-14
        );
        assert!(matches!(smooth_kinks(&u, 0.25), Err(Error::CapInfeasible(_))));
    }

    #[test]
    fn affine_recovery_is_the_affine_map() {
        let sd = sd_1d(4, |x| (0.5 * x, 0.5), |_| 0.5);
        let fam = recovery_sequence(&sd, &[0.1, 0.01], &cfg(), &RecoveryOptions::default()).unwrap();
        for m in &fam {
            assert!(m.l1_error < 1e-12);
            assert!(m.u.cells().iter().all(|c| (c.z.get(0, 0) - 0.5).abs() < 1e-14));
            // V_sq is quadratic, so F_dis equals W(0.5) = 0.25 exactly
            assert!((eval_F_dis(&m.u, &cfg().with_delta(m.delta).unwrap()) - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn staircase_gap_shrinks() {
        let sd = sd_1d(2, |x| (x, 1.0), |_| 0.0);
        let fam = recovery_sequence(&sd, &[0.1, 0.01], &cfg(), &RecoveryOptions::default()).unwrap();
        let energies: Vec<f64> = fam.iter().map(|m| eval_F_dis(&m.u, &cfg().with_delta(m.delta).unwrap())).collect();
        // (n − 1)/n jump mass for the staircase with n cells
        assert!((energies[0] - 63.0 / 64.0).abs() < 1e-9, "{energies:?}");
        assert!((energies[1] - 511.0 / 512.0).abs() < 1e-9, "{energies:?}");
        let fam: Vec<(f64, BrokenField)> = fam.into_iter().map(|m| (m.delta, m.u)).collect();
        let r = rigidity_diagnostics(&fam, &cfg(), &RigidityOptions::default()).unwrap();
        assert!(r.reports.iter().all(|rep| rep.exceptional.is_empty()));
    }

    #[test]
    fn step_gap_vanishes() {
        let sd = sd_1d(2, |x| (if x > 0.5 { 1.0 } else { 0.0 }, 0.0), |_| 0.0);
        let relax = RelaxOptions { n_bulk: Some(16), n_surface: Some(8), ..RelaxOptions::default() };
        let r = gamma_gap(&sd, &[0.1, 0.01, 0.001], &cfg(), &relax, 7, &RecoveryOptions::default()).unwrap();
        assert!((r.i_lin.total - 1.0).abs() < 1e-6, "{:?}", r.i_lin);
        assert!(r.rows.iter().all(|row| row.rel_gap < 1e-6), "{:?}", r.rows);
        assert!(r.higher_order_vanishing);
        assert!(gamma_csv(&r).lines().count() == 4);
    }

    #[test]
    fn mixed_gap_decreases() {
        // g = x/2 plus a unit step, G = 1/4: I_lin = W(1/4) + |1/2 − 1/4| + 1
        let sd = sd_1d(2, |x| (0.5 * x + if x > 0.5 { 1.0 } else { 0.0 }, 0.5), |_| 0.25);
        let relax = RelaxOptions { n_bulk: Some(32), n_surface: Some(8), ..RelaxOptions::default() };
        let r = gamma_gap(&sd, &[0.1, 0.01, 0.001], &cfg(), &relax, 7, &RecoveryOptions::default()).unwrap();
        assert!((r.i_lin.total - 1.3125).abs() < 1e-6, "{:?}", r.i_lin);
        assert!(r.decreasing, "{:?}", r.rows);
        assert!(r.rows[2].rel_gap < 1e-3, "{:?}", r.rows);
        assert!(r.weakstar.as_ref().unwrap().decreasing);
    }

    #[test]
    fn laminate_recovery_in_2d() {
        let c = NonsimpleConfig::new(
            0.1,
            0.8,
            0.7,
            NonlinearDensity::v_rot(),
            SurfaceDensity::psi1(2),
            SurfaceDensity::psi1_matrix(2),
        )
        .unwrap();
        let mesh = Arc::new(Mesh::unit(2, 2).unwrap());
        let g = BrokenField::affine(mesh, &Mat::new2(0.3, 0.0, 0.0, 0.0), &Vector::zeros(2));
        let sd = StructuredDeformation::uniform(g, Mat::zeros(2), 2.0).unwrap();
        let fam =
            recovery_sequence(&sd, &[0.1, 0.05], &c, &RecoveryOptions { cells_per_delta: 0.8, max_resolution: 16 })
                .unwrap();
        for m in &fam {
            assert!(eval_F_dis(&m.u, &c.with_delta(m.delta).unwrap()).is_finite());
        }
        assert!(fam[1].l1_error < fam[0].l1_error);
        let bad = StructuredDeformation::uniform(
            BrokenField::zero(Arc::new(Mesh::unit(2, 2).unwrap())),
            Mat::identity(2),
            2.0,
        )
        .unwrap();
        assert!(matches!(recovery_sequence(&bad, &[0.1], &c, &RecoveryOptions::default()), Err(Error::Unsupported(_))));
    }
}
