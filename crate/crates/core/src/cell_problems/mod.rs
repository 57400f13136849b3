//! Relaxed densities `H_p`, `h_p`, `h₁` from discrete cell problems, their
//! recession functions, a 1D brute-force oracle and property checks.
#![allow(non_snake_case)]

mod discrete;
mod laminate;
mod oracle;
mod pdhg;
mod properties;
mod subgradient;

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use oracle::{oracle_1d_H, OracleGrid};
pub use properties::{verify_bulk_properties, verify_surface_properties, HSample, PropertyCheck, PropertyReport};

use crate::densities::{is_diverging, tail_max, validate_t_schedule};
use crate::densities::{BulkDensity, SurfaceDensity};
use crate::error::{Error, Result};
use crate::fields::{decompose, BrokenField, FacetRule, Frame, Mesh};
use crate::tensor::{Mat, Vector};
use discrete::{Assembly, Datum, Discretization, Energy, StrainMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellProblemKind {
    Bulk,
    SurfaceP,
    Surface1,
}

impl CellProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellProblemKind::Bulk => "bulk",
            CellProblemKind::SurfaceP => "surface_p",
            CellProblemKind::Surface1 => "surface_1",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    ConvexPrimalDual,
    MultistartSubgradient,
    LaminateAnsatz,
}

/// How the boundary datum enters the competitor class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcMode {
    /// Boundary-cell traces equal the datum.
    #[default]
    Hard,
    /// Mismatch with the datum is charged by `ψ` on boundary facets.
    Penalty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// `None` selects the primal-dual method when the problem is proximable.
    pub backend: Option<Backend>,
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub check_every: usize,
    /// Composite Simpson panels per facet instead of two Gauss points.
    pub simpson_panels: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            backend: None,
            max_iters: 100_000,
            tol: 1e-10,
            restarts: 4,
            seed: 0,
            check_every: 64,
            simpson_panels: None,
        }
    }
}

impl SolverConfig {
    fn facet_rule(&self) -> FacetRule {
        self.simpson_panels.map_or(FacetRule::Gauss2, FacetRule::Simpson)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("solver tolerance must be positive".into()));
        }
        if self.check_every == 0 || self.max_iters == 0 {
            return Err(Error::InvalidInput("solver iteration counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CellProblemSpec {
    pub kind: CellProblemKind,
    pub w: BulkDensity,
    pub psi: SurfaceDensity,
    pub p: f64,
    pub x0: Vector,
    pub a: Mat,
    pub b: Mat,
    pub lambda: Vector,
    pub nu: Vector,
    /// Strictly decreasing; used for x-dependent `W` and for `h₁`.
    pub eps_schedule: Vec<f64>,
    pub n: usize,
    pub solver: SolverConfig,
    pub bc: BcMode,
    /// Orientation of the in-plane axes of `Q_ν`.
    pub frame: Frame,
}

impl CellProblemSpec {
    pub fn bulk(w: BulkDensity, psi: SurfaceDensity, p: f64, a: Mat, b: Mat) -> Self {
        let dim = w.dim();
        Self {
            kind: CellProblemKind::Bulk,
            w,
            psi,
            p,
            x0: Vector::filled(dim, 0.5),
            a,
            b,
            lambda: Vector::zeros(dim),
            nu: Vector::unit(dim, 0),
            eps_schedule: vec![1e-1, 1e-2, 1e-3],
            n: if dim == 1 { 64 } else { 8 },
            solver: SolverConfig::default(),
            bc: BcMode::Hard,
            frame: Frame::Householder,
        }
    }

    /// `surface_p` when `p > 1`, `surface_1` when `p = 1`.
    pub fn surface(w: BulkDensity, psi: SurfaceDensity, p: f64, lambda: Vector, nu: Vector) -> Self {
        let dim = w.dim();
        let mut s = Self::bulk(w, psi, p, Mat::zeros(dim), Mat::zeros(dim));
        s.kind = if p == 1.0 { CellProblemKind::Surface1 } else { CellProblemKind::SurfaceP };
        s.lambda = lambda;
        s.nu = nu;
        s.n = if dim == 1 { 16 } else { 8 };
        s
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_eps_schedule(mut self, eps: Vec<f64>) -> Self {
        self.eps_schedule = eps;
        self
    }

    pub fn with_x0(mut self, x0: Vector) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_bc(mut self, bc: BcMode) -> Self {
        self.bc = bc;
        self
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.solver.backend = Some(backend);
        self
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        self.solver.validate()?;
        if self.psi.dim() != dim || self.x0.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.psi.dim() });
        }
        if !(self.p >= 1.0) {
            return Err(Error::InvalidInput(format!("p must be ≥ 1, got {}", self.p)));
        }
        if self.eps_schedule.iter().any(|e| !(e.is_finite() && *e > 0.0))
            || self.eps_schedule.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::Schedule("ε-schedule must be positive and strictly decreasing".into()));
        }
        match self.kind {
            CellProblemKind::Bulk => {
                if self.a.dim() != dim || self.b.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: self.a.dim() });
                }
                if !self.a.is_symmetric(1e-12) || !self.b.is_symmetric(1e-12) {
                    return Err(Error::InvalidInput("A and B must be symmetric".into()));
                }
                let min_n = if dim == 1 { 2 } else { 3 };
                if self.n < min_n {
                    return Err(Error::InvalidInput(format!("bulk cell problem needs n ≥ {min_n}")));
                }
            }
            _ => {
                if self.lambda.dim() != dim || self.nu.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: self.nu.dim() });
                }
                if (self.nu.norm() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput("ν must be a unit vector".into()));
                }
                if self.n < 2 {
                    return Err(Error::InvalidInput("surface cell problem needs n ≥ 2".into()));
                }
                if dim == 2 && self.n % 2 == 1 {
                    return Err(Error::InvalidInput("2D surface cell problems need even n".into()));
                }
                if self.frame == Frame::Standard {
                    return Err(Error::InvalidInput("surface problems live on a rotated cube".into()));
                }
                let want = if self.kind == CellProblemKind::Surface1 { self.p == 1.0 } else { self.p > 1.0 };
                if !want {
                    return Err(Error::InvalidInput(format!("{} does not match p = {}", self.kind.as_str(), self.p)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CellProblemResult {
    pub kind: CellProblemKind,
    pub value: f64,
    pub upper_bound: f64,
    pub lower_bound: Option<f64>,
    /// `(ε, value)` per schedule entry when the ε-loop is active.
    pub eps_values: Vec<(f64, f64)>,
    pub tail_spread: f64,
    pub converged: bool,
    pub iterations: usize,
    pub backend: Backend,
    /// Gauss-Green residual of the minimizer.
    pub gauss_green_residual: f64,
    /// Value of the joint form with `W^∞` (surface_1 only).
    pub recession_form: Option<f64>,
    #[serde(skip)]
    pub minimizer: Option<BrokenField>,
}

impl CellProblemResult {
    /// `lower − tol ≤ value ≤ upper + tol`.
    pub fn bracketed(&self, tol: f64) -> bool {
        self.value <= self.upper_bound + tol && self.lower_bound.is_none_or(|l| l - tol <= self.value)
    }

    pub fn recession_discrepancy(&self) -> Option<f64> {
        self.recession_form.map(|r| (r - self.value).abs())
    }
}

struct Single {
    value: f64,
    upper: f64,
    field: BrokenField,
    converged: bool,
    iterations: usize,
    backend: Backend,
}

fn choose_backend(spec: &SolverConfig, disc: &Discretization) -> Result<Backend> {
    match spec.backend {
        Some(Backend::ConvexPrimalDual) if !disc.proximable() => Err(Error::BackendUnavailable {
            backend: "convex_primal_dual".into(),
            reason: "needs a convex closed-form W and a norm-like ψ".into(),
        }),
        Some(b) => Ok(b),
        None if disc.proximable() => Ok(Backend::ConvexPrimalDual),
        None => Ok(Backend::MultistartSubgradient),
    }
}

fn run_backend(
    disc: &Discretization,
    solver: &SolverConfig,
    laminate: &BrokenField,
    ansatz: impl Fn() -> f64,
) -> Result<Single> {
    let x_lam = disc.from_field(laminate);
    let upper = disc.objective(&x_lam);
    let backend = choose_backend(solver, disc)?;
    let (value, field, converged, iterations) = match backend {
        Backend::ConvexPrimalDual => {
            let opts =
                pdhg::PdhgOptions { max_iters: solver.max_iters, tol: solver.tol, check_every: solver.check_every };
            let out = pdhg::solve(disc, None, opts)?;
            (out.value, disc.to_field(&out.x)?, out.converged, out.iterations)
        }
        Backend::MultistartSubgradient => {
            let opts = subgradient::SubgradientOptions {
                max_iters: solver.max_iters.min(20_000),
                restarts: solver.restarts,
                seed: solver.seed,
                tol: solver.tol.max(1e-8),
            };
            let out = subgradient::solve(disc, &[x_lam.clone()], opts)?;
            (out.value, disc.to_field(&out.x)?, out.converged, out.iterations)
        }
        Backend::LaminateAnsatz => (ansatz().min(upper), laminate.clone(), true, 0),
    };
    Ok(Single { value, upper, field, converged, iterations, backend })
}

/// Tail max over `⌈len/2⌉` of a decreasing ε-schedule.
fn eps_tail(values: &[(f64, f64)]) -> (f64, f64) {
    let raw: Vec<f64> = values.iter().map(|v| v.1).collect();
    tail_max(&raw)
}

/// `H_p(x₀, A, B)`.
pub fn solve_H(spec: &CellProblemSpec) -> Result<CellProblemResult> {
    if spec.kind != CellProblemKind::Bulk {
        return Err(Error::InvalidInput("solve_H needs kind = bulk".into()));
    }
    spec.validate()?;
    let dim = spec.dim();
    let mesh = Arc::new(Mesh::unit(dim, spec.n)?);
    let laminate = laminate::bulk_laminate(&mesh, &spec.a, &spec.b)?;
    let scheduled = spec.w.x_dependent;
    if scheduled && spec.eps_schedule.is_empty() {
        return Err(Error::Schedule("x-dependent W needs a nonempty ε-schedule".into()));
    }
    let eps_list: Vec<f64> = if scheduled { spec.eps_schedule.clone() } else { vec![0.0] };
    let singles: Vec<Result<Single>> = eps_list
        .par_iter()
        .map(|&eps| {
            let x0 = spec.x0;
            let pos = move |y: &Vector| x0 + y.scale(eps);
            let disc = Discretization::assemble(Assembly {
                mesh: mesh.clone(),
                mode: StrainMode::Free,
                datum: Datum::Affine(spec.a),
                penalty_bc: spec.bc == BcMode::Penalty,
                mean_strain: Some(spec.b),
                bulk: Some((&pos, 1.0)),
                rule: spec.solver.facet_rule(),
                energy: Energy { w: Some(spec.w.clone()), psi: spec.psi.clone(), x0 },
            })?;
            let ansatz = || {
                if dim == 1 && !spec.w.x_dependent {
                    laminate::ansatz_1d_bulk(&spec.w, &spec.psi, &x0, spec.a.get(0, 0), spec.b.get(0, 0))
                } else {
                    f64::INFINITY
                }
            };
            run_backend(&disc, &spec.solver, &laminate, ansatz)
        })
        .collect();
    let singles: Vec<Single> = singles.into_iter().collect::<Result<_>>()?;

    let lower = (spec.w.convex && !spec.w.x_dependent)
        .then(|| spec.w.eval(&spec.x0, &spec.b) + spec.psi.c_psi * (spec.a - spec.b).norm());
    finish(CellProblemKind::Bulk, scheduled, &eps_list, singles, lower, None)
}

fn finish(
    kind: CellProblemKind,
    scheduled: bool,
    eps_list: &[f64],
    singles: Vec<Single>,
    lower: Option<f64>,
    recession_form: Option<f64>,
) -> Result<CellProblemResult> {
    let eps_values: Vec<(f64, f64)> =
        if scheduled { eps_list.iter().zip(&singles).map(|(&e, s)| (e, s.value)).collect() } else { Vec::new() };
    let (value, tail_spread) = if scheduled { eps_tail(&eps_values) } else { (singles[0].value, 0.0) };
    let upper_bound = if scheduled {
        let ups: Vec<f64> = singles.iter().map(|s| s.upper).collect();
        tail_max(&ups).0
    } else {
        singles[0].upper
    };
    let last = singles.last().expect("at least one solve");
    let residual = decompose(&last.field).gauss_green_residual;
    Ok(CellProblemResult {
        kind,
        value,
        upper_bound,
        lower_bound: lower,
        eps_values,
        tail_spread,
        converged: singles.iter().all(|s| s.converged),
        iterations: singles.iter().map(|s| s.iterations).sum(),
        backend: last.backend,
        gauss_green_residual: residual,
        recession_form,
        minimizer: Some(last.field.clone()),
    })
}

fn surface_mesh(spec: &CellProblemSpec) -> Result<Arc<Mesh>> {
    Ok(Arc::new(Mesh::cube_nu(spec.dim(), spec.n, &spec.nu, spec.frame)?))
}

/// Lower bound `c_ψ|λ⊙ν|` from the Gauss-Green identity.
fn surface_lower(spec: &CellProblemSpec) -> f64 {
    spec.psi.c_psi * Mat::sym_outer(&spec.lambda, &spec.nu).norm()
}

/// `h_p(x₀, λ, ν)` for `p > 1`: competitors with `𝓔u = 0`. `W` is never evaluated.
pub fn solve_h_supercritical(spec: &CellProblemSpec) -> Result<CellProblemResult> {
    if spec.kind != CellProblemKind::SurfaceP {
        return Err(Error::InvalidInput("solve_h_supercritical needs kind = surface_p".into()));
    }
    spec.validate()?;
    let mesh = surface_mesh(spec)?;
    let laminate = laminate::surface_laminate(&mesh, &spec.lambda, &spec.nu)?;
    let disc = Discretization::assemble(Assembly {
        mesh: mesh.clone(),
        mode: StrainMode::Skew,
        datum: Datum::Step { lambda: spec.lambda, nu: spec.nu },
        penalty_bc: spec.bc == BcMode::Penalty,
        mean_strain: None,
        bulk: None,
        rule: spec.solver.facet_rule(),
        energy: Energy { w: None, psi: spec.psi.clone(), x0: spec.x0 },
    })?;
    let single = run_backend(&disc, &spec.solver, &laminate, || {
        laminate::ansatz_surface(&spec.psi, &spec.x0, &spec.lambda, &spec.nu)
    })?;
    finish(CellProblemKind::SurfaceP, false, &[0.0], vec![single], Some(surface_lower(spec)), None)
}

/// `h₁(x₀, λ, ν)`: ε-scaled bulk term, `∫𝓔u = 0`; also the joint form with
/// `W^∞` when the recession rate of `W` is declared.
pub fn solve_h_critical(spec: &CellProblemSpec) -> Result<CellProblemResult> {
    if spec.kind != CellProblemKind::Surface1 {
        return Err(Error::InvalidInput("solve_h_critical needs kind = surface_1".into()));
    }
    spec.validate()?;
    if spec.eps_schedule.is_empty() {
        return Err(Error::Schedule("h₁ needs a nonempty ε-schedule".into()));
    }
    let mesh = surface_mesh(spec)?;
    let laminate = laminate::surface_laminate(&mesh, &spec.lambda, &spec.nu)?;
    let assemble = |w: BulkDensity, eps: Option<f64>| {
        let x0 = spec.x0;
        let pos = move |y: &Vector| match eps {
            Some(e) => x0 + y.scale(e),
            None => x0,
        };
        Discretization::assemble(Assembly {
            mesh: mesh.clone(),
            mode: StrainMode::Free,
            datum: Datum::Step { lambda: spec.lambda, nu: spec.nu },
            penalty_bc: spec.bc == BcMode::Penalty,
            mean_strain: Some(Mat::zeros(spec.dim())),
            bulk: Some((&pos, eps.unwrap_or(1.0))),
            rule: spec.solver.facet_rule(),
            energy: Energy { w: Some(w), psi: spec.psi.clone(), x0 },
        })
    };
    let ansatz = || laminate::ansatz_surface(&spec.psi, &spec.x0, &spec.lambda, &spec.nu);
    let singles: Vec<Result<Single>> = spec
        .eps_schedule
        .par_iter()
        .map(|&eps| run_backend(&assemble(spec.w.clone(), Some(eps))?, &spec.solver, &laminate, ansatz))
        .collect();
    let singles: Vec<Single> = singles.into_iter().collect::<Result<_>>()?;
    let recession_form = match (spec.w.alpha, spec.w.recession_density()) {
        (Some(_), Some(w_inf)) => Some(run_backend(&assemble(w_inf, None)?, &spec.solver, &laminate, ansatz)?.value),
        _ => None,
    };
    finish(CellProblemKind::Surface1, true, &spec.eps_schedule, singles, Some(surface_lower(spec)), recession_form)
}

/// Dispatches on the spec kind.
pub fn solve(spec: &CellProblemSpec) -> Result<CellProblemResult> {
    match spec.kind {
        CellProblemKind::Bulk => solve_H(spec),
        CellProblemKind::SurfaceP => solve_h_supercritical(spec),
        CellProblemKind::Surface1 => solve_h_critical(spec),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RecessionHEstimate {
    pub estimate: f64,
    pub tail_spread: f64,
    pub h0: f64,
    /// `(t, (H(tA,0) − H(0,0))/t)`.
    pub values: Vec<(f64, f64)>,
    pub diverging: bool,
}

/// `H_p^∞(A, 0)` as the tail max of `(H(tA,0) − H(0,0))/t`; `W`, `ψ`, `p`,
/// mesh and solver come from `template`.
pub fn recession_H(template: &CellProblemSpec, a: &Mat, t_schedule: &[f64]) -> Result<RecessionHEstimate> {
    validate_t_schedule(t_schedule, 0.0)?;
    let dim = template.dim();
    let at = |m: Mat| {
        let mut s = template.clone();
        s.kind = CellProblemKind::Bulk;
        s.a = m;
        s.b = Mat::zeros(dim);
        s
    };
    let h0 = solve_H(&at(Mat::zeros(dim)))?.value;
    let values: Vec<Result<(f64, f64)>> =
        t_schedule.par_iter().map(|&t| Ok((t, (solve_H(&at(a.scale(t)))?.value - h0) / t))).collect();
    let values: Vec<(f64, f64)> = values.into_iter().collect::<Result<_>>()?;
    let raw: Vec<f64> = values.iter().map(|v| v.1).collect();
    let (estimate, tail_spread) = tail_max(&raw);
    let k = values.len().div_ceil(2);
    let diverging = is_diverging(&values[values.len() - k..]);
    Ok(RecessionHEstimate { estimate, tail_spread, h0, values, diverging })
}

fn fmt_f(x: f64) -> String {
    format!("{x:.12e}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(" ")
}

pub const CSV_HEADER: &str = "kind,p,A,B,lambda,nu,eps,n,value,lower,upper,iters,converged";

/// One CSV line per result; matrices and vectors are space-separated lists
/// in row-major order.
pub fn csv_row(spec: &CellProblemSpec, res: &CellProblemResult) -> String {
    let bulk = spec.kind == CellProblemKind::Bulk;
    let eps = match res.eps_values.last() {
        Some((e, _)) => fmt_f(*e),
        None => String::new(),
    };
    let mut s = String::new();
    let _ = write!(
        s,
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        spec.kind.as_str(),
        fmt_f(spec.p),
        if bulk { fmt_list(&spec.a.flat()) } else { String::new() },
        if bulk { fmt_list(&spec.b.flat()) } else { String::new() },
        if bulk { String::new() } else { fmt_list(spec.lambda.as_slice()) },
        if bulk { String::new() } else { fmt_list(spec.nu.as_slice()) },
        eps,
        spec.n,
        fmt_f(res.value),
        res.lower_bound.map(fmt_f).unwrap_or_default(),
        fmt_f(res.upper_bound),
        res.iterations,
        res.converged
    );
    s
}

pub fn results_csv(rows: &[(CellProblemSpec, CellProblemResult)]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (s, r) in rows {
        out.push_str(&csv_row(s, r));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h_1d(w: BulkDensity, a: f64, b: f64) -> CellProblemResult {
        let spec = CellProblemSpec::bulk(w, SurfaceDensity::psi1(1), 2.0, Mat::scalar(a), Mat::scalar(b));
        solve_H(&spec).unwrap()
    }

    #[test]
    fn one_dimensional_closed_form() {
        let r = h_1d(BulkDensity::w2(1), 3.0, 1.0);
        assert!((r.value - 3.0).abs() < 1e-6, "{}", r.value);
        assert!(r.bracketed(1e-9));
        assert!(r.gauss_green_residual < 1e-10);
        let r = h_1d(BulkDensity::w2(1), 0.7, 0.7);
        assert!((r.value - 0.49).abs() < 1e-7);
        assert_eq!(h_1d(BulkDensity::w2(1), 0.0, 0.0).value, 0.0);
    }

    #[test]
    fn flat_interface_is_optimal_for_psi1() {
        for (lambda, nu) in
            [(Vector::new2(1.0, 0.5), Vector::new2(0.6, 0.8)), (Vector::new2(0.0, 0.0), Vector::new2(1.0, 0.0))]
        {
            let spec = CellProblemSpec::surface(BulkDensity::w2(2), SurfaceDensity::psi1(2), 2.0, lambda, nu);
            let r = solve_h_supercritical(&spec).unwrap();
            assert!((r.value - lambda.norm()).abs() < 1e-6, "{} vs {}", r.value, lambda.norm());
        }
    }

    #[test]
    fn spec_validation() {
        let spec = CellProblemSpec::bulk(
            BulkDensity::w2(2),
            SurfaceDensity::psi1(2),
            2.0,
            Mat::new2(0.0, 1.0, 0.0, 0.0),
            Mat::zeros(2),
        );
        assert!(solve_H(&spec).is_err());
        let s = CellProblemSpec::surface(
            BulkDensity::w2(2),
            SurfaceDensity::psi1(2),
            2.0,
            Vector::new2(1.0, 0.0),
            Vector::new2(1.0, 1.0),
        );
        assert!(solve_h_supercritical(&s).is_err());
        let s = CellProblemSpec::surface(
            BulkDensity::w2(1),
            SurfaceDensity::psi1(1),
            2.0,
            Vector::scalar(1.0),
            Vector::scalar(1.0),
        )
        .with_eps_schedule(vec![1e-2, 1e-1]);
        assert!(matches!(solve_h_supercritical(&s), Err(Error::Schedule(_))));
    }
}
