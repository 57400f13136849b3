//! The relaxed functional `I_p(g, G)` through its integral representation:
//! bulk `∫H_p(𝓔g, G)`, jump `∫_{J_g} h_p([g], ν)` and the Cantor term.
#![allow(non_snake_case)]

mod probe;
mod tables;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use probe::{lower_semicontinuity_probe, moments, LscReport, MOMENT_DEGREE};
pub use tables::{build_density_tables, DensityTables, Fingerprint, LatticeSpec, LatticeTable, SurfaceTable};

use crate::cell_problems::{
    recession_H, solve_H, solve_h_critical, solve_h_supercritical, BcMode, CellProblemSpec, SolverConfig,
};
use crate::densities::{BulkDensity, SurfaceDensity};
use crate::error::{Error, Result};
use crate::fields::{restrict, BrokenField, FacetRule, Frame, Mesh, Subdomain, JUMP_TOL};
use crate::tensor::{Mat, Vector};

/// A pair `(g, G)`: a broken field and a cellwise-constant symmetric matrix field.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredDeformation {
    pub g: BrokenField,
    pub big_g: Vec<Mat>,
    pub p: f64,
}

impl StructuredDeformation {
    pub fn new(g: BrokenField, big_g: Vec<Mat>, p: f64) -> Result<Self> {
        let cells = g.cells().len();
        if big_g.len() != cells {
            return Err(Error::MeshMismatch(format!("G has {} cells, g has {cells}", big_g.len())));
        }
        for m in &big_g {
            if m.dim() != g.dim() {
                return Err(Error::DimensionMismatch { expected: g.dim(), got: m.dim() });
            }
            if !m.is_finite() || !m.is_symmetric(1e-12) {
                return Err(Error::InvalidInput("G must be finite and symmetric".into()));
            }
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidInput(format!("p must be ≥ 1, got {p}")));
        }
        if g.cantor().is_some() && g.dim() != 1 {
            return Err(Error::Unsupported("Cantor parts are one-dimensional".into()));
        }
        Ok(Self { g, big_g, p })
    }

    /// `G` constant on every cell.
    pub fn uniform(g: BrokenField, big_g: Mat, p: f64) -> Result<Self> {
        let n = g.cells().len();
        Self::new(g, vec![big_g; n], p)
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.g.mesh()
    }

    /// `‖G‖_{L^p}^p`.
    pub fn g_norm_p(&self) -> f64 {
        let mesh = self.mesh();
        mesh.cells().iter().zip(&self.big_g).map(|(c, m)| c.volume * m.norm().powf(self.p)).sum()
    }

    /// `‖G‖_{L¹}`.
    pub fn g_norm_1(&self) -> f64 {
        let mesh = self.mesh();
        mesh.cells().iter().zip(&self.big_g).map(|(c, m)| c.volume * m.norm()).sum()
    }

    /// Restriction to a mesh-aligned subdomain (the Cantor part is dropped).
    pub fn restrict(&self, sub: &Subdomain) -> Result<Self> {
        let g = restrict(&self.g, sub)?;
        let parent = self.mesh();
        let big_g = g
            .mesh()
            .cells()
            .iter()
            .map(|c| self.big_g[parent.cell_at_grid(c.grid).expect("restricted cell in parent")])
            .collect();
        Self::new(g, big_g, self.p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelaxationBreakdown {
    pub bulk: f64,
    pub jump: f64,
    pub cantor: f64,
    pub total: f64,
    /// Some density values came from table interpolation (an upper-biased estimate).
    pub interpolated: bool,
}

/// Access to `H_p`, `h_p` and `H_p^∞(±1, 0)`.
pub trait RelaxedDensities: Sync {
    fn bulk(&self, x: &Vector, a: &Mat, b: &Mat) -> Result<f64>;
    fn surface(&self, x: &Vector, lambda: &Vector, nu: &Vector) -> Result<f64>;
    /// 1D recession `H_p^∞(direction, 0)`, `direction = ±1`.
    fn cantor(&self, direction: f64) -> Result<f64>;
    fn interpolated(&self) -> bool {
        false
    }
    fn x_dependent(&self) -> bool;
}

/// What to do when a table query falls outside the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfRangePolicy {
    /// Solve the cell problem on demand.
    #[default]
    Solve,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxOptions {
    /// Cell-problem resolution for `H_p` (64 in 1D, 8 in 2D when absent).
    pub n_bulk: Option<usize>,
    /// Cell-problem resolution for `h_p` (16 in 1D, 8 in 2D when absent).
    pub n_surface: Option<usize>,
    pub solver: SolverConfig,
    pub eps_schedule: Vec<f64>,
    pub t_schedule: Vec<f64>,
    pub bc: BcMode,
    pub frame: Frame,
    pub out_of_range: OutOfRangePolicy,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            n_bulk: None,
            n_surface: None,
            solver: SolverConfig::default(),
            eps_schedule: vec![1e-1, 1e-2, 1e-3],
            t_schedule: vec![10.0, 100.0, 1000.0],
            bc: BcMode::Hard,
            frame: Frame::Householder,
            out_of_range: OutOfRangePolicy::Solve,
        }
    }
}

impl RelaxOptions {
    pub fn n_bulk(&self, dim: usize) -> usize {
        self.n_bulk.unwrap_or(if dim == 1 { 64 } else { 8 })
    }

    pub fn n_surface(&self, dim: usize) -> usize {
        self.n_surface.unwrap_or(if dim == 1 { 16 } else { 8 })
    }
}

fn key(tag: u64, parts: &[&[f64]]) -> Vec<u64> {
    let mut k = vec![tag];
    for p in parts {
        // -0.0 and 0.0 describe the same query
        k.extend(p.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }));
    }
    k
}

/// Densities solved on demand and memoized on the exact query.
pub struct SolvedDensities {
    w: BulkDensity,
    psi: SurfaceDensity,
    p: f64,
    opts: RelaxOptions,
    cache: Mutex<HashMap<Vec<u64>, f64>>,
}

impl SolvedDensities {
    pub fn new(w: BulkDensity, psi: SurfaceDensity, p: f64, opts: RelaxOptions) -> Result<Self> {
        if w.dim() != psi.dim() {
            return Err(Error::DimensionMismatch { expected: w.dim(), got: psi.dim() });
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidInput(format!("p must be ≥ 1, got {p}")));
        }
        Ok(Self { w, psi, p, opts, cache: Mutex::new(HashMap::new()) })
    }

    pub fn w(&self) -> &BulkDensity {
        &self.w
    }

    pub fn psi(&self) -> &SurfaceDensity {
        &self.psi
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn options(&self) -> &RelaxOptions {
        &self.opts
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    fn memo(&self, k: Vec<u64>, f: impl FnOnce() -> Result<f64>) -> Result<f64> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&k) {
            return Ok(*v);
        }
        let v = f()?;
        self.cache.lock().expect("cache lock").insert(k, v);
        Ok(v)
    }

    fn bulk_spec(&self, x: &Vector, a: &Mat, b: &Mat) -> CellProblemSpec {
        let dim = self.dim();
        CellProblemSpec::bulk(self.w.clone(), self.psi.clone(), self.p, *a, *b)
            .with_x0(*x)
            .with_n(self.opts.n_bulk(dim))
            .with_solver(self.opts.solver.clone())
            .with_eps_schedule(self.opts.eps_schedule.clone())
            .with_bc(self.opts.bc)
    }

    /// Number of distinct solved queries so far.
    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl RelaxedDensities for SolvedDensities {
    fn bulk(&self, x: &Vector, a: &Mat, b: &Mat) -> Result<f64> {
        let xs: &[f64] = if self.w.x_dependent { x.as_slice() } else { &[] };
        let k = key(0, &[xs, &a.sym_coords(), &b.sym_coords()]);
        self.memo(k, || Ok(solve_H(&self.bulk_spec(x, a, b))?.value))
    }

    fn surface(&self, x: &Vector, lambda: &Vector, nu: &Vector) -> Result<f64> {
        if lambda.norm() <= JUMP_TOL {
            return Ok(0.0);
        }
        // closed-form presets carry a dual ball and never read x
        let x_dep = self.psi.dual_ball().is_none() || (self.p == 1.0 && self.w.x_dependent);
        let xs: &[f64] = if x_dep { x.as_slice() } else { &[] };
        let k = key(1, &[xs, lambda.as_slice(), nu.as_slice()]);
        self.memo(k, || {
            let dim = self.dim();
            let spec = CellProblemSpec::surface(self.w.clone(), self.psi.clone(), self.p, *lambda, *nu)
                .with_x0(*x)
                .with_n(self.opts.n_surface(dim))
                .with_solver(self.opts.solver.clone())
                .with_eps_schedule(self.opts.eps_schedule.clone())
                .with_bc(self.opts.bc)
                .with_frame(self.opts.frame);
            let r = if self.p > 1.0 { solve_h_supercritical(&spec)? } else { solve_h_critical(&spec)? };
            Ok(r.value)
        })
    }

    fn cantor(&self, direction: f64) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::Unsupported("Cantor parts are one-dimensional".into()));
        }
        let d = direction.signum();
        self.memo(key(2, &[&[d]]), || {
            let x = Vector::scalar(0.5);
            let template = self.bulk_spec(&x, &Mat::zeros(1), &Mat::zeros(1));
            Ok(recession_H(&template, &Mat::scalar(d), &self.opts.t_schedule)?.estimate)
        })
    }

    fn x_dependent(&self) -> bool {
        self.w.x_dependent
    }
}

/// Tables with on-demand solves (or failure) outside the lattice.
pub struct TabulatedDensities {
    tables: DensityTables,
    fallback: SolvedDensities,
}

impl TabulatedDensities {
    /// Refuses tables whose fingerprint differs from the one implied by
    /// `fallback` and `seed`.
    pub fn new(tables: DensityTables, fallback: SolvedDensities, seed: u64) -> Result<Self> {
        let expected = Fingerprint::of(&fallback, seed);
        if tables.fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                expected: expected.to_string(),
                found: tables.fingerprint.to_string(),
            });
        }
        Ok(Self { tables, fallback })
    }

    pub fn tables(&self) -> &DensityTables {
        &self.tables
    }

    fn miss(&self, what: &str) -> Result<()> {
        match self.fallback.opts.out_of_range {
            OutOfRangePolicy::Solve => Ok(()),
            OutOfRangePolicy::Fail => Err(Error::OutOfRange(what.into())),
        }
    }
}

impl RelaxedDensities for TabulatedDensities {
    fn bulk(&self, x: &Vector, a: &Mat, b: &Mat) -> Result<f64> {
        if let Some(v) = self.tables.bulk_value(a, b) {
            return Ok(v);
        }
        self.miss(&format!("H at A = {:?}, B = {:?}", a.flat(), b.flat()))?;
        self.fallback.bulk(x, a, b)
    }

    fn surface(&self, x: &Vector, lambda: &Vector, nu: &Vector) -> Result<f64> {
        if let Some(v) = self.tables.surface_value(lambda, nu) {
            return Ok(v);
        }
        self.miss(&format!("h at λ = {:?}, ν = {:?}", lambda.as_slice(), nu.as_slice()))?;
        self.fallback.surface(x, lambda, nu)
    }

    fn cantor(&self, direction: f64) -> Result<f64> {
        if let Some(v) = self.tables.recession_value(direction) {
            return Ok(v);
        }
        self.miss("recession direction")?;
        self.fallback.cantor(direction)
    }

    fn interpolated(&self) -> bool {
        true
    }

    fn x_dependent(&self) -> bool {
        self.fallback.x_dependent()
    }
}

/// Evaluation points and weights of the bulk integral on cell `c`.
fn bulk_points(sd: &StructuredDeformation, c: usize) -> Vec<(Vector, f64)> {
    let mesh = sd.mesh();
    let cell = &mesh.cells()[c];
    if sd.g.cell(c).h.is_none() {
        vec![(cell.center, cell.volume)]
    } else {
        mesh.cell_gauss(c, 2).into_iter().map(|(d, w)| (cell.center + d, w)).collect()
    }
}

/// `I_p(g, G)` with densities from `densities`.
pub fn evaluate_with(sd: &StructuredDeformation, densities: &dyn RelaxedDensities) -> Result<RelaxationBreakdown> {
    let cantor_part = sd.g.cantor().filter(|k| k.mass != 0.0);
    if cantor_part.is_some() && densities.x_dependent() {
        return Err(Error::Unsupported("a Cantor part needs an x-independent W".into()));
    }
    let mesh = sd.mesh();
    let bulk_cells: Vec<Result<f64>> = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let mut s = 0.0;
            for (x, wt) in bulk_points(sd, c) {
                let a = sd.g.gradient(c, &x).sym();
                s += wt * densities.bulk(&x, &a, &sd.big_g[c])?;
            }
            Ok(s)
        })
        .collect();
    let jump_facets: Vec<Result<f64>> = mesh
        .interior_facets()
        .par_iter()
        .map(|f| {
            let mut s = 0.0;
            for (x, wt) in f.quadrature(FacetRule::Gauss2) {
                let j = sd.g.jump_at(f, &x);
                if j.norm() > JUMP_TOL {
                    s += wt * densities.surface(&x, &j, &f.normal)?;
                }
            }
            Ok(s)
        })
        .collect();
    let mut bulk = 0.0;
    for v in bulk_cells {
        bulk += v?;
    }
    let mut jump = 0.0;
    for v in jump_facets {
        jump += v?;
    }
    let cantor = match cantor_part {
        Some(k) => densities.cantor(k.mass.signum())? * k.mass.abs(),
        None => 0.0,
    };
    Ok(RelaxationBreakdown { bulk, jump, cantor, total: bulk + jump + cantor, interpolated: densities.interpolated() })
}

/// `I_p(g, G)`; with `tables` the densities are interpolated (falling back per
/// `opts.out_of_range`), otherwise solved on demand. `seed` enters the table
/// fingerprint.
pub fn evaluate_Ip(
    sd: &StructuredDeformation,
    w: &BulkDensity,
    psi: &SurfaceDensity,
    opts: &RelaxOptions,
    seed: u64,
    tables: Option<&DensityTables>,
) -> Result<RelaxationBreakdown> {
    let solved = SolvedDensities::new(w.clone(), psi.clone(), sd.p, opts.clone())?;
    if solved.dim() != sd.dim() {
        return Err(Error::DimensionMismatch { expected: sd.dim(), got: solved.dim() });
    }
    match tables {
        Some(t) => evaluate_with(sd, &TabulatedDensities::new(t.clone(), solved, seed)?),
        None => evaluate_with(sd, &solved),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{CantorDescriptor, CellData};

    fn w2psi1() -> SolvedDensities {
        SolvedDensities::new(BulkDensity::w2(1), SurfaceDensity::psi1(1), 2.0, RelaxOptions::default()).unwrap()
    }

    fn line(n: usize, slope: f64) -> BrokenField {
        BrokenField::affine(Arc::new(Mesh::unit(1, n).unwrap()), &Mat::scalar(slope), &Vector::scalar(0.0))
    }

    #[test]
    fn identity_without_structure() {
        let d = w2psi1();
        let sd = StructuredDeformation::uniform(line(4, 1.0), Mat::zeros(1), 2.0).unwrap();
        let r = evaluate_with(&sd, &d).unwrap();
        assert!((r.bulk - 1.0).abs() < 1e-6, "{r:?}");
        assert_eq!((r.jump, r.cantor), (0.0, 0.0));
        let zero = StructuredDeformation::uniform(line(4, 0.0), Mat::zeros(1), 2.0).unwrap();
        assert_eq!(evaluate_with(&zero, &d).unwrap().total, 0.0);
    }

    #[test]
    fn cantor_term_uses_recession() {
        let d = w2psi1();
        let g = line(4, 0.0).with_cantor(CantorDescriptor::new(6, 1.0).unwrap()).unwrap();
        let sd = StructuredDeformation::uniform(g, Mat::zeros(1), 2.0).unwrap();
        let r = evaluate_with(&sd, &d).unwrap();
        assert!((r.cantor - 1.0).abs() < 1e-4, "{r:?}");
        assert!((r.total - 1.0).abs() < 1e-4);

        let wx = BulkDensity::w2_weighted(1, 0.5).unwrap();
        let dx = SolvedDensities::new(wx, SurfaceDensity::psi1(1), 2.0, RelaxOptions::default()).unwrap();
        assert!(matches!(evaluate_with(&sd, &dx), Err(Error::Unsupported(_))));
    }

    #[test]
    fn translation_and_skew_invariance() {
        let mesh = Arc::new(Mesh::unit(2, 3).unwrap());
        let g = BrokenField::from_fn(mesh.clone(), |c, x| {
            let s = if c % 2 == 0 { 0.3 } else { -0.2 };
            CellData::affine(Vector::new2(s, 0.1 * x.get(0)), Mat::sym2(s, 0.1, 0.05))
        })
        .unwrap();
        let sd = StructuredDeformation::uniform(g.clone(), Mat::sym2(0.2, 0.0, 0.1), 2.0).unwrap();
        let opts = RelaxOptions { n_bulk: Some(3), n_surface: Some(4), ..RelaxOptions::default() };
        let d = SolvedDensities::new(BulkDensity::w2(2), SurfaceDensity::psi1(2), 2.0, opts).unwrap();
        let base = evaluate_with(&sd, &d).unwrap();
        let shifted = StructuredDeformation::uniform(g.translate(&Vector::new2(2.0, -1.0)), sd.big_g[0], 2.0).unwrap();
        // jump heights are recomputed from shifted values, so agreement is up to rounding
        let moved = evaluate_with(&shifted, &d).unwrap();
        assert_eq!(moved.bulk, base.bulk);
        assert!((moved.jump - base.jump).abs() < 1e-8, "{moved:?} vs {base:?}");

        let skew = Mat::new2(0.0, 0.4, -0.4, 0.0);
        let cells = g
            .cells()
            .iter()
            .zip(mesh.cells())
            .map(|(cd, cell)| CellData::affine(cd.a + skew.mul_vec(&cell.center), cd.z + skew));
        let rotated = g.with_cells(cells.collect()).unwrap();
        let sd2 = StructuredDeformation::uniform(rotated, sd.big_g[0], 2.0).unwrap();
        assert!((evaluate_with(&sd2, &d).unwrap().bulk - base.bulk).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_g() {
        let g = line(4, 1.0);
        assert!(StructuredDeformation::new(g.clone(), vec![Mat::zeros(1); 3], 2.0).is_err());
        assert!(StructuredDeformation::new(g, vec![Mat::scalar(f64::NAN); 4], 2.0).is_err());
    }
}
