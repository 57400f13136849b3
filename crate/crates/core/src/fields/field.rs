//! Broken (per-cell affine or quadratic) fields and the 1D Cantor component.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::mesh::{Facet, Frame, Mesh};
use crate::error::{Error, Result};
use crate::tensor::{Hess, Mat, Vector};

/// Per-cell data: `u(x) = a + Z(x − x_c) + ½ H(x − x_c)(x − x_c)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellData {
    pub a: Vector,
    pub z: Mat,
    pub h: Option<Hess>,
}

impl CellData {
    pub fn affine(a: Vector, z: Mat) -> Self {
        Self { a, z, h: None }
    }

    fn is_finite(&self) -> bool {
        self.a.is_finite() && self.z.is_finite() && self.h.is_none_or(|h| h.is_finite())
    }
}

/// Scaled middle-thirds Cantor function `m·C(x)` on `(0,1)`; `level` fixes
/// the staircase surrogate used where a finite description is needed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorDescriptor {
    pub level: u32,
    /// Signed mass; `|mass|` is the total variation of the Cantor part.
    pub mass: f64,
}

impl CantorDescriptor {
    pub fn new(level: u32, mass: f64) -> Result<Self> {
        if level == 0 || level > 30 {
            return Err(Error::InvalidInput(format!("Cantor level must be in 1..=30, got {level}")));
        }
        if !mass.is_finite() {
            return Err(Error::InvalidInput("Cantor mass must be finite".into()));
        }
        Ok(Self { level, mass })
    }

    /// Standard Cantor function `C(x)` on `[0,1]`, clamped outside.
    pub fn cantor_function(x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let mut x = x;
        let mut value = 0.0;
        let mut scale = 0.5;
        for _ in 0..64 {
            x *= 3.0;
            if x < 1.0 {
                // first third: keep descending
            } else if x <= 2.0 {
                return value + scale;
            } else {
                value += scale;
                x -= 2.0;
            }
            scale *= 0.5;
        }
        value
    }

    /// `∫₀ˣ C(t) dt`, by self-similarity.
    pub fn cantor_integral(x: f64) -> f64 {
        fn rec(x: f64, depth: u32) -> f64 {
            if x <= 0.0 || depth > 60 {
                return 0.0;
            }
            if x >= 1.0 {
                return 0.5 + (x - 1.0);
            }
            if x <= 1.0 / 3.0 {
                rec(3.0 * x, depth + 1) / 6.0
            } else if x <= 2.0 / 3.0 {
                1.0 / 12.0 + 0.5 * (x - 1.0 / 3.0)
            } else {
                0.25 + 0.5 * (x - 2.0 / 3.0) + rec(3.0 * x - 2.0, depth + 1) / 6.0
            }
        }
        rec(x, 0)
    }

    /// `m·C(x)`.
    pub fn value(&self, x: f64) -> f64 {
        self.mass * Self::cantor_function(x)
    }

    /// Remaining intervals of the level-`L` construction.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        let mut iv = vec![(0.0, 1.0)];
        for _ in 0..self.level {
            iv = iv
                .into_iter()
                .flat_map(|(a, b)| {
                    let t = (b - a) / 3.0;
                    [(a, a + t), (b - t, b)]
                })
                .collect();
        }
        iv
    }

    /// Jumps of the piecewise-constant surrogate: one jump of height
    /// `m/(2^L − 1)` at the center of each removed gap, so that the
    /// surrogate has `2^L` plateaus and total variation `|m|`.
    pub fn surrogate_jumps(&self) -> Vec<(f64, f64)> {
        let iv = self.intervals();
        let k = iv.len() - 1;
        let height = self.mass / k as f64;
        iv.windows(2).map(|w| (0.5 * (w[0].1 + w[1].0), height)).collect()
    }

    /// Signed Cantor measure as a 1×1 matrix.
    pub fn as_matrix(&self) -> Mat {
        Mat::scalar(self.mass)
    }
}

/// Discrete SBD field: per-cell affine (optionally quadratic) data on a mesh,
/// optionally plus a 1D Cantor component.
#[derive(Clone, Debug, PartialEq)]
pub struct BrokenField {
    mesh: Arc<Mesh>,
    cells: Vec<CellData>,
    cantor: Option<CantorDescriptor>,
}

impl BrokenField {
    pub fn new(mesh: Arc<Mesh>, cells: Vec<CellData>) -> Result<Self> {
        if cells.len() != mesh.cells().len() {
            return Err(Error::InvalidInput(format!(
                "field has {} cells, mesh has {}",
                cells.len(),
                mesh.cells().len()
            )));
        }
        let dim = mesh.dim();
        for (k, c) in cells.iter().enumerate() {
            if c.a.dim() != dim || c.z.dim() != dim || c.h.is_some_and(|h| h.dim() != dim) {
                return Err(Error::DimensionMismatch { expected: dim, got: c.a.dim() });
            }
            if !c.is_finite() {
                return Err(Error::InvalidInput(format!("cell {k} has non-finite data")));
            }
            if c.h.is_some_and(|h| !h.is_symmetric(1e-12)) {
                return Err(Error::InvalidInput(format!("cell {k} Hessian is not symmetric")));
            }
        }
        Ok(Self { mesh, cells, cantor: None })
    }

    pub fn zero(mesh: Arc<Mesh>) -> Self {
        let dim = mesh.dim();
        let cells = vec![CellData::affine(Vector::zeros(dim), Mat::zeros(dim)); mesh.cells().len()];
        Self { mesh, cells, cantor: None }
    }

    /// `u(x) = A x + b`.
    pub fn affine(mesh: Arc<Mesh>, a: &Mat, b: &Vector) -> Self {
        let cells = mesh.cells().iter().map(|c| CellData::affine(a.mul_vec(&c.center) + *b, *a)).collect();
        Self { mesh, cells, cantor: None }
    }

    /// Cellwise data from a closure of the cell index and center.
    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(usize, &Vector) -> CellData) -> Result<Self> {
        let cells = mesh.cells().iter().enumerate().map(|(k, c)| f(k, &c.center)).collect();
        Self::new(mesh, cells)
    }

    /// Adds a Cantor component (1D standard mesh only).
    pub fn with_cantor(mut self, cantor: CantorDescriptor) -> Result<Self> {
        if self.mesh.dim() != 1 || self.mesh.frame() != Frame::Standard || !self.mesh.is_full() {
            return Err(Error::Unsupported("Cantor components live on the full 1D unit interval only".into()));
        }
        self.cantor = Some(cantor);
        Ok(self)
    }

    pub fn without_cantor(mut self) -> Self {
        self.cantor = None;
        self
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn cells(&self) -> &[CellData] {
        &self.cells
    }

    pub fn cell(&self, c: usize) -> &CellData {
        &self.cells[c]
    }

    pub fn cantor(&self) -> Option<CantorDescriptor> {
        self.cantor
    }

    pub fn has_hessian(&self) -> bool {
        self.cells.iter().any(|c| c.h.is_some())
    }

    /// Broken part of `u` on cell `c` at physical point `x` (Cantor excluded).
    pub fn value(&self, c: usize, x: &Vector) -> Vector {
        let d = *x - self.mesh.cells()[c].center;
        let cd = &self.cells[c];
        let mut u = cd.a + cd.z.mul_vec(&d);
        if let Some(h) = cd.h {
            u += h.quad(&d);
        }
        u
    }

    /// Full value including the Cantor component.
    /// `u(x)` at an arbitrary point of the domain, Cantor part included.
    pub fn eval(&self, x: &Vector) -> Option<Vector> {
        self.mesh.locate(x).map(|c| self.value_with_cantor(c, x))
    }

    pub fn value_with_cantor(&self, c: usize, x: &Vector) -> Vector {
        let mut u = self.value(c, x);
        if let Some(k) = self.cantor {
            u += Vector::scalar(k.value(x.get(0)));
        }
        u
    }

    /// `∇u` on cell `c` at `x` (absolutely continuous part).
    pub fn gradient(&self, c: usize, x: &Vector) -> Mat {
        let cd = &self.cells[c];
        match cd.h {
            None => cd.z,
            Some(h) => cd.z + h.contract(&(*x - self.mesh.cells()[c].center)),
        }
    }

    /// `[u] = u⁺ − u⁻` at `x` on an interior facet.
    pub fn jump_at(&self, f: &Facet, x: &Vector) -> Vector {
        let plus = f.plus.expect("jump on an interior facet");
        self.value(plus, x) - self.value(f.minus, x)
    }

    /// `[∇u]` at `x` on an interior facet.
    pub fn gradient_jump_at(&self, f: &Facet, x: &Vector) -> Mat {
        let plus = f.plus.expect("jump on an interior facet");
        self.gradient(plus, x) - self.gradient(f.minus, x)
    }

    /// Cell average of the broken part.
    pub fn cell_average(&self, c: usize) -> Vector {
        let cd = &self.cells[c];
        match cd.h {
            None => cd.a,
            Some(_) => {
                let mut s = Vector::zeros(self.dim());
                let center = self.mesh.cells()[c].center;
                for (d, w) in self.mesh.cell_gauss(c, 3) {
                    s += self.value(c, &(center + d)).scale(w);
                }
                s.scale(1.0 / self.mesh.cells()[c].volume)
            }
        }
    }

    /// Returns a field with replaced cell data on the same mesh.
    pub fn with_cells(&self, cells: Vec<CellData>) -> Result<Self> {
        let mut f = Self::new(self.mesh.clone(), cells)?;
        f.cantor = self.cantor;
        Ok(f)
    }

    fn check_same_mesh(&self, o: &BrokenField) -> Result<()> {
        if Arc::ptr_eq(&self.mesh, &o.mesh) || *self.mesh == *o.mesh {
            Ok(())
        } else {
            Err(Error::MeshMismatch("fields live on different meshes".into()))
        }
    }

    /// `self + s·o`; Cantor masses add when levels agree.
    pub fn axpy(&self, s: f64, o: &BrokenField) -> Result<BrokenField> {
        self.check_same_mesh(o)?;
        let cells = self
            .cells
            .iter()
            .zip(&o.cells)
            .map(|(p, q)| CellData {
                a: p.a + q.a.scale(s),
                z: p.z + q.z.scale(s),
                h: match (p.h, q.h) {
                    (None, None) => None,
                    (a, b) => {
                        Some(a.unwrap_or(Hess::zeros(self.dim())) + b.unwrap_or(Hess::zeros(self.dim())).scale(s))
                    }
                },
            })
            .collect();
        let cantor = match (self.cantor, o.cantor) {
            (None, None) => None,
            (Some(c), None) => Some(c),
            (None, Some(c)) => Some(CantorDescriptor { level: c.level, mass: s * c.mass }),
            (Some(a), Some(b)) if a.level == b.level => {
                Some(CantorDescriptor { level: a.level, mass: a.mass + s * b.mass })
            }
            _ => return Err(Error::Unsupported("cannot add Cantor components of different levels".into())),
        };
        Ok(BrokenField { mesh: self.mesh.clone(), cells, cantor })
    }

    pub fn scale(&self, s: f64) -> BrokenField {
        let cells = self
            .cells
            .iter()
            .map(|c| CellData { a: c.a.scale(s), z: c.z.scale(s), h: c.h.map(|h| h.scale(s)) })
            .collect();
        let cantor = self.cantor.map(|c| CantorDescriptor { level: c.level, mass: s * c.mass });
        BrokenField { mesh: self.mesh.clone(), cells, cantor }
    }

    /// `u + b`.
    pub fn translate(&self, b: &Vector) -> BrokenField {
        let mut out = self.clone();
        for c in &mut out.cells {
            c.a += *b;
        }
        out
    }

    /// `Q u + b`.
    pub fn rigid_map(&self, q: &Mat, b: &Vector) -> BrokenField {
        let cells = self
            .cells
            .iter()
            .map(|c| CellData { a: q.mul_vec(&c.a) + *b, z: q.matmul(&c.z), h: c.h.map(|h| h.left_mul(q)) })
            .collect();
        BrokenField { mesh: self.mesh.clone(), cells, cantor: self.cantor }
    }

    /// Exact representation on the mesh refined by factor `k`.
    pub fn refine(&self, k: usize) -> Result<BrokenField> {
        let fine = Arc::new(self.mesh.refined(k)?);
        let mut cells = Vec::with_capacity(fine.cells().len());
        for child in fine.cells() {
            let parent_grid = [child.grid[0] / k, child.grid[1] / k];
            let p = self
                .mesh
                .cell_at_grid(parent_grid)
                .ok_or_else(|| Error::MeshMismatch("refined cell without parent".into()))?;
            cells.push(CellData {
                a: self.value(p, &child.center),
                z: self.gradient(p, &child.center),
                h: self.cells[p].h,
            });
        }
        Ok(BrokenField { mesh: fine, cells, cantor: self.cantor })
    }

    /// Total variation of the symmetric gradient, `|Eu|(Ω)`.
    pub fn total_variation(&self) -> f64 {
        super::decompose(self).total_variation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantor_function_values() {
        assert_eq!(CantorDescriptor::cantor_function(0.5), 0.5);
        assert!((CantorDescriptor::cantor_function(0.25) - 1.0 / 3.0).abs() < 1e-15);
        assert!((CantorDescriptor::cantor_function(1.0 / 9.0) - 0.25).abs() < 1e-15);
        assert!((CantorDescriptor::cantor_integral(1.0) - 0.5).abs() < 1e-15);
        // brute-force check of the integral
        let x = 0.71;
        let n = 200_000;
        let s: f64 = (0..n).map(|i| CantorDescriptor::cantor_function((i as f64 + 0.5) * x / n as f64)).sum::<f64>()
            * x
            / n as f64;
        assert!((CantorDescriptor::cantor_integral(x) - s).abs() < 1e-5);
    }

    #[test]
    fn surrogate_has_power_of_two_plateaus_and_full_mass() {
        for level in 1..=6 {
            let c = CantorDescriptor::new(level, 2.0).unwrap();
            let jumps = c.surrogate_jumps();
            assert_eq!(jumps.len() + 1, 1 << level);
            let tv: f64 = jumps.iter().map(|j| j.1.abs()).sum();
            assert!((tv - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn refine_is_exact() {
        let mesh = Arc::new(Mesh::unit(2, 2).unwrap());
        let f = BrokenField::from_fn(mesh, |k, x| CellData {
            a: Vector::new2(k as f64, x.get(1)),
            z: Mat::new2(1.0, 2.0, -1.0, 0.5),
            h: Some({
                let mut h = Hess::zeros(2);
                h.set(0, 0, 1, 0.3);
                h.set(0, 1, 0, 0.3);
                h
            }),
        })
        .unwrap();
        let r = f.refine(3).unwrap();
        for (c, cell) in r.mesh().cells().iter().enumerate() {
            let x = cell.center + Vector::new2(0.01, -0.02);
            let p = f.mesh().cell_at_grid([cell.grid[0] / 3, cell.grid[1] / 3]).unwrap();
            assert!((r.value(c, &x) - f.value(p, &x)).norm() < 1e-14);
        }
    }
}
