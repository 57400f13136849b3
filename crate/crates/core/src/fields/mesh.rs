//! Uniform 1D/2D meshes of the unit cube, optionally rotated, with an
//! active-cell mask for subdomains.

use crate::error::{Error, Result};
use crate::quadrature;
use crate::tensor::{Mat, Vector};

/// Convention fixing the in-plane axes of a rotated cube `Q_ν`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// `(0,1)^N` with the standard axes.
    Standard,
    /// Centered cube whose axes are the images of `e_i` under the Householder
    /// reflection sending `e₁` to `ν`.
    Householder,
    /// Centered cube with axes `(ν, ν^⊥)`, `ν^⊥` the counter-clockwise normal.
    Rotation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    /// Grid index along each axis.
    pub grid: [usize; 2],
    pub center: Vector,
    pub volume: f64,
}

/// A shared edge (2D) or point (1D). For interior facets `normal` points from
/// `minus` into `plus`; for boundary facets it is the outward normal of `minus`.
#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub minus: usize,
    pub plus: Option<usize>,
    pub normal: Vector,
    pub center: Vector,
    /// Unit tangent along the edge (2D only).
    pub tangent: Option<Vector>,
    pub area: f64,
    /// Axis index the normal is parallel to.
    pub axis: usize,
}

/// Quadrature used on facets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FacetRule {
    /// Two Gauss points per edge.
    Gauss2,
    /// Composite Simpson with the given number of panels per edge.
    Simpson(usize),
}

impl Facet {
    /// Quadrature points and weights on the facet.
    pub fn quadrature(&self, rule: FacetRule) -> Vec<(Vector, f64)> {
        let Some(t) = self.tangent else {
            return vec![(self.center, self.area)];
        };
        let half = 0.5 * self.area;
        match rule {
            FacetRule::Gauss2 => {
                quadrature::scaled(2, half).into_iter().map(|(s, w)| (self.center + t.scale(s), w)).collect()
            }
            FacetRule::Simpson(panels) => {
                let panels = panels.max(1);
                let len = self.area / panels as f64;
                let mut out = Vec::with_capacity(2 * panels + 1);
                for k in 0..=2 * panels {
                    let s = -half + 0.5 * len * k as f64;
                    let w = if k == 0 || k == 2 * panels {
                        len / 6.0
                    } else if k % 2 == 1 {
                        4.0 * len / 6.0
                    } else {
                        2.0 * len / 6.0
                    };
                    out.push((self.center + t.scale(s), w));
                }
                out
            }
        }
    }

    /// Gauss points of the given order (exact polynomial integration along the edge).
    pub fn gauss(&self, order: usize) -> Vec<(Vector, f64)> {
        match self.tangent {
            None => vec![(self.center, self.area)],
            Some(t) => quadrature::scaled(order, 0.5 * self.area)
                .into_iter()
                .map(|(s, w)| (self.center + t.scale(s), w))
                .collect(),
        }
    }

    /// Endpoints of the edge (2D) or the point itself (1D).
    pub fn vertices(&self) -> Vec<Vector> {
        match self.tangent {
            None => vec![self.center],
            Some(t) => vec![self.center - t.scale(0.5 * self.area), self.center + t.scale(0.5 * self.area)],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    n: usize,
    frame: Frame,
    nu: Option<Vector>,
    origin: Vector,
    /// Columns are the unit axis vectors.
    axes: Mat,
    h: f64,
    active: Vec<bool>,
    cells: Vec<Cell>,
    cell_of_grid: Vec<Option<usize>>,
    interior: Vec<Facet>,
    boundary: Vec<Facet>,
}

impl PartialEq for Mesh {
    fn eq(&self, o: &Self) -> bool {
        self.dim == o.dim
            && self.n == o.n
            && self.frame == o.frame
            && self.origin == o.origin
            && self.axes == o.axes
            && self.active == o.active
    }
}

fn householder_axes(nu: &Vector) -> Mat {
    let dim = nu.dim();
    let e1 = Vector::unit(dim, 0);
    let w = e1 - *nu;
    let wn2 = w.dot(&w);
    if wn2 < 1e-30 {
        return Mat::identity(dim);
    }
    // H = I − 2wwᵀ/|w|²; columns H e_i
    Mat::from_fn(dim, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - 2.0 * w.get(i) * w.get(j) / wn2
    })
}

impl Mesh {
    /// `(0,1)^N` split into `n^N` cells.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Self::build(dim, n, Frame::Standard, None, None)
    }

    /// Centered unit cube with two faces orthogonal to `ν`.
    pub fn cube_nu(dim: usize, n: usize, nu: &Vector, frame: Frame) -> Result<Self> {
        if frame == Frame::Standard {
            return Err(Error::InvalidInput("cube_nu needs a rotated frame".into()));
        }
        Self::build(dim, n, frame, Some(*nu), None)
    }

    pub(crate) fn build(
        dim: usize,
        n: usize,
        frame: Frame,
        nu: Option<Vector>,
        active: Option<Vec<bool>>,
    ) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidInput(format!("mesh dimension {dim} unsupported")));
        }
        if n == 0 {
            return Err(Error::InvalidInput("mesh needs n ≥ 1".into()));
        }
        let (origin, axes) = match frame {
            Frame::Standard => (Vector::zeros(dim), Mat::identity(dim)),
            _ => {
                let nu = nu.ok_or_else(|| Error::InvalidInput("rotated frame needs ν".into()))?;
                if nu.dim() != dim || (nu.norm() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!("ν must be a unit vector in R^{dim}")));
                }
                let axes = if dim == 1 {
                    Mat::scalar(nu.get(0))
                } else if frame == Frame::Householder {
                    householder_axes(&nu)
                } else {
                    Mat::new2(nu.get(0), -nu.get(1), nu.get(1), nu.get(0))
                };
                let mut origin = Vector::zeros(dim);
                for k in 0..dim {
                    origin -= column(&axes, k).scale(0.5);
                }
                (origin, axes)
            }
        };
        let total = n.pow(dim as u32);
        let active = active.unwrap_or_else(|| vec![true; total]);
        if active.len() != total {
            return Err(Error::InvalidInput("mask length does not match grid".into()));
        }
        let h = 1.0 / n as f64;
        let vol = h.powi(dim as i32);
        let mut mesh = Mesh {
            dim,
            n,
            frame,
            nu: if frame == Frame::Standard { None } else { nu },
            origin,
            axes,
            h,
            active,
            cells: Vec::new(),
            cell_of_grid: vec![None; total],
            interior: Vec::new(),
            boundary: Vec::new(),
        };
        let ny = if dim == 2 { n } else { 1 };
        for j in 0..ny {
            for i in 0..n {
                let g = i + n * j;
                if !mesh.active[g] {
                    continue;
                }
                let xi: Vec<f64> = [i, j][..dim].iter().map(|&k| (k as f64 + 0.5) * h).collect();
                mesh.cell_of_grid[g] = Some(mesh.cells.len());
                mesh.cells.push(Cell { grid: [i, j], center: mesh.to_global(&xi), volume: vol });
            }
        }
        let area = if dim == 2 { h } else { 1.0 };
        for c in 0..mesh.cells.len() {
            let grid = mesh.cells[c].grid;
            for axis in 0..dim {
                let normal = column(&mesh.axes, axis);
                let tangent = (dim == 2).then(|| column(&mesh.axes, 1 - axis));
                let center_c = mesh.cells[c].center;
                // lower face: boundary if no active neighbour
                if grid[axis] == 0 || mesh.neighbour(grid, axis, -1).is_none() {
                    mesh.boundary.push(Facet {
                        minus: c,
                        plus: None,
                        normal: -normal,
                        center: center_c - normal.scale(0.5 * h),
                        tangent,
                        area,
                        axis,
                    });
                }
                match mesh.neighbour(grid, axis, 1) {
                    Some(p) => mesh.interior.push(Facet {
                        minus: c,
                        plus: Some(p),
                        normal,
                        center: center_c + normal.scale(0.5 * h),
                        tangent,
                        area,
                        axis,
                    }),
                    None => mesh.boundary.push(Facet {
                        minus: c,
                        plus: None,
                        normal,
                        center: center_c + normal.scale(0.5 * h),
                        tangent,
                        area,
                        axis,
                    }),
                }
            }
        }
        Ok(mesh)
    }

    fn neighbour(&self, grid: [usize; 2], axis: usize, step: isize) -> Option<usize> {
        let k = grid[axis] as isize + step;
        if k < 0 || k >= self.n as isize {
            return None;
        }
        let mut g = grid;
        g[axis] = k as usize;
        self.cell_of_grid[g[0] + self.n * if self.dim == 2 { g[1] } else { 0 }]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn nu(&self) -> Option<Vector> {
        self.nu
    }

    /// Cell side length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn axes(&self) -> Mat {
        self.axes
    }

    pub fn axis(&self, k: usize) -> Vector {
        column(&self.axes, k)
    }

    pub fn origin(&self) -> Vector {
        self.origin
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn interior_facets(&self) -> &[Facet] {
        &self.interior
    }

    pub fn boundary_facets(&self) -> &[Facet] {
        &self.boundary
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn is_full(&self) -> bool {
        self.active.iter().all(|&a| a)
    }

    pub fn cell_at_grid(&self, grid: [usize; 2]) -> Option<usize> {
        let j = if self.dim == 2 { grid[1] } else { 0 };
        if grid[0] >= self.n || j >= self.n {
            return None;
        }
        self.cell_of_grid[grid[0] + self.n * j]
    }

    pub fn volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// Maps local coordinates `ξ ∈ [0,1]^N` to physical points.
    pub fn to_global(&self, xi: &[f64]) -> Vector {
        let mut x = self.origin;
        for (k, &s) in xi.iter().enumerate() {
            x += column(&self.axes, k).scale(s);
        }
        x
    }

    pub fn to_local(&self, x: &Vector) -> Vec<f64> {
        let d = *x - self.origin;
        (0..self.dim).map(|k| column(&self.axes, k).dot(&d)).collect()
    }

    /// Cell containing `x` (points on shared faces go to the upper cell).
    pub fn locate(&self, x: &Vector) -> Option<usize> {
        let xi = self.to_local(x);
        let mut g = [0usize; 2];
        for (k, &s) in xi.iter().enumerate() {
            if !(-1e-12..=1.0 + 1e-12).contains(&s) {
                return None;
            }
            g[k] = ((s * self.n as f64).floor().max(0.0) as usize).min(self.n - 1);
        }
        self.cell_at_grid(g)
    }

    /// Cell corners in physical coordinates.
    pub fn cell_vertices(&self, c: usize) -> Vec<Vector> {
        let center = self.cells[c].center;
        let half = 0.5 * self.h;
        match self.dim {
            1 => vec![center - self.axis(0).scale(half), center + self.axis(0).scale(half)],
            _ => {
                let (a, b) = (self.axis(0).scale(half), self.axis(1).scale(half));
                vec![center - a - b, center + a - b, center + a + b, center - a + b]
            }
        }
    }

    /// Tensor Gauss points of the given order on cell `c`: (offset from center, weight).
    pub fn cell_gauss(&self, c: usize, order: usize) -> Vec<(Vector, f64)> {
        let rule = quadrature::scaled(order, 0.5 * self.h);
        match self.dim {
            1 => rule.iter().map(|&(s, w)| (self.axis(0).scale(s), w)).collect(),
            _ => {
                let _ = c;
                let mut out = Vec::with_capacity(rule.len() * rule.len());
                for &(s, ws) in &rule {
                    for &(t, wt) in &rule {
                        out.push((self.axis(0).scale(s) + self.axis(1).scale(t), ws * wt));
                    }
                }
                out
            }
        }
    }

    /// Same geometry with every cell split into `k^N` children; the mask is inherited.
    pub fn refined(&self, k: usize) -> Result<Mesh> {
        if k == 0 {
            return Err(Error::InvalidInput("refinement factor must be ≥ 1".into()));
        }
        let m = self.n * k;
        let ny = if self.dim == 2 { m } else { 1 };
        let mut active = Vec::with_capacity(m.pow(self.dim as u32));
        for j in 0..ny {
            for i in 0..m {
                let pj = if self.dim == 2 { j / k } else { 0 };
                active.push(self.active[i / k + self.n * pj]);
            }
        }
        Mesh::build(self.dim, m, self.frame, self.nu, Some(active))
    }

    /// Mesh with the same geometry and a new mask.
    pub(crate) fn with_mask(&self, active: Vec<bool>) -> Result<Mesh> {
        Mesh::build(self.dim, self.n, self.frame, self.nu, Some(active))
    }
}

fn column(m: &Mat, k: usize) -> Vector {
    let c: Vec<f64> = (0..m.dim()).map(|i| m.get(i, k)).collect();
    Vector::from_slice(&c)
}
