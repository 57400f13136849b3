//! Assembly of the discrete cell problems on broken affine fields:
//! `min_x Σ_b F_b(K_b x − o_b)` subject to `C x = d`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::densities::{BulkDensity, BulkProfile, DualBall, SurfaceDensity};
use crate::error::{Error, Result};
use crate::fields::{BrokenField, CellData, FacetRule, Mesh};
use crate::tensor::{sym_len, Mat, Vector};

/// Compressed sparse rows.
#[derive(Clone, Debug, Default)]
pub(crate) struct Csr {
    pub ptr: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
    pub cols: usize,
}

impl Csr {
    fn new(cols: usize) -> Self {
        Self { ptr: vec![0], idx: Vec::new(), val: Vec::new(), cols }
    }

    fn push_row(&mut self, row: &[(usize, f64)]) {
        for &(j, v) in row {
            if v != 0.0 {
                self.idx.push(j);
                self.val.push(v);
            }
        }
        self.ptr.push(self.idx.len());
    }

    pub fn rows(&self) -> usize {
        self.ptr.len() - 1
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.ptr[r]..self.ptr[r + 1]).map(move |k| (self.idx[k], self.val[k]))
    }

    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_t(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                for (j, v) in self.row(r) {
                    out[j] += v * yr;
                }
            }
        }
    }

    pub fn abs_row_sums(&self) -> Vec<f64> {
        (0..self.rows()).map(|r| self.row(r).map(|(_, v)| v.abs()).sum()).collect()
    }

    pub fn abs_col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for (&j, &v) in self.idx.iter().zip(&self.val) {
            s[j] += v.abs();
        }
        s
    }
}

/// Strain parameterization of each cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum StrainMode {
    /// All `N²` gradient entries.
    Free,
    /// Skew gradients only (`𝓔u = 0`).
    Skew,
}

#[derive(Clone, Debug)]
pub(crate) enum BlockKind {
    /// Rows hold `vol·sym(Z_c)`; cost `vol·scale·W(pos, sym(Z_c)/scale)`.
    Bulk { pos: Vector, vol: f64, scale: f64 },
    /// Rows hold `w·[u](x_q)` (or `w·(tr u − datum)`); cost `w·ψ(x₀, ·, ν)`.
    Jump { w: f64, nu: Vector },
}

#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub start: usize,
    pub len: usize,
    pub kind: BlockKind,
}

/// Energy ingredients of a discrete problem.
#[derive(Clone)]
pub(crate) struct Energy {
    pub w: Option<BulkDensity>,
    pub psi: SurfaceDensity,
    pub x0: Vector,
}

#[derive(Clone)]
pub(crate) struct Discretization {
    pub mesh: Arc<Mesh>,
    pub mode: StrainMode,
    pub npar: usize,
    basis: Vec<Mat>,
    pub k: Csr,
    pub offset: Vec<f64>,
    pub blocks: Vec<Block>,
    pub c: Csr,
    pub d: Vec<f64>,
    pub energy: Energy,
}

/// Boundary datum of a cell problem.
#[derive(Clone, Debug)]
pub(crate) enum Datum {
    Affine(Mat),
    Step { lambda: Vector, nu: Vector },
}

impl Datum {
    pub fn at(&self, x: &Vector) -> Vector {
        match self {
            Datum::Affine(a) => a.mul_vec(x),
            Datum::Step { lambda, nu } => {
                if x.dot(nu) > 0.0 {
                    *lambda
                } else {
                    Vector::zeros(lambda.dim())
                }
            }
        }
    }
}

pub(crate) struct Assembly<'a> {
    pub mesh: Arc<Mesh>,
    pub mode: StrainMode,
    pub datum: Datum,
    pub penalty_bc: bool,
    /// Target of `∫ sym(∇u)`, when constrained.
    pub mean_strain: Option<Mat>,
    /// Bulk block positions and argument scale: `(x(y), scale)`.
    pub bulk: Option<(&'a dyn Fn(&Vector) -> Vector, f64)>,
    pub rule: FacetRule,
    pub energy: Energy,
}

fn strain_basis(dim: usize, mode: StrainMode) -> Vec<Mat> {
    match (mode, dim) {
        (StrainMode::Free, _) => (0..dim * dim)
            .map(|k| {
                let mut m = Mat::zeros(dim);
                m.set(k / dim, k % dim, 1.0);
                m
            })
            .collect(),
        (StrainMode::Skew, 1) => Vec::new(),
        (StrainMode::Skew, _) => vec![Mat::new2(0.0, -1.0, 1.0, 0.0)],
    }
}

impl Discretization {
    pub fn assemble(asm: Assembly<'_>) -> Result<Self> {
        let mesh = asm.mesh;
        let dim = mesh.dim();
        let basis = strain_basis(dim, asm.mode);
        let npar = basis.len();
        let stride = dim + npar;
        let nvar = mesh.cells().len() * stride;
        let mut me = Self {
            mesh: mesh.clone(),
            mode: asm.mode,
            npar,
            basis,
            k: Csr::new(nvar),
            offset: Vec::new(),
            blocks: Vec::new(),
            c: Csr::new(nvar),
            d: Vec::new(),
            energy: asm.energy,
        };

        if let Some((pos, scale)) = asm.bulk {
            if asm.mode == StrainMode::Free {
                let l = sym_len(dim);
                for (c, cell) in mesh.cells().iter().enumerate() {
                    let start = me.k.rows();
                    for r in 0..l {
                        let row: Vec<(usize, f64)> = me
                            .basis
                            .iter()
                            .enumerate()
                            .map(|(k, e)| (c * stride + dim + k, cell.volume * e.sym_coords()[r]))
                            .collect();
                        me.k.push_row(&row);
                        me.offset.push(0.0);
                    }
                    me.blocks.push(Block {
                        start,
                        len: l,
                        kind: BlockKind::Bulk { pos: pos(&cell.center), vol: cell.volume, scale },
                    });
                }
            }
        }

        for f in mesh.interior_facets() {
            let plus = f.plus.expect("interior");
            for (x, w) in f.quadrature(asm.rule) {
                let start = me.k.rows();
                let (rp, rm) = (me.point_rows(plus, &x), me.point_rows(f.minus, &x));
                for i in 0..dim {
                    let mut row: Vec<(usize, f64)> = rp[i].iter().map(|&(j, v)| (j, w * v)).collect();
                    row.extend(rm[i].iter().map(|&(j, v)| (j, -w * v)));
                    me.k.push_row(&row);
                    me.offset.push(0.0);
                }
                me.blocks.push(Block { start, len: dim, kind: BlockKind::Jump { w, nu: f.normal } });
            }
        }

        if asm.penalty_bc {
            for f in mesh.boundary_facets() {
                for (x, w) in f.quadrature(asm.rule) {
                    let start = me.k.rows();
                    let rows = me.point_rows(f.minus, &x);
                    let datum = asm.datum.at(&x);
                    for (i, r) in rows.iter().enumerate() {
                        let row: Vec<(usize, f64)> = r.iter().map(|&(j, v)| (j, w * v)).collect();
                        me.k.push_row(&row);
                        me.offset.push(w * datum.get(i));
                    }
                    me.blocks.push(Block { start, len: dim, kind: BlockKind::Jump { w, nu: f.normal } });
                }
            }
        } else {
            let mut seen: Vec<(usize, Vector)> = Vec::new();
            for f in mesh.boundary_facets() {
                let value = match &asm.datum {
                    Datum::Affine(_) => None,
                    // the step datum is constant on every boundary facet it does not straddle
                    Datum::Step { .. } => Some(asm.datum.at(&f.center)),
                };
                for v in f.vertices() {
                    if seen.iter().any(|(c, p)| *c == f.minus && (*p - v).norm() < 1e-12) {
                        continue;
                    }
                    seen.push((f.minus, v));
                    let target = value.unwrap_or_else(|| asm.datum.at(&v));
                    for (i, r) in me.point_rows(f.minus, &v).into_iter().enumerate() {
                        me.c.push_row(&r);
                        me.d.push(target.get(i));
                    }
                }
            }
        }

        if let Some(b) = asm.mean_strain {
            if asm.mode == StrainMode::Free {
                let l = sym_len(dim);
                let target = b.sym_coords();
                for r in 0..l {
                    let mut row = Vec::new();
                    for (c, cell) in mesh.cells().iter().enumerate() {
                        for (k, e) in me.basis.iter().enumerate() {
                            row.push((c * stride + dim + k, cell.volume * e.sym_coords()[r]));
                        }
                    }
                    me.c.push_row(&row);
                    me.d.push(target[r]);
                }
            }
        }
        Ok(me)
    }

    pub fn nvar(&self) -> usize {
        self.k.cols
    }

    fn stride(&self) -> usize {
        self.mesh.dim() + self.npar
    }

    /// Coefficients of `u_c(x)_i` in the unknowns, one list per component.
    fn point_rows(&self, c: usize, x: &Vector) -> Vec<Vec<(usize, f64)>> {
        let dim = self.mesh.dim();
        let base = c * self.stride();
        let d = *x - self.mesh.cells()[c].center;
        (0..dim)
            .map(|i| {
                let mut row = vec![(base + i, 1.0)];
                for (k, e) in self.basis.iter().enumerate() {
                    row.push((base + dim + k, e.mul_vec(&d).get(i)));
                }
                row
            })
            .collect()
    }

    pub fn cell_data(&self, x: &[f64], c: usize) -> CellData {
        let dim = self.mesh.dim();
        let base = c * self.stride();
        let a = Vector::from_slice(&x[base..base + dim]);
        let mut z = Mat::zeros(dim);
        for (k, e) in self.basis.iter().enumerate() {
            z += e.scale(x[base + dim + k]);
        }
        CellData::affine(a, z)
    }

    pub fn to_field(&self, x: &[f64]) -> Result<BrokenField> {
        let cells = (0..self.mesh.cells().len()).map(|c| self.cell_data(x, c)).collect();
        BrokenField::new(self.mesh.clone(), cells)
    }

    pub fn from_field(&self, f: &BrokenField) -> Vec<f64> {
        let dim = self.mesh.dim();
        let stride = self.stride();
        let mut x = vec![0.0; self.nvar()];
        for (c, cd) in f.cells().iter().enumerate() {
            let base = c * stride;
            x[base..base + dim].copy_from_slice(cd.a.as_slice());
            match self.mode {
                StrainMode::Free => x[base + dim..base + stride].copy_from_slice(&cd.z.flat()),
                StrainMode::Skew if dim == 2 => x[base + dim] = 0.5 * (cd.z.get(1, 0) - cd.z.get(0, 1)),
                StrainMode::Skew => {}
            }
        }
        x
    }

    /// Block value `F_b(z)` with the true densities.
    pub fn block_value(&self, b: &Block, z: &[f64]) -> f64 {
        let dim = self.mesh.dim();
        match &b.kind {
            BlockKind::Bulk { pos, vol, scale } => {
                let w = self.energy.w.as_ref().expect("bulk blocks need W");
                let s: Vec<f64> = z.iter().map(|v| v / (vol * scale)).collect();
                vol * scale * w.eval(pos, &Mat::from_sym_coords(dim, &s))
            }
            BlockKind::Jump { w, nu } => {
                if z.iter().all(|v| v.abs() < 1e-300) {
                    return 0.0;
                }
                let j: Vec<f64> = z.iter().map(|v| v / w).collect();
                w * self.energy.psi.eval(&self.energy.x0, &j, nu)
            }
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.k.rows()];
        self.k.mul(x, &mut z);
        for (zi, o) in z.iter_mut().zip(&self.offset) {
            *zi -= o;
        }
        self.blocks.iter().map(|b| self.block_value(b, &z[b.start..b.start + b.len])).sum()
    }

    /// Total jump mass `Σ w|[u]|`, used to break ties.
    pub fn jump_mass(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.k.rows()];
        self.k.mul(x, &mut z);
        self.blocks
            .iter()
            .filter(|b| matches!(b.kind, BlockKind::Jump { .. }))
            .map(|b| (b.start..b.start + b.len).map(|r| (z[r] - self.offset[r]).powi(2)).sum::<f64>().sqrt())
            .sum()
    }

    /// Whether every block admits an exact proximal step.
    pub fn proximable(&self) -> bool {
        let w_ok = self.blocks.iter().all(|b| match b.kind {
            BlockKind::Bulk { .. } => self.energy.w.as_ref().is_some_and(|w| w.profile().is_some() && w.convex),
            BlockKind::Jump { .. } => true,
        });
        w_ok && self.energy.psi.dual_ball().is_some() && self.energy.psi.flags.homogeneous
    }

    pub fn profile(&self) -> Option<&BulkProfile> {
        self.energy.w.as_ref().and_then(|w| w.profile())
    }

    pub fn dual_ball(&self) -> Option<DualBall> {
        self.energy.psi.dual_ball()
    }
}

/// Projection onto `{C x = d}` in the metric weighted by `1/t`.
#[derive(Clone, Debug)]
pub(crate) struct AffineProjector {
    c: Csr,
    d: Vec<f64>,
    t: Vec<f64>,
    pinv: DMatrix<f64>,
}

impl AffineProjector {
    pub fn new(c: &Csr, d: &[f64], t: &[f64]) -> Self {
        let m = c.rows();
        let mut gram = DMatrix::zeros(m, m);
        for r in 0..m {
            for s in r..m {
                // rows are short; a merge over sorted columns is not worth it
                let mut acc = 0.0;
                for (j, v) in c.row(r) {
                    for (k, u) in c.row(s) {
                        if j == k {
                            acc += v * u * t[j];
                        }
                    }
                }
                gram[(r, s)] = acc;
                gram[(s, r)] = acc;
            }
        }
        let pinv = if m == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let eig = gram.symmetric_eigen();
            let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
            let cut = 1e-12 * max.max(1e-300);
            let inv = DVector::from_iterator(m, eig.eigenvalues.iter().map(|&l| if l > cut { 1.0 / l } else { 0.0 }));
            &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
        };
        Self { c: c.clone(), d: d.to_vec(), t: t.to_vec(), pinv }
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut r = vec![0.0; self.c.rows()];
        self.c.mul(x, &mut r);
        r.iter().zip(&self.d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn project(&self, x: &mut [f64]) {
        let m = self.c.rows();
        if m == 0 {
            return;
        }
        let mut r = vec![0.0; m];
        self.c.mul(x, &mut r);
        for (ri, di) in r.iter_mut().zip(&self.d) {
            *ri -= di;
        }
        let lam = &self.pinv * DVector::from_vec(r);
        let mut back = vec![0.0; x.len()];
        self.c.mul_t(lam.as_slice(), &mut back);
        for ((xi, bi), ti) in x.iter_mut().zip(&back).zip(&self.t) {
            *xi -= ti * bi;
        }
    }

    /// Projects and checks the constraint is met, i.e. the set is nonempty.
    pub fn project_checked(&self, x: &mut [f64]) -> Result<()> {
        self.project(x);
        // a second pass removes roundoff from the first
        self.project(x);
        let scale = 1.0 + self.d.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        let res = self.residual(x);
        if res > 1e-9 * scale {
            return Err(Error::Infeasible(format!("affine constraints violated by {res:e} after projection")));
        }
        Ok(())
    }
}
