//! Discrete SBD fields on uniform 1D/2D meshes: energies, the measure
//! decomposition of `Eu`, restriction to subdomains and a JSON file format.

mod energy;
mod field;
mod mesh;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub(crate) use energy::composite_cell_integral;
pub use energy::{
    boundary_flux_full, bulk_energy, decompose, gradient_jump_energy, integral, jump_trace, korn_poincare_gap,
    l1_distance, l1_distance_to_constant, mean, second_gradient_energy, surface_energy, JumpTrace, KornPoincareGap,
    MeasureDecomposition, JUMP_TOL,
};
pub use field::{BrokenField, CantorDescriptor, CellData};
pub use mesh::{Cell, Facet, FacetRule, Frame, Mesh};

use crate::error::{Error, Result};
use crate::tensor::{Hess, Mat, Vector};

/// Axis-aligned box `[lo, hi]` in the mesh's local coordinates `ξ ∈ [0,1]^N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subdomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Select the cells outside the box instead.
    #[serde(default)]
    pub complement: bool,
}

impl Subdomain {
    pub fn new(lo: &[f64], hi: &[f64]) -> Self {
        Self { lo: lo.to_vec(), hi: hi.to_vec(), complement: false }
    }

    pub fn complement(&self) -> Self {
        Self { complement: !self.complement, ..self.clone() }
    }
}

/// Field restricted to the cells of a mesh-aligned subdomain. Facets on the
/// cut become boundary facets of the restriction, so they belong to neither side.
pub fn restrict(field: &BrokenField, sub: &Subdomain) -> Result<BrokenField> {
    let mesh = field.mesh();
    let (dim, n) = (mesh.dim(), mesh.n());
    if sub.lo.len() != dim || sub.hi.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: sub.lo.len() });
    }
    let mut bounds = [(0usize, 0usize); 2];
    for k in 0..dim {
        let snap = |v: f64| -> Result<usize> {
            let s = v * n as f64;
            let r = s.round();
            if (s - r).abs() > 1e-9 || !(0.0..=n as f64).contains(&r) {
                return Err(Error::MisalignedSubdomain(format!("bound {v} is not on a mesh line of n = {n}")));
            }
            Ok(r as usize)
        };
        let (lo, hi) = (snap(sub.lo[k])?, snap(sub.hi[k])?);
        if lo >= hi {
            return Err(Error::MisalignedSubdomain(format!("empty box along axis {k}")));
        }
        bounds[k] = (lo, hi);
    }
    let inside = |g: [usize; 2]| (0..dim).all(|k| bounds[k].0 <= g[k] && g[k] < bounds[k].1);
    let total = n.pow(dim as u32);
    let ny = if dim == 2 { n } else { 1 };
    let mut active = vec![false; total];
    for j in 0..ny {
        for i in 0..n {
            let g = i + n * j;
            active[g] = mesh.active_mask()[g] && (inside([i, j]) != sub.complement);
        }
    }
    if !active.iter().any(|&a| a) {
        return Err(Error::MisalignedSubdomain("subdomain contains no active cells".into()));
    }
    let sub_mesh = Arc::new(mesh.with_mask(active)?);
    let cells =
        sub_mesh.cells().iter().map(|c| *field.cell(mesh.cell_at_grid(c.grid).expect("active in parent"))).collect();
    BrokenField::new(sub_mesh, cells)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub dim: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<Frame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<Vec<bool>>,
}

impl MeshSpec {
    pub fn of(mesh: &Mesh) -> Self {
        Self {
            dim: mesh.dim(),
            n: mesh.n(),
            rotation: mesh.nu().map(|v| v.as_slice().to_vec()),
            frame: (mesh.frame() != Frame::Standard).then_some(mesh.frame()),
            active: (!mesh.is_full()).then(|| mesh.active_mask().to_vec()),
        }
    }

    pub fn build(&self) -> Result<Mesh> {
        let frame = match (&self.rotation, self.frame) {
            (None, _) => Frame::Standard,
            (Some(_), None) => Frame::Householder,
            (Some(_), Some(f)) => f,
        };
        let nu = self.rotation.as_ref().map(|v| Vector::from_slice(v));
        Mesh::build(self.dim, self.n, frame, nu, self.active.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellRecord {
    pub a: Vec<f64>,
    #[serde(rename = "Z")]
    pub z: Vec<Vec<f64>>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<Vec<f64>>>>,
}

/// On-disk form of a [`BrokenField`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFile {
    pub mesh: MeshSpec,
    pub cells: Vec<CellRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cantor: Option<CantorDescriptor>,
}

impl FieldFile {
    pub fn from_field(f: &BrokenField) -> Self {
        Self {
            mesh: MeshSpec::of(f.mesh()),
            cells: f
                .cells()
                .iter()
                .map(|c| CellRecord { a: c.a.as_slice().to_vec(), z: c.z.rows(), h: c.h.map(|h| h.to_nested()) })
                .collect(),
            cantor: f.cantor(),
        }
    }

    pub fn to_field(&self) -> Result<BrokenField> {
        let mesh = Arc::new(self.mesh.build()?);
        let dim = mesh.dim();
        let mut cells = Vec::with_capacity(self.cells.len());
        for (k, c) in self.cells.iter().enumerate() {
            let bad = || Error::InvalidInput(format!("cell {k} has malformed data"));
            if c.a.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.a.len() });
            }
            let z = Mat::from_rows(&c.z).filter(|m| m.dim() == dim).ok_or_else(bad)?;
            let h = match &c.h {
                None => None,
                Some(v) => Some(Hess::from_nested(v).filter(|h| h.dim() == dim).ok_or_else(bad)?),
            };
            cells.push(CellData { a: Vector::from_slice(&c.a), z, h });
        }
        let field = BrokenField::new(mesh, cells)?;
        match self.cantor {
            Some(c) => field.with_cantor(CantorDescriptor::new(c.level, c.mass)?),
            None => Ok(field),
        }
    }
}

pub fn field_to_json(f: &BrokenField) -> Result<String> {
    Ok(serde_json::to_string_pretty(&FieldFile::from_field(f))?)
}

pub fn field_from_json(s: &str) -> Result<BrokenField> {
    serde_json::from_str::<FieldFile>(s)?.to_field()
}

pub fn write_field(path: &Path, f: &BrokenField) -> Result<()> {
    std::fs::write(path, field_to_json(f)?).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn read_field(path: &Path) -> Result<BrokenField> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    field_from_json(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{BulkDensity, SurfaceDensity};

    fn check_additive(field: &BrokenField, sub: &Subdomain) {
        let (a, b) = (restrict(field, sub).unwrap(), restrict(field, &sub.complement()).unwrap());
        let w = BulkDensity::w2(field.dim());
        let psi = SurfaceDensity::psi1(field.dim());
        let cut: f64 = field
            .mesh()
            .interior_facets()
            .iter()
            .filter(|f| {
                let m = field.mesh();
                let (gm, gp) = (m.cells()[f.minus].grid, m.cells()[f.plus.unwrap()].grid);
                let side = |g: [usize; 2]| {
                    (0..field.dim()).all(|k| {
                        let s = (g[k] as f64 + 0.5) / m.n() as f64;
                        sub.lo[k] < s && s < sub.hi[k]
                    })
                };
                side(gm) != side(gp)
            })
            .map(|f| {
                f.quadrature(FacetRule::Gauss2)
                    .iter()
                    .map(|(x, wt)| wt * psi.eval_vec(x, &field.jump_at(f, x), &f.normal))
                    .sum::<f64>()
            })
            .sum();
        let be = bulk_energy(&a, &w) + bulk_energy(&b, &w);
        assert!((be - bulk_energy(field, &w)).abs() < 1e-12);
        let se = surface_energy(&a, &psi, FacetRule::Gauss2) + surface_energy(&b, &psi, FacetRule::Gauss2) + cut;
        assert!((se - surface_energy(field, &psi, FacetRule::Gauss2)).abs() < 1e-12);
    }

    #[test]
    fn restriction_is_additive() {
        let m1 = Arc::new(Mesh::unit(1, 8).unwrap());
        let m2 = Arc::new(Mesh::unit(2, 8).unwrap());
        let step = |m: Arc<Mesh>| {
            BrokenField::from_fn(m, |_, x| {
                let dim = x.dim();
                let v = if x.get(0) > 0.3 { Vector::filled(dim, 1.0) } else { Vector::zeros(dim) };
                CellData::affine(v, Mat::zeros(dim))
            })
            .unwrap()
        };
        let s1 = Subdomain::new(&[0.0], &[0.5]);
        let s2 = Subdomain::new(&[0.25, 0.0], &[0.75, 0.5]);
        check_additive(&BrokenField::zero(m1.clone()), &s1);
        check_additive(&step(m1.clone()), &s1);
        check_additive(&BrokenField::affine(m1, &Mat::scalar(2.0), &Vector::scalar(0.1)), &s1);
        check_additive(&BrokenField::zero(m2.clone()), &s2);
        check_additive(&step(m2.clone()), &s2);
        check_additive(&BrokenField::affine(m2, &Mat::new2(1.0, 0.5, -0.2, 0.3), &Vector::zeros(2)), &s2);
    }

    #[test]
    fn misaligned_subdomain_is_rejected() {
        let f = BrokenField::zero(Arc::new(Mesh::unit(1, 4).unwrap()));
        assert!(matches!(restrict(&f, &Subdomain::new(&[0.0], &[0.3])), Err(Error::MisalignedSubdomain(_))));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let nu = Vector::new2(0.6, -0.8);
        let mesh = Arc::new(Mesh::cube_nu(2, 3, &nu, Frame::Rotation).unwrap());
        let mut h = Hess::zeros(2);
        h.set(0, 0, 1, 1.0 / 3.0);
        h.set(0, 1, 0, 1.0 / 3.0);
        let f = BrokenField::from_fn(mesh, |k, x| CellData {
            a: x.scale(std::f64::consts::PI + k as f64),
            z: Mat::new2(0.1, 1e-300, -7.25e17, 2.0f64.sqrt()),
            h: (k % 2 == 0).then_some(h),
        })
        .unwrap();
        let back = field_from_json(&field_to_json(&f).unwrap()).unwrap();
        assert_eq!(back, f);

        let m1 = Arc::new(Mesh::unit(1, 5).unwrap());
        let c = BrokenField::zero(m1).with_cantor(CantorDescriptor::new(4, 0.1).unwrap()).unwrap();
        assert_eq!(field_from_json(&field_to_json(&c).unwrap()).unwrap(), c);
    }
}
