//! TOML experiment configuration. Every section rejects unknown keys.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use sdrelax::approximation::AlbertiMode;
use sdrelax::cell_problems::{BcMode, SolverConfig};
use sdrelax::densities::{
    bulk_preset, nonlinear_preset, surface_preset, BulkDensity, NonlinearDensity, SurfaceDensity,
};
use sdrelax::fields::{read_field, BrokenField, CantorDescriptor, CellData, Frame, Mesh};
use sdrelax::relaxation::{LatticeSpec, RelaxOptions, StructuredDeformation};
use sdrelax::{Mat, Vector};

use crate::error::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Required unless given with `--seed`.
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default)]
    pub densities: DensitySection,
    #[serde(default)]
    pub cell_problems: CellSection,
    #[serde(default)]
    pub relaxation: RelaxSection,
    #[serde(default)]
    pub deformation: Option<DeformationSection>,
    #[serde(default)]
    pub approximation: ApproxSection,
    #[serde(default)]
    pub linearization: LinearSection,
}

fn one() -> usize {
    1
}

fn two() -> f64 {
    2.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    pub bulk: String,
    pub surface: String,
    pub nonlinear: String,
    /// Preset parameters such as `kappa` or `amp`.
    pub params: BTreeMap<String, f64>,
    pub samples: usize,
    pub tol: f64,
}

impl Default for DensitySection {
    fn default() -> Self {
        Self {
            bulk: "W2".into(),
            surface: "PSI1".into(),
            nonlinear: "V_dw".into(),
            params: BTreeMap::new(),
            samples: 256,
            tol: 1e-9,
        }
    }
}

/// Scalars in 1D or symmetric-coordinate lists.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Nodes {
    Scalars(Vec<f64>),
    Lists(Vec<Vec<f64>>),
}

impl Default for Nodes {
    fn default() -> Self {
        Nodes::Scalars(Vec::new())
    }
}

impl Nodes {
    pub fn len(&self) -> usize {
        match self {
            Nodes::Scalars(v) => v.len(),
            Nodes::Lists(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lists(&self) -> Vec<Vec<f64>> {
        match self {
            Nodes::Scalars(v) => v.iter().map(|x| vec![*x]).collect(),
            Nodes::Lists(v) => v.clone(),
        }
    }

    pub fn matrices(&self, dim: usize, key: &str) -> Result<Vec<Mat>, CliError> {
        let k = dim * (dim + 1) / 2;
        self.lists()
            .into_iter()
            .map(|c| {
                if c.len() != k {
                    return Err(CliError::config(format!(
                        "{key}: expected {k} symmetric coordinates, got {}",
                        c.len()
                    )));
                }
                Ok(Mat::from_sym_coords(dim, &c))
            })
            .collect()
    }

    pub fn vectors(&self, dim: usize, key: &str) -> Result<Vec<Vector>, CliError> {
        self.lists()
            .into_iter()
            .map(|c| {
                if c.len() != dim {
                    return Err(CliError::config(format!("{key}: expected {dim} components, got {}", c.len())));
                }
                Ok(Vector::from_slice(&c))
            })
            .collect()
    }
}

/// A scalar (1D) or a matrix given by rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixValue {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixValue {
    pub fn to_mat(&self, dim: usize, key: &str) -> Result<Mat, CliError> {
        let m = match self {
            MatrixValue::Scalar(x) if dim == 1 => Some(Mat::scalar(*x)),
            MatrixValue::Scalar(_) => None,
            MatrixValue::Rows(r) => Mat::from_rows(r),
        };
        m.filter(|m| m.dim() == dim).ok_or_else(|| CliError::config(format!("{key}: expected a {dim}×{dim} matrix")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
    pub n: Option<usize>,
    #[serde(rename = "A")]
    pub a: Nodes,
    #[serde(rename = "B")]
    pub b: Nodes,
    pub lambda: Nodes,
    /// One normal per λ, or a single normal for all; defaults to `e₁`.
    pub nu: Nodes,
    pub eps_schedule: Option<Vec<f64>>,
    pub bc: BcMode,
    pub frame: Frame,
    pub solver: SolverConfig,
    /// Compare 1D `solve-H` results with the brute-force oracle.
    pub oracle: bool,
    pub oracle_tol: f64,
    pub oracle_jumps: usize,
}

impl Default for CellSection {
    fn default() -> Self {
        Self {
            n: None,
            a: Nodes::default(),
            b: Nodes::default(),
            lambda: Nodes::default(),
            nu: Nodes::default(),
            eps_schedule: None,
            bc: BcMode::Hard,
            frame: Frame::Householder,
            solver: SolverConfig::default(),
            oracle: true,
            oracle_tol: 1e-4,
            oracle_jumps: 3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxSection {
    pub options: RelaxOptions,
    pub lattice: LatticeSpec,
    /// Density tables used by `relax` instead of on-demand solves.
    pub tables: Option<PathBuf>,
    pub property_tol: f64,
}

impl Default for RelaxSection {
    fn default() -> Self {
        Self { options: RelaxOptions::default(), lattice: LatticeSpec::default(), tables: None, property_tol: 1e-3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CantorSection {
    pub level: u32,
    pub mass: f64,
}

/// `g(x) = ∇g·x + jump·1{x₁ > ½}` (plus an optional 1D Cantor part), or a
/// field file; `G` uniform or per cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeformationSection {
    pub n: usize,
    pub gradient: MatrixValue,
    pub jump: Vec<f64>,
    pub cantor: Option<CantorSection>,
    pub field: Option<PathBuf>,
    #[serde(rename = "G")]
    pub big_g: MatrixValue,
    #[serde(rename = "G_cells")]
    pub big_g_cells: Option<Vec<MatrixValue>>,
}

impl Default for DeformationSection {
    fn default() -> Self {
        Self {
            n: 2,
            gradient: MatrixValue::Scalar(0.0),
            jump: Vec::new(),
            cantor: None,
            field: None,
            big_g: MatrixValue::Scalar(0.0),
            big_g_cells: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxSection {
    pub ns: Vec<usize>,
    pub mode: Option<AlbertiMode>,
    pub write_fields: bool,
}

impl Default for ApproxSection {
    fn default() -> Self {
        Self { ns: vec![4, 8, 16, 32, 64], mode: None, write_fields: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSection {
    pub deltas: Vec<f64>,
    pub beta: f64,
    pub gamma: f64,
    pub cells_per_delta: f64,
    pub max_resolution: usize,
    pub rigidity_offsets: usize,
}

impl Default for LinearSection {
    fn default() -> Self {
        Self {
            deltas: vec![1e-1, 1e-2, 1e-3],
            beta: 0.7,
            gamma: 0.68,
            cells_per_delta: 4.0,
            max_resolution: 1 << 12,
            rigidity_offsets: 16,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        if !(1..=2).contains(&cfg.dim) {
            return Err(CliError::config(format!("dim must be 1 or 2, got {}", cfg.dim)));
        }
        if !(cfg.p >= 1.0) {
            return Err(CliError::config(format!("p must be at least 1, got {}", cfg.p)));
        }
        Ok(cfg)
    }

    pub fn bulk(&self) -> Result<BulkDensity, CliError> {
        bulk_preset(&self.densities.bulk, self.dim, &self.densities.params).map_err(CliError::from_config)
    }

    pub fn surface(&self) -> Result<SurfaceDensity, CliError> {
        surface_preset(&self.densities.surface, self.dim, &self.densities.params).map_err(CliError::from_config)
    }

    pub fn nonlinear(&self) -> Result<NonlinearDensity, CliError> {
        let v = nonlinear_preset(&self.densities.nonlinear).map_err(CliError::from_config)?;
        if v.dim() != self.dim {
            return Err(CliError::config(format!(
                "{} is {}-dimensional, config has dim = {}",
                v.id(),
                v.dim(),
                self.dim
            )));
        }
        Ok(v)
    }

    /// Structured deformation of the `[deformation]` section; relative field
    /// paths resolve against `base`.
    pub fn deformation(&self, base: &Path) -> Result<StructuredDeformation, CliError> {
        let d = self.deformation.as_ref().ok_or_else(|| CliError::config("empty spec: missing [deformation]"))?;
        let dim = self.dim;
        let g = match &d.field {
            Some(path) => {
                let g = read_field(&base.join(path)).map_err(CliError::from_config)?;
                if g.dim() != dim {
                    return Err(CliError::config(format!("field has dimension {}, config has {dim}", g.dim())));
                }
                g
            }
            None => {
                if d.n == 0 || d.n % 2 != 0 {
                    return Err(CliError::config("deformation.n must be a positive even number"));
                }
                let mesh = Arc::new(Mesh::unit(dim, d.n).map_err(CliError::from_config)?);
                let grad = d.gradient.to_mat(dim, "deformation.gradient")?;
                let jump = match d.jump.len() {
                    0 => Vector::zeros(dim),
                    k if k == dim => Vector::from_slice(&d.jump),
                    k => return Err(CliError::config(format!("deformation.jump: expected {dim} components, got {k}"))),
                };
                let g = BrokenField::from_fn(mesh, |_, x| {
                    let s = if x.get(0) > 0.5 { 1.0 } else { 0.0 };
                    CellData::affine(grad.mul_vec(x) + jump.scale(s), grad)
                })
                .map_err(CliError::from_config)?;
                match &d.cantor {
                    Some(c) => g
                        .with_cantor(CantorDescriptor::new(c.level, c.mass).map_err(CliError::from_config)?)
                        .map_err(CliError::from_config)?,
                    None => g,
                }
            }
        };
        let cells = g.cells().len();
        let big_g = match &d.big_g_cells {
            Some(v) if v.len() == cells => {
                v.iter().map(|m| m.to_mat(dim, "deformation.G_cells")).collect::<Result<_, _>>()?
            }
            Some(v) => {
                return Err(CliError::config(format!("deformation.G_cells: expected {cells} entries, got {}", v.len())))
            }
            None => vec![d.big_g.to_mat(dim, "deformation.G")?; cells],
        };
        StructuredDeformation::new(g, big_g, self.p).map_err(CliError::from_config)
    }
}
