//! Nonsimple-material energies `F_δ`, their displacement form, rigidity
//! diagnostics and the Γ-gap against the linearized relaxation.

mod recovery;
mod rigidity;

use serde::Serialize;

pub use recovery::{
    gamma_csv, gamma_gap, recovery_sequence, resolution_for, smooth_kinks, GammaGapReport, GammaRow, RecoveryMember,
    RecoveryOptions, GAMMA_CSV_HEADER,
};
pub use rigidity::{rigidity_diagnostics, RigidityDiagnostics, RigidityOptions, RigidityReport};

use crate::densities::{linearize, NonlinearDensity, SurfaceDensity};
use crate::error::{Error, Result};
use crate::fields::{gradient_jump_energy, mean, second_gradient_energy, surface_energy, BrokenField, FacetRule};
use crate::tensor::{Mat, Vector};

/// Value returned by [`eval_F_dis`] outside its domain.
pub const SENTINEL: f64 = f64::INFINITY;

/// Relative tolerance for energy invariance under frame normalization.
pub const INVARIANCE_TOL: f64 = 1e-10;

/// Finite-difference step used when `V` carries no Hessian.
pub const FD_STEP: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct NonsimpleConfig {
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub v: NonlinearDensity,
    pub psi: SurfaceDensity,
    /// Density of gradient jumps; λ is the row-major flattened `[∇y]`.
    pub big_psi: SurfaceDensity,
    pub rule: FacetRule,
    /// Tolerance of the normalization check in [`eval_F_dis`].
    pub tol: f64,
}

impl NonsimpleConfig {
    pub fn new(
        delta: f64,
        beta: f64,
        gamma: f64,
        v: NonlinearDensity,
        psi: SurfaceDensity,
        big_psi: SurfaceDensity,
    ) -> Result<Self> {
        let cfg = Self { delta, beta, gamma, v, psi, big_psi, rule: FacetRule::Gauss2, tol: 1e-9 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Open interval for β in dimension `dim`.
    pub fn beta_range(dim: usize) -> (f64, f64) {
        let n = dim as f64;
        ((2.0_f64 / 3.0).max((n - 1.0) / n), 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.v.dim();
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidInput(format!("δ must be positive, got {}", self.delta)));
        }
        let (lo, hi) = Self::beta_range(dim);
        if !(self.beta > lo && self.beta < hi) {
            return Err(Error::InvalidInput(format!("β = {} outside ({lo}, {hi})", self.beta)));
        }
        if !(self.gamma > 2.0 / 3.0 && self.gamma < self.beta) {
            return Err(Error::InvalidInput(format!("γ = {} outside (2/3, β)", self.gamma)));
        }
        if self.psi.dim() != dim || self.big_psi.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.psi.dim().max(self.big_psi.dim()) });
        }
        if self.psi.jump_len() != dim {
            return Err(Error::InvalidInput("ψ must act on vector jumps".into()));
        }
        if self.big_psi.jump_len() != dim * dim {
            return Err(Error::InvalidInput("Ψ must act on matrix jumps".into()));
        }
        if !self.psi.flags.frame_indifferent {
            return Err(Error::InvalidInput(format!("{} is not frame indifferent", self.psi.id())));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let mut out = self.clone();
        out.delta = delta;
        out.validate()?;
        Ok(out)
    }

    /// `δ^{−(1−β)/2}`, the bound on `‖∇u‖_∞ + ‖∇²u‖_∞` for recovery fields.
    pub fn cap(&self) -> f64 {
        self.delta.powf(-(1.0 - self.beta) / 2.0)
    }
}

/// The four terms of `F_δ`, already scaled by their powers of δ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct FDeltaTerms {
    pub bulk: f64,
    pub second_gradient: f64,
    pub jump: f64,
    pub gradient_jump: f64,
    pub total: f64,
}

fn nonlinear_bulk(y: &BrokenField, v: &NonlinearDensity) -> f64 {
    let mesh = y.mesh();
    let mut total = 0.0;
    for (c, cell) in mesh.cells().iter().enumerate() {
        let cd = y.cell(c);
        total += match cd.h {
            None => cell.volume * v.eval(&cd.z),
            Some(_) => {
                mesh.cell_gauss(c, 3).into_iter().map(|(d, w)| w * v.eval(&y.gradient(c, &(cell.center + d)))).sum()
            }
        };
    }
    total
}

fn check_dims(y: &BrokenField, cfg: &NonsimpleConfig) -> Result<()> {
    if y.dim() != cfg.dim() {
        return Err(Error::DimensionMismatch { expected: cfg.dim(), got: y.dim() });
    }
    Ok(())
}

/// `δ⁻²∫V(∇y) + δ^{−2β}∫|∇²y|² + δ⁻¹∫ψ([y],ν) + δ^{−β}∫Ψ([∇y],ν)`.
#[allow(non_snake_case)]
pub fn eval_F_delta(y: &BrokenField, cfg: &NonsimpleConfig) -> Result<FDeltaTerms> {
    check_dims(y, cfg)?;
    let d = cfg.delta;
    let bulk = nonlinear_bulk(y, &cfg.v) / (d * d);
    let second_gradient = second_gradient_energy(y) * d.powf(-2.0 * cfg.beta);
    let jump = surface_energy(y, &cfg.psi, cfg.rule) / d;
    let gradient_jump = gradient_jump_energy(y, &cfg.big_psi, cfg.rule) * d.powf(-cfg.beta);
    Ok(FDeltaTerms { bulk, second_gradient, jump, gradient_jump, total: bulk + second_gradient + jump + gradient_jump })
}

/// `∫∇y` over `Ω` divided by `|Ω|` (absolutely continuous part).
pub fn mean_gradient(y: &BrokenField) -> Mat {
    let mesh = y.mesh();
    let mut s = Mat::zeros(y.dim());
    // the Hessian term integrates to zero about the cell center
    for (cell, cd) in mesh.cells().iter().zip(y.cells()) {
        s += cd.z.scale(cell.volume);
    }
    s.scale(1.0 / mesh.volume())
}

fn identity(y: &BrokenField) -> BrokenField {
    BrokenField::affine(y.mesh().clone(), &Mat::identity(y.dim()), &Vector::zeros(y.dim()))
}

/// `id + δu`.
pub fn deformation(u: &BrokenField, delta: f64) -> Result<BrokenField> {
    identity(u).axpy(delta, u)
}

/// `(y − id)/δ`.
pub fn displacement(y: &BrokenField, delta: f64) -> Result<BrokenField> {
    Ok(y.axpy(-1.0, &identity(y))?.scale(1.0 / delta))
}

#[derive(Clone, Debug)]
pub struct NormalizedFrame {
    pub y: BrokenField,
    pub q: Mat,
    pub b: Vector,
}

/// `Q y + b` with the mean of `id` and polar factor `Id` for the mean gradient.
pub fn normalize_frame(y: &BrokenField) -> Result<NormalizedFrame> {
    let f = mean_gradient(y);
    let det = f.det();
    if !(det.abs() > 1e-14) {
        return Err(Error::SingularMeanGradient { det });
    }
    let r = f.nearest_rotation().ok_or(Error::SingularMeanGradient { det })?;
    let q = r.transpose();
    let b = mean(&identity(y)) - q.mul_vec(&mean(y));
    Ok(NormalizedFrame { y: y.rigid_map(&q, &b), q, b })
}

/// [`normalize_frame`] followed by the energy invariance assertion.
pub fn normalize_frame_checked(y: &BrokenField, cfg: &NonsimpleConfig) -> Result<NormalizedFrame> {
    let out = normalize_frame(y)?;
    let (before, after) = (eval_F_delta(y, cfg)?.total, eval_F_delta(&out.y, cfg)?.total);
    if (before - after).abs() > INVARIANCE_TOL * before.abs().max(1.0) {
        return Err(Error::Linearization(format!("normalization changed the energy from {before:e} to {after:e}")));
    }
    Ok(out)
}

/// Whether `y` has the mean of `id` and a mean gradient with polar factor `Id`.
pub fn is_normalized(y: &BrokenField, tol: f64) -> bool {
    let shift = (mean(y) - mean(&identity(y))).norm();
    let rot = mean_gradient(y).nearest_rotation();
    shift <= tol && rot.is_some_and(|r| (r - Mat::identity(y.dim())).max_abs() <= tol)
}

/// Terms of `F_δ(id + δu)`, or `None` outside the domain of the displacement
/// energy (Cantor part, or `id + δu` not normalized).
#[allow(non_snake_case)]
pub fn eval_F_dis_terms(u: &BrokenField, cfg: &NonsimpleConfig) -> Option<FDeltaTerms> {
    if u.dim() != cfg.dim() || u.cantor().is_some_and(|k| k.mass != 0.0) {
        return None;
    }
    let y = deformation(u, cfg.delta).ok()?;
    if !is_normalized(&y, cfg.tol) {
        return None;
    }
    eval_F_delta(&y, cfg).ok()
}

/// `F_δ(id + δu)` or [`SENTINEL`].
#[allow(non_snake_case)]
pub fn eval_F_dis(u: &BrokenField, cfg: &NonsimpleConfig) -> f64 {
    eval_F_dis_terms(u, cfg).map_or(SENTINEL, |t| t.total)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TaylorBridge {
    /// `δ⁻²∫V(Id + δ∇u)`.
    pub nonlinear: f64,
    /// `∫W(𝓔u)` with `W` the linearization of `V`.
    pub linear: f64,
    pub gap: f64,
}

/// Compares the rescaled nonlinear bulk energy with its quadratic limit.
pub fn taylor_bridge(u: &BrokenField, cfg: &NonsimpleConfig) -> Result<TaylorBridge> {
    check_dims(u, cfg)?;
    let w = linearize(&cfg.v, FD_STEP)?.bulk;
    let y = deformation(u, cfg.delta)?;
    let nonlinear = nonlinear_bulk(&y, &cfg.v) / (cfg.delta * cfg.delta);
    let linear = crate::fields::bulk_energy(u, &w);
    Ok(TaylorBridge { nonlinear, linear, gap: (nonlinear - linear).abs() })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fields::{CellData, Mesh};
    use crate::tensor::Hess;

    fn cfg1(delta: f64) -> NonsimpleConfig {
        NonsimpleConfig::new(
            delta,
            0.8,
            0.7,
            NonlinearDensity::v_sq(),
            SurfaceDensity::psi1(1),
            SurfaceDensity::psi1_matrix(1),
        )
        .unwrap()
    }

    fn cfg2(delta: f64) -> NonsimpleConfig {
        NonsimpleConfig::new(
            delta,
            0.8,
            0.7,
            NonlinearDensity::v_rot(),
            SurfaceDensity::psi1(2),
            SurfaceDensity::psi1_matrix(2),
        )
        .unwrap()
    }

    fn rot(theta: f64) -> Mat {
        Mat::new2(theta.cos(), -theta.sin(), theta.sin(), theta.cos())
    }

    /// A 2D deformation with jumps, kinks and curvature.
    fn rough_2d() -> BrokenField {
        let mesh = Arc::new(Mesh::unit(2, 4).unwrap());
        BrokenField::from_fn(mesh, |c, x| {
            let mut h = Hess::zeros(2);
            h.set(0, 0, 1, 0.1 * (c % 3) as f64);
            h.set(0, 1, 0, 0.1 * (c % 3) as f64);
            h.set(1, 1, 1, -0.05);
            let z = Mat::new2(1.0 + 0.01 * c as f64, 0.02, -0.01, 0.98);
            CellData { a: *x + Vector::new2(0.01 * (c % 2) as f64, 0.0), z, h: Some(h) }
        })
        .unwrap()
    }

    #[test]
    fn parameter_ranges() {
        let base = cfg1(0.1);
        assert!(base.with_delta(0.0).is_err());
        let mut c = base.clone();
        c.beta = 0.6;
        assert!(c.validate().is_err());
        c.beta = 0.8;
        c.gamma = 0.85;
        assert!(c.validate().is_err());
        c.gamma = 0.6;
        assert!(c.validate().is_err());
        assert_eq!(NonsimpleConfig::beta_range(2).0, 2.0 / 3.0);
        let mut c = cfg2(0.1);
        c.psi = SurfaceDensity::psi_aniso(2, 0.5).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn identity_has_zero_energy() {
        for dim in [1, 2] {
            let mesh = Arc::new(Mesh::unit(dim, 4).unwrap());
            let id = BrokenField::affine(mesh, &Mat::identity(dim), &Vector::zeros(dim));
            let cfg = if dim == 1 { cfg1(0.1) } else { cfg2(0.1) };
            assert_eq!(eval_F_delta(&id, &cfg).unwrap().total, 0.0);
        }
    }

    #[test]
    fn unit_strain_in_1d() {
        let mesh = Arc::new(Mesh::unit(1, 8).unwrap());
        for delta in [0.1, 0.01, 0.001] {
            let u = BrokenField::affine(mesh.clone(), &Mat::scalar(1.0), &Vector::scalar(0.0));
            let y = deformation(&u, delta).unwrap();
            let t = eval_F_delta(&y, &cfg1(delta)).unwrap();
            assert!((t.bulk - 1.0).abs() < 1e-9, "{t:?}");
            assert_eq!(t.jump + t.second_gradient + t.gradient_jump, 0.0);
        }
    }

    #[test]
    fn rigid_maps_cost_nothing() {
        let mesh = Arc::new(Mesh::unit(2, 4).unwrap());
        let y = BrokenField::affine(mesh, &rot(0.4), &Vector::new2(0.3, -1.0));
        let t = eval_F_delta(&y, &cfg2(0.01)).unwrap();
        assert!(t.total < 1e-20, "{t:?}");
    }

    #[test]
    fn frame_invariance() {
        let cfg = cfg2(0.05);
        let y = rough_2d();
        let e = eval_F_delta(&y, &cfg).unwrap();
        for theta in [0.3, -1.1, 2.5] {
            let moved = y.rigid_map(&rot(theta), &Vector::new2(1.0, 2.0));
            let f = eval_F_delta(&moved, &cfg).unwrap();
            assert!((f.total - e.total).abs() < 1e-10 * e.total.max(1.0), "{e:?} vs {f:?}");
        }
    }

    #[test]
    fn normalization_undoes_rotation_and_translation() {
        let cfg = cfg2(0.05);
        let base = normalize_frame_checked(&rough_2d(), &cfg).unwrap().y;
        assert!(is_normalized(&base, 1e-12));
        // already normalized: unchanged
        let again = normalize_frame(&base).unwrap();
        assert!((again.q - Mat::identity(2)).max_abs() < 1e-14);
        assert!(again.b.norm() < 1e-14);
        let moved = base.rigid_map(&rot(0.3), &Vector::new2(0.5, -0.2));
        let back = normalize_frame_checked(&moved, &cfg).unwrap();
        assert!((back.q - rot(-0.3)).max_abs() < 1e-12);
        for (a, b) in back.y.cells().iter().zip(base.cells()) {
            assert!((a.a - b.a).norm() < 1e-12 && (a.z - b.z).max_abs() < 1e-12);
        }
        // translation only, 1D
        let mesh = Arc::new(Mesh::unit(1, 4).unwrap());
        let y = BrokenField::affine(mesh, &Mat::scalar(1.0), &Vector::scalar(0.7));
        let n = normalize_frame(&y).unwrap();
        assert!((n.b.get(0) + 0.7).abs() < 1e-15 && n.q == Mat::identity(1));
    }

    #[test]
    fn singular_mean_gradient_is_rejected() {
        let mesh = Arc::new(Mesh::unit(1, 2).unwrap());
        let y = BrokenField::zero(mesh);
        assert!(matches!(normalize_frame(&y), Err(Error::SingularMeanGradient { .. })));
    }

    #[test]
    fn displacement_energy() {
        let mesh = Arc::new(Mesh::unit(1, 16).unwrap());
        let zero = BrokenField::zero(mesh.clone());
        assert_eq!(eval_F_dis(&zero, &cfg1(0.01)), 0.0);
        let u = BrokenField::affine(mesh.clone(), &Mat::scalar(1.0), &Vector::scalar(-0.5));
        assert!((eval_F_dis(&u, &cfg1(0.01)) - 1.0).abs() < 0.05);
        let off = BrokenField::affine(mesh, &Mat::scalar(1.0), &Vector::scalar(0.0));
        assert_eq!(eval_F_dis(&off, &cfg1(0.01)), SENTINEL);
        // a rotated mean gradient violates the normalization in 2D
        let mesh = Arc::new(Mesh::unit(2, 2).unwrap());
        let skew = BrokenField::affine(mesh, &Mat::new2(0.0, -1.0, 1.0, 0.0), &Vector::new2(0.5, -0.5));
        assert_eq!(eval_F_dis(&skew, &cfg2(0.1)), SENTINEL);
    }

    #[test]
    fn taylor_bridge_is_first_order() {
        let mesh = Arc::new(Mesh::unit(2, 4).unwrap());
        let u = BrokenField::from_fn(mesh, |c, x| {
            CellData::affine(x.scale(0.3), Mat::new2(0.5, 0.1 * c as f64 / 16.0, 0.2, -0.4))
        })
        .unwrap();
        let cfg = NonsimpleConfig { v: NonlinearDensity::v_rot(), ..cfg2(0.1) };
        let gaps: Vec<f64> =
            [1e-2, 1e-3].iter().map(|&d| taylor_bridge(&u, &cfg.with_delta(d).unwrap()).unwrap().gap).collect();
        assert!(gaps[0] < 1e-2 * 2.0, "{gaps:?}");
        assert!(gaps[1] < gaps[0] / 5.0, "{gaps:?}");
        let dw = NonsimpleConfig { v: NonlinearDensity::v_dw(), ..cfg1(1e-3) };
        let mesh = Arc::new(Mesh::unit(1, 4).unwrap());
        let u = BrokenField::affine(mesh, &Mat::scalar(0.8), &Vector::scalar(-0.4));
        let t = taylor_bridge(&u, &dw).unwrap();
        assert!((t.linear - 0.64).abs() < 1e-6 && t.gap < 1e-3 * 0.8_f64.powi(3) * 2.0, "{t:?}");
    }
}
