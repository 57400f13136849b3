//! Energy densities: bulk `W`, surface `ψ` (and the gradient-jump `Ψ`),
//! nonlinear stored energy `V`, plus the derived recession and
//! linearization objects.

mod axioms;
mod linearize;
pub(crate) mod recession;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{sym_len, Mat, Vector};

pub use axioms::{check_bulk_axioms, check_nonlinear_axioms, check_surface_axioms, AxiomCheck, AxiomReport, Sampler};
pub use linearize::{linearize, LinearizedDensity};
pub use recession::{
    is_diverging, loglog_slope, recession_bulk, tail_max, validate_t_schedule, RecessionEstimate, DIVERGENCE_SLOPE,
};

pub type BulkFn = Arc<dyn Fn(&Vector, &Mat) -> f64 + Send + Sync>;
pub type WeightFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type SurfaceFn = Arc<dyn Fn(&Vector, &[f64], &Vector) -> f64 + Send + Sync>;
pub type NonlinearFn = Arc<dyn Fn(&Mat) -> f64 + Send + Sync>;
pub type ModulusFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Preset name plus numeric parameters; identifies a density in table
/// fingerprints and output files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityId {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl DensityId {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), params: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

impl fmt::Display for DensityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.params.is_empty() {
            let parts: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "({})", parts.join(","))?;
        }
        Ok(())
    }
}

/// Closed-form structure of an x-independent bulk density, expressed in the
/// orthonormal coordinates `s` of `sym(A)` (see [`Mat::sym_coords`]).
#[derive(Clone, Debug, PartialEq)]
pub enum BulkProfile {
    /// `W = ½ sᵀ M s`, `M` row-major of size `sym_len × sym_len`.
    Quadratic { m: Vec<f64> },
    /// `W = scale·|s|`.
    Norm { scale: f64 },
    /// `W = √(1 + |s|²) − 1`.
    SqrtRadial,
}

impl BulkProfile {
    fn eval(&self, s: &[f64]) -> f64 {
        let r2: f64 = s.iter().map(|x| x * x).sum();
        match self {
            BulkProfile::Quadratic { m } => {
                let k = s.len();
                let mut acc = 0.0;
                for i in 0..k {
                    for j in 0..k {
                        acc += s[i] * m[i * k + j] * s[j];
                    }
                }
                0.5 * acc
            }
            BulkProfile::Norm { scale } => scale * r2.sqrt(),
            // written to avoid cancellation for small |s|
            BulkProfile::SqrtRadial => r2 / ((1.0 + r2).sqrt() + 1.0),
        }
    }

    /// `argmin_s ½|s − v|² + coef·ε·Φ(s/ε)`.
    pub fn prox(&self, coef: f64, eps: f64, v: &[f64]) -> Vec<f64> {
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        match self {
            BulkProfile::Quadratic { m } => {
                // εΦ(s/ε) = Φ(s)/ε, so solve (I + (coef/ε) M) s = v
                let k = v.len();
                let c = coef / eps;
                let a = nalgebra::DMatrix::from_fn(k, k, |i, j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    id + c * m[i * k + j]
                });
                let b = nalgebra::DVector::from_column_slice(v);
                let sol = a.lu().solve(&b).expect("I + cM is positive definite");
                sol.iter().copied().collect()
            }
            BulkProfile::Norm { scale } => {
                let t = coef * scale;
                if r <= t {
                    vec![0.0; v.len()]
                } else {
                    v.iter().map(|x| x * (1.0 - t / r)).collect()
                }
            }
            BulkProfile::SqrtRadial => {
                if r == 0.0 {
                    return vec![0.0; v.len()];
                }
                // radius ρ solves ρ + coef·φ'(ρ/ε) = r with φ'(u) = u/√(1+u²)
                let g = |rho: f64| {
                    let u = rho / eps;
                    rho + coef * u / (1.0 + u * u).sqrt() - r
                };
                let (mut lo, mut hi) = (0.0_f64, r);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 1e-16 * r.max(1e-300) {
                        break;
                    }
                }
                let rho = 0.5 * (lo + hi);
                v.iter().map(|x| x * rho / r).collect()
            }
        }
    }

    /// Profile of the recession function `W^∞`, when finite.
    pub fn recession(&self) -> Option<BulkProfile> {
        match self {
            BulkProfile::Quadratic { .. } => None,
            BulkProfile::Norm { scale } => Some(BulkProfile::Norm { scale: *scale }),
            BulkProfile::SqrtRadial => Some(BulkProfile::Norm { scale: 1.0 }),
        }
    }
}

#[derive(Clone)]
enum BulkBase {
    Profile(BulkProfile),
    Custom(BulkFn),
}

/// Bulk energy density `W(x, A)` on symmetric matrices with its declared
/// axiom constants.
#[derive(Clone)]
pub struct BulkDensity {
    id: DensityId,
    dim: usize,
    base: BulkBase,
    weight: Option<WeightFn>,
    pub p: f64,
    pub c_w: f64,
    pub big_c_w: f64,
    /// Matrix at which `W(·, A₀)` is declared bounded, and the bound.
    pub a0: Mat,
    pub a0_bound: f64,
    pub convex: bool,
    pub x_dependent: bool,
    /// Declared recession rate: `|W^∞(A) − W(tA)/t| ≤ C|A|^{1−α}/t^α`.
    pub alpha: Option<f64>,
    pub recession_c: Option<f64>,
}

impl fmt::Debug for BulkDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BulkDensity")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("p", &self.p)
            .field("convex", &self.convex)
            .field("x_dependent", &self.x_dependent)
            .finish()
    }
}

impl BulkDensity {
    fn from_profile(id: DensityId, dim: usize, profile: BulkProfile, p: f64, c_w: f64, big_c_w: f64) -> Self {
        let a0_bound = profile.eval(&vec![0.0; sym_len(dim)]);
        Self {
            id,
            dim,
            base: BulkBase::Profile(profile),
            weight: None,
            p,
            c_w,
            big_c_w,
            a0: Mat::zeros(dim),
            a0_bound,
            convex: true,
            x_dependent: false,
            alpha: None,
            recession_c: None,
        }
    }

    /// `W(A) = |A|²`.
    pub fn w2(dim: usize) -> Self {
        let k = sym_len(dim);
        let m = (0..k * k).map(|i| if i % (k + 1) == 0 { 2.0 } else { 0.0 }).collect();
        Self::from_profile(DensityId::new("W2"), dim, BulkProfile::Quadratic { m }, 2.0, 0.5, 4.0)
    }

    /// `W(A) = |A|`.
    pub fn w1abs(dim: usize) -> Self {
        Self::from_profile(DensityId::new("W1abs"), dim, BulkProfile::Norm { scale: 1.0 }, 1.0, 1.0, 1.0)
    }

    /// `W(A) = √(1+|A|²) − 1`, recession `|A|` at rate `α = ½`, `C = 1`.
    pub fn wsqrt(dim: usize) -> Self {
        let mut w = Self::from_profile(DensityId::new("Wsqrt"), dim, BulkProfile::SqrtRadial, 1.0, 0.5, 1.0);
        w.alpha = Some(0.5);
        w.recession_c = Some(1.0);
        w
    }

    /// `W(x, A) = (1 + amp·sin(2π x₁))·|A|²`, `|amp| < 1`.
    pub fn w2_weighted(dim: usize, amp: f64) -> Result<Self> {
        if !(amp.abs() < 1.0) {
            return Err(Error::InvalidInput(format!("W2x amplitude must satisfy |amp| < 1, got {amp}")));
        }
        let mut w = Self::w2(dim);
        w.id = DensityId::new("W2x").with("amp", amp);
        w.weight = Some(Arc::new(move |x: &Vector| 1.0 + amp * (std::f64::consts::TAU * x.get(0)).sin()));
        w.x_dependent = true;
        w.c_w = 0.5_f64.min(1.0 - amp.abs());
        w.big_c_w = 4.0 * (1.0 + amp.abs());
        w.a0_bound = 0.0;
        Ok(w)
    }

    /// Quadratic density `½ sᵀ M s` in orthonormal symmetric coordinates.
    pub fn quadratic(id: DensityId, dim: usize, m: Vec<f64>, c_w: f64, big_c_w: f64) -> Self {
        assert_eq!(m.len(), sym_len(dim) * sym_len(dim));
        Self::from_profile(id, dim, BulkProfile::Quadratic { m }, 2.0, c_w, big_c_w)
    }

    /// Black-box density; flags default to nonconvex and x-dependent until declared.
    pub fn custom(
        name: &str,
        dim: usize,
        f: impl Fn(&Vector, &Mat) -> f64 + Send + Sync + 'static,
        p: f64,
        c_w: f64,
        big_c_w: f64,
    ) -> Self {
        let f: BulkFn = Arc::new(f);
        let a0_bound = f(&Vector::filled(dim, 0.5), &Mat::zeros(dim)).abs();
        Self {
            id: DensityId::new(name),
            dim,
            base: BulkBase::Custom(f),
            weight: None,
            p,
            c_w,
            big_c_w,
            a0: Mat::zeros(dim),
            a0_bound,
            convex: false,
            x_dependent: true,
            alpha: None,
            recession_c: None,
        }
    }

    pub fn with_convex(mut self, convex: bool) -> Self {
        self.convex = convex;
        self
    }

    pub fn with_x_dependent(mut self, x_dependent: bool) -> Self {
        self.x_dependent = x_dependent;
        self
    }

    pub fn with_recession_rate(mut self, alpha: f64, c: f64) -> Self {
        self.alpha = Some(alpha);
        self.recession_c = Some(c);
        self
    }

    pub fn with_a0(mut self, a0: Mat, bound: f64) -> Self {
        self.a0 = a0;
        self.a0_bound = bound;
        self
    }

    pub fn id(&self) -> &DensityId {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self) -> Option<&BulkProfile> {
        match &self.base {
            BulkBase::Profile(p) => Some(p),
            BulkBase::Custom(_) => None,
        }
    }

    /// Multiplicative x-weight (1 when absent).
    pub fn weight(&self, x: &Vector) -> f64 {
        self.weight.as_ref().map_or(1.0, |w| w(x))
    }

    pub fn eval(&self, x: &Vector, a: &Mat) -> f64 {
        match &self.base {
            BulkBase::Profile(p) => self.weight(x) * p.eval(&a.sym_coords()),
            BulkBase::Custom(f) => self.weight(x) * f(x, a),
        }
    }

    /// Recession density `W^∞` when it is finite and known in closed form.
    pub fn recession_density(&self) -> Option<BulkDensity> {
        let rec = self.profile()?.recession()?;
        let mut out = Self::from_profile(
            DensityId::new(&format!("{}_recession", self.id.name)),
            self.dim,
            rec,
            1.0,
            self.c_w.min(1.0),
            self.big_c_w,
        );
        out.weight = self.weight.clone();
        out.x_dependent = self.x_dependent;
        Some(out)
    }
}

/// Flags declaring which surface axioms a density claims to satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceFlags {
    pub symmetric: bool,
    pub homogeneous: bool,
    pub subadditive: bool,
    pub x_continuous: bool,
    pub frame_indifferent: bool,
    /// `ψ(Rλ, Rν) = ψ(λ, ν)`: value depends on λ only relative to ν.
    pub jointly_isotropic: bool,
}

impl SurfaceFlags {
    pub fn all() -> Self {
        Self {
            symmetric: true,
            homogeneous: true,
            subadditive: true,
            x_continuous: true,
            frame_indifferent: true,
            jointly_isotropic: true,
        }
    }
}

/// Closed-form polar set of a norm-like `ψ(·, ν)`; enables exact proximal steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DualBall {
    /// `ψ = scale·|λ|`.
    Euclidean { scale: f64 },
    /// `ψ = a|λ·ν| + b|λ − (λ·ν)ν|`.
    NormalTangential { normal: f64, tangential: f64 },
}

impl DualBall {
    /// Projection of `y` onto `weight·B°` where `B°` is the polar unit ball.
    pub fn project(&self, weight: f64, nu: &Vector, y: &mut [f64]) {
        match *self {
            DualBall::Euclidean { scale } => {
                let r = weight * scale;
                let n = y.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > r {
                    let f = r / n;
                    y.iter_mut().for_each(|x| *x *= f);
                }
            }
            DualBall::NormalTangential { normal, tangential } => {
                let yv = Vector::from_slice(y);
                let yn = yv.dot(nu);
                let yt = yv - nu.scale(yn);
                let rn = weight * normal;
                let rt = weight * tangential;
                let yn_c = yn.clamp(-rn, rn);
                let tn = yt.norm();
                let yt_c = if tn > rt { yt.scale(rt / tn) } else { yt };
                let out = nu.scale(yn_c) + yt_c;
                y.copy_from_slice(out.as_slice());
            }
        }
    }
}

/// Surface density `ψ(x, λ, ν)`; λ has `N` entries, or `N²` for the
/// gradient-jump density `Ψ`.
#[derive(Clone)]
pub struct SurfaceDensity {
    id: DensityId,
    dim: usize,
    jump_len: usize,
    eval: SurfaceFn,
    pub c_psi: f64,
    pub big_c_psi: f64,
    omega: ModulusFn,
    pub flags: SurfaceFlags,
    dual_ball: Option<DualBall>,
}

impl fmt::Debug for SurfaceDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfaceDensity")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("jump_len", &self.jump_len)
            .field("flags", &self.flags)
            .finish()
    }
}

impl SurfaceDensity {
    /// `ψ = |λ|`.
    pub fn psi1(dim: usize) -> Self {
        Self {
            id: DensityId::new("PSI1"),
            dim,
            jump_len: dim,
            eval: Arc::new(|_, l: &[f64], _| l.iter().map(|x| x * x).sum::<f64>().sqrt()),
            c_psi: 1.0,
            big_c_psi: 1.0,
            omega: Arc::new(|_| 0.0),
            flags: SurfaceFlags::all(),
            dual_ball: Some(DualBall::Euclidean { scale: 1.0 }),
        }
    }

    /// `ψ = |λ·ν| + κ|λ − (λ·ν)ν|`.
    pub fn psi_aniso(dim: usize, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::InvalidInput(format!("PSI_aniso needs kappa > 0, got {kappa}")));
        }
        let mut flags = SurfaceFlags::all();
        flags.frame_indifferent = dim == 1;
        Ok(Self {
            id: DensityId::new("PSI_aniso").with("kappa", kappa),
            dim,
            jump_len: dim,
            eval: Arc::new(move |_, l: &[f64], nu: &Vector| {
                let lv = Vector::from_slice(l);
                let ln = lv.dot(nu);
                ln.abs() + kappa * (lv - nu.scale(ln)).norm()
            }),
            c_psi: kappa.min(1.0),
            big_c_psi: if dim == 1 { 1.0 } else { std::f64::consts::SQRT_2 * kappa.max(1.0) },
            omega: Arc::new(|_| 0.0),
            flags,
            dual_ball: Some(DualBall::NormalTangential { normal: 1.0, tangential: kappa }),
        })
    }

    /// Frobenius norm of a matrix jump, `Ψ = |Λ|`.
    pub fn psi1_matrix(dim: usize) -> Self {
        let mut s = Self::psi1(dim);
        s.id = DensityId::new("PSI1_matrix");
        s.jump_len = dim * dim;
        s
    }

    /// Black-box surface density with declared constants and flags.
    pub fn custom(
        name: &str,
        dim: usize,
        jump_len: usize,
        f: impl Fn(&Vector, &[f64], &Vector) -> f64 + Send + Sync + 'static,
        c_psi: f64,
        big_c_psi: f64,
        flags: SurfaceFlags,
    ) -> Self {
        Self {
            id: DensityId::new(name),
            dim,
            jump_len,
            eval: Arc::new(f),
            c_psi,
            big_c_psi,
            omega: Arc::new(|_| 0.0),
            flags,
            dual_ball: None,
        }
    }

    pub fn with_modulus(mut self, omega: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.omega = Arc::new(omega);
        self
    }

    pub fn id(&self) -> &DensityId {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jump_len(&self) -> usize {
        self.jump_len
    }

    pub fn dual_ball(&self) -> Option<DualBall> {
        self.dual_ball
    }

    pub fn omega(&self, r: f64) -> f64 {
        (self.omega)(r)
    }

    pub fn eval(&self, x: &Vector, lambda: &[f64], nu: &Vector) -> f64 {
        debug_assert_eq!(lambda.len(), self.jump_len);
        (self.eval)(x, lambda, nu)
    }

    pub fn eval_vec(&self, x: &Vector, lambda: &Vector, nu: &Vector) -> f64 {
        self.eval(x, lambda.as_slice(), nu)
    }
}

/// Nonlinear stored energy `V(Z)` with a single well at `SO(N)`.
#[derive(Clone)]
pub struct NonlinearDensity {
    id: DensityId,
    dim: usize,
    eval: NonlinearFn,
    /// Row-major `N² × N²` Hessian at the identity, if supplied.
    pub hessian_at_identity: Option<Vec<f64>>,
    pub c: f64,
}

impl fmt::Debug for NonlinearDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearDensity").field("id", &self.id).field("dim", &self.dim).finish()
    }
}

impl NonlinearDensity {
    /// 1D `V(z) = (z − 1)²`.
    pub fn v_sq() -> Self {
        Self {
            id: DensityId::new("V_sq"),
            dim: 1,
            eval: Arc::new(|z: &Mat| (z.get(0, 0) - 1.0).powi(2)),
            hessian_at_identity: None,
            c: 1.0,
        }
    }

    /// 1D double well `V(z) = (z² − 1)²/4`.
    pub fn v_dw() -> Self {
        Self {
            id: DensityId::new("V_dw"),
            dim: 1,
            eval: Arc::new(|z: &Mat| {
                let z = z.get(0, 0);
                (z * z - 1.0).powi(2) / 4.0
            }),
            hessian_at_identity: None,
            c: 0.25,
        }
    }

    /// 2D `V(Z) = dist²(Z, SO(2))`.
    pub fn v_rot() -> Self {
        Self {
            id: DensityId::new("V_rot"),
            dim: 2,
            eval: Arc::new(|z: &Mat| z.dist2_rotations()),
            hessian_at_identity: None,
            c: 1.0,
        }
    }

    pub fn custom(name: &str, dim: usize, f: impl Fn(&Mat) -> f64 + Send + Sync + 'static, c: f64) -> Self {
        Self { id: DensityId::new(name), dim, eval: Arc::new(f), hessian_at_identity: None, c }
    }

    pub fn with_hessian(mut self, h: Vec<f64>) -> Self {
        self.hessian_at_identity = Some(h);
        self
    }

    pub fn id(&self) -> &DensityId {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, z: &Mat) -> f64 {
        (self.eval)(z)
    }
}

/// Bulk preset by name.
pub fn bulk_preset(name: &str, dim: usize, params: &BTreeMap<String, f64>) -> Result<BulkDensity> {
    match name {
        "W2" => Ok(BulkDensity::w2(dim)),
        "W1abs" => Ok(BulkDensity::w1abs(dim)),
        "Wsqrt" => Ok(BulkDensity::wsqrt(dim)),
        "W2x" => BulkDensity::w2_weighted(dim, params.get("amp").copied().unwrap_or(0.5)),
        other => Err(Error::InvalidInput(format!("unknown bulk preset {other:?}"))),
    }
}

/// Surface preset by name.
pub fn surface_preset(name: &str, dim: usize, params: &BTreeMap<String, f64>) -> Result<SurfaceDensity> {
    match name {
        "PSI1" => Ok(SurfaceDensity::psi1(dim)),
        "PSI_aniso" => SurfaceDensity::psi_aniso(dim, params.get("kappa").copied().unwrap_or(0.5)),
        other => Err(Error::InvalidInput(format!("unknown surface preset {other:?}"))),
    }
}

/// Nonlinear preset by name.
pub fn nonlinear_preset(name: &str) -> Result<NonlinearDensity> {
    match name {
        "V_sq" => Ok(NonlinearDensity::v_sq()),
        "V_dw" => Ok(NonlinearDensity::v_dw()),
        "V_rot" => Ok(NonlinearDensity::v_rot()),
        other => Err(Error::InvalidInput(format!("unknown nonlinear preset {other:?}"))),
    }
}
