//! Sampling-based axiom checks. Violations are data: each check reports the
//! worst amount by which its inequality failed over the sample set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{BulkDensity, NonlinearDensity, SurfaceDensity};
use crate::tensor::{Mat, Vector};

/// Deterministic source of random matrices, points and normals.
pub struct Sampler {
    rng: ChaCha8Rng,
    dim: usize,
    radius: f64,
}

impl Sampler {
    pub fn new(dim: usize, seed: u64, radius: f64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), dim, radius }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    /// Symmetric matrix with Frobenius norm uniform in `[0, radius]`.
    pub fn sym_matrix(&mut self) -> Mat {
        let dir = self.direction(self.dim * self.dim);
        let r = self.rng.gen_range(0.0..=self.radius);
        let a = Mat::from_flat(self.dim, &dir).sym();
        let n = a.norm();
        if n == 0.0 {
            Mat::zeros(self.dim)
        } else {
            a.scale(r / n)
        }
    }

    /// General matrix with Frobenius norm uniform in `[0, radius]`.
    pub fn matrix(&mut self) -> Mat {
        let dir = self.direction(self.dim * self.dim);
        let r = self.rng.gen_range(0.0..=self.radius);
        Mat::from_flat(self.dim, &dir).scale(r)
    }

    /// Matrix with positive determinant near the rotations.
    pub fn gl_plus(&mut self) -> Mat {
        loop {
            let r = self.rotation();
            let z = r + self.matrix();
            if z.det() > 1e-3 {
                return z;
            }
        }
    }

    pub fn rotation(&mut self) -> Mat {
        match self.dim {
            1 => Mat::identity(1),
            _ => Mat::rotation(self.rng.gen_range(0.0..std::f64::consts::TAU)),
        }
    }

    pub fn point(&mut self) -> Vector {
        let c: Vec<f64> = (0..self.dim).map(|_| self.rng.gen_range(0.0..1.0)).collect();
        Vector::from_slice(&c)
    }

    pub fn unit_normal(&mut self) -> Vector {
        Vector::from_slice(&self.direction(self.dim))
    }

    /// Vector of length `len` with norm uniform in `[0, radius]`.
    pub fn jump(&mut self, len: usize) -> Vec<f64> {
        let r = self.rng.gen_range(0.0..=self.radius);
        self.direction(len).into_iter().map(|x| x * r).collect()
    }

    fn direction(&mut self, len: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..len).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-6 && n <= 1.0 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub axiom: String,
    pub worst_violation: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomReport {
    pub subject: String,
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.worst_violation <= tol)
    }

    pub fn violation(&self, axiom: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.axiom == axiom).map(|c| c.worst_violation)
    }

    pub fn worst(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.worst_violation))
    }
}

/// Tracks `max(0, lhs − rhs)` with a relative roundoff allowance, so exact
/// inequalities evaluated in floating point report zero.
struct Tracker {
    name: &'static str,
    worst: f64,
    n: usize,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self { name, worst: 0.0, n: 0 }
    }

    fn le(&mut self, lhs: f64, rhs: f64) {
        self.n += 1;
        let slack = 1e-12 * (1.0 + lhs.abs() + rhs.abs());
        let v = lhs - rhs - slack;
        if v.is_nan() {
            self.worst = f64::INFINITY;
        } else if v > self.worst {
            self.worst = v;
        }
    }

    fn finish(self) -> AxiomCheck {
        AxiomCheck { axiom: self.name.to_string(), worst_violation: self.worst, samples: self.n }
    }
}

/// Checks nonnegativity, (W1) p-Lipschitz continuity, (W2) boundedness of
/// `W(·, A₀)` and (W3) p-growth from below.
pub fn check_bulk_axioms(w: &BulkDensity, sampler: &mut Sampler, n_samples: usize) -> AxiomReport {
    let p = w.p;
    let mut nonneg = Tracker::new("nonnegativity");
    let mut lip = Tracker::new("W1 p-Lipschitz");
    let mut above = Tracker::new("W2 control from above");
    let mut below = Tracker::new("W3 p-growth from below");
    for _ in 0..n_samples.max(1) {
        let x = sampler.point();
        let a1 = sampler.sym_matrix();
        let a2 = sampler.sym_matrix();
        let (w1, w2) = (w.eval(&x, &a1), w.eval(&x, &a2));
        nonneg.le(-w1, 0.0);
        let weight = 1.0 + a1.norm().powf(p - 1.0) + a2.norm().powf(p - 1.0);
        lip.le((w1 - w2).abs(), w.big_c_w * (a1 - a2).norm() * weight);
        above.le(w.eval(&x, &w.a0), w.a0_bound);
        below.le(w.c_w * a1.norm().powf(p) - 1.0 / w.c_w, w1);
    }
    AxiomReport {
        subject: w.id().to_string(),
        checks: vec![nonneg.finish(), lip.finish(), above.finish(), below.finish()],
    }
}

/// Checks (ψ1)–(ψ6); flag-gated axioms are only checked when declared.
pub fn check_surface_axioms(psi: &SurfaceDensity, sampler: &mut Sampler, n_samples: usize) -> AxiomReport {
    let len = psi.jump_len();
    let mut sym = Tracker::new("psi1 symmetry");
    let mut lower = Tracker::new("psi2 lower bound");
    let mut upper = Tracker::new("psi2 upper bound");
    let mut homog = Tracker::new("psi3 homogeneity");
    let mut subadd = Tracker::new("psi4 subadditivity");
    let mut cont = Tracker::new("psi5 continuity in x");
    let mut frame = Tracker::new("psi6 frame indifference");
    let f = psi.flags;
    for _ in 0..n_samples.max(1) {
        let x = sampler.point();
        let nu = sampler.unit_normal();
        let l1 = sampler.jump(len);
        let l2 = sampler.jump(len);
        let v1 = psi.eval(&x, &l1, &nu);
        let n1 = l1.iter().map(|x| x * x).sum::<f64>().sqrt();
        let neg: Vec<f64> = l1.iter().map(|x| -x).collect();
        let sv = psi.eval(&x, &neg, &nu.scale(-1.0));
        if f.symmetric {
            sym.le((v1 - sv).abs(), 0.0);
        }
        lower.le(psi.c_psi * n1, v1);
        upper.le(v1, psi.big_c_psi * n1);
        if f.homogeneous {
            let t = sampler.uniform(0.0, 5.0);
            let scaled: Vec<f64> = l1.iter().map(|x| x * t).collect();
            homog.le((psi.eval(&x, &scaled, &nu) - t * v1).abs(), 0.0);
        }
        if f.subadditive {
            let sum: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a + b).collect();
            subadd.le(psi.eval(&x, &sum, &nu), v1 + psi.eval(&x, &l2, &nu));
        }
        if f.x_continuous {
            let x2 = sampler.point();
            let dist = (x2 - x).norm();
            cont.le((psi.eval(&x2, &l1, &nu) - v1).abs(), psi.omega(dist) * n1);
        }
        if f.frame_indifferent {
            let r = sampler.rotation();
            let rotated = rotate_jump(&r, &l1, psi.dim());
            frame.le((psi.eval(&x, &rotated, &nu) - v1).abs(), 0.0);
        }
    }
    let mut checks = vec![lower.finish(), upper.finish()];
    if f.symmetric {
        checks.insert(0, sym.finish());
    }
    if f.homogeneous {
        checks.push(homog.finish());
    }
    if f.subadditive {
        checks.push(subadd.finish());
    }
    if f.x_continuous {
        checks.push(cont.finish());
    }
    if f.frame_indifferent {
        checks.push(frame.finish());
    }
    AxiomReport { subject: psi.id().to_string(), checks }
}

/// `Rλ` for vector jumps, `RΛ` for flattened matrix jumps.
fn rotate_jump(r: &Mat, l: &[f64], dim: usize) -> Vec<f64> {
    if l.len() == dim {
        r.mul_vec(&Vector::from_slice(l)).as_slice().to_vec()
    } else {
        r.matmul(&Mat::from_flat(dim, l)).flat()
    }
}

/// Checks (V2) frame indifference and (V3) coercivity with zero set `SO(N)`.
/// Samples are drawn from matrices with positive determinant.
pub fn check_nonlinear_axioms(v: &NonlinearDensity, sampler: &mut Sampler, n_samples: usize) -> AxiomReport {
    let mut frame = Tracker::new("V2 frame indifference");
    let mut coerc = Tracker::new("V3 coercivity");
    let mut zero = Tracker::new("V3 zero on SO(N)");
    for _ in 0..n_samples.max(1) {
        let z = sampler.gl_plus();
        let r = sampler.rotation();
        let vz = v.eval(&z);
        frame.le((v.eval(&r.matmul(&z)) - vz).abs(), 0.0);
        coerc.le(v.c * z.dist2_rotations(), vz);
        zero.le(v.eval(&r).abs(), 0.0);
    }
    AxiomReport { subject: v.id().to_string(), checks: vec![frame.finish(), coerc.finish(), zero.finish()] }
}
