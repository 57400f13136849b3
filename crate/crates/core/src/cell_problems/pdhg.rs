//! Diagonally preconditioned primal-dual hybrid gradient with adaptive
//! restarts to the running average.

use super::discrete::{AffineProjector, BlockKind, Discretization};
use crate::densities::DualBall;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct PdhgOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub check_every: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    #[allow(dead_code)]
    pub residual: f64,
}

struct State {
    x: Vec<f64>,
    y: Vec<f64>,
}

struct Solver<'a> {
    disc: &'a Discretization,
    t: Vec<f64>,
    sigma: Vec<f64>,
    proj: AffineProjector,
    ball: Option<DualBall>,
    // scratch
    g: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(disc: &'a Discretization) -> Self {
        let t: Vec<f64> = disc.k.abs_col_sums().iter().map(|&s| if s > 0.0 { 1.0 / s } else { 1.0 }).collect();
        let rows = disc.k.abs_row_sums();
        let mut sigma = vec![1.0; disc.k.rows()];
        for b in &disc.blocks {
            let s = rows[b.start..b.start + b.len]
                .iter()
                .filter(|&&r| r > 0.0)
                .map(|r| 1.0 / r)
                .fold(f64::INFINITY, f64::min);
            let s = if s.is_finite() { s } else { 1.0 };
            sigma[b.start..b.start + b.len].iter_mut().for_each(|v| *v = s);
        }
        let proj = AffineProjector::new(&disc.c, &disc.d, &t);
        let n = disc.nvar();
        let m = disc.k.rows();
        Self { disc, t, sigma, proj, ball: disc.dual_ball(), g: vec![0.0; n], z: vec![0.0; m] }
    }

    /// One iteration from `s`, written into `out`.
    fn step(&mut self, s: &State, out: &mut State) {
        let disc = self.disc;
        disc.k.mul_t(&s.y, &mut self.g);
        for j in 0..out.x.len() {
            out.x[j] = s.x[j] - self.t[j] * self.g[j];
        }
        self.proj.project(&mut out.x);
        let xbar: Vec<f64> = out.x.iter().zip(&s.x).map(|(a, b)| 2.0 * a - b).collect();
        disc.k.mul(&xbar, &mut self.z);
        for r in 0..self.z.len() {
            out.y[r] = s.y[r] + self.sigma[r] * (self.z[r] - disc.offset[r]);
        }
        for b in &disc.blocks {
            let v = &mut out.y[b.start..b.start + b.len];
            let sigma = self.sigma[b.start];
            match &b.kind {
                BlockKind::Jump { nu, .. } => {
                    self.ball.expect("proximable").project(1.0, nu, v);
                }
                BlockKind::Bulk { pos, vol, scale } => {
                    let w = disc.energy.w.as_ref().expect("bulk blocks need W");
                    let coef = w.weight(pos);
                    let u: Vec<f64> = v.iter().map(|a| a / sigma).collect();
                    let p = disc.profile().expect("proximable").prox(coef / sigma, vol * scale, &u);
                    for (vi, pi) in v.iter_mut().zip(p) {
                        *vi -= sigma * pi;
                    }
                }
            }
        }
    }

    fn distance(&self, a: &State, b: &State) -> f64 {
        let px: f64 = a.x.iter().zip(&b.x).zip(&self.t).map(|((p, q), t)| (p - q).powi(2) / t).sum();
        let py: f64 = a.y.iter().zip(&b.y).zip(&self.sigma).map(|((p, q), s)| (p - q).powi(2) / s).sum();
        (px + py).sqrt()
    }

    fn norm(&self, a: &State) -> f64 {
        let px: f64 = a.x.iter().zip(&self.t).map(|(p, t)| p * p / t).sum();
        let py: f64 = a.y.iter().zip(&self.sigma).map(|(p, s)| p * p / s).sum();
        (px + py).sqrt()
    }

    /// Normalized fixed-point residual `|T(s) − s| / (1 + |s|)`.
    fn residual(&mut self, s: &State, scratch: &mut State) -> f64 {
        self.step(s, scratch);
        self.distance(s, scratch) / (1.0 + self.norm(s))
    }
}

/// Runs the solver from the projection of `start` (zero when absent).
pub(crate) fn solve(disc: &Discretization, start: Option<&[f64]>, opts: PdhgOptions) -> Result<Outcome> {
    if !disc.proximable() {
        return Err(Error::BackendUnavailable {
            backend: "convex_primal_dual".into(),
            reason: "needs a convex profile W and a norm-like ψ".into(),
        });
    }
    let mut solver = Solver::new(disc);
    let n = disc.nvar();
    let m = disc.k.rows();
    let mut x = start.map_or_else(|| vec![0.0; n], |s| s.to_vec());
    solver.proj.project_checked(&mut x)?;

    let mut cur = State { x, y: vec![0.0; m] };
    let mut next = State { x: vec![0.0; n], y: vec![0.0; m] };
    let mut scratch = State { x: vec![0.0; n], y: vec![0.0; m] };
    let mut avg = State { x: cur.x.clone(), y: cur.y.clone() };
    let mut avg_count = 0usize;

    let mut best_x = cur.x.clone();
    let mut best = disc.objective(&best_x);
    let mut best_mass = disc.jump_mass(&best_x);
    let consider = |x: &[f64], best_x: &mut Vec<f64>, best: &mut f64, best_mass: &mut f64| {
        let v = disc.objective(x);
        if !v.is_finite() {
            return;
        }
        let tie = 1e-12 * (1.0 + best.abs());
        if v < *best - tie {
            *best = v;
            *best_mass = disc.jump_mass(x);
            best_x.copy_from_slice(x);
        } else if v <= *best + tie {
            let mass = disc.jump_mass(x);
            if mass < *best_mass {
                *best = best.min(v);
                *best_mass = mass;
                best_x.copy_from_slice(x);
            }
        }
    };

    let mut r_restart = solver.residual(&cur, &mut scratch);
    let mut r_prev = r_restart;
    let mut since_restart = 0usize;
    let mut residual = r_restart;
    let mut converged = residual <= opts.tol;
    let mut iters = 0usize;
    while !converged && iters < opts.max_iters {
        solver.step(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        iters += 1;
        since_restart += 1;
        avg_count += 1;
        let wgt = 1.0 / avg_count as f64;
        for (a, c) in avg.x.iter_mut().zip(&cur.x) {
            *a += wgt * (c - *a);
        }
        for (a, c) in avg.y.iter_mut().zip(&cur.y) {
            *a += wgt * (c - *a);
        }
        if iters % opts.check_every != 0 {
            continue;
        }
        let r_cur = solver.residual(&cur, &mut scratch);
        let r_avg = solver.residual(&avg, &mut scratch);
        consider(&cur.x, &mut best_x, &mut best, &mut best_mass);
        consider(&avg.x, &mut best_x, &mut best, &mut best_mass);
        let (use_avg, r_cand) = if r_avg < r_cur { (true, r_avg) } else { (false, r_cur) };
        residual = r_cand;
        if r_cand <= opts.tol {
            converged = true;
        }
        let restart = r_cand <= 0.2 * r_restart
            || (r_cand <= 0.8 * r_restart && r_cand > r_prev)
            || since_restart as f64 >= 0.36 * iters as f64;
        if restart {
            if use_avg {
                cur.x.copy_from_slice(&avg.x);
                cur.y.copy_from_slice(&avg.y);
            }
            avg.x.copy_from_slice(&cur.x);
            avg.y.copy_from_slice(&cur.y);
            avg_count = 0;
            since_restart = 0;
            r_restart = r_cand;
        }
        r_prev = r_cand;
    }
    consider(&cur.x, &mut best_x, &mut best, &mut best_mass);
    // iterates are feasible up to roundoff; restore exactness for the reported field
    solver.proj.project(&mut best_x);
    let value = disc.objective(&best_x);
    Ok(Outcome { x: best_x, value, iterations: iters, converged, residual })
}
