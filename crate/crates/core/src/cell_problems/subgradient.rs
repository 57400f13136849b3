//! Seeded multistart projected subgradient method for cell problems whose
//! densities have no closed-form proximal map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::discrete::{AffineProjector, Discretization};
use super::pdhg::Outcome;
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub(crate) struct SubgradientOptions {
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
}

fn numeric_subgradient(disc: &Discretization, x: &[f64], out: &mut [f64]) {
    let mut z = vec![0.0; disc.k.rows()];
    disc.k.mul(x, &mut z);
    for (zi, o) in z.iter_mut().zip(&disc.offset) {
        *zi -= o;
    }
    let mut gz = vec![0.0; z.len()];
    for b in &disc.blocks {
        let zb = &mut z[b.start..b.start + b.len];
        for i in 0..b.len {
            let orig = zb[i];
            let h = 1e-7 * (1.0 + orig.abs());
            zb[i] = orig + h;
            let fp = disc.block_value(b, zb);
            zb[i] = orig - h;
            let fm = disc.block_value(b, zb);
            zb[i] = orig;
            gz[b.start + i] = (fp - fm) / (2.0 * h);
        }
    }
    disc.k.mul_t(&gz, out);
}

/// Best feasible point over all starts; `starts` are projected first.
pub(crate) fn solve(disc: &Discretization, starts: &[Vec<f64>], opts: SubgradientOptions) -> Result<Outcome> {
    let n = disc.nvar();
    let proj = AffineProjector::new(&disc.c, &disc.d, &vec![1.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut inits: Vec<Vec<f64>> = starts.to_vec();
    if inits.is_empty() {
        inits.push(vec![0.0; n]);
    }
    let base = inits[0].clone();
    let scale = 0.1 * (1.0 + base.iter().fold(0.0_f64, |a, b| a.max(b.abs())));
    for _ in 0..opts.restarts {
        inits.push(base.iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect());
    }

    let mut best_x = Vec::new();
    let mut best = f64::INFINITY;
    let mut total_iters = 0usize;
    let mut converged = false;
    let mut g = vec![0.0; n];
    for mut x in inits {
        proj.project_checked(&mut x)?;
        let mut run_best = disc.objective(&x);
        let mut run_x = x.clone();
        let mut half_best = run_best;
        let step0 = scale;
        for k in 0..opts.max_iters {
            numeric_subgradient(disc, &x, &mut g);
            // remove the component normal to the constraint set
            let mut probe: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
            proj.project(&mut probe);
            let dir: Vec<f64> = x.iter().zip(&probe).map(|(a, b)| a - b).collect();
            let gn = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn < 1e-14 {
                break;
            }
            let alpha = step0 / ((k + 1) as f64).sqrt() / gn;
            for (xi, di) in x.iter_mut().zip(&dir) {
                *xi -= alpha * di;
            }
            let v = disc.objective(&x);
            if v < run_best {
                run_best = v;
                run_x.copy_from_slice(&x);
            }
            if k + 1 == opts.max_iters / 2 {
                half_best = run_best;
            }
            total_iters += 1;
        }
        if (half_best - run_best).abs() <= opts.tol * (1.0 + run_best.abs()) {
            converged = true;
        }
        let tie = 1e-12 * (1.0 + best.abs());
        if run_best < best - tie || (run_best <= best + tie && disc.jump_mass(&run_x) < disc.jump_mass(&best_x)) {
            best = run_best;
            best_x = run_x;
        }
    }
    proj.project(&mut best_x);
    let value = disc.objective(&best_x);
    Ok(Outcome { x: best_x, value, iterations: total_iters, converged, residual: f64::NAN })
}
