//! Checks of the structural properties of relaxed densities on solved tables.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::tensor::{Mat, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct HSample {
    pub a: Mat,
    pub b: Mat,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub property: String,
    pub worst_violation: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
    /// Fitted constants and moduli.
    pub fitted: BTreeMap<String, f64>,
}

impl PropertyReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.worst_violation <= tol)
    }

    pub fn violation(&self, name: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.property == name).map(|c| c.worst_violation)
    }

    fn push(&mut self, property: &str, worst_violation: f64, samples: usize) {
        self.checks.push(PropertyCheck { property: property.into(), worst_violation, samples });
    }
}

/// Lipschitz-in-B modulus and growth sandwich of an `H_p` table. When
/// `declared = Some((c̄, C̄))` the sandwich is checked with those constants,
/// otherwise only the fitted constants are reported.
pub fn verify_bulk_properties(samples: &[HSample], p: f64, declared: Option<(f64, f64)>) -> PropertyReport {
    let mut rep = PropertyReport::default();
    let mut modulus: f64 = 0.0;
    let mut pairs = 0;
    for (i, s) in samples.iter().enumerate() {
        for t in &samples[i + 1..] {
            if (s.a - t.a).max_abs() > 1e-12 {
                continue;
            }
            let d = (s.b - t.b).norm();
            if d < 1e-12 {
                continue;
            }
            let wgt = d * (1.0 + s.b.norm().powf(p - 1.0) + t.b.norm().powf(p - 1.0));
            modulus = modulus.max((s.value - t.value).abs() / wgt);
            pairs += 1;
        }
    }
    rep.fitted.insert("lipschitz_modulus".into(), modulus);
    rep.push("lipschitz in B finite", if modulus.is_finite() { 0.0 } else { f64::INFINITY }, pairs);

    let growth = |s: &HSample| s.a.norm() + s.b.norm().powf(p);
    let big_c = samples.iter().map(|s| s.value / (1.0 + growth(s))).fold(0.0, f64::max);
    // c ↦ c·X − 1/c is increasing, so the admissible lower constants form (0, c*]
    let lower_ok = |c: f64| samples.iter().all(|s| c * growth(s) - 1.0 / c <= s.value + 1e-12);
    let (mut lo, mut hi) = (1e-6, 1.0);
    if lower_ok(hi) {
        lo = hi;
    } else {
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if lower_ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    rep.fitted.insert("c_bar_fitted".into(), lo);
    rep.fitted.insert("C_bar_fitted".into(), big_c);
    if let Some((c, cc)) = declared {
        let lower = samples.iter().map(|s| (c * growth(s) - 1.0 / c - s.value).max(0.0)).fold(0.0, f64::max);
        let upper = samples.iter().map(|s| (s.value - cc * (1.0 + growth(s))).max(0.0)).fold(0.0, f64::max);
        rep.push("growth lower bound", lower, samples.len());
        rep.push("growth upper bound", upper, samples.len());
    }
    let negative = samples.iter().map(|s| (-s.value).max(0.0)).fold(0.0, f64::max);
    rep.push("nonnegativity", negative, samples.len());
    rep
}

/// Symmetry, 1-homogeneity and subadditivity in `λ` (homogeneity and
/// subadditivity only for `p > 1`) plus fitted linear bounds, evaluating `h`
/// through `solve` on the given `(λ, ν)` samples.
pub fn verify_surface_properties(
    samples: &[(Vector, Vector)],
    p: f64,
    solve: impl Fn(&Vector, &Vector) -> Result<f64> + Sync,
) -> Result<PropertyReport> {
    let mut rep = PropertyReport::default();
    let h: Vec<f64> = samples.iter().map(|(l, n)| solve(l, n)).collect::<Result<_>>()?;

    let mut sym: f64 = 0.0;
    for ((l, n), v) in samples.iter().zip(&h) {
        sym = sym.max((solve(&-*l, &-*n)? - v).abs());
    }
    rep.push("symmetry", sym, samples.len());

    let (mut c_lo, mut c_hi) = (f64::INFINITY, 0.0_f64);
    for ((l, _), v) in samples.iter().zip(&h) {
        if l.norm() > 1e-12 {
            c_lo = c_lo.min(v / l.norm());
            c_hi = c_hi.max(v / l.norm());
        }
    }
    rep.fitted.insert("c_linear".into(), c_lo);
    rep.fitted.insert("C_linear".into(), c_hi);
    let zero = samples.iter().zip(&h).filter(|((l, _), _)| l.norm() <= 1e-12).map(|(_, v)| v.abs()).fold(0.0, f64::max);
    rep.push("zero jump costs nothing", zero, samples.len());

    if p > 1.0 {
        let mut hom: f64 = 0.0;
        for ((l, n), v) in samples.iter().zip(&h) {
            hom = hom.max((solve(&l.scale(2.0), n)? - 2.0 * v).abs());
        }
        rep.push("homogeneity", hom, samples.len());
        let mut sub: f64 = 0.0;
        let mut count = 0;
        for (i, ((l1, n1), v1)) in samples.iter().zip(&h).enumerate() {
            for ((l2, n2), v2) in samples[i + 1..].iter().zip(&h[i + 1..]) {
                if (*n1 - *n2).norm() > 1e-12 {
                    continue;
                }
                sub = sub.max(solve(&(*l1 + *l2), n1)? - v1 - v2);
                count += 1;
            }
        }
        rep.push("subadditivity", sub.max(0.0), count);
    }
    Ok(rep)
}
