//! Recession function `W^∞(A) = limsup_t W(tA)/t`, approximated on a finite
//! t-schedule.

use serde::Serialize;

use super::BulkDensity;
use crate::error::{Error, Result};
use crate::tensor::{Mat, Vector};

/// Log-log slope of the tail above which a recession estimate is treated
/// as divergent (a finite limit has slope → 0, `|A|²`-type growth has slope 1).
pub const DIVERGENCE_SLOPE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecessionEstimate {
    pub estimate: f64,
    pub tail_spread: f64,
    /// `(t, W(x, tA)/t)` for every schedule entry.
    pub values: Vec<(f64, f64)>,
    /// Certified half-width `C|A|^{1−α}/t_max^α`, when a rate is declared.
    pub band: Option<f64>,
    pub diverging: bool,
}

/// Max and spread over the last `⌈len/2⌉` entries.
pub fn tail_max(values: &[f64]) -> (f64, f64) {
    let k = values.len().div_ceil(2);
    let tail = &values[values.len() - k..];
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    (max, max - min)
}

/// Least-squares slope of `log |value|` against `log t` over the tail.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(t, v)| *t > 0.0 && v.abs() > 1e-300).map(|(t, v)| (t.ln(), v.abs().ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

pub fn validate_t_schedule(t: &[f64], min_last: f64) -> Result<()> {
    if t.is_empty() {
        return Err(Error::Schedule("empty t-schedule".into()));
    }
    if t.len() < 3 {
        return Err(Error::Schedule(format!("t-schedule needs at least 3 entries, got {}", t.len())));
    }
    if t.iter().any(|x| !(x.is_finite() && *x > 0.0)) || t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Schedule("t-schedule must be positive and strictly increasing".into()));
    }
    let last = *t.last().unwrap();
    if last < min_last {
        return Err(Error::Schedule(format!("last t-schedule entry {last} is below {min_last}")));
    }
    Ok(())
}

pub fn is_diverging(tail: &[(f64, f64)]) -> bool {
    loglog_slope(tail).is_some_and(|s| s > DIVERGENCE_SLOPE)
}

/// Tail-max surrogate of `limsup_t W(x, tA)/t`.
pub fn recession_bulk(w: &BulkDensity, x: &Vector, a: &Mat, t_schedule: &[f64]) -> Result<RecessionEstimate> {
    validate_t_schedule(t_schedule, 1e3)?;
    let values: Vec<(f64, f64)> = t_schedule.iter().map(|&t| (t, w.eval(x, &a.scale(t)) / t)).collect();
    let raw: Vec<f64> = values.iter().map(|v| v.1).collect();
    let (estimate, tail_spread) = tail_max(&raw);
    let k = values.len().div_ceil(2);
    let diverging = is_diverging(&values[values.len() - k..]);
    let band = match (w.alpha, w.recession_c) {
        (Some(alpha), Some(c)) => {
            let t = *t_schedule.last().unwrap();
            Some(c * a.norm().powf(1.0 - alpha) / t.powf(alpha))
        }
        _ => None,
    };
    Ok(RecessionEstimate { estimate, tail_spread, values, band, diverging })
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: [f64; 3] = [10.0, 100.0, 1000.0];

    #[test]
    fn homogeneous_density_is_exact() {
        let w = BulkDensity::w1abs(2);
        let a = Mat::sym2(0.6, 0.0, 0.8 / std::f64::consts::SQRT_2);
        let r = recession_bulk(&w, &Vector::new2(0.5, 0.5), &a, &T).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-14);
        assert!(r.tail_spread < 1e-14);
        assert!(!r.diverging);
    }

    #[test]
    fn quadratic_density_diverges() {
        let r = recession_bulk(&BulkDensity::w2(1), &Vector::scalar(0.5), &Mat::scalar(1.0), &T).unwrap();
        assert!(r.diverging);
        assert!(r.estimate >= 1000.0 - 1e-9);
    }

    #[test]
    fn sqrt_density_converges_within_band() {
        let w = BulkDensity::wsqrt(1);
        let r = recession_bulk(&w, &Vector::scalar(0.5), &Mat::scalar(1.0), &T).unwrap();
        // (√(1+t²) − 1)/t at t = 1000
        let closed = ((1.0f64 + 1e6).sqrt() - 1.0) / 1000.0;
        assert!((r.estimate - closed).abs() < 1e-15);
        assert!((r.estimate - 1.0).abs() < 1e-3);
        assert!((1.0 - r.estimate).abs() <= r.band.unwrap());
        assert!(!r.diverging);
    }

    #[test]
    fn schedule_preconditions() {
        let w = BulkDensity::w1abs(1);
        let x = Vector::scalar(0.0);
        let a = Mat::scalar(1.0);
        assert!(matches!(recession_bulk(&w, &x, &a, &[]), Err(Error::Schedule(_))));
        assert!(recession_bulk(&w, &x, &a, &[10.0, 1000.0]).is_err());
        assert!(recession_bulk(&w, &x, &a, &[1.0, 10.0, 100.0]).is_err());
        assert!(recession_bulk(&w, &x, &a, &[10.0, 10.0, 1000.0]).is_err());
    }
}
