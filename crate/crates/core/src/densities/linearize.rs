//! Linearization `W(Z) = ½ D²V(Id) Z : Z` of a nonlinear stored energy.

use nalgebra::DMatrix;

use super::{BulkDensity, DensityId, NonlinearDensity};
use crate::error::{Error, Result};
use crate::tensor::{sym_len, Mat};

const ASYMMETRY_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct LinearizedDensity {
    /// Row-major `N² × N²` Hessian of `V` at the identity (symmetrized).
    pub hessian: Vec<f64>,
    /// Largest `|H_ij − H_ji|` before symmetrization.
    pub asymmetry: f64,
    /// Norm of the Hessian applied to unit skew matrices; small when `V` is
    /// frame indifferent.
    pub skew_leak: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub bulk: BulkDensity,
}

fn basis(dim: usize, k: usize) -> Mat {
    let mut flat = vec![0.0; dim * dim];
    flat[k] = 1.0;
    Mat::from_flat(dim, &flat)
}

fn fd_hessian(v: &NonlinearDensity, h: f64) -> Vec<f64> {
    let dim = v.dim();
    let n = dim * dim;
    let id = Mat::identity(dim);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let (ei, ej) = (basis(dim, i).scale(h), basis(dim, j).scale(h));
            let val = (v.eval(&(id + ei + ej)) - v.eval(&(id + ei - ej)) - v.eval(&(id - ei + ej))
                + v.eval(&(id - ei - ej)))
                / (4.0 * h * h);
            out[i * n + j] = val;
            out[j * n + i] = val;
        }
    }
    out
}

/// Builds the quadratic form from a supplied or finite-difference Hessian.
pub fn linearize(v: &NonlinearDensity, fd_step: f64) -> Result<LinearizedDensity> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::InvalidInput(format!("fd_step must be positive, got {fd_step}")));
    }
    let dim = v.dim();
    let n = dim * dim;
    let raw = match &v.hessian_at_identity {
        Some(h) => {
            if h.len() != n * n {
                return Err(Error::Linearization(format!("Hessian has {} entries, expected {}", h.len(), n * n)));
            }
            h.clone()
        }
        None => fd_hessian(v, fd_step),
    };
    let mut asymmetry: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            asymmetry = asymmetry.max((raw[i * n + j] - raw[j * n + i]).abs());
        }
    }
    if asymmetry > ASYMMETRY_TOL {
        return Err(Error::Linearization(format!("Hessian asymmetric by {asymmetry:e}")));
    }
    let hess: Vec<f64> = (0..n * n).map(|k| 0.5 * (raw[k] + raw[(k % n) * n + k / n])).collect();

    // E maps orthonormal symmetric coordinates to flattened matrices
    let k = sym_len(dim);
    let e = DMatrix::from_fn(n, k, |r, c| {
        let mut s = vec![0.0; k];
        s[c] = 1.0;
        Mat::from_sym_coords(dim, &s).flat()[r]
    });
    let hm = DMatrix::from_row_slice(n, n, &hess);
    let m = e.transpose() * &hm * &e;

    let skew_leak = if dim == 2 {
        let w = DMatrix::from_row_slice(n, 1, &[0.0, -1.0, 1.0, 0.0]) / std::f64::consts::SQRT_2;
        (&hm * w).norm()
    } else {
        0.0
    };

    let eig = m.clone().symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // eigenvalues at the level of the O(h²) difference error count as zero
    let floor = (1e-8 * max_eigenvalue.abs()).max(100.0 * fd_step * fd_step);
    if !(min_eigenvalue > floor) {
        return Err(Error::Linearization(format!(
            "Hessian not positive definite on symmetric matrices (smallest eigenvalue {min_eigenvalue:e})"
        )));
    }
    let m_flat: Vec<f64> = (0..k * k).map(|idx| m[(idx / k, idx % k)]).collect();
    let id = DensityId::new(&format!("lin_{}", v.id().name)).with("fd_step", fd_step);
    let c_w = (0.5 * min_eigenvalue).min(1.0);
    let bulk = BulkDensity::quadratic(id, dim, m_flat, c_w, 0.5 * max_eigenvalue);
    Ok(LinearizedDensity { hessian: hess, asymmetry, skew_leak, min_eigenvalue, max_eigenvalue, bulk })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Vector;

    #[test]
    fn one_dimensional_presets_give_z_squared() {
        for v in [NonlinearDensity::v_sq(), NonlinearDensity::v_dw()] {
            let lin = linearize(&v, 1e-4).unwrap();
            for z in [-2.0, 0.3, 1.7] {
                let w = lin.bulk.eval(&Vector::scalar(0.0), &Mat::scalar(z));
                assert!((w - z * z).abs() < 1e-6 * (1.0 + z * z), "{} z={z} w={w}", v.id());
            }
        }
    }

    #[test]
    fn skew_matrices_cost_nothing() {
        let lin = linearize(&NonlinearDensity::v_rot(), 1e-4).unwrap();
        let skew = Mat::new2(0.0, -0.7, 0.7, 0.0);
        assert_eq!(lin.bulk.eval(&Vector::new2(0.0, 0.0), &skew), 0.0);
        assert!(lin.skew_leak < 1e-5);
        // V_rot = dist² linearizes to |sym Z|²
        let z = Mat::new2(0.3, -0.2, 0.5, 1.1);
        let w = lin.bulk.eval(&Vector::new2(0.0, 0.0), &z);
        assert!((w - z.sym().norm().powi(2)).abs() < 1e-6);
    }

    #[test]
    fn asymmetric_supplied_hessian_is_rejected() {
        let v = NonlinearDensity::v_rot().with_hessian(vec![
            2.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 1.0, 0.0, //
            0.0, 1.1, 1.0, 0.0, //
            0.0, 0.0, 0.0, 2.0,
        ]);
        assert!(matches!(linearize(&v, 1e-4), Err(Error::Linearization(_))));
    }

    #[test]
    fn degenerate_hessian_is_rejected() {
        let v = NonlinearDensity::custom("flat", 1, |z| (z.get(0, 0) - 1.0).powi(4), 1.0);
        assert!(matches!(linearize(&v, 1e-3), Err(Error::Linearization(_))));
    }
}
