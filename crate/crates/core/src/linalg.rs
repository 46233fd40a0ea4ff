//! Small complex linear-algebra helpers shared by the channel, estimation and
//! detection code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// One draw of a circularly-symmetric complex Gaussian with total variance `var`.
pub fn cgauss<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Inverse of a square matrix, rejecting singular or numerically singular input.
pub fn inverse(m: &CMatrix, what: &str) -> Result<CMatrix> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::usage(format!("{what}: matrix is {}x{}, not square", n, m.ncols())));
    }
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular(what.to_string()));
    }
    let residual = (m * &inv - CMatrix::identity(n, n)).norm();
    if !(residual < 1e-6) {
        return Err(Error::Singular(format!("{what} (inversion residual {residual:.3e})")));
    }
    Ok(inv)
}

pub fn frobenius2(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
