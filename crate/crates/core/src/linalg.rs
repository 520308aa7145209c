//! Just enough 2x2 linear algebra for the continuation schemes.

use crate::error::{Error, Result};

/// Determinants below this magnitude are treated as an exact singularity.
pub const SINGULAR_DET: f64 = 1e-14;

/// Row-major 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);
    /// Permutation exchanging the two reactors.
    pub const SWAP: Mat2 = Mat2([[0.0, 1.0], [1.0, 0.0]]);

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn sub(&self, other: &Mat2) -> Mat2 {
        let (a, b) = (&self.0, &other.0);
        Mat2([
            [a[0][0] - b[0][0], a[0][1] - b[0][1]],
            [a[1][0] - b[1][0], a[1][1] - b[1][1]],
        ])
    }

    /// Solves `self * x = rhs` by Cramer's rule.
    pub fn solve(&self, rhs: [f64; 2]) -> Result<[f64; 2]> {
        let det = self.det();
        if det.is_nan() || det.abs() < SINGULAR_DET {
            return Err(Error::SingularJacobian { det });
        }
        let m = &self.0;
        Ok([
            (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
            (m[0][0] * rhs[1] - rhs[0] * m[1][0]) / det,
        ])
    }

    /// Eigenvalues as `(re, im)` pairs.
    pub fn eigenvalues(&self) -> [(f64, f64); 2] {
        let half_tr = 0.5 * self.trace();
        let disc = half_tr * half_tr - self.det();
        if disc >= 0.0 {
            let r = disc.sqrt();
            [(half_tr + r, 0.0), (half_tr - r, 0.0)]
        } else {
            let r = (-disc).sqrt();
            [(half_tr, r), (half_tr, -r)]
        }
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|&(re, im)| re.hypot(im))
            .fold(0.0, f64::max)
    }
}

pub fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}
