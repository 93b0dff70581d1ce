//! Bilinear quadrilateral with 2x2 Gauss quadrature.

use crate::error::{Error, Result};

const GAUSS: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
const REF_POINTS: [[f64; 2]; 4] = [
    [-GAUSS, -GAUSS],
    [GAUSS, -GAUSS],
    [GAUSS, GAUSS],
    [-GAUSS, GAUSS],
];
const REF_CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Shape function values and physical gradients at one quadrature point.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub shape: [f64; 4],
    pub grad: [[f64; 2]; 4],
    pub det_j: f64,
    /// Quadrature weight times `det_j`.
    pub dv: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct QuadGeometry {
    pub points: [QuadPoint; 4],
}

impl QuadGeometry {
    /// Fails if the element is inverted or degenerate at any quadrature point.
    pub fn new(corners: &[[f64; 2]; 4]) -> Result<Self> {
        let mut points = [QuadPoint {
            shape: [0.0; 4],
            grad: [[0.0; 2]; 4],
            det_j: 0.0,
            dv: 0.0,
        }; 4];
        for (q, &[r, s]) in REF_POINTS.iter().enumerate() {
            let mut shape = [0.0; 4];
            let mut dref = [[0.0; 2]; 4];
            for a in 0..4 {
                let [ra, sa] = REF_CORNERS[a];
                shape[a] = 0.25 * (1.0 + ra * r) * (1.0 + sa * s);
                dref[a] = [0.25 * ra * (1.0 + sa * s), 0.25 * sa * (1.0 + ra * r)];
            }
            // jac[i][k] = d x_i / d xi_k
            let mut jac = [[0.0; 2]; 2];
            for a in 0..4 {
                for i in 0..2 {
                    for k in 0..2 {
                        jac[i][k] += corners[a][i] * dref[a][k];
                    }
                }
            }
            let det_j = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if !(det_j > 0.0) {
                return Err(Error::invalid(format!(
                    "element Jacobian determinant {det_j:e} is not positive"
                )));
            }
            let inv = [
                [jac[1][1] / det_j, -jac[0][1] / det_j],
                [-jac[1][0] / det_j, jac[0][0] / det_j],
            ];
            let mut grad = [[0.0; 2]; 4];
            for a in 0..4 {
                // dN/dx_i = dN/dxi_k * dxi_k/dx_i
                for i in 0..2 {
                    grad[a][i] = dref[a][0] * inv[0][i] + dref[a][1] * inv[1][i];
                }
            }
            points[q] = QuadPoint {
                shape,
                grad,
                det_j,
                dv: det_j,
            };
        }
        Ok(QuadGeometry { points })
    }
}

impl QuadPoint {
    /// Interpolates a nodal scalar at this point.
    #[inline]
    pub fn interp(&self, nodal: &[f64; 4]) -> f64 {
        (0..4).map(|a| self.shape[a] * nodal[a]).sum()
    }

    /// Displacement gradient `du_i/dx_j` from the element's 8 dof values
    /// (ordered node-major: `[u0x, u0y, u1x, ...]`).
    #[inline]
    pub fn displacement_gradient(&self, ue: &[f64; 8]) -> [[f64; 2]; 2] {
        let mut g = [[0.0; 2]; 2];
        for a in 0..4 {
            for i in 0..2 {
                for j in 0..2 {
                    g[i][j] += ue[2 * a + i] * self.grad[a][j];
                }
            }
        }
        g
    }
}

/// Symmetric part of a 2x2 gradient.
#[inline]
pub fn sym(g: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let off = 0.5 * (g[0][1] + g[1][0]);
    [[g[0][0], off], [off, g[1][1]]]
}

#[inline]
pub fn ddot(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}
