//! Shape functions and quadrature rules.
//!
//! Bulk elements are 8-node serendipity quadrilaterals with the node order
//!
//! ```text
//!   3 --- 6 --- 2
//!   |           |        xi  -> first parent coordinate (node 4 side)
//!   7           5        eta -> second parent coordinate (node 7 side)
//!   |           |
//!   0 --- 4 --- 1
//! ```
//!
//! integrated on a 3 x 3 Gauss grid. Interface elements are 3-node
//! quadratic lines (end, mid, end) with 3-point Gauss.

use nalgebra::{Matrix2, Vector2};

use crate::{Error, Result};

const G: f64 = 0.774_596_669_241_483_4; // sqrt(3/5)
const W1: f64 = 5.0 / 9.0;
const W2: f64 = 8.0 / 9.0;

/// 3 x 3 Gauss points (xi, eta, weight) in row-major order.
pub const GAUSS_2D: [(f64, f64, f64); 9] = [
    (-G, -G, W1 * W1),
    (0.0, -G, W2 * W1),
    (G, -G, W1 * W1),
    (-G, 0.0, W1 * W2),
    (0.0, 0.0, W2 * W2),
    (G, 0.0, W1 * W2),
    (-G, G, W1 * W1),
    (0.0, G, W2 * W1),
    (G, G, W1 * W1),
];

/// 3-point Gauss rule (xi, weight) on [-1, 1].
pub const GAUSS_1D: [(f64, f64); 3] = [(-G, W1), (0.0, W2), (G, W1)];

/// Q8 serendipity shape functions and parent-space derivatives.
pub fn q8_shape(xi: f64, eta: f64) -> ([f64; 8], [f64; 8], [f64; 8]) {
    let mut n = [0.0; 8];
    let mut dxi = [0.0; 8];
    let mut deta = [0.0; 8];

    // corner signs in node order 0..3
    const XS: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
    const ES: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
    for i in 0..4 {
        let xs = XS[i];
        let es = ES[i];
        n[i] = 0.25 * (1.0 + xs * xi) * (1.0 + es * eta) * (xs * xi + es * eta - 1.0);
        dxi[i] = 0.25 * xs * (1.0 + es * eta) * (2.0 * xs * xi + es * eta);
        deta[i] = 0.25 * es * (1.0 + xs * xi) * (xs * xi + 2.0 * es * eta);
    }
    // midside nodes: 4 and 6 on eta = -/+1, 5 and 7 on xi = +/-1
    n[4] = 0.5 * (1.0 - xi * xi) * (1.0 - eta);
    dxi[4] = -xi * (1.0 - eta);
    deta[4] = -0.5 * (1.0 - xi * xi);

    n[5] = 0.5 * (1.0 + xi) * (1.0 - eta * eta);
    dxi[5] = 0.5 * (1.0 - eta * eta);
    deta[5] = -eta * (1.0 + xi);

    n[6] = 0.5 * (1.0 - xi * xi) * (1.0 + eta);
    dxi[6] = -xi * (1.0 + eta);
    deta[6] = 0.5 * (1.0 - xi * xi);

    n[7] = 0.5 * (1.0 - xi) * (1.0 - eta * eta);
    dxi[7] = -0.5 * (1.0 - eta * eta);
    deta[7] = -eta * (1.0 - xi);

    (n, dxi, deta)
}

/// Isoparametric Jacobian dx/dxi and its determinant; the determinant must
/// be positive for an admissible element.
pub fn q8_jacobian(
    coords: &[Vector2<f64>; 8],
    dxi: &[f64; 8],
    deta: &[f64; 8],
) -> Result<(Matrix2<f64>, f64)> {
    let mut jac = Matrix2::zeros();
    for i in 0..8 {
        jac[(0, 0)] += dxi[i] * coords[i].x;
        jac[(0, 1)] += deta[i] * coords[i].x;
        jac[(1, 0)] += dxi[i] * coords[i].y;
        jac[(1, 1)] += deta[i] * coords[i].y;
    }
    let det = jac.determinant();
    if !(det > 0.0) {
        return Err(Error::Mesh(format!("non-positive element Jacobian, det = {det:e}")));
    }
    Ok((jac, det))
}

/// Quadratic line shape functions in node order (end at xi = -1, mid, end
/// at xi = +1), with derivatives.
pub fn line3_shape(xi: f64) -> ([f64; 3], [f64; 3]) {
    (
        [0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)],
        [xi - 0.5, -2.0 * xi, xi + 0.5],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> [Vector2<f64>; 8] {
        [
            Vector2::new(-1.0, -1.0),
            Vector2::new(1.0, -1.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(-1.0, 1.0),
            Vector2::new(0.0, -1.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(-1.0, 0.0),
        ]
    }

    #[test]
    fn center_values() {
        let (n, _, _) = q8_shape(0.0, 0.0);
        for i in 0..4 {
            assert_relative_eq!(n[i], -0.25, epsilon = 1e-15);
        }
        for i in 4..8 {
            assert_relative_eq!(n[i], 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn kronecker_property_at_nodes() {
        let parent = unit_square();
        for (j, p) in parent.iter().enumerate() {
            let (n, _, _) = q8_shape(p.x, p.y);
            for i in 0..8 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(n[i], expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn partition_of_unity_and_linear_completeness() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let parent = unit_square();
        for _ in 0..200 {
            let xi = rng.random_range(-1.0..1.0);
            let eta = rng.random_range(-1.0..1.0);
            let (n, dxi, deta) = q8_shape(xi, eta);
            assert_relative_eq!(n.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
            assert_relative_eq!(dxi.iter().sum::<f64>(), 0.0, epsilon = 1e-13);
            assert_relative_eq!(deta.iter().sum::<f64>(), 0.0, epsilon = 1e-13);
            // reproduce the coordinates themselves
            let mut x = Vector2::zeros();
            for i in 0..8 {
                x += parent[i] * n[i];
            }
            assert_relative_eq!(x.x, xi, epsilon = 1e-13);
            assert_relative_eq!(x.y, eta, epsilon = 1e-13);
        }
    }

    #[test]
    fn parent_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-7;
        for _ in 0..100 {
            let xi = rng.random_range(-0.99..0.99);
            let eta = rng.random_range(-0.99..0.99);
            let (_, dxi, deta) = q8_shape(xi, eta);
            let (np, _, _) = q8_shape(xi + h, eta);
            let (nm, _, _) = q8_shape(xi - h, eta);
            let (ep, _, _) = q8_shape(xi, eta + h);
            let (em, _, _) = q8_shape(xi, eta - h);
            for i in 0..8 {
                assert_relative_eq!(dxi[i], (np[i] - nm[i]) / (2.0 * h), epsilon = 1e-6);
                assert_relative_eq!(deta[i], (ep[i] - em[i]) / (2.0 * h), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn jacobian_of_scaled_square() {
        let coords: [Vector2<f64>; 8] =
            core::array::from_fn(|i| unit_square()[i].component_mul(&Vector2::new(2.0, 0.5)));
        let (_, dxi, deta) = q8_shape(0.3, -0.6);
        let (jac, det) = q8_jacobian(&coords, &dxi, &deta).unwrap();
        assert_relative_eq!(jac[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(jac[(1, 1)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(det, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn inverted_element_is_rejected() {
        // mirror the element so its parent map flips orientation
        let coords: [Vector2<f64>; 8] =
            core::array::from_fn(|i| Vector2::new(-unit_square()[i].x, unit_square()[i].y));
        let (_, dxi, deta) = q8_shape(0.0, 0.0);
        assert!(q8_jacobian(&coords, &dxi, &deta).is_err());
    }

    #[test]
    fn line_shapes_are_quadratic_lagrange() {
        for (j, x) in [-1.0, 0.0, 1.0].iter().enumerate() {
            let (n, _) = line3_shape(*x);
            for i in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(n[i], expect, epsilon = 1e-15);
            }
        }
        let (n, d) = line3_shape(0.4);
        assert_relative_eq!(n.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(d.iter().sum::<f64>(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quadrature_integrates_quintics_on_a_line() {
        // 3-point Gauss is exact through degree 5
        let integral: f64 = GAUSS_1D.iter().map(|(x, w)| w * (x.powi(4) + x.powi(2))).sum();
        assert_relative_eq!(integral, 2.0 / 5.0 + 2.0 / 3.0, epsilon = 1e-14);
        let area: f64 = GAUSS_2D.iter().map(|(_, _, w)| w).sum();
        assert_relative_eq!(area, 4.0, epsilon = 1e-14);
    }
}
