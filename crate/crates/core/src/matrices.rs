//! Constant matrices of the symmetric-hyperbolic Maxwell rewrite.
//!
//! The first-order form couples the 6-vector `u = (E, H)` through the block
//! matrices `Aco[j]` built from the antisymmetric generators `J_j` of the curl,
//! and the boundary operator is assembled from `B0co`, `B1co`, `B2co`.

use crate::alg::{Mat3, Mat3x6, Mat6, Vec3, Vec6};

/// The exact integer-entried matrices shared by all modules.
#[derive(Debug, Clone, Copy)]
pub struct ConstantMatrices {
    /// Antisymmetric generators: `J_j v = e_j x v`, so `curl = sum_j J_j d_j`.
    pub j: [Mat3; 3],
    /// Symmetric 6x6 blocks `Aco[j] = [[0, -J_j], [J_j, 0]]`.
    pub aco: [Mat6; 3],
    /// Tangential trace at the flat face (`nu = -e3`); equals `J_3`.
    pub b0co: Mat3,
    /// `B1co = (B0co 0)`: tangential trace of the electric block.
    pub b1co: Mat3x6,
    /// `B2co = (0 B0co)`: tangential trace of the magnetic block.
    pub b2co: Mat3x6,
}

/// Returns the constant matrices with exact integer entries.
pub fn constant_matrices() -> ConstantMatrices {
    let j1 = Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
    let j2 = Mat3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0);
    let j3 = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);

    let aco = [block_aco(&j1), block_aco(&j2), block_aco(&j3)];

    let mut b1co = Mat3x6::zeros();
    let mut b2co = Mat3x6::zeros();
    b1co.view_mut((0, 0), (3, 3)).copy_from(&j3);
    b2co.view_mut((0, 3), (3, 3)).copy_from(&j3);

    ConstantMatrices { j: [j1, j2, j3], aco, b0co: j3, b1co, b2co }
}

fn block_aco(j: &Mat3) -> Mat6 {
    let mut a = Mat6::zeros();
    a.view_mut((0, 3), (3, 3)).copy_from(&(-j));
    a.view_mut((3, 0), (3, 3)).copy_from(j);
    a
}

impl ConstantMatrices {
    /// Applies `Aco[axis]` to a 6-vector without forming the matrix product:
    /// `Aco[j] (a, b) = (-e_j x b, e_j x a)`.
    #[inline]
    pub fn apply_aco(&self, axis: usize, v: &Vec6) -> Vec6 {
        let a = Vec3::new(v[0], v[1], v[2]);
        let b = Vec3::new(v[3], v[4], v[5]);
        let e = axis_unit(axis);
        let top = -e.cross(&b);
        let bot = e.cross(&a);
        Vec6::new(top[0], top[1], top[2], bot[0], bot[1], bot[2])
    }
}

#[inline]
fn axis_unit(axis: usize) -> Vec3 {
    let mut e = Vec3::zeros();
    e[axis] = 1.0;
    e
}

/// Matrix of the tangential trace `v -> v x nu` for a unit normal `nu`.
pub fn trace_matrix(nu: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, nu[2], -nu[1],
        -nu[2], 0.0, nu[0],
        nu[1], -nu[0], 0.0,
    )
}

/// Matrix of `w -> nu x w`.
pub fn normal_cross_matrix(nu: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, -nu[2], nu[1],
        nu[2], 0.0, -nu[0],
        -nu[1], nu[0], 0.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j3_rows_match_definition() {
        let m = constant_matrices();
        let expect = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(m.j[2][(r, c)], expect[r][c]);
            }
        }
    }

    #[test]
    fn j_matrices_are_antisymmetric_and_generate_cross_products() {
        let m = constant_matrices();
        for (axis, j) in m.j.iter().enumerate() {
            assert_eq!((j + j.transpose()).abs().max(), 0.0);
            let v = Vec3::new(0.3, -1.7, 2.5);
            let e = axis_unit(axis);
            assert_eq!((j * v - e.cross(&v)).abs().max(), 0.0);
        }
    }

    #[test]
    fn aco_blocks_are_symmetric() {
        let m = constant_matrices();
        for a in &m.aco {
            assert_eq!((a - a.transpose()).abs().max(), 0.0);
        }
    }

    #[test]
    fn b0co_equals_j3_entrywise() {
        let m = constant_matrices();
        assert_eq!((m.b0co - m.j[2]).abs().max(), 0.0);
    }

    #[test]
    fn apply_aco_matches_matrix_product() {
        let m = constant_matrices();
        let v = Vec6::new(1.0, -2.0, 0.5, 3.0, 0.25, -1.5);
        for axis in 0..3 {
            let direct = m.aco[axis] * v;
            let fast = m.apply_aco(axis, &v);
            assert_eq!((direct - fast).abs().max(), 0.0);
        }
    }

    #[test]
    fn trace_matrix_is_cross_with_nu() {
        let nu = Vec3::new(0.0, 0.0, -1.0);
        let b0 = trace_matrix(&nu);
        let v = Vec3::new(1.0, 2.0, 3.0);
        let expect = v.cross(&nu);
        assert_eq!((b0 * v - expect).abs().max(), 0.0);
        // At the flat face nu = -e3 the trace matrix is exactly J3.
        let m = constant_matrices();
        assert_eq!((b0 - m.j[2]).abs().max(), 0.0);
    }
}
