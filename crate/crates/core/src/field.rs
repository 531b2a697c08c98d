//! Grid-sampled fields: the electromagnetic state and its boundary traces.

use crate::alg::{Vec3, Vec6};
use crate::error::{Error, Result};
use crate::grid::{Face, Grid};

/// A 6-vector field `u = (E, H)` sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field6 {
    pub n: [usize; 3],
    pub data: Vec<f64>,
}

impl Field6 {
    pub fn zeros(grid: &Grid) -> Self {
        Field6 { n: grid.n, data: vec![0.0; grid.num_nodes() * 6] }
    }

    /// Samples an analytic 6-vector function at the grid nodes.
    pub fn sample(grid: &Grid, f: impl Fn([f64; 3]) -> [f64; 6]) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..grid.n[2] {
            for j in 0..grid.n[1] {
                for i in 0..grid.n[0] {
                    let v = f(grid.position(i, j, k));
                    out.set(grid.node_index(i, j, k), &Vec6::from_column_slice(&v));
                }
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, node: usize) -> Vec6 {
        Vec6::from_column_slice(&self.data[node * 6..node * 6 + 6])
    }

    #[inline]
    pub fn set(&mut self, node: usize, v: &Vec6) {
        self.data[node * 6..node * 6 + 6].copy_from_slice(v.as_slice());
    }

    #[inline]
    pub fn electric(&self, node: usize) -> Vec3 {
        Vec3::new(self.data[node * 6], self.data[node * 6 + 1], self.data[node * 6 + 2])
    }

    #[inline]
    pub fn magnetic(&self, node: usize) -> Vec3 {
        Vec3::new(self.data[node * 6 + 3], self.data[node * 6 + 4], self.data[node * 6 + 5])
    }

    pub fn num_nodes(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn check_conforms(&self, grid: &Grid) -> Result<()> {
        if self.n != grid.n {
            return Err(Error::ShapeMismatch(format!(
                "field extents {:?} do not match grid {:?}",
                self.n, grid.n
            )));
        }
        Ok(())
    }

    pub fn axpy(&mut self, alpha: f64, other: &Field6) {
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn linear_combination(a: f64, x: &Field6, b: f64, y: &Field6) -> Field6 {
        let data = x
            .data
            .iter()
            .zip(y.data.iter())
            .map(|(&p, &q)| a * p + b * q)
            .collect();
        Field6 { n: x.n, data }
    }

    /// Restriction to a boundary face.
    pub fn restrict_to_face(&self, grid: &Grid, face: Face) -> FaceField6 {
        let mut data = Vec::with_capacity(grid.face_nodes() * 6);
        let layer = grid.face_layer(face);
        for j in 0..grid.n[1] {
            for i in 0..grid.n[0] {
                let node = grid.node_index(i, j, layer);
                data.extend_from_slice(&self.data[node * 6..node * 6 + 6]);
            }
        }
        FaceField6 { n: [grid.n[0], grid.n[1]], data }
    }
}

/// A 3-vector field on the full grid (e.g. one of the two Maxwell blocks).
#[derive(Debug, Clone, PartialEq)]
pub struct Field3 {
    pub n: [usize; 3],
    pub data: Vec<f64>,
}

impl Field3 {
    pub fn zeros(grid: &Grid) -> Self {
        Field3 { n: grid.n, data: vec![0.0; grid.num_nodes() * 3] }
    }

    pub fn sample(grid: &Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..grid.n[2] {
            for j in 0..grid.n[1] {
                for i in 0..grid.n[0] {
                    let v = f(grid.position(i, j, k));
                    let node = grid.node_index(i, j, k);
                    out.data[node * 3..node * 3 + 3].copy_from_slice(&v);
                }
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, node: usize) -> Vec3 {
        Vec3::new(self.data[node * 3], self.data[node * 3 + 1], self.data[node * 3 + 2])
    }

    #[inline]
    pub fn set(&mut self, node: usize, v: &Vec3) {
        self.data[node * 3..node * 3 + 3].copy_from_slice(v.as_slice());
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
    }
}

/// A 6-vector field on one boundary face (2-d tangentially periodic grid).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField6 {
    pub n: [usize; 2],
    pub data: Vec<f64>,
}

impl FaceField6 {
    #[inline]
    pub fn get(&self, node: usize) -> Vec6 {
        Vec6::from_column_slice(&self.data[node * 6..node * 6 + 6])
    }
}

/// A 3-vector field on one boundary face (traces, boundary data).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField3 {
    pub n: [usize; 2],
    pub data: Vec<f64>,
}

impl FaceField3 {
    pub fn zeros(grid: &Grid) -> Self {
        FaceField3 { n: [grid.n[0], grid.n[1]], data: vec![0.0; grid.face_nodes() * 3] }
    }

    /// Samples an analytic function of the tangential position.
    pub fn sample(grid: &Grid, face: Face, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        let layer = grid.face_layer(face);
        for j in 0..grid.n[1] {
            for i in 0..grid.n[0] {
                let v = f(grid.position(i, j, layer));
                let node = j * grid.n[0] + i;
                out.data[node * 3..node * 3 + 3].copy_from_slice(&v);
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, node: usize) -> Vec3 {
        Vec3::new(self.data[node * 3], self.data[node * 3 + 1], self.data[node * 3 + 2])
    }

    #[inline]
    pub fn set(&mut self, node: usize, v: &Vec3) {
        self.data[node * 3..node * 3 + 3].copy_from_slice(v.as_slice());
    }

    pub fn num_nodes(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
    }

    /// Discrete `L^2` norm over the face with uniform tangential weights.
    pub fn l2(&self, grid: &Grid) -> f64 {
        let w = grid.face_weight();
        (self.data.iter().map(|x| x * x).sum::<f64>() * w).sqrt()
    }
}
