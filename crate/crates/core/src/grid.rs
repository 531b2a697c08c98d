//! Structured grid over the truncated half-space box `[0,L]^2 x [0,H]`.
//!
//! The box is periodic in the two tangential directions. The third direction
//! carries the impedance face at `x3 = 0` (outward normal `-e3`) and the far
//! truncation face at `x3 = H` (outward normal `+e3`). A fully periodic
//! variant is available for free-space tests with the boundary disabled.

use crate::alg::Vec3;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Boundary faces of the truncated box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Face {
    /// Impedance face `x3 = 0`, the physical boundary; `nu = -e3`.
    Bottom,
    /// Far truncation face `x3 = H`; `nu = +e3`.
    Top,
}

impl Face {
    pub const ALL: [Face; 2] = [Face::Bottom, Face::Top];

    /// Outward unit normal of the face.
    pub fn normal(self) -> Vec3 {
        match self {
            Face::Bottom => Vec3::new(0.0, 0.0, -1.0),
            Face::Top => Vec3::new(0.0, 0.0, 1.0),
        }
    }
}

/// Uniform rectangular grid, tangentially periodic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Nodes per axis. Periodic axes have `n` distinct nodes over one period.
    pub n: [usize; 3],
    /// Physical extents `(L, L, H)`.
    pub len: [f64; 3],
    /// When true the third axis is periodic too and no boundary faces exist.
    pub periodic3: bool,
}

impl Grid {
    /// Grid on `[0,l]^2 x [0,h]` with impedance/far faces.
    pub fn boxed(l: f64, h: f64, n: [usize; 3]) -> Result<Self> {
        let g = Grid { n, len: [l, l, h], periodic3: false };
        g.validate()?;
        Ok(g)
    }

    /// Fully periodic box, used for free-space scenarios.
    pub fn periodic(l: f64, h: f64, n: [usize; 3]) -> Result<Self> {
        let g = Grid { n, len: [l, l, h], periodic3: true };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.n.iter().any(|&k| k < 4) {
            return Err(Error::GridTooSmall { need: 4, got: self.n });
        }
        Ok(())
    }

    /// Spacing along an axis.
    #[inline]
    pub fn dx(&self, axis: usize) -> f64 {
        if axis < 2 || self.periodic3 {
            self.len[axis] / self.n[axis] as f64
        } else {
            self.len[2] / (self.n[2] - 1) as f64
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n[1] + j) * self.n[0] + i
    }

    /// Inverse of [`node_index`](Self::node_index).
    #[inline]
    pub fn node_coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let j = (idx / self.n[0]) % self.n[1];
        let k = idx / (self.n[0] * self.n[1]);
        [i, j, k]
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            i as f64 * self.dx(0),
            j as f64 * self.dx(1),
            k as f64 * self.dx(2),
        ]
    }

    /// Quadrature weight of a node (trapezoid in `x3`, uniform tangentially).
    #[inline]
    pub fn weight(&self, k3: usize) -> f64 {
        let wt = self.dx(0) * self.dx(1);
        if self.periodic3 {
            wt * self.dx(2)
        } else if k3 == 0 || k3 == self.n[2] - 1 {
            wt * 0.5 * self.dx(2)
        } else {
            wt * self.dx(2)
        }
    }

    /// Tangential face-cell area (per boundary node).
    #[inline]
    pub fn face_weight(&self) -> f64 {
        self.dx(0) * self.dx(1)
    }

    /// Total area of one boundary face.
    pub fn face_area(&self) -> f64 {
        self.len[0] * self.len[1]
    }

    /// Number of nodes on one boundary face.
    #[inline]
    pub fn face_nodes(&self) -> usize {
        self.n[0] * self.n[1]
    }

    /// Index of the `x3` layer carrying a face.
    #[inline]
    pub fn face_layer(&self, face: Face) -> usize {
        match face {
            Face::Bottom => 0,
            Face::Top => self.n[2] - 1,
        }
    }

    /// Volume node index of a boundary node.
    #[inline]
    pub fn face_node_index(&self, face: Face, i: usize, j: usize) -> usize {
        self.node_index(i, j, self.face_layer(face))
    }

    /// True if the grid can host central stencils plus one-sided closures.
    pub fn supports_order(&self, derivative_order: usize) -> bool {
        self.n.iter().all(|&k| k >= derivative_order + 3)
    }
}

/// Second-order difference stencil data for one axis.
///
/// Periodic axes use the centered stencil with wraparound; the non-periodic
/// axis uses centered stencils in the interior and one-sided second-order
/// stencils on the two face layers.
#[derive(Debug, Clone, Copy)]
pub struct AxisDiff {
    pub axis: usize,
    pub periodic: bool,
    pub n: usize,
    pub inv_2dx: f64,
}

impl AxisDiff {
    pub fn new(grid: &Grid, axis: usize) -> Self {
        AxisDiff {
            axis,
            periodic: axis < 2 || grid.periodic3,
            n: grid.n[axis],
            inv_2dx: 1.0 / (2.0 * grid.dx(axis)),
        }
    }

    /// Stencil for line position `p`: offsets (in line index) and weights,
    /// already scaled by `1/dx`.
    #[inline]
    pub fn stencil(&self, p: usize) -> ([isize; 3], [f64; 3]) {
        let s = self.inv_2dx;
        if self.periodic {
            ([-1, 0, 1], [-s, 0.0, s])
        } else if p == 0 {
            ([0, 1, 2], [-3.0 * s, 4.0 * s, -s])
        } else if p == self.n - 1 {
            ([0, -1, -2], [3.0 * s, -4.0 * s, s])
        } else {
            ([-1, 0, 1], [-s, 0.0, s])
        }
    }

    /// Wraps a line index for periodic axes.
    #[inline]
    pub fn wrap(&self, p: isize) -> usize {
        if self.periodic {
            p.rem_euclid(self.n as isize) as usize
        } else {
            debug_assert!(p >= 0 && (p as usize) < self.n);
            p as usize
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_volume() {
        let g = Grid::boxed(1.0, 0.5, [8, 8, 9]).unwrap();
        let mut total = 0.0;
        for k in 0..g.n[2] {
            total += g.weight(k) * (g.n[0] * g.n[1]) as f64;
        }
        assert!((total - 1.0 * 1.0 * 0.5).abs() < 1e-13);
    }

    #[test]
    fn periodic_weights_sum_to_volume() {
        let g = Grid::periodic(2.0, 1.0, [6, 6, 6]).unwrap();
        let total: f64 = (0..g.n[2]).map(|k| g.weight(k) * 36.0).sum();
        assert!((total - 4.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid::boxed(1.0, 1.0, [3, 8, 8]).is_err());
    }

    #[test]
    fn node_index_roundtrip() {
        let g = Grid::boxed(1.0, 1.0, [5, 6, 7]).unwrap();
        for idx in [0, 17, 59, g.num_nodes() - 1] {
            let [i, j, k] = g.node_coords(idx);
            assert_eq!(g.node_index(i, j, k), idx);
        }
    }
}
