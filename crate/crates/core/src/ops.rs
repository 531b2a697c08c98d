//! Difference, trace, and boundary operators on grid fields.

use crate::alg::{Mat3, Mat6, Vec3, Vec6};
use crate::error::{Error, Result};
use crate::field::{FaceField3, FaceField6, Field3, Field6};
use crate::grid::{AxisDiff, Face, Grid};
use crate::material::MaterialLaw;
use crate::matrices::ConstantMatrices;

/// Applies the second-order difference along `axis` to every component.
pub fn diff_field6(grid: &Grid, u: &Field6, axis: usize) -> Field6 {
    let mut out = Field6::zeros(grid);
    diff_field6_into(grid, u, axis, &mut out);
    out
}

/// In-place variant of [`diff_field6`] reusing an output buffer.
pub fn diff_field6_into(grid: &Grid, u: &Field6, axis: usize, out: &mut Field6) {
    let d = AxisDiff::new(grid, axis);
    let [n0, n1, n2] = grid.n;
    let stride = match axis {
        0 => 1isize,
        1 => n0 as isize,
        _ => (n0 * n1) as isize,
    };
    for k in 0..n2 {
        for j in 0..n1 {
            for i in 0..n0 {
                let p = [i, j, k][axis];
                let (offs, wts) = d.stencil(p);
                let node = grid.node_index(i, j, k) as isize;
                let base = node * 6;
                let mut acc = [0.0f64; 6];
                for (o, w) in offs.iter().zip(wts.iter()) {
                    if *w == 0.0 {
                        continue;
                    }
                    // Wrap the line index for periodic axes.
                    let q = d.wrap(p as isize + o) as isize - p as isize;
                    let src = (base + q * stride * 6) as usize;
                    for c in 0..6 {
                        acc[c] += w * u.data[src + c];
                    }
                }
                for c in 0..6 {
                    out.data[(base as usize) + c] = acc[c];
                }
            }
        }
    }
}

/// Difference of a 3-vector field along `axis`.
pub fn diff_field3(grid: &Grid, v: &Field3, axis: usize) -> Field3 {
    let d = AxisDiff::new(grid, axis);
    let [n0, n1, n2] = grid.n;
    let stride = match axis {
        0 => 1isize,
        1 => n0 as isize,
        _ => (n0 * n1) as isize,
    };
    let mut out = Field3 { n: v.n, data: vec![0.0; v.data.len()] };
    for k in 0..n2 {
        for j in 0..n1 {
            for i in 0..n0 {
                let p = [i, j, k][axis];
                let (offs, wts) = d.stencil(p);
                let node = ((k * n1 + j) * n0 + i) as isize;
                let base = node * 3;
                let mut acc = [0.0f64; 3];
                for (o, w) in offs.iter().zip(wts.iter()) {
                    if *w == 0.0 {
                        continue;
                    }
                    let q = d.wrap(p as isize + o) as isize - p as isize;
                    let src = (base + q * stride * 3) as usize;
                    for c in 0..3 {
                        acc[c] += w * v.data[src + c];
                    }
                }
                for c in 0..3 {
                    out.data[(base as usize) + c] = acc[c];
                }
            }
        }
    }
    out
}

/// Discrete curl: `sum_j J_j D_j v` with the module's difference stencils.
pub fn curl(grid: &Grid, v: &Field3) -> Result<Field3> {
    if !grid.supports_order(1) {
        return Err(Error::GridTooSmall { need: 4, got: grid.n });
    }
    let m = crate::matrices::constant_matrices();
    let mut out = Field3 { n: v.n, data: vec![0.0; v.data.len()] };
    for axis in 0..3 {
        let dv = diff_field3(grid, v, axis);
        for node in 0..grid.num_nodes() {
            let w = m.j[axis] * dv.get(node);
            let cur = out.get(node) + w;
            out.set(node, &cur);
        }
    }
    Ok(out)
}

/// The three boundary traces of a 3-vector at a boundary node.
#[derive(Debug, Clone, Copy)]
pub struct Traces {
    /// `v x nu`.
    pub tr_t: Vec3,
    /// `nu x (v x nu)`, the tangential component of `v`.
    pub tr_tau: Vec3,
    /// `v . nu`.
    pub tr_n: f64,
}

/// Computes the tangential, rotated-tangential and normal traces.
pub fn traces(v: &Vec3, nu: &Vec3) -> Traces {
    let tr_t = v.cross(nu);
    Traces { tr_t, tr_tau: nu.cross(&tr_t), tr_n: v.dot(nu) }
}

/// Outward normal and tangential projector at boundary nodes of a face.
#[derive(Debug, Clone)]
pub struct BoundaryFrame {
    pub nu: Vec3,
}

impl BoundaryFrame {
    pub fn flat(face: Face) -> Self {
        BoundaryFrame { nu: face.normal() }
    }

    /// Projector onto the tangent plane, `I - nu nu^T`.
    pub fn tangential_projector(&self) -> Mat3 {
        Mat3::identity() - self.nu * self.nu.transpose()
    }

    /// Tangential trace of the electric block of a 6-vector.
    #[inline]
    pub fn trace_t_electric(&self, u: &Vec6) -> Vec3 {
        Vec3::new(u[0], u[1], u[2]).cross(&self.nu)
    }

    /// Tangential trace of the magnetic block of a 6-vector.
    #[inline]
    pub fn trace_t_magnetic(&self, u: &Vec6) -> Vec3 {
        Vec3::new(u[3], u[4], u[5]).cross(&self.nu)
    }
}

/// Pointwise hyperbolic operator `A0 du/dt + sum_j Aco[j] D_j u + D u`.
///
/// `a0` and `d` are per-node coefficient matrices; `None` means the identity
/// (respectively zero). `jet` carries `(u, du/dt)` on the same grid.
pub fn apply_hyperbolic_operator(
    grid: &Grid,
    a0: Option<&[Mat6]>,
    d: Option<&[Mat6]>,
    jet: (&Field6, &Field6),
) -> Result<Field6> {
    let (u, ut) = jet;
    u.check_conforms(grid)?;
    ut.check_conforms(grid)?;
    let nn = grid.num_nodes();
    if let Some(a) = a0 {
        if a.len() != nn {
            return Err(Error::ShapeMismatch("A0 coefficient grid".into()));
        }
    }
    if let Some(dm) = d {
        if dm.len() != nn {
            return Err(Error::ShapeMismatch("D coefficient grid".into()));
        }
    }
    let m = crate::matrices::constant_matrices();
    let mut out = Field6::zeros(grid);
    for node in 0..nn {
        let mut acc = match a0 {
            Some(a) => a[node] * ut.get(node),
            None => ut.get(node),
        };
        if let Some(dm) = d {
            acc += dm[node] * u.get(node);
        }
        out.set(node, &acc);
    }
    for axis in 0..3 {
        let du = diff_field6(grid, u, axis);
        for node in 0..nn {
            let cur = out.get(node) + m.apply_aco(axis, &du.get(node));
            out.set(node, &cur);
        }
    }
    Ok(out)
}

/// Boundary conductivity used by [`apply_boundary_operator`].
pub enum BoundaryCoefficient<'a> {
    /// Linear operator with a fixed symmetric tangential matrix per node.
    Matrix(&'a [Mat3]),
    /// Linear operator with one matrix for the whole face.
    Uniform(Mat3),
    /// State-dependent conductivity `zeta` from a material law.
    Law(&'a MaterialLaw),
}

/// Applies `B(u) u = tr_t u^2 - nu x (zeta(tr_t u^1) tr_t u^1)` on a face.
///
/// For the linear variants the conductivity is evaluated as given instead of
/// through `zeta`. The output is tangential by construction.
pub fn apply_boundary_operator(
    grid: &Grid,
    face: Face,
    coeff: &BoundaryCoefficient,
    u_face: &FaceField6,
) -> Result<FaceField3> {
    let frame = BoundaryFrame::flat(face);
    let layer = grid.face_layer(face);
    let mut out = FaceField3::zeros(grid);
    for j in 0..grid.n[1] {
        for i in 0..grid.n[0] {
            let fnode = j * grid.n[0] + i;
            let u = u_face.get(fnode);
            let xi = frame.trace_t_electric(&u);
            let b_xi = match coeff {
                BoundaryCoefficient::Matrix(mats) => mats[fnode] * xi,
                BoundaryCoefficient::Uniform(m) => m * xi,
                BoundaryCoefficient::Law(law) => {
                    let x = grid.position(i, j, layer);
                    if law.trace_domain_distance(&xi) <= 0.0 {
                        return Err(Error::ZetaDomainViolation { t: f64::NAN });
                    }
                    law.zeta(&x, &xi) * xi
                }
            };
            let val = frame.trace_t_magnetic(&u) - frame.nu.cross(&b_xi);
            out.set(fnode, &val);
        }
    }
    Ok(out)
}

pub use crate::matrices::constant_matrices;

#[allow(unused_imports)]
use crate::matrices as _matrices_doc;

/// Convenience: builds per-node identity coefficients.
pub fn uniform_coefficients(grid: &Grid, m: Mat6) -> Vec<Mat6> {
    vec![m; grid.num_nodes()]
}

#[allow(dead_code)]
fn unused(_: &ConstantMatrices) {}
