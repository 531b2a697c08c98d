//! Discrete norms: spatial `H^k`, time-weighted space-time norms, boundary
//! trace norms, and the `G^k` surrogate used by the fixed-point metric.
//!
//! Spatial derivatives reuse the solver stencils; time derivatives are
//! second-order finite differences (centered inside, one-sided at the ends).

use crate::error::{Error, Result};
use crate::field::{FaceField3, Field6};
use crate::grid::Grid;
use crate::ops::diff_field6;

/// Plain `L^2(G)` squared norm with the grid quadrature.
pub fn l2_norm_sq(grid: &Grid, u: &Field6) -> f64 {
    let mut acc = 0.0;
    for node in 0..grid.num_nodes() {
        let k3 = grid.node_coords(node)[2];
        let w = grid.weight(k3);
        for c in 0..6 {
            let v = u.data[node * 6 + c];
            acc += w * v * v;
        }
    }
    acc
}

/// Squared `H^k(G)` norm: sum over `|alpha| <= k` of the squared `L^2` norms
/// of the discrete derivatives. With `tangential_only` the third axis is
/// excluded (`alpha_3 = 0`).
pub fn h_norm_sq(grid: &Grid, u: &Field6, k: usize, tangential_only: bool) -> Result<f64> {
    if !grid.supports_order(k) {
        return Err(Error::KTooLargeForGrid { k, n: grid.n });
    }
    let mut total = l2_norm_sq(grid, u);
    // Level-by-level derivative cache. Each multi-index is materialized once:
    // a child may only increment axes up to the parent's first nonzero axis
    // (axis differences commute, so the application order is immaterial).
    let mut level: Vec<([usize; 3], Field6)> = vec![([0, 0, 0], u.clone())];
    for _ord in 1..=k {
        let mut next: Vec<([usize; 3], Field6)> = Vec::new();
        for (alpha, f) in &level {
            let max_axis = alpha.iter().position(|&v| v > 0).unwrap_or(2);
            for axis in 0..=max_axis {
                if tangential_only && axis == 2 {
                    continue;
                }
                let mut a = *alpha;
                a[axis] += 1;
                let df = diff_field6(grid, f, axis);
                total += l2_norm_sq(grid, &df);
                next.push((a, df));
            }
        }
        level = next;
    }
    Ok(total)
}

/// One second-order time-difference pass over a state sequence.
pub fn time_derivative(states: &[Field6], dt: f64) -> Vec<Field6> {
    let m = states.len();
    assert!(m >= 3, "need at least 3 time levels");
    let mut out = Vec::with_capacity(m);
    for n in 0..m {
        let f = if n == 0 {
            Field6 {
                n: states[0].n,
                data: states[0]
                    .data
                    .iter()
                    .zip(states[1].data.iter())
                    .zip(states[2].data.iter())
                    .map(|((a, b), c)| (-3.0 * a + 4.0 * b - c) / (2.0 * dt))
                    .collect(),
            }
        } else if n == m - 1 {
            Field6 {
                n: states[0].n,
                data: states[m - 1]
                    .data
                    .iter()
                    .zip(states[m - 2].data.iter())
                    .zip(states[m - 3].data.iter())
                    .map(|((a, b), c)| (3.0 * a - 4.0 * b + c) / (2.0 * dt))
                    .collect(),
            }
        } else {
            Field6 {
                n: states[0].n,
                data: states[n + 1]
                    .data
                    .iter()
                    .zip(states[n - 1].data.iter())
                    .map(|(a, b)| (a - b) / (2.0 * dt))
                    .collect(),
            }
        };
        out.push(f);
    }
    out
}

/// One-sided order-2 estimate of the `p`-th time derivative at the first
/// sample of a sequence, `p <= 3`.
pub fn fd_time_jet_at_start(states: &[Field6], dt: f64, p: usize) -> Field6 {
    let need = match p {
        0 => 1,
        1 => 3,
        2 => 4,
        3 => 5,
        _ => panic!("fd_time_jet_at_start supports p <= 3"),
    };
    assert!(states.len() >= need, "need {need} time levels for p={p}");
    let coeffs: &[f64] = match p {
        0 => &[1.0],
        1 => &[-1.5, 2.0, -0.5],
        2 => &[2.0, -5.0, 4.0, -1.0],
        3 => &[-2.5, 9.0, -12.0, 7.0, -1.5],
        _ => unreachable!(),
    };
    let scale = dt.powi(p as i32);
    let mut out = Field6 { n: states[0].n, data: vec![0.0; states[0].data.len()] };
    for (c, s) in coeffs.iter().zip(states.iter()) {
        for (o, v) in out.data.iter_mut().zip(s.data.iter()) {
            *o += c * v / scale;
        }
    }
    out
}

/// Squared time-weighted space-time norm
/// `sum_{|alpha| <= k} int_J e^{-2 gamma (t - t0)} |D^alpha u|^2`.
///
/// Time integration is trapezoidal over the stored steps.
pub fn spacetime_h_gamma_sq(
    grid: &Grid,
    states: &[Field6],
    dt: f64,
    k: usize,
    gamma: f64,
    tangential_only: bool,
) -> Result<f64> {
    if k >= 1 && states.len() < 3 {
        return Err(Error::ShapeMismatch("need >= 3 time levels for time derivatives".into()));
    }
    let mut total = 0.0;
    // Time-derivative stacks up to order k.
    let mut stack: Vec<Vec<Field6>> = vec![states.to_vec()];
    for _ in 1..=k {
        let prev = stack.last().unwrap();
        stack.push(time_derivative(prev, dt));
    }
    for (t_ord, seq) in stack.iter().enumerate() {
        let k_sp = k - t_ord;
        for (n, f) in seq.iter().enumerate() {
            let w_time = trapezoid_weight(n, seq.len()) * dt;
            let damp = (-2.0 * gamma * (n as f64) * dt).exp();
            total += w_time * damp * h_norm_sq(grid, f, k_sp, tangential_only)?;
        }
    }
    Ok(total)
}

/// `G^k` surrogate of a trajectory:
/// `max_{j <= k} sup_n || d_t^j u(t_n) ||_{H^{k-j}}`.
pub fn g_surrogate(grid: &Grid, states: &[Field6], dt: f64, k: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut seq = states.to_vec();
    for j in 0..=k {
        if j > 0 {
            if seq.len() < 3 {
                return Err(Error::ShapeMismatch("need >= 3 time levels".into()));
            }
            seq = time_derivative(&seq, dt);
        }
        for f in &seq {
            worst = worst.max(h_norm_sq(grid, f, k - j, false)?.sqrt());
        }
    }
    Ok(worst)
}

/// Squared `H^k` norm over the lateral boundary `J x Sigma` of a trace
/// sequence, with time weight `e^{-2 gamma (t - t0)}`.
pub fn face_spacetime_h_gamma_sq(
    grid: &Grid,
    faces: &[FaceField3],
    dt: f64,
    k: usize,
    gamma: f64,
) -> f64 {
    let mut total = 0.0;
    let mut stack: Vec<Vec<FaceField3>> = vec![faces.to_vec()];
    for _ in 1..=k {
        let prev = stack.last().unwrap();
        stack.push(face_time_derivative(prev, dt));
    }
    for (t_ord, seq) in stack.iter().enumerate() {
        let k_sp = k - t_ord;
        for (n, f) in seq.iter().enumerate() {
            let w_time = trapezoid_weight(n, seq.len()) * dt;
            let damp = (-2.0 * gamma * (n as f64) * dt).exp();
            total += w_time * damp * face_h_norm_sq(grid, f, k_sp);
        }
    }
    total
}

/// Squared tangential `H^k` norm of a face field (both axes periodic).
pub fn face_h_norm_sq(grid: &Grid, f: &FaceField3, k: usize) -> f64 {
    let mut total = face_l2_sq(grid, f);
    let mut level: Vec<([usize; 2], FaceField3)> = vec![([0, 0], f.clone())];
    for _ord in 1..=k {
        let mut next = Vec::new();
        for (alpha, g) in &level {
            let max_axis = alpha.iter().position(|&v| v > 0).unwrap_or(1);
            for axis in 0..=max_axis {
                let mut a = *alpha;
                a[axis] += 1;
                let dg = face_diff(grid, g, axis);
                total += face_l2_sq(grid, &dg);
                next.push((a, dg));
            }
        }
        level = next;
    }
    total
}

pub fn face_l2_sq(grid: &Grid, f: &FaceField3) -> f64 {
    let w = grid.face_weight();
    f.data.iter().map(|x| w * x * x).sum()
}

/// Centered periodic difference of a face field along a tangential axis.
pub fn face_diff(grid: &Grid, f: &FaceField3, axis: usize) -> FaceField3 {
    let [n0, n1] = f.n;
    let dx = grid.dx(axis);
    let mut out = FaceField3 { n: f.n, data: vec![0.0; f.data.len()] };
    for j in 0..n1 {
        for i in 0..n0 {
            let (ip, im) = match axis {
                0 => (((i + 1) % n0, j), ((i + n0 - 1) % n0, j)),
                _ => ((i, (j + 1) % n1), (i, (j + n1 - 1) % n1)),
            };
            let node = j * n0 + i;
            let plus = ip.1 * n0 + ip.0;
            let minus = im.1 * n0 + im.0;
            for c in 0..3 {
                out.data[node * 3 + c] =
                    (f.data[plus * 3 + c] - f.data[minus * 3 + c]) / (2.0 * dx);
            }
        }
    }
    out
}

fn face_time_derivative(faces: &[FaceField3], dt: f64) -> Vec<FaceField3> {
    let m = faces.len();
    assert!(m >= 3);
    (0..m)
        .map(|n| {
            let comb = |a: &FaceField3, ca: f64, b: &FaceField3, cb: f64, c: &FaceField3, cc: f64| {
                FaceField3 {
                    n: a.n,
                    data: a
                        .data
                        .iter()
                        .zip(b.data.iter())
                        .zip(c.data.iter())
                        .map(|((x, y), z)| (ca * x + cb * y + cc * z) / (2.0 * dt))
                        .collect(),
                }
            };
            if n == 0 {
                comb(&faces[0], -3.0, &faces[1], 4.0, &faces[2], -1.0)
            } else if n == m - 1 {
                comb(&faces[m - 1], 3.0, &faces[m - 2], -4.0, &faces[m - 3], 1.0)
            } else {
                comb(&faces[n + 1], 1.0, &faces[n - 1], -1.0, &faces[n], 0.0)
            }
        })
        .collect()
}

#[inline]
pub fn trapezoid_weight(n: usize, len: usize) -> f64 {
    if len <= 1 {
        1.0
    } else if n == 0 || n == len - 1 {
        0.5
    } else {
        1.0
    }
}
