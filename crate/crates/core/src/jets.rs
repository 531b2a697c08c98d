//! Time-jet machinery: solution jets of the linear and quasilinear systems,
//! coefficient jets by truncated-Taylor composition, and the compatibility
//! conditions coupling them to the boundary data.
//!
//! Coefficient jets (`d_t^k chi(u(t))` and friends) are never assembled from
//! explicit chain-rule constants; they fall out of evaluating the material
//! law on truncated Taylor scalars, which is mathematically the same sum and
//! self-validating against finite differences.

use crate::alg::{Mat3, Mat6, Vec3};
use crate::error::{Error, Result};
use crate::field::{FaceField3, Field6};
use crate::grid::{Face, Grid};
use crate::material::{MaterialLaw, Taylor};
use crate::matrices::constant_matrices;
use crate::ops::{diff_field6, BoundaryFrame};
use serde::Serialize;
use std::io::{BufRead, Write};

/// Jet of time derivatives `(u, d_t u, ..., d_t^{m-1} u)` at a fixed time.
#[derive(Debug, Clone)]
pub struct TimeJet {
    pub base_time: f64,
    /// `entries[p]` holds `d_t^p u(t0)`; the length is the jet order `m`.
    pub entries: Vec<Field6>,
}

impl TimeJet {
    pub fn order(&self) -> usize {
        self.entries.len()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(Field6::is_finite)
    }
}

/// Jet of a matrix-valued coefficient: `entries[k][node]` is the `k`-th time
/// derivative at the jet's base time.
#[derive(Debug, Clone)]
pub struct CoefficientJet<M> {
    pub entries: Vec<Vec<M>>,
}

impl<M> CoefficientJet<M> {
    pub fn orders(&self) -> usize {
        self.entries.len()
    }
}

/// Interior law component selector for [`compose_interior_jet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteriorComponent {
    Chi,
    Sigma,
}

/// Jets of `chi(u(t))` or `sigma(u(t))` given the state jet, per grid node.
///
/// `orders` output entries are produced (`k = 0..orders-1`); state jet
/// entries beyond what is provided are treated as zero, which does not affect
/// the returned orders.
pub fn compose_interior_jet(
    law: &MaterialLaw,
    component: InteriorComponent,
    grid: &Grid,
    state_entries: &[Field6],
    orders: usize,
) -> Result<CoefficientJet<Mat6>> {
    if orders == 0 {
        return Ok(CoefficientJet { entries: vec![] });
    }
    if orders - 1 > law.max_derivative_order() {
        return Err(Error::OrderExceedsDerivativeData {
            requested: orders - 1,
            available: law.max_derivative_order(),
        });
    }
    let nn = grid.num_nodes();
    let mut entries = vec![vec![Mat6::zeros(); nn]; orders];
    for node in 0..nn {
        let [i, j, k3] = grid.node_coords(node);
        let x = grid.position(i, j, k3);
        let u0 = state_entries[0].get(node);
        if !law.domain.contains(&u0) {
            return Err(Error::DomainExit {
                t: f64::NAN,
                node: [i, j, k3],
                dist: law.domain.distance(&u0),
            });
        }
        let u: [Taylor; 6] = std::array::from_fn(|c| {
            let derivs: Vec<f64> = state_entries.iter().map(|e| e.data[node * 6 + c]).collect();
            Taylor::from_derivatives(&derivs)
        });
        let m = match component {
            InteriorComponent::Chi => law.chi_generic::<Taylor>(&x, &u),
            InteriorComponent::Sigma => law.sigma_generic::<Taylor>(&x, &u),
        };
        for k in 0..orders {
            entries[k][node] = Mat6::from_fn(|r, c| m[r][c].derivative(k));
        }
    }
    Ok(CoefficientJet { entries })
}

/// Jets of `zeta(tr_t u^1(t))` on a boundary face given the trace jet
/// (`trace_entries[k]` = `d_t^k tr_t u^1` per face node).
pub fn compose_boundary_jet(
    law: &MaterialLaw,
    grid: &Grid,
    face: Face,
    trace_entries: &[FaceField3],
    orders: usize,
) -> Result<CoefficientJet<Mat3>> {
    if orders == 0 {
        return Ok(CoefficientJet { entries: vec![] });
    }
    if orders - 1 > law.max_derivative_order() {
        return Err(Error::OrderExceedsDerivativeData {
            requested: orders - 1,
            available: law.max_derivative_order(),
        });
    }
    let fnodes = grid.face_nodes();
    let layer = grid.face_layer(face);
    let mut entries = vec![vec![Mat3::zeros(); fnodes]; orders];
    for fnode in 0..fnodes {
        let i = fnode % grid.n[0];
        let j = fnode / grid.n[0];
        let x = grid.position(i, j, layer);
        let xi0 = trace_entries[0].get(fnode);
        if law.trace_domain_distance(&xi0) <= 0.0 {
            return Err(Error::ZetaDomainViolation { t: f64::NAN });
        }
        let xi: [Taylor; 3] = std::array::from_fn(|c| {
            let derivs: Vec<f64> =
                trace_entries.iter().map(|e| e.data[fnode * 3 + c]).collect();
            Taylor::from_derivatives(&derivs)
        });
        let m = law.zeta_generic::<Taylor>(&x, &xi);
        for k in 0..orders {
            entries[k][fnode] = Mat3::from_fn(|r, c| m[r][c].derivative(k));
        }
    }
    Ok(CoefficientJet { entries })
}

fn binom(n: usize, k: usize) -> f64 {
    let mut v = 1.0f64;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// One step of the shared jet recursion: computes `d_t^p u(t0)` from the
/// lower-order entries, the coefficient jets, and the forcing jets.
///
/// Missing forcing jets are treated as zero.
fn jet_recursion_step(
    grid: &Grid,
    p: usize,
    a0_inv: &[Mat6],
    a0_jet: &[Vec<Mat6>],
    d_jet: &[Vec<Mat6>],
    prev: &[Field6],
    f_jets: &[Field6],
) -> Field6 {
    let nn = grid.num_nodes();
    let m = constant_matrices();
    let mut rhs = match f_jets.get(p - 1) {
        Some(f) => f.clone(),
        None => Field6::zeros_like(&prev[0]),
    };
    for axis in 0..3 {
        let dp = diff_field6(grid, &prev[p - 1], axis);
        for node in 0..nn {
            let cur = rhs.get(node) - m.apply_aco(axis, &dp.get(node));
            rhs.set(node, &cur);
        }
    }
    for l in 1..p {
        if l >= a0_jet.len() {
            break;
        }
        let c = binom(p - 1, l);
        for node in 0..nn {
            let cur = rhs.get(node) - c * (a0_jet[l][node] * prev[p - l].get(node));
            rhs.set(node, &cur);
        }
    }
    for l in 0..p {
        if l >= d_jet.len() {
            break;
        }
        let c = binom(p - 1, l);
        for node in 0..nn {
            let cur = rhs.get(node) - c * (d_jet[l][node] * prev[p - 1 - l].get(node));
            rhs.set(node, &cur);
        }
    }
    let mut out = Field6::zeros_like(&prev[0]);
    for node in 0..nn {
        out.set(node, &(a0_inv[node] * rhs.get(node)));
    }
    out
}

/// Solution jet of the linear system: entry `p` reproduces `d_t^p v(t0)` of
/// any sufficiently regular solution, built with the discrete difference
/// operators.
///
/// `a0_jet.entries[l]` is `d_t^l A0(t0)` per node (entry 0 must be present),
/// `d_jet` likewise for `D`, and `f_jets[j] = d_t^j f(t0)`.
pub fn linear_solution_jet(
    grid: &Grid,
    m: usize,
    t0: f64,
    a0_jet: &CoefficientJet<Mat6>,
    d_jet: &CoefficientJet<Mat6>,
    u0: &Field6,
    f_jets: &[Field6],
) -> Result<TimeJet> {
    assert!(m >= 1);
    u0.check_conforms(grid)?;
    let a0_inv = invert_per_node(grid, &a0_jet.entries[0], false)?;
    let mut entries = vec![u0.clone()];
    for p in 1..m {
        let next = jet_recursion_step(
            grid,
            p,
            &a0_inv,
            &a0_jet.entries,
            &d_jet.entries,
            &entries,
            f_jets,
        );
        entries.push(next);
    }
    Ok(TimeJet { base_time: t0, entries })
}

/// Solution jet of the quasilinear system. The coefficient jets of
/// `chi(u(t))` and `sigma(u(t))` are recomputed from the partial state jet at
/// every order, so for a linear law this reduces exactly (bitwise) to
/// [`linear_solution_jet`] with constant coefficients.
pub fn nonlinear_solution_jet(
    grid: &Grid,
    m: usize,
    t0: f64,
    law: &MaterialLaw,
    u0: &Field6,
    f_jets: &[Field6],
) -> Result<TimeJet> {
    assert!(m >= 1);
    u0.check_conforms(grid)?;
    let chi0 = compose_interior_jet(law, InteriorComponent::Chi, grid, std::slice::from_ref(u0), 1)?;
    let a0_inv = invert_per_node(grid, &chi0.entries[0], true)?;
    let mut entries = vec![u0.clone()];
    for p in 1..m {
        let chi_jet = compose_interior_jet(law, InteriorComponent::Chi, grid, &entries, p)?;
        let sigma_jet = compose_interior_jet(law, InteriorComponent::Sigma, grid, &entries, p)?;
        let next = jet_recursion_step(
            grid,
            p,
            &a0_inv,
            &chi_jet.entries,
            &sigma_jet.entries,
            &entries,
            f_jets,
        );
        entries.push(next);
    }
    Ok(TimeJet { base_time: t0, entries })
}

fn invert_per_node(grid: &Grid, mats: &[Mat6], chi: bool) -> Result<Vec<Mat6>> {
    let mut out = Vec::with_capacity(mats.len());
    for (node, a) in mats.iter().enumerate() {
        match a.try_inverse() {
            Some(inv) => out.push(inv),
            None => {
                let node3 = grid.node_coords(node);
                return Err(if chi {
                    Error::SingularChi { node: node3 }
                } else {
                    Error::SingularA0 { node: node3 }
                });
            }
        }
    }
    Ok(out)
}

/// Per-order residuals of the compatibility conditions.
#[derive(Debug, Clone, Serialize)]
pub struct CompatReport {
    /// Jet order `m` that was checked (residuals for `p = 0..m-1`).
    pub order: usize,
    /// Discrete `L^2(Sigma)` residual per order.
    pub residuals: Vec<f64>,
    /// Tolerance applied per order (already scaled by the data size).
    pub tolerances: Vec<f64>,
    pub pass: bool,
}

/// Tolerance model for compatibility checks.
#[derive(Debug, Clone, Copy)]
pub enum CompatTolerance {
    /// Relative tolerance for analytically compatible data.
    Analytic { rtol: f64 },
    /// Tolerance scaled by the grid resolution for discretized data.
    Discretized { dx: f64, factor: f64 },
}

impl Default for CompatTolerance {
    fn default() -> Self {
        CompatTolerance::Analytic { rtol: 1e-8 }
    }
}

impl CompatTolerance {
    fn value(&self, data_scale: f64) -> f64 {
        match self {
            CompatTolerance::Analytic { rtol } => rtol * (1.0 + data_scale),
            CompatTolerance::Discretized { dx, factor } => factor * dx * dx * (1.0 + data_scale),
        }
    }
}

/// Compatibility check of the linear system on the impedance face:
/// `B(t0) S_p = d_t^p g(t0) + nu x sum_{k=1}^p C(p,k) d_t^k b(t0) B1 S_{p-k}`.
pub fn check_compatibility_linear(
    grid: &Grid,
    face: Face,
    jet: &TimeJet,
    b_jet: &CoefficientJet<Mat3>,
    g_jets: &[FaceField3],
    tol: CompatTolerance,
) -> CompatReport {
    let traces = trace_jets(grid, face, jet);
    let b_of = |k: usize, fnode: usize| -> Mat3 {
        b_jet.entries.get(k).map(|e| e[fnode]).unwrap_or_else(Mat3::zeros)
    };
    compat_residuals(grid, face, jet, &traces, g_jets, &b_of, tol)
}

/// Compatibility check of the quasilinear system: the boundary coefficient
/// jets are the truncated-Taylor jets of `zeta(tr_t u^1(t))` along the
/// solution jet itself.
pub fn check_compatibility_nonlinear(
    grid: &Grid,
    face: Face,
    law: &MaterialLaw,
    jet: &TimeJet,
    g_jets: &[FaceField3],
    tol: CompatTolerance,
) -> Result<CompatReport> {
    let traces = trace_jets(grid, face, jet);
    let zeta_jet = compose_boundary_jet(law, grid, face, &traces, jet.order())?;
    let b_of = |k: usize, fnode: usize| -> Mat3 {
        zeta_jet.entries.get(k).map(|e| e[fnode]).unwrap_or_else(Mat3::zeros)
    };
    Ok(compat_residuals(grid, face, jet, &traces, g_jets, &b_of, tol))
}

/// Tangential trace jets `d_t^k tr_t u^1` on a face, from a solution jet.
pub fn trace_jets(grid: &Grid, face: Face, jet: &TimeJet) -> Vec<FaceField3> {
    let frame = BoundaryFrame::flat(face);
    jet.entries
        .iter()
        .map(|entry| {
            let uf = entry.restrict_to_face(grid, face);
            let mut out = FaceField3::zeros(grid);
            for fnode in 0..grid.face_nodes() {
                out.set(fnode, &frame.trace_t_electric(&uf.get(fnode)));
            }
            out
        })
        .collect()
}

fn compat_residuals(
    grid: &Grid,
    face: Face,
    jet: &TimeJet,
    trace_jets_e: &[FaceField3],
    g_jets: &[FaceField3],
    b_of: &dyn Fn(usize, usize) -> Mat3,
    tol: CompatTolerance,
) -> CompatReport {
    let frame = BoundaryFrame::flat(face);
    let m = jet.order();
    let fnodes = grid.face_nodes();
    let w = grid.face_weight();

    // Magnetic traces per order.
    let trace_jets_h: Vec<FaceField3> = jet
        .entries
        .iter()
        .map(|entry| {
            let uf = entry.restrict_to_face(grid, face);
            let mut out = FaceField3::zeros(grid);
            for fnode in 0..fnodes {
                out.set(fnode, &frame.trace_t_magnetic(&uf.get(fnode)));
            }
            out
        })
        .collect();

    let mut data_scale = 0.0f64;
    for gj in g_jets {
        data_scale = data_scale.max(gj.max_abs());
    }
    data_scale = data_scale.max(jet.entries[0].max_abs());

    let mut residuals = Vec::with_capacity(m);
    let mut tolerances = Vec::with_capacity(m);
    let mut pass = true;
    for p in 0..m {
        let mut acc = 0.0f64;
        for fnode in 0..fnodes {
            // Left side: B at base time applied to the p-th jet entry.
            let lhs = trace_jets_h[p].get(fnode)
                - frame.nu.cross(&(b_of(0, fnode) * trace_jets_e[p].get(fnode)));
            // Right side: boundary data jet plus the lower-order coupling.
            let mut rhs = g_jets
                .get(p)
                .map(|g| g.get(fnode))
                .unwrap_or_else(Vec3::zeros);
            let mut sum = Vec3::zeros();
            for k in 1..=p {
                sum += binom(p, k) * (b_of(k, fnode) * trace_jets_e[p - k].get(fnode));
            }
            rhs += frame.nu.cross(&sum);
            let r = lhs - rhs;
            acc += w * r.norm_squared();
        }
        let r_p = acc.sqrt();
        let t_p = tol.value(data_scale);
        pass &= r_p <= t_p;
        residuals.push(r_p);
        tolerances.push(t_p);
    }
    CompatReport { order: m, residuals, tolerances, pass }
}

/// Writes a jet as a columnar text file: `order, node, v0..v5` per line.
pub fn write_jet_columnar(path: &std::path::Path, jet: &TimeJet) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# base_time {:.17e}", jet.base_time)?;
    for (p, entry) in jet.entries.iter().enumerate() {
        for node in 0..entry.num_nodes() {
            write!(f, "{p},{node}")?;
            for c in 0..6 {
                write!(f, ",{:.17e}", entry.data[node * 6 + c])?;
            }
            writeln!(f)?;
        }
    }
    Ok(())
}

/// Reads a columnar jet file written by [`write_jet_columnar`].
pub fn read_jet_columnar(path: &std::path::Path, grid: &Grid) -> Result<TimeJet> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut base_time = 0.0;
    let mut entries: Vec<Field6> = Vec::new();
    for line in f.lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# base_time ") {
            base_time = rest.trim().parse().map_err(|_| {
                Error::ConfigInvalid("malformed base_time header in jet file".into())
            })?;
            continue;
        }
        let mut it = line.split(',');
        let p: usize = parse_field(it.next())?;
        let node: usize = parse_field(it.next())?;
        while entries.len() <= p {
            entries.push(Field6::zeros(grid));
        }
        for c in 0..6 {
            let v: f64 = parse_field(it.next())?;
            entries[p].data[node * 6 + c] = v;
        }
    }
    Ok(TimeJet { base_time, entries })
}

fn parse_field<T: std::str::FromStr>(s: Option<&str>) -> Result<T> {
    s.and_then(|x| x.trim().parse().ok())
        .ok_or_else(|| Error::ConfigInvalid("malformed jet file".into()))
}

impl Field6 {
    fn zeros_like(other: &Field6) -> Field6 {
        Field6 { n: other.n, data: vec![0.0; other.data.len()] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alg::Vec6;
    use crate::material::registry;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn const_jet(grid: &Grid, mats: Vec<Mat6>) -> CoefficientJet<Mat6> {
        CoefficientJet {
            entries: mats.into_iter().map(|m| vec![m; grid.num_nodes()]).collect(),
        }
    }

    #[test]
    fn linear_component_jet_is_constant() {
        let g = Grid::boxed(1.0, 1.0, [4, 4, 4]).unwrap();
        let law = registry::linear_default();
        let u0 = Field6::sample(&g, |x| [x[0], 0.1, 0.0, 0.0, x[2], 0.0]);
        let u1 = Field6::sample(&g, |_| [0.3, -0.2, 0.0, 0.5, 0.0, 0.1]);
        let jet = compose_interior_jet(&law, InteriorComponent::Chi, &g, &[u0, u1], 3).unwrap();
        assert_eq!((jet.entries[0][7] - Mat6::identity()).abs().max(), 0.0);
        assert_eq!(jet.entries[1][7].abs().max(), 0.0);
        assert_eq!(jet.entries[2][7].abs().max(), 0.0);
    }

    #[test]
    fn scalar_square_chain_rule() {
        // c(u) = u^2 with jet (a, b): d/dt c = 2ab.
        let (a, b) = (1.7, -0.6);
        let t = Taylor::from_derivatives(&[a, b]);
        let sq = t.clone() * t;
        assert!((sq.derivative(1) - 2.0 * a * b).abs() < 1e-14);
    }

    /// Oracle: finite differences of `t -> chi(u0 + t u1 + t^2 u2 / 2)`.
    #[test]
    fn kerr_chi_jet_matches_finite_differences() {
        let g = Grid::boxed(1.0, 1.0, [4, 4, 4]).unwrap();
        let law = registry::kerr_default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rand_field = |scale: f64| {
            let vals: Vec<f64> = (0..g.num_nodes() * 6)
                .map(|_| rng.random_range(-scale..scale))
                .collect();
            Field6 { n: g.n, data: vals }
        };
        let u0 = rand_field(0.2);
        let u1 = rand_field(1.0);
        let u2 = rand_field(1.0);
        let jet =
            compose_interior_jet(&law, InteriorComponent::Chi, &g, &[u0.clone(), u1.clone(), u2.clone()], 3)
                .unwrap();
        // Check a handful of nodes at two FD steps; error must be O(h^2).
        let eval_chi = |node: usize, t: f64| -> Mat6 {
            let [i, j, k] = g.node_coords(node);
            let x = g.position(i, j, k);
            let u = u0.get(node) + t * u1.get(node) + 0.5 * t * t * u2.get(node);
            law.chi(&x, &u)
        };
        for node in [0usize, 13, 31] {
            for p in 1..=2usize {
                let errs: Vec<f64> = [1e-3, 5e-4]
                    .iter()
                    .map(|&h| {
                        let fd = match p {
                            1 => (eval_chi(node, h) - eval_chi(node, -h)) / (2.0 * h),
                            _ => {
                                (eval_chi(node, h) - 2.0 * eval_chi(node, 0.0)
                                    + eval_chi(node, -h))
                                    / (h * h)
                            }
                        };
                        (fd - jet.entries[p][node]).abs().max()
                    })
                    .collect();
                let rate = (errs[0] / errs[1]).log2();
                assert!(
                    rate > 1.6 || errs[0] < 1e-11,
                    "node {node} order {p}: errors {errs:?}"
                );
            }
        }
    }

    #[test]
    fn linear_jet_order_zero_is_initial_value() {
        let g = Grid::boxed(1.0, 1.0, [4, 4, 4]).unwrap();
        let u0 = Field6::sample(&g, |x| [x[0] * x[1], 0.0, 1.0, x[2], 0.0, -1.0]);
        let a0 = const_jet(&g, vec![Mat6::identity()]);
        let d = const_jet(&g, vec![Mat6::zeros()]);
        let jet = linear_solution_jet(&g, 3, 0.0, &a0, &d, &u0, &[]).unwrap();
        assert_eq!(jet.entries[0].data, u0.data);
    }

    #[test]
    fn linear_jet_hand_curl_example() {
        // u0 = (0,0,0,0,0,x1): S_1 = (curl H0, -curl E0) = ((0,-1,0),(0,0,0)).
        let g = Grid::boxed(1.0, 1.0, [6, 6, 6]).unwrap();
        let u0 = Field6::sample(&g, |x| [0.0, 0.0, 0.0, 0.0, 0.0, x[0]]);
        let a0 = const_jet(&g, vec![Mat6::identity()]);
        let d = const_jet(&g, vec![Mat6::zeros()]);
        let jet = linear_solution_jet(&g, 2, 0.0, &a0, &d, &u0, &[]).unwrap();
        // Nodes away from the x1 wrap seam (the sampled field is not
        // x1-periodic); one-sided stencils are exact on affine data, so all
        // x3 layers qualify.
        for k in 0..g.n[2] {
            for j in 0..g.n[1] {
                for i in 1..g.n[0] - 1 {
                    let node = g.node_index(i, j, k);
                    let v = jet.entries[1].get(node);
                    let expect = Vec6::new(0.0, -1.0, 0.0, 0.0, 0.0, 0.0);
                    assert!((v - expect).abs().max() < 1e-12, "node {node}: {v:?}");
                }
            }
        }
    }

    #[test]
    fn constant_state_jet_vanishes() {
        let g = Grid::boxed(1.0, 1.0, [4, 4, 4]).unwrap();
        let u0 = Field6::sample(&g, |_| [0.4, -0.7, 0.1, 0.9, 0.0, 0.3]);
        let a0 = const_jet(&g, vec![Mat6::identity()]);
        let d = const_jet(&g, vec![Mat6::zeros()]);
        let jet = linear_solution_jet(&g, 4, 0.0, &a0, &d, &u0, &[]).unwrap();
        for p in 1..4 {
            assert!(jet.entries[p].max_abs() < 1e-13);
        }
    }

    #[test]
    fn nonlinear_jet_with_linear_law_is_bitwise_linear_jet() {
        let g = Grid::boxed(1.0, 1.0, [5, 5, 5]).unwrap();
        let law = registry::linear_default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let u0 = Field6 {
                n: g.n,
                data: (0..g.num_nodes() * 6).map(|_| rng.random_range(-0.5..0.5)).collect(),
            };
            let f0 = Field6 {
                n: g.n,
                data: (0..g.num_nodes() * 6).map(|_| rng.random_range(-1.0..1.0)).collect(),
            };
            let f1 = Field6 {
                n: g.n,
                data: (0..g.num_nodes() * 6).map(|_| rng.random_range(-1.0..1.0)).collect(),
            };
            let a0 = const_jet(&g, vec![Mat6::identity(), Mat6::zeros(), Mat6::zeros()]);
            let d = const_jet(&g, vec![Mat6::zeros(), Mat6::zeros(), Mat6::zeros()]);
            let lin =
                linear_solution_jet(&g, 3, 0.0, &a0, &d, &u0, &[f0.clone(), f1.clone()]).unwrap();
            let nl = nonlinear_solution_jet(&g, 3, 0.0, &law, &u0, &[f0, f1]).unwrap();
            for p in 0..3 {
                assert_eq!(lin.entries[p].data, nl.entries[p].data, "order {p}");
            }
        }
    }

    #[test]
    fn nonlinear_jet_zero_state_forced() {
        // u0 = 0, f(t0) != 0: S_1 = chi(0)^{-1} f(t0).
        let g = Grid::boxed(1.0, 1.0, [4, 4, 4]).unwrap();
        let law = registry::kerr_default();
        let u0 = Field6::zeros(&g);
        let f0 = Field6::sample(&g, |x| [x[0], 1.0, 0.0, 0.0, -x[1], 2.0]);
        let jet = nonlinear_solution_jet(&g, 2, 0.0, &law, &u0, &[f0.clone()]).unwrap();
        // chi(0) = I for the Kerr law.
        for node in 0..g.num_nodes() {
            assert!((jet.entries[1].get(node) - f0.get(node)).abs().max() < 1e-14);
        }
    }

    #[test]
    fn compat_zero_data_zero_residuals() {
        let g = Grid::boxed(1.0, 1.0, [5, 5, 5]).unwrap();
        let law = registry::kerr_default();
        let u0 = Field6::zeros(&g);
        let jet = nonlinear_solution_jet(&g, 3, 0.0, &law, &u0, &[]).unwrap();
        let rep = check_compatibility_nonlinear(
            &g,
            Face::Bottom,
            &law,
            &jet,
            &[],
            CompatTolerance::default(),
        )
        .unwrap();
        assert!(rep.pass);
        assert!(rep.residuals.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn compat_constructed_g_jets_give_tiny_residuals() {
        // Build the g jets from the condition's own right-hand side; the
        // residual is then pure roundoff.
        let g = Grid::boxed(1.0, 1.0, [5, 5, 6]).unwrap();
        let law = registry::kerr_default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let u0 = Field6 {
            n: g.n,
            data: (0..g.num_nodes() * 6).map(|_| rng.random_range(-0.15..0.15)).collect(),
        };
        let f0 = Field6 {
            n: g.n,
            data: (0..g.num_nodes() * 6).map(|_| rng.random_range(-0.3..0.3)).collect(),
        };
        let jet = nonlinear_solution_jet(&g, 3, 0.0, &law, &u0, &[f0]).unwrap();
        let traces = trace_jets(&g, Face::Bottom, &jet);
        let zeta_jet = compose_boundary_jet(&law, &g, Face::Bottom, &traces, 3).unwrap();
        let frame = BoundaryFrame::flat(Face::Bottom);
        // g_p := B(u0) S_p - nu x sum_{k>=1} C(p,k) M3^k B1 S_{p-k}.
        let mut g_jets = Vec::new();
        for p in 0..3usize {
            let mut gp = FaceField3::zeros(&g);
            let uf = jet.entries[p].restrict_to_face(&g, Face::Bottom);
            for fnode in 0..g.face_nodes() {
                let lhs = frame.trace_t_magnetic(&uf.get(fnode))
                    - frame.nu.cross(&(zeta_jet.entries[0][fnode] * traces[p].get(fnode)));
                let mut sum = Vec3::zeros();
                for k in 1..=p {
                    sum += binom(p, k) * (zeta_jet.entries[k][fnode] * traces[p - k].get(fnode));
                }
                gp.set(fnode, &(lhs - frame.nu.cross(&sum)));
            }
            g_jets.push(gp);
        }
        let rep = check_compatibility_nonlinear(
            &g,
            Face::Bottom,
            &law,
            &jet,
            &g_jets,
            CompatTolerance::Analytic { rtol: 1e-12 },
        )
        .unwrap();
        assert!(rep.pass, "residuals {:?}", rep.residuals);
        assert!(rep.residuals.iter().all(|&r| r <= 1e-12));
    }

    #[test]
    fn compat_order_zero_violation_scales_with_area() {
        // Perturbing g(t0) by a constant tangential delta gives
        // r0 = delta * sqrt(face area).
        let g = Grid::boxed(1.0, 1.0, [6, 6, 5]).unwrap();
        let law = registry::linear_default();
        let u0 = Field6::zeros(&g);
        let jet = nonlinear_solution_jet(&g, 2, 0.0, &law, &u0, &[]).unwrap();
        let delta = 0.37;
        let mut g0 = FaceField3::zeros(&g);
        for fnode in 0..g.face_nodes() {
            g0.set(fnode, &Vec3::new(delta, 0.0, 0.0));
        }
        let rep = check_compatibility_nonlinear(
            &g,
            Face::Bottom,
            &law,
            &jet,
            &[g0],
            CompatTolerance::default(),
        )
        .unwrap();
        let expect = delta * g.face_area().sqrt();
        assert!((rep.residuals[0] - expect).abs() < 1e-12, "{}", rep.residuals[0]);
    }

    #[test]
    fn compat_ignores_jets_beyond_order() {
        let g = Grid::boxed(1.0, 1.0, [5, 5, 5]).unwrap();
        let law = registry::kerr_default();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let u0 = Field6 {
            n: g.n,
            data: (0..g.num_nodes() * 6).map(|_| rng.random_range(-0.1..0.1)).collect(),
        };
        let jet = nonlinear_solution_jet(&g, 2, 0.0, &law, &u0, &[]).unwrap();
        let zeros = FaceField3::zeros(&g);
        let mut junk = FaceField3::zeros(&g);
        for fnode in 0..g.face_nodes() {
            junk.set(fnode, &Vec3::new(rng.random_range(-9.0..9.0), 1.0, 0.0));
        }
        let r1 = check_compatibility_nonlinear(
            &g, Face::Bottom, &law, &jet,
            &[zeros.clone(), zeros.clone()],
            CompatTolerance::default(),
        )
        .unwrap();
        let r2 = check_compatibility_nonlinear(
            &g, Face::Bottom, &law, &jet,
            &[zeros.clone(), zeros, junk],
            CompatTolerance::default(),
        )
        .unwrap();
        assert_eq!(r1.residuals, r2.residuals);
    }

    #[test]
    fn jet_columnar_roundtrip() {
        let g = Grid::boxed(1.0, 1.0, [4, 4, 4]).unwrap();
        let u0 = Field6::sample(&g, |x| [x[0], x[1], x[2], 1.0, 2.0, 3.0]);
        let a0 = const_jet(&g, vec![Mat6::identity()]);
        let d = const_jet(&g, vec![Mat6::zeros()]);
        let jet = linear_solution_jet(&g, 2, 0.25, &a0, &d, &u0, &[]).unwrap();
        let dir = std::env::temp_dir().join("maxwell_abc_jet_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("jet.csv");
        write_jet_columnar(&path, &jet).unwrap();
        let back = read_jet_columnar(&path, &g).unwrap();
        assert_eq!(back.base_time, 0.25);
        for p in 0..2 {
            assert_eq!(back.entries[p].data, jet.entries[p].data);
        }
    }
}
