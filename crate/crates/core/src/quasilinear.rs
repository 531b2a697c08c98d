//! Frozen-coefficient fixed-point iteration for the quasilinear system,
//! smallness quantities, parameter selection, maximal continuation, and
//! blow-up monitoring.
//!
//! One iteration freezes the state-dependent coefficients along the previous
//! iterate (`A0 = chi(u_hat)`, `D = sigma(u_hat)`, `b = zeta(tr_t u_hat^1)`)
//! and solves the resulting linear problem with the original data. The seed
//! is the spectral jet extension of the solution jet, so the iterates keep
//! the compatibility jets at the initial time.

use crate::alg::{Mat3, Mat6, Vec3};
use crate::error::{Error, Result};
use crate::field::{FaceField3, Field6};
use crate::grid::{Face, Grid};
use crate::jets::{
    check_compatibility_nonlinear, compose_interior_jet, nonlinear_solution_jet, CoefficientJet,
    CompatReport, CompatTolerance, InteriorComponent, TimeJet,
};
use crate::linear::{
    solve_linear, LinearCoefficients, ProblemData, SolveOptions, SpaceTimeFn, Stage, Trajectory,
};
use crate::material::MaterialLaw;
use crate::matrices::trace_matrix;
use crate::norms;
use serde::Serialize;

/// Coefficients frozen along a previously computed trajectory.
pub struct FrozenCoefficients<'a> {
    pub law: &'a MaterialLaw,
    pub along: &'a Trajectory,
}

impl FrozenCoefficients<'_> {
    fn state(&self, step: usize, stage: Stage) -> Field6 {
        self.along
            .state_at_stage(step.min(self.along.steps.saturating_sub(1)), stage)
    }
}

impl LinearCoefficients for FrozenCoefficients<'_> {
    fn fill_a0(&self, _t: f64, step: usize, stage: Stage, grid: &Grid, out: &mut [Mat6]) {
        let u = self.state(step, stage);
        for node in 0..grid.num_nodes() {
            let [i, j, k] = grid.node_coords(node);
            out[node] = self.law.chi(&grid.position(i, j, k), &u.get(node));
        }
    }
    fn fill_d(&self, _t: f64, step: usize, stage: Stage, grid: &Grid, out: &mut [Mat6]) {
        let u = self.state(step, stage);
        for node in 0..grid.num_nodes() {
            let [i, j, k] = grid.node_coords(node);
            out[node] = self.law.sigma(&grid.position(i, j, k), &u.get(node));
        }
    }
    fn fill_a0_dot(&self, _t: f64, step: usize, grid: &Grid, out: &mut [Mat6]) {
        // Centered difference of chi(u_hat(t)) over the stored steps.
        let s = self.along;
        let (ia, ib, scale) = if step == 0 {
            (0, 1, 1.0 / s.dt)
        } else if step >= s.steps {
            (s.steps - 1, s.steps, 1.0 / s.dt)
        } else {
            (step - 1, step + 1, 0.5 / s.dt)
        };
        let ua = &s.states[ia];
        let ub = &s.states[ib];
        for node in 0..grid.num_nodes() {
            let [i, j, k] = grid.node_coords(node);
            let x = grid.position(i, j, k);
            out[node] =
                (self.law.chi(&x, &ub.get(node)) - self.law.chi(&x, &ua.get(node))) * scale;
        }
    }
    fn fill_b(&self, _t: f64, step: usize, stage: Stage, grid: &Grid, out: &mut [Mat3]) {
        let u = self.state(step, stage);
        let b0 = trace_matrix(&Face::Bottom.normal());
        let layer = grid.face_layer(Face::Bottom);
        for fj in 0..grid.n[1] {
            for fi in 0..grid.n[0] {
                let node = grid.node_index(fi, fj, layer);
                let xi = b0 * u.electric(node);
                out[fj * grid.n[0] + fi] = self.law.zeta(&grid.position(fi, fj, layer), &xi);
            }
        }
    }
    fn a0_time_jet(&self, _t0: f64, grid: &Grid, orders: usize) -> CoefficientJet<Mat6> {
        // Jets of chi(u_hat(t)) through the composition machinery, with the
        // finite-difference time jets of the frozen trajectory inside.
        let state_jets = trajectory_time_jets(self.along, orders);
        compose_interior_jet(self.law, InteriorComponent::Chi, grid, &state_jets, orders)
            .unwrap_or_else(|_| identity_jet(grid, orders))
    }
    fn d_time_jet(&self, _t0: f64, grid: &Grid, orders: usize) -> CoefficientJet<Mat6> {
        let state_jets = trajectory_time_jets(self.along, orders);
        compose_interior_jet(self.law, InteriorComponent::Sigma, grid, &state_jets, orders)
            .unwrap_or_else(|_| zero_jet(grid, orders))
    }
    fn b_time_jet(&self, _t0: f64, grid: &Grid, orders: usize) -> CoefficientJet<Mat3> {
        let state_jets = trajectory_time_jets(self.along, orders);
        let traces: Vec<FaceField3> = state_jets
            .iter()
            .map(|s| {
                let b0 = trace_matrix(&Face::Bottom.normal());
                let mut out = FaceField3::zeros(grid);
                let layer = grid.face_layer(Face::Bottom);
                for fj in 0..grid.n[1] {
                    for fi in 0..grid.n[0] {
                        let node = grid.node_index(fi, fj, layer);
                        out.set(fj * grid.n[0] + fi, &(b0 * s.electric(node)));
                    }
                }
                out
            })
            .collect();
        crate::jets::compose_boundary_jet(self.law, grid, Face::Bottom, &traces, orders)
            .unwrap_or_else(|_| CoefficientJet {
                entries: vec![vec![Mat3::identity(); grid.face_nodes()]; orders],
            })
    }
    fn eta(&self) -> f64 {
        self.law.eta
    }
}

fn trajectory_time_jets(traj: &Trajectory, orders: usize) -> Vec<Field6> {
    let levels = traj.states.len();
    (0..orders)
        .map(|p| {
            let p = p.min(3);
            if levels >= fd_levels_needed(p) {
                norms::fd_time_jet_at_start(&traj.states, traj.dt, p)
            } else {
                Field6 { n: traj.states[0].n, data: vec![0.0; traj.states[0].data.len()] }
            }
        })
        .collect()
}

fn fd_levels_needed(p: usize) -> usize {
    match p {
        0 => 1,
        1 => 3,
        2 => 4,
        _ => 5,
    }
}

fn identity_jet(grid: &Grid, orders: usize) -> CoefficientJet<Mat6> {
    let mut entries = vec![vec![Mat6::identity(); grid.num_nodes()]];
    for _ in 1..orders {
        entries.push(vec![Mat6::zeros(); grid.num_nodes()]);
    }
    CoefficientJet { entries }
}

fn zero_jet(grid: &Grid, orders: usize) -> CoefficientJet<Mat6> {
    CoefficientJet { entries: vec![vec![Mat6::zeros(); grid.num_nodes()]; orders] }
}

/// Checks that all states of a trajectory remain in `U` and their boundary
/// traces inside the conductivity's domain; reports the first exit.
pub fn check_domain_membership(law: &MaterialLaw, traj: &Trajectory) -> Result<()> {
    let grid = &traj.grid;
    let b0 = trace_matrix(&Face::Bottom.normal());
    for (idx, state) in traj.states.iter().enumerate() {
        let t = traj.t0 + traj.stored_indices[idx] as f64 * traj.dt;
        for node in 0..grid.num_nodes() {
            let d = law.domain.distance(&state.get(node));
            if d <= 0.0 {
                return Err(Error::DomainExit { t, node: grid.node_coords(node), dist: d });
            }
        }
        if !grid.periodic3 {
            let layer = grid.face_layer(Face::Bottom);
            for fj in 0..grid.n[1] {
                for fi in 0..grid.n[0] {
                    let node = grid.node_index(fi, fj, layer);
                    let xi = b0 * state.electric(node);
                    if law.trace_domain_distance(&xi) <= 0.0 {
                        return Err(Error::ZetaDomainViolation { t });
                    }
                }
            }
        }
    }
    Ok(())
}

/// One frozen-coefficient step: solves the linear system with coefficients
/// evaluated along `hat` and the original data.
pub fn picard_step(
    law: &MaterialLaw,
    hat: &Trajectory,
    data: &ProblemData,
    opts: &SolveOptions,
) -> Result<Trajectory> {
    assert!(hat.dense(), "frozen-coefficient steps need densely stored trajectories");
    check_domain_membership(law, hat)?;
    let frozen = FrozenCoefficients { law, along: hat };
    let horizon = hat.dt * hat.steps as f64;
    let mut o = opts.clone();
    o.store_stride = 1;
    solve_linear(&frozen, data, &hat.grid, hat.t0, horizon, hat.dt, &o)
}

/// Fixed-point metric: `G^{m-1}` surrogate of the difference plus the
/// boundary-trace `H^{m-1}` term.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory, order: usize) -> Result<f64> {
    assert_eq!(a.steps, b.steps);
    let grid = &a.grid;
    let diff: Vec<Field6> = a
        .states
        .iter()
        .zip(b.states.iter())
        .map(|(x, y)| Field6::linear_combination(1.0, x, -1.0, y))
        .collect();
    let interior = norms::g_surrogate(grid, &diff, a.dt, order)?;
    let mut boundary = 0.0;
    if !grid.periodic3 {
        let nu = Face::Bottom.normal();
        let b0 = trace_matrix(&nu);
        let layer = grid.face_layer(Face::Bottom);
        let tau_block = |electric: bool| -> Vec<FaceField3> {
            diff.iter()
                .map(|d| {
                    let mut out = FaceField3::zeros(grid);
                    for fj in 0..grid.n[1] {
                        for fi in 0..grid.n[0] {
                            let node = grid.node_index(fi, fj, layer);
                            let v = if electric { d.electric(node) } else { d.magnetic(node) };
                            out.set(fj * grid.n[0] + fi, &nu.cross(&(b0 * v)));
                        }
                    }
                    out
                })
                .collect()
        };
        let tau_e = tau_block(true);
        let tau_h = tau_block(false);
        boundary = (norms::face_spacetime_h_gamma_sq(grid, &tau_e, a.dt, order, 0.0)
            + norms::face_spacetime_h_gamma_sq(grid, &tau_h, a.dt, order, 0.0))
        .sqrt();
    }
    Ok(interior + boundary)
}

/// Empirical run constants standing in for the analytic ones; fitted by
/// [`calibrate`] or supplied through the configuration.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConstants {
    /// Leading constant of the linear estimate (initial-data block).
    pub c_m0: f64,
    /// Interior-growth constant of the linear estimate.
    pub c_m: f64,
    /// Constant of the basic `L^2` estimate (uniqueness argument).
    pub c0: f64,
    /// Constant of the boundary-composition bounds.
    pub c_bar: f64,
    /// Commutator growth rate entering the step formula.
    pub c1: f64,
    /// Product/composition-rule constant.
    pub c_prod: f64,
    /// Sobolev embedding `H^2 -> C_b`.
    pub c_s: f64,
    /// Norm constant of the jet extension.
    pub c_ext: f64,
    /// Weight floor of the linear estimate.
    pub gamma_m: f64,
}

impl Default for RunConstants {
    fn default() -> Self {
        RunConstants {
            c_m0: 1.0,
            c_m: 1.0,
            c0: 1.0,
            c_bar: 1.0,
            c1: 1.0,
            c_prod: 1.0,
            c_s: 2.0,
            c_ext: 1.0,
            gamma_m: 1.0,
        }
    }
}

/// Fits the empirical constants from two small linear calibration runs
/// (an interior bump and a boundary-forced run).
pub fn calibrate(grid: &Grid, opts: &SolveOptions) -> Result<RunConstants> {
    use crate::linear::{apriori_monitor, gamma0, BoundaryFn, ConstantCoefficients};
    let coeffs = ConstantCoefficients::free_space();
    let dt = 0.3 * grid.dx(2);
    let mut consts = RunConstants::default();

    // Interior bump.
    let bump = Field6::sample(grid, |x| {
        let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - 0.4).powi(2);
        let v = (-r2 / 0.03).exp();
        [0.0, v, 0.0, v, 0.0, 0.0]
    });
    let data = ProblemData::homogeneous(bump.clone());
    let traj = solve_linear(&coeffs, &data, grid, 0.0, 0.4, dt, opts)?;
    let rep = apriori_monitor(&traj, gamma0(&traj, &coeffs), &coeffs);
    consts.c0 = rep.fitted_c.max(1e-3);

    // Boundary-forced run.
    let data_g = ProblemData {
        u0: Field6::zeros(grid),
        f: SpaceTimeFn::Zero,
        g_bottom: BoundaryFn::analytic(|t, x| {
            let s = (std::f64::consts::TAU * x[0]).sin() * (3.0 * t).sin();
            [s, 0.0, 0.0]
        }),
        g_top: BoundaryFn::Zero,
    };
    let traj_g = solve_linear(&coeffs, &data_g, grid, 0.0, 0.4, dt, opts)?;
    let rep_g = apriori_monitor(&traj_g, gamma0(&traj_g, &coeffs), &coeffs);
    consts.c0 = consts.c0.max(rep_g.fitted_c);

    // Higher-order constant: G^2 surrogate against the H^2 data norm.
    let g2 = norms::g_surrogate(grid, &traj.states, traj.dt, 2)?;
    let h2 = norms::h_norm_sq(grid, &bump, 2, false)?;
    consts.c_m0 = (g2 * g2 / h2.max(1e-30)).max(1e-3);
    consts.c_m = consts.c_m0;

    // Sobolev embedding surrogate over a few smooth probes.
    let mut cs: f64 = 0.0;
    for (w, ax) in [(0.05, 0usize), (0.12, 1), (0.2, 2)] {
        let probe = Field6::sample(grid, |x| {
            let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - 0.5).powi(2);
            let mut v = [0.0; 6];
            v[ax] = (-r2 / w).exp();
            v
        });
        let sup = probe.max_abs();
        let h2 = norms::h_norm_sq(grid, &probe, 2, false)?.sqrt();
        cs = cs.max(sup / h2.max(1e-30));
    }
    consts.c_s = cs.max(1.0);
    Ok(consts)
}

/// Smallness quantities of the boundary nonlinearity and the thresholds of
/// the contraction argument.
#[derive(Debug, Clone, Serialize)]
pub struct SmallnessReport {
    pub kappa_bar: f64,
    /// `sup |d_xi zeta|` over the boundary times the trace ball.
    pub z0: f64,
    /// `z = z0 * kappa_bar`.
    pub z: f64,
    /// `1/8 (C_m0 C_bar)^{-1/2}`.
    pub threshold_contraction: f64,
    /// `(2 C_0)^{-1/2}`.
    pub threshold_uniqueness: f64,
    pub pass: bool,
    /// The thresholds rest on fitted constants, not the analytic ones.
    pub advisory: bool,
}

/// Computes the smallness quantity by adaptively maximizing the directional
/// derivative norm of `zeta` over the trace ball of radius `kappa_bar`.
pub fn smallness(law: &MaterialLaw, kappa_bar: f64, constants: &RunConstants) -> SmallnessReport {
    let z0 = directional_sup(law, kappa_bar);
    let z = z0 * kappa_bar;
    let threshold_contraction = 0.125 / (constants.c_m0 * constants.c_bar).sqrt();
    let threshold_uniqueness = 1.0 / (2.0 * constants.c0).sqrt();
    SmallnessReport {
        kappa_bar,
        z0,
        z,
        threshold_contraction,
        threshold_uniqueness,
        pass: z <= threshold_contraction.min(threshold_uniqueness),
        advisory: true,
    }
}

fn directional_sup(law: &MaterialLaw, radius: f64) -> f64 {
    // Dense sweep over |xi| <= radius (tangential) and unit tangential
    // directions, refined around the maximizer.
    let xs = [[0.0, 0.0, 0.0], [0.3, 0.7, 0.0], [0.9, 0.2, 0.0]];
    let eval = |x: &[f64; 3], r: f64, phi: f64, psi: f64| -> f64 {
        let xi = Vec3::new(r * phi.cos(), r * phi.sin(), 0.0);
        let v = Vec3::new(psi.cos(), psi.sin(), 0.0);
        let m = law.dzeta(x, &xi, &v);
        // Spectral norm via the Gram matrix.
        (m.transpose() * m)
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |a, &l| a.max(l))
            .sqrt()
    };
    let mut best = (0.0f64, 0.0f64, 0.0f64);
    for x in &xs {
        for ir in 0..=8 {
            let r = radius * ir as f64 / 8.0;
            for ip in 0..12 {
                let phi = std::f64::consts::TAU * ip as f64 / 12.0;
                for iv in 0..12 {
                    let psi = std::f64::consts::TAU * iv as f64 / 12.0;
                    let val = eval(x, r, phi, psi);
                    if val > best.0 {
                        best = (val, r, phi);
                    }
                }
            }
        }
    }
    let mut dr = radius / 8.0;
    let mut dphi = std::f64::consts::TAU / 12.0;
    for _ in 0..3 {
        let (r, phi) = (best.1, best.2);
        for x in &xs {
            for kr in -2i32..=2 {
                let rr = (r + kr as f64 * dr * 0.5).clamp(0.0, radius);
                for kp in -2i32..=2 {
                    let pp = phi + kp as f64 * dphi * 0.5;
                    for iv in 0..24 {
                        let psi = std::f64::consts::TAU * iv as f64 / 24.0;
                        let val = eval(x, rr, pp, psi);
                        if val > best.0 {
                            best = (val, rr, pp);
                        }
                    }
                }
            }
        }
        dr *= 0.5;
        dphi *= 0.5;
    }
    best.0
}

/// Radius, weight and step selected by the fixed-point argument's formulas,
/// evaluated with the fitted constants.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SelectedParams {
    pub radius: f64,
    pub gamma: f64,
    pub tau: f64,
}

/// Applies the radius/weight/step selection formulas of the local existence
/// argument with the supplied constants.
pub fn select_parameters(
    c: &RunConstants,
    r: f64,
    kappa: f64,
    kappa_tilde: f64,
    horizon: f64,
    m: usize,
    z0_at_kt: f64,
) -> SelectedParams {
    let radius = ((32.0 * c.c_m0).sqrt() * r).max(c.c_ext * r + 1.0);
    let gamma = c.gamma_m.max(c.c_m / c.c_m0);
    let t = horizon;
    let tau = t
        .min(kappa / (2.0 * c.c_s * radius))
        .min((2.0f64).ln() / (2.0 * gamma + m as f64 * c.c1))
        .min(c.c_m0 / c.c_m)
        .min(
            1.0 / (16.0
                * c.c_m0
                * c.c_bar
                * (4.0 * kappa_tilde * kappa_tilde
                    + c.c_s * c.c_s * t * (t + z0_at_kt * z0_at_kt))),
        )
        .min(1.0 / (16.0 * c.c_m0 * c.c_bar))
        .min(1.0 / (32.0 * radius * radius * c.c_m0 * c.c_prod * c.c_prod));
    SelectedParams { radius, gamma, tau }
}

/// Iteration record of one fixed-point solve.
#[derive(Debug, Clone, Serialize, Default)]
pub struct IterationHistory {
    /// `d_n = dist(u_{n+1}, u_n)` in the `G^{m-1}` surrogate metric.
    pub distances: Vec<f64>,
    /// `q_n = d_n / d_{n-1}`.
    pub ratios: Vec<f64>,
    /// `G^{m-1}` surrogate norm per iterate.
    pub iterate_norms: Vec<f64>,
    /// Ball flag: norm within the selected radius (when one is set).
    pub within_radius: Vec<bool>,
    /// Sup-distance of the iterate to `u0`.
    pub sup_distance_to_u0: Vec<f64>,
    /// Ball flag: sup-distance within `kappa / 2`.
    pub within_kappa_half: Vec<bool>,
    /// Seed jet defect per order (FD jets of the seed against the solution
    /// jet, relative).
    pub seed_jet_defect: Vec<f64>,
    pub converged: bool,
    /// Number of corrector applications performed.
    pub iterations: usize,
    /// Boundary-condition residual of the final iterate, `L^2(Gamma)`.
    pub final_bc_residual: f64,
}

/// Options of the quasilinear solve.
#[derive(Debug, Clone)]
pub struct QuasilinearParams {
    /// Jet/compatibility order.
    pub m: usize,
    /// Relative fixed-point tolerance.
    pub tol: f64,
    pub n_max: usize,
    /// Ball radius; `None` disables the radius flag.
    pub radius: Option<f64>,
    /// Interior safety margin; default `0.8 * dist(ran u0, boundary of U)`.
    pub kappa: Option<f64>,
    /// Boundary-trace smallness level.
    pub kappa_tilde: f64,
    /// Compatibility tolerance factor (scaled by `dx^2`).
    pub compat_factor: f64,
    /// Fail on incompatible data (the report is always produced).
    pub enforce_compat: bool,
    pub constants: RunConstants,
}

impl Default for QuasilinearParams {
    fn default() -> Self {
        QuasilinearParams {
            m: 3,
            tol: 1e-10,
            n_max: 12,
            radius: None,
            kappa: None,
            kappa_tilde: 0.25,
            compat_factor: 200.0,
            enforce_compat: true,
            constants: RunConstants::default(),
        }
    }
}

/// Result of a quasilinear solve.
pub struct QuasilinearSolve {
    pub trajectory: Trajectory,
    pub history: IterationHistory,
    pub compat: CompatReport,
    pub smallness: Option<SmallnessReport>,
    pub jet: TimeJet,
}

/// Solves the quasilinear problem on `[t0, t0 + horizon]` by iterating the
/// frozen-coefficient map from the jet-extension seed.
pub fn solve_quasilinear(
    law: &MaterialLaw,
    data: &ProblemData,
    grid: &Grid,
    t0: f64,
    horizon: f64,
    dt: f64,
    params: &QuasilinearParams,
    opts: &SolveOptions,
) -> Result<QuasilinearSolve> {
    let m = params.m;
    data.u0.check_conforms(grid)?;

    // Interior margin.
    let mut dist0 = f64::INFINITY;
    for node in 0..grid.num_nodes() {
        dist0 = dist0.min(law.domain.distance(&data.u0.get(node)));
    }
    if dist0 <= 0.0 {
        return Err(Error::DomainExit { t: t0, node: [0, 0, 0], dist: dist0 });
    }
    let kappa = params.kappa.unwrap_or(0.8 * dist0);
    if dist0 <= kappa {
        return Err(Error::BallExit(format!(
            "initial range margin {dist0:.3e} does not exceed kappa {kappa:.3e}"
        )));
    }

    // Jets and compatibility. Fully periodic runs have no boundary, so the
    // compatibility conditions are vacuous there.
    let f_jets = data.f.jets(grid, t0, m.saturating_sub(1));
    let g_jets = data.g_bottom.jets(grid, Face::Bottom, t0, m);
    let jet = nonlinear_solution_jet(grid, m, t0, law, &data.u0, &f_jets)?;
    let compat = if grid.periodic3 {
        CompatReport { order: m, residuals: vec![], tolerances: vec![], pass: true }
    } else {
        check_compatibility_nonlinear(
            grid,
            Face::Bottom,
            law,
            &jet,
            &g_jets,
            CompatTolerance::Discretized { dx: grid.dx(2), factor: params.compat_factor },
        )?
    };
    if params.enforce_compat && !compat.pass {
        let (order, (&residual, &tol)) = compat
            .residuals
            .iter()
            .zip(compat.tolerances.iter())
            .enumerate()
            .find(|(_, (r, t))| r > t)
            .map(|(i, rt)| (i, rt))
            .unwrap();
        return Err(Error::CompatFailure { order, residual, tol });
    }

    // Boundary smallness (nonlinear conductivities only).
    let smallness_report = if law.zeta_is_nonlinear() && !grid.periodic3 {
        let mut trace_sup: f64 = 0.0;
        if !grid.periodic3 {
            let b0 = trace_matrix(&Face::Bottom.normal());
            let layer = grid.face_layer(Face::Bottom);
            for fj in 0..grid.n[1] {
                for fi in 0..grid.n[0] {
                    let node = grid.node_index(fi, fj, layer);
                    trace_sup = trace_sup.max((b0 * data.u0.electric(node)).norm());
                }
            }
        }
        if trace_sup >= params.kappa_tilde {
            return Err(Error::BallExit(format!(
                "initial boundary trace {trace_sup:.3e} exceeds kappa_tilde {:.3e}",
                params.kappa_tilde
            )));
        }
        Some(smallness(law, params.kappa_tilde, &params.constants))
    } else {
        None
    };

    // Seed: jet extension sampled on the step grid (relative time 0 = t0).
    // The smoothness gate is disabled here; solution jets are as rough as
    // the discrete derivatives make them and the jet match is exact anyway.
    let ext = crate::extension::extend_jet_with_tail_tol(grid, &jet.entries, 1.0)?;
    let steps = (horizon / dt - 1e-12).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let seed_states: Vec<Field6> = (0..=steps)
        .map(|n| {
            if n == 0 {
                data.u0.clone()
            } else {
                ext.sample(n as f64 * dt)
            }
        })
        .collect();
    let mut seed_jet_defect = Vec::new();
    for (p, entry) in jet.entries.iter().enumerate().take(m.min(3)) {
        if seed_states.len() < fd_levels_needed(p) {
            break;
        }
        let fd = norms::fd_time_jet_at_start(&seed_states, dt, p);
        let diff = Field6::linear_combination(1.0, &fd, -1.0, entry);
        let scale = entry.max_abs().max(1.0);
        seed_jet_defect.push(diff.max_abs() / scale);
    }
    let mut current = Trajectory {
        grid: grid.clone(),
        t0,
        dt,
        steps,
        states: seed_states,
        stored_indices: (0..=steps).collect(),
        series: Default::default(),
    };

    let mut history = IterationHistory { seed_jet_defect, ..Default::default() };
    let metric_order = (m - 1).min(2);
    let mut prev_d: Option<f64> = None;
    let mut stall = 0usize;
    let mut scale = 1.0f64;
    let mut converged = false;
    for it in 1..=params.n_max {
        let next = picard_step(law, &current, data, opts)?;
        history.iterations = it;
        let d = trajectory_distance(&next, &current, metric_order)?;
        history.distances.push(d);
        if it == 1 {
            scale = norms::g_surrogate(grid, &next.states, dt, metric_order)?.max(1.0);
        }
        if let Some(p) = prev_d {
            let q = if p > 0.0 { d / p } else { 0.0 };
            history.ratios.push(q);
            if q >= 1.0 && d > params.tol * scale {
                stall += 1;
                if stall >= 3 {
                    return Err(Error::NoContraction { count: stall, q });
                }
            } else {
                stall = 0;
            }
        }
        // Ball diagnostics.
        let norm = norms::g_surrogate(grid, &next.states, dt, metric_order)?;
        history.iterate_norms.push(norm);
        history
            .within_radius
            .push(params.radius.map(|r| norm <= r).unwrap_or(true));
        let mut supd = 0.0f64;
        for s in &next.states {
            for (a, b) in s.data.iter().zip(data.u0.data.iter()) {
                supd = supd.max((a - b).abs());
            }
        }
        history.sup_distance_to_u0.push(supd);
        history.within_kappa_half.push(supd <= 0.5 * kappa);
        if supd > 0.5 * kappa {
            return Err(Error::BallExit(format!(
                "iterate left the kappa/2 ball: sup distance {supd:.3e} > {:.3e}",
                0.5 * kappa
            )));
        }

        prev_d = Some(d);
        current = next;
        if d <= params.tol * scale {
            converged = true;
            break;
        }
    }
    history.converged = converged;
    history.final_bc_residual = boundary_residual(law, &current, data);
    Ok(QuasilinearSolve { trajectory: current, history, compat, smallness: smallness_report, jet })
}

/// Discrete `L^2(Gamma)` residual of the nonlinear boundary condition along
/// a trajectory (bottom face, trapezoid in time).
pub fn boundary_residual(law: &MaterialLaw, traj: &Trajectory, data: &ProblemData) -> f64 {
    let grid = &traj.grid;
    if grid.periodic3 {
        return 0.0;
    }
    let nu = Face::Bottom.normal();
    let b0 = trace_matrix(&nu);
    let layer = grid.face_layer(Face::Bottom);
    let wf = grid.face_weight();
    let mut acc = 0.0;
    for (idx, state) in traj.states.iter().enumerate() {
        let n = traj.stored_indices[idx];
        let t = traj.t0 + n as f64 * traj.dt;
        let mut step_acc = 0.0;
        for fj in 0..grid.n[1] {
            for fi in 0..grid.n[0] {
                let node = grid.node_index(fi, fj, layer);
                let x = grid.position(fi, fj, layer);
                let xi = b0 * state.electric(node);
                let bc = b0 * state.magnetic(node) - nu.cross(&(law.zeta(&x, &xi) * xi));
                let g = Vec3::from_column_slice(&data.g_bottom.eval(t, x));
                step_acc += wf * (bc - g).norm_squared();
            }
        }
        acc += norms::trapezoid_weight(idx, traj.states.len()) * traj.dt * step_acc;
    }
    acc.sqrt()
}

/// Which blow-up monitor fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlowupCriterion {
    /// Distance of the range to the boundary of `U` fell below the
    /// configured fraction of `kappa`.
    DistanceToDomainBoundary,
    /// The `H^m` surrogate norm exceeded the growth factor.
    NormGrowth,
    /// The boundary trace reached the smallness level `kappa_tilde`.
    TraceSmallness,
}

/// Monitor thresholds for the continuation loop.
#[derive(Debug, Clone)]
pub struct MonitorConfig {
    /// Fires criterion (a) at `dist < kappa * dist_fraction`.
    pub dist_fraction: f64,
    /// Fires criterion (b) at `||u||_{H^m} > norm_factor * initial`.
    pub norm_factor: f64,
    /// Fires criterion (c) at `||B1 u||_inf >= kappa_tilde`.
    pub kappa_tilde: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig { dist_fraction: 0.25, norm_factor: 1e3, kappa_tilde: 0.25 }
    }
}

/// Per-step monitor series and the triggered criterion of a continuation.
#[derive(Debug, Clone, Serialize, Default)]
pub struct BlowupReport {
    pub times: Vec<f64>,
    /// Distance of the sampled range to the boundary of `U`.
    pub dist_to_boundary: Vec<f64>,
    /// `H^m` surrogate norm.
    pub hm_norm: Vec<f64>,
    /// `max(|u|, |grad u|)` per step.
    pub grad_sup: Vec<f64>,
    /// `||B1 u||_{L^inf(Sigma)}`.
    pub trace_sup: Vec<f64>,
    pub triggered: Option<BlowupCriterion>,
    /// Time at which the monitor fired (final time otherwise).
    pub t_stop: f64,
    /// Lipschitz envelope `omega(t)`: running sup of `grad_sup`.
    pub omega: Vec<f64>,
}

/// Result of a continuation run.
pub struct Continuation {
    pub segments: Vec<Trajectory>,
    pub histories: Vec<IterationHistory>,
    pub report: BlowupReport,
}

/// Continuation driver: repeatedly applies the local solve on steps of
/// length `tau`, re-deriving the jets at each restart, until `t_target` or a
/// monitor fires.
#[allow(clippy::too_many_arguments)]
pub fn continue_maximal(
    law: &MaterialLaw,
    data: &ProblemData,
    grid: &Grid,
    t0: f64,
    t_target: f64,
    tau: f64,
    dt: f64,
    params: &QuasilinearParams,
    opts: &SolveOptions,
    monitors: &MonitorConfig,
) -> Result<(Vec<Trajectory>, BlowupReport)> {
    let c = continue_with_histories(
        law, data, grid, t0, t_target, tau, dt, params, opts, monitors,
    )?;
    Ok((c.segments, c.report))
}

/// Like [`continue_maximal`] but also returns the per-leg iteration records.
#[allow(clippy::too_many_arguments)]
pub fn continue_with_histories(
    law: &MaterialLaw,
    data: &ProblemData,
    grid: &Grid,
    t0: f64,
    t_target: f64,
    tau: f64,
    dt: f64,
    params: &QuasilinearParams,
    opts: &SolveOptions,
    monitors: &MonitorConfig,
) -> Result<Continuation> {
    let mut report = BlowupReport::default();
    let mut segments: Vec<Trajectory> = Vec::new();
    let mut histories: Vec<IterationHistory> = Vec::new();
    let mut t = t0;
    let mut u0 = data.u0.clone();

    // Global margin from the initial state.
    let mut dist_init = f64::INFINITY;
    for node in 0..grid.num_nodes() {
        dist_init = dist_init.min(law.domain.distance(&u0.get(node)));
    }
    let kappa = params.kappa.unwrap_or(0.8 * dist_init);
    let dist_threshold = kappa * monitors.dist_fraction;

    let mut opts = opts.clone();
    opts.full_diagnostics = true;
    opts.store_stride = 1;

    let mut initial_hm: Option<f64> = None;
    'outer: while t < t_target - 1e-12 {
        let leg = (t_target - t).min(tau);
        let leg_data = ProblemData {
            u0: u0.clone(),
            f: data.f.clone(),
            g_bottom: data.g_bottom.clone(),
            g_top: data.g_top.clone(),
        };
        let solve = solve_quasilinear(law, &leg_data, grid, t, leg, dt, params, &opts)?;
        histories.push(solve.history);
        let traj = solve.trajectory;

        // Scan the per-step monitors.
        for (idx, state) in traj.states.iter().enumerate() {
            let tn = traj.t0 + idx as f64 * traj.dt;
            if idx == 0 && !segments.is_empty() {
                continue; // the knot point was already scanned
            }
            let mut dmin = f64::INFINITY;
            for node in 0..grid.num_nodes() {
                dmin = dmin.min(law.domain.distance(&state.get(node)));
            }
            let hm = traj.series.hm[idx];
            let grad = traj.series.sup_w1inf[idx];
            let tr = traj.series.trace_sup[idx];
            let hm0 = *initial_hm.get_or_insert(hm.max(1e-30));
            report.times.push(tn);
            report.dist_to_boundary.push(dmin);
            report.hm_norm.push(hm);
            report.grad_sup.push(grad);
            report.trace_sup.push(tr);
            let omega_prev = report.omega.last().copied().unwrap_or(0.0);
            report.omega.push(omega_prev.max(grad));

            let fired = if dmin < dist_threshold {
                Some(BlowupCriterion::DistanceToDomainBoundary)
            } else if hm > monitors.norm_factor * hm0 {
                Some(BlowupCriterion::NormGrowth)
            } else if law.zeta_is_nonlinear() && tr >= monitors.kappa_tilde {
                Some(BlowupCriterion::TraceSmallness)
            } else {
                None
            };
            if let Some(c) = fired {
                report.triggered = Some(c);
                report.t_stop = tn;
                segments.push(traj);
                break 'outer;
            }
        }

        t = traj.final_time();
        u0 = traj.final_state().clone();
        report.t_stop = t;
        segments.push(traj);
    }
    Ok(Continuation { segments, histories, report })
}

/// The data quantity `d_k`: squared Sobolev content of `(u0, f, g)` over the
/// run interval.
pub fn data_quantity(
    data: &ProblemData,
    grid: &Grid,
    t0: f64,
    horizon: f64,
    dt_sample: f64,
    k: usize,
) -> Result<f64> {
    let mut total = norms::h_norm_sq(grid, &data.u0, k, false)?;
    // Forcing jets at the initial time: ||d_t^j f(t0)||_{H^{k-1-j}}, j < k.
    if k >= 1 {
        let f_jets = data.f.jets(grid, t0, k);
        for (j, fj) in f_jets.iter().enumerate().take(k) {
            total += norms::h_norm_sq(grid, fj, k - 1 - j, false)?;
        }
    }
    // Space-time norms over the interval.
    if !data.f.is_zero() {
        let steps = (horizon / dt_sample).ceil().max(4.0) as usize;
        let dt = horizon / steps as f64;
        let samples: Vec<Field6> =
            (0..=steps).map(|n| data.f.sample(grid, t0 + n as f64 * dt)).collect();
        total += norms::spacetime_h_gamma_sq(grid, &samples, dt, k, 0.0, false)?;
    }
    if !data.g_bottom.is_zero() {
        let steps = (horizon / dt_sample).ceil().max(4.0) as usize;
        let dt = horizon / steps as f64;
        let samples: Vec<FaceField3> = (0..=steps)
            .map(|n| {
                FaceField3::sample(grid, Face::Bottom, |x| {
                    data.g_bottom.eval(t0 + n as f64 * dt, x)
                })
            })
            .collect();
        total += norms::face_spacetime_h_gamma_sq(grid, &samples, dt, k, 0.0);
    }
    Ok(total)
}

/// Lipschitz envelope `omega(t)` of a trajectory: running sup of
/// `max(|u|, |grad u|)`.
pub fn lipschitz_envelope(traj: &Trajectory) -> Vec<f64> {
    let grid = &traj.grid;
    let mut out = Vec::with_capacity(traj.states.len());
    let mut running: f64 = 0.0;
    for state in &traj.states {
        let mut v = state.max_abs();
        for axis in 0..3 {
            v = v.max(crate::ops::diff_field6(grid, state, axis).max_abs());
        }
        running = running.max(v);
        out.push(running);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::registry;

    fn interior_bump(grid: &Grid, amp: f64) -> Field6 {
        Field6::sample(grid, |x| {
            let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - 0.5).powi(2);
            let v = amp * (-r2 / 0.02).exp();
            [v, 0.0, 0.0, 0.0, v, 0.0]
        })
    }

    #[test]
    fn smallness_constant_zeta_is_zero() {
        let c = RunConstants::default();
        for law in [registry::linear_default(), registry::aniso_default()] {
            let rep = smallness(&law, 0.3, &c);
            assert_eq!(rep.z0, 0.0);
            assert_eq!(rep.z, 0.0);
            assert!(rep.pass);
        }
    }

    #[test]
    fn smallness_zero_radius_is_zero() {
        let c = RunConstants::default();
        let law = registry::kerr_default();
        let rep = smallness(&law, 0.0, &c);
        assert_eq!(rep.z, 0.0);
    }

    /// Oracle: for `zeta = I + xi xi^T` the maximum is analytic,
    /// `z0 = 2 kappa_bar` (attained at the rim with the direction along
    /// `xi`).
    #[test]
    fn smallness_quadratic_family_matches_analytic_max() {
        let c = RunConstants::default();
        let law = registry::kerr_default();
        for kb in [0.05, 0.1] {
            let rep = smallness(&law, kb, &c);
            let analytic = 2.0 * kb;
            assert!(
                (rep.z0 - analytic).abs() <= 0.01 * analytic,
                "kappa_bar={kb}: z0={} vs analytic {analytic}",
                rep.z0
            );
        }
    }

    #[test]
    fn picard_step_ignores_hat_for_linear_laws() {
        let g = Grid::boxed(1.0, 1.0, [6, 6, 7]).unwrap();
        let law = registry::linear_default();
        let data = ProblemData::homogeneous(interior_bump(&g, 0.1));
        let opts = SolveOptions::default();
        let dt = 0.3 * g.dx(2);
        let steps = 8;
        let mk_hat = |seed: u64| {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let states: Vec<Field6> = (0..=steps)
                .map(|_| Field6 {
                    n: g.n,
                    data: (0..g.num_nodes() * 6)
                        .map(|_| rng.random_range(-0.3..0.3))
                        .collect(),
                })
                .collect();
            Trajectory {
                grid: g.clone(),
                t0: 0.0,
                dt,
                steps,
                states,
                stored_indices: (0..=steps).collect(),
                series: Default::default(),
            }
        };
        let out1 = picard_step(&law, &mk_hat(1), &data, &opts).unwrap();
        let out2 = picard_step(&law, &mk_hat(2), &data, &opts).unwrap();
        assert_eq!(out1.final_state().data, out2.final_state().data);
    }

    #[test]
    fn picard_step_zero_data_gives_zero() {
        let g = Grid::boxed(1.0, 1.0, [6, 6, 7]).unwrap();
        let law = registry::kerr_default();
        let data = ProblemData::homogeneous(Field6::zeros(&g));
        let hat = Trajectory {
            grid: g.clone(),
            t0: 0.0,
            dt: 0.3 * g.dx(2),
            steps: 6,
            states: (0..=6).map(|_| interior_bump(&g, 0.05)).collect(),
            stored_indices: (0..=6).collect(),
            series: Default::default(),
        };
        let out = picard_step(&law, &hat, &data, &SolveOptions::default()).unwrap();
        assert!(out.final_state().max_abs() <= 1e-13);
    }

    #[test]
    fn quasilinear_linear_law_converges_in_one_effective_iteration() {
        let g = Grid::boxed(1.0, 1.0, [6, 6, 7]).unwrap();
        let law = registry::linear_default();
        let data = ProblemData::homogeneous(interior_bump(&g, 0.1));
        let dt = 0.3 * g.dx(2);
        let solve = solve_quasilinear(
            &law,
            &data,
            &g,
            0.0,
            0.1,
            dt,
            &QuasilinearParams::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(solve.history.converged);
        // d_1 (the second recorded distance) is roundoff: the map does not
        // depend on the iterate for a linear law.
        assert!(solve.history.distances.len() >= 2);
        assert!(
            solve.history.distances[1] <= 1e-11 * solve.history.iterate_norms[0].max(1.0),
            "distances {:?}",
            solve.history.distances
        );
    }

    #[test]
    fn quasilinear_kerr_small_data_contracts() {
        let g = Grid::boxed(1.0, 1.0, [8, 8, 9]).unwrap();
        let law = registry::kerr_default();
        let data = ProblemData::homogeneous(interior_bump(&g, 1e-2));
        let dt = 0.3 * g.dx(2);
        let solve = solve_quasilinear(
            &law,
            &data,
            &g,
            0.0,
            0.15,
            dt,
            &QuasilinearParams::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(solve.history.converged, "history: {:?}", solve.history.distances);
        assert!(solve.history.iterations <= 12);
        let ratios = &solve.history.ratios;
        assert!(!ratios.is_empty());
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        assert!(median < 1.0, "median ratio {median}");
        assert!(*ratios.last().unwrap() <= 0.75, "final ratio {}", ratios.last().unwrap());
    }

    #[test]
    fn fixed_point_certificate() {
        let g = Grid::boxed(1.0, 1.0, [6, 6, 7]).unwrap();
        let law = registry::kerr_default();
        let data = ProblemData::homogeneous(interior_bump(&g, 5e-2));
        let dt = 0.3 * g.dx(2);
        let params = QuasilinearParams { tol: 1e-11, ..Default::default() };
        let solve =
            solve_quasilinear(&law, &data, &g, 0.0, 0.1, dt, &params, &SolveOptions::default())
                .unwrap();
        assert!(solve.history.converged);
        let reapplied =
            picard_step(&law, &solve.trajectory, &data, &SolveOptions::default()).unwrap();
        let d = trajectory_distance(&reapplied, &solve.trajectory, 2).unwrap();
        let scale = solve.history.iterate_norms[0].max(1.0);
        assert!(d <= 2.0 * params.tol * scale, "certificate distance {d}");
    }

    #[test]
    fn seed_jets_match_solution_jet() {
        // The extension seed reproduces the solution jet: with an FD step
        // small enough that the spectral cutoff sits on its plateau for
        // every mode, the order-2 one-sided differences are exact on the
        // truncated Taylor polynomial.
        let g = Grid::boxed(1.0, 1.0, [8, 8, 9]).unwrap();
        let law = registry::kerr_default();
        let u0 = interior_bump(&g, 0.05);
        let f_jets: Vec<Field6> = vec![];
        let jet = nonlinear_solution_jet(&g, 3, 0.0, &law, &u0, &f_jets).unwrap();
        let ext = crate::extension::extend_jet_with_tail_tol(&g, &jet.entries, 1.0).unwrap();
        let dt = 0.002;
        let states: Vec<Field6> = (0..5).map(|n| ext.sample(n as f64 * dt)).collect();
        for (p, entry) in jet.entries.iter().enumerate() {
            let fd = norms::fd_time_jet_at_start(&states, dt, p);
            let diff = Field6::linear_combination(1.0, &fd, -1.0, entry);
            let scale = entry.max_abs().max(1.0);
            assert!(
                diff.max_abs() / scale <= 1e-8,
                "order {p}: defect {}",
                diff.max_abs() / scale
            );
        }
    }

    #[test]
    fn data_quantity_zero_and_scaling() {
        let g = Grid::boxed(1.0, 1.0, [6, 6, 7]).unwrap();
        let zero = ProblemData::homogeneous(Field6::zeros(&g));
        assert_eq!(data_quantity(&zero, &g, 0.0, 0.2, 0.05, 2).unwrap(), 0.0);

        let mk = |amp: f64| ProblemData {
            u0: interior_bump(&g, amp),
            f: SpaceTimeFn::analytic(move |t, x| {
                let v = amp * (t + x[0]).sin();
                [v, 0.0, 0.0, 0.0, v, 0.0]
            }),
            g_bottom: crate::linear::BoundaryFn::analytic(move |t, x| {
                let v = amp * (t * 2.0 + x[1]).cos();
                [v, -v, 0.0]
            }),
            g_top: crate::linear::BoundaryFn::Zero,
        };
        let d1 = data_quantity(&mk(1.0), &g, 0.0, 0.2, 0.05, 2).unwrap();
        let d3 = data_quantity(&mk(3.0), &g, 0.0, 0.2, 0.05, 2).unwrap();
        assert!((d3 / d1 - 9.0).abs() < 1e-9, "quadratic scaling: {}", d3 / d1);
    }

    #[test]
    fn data_quantity_monotone_in_k() {
        let g = Grid::boxed(1.0, 1.0, [7, 7, 8]).unwrap();
        let data = ProblemData {
            u0: interior_bump(&g, 0.5),
            f: SpaceTimeFn::analytic(|t, x| {
                let v = (t + x[0] + x[2]).sin();
                [v, 0.0, v, 0.0, 0.0, 0.0]
            }),
            g_bottom: crate::linear::BoundaryFn::Zero,
            g_top: crate::linear::BoundaryFn::Zero,
        };
        let d1 = data_quantity(&data, &g, 0.0, 0.2, 0.05, 1).unwrap();
        let d2 = data_quantity(&data, &g, 0.0, 0.2, 0.05, 2).unwrap();
        let d3 = data_quantity(&data, &g, 0.0, 0.2, 0.05, 3).unwrap();
        assert!(d1 <= d2 && d2 <= d3);
    }

    #[test]
    fn lipschitz_envelope_constant_and_monotone() {
        let g = Grid::boxed(1.0, 1.0, [6, 6, 7]).unwrap();
        let c = 0.7;
        let traj = Trajectory {
            grid: g.clone(),
            t0: 0.0,
            dt: 0.1,
            steps: 3,
            states: (0..=3)
                .map(|_| Field6::sample(&g, |_| [c, 0.0, 0.0, 0.0, 0.0, 0.0]))
                .collect(),
            stored_indices: (0..=3).collect(),
            series: Default::default(),
        };
        let omega = lipschitz_envelope(&traj);
        for v in &omega {
            assert!((v - c).abs() < 1e-12);
        }
        // Growing linear-in-x states: the envelope is the running sup.
        let traj2 = Trajectory {
            states: (0..=3)
                .map(|n| {
                    let s = n as f64 * 0.5;
                    Field6::sample(&g, move |x| [s * x[0], 0.0, 0.0, 0.0, 0.0, 0.0])
                })
                .collect(),
            ..traj
        };
        let omega2 = lipschitz_envelope(&traj2);
        for w in omega2.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn select_parameters_formulas() {
        let c = RunConstants::default();
        let sel = select_parameters(&c, 0.5, 0.1, 0.2, 1.0, 3, 0.4);
        assert!(sel.radius >= (32.0f64).sqrt() * 0.5);
        assert!(sel.tau > 0.0 && sel.tau <= 1.0);
        assert!(sel.gamma >= 1.0);
        // tau must respect the kappa ball bound.
        assert!(sel.tau <= 0.1 / (2.0 * c.c_s * sel.radius) + 1e-12);
    }

    #[test]
    fn continuation_restart_matches_single_run() {
        let g = Grid::boxed(1.0, 1.0, [6, 6, 7]).unwrap();
        let law = registry::kerr_default();
        let data = ProblemData::homogeneous(interior_bump(&g, 1e-2));
        let dt = 0.25 * g.dx(2);
        let params = QuasilinearParams { tol: 1e-12, ..Default::default() };
        let opts = SolveOptions::default();
        let mon = MonitorConfig::default();
        let tau = 0.08;
        let (one, _) =
            continue_maximal(&law, &data, &g, 0.0, 2.0 * tau, tau, dt, &params, &opts, &mon)
                .unwrap();
        // Chain manually: run to tau, then restart from the final state.
        let (first, _) =
            continue_maximal(&law, &data, &g, 0.0, tau, tau, dt, &params, &opts, &mon).unwrap();
        let restart_data = ProblemData {
            u0: first.last().unwrap().final_state().clone(),
            f: data.f.clone(),
            g_bottom: data.g_bottom.clone(),
            g_top: data.g_top.clone(),
        };
        let (second, _) = continue_maximal(
            &law,
            &restart_data,
            &g,
            first.last().unwrap().final_time(),
            2.0 * tau,
            tau,
            dt,
            &params,
            &opts,
            &mon,
        )
        .unwrap();
        let a = one.last().unwrap().final_state();
        let b = second.last().unwrap().final_state();
        let mut worst = 0.0f64;
        for (x, y) in a.data.iter().zip(b.data.iter()) {
            worst = worst.max((x - y).abs());
        }
        assert!(worst <= 1e-12, "restart mismatch {worst}");
    }

    #[test]
    fn continuation_linear_reaches_target() {
        let g = Grid::boxed(1.0, 1.0, [6, 6, 7]).unwrap();
        let law = registry::linear_default();
        let data = ProblemData::homogeneous(interior_bump(&g, 0.1));
        let dt = 0.25 * g.dx(2);
        let (segs, rep) = continue_maximal(
            &law,
            &data,
            &g,
            0.0,
            0.3,
            0.1,
            dt,
            &QuasilinearParams::default(),
            &SolveOptions::default(),
            &MonitorConfig::default(),
        )
        .unwrap();
        assert!(rep.triggered.is_none());
        assert!((rep.t_stop - 0.3).abs() < 1e-12);
        assert_eq!(segs.len(), 3);
        for w in rep.omega.windows(2) {
            assert!(w[1] >= w[0] - 1e-15);
        }
    }
}
