//! Chart-based boundary flattening: transformed coefficients, boundary
//! operators, and machine-precision verification of the structural
//! identities the solver theory rests on.
//!
//! Each chart carries an analytic diffeomorphism flattening its boundary
//! patch to `{y3 = 0}`, smooth cutoffs, and the derived quantities `beta`,
//! `kappa`, and the block rotation `R`. The headline check is the boundary
//! identity `B^i = B2co + B0co b_i B1co`: the long assembled form and the
//! short conjugated form are computed independently and compared entrywise.
//!
//! Convention: the tangential entries of the rotation's third row carry the
//! pullback derivatives of the flattening map (the negatives of
//! `d_a phi_3`). With that orientation the conjugation identity
//! `B0co = R (omega Phi(kappa B0) + (1 - omega) B0co) R^T` holds for every
//! cutoff value, which is what makes the third coefficient matrix exactly
//! constant.

use crate::alg::{Mat3, Mat3x6, Mat6, Vec3, Vec6};
use crate::error::{Error, Result};
use crate::matrices::{constant_matrices, normal_cross_matrix, trace_matrix};
use serde::Serialize;

/// Smoothstep: 0 for `r <= 0`, 1 for `r >= 1`, C-infinity in between.
fn smoothstep(r: f64) -> f64 {
    let q = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let a = q(r);
    let b = q(1.0 - r);
    a / (a + b)
}

fn smoothstep_deriv(r: f64) -> f64 {
    if r <= 0.0 || r >= 1.0 {
        return 0.0;
    }
    let q = |x: f64| (-1.0 / x).exp();
    let dq = |x: f64| q(x) / (x * x);
    let a = q(r);
    let b = q(1.0 - r);
    let da = dq(r);
    let db = -dq(1.0 - r);
    (da * (a + b) - a * (da + db)) / ((a + b) * (a + b))
}

/// Radial plateau cutoff: 1 inside `r0`, 0 outside `r1`.
#[derive(Debug, Clone, Copy)]
pub struct RadialCutoff {
    pub r0: f64,
    pub r1: f64,
}

impl RadialCutoff {
    pub fn value(&self, y: &Vec3) -> f64 {
        let r = y.norm();
        smoothstep((self.r1 - r) / (self.r1 - self.r0))
    }

    pub fn gradient(&self, y: &Vec3) -> Vec3 {
        let r = y.norm();
        if r < 1e-12 || r <= self.r0 || r >= self.r1 {
            return Vec3::zeros();
        }
        let s = smoothstep_deriv((self.r1 - r) / (self.r1 - self.r0));
        -(s / (self.r1 - self.r0)) * (y / r)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ChartKind {
    /// Flat half-space patch, `phi = x`.
    Identity,
    /// Normal stretching `phi = (x1, x2, factor * x3)`.
    Stretch { factor: f64 },
    /// Spherical-cap boundary `x3 = sqrt(R^2 - x1^2 - x2^2)` with the domain
    /// above the cap; `phi3 = x3 - h(x')`.
    Hemisphere { radius: f64 },
    /// Rotated plane boundary; `phi = Q x` with `Q` a rotation taking the
    /// interior normal to `e3`.
    Tilted { q: Mat3 },
}

/// A boundary-flattening chart with analytic derivatives and cutoffs.
#[derive(Debug, Clone)]
pub struct Chart {
    pub name: String,
    kind: ChartKind,
    /// Lower bound for `|beta|`.
    pub tau: f64,
    /// Cutoff `omega` (equal to 1 on the core region K).
    pub omega: RadialCutoff,
    /// Cutoff `omega_tilde` (equal to 1 on the support of `omega`).
    pub omega_tilde: RadialCutoff,
    /// Partition cutoff `theta` in domain coordinates.
    pub theta: RadialCutoff,
}

impl Chart {
    pub fn phi(&self, x: &Vec3) -> Vec3 {
        match &self.kind {
            ChartKind::Identity => *x,
            ChartKind::Stretch { factor } => Vec3::new(x[0], x[1], factor * x[2]),
            ChartKind::Hemisphere { radius } => {
                let h = (radius * radius - x[0] * x[0] - x[1] * x[1]).sqrt();
                Vec3::new(x[0], x[1], x[2] - h)
            }
            ChartKind::Tilted { q } => q * x,
        }
    }

    pub fn phi_inv(&self, y: &Vec3) -> Vec3 {
        match &self.kind {
            ChartKind::Identity => *y,
            ChartKind::Stretch { factor } => Vec3::new(y[0], y[1], y[2] / factor),
            ChartKind::Hemisphere { radius } => {
                let h = (radius * radius - y[0] * y[0] - y[1] * y[1]).sqrt();
                Vec3::new(y[0], y[1], y[2] + h)
            }
            ChartKind::Tilted { q } => q.transpose() * y,
        }
    }

    /// Gradient of the flattening component `phi_3` at a domain point.
    pub fn grad_phi3(&self, x: &Vec3) -> Vec3 {
        match &self.kind {
            ChartKind::Identity => Vec3::new(0.0, 0.0, 1.0),
            ChartKind::Stretch { factor } => Vec3::new(0.0, 0.0, *factor),
            ChartKind::Hemisphere { radius } => {
                let h = (radius * radius - x[0] * x[0] - x[1] * x[1]).sqrt();
                Vec3::new(x[0] / h, x[1] / h, 1.0)
            }
            ChartKind::Tilted { q } => Vec3::new(q[(2, 0)], q[(2, 1)], q[(2, 2)]),
        }
    }

    /// Hessian of `phi_3` at a domain point.
    pub fn hess_phi3(&self, x: &Vec3) -> Mat3 {
        match &self.kind {
            ChartKind::Identity | ChartKind::Stretch { .. } | ChartKind::Tilted { .. } => {
                Mat3::zeros()
            }
            ChartKind::Hemisphere { radius } => {
                let h = (radius * radius - x[0] * x[0] - x[1] * x[1]).sqrt();
                let mut m = Mat3::zeros();
                for a in 0..2 {
                    for b in 0..2 {
                        let mut v = x[a] * x[b] / (h * h * h);
                        if a == b {
                            v += 1.0 / h;
                        }
                        m[(a, b)] = v;
                    }
                }
                m
            }
        }
    }

    /// Jacobian of the inverse map, `d(phi^{-1})_k / d y_j`.
    pub fn jac_inv(&self, y: &Vec3) -> Mat3 {
        match &self.kind {
            ChartKind::Identity => Mat3::identity(),
            ChartKind::Stretch { factor } => {
                Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 1.0 / factor))
            }
            ChartKind::Hemisphere { radius } => {
                let h = (radius * radius - y[0] * y[0] - y[1] * y[1]).sqrt();
                let mut m = Mat3::identity();
                m[(2, 0)] = -y[0] / h;
                m[(2, 1)] = -y[1] / h;
                m
            }
            ChartKind::Tilted { q } => q.transpose(),
        }
    }

    /// Outward unit normal of the domain patch at a boundary point.
    pub fn nu(&self, x: &Vec3) -> Vec3 {
        // The flattening direction points into the domain, so the outward
        // normal is the negated normalized gradient of phi_3.
        let g = self.grad_phi3(x);
        -g / g.norm()
    }

    /// `kappa = -grad(phi_3) . nu`, positive on the boundary patch.
    pub fn kappa(&self, x: &Vec3) -> f64 {
        self.grad_phi3(x).norm()
    }
}

/// Pointwise frame: the rotation, its inverse, derivatives, and cutoffs.
pub struct ChartFrame {
    pub y: Vec3,
    pub x: Vec3,
    pub beta: f64,
    pub omega: f64,
    pub omega_tilde: f64,
    pub r_hat: Mat3,
    pub r_hat_inv: Mat3,
    /// `d/dy_j` of `(R_hat^T)^{-1}`, for the zero-order correction term.
    pub d_rhat_t_inv: [Mat3; 3],
}

/// Evaluates the chart frame at a flattened point `y`.
pub fn frame(chart: &Chart, y: &Vec3) -> Result<ChartFrame> {
    let x = chart.phi_inv(y);
    let g3 = chart.grad_phi3(&x);
    let omega = chart.omega.value(y);
    let domega = chart.omega.gradient(y);
    let omega_tilde = chart.omega_tilde.value(y);
    // q_a = omega * Phi(d_a phi3); beta = omega Phi(d_3 phi3) + (1 - omega).
    let q1 = omega * g3[0];
    let q2 = omega * g3[1];
    let beta = omega * g3[2] + (1.0 - omega);
    if beta.abs() < chart.tau {
        return Err(Error::DegenerateChart { beta, tau: chart.tau, y: [y[0], y[1], y[2]] });
    }
    let s = beta.powf(-0.5);
    let m = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -q1, -q2, -beta);
    let r_hat = s * m;
    let r_hat_inv = r_hat.try_inverse().ok_or(Error::DegenerateChart {
        beta,
        tau: chart.tau,
        y: [y[0], y[1], y[2]],
    })?;

    // Derivatives of q_a and beta in y.
    let hess = chart.hess_phi3(&x);
    let jinv = chart.jac_inv(y);
    let mut dq = [[0.0f64; 3]; 2];
    let mut dbeta = [0.0f64; 3];
    for j in 0..3 {
        let col = Vec3::new(jinv[(0, j)], jinv[(1, j)], jinv[(2, j)]);
        let hcol = hess * col;
        for a in 0..2 {
            dq[a][j] = domega[j] * g3[a] + omega * hcol[a];
        }
        dbeta[j] = domega[j] * (g3[2] - 1.0) + omega * hcol[2];
    }
    let mut d_rhat_t_inv = [Mat3::zeros(); 3];
    let rti = r_hat_inv.transpose();
    for j in 0..3 {
        let mut dm = Mat3::zeros();
        dm[(2, 0)] = -dq[0][j];
        dm[(2, 1)] = -dq[1][j];
        dm[(2, 2)] = -dbeta[j];
        let dr = -0.5 * s / beta * dbeta[j] * m + s * dm;
        // d (R^T)^{-1} = -(R^T)^{-1} dR^T (R^T)^{-1}.
        d_rhat_t_inv[j] = -rti * dr.transpose() * rti;
    }
    Ok(ChartFrame { y: *y, x, beta, omega, omega_tilde, r_hat, r_hat_inv, d_rhat_t_inv })
}

/// Chart registry by name.
pub fn build_chart(name: &str) -> Result<Chart> {
    let omega = RadialCutoff { r0: 0.22, r1: 0.42 };
    let omega_tilde = RadialCutoff { r0: 0.45, r1: 0.75 };
    let theta = RadialCutoff { r0: 0.1, r1: 0.2 };
    let chart = match name {
        "half-space-identity" => Chart {
            name: name.into(),
            kind: ChartKind::Identity,
            tau: 0.5,
            omega,
            omega_tilde,
            theta,
        },
        "normal-stretch" => Chart {
            name: name.into(),
            kind: ChartKind::Stretch { factor: 2.0 },
            tau: 0.5,
            omega,
            omega_tilde,
            theta,
        },
        "hemisphere-graph" => Chart {
            name: name.into(),
            kind: ChartKind::Hemisphere { radius: 1.0 },
            tau: 0.5,
            omega,
            omega_tilde,
            theta,
        },
        "tilted-plane" => {
            // Rotation taking the interior normal m to e3.
            let m = Vec3::new(0.25, -0.15, 1.0).normalize();
            let t1 = Vec3::new(1.0, 0.0, 0.0) - m[0] * m;
            let t1 = t1.normalize();
            let t2 = m.cross(&t1);
            let q = Mat3::from_rows(&[t1.transpose(), t2.transpose(), m.transpose()]);
            Chart {
                name: name.into(),
                kind: ChartKind::Tilted { q },
                tau: 0.5,
                omega,
                omega_tilde,
                theta,
            }
        }
        other => {
            return Err(Error::ConfigInvalid(format!(
                "unknown chart {other:?}; registry has \"half-space-identity\", \
                 \"normal-stretch\", \"hemisphere-graph\", \"tilted-plane\""
            )))
        }
    };
    validate_chart(&chart)?;
    Ok(chart)
}

pub const CHART_REGISTRY: [&str; 4] =
    ["half-space-identity", "normal-stretch", "hemisphere-graph", "tilted-plane"];

fn validate_chart(chart: &Chart) -> Result<()> {
    // beta bound and invertibility over a sample grid of V.
    for iy in -4i32..=4 {
        for jy in -4i32..=4 {
            for ky in 0i32..=4 {
                let y = Vec3::new(iy as f64 * 0.11, jy as f64 * 0.11, ky as f64 * 0.11);
                let f = frame(chart, &y)?;
                let _ = f;
            }
        }
    }
    // kappa > 0 on boundary samples.
    for iy in -4i32..=4 {
        for jy in -4i32..=4 {
            let y = Vec3::new(iy as f64 * 0.1, jy as f64 * 0.1, 0.0);
            let x = chart.phi_inv(&y);
            if chart.kappa(&x) <= 0.0 {
                return Err(Error::DegenerateChart {
                    beta: chart.kappa(&x),
                    tau: 0.0,
                    y: [y[0], y[1], y[2]],
                });
            }
        }
    }
    Ok(())
}

/// Interior coefficients transformed at one sample point.
#[derive(Debug, Clone)]
pub struct InteriorSample {
    pub y: Vec3,
    pub a0i: Mat6,
    pub a1i: Mat6,
    pub a2i: Mat6,
    /// Always the constant third matrix; kept for completeness.
    pub a3i: Mat6,
    pub di: Mat6,
}

/// Summary of the interior-transform invariants over the sample set.
#[derive(Debug, Clone, Serialize)]
pub struct InteriorSummary {
    pub samples: usize,
    pub a0_symmetry_defect: f64,
    pub min_eig_a0: f64,
    /// Worst least-squares residual of `A_j^i` in the span of the constant
    /// matrices.
    pub span_residual: f64,
    /// `eta * min_eig(R R^T)` lower bound witnessed at each sample.
    pub congruence_bound_defect: f64,
}

/// Transforms interior coefficients at the given points per the localized
/// definitions and revalidates symmetry/positivity.
pub fn transform_coefficients(
    chart: &Chart,
    a0: &dyn Fn(&Vec3) -> Mat6,
    d: &dyn Fn(&Vec3) -> Mat6,
    eta: f64,
    points: &[Vec3],
) -> Result<(Vec<InteriorSample>, InteriorSummary)> {
    let mats = constant_matrices();
    let mut out = Vec::with_capacity(points.len());
    let mut summary = InteriorSummary {
        samples: points.len(),
        a0_symmetry_defect: 0.0,
        min_eig_a0: f64::INFINITY,
        span_residual: 0.0,
        congruence_bound_defect: 0.0,
    };
    for y in points {
        let f = frame(chart, y)?;
        let r6 = block_diag(&f.r_hat);
        let a0_mid = f.omega * a0(&f.x) + (1.0 - f.omega) * eta * Mat6::identity();
        let a0i = r6 * a0_mid * r6.transpose();

        // First-order coefficients for the two tangential directions.
        let jac = chart_jacobian(chart, &f.x);
        let mut aji = [Mat6::zeros(); 2];
        for (jdir, out_a) in aji.iter_mut().enumerate() {
            let mut mid = Mat6::zeros();
            for k in 0..3 {
                mid += jac[(jdir, k)] * mats.aco[k];
            }
            let mixed = f.omega * mid + (1.0 - f.omega) * mats.aco[2];
            *out_a = r6 * mixed * r6.transpose();
        }
        let a3i = mats.aco[2];

        // Zero-order term with the rotation-derivative correction.
        let mut di = f.omega * (r6 * d(&f.x) * r6.transpose());
        let all_aji = [aji[0], aji[1], a3i];
        for j in 0..3 {
            let d_rt_inv6 = block_diag(&f.d_rhat_t_inv[j]);
            let rt6 = block_diag(&f.r_hat).transpose();
            di -= all_aji[j] * d_rt_inv6 * rt6;
        }

        // Invariants.
        summary.a0_symmetry_defect =
            summary.a0_symmetry_defect.max((a0i - a0i.transpose()).abs().max());
        let min_eig = crate::alg::min_eig_sym6(&a0i);
        summary.min_eig_a0 = summary.min_eig_a0.min(min_eig);
        let rrt = f.r_hat * f.r_hat.transpose();
        let bound = eta * crate::alg::min_eig_sym3(&rrt);
        summary.congruence_bound_defect =
            summary.congruence_bound_defect.max((bound - min_eig).max(0.0));
        if min_eig <= 0.0 {
            return Err(Error::PositivityLost { min_eig });
        }
        for a in &aji {
            summary.span_residual = summary.span_residual.max(span_residual(&mats.aco, a));
        }

        out.push(InteriorSample { y: *y, a0i, a1i: aji[0], a2i: aji[1], a3i, di });
    }
    Ok((out, summary))
}

/// Least-squares residual of `A` against the span of the constant matrices
/// (which are Frobenius-orthogonal with norm 2).
fn span_residual(aco: &[Mat6; 3], a: &Mat6) -> f64 {
    let mut proj = Mat6::zeros();
    for base in aco {
        let mu = (a.component_mul(base)).sum() / 4.0;
        proj += mu * base;
    }
    (a - proj).abs().max()
}

/// Jacobian `d phi_j / d x_k` of the full map.
fn chart_jacobian(chart: &Chart, x: &Vec3) -> Mat3 {
    match &chart.kind {
        ChartKind::Identity => Mat3::identity(),
        ChartKind::Stretch { factor } => Mat3::from_diagonal(&Vec3::new(1.0, 1.0, *factor)),
        ChartKind::Hemisphere { .. } => {
            let g3 = chart.grad_phi3(x);
            let mut m = Mat3::identity();
            m[(2, 0)] = g3[0];
            m[(2, 1)] = g3[1];
            m[(2, 2)] = g3[2];
            m
        }
        ChartKind::Tilted { q } => *q,
    }
}

fn block_diag(m: &Mat3) -> Mat6 {
    let mut out = Mat6::zeros();
    out.view_mut((0, 0), (3, 3)).copy_from(m);
    out.view_mut((3, 3), (3, 3)).copy_from(m);
    out
}

/// Boundary coefficients transformed at one point, with the identity check.
#[derive(Debug, Clone)]
pub struct BoundarySample {
    pub y: Vec3,
    pub b_i: Mat3,
    /// The boundary operator assembled by the long localized formula.
    pub b_long: Mat3x6,
    /// The short conjugated form `B2co + B0co b_i B1co`.
    pub b_short: Mat3x6,
    pub residual: f64,
}

/// Summary of the boundary transform: the identity residual is the module's
/// headline check.
#[derive(Debug, Clone, Serialize)]
pub struct BoundarySummary {
    pub samples: usize,
    pub max_identity_residual: f64,
    /// Worst residual of `B^i = R_hat Phi(kappa B) R^T` on the core region.
    pub core_form_residual: f64,
    /// Smallest tangential eigenvalue of `b_i` over the samples.
    pub min_eig_tangential: f64,
}

/// Transforms the boundary coefficient and verifies the operator identity by
/// computing both sides independently.
pub fn transform_boundary(
    chart: &Chart,
    b: &dyn Fn(&Vec3) -> Mat3,
    eta: f64,
    points: &[Vec3],
) -> Result<(Vec<BoundarySample>, BoundarySummary)> {
    let mats = constant_matrices();
    let mut out = Vec::with_capacity(points.len());
    let mut summary = BoundarySummary {
        samples: points.len(),
        max_identity_residual: 0.0,
        core_form_residual: 0.0,
        min_eig_tangential: f64::INFINITY,
    };
    for y in points {
        assert!(y[2].abs() < 1e-14, "boundary samples live on y3 = 0");
        let f = frame(chart, y)?;
        let nu = chart.nu(&f.x);
        let kappa = chart.kappa(&f.x);
        let b0 = trace_matrix(&nu);
        let ncross = normal_cross_matrix(&nu);
        let b_val = b(&f.x);

        let b_tilde = f.omega_tilde * (b_val / kappa) + (1.0 - f.omega_tilde) * eta * Mat3::identity();
        let p = kappa * b0;

        // Long formula.
        let b_op = assemble_b(&(-(ncross) * b_val * b0), &b0); // B = (-N b B0 | B0)
        let phi_kappa_b = kappa * b_op;
        let mut long_inner = Mat3x6::zeros();
        // omega * Phi(kappa B) Omega_i: the electric block picks another omega.
        let e_block = f.omega * f.omega * phi_kappa_b.view((0, 0), (3, 3)).into_owned();
        let h_block = f.omega * phi_kappa_b.view((0, 3), (3, 3)).into_owned();
        long_inner
            .view_mut((0, 0), (3, 3))
            .copy_from(&e_block);
        long_inner
            .view_mut((0, 3), (3, 3))
            .copy_from(&h_block);
        // (1 - omega) B2co.
        long_inner += (1.0 - f.omega) * mats.b2co;
        // omega (1 - omega) C_i with C_i = B0co b~ Phi(kappa B1)
        //                              + Phi(kappa B0) b~ B1co.
        let c_e = mats.b0co * b_tilde * p + p * b_tilde * mats.b0co;
        let mut c_i = Mat3x6::zeros();
        c_i.view_mut((0, 0), (3, 3)).copy_from(&c_e);
        long_inner += f.omega * (1.0 - f.omega) * c_i;
        // (1 - omega)^2 B0co b~ B1co.
        let mut tail = Mat3x6::zeros();
        tail.view_mut((0, 0), (3, 3))
            .copy_from(&(mats.b0co * b_tilde * mats.b0co));
        long_inner += (1.0 - f.omega) * (1.0 - f.omega) * tail;

        let r6t = block_diag(&f.r_hat).transpose();
        let b_long = f.r_hat * long_inner * r6t;

        // Short form.
        let rti = f.r_hat_inv.transpose();
        let b_i = rti * b_tilde * f.r_hat_inv;
        let b_short = mats.b2co + assemble_b(&(mats.b0co * b_i * mats.b0co), &Mat3::zeros());

        let residual = (b_long - b_short).abs().max();
        summary.max_identity_residual = summary.max_identity_residual.max(residual);

        // Core-region form.
        if f.omega > 1.0 - 1e-12 {
            let core = f.r_hat * phi_kappa_b * r6t;
            summary.core_form_residual =
                summary.core_form_residual.max((core - b_long).abs().max());
        }

        // Tangential positivity of b_i at the flat face (nu = -e3).
        let a = b_i[(0, 0)];
        let bb = b_i[(0, 1)];
        let cc = b_i[(1, 1)];
        let tr = a + cc;
        let det = a * cc - bb * bb;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        summary.min_eig_tangential = summary.min_eig_tangential.min(tr / 2.0 - disc);

        out.push(BoundarySample { y: *y, b_i, b_long, b_short, residual });
    }
    if summary.max_identity_residual > 1e-10 {
        return Err(Error::IdentityViolation {
            residual: summary.max_identity_residual,
            tol: 1e-10,
        });
    }
    Ok((out, summary))
}

/// A symmetric tangential boundary coefficient field adapted to a chart's
/// normal, used by the verification drivers.
pub fn sample_boundary_coefficient(chart: &Chart, x: &Vec3) -> Mat3 {
    let nu = chart.nu(x);
    let probe = if nu[0].abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let t1 = (probe - probe.dot(&nu) * nu).normalize();
    let t2 = nu.cross(&t1);
    let (a, c, off) = (1.3 + 0.2 * x[0].sin(), 1.1 + 0.1 * (x[1] * 2.0).cos(), 0.15);
    a * t1 * t1.transpose()
        + c * t2 * t2.transpose()
        + off * (t1 * t2.transpose() + t2 * t1.transpose())
}

/// Builds a 3x6 operator from its electric and magnetic blocks.
fn assemble_b(e_block: &Mat3, h_block: &Mat3) -> Mat3x6 {
    let mut m = Mat3x6::zeros();
    m.view_mut((0, 0), (3, 3)).copy_from(e_block);
    m.view_mut((0, 3), (3, 3)).copy_from(h_block);
    m
}

/// Transformed data at a point: `(u0^i, g^i, f^i)` per the localized
/// definitions, including the cutoff commutator term in `f^i`.
pub struct DataSample {
    pub y: Vec3,
    pub u0i: Vec6,
    pub gi: Vec3,
    pub fi: Vec6,
}

#[allow(clippy::too_many_arguments)]
pub fn transform_data(
    chart: &Chart,
    u0: &dyn Fn(&Vec3) -> Vec6,
    g: &dyn Fn(&Vec3) -> Vec3,
    h: &dyn Fn(&Vec3) -> Vec6,
    v: &dyn Fn(&Vec3) -> Vec6,
    points: &[Vec3],
) -> Result<Vec<DataSample>> {
    let mats = constant_matrices();
    let mut out = Vec::with_capacity(points.len());
    for y in points {
        let f = frame(chart, y)?;
        let theta = chart.theta.value(&f.x);
        let dtheta = chart.theta.gradient(&f.x);
        let r6 = block_diag(&f.r_hat);
        let rt_inv = r6
            .transpose()
            .try_inverse()
            .ok_or(Error::DegenerateChart { beta: f.beta, tau: chart.tau, y: [y[0], y[1], y[2]] })?;
        let u0i = rt_inv * (theta * u0(&f.x));
        let gi = if y[2].abs() < 1e-14 {
            let kappa = chart.kappa(&f.x);
            f.r_hat * (theta * kappa * g(&f.x))
        } else {
            Vec3::zeros()
        };
        let mut commutator = Vec6::zeros();
        for j in 0..3 {
            commutator += dtheta[j] * (mats.aco[j] * v(&f.x));
        }
        let fi = r6 * (theta * h(&f.x) + commutator);
        out.push(DataSample { y: *y, u0i, gi, fi });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn boundary_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), 0.0))
            .collect()
    }

    fn volume_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                    rng.random_range(0.0..0.4),
                )
            })
            .collect()
    }

    /// A symmetric tangential field on the chart's boundary patch.
    fn tangential_b(chart: &Chart) -> impl Fn(&Vec3) -> Mat3 + '_ {
        move |x: &Vec3| sample_boundary_coefficient(chart, x)
    }

    #[test]
    fn identity_chart_frame_values() {
        let chart = build_chart("half-space-identity").unwrap();
        let f = frame(&chart, &Vec3::new(0.05, -0.1, 0.1)).unwrap();
        assert!((f.beta - 1.0).abs() < 1e-15);
        let expect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!((f.r_hat - expect).abs().max() < 1e-15);
        let x = chart.phi_inv(&Vec3::new(0.2, 0.0, 0.0));
        assert!((chart.kappa(&x) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stretch_chart_beta_on_core() {
        let chart = build_chart("normal-stretch").unwrap();
        // Inside the plateau of omega, beta equals the stretching factor.
        let f = frame(&chart, &Vec3::new(0.05, 0.05, 0.1)).unwrap();
        assert!((f.beta - 2.0).abs() < 1e-15);
        // Far outside, beta relaxes to 1.
        let f2 = frame(&chart, &Vec3::new(0.43, 0.0, 0.0)).unwrap();
        assert!(f2.omega < 1e-12);
        assert!((f2.beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hemisphere_kappa_positive() {
        let chart = build_chart("hemisphere-graph").unwrap();
        for y in boundary_points(200, 3) {
            let x = chart.phi_inv(&y);
            assert!(chart.kappa(&x) > 0.0);
            // On the sphere patch, kappa = sqrt(1 + |grad h|^2) >= 1.
            assert!(chart.kappa(&x) >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn degenerate_chart_detected() {
        // A cutoff collapse cannot occur for registry charts, so force a
        // sign flip through tau.
        let mut chart = build_chart("half-space-identity").unwrap();
        chart.tau = 1.5;
        assert!(matches!(
            frame(&chart, &Vec3::new(0.0, 0.0, 0.1)),
            Err(Error::DegenerateChart { .. })
        ));
    }

    #[test]
    fn fundamental_trace_conjugation_identity() {
        // B0co = R ( omega Phi(kappa B0) + (1 - omega) B0co ) R^T for every
        // omega, the anchor of the whole construction.
        let mats = constant_matrices();
        for name in CHART_REGISTRY {
            let chart = build_chart(name).unwrap();
            for y in boundary_points(60, 7) {
                let f = frame(&chart, &y).unwrap();
                let nu = chart.nu(&f.x);
                let kappa = chart.kappa(&f.x);
                let inner = f.omega * (kappa * trace_matrix(&nu)) + (1.0 - f.omega) * mats.b0co;
                let got = f.r_hat * inner * f.r_hat.transpose();
                assert!(
                    (got - mats.b0co).abs().max() < 1e-13,
                    "{name} at {y:?}: defect {:.3e}",
                    (got - mats.b0co).abs().max()
                );
            }
        }
    }

    #[test]
    fn interior_transform_identity_chart() {
        let chart = build_chart("half-space-identity").unwrap();
        // Inside the omega plateau with A0 = I, D = 0.
        let pts: Vec<Vec3> = vec![Vec3::new(0.05, 0.0, 0.1), Vec3::new(-0.1, 0.08, 0.05)];
        let (samples, summary) = transform_coefficients(
            &chart,
            &|_| Mat6::identity(),
            &|_| Mat6::zeros(),
            1.0,
            &pts,
        )
        .unwrap();
        let mats = constant_matrices();
        for s in &samples {
            // A0i = R R^T, here diag(1,1,1,1,1,1) since R_hat = diag(1,1,-1).
            assert!((s.a0i - Mat6::identity()).abs().max() < 1e-14);
            // A1i, A2i are the conjugated constant matrices.
            let f = frame(&chart, &s.y).unwrap();
            let r6 = block_diag(&f.r_hat);
            for (a, base) in [(&s.a1i, mats.aco[0]), (&s.a2i, mats.aco[1])] {
                let expect = r6 * base * r6.transpose();
                assert!((a - expect).abs().max() < 1e-14);
            }
            // Constant rotation: the derivative correction vanishes.
            assert!(s.di.abs().max() < 1e-13, "Di = {:?}", s.di.abs().max());
        }
        assert!(summary.span_residual < 1e-12);
    }

    #[test]
    fn interior_transform_outside_support_scales_eta() {
        let chart = build_chart("half-space-identity").unwrap();
        let eta = 0.7;
        let pts = vec![Vec3::new(0.43, 0.0, 0.0)];
        let (samples, _) = transform_coefficients(
            &chart,
            &|_| 5.0 * Mat6::identity(),
            &|_| Mat6::zeros(),
            eta,
            &pts,
        )
        .unwrap();
        // omega = 0 there: A0i = eta R R^T = eta I for the identity chart.
        assert!((samples[0].a0i - eta * Mat6::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn interior_invariants_on_curved_charts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in CHART_REGISTRY {
            let chart = build_chart(name).unwrap();
            let pts = volume_points(150, 13);
            let a0 = |x: &Vec3| {
                let s = 1.0 + 0.3 * (x[0] * 2.0).sin() * (x[1]).cos();
                s * Mat6::identity()
            };
            let dmat = Mat6::from_fn(|i, j| 0.1 * ((i * 6 + j) as f64 * 0.37).sin());
            let d = move |_x: &Vec3| dmat;
            let (samples, summary) =
                transform_coefficients(&chart, &a0, &d, 0.7, &pts).unwrap();
            assert!(summary.a0_symmetry_defect < 1e-13, "{name}: {summary:?}");
            assert!(summary.span_residual < 1e-12, "{name}: {summary:?}");
            assert!(summary.min_eig_a0 > 0.0);
            // A3i is the constant matrix, bit-identical.
            let mats = constant_matrices();
            for s in &samples {
                assert_eq!(s.a3i, mats.aco[2]);
            }
            let _ = rng.random_range(0..2);
        }
    }

    #[test]
    fn boundary_identity_on_identity_chart() {
        let chart = build_chart("half-space-identity").unwrap();
        // omega = 1 region, b = I.
        let pts: Vec<Vec3> = vec![Vec3::new(0.05, 0.1, 0.0), Vec3::new(-0.12, 0.02, 0.0)];
        let (samples, summary) =
            transform_boundary(&chart, &|_| Mat3::identity(), 1.0, &pts).unwrap();
        assert!(summary.max_identity_residual <= 1e-13, "{summary:?}");
        for s in &samples {
            assert!(s.residual <= 1e-13);
        }
    }

    #[test]
    fn boundary_identity_across_registry() {
        for name in CHART_REGISTRY {
            let chart = build_chart(name).unwrap();
            let pts = boundary_points(120, 17);
            let b = tangential_b(&chart);
            let (_, summary) = transform_boundary(&chart, &b, 1.0, &pts).unwrap();
            assert!(
                summary.max_identity_residual <= 1e-10,
                "{name}: residual {:.3e}",
                summary.max_identity_residual
            );
            assert!(summary.core_form_residual <= 1e-12, "{name}: {summary:?}");
        }
    }

    #[test]
    fn boundary_congruence_positivity() {
        for name in CHART_REGISTRY {
            let chart = build_chart(name).unwrap();
            let eta = 0.9;
            let pts = boundary_points(80, 23);
            // b = eta * (tangential identity) extended by eta along nu keeps
            // the tangential form at exactly eta.
            let chart_ref = &chart;
            let b = move |x: &Vec3| {
                let nu = chart_nu(chart_ref, x);
                eta * (Mat3::identity() - nu * nu.transpose())
            };
            let (samples, summary) = transform_boundary(&chart, &b, eta, &pts).unwrap();
            for s in &samples {
                let f = frame(&chart, &s.y).unwrap();
                let rrt = f.r_hat * f.r_hat.transpose();
                let kappa = chart.kappa(&chart.phi_inv(&s.y));
                // b_i >= (eta / kappa) min_eig((R R^T)^{-1}) on the core;
                // outside it mixes with the eta extension, still positive.
                let bound = eta / kappa.max(1.0)
                    * (1.0 / crate::alg::spectral_norm_sym3(&rrt));
                assert!(
                    summary.min_eig_tangential >= 0.2 * bound - 1e-12,
                    "{name}: min eig {} vs bound {}",
                    summary.min_eig_tangential,
                    bound
                );
            }
            assert!(summary.min_eig_tangential > 0.0);
        }
    }

    fn chart_nu(chart: &Chart, x: &Vec3) -> Vec3 {
        chart.nu(x)
    }

    #[test]
    fn data_transform_examples() {
        let chart = build_chart("half-space-identity").unwrap();
        // theta == 1 near the origin; with the identity chart
        // u0i = (R^T)^{-1} u0.
        let u0 = |_: &Vec3| Vec6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let pts = vec![Vec3::new(0.02, 0.03, 0.05)];
        let samples = transform_data(
            &chart,
            &u0,
            &|_| Vec3::zeros(),
            &|_| Vec6::zeros(),
            &|_| Vec6::zeros(),
            &pts,
        )
        .unwrap();
        let rt_inv = block_diag(&Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0)))
            .transpose()
            .try_inverse()
            .unwrap();
        let expect = rt_inv * u0(&pts[0]);
        assert!((samples[0].u0i - expect).abs().max() < 1e-13);
        // g = 0 -> gi = 0 on the boundary.
        let bsamples = transform_data(
            &chart,
            &u0,
            &|_| Vec3::zeros(),
            &|_| Vec6::zeros(),
            &|_| Vec6::zeros(),
            &[Vec3::new(0.1, 0.0, 0.0)],
        )
        .unwrap();
        assert_eq!(bsamples[0].gi, Vec3::zeros());
    }

    #[test]
    fn two_chart_partition_reconstruction() {
        // Two overlapping flat charts whose theta cutoffs sum to one on a
        // small probe region; pulling the transformed data back must
        // reproduce u0 exactly.
        let mut c1 = build_chart("half-space-identity").unwrap();
        let mut c2 = build_chart("normal-stretch").unwrap();
        c1.theta = RadialCutoff { r0: 0.05, r1: 0.3 };
        c2.theta = c1.theta;
        let u0 = |x: &Vec3| {
            Vec6::new(
                (x[0] * 3.0).sin(),
                x[1],
                0.5,
                x[2] * x[2],
                (x[0] + x[1]).cos(),
                1.0,
            )
        };
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let x = Vec3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(0.0..0.2),
            );
            // Partition: theta1 = theta(x), theta2 = 1 - theta1 realized by
            // weighting the second chart's contribution.
            let th1 = c1.theta.value(&x);
            let th2 = 1.0 - th1;
            let y1 = c1.phi(&x);
            let y2 = c2.phi(&x);
            let s1 = transform_data(
                &c1,
                &u0,
                &|_| Vec3::zeros(),
                &|_| Vec6::zeros(),
                &|_| Vec6::zeros(),
                &[y1],
            )
            .unwrap();
            let f1 = frame(&c1, &y1).unwrap();
            let back1 = block_diag(&f1.r_hat).transpose() * s1[0].u0i;
            // Second piece: weight the full state by theta2 directly (its
            // chart transform and pullback cancel the rotation the same
            // way).
            let f2 = frame(&c2, &y2).unwrap();
            let r2t = block_diag(&f2.r_hat).transpose();
            let u0i2 = r2t.try_inverse().unwrap() * (th2 * u0(&x));
            let back2 = r2t * u0i2;
            let sum = back1 + back2;
            assert!(
                (sum - u0(&x)).abs().max() < 1e-12,
                "reconstruction defect {:?}",
                (sum - u0(&x)).abs().max()
            );
        }
    }
}
