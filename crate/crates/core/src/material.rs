//! Material laws: the triple `(theta, sigma, zeta)` with derivative access.
//!
//! Every registry law is written once, generically over a scalar ring, and
//! evaluated either with `f64` (pointwise coefficients) or with truncated
//! Taylor scalars (time-jet composition). That makes the high-order jets of
//! `chi(u(t))`, `sigma(u(t))` and `zeta(tr_t u^1(t))` exact without any
//! hard-coded chain-rule constants.

use crate::alg::{Mat3, Mat6, Vec3, Vec6};
use crate::error::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// Cap on truncated-Taylor lengths; jet orders above this are rejected.
pub const MAX_JET_LEN: usize = 9;

/// Scalar ring abstraction shared by pointwise and jet evaluation.
pub trait LawScalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn scale(&self, c: f64) -> Self;
}

impl LawScalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
}

/// Truncated Taylor scalar: coefficients of `t^k` with exact-zero tail.
///
/// Products keep all coefficients up to [`MAX_JET_LEN`]; reading coefficient
/// `k` of a composition is exact as long as the inputs carry their first `k`
/// coefficients, which is all the jet recursions ever need.
#[derive(Debug, Clone, PartialEq)]
pub struct Taylor {
    pub c: Vec<f64>,
}

impl Taylor {
    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }

    /// Builds a Taylor scalar from derivative values `d_k = f^(k)(0)`.
    pub fn from_derivatives(derivs: &[f64]) -> Self {
        let mut c = Vec::with_capacity(derivs.len());
        let mut fact = 1.0;
        for (k, d) in derivs.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            c.push(d / fact);
        }
        Taylor { c }
    }

    /// Derivative value `f^(k)(0) = k! c_k`.
    pub fn derivative(&self, k: usize) -> f64 {
        let mut fact = 1.0;
        for i in 1..=k {
            fact *= i as f64;
        }
        self.coeff(k) * fact
    }
}

impl Add for Taylor {
    type Output = Taylor;
    fn add(self, rhs: Taylor) -> Taylor {
        let n = self.c.len().max(rhs.c.len());
        let c = (0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect();
        Taylor { c }
    }
}

impl Sub for Taylor {
    type Output = Taylor;
    fn sub(self, rhs: Taylor) -> Taylor {
        let n = self.c.len().max(rhs.c.len());
        let c = (0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect();
        Taylor { c }
    }
}

impl Mul for Taylor {
    type Output = Taylor;
    fn mul(self, rhs: Taylor) -> Taylor {
        let n = (self.c.len() + rhs.c.len()).saturating_sub(1).min(MAX_JET_LEN);
        let mut c = vec![0.0; n.max(1)];
        for (i, a) in self.c.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in rhs.c.iter().enumerate() {
                if i + j < c.len() {
                    c[i + j] += a * b;
                }
            }
        }
        Taylor { c }
    }
}

impl Neg for Taylor {
    type Output = Taylor;
    fn neg(self) -> Taylor {
        Taylor { c: self.c.into_iter().map(|x| -x).collect() }
    }
}

impl LawScalar for Taylor {
    fn constant(c: f64) -> Self {
        Taylor { c: vec![c] }
    }
    fn scale(&self, c: f64) -> Self {
        Taylor { c: self.c.iter().map(|x| x * c).collect() }
    }
}

/// The admissible open convex state set `U`, with a distance evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DomainU {
    /// Full-state ball `{ |u| < radius }`.
    Ball { radius: f64 },
    /// Constraint on the electric block only: `{ |E| < radius }`.
    ElectricBall { radius: f64 },
}

impl DomainU {
    /// Signed distance to the boundary of `U` (positive inside).
    pub fn distance(&self, u: &Vec6) -> f64 {
        match self {
            DomainU::Ball { radius } => radius - u.norm(),
            DomainU::ElectricBall { radius } => {
                radius - Vec3::new(u[0], u[1], u[2]).norm()
            }
        }
    }

    pub fn contains(&self, u: &Vec6) -> bool {
        self.distance(u) > 0.0
    }

    /// Radius of the tangential trace set `B_1 U` (image of `U` under the
    /// electric tangential trace).
    pub fn trace_radius(&self) -> f64 {
        match self {
            DomainU::Ball { radius } | DomainU::ElectricBall { radius } => *radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum LawKind {
    /// `theta(u) = u`, `sigma = 0`, `zeta = I`.
    Linear,
    /// Kerr-type instantaneous nonlinearity
    /// `theta_e(E) = E + alpha |E|^2 E` with boundary conductivity
    /// `zeta(xi) = I + beta xi xi^T`.
    Kerr { alpha: f64, beta: f64 },
    /// Anisotropic linear demo with constant conductivity: exercises
    /// `sigma != 0`, an axis-weighted permittivity, a smooth spatial
    /// modulation, and a scaled boundary coefficient.
    AnisoDemo { eps_axis: f64, mu: f64, sigma_e: f64, zeta0: f64, x_mod: f64 },
}

/// A material law from the registry: `theta`, `chi = d theta / du`, `sigma`,
/// boundary conductivity `zeta`, positivity constant `eta`, and the state
/// domain `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialLaw {
    pub name: String,
    pub eta: f64,
    pub domain: DomainU,
    kind: LawKind,
}

impl MaterialLaw {
    /// Highest jet order the analytic derivative closures are validated for.
    pub fn max_derivative_order(&self) -> usize {
        MAX_JET_LEN - 1
    }

    /// True if `chi`, `sigma` and `zeta` are all state-independent.
    pub fn is_linear(&self) -> bool {
        matches!(self.kind, LawKind::Linear | LawKind::AnisoDemo { .. })
    }

    /// True if `zeta` depends on the boundary trace.
    pub fn zeta_is_nonlinear(&self) -> bool {
        match self.kind {
            LawKind::Kerr { beta, .. } => beta != 0.0,
            _ => false,
        }
    }

    /// `theta(x, u)`: the instantaneous constitutive map.
    pub fn theta(&self, _x: &[f64; 3], u: &Vec6) -> Vec6 {
        match &self.kind {
            LawKind::Linear => *u,
            LawKind::Kerr { alpha, .. } => {
                let e = Vec3::new(u[0], u[1], u[2]);
                let te = e + *alpha * e.norm_squared() * e;
                Vec6::new(te[0], te[1], te[2], u[3], u[4], u[5])
            }
            LawKind::AnisoDemo { eps_axis, mu, x_mod, .. } => {
                let s = 1.0 + x_mod * spatial_profile(_x);
                Vec6::new(
                    s * (1.0 + eps_axis) * u[0],
                    s * u[1],
                    s * u[2],
                    mu * u[3],
                    mu * u[4],
                    mu * u[5],
                )
            }
        }
    }

    /// Generic `chi(x, u)`; rows/columns ordered as `(E, H)`.
    pub fn chi_generic<S: LawScalar>(&self, x: &[f64; 3], u: &[S; 6]) -> [[S; 6]; 6] {
        let mut m: [[S; 6]; 6] =
            std::array::from_fn(|_| std::array::from_fn(|_| S::constant(0.0)));
        match &self.kind {
            LawKind::Linear => {
                for i in 0..6 {
                    m[i][i] = S::constant(1.0);
                }
            }
            LawKind::Kerr { alpha, .. } => {
                // chi_e = I + alpha (|E|^2 I + 2 E E^T), chi_m = I.
                let e2 = u[0].clone() * u[0].clone()
                    + u[1].clone() * u[1].clone()
                    + u[2].clone() * u[2].clone();
                for i in 0..3 {
                    for j in 0..3 {
                        let outer = (u[i].clone() * u[j].clone()).scale(2.0 * alpha);
                        m[i][j] = if i == j {
                            S::constant(1.0) + e2.scale(*alpha) + outer
                        } else {
                            outer
                        };
                    }
                    m[i + 3][i + 3] = S::constant(1.0);
                }
            }
            LawKind::AnisoDemo { eps_axis, mu, x_mod, .. } => {
                let s = 1.0 + x_mod * spatial_profile(x);
                m[0][0] = S::constant(s * (1.0 + eps_axis));
                m[1][1] = S::constant(s);
                m[2][2] = S::constant(s);
                for i in 3..6 {
                    m[i][i] = S::constant(*mu);
                }
            }
        }
        m
    }

    /// Generic `sigma(x, u)`; the lower-right block is zero by construction.
    pub fn sigma_generic<S: LawScalar>(&self, _x: &[f64; 3], _u: &[S; 6]) -> [[S; 6]; 6] {
        let mut m: [[S; 6]; 6] =
            std::array::from_fn(|_| std::array::from_fn(|_| S::constant(0.0)));
        if let LawKind::AnisoDemo { sigma_e, .. } = &self.kind {
            for i in 0..3 {
                m[i][i] = S::constant(*sigma_e);
            }
        }
        m
    }

    /// Generic boundary conductivity `zeta(x, xi)` for tangential `xi`.
    pub fn zeta_generic<S: LawScalar>(&self, _x: &[f64; 3], xi: &[S; 3]) -> [[S; 3]; 3] {
        let mut m: [[S; 3]; 3] =
            std::array::from_fn(|_| std::array::from_fn(|_| S::constant(0.0)));
        match &self.kind {
            LawKind::Linear => {
                for i in 0..3 {
                    m[i][i] = S::constant(1.0);
                }
            }
            LawKind::Kerr { beta, .. } => {
                for i in 0..3 {
                    for j in 0..3 {
                        let outer = (xi[i].clone() * xi[j].clone()).scale(*beta);
                        m[i][j] = if i == j { S::constant(1.0) + outer } else { outer };
                    }
                }
            }
            LawKind::AnisoDemo { zeta0, .. } => {
                for i in 0..3 {
                    m[i][i] = S::constant(*zeta0);
                }
            }
        }
        m
    }

    /// Pointwise `chi(x, u)` as a matrix.
    pub fn chi(&self, x: &[f64; 3], u: &Vec6) -> Mat6 {
        let ua: [f64; 6] = std::array::from_fn(|i| u[i]);
        let m = self.chi_generic::<f64>(x, &ua);
        Mat6::from_fn(|i, j| m[i][j])
    }

    /// Pointwise `sigma(x, u)` as a matrix.
    pub fn sigma(&self, x: &[f64; 3], u: &Vec6) -> Mat6 {
        let ua: [f64; 6] = std::array::from_fn(|i| u[i]);
        let m = self.sigma_generic::<f64>(x, &ua);
        Mat6::from_fn(|i, j| m[i][j])
    }

    /// Pointwise `zeta(x, xi)` as a matrix.
    pub fn zeta(&self, x: &[f64; 3], xi: &Vec3) -> Mat3 {
        let xa: [f64; 3] = std::array::from_fn(|i| xi[i]);
        let m = self.zeta_generic::<f64>(x, &xa);
        Mat3::from_fn(|i, j| m[i][j])
    }

    /// Directional derivative `d zeta(x, xi)[v]`.
    pub fn dzeta(&self, _x: &[f64; 3], xi: &Vec3, v: &Vec3) -> Mat3 {
        match &self.kind {
            LawKind::Kerr { beta, .. } => {
                *beta * (v * xi.transpose() + xi * v.transpose())
            }
            _ => Mat3::zeros(),
        }
    }

    /// Signed distance of a tangential trace to the boundary of `B_1 U`.
    pub fn trace_domain_distance(&self, xi: &Vec3) -> f64 {
        self.domain.trace_radius() - xi.norm()
    }
}

/// Smooth spatial modulation used by the anisotropic demo law.
fn spatial_profile(x: &[f64; 3]) -> f64 {
    0.5 * (1.0 - (std::f64::consts::TAU * x[2]).cos())
}

/// Validation report for a material law (sampled checks).
#[derive(Debug, Clone, Serialize)]
pub struct LawValidation {
    pub samples: usize,
    pub chi_symmetry_defect: f64,
    pub min_eig_chi: f64,
    pub min_eig_zeta: f64,
    pub max_jacobian_defect: f64,
    pub zeta_tangentiality_defect: f64,
}

/// Samples the law over `U` and the boundary trace set and checks the
/// structural requirements: symmetry and `eta`-positivity of `chi` and
/// `zeta`, tangentiality of `zeta`, and agreement of `chi` with the
/// finite-difference Jacobian of `theta`.
pub fn validate_material_law(
    law: &MaterialLaw,
    sample_count: usize,
    seed: u64,
) -> Result<LawValidation> {
    assert!(sample_count >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LawValidation {
        samples: sample_count,
        chi_symmetry_defect: 0.0,
        min_eig_chi: f64::INFINITY,
        min_eig_zeta: f64::INFINITY,
        max_jacobian_defect: 0.0,
        zeta_tangentiality_defect: 0.0,
    };
    let r = law.domain.trace_radius();
    for _ in 0..sample_count {
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let u = sample_state(&mut rng, &law.domain);
        let chi = law.chi(&x, &u);
        report.chi_symmetry_defect =
            report.chi_symmetry_defect.max((chi - chi.transpose()).abs().max());
        report.min_eig_chi = report.min_eig_chi.min(crate::alg::min_eig_sym6(&chi));

        // chi against the central-difference Jacobian of theta. The step and
        // the defect both scale with the state magnitude to keep cancellation
        // error bounded over large admissible sets.
        let scale = 1.0 + u.amax();
        let h = 1e-6 * scale;
        let mut defect = 0.0f64;
        for col in 0..6 {
            let mut up = u;
            let mut dn = u;
            up[col] += h;
            dn[col] -= h;
            let fd = (law.theta(&x, &up) - law.theta(&x, &dn)) / (2.0 * h);
            for row in 0..6 {
                defect = defect.max((fd[row] - chi[(row, col)]).abs() / scale);
            }
        }
        report.max_jacobian_defect = report.max_jacobian_defect.max(defect);

        // Boundary checks on the flat face, nu = -e3, tangential xi.
        let nu = Vec3::new(0.0, 0.0, -1.0);
        let ang = rng.random_range(0.0..std::f64::consts::TAU);
        let rad = rng.random_range(0.0..0.9 * r);
        let xi = Vec3::new(rad * ang.cos(), rad * ang.sin(), 0.0);
        let xb = [x[0], x[1], 0.0];
        let z = law.zeta(&xb, &xi);
        report.min_eig_zeta = report
            .min_eig_zeta
            .min(restricted_min_eig(&z, &nu));
        for probe in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), xi] {
            let out = z * probe;
            report.zeta_tangentiality_defect =
                report.zeta_tangentiality_defect.max(out.dot(&nu).abs());
        }
    }

    let tol = 1e-7;
    if report.chi_symmetry_defect > tol {
        return Err(Error::LawInvalid {
            check: "chi symmetry",
            defect: report.chi_symmetry_defect,
            sample: vec![],
        });
    }
    if report.min_eig_chi < law.eta - tol {
        return Err(Error::LawInvalid {
            check: "chi positivity",
            defect: law.eta - report.min_eig_chi,
            sample: vec![],
        });
    }
    if report.min_eig_zeta < law.eta - tol {
        return Err(Error::LawInvalid {
            check: "zeta positivity",
            defect: law.eta - report.min_eig_zeta,
            sample: vec![],
        });
    }
    if report.max_jacobian_defect > 1e-6 {
        return Err(Error::LawInvalid {
            check: "chi = d theta / du",
            defect: report.max_jacobian_defect,
            sample: vec![],
        });
    }
    if report.zeta_tangentiality_defect > tol {
        return Err(Error::LawInvalid {
            check: "zeta tangentiality",
            defect: report.zeta_tangentiality_defect,
            sample: vec![],
        });
    }
    Ok(report)
}

/// Minimum of `w . zeta w / |w|^2` over tangential directions `w`.
fn restricted_min_eig(z: &Mat3, nu: &Vec3) -> f64 {
    // Two orthonormal tangent vectors for the flat face.
    let t1 = Vec3::new(1.0, 0.0, 0.0) - nu[0] * nu;
    let t1 = t1 / t1.norm();
    let t2 = nu.cross(&t1);
    let a = t1.dot(&(z * t1));
    let b = t1.dot(&(z * t2));
    let c = t2.dot(&(z * t2));
    // Eigenvalues of the restricted symmetric 2x2 form.
    let tr = a + c;
    let det = a * c - b * b;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    tr / 2.0 - disc
}

fn sample_state(rng: &mut ChaCha8Rng, domain: &DomainU) -> Vec6 {
    let r = domain.trace_radius();
    loop {
        let u = Vec6::from_fn(|_, _| rng.random_range(-r..r));
        let u = 0.95 * u;
        if domain.contains(&u) {
            return u;
        }
    }
}

/// Named registry of material laws with numeric parameters.
pub mod registry {
    use super::*;

    /// Numeric parameters accepted by the registry, all optional.
    #[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    pub struct LawParams {
        /// Kerr nonlinearity strength.
        pub alpha: f64,
        /// Boundary nonlinearity strength (`zeta = I + beta xi xi^T`).
        pub beta: f64,
        /// Radius of the electric-ball domain for the Kerr law.
        pub r_star: f64,
        /// Radius of the full-state ball for linear laws.
        pub radius: f64,
        /// Extra permittivity along the first axis (aniso demo).
        pub eps_axis: f64,
        /// Scalar permeability (aniso demo).
        pub mu: f64,
        /// Constant electric conductivity (aniso demo).
        pub sigma_e: f64,
        /// Scalar boundary conductivity (aniso demo).
        pub zeta0: f64,
        /// Amplitude of the smooth spatial modulation (aniso demo).
        pub x_mod: f64,
    }

    impl Default for LawParams {
        fn default() -> Self {
            LawParams {
                alpha: 1.0,
                beta: 1.0,
                r_star: 0.5,
                radius: 1e3,
                eps_axis: 0.5,
                mu: 1.0,
                sigma_e: 0.1,
                zeta0: 2.0,
                x_mod: 0.25,
            }
        }
    }

    /// Builds a law by registry name.
    pub fn build(name: &str, p: &LawParams) -> Result<MaterialLaw> {
        match name {
            "linear" => Ok(MaterialLaw {
                name: name.into(),
                eta: 1.0,
                domain: DomainU::Ball { radius: p.radius },
                kind: LawKind::Linear,
            }),
            "kerr" => Ok(MaterialLaw {
                name: name.into(),
                eta: 1.0,
                domain: DomainU::ElectricBall { radius: p.r_star },
                kind: LawKind::Kerr { alpha: p.alpha, beta: p.beta },
            }),
            "aniso-demo" => Ok(MaterialLaw {
                name: name.into(),
                eta: 1.0f64.min(p.mu).min(p.zeta0),
                domain: DomainU::Ball { radius: p.radius },
                kind: LawKind::AnisoDemo {
                    eps_axis: p.eps_axis,
                    mu: p.mu,
                    sigma_e: p.sigma_e,
                    zeta0: p.zeta0,
                    x_mod: p.x_mod,
                },
            }),
            other => Err(Error::ConfigInvalid(format!(
                "unknown material law {other:?}; registry has \"linear\", \"kerr\", \"aniso-demo\""
            ))),
        }
    }

    pub fn linear_default() -> MaterialLaw {
        build("linear", &LawParams::default()).unwrap()
    }

    pub fn kerr_default() -> MaterialLaw {
        build("kerr", &LawParams::default()).unwrap()
    }

    /// Kerr law with a linear boundary condition (`beta = 0`).
    pub fn kerr_linear_boundary() -> MaterialLaw {
        build("kerr", &LawParams { beta: 0.0, ..LawParams::default() }).unwrap()
    }

    pub fn aniso_default() -> MaterialLaw {
        build("aniso-demo", &LawParams::default()).unwrap()
    }
}
