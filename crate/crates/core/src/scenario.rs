//! Scenario configuration: the JSON schema shared with the CLI, the data
//! generator registry, and the manufactured solutions used by the
//! verification harnesses.

use crate::error::{Error, Result};
use crate::field::Field6;
use crate::grid::{Face, Grid};
use crate::linear::{
    AnalyticCoefficients, BoundaryFn, Integrator, LinearCoefficients, ProblemData, SolveOptions,
    SpaceTimeFn,
};
use crate::material::{registry, MaterialLaw};
use crate::matrices::constant_matrices;
use crate::quasilinear::{MonitorConfig, QuasilinearParams, RunConstants};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Scenario file: everything a run needs, schema-validated on load.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub law: LawConfig,
    pub data: DataConfig,
    pub solver: SolverConfig,
    pub monitors: MonitorsConfig,
    pub output: OutputConfig,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "unnamed".into(),
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            law: LawConfig::default(),
            data: DataConfig::default(),
            solver: SolverConfig::default(),
            monitors: MonitorsConfig::default(),
            output: OutputConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub l: f64,
    pub h: f64,
    pub n: [usize; 3],
    pub periodic3: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { l: 1.0, h: 1.0, n: [12, 12, 13], periodic3: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t0: f64,
    pub horizon: f64,
    /// Explicit step; when absent the step comes from the CFL number.
    pub dt: Option<f64>,
    pub cfl: f64,
    pub integrator: Integrator,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { t0: 0.0, horizon: 0.3, dt: None, cfl: 0.3, integrator: Integrator::Rk4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LawConfig {
    pub name: String,
    pub params: registry::LawParams,
}

impl Default for LawConfig {
    fn default() -> Self {
        LawConfig { name: "linear".into(), params: registry::LawParams::default() }
    }
}

/// Analytic data generators, keyed by `kind`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    /// Explicit initial value and forcing generators.
    Explicit {
        #[serde(default)]
        u0: FieldGen,
        #[serde(default)]
        f: FieldGen,
    },
    /// A manufactured solution; data, coefficients and the exact field come
    /// as one package.
    Manufactured {
        case: ManufacturedCase,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
}

fn default_amplitude() -> f64 {
    0.1
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Explicit { u0: FieldGen::default(), f: FieldGen::Zero }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ManufacturedCase {
    /// Trigonometric solution of the linear system with constant
    /// coefficients and impedance faces.
    Linear,
    /// The same shape driven through the Kerr law.
    Kerr,
    /// Affine-in-space, low-degree-in-time solution inside the scheme's
    /// exactness class.
    ExactAffine,
}

/// Field generators for explicit data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldGen {
    Zero,
    /// Gaussian bump applied to the listed components.
    GaussianBump {
        amplitude: f64,
        center: [f64; 3],
        width: f64,
        components: Vec<usize>,
    },
    /// Exact transport wave of the free system (fully periodic runs).
    PlaneWave { amplitude: f64, periods: usize },
    /// Time-constant pump forcing with a bump profile (a current source).
    Pump {
        amplitude: f64,
        center: [f64; 3],
        width: f64,
        components: Vec<usize>,
    },
}

impl Default for FieldGen {
    fn default() -> Self {
        FieldGen::GaussianBump {
            amplitude: 0.01,
            center: [0.5, 0.5, 0.5],
            width: 0.15,
            components: vec![0, 4],
        }
    }
}

impl FieldGen {
    fn validate(&self) -> Result<()> {
        match self {
            FieldGen::GaussianBump { components, width, .. }
            | FieldGen::Pump { components, width, .. } => {
                if components.iter().any(|&c| c >= 6) {
                    return Err(Error::ConfigInvalid(
                        "data.components entries must be in 0..6".into(),
                    ));
                }
                if *width <= 0.0 {
                    return Err(Error::ConfigInvalid("data.width must be positive".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn initial_field(&self, grid: &Grid) -> Field6 {
        match self {
            FieldGen::Zero => Field6::zeros(grid),
            FieldGen::GaussianBump { amplitude, center, width, components } => {
                let (a, c, w, comps) = (*amplitude, *center, *width, components.clone());
                Field6::sample(grid, move |x| {
                    let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2);
                    let v = a * (-r2 / (w * w)).exp();
                    let mut out = [0.0; 6];
                    for &ci in &comps {
                        out[ci] = v;
                    }
                    out
                })
            }
            FieldGen::PlaneWave { amplitude, periods } => {
                let (a, k) = (*amplitude, std::f64::consts::TAU * *periods as f64);
                Field6::sample(grid, move |x| {
                    let phase = (k * x[0]).cos();
                    [0.0, a * phase, 0.0, 0.0, 0.0, a * phase]
                })
            }
            FieldGen::Pump { .. } => Field6::zeros(grid),
        }
    }

    fn forcing(&self) -> SpaceTimeFn {
        match self {
            FieldGen::Zero | FieldGen::PlaneWave { .. } | FieldGen::GaussianBump { .. } => {
                match self {
                    FieldGen::Zero => SpaceTimeFn::Zero,
                    // A bump used as forcing is constant in time.
                    FieldGen::GaussianBump { amplitude, center, width, components } => {
                        pump_fn(*amplitude, *center, *width, components.clone())
                    }
                    _ => SpaceTimeFn::Zero,
                }
            }
            FieldGen::Pump { amplitude, center, width, components } => {
                pump_fn(*amplitude, *center, *width, components.clone())
            }
        }
    }
}

fn pump_fn(a: f64, c: [f64; 3], w: f64, comps: Vec<usize>) -> SpaceTimeFn {
    let comps2 = comps.clone();
    SpaceTimeFn::with_derivs(
        move |_t, x| {
            let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2);
            let v = a * (-r2 / (w * w)).exp();
            let mut out = [0.0; 6];
            for &ci in &comps {
                out[ci] = v;
            }
            out
        },
        move |_j, _t, _x| {
            let _ = &comps2;
            [0.0; 6]
        },
    )
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub m: usize,
    pub tol: f64,
    pub n_max: usize,
    pub radius: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa_tilde: f64,
    pub gamma: Option<f64>,
    /// Continuation leg length; absent means a single local solve.
    pub tau: Option<f64>,
    pub penalty: f64,
    pub compat_factor: f64,
    pub enforce_compat: bool,
    pub constants: RunConstants,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            m: 3,
            tol: 1e-10,
            n_max: 12,
            radius: None,
            kappa: None,
            kappa_tilde: 0.25,
            gamma: None,
            tau: None,
            penalty: 1.0,
            compat_factor: 200.0,
            enforce_compat: true,
            constants: RunConstants::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorsConfig {
    pub dist_fraction: f64,
    pub norm_factor: f64,
    pub kappa_tilde: f64,
}

impl Default for MonitorsConfig {
    fn default() -> Self {
        MonitorsConfig { dist_fraction: 0.25, norm_factor: 1e3, kappa_tilde: 0.25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<String>,
    pub series: Option<String>,
    pub snapshot_stride: usize,
}

/// A validated, executable scenario.
pub struct BuiltScenario {
    pub config: ScenarioConfig,
    pub grid: Grid,
    pub law: MaterialLaw,
    pub data: ProblemData,
    /// Linear coefficients for manufactured-linear runs.
    pub linear_coeffs: Option<Box<dyn LinearCoefficients + Send + Sync>>,
    /// Exact solution when manufactured.
    pub exact: Option<Arc<dyn Fn(f64, [f64; 3]) -> [f64; 6] + Send + Sync>>,
    pub dt: f64,
    pub params: QuasilinearParams,
    pub opts: SolveOptions,
    pub monitors: MonitorConfig,
}

/// Validates and assembles a scenario.
pub fn build(config: &ScenarioConfig) -> Result<BuiltScenario> {
    let grid = if config.grid.periodic3 {
        Grid::periodic(config.grid.l, config.grid.h, config.grid.n)?
    } else {
        Grid::boxed(config.grid.l, config.grid.h, config.grid.n)?
    };
    if config.time.horizon <= 0.0 {
        return Err(Error::ConfigInvalid("time.horizon must be positive".into()));
    }
    let law = registry::build(&config.law.name, &config.law.params)?;
    let dt = match config.time.dt {
        Some(dt) if dt > 0.0 => dt,
        Some(_) => return Err(Error::ConfigInvalid("time.dt must be positive".into())),
        None => config.time.cfl * grid.dx(0).min(grid.dx(1)).min(grid.dx(2)),
    };

    let mut linear_coeffs: Option<Box<dyn LinearCoefficients + Send + Sync>> = None;
    let mut exact: Option<Arc<dyn Fn(f64, [f64; 3]) -> [f64; 6] + Send + Sync>> = None;
    let data = match &config.data {
        DataConfig::Explicit { u0, f } => {
            u0.validate()?;
            f.validate()?;
            ProblemData {
                u0: u0.initial_field(&grid),
                f: match f {
                    FieldGen::Zero => SpaceTimeFn::Zero,
                    other => other.forcing(),
                },
                g_bottom: BoundaryFn::Zero,
                g_top: BoundaryFn::Zero,
            }
        }
        DataConfig::Manufactured { case, amplitude } => {
            let m = match case {
                ManufacturedCase::Linear => manufactured::linear_case(*amplitude),
                ManufacturedCase::Kerr => manufactured::kerr_case(*amplitude, &law),
                ManufacturedCase::ExactAffine => manufactured::exact_affine_case(),
            };
            let d = m.data(&grid);
            exact = Some(m.exact.clone());
            if !matches!(case, ManufacturedCase::Kerr) {
                linear_coeffs = Some(m.coeffs);
            }
            d
        }
    };

    let params = QuasilinearParams {
        m: config.solver.m,
        tol: config.solver.tol,
        n_max: config.solver.n_max,
        radius: config.solver.radius,
        kappa: config.solver.kappa,
        kappa_tilde: config.solver.kappa_tilde,
        compat_factor: config.solver.compat_factor,
        enforce_compat: config.solver.enforce_compat,
        constants: config.solver.constants,
    };
    let opts = SolveOptions {
        integrator: config.time.integrator,
        cfl: config.time.cfl.max(0.05),
        penalty: config.solver.penalty,
        store_stride: 1,
        full_diagnostics: true,
        hm_order: config.solver.m.min(3),
        check_coefficients: true,
    };
    let monitors = MonitorConfig {
        dist_fraction: config.monitors.dist_fraction,
        norm_factor: config.monitors.norm_factor,
        kappa_tilde: config.monitors.kappa_tilde,
    };
    Ok(BuiltScenario {
        config: config.clone(),
        grid,
        law,
        data,
        linear_coeffs,
        exact,
        dt,
        params,
        opts,
        monitors,
    })
}

/// Parses a scenario from JSON with schema diagnostics.
pub fn from_json(text: &str) -> Result<ScenarioConfig> {
    serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
}

/// Manufactured solutions with analytic derivatives.
pub mod manufactured {
    use super::*;
    use crate::alg::{Mat3, Mat6, Vec3, Vec6};
    use crate::matrices::{normal_cross_matrix, trace_matrix};

    pub struct Manufactured {
        pub exact: Arc<dyn Fn(f64, [f64; 3]) -> [f64; 6] + Send + Sync>,
        pub coeffs: Box<dyn LinearCoefficients + Send + Sync>,
        data_builder: Arc<dyn Fn(&Grid) -> ProblemData + Send + Sync>,
    }

    impl Manufactured {
        pub fn data(&self, grid: &Grid) -> ProblemData {
            (self.data_builder)(grid)
        }
    }

    /// Smooth separable shape: per-component products of tangential
    /// harmonics and a non-periodic vertical profile.
    fn shape(x: [f64; 3], c: usize) -> f64 {
        let tau = std::f64::consts::TAU;
        let d = 0.35 * c as f64;
        (tau * x[0] + 0.2 + d).sin() * (tau * x[1] + 0.55 + 0.2 * d).cos()
            * ((1.4 + 0.25 * c as f64) * x[2] + 0.3 + 0.1 * d).sin()
    }

    fn shape_grad(x: [f64; 3], c: usize, axis: usize) -> f64 {
        let tau = std::f64::consts::TAU;
        let d = 0.35 * c as f64;
        let s1 = (tau * x[0] + 0.2 + d).sin();
        let c1 = (tau * x[0] + 0.2 + d).cos();
        let s2 = (tau * x[1] + 0.55 + 0.2 * d).cos();
        let ds2 = -(tau * x[1] + 0.55 + 0.2 * d).sin();
        let q = 1.4 + 0.25 * c as f64;
        let s3 = (q * x[2] + 0.3 + 0.1 * d).sin();
        let c3 = (q * x[2] + 0.3 + 0.1 * d).cos();
        match axis {
            0 => tau * c1 * s2 * s3,
            1 => s1 * tau * ds2 * s3,
            _ => s1 * s2 * q * c3,
        }
    }

    /// `d^j/dt^j sin(w t + p)`.
    fn phase(j: usize, t: f64, w: f64, p: f64) -> f64 {
        let arg = w * t + p;
        let v = match j % 4 {
            0 => arg.sin(),
            1 => arg.cos(),
            2 => -arg.sin(),
            _ => -arg.cos(),
        };
        v * w.powi(j as i32)
    }

    const W_T: f64 = 1.3;
    const P_T: f64 = 0.4;

    fn exact_eval(amplitude: f64, t: f64, x: [f64; 3]) -> [f64; 6] {
        let ph = phase(0, t, W_T, P_T);
        std::array::from_fn(|c| amplitude * ph * shape(x, c))
    }

    fn exact_dt(amplitude: f64, j: usize, t: f64, x: [f64; 3]) -> [f64; 6] {
        let ph = phase(j, t, W_T, P_T);
        std::array::from_fn(|c| amplitude * ph * shape(x, c))
    }

    fn exact_grad(amplitude: f64, t: f64, x: [f64; 3], axis: usize) -> [f64; 6] {
        let ph = phase(0, t, W_T, P_T);
        std::array::from_fn(|c| amplitude * ph * shape_grad(x, c, axis))
    }

    /// Boundary data for a given conductivity choice: the trace algebra of
    /// the exact field.
    fn trace_g(
        u: [f64; 6],
        face: Face,
        zeta_of_trace: &dyn Fn(&Vec3) -> Mat3,
    ) -> [f64; 3] {
        let nu = face.normal();
        let b0 = trace_matrix(&nu);
        let ncross = normal_cross_matrix(&nu);
        let e = Vec3::new(u[0], u[1], u[2]);
        let h = Vec3::new(u[3], u[4], u[5]);
        let xi = b0 * e;
        let v = b0 * h - ncross * (zeta_of_trace(&xi) * xi);
        [v[0], v[1], v[2]]
    }

    /// Linear manufactured case: `A0 = I`, `D = d0 I`, `b = I` on both
    /// faces, all derivatives analytic.
    pub fn linear_case(amplitude: f64) -> Manufactured {
        let d0 = 0.05;
        let exact: Arc<dyn Fn(f64, [f64; 3]) -> [f64; 6] + Send + Sync> =
            Arc::new(move |t, x| exact_eval(amplitude, t, x));
        let coeffs: Box<dyn LinearCoefficients + Send + Sync> =
            Box::new(crate::linear::ConstantCoefficients {
                a0: Mat6::identity(),
                d: d0 * Mat6::identity(),
                b_bottom: Mat3::identity(),
                eta: 1.0,
            });
        let mats = constant_matrices();
        let f_eval = move |j: usize, t: f64, x: [f64; 3]| -> [f64; 6] {
            // d_t^j [ d_t u + sum Aco d_k u + d0 u ].
            let dtj1 = exact_dt(amplitude, j + 1, t, x);
            let phj = phase(j, t, W_T, P_T);
            let mut acc = Vec6::from_column_slice(&dtj1);
            for axis in 0..3 {
                let base: [f64; 6] =
                    std::array::from_fn(|c| amplitude * phj * shape_grad(x, c, axis));
                acc += mats.apply_aco(axis, &Vec6::from_column_slice(&base));
            }
            let u: [f64; 6] = std::array::from_fn(|c| amplitude * phj * shape(x, c));
            acc += d0 * Vec6::from_column_slice(&u);
            std::array::from_fn(|c| acc[c])
        };
        let g_eval = move |j: usize, t: f64, x: [f64; 3], face: Face| -> [f64; 3] {
            let u = exact_dt(amplitude, j, t, x);
            trace_g(u, face, &|_| Mat3::identity())
        };
        let data_builder = Arc::new(move |grid: &Grid| ProblemData {
            u0: Field6::sample(grid, |x| exact_eval(amplitude, 0.0, x)),
            f: SpaceTimeFn::with_derivs(
                move |t, x| f_eval(0, t, x),
                move |j, t, x| f_eval(j, t, x),
            ),
            g_bottom: BoundaryFn::with_derivs(
                move |t, x| g_eval(0, t, x, Face::Bottom),
                move |j, t, x| g_eval(j, t, x, Face::Bottom),
            ),
            g_top: BoundaryFn::with_derivs(
                move |t, x| g_eval(0, t, x, Face::Top),
                move |j, t, x| g_eval(j, t, x, Face::Top),
            ),
        });
        Manufactured { exact, coeffs, data_builder }
    }

    /// Kerr manufactured case: the forcing and boundary data are computed
    /// through the law so the exact field solves the quasilinear system.
    pub fn kerr_case(amplitude: f64, law: &MaterialLaw) -> Manufactured {
        let exact: Arc<dyn Fn(f64, [f64; 3]) -> [f64; 6] + Send + Sync> =
            Arc::new(move |t, x| exact_eval(amplitude, t, x));
        let law_outer = law.clone();
        let mats = constant_matrices();
        let data_builder = Arc::new(move |grid: &Grid| {
            let law_f = law_outer.clone();
            let law_g = law_outer.clone();
            ProblemData {
                u0: Field6::sample(grid, |x| exact_eval(amplitude, 0.0, x)),
                f: SpaceTimeFn::analytic(move |t, x| {
                    let u = Vec6::from_column_slice(&exact_eval(amplitude, t, x));
                    let ut = Vec6::from_column_slice(&exact_dt(amplitude, 1, t, x));
                    let mut acc = law_f.chi(&x, &u) * ut + law_f.sigma(&x, &u) * u;
                    for axis in 0..3 {
                        let g = Vec6::from_column_slice(&exact_grad(amplitude, t, x, axis));
                        acc += mats.apply_aco(axis, &g);
                    }
                    std::array::from_fn(|c| acc[c])
                }),
                g_bottom: BoundaryFn::analytic(move |t, x| {
                    let u = exact_eval(amplitude, t, x);
                    trace_g(u, Face::Bottom, &|xi| law_g.zeta(&x, xi))
                }),
                // The far truncation face carries the unit coefficient.
                g_top: BoundaryFn::analytic(move |t, x| {
                    let u = exact_eval(amplitude, t, x);
                    trace_g(u, Face::Top, &|_| Mat3::identity())
                }),
            }
        });
        // Coefficients are state-dependent; the linear slot is unused but a
        // placeholder keeps the struct uniform.
        let coeffs: Box<dyn LinearCoefficients + Send + Sync> =
            Box::new(crate::linear::ConstantCoefficients::free_space());
        Manufactured { exact, coeffs, data_builder }
    }

    /// Exact-representable case: affine in `x3`, quadratic in time with the
    /// curvature confined to the normal components (which the boundary
    /// operator annihilates), so the scheme reproduces it to roundoff.
    pub fn exact_affine_case() -> Manufactured {
        let a0v = [0.3, -0.2, 0.1, 0.25, -0.15, 0.05];
        let a1v = [0.1, 0.2, -0.05, -0.1, 0.15, 0.2];
        // Quadratic part only along e3-components: B(a2) = 0 on both faces.
        let a2v = [0.0, 0.0, 0.4, 0.0, 0.0, -0.3];
        let c0v = [0.2, -0.1, 0.15, 0.1, 0.05, -0.2];
        let c1v = [-0.1, 0.05, 0.1, 0.2, -0.05, 0.1];
        let eval = move |t: f64, x: [f64; 3]| -> [f64; 6] {
            std::array::from_fn(|c| {
                a0v[c] + a1v[c] * t + a2v[c] * t * t + (c0v[c] + c1v[c] * t) * x[2]
            })
        };
        let dt_eval = move |j: usize, t: f64, x: [f64; 3]| -> [f64; 6] {
            match j {
                0 => eval(t, x),
                1 => std::array::from_fn(|c| a1v[c] + 2.0 * a2v[c] * t + c1v[c] * x[2]),
                2 => std::array::from_fn(|c| 2.0 * a2v[c]),
                _ => [0.0; 6],
            }
        };
        let mats = constant_matrices();
        let f_eval = move |j: usize, t: f64, x: [f64; 3]| -> [f64; 6] {
            // f = d_t u + sum Aco_k d_k u with d_3 u = c0 + c1 t.
            let mut acc = Vec6::from_column_slice(&dt_eval(j + 1, t, x));
            let dz: [f64; 6] = match j {
                0 => std::array::from_fn(|c| c0v[c] + c1v[c] * t),
                1 => c1v,
                _ => [0.0; 6],
            };
            acc += mats.apply_aco(2, &Vec6::from_column_slice(&dz));
            std::array::from_fn(|c| acc[c])
        };
        let g_eval = move |j: usize, t: f64, x: [f64; 3], face: Face| -> [f64; 3] {
            trace_g(dt_eval(j, t, x), face, &|_| Mat3::identity())
        };
        let exact: Arc<dyn Fn(f64, [f64; 3]) -> [f64; 6] + Send + Sync> = Arc::new(eval);
        let coeffs: Box<dyn LinearCoefficients + Send + Sync> =
            Box::new(crate::linear::ConstantCoefficients::free_space());
        let data_builder = Arc::new(move |grid: &Grid| ProblemData {
            u0: Field6::sample(grid, |x| eval(0.0, x)),
            f: SpaceTimeFn::with_derivs(
                move |t, x| f_eval(0, t, x),
                move |j, t, x| f_eval(j, t, x),
            ),
            g_bottom: BoundaryFn::with_derivs(
                move |t, x| g_eval(0, t, x, Face::Bottom),
                move |j, t, x| g_eval(j, t, x, Face::Bottom),
            ),
            g_top: BoundaryFn::with_derivs(
                move |t, x| g_eval(0, t, x, Face::Top),
                move |j, t, x| g_eval(j, t, x, Face::Top),
            ),
        });
        Manufactured { exact, coeffs, data_builder }
    }

    /// Time-varying linear coefficients used by long-horizon audits.
    pub fn linear_case_time_varying() -> AnalyticCoefficients {
        AnalyticCoefficients {
            a0: Arc::new(|t, _| (1.0 + 0.25 * t) * Mat6::identity()),
            a0_derivs: Some(Arc::new(|l, _, _| {
                if l == 1 {
                    0.25 * Mat6::identity()
                } else {
                    Mat6::zeros()
                }
            })),
            d: Arc::new(|_, _| Mat6::zeros()),
            d_derivs: Some(Arc::new(|_, _, _| Mat6::zeros())),
            b_bottom: Arc::new(|_, _| Mat3::identity()),
            b_derivs: Some(Arc::new(|_, _, _| Mat3::zeros())),
            eta: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_roundtrips_and_builds() {
        let cfg = ScenarioConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = from_json(&text).unwrap();
        assert_eq!(cfg, back);
        let built = build(&cfg).unwrap();
        assert_eq!(built.grid.n, [12, 12, 13]);
    }

    #[test]
    fn unknown_law_is_rejected_with_key_name() {
        let mut cfg = ScenarioConfig::default();
        cfg.law.name = "chiral".into();
        let err = match build(&cfg) {
            Err(e) => e,
            Ok(_) => panic!("expected a config error"),
        };
        assert!(err.to_string().contains("chiral"));
    }

    #[test]
    fn unknown_field_is_schema_error() {
        let text = r#"{ "name": "x", "grid": { "l": 1.0, "bogus": 3 } }"#;
        let err = from_json(text).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn invalid_component_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.data = DataConfig::Explicit {
            u0: FieldGen::GaussianBump {
                amplitude: 1.0,
                center: [0.5; 3],
                width: 0.1,
                components: vec![7],
            },
            f: FieldGen::Zero,
        };
        assert!(build(&cfg).is_err());
    }

    #[test]
    fn manufactured_linear_forcing_matches_fd() {
        // The analytic forcing derivative closures agree with finite
        // differences of the value closure.
        let m = manufactured::linear_case(0.2);
        let g = Grid::boxed(1.0, 1.0, [6, 6, 7]).unwrap();
        let data = m.data(&g);
        if let SpaceTimeFn::Analytic { eval, derivs } = &data.f {
            let d = derivs.as_ref().unwrap();
            let x = [0.3, 0.7, 0.4];
            let t = 0.25;
            let h = 1e-5;
            let fd: [f64; 6] = {
                let a = eval(t + h, x);
                let b = eval(t - h, x);
                std::array::from_fn(|c| (a[c] - b[c]) / (2.0 * h))
            };
            let an = d(1, t, x);
            for c in 0..6 {
                assert!((fd[c] - an[c]).abs() < 1e-8, "component {c}");
            }
        } else {
            panic!("expected analytic forcing");
        }
    }

    #[test]
    fn exact_affine_quadratic_part_is_annihilated_by_traces() {
        // The boundary operator applied to the t^2 coefficient must vanish
        // on both faces; this is what keeps the scheme exact.
        let m = manufactured::exact_affine_case();
        let _ = m;
        let a2 = crate::alg::Vec6::new(0.0, 0.0, 0.4, 0.0, 0.0, -0.3);
        for face in Face::ALL {
            let nu = face.normal();
            let b0 = crate::matrices::trace_matrix(&nu);
            let e = crate::alg::Vec3::new(a2[0], a2[1], a2[2]);
            let h = crate::alg::Vec3::new(a2[3], a2[4], a2[5]);
            assert_eq!((b0 * e).norm(), 0.0);
            assert_eq!((b0 * h).norm(), 0.0);
        }
    }
}
