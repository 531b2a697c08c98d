//! `mxabc`: command-line surface of the impedance-Maxwell toolkit.
//!
//! Subcommands read a JSON scenario file, run the requested solver or study,
//! and emit a JSON report (plus an optional CSV time series). Outputs are
//! deterministic for a fixed config and seed. Exit codes: 0 success,
//! 2 invalid configuration, 3 run error, 10 blow-up monitor triggered.

use clap::{Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};

use maxwell_abc::error::Error as CoreError;
use maxwell_abc::grid::Face;
use maxwell_abc::jets::{check_compatibility_nonlinear, nonlinear_solution_jet, CompatReport, CompatTolerance};
use maxwell_abc::linear::Trajectory;
use maxwell_abc::localization;
use maxwell_abc::norms;
use maxwell_abc::quasilinear::{
    boundary_residual, continue_with_histories, BlowupCriterion, Continuation, SmallnessReport,
};
use maxwell_abc::scenario::{self, BuiltScenario, DataConfig, ScenarioConfig};
use maxwell_abc::studies;

const EXIT_CONFIG: i32 = 2;
const EXIT_RUN: i32 = 3;
const EXIT_MONITOR: i32 = 10;

#[derive(Parser)]
#[command(name = "mxabc", version, about = "Quasilinear Maxwell solver with absorbing boundary conditions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: fixed-point solve (with continuation when
    /// `solver.tau` is set), monitors, energy audit, series export.
    Simulate { config: PathBuf },
    /// Evaluate the compatibility conditions of the scenario data.
    CheckCompat { config: PathBuf },
    /// Evaluate the energy identity at the configured and halved
    /// resolutions and estimate the residual order.
    EnergyAudit { config: PathBuf },
    /// Median contraction ratios over an amplitude ladder.
    ContractionStudy {
        config: PathBuf,
        /// Amplitude scale factors applied to the configured data.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 0.5, 0.25, 0.125, 0.0625])]
        factors: Vec<f64>,
    },
    /// Manufactured-solution convergence over a resolution ladder.
    ConvergenceStudy {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![10, 14, 20])]
        resolutions: Vec<usize>,
        /// Minimum acceptable fitted order.
        #[arg(long, default_value_t = 1.9)]
        min_order: f64,
    },
    /// Continuous dependence: solution distance against data perturbation.
    DependenceStudy {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e-2, 1e-3, 1e-4])]
        deltas: Vec<f64>,
    },
    /// Verify the chart-localization identities and print the residual
    /// table.
    LocalizeVerify {
        /// Chart name or "all".
        #[arg(long, default_value = "all")]
        chart: String,
        /// Number of boundary sample points per chart.
        #[arg(long, default_value_t = 144)]
        samples: usize,
        /// Report path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            classify(&e)
        }
    };
    std::process::exit(code);
}

fn classify(e: &anyhow::Error) -> i32 {
    if let Some(core) = e.downcast_ref::<CoreError>() {
        match core {
            CoreError::ConfigInvalid(_)
            | CoreError::GridTooSmall { .. }
            | CoreError::KTooLargeForGrid { .. } => EXIT_CONFIG,
            _ => EXIT_RUN,
        }
    } else if e.downcast_ref::<serde_json::Error>().is_some() {
        EXIT_CONFIG
    } else {
        EXIT_RUN
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CoreError::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = scenario::from_json(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Simulate { config } => simulate(&load_config(&config, cli.seed)?),
        Command::CheckCompat { config } => check_compat(&load_config(&config, cli.seed)?),
        Command::EnergyAudit { config } => energy_audit_cmd(&load_config(&config, cli.seed)?),
        Command::ContractionStudy { config, factors } => {
            contraction_study(&load_config(&config, cli.seed)?, &factors)
        }
        Command::ConvergenceStudy { config, resolutions, min_order } => {
            convergence_study(&load_config(&config, cli.seed)?, &resolutions, min_order)
        }
        Command::DependenceStudy { config, deltas } => {
            dependence_study(&load_config(&config, cli.seed)?, &deltas)
        }
        Command::LocalizeVerify { chart, samples, out } => localize_verify(&chart, samples, out),
    }
}

#[derive(Serialize)]
struct EnergySides {
    lhs: f64,
    rhs: f64,
    residual: f64,
}

#[derive(Serialize)]
struct SimulateReport {
    scenario: String,
    law: String,
    seed: u64,
    status: String,
    converged: bool,
    /// Corrector applications beyond the first on the final leg.
    iterations: usize,
    legs: usize,
    distances: Vec<f64>,
    ratios: Vec<f64>,
    final_time: f64,
    final_l2: f64,
    final_sup: f64,
    bc_residual: f64,
    compat: CompatReport,
    smallness: Option<SmallnessReport>,
    energy: EnergySides,
    blowup_triggered: Option<BlowupCriterion>,
    t_stop: f64,
}

fn simulate(cfg: &ScenarioConfig) -> anyhow::Result<i32> {
    let built = scenario::build(cfg)?;
    let cont = run_continuation(&built)?;
    let report = assemble_report(cfg, &built, &cont);
    if let Some(series_path) = &cfg.output.series {
        write_series(Path::new(series_path), &built, &cont)?;
    }
    emit_json(cfg.output.report.as_deref(), &report)?;
    Ok(if report.blowup_triggered.is_some() { EXIT_MONITOR } else { 0 })
}

fn run_continuation(built: &BuiltScenario) -> anyhow::Result<Continuation> {
    let tau = built.config.solver.tau.unwrap_or(built.config.time.horizon);
    let cont = continue_with_histories(
        &built.law,
        &built.data,
        &built.grid,
        built.config.time.t0,
        built.config.time.t0 + built.config.time.horizon,
        tau,
        built.dt,
        &built.params,
        &built.opts,
        &built.monitors,
    )?;
    Ok(cont)
}

fn assemble_report(
    cfg: &ScenarioConfig,
    built: &BuiltScenario,
    cont: &Continuation,
) -> SimulateReport {
    let last_hist = cont.histories.last().unwrap();
    let last = cont.segments.last().unwrap();
    let compat = compat_for(built).unwrap_or(CompatReport {
        order: built.params.m,
        residuals: vec![],
        tolerances: vec![],
        pass: true,
    });
    let smallness = if built.law.zeta_is_nonlinear() {
        Some(maxwell_abc::quasilinear::smallness(
            &built.law,
            built.params.kappa_tilde,
            &built.params.constants,
        ))
    } else {
        None
    };
    let energy = combined_energy(&cont.segments);
    let triggered = cont.report.triggered;
    SimulateReport {
        scenario: cfg.name.clone(),
        law: built.law.name.clone(),
        seed: cfg.seed,
        status: if triggered.is_some() { "monitor-triggered".into() } else { "converged".into() },
        converged: cont.histories.iter().all(|h| h.converged),
        iterations: last_hist.iterations.saturating_sub(1).max(1),
        legs: cont.segments.len(),
        distances: last_hist.distances.clone(),
        ratios: last_hist.ratios.clone(),
        final_time: last.final_time(),
        final_l2: last.series.l2_sq.last().copied().unwrap_or(0.0).sqrt(),
        final_sup: last.final_state().max_abs(),
        bc_residual: boundary_residual(&built.law, last, &built.data),
        compat,
        smallness,
        energy,
        blowup_triggered: triggered,
        t_stop: cont.report.t_stop,
    }
}

fn compat_for(built: &BuiltScenario) -> Option<CompatReport> {
    if built.grid.periodic3 {
        return None;
    }
    let m = built.params.m;
    let t0 = built.config.time.t0;
    let f_jets = built.data.f.jets(&built.grid, t0, m.saturating_sub(1));
    let g_jets = built.data.g_bottom.jets(&built.grid, Face::Bottom, t0, m);
    let jet = nonlinear_solution_jet(&built.grid, m, t0, &built.law, &built.data.u0, &f_jets).ok()?;
    check_compatibility_nonlinear(
        &built.grid,
        Face::Bottom,
        &built.law,
        &jet,
        &g_jets,
        CompatTolerance::Discretized {
            dx: built.grid.dx(2),
            factor: built.config.solver.compat_factor,
        },
    )
    .ok()
}

/// Energy-identity sides accumulated across the continuation legs.
fn combined_energy(segments: &[Trajectory]) -> EnergySides {
    let trapz = |s: &[f64], dt: f64| -> f64 {
        s.iter()
            .enumerate()
            .map(|(n, v)| norms::trapezoid_weight(n, s.len()) * dt * v)
            .sum()
    };
    let first = segments.first().unwrap();
    let last = segments.last().unwrap();
    let mut lhs = *last.series.energy.last().unwrap();
    let mut rhs = first.series.energy[0];
    for seg in segments {
        lhs += trapz(&seg.series.boundary_absorption, seg.dt);
        rhs += trapz(&seg.series.interior_work, seg.dt) - trapz(&seg.series.boundary_g_work, seg.dt);
    }
    EnergySides { lhs, rhs, residual: (lhs - rhs).abs() }
}

/// CSV series with the documented fixed columns.
fn write_series(path: &Path, built: &BuiltScenario, cont: &Continuation) -> anyhow::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,L2,Hm,omega,dist_boundaryU,trace_sup,energy_lhs,energy_rhs")?;
    let mut omega_running: f64 = 0.0;
    let mut acc_abs = 0.0;
    let mut acc_int = 0.0;
    let mut acc_g = 0.0;
    let e0 = cont.segments[0].series.energy[0];
    for (leg, seg) in cont.segments.iter().enumerate() {
        let s = &seg.series;
        for idx in 0..s.times.len() {
            // Cumulative trapezoid inside the leg.
            if idx > 0 {
                acc_abs += 0.5 * seg.dt * (s.boundary_absorption[idx - 1] + s.boundary_absorption[idx]);
                acc_int += 0.5 * seg.dt * (s.interior_work[idx - 1] + s.interior_work[idx]);
                acc_g += 0.5 * seg.dt * (s.boundary_g_work[idx - 1] + s.boundary_g_work[idx]);
            }
            if leg > 0 && idx == 0 {
                continue;
            }
            omega_running = omega_running.max(s.sup_w1inf[idx]);
            let dist = seg
                .states
                .get(idx)
                .map(|state| {
                    let mut d = f64::INFINITY;
                    for node in 0..built.grid.num_nodes() {
                        d = d.min(built.law.domain.distance(&state.get(node)));
                    }
                    d
                })
                .unwrap_or(f64::NAN);
            writeln!(
                f,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                s.times[idx],
                s.l2_sq[idx].sqrt(),
                s.hm[idx],
                omega_running,
                dist,
                s.trace_sup[idx],
                s.energy[idx] + acc_abs,
                e0 + acc_int - acc_g,
            )?;
        }
    }
    Ok(())
}

fn check_compat(cfg: &ScenarioConfig) -> anyhow::Result<i32> {
    let built = scenario::build(cfg)?;
    let report = compat_for(&built).ok_or(CoreError::ConfigInvalid(
        "compatibility check needs a bounded (non-periodic) scenario and data inside U".into(),
    ))?;
    let pass = report.pass;
    emit_json(cfg.output.report.as_deref(), &report)?;
    Ok(if pass { 0 } else { EXIT_RUN })
}

#[derive(Serialize)]
struct EnergyAuditReport {
    lhs: f64,
    rhs: f64,
    residual: f64,
    coarse_residual: f64,
    order_estimate: f64,
}

fn energy_audit_cmd(cfg: &ScenarioConfig) -> anyhow::Result<i32> {
    let fine = run_audit_once(cfg)?;
    let mut coarse_cfg = cfg.clone();
    coarse_cfg.grid.n = cfg.grid.n.map(|n| (n / 2).max(6));
    let coarse = run_audit_once(&coarse_cfg)?;
    let order = if fine.residual > 0.0 && coarse.residual > 0.0 {
        (coarse.residual / fine.residual).log2()
    } else {
        f64::NAN
    };
    let report = EnergyAuditReport {
        lhs: fine.lhs,
        rhs: fine.rhs,
        residual: fine.residual,
        coarse_residual: coarse.residual,
        order_estimate: order,
    };
    emit_json(cfg.output.report.as_deref(), &report)?;
    Ok(0)
}

fn run_audit_once(cfg: &ScenarioConfig) -> anyhow::Result<EnergySides> {
    let built = scenario::build(cfg)?;
    let cont = run_continuation(&built)?;
    Ok(combined_energy(&cont.segments))
}

fn contraction_study(cfg: &ScenarioConfig, factors: &[f64]) -> anyhow::Result<i32> {
    let built = scenario::build(cfg)?;
    let result = studies::contraction_study(
        &built.law,
        &|factor| studies::scale_data(&built.data, factor),
        &built.grid,
        cfg.time.horizon,
        built.dt,
        factors,
        &built.params,
    )?;
    emit_json(cfg.output.report.as_deref(), &result)?;
    Ok(0)
}

fn convergence_study(
    cfg: &ScenarioConfig,
    resolutions: &[usize],
    min_order: f64,
) -> anyhow::Result<i32> {
    let case = match &cfg.data {
        DataConfig::Manufactured { case, .. } => *case,
        _ => {
            return Err(CoreError::ConfigInvalid(
                "convergence studies need data.kind = \"manufactured\"".into(),
            )
            .into())
        }
    };
    let built = scenario::build(cfg)?;
    // The error falls with dx, so the order is the negated slope bound.
    let result = studies::convergence_study(
        case,
        &built.law,
        resolutions,
        cfg.time.cfl,
        cfg.time.horizon,
        Some((min_order, 10.0)),
    )?;
    let ok = result.pass.unwrap_or(false)
        || result.rows.iter().all(|r| r.value <= 1e-10 && r.note.is_none());
    emit_json(cfg.output.report.as_deref(), &result)?;
    Ok(if ok { 0 } else { EXIT_RUN })
}

fn dependence_study(cfg: &ScenarioConfig, deltas: &[f64]) -> anyhow::Result<i32> {
    let built = scenario::build(cfg)?;
    let result = studies::dependence_study(
        &built.law,
        &built.data,
        &built.grid,
        cfg.time.horizon,
        built.dt,
        deltas,
        &built.params,
        Some((0.9, 1.1)),
    )?;
    emit_json(cfg.output.report.as_deref(), &result)?;
    Ok(0)
}

#[derive(Serialize)]
struct ChartReport {
    chart: String,
    boundary_samples: usize,
    max_identity_residual: f64,
    core_form_residual: f64,
    min_eig_tangential: f64,
    interior_symmetry_defect: f64,
    interior_span_residual: f64,
    interior_min_eig: f64,
}

fn localize_verify(chart: &str, samples: usize, out: Option<PathBuf>) -> anyhow::Result<i32> {
    use maxwell_abc::alg::{Mat6, Vec3};
    let names: Vec<&str> = if chart == "all" {
        localization::CHART_REGISTRY.to_vec()
    } else {
        vec![chart]
    };
    let mut reports = Vec::new();
    for name in names {
        let chart = localization::build_chart(name)?;
        // Deterministic low-discrepancy samples on the flattened patch.
        let golden = 0.618_033_988_749_894_9_f64;
        let boundary: Vec<Vec3> = (0..samples)
            .map(|k| {
                let a = ((k as f64 * golden).fract() - 0.5) * 0.8;
                let b = ((k as f64 * golden * golden).fract() - 0.5) * 0.8;
                Vec3::new(a * 0.5, b * 0.5, 0.0)
            })
            .collect();
        let volume: Vec<Vec3> = (0..samples)
            .map(|k| {
                let a = ((k as f64 * golden).fract() - 0.5) * 0.8;
                let b = ((k as f64 * golden * golden).fract() - 0.5) * 0.8;
                let c = (k as f64 * golden * 1.32).fract() * 0.4;
                Vec3::new(a * 0.5, b * 0.5, c)
            })
            .collect();
        let b_field = |x: &Vec3| localization::sample_boundary_coefficient(&chart, x);
        let (_, bsum) = localization::transform_boundary(&chart, &b_field, 1.0, &boundary)?;
        let a0 = |x: &Vec3| (1.0 + 0.3 * (x[0] * 2.0).sin() * x[1].cos()) * Mat6::identity();
        let d = |_: &Vec3| Mat6::zeros();
        let (_, isum) = localization::transform_coefficients(&chart, &a0, &d, 0.7, &volume)?;
        reports.push(ChartReport {
            chart: chart.name.clone(),
            boundary_samples: samples,
            max_identity_residual: bsum.max_identity_residual,
            core_form_residual: bsum.core_form_residual,
            min_eig_tangential: bsum.min_eig_tangential,
            interior_symmetry_defect: isum.a0_symmetry_defect,
            interior_span_residual: isum.span_residual,
            interior_min_eig: isum.min_eig_a0,
        });
    }
    emit_json(out.as_deref().and_then(Path::to_str), &reports)?;
    Ok(0)
}

fn emit_json<T: Serialize>(path: Option<&str>, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => {
            if let Some(dir) = Path::new(p).parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            std::fs::write(p, format!("{text}\n"))?;
        }
        None => println!("{text}"),
    }
    Ok(())
}
