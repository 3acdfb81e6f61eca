//! Batch front-end: `okstab <command> --scenario <path>`.
//!
//! Each command writes `report.json` (deterministic for a fixed scenario and
//! seed), `meta.json` (timestamp, timing), CSV data and SVG plots into the
//! output directory. Exit status: 0 success, 2 unstable verdict from
//! `stability`, 1 on any error.

pub mod output;
pub mod scenario;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::diffuse::{
    conserved_gradient_flow, diffuse_energy, max_diffuse_dt, sharp_limit_compare, DiffuseState, SURFACE_CONSTANT,
};
use crate::energy::{criticality, energy_parts, multiplier_and_residual, CriticalityReport, EnergyParts};
use crate::error::{Error, Result};
use crate::probe::{
    gamma_threshold_search, lipschitz_scan, max_flow_dt, minimality_probe, volume_preserving_flow, FlowStep,
    LipschitzReport, ProbeReport, ThresholdConfig, ThresholdReport, RNG_ALGORITHM,
};
use crate::secondvar::{
    assemble_parts, lamella_dispersion, lamella_gamma_star_min, min_eig_zero_mean, stability_report, FormOptions,
    StabilityReport, Verdict,
};
use output::{
    eigenmode_svg, field_csv, heatmap_svg, interface_csv, interface_svg, line_plot_svg, loglog_scatter_svg,
    snapshots_svg, write_json, Cell, Csv,
};
use scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Energy split `J = P + NL`.
    Energy,
    /// Multiplier, Euler-Lagrange residual and wall angles.
    Critic,
    /// Smallest eigenvalue of the second variation and a verdict.
    Stability,
    /// Discrete versus closed-form lamella dispersion.
    Dispersion,
    /// Random-perturbation minimality probe.
    Probe,
    /// Volume-preserving gradient flow.
    Flow,
    /// Critical coupling by bisection.
    Gammastar,
    /// Diffuse-interface relaxation.
    Diffuse,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Energy => "energy",
            Command::Critic => "critic",
            Command::Stability => "stability",
            Command::Dispersion => "dispersion",
            Command::Probe => "probe",
            Command::Flow => "flow",
            Command::Gammastar => "gammastar",
            Command::Diffuse => "diffuse",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "okstab", version, about = "Sharp-interface Ohta-Kawasaki stability analysis")]
pub struct Args {
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory; overrides the scenario `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cells along x; y follows with square cells.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Interface node count.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: Command,
    scenario: &'a Scenario,
    result: T,
}

#[derive(Serialize)]
struct Meta {
    command: Command,
    scenario_path: String,
    timestamp_unix: u64,
    elapsed_seconds: f64,
    version: &'static str,
    rng: &'static str,
}

/// Resolved scenario after command-line overrides.
pub fn resolve(args: &Args) -> Result<Scenario> {
    let mut sc = Scenario::load(&args.scenario)?;
    if let Some(n) = args.grid {
        sc.set_grid(n);
        sc.domain.validate().map_err(|e| Error::Scenario(format!("--grid {n}: {e}")))?;
    }
    if let Some(n) = args.nodes {
        if n < crate::interface::MIN_NODES {
            return Err(Error::Scenario(format!("--nodes {n}: below {}", crate::interface::MIN_NODES)));
        }
        sc.nodes = n;
    }
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    Ok(sc)
}

/// Runs one command; the returned value is the process exit status.
pub fn run(args: &Args) -> Result<i32> {
    let started = Instant::now();
    let sc = resolve(args)?;
    let out = args.out.clone().or_else(|| sc.output.clone()).unwrap_or_else(|| PathBuf::from("okstab-out"));
    std::fs::create_dir_all(&out)?;
    let status = match args.command {
        Command::Energy => cmd_energy(&sc, &out)?,
        Command::Critic => cmd_critic(&sc, &out)?,
        Command::Stability => cmd_stability(&sc, &out)?,
        Command::Dispersion => cmd_dispersion(&sc, &out)?,
        Command::Probe => cmd_probe(&sc, &out)?,
        Command::Flow => cmd_flow(&sc, &out)?,
        Command::Gammastar => cmd_gammastar(&sc, &out)?,
        Command::Diffuse => cmd_diffuse(&sc, &out)?,
    };
    let meta = Meta {
        command: args.command,
        scenario_path: args.scenario.display().to_string(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        elapsed_seconds: started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION"),
        rng: RNG_ALGORITHM,
    };
    write_json(&out.join("meta.json"), &meta)?;
    Ok(status)
}

fn report<T: Serialize>(out: &Path, command: Command, sc: &Scenario, result: T) -> Result<()> {
    write_json(&out.join("report.json"), &Report { command, scenario: sc, result })
}

fn title(sc: &Scenario, what: &str) -> String {
    format!("{what}, gamma = {}", sc.gamma)
}

#[derive(Serialize)]
struct EnergyResult {
    energy: EnergyParts,
    area: f64,
    mass: f64,
}

fn cmd_energy(sc: &Scenario, out: &Path) -> Result<i32> {
    let state = sc.state()?;
    let energy = energy_parts(&state)?;
    let (_, res) = multiplier_and_residual(&state)?;
    interface_csv(&state.interface, &state.interface.curvature()?, &res).write(&out.join("interface.csv"))?;
    let v = &state.fields()?.v;
    field_csv(v).write(&out.join("field.csv"))?;
    interface_svg(&state.interface, sc.domain.lx, sc.domain.ly, &title(sc, "interface"))
        .write(&out.join("interface.svg"))?;
    heatmap_svg(v, &title(sc, "potential v")).write(&out.join("field.svg"))?;
    report(out, Command::Energy, sc, EnergyResult { energy, area: state.area(), mass: state.mass() })?;
    Ok(0)
}

fn cmd_critic(sc: &Scenario, out: &Path) -> Result<i32> {
    let state = sc.state()?;
    let crit: CriticalityReport = criticality(&state)?;
    let (_, res) = multiplier_and_residual(&state)?;
    interface_csv(&state.interface, &state.interface.curvature()?, &res).write(&out.join("interface.csv"))?;
    interface_svg(&state.interface, sc.domain.lx, sc.domain.ly, &title(sc, "interface"))
        .write(&out.join("interface.svg"))?;
    report(out, Command::Critic, sc, crit)?;
    Ok(0)
}

#[derive(Serialize)]
struct StabilityResult {
    #[serde(flatten)]
    report: StabilityReport,
    /// `(γ, mu_min)` over the requested ladder.
    ladder: Vec<(f64, f64)>,
}

fn cmd_stability(sc: &Scenario, out: &Path) -> Result<i32> {
    let state = sc.state()?;
    let rep = stability_report(&state)?;
    let mut ladder = Vec::new();
    if !sc.stability.gamma_ladder.is_empty() {
        let parts = assemble_parts(&state, &FormOptions::default())?;
        for &g in &sc.stability.gamma_ladder {
            ladder.push((g, min_eig_zero_mean(&parts.combine(g)?)?.0));
        }
    }
    interface_csv(&state.interface, &state.interface.curvature()?, &rep.mode).write(&out.join("interface.csv"))?;
    eigenmode_svg(
        &state.interface,
        &rep.mode,
        sc.domain.lx,
        sc.domain.ly,
        &format!("lowest mode, mu_min = {:.4e}", rep.mu_min),
    )
    .write(&out.join("eigenmode.svg"))?;
    let status = if rep.verdict == Verdict::Unstable { 2 } else { 0 };
    report(out, Command::Stability, sc, StabilityResult { report: rep, ladder })?;
    Ok(status)
}

#[derive(Serialize)]
struct DispersionRow {
    k: usize,
    mu_discrete: f64,
    mu_analytic: f64,
    relative_error: f64,
}

#[derive(Serialize)]
struct DispersionResult {
    a: f64,
    modes: Vec<DispersionRow>,
    /// Smallest closed-form critical coupling over `k ≤ k_max` and its mode.
    analytic_gamma_star: Option<(f64, usize)>,
}

fn require_unit_lamella(sc: &Scenario, command: &str) -> Result<f64> {
    match sc.lamella_a() {
        Some(a) if sc.is_unit_square() => Ok(a),
        _ => Err(Error::Scenario(format!("{command} needs a lamella configuration in the unit-square rectangle"))),
    }
}

fn cmd_dispersion(sc: &Scenario, out: &Path) -> Result<i32> {
    let a = require_unit_lamella(sc, "dispersion")?;
    let state = sc.state()?;
    let form = assemble_parts(&state, &FormOptions::default())?.combine(sc.gamma)?;
    let mut modes = Vec::new();
    let mut csv = Csv::new(&["k", "mu_discrete", "mu_analytic"]);
    for k in 1..=sc.dispersion.k_max {
        let phi: Vec<f64> =
            state.interface.nodes.iter().map(|p| (k as f64 * std::f64::consts::PI * p.y).cos()).collect();
        let mu_discrete = form.value(&phi);
        let mu_analytic = lamella_dispersion(a, sc.gamma, k)?;
        csv.row(&[Cell::I(k), Cell::F(mu_discrete), Cell::F(mu_analytic)]);
        modes.push(DispersionRow {
            k,
            mu_discrete,
            mu_analytic,
            relative_error: (mu_discrete - mu_analytic).abs() / mu_analytic.abs().max(1e-300),
        });
    }
    csv.write(&out.join("dispersion.csv"))?;
    let disc: Vec<(f64, f64)> = modes.iter().map(|m| (m.k as f64, m.mu_discrete)).collect();
    let exact: Vec<(f64, f64)> = modes.iter().map(|m| (m.k as f64, m.mu_analytic)).collect();
    line_plot_svg(
        &[("black", &exact), ("crimson", &disc)],
        &format!("dispersion at a = {a}, gamma = {} (black: closed form)", sc.gamma),
        "k",
        "mu(k)",
    )
    .write(&out.join("dispersion.svg"))?;
    let analytic_gamma_star = lamella_gamma_star_min(a, sc.dispersion.k_max).ok();
    report(out, Command::Dispersion, sc, DispersionResult { a, modes, analytic_gamma_star })?;
    Ok(0)
}

#[derive(Serialize)]
struct ProbeResult {
    #[serde(flatten)]
    probe: ProbeReport,
    lipschitz: Option<LipschitzReport>,
}

fn cmd_probe(sc: &Scenario, out: &Path) -> Result<i32> {
    let state = sc.state()?;
    let probe = minimality_probe(&state, sc.probe.samples, &sc.probe.amplitudes, sc.seed)?;
    let lipschitz = if sc.probe.lipschitz_shapes > 0 {
        Some(lipschitz_scan(&state, sc.probe.lipschitz_shapes, &sc.probe.lipschitz_amplitudes, sc.seed)?)
    } else {
        None
    };
    let mut csv = Csv::new(&["amplitude", "sym_diff", "delta_j", "perimeter_drop"]);
    for s in &probe.samples {
        csv.row(&[Cell::F(s.amplitude), Cell::F(s.sym_diff), Cell::F(s.delta_j), Cell::F(s.perimeter_drop)]);
    }
    csv.write(&out.join("probe.csv"))?;
    let pts: Vec<(f64, f64)> = probe.samples.iter().map(|s| (s.sym_diff * s.sym_diff, s.delta_j)).collect();
    loglog_scatter_svg(
        &pts,
        &format!("probe, {} negative of {}", probe.negative_samples, probe.samples.len()),
        "|F sym E|^2",
        "delta J",
    )
    .write(&out.join("probe.svg"))?;
    report(out, Command::Probe, sc, ProbeResult { probe, lipschitz })?;
    Ok(0)
}

#[derive(Serialize)]
struct FlowResultReport {
    dt_initial: f64,
    dt_final: f64,
    steps: usize,
    initial: CriticalityReport,
    #[serde(rename = "final")]
    final_: CriticalityReport,
    area_drift: f64,
}

fn cmd_flow(sc: &Scenario, out: &Path) -> Result<i32> {
    let state = sc.state()?;
    let dt = match sc.flow.dt {
        Some(dt) => dt,
        None => max_flow_dt(&state)?,
    };
    let res = volume_preserving_flow(&state, dt, sc.flow.steps, sc.flow.snapshot_every)?;
    let mut csv = Csv::new(&["t", "J", "residual_sup", "area"]);
    for s in &res.log {
        csv.row(&[Cell::F(s.t), Cell::F(s.j), Cell::F(s.residual_sup), Cell::F(s.area)]);
    }
    csv.write(&out.join("flow.csv"))?;
    let fin = &res.final_state;
    let (_, resid) = multiplier_and_residual(fin)?;
    interface_csv(&fin.interface, &fin.interface.curvature()?, &resid).write(&out.join("interface.csv"))?;
    snapshots_svg(&res.snapshots, sc.domain.lx, sc.domain.ly, &title(sc, "flow snapshots"))
        .write(&out.join("flow.svg"))?;
    let a0 = state.area();
    let area_drift = res.log.iter().fold(0.0f64, |m, s: &FlowStep| m.max((s.area - a0).abs()));
    report(
        out,
        Command::Flow,
        sc,
        FlowResultReport {
            dt_initial: dt,
            dt_final: res.log.last().map(|s| s.dt).unwrap_or(dt),
            steps: sc.flow.steps,
            initial: criticality(&state)?,
            final_: criticality(fin)?,
            area_drift,
        },
    )?;
    Ok(0)
}

fn cmd_gammastar(sc: &Scenario, out: &Path) -> Result<i32> {
    let a = require_unit_lamella(sc, "gammastar")?;
    if sc.domain.nx != sc.domain.ny {
        return Err(Error::Scenario("gammastar needs nx = ny".into()));
    }
    let cfg = ThresholdConfig {
        a,
        k_max: sc.gammastar.k_max,
        tol: sc.gammastar.tol,
        bracket: (sc.gammastar.bracket[0], sc.gammastar.bracket[1]),
        grid: sc.domain.nx,
        nodes: sc.nodes,
    };
    let rep: ThresholdReport = gamma_threshold_search(&cfg)?;
    report(out, Command::Gammastar, sc, rep)?;
    Ok(0)
}

#[derive(Serialize)]
struct DiffuseResult {
    epsilon: f64,
    gamma0: f64,
    dt_initial: f64,
    dt_final: f64,
    steps: usize,
    energy_initial: f64,
    energy_final: f64,
    mass_initial: f64,
    mass_final: f64,
    mass_drift: f64,
    sharp_limit_distance: f64,
    /// Energy of the optimal 1D profile per unit interface length.
    surface_constant: f64,
    /// `E_final / surface_constant`, to set beside the sharp perimeter.
    scaled_energy: f64,
    sharp_perimeter: f64,
}

fn cmd_diffuse(sc: &Scenario, out: &Path) -> Result<i32> {
    let sharp = sc.state()?;
    let mut ds = DiffuseState::from_region(&sharp, sc.diffuse.epsilon)?;
    if let Some(g0) = sc.diffuse.gamma0 {
        ds.gamma0 = g0;
    }
    let dt = match sc.diffuse.dt {
        Some(dt) => dt,
        None => max_diffuse_dt(ds.grid(), ds.epsilon),
    };
    let energy_initial = diffuse_energy(&ds)?;
    let flow = conserved_gradient_flow(&ds, dt, sc.diffuse.steps)?;
    let mut csv = Csv::new(&["t", "E", "mass"]);
    let last = flow.log.len() - 1;
    for (i, s) in flow.log.iter().enumerate() {
        if i % sc.diffuse.log_every == 0 || i == last {
            csv.row(&[Cell::F(s.t), Cell::F(s.energy), Cell::F(s.mass)]);
        }
    }
    csv.write(&out.join("diffuse.csv"))?;
    field_csv(&flow.state.u).write(&out.join("field.csv"))?;
    heatmap_svg(&flow.state.u, &format!("phase field, eps = {}", ds.epsilon)).write(&out.join("field.svg"))?;
    let energy_final = flow.log[last].energy;
    let mass_drift = flow.log.iter().fold(0.0f64, |m, s| m.max((s.mass - ds.m).abs()));
    report(
        out,
        Command::Diffuse,
        sc,
        DiffuseResult {
            epsilon: ds.epsilon,
            gamma0: ds.gamma0,
            dt_initial: dt,
            dt_final: flow.dt,
            steps: sc.diffuse.steps,
            energy_initial,
            energy_final,
            mass_initial: ds.m,
            mass_final: flow.state.mass(),
            mass_drift,
            sharp_limit_distance: sharp_limit_compare(&flow.state, &sharp)?,
            surface_constant: SURFACE_CONSTANT,
            scaled_energy: energy_final / SURFACE_CONSTANT,
            sharp_perimeter: sharp.perimeter(),
        },
    )?;
    Ok(0)
}
