//! Dynamic and statistical probes around a configuration: the
//! volume-preserving descent flow, the quantitative-minimality experiment,
//! the empirical Λ of the perimeter, the Lipschitz scan of the nonlocal term
//! and the γ-threshold bisection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::Point;
use crate::energy::{criticality, energy_parts, lipschitz_gap, multiplier_and_residual, symmetric_difference};
use crate::error::{Error, Result};
use crate::interface::{normal_graph_perturb, reproject_endpoint, shift_to_area, Interface, RegionState, Topology};
use crate::secondvar::{
    assemble_parts, lamella_gamma_star_min, lamella_state, min_eig_zero_mean, FormOptions, TOL_CRIT,
};

/// Name of the pseudo-random generator behind every seeded probe.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), seeded with seed_from_u64";
pub const PERTURBATION_MODES: usize = 8;
pub const MAX_REJECTIONS: usize = 10;
pub const DEFAULT_AMPLITUDES: [f64; 5] = [1e-3, 3e-3, 1e-2, 3e-2, 5e-2];
pub const GROSS_SAMPLES: usize = 10;
pub const GROSS_AMPLITUDE: f64 = 0.2;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random band-limited shape on the nodes, `max|φ| = 1`. Mode `k` carries a
/// standard normal coefficient damped by `1/k²`; `with_constant` adds an
/// undamped constant mode. Without it the result has zero `Wq`-mean.
pub fn random_shape(iface: &Interface, rng: &mut ChaCha8Rng, with_constant: bool) -> Vec<f64> {
    let s = iface.arclength();
    let len = iface.perimeter();
    let n = iface.len();
    let mut phi = vec![0.0; n];
    if with_constant {
        let c: f64 = StandardNormal.sample(rng);
        phi.iter_mut().for_each(|p| *p = c);
    }
    for k in 1..=PERTURBATION_MODES {
        let damp = 1.0 / (k * k) as f64;
        match iface.topology {
            Topology::Chord => {
                let c: f64 = StandardNormal.sample(rng);
                let w = k as f64 * std::f64::consts::PI / len;
                for (p, si) in phi.iter_mut().zip(&s) {
                    *p += damp * c * (w * si).cos();
                }
            }
            Topology::Loop => {
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                let w = k as f64 * std::f64::consts::TAU / len;
                for (p, si) in phi.iter_mut().zip(&s) {
                    *p += damp * (a * (w * si).cos() + b * (w * si).sin());
                }
            }
        }
    }
    if !with_constant {
        let wq = iface.quadrature_weights();
        let mean = phi.iter().zip(&wq).map(|(p, w)| p * w).sum::<f64>() / wq.iter().sum::<f64>();
        phi.iter_mut().for_each(|p| *p -= mean);
    }
    let m = phi.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    if m > 0.0 {
        phi.iter_mut().for_each(|p| *p /= m);
    }
    phi
}

/// Draws shapes until one perturbs `state` successfully at `amplitude`.
fn perturb_with_retries(
    state: &RegionState,
    rng: &mut ChaCha8Rng,
    amplitude: f64,
    fix_volume: bool,
) -> Result<(Vec<f64>, RegionState)> {
    for _ in 0..MAX_REJECTIONS {
        let phi = random_shape(&state.interface, rng, !fix_volume);
        if let Ok(f) = try_perturb(state, &phi, amplitude, fix_volume) {
            return Ok((phi, f));
        }
    }
    Err(Error::TooManyRejections(MAX_REJECTIONS))
}

fn try_perturb(state: &RegionState, phi: &[f64], amplitude: f64, fix_volume: bool) -> Result<RegionState> {
    let scaled: Vec<f64> = phi.iter().map(|p| p * amplitude).collect();
    let iface = normal_graph_perturb(state, &scaled, fix_volume)?;
    state.with_interface(iface)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub amplitude: f64,
    pub sym_diff: f64,
    pub delta_j: f64,
    /// `P(E) − P(F)`
    pub perimeter_drop: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub samples: Vec<ProbeSample>,
    pub fitted_c: f64,
    pub min_ratio: f64,
    pub lambda_ratio_max: f64,
    /// Least-squares slope of `log ΔJ` against `log amplitude` over samples
    /// with `ΔJ > 0`; `None` when fewer than two such amplitudes exist.
    pub loglog_slope: Option<f64>,
    pub negative_samples: usize,
    pub seed: u64,
    pub rng: String,
}

fn probe_summary(samples: Vec<ProbeSample>, seed: u64) -> ProbeReport {
    let num: f64 = samples.iter().map(|s| s.delta_j * s.sym_diff.powi(2)).sum();
    let den: f64 = samples.iter().map(|s| s.sym_diff.powi(4)).sum();
    let fitted_c = if den > 0.0 { num / den } else { 0.0 };
    let min_ratio = samples.iter().map(|s| s.delta_j / s.sym_diff.powi(2)).fold(f64::INFINITY, f64::min);
    let lambda_ratio_max = samples.iter().map(|s| s.perimeter_drop / s.sym_diff).fold(f64::NEG_INFINITY, f64::max);
    let pts: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.delta_j > 0.0).map(|s| (s.amplitude.ln(), s.delta_j.ln())).collect();
    let distinct = {
        let mut a: Vec<f64> = pts.iter().map(|p| p.0).collect();
        a.sort_by(f64::total_cmp);
        a.dedup();
        a.len()
    };
    let loglog_slope = if distinct >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let negative_samples = samples.iter().filter(|s| s.delta_j < 0.0).count();
    ProbeReport {
        samples,
        fitted_c,
        min_ratio,
        lambda_ratio_max,
        loglog_slope,
        negative_samples,
        seed,
        rng: RNG_ALGORITHM.to_string(),
    }
}

/// Volume-fixed random normal-graph perturbations `F` of a critical state.
/// Sample `i` uses shape `i / amplitudes.len()` at amplitude
/// `amplitudes[i % amplitudes.len()]`, so every shape is seen at every
/// amplitude.
pub fn minimality_probe(state: &RegionState, n: usize, amplitudes: &[f64], seed: u64) -> Result<ProbeReport> {
    if n < 50 {
        return Err(Error::Precondition(format!("sample count {n} below 50")));
    }
    if amplitudes.is_empty() || amplitudes.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Precondition("amplitudes must be positive".into()));
    }
    let crit = criticality(state)?;
    if crit.residual_sup >= TOL_CRIT {
        return Err(Error::Precondition(format!(
            "state is not critical: residual_sup = {} ≥ {TOL_CRIT}",
            crit.residual_sup
        )));
    }
    let base = energy_parts(state)?;
    let mut rng = rng(seed);
    let na = amplitudes.len();
    let mut samples = Vec::with_capacity(n);
    let mut shape: Vec<f64> = Vec::new();
    for i in 0..n {
        let amp = amplitudes[i % na];
        let f = if i % na == 0 {
            let (phi, f) = perturb_with_retries(state, &mut rng, amp, true)?;
            shape = phi;
            f
        } else {
            match try_perturb(state, &shape, amp, true) {
                Ok(f) => f,
                Err(_) => {
                    let (phi, f) = perturb_with_retries(state, &mut rng, amp, true)?;
                    shape = phi;
                    f
                }
            }
        };
        let pf = energy_parts(&f)?;
        let sd = symmetric_difference(state, &f)?;
        if !(sd > 0.0) {
            return Err(Error::Degenerate("perturbation with zero symmetric difference".into()));
        }
        samples.push(ProbeSample {
            amplitude: amp,
            sym_diff: sd,
            delta_j: pf.j - base.j,
            perimeter_drop: base.perimeter - pf.perimeter,
        });
    }
    Ok(probe_summary(samples, seed))
}

/// `(P(E) − P(G)) / |G △ E|`.
pub fn lambda_ratio(e: &RegionState, g: &RegionState) -> Result<f64> {
    let sd = symmetric_difference(e, g)?;
    if !(sd > 0.0) {
        return Err(Error::Degenerate("identical regions".into()));
    }
    Ok((e.perimeter() - g.perimeter()) / sd)
}

/// Empirical `Λ`: the largest perimeter gain per unit symmetric difference
/// over `n` random perturbations (amplitudes cycling through
/// [`DEFAULT_AMPLITUDES`]) and [`GROSS_SAMPLES`] gross ones. Perturbations
/// here are not volume-fixed and carry a constant mode.
pub fn lambda_minimality_check(state: &RegionState, n: usize, seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let mut best = f64::NEG_INFINITY;
    // gross amplitude stays inside the graph bound of curved interfaces
    let h_max = state.interface.curvature()?.iter().fold(0.0f64, |m, h| m.max(h.abs()));
    let gross = if h_max > 0.0 { GROSS_AMPLITUDE.min(0.2 / h_max) } else { GROSS_AMPLITUDE };
    for i in 0..n + GROSS_SAMPLES {
        let amp = if i < n { DEFAULT_AMPLITUDES[i % DEFAULT_AMPLITUDES.len()] } else { gross };
        let (_, g) = perturb_with_retries(state, &mut rng, amp, false)?;
        best = best.max(lambda_ratio(state, &g)?);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// `(amplitude, max ratio, min ratio)` per amplitude.
    pub per_amplitude: Vec<(f64, f64, f64)>,
    pub max_ratio: f64,
    pub seed: u64,
}

/// `|∫|∇v_F|² − ∫|∇v_E|²| / |F △ E|` over random perturbations that are not
/// volume-fixed; every shape is evaluated at every amplitude.
pub fn lipschitz_scan(state: &RegionState, shapes: usize, amplitudes: &[f64], seed: u64) -> Result<LipschitzReport> {
    let mut rng = rng(seed);
    let mut per: Vec<(f64, f64, f64)> = amplitudes.iter().map(|a| (*a, 0.0, f64::INFINITY)).collect();
    for _ in 0..shapes {
        let mut phi = random_shape(&state.interface, &mut rng, true);
        let mut tries = 1;
        loop {
            let ok: Result<Vec<RegionState>> = amplitudes.iter().map(|a| try_perturb(state, &phi, *a, false)).collect();
            match ok {
                Ok(fs) => {
                    for (slot, f) in per.iter_mut().zip(&fs) {
                        let (gap, sd) = lipschitz_gap(state, f)?;
                        let r = gap / sd;
                        slot.1 = slot.1.max(r);
                        slot.2 = slot.2.min(r);
                    }
                    break;
                }
                Err(_) if tries < MAX_REJECTIONS => {
                    phi = random_shape(&state.interface, &mut rng, true);
                    tries += 1;
                }
                Err(_) => return Err(Error::TooManyRejections(MAX_REJECTIONS)),
            }
        }
    }
    let max_ratio = per.iter().fold(0.0f64, |m, p| m.max(p.1));
    if !max_ratio.is_finite() {
        return Err(Error::NonFinite("Lipschitz ratio".into()));
    }
    Ok(LipschitzReport { per_amplitude: per, max_ratio, seed })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowStep {
    pub t: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub residual_sup: f64,
    pub area: f64,
    pub dt: f64,
    pub ortho_residual: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub final_state: RegionState,
    pub log: Vec<FlowStep>,
    /// Interfaces every `snapshot_every` accepted steps, first and last included.
    pub snapshots: Vec<Interface>,
}

/// Largest step allowed by the parabolic heuristic.
pub fn max_flow_dt(state: &RegionState) -> Result<f64> {
    let h = state.interface.perimeter() / state.interface.segment_count() as f64;
    let hmax = state.interface.curvature()?.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(0.4 * h * h / hmax.max(1.0))
}

fn flow_diagnostics(state: &RegionState, t: f64, dt: f64) -> Result<FlowStep> {
    let crit = criticality(state)?;
    Ok(FlowStep {
        t,
        j: crit.j,
        residual_sup: crit.residual_sup,
        area: state.area(),
        dt,
        ortho_residual: crit.ortho_residual,
    })
}

/// One explicit Euler step of the volume-preserving descent: interior nodes
/// move with normal velocity `−(H + 4γv − λ)`, chord endpoints slide along
/// their walls under the discrete energy gradient.
fn flow_step(state: &RegionState, dt: f64, target_area: f64) -> Result<RegionState> {
    let iface = &state.interface;
    let (lambda, res) = multiplier_and_residual(state)?;
    let normals = iface.normals();
    let n = iface.len();
    let mut nodes: Vec<Point> =
        iface.nodes.iter().zip(&normals).zip(&res).map(|((p, nu), r)| p - nu * (dt * r)).collect();
    if iface.is_chord() {
        let (w0, w1) = iface.endpoint_walls(&state.domain)?;
        let wq = iface.quadrature_weights();
        let v = crate::field::trace_on_curve(&state.fields()?.v, iface)?;
        let slide = |end: usize, inner: usize, wall: crate::domain::Wall| -> Result<Point> {
            let e = wall.tangent();
            let p = iface.nodes[end];
            let conormal = (p - iface.nodes[inner]).normalize();
            let force = conormal.dot(&e) / wq[end] + (4.0 * state.gamma * v[end] - lambda) * normals[end].dot(&e);
            reproject_endpoint(&state.domain, wall, &(p - e * (dt * force)))
        };
        nodes[0] = slide(0, 1, w0)?;
        nodes[n - 1] = slide(n - 1, n - 2, w1)?;
    }
    let moved = Interface::new(nodes, iface.topology, iface.inside).resample_count(n)?;
    moved.validate(&state.domain)?;
    let fixed = shift_to_area(&moved, &state.domain, &vec![0.0; n], target_area)?;
    state.with_interface(fixed)
}

/// Runs `steps` accepted steps. A step that raises `J` by more than
/// `1e-6·J` is retried with half the step, at most eight times; the reduced
/// step is kept afterwards.
pub fn volume_preserving_flow(state: &RegionState, dt: f64, steps: usize, snapshot_every: usize) -> Result<FlowResult> {
    let limit = max_flow_dt(state)?;
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("dt = {dt} outside (0, {limit}] (0.4·h²/max(1, sup|H|))")));
    }
    let target = state.area();
    let mut cur = state.clone();
    let mut dt = dt;
    let mut t = 0.0;
    let mut log = vec![flow_diagnostics(&cur, t, dt)?];
    let every = snapshot_every.max(1);
    let mut snapshots = vec![cur.interface.clone()];
    for step in 1..=steps {
        let j_old = log.last().map(|s| s.j).unwrap_or(f64::INFINITY);
        let mut halvings = 0;
        let next = loop {
            let cand = flow_step(&cur, dt, target)?;
            let j_new = energy_parts(&cand)?.j;
            if j_new <= j_old + 1e-6 * j_old.abs() {
                break cand;
            }
            if halvings == 8 {
                return Err(Error::DtUnderflow(step));
            }
            halvings += 1;
            dt *= 0.5;
        };
        t += dt;
        cur = next;
        log.push(flow_diagnostics(&cur, t, dt)?);
        if step % every == 0 || step == steps {
            snapshots.push(cur.interface.clone());
        }
    }
    Ok(FlowResult { final_state: cur, log, snapshots })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub a: f64,
    pub k_max: usize,
    pub tol: f64,
    pub bracket: (f64, f64),
    pub grid: usize,
    pub nodes: usize,
}

impl ThresholdConfig {
    pub fn new(a: f64, k_max: usize, tol: f64) -> Self {
        ThresholdConfig { a, k_max, tol, bracket: (0.0, 100.0), grid: 256, nodes: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub gamma_star: f64,
    pub mu_at_gamma_star: f64,
    pub iterations: usize,
    /// Smallest single-mode root `min_{k ≤ k_max} γ*_k` of the dispersion
    /// relation, with the mode attaining it.
    pub analytic_gamma_star: Option<f64>,
    pub analytic_mode: Option<usize>,
}

/// Bisection on `γ` of the smallest constrained eigenvalue of the assembled
/// form for the lamella `{x < a}` in the unit square.
pub fn gamma_threshold_search(cfg: &ThresholdConfig) -> Result<ThresholdReport> {
    let state = lamella_state(cfg.a, 0.0, cfg.grid, cfg.nodes)?;
    let parts = assemble_parts(&state, &FormOptions::default())?;
    let mu = |g: f64| -> Result<f64> { Ok(min_eig_zero_mean(&parts.combine(g)?)?.0) };
    let (mut lo, mut hi) = cfg.bracket;
    let (mut flo, fhi) = (mu(lo)?, mu(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(Error::NoSignChange { what: "mu_min(γ)".into(), lo, hi });
    }
    let mut iterations = 0;
    let (mut g, mut fg) = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    while fg.abs() > cfg.tol && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        let fm = mu(mid)?;
        iterations += 1;
        (g, fg) = (mid, fm);
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    let analytic = lamella_gamma_star_min(cfg.a, cfg.k_max.max(1)).ok();
    Ok(ThresholdReport {
        gamma_star: g,
        mu_at_gamma_star: fg,
        iterations,
        analytic_gamma_star: analytic.map(|x| x.0),
        analytic_mode: analytic.map(|x| x.1),
    })
}
