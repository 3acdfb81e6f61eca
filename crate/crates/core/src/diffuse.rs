//! Diffuse-interface companion: the phase-field energy
//! `E_ε(u) = ε∫|∇u|² + (1/ε)∫(u²−1)² + γ₀∫|∇v|²` and a mass-conserving
//! descent that relaxes toward its constrained critical points.

use serde::Serialize;

use crate::domain::{build_grid, DomainSpec, Grid};
use crate::error::{Error, Result};
use crate::field::{apply_neg_laplacian, dirichlet_energy, PoissonSolver, ScalarField};
use crate::interface::RegionState;

/// `∫ ε|u'|² + (1/ε)(u²−1)²` of the optimal 1D profile `tanh(x/ε)`.
pub const SURFACE_CONSTANT: f64 = 8.0 / 3.0;

/// Safety factor in front of the explicit step bound.
pub const DT_FACTOR: f64 = 0.1;

const MAX_HALVINGS: usize = 8;

#[derive(Clone, Debug)]
pub struct DiffuseState {
    pub u: ScalarField,
    pub epsilon: f64,
    pub gamma0: f64,
    /// Conserved spatial mean of `u`.
    pub m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiffuseStep {
    pub t: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub mass: f64,
}

#[derive(Clone, Debug)]
pub struct DiffuseFlow {
    pub state: DiffuseState,
    pub log: Vec<DiffuseStep>,
    /// Step actually in use at the end, after any halvings.
    pub dt: f64,
}

impl DiffuseState {
    /// Takes `m` from the mean of `u`.
    pub fn new(u: ScalarField, epsilon: f64, gamma0: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Precondition(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(gamma0 >= 0.0) || !gamma0.is_finite() {
            return Err(Error::Precondition(format!("gamma0 must be >= 0, got {gamma0}")));
        }
        if u.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("phase field".into()));
        }
        let m = u.mean();
        Ok(DiffuseState { u, epsilon, gamma0, m })
    }

    /// Starts from the rasterized `u_E` of a sharp configuration, with `γ₀ = γ`.
    pub fn from_region(state: &RegionState, epsilon: f64) -> Result<Self> {
        DiffuseState::new(state.fields()?.u.clone(), epsilon, state.gamma)
    }

    /// `u = tanh((a − x)/ε)`: the optimal profile across the line `x = a`,
    /// positive on `x < a`.
    pub fn tanh_lamella(dom: &DomainSpec, a: f64, epsilon: f64, gamma0: f64) -> Result<Self> {
        let grid = build_grid(dom)?;
        let u = ScalarField::from_fn(grid, |p| ((a - p.x) / epsilon).tanh());
        DiffuseState::new(u, epsilon, gamma0)
    }

    pub fn grid(&self) -> &Grid {
        &self.u.grid
    }

    pub fn mass(&self) -> f64 {
        self.u.mean()
    }
}

/// Largest step accepted by [`conserved_gradient_flow`]:
/// `0.1·min(h²/ε, ε)`, covering both the diffusion and the well stiffness.
pub fn max_diffuse_dt(grid: &Grid, epsilon: f64) -> f64 {
    let h = grid.hx.min(grid.hy);
    DT_FACTOR * (h * h / epsilon).min(epsilon)
}

fn well_energy(u: &[f64], cell: f64) -> f64 {
    u.iter().map(|x| (x * x - 1.0) * (x * x - 1.0)).sum::<f64>() * cell
}

fn potential(solver: &PoissonSolver, u: &ScalarField) -> Result<ScalarField> {
    Ok(ScalarField { grid: u.grid, values: solver.solve(&u.values)?, mean_zero: true })
}

fn energy_with(ds: &DiffuseState, solver: Option<&PoissonSolver>) -> Result<(f64, Option<ScalarField>)> {
    let cell = ds.u.grid.cell_area();
    let mut e = ds.epsilon * dirichlet_energy(&ds.u) + well_energy(&ds.u.values, cell) / ds.epsilon;
    let mut v = None;
    if ds.gamma0 > 0.0 {
        let owned;
        let solver = match solver {
            Some(s) => s,
            None => {
                owned = PoissonSolver::new(ds.u.grid);
                &owned
            }
        };
        let pot = potential(solver, &ds.u)?;
        e += ds.gamma0 * dirichlet_energy(&pot);
        v = Some(pot);
    }
    if !e.is_finite() {
        return Err(Error::NonFinite("diffuse energy".into()));
    }
    Ok((e, v))
}

/// `E_ε(u)` by cell quadrature; the gradient term uses face differences with
/// natural (Neumann) or periodic closure.
pub fn diffuse_energy(ds: &DiffuseState) -> Result<f64> {
    Ok(energy_with(ds, None)?.0)
}

/// Per-cell `L²` gradient `2ε(−Δu) + (4/ε)u(u²−1) + 2γ₀v`.
fn energy_gradient(ds: &DiffuseState, v: Option<&ScalarField>) -> Vec<f64> {
    let grid = &ds.u.grid;
    let mut g = vec![0.0; grid.len()];
    apply_neg_laplacian(grid, &ds.u.values, &mut g);
    for (k, gk) in g.iter_mut().enumerate() {
        let x = ds.u.values[k];
        *gk = 2.0 * ds.epsilon * *gk + 4.0 / ds.epsilon * x * (x * x - 1.0);
        if let Some(v) = v {
            *gk += 2.0 * ds.gamma0 * v.values[k];
        }
    }
    g
}

/// Explicit `L²` descent with the mean of every update removed, so that
/// `mean(u)` stays at `m`. A step that raises the energy is retried with half
/// the step (the halved step is kept); eight failed halvings abort. Updates
/// that change the energy only at round-off level are not applied.
pub fn conserved_gradient_flow(ds: &DiffuseState, dt: f64, steps: usize) -> Result<DiffuseFlow> {
    let limit = max_diffuse_dt(ds.grid(), ds.epsilon);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("dt = {dt} outside (0, {limit}] (0.1·min(h²/ε, ε))")));
    }
    let solver = (ds.gamma0 > 0.0).then(|| PoissonSolver::new(ds.u.grid));
    let mut cur = ds.clone();
    let (mut e, mut v) = energy_with(&cur, solver.as_ref())?;
    let mut dt = dt;
    let mut t = 0.0;
    let mut log = Vec::with_capacity(steps + 1);
    log.push(DiffuseStep { t, energy: e, mass: cur.mass() });
    for step in 1..=steps {
        let mut g = energy_gradient(&cur, v.as_ref());
        let gm = g.iter().sum::<f64>() / g.len() as f64;
        g.iter_mut().for_each(|x| *x -= gm);
        let mut halvings = 0;
        let (next, e_new, v_new) = loop {
            let mut cand = cur.clone();
            cand.u.values.iter_mut().zip(&g).for_each(|(u, g)| *u -= dt * g);
            if cand.u.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("phase field".into()));
            }
            let (e_new, v_new) = energy_with(&cand, solver.as_ref())?;
            if e_new <= e {
                break (cand, e_new, v_new);
            }
            // A rise at round-off level means the state is stationary.
            if e_new <= e + 1e-13 * e.abs() {
                break (cur.clone(), e, v.clone());
            }
            if halvings == MAX_HALVINGS {
                return Err(Error::DtUnderflow(step));
            }
            halvings += 1;
            dt *= 0.5;
        };
        t += dt;
        cur = next;
        e = e_new;
        v = v_new;
        log.push(DiffuseStep { t, energy: e, mass: cur.mass() });
    }
    Ok(DiffuseFlow { state: cur, log, dt })
}

/// Mean over grid rows of the distance between the crossings of
/// `u = −0.8` and `u = 0.8` along `x` (the 10–90% length of `(u+1)/2`).
pub fn interface_width(ds: &DiffuseState) -> Result<f64> {
    let g = ds.grid();
    let crossing = |row: &[f64], level: f64| -> Option<f64> {
        row.windows(2).enumerate().find_map(|(i, w)| {
            let (a, b) = (w[0] - level, w[1] - level);
            (a == 0.0 || a * b < 0.0).then(|| (i as f64 + 0.5 + a / (a - b)) * g.hx)
        })
    };
    let mut total = 0.0;
    for j in 0..g.ny {
        let row = &ds.u.values[j * g.nx..(j + 1) * g.nx];
        match (crossing(row, -0.8), crossing(row, 0.8)) {
            (Some(lo), Some(hi)) => total += (hi - lo).abs(),
            _ => return Err(Error::Precondition(format!("row {j} has no full transition between -0.8 and 0.8"))),
        }
    }
    Ok(total / g.ny as f64)
}

/// `Σ |χ_{u>0} − fraction(E)|·cell_area`, the `L¹` distance between the
/// positive phase and the sharp set, halved in `u`-units.
pub fn sharp_limit_compare(ds: &DiffuseState, state: &RegionState) -> Result<f64> {
    if ds.u.grid != state.grid {
        return Err(Error::Mismatch("phase field and region live on different grids".into()));
    }
    let ue = &state.fields()?.u;
    let cell = state.grid.cell_area();
    Ok(ds
        .u
        .values
        .iter()
        .zip(&ue.values)
        .map(|(u, e)| {
            let chi = if *u > 0.0 { 1.0 } else { 0.0 };
            (chi - 0.5 * (e + 1.0)).abs()
        })
        .sum::<f64>()
        * cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;
    use crate::interface::Interface;

    fn constant(dom: &DomainSpec, c: f64, eps: f64) -> DiffuseState {
        let g = build_grid(dom).unwrap();
        DiffuseState::new(ScalarField::from_fn(g, |_| c), eps, 2.0).unwrap()
    }

    #[test]
    fn pure_well_cost_at_zero() {
        let d = DomainSpec::rectangle(2.0, 1.0, 32, 16);
        let e = diffuse_energy(&constant(&d, 0.0, 0.05)).unwrap();
        assert!((e - 2.0 / 0.05).abs() < 1e-10);
    }

    #[test]
    fn pure_phase_costs_nothing() {
        let d = DomainSpec::unit_square(32);
        assert_eq!(diffuse_energy(&constant(&d, 1.0, 0.05)).unwrap(), 0.0);
    }

    #[test]
    fn tanh_profile_carries_surface_constant() {
        // Resolved profile, walls far away: the energy per unit length is 8/3.
        let d = DomainSpec::rectangle(1.0, 1.0 / 64.0, 1024, 16);
        let ds = DiffuseState::tanh_lamella(&d, 0.5, 0.02, 0.0).unwrap();
        let e = diffuse_energy(&ds).unwrap() / d.ly;
        assert!((e - SURFACE_CONSTANT).abs() < 2e-3 * SURFACE_CONSTANT, "{e}");
    }

    #[test]
    fn constant_state_is_stationary() {
        let d = DomainSpec::unit_square(32);
        let ds = constant(&d, 0.3, 0.05);
        let dt = max_diffuse_dt(ds.grid(), ds.epsilon);
        let out = conserved_gradient_flow(&ds, dt, 50).unwrap();
        let dev = out.state.u.values.iter().fold(0.0f64, |m, x| m.max((x - 0.3).abs()));
        assert!(dev < 1e-13, "{dev}");
    }

    #[test]
    fn rejects_oversized_step() {
        let d = DomainSpec::unit_square(32);
        let ds = constant(&d, 0.0, 0.05);
        let dt = max_diffuse_dt(ds.grid(), ds.epsilon);
        assert!(matches!(conserved_gradient_flow(&ds, 2.0 * dt, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn step_data_relaxes_with_decreasing_energy() {
        let d = DomainSpec::rectangle(1.0, 1.0 / 16.0, 256, 16);
        let g = build_grid(&d).unwrap();
        let u = ScalarField::from_fn(g, |p| if p.x < 0.37 { 1.0 } else { -1.0 });
        let ds = DiffuseState::new(u, 0.02, 0.0).unwrap();
        let dt = max_diffuse_dt(ds.grid(), ds.epsilon);
        let out = conserved_gradient_flow(&ds, dt, 2000).unwrap();
        assert!(out.log.windows(2).all(|w| w[1].energy <= w[0].energy));
        assert!(out.log.last().unwrap().energy < out.log[0].energy);
        let drift = out.log.iter().fold(0.0f64, |m, s| m.max((s.mass - ds.m).abs()));
        assert!(drift < 1e-12, "{drift}");
        let w = interface_width(&out.state).unwrap();
        let ideal = 2.0 * 0.8f64.atanh() * 0.02;
        assert!((w - ideal).abs() < 0.05 * ideal, "{w} vs {ideal}");
    }

    #[test]
    fn nonlocal_term_matches_sharp_potential() {
        let d = DomainSpec::unit_square(32);
        let s = RegionState::new(Interface::lamella(&d, 0.3, 32), d, 2.0).unwrap();
        let ds = DiffuseState::from_region(&s, 0.05).unwrap();
        let local =
            ds.epsilon * dirichlet_energy(&ds.u) + well_energy(&ds.u.values, ds.grid().cell_area()) / ds.epsilon;
        let nl = diffuse_energy(&ds).unwrap() - local;
        assert!((nl - 2.0 * dirichlet_energy(&s.fields().unwrap().v)).abs() < 1e-10);
    }

    #[test]
    fn flow_with_nonlocal_coupling_descends() {
        let d = DomainSpec::unit_square(32);
        let s = RegionState::new(Interface::circle(Point::new(0.5, 0.5), 0.3, 64), d, 5.0).unwrap();
        let ds = DiffuseState::from_region(&s, 0.06).unwrap();
        let dt = max_diffuse_dt(ds.grid(), ds.epsilon);
        let out = conserved_gradient_flow(&ds, dt, 200).unwrap();
        assert!(out.log.windows(2).all(|w| w[1].energy <= w[0].energy));
        assert!((out.state.mass() - ds.m).abs() < 1e-12);
    }

    #[test]
    fn sharp_compare_limits() {
        let d = DomainSpec::unit_square(64);
        let s = RegionState::new(Interface::lamella(&d, 0.5, 16), d.clone(), 0.0).unwrap();
        let minus = constant(&d, -1.0, 0.05);
        assert!((sharp_limit_compare(&minus, &s).unwrap() - 0.5).abs() < 1e-12);
        let same = DiffuseState::from_region(&s, 0.05).unwrap();
        assert!(sharp_limit_compare(&same, &s).unwrap() < 1e-12);
        let off = RegionState::new(Interface::lamella(&d, 0.33, 16), d, 0.0).unwrap();
        let own = DiffuseState::from_region(&off, 0.05).unwrap();
        let straddle = 64.0 * off.grid.cell_area();
        assert!(sharp_limit_compare(&own, &off).unwrap() <= straddle);
    }

    #[test]
    fn compare_rejects_other_grid() {
        let d = DomainSpec::unit_square(32);
        let s = RegionState::new(Interface::lamella(&d, 0.5, 16), d, 0.0).unwrap();
        let ds = constant(&DomainSpec::unit_square(16), 1.0, 0.05);
        assert!(matches!(sharp_limit_compare(&ds, &s), Err(Error::Mismatch(_))));
    }
}
