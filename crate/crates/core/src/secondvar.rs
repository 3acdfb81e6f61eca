//! The quadratic form `∂²J(E)[φ]` as a symmetric matrix over node values,
//! its smallest eigenvalue under the zero-mean constraint, the second
//! variation along a vector field for non-critical sets, and the analytic
//! lamella dispersion relation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::domain::{boundary_curvature, build_grid, DomainKind, DomainSpec, Grid, Point};
use crate::energy::{criticality, first_variation_density, CriticalityReport};
use crate::error::{Error, Result};
use crate::field::{gradient_at, gradient_on_curve, nonlocal_pair, LineQuadrature, PoissonSolver};
use crate::interface::{Interface, RegionState, Topology};

/// Default verdict tolerances.
pub const TOL_POS: f64 = 1e-3 * std::f64::consts::PI * std::f64::consts::PI;
pub const TOL_CRIT: f64 = 1e-2;
/// Largest endpoint angle residual (radians) accepted as orthogonal.
pub const ORTHO_TOL: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormOptions {
    /// Add the interpolation-bias correction to the nonlocal block.
    pub kink_correction: bool,
    /// Assemble the nonlocal block only on this many leading Fourier modes of
    /// the curve.
    pub truncate_modes: Option<usize>,
}

impl Default for FormOptions {
    fn default() -> Self {
        FormOptions { kink_correction: true, truncate_modes: None }
    }
}

/// The `γ`-independent blocks of the form: `A(γ) = S − K − Bd + γ(8N + 4V)`.
#[derive(Clone, Debug)]
pub struct FormParts {
    pub stiffness: DMatrix<f64>,
    /// Diagonal of `K`: `H² · Wq`.
    pub curvature: Vec<f64>,
    /// Diagonal of `Bd`: boundary curvature at chord endpoints.
    pub boundary: Vec<f64>,
    pub nonlocal: DMatrix<f64>,
    /// Diagonal of `V`: `⟨∇v, ν⟩ · Wq`.
    pub potential: Vec<f64>,
    pub wq: Vec<f64>,
    /// `max|N − Nᵀ| / max|N|` before symmetrization.
    pub nonlocal_asymmetry: f64,
    pub domain_kind: DomainKind,
}

#[derive(Clone, Debug)]
pub struct QuadraticFormMatrix {
    pub a: DMatrix<f64>,
    pub wq: Vec<f64>,
    /// The constraint functional `φ ↦ Σ mean_vec·φ`.
    pub mean_vec: Vec<f64>,
    pub gamma: f64,
    pub n_nodes: usize,
    pub domain_kind: DomainKind,
    pub nonlocal_asymmetry: f64,
}

impl QuadraticFormMatrix {
    pub fn value(&self, phi: &[f64]) -> f64 {
        let p = DVector::from_column_slice(phi);
        p.dot(&(&self.a * &p))
    }

    /// `Σ Wq φ² `
    pub fn mass(&self, phi: &[f64]) -> f64 {
        phi.iter().zip(&self.wq).map(|(p, w)| w * p * p).sum()
    }

    /// Removes the `Wq`-weighted mean.
    pub fn project_zero_mean(&self, phi: &[f64]) -> Vec<f64> {
        let total: f64 = self.wq.iter().sum();
        let mean = phi.iter().zip(&self.mean_vec).map(|(p, w)| p * w).sum::<f64>() / total;
        phi.iter().map(|p| p - mean).collect()
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// P1 stiffness of `∫|φ′|² ds` with free ends.
fn stiffness_matrix(iface: &Interface) -> DMatrix<f64> {
    let n = iface.len();
    let mut s = DMatrix::zeros(n, n);
    for (k, l) in iface.segment_lengths().iter().enumerate() {
        let (a, b) = iface.segment(k);
        let c = 1.0 / l;
        s[(a, a)] += c;
        s[(b, b)] += c;
        s[(a, b)] -= c;
        s[(b, a)] -= c;
    }
    s
}

/// `∫|φ′|² ds` for the piecewise-linear interpolant.
pub fn h1_seminorm_sq(iface: &Interface, phi: &[f64]) -> f64 {
    iface
        .segment_lengths()
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let (a, b) = iface.segment(k);
            (phi[b] - phi[a]).powi(2) / l
        })
        .sum()
}

fn boundary_terms(state: &RegionState) -> Result<Vec<f64>> {
    let iface = &state.interface;
    let mut bd = vec![0.0; iface.len()];
    if iface.topology == Topology::Chord && !state.domain.is_torus() {
        let last = iface.len() - 1;
        bd[0] = boundary_curvature(&state.domain, &iface.nodes[0])?;
        bd[last] = boundary_curvature(&state.domain, &iface.nodes[last])?;
    }
    Ok(bd)
}

/// Leading Fourier modes of the curve, orthonormal in the lumped `Wq` inner
/// product.
fn curve_modes(iface: &Interface, count: usize) -> Vec<Vec<f64>> {
    let s = iface.arclength();
    let wq = iface.quadrature_weights();
    let len = iface.perimeter();
    let raw: Vec<Vec<f64>> = match iface.topology {
        Topology::Chord => {
            (0..count).map(|k| s.iter().map(|s| (k as f64 * std::f64::consts::PI * s / len).cos()).collect()).collect()
        }
        Topology::Loop => (0..count)
            .map(|k| {
                let m = k.div_ceil(2) as f64;
                s.iter()
                    .map(|s| {
                        let t = std::f64::consts::TAU * m * s / len;
                        if k % 2 == 1 {
                            t.cos()
                        } else if k == 0 {
                            1.0
                        } else {
                            t.sin()
                        }
                    })
                    .collect()
            })
            .collect(),
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(&wq).map(|((x, y), w)| x * y * w).sum::<f64>();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in raw {
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let nrm = dot(&v, &v).sqrt();
        if nrm > 1e-10 {
            v.iter_mut().for_each(|x| *x /= nrm);
            basis.push(v);
        }
    }
    basis
}

fn nonlocal_block(iface: &Interface, grid: &Grid, opts: &FormOptions) -> Result<(DMatrix<f64>, f64)> {
    let n = iface.len();
    let quad = LineQuadrature::new(iface, grid)?;
    let solver = PoissonSolver::new(*grid);
    let column = |phi: &[f64]| -> Result<Vec<f64>> {
        let w = solver.solve(&quad.splat(phi))?;
        Ok(quad.trace_vector(&w))
    };
    let mut nmat = DMatrix::zeros(n, n);
    match opts.truncate_modes {
        None => {
            let mut e = vec![0.0; n];
            for j in 0..n {
                e[j] = 1.0;
                let col = column(&e)?;
                e[j] = 0.0;
                for i in 0..n {
                    nmat[(i, j)] = col[i];
                }
            }
            if opts.kink_correction {
                for (a, b, c) in quad.kink_correction_entries() {
                    nmat[(a, b)] += c;
                }
            }
        }
        Some(m) => {
            // N ≈ D C (Cᵀ N C) Cᵀ D with D-orthonormal modes C
            let modes = curve_modes(iface, m.min(n));
            let wq = iface.quadrature_weights();
            let mut kink = DMatrix::<f64>::zeros(n, n);
            if opts.kink_correction {
                for (a, b, c) in quad.kink_correction_entries() {
                    kink[(a, b)] += c;
                }
            }
            let r = modes.len();
            let c = DMatrix::from_fn(n, r, |i, j| modes[j][i]);
            let mut reduced = DMatrix::zeros(r, r);
            for (j, mode) in modes.iter().enumerate() {
                let mut col = DVector::from_vec(column(mode)?);
                col += &kink * DVector::from_column_slice(mode);
                let proj = c.transpose() * col;
                reduced.set_column(j, &proj);
            }
            let dc = DMatrix::from_fn(n, r, |i, j| wq[i] * c[(i, j)]);
            nmat = &dc * reduced * dc.transpose();
        }
    }
    let scale = max_abs(&nmat);
    let asym = if scale > 0.0 { max_abs(&(&nmat - nmat.transpose())) / scale } else { 0.0 };
    let sym = (&nmat + nmat.transpose()) * 0.5;
    Ok((sym, asym))
}

pub fn assemble_parts(state: &RegionState, opts: &FormOptions) -> Result<FormParts> {
    let iface = &state.interface;
    let wq = iface.quadrature_weights();
    if wq.iter().any(|w| *w <= 0.0) {
        return Err(Error::Degenerate("non-positive quadrature weight".into()));
    }
    let stiffness = stiffness_matrix(iface);
    let curvature: Vec<f64> = iface.second_fundamental_form_sq()?.iter().zip(&wq).map(|(h2, w)| h2 * w).collect();
    let boundary = boundary_terms(state)?;
    let (nonlocal, nonlocal_asymmetry) = nonlocal_block(iface, &state.grid, opts)?;
    let grad = gradient_on_curve(&state.fields()?.v, iface)?;
    let potential: Vec<f64> = grad.iter().zip(&wq).map(|(g, w)| g * w).collect();
    Ok(FormParts {
        stiffness,
        curvature,
        boundary,
        nonlocal,
        potential,
        wq,
        nonlocal_asymmetry,
        domain_kind: state.domain.kind,
    })
}

impl FormParts {
    pub fn combine(&self, gamma: f64) -> Result<QuadraticFormMatrix> {
        let n = self.wq.len();
        let mut a = &self.stiffness + &self.nonlocal * (8.0 * gamma);
        for i in 0..n {
            a[(i, i)] += -self.curvature[i] - self.boundary[i] + 4.0 * gamma * self.potential[i];
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("quadratic form entry".into()));
        }
        Ok(QuadraticFormMatrix {
            a,
            wq: self.wq.clone(),
            mean_vec: self.wq.clone(),
            gamma,
            n_nodes: n,
            domain_kind: self.domain_kind,
            nonlocal_asymmetry: self.nonlocal_asymmetry,
        })
    }
}

pub fn assemble_form(state: &RegionState) -> Result<QuadraticFormMatrix> {
    assemble_form_with(state, &FormOptions::default())
}

pub fn assemble_form_with(state: &RegionState, opts: &FormOptions) -> Result<QuadraticFormMatrix> {
    assemble_parts(state, opts)?.combine(state.gamma)
}

/// Term-by-term values of the form at one `φ`, using a single auxiliary
/// solve for the nonlocal term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormTerms {
    pub stiffness: f64,
    pub curvature: f64,
    pub boundary: f64,
    pub nonlocal: f64,
    pub potential: f64,
    pub total: f64,
}

pub fn form_terms(state: &RegionState, phi: &[f64], kink_correction: bool) -> Result<FormTerms> {
    let iface = &state.interface;
    if phi.len() != iface.len() {
        return Err(Error::Mismatch(format!("phi has {} values for {} nodes", phi.len(), iface.len())));
    }
    let wq = iface.quadrature_weights();
    let stiffness = h1_seminorm_sq(iface, phi);
    let h2 = iface.second_fundamental_form_sq()?;
    let curvature: f64 = h2.iter().zip(&wq).zip(phi).map(|((h, w), p)| h * w * p * p).sum();
    let bd = boundary_terms(state)?;
    let boundary: f64 = bd.iter().zip(phi).map(|(b, p)| b * p * p).sum();
    let (nonlocal, potential) = if state.gamma == 0.0 {
        (0.0, 0.0)
    } else {
        let quad = LineQuadrature::new(iface, &state.grid)?;
        let solver = PoissonSolver::new(state.grid);
        let nl = nonlocal_pair(&quad, &solver, phi, phi, kink_correction)?;
        let g = gradient_on_curve(&state.fields()?.v, iface)?;
        let pot: f64 = g.iter().zip(&wq).zip(phi).map(|((g, w), p)| g * w * p * p).sum();
        (nl, pot)
    };
    let gamma = state.gamma;
    let total = stiffness - curvature - boundary + 8.0 * gamma * nonlocal + 4.0 * gamma * potential;
    Ok(FormTerms { stiffness, curvature, boundary, nonlocal, potential, total })
}

/// Smallest eigenpair of `A φ = μ D φ` on `{Σ Wq φ = 0}`, `D = diag(Wq)`.
/// The mode is normalized to `Σ Wq φ² = 1` with its largest entry positive.
pub fn min_eig_zero_mean(form: &QuadraticFormMatrix) -> Result<(f64, Vec<f64>)> {
    let n = form.n_nodes;
    if n < 2 {
        return Err(Error::Eigen("need at least two nodes".into()));
    }
    let sq: Vec<f64> = form.wq.iter().map(|w| w.sqrt()).collect();
    let b = DMatrix::from_fn(n, n, |i, j| form.a[(i, j)] / (sq[i] * sq[j]));
    // Householder reflector sending q = √Wq/|√Wq| to a multiple of e₀; its
    // remaining columns span q⊥.
    let mut q = DVector::from_vec(sq.clone());
    q /= q.norm();
    let mut u = q.clone();
    u[0] += if q[0] >= 0.0 { 1.0 } else { -1.0 };
    let uu = u.dot(&u);
    let house = DMatrix::identity(n, n) - (&u * u.transpose()) * (2.0 / uu);
    let basis = house.columns(1, n - 1).into_owned();
    let mut reduced = basis.transpose() * &b * &basis;
    reduced = (&reduced + reduced.transpose()) * 0.5;
    if reduced.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("non-finite reduced matrix".into()));
    }
    let eig = SymmetricEigen::try_new(reduced, 1e-14, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigen-solver did not converge".into()))?;
    let (k, mu) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, m)| (k, *m))
        .ok_or_else(|| Error::Eigen("empty spectrum".into()))?;
    let y = &basis * eig.eigenvectors.column(k);
    let mut mode: Vec<f64> = y.iter().zip(&sq).map(|(y, s)| y / s).collect();
    // drop the round-off component along the constraint
    let total: f64 = form.wq.iter().sum();
    let mean = mode.iter().zip(&form.wq).map(|(p, w)| p * w).sum::<f64>() / total;
    mode.iter_mut().for_each(|p| *p -= mean);
    let nrm = form.mass(&mode).sqrt();
    let imax = mode
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let sign = if mode[imax] < 0.0 { -1.0 } else { 1.0 };
    mode.iter_mut().for_each(|p| *p *= sign / nrm);
    Ok((mu, mode))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub pos: f64,
    pub crit: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { pos: TOL_POS, crit: TOL_CRIT }
    }
}

pub fn verdict(mu_min: f64, residual_sup: f64, tol: &Tolerances) -> Verdict {
    if mu_min > tol.pos && residual_sup < tol.crit {
        Verdict::Stable
    } else if mu_min < -tol.pos {
        Verdict::Unstable
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub mu_min: f64,
    pub mode: Vec<f64>,
    pub criticality: CriticalityReport,
    pub verdict: Verdict,
    pub gap_estimate: f64,
}

pub fn stability_report(state: &RegionState) -> Result<StabilityReport> {
    stability_report_with(state, &FormOptions::default(), &Tolerances::default())
}

pub fn stability_report_with(state: &RegionState, opts: &FormOptions, tol: &Tolerances) -> Result<StabilityReport> {
    let crit = criticality(state)?;
    let form = assemble_form_with(state, opts)?;
    let (mu_min, mode) = min_eig_zero_mean(&form)?;
    let gap_estimate = mu_min / (form.mass(&mode) + h1_seminorm_sq(&state.interface, &mode));
    Ok(StabilityReport {
        mu_min,
        verdict: verdict(mu_min, crit.residual_sup, tol),
        mode,
        criticality: crit,
        gap_estimate,
    })
}

/// `W_k(a) = cosh(kπa) cosh(kπ(1−a)) / (kπ sinh kπ)`, the on-line value of
/// the Neumann Green's function for the `cos(kπy)` mode of a unit square.
pub fn lamella_green_mode(a: f64, k: usize) -> f64 {
    let kp = k as f64 * std::f64::consts::PI;
    // cosh(x)cosh(y)/sinh(x+y) evaluated without overflow
    let (x, y) = (kp * a, kp * (1.0 - a));
    let num = (1.0 + (-2.0 * x).exp()) * (1.0 + (-2.0 * y).exp());
    let den = 2.0 * (1.0 - (-2.0 * kp).exp());
    num / den / kp
}

fn check_lamella_args(a: f64, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Precondition("mode k = 0 violates the zero-mean constraint".into()));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Precondition(format!("lamella fraction {a} outside (0, 1)")));
    }
    Ok(())
}

/// The nonlocal bracket `W_k(a) − a(1−a)`.
pub fn dispersion_bracket(a: f64, k: usize) -> Result<f64> {
    check_lamella_args(a, k)?;
    Ok(lamella_green_mode(a, k) - a * (1.0 - a))
}

/// `μ(k) = k²π²/2 + 4γ[W_k(a) − a(1−a)]`: the form of the lamella `{x < a}`
/// in the unit square at `φ = cos(kπy)`.
pub fn lamella_dispersion(a: f64, gamma: f64, k: usize) -> Result<f64> {
    let bracket = dispersion_bracket(a, k)?;
    let kp = k as f64 * std::f64::consts::PI;
    Ok(0.5 * kp * kp + 4.0 * gamma * bracket)
}

/// Root in `γ` of `μ(k) = 0`.
pub fn lamella_gamma_star(a: f64, k: usize) -> Result<f64> {
    let bracket = dispersion_bracket(a, k)?;
    if bracket >= 0.0 {
        return Err(Error::Precondition(format!("mode {k} is stable for every γ at a = {a}")));
    }
    let kp = k as f64 * std::f64::consts::PI;
    Ok(0.5 * kp * kp / (-4.0 * bracket))
}

/// Smallest single-mode threshold over `k = 1..=k_max`, with its mode.
pub fn lamella_gamma_star_min(a: f64, k_max: usize) -> Result<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for k in 1..=k_max {
        if let Ok(g) = lamella_gamma_star(a, k) {
            if best.is_none_or(|(b, _)| g < b) {
                best = Some((g, k));
            }
        }
    }
    best.ok_or_else(|| Error::Precondition(format!("no unstable mode up to k = {k_max} at a = {a}")))
}

/// A vector field sampled on grid vertices, interpolated bilinearly.
#[derive(Clone, Debug)]
pub struct GridVectorField {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl GridVectorField {
    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> Point) -> Self {
        let (mx, my) = (grid.nx + 1, grid.ny + 1);
        let mut x = Vec::with_capacity(mx * my);
        let mut y = Vec::with_capacity(mx * my);
        for j in 0..my {
            for i in 0..mx {
                let v = f(Point::new(i as f64 * grid.hx, j as f64 * grid.hy));
                x.push(v.x);
                y.push(v.y);
            }
        }
        GridVectorField { grid, x, y }
    }

    pub fn zeros(grid: Grid) -> Self {
        GridVectorField::from_fn(grid, |_| Point::zeros())
    }

    #[inline]
    fn vidx(&self, i: usize, j: usize) -> usize {
        j * (self.grid.nx + 1) + i
    }

    pub fn max_norm(&self) -> f64 {
        self.x.iter().zip(&self.y).fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)))
    }

    fn cell_of(&self, p: &Point) -> (usize, usize, f64, f64) {
        let g = &self.grid;
        let fx = (p.x / g.hx).clamp(0.0, g.nx as f64);
        let fy = (p.y / g.hy).clamp(0.0, g.ny as f64);
        let i = (fx.floor() as usize).min(g.nx - 1);
        let j = (fy.floor() as usize).min(g.ny - 1);
        (i, j, fx - i as f64, fy - j as f64)
    }

    fn bilinear(&self, vals: &[f64], p: &Point) -> f64 {
        let (i, j, tx, ty) = self.cell_of(p);
        (1.0 - tx) * (1.0 - ty) * vals[self.vidx(i, j)]
            + tx * (1.0 - ty) * vals[self.vidx(i + 1, j)]
            + (1.0 - tx) * ty * vals[self.vidx(i, j + 1)]
            + tx * ty * vals[self.vidx(i + 1, j + 1)]
    }

    pub fn at(&self, p: &Point) -> Point {
        Point::new(self.bilinear(&self.x, p), self.bilinear(&self.y, p))
    }

    /// Vertex divergence by centered differences (one-sided on the outer
    /// vertex rows and columns, wrapped on a torus).
    pub fn divergence_vertices(&self) -> Vec<f64> {
        let g = &self.grid;
        let (mx, my) = (g.nx + 1, g.ny + 1);
        let mut out = vec![0.0; mx * my];
        let d = |vals: &[f64], i: usize, j: usize, along_x: bool| -> f64 {
            let (n, h) = if along_x { (g.nx, g.hx) } else { (g.ny, g.hy) };
            let k = if along_x { i } else { j };
            let at = |kk: usize| if along_x { vals[self.vidx(kk, j)] } else { vals[self.vidx(i, kk)] };
            if g.periodic {
                // vertex n coincides with vertex 0
                let prev = if k == 0 { n - 1 } else { k - 1 };
                let next = if k == n { 1 } else { k + 1 };
                (at(next) - at(prev)) / (2.0 * h)
            } else if k == 0 {
                (at(1) - at(0)) / h
            } else if k == n {
                (at(n) - at(n - 1)) / h
            } else {
                (at(k + 1) - at(k - 1)) / (2.0 * h)
            }
        };
        for j in 0..my {
            for i in 0..mx {
                out[self.vidx(i, j)] = d(&self.x, i, j, true) + d(&self.y, i, j, false);
            }
        }
        out
    }

    /// Largest normal component on the walls of a rectangle.
    pub fn tangential_violation(&self) -> f64 {
        let g = &self.grid;
        if g.periodic {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..=g.nx {
            worst = worst.max(self.y[self.vidx(i, 0)].abs()).max(self.y[self.vidx(i, g.ny)].abs());
        }
        for j in 0..=g.ny {
            worst = worst.max(self.x[self.vidx(0, j)].abs()).max(self.x[self.vidx(g.nx, j)].abs());
        }
        worst
    }
}

/// The pieces of the second variation along a vector field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondVariation {
    /// `∂²J(E)[⟨X, ν⟩]`
    pub form_part: f64,
    /// `−∫ (H + 4γv) div_τ(X_τ ⟨X, ν⟩)`
    pub tangential_term: f64,
    /// `∫ (H + 4γv) div(X) ⟨X, ν⟩`
    pub divergence_term: f64,
    pub total: f64,
}

/// Second derivative of `t ↦ J(Φ(E, t))` at `t = 0` for the flow of `x`.
pub fn general_second_variation(state: &RegionState, x: &GridVectorField) -> Result<SecondVariation> {
    if x.grid != state.grid {
        return Err(Error::Mismatch("vector field grid differs from the state grid".into()));
    }
    let scale = x.max_norm();
    let violation = x.tangential_violation();
    if violation > 1e-3 * scale + 1e-14 {
        return Err(Error::TangentialCondition(violation));
    }
    let iface = &state.interface;
    if iface.is_chord() {
        let r = iface.orthogonality_residual(&state.domain)?;
        let worst = r[0].max(r[1]);
        if worst > ORTHO_TOL {
            return Err(Error::NotOrthogonal(worst));
        }
    }
    if scale == 0.0 {
        return Ok(SecondVariation { form_part: 0.0, tangential_term: 0.0, divergence_term: 0.0, total: 0.0 });
    }
    let normals = iface.normals();
    let tangents = iface.tangents();
    let xs: Vec<Point> = iface.nodes.iter().map(|p| x.at(p)).collect();
    let phi: Vec<f64> = xs.iter().zip(&normals).map(|(v, n)| v.dot(n)).collect();
    let form_part = form_terms(state, &phi, true)?.total;
    let f = first_variation_density(state)?;
    // −∫ f d/ds(⟨X, τ⟩ φ) ds, segment by segment
    let g: Vec<f64> = xs.iter().zip(&tangents).zip(&phi).map(|((v, t), p)| v.dot(t) * p).collect();
    let mut tangential_term = 0.0;
    for k in 0..iface.segment_count() {
        let (a, b) = iface.segment(k);
        tangential_term -= 0.5 * (f[a] + f[b]) * (g[b] - g[a]);
    }
    let divv = x.divergence_vertices();
    let wq = iface.quadrature_weights();
    let divergence_term: f64 =
        iface.nodes.iter().enumerate().map(|(i, p)| f[i] * x.bilinear(&divv, p) * phi[i] * wq[i]).sum();
    Ok(SecondVariation {
        form_part,
        tangential_term,
        divergence_term,
        total: form_part + tangential_term + divergence_term,
    })
}

/// Lamella state on the unit square with the given resolution.
pub fn lamella_state(a: f64, gamma: f64, grid: usize, nodes: usize) -> Result<RegionState> {
    let dom = DomainSpec::unit_square(grid);
    build_grid(&dom)?;
    RegionState::new(Interface::lamella(&dom, a, nodes), dom, gamma)
}

/// `⟨∇v, e⟩` of the state potential at an arbitrary point.
pub fn potential_gradient(state: &RegionState, p: &Point) -> Result<Point> {
    Ok(gradient_at(&state.fields()?.v, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cosine(iface: &Interface, k: usize) -> Vec<f64> {
        iface.nodes.iter().map(|p| (k as f64 * PI * p.y).cos()).collect()
    }

    #[test]
    fn dispersion_values() {
        // a = 0.5, k = 1: W = cosh²(π/2)/(π sinh π)
        let w = (PI / 2.0).cosh().powi(2) / (PI * PI.sinh());
        assert!((lamella_green_mode(0.5, 1) - w).abs() < 1e-14);
        assert!((w - 0.1735316).abs() < 1e-6);
        let g = lamella_gamma_star(0.5, 1).unwrap();
        assert!((g - 16.1335).abs() < 1e-3, "{g}");
        let (g3, k3) = lamella_gamma_star_min(0.3, 8).unwrap();
        assert_eq!(k3, 2);
        assert!((g3 - 38.3806).abs() < 1e-3, "{g3}");
        for k in 1..5 {
            let kp = k as f64 * PI;
            assert!((lamella_dispersion(0.3, 0.0, k).unwrap() - kp * kp / 2.0).abs() < 1e-12);
        }
        assert!(lamella_dispersion(0.5, 1.0, 0).is_err());
        assert!(lamella_dispersion(0.5, 10.0, 40).unwrap() > lamella_dispersion(0.5, 10.0, 20).unwrap());
        // independent closed form at a = 0.3, k = 2
        let kp = 2.0 * PI;
        let direct = (kp * 0.3).cosh() * (kp * 0.7).cosh() / (kp * kp.sinh());
        assert!((lamella_green_mode(0.3, 2) - direct).abs() < 1e-14);
    }

    #[test]
    fn zero_gamma_form_is_stiffness() {
        let s = lamella_state(0.3, 0.0, 32, 128).unwrap();
        let form = assemble_form(&s).unwrap();
        for k in 1..=4 {
            let phi = cosine(&s.interface, k);
            let exact = (k as f64 * PI).powi(2) / 2.0;
            assert!((form.value(&phi) - exact).abs() < 0.01 * exact);
        }
        let (mu, _) = min_eig_zero_mean(&form).unwrap();
        assert!((mu - PI * PI).abs() < 0.01 * PI * PI, "{mu}");
    }

    #[test]
    fn form_is_even_and_symmetric() {
        let s = lamella_state(0.4, 3.0, 64, 48).unwrap();
        let form = assemble_form(&s).unwrap();
        let asym = max_abs(&(&form.a - form.a.transpose()));
        assert!(asym <= 1e-12 * max_abs(&form.a));
        let phi: Vec<f64> = (0..48).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let neg: Vec<f64> = phi.iter().map(|p| -p).collect();
        assert_eq!(form.value(&phi), form.value(&neg));
    }

    #[test]
    fn matrix_agrees_with_direct_terms() {
        let s = lamella_state(0.3, 5.0, 64, 40).unwrap();
        let form = assemble_form(&s).unwrap();
        let mut seed = 99u64;
        for _ in 0..5 {
            let phi: Vec<f64> = (0..40)
                .map(|_| {
                    seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            let a = form.value(&phi);
            let b = form_terms(&s, &phi, true).unwrap().total;
            assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn mode_respects_constraint() {
        let s = lamella_state(0.5, 10.0, 64, 64).unwrap();
        let form = assemble_form(&s).unwrap();
        let (mu, mode) = min_eig_zero_mean(&form).unwrap();
        let mean: f64 = mode.iter().zip(&form.wq).map(|(p, w)| p * w).sum();
        assert!(mean.abs() <= 1e-10);
        assert!((form.mass(&mode) - 1.0).abs() < 1e-12);
        // Rayleigh quotient of the projected mode plus a constant
        let shifted: Vec<f64> = mode.iter().map(|p| p + 0.3).collect();
        let back = form.project_zero_mean(&shifted);
        assert!((form.value(&back) / form.mass(&back) - mu).abs() < 1e-9 * mu.abs().max(1.0));
        let ones = vec![1.0; 64];
        assert!(form.project_zero_mean(&ones).iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn truncated_nonlocal_block_keeps_low_modes() {
        let s = lamella_state(0.5, 10.0, 64, 64).unwrap();
        let full = assemble_form(&s).unwrap();
        let opts = FormOptions { truncate_modes: Some(16), ..Default::default() };
        let trunc = assemble_form_with(&s, &opts).unwrap();
        let phi = cosine(&s.interface, 1);
        let (a, b) = (full.value(&phi), trunc.value(&phi));
        assert!((a - b).abs() < 1e-3 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn mock_boundary_curvature_enters_endpoints() {
        let dom = DomainSpec::unit_square(32).with_mock_boundary_curvature(2.0);
        let s = RegionState::new(Interface::lamella(&dom, 0.5, 32), dom, 0.0).unwrap();
        let plain = lamella_state(0.5, 0.0, 32, 32).unwrap();
        let phi = cosine(&s.interface, 1);
        let a = assemble_form(&s).unwrap().value(&phi);
        let b = assemble_form(&plain).unwrap().value(&phi);
        // cos(0)² + cos(π)² = 2 endpoint units, times κ = 2
        assert!((b - a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn verdict_rules() {
        let t = Tolerances::default();
        assert_eq!(verdict(1.0, 0.0, &t), Verdict::Stable);
        assert_eq!(verdict(1.0, 0.5, &t), Verdict::Inconclusive);
        assert_eq!(verdict(-1.0, 0.0, &t), Verdict::Unstable);
        assert_eq!(verdict(0.0, 0.0, &t), Verdict::Inconclusive);
    }

    #[test]
    fn vector_field_divergence_and_tangency() {
        let g = build_grid(&DomainSpec::unit_square(32)).unwrap();
        let x = GridVectorField::from_fn(g, |p| Point::new((PI * p.x).sin() * p.y, (PI * p.y).sin()));
        assert!(x.tangential_violation() < 1e-15);
        let d = x.divergence_vertices();
        let p = Point::new(0.37, 0.61);
        let exact = PI * (PI * p.x).cos() * p.y + PI * (PI * p.y).cos();
        assert!((x.bilinear(&d, &p) - exact).abs() < 1e-2);
        let bad = GridVectorField::from_fn(g, |_| Point::new(1.0, 0.0));
        assert!(bad.tangential_violation() > 0.5);
    }

    #[test]
    fn zero_field_and_refusals() {
        let s = lamella_state(0.5, 1.0, 32, 32).unwrap();
        let z = GridVectorField::zeros(s.grid);
        assert_eq!(general_second_variation(&s, &z).unwrap().total, 0.0);
        let push = GridVectorField::from_fn(s.grid, |_| Point::new(1.0, 0.0));
        assert!(matches!(general_second_variation(&s, &push), Err(Error::TangentialCondition(_))));
        let dom = DomainSpec::unit_square(32);
        let tilted = Interface::straight_chord(Point::new(0.4, 0.0), Point::new(0.6, 1.0), 32);
        let t = RegionState::new(tilted, dom, 1.0).unwrap();
        let swirl = GridVectorField::from_fn(t.grid, |p| Point::new((PI * p.x).sin() * (PI * p.y).cos(), 0.0));
        assert!(matches!(general_second_variation(&t, &swirl), Err(Error::NotOrthogonal(_))));
    }
}
