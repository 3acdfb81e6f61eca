//! Grid PDE work: indicator rasterization, the zero-mean Poisson problem with
//! Neumann or periodic boundary conditions, Dirichlet energy, traces on the
//! interface, and the line-source problem behind the Green's-function double
//! integral.
//!
//! The discrete operator is the cell-centered 5-point Laplacian. Neumann
//! walls drop the missing face flux (ghost value equals the boundary cell).

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::domain::{build_grid, DomainSpec, Grid, Point};
use crate::error::{Error, Result};
use crate::interface::{Interface, RegionState};

pub const SOLVER_RTOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub mean_zero: bool,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField { grid, values: vec![0.0; grid.len()], mean_zero: true }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.center(i, j)));
            }
        }
        ScalarField { grid, values, mean_zero: false }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Bilinear interpolation between cell centers (even reflection at walls,
    /// wrap on a torus).
    pub fn interpolate(&self, p: &Point) -> f64 {
        self.grid.bilinear_stencil(p).iter().map(|&(k, w)| w * self.values[k]).sum()
    }

    /// `Σ value · cell_area` against another field.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_area()
    }
}

/// `u_E = 2·(area fraction of E) − 1` per cell, by exact polygon clipping.
pub fn rasterize_indicator(state: &RegionState) -> Result<ScalarField> {
    let shape = state.shape()?;
    let grid = state.grid;
    let frac = shape.coverage(&grid);
    let mut values = Vec::with_capacity(frac.len());
    for f in frac {
        if !f.is_finite() {
            return Err(Error::NonFinite("cell coverage".into()));
        }
        values.push(2.0 * f.clamp(0.0, 1.0) - 1.0);
    }
    Ok(ScalarField { grid, values, mean_zero: false })
}

/// `y = −Δ_h x` with the boundary handling of `grid`.
pub fn apply_neg_laplacian(grid: &Grid, x: &[f64], y: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let ax = 1.0 / (grid.hx * grid.hx);
    let ay = 1.0 / (grid.hy * grid.hy);
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let c = x[k];
            let mut acc = 0.0;
            for (di, dj, a) in [(-1isize, 0isize, ax), (1, 0, ax), (0, -1, ay), (0, 1, ay)] {
                if let Some((ni, nj)) = grid.neighbor(i, j, di, dj) {
                    acc += a * (c - x[nj * nx + ni]);
                }
            }
            y[k] = acc;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    /// Exact inverse of the 5-point operator by fast cosine/Fourier transforms.
    Spectral,
}

/// Diagonalizes the 1D second-difference operator along one axis: DCT-II for
/// Neumann walls (Makhoul's length-n FFT algorithm), DFT for periodic.
struct AxisTransform {
    n: usize,
    periodic: bool,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    eig: Vec<f64>,
    twiddle: Vec<Complex64>,
}

impl AxisTransform {
    fn new(planner: &mut FftPlanner<f64>, n: usize, h: f64, periodic: bool) -> Self {
        let eig = (0..n)
            .map(|k| {
                let theta = if periodic {
                    2.0 * std::f64::consts::PI * k as f64 / n as f64
                } else {
                    std::f64::consts::PI * k as f64 / n as f64
                };
                (2.0 - 2.0 * theta.cos()) / (h * h)
            })
            .collect();
        let twiddle =
            (0..n).map(|k| Complex64::from_polar(1.0, -std::f64::consts::PI * k as f64 / (2.0 * n as f64))).collect();
        AxisTransform { n, periodic, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n), eig, twiddle }
    }

    /// Forward transform of one real line into `out` (complex coefficients).
    fn forward(&self, line: &[f64], buf: &mut [Complex64], scratch: &mut [Complex64]) {
        let n = self.n;
        if self.periodic {
            for (b, x) in buf.iter_mut().zip(line) {
                *b = Complex64::new(*x, 0.0);
            }
            self.fwd.process_with_scratch(buf, scratch);
        } else {
            for k in 0..n.div_ceil(2) {
                buf[k] = Complex64::new(line[2 * k], 0.0);
            }
            for k in 0..n / 2 {
                buf[n - 1 - k] = Complex64::new(line[2 * k + 1], 0.0);
            }
            self.fwd.process_with_scratch(buf, scratch);
            for k in 0..n {
                buf[k] = Complex64::new((buf[k] * self.twiddle[k]).re, 0.0);
            }
        }
    }

    /// Exact inverse of [`AxisTransform::forward`], writing the real line.
    fn inverse(&self, buf: &mut [Complex64], line: &mut [f64], scratch: &mut [Complex64]) {
        let n = self.n;
        let scale = 1.0 / n as f64;
        if self.periodic {
            self.inv.process_with_scratch(buf, scratch);
            for (x, b) in line.iter_mut().zip(buf.iter()) {
                *x = b.re * scale;
            }
        } else {
            let coeffs: Vec<f64> = buf.iter().map(|c| c.re).collect();
            for k in 0..n {
                let xk = coeffs[k];
                let xnk = if k == 0 { 0.0 } else { coeffs[n - k] };
                buf[k] = self.twiddle[k].conj() * Complex64::new(xk, -xnk);
            }
            self.inv.process_with_scratch(buf, scratch);
            for k in 0..n.div_ceil(2) {
                line[2 * k] = buf[k].re * scale;
            }
            for k in 0..n / 2 {
                line[2 * k + 1] = buf[n - 1 - k].re * scale;
            }
        }
    }
}

/// Reusable solver for `−Δ_h v = f − mean(f)` with `mean(v) = 0`.
pub struct PoissonSolver {
    grid: Grid,
    precond: Preconditioner,
    tx: AxisTransform,
    ty: AxisTransform,
}

impl PoissonSolver {
    pub fn new(grid: Grid) -> Self {
        PoissonSolver::with_preconditioner(grid, Preconditioner::Spectral)
    }

    pub fn with_preconditioner(grid: Grid, precond: Preconditioner) -> Self {
        let mut planner = FftPlanner::new();
        let tx = AxisTransform::new(&mut planner, grid.nx, grid.hx, grid.periodic);
        let ty = AxisTransform::new(&mut planner, grid.ny, grid.hy, grid.periodic);
        PoissonSolver { grid, precond, tx, ty }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn iteration_cap(&self) -> usize {
        20 * (self.grid.nx + self.grid.ny)
    }

    /// Applies the pseudo-inverse of the 5-point operator on zero-mean input.
    fn spectral_inverse(&self, r: &[f64], z: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut spec = vec![Complex64::new(0.0, 0.0); nx * ny];
        let mut scratch_x = vec![
            Complex64::new(0.0, 0.0);
            self.tx.fwd.get_inplace_scratch_len().max(self.tx.inv.get_inplace_scratch_len())
        ];
        let mut scratch_y = vec![
            Complex64::new(0.0, 0.0);
            self.ty.fwd.get_inplace_scratch_len().max(self.ty.inv.get_inplace_scratch_len())
        ];
        // rows
        for j in 0..ny {
            let row = &mut spec[j * nx..(j + 1) * nx];
            self.tx.forward(&r[j * nx..(j + 1) * nx], row, &mut scratch_x);
        }
        // columns (real and imaginary parts transform independently for DCT;
        // complex for DFT)
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        let mut col_re = vec![0.0; ny];
        let mut col_im = vec![0.0; ny];
        let mut tmp = vec![Complex64::new(0.0, 0.0); ny];
        for i in 0..nx {
            if self.grid.periodic {
                for j in 0..ny {
                    col[j] = spec[j * nx + i];
                }
                self.ty.fwd.process_with_scratch(&mut col, &mut scratch_y);
                for j in 0..ny {
                    let lam = self.tx.eig[i] + self.ty.eig[j];
                    col[j] = if lam > 0.0 { col[j] / lam } else { Complex64::new(0.0, 0.0) };
                }
                self.ty.inv.process_with_scratch(&mut col, &mut scratch_y);
                let s = 1.0 / ny as f64;
                for j in 0..ny {
                    spec[j * nx + i] = col[j] * s;
                }
            } else {
                for j in 0..ny {
                    col_re[j] = spec[j * nx + i].re;
                }
                self.ty.forward(&col_re, &mut tmp, &mut scratch_y);
                for j in 0..ny {
                    let lam = self.tx.eig[i] + self.ty.eig[j];
                    tmp[j] = if lam > 0.0 { tmp[j] / lam } else { Complex64::new(0.0, 0.0) };
                }
                self.ty.inverse(&mut tmp, &mut col_im, &mut scratch_y);
                for j in 0..ny {
                    spec[j * nx + i] = Complex64::new(col_im[j], 0.0);
                }
            }
        }
        for j in 0..ny {
            let row = &mut spec[j * nx..(j + 1) * nx];
            self.tx.inverse(row, &mut z[j * nx..(j + 1) * nx], &mut scratch_x);
        }
        remove_mean(z);
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        match self.precond {
            Preconditioner::None => z.copy_from_slice(r),
            Preconditioner::Spectral => self.spectral_inverse(r, z),
        }
    }

    /// Preconditioned conjugate gradients on the zero-mean subspace. The
    /// source mean is removed first, which makes the Neumann problem solvable.
    pub fn solve(&self, source: &[f64]) -> Result<Vec<f64>> {
        self.solve_capped(source, self.iteration_cap())
    }

    pub fn solve_capped(&self, source: &[f64], cap: usize) -> Result<Vec<f64>> {
        let n = self.grid.len();
        if source.len() != n {
            return Err(Error::Mismatch(format!("source has {} values for {n} cells", source.len())));
        }
        let raw_norm = dot(source, source).sqrt();
        let mut r = source.to_vec();
        remove_mean(&mut r);
        let norm_f = dot(&r, &r).sqrt();
        let mut x = vec![0.0; n];
        // a constant source is compatible only with the zero potential
        if norm_f <= 1e-12 * raw_norm || norm_f == 0.0 {
            return Ok(x);
        }
        if !norm_f.is_finite() {
            return Err(Error::NonFinite("Poisson source".into()));
        }
        let mut z = vec![0.0; n];
        let mut ap = vec![0.0; n];
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut res = 1.0;
        for _ in 0..cap {
            apply_neg_laplacian(&self.grid, &p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            remove_mean(&mut r);
            res = dot(&r, &r).sqrt() / norm_f;
            if res <= SOLVER_RTOL {
                remove_mean(&mut x);
                return Ok(x);
            }
            self.precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(Error::NoConvergence { iterations: cap, residual: res })
    }
}

/// Solves `−Δv = u − mean(u)` with homogeneous Neumann (rectangle) or
/// periodic (torus) conditions and `mean(v) = 0`.
pub fn solve_potential(u: &ScalarField, dom: &DomainSpec) -> Result<ScalarField> {
    let grid = build_grid(dom)?;
    if grid != u.grid {
        return Err(Error::Mismatch("field grid differs from the domain grid".into()));
    }
    let v = PoissonSolver::new(grid).solve(&u.values)?;
    Ok(ScalarField { grid, values: v, mean_zero: true })
}

/// `∫_Ω |∇v|²` from face-centered differences; equals `Σ (−Δ_h v)·v·cell_area`.
pub fn dirichlet_energy(v: &ScalarField) -> f64 {
    let g = &v.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut sx = 0.0;
    let mut sy = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let c = v.values[j * nx + i];
            if let Some((ni, nj)) = g.neighbor(i, j, 1, 0) {
                let d = v.values[nj * nx + ni] - c;
                sx += d * d;
            }
            if let Some((ni, nj)) = g.neighbor(i, j, 0, 1) {
                let d = v.values[nj * nx + ni] - c;
                sy += d * d;
            }
        }
    }
    (sx / (g.hx * g.hx) + sy / (g.hy * g.hy)) * g.cell_area()
}

fn check_nodes_in_domain(grid: &Grid, iface: &Interface) -> Result<()> {
    let tol = 1e-9 * grid.lx.min(grid.ly);
    for p in &iface.nodes {
        if p.x < -tol || p.x > grid.lx + tol || p.y < -tol || p.y > grid.ly + tol {
            return Err(Error::Precondition(format!("node ({}, {}) outside the domain closure", p.x, p.y)));
        }
    }
    Ok(())
}

/// Bilinear trace of `v` at every interface node.
pub fn trace_on_curve(v: &ScalarField, iface: &Interface) -> Result<Vec<f64>> {
    check_nodes_in_domain(&v.grid, iface)?;
    Ok(iface.nodes.iter().map(|p| v.interpolate(p)).collect())
}

/// Face-centered gradient of `v`, interpolated bilinearly on the staggered
/// face grids.
pub fn gradient_at(v: &ScalarField, p: &Point) -> Point {
    let g = &v.grid;
    let (nx, ny) = (g.nx as isize, g.ny as isize);
    let val = |i: isize, j: isize| -> f64 {
        let (a, b) = if g.periodic { g.wrap(i, j) } else { g.clamp(i, j) };
        v.values[g.index(a, b)]
    };
    // x-gradient on vertical faces: face i sits at x = i·hx between cells i-1, i
    let gx_face = |i: isize, j: isize| -> f64 {
        if !g.periodic && (i <= 0 || i >= nx) {
            0.0
        } else {
            (val(i, j) - val(i - 1, j)) / g.hx
        }
    };
    let gy_face = |i: isize, j: isize| -> f64 {
        if !g.periodic && (j <= 0 || j >= ny) {
            0.0
        } else {
            (val(i, j) - val(i, j - 1)) / g.hy
        }
    };
    let clamp_cell = |j: isize, n: isize| if g.periodic { j } else { j.clamp(0, n - 1) };
    // gx: x at faces (i·hx), y at centers
    let fx = p.x / g.hx;
    let fy = p.y / g.hy - 0.5;
    let i0 = fx.floor();
    let j0 = fy.floor();
    let (tx, ty) = (fx - i0, fy - j0);
    let (i0, j0) = (i0 as isize, j0 as isize);
    let gx = (1.0 - tx) * (1.0 - ty) * gx_face(i0, clamp_cell(j0, ny))
        + tx * (1.0 - ty) * gx_face(i0 + 1, clamp_cell(j0, ny))
        + (1.0 - tx) * ty * gx_face(i0, clamp_cell(j0 + 1, ny))
        + tx * ty * gx_face(i0 + 1, clamp_cell(j0 + 1, ny));
    // gy: x at centers, y at faces
    let fx = p.x / g.hx - 0.5;
    let fy = p.y / g.hy;
    let i0 = fx.floor();
    let j0 = fy.floor();
    let (tx, ty) = (fx - i0, fy - j0);
    let (i0, j0) = (i0 as isize, j0 as isize);
    let gy = (1.0 - tx) * (1.0 - ty) * gy_face(clamp_cell(i0, nx), j0)
        + tx * (1.0 - ty) * gy_face(clamp_cell(i0 + 1, nx), j0)
        + (1.0 - tx) * ty * gy_face(clamp_cell(i0, nx), j0 + 1)
        + tx * ty * gy_face(clamp_cell(i0 + 1, nx), j0 + 1);
    Point::new(gx, gy)
}

/// `⟨∇v, ν_M⟩` at every interface node.
pub fn gradient_on_curve(v: &ScalarField, iface: &Interface) -> Result<Vec<f64>> {
    check_nodes_in_domain(&v.grid, iface)?;
    let normals = iface.normals();
    Ok(iface.nodes.iter().zip(&normals).map(|(p, n)| gradient_at(v, p).dot(n)).collect())
}

/// One midpoint sample of the curve measure `H¹⌊M`.
#[derive(Clone, Debug)]
struct LineSample {
    a: usize,
    b: usize,
    t: f64,
    len: f64,
    stencil: [(usize, f64); 4],
    /// Bilinear-interpolation bias of a unit kink along the segment through
    /// this point.
    kink_bias: f64,
}

/// Midpoint quadrature of `H¹⌊M` on sub-segments no longer than
/// `min(hx, hy)/2`, with piecewise-linear (hat) interpolation of node values.
/// Splatting a density and tracing a field are exact adjoints of each other.
#[derive(Clone, Debug)]
pub struct LineQuadrature {
    grid: Grid,
    n_nodes: usize,
    samples: Vec<LineSample>,
}

impl LineQuadrature {
    pub fn new(iface: &Interface, grid: &Grid) -> Result<Self> {
        check_nodes_in_domain(grid, iface)?;
        let max_len = 0.5 * grid.hx.min(grid.hy);
        let mut samples = Vec::new();
        for s in 0..iface.segment_count() {
            let (a, b) = iface.segment(s);
            let (pa, pb) = (iface.nodes[a], iface.nodes[b]);
            let d = pb - pa;
            let l = d.norm();
            if l == 0.0 {
                continue;
            }
            let normal = Point::new(d.y, -d.x) / l;
            let m = (l / max_len).ceil().max(1.0) as usize;
            for q in 0..m {
                let t = (q as f64 + 0.5) / m as f64;
                let p = pa + d * t;
                let kink_bias = 0.5
                    * grid.bilinear_stencil_points(&p).iter().map(|(c, w)| w * (c - p).dot(&normal).abs()).sum::<f64>();
                samples.push(LineSample { a, b, t, len: l / m as f64, stencil: grid.bilinear_stencil(&p), kink_bias });
            }
        }
        Ok(LineQuadrature { grid: *grid, n_nodes: iface.len(), samples })
    }

    #[inline]
    fn hat(&self, s: &LineSample, phi: &[f64]) -> f64 {
        (1.0 - s.t) * phi[s.a] + s.t * phi[s.b]
    }

    /// Cell density of the measure `φ·H¹⌊M` (mass per unit area).
    pub fn splat(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        let inv_area = 1.0 / self.grid.cell_area();
        for s in &self.samples {
            let q = self.hat(s, phi) * s.len * inv_area;
            for &(k, w) in &s.stencil {
                out[k] += w * q;
            }
        }
        out
    }

    /// `∫_M w ψ dH¹` with `w` interpolated bilinearly.
    pub fn integrate_trace(&self, w: &[f64], psi: &[f64]) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let wv: f64 = s.stencil.iter().map(|&(k, c)| c * w[k]).sum();
                s.len * self.hat(s, psi) * wv
            })
            .sum()
    }

    /// Node vector `t_i = ∫_M w ψ_i dH¹` over the hat functions `ψ_i`; the
    /// adjoint of [`LineQuadrature::splat`].
    pub fn trace_vector(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes];
        for s in &self.samples {
            let wv: f64 = s.stencil.iter().map(|&(k, c)| c * w[k]).sum();
            out[s.a] += s.len * (1.0 - s.t) * wv;
            out[s.b] += s.len * s.t * wv;
        }
        out
    }

    /// `∫_M β φ ψ dH¹`, the leading bilinear-interpolation bias of a unit
    /// line source evaluated on itself.
    pub fn kink_correction(&self, phi: &[f64], psi: &[f64]) -> f64 {
        self.samples.iter().map(|s| s.len * s.kink_bias * self.hat(s, phi) * self.hat(s, psi)).sum()
    }

    /// Sparse form of [`LineQuadrature::kink_correction`] on node pairs.
    pub fn kink_correction_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(4 * self.samples.len());
        for s in &self.samples {
            let c = s.len * s.kink_bias;
            let (wa, wb) = (1.0 - s.t, s.t);
            out.push((s.a, s.a, c * wa * wa));
            out.push((s.a, s.b, c * wa * wb));
            out.push((s.b, s.a, c * wa * wb));
            out.push((s.b, s.b, c * wb * wb));
        }
        out
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// `∫_M φ dH¹` under this quadrature.
    pub fn total(&self, phi: &[f64]) -> f64 {
        self.samples.iter().map(|s| s.len * self.hat(s, phi)).sum()
    }
}

/// Solves `−Δw = φ·H¹⌊M − (1/|Ω|)∫_M φ dH¹` with `mean(w) = 0`.
pub fn solve_line_source(phi: &[f64], iface: &Interface, dom: &DomainSpec) -> Result<ScalarField> {
    let grid = build_grid(dom)?;
    if phi.len() != iface.len() {
        return Err(Error::Mismatch(format!("phi has {} values for {} nodes", phi.len(), iface.len())));
    }
    let quad = LineQuadrature::new(iface, &grid)?;
    let src = quad.splat(phi);
    let w = PoissonSolver::new(grid).solve(&src)?;
    Ok(ScalarField { grid, values: w, mean_zero: true })
}

/// Nonlocal bilinear form `N(φ, ψ) = ∫_M∫_M G φ ψ` through one auxiliary
/// solve, with the interpolation-bias correction of the on-curve trace.
pub fn nonlocal_pair(
    quad: &LineQuadrature,
    solver: &PoissonSolver,
    phi: &[f64],
    psi: &[f64],
    kink_corrected: bool,
) -> Result<f64> {
    let w = solver.solve(&quad.splat(phi))?;
    let mut n = quad.integrate_trace(&w, psi);
    if kink_corrected {
        n += quad.kink_correction(phi, psi);
    }
    Ok(n)
}
