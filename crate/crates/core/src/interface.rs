//! Polyline model of the relative boundary `M` of a phase region `E`, and the
//! full configuration [`RegionState`].
//!
//! Orientation: `inside` records on which side of the direction of travel the
//! region `E` lies. The normal `ν` always points out of `E`, and the curvature
//! `H` is positive where `E` is locally convex (a disk has `H = 1/R`).

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::domain::{build_grid, DomainSpec, Grid, Point, Wall};
use crate::error::{Error, Result};
use crate::field::{self, ScalarField};
use crate::geometry::{segments_intersect, shoelace, RegionShape};

pub const MIN_NODES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Open curve with both endpoints on the container wall.
    Chord,
    /// Closed curve strictly inside the domain.
    Loop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Interface {
    pub nodes: Vec<Point>,
    pub topology: Topology,
    pub inside: Side,
}

impl Interface {
    pub fn new(nodes: Vec<Point>, topology: Topology, inside: Side) -> Self {
        Interface { nodes, topology, inside }
    }

    /// Vertical chord `x = a` from bottom to top wall with `E = {x < a}`.
    pub fn lamella(dom: &DomainSpec, a: f64, n_nodes: usize) -> Self {
        let nodes = (0..n_nodes).map(|i| Point::new(a, dom.ly * i as f64 / (n_nodes - 1) as f64)).collect();
        Interface::new(nodes, Topology::Chord, Side::Left)
    }

    /// Straight chord between two wall points, `E` on the left of travel.
    pub fn straight_chord(from: Point, to: Point, n_nodes: usize) -> Self {
        let nodes = (0..n_nodes).map(|i| from + (to - from) * (i as f64 / (n_nodes - 1) as f64)).collect();
        Interface::new(nodes, Topology::Chord, Side::Left)
    }

    /// Counter-clockwise circle with `E` the enclosed disk.
    pub fn circle(center: Point, radius: f64, n_nodes: usize) -> Self {
        let nodes = (0..n_nodes)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / n_nodes as f64;
                center + Point::new(radius * t.cos(), radius * t.sin())
            })
            .collect();
        Interface::new(nodes, Topology::Loop, Side::Left)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_chord(&self) -> bool {
        self.topology == Topology::Chord
    }

    pub fn segment_count(&self) -> usize {
        match self.topology {
            Topology::Chord => self.nodes.len().saturating_sub(1),
            Topology::Loop => self.nodes.len(),
        }
    }

    #[inline]
    pub fn segment(&self, s: usize) -> (usize, usize) {
        (s, (s + 1) % self.nodes.len())
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        (0..self.segment_count())
            .map(|s| {
                let (a, b) = self.segment(s);
                (self.nodes[b] - self.nodes[a]).norm()
            })
            .collect()
    }

    pub fn perimeter(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }

    /// Trapezoid weights of `H¹⌊M` at the nodes.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let lens = self.segment_lengths();
        let n = self.nodes.len();
        let mut w = vec![0.0; n];
        for (s, l) in lens.iter().enumerate() {
            let (a, b) = self.segment(s);
            w[a] += 0.5 * l;
            w[b] += 0.5 * l;
        }
        w
    }

    /// Cumulative arclength at each node, starting from node 0.
    pub fn arclength(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.nodes.len());
        let mut acc = 0.0;
        s.push(0.0);
        for l in self.segment_lengths().iter().take(self.nodes.len() - 1) {
            acc += l;
            s.push(acc);
        }
        s
    }

    /// Unit tangents in the direction of travel (central differences,
    /// one-sided at chord endpoints).
    pub fn tangents(&self) -> Vec<Point> {
        let n = self.nodes.len();
        (0..n)
            .map(|i| {
                let (prev, next) = match self.topology {
                    Topology::Loop => (self.nodes[(i + n - 1) % n], self.nodes[(i + 1) % n]),
                    Topology::Chord => (self.nodes[i.saturating_sub(1)], self.nodes[(i + 1).min(n - 1)]),
                };
                let t = next - prev;
                t / t.norm()
            })
            .collect()
    }

    /// Unit normals pointing out of `E`.
    pub fn normals(&self) -> Vec<Point> {
        self.tangents()
            .into_iter()
            .map(|t| match self.inside {
                Side::Left => Point::new(t.y, -t.x),
                Side::Right => Point::new(-t.y, t.x),
            })
            .collect()
    }

    /// Signed curvature `H_M` per node from the circumscribed circle of each
    /// node triple; chord endpoints are extrapolated linearly.
    pub fn curvature(&self) -> Result<Vec<f64>> {
        let n = self.nodes.len();
        if n < 3 {
            return Err(Error::Degenerate("fewer than three nodes".into()));
        }
        let sign = match self.inside {
            Side::Left => 1.0,
            Side::Right => -1.0,
        };
        let menger = |p0: &Point, p1: &Point, p2: &Point| -> Result<f64> {
            let a = p1 - p0;
            let b = p2 - p1;
            let c = p2 - p0;
            let denom = a.norm() * b.norm() * c.norm();
            if denom == 0.0 {
                return Err(Error::Degenerate("repeated node in curvature stencil".into()));
            }
            Ok(2.0 * a.perp(&b) / denom)
        };
        let mut h = vec![0.0; n];
        match self.topology {
            Topology::Loop => {
                for i in 0..n {
                    let k = menger(&self.nodes[(i + n - 1) % n], &self.nodes[i], &self.nodes[(i + 1) % n])?;
                    h[i] = sign * k;
                }
            }
            Topology::Chord => {
                for i in 1..n - 1 {
                    h[i] = sign * menger(&self.nodes[i - 1], &self.nodes[i], &self.nodes[i + 1])?;
                }
                h[0] = 2.0 * h[1] - h[2];
                h[n - 1] = 2.0 * h[n - 2] - h[n - 3];
            }
        }
        Ok(h)
    }

    /// `|B_M|² = H²` on a curve.
    pub fn second_fundamental_form_sq(&self) -> Result<Vec<f64>> {
        Ok(self.curvature()?.into_iter().map(|h| h * h).collect())
    }

    /// Point at arclength `s` along the polyline (linear interpolation).
    fn point_at(&self, cum: &[f64], lens: &[f64], s: f64) -> Point {
        let seg = match cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(k) => k.min(lens.len() - 1),
            Err(k) => k.saturating_sub(1).min(lens.len() - 1),
        };
        let (a, b) = self.segment(seg);
        let l = lens[seg];
        let t = if l > 0.0 { ((s - cum[seg]) / l).clamp(0.0, 1.0) } else { 0.0 };
        self.nodes[a] + (self.nodes[b] - self.nodes[a]) * t
    }

    /// Arclength-uniform redistribution to exactly `count` nodes. Chord
    /// endpoints stay fixed; loops keep node 0.
    pub fn resample_count(&self, count: usize) -> Result<Interface> {
        let lens = self.segment_lengths();
        let total: f64 = lens.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Degenerate("zero-length interface".into()));
        }
        let mut cum = Vec::with_capacity(lens.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for l in &lens {
            acc += l;
            cum.push(acc);
        }
        let nodes = match self.topology {
            Topology::Chord => {
                let mut v: Vec<Point> =
                    (0..count).map(|i| self.point_at(&cum, &lens, total * i as f64 / (count - 1) as f64)).collect();
                v[0] = self.nodes[0];
                v[count - 1] = *self.nodes.last().unwrap();
                v
            }
            Topology::Loop => (0..count).map(|i| self.point_at(&cum, &lens, total * i as f64 / count as f64)).collect(),
        };
        Ok(Interface::new(nodes, self.topology, self.inside))
    }

    /// Arclength-uniform redistribution with spacing close to `h_target`.
    pub fn resample(&self, h_target: f64) -> Result<Interface> {
        let total = self.perimeter();
        if !(total > 0.0) {
            return Err(Error::Degenerate("zero-length interface".into()));
        }
        if !(h_target > 0.0) || h_target > total / MIN_NODES as f64 {
            return Err(Error::Precondition(format!(
                "h_target {h_target} must lie in (0, perimeter/{MIN_NODES}] = (0, {}]",
                total / MIN_NODES as f64
            )));
        }
        let segs = (total / h_target).round().max(1.0) as usize;
        let count = match self.topology {
            Topology::Chord => segs + 1,
            Topology::Loop => segs,
        };
        self.resample_count(count)
    }

    pub fn default_h_target(&self) -> f64 {
        self.perimeter() / 128.0
    }

    /// Same region described with reversed travel direction.
    pub fn reversed(&self) -> Interface {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        Interface::new(nodes, self.topology, self.inside.flip())
    }

    pub fn endpoint_walls(&self, dom: &DomainSpec) -> Result<(Wall, Wall)> {
        if !self.is_chord() {
            return Err(Error::NoBoundaryIntersection);
        }
        let tol = 1e-8 * dom.min_length();
        let a = dom.wall_of(&self.nodes[0], tol)?;
        let b = dom.wall_of(self.nodes.last().unwrap(), tol)?;
        Ok((a, b))
    }

    /// First pair of non-adjacent segments that touch, if any.
    pub fn find_self_intersection(&self) -> Option<(usize, usize)> {
        let m = self.segment_count();
        let closed = self.topology == Topology::Loop;
        for s in 0..m {
            let (a, b) = self.segment(s);
            let (pa, pb) = (self.nodes[a], self.nodes[b]);
            // bounding box prefilter
            let (xlo, xhi) = (pa.x.min(pb.x), pa.x.max(pb.x));
            let (ylo, yhi) = (pa.y.min(pb.y), pa.y.max(pb.y));
            for t in (s + 2)..m {
                if closed && s == 0 && t == m - 1 {
                    continue;
                }
                let (c, d) = self.segment(t);
                let (pc, pd) = (self.nodes[c], self.nodes[d]);
                if pc.x.max(pd.x) < xlo || pc.x.min(pd.x) > xhi || pc.y.max(pd.y) < ylo || pc.y.min(pd.y) > yhi {
                    continue;
                }
                if segments_intersect(&pa, &pb, &pc, &pd) {
                    return Some((s, t));
                }
            }
        }
        None
    }

    pub fn validate(&self, dom: &DomainSpec) -> Result<()> {
        if self.nodes.len() < MIN_NODES {
            return Err(Error::InvalidInterface(format!("{} nodes, need at least {MIN_NODES}", self.nodes.len())));
        }
        if self.nodes.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::NonFinite("interface node".into()));
        }
        match self.topology {
            Topology::Chord => {
                let (wa, wb) = self.endpoint_walls(dom)?;
                for (w, p) in [(wa, self.nodes[0]), (wb, *self.nodes.last().unwrap())] {
                    let _ = w;
                    dom.check_corner_margin(&p)?;
                }
                let tol = 1e-8 * dom.min_length();
                for p in &self.nodes[1..self.nodes.len() - 1] {
                    if !dom.contains_strictly(p, tol) {
                        return Err(Error::InvalidInterface(format!(
                            "interior chord node ({}, {}) is not strictly inside the domain",
                            p.x, p.y
                        )));
                    }
                }
            }
            Topology::Loop => {
                for p in &self.nodes {
                    if !dom.contains_strictly(p, 0.0) {
                        return Err(Error::InvalidInterface(format!(
                            "loop node ({}, {}) is not strictly inside the domain",
                            p.x, p.y
                        )));
                    }
                }
            }
        }
        if let Some((s, t)) = self.find_self_intersection() {
            return Err(Error::SelfIntersection(s, t));
        }
        Ok(())
    }

    /// The region `E` as a polygon (or polygon complement). Chords are closed
    /// up along the wall, walking counter-clockwise from the last node back to
    /// the first with `E` on the left.
    pub fn region_shape(&self, dom: &DomainSpec) -> Result<RegionShape> {
        let oriented = if self.inside == Side::Left {
            std::borrow::Cow::Borrowed(self)
        } else {
            std::borrow::Cow::Owned(self.reversed())
        };
        match self.topology {
            Topology::Loop => {
                let mut poly = oriented.nodes.clone();
                let s = shoelace(&poly);
                if s > 0.0 {
                    Ok(RegionShape { polygon: poly, complement: false })
                } else {
                    poly.reverse();
                    Ok(RegionShape { polygon: poly, complement: true })
                }
            }
            Topology::Chord => {
                let (w0, w1) = oriented.endpoint_walls(dom)?;
                let first = oriented.nodes[0];
                let last = *oriented.nodes.last().unwrap();
                let s_from = dom.perimeter_coord(w1, &last);
                let s_to = dom.perimeter_coord(w0, &first);
                let mut poly = oriented.nodes.clone();
                poly.extend(dom.corners_between(s_from, s_to));
                Ok(RegionShape { polygon: poly, complement: false })
            }
        }
    }

    /// Relative perimeter `P(E, Ω)` and area `|E|`.
    pub fn measures(&self, dom: &DomainSpec) -> Result<(f64, f64)> {
        let shape = self.region_shape(dom)?;
        let a = shoelace(&shape.polygon);
        if a <= 0.0 {
            return Err(Error::InvalidInterface("region polygon has non-positive area".into()));
        }
        let area = if shape.complement { dom.area() - a } else { a };
        Ok((self.perimeter(), area))
    }

    /// `|π/2 − ∠(ν*, wall tangent)|` at both chord endpoints, where `ν*` is
    /// the outward co-normal of `M` at the endpoint.
    pub fn orthogonality_residual(&self, dom: &DomainSpec) -> Result<[f64; 2]> {
        let (w0, w1) = self.endpoint_walls(dom)?;
        let n = self.nodes.len();
        let co0 = (self.nodes[0] - self.nodes[1]).normalize();
        let co1 = (self.nodes[n - 1] - self.nodes[n - 2]).normalize();
        let res = |co: Point, w: Wall| {
            let c = co.dot(&w.tangent()).clamp(-1.0, 1.0);
            (std::f64::consts::FRAC_PI_2 - c.acos()).abs()
        };
        Ok([res(co0, w0), res(co1, w1)])
    }
}

/// Cached grid fields of a configuration.
#[derive(Clone, Debug)]
pub struct StateFields {
    /// `u_E = χ_E − χ_{Ω∖E}` as cell averages.
    pub u: ScalarField,
    /// Zero-mean Neumann/periodic potential with `−Δv = u − m`.
    pub v: ScalarField,
}

/// A full configuration: interface, container and coupling.
#[derive(Clone, Debug)]
pub struct RegionState {
    pub interface: Interface,
    pub domain: DomainSpec,
    pub gamma: f64,
    pub grid: Grid,
    area: f64,
    perimeter: f64,
    fields: OnceLock<StateFields>,
}

impl RegionState {
    pub fn new(interface: Interface, domain: DomainSpec, gamma: f64) -> Result<Self> {
        let grid = build_grid(&domain)?;
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::Precondition(format!("coupling gamma must be >= 0, got {gamma}")));
        }
        interface.validate(&domain)?;
        let (perimeter, area) = interface.measures(&domain)?;
        if !(area > 0.0 && area < domain.area()) {
            return Err(Error::InvalidInterface(format!("region area {area} outside (0, {})", domain.area())));
        }
        Ok(RegionState { interface, domain, gamma, grid, area, perimeter, fields: OnceLock::new() })
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut s = self.clone();
        if !(gamma >= 0.0) {
            return Err(Error::Precondition(format!("coupling gamma must be >= 0, got {gamma}")));
        }
        s.gamma = gamma;
        Ok(s)
    }

    pub fn with_interface(&self, interface: Interface) -> Result<Self> {
        RegionState::new(interface, self.domain.clone(), self.gamma)
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    /// `m = 2|E|/|Ω| − 1`, so that `|E| = ½(m+1)|Ω|`.
    pub fn mass(&self) -> f64 {
        2.0 * self.area / self.domain.area() - 1.0
    }

    pub fn shape(&self) -> Result<RegionShape> {
        self.interface.region_shape(&self.domain)
    }

    /// `u_E` and `v_E`, computed on first use.
    pub fn fields(&self) -> Result<&StateFields> {
        if let Some(f) = self.fields.get() {
            return Ok(f);
        }
        let u = field::rasterize_indicator(self)?;
        let v = field::solve_potential(&u, &self.domain)?;
        Ok(self.fields.get_or_init(|| StateFields { u, v }))
    }
}

/// Moves each node along its normal by `phi` (plus a constant shift when
/// `fix_volume`), keeps chord endpoints on their walls, and resamples to the
/// original node count. With `fix_volume` the shift is found by a bracketed
/// root search so that the area matches `|E|` to `1e-10·|Ω|`.
pub fn normal_graph_perturb(state: &RegionState, phi: &[f64], fix_volume: bool) -> Result<Interface> {
    let iface = &state.interface;
    if phi.len() != iface.len() {
        return Err(Error::Mismatch(format!("phi has {} values for {} nodes", phi.len(), iface.len())));
    }
    let h = iface.curvature()?;
    let h_max = h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let phi_max = phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if h_max > 0.0 && phi_max > 0.25 / h_max {
        return Err(Error::Precondition(format!(
            "max|phi| = {phi_max} exceeds the graph bound 0.25/max|H| = {}",
            0.25 / h_max
        )));
    }
    if fix_volume {
        shift_to_area(iface, &state.domain, phi, state.area())
    } else {
        displace(iface, &state.domain, phi, 0.0)
    }
}

/// Normal displacement by `phi + c` followed by wall re-projection and
/// resampling; checks the result.
pub(crate) fn displace(iface: &Interface, dom: &DomainSpec, phi: &[f64], c: f64) -> Result<Interface> {
    let normals = iface.normals();
    let mut nodes: Vec<Point> =
        iface.nodes.iter().zip(&normals).zip(phi).map(|((p, nu), f)| p + nu * (f + c)).collect();
    if iface.is_chord() {
        let (w0, w1) = iface.endpoint_walls(dom)?;
        let last = nodes.len() - 1;
        nodes[0] = reproject_endpoint(dom, w0, &nodes[0])?;
        nodes[last] = reproject_endpoint(dom, w1, &nodes[last])?;
    }
    let moved = Interface::new(nodes, iface.topology, iface.inside);
    let out = moved.resample_count(iface.len())?;
    out.validate(dom)?;
    Ok(out)
}

pub(crate) fn reproject_endpoint(dom: &DomainSpec, wall: Wall, p: &Point) -> Result<Point> {
    let q = dom.project_to_wall(wall, p);
    let along = match wall {
        Wall::Bottom | Wall::Top => (q.x, dom.lx),
        Wall::Left | Wall::Right => (q.y, dom.ly),
    };
    let margin = dom.corner_margin();
    if along.0 < margin || along.0 > along.1 - margin {
        return Err(Error::EndpointLeftWall(format!(
            "endpoint ({}, {}) left wall {wall:?} or entered the corner margin {margin}",
            q.x, q.y
        )));
    }
    Ok(q)
}

/// Finds the constant normal shift `c` so that `displace(phi + c)` has area
/// `target`.
pub(crate) fn shift_to_area(iface: &Interface, dom: &DomainSpec, phi: &[f64], target: f64) -> Result<Interface> {
    let tol = 1e-10 * dom.area();
    let area_at = |c: f64| -> Result<(f64, Interface)> {
        let out = displace(iface, dom, phi, c)?;
        let (_, a) = out.measures(dom)?;
        Ok((a - target, out))
    };
    let (f0, out0) = area_at(0.0)?;
    if f0.abs() <= 0.1 * tol {
        return Ok(out0);
    }
    let p = iface.perimeter();
    // Newton guess from dA/dc ≈ perimeter, then widen until bracketed
    let mut step = (f0 / p).abs().max(1e-14 * dom.min_length());
    let dir = if f0 > 0.0 { -1.0 } else { 1.0 };
    let (mut lo, mut flo, mut hi, mut fhi) = (0.0, f0, 0.0, f0);
    let mut bracketed = false;
    for _ in 0..60 {
        let c = dir * step * 1.5;
        let (fc, _) = area_at(c)?;
        if fc.signum() != f0.signum() || fc == 0.0 {
            if dir > 0.0 {
                (lo, flo, hi, fhi) = (0.0, f0, c, fc);
            } else {
                (lo, flo, hi, fhi) = (c, fc, 0.0, f0);
            }
            bracketed = true;
            break;
        }
        step *= 2.0;
    }
    if !bracketed {
        return Err(Error::NoSignChange { what: "area correction".into(), lo: -step, hi: step });
    }
    // Illinois false position: bisection-safe, superlinear on near-linear area
    let mut side = 0i32;
    let mut best = None;
    for _ in 0..200 {
        let c = (lo * fhi - hi * flo) / (fhi - flo);
        let c = if c.is_finite() && c > lo && c < hi { c } else { 0.5 * (lo + hi) };
        let (fc, out) = area_at(c)?;
        if fc.abs() <= tol {
            return Ok(out);
        }
        best = Some(out);
        if fc.signum() == flo.signum() {
            lo = c;
            flo = fc;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = c;
            fhi = fc;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
        if hi - lo <= 1e-15 * dom.min_length() {
            break;
        }
    }
    match best {
        Some(out) => {
            let (_, a) = out.measures(dom)?;
            if (a - target).abs() <= tol {
                Ok(out)
            } else {
                Err(Error::NoConvergence { iterations: 200, residual: (a - target).abs() / dom.area() })
            }
        }
        None => Err(Error::NoConvergence { iterations: 0, residual: f0.abs() }),
    }
}
