//! The container: a rectangle with Neumann walls or a flat torus, discretized
//! by a uniform cell-centered grid.
//!
//! Rectangles are not smooth at their corners. Interface endpoints are kept at
//! least `corner_margin` away from every corner, and each flat edge is treated
//! as a smooth boundary piece with zero curvature.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

pub const MIN_CELLS: usize = 16;
pub const MAX_ASPECT: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Rectangle,
    Torus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    /// Minimum distance of interface endpoints from the corners. Defaults to
    /// twice the coarser grid spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner_margin: Option<f64>,
    /// Test hook: pretend every wall has this constant curvature.
    #[serde(skip)]
    mock_boundary_curvature: Option<f64>,
}

/// One flat edge of a rectangle, listed in counter-clockwise order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wall {
    Bottom,
    Right,
    Top,
    Left,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::Bottom, Wall::Right, Wall::Top, Wall::Left];

    /// Unit tangent oriented counter-clockwise around the rectangle.
    pub fn tangent(self) -> Point {
        match self {
            Wall::Bottom => Point::new(1.0, 0.0),
            Wall::Right => Point::new(0.0, 1.0),
            Wall::Top => Point::new(-1.0, 0.0),
            Wall::Left => Point::new(0.0, -1.0),
        }
    }

    /// Exterior unit normal of the domain on this wall.
    pub fn outward_normal(self) -> Point {
        match self {
            Wall::Bottom => Point::new(0.0, -1.0),
            Wall::Right => Point::new(1.0, 0.0),
            Wall::Top => Point::new(0.0, 1.0),
            Wall::Left => Point::new(-1.0, 0.0),
        }
    }
}

impl DomainSpec {
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Self {
        DomainSpec { kind: DomainKind::Rectangle, lx, ly, nx, ny, corner_margin: None, mock_boundary_curvature: None }
    }

    pub fn torus(lx: f64, ly: f64, nx: usize, ny: usize) -> Self {
        DomainSpec { kind: DomainKind::Torus, ..DomainSpec::rectangle(lx, ly, nx, ny) }
    }

    pub fn unit_square(n: usize) -> Self {
        DomainSpec::rectangle(1.0, 1.0, n, n)
    }

    /// Same geometry, every wall reporting curvature `kappa`. Used to exercise
    /// the endpoint term of the second variation, which vanishes on flat walls.
    pub fn with_mock_boundary_curvature(mut self, kappa: f64) -> Self {
        self.mock_boundary_curvature = Some(kappa);
        self
    }

    pub fn with_resolution(mut self, nx: usize, ny: usize) -> Self {
        self.nx = nx;
        self.ny = ny;
        self
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn h_max(&self) -> f64 {
        self.hx().max(self.hy())
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn min_length(&self) -> f64 {
        self.lx.min(self.ly)
    }

    pub fn corner_margin(&self) -> f64 {
        self.corner_margin.unwrap_or(2.0 * self.h_max())
    }

    pub fn is_torus(&self) -> bool {
        self.kind == DomainKind::Torus
    }

    /// Tolerance used to decide whether a point lies on the boundary.
    pub fn boundary_tol(&self) -> f64 {
        1e-9 * self.min_length()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lx > 0.0 && self.ly > 0.0) || !self.lx.is_finite() || !self.ly.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "side lengths must be positive, got lx={}, ly={}",
                self.lx, self.ly
            )));
        }
        if self.nx < MIN_CELLS || self.ny < MIN_CELLS {
            return Err(Error::InvalidDomain(format!("resolution {}x{} below minimum {MIN_CELLS}", self.nx, self.ny)));
        }
        let (hx, hy) = (self.hx(), self.hy());
        if hx.max(hy) / hx.min(hy) > MAX_ASPECT {
            return Err(Error::InvalidDomain(format!(
                "cell aspect ratio {} exceeds {MAX_ASPECT}",
                hx.max(hy) / hx.min(hy)
            )));
        }
        if self.kind == DomainKind::Rectangle {
            if let Some(margin) = self.corner_margin {
                if margin < 2.0 * self.h_max() {
                    return Err(Error::InvalidDomain(format!(
                        "corner_margin {margin} is below twice the grid spacing {}",
                        2.0 * self.h_max()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= 0.0 && p.x <= self.lx && p.y >= 0.0 && p.y <= self.ly
    }

    /// Strictly inside, at least `tol` away from every wall.
    pub fn contains_strictly(&self, p: &Point, tol: f64) -> bool {
        p.x > tol && p.x < self.lx - tol && p.y > tol && p.y < self.ly - tol
    }

    pub fn distance_to_wall(&self, wall: Wall, p: &Point) -> f64 {
        match wall {
            Wall::Bottom => p.y.abs(),
            Wall::Right => (p.x - self.lx).abs(),
            Wall::Top => (p.y - self.ly).abs(),
            Wall::Left => p.x.abs(),
        }
    }

    /// The wall nearest to `p`, provided `p` lies on it within `tol`.
    pub fn wall_of(&self, p: &Point, tol: f64) -> Result<Wall> {
        if self.is_torus() {
            return Err(Error::NoBoundary);
        }
        let (wall, dist) = Wall::ALL
            .iter()
            .map(|&w| (w, self.distance_to_wall(w, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("four walls");
        if dist > tol {
            return Err(Error::NotOnBoundary { x: p.x, y: p.y });
        }
        Ok(wall)
    }

    /// Orthogonal projection onto the line carrying `wall`.
    pub fn project_to_wall(&self, wall: Wall, p: &Point) -> Point {
        match wall {
            Wall::Bottom => Point::new(p.x, 0.0),
            Wall::Right => Point::new(self.lx, p.y),
            Wall::Top => Point::new(p.x, self.ly),
            Wall::Left => Point::new(0.0, p.y),
        }
    }

    pub fn corners(&self) -> [Point; 4] {
        [Point::new(0.0, 0.0), Point::new(self.lx, 0.0), Point::new(self.lx, self.ly), Point::new(0.0, self.ly)]
    }

    pub fn corner_distance(&self, p: &Point) -> f64 {
        self.corners().iter().map(|c| (c - p).norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn check_corner_margin(&self, p: &Point) -> Result<()> {
        let margin = self.corner_margin();
        if self.corner_distance(p) < margin {
            return Err(Error::CornerProximity { x: p.x, y: p.y, margin });
        }
        Ok(())
    }

    /// Counter-clockwise arclength coordinate of a boundary point, starting at
    /// the origin corner.
    pub fn perimeter_coord(&self, wall: Wall, p: &Point) -> f64 {
        let (lx, ly) = (self.lx, self.ly);
        match wall {
            Wall::Bottom => p.x.clamp(0.0, lx),
            Wall::Right => lx + p.y.clamp(0.0, ly),
            Wall::Top => lx + ly + (lx - p.x.clamp(0.0, lx)),
            Wall::Left => 2.0 * lx + ly + (ly - p.y.clamp(0.0, ly)),
        }
    }

    pub fn boundary_length(&self) -> f64 {
        2.0 * (self.lx + self.ly)
    }

    /// Corners passed when walking counter-clockwise from perimeter coordinate
    /// `from` to `to`, in walking order.
    pub fn corners_between(&self, from: f64, to: f64) -> Vec<Point> {
        let total = self.boundary_length();
        let corner_coords = [
            (self.lx, Point::new(self.lx, 0.0)),
            (self.lx + self.ly, Point::new(self.lx, self.ly)),
            (2.0 * self.lx + self.ly, Point::new(0.0, self.ly)),
            (total, Point::new(0.0, 0.0)),
        ];
        let span = (to - from).rem_euclid(total);
        let mut out: Vec<(f64, Point)> = corner_coords
            .iter()
            .filter_map(|&(s, c)| {
                let d = (s - from).rem_euclid(total);
                (d > 0.0 && d < span).then_some((d, c))
            })
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.into_iter().map(|(_, c)| c).collect()
    }
}

/// Signed curvature of the container boundary at `p`; positive where the
/// domain is locally convex. Flat rectangle edges give zero.
pub fn boundary_curvature(spec: &DomainSpec, p: &Point) -> Result<f64> {
    if spec.is_torus() {
        return Err(Error::NoBoundary);
    }
    let tol = spec.boundary_tol();
    spec.wall_of(p, tol)?;
    spec.check_corner_margin(p)?;
    Ok(spec.mock_boundary_curvature.unwrap_or(0.0))
}

/// Uniform cell-centered grid over the domain. Cell `(i, j)` is stored at
/// linear index `j * nx + i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub hx: f64,
    pub hy: f64,
    pub periodic: bool,
}

pub fn build_grid(spec: &DomainSpec) -> Result<Grid> {
    spec.validate()?;
    Ok(Grid {
        nx: spec.nx,
        ny: spec.ny,
        lx: spec.lx,
        ly: spec.ly,
        hx: spec.hx(),
        hy: spec.hy(),
        periodic: spec.is_torus(),
    })
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn total_area(&self) -> f64 {
        self.len() as f64 * self.cell_area()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Point {
        Point::new((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    /// Periodic index wrap (torus). For rectangles callers clamp instead.
    #[inline]
    pub fn wrap(&self, i: isize, j: isize) -> (usize, usize) {
        (i.rem_euclid(self.nx as isize) as usize, j.rem_euclid(self.ny as isize) as usize)
    }

    #[inline]
    pub fn clamp(&self, i: isize, j: isize) -> (usize, usize) {
        (i.clamp(0, self.nx as isize - 1) as usize, j.clamp(0, self.ny as isize - 1) as usize)
    }

    /// Neighbor lookup honoring the boundary type. `None` marks a Neumann wall.
    #[inline]
    pub fn neighbor(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<(usize, usize)> {
        let (ni, nj) = (i as isize + di, j as isize + dj);
        if self.periodic {
            Some(self.wrap(ni, nj))
        } else if ni < 0 || nj < 0 || ni >= self.nx as isize || nj >= self.ny as isize {
            None
        } else {
            Some((ni as usize, nj as usize))
        }
    }

    /// Bilinear interpolation stencil at `p` over cell centers: up to four
    /// `(cell index, weight)` pairs with weights summing to one. Near walls the
    /// stencil folds back onto the boundary cells (even reflection); on a
    /// torus it wraps.
    pub fn bilinear_stencil(&self, p: &Point) -> [(usize, f64); 4] {
        let fx = p.x / self.hx - 0.5;
        let fy = p.y / self.hy - 0.5;
        let i0 = fx.floor();
        let j0 = fy.floor();
        let tx = fx - i0;
        let ty = fy - j0;
        let (i0, j0) = (i0 as isize, j0 as isize);
        let pick = |i: isize, j: isize| {
            let (a, b) = if self.periodic { self.wrap(i, j) } else { self.clamp(i, j) };
            self.index(a, b)
        };
        [
            (pick(i0, j0), (1.0 - tx) * (1.0 - ty)),
            (pick(i0 + 1, j0), tx * (1.0 - ty)),
            (pick(i0, j0 + 1), (1.0 - tx) * ty),
            (pick(i0 + 1, j0 + 1), tx * ty),
        ]
    }

    /// Same stencil as [`Grid::bilinear_stencil`] but reporting the unfolded
    /// center positions used by the interpolation (ghost centers across walls).
    pub fn bilinear_stencil_points(&self, p: &Point) -> [(Point, f64); 4] {
        let fx = p.x / self.hx - 0.5;
        let fy = p.y / self.hy - 0.5;
        let i0 = fx.floor();
        let j0 = fy.floor();
        let tx = fx - i0;
        let ty = fy - j0;
        let c = |i: f64, j: f64| Point::new((i + 0.5) * self.hx, (j + 0.5) * self.hy);
        [
            (c(i0, j0), (1.0 - tx) * (1.0 - ty)),
            (c(i0 + 1.0, j0), tx * (1.0 - ty)),
            (c(i0, j0 + 1.0), (1.0 - tx) * ty),
            (c(i0 + 1.0, j0 + 1.0), tx * ty),
        ]
    }
}
