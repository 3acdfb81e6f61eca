//! Planar polygon utilities: signed area, half-plane clipping, exact cell
//! coverage, segment crossing and symmetric difference of regions.

use geo::Area;
use geo::{BooleanOps, Coord, LineString, MultiPolygon, Polygon};

use crate::domain::{DomainSpec, Grid, Point};

/// Signed shoelace area; positive for counter-clockwise vertex order.
pub fn shoelace(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

#[derive(Clone, Copy, Debug)]
enum Axis {
    X,
    Y,
}

/// Sutherland-Hodgman against one axis-aligned half-plane. Keeps
/// `coord <= value` when `keep_below`, else `coord >= value`. Correct in the
/// signed-area sense for any closed polygon, convex or not.
fn clip_axis(poly: &[Point], axis: Axis, value: f64, keep_below: bool) -> Vec<Point> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 4);
    if n == 0 {
        return out;
    }
    let coord = |p: &Point| match axis {
        Axis::X => p.x,
        Axis::Y => p.y,
    };
    let inside = |p: &Point| {
        if keep_below {
            coord(p) <= value
        } else {
            coord(p) >= value
        }
    };
    let cross = |a: &Point, b: &Point| {
        let (ca, cb) = (coord(a), coord(b));
        let t = (value - ca) / (cb - ca);
        let mut p = a + (b - a) * t;
        match axis {
            Axis::X => p.x = value,
            Axis::Y => p.y = value,
        }
        p
    };
    let mut prev = poly[n - 1];
    let mut prev_in = inside(&prev);
    for cur in poly {
        let cur_in = inside(cur);
        if cur_in {
            if !prev_in {
                out.push(cross(&prev, cur));
            }
            out.push(*cur);
        } else if prev_in {
            out.push(cross(&prev, cur));
        }
        prev = *cur;
        prev_in = cur_in;
    }
    out
}

/// Area of `poly` (counter-clockwise) inside the box `[x0,x1] x [y0,y1]`.
pub fn clipped_area(poly: &[Point], x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let p = clip_axis(poly, Axis::X, x0, false);
    let p = clip_axis(&p, Axis::X, x1, true);
    let p = clip_axis(&p, Axis::Y, y0, false);
    let p = clip_axis(&p, Axis::Y, y1, true);
    shoelace(&p)
}

/// Fraction of every grid cell covered by the counter-clockwise polygon
/// `poly`, computed by exact clipping, row band first and then per cell.
pub fn cell_coverage(poly: &[Point], grid: &Grid) -> Vec<f64> {
    let mut frac = vec![0.0; grid.len()];
    let cell_area = grid.cell_area();
    for j in 0..grid.ny {
        let y0 = j as f64 * grid.hy;
        let y1 = (j + 1) as f64 * grid.hy;
        let band = clip_axis(poly, Axis::Y, y0, false);
        let band = clip_axis(&band, Axis::Y, y1, true);
        if band.len() < 3 {
            continue;
        }
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &band {
            xmin = xmin.min(p.x);
            xmax = xmax.max(p.x);
        }
        let i_lo = ((xmin / grid.hx).floor().max(0.0)) as usize;
        let i_hi = ((xmax / grid.hx).ceil() as usize).min(grid.nx);
        // cumulative area left of each vertical grid line
        let mut left = shoelace(&clip_axis(&band, Axis::X, i_lo as f64 * grid.hx, true));
        for i in i_lo..i_hi {
            let x1 = (i + 1) as f64 * grid.hx;
            let next = if i + 1 == i_hi { shoelace(&band) } else { shoelace(&clip_axis(&band, Axis::X, x1, true)) };
            frac[grid.index(i, j)] = (next - left) / cell_area;
            left = next;
        }
    }
    frac
}

/// Proper or touching intersection of the closed segments `ab` and `cd`.
pub fn segments_intersect(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let orient = |p: &Point, q: &Point, r: &Point| (q - p).perp(&(r - p));
    let on_seg = |p: &Point, q: &Point, r: &Point| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_seg(c, d, a))
        || (d2 == 0.0 && on_seg(c, d, b))
        || (d3 == 0.0 && on_seg(a, b, c))
        || (d4 == 0.0 && on_seg(a, b, d))
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(poly: &[Point], p: &Point) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// A region of the domain described by one simple counter-clockwise polygon,
/// or by the complement of one within the domain box.
#[derive(Clone, Debug)]
pub struct RegionShape {
    pub polygon: Vec<Point>,
    pub complement: bool,
}

impl RegionShape {
    pub fn contains(&self, p: &Point) -> bool {
        point_in_polygon(&self.polygon, p) != self.complement
    }

    pub fn coverage(&self, grid: &Grid) -> Vec<f64> {
        let mut f = cell_coverage(&self.polygon, grid);
        if self.complement {
            f.iter_mut().for_each(|x| *x = 1.0 - *x);
        }
        f
    }

    fn to_geo(&self, dom: &DomainSpec) -> MultiPolygon<f64> {
        let ring = |pts: &[Point]| -> LineString<f64> {
            LineString::from(pts.iter().map(|p| Coord { x: p.x, y: p.y }).collect::<Vec<_>>())
        };
        if self.complement {
            let outer = ring(&dom.corners());
            let mut hole = self.polygon.clone();
            hole.reverse();
            MultiPolygon::new(vec![Polygon::new(outer, vec![ring(&hole)])])
        } else {
            MultiPolygon::new(vec![Polygon::new(ring(&self.polygon), vec![])])
        }
    }
}

/// Exact `|A △ B|` by polygon boolean operations.
pub fn symmetric_difference_exact(a: &RegionShape, b: &RegionShape, dom: &DomainSpec) -> f64 {
    if a.complement == b.complement {
        // complements within the same box share their symmetric difference
        let pa = RegionShape { polygon: a.polygon.clone(), complement: false }.to_geo(dom);
        let pb = RegionShape { polygon: b.polygon.clone(), complement: false }.to_geo(dom);
        return pa.xor(&pb).unsigned_area();
    }
    a.to_geo(dom).xor(&b.to_geo(dom)).unsigned_area()
}

/// `|A △ B|` by counting sub-cell sample points on a grid `refine` times
/// finer than `grid`.
pub fn symmetric_difference_pixels(a: &RegionShape, b: &RegionShape, grid: &Grid, refine: usize) -> f64 {
    let nx = grid.nx * refine;
    let ny = grid.ny * refine;
    let hx = grid.lx / nx as f64;
    let hy = grid.ly / ny as f64;
    let mut count = 0usize;
    for j in 0..ny {
        for i in 0..nx {
            let p = Point::new((i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy);
            if a.contains(&p) != b.contains(&p) {
                count += 1;
            }
        }
    }
    count as f64 * hx * hy
}
