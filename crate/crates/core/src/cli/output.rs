//! Report, CSV and SVG writers. Every float leaves the program with 17
//! significant digits so that files round-trip exactly.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::interface::Interface;

/// `{:.16e}`: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Pretty JSON whose floats use [`fmt_f64`].
struct Digits17<'a>(PrettyFormatter<'a>);

impl Formatter for Digits17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Scenario(format!("report serialization: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

/// Rows of numbers under a fixed header.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n", columns: header.len() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns);
        let line: Vec<String> = cells
            .iter()
            .map(|c| match c {
                Cell::F(x) => fmt_f64(*x),
                Cell::I(i) => i.to_string(),
            })
            .collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.text)?;
        Ok(())
    }
}

pub enum Cell {
    F(f64),
    I(usize),
}

pub const INTERFACE_HEADER: [&str; 5] = ["s", "x", "y", "H", "phi"];
pub const FIELD_HEADER: [&str; 5] = ["i", "j", "x", "y", "value"];

pub fn interface_csv(iface: &Interface, curvature: &[f64], phi: &[f64]) -> Csv {
    let mut csv = Csv::new(&INTERFACE_HEADER);
    for (((s, p), h), f) in iface.arclength().iter().zip(&iface.nodes).zip(curvature).zip(phi) {
        csv.row(&[Cell::F(*s), Cell::F(p.x), Cell::F(p.y), Cell::F(*h), Cell::F(*f)]);
    }
    csv
}

pub fn field_csv(f: &ScalarField) -> Csv {
    let mut csv = Csv::new(&FIELD_HEADER);
    let g = &f.grid;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.center(i, j);
            csv.row(&[Cell::I(i), Cell::I(j), Cell::F(c.x), Cell::F(c.y), Cell::F(f.at(i, j))]);
        }
    }
    csv
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PLOT_W: f64 = 480.0;
const PLOT_H: f64 = 480.0;
const MARGIN: f64 = 50.0;

/// A drawing surface mapping a data window onto the plot area.
pub struct Svg {
    body: String,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Svg {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64, title: &str) -> Self {
        let (x1, y1) = (if x1 > x0 { x1 } else { x0 + 1.0 }, if y1 > y0 { y1 } else { y0 + 1.0 });
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
            MARGIN + PLOT_W / 2.0,
            escape(title)
        );
        let _ = writeln!(
            body,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="black"/>"#
        );
        Svg { body, x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * PLOT_W
    }

    fn py(&self, y: f64) -> f64 {
        MARGIN + PLOT_H - (y - self.y0) / (self.y1 - self.y0) * PLOT_H
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        let coords: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            coords.join(" ")
        );
    }

    pub fn arrow(&mut self, from: (f64, f64), to: (f64, f64), stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{stroke}" stroke-width="1" marker-end="url(#head)"/>"#,
            self.px(from.0),
            self.py(from.1),
            self.px(to.0),
            self.py(to.1)
        );
    }

    pub fn dot(&mut self, p: (f64, f64), fill: &str) {
        if p.0.is_finite() && p.1.is_finite() {
            let _ = writeln!(
                self.body,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{fill}"/>"#,
                self.px(p.0),
                self.py(p.1)
            );
        }
    }

    pub fn cell(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let (a, b) = (self.px(x), self.py(y + h));
        let _ = writeln!(
            self.body,
            r#"<rect x="{a:.2}" y="{b:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            self.px(x + w) - a,
            self.py(y) - b
        );
    }

    pub fn axis_labels(&mut self, xlabel: &str, ylabel: &str) {
        let (x0, x1, y0, y1) = (self.x0, self.x1, self.y0, self.y1);
        let bottom = MARGIN + PLOT_H;
        let _ = writeln!(
            self.body,
            r#"<text x="{MARGIN}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            bottom + 16.0,
            escape(&format!("{x0:.3e}"))
        );
        let _ = writeln!(
            self.body,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN + PLOT_W,
            bottom + 16.0,
            escape(&format!("{x1:.3e}"))
        );
        let _ = writeln!(
            self.body,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            MARGIN + PLOT_W / 2.0,
            bottom + 34.0,
            escape(xlabel)
        );
        let _ = writeln!(
            self.body,
            r#"<text x="4" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            bottom,
            escape(&format!("{y0:.2e}"))
        );
        let _ = writeln!(
            self.body,
            r#"<text x="4" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            MARGIN + 10.0,
            escape(&format!("{y1:.2e}"))
        );
        let _ = writeln!(
            self.body,
            r#"<text x="12" y="{:.1}" font-family="sans-serif" font-size="12" transform="rotate(-90 12 {:.1})" text-anchor="middle">{}</text>"#,
            MARGIN + PLOT_H / 2.0,
            MARGIN + PLOT_H / 2.0,
            escape(ylabel)
        );
    }

    pub fn finish(self) -> String {
        let w = PLOT_W + 2.0 * MARGIN;
        let h = PLOT_H + 2.0 * MARGIN;
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
<defs><marker id=\"head\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" orient=\"auto\">\
<path d=\"M0,0 L6,3 L0,6 z\" fill=\"context-stroke\"/></marker></defs>\n\
<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }

    pub fn write(self, path: &Path) -> Result<()> {
        std::fs::write(path, self.finish())?;
        Ok(())
    }
}

fn polyline_of(iface: &Interface) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = iface.nodes.iter().map(|p| (p.x, p.y)).collect();
    if !iface.is_chord() {
        pts.push(pts[0]);
    }
    pts
}

/// The interface in its container with outward-normal arrows at a dozen or so nodes.
pub fn interface_svg(iface: &Interface, lx: f64, ly: f64, title: &str) -> Svg {
    let mut svg = Svg::new(0.0, lx, 0.0, ly, title);
    svg.polyline(&polyline_of(iface), "black", 2.0);
    let len = 0.06 * lx.min(ly);
    let stride = (iface.len() / 12).max(1);
    for (p, n) in iface.nodes.iter().zip(iface.normals()).step_by(stride) {
        svg.arrow((p.x, p.y), (p.x + len * n.x, p.y + len * n.y), "steelblue");
    }
    svg
}

/// Interface plus the curve displaced along the normal by `mode`, scaled so
/// its largest excursion is a tenth of the container.
pub fn eigenmode_svg(iface: &Interface, mode: &[f64], lx: f64, ly: f64, title: &str) -> Svg {
    let mut svg = interface_svg(iface, lx, ly, title);
    let peak = mode.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if peak > 0.0 { 0.1 * lx.min(ly) / peak } else { 0.0 };
    let mut pts: Vec<(f64, f64)> = iface
        .nodes
        .iter()
        .zip(iface.normals())
        .zip(mode)
        .map(|((p, n), m)| (p.x + scale * m * n.x, p.y + scale * m * n.y))
        .collect();
    if !iface.is_chord() {
        pts.push(pts[0]);
    }
    svg.polyline(&pts, "crimson", 1.5);
    svg
}

pub fn snapshots_svg(snaps: &[Interface], lx: f64, ly: f64, title: &str) -> Svg {
    let mut svg = Svg::new(0.0, lx, 0.0, ly, title);
    let n = snaps.len().max(2) - 1;
    for (k, s) in snaps.iter().enumerate() {
        let shade = 200 - (200 * k / n) as u32;
        svg.polyline(&polyline_of(s), &format!("rgb({shade},{shade},{shade})"), 1.5);
    }
    svg
}

fn diverging(t: f64) -> String {
    // blue (−1) → white (0) → red (+1)
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let s = 1.0 + t;
        (255.0 * s, 255.0 * s, 255.0)
    } else {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    };
    format!("rgb({},{},{})", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Block-averaged heatmap with at most 128 blocks per axis.
pub fn heatmap_svg(f: &ScalarField, title: &str) -> Svg {
    let g = &f.grid;
    let mut svg = Svg::new(0.0, g.lx, 0.0, g.ly, title);
    let bx = g.nx.div_ceil(128);
    let by = g.ny.div_ceil(128);
    let scale = f.max_abs().max(1e-300);
    for jb in (0..g.ny).step_by(by) {
        for ib in (0..g.nx).step_by(bx) {
            let (ie, je) = ((ib + bx).min(g.nx), (jb + by).min(g.ny));
            let mut sum = 0.0;
            for j in jb..je {
                for i in ib..ie {
                    sum += f.at(i, j);
                }
            }
            let mean = sum / ((ie - ib) * (je - jb)) as f64;
            svg.cell(
                ib as f64 * g.hx,
                jb as f64 * g.hy,
                (ie - ib) as f64 * g.hx,
                (je - jb) as f64 * g.hy,
                &diverging(mean / scale),
            );
        }
    }
    svg
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo.is_finite() {
        let pad = 0.05 * (hi - lo).max(1e-12 * hi.abs().max(1.0));
        (lo - pad, hi + pad)
    } else {
        (0.0, 1.0)
    }
}

/// Several `(x, y)` series on shared linear axes.
pub fn line_plot_svg(series: &[(&str, &[(f64, f64)])], title: &str, xlabel: &str, ylabel: &str) -> Svg {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let mut svg = Svg::new(x0, x1, y0, y1, title);
    if y0 < 0.0 && y1 > 0.0 {
        svg.polyline(&[(x0, 0.0), (x1, 0.0)], "gray", 0.5);
    }
    for (colour, pts) in series {
        svg.polyline(pts, colour, 1.5);
        for p in pts.iter() {
            svg.dot(*p, colour);
        }
    }
    svg.axis_labels(xlabel, ylabel);
    svg
}

/// Log-log scatter of positive points; non-positive `y` values are drawn in
/// red along the bottom edge.
pub fn loglog_scatter_svg(pts: &[(f64, f64)], title: &str, xlabel: &str, ylabel: &str) -> Svg {
    let lx: Vec<f64> = pts.iter().filter(|p| p.0 > 0.0).map(|p| p.0.log10()).collect();
    let ly: Vec<f64> = pts.iter().filter(|p| p.1 > 0.0).map(|p| p.1.log10()).collect();
    let (x0, x1) = bounds(lx.into_iter());
    let (y0, y1) = bounds(ly.into_iter());
    let mut svg = Svg::new(x0, x1, y0, y1, title);
    for &(x, y) in pts {
        if x <= 0.0 {
            continue;
        }
        if y > 0.0 {
            svg.dot((x.log10(), y.log10()), "black");
        } else {
            svg.dot((x.log10(), y0), "red");
        }
    }
    svg.axis_labels(&format!("log10 {xlabel}"), &format!("log10 {ylabel}"));
    svg
}
