//! Scenario files: strict JSON, every key known, every value range-checked.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{DomainKind, DomainSpec, Point, MIN_CELLS};
use crate::error::{Error, Result};
use crate::interface::{Interface, RegionState, Side, Topology, MIN_NODES};
use crate::probe::DEFAULT_AMPLITUDES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Configuration {
    Lamella {
        a: f64,
    },
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    Nodes {
        points: Vec<[f64; 2]>,
        topology: Topology,
        #[serde(default = "default_side")]
        inside: Side,
    },
}

fn default_side() -> Side {
    Side::Left
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityParams {
    /// Optional `γ` values at which `mu_min` is also reported.
    pub gamma_ladder: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionParams {
    pub k_max: usize,
}

impl Default for DispersionParams {
    fn default() -> Self {
        DispersionParams { k_max: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeParams {
    pub samples: usize,
    pub amplitudes: Vec<f64>,
    /// Random shapes for the Lipschitz scan; 0 skips it.
    pub lipschitz_shapes: usize,
    pub lipschitz_amplitudes: Vec<f64>,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams {
            samples: 100,
            amplitudes: DEFAULT_AMPLITUDES.to_vec(),
            lipschitz_shapes: 0,
            lipschitz_amplitudes: vec![1e-3, 1e-2, 1e-1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    pub steps: usize,
    /// Defaults to the largest admissible step.
    pub dt: Option<f64>,
    pub snapshot_every: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams { steps: 500, dt: None, snapshot_every: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaStarParams {
    pub k_max: usize,
    pub tol: f64,
    pub bracket: [f64; 2],
}

impl Default for GammaStarParams {
    fn default() -> Self {
        GammaStarParams { k_max: 8, tol: 1e-4, bracket: [0.0, 100.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffuseParams {
    pub epsilon: f64,
    /// Defaults to the scenario `gamma`.
    pub gamma0: Option<f64>,
    pub steps: usize,
    /// Defaults to the largest admissible step.
    pub dt: Option<f64>,
    /// Row stride of the energy log.
    pub log_every: usize,
}

impl Default for DiffuseParams {
    fn default() -> Self {
        DiffuseParams { epsilon: 0.04, gamma0: None, steps: 2000, dt: None, log_every: 10 }
    }
}

fn default_nodes() -> usize {
    128
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub domain: DomainSpec,
    pub configuration: Configuration,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub stability: StabilityParams,
    #[serde(default)]
    pub dispersion: DispersionParams,
    #[serde(default)]
    pub probe: ProbeParams,
    #[serde(default)]
    pub flow: FlowParams,
    #[serde(default)]
    pub gammastar: GammaStarParams,
    #[serde(default)]
    pub diffuse: DiffuseParams,
}

/// 1-based line of the first occurrence of `"key"` in the source text.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn range_error(text: &str, path: &str, msg: String) -> Error {
    let leaf = path.rsplit('.').next().unwrap_or(path);
    match line_of(text, leaf) {
        Some(line) => Error::Scenario(format!("key `{path}` (line {line}): {msg}")),
        None => Error::Scenario(format!("key `{path}`: {msg}")),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Scenario(format!("key `{path}` (line {}, column {}): {inner}", inner.line(), inner.column()))
        })?;
        sc.validate(text)?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Scenario::parse(&text)
    }

    fn validate(&self, text: &str) -> Result<()> {
        let bad = |path: &str, msg: String| Err(range_error(text, path, msg));
        self.domain.validate().map_err(|e| range_error(text, "domain", e.to_string()))?;
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad("gamma", format!("must be finite and >= 0, got {}", self.gamma));
        }
        if self.nodes < MIN_NODES {
            return bad("nodes", format!("must be >= {MIN_NODES}, got {}", self.nodes));
        }
        match &self.configuration {
            Configuration::Lamella { a } if !(*a > 0.0 && *a < self.domain.lx) => {
                return bad("configuration.lamella.a", format!("must lie in (0, {}), got {a}", self.domain.lx));
            }
            Configuration::Circle { radius, .. } if !(*radius > 0.0) => {
                return bad("configuration.circle.radius", format!("must be > 0, got {radius}"));
            }
            Configuration::Nodes { points, .. } if points.len() < 3 => {
                return bad("configuration.nodes.points", format!("needs at least 3 points, got {}", points.len()));
            }
            _ => {}
        }
        if self.stability.gamma_ladder.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return bad("stability.gamma_ladder", "entries must be finite and >= 0".into());
        }
        if self.dispersion.k_max == 0 {
            return bad("dispersion.k_max", "must be >= 1".into());
        }
        if self.probe.samples < 50 {
            return bad("probe.samples", format!("must be >= 50, got {}", self.probe.samples));
        }
        for (key, amps) in [
            ("probe.amplitudes", &self.probe.amplitudes),
            ("probe.lipschitz_amplitudes", &self.probe.lipschitz_amplitudes),
        ] {
            if amps.is_empty() || amps.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
                return bad(key, "must be a non-empty list of positive numbers".into());
            }
        }
        if self.flow.steps == 0 {
            return bad("flow.steps", "must be >= 1".into());
        }
        if matches!(self.flow.dt, Some(dt) if !(dt > 0.0)) {
            return bad("flow.dt", "must be > 0".into());
        }
        if self.gammastar.k_max == 0 {
            return bad("gammastar.k_max", "must be >= 1".into());
        }
        if !(self.gammastar.tol > 0.0) {
            return bad("gammastar.tol", "must be > 0".into());
        }
        let [lo, hi] = self.gammastar.bracket;
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return bad("gammastar.bracket", format!("need 0 <= lo < hi, got [{lo}, {hi}]"));
        }
        if !(self.diffuse.epsilon > 0.0) || !self.diffuse.epsilon.is_finite() {
            return bad("diffuse.epsilon", "must be finite and > 0".into());
        }
        if matches!(self.diffuse.gamma0, Some(g) if !(g >= 0.0)) {
            return bad("diffuse.gamma0", "must be >= 0".into());
        }
        if matches!(self.diffuse.dt, Some(dt) if !(dt > 0.0)) {
            return bad("diffuse.dt", "must be > 0".into());
        }
        if self.diffuse.log_every == 0 {
            return bad("diffuse.log_every", "must be >= 1".into());
        }
        Ok(())
    }

    /// `--grid N`: `N` cells along `x`, with `y` scaled to keep cells square.
    pub fn set_grid(&mut self, n: usize) {
        let ny = ((n as f64) * self.domain.ly / self.domain.lx).round() as usize;
        self.domain = self.domain.clone().with_resolution(n, ny.max(MIN_CELLS));
    }

    pub fn is_unit_square(&self) -> bool {
        self.domain.kind == DomainKind::Rectangle && self.domain.lx == 1.0 && self.domain.ly == 1.0
    }

    pub fn interface(&self) -> Result<Interface> {
        Ok(match &self.configuration {
            Configuration::Lamella { a } => Interface::lamella(&self.domain, *a, self.nodes),
            Configuration::Circle { center, radius } => {
                Interface::circle(Point::new(center[0], center[1]), *radius, self.nodes)
            }
            // explicit polylines are resampled uniformly to `nodes`
            Configuration::Nodes { points, topology, inside } => {
                Interface::new(points.iter().map(|p| Point::new(p[0], p[1])).collect(), *topology, *inside)
                    .resample_count(self.nodes)?
            }
        })
    }

    pub fn state(&self) -> Result<RegionState> {
        RegionState::new(self.interface()?, self.domain.clone(), self.gamma)
    }

    pub fn lamella_a(&self) -> Option<f64> {
        match self.configuration {
            Configuration::Lamella { a } => Some(a),
            _ => None,
        }
    }
}
