//! Total energy, the Lagrange multiplier and the Euler-Lagrange residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dirichlet_energy, trace_on_curve};
use crate::geometry::{symmetric_difference_exact, symmetric_difference_pixels};
use crate::interface::RegionState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "P")]
    pub perimeter: f64,
    /// `γ ∫|∇v|²`
    #[serde(rename = "NL")]
    pub nonlocal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "P")]
    pub perimeter: f64,
    #[serde(rename = "NL")]
    pub nonlocal: f64,
    pub lambda: f64,
    pub residual_sup: f64,
    pub residual_l2: f64,
    pub ortho_residual: [f64; 2],
}

pub fn energy_parts(state: &RegionState) -> Result<EnergyParts> {
    let perimeter = state.perimeter();
    let nonlocal = if state.gamma == 0.0 { 0.0 } else { state.gamma * dirichlet_energy(&state.fields()?.v) };
    let j = perimeter + nonlocal;
    if !j.is_finite() {
        return Err(Error::NonFinite("energy".into()));
    }
    Ok(EnergyParts { j, perimeter, nonlocal })
}

/// `J(E) = P(E, Ω) + γ ∫_Ω |∇v_E|²`.
pub fn total_energy(state: &RegionState) -> Result<f64> {
    Ok(energy_parts(state)?.j)
}

/// Per-node values of `H + 4γv` on the interface.
pub fn first_variation_density(state: &RegionState) -> Result<Vec<f64>> {
    let h = state.interface.curvature()?;
    if state.gamma == 0.0 {
        return Ok(h);
    }
    let v = trace_on_curve(&state.fields()?.v, &state.interface)?;
    Ok(h.iter().zip(&v).map(|(h, v)| h + 4.0 * state.gamma * v).collect())
}

/// `λ` as the arclength mean of `H + 4γv`, with the residual `H + 4γv − λ`.
pub fn multiplier_and_residual(state: &RegionState) -> Result<(f64, Vec<f64>)> {
    let g = first_variation_density(state)?;
    let w = state.interface.quadrature_weights();
    let total: f64 = w.iter().sum();
    let lambda = g.iter().zip(&w).map(|(g, w)| g * w).sum::<f64>() / total;
    Ok((lambda, g.iter().map(|g| g - lambda).collect()))
}

pub fn criticality(state: &RegionState) -> Result<CriticalityReport> {
    let parts = energy_parts(state)?;
    let (lambda, res) = multiplier_and_residual(state)?;
    let w = state.interface.quadrature_weights();
    let residual_sup = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let residual_l2 = res.iter().zip(&w).map(|(r, w)| r * r * w).sum::<f64>().sqrt();
    let ortho_residual =
        if state.interface.is_chord() { state.interface.orthogonality_residual(&state.domain)? } else { [0.0, 0.0] };
    Ok(CriticalityReport {
        j: parts.j,
        perimeter: parts.perimeter,
        nonlocal: parts.nonlocal,
        lambda,
        residual_sup,
        residual_l2,
        ortho_residual,
    })
}

/// `|A △ B|`, exact polygon boolean first, pixel count at 4× resolution if
/// the boolean result is unusable.
pub fn symmetric_difference(a: &RegionState, b: &RegionState) -> Result<f64> {
    let sa = a.shape()?;
    let sb = b.shape()?;
    let exact = symmetric_difference_exact(&sa, &sb, &a.domain);
    if exact.is_finite() && exact >= 0.0 && exact <= a.domain.area() {
        Ok(exact)
    } else {
        Ok(symmetric_difference_pixels(&sa, &sb, &a.grid, 4))
    }
}

/// Both sides of the Lipschitz estimate for the nonlocal term:
/// `(|∫|∇v_F|² − ∫|∇v_E|²|, |F △ E|)`.
pub fn lipschitz_gap(e: &RegionState, f: &RegionState) -> Result<(f64, f64)> {
    if e.domain != f.domain || e.grid != f.grid {
        return Err(Error::Mismatch("states live on different domains".into()));
    }
    if e.gamma != f.gamma {
        return Err(Error::Mismatch("states carry different γ".into()));
    }
    let de = dirichlet_energy(&e.fields()?.v);
    let df = dirichlet_energy(&f.fields()?.v);
    Ok(((df - de).abs(), symmetric_difference(e, f)?))
}
