//! Discrete energy, masses and extrema.
//!
//! Bulk integrals use the trapezoidal node weights (corner 1/4, edge 1/2,
//! interior 1, times `h^2`); boundary integrals weight every chain node by
//! `h`. Gradient energies are evaluated from differences across grid edges
//! (bulk) and chain links (surface), i.e. at edge midpoints, which is the
//! quadratic form the time step dissipates.

use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryField, BulkField, Grid, ModelParams, SimState};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagRecord {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub bulk_mass: f64,
    pub surface_mass: f64,
    pub total_mass: f64,
    pub min_phi: f64,
    pub max_phi: f64,
    pub min_psi: f64,
    pub max_psi: f64,
}

pub const CSV_HEADER: &str =
    "step,t,energy,bulk_mass,surface_mass,total_mass,min_phi,max_phi,min_psi,max_psi";

impl DiagRecord {
    pub fn from_state(state: &SimState, grid: &Grid, params: &ModelParams) -> Result<Self> {
        let bulk_mass = bulk_mass(&state.phi, grid)?;
        let surface_mass = surface_mass(&state.psi, grid)?;
        let (min_phi, max_phi, min_psi, max_psi) = extrema(state);
        Ok(Self {
            step: state.step,
            t: state.t,
            energy: energy(state, grid, params)?,
            bulk_mass,
            surface_mass,
            total_mass: bulk_mass + surface_mass,
            min_phi,
            max_phi,
            min_psi,
            max_psi,
        })
    }

    /// One CSV row, floats with 17 significant digits.
    pub fn csv_row(&self) -> String {
        let f = |v: f64| format!("{v:.16e}");
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            f(self.t),
            f(self.energy),
            f(self.bulk_mass),
            f(self.surface_mass),
            f(self.total_mass),
            f(self.min_phi),
            f(self.max_phi),
            f(self.min_psi),
            f(self.max_psi)
        )
    }
}

#[inline]
pub(crate) fn node_weight(grid: &Grid, i: usize, j: usize) -> f64 {
    let wx = if i == 0 || i == grid.nx - 1 { 0.5 } else { 1.0 };
    let wy = if j == 0 || j == grid.ny - 1 { 0.5 } else { 1.0 };
    wx * wy * grid.h * grid.h
}

pub fn bulk_mass(phi: &BulkField, grid: &Grid) -> Result<f64> {
    phi.check(grid)?;
    let mut acc = 0.0;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            acc += node_weight(grid, i, j) * phi.values[grid.index(i, j)];
        }
    }
    Ok(acc)
}

pub fn surface_mass(psi: &BoundaryField, grid: &Grid) -> Result<f64> {
    psi.check(grid)?;
    Ok(grid.h * psi.values.iter().sum::<f64>())
}

/// Trapezoidal `int |grad f|^2` with edge-midpoint differences.
pub fn bulk_gradient_energy(f: &BulkField, grid: &Grid) -> Result<f64> {
    f.check(grid)?;
    let v = &f.values;
    let mut acc = 0.0;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.index(i, j);
            if i + 1 < grid.nx {
                let w = if j == 0 || j == grid.ny - 1 { 0.5 } else { 1.0 };
                let d = v[p + 1] - v[p];
                acc += w * d * d;
            }
            if j + 1 < grid.ny {
                let w = if i == 0 || i == grid.nx - 1 { 0.5 } else { 1.0 };
                let d = v[p + grid.nx] - v[p];
                acc += w * d * d;
            }
        }
    }
    Ok(acc)
}

/// `int_Gamma |d_s g|^2` along the closed chain.
pub fn surface_gradient_energy(g: &BoundaryField, grid: &Grid) -> Result<f64> {
    g.check(grid)?;
    let nb = g.len();
    let acc: f64 = (0..nb)
        .map(|k| {
            let d = g.values[(k + 1) % nb] - g.values[k];
            d * d
        })
        .sum();
    Ok(acc / grid.h)
}

pub fn energy(state: &SimState, grid: &Grid, params: &ModelParams) -> Result<f64> {
    state.phi.check(grid)?;
    state.psi.check(grid)?;
    let bulk_pot = params.bulk_potential();
    let surf_pot = params.surface_potential();
    let mut bulk = 0.0;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            bulk += node_weight(grid, i, j) * bulk_pot.eval(state.phi.values[grid.index(i, j)]).value;
        }
    }
    let surf: f64 = grid.h * state.psi.values.iter().map(|&v| surf_pot.eval(v).value).sum::<f64>();
    Ok(bulk / params.epsilon
        + 0.5 * params.epsilon * bulk_gradient_energy(&state.phi, grid)?
        + surf / params.delta
        + 0.5 * params.delta * params.kappa * surface_gradient_energy(&state.psi, grid)?)
}

/// `(min phi, max phi, min psi, max psi)`.
pub fn extrema(state: &SimState) -> (f64, f64, f64, f64) {
    let mm = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    };
    let (a, b) = mm(&state.phi.values);
    let (c, d) = mm(&state.psi.values);
    (a, b, c, d)
}
