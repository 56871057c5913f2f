//! Grid geometry, model parameters and the evolving simulation state.
//!
//! The bulk grid is a tensor grid of `nx * ny` nodes stored row-major
//! (`index = j * nx + i`, `x = i * h`, `y = j * h`). The boundary chain is
//! the closed loop of perimeter nodes of that same grid, walked
//! counterclockwise from node `(0, 0)`; every boundary node, corners
//! included, appears exactly once.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::potentials::PotentialSpec;

const SQUARE_CELL_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub h: f64,
}

impl Grid {
    /// Rectangle `(0, lx) x (0, ly)` with `nx * ny` nodes. Cells must be square.
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 4 nodes per axis, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "domain lengths must be positive, got lx={lx}, ly={ly}"
            )));
        }
        let hx = lx / (nx - 1) as f64;
        let hy = ly / (ny - 1) as f64;
        if (hx - hy).abs() > SQUARE_CELL_RTOL * hx.max(hy) {
            return Err(Error::InvalidParameter(format!(
                "cells must be square: hx={hx}, hy={hy}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            h: hx,
        })
    }

    pub fn square(n: usize, l: f64) -> Result<Self> {
        Self::new(n, n, l, l)
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_boundary(&self) -> usize {
        2 * (self.nx - 1) + 2 * (self.ny - 1)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, p: usize) -> (usize, usize) {
        (p % self.nx, p / self.nx)
    }

    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h, j as f64 * self.h)
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    pub fn is_corner(&self, i: usize, j: usize) -> bool {
        (i == 0 || i == self.nx - 1) && (j == 0 || j == self.ny - 1)
    }

    /// Grid coordinates of the `k`-th node of the boundary chain.
    pub fn boundary_node(&self, k: usize) -> (usize, usize) {
        let a = self.nx - 1;
        let b = self.ny - 1;
        assert!(k < 2 * a + 2 * b, "boundary position {k} out of range");
        if k < a {
            (k, 0)
        } else if k < a + b {
            (a, k - a)
        } else if k < 2 * a + b {
            (a - (k - a - b), b)
        } else {
            (0, b - (k - 2 * a - b))
        }
    }

    /// Position along the boundary chain of grid node `(i, j)`, if it is on the boundary.
    pub fn boundary_position(&self, i: usize, j: usize) -> Option<usize> {
        let a = self.nx - 1;
        let b = self.ny - 1;
        if i > a || j > b {
            return None;
        }
        if j == 0 && i < a {
            Some(i)
        } else if i == a && j < b {
            Some(a + j)
        } else if j == b && i > 0 {
            Some(a + b + (a - i))
        } else if i == 0 && j > 0 {
            Some(2 * a + b + (b - j))
        } else {
            None
        }
    }

    /// Bulk indices of the boundary chain, in chain order.
    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.n_boundary())
            .map(|k| {
                let (i, j) = self.boundary_node(k);
                self.index(i, j)
            })
            .collect()
    }
}

/// Scalar field on all bulk nodes (phi or mu).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkField {
    pub values: Vec<f64>,
}

impl BulkField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            values: vec![c; grid.n_nodes()],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_nodes());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.coords(i, j);
                values.push(f(x, y));
            }
        }
        Self { values }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        check_len("bulk field", grid.n_nodes(), values.len())?;
        Ok(Self { values })
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        check_len("bulk field", grid.n_nodes(), self.values.len())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Scalar field on the boundary chain (psi or mu_gamma), in chain order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryField {
    pub values: Vec<f64>,
}

impl BoundaryField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            values: vec![c; grid.n_boundary()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        check_len("boundary field", grid.n_boundary(), values.len())?;
        Ok(Self { values })
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        check_len("boundary field", grid.n_boundary(), self.values.len())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Restriction of a bulk field to the boundary chain.
pub fn trace(phi: &BulkField, grid: &Grid) -> Result<BoundaryField> {
    phi.check(grid)?;
    let values = (0..grid.n_boundary())
        .map(|k| {
            let (i, j) = grid.boundary_node(k);
            phi.values[grid.index(i, j)]
        })
        .collect();
    Ok(BoundaryField { values })
}

/// Copy of `phi` whose boundary nodes are overwritten by `psi`.
pub fn scatter_trace(psi: &BoundaryField, phi: &BulkField, grid: &Grid) -> Result<BulkField> {
    phi.check(grid)?;
    psi.check(grid)?;
    let mut out = phi.clone();
    for (k, &v) in psi.values.iter().enumerate() {
        let (i, j) = grid.boundary_node(k);
        out.values[grid.index(i, j)] = v;
    }
    Ok(out)
}

/// Bulk/surface coupling mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coupling {
    /// Robin-type coupling `K d_n mu = mu_gamma - mu` with finite `K > 0`.
    Finite(f64),
    /// `K = 0`: bulk and surface chemical potentials coincide on the boundary.
    Gms,
    /// `K = infinity`: no mass exchange between bulk and boundary.
    LiuWu,
}

impl Coupling {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Coupling::Finite(k) if !(k > 0.0 && k.is_finite()) => Err(Error::InvalidParameter(
                format!("relaxation parameter K must be finite and positive, got {k}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Coupling::Finite(k) => format!("{k}"),
            Coupling::Gms => "gms".to_string(),
            Coupling::LiuWu => "liuwu".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub epsilon: f64,
    pub delta: f64,
    pub kappa: f64,
    pub coupling: Coupling,
    pub s1: f64,
    pub s2: f64,
    pub potential: PotentialSpec,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be nonnegative, got {v}")))
            }
        };
        positive("epsilon", self.epsilon)?;
        positive("delta", self.delta)?;
        nonneg("kappa", self.kappa)?;
        nonneg("s1", self.s1)?;
        nonneg("s2", self.s2)?;
        self.coupling.validate()?;
        self.potential.validate()
    }

    pub fn bulk_potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn surface_potential(&self) -> &PotentialSpec {
        &self.potential
    }

    /// Smallest `s1` for which the scheme is unconditionally energy stable.
    pub fn min_s1(&self) -> f64 {
        self.bulk_potential().second_derivative_bound() / (2.0 * self.epsilon)
    }

    pub fn min_s2(&self) -> f64 {
        self.surface_potential().second_derivative_bound() / (2.0 * self.delta)
    }

    pub fn satisfies_stability(&self) -> bool {
        self.s1 >= self.min_s1() && self.s2 >= self.min_s2()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub phi: BulkField,
    pub mu: BulkField,
    pub psi: BoundaryField,
    pub mu_gamma: BoundaryField,
    pub t: f64,
    pub step: usize,
}

impl SimState {
    /// State at `t = 0` with `psi = trace(phi)` and zero chemical potentials.
    pub fn from_phi(phi: BulkField, grid: &Grid) -> Result<Self> {
        let psi = trace(&phi, grid)?;
        Ok(Self {
            mu: BulkField::zeros(grid),
            mu_gamma: BoundaryField::zeros(grid),
            phi,
            psi,
            t: 0.0,
            step: 0,
        })
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        self.phi.check(grid)?;
        self.mu.check(grid)?;
        self.psi.check(grid)?;
        self.mu_gamma.check(grid)
    }
}
