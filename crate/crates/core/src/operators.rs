//! Finite-difference spatial operators on the tensor grid and its boundary chain.
//!
//! Besides the pointwise stencils (5-point Laplacian, periodic
//! Laplace-Beltrami, one-sided normal derivative) this module provides the
//! two pieces the time-stepping scheme is built from: the edge-weighted
//! bulk stiffness and the lumped (trapezoidal) node weights. Together they
//! satisfy the discrete Green identity
//!
//! ```text
//! sum_p W_p (lap f)_p g_p = -f^T S g          (interior rows)
//! sum_p (S f)_p = 0                            (all rows)
//! ```
//!
//! and `f^T S f` is the trapezoidal quadrature of `|grad f|^2` with
//! gradients taken at edge midpoints.

use crate::domain::{BoundaryField, BulkField, Grid};
use crate::error::Result;

/// One sparse row: `(column, weight)` pairs.
pub type Row = Vec<(usize, f64)>;

#[inline]
pub fn apply_row(row: &[(usize, f64)], x: &[f64]) -> f64 {
    row.iter().map(|&(c, w)| w * x[c]).sum()
}

/// Stencil rows of every spatial operator on one grid.
#[derive(Debug, Clone)]
pub struct StencilWeights {
    pub grid: Grid,
    /// Bulk 5-point Laplacian, `1/h^2` scaled; boundary rows are empty.
    pub laplacian: Vec<Row>,
    /// Periodic second difference along the boundary chain, `1/h^2` scaled.
    pub laplace_beltrami: Vec<Row>,
    /// Outward normal derivative at boundary nodes; columns are bulk indices.
    pub normal_derivative: Vec<Row>,
    /// Edge-weighted bulk stiffness (dimensionless). Edges lying on the
    /// boundary carry weight 1/2, all others weight 1.
    pub stiffness: Vec<Row>,
    /// Trapezoidal node weights (area units): `h^2` times 1, 1/2, 1/4.
    pub lumped_mass: Vec<f64>,
}

impl StencilWeights {
    pub fn new(grid: &Grid) -> Self {
        let g = *grid;
        let n = g.n_nodes();
        let nb = g.n_boundary();
        let h = g.h;
        let ih2 = 1.0 / (h * h);

        let mut laplacian = vec![Row::new(); n];
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                let p = g.index(i, j);
                laplacian[p] = vec![
                    (g.index(i - 1, j), ih2),
                    (g.index(i + 1, j), ih2),
                    (g.index(i, j - 1), ih2),
                    (g.index(i, j + 1), ih2),
                    (p, -4.0 * ih2),
                ];
            }
        }

        let laplace_beltrami = (0..nb)
            .map(|k| {
                vec![
                    ((k + nb - 1) % nb, ih2),
                    (k, -2.0 * ih2),
                    ((k + 1) % nb, ih2),
                ]
            })
            .collect();

        let normal_derivative = (0..nb)
            .map(|k| {
                let (i, j) = g.boundary_node(k);
                let mut parts: Vec<Row> = Vec::with_capacity(2);
                // one-sided stencil along each axis on which (i, j) is extremal
                let c = 1.0 / (2.0 * h);
                if i == 0 || i == g.nx - 1 {
                    let s: isize = if i == 0 { 1 } else { -1 };
                    let i1 = (i as isize + s) as usize;
                    let i2 = (i as isize + 2 * s) as usize;
                    parts.push(vec![
                        (g.index(i, j), 3.0 * c),
                        (g.index(i1, j), -4.0 * c),
                        (g.index(i2, j), c),
                    ]);
                }
                if j == 0 || j == g.ny - 1 {
                    let s: isize = if j == 0 { 1 } else { -1 };
                    let j1 = (j as isize + s) as usize;
                    let j2 = (j as isize + 2 * s) as usize;
                    parts.push(vec![
                        (g.index(i, j), 3.0 * c),
                        (g.index(i, j1), -4.0 * c),
                        (g.index(i, j2), c),
                    ]);
                }
                let scale = 1.0 / parts.len() as f64;
                merge(parts.into_iter().flatten().map(|(col, w)| (col, w * scale)))
            })
            .collect();

        let mut stiffness = vec![Row::new(); n];
        let mut add_edge = |p: usize, q: usize, w: f64| {
            stiffness[p].push((p, w));
            stiffness[p].push((q, -w));
            stiffness[q].push((q, w));
            stiffness[q].push((p, -w));
        };
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = g.index(i, j);
                if i + 1 < g.nx {
                    let w = if j == 0 || j == g.ny - 1 { 0.5 } else { 1.0 };
                    add_edge(p, g.index(i + 1, j), w);
                }
                if j + 1 < g.ny {
                    let w = if i == 0 || i == g.nx - 1 { 0.5 } else { 1.0 };
                    add_edge(p, g.index(i, j + 1), w);
                }
            }
        }
        let stiffness = stiffness.into_iter().map(merge).collect();

        let lumped_mass = (0..n)
            .map(|p| {
                let (i, j) = g.ij(p);
                let wx = if i == 0 || i == g.nx - 1 { 0.5 } else { 1.0 };
                let wy = if j == 0 || j == g.ny - 1 { 0.5 } else { 1.0 };
                wx * wy * h * h
            })
            .collect();

        Self {
            grid: g,
            laplacian,
            laplace_beltrami,
            normal_derivative,
            stiffness,
            lumped_mass,
        }
    }

    /// Stiffness applied to a bulk vector: `(S f)_p = sum_e w_e (f_p - f_q)`.
    pub fn apply_stiffness(&self, f: &[f64]) -> Vec<f64> {
        self.stiffness.iter().map(|r| apply_row(r, f)).collect()
    }

    /// `f^T S f`, computed edge by edge.
    pub fn dirichlet_form(&self, f: &[f64]) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = g.index(i, j);
                if i + 1 < g.nx {
                    let w = if j == 0 || j == g.ny - 1 { 0.5 } else { 1.0 };
                    let d = f[g.index(i + 1, j)] - f[p];
                    acc += w * d * d;
                }
                if j + 1 < g.ny {
                    let w = if i == 0 || i == g.nx - 1 { 0.5 } else { 1.0 };
                    let d = f[g.index(i, j + 1)] - f[p];
                    acc += w * d * d;
                }
            }
        }
        acc
    }
}

/// Sums duplicate columns and sorts by column.
fn merge(entries: impl IntoIterator<Item = (usize, f64)>) -> Row {
    let mut v: Row = entries.into_iter().collect();
    v.sort_by_key(|&(c, _)| c);
    let mut out: Row = Vec::with_capacity(v.len());
    for (c, w) in v {
        match out.last_mut() {
            Some((lc, lw)) if *lc == c => *lw += w,
            _ => out.push((c, w)),
        }
    }
    out
}

pub fn laplacian_interior(f: &BulkField, grid: &Grid) -> Result<BulkField> {
    f.check(grid)?;
    let st = StencilWeights::new(grid);
    Ok(BulkField {
        values: st.laplacian.iter().map(|r| apply_row(r, &f.values)).collect(),
    })
}

pub fn laplace_beltrami(g: &BoundaryField, grid: &Grid) -> Result<BoundaryField> {
    g.check(grid)?;
    let nb = grid.n_boundary();
    let ih2 = 1.0 / (grid.h * grid.h);
    let v = &g.values;
    Ok(BoundaryField {
        values: (0..nb)
            .map(|k| (v[(k + nb - 1) % nb] - 2.0 * v[k] + v[(k + 1) % nb]) * ih2)
            .collect(),
    })
}

/// Second-order one-sided outward normal derivative; at corners the mean
/// of the two axis-aligned one-sided derivatives.
pub fn normal_derivative(f: &BulkField, grid: &Grid) -> Result<BoundaryField> {
    f.check(grid)?;
    let st = StencilWeights::new(grid);
    Ok(BoundaryField {
        values: st
            .normal_derivative
            .iter()
            .map(|r| apply_row(r, &f.values))
            .collect(),
    })
}
