//! Brute-force reference implementations for tests.
//!
//! Everything here is rebuilt from geometry: stiffness weights come from
//! the lengths of dual-cell faces clipped to the rectangle, lumped masses
//! from clipped dual-cell areas, and the boundary chain from an explicit
//! walk around the perimeter. Nothing is shared with [`crate::operators`]
//! or [`crate::scheme`], so a bug in the production stencils cannot
//! validate itself.
//!
//! Sizes are capped at [`MAX_NODES`] nodes.

use nalgebra::{DMatrix, DVector};

use crate::domain::{BulkField, Coupling, Grid, ModelParams, SimState};
use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;

pub const MAX_NODES: usize = 144;

fn guard(grid: &Grid) -> Result<()> {
    if grid.n_nodes() > MAX_NODES {
        return Err(Error::InvalidParameter(format!(
            "oracle limited to {MAX_NODES} nodes, grid has {}",
            grid.n_nodes()
        )));
    }
    Ok(())
}

/// Boundary nodes in walking order: start at the origin, go along the
/// bottom edge and turn left at every corner.
pub fn perimeter_walk(grid: &Grid) -> Vec<(usize, usize)> {
    let dirs: [(isize, isize); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let inside = |i: isize, j: isize| i >= 0 && j >= 0 && i < nx && j < ny;
    let mut out = Vec::new();
    let (mut i, mut j, mut d) = (0isize, 0isize, 0usize);
    loop {
        out.push((i as usize, j as usize));
        if !inside(i + dirs[d].0, j + dirs[d].1) {
            d += 1;
        }
        if d == 4 {
            break;
        }
        i += dirs[d].0;
        j += dirs[d].1;
        if (i, j) == (0, 0) {
            break;
        }
    }
    out
}

/// Length of `[c - h/2, c + h/2]` clipped to `[0, l]`.
fn clipped(c: f64, h: f64, l: f64) -> f64 {
    ((c + 0.5 * h).min(l) - (c - 0.5 * h).max(0.0)).max(0.0)
}

/// Areas of the dual cells clipped to the domain.
pub fn dense_mass(grid: &Grid) -> Result<Vec<f64>> {
    guard(grid)?;
    let h = grid.h;
    let mut m = vec![0.0; grid.n_nodes()];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = grid.coords(i, j);
            m[grid.index(i, j)] = clipped(x, h, grid.lx) * clipped(y, h, grid.ly);
        }
    }
    Ok(m)
}

/// Graph Laplacian with edge weights equal to the clipped dual-face length
/// over the edge length.
pub fn dense_stiffness(grid: &Grid) -> Result<DMatrix<f64>> {
    guard(grid)?;
    let n = grid.n_nodes();
    let h = grid.h;
    let mut s = DMatrix::zeros(n, n);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.index(i, j);
            let (x, y) = grid.coords(i, j);
            let mut nbrs = Vec::new();
            if i > 0 {
                nbrs.push((grid.index(i - 1, j), clipped(y, h, grid.ly) / h));
            }
            if i + 1 < grid.nx {
                nbrs.push((grid.index(i + 1, j), clipped(y, h, grid.ly) / h));
            }
            if j > 0 {
                nbrs.push((grid.index(i, j - 1), clipped(x, h, grid.lx) / h));
            }
            if j + 1 < grid.ny {
                nbrs.push((grid.index(i, j + 1), clipped(x, h, grid.lx) / h));
            }
            for (q, w) in nbrs {
                s[(p, p)] += w;
                s[(p, q)] -= w;
            }
        }
    }
    Ok(s)
}

/// Five-point Laplacian on interior nodes; boundary rows are zero.
pub fn dense_laplacian(grid: &Grid) -> Result<DMatrix<f64>> {
    guard(grid)?;
    let n = grid.n_nodes();
    let ih2 = 1.0 / (grid.h * grid.h);
    let mut a = DMatrix::zeros(n, n);
    for p in 0..n {
        let (i, j) = grid.ij(p);
        if grid.is_boundary(i, j) {
            continue;
        }
        a[(p, p)] = -4.0 * ih2;
        for q in [grid.index(i - 1, j), grid.index(i + 1, j), grid.index(i, j - 1), grid.index(i, j + 1)] {
            a[(p, q)] = ih2;
        }
    }
    Ok(a)
}

/// Second difference along the closed boundary chain.
pub fn dense_laplace_beltrami(grid: &Grid) -> Result<DMatrix<f64>> {
    guard(grid)?;
    let walk = perimeter_walk(grid);
    let nb = walk.len();
    let ih2 = 1.0 / (grid.h * grid.h);
    let mut a = DMatrix::zeros(nb, nb);
    for k in 0..nb {
        a[(k, k)] -= 2.0 * ih2;
        a[(k, (k + 1) % nb)] += ih2;
        a[(k, (k + nb - 1) % nb)] += ih2;
    }
    Ok(a)
}

/// Outward one-sided second-order normal derivative, corners averaged.
pub fn dense_normal_derivative(grid: &Grid) -> Result<DMatrix<f64>> {
    guard(grid)?;
    let walk = perimeter_walk(grid);
    let mut a = DMatrix::zeros(walk.len(), grid.n_nodes());
    let c = 1.0 / (2.0 * grid.h);
    for (k, &(i, j)) in walk.iter().enumerate() {
        let mut stencils: Vec<[(usize, usize); 3]> = Vec::new();
        if i == 0 {
            stencils.push([(0, j), (1, j), (2, j)]);
        }
        if i == grid.nx - 1 {
            stencils.push([(i, j), (i - 1, j), (i - 2, j)]);
        }
        if j == 0 {
            stencils.push([(i, 0), (i, 1), (i, 2)]);
        }
        if j == grid.ny - 1 {
            stencils.push([(i, j), (i, j - 1), (i, j - 2)]);
        }
        let share = 1.0 / stencils.len() as f64;
        for st in stencils {
            for ((ii, jj), w) in st.into_iter().zip([3.0 * c, -4.0 * c, c]) {
                a[(k, grid.index(ii, jj))] += share * w;
            }
        }
    }
    Ok(a)
}

/// Dense step matrix and right-hand side.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: Vec<f64>,
}

/// Step operator assembled entry by entry. The rhs is built from `state`.
pub fn dense_assemble(grid: &Grid, params: &ModelParams, tau: f64, state: &SimState) -> Result<DenseSystem> {
    guard(grid)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    params.validate()?;
    state.check(grid)?;
    let n = grid.n_nodes();
    let walk = perimeter_walk(grid);
    let nb = walk.len();
    let h = grid.h;
    let s = dense_stiffness(grid)?;
    let w = dense_mass(grid)?;
    let (eps, delta, kappa, s1, s2) = (params.epsilon, params.delta, params.kappa, params.s1, params.s2);
    let f1 = |x: f64| params.bulk_potential().d1(x);
    let g1 = |x: f64| params.surface_potential().d1(x);
    let phi = &state.phi.values;
    let psi = &state.psi.values;

    let dim = 2 * n + nb;
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = vec![0.0; dim];
    let (ph, mu, mg) = (0usize, n, 2 * n);
    // chain neighbours as bulk indices
    let chain: Vec<usize> = walk.iter().map(|&(i, j)| grid.index(i, j)).collect();
    let mut position = vec![None; n];
    for (k, &p) in chain.iter().enumerate() {
        position[p] = Some(k);
    }

    for p in 0..n {
        let Some(k) = position[p] else {
            a[(ph + p, ph + p)] = 1.0;
            a[(mu + p, mu + p)] = 1.0;
            a[(mu + p, ph + p)] = -s1;
            for q in 0..n {
                if s[(p, q)] != 0.0 {
                    a[(ph + p, mu + q)] += tau / (h * h) * s[(p, q)];
                    a[(mu + p, ph + q)] += -eps / (h * h) * s[(p, q)];
                }
            }
            b[ph + p] = phi[p];
            b[mu + p] = f1(phi[p]) / eps - s1 * phi[p];
            continue;
        };
        let prev = (k + nb - 1) % nb;
        let next = (k + 1) % nb;
        let wp = w[p];

        // phi_b row
        a[(ph + p, ph + p)] = 1.0;
        let (c_surf, c_bulk) = match params.coupling {
            Coupling::LiuWu => (tau / h, 0.0),
            _ => (tau / (h + wp), tau / (h + wp)),
        };
        a[(ph + p, mg + k)] += 2.0 / h * c_surf;
        a[(ph + p, mg + prev)] += -1.0 / h * c_surf;
        a[(ph + p, mg + next)] += -1.0 / h * c_surf;
        if c_bulk != 0.0 {
            for q in 0..n {
                if s[(p, q)] != 0.0 {
                    a[(ph + p, mu + q)] += c_bulk * s[(p, q)];
                }
            }
        }
        b[ph + p] = psi[k];

        // mu_b row
        match params.coupling {
            Coupling::Finite(kk) => {
                let c = 1.0 / (1.0 + kk);
                for q in 0..n {
                    if s[(p, q)] != 0.0 {
                        a[(mu + p, mu + q)] += c * kk / h * s[(p, q)];
                    }
                }
                a[(mu + p, ph + p)] += c * kk * wp / (h * tau);
                a[(mu + p, mu + p)] += c;
                a[(mu + p, mg + k)] += -c;
                b[mu + p] = c * kk * wp / (h * tau) * phi[p];
            }
            Coupling::Gms => {
                a[(mu + p, mu + p)] = 1.0;
                a[(mu + p, mg + k)] = -1.0;
            }
            Coupling::LiuWu => {
                for q in 0..n {
                    if s[(p, q)] != 0.0 {
                        a[(mu + p, mu + q)] += s[(p, q)] / h;
                    }
                }
                a[(mu + p, ph + p)] += wp / (h * tau);
                b[mu + p] = wp / (h * tau) * phi[p];
            }
        }

        // mu_gamma row
        a[(mg + k, mg + k)] = 1.0;
        a[(mg + k, ph + p)] += -delta * kappa / h * (2.0 / h);
        a[(mg + k, ph + chain[prev])] += -delta * kappa / h * (-1.0 / h);
        a[(mg + k, ph + chain[next])] += -delta * kappa / h * (-1.0 / h);
        for q in 0..n {
            if s[(p, q)] != 0.0 {
                a[(mg + k, ph + q)] += -eps / h * s[(p, q)];
            }
        }
        a[(mg + k, ph + p)] += -(wp / h) * s1 - s2;
        a[(mg + k, mu + p)] += wp / h;
        b[mg + k] = g1(psi[k]) / delta - s2 * psi[k] + wp / h * (f1(phi[p]) / eps - s1 * phi[p]);
    }
    Ok(DenseSystem { matrix: a, rhs: b })
}

/// Linear semi-discrete system `B x' + A x = 0` for zero potentials and
/// zero stabilization, in unknowns `(phi, mu, mu_gamma)`.
///
/// Rows are the conservation laws in weak form: lumped bulk and surface
/// mass balances, the boundary exchange law, and the two chemical
/// potential definitions. The backward Euler step of this system is the
/// production scheme up to row scaling.
pub fn semi_discrete_linear(grid: &Grid, params: &ModelParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    guard(grid)?;
    params.validate()?;
    if params.potential != PotentialSpec::Zero || params.s1 != 0.0 || params.s2 != 0.0 {
        return Err(Error::InvalidParameter(
            "semi-discrete reference needs the zero potential and s1 = s2 = 0".into(),
        ));
    }
    let n = grid.n_nodes();
    let walk = perimeter_walk(grid);
    let nb = walk.len();
    let h = grid.h;
    let s = dense_stiffness(grid)?;
    let w = dense_mass(grid)?;
    let (eps, dk) = (params.epsilon, params.delta * params.kappa);
    let chain: Vec<usize> = walk.iter().map(|&(i, j)| grid.index(i, j)).collect();
    let mut position = vec![None; n];
    for (k, &p) in chain.iter().enumerate() {
        position[p] = Some(k);
    }
    let dim = 2 * n + nb;
    let (ph, mu, mg) = (0usize, n, 2 * n);
    let mut bm = DMatrix::zeros(dim, dim);
    let mut am = DMatrix::zeros(dim, dim);
    let stiff_row = |am: &mut DMatrix<f64>, row: usize, col0: usize, p: usize, scale: f64| {
        for q in 0..n {
            am[(row, col0 + q)] += scale * s[(p, q)];
        }
    };
    for p in 0..n {
        match position[p] {
            None => {
                bm[(ph + p, ph + p)] = w[p];
                stiff_row(&mut am, ph + p, mu, p, 1.0);
                am[(mu + p, mu + p)] = w[p];
                stiff_row(&mut am, mu + p, ph, p, -eps);
            }
            Some(k) => {
                let prev = (k + nb - 1) % nb;
                let next = (k + 1) % nb;
                let surface_lb = |am: &mut DMatrix<f64>, row: usize, col0: usize, idx: [usize; 3], scale: f64| {
                    am[(row, col0 + idx[0])] += scale * 2.0 / h;
                    am[(row, col0 + idx[1])] -= scale / h;
                    am[(row, col0 + idx[2])] -= scale / h;
                };
                // total mass balance at the node
                bm[(ph + p, ph + p)] = w[p] + h;
                stiff_row(&mut am, ph + p, mu, p, 1.0);
                surface_lb(&mut am, ph + p, mg, [k, prev, next], 1.0);
                match params.coupling {
                    Coupling::Finite(kk) => {
                        // bulk balance with exchange flux (mu_gamma - mu) / K
                        bm[(mu + p, ph + p)] = w[p];
                        stiff_row(&mut am, mu + p, mu, p, 1.0);
                        am[(mu + p, mg + k)] -= h / kk;
                        am[(mu + p, mu + p)] += h / kk;
                    }
                    Coupling::Gms => {
                        am[(mu + p, mu + p)] = 1.0;
                        am[(mu + p, mg + k)] = -1.0;
                    }
                    Coupling::LiuWu => {
                        // separate balances; replace the total one by the surface one
                        bm[(ph + p, ph + p)] = h;
                        for q in 0..n {
                            am[(ph + p, mu + q)] = 0.0;
                        }
                        bm[(mu + p, ph + p)] = w[p];
                        stiff_row(&mut am, mu + p, mu, p, 1.0);
                    }
                }
                am[(mg + k, mg + k)] = h;
                am[(mg + k, mu + p)] = w[p];
                stiff_row(&mut am, mg + k, ph, p, -eps);
                surface_lb(&mut am, mg + k, ph, [p, chain[prev], chain[next]], -dk);
            }
        }
    }
    Ok((bm, am))
}

/// Two-stage Radau IIA (order 3, stiffly accurate) for `B x' + A x = 0`.
/// Returns the state after `steps` steps of size `t_end / steps`.
pub fn radau_iia(b: &DMatrix<f64>, a: &DMatrix<f64>, x0: &[f64], t_end: f64, steps: usize) -> Result<Vec<f64>> {
    let m = x0.len();
    if b.shape() != (m, m) || a.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            what: "semi-discrete system",
            expected: m,
            found: b.nrows(),
        });
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be positive".into()));
    }
    let tau = t_end / steps as f64;
    let rk = [[5.0 / 12.0, -1.0 / 12.0], [0.75, 0.25]];
    let mut big = DMatrix::zeros(2 * m, 2 * m);
    for si in 0..2 {
        for sj in 0..2 {
            let mut blk = a * (tau * rk[si][sj]);
            if si == sj {
                blk += b;
            }
            big.view_mut((si * m, sj * m), (m, m)).copy_from(&blk);
        }
    }
    let lu = big.lu();
    let mut x = DVector::from_column_slice(x0);
    for _ in 0..steps {
        let bx = b * &x;
        let mut rhs = DVector::zeros(2 * m);
        rhs.rows_mut(0, m).copy_from(&bx);
        rhs.rows_mut(m, m).copy_from(&bx);
        let stages = lu
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidParameter("singular Radau stage system".into()))?;
        x = stages.rows(m, m).into_owned();
    }
    Ok(x.iter().copied().collect())
}

/// Bilinear interpolation onto a grid refined `refine` times, then the
/// trapezoidal rule. For the field itself this reproduces the coarse
/// trapezoid exactly; see [`refined_quadrature_with`] for nonlinear
/// integrands.
pub fn refined_quadrature(field: &BulkField, grid: &Grid, refine: usize) -> Result<f64> {
    refined_quadrature_with(field, grid, refine, |v| v)
}

/// Integral of `f(field)` with `field` interpolated bilinearly onto the
/// refined grid.
pub fn refined_quadrature_with(
    field: &BulkField,
    grid: &Grid,
    refine: usize,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    guard(grid)?;
    field.check(grid)?;
    if refine != 2 && refine != 4 {
        return Err(Error::InvalidParameter(format!("refine must be 2 or 4, got {refine}")));
    }
    let (mx, my) = ((grid.nx - 1) * refine + 1, (grid.ny - 1) * refine + 1);
    let hf = grid.h / refine as f64;
    let v = |i: usize, j: usize| field.values[grid.index(i, j)];
    let mut acc = 0.0;
    for jj in 0..my {
        for ii in 0..mx {
            let (ci, cj) = ((ii / refine).min(grid.nx - 2), (jj / refine).min(grid.ny - 2));
            let tx = (ii - ci * refine) as f64 / refine as f64;
            let ty = (jj - cj * refine) as f64 / refine as f64;
            let val = (1.0 - tx) * (1.0 - ty) * v(ci, cj)
                + tx * (1.0 - ty) * v(ci + 1, cj)
                + (1.0 - tx) * ty * v(ci, cj + 1)
                + tx * ty * v(ci + 1, cj + 1);
            let wx = if ii == 0 || ii == mx - 1 { 0.5 } else { 1.0 };
            let wy = if jj == 0 || jj == my - 1 { 0.5 } else { 1.0 };
            acc += wx * wy * f(val);
        }
    }
    Ok(acc * hf * hf)
}
