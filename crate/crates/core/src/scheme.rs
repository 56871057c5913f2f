//! One step of the stabilized linear scheme.
//!
//! Unknowns are stacked as `[phi (all nodes) | mu (all nodes) | mu_gamma (boundary chain)]`;
//! the surface order parameter is the trace of `phi` and is not a separate
//! unknown. Each unknown owns one row:
//!
//! * `phi` at an interior node: `phi - tau lap(mu) = phi^n`
//! * `mu` at an interior node: `mu + eps lap(phi) - s1 phi = F'(phi^n)/eps - s1 phi^n`
//! * `phi` at a boundary node: `psi - tau (lap_G(mu_G) - d_n mu) = psi^n`
//! * `mu` at a boundary node: the coupling condition, `K d_n mu = mu_G - mu`
//!   (finite K), `mu = mu_G` (GMS) or `d_n mu = 0` (Liu-Wu)
//! * `mu_G`: `mu_G + delta kappa lap_G(psi) - eps d_n phi - s2 psi = G'(psi^n)/delta - s2 psi^n`
//!
//! Normal derivatives are the conservative boundary fluxes of the lumped
//! bulk operator: with stiffness `S` and node weights `W`,
//!
//! ```text
//! h d_n mu  = (S mu)_b + W_b (phi_b - phi_b^n) / tau
//! h d_n phi = (S phi)_b + W_b (F'(phi_b^n)/eps + s1 (phi_b - phi_b^n) - mu_b) / eps
//! ```
//!
//! i.e. whatever closes the discrete balance of the half (or quarter) cell
//! around the boundary node. With this closure total mass and the discrete
//! energy obey the same identities as the continuous problem, exactly.
//!
//! The finite-K coupling row is scaled by `1/(1+K)` so that it tends to the
//! GMS row as `K -> 0` and to the Liu-Wu row as `K -> infinity`.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};

use crate::domain::{trace, Coupling, Grid, ModelParams, SimState};
use crate::error::{Error, Result};
use crate::linsolve::{self, SolveStats, SolverConfig, SparseLu};
use crate::operators::StencilWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub min_s1: f64,
    pub min_s2: f64,
    pub s1_ok: bool,
    pub s2_ok: bool,
}

impl StabilityReport {
    pub fn satisfied(&self) -> bool {
        self.s1_ok && self.s2_ok
    }
}

/// Checks `s1 >= max|F''|/(2 eps)` and `s2 >= max|G''|/(2 delta)`.
pub fn stability_check(params: &ModelParams) -> StabilityReport {
    let min_s1 = params.min_s1();
    let min_s2 = params.min_s2();
    StabilityReport {
        min_s1,
        min_s2,
        s1_ok: params.s1 >= min_s1,
        s2_ok: params.s2 >= min_s2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LinearSolver {
    Gmres(SolverConfig),
    /// Dense LU; small systems only.
    Dense,
    /// Sparse LU, factored on first use and reused for every later step.
    SparseLu,
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::Gmres(SolverConfig::default())
    }
}

/// Per-step operator, assembled once per run.
#[derive(Debug, Clone)]
pub struct StepSystem {
    pub grid: Grid,
    pub params: ModelParams,
    pub tau: f64,
    pub matrix: CsMat<f64>,
    stencil: StencilWeights,
    boundary: Vec<usize>,
    factor: OnceLock<SparseLu>,
}

impl StepSystem {
    pub fn variant(&self) -> Coupling {
        self.params.coupling
    }

    pub fn unknowns(&self) -> usize {
        2 * self.grid.n_nodes() + self.grid.n_boundary()
    }

    pub fn stencil(&self) -> &StencilWeights {
        &self.stencil
    }

    /// Stacks `(phi, mu, mu_gamma)` into an unknown vector.
    pub fn pack(&self, state: &SimState) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.unknowns());
        x.extend_from_slice(&state.phi.values);
        x.extend_from_slice(&state.mu.values);
        x.extend_from_slice(&state.mu_gamma.values);
        x
    }

    /// Right-hand side for a step starting from `state`.
    pub fn rhs(&self, state: &SimState) -> Result<Vec<f64>> {
        state.check(&self.grid)?;
        let n = self.grid.n_nodes();
        let nb = self.grid.n_boundary();
        let p = &self.params;
        let h = self.grid.h;
        let w = &self.stencil.lumped_mass;
        let phi = &state.phi.values;
        let psi = &state.psi.values;
        let bulk = p.bulk_potential();
        let surf = p.surface_potential();

        let mut b = vec![0.0; 2 * n + nb];
        for q in 0..n {
            b[q] = phi[q];
            b[n + q] = bulk.d1(phi[q]) / p.epsilon - p.s1 * phi[q];
        }
        for (k, &q) in self.boundary.iter().enumerate() {
            b[q] = psi[k];
            let flux_lhs = w[q] / (h * self.tau);
            b[n + q] = match p.coupling {
                Coupling::Finite(kk) => kk / (1.0 + kk) * flux_lhs * phi[q],
                Coupling::Gms => 0.0,
                Coupling::LiuWu => flux_lhs * phi[q],
            };
            b[2 * n + k] = surf.d1(psi[k]) / p.delta - p.s2 * psi[k]
                + w[q] / h * (bulk.d1(phi[q]) / p.epsilon - p.s1 * phi[q]);
        }
        if let Some(i) = b.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("right-hand side entry {i}")));
        }
        Ok(b)
    }

    pub fn dense_matrix(&self) -> DMatrix<f64> {
        linsolve::to_dense(&self.matrix)
    }

    /// The cached sparse factorization of the step matrix.
    pub fn sparse_lu(&self) -> std::result::Result<&SparseLu, linsolve::SolverError> {
        if let Some(lu) = self.factor.get() {
            return Ok(lu);
        }
        let lu = SparseLu::factor(&self.matrix)?;
        Ok(self.factor.get_or_init(|| lu))
    }
}

/// Assembles the step operator for `(grid, params, tau)`.
pub fn assemble(grid: &Grid, params: &ModelParams, tau: f64) -> Result<StepSystem> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    params.validate()?;
    let g = *grid;
    let n = g.n_nodes();
    let nb = g.n_boundary();
    let h = g.h;
    let st = StencilWeights::new(&g);
    let boundary = g.boundary_indices();
    let (eps, delta, kappa, s1, s2) = (params.epsilon, params.delta, params.kappa, params.s1, params.s2);
    let (phi0, mu0, mg0) = (0, n, 2 * n);

    let mut t = TriMat::with_capacity((2 * n + nb, 2 * n + nb), 24 * n);

    // interior rows
    for q in 0..n {
        let (i, j) = g.ij(q);
        if g.is_boundary(i, j) {
            continue;
        }
        t.add_triplet(phi0 + q, phi0 + q, 1.0);
        t.add_triplet(mu0 + q, mu0 + q, 1.0);
        t.add_triplet(mu0 + q, phi0 + q, -s1);
        for &(c, s) in &st.stiffness[q] {
            t.add_triplet(phi0 + q, mu0 + c, tau / (h * h) * s);
            t.add_triplet(mu0 + q, phi0 + c, -eps / (h * h) * s);
        }
    }

    // surface stiffness: (S_G g)_k = (2 g_k - g_{k-1} - g_{k+1}) / h
    let surface_stiffness = |k: usize| {
        [
            (k, 2.0 / h),
            ((k + nb - 1) % nb, -1.0 / h),
            ((k + 1) % nb, -1.0 / h),
        ]
    };

    for (k, &q) in boundary.iter().enumerate() {
        let wq = st.lumped_mass[q];

        // boundary dynamics, owned by phi_b = psi_k
        t.add_triplet(phi0 + q, phi0 + q, 1.0);
        match params.coupling {
            Coupling::LiuWu => {
                for (m, s) in surface_stiffness(k) {
                    t.add_triplet(phi0 + q, mg0 + m, tau / h * s);
                }
            }
            Coupling::Finite(_) | Coupling::Gms => {
                let c = tau / (h + wq);
                for (m, s) in surface_stiffness(k) {
                    t.add_triplet(phi0 + q, mg0 + m, c * s);
                }
                for &(col, s) in &st.stiffness[q] {
                    t.add_triplet(phi0 + q, mu0 + col, c * s);
                }
            }
        }

        // coupling condition, owned by mu_b
        match params.coupling {
            Coupling::Finite(kk) => {
                let c = 1.0 / (1.0 + kk);
                for &(col, s) in &st.stiffness[q] {
                    t.add_triplet(mu0 + q, mu0 + col, c * kk / h * s);
                }
                t.add_triplet(mu0 + q, phi0 + q, c * kk * wq / (h * tau));
                t.add_triplet(mu0 + q, mu0 + q, c);
                t.add_triplet(mu0 + q, mg0 + k, -c);
            }
            Coupling::Gms => {
                t.add_triplet(mu0 + q, mu0 + q, 1.0);
                t.add_triplet(mu0 + q, mg0 + k, -1.0);
            }
            Coupling::LiuWu => {
                for &(col, s) in &st.stiffness[q] {
                    t.add_triplet(mu0 + q, mu0 + col, s / h);
                }
                t.add_triplet(mu0 + q, phi0 + q, wq / (h * tau));
            }
        }

        // surface chemical potential, owned by mu_gamma_k
        t.add_triplet(mg0 + k, mg0 + k, 1.0);
        for (m, s) in surface_stiffness(k) {
            t.add_triplet(mg0 + k, phi0 + boundary[m], -delta * kappa / h * s);
        }
        for &(col, s) in &st.stiffness[q] {
            t.add_triplet(mg0 + k, phi0 + col, -eps / h * s);
        }
        t.add_triplet(mg0 + k, phi0 + q, -(wq / h) * s1 - s2);
        t.add_triplet(mg0 + k, mu0 + q, wq / h);
    }

    let matrix: CsMat<f64> = t.to_csr();
    for r in 0..matrix.rows() {
        let row = matrix.outer_view(r).expect("row in range");
        if row.data().iter().all(|&v| v == 0.0) {
            return Err(Error::SingularRow { row: r });
        }
    }

    Ok(StepSystem {
        grid: g,
        params: *params,
        tau,
        matrix,
        stencil: st,
        boundary,
        factor: OnceLock::new(),
    })
}

/// Solve statistics of one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub rhs_norm: f64,
}

impl From<&SolveStats> for StepReport {
    fn from(s: &SolveStats) -> Self {
        Self {
            iterations: s.iterations,
            residual_norm: s.residual_norm,
            rhs_norm: s.rhs_norm,
        }
    }
}

/// Advances `state` by one time step. The previous state's unknowns are
/// the initial guess for iterative solves.
pub fn advance(system: &StepSystem, state: &SimState, solver: &LinearSolver) -> Result<(SimState, StepReport)> {
    let b = system.rhs(state)?;
    let (x, report) = match solver {
        LinearSolver::Gmres(cfg) => {
            let x0 = system.pack(state);
            let (x, stats) = linsolve::gmres(&system.matrix, &b, &x0, cfg).map_err(|source| Error::Solve {
                step: state.step + 1,
                source,
            })?;
            (x, StepReport::from(&stats))
        }
        LinearSolver::Dense => {
            let x = linsolve::dense_solve(&system.dense_matrix(), &b).map_err(|source| Error::Solve {
                step: state.step + 1,
                source,
            })?;
            let r = linsolve::residual(&system.matrix, &x, &b);
            let report = StepReport {
                iterations: 0,
                residual_norm: r.iter().map(|v| v * v).sum::<f64>().sqrt(),
                rhs_norm: b.iter().map(|v| v * v).sum::<f64>().sqrt(),
            };
            (x, report)
        }
        LinearSolver::SparseLu => {
            let lu = system.sparse_lu().map_err(|source| Error::Solve {
                step: state.step + 1,
                source,
            })?;
            let x = lu.solve(&b).map_err(|source| Error::Solve {
                step: state.step + 1,
                source,
            })?;
            let r = linsolve::residual(&system.matrix, &x, &b);
            let report = StepReport {
                iterations: 0,
                residual_norm: r.iter().map(|v| v * v).sum::<f64>().sqrt(),
                rhs_norm: b.iter().map(|v| v * v).sum::<f64>().sqrt(),
            };
            (x, report)
        }
    };
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "solution entry {i} at step {}",
            state.step + 1
        )));
    }
    let g = &system.grid;
    let n = g.n_nodes();
    let phi = crate::domain::BulkField { values: x[..n].to_vec() };
    let mu = crate::domain::BulkField { values: x[n..2 * n].to_vec() };
    let mu_gamma = crate::domain::BoundaryField { values: x[2 * n..].to_vec() };
    let psi = trace(&phi, g)?;
    Ok((
        SimState {
            phi,
            mu,
            psi,
            mu_gamma,
            t: state.t + system.tau,
            step: state.step + 1,
        },
        report,
    ))
}
