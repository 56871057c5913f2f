//! Initial conditions, simulation runs and convergence studies.
//!
//! A run assembles the step operator once and advances `round(t_end / tau)`
//! steps, recording diagnostics after every step and field snapshots at
//! the steps nearest to the requested times. Studies compose runs:
//! [`k_ladder_study`] measures how fast finite-`K` solutions approach the
//! two limiting models, [`temporal_accuracy_study`] measures the order of
//! the time discretization against a fine-step reference.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{node_weight, DiagRecord};
use crate::domain::{BoundaryField, BulkField, Coupling, Grid, ModelParams, SimState};
use crate::error::{Error, Result};
use crate::linsolve::Preconditioner;
use crate::scheme::{self, LinearSolver, StabilityReport};

/// Time-integration increment of the space-time error norms.
pub const DEFAULT_DT_QUAD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitSpec {
    RandomUniform {
        lo: f64,
        hi: f64,
    },
    SquareDroplet {
        center: (f64, f64),
        side: f64,
        inside: f64,
        outside: f64,
    },
    TanhCircle {
        center: (f64, f64),
        radius: f64,
        width: f64,
    },
}

impl InitSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            InitSpec::RandomUniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad(format!("random init needs lo < hi, got [{lo}, {hi})"));
                }
            }
            InitSpec::SquareDroplet {
                center,
                side,
                inside,
                outside,
            } => {
                if !(side > 0.0 && side.is_finite()) {
                    return bad(format!("droplet side must be positive, got {side}"));
                }
                if ![center.0, center.1, inside, outside].iter().all(|v| v.is_finite()) {
                    return bad("droplet values must be finite".into());
                }
            }
            InitSpec::TanhCircle { center, radius, width } => {
                if !(width > 0.0 && width.is_finite()) {
                    return bad(format!("tanh width must be positive, got {width}"));
                }
                if ![center.0, center.1, radius].iter().all(|v| v.is_finite()) {
                    return bad("tanh circle values must be finite".into());
                }
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self {
            InitSpec::RandomUniform { .. } => "random",
            InitSpec::SquareDroplet { .. } => "droplet",
            InitSpec::TanhCircle { .. } => "tanh_circle",
        }
    }
}

/// Initial state; `psi` is the trace of `phi` and chemical potentials are zero.
pub fn make_initial(init: &InitSpec, grid: &Grid, seed: u64) -> Result<SimState> {
    init.validate()?;
    let phi = match *init {
        InitSpec::RandomUniform { lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            BulkField::from_fn(grid, |_, _| rng.gen_range(lo..hi))
        }
        InitSpec::SquareDroplet {
            center,
            side,
            inside,
            outside,
        } => BulkField::from_fn(grid, |x, y| {
            if (x - center.0).abs() <= 0.5 * side && (y - center.1).abs() <= 0.5 * side {
                inside
            } else {
                outside
            }
        }),
        InitSpec::TanhCircle { center, radius, width } => BulkField::from_fn(grid, |x, y| {
            let dist = ((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt();
            -0.5 * ((radius - dist) / width).tanh() + 0.5
        }),
    };
    SimState::from_phi(phi, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: Grid,
    pub params: ModelParams,
    pub tau: f64,
    pub t_end: f64,
    pub init: InitSpec,
    pub seed: u64,
    pub snapshot_times: Vec<f64>,
    pub output_dir: PathBuf,
    pub solver: LinearSolver,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.init.validate()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.t_end >= self.tau && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_end {} must be at least tau {}",
                self.t_end, self.tau
            )));
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(**t >= 0.0 && **t <= self.t_end)) {
            return Err(Error::InvalidParameter(format!(
                "snapshot time {t} outside [0, {}]",
                self.t_end
            )));
        }
        if let LinearSolver::Gmres(cfg) = &self.solver {
            cfg.validate()?;
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.tau).round() as usize).max(1)
    }

    /// Steps nearest to the requested snapshot times, sorted, without repeats.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut steps: Vec<usize> = self
            .snapshot_times
            .iter()
            .map(|t| ((t / self.tau).round() as usize).min(n))
            .collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}

/// Field values at one recorded step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub phi: BulkField,
    pub psi: BoundaryField,
}

/// Linear-solver statistics over a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub steps: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<DiagRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: SimState,
    pub solver: SolverSummary,
    pub stability: StabilityReport,
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let state = make_initial(&config.init, &config.grid, config.seed)?;
    run_from(config, state)
}

/// Like [`run`] but starting from a given state.
pub fn run_from(config: &ExperimentConfig, initial: SimState) -> Result<RunOutput> {
    config.validate()?;
    initial.check(&config.grid)?;
    let grid = &config.grid;
    let system = scheme::assemble(grid, &config.params, config.tau)?;
    let n_steps = config.n_steps();
    let wanted = config.snapshot_steps();
    let mut next_snapshot = wanted.iter().peekable();

    let mut state = initial;
    let mut records = Vec::with_capacity(n_steps + 1);
    let mut snapshots = Vec::with_capacity(wanted.len());
    let mut summary = SolverSummary::default();
    let mut take = |state: &SimState, snapshots: &mut Vec<Snapshot>| {
        if next_snapshot.peek() == Some(&&state.step) {
            next_snapshot.next();
            snapshots.push(Snapshot {
                step: state.step,
                t: state.t,
                phi: state.phi.clone(),
                psi: state.psi.clone(),
            });
        }
    };

    records.push(DiagRecord::from_state(&state, grid, &config.params)?);
    take(&state, &mut snapshots);
    for step in 1..=n_steps {
        let (mut next, report) = scheme::advance(&system, &state, &config.solver)?;
        next.t = step as f64 * config.tau;
        summary.steps += 1;
        summary.total_iterations += report.iterations;
        summary.max_iterations = summary.max_iterations.max(report.iterations);
        if report.rhs_norm > 0.0 {
            summary.max_relative_residual = summary
                .max_relative_residual
                .max(report.residual_norm / report.rhs_norm);
        }
        records.push(DiagRecord::from_state(&next, grid, &config.params)?);
        take(&next, &mut snapshots);
        state = next;
    }

    Ok(RunOutput {
        records,
        snapshots,
        final_state: state,
        solver: summary,
        stability: scheme::stability_check(&config.params),
    })
}

/// Squared discrete `L^2` norms of `a - b`, bulk and boundary.
fn squared_distance(a: &Snapshot, b: &Snapshot, grid: &Grid) -> Result<(f64, f64)> {
    a.phi.check(grid)?;
    b.phi.check(grid)?;
    a.psi.check(grid)?;
    b.psi.check(grid)?;
    let mut bulk = 0.0;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.index(i, j);
            let d = a.phi.values[p] - b.phi.values[p];
            bulk += node_weight(grid, i, j) * d * d;
        }
    }
    let surf: f64 = a
        .psi
        .values
        .iter()
        .zip(&b.psi.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        * grid.h;
    Ok((bulk, surf))
}

/// Spatial `L^2` distance of two states, bulk and boundary.
pub fn l2_distance(a: &SimState, b: &SimState, grid: &Grid) -> Result<(f64, f64)> {
    let snap = |s: &SimState| Snapshot {
        step: s.step,
        t: s.t,
        phi: s.phi.clone(),
        psi: s.psi.clone(),
    };
    let (x, y) = squared_distance(&snap(a), &snap(b), grid)?;
    Ok((x.sqrt(), y.sqrt()))
}

/// `L^2(0, T; L^2)` distance with the trapezoidal rule in time.
pub fn l2_space_time_distance(
    run_a: &[Snapshot],
    run_b: &[Snapshot],
    grid: &Grid,
    dt_quad: f64,
) -> Result<(f64, f64)> {
    if run_a.len() != run_b.len() || run_a.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "snapshot schedules differ: {} vs {} snapshots",
            run_a.len(),
            run_b.len()
        )));
    }
    if !(dt_quad > 0.0) {
        return Err(Error::InvalidParameter(format!("dt_quad must be positive, got {dt_quad}")));
    }
    let tol = 1e-9 * dt_quad;
    for (k, (a, b)) in run_a.iter().zip(run_b).enumerate() {
        if (a.t - b.t).abs() > tol {
            return Err(Error::InvalidParameter(format!(
                "snapshot {k} at different times: {} vs {}",
                a.t, b.t
            )));
        }
        if k > 0 && (a.t - run_a[k - 1].t - dt_quad).abs() > tol {
            return Err(Error::InvalidParameter(format!(
                "snapshot {k} not spaced by dt_quad = {dt_quad}"
            )));
        }
    }
    let last = run_a.len() - 1;
    let (mut bulk, mut surf) = (0.0, 0.0);
    for (k, (a, b)) in run_a.iter().zip(run_b).enumerate() {
        let w = if k == 0 || k == last { 0.5 } else { 1.0 };
        let (x, y) = squared_distance(a, b, grid)?;
        bulk += w * x;
        surf += w * y;
    }
    Ok(((bulk * dt_quad).sqrt(), (surf * dt_quad).sqrt()))
}

/// `eoc[i] = ln(errors[i+1] / errors[i]) / ln(ks[i+1] / ks[i])`.
pub fn eoc(errors: &[f64], ks: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != ks.len() || errors.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "eoc needs two equal-length lists of at least 2 entries, got {} and {}",
            errors.len(),
            ks.len()
        )));
    }
    if let Some(v) = errors.iter().chain(ks).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!("eoc inputs must be positive, got {v}")));
    }
    Ok((0..errors.len() - 1)
        .map(|i| (errors[i + 1] / errors[i]).ln() / (ks[i + 1] / ks[i]).ln())
        .collect())
}

/// Evenly spaced times `0, dt, ..., t_end`.
pub fn uniform_times(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    let m = (t_end / dt).round();
    if !(dt > 0.0) || (m * dt - t_end).abs() > 1e-9 * t_end.max(dt) {
        return Err(Error::InvalidParameter(format!("{t_end} is not a multiple of {dt}")));
    }
    Ok((0..=m as usize).map(|k| k as f64 * dt).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EocRow {
    pub k: f64,
    pub err_phi: f64,
    pub err_psi: f64,
    pub eoc_phi: Option<f64>,
    pub eoc_psi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KLadder {
    /// Ladder entries `K <= 1`, compared with the `K = 0` model.
    pub to_gms: Vec<EocRow>,
    /// Ladder entries `K > 1`, compared with the `K = infinity` model.
    pub to_liuwu: Vec<EocRow>,
}

fn eoc_rows(ks: &[f64], errs: &[(f64, f64)]) -> Result<Vec<EocRow>> {
    let orders = |sel: fn(&(f64, f64)) -> f64| -> Result<Vec<Option<f64>>> {
        let e: Vec<f64> = errs.iter().map(sel).collect();
        if ks.len() < 2 || e.iter().any(|v| *v <= 0.0) {
            return Ok(vec![None; ks.len().saturating_sub(1)]);
        }
        Ok(eoc(&e, ks)?.into_iter().map(Some).collect())
    };
    let (op, os) = (orders(|e| e.0)?, orders(|e| e.1)?);
    Ok(ks
        .iter()
        .zip(errs)
        .enumerate()
        .map(|(i, (&k, &(ep, es)))| EocRow {
            k,
            err_phi: ep,
            err_psi: es,
            eoc_phi: if i == 0 { None } else { op[i - 1] },
            eoc_psi: if i == 0 { None } else { os[i - 1] },
        })
        .collect())
}

/// Space-time distances between finite-`K` runs and the limiting models.
///
/// Every run shares the base configuration (including seed); only the
/// coupling changes. Snapshots are taken every `dt_quad`, which must be a
/// multiple of `tau` and divide `t_end`.
pub fn k_ladder_study(base: &ExperimentConfig, ks: &[f64], dt_quad: f64) -> Result<KLadder> {
    if ks.is_empty() {
        return Err(Error::InvalidParameter("empty K ladder".into()));
    }
    let ratio = dt_quad / base.tau;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio {
        return Err(Error::InvalidParameter(format!(
            "dt_quad {dt_quad} is not a multiple of tau {}",
            base.tau
        )));
    }
    let times = uniform_times(base.t_end, dt_quad)?;
    let small: Vec<f64> = ks.iter().copied().filter(|&k| k <= 1.0).collect();
    let large: Vec<f64> = ks.iter().copied().filter(|&k| k > 1.0).collect();

    let mut couplings = Vec::new();
    if !small.is_empty() {
        couplings.push(Coupling::Gms);
    }
    if !large.is_empty() {
        couplings.push(Coupling::LiuWu);
    }
    couplings.extend(ks.iter().map(|&k| Coupling::Finite(k)));
    let outputs: Vec<Vec<Snapshot>> = couplings
        .par_iter()
        .map(|&coupling| {
            let mut cfg = base.clone();
            cfg.params.coupling = coupling;
            cfg.snapshot_times = times.clone();
            run(&cfg).map(|o| o.snapshots)
        })
        .collect::<Result<_>>()?;

    let mut offset = 0;
    let gms = if small.is_empty() {
        None
    } else {
        offset += 1;
        Some(&outputs[offset - 1])
    };
    let liuwu = if large.is_empty() {
        None
    } else {
        offset += 1;
        Some(&outputs[offset - 1])
    };
    let of_k = |k: f64| &outputs[offset + ks.iter().position(|&q| q == k).expect("ladder entry")];

    let errors = |group: &[f64], reference: Option<&Vec<Snapshot>>| -> Result<Vec<EocRow>> {
        let Some(reference) = reference else {
            return Ok(Vec::new());
        };
        let errs: Vec<(f64, f64)> = group
            .iter()
            .map(|&k| l2_space_time_distance(of_k(k), reference, &base.grid, dt_quad))
            .collect::<Result<_>>()?;
        eoc_rows(group, &errs)
    };
    Ok(KLadder {
        to_gms: errors(&small, gms)?,
        to_liuwu: errors(&large, liuwu)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub tau: f64,
    pub err_phi: f64,
    pub err_psi: f64,
    pub order_phi: Option<f64>,
    pub order_psi: Option<f64>,
}

#[derive(Serialize)]
struct ReferenceKey<'a> {
    grid: &'a Grid,
    params: &'a ModelParams,
    tau: f64,
    t_end: f64,
    init: &'a InitSpec,
    seed: u64,
    solver: &'a LinearSolver,
}

#[derive(Serialize, Deserialize)]
struct CachedReference {
    phi: Vec<f64>,
    psi: Vec<f64>,
}

/// Hex digest identifying a reference run.
pub fn reference_hash(cfg: &ExperimentConfig) -> String {
    let key = ReferenceKey {
        grid: &cfg.grid,
        params: &cfg.params,
        tau: cfg.tau,
        t_end: cfg.t_end,
        init: &cfg.init,
        seed: cfg.seed,
        solver: &cfg.solver,
    };
    let bytes = serde_json::to_vec(&key).expect("reference key serializes");
    Sha256::digest(&bytes)[..16].iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(context: String) -> impl FnOnce(std::io::Error) -> Error {
    move |source| Error::Io { context, source }
}

/// Final state of `cfg`, read from or written to `cache` when given.
fn reference_final(cfg: &ExperimentConfig, cache: Option<&Path>) -> Result<SimState> {
    let path = cache.map(|dir| dir.join(format!("reference-{}.json", reference_hash(cfg))));
    if let Some(path) = path.as_ref().filter(|p| p.exists()) {
        let text = std::fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        let c: CachedReference = serde_json::from_str(&text).map_err(|e| Error::Config {
            key: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let phi = BulkField::from_values(&cfg.grid, c.phi)?;
        let mut state = SimState::from_phi(phi, &cfg.grid)?;
        state.psi = BoundaryField::from_values(&cfg.grid, c.psi)?;
        return Ok(state);
    }
    let mut plain = cfg.clone();
    plain.snapshot_times.clear();
    let out = run(&plain)?;
    if let Some(path) = path {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
        }
        let c = CachedReference {
            phi: out.final_state.phi.values.clone(),
            psi: out.final_state.psi.values.clone(),
        };
        let text = serde_json::to_string(&c).expect("reference serializes");
        std::fs::write(&path, text).map_err(io_err(format!("writing {}", path.display())))?;
    }
    Ok(out.final_state)
}

/// Errors at `t_end` of coarse steps against a fine-step reference.
pub fn temporal_accuracy_study(
    base: &ExperimentConfig,
    taus: &[f64],
    tau_ref: f64,
    cache: Option<&Path>,
) -> Result<Vec<AccuracyRow>> {
    if taus.is_empty() {
        return Err(Error::InvalidParameter("empty tau list".into()));
    }
    let min_tau = taus.iter().copied().fold(f64::INFINITY, f64::min);
    if !(tau_ref > 0.0 && tau_ref <= min_tau) {
        return Err(Error::InvalidParameter(format!(
            "tau_ref {tau_ref} must be positive and not exceed the smallest tau {min_tau}"
        )));
    }
    for &t in taus.iter().chain(std::iter::once(&tau_ref)) {
        let m = (base.t_end / t).round();
        if !(t > 0.0) || (m * t - base.t_end).abs() > 1e-9 * base.t_end {
            return Err(Error::InvalidParameter(format!(
                "tau {t} does not divide t_end {}",
                base.t_end
            )));
        }
    }
    let with_tau = |tau: f64| {
        let mut c = base.clone();
        c.tau = tau;
        c.snapshot_times.clear();
        c
    };
    let reference = reference_final(&with_tau(tau_ref), cache)?;
    let finals: Vec<SimState> = taus
        .par_iter()
        .map(|&tau| run(&with_tau(tau)).map(|o| o.final_state))
        .collect::<Result<_>>()?;
    let errs: Vec<(f64, f64)> = finals
        .iter()
        .map(|s| l2_distance(s, &reference, &base.grid))
        .collect::<Result<_>>()?;
    let order = |i: usize, sel: fn(&(f64, f64)) -> f64| {
        if i == 0 {
            return None;
        }
        let (a, b) = (sel(&errs[i - 1]), sel(&errs[i]));
        (a > 0.0 && b > 0.0).then(|| (a / b).ln() / (taus[i - 1] / taus[i]).ln())
    };
    Ok(taus
        .iter()
        .enumerate()
        .map(|(i, &tau)| AccuracyRow {
            tau,
            err_phi: errs[i].0,
            err_psi: errs[i].1,
            order_phi: order(i, |e| e.0),
            order_psi: order(i, |e| e.1),
        })
        .collect())
}

/// Production solver for experiment runs.
pub fn default_solver() -> LinearSolver {
    LinearSolver::SparseLu
}

/// GMRES settings used when GMRES is selected without further options.
pub fn default_gmres() -> LinearSolver {
    LinearSolver::Gmres(crate::linsolve::SolverConfig {
        preconditioner: Preconditioner::Jacobi,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::potentials::PotentialSpec;

    fn params(coupling: Coupling) -> ModelParams {
        ModelParams {
            epsilon: 0.02,
            delta: 0.02,
            kappa: 1.0,
            coupling,
            s1: 50.0,
            s2: 50.0,
            potential: PotentialSpec::TruncatedDoubleWell,
        }
    }

    fn config(grid: Grid, coupling: Coupling, init: InitSpec) -> ExperimentConfig {
        ExperimentConfig {
            grid,
            params: params(coupling),
            tau: 1e-4,
            t_end: 2e-3,
            init,
            seed: 7,
            snapshot_times: vec![],
            output_dir: PathBuf::from("out"),
            solver: default_solver(),
        }
    }

    const DROPLET: InitSpec = InitSpec::SquareDroplet {
        center: (0.5, 0.25),
        side: 0.5,
        inside: 1.0,
        outside: -1.0,
    };

    #[test]
    fn tanh_circle_center_value() {
        let g = Grid::square(11, 1.0).unwrap();
        let init = InitSpec::TanhCircle {
            center: (0.5, 0.5),
            radius: 0.5,
            width: 0.02,
        };
        let s = make_initial(&init, &g, 0).unwrap();
        let v = s.phi.values[g.index(5, 5)];
        assert!((v - (-0.5 * 25f64.tanh() + 0.5)).abs() < 1e-15);
        assert!(v < 1e-20);
    }

    #[test]
    fn droplet_values() {
        let g = Grid::square(11, 1.0).unwrap();
        let s = make_initial(&DROPLET, &g, 0).unwrap();
        assert_eq!(s.phi.values[g.index(5, 2)], 1.0);
        assert_eq!(s.phi.values[g.index(5, 8)], -1.0);
        // the side is closed: |x - cx| = side/2 counts as inside
        assert_eq!(s.phi.values[g.index(3, 0)], 1.0);
        assert_eq!(s.phi.values[g.index(2, 0)], -1.0);
        assert_eq!(s.psi, crate::domain::trace(&s.phi, &g).unwrap());
    }

    #[test]
    fn random_init_is_seeded_and_bounded() {
        let g = Grid::square(9, 0.5).unwrap();
        let init = InitSpec::RandomUniform { lo: 0.4, hi: 0.6 };
        let a = make_initial(&init, &g, 3).unwrap();
        let b = make_initial(&init, &g, 3).unwrap();
        let c = make_initial(&init, &g, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.phi, c.phi);
        assert!(a.phi.values.iter().all(|v| (0.4..0.6).contains(v)));
        assert!(a.mu.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn invalid_inits_rejected() {
        let g = Grid::square(5, 1.0).unwrap();
        for bad in [
            InitSpec::RandomUniform { lo: 1.0, hi: 1.0 },
            InitSpec::SquareDroplet {
                center: (0.5, 0.5),
                side: 0.0,
                inside: 1.0,
                outside: -1.0,
            },
            InitSpec::TanhCircle {
                center: (0.5, 0.5),
                radius: 0.2,
                width: -1.0,
            },
        ] {
            assert!(make_initial(&bad, &g, 0).is_err());
        }
    }

    #[test]
    fn single_step_run_has_two_records() {
        let g = Grid::square(6, 1.0).unwrap();
        let mut c = config(g, Coupling::Finite(1.0), DROPLET);
        c.t_end = c.tau;
        c.snapshot_times = vec![0.0];
        let out = run(&c).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.snapshots[0].step, 0);
    }

    #[test]
    fn snapshots_at_nearest_steps() {
        let g = Grid::square(6, 1.0).unwrap();
        let mut c = config(g, Coupling::Gms, DROPLET);
        c.snapshot_times = vec![2e-3, 0.0, 1.04e-3, 1.06e-3];
        assert_eq!(c.snapshot_steps(), vec![0, 10, 11, 20]);
        let out = run(&c).unwrap();
        let steps: Vec<usize> = out.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 10, 11, 20]);
        assert_eq!(out.snapshots[3].phi, out.final_state.phi);
    }

    #[test]
    fn droplet_masses_conserved() {
        let g = Grid::square(11, 1.0).unwrap();
        let mut c = config(g, Coupling::LiuWu, DROPLET);
        c.tau = 2e-4;
        c.t_end = 0.01;
        let out = run(&c).unwrap();
        let r0 = out.records[0];
        for r in &out.records {
            assert!((r.bulk_mass - r0.bulk_mass).abs() <= 1e-7 * (1.0 + r0.bulk_mass.abs()));
            assert!((r.surface_mass - r0.surface_mass).abs() <= 1e-7 * (1.0 + r0.surface_mass.abs()));
        }
        for k in [0.1, 1.0, 10.0] {
            let mut c = c.clone();
            c.params.coupling = Coupling::Finite(k);
            let out = run(&c).unwrap();
            let m0 = out.records[0].total_mass;
            assert!(out
                .records
                .iter()
                .all(|r| (r.total_mass - m0).abs() <= 1e-7 * (1.0 + m0.abs())));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let g = Grid::square(7, 0.5).unwrap();
        let c = config(g, Coupling::Finite(1.0), InitSpec::RandomUniform { lo: -0.1, hi: 0.1 });
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        let rows = |o: &RunOutput| o.records.iter().map(|r| r.csv_row()).collect::<Vec<_>>();
        assert_eq!(rows(&a), rows(&b));
    }

    #[test]
    fn config_validation() {
        let g = Grid::square(5, 1.0).unwrap();
        let mut c = config(g, Coupling::Gms, DROPLET);
        c.t_end = 0.5 * c.tau;
        assert!(c.validate().is_err());
        let mut c = config(g, Coupling::Gms, DROPLET);
        c.snapshot_times = vec![1.0];
        assert!(c.validate().is_err());
        let mut c = config(g, Coupling::Gms, DROPLET);
        c.tau = 0.0;
        assert!(run(&c).is_err());
    }

    fn snap(g: &Grid, t: f64, f: impl FnMut(f64, f64) -> f64) -> Snapshot {
        let phi = BulkField::from_fn(g, f);
        let psi = crate::domain::trace(&phi, g).unwrap();
        Snapshot { step: 0, t, phi, psi }
    }

    #[test]
    fn space_time_distance_cases() {
        let g = Grid::square(11, 0.5).unwrap();
        let times = uniform_times(0.05, 1e-2).unwrap();
        let a: Vec<Snapshot> = times.iter().map(|&t| snap(&g, t, |x, y| x * y + t)).collect();
        assert_eq!(l2_space_time_distance(&a, &a, &g, 1e-2).unwrap(), (0.0, 0.0));

        let c = 0.3;
        let b: Vec<Snapshot> = times.iter().map(|&t| snap(&g, t, |x, y| x * y + t + c)).collect();
        let (bulk, surf) = l2_space_time_distance(&a, &b, &g, 1e-2).unwrap();
        assert!((bulk - c * (0.25f64 * 0.05).sqrt()).abs() < 1e-14);
        assert!((surf - c * (2.0f64 * 0.05).sqrt()).abs() < 1e-14);

        assert!(l2_space_time_distance(&a[..3], &b, &g, 1e-2).is_err());
        assert!(l2_space_time_distance(&a, &b, &g, 2e-2).is_err());
    }

    #[test]
    fn space_time_distance_matches_quadrature_oracle() {
        let g = Grid::square(8, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut field = |t| snap(&g, t, |_, _| rng.gen_range(-1.0..1.0));
        let (a, b) = (vec![field(0.0), field(0.1)], vec![field(0.0), field(0.1)]);
        let (bulk, _) = l2_space_time_distance(&a, &b, &g, 0.1).unwrap();
        let sq = |k: usize| BulkField {
            values: a[k]
                .phi
                .values
                .iter()
                .zip(&b[k].phi.values)
                .map(|(x, y)| (x - y) * (x - y))
                .collect(),
        };
        let want = 0.1 * 0.5 * (oracle::refined_quadrature(&sq(0), &g, 4).unwrap() + oracle::refined_quadrature(&sq(1), &g, 4).unwrap());
        assert!((bulk * bulk - want).abs() < 1e-12, "{} {want}", bulk * bulk);
    }

    #[test]
    fn eoc_examples() {
        let e = eoc(&[4.1965e-6, 8.3917e-6], &[1e-4, 2e-4]).unwrap();
        assert!((e[0] - 0.9998).abs() < 5e-5, "{}", e[0]);
        assert_eq!(eoc(&[1.0, 1.0], &[3.0, 7.0]).unwrap(), vec![0.0]);
        assert!((eoc(&[1.0, 4.0], &[1.0, 2.0]).unwrap()[0] - 2.0).abs() < 1e-15);
        assert!(eoc(&[0.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(eoc(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn k_ladder_splits_and_orders() {
        let g = Grid::square(8, 1.0).unwrap();
        let mut c = config(g, Coupling::Gms, DROPLET);
        c.tau = 2e-4;
        c.t_end = 4e-3;
        let lad = k_ladder_study(&c, &[1e-4, 2e-4, 1e4, 5e3], 1e-3).unwrap();
        assert_eq!(lad.to_gms.len(), 2);
        assert_eq!(lad.to_liuwu.len(), 2);
        assert!(lad.to_gms[0].eoc_phi.is_none());
        let e = lad.to_gms[1].eoc_phi.unwrap();
        assert!((e - 1.0).abs() < 0.1, "{e}");
        let e = lad.to_liuwu[1].eoc_psi.unwrap();
        assert!((e + 1.0).abs() < 0.1, "{e}");
        assert!(k_ladder_study(&c, &[1e-4], 3e-4).is_err());
    }

    fn diffusion_config() -> ExperimentConfig {
        let g = Grid::square(6, 1.0).unwrap();
        let mut c = config(
            g,
            Coupling::Finite(1.0),
            InitSpec::TanhCircle {
                center: (0.5, 0.5),
                radius: 0.3,
                width: 0.1,
            },
        );
        c.params.potential = PotentialSpec::Zero;
        c.params.s1 = 0.0;
        c.params.s2 = 0.0;
        c.params.epsilon = 0.1;
        c.params.delta = 0.1;
        c.t_end = 0.02;
        c
    }

    #[test]
    fn accuracy_study_reference_row_is_exact() {
        let c = diffusion_config();
        let rows = temporal_accuracy_study(&c, &[4e-3, 2e-3, 1e-3], 1e-3, None).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[2].err_phi, rows[2].err_psi), (0.0, 0.0));
        assert!(rows[2].order_phi.is_none());
        assert!(rows[0].err_phi > rows[1].err_phi);
        assert!(temporal_accuracy_study(&c, &[4e-3], 8e-3, None).is_err());
        assert!(temporal_accuracy_study(&c, &[3e-3], 1e-3, None).is_err());
    }

    #[test]
    fn pure_diffusion_first_order_against_high_order_reference() {
        let c = diffusion_config();
        for coupling in [Coupling::Finite(1.0), Coupling::Gms, Coupling::LiuWu] {
            let mut c = c.clone();
            c.params.coupling = coupling;
            let init = make_initial(&c.init, &c.grid, c.seed).unwrap();
            let (bm, am) = oracle::semi_discrete_linear(&c.grid, &c.params).unwrap();
            let n = c.grid.n_nodes();
            let x0: Vec<f64> = init
                .phi
                .values
                .iter()
                .copied()
                .chain(vec![0.0; n + c.grid.n_boundary()])
                .collect();
            let exact = oracle::radau_iia(&bm, &am, &x0, c.t_end, 400).unwrap();
            let mut reference = init.clone();
            reference.phi.values = exact[..n].to_vec();
            reference.psi = crate::domain::trace(&reference.phi, &c.grid).unwrap();
            let taus = [2.5e-4, 1.25e-4, 6.25e-5];
            let errs: Vec<(f64, f64)> = taus
                .iter()
                .map(|&tau| {
                    let mut cc = c.clone();
                    cc.tau = tau;
                    l2_distance(&run(&cc).unwrap().final_state, &reference, &c.grid).unwrap()
                })
                .collect();
            for i in 1..taus.len() {
                let op = (errs[i - 1].0 / errs[i].0).log2();
                let os = (errs[i - 1].1 / errs[i].1).log2();
                assert!((op - 1.0).abs() < 0.2, "{coupling:?} phi order {op}");
                assert!((os - 1.0).abs() < 0.2, "{coupling:?} psi order {os}");
            }
        }
    }

    #[test]
    fn reference_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let c = diffusion_config();
        let a = temporal_accuracy_study(&c, &[4e-3, 2e-3], 1e-3, Some(dir.path())).unwrap();
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        let b = temporal_accuracy_study(&c, &[4e-3, 2e-3], 1e-3, Some(dir.path())).unwrap();
        assert_eq!(a, b);
        assert_eq!(reference_hash(&c), reference_hash(&c));
        let mut c2 = c.clone();
        c2.params.kappa = 2.0;
        assert_ne!(reference_hash(&c), reference_hash(&c2));
    }
}
