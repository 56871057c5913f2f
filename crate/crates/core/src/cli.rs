//! Command-line front end.
//!
//! Configuration files are flat `key = value` text; `#` starts a comment.
//! Every run writes into its own directory: `diagnostics.csv`, snapshot
//! files `phi_<step>.csv` / `psi_<step>.csv`, and finally `manifest.json`.
//! A relative `output.dir` is resolved against `$DYNBC_OUTPUT_ROOT` when
//! that variable is set.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::diagnostics::CSV_HEADER;
use crate::domain::{Coupling, Grid, ModelParams};
use crate::error::{Error, Result};
use crate::experiments::{self, AccuracyRow, EocRow, ExperimentConfig, InitSpec, RunOutput, SolverSummary};
use crate::linsolve::{Preconditioner, SolverConfig};
use crate::potentials::PotentialSpec;
use crate::scheme::{LinearSolver, StabilityReport};

pub const OUTPUT_ROOT_ENV: &str = "DYNBC_OUTPUT_ROOT";

const KNOWN_KEYS: &[&str] = &[
    "domain.lx",
    "domain.ly",
    "grid.nx",
    "grid.ny",
    "model.epsilon",
    "model.delta",
    "model.kappa",
    "model.coupling",
    "model.s1",
    "model.s2",
    "potential.kind",
    "potential.theta",
    "potential.zeta",
    "time.tau",
    "time.t_end",
    "init.kind",
    "init.lo",
    "init.hi",
    "init.cx",
    "init.cy",
    "init.side",
    "init.inside",
    "init.outside",
    "init.radius",
    "init.width",
    "seed",
    "output.dir",
    "output.snapshot_times",
    "solver.kind",
    "solver.rel_tol",
    "solver.restart",
    "solver.max_outer",
    "solver.preconditioner",
];

fn cfg_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

struct Table {
    entries: BTreeMap<String, String>,
}

impl Table {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(cfg_err(&format!("line {}", lineno + 1), format!("expected key = value, got {line:?}")));
            };
            let (key, value) = (key.trim(), value.trim().trim_matches('"'));
            if !KNOWN_KEYS.contains(&key) {
                return Err(cfg_err(key, "unknown key"));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(cfg_err(key, "duplicate key"));
            }
        }
        Ok(Self { entries })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| cfg_err(key, format!("expected a finite number, got {v:?}")))
            })
            .transpose()
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.f64_opt(key)?.ok_or_else(|| cfg_err(key, "missing required key"))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        self.raw(key)
            .map(|v| v.parse::<usize>().map_err(|_| cfg_err(key, format!("expected a nonnegative integer, got {v:?}"))))
            .transpose()
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.usize_opt(key)?.ok_or_else(|| cfg_err(key, "missing required key"))
    }

    fn reject(&self, keys: &[&str], why: &str) -> Result<()> {
        match keys.iter().find(|k| self.entries.contains_key(**k)) {
            Some(k) => Err(cfg_err(k, why)),
            None => Ok(()),
        }
    }
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| cfg_err(key, format!("expected a number, got {s:?}")))
        })
        .collect()
}

fn parse_coupling(v: &str) -> Result<Coupling> {
    match v.to_ascii_lowercase().as_str() {
        "gms" => Ok(Coupling::Gms),
        "liuwu" => Ok(Coupling::LiuWu),
        other => {
            let k: f64 = other
                .parse()
                .map_err(|_| cfg_err("model.coupling", format!("expected a number, \"gms\" or \"liuwu\", got {v:?}")))?;
            if k == 0.0 {
                Ok(Coupling::Gms)
            } else if k.is_infinite() && k > 0.0 {
                Ok(Coupling::LiuWu)
            } else if k > 0.0 && k.is_finite() {
                Ok(Coupling::Finite(k))
            } else {
                Err(cfg_err("model.coupling", format!("K must be nonnegative, got {v}")))
            }
        }
    }
}

fn parse_potential(t: &Table) -> Result<PotentialSpec> {
    let kind = t.raw("potential.kind").unwrap_or("double_well");
    let fh_keys = ["potential.theta", "potential.zeta"];
    match kind {
        "double_well" => {
            t.reject(&fh_keys, "only used with potential.kind = flory_huggins")?;
            Ok(PotentialSpec::TruncatedDoubleWell)
        }
        "zero" => {
            t.reject(&fh_keys, "only used with potential.kind = flory_huggins")?;
            Ok(PotentialSpec::Zero)
        }
        "flory_huggins" => {
            let spec = PotentialSpec::RegularizedFloryHuggins {
                theta: t.f64("potential.theta")?,
                zeta: t.f64("potential.zeta")?,
            };
            spec.validate().map_err(|e| cfg_err("potential.theta / potential.zeta", e.to_string()))?;
            Ok(spec)
        }
        other => Err(cfg_err(
            "potential.kind",
            format!("expected double_well, flory_huggins or zero, got {other:?}"),
        )),
    }
}

fn parse_init(t: &Table) -> Result<InitSpec> {
    let kind = t.raw("init.kind").ok_or_else(|| cfg_err("init.kind", "missing required key"))?;
    let random = ["init.lo", "init.hi"];
    let droplet = ["init.side", "init.inside", "init.outside"];
    let circle = ["init.radius", "init.width"];
    let centered = ["init.cx", "init.cy"];
    let spec = match kind {
        "random" => {
            t.reject(&droplet, "not used by init.kind = random")?;
            t.reject(&circle, "not used by init.kind = random")?;
            t.reject(&centered, "not used by init.kind = random")?;
            InitSpec::RandomUniform {
                lo: t.f64("init.lo")?,
                hi: t.f64("init.hi")?,
            }
        }
        "droplet" => {
            t.reject(&random, "not used by init.kind = droplet")?;
            t.reject(&circle, "not used by init.kind = droplet")?;
            InitSpec::SquareDroplet {
                center: (t.f64("init.cx")?, t.f64("init.cy")?),
                side: t.f64("init.side")?,
                inside: t.f64_or("init.inside", 1.0)?,
                outside: t.f64_or("init.outside", -1.0)?,
            }
        }
        "tanh_circle" => {
            t.reject(&random, "not used by init.kind = tanh_circle")?;
            t.reject(&droplet, "not used by init.kind = tanh_circle")?;
            InitSpec::TanhCircle {
                center: (t.f64("init.cx")?, t.f64("init.cy")?),
                radius: t.f64("init.radius")?,
                width: t.f64("init.width")?,
            }
        }
        other => {
            return Err(cfg_err(
                "init.kind",
                format!("expected random, droplet or tanh_circle, got {other:?}"),
            ))
        }
    };
    spec.validate().map_err(|e| cfg_err("init", e.to_string()))?;
    Ok(spec)
}

fn parse_solver(t: &Table) -> Result<LinearSolver> {
    let gmres_keys = ["solver.rel_tol", "solver.restart", "solver.max_outer", "solver.preconditioner"];
    match t.raw("solver.kind").unwrap_or("sparse_lu") {
        "sparse_lu" => {
            t.reject(&gmres_keys, "only used with solver.kind = gmres")?;
            Ok(LinearSolver::SparseLu)
        }
        "dense" => {
            t.reject(&gmres_keys, "only used with solver.kind = gmres")?;
            Ok(LinearSolver::Dense)
        }
        "gmres" => {
            let d = SolverConfig::default();
            let preconditioner = match t.raw("solver.preconditioner").unwrap_or("jacobi") {
                "jacobi" => Preconditioner::Jacobi,
                "none" => Preconditioner::None,
                other => {
                    return Err(cfg_err(
                        "solver.preconditioner",
                        format!("expected jacobi or none, got {other:?}"),
                    ))
                }
            };
            let cfg = SolverConfig {
                rel_tol: t.f64_or("solver.rel_tol", d.rel_tol)?,
                restart: t.usize_opt("solver.restart")?.unwrap_or(d.restart),
                max_outer: t.usize_opt("solver.max_outer")?.unwrap_or(d.max_outer),
                preconditioner,
            };
            cfg.validate().map_err(|e| cfg_err("solver", e.to_string()))?;
            Ok(LinearSolver::Gmres(cfg))
        }
        other => Err(cfg_err(
            "solver.kind",
            format!("expected sparse_lu, gmres or dense, got {other:?}"),
        )),
    }
}

/// Parses configuration text.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let t = Table::parse(text)?;
    let grid = Grid::new(t.usize("grid.nx")?, t.usize("grid.ny")?, t.f64("domain.lx")?, t.f64("domain.ly")?)
        .map_err(|e| cfg_err("grid / domain", e.to_string()))?;
    let coupling = parse_coupling(t.raw("model.coupling").ok_or_else(|| cfg_err("model.coupling", "missing required key"))?)?;
    let params = ModelParams {
        epsilon: t.f64("model.epsilon")?,
        delta: t.f64("model.delta")?,
        kappa: t.f64_or("model.kappa", 1.0)?,
        coupling,
        s1: t.f64("model.s1")?,
        s2: t.f64("model.s2")?,
        potential: parse_potential(&t)?,
    };
    for (key, v) in [
        ("model.epsilon", params.epsilon),
        ("model.delta", params.delta),
    ] {
        if v <= 0.0 {
            return Err(cfg_err(key, format!("must be positive, got {v}")));
        }
    }
    for (key, v) in [("model.kappa", params.kappa), ("model.s1", params.s1), ("model.s2", params.s2)] {
        if v < 0.0 {
            return Err(cfg_err(key, format!("must be nonnegative, got {v}")));
        }
    }
    let tau = t.f64("time.tau")?;
    if tau <= 0.0 {
        return Err(cfg_err("time.tau", format!("must be positive, got {tau}")));
    }
    let t_end = t.f64("time.t_end")?;
    if t_end < tau {
        return Err(cfg_err("time.t_end", format!("must be at least time.tau, got {t_end}")));
    }
    let seed = match t.raw("seed") {
        Some(v) => v.parse::<u64>().map_err(|_| cfg_err("seed", format!("expected an unsigned integer, got {v:?}")))?,
        None => 0,
    };
    let snapshot_times = match t.raw("output.snapshot_times") {
        Some(v) => parse_list("output.snapshot_times", v.trim_matches(|c| c == '[' || c == ']'))?,
        None => Vec::new(),
    };
    if let Some(s) = snapshot_times.iter().find(|s| !(**s >= 0.0 && **s <= t_end)) {
        return Err(cfg_err("output.snapshot_times", format!("time {s} outside [0, {t_end}]")));
    }
    let cfg = ExperimentConfig {
        grid,
        params,
        tau,
        t_end,
        init: parse_init(&t)?,
        seed,
        snapshot_times,
        output_dir: PathBuf::from(t.raw("output.dir").unwrap_or("out")),
        solver: parse_solver(&t)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        context: format!("reading config {}", path.display()),
        source,
    })?;
    parse_config_str(&text)
}

/// Output directory of a configuration, honouring the root override.
pub fn resolve_output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if cfg.output_dir.is_relative() => PathBuf::from(root).join(&cfg.output_dir),
        _ => cfg.output_dir.clone(),
    }
}

#[inline]
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        context: format!("creating {}", dir.display()),
        source,
    })
}

/// `ny` lines of `nx` comma-separated values.
pub fn phi_csv(values: &[f64], grid: &Grid) -> String {
    let mut s = String::with_capacity(values.len() * 24);
    for j in 0..grid.ny {
        let row: Vec<String> = (0..grid.nx).map(|i| num(values[grid.index(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// One value per line, perimeter order.
pub fn psi_csv(values: &[f64]) -> String {
    values.iter().fold(String::new(), |mut s, v| {
        let _ = writeln!(s, "{}", num(*v));
        s
    })
}

pub fn diagnostics_csv(out: &RunOutput) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &out.records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn eoc_csv(rows: &[EocRow]) -> String {
    let mut s = String::from("K,err_phi,err_psi,eoc_phi,eoc_psi\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            num(r.k),
            num(r.err_phi),
            num(r.err_psi),
            opt(r.eoc_phi),
            opt(r.eoc_psi)
        );
    }
    s
}

pub fn accuracy_csv(rows: &[AccuracyRow]) -> String {
    let mut s = String::from("tau,err_phi,err_psi,order_phi,order_psi\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            num(r.tau),
            num(r.err_phi),
            num(r.err_psi),
            opt(r.order_phi),
            opt(r.order_psi)
        );
    }
    s
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: &'static str,
    pub config: ExperimentConfig,
    pub config_path: Option<PathBuf>,
    pub init_kind: &'static str,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub stability: StabilityReport,
    pub warnings: Vec<String>,
    pub solver: Option<SolverSummary>,
    pub study: serde_json::Value,
    pub files: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, cfg: &ExperimentConfig, path: Option<&Path>) -> Self {
        let stability = crate::scheme::stability_check(&cfg.params);
        let mut warnings = Vec::new();
        if !stability.satisfied() {
            warnings.push(format!(
                "stabilization below the energy-stability bound: s1 = {} (needs {}), s2 = {} (needs {})",
                cfg.params.s1, stability.min_s1, cfg.params.s2, stability.min_s2
            ));
        }
        Self {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION"),
            config: cfg.clone(),
            config_path: path.map(Path::to_path_buf),
            init_kind: cfg.init.label(),
            seed: cfg.seed,
            wall_clock_seconds: 0.0,
            stability,
            warnings,
            solver: None,
            study: serde_json::Value::Null,
            files: Vec::new(),
        }
    }

    fn write(mut self, dir: &Path, started: Instant) -> Result<()> {
        self.wall_clock_seconds = started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        write_file(&dir.join("manifest.json"), &text)
    }
}

fn warn(manifest: &RunManifest) {
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
}

/// Writes all outputs of one simulation into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput, path: Option<&Path>, started: Instant) -> Result<()> {
    create_dir(dir)?;
    let mut manifest = RunManifest::new("run", cfg, path);
    write_file(&dir.join("diagnostics.csv"), &diagnostics_csv(out))?;
    manifest.files.push("diagnostics.csv".into());
    for s in &out.snapshots {
        let (pf, sf) = (format!("phi_{}.csv", s.step), format!("psi_{}.csv", s.step));
        write_file(&dir.join(&pf), &phi_csv(&s.phi.values, &cfg.grid))?;
        write_file(&dir.join(&sf), &psi_csv(&s.psi.values))?;
        manifest.files.extend([pf, sf]);
    }
    manifest.solver = Some(out.solver.clone());
    manifest.write(dir, started)
}

pub fn cmd_run(config_path: &Path) -> Result<PathBuf> {
    let started = Instant::now();
    let cfg = parse_config(config_path)?;
    warn(&RunManifest::new("run", &cfg, None));
    let out = experiments::run(&cfg)?;
    let dir = resolve_output_dir(&cfg);
    write_run(&dir, &cfg, &out, Some(config_path), started)?;
    Ok(dir)
}

pub fn cmd_eoc(config_path: &Path, ladder: &[f64], dt_quad: f64) -> Result<PathBuf> {
    let started = Instant::now();
    let cfg = parse_config(config_path)?;
    let mut manifest = RunManifest::new("eoc", &cfg, Some(config_path));
    warn(&manifest);
    let result = experiments::k_ladder_study(&cfg, ladder, dt_quad)?;
    let dir = resolve_output_dir(&cfg);
    create_dir(&dir)?;
    write_file(&dir.join("eoc_to_gms.csv"), &eoc_csv(&result.to_gms))?;
    write_file(&dir.join("eoc_to_liuwu.csv"), &eoc_csv(&result.to_liuwu))?;
    manifest.files = vec!["eoc_to_gms.csv".into(), "eoc_to_liuwu.csv".into()];
    manifest.study = serde_json::json!({ "k_ladder": ladder, "dt_quad": dt_quad });
    manifest.write(&dir, started)?;
    Ok(dir)
}

pub fn cmd_accuracy(config_path: &Path, taus: &[f64], tau_ref: f64, cache: Option<&Path>) -> Result<PathBuf> {
    let started = Instant::now();
    let cfg = parse_config(config_path)?;
    let mut manifest = RunManifest::new("accuracy", &cfg, Some(config_path));
    warn(&manifest);
    let dir = resolve_output_dir(&cfg);
    let cache_dir = cache.map(Path::to_path_buf).unwrap_or_else(|| dir.join("reference_cache"));
    let rows = experiments::temporal_accuracy_study(&cfg, taus, tau_ref, Some(&cache_dir))?;
    create_dir(&dir)?;
    write_file(&dir.join("accuracy.csv"), &accuracy_csv(&rows))?;
    manifest.files = vec!["accuracy.csv".into()];
    manifest.study = serde_json::json!({
        "taus": taus,
        "tau_ref": tau_ref,
        "reference_cache": cache_dir,
        "reference_hash": experiments::reference_hash(&ExperimentConfig { tau: tau_ref, snapshot_times: vec![], ..cfg.clone() }),
    });
    manifest.write(&dir, started)?;
    Ok(dir)
}

#[derive(Debug, Parser)]
#[command(name = "dynbc", version, about = "Cahn-Hilliard flows with dynamic boundary conditions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation.
    Run { config: PathBuf },
    /// Distances of finite-K solutions to the K = 0 and K = infinity models.
    Eoc {
        config: PathBuf,
        /// Comma-separated K values; K <= 1 is compared with K = 0, K > 1 with K = infinity.
        #[arg(long, value_delimiter = ',', required = true)]
        k_ladder: Vec<f64>,
        #[arg(long, default_value_t = experiments::DEFAULT_DT_QUAD)]
        dt_quad: f64,
    },
    /// Temporal convergence against a fine-step reference.
    Accuracy {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        taus: Vec<f64>,
        #[arg(long)]
        tau_ref: f64,
        /// Reference cache directory (default: <output>/reference_cache).
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
}

/// Executes parsed arguments; returns the output directory.
pub fn execute(cli: &Cli) -> Result<PathBuf> {
    match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Eoc {
            config,
            k_ladder,
            dt_quad,
        } => cmd_eoc(config, k_ladder, *dt_quad),
        Command::Accuracy {
            config,
            taus,
            tau_ref,
            cache_dir,
        } => cmd_accuracy(config, taus, *tau_ref, cache_dir.as_deref()),
    }
}
