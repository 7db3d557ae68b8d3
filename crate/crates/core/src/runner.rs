//! Executes an [`ExperimentConfig`] and writes its artifacts.
//!
//! Each command returns a [`Report`] that serializes to the `run.json` of the
//! run and has a one-line text form for terminals.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::analysis::{
    limit_initial_datum, limit_study_with, predict_steady, sign_changes, strat_comparison, tail_concentration_index,
    um_rela_residual, FocusingStudy, Regime, TailIndex,
};
use crate::config::{Command, ExperimentConfig, InitialKind};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::jumpmodel::{JumpRateModel, Variant};
use crate::kernels::DispersalKernel;
use crate::local::{assemble_local, LawSummary};
use crate::nonlocal::{assemble, solve_steady};
use crate::output;
use crate::profile::Profile;
use crate::timestep::{evolve, Generator, Scheme, Trajectory};

/// Where and whether to write artifacts.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output root; `None` means `NDL_OUT` or the configured directory.
    pub out_root: Option<PathBuf>,
    /// Skip all file output.
    pub dry: bool,
}

impl RunOptions {
    pub fn to(root: impl Into<PathBuf>) -> Self {
        Self {
            out_root: Some(root.into()),
            dry: false,
        }
    }

    pub fn dry() -> Self {
        Self {
            out_root: None,
            dry: true,
        }
    }

    fn dir(&self, cfg: &ExperimentConfig) -> Result<Option<PathBuf>> {
        if self.dry {
            return Ok(None);
        }
        let d = cfg.run_dir(self.out_root.as_deref());
        output::ensure_dir(&d)?;
        Ok(Some(d))
    }
}

/// Outcome of one time-marched run.
#[derive(Debug, Clone, Serialize)]
pub struct MarchReport {
    pub run_id: String,
    pub dir: Option<PathBuf>,
    pub kernel: String,
    pub alpha: Option<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub steps: usize,
    pub initial_mass: f64,
    /// Largest relative mass change over every step.
    pub mass_drift: f64,
    pub min_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<LawSummary>,
    #[serde(skip)]
    pub grid: Option<Grid1D>,
    #[serde(skip)]
    pub final_state: Vec<f64>,
}

/// A marched run compared with the steady state.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyReport {
    #[serde(flatten)]
    pub march: MarchReport,
    pub regime: Option<Regime>,
    pub normalization: Option<f64>,
    /// `‖u(T) − p‖∞ / ‖p‖∞` against the closed form.
    pub sup_rel_err: Option<f64>,
    /// Balance residual of the closed form.
    pub prediction_residual: Option<f64>,
    /// `‖u(T) − u_∞‖∞ / ‖u_∞‖∞` against the direct steady solve.
    pub solver_gap: f64,
    #[serde(skip)]
    pub predicted: Option<Vec<f64>>,
    #[serde(skip)]
    pub steady: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictReport {
    pub run_id: String,
    pub dir: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub mass: f64,
    pub regime: Option<Regime>,
    pub normalization: Option<f64>,
    pub integrable_on_line: Option<bool>,
    pub residual: Option<f64>,
    #[serde(skip)]
    pub profile: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub kernel: String,
    pub mass: f64,
    pub abs_first_moment: f64,
    pub second_moment: f64,
    pub density_at_zero: f64,
    pub params: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StratReport {
    pub nodes: Vec<usize>,
    pub discrepancies: Vec<f64>,
    /// `discrepancy(M_k) / discrepancy(M_{k+1})`.
    pub ratios: Vec<f64>,
    pub mass_drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    /// 1-based kernel positions of `u_i − u_j`.
    pub pair: [usize; 2],
    pub sup: f64,
    /// On `(0, R)`, ignoring values below `1e−9 ‖u_i‖∞`.
    pub sign_changes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailsReport {
    pub runs: Vec<MarchReport>,
    pub index: TailIndex,
    /// Smallest `‖u_i − u_j‖∞` over all pairs.
    pub min_pairwise_sup: f64,
    pub pairs: Vec<PairReport>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Report {
    Simulate { runs: Vec<MarchReport> },
    SimulateLocal { runs: Vec<MarchReport> },
    Steady { runs: Vec<SteadyReport> },
    Predict { runs: Vec<PredictReport> },
    LimitStudy { run_id: String, study: FocusingStudy, law: LawSummary },
    Moments { kernels: Vec<MomentReport> },
    StratCheck(StratReport),
    Tails(TailsReport),
}

fn worst(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

impl Report {
    /// Largest relative mass drift over the marched runs, if any.
    pub fn mass_drift(&self) -> Option<f64> {
        match self {
            Report::Simulate { runs } | Report::SimulateLocal { runs } => Some(worst(runs.iter().map(|r| r.mass_drift))),
            Report::Steady { runs } => Some(worst(runs.iter().map(|r| r.march.mass_drift))),
            Report::Tails(t) => Some(worst(t.runs.iter().map(|r| r.mass_drift))),
            Report::LimitStudy { study, .. } => Some(study.max_mass_drift),
            Report::StratCheck(r) => Some(r.mass_drift),
            Report::Predict { .. } | Report::Moments { .. } => None,
        }
    }

    /// One line for the terminal.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        match self {
            Report::Simulate { runs } | Report::SimulateLocal { runs } => {
                let t = runs.first().map_or(0.0, |r| r.t_end);
                let _ = write!(s, "{} run(s) to t={t}: mass drift {:.2e}", runs.len(), self.mass_drift().unwrap_or(0.0));
            }
            Report::Steady { runs } => {
                let _ = write!(s, "{} run(s): mass drift {:.2e}", runs.len(), self.mass_drift().unwrap_or(0.0));
                let errs: Vec<f64> = runs.iter().filter_map(|r| r.sup_rel_err).collect();
                if !errs.is_empty() {
                    let _ = write!(s, ", sup rel err vs prediction {:.2e}", worst(errs.into_iter()));
                }
                let _ = write!(s, ", gap to steady solve {:.2e}", worst(runs.iter().map(|r| r.solver_gap)));
            }
            Report::Predict { runs } => {
                let known = runs.iter().filter(|r| r.regime.is_some()).count();
                let res = worst(runs.iter().filter_map(|r| r.residual));
                let _ = write!(s, "{known}/{} closed form(s), balance residual {res:.2e}", runs.len());
            }
            Report::LimitStudy { study, .. } => {
                let errs: Vec<String> = study.errors.iter().map(|e| format!("{e:.2e}")).collect();
                let _ = write!(s, "errors [{}], order {:.3}", errs.join(", "), study.estimated_order);
            }
            Report::Moments { kernels } => {
                let parts: Vec<String> = kernels
                    .iter()
                    .map(|k| {
                        let mut p = format!(
                            "{}: mass {:.8} |z| {:.8} z^2 {:.8}",
                            k.kernel, k.mass, k.abs_first_moment, k.second_moment
                        );
                        if let (Some(a), Some(b), Some(c)) = (k.params.get("A"), k.params.get("B"), k.params.get("C")) {
                            let _ = write!(p, " A {a:.4} B {b:.4} C {c:.4}");
                        }
                        p
                    })
                    .collect();
                s = parts.join("; ");
            }
            Report::StratCheck(r) => {
                let ratios: Vec<String> = r.ratios.iter().map(|v| format!("{v:.2}")).collect();
                let _ = write!(s, "discrepancy {:.2e} at M={}, halving ratios [{}]", r.discrepancies.last().copied().unwrap_or(0.0), r.nodes.last().copied().unwrap_or(0), ratios.join(", "));
            }
            Report::Tails(t) => {
                let _ = write!(
                    s,
                    "mass drift {:.2e}, u(x0) order [{}], min pairwise sup {:.2e}",
                    self.mass_drift().unwrap_or(0.0),
                    t.index.ordering.join(" > "),
                    t.min_pairwise_sup
                );
                for p in &t.pairs {
                    let _ = write!(s, ", u{}-u{} sign changes {}", p.pair[0], p.pair[1], p.sign_changes);
                }
            }
        }
        s
    }
}

/// Runs `cfg` with its own `command`.
pub fn run_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report> {
    let command = cfg.command.ok_or_else(|| Error::Config {
        field: "command".into(),
        message: "no command given".into(),
    })?;
    run(cfg, command, opts)
}

/// Runs `cfg` as `command`.
pub fn run(cfg: &ExperimentConfig, command: Command, opts: &RunOptions) -> Result<Report> {
    info!("{command} {}", cfg.run_id);
    let report = match command {
        Command::Simulate => Report::Simulate {
            runs: cfg.members().iter().map(|m| simulate(m, opts)).collect::<Result<_>>()?,
        },
        Command::SimulateLocal => Report::SimulateLocal {
            runs: cfg.members().iter().map(|m| simulate_local(m, opts)).collect::<Result<_>>()?,
        },
        Command::Steady => Report::Steady {
            runs: cfg.members().iter().map(|m| steady(m, opts)).collect::<Result<_>>()?,
        },
        Command::Predict => Report::Predict {
            runs: cfg.members().iter().map(|m| predict(m, opts)).collect::<Result<_>>()?,
        },
        Command::LimitStudy => return limit(cfg, opts),
        Command::Moments => moments(cfg)?,
        Command::StratCheck => Report::StratCheck(strat(cfg)?),
        Command::Tails => Report::Tails(tails(cfg, opts)?),
    };
    if let (Some(dir), Command::Moments | Command::StratCheck | Command::Tails) = (opts.dir(cfg)?, command) {
        output::write_json(&dir.join("run.json"), &report)?;
    }
    Ok(report)
}

/// Output times including `T`.
fn output_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut t: Vec<f64> = cfg.time.snapshots.iter().copied().filter(|&s| s >= 0.0 && s < cfg.time.t_end).collect();
    t.push(cfg.time.t_end);
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

fn march<G: Generator>(cfg: &ExperimentConfig, op: &G, default_dt: f64, u0: &[f64]) -> Result<Trajectory> {
    let dt = cfg.time.dt.unwrap_or(default_dt);
    evolve(op, u0, cfg.time.t_end, dt, cfg.time.scheme, &cfg.time.snapshots)
}

fn write_march(dir: &Path, grid: &Grid1D, cfg: &ExperimentConfig, traj: &Trajectory) -> Result<()> {
    for (t, u) in output_times(cfg).iter().zip(&traj.states) {
        output::write_snapshot(dir, grid, *t, u)?;
    }
    Ok(())
}

fn march_report(cfg: &ExperimentConfig, dir: Option<PathBuf>, grid: &Grid1D, traj: Trajectory) -> MarchReport {
    MarchReport {
        run_id: cfg.run_id.clone(),
        dir,
        kernel: cfg.model.kernel.clone(),
        alpha: cfg.model.alpha,
        t_end: cfg.time.t_end,
        dt: traj.dt,
        scheme: traj.scheme,
        steps: traj.steps,
        initial_mass: traj.initial_mass,
        mass_drift: traj.max_mass_drift,
        min_value: traj.min_value,
        law: None,
        grid: Some(grid.clone()),
        final_state: traj.final_state().to_vec(),
    }
}

fn nonlocal_march(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(JumpRateModel, MarchReport)> {
    let grid = cfg.grid.build()?;
    let model = cfg.build_model(&grid)?;
    let op = assemble(&model, &grid)?;
    let u0 = cfg.initial_state(&grid)?;
    let traj = march(cfg, &op, op.default_dt(), &u0)?;
    let dir = opts.dir(cfg)?;
    if let Some(d) = &dir {
        write_march(d, &grid, cfg, &traj)?;
    }
    Ok((model, march_report(cfg, dir, &grid, traj)))
}

fn simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<MarchReport> {
    let (_, r) = nonlocal_march(cfg, opts)?;
    if let Some(d) = &r.dir {
        output::write_json(&d.join("run.json"), &r)?;
    }
    Ok(r)
}

fn simulate_local(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<MarchReport> {
    let grid = cfg.grid.build()?;
    let law = cfg.build_law(&grid)?;
    let op = assemble_local(&law, &grid)?;
    let u0 = cfg.initial_state(&grid)?;
    let traj = march(cfg, &op, op.default_dt(), &u0)?;
    let dir = opts.dir(cfg)?;
    if let Some(d) = &dir {
        write_march(d, &grid, cfg, &traj)?;
    }
    let mut r = march_report(cfg, dir, &grid, traj);
    r.law = Some(law.summary());
    if let Some(d) = &r.dir {
        output::write_json(&d.join("run.json"), &r)?;
    }
    Ok(r)
}

fn sup(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |a, b| a.max(b.abs()))
}

fn rel_sup(u: &[f64], p: &[f64]) -> f64 {
    sup(u.iter().zip(p).map(|(a, b)| a - b)) / sup(p.iter().copied())
}

fn single_factor_parts(model: &JumpRateModel) -> Option<(f64, &Profile)> {
    match model.variant() {
        Variant::SingleFactor { alpha, m } => Some((*alpha, m)),
        _ => None,
    }
}

fn steady(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SteadyReport> {
    let (model, march) = nonlocal_march(cfg, opts)?;
    let grid = march.grid.clone().expect("marched runs keep their grid");
    let mass = grid.mass(&cfg.initial_state(&grid)?);
    let op = assemble(&model, &grid)?;
    let u_inf = solve_steady(&op, mass)?;
    let u = &march.final_state;
    let pred = predict_steady(&model, &grid, mass)?;
    let residual = match (&pred, single_factor_parts(&model)) {
        (Some(p), Some((alpha, m))) => Some(um_rela_residual(m, alpha, &p.profile, &grid)),
        _ => None,
    };
    if let Some(d) = &march.dir {
        let reference = pred.as_ref().map_or(&u_inf, |p| &p.profile);
        output::write_steady(&d.join("steady.csv"), &grid, u, reference)?;
    }
    let report = SteadyReport {
        regime: pred.as_ref().map(|p| p.regime),
        normalization: pred.as_ref().map(|p| p.normalization),
        sup_rel_err: pred.as_ref().map(|p| rel_sup(u, &p.profile)),
        prediction_residual: residual,
        solver_gap: rel_sup(u, &u_inf),
        predicted: pred.map(|p| p.profile),
        steady: u_inf,
        march,
    };
    if let Some(d) = &report.march.dir {
        output::write_json(&d.join("run.json"), &report)?;
    }
    Ok(report)
}

fn predict(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PredictReport> {
    let grid = cfg.grid.build()?;
    let model = cfg.build_model(&grid)?;
    let mass = grid.mass(&cfg.initial_state(&grid)?);
    let pred = predict_steady(&model, &grid, mass)?;
    let residual = match (&pred, single_factor_parts(&model)) {
        (Some(p), Some((alpha, m))) => Some(um_rela_residual(m, alpha, &p.profile, &grid)),
        _ => None,
    };
    let dir = opts.dir(cfg)?;
    let report = PredictReport {
        run_id: cfg.run_id.clone(),
        dir: dir.clone(),
        alpha: model.alpha(),
        mass,
        regime: pred.as_ref().map(|p| p.regime),
        normalization: pred.as_ref().map(|p| p.normalization),
        integrable_on_line: pred.as_ref().map(|p| p.integrable_on_line),
        residual,
        profile: pred.map(|p| p.profile),
    };
    if let Some(d) = &dir {
        if let Some(p) = &report.profile {
            output::write_columns(&d.join("predicted.csv"), &grid, &["u_predicted"], &[p])?;
        }
        output::write_json(&d.join("run.json"), &report)?;
    }
    Ok(report)
}

/// The initial datum as a function of `x`, unnormalized. `uniform` and `m`
/// behave as on a grid; `bump` is the default for limit studies.
fn initial_function(cfg: &ExperimentConfig, default: InitialKind) -> Result<Box<dyn Fn(f64) -> f64 + Sync>> {
    let kind = if cfg.initial.kind == InitialKind::Uniform { default } else { cfg.initial.kind };
    Ok(match kind {
        InitialKind::Uniform => Box::new(|_| 1.0),
        InitialKind::Bump => Box::new(limit_initial_datum),
        InitialKind::M => {
            let m = cfg.model.m.as_ref().ok_or_else(|| Error::Config {
                field: "model.m".into(),
                message: "required by initial.kind = \"m\"".into(),
            })?;
            let m = m.build("model.m")?;
            Box::new(move |x| m.eval(x))
        }
        InitialKind::Expr => {
            let p = Profile::expr(cfg.initial.expr.as_deref().unwrap_or_default())?;
            Box::new(move |x| p.eval(x))
        }
    })
}

fn limit(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report> {
    let grid = cfg.grid.build()?;
    let model = cfg.build_model(&grid)?;
    let law = cfg.build_law(&grid)?;
    let study = cfg.study.clone().unwrap_or_default();
    let u0 = initial_function(cfg, InitialKind::Bump)?;
    let result = limit_study_with(&model, &law, &grid, study.t_end, &study.epsilons, &*u0);
    let dir = opts.dir(cfg)?;
    let write = |s: &FocusingStudy| -> Result<()> {
        if let Some(d) = &dir {
            let json = serde_json::json!({
                "epsilons": s.epsilons,
                "errors": s.errors,
                "order": s.estimated_order,
                "fit_residual": s.fit_residual,
                "margin": s.interior_margin,
                "nodes": s.nodes,
                "mass_drift": s.max_mass_drift,
                "law": law.summary(),
            });
            output::write_json(&d.join("study.json"), &json)?;
        }
        Ok(())
    };
    match result {
        Ok(s) => {
            write(&s)?;
            let report = Report::LimitStudy {
                run_id: cfg.run_id.clone(),
                study: s,
                law: law.summary(),
            };
            if let Some(d) = &dir {
                output::write_json(&d.join("run.json"), &report)?;
            }
            Ok(report)
        }
        Err(Error::InconclusiveOrder { reason, study }) => {
            write(&study)?;
            Err(Error::InconclusiveOrder { reason, study })
        }
        Err(e) => Err(e),
    }
}

/// Moments of `kernel`, or of all four built-ins when `kernel` is `all`.
fn moments(cfg: &ExperimentConfig) -> Result<Report> {
    let kernels: Vec<DispersalKernel> = if cfg.model.kernel == "all" {
        DispersalKernel::builtins()?.to_vec()
    } else {
        vec![cfg.kernel()?]
    };
    let kernels = kernels
        .iter()
        .map(|k| {
            Ok(MomentReport {
                kernel: k.name().to_string(),
                mass: k.moment(0, false)?,
                abs_first_moment: k.moment(1, true)?,
                second_moment: k.moment(2, false)?,
                density_at_zero: k.density(0.0),
                params: k.params().clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Report::Moments { kernels })
}

fn strat(cfg: &ExperimentConfig) -> Result<StratReport> {
    let h = cfg
        .model
        .h
        .as_ref()
        .ok_or_else(|| Error::Config {
            field: "model.h".into(),
            message: "required by strat-check".into(),
        })?
        .build("model.h")?;
    let kernel = cfg.kernel()?;
    let nodes = cfg.strat.clone().map(|s| s.nodes).unwrap_or_else(|| vec![101, 201, 401, 801]);
    if nodes.is_empty() {
        return Err(Error::Config {
            field: "strat.M".into(),
            message: "at least one grid size is needed".into(),
        });
    }
    let u0 = initial_function(cfg, InitialKind::Uniform)?;
    let runs = nodes
        .iter()
        .map(|&m| {
            let g = Grid1D::new(cfg.grid.radius, m)?;
            strat_comparison(&h, &kernel, &g, &*u0, cfg.time.t_end)
        })
        .collect::<Result<Vec<_>>>()?;
    let discrepancies: Vec<f64> = runs.iter().map(|r| r.discrepancy).collect();
    let ratios = discrepancies.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(StratReport {
        nodes,
        discrepancies,
        ratios,
        mass_drift: worst(runs.iter().map(|r| r.mass_drift)),
    })
}

fn tails(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<TailsReport> {
    let tc = cfg.tails.clone().unwrap_or_default();
    if tc.kernels.len() < 2 {
        return Err(Error::Config {
            field: "tails.kernels".into(),
            message: "at least two kernels are needed".into(),
        });
    }
    for p in &tc.pairs {
        if p.iter().any(|&k| k == 0 || k > tc.kernels.len()) || p[0] == p[1] {
            return Err(Error::Config {
                field: "tails.pairs".into(),
                message: format!("{p:?} does not name two distinct kernels"),
            });
        }
    }
    let runs = tc
        .kernels
        .iter()
        .map(|k| {
            let mut m = cfg.clone();
            m.model.kernel = k.clone();
            m.run_id = format!("{}/{}", cfg.run_id, k.replace([':', '/', '\\'], "_"));
            Ok(nonlocal_march(&m, opts)?.1)
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = cfg.grid.build()?;
    let states: Vec<(String, Vec<f64>)> = tc.kernels.iter().cloned().zip(runs.iter().map(|r| r.final_state.clone())).collect();
    let index = tail_concentration_index(&states, &grid, tc.x0)?;
    let diff = |i: usize, j: usize| -> Vec<f64> { states[i].1.iter().zip(&states[j].1).map(|(a, b)| a - b).collect() };
    let mut min_pairwise_sup = f64::INFINITY;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            min_pairwise_sup = min_pairwise_sup.min(sup(diff(i, j).into_iter()));
        }
    }
    let dir = opts.dir(cfg)?;
    let pairs = tc
        .pairs
        .iter()
        .map(|&[i, j]| {
            let d = diff(i - 1, j - 1);
            let floor = 1e-9 * sup(states[i - 1].1.iter().copied());
            if let Some(dir) = &dir {
                output::write_columns(&dir.join(format!("diff_{i}_{j}.csv")), &grid, &["diff"], &[&d])?;
            }
            Ok(PairReport {
                pair: [i, j],
                sup: sup(d.iter().copied()),
                sign_changes: sign_changes(&grid, &d, 0.0, grid.radius(), floor),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TailsReport {
        runs,
        index,
        min_pairwise_sup,
        pairs,
    })
}
