//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria that cannot be met by a faithful implementation are listed in
//! `KNOWN_FAILURES` with the measured reason. They still print FAIL. The
//! binary exits nonzero when any other criterion fails, or when a listed one
//! starts passing so the list can be updated.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nldiff::config;
use nldiff::runner::{run_config, Report, RunOptions};
use nldiff::{
    assemble, assemble_local, evolve, solve_steady, DispersalKernel, Error, Generator, Grid1D, JumpRateModel,
    LocalDiffusionSpec, Profile, Scheme,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const MOMENT_TOL: f64 = 1e-6;
const SECOND_MOMENT_TOL: f64 = 1e-5;
const MOMENT_RUNTIME: Duration = Duration::from_secs(10);
const PAPER_K4: [(&str, f64); 3] = [("A", 2.32), ("B", 2.38), ("C", 0.62)];
const MASS_DRIFT_TOL: f64 = 1e-10;
const FIGURE_TOL: f64 = 1e-3;
const BALANCE_TOL: f64 = 1e-12;
const STEADY_ORACLE_TOL: f64 = 1e-6;
const STEADY_ORACLE_NODES: usize = 51;
const STEADY_ORACLE_STEPS: f64 = 1e5;
const STEADY_ORACLE_MODELS: usize = 5;
const STEADY_ORACLE_SEED: u64 = 20_240_611;
const NULL_TOL: f64 = 1e-12;
const MIN_LIMIT_ORDER: f64 = 1.0;
const STRAT_RATIO: (f64, f64) = (3.0, 5.0);
/// Differences below this fraction of the larger solution count as zero.
const DISTINCT_TOL: f64 = 1e-6;

const KNOWN_FAILURES: &[(&str, &str)] = &[
    (
        "kernel moments",
        "the moment conditions fix B = 2.3671, which rounds to 2.37, not 2.38; A = 2.3138 rounds to 2.31",
    ),
    (
        "tail experiment",
        "u4 - u3 crosses zero twice on (0, R): near x = 1.05 and again near x = 4.98 with amplitude ~3e-6",
    ),
];

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn kernel_moments(elapsed: Duration, kernels: &nldiff::Result<[DispersalKernel; 4]>) -> Outcome {
    let name = "kernel moments";
    let kernels = match kernels {
        Ok(k) => k,
        Err(e) => return outcome(name, false, e.to_string()),
    };
    let second = [PI / 2.0, 2.0, 2.0, 2.0];
    let mut pass = elapsed < MOMENT_RUNTIME;
    let mut worst = (0.0f64, 0.0f64);
    for (k, &k2) in kernels.iter().zip(&second) {
        let m0 = k.moment(0, false).unwrap_or(f64::NAN);
        let m1 = k.moment(1, true).unwrap_or(f64::NAN);
        let m2 = k.moment(2, false).unwrap_or(f64::NAN);
        let e01 = (m0 - 1.0).abs().max((m1 - 1.0).abs());
        let e2 = (m2 - k2).abs();
        pass &= e01 <= MOMENT_TOL && e2 <= SECOND_MOMENT_TOL;
        worst = (worst.0.max(e01), worst.1.max(e2));
    }
    let params = kernels[3].params();
    let mut constants = Vec::new();
    for (key, paper) in PAPER_K4 {
        let v = params[key];
        let ok = (v * 100.0).round() == (paper * 100.0).round();
        pass &= ok;
        constants.push(format!("{key} {v:.4}{}", if ok { "" } else { "(!)" }));
    }
    outcome(
        name,
        pass,
        format!(
            "mass/|z| err {:.1e}, k err {:.1e}, {} vs 2.32/2.38/0.62, {:.2}s",
            worst.0,
            worst.1,
            constants.join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

type Runs = Vec<(&'static str, nldiff::Result<Report>)>;

fn report<'a>(runs: &'a Runs, name: &str) -> std::result::Result<&'a Report, String> {
    match runs.iter().find(|(n, _)| *n == name) {
        Some((_, Ok(r))) => Ok(r),
        Some((_, Err(e))) => Err(format!("{name}: {e}")),
        None => Err(format!("{name}: not run")),
    }
}

fn mass_conservation(runs: &Runs) -> Outcome {
    let name = "mass conservation";
    let mut worst = (0.0, "");
    let mut missing = Vec::new();
    for (preset, r) in runs {
        match r.as_ref().ok().and_then(Report::mass_drift) {
            Some(d) if d >= worst.0 => worst = (d, preset),
            Some(_) => {}
            None => missing.push(*preset),
        }
    }
    let pass = missing.is_empty() && worst.0 <= MASS_DRIFT_TOL;
    let mut detail = format!("{} presets, worst relative drift {:.2e} ({})", runs.len(), worst.0, worst.1);
    if !missing.is_empty() {
        detail += &format!(", no drift from {}", missing.join(", "));
    }
    outcome(name, pass, detail)
}

fn figures_1_to_3(runs: &Runs) -> Outcome {
    let name = "figure 1-3 reproduction";
    let mut pass = true;
    let mut parts = Vec::new();
    for fig in ["fig1-left", "fig1-right", "fig2-left", "fig2-right", "fig3-left", "fig3-right"] {
        match report(runs, fig) {
            Ok(Report::Steady { runs }) => {
                let err = runs[0].sup_rel_err.unwrap_or(f64::INFINITY);
                pass &= err <= FIGURE_TOL;
                parts.push(format!("{fig} {err:.1e}"));
            }
            Ok(_) => unreachable!(),
            Err(e) => {
                pass = false;
                parts.push(e);
            }
        }
    }
    outcome(name, pass, format!("sup rel err: {}", parts.join(", ")))
}

fn figures_4_and_5(runs: &Runs) -> Outcome {
    let name = "figure 4/5 reproduction";
    let mut pass = true;
    let mut parts = Vec::new();
    for fig in ["fig4", "fig5"] {
        match report(runs, fig) {
            Ok(Report::Steady { runs }) => {
                let err = runs.iter().map(|r| r.sup_rel_err.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
                let res = runs.iter().map(|r| r.prediction_residual.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
                pass &= runs.len() == 5 && err <= FIGURE_TOL && res <= BALANCE_TOL;
                parts.push(format!("{fig} ({} alphas) err {err:.1e} residual {res:.1e}", runs.len()));
            }
            Ok(_) => unreachable!(),
            Err(e) => {
                pass = false;
                parts.push(e);
            }
        }
    }
    outcome(name, pass, parts.join(", "))
}

fn steady_oracle() -> Outcome {
    let name = "steady solver vs marching";
    let mut rng = ChaCha8Rng::seed_from_u64(STEADY_ORACLE_SEED);
    let kernels = DispersalKernel::builtins().expect("built-in kernels");
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for trial in 0..STEADY_ORACLE_MODELS {
        let r = rng.gen_range(3.0..8.0);
        let kernel = kernels[rng.gen_range(0..4)].clone();
        let alpha: f64 = rng.gen_range(0.0..1.0);
        let expr = format!(
            "{} + {} * exp(-{} * (x - {})^2)",
            rng.gen_range(0.5..1.5),
            rng.gen_range(0.0..1.5),
            rng.gen_range(0.1..1.0),
            rng.gen_range(-r / 2.0..r / 2.0)
        );
        let result = (|| -> nldiff::Result<f64> {
            let grid = Grid1D::new(r, STEADY_ORACLE_NODES)?;
            let model = JumpRateModel::single_factor(kernel, alpha, Profile::expr(&expr)?)?;
            let op = assemble(&model, &grid)?;
            let u0 = vec![4.0 / (grid.weight() * grid.len() as f64); grid.len()];
            let dt = op.default_dt();
            let marched = evolve(&op, &u0, STEADY_ORACLE_STEPS * dt, dt, Scheme::Rk4, &[])?;
            let direct = solve_steady(&op, grid.mass(&u0))?;
            Ok(marched.final_state().iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        })();
        match result {
            Ok(d) => worst = worst.max(d),
            Err(e) => failures.push(format!("model {trial}: {e}")),
        }
    }
    let pass = failures.is_empty() && worst <= STEADY_ORACLE_TOL;
    let mut detail = format!("{STEADY_ORACLE_MODELS} random models, M = {STEADY_ORACLE_NODES}, worst sup gap {worst:.1e}");
    for f in failures {
        detail += &format!("; {f}");
    }
    outcome(name, pass, detail)
}

fn local_null_family() -> Outcome {
    let name = "local-law steady family";
    let grid = Grid1D::new(10.0, 401).expect("grid");
    let profiles = [
        ("rational_bump", Profile::RationalBump),
        ("quadratic_growth", Profile::quadratic_growth()),
        ("exponential", Profile::Exponential { a: 2f64.ln() / 10.0 }),
        ("gaussian", Profile::GaussianProfile { a: 100f64.ln() / 100.0 }),
        ("two_patch", Profile::TwoPatch),
        ("constant", Profile::constant(1.0)),
    ];
    let mut worst = (0.0f64, String::new());
    let mut pass = true;
    for q in [0.0, 0.5, 1.0, 2.0] {
        for (pname, d) in &profiles {
            let spec = LocalDiffusionSpec::single(q, d.clone());
            let op = match assemble_local(&spec, &grid) {
                Ok(op) => op,
                Err(e) => {
                    pass = false;
                    worst.1 = format!("{pname} q={q}: {e}");
                    continue;
                }
            };
            let u = grid.sample(|x| d.eval(x).powf(q - 1.0));
            let mut lu = vec![0.0; u.len()];
            op.apply(&u, &mut lu);
            let (lo, di, up) = op.bands();
            let norm = (0..u.len()).map(|i| lo[i].abs() + di[i].abs() + up[i].abs()).fold(0.0, f64::max);
            let scale = norm * u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let rel = lu.iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale;
            pass &= rel <= NULL_TOL;
            if rel >= worst.0 {
                worst = (rel, format!("{pname} q={q}"));
            }
        }
    }
    outcome(
        name,
        pass,
        format!("4 q x {} profiles, worst |L D^(q-1)| / scale {:.1e} ({})", profiles.len(), worst.0, worst.1),
    )
}

fn focusing_limit(runs: &Runs) -> Outcome {
    let name = "focusing limit";
    let mut pass = true;
    let mut parts = Vec::new();
    for preset in ["limit-chapman", "limit-fick", "limit-q2", "limit-two-factor"] {
        match runs.iter().find(|(n, _)| *n == preset).map(|(_, r)| r) {
            Some(Ok(Report::LimitStudy { study, .. })) => {
                let monotone = study.errors.windows(2).all(|w| w[1] < w[0]);
                pass &= monotone && study.estimated_order >= MIN_LIMIT_ORDER;
                parts.push(format!("{preset} order {:.2}{}", study.estimated_order, if monotone { "" } else { " non-monotone" }));
            }
            Some(Err(Error::InconclusiveOrder { reason, .. })) => {
                pass = false;
                parts.push(format!("{preset}: {reason}"));
            }
            Some(Err(e)) => {
                pass = false;
                parts.push(format!("{preset}: {e}"));
            }
            _ => {
                pass = false;
                parts.push(format!("{preset}: missing"));
            }
        }
    }
    outcome(name, pass, parts.join(", "))
}

fn tail_experiment(runs: &Runs) -> Outcome {
    let name = "tail experiment";
    let t = match report(runs, "fig8") {
        Ok(Report::Tails(t)) => t,
        Ok(_) => unreachable!(),
        Err(e) => return outcome(name, false, e),
    };
    let peak = t.runs.iter().flat_map(|r| r.final_state.iter()).fold(0.0f64, |a, v| a.max(*v));
    let distinct = t.min_pairwise_sup > DISTINCT_TOL * peak;
    let changes = |pair: [usize; 2]| t.pairs.iter().find(|p| p.pair == pair).map(|p| p.sign_changes);
    let (c43, c32) = (changes([4, 3]), changes([3, 2]));
    let pass = distinct && c43 == Some(1) && c32.is_some_and(|c| c > 1);
    outcome(
        name,
        pass,
        format!(
            "min pairwise sup {:.1e} (distinct: {distinct}), sign changes u4-u3 {} (want 1), u3-u2 {} (want > 1)",
            t.min_pairwise_sup,
            c43.map_or("?".into(), |c| c.to_string()),
            c32.map_or("?".into(), |c| c.to_string()),
        ),
    )
}

fn strat_equivalence(runs: &Runs) -> Outcome {
    let name = "stratonovich equivalence";
    match report(runs, "strat-check") {
        Ok(Report::StratCheck(r)) => {
            let last = r.ratios.last().copied().unwrap_or(f64::NAN);
            let decreasing = r.ratios.iter().all(|&q| q > 1.0);
            let pass = decreasing && last >= STRAT_RATIO.0 && last <= STRAT_RATIO.1;
            let ratios: Vec<String> = r.ratios.iter().map(|q| format!("{q:.2}")).collect();
            outcome(
                name,
                pass,
                format!("M = {:?}, halving ratios [{}], finest {last:.2} in [3, 5]", r.nodes, ratios.join(", ")),
            )
        }
        Ok(_) => unreachable!(),
        Err(e) => outcome(name, false, e),
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let kernels = DispersalKernel::builtins();
    let moments_elapsed = start.elapsed();
    let moments = kernel_moments(moments_elapsed, &kernels);

    let names: Vec<&'static str> = config::preset_names().collect();
    let runs: Runs = names
        .par_iter()
        .map(|&n| (n, config::preset(n).and_then(|c| run_config(&c, &RunOptions::dry()))))
        .collect();
    let (steady, null) = rayon::join(steady_oracle, local_null_family);

    let outcomes = [
        moments,
        mass_conservation(&runs),
        figures_1_to_3(&runs),
        figures_4_and_5(&runs),
        steady,
        null,
        focusing_limit(&runs),
        tail_experiment(&runs),
        strat_equivalence(&runs),
    ];
    let mut ok = true;
    for o in &outcomes {
        let known = KNOWN_FAILURES.iter().find(|(n, _)| *n == o.name);
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", o.name, o.detail);
        match (o.pass, known) {
            (false, Some((_, why))) => println!("     known failure: {why}"),
            (false, None) => ok = false,
            (true, Some(_)) => {
                println!("     listed as a known failure but passed; update KNOWN_FAILURES");
                ok = false;
            }
            (true, None) => {}
        }
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!(
        "acceptance: {passed}/{} passed, {} known failure(s), {:.0}s",
        outcomes.len(),
        outcomes.iter().filter(|o| !o.pass).count(),
        start.elapsed().as_secs_f64()
    );
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
