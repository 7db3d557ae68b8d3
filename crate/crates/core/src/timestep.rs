//! Explicit time integration of linear, mass-conserving generators.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Rk4,
}

impl Scheme {
    /// Bound on `dt · ρ` where `ρ` is the generator's Gershgorin radius.
    pub fn stability_number(self) -> f64 {
        match self {
            Scheme::Euler => 0.9,
            Scheme::Rk4 => 2.5,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            _ => Err(Error::invalid(format!("unknown scheme `{s}`"))),
        }
    }
}

/// A linear operator `u ↦ Lu` with `Σᵢ (Lu)ᵢ = 0`.
pub trait Generator: Sync {
    fn dim(&self) -> usize;

    /// Writes `Lu` into `out`.
    fn apply(&self, u: &[f64], out: &mut [f64]);

    /// Largest admissible step for `scheme`.
    fn max_dt(&self, scheme: Scheme) -> f64;

    /// Quadrature weight of a node, so that mass is `weight · Σ u`.
    fn weight(&self) -> f64;

    fn mass(&self, u: &[f64]) -> f64 {
        self.weight() * u.iter().sum::<f64>()
    }
}

/// Reusable stage buffers.
struct Stages {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn advance<G: Generator + ?Sized>(&mut self, g: &G, u: &mut [f64], dt: f64, scheme: Scheme) {
        match scheme {
            Scheme::Euler => {
                g.apply(u, &mut self.k[0]);
                for (ui, ki) in u.iter_mut().zip(&self.k[0]) {
                    *ui += dt * ki;
                }
            }
            Scheme::Rk4 => {
                let [k1, k2, k3, k4] = &mut self.k;
                let tmp = &mut self.tmp;
                g.apply(u, k1);
                axpy(tmp, u, 0.5 * dt, k1);
                g.apply(tmp, k2);
                axpy(tmp, u, 0.5 * dt, k2);
                g.apply(tmp, k3);
                axpy(tmp, u, dt, k3);
                g.apply(tmp, k4);
                let c = dt / 6.0;
                for i in 0..u.len() {
                    u[i] += c * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
                }
            }
        }
    }
}

fn axpy(out: &mut [f64], u: &[f64], a: f64, k: &[f64]) {
    for ((o, ui), ki) in out.iter_mut().zip(u).zip(k) {
        *o = ui + a * ki;
    }
}

fn check_dt<G: Generator + ?Sized>(g: &G, dt: f64, scheme: Scheme) -> Result<()> {
    let bound = g.max_dt(scheme);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::Stability { dt, bound });
    }
    Ok(())
}

/// Advances `u` by one step of size `dt`.
pub fn step<G: Generator + ?Sized>(g: &G, u: &[f64], dt: f64, scheme: Scheme) -> Result<Vec<f64>> {
    if u.len() != g.dim() {
        return Err(Error::invalid(format!("state has {} entries, operator {}", u.len(), g.dim())));
    }
    check_dt(g, dt, scheme)?;
    let mut out = u.to_vec();
    Stages::new(u.len()).advance(g, &mut out, dt, scheme);
    warn_negative(&out);
    Ok(out)
}

fn warn_negative(u: &[f64]) -> f64 {
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let max = u.iter().copied().fold(0.0f64, |a, b| a.max(b.abs()));
    if min < -1e-12 * max {
        warn!("state became negative: min {min:e} (max {max:e})");
    }
    min
}

/// Snapshots of an evolution together with its mass record.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Mass at each snapshot.
    pub mass_history: Vec<f64>,
    pub initial_mass: f64,
    /// Largest `|mass(t) − mass(0)| / mass(0)` over every step.
    pub max_mass_drift: f64,
    pub min_mass: f64,
    pub max_mass: f64,
    pub steps: usize,
    pub scheme: Scheme,
    pub dt: f64,
    pub min_value: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("a trajectory always holds the final state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("a trajectory always holds the final time")
    }
}

/// Integrates `u' = Lu` from `u0` to time `t_end`.
///
/// Each interval between consecutive output times is split into equal steps
/// no longer than `dt`, so snapshots land exactly on the requested times. The
/// final state is always recorded.
pub fn evolve<G: Generator + ?Sized>(
    g: &G,
    u0: &[f64],
    t_end: f64,
    dt: f64,
    scheme: Scheme,
    snapshots: &[f64],
) -> Result<Trajectory> {
    if u0.len() != g.dim() {
        return Err(Error::invalid(format!("state has {} entries, operator {}", u0.len(), g.dim())));
    }
    if u0.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("initial state must be finite and nonnegative"));
    }
    let m0 = g.mass(u0);
    if !(m0 > 0.0) {
        return Err(Error::invalid("initial state has zero mass"));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(format!("final time {t_end} must be nonnegative")));
    }
    check_dt(g, dt, scheme)?;

    let mut targets: Vec<f64> = snapshots.iter().copied().filter(|&t| t >= 0.0 && t < t_end).collect();
    targets.push(t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();

    let mut traj = Trajectory {
        times: Vec::with_capacity(targets.len()),
        states: Vec::with_capacity(targets.len()),
        mass_history: Vec::with_capacity(targets.len()),
        initial_mass: m0,
        max_mass_drift: 0.0,
        min_mass: m0,
        max_mass: m0,
        steps: 0,
        scheme,
        dt,
        min_value: u0.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let mut u = u0.to_vec();
    let mut stages = Stages::new(u.len());
    let mut t = 0.0;
    for &target in &targets {
        let span = target - t;
        if span > 0.0 {
            let n = (span / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for _ in 0..n {
                stages.advance(g, &mut u, h, scheme);
                let m = g.mass(&u);
                traj.min_mass = traj.min_mass.min(m);
                traj.max_mass = traj.max_mass.max(m);
                traj.max_mass_drift = traj.max_mass_drift.max((m - m0).abs() / m0);
            }
            traj.steps += n;
            t = target;
        }
        traj.min_value = traj.min_value.min(warn_negative(&u));
        traj.times.push(target);
        traj.mass_history.push(g.mass(&u));
        traj.states.push(u.clone());
    }
    Ok(traj)
}
