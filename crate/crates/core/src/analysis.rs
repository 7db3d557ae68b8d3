//! Diffusivities, focusing limits and steady-state predictions.

use std::fmt;
use std::sync::Arc;

use log::{debug, info};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Interval};
use crate::jumpmodel::{JumpRateModel, Variant};
use crate::kernels::DispersalKernel;
use crate::local::{assemble_local, LocalDiffusionSpec};
use crate::nonlocal::{assemble, MAX_NODES};
use crate::profile::Profile;
use crate::quadrature::{gauss_legendre, integrate, integrate_panels, QuadOptions};
use crate::timestep::{evolve, Generator, Scheme};

type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// An even density on `ℝᴺ`, `N ≤ 3`.
#[derive(Clone)]
pub enum KernelNd {
    /// `K(z) = Π Kᵢ(zᵢ)`.
    Product(Vec<DispersalKernel>),
    /// A general density; `scale` is used by the quadrature map and should be
    /// at least the largest spread of the density along any axis.
    Density { dim: usize, scale: f64, f: DensityFn },
}

impl fmt::Debug for KernelNd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelNd::Product(ks) => f
                .debug_tuple("Product")
                .field(&ks.iter().map(|k| k.name().to_string()).collect::<Vec<_>>())
                .finish(),
            KernelNd::Density { dim, scale, .. } => {
                f.debug_struct("Density").field("dim", dim).field("scale", scale).finish()
            }
        }
    }
}

impl KernelNd {
    pub fn product(factors: Vec<DispersalKernel>) -> Self {
        KernelNd::Product(factors)
    }

    pub fn density(dim: usize, scale: f64, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        KernelNd::Density {
            dim,
            scale,
            f: Arc::new(f),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            KernelNd::Product(ks) => ks.len(),
            KernelNd::Density { dim, .. } => *dim,
        }
    }
}

/// `dᵢⱼ(p) = ½ ν(p) ∫ zᵢ zⱼ K(z) dz`.
#[derive(Debug, Clone, Serialize)]
pub struct DiffusivityMatrix {
    pub dim: usize,
    pub entries: Vec<Vec<f64>>,
    pub point: Vec<f64>,
}

impl DiffusivityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    /// `D = tr(𝔻) / N`; equal to the scalar diffusivity for isotropic kernels.
    pub fn scalar(&self) -> f64 {
        (0..self.dim).map(|i| self.entries[i][i]).sum::<f64>() / self.dim as f64
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = DMatrix::from_fn(self.dim, self.dim, |i, j| self.entries[i][j]);
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Diffusivity matrix of `kernel` at `p` scaled by the rate factor `nu_at_p`.
///
/// Product kernels use the one-dimensional moments of their factors. General
/// densities use a tensor Gauss–Legendre rule on each half-axis through
/// `z = s u / (1 − u²)`, repeated at twice the order; disagreement between the
/// two is reported as a divergent second moment.
pub fn diffusivity(kernel: &KernelNd, nu_at_p: f64, p: &[f64]) -> Result<DiffusivityMatrix> {
    let n = kernel.dim();
    if n == 0 || n > 3 {
        return Err(Error::invalid(format!("diffusivity supports 1 to 3 dimensions, got {n}")));
    }
    if p.len() != n {
        return Err(Error::invalid(format!("point has {} coordinates, kernel {n}", p.len())));
    }
    let second = match kernel {
        KernelNd::Product(ks) => {
            let mut m = vec![vec![0.0; n]; n];
            let masses: Vec<f64> = ks.iter().map(|k| k.mass()).collect();
            for (i, k) in ks.iter().enumerate() {
                let others: f64 = masses.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, m)| m).product();
                m[i][i] = k.moment(2, false)? * others;
            }
            m
        }
        KernelNd::Density { scale, f, .. } => {
            let coarse = tensor_second_moments(f.as_ref(), n, *scale, 64);
            let fine = tensor_second_moments(f.as_ref(), n, *scale, 128);
            let size = fine.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            let gap = coarse
                .iter()
                .flatten()
                .zip(fine.iter().flatten())
                .fold(0.0f64, |a, (c, f)| a.max((c - f).abs()));
            if !size.is_finite() || !(gap <= 1e-7 * size) {
                return Err(Error::DivergentMoment {
                    kernel: "custom".into(),
                    order: 2,
                });
            }
            fine
        }
    };
    let entries = second
        .iter()
        .map(|row| row.iter().map(|v| 0.5 * nu_at_p * v).collect())
        .collect();
    Ok(DiffusivityMatrix {
        dim: n,
        entries,
        point: p.to_vec(),
    })
}

fn tensor_second_moments(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), n: usize, s: f64, order: usize) -> Vec<Vec<f64>> {
    let (u, w) = gauss_legendre(order);
    // nodes on one half-axis, mirrored to the other
    let mut z = Vec::with_capacity(2 * order);
    let mut wz = Vec::with_capacity(2 * order);
    for (ui, wi) in u.iter().zip(&w) {
        let t = 0.5 * (ui + 1.0);
        let d = 1.0 - t * t;
        let zi = s * t / d;
        let jac = 0.5 * wi * s * (1.0 + t * t) / (d * d);
        z.extend([zi, -zi]);
        wz.extend([jac, jac]);
    }
    let k = z.len();
    let total = k.pow(n as u32);
    let acc = (0..total)
        .into_par_iter()
        .with_min_len(256)
        .fold(
            || vec![0.0; n * n],
            |mut acc, idx| {
                let mut pt = [0.0; 3];
                let mut weight = 1.0;
                let mut r = idx;
                for c in pt.iter_mut().take(n) {
                    let a = r % k;
                    r /= k;
                    *c = z[a];
                    weight *= wz[a];
                }
                let v = weight * f(&pt[..n]);
                if v != 0.0 {
                    for i in 0..n {
                        for j in 0..n {
                            acc[i * n + j] += v * pt[i] * pt[j];
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0.0; n * n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    (0..n).map(|i| acc[i * n..(i + 1) * n].to_vec()).collect()
}

/// Scalar diffusivity `½ ∫ z² K(p, p; z) dz` of a one-dimensional model.
pub fn model_diffusivity(model: &JumpRateModel, p: f64) -> Result<f64> {
    let (factor, width) = model.local_factor_width(p);
    let (lambda, ell) = model.scales();
    let s = ell * width;
    // substituting z = s ζ turns the integral into the kernel's second moment
    Ok(0.5 * lambda * factor * s * s * model.kernel().moment(2, false)?)
}

fn probe_point(model: &JumpRateModel) -> f64 {
    let dom = match model.variant() {
        Variant::Homogeneous => None,
        Variant::SingleFactor { m, .. } => m.domain(),
        Variant::TwoFactor { nu, g, .. } => nu.clone().times(g.clone()).domain(),
        Variant::Stratonovich { metric, .. } => Some((metric.interval().lo, metric.interval().hi)),
    };
    match dom {
        Some((lo, hi)) if !(lo <= 0.0 && hi >= 0.0) => 0.5 * (lo + hi),
        _ => 0.0,
    }
}

/// `(∫ K(p,p;z) dz, ∫ |z| K(p,p;z) dz / ∫ K(p,p;z) dz)` over `|z| ≤ 64 s`.
fn local_rate_and_length(model: &JumpRateModel, p: f64) -> Result<(f64, f64)> {
    let (_, width) = model.local_factor_width(p);
    let s = model.scales().1 * width;
    let breaks: Vec<f64> = [0.0, 0.25, 1.0, 4.0, 16.0, 64.0].iter().map(|b| b * s).collect();
    let o = QuadOptions {
        abs_tol: 1e-300,
        rel_tol: 1e-12,
        max_subdivisions: 4000,
    };
    let mass = 2.0 * integrate_panels(|z| model.local_kernel(p, z), &breaks, o)?.value;
    let first = 2.0 * integrate_panels(|z| z * model.local_kernel(p, z), &breaks, o)?.value;
    Ok((mass, first / mass))
}

/// The focused model at scale `eps`, checked by quadrature: the local rate
/// grows like `ε⁻²` while the mean local jump length shrinks like `ε`.
pub fn focus(model: &JumpRateModel, eps: f64) -> Result<JumpRateModel> {
    let out = model.focused(eps)?;
    if eps == 1.0 {
        return Ok(out);
    }
    let p = probe_point(model);
    let (m0, g0) = local_rate_and_length(model, p)?;
    let (m1, g1) = local_rate_and_length(&out, p)?;
    let rate_err = (m1 * eps * eps / m0 - 1.0).abs();
    let length_err = (g1 / (eps * g0) - 1.0).abs();
    debug!("focus at eps = {eps}: rate mismatch {rate_err:e}, length mismatch {length_err:e}");
    if !(rate_err < 1e-8 && length_err < 1e-8) {
        return Err(Error::invalid(format!(
            "focused model fails its scaling check at x = {p} (rate {rate_err:e}, length {length_err:e})"
        )));
    }
    Ok(out)
}

/// Result of comparing focused nonlocal solutions with the local limit.
#[derive(Debug, Clone, Serialize)]
pub struct FocusingStudy {
    pub epsilons: Vec<f64>,
    /// Interior sup-norm errors, one per `ε`.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log ε` over the last three points.
    pub estimated_order: f64,
    /// Largest log-space residual of that fit.
    pub fit_residual: f64,
    pub interior_margin: f64,
    pub radius: f64,
    pub t_end: f64,
    /// Grid size used for each `ε`.
    pub nodes: Vec<usize>,
    /// Largest relative mass drift over all nonlocal and local runs.
    pub max_mass_drift: f64,
}

/// Cells per focused jump length in a limit study.
pub const CELLS_PER_EPSILON: f64 = 8.0;

/// The default initial datum `(1 − (x/2)²)⁴` on `|x| < 2`.
pub fn limit_initial_datum(x: f64) -> f64 {
    let t = 1.0 - 0.25 * x * x;
    if t > 0.0 {
        t.powi(4)
    } else {
        0.0
    }
}

/// Compares `focus(model, ε)` with the local law `expected` on `[−R, R]` for
/// each `ε`, starting from [`limit_initial_datum`].
pub fn limit_study(
    model: &JumpRateModel,
    expected: &LocalDiffusionSpec,
    grid: &Grid1D,
    t_end: f64,
    epsilons: &[f64],
) -> Result<FocusingStudy> {
    limit_study_with(model, expected, grid, t_end, epsilons, &limit_initial_datum)
}

/// [`limit_study`] with a caller-supplied initial datum.
///
/// Each `ε` runs on its own grid with spacing `min(h, ε ℓ / 8)`. Errors are
/// measured on `|x| ≤ R − margin` with `margin = 5 ε_max Q + 5 h_max`, where
/// `Q` is the 99.9% quantile of `|z|` under the model's kernel.
pub fn limit_study_with(
    model: &JumpRateModel,
    expected: &LocalDiffusionSpec,
    grid: &Grid1D,
    t_end: f64,
    epsilons: &[f64],
    u0: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<FocusingStudy> {
    if epsilons.len() < 2 {
        return Err(Error::invalid("a limit study needs at least two values of epsilon"));
    }
    for &e in epsilons {
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::EpsilonRange(e));
        }
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("epsilons must be strictly decreasing"));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(format!("final time {t_end} must be positive")));
    }
    let r = grid.radius();
    let ell = model.scales().1;
    let grids = epsilons
        .iter()
        .map(|&e| {
            let h = grid.h().min(e * ell / CELLS_PER_EPSILON);
            let m = (2.0 * r / h * (1.0 - 1e-12)).ceil() as usize + 1;
            if m > MAX_NODES {
                return Err(Error::Allocation {
                    nodes: m,
                    max: MAX_NODES,
                });
            }
            Grid1D::new(r, m)
        })
        .collect::<Result<Vec<_>>>()?;
    let q999 = model.kernel().abs_quantile(0.999)?;
    let h_max = grids.iter().map(Grid1D::h).fold(0.0, f64::max);
    let margin = 5.0 * epsilons[0] * ell * q999 + 5.0 * h_max;
    if margin >= r {
        return Err(Error::invalid(format!("interior margin {margin} leaves no interior in [-{r}, {r}]")));
    }
    let window = r - margin;
    for g in &grids {
        let u = g.sample(u0);
        let peak = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(peak > 0.0) {
            return Err(Error::invalid("initial datum vanishes on the grid"));
        }
        if let Some(i) = (0..g.len()).find(|&i| g.nodes()[i].abs() > window && u[i] != 0.0) {
            return Err(Error::invalid(format!(
                "initial datum must vanish outside the interior window |x| <= {window}, but u0({}) = {}",
                g.nodes()[i],
                u[i]
            )));
        }
    }

    let runs = epsilons
        .par_iter()
        .zip(grids.par_iter())
        .map(|(&eps, g)| -> Result<(f64, f64)> {
            let focused = focus(model, eps)?;
            let nl = assemble(&focused, g)?;
            let loc = assemble_local(expected, g)?;
            let u_init = g.sample(u0);
            let a = evolve(&nl, &u_init, t_end, nl.default_dt(), Scheme::Rk4, &[])?;
            let b = evolve(&loc, &u_init, t_end, loc.max_dt(Scheme::Rk4), Scheme::Rk4, &[])?;
            let err = g
                .nodes()
                .iter()
                .zip(a.final_state().iter().zip(b.final_state()))
                .filter(|(x, _)| x.abs() <= window)
                .fold(0.0f64, |m, (_, (u, v))| m.max((u - v).abs()));
            info!(
                "limit study eps = {eps}: M = {}, {} + {} steps, interior error {err:e}",
                g.len(),
                a.steps,
                b.steps
            );
            Ok((err, a.max_mass_drift.max(b.max_mass_drift)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (runs, drifts): (Vec<f64>, Vec<f64>) = runs.into_iter().unzip();

    let tail = epsilons.len().saturating_sub(3);
    let xs: Vec<f64> = epsilons[tail..].iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = runs[tail..].iter().map(|e| e.ln()).collect();
    let (slope, resid) = least_squares(&xs, &ys);
    let study = FocusingStudy {
        epsilons: epsilons.to_vec(),
        errors: runs,
        estimated_order: slope,
        fit_residual: resid,
        interior_margin: margin,
        radius: r,
        t_end,
        nodes: grids.iter().map(Grid1D::len).collect(),
        max_mass_drift: drifts.into_iter().fold(0.0, f64::max),
    };

    let peak = grids[0].sample(u0).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = 1e-12 * peak;
    if let Some(k) = (1..study.errors.len()).find(|&k| study.errors[k] > floor && study.errors[k] >= study.errors[k - 1])
    {
        return Err(Error::InconclusiveOrder {
            reason: format!(
                "error rises from {:e} to {:e} between eps = {} and eps = {}",
                study.errors[k - 1],
                study.errors[k],
                study.epsilons[k - 1],
                study.epsilons[k]
            ),
            study: Box::new(study),
        });
    }
    if !slope.is_finite() || resid > 0.2 {
        return Err(Error::InconclusiveOrder {
            reason: format!("log-log fit residual {resid:.3} exceeds 0.2"),
            study: Box::new(study),
        });
    }
    Ok(study)
}

/// Slope and largest absolute residual of the least-squares line through the points.
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let resid = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).abs())
        .fold(0.0, f64::max);
    (slope, resid)
}

/// Which closed form a steady prediction comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    AlphaZero,
    AlphaOne,
    AlphaHalf,
    ExponentialM,
    GaussianM,
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyPrediction {
    /// Predicted profile at the grid nodes, normalized so that `h Σ profile = mass`.
    pub profile: Vec<f64>,
    /// The factor `C_R` applied to the unnormalized closed form.
    pub normalization: f64,
    pub regime: Regime,
    /// Whether the unnormalized profile is integrable on the whole line. `false`
    /// also covers profiles whose integrability is unknown.
    pub integrable_on_line: bool,
}

/// `(c, a)` when `p = c e^{a x}`.
fn exponential_rate(p: &Profile) -> Option<f64> {
    match p {
        Profile::Exponential { a } => Some(*a),
        Profile::Scaled(c, inner) if *c > 0.0 => exponential_rate(inner),
        _ => None,
    }
}

/// `a` when `p = c e^{−a x²}`.
fn gaussian_rate(p: &Profile) -> Option<f64> {
    match p {
        Profile::GaussianProfile { a } => Some(*a),
        Profile::Scaled(c, inner) if *c > 0.0 => gaussian_rate(inner),
        _ => None,
    }
}

/// Closed-form steady state of a single-factor model on `grid`, or `None`
/// when the model falls outside the known regimes.
///
/// | regime          | profile                        |
/// |-----------------|--------------------------------|
/// | `m = e^{ax}`    | `m^{β−α}`                      |
/// | `m = e^{−ax²}`  | `e^{−(β²−α²) a x²}`            |
/// | `α = 0`         | `m`                            |
/// | `α = 1`         | `1 / m`                        |
/// | `α = ½`         | constant                       |
pub fn predict_steady(model: &JumpRateModel, grid: &Grid1D, mass: f64) -> Result<Option<SteadyPrediction>> {
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::invalid(format!("mass {mass} must be positive")));
    }
    let Variant::SingleFactor { alpha, m } = model.variant() else {
        return Ok(None);
    };
    let alpha = *alpha;
    let beta = 1.0 - alpha;
    let (raw, regime, integrable): (Vec<f64>, Regime, bool) = if let Some(a) = exponential_rate(m) {
        let c = (beta - alpha) * a;
        (grid.sample(|x| (c * x).exp()), Regime::ExponentialM, false)
    } else if let Some(a) = gaussian_rate(m) {
        let c = (beta * beta - alpha * alpha) * a;
        (grid.sample(|x| (-c * x * x).exp()), Regime::GaussianM, c > 0.0)
    } else if alpha == 0.0 {
        m.covers(grid.interval().lo, grid.interval().hi)?;
        (grid.sample(|x| m.eval(x)), Regime::AlphaZero, m.power_integrable(1.0).unwrap_or(false))
    } else if alpha == 1.0 {
        m.covers(grid.interval().lo, grid.interval().hi)?;
        (grid.sample(|x| 1.0 / m.eval(x)), Regime::AlphaOne, m.power_integrable(-1.0).unwrap_or(false))
    } else if alpha == 0.5 {
        (vec![1.0; grid.len()], Regime::AlphaHalf, false)
    } else {
        return Ok(None);
    };
    if raw.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonpositiveProfile {
            name: "m".into(),
            min: raw.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }
    let normalization = mass / grid.mass(&raw);
    Ok(Some(SteadyPrediction {
        profile: raw.iter().map(|v| normalization * v).collect(),
        normalization,
        regime,
        integrable_on_line: integrable,
    }))
}

/// `max_{i,j} |m(αxⱼ + βxᵢ) uⱼ − m(αxᵢ + βxⱼ) uᵢ|`, relative to the largest
/// term. Vanishes exactly when `u` balances every pair of jumps.
pub fn um_rela_residual(m: &Profile, alpha: f64, u: &[f64], grid: &Grid1D) -> f64 {
    let x = grid.nodes();
    let beta = 1.0 - alpha;
    let (num, den) = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for j in 0..x.len() {
                let a = m.eval(alpha * x[j] + beta * x[i]) * u[j];
                let b = m.eval(alpha * x[i] + beta * x[j]) * u[i];
                num = num.max((a - b).abs());
                den = den.max(a.abs()).max(b.abs());
            }
            (num, den)
        })
        .reduce(|| (0.0, 0.0), |p, q| (p.0.max(q.0), p.1.max(q.1)));
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// `(u at argmax m, u at argmin m)` over the grid.
pub fn population_shift(m: &Profile, grid: &Grid1D, u: &[f64]) -> (f64, f64) {
    let vals = grid.sample(|x| m.eval(x));
    let imax = (0..vals.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    let imin = (0..vals.len()).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    (u[imax], u[imin])
}

fn inverse_metric_quad() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        max_subdivisions: 2000,
    }
}

fn food_distance(h: &Profile, x: f64) -> Result<f64> {
    Ok(integrate(|s| 1.0 / h.eval(s), 0.0, x, inverse_metric_quad())?.value)
}

/// Solves `Φ(x) = target` by safeguarded Newton iteration.
fn inverse_food_distance(h: &Profile, target: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..100 {
        let f = food_distance(h, x)? - target;
        if f.abs() < 1e-14 * (1.0 + target.abs()) {
            return Ok(x);
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - f * h.eval(x);
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * (1.0 + x.abs()) {
            return Ok(x);
        }
    }
    Ok(x)
}

/// Cubic Lagrange interpolation of nodal values on a uniform grid.
fn interpolate_cubic(grid: &Grid1D, u: &[f64], x: f64) -> f64 {
    let n = grid.len();
    let t = (x - grid.nodes()[0]) / grid.h();
    let base = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let s = t - base as f64;
    let mut acc = 0.0;
    for k in 0..4 {
        let mut l = 1.0;
        for j in 0..4 {
            if j != k {
                l *= (s - j as f64) / (k as f64 - j as f64);
            }
        }
        acc += l * u[base + k];
    }
    acc
}

/// Largest discrepancy between the Stratonovich model with resource `h` and
/// the homogeneous model in the food metric `x′ = Φ(x)`.
///
/// The first runs on `grid`. The second runs on a uniform `x′` grid of the
/// same size whose cells tile `Φ([−R − h/2, R + h/2])`, so both omit the same
/// jumps, starting from the transported density `u′ = h u`. Its final state is
/// pulled back by cubic interpolation and compared with the first over the
/// whole grid.
pub fn strat_equivalence(
    h: &Profile,
    kernel: &DispersalKernel,
    grid: &Grid1D,
    u0: &(dyn Fn(f64) -> f64 + Sync),
    t_end: f64,
) -> Result<f64> {
    Ok(strat_comparison(h, kernel, grid, u0, t_end)?.discrepancy)
}

/// Outcome of [`strat_equivalence`] with the mass record of both runs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StratComparison {
    pub discrepancy: f64,
    pub mass_drift: f64,
}

/// [`strat_equivalence`], also reporting the larger relative mass drift.
pub fn strat_comparison(
    h: &Profile,
    kernel: &DispersalKernel,
    grid: &Grid1D,
    u0: &(dyn Fn(f64) -> f64 + Sync),
    t_end: f64,
) -> Result<StratComparison> {
    let n = grid.len();
    let dx = grid.h();
    let Interval { lo, hi } = grid.interval();
    let (elo, ehi) = (lo - 0.5 * dx, hi + 0.5 * dx);
    h.covers(elo, ehi)?;
    h.check_positive("h", &grid.refined().sample(|x| x))?;

    let strat = JumpRateModel::stratonovich(kernel.clone(), h.clone(), grid)?;
    let op_s = assemble(&strat, grid)?;

    let plo = food_distance(h, elo)?;
    let phi_hi = food_distance(h, ehi)?;
    let cell = (phi_hi - plo) / n as f64;
    let gp = Grid1D::spanning(plo + 0.5 * cell, phi_hi - 0.5 * cell, n)?;
    let op_h = assemble(&JumpRateModel::homogeneous(kernel.clone()), &gp)?;

    let u_s0 = grid.sample(u0);
    let u_h0 = gp
        .nodes()
        .iter()
        .map(|&xp| {
            let x = inverse_food_distance(h, xp, elo, ehi)?;
            Ok(u0(x) * h.eval(x))
        })
        .collect::<Result<Vec<_>>>()?;

    // one step size for both so the time error is matched
    let dt = 0.1 / op_s.max_outrate().max(op_h.max_outrate());
    let a = evolve(&op_s, &u_s0, t_end, dt, Scheme::Rk4, &[])?;
    let b = evolve(&op_h, &u_h0, t_end, dt, Scheme::Rk4, &[])?;
    let (ua, ub) = (a.final_state(), b.final_state());
    let mut worst = 0.0f64;
    for (i, &x) in grid.nodes().iter().enumerate() {
        let back = interpolate_cubic(&gp, ub, food_distance(h, x)?) / h.eval(x);
        worst = worst.max((ua[i] - back).abs());
    }
    debug!("strat equivalence on {n} nodes: {worst:e}");
    Ok(StratComparison {
        discrepancy: worst,
        mass_drift: a.max_mass_drift.max(b.max_mass_drift),
    })
}

/// Values of several solutions at one point and their ranking.
#[derive(Debug, Clone, Serialize)]
pub struct TailIndex {
    pub x0: f64,
    /// `(label, u(x₀))` in input order.
    pub values: Vec<(String, f64)>,
    /// Labels by decreasing `u(x₀)`.
    pub ordering: Vec<String>,
    /// `(max − min) / max` of the values.
    pub spread: f64,
}

/// Compares `u(x₀)` across solutions that share `grid`, using the nearest node.
pub fn tail_concentration_index(states: &[(String, Vec<f64>)], grid: &Grid1D, x0: f64) -> Result<TailIndex> {
    if states.iter().any(|(_, u)| u.len() != grid.len()) {
        return Err(Error::invalid("every state must live on the given grid"));
    }
    let i = grid.nearest(x0);
    let values: Vec<(String, f64)> = states.iter().map(|(k, u)| (k.clone(), u[i])).collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].1.total_cmp(&values[a].1));
    let max = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    Ok(TailIndex {
        x0: grid.nodes()[i],
        ordering: order.iter().map(|&k| values[k].0.clone()).collect(),
        spread: if max > 0.0 { (max - min) / max } else { 0.0 },
        values,
    })
}

/// Sign changes of `f` over the nodes in the open interval `(lo, hi)`,
/// skipping entries with `|f| ≤ floor`.
pub fn sign_changes(grid: &Grid1D, f: &[f64], lo: f64, hi: f64, floor: f64) -> usize {
    let mut last = 0i8;
    let mut count = 0;
    for (&x, &v) in grid.nodes().iter().zip(f) {
        if !(x > lo && x < hi) || v.abs() <= floor {
            continue;
        }
        let s = if v > 0.0 { 1 } else { -1 };
        if last != 0 && s != last {
            count += 1;
        }
        last = s;
    }
    count
}
