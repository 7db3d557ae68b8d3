//! Conservative finite differences for the limiting local laws
//!
//! ```text
//! u_t = ∂ₓ( a(x) ∂ₓ( b(x) u ) )
//! ```
//!
//! with `a = ν^{q′−q} D^q`, `b = ν^{q−q′} D^{1−q}` (two-factor law) or
//! `a = D^q`, `b = D^{1−q}` (single-factor law), and zero flux at both ends.
//!
//! The discrete flux is `F_{i+½} = a_{i+½} (b_{i+1} u_{i+1} − b_i u_i) / h` with
//! `a_{i+½}` the arithmetic mean of the neighbouring nodal values. Any `u` with
//! `b u` constant has vanishing fluxes, so `u ∝ 1/b` is an exact null vector.

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::jumpmodel::{JumpRateModel, Variant};
use crate::profile::Profile;
use crate::timestep::{Generator, Scheme};

/// Values below this are clamped when raising coefficients to powers.
pub const COEFFICIENT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LocalDiffusionSpec {
    pub q: f64,
    pub q_prime: Option<f64>,
    pub d: Profile,
    pub nu: Option<Profile>,
}

/// Serializable description of a local law.
#[derive(Debug, Clone, Serialize)]
pub struct LawSummary {
    pub q: f64,
    pub q_prime: Option<f64>,
    #[serde(rename = "D_spec")]
    pub d_spec: String,
    pub nu_spec: Option<String>,
}

impl LocalDiffusionSpec {
    /// `u_t = ∂ₓ(D^q ∂ₓ(D^{1−q} u))`.
    pub fn single(q: f64, d: Profile) -> Self {
        Self {
            q,
            q_prime: None,
            d,
            nu: None,
        }
    }

    /// `u_t = ∂ₓ(ν^{q′−q} D^q ∂ₓ(ν^{q−q′} D^{1−q} u))`.
    pub fn two_factor(q: f64, q_prime: f64, d: Profile, nu: Profile) -> Self {
        Self {
            q,
            q_prime: Some(q_prime),
            d,
            nu: Some(nu),
        }
    }

    /// The local law reached by focusing `model`: `q = 2 − 2α`,
    /// `D = ½ m k` (single factor) or `D = ½ ν g² k` with `q′ = 2 − 2α′`.
    pub fn from_model(model: &JumpRateModel) -> Result<Self> {
        let (lambda, ell) = model.scales();
        let half_k = 0.5 * model.kernel().second_moment() * lambda * ell * ell;
        match model.variant() {
            Variant::Homogeneous => Ok(Self::single(1.0, Profile::constant(half_k))),
            Variant::SingleFactor { alpha, m } => Ok(Self::single(2.0 - 2.0 * alpha, m.clone().scaled(half_k))),
            Variant::TwoFactor {
                alpha,
                alpha_prime,
                nu,
                g,
            } => {
                let d = nu.clone().times(g.clone().times(g.clone())).scaled(half_k);
                Ok(Self::two_factor(2.0 - 2.0 * alpha, 2.0 - 2.0 * alpha_prime, d, nu.clone()))
            }
            Variant::Stratonovich { .. } => Err(Error::invalid(
                "no single-point local law is derived for the Stratonovich model",
            )),
        }
    }

    pub fn summary(&self) -> LawSummary {
        LawSummary {
            q: self.q,
            q_prime: self.q_prime,
            d_spec: self.d.to_string(),
            nu_spec: self.nu.as_ref().map(|n| n.to_string()),
        }
    }

    fn sample_positive(p: &Profile, name: &str, grid: &Grid1D) -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(grid.len());
        let mut clamped = false;
        for &x in grid.nodes() {
            let val = p.try_eval(x)?;
            if !(val > 0.0) || !val.is_finite() {
                return Err(Error::NonpositiveCoefficient {
                    name: name.to_string(),
                    min: val,
                });
            }
            if val < COEFFICIENT_FLOOR {
                clamped = true;
            }
            v.push(val.max(COEFFICIENT_FLOOR));
        }
        if clamped {
            warn!("{name} fell below {COEFFICIENT_FLOOR:e} on the grid and was clamped");
        }
        Ok(v)
    }

    fn nodal(&self, grid: &Grid1D) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let d = Self::sample_positive(&self.d, "D", grid)?;
        let nu = match &self.nu {
            Some(n) => Some(Self::sample_positive(n, "nu", grid)?),
            None => None,
        };
        Ok((d, nu))
    }
}

/// Nodal flux-form coefficients `(a, b)`.
pub fn flux_form(spec: &LocalDiffusionSpec, grid: &Grid1D) -> Result<(Vec<f64>, Vec<f64>)> {
    let (d, nu) = spec.nodal(grid)?;
    let q = spec.q;
    let (a, b) = match (nu, spec.q_prime) {
        (Some(nu), Some(qp)) => d
            .iter()
            .zip(&nu)
            .map(|(&d, &n)| (n.powf(qp - q) * d.powf(q), n.powf(q - qp) * d.powf(1.0 - q)))
            .unzip(),
        _ => d.iter().map(|&d| (d.powf(q), d.powf(1.0 - q))).unzip(),
    };
    Ok((a, b))
}

/// Tridiagonal generator with zero-flux ends.
#[derive(Debug, Clone)]
pub struct LocalOperator {
    grid: Grid1D,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    // max(a) max(b) / h² for the flux form, a quarter of the Gershgorin radius otherwise
    stiffness: f64,
}

impl LocalOperator {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// `(lower, diag, upper)`; `lower[i]` couples row `i` to `i − 1`.
    pub fn bands(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.lower, &self.diag, &self.upper)
    }

    pub fn apply_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.apply(u, &mut out);
        out
    }

    /// Default step: a fifth of the RK4 bound.
    pub fn default_dt(&self) -> f64 {
        0.2 * self.max_dt(Scheme::Rk4)
    }

    fn from_bands(grid: &Grid1D, lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>, stiffness: Option<f64>) -> Self {
        let stiffness = stiffness.unwrap_or_else(|| {
            0.25 * (0..diag.len())
                .map(|i| lower[i].abs() + diag[i].abs() + upper[i].abs())
                .fold(0.0, f64::max)
        });
        Self {
            grid: grid.clone(),
            lower,
            diag,
            upper,
            stiffness,
        }
    }
}

impl Generator for LocalOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        out[0] = self.diag[0] * u[0] + self.upper[0] * u[1];
        for i in 1..n - 1 {
            out[i] = self.lower[i] * u[i - 1] + self.diag[i] * u[i] + self.upper[i] * u[i + 1];
        }
        out[n - 1] = self.lower[n - 1] * u[n - 2] + self.diag[n - 1] * u[n - 1];
    }

    /// Euler `0.9 h² / (2 max a max b)`, RK4 `2.5 h² / (4 max a max b)`.
    fn max_dt(&self, scheme: Scheme) -> f64 {
        match scheme {
            Scheme::Euler => 0.9 / (2.0 * self.stiffness),
            Scheme::Rk4 => 2.5 / (4.0 * self.stiffness),
        }
    }

    fn weight(&self) -> f64 {
        self.grid.weight()
    }
}

/// Assembles the flux-form operator.
pub fn assemble_local(spec: &LocalDiffusionSpec, grid: &Grid1D) -> Result<LocalOperator> {
    let (a, b) = flux_form(spec, grid)?;
    let n = grid.len();
    let h2 = grid.h() * grid.h();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n - 1 {
        let af = 0.5 * (a[i] + a[i + 1]) / h2;
        // F_{i+½} h = af (b_{i+1} u_{i+1} − b_i u_i); enters row i with +, row i+1 with −
        upper[i] += af * b[i + 1];
        diag[i] -= af * b[i];
        diag[i + 1] -= af * b[i + 1];
        lower[i + 1] += af * b[i];
    }
    let amax = a.iter().copied().fold(0.0, f64::max);
    let bmax = b.iter().copied().fold(0.0, f64::max);
    Ok(LocalOperator::from_bands(grid, lower, diag, upper, Some(amax * bmax / h2)))
}

fn centered_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    d
}

/// `N_q = ∂ₓ(D^q) D^{1−q}` or `N_{q,q′} = ∂ₓ(ν^{q′−q−1} D^q) ν^{q−q′} D^{1−q}`,
/// differentiated by centered differences.
pub fn correction_vector(spec: &LocalDiffusionSpec, grid: &Grid1D) -> Result<Vec<f64>> {
    let (d, nu) = spec.nodal(grid)?;
    let q = spec.q;
    match (nu, spec.q_prime) {
        (Some(nu), Some(qp)) => {
            let f: Vec<f64> = d.iter().zip(&nu).map(|(&d, &n)| n.powf(qp - q - 1.0) * d.powf(q)).collect();
            let df = centered_derivative(&f, grid.h());
            Ok((0..d.len()).map(|i| df[i] * nu[i].powf(q - qp) * d[i].powf(1.0 - q)).collect())
        }
        _ => {
            let f: Vec<f64> = d.iter().map(|&d| d.powf(q)).collect();
            let df = centered_derivative(&f, grid.h());
            Ok((0..d.len()).map(|i| df[i] * d[i].powf(1.0 - q)).collect())
        }
    }
}

/// The expanded form `u_t = ∂ₓ(ν ∂ₓ(ν⁻¹ D u) − ν N u)` (`ν ≡ 1` for the
/// single-factor law) on interior rows; boundary rows are zero.
pub fn assemble_expanded(spec: &LocalDiffusionSpec, grid: &Grid1D) -> Result<LocalOperator> {
    let (d, nu) = spec.nodal(grid)?;
    let nu = nu.unwrap_or_else(|| vec![1.0; d.len()]);
    let corr = correction_vector(spec, grid)?;
    let n = grid.len();
    let h = grid.h();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        let nl = 0.5 * (nu[i - 1] + nu[i]);
        let nr = 0.5 * (nu[i] + nu[i + 1]);
        let w = |k: usize| d[k] / nu[k];
        lower[i] = nl * w(i - 1) / (h * h) + nu[i - 1] * corr[i - 1] / (2.0 * h);
        diag[i] = -(nl + nr) * w(i) / (h * h);
        upper[i] = nr * w(i + 1) / (h * h) - nu[i + 1] * corr[i + 1] / (2.0 * h);
    }
    Ok(LocalOperator::from_bands(grid, lower, diag, upper, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timestep::evolve;
    use std::f64::consts::PI;

    fn grid() -> Grid1D {
        Grid1D::new(10.0, 201).unwrap()
    }

    fn d_bump() -> Profile {
        Profile::RationalBump.scaled(0.25 * PI)
    }

    fn sup(v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    #[test]
    fn named_laws() {
        let g = grid();
        let (a, b) = flux_form(&LocalDiffusionSpec::single(1.0, d_bump()), &g).unwrap();
        assert!(a.iter().zip(g.nodes()).all(|(a, x)| (a - d_bump().eval(*x)).abs() < 1e-15));
        assert!(b.iter().all(|b| *b == 1.0));
        let (a, b) = flux_form(&LocalDiffusionSpec::single(0.0, d_bump()), &g).unwrap();
        assert!(a.iter().all(|a| *a == 1.0));
        assert!(b.iter().zip(g.nodes()).all(|(b, x)| (b - d_bump().eval(*x)).abs() < 1e-15));
        let nu = Profile::TwoPatch;
        let (a, b) = flux_form(&LocalDiffusionSpec::two_factor(1.0, 0.0, d_bump(), nu.clone()), &g).unwrap();
        for (i, &x) in g.nodes().iter().enumerate() {
            assert!((a[i] - d_bump().eval(x) / nu.eval(x)).abs() < 1e-14);
            assert!((b[i] - nu.eval(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_coefficients_collapse_every_law() {
        let g = grid();
        let reference = assemble_local(&LocalDiffusionSpec::single(1.0, Profile::constant(0.7)), &g).unwrap();
        for q in [0.0, 0.5, 2.0, -1.0] {
            let op = assemble_local(&LocalDiffusionSpec::single(q, Profile::constant(0.7)), &g).unwrap();
            let qp = assemble_local(
                &LocalDiffusionSpec::two_factor(q, 1.0 - q, Profile::constant(0.7), Profile::constant(1.3)),
                &g,
            )
            .unwrap();
            for k in 0..g.len() {
                for o in [&op, &qp] {
                    let (l, d, u) = o.bands();
                    let (rl, rd, ru) = reference.bands();
                    assert!((l[k] - rl[k]).abs() < 1e-12 && (d[k] - rd[k]).abs() < 1e-12 && (u[k] - ru[k]).abs() < 1e-12);
                }
            }
        }
        // standard three-point Laplacian scaled by D₀
        let (_, d, u) = reference.bands();
        let h2 = g.h() * g.h();
        assert!((d[50] + 2.0 * 0.7 / h2).abs() < 1e-9 && (u[50] - 0.7 / h2).abs() < 1e-9);
    }

    #[test]
    fn null_vectors() {
        let g = grid();
        for q in [0.0, 0.5, 1.0, 2.0] {
            for d in [d_bump(), Profile::quadratic_growth(), Profile::TwoPatch, Profile::Exponential { a: 0.07 }] {
                let spec = LocalDiffusionSpec::single(q, d.clone());
                let op = assemble_local(&spec, &g).unwrap();
                let u = g.sample(|x| d.eval(x).powf(q - 1.0));
                let scale = op.max_dt(Scheme::Euler).recip() * sup(&u);
                assert!(sup(&op.apply_vec(&u)) <= 1e-12 * scale, "q = {q}, D = {d}");
            }
        }
    }

    #[test]
    fn two_factor_null_vector_and_collapse() {
        let g = grid();
        let nu = Profile::RationalBump;
        let d = nu.clone().times(Profile::quadratic_growth().times(Profile::quadratic_growth())).scaled(0.25 * PI);
        let spec = LocalDiffusionSpec::two_factor(0.0, 1.0, d.clone(), nu.clone());
        let op = assemble_local(&spec, &g).unwrap();
        let (_, b) = flux_form(&spec, &g).unwrap();
        let u: Vec<f64> = b.iter().map(|b| 1.0 / b).collect();
        assert!(sup(&op.apply_vec(&u)) <= 1e-12 * sup(&u) / op.max_dt(Scheme::Euler));
        // 1/b = ν/D for (q, q') = (0, 1)
        for (i, &x) in g.nodes().iter().enumerate() {
            assert!((u[i] - nu.eval(x) / d.eval(x)).abs() < 1e-12 * u[i]);
        }
        let same = assemble_local(&LocalDiffusionSpec::two_factor(0.5, 0.5, d.clone(), nu), &g).unwrap();
        let single = assemble_local(&LocalDiffusionSpec::single(0.5, d), &g).unwrap();
        assert_eq!(same.bands().1.len(), single.bands().1.len());
        for k in 0..g.len() {
            assert!((same.bands().1[k] - single.bands().1[k]).abs() <= 1e-12 * single.bands().1[k].abs());
        }
    }

    #[test]
    fn mass_is_conserved() {
        let g = grid();
        let op = assemble_local(&LocalDiffusionSpec::single(0.5, d_bump()), &g).unwrap();
        let u0 = g.sample(|x| (-(x - 2.0) * (x - 2.0)).exp());
        let tr = evolve(&op, &u0, 5.0, op.default_dt(), Scheme::Rk4, &[]).unwrap();
        assert!(tr.max_mass_drift < 1e-13);
        let col: Vec<f64> = (0..g.len()).map(|j| {
            let mut e = vec![0.0; g.len()];
            e[j] = 1.0;
            op.apply_vec(&e).iter().sum::<f64>()
        }).collect();
        assert!(sup(&col) < 1e-9);
    }

    #[test]
    fn fick_variance_grows_as_2t() {
        let g = Grid1D::new(20.0, 801).unwrap();
        let op = assemble_local(&LocalDiffusionSpec::single(1.0, Profile::constant(1.0)), &g).unwrap();
        let u0 = g.sample(|x| (-x * x / 2.0).exp());
        let tr = evolve(&op, &u0, 2.0, op.default_dt(), Scheme::Rk4, &[]).unwrap();
        let var = |u: &[f64]| g.nodes().iter().zip(u).map(|(x, v)| x * x * v).sum::<f64>() / u.iter().sum::<f64>();
        assert!((var(tr.final_state()) - var(&u0) - 4.0).abs() < 1e-6);
    }

    #[test]
    fn chapman_law_relaxes_to_d() {
        let g = Grid1D::new(5.0, 51).unwrap();
        let spec = LocalDiffusionSpec::single(2.0, d_bump());
        let op = assemble_local(&spec, &g).unwrap();
        let u0 = vec![1.0; g.len()];
        let tr = evolve(&op, &u0, 3000.0, op.default_dt(), Scheme::Rk4, &[]).unwrap();
        let d = g.sample(|x| d_bump().eval(x));
        let c = g.mass(&u0) / g.mass(&d);
        let u = tr.final_state();
        for i in 0..g.len() {
            assert!((u[i] - c * d[i]).abs() < 1e-8 * c, "{i}: {} vs {}", u[i], c * d[i]);
        }
    }

    #[test]
    fn correction_vectors() {
        let g = grid();
        assert!(sup(&correction_vector(&LocalDiffusionSpec::single(0.0, d_bump()), &g).unwrap()) == 0.0);
        let nu = Profile::TwoPatch;
        let n01 = correction_vector(&LocalDiffusionSpec::two_factor(0.0, 1.0, d_bump(), nu), &g).unwrap();
        assert!(sup(&n01) == 0.0);
        let a = 0.1;
        let n1 = correction_vector(&LocalDiffusionSpec::single(1.0, Profile::Exponential { a }), &g).unwrap();
        for (i, &x) in g.nodes().iter().enumerate().skip(1).take(g.len() - 2) {
            let exact = a * (a * x).exp();
            assert!((n1[i] - exact).abs() < 1e-4 * exact, "{i}");
        }
    }

    #[test]
    fn expanded_form_agrees_to_second_order() {
        let u = |x: f64| (-(x - 1.0) * (x - 1.0) / 3.0).exp();
        let nu = Profile::RationalBump;
        let d = nu.clone().times(Profile::quadratic_growth().times(Profile::quadratic_growth())).scaled(0.25 * PI);
        let specs = [
            LocalDiffusionSpec::single(0.5, d_bump()),
            LocalDiffusionSpec::single(2.0, Profile::TwoPatch),
            LocalDiffusionSpec::two_factor(1.0, 0.0, d.clone(), nu.clone()),
            LocalDiffusionSpec::two_factor(0.5, 1.0, d, nu),
        ];
        for spec in specs {
            let gap = |m: usize| {
                let g = Grid1D::new(6.0, m).unwrap();
                let uv = g.sample(u);
                let f = assemble_local(&spec, &g).unwrap().apply_vec(&uv);
                let e = assemble_expanded(&spec, &g).unwrap().apply_vec(&uv);
                (1..m - 1).fold(0.0f64, |acc, i| acc.max((f[i] - e[i]).abs()))
            };
            let ratio = gap(121) / gap(241);
            assert!(ratio > 3.5 && ratio < 4.5, "q = {} ratio {ratio}", spec.q);
        }
    }

    #[test]
    fn vanishing_coefficient_is_rejected() {
        let g = grid();
        let spec = LocalDiffusionSpec::single(0.5, Profile::expr("x^2").unwrap());
        assert!(matches!(assemble_local(&spec, &g), Err(Error::NonpositiveCoefficient { .. })));
        // tiny but positive values are clamped, not rejected
        let spec = LocalDiffusionSpec::single(0.5, Profile::expr("1e-14 + x^2").unwrap());
        assert!(assemble_local(&spec, &g).is_ok());
    }

    #[test]
    fn derived_laws() {
        let m = JumpRateModel::single_factor(crate::kernels::DispersalKernel::gaussian(), 1.0, Profile::RationalBump).unwrap();
        let s = LocalDiffusionSpec::from_model(&m.focused(0.1).unwrap()).unwrap();
        assert_eq!(s.q, 0.0);
        assert!((s.d.eval(0.0) - 0.25 * PI).abs() < 1e-14);
    }
}
