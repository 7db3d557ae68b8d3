//! Even dispersal kernels and their moments.
//!
//! Every kernel is stored with unit mass and unit absolute first moment, so the
//! only free shape statistic is the second moment `k = ∫ z² K(z) dz`.
//!
//! Moments split the half line at `z = 1`. The inner piece is plain adaptive
//! Gauss–Kronrod. The outer piece is written in `l = ln z` and mapped onto a
//! finite interval, which lets kernels with logarithmically corrected power
//! tails (the heavy-tailed kernel decays like `z⁻³ ln⁻³ z`) be integrated
//! without truncation. The integrand of the outer piece is evaluated in log
//! space so that `z^{n+1}` never overflows on its own.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quadrature::{integrate, integrate_log_tail, integrate_panels, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelKind {
    Gaussian,
    Laplace,
    Quartic,
    HeavyTail,
    Custom,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Laplace => "laplace",
            KernelKind::Quartic => "quartic",
            KernelKind::HeavyTail => "heavy_tail",
            KernelKind::Custom => "custom",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
enum Base {
    Gaussian,
    Laplace,
    Quartic,
    /// `(c3 L⁻³ + c5 L⁻⁵ + c7 L⁻⁷) / (1 + |z|³)` with `L = ln(2 + |z|)`.
    HeavyTail([f64; 3]),
    Expr(Arc<Expr>),
    /// Piecewise-linear density on `0 = z₀ < z₁ < …`, zero beyond the table.
    Table(Arc<[f64]>, Arc<[f64]>),
}

fn softplus(t: f64) -> f64 {
    if t > 35.0 {
        t + (-t).exp()
    } else {
        t.exp().ln_1p()
    }
}

impl Base {
    #[inline]
    fn eval(&self, z: f64) -> f64 {
        let a = z.abs();
        match self {
            Base::Gaussian => (-a * a / PI).exp() / PI,
            Base::Laplace => 0.5 * (-a).exp(),
            Base::Quartic => 1.0 / (PI * (1.0 + 0.25 * a * a * a * a)),
            Base::HeavyTail(c) => {
                let r = 1.0 / (2.0 + a).ln();
                let r2 = r * r;
                let p = r * r2 * (c[0] + r2 * (c[1] + r2 * c[2]));
                p / (1.0 + a * a * a)
            }
            Base::Expr(e) => e.eval(a),
            Base::Table(zs, ks) => table_eval(zs, ks, a),
        }
    }

    /// `z^{n+1} K(z)` at `z = e^l`.
    fn tail_weight(&self, l: f64, n: u32) -> f64 {
        let np1 = f64::from(n + 1);
        match self {
            Base::Gaussian => (np1 * l - PI.ln() - (2.0 * l).exp() / PI).exp(),
            Base::Laplace => (np1 * l - LN_2 - l.exp()).exp(),
            Base::Quartic => (np1 * l - PI.ln() - softplus(4.0 * l - 2.0 * LN_2)).exp(),
            Base::HeavyTail(c) => {
                let big_l = l + (2.0 * (-l).exp()).ln_1p();
                let r = 1.0 / big_l;
                let r2 = r * r;
                let p = r * r2 * (c[0] + r2 * (c[1] + r2 * c[2]));
                (np1 * l - softplus(3.0 * l)).exp() * p
            }
            Base::Expr(e) => {
                let z = l.exp();
                let f = e.eval(z);
                if f == 0.0 {
                    0.0
                } else {
                    f * (np1 * l).exp()
                }
            }
            Base::Table(..) => unreachable!("tabulated kernels have compact support"),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Base::Gaussian => "gaussian",
            Base::Laplace => "laplace",
            Base::Quartic => "quartic",
            Base::HeavyTail(_) => "heavy_tail",
            Base::Expr(_) | Base::Table(..) => "custom",
        }
    }

    /// `∫₀^∞ zⁿ K(z) dz`.
    fn half_moment(&self, n: u32, opts: QuadOptions) -> Result<f64> {
        if let Base::Table(zs, ks) = self {
            return table_half_moment(zs, ks, n, opts);
        }
        let inner = integrate(|z| z.powi(n as i32) * self.eval(z), 0.0, 1.0, opts)?;
        self.check_tail(n)?;
        let outer = integrate_log_tail(|l| self.tail_weight(l, n), opts)?;
        let tol = opts.abs_tol.max(opts.rel_tol * outer.value.abs()) * 1e3;
        if outer.error > tol {
            return Err(Error::TailTruncation {
                bound: outer.error,
                tol,
            });
        }
        Ok(inner.value + outer.value)
    }

    /// Rejects tails that do not decay faster than `1/l` in the log variable.
    fn check_tail(&self, n: u32) -> Result<()> {
        let (l1, l2) = (30.0, 120.0);
        let w1 = self.tail_weight(l1, n);
        let w2 = self.tail_weight(l2, n);
        let divergent = !w1.is_finite() || !w2.is_finite() || (w1 > 0.0 && l2 * w2 >= l1 * w1);
        if divergent {
            Err(Error::DivergentMoment {
                kernel: self.label().to_string(),
                order: n,
            })
        } else {
            Ok(())
        }
    }
}

fn table_eval(zs: &[f64], ks: &[f64], a: f64) -> f64 {
    let last = zs.len() - 1;
    if a > zs[last] {
        return 0.0;
    }
    let i = match zs.partition_point(|&z| z <= a) {
        0 => 0,
        p => (p - 1).min(last - 1),
    };
    let t = (a - zs[i]) / (zs[i + 1] - zs[i]);
    ks[i] + t * (ks[i + 1] - ks[i])
}

fn table_half_moment(zs: &[f64], ks: &[f64], n: u32, opts: QuadOptions) -> Result<f64> {
    // the integrand is a polynomial of degree n + 1 on each segment
    let f = |z: f64| z.powi(n as i32) * table_eval(zs, ks, z);
    Ok(integrate_panels(f, zs, opts)?.value)
}

/// An even probability density on the line with unit mass and unit absolute
/// first moment.
#[derive(Debug, Clone)]
pub struct DispersalKernel {
    kind: KernelKind,
    label: String,
    base: Base,
    // density(z) = s * c * base(c * z)
    s: f64,
    c: f64,
    mass: f64,
    abs_first_moment: f64,
    second_moment: f64,
    params: BTreeMap<String, f64>,
}

fn opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        max_subdivisions: 4000,
    }
}

impl DispersalKernel {
    fn from_base(kind: KernelKind, label: &str, base: Base, params: BTreeMap<String, f64>) -> Result<Self> {
        let o = opts();
        let mass = 2.0 * base.half_moment(0, o)?;
        let abs1 = 2.0 * base.half_moment(1, o)?;
        let second = 2.0 * base.half_moment(2, o)?;
        Ok(Self {
            kind,
            label: label.to_string(),
            base,
            s: 1.0,
            c: 1.0,
            mass,
            abs_first_moment: abs1,
            second_moment: second,
            params,
        })
    }

    /// `K₁(z) = e^{-z²/π} / π`, with `k₁ = π/2`.
    pub fn gaussian() -> Self {
        static K: OnceLock<DispersalKernel> = OnceLock::new();
        K.get_or_init(|| {
            let params = BTreeMap::from([("C1".to_string(), 1.0 / PI), ("a1".to_string(), 1.0 / PI)]);
            Self::from_base(KernelKind::Gaussian, "gaussian", Base::Gaussian, params).expect("gaussian moments")
        })
        .clone()
    }

    /// `K₂(z) = e^{-|z|} / 2`, with `k₂ = 2`.
    pub fn laplace() -> Self {
        static K: OnceLock<DispersalKernel> = OnceLock::new();
        K.get_or_init(|| {
            Self::from_base(KernelKind::Laplace, "laplace", Base::Laplace, BTreeMap::new()).expect("laplace moments")
        })
        .clone()
    }

    /// `K₃(z) = 1 / (π (1 + z⁴/4))`, with `k₃ = 2`.
    pub fn quartic() -> Self {
        static K: OnceLock<DispersalKernel> = OnceLock::new();
        K.get_or_init(|| {
            Self::from_base(KernelKind::Quartic, "quartic", Base::Quartic, BTreeMap::new()).expect("quartic moments")
        })
        .clone()
    }

    /// `K₄(z) = (A L⁻³ − B L⁻⁵ + C L⁻⁷) / (1 + |z|³)` with `L = ln(2 + |z|)`.
    ///
    /// `A`, `B`, `C` are solved from the three moment conditions
    /// `∫K = 1`, `∫|z|K = 1`, `∫z²K = 2`.
    pub fn heavy_tail() -> Result<Self> {
        static K: OnceLock<std::result::Result<DispersalKernel, String>> = OnceLock::new();
        K.get_or_init(|| Self::solve_heavy_tail().map_err(|e| e.to_string()))
            .clone()
            .map_err(Error::InvalidInput)
    }

    fn solve_heavy_tail() -> Result<Self> {
        let o = opts();
        let mut m = Matrix3::zeros();
        for (j, coeffs) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].into_iter().enumerate() {
            let basis = Base::HeavyTail(coeffs);
            for i in 0..3 {
                m[(i, j)] = 2.0 * basis.half_moment(i as u32, o)?;
            }
        }
        let sv = m.singular_values();
        let condition = sv.max() / sv.min();
        if !condition.is_finite() || condition > 1e8 {
            return Err(Error::SingularSystem { condition });
        }
        let rhs = Vector3::new(1.0, 1.0, 2.0);
        let sol = m.lu().solve(&rhs).ok_or(Error::SingularSystem { condition })?;
        let (a, b, c) = (sol[0], -sol[1], sol[2]);
        let params = BTreeMap::from([
            ("A".to_string(), a),
            ("B".to_string(), b),
            ("C".to_string(), c),
            ("condition".to_string(), condition),
        ]);
        Self::from_base(KernelKind::HeavyTail, "heavy_tail", Base::HeavyTail([a, -b, c]), params)
    }

    /// Builds a kernel from an expression in `z`, rescaled to unit mass and
    /// unit absolute first moment. The expression is evaluated at `|z|`.
    pub fn from_expr(expr: Expr) -> Result<Self> {
        Self::custom(Base::Expr(Arc::new(expr)), None)
    }

    /// Builds a kernel from tabulated `(z, K)` pairs with `z ≥ 0` strictly
    /// increasing from 0; interpolated linearly and zero beyond the table.
    pub fn from_table(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("kernel table needs at least two points"));
        }
        if points[0].0 != 0.0 {
            return Err(Error::invalid("kernel table must start at z = 0"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) || !w[1].0.is_finite() {
                return Err(Error::invalid("kernel table abscissae must be strictly increasing"));
            }
        }
        if points.iter().any(|p| !(p.1 >= 0.0) || !p.1.is_finite()) {
            return Err(Error::invalid("kernel table values must be finite and nonnegative"));
        }
        let zs: Arc<[f64]> = points.iter().map(|p| p.0).collect();
        let ks: Arc<[f64]> = points.iter().map(|p| p.1).collect();
        Self::custom(Base::Table(zs, ks), None)
    }

    fn custom(base: Base, analytic: Option<RawMoments>) -> Result<Self> {
        if let Base::Expr(e) = &base {
            // sampled nonnegativity check
            for i in 0..=20_000 {
                let z = 1e-3 * f64::from(i) * f64::from(i) / 400.0;
                let v = e.eval(z);
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "custom kernel `{e}` is negative or undefined at z = {z}"
                    )));
                }
            }
        }
        let o = opts();
        let raw = match analytic {
            Some(r) => r,
            None => RawMoments {
                mass: 2.0 * base.half_moment(0, o)?,
                abs_first: 2.0 * base.half_moment(1, o)?,
                second: None,
            },
        };
        if !(raw.mass > 0.0) || !(raw.abs_first > 0.0) {
            return Err(Error::invalid("custom kernel has zero mass"));
        }
        let s = 1.0 / raw.mass;
        let c = raw.abs_first / raw.mass;
        let raw_second = match raw.second {
            Some(v) => v,
            None => 2.0 * base.half_moment(2, o)?,
        };
        let params = BTreeMap::from([("s".to_string(), s), ("c".to_string(), c)]);
        let label = match &base {
            Base::Expr(e) => format!("custom({e})"),
            _ => "custom(table)".to_string(),
        };
        Ok(Self {
            kind: KernelKind::Custom,
            label,
            base,
            s,
            c,
            mass: s * raw.mass,
            abs_first_moment: s * raw.abs_first / c,
            second_moment: s * raw_second / (c * c),
            params,
        })
    }

    /// Resolves `gaussian`, `laplace`, `quartic`, `heavy_tail` or
    /// `custom:<path>`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Self::gaussian()),
            "laplace" => Ok(Self::laplace()),
            "quartic" => Ok(Self::quartic()),
            "heavy_tail" => Self::heavy_tail(),
            _ => match name.strip_prefix("custom:") {
                Some(path) => Self::from_file(Path::new(path)),
                None => Err(Error::Config {
                    field: "kernel".to_string(),
                    message: format!("unknown kernel `{name}`"),
                }),
            },
        }
    }

    /// Loads a custom kernel file (TOML with either `expr` or `table`).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: CustomKernelSpec = toml::from_str(&text).map_err(|e| Error::Config {
            field: path.display().to_string(),
            message: e.message().to_string(),
        })?;
        spec.build()
    }

    #[inline]
    pub fn density(&self, z: f64) -> f64 {
        self.s * self.c * self.base.eval(self.c * z)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.label
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn abs_first_moment(&self) -> f64 {
        self.abs_first_moment
    }

    /// `k = ∫ z² K(z) dz`.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// `∫ |z|ⁿ K` when `absolute`, else `∫ zⁿ K` (zero for odd `n`).
    pub fn moment(&self, order: u32, absolute: bool) -> Result<f64> {
        let half = self.base.half_moment(order, opts())?;
        if !absolute && order % 2 == 1 {
            return Ok(0.0);
        }
        Ok(2.0 * self.s * self.c.powi(-(order as i32)) * half)
    }

    /// Smallest `Q` with `∫_{|z| ≤ Q} K ≥ p`.
    pub fn abs_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("quantile level {p} outside (0, 1)")));
        }
        let o = QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-11,
            max_subdivisions: 2000,
        };
        let cdf = |q: f64| -> Result<f64> {
            let breaks: Vec<f64> = std::iter::once(0.0)
                .chain((0..).map(|k| 2f64.powi(k)).take_while(|&b| b < q))
                .chain(std::iter::once(q))
                .collect();
            Ok(2.0 * integrate_panels(|z| self.density(z), &breaks, o)?.value / self.mass)
        };
        let mut hi = 1.0;
        while cdf(hi)? < p {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::invalid("kernel quantile beyond 1e12"));
            }
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// The four kernels of the tail comparison, in order `K₁ … K₄`.
    pub fn builtins() -> Result<[Self; 4]> {
        Ok([Self::gaussian(), Self::laplace(), Self::quartic(), Self::heavy_tail()?])
    }
}

#[derive(Debug, Clone, Copy)]
struct RawMoments {
    mass: f64,
    abs_first: f64,
    second: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomKernelSpec {
    expr: Option<String>,
    table: Option<Vec<(f64, f64)>>,
    moments: Option<AnalyticMoments>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalyticMoments {
    mass: f64,
    abs_first: f64,
    second: Option<f64>,
}

impl CustomKernelSpec {
    fn build(self) -> Result<DispersalKernel> {
        let analytic = self.moments.map(|m| RawMoments {
            mass: m.mass,
            abs_first: m.abs_first,
            second: m.second,
        });
        match (self.expr, self.table) {
            (Some(src), None) => DispersalKernel::custom(Base::Expr(Arc::new(Expr::parse_in(&src, "z")?)), analytic),
            (None, Some(table)) => {
                let k = DispersalKernel::from_table(&table)?;
                match analytic {
                    None => Ok(k),
                    Some(a) => DispersalKernel::custom(k.base, Some(a)),
                }
            }
            _ => Err(Error::Config {
                field: "kernel".to_string(),
                message: "custom kernel needs exactly one of `expr` or `table`".to_string(),
            }),
        }
    }
}
