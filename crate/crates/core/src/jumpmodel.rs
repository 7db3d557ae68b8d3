//! Jump-rate models `J(x, y)`: the rate of jumping from `x` to `y`.
//!
//! All variants share the form
//!
//! ```text
//! J(x, y) = λ · factor(x, y) · (1/ℓ) K(arg(x, y) / ℓ)
//! ```
//!
//! with `λ = ℓ = 1` for an unfocused model. Focusing at scale `ε` sets
//! `λ = ε⁻²` and `ℓ = ε`, which keeps the diffusivity fixed while the mean
//! jump length shrinks.
//!
//! | variant        | factor                          | arg                  |
//! |----------------|---------------------------------|----------------------|
//! | homogeneous    | 1                               | y − x                |
//! | single factor  | m(αx + βy)                      | y − x                |
//! | two factor     | ν(α′x + β′y) / g(αx + βy)       | (y − x) / g(αx + βy) |
//! | Stratonovich   | 1 / h(y)                        | Φ(y) − Φ(x)          |
//!
//! where `β = 1 − α`, `β′ = 1 − α′` and `Φ(x) = ∫₀ˣ ds / h(s)` is the food
//! metric.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Interval};
use crate::kernels::DispersalKernel;
use crate::profile::Profile;
use crate::quadrature::{integrate, integrate_panels, QuadOptions};

/// Refinement of the food-metric table relative to the model grid.
pub const FOOD_METRIC_REFINEMENT: usize = 8;

/// Tabulated `Φ(x) = ∫₀ˣ ds / h(s)` with monotone cubic interpolation.
#[derive(Debug, Clone)]
pub struct FoodMetric {
    xs: Vec<f64>,
    phi: Vec<f64>,
    slope: Vec<f64>,
    refinement: usize,
}

impl FoodMetric {
    pub fn interval(&self) -> Interval {
        Interval {
            lo: self.xs[0],
            hi: self.xs[self.xs.len() - 1],
        }
    }

    /// `Φ` at the nodes of the grid the table was built on.
    pub fn node_values(&self) -> Vec<f64> {
        self.phi.iter().step_by(self.refinement).copied().collect()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let Interval { lo, hi } = self.interval();
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain { x, lo, hi });
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = self.xs.partition_point(|&t| t <= x).clamp(1, n - 1) - 1;
        let dx = self.xs[i + 1] - self.xs[i];
        let secant = (self.phi[i + 1] - self.phi[i]) / dx;
        let (mut s0, mut s1) = (self.slope[i], self.slope[i + 1]);
        // Fritsch–Carlson limiter
        let (a, b) = (s0 / secant, s1 / secant);
        let r2 = a * a + b * b;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            s0 *= tau;
            s1 *= tau;
        }
        let t = (x - self.xs[i]) / dx;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.phi[i] + h10 * dx * s0 + h01 * self.phi[i + 1] + h11 * dx * s1
    }
}

/// Builds the food-metric table of `h` over `grid`.
///
/// Each grid cell is split into `FOOD_METRIC_REFINEMENT` sub-cells; the
/// cumulative trapezoid sums at spacings `δ` and `δ/2` are combined by one
/// Richardson step.
pub fn food_metric_table(h: &Profile, grid: &Grid1D) -> Result<FoodMetric> {
    let r = FOOD_METRIC_REFINEMENT;
    let Interval { lo, hi } = grid.interval();
    let fine = Grid1D::spanning(lo, hi, (grid.len() - 1) * r + 1)?;
    let xs = fine.nodes().to_vec();
    let delta = fine.h();
    let inv = |x: f64| 1.0 / h.eval(x);

    let mut probes = xs.clone();
    probes.extend(xs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    h.check_positive("h", &probes)?;

    let origin = integrate(inv, 0.0, lo, QuadOptions::default())?.value;
    let mut phi = Vec::with_capacity(xs.len());
    let mut acc = origin;
    phi.push(acc);
    for w in xs.windows(2) {
        let (f0, f1) = (inv(w[0]), inv(w[1]));
        let fm = inv(0.5 * (w[0] + w[1]));
        let coarse = 0.5 * delta * (f0 + f1);
        let finer = 0.25 * delta * (f0 + 2.0 * fm + f1);
        acc += (4.0 * finer - coarse) / 3.0;
        phi.push(acc);
    }
    let slope = xs.iter().map(|&x| inv(x)).collect();
    Ok(FoodMetric {
        xs,
        phi,
        slope,
        refinement: r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantKind {
    Homogeneous,
    SingleFactor,
    TwoFactor,
    Stratonovich,
}

#[derive(Debug, Clone)]
pub enum Variant {
    Homogeneous,
    SingleFactor {
        alpha: f64,
        m: Profile,
    },
    TwoFactor {
        alpha: f64,
        alpha_prime: f64,
        nu: Profile,
        g: Profile,
    },
    Stratonovich {
        h: Profile,
        metric: Arc<FoodMetric>,
    },
}

#[derive(Debug, Clone)]
pub struct JumpRateModel {
    kernel: DispersalKernel,
    variant: Variant,
    rate_scale: f64,
    length_scale: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("deciding factor alpha = {alpha} outside [0, 1]")));
    }
    Ok(())
}

impl JumpRateModel {
    pub fn homogeneous(kernel: DispersalKernel) -> Self {
        Self {
            kernel,
            variant: Variant::Homogeneous,
            rate_scale: 1.0,
            length_scale: 1.0,
        }
    }

    /// `J(x, y) = m(αx + βy) K(y − x)`.
    pub fn single_factor(kernel: DispersalKernel, alpha: f64, m: Profile) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            kernel,
            variant: Variant::SingleFactor { alpha, m },
            rate_scale: 1.0,
            length_scale: 1.0,
        })
    }

    /// `J(x, y) = ν(α′x + β′y) / g(αx + βy) · K((y − x) / g(αx + βy))`.
    ///
    /// `α′` may lie outside `[0, 1]`.
    pub fn two_factor(kernel: DispersalKernel, alpha: f64, alpha_prime: f64, nu: Profile, g: Profile) -> Result<Self> {
        check_alpha(alpha)?;
        if !alpha_prime.is_finite() {
            return Err(Error::invalid("alpha_prime must be finite"));
        }
        Ok(Self {
            kernel,
            variant: Variant::TwoFactor {
                alpha,
                alpha_prime,
                nu,
                g,
            },
            rate_scale: 1.0,
            length_scale: 1.0,
        })
    }

    /// `J(x, y) = K(Φ(y) − Φ(x)) / h(y)`, defined on the interval of `grid`.
    pub fn stratonovich(kernel: DispersalKernel, h: Profile, grid: &Grid1D) -> Result<Self> {
        let metric = Arc::new(food_metric_table(&h, grid)?);
        Ok(Self {
            kernel,
            variant: Variant::Stratonovich { h, metric },
            rate_scale: 1.0,
            length_scale: 1.0,
        })
    }

    pub fn kernel(&self) -> &DispersalKernel {
        &self.kernel
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn kind(&self) -> VariantKind {
        match self.variant {
            Variant::Homogeneous => VariantKind::Homogeneous,
            Variant::SingleFactor { .. } => VariantKind::SingleFactor,
            Variant::TwoFactor { .. } => VariantKind::TwoFactor,
            Variant::Stratonovich { .. } => VariantKind::Stratonovich,
        }
    }

    /// The deciding factor of the jump length (or of the rate, single factor).
    pub fn alpha(&self) -> Option<f64> {
        match self.variant {
            Variant::SingleFactor { alpha, .. } | Variant::TwoFactor { alpha, .. } => Some(alpha),
            Variant::Homogeneous => None,
            Variant::Stratonovich { .. } => None,
        }
    }

    pub fn alpha_prime(&self) -> Option<f64> {
        match self.variant {
            Variant::TwoFactor { alpha_prime, .. } => Some(alpha_prime),
            _ => None,
        }
    }

    /// `(λ, ℓ)`: the rate and length scales applied by focusing.
    pub fn scales(&self) -> (f64, f64) {
        (self.rate_scale, self.length_scale)
    }

    /// The focused model: rate scaled by `ε⁻²`, lengths by `ε`.
    pub fn focused(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::EpsilonRange(eps));
        }
        let mut out = self.clone();
        out.rate_scale = self.rate_scale / (eps * eps);
        out.length_scale = self.length_scale * eps;
        Ok(out)
    }

    /// Checks that every profile is defined and positive where the model will
    /// be evaluated for jumps inside `domain`.
    pub fn validate_on(&self, domain: Interval, samples: &[f64]) -> Result<()> {
        let Interval { lo, hi } = domain;
        match &self.variant {
            Variant::Homogeneous => Ok(()),
            Variant::SingleFactor { m, .. } => {
                m.covers(lo, hi)?;
                m.check_positive("m", samples)
            }
            Variant::TwoFactor { alpha_prime, nu, g, .. } => {
                // α′x + β′y ranges over [lo, hi] widened by |α′ − ½|-dependent overshoot
                let ap = *alpha_prime;
                let ends = [ap * lo + (1.0 - ap) * hi, ap * hi + (1.0 - ap) * lo, lo, hi];
                let nlo = ends.iter().copied().fold(f64::INFINITY, f64::min);
                let nhi = ends.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                nu.covers(nlo, nhi)?;
                g.covers(lo, hi)?;
                g.check_positive("g", samples)?;
                nu.check_positive("nu", samples)
            }
            Variant::Stratonovich { h, metric } => {
                let t = metric.interval();
                if lo < t.lo || hi > t.hi {
                    return Err(Error::Domain {
                        x: if lo < t.lo { lo } else { hi },
                        lo: t.lo,
                        hi: t.hi,
                    });
                }
                h.check_positive("h", samples)
            }
        }
    }

    /// `J(x, y)` without domain checks. Callers validate first.
    #[inline]
    pub fn rate(&self, x: f64, y: f64) -> f64 {
        let (factor, arg) = match &self.variant {
            Variant::Homogeneous => (1.0, y - x),
            Variant::SingleFactor { alpha, m } => (m.eval(alpha * x + (1.0 - alpha) * y), y - x),
            Variant::TwoFactor {
                alpha,
                alpha_prime,
                nu,
                g,
            } => {
                let gp = g.eval(alpha * x + (1.0 - alpha) * y);
                let n = nu.eval(alpha_prime * x + (1.0 - alpha_prime) * y);
                (n / gp, (y - x) / gp)
            }
            Variant::Stratonovich { h, metric } => {
                (1.0 / h.eval(y), metric.eval_unchecked(y) - metric.eval_unchecked(x))
            }
        };
        let l = self.length_scale;
        self.rate_scale * factor * self.kernel.density(arg / l) / l
    }

    /// `J(x, y)`, reporting evaluation points outside tabulated data.
    pub fn jump_rate(&self, x: f64, y: f64) -> Result<f64> {
        match &self.variant {
            Variant::Homogeneous => {}
            Variant::SingleFactor { alpha, m } => {
                m.try_eval(alpha * x + (1.0 - alpha) * y)?;
            }
            Variant::TwoFactor {
                alpha,
                alpha_prime,
                nu,
                g,
            } => {
                g.try_eval(alpha * x + (1.0 - alpha) * y)?;
                nu.try_eval(alpha_prime * x + (1.0 - alpha_prime) * y)?;
            }
            Variant::Stratonovich { h, metric } => {
                metric.eval(x)?;
                metric.eval(y)?;
                h.try_eval(y)?;
            }
        }
        Ok(self.rate(x, y))
    }

    /// The local kernel `z ↦ K(p, p; z)` with both deciding points at `p`.
    pub fn local_kernel(&self, p: f64, z: f64) -> f64 {
        let (factor, width) = self.local_factor_width(p);
        let l = self.length_scale * width;
        self.rate_scale * factor * self.kernel.density(z / l) / l
    }

    /// `(rate factor, length factor)` of the local kernel at `p`.
    pub(crate) fn local_factor_width(&self, p: f64) -> (f64, f64) {
        match &self.variant {
            Variant::Homogeneous => (1.0, 1.0),
            Variant::SingleFactor { m, .. } => (m.eval(p), 1.0),
            Variant::TwoFactor { nu, g, .. } => (nu.eval(p), g.eval(p)),
            Variant::Stratonovich { h, .. } => {
                let hp = h.eval(p);
                (1.0, hp)
            }
        }
    }

    fn length_breaks(&self, x: f64, domain: Interval) -> Vec<f64> {
        let (_, w) = self.local_factor_width(x);
        let mut b = vec![domain.lo, domain.hi];
        if domain.contains(x) {
            b.push(x);
        }
        for s in [self.length_scale, self.length_scale * w] {
            for k in [0.25, 1.0, 4.0, 16.0, 64.0, 256.0] {
                for y in [x - k * s, x + k * s] {
                    if y > domain.lo && y < domain.hi {
                        b.push(y);
                    }
                }
            }
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

fn quad() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-11,
        max_subdivisions: 4000,
    }
}

/// `∫_domain J(x, y) dy`: the out-rate restricted to the domain.
pub fn total_jump_rate(model: &JumpRateModel, x: f64, domain: Interval) -> Result<f64> {
    model.jump_rate(x, domain.lo)?;
    model.jump_rate(x, domain.hi)?;
    let breaks = model.length_breaks(x, domain);
    Ok(integrate_panels(|y| model.rate(x, y), &breaks, quad())?.value)
}

/// `∫|y − x| J(x, y) dy / ∫ J(x, y) dy` over the domain.
pub fn mean_jump_length(model: &JumpRateModel, x: f64, domain: Interval) -> Result<f64> {
    let total = total_jump_rate(model, x, domain)?;
    if !(total > 1e-300) {
        return Err(Error::ZeroRate { x, rate: total });
    }
    let breaks = model.length_breaks(x, domain);
    let first = integrate_panels(|y| (y - x).abs() * model.rate(x, y), &breaks, quad())?.value;
    Ok(first / total)
}
