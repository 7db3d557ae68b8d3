//! Scalar heterogeneity fields `m`, `ν`, `g`, `h` and the diffusivities built
//! from them.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    RationalBump,
    QuadraticGrowth,
    Exponential,
    GaussianProfile,
    TwoPatch,
    Constant,
    Custom,
}

/// A named scalar field on the line.
#[derive(Debug, Clone)]
pub enum Profile {
    /// `1 / (1 + x²)`
    RationalBump,
    /// `1 + c x²`
    QuadraticGrowth { c: f64 },
    /// `e^{a x}`
    Exponential { a: f64 },
    /// `e^{-a x²}`
    GaussianProfile { a: f64 },
    /// `γ(x + 5) + 2 γ(x − 5)` with `γ(x) = 1 / (1 + x²)`
    TwoPatch,
    Constant { c: f64 },
    Expr(Arc<Expr>),
    /// Linear interpolation of `(x, value)` samples; undefined outside.
    Table(Arc<[f64]>, Arc<[f64]>),
    Scaled(f64, Box<Profile>),
    Product(Box<Profile>, Box<Profile>),
}

fn gamma(x: f64) -> f64 {
    1.0 / (1.0 + x * x)
}

impl Profile {
    pub fn quadratic_growth() -> Self {
        Profile::QuadraticGrowth { c: 0.01 }
    }

    pub fn constant(c: f64) -> Self {
        Profile::Constant { c }
    }

    pub fn expr(source: &str) -> Result<Self> {
        Ok(Profile::Expr(Arc::new(Expr::parse(source)?)))
    }

    pub fn table(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("profile table needs at least two points"));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid("profile table abscissae must be strictly increasing"));
        }
        Ok(Profile::Table(
            points.iter().map(|p| p.0).collect(),
            points.iter().map(|p| p.1).collect(),
        ))
    }

    pub fn scaled(self, factor: f64) -> Self {
        Profile::Scaled(factor, Box::new(self))
    }

    pub fn times(self, other: Profile) -> Self {
        Profile::Product(Box::new(self), Box::new(other))
    }

    pub fn kind(&self) -> ProfileKind {
        match self {
            Profile::RationalBump => ProfileKind::RationalBump,
            Profile::QuadraticGrowth { .. } => ProfileKind::QuadraticGrowth,
            Profile::Exponential { .. } => ProfileKind::Exponential,
            Profile::GaussianProfile { .. } => ProfileKind::GaussianProfile,
            Profile::TwoPatch => ProfileKind::TwoPatch,
            Profile::Constant { .. } => ProfileKind::Constant,
            Profile::Expr(_) | Profile::Table(..) | Profile::Scaled(..) | Profile::Product(..) => ProfileKind::Custom,
        }
    }

    /// Evaluates without domain checks; tables extrapolate linearly.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::RationalBump => gamma(x),
            Profile::QuadraticGrowth { c } => 1.0 + c * x * x,
            Profile::Exponential { a } => (a * x).exp(),
            Profile::GaussianProfile { a } => (-a * x * x).exp(),
            Profile::TwoPatch => gamma(x + 5.0) + 2.0 * gamma(x - 5.0),
            Profile::Constant { c } => *c,
            Profile::Expr(e) => e.eval(x),
            Profile::Table(xs, ys) => {
                let n = xs.len();
                let i = xs.partition_point(|&t| t <= x).clamp(1, n - 1) - 1;
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                ys[i] + t * (ys[i + 1] - ys[i])
            }
            Profile::Scaled(f, p) => f * p.eval(x),
            Profile::Product(p, q) => p.eval(x) * q.eval(x),
        }
    }

    /// Evaluates, failing outside the domain of tabulated data.
    pub fn try_eval(&self, x: f64) -> Result<f64> {
        if let Some((lo, hi)) = self.domain() {
            if !(x >= lo && x <= hi) {
                return Err(Error::Domain { x, lo, hi });
            }
        }
        Ok(self.eval(x))
    }

    /// `None` when defined on the whole line.
    pub fn domain(&self) -> Option<(f64, f64)> {
        match self {
            Profile::Table(xs, _) => Some((xs[0], xs[xs.len() - 1])),
            Profile::Scaled(_, p) => p.domain(),
            Profile::Product(p, q) => match (p.domain(), q.domain()) {
                (None, d) | (d, None) => d,
                (Some(a), Some(b)) => Some((a.0.max(b.0), a.1.min(b.1))),
            },
            _ => None,
        }
    }

    /// Whether the profile is given by a formula (no tabulated pieces).
    pub fn is_closed_form(&self) -> bool {
        self.domain().is_none()
    }

    pub fn covers(&self, lo: f64, hi: f64) -> Result<()> {
        match self.domain() {
            Some((a, b)) if lo < a || hi > b => Err(Error::Domain {
                x: if lo < a { lo } else { hi },
                lo: a,
                hi: b,
            }),
            _ => Ok(()),
        }
    }

    /// Checks `0 < inf ≤ sup < ∞` over sample points.
    pub fn check_positive(&self, name: &str, xs: &[f64]) -> Result<()> {
        let mut min = f64::INFINITY;
        let mut finite = true;
        for &x in xs {
            let v = self.try_eval(x)?;
            finite &= v.is_finite();
            min = min.min(v);
        }
        if !(min > 0.0) || !finite {
            return Err(Error::NonpositiveProfile {
                name: name.to_string(),
                min: if finite { min } else { f64::NAN },
            });
        }
        Ok(())
    }

    /// Whether `∫_ℝ m^p dx < ∞`, or `None` when unknown.
    pub fn power_integrable(&self, p: f64) -> Option<bool> {
        match self {
            // both decay like x⁻²
            Profile::RationalBump | Profile::TwoPatch => Some(2.0 * p > 1.0),
            Profile::QuadraticGrowth { c } if *c > 0.0 => Some(2.0 * p < -1.0),
            Profile::Exponential { .. } | Profile::Constant { .. } => Some(false),
            Profile::GaussianProfile { a } => Some(p * a > 0.0),
            Profile::Scaled(_, inner) => inner.power_integrable(p),
            _ => None,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::RationalBump => f.write_str("1/(1+x^2)"),
            Profile::QuadraticGrowth { c } => write!(f, "1+{c}*x^2"),
            Profile::Exponential { a } => write!(f, "exp({a}*x)"),
            Profile::GaussianProfile { a } => write!(f, "exp(-{a}*x^2)"),
            Profile::TwoPatch => f.write_str("1/(1+(x+5)^2)+2/(1+(x-5)^2)"),
            Profile::Constant { c } => write!(f, "{c}"),
            Profile::Expr(e) => write!(f, "{e}"),
            Profile::Table(xs, _) => write!(f, "table[{} points]", xs.len()),
            Profile::Scaled(c, p) => write!(f, "{c}*({p})"),
            Profile::Product(p, q) => write!(f, "({p})*({q})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        assert_eq!(Profile::RationalBump.eval(2.0), 0.2);
        assert_eq!(Profile::quadratic_growth().eval(10.0), 2.0);
        assert!((Profile::Exponential { a: 2f64.ln() / 10.0 }.eval(10.0) - 2.0).abs() < 1e-15);
        assert!((Profile::GaussianProfile { a: 100f64.ln() / 100.0 }.eval(10.0) - 0.01).abs() < 1e-16);
        assert!((Profile::TwoPatch.eval(5.0) - (1.0 / 101.0 + 2.0)).abs() < 1e-15);
        assert_eq!(Profile::constant(3.0).eval(-7.0), 3.0);
    }

    #[test]
    fn expression_matches_builtin() {
        let p = Profile::expr("1/(1+x^2)").unwrap();
        for x in [-3.0, 0.0, 0.5, 9.0] {
            assert_eq!(p.eval(x), Profile::RationalBump.eval(x));
        }
    }

    #[test]
    fn table_domain() {
        let p = Profile::table(&[(-1.0, 1.0), (0.0, 2.0), (1.0, 1.0)]).unwrap();
        assert_eq!(p.try_eval(0.5).unwrap(), 1.5);
        assert!(matches!(p.try_eval(1.5), Err(Error::Domain { .. })));
        assert!(p.covers(-1.0, 1.0).is_ok());
        assert!(p.covers(-2.0, 1.0).is_err());
        assert!(!p.is_closed_form());
    }

    #[test]
    fn positivity_check() {
        let xs: Vec<f64> = (-10..=10).map(f64::from).collect();
        assert!(Profile::RationalBump.check_positive("m", &xs).is_ok());
        let bad = Profile::expr("x").unwrap();
        assert!(matches!(
            bad.check_positive("g", &xs),
            Err(Error::NonpositiveProfile { .. })
        ));
    }

    #[test]
    fn integrability_flags() {
        assert_eq!(Profile::RationalBump.power_integrable(1.0), Some(true));
        assert_eq!(Profile::RationalBump.power_integrable(-1.0), Some(false));
        assert_eq!(Profile::quadratic_growth().power_integrable(-1.0), Some(true));
        assert_eq!(Profile::GaussianProfile { a: 0.1 }.power_integrable(-0.5), Some(false));
    }

    proptest! {
        #[test]
        fn builtins_are_positive(x in -50.0f64..50.0) {
            for p in [
                Profile::RationalBump,
                Profile::quadratic_growth(),
                Profile::Exponential { a: 0.069 },
                Profile::GaussianProfile { a: 0.046 },
                Profile::TwoPatch,
            ] {
                prop_assert!(p.eval(x) > 0.0);
            }
        }
    }
}
