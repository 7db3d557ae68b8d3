use serde::Serialize;

use crate::error::{Error, Result};

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(r: f64) -> Result<Self> {
        Self::new(-r, r)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Uniform nodes `x₀ = lo, …, x_{M−1} = hi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid1D {
    lo: f64,
    hi: f64,
    h: f64,
    #[serde(skip)]
    nodes: Vec<f64>,
}

impl Grid1D {
    /// `M` nodes on `[−R, R]`.
    pub fn new(r: f64, m: usize) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::invalid(format!("half-width R = {r} must be positive")));
        }
        Self::spanning(-r, r, m)
    }

    pub fn spanning(lo: f64, hi: f64, m: usize) -> Result<Self> {
        Interval::new(lo, hi)?;
        if m < 3 {
            return Err(Error::invalid(format!("grid needs at least 3 nodes, got {m}")));
        }
        let span = hi - lo;
        let last = (m - 1) as f64;
        let mut nodes: Vec<f64> = (0..m).map(|i| lo + span * (i as f64 / last)).collect();
        nodes[m - 1] = hi;
        Ok(Self {
            lo,
            hi,
            h: span / last,
            nodes,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Half-width of a symmetric grid.
    pub fn radius(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn interval(&self) -> Interval {
        Interval {
            lo: self.lo,
            hi: self.hi,
        }
    }

    /// Quadrature weight of every node (rectangle rule).
    pub fn weight(&self) -> f64 {
        self.h
    }

    pub fn mass(&self, u: &[f64]) -> f64 {
        self.h * u.iter().sum::<f64>()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let t = ((x - self.lo) / self.h).round();
        t.clamp(0.0, (self.len() - 1) as f64) as usize
    }

    /// Grid with every cell halved.
    pub fn refined(&self) -> Self {
        Self::spanning(self.lo, self.hi, 2 * self.len() - 1).expect("refining a valid grid")
    }
}
