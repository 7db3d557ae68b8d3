//! The bounded-domain nonlocal generator as a dense matrix.
//!
//! On a uniform grid with weight `w = h` the generator reads
//!
//! ```text
//! (Lu)ᵢ = Σⱼ gainᵢⱼ uⱼ − outrateᵢ uᵢ,   gainᵢⱼ = w J(xⱼ, xᵢ)
//! ```
//!
//! and jumps that would leave the domain are simply not counted. `outrate` is
//! formed as the column sums of the stored `gain`, so `Σᵢ (Lu)ᵢ = 0` holds as
//! an algebraic identity and mass is conserved to rounding.

use std::collections::VecDeque;

use log::debug;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::jumpmodel::JumpRateModel;
use crate::timestep::{Generator, Scheme};

/// Largest grid accepted for dense assembly.
pub const MAX_NODES: usize = 4001;

#[derive(Debug, Clone)]
pub struct NonlocalOperator {
    grid: Grid1D,
    gain: Vec<f64>,
    outrate: Vec<f64>,
    // nonzero column range [start, end) of each gain row
    bands: Vec<(usize, usize)>,
    max_outrate: f64,
}

/// Assembles the dense generator of `model` on `grid`.
pub fn assemble(model: &JumpRateModel, grid: &Grid1D) -> Result<NonlocalOperator> {
    let n = grid.len();
    if n > MAX_NODES {
        return Err(Error::Allocation {
            nodes: n,
            max: MAX_NODES,
        });
    }
    model.validate_on(grid.interval(), grid.nodes())?;
    let x = grid.nodes();
    let w = grid.weight();
    let mut gain = vec![0.0; n * n];
    gain.par_chunks_mut(n).with_min_len(8).enumerate().for_each(|(i, row)| {
        let xi = x[i];
        for (j, g) in row.iter_mut().enumerate() {
            *g = w * model.rate(x[j], xi);
        }
    });
    if let Some(bad) = gain.iter().position(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::invalid(format!(
            "jump rate J({}, {}) = {} is not a finite nonnegative number",
            x[bad % n],
            x[bad / n],
            gain[bad] / w
        )));
    }
    let mut outrate = vec![0.0; n];
    for row in gain.chunks_exact(n) {
        for (o, g) in outrate.iter_mut().zip(row) {
            *o += g;
        }
    }
    let bands = gain
        .chunks_exact(n)
        .map(|row| match row.iter().position(|&g| g != 0.0) {
            None => (0, 0),
            Some(s) => (s, n - row.iter().rev().position(|&g| g != 0.0).unwrap_or(0)),
        })
        .collect();
    let max_outrate = outrate.iter().copied().fold(0.0, f64::max);
    Ok(NonlocalOperator {
        grid: grid.clone(),
        gain,
        outrate,
        bands,
        max_outrate,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

impl NonlocalOperator {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.gain[i * self.grid.len() + j]
    }

    pub fn gain_row(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.gain[i * n..(i + 1) * n]
    }

    pub fn outrate(&self) -> &[f64] {
        &self.outrate
    }

    pub fn max_outrate(&self) -> f64 {
        self.max_outrate
    }

    /// Default step `0.5 / max(outrate)`.
    pub fn default_dt(&self) -> f64 {
        0.5 / self.max_outrate
    }

    pub fn apply_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.apply(u, &mut out);
        out
    }

    /// `‖Lu‖∞`.
    pub fn residual(&self, u: &[f64]) -> f64 {
        self.apply_vec(u).iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Checks that every node reaches and is reached from node 0.
    pub fn check_irreducible(&self) -> Result<()> {
        let n = self.grid.len();
        // forward: j → i whenever gain[i][j] > 0
        for forward in [true, false] {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(k) = queue.pop_front() {
                for other in 0..n {
                    let g = if forward { self.gain(other, k) } else { self.gain(k, other) };
                    if g > 0.0 && !seen[other] {
                        seen[other] = true;
                        queue.push_back(other);
                    }
                }
            }
            if let Some(node) = seen.iter().position(|s| !s) {
                return Err(Error::ReducibleOperator { node });
            }
        }
        Ok(())
    }

    /// Dense `L` as an nalgebra matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let mut m = DMatrix::from_row_slice(n, n, &self.gain);
        for i in 0..n {
            m[(i, i)] -= self.outrate[i];
        }
        m
    }
}

impl Generator for NonlocalOperator {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.grid.len();
        out.par_iter_mut().with_min_len(32).enumerate().for_each(|(i, o)| {
            let (s, e) = self.bands[i];
            let row = &self.gain[i * n + s..i * n + e];
            *o = dot(row, &u[s..e]) - self.outrate[i] * u[i];
        });
    }

    fn max_dt(&self, scheme: Scheme) -> f64 {
        scheme.stability_number() / self.max_outrate
    }

    fn weight(&self) -> f64 {
        self.grid.weight()
    }
}

/// Solves `Lu = 0` with `w Σ u = mass`.
///
/// Uses shifted inverse iteration `u ← (I − τL)⁻¹ u` with a large shift `τ`,
/// which drives every non-null mode down by at least `1 / (1 + τ |λ₂|)` per
/// sweep.
pub fn solve_steady(op: &NonlocalOperator, mass: f64) -> Result<Vec<f64>> {
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::invalid(format!("mass {mass} must be positive")));
    }
    op.check_irreducible()?;
    let n = op.grid.len();
    let w = op.weight();
    let scale = op.max_outrate.max(1.0);
    let tau = 1e8 / op.max_outrate;
    let mut a = -op.to_matrix() * tau;
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let lu = a.lu();
    let mut u = nalgebra::DVector::from_element(n, mass / (w * n as f64));
    let mut residual = f64::INFINITY;
    const MAX_ITER: usize = 100;
    for it in 0..MAX_ITER {
        let v = lu.solve(&u).ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
        let total = w * v.sum();
        u = v * (mass / total);
        let us = u.as_slice();
        let norm = us.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        residual = op.residual(us);
        debug!("steady iteration {it}: residual {residual:e}");
        if residual <= 1e-12 * scale * norm {
            let mut out = us.to_vec();
            // rounding may leave entries at -tiny where the true vector is ~0
            for v in &mut out {
                if *v < 0.0 && *v > -1e-14 * norm {
                    *v = 0.0;
                }
            }
            return Ok(out);
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::DispersalKernel;
    use crate::profile::Profile;
    use crate::timestep::{evolve, step};
    use proptest::prelude::*;

    fn grid() -> Grid1D {
        Grid1D::new(10.0, 201).unwrap()
    }

    fn single(alpha: f64, m: Profile) -> NonlocalOperator {
        let model = JumpRateModel::single_factor(DispersalKernel::gaussian(), alpha, m).unwrap();
        assemble(&model, &grid()).unwrap()
    }

    fn sup_rel(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    #[test]
    fn symmetric_cases_have_symmetric_gain() {
        let h = assemble(&JumpRateModel::homogeneous(DispersalKernel::gaussian()), &grid()).unwrap();
        let s = single(0.5, Profile::TwoPatch);
        for op in [h, s] {
            for i in 0..201 {
                for j in 0..201 {
                    assert_eq!(op.gain(i, j), op.gain(j, i));
                }
            }
        }
    }

    #[test]
    fn outrate_is_column_sum() {
        let op = single(0.3, Profile::RationalBump);
        for j in 0..201 {
            let col: f64 = (0..201).map(|i| op.gain(i, j)).sum();
            assert_eq!(col, op.outrate()[j]);
        }
    }

    #[test]
    fn constants_are_stationary_at_midpoint() {
        let op = single(0.5, Profile::RationalBump);
        let u = vec![0.2; 201];
        let next = step(&op, &u, op.default_dt(), Scheme::Rk4).unwrap();
        assert!(sup_rel(&next, &u) < 1e-14);
    }

    #[test]
    fn second_moment_grows_linearly_before_boundary() {
        // d/dt ∫x²u = k ∫u for the homogeneous operator away from the edges
        let g = Grid1D::new(30.0, 1201).unwrap();
        let op = assemble(&JumpRateModel::homogeneous(DispersalKernel::gaussian()), &g).unwrap();
        let mut u0 = vec![0.0; g.len()];
        u0[600] = 1.0 / g.h();
        let tr = evolve(&op, &u0, 4.0, op.default_dt(), Scheme::Rk4, &[2.0]).unwrap();
        let m2 = |u: &[f64]| g.h() * g.nodes().iter().zip(u).map(|(x, v)| x * x * v).sum::<f64>();
        let k = std::f64::consts::PI / 2.0;
        // the rectangle rule carries the discrete second moment of K₁
        let kd: f64 = g.nodes().iter().map(|x| g.h() * x * x * DispersalKernel::gaussian().density(*x)).sum();
        assert!((kd - k).abs() < 1e-10);
        assert!((m2(&tr.states[0]) - 2.0 * k).abs() < 1e-8);
        assert!((m2(tr.final_state()) - 4.0 * k).abs() < 1e-8);
    }

    #[test]
    fn steady_state_of_arrival_deciding_factor_is_m() {
        let op = single(0.0, Profile::RationalBump);
        let g = grid();
        let m = g.sample(|x| Profile::RationalBump.eval(x));
        let c = 4.0 / g.mass(&m);
        let p: Vec<f64> = m.iter().map(|v| c * v).collect();
        assert!(op.residual(&p) < 1e-15);
        let u = solve_steady(&op, 4.0).unwrap();
        assert!(sup_rel(&u, &p) < 1e-8);
        assert!((g.mass(&u) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn steady_state_at_midpoint_is_constant() {
        let op = single(0.5, Profile::TwoPatch);
        let u = solve_steady(&op, 2.0).unwrap();
        let c = 2.0 / (grid().h() * 201.0);
        assert!(u.iter().all(|v| (v - c).abs() < 1e-10 * c));
    }

    #[test]
    fn steady_state_for_exponential_m() {
        let a = 2f64.ln() / 10.0;
        let g = grid();
        for alpha in [0.0, 0.25, 0.6, 1.0] {
            let op = single(alpha, Profile::Exponential { a });
            let u = solve_steady(&op, 1.0).unwrap();
            let p = g.sample(|x| ((1.0 - 2.0 * alpha) * a * x).exp());
            let c = 1.0 / g.mass(&p);
            let p: Vec<f64> = p.iter().map(|v| c * v).collect();
            assert!(sup_rel(&u, &p) < 1e-6, "alpha {alpha}");
        }
    }

    #[test]
    fn reducible_support_is_detected() {
        let t = DispersalKernel::from_table(&[(0.0, 1.0), (0.5, 0.0)]).unwrap();
        let model = JumpRateModel::homogeneous(t);
        let op = assemble(&model, &Grid1D::new(100.0, 11).unwrap()).unwrap();
        assert!(matches!(solve_steady(&op, 1.0), Err(Error::ReducibleOperator { .. })));
    }

    #[test]
    fn oversized_grid_is_refused() {
        let model = JumpRateModel::homogeneous(DispersalKernel::laplace());
        let g = Grid1D::new(10.0, MAX_NODES + 1).unwrap();
        assert!(matches!(assemble(&model, &g), Err(Error::Allocation { .. })));
    }

    #[test]
    fn refinement_is_at_least_second_order() {
        let u0 = |x: f64| (-(x * x) / 4.0).exp();
        let run = |m: usize| {
            // the Laplace cusp sets the quadrature order; R is wide enough that the
            // solution is negligible at the ends
            let g = Grid1D::new(20.0, m).unwrap();
            let model = JumpRateModel::single_factor(DispersalKernel::laplace(), 0.25, Profile::RationalBump).unwrap();
            let op = assemble(&model, &g).unwrap();
            let tr = evolve(&op, &g.sample(u0), 5.0, 0.2 * op.default_dt(), Scheme::Rk4, &[]).unwrap();
            tr.final_state().to_vec()
        };
        let (c, f, ff) = (run(101), run(201), run(401));
        let e1 = (0..101).fold(0.0f64, |m, i| m.max((c[i] - f[2 * i]).abs()));
        let e2 = (0..201).fold(0.0f64, |m, i| m.max((f[i] - ff[2 * i]).abs()));
        let ratio = e1 / e2;
        // the cusp errors of gain and outrate cancel at leading order, so the
        // observed ratio is close to 16
        assert!(ratio > 3.5, "ratio {ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn euler_conserves_mass_and_sign(alpha in 0.0f64..1.0, seed in 0u64..1000) {
            let g = Grid1D::new(5.0, 41).unwrap();
            let model = JumpRateModel::single_factor(DispersalKernel::laplace(), alpha, Profile::TwoPatch).unwrap();
            let op = assemble(&model, &g).unwrap();
            let mut u: Vec<f64> = (0..41).map(|i| ((i as u64 * 2654435761 + seed) % 97) as f64).collect();
            u[0] += 1.0;
            let m0 = g.mass(&u);
            let dt = 0.9 / op.max_outrate();
            for _ in 0..2000 {
                u = step(&op, &u, dt, Scheme::Euler).unwrap();
                prop_assert!(u.iter().all(|v| *v >= 0.0));
            }
            prop_assert!((g.mass(&u) - m0).abs() <= 1e-12 * m0);
        }
    }
}
