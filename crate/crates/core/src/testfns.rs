//! Seeded families of random test functions.
//!
//! Smooth fields are truncated sine (Dirichlet) or cosine (Neumann) series
//! defined on `[0, 1]` independently of the grid, so that the same function
//! can be sampled at several resolutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficients::BoundaryKind;
use crate::grid::Grid;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent seed for item `index` of a family driven by `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(index);
    r.gen()
}

/// A truncated trigonometric series compatible with the boundary condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSeries {
    /// Coefficient of mode `k` at index `k - 1` (sine) or `k` (cosine).
    pub coeffs: Vec<f64>,
    pub bc: BoundaryKind,
}

impl TrigSeries {
    /// Random coefficients decaying like `1/k` over `modes` modes.
    pub fn random(rng: &mut TestRng, bc: BoundaryKind, modes: usize) -> Self {
        let coeffs = (0..modes.max(1))
            .map(|k| rng.gen_range(-1.0..1.0) / (k as f64 + 1.0))
            .collect();
        TrigSeries { coeffs, bc }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pi = std::f64::consts::PI;
        match self.bc {
            BoundaryKind::Dirichlet => self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * ((k + 1) as f64 * pi * x).sin())
                .sum(),
            BoundaryKind::Neumann => self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * (k as f64 * pi * x).cos())
                .sum(),
        }
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        grid.nodes().iter().map(|&x| self.eval(x)).collect()
    }
}

/// Smooth random field with up to eight modes.
pub fn random_smooth(grid: &Grid, bc: BoundaryKind, rng: &mut TestRng) -> Vec<f64> {
    let modes = rng.gen_range(1..=8);
    TrigSeries::random(rng, bc, modes).sample(grid)
}

/// Independent uniform values at every node.
pub fn random_nodal(grid: &Grid, rng: &mut TestRng) -> Vec<f64> {
    (0..grid.cells())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect()
}

/// Alternates smooth and rough fields: even `index` smooth, odd nodal.
pub fn random_mixed(grid: &Grid, bc: BoundaryKind, rng: &mut TestRng, index: usize) -> Vec<f64> {
    if index % 2 == 0 {
        random_smooth(grid, bc, rng)
    } else {
        random_nodal(grid, rng)
    }
}

/// Zeroes `field` at the listed nodes.
pub fn zero_at(field: &mut [f64], nodes: &[usize]) {
    for &i in nodes {
        field[i] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn same_seed_same_field() {
        let g = build_grid(32, None).unwrap();
        let a = random_smooth(&g, BoundaryKind::Dirichlet, &mut rng(7));
        let b = random_smooth(&g, BoundaryKind::Dirichlet, &mut rng(7));
        assert_eq!(a, b);
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
    }

    #[test]
    fn series_respects_boundary_condition() {
        let mut r = rng(1);
        let s = TrigSeries::random(&mut r, BoundaryKind::Dirichlet, 5);
        assert!(s.eval(0.0).abs() < 1e-15 && s.eval(1.0).abs() < 1e-12);
        let c = TrigSeries::random(&mut r, BoundaryKind::Neumann, 5);
        let d = |x: f64| (c.eval(x + 1e-6) - c.eval(x - 1e-6)) / 2e-6;
        assert!(d(0.0).abs() < 1e-6 && d(1.0).abs() < 1e-6);
    }
}
