//! Concentration and flux fields on a periodic grid.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{self, PeriodicGrid};
use crate::msflux::{DiffusionMatrix, FluxSolver, SIMPLEX_TOL};

/// Per-species concentrations, stored species-major: `data[i * cells + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationState {
    grid: PeriodicGrid,
    n: usize,
    data: Vec<f64>,
    time: f64,
}

impl ConcentrationState {
    /// Validates `0 <= c_i <= 1` and `sum_i c_i = 1` in every cell.
    pub fn new(grid: PeriodicGrid, n: usize, data: Vec<f64>, time: f64) -> Result<Self> {
        let s = Self::from_raw(grid, n, data, time)?;
        s.validate()?;
        Ok(s)
    }

    /// Checks only the shape; used for intermediate stages and file input.
    pub fn from_raw(grid: PeriodicGrid, n: usize, data: Vec<f64>, time: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: n });
        }
        if data.len() != n * grid.len() {
            return Err(Error::DimensionMismatch { expected: n * grid.len(), found: data.len() });
        }
        Ok(Self { grid, n, data, time })
    }

    /// Samples `f(x, c)` at every cell center.
    pub fn from_fn(
        grid: PeriodicGrid,
        n: usize,
        time: f64,
        mut f: impl FnMut(&[f64], &mut [f64]),
    ) -> Result<Self> {
        let m = grid.len();
        let mut data = vec![0.0; n * m];
        let mut c = vec![0.0; n];
        for k in 0..m {
            let x = grid.center(k);
            f(&x[..grid.dim()], &mut c);
            for i in 0..n {
                data[i * m + k] = c[i];
            }
        }
        Self::new(grid, n, data, time)
    }

    pub fn uniform(grid: PeriodicGrid, c: &[f64]) -> Result<Self> {
        Self::from_fn(grid, c.len(), 0.0, |_, out| out.copy_from_slice(c))
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.grid.len();
        for &x in &self.data {
            if !x.is_finite() || x < -SIMPLEX_TOL || x > 1.0 + SIMPLEX_TOL {
                return Err(Error::InvalidComposition { reason: "entry outside [0, 1]", defect: x });
            }
        }
        for k in 0..m {
            let s: f64 = (0..self.n).map(|i| self.data[i * m + k]).sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidComposition { reason: "entries do not sum to one", defect: s - 1.0 });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }
    #[inline]
    pub fn species_count(&self) -> usize {
        self.n
    }
    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn species(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn species_mut(&mut self, i: usize) -> &mut [f64] {
        let m = self.grid.len();
        &mut self.data[i * m..(i + 1) * m]
    }

    /// Copies the composition of cell `k` into `out`.
    #[inline]
    pub fn composition_at(&self, k: usize, out: &mut [f64]) {
        let m = self.grid.len();
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.data[i * m + k];
        }
    }

    /// `int c_i dx`.
    pub fn mass(&self, i: usize) -> f64 {
        grid::integrate(self.species(i), &self.grid)
    }

    pub fn masses(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.mass(i)).collect()
    }

    /// `max_k |sum_i c_i(k) - 1|`.
    pub fn simplex_defect(&self) -> f64 {
        let m = self.grid.len();
        (0..m)
            .map(|k| ((0..self.n).map(|i| self.data[i * m + k]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn ensure_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid.same_as(&other.grid) && self.n == other.n {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Cell-centered molar fluxes: `data[(i * dim + a) * cells + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    grid: PeriodicGrid,
    n: usize,
    data: Vec<f64>,
}

impl FluxField {
    pub fn zeros(grid: PeriodicGrid, n: usize) -> Self {
        let len = n * grid.dim() * grid.len();
        Self { grid, n, data: vec![0.0; len] }
    }

    pub fn from_raw(grid: PeriodicGrid, n: usize, data: Vec<f64>) -> Result<Self> {
        let len = n * grid.dim() * grid.len();
        if data.len() != len {
            return Err(Error::DimensionMismatch { expected: len, found: data.len() });
        }
        Ok(Self { grid, n, data })
    }

    /// Solves the force-flux system in every cell with central-difference
    /// gradients. Gradients are projected to zero sum and compositions
    /// renormalized before each solve, which absorbs rounding in the state.
    pub fn cell_centered(state: &ConcentrationState, diff: &DiffusionMatrix, solver: &mut FluxSolver) -> Result<Self> {
        let grid = state.grid().clone();
        let (n, dim, m) = (state.species_count(), grid.dim(), grid.len());
        let mut grad = vec![0.0; n * dim * m];
        for i in 0..n {
            grid::gradient(state.species(i), &grid, &mut grad[i * dim * m..(i + 1) * dim * m]);
        }
        let mut data = vec![0.0; n * dim * m];
        let mut c = vec![0.0; n];
        let mut g = vec![0.0; n * dim];
        let mut j = vec![0.0; n * dim];
        for k in 0..m {
            state.composition_at(k, &mut c);
            let s: f64 = c.iter().sum();
            c.iter_mut().for_each(|x| *x /= s);
            for a in 0..dim {
                let mut mean = 0.0;
                for i in 0..n {
                    g[i * dim + a] = grad[(i * dim + a) * m + k];
                    mean += g[i * dim + a];
                }
                mean /= n as f64;
                for i in 0..n {
                    g[i * dim + a] -= mean;
                }
            }
            solver.solve_into(&c, &g, dim, diff, &mut j)?;
            for i in 0..n {
                for a in 0..dim {
                    data[(i * dim + a) * m + k] = j[i * dim + a];
                }
            }
        }
        Ok(Self { grid, n, data })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }
    pub fn species_count(&self) -> usize {
        self.n
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Component `a` of species `i` over all cells.
    #[inline]
    pub fn component(&self, i: usize, a: usize) -> &[f64] {
        let m = self.grid.len();
        let dim = self.grid.dim();
        &self.data[(i * dim + a) * m..(i * dim + a + 1) * m]
    }

    /// Copies `J` at cell `k` into `out[i * dim + a]`.
    #[inline]
    pub fn flux_at(&self, k: usize, out: &mut [f64]) {
        let m = self.grid.len();
        for (ia, o) in out.iter_mut().enumerate().take(self.n * self.grid.dim()) {
            *o = self.data[ia * m + k];
        }
    }

    /// Largest Euclidean flux norm over species and cells.
    pub fn max_norm(&self) -> f64 {
        let (m, dim) = (self.grid.len(), self.grid.dim());
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for k in 0..m {
                let s: f64 = (0..dim).map(|a| self.data[(i * dim + a) * m + k].powi(2)).sum();
                worst = worst.max(s.sqrt());
            }
        }
        worst
    }

    /// `max_{k, a} |sum_i J_i|`.
    pub fn constraint_defect(&self) -> f64 {
        let (m, dim) = (self.grid.len(), self.grid.dim());
        let mut worst: f64 = 0.0;
        for a in 0..dim {
            for k in 0..m {
                let s: f64 = (0..self.n).map(|i| self.data[(i * dim + a) * m + k]).sum();
                worst = worst.max(s.abs());
            }
        }
        worst
    }
}

/// A state together with its cell-centered fluxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub state: ConcentrationState,
    pub flux: FluxField,
}

impl Snapshot {
    pub fn time(&self) -> f64 {
        self.state.time()
    }
}
