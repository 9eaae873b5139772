//! Uniform periodic grids in one to three dimensions.
//!
//! States are cell-centered. Cell `k` owns the face between `k` and
//! `k + e_a` on every axis `a`; face arrays are laid out axis-major,
//! `face[a * cells + k]`. Cells are numbered row-major with axis 0 slowest,
//! unused axes have extent 1.


use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeriodicGrid {
    dim: usize,
    cells: [usize; 3],
    lengths: [f64; 3],
    spacing: [f64; 3],
}

impl PeriodicGrid {
    /// `cells` and `lengths` give the extent of each used axis.
    pub fn new(cells: &[usize], lengths: &[f64]) -> Result<Self> {
        let dim = cells.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid("dimension must be 1, 2 or 3"));
        }
        if lengths.len() != dim {
            return Err(Error::InvalidGrid("one length per axis required"));
        }
        let mut c = [1usize; 3];
        let mut l = [1.0f64; 3];
        let mut h = [1.0f64; 3];
        for a in 0..dim {
            if cells[a] < 3 {
                return Err(Error::InvalidGrid("at least three cells per axis"));
            }
            if !(lengths[a] > 0.0 && lengths[a].is_finite()) {
                return Err(Error::InvalidGrid("axis length must be positive"));
            }
            c[a] = cells[a];
            l[a] = lengths[a];
            h[a] = lengths[a] / cells[a] as f64;
        }
        Ok(Self { dim, cells: c, lengths: l, spacing: h })
    }

    /// `n` cells on `[0, 1)`.
    pub fn unit_1d(n: usize) -> Result<Self> {
        Self::new(&[n], &[1.0])
    }

    /// `n x n` cells on `[0, 1)^2`.
    pub fn unit_2d(n: usize) -> Result<Self> {
        Self::new(&[n, n], &[1.0, 1.0])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis; unused axes report 1.
    #[inline]
    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1] * self.cells[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    #[inline]
    pub fn length(&self, axis: usize) -> f64 {
        self.lengths[axis]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing[..self.dim].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn measure(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] * self.cells[1] + ijk[1]) * self.cells[2] + ijk[2]
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.cells[2];
        let rest = idx / self.cells[2];
        [rest / self.cells[1], rest % self.cells[1], k]
    }

    /// Neighbor of `idx` shifted by `offset` cells along `axis`, wrapped exactly.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let mut ijk = self.coords(idx);
        let n = self.cells[axis] as isize;
        ijk[axis] = (ijk[axis] as isize + offset).rem_euclid(n) as usize;
        self.index(ijk)
    }

    /// Stride of `axis` in the linear numbering.
    #[inline]
    fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => self.cells[1] * self.cells[2],
            1 => self.cells[2],
            _ => 1,
        }
    }

    /// Index of the neighbor one cell up (`up = true`) or down along `axis`,
    /// without decoding coordinates.
    #[inline]
    pub fn step(&self, idx: usize, axis: usize, up: bool) -> usize {
        let s = self.stride(axis);
        let n = self.cells[axis];
        let pos = (idx / s) % n;
        if up {
            if pos + 1 == n { idx + s - n * s } else { idx + s }
        } else if pos == 0 {
            idx + (n - 1) * s
        } else {
            idx - s
        }
    }

    /// Cell-center coordinates of `idx`; only the first `dim` entries are meaningful.
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let ijk = self.coords(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (ijk[a] as f64 + 0.5) * self.spacing[a];
        }
        x
    }

    /// `true` when both grids have identical shape and spacing.
    pub fn same_as(&self, other: &Self) -> bool {
        self == other
    }

    /// A grid with every axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let cells: [usize; 3] = core::array::from_fn(|a| self.cells[a] * factor);
        Self::new(&cells[..self.dim], &self.lengths[..self.dim])
    }
}

/// Second-order central gradient, `out[a * cells + k]`.
pub fn gradient(field: &[f64], grid: &PeriodicGrid, out: &mut [f64]) {
    let m = grid.len();
    debug_assert_eq!(field.len(), m);
    debug_assert_eq!(out.len(), grid.dim() * m);
    for a in 0..grid.dim() {
        let inv = 0.5 / grid.spacing(a);
        for k in 0..m {
            out[a * m + k] = (field[grid.step(k, a, true)] - field[grid.step(k, a, false)]) * inv;
        }
    }
}

/// Forward difference onto the faces owned by each cell, `out[a * cells + k]`.
pub fn face_gradient(field: &[f64], grid: &PeriodicGrid, out: &mut [f64]) {
    let m = grid.len();
    for a in 0..grid.dim() {
        let inv = 1.0 / grid.spacing(a);
        for k in 0..m {
            out[a * m + k] = (field[grid.step(k, a, true)] - field[k]) * inv;
        }
    }
}

/// Conservative divergence of face fluxes laid out as by [`face_gradient`].
pub fn divergence(face_flux: &[f64], grid: &PeriodicGrid, out: &mut [f64]) {
    let m = grid.len();
    debug_assert_eq!(face_flux.len(), grid.dim() * m);
    out[..m].fill(0.0);
    for a in 0..grid.dim() {
        let inv = 1.0 / grid.spacing(a);
        let f = &face_flux[a * m..(a + 1) * m];
        for k in 0..m {
            out[k] += (f[k] - f[grid.step(k, a, false)]) * inv;
        }
    }
}

/// Midpoint quadrature over the torus.
pub fn integrate(field: &[f64], grid: &PeriodicGrid) -> f64 {
    pairwise_sum(field) * grid.cell_volume()
}

/// Discrete `L^2` inner product.
pub fn inner(a: &[f64], b: &[f64], grid: &PeriodicGrid) -> f64 {
    pairwise_sum_by(a.len(), |k| a[k] * b[k]) * grid.cell_volume()
}

const PAIRWISE_BLOCK: usize = 32;

/// Deterministic tree summation; the result depends only on the input order.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    pairwise_sum_by(x.len(), |k| x[k])
}

/// Tree summation of `f(0) + ... + f(len - 1)`.
pub fn pairwise_sum_by(len: usize, f: impl Fn(usize) -> f64 + Copy) -> f64 {
    fn rec(lo: usize, hi: usize, f: impl Fn(usize) -> f64 + Copy) -> f64 {
        if hi - lo <= PAIRWISE_BLOCK {
            let mut s = 0.0;
            for k in lo..hi {
                s += f(k);
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, len, f)
}
