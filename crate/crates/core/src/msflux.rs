//! Pointwise Maxwell-Stefan linear algebra.
//!
//! At a single spatial point the molar fluxes `J_i` solve the force-flux system
//!
//! ```text
//! -sum_{j != i} (c_j J_i - c_i J_j) / D_ij = grad c_i,     sum_i J_i = 0.
//! ```
//!
//! The force-flux matrix has the composition `c` as right kernel and the
//! all-ones vector as left kernel, so the system is consistent exactly when the
//! gradients sum to zero and the flux constraint picks the unique solution.
//! [`FluxSolver`] appends the constraint row and solves the bordered
//! `(n+1) x n` system by Householder least squares.
//!
//! With a shift `delta > 0` the variables `d_i = c_i + delta` and
//! `v_i = J_i / d_i` satisfy `2 grad sqrt(d_i) = -sum_j (A + delta B)_ij sqrt(d_j) v_j`
//! where `A(d)` is the symmetric friction matrix and `B(d)` its perturbation.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{self, householder_lstsq};

/// Tolerance for algebraic identities (kernel, projections, scaling).
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Force-flux residual accepted from a solve.
pub const SOLVE_TOL: f64 = 1e-10;
/// Maximum admissible `|sum_i grad c_i|`.
pub const CONSISTENCY_TOL: f64 = 1e-10;
/// Simplex defect accepted for a composition.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Concentrations at or below this value carry no velocity.
pub const VELOCITY_THRESHOLD: f64 = 1e-14;

/// Symmetric pairwise diffusion coefficients `D_ij`, `i != j`.
///
/// Diagonal entries are never read. The reciprocals and the constants
/// `mu = min 1/D_ij`, `M = max 1/D_ij` are computed once on construction.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiffusionMatrix {
    n: usize,
    coeff: Vec<f64>,
    inv: Vec<f64>,
    mu: f64,
    big_m: f64,
}

impl DiffusionMatrix {
    /// Builds the matrix from `f(i, j)` evaluated for `i < j`.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: n });
        }
        let mut coeff = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::InvalidDiffusion { i, j, reason: "must be positive and finite" });
                }
                coeff[i * n + j] = v;
                coeff[j * n + i] = v;
            }
        }
        Ok(Self::from_checked(n, coeff))
    }

    /// Builds the matrix from a dense `n x n` row-major array, requiring
    /// `D_ij = D_ji` to relative precision `1e-12`.
    pub fn from_dense(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: entries.len() });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                    return Err(Error::InvalidDiffusion { i, j, reason: "symmetry" });
                }
                if !a.is_finite() || a <= 0.0 {
                    return Err(Error::InvalidDiffusion { i, j, reason: "must be positive and finite" });
                }
            }
        }
        Self::from_fn(n, |i, j| entries[i * n + j])
    }

    pub fn uniform(n: usize, d: f64) -> Result<Self> {
        Self::from_fn(n, |_, _| d)
    }

    fn from_checked(n: usize, coeff: Vec<f64>) -> Self {
        let mut inv = vec![0.0; n * n];
        let mut mu = f64::INFINITY;
        let mut big_m: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let r = 1.0 / coeff[i * n + j];
                    inv[i * n + j] = r;
                    mu = mu.min(r);
                    big_m = big_m.max(r);
                }
            }
        }
        Self { n, coeff, inv, mu, big_m }
    }

    #[inline]
    pub fn species(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        self.coeff[i * self.n + j]
    }

    /// `1 / D_ij`, zero on the diagonal.
    #[inline]
    pub fn inverse(&self, i: usize, j: usize) -> f64 {
        self.inv[i * self.n + j]
    }

    /// `mu = min_{i != j} 1/D_ij`.
    #[inline]
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `M = max_{i != j} 1/D_ij`.
    #[inline]
    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    /// Largest diffusion coefficient, `1 / mu`.
    pub fn max_coefficient(&self) -> f64 {
        1.0 / self.mu
    }
}

/// A composition on the simplex with an optional shift `delta >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointComposition {
    c: Vec<f64>,
    delta: f64,
}

impl PointComposition {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        Self::with_shift(c, 0.0)
    }

    pub fn with_shift(c: Vec<f64>, delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::DeltaNonpositive(delta));
        }
        validate_simplex(&c)?;
        Ok(Self { c, delta })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `d_i = c_i + delta`.
    pub fn shifted(&self) -> Vec<f64> {
        self.c.iter().map(|c| c + self.delta).collect()
    }

    /// `sum_i d_i`, equal to `1 + n delta` by construction.
    pub fn shifted_total(&self) -> f64 {
        1.0 + self.n() as f64 * self.delta
    }
}

pub(crate) fn validate_simplex(c: &[f64]) -> Result<()> {
    if c.len() < 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: c.len() });
    }
    for &x in c {
        if !x.is_finite() || x < -SIMPLEX_TOL || x > 1.0 + SIMPLEX_TOL {
            return Err(Error::InvalidComposition { reason: "entry outside [0, 1]", defect: x });
        }
    }
    let s: f64 = c.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidComposition { reason: "entries do not sum to one", defect: s - 1.0 });
    }
    Ok(())
}

/// Writes the symmetric friction matrix `A(d)` into `out` (`n x n`).
///
/// `A_ii = sum_{k != i} d_k / D_ik`, `A_ij = -sqrt(d_i d_j) / D_ij`.
pub fn friction_matrix(d: &[f64], diff: &DiffusionMatrix, out: &mut [f64]) {
    let n = d.len();
    for i in 0..n {
        let mut diag = 0.0;
        for k in 0..n {
            if k != i {
                diag += d[k] * diff.inverse(i, k);
                out[i * n + k] = -(d[i] * d[k]).sqrt() * diff.inverse(i, k);
            }
        }
        out[i * n + i] = diag;
    }
}

/// Writes the non-symmetric perturbation matrix `B(d)` into `out` (`n x n`).
///
/// `B_ii = -sum_{k != i} 1 / D_ik`, `B_ij = sqrt(d_j) / (D_ij sqrt(d_i))`.
pub fn perturbation_matrix(d: &[f64], diff: &DiffusionMatrix, out: &mut [f64]) {
    let n = d.len();
    for i in 0..n {
        let mut diag = 0.0;
        for k in 0..n {
            if k != i {
                diag -= diff.inverse(i, k);
                out[i * n + k] = (d[k] / d[i]).sqrt() * diff.inverse(i, k);
            }
        }
        out[i * n + i] = diag;
    }
}

/// The matrices of the shifted friction system at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MsOperator {
    n: usize,
    delta: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    p_l: Vec<f64>,
    p_lperp: Vec<f64>,
    mu: f64,
    sqrt_d: Vec<f64>,
}

/// Outcome of testing `z^T A z >= (1 + n delta) mu |P_L z|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Assembles `A(d)`, `B(d)` and the projections onto `L(d) = {x : sqrt(d) . x = 0}`
/// and its complement.
pub fn assemble_operator(comp: &PointComposition, diff: &DiffusionMatrix) -> Result<MsOperator> {
    let n = comp.n();
    if n != diff.species() {
        return Err(Error::DimensionMismatch { expected: diff.species(), found: n });
    }
    let d = comp.shifted();
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n * n];
    friction_matrix(&d, diff, &mut a);
    perturbation_matrix(&d, diff, &mut b);
    let total = comp.shifted_total();
    let mut p_l = vec![0.0; n * n];
    let mut p_lperp = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let w = (d[i] * d[j]).sqrt() / total;
            p_lperp[i * n + j] = w;
            p_l[i * n + j] = if i == j { 1.0 - w } else { -w };
        }
    }
    Ok(MsOperator {
        n,
        delta: comp.delta(),
        a,
        b,
        p_l,
        p_lperp,
        mu: diff.mu(),
        sqrt_d: d.iter().map(|x| x.sqrt()).collect(),
    })
}

impl MsOperator {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn projection_l(&self) -> &[f64] {
        &self.p_l
    }
    pub fn projection_lperp(&self) -> &[f64] {
        &self.p_lperp
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sqrt_d(&self) -> &[f64] {
        &self.sqrt_d
    }

    pub fn apply_a(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        linalg::mat_vec(&self.a, self.n, self.n, z, &mut out);
        out
    }

    pub fn project_l(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        linalg::mat_vec(&self.p_l, self.n, self.n, z, &mut out);
        out
    }

    pub fn project_lperp(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        linalg::mat_vec(&self.p_lperp, self.n, self.n, z, &mut out);
        out
    }

    /// Coercivity of `A` on `L(d)`; `holds` allows an absolute slack of `1e-12`.
    pub fn spectral_gap_check(&self, z: &[f64]) -> SpectralCheck {
        let lhs = linalg::quad_form(&self.a, self.n, z);
        let pz = self.project_l(z);
        let rhs = (1.0 + self.n as f64 * self.delta) * self.mu * linalg::norm_sq(&pz);
        SpectralCheck { lhs, rhs, holds: lhs >= rhs - ALGEBRA_TOL }
    }
}

/// Molar fluxes at one point, `dim` components per species.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFlux {
    dim: usize,
    j: Vec<f64>,
}

impl PointFlux {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn flux(&self, i: usize) -> &[f64] {
        &self.j[i * self.dim..(i + 1) * self.dim]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.j
    }
    /// `u_i = J_i / c_i` where `c_i` exceeds [`VELOCITY_THRESHOLD`], zero elsewhere.
    pub fn velocities(&self, c: &[f64]) -> Vec<f64> {
        velocities_from_flux(c, &self.j, self.dim)
    }
    /// Largest Euclidean flux norm over species.
    pub fn max_norm(&self) -> f64 {
        (0..self.j.len() / self.dim)
            .map(|i| linalg::norm_sq(self.flux(i)).sqrt())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn velocities_from_flux(c: &[f64], j: &[f64], dim: usize) -> Vec<f64> {
    let mut u = vec![0.0; j.len()];
    for (i, &ci) in c.iter().enumerate() {
        if ci > VELOCITY_THRESHOLD {
            for a in 0..dim {
                u[i * dim + a] = j[i * dim + a] / ci;
            }
        }
    }
    u
}

/// Shifted velocities `v_i = J_i / (c_i + delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedVelocities {
    dim: usize,
    v: Vec<f64>,
}

impl ShiftedVelocities {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.v[i * self.dim..(i + 1) * self.dim]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }
}

/// Reusable scratch space for pointwise solves.
///
/// Buffers only grow, so repeated solves with the same `n` and `dim` do not
/// allocate. One solver per worker; it must not be shared.
#[derive(Debug, Default, Clone)]
pub struct FluxSolver {
    k: Vec<f64>,
    rhs: Vec<f64>,
    x: Vec<f64>,
    d: Vec<f64>,
    tmp: Vec<f64>,
}

impl FluxSolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn reserve(&mut self, n: usize, dim: usize) {
        let grow = |v: &mut Vec<f64>, len: usize| {
            if v.len() < len {
                v.resize(len, 0.0);
            }
        };
        grow(&mut self.k, (n + 1) * n);
        grow(&mut self.rhs, (n + 1) * dim);
        grow(&mut self.x, n * dim);
        grow(&mut self.d, n);
        grow(&mut self.tmp, n * n);
    }

    /// Solves the force-flux system for `c` (on the simplex) and gradients
    /// `grad[i * dim + a]`, writing `J` in the same layout to `out`.
    ///
    /// The composition is trusted; callers on hot paths validate once upstream.
    pub fn solve_into(
        &mut self,
        c: &[f64],
        grad: &[f64],
        dim: usize,
        diff: &DiffusionMatrix,
        out: &mut [f64],
    ) -> Result<()> {
        let n = c.len();
        check_shapes(n, dim, diff, grad.len(), out.len())?;
        for a in 0..dim {
            let s: f64 = (0..n).map(|i| grad[i * dim + a]).sum();
            if s.abs() > CONSISTENCY_TOL {
                return Err(Error::InconsistentGradient { defect: s });
            }
        }
        self.reserve(n, dim);
        let k = &mut self.k[..(n + 1) * n];
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if j != i {
                    let r = diff.inverse(i, j);
                    diag -= c[j] * r;
                    k[i * n + j] = c[i] * r;
                }
            }
            k[i * n + i] = diag;
        }
        k[n * n..].fill(1.0);
        let rhs = &mut self.rhs[..(n + 1) * dim];
        rhs[..n * dim].copy_from_slice(grad);
        rhs[n * dim..].fill(0.0);
        let x = &mut self.x[..n * dim];
        householder_lstsq(k, n + 1, n, rhs, dim, x).map_err(|_| Error::SingularComposition)?;

        // Removing the constraint defect along the kernel vector c leaves the
        // force residual untouched.
        let csum: f64 = c.iter().sum();
        for a in 0..dim {
            let s: f64 = (0..n).map(|i| x[i * dim + a]).sum();
            for i in 0..n {
                x[i * dim + a] -= s * c[i] / csum;
            }
        }
        out.copy_from_slice(x);
        Ok(())
    }

    /// Solves the shifted system for `v`, given `grad_sqrt_d[i * dim + a] = d_a sqrt(d_i)`.
    pub fn solve_shifted_into(
        &mut self,
        c: &[f64],
        delta: f64,
        grad_sqrt_d: &[f64],
        dim: usize,
        diff: &DiffusionMatrix,
        out: &mut [f64],
    ) -> Result<()> {
        if !(delta > 0.0) {
            return Err(Error::DeltaNonpositive(delta));
        }
        let n = c.len();
        check_shapes(n, dim, diff, grad_sqrt_d.len(), out.len())?;
        self.reserve(n, dim);
        let d = &mut self.d[..n];
        for i in 0..n {
            d[i] = c[i] + delta;
        }
        for a in 0..dim {
            let s: f64 = (0..n).map(|i| 2.0 * d[i].sqrt() * grad_sqrt_d[i * dim + a]).sum();
            if s.abs() > CONSISTENCY_TOL {
                return Err(Error::InconsistentGradient { defect: s });
            }
        }
        let k = &mut self.k[..(n + 1) * n];
        friction_matrix(d, diff, &mut k[..n * n]);
        let bmat = &mut self.tmp[..n * n];
        perturbation_matrix(d, diff, bmat);
        for (kk, bb) in k[..n * n].iter_mut().zip(bmat.iter()) {
            *kk += delta * bb;
        }
        for i in 0..n {
            k[n * n + i] = d[i].sqrt();
        }
        let rhs = &mut self.rhs[..(n + 1) * dim];
        for (r, g) in rhs[..n * dim].iter_mut().zip(grad_sqrt_d) {
            *r = -2.0 * g;
        }
        rhs[n * dim..].fill(0.0);
        let w = &mut self.x[..n * dim];
        householder_lstsq(k, n + 1, n, rhs, dim, w).map_err(|_| Error::SingularComposition)?;

        // Right kernel of A + delta B is kappa_j = c_j / sqrt(d_j), with sqrt(d) . kappa = sum c.
        let csum: f64 = c.iter().sum();
        for a in 0..dim {
            let s: f64 = (0..n).map(|i| d[i].sqrt() * w[i * dim + a]).sum();
            for i in 0..n {
                w[i * dim + a] -= s / csum * c[i] / d[i].sqrt();
            }
        }
        for i in 0..n {
            let sd = d[i].sqrt();
            for a in 0..dim {
                out[i * dim + a] = w[i * dim + a] / sd;
            }
        }
        Ok(())
    }
}

fn check_shapes(n: usize, dim: usize, diff: &DiffusionMatrix, grad_len: usize, out_len: usize) -> Result<()> {
    if n != diff.species() {
        return Err(Error::DimensionMismatch { expected: diff.species(), found: n });
    }
    if dim == 0 || grad_len != n * dim {
        return Err(Error::DimensionMismatch { expected: n * dim, found: grad_len });
    }
    if out_len != n * dim {
        return Err(Error::DimensionMismatch { expected: n * dim, found: out_len });
    }
    Ok(())
}

/// Solves for the fluxes of a validated composition; `grad_c` holds `n` vectors
/// of length `dim`, flattened species-major.
pub fn solve_fluxes(
    comp: &PointComposition,
    grad_c: &[f64],
    dim: usize,
    diff: &DiffusionMatrix,
) -> Result<PointFlux> {
    let mut j = vec![0.0; comp.n() * dim];
    FluxSolver::new().solve_into(comp.concentrations(), grad_c, dim, diff, &mut j)?;
    Ok(PointFlux { dim, j })
}

/// Solves the shifted system for `v`; the composition must carry `delta > 0`.
pub fn solve_shifted_fluxes(
    comp: &PointComposition,
    grad_sqrt_d: &[f64],
    dim: usize,
    diff: &DiffusionMatrix,
) -> Result<ShiftedVelocities> {
    let mut v = vec![0.0; comp.n() * dim];
    FluxSolver::new().solve_shifted_into(
        comp.concentrations(),
        comp.delta(),
        grad_sqrt_d,
        dim,
        diff,
        &mut v,
    )?;
    Ok(ShiftedVelocities { dim, v })
}

/// Max-norm residual of the force-flux equations, evaluated from the
/// pairwise form directly.
pub fn force_flux_residual(c: &[f64], grad: &[f64], dim: usize, diff: &DiffusionMatrix, j: &[f64]) -> f64 {
    let n = c.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for a in 0..dim {
            let mut lhs = 0.0;
            for k in 0..n {
                if k != i {
                    lhs -= (c[k] * j[i * dim + a] - c[i] * j[k * dim + a]) / diff.coefficient(i, k);
                }
            }
            worst = worst.max((lhs - grad[i * dim + a]).abs());
        }
    }
    worst
}

/// Max-norm residual of the shifted system written in the `d, v` variables:
/// `grad d_i = -sum_j d_i d_j (v_i - v_j) / D_ij + delta sum_j (d_i v_i - d_j v_j) / D_ij`,
/// divided by `sqrt(d_i)` so that it matches the `2 grad sqrt(d_i)` form.
pub fn shifted_residual(
    c: &[f64],
    delta: f64,
    grad_sqrt_d: &[f64],
    dim: usize,
    diff: &DiffusionMatrix,
    v: &[f64],
) -> f64 {
    let n = c.len();
    let d: Vec<f64> = c.iter().map(|x| x + delta).collect();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for a in 0..dim {
            let mut rhs = 0.0;
            for k in 0..n {
                if k != i {
                    let r = 1.0 / diff.coefficient(i, k);
                    rhs -= d[i] * d[k] * (v[i * dim + a] - v[k * dim + a]) * r;
                    rhs += delta * (d[i] * v[i * dim + a] - d[k] * v[k * dim + a]) * r;
                }
            }
            let lhs = 2.0 * d[i].sqrt() * grad_sqrt_d[i * dim + a];
            worst = worst.max((lhs - rhs).abs() / d[i].sqrt());
        }
    }
    worst
}

/// Constants of the stability estimate for a given shift and flux bound.
///
/// `flux_bound` is `max_i ||c_i u_i||_inf` over both solutions. With
/// `X = sum_i (d_i + dbar_i)|v_i - vbar_i|^2` and `Y = sum_i |d_i - dbar_i|^2`:
///
/// - `J1 + J2 <= mu/4 X + c1/delta^2 Y`, `c1 = 16 n^2 M^2 F^2 / mu`
/// - `J3 <= n delta M X`
/// - `J4 <= (mu/2 + c2 delta) X + c3/delta^4 Y`, `c2 = 2 n^2 M^2 / mu`,
///   `c3 = 24 n^2 M^2 F^2 / mu`
/// - the dissipation lower bound costs `dissipation_correction / delta^2 Y`
///   with `dissipation_correction = 2 n mu F^2`
/// - aggregated: `c4 = n M + c2`, `c5 = dissipation_correction + c1 + c3`
///   (valid for `delta <= 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StabilityConstants {
    pub n: usize,
    pub delta: f64,
    pub mu: f64,
    pub big_m: f64,
    pub flux_bound: f64,
    pub velocity_bound: f64,
    pub dissipation_correction: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    /// `min(1, mu / (4 c4))`: shifts must lie strictly below this.
    pub delta_upper: f64,
}

impl StabilityConstants {
    /// Evaluates every constant without checking admissibility of `delta`.
    pub fn evaluate(diff: &DiffusionMatrix, delta: f64, flux_bound: f64) -> Self {
        let n = diff.species() as f64;
        let mu = diff.mu();
        let big_m = diff.big_m();
        let f2 = flux_bound * flux_bound;
        let dissipation_correction = 2.0 * n * mu * f2;
        let c1 = 16.0 * n * n * big_m * big_m * f2 / mu;
        let c2 = 2.0 * n * n * big_m * big_m / mu;
        let c3 = 24.0 * n * n * big_m * big_m * f2 / mu;
        let c4 = n * big_m + c2;
        let c5 = dissipation_correction + c1 + c3;
        Self {
            n: diff.species(),
            delta,
            mu,
            big_m,
            flux_bound,
            velocity_bound: flux_bound / delta,
            dissipation_correction,
            c1,
            c2,
            c3,
            c4,
            c5,
            delta_upper: 1.0f64.min(mu / (4.0 * c4)),
        }
    }

    pub fn is_admissible(&self) -> bool {
        self.delta > 0.0 && self.delta < self.delta_upper
    }

    /// Exponential rate `K` of the distance envelope `Y(t) <= F(0) exp(K t)`.
    ///
    /// `Y <= (1 + delta) F` pointwise because the logarithmic mean of two
    /// shifted concentrations is at most `1 + delta`.
    pub fn gronwall_rate(&self) -> f64 {
        (1.0 + self.delta) * self.c5 / self.delta.powi(4)
    }
}

/// Stability constants with the shift required to be admissible.
pub fn stability_constants(diff: &DiffusionMatrix, delta: f64, flux_bound: f64) -> Result<StabilityConstants> {
    if !(delta > 0.0) {
        return Err(Error::DeltaNonpositive(delta));
    }
    let k = StabilityConstants::evaluate(diff, delta, flux_bound);
    if !k.is_admissible() {
        return Err(Error::DeltaOutOfRange { delta, upper: k.delta_upper });
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn comp(c: &[f64], delta: f64) -> PointComposition {
        PointComposition::with_shift(c.to_vec(), delta).unwrap()
    }

    #[test]
    fn binary_half_half_friction_matrix() {
        let d = DiffusionMatrix::uniform(2, 1.0).unwrap();
        let op = assemble_operator(&comp(&[0.5, 0.5], 0.0), &d).unwrap();
        assert_eq!(op.a(), &[0.5, -0.5, -0.5, 0.5]);
    }

    #[test]
    fn three_species_uniform_is_scaled_complete_graph_laplacian() {
        let d = DiffusionMatrix::uniform(3, 1.0).unwrap();
        let delta = 0.1;
        let op = assemble_operator(&comp(&[1.0 / 3.0; 3], delta), &d).unwrap();
        let s = 1.0 / 3.0 + delta;
        let lap = [2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0];
        for (a, l) in op.a().iter().zip(lap) {
            assert_relative_eq!(*a, s * l, epsilon = 1e-15);
        }
    }

    #[test]
    fn kernel_vector_annihilated() {
        let d = DiffusionMatrix::from_fn(4, |i, j| 0.5 + (i + 2 * j) as f64).unwrap();
        let op = assemble_operator(&comp(&[0.1, 0.2, 0.3, 0.4], 0.05), &d).unwrap();
        let r = op.apply_a(op.sqrt_d());
        assert!(r.iter().all(|x| x.abs() < 1e-14));
        let chk = op.spectral_gap_check(op.sqrt_d());
        assert!(chk.lhs.abs() < 1e-14 && chk.rhs.abs() < 1e-14 && chk.holds);
    }

    #[test]
    fn range_complement_is_tight() {
        let d = DiffusionMatrix::from_fn(3, |i, j| 1.0 + i as f64 + j as f64).unwrap();
        let op = assemble_operator(&comp(&[0.2, 0.3, 0.5], 0.02), &d).unwrap();
        let z = op.project_lperp(&[0.3, -1.2, 0.7]);
        let chk = op.spectral_gap_check(&z);
        assert!(chk.lhs.abs() < 1e-14 && chk.rhs.abs() < 1e-14 && chk.holds);
    }

    #[test]
    fn mismatched_species_count() {
        let d = DiffusionMatrix::uniform(3, 1.0).unwrap();
        let err = assemble_operator(&comp(&[0.5, 0.5], 0.0), &d).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 3, found: 2 });
    }

    #[test]
    fn asymmetric_dense_input_rejected() {
        let e = DiffusionMatrix::from_dense(2, &[0.0, 1.0, 1.5, 0.0]).unwrap_err();
        assert!(matches!(e, Error::InvalidDiffusion { reason: "symmetry", .. }));
        assert!(DiffusionMatrix::uniform(2, 0.0).is_err());
    }

    #[test]
    fn binary_reduces_to_fick() {
        let dval = 1.7;
        let d = DiffusionMatrix::uniform(2, dval).unwrap();
        for c1 in [0.5, 0.1, 0.9, 0.0, 1.0] {
            let g = 0.37;
            let j = solve_fluxes(&comp(&[c1, 1.0 - c1], 0.0), &[g, -g], 1, &d).unwrap();
            assert_relative_eq!(j.flux(0)[0], -dval * g, epsilon = 1e-12);
            assert_relative_eq!(j.flux(1)[0], dval * g, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_forcing_gives_zero_flux() {
        let d = DiffusionMatrix::from_fn(3, |i, j| (i + j) as f64).unwrap();
        let j = solve_fluxes(&comp(&[0.2, 0.3, 0.5], 0.0), &[0.0; 6], 2, &d).unwrap();
        assert!(j.as_slice().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn equal_coefficients_decouple() {
        let d = DiffusionMatrix::uniform(3, 0.8).unwrap();
        let g = [0.3, -0.1, -0.5, 0.4, 0.2, -0.3];
        for c in [[1.0 / 3.0; 3], [0.6, 0.3, 0.1]] {
            let j = solve_fluxes(&comp(&c, 0.0), &g, 2, &d).unwrap();
            for (ji, gi) in j.as_slice().iter().zip(g) {
                assert_relative_eq!(*ji, -0.8 * gi, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn inconsistent_gradient_rejected() {
        let d = DiffusionMatrix::uniform(3, 1.0).unwrap();
        let e = solve_fluxes(&comp(&[0.2, 0.3, 0.5], 0.0), &[1.0, 0.0, 0.0], 1, &d).unwrap_err();
        assert!(matches!(e, Error::InconsistentGradient { .. }));
    }

    #[test]
    fn boundary_composition_is_solvable() {
        let d = DiffusionMatrix::from_fn(3, |i, j| 1.0 + (i * j) as f64).unwrap();
        let c = [1.0, 0.0, 0.0];
        let g = [0.4, -0.1, -0.3];
        let j = solve_fluxes(&comp(&c, 0.0), &g, 1, &d).unwrap();
        assert!(force_flux_residual(&c, &g, 1, &d, j.as_slice()) < 1e-12);
        assert!(j.as_slice().iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn shifted_zero_forcing() {
        let d = DiffusionMatrix::uniform(3, 1.0).unwrap();
        let v = solve_shifted_fluxes(&comp(&[0.2, 0.3, 0.5], 0.1), &[0.0; 3], 1, &d).unwrap();
        assert!(v.as_slice().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn shifted_binary_closed_form() {
        // Eliminating the 2x2 system gives v_i = -2 D g_i / sqrt(d_i).
        let dval = 0.6;
        let d = DiffusionMatrix::uniform(2, dval).unwrap();
        let (c1, delta) = (0.3, 0.05);
        let (d1, d2) = (c1 + delta, 1.0 - c1 + delta);
        let g1 = 0.25;
        let g2 = -d1.sqrt() * g1 / d2.sqrt();
        let v = solve_shifted_fluxes(&comp(&[c1, 1.0 - c1], delta), &[g1, g2], 1, &d).unwrap();
        assert_relative_eq!(v.velocity(0)[0], -2.0 * dval * g1 / d1.sqrt(), epsilon = 1e-13);
        assert_relative_eq!(v.velocity(1)[0], -2.0 * dval * g2 / d2.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn shifted_requires_positive_delta() {
        let d = DiffusionMatrix::uniform(2, 1.0).unwrap();
        let e = solve_shifted_fluxes(&comp(&[0.5, 0.5], 0.0), &[0.0; 2], 1, &d).unwrap_err();
        assert_eq!(e, Error::DeltaNonpositive(0.0));
    }

    #[test]
    fn single_pair_constants() {
        let d = DiffusionMatrix::uniform(2, 2.0).unwrap();
        assert_eq!((d.mu(), d.big_m()), (0.5, 0.5));
        let d = DiffusionMatrix::from_dense(3, &[0.0, 1.0, 2.0, 1.0, 0.0, 4.0, 2.0, 4.0, 0.0]).unwrap();
        assert_eq!((d.mu(), d.big_m()), (0.25, 1.0));
    }

    #[test]
    fn constants_follow_the_inequality_chain() {
        // n = 3, mu = 0.25, M = 1, F = 0.5: recomputed term by term.
        let d = DiffusionMatrix::from_dense(3, &[0.0, 1.0, 2.0, 1.0, 0.0, 4.0, 2.0, 4.0, 0.0]).unwrap();
        let k = StabilityConstants::evaluate(&d, 0.0005, 0.5);
        // J1 and J2 each contribute 8 n^2 M^2 F^2 / mu = 8*9*1*0.25/0.25 = 72.
        assert_relative_eq!(k.c1, 144.0);
        // J4^1 Young + Jensen: 2 n^2 M^2 / mu = 72.
        assert_relative_eq!(k.c2, 72.0);
        // J4^{2,1}: 16 n^2 M^2 F^2 / mu = 144, J4^{2,2}: 8 n^2 M^2 F^2 / mu = 72.
        assert_relative_eq!(k.c3, 216.0);
        assert_relative_eq!(k.dissipation_correction, 2.0 * 3.0 * 0.25 * 0.25);
        assert_relative_eq!(k.c4, 3.0 + 72.0);
        assert_relative_eq!(k.c5, 0.375 + 144.0 + 216.0);
        assert_relative_eq!(k.delta_upper, 0.25 / (4.0 * 75.0));
        assert_relative_eq!(k.velocity_bound, 1000.0);
        assert!(k.is_admissible());
        assert!(matches!(stability_constants(&d, 0.05, 0.5), Err(Error::DeltaOutOfRange { .. })));
        assert!(matches!(stability_constants(&d, 0.0, 0.5), Err(Error::DeltaNonpositive(_))));
    }
}
