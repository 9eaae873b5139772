//! Space-time mollification on periodic lattices.
//!
//! The kernel is the smooth bump `exp(-1/(1 - s^2))` on `(-1, 1)`, normalized
//! to unit mass. Double integrals are evaluated with a tensor midpoint rule
//! restricted to the kernel band; the discrete kernel weights are normalized
//! to sum to one so constant integrands are reproduced exactly.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;
use crate::linalg::{loglog_fit, LogLogFit};
use crate::testfn::TestFunction;

const NORMALIZATION_POINTS: usize = 1 << 14;

#[inline]
fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// `int_{-1}^{1} exp(-1/(1 - s^2)) ds` by the midpoint rule.
pub fn bump_mass() -> f64 {
    let h = 2.0 / NORMALIZATION_POINTS as f64;
    (0..NORMALIZATION_POINTS).map(|j| bump(-1.0 + (j as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Symmetric unit-mass kernel `rho` at scale `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    epsilon: f64,
    norm: f64,
}

impl Mollifier {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidScale(epsilon));
        }
        Ok(Self { epsilon, norm: bump_mass() })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `rho(s)`, supported on `(-1, 1)`.
    #[inline]
    pub fn profile(&self, s: f64) -> f64 {
        bump(s) / self.norm
    }

    /// `rho(s / epsilon) / epsilon`.
    #[inline]
    pub fn kernel(&self, s: f64) -> f64 {
        self.profile(s / self.epsilon) / self.epsilon
    }

    /// Product kernel over the components of `z`.
    pub fn product_kernel(&self, z: &[f64]) -> f64 {
        z.iter().map(|&s| self.kernel(s)).product()
    }

    fn check_spacing(&self, spacing: f64) -> Result<()> {
        if self.epsilon < 2.0 * spacing {
            return Err(Error::EpsilonTooSmallForGrid { epsilon: self.epsilon, spacing });
        }
        Ok(())
    }

    /// Weights of the offsets `k * spacing`, `k = -K..=K`, stored at `k + K`.
    /// They sum to one.
    pub fn lattice_weights(&self, spacing: f64) -> Result<Vec<f64>> {
        self.check_spacing(spacing)?;
        let mut reach = 0usize;
        while ((reach + 1) as f64) * spacing < self.epsilon {
            reach += 1;
        }
        let mut w: Vec<f64> =
            (0..=2 * reach).map(|j| self.kernel((j as f64 - reach as f64) * spacing)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        Ok(w)
    }

    /// Weights of the one-sided offsets `(m + 1/2) * spacing`, `m >= 0`,
    /// normalized so that the two-sided sum is one; they sum to one half.
    pub fn half_lattice_weights(&self, spacing: f64) -> Result<Vec<f64>> {
        self.check_spacing(spacing)?;
        let mut w = Vec::new();
        loop {
            let s = (w.len() as f64 + 0.5) * spacing;
            if s >= self.epsilon {
                break;
            }
            w.push(self.kernel(s));
        }
        let total: f64 = 2.0 * w.iter().sum::<f64>();
        w.iter_mut().for_each(|x| *x /= total);
        Ok(w)
    }
}

/// A periodic spatial grid times the time midpoints `(m + 1/2) dt`, `m < steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeLattice {
    pub grid: PeriodicGrid,
    pub dt: f64,
    pub steps: usize,
}

impl SpaceTimeLattice {
    pub fn new(grid: PeriodicGrid, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || steps == 0 {
            return Err(Error::InvalidGrid("time lattice needs a positive step and at least one slab"));
        }
        Ok(Self { grid, dt, steps })
    }

    /// A lattice with spacing at most `epsilon / points` in space and time
    /// covering `[0, horizon]`.
    pub fn for_scale(lengths: &[f64], horizon: f64, epsilon: f64, points: usize) -> Result<Self> {
        let h = epsilon / points as f64;
        let cells: Vec<usize> = lengths.iter().map(|l| (l / h - 1e-9).ceil().max(3.0) as usize).collect();
        let grid = PeriodicGrid::new(&cells, lengths)?;
        let steps = (horizon / h - 1e-9).ceil().max(1.0) as usize;
        Self::new(grid, horizon / steps as f64, steps)
    }

    #[inline]
    pub fn time(&self, m: usize) -> f64 {
        (m as f64 + 0.5) * self.dt
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.grid.dim()).map(|a| self.grid.spacing(a)).fold(self.dt, f64::max)
    }
}

/// Lattice offsets inside the kernel band with their product weights.
struct Band {
    offsets: Vec<[isize; 3]>,
    weights: Vec<f64>,
    /// `neighbors[s * cells + k]` is the cell at offset `s` from `k`.
    neighbors: Vec<usize>,
}

impl Band {
    fn new(grid: &PeriodicGrid, mollifier: &Mollifier) -> Result<Self> {
        let dim = grid.dim();
        let mut axis_weights: [Vec<f64>; 3] = [vec![1.0], vec![1.0], vec![1.0]];
        for (a, w) in axis_weights.iter_mut().enumerate().take(dim) {
            *w = mollifier.lattice_weights(grid.spacing(a))?;
        }
        let reach: [isize; 3] = core::array::from_fn(|a| ((axis_weights[a].len() - 1) / 2) as isize);
        let (mut offsets, mut weights) = (Vec::new(), Vec::new());
        for i in -reach[0]..=reach[0] {
            for j in -reach[1]..=reach[1] {
                for k in -reach[2]..=reach[2] {
                    let s = [i, j, k];
                    let w: f64 = (0..3).map(|a| axis_weights[a][(s[a] + reach[a]) as usize]).product();
                    offsets.push(s);
                    weights.push(w);
                }
            }
        }
        let m = grid.len();
        let mut neighbors = vec![0; offsets.len() * m];
        for (si, s) in offsets.iter().enumerate() {
            for k in 0..m {
                let mut idx = k;
                for (a, &o) in s.iter().enumerate().take(dim) {
                    idx = grid.neighbor(idx, a, o);
                }
                neighbors[si * m + k] = idx;
            }
        }
        Ok(Self { offsets, weights, neighbors })
    }
}

#[inline]
fn shifted_point(grid: &PeriodicGrid, k: usize, offset: &[isize; 3], fraction: f64) -> [f64; 3] {
    let mut x = grid.center(k);
    for (a, xa) in x.iter_mut().enumerate().take(grid.dim()) {
        *xa += fraction * offset[a] as f64 * grid.spacing(a);
    }
    x
}

/// A mollified value next to the integral it approximates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MollifiedIntegral {
    pub epsilon: f64,
    pub value: f64,
    pub reference: f64,
    pub error: f64,
}

/// Midpoint value of `int_0^T int f phi dx dt` on the lattice.
pub fn midpoint_integral<F, P>(f: F, phi: &P, lattice: &SpaceTimeLattice) -> f64
where
    F: Fn(&[f64], f64) -> f64,
    P: TestFunction + ?Sized,
{
    let grid = &lattice.grid;
    let dim = grid.dim();
    let mut acc = 0.0;
    for p in 0..lattice.steps {
        let t = lattice.time(p);
        for k in 0..grid.len() {
            let x = grid.center(k);
            acc += f(&x[..dim], t) * phi.value(&x[..dim], t);
        }
    }
    acc * grid.cell_volume() * lattice.dt
}

/// The doubled integral
/// `int int f(y, tau) phi((x+y)/2, (t+tau)/2) rho_eps(t - tau) rho_eps(x - y)`
/// over `t, tau >= 0`, with `f` sampled at the lattice points.
///
/// `phi` must vanish for `t >= steps * dt - epsilon`.
pub fn mollify_spacetime<F, P>(
    f: F,
    phi: &P,
    mollifier: &Mollifier,
    lattice: &SpaceTimeLattice,
) -> Result<MollifiedIntegral>
where
    F: Fn(&[f64], f64) -> f64,
    P: TestFunction + ?Sized,
{
    let grid = &lattice.grid;
    let (dim, m, nt) = (grid.dim(), grid.len(), lattice.steps);
    let band = Band::new(grid, mollifier)?;
    let wt = mollifier.lattice_weights(lattice.dt)?;
    let kt = ((wt.len() - 1) / 2) as isize;
    let mut samples = vec![0.0; nt * m];
    for p in 0..nt {
        for k in 0..m {
            let x = grid.center(k);
            samples[p * m + k] = f(&x[..dim], lattice.time(p));
        }
    }
    let mut acc = 0.0;
    for p in 0..nt {
        let t = lattice.time(p);
        for (qi, &wq) in wt.iter().enumerate() {
            let q = qi as isize - kt;
            let tau = p as isize + q;
            if tau < 0 || tau >= nt as isize {
                continue;
            }
            let fs = &samples[tau as usize * m..(tau as usize + 1) * m];
            let tm = t + 0.5 * q as f64 * lattice.dt;
            for (si, off) in band.offsets.iter().enumerate() {
                let w = wq * band.weights[si];
                let nb = &band.neighbors[si * m..(si + 1) * m];
                let mut slab = 0.0;
                for k in 0..m {
                    let xm = shifted_point(grid, k, off, 0.5);
                    slab += fs[nb[k]] * phi.value(&xm[..dim], tm);
                }
                acc += w * slab;
            }
        }
    }
    let value = acc * grid.cell_volume() * lattice.dt;
    let reference = midpoint_integral(&f, phi, lattice);
    Ok(MollifiedIntegral { epsilon: mollifier.epsilon(), value, reference, error: (value - reference).abs() })
}

/// One-sided initial-trace mollification next to `1/2` and `1` times
/// `int f(x, 0) phi(x, 0) dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InitialTrace {
    pub epsilon: f64,
    pub value: f64,
    pub half_trace: f64,
    pub full_trace: f64,
    /// `|value - half_trace| / |half_trace|`.
    pub relative_error: f64,
}

/// `int_x int_{tau > 0} int_y f(y, tau) phi((x+y)/2, tau/2) rho_eps(-tau) rho_eps(x - y)`
/// with `tau` sampled at the midpoints `(m + 1/2) dt`.
pub fn initial_trace_mollification<F, P>(
    f: F,
    phi: &P,
    mollifier: &Mollifier,
    grid: &PeriodicGrid,
    dt: f64,
) -> Result<InitialTrace>
where
    F: Fn(&[f64], f64) -> f64,
    P: TestFunction + ?Sized,
{
    let (dim, m) = (grid.dim(), grid.len());
    let band = Band::new(grid, mollifier)?;
    let wt = mollifier.half_lattice_weights(dt)?;
    let mut acc = 0.0;
    let mut fs = vec![0.0; m];
    for (mi, &wm) in wt.iter().enumerate() {
        let tau = (mi as f64 + 0.5) * dt;
        for (k, v) in fs.iter_mut().enumerate() {
            let y = grid.center(k);
            *v = f(&y[..dim], tau);
        }
        for (si, off) in band.offsets.iter().enumerate() {
            let nb = &band.neighbors[si * m..(si + 1) * m];
            let mut slab = 0.0;
            for k in 0..m {
                let xm = shifted_point(grid, k, off, 0.5);
                slab += fs[nb[k]] * phi.value(&xm[..dim], 0.5 * tau);
            }
            acc += wm * band.weights[si] * slab;
        }
    }
    let value = acc * grid.cell_volume();
    let mut full = 0.0;
    for k in 0..m {
        let x = grid.center(k);
        full += f(&x[..dim], 0.0) * phi.value(&x[..dim], 0.0);
    }
    let full_trace = full * grid.cell_volume();
    let half_trace = 0.5 * full_trace;
    Ok(InitialTrace {
        epsilon: mollifier.epsilon(),
        value,
        half_trace,
        full_trace,
        relative_error: (value - half_trace).abs() / half_trace.abs(),
    })
}

/// Error of the spacetime mollification over a ladder of scales.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateStudy {
    pub rows: Vec<MollifiedIntegral>,
    pub fit: LogLogFit,
}

impl RateStudy {
    /// CSV header for [`RateStudy::rows`].
    pub const COLUMNS: [&'static str; 4] = ["epsilon", "value", "reference", "error"];
}

/// Runs [`mollify_spacetime`] for every scale on a lattice with `points`
/// cells per `epsilon`, and fits the error against `epsilon`.
pub fn spacetime_rate_study<F, P>(
    f: F,
    phi: &P,
    lengths: &[f64],
    horizon: f64,
    epsilons: &[f64],
    points: usize,
) -> Result<RateStudy>
where
    F: Fn(&[f64], f64) -> f64,
    P: TestFunction + ?Sized,
{
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let moll = Mollifier::new(eps)?;
        let lattice = SpaceTimeLattice::for_scale(lengths, horizon + eps, eps, points)?;
        rows.push(mollify_spacetime(&f, phi, &moll, &lattice)?);
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let err: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(RateStudy { fit: loglog_fit(&eps, &err), rows })
}

/// Runs [`initial_trace_mollification`] for every scale with `points` cells per `epsilon`.
pub fn initial_trace_study<F, P>(
    f: F,
    phi: &P,
    lengths: &[f64],
    epsilons: &[f64],
    points: usize,
) -> Result<Vec<InitialTrace>>
where
    F: Fn(&[f64], f64) -> f64,
    P: TestFunction + ?Sized,
{
    epsilons
        .iter()
        .map(|&eps| {
            let moll = Mollifier::new(eps)?;
            let lattice = SpaceTimeLattice::for_scale(lengths, eps, eps, points)?;
            initial_trace_mollification(&f, phi, &moll, &lattice.grid, eps / points as f64)
        })
        .collect()
}

/// `Phi(x, t; y, tau) = phi((x+y)/2, (t+tau)/2) rho_eps(t - tau) prod rho_eps(x_a - y_a)`
/// on a periodic box. Spatial differences use the minimal periodic image.
#[derive(Debug, Clone, Copy)]
pub struct DoubledTestFunction<'a, P: TestFunction + ?Sized> {
    phi: &'a P,
    mollifier: Mollifier,
    dim: usize,
    lengths: [f64; 3],
}

#[inline]
fn wrap(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

impl<'a, P: TestFunction + ?Sized> DoubledTestFunction<'a, P> {
    pub fn new(phi: &'a P, mollifier: Mollifier, grid: &PeriodicGrid) -> Self {
        let lengths = core::array::from_fn(|a| if a < grid.dim() { grid.length(a) } else { 1.0 });
        Self { phi, mollifier, dim: grid.dim(), lengths }
    }

    /// Midpoint `(x+y)/2` and difference `x - y`, both via the minimal image.
    #[inline]
    fn split(&self, x: &[f64], y: &[f64]) -> ([f64; 3], [f64; 3]) {
        let (mut mid, mut diff) = ([0.0; 3], [0.0; 3]);
        for a in 0..self.dim {
            diff[a] = wrap(x[a] - y[a], self.lengths[a]);
            mid[a] = y[a] + 0.5 * diff[a];
        }
        (mid, diff)
    }

    /// `phi^eps(x, y, t, tau)`.
    pub fn kernel(&self, x: &[f64], t: f64, y: &[f64], tau: f64) -> f64 {
        let (_, diff) = self.split(x, y);
        self.mollifier.kernel(t - tau) * self.mollifier.product_kernel(&diff[..self.dim])
    }

    pub fn value(&self, x: &[f64], t: f64, y: &[f64], tau: f64) -> f64 {
        let (mid, diff) = self.split(x, y);
        let k = self.mollifier.kernel(t - tau) * self.mollifier.product_kernel(&diff[..self.dim]);
        if k == 0.0 {
            return 0.0;
        }
        self.phi.value(&mid[..self.dim], 0.5 * (t + tau)) * k
    }

    /// `(grad_z phi)(mid) phi^eps`, the closed form of `(grad_x + grad_y) Phi`.
    pub fn sum_gradient(&self, x: &[f64], t: f64, y: &[f64], tau: f64, out: &mut [f64]) {
        let (mid, diff) = self.split(x, y);
        let k = self.mollifier.kernel(t - tau) * self.mollifier.product_kernel(&diff[..self.dim]);
        self.phi.gradient(&mid[..self.dim], 0.5 * (t + tau), out);
        out[..self.dim].iter_mut().for_each(|g| *g *= k);
    }

    /// `(d_s phi)(mid) phi^eps`, the closed form of `(d_t + d_tau) Phi`.
    pub fn sum_time_derivative(&self, x: &[f64], t: f64, y: &[f64], tau: f64) -> f64 {
        let (mid, diff) = self.split(x, y);
        let k = self.mollifier.kernel(t - tau) * self.mollifier.product_kernel(&diff[..self.dim]);
        self.phi.time_derivative(&mid[..self.dim], 0.5 * (t + tau)) * k
    }

    /// `Phi` at lattice points given by integer indices (cell `i` has center
    /// `(i + 1/2) h`, time slab `m` has midpoint `(m + 1/2) dt`). Indices are
    /// reduced exactly, so shifting both spatial indices by a period returns
    /// the identical value.
    pub fn value_indexed(&self, lattice: &SpaceTimeLattice, ix: [i64; 3], it: i64, iy: [i64; 3], itau: i64) -> f64 {
        let grid = &lattice.grid;
        let cells = grid.cells();
        let (mut mid, mut diff) = ([0.0; 3], [0.0; 3]);
        for a in 0..self.dim {
            let n = cells[a] as i64;
            let base = iy[a].rem_euclid(n);
            let mut d = (ix[a] - iy[a]).rem_euclid(n);
            if 2 * d > n {
                d -= n;
            }
            let h = grid.spacing(a);
            diff[a] = d as f64 * h;
            mid[a] = (base as f64 + 0.5) * h + 0.5 * diff[a];
        }
        let t = (it as f64 + 0.5) * lattice.dt;
        let tau = (itau as f64 + 0.5) * lattice.dt;
        let k = self.mollifier.kernel(t - tau) * self.mollifier.product_kernel(&diff[..self.dim]);
        if k == 0.0 {
            return 0.0;
        }
        self.phi.value(&mid[..self.dim], 0.5 * (t + tau)) * k
    }

    /// Largest deviation between a centered difference of `Phi` along
    /// `(e_a, e_a)` and [`Self::sum_gradient`].
    pub fn gradient_identity_defect(&self, x: &[f64], t: f64, y: &[f64], tau: f64, step: f64) -> f64 {
        let mut exact = [0.0; 3];
        self.sum_gradient(x, t, y, tau, &mut exact);
        let mut worst: f64 = 0.0;
        for a in 0..self.dim {
            let (mut xp, mut xm, mut yp, mut ym) = ([0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3]);
            xp[..self.dim].copy_from_slice(&x[..self.dim]);
            xm[..self.dim].copy_from_slice(&x[..self.dim]);
            yp[..self.dim].copy_from_slice(&y[..self.dim]);
            ym[..self.dim].copy_from_slice(&y[..self.dim]);
            xp[a] += step;
            yp[a] += step;
            xm[a] -= step;
            ym[a] -= step;
            let fd = (self.value(&xp[..self.dim], t, &yp[..self.dim], tau)
                - self.value(&xm[..self.dim], t, &ym[..self.dim], tau))
                / (2.0 * step);
            worst = worst.max((fd - exact[a]).abs());
        }
        worst
    }

    /// Deviation between a centered difference of `Phi` along `(1, 1)` in
    /// time and [`Self::sum_time_derivative`].
    pub fn time_identity_defect(&self, x: &[f64], t: f64, y: &[f64], tau: f64, step: f64) -> f64 {
        let fd = (self.value(x, t + step, y, tau + step) - self.value(x, t - step, y, tau - step)) / (2.0 * step);
        (fd - self.sum_time_derivative(x, t, y, tau)).abs()
    }

    /// Midpoint value of `int_{tau > 0} int Phi(x, t; y, tau) dy dtau` on the lattice.
    pub fn kernel_mass(&self, x: &[f64], t: f64, lattice: &SpaceTimeLattice) -> f64 {
        let grid = &lattice.grid;
        let mut acc = 0.0;
        for p in 0..lattice.steps {
            let tau = lattice.time(p);
            if (t - tau).abs() >= self.mollifier.epsilon() {
                continue;
            }
            for k in 0..grid.len() {
                let y = grid.center(k);
                acc += self.value(x, t, &y[..self.dim], tau);
            }
        }
        acc * grid.cell_volume() * lattice.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn::{BumpInTime, CosineProfile, InitialWindow, ZeroTest};

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let m = Mollifier::new(0.3).unwrap();
        let n = 200_000;
        let h = 2.0 / n as f64;
        let total: f64 = (0..n).map(|j| m.profile(-1.0 + (j as f64 + 0.5) * h)).sum::<f64>() * h;
        let half: f64 = (0..n / 2).map(|j| m.profile((j as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((total - 1.0).abs() < 1e-10);
        assert!((half - 0.5).abs() < 1e-10);
        assert!((bump_mass() - 0.443_993_816_168_079_4).abs() < 1e-10);
        for s in [0.0, 0.1, 0.5, 0.99] {
            assert_eq!(m.profile(s), m.profile(-s));
        }
        assert_eq!(m.profile(1.0), 0.0);
        assert!(Mollifier::new(0.0).is_err());
    }

    #[test]
    fn lattice_weights_sum_to_one_and_half() {
        let m = Mollifier::new(0.1).unwrap();
        let w = m.lattice_weights(0.0125).unwrap();
        assert_eq!(w.len(), 15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let hw = m.half_lattice_weights(0.0125).unwrap();
        assert_eq!(hw.len(), 8);
        assert!((hw.iter().sum::<f64>() - 0.5).abs() < 1e-14);
        assert!(matches!(m.lattice_weights(0.06), Err(Error::EpsilonTooSmallForGrid { .. })));
    }

    #[test]
    fn constant_integrand_is_reproduced_away_from_the_boundary() {
        let lat = SpaceTimeLattice::for_scale(&[1.0], 1.0, 0.1, 8).unwrap();
        let phi = BumpInTime::new(CosineProfile::new(0.4, 1.0, &[1.0]), 0.3, 0.8);
        let r = mollify_spacetime(|_, _| 2.5, &phi, &Mollifier::new(0.1).unwrap(), &lat).unwrap();
        assert!(r.error < 1e-5 * r.reference.abs(), "{r:?}");
    }

    #[test]
    fn vanishing_initial_weight_gives_zero_trace() {
        let g = PeriodicGrid::unit_1d(64).unwrap();
        let r = initial_trace_mollification(|_, _| 1.0, &ZeroTest, &Mollifier::new(0.1).unwrap(), &g, 0.0125).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn initial_trace_of_one_is_one_half() {
        let phi = InitialWindow::new(CosineProfile::new(0.0, 1.0, &[1.0]), 1.0);
        let r = initial_trace_study(|_, _| 1.0, &phi, &[1.0], &[0.08, 0.02], 8).unwrap();
        for row in r {
            assert!((row.full_trace - 1.0).abs() < 1e-14);
            assert!(row.relative_error < 1e-2, "{row:?}");
        }
    }

    #[test]
    fn doubled_test_function_identities() {
        let phi = BumpInTime::new(CosineProfile::new(0.3, 1.0, &[1.0, 1.0]), 0.0, 1.0);
        let g = PeriodicGrid::unit_2d(16).unwrap();
        let dtf = DoubledTestFunction::new(&phi, Mollifier::new(0.2).unwrap(), &g);
        let (x, y) = ([0.95, 0.2], [0.02, 0.25]);
        let v = dtf.value(&x, 0.5, &y, 0.45);
        assert!(v > 0.0);
        let shifted = dtf.value(&[1.95, 1.2], 0.5, &[1.02, 1.25], 0.45);
        assert!((v - shifted).abs() < 1e-12 * v);
        assert!(dtf.gradient_identity_defect(&x, 0.5, &y, 0.45, 1e-5) < 1e-4);
        assert!(dtf.time_identity_defect(&x, 0.5, &y, 0.45, 1e-5) < 1e-4);
        let lat = SpaceTimeLattice::new(g, 1.0 / 16.0, 16).unwrap();
        let a = dtf.value_indexed(&lat, [3, 4, 0], 7, [2, 5, 0], 8);
        let b = dtf.value_indexed(&lat, [19, -12, 0], 7, [18, -11, 0], 8);
        assert_eq!(a, b);
    }
}
