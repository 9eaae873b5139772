//! Entropy functionals and the stability certificate built on them.
//!
//! Pointwise densities are exposed next to their integrated field versions so
//! that algebraic identities can be checked cell by cell. Every integral is a
//! midpoint rule with tree summation, hence bit-reproducible.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{self, PeriodicGrid};
use crate::msflux::{velocities_from_flux, DiffusionMatrix, StabilityConstants};
use crate::state::{ConcentrationState, FluxField, Snapshot};

/// Absolute slack used when comparing error terms with their bounds.
pub const BOUND_SLACK: f64 = 1e-12;

#[inline]
fn xlogx_minus_x(c: f64) -> f64 {
    if c > 0.0 {
        c * (c.ln() - 1.0)
    } else {
        0.0
    }
}

/// `H(c) = int sum_i c_i (ln c_i - 1) dx` with `0 ln 0 = 0`.
pub fn entropy(state: &ConcentrationState) -> f64 {
    let data = state.data();
    grid::pairwise_sum_by(data.len(), |k| xlogx_minus_x(data[k])) * state.grid().cell_volume()
}

/// `H(a | b) = int sum_i c_i ln(c_i / cbar_i) - (c_i - cbar_i) dx`, infinite when
/// some `c_i > 0` meets `cbar_i = 0`.
pub fn relative_entropy(a: &ConcentrationState, b: &ConcentrationState) -> Result<f64> {
    a.ensure_same_grid(b)?;
    let (x, y) = (a.data(), b.data());
    let v = grid::pairwise_sum_by(x.len(), |k| {
        let (c, cb) = (x[k], y[k]);
        if c <= 0.0 {
            cb
        } else if cb <= 0.0 {
            f64::INFINITY
        } else {
            c * (c / cb).ln() - (c - cb)
        }
    });
    Ok(v * a.grid().cell_volume())
}

/// Value assigned to cells where both concentrations vanish in the
/// symmetrized relative entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BothVanish {
    #[default]
    Infinite,
    Zero,
}

/// `(ln c - ln cbar)(c - cbar)` with the extended-value conventions.
#[inline]
pub fn symrelen_density(c: f64, cb: f64, both: BothVanish) -> f64 {
    match (c > 0.0, cb > 0.0) {
        (true, true) => (c.ln() - cb.ln()) * (c - cb),
        (false, false) => match both {
            BothVanish::Infinite => f64::INFINITY,
            BothVanish::Zero => 0.0,
        },
        _ => f64::INFINITY,
    }
}

/// `H_sym(a, b) = int sum_i (ln c_i - ln cbar_i)(c_i - cbar_i) dx`, with cells where
/// both vanish counted as `+inf`.
pub fn symmetrized_relative_entropy(a: &ConcentrationState, b: &ConcentrationState) -> Result<f64> {
    symmetrized_relative_entropy_with(a, b, BothVanish::Infinite)
}

pub fn symmetrized_relative_entropy_with(
    a: &ConcentrationState,
    b: &ConcentrationState,
    both: BothVanish,
) -> Result<f64> {
    a.ensure_same_grid(b)?;
    let (x, y) = (a.data(), b.data());
    let v = grid::pairwise_sum_by(x.len(), |k| symrelen_density(x[k], y[k], both));
    Ok(v * a.grid().cell_volume())
}

/// `F(a, b) = int sum_i (ln(c_i + delta) - ln(cbar_i + delta))(c_i - cbar_i) dx`.
pub fn regularized_symrelen(a: &ConcentrationState, b: &ConcentrationState, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::DeltaNonpositive(delta));
    }
    a.ensure_same_grid(b)?;
    let (x, y) = (a.data(), b.data());
    let v = grid::pairwise_sum_by(x.len(), |k| ((x[k] + delta).ln() - (y[k] + delta).ln()) * (x[k] - y[k]));
    Ok(v * a.grid().cell_volume())
}

/// Renormalizing function `beta` of class `C^2([0, inf))` with derivatives
/// and the antiderivative `B(s) = int_0^s beta`.
#[derive(Debug, Clone, Copy)]
pub enum RenormFunction {
    Identity,
    /// `s -> ln(s + delta)`.
    LogShift { delta: f64 },
    /// `s -> s^2`.
    Square,
    Custom {
        label: &'static str,
        beta: fn(f64) -> f64,
        beta_prime: fn(f64) -> f64,
        beta_second: fn(f64) -> f64,
    },
}

impl RenormFunction {
    /// `ln(s + delta)` for `delta` in `(0, 1)`.
    pub fn log_shift(delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::DeltaNonpositive(delta));
        }
        if delta >= 1.0 {
            return Err(Error::DeltaOutOfRange { delta, upper: 1.0 });
        }
        Ok(Self::LogShift { delta })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::LogShift { .. } => "log-shift",
            Self::Square => "square",
            Self::Custom { label, .. } => label,
        }
    }

    #[inline]
    pub fn beta(&self, s: f64) -> f64 {
        match *self {
            Self::Identity => s,
            Self::LogShift { delta } => (s + delta).ln(),
            Self::Square => s * s,
            Self::Custom { beta, .. } => beta(s),
        }
    }

    #[inline]
    pub fn beta_prime(&self, s: f64) -> f64 {
        match *self {
            Self::Identity => 1.0,
            Self::LogShift { delta } => 1.0 / (s + delta),
            Self::Square => 2.0 * s,
            Self::Custom { beta_prime, .. } => beta_prime(s),
        }
    }

    #[inline]
    pub fn beta_second(&self, s: f64) -> f64 {
        match *self {
            Self::Identity => 0.0,
            Self::LogShift { delta } => -1.0 / ((s + delta) * (s + delta)),
            Self::Square => 2.0,
            Self::Custom { beta_second, .. } => beta_second(s),
        }
    }

    /// `B(s) = int_0^s beta(r) dr`; closed form for the canonical instances,
    /// composite Simpson with 64 panels otherwise.
    pub fn antiderivative(&self, s: f64) -> f64 {
        match *self {
            Self::Identity => 0.5 * s * s,
            Self::LogShift { delta } => (s + delta) * (s + delta).ln() - s - delta * delta.ln(),
            Self::Square => s * s * s / 3.0,
            Self::Custom { beta, .. } => {
                const PANELS: usize = 64;
                let h = s / PANELS as f64;
                let mut acc = beta(0.0) + beta(s);
                for p in 1..PANELS {
                    acc += if p % 2 == 1 { 4.0 } else { 2.0 } * beta(p as f64 * h);
                }
                acc * h / 3.0
            }
        }
    }
}

/// `H_B(c) = int sum_i B(c_i) dx`.
pub fn renorm_entropy(state: &ConcentrationState, beta: &RenormFunction) -> f64 {
    let data = state.data();
    grid::pairwise_sum_by(data.len(), |k| beta.antiderivative(data[k].max(0.0))) * state.grid().cell_volume()
}

/// `int sum_i (beta(c_i) - beta(cbar_i))(c_i - cbar_i) dx`.
pub fn renorm_symrelen(a: &ConcentrationState, b: &ConcentrationState, beta: &RenormFunction) -> Result<f64> {
    a.ensure_same_grid(b)?;
    let (x, y) = (a.data(), b.data());
    let v = grid::pairwise_sum_by(x.len(), |k| (beta.beta(x[k]) - beta.beta(y[k])) * (x[k] - y[k]));
    Ok(v * a.grid().cell_volume())
}

/// `Q = sum_{i != j} (c_i c_j + cbar_i cbar_j) / (2 D_ij) |(u_i - ubar_i) - (u_j - ubar_j)|^2`
/// at one point; velocities are `n` vectors of length `dim`.
pub fn dissipation_density(c: &[f64], cb: &[f64], u: &[f64], ub: &[f64], dim: usize, diff: &DiffusionMatrix) -> f64 {
    let n = c.len();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = (c[i] * c[j] + cb[i] * cb[j]) * 0.5 * diff.inverse(i, j);
            let mut s = 0.0;
            for a in 0..dim {
                let r = (u[i * dim + a] - ub[i * dim + a]) - (u[j * dim + a] - ub[j * dim + a]);
                s += r * r;
            }
            q += w * s;
        }
    }
    q
}

/// Right-hand side of the symmetrized relative entropy identity at one point:
/// `-sum_{i != j} (c_j - cbar_j)(u_i - ubar_i) . (c_i (ubar_i - ubar_j) + cbar_i (u_i - u_j)) / D_ij`.
pub fn identity_rhs_density(c: &[f64], cb: &[f64], u: &[f64], ub: &[f64], dim: usize, diff: &DiffusionMatrix) -> f64 {
    let n = c.len();
    let mut r = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut s = 0.0;
            for a in 0..dim {
                let du = u[i * dim + a] - ub[i * dim + a];
                let t = c[i] * (ub[i * dim + a] - ub[j * dim + a]) + cb[i] * (u[i * dim + a] - u[j * dim + a]);
                s += du * t;
            }
            r -= (c[j] - cb[j]) * s * diff.inverse(i, j);
        }
    }
    r
}

/// Entropy production `sum_i (c_i + cbar_i)(u_i - ubar_i) . grad(ln c_i - ln cbar_i)`;
/// for force-flux velocities it equals `RHS - Q`.
pub fn symrelen_production_density(
    c: &[f64],
    cb: &[f64],
    grad_c: &[f64],
    grad_cb: &[f64],
    u: &[f64],
    ub: &[f64],
    dim: usize,
) -> f64 {
    let mut p = 0.0;
    for i in 0..c.len() {
        for a in 0..dim {
            let ia = i * dim + a;
            p += (c[i] + cb[i]) * (u[ia] - ub[ia]) * (grad_c[ia] / c[i] - grad_cb[ia] / cb[i]);
        }
    }
    p
}

/// Integrates `density(c, cbar, u, ubar)` over the grid.
fn integrate_pair(
    a: &ConcentrationState,
    b: &ConcentrationState,
    ja: &FluxField,
    jb: &FluxField,
    mut density: impl FnMut(&[f64], &[f64], &[f64], &[f64]) -> f64,
) -> Result<f64> {
    a.ensure_same_grid(b)?;
    if ja.grid() != a.grid() || jb.grid() != a.grid() {
        return Err(Error::GridMismatch);
    }
    let (n, dim, m) = (a.species_count(), a.grid().dim(), a.grid().len());
    let (mut c, mut cb) = (vec![0.0; n], vec![0.0; n]);
    let (mut j, mut jbar) = (vec![0.0; n * dim], vec![0.0; n * dim]);
    let mut vals = vec![0.0; m];
    for (k, v) in vals.iter_mut().enumerate() {
        a.composition_at(k, &mut c);
        b.composition_at(k, &mut cb);
        ja.flux_at(k, &mut j);
        jb.flux_at(k, &mut jbar);
        let u = velocities_from_flux(&c, &j, dim);
        let ub = velocities_from_flux(&cb, &jbar, dim);
        *v = density(&c, &cb, &u, &ub);
    }
    Ok(grid::integrate(&vals, a.grid()))
}

/// Integrated dissipation `int Q dx`.
pub fn dissipation(
    a: &ConcentrationState,
    b: &ConcentrationState,
    ja: &FluxField,
    jb: &FluxField,
    diff: &DiffusionMatrix,
) -> Result<f64> {
    let dim = a.grid().dim();
    integrate_pair(a, b, ja, jb, |c, cb, u, ub| dissipation_density(c, cb, u, ub, dim, diff))
}

/// Integrated identity right-hand side.
pub fn identity_rhs(
    a: &ConcentrationState,
    b: &ConcentrationState,
    ja: &FluxField,
    jb: &FluxField,
    diff: &DiffusionMatrix,
) -> Result<f64> {
    let dim = a.grid().dim();
    integrate_pair(a, b, ja, jb, |c, cb, u, ub| identity_rhs_density(c, cb, u, ub, dim, diff))
}

/// Terms of the integrated identity `H_sym(t1) - H_sym(t0) + int Q = int RHS`
/// over a window, with trapezoidal time integration on the snapshot mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IdentityBudget {
    pub t0: f64,
    pub t1: f64,
    pub delta_hsym: f64,
    pub dissipation_integral: f64,
    pub rhs_integral: f64,
    pub residual: f64,
}

/// Snapshot times must agree to this relative precision.
pub const MESH_TOL: f64 = 1e-12;

pub(crate) fn check_mesh(a: &[Snapshot], b: &[Snapshot]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::MeshMismatch);
    }
    for (x, y) in a.iter().zip(b) {
        let scale = x.time().abs().max(1.0);
        if (x.time() - y.time()).abs() > MESH_TOL * scale {
            return Err(Error::MeshMismatch);
        }
    }
    Ok(())
}

/// Evaluates the identity budget on the snapshots whose times lie in `window`.
pub fn identity_residual(
    a: &[Snapshot],
    b: &[Snapshot],
    diff: &DiffusionMatrix,
    window: (f64, f64),
) -> Result<IdentityBudget> {
    check_mesh(a, b)?;
    let slack = MESH_TOL * window.1.abs().max(1.0);
    let idx: Vec<usize> = (0..a.len())
        .filter(|&k| a[k].time() >= window.0 - slack && a[k].time() <= window.1 + slack)
        .collect();
    if idx.is_empty() {
        return Err(Error::MeshMismatch);
    }
    let mut times = Vec::with_capacity(idx.len());
    let mut q = Vec::with_capacity(idx.len());
    let mut rhs = Vec::with_capacity(idx.len());
    for &k in &idx {
        times.push(a[k].time());
        q.push(dissipation(&a[k].state, &b[k].state, &a[k].flux, &b[k].flux, diff)?);
        rhs.push(identity_rhs(&a[k].state, &b[k].state, &a[k].flux, &b[k].flux, diff)?);
    }
    let (first, last) = (idx[0], idx[idx.len() - 1]);
    let h0 = symmetrized_relative_entropy(&a[first].state, &b[first].state)?;
    let h1 = symmetrized_relative_entropy(&a[last].state, &b[last].state)?;
    let dq = trapezoid(&times, &q);
    let dr = trapezoid(&times, &rhs);
    let delta_hsym = h1 - h0;
    Ok(IdentityBudget {
        t0: times[0],
        t1: times[times.len() - 1],
        delta_hsym,
        dissipation_integral: dq,
        rhs_integral: dr,
        residual: (delta_hsym + dq - dr).abs(),
    })
}

/// Trapezoidal rule on a possibly non-uniform mesh.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2).zip(y.windows(2)).map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1])).sum()
}

/// Cumulative trapezoidal integral, starting at zero.
pub fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for k in 0..t.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (y[k] + y[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// Pointwise error terms of the shifted identity plus the quantities
/// `X = sum_i (d_i + dbar_i)|v_i - vbar_i|^2` and `Y = sum_i |d_i - dbar_i|^2`
/// in which their bounds are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorTermDensity {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    pub x: f64,
    pub y: f64,
    /// `sum_{i != j} (d_i d_j + dbar_i dbar_j)/(2 D_ij) |dv_i - dv_j|^2`.
    pub dissipation: f64,
}

/// Evaluates the error terms at one point from shifted concentrations `d`,
/// `dbar` and shifted velocities `v`, `vbar`.
pub fn error_term_density(
    d: &[f64],
    db: &[f64],
    v: &[f64],
    vb: &[f64],
    dim: usize,
    diff: &DiffusionMatrix,
    delta: f64,
) -> ErrorTermDensity {
    let n = d.len();
    let mut e = ErrorTermDensity::default();
    for i in 0..n {
        let dvi2: f64 = (0..dim).map(|a| (v[i * dim + a] - vb[i * dim + a]).powi(2)).sum();
        let row: f64 = (0..n).filter(|&j| j != i).map(|j| diff.inverse(i, j)).sum();
        e.x += (d[i] + db[i]) * dvi2;
        e.y += (d[i] - db[i]).powi(2);
        e.j3 += delta * row * (d[i] + db[i]) * dvi2;
        for j in 0..n {
            if j == i {
                continue;
            }
            let r = diff.inverse(i, j);
            let ddj = d[j] - db[j];
            let (mut s1, mut s2, mut s4, mut sq) = (0.0, 0.0, 0.0, 0.0);
            for a in 0..dim {
                let (ia, ja) = (i * dim + a, j * dim + a);
                let dvi = v[ia] - vb[ia];
                s1 += dvi * (vb[ia] - vb[ja]);
                s2 += dvi * (v[ia] - v[ja]);
                s4 += dvi * (d[j] / d[i] * v[ja] - db[j] / db[i] * vb[ja]);
                let w = dvi - (v[ja] - vb[ja]);
                sq += w * w;
            }
            e.j1 -= d[i] * r * ddj * s1;
            e.j2 -= db[i] * r * ddj * s2;
            e.j4 -= delta * r * (d[i] + db[i]) * s4;
            e.dissipation += 0.5 * r * (d[i] * d[j] + db[i] * db[j]) * sq;
        }
    }
    e
}

/// Analytic right-hand sides for `J1 + J2`, `J3` and `J4`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorBounds {
    pub j12: f64,
    pub j3: f64,
    pub j4: f64,
}

impl ErrorBounds {
    /// Bounds as linear combinations of `X` and `Y`.
    pub fn from_xy(k: &StabilityConstants, x: f64, y: f64) -> Self {
        let (mu, delta) = (k.mu, k.delta);
        let n = k.n as f64;
        Self {
            j12: 0.25 * mu * x + k.c1 / (delta * delta) * y,
            j3: n * delta * k.big_m * x,
            j4: (0.5 * mu + k.c2 * delta) * x + k.c3 / delta.powi(4) * y,
        }
    }
}

/// Integrated error terms with their bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorTerms {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    pub x: f64,
    pub y: f64,
    pub bounds: ErrorBounds,
    /// Cells where some pointwise inequality failed beyond [`BOUND_SLACK`].
    pub pointwise_violations: usize,
}

impl ErrorTerms {
    /// `[J1 + J2 <= b12, J3 <= b3, J4 <= b4]` with [`BOUND_SLACK`].
    pub fn checks(&self) -> [bool; 3] {
        [
            self.j1 + self.j2 <= self.bounds.j12 + BOUND_SLACK,
            self.j3 <= self.bounds.j3 + BOUND_SLACK,
            self.j4 <= self.bounds.j4 + BOUND_SLACK,
        ]
    }

    pub fn holds(&self) -> bool {
        self.pointwise_violations == 0 && self.checks().iter().all(|&b| b)
    }
}

/// Largest Euclidean norm of `c_i u_i` over both flux fields.
pub fn flux_bound(ja: &FluxField, jb: &FluxField) -> f64 {
    ja.max_norm().max(jb.max_norm())
}

/// Error terms `J1..J4` of the shifted identity for a pair of states and their
/// fluxes. The flux bound entering the constants is the larger of
/// `flux_bound` and the value measured on `ja`, `jb`.
pub fn error_terms(
    a: &ConcentrationState,
    b: &ConcentrationState,
    ja: &FluxField,
    jb: &FluxField,
    diff: &DiffusionMatrix,
    delta: f64,
    flux_bound_hint: f64,
) -> Result<ErrorTerms> {
    if !(delta > 0.0) {
        return Err(Error::DeltaNonpositive(delta));
    }
    a.ensure_same_grid(b)?;
    if ja.grid() != a.grid() || jb.grid() != a.grid() {
        return Err(Error::GridMismatch);
    }
    let fb = flux_bound_hint.max(flux_bound(ja, jb));
    let k = StabilityConstants::evaluate(diff, delta, fb);
    let grid: &PeriodicGrid = a.grid();
    let (n, dim, m) = (a.species_count(), grid.dim(), grid.len());
    let (mut d, mut db) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut vb) = (vec![0.0; n * dim], vec![0.0; n * dim]);
    let mut cells = vec![ErrorTermDensity::default(); m];
    let mut violations = 0;
    for (kk, cell) in cells.iter_mut().enumerate() {
        a.composition_at(kk, &mut d);
        b.composition_at(kk, &mut db);
        ja.flux_at(kk, &mut v);
        jb.flux_at(kk, &mut vb);
        for i in 0..n {
            d[i] += delta;
            db[i] += delta;
            for x in 0..dim {
                v[i * dim + x] /= d[i];
                vb[i * dim + x] /= db[i];
            }
        }
        let e = error_term_density(&d, &db, &v, &vb, dim, diff, delta);
        let bd = ErrorBounds::from_xy(&k, e.x, e.y);
        if e.j1 + e.j2 > bd.j12 + BOUND_SLACK || e.j3 > bd.j3 + BOUND_SLACK || e.j4 > bd.j4 + BOUND_SLACK {
            violations += 1;
        }
        *cell = e;
    }
    let vol = grid.cell_volume();
    let field = |f: fn(&ErrorTermDensity) -> f64| grid::pairwise_sum_by(m, |q| f(&cells[q])) * vol;
    let x = field(|e| e.x);
    let y = field(|e| e.y);
    Ok(ErrorTerms {
        j1: field(|e| e.j1),
        j2: field(|e| e.j2),
        j3: field(|e| e.j3),
        j4: field(|e| e.j4),
        x,
        y,
        bounds: ErrorBounds::from_xy(&k, x, y),
        pointwise_violations: violations,
    })
}

/// `|d - dbar|^2 <= (d - dbar)(ln d - ln dbar)` as stated, for `d, dbar > 0`.
///
/// This fails whenever the logarithmic mean of `d` and `dbar` exceeds one.
pub fn csiszar_kullback_check(d: f64, db: f64) -> bool {
    let lhs = (d - db) * (d - db);
    let rhs = (d - db) * (d.ln() - db.ln());
    lhs <= rhs + 4.0 * f64::EPSILON * rhs.abs()
}

/// `|d - dbar|^2 <= max(d, dbar) (d - dbar)(ln d - ln dbar)`, which holds for all
/// positive arguments because the logarithmic mean is at most the maximum.
pub fn csiszar_kullback_scaled_check(d: f64, db: f64) -> bool {
    let lhs = (d - db) * (d - db);
    let rhs = d.max(db) * (d - db) * (d.ln() - db.ln());
    lhs <= rhs + 4.0 * f64::EPSILON * rhs.abs()
}

/// Outcome of evaluating a pointwise check on a tensor grid of arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CkSweep {
    pub samples: usize,
    pub violations: usize,
    /// Some failing argument pair, if any.
    pub first_violation: Option<(f64, f64)>,
    /// Largest `|d - dbar|^2 / ((d - dbar)(ln d - ln dbar))` seen.
    pub worst_ratio: f64,
}

/// Evaluates `check` on `points x points` equispaced pairs of `[lo, hi]^2`.
pub fn ck_sweep(lo: f64, hi: f64, points: usize, check: fn(f64, f64) -> bool) -> CkSweep {
    let step = if points > 1 { (hi - lo) / (points - 1) as f64 } else { 0.0 };
    let mut out = CkSweep { samples: 0, violations: 0, first_violation: None, worst_ratio: 0.0 };
    for p in 0..points {
        let d = lo + step * p as f64;
        for q in 0..points {
            let db = lo + step * q as f64;
            out.samples += 1;
            if !check(d, db) {
                out.violations += 1;
                out.first_violation.get_or_insert((d, db));
            }
            if d != db {
                let ratio = (d - db) / (d.ln() - db.ln());
                out.worst_ratio = out.worst_ratio.max(ratio);
            }
        }
    }
    out
}

/// How an inadmissible shift is handled by the certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum AdmissibilityPolicy {
    /// Fail with `DeltaOutOfRange`.
    #[default]
    Enforce,
    /// Evaluate anyway and flag `admissible = false`.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GronwallPoint {
    pub time: f64,
    /// `F(t)`.
    pub lhs: f64,
    /// `F(0) + c5 / delta^4 int_0^t Y`.
    pub rhs: f64,
    pub margin: f64,
    /// `Y(t) = sum_i ||d_i - dbar_i||^2`.
    pub distance: f64,
    /// `ln((1 + delta) F(0)) + K t`, absent when `F(0) = 0`.
    pub log_envelope: Option<f64>,
    pub envelope_holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GronwallCertificate {
    pub constants: StabilityConstants,
    pub admissible: bool,
    /// Envelope rate `K = (1 + delta) c5 / delta^4`.
    pub rate: f64,
    pub initial_f: f64,
    pub points: Vec<GronwallPoint>,
    pub integral_holds: bool,
    pub envelope_holds: bool,
}

impl GronwallCertificate {
    pub fn holds(&self) -> bool {
        self.integral_holds && self.envelope_holds
    }

    pub fn min_margin(&self) -> f64 {
        self.points.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min)
    }
}

/// Checks `F(t) <= F(0) + c5/delta^4 int_0^t Y` at every sample and the induced
/// envelope `Y(t) <= (1 + delta) F(0) exp(K t)`.
pub fn gronwall_certificate(
    times: &[f64],
    f_delta: &[f64],
    distance: &[f64],
    constants: StabilityConstants,
    policy: AdmissibilityPolicy,
) -> Result<GronwallCertificate> {
    if times.is_empty() || times.len() != f_delta.len() || times.len() != distance.len() {
        return Err(Error::MeshMismatch);
    }
    let delta = constants.delta;
    if !(delta > 0.0) {
        return Err(Error::DeltaNonpositive(delta));
    }
    let admissible = constants.is_admissible();
    if !admissible && policy == AdmissibilityPolicy::Enforce {
        return Err(Error::DeltaOutOfRange { delta, upper: constants.delta_upper });
    }
    let scale = constants.c5 / delta.powi(4);
    let rate = constants.gronwall_rate();
    let f0 = f_delta[0];
    let t0 = times[0];
    let integral = cumulative_trapezoid(times, distance);
    let mut points = Vec::with_capacity(times.len());
    let (mut integral_holds, mut envelope_holds) = (true, true);
    for k in 0..times.len() {
        let rhs = f0 + scale * integral[k];
        let lhs = f_delta[k];
        let log_envelope = (f0 > 0.0).then(|| ((1.0 + delta) * f0).ln() + rate * (times[k] - t0));
        let env_ok = match log_envelope {
            Some(le) => distance[k] <= 0.0 || distance[k].ln() <= le + 1e-12,
            None => true,
        };
        let ok = lhs <= rhs + BOUND_SLACK * rhs.abs().max(1.0);
        integral_holds &= ok;
        envelope_holds &= env_ok;
        points.push(GronwallPoint {
            time: times[k],
            lhs,
            rhs,
            margin: rhs - lhs,
            distance: distance[k],
            log_envelope,
            envelope_holds: env_ok,
        });
    }
    Ok(GronwallCertificate { constants, admissible, rate, initial_f: f0, points, integral_holds, envelope_holds })
}

/// One diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntropyReport {
    pub time: f64,
    pub h: f64,
    pub h_rel: f64,
    pub h_sym: f64,
    pub f_delta: f64,
    pub h_b: f64,
    pub q: f64,
    pub identity_residual: f64,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    pub gronwall_lhs: f64,
    pub gronwall_rhs: f64,
    pub flux_inf_norm: f64,
    pub clipped_mass: f64,
}

impl EntropyReport {
    /// CSV header matching [`EntropyReport::values`].
    pub const COLUMNS: [&'static str; 16] = [
        "t",
        "H",
        "H_rel",
        "H_sym",
        "F_delta",
        "H_B",
        "Q",
        "identity_residual",
        "J1",
        "J2",
        "J3",
        "J4",
        "gronwall_lhs",
        "gronwall_rhs",
        "flux_inf_norm",
        "clipped_mass",
    ];

    pub fn values(&self) -> [f64; 16] {
        [
            self.time,
            self.h,
            self.h_rel,
            self.h_sym,
            self.f_delta,
            self.h_b,
            self.q,
            self.identity_residual,
            self.j1,
            self.j2,
            self.j3,
            self.j4,
            self.gronwall_lhs,
            self.gronwall_rhs,
            self.flux_inf_norm,
            self.clipped_mass,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msflux::{FluxSolver, PointComposition};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn constant(n: usize, c: &[f64]) -> ConcentrationState {
        ConcentrationState::uniform(PeriodicGrid::unit_1d(n).unwrap(), c).unwrap()
    }

    #[test]
    fn entropy_reference_values() {
        let s = constant(8, &[0.25; 4]);
        assert_relative_eq!(entropy(&s), -(4.0f64).ln() - 1.0, epsilon = 1e-14);
        let p = constant(8, &[1.0, 0.0, 0.0]);
        assert_relative_eq!(entropy(&p), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetrized_constant_fields() {
        let a = constant(4, &[0.6, 0.4]);
        let b = constant(4, &[0.4, 0.6]);
        let expected = 2.0 * (0.6f64.ln() - 0.4f64.ln()) * 0.2;
        assert_relative_eq!(symmetrized_relative_entropy(&a, &b).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(symmetrized_relative_entropy(&b, &a).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(expected, 0.16219, epsilon = 1e-5);
        assert_eq!(symmetrized_relative_entropy(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn symmetrized_vanishing_conventions() {
        let a = constant(4, &[1.0, 0.0]);
        let b = constant(4, &[0.5, 0.5]);
        assert_eq!(symmetrized_relative_entropy(&a, &b).unwrap(), f64::INFINITY);
        assert_eq!(symmetrized_relative_entropy(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(symmetrized_relative_entropy_with(&a, &a, BothVanish::Zero).unwrap(), 0.0);
    }

    #[test]
    fn regularized_one_vanishing_species() {
        let a = constant(4, &[1.0, 0.0]);
        let b = constant(4, &[0.5, 0.5]);
        let f = regularized_symrelen(&a, &b, 0.5).unwrap();
        let expected = (1.5f64.ln() - 1.0f64.ln()) * 0.5 + (0.5f64.ln() - 1.0f64.ln()) * -0.5;
        assert_relative_eq!(f, expected, epsilon = 1e-15);
        assert_relative_eq!(f, 0.54931, epsilon = 1e-5);
        assert!(matches!(regularized_symrelen(&a, &b, 0.0), Err(Error::DeltaNonpositive(_))));
    }

    #[test]
    fn regularized_decays_for_large_shift() {
        let a = constant(4, &[0.7, 0.2, 0.1]);
        let b = constant(4, &[0.1, 0.3, 0.6]);
        let mut prev = f64::INFINITY;
        for delta in [1.0, 10.0, 100.0, 1000.0] {
            let f = regularized_symrelen(&a, &b, delta).unwrap();
            assert!(f < prev && f > 0.0);
            prev = f;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn relative_entropy_decomposition() {
        let g = PeriodicGrid::unit_1d(16).unwrap();
        let a = ConcentrationState::from_fn(g.clone(), 2, 0.0, |x, c| {
            c[0] = 0.5 + 0.3 * (6.0 * x[0]).sin();
            c[1] = 1.0 - c[0];
        })
        .unwrap();
        let b = ConcentrationState::from_fn(g, 2, 0.0, |x, c| {
            c[0] = 0.4 + 0.2 * (3.0 * x[0]).cos();
            c[1] = 1.0 - c[0];
        })
        .unwrap();
        let sum = relative_entropy(&a, &b).unwrap() + relative_entropy(&b, &a).unwrap();
        assert_relative_eq!(symmetrized_relative_entropy(&a, &b).unwrap(), sum, epsilon = 1e-12);
    }

    #[test]
    fn renormalized_instances() {
        let a = constant(4, &[0.6, 0.4]);
        let b = constant(4, &[0.4, 0.6]);
        let sq = renorm_symrelen(&a, &b, &RenormFunction::Square).unwrap();
        assert_relative_eq!(sq, 0.08, epsilon = 1e-15);
        let id = renorm_symrelen(&a, &b, &RenormFunction::Identity).unwrap();
        assert_relative_eq!(id, 0.08, epsilon = 1e-15);
        let lg = renorm_symrelen(&a, &b, &RenormFunction::log_shift(0.3).unwrap()).unwrap();
        assert_relative_eq!(lg, regularized_symrelen(&a, &b, 0.3).unwrap(), epsilon = 1e-15);
        assert!(RenormFunction::log_shift(1.0).is_err());
    }

    #[test]
    fn log_shift_derivative_bounds() {
        let delta = 0.05;
        let beta = RenormFunction::log_shift(delta).unwrap();
        for k in 0..=1000 {
            let s = k as f64 / 1000.0;
            assert!(beta.beta_prime(s).abs() <= 1.0 / delta);
            assert!((s.sqrt() * beta.beta_second(s)).abs() <= 1.0 / (delta * delta));
        }
    }

    #[test]
    fn antiderivatives_agree_with_quadrature() {
        fn cube(s: f64) -> f64 {
            s * s * s
        }
        let custom = RenormFunction::Custom { label: "cube", beta: cube, beta_prime: |s| 3.0 * s * s, beta_second: |s| 6.0 * s };
        assert_relative_eq!(custom.antiderivative(0.8), 0.8f64.powi(4) / 4.0, epsilon = 1e-14);
        let lg = RenormFunction::LogShift { delta: 0.2 };
        let h = 0.7 / 20000.0;
        let num: f64 = (0..20000).map(|k| lg.beta((k as f64 + 0.5) * h) * h).sum();
        assert_relative_eq!(lg.antiderivative(0.7), num, epsilon = 1e-8);
    }

    #[test]
    fn dissipation_hand_value() {
        let d = DiffusionMatrix::uniform(2, 1.0).unwrap();
        let c = [0.5, 0.5];
        let u = [1.0, 0.0, 0.0, -1.0, 0.0, 0.0];
        let q = dissipation_density(&c, &c, &u, &[0.0; 6], 3, &d);
        assert_relative_eq!(q, 2.0, epsilon = 1e-15);
        let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        assert_relative_eq!(dissipation_density(&c, &c, &u2, &[0.0; 6], 3, &d), 8.0, epsilon = 1e-15);
        assert_eq!(dissipation_density(&c, &c, &u, &u, 3, &d), 0.0);
    }

    #[test]
    fn ck_reference_points() {
        assert!(csiszar_kullback_check(0.7, 0.7));
        assert!(csiszar_kullback_check(2.0, 0.1));
        // Logarithmic mean of 2 and 1.9 is about 1.95 > 1.
        assert!(!csiszar_kullback_check(2.0, 1.9));
        assert!(csiszar_kullback_scaled_check(2.0, 1.9));
        let s = ck_sweep(0.01, 2.0, 200, csiszar_kullback_scaled_check);
        assert_eq!(s.violations, 0);
        assert_eq!(s.samples, 40_000);
    }

    #[test]
    fn gronwall_identical_inputs() {
        let d = DiffusionMatrix::uniform(3, 1.0).unwrap();
        let k = StabilityConstants::evaluate(&d, 0.05, 0.1);
        let times = [0.0, 0.1, 0.2];
        let z = [0.0; 3];
        assert!(matches!(
            gronwall_certificate(&times, &z, &z, k, AdmissibilityPolicy::Enforce),
            Err(Error::DeltaOutOfRange { .. })
        ));
        let cert = gronwall_certificate(&times, &z, &z, k, AdmissibilityPolicy::Report).unwrap();
        assert!(cert.holds() && !cert.admissible);
        assert_eq!(cert.min_margin(), 0.0);
        assert!(gronwall_certificate(&times, &z[..2], &z, k, AdmissibilityPolicy::Report).is_err());
    }

    #[test]
    fn gronwall_envelope_detects_growth() {
        let d = DiffusionMatrix::uniform(2, 1.0).unwrap();
        let k = StabilityConstants::evaluate(&d, 1e-3, 0.0);
        // With zero flux bound K = 0, so any growth of Y beyond (1 + delta) F(0) is flagged.
        let cert = gronwall_certificate(&[0.0, 1.0], &[1.0, 1.0], &[0.5, 3.0], k, AdmissibilityPolicy::Enforce).unwrap();
        assert!(!cert.envelope_holds);
        assert!(cert.integral_holds);
    }

    fn random_point(seed: &[f64], n: usize) -> Vec<f64> {
        let mut c: Vec<f64> = seed[..n].iter().map(|x| x + 0.05).collect();
        let s: f64 = c.iter().sum();
        c.iter_mut().for_each(|x| *x /= s);
        c
    }

    fn zero_sum(g: &[f64], n: usize, dim: usize) -> Vec<f64> {
        let mut g = g[..n * dim].to_vec();
        for a in 0..dim {
            let mean: f64 = (0..n).map(|i| g[i * dim + a]).sum::<f64>() / n as f64;
            for i in 0..n {
                g[i * dim + a] -= mean;
            }
        }
        g
    }

    proptest! {
        #[test]
        fn entropy_identity_holds_pointwise(
            n in 2usize..6,
            dim in 1usize..3,
            ca in proptest::collection::vec(0.0f64..1.0, 6),
            cb in proptest::collection::vec(0.0f64..1.0, 6),
            ga in proptest::collection::vec(-2.0f64..2.0, 12),
            gb in proptest::collection::vec(-2.0f64..2.0, 12),
            dd in proptest::collection::vec(0.2f64..3.0, 36),
        ) {
            let diff = DiffusionMatrix::from_fn(n, |i, j| dd[i * 6 + j]).unwrap();
            let (c, cbar) = (random_point(&ca, n), random_point(&cb, n));
            let (g, gbar) = (zero_sum(&ga, n, dim), zero_sum(&gb, n, dim));
            let mut solver = FluxSolver::new();
            let (mut j, mut jbar) = (vec![0.0; n * dim], vec![0.0; n * dim]);
            solver.solve_into(&c, &g, dim, &diff, &mut j).unwrap();
            solver.solve_into(&cbar, &gbar, dim, &diff, &mut jbar).unwrap();
            let u = velocities_from_flux(&c, &j, dim);
            let ub = velocities_from_flux(&cbar, &jbar, dim);
            let p = symrelen_production_density(&c, &cbar, &g, &gbar, &u, &ub, dim);
            let q = dissipation_density(&c, &cbar, &u, &ub, dim, &diff);
            let r = identity_rhs_density(&c, &cbar, &u, &ub, dim, &diff);
            prop_assert!((p - (r - q)).abs() <= 1e-9 * (1.0 + p.abs() + q.abs()));
            prop_assert!(q >= 0.0);
        }

        #[test]
        fn shifted_identity_and_bounds_hold_pointwise(
            n in 2usize..6,
            dim in 1usize..3,
            delta in 0.001f64..0.9,
            ca in proptest::collection::vec(0.0f64..1.0, 6),
            cb in proptest::collection::vec(0.0f64..1.0, 6),
            ga in proptest::collection::vec(-2.0f64..2.0, 12),
            gb in proptest::collection::vec(-2.0f64..2.0, 12),
            dd in proptest::collection::vec(0.2f64..3.0, 36),
        ) {
            let diff = DiffusionMatrix::from_fn(n, |i, j| dd[i * 6 + j]).unwrap();
            let (c, cbar) = (random_point(&ca, n), random_point(&cb, n));
            let (g, gbar) = (zero_sum(&ga, n, dim), zero_sum(&gb, n, dim));
            let mut solver = FluxSolver::new();
            let (mut j, mut jbar) = (vec![0.0; n * dim], vec![0.0; n * dim]);
            solver.solve_into(&c, &g, dim, &diff, &mut j).unwrap();
            solver.solve_into(&cbar, &gbar, dim, &diff, &mut jbar).unwrap();
            let d: Vec<f64> = c.iter().map(|x| x + delta).collect();
            let db: Vec<f64> = cbar.iter().map(|x| x + delta).collect();
            let v: Vec<f64> = (0..n * dim).map(|ia| j[ia] / d[ia / dim]).collect();
            let vb: Vec<f64> = (0..n * dim).map(|ia| jbar[ia] / db[ia / dim]).collect();
            let e = error_term_density(&d, &db, &v, &vb, dim, &diff, delta);
            // grad d = grad c, so the production term uses the same gradients.
            let p = symrelen_production_density(&d, &db, &g, &gbar, &v, &vb, dim);
            let total = e.j1 + e.j2 + e.j3 + e.j4 - e.dissipation;
            prop_assert!((p - total).abs() <= 1e-9 * (1.0 + p.abs() + e.dissipation));
            let fb = (0..n).map(|i| {
                let s: f64 = (0..dim).map(|a| j[i * dim + a].powi(2)).sum();
                let sb: f64 = (0..dim).map(|a| jbar[i * dim + a].powi(2)).sum();
                s.sqrt().max(sb.sqrt())
            }).fold(0.0, f64::max);
            let k = StabilityConstants::evaluate(&diff, delta, fb);
            let b = ErrorBounds::from_xy(&k, e.x, e.y);
            prop_assert!(e.j1 + e.j2 <= b.j12 + BOUND_SLACK);
            prop_assert!(e.j3 <= b.j3 + BOUND_SLACK);
            prop_assert!(e.j4 <= b.j4 + BOUND_SLACK);
            // Dissipation lower bound from the spectral estimate.
            let corr = k.dissipation_correction / (delta * delta) * e.y;
            prop_assert!(e.dissipation >= k.mu * e.x - corr - 1e-9 * (1.0 + e.dissipation));
        }

        #[test]
        fn dissipation_ignores_common_drift(
            u in proptest::collection::vec(-1.0f64..1.0, 6),
            ub in proptest::collection::vec(-1.0f64..1.0, 6),
            w in proptest::collection::vec(-5.0f64..5.0, 2),
        ) {
            let diff = DiffusionMatrix::from_fn(3, |i, j| 0.5 + (i + j) as f64).unwrap();
            let c = [0.2, 0.3, 0.5];
            let cb = [0.6, 0.3, 0.1];
            let q0 = dissipation_density(&c, &cb, &u, &ub, 2, &diff);
            let shift = |x: &[f64]| -> Vec<f64> { (0..6).map(|ia| x[ia] + w[ia % 2]).collect() };
            let q1 = dissipation_density(&c, &cb, &shift(&u), &shift(&ub), 2, &diff);
            prop_assert!((q0 - q1).abs() <= 1e-12 * (1.0 + q0));
        }

        #[test]
        fn regularized_dominates_scaled_distance(
            ca in proptest::collection::vec(0.0f64..1.0, 3),
            cb in proptest::collection::vec(0.0f64..1.0, 3),
            delta in 0.001f64..0.99,
        ) {
            let a = constant(3, &random_point(&ca, 3));
            let b = constant(3, &random_point(&cb, 3));
            let f = regularized_symrelen(&a, &b, delta).unwrap();
            let l2: f64 = (0..3).map(|i| (a.species(i)[0] - b.species(i)[0]).powi(2)).sum();
            prop_assert!(f >= 0.0);
            prop_assert!(f * (1.0 + delta) >= l2 * (1.0 - 1e-12));
        }

        #[test]
        fn composition_rejects_sum_defect(x in 0.0f64..1.0, defect in 1e-9f64..1e-3) {
            prop_assert!(PointComposition::new(vec![x, 1.0 - x + defect]).is_err());
        }
    }
}
