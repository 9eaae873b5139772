//! Space-time test functions, periodic in space.

use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

/// A smooth function of `(x, t)` with its time derivative and spatial gradient.
pub trait TestFunction {
    fn value(&self, x: &[f64], t: f64) -> f64;
    fn time_derivative(&self, x: &[f64], t: f64) -> f64;
    /// Writes `grad_x phi` into `out[..x.len()]`.
    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]);
}

/// `phi = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroTest;

impl TestFunction for ZeroTest {
    fn value(&self, _: &[f64], _: f64) -> f64 {
        0.0
    }
    fn time_derivative(&self, _: &[f64], _: f64) -> f64 {
        0.0
    }
    fn gradient(&self, x: &[f64], _: f64, out: &mut [f64]) {
        out[..x.len()].fill(0.0);
    }
}

/// Spatial factor `1 + a sum_axis cos(2 pi k x_axis / L_axis)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineProfile {
    pub amplitude: f64,
    pub wavenumber: f64,
    pub lengths: [f64; 3],
}

impl CosineProfile {
    pub fn new(amplitude: f64, wavenumber: f64, lengths: &[f64]) -> Self {
        let mut l = [1.0; 3];
        l[..lengths.len()].copy_from_slice(lengths);
        Self { amplitude, wavenumber, lengths: l }
    }

    #[inline]
    fn value(&self, x: &[f64]) -> f64 {
        1.0 + self.amplitude
            * x.iter().enumerate().map(|(a, xa)| (2.0 * PI * self.wavenumber * xa / self.lengths[a]).cos()).sum::<f64>()
    }

    #[inline]
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (a, xa) in x.iter().enumerate() {
            let w = 2.0 * PI * self.wavenumber / self.lengths[a];
            out[a] = -self.amplitude * w * (w * xa).sin();
        }
    }
}

/// `phi = profile(x) * eta(t)` with `eta` the smooth bump `exp(-1/(1-s^2))`
/// mapped onto `(t0, t1)`; compactly supported in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpInTime {
    pub profile: CosineProfile,
    pub t0: f64,
    pub t1: f64,
}

impl BumpInTime {
    pub fn new(profile: CosineProfile, t0: f64, t1: f64) -> Self {
        Self { profile, t0, t1 }
    }

    #[inline]
    fn eta(&self, t: f64) -> (f64, f64) {
        let half = 0.5 * (self.t1 - self.t0);
        let s = (t - 0.5 * (self.t0 + self.t1)) / half;
        if s.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let q = 1.0 - s * s;
        let e = (-1.0 / q).exp();
        // d/ds exp(-1/(1-s^2)) = -2s/(1-s^2)^2 * exp(..)
        (e, -2.0 * s / (q * q) * e / half)
    }
}

impl TestFunction for BumpInTime {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.profile.value(x) * self.eta(t).0
    }
    fn time_derivative(&self, x: &[f64], t: f64) -> f64 {
        self.profile.value(x) * self.eta(t).1
    }
    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.profile.gradient(x, out);
        let e = self.eta(t).0;
        out[..x.len()].iter_mut().for_each(|g| *g *= e);
    }
}

/// `phi = profile(x) * (1 - (t/tau)^2)^2` on `[0, tau)`, zero afterwards.
/// Nonzero at `t = 0`, continuously differentiable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialWindow {
    pub profile: CosineProfile,
    pub tau: f64,
}

impl InitialWindow {
    pub fn new(profile: CosineProfile, tau: f64) -> Self {
        Self { profile, tau }
    }

    #[inline]
    fn eta(&self, t: f64) -> (f64, f64) {
        let s = t / self.tau;
        if s.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let q = 1.0 - s * s;
        (q * q, -4.0 * s * q / self.tau)
    }
}

impl TestFunction for InitialWindow {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.profile.value(x) * self.eta(t).0
    }
    fn time_derivative(&self, x: &[f64], t: f64) -> f64 {
        self.profile.value(x) * self.eta(t).1
    }
    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.profile.gradient(x, out);
        let e = self.eta(t).0;
        out[..x.len()].iter_mut().for_each(|g| *g *= e);
    }
}
