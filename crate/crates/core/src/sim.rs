//! Explicit conservative time stepping, trajectories, weak-form residuals and
//! twin-trajectory stability experiments.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::entropy::{
    self, cumulative_trapezoid, dissipation, entropy, error_terms, gronwall_certificate, identity_rhs,
    regularized_symrelen, relative_entropy, renorm_entropy, symmetrized_relative_entropy, trapezoid,
    AdmissibilityPolicy, EntropyReport, ErrorTerms, GronwallCertificate, RenormFunction,
};
use crate::error::{Error, Result};
use crate::grid::{self, PeriodicGrid};
use crate::msflux::{DiffusionMatrix, FluxSolver, StabilityConstants, SIMPLEX_TOL};
use crate::state::{ConcentrationState, FluxField, Snapshot};
use crate::testfn::TestFunction;

pub const DEFAULT_CFL: f64 = 0.25;
pub const DEFAULT_DELTA: f64 = 0.05;
/// Cells with an entry below this value are clipped.
pub const POSITIVITY_FLOOR: f64 = -1e-12;
/// Largest clipped mass tolerated in a single step.
pub const CLIP_BUDGET: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TimeScheme {
    #[default]
    Euler,
    /// Two-stage explicit trapezoid.
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StepPolicy {
    /// `dt = cfl * h^2 / (dim * D_max)`, shortened so the run lands on the horizon.
    Cfl(f64),
    Fixed(f64),
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Cfl(DEFAULT_CFL)
    }
}

/// Largest stable explicit step `h_min^2 / (2 dim D_max)`.
pub fn stability_limit(grid: &PeriodicGrid, diff: &DiffusionMatrix) -> f64 {
    let h = grid.min_spacing();
    h * h / (2.0 * grid.dim() as f64 * diff.max_coefficient())
}

/// One Fourier mode `a_i cos(2 pi k.x / L + phase)` with zero-sum amplitudes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mode {
    pub amplitudes: Vec<f64>,
    pub wavevector: [i32; 3],
    pub phase: f64,
}

impl Mode {
    #[inline]
    fn angle(&self, grid: &PeriodicGrid, x: &[f64]) -> f64 {
        (0..grid.dim()).map(|a| 2.0 * PI * self.wavevector[a] as f64 * x[a] / grid.length(a)).sum::<f64>() + self.phase
    }

    /// `|2 pi k / L|^2`.
    pub fn frequency_sq(&self, grid: &PeriodicGrid) -> f64 {
        (0..grid.dim()).map(|a| (2.0 * PI * self.wavevector[a] as f64 / grid.length(a)).powi(2)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum InitialData {
    Uniform(Vec<f64>),
    /// Background composition plus Fourier modes.
    Modes { background: Vec<f64>, modes: Vec<Mode> },
}

impl InitialData {
    pub fn species(&self) -> usize {
        match self {
            InitialData::Uniform(c) => c.len(),
            InitialData::Modes { background, .. } => background.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let (bg, modes): (&[f64], &[Mode]) = match self {
            InitialData::Uniform(c) => (c, &[]),
            InitialData::Modes { background, modes } => (background, modes),
        };
        if (bg.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidScenario("background composition must sum to one"));
        }
        for m in modes {
            if m.amplitudes.len() != bg.len() {
                return Err(Error::DimensionMismatch { expected: bg.len(), found: m.amplitudes.len() });
            }
            if m.amplitudes.iter().sum::<f64>().abs() > SIMPLEX_TOL {
                return Err(Error::InvalidScenario("mode amplitudes must sum to zero"));
            }
        }
        Ok(())
    }

    /// The data at time `t` of the heat flow with diffusivity `d`, exact for
    /// binary mixtures and for equal coefficients.
    fn heat_flow(&self, grid: &PeriodicGrid, d: f64, t: f64) -> Result<ConcentrationState> {
        self.validate()?;
        let state = match self {
            InitialData::Uniform(c) => ConcentrationState::from_fn(grid.clone(), c.len(), t, |_, out| out.copy_from_slice(c))?,
            InitialData::Modes { background, modes } => {
                let decay: Vec<f64> = modes.iter().map(|m| (-d * m.frequency_sq(grid) * t).exp()).collect();
                ConcentrationState::from_fn(grid.clone(), background.len(), t, |x, out| {
                    out.copy_from_slice(background);
                    for (m, g) in modes.iter().zip(&decay) {
                        let c = g * m.angle(grid, x).cos();
                        for (o, a) in out.iter_mut().zip(&m.amplitudes) {
                            *o += a * c;
                        }
                    }
                })?
            }
        };
        Ok(state)
    }

    pub fn sample(&self, grid: &PeriodicGrid) -> Result<ConcentrationState> {
        self.heat_flow(grid, 0.0, 0.0)
    }
}

/// An additive perturbation `amplitude * direction_i * sin(2 pi k.x / L)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Perturbation {
    pub amplitude: f64,
    pub wavevector: [i32; 3],
    /// Zero-sum species direction.
    pub direction: Vec<f64>,
}

impl Perturbation {
    /// Direction `(1, -1, 0, ..., 0)`.
    pub fn new(amplitude: f64, wavevector: [i32; 3], n: usize) -> Self {
        let mut direction = vec![0.0; n];
        direction[0] = 1.0;
        direction[1] = -1.0;
        Self { amplitude, wavevector, direction }
    }

    pub fn apply(&self, state: &ConcentrationState) -> Result<ConcentrationState> {
        let n = state.species_count();
        if self.direction.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.direction.len() });
        }
        if self.direction.iter().sum::<f64>().abs() > SIMPLEX_TOL {
            return Err(Error::InvalidScenario("perturbation direction must sum to zero"));
        }
        let grid = state.grid().clone();
        let m = grid.len();
        let mut data = state.data().to_vec();
        for k in 0..m {
            let x = grid.center(k);
            let angle: f64 =
                (0..grid.dim()).map(|a| 2.0 * PI * self.wavevector[a] as f64 * x[a] / grid.length(a)).sum();
            let s = self.amplitude * angle.sin();
            for i in 0..n {
                data[i * m + k] += s * self.direction[i];
            }
        }
        ConcentrationState::new(grid, n, data, state.time())
    }
}

/// A complete description of one run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scenario {
    pub grid: PeriodicGrid,
    pub diffusion: DiffusionMatrix,
    /// Shift used by the regularized diagnostics.
    pub delta: f64,
    pub initial: InitialData,
    pub horizon: f64,
    pub step: StepPolicy,
    pub scheme: TimeScheme,
    /// Steps between snapshots; zero records only the endpoints.
    pub cadence: usize,
    pub perturbation: Option<Perturbation>,
}

impl Scenario {
    /// Defaults: shift 0.05, CFL 0.25, Euler, a snapshot every step, no perturbation.
    pub fn new(grid: PeriodicGrid, diffusion: DiffusionMatrix, initial: InitialData, horizon: f64) -> Self {
        Self {
            grid,
            diffusion,
            delta: DEFAULT_DELTA,
            initial,
            horizon,
            step: StepPolicy::default(),
            scheme: TimeScheme::default(),
            cadence: 1,
            perturbation: None,
        }
    }

    pub fn species(&self) -> usize {
        self.diffusion.species()
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial.species() != self.species() {
            return Err(Error::DimensionMismatch { expected: self.species(), found: self.initial.species() });
        }
        if !(self.delta > 0.0) {
            return Err(Error::DeltaNonpositive(self.delta));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidScenario("horizon must be positive"));
        }
        self.initial.validate()?;
        if let Some(p) = &self.perturbation {
            if p.direction.len() != self.species() {
                return Err(Error::DimensionMismatch { expected: self.species(), found: p.direction.len() });
            }
        }
        self.time_step().map(|_| ())
    }

    /// The step actually taken and the number of steps to the horizon.
    pub fn time_step(&self) -> Result<(f64, usize)> {
        let limit = stability_limit(&self.grid, &self.diffusion);
        let target = match self.step {
            StepPolicy::Cfl(c) => {
                if !(c > 0.0) {
                    return Err(Error::InvalidScenario("CFL number must be positive"));
                }
                2.0 * c * limit
            }
            StepPolicy::Fixed(dt) => {
                if !(dt > 0.0) {
                    return Err(Error::InvalidScenario("time step must be positive"));
                }
                dt
            }
        };
        if target > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt: target, limit });
        }
        let steps = match self.step {
            StepPolicy::Cfl(_) => (self.horizon / target - 1e-9).ceil().max(1.0) as usize,
            StepPolicy::Fixed(dt) => {
                let k = (self.horizon / dt).round().max(1.0);
                if (k * dt - self.horizon).abs() > 1e-9 * self.horizon {
                    return Err(Error::InvalidScenario("horizon is not a multiple of the time step"));
                }
                k as usize
            }
        };
        Ok((self.horizon / steps as f64, steps))
    }

    pub fn initial_state(&self) -> Result<ConcentrationState> {
        if self.initial.species() != self.species() {
            return Err(Error::DimensionMismatch { expected: self.species(), found: self.initial.species() });
        }
        self.initial.sample(&self.grid)
    }

    /// Base and perturbed initial states; identical without a perturbation.
    pub fn twin_initial_states(&self) -> Result<(ConcentrationState, ConcentrationState)> {
        let base = self.initial_state()?;
        let other = match &self.perturbation {
            Some(p) => p.apply(&base)?,
            None => base.clone(),
        };
        Ok((base, other))
    }

    /// Exact solution at time `t` for binary mixtures or equal coefficients.
    pub fn exact_solution(&self, t: f64) -> Result<ConcentrationState> {
        let n = self.species();
        let d = self.diffusion.coefficient(0, 1);
        let equal = (0..n).all(|i| (0..n).all(|j| i == j || self.diffusion.coefficient(i, j) == d));
        if !equal {
            return Err(Error::InvalidScenario("no closed form for unequal coefficients"));
        }
        self.initial.heat_flow(&self.grid, d, t)
    }
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub clipped_mass: f64,
    /// Largest face flux component magnitude over all stages.
    pub face_flux_max: f64,
}

/// Reusable workspace for the finite-volume update.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: PeriodicGrid,
    diff: DiffusionMatrix,
    scheme: TimeScheme,
    solver: FluxSolver,
    face: Vec<f64>,
    rate: Vec<f64>,
    rate2: Vec<f64>,
    stage: Vec<f64>,
    c: Vec<f64>,
    g: Vec<f64>,
    j: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: PeriodicGrid, diff: DiffusionMatrix, scheme: TimeScheme) -> Self {
        let (n, m, dim) = (diff.species(), grid.len(), grid.dim());
        Self {
            face: vec![0.0; n * dim * m],
            rate: vec![0.0; n * m],
            rate2: vec![0.0; n * m],
            stage: vec![0.0; n * m],
            c: vec![0.0; n],
            g: vec![0.0; n],
            j: vec![0.0; n],
            solver: FluxSolver::new(),
            grid,
            diff,
            scheme,
        }
    }

    /// Face fluxes `face[(i * dim + a) * cells + k]` on the face between `k`
    /// and its upper neighbor along `a`. Returns the largest magnitude.
    pub fn face_fluxes(&mut self, data: &[f64]) -> Result<f64> {
        let (n, m, dim) = (self.diff.species(), self.grid.len(), self.grid.dim());
        let mut worst: f64 = 0.0;
        for a in 0..dim {
            let inv = 1.0 / self.grid.spacing(a);
            for k in 0..m {
                let kp = self.grid.step(k, a, true);
                let mut s = 0.0;
                let mut mean = 0.0;
                for i in 0..n {
                    let (lo, hi) = (data[i * m + k], data[i * m + kp]);
                    self.c[i] = 0.5 * (lo + hi);
                    self.g[i] = (hi - lo) * inv;
                    s += self.c[i];
                    mean += self.g[i];
                }
                mean /= n as f64;
                for i in 0..n {
                    self.c[i] /= s;
                    self.g[i] -= mean;
                }
                self.solver.solve_into(&self.c, &self.g, 1, &self.diff, &mut self.j)?;
                for i in 0..n {
                    self.face[(i * dim + a) * m + k] = self.j[i];
                    worst = worst.max(self.j[i].abs());
                }
            }
        }
        Ok(worst)
    }

    /// `out = -div J(data)`.
    fn rates(&mut self, data: &[f64], second: bool) -> Result<f64> {
        let worst = self.face_fluxes(data)?;
        let (n, m, dim) = (self.diff.species(), self.grid.len(), self.grid.dim());
        let out = if second { &mut self.rate2 } else { &mut self.rate };
        for i in 0..n {
            grid::divergence(&self.face[i * dim * m..(i + 1) * dim * m], &self.grid, &mut out[i * m..(i + 1) * m]);
        }
        out.iter_mut().for_each(|x| *x = -*x);
        Ok(worst)
    }

    /// Advances `state` by `dt` in place.
    pub fn step(&mut self, state: &mut ConcentrationState, dt: f64) -> Result<StepInfo> {
        if !state.grid().same_as(&self.grid) || state.species_count() != self.diff.species() {
            return Err(Error::GridMismatch);
        }
        let mut worst = self.rates(state.data(), false)?;
        match self.scheme {
            TimeScheme::Euler => {
                for (c, r) in state.data_mut().iter_mut().zip(&self.rate) {
                    *c += dt * r;
                }
            }
            TimeScheme::Heun => {
                for ((s, c), r) in self.stage.iter_mut().zip(state.data()).zip(&self.rate) {
                    *s = c + dt * r;
                }
                let stage = core::mem::take(&mut self.stage);
                let second = self.rates(&stage, true);
                self.stage = stage;
                worst = worst.max(second?);
                for ((c, r1), r2) in state.data_mut().iter_mut().zip(&self.rate).zip(&self.rate2) {
                    *c += 0.5 * dt * (r1 + r2);
                }
            }
        }
        let clipped = clip_negative(state);
        if clipped > CLIP_BUDGET {
            return Err(Error::PositivityFailure { clipped_mass: clipped, budget: CLIP_BUDGET });
        }
        state.set_time(state.time() + dt);
        Ok(StepInfo { clipped_mass: clipped, face_flux_max: worst })
    }
}

/// Zeroes entries below [`POSITIVITY_FLOOR`] and renormalizes those cells.
/// Returns the removed mass.
fn clip_negative(state: &mut ConcentrationState) -> f64 {
    let (n, m) = (state.species_count(), state.grid().len());
    let vol = state.grid().cell_volume();
    let data = state.data_mut();
    let mut clipped = 0.0;
    for k in 0..m {
        if (0..n).all(|i| data[i * m + k] >= POSITIVITY_FLOOR) {
            continue;
        }
        let mut s = 0.0;
        for i in 0..n {
            let x = &mut data[i * m + k];
            if *x < 0.0 {
                clipped -= *x * vol;
                *x = 0.0;
            }
            s += *x;
        }
        for i in 0..n {
            data[i * m + k] /= s;
        }
    }
    clipped
}

/// One explicit Euler step with a stability check.
pub fn step(state: &ConcentrationState, diff: &DiffusionMatrix, dt: f64) -> Result<ConcentrationState> {
    let limit = stability_limit(state.grid(), diff);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    let mut next = state.clone();
    Stepper::new(state.grid().clone(), diff.clone(), TimeScheme::Euler).step(&mut next, dt)?;
    Ok(next)
}

/// Snapshots of one run plus per-step bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub dt: f64,
    pub steps: usize,
    /// Largest flux magnitude over snapshots and every face solve.
    pub flux_bound: f64,
    /// Cumulative clipped mass at each snapshot.
    pub clipped_mass: Vec<f64>,
    /// Entropy after every step, starting with the initial state.
    pub entropy_per_step: Vec<f64>,
    pub initial_masses: Vec<f64>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(Snapshot::time).collect()
    }

    pub fn final_state(&self) -> &ConcentrationState {
        &self.snapshots[self.snapshots.len() - 1].state
    }

    /// Largest per-species mass change over the snapshots.
    pub fn mass_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for s in &self.snapshots {
            for (i, m0) in self.initial_masses.iter().enumerate() {
                worst = worst.max((s.state.mass(i) - m0).abs());
            }
        }
        worst
    }

    /// Largest `|sum_i c_i - 1|` over the snapshots.
    pub fn simplex_defect(&self) -> f64 {
        self.snapshots.iter().map(|s| s.state.simplex_defect()).fold(0.0, f64::max)
    }

    /// Largest single-step entropy increase; nonpositive when entropy decays.
    pub fn entropy_increase(&self) -> f64 {
        self.entropy_per_step.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn entropy_series(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| entropy(&s.state)).collect()
    }
}

/// Runs the scenario from its own initial data.
pub fn run(scenario: &Scenario) -> Result<Trajectory> {
    scenario.validate()?;
    run_from(scenario, scenario.initial_state()?)
}

/// Runs the scenario's dynamics from `initial`.
pub fn run_from(scenario: &Scenario, initial: ConcentrationState) -> Result<Trajectory> {
    let (dt, steps) = scenario.time_step()?;
    if !initial.grid().same_as(&scenario.grid) || initial.species_count() != scenario.species() {
        return Err(Error::GridMismatch);
    }
    initial.validate()?;
    let diff = &scenario.diffusion;
    let mut stepper = Stepper::new(scenario.grid.clone(), diff.clone(), scenario.scheme);
    let mut solver = FluxSolver::new();
    let t0 = initial.time();
    let initial_masses = initial.masses();
    let mut state = initial;
    let mut entropy_per_step = Vec::with_capacity(steps + 1);
    entropy_per_step.push(entropy(&state));
    let mut snapshots = Vec::new();
    let mut clipped_mass = Vec::new();
    let mut flux_bound: f64 = 0.0;
    let mut clipped = 0.0;

    let mut record = |state: &ConcentrationState, clipped: f64, flux_bound: &mut f64| -> Result<()> {
        let flux = FluxField::cell_centered(state, diff, &mut solver)?;
        *flux_bound = flux_bound.max(flux.max_norm());
        snapshots.push(Snapshot { state: state.clone(), flux });
        clipped_mass.push(clipped);
        Ok(())
    };
    record(&state, 0.0, &mut flux_bound)?;
    for s in 1..=steps {
        let info = stepper.step(&mut state, dt)?;
        state.set_time(t0 + s as f64 * dt);
        clipped += info.clipped_mass;
        flux_bound = flux_bound.max(info.face_flux_max);
        entropy_per_step.push(entropy(&state));
        if s == steps || (scenario.cadence > 0 && s % scenario.cadence == 0) {
            record(&state, clipped, &mut flux_bound)?;
        }
    }
    Ok(Trajectory { snapshots, dt, steps, flux_bound, clipped_mass, entropy_per_step, initial_masses })
}

/// Root of `sum_i int (c_i - cbar_i)^2 dx`.
pub fn l2_distance(a: &ConcentrationState, b: &ConcentrationState) -> Result<f64> {
    a.ensure_same_grid(b)?;
    let (x, y) = (a.data(), b.data());
    let s = grid::pairwise_sum_by(x.len(), |k| (x[k] - y[k]).powi(2));
    Ok((s * a.grid().cell_volume()).sqrt())
}

/// Renormalized weak-form residual per species and `sum_i |R_i|`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeakResidual {
    pub per_species: Vec<f64>,
    pub total: f64,
}

/// Evaluates, per species,
/// `int int beta(c) d_t phi + beta'(c) J.grad phi + beta''(c) (grad c . J) phi
///  + int beta(c(0)) phi(0) - int beta(c(T)) phi(T)`
/// on the trajectory snapshots: central gradients in space, trapezoid in time.
pub fn weak_form_residual<P: TestFunction + ?Sized>(
    traj: &Trajectory,
    beta: &RenormFunction,
    phi: &P,
) -> Result<WeakResidual> {
    let first = traj.snapshots.first().ok_or(Error::MeshMismatch)?;
    let grid = first.state.grid().clone();
    let (n, dim, m) = (first.state.species_count(), grid.dim(), grid.len());
    let centers: Vec<[f64; 3]> = (0..m).map(|k| grid.center(k)).collect();
    let times = traj.times();
    let mut series = vec![vec![0.0; times.len()]; n];
    let mut grad = vec![0.0; dim * m];
    let mut dphi = [0.0; 3];
    let mut vals = vec![0.0; m];
    let mut phi_t = vec![0.0; m];
    let mut phi_v = vec![0.0; m];
    let mut phi_g = vec![0.0; dim * m];
    for (s, snap) in traj.snapshots.iter().enumerate() {
        let t = snap.time();
        for k in 0..m {
            let x = &centers[k][..dim];
            phi_v[k] = phi.value(x, t);
            phi_t[k] = phi.time_derivative(x, t);
            phi.gradient(x, t, &mut dphi);
            phi_g[k * dim..(k + 1) * dim].copy_from_slice(&dphi[..dim]);
        }
        for i in 0..n {
            let c = snap.state.species(i);
            grid::gradient(c, &grid, &mut grad);
            for k in 0..m {
                let mut flux_phi = 0.0;
                let mut flux_c = 0.0;
                for a in 0..dim {
                    let j = snap.flux.component(i, a)[k];
                    flux_phi += j * phi_g[k * dim + a];
                    flux_c += j * grad[a * m + k];
                }
                vals[k] = beta.beta(c[k]) * phi_t[k]
                    + beta.beta_prime(c[k]) * flux_phi
                    + beta.beta_second(c[k]) * flux_c * phi_v[k];
            }
            series[i][s] = grid::integrate(&vals, &grid);
        }
    }
    let boundary = |snap: &Snapshot, i: usize| -> f64 {
        let c = snap.state.species(i);
        let t = snap.time();
        grid::pairwise_sum_by(m, |k| beta.beta(c[k]) * phi.value(&centers[k][..dim], t)) * grid.cell_volume()
    };
    let last = &traj.snapshots[traj.snapshots.len() - 1];
    let per_species: Vec<f64> =
        (0..n).map(|i| trapezoid(&times, &series[i]) + boundary(first, i) - boundary(last, i)).collect();
    let total = per_species.iter().map(|r| r.abs()).sum();
    Ok(WeakResidual { per_species, total })
}

/// Pairwise diagnostics of two trajectories on a common snapshot mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reports: Vec<EntropyReport>,
    pub error_terms: Vec<ErrorTerms>,
    pub certificate: GronwallCertificate,
    /// Larger flux bound of the two trajectories.
    pub flux_bound: f64,
}

impl Comparison {
    /// `|H_sym(T) - H_sym(0) + int Q - int RHS|` over the whole run.
    pub fn final_identity_residual(&self) -> f64 {
        self.reports.last().map_or(0.0, |r| r.identity_residual)
    }
}

/// Evaluates every entropy diagnostic of `a` against `b` at each snapshot,
/// together with the Grönwall certificate at shift `delta`.
pub fn compare_trajectories(
    a: &Trajectory,
    b: &Trajectory,
    diff: &DiffusionMatrix,
    delta: f64,
    policy: AdmissibilityPolicy,
) -> Result<Comparison> {
    entropy::check_mesh(&a.snapshots, &b.snapshots)?;
    let beta = RenormFunction::log_shift(delta)?;
    let flux_bound = a.flux_bound.max(b.flux_bound);
    let times = a.times();
    let count = times.len();
    let (mut hsym, mut q, mut rhs) = (Vec::with_capacity(count), Vec::with_capacity(count), Vec::with_capacity(count));
    let mut error_series = Vec::with_capacity(count);
    let mut reports = Vec::with_capacity(count);
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        let (x, y) = (&sa.state, &sb.state);
        let hs = symmetrized_relative_entropy(x, y)?;
        let qk = dissipation(x, y, &sa.flux, &sb.flux, diff)?;
        let rk = identity_rhs(x, y, &sa.flux, &sb.flux, diff)?;
        let et = error_terms(x, y, &sa.flux, &sb.flux, diff, delta, flux_bound)?;
        hsym.push(hs);
        q.push(qk);
        rhs.push(rk);
        reports.push(EntropyReport {
            time: sa.time(),
            h: entropy(x),
            h_rel: relative_entropy(x, y)?,
            h_sym: hs,
            f_delta: regularized_symrelen(x, y, delta)?,
            h_b: renorm_entropy(x, &beta),
            q: qk,
            j1: et.j1,
            j2: et.j2,
            j3: et.j3,
            j4: et.j4,
            flux_inf_norm: sa.flux.max_norm().max(sb.flux.max_norm()),
            ..EntropyReport::default()
        });
        error_series.push(et);
    }
    let q_int = cumulative_trapezoid(&times, &q);
    let r_int = cumulative_trapezoid(&times, &rhs);
    let f: Vec<f64> = reports.iter().map(|r| r.f_delta).collect();
    let y: Vec<f64> = error_series.iter().map(|e| e.y).collect();
    let constants = StabilityConstants::evaluate(diff, delta, flux_bound);
    let certificate = gronwall_certificate(&times, &f, &y, constants, policy)?;
    for (k, r) in reports.iter_mut().enumerate() {
        r.identity_residual = (hsym[k] - hsym[0] + q_int[k] - r_int[k]).abs();
        r.gronwall_lhs = certificate.points[k].lhs;
        r.gronwall_rhs = certificate.points[k].rhs;
        r.clipped_mass = a.clipped_mass[k] + b.clipped_mass[k];
    }
    Ok(Comparison { reports, error_terms: error_series, certificate, flux_bound })
}

/// Base and perturbed runs with their comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinOutcome {
    pub base: Trajectory,
    pub perturbed: Trajectory,
    pub comparison: Comparison,
}

/// Runs the scenario from its initial data and from the perturbed data, then
/// compares the two trajectories at the scenario's shift.
pub fn twin_experiment(scenario: &Scenario, policy: AdmissibilityPolicy) -> Result<TwinOutcome> {
    scenario.validate()?;
    let (a0, b0) = scenario.twin_initial_states()?;
    let base = run_from(scenario, a0)?;
    let perturbed = run_from(scenario, b0)?;
    let comparison = compare_trajectories(&base, &perturbed, &scenario.diffusion, scenario.delta, policy)?;
    Ok(TwinOutcome { base, perturbed, comparison })
}
