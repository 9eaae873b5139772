//! Numerical protocols behind the certification suites.
//!
//! Every function is deterministic given its parameters and seed. Randomized
//! sampling is split into fixed chunks with their own ChaCha stream, so the
//! result does not depend on the worker count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use msdiff_core::entropy::{
    ck_sweep, csiszar_kullback_check, csiszar_kullback_scaled_check, error_terms, regularized_symrelen,
    AdmissibilityPolicy, CkSweep, RenormFunction,
};
use msdiff_core::linalg::{loglog_fit, LogLogFit};
use msdiff_core::mollify::{initial_trace_study, spacetime_rate_study, InitialTrace, RateStudy};
use msdiff_core::msflux::{assemble_operator, force_flux_residual, friction_matrix};
use msdiff_core::sim::{
    self, compare_trajectories, run, run_from, stability_limit, weak_form_residual, Comparison, InitialData, Mode,
    Scenario, StepPolicy, TimeScheme, Trajectory,
};
use msdiff_core::testfn::{BumpInTime, CosineProfile, InitialWindow};
use msdiff_core::{ConcentrationState, DiffusionMatrix, FluxField, FluxSolver, PeriodicGrid, PointComposition, Result};

use crate::parallel::parallel_map;

const CHUNKS: usize = 16;

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64 + 1);
    rng
}

fn chunk_sizes(total: usize) -> Vec<usize> {
    (0..CHUNKS).map(|k| total / CHUNKS + usize::from(k < total % CHUNKS)).collect()
}

/// A point of the simplex; with probability `boundary` one entry is zeroed.
pub fn random_composition(rng: &mut impl Rng, n: usize, boundary: f64) -> Vec<f64> {
    let mut c: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    if rng.random::<f64>() < boundary {
        let k = rng.random_range(0..n);
        c[k] = 0.0;
    }
    let s: f64 = c.iter().sum();
    c.iter_mut().for_each(|x| *x /= s);
    c
}

/// Symmetric coefficients, log-uniform in `[0.1, 10]`.
pub fn random_diffusion(rng: &mut impl Rng, n: usize) -> DiffusionMatrix {
    let mut upper = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            upper[i * n + j] = 10f64.powf(2.0 * rng.random::<f64>() - 1.0);
        }
    }
    DiffusionMatrix::from_fn(n, |i, j| upper[i.min(j) * n + i.max(j)]).expect("positive coefficients")
}

/// Gradients `g[i * dim + a]` with zero species sum per component.
pub fn random_gradient(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..n * dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    for a in 0..dim {
        let mean = (0..n).map(|i| g[i * dim + a]).sum::<f64>() / n as f64;
        (0..n).for_each(|i| g[i * dim + a] -= mean);
    }
    g
}

/// Least-squares solution of the bordered force-flux system by an SVD
/// pseudo-inverse, assembled from the pairwise form.
pub fn pseudo_inverse_flux(c: &[f64], grad: &[f64], dim: usize, diff: &DiffusionMatrix) -> Vec<f64> {
    let n = c.len();
    let mut k = DMatrix::<f64>::zeros(n + 1, n);
    for i in 0..n {
        for j in 0..n {
            if j != i {
                let r = 1.0 / diff.coefficient(i, j);
                k[(i, i)] -= c[j] * r;
                k[(i, j)] += c[i] * r;
            }
        }
        k[(n, i)] = 1.0;
    }
    let rhs = DMatrix::<f64>::from_fn(n + 1, dim, |i, a| if i < n { grad[i * dim + a] } else { 0.0 });
    let pinv = k.pseudo_inverse(1e-13).expect("svd converges");
    let x = pinv * rhs;
    (0..n * dim).map(|ia| x[(ia / dim, ia % dim)]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct FluxCertification {
    pub samples: usize,
    pub max_residual: f64,
    pub max_constraint: f64,
    /// `max |J - J_oracle| / max(1, |J_oracle|_inf)`.
    pub max_oracle_deviation: f64,
    pub failures: usize,
}

/// Random consistent `(c, grad c, D)` with `n` in `2..=6` and `dim` in `1..=3`.
pub fn flux_certification(samples: usize, seed: u64, workers: usize) -> FluxCertification {
    let parts = parallel_map(chunk_sizes(samples).into_iter().enumerate().collect(), workers, |(chunk, count)| {
        let mut rng = chunk_rng(seed, chunk);
        let mut solver = FluxSolver::new();
        let mut out = FluxCertification::default();
        for _ in 0..count {
            let n = rng.random_range(2..=6);
            let dim = rng.random_range(1..=3);
            let c = random_composition(&mut rng, n, 0.1);
            let diff = random_diffusion(&mut rng, n);
            let g = random_gradient(&mut rng, n, dim);
            let mut j = vec![0.0; n * dim];
            out.samples += 1;
            if solver.solve_into(&c, &g, dim, &diff, &mut j).is_err() {
                out.failures += 1;
                continue;
            }
            out.max_residual = out.max_residual.max(force_flux_residual(&c, &g, dim, &diff, &j));
            for a in 0..dim {
                let s: f64 = (0..n).map(|i| j[i * dim + a]).sum();
                out.max_constraint = out.max_constraint.max(s.abs());
            }
            let oracle = pseudo_inverse_flux(&c, &g, dim, &diff);
            let scale = oracle.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let dev = j.iter().zip(&oracle).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            out.max_oracle_deviation = out.max_oracle_deviation.max(dev / scale);
        }
        out
    });
    parts.into_iter().fold(FluxCertification::default(), |acc, p| FluxCertification {
        samples: acc.samples + p.samples,
        max_residual: acc.max_residual.max(p.max_residual),
        max_constraint: acc.max_constraint.max(p.max_constraint),
        max_oracle_deviation: acc.max_oracle_deviation.max(p.max_oracle_deviation),
        failures: acc.failures + p.failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct OperatorAlgebra {
    pub samples: usize,
    /// `max |A(d) sqrt(d)|_inf`.
    pub kernel: f64,
    /// `max |P_L^2 - P_L|`.
    pub idempotence: f64,
    /// `max |P_L + P_Lperp - I|`.
    pub completeness: f64,
    /// `max |A(d) - (1 + n delta) A(d / (1 + n delta))|`.
    pub scaling: f64,
}

fn shifted_sample(rng: &mut impl Rng) -> (PointComposition, DiffusionMatrix) {
    let n = rng.random_range(2..=6);
    let c = random_composition(rng, n, 0.1);
    let delta = rng.random_range(1e-3..1.0);
    let diff = random_diffusion(rng, n);
    (PointComposition::with_shift(c, delta).expect("simplex point"), diff)
}

/// Kernel, projection and homogeneity identities of the friction matrix.
pub fn operator_algebra(samples: usize, seed: u64) -> OperatorAlgebra {
    let mut rng = chunk_rng(seed, 0);
    let mut out = OperatorAlgebra { samples, ..OperatorAlgebra::default() };
    for _ in 0..samples {
        let (comp, diff) = shifted_sample(&mut rng);
        let n = comp.n();
        let op = assemble_operator(&comp, &diff).expect("matching sizes");
        let ad = op.apply_a(op.sqrt_d());
        out.kernel = out.kernel.max(ad.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        let (pl, pp) = (op.projection_l(), op.projection_lperp());
        for i in 0..n {
            for j in 0..n {
                let sq: f64 = (0..n).map(|k| pl[i * n + k] * pl[k * n + j]).sum();
                out.idempotence = out.idempotence.max((sq - pl[i * n + j]).abs());
                let id = if i == j { 1.0 } else { 0.0 };
                out.completeness = out.completeness.max((pl[i * n + j] + pp[i * n + j] - id).abs());
            }
        }
        let total = comp.shifted_total();
        let scaled: Vec<f64> = comp.shifted().iter().map(|x| x / total).collect();
        let mut a_scaled = vec![0.0; n * n];
        friction_matrix(&scaled, &diff, &mut a_scaled);
        for (x, y) in op.a().iter().zip(&a_scaled) {
            out.scaling = out.scaling.max((x - total * y).abs());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct SpectralCertification {
    pub samples: usize,
    pub violations: usize,
    /// Smallest `lhs - rhs` seen.
    pub min_margin: f64,
}

/// Random `(d, z, delta)` against the coercivity bound on `L(d)`.
pub fn spectral_certification(samples: usize, seed: u64, workers: usize) -> SpectralCertification {
    let parts = parallel_map(chunk_sizes(samples).into_iter().enumerate().collect(), workers, |(chunk, count)| {
        let mut rng = chunk_rng(seed ^ 0x5bec, chunk);
        let mut out = SpectralCertification { min_margin: f64::INFINITY, ..SpectralCertification::default() };
        for _ in 0..count {
            let (comp, diff) = shifted_sample(&mut rng);
            let op = assemble_operator(&comp, &diff).expect("matching sizes");
            let z: Vec<f64> = (0..comp.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let check = op.spectral_gap_check(&z);
            out.samples += 1;
            out.violations += usize::from(!check.holds);
            out.min_margin = out.min_margin.min(check.lhs - check.rhs);
        }
        out
    });
    parts.into_iter().fold(
        SpectralCertification { min_margin: f64::INFINITY, ..SpectralCertification::default() },
        |acc, p| SpectralCertification {
            samples: acc.samples + p.samples,
            violations: acc.violations + p.violations,
            min_margin: acc.min_margin.min(p.min_margin),
        },
    )
}

/// One level of a refinement table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementRow {
    pub cells: usize,
    pub h: f64,
    pub dt: f64,
    pub error: f64,
    /// `log2(error_prev / error)`, absent on the coarsest level.
    pub order: Option<f64>,
}

fn with_orders(rows: &mut [RefinementRow]) {
    for k in 1..rows.len() {
        let ratio = rows[k - 1].h / rows[k].h;
        rows[k].order = Some((rows[k - 1].error / rows[k].error).ln() / ratio.ln());
    }
}

pub fn min_order(rows: &[RefinementRow]) -> f64 {
    rows.iter().filter_map(|r| r.order).fold(f64::INFINITY, f64::min)
}

/// Conservation bookkeeping over every run of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct Conservation {
    pub runs: usize,
    pub mass_defect: f64,
    pub simplex_defect: f64,
}

impl Conservation {
    pub fn record(&mut self, traj: &Trajectory) {
        self.runs += 1;
        self.mass_defect = self.mass_defect.max(traj.mass_defect());
        self.simplex_defect = self.simplex_defect.max(traj.simplex_defect());
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            runs: self.runs + other.runs,
            mass_defect: self.mass_defect.max(other.mass_defect),
            simplex_defect: self.simplex_defect.max(other.simplex_defect),
        }
    }
}

/// `base` with every axis refined by `2^level`.
pub fn refined_scenario(base: &Scenario, level: usize) -> Result<Scenario> {
    let mut sc = base.clone();
    sc.grid = base.grid.refined(1 << level)?;
    Ok(sc)
}

fn background(initial: &InitialData) -> &[f64] {
    match initial {
        InitialData::Uniform(c) => c,
        InitialData::Modes { background, .. } => background,
    }
}

/// Binary single-mode scenario `c_1 = 1/2 + a cos(2 pi x)` with `D_12 = 1`.
pub fn binary_mode_scenario(cells: usize, amplitude: f64, horizon: f64) -> Result<Scenario> {
    let grid = PeriodicGrid::unit_1d(cells)?;
    let diff = DiffusionMatrix::uniform(2, 1.0)?;
    let initial = InitialData::Modes {
        background: vec![0.5, 0.5],
        modes: vec![Mode { amplitudes: vec![amplitude, -amplitude], wavevector: [1, 0, 0], phase: 0.0 }],
    };
    Ok(Scenario::new(grid, diff, initial, horizon))
}

/// Three species with distinct coefficients, two modes per direction.
pub fn ternary_scenario(cells: usize, dim: usize, horizon: f64) -> Result<Scenario> {
    let grid = PeriodicGrid::new(&vec![cells; dim], &vec![1.0; dim])?;
    let table = [[0.0, 1.0, 0.5], [1.0, 0.0, 0.2], [0.5, 0.2, 0.0]];
    let diff = DiffusionMatrix::from_fn(3, |i, j| table[i][j])?;
    let mut modes = vec![
        Mode { amplitudes: vec![0.15, -0.1, -0.05], wavevector: [1, 0, 0], phase: 0.0 },
        Mode { amplitudes: vec![0.0, 0.08, -0.08], wavevector: [2, 0, 0], phase: 0.3 },
    ];
    if dim > 1 {
        modes.push(Mode { amplitudes: vec![-0.05, 0.0, 0.05], wavevector: [0, 1, 0], phase: 0.7 });
        modes.push(Mode { amplitudes: vec![0.03, -0.06, 0.03], wavevector: [1, 1, 0], phase: 1.1 });
    }
    let initial = InitialData::Modes { background: vec![0.3, 0.3, 0.4], modes };
    Ok(Scenario::new(grid, diff, initial, horizon))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatConvergence {
    /// `error` is the final-time L2 distance to the closed-form solution.
    pub rows: Vec<RefinementRow>,
    /// `|c - c_exact| / |c_exact - background|` on the finest grid.
    pub finest_relative_error: f64,
    pub conservation: Conservation,
}

/// Dyadic refinements of `base` against its closed-form solution.
pub fn heat_convergence(base: &Scenario, levels: usize, workers: usize) -> Result<HeatConvergence> {
    let results = parallel_map((0..levels).collect(), workers, |level| -> Result<(RefinementRow, f64, Conservation)> {
        let mut sc = refined_scenario(base, level)?;
        sc.cadence = 0;
        let traj = run(&sc)?;
        let exact = sc.exact_solution(sc.horizon)?;
        let error = sim::l2_distance(traj.final_state(), &exact)?;
        let flat = ConcentrationState::uniform(sc.grid.clone(), background(&sc.initial))?;
        let signal = sim::l2_distance(&exact, &flat)?;
        let row = RefinementRow { cells: sc.grid.len(), h: sc.grid.min_spacing(), dt: traj.dt, error, order: None };
        let mut cons = Conservation::default();
        cons.record(&traj);
        Ok((row, error / signal, cons))
    });
    let mut rows = Vec::new();
    let mut conservation = Conservation::default();
    let mut finest = f64::NAN;
    for r in results {
        let (row, rel, cons) = r?;
        conservation = conservation.merge(cons);
        rows.push(row);
        finest = rel;
    }
    with_orders(&mut rows);
    Ok(HeatConvergence { rows, finest_relative_error: finest, conservation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyDecay {
    pub cells: usize,
    pub steps: usize,
    /// Largest single-step increase of the entropy.
    pub max_increase: f64,
    pub initial_entropy: f64,
    pub final_entropy: f64,
    pub conservation: Conservation,
}

/// Entropy after every step of a run of `scenario`.
pub fn entropy_decay(scenario: &Scenario) -> Result<EntropyDecay> {
    let mut sc = scenario.clone();
    sc.cadence = 0;
    let traj = run(&sc)?;
    let mut conservation = Conservation::default();
    conservation.record(&traj);
    Ok(EntropyDecay {
        cells: sc.grid.len(),
        steps: traj.steps,
        max_increase: traj.entropy_increase(),
        initial_entropy: traj.entropy_per_step[0],
        final_entropy: traj.entropy_per_step[traj.steps],
        conservation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityRefinement {
    /// `error` is the identity residual integrated over the whole run.
    pub rows: Vec<RefinementRow>,
    pub conservation: Conservation,
}

/// Twin runs of `base` and its perturbation under dyadic refinement.
pub fn identity_refinement(base: &Scenario, levels: usize, workers: usize) -> Result<IdentityRefinement> {
    let results = parallel_map((0..levels).collect(), workers, |level| -> Result<(RefinementRow, Conservation)> {
        let sc = refined_scenario(base, level)?;
        let (a0, b0) = sc.twin_initial_states()?;
        let a = run_from(&sc, a0)?;
        let b = run_from(&sc, b0)?;
        let cmp = compare_trajectories(&a, &b, &sc.diffusion, sc.delta, AdmissibilityPolicy::Report)?;
        let mut cons = Conservation::default();
        cons.record(&a);
        cons.record(&b);
        let row = RefinementRow {
            cells: sc.grid.len(),
            h: sc.grid.min_spacing(),
            dt: a.dt,
            error: cmp.final_identity_residual(),
            order: None,
        };
        Ok((row, cons))
    });
    let mut rows = Vec::new();
    let mut conservation = Conservation::default();
    for r in results {
        let (row, cons) = r?;
        rows.push(row);
        conservation = conservation.merge(cons);
    }
    with_orders(&mut rows);
    Ok(IdentityRefinement { rows, conservation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct ErrorTermSampling {
    pub pairs: usize,
    pub cells: usize,
    /// Cells or integrals where some bound failed beyond the slack.
    pub violations: usize,
    /// Largest `J - bound` over all integrated checks (nonpositive when all hold).
    pub worst_excess: f64,
}

fn random_state(rng: &mut impl Rng, grid: &PeriodicGrid, n: usize) -> ConcentrationState {
    let m = grid.len();
    let mut data = vec![0.0; n * m];
    for k in 0..m {
        let c = random_composition(rng, n, 0.05);
        for i in 0..n {
            data[i * m + k] = c[i];
        }
    }
    ConcentrationState::new(grid.clone(), n, data, 0.0).expect("simplex samples")
}

/// Random field pairs on small grids with fluxes from their own gradients;
/// every pointwise and integrated error-term bound is checked.
pub fn error_term_sampling(pairs: usize, seed: u64, workers: usize) -> ErrorTermSampling {
    let parts = parallel_map(chunk_sizes(pairs).into_iter().enumerate().collect(), workers, |(chunk, count)| {
        let mut rng = chunk_rng(seed ^ 0xe77, chunk);
        let mut solver = FluxSolver::new();
        let mut out = ErrorTermSampling { worst_excess: f64::NEG_INFINITY, ..ErrorTermSampling::default() };
        for _ in 0..count {
            let n = rng.random_range(2..=5);
            let grid = if rng.random::<bool>() {
                PeriodicGrid::unit_1d(8).expect("valid grid")
            } else {
                PeriodicGrid::unit_2d(4).expect("valid grid")
            };
            let diff = random_diffusion(&mut rng, n);
            let delta = if rng.random::<bool>() { 0.05 } else { rng.random_range(1e-3..1.0) };
            let a = random_state(&mut rng, &grid, n);
            let b = random_state(&mut rng, &grid, n);
            let ja = FluxField::cell_centered(&a, &diff, &mut solver).expect("solvable");
            let jb = FluxField::cell_centered(&b, &diff, &mut solver).expect("solvable");
            let e = error_terms(&a, &b, &ja, &jb, &diff, delta, 0.0).expect("valid pair");
            out.pairs += 1;
            out.cells += grid.len();
            out.violations += e.pointwise_violations + e.checks().iter().filter(|ok| !**ok).count();
            let excess = (e.j1 + e.j2 - e.bounds.j12).max(e.j3 - e.bounds.j3).max(e.j4 - e.bounds.j4);
            out.worst_excess = out.worst_excess.max(excess);
        }
        out
    });
    parts.into_iter().fold(
        ErrorTermSampling { worst_excess: f64::NEG_INFINITY, ..ErrorTermSampling::default() },
        |acc, p| ErrorTermSampling {
            pairs: acc.pairs + p.pairs,
            cells: acc.cells + p.cells,
            violations: acc.violations + p.violations,
            worst_excess: acc.worst_excess.max(p.worst_excess),
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CkStudy {
    pub literal: CkSweep,
    pub scaled: CkSweep,
}

/// The pointwise entropy-distance inequality, as stated and in scaled form,
/// on a `points x points` sweep of `[lo, hi]^2`.
pub fn ck_study(lo: f64, hi: f64, points: usize) -> CkStudy {
    CkStudy {
        literal: ck_sweep(lo, hi, points, csiszar_kullback_check),
        scaled: ck_sweep(lo, hi, points, csiszar_kullback_scaled_check),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepPair {
    pub dt: f64,
    /// `F_delta(T)` between the runs at `dt` and `dt / 2`.
    pub f_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimestepConvergence {
    pub pairs: Vec<StepPair>,
    pub fit: LogLogFit,
    pub conservation: Conservation,
}

/// Explicit Euler runs from identical data at `dt, dt/2, ...`, starting from
/// half the stability limit; consecutive final states are compared with the
/// regularized symmetric relative entropy at `scenario.delta`.
pub fn timestep_convergence(scenario: &Scenario, halvings: usize, workers: usize) -> Result<TimestepConvergence> {
    let horizon = scenario.horizon;
    let coarse = (horizon / (0.5 * stability_limit(&scenario.grid, &scenario.diffusion))).ceil() as usize;
    let runs = parallel_map((0..=halvings).collect(), workers, |k| -> Result<Trajectory> {
        let mut sc = scenario.clone();
        sc.cadence = 0;
        sc.scheme = TimeScheme::Euler;
        sc.step = StepPolicy::Fixed(horizon / (coarse << k) as f64);
        run(&sc)
    });
    let runs: Vec<Trajectory> = runs.into_iter().collect::<Result<_>>()?;
    let mut conservation = Conservation::default();
    runs.iter().for_each(|t| conservation.record(t));
    let mut pairs = Vec::new();
    for w in runs.windows(2) {
        let f_delta = regularized_symrelen(w[0].final_state(), w[1].final_state(), scenario.delta)?;
        pairs.push(StepPair { dt: w[0].dt, f_delta });
    }
    let dts: Vec<f64> = pairs.iter().map(|p| p.dt).collect();
    let fs: Vec<f64> = pairs.iter().map(|p| p.f_delta).collect();
    Ok(TimestepConvergence { fit: loglog_fit(&dts, &fs), pairs, conservation })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeStudy {
    pub comparison: Comparison,
    pub conservation: Conservation,
}

/// `scenario` against its perturbation, with the Grönwall certificate at
/// `scenario.delta`.
pub fn envelope_study(scenario: &Scenario, policy: AdmissibilityPolicy) -> Result<EnvelopeStudy> {
    let out = sim::twin_experiment(scenario, policy)?;
    let mut conservation = Conservation::default();
    conservation.record(&out.base);
    conservation.record(&out.perturbed);
    Ok(EnvelopeStudy { comparison: out.comparison, conservation })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MollifierStudy {
    pub spacetime: RateStudy,
    pub initial_trace: Vec<InitialTrace>,
}

/// Lipschitz-in-time integrand with a test function that is nonzero at `t = 0`
/// for the spacetime study; a decaying integrand for the initial trace.
pub fn mollifier_study(epsilons: &[f64], trace_epsilons: &[f64], points: usize) -> Result<MollifierStudy> {
    let phi = InitialWindow::new(CosineProfile::new(0.5, 1.0, &[1.0]), 0.5);
    let f = |x: &[f64], t: f64| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x[0]).sin() + t;
    let spacetime = spacetime_rate_study(f, &phi, &[1.0], 0.5, epsilons, points)?;
    let phi0 = InitialWindow::new(CosineProfile::new(0.5, 1.0, &[1.0]), 1.0);
    let g = |x: &[f64], t: f64| (1.0 + 0.3 * (2.0 * std::f64::consts::PI * x[0]).sin()) * (-t).exp();
    let initial_trace = initial_trace_study(g, &phi0, &[1.0], trace_epsilons, points)?;
    Ok(MollifierStudy { spacetime, initial_trace })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakRefinement {
    pub label: &'static str,
    pub rows: Vec<RefinementRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidualStudy {
    pub series: Vec<WeakRefinement>,
    pub conservation: Conservation,
}

/// Renormalized weak-form residuals under dyadic refinement of `base`, with
/// a test function supported inside `(0, T)`. Snapshots are taken every step.
pub fn weak_residual_study(
    base: &Scenario,
    levels: usize,
    betas: &[RenormFunction],
    workers: usize,
) -> Result<WeakResidualStudy> {
    let horizon = base.horizon;
    let dim = base.grid.dim();
    let lengths: Vec<f64> = (0..dim).map(|a| base.grid.length(a)).collect();
    let phi = BumpInTime::new(CosineProfile::new(0.5, 1.0, &lengths), 0.1 * horizon, 0.9 * horizon);
    let results = parallel_map((0..levels).collect(), workers, |level| -> Result<(Vec<RefinementRow>, Conservation)> {
        let mut sc = refined_scenario(base, level)?;
        sc.cadence = 1;
        let traj = run(&sc)?;
        let rows = betas
            .iter()
            .map(|beta| {
                let r = weak_form_residual(&traj, beta, &phi)?;
                Ok(RefinementRow { cells: sc.grid.len(), h: sc.grid.min_spacing(), dt: traj.dt, error: r.total, order: None })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut cons = Conservation::default();
        cons.record(&traj);
        Ok((rows, cons))
    });
    let mut series: Vec<WeakRefinement> =
        betas.iter().map(|b| WeakRefinement { label: b.label(), rows: Vec::new() }).collect();
    let mut conservation = Conservation::default();
    for r in results {
        let (rows, cons) = r?;
        conservation = conservation.merge(cons);
        for (s, row) in series.iter_mut().zip(rows) {
            s.rows.push(row);
        }
    }
    series.iter_mut().for_each(|s| with_orders(&mut s.rows));
    Ok(WeakResidualStudy { series, conservation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_the_total() {
        assert_eq!(chunk_sizes(10_003).iter().sum::<usize>(), 10_003);
        assert_eq!(chunk_sizes(5).iter().filter(|&&c| c > 0).count(), 5);
    }

    #[test]
    fn random_samples_are_admissible() {
        let mut rng = chunk_rng(3, 0);
        for _ in 0..200 {
            let c = random_composition(&mut rng, 4, 0.5);
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(c.iter().all(|&x| x >= 0.0));
            let g = random_gradient(&mut rng, 4, 2);
            for a in 0..2 {
                assert!((0..4).map(|i| g[i * 2 + a]).sum::<f64>().abs() < 1e-14);
            }
            let d = random_diffusion(&mut rng, 4);
            assert!(d.mu() >= 0.1 - 1e-12 && d.big_m() <= 10.0 + 1e-12);
        }
    }

    #[test]
    fn flux_certification_is_worker_independent() {
        let a = flux_certification(300, 7, 1);
        let b = flux_certification(300, 7, 4);
        assert_eq!(a, b);
        assert_eq!(a.samples, 300);
        assert_eq!(a.failures, 0);
        assert!(a.max_residual <= 1e-10 && a.max_constraint <= 1e-12 && a.max_oracle_deviation <= 1e-9);
        assert_ne!(a, flux_certification(300, 8, 1));
    }

    #[test]
    fn small_refinement_orders() {
        let base = binary_mode_scenario(16, 0.25, 0.01).unwrap();
        let h = heat_convergence(&base, 2, 2).unwrap();
        assert_eq!(h.rows.len(), 2);
        assert!(min_order(&h.rows) > 1.5, "{:?}", h.rows);
        assert!(h.conservation.mass_defect < 1e-12);
    }

    #[test]
    fn orders_from_errors() {
        let mut rows: Vec<RefinementRow> = [(8, 1.0), (16, 0.25), (32, 0.125)]
            .iter()
            .map(|&(c, e)| RefinementRow { cells: c, h: 1.0 / c as f64, dt: 0.0, error: e, order: None })
            .collect();
        with_orders(&mut rows);
        assert_eq!(rows[0].order, None);
        assert!((rows[1].order.unwrap() - 2.0).abs() < 1e-12);
        assert!((min_order(&rows) - 1.0).abs() < 1e-12);
    }
}
