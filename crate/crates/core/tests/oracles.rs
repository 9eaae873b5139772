//! Independent oracles for the flux solve, the friction spectrum and the
//! discrete heat flow.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use msdiff_core::msflux::{assemble_operator, force_flux_residual};
use msdiff_core::sim::{run, InitialData, Mode, Scenario, StepPolicy};
use msdiff_core::{DiffusionMatrix, FluxSolver, PeriodicGrid, PointComposition};

fn composition(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut c: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = c.iter().sum();
    c.iter_mut().for_each(|x| *x /= s);
    c
}

fn diffusion(rng: &mut impl Rng, n: usize) -> DiffusionMatrix {
    let mut upper = vec![1.0; n * n];
    for x in upper.iter_mut() {
        *x = 10f64.powf(2.0 * rng.random::<f64>() - 1.0);
    }
    DiffusionMatrix::from_fn(n, |i, j| upper[i.min(j) * n + i.max(j)]).unwrap()
}

fn gradient(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    for a in 0..dim {
        let m = (0..n).map(|i| g[i * dim + a]).sum::<f64>() / n as f64;
        (0..n).for_each(|i| g[i * dim + a] -= m);
    }
    g
}

/// Minimum-norm least squares of the bordered system by SVD.
fn svd_flux(c: &[f64], g: &[f64], dim: usize, diff: &DiffusionMatrix) -> Vec<f64> {
    let n = c.len();
    let k = DMatrix::from_fn(n + 1, n, |i, j| {
        if i == n {
            1.0
        } else if i == j {
            -(0..n).filter(|&m| m != i).map(|m| c[m] / diff.coefficient(i, m)).sum::<f64>()
        } else {
            c[i] / diff.coefficient(i, j)
        }
    });
    let rhs = DMatrix::from_fn(n + 1, dim, |i, a| if i < n { g[i * dim + a] } else { 0.0 });
    let x = k.svd(true, true).solve(&rhs, 1e-13).unwrap();
    (0..n * dim).map(|ia| x[(ia / dim, ia % dim)]).collect()
}

#[test]
fn flux_solve_matches_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut solver = FluxSolver::new();
    for _ in 0..2000 {
        let n = rng.random_range(2..=6);
        let dim = rng.random_range(1..=3);
        let c = composition(&mut rng, n);
        let diff = diffusion(&mut rng, n);
        let g = gradient(&mut rng, n, dim);
        let mut j = vec![0.0; n * dim];
        solver.solve_into(&c, &g, dim, &diff, &mut j).unwrap();
        let oracle = svd_flux(&c, &g, dim, &diff);
        let scale = oracle.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (x, y) in j.iter().zip(&oracle) {
            assert!((x - y).abs() <= 1e-9 * scale, "{x} vs {y}");
        }
        assert!(force_flux_residual(&c, &g, dim, &diff, &j) <= 1e-10);
    }
}

#[test]
fn friction_spectrum_bounds_the_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..2000 {
        let n = rng.random_range(2..=6);
        let delta = rng.random_range(1e-3..1.0);
        let comp = PointComposition::with_shift(composition(&mut rng, n), delta).unwrap();
        let diff = diffusion(&mut rng, n);
        let op = assemble_operator(&comp, &diff).unwrap();
        let a = DMatrix::from_row_slice(n, n, op.a());
        let eig = SymmetricEigen::new(a);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let (k0, k1) = (order[0], order[1]);
        let scale = eig.eigenvalues[order[n - 1]];
        assert!(eig.eigenvalues[k0].abs() <= 1e-12 * scale);
        // the null vector is sqrt(d)
        let v = eig.eigenvectors.column(k0);
        let norm: f64 = op.sqrt_d().iter().map(|x| x * x).sum::<f64>().sqrt();
        let align: f64 = v.iter().zip(op.sqrt_d()).map(|(x, y)| x * y).sum::<f64>() / norm;
        assert_relative_eq!(align.abs(), 1.0, epsilon = 1e-10);
        let bound = (1.0 + n as f64 * delta) * diff.mu();
        assert!(eig.eigenvalues[k1] >= bound * (1.0 - 1e-12), "{} < {bound}", eig.eigenvalues[k1]);
        // the weakest direction in L(d) saturates the check but does not break it
        let w: Vec<f64> = eig.eigenvectors.column(k1).iter().copied().collect();
        assert!(op.spectral_gap_check(&w).holds);
    }
}

#[test]
fn binary_scheme_is_the_discrete_heat_flow() {
    let cells = 40;
    let grid = PeriodicGrid::unit_1d(cells).unwrap();
    let diff = DiffusionMatrix::uniform(2, 0.7).unwrap();
    let amp = 0.2;
    let initial = InitialData::Modes {
        background: vec![0.5, 0.5],
        modes: vec![Mode { amplitudes: vec![amp, -amp], wavevector: [3, 0, 0], phase: 0.0 }],
    };
    let mut sc = Scenario::new(grid.clone(), diff, initial, 0.01);
    sc.step = StepPolicy::Fixed(2.5e-5);
    sc.cadence = 0;
    let traj = run(&sc).unwrap();
    let h = grid.spacing(0);
    let lambda = 4.0 / (h * h) * (std::f64::consts::PI * 3.0 * h).sin().powi(2);
    let factor = (1.0 - traj.dt * 0.7 * lambda).powi(traj.steps as i32);
    let c1 = traj.final_state().species(0);
    for k in 0..cells {
        let x = grid.center(k)[0];
        let expected = 0.5 + amp * factor * (2.0 * std::f64::consts::PI * 3.0 * x).cos();
        assert!((c1[k] - expected).abs() < 1e-13, "{} vs {expected}", c1[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn flux_is_linear_in_the_gradient(seed in any::<u64>(), scale in -4.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=5);
        let c = composition(&mut rng, n);
        let diff = diffusion(&mut rng, n);
        let g = gradient(&mut rng, n, 2);
        let gs: Vec<f64> = g.iter().map(|x| scale * x).collect();
        let mut solver = FluxSolver::new();
        let (mut j, mut js) = (vec![0.0; 2 * n], vec![0.0; 2 * n]);
        solver.solve_into(&c, &g, 2, &diff, &mut j).unwrap();
        solver.solve_into(&c, &gs, 2, &diff, &mut js).unwrap();
        let m = j.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (a, b) in j.iter().zip(&js) {
            prop_assert!((scale * a - b).abs() <= 1e-10 * m * scale.abs().max(1.0));
        }
    }

    #[test]
    fn flux_scales_with_the_coefficients(seed in any::<u64>(), alpha in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=5);
        let c = composition(&mut rng, n);
        let diff = diffusion(&mut rng, n);
        let scaled = DiffusionMatrix::from_fn(n, |i, j| alpha * diff.coefficient(i, j)).unwrap();
        let g = gradient(&mut rng, n, 1);
        let mut solver = FluxSolver::new();
        let (mut j, mut js) = (vec![0.0; n], vec![0.0; n]);
        solver.solve_into(&c, &g, 1, &diff, &mut j).unwrap();
        solver.solve_into(&c, &g, 1, &scaled, &mut js).unwrap();
        let m = j.iter().fold(1e-3f64, |m, x| m.max(x.abs()));
        for (a, b) in j.iter().zip(&js) {
            prop_assert!((alpha * a - b).abs() <= 1e-10 * alpha * m);
        }
    }

    #[test]
    fn species_relabeling_permutes_the_flux(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=5);
        let c = composition(&mut rng, n);
        let diff = diffusion(&mut rng, n);
        let g = gradient(&mut rng, n, 1);
        let perm: Vec<usize> = (0..n).rev().collect();
        let cp: Vec<f64> = perm.iter().map(|&i| c[i]).collect();
        let gp: Vec<f64> = perm.iter().map(|&i| g[i]).collect();
        let dp = DiffusionMatrix::from_fn(n, |i, j| diff.coefficient(perm[i], perm[j])).unwrap();
        let mut solver = FluxSolver::new();
        let (mut j, mut jp) = (vec![0.0; n], vec![0.0; n]);
        solver.solve_into(&c, &g, 1, &diff, &mut j).unwrap();
        solver.solve_into(&cp, &gp, 1, &dp, &mut jp).unwrap();
        let m = j.iter().fold(1e-3f64, |m, x| m.max(x.abs()));
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((jp[k] - j[i]).abs() <= 1e-10 * m);
        }
    }
}
