use kjko::config::{JkoConfig, SymplecticVariant};
use kjko::jko::{jko_loss, jko_loss_gradient, jko_step, split_step, LinearProblem};
use kjko::nn::{adam_step, init_params, Activation, AdamState, FeatureMap, InitScheme, MlpArchitecture, MlpParams};
use kjko::phase_space::{wrap, DomainSpec, ParticleEnsemble, Potential, QuadraticForm, SystemMatrices, Topology};
use kjko::pic::{deposit_density, interpolate_field, GridField1D, PoissonSolver};
use proptest::prelude::*;

fn cfg(dt: f64, variant: SymplecticVariant, iters: usize) -> JkoConfig {
    JkoConfig {
        dt,
        n_steps: 1,
        inner_iters: iters,
        learning_rate: 1e-2,
        warm_start: false,
        seed: 0,
        symplectic_variant: variant,
        epsilon: 1.0,
        t0: 1.0,
    }
}

fn harmonic() -> Potential {
    Potential::QuadraticForm(QuadraticForm::new(1, 1, vec![2.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap())
}

fn ensemble(points: &[(f64, f64)]) -> ParticleEnsemble {
    let xs = points.iter().map(|p| p.0).collect();
    let vs = points.iter().map(|p| p.1).collect();
    let lf = points.iter().map(|(x, v)| -(x * x) - 0.5 * v * v).collect();
    ParticleEnsemble::new(1, 1, xs, vs, lf).unwrap()
}

fn variants() -> impl Strategy<Value = SymplecticVariant> {
    prop_oneof![
        Just(SymplecticVariant::AlgorithmOne),
        Just(SymplecticVariant::SymplecticEuler),
        Just(SymplecticVariant::StormerVerlet),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn system_matrices_structure(dim in 1usize..5, eps in 0.0f64..20.0, t0 in 0.1f64..5.0) {
        let s = SystemMatrices::new(dim, eps, t0).unwrap();
        prop_assert_eq!(s.j.transpose(), -&s.j);
        prop_assert_eq!(&s.d, &s.d.transpose());
        prop_assert!(s.d.symmetric_eigenvalues().iter().all(|l| *l >= 0.0));
        prop_assert!(s.d.view((0, 0), (dim, dim)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn step_count_reaches_terminal_time(t in 0.01f64..50.0, dt in 1e-3f64..1.0) {
        let n = JkoConfig::steps_for(t, dt);
        prop_assert!((n as f64 * dt - t).abs() <= dt * (1.0 + 1e-9));
    }

    #[test]
    fn parameter_count_and_flat_round_trip(hidden in prop::collection::vec(1usize..12, 0..4), seed in 0u64..1000) {
        let act = if hidden.is_empty() { Activation::None } else { Activation::Tanh };
        let arch = MlpArchitecture::new(1, 2, &hidden, 2, act, FeatureMap::Identity).unwrap();
        let expected: usize = arch.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        prop_assert_eq!(arch.param_count(), expected);
        let params = init_params(&arch, seed, InitScheme::FanInUniform);
        let (arch2, params2) = MlpParams::from_flat(&params.to_flat(&arch)).unwrap();
        prop_assert_eq!(arch2, arch);
        prop_assert_eq!(params2, params);
    }

    #[test]
    fn adam_counts_steps_and_keeps_shapes(n_steps in 1usize..6, seed in 0u64..100) {
        let arch = MlpArchitecture::new(1, 1, &[4], 1, Activation::Tanh, FeatureMap::Identity).unwrap();
        let mut params = init_params(&arch, seed, InitScheme::FanInUniform);
        let mut state = AdamState::new(params.data.len());
        for k in 0..n_steps {
            let grad: Vec<f64> = params.data.iter().map(|p| p - 0.1).collect();
            adam_step(&mut params, &grad, &mut state, 1e-2).unwrap();
            prop_assert_eq!(state.t, (k + 1) as u64);
        }
        prop_assert_eq!(state.m.len(), params.data.len());
        prop_assert_eq!(state.v.len(), params.data.len());
    }

    #[test]
    fn wrapped_positions_stay_in_period(xs in prop::collection::vec(-200.0f64..200.0, 1..50), l in 0.5f64..30.0) {
        let domain = DomainSpec::new(1, 1, Topology::Periodic { length: l }).unwrap();
        let mut wrapped = xs.clone();
        domain.wrap_in_place(&mut wrapped);
        for (w, x) in wrapped.iter().zip(&xs) {
            prop_assert!(*w >= 0.0 && *w < l);
            prop_assert_eq!(*w, wrap(*x, l));
        }
        let n = xs.len();
        let ens = ParticleEnsemble::new(1, 1, wrapped, vec![0.0; n], vec![0.0; n]).unwrap();
        prop_assert!((ens.weight() * n as f64 - 1.0).abs() < 1e-15);
        prop_assert!(ens.validate(&domain).is_ok());
    }

    #[test]
    fn deposition_conserves_mass_and_is_adjoint(
        xs in prop::collection::vec(0.0f64..1.0, 1..400),
        grid in prop::collection::vec(-1.0f64..1.0, 16),
        l in 1.0f64..30.0,
    ) {
        let xs: Vec<f64> = xs.iter().map(|u| u * l).map(|x| wrap(x, l)).collect();
        let rho = deposit_density(&xs, 16, l).unwrap();
        prop_assert!(rho.values.iter().all(|v| *v >= 0.0));
        prop_assert!((rho.values.iter().sum::<f64>() * rho.dx - 1.0).abs() < 1e-12);
        let g = GridField1D::from_values(grid, l).unwrap();
        let lhs = interpolate_field(&g, &xs).iter().sum::<f64>() / xs.len() as f64;
        let rhs: f64 = g.values.iter().zip(&rho.values).map(|(a, b)| a * b).sum::<f64>() * rho.dx;
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn poisson_residual_vanishes(vals in prop::collection::vec(0.0f64..2.0, 64), l in 1.0f64..30.0) {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let rho = GridField1D::from_values(vals, l).unwrap();
        let solver = PoissonSolver::new(64, l).unwrap();
        let (phi, e) = solver.solve(&rho, mean).unwrap();
        prop_assert!(phi.mean().abs() < 1e-10 && e.mean().abs() < 1e-10);
        for (lap, r) in solver.negative_laplacian(&phi).iter().zip(&rho.values) {
            prop_assert!((lap - (r - mean)).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn jko_step_preserves_shapes_and_descends(
        points in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 4..32),
        variant in variants(),
        seed in 0u64..50,
        split in any::<bool>(),
    ) {
        let domain = DomainSpec::new(1, 1, Topology::Unbounded).unwrap();
        let pot = harmonic();
        let arch = MlpArchitecture::new(1, 1, &[8], 1, Activation::Tanh, FeatureMap::Identity).unwrap();
        let problem = LinearProblem { domain: &domain, potential: &pot, arch: &arch };
        let ens = ensemble(&points);
        let theta0 = init_params(&arch, seed, InitScheme::FanInUniform);
        let c = cfg(0.1, variant, 10);
        let res = if split { split_step(&problem, &ens, &theta0, &c) } else { jko_step(&problem, &ens, &theta0, &c) }.unwrap();
        prop_assert_eq!(res.ensemble.positions.len(), ens.positions.len());
        prop_assert_eq!(res.ensemble.velocities.len(), ens.velocities.len());
        prop_assert_eq!(res.ensemble.log_density.len(), ens.log_density.len());
        prop_assert_eq!(res.control.len(), ens.velocities.len());
        prop_assert!(res.ensemble.positions.iter().chain(&res.ensemble.velocities).chain(&res.ensemble.log_density).all(|v| v.is_finite()));
        prop_assert!(res.final_inner_loss <= res.inner_loss_trace[0] + 1e-9);
    }

    #[test]
    fn loss_gradient_matches_directional_differences(
        points in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 8),
        direction in prop::collection::vec(-1.0f64..1.0, 65),
        variant in variants(),
        seed in 0u64..50,
    ) {
        let domain = DomainSpec::new(1, 1, Topology::Unbounded).unwrap();
        let pot = Potential::QuadraticPlusCosine { a: 1.0, b: 0.5 };
        let arch = MlpArchitecture::new(1, 1, &[8, 4], 1, Activation::Tanh, FeatureMap::Identity).unwrap();
        let problem = LinearProblem { domain: &domain, potential: &pot, arch: &arch };
        let ens = ensemble(&points);
        let params = init_params(&arch, seed, InitScheme::FanInUniform);
        let c = cfg(0.1, variant, 1);
        let g = jko_loss_gradient(&problem, &ens, &params, &c).unwrap();
        prop_assert!((g.loss - jko_loss(&problem, &ens, &params, &c).unwrap()).abs() < 1e-12);
        let at = |s: f64| {
            let mut p = params.clone();
            p.data.iter_mut().zip(&direction).for_each(|(a, d)| *a += s * d);
            jko_loss(&problem, &ens, &p, &c).unwrap()
        };
        let h = 1e-5;
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let ad: f64 = g.grad.iter().zip(&direction).map(|(a, b)| a * b).sum();
        prop_assert!((ad - fd).abs() <= 1e-3 * ad.abs().max(fd.abs()).max(1e-8), "ad {} fd {}", ad, fd);
    }
}
