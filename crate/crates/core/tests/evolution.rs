use dfchain::evolve::{run_trajectory, KickEvent};
use dfchain::fragmentation::{build_adjacency, components, Label};
use dfchain::state::{parse_config, sublattice_mask};
use dfchain::*;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// exp(-iHt)ψ through a dense Hermitian eigendecomposition.
struct DenseOracle {
    eigenvalues: Vec<f64>,
    vectors: nalgebra::DMatrix<C<f64>>,
}

impl DenseOracle {
    fn new(spec: &ModelSpec) -> Self {
        let eig = dense_h::<f64>(spec).unwrap().symmetric_eigen();
        Self { eigenvalues: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors }
    }

    fn evolve(&self, psi: &[C<f64>], t: f64) -> Vec<C<f64>> {
        let c = self.vectors.adjoint() * DVector::from_column_slice(psi);
        let phased = DVector::from_fn(c.len(), |k, _| c[k] * C::from_polar(1.0, -self.eigenvalues[k] * t));
        (&self.vectors * phased).iter().copied().collect()
    }
}

fn distance(a: &[C<f64>], b: &[C<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn zero_duration_keeps_initial_state() {
    let psi: State = bell_state(8).unwrap();
    let tr = propagate(&psi, &ModelSpec::dfm(8), &EvolutionParams::new(0.0, 0.05), &[Observable::ZProfile]).unwrap();
    assert_eq!(tr.times, vec![0.0]);
    assert_eq!(tr.z_profile[0], psi.z_profile());
}

#[test]
fn matches_dense_exponential_for_every_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for kind in ModelKind::ALL {
        for l in [6, 8, 10] {
            let spec = ModelSpec::new(kind, l);
            let oracle = DenseOracle::new(&spec);
            let psi = State::random(l, &mut rng).unwrap();
            let params = EvolutionParams::new(10.0, 2.5).with_tolerance(1e-10);
            let ham = Ham::new(&spec).unwrap();
            let mut worst: f64 = 0.0;
            run_trajectory(&psi, &ham, &params, None, |_, t, s| {
                worst = worst.max(distance(s.amplitudes(), &oracle.evolve(psi.amplitudes(), t)));
                Ok(())
            })
            .unwrap();
            assert!(worst < 1e-8, "{kind} L={l}: {worst:e}");
        }
    }
}

#[test]
fn default_tolerance_is_met() {
    let spec = ModelSpec::dfm(10);
    let oracle = DenseOracle::new(&spec);
    let psi: State = ghz_state(10).unwrap();
    let params = EvolutionParams::new(30.0, 0.05);
    let ham = Ham::new(&spec).unwrap();
    let mut worst: f64 = 0.0;
    run_trajectory(&psi, &ham, &params, None, |_, t, s| {
        worst = worst.max(distance(s.amplitudes(), &oracle.evolve(psi.amplitudes(), t)));
        Ok(())
    })
    .unwrap();
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn unitarity_and_energy_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind, 12);
        let ham = Ham::new(&spec).unwrap();
        let psi = State::random(12, &mut rng).unwrap();
        let e0 = ham.energy(&psi).unwrap();
        let params = EvolutionParams::new(100.0, 5.0);
        run_trajectory(&psi, &ham, &params, None, |_, _, s| {
            assert!((s.norm() - 1.0).abs() < 1e-9);
            let e = ham.energy(s).unwrap();
            assert!((e - e0).abs() < 1e-6, "{kind}: {e} vs {e0}");
            Ok(())
        })
        .unwrap();
    }
}

#[test]
fn noiseless_dfm_stays_in_its_sector() {
    let l = 10;
    let spec = ModelSpec::dfm(l);
    let ham = Ham::new(&spec).unwrap();
    let report = components(&build_adjacency(&spec).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (label, frozen_mask) in [(Label::L, sublattice_mask(l, false)), (Label::R, sublattice_mask(l, true))] {
        let raw = State::random(l, &mut rng).unwrap();
        let amps = raw
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(i, a)| if report.label_of(i) == label { *a } else { C::new(0.0, 0.0) })
            .collect();
        let psi = State::from_amplitudes(l, amps).unwrap();
        run_trajectory(&psi, &ham, &EvolutionParams::new(40.0, 0.5), None, |_, _, s| {
            let leak = s.probability_where(|i| report.label_of(i) != label);
            assert!(leak <= 1e-9, "{label}: {leak:e}");
            assert!(s.probability_where(|i| i & frozen_mask != 0) <= 1e-9);
            Ok(())
        })
        .unwrap();
    }
}

#[test]
fn neel_r_keeps_odd_sites_down() {
    let l = 12;
    let psi: State = product_state(l, &parse_config("↓↑↓↑↓↑↓↑↓↑↓↑").unwrap()).unwrap();
    let tr = propagate(&psi, &ModelSpec::dfm(l), &EvolutionParams::new(20.0, 0.1), &[Observable::ZProfile]).unwrap();
    let mut even_moves = false;
    for z in &tr.z_profile {
        for i in (0..l).step_by(2) {
            assert!((z[i] + 1.0).abs() < 1e-6);
        }
        even_moves |= z[1] < 0.9;
    }
    assert!(even_moves);
}

#[test]
fn kick_semantics() {
    let psi: State = StateVector::basis(4, 0).unwrap();
    let flipped = apply_kick(&psi, 2, KickOperator::FlipX, std::f64::consts::FRAC_PI_2).unwrap();
    let a = flipped.amplitudes()[0b0010];
    assert!((a - C::new(0.0, -1.0)).norm() < 1e-15);
    assert!((flipped.norm() - 1.0).abs() < 1e-15);

    let g: State = ghz_state(6).unwrap();
    let twice = apply_kick(&apply_kick(&g, 3, KickOperator::FlipX, std::f64::consts::FRAC_PI_2).unwrap(), 3, KickOperator::FlipX, std::f64::consts::FRAC_PI_2).unwrap();
    assert!((measures::fidelity(&twice, &g).unwrap() - 1.0).abs() < 1e-14);

    let up: State = StateVector::basis(4, 0b0100).unwrap();
    assert_eq!(apply_kick(&up, 3, KickOperator::ProjectP, 0.0).unwrap_err(), Error::AnnihilatedState { site: 3 });
    let kept = apply_kick(&up, 3, KickOperator::ProjectQ, 0.0).unwrap();
    assert_eq!(kept, up);
    assert!(apply_kick(&up, 5, KickOperator::FlipX, 1.0).is_err());
}

#[test]
fn infinite_period_reproduces_noiseless_run() {
    let psi: State = bell_state(8).unwrap();
    let spec = ModelSpec::dfm(8);
    let params = EvolutionParams::new(20.0, 0.05);
    let obs = [Observable::ZProfile, Observable::Concurrence(4, 5)];
    let quiet = propagate(&psi, &spec, &params, &obs).unwrap();
    let noisy = propagate_noisy(&psi, &spec, &params, &NoiseSchedule::flips(Period::Infinite, 7, 1), 99, &obs).unwrap();
    assert_eq!(quiet, noisy);
}

#[test]
fn kick_log_and_determinism() {
    let psi: State = bell_state(8).unwrap();
    let spec = ModelSpec::dfm(8);
    let params = EvolutionParams::new(10.0, 0.05);
    let sched = NoiseSchedule::flips(Period::Finite(1.0), 3, 1);
    let obs = [Observable::Concurrence(4, 5)];
    let tr = propagate_noisy(&psi, &spec, &params, &sched, 42, &obs).unwrap();
    assert_eq!(tr.kick_log.len(), 10);
    for (n, KickEvent { time, site }) in tr.kick_log.iter().enumerate() {
        assert_eq!(*time, (n + 1) as f64);
        assert!((1..=8).contains(site));
    }
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| propagate_noisy(&psi, &spec, &params, &sched, 42, &obs).unwrap())
    };
    assert_eq!(run(1), tr);
    assert_eq!(run(4), tr);
}

#[test]
fn projector_kicks_redraw_annihilated_sites() {
    let psi: State = bell_state(8).unwrap();
    let mut sched = NoiseSchedule::flips(Period::Finite(0.5), 1, 1);
    sched.operator = KickOperator::ProjectQ;
    let tr = propagate_noisy(&psi, &ModelSpec::dfm(8), &EvolutionParams::new(5.0, 0.5), &sched, 5, &[]).unwrap();
    assert_eq!(tr.kick_log.len(), 10);
    let frozen: State = StateVector::basis(8, 0).unwrap();
    let err = propagate_noisy(&frozen, &ModelSpec::dfm(8), &EvolutionParams::new(1.0, 0.5), &sched, 5, &[]).unwrap_err();
    assert!(matches!(err, Error::AnnihilatedState { .. }));
}

#[test]
fn ensemble_degenerate_cases() {
    let psi: State = bell_state(8).unwrap();
    let spec = ModelSpec::dfm(8);
    let params = EvolutionParams::new(5.0, 0.1);
    let obs = [Observable::ZProfile, Observable::Concurrence(4, 5)];
    let sched = NoiseSchedule::flips(Period::Finite(1.0), 11, 1);
    let ens = ensemble_average(&psi, &spec, &params, &sched, &obs).unwrap();
    let single = propagate_noisy(&psi, &spec, &params, &sched, derive_seed(11, 0), &obs).unwrap();
    let c = ens.scalar("concurrence:4-5").unwrap();
    assert_eq!(c.mean, single.scalar("concurrence:4-5").unwrap());
    assert!(c.stderr.iter().all(|&s| s == 0.0));
    assert_eq!(ens.z_mean, single.z_profile);

    let quiet = NoiseSchedule::flips(Period::Infinite, 11, 16);
    let ens = ensemble_average(&psi, &spec, &params, &quiet, &obs).unwrap();
    assert!(ens.scalar("concurrence:4-5").unwrap().stderr.iter().all(|&s| s == 0.0));
    assert!(ens.z_stderr.iter().flatten().all(|&s| s == 0.0));

    let noisy = NoiseSchedule::flips(Period::Finite(1.0), 11, 16);
    let ens = ensemble_average(&psi, &spec, &params, &noisy, &obs).unwrap();
    assert_eq!(ens.seeds.len(), 16);
    assert!(ens.scalar("concurrence:4-5").unwrap().stderr.iter().any(|&s| s > 0.0));
    assert!(ens.kicks_per_trajectory.iter().all(|&k| k == 5));
}

#[test]
fn single_precision_runs() {
    let psi: StateF32 = ghz_state(8).unwrap();
    let tr = propagate(&psi, &ModelSpec::dfm(8), &EvolutionParams::new(5.0, 0.5).with_tolerance(1e-4), &[Observable::Renyi2(vec![2, 4, 6, 8])]).unwrap();
    for v in tr.scalar("renyi2:2-4-6-8").unwrap() {
        assert!((v - 0.25).abs() < 1e-4);
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    let psi: State = bell_state(8).unwrap();
    let spec = ModelSpec::dfm(8);
    assert!(propagate(&psi, &spec, &EvolutionParams::new(1.0, 2.0), &[]).is_err());
    assert!(propagate(&psi, &spec, &EvolutionParams::new(1.0, 0.0), &[]).is_err());
    assert!(propagate(&psi, &ModelSpec::dfm(6), &EvolutionParams::new(1.0, 0.1), &[]).is_err());
    let mut sched = NoiseSchedule::flips(Period::Finite(1.0), 0, 0);
    assert!(ensemble_average(&psi, &spec, &EvolutionParams::new(1.0, 0.1), &sched, &[]).is_err());
    sched.num_samples = 1;
    sched.kick_angle = 4.0;
    assert!(ensemble_average(&psi, &spec, &EvolutionParams::new(1.0, 0.1), &sched, &[]).is_err());
    assert!("0".parse::<Period>().is_err());
    assert_eq!("inf".parse::<Period>().unwrap(), Period::Infinite);
}
