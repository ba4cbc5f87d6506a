use echo_core::echo::{
    boltzmann_echo_curve, boltzmann_echo_single, realization_psi1, EchoRunSpec,
};
use echo_core::state_prep::{sample_rho2, Rho2Kind, Rho2Spec, WavepacketSpec};
use echo_core::torus::ModelParams;

fn params() -> ModelParams {
    let mut p = ModelParams::new(32).with_coupling(0.03);
    p.sigma1 = 0.05;
    p.k2 = 8.0;
    p
}

#[test]
fn checkpointed_curve_matches_single_time_runs() {
    let rho2 = Rho2Spec {
        kind: Rho2Kind::RandomPure,
        sample_count: 3,
        seed: 9,
    };
    let times = vec![0, 1, 2, 5, 9, 17];
    let mut spec = EchoRunSpec::new(params(), rho2.clone(), times.clone(), 5);
    spec.seed = 9;
    let curve = boltzmann_echo_curve(&spec).unwrap();
    for r in 0..5 {
        let psi1 = realization_psi1(&spec.psi1, true, 32, 9, r).unwrap();
        let phi2 = sample_rho2(&rho2, 32, r % 3).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let single = boltzmann_echo_single(&params(), &psi1, &phi2, t).unwrap();
            assert!((curve.samples[r][i] - single).abs() < 1e-12);
        }
    }
}

#[test]
fn fixed_inputs_give_identical_realizations() {
    let rho2 = Rho2Spec {
        kind: Rho2Kind::Wavepacket(WavepacketSpec::new(1.0, 2.0)),
        sample_count: 1,
        seed: 0,
    };
    let mut spec = EchoRunSpec::new(params(), rho2, (0..=12).collect(), 3);
    spec.random_centers = false;
    let curve = boltzmann_echo_curve(&spec).unwrap();
    assert!(curve.samples.iter().all(|s| s == &curve.samples[0]));
    assert!(curve.stderr.iter().all(|&e| e < 1e-15));
    assert!(curve.mean[12] < 1.0);
}
