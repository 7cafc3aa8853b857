use evfb_core::channel::FadingParams;
use evfb_core::codebook::{epsilon_statistics, random_codebook};
use evfb_core::mdp::{policy_iteration_average, value_iteration_discounted, ControlProblem, RewardSpec};
use evfb_core::rng::seeded;
use evfb_core::state_grid::{estimate_transition_model, is_monotone_stochastic_tol, GridSpec, ModelDocument};

const SAMPLES: usize = 1_000_000;

#[test]
fn alignment_chain_is_stochastically_monotone() {
    let spec = GridSpec::new(3, 16, 16).unwrap();
    for doppler in [0.01, 0.1] {
        let params = FadingParams::new(3, doppler).unwrap();
        let model = estimate_transition_model(&params, &spec, SAMPLES, 31, None).unwrap();
        let row_count = (SAMPLES / spec.n) as f64;
        assert!(is_monotone_stochastic_tol(&model.p0, 3.0 / row_count.sqrt()).unwrap(), "doppler {doppler}");
        // The post-feedback law dominates every no-feedback row.
        let mut stacked = model.p0.clone();
        stacked.push(model.p1_row.clone());
        assert!(is_monotone_stochastic_tol(&stacked_square(&stacked), 3.0 / row_count.sqrt()).unwrap());
    }
}

// Pads an (N+1)×N stack with a trailing column of zeros so the square check applies.
fn stacked_square(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = rows.len();
    rows.iter()
        .map(|r| {
            let mut out = r.clone();
            out.resize(k, 0.0);
            out
        })
        .collect()
}

#[test]
fn estimated_model_values_and_gain() {
    let params = FadingParams::new(3, 0.1).unwrap();
    let spec = GridSpec::new(3, 8, 8).unwrap();
    let model = estimate_transition_model(&params, &spec, SAMPLES, 32, None).unwrap();
    for alpha in [0.5, 2.0] {
        let p = ControlProblem::perfect(&spec, &model, &RewardSpec::new(100.0, alpha).unwrap()).unwrap();
        let j = policy_iteration_average(&p, 100).unwrap().j;
        let beta = 0.999;
        let v = value_iteration_discounted(&p, beta, 1e-9, 1_000_000).unwrap();
        for row in &v.v {
            for w in row.windows(2) {
                assert!(w[1] >= w[0] - 1e-6);
            }
        }
        let vmax = v.v.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled = (1.0 - beta) * vmax;
        assert!((scaled - j).abs() / j < 0.02, "{scaled} vs {j}");
    }
}

#[test]
fn quantized_model_gives_threshold_policies() {
    let params = FadingParams::new(3, 0.1).unwrap();
    let spec = GridSpec::new(3, 8, 8).unwrap();
    let mut rng = seeded(33);
    let cb = random_codebook(3, 16, &mut rng).unwrap();
    let model = estimate_transition_model(&params, &spec, 400_000, 33, Some(&cb)).unwrap();
    let eps = epsilon_statistics(&cb, 100.0, &spec.g_points, 100_000, &mut rng).unwrap();
    for alpha in [0.0, 0.5, 1.0, 3.0] {
        let p = ControlProblem::quantized(&spec, &model, &RewardSpec::new(100.0, alpha).unwrap(), &eps).unwrap();
        let r = policy_iteration_average(&p, 100).unwrap();
        assert!(r.threshold.is_threshold);
        if alpha == 0.0 {
            assert!(r.threshold.y.iter().all(|&y| y < 1.0));
        }
    }
}

#[test]
fn model_document_round_trip_keeps_solution() {
    let params = FadingParams::new(2, 0.05).unwrap();
    let spec = GridSpec::new(2, 4, 6).unwrap();
    let model = estimate_transition_model(&params, &spec, 60_000, 34, None).unwrap();
    let text = ModelDocument::new(&spec, &model).to_json().unwrap();
    let (spec2, model2) = ModelDocument::from_json(&text).unwrap();
    let rs = RewardSpec::new(100.0, 1.0).unwrap();
    let a = policy_iteration_average(&ControlProblem::perfect(&spec, &model, &rs).unwrap(), 100).unwrap();
    let b = policy_iteration_average(&ControlProblem::perfect(&spec2, &model2, &rs).unwrap(), 100).unwrap();
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.j.to_bits(), b.j.to_bits());
}
