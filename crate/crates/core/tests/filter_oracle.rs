mod common;

use approx::assert_relative_eq;
use common::{brute_force_loglik, brute_force_smoother, random_model};
use ebmss::model::{build_system, EbmParamVector, MeasurementConfig};
use ebmss::simulation::{simulate_dgp, SimulationInputs};
use ebmss::ssm::{kalman_filter, kalman_smoother, sequential_filter, ObservationPanel};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn filters_match_joint_gaussian_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..200 {
        let (model, panel) = random_model(&mut rng);
        let oracle = brute_force_loglik(&model, &panel);
        let kf = kalman_filter(&model, &panel).unwrap().loglik;
        let seq = sequential_filter(&model, &panel).unwrap().loglik;
        assert_relative_eq!(kf, oracle, epsilon = 1e-8, max_relative = 1e-10);
        assert_relative_eq!(seq, oracle, epsilon = 1e-8, max_relative = 1e-10);
    }
}

#[test]
fn smoother_matches_gaussian_conditioning() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let (model, panel) = random_model(&mut rng);
        let filt = kalman_filter(&model, &panel).unwrap();
        let sm = kalman_smoother(&model, &filt).unwrap();
        let (mean, cov) = brute_force_smoother(&model, &panel);
        for t in 0..panel.n_steps() {
            assert!((&sm.smooth_mean[t] - &mean[t]).amax() < 1e-7);
            assert!((&sm.smooth_cov[t] - &cov[t]).amax() < 1e-7);
        }
    }
}

#[test]
fn loglik_invariant_to_series_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..50 {
        let (model, panel) = random_model(&mut rng);
        let p = panel.n_series();
        let perm: Vec<usize> = (0..p).rev().collect();
        let rows = perm.iter().map(|&i| panel.row(i)).collect();
        let panel2 = ObservationPanel::from_rows(rows).unwrap();
        let mut model2 = model.clone();
        model2.measurement = DMatrix::from_fn(p, model.state_dim(), |r, c| model.measurement[(perm[r], c)]);
        model2.obs_cov = DMatrix::from_fn(p, p, |r, c| model.obs_cov[(perm[r], perm[c])]);
        let a = kalman_filter(&model, &panel).unwrap().loglik;
        let b = kalman_filter(&model2, &panel2).unwrap().loglik;
        assert_relative_eq!(a, b, epsilon = 1e-9);
        let s = sequential_filter(&model2, &panel2).unwrap().loglik;
        assert_relative_eq!(a, s, epsilon = 1e-8);
    }
}

#[test]
fn fully_missing_step_only_predicts() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let (model, panel) = loop {
        let (m, p) = random_model(&mut rng);
        if p.n_steps() >= 3 {
            break (m, p);
        }
    };
    let mut rows: Vec<Vec<Option<f64>>> = (0..panel.n_series()).map(|i| panel.row(i)).collect();
    rows.iter_mut().for_each(|r| r[1] = None);
    rows[0][0] = Some(0.3);
    let gap = ObservationPanel::from_rows(rows).unwrap();
    let filt = kalman_filter(&model, &gap).unwrap();
    assert_eq!(filt.steps[1].loglik, 0.0);
    assert_eq!(filt.filt_mean[1], filt.pred_mean[1]);
    assert_relative_eq!(filt.loglik, brute_force_loglik(&model, &gap), epsilon = 1e-8);
}

#[test]
fn ebm_filters_agree_on_simulated_panel() {
    let years: Vec<i32> = (1955..=2020).collect();
    let natural: Vec<f64> = (0..66).map(|i| 0.1 * (i as f64 * 0.57).sin()).collect();
    let anthro: Vec<f64> = (0..66).map(|i| 0.5 + 0.02 * i as f64 + 0.00022 * (i * i) as f64).collect();
    let inputs = SimulationInputs::new(years, natural.clone(), anthro).unwrap();
    let params = EbmParamVector::reference_dgp();
    let config = MeasurementConfig::new(8, 2);
    let sim = simulate_dgp(&params, &config, &inputs, 5).unwrap();
    let sys = build_system(&params, &config, &natural).unwrap();
    let a = kalman_filter(&sys, &sim.data.panel).unwrap().loglik;
    let b = sequential_filter(&sys, &sim.data.panel).unwrap().loglik;
    // Both carry the rounding of the 1e6 diffuse variance.
    assert_relative_eq!(a, b, epsilon = 1e-3);
    assert!(a.is_finite() && a > 0.0);
}
