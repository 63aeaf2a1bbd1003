use fnn_core::network::FnnConfig;
use fnn_core::quadrature::integrate;
use fnn_core::simulate::{
    gen_beta, gen_curves, gen_draws, gen_response, linear_predictor, run_prediction_study, run_recovery_study,
    FlmSettings, ModelKind, SimScenario,
};
use fnn_core::Domain;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quick_config(sc: &SimScenario) -> FnnConfig {
    FnnConfig {
        epochs: 20,
        ..sc.default_fnn_config()
    }
}

#[test]
fn exp_link_response_matches_quadrature_oracle() {
    let mut sc = SimScenario::preset(2).unwrap();
    sc.noise_sd = 0.0;
    sc.n_obs = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let draws = gen_draws(1..=20, &mut rng);
    let (curves, _) = gen_curves(&sc, &draws).unwrap();
    let beta = gen_beta(&sc.m);
    let y = gen_response(&sc, &curves, &beta, &mut rng).unwrap();
    for l in 0..20 {
        let x = curves.curve(l);
        let eta = integrate(|t| beta.eval(t).unwrap() * x.eval(t).unwrap(), Domain::unit(), 4001).unwrap();
        assert!((y[l] - eta.exp()).abs() <= 1e-8 * eta.exp().max(1.0));
    }
    let eta = linear_predictor(&sc, &curves, &beta).unwrap();
    assert!((eta.map(f64::exp) - &y).amax() < 1e-8 * y.amax().max(1.0));
}

#[test]
fn single_replicate_summary_has_zero_spread() {
    let sc = SimScenario { n_obs: 60, ..SimScenario::preset(1).unwrap() };
    let r = run_recovery_study(&sc, 1, &quick_config(&sc), &FlmSettings::default(), 4).unwrap();
    let row = &r.replicates[0];
    assert!(row.error.is_none());
    assert_eq!(r.summary.sd_root_imse_flm, 0.0);
    assert_eq!(r.summary.sd_root_imse_fnn, 0.0);
    assert_eq!(r.summary.mean_root_imse_flm, row.imse_flm.sqrt());
    assert_eq!(r.summary.mean_root_imse_fnn, row.imse_fnn.sqrt());
}

#[test]
fn recovery_study_is_reproducible() {
    let sc = SimScenario { n_obs: 60, ..SimScenario::preset(3).unwrap() };
    let cfg = quick_config(&sc);
    let a = run_recovery_study(&sc, 3, &cfg, &FlmSettings::default(), 8).unwrap();
    let b = run_recovery_study(&sc, 3, &cfg, &FlmSettings::default(), 8).unwrap();
    let strip = |r: &fnn_core::simulate::RecoveryResult| {
        r.replicates.iter().map(|x| (x.imse_flm, x.imse_fnn, x.lambda)).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn relative_errors_are_normalized_per_replicate() {
    let sc = SimScenario { n_obs: 90, ..SimScenario::preset(4).unwrap() };
    let models = [ModelKind::Fnn, ModelKind::Flm, ModelKind::Mlr];
    let r = run_prediction_study(&sc, 3, 2.0 / 3.0, &models, &quick_config(&sc), &FlmSettings::default(), 2).unwrap();
    assert!(r.failed.is_empty());
    for rep in 0..3 {
        let rows: Vec<_> = r.rows.iter().filter(|x| x.replicate == rep).collect();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|x| x.rmspe >= 1.0));
        assert!(rows.iter().any(|x| x.rmspe == 1.0));
    }

    let only = run_prediction_study(&sc, 2, 2.0 / 3.0, &[ModelKind::Fnn], &quick_config(&sc), &FlmSettings::default(), 2)
        .unwrap();
    assert!(only.rows.iter().all(|x| x.rmspe == 1.0));
    assert!(run_prediction_study(&sc, 2, 0.5, &[ModelKind::Flm], &quick_config(&sc), &FlmSettings::default(), 2).is_err());
}
