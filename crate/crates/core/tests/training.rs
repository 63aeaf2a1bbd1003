mod common;

use common::{linear_dataset, random_matrix, random_model};
use fnn_core::funweights::weight_trajectory;
use fnn_core::network::{
    gradients, sgd_step, train, Activation, EarlyStopping, FnnConfig, FnnModel, LayerSpec, OptimizerKind,
    WeightBasisSpec,
};
use fnn_core::simulate::{generate, SimScenario};
use fnn_core::FnnError;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BETA: [f64; 5] = [0.8, -1.2, 0.5, 1.0, -0.3];

fn linear_config() -> FnnConfig {
    let mut cfg = FnnConfig::new(
        WeightBasisSpec::Fourier { size: 5 },
        vec![LayerSpec::new(4, Activation::Identity)],
    );
    cfg.learning_rate = 1e-2;
    cfg.epochs = 500;
    cfg.seed = 11;
    cfg
}

#[test]
fn identity_network_learns_linear_functional() {
    let data = linear_dataset(300, &BETA, 1);
    let (_, record) = train(&data, &linear_config()).unwrap();
    let last = *record.train_mse.last().unwrap();
    assert!(last < 1e-3, "final R/N = {last}");
    assert_eq!(record.train_sse.len(), record.epochs_run);
    assert!((record.train_sse.last().unwrap() / 300.0 - last).abs() < 1e-15);
}

#[test]
fn training_is_deterministic() {
    let data = linear_dataset(120, &BETA, 2);
    let mut cfg = linear_config();
    cfg.epochs = 30;
    cfg.layers = vec![LayerSpec::new(6, Activation::Relu), LayerSpec::new(3, Activation::Sigmoid)];
    cfg.dropout = vec![0.2, 0.1];
    cfg.early_stopping = Some(EarlyStopping::default());
    cfg.record_weights = true;
    let a = train(&data, &cfg).unwrap();
    let b = train(&data, &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn zero_learning_rate_single_epoch_returns_initial_model() {
    let data = linear_dataset(40, &BETA, 3);
    let mut cfg = linear_config();
    cfg.epochs = 1;
    cfg.learning_rate = 0.0;
    for optimizer in [OptimizerKind::Sgd, OptimizerKind::adam()] {
        cfg.optimizer = optimizer;
        let (model, _) = train(&data, &cfg).unwrap();
        let init = FnnModel::init(&cfg, &data.structure()).unwrap();
        assert_eq!(model, init);
    }
}

#[test]
fn zero_epochs_rejected() {
    let data = linear_dataset(10, &BETA, 3);
    let mut cfg = linear_config();
    cfg.epochs = 0;
    assert!(matches!(train(&data, &cfg), Err(FnnError::InvalidArgument(_))));
}

#[test]
fn degenerate_validation_split_rejected() {
    let data = linear_dataset(2, &BETA, 3);
    let mut cfg = linear_config();
    cfg.early_stopping = Some(EarlyStopping {
        validation_fraction: 0.1,
        ..EarlyStopping::default()
    });
    assert!(matches!(train(&data, &cfg), Err(FnnError::InvalidArgument(_))));
}

#[test]
fn predictions_follow_row_permutations() {
    let data = linear_dataset(30, &BETA, 4);
    let mut cfg = linear_config();
    cfg.epochs = 5;
    cfg.layers = vec![LayerSpec::new(5, Activation::Sigmoid)];
    let (model, _) = train(&data, &cfg).unwrap();
    let pred = model.predict(&data).unwrap();
    let perm: Vec<usize> = (0..30).rev().collect();
    let permuted = model.predict(&data.subset(&perm)).unwrap();
    for (i, &p) in perm.iter().enumerate() {
        assert_eq!(permuted[i], pred[p]);
    }
    let features = model.features(&data).unwrap();
    for l in 0..30 {
        assert_eq!(pred[l], model.forward(&features.row(l), &[]).unwrap());
    }
    assert_eq!(model.predict(&data.subset(&[])).unwrap().len(), 0);
}

#[test]
fn small_sgd_step_decreases_loss_on_sigmoid_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut trials = 0;
    while trials < 20 {
        let mut model = random_model(&mut rng, 200);
        for l in model.layers_mut().iter_mut() {
            if l.activation != Activation::Identity {
                l.activation = Activation::Sigmoid;
            }
        }
        let nb = 8;
        let f = random_matrix(&mut rng, nb, model.config().total_basis_size());
        let z = random_matrix(&mut rng, nb, model.n_scalar());
        let y = DVector::from_fn(nb, |_, _| rng.random_range(-3.0..3.0));
        let x = model.network_inputs(&f, &z).unwrap();
        let loss = |m: &FnnModel| (m.forward_inputs(&x) - &y).norm_squared();
        let g = gradients(&model, &f, &z, &y).unwrap();
        if g.max_abs() < 1e-6 {
            continue;
        }
        let before = loss(&model);
        sgd_step(&mut model, &g, 1e-6);
        assert!(loss(&model) < before);
        trials += 1;
    }
}

#[test]
fn dropout_is_inactive_at_prediction() {
    let data = linear_dataset(50, &BETA, 5);
    let mut cfg = linear_config();
    cfg.epochs = 3;
    cfg.layers = vec![LayerSpec::new(8, Activation::Relu), LayerSpec::new(4, Activation::Relu)];
    cfg.dropout = vec![0.5, 0.5];
    let (model, _) = train(&data, &cfg).unwrap();
    let a = model.predict(&data).unwrap();
    let b = model.predict(&data).unwrap();
    assert_eq!(a, b);
    let mut no_dropout = model.config().clone();
    no_dropout.dropout.clear();
    let plain = FnnModel::from_parts(
        no_dropout,
        model.structure().clone(),
        model.layers().to_vec(),
        model.scaling().clone(),
    )
    .unwrap();
    assert_eq!(plain.predict(&data).unwrap(), a);
}

#[test]
fn sigmoid_network_approximates_exponential_link() {
    let mut sc = SimScenario::preset(2).unwrap();
    sc.noise_sd = 0.0;
    let data = generate(&sc, &mut ChaCha8Rng::seed_from_u64(21)).unwrap().dataset;
    let mut cfg = FnnConfig::new(
        WeightBasisSpec::Fourier { size: 5 },
        vec![LayerSpec::new(64, Activation::Sigmoid)],
    );
    cfg.epochs = 2000;
    cfg.learning_rate = 1e-2;
    cfg.standardize = true;
    cfg.seed = 1;
    let (model, _) = train(&data, &cfg).unwrap();
    let y = data.targets().unwrap();
    let pred = model.predict(&data).unwrap();
    let mse = (pred - y).norm_squared() / y.len() as f64;
    let mean = y.mean();
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
    assert!(mse <= 1e-2 * var, "mse {mse} vs variance {var}");
}

#[test]
fn early_stopping_restores_best_epoch() {
    let mut data = linear_dataset(200, &BETA, 6);
    // Independent of the stream that drew the curves.
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let noisy = data.targets().unwrap().map(|v| v + 2.0 * rng.random_range(-1.0..1.0));
    data = data.with_response(noisy).unwrap();
    let mut cfg = linear_config();
    cfg.epochs = 2000;
    cfg.layers = vec![LayerSpec::new(32, Activation::Relu), LayerSpec::new(32, Activation::Relu)];
    cfg.early_stopping = Some(EarlyStopping::default());
    let (model, record) = train(&data, &cfg).unwrap();
    assert!(record.stopped_early);
    assert!(record.epochs_run < cfg.epochs);
    let val = record.val_mse.as_ref().unwrap();
    assert_eq!(val.len(), record.epochs_run);
    let best = val[record.best_epoch - 1];
    assert!(best <= *val.last().unwrap());
    assert_eq!(best, val.iter().copied().fold(f64::INFINITY, f64::min));
    assert!(model.is_finite());
}

#[test]
fn trajectory_rows_cover_every_epoch() {
    let data = linear_dataset(40, &BETA, 7);
    let mut cfg = linear_config();
    cfg.epochs = 4;
    cfg.record_weights = true;
    let (model, record) = train(&data, &cfg).unwrap();
    let rows = weight_trajectory(&record, model.weight_bases(), 11).unwrap();
    assert_eq!(rows.len(), (cfg.epochs + 1) * 11);
    assert_eq!(rows[0].epoch, 0);
    assert_eq!(rows.last().unwrap().epoch, 4);

    cfg.record_weights = false;
    let (model, record) = train(&data, &cfg).unwrap();
    assert!(matches!(
        weight_trajectory(&record, model.weight_bases(), 11),
        Err(FnnError::NotRecorded)
    ));
}
