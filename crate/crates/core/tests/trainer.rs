use edln_core::data::make_data_model;
use edln_core::theory::Architecture;
use edln_core::trainer::{train, Algorithm, TrainConfig};

#[test]
fn gradient_flow_conserves_interface_quantities() {
    let dm = make_data_model(6, 5, 3, 5.0, 5.0, 1).unwrap();
    let net = Architecture::random(6, &[5, 5], 5, 3.0, 2).init(0.5, 3).unwrap();
    let cfg = TrainConfig { algorithm: Algorithm::GradientFlow, learning_rate: 1e-3, steps: 20_000, record_every: 1000, ..Default::default() };
    let (_, trace) = train(&net, &dm, "A", &cfg).unwrap();
    assert!(trace.last().unwrap().loss < trace.rows[0].loss);
    let drift = trace.max_relative_drift(1e-12);
    assert!(drift < 1e-6, "drift {drift}");
}

#[test]
fn sgd_lowers_windowed_loss_across_seeds() {
    let dm = make_data_model(6, 5, 3, 5.0, 5.0, 4).unwrap();
    for seed in 0..20 {
        let net = Architecture::random(6, &[6], 5, 3.0, 100 + seed).init(0.5, 200 + seed).unwrap();
        let cfg = TrainConfig { learning_rate: 5e-3, batch_size: 16, steps: 4000, record_every: 50, seed, ..Default::default() };
        let (_, trace) = train(&net, &dm, "A", &cfg).unwrap();
        let losses: Vec<f64> = trace.rows.iter().map(|r| r.loss).collect();
        let window = 10;
        let stats = |w: &[f64]| {
            let m = w.iter().sum::<f64>() / w.len() as f64;
            let sd = (w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
            (m, sd)
        };
        let (first, _) = stats(&losses[..window]);
        let (last, sd) = stats(&losses[losses.len() - window..]);
        assert!(last < first - 3.0 * sd, "seed {seed}: {first} -> {last} (sd {sd})");
    }
}

#[test]
fn weight_decay_equalizes_layer_norms() {
    let dm = make_data_model(6, 5, 3, 5.0, 5.0, 5).unwrap();
    let net = Architecture::random(6, &[6, 6], 5, 3.0, 6).init(0.8, 7).unwrap();
    let cfg = TrainConfig {
        algorithm: Algorithm::FullBatchGd,
        learning_rate: 5e-3,
        weight_decay: 1e-2,
        steps: 100_000,
        record_every: 10_000,
        ..Default::default()
    };
    let (trained, _) = train(&net, &dm, "A", &cfg).unwrap();
    let norms: Vec<f64> = (1..=trained.depth()).map(|i| trained.layer(i).norm()).collect();
    let ratio = norms.iter().cloned().fold(0.0, f64::max) / norms.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(ratio < 1.05, "layer norms {norms:?}");
}

#[test]
fn constrained_descent_never_raises_entropy() {
    let dm = make_data_model(6, 5, 3, 5.0, 5.0, 8).unwrap();
    let start = Architecture::random(6, &[6], 5, 3.0, 9).init(0.5, 10).unwrap();
    let gd = TrainConfig { algorithm: Algorithm::FullBatchGd, learning_rate: 5e-3, steps: 20_000, record_every: 20_000, ..Default::default() };
    let (net, _) = train(&start, &dm, "A", &gd).unwrap();
    let cfg = TrainConfig { algorithm: Algorithm::EntropicConstrained, steps: 500, record_every: 1, ..Default::default() };
    let (_, trace) = train(&net, &dm, "A", &cfg).unwrap();
    for pair in trace.rows.windows(2) {
        assert!(pair[1].entropy <= pair[0].entropy * (1.0 + 1e-12), "{} -> {}", pair[0].entropy, pair[1].entropy);
    }
    assert!(trace.last().unwrap().entropy < trace.rows[0].entropy);
}
