use ordage_core::data::{generate_lifespan, round_to_classes, stratified_split, SynthConfig};
use ordage_core::losses::{LossConfig, LossKind};
use ordage_core::model::{HeadKind, ModelConfig};
use ordage_core::trainer::{evaluate_model, train_model, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let seeds: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let lambda: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let noise: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.1);

    for seed in 0..seeds {
        let config = SynthConfig { n, seed, noise_sigma: noise, ..SynthConfig::default() };
        let data = generate_lifespan(&config).unwrap();
        let (train, val, test) = stratified_split(&data, (0.7, 0.15, 0.15), seed).unwrap();
        let (_, class_ages) = round_to_classes(&train).unwrap();

        for kind in [LossKind::Mse, LossKind::Ce, LossKind::CeOrder, LossKind::CeMeanVariance, LossKind::MseDistance] {
            let t0 = Instant::now();
            let (head, loss_classes) = if kind.is_classification() {
                (HeadKind::Classifier { class_ages: class_ages.clone() }, class_ages.clone())
            } else {
                (HeadKind::Regressor, Vec::new())
            };
            let model_config = ModelConfig::new(config.d, vec![64, 64], head).unwrap();
            let mut loss = LossConfig::new(kind, loss_classes);
            loss.lambda_order = lambda;
            let mut tc = TrainConfig::new(loss, seed);
            tc.max_epochs = epochs;
            tc.patience = epochs.max(1);
            match train_model(&model_config, &tc, &train, &val) {
                Ok((params, hist)) => {
                    let eval = evaluate_model(&params, &model_config, &test).unwrap();
                    if std::env::var("CURVE").is_ok() {
                        let curve: Vec<String> = hist.epochs.iter().map(|e| format!("{:.2}", e.val_mae)).collect();
                        println!("  curve: {}", curve.join(" "));
                    }
                    println!(
                        "seed {seed} {kind:<16} mae {:6.3}  ord {:>6}  sbl {:>7}  sbr {:>7}  epochs {} best {}  [{:.1}s]",
                        eval.report.mae,
                        eval.report.ordinality.map(|v| format!("{v:.3}")).unwrap_or("-".into()),
                        eval.report.sb_left.map(|v| format!("{v:+.2}")).unwrap_or("-".into()),
                        eval.report.sb_right.map(|v| format!("{v:+.2}")).unwrap_or("-".into()),
                        hist.epochs.len(),
                        hist.best_epoch,
                        t0.elapsed().as_secs_f64(),
                    );
                }
                Err(e) => println!("seed {seed} {kind:<16} FAILED: {e}"),
            }
        }
    }
}
