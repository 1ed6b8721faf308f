use ordage_core::data::{generate_lifespan, round_to_classes, stratified_split, SynthConfig};
use ordage_core::losses::{LossConfig, LossKind};
use ordage_core::model::{forward, predict_age, HeadKind, ModelConfig};
use ordage_core::numerics::stable_softmax;
use ordage_core::trainer::{train_model, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let noise: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
    let wd: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-2);
    let kind_s = args.get(4).cloned().unwrap_or("ce".into());
    let kind: LossKind = kind_s.parse().unwrap();

    let config = SynthConfig { n: 5000, seed: 0, noise_sigma: noise, ..SynthConfig::default() };
    let data = generate_lifespan(&config).unwrap();
    let (train, val, test) = stratified_split(&data, (0.7, 0.15, 0.15), 0).unwrap();
    let (_, class_ages) = round_to_classes(&train).unwrap();
    let (head, loss_classes) = if kind.is_classification() {
        (HeadKind::Classifier { class_ages: class_ages.clone() }, class_ages.clone())
    } else {
        (HeadKind::Regressor, Vec::new())
    };
    let model_config = ModelConfig::new(config.d, vec![64, 64], head.clone()).unwrap();
    let mut tc = TrainConfig::new(LossConfig::new(kind, loss_classes), 0);
    tc.max_epochs = epochs;
    tc.patience = epochs;
    tc.weight_decay = wd;
    let (params, hist) = train_model(&model_config, &tc, &train, &val).unwrap();

    for (name, ds) in [("train", &train), ("test", &test)] {
        let feats = ds.features_matrix();
        let (out, _) = forward(&params, &feats).unwrap();
        let exp_pred = predict_age(&out, &model_config.head);
        let ages = ds.ages();
        let mae_exp: f64 = exp_pred.iter().zip(&ages).map(|(p, t)| (p - t).abs()).sum::<f64>() / ages.len() as f64;
        if kind.is_classification() {
            let mut mae_arg = 0.0;
            let mut entropy = 0.0;
            for (i, age) in ages.iter().enumerate() {
                let probs = stable_softmax(out.row(i)).unwrap();
                let arg = probs.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
                mae_arg += (class_ages[arg] - age).abs();
                entropy -= probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
            }
            mae_arg /= ages.len() as f64;
            entropy /= ages.len() as f64;
            println!("{kind} {name}: mae_exp {mae_exp:.3} mae_argmax {mae_arg:.3} entropy {entropy:.3} (max {:.3})", (class_ages.len() as f64).ln());
        } else {
            println!("{kind} {name}: mae {mae_exp:.3}");
        }
    }
    println!("epochs run {} best {}", hist.epochs.len(), hist.best_epoch);
}
