use super::*;
use crate::datagen::{sample_splits, SyntheticConfig};

fn small_data(seed: u64) -> DatasetPair {
    let cfg = SyntheticConfig {
        n_per_class: [40, 30, 25, 20, 15, 12, 10],
        n_val_per_class: 10,
        seed,
        ..SyntheticConfig::default()
    };
    sample_splits(&cfg).unwrap()
}

fn cfg(variant: Variant, epochs: usize) -> TrainConfig {
    TrainConfig {
        variant,
        epochs,
        lr: 0.01,
        ..TrainConfig::default()
    }
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, format!("\"{}\"", v.name()));
    }
    assert!(matches!("gcn".parse::<Variant>(), Err(Error::Usage(_))));
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    for bad in [
        TrainConfig { lr: 0.0, ..TrainConfig::default() },
        TrainConfig { momentum: 1.0, ..TrainConfig::default() },
        TrainConfig { batch_size: 1, ..TrainConfig::default() },
        TrainConfig { p: Some(1.5), ..TrainConfig::default() },
        TrainConfig { slope: 1.0, ..TrainConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
    }
    let intra = TrainConfig { variant: Variant::IntraGcn, ..TrainConfig::default() };
    assert_eq!(intra.effective_p(), 0.5);
    assert_eq!(TrainConfig::default().effective_p(), 0.7);
}

#[test]
fn config_rejects_unknown_keys() {
    let err = serde_json::from_str::<TrainConfig>(r#"{"epochz": 3}"#);
    assert!(err.is_err());
    let ok: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
    assert_eq!(ok.epochs, 3);
    assert_eq!(ok.batch_size, 35);
}

#[test]
fn zero_epochs_reports_untrained_model() {
    let data = small_data(1);
    for v in Variant::ALL {
        let c = cfg(v, 0);
        let (report, model) = train(&c, &data).unwrap();
        assert!(report.losses.is_empty());
        let fresh = init_model(&c, &data.train).unwrap();
        assert_eq!(model, fresh);
        let (m, _) = evaluate(&fresh, &data.val).unwrap();
        assert_eq!(report.metrics, m);
    }
}

#[test]
fn confusion_rows_match_val_counts() {
    let data = small_data(2);
    let (report, _) = train(&cfg(Variant::EmotionGcn, 2), &data).unwrap();
    let counts = class_counts(&data.val.expression);
    for (row, &n) in report.confusion.iter().zip(&counts) {
        assert_eq!(row.iter().sum::<u64>(), n as u64);
    }
    let m = &report.metrics;
    for v in [m.mean_class_accuracy, m.accuracy, m.f1_macro, m.composite] {
        assert!((0.0..=1.0).contains(&v));
    }
    for v in [m.ccc_v, m.ccc_a] {
        assert!((-1.0..=1.0).contains(&v));
    }
}

#[test]
fn gcn_training_reduces_loss() {
    for seed in 0..3 {
        let data = small_data(seed);
        let c = TrainConfig { seed, ..cfg(Variant::EmotionGcn, 10) };
        let (report, _) = train(&c, &data).unwrap();
        let first = report.losses.first().unwrap().total;
        let last = report.losses.last().unwrap().total;
        assert!(last < first, "seed {seed}: {first} -> {last}");
    }
}

#[test]
fn training_is_deterministic() {
    let data = small_data(3);
    for v in [Variant::MultitaskCcc, Variant::IntraGcn] {
        let c = cfg(v, 2);
        let (a, ma) = train(&c, &data).unwrap();
        let (b, mb) = train(&c, &data).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(ma, mb);
    }
}

#[test]
fn single_task_variants_ignore_the_other_loss() {
    let data = small_data(4);
    let (cls, _) = train(&cfg(Variant::SingleTaskCls, 1), &data).unwrap();
    assert_eq!(cls.losses[0].l_r, 0.0);
    assert_eq!(cls.losses[0].total, cls.losses[0].l_c);
    let (reg, _) = train(&cfg(Variant::SingleTaskReg, 1), &data).unwrap();
    assert_eq!(reg.losses[0].l_c, 0.0);
    assert_eq!(reg.losses[0].total, reg.losses[0].l_r);
}

#[test]
fn free_and_gcn_heads_share_the_loss_path() {
    let data = small_data(5);
    let gcn = init_model(&cfg(Variant::EmotionGcn, 0), &data.train).unwrap();
    let w = gcn.head_matrix().unwrap();
    let rows = w.to_rows();
    let free = Model::new(
        Variant::MultitaskCcc,
        gcn.backbone.clone(),
        Heads::Free {
            w_c: Tensor::from_rows(&rows[..NUM_CLASSES]).unwrap(),
            w_r: Tensor::from_rows(&rows[NUM_CLASSES..]).unwrap(),
        },
    )
    .unwrap();
    let batch = data.train.subset(&(0..35).collect::<Vec<_>>()).unwrap();
    let weights = class_weights(&class_counts(&data.train.expression), WeightMode::default()).unwrap();
    let loss_of = |m: &Model, v: Variant| {
        let mut tape = Tape::new();
        let rec = m.record(&mut tape, &batch.features).unwrap();
        let l = variant_loss(&mut tape, v, &rec, &batch, &weights).unwrap().unwrap();
        tape.value(l.total).item().unwrap()
    };
    let a = loss_of(&gcn, Variant::EmotionGcn);
    let b = loss_of(&free, Variant::MultitaskCcc);
    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
}

#[test]
fn model_document_round_trips() {
    let data = small_data(6);
    let (_, model) = train(&cfg(Variant::EmotionGcn, 1), &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back, model);
    let p1 = model.predict(&data.val.features).unwrap();
    let p2 = back.predict(&data.val.features).unwrap();
    assert_eq!(p1, p2);
}

#[test]
fn regression_evaluation_cases() {
    let data = small_data(7);
    let model = init_model(&cfg(Variant::MultitaskCcc, 0), &data.train).unwrap();
    let (v, a) = evaluate_regression(&model, &data.val).unwrap();
    let pred = model.predict(&data.val.features).unwrap();
    assert_eq!(v, heads::ccc(&pred.valence_pred, &data.val.valence).unwrap());
    assert_eq!(a, heads::ccc(&pred.arousal_pred, &data.val.arousal).unwrap());
    let one = data.val.subset(&[0]).unwrap();
    assert!(matches!(evaluate_regression(&model, &one), Err(Error::Metric(_))));
}

#[test]
fn degenerate_batch_error_names_the_batch() {
    let err = with_batch_context(Error::Numeric("loss is NaN".into()), 3, 7);
    assert!(matches!(err, Error::Numeric(ref m) if m.contains("epoch 3, batch 7")));
}

#[test]
fn missing_class_in_train_split_is_reported() {
    let mut data = small_data(8);
    let keep: Vec<usize> = (0..data.train.len())
        .filter(|&i| data.train.expression[i].index() != 6)
        .collect();
    data.train = data.train.subset(&keep).unwrap();
    assert!(train(&cfg(Variant::EmotionGcn, 1), &data).is_err());
}
