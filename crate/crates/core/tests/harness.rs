use lanetraj::harness::{evaluate, prepare_scenes, train_split, Config, DataConfig, Trainer};

/// Default desk configuration, cut to six epochs.
#[test]
fn loss_decreases_by_epoch_five_on_desk_config() {
    let cfg = Config::default();
    let scenes = train_split(&cfg.scenario, &cfg.data).unwrap();
    let data = prepare_scenes(&cfg.model, &cfg.targets, &scenes).unwrap();
    let mut train = cfg.train.clone();
    train.epochs = 6;
    let mut trainer = Trainer::new(cfg.model.clone(), train).unwrap();
    let logs = trainer.train(&data, |_, _| Ok(())).unwrap();
    assert_eq!(logs.len(), 6);
    assert!(logs[5].total < logs[0].total, "{logs:?}");
}

#[test]
fn training_is_deterministic_and_lane_loss_toggle_matters() {
    let mut cfg = Config::default();
    cfg.data = DataConfig {
        train_scenes: 48,
        eval_scenes: 16,
    };
    cfg.model.d = 16;
    cfg.train.epochs = 1;
    cfg.train.batch_size = 16;
    let scenes = train_split(&cfg.scenario, &cfg.data).unwrap();
    let data = prepare_scenes(&cfg.model, &cfg.targets, &scenes).unwrap();
    let run = |lane_loss: bool| {
        let mut t = cfg.train.clone();
        t.objective.lane_loss = lane_loss;
        let mut trainer = Trainer::new(cfg.model.clone(), t).unwrap();
        trainer.train(&data, |_, _| Ok(())).unwrap();
        trainer.checkpoint()
    };
    assert_eq!(run(true), run(true));
    assert_ne!(run(true).params, run(false).params);
    let trainer = Trainer::resume(&run(true), cfg.train.clone()).unwrap();
    let a = evaluate(trainer.model(), &data, &[6, 1]).unwrap();
    let b = evaluate(trainer.model(), &data, &[6, 1]).unwrap();
    assert_eq!(a, b);
    assert!(a.value("min_ade", 6).unwrap() <= a.value("min_ade", 1).unwrap());
}
