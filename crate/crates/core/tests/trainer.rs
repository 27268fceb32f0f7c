use elastic_ast::encoder::{ModelConfig, ModelParams};
use elastic_ast::trainer::{
    batch_gradient, prepare_grid, Adam, Factor, Split, TaskSpec, TrainConfig, TrainMode, Trainer,
};

fn small_task(n_train: usize) -> TaskSpec {
    TaskSpec {
        n_train,
        n_eval: 4,
        ..TaskSpec::late_signal(3, 300.0, 0.1, 21)
    }
}

fn small_model(k: usize) -> ModelConfig {
    let mut c = ModelConfig::with_dims(16, 2, 1, k);
    c.freq_max = 2;
    c
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let task = small_task(6);
    let data = task.generate(Split::Train).unwrap();
    let params = ModelParams::<f64>::init(&small_model(3), 1).unwrap();
    let cfg = TrainConfig {
        lr: 0.0,
        packing_batch: 4,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(params.clone(), cfg, task).unwrap();
    let logs = trainer.train_epoch(&data).unwrap();
    assert_eq!(logs.len(), 2);
    assert_eq!(trainer.params, params);
}

#[test]
fn overfits_a_single_sample() {
    let task = small_task(1);
    let data = task.generate(Split::Train).unwrap();
    let params = ModelParams::<f32>::init(&small_model(3), 2).unwrap();
    let mut trainer = Trainer::new(params, TrainConfig::default(), task).unwrap();
    let mut losses = Vec::new();
    for _ in 0..150 {
        losses.extend(trainer.train_epoch(&data).unwrap().iter().map(|l| l.loss));
    }
    assert!(*losses.last().unwrap() < 0.01, "final loss {}", losses.last().unwrap());
    let warm = 10;
    let decreasing = losses[warm..].windows(2).filter(|w| w[1] < w[0]).count();
    assert!(decreasing as f64 >= 0.9 * (losses.len() - warm - 1) as f64);
}

#[test]
fn packed_and_sequential_steps_agree() {
    let task = small_task(5);
    let data = task.generate(Split::Train).unwrap();
    let config = small_model(3);
    let grids: Vec<_> = data.iter().map(|s| prepare_grid(&task, s, Factor::None, 16).unwrap()).collect();
    let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
    let cfg = TrainConfig::default();
    let mut packed = ModelParams::<f64>::init(&config, 4).unwrap();
    let mut sequential = packed.clone();
    let mut opt_packed = Adam::new(&packed, &cfg);
    let mut opt_seq = Adam::new(&sequential, &cfg);
    for _ in 0..5 {
        let g = batch_gradient(&packed, &grids, &labels, TrainMode::Elastic, 2048).unwrap();
        opt_packed.step(&mut packed, &g.grads);
        let mut acc = sequential.zeros_like();
        for (grid, &label) in grids.iter().zip(&labels) {
            let one = batch_gradient(&sequential, std::slice::from_ref(grid), &[label], TrainMode::Elastic, 2048)
                .unwrap();
            acc.add_scaled(&one.grads, 1.0 / grids.len() as f64);
        }
        opt_seq.step(&mut sequential, &acc);
        assert!(packed.max_abs_diff(&sequential) < 1e-8);
    }
}

#[test]
fn training_is_seeded() {
    let task = small_task(8);
    let data = task.generate(Split::Train).unwrap();
    let run = || {
        let params = ModelParams::<f32>::init(&small_model(3), 3).unwrap();
        let cfg = TrainConfig {
            packing_batch: 3,
            seed: 17,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(params, cfg, task.clone()).unwrap();
        let logs = t.train_epoch(&data).unwrap();
        (t.params, logs)
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert!(la.iter().all(|l| l.cut_ratio == 0.0 && l.lr == 1e-3));
}

#[test]
fn fixed_mode_reports_cut_and_pad() {
    let task = small_task(6);
    let data = task.generate(Split::Train).unwrap();
    let params = ModelParams::<f32>::init(&small_model(3), 3).unwrap();
    let cfg = TrainConfig {
        mode: TrainMode::Fixed { frames: 300 },
        packing_batch: 6,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(params, cfg, task).unwrap();
    let log = t.train_epoch(&data).unwrap()[0];
    assert!(log.pad_ratio > 0.0 && log.cut_ratio > 0.0, "{log:?}");
}

#[test]
fn frame_shift_rejected_for_spectrogram_tasks() {
    let params = ModelParams::<f32>::init(&small_model(3), 3).unwrap();
    let cfg = TrainConfig {
        compression: elastic_ast::trainer::Compression::Fshift(vec![1.0, 2.0]),
        ..TrainConfig::default()
    };
    assert!(Trainer::new(params, cfg, small_task(2)).is_err());
}
