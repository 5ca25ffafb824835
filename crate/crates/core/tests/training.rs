use robust_w1::data::{generate_sample, toy_pair, ContaminationSpec, Dataset, InlierSpec};
use robust_w1::estimators::EstimatorSpec;
use robust_w1::experiments::{repeat_seed, run_k_sweep, run_rate_trace, train_toy, RateSpec, SweepSpec};
use robust_w1::gan::{score_generator, train_wgan, GanConfig, Generator};
use robust_w1::optim::{train_critic, train_w_mom, train_w_mou, train_w_mou_diag};
use robust_w1::{EstimatorKind, TrainConfig};

fn small_cfg() -> TrainConfig {
    TrainConfig { n_iter: 60, hidden: 16, lr: 1e-3, seed: 9, ..TrainConfig::default() }
}

#[test]
fn one_block_runs_are_identical_across_estimators() {
    let (x, y) = toy_pair::<f64>(Dataset::D1, 120, 0.1, 4).unwrap();
    let cfg = small_cfg();
    let a = train_w_mom(&x, &y, &cfg).unwrap();
    let b = train_w_mou_diag(&x, &y, &cfg).unwrap();
    let c = train_w_mou(&x, &y, &cfg).unwrap();
    assert_eq!(a.objectives(), b.objectives());
    assert_eq!(a.objectives(), c.objectives());
    assert_eq!(a.final_estimate, c.final_estimate);
}

#[test]
fn training_is_reproducible_and_seed_dependent() {
    let (x, y) = toy_pair::<f64>(Dataset::D2, 100, 0.05, 1).unwrap();
    let spec = EstimatorSpec::mom(5, 5);
    let cfg = small_cfg();
    let a = train_critic(&x, &y, &spec, &cfg).unwrap();
    let b = train_critic(&x, &y, &spec, &cfg).unwrap();
    assert_eq!(a.objectives(), b.objectives());
    let c = train_critic(&x, &y, &spec, &cfg.clone().with_seed(10)).unwrap();
    assert_ne!(a.objectives(), c.objectives());
}

#[test]
fn trace_has_one_point_per_iteration() {
    let (x, y) = toy_pair::<f64>(Dataset::D1, 80, 0.0, 2).unwrap();
    let cfg = small_cfg().with_ks(4, 4).with_epochs(3);
    let report = train_critic(&x, &y, &EstimatorSpec::mou_diag(4), &cfg).unwrap();
    assert_eq!(report.trace.len(), 12);
    assert_eq!(report.trace[0].iteration, 1);
    assert!((report.trace[11].epoch - 3.0).abs() < 1e-12);
}

#[test]
fn huge_learning_rate_reports_divergence() {
    let (x, y) = toy_pair::<f64>(Dataset::D1, 50, 0.0, 3).unwrap();
    let cfg = TrainConfig { lr: 1e308, ..small_cfg() };
    match train_critic(&x, &y, &EstimatorSpec::mom(1, 1), &cfg) {
        Err(e) if e.is_numerical() => {}
        other => panic!("expected divergence, got {:?}", other.map(|r| r.final_estimate)),
    }
}

#[test]
fn oversized_clip_is_rejected() {
    let (x, y) = toy_pair::<f64>(Dataset::D1, 50, 0.0, 3).unwrap();
    let cfg = TrainConfig { clip_c: f64::MAX, ..small_cfg() };
    assert!(train_critic(&x, &y, &EstimatorSpec::mom(1, 1), &cfg).is_err());
}

#[test]
fn sweep_rows_can_be_regenerated_from_their_seed() {
    let spec = SweepSpec {
        taus: vec![0.1],
        ks: vec![1, 5],
        repeats: 2,
        epochs: 3,
        n: 100,
        base_seed: 77,
        train: TrainConfig { hidden: 16, ..TrainConfig::experiment() },
        ..SweepSpec::new(Dataset::D1, EstimatorKind::Mom)
    };
    let table = run_k_sweep(&spec, |_| Ok(())).unwrap();
    assert_eq!(table.rows.len(), 4);
    let row = &table.rows[3];
    assert_eq!(row.seed, repeat_seed(spec.base_seed, row.repeat));
    let (x, y) = toy_pair::<f64>(Dataset::D1, spec.n, row.tau, row.seed).unwrap();
    let again = train_toy(&x, &y, EstimatorKind::Mom, row.k, spec.epochs, &spec.train, row.seed).unwrap();
    assert_eq!(again.final_estimate, row.estimate);
}

#[test]
fn clean_rate_trace_decays_like_inverse_root_n() {
    let table = run_rate_trace(&RateSpec { ns: vec![50, 100, 200, 400, 800], tau: 0.0, repeats: 30, base_seed: 5 }).unwrap();
    assert!(table.slope < 0.0 && (table.slope + 0.5).abs() <= 0.2, "slope {}", table.slope);
}

#[test]
fn wgan_on_clean_data_recovers_the_mean() {
    let mut close = 0;
    for seed in 0..10u64 {
        let data = generate_sample::<f64>(&InlierSpec::gaussian(vec![5.0, 5.0], 1000), &ContaminationSpec::none(), seed)
            .unwrap();
        let cfg = GanConfig { seed, ..GanConfig::toy() };
        let (gen, _) = train_wgan(&data, &cfg).unwrap();
        if score_generator(&gen, &data, 5000, seed).unwrap().mean_error < 1.0 {
            close += 1;
        }
    }
    assert!(close >= 8, "{close}/10 seeds within 1.0 of the mean");
}

#[test]
fn training_improves_on_the_initial_generator() {
    let data =
        generate_sample::<f64>(&InlierSpec::gaussian(vec![5.0, 5.0], 1000), &ContaminationSpec::none(), 42).unwrap();
    let cfg = GanConfig { seed: 42, ..GanConfig::toy() };
    let untrained = Generator::<f64>::init(cfg.latent_dim, cfg.generator_hidden, 2, 42).unwrap();
    let (trained, report) = train_wgan(&data, &cfg).unwrap();
    assert_eq!(report.trace.len(), cfg.max_generator_steps);
    let before = score_generator(&untrained, &data, 2000, 1).unwrap();
    let after = score_generator(&trained, &data, 2000, 1).unwrap();
    assert!(after.w1_to_inliers < before.w1_to_inliers, "{after:?} vs {before:?}");
}
