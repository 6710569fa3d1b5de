mod common;

use common::*;
use pishgu::data::DatasetSpec;
use pishgu::model::*;
use pishgu::training::*;
use pishgu::Error;
use rand::Rng;

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        ..TrainConfig::vehicle()
    }
}

fn small_frames(seed: u64, count: usize) -> Vec<pishgu::data::FrameSample> {
    let cfg = small_config();
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let n = r.gen_range(1..4);
            random_frame(&mut r, n, cfg.t_in, cfg.t_out)
        })
        .collect()
}

#[test]
fn loss_is_mean_squared_coordinate_error() {
    let mut r = rng(1);
    let a = uniform(&mut r, &[3, 5, 2], -2.0, 2.0);
    let b = uniform(&mut r, &[3, 5, 2], -2.0, 2.0);
    let expected: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 30.0;
    assert!((loss(&a, &b).unwrap() - expected).abs() < 1e-14);
}

#[test]
fn offset_loss_equals_position_loss() {
    let cfg = small_config();
    for seed in 0..5 {
        let params = perturbed_params(cfg, seed);
        let frame = &small_frames(seed, 1)[0];
        let by_position = loss(&forward(frame, &params).unwrap(), &frame_targets(frame, cfg.t_out).unwrap()).unwrap();
        let by_offset = mean_loss(std::slice::from_ref(frame), &params).unwrap();
        assert!((by_position - by_offset).abs() < 1e-12 * by_position.max(1.0));
    }
}

#[test]
fn first_adam_step_moves_by_learning_rate() {
    let mut params = perturbed_params(small_config(), 2);
    let before = params.clone();
    let mut state = AdamState::new(&params);
    let grads: Gradients = params
        .named_tensors()
        .into_iter()
        .map(|(name, t)| (name.to_string(), t.data().iter().enumerate().map(|(i, _)| if i % 2 == 0 { 3.0 } else { -0.5 }).collect()))
        .collect();
    adam_step(&mut params, &grads, &mut state, &TrainConfig::vehicle()).unwrap();
    for ((_, a), (_, b)) in params.named_tensors().into_iter().zip(before.named_tensors()) {
        for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
            let expected = if i % 2 == 0 { -0.01 } else { 0.01 };
            assert!((x - y - expected).abs() < 1e-9, "{} vs {expected}", x - y);
        }
    }
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let frames = small_frames(4, 3);
    let (params, history) = train(&frames, &[], small_config(), &quick(0)).unwrap();
    assert!(history.is_empty());
    assert_eq!(params, ModelParams::init(small_config(), 0).unwrap());
}

#[test]
fn training_is_deterministic() {
    let frames = small_frames(5, 4);
    let val = small_frames(6, 2);
    let run = || train(&frames, &val, small_config(), &quick(4)).unwrap();
    let (pa, ha) = run();
    let (pb, hb) = run();
    assert_eq!(pa, pb);
    assert_eq!(ha, hb);
    assert!(ha.iter().all(|h| h.val_loss.is_some()));
}

#[test]
fn validation_runs_on_schedule() {
    let frames = small_frames(7, 2);
    let cfg = TrainConfig {
        eval_every: 3,
        ..quick(7)
    };
    let (_, history) = train(&frames, &frames, small_config(), &cfg).unwrap();
    let validated: Vec<usize> = history.iter().filter(|h| h.val_loss.is_some()).map(|h| h.epoch).collect();
    assert_eq!(validated, [3, 6, 7]);

    let mut csv = Vec::new();
    write_history(&mut csv, &history).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,train_loss,val_loss"));
    assert!(csv.lines().nth(1).unwrap().ends_with(','));
}

#[test]
fn empty_training_set_is_config_error() {
    let err = train(&[], &[], small_config(), &quick(1)).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "train"));
}

#[test]
fn invalid_config_names_the_field() {
    let frames = small_frames(8, 1);
    let cfg = TrainConfig {
        learning_rate: -1.0,
        ..quick(1)
    };
    let err = train(&frames, &[], small_config(), &cfg).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "learning_rate"), "{err}");
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let frames = small_frames(9, 3);
    let (_, history) = train(&frames, &[], small_config(), &quick(30)).unwrap();
    assert!(history.last().unwrap().train_loss < 0.5 * history[0].train_loss, "{history:?}");
}

#[test]
fn snapshots_see_every_epoch() {
    let frames = small_frames(10, 2);
    let mut seen = Vec::new();
    train_with(&frames, &[], small_config(), &quick(3), |log, _| {
        seen.push(log.epoch);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, [1, 2, 3]);
}

#[test]
fn stationary_subjects_with_zero_head_score_zero() {
    let spec = DatasetSpec {
        t_in: 4,
        t_out: 3,
        ..DatasetSpec::vehicle()
    };
    let mut params = perturbed_params(small_config(), 11);
    params.weights.visit_mut(&mut |name, t| {
        if name.starts_with("head.") {
            t.data_mut().fill(0.0);
        }
    });
    let tracks: Vec<_> = [[1.0, 2.0], [-4.0, 0.5], [3.0, 3.0]]
        .iter()
        .map(|&p| (vec![p; 4], vec![p; 3]))
        .collect();
    let mut frame = frame_from_tracks(&tracks);
    frame.normalization_offset = [100.0, -50.0];
    let rep = evaluate(&[frame.clone()], &params, &spec).unwrap();
    assert_eq!((rep.ade, rep.fde, rep.n_subjects), (0.0, 0.0, 3));
    let cv = evaluate_constant_velocity(&[frame], &spec).unwrap();
    assert_eq!(cv.ade, 0.0);
}

#[test]
fn evaluate_rejects_mismatched_geometry() {
    let params = perturbed_params(ModelConfig::pedestrian(), 0);
    let frames = small_frames(12, 1);
    assert!(matches!(
        evaluate(&frames, &params, &DatasetSpec::pedestrian_birdseye()),
        Err(Error::Contract(_))
    ));
}

#[test]
fn overfit_corpus_has_the_intended_shape() {
    let (frames, spec) = overfit_corpus();
    assert_eq!(frames.len(), 4);
    assert!(frames.iter().all(|f| f.len() == 5));
    assert!(frames.iter().flat_map(|f| &f.windows).all(|w| w.t_in() == spec.t_in && w.t_out() == spec.t_out));
    let truth = pishgu::metrics::truth_absolute(&frames).unwrap();
    assert_eq!(truth.shape(), &[20, 25, 2]);
}
