mod common;

use common::close;
use dbpinn::autodiff::{grad_wrt_params, Tape, TapedNetwork};
use dbpinn::nn::{adam_step, decode_checkpoint, encode_checkpoint, init_network, AdamState};
use dbpinn::pde::{condition_loss_on_tape, residual_loss_on_tape, sample_batch, PdeProblem, SampleCounts};
use dbpinn::train::{combined_gradient, step_gradients, train, Method, RunStatus, TrainConfig};
use dbpinn::weighting::{GradStatistic, Strategy};

fn small(problem: &str, strategy: Strategy, steps: u64) -> TrainConfig {
    TrainConfig {
        problem: problem.into(),
        layer_sizes: vec![2, 12, 12, 1],
        n_residual: 128,
        n_condition: 32,
        max_train_steps: steps,
        learning_rate: 1e-3,
        method: Method::new(strategy, GradStatistic::Mean),
        eval_resolution: 21,
        log_stride: 50,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn equal_weighting_minimizes_the_plain_sum() {
    for name in ["klein-gordon", "wave", "helmholtz"] {
        let problem = PdeProblem::by_name(name).unwrap();
        let net = init_network(&[2, 8, 8, 1], 4).unwrap();
        let counts = SampleCounts::uniform(20, 6, problem.condition_count());
        let batch = sample_batch(&problem, &counts, 4).unwrap();

        let sg = step_gradients(&net, &problem, &batch).unwrap();
        let ones = vec![1.0; problem.condition_count()];
        let combined = combined_gradient(&sg.g_residual, &sg.g_conditions, &ones).unwrap();

        let tape = Tape::new();
        let tn = TapedNetwork::new(&tape, &net);
        let mut total = residual_loss_on_tape(&tn, &problem, &batch.collocation).unwrap();
        for (i, pts) in batch.conditions.iter().enumerate() {
            total = total + condition_loss_on_tape(&tn, &problem, i, pts).unwrap();
        }
        let direct = grad_wrt_params(&total, &tn).unwrap();
        for (a, b) in combined.entries().iter().zip(direct.entries()) {
            assert!(close(*a, *b, 1e-10, 1e-13), "{name}: {a} vs {b}");
        }
    }
}

#[test]
fn single_step_is_one_adam_step_on_the_summed_gradient() {
    let config = small("wave", Strategy::Equal, 1);
    let record = train(&config).unwrap();
    assert_eq!(record.history.len(), 1);
    assert_eq!(record.history[0].lambdas, vec![1.0; 3]);

    let problem = config.build_problem().unwrap();
    let counts = SampleCounts::uniform(config.n_residual, config.n_condition, 3);
    let batch = sample_batch(&problem, &counts, config.seed).unwrap();
    let mut net = init_network(&config.layer_sizes, config.seed).unwrap();
    let sg = step_gradients(&net, &problem, &batch).unwrap();
    let g = combined_gradient(&sg.g_residual, &sg.g_conditions, &[1.0; 3]).unwrap();
    let mut adam = AdamState::new(net.total_count(), config.learning_rate);
    adam_step(&mut net, &g, &mut adam).unwrap();
    assert_eq!(record.params.values(), net.values());
}

#[test]
fn training_reduces_total_loss_for_every_strategy() {
    let strategies = [Strategy::Equal, Strategy::Gw, Strategy::Db, Strategy::DbAvg, Strategy::DbNoBalance];
    for problem in ["klein-gordon", "wave", "helmholtz"] {
        for strategy in strategies {
            let config = small(problem, strategy, 300);
            let r = train(&config).unwrap();
            assert!(r.is_completed(), "{problem} {strategy}: {:?}", r.status);
            let total = |k: usize| r.history[k].residual_loss + r.history[k].condition_losses.iter().sum::<f64>();
            let (first, last) = (total(0), total(r.history.len() - 1));
            assert!(last < first, "{problem} {strategy}: {first} -> {last}");
            for row in &r.history {
                assert!(row.lambdas.iter().all(|l| l.is_finite() && *l >= 0.0));
            }
        }
    }
}

#[test]
fn identical_configs_give_identical_records() {
    let mut config = small("klein-gordon", Strategy::Db, 60);
    config.method = Method::new(Strategy::Db, GradStatistic::Kurtosis);
    let a = train(&config).unwrap();
    let b = train(&config).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(encode_checkpoint(&a.params, a.steps_completed), encode_checkpoint(&b.params, b.steps_completed));
    config.seed += 1;
    let c = train(&config).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn final_parameters_survive_a_checkpoint_round_trip() {
    let r = train(&small("helmholtz", Strategy::Gw, 20)).unwrap();
    let bytes = encode_checkpoint(&r.params, r.steps_completed);
    let ck = decode_checkpoint(&bytes, "mem".as_ref()).unwrap();
    assert_eq!(ck.step, 20);
    assert_eq!(ck.params.layer_sizes(), &[2, 12, 12, 1]);
    assert!(ck.params.values().iter().zip(r.params.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn overflow_aborts_the_run_with_a_diagnostic() {
    let mut config = small("klein-gordon", Strategy::Db, 50);
    config.learning_rate = 1e300;
    let r = train(&config).unwrap();
    match &r.status {
        RunStatus::Aborted { step, diagnostic } => {
            assert!(*step > 1 && *step <= 50);
            assert!(diagnostic.contains("overflow"), "{diagnostic}");
            assert_eq!(r.steps_completed, step - 1);
        }
        RunStatus::Completed => panic!("expected an abort"),
    }
    assert!(r.params.values().iter().all(|v| v.is_finite()));
}
