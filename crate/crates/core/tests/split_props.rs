use gsfl::nn::{forward, init_params, train_step, ModelSpec, Tensor};
use gsfl::split::{client_backward_step, client_forward, server_train_step, split_model, split_train_step, stitch_model};
use gsfl::Error;
use proptest::prelude::*;

type Batch = (Vec<Vec<f64>>, Vec<usize>);

fn setup() -> impl Strategy<Value = (ModelSpec, usize, u64, f64, Vec<Batch>)> {
    (1usize..=6, prop::collection::vec(1usize..=6, 1..=3), 2usize..=5, any::<u64>(), 0.01f64..0.5).prop_flat_map(
        |(input, hidden, classes, seed, lr)| {
            let spec = ModelSpec::mlp(input, &hidden, classes).unwrap();
            let cut = 1..spec.num_layers();
            let batches = prop::collection::vec(
                (1usize..=5).prop_flat_map(move |b| {
                    (
                        prop::collection::vec(prop::collection::vec(-2.0f64..2.0, input), b),
                        prop::collection::vec(0..classes, b),
                    )
                }),
                10,
            );
            (Just(spec), cut, Just(seed), Just(lr), batches)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_training_equals_unsplit_sgd((spec, cut, seed, lr, batches) in setup()) {
        let split = split_model(&spec, cut).unwrap();
        let mut full = init_params(&spec, seed).unwrap();
        let (mut c, mut s) = split.split_params(&full).unwrap();
        for (id, (rows, labels)) in batches.iter().enumerate() {
            let x = Tensor::from_rows(rows).unwrap();
            let (f, loss) = train_step(&spec, &full, &x, labels, lr).unwrap();
            let (c2, s2, split_loss) = split_train_step(&split, &c, &s, &x, labels, id as u64, lr).unwrap();
            prop_assert_eq!(loss.to_bits(), split_loss.to_bits());
            full = f;
            c = c2;
            s = s2;
        }
        let (stitched_spec, stitched) = stitch_model(&split, &c, &s).unwrap();
        prop_assert_eq!(&stitched_spec, &spec);
        prop_assert!(stitched.max_abs_diff(&full) <= 1e-12);
    }

    #[test]
    fn split_then_stitch_is_identity((spec, cut, seed, _, _) in setup()) {
        let split = split_model(&spec, cut).unwrap();
        let full = init_params(&spec, seed).unwrap();
        let (c, s) = split.split_params(&full).unwrap();
        prop_assert_eq!(c.param_count() + s.param_count(), full.param_count());
        prop_assert_eq!(stitch_model(&split, &c, &s).unwrap().1, full);
    }

    #[test]
    fn stitched_forward_equals_composed_halves((spec, cut, seed, _, batches) in setup()) {
        let split = split_model(&spec, cut).unwrap();
        let full = init_params(&spec, seed).unwrap();
        let (c, s) = split.split_params(&full).unwrap();
        let x = Tensor::from_rows(&batches[0].0).unwrap();
        let (mid, _) = forward(split.client_spec(), &c, &x).unwrap();
        let (composed, _) = forward(split.server_spec(), &s, &mid).unwrap();
        let (direct, _) = forward(&spec, &full, &x).unwrap();
        prop_assert_eq!(composed, direct);
    }
}

#[test]
fn stale_gradient_is_rejected() {
    let spec = ModelSpec::mlp(3, &[4], 2).unwrap();
    let split = split_model(&spec, 2).unwrap();
    let (c, s) = split.split_params(&init_params(&spec, 1).unwrap()).unwrap();
    let x = Tensor::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap();
    let (smashed, cache) = client_forward(split.client_spec(), &c, &x, &[1], 5).unwrap();
    let (_, mut grad) = server_train_step(split.server_spec(), &s, &smashed, 0.1).unwrap();
    grad.batch_id = 4;
    assert!(matches!(
        client_backward_step(split.client_spec(), &c, &cache, &grad, 0.1),
        Err(Error::Protocol(_))
    ));
}

#[test]
fn cut_outside_model_is_a_config_error() {
    let spec = ModelSpec::mlp(3, &[4], 2).unwrap();
    for cut in [0, spec.num_layers()] {
        assert!(matches!(split_model(&spec, cut), Err(Error::Config { .. })));
    }
}
