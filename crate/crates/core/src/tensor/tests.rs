use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::gradcheck::{gradcheck, project, random};

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn tensor_rejects_bad_shapes() {
    assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    assert!(Tensor::new(vec![0], vec![]).is_err());
}

#[test]
fn sigmoid_at_zero_is_half() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t(&[1], &[0.0]));
    let y = tape.sigmoid(x);
    assert_eq!(tape.value(y), &[0.5]);
}

#[test]
fn matmul_identity() {
    let mut tape = Tape::new();
    let i = tape.leaf(&t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let m = tape.leaf(&t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
    let y = tape.matmul(i, m).unwrap();
    assert_eq!(tape.value(y), &[3.0, 4.0, 5.0, 6.0]);
}

#[test]
fn tanh_matches_high_precision_reference() {
    // tanh(0.5) = 0.462117157260009758502318483644 (30-digit reference)
    let mut tape = Tape::new();
    let x = tape.leaf(&t(&[1], &[0.5]));
    let y = tape.tanh(x);
    assert!((tape.value(y)[0] - 0.462_117_157_260_009_76).abs() < 1e-15);
}

#[test]
fn shape_mismatch_names_the_op() {
    let mut tape = Tape::new();
    let a = tape.leaf(&Tensor::zeros(&[2, 3]));
    let b = tape.leaf(&Tensor::zeros(&[2, 2]));
    match tape.matmul(a, b) {
        Err(Error::Dimension { op, shapes, .. }) => {
            assert_eq!(op, "matmul");
            assert_eq!(shapes, vec![vec![2, 3], vec![2, 2]]);
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
    assert!(matches!(tape.add(a, b), Err(Error::Dimension { op: "add", .. })));
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t(&[3], &[0.0, 0.0, 0.0]));
    let y = tape.softmax(x).unwrap();
    for &p in tape.value(y) {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let x = tape.leaf(&t(&[3], &[1.0, 2.0, 3.0]));
    let y = tape.softmax(x).unwrap();
    let reference = [0.090_030_573_170_380_46, 0.244_728_471_054_797_65, 0.665_240_955_774_821_9];
    for (p, r) in tape.value(y).iter().zip(reference) {
        assert!((p - r).abs() < 1e-15);
    }
    let bad = tape.leaf(&Tensor::zeros(&[1, 2, 3]));
    assert!(matches!(tape.softmax(bad), Err(Error::Dimension { .. })));
}

#[test]
fn softmax_rows_sum_to_one_and_shift_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let logits = random(&mut rng, &[4, 7], 20.0);
        let shift = rng.gen_range(-100.0..100.0);
        let shifted = t(&[4, 7], &logits.data().iter().map(|v| v + shift).collect::<Vec<_>>());
        let mut tape = Tape::new();
        let a = tape.leaf(&logits);
        let b = tape.leaf(&shifted);
        let pa = tape.softmax(a).unwrap();
        let pb = tape.softmax(b).unwrap();
        for row in tape.value(pa).chunks(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
        for (x, y) in tape.value(pa).iter().zip(tape.value(pb)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn cross_entropy_examples() {
    let mut tape = Tape::new();
    let p = tape.leaf(&t(&[1, 3], &[1.0, 0.0, 0.0]));
    let l = tape.categorical_cross_entropy(p, &t(&[1, 3], &[1.0, 0.0, 0.0])).unwrap();
    assert!(tape.value(l)[0] <= 1e-11);

    let third = 1.0 / 3.0;
    let p = tape.leaf(&t(&[1, 3], &[third, third, third]));
    let l = tape.cross_entropy(p, &[2]).unwrap();
    assert!((tape.value(l)[0] - 1.098_612_288_668_109_7).abs() < 1e-12);

    let p = tape.leaf(&t(&[1, 3], &[0.7, 0.2, 0.1]));
    let l = tape.cross_entropy(p, &[1]).unwrap();
    assert!((tape.value(l)[0] - 1.609_437_912_434_100_4).abs() < 1e-12);
}

#[test]
fn cross_entropy_validates_inputs() {
    let mut tape = Tape::new();
    let p = tape.leaf(&t(&[1, 3], &[0.5, 0.2, 0.1]));
    assert!(matches!(tape.cross_entropy(p, &[0]), Err(Error::Validation(_))));
    let p = tape.leaf(&t(&[1, 3], &[0.5, 0.3, 0.2]));
    let not_one_hot = t(&[1, 3], &[1.0, 1.0, 0.0]);
    assert!(matches!(tape.categorical_cross_entropy(p, &not_one_hot), Err(Error::Validation(_))));
}

#[test]
fn backward_linear_and_quadratic() {
    let mut tape = Tape::new();
    let w = tape.leaf(&t(&[3], &[1.0, 2.0, 3.0]).with_grad());
    let s = tape.sum(w, None).unwrap();
    assert_eq!(tape.backward(s).unwrap().wrt(w).unwrap(), &[1.0, 1.0, 1.0]);

    let mut tape = Tape::new();
    let w = tape.leaf(&t(&[2], &[1.0, -2.0]).with_grad());
    let sq = tape.mul(w, w).unwrap();
    let s = tape.sum(sq, None).unwrap();
    assert_eq!(tape.backward(s).unwrap().wrt(w).unwrap(), &[2.0, -4.0]);
}

#[test]
fn backward_requires_scalar() {
    let mut tape = Tape::new();
    let w = tape.leaf(&t(&[2], &[1.0, 2.0]).with_grad());
    assert!(matches!(tape.backward(w), Err(Error::Dimension { .. })));
}

#[test]
fn shared_parent_gradients_accumulate() {
    // loss = sum(exp(w)) + sum(w * 3)  uses w twice
    let mut tape = Tape::new();
    let w = tape.leaf(&t(&[2], &[0.5, -1.0]).with_grad());
    let e = tape.exp(w);
    let s1 = tape.sum(e, None).unwrap();
    let sc = tape.scale(w, 3.0);
    let s2 = tape.sum(sc, None).unwrap();
    let loss = tape.add(s1, s2).unwrap();
    let g = tape.backward(loss).unwrap();
    let got = g.wrt(w).unwrap();
    assert!((got[0] - (0.5f64.exp() + 3.0)).abs() < 1e-15);
    assert!((got[1] - ((-1.0f64).exp() + 3.0)).abs() < 1e-15);
}

#[test]
fn repeated_backward_accumulates_into_tensor() {
    let mut param = t(&[2], &[1.0, -2.0]).with_grad();
    let mut tape = Tape::new();
    let w = tape.leaf(&param);
    let sq = tape.mul(w, w).unwrap();
    let s = tape.sum(sq, None).unwrap();
    for _ in 0..2 {
        tape.backward(s).unwrap().accumulate_into(w, &mut param).unwrap();
    }
    assert_eq!(param.grad().unwrap(), &[4.0, -8.0]);
    param.zero_grad();
    assert_eq!(param.grad().unwrap(), &[0.0, 0.0]);
}

#[test]
fn log_is_clamped() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t(&[2], &[0.0, -1.0]).with_grad());
    let y = tape.log(x);
    assert!(tape.value(y).iter().all(|v| v.is_finite()));
    let s = tape.sum(y, None).unwrap();
    let g = tape.backward(s).unwrap();
    assert!(g.wrt(x).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn gradcheck_every_generic_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..20u64 {
        let r = 2 + (seed as usize % 3);
        let c = 3 + (seed as usize % 4);
        let a = random(&mut rng, &[r, c], 1.0);
        let b = random(&mut rng, &[r, c], 1.0);
        let m = random(&mut rng, &[c, 2], 1.0);
        let bias = random(&mut rng, &[c], 1.0);
        let pos = t(&[r, c], &a.data().iter().map(|v| v.abs() + 0.5).collect::<Vec<_>>());

        let cases: Vec<(&str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>)> = vec![
            ("add", vec![a.clone(), b.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.add(v[0], v[1])?;
                project(tp, y, seed)
            })),
            ("sub", vec![a.clone(), b.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.sub(v[0], v[1])?;
                project(tp, y, seed)
            })),
            ("mul", vec![a.clone(), b.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.mul(v[0], v[1])?;
                project(tp, y, seed)
            })),
            ("matmul", vec![a.clone(), m.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.matmul(v[0], v[1])?;
                project(tp, y, seed)
            })),
            ("add_bias", vec![a.clone(), bias.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.add_bias(v[0], v[1])?;
                project(tp, y, seed)
            })),
            ("sigmoid", vec![a.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.sigmoid(v[0]);
                project(tp, y, seed)
            })),
            ("tanh", vec![a.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.tanh(v[0]);
                project(tp, y, seed)
            })),
            ("exp", vec![a.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.exp(v[0]);
                project(tp, y, seed)
            })),
            ("log", vec![pos.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.log(v[0]);
                project(tp, y, seed)
            })),
            ("sum_axis", vec![a.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.sum(v[0], Some(1))?;
                project(tp, y, seed)
            })),
            ("mean_axis", vec![a.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.mean(v[0], Some(0))?;
                project(tp, y, seed)
            })),
            ("concat", vec![a.clone(), b.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.concat(&[v[0], v[1]], 1)?;
                project(tp, y, seed)
            })),
            ("reshape_slice", vec![a.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let y = tp.reshape(v[0], &[r * c])?;
                let y = tp.slice(y, 0, 1, r * c - 2)?;
                project(tp, y, seed)
            })),
            ("softmax_ce", vec![a.clone()], Box::new(move |tp: &mut Tape, v: &[Var]| {
                let p = tp.softmax(v[0])?;
                let labels: Vec<usize> = (0..r).map(|i| (i + seed as usize) % c).collect();
                tp.cross_entropy(p, &labels)
            })),
        ];
        for (name, inputs, build) in cases {
            let err = gradcheck(&inputs, build).unwrap();
            assert!(err < 1e-4, "{name} seed {seed}: relative error {err}");
        }
    }
}

#[test]
fn slice_along_time_axis() {
    let x = t(&[2, 3, 2], &(0..12).map(f64::from).collect::<Vec<_>>());
    let mut tape = Tape::new();
    let v = tape.leaf(&x);
    let s = tape.slice(v, 1, 1, 1).unwrap();
    assert_eq!(tape.shape(s), &[2, 1, 2]);
    assert_eq!(tape.value(s), &[2.0, 3.0, 8.0, 9.0]);
}

#[test]
fn apply_dispatches_by_kind() {
    let mut tape = Tape::new();
    let a = tape.leaf(&t(&[2], &[1.0, 2.0]));
    let b = tape.leaf(&t(&[2], &[3.0, 5.0]));
    let y = tape.apply(OpKind::Sub, &[b, a]).unwrap();
    assert_eq!(tape.value(y), &[2.0, 3.0]);
    assert!(tape.apply(OpKind::Add, &[a]).is_err());
}

#[test]
fn adam_zero_gradient_is_identity() {
    let mut p = t(&[3], &[1.0, -2.0, 0.5]).with_grad();
    p.accumulate_grad(&[0.0; 3]).unwrap();
    let before = p.data().to_vec();
    let mut adam = Adam::new(AdamConfig::default());
    adam.step(&mut [&mut p]).unwrap();
    assert_eq!(p.data(), before.as_slice());
}

#[test]
fn adam_first_step_is_lr_sized() {
    let mut p = t(&[1], &[0.0]).with_grad();
    p.accumulate_grad(&[1.0]).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    adam.step(&mut [&mut p]).unwrap();
    // m_hat = v_hat = 1 after bias correction: w = -lr * 1 / (1 + eps)
    assert!((p.data()[0] + 1e-4 / (1.0 + 1e-8)).abs() < 1e-18);
    assert_eq!(p.grad().unwrap(), &[0.0]);
    assert_eq!(adam.states()[0].t, 1);
}

#[test]
fn adam_missing_gradient_is_a_state_error() {
    let mut p = t(&[1], &[0.0]).with_grad();
    let mut adam = Adam::new(AdamConfig::default());
    assert!(matches!(adam.step(&mut [&mut p]), Err(Error::State(_))));
}

#[test]
fn adam_converges_on_scalar_quadratic() {
    let mut w = t(&[1], &[0.0]).with_grad();
    let mut adam = Adam::new(AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    });
    for _ in 0..200 {
        let x = w.data()[0];
        w.accumulate_grad(&[2.0 * (x - 3.0)]).unwrap();
        adam.step(&mut [&mut w]).unwrap();
    }
    assert!((w.data()[0] - 3.0).abs() < 0.05, "w = {}", w.data()[0]);
}

#[test]
fn adam_step_counter_increments() {
    let mut state = AdamState::new(2);
    let cfg = AdamConfig::default();
    let mut p = [0.0, 0.0];
    for expected in 1..=3 {
        state.update(&cfg, &mut p, &[0.1, -0.1]).unwrap();
        assert_eq!(state.t, expected);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random(&mut rng, &[3, 4], 1e3).with_grad();
    let b = t(&[2], &[f64::MIN_POSITIVE, -0.0]);
    save_checkpoint(&path, &[("net/a", &a), ("net/b", &b)], serde_json::json!({"k": 1})).unwrap();
    let ck = load_checkpoint(&path).unwrap();
    assert_eq!(ck.metadata["k"], 1);
    let la = ck.get("net/a").unwrap();
    assert_eq!(la.shape(), a.shape());
    assert!(la.requires_grad());
    for (x, y) in la.data().iter().zip(a.data()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    assert_eq!(ck.get("net/b").unwrap().data()[1].to_bits(), (-0.0f64).to_bits());
}
