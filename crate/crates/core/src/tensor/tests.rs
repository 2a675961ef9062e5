use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

/// Central-difference check of `f` w.r.t. every input, using a fixed random
/// projection of the output to get a scalar.
fn fd_check<F>(inputs: Vec<Tensor<f64>>, f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let build = |inputs: &[Tensor<f64>], proj: Option<&Tensor<f64>>| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars).unwrap();
        let shape = tape.value(out).rows_cols();
        (tape, vars, out, shape, proj.cloned())
    };
    let (_, _, _, (r, c), _) = build(&inputs, None);
    let proj = rand_tensor(&mut rng, r, c, -1.0, 1.0);
    let scalar = |inputs: &[Tensor<f64>]| {
        let (mut tape, vars, out, _, p) = build(inputs, Some(&proj));
        let pv = tape.constant(p.unwrap());
        let prod = tape.mul(out, pv).unwrap();
        let s = tape.sum(prod, None).unwrap();
        (tape, vars, s)
    };
    let (tape, vars, s) = scalar(&inputs);
    let grads = tape.gradients(s).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| {
            let (r, c) = inputs[i].rows_cols();
            Tensor::zeros(r, c)
        });
        for k in 0..inputs[i].numel() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[k] += eps;
            let mut minus = inputs.clone();
            minus[i].data_mut()[k] -= eps;
            let (tp, _, sp) = scalar(&plus);
            let (tm, _, sm) = scalar(&minus);
            let numeric = (tp.scalar_value(sp) - tm.scalar_value(sm)) / (2.0 * eps);
            let a = analytic.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn sigmoid_at_zero_is_half() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::scalar(0.0));
    let y = tape.sigmoid(x).unwrap();
    assert_eq!(tape.scalar_value(y), 0.5);
}

#[test]
fn cosine_of_vector_with_itself_is_one() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::row(vec![0.3, -2.0, 5.5]));
    let c = tape.cosine(x, x).unwrap();
    assert!((tape.scalar_value(c) - 1.0).abs() < 1e-15);
}

#[test]
fn cosine_rejects_zero_vector() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::row(vec![0.0, 0.0]));
    let y = tape.constant(Tensor::row(vec![1.0, 0.0]));
    assert!(matches!(tape.cosine(x, y), Err(TensorError::Domain { op: "cosine", .. })));
}

#[test]
fn softmax_ce_uniform_is_ln_classes() {
    let mut tape = Tape::<f64>::new();
    let z = tape.constant(Tensor::row(vec![0.0, 0.0, 0.0]));
    let l = tape.softmax_ce(z, &[1]).unwrap();
    assert!((tape.scalar_value(l) - 3f64.ln()).abs() < 1e-12);
    assert!((tape.scalar_value(l) - 1.0986).abs() < 1e-4);
}

#[test]
fn softmax_ce_stays_finite_for_huge_logits() {
    for prec in [1e4, -1e4] {
        let mut tape = Tape::<f64>::new();
        let z = tape.constant(Tensor::row(vec![prec, -prec, 0.0]));
        let l = tape.softmax_ce(z, &[1]).unwrap();
        assert!(tape.scalar_value(l).is_finite());
        let g = tape.gradients(l).unwrap();
        assert!(g.get(z).unwrap().all_finite());
    }
    let mut tape = Tape::<f32>::new();
    let z = tape.constant(Tensor::row(vec![1e4f32, -1e4, 3.0]));
    let l = tape.softmax_ce(z, &[0]).unwrap();
    assert!(tape.scalar_value(l).is_finite());
}

#[test]
fn sum_gradient_is_all_ones() {
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", Tensor::from_f64(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap()).unwrap();
    let mut tape = Tape::new();
    let wv = tape.param(&store, w);
    let s = tape.sum(wv, None).unwrap();
    tape.backward(s, &mut store).unwrap();
    assert_eq!(store.grad(w).data(), &[1.0; 6]);
}

#[test]
fn sigmoid_times_constant_gradient() {
    let c = 3.5;
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", Tensor::scalar(0.0)).unwrap();
    let mut tape = Tape::new();
    let wv = tape.param(&store, w);
    let s = tape.sigmoid(wv).unwrap();
    let out = tape.scale(s, c).unwrap();
    tape.backward(out, &mut store).unwrap();
    assert!((store.grad(w).data()[0] - 0.25 * c).abs() < 1e-15);
}

#[test]
fn repeated_backward_accumulates() {
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", Tensor::row(vec![1.0, 2.0])).unwrap();
    let mut tape = Tape::new();
    let wv = tape.param(&store, w);
    let s = tape.sum(wv, None).unwrap();
    tape.backward(s, &mut store).unwrap();
    tape.backward(s, &mut store).unwrap();
    assert_eq!(store.grad(w).data(), &[2.0, 2.0]);
    store.zero_grad();
    assert_eq!(store.grad(w).data(), &[0.0, 0.0]);
}

#[test]
fn backward_rejects_foreign_and_non_scalar_outputs() {
    let mut store = ParamStore::<f64>::new();
    let mut a = Tape::<f64>::new();
    let mut b = Tape::<f64>::new();
    let x = a.constant(Tensor::scalar(1.0));
    let _ = b.constant(Tensor::scalar(1.0));
    assert_eq!(b.backward(x, &mut store), Err(TensorError::NotOnTape));
    let v = a.constant(Tensor::row(vec![1.0, 2.0]));
    assert!(matches!(a.backward(v, &mut store), Err(TensorError::NotScalar(_))));
}

#[test]
fn shape_errors_name_the_primitive() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::zeros(2, 3));
    let b = tape.constant(Tensor::zeros(2, 3));
    match tape.matmul(a, b) {
        Err(TensorError::Shape { op, .. }) => assert_eq!(op, "matmul"),
        other => panic!("unexpected {other:?}"),
    }
    let c = tape.constant(Tensor::zeros(3, 2));
    assert!(matches!(tape.add(a, c), Err(TensorError::Shape { op: "add", .. })));
    assert!(Tensor::<f64>::new(vec![2, 2], vec![1.0]).is_err());
}

#[test]
fn broadcast_add_row_column_scalar() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::from_f64(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap());
    let row = tape.constant(Tensor::row(vec![10.0, 20.0]));
    let col = tape.constant(Tensor::column(vec![100.0, 200.0]));
    let s = tape.constant(Tensor::scalar(0.5));
    let r = tape.add(a, row).unwrap();
    assert_eq!(tape.value(r).data(), &[11.0, 22.0, 13.0, 24.0]);
    let c = tape.add(a, col).unwrap();
    assert_eq!(tape.value(c).data(), &[101.0, 102.0, 203.0, 204.0]);
    let k = tape.mul(a, s).unwrap();
    assert_eq!(tape.value(k).data(), &[0.5, 1.0, 1.5, 2.0]);
}

#[test]
fn every_primitive_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tol = 1e-6;
    let a = rand_tensor(&mut rng, 3, 4, -1.0, 1.0);
    let b = rand_tensor(&mut rng, 4, 2, -1.0, 1.0);
    let a2 = rand_tensor(&mut rng, 3, 4, -1.0, 1.0);
    let row = rand_tensor(&mut rng, 1, 4, -1.0, 1.0);
    let col = rand_tensor(&mut rng, 3, 1, -1.0, 1.0);
    let pos = rand_tensor(&mut rng, 3, 4, 0.5, 2.0);

    let cases: Vec<(&str, f64)> = vec![
        ("matmul", fd_check(vec![a.clone(), b.clone()], |t, v| t.matmul(v[0], v[1]))),
        ("add", fd_check(vec![a.clone(), a2.clone()], |t, v| t.add(v[0], v[1]))),
        ("add_row", fd_check(vec![a.clone(), row.clone()], |t, v| t.add(v[0], v[1]))),
        ("sub_col", fd_check(vec![a.clone(), col.clone()], |t, v| t.sub(v[0], v[1]))),
        ("mul", fd_check(vec![a.clone(), a2.clone()], |t, v| t.mul(v[0], v[1]))),
        ("mul_col", fd_check(vec![a.clone(), col.clone()], |t, v| t.mul(v[0], v[1]))),
        ("mul_row", fd_check(vec![a.clone(), row.clone()], |t, v| t.mul(v[0], v[1]))),
        ("scale", fd_check(vec![a.clone()], |t, v| t.scale(v[0], -1.7))),
        ("add_scalar", fd_check(vec![a.clone()], |t, v| t.add_scalar(v[0], 0.3))),
        ("concat0", fd_check(vec![a.clone(), a2.clone()], |t, v| t.concat(&[v[0], v[1]], 0))),
        ("concat1", fd_check(vec![a.clone(), col.clone()], |t, v| t.concat(&[v[0], v[1]], 1))),
        ("transpose", fd_check(vec![a.clone()], |t, v| t.transpose(v[0]))),
        ("reshape", fd_check(vec![a.clone()], |t, v| t.reshape(v[0], 2, 6))),
        ("sum_all", fd_check(vec![a.clone()], |t, v| t.sum(v[0], None))),
        ("sum0", fd_check(vec![a.clone()], |t, v| t.sum(v[0], Some(0)))),
        ("sum1", fd_check(vec![a.clone()], |t, v| t.sum(v[0], Some(1)))),
        ("mean0", fd_check(vec![a.clone()], |t, v| t.mean(v[0], Some(0)))),
        ("mean1", fd_check(vec![a.clone()], |t, v| t.mean(v[0], Some(1)))),
        ("sigmoid", fd_check(vec![a.clone()], |t, v| t.sigmoid(v[0]))),
        ("relu", fd_check(vec![a.clone()], |t, v| t.relu(v[0]))),
        ("log", fd_check(vec![pos.clone()], |t, v| t.log(v[0]))),
        ("exp", fd_check(vec![a.clone()], |t, v| t.exp(v[0]))),
        ("pow", fd_check(vec![pos.clone()], |t, v| t.pow(v[0], -0.5))),
        ("clamp", fd_check(vec![a.clone()], |t, v| t.clamp(v[0], -0.5, 0.5))),
        ("norm_rows", fd_check(vec![a.clone()], |t, v| t.norm_rows(v[0]))),
        ("cosine", fd_check(vec![a.clone(), a2.clone()], |t, v| t.cosine(v[0], v[1]))),
        ("softmax_ce", fd_check(vec![a.clone()], |t, v| t.softmax_ce(v[0], &[0, 3, 1]))),
        ("gather", fd_check(vec![a.clone()], |t, v| t.gather(v[0], &[2, 0, 2, 1]))),
        ("scatter_add", fd_check(vec![a.clone()], |t, v| t.scatter_add(v[0], &[1, 1, 3], 4))),
    ];
    for (name, err) in cases {
        assert!(err < tol, "{name}: relative error {err}");
    }
}

fn three_layer(store: &ParamStore<f64>, tape: &mut Tape<f64>, x: &Tensor<f64>) -> Result<Var, TensorError> {
    let xv = tape.constant(x.clone());
    let w1 = tape.param(store, store.id_of("w1").unwrap());
    let b1 = tape.param(store, store.id_of("b1").unwrap());
    let w2 = tape.param(store, store.id_of("w2").unwrap());
    let w3 = tape.param(store, store.id_of("w3").unwrap());
    let h = tape.matmul(xv, w1)?;
    let h = tape.add(h, b1)?;
    let h = tape.sigmoid(h)?;
    let h = tape.matmul(h, w2)?;
    let h = tape.exp(h)?;
    let h = tape.matmul(h, w3)?;
    let l = tape.softmax_ce(h, &[0, 2, 1, 1])?;
    tape.mean(l, None)
}

#[test]
fn random_three_layer_composition_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::<f64>::new();
    store.add("w1", rand_tensor(&mut rng, 5, 6, -1.0, 1.0)).unwrap();
    store.add("b1", rand_tensor(&mut rng, 1, 6, -1.0, 1.0)).unwrap();
    store.add("w2", rand_tensor(&mut rng, 6, 4, -1.0, 1.0)).unwrap();
    store.add("w3", rand_tensor(&mut rng, 4, 3, -1.0, 1.0)).unwrap();
    let x = rand_tensor(&mut rng, 4, 5, -2.0, 2.0);
    let report = grad_check::<TensorError, _>(&mut store, 1e-5, |s, t| three_layer(s, t, &x)).unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
    assert_eq!(report.checked, 30 + 6 + 24 + 12);
}

#[test]
fn grad_check_quadratic_is_exact() {
    let mut store = ParamStore::<f64>::new();
    store.add("theta", Tensor::from_f64(2, 3, &[0.4, -1.2, 2.5, 3.0, -0.7, 0.9]).unwrap()).unwrap();
    let report = grad_check::<TensorError, _>(&mut store, 1e-5, |s, t| {
        let th = t.param(s, ParamId(0));
        let sq = t.mul(th, th)?;
        let sum = t.sum(sq, None)?;
        t.scale(sum, 0.5)
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-9, "{report:?}");
}

#[test]
fn grad_check_constant_loss_is_zero_everywhere() {
    let mut store = ParamStore::<f64>::new();
    store.add("theta", Tensor::row(vec![1.0, 2.0, 3.0])).unwrap();
    let report = grad_check::<TensorError, _>(&mut store, 1e-5, |s, t| {
        let _ = t.param(s, ParamId(0));
        Ok(t.constant(Tensor::scalar(4.0)))
    })
    .unwrap();
    assert_eq!(report.max_rel_error, 0.0);
    assert_eq!(report.analytic, 0.0);
    assert_eq!(report.numeric, 0.0);
    assert!(store.grad(ParamId(0)).data().iter().all(|&g| g == 0.0));
}

#[test]
fn grad_check_rejects_non_finite_loss() {
    let mut store = ParamStore::<f64>::new();
    store.add("theta", Tensor::scalar(1.0)).unwrap();
    let r = grad_check::<TensorError, _>(&mut store, 1e-5, |_, t| Ok(t.constant(Tensor::scalar(f64::NAN))));
    assert!(matches!(r, Err(TensorError::NonFinite(_))));
}

#[test]
fn forward_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::<f64>::new();
    store.add("w1", rand_tensor(&mut rng, 5, 6, -0.5, 0.5)).unwrap();
    store.add("b1", rand_tensor(&mut rng, 1, 6, -0.5, 0.5)).unwrap();
    store.add("w2", rand_tensor(&mut rng, 6, 4, -0.5, 0.5)).unwrap();
    store.add("w3", rand_tensor(&mut rng, 4, 3, -0.5, 0.5)).unwrap();
    let x = rand_tensor(&mut rng, 4, 5, -1.0, 1.0);
    let run = || {
        let mut t = Tape::new();
        let v = three_layer(&store, &mut t, &x).unwrap();
        t.scalar_value(v).to_bits()
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_reduces_a_quadratic() {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("x", Tensor::row(vec![3.0, -2.0])).unwrap();
    let mut opt = Adam::new(AdamConfig { lr: 0.1, ..AdamConfig::default() }, &store);
    for _ in 0..300 {
        let mut t = Tape::new();
        let x = t.param(&store, id);
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq, None).unwrap();
        t.backward(s, &mut store).unwrap();
        opt.step(&mut store);
    }
    assert!(store.value(id).data().iter().all(|v| v.abs() < 1e-2));
    assert_eq!(opt.steps_taken(), 300);
}

#[test]
fn frozen_parameters_are_not_updated() {
    let mut store = ParamStore::<f32>::new();
    let id = store.add_frozen("x", Tensor::row(vec![1.0, 1.0])).unwrap();
    let mut opt = Adam::new(AdamConfig::default(), &store);
    let mut t = Tape::new();
    let x = t.param(&store, id);
    let s = t.sum(x, None).unwrap();
    t.backward(s, &mut store).unwrap();
    opt.step(&mut store);
    assert_eq!(store.value(id).data(), &[1.0, 1.0]);
}

#[test]
fn duplicate_parameter_names_are_rejected() {
    let mut store = ParamStore::<f64>::new();
    store.add("a", Tensor::scalar(1.0)).unwrap();
    assert!(store.add("a", Tensor::scalar(2.0)).is_err());
}
