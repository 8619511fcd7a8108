mod common;

use common::{check_op, check_variant, OPS};
use nlgnn::model::Variant;
use nlgnn::tensor::{Tape, Tensor};
use nlgnn::Error;

const TOL: f64 = 1e-4;

#[test]
fn every_op_matches_central_differences() {
    for op in OPS {
        for seed in 0..5 {
            let r = check_op(op, seed);
            assert!(r.max_rel_error <= TOL, "{op} seed {seed}: {r:?}");
            assert!(r.checked > 0, "{op} seed {seed}: nothing checked");
        }
    }
}

#[test]
fn every_variant_matches_central_differences() {
    for v in Variant::ALL {
        for seed in 0..5 {
            let r = check_variant(v, seed);
            assert!(r.max_rel_error <= TOL, "{v} seed {seed}: {r:?}");
            assert!(r.skipped_fraction() < 0.05, "{v} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn sum_of_product_gradient_is_ones_times_b_transpose() {
    let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let b = Tensor::from_rows(&[vec![5.0, -1.0, 0.5], vec![2.0, 0.0, 1.0]]).unwrap();
    let mut t = Tape::new();
    let (av, bv) = (t.leaf(a), t.leaf(b));
    let c = t.matmul(av, bv).unwrap();
    let s = t.sum(c);
    let g = t.backward(s).unwrap();
    // Row sums of B: 4.5 and 3.
    assert_eq!(g.get(av).unwrap().data(), &[4.5, 3.0, 4.5, 3.0]);
}

#[test]
fn linear_and_quadratic_functionals() {
    let x = Tensor::vector(vec![1.5, -2.0, 0.0]).unwrap();
    let mut t = Tape::new();
    let xv = t.leaf(x.clone());
    let s = t.sum(xv);
    assert_eq!(t.backward(s).unwrap().get(xv).unwrap().data(), &[1.0, 1.0, 1.0]);

    let mut t = Tape::new();
    let xv = t.leaf(x);
    let sq = t.mul(xv, xv).unwrap();
    let s = t.sum(sq);
    assert_eq!(t.backward(s).unwrap().get(xv).unwrap().data(), &[3.0, -4.0, 0.0]);
}

#[test]
fn non_scalar_loss_is_a_contract_error() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::zeros(&[2, 2]));
    assert!(matches!(t.backward(x), Err(Error::Contract(_))));
}

#[test]
fn calibration_vector_receives_gradient() {
    use common::{random_graph, rng};
    use nlgnn::layers::{GraphContext, Mode};
    use nlgnn::model::{forward, ModelParams};
    for seed in 0..5 {
        let g = random_graph(30, 3, 0.15, 4, &mut rng(seed));
        let ctx = GraphContext::new(&g);
        for v in [Variant::NlMlp, Variant::NlGcn, Variant::NlGat] {
            let p = ModelParams::init(common::model_config(v, 3), 4, 3, seed).unwrap();
            let mut tape = Tape::new();
            let vars = p.bind(&mut tape);
            let out = forward(&mut tape, &ctx, &p, &vars, Mode::Eval).unwrap();
            let mask: Vec<usize> = (0..30).collect();
            let loss = tape.softmax_cross_entropy(out.logits, g.labels(), &mask).unwrap();
            let c = vars.nonlocal.as_ref().unwrap().calibration;
            let grads = tape.backward(loss).unwrap();
            let norm: f64 = grads.get(c).unwrap().data().iter().map(|x| x * x).sum();
            assert!(norm.sqrt() > 0.0, "{v} seed {seed}");
        }
    }
}
