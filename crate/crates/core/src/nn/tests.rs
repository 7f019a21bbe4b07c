use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::*;
use crate::rng;

fn random_seq(rng: &mut Rng, steps: usize, dim: usize) -> Mat {
    let data = (0..steps * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Mat::from_vec(steps, dim, data).unwrap()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

#[test]
fn zero_weight_dense_outputs_bias() {
    let mut r = rng::seeded(1);
    let mut net = Network::new(
        Port::Vector(3),
        vec![
            LayerSpec::Dense {
                input: 3,
                output: 4,
                activation: Activation::Identity,
            },
            LayerSpec::Dense {
                input: 4,
                output: 2,
                activation: Activation::Identity,
            },
        ],
        &mut r,
    )
    .unwrap();
    for layer in net.layers_mut() {
        layer.params[0].values_mut().iter_mut().for_each(|w| *w = 0.0);
    }
    let bias = net.layers()[1].params[1].values().to_vec();
    assert_eq!(net.forward_vec(&[0.3, -2.0, 9.0]).unwrap(), bias);
}

#[test]
fn single_step_recurrence_is_one_cell() {
    let mut r = rng::seeded(2);
    let (inp, hd) = (3, 2);
    let net = Network::new(
        Port::Sequence(inp),
        vec![LayerSpec::Recurrent { input: inp, hidden: hd }],
        &mut r,
    )
    .unwrap();
    let x = random_seq(&mut r, 1, inp);
    let out = match net.forward(Value::Sequence(x.clone())).unwrap() {
        Value::Sequence(m) => m,
        _ => panic!(),
    };
    let p = &net.layers()[0].params;
    let (w, b) = (p[0].values(), p[2].values());
    // h0 = 0 so the U terms vanish and r has no effect.
    let pre = |row: usize| -> f64 {
        b[row] + (0..inp).map(|c| w[row * inp + c] * x.get(0, c)).sum::<f64>()
    };
    for j in 0..hd {
        let z = sigmoid(pre(j));
        let n = libm::tanh(pre(2 * hd + j));
        assert!((out.get(0, j) - z * n).abs() < 1e-15);
    }
}

fn encoder_like(r: &mut Rng, inp: usize, hd: usize, out: usize) -> Network {
    Network::new(
        Port::Sequence(inp),
        vec![
            LayerSpec::Recurrent { input: inp, hidden: hd },
            LayerSpec::SelfAttentionCls { dim: hd },
            LayerSpec::Dense {
                input: hd,
                output: out,
                activation: Activation::Identity,
            },
        ],
        r,
    )
    .unwrap()
}

#[test]
fn recurrent_stack_is_order_sensitive() {
    let mut r = rng::seeded(3);
    let mut changed = 0;
    for _ in 0..100 {
        let net = encoder_like(&mut r, 3, 6, 4);
        let x = random_seq(&mut r, 8, 3);
        let mut rows: Vec<Vec<f64>> = (0..8).map(|t| x.row(t).to_vec()).collect();
        rows[2..6].reverse();
        let y = Mat::from_rows(&rows).unwrap();
        if net.forward_seq(&x).unwrap() != net.forward_seq(&y).unwrap() {
            changed += 1;
        }
    }
    assert_eq!(changed, 100);
}

#[test]
fn forward_is_pure() {
    let mut r = rng::seeded(4);
    let net = encoder_like(&mut r, 2, 5, 3);
    let x = random_seq(&mut r, 7, 2);
    assert_eq!(net.forward_seq(&x).unwrap(), net.forward_seq(&x).unwrap());
}

#[test]
fn shape_errors() {
    let mut r = rng::seeded(5);
    let net = encoder_like(&mut r, 2, 5, 3);
    assert!(matches!(
        net.forward_seq(&random_seq(&mut r, 4, 3)),
        Err(Error::ShapeMismatch { expected: 2, got: 3 })
    ));
    let flat = Network::new(
        Port::Sequence(2),
        vec![LayerSpec::Flatten { steps: 4, dim: 2 }],
        &mut r,
    )
    .unwrap();
    assert_eq!(flat.output(), Port::Vector(8));
    assert!(flat.forward_seq(&random_seq(&mut r, 5, 2)).is_err());
    assert!(Network::new(
        Port::Sequence(2),
        vec![LayerSpec::Dense {
            input: 3,
            output: 1,
            activation: Activation::Tanh
        }],
        &mut r
    )
    .is_err());
}

/// Central differences of `f` w.r.t. every parameter, compared with the
/// analytic gradient accumulated by `backward`.
fn check_param_grads(net: &mut Network, input: &Value, weights: &[f64]) {
    let h = 1e-5;
    let objective = |net: &Network| -> f64 {
        let y = net.forward(input.clone()).unwrap().into_vector().unwrap();
        y.iter().zip(weights).map(|(a, b)| a * b).sum()
    };
    net.zero_grad();
    let (_, tape) = net.forward_train(input.clone()).unwrap();
    net.backward(tape, Value::Vector(weights.to_vec()));
    let analytic: Vec<Vec<f64>> = net.params().map(|p| p.grad().to_vec()).collect();
    for (pi, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let orig = net.params().nth(pi).unwrap().values()[i];
            net.params_mut().nth(pi).unwrap().values_mut()[i] = orig + h;
            let fp = objective(net);
            net.params_mut().nth(pi).unwrap().values_mut()[i] = orig - h;
            let fm = objective(net);
            net.params_mut().nth(pi).unwrap().values_mut()[i] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
            assert!(rel < 1e-4, "param {pi}[{i}]: analytic {a} numeric {numeric}");
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = rng::seeded(6);
    for _ in 0..5 {
        let mut net = encoder_like(&mut r, 3, 4, 2);
        let x = Value::Sequence(random_seq(&mut r, 5, 3));
        let w: Vec<f64> = (0..2).map(|_| r.random_range(-1.0..1.0)).collect();
        check_param_grads(&mut net, &x, &w);

        let mut flat = Network::new(
            Port::Sequence(3),
            vec![
                LayerSpec::Dense {
                    input: 3,
                    output: 4,
                    activation: Activation::Tanh,
                },
                LayerSpec::Flatten { steps: 5, dim: 4 },
                LayerSpec::Dense {
                    input: 20,
                    output: 2,
                    activation: Activation::Relu,
                },
            ],
            &mut r,
        )
        .unwrap();
        check_param_grads(&mut flat, &x, &w);
    }
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut r = rng::seeded(7);
    let mut net = encoder_like(&mut r, 2, 3, 2);
    let x = random_seq(&mut r, 4, 2);
    let w = [0.7, -1.3];
    let (_, tape) = net.forward_train(Value::Sequence(x.clone())).unwrap();
    let dx = match net.backward(tape, Value::Vector(w.to_vec())) {
        Value::Sequence(m) => m,
        _ => panic!(),
    };
    let f = |m: &Mat| -> f64 {
        let y = net.forward_seq(m).unwrap();
        y[0] * w[0] + y[1] * w[1]
    };
    for i in 0..x.as_slice().len() {
        let mut xp = x.clone();
        xp.as_mut_slice()[i] += 1e-5;
        let mut xm = x.clone();
        xm.as_mut_slice()[i] -= 1e-5;
        let numeric = (f(&xp) - f(&xm)) / 2e-5;
        let a = dx.as_slice()[i];
        assert!((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5) < 1e-4);
    }
}
