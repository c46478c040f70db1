use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

/// A graph touching every op, including derivative nodes, reduced to a scalar.
fn graph(tape: &mut Tape, leaves: &[Array2<f64>]) -> (Vec<Var>, Var) {
    let v: Vec<Var> = leaves.iter().map(|a| tape.leaf(a.clone())).collect();
    let (x, w, b, w2) = (v[0], v[1], v[2], v[3]);
    let a = tape.affine(x, w, b);
    let h = tape.act(a, Activation::Elu);
    let s = tape.act_d1(a, Activation::Softplus);
    let hs = tape.mul(h, s);
    let back = tape.matmul_t(hs, w);
    let sum = tape.row_sum(hs);
    let sp = tape.act(sum, Activation::Sigmoid);
    let mc = tape.mul_col(back, sp);
    let d = tape.sub(mc, x);
    let e = tape.add(d, x);
    let e = tape.scale(e, 0.7);
    let z = tape.matmul(e, w2);
    let y = tape.act(z, Activation::LeakyRelu);
    let target = Array2::from_shape_fn(tape.value(y).raw_dim(), |(i, j)| (i + j) as f64 * 0.1);
    let weight = Array2::from_shape_fn(target.raw_dim(), |(i, _)| 1.0 + i as f64);
    let l1 = tape.weighted_sse(y, target.clone(), Some(weight), 3.0);
    let l2 = tape.bce_logits(z, target.mapv(|t| if t > 0.2 { 1.0 } else { 0.0 }));
    let l3 = tape.act(l2, Activation::EluPlusOne);
    let loss = tape.add(l1, l3);
    (v, loss)
}

#[test]
fn parameter_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let leaves = vec![
        init_uniform(&mut rng, 3, 4),
        init_uniform(&mut rng, 4, 5),
        init_uniform(&mut rng, 1, 5),
        init_uniform(&mut rng, 4, 2),
    ];
    let mut tape = Tape::new();
    let (vars, loss) = graph(&mut tape, &leaves);
    let grads = tape.backward(loss);
    let h = 1e-6;
    for (k, leaf) in leaves.iter().enumerate() {
        let g = grads.get(vars[k]).unwrap();
        for idx in 0..leaf.len() {
            let eval = |delta: f64| {
                let mut l = leaves.clone();
                let e = l[k].as_slice_mut().unwrap();
                e[idx] += delta;
                let mut t = Tape::new();
                let (_, out) = graph(&mut t, &l);
                t.scalar(out)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = g.as_slice().unwrap()[idx];
            assert!(
                (fd - an).abs() <= 1e-4 * fd.abs().max(1.0),
                "leaf {k} entry {idx}: fd {fd} vs {an}"
            );
        }
    }
}

#[test]
fn activations_have_consistent_derivatives() {
    let acts = [
        Activation::Identity,
        Activation::Elu,
        Activation::EluPlusOne,
        Activation::Softplus,
        Activation::Sigmoid,
    ];
    for f in acts {
        for x in [-3.0, -0.4, 0.3, 2.5, 40.0] {
            let h = 1e-6;
            assert!(((f.f(x + h) - f.f(x - h)) / (2.0 * h) - f.d1(x)).abs() <= 1e-6, "{f:?} {x}");
            assert!(((f.d1(x + h) - f.d1(x - h)) / (2.0 * h) - f.d2(x)).abs() <= 1e-6, "{f:?} {x}");
        }
    }
    assert!(Activation::EluPlusOne.f(-50.0) >= 0.0);
    assert_eq!(Activation::Sigmoid.f(0.0), 0.5);
}

#[test]
fn adam_minimizes_a_quadratic() {
    let mut p = vec![Array2::from_elem((1, 2), 3.0)];
    let mut opt = Adam::new(
        AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        },
        &[(1, 2)],
    );
    for _ in 0..2000 {
        let mut tape = Tape::new();
        let x = tape.leaf(p[0].clone());
        let l = tape.weighted_sse(x, Array2::from_elem((1, 2), -1.0), None, 1.0);
        let g = tape.backward(l);
        opt.step(&mut p, &[g.get(x)]);
    }
    assert!(p[0].iter().all(|v| (v + 1.0).abs() < 1e-3), "{p:?}");
}

#[test]
fn params_flatten_in_declaration_order() {
    let mut p = Params::new();
    p.push("a", Array2::from_shape_vec((1, 2), vec![1.0, 2.0]).unwrap());
    p.push("b", Array2::from_shape_vec((2, 1), vec![3.0, 4.0]).unwrap());
    assert_eq!(p.flat(), vec![1.0, 2.0, 3.0, 4.0]);
    p.set_flat(&[4.0, 3.0, 2.0, 1.0]);
    assert_eq!(p.values[1][(1, 0)], 1.0);
    assert_eq!(p.count(), 4);
}
