//! Reverse-mode gradients against central finite differences.

use proptest::prelude::*;
use vbomi::autodiff::{log_mean_exp, Tape, Tensor, Var};

/// Max relative error between tape gradients and central differences.
fn check(inputs: &[Tensor], build: &dyn Fn(&mut Tape, &[Var]) -> vbomi::Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars).unwrap();
    let grads = tape.backward(loss).unwrap();

    let eval = |xs: &[Tensor]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let out = build(&mut t, &vs).unwrap();
        t.value(out).item()
    };

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let g = grads.get(*v).unwrap();
        for i in 0..inputs[k].numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let err = (fd - g.data()[i]).abs() / (1.0 + fd.abs());
            worst = worst.max(err);
        }
    }
    worst
}

fn mat(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-1.5f64..1.5, rows * cols).prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
}

/// Weighted sum so every output element receives a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, y: Var) -> vbomi::Result<Var> {
    let shape = tape.value(y).shape().to_vec();
    let w = Tensor::from_fn(&shape, |i| 0.3 + 0.17 * i as f64);
    let wv = tape.constant(w);
    let p = tape.mul(y, wv)?;
    tape.sum(p)
}

const TOL: f64 = 1e-6;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_and_bias(a in mat(3, 4), b in mat(4, 2), c in mat(1, 2)) {
        let c = c.reshape(vec![2]).unwrap();
        let err = check(&[a, b, c], &|t, v| {
            let m = t.matmul(v[0], v[1])?;
            let y = t.add_row(m, v[2])?;
            weighted_sum(t, y)
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn elementwise_chain(a in mat(2, 3), b in mat(2, 3)) {
        let err = check(&[a, b], &|t, v| {
            let s = t.sub(v[0], v[1])?;
            let m = t.mul(s, v[0])?;
            let th = t.tanh(m)?;
            let sg = t.sigmoid(v[1])?;
            let e = t.exp(sg)?;
            let sum = t.add(th, e)?;
            let sc = t.scale(sum, -0.7)?;
            let y = t.add_scalar(sc, 3.0)?;
            weighted_sum(t, y)
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn log_of_positive(a in mat(2, 2)) {
        let err = check(&[a], &|t, v| {
            let sq = t.mul(v[0], v[0])?;
            let pos = t.add_scalar(sq, 0.5)?;
            let l = t.log(pos)?;
            t.mean(l)
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn relu_away_from_kink(a in mat(3, 3)) {
        // Keep entries off zero so the difference quotient is not straddling the kink.
        let mut a = a;
        for x in a.data_mut() {
            if x.abs() < 1e-3 { *x = 0.5; }
        }
        let err = check(&[a], &|t, v| {
            let r = t.relu(v[0])?;
            weighted_sum(t, r)
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn log_mean_exp_gradient(a in mat(5, 1), shift in -50.0f64..50.0) {
        let err = check(&[a], &|t, v| {
            let s = t.add_scalar(v[0], shift)?;
            t.log_mean_exp(s)
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn log_mean_exp_shift_invariance(v in prop::collection::vec(-5.0f64..5.0, 1..20), c in -500.0f64..500.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        prop_assert!((log_mean_exp(&shifted) - (log_mean_exp(&v) + c)).abs() < 1e-9);
    }

    #[test]
    fn concat_slice_gather(a in mat(3, 2), b in mat(3, 3)) {
        let err = check(&[a, b], &|t, v| {
            let c = t.concat_cols(&[v[0], v[1]])?;
            let s = t.slice_cols(c, 1, 4)?;
            let g = t.gather_rows(s, &[2, 0, 0, 1, 2])?;
            let r = t.reshape(g, vec![3, 5])?;
            let th = t.tanh(r)?;
            weighted_sum(t, th)
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn col_affine_gradient(a in mat(4, 2)) {
        let err = check(&[a], &|t, v| {
            let th = t.tanh(v[0])?;
            let y = t.col_affine(th, &[2.0, 0.5], &[1.0, -3.0])?;
            weighted_sum(t, y)
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn lstm_cell_gradient(x in mat(3, 2), h in mat(3, 2), c in mat(3, 2), w in mat(4, 8), b in mat(1, 8)) {
        let b = b.reshape(vec![8]).unwrap();
        let err = check(&[x, h, c, w, b], &|t, v| {
            let hc = t.lstm_cell(v[0], v[1], v[2], v[3], v[4])?;
            weighted_sum(t, hc)
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn lstm_unrolled_two_steps(x in mat(2, 1), w in mat(3, 8), b in mat(1, 8)) {
        let b = b.reshape(vec![8]).unwrap();
        let err = check(&[x, w, b], &|t, v| {
            let h0 = t.constant(Tensor::zeros(&[2, 2]));
            let c0 = t.constant(Tensor::zeros(&[2, 2]));
            let s1 = t.lstm_cell(v[0], h0, c0, v[1], v[2])?;
            let h1 = t.slice_cols(s1, 0, 2)?;
            let c1 = t.slice_cols(s1, 2, 4)?;
            let x2 = t.scale(v[0], -1.0)?;
            let s2 = t.lstm_cell(x2, h1, c1, v[1], v[2])?;
            let h2 = t.slice_cols(s2, 0, 2)?;
            weighted_sum(t, h2)
        });
        prop_assert!(err < TOL, "err {err}");
    }

    #[test]
    fn surrogate_matches_its_function(a in mat(3, 2)) {
        // f(row) = sin(r0) * r1, computed outside the tape.
        let err = check(&[a], &|t, v| {
            let x = t.value(v[0]).clone();
            let vals: Vec<f64> = (0..3).map(|i| x.row(i)[0].sin() * x.row(i)[1]).collect();
            let jac = Tensor::from_fn(&[3, 2], |k| {
                let (i, j) = (k / 2, k % 2);
                let r = x.row(i);
                if j == 0 { r[0].cos() * r[1] } else { r[0].sin() }
            });
            let s = t.surrogate(v[0], vals, jac)?;
            weighted_sum(t, s)
        });
        prop_assert!(err < TOL, "err {err}");
    }
}

#[test]
fn lstm_cell_matches_scalar_reference() {
    // One unit, one input: gates computed by hand.
    let mut t = Tape::new();
    let x = t.constant(Tensor::new(vec![1, 1], vec![0.5]).unwrap());
    let h = t.constant(Tensor::new(vec![1, 1], vec![-0.2]).unwrap());
    let c = t.constant(Tensor::new(vec![1, 1], vec![0.3]).unwrap());
    let wv = [0.1, 0.2, 0.3, 0.4, -0.5, 0.6, -0.7, 0.8];
    let bv = [0.01, 1.0, -0.02, 0.03];
    let w = t.constant(Tensor::new(vec![2, 4], wv.to_vec()).unwrap());
    let b = t.constant(Tensor::new(vec![4], bv.to_vec()).unwrap());
    let out = t.lstm_cell(x, h, c, w, b).unwrap();
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let pre = |k: usize| 0.5 * wv[k] + -0.2 * wv[4 + k] + bv[k];
    let (i, f, g, o) = (sig(pre(0)), sig(pre(1)), pre(2).tanh(), sig(pre(3)));
    let c_new = f * 0.3 + i * g;
    let h_new = o * c_new.tanh();
    let got = t.value(out).data();
    assert!((got[0] - h_new).abs() < 1e-14);
    assert!((got[1] - c_new).abs() < 1e-14);
}
