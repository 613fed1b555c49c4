mod common;

use common::*;
use prunelab::autodiff::{self, ConvGeometry, Layout, Tape};
use prunelab::rng::rng_from_seed;
use prunelab::Tensor;
use rand::Rng;

#[test]
fn gradients_match_central_differences() {
    let mut rng = rng_from_seed(11);
    for _ in 0..10 {
        let arch = random_architecture(&mut rng);
        let params = random_params(&mut rng, &arch);
        let batch = rng.random_range(1..=8);
        let (x, labels) = random_batch(&mut rng, &arch, batch);
        let (_, grads) = autodiff::gradient(&params, |tape, vars| record_loss(&arch, tape, vars, &x, &labels)).unwrap();
        let fd = central_diff(&params, 1e-6, |p| loss_value(&arch, p, &x, &labels));
        for (g, f) in grads.iter().zip(&fd) {
            for (&a, &b) in g.data().iter().zip(f.data()) {
                assert!(close(a, b, 1e-5, 1e-8), "{arch:?}: {a} vs {b}");
            }
        }
    }
}

fn quadratic_hvp(a: &Tensor<f64>, w: &Tensor<f64>, v: &Tensor<f64>) -> Vec<Tensor<f64>> {
    autodiff::hessian_vector_product(std::slice::from_ref(w), std::slice::from_ref(v), |tape, vars| {
        let am = tape.constant(a.clone());
        let wa = tape.matmul(vars[0], am, false, false)?;
        let q = tape.mul(wa, vars[0])?;
        let s = tape.sum(q)?;
        tape.scale(s, 0.5)
    })
    .unwrap()
}

#[test]
fn hvp_of_quadratic_is_a_times_v() {
    let mut rng = rng_from_seed(3);
    for d in [1, 2, 7, 50] {
        let raw = normal_vec(&mut rng, d * d, 1.0);
        let sym: Vec<f64> = (0..d * d).map(|k| (raw[k] + raw[(k % d) * d + k / d]) / 2.0).collect();
        let a = Tensor::new(vec![d, d], sym.clone()).unwrap();
        let w = Tensor::new(vec![1, d], normal_vec(&mut rng, d, 1.0)).unwrap();
        let v = Tensor::new(vec![1, d], normal_vec(&mut rng, d, 1.0)).unwrap();
        let hv = quadratic_hvp(&a, &w, &v);
        for i in 0..d {
            let expect: f64 = (0..d).map(|j| sym[i * d + j] * v.data()[j]).sum();
            assert!((hv[0].data()[i] - expect).abs() <= 1e-10);
        }
    }
}

#[test]
fn hvp_matches_difference_of_gradients() {
    let mut rng = rng_from_seed(5);
    for _ in 0..5 {
        let arch = random_architecture(&mut rng);
        let params = random_params(&mut rng, &arch);
        let v: Vec<Tensor<f64>> = params
            .iter()
            .map(|p| Tensor::new(p.shape().to_vec(), normal_vec(&mut rng, p.len(), 1.0)).unwrap())
            .collect();
        let (x, labels) = random_batch(&mut rng, &arch, 4);
        let loss = |tape: &mut Tape<f64>, vars: &[autodiff::Var]| record_loss(&arch, tape, vars, &x, &labels);
        let hv = autodiff::hessian_vector_product(&params, &v, loss).unwrap();
        let fd = diff_of_gradients(&params, &v, 1e-5, |p| autodiff::gradient(p, loss).unwrap().1);
        let num: f64 = hv.iter().zip(&fd).flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2))).sum();
        let den: f64 = fd.iter().flat_map(|t| t.data().iter().map(|x| x * x)).sum();
        assert!(num.sqrt() <= 1e-4 * den.sqrt().max(1e-8), "{} vs {}", num.sqrt(), den.sqrt());
    }
}

/// Direct nested-loop convolution, NCHW input, output `[B, OH, OW, OC]`.
fn naive_conv(x: &[f64], w: &[f64], g: &ConvGeometry, oc: usize) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut out = vec![0.0; g.batch * oh * ow * oc];
    for b in 0..g.batch {
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..oc {
                    let mut acc = 0.0;
                    for c in 0..g.channels {
                        for i in 0..g.kernel_h {
                            for j in 0..g.kernel_w {
                                let iy = (oy * g.stride + i) as isize - g.padding as isize;
                                let ix = (ox * g.stride + j) as isize - g.padding as isize;
                                if iy < 0 || ix < 0 || iy >= g.height as isize || ix >= g.width as isize {
                                    continue;
                                }
                                let xi = ((b * g.channels + c) * g.height + iy as usize) * g.width + ix as usize;
                                let wi = ((o * g.channels + c) * g.kernel_h + i) * g.kernel_w + j;
                                acc += x[xi] * w[wi];
                            }
                        }
                    }
                    out[((b * oh + oy) * ow + ox) * oc + o] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv2d_matches_direct_loops() {
    let mut rng = rng_from_seed(8);
    for _ in 0..10 {
        let g = ConvGeometry {
            batch: rng.random_range(1..=3),
            channels: rng.random_range(1..=3),
            height: rng.random_range(3..=7),
            width: rng.random_range(3..=7),
            kernel_h: 3,
            kernel_w: 3,
            stride: rng.random_range(1..=2),
            padding: rng.random_range(0..=1),
            layout: Layout::Nchw,
        };
        let oc = rng.random_range(1..=4);
        let x = normal_vec(&mut rng, g.batch * g.channels * g.height * g.width, 1.0);
        let w = normal_vec(&mut rng, oc * g.channels * 9, 1.0);
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(Tensor::new(g.input_shape(), x.clone()).unwrap());
        let wv = tape.constant(Tensor::new(vec![oc, g.channels, 3, 3], w.clone()).unwrap());
        let y = tape.conv2d(xv, wv, None, g).unwrap();
        let expect = naive_conv(&x, &w, &g, oc);
        assert_eq!(tape.value(y).shape(), &[g.batch, g.out_h(), g.out_w(), oc]);
        for (a, b) in tape.value(y).data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn matmul_transposes_match_naive() {
    let a = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let b = Tensor::new(vec![2, 3], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
    assert_eq!(a.matmul(&b, false, true).unwrap().data(), &[50.0, 68.0, 122.0, 167.0]);
    assert_eq!(a.matmul(&b, true, false).unwrap().data(), &[47.0, 52.0, 57.0, 64.0, 71.0, 78.0, 81.0, 90.0, 99.0]);
}

#[test]
fn single_precision_gradient_agrees_with_double() {
    let mut rng = rng_from_seed(21);
    let arch = random_architecture(&mut rng);
    let params = random_params(&mut rng, &arch);
    let (x, labels) = random_batch(&mut rng, &arch, 4);
    let (_, g64) = autodiff::gradient(&params, |t, v| record_loss(&arch, t, v, &x, &labels)).unwrap();
    let p32: Vec<Tensor<f32>> = params.iter().map(|p| p.cast()).collect();
    let x32: Tensor<f32> = x.cast();
    let (_, g32) = autodiff::gradient(&p32, |tape, vars| {
        let params: Vec<_> = vars
            .chunks(2)
            .map(|c| prunelab::nn::ParamVars { weight: c[0], bias: Some(c[1]) })
            .collect();
        let input = tape.constant(x32.clone());
        let logits = prunelab::nn::forward(&arch, tape, &params, input, true)?;
        tape.softmax_cross_entropy(logits, &labels)
    })
    .unwrap();
    for (a, b) in g64.iter().zip(&g32) {
        for (&x, &y) in a.data().iter().zip(b.data()) {
            assert!((x - f64::from(y)).abs() < 1e-4);
        }
    }
}
