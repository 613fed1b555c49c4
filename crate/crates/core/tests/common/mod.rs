//! Reference implementations used only by tests: finite differences,
//! a CDF-integral Wasserstein distance, brute-force quantile matching and
//! random toy networks.
#![allow(dead_code)]

use std::path::PathBuf;

use prunelab::autodiff::Tape;
use prunelab::nn::{forward, Architecture, ArchitectureName, LayerSpec, ParamVars};
use prunelab::Tensor;
use rand::Rng;

/// Root of the downloaded datasets: `$PRUNELAB_DATA_DIR`, else `data/` at the
/// workspace root.
pub fn data_dir() -> PathBuf {
    match std::env::var_os("PRUNELAB_DATA_DIR") {
        Some(p) => PathBuf::from(p),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

pub fn mnist_available() -> bool {
    data_dir().join("mnist/train-images-idx3-ubyte").is_file()
}

pub fn cifar_available() -> bool {
    data_dir().join("cifar-10-batches-bin/data_batch_1.bin").is_file()
}

/// `|a − b| ≤ abs_floor` or `|a − b| ≤ rel · max(|a|, |b|)`.
pub fn close(a: f64, b: f64, rel: f64, abs_floor: f64) -> bool {
    let d = (a - b).abs();
    d <= abs_floor || d <= rel * a.abs().max(b.abs())
}

/// Central differences of `f` with respect to every entry of every tensor.
pub fn central_diff<F>(params: &[Tensor<f64>], eps: f64, f: F) -> Vec<Tensor<f64>>
where
    F: Fn(&[Tensor<f64>]) -> f64,
{
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut g = vec![0.0; params[t].len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + eps;
            let hi = f(&work);
            work[t].data_mut()[i] = orig - eps;
            let lo = f(&work);
            work[t].data_mut()[i] = orig;
            *gi = (hi - lo) / (2.0 * eps);
        }
        out.push(Tensor::new(params[t].shape().to_vec(), g).unwrap());
    }
    out
}

/// `(∇f(w + εv) − ∇f(w − εv)) / 2ε`.
pub fn diff_of_gradients<G>(params: &[Tensor<f64>], v: &[Tensor<f64>], eps: f64, grad: G) -> Vec<Tensor<f64>>
where
    G: Fn(&[Tensor<f64>]) -> Vec<Tensor<f64>>,
{
    let shift = |sign: f64| -> Vec<Tensor<f64>> {
        params
            .iter()
            .zip(v)
            .map(|(p, d)| p.zip_map(d, "shift", |a, b| a + sign * eps * b).unwrap())
            .collect()
    };
    let hi = grad(&shift(1.0));
    let lo = grad(&shift(-1.0));
    hi.iter()
        .zip(&lo)
        .map(|(h, l)| h.zip_map(l, "fd", |a, b| (a - b) / (2.0 * eps)).unwrap())
        .collect()
}

/// `∫ |F_u(x) − F_v(x)| dx` over the merged sample points, with each CDF
/// evaluated by counting.
pub fn wasserstein_cdf(u: &[f64], v: &[f64]) -> f64 {
    let mut us = u.to_vec();
    let mut vs = v.to_vec();
    us.sort_by(f64::total_cmp);
    vs.sort_by(f64::total_cmp);
    let mut xs: Vec<f64> = us.iter().chain(&vs).copied().collect();
    xs.sort_by(f64::total_cmp);
    let cdf = |s: &[f64], x: f64| s.partition_point(|&y| y <= x) as f64 / s.len() as f64;
    xs.windows(2)
        .map(|w| (cdf(&us, w[0]) - cdf(&vs, w[0])).abs() * (w[1] - w[0]))
        .sum()
}

/// Repeats every value of `u` `|v|` times and every value of `v` `|u|` times,
/// then averages the matched differences of the sorted expansions.
pub fn wasserstein_brute(u: &[f64], v: &[f64]) -> f64 {
    let expand = |s: &[f64], k: usize| {
        let mut e: Vec<f64> = s.iter().flat_map(|&x| std::iter::repeat_n(x, k)).collect();
        e.sort_by(f64::total_cmp);
        e
    };
    let a = expand(u, v.len());
    let b = expand(v, u.len());
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub fn normal_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * scale).collect()
}

/// A random 1–3 layer network: all dense, or one or two convolutions
/// followed by a dense classifier.
pub fn random_architecture<R: Rng>(rng: &mut R) -> Architecture {
    let classes = rng.random_range(2..=4);
    if rng.random_bool(0.5) {
        let depth = rng.random_range(1..=3);
        let mut widths: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=6)).collect();
        widths.push(classes);
        let layers = widths.windows(2).map(|w| LayerSpec::dense(w[0], w[1])).collect();
        Architecture {
            name: ArchitectureName::Custom,
            input_shape: vec![widths[0]],
            classes,
            layers,
        }
    } else {
        let (c, h, w) = (rng.random_range(1..=3), rng.random_range(4..=6), rng.random_range(4..=6));
        let mut layers = Vec::new();
        let (mut ch, mut hh, mut ww) = (c, h, w);
        for _ in 0..rng.random_range(1..=2) {
            let k = rng.random_range(1..=3);
            let stride = rng.random_range(1..=2);
            let pad = rng.random_range(0..=1);
            let oc = rng.random_range(1..=3);
            let oh = (hh + 2 * pad - k) / stride + 1;
            let ow = (ww + 2 * pad - k) / stride + 1;
            layers.push(LayerSpec::conv(ch, oc, k, stride, pad));
            (ch, hh, ww) = (oc, oh, ow);
        }
        layers.push(LayerSpec::dense(ch * hh * ww, classes));
        Architecture {
            name: ArchitectureName::Custom,
            input_shape: vec![c, h, w],
            classes,
            layers,
        }
    }
}

/// Random weight and bias tensors for `arch`, flattened as
/// `[w0, b0, w1, b1, ...]`.
pub fn random_params<R: Rng>(rng: &mut R, arch: &Architecture) -> Vec<Tensor<f64>> {
    let mut out = Vec::new();
    for spec in &arch.layers {
        let scale = (1.0 / spec.fan_in() as f64).sqrt();
        out.push(Tensor::new(spec.weight_shape(), normal_vec(rng, spec.weight_count(), scale)).unwrap());
        out.push(Tensor::from_vec(normal_vec(rng, spec.outputs, 0.1)));
    }
    out
}

/// Mean cross-entropy of `arch` with flattened `params` on `(x, labels)`,
/// recorded on `tape` with `vars` as the parameter handles.
pub fn record_loss(
    arch: &Architecture,
    tape: &mut Tape<f64>,
    vars: &[prunelab::autodiff::Var],
    x: &Tensor<f64>,
    labels: &[usize],
) -> prunelab::Result<prunelab::autodiff::Var> {
    let params: Vec<ParamVars> = vars
        .chunks(2)
        .map(|c| ParamVars {
            weight: c[0],
            bias: Some(c[1]),
        })
        .collect();
    let input = tape.constant(x.clone());
    let logits = forward(arch, tape, &params, input, true)?;
    tape.softmax_cross_entropy(logits, labels)
}

/// Forward-only loss value, used by the finite-difference oracles.
pub fn loss_value(arch: &Architecture, params: &[Tensor<f64>], x: &Tensor<f64>, labels: &[usize]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<_> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let loss = record_loss(arch, &mut tape, &vars, x, labels).unwrap();
    tape.value(loss).item()
}

pub fn random_batch<R: Rng>(rng: &mut R, arch: &Architecture, batch: usize) -> (Tensor<f64>, Vec<usize>) {
    let mut shape = vec![batch];
    shape.extend_from_slice(&arch.input_shape);
    let n: usize = shape.iter().product();
    let x = Tensor::new(shape, normal_vec(rng, n, 1.0)).unwrap();
    let labels = (0..batch).map(|_| rng.random_range(0..arch.classes)).collect();
    (x, labels)
}
