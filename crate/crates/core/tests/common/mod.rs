#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use twoscale::data::{Dataset, Split};
use twoscale::losses::{loss_gradients, BatchGradients, LossKind, LossVariant, ScaleState};
use twoscale::nn::{LayerSpec, Network, NetworkSpec};
use twoscale::scaling::{confidence_gap, param_scale};
use twoscale::training::{init_network, InitScheme};

pub const FD_STEP: f64 = 1e-5;

/// Small architectures covering every layer kind.
pub fn architectures() -> Vec<(&'static str, NetworkSpec)> {
    vec![
        ("dense-relu-dense", NetworkSpec::two_layer_dense(5, 6, 3)),
        (
            "dense-abs-dense-relu-dense",
            NetworkSpec {
                input_shape: vec![4],
                layers: vec![
                    LayerSpec::dense(5),
                    LayerSpec::abs(),
                    LayerSpec::dense(5),
                    LayerSpec::relu(),
                    LayerSpec::dense(4),
                ],
            },
        ),
        (
            "conv-relu-pool-dense",
            NetworkSpec {
                input_shape: vec![2, 6, 6],
                layers: vec![
                    LayerSpec::Conv {
                        out_channels: 3,
                        kernel: 3,
                        padding: 1,
                        bias: false,
                    },
                    LayerSpec::relu(),
                    LayerSpec::max_pool(2),
                    LayerSpec::dense(3),
                ],
            },
        ),
        (
            "conv-abs-conv-pool-dense",
            NetworkSpec {
                input_shape: vec![1, 7, 7],
                layers: vec![
                    LayerSpec::conv(2, 2),
                    LayerSpec::abs(),
                    LayerSpec::conv(3, 3),
                    LayerSpec::max_pool(2),
                    LayerSpec::dense(3),
                ],
            },
        ),
    ]
}

pub fn random_net(spec: &NetworkSpec, seed: u64) -> Network {
    init_network(spec, InitScheme::He, seed).unwrap()
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Gaussian inputs; the first half of the objects is labelled with the
/// network's prediction (so `δX > 0`), the rest with its least likely class.
pub fn labelled_set(net: &Network, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = net.input_len();
    let inputs: Vec<f32> = (0..n * width).map(|_| gaussian(&mut rng) as f32).collect();
    let labels = (0..n)
        .map(|i| {
            let x: Vec<f64> = inputs[i * width..(i + 1) * width]
                .iter()
                .map(|&v| f64::from(v))
                .collect();
            let z = net.logits(&x).unwrap();
            let order = (0..z.len()).collect::<Vec<_>>();
            let pick = if i < n / 2 {
                order.iter().max_by(|&&a, &&b| z[a].total_cmp(&z[b]))
            } else {
                order.iter().min_by(|&&a, &&b| z[a].total_cmp(&z[b]))
            };
            *pick.unwrap()
        })
        .collect();
    Dataset::new(
        net.input_shape().to_vec(),
        inputs,
        labels,
        net.class_count(),
        Split::Train,
    )
    .unwrap()
}

/// Midpoint of the widest gap among `0` and the sorted positive values, so
/// that small perturbations never move a value across it.
pub fn threshold_between(values: &[f64]) -> f64 {
    let mut pos: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    pos.sort_by(f64::total_cmp);
    let mut best = (0.0, 1e-3);
    let mut prev = 0.0;
    for &v in &pos {
        if v - prev > best.1 - best.0 {
            best = (prev, v);
        }
        prev = v;
    }
    0.5 * (best.0 + best.1)
}

pub fn delta_xs(net: &Network, set: &Dataset) -> Vec<f64> {
    (0..set.len())
        .map(|i| confidence_gap(&net.logits(&set.input(i)).unwrap(), set.label(i)).unwrap())
        .collect()
}

pub fn correct_probs(net: &Network, set: &Dataset) -> Vec<f64> {
    (0..set.len())
        .map(|i| {
            let f = net.forward_values(&set.input(i)).unwrap();
            f.probs[set.label(i)]
        })
        .collect()
}

/// A variant of `kind` whose branch threshold (or cap) sits well clear of
/// every object in `set`.
pub fn variant_for(kind: LossKind, net: &Network, set: &Dataset) -> LossVariant {
    match kind {
        LossKind::Truncated => LossVariant::truncated(threshold_between(&correct_probs(net, set))),
        _ => LossVariant::new(kind, threshold_between(&delta_xs(net, set))),
    }
}

/// Initial scales as a run would set them.
pub fn scales_for(kind: LossKind, net: &Network) -> ScaleState {
    let r = param_scale(net).unwrap().r;
    match kind {
        LossKind::Separation => ScaleState::new(r, 10.0).unwrap(),
        LossKind::TwoScale | LossKind::FixedTwoScale => ScaleState::new(r, 10.0 * r).unwrap(),
        _ => ScaleState::new(r, r).unwrap(),
    }
}

pub fn batch_loss(net: &Network, state: &ScaleState, variant: &LossVariant, set: &Dataset) -> f64 {
    let all: Vec<usize> = (0..set.len()).collect();
    loss_gradients(net, state, variant, set, &all).unwrap().loss
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-10 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

#[derive(Debug)]
pub struct GradCheck {
    /// Worst relative error over the parameter blocks and checked scales.
    pub worst: f64,
    /// Relative error of each compared block.
    pub blocks: Vec<(String, f64)>,
    /// Objects on the high branch.
    pub high: usize,
}

/// Analytic batch gradients against central differences for every layer's
/// parameters and every scale the variant trains.
pub fn finite_difference_check(net: &Network, state: &ScaleState, variant: &LossVariant, set: &Dataset) -> GradCheck {
    let all: Vec<usize> = (0..set.len()).collect();
    let g: BatchGradients = loss_gradients(net, state, variant, set, &all).unwrap();
    let mut blocks = Vec::new();

    for (l, analytic) in g.grad_params.iter().enumerate() {
        let mut numeric = vec![0.0; analytic.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let shifted = |h: f64| {
                let mut n = net.clone();
                n.update_params(|layer, p| {
                    if layer == l {
                        p[j] += h;
                    }
                });
                batch_loss(&n, state, variant, set)
            };
            *slot = (shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP);
        }
        blocks.push((format!("layer{l}"), relative_error(analytic, &numeric)));
    }

    let (low, high) = match variant.kind {
        LossKind::TwoScale | LossKind::FixedTwoScale => (true, true),
        LossKind::SingleScale => (true, false),
        LossKind::Separation => (false, true),
        LossKind::VanillaCe | LossKind::Truncated => (false, false),
    };
    // Step relative to the scale's magnitude (scales are O(R), not O(1)),
    // differenced per object and then averaged: confident objects have losses
    // far below the batch total's rounding error.
    let scale_fd = |which_high: bool| {
        let step = FD_STEP * if which_high { state.high } else { state.low }.max(1.0);
        let per_object = |i: usize| {
            let at = |h: f64| {
                let mut s = *state;
                if which_high {
                    s.high += h;
                } else {
                    s.low += h;
                }
                loss_gradients(net, &s, variant, set, &[i]).unwrap().loss
            };
            (at(step) - at(-step)) / (2.0 * step)
        };
        (0..set.len()).map(per_object).sum::<f64>() / set.len() as f64
    };
    if low {
        blocks.push(("low-scale".into(), relative_error(&[g.grad_low], &[scale_fd(false)])));
    }
    if high {
        blocks.push(("high-scale".into(), relative_error(&[g.grad_high], &[scale_fd(true)])));
    }
    GradCheck {
        worst: blocks.iter().map(|b| b.1).fold(0.0, f64::max),
        blocks,
        high: g.high_count,
    }
}

/// Raw network gradient against central differences of `v · logits`.
pub fn network_backward_check(net: &Network, input: &[f64], v: &[f64]) -> f64 {
    let f = net.forward_values(input).unwrap();
    let analytic = net.backward(&f.cache, v).unwrap();
    let objective = |n: &Network| n.logits(input).unwrap().iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let mut worst: f64 = 0.0;
    for (l, a) in analytic.iter().enumerate() {
        let numeric: Vec<f64> = (0..a.len())
            .map(|j| {
                let shifted = |h: f64| {
                    let mut n = net.clone();
                    n.update_params(|layer, p| {
                        if layer == l {
                            p[j] += h;
                        }
                    });
                    objective(&n)
                };
                (shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP)
            })
            .collect();
        worst = worst.max(relative_error(a, &numeric));
    }
    worst
}

/// Indices sorted by descending value, ties by index.
pub fn ordering(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
