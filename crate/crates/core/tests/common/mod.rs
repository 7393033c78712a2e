//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use graspcount::geometry::ConvexHull;
use graspcount::kinematics::{HandGeometry, HandPose, Point};
use graspcount::nn::{LayerSpec, Loss, NeuralModel, Tensor};
use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

fn translate(x: f64, y: f64, z: f64) -> Matrix4<f64> {
    Matrix4::new_translation(&nalgebra::Vector3::new(x, y, z))
}

fn rot_z(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
}

fn rot_y(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(c, 0.0, s, 0.0, 0.0, 1.0, 0.0, 0.0, -s, 0.0, c, 0.0, 0.0, 0.0, 0.0, 1.0)
}

/// Knuckle, middle joint and tip of each finger from a chain of 4x4
/// homogeneous transforms: base offset, heading about z, then for each link
/// a flexion about the local y axis followed by a translation along x.
pub fn transform_chain(pose: &HandPose, geom: &HandGeometry) -> [[Point; 3]; 3] {
    let headings = [-FRAC_PI_2 - pose.spread, -FRAC_PI_2 + pose.spread, FRAC_PI_2];
    let origin = Vector4::new(0.0, 0.0, 0.0, 1.0);
    let pt = |m: Matrix4<f64>| {
        let v = m * origin;
        Point::new(v.x, v.y, v.z)
    };
    std::array::from_fn(|f| {
        let [bx, by] = geom.finger_base_offsets[f];
        let base = translate(bx, by, 0.0) * rot_z(headings[f]);
        let mid = base * rot_y(-pose.proximal[f]) * translate(geom.proximal_length, 0.0, 0.0);
        let tip = mid * rot_y(-pose.distal[f]) * translate(geom.distal_length, 0.0, 0.0);
        [pt(base), pt(mid), pt(tip)]
    })
}

/// Hit-or-miss volume estimate over the bounding box.
pub fn monte_carlo_volume(hull: &ConvexHull, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let lo = hull.vertices.iter().fold([f64::INFINITY; 3], |m, p| {
        [m[0].min(p.x), m[1].min(p.y), m[2].min(p.z)]
    });
    let hi = hull.vertices.iter().fold([f64::NEG_INFINITY; 3], |m, p| {
        [m[0].max(p.x), m[1].max(p.y), m[2].max(p.z)]
    });
    let mut inside = 0usize;
    for _ in 0..samples {
        let p = Point::new(
            rng.random_range(lo[0]..hi[0]),
            rng.random_range(lo[1]..hi[1]),
            rng.random_range(lo[2]..hi[2]),
        );
        if hull.contains(&p, 0.0) {
            inside += 1;
        }
    }
    (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]) * inside as f64 / samples as f64
}

/// Largest elementwise relative difference between analytic parameter
/// gradients and central differences of the loss.
pub fn gradient_error(model: &mut NeuralModel, x: &Tensor, target: &Tensor, loss: Loss, h: f64) -> f64 {
    let tape = model.forward_tape(x, None).unwrap();
    let (_, grads) = model.backward(&tape, target, loss).unwrap();
    let value = |m: &NeuralModel| loss.value(&m.forward(x).unwrap(), target);
    let mut worst: f64 = 0.0;
    for l in 0..model.params.len() {
        for k in 0..model.params[l].len() {
            for i in 0..model.params[l][k].data.len() {
                let orig = model.params[l][k].data[i];
                model.params[l][k].data[i] = orig + h;
                let up = value(model);
                model.params[l][k].data[i] = orig - h;
                let down = value(model);
                model.params[l][k].data[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.0[l][k].data[i];
                let scale = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / scale);
            }
        }
    }
    worst
}

/// One small random gradient-check problem per layer kind.
pub struct GradCase {
    pub name: &'static str,
    pub model: NeuralModel,
    pub input: Tensor,
    pub target: Tensor,
    pub loss: Loss,
}

pub const GRAD_KINDS: [&str; 8] = [
    "dense",
    "conv2d",
    "conv_transpose2d",
    "maxpool",
    "upsample",
    "dropout (eval)",
    "softmax + cross-entropy",
    "mse",
];

pub fn grad_case(kind: &'static str, seed: u64) -> GradCase {
    use LayerSpec::*;
    let mut r = rng(seed);
    let batch = r.random_range(1..4);
    let (input_shape, layers, loss): (Vec<usize>, Vec<LayerSpec>, Loss) = match kind {
        "dense" => (vec![r.random_range(2..6)], vec![Dense { units: r.random_range(1..5) }], Loss::Mse),
        "conv2d" => (
            vec![r.random_range(2..5), r.random_range(2..5), r.random_range(1..3)],
            vec![Conv2d { filters: r.random_range(1..4) }],
            Loss::Mse,
        ),
        "conv_transpose2d" => (
            vec![r.random_range(2..5), r.random_range(2..5), r.random_range(1..3)],
            vec![ConvTranspose2d { filters: r.random_range(1..4) }],
            Loss::Mse,
        ),
        "maxpool" => (
            vec![2 * r.random_range(1..3), 2 * r.random_range(1..3), 2],
            vec![Conv2d { filters: 2 }, MaxPool2x2],
            Loss::Mse,
        ),
        "upsample" => (vec![2, 3, 2], vec![Conv2d { filters: 2 }, Upsample2x2], Loss::Mse),
        "dropout (eval)" => (vec![4], vec![Dense { units: 3 }, Dropout { rate: 0.5 }], Loss::Mse),
        "softmax + cross-entropy" => (
            vec![r.random_range(2..6)],
            vec![Dense { units: 5 }, Softmax],
            Loss::CategoricalCrossEntropy,
        ),
        "mse" => (vec![3], vec![Dense { units: 4 }, Relu, Dense { units: 2 }], Loss::Mse),
        other => panic!("unknown layer kind {other}"),
    };
    let mut model = NeuralModel::new(input_shape.clone(), layers, seed).unwrap();
    // non-zero biases so every parameter path is exercised
    for t in model.params.iter_mut().flatten() {
        for v in &mut t.data {
            if *v == 0.0 {
                *v = r.random_range(-0.5..0.5);
            }
        }
    }
    let mut shape = vec![batch];
    shape.extend_from_slice(&input_shape);
    let input = random_tensor(&shape, &mut r);
    let mut out_shape = vec![batch];
    out_shape.extend(model.output_shape());
    let target = if loss == Loss::CategoricalCrossEntropy {
        let classes = out_shape[1];
        let mut t = Tensor::zeros(&out_shape);
        for b in 0..batch {
            t.data[b * classes + r.random_range(0..classes)] = 1.0;
        }
        t
    } else {
        random_tensor(&out_shape, &mut r)
    };
    GradCase {
        name: kind,
        model,
        input,
        target,
        loss,
    }
}

/// `<conv(x), y>` and `<x, conv_transpose(y)>` for a shared random kernel.
pub fn adjoint_pair(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (n, h, w) = (r.random_range(1..3), r.random_range(1..6), r.random_range(1..6));
    let (cin, f) = (r.random_range(1..4), r.random_range(1..4));
    let mut conv = NeuralModel::new(vec![h, w, cin], vec![LayerSpec::Conv2d { filters: f }], seed).unwrap();
    let mut convt =
        NeuralModel::new(vec![h, w, f], vec![LayerSpec::ConvTranspose2d { filters: cin }], seed).unwrap();
    let kernel = random_tensor(&[3, 3, cin, f], &mut r);
    conv.params[0][0] = kernel.clone();
    conv.params[0][1] = Tensor::zeros(&[f]);
    // same kernel with the channel axes swapped
    let mut kt = Tensor::zeros(&[3, 3, f, cin]);
    for tap in 0..9 {
        for c in 0..cin {
            for o in 0..f {
                kt.data[(tap * f + o) * cin + c] = kernel.data[(tap * cin + c) * f + o];
            }
        }
    }
    convt.params[0][0] = kt;
    convt.params[0][1] = Tensor::zeros(&[cin]);
    let x = random_tensor(&[n, h, w, cin], &mut r);
    let y = random_tensor(&[n, h, w, f], &mut r);
    let lhs = conv.forward(&x).unwrap().dot(&y);
    let rhs = x.dot(&convt.forward(&y).unwrap());
    (lhs, rhs)
}

/// Confusion tally and accuracy by direct counting.
pub fn tally(predictions: &[usize], truths: &[usize]) -> ([[u64; 5]; 5], f64) {
    let mut m = [[0u64; 5]; 5];
    let mut hits = 0;
    for t in 0..5 {
        for p in 0..5 {
            m[t][p] = predictions
                .iter()
                .zip(truths)
                .filter(|&(&pp, &tt)| pp.min(4) == p && tt.min(4) == t)
                .count() as u64;
        }
    }
    for (p, t) in predictions.iter().zip(truths) {
        if p.min(&4) == t.min(&4) {
            hits += 1;
        }
    }
    (m, hits as f64 / truths.len() as f64)
}
