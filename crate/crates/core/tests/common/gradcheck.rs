//! Analytic gradients against central finite differences in double precision.
//! Each check panics on the first element outside tolerance.

use din::model::{DinConfig, DinParams};
use din::tensor::{xavier_init, Shape, Tape, Tensor, Var};
use din::train::total_loss;

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-7;

fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_FLOOR || diff <= REL_TOL * analytic.abs().max(numeric.abs())
}

fn random(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
    // scale up so values sit well away from ReLU and L1 kinks relative to STEP
    let t = xavier_init::<f64>(Shape::new(n, c, h, w).unwrap(), seed);
    let data = t.data().iter().map(|v| v * 2.0 + 0.01 * v.signum()).collect();
    Tensor::new(t.shape(), data).unwrap()
}

/// Check d loss / d input for every element of every input. `build` maps
/// leaf vars to a scalar loss var.
fn check(name: &str, inputs: &[Tensor<f64>], build: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
    let eval = |inputs: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        tape.value(loss).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_requires_grad(true))).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]).unwrap_or_else(|| panic!("{name}: input {k} has no grad")).to_vec();
        for i in 0..input.len() {
            let mut probe = inputs.to_vec();
            probe[k].data_mut()[i] = input.data()[i] + STEP;
            let up = eval(&probe);
            probe[k].data_mut()[i] = input.data()[i] - STEP;
            let down = eval(&probe);
            let numeric = (up - down) / (2.0 * STEP);
            assert!(
                close(analytic[i], numeric),
                "{name}: input {k} element {i}: analytic {} vs numeric {numeric}",
                analytic[i]
            );
            worst = worst.max((analytic[i] - numeric).abs());
        }
    }
    assert!(worst.is_finite());
}

/// A loss whose L1 kink is far away: every prediction sits below `-10`.
fn l1_to_far(tape: &mut Tape<f64>, x: Var) -> Var {
    let target = tape.leaf(Tensor::full(tape.shape(x), 10.0));
    tape.l1_loss(x, target).unwrap()
}

pub fn conv2d_all_geometries() {
    for (k, stride, h, w) in [(3, 1, 5, 4), (3, 2, 6, 5), (1, 1, 3, 4), (1, 2, 4, 4), (3, 2, 5, 7)] {
        let inputs = [random(2, 3, h, w, 1), random(4, 3, k, k, 2), random(4, 1, 1, 1, 3)];
        check(&format!("conv k{k} s{stride}"), &inputs, |tape, v| {
            let y = tape.conv2d(v[0], v[1], v[2], stride).unwrap();
            tape.sum(y)
        });
    }
}

pub fn relu_and_sum() {
    check("relu", &[random(1, 2, 3, 3, 4)], |tape, v| {
        let y = tape.relu(v[0]);
        tape.sum(y)
    });
}

pub fn relu_known_values() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(Shape::new(1, 1, 1, 2).unwrap(), vec![-1.0, 2.0]).unwrap().with_requires_grad(true));
    let y = tape.relu(x);
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[0.0, 1.0]);
}

pub fn add_concat_scale() {
    let inputs = [random(2, 2, 3, 4, 5), random(2, 2, 3, 4, 6), random(2, 1, 3, 4, 7)];
    check("add/concat/scale", &inputs, |tape, v| {
        let a = tape.add(v[0], v[1]).unwrap();
        let c = tape.concat_channels(a, v[2]).unwrap();
        let s = tape.scale(c, -0.7);
        l1_to_far(tape, s)
    });
}

pub fn shuffles() {
    check("pixel shuffle", &[random(2, 8, 2, 3, 8)], |tape, v| {
        let y = tape.pixel_shuffle(v[0], 2).unwrap();
        // weight positions differently so a wrong permutation shows up
        let w = tape.leaf(Tensor::from_fn(tape.shape(y), |[_, c, h, x]| (c * 7 + h * 3 + x) as f64 * 0.1));
        let k = tape.leaf(Tensor::zeros(Shape::new(2, 1, 1, 1).unwrap()));
        let mixed = tape.concat_channels(y, w).unwrap();
        let kw = tape_weights(tape, 2, 4);
        let z = tape.conv2d(mixed, kw, k, 1).unwrap();
        tape.sum(z)
    });
    check("vertical pixel shuffle", &[random(1, 6, 2, 3, 9)], |tape, v| {
        let y = tape.vertical_pixel_shuffle(v[0], 2).unwrap();
        let k = tape.leaf(Tensor::zeros(Shape::new(1, 1, 1, 1).unwrap()));
        let kw = tape_weights(tape, 1, 3);
        let z = tape.conv2d(y, kw, k, 1).unwrap();
        l1_to_far(tape, z)
    });
}

/// A fixed non-symmetric 3x3 kernel bank, so spatial position matters.
fn tape_weights(tape: &mut Tape<f64>, cout: usize, cin: usize) -> Var {
    let shape = Shape::new(cout, cin, 3, 3).unwrap();
    tape.leaf(Tensor::from_fn(shape, |[o, i, y, x]| ((o * 5 + i * 3 + y * 7 + x * 11) % 13) as f64 / 13.0 - 0.4))
}

pub fn l1_loss_inputs() {
    let pred = random(1, 3, 4, 4, 10);
    let target = random(1, 3, 4, 4, 11);
    check("l1", &[pred, target], |tape, v| tape.l1_loss(v[0], v[1]).unwrap());
}

pub fn weighted_training_loss() {
    let inputs = [random(2, 3, 4, 4, 12), random(2, 3, 4, 4, 13), random(2, 3, 4, 4, 14)];
    check("total loss", &inputs, |tape, v| total_loss(tape, v[0], v[1], v[2], 0.3).unwrap().total);
}

fn toy_din() -> DinParams<f64> {
    let mut p = DinParams::<f64>::build(DinConfig::with_channels(4), 3).unwrap();
    for (i, layer) in p.layers_mut().iter_mut().enumerate() {
        let shape = layer.bias.shape();
        layer.bias = xavier_init::<f64>(shape, 100 + i as u64);
    }
    p
}

fn din_loss(p: &DinParams<f64>, top: &Tensor<f64>, bottom: &Tensor<f64>, y: &Tensor<f64>, grad: bool) -> (Tape<f64>, Vec<(Var, Var)>, Var) {
    let mut tape = Tape::new();
    let bound = p.bind(&mut tape, grad);
    let vars = bound.vars().to_vec();
    let t = tape.leaf(top.clone());
    let b = tape.leaf(bottom.clone());
    let yv = tape.leaf(y.clone());
    let out = bound.forward(&mut tape, t, b).unwrap();
    let loss = total_loss(&mut tape, out.intermediate, out.output, yv, 0.4).unwrap().total;
    (tape, vars, loss)
}

pub fn composed_din_every_parameter() {
    let p = toy_din();
    let top = random(1, 3, 8, 8, 20);
    let bottom = random(1, 3, 8, 8, 21);
    let y = random(1, 3, 16, 8, 22);
    let (mut tape, vars, loss) = din_loss(&p, &top, &bottom, &y, true);
    tape.backward(loss).unwrap();

    let mut checked = 0;
    for (l, &(wv, bv)) in vars.iter().enumerate() {
        for (is_bias, var) in [(false, wv), (true, bv)] {
            let analytic = tape.grad(var).unwrap().to_vec();
            for i in 0..analytic.len() {
                let mut probe = p.clone();
                let eval = |probe: &DinParams<f64>| {
                    let (tape, _, loss) = din_loss(probe, &top, &bottom, &y, false);
                    tape.value(loss).item().unwrap()
                };
                let base = if is_bias { p.layers()[l].bias.data()[i] } else { p.layers()[l].weight.data()[i] };
                let set = |probe: &mut DinParams<f64>, v: f64| {
                    let layer = &mut probe.layers_mut()[l];
                    let t = if is_bias { &mut layer.bias } else { &mut layer.weight };
                    t.data_mut()[i] = v;
                };
                set(&mut probe, base + STEP);
                let up = eval(&probe);
                set(&mut probe, base - STEP);
                let down = eval(&probe);
                let numeric = (up - down) / (2.0 * STEP);
                let name = &p.layers()[l].name;
                assert!(
                    close(analytic[i], numeric),
                    "{name} {} [{i}]: analytic {} vs numeric {numeric}",
                    if is_bias { "bias" } else { "weight" },
                    analytic[i]
                );
                checked += 1;
            }
        }
    }
    assert_eq!(checked, p.param_count());
}

pub fn composed_din_inputs() {
    let p = toy_din();
    let y = random(1, 3, 8, 6, 32);
    let inputs = [random(1, 3, 4, 6, 30), random(1, 3, 4, 6, 31)];
    check("din fields", &inputs, |tape, v| {
        let bound = p.bind(tape, false);
        let out = bound.forward(tape, v[0], v[1]).unwrap();
        let yv = tape.leaf(y.clone());
        total_loss(tape, out.intermediate, out.output, yv, 0.4).unwrap().total
    });
}

/// Every check with a short label, in a fixed order.
pub const SUITE: &[(&str, fn())] = &[
    ("conv2d, all kernel/stride geometries", conv2d_all_geometries),
    ("relu", relu_and_sum),
    ("relu known values", relu_known_values),
    ("add, concat, scale", add_concat_scale),
    ("pixel and vertical pixel shuffle", shuffles),
    ("l1 loss", l1_loss_inputs),
    ("weighted two-term loss", weighted_training_loss),
    ("composed DIN, every parameter", composed_din_every_parameter),
    ("composed DIN, field inputs", composed_din_inputs),
];
