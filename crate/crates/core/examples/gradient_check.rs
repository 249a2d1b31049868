//! Reverse-mode gradients of a small conv net against central finite
//! differences, in double precision.
//!
//! cargo run --release --example gradient_check

use din::tensor::{xavier_init, Shape, Tape, Tensor};

fn loss(x: &Tensor<f64>, w1: &Tensor<f64>, w2: &Tensor<f64>, target: &Tensor<f64>, grad: bool) -> (Tape<f64>, Vec<din::tensor::Var>, f64) {
    let mut tape = Tape::new();
    let leaf = |tape: &mut Tape<f64>, t: &Tensor<f64>| tape.leaf(t.clone().with_requires_grad(grad));
    let xv = leaf(&mut tape, x);
    let w1v = leaf(&mut tape, w1);
    let w2v = leaf(&mut tape, w2);
    let b1 = tape.leaf(Tensor::zeros(Shape::new(4, 1, 1, 1).unwrap()));
    let b2 = tape.leaf(Tensor::zeros(Shape::new(4, 1, 1, 1).unwrap()));
    let t = tape.leaf(target.clone());
    let h = tape.conv2d(xv, w1v, b1, 1).unwrap();
    let h = tape.relu(h);
    let y = tape.conv2d(h, w2v, b2, 1).unwrap();
    let y = tape.pixel_shuffle(y, 2).unwrap();
    let l = tape.l1_loss(y, t).unwrap();
    let value = tape.value(l).item().unwrap();
    if grad {
        tape.backward(l).unwrap();
    }
    (tape, vec![xv, w1v, w2v], value)
}

fn main() {
    let x = xavier_init::<f64>(Shape::new(1, 3, 6, 6).unwrap(), 1);
    let w1 = xavier_init::<f64>(Shape::new(4, 3, 3, 3).unwrap(), 2);
    let w2 = xavier_init::<f64>(Shape::new(4, 4, 3, 3).unwrap(), 3);
    let target = xavier_init::<f64>(Shape::new(1, 1, 12, 12).unwrap(), 4);
    let (tape, vars, value) = loss(&x, &w1, &w2, &target, true);
    println!("loss {value:.6}");

    let step = 1e-5;
    let inputs = [("input", &x), ("conv1 weight", &w1), ("conv2 weight", &w2)];
    for (k, (name, t)) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]).unwrap();
        let mut worst = 0.0f64;
        for i in 0..t.len() {
            let mut probe = [x.clone(), w1.clone(), w2.clone()];
            probe[k].data_mut()[i] += step;
            let up = loss(&probe[0], &probe[1], &probe[2], &target, false).2;
            probe[k].data_mut()[i] -= 2.0 * step;
            let down = loss(&probe[0], &probe[1], &probe[2], &target, false).2;
            let numeric = (up - down) / (2.0 * step);
            let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(err);
        }
        println!("{name:<13} {} elements, worst relative error {worst:.2e}", t.len());
    }
}
