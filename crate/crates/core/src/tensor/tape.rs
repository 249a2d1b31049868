use super::kernels::{self, conv2d_backward, conv2d_forward};
use super::{Real, Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Var, stride: usize },
    Relu(Var),
    Add(Var, Var),
    Concat(Var, Var),
    PixelShuffle(Var, usize),
    VerticalShuffle(Var, usize),
    L1 { pred: Var, target: Var },
    Scale(Var, T),
    Sum(Var),
}

#[derive(Debug)]
struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Wengert list of every op applied since construction. Values are stored,
/// nothing is recomputed except convolution patch matrices.
///
/// A tape can be differentiated once; a second [`Tape::backward`] is an
/// error instead of silently accumulating.
#[derive(Debug)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input. Its `requires_grad` flag decides whether backward
    /// fills its gradient.
    pub fn leaf(&mut self, mut tensor: Tensor<T>) -> Var {
        tensor.grad = None;
        let requires_grad = tensor.requires_grad;
        self.push(tensor, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// The gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa} vs {sb}")));
        }
        Ok(())
    }

    /// Zero-padded cross-correlation with a 1x1 or 3x3 kernel; `padding = k/2`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize) -> Result<Var> {
        let out = conv2d_forward(self.value(input), self.value(weight), self.value(bias), stride)?;
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(out, Op::Conv2d { input, weight, bias, stride }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let out = Tensor::new(src.shape(), data).expect("same length");
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(va.shape(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::concat_channels(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Concat(a, b), rg))
    }

    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = kernels::pixel_shuffle(self.value(x), r)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::PixelShuffle(x, r), rg))
    }

    pub fn vertical_pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = kernels::vertical_pixel_shuffle(self.value(x), r)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::VerticalShuffle(x, r), rg))
    }

    /// Mean absolute error over all elements, as a scalar.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("l1_loss", pred, target)?;
        let (p, t) = (self.value(pred), self.value(target));
        let total = p.data().iter().zip(t.data()).fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs());
        let count = T::from_usize(p.len()).expect("element count");
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(Tensor::scalar(total / count), Op::L1 { pred, target }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| v * factor).collect();
        let out = Tensor::new(src.shape(), data).expect("same length");
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Scale(x, factor), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().fold(T::zero(), |acc, &v| acc + v);
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    /// Reverse sweep from a scalar `loss`, leaving `d loss / d leaf` in the
    /// `grad` of every leaf that requires it.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let shape = self.value(loss).shape();
        if !shape.is_scalar() {
            return Err(Error::NotScalar(shape.to_string()));
        }
        if !self.nodes[loss.0].requires_grad {
            return Err(Error::Detached);
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let node = &self.nodes[idx];
            match node.op.clone() {
                Op::Leaf => {
                    self.nodes[idx].value.grad = Some(g);
                    continue;
                }
                Op::Conv2d { input, weight, bias, stride } => {
                    let mut dx = self.wants(input).then(|| self.zeros_like(input));
                    let mut dw = self.wants(weight).then(|| self.zeros_like(weight));
                    let mut db = self.wants(bias).then(|| self.zeros_like(bias));
                    conv2d_backward(
                        self.value(input),
                        self.value(weight),
                        stride,
                        &g,
                        dx.as_deref_mut(),
                        dw.as_deref_mut(),
                        db.as_deref_mut(),
                    );
                    accumulate(&mut grads, input, dx);
                    accumulate(&mut grads, weight, dw);
                    accumulate(&mut grads, bias, db);
                }
                Op::Relu(x) => {
                    let out = node.value.data();
                    let dx = g
                        .iter()
                        .zip(out)
                        .map(|(&gv, &o)| if o > T::zero() { gv } else { T::zero() })
                        .collect();
                    accumulate(&mut grads, x, Some(dx));
                }
                Op::Add(a, b) => {
                    if a == b {
                        accumulate(&mut grads, a, Some(g.iter().map(|&v| v + v).collect()));
                    } else {
                        let gb = self.wants(b).then(|| g.clone());
                        accumulate(&mut grads, a, self.wants(a).then_some(g));
                        accumulate(&mut grads, b, gb);
                    }
                }
                Op::Concat(a, b) => {
                    let grad = Tensor::new(node.value.shape(), g)?;
                    let ca = self.value(a).shape().c();
                    let cb = self.value(b).shape().c();
                    let ga = kernels::slice_channels(&grad, 0, ca)?.into_data();
                    let gb = kernels::slice_channels(&grad, ca, cb)?.into_data();
                    accumulate(&mut grads, a, Some(ga));
                    accumulate(&mut grads, b, Some(gb));
                }
                Op::PixelShuffle(x, r) => {
                    let grad = Tensor::new(node.value.shape(), g)?;
                    accumulate(&mut grads, x, Some(kernels::pixel_unshuffle(&grad, r)?.into_data()));
                }
                Op::VerticalShuffle(x, r) => {
                    let grad = Tensor::new(node.value.shape(), g)?;
                    let dx = kernels::vertical_pixel_unshuffle(&grad, r)?.into_data();
                    accumulate(&mut grads, x, Some(dx));
                }
                Op::L1 { pred, target } => {
                    let (p, t) = (self.value(pred).data(), self.value(target).data());
                    let scale = g[0] / T::from_usize(p.len()).expect("element count");
                    let dp: Vec<T> = p
                        .iter()
                        .zip(t)
                        .map(|(&a, &b)| {
                            let d = a - b;
                            if d > T::zero() {
                                scale
                            } else if d < T::zero() {
                                -scale
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    let dt = self.wants(target).then(|| dp.iter().map(|&v| -v).collect());
                    accumulate(&mut grads, pred, self.wants(pred).then_some(dp));
                    accumulate(&mut grads, target, dt);
                }
                Op::Scale(x, factor) => {
                    accumulate(&mut grads, x, Some(g.iter().map(|&v| v * factor).collect()));
                }
                Op::Sum(x) => {
                    let n = self.value(x).len();
                    accumulate(&mut grads, x, Some(vec![g[0]; n]));
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn zeros_like(&self, v: Var) -> Vec<T> {
        vec![T::zero(); self.value(v).len()]
    }

    /// Shape of a recorded value.
    pub fn shape(&self, v: Var) -> Shape {
        self.value(v).shape()
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, g: Option<Vec<T>>) {
    let Some(g) = g else { return };
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, &x)| *e += x),
        slot @ None => *slot = Some(g),
    }
}
