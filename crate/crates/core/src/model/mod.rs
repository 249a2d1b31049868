//! The two-stage deinterlacing network.
//!
//! ```text
//!  top, bottom ──concat──▶ conv3x3 ─┬─▶ RB × cis_blocks ──(+)──▶ conv3x3 (C→2C) ─▶ VPS ─▶ features (C)
//!                                   └──────────────────────┘                               │
//!                                                                          conv1x1 ─▶ intermediate
//!  features ─▶ RB × pre ──────────────────────────────┐
//!     └─▶ conv3x3/2 ─▶ RB × down ─▶ conv3x3 (C→4C) ─▶ PS ─┴─concat─▶ RB@2C × post ─(+ concat(features, up))─▶ conv3x3 (2C→3) ─(+ intermediate)─▶ output
//! ```
//!
//! The co-interpolation stage works at field resolution and doubles the
//! height with a vertical pixel shuffle. The fields-merging stage runs a
//! full-resolution base branch and a half-resolution branch that is
//! upsampled with a 2x2 pixel shuffle and concatenated into the middle of
//! the base branch.

mod checkpoint;

use std::collections::HashMap;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};

use crate::error::{Error, Result};
use crate::frame::{FieldPair, Frame};
use crate::interlace::{pair_seed, split_fields};
use crate::tensor::{xavier_init, Real, Shape, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DinConfig {
    pub base_channels: usize,
    pub cis_blocks: usize,
    pub fms_base_blocks_pre: usize,
    pub fms_base_blocks_post: usize,
    pub fms_down_blocks: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Default for DinConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl DinConfig {
    /// 64 feature maps, 6 CIS blocks, 2 + 3 base blocks and 3 down blocks.
    pub const fn reference() -> Self {
        DinConfig {
            base_channels: 64,
            cis_blocks: 6,
            fms_base_blocks_pre: 2,
            fms_base_blocks_post: 3,
            fms_down_blocks: 3,
            in_channels: 3,
            out_channels: 3,
        }
    }

    /// Same topology at a different width.
    pub const fn with_channels(base_channels: usize) -> Self {
        DinConfig { base_channels, ..Self::reference() }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.base_channels,
            self.cis_blocks,
            self.fms_base_blocks_pre,
            self.fms_base_blocks_post,
            self.fms_down_blocks,
            self.in_channels,
            self.out_channels,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidArgument(format!("all DIN counts must be >= 1: {self:?}")));
        }
        if !self.base_channels.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "base_channels must be even, got {}",
                self.base_channels
            )));
        }
        Ok(())
    }

    /// Ordered `(name, weight shape)` of every convolution.
    pub fn layer_shapes(&self) -> Vec<(String, [usize; 4])> {
        let c = self.base_channels;
        let mut layers = vec![("cis.head".to_string(), [c, 2 * self.in_channels, 3, 3])];
        let blocks = |layers: &mut Vec<(String, [usize; 4])>, prefix: &str, n: usize, ch: usize| {
            for i in 0..n {
                layers.push((format!("{prefix}{i}.conv1"), [ch, ch, 3, 3]));
                layers.push((format!("{prefix}{i}.conv2"), [ch, ch, 3, 3]));
            }
        };
        blocks(&mut layers, "cis.rb", self.cis_blocks, c);
        layers.push(("cis.expand".into(), [2 * c, c, 3, 3]));
        layers.push(("cis.inter".into(), [self.out_channels, c, 1, 1]));
        blocks(&mut layers, "fms.base", self.fms_base_blocks_pre, c);
        layers.push(("fms.down".into(), [c, c, 3, 3]));
        blocks(&mut layers, "fms.down_rb", self.fms_down_blocks, c);
        layers.push(("fms.up_expand".into(), [4 * c, c, 3, 3]));
        blocks(&mut layers, "fms.post", self.fms_base_blocks_post, 2 * c);
        layers.push(("fms.out".into(), [self.out_channels, 2 * c, 3, 3]));
        layers
    }
}

/// One convolution's weight `(Cout, Cin, k, k)` and bias `(Cout, 1, 1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T: Real = f32> {
    pub name: String,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DinParams<T: Real = f32> {
    config: DinConfig,
    layers: Vec<Layer<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> DinParams<T> {
    /// Xavier-uniform weights and zero biases, reproducible from `seed`.
    pub fn build(config: DinConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .enumerate()
            .map(|(i, (name, [o, ci, kh, kw]))| -> Result<Layer<T>> {
                let weight = xavier_init(Shape::new(o, ci, kh, kw)?, pair_seed(seed, i as u64));
                let bias = Tensor::zeros(Shape::new(o, 1, 1, 1)?);
                Ok(Layer { name, weight, bias })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(config, layers)
    }

    /// Assemble from explicit layers, checking names and shapes against the
    /// topology of `config`.
    pub fn from_layers(config: DinConfig, layers: Vec<Layer<T>>) -> Result<Self> {
        config.validate()?;
        let expected = config.layer_shapes();
        if expected.len() != layers.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} layers, got {}",
                expected.len(),
                layers.len()
            )));
        }
        for ((name, shape), layer) in expected.iter().zip(&layers) {
            if &layer.name != name
                || layer.weight.shape().dims() != *shape
                || layer.bias.shape().dims() != [shape[0], 1, 1, 1]
            {
                return Err(Error::InvalidArgument(format!(
                    "layer {} {} does not match expected {name} {shape:?}",
                    layer.name,
                    layer.weight.shape()
                )));
            }
        }
        let index = layers.iter().enumerate().map(|(i, l)| (l.name.clone(), i)).collect();
        Ok(DinParams { config, layers, index })
    }

    pub fn config(&self) -> &DinConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&Layer<T>> {
        self.index.get(name).map(|&i| &self.layers[i])
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut Layer<T>> {
        self.index.get(name).map(|&i| &mut self.layers[i])
    }

    /// Weights and biases interleaved in layer order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    /// Total number of learnable values.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> DinParams<U> {
        DinParams {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| Layer { name: l.name.clone(), weight: l.weight.cast(), bias: l.bias.cast() })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Record every weight and bias on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape<T>, requires_grad: bool) -> BoundParams<'_, T> {
        let vars = self
            .layers
            .iter()
            .map(|l| {
                let w = tape.leaf(l.weight.clone().with_requires_grad(requires_grad));
                let b = tape.leaf(l.bias.clone().with_requires_grad(requires_grad));
                (w, b)
            })
            .collect();
        BoundParams { params: self, vars }
    }

    /// Copy the gradients of a finished backward pass into each tensor's `grad`.
    pub fn collect_grads(&mut self, tape: &Tape<T>, bound_vars: &[(Var, Var)]) -> Result<()> {
        for (layer, &(w, b)) in self.layers.iter_mut().zip(bound_vars) {
            let gw = tape.grad(w).ok_or_else(|| Error::MissingGrad(format!("{}.weight", layer.name)))?;
            let gb = tape.grad(b).ok_or_else(|| Error::MissingGrad(format!("{}.bias", layer.name)))?;
            layer.weight.set_grad(gw.to_vec())?;
            layer.bias.set_grad(gb.to_vec())?;
        }
        Ok(())
    }

    /// Forward pass without gradients; returns `(final, intermediate)`.
    pub fn forward(&self, top: &Tensor<T>, bottom: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let t = tape.leaf(top.clone());
        let b = tape.leaf(bottom.clone());
        let out = bound.forward(&mut tape, t, b)?;
        Ok((tape.value(out.output).clone(), tape.value(out.intermediate).clone()))
    }

    /// Deinterlace one frame. Odd heights or widths are reflect-padded to
    /// even size and cropped back afterwards.
    pub fn deinterlace(&self, interlaced: &Frame) -> Result<Frame> {
        if interlaced.channels() != self.config.in_channels {
            return Err(Error::shape(
                "deinterlace",
                format!(
                    "frame has {} channels, network expects {}",
                    interlaced.channels(),
                    self.config.in_channels
                ),
            ));
        }
        let (w, h) = (interlaced.width(), interlaced.height());
        let padded = reflect_pad_even(interlaced)?;
        let FieldPair { top, bottom } = split_fields(&padded)?;
        let (out, _) = self.forward(&top.to_tensor(), &bottom.to_tensor())?;
        let full = Frame::from_tensor(&out, 0)?.clamped();
        if (full.width(), full.height()) == (w, h) {
            Ok(full)
        } else {
            full.crop(0, 0, h, w)
        }
    }
}

fn reflect_pad_even(frame: &Frame) -> Result<Frame> {
    let (w, h) = (frame.width(), frame.height());
    let (pw, ph) = (w + w % 2, h + h % 2);
    if (pw, ph) == (w, h) {
        return Ok(frame.clone());
    }
    let reflect = |i: usize, n: usize| if i < n { i } else { (2 * n).saturating_sub(i + 2) };
    Frame::from_fn(pw, ph, frame.channels(), |c, y, x| frame.get(c, reflect(y, h), reflect(x, w)))
}

/// Result of a forward pass recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct DinOutputs {
    pub features: Var,
    pub intermediate: Var,
    pub output: Var,
}

/// Parameters recorded on a tape, ready for forward passes.
pub struct BoundParams<'a, T: Real> {
    params: &'a DinParams<T>,
    vars: Vec<(Var, Var)>,
}

impl<T: Real> BoundParams<'_, T> {
    pub fn vars(&self) -> &[(Var, Var)] {
        &self.vars
    }

    fn conv(&self, tape: &mut Tape<T>, name: &str, x: Var, stride: usize) -> Result<Var> {
        let i = *self
            .params
            .index
            .get(name)
            .unwrap_or_else(|| panic!("layer {name} missing from topology"));
        let (w, b) = self.vars[i];
        tape.conv2d(x, w, b, stride)
    }

    fn residual_block(&self, tape: &mut Tape<T>, prefix: &str, x: Var) -> Result<Var> {
        let h = self.conv(tape, &format!("{prefix}.conv1"), x, 1)?;
        let h = tape.relu(h);
        let h = self.conv(tape, &format!("{prefix}.conv2"), h, 1)?;
        tape.add(x, h)
    }

    /// Co-interpolation stage: fields `(N, 3, H/2, W)` to full-height
    /// features `(N, C, H, W)` and the intermediate image `(N, 3, H, W)`.
    pub fn cis_forward(&self, tape: &mut Tape<T>, top: Var, bottom: Var) -> Result<(Var, Var)> {
        let (st, sb) = (tape.shape(top), tape.shape(bottom));
        if st != sb {
            return Err(Error::shape("cis_forward", format!("top field {st} vs bottom field {sb}")));
        }
        let x = tape.concat_channels(top, bottom)?;
        let head = self.conv(tape, "cis.head", x, 1)?;
        let mut h = head;
        for i in 0..self.params.config.cis_blocks {
            h = self.residual_block(tape, &format!("cis.rb{i}"), h)?;
        }
        let h = tape.add(h, head)?;
        let expanded = self.conv(tape, "cis.expand", h, 1)?;
        let features = tape.vertical_pixel_shuffle(expanded, 2)?;
        let intermediate = self.conv(tape, "cis.inter", features, 1)?;
        Ok((features, intermediate))
    }

    /// Fields-merging stage: features and intermediate image to the output
    /// image. Height and width must be even.
    pub fn fms_forward(&self, tape: &mut Tape<T>, features: Var, intermediate: Var) -> Result<Var> {
        let sf = tape.shape(features);
        let si = tape.shape(intermediate);
        let cfg = &self.params.config;
        if !sf.h().is_multiple_of(2) || !sf.w().is_multiple_of(2) {
            return Err(Error::shape("fms_forward", format!("features {sf} must have even height and width")));
        }
        if sf.c() != cfg.base_channels
            || (si.n(), si.c(), si.h(), si.w()) != (sf.n(), cfg.out_channels, sf.h(), sf.w())
        {
            return Err(Error::shape("fms_forward", format!("features {sf} vs intermediate {si}")));
        }
        let mut base = features;
        for i in 0..cfg.fms_base_blocks_pre {
            base = self.residual_block(tape, &format!("fms.base{i}"), base)?;
        }
        let mut down = self.conv(tape, "fms.down", features, 2)?;
        for i in 0..cfg.fms_down_blocks {
            down = self.residual_block(tape, &format!("fms.down_rb{i}"), down)?;
        }
        let up = self.conv(tape, "fms.up_expand", down, 1)?;
        let up = tape.pixel_shuffle(up, 2)?;
        let mut merged = tape.concat_channels(base, up)?;
        for i in 0..cfg.fms_base_blocks_post {
            merged = self.residual_block(tape, &format!("fms.post{i}"), merged)?;
        }
        let skip = tape.concat_channels(features, up)?;
        let merged = tape.add(merged, skip)?;
        let residual = self.conv(tape, "fms.out", merged, 1)?;
        tape.add(residual, intermediate)
    }

    pub fn forward(&self, tape: &mut Tape<T>, top: Var, bottom: Var) -> Result<DinOutputs> {
        let (features, intermediate) = self.cis_forward(tape, top, bottom)?;
        let output = self.fms_forward(tape, features, intermediate)?;
        Ok(DinOutputs { features, intermediate, output })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(n: usize, h: usize, w: usize, seed: u64) -> (Tensor<f32>, Tensor<f32>) {
        let shape = Shape::new(n, 3, h, w).unwrap();
        (xavier_init(shape, seed), xavier_init(shape, seed + 1))
    }

    #[test]
    fn reference_param_count() {
        let p = DinParams::<f32>::build(DinConfig::reference(), 0).unwrap();
        let count = p.param_count();
        assert_eq!(count, 1_963_590);
        assert!((1_544_000..=2_088_000).contains(&count));
    }

    #[test]
    fn one_layer_count_by_hand() {
        // 3x3 conv 6 -> 8: 6*8*9 weights + 8 biases
        let cfg = DinConfig::with_channels(8);
        let p = DinParams::<f32>::build(cfg, 0).unwrap();
        let head = p.layer("cis.head").unwrap();
        assert_eq!(head.weight.len() + head.bias.len(), 440);
    }

    #[test]
    fn empty_params_count_zero() {
        let p = DinParams::<f32> { config: DinConfig::reference(), layers: vec![], index: HashMap::new() };
        assert_eq!(p.param_count(), 0);
    }

    #[test]
    fn build_is_seeded() {
        let cfg = DinConfig::with_channels(4);
        let a = DinParams::<f32>::build(cfg, 3).unwrap();
        assert_eq!(a, DinParams::build(cfg, 3).unwrap());
        assert_ne!(a, DinParams::build(cfg, 4).unwrap());
        assert!(a.layers().iter().all(|l| l.bias.data().iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn invalid_configs() {
        assert!(DinConfig { base_channels: 7, ..DinConfig::reference() }.validate().is_err());
        assert!(DinConfig { cis_blocks: 0, ..DinConfig::reference() }.validate().is_err());
    }

    #[test]
    fn cis_shapes() {
        let p = DinParams::<f32>::build(DinConfig::with_channels(8), 1).unwrap();
        let (t, b) = fields(1, 4, 8, 9);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape, false);
        let (tv, bv) = (tape.leaf(t), tape.leaf(b));
        let (feat, inter) = bound.cis_forward(&mut tape, tv, bv).unwrap();
        assert_eq!(tape.shape(feat).dims(), [1, 8, 8, 8]);
        assert_eq!(tape.shape(inter).dims(), [1, 3, 8, 8]);
        let out = bound.fms_forward(&mut tape, feat, inter).unwrap();
        assert_eq!(tape.shape(out).dims(), [1, 3, 8, 8]);
    }

    #[test]
    fn toy_forward_shape() {
        let p = DinParams::<f32>::build(DinConfig::with_channels(8), 1).unwrap();
        let (t, b) = fields(1, 8, 16, 2);
        let (out, inter) = p.forward(&t, &b).unwrap();
        assert_eq!(out.shape().dims(), [1, 3, 16, 16]);
        assert_eq!(inter.shape().dims(), [1, 3, 16, 16]);
        assert_eq!(p.forward(&t, &b).unwrap().0, out);
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut p = DinParams::<f32>::build(DinConfig::with_channels(4), 1).unwrap();
        for l in p.layers_mut() {
            l.weight.data_mut().fill(0.0);
        }
        p.layer_mut("cis.inter").unwrap().bias.data_mut().copy_from_slice(&[0.1, 0.2, 0.3]);
        let (t, b) = fields(1, 4, 6, 5);
        let (_, inter) = p.forward(&t, &b).unwrap();
        for c in 0..3 {
            assert!(inter.data()[c * 48..(c + 1) * 48].iter().all(|&v| v == [0.1, 0.2, 0.3][c]));
        }
    }

    #[test]
    fn zero_fms_output_passes_intermediate() {
        let mut p = DinParams::<f32>::build(DinConfig::with_channels(4), 1).unwrap();
        for l in p.layers_mut().iter_mut().filter(|l| l.name.starts_with("fms.")) {
            l.weight.data_mut().fill(0.0);
        }
        let (t, b) = fields(2, 4, 6, 5);
        let (out, inter) = p.forward(&t, &b).unwrap();
        assert_eq!(out, inter);
    }

    #[test]
    fn fms_rejects_odd_width() {
        let p = DinParams::<f32>::build(DinConfig::with_channels(4), 1).unwrap();
        let (t, b) = fields(1, 4, 5, 5);
        assert!(matches!(p.forward(&t, &b), Err(Error::Shape { op: "fms_forward", .. })));
    }

    #[test]
    fn mismatched_fields() {
        let p = DinParams::<f32>::build(DinConfig::with_channels(4), 1).unwrap();
        let (t, _) = fields(1, 4, 6, 5);
        let (_, b) = fields(1, 2, 6, 5);
        assert!(p.forward(&t, &b).is_err());
    }

    #[test]
    fn deinterlace_pads_odd_sizes() {
        let p = DinParams::<f32>::build(DinConfig::with_channels(4), 1).unwrap();
        let f = Frame::from_fn(7, 5, 3, |c, y, x| ((c + y + x) % 5) as f32 / 4.0).unwrap();
        let out = p.deinterlace(&f).unwrap();
        assert_eq!((out.width(), out.height(), out.channels()), (7, 5, 3));
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn reflect_padding_keeps_field_parity() {
        let f = Frame::from_fn(3, 3, 1, |_, y, x| (y * 3 + x) as f32).unwrap();
        let p = reflect_pad_even(&f).unwrap();
        assert_eq!((p.width(), p.height()), (4, 4));
        assert_eq!(p.row(0, 3), &[3.0, 4.0, 5.0, 4.0]);
    }
}
