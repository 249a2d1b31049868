use super::{Real, Shape, Tensor};
use crate::error::{Error, Result};

/// Row-major strided matrix view: `(rows, cols, row stride, col stride)`.
#[derive(Clone, Copy)]
pub(crate) struct Layout {
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl Layout {
    pub(crate) fn row_major(rows: usize, cols: usize) -> Self {
        Layout { rows, cols, rs: cols, cs: 1 }
    }

    pub(crate) fn t(self) -> Self {
        Layout { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

/// `c = a * b + beta * c`.
pub(crate) fn gemm<T: Real>(a: &[T], la: Layout, b: &[T], lb: Layout, beta: T, c: &mut [T]) {
    let (m, k, n) = (la.rows, la.cols, lb.cols);
    assert_eq!(k, lb.rows, "gemm inner dimensions");
    assert!(la.span() <= a.len() && lb.span() <= b.len() && m * n <= c.len());
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: spans checked above; `c` is dense row-major m x n.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            la.rs as isize,
            la.cs as isize,
            b.as_ptr(),
            lb.rs as isize,
            lb.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub(crate) fn new(cin: usize, h: usize, w: usize, k: usize, stride: usize) -> Self {
        let pad = k / 2;
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        ConvGeom { cin, h, w, k, stride, pad, ho, wo }
    }

    fn direct(&self) -> bool {
        self.k == 1 && self.stride == 1
    }

    fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    /// Range of output columns whose input column `ox*stride + kx - pad` is in bounds.
    fn valid_out(&self, offset: usize, len_in: usize, len_out: usize) -> (usize, usize) {
        // input index = o*stride + offset - pad
        let lo = if offset >= self.pad { 0 } else { (self.pad - offset).div_ceil(self.stride) };
        let hi = if len_in + self.pad > offset {
            ((len_in + self.pad - offset - 1) / self.stride + 1).min(len_out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

fn im2col<T: Real>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let plane = g.ho * g.wo;
    for c in 0..g.cin {
        let src = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            let (ylo, yhi) = g.valid_out(ky, g.h, g.ho);
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (xlo, xhi) = g.valid_out(kx, g.w, g.wo);
                for oy in 0..g.ho {
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if oy < ylo || oy >= yhi {
                        line.fill(T::zero());
                        continue;
                    }
                    let iy = oy * g.stride + ky - g.pad;
                    let srow = &src[iy * g.w..(iy + 1) * g.w];
                    line[..xlo].fill(T::zero());
                    line[xhi..].fill(T::zero());
                    if g.stride == 1 {
                        let start = xlo + kx - g.pad;
                        line[xlo..xhi].copy_from_slice(&srow[start..start + (xhi - xlo)]);
                    } else {
                        for ox in xlo..xhi {
                            line[ox] = srow[ox * g.stride + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let plane = g.ho * g.wo;
    for c in 0..g.cin {
        let dst = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            let (ylo, yhi) = g.valid_out(ky, g.h, g.ho);
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let (xlo, xhi) = g.valid_out(kx, g.w, g.wo);
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ky - g.pad;
                    let drow = &mut dst[iy * g.w..(iy + 1) * g.w];
                    let line = &src[oy * g.wo..(oy + 1) * g.wo];
                    for ox in xlo..xhi {
                        drow[ox * g.stride + kx - g.pad] += line[ox];
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_out_shape(
    x: Shape,
    w: Shape,
    b: Shape,
    stride: usize,
) -> Result<(Shape, ConvGeom)> {
    let k = w.h();
    if w.w() != k || !(k == 1 || k == 3) {
        return Err(Error::shape("conv2d", format!("kernel must be 1x1 or 3x3, weight is {w}")));
    }
    if stride != 1 && stride != 2 {
        return Err(Error::InvalidArgument(format!("conv2d stride must be 1 or 2, got {stride}")));
    }
    if x.c() != w.c() {
        return Err(Error::shape(
            "conv2d",
            format!("input channels {} != weight in-channels {}", x.c(), w.c()),
        ));
    }
    if b.numel() != w.n() {
        return Err(Error::shape(
            "conv2d",
            format!("bias length {} != weight out-channels {}", b.numel(), w.n()),
        ));
    }
    let g = ConvGeom::new(x.c(), x.h(), x.w(), k, stride);
    Ok((Shape::new(x.n(), w.n(), g.ho, g.wo)?, g))
}

pub(crate) fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (out_shape, g) = conv_out_shape(x.shape(), w.shape(), b.shape(), stride)?;
    let cout = w.shape().n();
    let plane = g.ho * g.wo;
    let in_per = g.cin * g.h * g.w;
    let mut out = vec![T::zero(); out_shape.numel()];
    let mut cols = if g.direct() { Vec::new() } else { vec![T::zero(); g.patch_len() * plane] };
    let lw = Layout::row_major(cout, g.patch_len());
    for n in 0..x.shape().n() {
        let xn = &x.data()[n * in_per..(n + 1) * in_per];
        let on = &mut out[n * cout * plane..(n + 1) * cout * plane];
        for (co, row) in on.chunks_exact_mut(plane).enumerate() {
            row.fill(b.data()[co]);
        }
        let src: &[T] = if g.direct() {
            xn
        } else {
            im2col(xn, &g, &mut cols);
            &cols
        };
        gemm(w.data(), lw, src, Layout::row_major(g.patch_len(), plane), T::one(), on);
    }
    Tensor::new(out_shape, out)
}

/// Gradients of a convolution. Each requested buffer is accumulated into.
pub(crate) fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    dout: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let cout = w.shape().n();
    let g = ConvGeom::new(x.shape().c(), x.shape().h(), x.shape().w(), w.shape().h(), stride);
    let plane = g.ho * g.wo;
    let in_per = g.cin * g.h * g.w;
    let lw = Layout::row_major(cout, g.patch_len());
    let lcols = Layout::row_major(g.patch_len(), plane);
    let ldout = Layout::row_major(cout, plane);
    let mut cols = if g.direct() { Vec::new() } else { vec![T::zero(); g.patch_len() * plane] };
    let mut dcols = if g.direct() || dx.is_none() {
        Vec::new()
    } else {
        vec![T::zero(); g.patch_len() * plane]
    };
    for n in 0..x.shape().n() {
        let dn = &dout[n * cout * plane..(n + 1) * cout * plane];
        if let Some(db) = db.as_deref_mut() {
            for (co, row) in dn.chunks_exact(plane).enumerate() {
                db[co] += row.iter().fold(T::zero(), |acc, &v| acc + v);
            }
        }
        let xn = &x.data()[n * in_per..(n + 1) * in_per];
        if let Some(dw) = dw.as_deref_mut() {
            let src: &[T] = if g.direct() {
                xn
            } else {
                im2col(xn, &g, &mut cols);
                &cols
            };
            gemm(dn, ldout, src, lcols.t(), T::one(), dw);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxn = &mut dx[n * in_per..(n + 1) * in_per];
            if g.direct() {
                gemm(w.data(), lw.t(), dn, ldout, T::one(), dxn);
            } else {
                gemm(w.data(), lw.t(), dn, ldout, T::zero(), &mut dcols);
                col2im(&dcols, &g, dxn);
            }
        }
    }
}

/// `(N, C, H, W) -> (N, C/r², H·r, W·r)` with
/// `out[n, c, h·r+i, w·r+j] = in[n, c·r²+i·r+j, h, w]`.
pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    shuffle(x, r, r, "pixel_shuffle")
}

/// Exact inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    unshuffle(x, r, r, "pixel_unshuffle")
}

/// `(N, C, H, W) -> (N, C/r, H·r, W)` with `out[n, c, h·r+i, w] = in[n, c·r+i, h, w]`:
/// channel group 0 lands on even output rows, group 1 on odd rows.
pub fn vertical_pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    shuffle(x, r, 1, "vertical_pixel_shuffle")
}

/// Exact inverse of [`vertical_pixel_shuffle`].
pub fn vertical_pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    unshuffle(x, r, 1, "vertical_pixel_unshuffle")
}

fn shuffle<T: Real>(x: &Tensor<T>, ry: usize, rx: usize, op: &'static str) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape().dims();
    let group = ry * rx;
    if group == 0 || c % group != 0 {
        return Err(Error::shape(op, format!("channels {c} not divisible by {group}")));
    }
    let co = c / group;
    let (ho, wo) = (h * ry, w * rx);
    let mut out = vec![T::zero(); x.len()];
    let src = x.data();
    for ni in 0..n {
        for oc in 0..co {
            for i in 0..ry {
                for j in 0..rx {
                    let ic = oc * group + i * rx + j;
                    let plane = &src[((ni * c + ic) * h) * w..((ni * c + ic) * h + h) * w];
                    for hi in 0..h {
                        let orow = ((ni * co + oc) * ho + hi * ry + i) * wo;
                        for wi in 0..w {
                            out[orow + wi * rx + j] = plane[hi * w + wi];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(Shape::new(n, co, ho, wo)?, out)
}

fn unshuffle<T: Real>(x: &Tensor<T>, ry: usize, rx: usize, op: &'static str) -> Result<Tensor<T>> {
    let [n, c, ho, wo] = x.shape().dims();
    if ho % ry != 0 || wo % rx != 0 {
        return Err(Error::shape(op, format!("spatial size {ho}x{wo} not divisible by {ry}x{rx}")));
    }
    let group = ry * rx;
    let (h, w) = (ho / ry, wo / rx);
    let ci = c * group;
    let mut out = vec![T::zero(); x.len()];
    let src = x.data();
    for ni in 0..n {
        for oc in 0..c {
            for i in 0..ry {
                for j in 0..rx {
                    let ic = oc * group + i * rx + j;
                    for hi in 0..h {
                        let orow = ((ni * c + oc) * ho + hi * ry + i) * wo;
                        let dst = ((ni * ci + ic) * h + hi) * w;
                        for wi in 0..w {
                            out[dst + wi] = src[orow + wi * rx + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(Shape::new(n, ci, h, w)?, out)
}

/// Channel-wise concatenation, `a`'s channels first.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, ca, h, w] = a.shape().dims();
    let [nb, cb, hb, wb] = b.shape().dims();
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::shape(
            "concat_channels",
            format!("{} and {} disagree on batch or spatial size", a.shape(), b.shape()),
        ));
    }
    let (pa, pb) = (ca * h * w, cb * h * w);
    let mut out = Vec::with_capacity(a.len() + b.len());
    for ni in 0..n {
        out.extend_from_slice(&a.data()[ni * pa..(ni + 1) * pa]);
        out.extend_from_slice(&b.data()[ni * pb..(ni + 1) * pb]);
    }
    Tensor::new(Shape::new(n, ca + cb, h, w)?, out)
}

/// Channels `start..start+len` of `x`.
pub fn slice_channels<T: Real>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape().dims();
    if len == 0 || start + len > c {
        return Err(Error::shape(
            "slice_channels",
            format!("channels {start}..{} out of range for {}", start + len, x.shape()),
        ));
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(n * len * plane);
    for ni in 0..n {
        let base = (ni * c + start) * plane;
        out.extend_from_slice(&x.data()[base..base + len * plane]);
    }
    Tensor::new(Shape::new(n, len, h, w)?, out)
}
