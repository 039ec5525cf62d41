//! Raw tensor kernels. Every linear kernel here has its adjoint next to it;
//! the differentiation rules in `var` are built from these pairs.

use std::cell::RefCell;

use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PadMode {
    Zero,
    Reflect,
    Circular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
    pub mode: PadMode,
}

impl Padding {
    pub fn uniform(p: usize, mode: PadMode) -> Self {
        Self {
            top: p,
            bottom: p,
            left: p,
            right: p,
            mode,
        }
    }

    pub fn padded(&self, s: Shape) -> Shape {
        s.with_hw(s.h + self.top + self.bottom, s.w + self.left + self.right)
    }
}

/// Maps a coordinate of the padded axis back to the source axis of length `n`.
fn source_index(p: usize, before: usize, n: usize, mode: PadMode) -> Option<usize> {
    let i = p as isize - before as isize;
    let n_i = n as isize;
    match mode {
        PadMode::Zero => (0..n_i).contains(&i).then_some(i as usize),
        PadMode::Circular => Some(i.rem_euclid(n_i) as usize),
        PadMode::Reflect => {
            if n == 1 {
                return Some(0);
            }
            let period = 2 * (n_i - 1);
            let mut j = i.rem_euclid(period);
            if j >= n_i {
                j = period - j;
            }
            Some(j as usize)
        }
    }
}

fn axis_map(len_out: usize, before: usize, n: usize, mode: PadMode) -> Vec<Option<usize>> {
    (0..len_out)
        .map(|p| source_index(p, before, n, mode))
        .collect()
}

pub fn pad(x: &Tensor, pad: &Padding) -> Tensor {
    let s = x.shape();
    let o = pad.padded(s);
    let ys = axis_map(o.h, pad.top, s.h, pad.mode);
    let xs = axis_map(o.w, pad.left, s.w, pad.mode);
    let edges: Vec<(usize, Option<usize>)> = xs
        .iter()
        .enumerate()
        .filter(|(ox, _)| *ox < pad.left || *ox >= pad.left + s.w)
        .map(|(ox, sx)| (ox, *sx))
        .collect();
    let mut out = vec![0.0f32; o.len()];
    let src = x.data();
    for (plane_in, plane_out) in src.chunks(s.plane()).zip(out.chunks_mut(o.plane())) {
        for (oy, sy) in ys.iter().enumerate() {
            let Some(sy) = sy else { continue };
            let row_in = &plane_in[sy * s.w..(sy + 1) * s.w];
            let row_out = &mut plane_out[oy * o.w..(oy + 1) * o.w];
            row_out[pad.left..pad.left + s.w].copy_from_slice(row_in);
            for &(ox, sx) in &edges {
                if let Some(sx) = sx {
                    row_out[ox] = row_in[sx];
                }
            }
        }
    }
    Tensor::from_vec(o, out)
}

/// Adjoint of [`pad`]: scatter-adds the padded gradient back onto `orig`.
pub fn pad_adjoint(g: &Tensor, pad: &Padding, orig: Shape) -> Tensor {
    let o = g.shape();
    debug_assert_eq!(pad.padded(orig), o);
    let ys = axis_map(o.h, pad.top, orig.h, pad.mode);
    let xs = axis_map(o.w, pad.left, orig.w, pad.mode);
    let edges: Vec<(usize, Option<usize>)> = xs
        .iter()
        .enumerate()
        .filter(|(ox, _)| *ox < pad.left || *ox >= pad.left + orig.w)
        .map(|(ox, sx)| (ox, *sx))
        .collect();
    let mut out = vec![0.0f32; orig.len()];
    for (plane_g, plane_out) in g.data().chunks(o.plane()).zip(out.chunks_mut(orig.plane())) {
        for (oy, sy) in ys.iter().enumerate() {
            let Some(sy) = sy else { continue };
            let row_g = &plane_g[oy * o.w..(oy + 1) * o.w];
            let row_out = &mut plane_out[sy * orig.w..(sy + 1) * orig.w];
            for (v, d) in row_g[pad.left..pad.left + orig.w].iter().zip(row_out.iter_mut()) {
                *d += *v;
            }
            for &(ox, sx) in &edges {
                if let Some(sx) = sx {
                    row_out[sx] += row_g[ox];
                }
            }
        }
    }
    Tensor::from_vec(orig, out)
}

/// Geometry of a valid (unpadded) strided convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvGeom {
    pub input: Shape,
    pub kernel: Shape,
    pub stride: usize,
}

impl ConvGeom {
    pub fn new(input: Shape, kernel: Shape, stride: usize) -> Self {
        assert!(stride >= 1);
        assert_eq!(
            input.c, kernel.c,
            "conv input has {} channels, kernel expects {}",
            input.c, kernel.c
        );
        assert!(
            input.h >= kernel.h && input.w >= kernel.w,
            "conv input {} smaller than kernel {}",
            input,
            kernel
        );
        Self {
            input,
            kernel,
            stride,
        }
    }

    pub fn output(&self) -> Shape {
        Shape::new(
            self.input.n,
            self.kernel.n,
            (self.input.h - self.kernel.h) / self.stride + 1,
            (self.input.w - self.kernel.w) / self.stride + 1,
        )
    }

    /// Rows of the unfolded patch matrix.
    fn patch(&self) -> usize {
        self.kernel.c * self.kernel.h * self.kernel.w
    }
}

/// Input offset (within one channel plane) read by every kernel tap at every
/// output pixel, laid out `[tap][pixel]`.
fn tap_offsets(g: &ConvGeom) -> Vec<u32> {
    let s = g.input;
    let o = g.output();
    let mut off = Vec::with_capacity(g.kernel.h * g.kernel.w * o.h * o.w);
    for ky in 0..g.kernel.h {
        for kx in 0..g.kernel.w {
            for oy in 0..o.h {
                let row = (oy * g.stride + ky) * s.w + kx;
                for ox in 0..o.w {
                    off.push((row + ox * g.stride) as u32);
                }
            }
        }
    }
    off
}

/// Items are processed in chunks so one gemm covers several of them; this
/// bounds the unfolded buffer.
const COL_BUDGET: usize = 1 << 21;

struct Chunking {
    patch: usize,
    ncol: usize,
    taps: usize,
    ow: usize,
    row_copy: bool,
    per_chunk: usize,
    off: Vec<u32>,
}

impl Chunking {
    fn new(g: &ConvGeom) -> Self {
        assert!(g.input.plane() <= u32::MAX as usize);
        let o = g.output();
        let patch = g.patch();
        let ncol = o.h * o.w;
        Self {
            patch,
            ncol,
            taps: g.kernel.h * g.kernel.w,
            ow: o.w,
            row_copy: g.stride == 1 && o.w >= 16,
            per_chunk: (COL_BUDGET / (patch * ncol).max(1)).clamp(1, g.input.n.max(1)),
            off: tap_offsets(g),
        }
    }

    fn chunks(&self, n: usize) -> impl Iterator<Item = (usize, usize)> {
        let per = self.per_chunk;
        (0..n).step_by(per).map(move |s| (s, per.min(n - s)))
    }

    /// Unfolds items `start..start+count` of `x` into `col` (patch × count·ncol).
    fn im2col(&self, x: &[f32], g: &ConvGeom, start: usize, count: usize, col: &mut [f32]) {
        let (plane, item) = (g.input.plane(), g.input.item());
        let ld = count * self.ncol;
        for k in 0..count {
            let xi = &x[(start + k) * item..(start + k + 1) * item];
            for c in 0..g.input.c {
                let p = &xi[c * plane..(c + 1) * plane];
                for t in 0..self.taps {
                    let row = c * self.taps + t;
                    let dst = &mut col[row * ld + k * self.ncol..row * ld + (k + 1) * self.ncol];
                    let src = &self.off[t * self.ncol..(t + 1) * self.ncol];
                    if self.row_copy {
                        // rows of the output read contiguous input runs
                        for (d, r) in dst.chunks_exact_mut(self.ow).zip(src.chunks_exact(self.ow)) {
                            let i = r[0] as usize;
                            d.copy_from_slice(&p[i..i + self.ow]);
                        }
                        continue;
                    }
                    for (d, &i) in dst.iter_mut().zip(src) {
                        // SAFETY: offsets come from tap_offsets and lie inside one plane.
                        *d = unsafe { *p.get_unchecked(i as usize) };
                    }
                }
            }
        }
    }

    fn col2im_add(&self, col: &[f32], g: &ConvGeom, start: usize, count: usize, x: &mut [f32]) {
        let (plane, item) = (g.input.plane(), g.input.item());
        let ld = count * self.ncol;
        for k in 0..count {
            let xi = &mut x[(start + k) * item..(start + k + 1) * item];
            for c in 0..g.input.c {
                let p = &mut xi[c * plane..(c + 1) * plane];
                for t in 0..self.taps {
                    let row = c * self.taps + t;
                    let src = &col[row * ld + k * self.ncol..row * ld + (k + 1) * self.ncol];
                    let idx = &self.off[t * self.ncol..(t + 1) * self.ncol];
                    for (v, &i) in src.iter().zip(idx) {
                        // SAFETY: as in im2col.
                        unsafe { *p.get_unchecked_mut(i as usize) += *v };
                    }
                }
            }
        }
    }
}

thread_local! {
    static SCRATCH: RefCell<Vec<Vec<f32>>> = const { RefCell::new(Vec::new()) };
}

/// Reusable buffer of at least `len` floats with unspecified contents.
fn scratch(len: usize) -> Vec<f32> {
    let mut v = SCRATCH.with(|s| s.borrow_mut().pop()).unwrap_or_default();
    if v.len() < len {
        v.resize(len, 0.0);
    }
    v
}

fn release(v: Vec<f32>) {
    SCRATCH.with(|s| {
        let mut s = s.borrow_mut();
        if s.len() < 4 {
            s.push(v);
        }
    });
}

/// Copies items `start..start+count` of an NCHW buffer with `c` channels of
/// `ncol` pixels into a `c × count·ncol` matrix.
fn gather_items(y: &[f32], c: usize, ncol: usize, start: usize, count: usize, out: &mut [f32]) {
    let ld = count * ncol;
    for k in 0..count {
        for ch in 0..c {
            let src = &y[((start + k) * c + ch) * ncol..][..ncol];
            out[ch * ld + k * ncol..][..ncol].copy_from_slice(src);
        }
    }
}

/// Inverse of [`gather_items`].
fn scatter_items(m: &[f32], c: usize, ncol: usize, start: usize, count: usize, y: &mut [f32]) {
    let ld = count * ncol;
    for k in 0..count {
        for ch in 0..c {
            let dst = &mut y[((start + k) * c + ch) * ncol..][..ncol];
            dst.copy_from_slice(&m[ch * ld + k * ncol..][..ncol]);
        }
    }
}

/// C (m×n, row stride rsc) = alpha·A·B + beta·C with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    beta: f32,
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v = if beta == 0.0 { 0.0 } else { *v * beta };
        }
        return;
    }
    // Bounds of the strided views are checked by the callers' shapes.
    debug_assert!(c.len() >= m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Valid strided cross-correlation: `y[n,o] = Σ_c w[o,c] ⋆ x[n,c]`.
pub fn conv2d(x: &Tensor, w: &Tensor, stride: usize) -> Tensor {
    let g = ConvGeom::new(x.shape(), w.shape(), stride);
    let o = g.output();
    let ch = Chunking::new(&g);
    let mut out = vec![0.0f32; o.len()];
    let mut col = scratch(ch.patch * ch.ncol * ch.per_chunk);
    let mut tmp = scratch(o.c * ch.ncol * ch.per_chunk);
    for (start, count) in ch.chunks(o.n) {
        let ld = count * ch.ncol;
        ch.im2col(x.data(), &g, start, count, &mut col);
        gemm(o.c, ch.patch, ld, w.data(), ch.patch as isize, 1, &col, ld as isize, 1, 0.0, &mut tmp);
        scatter_items(&tmp, o.c, ch.ncol, start, count, &mut out);
    }
    release(col);
    release(tmp);
    Tensor::from_vec(o, out)
}

/// Gradient of [`conv2d`] with respect to its input (transposed convolution).
pub fn conv2d_input_grad(gy: &Tensor, w: &Tensor, stride: usize, input: Shape) -> Tensor {
    let g = ConvGeom::new(input, w.shape(), stride);
    let o = g.output();
    assert_eq!(gy.shape(), o, "conv transpose gradient shape");
    let ch = Chunking::new(&g);
    let mut out = vec![0.0f32; input.len()];
    let mut col = scratch(ch.patch * ch.ncol * ch.per_chunk);
    let mut gyc = scratch(o.c * ch.ncol * ch.per_chunk);
    for (start, count) in ch.chunks(o.n) {
        let ld = count * ch.ncol;
        gather_items(gy.data(), o.c, ch.ncol, start, count, &mut gyc);
        gemm(ch.patch, o.c, ld, w.data(), 1, ch.patch as isize, &gyc, ld as isize, 1, 0.0, &mut col);
        ch.col2im_add(&col, &g, start, count, &mut out);
    }
    release(col);
    release(gyc);
    Tensor::from_vec(input, out)
}

/// Gradient of [`conv2d`] with respect to its kernel.
pub fn conv2d_weight_grad(x: &Tensor, gy: &Tensor, stride: usize, kernel: Shape) -> Tensor {
    let g = ConvGeom::new(x.shape(), kernel, stride);
    let o = g.output();
    assert_eq!(gy.shape(), o, "conv weight gradient shape");
    let ch = Chunking::new(&g);
    let mut out = vec![0.0f32; kernel.len()];
    let mut col = scratch(ch.patch * ch.ncol * ch.per_chunk);
    let mut gyc = scratch(o.c * ch.ncol * ch.per_chunk);
    for (start, count) in ch.chunks(o.n) {
        let ld = count * ch.ncol;
        ch.im2col(x.data(), &g, start, count, &mut col);
        gather_items(gy.data(), o.c, ch.ncol, start, count, &mut gyc);
        // out (co × patch) += gy (co × ld) · colᵀ (ld × patch)
        gemm(o.c, ld, ch.patch, &gyc, ld as isize, 1, &col, 1, ld as isize, 1.0, &mut out);
    }
    release(col);
    release(gyc);
    Tensor::from_vec(kernel, out)
}

/// Taps of the half-pixel bilinear ×2 upsampler along one axis.
fn upsample_taps(n: usize, wrap: bool) -> Vec<[(usize, f32); 2]> {
    let nb = |k: usize, d: isize| -> usize {
        let j = k as isize + d;
        if wrap {
            j.rem_euclid(n as isize) as usize
        } else {
            j.clamp(0, n as isize - 1) as usize
        }
    };
    (0..2 * n)
        .map(|o| {
            let k = o / 2;
            let d = if o % 2 == 0 { -1 } else { 1 };
            [(k, 0.75), (nb(k, d), 0.25)]
        })
        .collect()
}

/// Bilinear ×2 upsampling with half-pixel centres; edges clamp, or wrap when `wrap`.
pub fn upsample2(x: &Tensor, wrap: bool) -> Tensor {
    let s = x.shape();
    let tx = upsample_taps(s.w, wrap);
    let ty = upsample_taps(s.h, wrap);
    let (h2, w2) = (2 * s.h, 2 * s.w);
    let o = s.with_hw(h2, w2);
    let mut out = vec![0.0f32; o.len()];
    let mut tmp = vec![0.0f32; s.h * w2];
    for (pi, po) in x.data().chunks(s.plane()).zip(out.chunks_mut(o.plane())) {
        for y in 0..s.h {
            let row = &pi[y * s.w..(y + 1) * s.w];
            for (ox, taps) in tx.iter().enumerate() {
                tmp[y * w2 + ox] = taps[0].1 * row[taps[0].0] + taps[1].1 * row[taps[1].0];
            }
        }
        for (oy, taps) in ty.iter().enumerate() {
            let (r0, r1) = (taps[0].0 * w2, taps[1].0 * w2);
            for ox in 0..w2 {
                po[oy * w2 + ox] = taps[0].1 * tmp[r0 + ox] + taps[1].1 * tmp[r1 + ox];
            }
        }
    }
    Tensor::from_vec(o, out)
}

/// Adjoint of [`upsample2`].
pub fn upsample2_adjoint(g: &Tensor, wrap: bool) -> Tensor {
    let o = g.shape();
    assert!(o.h % 2 == 0 && o.w % 2 == 0);
    let s = o.with_hw(o.h / 2, o.w / 2);
    let tx = upsample_taps(s.w, wrap);
    let ty = upsample_taps(s.h, wrap);
    let w2 = o.w;
    let mut out = vec![0.0f32; s.len()];
    let mut tmp = vec![0.0f32; s.h * w2];
    for (pg, po) in g.data().chunks(o.plane()).zip(out.chunks_mut(s.plane())) {
        tmp.iter_mut().for_each(|v| *v = 0.0);
        for (oy, taps) in ty.iter().enumerate() {
            let src = &pg[oy * w2..(oy + 1) * w2];
            for &(r, wt) in taps {
                for (t, v) in tmp[r * w2..(r + 1) * w2].iter_mut().zip(src) {
                    *t += wt * v;
                }
            }
        }
        for y in 0..s.h {
            let row = &mut po[y * s.w..(y + 1) * s.w];
            for (ox, taps) in tx.iter().enumerate() {
                let v = tmp[y * w2 + ox];
                row[taps[0].0] += taps[0].1 * v;
                row[taps[1].0] += taps[1].1 * v;
            }
        }
    }
    Tensor::from_vec(s, out)
}

/// Copies channels `start..start+len` of every batch item.
pub fn slice_channels(x: &Tensor, start: usize, len: usize) -> Tensor {
    let s = x.shape();
    assert!(start + len <= s.c);
    let o = s.with_c(len);
    let mut out = Vec::with_capacity(o.len());
    for item in x.data().chunks(s.item()) {
        out.extend_from_slice(&item[start * s.plane()..(start + len) * s.plane()]);
    }
    Tensor::from_vec(o, out)
}

/// Places `x` at channel offset `start` of a zero tensor with `total` channels.
pub fn embed_channels(x: &Tensor, start: usize, total: usize) -> Tensor {
    let s = x.shape();
    assert!(start + s.c <= total);
    let o = s.with_c(total);
    let mut out = vec![0.0f32; o.len()];
    for (item, dst) in x.data().chunks(s.item()).zip(out.chunks_mut(o.item())) {
        dst[start * s.plane()..(start + s.c) * s.plane()].copy_from_slice(item);
    }
    Tensor::from_vec(o, out)
}

pub fn cat_channels(parts: &[&Tensor]) -> Tensor {
    assert!(!parts.is_empty());
    let base = parts[0].shape();
    let total: usize = parts.iter().map(|p| p.shape().c).sum();
    let o = base.with_c(total);
    let mut out = Vec::with_capacity(o.len());
    for n in 0..base.n {
        for p in parts {
            let s = p.shape();
            assert_eq!(s.with_c(base.c), base, "cat_channels shape mismatch");
            out.extend_from_slice(&p.data()[n * s.item()..(n + 1) * s.item()]);
        }
    }
    Tensor::from_vec(o, out)
}

/// Places `x` at batch offset `start` of a zero tensor with `total` items.
pub fn embed_batch(x: &Tensor, start: usize, total: usize) -> Tensor {
    let s = x.shape();
    assert!(start + s.n <= total);
    let mut out = vec![0.0f32; s.item() * total];
    out[start * s.item()..(start + s.n) * s.item()].copy_from_slice(x.data());
    Tensor::from_vec(s.with_n(total), out)
}

/// Sums over batch and space, leaving `[1, C, 1, 1]`.
pub fn sum_to_channel(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = vec![0.0f32; s.c];
    for item in x.data().chunks(s.item()) {
        for (c, plane) in item.chunks(s.plane()).enumerate() {
            out[c] += plane.iter().sum::<f32>();
        }
    }
    Tensor::from_vec(Shape::new(1, s.c, 1, 1), out)
}

/// Broadcasts a `[1, C, 1, 1]` tensor to `shape`.
pub fn broadcast_channel(b: &Tensor, shape: Shape) -> Tensor {
    assert_eq!(b.shape(), Shape::new(1, shape.c, 1, 1));
    let mut out = Vec::with_capacity(shape.len());
    for _ in 0..shape.n {
        for &v in b.data() {
            out.extend(std::iter::repeat_n(v, shape.plane()));
        }
    }
    Tensor::from_vec(shape, out)
}

/// Spatial mean per (n, c), leaving `[N, C, 1, 1]`.
pub fn spatial_mean(x: &Tensor) -> Tensor {
    let s = x.shape();
    let inv = 1.0 / s.plane() as f32;
    let out = x
        .data()
        .chunks(s.plane())
        .map(|p| p.iter().sum::<f32>() * inv)
        .collect();
    Tensor::from_vec(s.with_hw(1, 1), out)
}

/// Adjoint of [`spatial_mean`].
pub fn spatial_mean_adjoint(g: &Tensor, h: usize, w: usize) -> Tensor {
    let inv = 1.0 / (h * w) as f32;
    let o = g.shape().with_hw(h, w);
    let mut out = Vec::with_capacity(o.len());
    for &v in g.data() {
        out.extend(std::iter::repeat_n(v * inv, h * w));
    }
    Tensor::from_vec(o, out)
}

/// Sums everything belonging to sample `b % groups`; output `[groups, 1, 1, 1]`.
///
/// Batches are laid out time-major, so item `b` belongs to sample `b % groups`.
pub fn sum_per_sample(x: &Tensor, groups: usize) -> Tensor {
    let s = x.shape();
    assert!(groups > 0 && s.n % groups == 0);
    let mut out = vec![0.0f32; groups];
    for (b, item) in x.data().chunks(s.item()).enumerate() {
        out[b % groups] += item.iter().sum::<f32>();
    }
    Tensor::from_vec(Shape::new(groups, 1, 1, 1), out)
}

/// Adjoint of [`sum_per_sample`].
pub fn broadcast_per_sample(g: &Tensor, shape: Shape) -> Tensor {
    let groups = g.shape().n;
    assert_eq!(g.len(), groups);
    let mut out = Vec::with_capacity(shape.len());
    for b in 0..shape.n {
        out.extend(std::iter::repeat_n(g.data()[b % groups], shape.item()));
    }
    Tensor::from_vec(shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(s: Shape) -> Tensor {
        Tensor::from_vec(s, (0..s.len()).map(|i| (i as f32 * 0.37).sin()).collect())
    }

    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| *x as f64 * *y as f64)
            .sum()
    }

    #[test]
    fn reflect_padding_mirrors_without_edge_repeat() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![1.0, 2.0, 3.0]);
        let p = Padding {
            top: 0,
            bottom: 0,
            left: 2,
            right: 2,
            mode: PadMode::Reflect,
        };
        assert_eq!(pad(&x, &p).data(), &[3.0, 2.0, 1.0, 2.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn circular_padding_wraps() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![1.0, 2.0, 3.0]);
        let p = Padding {
            top: 0,
            bottom: 0,
            left: 1,
            right: 1,
            mode: PadMode::Circular,
        };
        assert_eq!(pad(&x, &p).data(), &[3.0, 1.0, 2.0, 3.0, 1.0]);
    }

    #[test]
    fn direct_convolution_matches_naive_loop() {
        let x = ramp(Shape::new(2, 3, 7, 6));
        let w = ramp(Shape::new(4, 3, 3, 3));
        for stride in [1, 2] {
            let y = conv2d(&x, &w, stride);
            let o = y.shape();
            for n in 0..o.n {
                for co in 0..o.c {
                    for oy in 0..o.h {
                        for ox in 0..o.w {
                            let mut acc = 0.0f32;
                            for ci in 0..3 {
                                for ky in 0..3 {
                                    for kx in 0..3 {
                                        acc += w.at(co, ci, ky, kx)
                                            * x.at(n, ci, oy * stride + ky, ox * stride + kx);
                                    }
                                }
                            }
                            assert!((acc - y.at(n, co, oy, ox)).abs() < 1e-4);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn adjoint_pairs_satisfy_inner_product_identity() {
        // <A x, y> = <x, Aᵀ y> for each linear kernel pair.
        let x = ramp(Shape::new(2, 3, 6, 5));
        let w = ramp(Shape::new(4, 3, 3, 3));
        for stride in [1, 2] {
            let y = conv2d(&x, &w, stride);
            let gy = y.map(|v| v.cos());
            let gx = conv2d_input_grad(&gy, &w, stride, x.shape());
            assert!((dot(&y.map(|v| v), &gy) - dot(&x, &gx)).abs() < 1e-3);
            let gw = conv2d_weight_grad(&x, &gy, stride, w.shape());
            assert!((dot(&y, &gy) - dot(&w, &gw)).abs() < 1e-3);
        }
        for mode in [PadMode::Zero, PadMode::Reflect, PadMode::Circular] {
            let p = Padding {
                top: 1,
                bottom: 2,
                left: 2,
                right: 1,
                mode,
            };
            let px = pad(&x, &p);
            let g = px.map(|v| (3.0 * v).cos());
            let gx = pad_adjoint(&g, &p, x.shape());
            assert!((dot(&px, &g) - dot(&x, &gx)).abs() < 1e-3);
        }
        for wrap in [false, true] {
            let u = upsample2(&x, wrap);
            let g = u.map(|v| (2.0 * v).sin());
            let gx = upsample2_adjoint(&g, wrap);
            assert!((dot(&u, &g) - dot(&x, &gx)).abs() < 1e-3);
        }
    }

    #[test]
    fn upsample_preserves_constants() {
        let x = Tensor::full(Shape::new(1, 2, 3, 4), 0.4);
        for wrap in [false, true] {
            let u = upsample2(&x, wrap);
            assert_eq!(u.shape(), Shape::new(1, 2, 6, 8));
            assert!(u.data().iter().all(|v| (v - 0.4).abs() < 1e-7));
        }
    }

    #[test]
    fn per_sample_sum_groups_time_major_items() {
        let x = Tensor::from_vec(Shape::new(4, 1, 1, 2), (0..8).map(|i| i as f32).collect());
        // items 0,2 -> sample 0; items 1,3 -> sample 1
        assert_eq!(sum_per_sample(&x, 2).data(), &[0. + 1. + 4. + 5., 2. + 3. + 6. + 7.]);
    }
}
