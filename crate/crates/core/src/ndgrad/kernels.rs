//! 3D convolution, transposed convolution and pooling kernels on `[C, D, H, W]`
//! tensors. Each kernel parallelizes over one channel axis through [`Exec`];
//! per-element summation order is fixed so every schedule is bit-identical.

use super::Tensor;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Output extent of a strided, zero-padded convolution.
pub fn conv_out_len(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (n + 2 * pad).checked_sub(k).map(|span| span / stride + 1)
}

/// Input extent that a transposed convolution maps `n` back to.
pub fn deconv_out_len(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    ((n - 1) * stride + k).checked_sub(2 * pad).filter(|&m| m > 0)
}

/// Range of output positions `o` with `0 <= o*s + k - p < n`.
#[inline]
fn valid_range(out_len: usize, n: usize, s: usize, k: usize, p: usize) -> (usize, usize) {
    let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
    let hi = if n + p > k { ((n + p - k - 1) / s + 1).min(out_len) } else { 0 };
    (lo, hi.max(lo))
}

struct Geometry {
    ci: usize,
    k: usize,
    ins: [usize; 3],
    outs: [usize; 3],
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn in_len(&self) -> usize {
        self.ins.iter().product()
    }
    fn out_len(&self) -> usize {
        self.outs.iter().product()
    }
}

fn kernel_dims(w: &Tensor) -> Result<(usize, usize, usize)> {
    match w.shape()[..] {
        [a, b, k0, k1, k2] if k0 == k1 && k1 == k2 => Ok((a, b, k0)),
        _ => Err(Error::Shape(format!("weights must be [A, B, k, k, k], got {:?}", w.shape()))),
    }
}

fn check_bias(bias: Option<&Tensor>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.shape() != [channels] => Err(Error::Shape(format!(
            "bias shape {:?} does not match {channels} output channels",
            b.shape()
        ))),
        _ => Ok(()),
    }
}

/// Cross-correlation `y[o, q] = b[o] + sum_{i, k} w[o, i, k] * x[i, q*s + k - p]`.
pub fn conv3d_forward(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
    exec: Exec,
) -> Result<Tensor> {
    let (ci, ins) = x.dims4("conv3d input")?;
    let (co, wci, k) = kernel_dims(w)?;
    if wci != ci {
        return Err(Error::Shape(format!("conv3d: input has {ci} channels, weights expect {wci}")));
    }
    if stride == 0 {
        return Err(Error::Shape("conv3d: stride must be positive".into()));
    }
    check_bias(bias, co)?;
    let mut outs = [0; 3];
    for a in 0..3 {
        outs[a] = conv_out_len(ins[a], k, stride, pad)
            .ok_or_else(|| Error::Shape(format!("conv3d: kernel {k} larger than padded input")))?;
    }
    let g = Geometry { ci, k, ins, outs, stride, pad };
    if co < DIRECT_BELOW {
        let mut out = vec![0.0; co * g.out_len()];
        exec.for_each_chunk(&mut out, g.out_len(), |oc, y| {
            if let Some(b) = bias {
                y.fill(b.data()[oc]);
            }
            conv_accumulate(&g, x.data(), w.data(), oc, y);
        });
        return Tensor::new(vec![co, outs[0], outs[1], outs[2]], out);
    }
    let plane = outs[1] * outs[2];
    let rows = ci * k * k * k;
    let init: Vec<f64> = bias.map_or_else(|| vec![0.0; co], |b| b.data().to_vec());
    let mut out = vec![0.0; co * g.out_len()];
    let mut cols = Vec::new();
    for (d0, d1) in slabs(&g) {
        let q = im2col(&g, x.data(), d0, d1, &mut cols);
        let blocks = exec.map(co.div_ceil(ROW_GROUP), |grp| {
            let o0 = grp * ROW_GROUP;
            let o1 = (o0 + ROW_GROUP).min(co);
            let mut y = vec![0.0; (o1 - o0) * q];
            gemm_rows(&w.data()[o0 * rows..o1 * rows], rows, &cols, q, &init[o0..o1], &mut y);
            y
        });
        for (grp, y) in blocks.iter().enumerate() {
            for (r, yr) in y.chunks(q).enumerate() {
                let oc = grp * ROW_GROUP + r;
                out[oc * g.out_len() + d0 * plane..][..q].copy_from_slice(yr);
            }
        }
    }
    Tensor::new(vec![co, outs[0], outs[1], outs[2]], out)
}

/// Adds the contributions of every input channel to output channel `oc`
/// directly from the input, without lowering it to patches.
fn conv_accumulate(g: &Geometry, x: &[f64], w: &[f64], oc: usize, y: &mut [f64]) {
    let [_, ih_n, iw_n] = g.ins;
    let [od_n, oh_n, ow_n] = g.outs;
    let (k, s, p) = (g.k, g.stride, g.pad);
    let k3 = k * k * k;
    for ic in 0..g.ci {
        let xc = &x[ic * g.in_len()..(ic + 1) * g.in_len()];
        let wbase = (oc * g.ci + ic) * k3;
        for kd in 0..k {
            let (d0, d1) = valid_range(od_n, g.ins[0], s, kd, p);
            for kh in 0..k {
                let (h0, h1) = valid_range(oh_n, ih_n, s, kh, p);
                for kw in 0..k {
                    let (w0, w1) = valid_range(ow_n, iw_n, s, kw, p);
                    if w0 >= w1 {
                        continue;
                    }
                    let wv = w[wbase + (kd * k + kh) * k + kw];
                    for od in d0..d1 {
                        let id = od * s + kd - p;
                        for oh in h0..h1 {
                            let ih = oh * s + kh - p;
                            let yrow = &mut y[(od * oh_n + oh) * ow_n..][w0..w1];
                            let xrow = &xc[(id * ih_n + ih) * iw_n..];
                            if s == 1 {
                                let xs = &xrow[w0 + kw - p..w1 + kw - p];
                                for (yv, xv) in yrow.iter_mut().zip(xs) {
                                    *yv += wv * xv;
                                }
                            } else {
                                for (j, yv) in yrow.iter_mut().enumerate() {
                                    *yv += wv * xrow[(w0 + j) * s + kw - p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Convolutions with fewer output channels than this skip the patch matrix,
/// which would be read only once per output channel.
const DIRECT_BELOW: usize = 3;
/// Patch matrices hold at most this many values; larger outputs are lowered
/// in slabs of whole output planes.
const COLS_BUDGET: usize = 1 << 18;
/// Output channels computed together so each patch row is loaded once.
const ROW_GROUP: usize = 4;
/// Output positions accumulated together in registers.
const Q_BLOCK: usize = 8;

/// Ranges of output planes whose patch matrix fits [`COLS_BUDGET`].
fn slabs(g: &Geometry) -> Vec<(usize, usize)> {
    let per_plane = g.ci * g.k * g.k * g.k * g.outs[1] * g.outs[2];
    let step = (COLS_BUDGET / per_plane.max(1)).max(1);
    (0..g.outs[0]).step_by(step).map(|d0| (d0, (d0 + step).min(g.outs[0]))).collect()
}

/// Lowers the input patches of output planes `d0..d1` into `cols`, one row
/// per `(ic, kd, kh, kw)` and one column per output position; padding reads
/// as zero. Returns the column count.
fn im2col(g: &Geometry, x: &[f64], d0: usize, d1: usize, cols: &mut Vec<f64>) -> usize {
    let [id_n, ih_n, iw_n] = g.ins;
    let [od_n, oh_n, ow_n] = g.outs;
    let (k, s, p) = (g.k, g.stride, g.pad);
    let q = (d1 - d0) * oh_n * ow_n;
    cols.clear();
    cols.resize(g.ci * k * k * k * q, 0.0);
    let mut row = 0;
    for ic in 0..g.ci {
        let xc = &x[ic * g.in_len()..(ic + 1) * g.in_len()];
        for kd in 0..k {
            let (a0, a1) = valid_range(od_n, id_n, s, kd, p);
            let (a0, a1) = (a0.max(d0), a1.min(d1));
            for kh in 0..k {
                let (h0, h1) = valid_range(oh_n, ih_n, s, kh, p);
                for kw in 0..k {
                    let (w0, w1) = valid_range(ow_n, iw_n, s, kw, p);
                    let dst = &mut cols[row * q..(row + 1) * q];
                    row += 1;
                    if w0 >= w1 {
                        continue;
                    }
                    for od in a0..a1 {
                        let id = od * s + kd - p;
                        for oh in h0..h1 {
                            let ih = oh * s + kh - p;
                            let drow = &mut dst[((od - d0) * oh_n + oh) * ow_n..][w0..w1];
                            let xrow = &xc[(id * ih_n + ih) * iw_n..];
                            if s == 1 {
                                drow.copy_from_slice(&xrow[w0 + kw - p..w1 + kw - p]);
                            } else {
                                for (j, v) in drow.iter_mut().enumerate() {
                                    *v = xrow[(w0 + j) * s + kw - p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    q
}

/// `y[r, q] = init[r] + sum_j w[r, j] * cols[j, q]`, summed in ascending `j`
/// for up to [`ROW_GROUP`] rows at once.
fn gemm_rows(w: &[f64], rows: usize, cols: &[f64], q: usize, init: &[f64], y: &mut [f64]) {
    match init.len() {
        1 => gemm_block::<1>(w, rows, cols, q, init, y),
        2 => gemm_block::<2>(w, rows, cols, q, init, y),
        3 => gemm_block::<3>(w, rows, cols, q, init, y),
        _ => gemm_block::<ROW_GROUP>(w, rows, cols, q, init, y),
    }
}

fn gemm_block<const R: usize>(w: &[f64], rows: usize, cols: &[f64], q: usize, init: &[f64], y: &mut [f64]) {
    let full = q - q % Q_BLOCK;
    for qb in (0..full).step_by(Q_BLOCK) {
        let mut acc = [[0.0; Q_BLOCK]; R];
        for r in 0..R {
            acc[r] = [init[r]; Q_BLOCK];
        }
        for j in 0..rows {
            let c: &[f64; Q_BLOCK] = cols[j * q + qb..][..Q_BLOCK].try_into().unwrap();
            for r in 0..R {
                let wv = w[r * rows + j];
                for i in 0..Q_BLOCK {
                    acc[r][i] += wv * c[i];
                }
            }
        }
        for r in 0..R {
            y[r * q + qb..][..Q_BLOCK].copy_from_slice(&acc[r]);
        }
    }
    for qi in full..q {
        for r in 0..R {
            let mut a = init[r];
            for j in 0..rows {
                a += w[r * rows + j] * cols[j * q + qi];
            }
            y[r * q + qi] = a;
        }
    }
}

/// Gradient of [`conv3d_forward`] with respect to its input: the adjoint map
/// from `[C_out, ...]` back to `[C_in, in_spatial]`.
pub fn conv3d_backward_input(
    gy: &Tensor,
    w: &Tensor,
    stride: usize,
    pad: usize,
    in_spatial: [usize; 3],
    exec: Exec,
) -> Result<Tensor> {
    let (co, outs) = gy.dims4("conv3d output gradient")?;
    let (wco, ci, k) = kernel_dims(w)?;
    if wco != co {
        return Err(Error::Shape(format!("conv3d adjoint: gradient has {co} channels, weights {wco}")));
    }
    for a in 0..3 {
        if conv_out_len(in_spatial[a], k, stride, pad) != Some(outs[a]) {
            return Err(Error::Shape(format!(
                "conv3d adjoint: input extents {in_spatial:?} do not produce {outs:?}"
            )));
        }
    }
    if stride == 1 && pad < k {
        // A stride-1 adjoint is a convolution of `gy` with the spatially
        // flipped, channel-transposed kernel.
        let k3 = k * k * k;
        let mut flipped = vec![0.0; ci * co * k3];
        for (oc, wo) in w.data().chunks(ci * k3).enumerate() {
            for (ic, wk) in wo.chunks(k3).enumerate() {
                let dst = &mut flipped[(ic * co + oc) * k3..][..k3];
                for (d, v) in dst.iter_mut().zip(wk.iter().rev()) {
                    *d = *v;
                }
            }
        }
        let flipped = Tensor::new(vec![ci, co, k, k, k], flipped)?;
        return conv3d_forward(gy, &flipped, None, 1, k - 1 - pad, exec);
    }
    let g = Geometry { ci, k, ins: in_spatial, outs, stride, pad };
    let [_, ih_n, iw_n] = g.ins;
    let [od_n, oh_n, ow_n] = g.outs;
    let (s, p, k3) = (stride, pad, k * k * k);
    let gyd = gy.data();
    let wd = w.data();
    let mut out = vec![0.0; ci * g.in_len()];
    exec.for_each_chunk(&mut out, g.in_len(), |ic, gx| {
        for oc in 0..co {
            let gyc = &gyd[oc * g.out_len()..(oc + 1) * g.out_len()];
            let wbase = (oc * ci + ic) * k3;
            for kd in 0..k {
                let (d0, d1) = valid_range(od_n, g.ins[0], s, kd, p);
                for kh in 0..k {
                    let (h0, h1) = valid_range(oh_n, ih_n, s, kh, p);
                    for kw in 0..k {
                        let (w0, w1) = valid_range(ow_n, iw_n, s, kw, p);
                        if w0 >= w1 {
                            continue;
                        }
                        let wv = wd[wbase + (kd * k + kh) * k + kw];
                        for od in d0..d1 {
                            let id = od * s + kd - p;
                            for oh in h0..h1 {
                                let ih = oh * s + kh - p;
                                let grow = &gyc[(od * oh_n + oh) * ow_n..][w0..w1];
                                let xrow = &mut gx[(id * ih_n + ih) * iw_n..];
                                if s == 1 {
                                    let xs = &mut xrow[w0 + kw - p..w1 + kw - p];
                                    for (xv, gv) in xs.iter_mut().zip(grow) {
                                        *xv += wv * gv;
                                    }
                                } else {
                                    for (j, gv) in grow.iter().enumerate() {
                                        xrow[(w0 + j) * s + kw - p] += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor::new(vec![ci, in_spatial[0], in_spatial[1], in_spatial[2]], out)
}

/// Gradient of [`conv3d_forward`] with respect to its weights:
/// `gw[o, i, k] = sum_q gy[o, q] * x[i, q*s + k - p]`.
pub fn conv3d_backward_weight(
    x: &Tensor,
    gy: &Tensor,
    stride: usize,
    pad: usize,
    k: usize,
    exec: Exec,
) -> Result<Tensor> {
    let (ci, ins) = x.dims4("conv3d input")?;
    let (co, outs) = gy.dims4("conv3d output gradient")?;
    for a in 0..3 {
        if conv_out_len(ins[a], k, stride, pad) != Some(outs[a]) {
            return Err(Error::Shape(format!(
                "conv3d weight gradient: {ins:?} does not produce {outs:?}"
            )));
        }
    }
    let g = Geometry { ci, k, ins, outs, stride, pad };
    if co < DIRECT_BELOW {
        let mut out = vec![0.0; co * ci * k * k * k];
        exec.for_each_chunk(&mut out, ci * k * k * k, |oc, gw| {
            weight_grad_direct(&g, x.data(), gy.data(), oc, gw);
        });
        return Tensor::new(vec![co, ci, k, k, k], out);
    }
    let plane = outs[1] * outs[2];
    let rows = ci * k * k * k;
    let gyd = gy.data();
    let mut out = vec![0.0; co * rows];
    let mut cols = Vec::new();
    for (d0, d1) in slabs(&g) {
        let q = im2col(&g, x.data(), d0, d1, &mut cols);
        let blocks = exec.map(co, |oc| {
            let gyr = &gyd[oc * g.out_len() + d0 * plane..][..q];
            (0..rows).map(|j| dot(gyr, &cols[j * q..(j + 1) * q])).collect::<Vec<f64>>()
        });
        for (gw, part) in out.chunks_mut(rows).zip(blocks) {
            gw.iter_mut().zip(part).for_each(|(a, b)| *a += b);
        }
    }
    Tensor::new(vec![co, ci, k, k, k], out)
}

fn weight_grad_direct(g: &Geometry, xd: &[f64], gyd: &[f64], oc: usize, gw: &mut [f64]) {
    let [_, ih_n, iw_n] = g.ins;
    let [od_n, oh_n, ow_n] = g.outs;
    let (k, s, p) = (g.k, g.stride, g.pad);
    let k3 = k * k * k;
    let gyc = &gyd[oc * g.out_len()..(oc + 1) * g.out_len()];
    for ic in 0..g.ci {
        let xc = &xd[ic * g.in_len()..(ic + 1) * g.in_len()];
        for kd in 0..k {
            let (d0, d1) = valid_range(od_n, g.ins[0], s, kd, p);
            for kh in 0..k {
                let (h0, h1) = valid_range(oh_n, ih_n, s, kh, p);
                for kw in 0..k {
                    let (w0, w1) = valid_range(ow_n, iw_n, s, kw, p);
                    let mut acc = 0.0;
                    if w0 < w1 {
                        for od in d0..d1 {
                            let id = od * s + kd - p;
                            for oh in h0..h1 {
                                let ih = oh * s + kh - p;
                                let grow = &gyc[(od * oh_n + oh) * ow_n..][w0..w1];
                                let xrow = &xc[(id * ih_n + ih) * iw_n..];
                                if s == 1 {
                                    acc += dot(grow, &xrow[w0 + kw - p..w1 + kw - p]);
                                } else {
                                    for (j, gv) in grow.iter().enumerate() {
                                        acc += gv * xrow[(w0 + j) * s + kw - p];
                                    }
                                }
                            }
                        }
                    }
                    gw[ic * k3 + (kd * k + kh) * k + kw] = acc;
                }
            }
        }
    }
}

/// Dot product with four interleaved partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Per-channel sums of `[C, ...]`, the bias gradient.
pub fn channel_sums(gy: &Tensor) -> Tensor {
    let c = gy.shape()[0];
    let per = gy.len() / c;
    let sums = gy.data().chunks(per).map(|ch| ch.iter().sum()).collect();
    Tensor::new(vec![c], sums).expect("nonempty channel sums")
}

/// Transposed convolution with weights `[C_in, C_out, k, k, k]`: the forward
/// map equals the input-gradient pass of a convolution with the same weights.
pub fn deconv3d_forward(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
    exec: Exec,
) -> Result<Tensor> {
    let (_, ins) = x.dims4("deconv3d input")?;
    let (_, co, k) = kernel_dims(w)?;
    check_bias(bias, co)?;
    if stride == 0 {
        return Err(Error::Shape("deconv3d: stride must be positive".into()));
    }
    let mut outs = [0; 3];
    for a in 0..3 {
        outs[a] = deconv_out_len(ins[a], k, stride, pad)
            .ok_or_else(|| Error::Shape("deconv3d: padding consumes whole output".into()))?;
    }
    let mut y = conv3d_backward_input(x, w, stride, pad, outs, exec)?;
    if let Some(b) = bias {
        let per: usize = outs.iter().product();
        for (ch, bv) in y.data_mut().chunks_mut(per).zip(b.data()) {
            ch.iter_mut().for_each(|v| *v += bv);
        }
    }
    Ok(y)
}

/// 2x2x2 max pooling with stride 2. Returns the pooled tensor and, per output
/// element, the flat index of the winning input element. Ties go to the
/// lowest linear index.
pub fn maxpool3d(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (c, [d, h, w]) = x.dims4("maxpool3d input")?;
    if d % 2 != 0 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("maxpool3d needs even spatial dims, got {:?}", x.shape())));
    }
    let (pd, ph, pw) = (d / 2, h / 2, w / 2);
    let xd = x.data();
    let mut out = Vec::with_capacity(c * pd * ph * pw);
    let mut arg = Vec::with_capacity(out.capacity());
    for ch in 0..c {
        let base = ch * d * h * w;
        for od in 0..pd {
            for oh in 0..ph {
                for ow in 0..pw {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = base + ((2 * od + dz) * h + 2 * oh + dy) * w + 2 * ow + dx;
                                if xd[i] > best || best_i == usize::MAX {
                                    best = xd[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
    }
    Ok((Tensor::new(vec![c, pd, ph, pw], out)?, arg))
}

/// Scatters `x` into a zero tensor of `out_shape` at `indices` (one per element).
pub fn maxunpool3d(x: &Tensor, indices: &[usize], out_shape: &[usize]) -> Result<Tensor> {
    if indices.len() != x.len() {
        return Err(Error::Shape(format!(
            "maxunpool3d: {} indices for {} values",
            indices.len(),
            x.len()
        )));
    }
    let mut out = Tensor::zeros(out_shape);
    let n = out.len();
    let od = out.data_mut();
    for (&i, &v) in indices.iter().zip(x.data()) {
        if i >= n {
            return Err(Error::IndexRange(format!("unpool index {i} >= {n}")));
        }
        od[i] += v;
    }
    Ok(out)
}

/// Indices of the first voxel of every 2x2x2 window, for unpooling without
/// recorded switches.
pub fn corner_indices(channels: usize, pooled: [usize; 3]) -> Vec<usize> {
    let [pd, ph, pw] = pooled;
    let (h, w) = (2 * ph, 2 * pw);
    let full = 8 * pd * ph * pw;
    let mut idx = Vec::with_capacity(channels * pd * ph * pw);
    for ch in 0..channels {
        for od in 0..pd {
            for oh in 0..ph {
                for ow in 0..pw {
                    idx.push(ch * full + (2 * od * h + 2 * oh) * w + 2 * ow);
                }
            }
        }
    }
    idx
}
