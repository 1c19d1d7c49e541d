//! 2-D cross-correlation kernels (forward and the three backward passes).
//!
//! These are the hot loops of the whole crate. They work on `[C, H, W]`
//! tensors, accumulate each output element in a fixed serial order (so
//! results are bit-identical regardless of thread count), and parallelize
//! only over disjoint output planes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ndgrad::tensor::{Scalar, Tensor};

pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
    pub stride: usize,
    pub padding: usize,
}

pub fn geometry<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGeom> {
    let (c_in, h, w) = x.dims3("conv2d")?;
    let ws = weight.shape();
    if ws.len() != 4 || ws[2] != ws[3] {
        return Err(Error::bad_input("conv2d", format!("weight must be [Co,Ci,k,k], got {ws:?}")));
    }
    let (c_out, wc_in, k) = (ws[0], ws[1], ws[2]);
    if wc_in != c_in {
        return Err(Error::ShapeMismatch { op: "conv2d", lhs: x.shape().to_vec(), rhs: ws.to_vec() });
    }
    if k % 2 == 0 {
        return Err(Error::bad_input("conv2d", format!("kernel size {k} must be odd")));
    }
    if stride == 0 {
        return Err(Error::bad_input("conv2d", "stride must be >= 1"));
    }
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::bad_input(
            "conv2d",
            format!("input {h}x{w} with padding {padding} smaller than kernel {k}"),
        ));
    }
    let oh = (h + 2 * padding - k) / stride + 1;
    let ow = (w + 2 * padding - k) / stride + 1;
    Ok(ConvGeom { c_in, c_out, k, h, w, oh, ow, stride, padding })
}

fn pad_input<T: Scalar>(x: &Tensor<T>, g: &ConvGeom) -> Vec<T> {
    let (ph, pw) = (g.h + 2 * g.padding, g.w + 2 * g.padding);
    let mut xp = vec![T::zero(); g.c_in * ph * pw];
    let xd = x.data();
    for c in 0..g.c_in {
        for y in 0..g.h {
            let src = (c * g.h + y) * g.w;
            let dst = (c * ph + y + g.padding) * pw + g.padding;
            xp[dst..dst + g.w].copy_from_slice(&xd[src..src + g.w]);
        }
    }
    xp
}

/// Work estimate used to decide whether spawning rayon tasks is worth it.
fn macs(g: &ConvGeom) -> usize {
    g.c_out * g.c_in * g.k * g.k * g.oh * g.ow
}

const PAR_THRESHOLD: usize = 200_000;

/// Forward cross-correlation: `out[co,oy,ox] = b[co] + sum x[ci,oy*s-p+ky,...] * w[co,ci,ky,kx]`.
pub fn forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = geometry(x, weight, stride, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.c_out] {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                lhs: vec![g.c_out],
                rhs: b.shape().to_vec(),
            });
        }
    }
    let xp = pad_input(x, &g);
    let pw = g.w + 2 * g.padding;
    let wd = weight.data();
    let mut out = vec![T::zero(); g.c_out * g.oh * g.ow];

    let plane = g.oh * g.ow;
    let run = |co: usize, out_plane: &mut [T]| {
        let base = if let Some(b) = bias { b.data()[co] } else { T::zero() };
        out_plane.fill(base);
        for ci in 0..g.c_in {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let wv = wd[((co * g.c_in + ci) * g.k + ky) * g.k + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    for oy in 0..g.oh {
                        let xrow = (ci * (g.h + 2 * g.padding) + oy * g.stride + ky) * pw + kx;
                        let orow = oy * g.ow;
                        if g.stride == 1 {
                            let src = &xp[xrow..xrow + g.ow];
                            let dst = &mut out_plane[orow..orow + g.ow];
                            for (d, s) in dst.iter_mut().zip(src.iter()) {
                                *d = *d + wv * *s;
                            }
                        } else {
                            for ox in 0..g.ow {
                                out_plane[orow + ox] =
                                    out_plane[orow + ox] + wv * xp[xrow + ox * g.stride];
                            }
                        }
                    }
                }
            }
        }
    };

    if macs(&g) >= PAR_THRESHOLD {
        out.par_chunks_mut(plane).enumerate().for_each(|(co, p)| run(co, p));
    } else {
        for (co, p) in out.chunks_mut(plane).enumerate() {
            run(co, p);
        }
    }
    Ok(Tensor::from_vec(&[g.c_out, g.oh, g.ow], out))
}

/// Gradient w.r.t. the input.
pub fn backward_input<T: Scalar>(
    grad_out: &Tensor<T>,
    weight: &Tensor<T>,
    g: &ConvGeom,
) -> Tensor<T> {
    let pw = g.w + 2 * g.padding;
    let ph = g.h + 2 * g.padding;
    let wd = weight.data();
    let gd = grad_out.data();
    let mut dxp = vec![T::zero(); g.c_in * ph * pw];

    let run = |ci: usize, dplane: &mut [T]| {
        for co in 0..g.c_out {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let wv = wd[((co * g.c_in + ci) * g.k + ky) * g.k + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    for oy in 0..g.oh {
                        let drow = (oy * g.stride + ky) * pw + kx;
                        let grow = (co * g.oh + oy) * g.ow;
                        if g.stride == 1 {
                            let dst = &mut dplane[drow..drow + g.ow];
                            let src = &gd[grow..grow + g.ow];
                            for (d, s) in dst.iter_mut().zip(src.iter()) {
                                *d = *d + wv * *s;
                            }
                        } else {
                            for ox in 0..g.ow {
                                dplane[drow + ox * g.stride] =
                                    dplane[drow + ox * g.stride] + wv * gd[grow + ox];
                            }
                        }
                    }
                }
            }
        }
    };

    let plane = ph * pw;
    if macs(g) >= PAR_THRESHOLD {
        dxp.par_chunks_mut(plane).enumerate().for_each(|(ci, p)| run(ci, p));
    } else {
        for (ci, p) in dxp.chunks_mut(plane).enumerate() {
            run(ci, p);
        }
    }

    // Strip the padding border.
    let mut dx = vec![T::zero(); g.c_in * g.h * g.w];
    for c in 0..g.c_in {
        for y in 0..g.h {
            let src = (c * ph + y + g.padding) * pw + g.padding;
            let dst = (c * g.h + y) * g.w;
            dx[dst..dst + g.w].copy_from_slice(&dxp[src..src + g.w]);
        }
    }
    Tensor::from_vec(&[g.c_in, g.h, g.w], dx)
}

/// Gradient w.r.t. the weight.
pub fn backward_weight<T: Scalar>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    g: &ConvGeom,
) -> Tensor<T> {
    let xp = pad_input(x, g);
    let pw = g.w + 2 * g.padding;
    let gd = grad_out.data();
    let mut dw = vec![T::zero(); g.c_out * g.c_in * g.k * g.k];

    let per_co = g.c_in * g.k * g.k;
    let run = |co: usize, dwp: &mut [T]| {
        for ci in 0..g.c_in {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let mut acc = T::zero();
                    for oy in 0..g.oh {
                        let xrow = (ci * (g.h + 2 * g.padding) + oy * g.stride + ky) * pw + kx;
                        let grow = (co * g.oh + oy) * g.ow;
                        if g.stride == 1 {
                            let xs = &xp[xrow..xrow + g.ow];
                            let gs = &gd[grow..grow + g.ow];
                            for (xv, gv) in xs.iter().zip(gs.iter()) {
                                acc = acc + *xv * *gv;
                            }
                        } else {
                            for ox in 0..g.ow {
                                acc = acc + xp[xrow + ox * g.stride] * gd[grow + ox];
                            }
                        }
                    }
                    dwp[(ci * g.k + ky) * g.k + kx] = acc;
                }
            }
        }
    };

    if macs(g) >= PAR_THRESHOLD {
        dw.par_chunks_mut(per_co).enumerate().for_each(|(co, p)| run(co, p));
    } else {
        for (co, p) in dw.chunks_mut(per_co).enumerate() {
            run(co, p);
        }
    }
    Tensor::from_vec(&[g.c_out, g.c_in, g.k, g.k], dw)
}

/// Gradient w.r.t. the bias: per-channel sum of the upstream gradient.
pub fn backward_bias<T: Scalar>(grad_out: &Tensor<T>, g: &ConvGeom) -> Tensor<T> {
    let gd = grad_out.data();
    let plane = g.oh * g.ow;
    let db: Vec<T> = (0..g.c_out)
        .map(|co| {
            let mut acc = T::zero();
            for v in &gd[co * plane..(co + 1) * plane] {
                acc = acc + *v;
            }
            acc
        })
        .collect();
    Tensor::from_vec(&[g.c_out], db)
}
