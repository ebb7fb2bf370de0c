//! Grouped 2-D convolution, stride 1, zero "same" padding.
//!
//! Every output element is reduced in a fixed order: bias first, then input
//! channel, kernel row, kernel column. Work is split across batch items or
//! input channels only, so results are bitwise identical for any thread count.

use rayon::prelude::*;

use super::{Real, Shape, Tensor};
use crate::{Error, Result};

/// Borrowed convolution parameters.
///
/// `weight` is shaped `(C_out, C_in / groups, K, K)` with `K` odd; padding is
/// always `(K - 1) / 2`.
#[derive(Debug, Clone, Copy)]
pub struct ConvParams<'a, T: Real> {
    pub weight: &'a Tensor<T>,
    pub bias: &'a [T],
    pub groups: usize,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T: Real> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    groups: usize,
    cin_g: usize,
    cout_g: usize,
}

impl<'a, T: Real> ConvParams<'a, T> {
    pub fn new(weight: &'a Tensor<T>, bias: &'a [T], groups: usize) -> Self {
        ConvParams {
            weight,
            bias,
            groups,
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.shape().h
    }

    pub fn padding(&self) -> usize {
        (self.kernel_size() - 1) / 2
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().c * self.groups
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    fn geometry(&self, op: &'static str, x: Shape) -> Result<Geometry> {
        let ws = self.weight.shape();
        let groups = self.groups;
        if groups == 0 {
            return Err(Error::shape(op, "groups", 1, 0));
        }
        if ws.h != ws.w {
            return Err(Error::shape(op, "kernel width", ws.h, ws.w));
        }
        if ws.h.is_multiple_of(2) {
            return Err(Error::NotDivisible {
                op,
                what: "kernel size - 1",
                value: ws.h.saturating_sub(1),
                divisor: 2,
            });
        }
        if !ws.n.is_multiple_of(groups) {
            return Err(Error::NotDivisible {
                op,
                what: "output channels",
                value: ws.n,
                divisor: groups,
            });
        }
        if !x.c.is_multiple_of(groups) {
            return Err(Error::NotDivisible {
                op,
                what: "input channels",
                value: x.c,
                divisor: groups,
            });
        }
        if x.c != ws.c * groups {
            return Err(Error::shape(op, "input channels", ws.c * groups, x.c));
        }
        if self.bias.len() != ws.n {
            return Err(Error::shape(op, "bias length", ws.n, self.bias.len()));
        }
        if x.h == 0 || x.w == 0 {
            return Err(Error::shape(op, "spatial size", 1, 0));
        }
        Ok(Geometry {
            n: x.n,
            cin: x.c,
            cout: ws.n,
            h: x.h,
            w: x.w,
            k: ws.h,
            pad: (ws.h - 1) / 2,
            groups,
            cin_g: ws.c,
            cout_g: ws.n / groups,
        })
    }
}

/// Multiply-accumulates performed by `conv2d(x, p)` counting padded taps.
pub fn conv2d_macs<T: Real>(x: Shape, p: &ConvParams<'_, T>) -> u64 {
    let k = p.kernel_size() as u64;
    let cin_g = p.weight.shape().c as u64;
    k * k * cin_g * p.out_channels() as u64 * (x.h * x.w) as u64
}

/// Reorders `(C_out, C_in/G, K, K)` weights to `[g][ci][ky][kx][co]` so the
/// innermost loop runs over contiguous output channels.
fn transpose_weights<T: Real>(weight: &Tensor<T>, g: &Geometry) -> Vec<T> {
    let kk = g.k * g.k;
    let src = weight.data();
    let mut out = vec![T::zero(); src.len()];
    for grp in 0..g.groups {
        for co in 0..g.cout_g {
            for ci in 0..g.cin_g {
                for t in 0..kk {
                    let s = ((grp * g.cout_g + co) * g.cin_g + ci) * kk + t;
                    let d = ((grp * g.cin_g + ci) * kk + t) * g.cout_g + co;
                    out[d] = src[s];
                }
            }
        }
    }
    out
}

/// Output pixels and output channels per register tile.
const TILE_X: usize = 8;
const TILE_C: usize = 16;

/// Channels `c0..c0 + nc` of one item, zero padded by `pad` on every side.
fn pad_channels<T: Real>(x: &[T], c0: usize, nc: usize, h: usize, w: usize, pad: usize) -> Vec<T> {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![T::zero(); nc * hp * wp];
    for c in 0..nc {
        let src = &x[(c0 + c) * h * w..][..h * w];
        for y in 0..h {
            out[(c * hp + y + pad) * wp + pad..][..w].copy_from_slice(&src[y * w..][..w]);
        }
    }
    out
}

/// Accumulates a `nx x nc` block of outputs starting at `(oy, ox0)` and
/// channel `co0` of the group. Inlined with constant sizes for full tiles.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn tile<T: Real>(
    xp: &[T],
    wg: &[T],
    bias: &[T],
    g: &Geometry,
    oy: usize,
    ox0: usize,
    co0: usize,
    nx: usize,
    nc: usize,
) -> [[T; TILE_C]; TILE_X] {
    let (k, cg) = (g.k, g.cout_g);
    let (hp, wp) = (g.h + 2 * g.pad, g.w + 2 * g.pad);
    let mut acc = [[T::zero(); TILE_C]; TILE_X];
    for a in acc.iter_mut().take(nx) {
        a[..nc].copy_from_slice(&bias[co0..co0 + nc]);
    }
    for ci in 0..g.cin_g {
        for ky in 0..k {
            let row = &xp[(ci * hp + oy + ky) * wp + ox0..][..nx + k - 1];
            for kx in 0..k {
                let wv = &wg[((ci * k + ky) * k + kx) * cg + co0..][..nc];
                for (o, a) in acc.iter_mut().enumerate().take(nx) {
                    let xv = row[o + kx];
                    for (a, &wk) in a[..nc].iter_mut().zip(wv) {
                        *a = *a + wk * xv;
                    }
                }
            }
        }
    }
    acc
}

fn forward_item<T: Real>(x: &[T], wt: &[T], bias: &[T], g: &Geometry, out: &mut [T]) {
    let (h, w, cg) = (g.h, g.w, g.cout_g);
    let plane = h * w;
    let kk = g.k * g.k;
    for grp in 0..g.groups {
        let xp = pad_channels(x, grp * g.cin_g, g.cin_g, h, w, g.pad);
        let wg = &wt[grp * g.cin_g * kk * cg..][..g.cin_g * kk * cg];
        let b = &bias[grp * cg..(grp + 1) * cg];
        for co0 in (0..cg).step_by(TILE_C) {
            let nc = TILE_C.min(cg - co0);
            for oy in 0..h {
                for ox0 in (0..w).step_by(TILE_X) {
                    let nx = TILE_X.min(w - ox0);
                    let acc = if nx == TILE_X && nc == TILE_C {
                        tile(&xp, wg, b, g, oy, ox0, co0, TILE_X, TILE_C)
                    } else {
                        tile(&xp, wg, b, g, oy, ox0, co0, nx, nc)
                    };
                    for (o, a) in acc.iter().enumerate().take(nx) {
                        for (c, &v) in a[..nc].iter().enumerate() {
                            out[(grp * cg + co0 + c) * plane + oy * w + ox0 + o] = v;
                        }
                    }
                }
            }
        }
    }
}

/// Grouped convolution with stride 1 and zero padding `(K-1)/2`.
pub fn conv2d<T: Real>(x: &Tensor<T>, p: &ConvParams<'_, T>) -> Result<Tensor<T>> {
    let g = p.geometry("conv2d", x.shape())?;
    let wt = transpose_weights(p.weight, &g);
    let out_shape = Shape::new(g.n, g.cout, g.h, g.w);
    let mut out = Tensor::zeros(out_shape);
    let in_item = g.cin * g.h * g.w;
    let out_item = g.cout * g.h * g.w;
    out.data_mut()
        .par_chunks_mut(out_item)
        .zip(x.data().par_chunks(in_item))
        .for_each(|(o, xi)| forward_item(xi, &wt, p.bias, &g, o));
    Ok(out)
}

/// Weight-gradient sums for kernel tap `(ky, kx)` and `nc` output channels
/// starting at absolute channel `co0`.
#[inline(always)]
fn weight_tile<T: Real>(
    padded: &[Vec<T>],
    go_t: &[T],
    g: &Geometry,
    ky: usize,
    kx: usize,
    co0: usize,
    nc: usize,
) -> [T; TILE_C] {
    let (h, w) = (g.h, g.w);
    let wp = w + 2 * g.pad;
    let mut acc = [T::zero(); TILE_C];
    for (n, xp) in padded.iter().enumerate() {
        let go = &go_t[n * h * w * g.cout..][..h * w * g.cout];
        for oy in 0..h {
            let row = &xp[(oy + ky) * wp + kx..][..w];
            for (ox, &xv) in row.iter().enumerate() {
                let gv = &go[(oy * w + ox) * g.cout + co0..][..nc];
                for (a, &gk) in acc[..nc].iter_mut().zip(gv) {
                    *a = *a + xv * gk;
                }
            }
        }
    }
    acc
}

/// Gradients of `conv2d(x, p)` with respect to input, weights and bias.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    p: &ConvParams<'_, T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = p.geometry("conv2d_backward", x.shape())?;
    let gs = grad_out.shape();
    let expect = Shape::new(g.n, g.cout, g.h, g.w);
    for (dim, e, f) in [
        ("batch", expect.n, gs.n),
        ("output channels", expect.c, gs.c),
        ("height", expect.h, gs.h),
        ("width", expect.w, gs.w),
    ] {
        if e != f {
            return Err(Error::shape("conv2d_backward", dim, e, f));
        }
    }

    // Input gradient: correlation of grad_out with the spatially flipped,
    // channel-transposed kernel.
    let kk = g.k * g.k;
    let flipped = {
        let src = p.weight.data();
        let mut data = vec![T::zero(); src.len()];
        for grp in 0..g.groups {
            for ci in 0..g.cin_g {
                for co in 0..g.cout_g {
                    for t in 0..kk {
                        let s = ((grp * g.cout_g + co) * g.cin_g + ci) * kk + t;
                        let d = ((grp * g.cin_g + ci) * g.cout_g + co) * kk + (kk - 1 - t);
                        data[d] = src[s];
                    }
                }
            }
        }
        Tensor::from_vec(Shape::new(g.cin, g.cout_g, g.k, g.k), data)?
    };
    let zero_bias = vec![T::zero(); g.cin];
    let grad_input = conv2d(grad_out, &ConvParams::new(&flipped, &zero_bias, g.groups))?;

    // grad_out as (n, y, x, c) so weight gradients accumulate over
    // contiguous output channels.
    let plane = g.h * g.w;
    let mut go_t = vec![T::zero(); grad_out.numel()];
    for n in 0..g.n {
        for c in 0..g.cout {
            let src = grad_out.plane(n, c);
            let base = n * plane * g.cout;
            for (i, &v) in src.iter().enumerate() {
                go_t[base + i * g.cout + c] = v;
            }
        }
    }

    // Per weight element the sum runs over batch, output row, output column.
    let (h, w, k, pad, cg) = (g.h, g.w, g.k, g.pad, g.cout_g);
    let per_ci: Vec<Vec<T>> = (0..g.cin)
        .into_par_iter()
        .map(|ci| {
            let grp = ci / g.cin_g;
            let padded: Vec<Vec<T>> = (0..g.n)
                .map(|n| pad_channels(x.plane(n, ci), 0, 1, h, w, pad))
                .collect();
            let mut acc = vec![T::zero(); kk * cg];
            for t in 0..kk {
                let (ky, kx) = (t / k, t % k);
                for co0 in (0..cg).step_by(TILE_C) {
                    let nc = TILE_C.min(cg - co0);
                    let sums = if nc == TILE_C {
                        weight_tile(&padded, &go_t, &g, ky, kx, grp * cg + co0, TILE_C)
                    } else {
                        weight_tile(&padded, &go_t, &g, ky, kx, grp * cg + co0, nc)
                    };
                    acc[t * cg + co0..][..nc].copy_from_slice(&sums[..nc]);
                }
            }
            acc
        })
        .collect();

    let mut grad_weight = Tensor::zeros(p.weight.shape());
    {
        let gw = grad_weight.data_mut();
        for (ci, acc) in per_ci.iter().enumerate() {
            let grp = ci / g.cin_g;
            let ci_l = ci % g.cin_g;
            for t in 0..kk {
                for co in 0..cg {
                    gw[((grp * cg + co) * g.cin_g + ci_l) * kk + t] = acc[t * cg + co];
                }
            }
        }
    }

    let mut grad_bias = vec![T::zero(); g.cout];
    for n in 0..g.n {
        for (c, b) in grad_bias.iter_mut().enumerate() {
            for &v in grad_out.plane(n, c) {
                *b = *b + v;
            }
        }
    }

    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}
