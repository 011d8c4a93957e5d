//! Per-layer forward kernels. Values are stored as `f32`; every dot product
//! accumulates in `f64`.

use super::network::{Conv2d, Dense, Pool, Shape};

pub(crate) fn dense_forward(d: &Dense, x: &[f32], out: &mut [f32]) {
    for (o, out_v) in out.iter_mut().enumerate() {
        let row = &d.weights[o * d.in_dim..(o + 1) * d.in_dim];
        let mut acc = d.bias[o] as f64;
        for (w, v) in row.iter().zip(x) {
            acc += *w as f64 * *v as f64;
        }
        *out_v = acc as f32;
    }
}

/// Visits the in-bounds receptive field of conv output `(oc, oy, ox)` as
/// `(kernel_offset, input_flat_index, weight_index)`. Kernel offsets index
/// `[in_channel][ky][kx]` within the output channel's filter.
#[inline]
pub(crate) fn conv_taps(
    c: &Conv2d,
    in_shape: Shape,
    oc: usize,
    oy: usize,
    ox: usize,
    mut visit: impl FnMut(usize, usize, usize),
) {
    let (kh, kw) = c.kernel;
    let kvol = c.kernel_volume();
    for ic in 0..c.in_channels {
        for ky in 0..kh {
            let iy = (oy * c.stride + ky) as isize - c.padding as isize;
            if iy < 0 || iy >= in_shape.h as isize {
                continue;
            }
            for kx in 0..kw {
                let ix = (ox * c.stride + kx) as isize - c.padding as isize;
                if ix < 0 || ix >= in_shape.w as isize {
                    continue;
                }
                let k = (ic * kh + ky) * kw + kx;
                let input = (ic * in_shape.h + iy as usize) * in_shape.w + ix as usize;
                visit(k, input, oc * kvol + k);
            }
        }
    }
}

pub(crate) fn conv_forward(c: &Conv2d, in_shape: Shape, out_shape: Shape, x: &[f32], out: &mut [f32]) {
    let (kh, kw) = c.kernel;
    let no_pad = c.padding == 0;
    for oc in 0..c.out_channels {
        let filter = &c.weights[oc * c.kernel_volume()..(oc + 1) * c.kernel_volume()];
        for oy in 0..out_shape.h {
            for ox in 0..out_shape.w {
                let mut acc = c.bias[oc] as f64;
                if no_pad {
                    // fast path: the whole window is in bounds
                    for ic in 0..c.in_channels {
                        for ky in 0..kh {
                            let row = (ic * in_shape.h + oy * c.stride + ky) * in_shape.w + ox * c.stride;
                            let wrow = &filter[(ic * kh + ky) * kw..(ic * kh + ky + 1) * kw];
                            for (w, v) in wrow.iter().zip(&x[row..row + kw]) {
                                acc += *w as f64 * *v as f64;
                            }
                        }
                    }
                } else {
                    conv_taps(c, in_shape, oc, oy, ox, |k, i, _| {
                        acc += filter[k] as f64 * x[i] as f64;
                    });
                }
                out[(oc * out_shape.h + oy) * out_shape.w + ox] = acc as f32;
            }
        }
    }
}

/// Visits the window of pool output `(ch, oy, ox)` as
/// `(window_offset, input_flat_index)` in row-major window order.
#[inline]
pub(crate) fn pool_taps(p: &Pool, in_shape: Shape, ch: usize, oy: usize, ox: usize, mut visit: impl FnMut(usize, usize)) {
    let (kh, kw) = p.kernel;
    for ky in 0..kh {
        for kx in 0..kw {
            let input = (ch * in_shape.h + oy * p.stride + ky) * in_shape.w + ox * p.stride + kx;
            visit(ky * kw + kx, input);
        }
    }
}

/// Argmax of a pool window as `(window_offset, input_index)`; ties go to the
/// lowest flat index.
pub(crate) fn pool_argmax(p: &Pool, in_shape: Shape, x: &[f32], ch: usize, oy: usize, ox: usize) -> (usize, usize) {
    let mut best: Option<(usize, usize, f32)> = None;
    pool_taps(p, in_shape, ch, oy, ox, |k, i| {
        let v = x[i];
        match best {
            Some((_, bi, bv)) if v < bv || (v == bv && i > bi) => {}
            _ => best = Some((k, i, v)),
        }
    });
    let (k, i, _) = best.expect("non-empty pool window");
    (k, i)
}

pub(crate) fn max_pool_forward(p: &Pool, in_shape: Shape, out_shape: Shape, x: &[f32], out: &mut [f32]) {
    for ch in 0..out_shape.c {
        for oy in 0..out_shape.h {
            for ox in 0..out_shape.w {
                let (_, i) = pool_argmax(p, in_shape, x, ch, oy, ox);
                out[(ch * out_shape.h + oy) * out_shape.w + ox] = x[i];
            }
        }
    }
}

pub(crate) fn avg_pool_forward(p: &Pool, in_shape: Shape, out_shape: Shape, x: &[f32], out: &mut [f32]) {
    let n = (p.kernel.0 * p.kernel.1) as f64;
    for ch in 0..out_shape.c {
        for oy in 0..out_shape.h {
            for ox in 0..out_shape.w {
                let mut acc = 0.0f64;
                pool_taps(p, in_shape, ch, oy, ox, |_, i| acc += x[i] as f64);
                out[(ch * out_shape.h + oy) * out_shape.w + ox] = (acc / n) as f32;
            }
        }
    }
}
