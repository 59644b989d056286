//! Dense layer primitives on (channels, height, width) feature maps, all in
//! f64 with hand-written backward passes. Convolutions are im2col + GEMM;
//! the column matrix is recomputed in backward instead of cached.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView1, ArrayView4, Axis};

pub struct ConvGrads {
    pub dx: Array3<f64>,
    pub dw: Array4<f64>,
    pub db: Array1<f64>,
}

/// Unfolds `x` into a (c·k·k, h·w) column matrix with same-padding (k odd).
fn im2col(x: &Array3<f64>, k: usize) -> Array2<f64> {
    debug_assert!(k % 2 == 1);
    let (c, h, w) = x.dim();
    let pad = (k / 2) as isize;
    let mut cols = Array2::zeros((c * k * k, h * w));
    for ci in 0..c {
        for kr in 0..k {
            for kc in 0..k {
                let row = (ci * k + kr) * k + kc;
                let mut out_row = cols.row_mut(row);
                for r in 0..h {
                    let sr = r as isize + kr as isize - pad;
                    if sr < 0 || sr >= h as isize {
                        continue;
                    }
                    for cc in 0..w {
                        let sc = cc as isize + kc as isize - pad;
                        if sc >= 0 && sc < w as isize {
                            out_row[r * w + cc] = x[[ci, sr as usize, sc as usize]];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds columns back onto a (c, h, w) map.
fn col2im(cols: &Array2<f64>, c: usize, h: usize, w: usize, k: usize) -> Array3<f64> {
    let pad = (k / 2) as isize;
    let mut x = Array3::zeros((c, h, w));
    for ci in 0..c {
        for kr in 0..k {
            for kc in 0..k {
                let row = (ci * k + kr) * k + kc;
                let col_row = cols.row(row);
                for r in 0..h {
                    let sr = r as isize + kr as isize - pad;
                    if sr < 0 || sr >= h as isize {
                        continue;
                    }
                    for cc in 0..w {
                        let sc = cc as isize + kc as isize - pad;
                        if sc >= 0 && sc < w as isize {
                            x[[ci, sr as usize, sc as usize]] += col_row[r * w + cc];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Stride-1 same-padding convolution. `w` is (c_out, c_in, k, k).
pub fn conv2d_forward(x: &Array3<f64>, w: ArrayView4<f64>, b: ArrayView1<f64>) -> Array3<f64> {
    let (c_out, c_in, k, _) = w.dim();
    let (_, h, wd) = x.dim();
    debug_assert_eq!(x.dim().0, c_in);
    let cols = im2col(x, k);
    let w_std = w.as_standard_layout();
    let w_mat = w_std
        .view()
        .into_shape_with_order((c_out, c_in * k * k))
        .unwrap();
    let out_mat = w_mat.dot(&cols);
    let mut out = out_mat.into_shape_with_order((c_out, h, wd)).unwrap();
    for (mut ch, &bias) in out.outer_iter_mut().zip(b.iter()) {
        ch += bias;
    }
    out
}

pub fn conv2d_backward(
    x: &Array3<f64>,
    w: ArrayView4<f64>,
    d_out: &Array3<f64>,
) -> ConvGrads {
    let (c_out, c_in, k, _) = w.dim();
    let (_, h, wd) = x.dim();
    let cols = im2col(x, k);
    let d_out_mat = d_out
        .view()
        .into_shape_with_order((c_out, h * wd))
        .unwrap();
    let dw_mat = d_out_mat.dot(&cols.t());
    // dot's k==1 fast path (hit on 1x1 feature maps) returns a column-major
    // result that a plain reshape would reject.
    let dw = if dw_mat.is_standard_layout() {
        dw_mat.into_shape_with_order((c_out, c_in, k, k)).unwrap()
    } else {
        Array4::from_shape_vec((c_out, c_in, k, k), dw_mat.iter().copied().collect()).unwrap()
    };
    let db = d_out.sum_axis(Axis(2)).sum_axis(Axis(1));
    let w_std = w.as_standard_layout();
    let w_mat = w_std
        .view()
        .into_shape_with_order((c_out, c_in * k * k))
        .unwrap();
    let dx_cols = w_mat.t().dot(&d_out_mat);
    let dx = col2im(&dx_cols, c_in, h, wd, k);
    ConvGrads { dx, dw, db }
}

/// 2×2 max-pool, stride 2. Returns the pooled map and the within-window
/// argmax (0..4, row-major) for backward routing. Ties go to the first max.
pub fn maxpool2_forward(x: &Array3<f64>) -> (Array3<f64>, Array3<u8>) {
    let (c, h, w) = x.dim();
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array3::zeros((c, oh, ow));
    let mut idx = Array3::zeros((c, oh, ow));
    for ci in 0..c {
        for r in 0..oh {
            for cc in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0u8;
                for i in 0..4 {
                    let v = x[[ci, 2 * r + i / 2, 2 * cc + i % 2]];
                    if v > best {
                        best = v;
                        best_i = i as u8;
                    }
                }
                out[[ci, r, cc]] = best;
                idx[[ci, r, cc]] = best_i;
            }
        }
    }
    (out, idx)
}

pub fn maxpool2_backward(d_out: &Array3<f64>, idx: &Array3<u8>) -> Array3<f64> {
    let (c, oh, ow) = d_out.dim();
    let mut dx = Array3::zeros((c, oh * 2, ow * 2));
    for ci in 0..c {
        for r in 0..oh {
            for cc in 0..ow {
                let i = idx[[ci, r, cc]] as usize;
                dx[[ci, 2 * r + i / 2, 2 * cc + i % 2]] += d_out[[ci, r, cc]];
            }
        }
    }
    dx
}

/// 3×3 max-pool, stride 1, same padding; out-of-frame positions never win.
/// Returns pooled map and within-window argmax (0..9, row-major).
pub fn maxpool3s1_forward(x: &Array3<f64>) -> (Array3<f64>, Array3<u8>) {
    let (c, h, w) = x.dim();
    let mut out = Array3::zeros((c, h, w));
    let mut idx = Array3::zeros((c, h, w));
    for ci in 0..c {
        for r in 0..h {
            for cc in 0..w {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0u8;
                for i in 0..9 {
                    let sr = r as isize + (i / 3) as isize - 1;
                    let sc = cc as isize + (i % 3) as isize - 1;
                    if sr < 0 || sc < 0 || sr >= h as isize || sc >= w as isize {
                        continue;
                    }
                    let v = x[[ci, sr as usize, sc as usize]];
                    if v > best {
                        best = v;
                        best_i = i as u8;
                    }
                }
                out[[ci, r, cc]] = best;
                idx[[ci, r, cc]] = best_i;
            }
        }
    }
    (out, idx)
}

pub fn maxpool3s1_backward(d_out: &Array3<f64>, idx: &Array3<u8>) -> Array3<f64> {
    let (c, h, w) = d_out.dim();
    let mut dx = Array3::zeros((c, h, w));
    for ci in 0..c {
        for r in 0..h {
            for cc in 0..w {
                let i = idx[[ci, r, cc]] as usize;
                let sr = (r as isize + (i / 3) as isize - 1) as usize;
                let sc = (cc as isize + (i % 3) as isize - 1) as usize;
                dx[[ci, sr, sc]] += d_out[[ci, r, cc]];
            }
        }
    }
    dx
}

/// 2×2 transposed convolution, stride 2 (exact 2× upsample, windows do not
/// overlap). `w` is (c_in, c_out, 2, 2).
pub fn tconv2_forward(x: &Array3<f64>, w: ArrayView4<f64>, b: ArrayView1<f64>) -> Array3<f64> {
    let (c_in, c_out, _, _) = w.dim();
    let (_, h, wd) = x.dim();
    debug_assert_eq!(x.dim().0, c_in);
    let x_mat = x.view().into_shape_with_order((c_in, h * wd)).unwrap();
    let mut out = Array3::zeros((c_out, 2 * h, 2 * wd));
    for kr in 0..2usize {
        for kc in 0..2usize {
            let w_kk = w.slice(ndarray::s![.., .., kr, kc]);
            let contrib = w_kk.t().dot(&x_mat); // (c_out, h*w)
            for co in 0..c_out {
                for r in 0..h {
                    for cc in 0..wd {
                        out[[co, 2 * r + kr, 2 * cc + kc]] = contrib[[co, r * wd + cc]];
                    }
                }
            }
        }
    }
    for (mut ch, &bias) in out.outer_iter_mut().zip(b.iter()) {
        ch += bias;
    }
    out
}

pub fn tconv2_backward(
    x: &Array3<f64>,
    w: ArrayView4<f64>,
    d_out: &Array3<f64>,
) -> ConvGrads {
    let (c_in, c_out, _, _) = w.dim();
    let (_, h, wd) = x.dim();
    let x_mat = x.view().into_shape_with_order((c_in, h * wd)).unwrap();
    let mut dx_mat = Array2::zeros((c_in, h * wd));
    let mut dw = Array4::zeros((c_in, c_out, 2, 2));
    for kr in 0..2usize {
        for kc in 0..2usize {
            let mut g_kk = Array2::zeros((c_out, h * wd));
            for co in 0..c_out {
                for r in 0..h {
                    for cc in 0..wd {
                        g_kk[[co, r * wd + cc]] = d_out[[co, 2 * r + kr, 2 * cc + kc]];
                    }
                }
            }
            let w_kk = w.slice(ndarray::s![.., .., kr, kc]);
            dx_mat += &w_kk.dot(&g_kk);
            let dw_kk = x_mat.dot(&g_kk.t()); // (c_in, c_out)
            dw.slice_mut(ndarray::s![.., .., kr, kc]).assign(&dw_kk);
        }
    }
    let db = d_out.sum_axis(Axis(2)).sum_axis(Axis(1));
    let dx = dx_mat.into_shape_with_order((c_in, h, wd)).unwrap();
    ConvGrads { dx, dw, db }
}

pub fn relu_forward(x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient gated on the forward *output*; the kink at 0 takes subgradient 0.
pub fn relu_backward(d_out: &Array3<f64>, out: &Array3<f64>) -> Array3<f64> {
    let mut dx = d_out.clone();
    dx.zip_mut_with(out, |d, &o| {
        if o <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

pub fn sigmoid(x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}
