//! Forward/backward passes for the layer ops: 1-D convolution with same
//! padding, dense, relu, sigmoid, row softmax, and mean pooling.
//!
//! Kernel layout for conv1d is `[k][d_in][d_out]` flattened; dense weight
//! layout is `[d_in][d_out]`.

use super::{Mat, NnError};

/// Temporal convolution with zero same-padding. Input T×D_in, kernel
/// k×D_in×D_out (k odd), optional bias of length D_out; output T×D_out.
pub fn conv1d_forward(
    x: &Mat,
    kernel: &[f64],
    bias: Option<&[f64]>,
    k: usize,
    d_in: usize,
    d_out: usize,
) -> Result<Mat, NnError> {
    if k.is_multiple_of(2) {
        return Err(NnError::EvenKernel(k));
    }
    if x.cols != d_in {
        return Err(NnError::ShapeMismatch {
            op: "conv1d",
            detail: format!("input has {} columns, kernel expects d_in={}", x.cols, d_in),
        });
    }
    if kernel.len() != k * d_in * d_out {
        return Err(NnError::ShapeMismatch {
            op: "conv1d",
            detail: format!(
                "kernel has {} entries, expected {}",
                kernel.len(),
                k * d_in * d_out
            ),
        });
    }
    if let Some(b) = bias {
        if b.len() != d_out {
            return Err(NnError::ShapeMismatch {
                op: "conv1d",
                detail: format!("bias has {} entries, expected {}", b.len(), d_out),
            });
        }
    }
    let t_len = x.rows;
    let half = k / 2;
    let mut out = Mat::zeros(t_len, d_out);
    for t in 0..t_len {
        let orow = out.row_mut(t);
        if let Some(b) = bias {
            orow.copy_from_slice(b);
        }
        for j in 0..k {
            let s = t as isize + j as isize - half as isize;
            if s < 0 || s >= t_len as isize {
                continue;
            }
            let xrow = x.row(s as usize);
            let kslab = &kernel[j * d_in * d_out..(j + 1) * d_in * d_out];
            for i in 0..d_in {
                let xv = xrow[i];
                if xv == 0.0 {
                    continue;
                }
                let krow = &kslab[i * d_out..(i + 1) * d_out];
                for o in 0..d_out {
                    orow[o] += xv * krow[o];
                }
            }
        }
    }
    Ok(out)
}

/// Exact analytic gradients of conv1d w.r.t. input, kernel, and bias.
pub fn conv1d_backward(
    x: &Mat,
    kernel: &[f64],
    k: usize,
    d_in: usize,
    d_out: usize,
    dout: &Mat,
) -> (Mat, Vec<f64>, Vec<f64>) {
    debug_assert_eq!(dout.rows, x.rows);
    debug_assert_eq!(dout.cols, d_out);
    let t_len = x.rows;
    let half = k / 2;
    let mut dx = Mat::zeros(t_len, d_in);
    let mut dk = vec![0.0; k * d_in * d_out];
    let mut db = vec![0.0; d_out];
    for t in 0..t_len {
        let drow = dout.row(t);
        for o in 0..d_out {
            db[o] += drow[o];
        }
        for j in 0..k {
            let s = t as isize + j as isize - half as isize;
            if s < 0 || s >= t_len as isize {
                continue;
            }
            let s = s as usize;
            let xrow = x.row(s);
            let kslab = &kernel[j * d_in * d_out..(j + 1) * d_in * d_out];
            let dkslab = &mut dk[j * d_in * d_out..(j + 1) * d_in * d_out];
            for i in 0..d_in {
                let mut acc = 0.0;
                let krow = &kslab[i * d_out..(i + 1) * d_out];
                let dkrow = &mut dkslab[i * d_out..(i + 1) * d_out];
                let xv = xrow[i];
                for o in 0..d_out {
                    acc += drow[o] * krow[o];
                    dkrow[o] += drow[o] * xv;
                }
                dx.data[s * d_in + i] += acc;
            }
        }
    }
    (dx, dk, db)
}

/// Affine map of each row: out = x·W + b, with x N×A, W A×B, b length B.
pub fn dense_forward(x: &Mat, w: &[f64], b: &[f64], a: usize, bdim: usize) -> Result<Mat, NnError> {
    if x.cols != a {
        return Err(NnError::ShapeMismatch {
            op: "dense",
            detail: format!("input has {} columns, weight expects {}", x.cols, a),
        });
    }
    if w.len() != a * bdim || b.len() != bdim {
        return Err(NnError::ShapeMismatch {
            op: "dense",
            detail: format!(
                "weight/bias sizes {}/{} do not match ({a}×{bdim})",
                w.len(),
                b.len()
            ),
        });
    }
    let mut out = Mat::zeros(x.rows, bdim);
    for r in 0..x.rows {
        let xrow = x.row(r);
        let orow = out.row_mut(r);
        orow.copy_from_slice(b);
        for (i, &xv) in xrow.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[i * bdim..(i + 1) * bdim];
            for o in 0..bdim {
                orow[o] += xv * wrow[o];
            }
        }
    }
    Ok(out)
}

pub fn dense_backward(x: &Mat, w: &[f64], bdim: usize, dout: &Mat) -> (Mat, Vec<f64>, Vec<f64>) {
    let a = x.cols;
    debug_assert_eq!(dout.cols, bdim);
    let mut dx = Mat::zeros(x.rows, a);
    let mut dw = vec![0.0; a * bdim];
    let mut db = vec![0.0; bdim];
    for r in 0..x.rows {
        let xrow = x.row(r);
        let drow = dout.row(r);
        for o in 0..bdim {
            db[o] += drow[o];
        }
        let dxrow = dx.row_mut(r);
        for i in 0..a {
            let wrow = &w[i * bdim..(i + 1) * bdim];
            let dwrow = &mut dw[i * bdim..(i + 1) * bdim];
            let mut acc = 0.0;
            for o in 0..bdim {
                acc += drow[o] * wrow[o];
                dwrow[o] += drow[o] * xrow[i];
            }
            dxrow[i] = acc;
        }
    }
    (dx, dw, db)
}

pub fn relu(x: &Mat) -> Mat {
    let data = x
        .data
        .iter()
        .map(|&v| if v > 0.0 { v } else { 0.0 })
        .collect();
    Mat::from_vec(x.rows, x.cols, data)
}

/// Gradient through relu given the pre-activation values.
pub fn relu_backward(pre: &Mat, dout: &Mat) -> Mat {
    debug_assert_eq!(pre.data.len(), dout.data.len());
    let data = pre
        .data
        .iter()
        .zip(&dout.data)
        .map(|(&p, &d)| if p > 0.0 { d } else { 0.0 })
        .collect();
    Mat::from_vec(pre.rows, pre.cols, data)
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn sigmoid(x: &Mat) -> Mat {
    let data = x.data.iter().map(|&v| sigmoid_scalar(v)).collect();
    Mat::from_vec(x.rows, x.cols, data)
}

/// Gradient through sigmoid given the post-activation values.
pub fn sigmoid_backward(post: &Mat, dout: &Mat) -> Mat {
    debug_assert_eq!(post.data.len(), dout.data.len());
    let data = post
        .data
        .iter()
        .zip(&dout.data)
        .map(|(&y, &d)| d * y * (1.0 - y))
        .collect();
    Mat::from_vec(post.rows, post.cols, data)
}

/// Row-wise softmax with max-subtraction stabilization.
pub fn softmax_rows(x: &Mat) -> Mat {
    let mut out = Mat::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let xrow = x.row(r);
        let m = xrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let orow = out.row_mut(r);
        let mut sum = 0.0;
        for (o, &v) in orow.iter_mut().zip(xrow) {
            *o = (v - m).exp();
            sum += *o;
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
    out
}

/// Gradient through row softmax given the post-activation values:
/// dx = y ⊙ (dout − (dout·y)).
pub fn softmax_backward(post: &Mat, dout: &Mat) -> Mat {
    let mut dx = Mat::zeros(post.rows, post.cols);
    for r in 0..post.rows {
        let y = post.row(r);
        let d = dout.row(r);
        let dot: f64 = y.iter().zip(d).map(|(a, b)| a * b).sum();
        let dxrow = dx.row_mut(r);
        for i in 0..post.cols {
            dxrow[i] = y[i] * (d[i] - dot);
        }
    }
    dx
}

/// Column means over rows: N×D → length-D vector.
pub fn mean_pool(x: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; x.cols];
    for r in 0..x.rows {
        for (o, &v) in out.iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    let inv = 1.0 / x.rows as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

pub fn mean_pool_backward(dout: &[f64], rows: usize) -> Mat {
    let cols = dout.len();
    let inv = 1.0 / rows as f64;
    let mut dx = Mat::zeros(rows, cols);
    for r in 0..rows {
        for (o, &d) in dx.row_mut(r).iter_mut().zip(dout) {
            *o = d * inv;
        }
    }
    dx
}
