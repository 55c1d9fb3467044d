//! Slice-level compute kernels shared by the autograd graph.
//!
//! Convolutions are written as shifted row AXPYs so every inner loop walks
//! contiguous memory; zero padding falls out of clipping the row ranges.

use super::Scalar;

/// Clipped output range `[lo, hi)` along one axis for a tap at `offset`.
#[inline]
fn tap_range(len: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (len as isize - offset).clamp(0, len as isize) as usize;
    (lo, hi.max(lo))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub dilation: usize,
}

impl ConvDims {
    #[inline]
    fn offset(&self, tap: usize) -> isize {
        (tap as isize - (self.k / 2) as isize) * self.dilation as isize
    }
}

/// Unfold `x: [c_in, h, w]` into `[c_in·k·k, h·w]` patch rows with zero padding.
fn im2col<T: Scalar>(x: &[T], d: ConvDims) -> Vec<T> {
    let hw = d.h * d.w;
    let mut cols = vec![T::zero(); d.c_in * d.k * d.k * hw];
    for c in 0..d.c_in {
        let xc = &x[c * hw..(c + 1) * hw];
        for p in 0..d.k {
            let di = d.offset(p);
            let (i0, i1) = tap_range(d.h, di);
            for q in 0..d.k {
                let dj = d.offset(q);
                let (j0, j1) = tap_range(d.w, dj);
                let row = &mut cols[((c * d.k + p) * d.k + q) * hw..][..hw];
                for i in i0..i1 {
                    let src = ((i as isize + di) as usize) * d.w;
                    let s0 = (src as isize + j0 as isize + dj) as usize;
                    row[i * d.w + j0..i * d.w + j1].copy_from_slice(&xc[s0..s0 + (j1 - j0)]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add patch rows back onto the input grid.
fn col2im<T: Scalar>(cols: &[T], d: ConvDims) -> Vec<T> {
    let hw = d.h * d.w;
    let mut x = vec![T::zero(); d.c_in * hw];
    for c in 0..d.c_in {
        let xc = &mut x[c * hw..(c + 1) * hw];
        for p in 0..d.k {
            let di = d.offset(p);
            let (i0, i1) = tap_range(d.h, di);
            for q in 0..d.k {
                let dj = d.offset(q);
                let (j0, j1) = tap_range(d.w, dj);
                let row = &cols[((c * d.k + p) * d.k + q) * hw..][..hw];
                for i in i0..i1 {
                    let src = ((i as isize + di) as usize) * d.w;
                    let s0 = (src as isize + j0 as isize + dj) as usize;
                    for (a, &b) in xc[s0..s0 + (j1 - j0)].iter_mut().zip(&row[i * d.w + j0..i * d.w + j1]) {
                        *a += b;
                    }
                }
            }
        }
    }
    x
}

/// Same-size convolution with zero padding, no bias.
pub fn conv2d_forward<T: Scalar>(x: &[T], wt: &[T], d: ConvDims) -> Vec<T> {
    let hw = d.h * d.w;
    let kdim = d.c_in * d.k * d.k;
    if d.k == 1 {
        return matmul(wt, x, d.c_out, kdim, hw);
    }
    matmul(wt, &im2col(x, d), d.c_out, kdim, hw)
}

/// Gradients of [`conv2d_forward`] with respect to input and weights.
pub fn conv2d_backward<T: Scalar>(
    gy: &[T],
    x: &[T],
    wt: &[T],
    d: ConvDims,
    want_gx: bool,
    want_gw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let hw = d.h * d.w;
    let kdim = d.c_in * d.k * d.k;
    let gw = want_gw.then(|| {
        if d.k == 1 {
            matmul_nt(gy, x, d.c_out, hw, kdim)
        } else {
            matmul_nt(gy, &im2col(x, d), d.c_out, hw, kdim)
        }
    });
    let gx = want_gx.then(|| {
        let gcols = matmul_tn(wt, gy, d.c_out, kdim, hw);
        if d.k == 1 {
            gcols
        } else {
            col2im(&gcols, d)
        }
    });
    (gx, gw)
}

#[inline]
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // independent accumulators so the compiler keeps parallel FMA chains
    const L: usize = 8;
    let mut acc = [T::zero(); L];
    let chunks = a.len() / L;
    for (ca, cb) in a.chunks_exact(L).zip(b.chunks_exact(L)) {
        for l in 0..L {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut s = T::zero();
    for v in acc {
        s += v;
    }
    for i in chunks * L..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Four output rows updated per pass over one row of `b`.
#[inline]
fn axpy4<T: Scalar>(a: [T; 4], b: &[T], out: &mut [T], n: usize, cols: std::ops::Range<usize>) {
    let (r0, rest) = out.split_at_mut(n);
    let (r1, rest) = rest.split_at_mut(n);
    let (r2, r3) = rest.split_at_mut(n);
    let (r0, r1, r2, r3) = (&mut r0[cols.clone()], &mut r1[cols.clone()], &mut r2[cols.clone()], &mut r3[cols.clone()]);
    for ((((y0, y1), y2), y3), &bv) in r0.iter_mut().zip(r1.iter_mut()).zip(r2.iter_mut()).zip(r3.iter_mut()).zip(&b[cols]) {
        *y0 += a[0] * bv;
        *y1 += a[1] * bv;
        *y2 += a[2] * bv;
        *y3 += a[3] * bv;
    }
}

/// Column tile width; four output rows of this many entries stay in L1.
const TILE: usize = 1024;

/// `a[m,k] · b[k,n]`.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    let full = m / 4 * 4;
    for i in (0..full).step_by(4) {
        let block = &mut out[i * n..(i + 4) * n];
        for j in (0..n).step_by(TILE) {
            for kk in 0..k {
                let av = [a[i * k + kk], a[(i + 1) * k + kk], a[(i + 2) * k + kk], a[(i + 3) * k + kk]];
                axpy4(av, &b[kk * n..(kk + 1) * n], block, n, j..n.min(j + TILE));
            }
        }
    }
    for i in full..m {
        let row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            axpy(a[i * k + kk], &b[kk * n..(kk + 1) * n], row);
        }
    }
    out
}

/// `a[m,k] · b[n,k]ᵀ`.
pub fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] = dot(ar, &b[j * k..(j + 1) * k]);
        }
    }
    out
}

/// `a[k,m]ᵀ · b[k,n]`.
pub fn matmul_tn<T: Scalar>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    let full = m / 4 * 4;
    for i in (0..full).step_by(4) {
        let block = &mut out[i * n..(i + 4) * n];
        for j in (0..n).step_by(TILE) {
            for kk in 0..k {
                let av = [a[kk * m + i], a[kk * m + i + 1], a[kk * m + i + 2], a[kk * m + i + 3]];
                axpy4(av, &b[kk * n..(kk + 1) * n], block, n, j..n.min(j + TILE));
            }
        }
    }
    for i in full..m {
        let row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            axpy(a[kk * m + i], &b[kk * n..(kk + 1) * n], row);
        }
    }
    out
}

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Source taps and weights of align-corners-false bilinear resampling along
/// one axis: output index `o` reads `(i0, i1, frac)` as `(1-frac)·x[i0] + frac·x[i1]`.
pub fn bilinear_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(src_len - 1);
            let i1 = (i0 + 1).min(src_len - 1);
            let frac = if i1 == i0 { 0.0 } else { s - i0 as f64 };
            (i0, i1, frac)
        })
        .collect()
}

pub fn bilinear_forward<T: Scalar>(
    x: &[T],
    c: usize,
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let rows = bilinear_taps(h, oh);
    let cols = bilinear_taps(w, ow);
    let mut y = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        let xc = &x[ch * h * w..(ch + 1) * h * w];
        for (oi, &(r0, r1, fr)) in rows.iter().enumerate() {
            let fr = T::from_f64_lossy(fr);
            for (oj, &(c0, c1, fc)) in cols.iter().enumerate() {
                let fc = T::from_f64_lossy(fc);
                let top = xc[r0 * w + c0] * (T::one() - fc) + xc[r0 * w + c1] * fc;
                let bot = xc[r1 * w + c0] * (T::one() - fc) + xc[r1 * w + c1] * fc;
                y[(ch * oh + oi) * ow + oj] = top * (T::one() - fr) + bot * fr;
            }
        }
    }
    y
}

pub fn bilinear_backward<T: Scalar>(
    gy: &[T],
    c: usize,
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let rows = bilinear_taps(h, oh);
    let cols = bilinear_taps(w, ow);
    let mut gx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let gc = &mut gx[ch * h * w..(ch + 1) * h * w];
        for (oi, &(r0, r1, fr)) in rows.iter().enumerate() {
            let fr = T::from_f64_lossy(fr);
            for (oj, &(c0, c1, fc)) in cols.iter().enumerate() {
                let fc = T::from_f64_lossy(fc);
                let g = gy[(ch * oh + oi) * ow + oj];
                gc[r0 * w + c0] += g * (T::one() - fr) * (T::one() - fc);
                gc[r0 * w + c1] += g * (T::one() - fr) * fc;
                gc[r1 * w + c0] += g * fr * (T::one() - fc);
                gc[r1 * w + c1] += g * fr * fc;
            }
        }
    }
    gx
}

/// Flat source index of each window maximum (first maximum in row-major order).
pub fn max_downsample_index<T: Scalar>(
    x: &[T],
    c: usize,
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<u32> {
    let (sh, sw) = (h / oh, w / ow);
    let mut index = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oi in 0..oh {
            for oj in 0..ow {
                let mut best = ch * h * w + oi * sh * w + oj * sw;
                for di in 0..sh {
                    for dj in 0..sw {
                        let at = ch * h * w + (oi * sh + di) * w + oj * sw + dj;
                        if x[at] > x[best] {
                            best = at;
                        }
                    }
                }
                index.push(best as u32);
            }
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tap_range_clips_padding() {
        assert_eq!(tap_range(5, -2), (2, 5));
        assert_eq!(tap_range(5, 2), (0, 3));
        assert_eq!(tap_range(3, 4), (0, 0));
        assert_eq!(tap_range(3, -4), (4, 4));
    }

    #[test]
    fn bilinear_taps_factor_two() {
        let taps = bilinear_taps(2, 4);
        assert_eq!(taps[0], (0, 1, 0.0));
        assert_eq!(taps[1], (0, 1, 0.25));
        assert_eq!(taps[2], (0, 1, 0.75));
        assert_eq!(taps[3], (1, 1, 0.0));
    }

    #[test]
    fn transposed_products_agree() {
        let a: Vec<f64> = (0..6).map(f64::from).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| f64::from(v) * 0.5).collect(); // 3x4
        let ab = matmul(&a, &b, 2, 3, 4);
        let bt = transpose(&b, 3, 4);
        assert_eq!(matmul_nt(&a, &bt, 2, 3, 4), ab);
        let at = transpose(&a, 2, 3);
        assert_eq!(matmul_tn(&at, &b, 3, 2, 4), ab);
    }
}
