//! Brute-force reference evaluations. Each one is a literal loop over the
//! defining formula and shares no code with the fast paths it checks.

use crate::error::{dim_err, Result};
use crate::landmark::PartitionScheme;
use crate::tensor::{Scalar, Tensor};

/// Literal max over the membership set `G_group(node)`.
pub fn region_max_oracle<T: Scalar>(
    x: &Tensor<T>,
    scheme: PartitionScheme,
    node: (usize, usize),
    group: usize,
) -> Result<Tensor<T>> {
    let (c, h, w) = x.chw()?;
    if node.0 >= h || node.1 >= w {
        return dim_err(format!("node {node:?} outside {h}x{w} map"));
    }
    let mut out = vec![T::neg_infinity(); c];
    for a in 0..h {
        for b in 0..w {
            if !scheme.contains(group, node, (a, b))? {
                continue;
            }
            for (ch, best) in out.iter_mut().enumerate() {
                let v = x.at(&[ch, a, b]);
                if v > *best {
                    *best = v;
                }
            }
        }
    }
    Tensor::new(&[c], out)
}

/// First maximizer of each channel over `G_group(node)`, in the group's scan order.
pub fn region_argmax_oracle<T: Scalar>(
    x: &Tensor<T>,
    scheme: PartitionScheme,
    node: (usize, usize),
    group: usize,
) -> Result<Vec<(usize, usize)>> {
    let (c, h, w) = x.chw()?;
    let dir = scheme.direction(group)?;
    let mut members: Vec<(usize, usize)> = (0..h)
        .flat_map(|a| (0..w).map(move |b| (a, b)))
        .filter(|&cell| dir.contains(node, cell))
        .collect();
    members.sort_by_key(|&cell| dir.scan_rank((h, w), cell));
    Ok((0..c)
        .map(|ch| {
            let mut best = members[0];
            for &cell in &members[1..] {
                if x.at(&[ch, cell.0, cell.1]) > x.at(&[ch, best.0, best.1]) {
                    best = cell;
                }
            }
            best
        })
        .collect())
}

/// Same-size zero-padded convolution by direct summation.
pub fn naive_conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, dilation: usize) -> Result<Tensor<T>> {
    let (c_in, h, wd) = x.chw()?;
    let (c_out, k) = match *w.shape() {
        [o, c, k, k2] if c == c_in && k == k2 => (o, k),
        ref s => return dim_err(format!("weight {s:?} vs input channels {c_in}")),
    };
    let r = (k / 2) as isize;
    let mut y = Tensor::zeros(&[c_out, h, wd]);
    for o in 0..c_out {
        for i in 0..h {
            for j in 0..wd {
                let mut acc = T::zero();
                for c in 0..c_in {
                    for p in 0..k {
                        for q in 0..k {
                            let si = i as isize + (p as isize - r) * dilation as isize;
                            let sj = j as isize + (q as isize - r) * dilation as isize;
                            if si < 0 || sj < 0 || si >= h as isize || sj >= wd as isize {
                                continue;
                            }
                            acc += w.at(&[o, c, p, q]) * x.at(&[c, si as usize, sj as usize]);
                        }
                    }
                }
                y.data_mut()[(o * h + i) * wd + j] = acc;
            }
        }
    }
    Ok(y)
}

pub fn naive_matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k, n) = match (a.shape(), b.shape()) {
        (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
        (sa, sb) => return dim_err(format!("matmul {sa:?} x {sb:?}")),
    };
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::zero();
            for t in 0..k {
                acc += a.at(&[i, t]) * b.at(&[t, j]);
            }
            out.data_mut()[i * n + j] = acc;
        }
    }
    Ok(out)
}

/// `W · x_v` for a `[O, C, 1, 1]` kernel at one node.
fn project<T: Scalar>(w: &Tensor<T>, x: &Tensor<T>, v: (usize, usize)) -> Vec<T> {
    let (o, c) = (w.shape()[0], w.shape()[1]);
    (0..o)
        .map(|oo| (0..c).map(|cc| w.at(&[oo, cc, 0, 0]) * x.at(&[cc, v.0, v.1])).sum())
        .collect()
}

/// Embedded-Gaussian non-local layer evaluated pair by pair.
pub fn naive_attention<T: Scalar>(
    theta: &Tensor<T>,
    phi: &Tensor<T>,
    g: &Tensor<T>,
    out: &Tensor<T>,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (_, h, w) = x.chw()?;
    let nodes: Vec<(usize, usize)> = (0..h).flat_map(|i| (0..w).map(move |j| (i, j))).collect();
    let c_out = out.shape()[0];
    let mut y = Tensor::zeros(&[c_out, h, w]);
    for &v in &nodes {
        let tv = project(theta, x, v);
        let scores: Vec<T> = nodes
            .iter()
            .map(|&u| tv.iter().zip(project(phi, x, u)).map(|(&a, b)| a * b).sum())
            .collect();
        let m = scores.iter().copied().fold(T::neg_infinity(), T::max);
        let z: T = scores.iter().map(|&s| (s - m).exp()).sum();
        let mut agg = vec![T::zero(); g.shape()[0]];
        for (&u, &s) in nodes.iter().zip(&scores) {
            let f = (s - m).exp() / z;
            for (a, gu) in agg.iter_mut().zip(project(g, x, u)) {
                *a += f * gu;
            }
        }
        for o in 0..c_out {
            let val: T = (0..agg.len()).map(|c| out.at(&[o, c, 0, 0]) * agg[c]).sum();
            y.data_mut()[(o * h + v.0) * w + v.1] = val;
        }
    }
    Ok(y)
}

/// Landmark feature convolution straight from its definition: for every node
/// and group, the max of `relu(W_G · x_u)` over the explicit membership set,
/// then `Σ_G W_(v,G) · h_G`, plus `x_v` when `residual`.
pub fn naive_lfc<T: Scalar>(
    x: &Tensor<T>,
    scheme: PartitionScheme,
    embed: &[Tensor<T>],
    agg: &Tensor<T>,
    residual: bool,
) -> Result<Tensor<T>> {
    let (c_in, h, w) = x.chw()?;
    let c_mid = embed[0].shape()[0];
    let c_out = agg.shape()[0];
    let k = scheme.group_count();
    let mut y = Tensor::zeros(&[c_out, h, w]);
    for i in 0..h {
        for j in 0..w {
            let mut landmark = vec![T::neg_infinity(); k * c_mid];
            for (grp, wg) in embed.iter().enumerate() {
                for a in 0..h {
                    for b in 0..w {
                        if !scheme.contains(grp, (i, j), (a, b))? {
                            continue;
                        }
                        for (m, e) in project(wg, x, (a, b)).into_iter().enumerate() {
                            let e = e.max(T::zero());
                            let slot = &mut landmark[grp * c_mid + m];
                            if e > *slot {
                                *slot = e;
                            }
                        }
                    }
                }
            }
            for o in 0..c_out {
                let mut acc: T = (0..k * c_mid).map(|q| agg.at(&[o, q, 0, 0]) * landmark[q]).sum();
                if residual && c_in == c_out {
                    acc += x.at(&[o, i, j]);
                }
                y.data_mut()[(o * h + i) * w + j] = acc;
            }
        }
    }
    Ok(y)
}
