//! Dynamic max pooling: one linear pass per direction computes, for every node
//! at once, the running maximum over that node's directional region.
//!
//! Quadrant scans use the inclusive recurrence
//! `h[i,j] = max(x[i,j], h[i−s,j], h[i,j−t])`; the half-plane scans fold a
//! full column (or row) into a running maximum and broadcast it. Ties resolve
//! to the first maximizer in the direction's scan order.

use rayon::prelude::*;

use super::partition::{DmpDirection, ScanMode};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Per-element source coordinates `(row, col)` of a `[C,H,W]` max map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexMap {
    shape: [usize; 3],
    coords: Vec<(u16, u16)>,
}

impl IndexMap {
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> (usize, usize) {
        let [_, h, w] = self.shape;
        let (r, q) = self.coords[(c * h + i) * w + j];
        (r as usize, q as usize)
    }

    pub fn coords(&self) -> &[(u16, u16)] {
        &self.coords
    }

    /// Flat indices into the scanned `[C,H,W]` buffer, for gather/scatter.
    pub fn flat_indices(&self) -> Vec<u32> {
        let [_, h, w] = self.shape;
        let hw = h * w;
        self.coords
            .iter()
            .enumerate()
            .map(|(k, &(r, q))| ((k / hw) * hw + r as usize * w + q as usize) as u32)
            .collect()
    }
}

/// Scan result plus the number of comparisons performed.
#[derive(Clone, Debug)]
pub struct ScanOutput<T> {
    pub h: Tensor<T>,
    pub argmax: IndexMap,
    pub comparisons: u64,
}

/// Test hooks for fault injection in the scan kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScanFaults {
    /// Drop the `x[i,j]` term from the quadrant recurrence wherever a
    /// predecessor exists.
    pub drop_self_term: bool,
}

struct Best<T> {
    value: T,
    at: (usize, usize),
    rank: usize,
}

fn check_dims(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 {
        return dim_err("dynamic max pooling needs a non-empty map");
    }
    if h > u16::MAX as usize + 1 || w > u16::MAX as usize + 1 {
        return dim_err(format!("map {h}x{w} exceeds 16-bit argmax coordinates"));
    }
    Ok(())
}

/// Scan one channel plane; returns the comparison count.
fn scan_plane<T: Scalar>(
    x: &[T],
    (h, w): (usize, usize),
    dir: DmpDirection,
    faults: ScanFaults,
    out: &mut [T],
    arg: &mut [(u16, u16)],
) -> u64 {
    let rows: Vec<usize> = if dir.row_step > 0 { (0..h).collect() } else { (0..h).rev().collect() };
    let cols: Vec<usize> = if dir.col_step > 0 { (0..w).collect() } else { (0..w).rev().collect() };
    let mut comparisons = 0u64;
    let mut take = |best: &mut Best<T>, value: T, at: (usize, usize)| {
        comparisons += 1;
        let rank = dir.scan_rank((h, w), at);
        if value > best.value || (value == best.value && rank < best.rank) {
            *best = Best { value, at, rank };
        }
    };
    let none = |at| Best {
        value: T::neg_infinity(),
        at,
        rank: usize::MAX,
    };
    match dir.mode {
        ScanMode::Quadrant2D => {
            let back = |v: usize, step: i8, len: usize| -> Option<usize> {
                let p = v as isize - step as isize;
                (0..len as isize).contains(&p).then_some(p as usize)
            };
            for &i in &rows {
                for &j in &cols {
                    let up = back(i, dir.row_step, h);
                    let left = back(j, dir.col_step, w);
                    let mut best = if faults.drop_self_term && (up.is_some() || left.is_some()) {
                        none((i, j))
                    } else {
                        Best {
                            value: x[i * w + j],
                            at: (i, j),
                            rank: dir.scan_rank((h, w), (i, j)),
                        }
                    };
                    for pred in [up.map(|u| (u, j)), left.map(|l| (i, l))] {
                        match pred {
                            Some((pi, pj)) => {
                                let (r, q) = arg[pi * w + pj];
                                take(&mut best, out[pi * w + pj], (r as usize, q as usize));
                            }
                            None => take(&mut best, T::neg_infinity(), (i, j)),
                        }
                    }
                    out[i * w + j] = best.value;
                    arg[i * w + j] = (best.at.0 as u16, best.at.1 as u16);
                }
            }
        }
        ScanMode::Column1D => {
            let mut best = none((0, 0));
            for &j in &cols {
                for i in 0..h {
                    take(&mut best, x[i * w + j], (i, j));
                }
                for i in 0..h {
                    out[i * w + j] = best.value;
                    arg[i * w + j] = (best.at.0 as u16, best.at.1 as u16);
                }
            }
        }
        ScanMode::Row1D => {
            let mut best = none((0, 0));
            for &i in &rows {
                for j in 0..w {
                    take(&mut best, x[i * w + j], (i, j));
                }
                for j in 0..w {
                    out[i * w + j] = best.value;
                    arg[i * w + j] = (best.at.0 as u16, best.at.1 as u16);
                }
            }
        }
        ScanMode::Global => {
            let mut best = none((0, 0));
            for i in 0..h {
                for j in 0..w {
                    take(&mut best, x[i * w + j], (i, j));
                }
            }
            out.fill(best.value);
            arg.fill((best.at.0 as u16, best.at.1 as u16));
        }
    }
    comparisons
}

/// Scan with fault hooks, optionally splitting channels across threads.
pub fn dmp_scan_with<T: Scalar>(
    x: &Tensor<T>,
    dir: DmpDirection,
    faults: ScanFaults,
    parallel: bool,
) -> Result<ScanOutput<T>> {
    let (c, h, w) = x.chw()?;
    check_dims(h, w)?;
    let hw = h * w;
    let mut out = vec![T::zero(); c * hw];
    let mut arg = vec![(0u16, 0u16); c * hw];
    let src = x.data();
    let comparisons: u64 = if parallel {
        out.par_chunks_mut(hw)
            .zip(arg.par_chunks_mut(hw))
            .enumerate()
            .map(|(ch, (o, a))| scan_plane(&src[ch * hw..(ch + 1) * hw], (h, w), dir, faults, o, a))
            .sum()
    } else {
        out.chunks_mut(hw)
            .zip(arg.chunks_mut(hw))
            .enumerate()
            .map(|(ch, (o, a))| scan_plane(&src[ch * hw..(ch + 1) * hw], (h, w), dir, faults, o, a))
            .sum()
    };
    Ok(ScanOutput {
        h: Tensor::new(&[c, h, w], out)?,
        argmax: IndexMap {
            shape: [c, h, w],
            coords: arg,
        },
        comparisons,
    })
}

/// Directional running maximum of every channel, with argmax provenance.
pub fn dmp_scan<T: Scalar>(x: &Tensor<T>, dir: DmpDirection) -> Result<(Tensor<T>, IndexMap)> {
    let out = dmp_scan_with(x, dir, ScanFaults::default(), false)?;
    Ok((out.h, out.argmax))
}

/// Channel-parallel variant of [`dmp_scan`]; results are identical.
pub fn dmp_scan_parallel<T: Scalar>(x: &Tensor<T>, dir: DmpDirection) -> Result<(Tensor<T>, IndexMap)> {
    let out = dmp_scan_with(x, dir, ScanFaults::default(), true)?;
    Ok((out.h, out.argmax))
}

/// Scatter-add `grad_h` onto the argmax sources.
pub fn dmp_backward<T: Scalar>(grad_h: &Tensor<T>, argmax: &IndexMap) -> Result<Tensor<T>> {
    let (c, h, w) = grad_h.chw()?;
    if [c, h, w] != argmax.shape {
        return Err(Error::Dimension(format!(
            "gradient {:?} does not match argmax map {:?}",
            grad_h.shape(),
            argmax.shape
        )));
    }
    let mut gx = vec![T::zero(); grad_h.numel()];
    for (&g, idx) in grad_h.data().iter().zip(argmax.flat_indices()) {
        gx[idx as usize] += g;
    }
    Tensor::new(&[c, h, w], gx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmark::PartitionScheme;
    use proptest::prelude::*;

    fn map(h: usize, w: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[1, h, w], v).unwrap()
    }

    #[test]
    fn monotone_input_is_fixed_point() {
        let x = map(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let (h, _) = dmp_scan(&x, DmpDirection::quadrant(1, 1)).unwrap();
        assert_eq!(h, x);
    }

    #[test]
    fn origin_dominates() {
        let x = map(2, 2, &[4.0, 3.0, 2.0, 1.0]);
        let (h, arg) = dmp_scan(&x, DmpDirection::quadrant(1, 1)).unwrap();
        assert_eq!(h.data(), &[4.0; 4]);
        assert!(arg.coords().iter().all(|&c| c == (0, 0)));

        let g = backward_of(&arg, &[1.0; 4]);
        assert_eq!(g.data(), &[4.0, 0.0, 0.0, 0.0]);
    }

    fn backward_of(arg: &IndexMap, g: &[f64]) -> Tensor<f64> {
        let [c, h, w] = arg.shape();
        dmp_backward(&Tensor::from_f64(&[c, h, w], g).unwrap(), arg).unwrap()
    }

    #[test]
    fn one_hot_gradient_routes_to_argmax() {
        let x = map(3, 3, &[0.1, 0.9, 0.3, 0.5, 0.2, 0.8, 0.4, 0.6, 0.7]);
        for dir in DmpDirection::all() {
            let (_, arg) = dmp_scan(&x, dir).unwrap();
            for k in 0..9 {
                let mut g = [0.0; 9];
                g[k] = 1.0;
                let gx = backward_of(&arg, &g);
                let (r, c) = arg.get(0, k / 3, k % 3);
                let mut expected = [0.0; 9];
                expected[r * 3 + c] = 1.0;
                assert_eq!(gx.data(), &expected, "{dir:?} at {k}");
            }
        }
    }

    #[test]
    fn ties_resolve_to_first_in_scan_order() {
        let x = map(2, 3, &[5.0, 1.0, 5.0, 5.0, 0.0, 1.0]);
        let (_, a) = dmp_scan(&x, DmpDirection::quadrant(1, 1)).unwrap();
        assert_eq!(a.get(0, 1, 2), (0, 0));
        let (_, a) = dmp_scan(&x, DmpDirection::quadrant(1, -1)).unwrap();
        assert_eq!(a.get(0, 1, 0), (0, 2));
        let (_, a) = dmp_scan(&x, DmpDirection::quadrant(-1, 1)).unwrap();
        assert_eq!(a.get(0, 0, 2), (1, 0));
        let (_, a) = dmp_scan(&x, DmpDirection::columns(1)).unwrap();
        assert_eq!(a.get(0, 0, 2), (0, 0));
        let (_, a) = dmp_scan(&x, DmpDirection::GLOBAL).unwrap();
        assert_eq!(a.get(0, 1, 1), (0, 0));
    }

    #[test]
    fn comparison_counts() {
        let x = Tensor::<f32>::zeros(&[3, 5, 7]);
        for s in [
            PartitionScheme::Global,
            PartitionScheme::HalvesV,
            PartitionScheme::HalvesH,
            PartitionScheme::Quadrants,
        ] {
            let per_cell = if s == PartitionScheme::Quadrants { 2 } else { 1 };
            let total: u64 = s
                .directions()
                .into_iter()
                .map(|d| dmp_scan_with(&x, d, ScanFaults::default(), false).unwrap().comparisons)
                .sum();
            assert_eq!(total, (s.group_count() * 3 * 5 * 7 * per_cell) as u64);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let data: Vec<f64> = (0..4 * 6 * 5).map(|v| ((v * 37) % 23) as f64).collect();
        let x = Tensor::<f64>::from_f64(&[4, 6, 5], &data).unwrap();
        for d in DmpDirection::all() {
            assert_eq!(dmp_scan(&x, d).unwrap(), dmp_scan_parallel(&x, d).unwrap());
        }
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let x = Tensor::<f64>::zeros(&[2, 3, 3]);
        assert!(dmp_scan(&Tensor::<f64>::zeros(&[3, 3]), DmpDirection::GLOBAL).is_err());
        let (_, arg) = dmp_scan(&x, DmpDirection::GLOBAL).unwrap();
        assert!(dmp_backward(&Tensor::<f64>::zeros(&[2, 3, 4]), &arg).is_err());
    }

    #[test]
    fn fault_hook_changes_result() {
        let x = map(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let faulty = dmp_scan_with(&x, DmpDirection::quadrant(1, 1), ScanFaults { drop_self_term: true }, false)
            .unwrap();
        assert_eq!(faulty.h.data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    fn grid(c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor<f64>> {
        prop::collection::vec(-4i32..5, c * h * w)
            .prop_map(move |v| Tensor::from_f64(&[c, h, w], &v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>()).unwrap())
    }

    fn dims() -> impl Strategy<Value = Tensor<f64>> {
        (1usize..4, 1usize..7, 1usize..7).prop_flat_map(|(c, h, w)| grid(c, h, w))
    }

    proptest! {
        #[test]
        fn idempotent(x in dims(), d in 0usize..9) {
            let dir = DmpDirection::all()[d];
            let (h1, _) = dmp_scan(&x, dir).unwrap();
            let (h2, _) = dmp_scan(&h1, dir).unwrap();
            prop_assert_eq!(h1, h2);
        }

        #[test]
        fn monotone(x in dims(), bump in prop::collection::vec(0i32..3, 150), d in 0usize..9) {
            let dir = DmpDirection::all()[d];
            let mut y = x.clone();
            for (v, b) in y.data_mut().iter_mut().zip(bump.iter().cycle()) {
                *v += f64::from(*b);
            }
            let (hx, _) = dmp_scan(&x, dir).unwrap();
            let (hy, _) = dmp_scan(&y, dir).unwrap();
            prop_assert!(hx.data().iter().zip(hy.data()).all(|(a, b)| a <= b));
        }

        #[test]
        fn flip_symmetry(x in dims(), d in 0usize..9) {
            let dir = DmpDirection::all()[d];
            let (lhs, _) = dmp_scan(&x.flip_horizontal().unwrap(), dir).unwrap();
            let (rhs, _) = dmp_scan(&x, dir.mirrored_horizontally()).unwrap();
            prop_assert_eq!(lhs, rhs.flip_horizontal().unwrap());
            let (lhs, _) = dmp_scan(&x.flip_vertical().unwrap(), dir).unwrap();
            let (rhs, _) = dmp_scan(&x, dir.mirrored_vertically()).unwrap();
            prop_assert_eq!(lhs, rhs.flip_vertical().unwrap());
        }

        #[test]
        fn gradient_conservation(x in dims(), d in 0usize..9, seed in any::<u64>()) {
            let dir = DmpDirection::all()[d];
            let (_, arg) = dmp_scan(&x, dir).unwrap();
            // dyadic values keep every partial sum exact
            let g: Vec<f64> = (0..x.numel()).map(|k| ((seed >> (k % 60)) & 7) as f64 * 0.125).collect();
            let gt = Tensor::from_f64(x.shape(), &g).unwrap();
            let gx = dmp_backward(&gt, &arg).unwrap();
            prop_assert_eq!(gx.data().iter().sum::<f64>(), g.iter().sum::<f64>());
        }
    }
}
