use crate::error::{Error, Result};
use crate::synthground::BBox;
use crate::tensor::{Scalar, Tensor};

/// One candidate location: scale index, anchor index, and grid cell `(row, col)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Candidate {
    pub scale: usize,
    pub anchor: usize,
    pub cell: (usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub bbox: BBox,
    /// Sigmoid of the confidence logit.
    pub score: f64,
    pub source: Candidate,
}

/// Per-cell `(x_min, y_min, x_max, y_max, x_center, y_center, cell_w, cell_h)`
/// in normalised image coordinates, as an `[8, h, w]` map.
pub fn coord_features<T: Scalar>(h: usize, w: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); 8 * h * w];
    let (cw, ch) = (1.0 / w as f64, 1.0 / h as f64);
    for i in 0..h {
        for j in 0..w {
            let (x0, y0) = (j as f64 * cw, i as f64 * ch);
            let vals = [x0, y0, x0 + cw, y0 + ch, x0 + cw / 2.0, y0 + ch / 2.0, cw, ch];
            for (k, v) in vals.into_iter().enumerate() {
                data[(k * h + i) * w + j] = T::from_f64_lossy(v);
            }
        }
    }
    Tensor::new(&[8, h, w], data).expect("coordinate map shape")
}

/// Anchor box of `(scale, anchor)` centred on `cell`.
pub fn anchor_box(stride: usize, anchor: (f64, f64), cell: (usize, usize)) -> BBox {
    let s = stride as f64;
    BBox::from_center((cell.1 as f64 + 0.5) * s, (cell.0 as f64 + 0.5) * s, anchor.0, anchor.1)
}

/// The single positive: the candidate whose centred anchor overlaps `gt`
/// most. Exact ties keep the first candidate in (scale, anchor, row, col) order.
pub fn assign_positive(
    anchors: &[Vec<(f64, f64)>],
    scales: &[usize],
    image_size: usize,
    gt: &BBox,
) -> Result<Candidate> {
    if !gt.is_valid() {
        return Err(Error::Contract(format!("degenerate ground-truth box {gt:?}")));
    }
    let mut best: Option<(f64, Candidate)> = None;
    for (scale, (&stride, list)) in scales.iter().zip(anchors).enumerate() {
        let n = image_size / stride;
        for (anchor, &dims) in list.iter().enumerate() {
            for r in 0..n {
                for c in 0..n {
                    let iou = anchor_box(stride, dims, (r, c)).iou(gt);
                    if best.is_none_or(|(b, _)| iou > b) {
                        best = Some((iou, Candidate { scale, anchor, cell: (r, c) }));
                    }
                }
            }
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::Contract("no candidate locations configured".into()))
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Raw offsets `(t_x, t_y, t_w, t_h)` that [`decode`] maps back onto `gt`.
pub fn encode(gt: &BBox, cell: (usize, usize), anchor: (f64, f64), stride: usize) -> [f64; 4] {
    let (fx, fy) = cell_fraction(gt, cell, stride);
    [logit(fx), logit(fy), (gt.width() / anchor.0).ln(), (gt.height() / anchor.1).ln()]
}

/// Offset of the box centre inside `cell`, in cell units.
pub fn cell_fraction(gt: &BBox, cell: (usize, usize), stride: usize) -> (f64, f64) {
    let (cx, cy) = gt.center();
    let s = stride as f64;
    (cx / s - cell.1 as f64, cy / s - cell.0 as f64)
}

pub fn decode(t: [f64; 4], cell: (usize, usize), anchor: (f64, f64), stride: usize) -> BBox {
    let s = stride as f64;
    let cx = (sigmoid(t[0]) + cell.1 as f64) * s;
    let cy = (sigmoid(t[1]) + cell.0 as f64) * s;
    BBox::from_center(cx, cy, anchor.0 * t[2].exp(), anchor.1 * t[3].exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coord_top_left_cell() {
        let m = coord_features::<f64>(8, 8);
        let v: Vec<f64> = (0..8).map(|k| m.at(&[k, 0, 0])).collect();
        assert_eq!(v, [0.0, 0.0, 0.125, 0.125, 0.0625, 0.0625, 0.125, 0.125]);
        assert!(m.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!((m.at(&[4, 0, 4]) - 0.5).abs() <= 0.0625);
    }

    #[test]
    fn iou_closed_form() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(1.0, 1.0, 3.0, 3.0);
        assert!((a.iou(&b) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn zero_offsets_give_the_anchor() {
        let b = decode([0.0; 4], (2, 3), (10.0, 14.0), 8);
        assert_eq!(b, BBox::from_center(28.0, 20.0, 10.0, 14.0));
        let wide = decode([0.0, 0.0, 2f64.ln(), 0.0], (2, 3), (10.0, 14.0), 8);
        assert!((wide.width() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn decode_inverts_encode() {
        let gt = BBox::new(13.0, 40.0, 27.0, 49.0);
        let anchors = vec![vec![(10.0, 10.0), (14.0, 14.0), (18.0, 18.0)]];
        let c = assign_positive(&anchors, &[8], 64, &gt).unwrap();
        let back = decode(encode(&gt, c.cell, anchors[0][c.anchor], 8), c.cell, anchors[0][c.anchor], 8);
        for (a, b) in [(back.x_min, gt.x_min), (back.y_min, gt.y_min), (back.x_max, gt.x_max), (back.y_max, gt.y_max)] {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn exact_anchor_is_selected() {
        let anchors = vec![vec![(10.0, 10.0), (14.0, 14.0), (18.0, 18.0)], vec![(15.0, 15.0), (21.0, 21.0), (27.0, 27.0)]];
        let gt = anchor_box(16, (21.0, 21.0), (1, 2));
        let c = assign_positive(&anchors, &[8, 16], 64, &gt).unwrap();
        assert_eq!(c, Candidate { scale: 1, anchor: 1, cell: (1, 2) });
        assert!(assign_positive(&anchors, &[8, 16], 64, &BBox::new(3.0, 3.0, 3.0, 9.0)).is_err());
    }
}
