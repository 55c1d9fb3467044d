mod common;

use common::{max_rel_err, rng, uniform};
use lfc_core::convnets::oracle::{naive_lfc, region_argmax_oracle, region_max_oracle};
use lfc_core::landmark::{
    decode_landmarks, dmp_backward, dmp_scan, splat_heatmap, DmpDirection, Landmark, LfcConfig, LfcLayer,
    PartitionScheme,
};
use lfc_core::tensor::{finite_diff_check, Graph, ParamSet};
use lfc_core::Tensor;
use rand::Rng;

const SCHEMES: [PartitionScheme; 4] = [
    PartitionScheme::Global,
    PartitionScheme::HalvesV,
    PartitionScheme::HalvesH,
    PartitionScheme::Quadrants,
];

fn layer(scheme: PartitionScheme, c_in: usize, c_mid: usize, c_out: usize, residual: bool) -> (ParamSet<f64>, LfcLayer) {
    let mut params = ParamSet::new(5);
    let cfg = LfcConfig { scheme, c_in, c_mid, c_out, residual };
    let l = LfcLayer::new(&mut params, "lfc", cfg);
    (params, l)
}

fn run(params: &ParamSet<f64>, l: &LfcLayer, x: &Tensor<f64>) -> Tensor<f64> {
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let xv = g.constant(x.clone());
    let out = l.forward(&mut g, &p, xv, false).unwrap();
    g.value(out.y).clone()
}

#[test]
fn scan_matches_membership_oracle_everywhere() {
    let mut r = rng(21);
    for case in 0..24 {
        let (c, h, w) = (r.random_range(1..5), r.random_range(1..10), r.random_range(1..10));
        // coarse integer values so ties are common
        let x = common::integers(&[c, h, w], -3, 4, &mut r);
        for scheme in SCHEMES {
            for (grp, dir) in scheme.directions().into_iter().enumerate() {
                let (hm, argmax) = dmp_scan(&x, dir).unwrap();
                for i in 0..h {
                    for j in 0..w {
                        let want = region_max_oracle(&x, scheme, (i, j), grp).unwrap();
                        let src = region_argmax_oracle(&x, scheme, (i, j), grp).unwrap();
                        for ch in 0..c {
                            assert_eq!(hm.at(&[ch, i, j]), want.data()[ch], "case {case} {scheme:?}/{grp}");
                            assert_eq!(argmax.get(ch, i, j), src[ch], "case {case} {scheme:?}/{grp}");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn backward_routes_to_argmax() {
    let mut r = rng(22);
    let x = uniform(&[2, 5, 4], -1.0, 1.0, &mut r);
    let (_, argmax) = dmp_scan(&x, DmpDirection::quadrant(-1, 1)).unwrap();
    let mut gh = Tensor::<f64>::zeros(&[2, 5, 4]);
    gh.data_mut()[4 * 5 + 2 * 4 + 3] = 1.0;
    let gx = dmp_backward(&gh, &argmax).unwrap();
    let (a, b) = argmax.get(1, 2, 3);
    assert_eq!(gx.at(&[1, a, b]), 1.0);
    assert_eq!(gx.data().iter().sum::<f64>(), 1.0);
    assert!(dmp_backward(&Tensor::<f64>::zeros(&[2, 5, 3]), &argmax).is_err());
}

#[test]
fn lfc_matches_direct_evaluation() {
    let mut r = rng(23);
    for scheme in SCHEMES {
        for residual in [false, true] {
            let (params, l) = layer(scheme, 6, 4, 6, residual);
            let x = uniform(&[6, 9, 11], -1.0, 1.0, &mut r);
            let embed: Vec<_> = l.embed_w.iter().map(|&id| params.get(id).clone()).collect();
            let want = naive_lfc(&x, scheme, &embed, params.get(l.agg_w), residual).unwrap();
            let err = max_rel_err(&run(&params, &l, &x), &want);
            assert!(err < 1e-5, "{scheme:?} residual={residual}: {err}");
        }
    }
}

#[test]
fn lfc_matches_direct_evaluation_at_full_size_in_f32() {
    let mut r = rng(24);
    let mut params = ParamSet::<f32>::new(6);
    let cfg = LfcConfig { scheme: PartitionScheme::Quadrants, c_in: 16, c_mid: 8, c_out: 16, residual: true };
    let l = LfcLayer::new(&mut params, "lfc", cfg);
    let x = uniform(&[16, 32, 32], -1.0, 1.0, &mut r).cast::<f32>();
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let xv = g.constant(x.clone());
    let y = l.forward(&mut g, &p, xv, false).unwrap().y;
    let got = g.value(y).cast::<f64>();
    let embed: Vec<_> = l.embed_w.iter().map(|&id| params.get(id).cast::<f64>()).collect();
    let want = naive_lfc(&x.cast::<f64>(), cfg.scheme, &embed, &params.get(l.agg_w).cast::<f64>(), true).unwrap();
    let scale = want.data().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let rel = got.max_abs_diff(&want) / scale;
    assert!(rel < 1e-5, "{rel}");
}

#[test]
fn global_scheme_is_global_max_pooling() {
    let mut r = rng(25);
    let (params, l) = layer(PartitionScheme::Global, 3, 5, 4, false);
    let x = uniform(&[3, 7, 6], -1.0, 1.0, &mut r);
    let y = run(&params, &l, &x);
    let embed = params.get(l.embed_w[0]);
    let agg = params.get(l.agg_w);
    for o in 0..4 {
        let want: f64 = (0..5)
            .map(|m| {
                let mut best = f64::NEG_INFINITY;
                for i in 0..7 {
                    for j in 0..6 {
                        let e: f64 = (0..3).map(|c| embed.at(&[m, c, 0, 0]) * x.at(&[c, i, j])).sum();
                        best = best.max(e.max(0.0));
                    }
                }
                agg.at(&[o, m, 0, 0]) * best
            })
            .sum();
        for i in 0..7 {
            for j in 0..6 {
                let got = y.at(&[o, i, j]);
                assert!((got - want).abs() <= 1e-6 * want.abs().max(1e-12), "{got} vs {want}");
            }
        }
    }
}

#[test]
fn global_identity_weights_on_constant_map() {
    let mut params = ParamSet::<f64>::new(0);
    let cfg = LfcConfig { scheme: PartitionScheme::Global, c_in: 2, c_mid: 2, c_out: 2, residual: false };
    let l = LfcLayer::new(&mut params, "lfc", cfg);
    for id in [l.embed_w[0], l.agg_w] {
        let eye = Tensor::from_f64(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        *params.get_mut(id) = eye;
    }
    for c0 in [0.7, -0.4] {
        let y = run(&params, &l, &Tensor::full(&[2, 3, 3], c0));
        assert!(y.data().iter().all(|&v| v == f64::max(c0, 0.0)));
    }
}

#[test]
fn halves_v_is_row_invariant_for_column_constant_input() {
    let mut r = rng(26);
    let (params, l) = layer(PartitionScheme::HalvesV, 3, 4, 3, false);
    let col = uniform(&[3, 1, 8], -1.0, 1.0, &mut r);
    let mut data = Vec::new();
    for c in 0..3 {
        for _ in 0..5 {
            data.extend_from_slice(&col.data()[c * 8..(c + 1) * 8]);
        }
    }
    let y = run(&params, &l, &Tensor::new(&[3, 5, 8], data).unwrap());
    for c in 0..3 {
        for i in 1..5 {
            for j in 0..8 {
                assert_eq!(y.at(&[c, i, j]), y.at(&[c, 0, j]));
            }
        }
    }
}

#[test]
fn lfc_gradients_match_finite_differences() {
    let mut r = rng(27);
    for scheme in SCHEMES {
        let (params, l) = layer(scheme, 3, 3, 3, true);
        let x = uniform(&[3, 5, 6], -1.0, 1.0, &mut r);
        let (pc, lc) = (params.clone(), l.clone());
        let err = finite_diff_check(
            move |g, x| {
                let p = pc.bind_frozen(g);
                let y = lc.forward(g, &p, x, false)?.y;
                let y = g.sigmoid(y)?;
                g.sum(y)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "{scheme:?} input: {err}");
        for &id in l.embed_w.iter().chain([&l.agg_w]) {
            let (pc, lc, xc) = (params.clone(), l.clone(), x.clone());
            let err = finite_diff_check(
                move |g, w| {
                    let p = pc.bind_frozen(g).with(id, w);
                    let x = g.constant(xc.clone());
                    let y = lc.forward(g, &p, x, false)?.y;
                    let y = g.sigmoid(y)?;
                    g.sum(y)
                },
                params.get(id),
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-4, "{scheme:?} {}: {err}", params.name(id));
        }
    }
}

#[test]
fn decode_requires_store() {
    assert!(decode_landmarks(None, (0, 0)).is_err());
}

#[test]
fn decode_global_unique_max() {
    let mut params = ParamSet::<f64>::new(0);
    let cfg = LfcConfig { scheme: PartitionScheme::Global, c_in: 2, c_mid: 2, c_out: 2, residual: false };
    let l = LfcLayer::new(&mut params, "lfc", cfg);
    *params.get_mut(l.embed_w[0]) = Tensor::from_f64(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]).unwrap();
    let mut x = Tensor::<f64>::full(&[2, 4, 5], 0.1);
    x.data_mut()[2 * 5 + 3] = 2.0;
    x.data_mut()[20 + 2 * 5 + 3] = 3.0;
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let xv = g.constant(x);
    let out = l.forward(&mut g, &p, xv, true).unwrap();
    for node in [(0, 0), (3, 4), (1, 2)] {
        let marks = decode_landmarks(out.landmarks.as_ref(), node).unwrap();
        assert_eq!(marks.len(), 2);
        assert!(marks.iter().all(|m| m.group == 0 && (m.row, m.col) == (2, 3)));
    }
    assert!(decode_landmarks(out.landmarks.as_ref(), (4, 0)).is_err());
}

fn decode_all(scheme: PartitionScheme, x: &Tensor<f64>, c_mid: usize, node: (usize, usize)) -> Vec<Landmark> {
    let (c_in, _, _) = x.chw().unwrap();
    let (params, l) = layer(scheme, c_in, c_mid, 2, false);
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let xv = g.constant(x.clone());
    let out = l.forward(&mut g, &p, xv, true).unwrap();
    decode_landmarks(out.landmarks.as_ref(), node).unwrap()
}

#[test]
fn decoded_landmarks_respect_membership() {
    let mut r = rng(28);
    for scheme in SCHEMES {
        for _ in 0..10 {
            let x = uniform(&[3, 7, 8], -1.0, 1.0, &mut r);
            let node = (r.random_range(0..7), r.random_range(0..8));
            let marks = decode_all(scheme, &x, 4, node);
            assert_eq!(marks.len(), scheme.group_count() * 4);
            for m in marks {
                assert!(scheme.contains(m.group, node, (m.row, m.col)).unwrap(), "{scheme:?} {m:?} {node:?}");
            }
        }
    }
}

#[test]
fn one_hot_landmark_is_hot_pixel_or_region_oracle() {
    let scheme = PartitionScheme::Quadrants;
    let hot = (2, 5);
    let mut x = Tensor::<f64>::zeros(&[1, 6, 7]);
    x.data_mut()[hot.0 * 7 + hot.1] = 1.0;
    let mut params = ParamSet::<f64>::new(0);
    let cfg = LfcConfig { scheme, c_in: 1, c_mid: 1, c_out: 1, residual: false };
    let l = LfcLayer::new(&mut params, "lfc", cfg);
    for &id in &l.embed_w {
        *params.get_mut(id) = Tensor::ones(&[1, 1, 1, 1]);
    }
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let xv = g.constant(x.clone());
    let out = l.forward(&mut g, &p, xv, true).unwrap();
    for i in 0..6 {
        for j in 0..7 {
            for m in decode_landmarks(out.landmarks.as_ref(), (i, j)).unwrap() {
                if scheme.contains(m.group, (i, j), hot).unwrap() {
                    assert_eq!((m.row, m.col), hot);
                } else {
                    // all-zero region: first cell in scan order, which is a corner of the region
                    let want = region_argmax_oracle(&x, scheme, (i, j), m.group).unwrap()[0];
                    assert_eq!((m.row, m.col), want);
                }
            }
        }
    }
}

#[test]
fn heatmap_peaks_at_landmark_cell_centre() {
    let lm = Landmark { group: 0, channel: 0, row: 3, col: 5 };
    let map = splat_heatmap(&[lm], 64, 64, 8, 1.0 / 3.0).unwrap();
    let (idx, _) = map
        .data()
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let (r, c) = (idx / 64, idx % 64);
    assert!((r == 27 || r == 28) && (c == 43 || c == 44), "peak at {r},{c}");
    let twice = splat_heatmap(&[lm, lm], 64, 64, 8, 1.0 / 3.0).unwrap();
    assert!(twice.max_abs_diff(&map) < 1e-12);
}
