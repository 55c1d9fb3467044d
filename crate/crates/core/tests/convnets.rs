mod common;

use common::{max_rel_err, rng, uniform};
use lfc_core::convnets::oracle::{naive_attention, naive_conv2d, region_max_oracle};
use lfc_core::convnets::{AttentionLayer, DilatedBlock, PointwiseBlock, DILATION};
use lfc_core::landmark::PartitionScheme;
use lfc_core::tensor::{finite_diff_check, Graph, ParamSet};
use lfc_core::Tensor;

fn attention(c_in: usize, c_mid: usize, c_out: usize) -> (ParamSet<f64>, AttentionLayer) {
    let mut params = ParamSet::new(31);
    let layer = AttentionLayer::new(&mut params, "att", c_in, c_mid, c_out);
    (params, layer)
}

fn attend(params: &ParamSet<f64>, layer: &AttentionLayer, x: &Tensor<f64>) -> (Tensor<f64>, Tensor<f64>) {
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let xv = g.constant(x.clone());
    let y = layer.forward(&mut g, &p, xv).unwrap();
    let a = layer.affinities(&mut g, &p, xv).unwrap();
    (g.value(y).clone(), g.value(a).clone())
}

#[test]
fn region_oracle_trivial_cases() {
    let mut r = rng(30);
    let x = uniform(&[3, 4, 5], -1.0, 1.0, &mut r);
    let global = region_max_oracle(&x, PartitionScheme::Global, (2, 2), 0).unwrap();
    for c in 0..3 {
        let want = x.data()[c * 20..(c + 1) * 20].iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(global.data()[c], want);
    }
    let corner = region_max_oracle(&x, PartitionScheme::Quadrants, (0, 0), 0).unwrap();
    for c in 0..3 {
        assert_eq!(corner.data()[c], x.at(&[c, 0, 0]));
    }
    assert!(region_max_oracle(&x, PartitionScheme::Quadrants, (0, 0), 4).is_err());
    assert!(region_max_oracle(&x, PartitionScheme::Global, (4, 0), 0).is_err());
}

#[test]
fn attention_on_constant_map_is_uniform() {
    let (params, layer) = attention(3, 4, 2);
    let (y, a) = attend(&params, &layer, &Tensor::full(&[3, 4, 5], 0.3));
    assert!(a.data().iter().all(|&v| (v - 1.0 / 20.0).abs() < 1e-12));
    for c in 0..2 {
        let first = y.at(&[c, 0, 0]);
        assert!(y.data()[c * 20..(c + 1) * 20].iter().all(|&v| (v - first).abs() < 1e-12));
    }
}

#[test]
fn attention_single_node_is_out_of_g() {
    let (params, layer) = attention(3, 4, 2);
    let x = Tensor::from_f64(&[3, 1, 1], &[0.5, -1.0, 2.0]).unwrap();
    let (y, _) = attend(&params, &layer, &x);
    let gx = naive_conv2d(&x, params.get(layer.g_w), 1).unwrap();
    let want = naive_conv2d(&gx, params.get(layer.out_w), 1).unwrap();
    assert!(max_rel_err(&y, &want) < 1e-12);
}

#[test]
fn attention_matches_double_loop() {
    let mut r = rng(32);
    let (params, layer) = attention(5, 4, 3);
    let x = uniform(&[5, 6, 6], -1.0, 1.0, &mut r);
    let (y, a) = attend(&params, &layer, &x);
    let want = naive_attention(
        params.get(layer.theta_w),
        params.get(layer.phi_w),
        params.get(layer.g_w),
        params.get(layer.out_w),
        &x,
    )
    .unwrap();
    assert!(max_rel_err(&y, &want) < 1e-5);
    for row in a.data().chunks(36) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn attention_with_zero_queries_is_mean_pooling() {
    let mut r = rng(33);
    let (mut params, layer) = attention(4, 4, 4);
    *params.get_mut(layer.theta_w) = Tensor::zeros(&[4, 4, 1, 1]);
    *params.get_mut(layer.phi_w) = Tensor::zeros(&[4, 4, 1, 1]);
    let x = uniform(&[4, 5, 3], -1.0, 1.0, &mut r);
    let (y, _) = attend(&params, &layer, &x);
    let gx = naive_conv2d(&x, params.get(layer.g_w), 1).unwrap();
    let mut mean = Tensor::<f64>::zeros(&[4, 5, 3]);
    for c in 0..4 {
        let m = gx.data()[c * 15..(c + 1) * 15].iter().sum::<f64>() / 15.0;
        mean.data_mut()[c * 15..(c + 1) * 15].fill(m);
    }
    let want = naive_conv2d(&mean, params.get(layer.out_w), 1).unwrap();
    assert!(max_rel_err(&y, &want) < 1e-12);
}

#[test]
fn attention_gradients() {
    let mut r = rng(34);
    let (params, layer) = attention(3, 2, 3);
    let x = uniform(&[3, 4, 4], -1.0, 1.0, &mut r);
    let err = finite_diff_check(
        move |g, x| {
            let p = params.bind_frozen(g);
            let y = layer.forward(g, &p, x)?;
            let y = g.sigmoid(y)?;
            g.sum(y)
        },
        &x,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn pointwise_is_local_and_matches_naive() {
    let mut r = rng(35);
    let mut params = ParamSet::<f64>::new(36);
    let block = PointwiseBlock::new(&mut params, "pw", 3, 4);
    let eval = |x: &Tensor<f64>| {
        let mut g = Graph::new();
        let p = params.bind_frozen(&mut g);
        let xv = g.constant(x.clone());
        let y = block.forward(&mut g, &p, xv).unwrap();
        g.value(y).clone()
    };
    let x = uniform(&[3, 6, 7], -1.0, 1.0, &mut r);
    let want = naive_conv2d(&x, params.get(block.w), 1).unwrap().map(|v| v.max(0.0));
    let y = eval(&x);
    assert!(max_rel_err(&y, &want) < 1e-6);

    let mut bumped = x.clone();
    bumped.data_mut()[2 * 7 + 3] += 5.0;
    let y2 = eval(&bumped);
    for c in 0..4 {
        for i in 0..6 {
            for j in 0..7 {
                if (i, j) != (2, 3) {
                    assert_eq!(y.at(&[c, i, j]).to_bits(), y2.at(&[c, i, j]).to_bits());
                }
            }
        }
    }

    let mut hot = Tensor::<f64>::zeros(&[3, 6, 7]);
    hot.data_mut()[4 * 7 + 1] = 1.0;
    let y = eval(&hot);
    for c in 0..4 {
        for i in 0..6 {
            for j in 0..7 {
                if (i, j) != (4, 1) {
                    assert_eq!(y.at(&[c, i, j]), 0.0);
                }
            }
        }
    }
}

#[test]
fn dilated_block_receptive_field_and_naive() {
    let mut r = rng(37);
    let mut params = ParamSet::<f64>::new(38);
    let block = DilatedBlock::new(&mut params, "dil", 1, 1);
    *params.get_mut(block.w) = Tensor::ones(&[1, 1, 3, 3]);
    let eval = |params: &ParamSet<f64>, x: &Tensor<f64>| {
        let mut g = Graph::new();
        let p = params.bind_frozen(&mut g);
        let xv = g.constant(x.clone());
        let y = block.forward(&mut g, &p, xv).unwrap();
        g.value(y).clone()
    };
    // which inputs feed output (6,6)?
    let mut taps = Vec::new();
    for i in 0..13 {
        for j in 0..13 {
            let mut x = Tensor::<f64>::zeros(&[1, 13, 13]);
            x.data_mut()[i * 13 + j] = 1.0;
            if eval(&params, &x).at(&[0, 6, 6]) != 0.0 {
                taps.push((i, j));
            }
        }
    }
    let d = DILATION;
    let want: Vec<_> = [6 - d, 6, 6 + d]
        .iter()
        .flat_map(|&i| [6 - d, 6, 6 + d].map(move |j| (i, j)))
        .collect();
    assert_eq!(taps, want);

    let mut params = ParamSet::<f64>::new(39);
    let block = DilatedBlock::new(&mut params, "dil", 3, 2);
    let x = uniform(&[3, 9, 8], -1.0, 1.0, &mut r);
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let xv = g.constant(x.clone());
    let y = block.forward(&mut g, &p, xv).unwrap();
    let want = naive_conv2d(&x, params.get(block.w), 3).unwrap().map(|v| v.max(0.0));
    assert!(max_rel_err(g.value(y), &want) < 1e-6);

    let err = finite_diff_check(
        move |g, x| {
            let p = params.bind_frozen(g);
            let y = block.forward(g, &p, x)?;
            g.sum(y)
        },
        &x,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}
