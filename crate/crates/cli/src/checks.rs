//! Self-contained verification suite: every fast kernel against a direct
//! oracle, gradients against finite differences, and the symmetry and
//! invariance properties of the scan, the data generator and the loss.

use std::fmt;
use std::time::Instant;

use lfc_core::convnets::oracle::{
    naive_attention, naive_conv2d, naive_lfc, naive_matmul, region_argmax_oracle, region_max_oracle,
};
use lfc_core::convnets::{AttentionLayer, DilatedBlock};
use lfc_core::landmark::{dmp_backward, dmp_scan, dmp_scan_with, LfcConfig, LfcLayer, PartitionScheme, ScanFaults};
use lfc_core::net::{
    anchor_box, assign_positive, decode, encode, Film, HeadVariant, ModelConfig, Network, ANCHORS_PER_SCALE,
};
use lfc_core::synthground::{gen_dataset, hflip_augment, Vocab, IMAGE_SIZE};
use lfc_core::tensor::{finite_diff_check, finite_diff_check_coords, Graph, ParamSet};
use lfc_core::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCHEMES: [PartitionScheme; 4] = [
    PartitionScheme::Global,
    PartitionScheme::HalvesV,
    PartitionScheme::HalvesH,
    PartitionScheme::Quadrants,
];

const GRAD_TOL: f64 = 1e-4;
const FD_EPS: f64 = 1e-6;

/// Deliberate corruptions, for proving that the suite can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Faults {
    pub dmp: bool,
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub seed: u64,
    pub dmp_cases: usize,
    /// Largest `H`, `W` and `C` of the random scan inputs.
    pub dmp_max: (usize, usize),
    pub conservation_cases: usize,
    pub flip_cases: usize,
    pub flip_samples: usize,
    pub faults: Faults,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 42,
            dmp_cases: 200,
            dmp_max: (32, 16),
            conservation_cases: 100,
            flip_cases: 100,
            flip_samples: 1000,
            faults: Faults::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub seconds: f64,
    /// Set when the check could not run to completion.
    pub failure: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.max_error <= self.tolerance
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{status} {:<28} cases={:<5} max_err={:.3e} tol={:.1e} ({:.1}s)",
            self.name, self.cases, self.max_error, self.tolerance, self.seconds
        )?;
        if let Some(m) = &self.failure {
            write!(f, " error: {m}")?;
        }
        Ok(())
    }
}

type CheckFn = fn(&SuiteConfig) -> Result<(usize, f64)>;

/// `(name, tolerance, check)` for every check, in report order.
pub fn registry() -> Vec<(&'static str, f64, CheckFn)> {
    vec![
        ("dmp_scan", 0.0, dmp_scan_vs_oracle),
        ("dmp_argmax", 0.0, dmp_argmax_vs_oracle),
        ("dmp_gradient_conservation", 0.0, dmp_conservation),
        ("dmp_flip_symmetry", 0.0, dmp_flip_symmetry),
        ("conv2d_vs_naive", 1e-12, conv_vs_naive),
        ("matmul_vs_naive", 1e-12, matmul_vs_naive),
        ("attention_vs_naive", 1e-12, attention_vs_naive),
        ("lfc_vs_naive", 1e-12, lfc_vs_naive),
        ("lfc_global_degeneration", 1e-6, lfc_global_degeneration),
        ("grad_lfc", GRAD_TOL, grad_lfc),
        ("grad_film", GRAD_TOL, grad_film),
        ("grad_attention", GRAD_TOL, grad_attention),
        ("grad_dilated", GRAD_TOL, grad_dilated),
        ("grad_full_loss", GRAD_TOL, grad_full_loss),
        ("hflip_involution", 0.0, hflip_involution),
        ("assign_positive_exhaustive", 0.0, assign_positive_exhaustive),
        ("box_decode_encode", 1e-4, box_round_trip),
        ("loss_shift_invariance", 1e-9, loss_shift_invariance),
        ("pointwise_locality", 0.0, pointwise_locality),
    ]
}

pub fn run_check(name: &'static str, tolerance: f64, f: CheckFn, cfg: &SuiteConfig) -> CheckOutcome {
    let t0 = Instant::now();
    let (cases, max_error, failure) = match f(cfg) {
        Ok((n, e)) => (n, e, None),
        Err(e) => (0, f64::INFINITY, Some(e.to_string())),
    };
    CheckOutcome { name, cases, max_error, tolerance, seconds: t0.elapsed().as_secs_f64(), failure }
}

/// Run every check, reporting each as it finishes.
pub fn run_suite(cfg: &SuiteConfig, mut report: impl FnMut(&CheckOutcome)) -> Vec<CheckOutcome> {
    registry()
        .into_iter()
        .map(|(name, tol, f)| {
            let out = run_check(name, tol, f, cfg);
            report(&out);
            out
        })
        .collect()
}

fn rng(cfg: &SuiteConfig, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(salt))
}

fn uniform(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &data).expect("shape matches")
}

/// Small integers so that ties are common.
fn integers(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(-4..5))).collect();
    Tensor::from_f64(shape, &data).expect("shape matches")
}

/// Random scan input; case 0 is always the largest size.
fn scan_input(cfg: &SuiteConfig, case: usize, r: &mut ChaCha8Rng) -> Tensor<f64> {
    let (hw, c) = cfg.dmp_max;
    let shape = if case == 0 {
        [c, hw, hw]
    } else {
        [r.random_range(1..=c), r.random_range(1..=hw), r.random_range(1..=hw)]
    };
    if case.is_multiple_of(2) {
        integers(&shape, r)
    } else {
        uniform(&shape, r)
    }
}

fn dmp_scan_vs_oracle(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut r = rng(cfg, 1);
    let faults = ScanFaults { drop_self_term: cfg.faults.dmp };
    let mut worst: f64 = 0.0;
    for case in 0..cfg.dmp_cases {
        let x = scan_input(cfg, case, &mut r);
        let (c, h, w) = x.chw()?;
        for scheme in SCHEMES {
            for (grp, dir) in scheme.directions().into_iter().enumerate() {
                let got = dmp_scan_with(&x, dir, faults, false)?.h;
                for i in 0..h {
                    for j in 0..w {
                        let want = region_max_oracle(&x, scheme, (i, j), grp)?;
                        for ch in 0..c {
                            worst = worst.max((got.at(&[ch, i, j]) - want.data()[ch]).abs());
                        }
                    }
                }
            }
        }
    }
    Ok((cfg.dmp_cases, worst))
}

/// Counts argmax disagreements, so any mismatch fails.
fn dmp_argmax_vs_oracle(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut r = rng(cfg, 2);
    let mut wrong = 0usize;
    let cases = cfg.dmp_cases / 4;
    for case in 0..cases {
        let x = scan_input(cfg, case + 1, &mut r);
        let (c, h, w) = x.chw()?;
        for scheme in SCHEMES {
            for (grp, dir) in scheme.directions().into_iter().enumerate() {
                let (_, argmax) = dmp_scan(&x, dir)?;
                for i in 0..h {
                    for j in 0..w {
                        let want = region_argmax_oracle(&x, scheme, (i, j), grp)?;
                        wrong += (0..c).filter(|&ch| argmax.get(ch, i, j) != want[ch]).count();
                    }
                }
            }
        }
    }
    Ok((cases, wrong as f64))
}

fn dmp_conservation(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut r = rng(cfg, 3);
    let mut worst: f64 = 0.0;
    for case in 0..cfg.conservation_cases {
        let x = scan_input(cfg, case, &mut r);
        // Integer upstream gradients keep both sums exact in f64.
        let g = integers(x.shape(), &mut r);
        for dir in lfc_core::landmark::DmpDirection::all() {
            let (_, argmax) = dmp_scan(&x, dir)?;
            let back = dmp_backward(&g, &argmax)?;
            let (a, b): (f64, f64) = (back.data().iter().sum(), g.data().iter().sum());
            worst = worst.max((a - b).abs());
        }
    }
    Ok((cfg.conservation_cases, worst))
}

fn dmp_flip_symmetry(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut r = rng(cfg, 4);
    let mut worst: f64 = 0.0;
    for case in 0..cfg.flip_cases {
        let x = scan_input(cfg, case, &mut r);
        for dir in lfc_core::landmark::DmpDirection::all() {
            let pairs = [
                (x.flip_horizontal()?, dir.mirrored_horizontally(), true),
                (x.flip_vertical()?, dir.mirrored_vertically(), false),
            ];
            for (flipped, mirrored, horizontal) in pairs {
                let (a, _) = dmp_scan(&flipped, dir)?;
                let (b, _) = dmp_scan(&x, mirrored)?;
                let b = if horizontal { b.flip_horizontal()? } else { b.flip_vertical()? };
                worst = worst.max(a.max_abs_diff(&b));
            }
        }
    }
    Ok((cfg.flip_cases, worst))
}

fn conv_vs_naive(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut r = rng(cfg, 5);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for k in [1, 3] {
        for dilation in 1..=3 {
            let x = uniform(&[3, 9, 7], &mut r);
            let w = uniform(&[4, 3, k, k], &mut r);
            let mut g = Graph::new();
            let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
            let y = g.conv2d(xv, wv, dilation)?;
            worst = worst.max(g.value(y).max_abs_diff(&naive_conv2d(&x, &w, dilation)?));
            n += 1;
        }
    }
    Ok((n, worst))
}

fn matmul_vs_naive(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut r = rng(cfg, 6);
    let mut worst: f64 = 0.0;
    for (m, k, n) in [(1, 1, 1), (5, 7, 3), (9, 4, 13), (16, 16, 16)] {
        let (a, b) = (uniform(&[m, k], &mut r), uniform(&[k, n], &mut r));
        let mut g = Graph::new();
        let (av, bv) = (g.constant(a.clone()), g.constant(b.clone()));
        let y = g.matmul(av, bv)?;
        worst = worst.max(g.value(y).max_abs_diff(&naive_matmul(&a, &b)?));
    }
    Ok((4, worst))
}

fn attention_vs_naive(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut r = rng(cfg, 7);
    let mut params = ParamSet::<f64>::new(cfg.seed);
    let layer = AttentionLayer::new(&mut params, "att", 4, 3, 5);
    let x = uniform(&[4, 5, 6], &mut r);
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let xv = g.constant(x.clone());
    let y = layer.forward(&mut g, &p, xv)?;
    let want = naive_attention(
        params.get(layer.theta_w),
        params.get(layer.phi_w),
        params.get(layer.g_w),
        params.get(layer.out_w),
        &x,
    )?;
    Ok((1, g.value(y).max_abs_diff(&want)))
}

fn lfc_vs_naive(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut r = rng(cfg, 8);
    let mut worst: f64 = 0.0;
    for scheme in SCHEMES {
        for residual in [false, true] {
            let mut params = ParamSet::<f64>::new(cfg.seed);
            let l = LfcLayer::new(&mut params, "lfc", LfcConfig { scheme, c_in: 5, c_mid: 3, c_out: 5, residual });
            let x = uniform(&[5, 8, 9], &mut r);
            let mut g = Graph::new();
            let p = params.bind_frozen(&mut g);
            let xv = g.constant(x.clone());
            let y = l.forward(&mut g, &p, xv, false)?.y;
            let embed: Vec<_> = l.embed_w.iter().map(|&id| params.get(id).clone()).collect();
            let want = naive_lfc(&x, scheme, &embed, params.get(l.agg_w), residual)?;
            worst = worst.max(g.value(y).max_abs_diff(&want));
        }
    }
    Ok((SCHEMES.len() * 2, worst))
}

/// Relative error of a global-scheme LFC against max pooling the embedded
/// features over the whole map and broadcasting the aggregate.
pub fn global_degeneration_error(seed: u64, cases: usize) -> Result<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (c_in, c_mid, c_out) = (r.random_range(1..6), r.random_range(1..6), r.random_range(1..6));
        let (h, w) = (r.random_range(1..12), r.random_range(1..12));
        let mut params = ParamSet::<f64>::new(r.random());
        let cfg = LfcConfig { scheme: PartitionScheme::Global, c_in, c_mid, c_out, residual: false };
        let l = LfcLayer::new(&mut params, "lfc", cfg);
        let x = uniform(&[c_in, h, w], &mut r);
        let mut g = Graph::new();
        let p = params.bind_frozen(&mut g);
        let xv = g.constant(x.clone());
        let y = l.forward(&mut g, &p, xv, false)?.y;
        let y = g.value(y);
        let embed = params.get(l.embed_w[0]);
        let agg = params.get(l.agg_w);
        let pooled: Vec<f64> = (0..c_mid)
            .map(|m| {
                let mut best = f64::NEG_INFINITY;
                for i in 0..h {
                    for j in 0..w {
                        let e: f64 = (0..c_in).map(|c| embed.at(&[m, c, 0, 0]) * x.at(&[c, i, j])).sum();
                        best = best.max(e.max(0.0));
                    }
                }
                best
            })
            .collect();
        for o in 0..c_out {
            let want: f64 = (0..c_mid).map(|m| agg.at(&[o, m, 0, 0]) * pooled[m]).sum();
            for i in 0..h {
                for j in 0..w {
                    let err = (y.at(&[o, i, j]) - want).abs() / want.abs().max(1e-12);
                    worst = worst.max(if want == 0.0 { y.at(&[o, i, j]).abs() } else { err });
                }
            }
        }
    }
    Ok(worst)
}

fn lfc_global_degeneration(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    Ok((50, global_degeneration_error(cfg.seed, 50)?))
}

/// Worst finite-difference error of an LFC layer over its input and every
/// weight, for one scheme.
pub fn lfc_gradient_error(scheme: PartitionScheme, seed: u64) -> Result<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::<f64>::new(seed);
    let l = LfcLayer::new(&mut params, "lfc", LfcConfig { scheme, c_in: 3, c_mid: 3, c_out: 3, residual: true });
    let x = uniform(&[3, 5, 6], &mut r);
    let (pc, lc) = (params.clone(), l.clone());
    let mut worst = finite_diff_check(
        move |g, x| {
            let p = pc.bind_frozen(g);
            let y = lc.forward(g, &p, x, false)?.y;
            let y = g.sigmoid(y)?;
            g.sum(y)
        },
        &x,
        FD_EPS,
    )?;
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
            FD_EPS,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn grad_lfc(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut worst: f64 = 0.0;
    for (i, scheme) in SCHEMES.into_iter().enumerate() {
        worst = worst.max(lfc_gradient_error(scheme, cfg.seed + i as u64)?);
    }
    Ok((SCHEMES.len(), worst))
}

pub fn film_gradient_error(seed: u64) -> Result<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::<f64>::new(seed);
    let f = Film::new(&mut params, "film", 3, 4);
    *params.get_mut(f.gamma_w) = uniform(&[3, 4], &mut r);
    *params.get_mut(f.beta_w) = uniform(&[3, 4], &mut r);
    // A zero bias leaves pixels where every input channel is clipped sitting on the relu kink.
    *params.get_mut(f.conv_b) = uniform(&[3, 1, 1], &mut r);
    let x = uniform(&[3, 4, 4], &mut r);
    let l = uniform(&[4, 1], &mut r);
    let mut worst: f64 = 0.0;
    for id in [f.gamma_w, f.gamma_b, f.beta_w, f.beta_b, f.conv_w, f.conv_b] {
        let (pc, fc, xc, lc) = (params.clone(), f.clone(), x.clone(), l.clone());
        let err = finite_diff_check(
            move |g, w| {
                let p = pc.bind_frozen(g).with(id, w);
                let (x, l) = (g.constant(xc.clone()), g.constant(lc.clone()));
                let y = fc.forward(g, &p, x, l)?;
                let y = g.sigmoid(y)?;
                g.sum(y)
            },
            params.get(id),
            FD_EPS,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn grad_film(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    Ok((1, film_gradient_error(cfg.seed)?))
}

pub fn attention_gradient_error(seed: u64) -> Result<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::<f64>::new(seed);
    let a = AttentionLayer::new(&mut params, "att", 3, 2, 3);
    let x = uniform(&[3, 4, 3], &mut r);
    let (pc, ac) = (params.clone(), a.clone());
    let mut worst = finite_diff_check(
        move |g, x| {
            let p = pc.bind_frozen(g);
            let y = ac.forward(g, &p, x)?;
            let y = g.sigmoid(y)?;
            g.sum(y)
        },
        &x,
        FD_EPS,
    )?;
    for id in [a.theta_w, a.phi_w, a.g_w, a.out_w] {
        let (pc, ac, xc) = (params.clone(), a.clone(), x.clone());
        let err = finite_diff_check(
            move |g, w| {
                let p = pc.bind_frozen(g).with(id, w);
                let x = g.constant(xc.clone());
                let y = ac.forward(g, &p, x)?;
                let y = g.sigmoid(y)?;
                g.sum(y)
            },
            params.get(id),
            FD_EPS,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn grad_attention(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    Ok((1, attention_gradient_error(cfg.seed)?))
}

pub fn dilated_gradient_error(seed: u64) -> Result<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::<f64>::new(seed);
    let b = DilatedBlock::new(&mut params, "dil", 3, 2);
    let x = uniform(&[3, 8, 7], &mut r);
    let (pc, bc) = (params.clone(), b.clone());
    let on_x = finite_diff_check(
        move |g, x| {
            let p = pc.bind_frozen(g);
            let y = bc.forward(g, &p, x)?;
            let y = g.sigmoid(y)?;
            g.sum(y)
        },
        &x,
        FD_EPS,
    )?;
    let (pc, bc, id) = (params.clone(), b.clone(), b.w);
    let on_w = finite_diff_check(
        move |g, w| {
            let p = pc.bind_frozen(g).with(id, w);
            let x = g.constant(x.clone());
            let y = bc.forward(g, &p, x)?;
            let y = g.sigmoid(y)?;
            g.sum(y)
        },
        params.get(b.w),
        FD_EPS,
    )?;
    Ok(on_x.max(on_w))
}

fn grad_dilated(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    Ok((1, dilated_gradient_error(cfg.seed)?))
}

/// Finite-difference error of the complete training loss on one sample, over
/// sampled coordinates of the image and of weights from every stage.
pub fn full_loss_gradient_error(head: HeadVariant, seed: u64) -> Result<f64> {
    let sample = gen_dataset(1, seed, 1.0)?.remove(0);
    let ids = Vocab::default().encode_ids(&sample.expression)?;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    // Continuous random pixels keep every max and relu away from ties.
    let image: Vec<f64> = (0..3 * IMAGE_SIZE * IMAGE_SIZE).map(|_| r.random_range(0.0..1.0)).collect();
    let image = Tensor::from_f64(&[3, IMAGE_SIZE, IMAGE_SIZE], &image)?;
    let mut params = ParamSet::<f64>::new(seed);
    let net = Network::new(ModelConfig { head, ..ModelConfig::default() }, &mut params)?;
    let positive = assign_positive(&net.config.anchors, &net.config.scales, IMAGE_SIZE, &sample.target)?;
    let target = net.regression_target(&sample.target, positive);
    let loss = move |net: &Network, g: &mut Graph<f64>, p: &lfc_core::tensor::Bound, x| {
        let fwd = net.forward(g, p, x, &ids, false)?;
        net.loss(g, &fwd.outputs, positive, target, 5.0)
    };
    let names: Vec<String> = params
        .iter()
        .map(|(_, n, _)| n.to_string())
        .filter(|n| {
            n == "backbone.conv1.w" || n == "lang.table" || n.starts_with("film.s8.") || n.starts_with("head.")
                || n.starts_with("detect.s16.")
        })
        .collect();
    let mut worst: f64 = 0.0;
    for name in &names {
        let id = params.id(name).expect("listed from the set");
        let w = params.get(id);
        let coords: Vec<usize> = (0..6).map(|_| r.random_range(0..w.numel())).collect();
        let (pc, nc, ic) = (params.clone(), net.clone(), image.clone());
        let err = finite_diff_check_coords(
            move |g, w| {
                let p = pc.bind_frozen(g).with(id, w);
                let x = g.constant(ic.clone());
                loss(&nc, g, &p, x)
            },
            w,
            FD_EPS,
            &coords,
        )?;
        worst = worst.max(err);
    }
    let coords: Vec<usize> = (0..12).map(|_| r.random_range(0..image.numel())).collect();
    let (pc, nc) = (params.clone(), net.clone());
    let err = finite_diff_check_coords(
        move |g, x| {
            let p = pc.bind_frozen(g);
            loss(&nc, g, &p, x)
        },
        &image,
        FD_EPS,
        &coords,
    )?;
    Ok(worst.max(err))
}

fn grad_full_loss(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut worst: f64 = 0.0;
    for head in HeadVariant::ALL {
        worst = worst.max(full_loss_gradient_error(head, cfg.seed)?);
    }
    Ok((HeadVariant::ALL.len(), worst))
}

/// Samples whose double flip differs from the original anywhere.
pub fn hflip_mismatches(samples: usize, seed: u64) -> Result<usize> {
    let data = gen_dataset(samples, seed, 0.5)?;
    Ok(data.iter().filter(|s| hflip_augment(&hflip_augment(s)) != **s).count())
}

fn hflip_involution(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    Ok((cfg.flip_samples, hflip_mismatches(cfg.flip_samples, cfg.seed)? as f64))
}

fn assign_positive_exhaustive(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut r = rng(cfg, 9);
    let m = ModelConfig::default();
    let mut wrong = 0;
    let cases = 200;
    for _ in 0..cases {
        let (w, h) = (r.random_range(4.0..32.0), r.random_range(4.0..32.0));
        let (x, y) = (r.random_range(0.0..64.0 - w), r.random_range(0.0..64.0 - h));
        let gt = lfc_core::synthground::BBox::new(x, y, x + w, y + h);
        let got = assign_positive(&m.anchors, &m.scales, IMAGE_SIZE, &gt)?;
        let mut best = (f64::MIN, got);
        for (scale, &stride) in m.scales.iter().enumerate() {
            let n = IMAGE_SIZE / stride;
            for anchor in 0..ANCHORS_PER_SCALE {
                for row in 0..n {
                    for col in 0..n {
                        let iou = anchor_box(stride, m.anchors[scale][anchor], (row, col)).iou(&gt);
                        if iou > best.0 {
                            best = (iou, lfc_core::net::Candidate { scale, anchor, cell: (row, col) });
                        }
                    }
                }
            }
        }
        wrong += usize::from(best.1 != got);
    }
    Ok((cases, wrong as f64))
}

fn box_round_trip(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let data = gen_dataset(200, cfg.seed, 0.5)?;
    let m = ModelConfig::default();
    let mut worst: f64 = 0.0;
    for s in &data {
        let c = assign_positive(&m.anchors, &m.scales, IMAGE_SIZE, &s.target)?;
        let (stride, anchor) = (m.scales[c.scale], m.anchors[c.scale][c.anchor]);
        let b = decode(encode(&s.target, c.cell, anchor, stride), c.cell, anchor, stride);
        for (a, t) in [
            (b.x_min, s.target.x_min),
            (b.y_min, s.target.y_min),
            (b.x_max, s.target.x_max),
            (b.y_max, s.target.y_max),
        ] {
            worst = worst.max((a - t).abs());
        }
    }
    Ok((data.len(), worst))
}

fn loss_shift_invariance(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut r = rng(cfg, 10);
    let mut params = ParamSet::<f64>::new(cfg.seed);
    let net = Network::new(ModelConfig { head: HeadVariant::Pointwise, ..ModelConfig::default() }, &mut params)?;
    let positive = lfc_core::net::Candidate { scale: 0, anchor: 1, cell: (3, 4) };
    let outs: Vec<Tensor<f64>> = net.grid_sizes().into_iter().map(|n| uniform(&[15, n, n], &mut r)).collect();
    let eval = |shift: f64| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<_> = outs
            .iter()
            .zip(net.grid_sizes())
            .map(|(o, n)| {
                let mut o = o.clone();
                for a in 0..ANCHORS_PER_SCALE {
                    for q in 0..n * n {
                        o.data_mut()[(a * 5 + 4) * n * n + q] += shift;
                    }
                }
                g.constant(o)
            })
            .collect();
        let l = net.loss(&mut g, &vars, positive, [0.3, 0.6, 0.1, -0.2], 5.0)?;
        Ok(g.data(l)[0])
    };
    let base = eval(0.0)?;
    let mut worst: f64 = 0.0;
    for shift in [-3.0, 0.5, 11.0] {
        worst = worst.max((eval(shift)? - base).abs());
    }
    Ok((3, worst))
}

fn pointwise_locality(cfg: &SuiteConfig) -> Result<(usize, f64)> {
    let mut r = rng(cfg, 11);
    let mut params = ParamSet::<f64>::new(cfg.seed);
    let net = Network::new(ModelConfig { head: HeadVariant::Pointwise, ..ModelConfig::default() }, &mut params)?;
    let c = net.config.c();
    let y = uniform(&[c, 8, 8], &mut r);
    let run = |y: &Tensor<f64>| -> Result<Tensor<f64>> {
        let mut g = Graph::new();
        let p = params.bind_frozen(&mut g);
        let v = g.constant(y.clone());
        let (out, _) = net.context_forward(&mut g, &p, v, false)?;
        Ok(g.value(out).clone())
    };
    let base = run(&y)?;
    let mut worst: f64 = 0.0;
    for cell in [0, 27, 63] {
        let mut bumped = y.clone();
        for ch in 0..c {
            bumped.data_mut()[ch * 64 + cell] += 1.0;
        }
        let moved = run(&bumped)?;
        for (i, (a, b)) in base.data().iter().zip(moved.data()).enumerate() {
            if i % 64 != cell {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok((3, worst))
}
