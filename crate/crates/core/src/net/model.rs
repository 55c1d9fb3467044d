use super::boxes::{coord_features, decode, sigmoid, Candidate, Prediction};
use super::config::{HeadVariant, ModelConfig, ANCHORS_PER_SCALE, ANCHOR_OUTPUTS};
use crate::convnets::{AttentionLayer, DilatedBlock, PointwiseBlock};
use crate::error::{dim_err, Error, Result};
use crate::landmark::{LandmarkStore, LfcConfig, LfcLayer};
use crate::synthground::{BBox, Vocab, IMAGE_SIZE, SLOTS};
use crate::tensor::{Bound, Graph, ParamId, ParamSet, Scalar, Tensor, Var};

/// Channel widths of the three 3×3 backbone convolutions.
const BACKBONE: [usize; 3] = [16, 32, 32];

#[derive(Clone, Debug)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

impl Conv {
    fn new<T: Scalar>(params: &mut ParamSet<T>, name: &str, c_out: usize, c_in: usize, k: usize) -> Self {
        Conv {
            w: params.conv(&format!("{name}.w"), c_out, c_in, k),
            b: params.constant(&format!("{name}.b"), &[c_out, 1, 1], 0.0),
        }
    }

    fn apply<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = g.conv2d(x, p[self.w], 1)?;
        g.add(y, p[self.b])
    }

    fn relu<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = self.apply(g, p, x)?;
        g.relu(y)
    }
}

/// Language-conditioned feature-wise affine modulation followed by a 1×1 conv.
#[derive(Clone, Debug)]
pub struct Film {
    pub gamma_w: ParamId,
    pub gamma_b: ParamId,
    pub beta_w: ParamId,
    pub beta_b: ParamId,
    pub conv_w: ParamId,
    pub conv_b: ParamId,
}

impl Film {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, prefix: &str, c: usize, c_l: usize) -> Self {
        let std = (1.0 / c_l as f64).sqrt() * 0.1;
        Film {
            gamma_w: params.normal(&format!("{prefix}.gamma.w"), &[c, c_l], std),
            gamma_b: params.constant(&format!("{prefix}.gamma.b"), &[c, 1], 1.0),
            beta_w: params.normal(&format!("{prefix}.beta.w"), &[c, c_l], std),
            beta_b: params.constant(&format!("{prefix}.beta.b"), &[c, 1], 0.0),
            conv_w: params.conv(&format!("{prefix}.conv.w"), c, c, 1),
            conv_b: params.constant(&format!("{prefix}.conv.b"), &[c, 1, 1], 0.0),
        }
    }

    /// `relu(conv1×1(relu(γ(l) ⊙ x + β(l))))` with `l` of shape `[c_l, 1]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var, lang: Var) -> Result<Var> {
        let (c, _, _) = g.value(x).chw()?;
        let gamma = g.matmul(p[self.gamma_w], lang)?;
        let gamma = g.add(gamma, p[self.gamma_b])?;
        let beta = g.matmul(p[self.beta_w], lang)?;
        let beta = g.add(beta, p[self.beta_b])?;
        if g.shape(gamma)[0] != c {
            return dim_err(format!("FiLM produces {} channels for a {c}-channel map", g.shape(gamma)[0]));
        }
        let gamma = g.reshape(gamma, &[c, 1, 1])?;
        let beta = g.reshape(beta, &[c, 1, 1])?;
        let y = g.mul(gamma, x)?;
        let y = g.add(y, beta)?;
        let y = g.relu(y)?;
        let y = g.conv2d(y, p[self.conv_w], 1)?;
        let y = g.add(y, p[self.conv_b])?;
        g.relu(y)
    }
}

#[derive(Clone, Debug)]
pub enum Context {
    Lfc(LfcLayer),
    Pointwise(PointwiseBlock),
    Dilated(DilatedBlock),
    Attention(AttentionLayer),
}

/// Output of one forward pass.
pub struct Forward {
    /// `[A·5, h_d, w_d]` per scale, per-anchor blocks `(t_x, t_y, t_w, t_h, s)`.
    pub outputs: Vec<Var>,
    /// Fused map after the context module.
    pub fused: Var,
    pub landmarks: Option<LandmarkStore>,
}

/// Resample every map to the middle scale and average.
pub fn scale_fuse<T: Scalar>(g: &mut Graph<T>, maps: &[Var]) -> Result<Var> {
    if maps.is_empty() {
        return dim_err("scale_fuse needs at least one map");
    }
    let mid = (maps.len() - 1) / 2;
    let (_, h, w) = g.value(maps[mid]).chw()?;
    let mut acc: Option<Var> = None;
    for &m in maps {
        let (_, mh, mw) = g.value(m).chw()?;
        let r = if mh > h {
            g.max_downsample(m, h, w)?
        } else if mh < h {
            g.bilinear_upsample(m, h, w)?
        } else {
            let _ = mw;
            m
        };
        acc = Some(match acc {
            None => r,
            Some(a) => g.add(a, r)?,
        });
    }
    let sum = acc.expect("non-empty");
    if maps.len() == 1 {
        return Ok(sum);
    }
    g.scale(sum, T::one() / T::from_usize(maps.len()).expect("small"))
}

/// Distribute a fused map back to each grid size.
pub fn scale_unfuse<T: Scalar>(g: &mut Graph<T>, y: Var, sizes: &[usize]) -> Result<Vec<Var>> {
    let (_, h, _) = g.value(y).chw()?;
    sizes
        .iter()
        .map(|&n| {
            if n < h {
                g.max_downsample(y, n, n)
            } else if n > h {
                g.bilinear_upsample(y, n, n)
            } else {
                Ok(y)
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Network {
    pub config: ModelConfig,
    backbone: Vec<Conv>,
    project: Vec<Conv>,
    lang: ParamId,
    pub film: Vec<Film>,
    pub context: Context,
    detect: Vec<(Conv, Conv)>,
}

impl Network {
    pub fn new<T: Scalar>(config: ModelConfig, params: &mut ParamSet<T>) -> Result<Self> {
        config.validate(IMAGE_SIZE)?;
        let (c, c_l) = (config.c(), config.c_l());
        let mut c_in = 3;
        let backbone = BACKBONE
            .iter()
            .enumerate()
            .map(|(i, &c_out)| {
                let conv = Conv::new(params, &format!("backbone.conv{}", i + 1), c_out, c_in, 3);
                c_in = c_out;
                conv
            })
            .collect();
        let project = config
            .scales
            .iter()
            .map(|s| Conv::new(params, &format!("backbone.s{s}"), config.c_v, c_in, 1))
            .collect();
        let lang = params.normal("lang.table", &[Vocab::default().len(), config.d_emb], 1.0);
        let film = config
            .scales
            .iter()
            .map(|s| Film::new(params, &format!("film.s{s}"), c, c_l))
            .collect();
        let prefix = format!("head.{}", config.head);
        let context = match config.head {
            HeadVariant::Lfc => Context::Lfc(LfcLayer::new(
                params,
                &prefix,
                LfcConfig {
                    scheme: config.scheme,
                    c_in: c,
                    c_mid: config.lfc_mid,
                    c_out: c,
                    residual: config.lfc_residual,
                },
            )),
            HeadVariant::Pointwise => Context::Pointwise(PointwiseBlock::new(params, &prefix, c, c)),
            HeadVariant::Dilated => Context::Dilated(DilatedBlock::new(params, &prefix, c, c)),
            HeadVariant::Attention => {
                Context::Attention(AttentionLayer::new(params, &prefix, c, config.attention_mid, c))
            }
        };
        let detect = config
            .scales
            .iter()
            .map(|s| {
                (
                    Conv::new(params, &format!("detect.s{s}.hidden"), c, c, 1),
                    Conv::new(params, &format!("detect.s{s}.out"), ANCHORS_PER_SCALE * ANCHOR_OUTPUTS, c, 1),
                )
            })
            .collect();
        Ok(Network { config, backbone, project, lang, film, context, detect })
    }

    pub fn grid_sizes(&self) -> Vec<usize> {
        self.config.scales.iter().map(|s| IMAGE_SIZE / s).collect()
    }

    /// One `[c_v, 64/s, 64/s]` map per configured stride.
    pub fn backbone<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, image: Var) -> Result<Vec<Var>> {
        if g.shape(image) != [3, IMAGE_SIZE, IMAGE_SIZE] {
            return dim_err(format!("image must be [3,{IMAGE_SIZE},{IMAGE_SIZE}], got {:?}", g.shape(image)));
        }
        let mut x = image;
        let mut n = IMAGE_SIZE;
        for conv in &self.backbone {
            n /= 2;
            x = g.max_downsample(x, n, n)?;
            x = conv.relu(g, p, x)?;
        }
        self.grid_sizes()
            .into_iter()
            .zip(&self.project)
            .map(|(size, proj)| {
                let m = if size < n { g.max_downsample(x, size, size)? } else { x };
                proj.relu(g, p, m)
            })
            .collect()
    }

    /// Expression vector `[5·d_emb, 1]` from slot token ids.
    pub fn language<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, ids: &[usize; SLOTS]) -> Result<Var> {
        let d = self.config.d_emb;
        let index = ids
            .iter()
            .flat_map(|&id| (id * d..(id + 1) * d).map(|i| i as u32))
            .collect();
        g.gather(p[self.lang], index, &[SLOTS * d, 1])
    }

    pub fn context_forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        y: Var,
        keep_landmarks: bool,
    ) -> Result<(Var, Option<LandmarkStore>)> {
        Ok(match &self.context {
            Context::Lfc(l) => {
                let out = l.forward(g, p, y, keep_landmarks)?;
                (out.y, out.landmarks)
            }
            Context::Pointwise(b) => (b.forward(g, p, y)?, None),
            Context::Dilated(b) => (b.forward(g, p, y)?, None),
            Context::Attention(a) => (a.forward(g, p, y)?, None),
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        image: Var,
        ids: &[usize; SLOTS],
        keep_landmarks: bool,
    ) -> Result<Forward> {
        let visual = self.backbone(g, p, image)?;
        let lang = self.language(g, p, ids)?;
        let mut fused = Vec::with_capacity(visual.len());
        for (v, film) in visual.into_iter().zip(&self.film) {
            let (_, h, w) = g.value(v).chw()?;
            let coords = g.constant(coord_features(h, w));
            let x = g.concat(&[v, coords])?;
            fused.push(film.forward(g, p, x, lang)?);
        }
        let y = scale_fuse(g, &fused)?;
        let (y, landmarks) = self.context_forward(g, p, y, keep_landmarks)?;
        let per_scale = scale_unfuse(g, y, &self.grid_sizes())?;
        let outputs = per_scale
            .into_iter()
            .zip(&self.detect)
            .map(|(z, (hidden, out))| {
                let z = hidden.relu(g, p, z)?;
                out.apply(g, p, z)
            })
            .collect::<Result<_>>()?;
        Ok(Forward { outputs, fused: y, landmarks })
    }

    /// Flat position of a candidate among all confidence logits, ordered by
    /// scale, anchor, row, column.
    pub fn flat_index(&self, c: Candidate) -> usize {
        let sizes = self.grid_sizes();
        let before: usize = sizes[..c.scale].iter().map(|n| ANCHORS_PER_SCALE * n * n).sum();
        let n = sizes[c.scale];
        before + (c.anchor * n + c.cell.0) * n + c.cell.1
    }

    pub fn candidate(&self, mut flat: usize) -> Result<Candidate> {
        for (scale, n) in self.grid_sizes().into_iter().enumerate() {
            let per = ANCHORS_PER_SCALE * n * n;
            if flat < per {
                let cell = flat % (n * n);
                return Ok(Candidate {
                    scale,
                    anchor: flat / (n * n),
                    cell: (cell / n, cell % n),
                });
            }
            flat -= per;
        }
        Err(Error::Index { index: flat, len: self.candidate_count() })
    }

    pub fn candidate_count(&self) -> usize {
        self.grid_sizes().iter().map(|n| ANCHORS_PER_SCALE * n * n).sum()
    }

    fn channel_index(n: usize, anchor: usize, k: usize, cell: (usize, usize)) -> u32 {
        (((anchor * ANCHOR_OUTPUTS + k) * n + cell.0) * n + cell.1) as u32
    }

    /// All confidence logits as one flat vector, in [`Network::flat_index`] order.
    pub fn confidence_logits<T: Scalar>(&self, g: &mut Graph<T>, outputs: &[Var]) -> Result<Var> {
        let parts = outputs
            .iter()
            .zip(self.grid_sizes())
            .map(|(&o, n)| {
                let index: Vec<u32> = (0..ANCHORS_PER_SCALE)
                    .flat_map(|a| (0..n * n).map(move |q| Self::channel_index(n, a, 4, (q / n, q % n))))
                    .collect();
                let len = index.len();
                g.gather(o, index, &[len])
            })
            .collect::<Result<Vec<_>>>()?;
        g.concat(&parts)
    }

    /// `ℓ_loc + β·ℓ_reg`: softmax cross-entropy over every candidate with the
    /// single positive as target, plus MSE of `(σ(t_x), σ(t_y), t_w, t_h)`
    /// against `target` at the positive only.
    pub fn loss<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        outputs: &[Var],
        positive: Candidate,
        target: [f64; 4],
        beta: f64,
    ) -> Result<Var> {
        let logits = self.confidence_logits(g, outputs)?;
        let loc = g.softmax_ce(logits, self.flat_index(positive))?;
        let n = self.grid_sizes()[positive.scale];
        let o = outputs[positive.scale];
        let at = |k| Self::channel_index(n, positive.anchor, k, positive.cell);
        let xy = g.gather(o, vec![at(0), at(1)], &[2])?;
        let xy = g.sigmoid(xy)?;
        let wh = g.gather(o, vec![at(2), at(3)], &[2])?;
        let pred = g.concat(&[xy, wh])?;
        let t = g.constant(Tensor::from_f64(&[4], &target)?);
        let reg = g.mse(pred, t)?;
        let reg = g.scale(reg, T::from_f64_lossy(beta))?;
        g.add(loc, reg)
    }

    /// Regression target for `gt` at `positive`: in-cell centre fraction and
    /// log size ratio to the anchor.
    pub fn regression_target(&self, gt: &BBox, positive: Candidate) -> [f64; 4] {
        let stride = self.config.scales[positive.scale];
        let (fx, fy) = super::boxes::cell_fraction(gt, positive.cell, stride);
        let (aw, ah) = self.config.anchors[positive.scale][positive.anchor];
        [fx.clamp(0.0, 1.0), fy.clamp(0.0, 1.0), (gt.width() / aw).ln(), (gt.height() / ah).ln()]
    }

    /// Decode the box at the highest confidence, clipped to the image.
    pub fn predict<T: Scalar>(&self, outputs: &[&Tensor<T>]) -> Result<Prediction> {
        let mut best: Option<(f64, Candidate)> = None;
        for (scale, (o, n)) in outputs.iter().zip(self.grid_sizes()).enumerate() {
            for anchor in 0..ANCHORS_PER_SCALE {
                for r in 0..n {
                    for c in 0..n {
                        let s = o.data()[Self::channel_index(n, anchor, 4, (r, c)) as usize].to_f64_lossy();
                        if best.is_none_or(|(b, _)| s > b) {
                            best = Some((s, Candidate { scale, anchor, cell: (r, c) }));
                        }
                    }
                }
            }
        }
        let (s, src) = best.ok_or_else(|| Error::Contract("no outputs to decode".into()))?;
        let n = self.grid_sizes()[src.scale];
        let o = outputs[src.scale];
        let t = [0, 1, 2, 3].map(|k| o.data()[Self::channel_index(n, src.anchor, k, src.cell) as usize].to_f64_lossy());
        let stride = self.config.scales[src.scale];
        let bbox = decode(t, src.cell, self.config.anchors[src.scale][src.anchor], stride);
        let size = IMAGE_SIZE as f64;
        Ok(Prediction {
            bbox: bbox.clipped(size, size),
            score: sigmoid(s),
            source: src,
        })
    }
}
