use serde::{Deserialize, Serialize};

use super::dmp::{dmp_scan, dmp_scan_parallel, IndexMap};
use super::partition::PartitionScheme;
use crate::error::{dim_err, Error, Result};
use crate::tensor::{Bound, Graph, ParamId, ParamSet, Scalar, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LfcConfig {
    pub scheme: PartitionScheme,
    pub c_in: usize,
    pub c_mid: usize,
    pub c_out: usize,
    /// Add the input back onto the aggregated map when `c_in == c_out`.
    pub residual: bool,
}

/// Landmark feature convolution: per-group 1×1 embedding, directional max
/// pooling, and a 1×1 aggregation over the concatenated group maps.
#[derive(Clone, Debug)]
pub struct LfcLayer {
    pub config: LfcConfig,
    /// One `[C_mid, C_in, 1, 1]` embedding per group; never shared.
    pub embed_w: Vec<ParamId>,
    /// `[C_out, k·C_mid, 1, 1]`.
    pub agg_w: ParamId,
    /// Scan channels on the rayon pool; results are identical.
    pub parallel: bool,
}

/// A single decoded landmark: the argmax source of one channel of one group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Landmark {
    pub group: usize,
    pub channel: usize,
    pub row: usize,
    pub col: usize,
}

/// Argmax provenance of every group from one forward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LandmarkStore {
    pub scheme: PartitionScheme,
    pub groups: Vec<IndexMap>,
}

impl LandmarkStore {
    /// Every per-channel argmax source for `node`, across all groups.
    pub fn decode(&self, node: (usize, usize)) -> Result<Vec<Landmark>> {
        let [c, h, w] = self.groups.first().map(IndexMap::shape).unwrap_or([0, 0, 0]);
        if node.0 >= h || node.1 >= w {
            return Err(Error::Contract(format!("node {node:?} outside {h}x{w} map")));
        }
        let mut out = Vec::with_capacity(self.groups.len() * c);
        for (group, map) in self.groups.iter().enumerate() {
            for channel in 0..c {
                let (row, col) = map.get(channel, node.0, node.1);
                out.push(Landmark { group, channel, row, col });
            }
        }
        Ok(out)
    }
}

/// Decode landmarks of `node`; fails when the forward pass kept no store.
pub fn decode_landmarks(store: Option<&LandmarkStore>, node: (usize, usize)) -> Result<Vec<Landmark>> {
    store
        .ok_or_else(|| Error::Contract("landmark store was not enabled for this forward pass".into()))?
        .decode(node)
}

pub struct LfcOutput {
    pub y: Var,
    pub landmarks: Option<LandmarkStore>,
}

impl LfcLayer {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, prefix: &str, config: LfcConfig) -> Self {
        let k = config.scheme.group_count();
        let embed_w = (0..k)
            .map(|g| params.conv(&format!("{prefix}.embed.{g}"), config.c_mid, config.c_in, 1))
            .collect();
        let agg_std = (1.0 / (k * config.c_mid) as f64).sqrt();
        let agg_w = params.normal(&format!("{prefix}.agg"), &[config.c_out, k * config.c_mid, 1, 1], agg_std);
        LfcLayer { config, embed_w, agg_w, parallel: false }
    }

    pub fn group_count(&self) -> usize {
        self.embed_w.len()
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var, keep_landmarks: bool) -> Result<LfcOutput> {
        let (c, _, _) = g.value(x).chw()?;
        if c != self.config.c_in {
            return dim_err(format!("LFC expects {} input channels, got {c}", self.config.c_in));
        }
        let mut pooled = Vec::with_capacity(self.group_count());
        let mut groups = Vec::new();
        for (w, dir) in self.embed_w.iter().zip(self.config.scheme.directions()) {
            let e = g.conv2d(x, p[*w], 1)?;
            let e = g.relu(e)?;
            let (_, argmax) = if self.parallel {
                dmp_scan_parallel(g.value(e), dir)?
            } else {
                dmp_scan(g.value(e), dir)?
            };
            let shape = g.shape(e).to_vec();
            pooled.push(g.gather(e, argmax.flat_indices(), &shape)?);
            if keep_landmarks {
                groups.push(argmax);
            }
        }
        let stacked = g.concat(&pooled)?;
        let mut y = g.conv2d(stacked, p[self.agg_w], 1)?;
        if self.config.residual && self.config.c_in == self.config.c_out {
            y = g.add(y, x)?;
        }
        Ok(LfcOutput {
            y,
            landmarks: keep_landmarks.then_some(LandmarkStore {
                scheme: self.config.scheme,
                groups,
            }),
        })
    }
}
