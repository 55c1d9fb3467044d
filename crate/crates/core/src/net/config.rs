use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmark::PartitionScheme;

/// Width of the per-cell coordinate embedding appended to visual features.
pub const COORD_CHANNELS: usize = 8;
pub const ANCHORS_PER_SCALE: usize = 3;
/// Values predicted per anchor: `t_x, t_y, t_w, t_h, s`.
pub const ANCHOR_OUTPUTS: usize = 5;

/// Context module between scale fusion and the localisation head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadVariant {
    Lfc,
    Pointwise,
    Dilated,
    Attention,
}

impl HeadVariant {
    pub const ALL: [HeadVariant; 4] = [
        HeadVariant::Lfc,
        HeadVariant::Pointwise,
        HeadVariant::Dilated,
        HeadVariant::Attention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadVariant::Lfc => "lfc",
            HeadVariant::Pointwise => "pointwise",
            HeadVariant::Dilated => "dilated",
            HeadVariant::Attention => "attention",
        }
    }
}

impl fmt::Display for HeadVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadVariant::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| Error::UnknownToken(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Visual channels out of the backbone.
    pub c_v: usize,
    /// Per-slot language embedding width; the expression vector has `5·d_emb` entries.
    pub d_emb: usize,
    /// Feature strides in pixels, finest first.
    pub scales: Vec<usize>,
    pub head: HeadVariant,
    pub scheme: PartitionScheme,
    /// Embedding width of each LFC group.
    pub lfc_mid: usize,
    /// Skip connection around the LFC layer.
    pub lfc_residual: bool,
    /// Middle width of the attention block.
    pub attention_mid: usize,
    /// `(w, h)` in pixels, one list of three per scale.
    pub anchors: Vec<Vec<(f64, f64)>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let fine = [(10.0, 10.0), (14.0, 14.0), (18.0, 18.0)];
        ModelConfig {
            c_v: 32,
            d_emb: 8,
            scales: vec![8, 16],
            head: HeadVariant::Lfc,
            scheme: PartitionScheme::Quadrants,
            lfc_mid: 16,
            lfc_residual: true,
            attention_mid: 16,
            anchors: vec![fine.to_vec(), fine.iter().map(|&(w, h)| (w * 1.5, h * 1.5)).collect()],
        }
    }
}

impl ModelConfig {
    /// Fused channel count, visual plus coordinate.
    pub fn c(&self) -> usize {
        self.c_v + COORD_CHANNELS
    }

    pub fn c_l(&self) -> usize {
        crate::synthground::SLOTS * self.d_emb
    }

    pub fn validate(&self, image_size: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        if self.c_v == 0 || self.d_emb == 0 || self.lfc_mid == 0 || self.attention_mid == 0 {
            return bad("channel widths must be positive".into());
        }
        if self.scales.is_empty() || self.scales.len() != self.anchors.len() {
            return bad(format!("{} scales but {} anchor lists", self.scales.len(), self.anchors.len()));
        }
        if !self.scales.windows(2).all(|w| w[0] < w[1]) {
            return bad(format!("scales {:?} must be strictly increasing", self.scales));
        }
        for &s in &self.scales {
            if !matches!(s, 8 | 16 | 32) || !image_size.is_multiple_of(s) {
                return bad(format!("stride {s} not supported (use 8, 16 or 32)"));
            }
        }
        for a in &self.anchors {
            if a.len() != ANCHORS_PER_SCALE || a.iter().any(|&(w, h)| !(w > 0.0 && h > 0.0)) {
                return bad(format!("anchors {a:?} must be {ANCHORS_PER_SCALE} positive pairs"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub flip_prob: f64,
    /// Weight of the regression term.
    pub beta: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub critical_fraction: f64,
    /// Evaluate on the test split every this many epochs (and after the last).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 1e-4,
            flip_prob: 0.5,
            beta: 5.0,
            train_size: 8000,
            test_size: 1000,
            critical_fraction: 0.5,
            eval_every: 1,
        }
    }
}
