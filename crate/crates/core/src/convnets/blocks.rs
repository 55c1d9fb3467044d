use crate::error::Result;
use crate::tensor::{Bound, Graph, ParamId, ParamSet, Scalar, Var};

/// Dilation of the dilated baseline.
pub const DILATION: usize = 3;

/// `relu(conv1×1(x))`: no spatial mixing at all.
#[derive(Clone, Debug)]
pub struct PointwiseBlock {
    pub w: ParamId,
}

impl PointwiseBlock {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, prefix: &str, c_in: usize, c_out: usize) -> Self {
        PointwiseBlock {
            w: params.conv(&format!("{prefix}.w"), c_out, c_in, 1),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = g.conv2d(x, p[self.w], 1)?;
        g.relu(y)
    }
}

/// `relu(conv3×3(x, dilation 3))`: nine taps spaced three cells apart.
#[derive(Clone, Debug)]
pub struct DilatedBlock {
    pub w: ParamId,
    pub dilation: usize,
}

impl DilatedBlock {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, prefix: &str, c_in: usize, c_out: usize) -> Self {
        DilatedBlock {
            w: params.conv(&format!("{prefix}.w"), c_out, c_in, 3),
            dilation: DILATION,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = g.conv2d(x, p[self.w], self.dilation)?;
        g.relu(y)
    }
}
