use crate::error::Result;
use crate::tensor::{Bound, Graph, ParamId, ParamSet, Scalar, Var};

/// Embedded-Gaussian non-local layer: `y_v = W_out · Σ_u softmax_u(θ(x_v)·φ(x_u)) · g(x_u)`.
/// No positional encoding is added.
#[derive(Clone, Debug)]
pub struct AttentionLayer {
    pub theta_w: ParamId,
    pub phi_w: ParamId,
    pub g_w: ParamId,
    pub out_w: ParamId,
    pub c_mid: usize,
}

impl AttentionLayer {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, prefix: &str, c_in: usize, c_mid: usize, c_out: usize) -> Self {
        AttentionLayer {
            theta_w: params.conv(&format!("{prefix}.theta"), c_mid, c_in, 1),
            phi_w: params.conv(&format!("{prefix}.phi"), c_mid, c_in, 1),
            g_w: params.conv(&format!("{prefix}.g"), c_mid, c_in, 1),
            out_w: params.conv(&format!("{prefix}.out"), c_out, c_mid, 1),
            c_mid,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let (_, h, w) = g.value(x).chw()?;
        let n = h * w;
        let cm = self.c_mid;
        let theta = g.conv2d(x, p[self.theta_w], 1)?;
        let theta = g.reshape(theta, &[cm, n])?;
        let theta_t = g.transpose(theta)?;
        let phi = g.conv2d(x, p[self.phi_w], 1)?;
        let phi = g.reshape(phi, &[cm, n])?;
        let affinity = g.matmul(theta_t, phi)?;
        let weights = g.softmax_rows(affinity)?;
        let gx = g.conv2d(x, p[self.g_w], 1)?;
        let gx = g.reshape(gx, &[cm, n])?;
        let gx_t = g.transpose(gx)?;
        let z = g.matmul(weights, gx_t)?;
        let z = g.transpose(z)?;
        let z = g.reshape(z, &[cm, h, w])?;
        g.conv2d(z, p[self.out_w], 1)
    }

    /// Normalised affinity matrix `[N, N]` for inspection.
    pub fn affinities<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let (_, h, w) = g.value(x).chw()?;
        let n = h * w;
        let theta = g.conv2d(x, p[self.theta_w], 1)?;
        let theta = g.reshape(theta, &[self.c_mid, n])?;
        let theta_t = g.transpose(theta)?;
        let phi = g.conv2d(x, p[self.phi_w], 1)?;
        let phi = g.reshape(phi, &[self.c_mid, n])?;
        let affinity = g.matmul(theta_t, phi)?;
        g.softmax_rows(affinity)
    }
}
