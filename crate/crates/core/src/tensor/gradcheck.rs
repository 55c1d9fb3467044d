use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Largest `|analytic − central difference| / max(1, |central difference|)`
/// over every coordinate of `x`.
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    finite_diff_check_coords(f, x, eps, &coords)
}

/// [`finite_diff_check`] restricted to the listed flat coordinates.
pub fn finite_diff_check_coords<F>(f: F, x: &Tensor<f64>, eps: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let loss = f(&mut g, xv)?;
    g.backward(loss)?;
    let analytic = g.grad(xv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |probe: Tensor<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let xv = g.constant(probe);
        let out = f(&mut g, xv)?;
        Ok(g.data(out)[0])
    };
    let mut worst: f64 = 0.0;
    for &i in coords {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_f64(shape, &data).unwrap()
    }

    #[test]
    fn sum_of_squares() {
        let x = random(&[4, 5], 1);
        let err = finite_diff_check(
            |g, x| {
                let sq = g.mul(x, x)?;
                g.sum(sq)
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn relu_sum_away_from_zero() {
        let mut x = random(&[10], 2);
        for v in x.data_mut() {
            if v.abs() < 0.05 {
                *v = 0.5;
            }
        }
        let err = finite_diff_check(
            |g, x| {
                let r = g.relu(x)?;
                g.sum(r)
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn composed_graph() {
        // conv -> sigmoid -> upsample -> max_downsample -> matmul -> softmax_ce
        let x = random(&[2, 4, 4], 3);
        let w = random(&[3, 2, 3, 3], 4);
        let m = random(&[4, 5], 5);
        let err = finite_diff_check(
            |g, x| {
                let w = g.constant(w.clone());
                let y = g.conv2d(x, w, 2)?;
                let y = g.sigmoid(y)?;
                let y = g.bilinear_upsample(y, 8, 8)?;
                let y = g.max_downsample(y, 2, 2)?;
                let y = g.reshape(y, &[3, 4])?;
                let m = g.constant(m.clone());
                let z = g.matmul(y, m)?;
                let z = g.exp(z)?;
                let z = g.softmax_rows(z)?;
                let z = g.reshape(z, &[15])?;
                g.softmax_ce(z, 7)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
