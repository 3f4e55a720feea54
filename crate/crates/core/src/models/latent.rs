//! Latent codes: encoder read-out, reparameterized sampling, interpolation.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::models::losses::Bound;
use crate::tensor::Tensor;

/// Encoder output on a graph: means, log-variances and the drawn sample.
#[derive(Debug, Clone, Copy)]
pub struct LatentVars {
    pub mu: Var,
    pub log_var: Var,
    pub sample: Var,
}

/// Materialized latent code for one batch, `[B, latent]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub mu: Tensor,
    pub log_var: Tensor,
    pub sample: Tensor,
}

impl LatentVars {
    pub fn values(&self, g: &Graph) -> LatentCode {
        LatentCode {
            mu: (*g.value(self.mu)).clone(),
            log_var: (*g.value(self.log_var)).clone(),
            sample: (*g.value(self.sample)).clone(),
        }
    }
}

/// Splits an encoder's `[B, 2L]` output into `(mu, log_var)`. The returned
/// `sample` is `mu` until [`reparameterize`] fills it in.
pub fn encode(g: &Graph, encoder: &Bound<'_>, condition: Var) -> Result<LatentVars> {
    let (out, _) = encoder.apply(g, condition)?;
    split_code(g, out)
}

pub fn split_code(g: &Graph, out: Var) -> Result<LatentVars> {
    let s = g.shape(out);
    if s.len() != 2 || !s[1].is_multiple_of(2) {
        return Err(Error::invalid_shape("encode", format!("expected [B, 2L], got {s:?}")));
    }
    let l = s[1] / 2;
    let mu = g.narrow(out, 1, 0, l)?;
    let log_var = g.narrow(out, 1, l, l)?;
    Ok(LatentVars {
        mu,
        log_var,
        sample: mu,
    })
}

/// `mu + exp(log_var / 2) ⊙ eta`.
pub fn reparameterize(g: &Graph, mu: Var, log_var: Var, eta: Var) -> Result<Var> {
    let sigma = g.exp(g.scale(log_var, 0.5));
    g.add(mu, g.mul(sigma, eta)?)
}

/// `steps` evenly spaced codes from `a` to `b`, both endpoints included.
pub fn interpolate_latents(a: &Tensor, b: &Tensor, steps: usize) -> Result<Vec<Tensor>> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    if a.shape() != b.shape() {
        return Err(Error::shape("interpolate_latents", a.shape(), b.shape()));
    }
    (0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            a.zip_map(b, "interpolate_latents", |x, y| (1.0 - t) * x + t * y)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let mut rng = RngState::new(1);
        let a = rng.sample_normal(&[6]);
        let b = rng.sample_normal(&[6]);
        let two = interpolate_latents(&a, &b, 2).unwrap();
        assert_eq!(two, vec![a.clone(), b.clone()]);
        let three = interpolate_latents(&a, &b, 3).unwrap();
        let mid = a.zip_map(&b, "mid", |x, y| (x + y) / 2.0).unwrap();
        assert_eq!(three[1], mid);
        assert!(interpolate_latents(&a, &b, 1).is_err());
    }

    #[test]
    fn interpolants_lie_on_segment() {
        let mut rng = RngState::new(2);
        let a = rng.sample_normal(&[4]);
        let b = rng.sample_normal(&[4]);
        for (i, z) in interpolate_latents(&a, &b, 7).unwrap().iter().enumerate() {
            let t = i as f64 / 6.0;
            for k in 0..4 {
                let on_line = a.data()[k] + t * (b.data()[k] - a.data()[k]);
                assert!((z.data()[k] - on_line).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vanishing_variance_returns_mean() {
        let g = Graph::new();
        let mu = g.constant(Tensor::from_vec(vec![0.3, -1.2]));
        let lv = g.constant(Tensor::full(vec![2], -1e4));
        let eta = g.constant(Tensor::from_vec(vec![2.0, -3.0]));
        let z = reparameterize(&g, mu, lv, eta).unwrap();
        assert_eq!(g.value(z).data(), &[0.3, -1.2]);
    }

    #[test]
    fn sample_gradient_wrt_mean_is_identity() {
        let g = Graph::new();
        let mu = g.param(Tensor::from_vec(vec![0.5, 1.0, -2.0]));
        let lv = g.constant(Tensor::from_vec(vec![0.1, -0.4, 0.3]));
        let eta = g.constant(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let z = reparameterize(&g, mu, lv, eta).unwrap();
        for i in 0..3 {
            let zi = g.narrow(z, 0, i, 1).unwrap();
            let s = g.sum(zi);
            let d = g.grad_values(s, &[mu]).unwrap();
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            assert_eq!(d[0].data(), e.as_slice());
        }
    }
}
