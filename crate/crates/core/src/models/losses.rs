//! Adversarial and variational objectives.

use crate::error::{Error, Result};
use crate::graph::{GradOptions, Graph, Var};
use crate::models::latent;
use crate::nn::{BatchStats, Mode, Network};
use crate::rng::RngState;

pub const DEFAULT_LAMBDA: f64 = 10.0;
pub const DEFAULT_DELTA: f64 = 100.0;
pub const VANILLA_CLAMP: f64 = 1e-7;

/// Anything that maps a batch `[B, ...]` to one score per sample `[B]`.
pub trait Critic {
    fn score(&self, g: &Graph, x: Var) -> Result<Var>;
}

/// A network whose parameters have been placed on a graph.
pub struct Bound<'a> {
    pub net: &'a Network,
    pub params: Vec<Var>,
    pub mode: Mode,
}

impl<'a> Bound<'a> {
    pub fn new(g: &Graph, net: &'a Network, trainable: bool, mode: Mode) -> Self {
        Bound {
            net,
            params: net.bind(g, trainable),
            mode,
        }
    }

    pub fn apply(&self, g: &Graph, x: Var) -> Result<(Var, Vec<BatchStats>)> {
        let f = self.net.forward(g, &self.params, x, self.mode)?;
        Ok((f.output, f.stats))
    }
}

impl Critic for Bound<'_> {
    fn score(&self, g: &Graph, x: Var) -> Result<Var> {
        let (y, _) = self.apply(g, x)?;
        let s = g.shape(y);
        if s.len() != 2 || s[1] != 1 {
            return Err(Error::invalid_shape("critic", format!("expected [B, 1] output, got {s:?}")));
        }
        g.reshape(y, &[s[0]])
    }
}

/// The individual terms of the gradient-penalty critic loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpDiagnostics {
    pub mean_real: f64,
    pub mean_fake: f64,
    /// `λ · mean[(‖∇D(x̂)‖ − 1)²]`.
    pub penalty: f64,
    pub grad_norm_mean: f64,
}

impl GpDiagnostics {
    /// `mean D(real) − mean D(fake)`, the critic's distance estimate.
    pub fn wasserstein_estimate(&self) -> f64 {
        self.mean_real - self.mean_fake
    }
}

pub struct GpLoss {
    pub loss: Var,
    pub penalty: Var,
    pub diagnostics: GpDiagnostics,
}

fn per_sample_shape(g: &Graph, x: Var) -> Vec<usize> {
    let mut s = vec![1; g.shape(x).len()];
    s[0] = g.shape(x)[0];
    s
}

/// Straight-line interpolates `ε·real + (1−ε)·fake` with one `ε ∼ U[0,1)` per sample.
pub fn interpolates(g: &Graph, real: Var, fake: Var, rng: &mut RngState) -> Result<crate::Tensor> {
    let rs = g.shape(real);
    if rs != g.shape(fake) {
        return Err(Error::shape("interpolates", &rs, &g.shape(fake)));
    }
    let eps = rng.sample_uniform(&per_sample_shape(g, real));
    let eps = crate::kernels::broadcast_to(&eps, &rs)?;
    let (r, f) = (g.value(real), g.value(fake));
    let data = r
        .data()
        .iter()
        .zip(f.data())
        .zip(eps.data())
        .map(|((&a, &b), &e)| e * a + (1.0 - e) * b)
        .collect();
    crate::Tensor::new(rs, data)
}

/// `λ · mean[(‖∇ₓ̂ D(x̂)‖₂ − 1)²]` at the given points, differentiable in `D`'s parameters.
pub fn gradient_penalty(g: &Graph, critic: &dyn Critic, points: crate::Tensor, lambda: f64) -> Result<(Var, Var)> {
    let xhat = g.param(points);
    let scores = critic.score(g, xhat)?;
    let total = g.sum(scores);
    let grads = g.grad(
        total,
        &[xhat],
        GradOptions {
            create_graph: true,
            strict: false,
        },
    )?;
    let norms = g.sqrt(g.sum_per_sample(g.square(grads[0]))?);
    let dev = g.add_scalar(norms, -1.0);
    let penalty = g.scale(g.mean(g.square(dev)), lambda);
    Ok((penalty, norms))
}

/// Critic loss `mean D(fake) − mean D(real) + λ·mean[(‖∇D(x̂)‖₂ − 1)²]`.
pub fn wgan_gp_disc_loss(
    g: &Graph,
    critic: &dyn Critic,
    real: Var,
    fake: Var,
    rng: &mut RngState,
    lambda: f64,
) -> Result<GpLoss> {
    let points = interpolates(g, real, fake, rng)?;
    let d_real = g.mean(critic.score(g, real)?);
    let d_fake = g.mean(critic.score(g, fake)?);
    let (penalty, norms) = gradient_penalty(g, critic, points, lambda)?;
    let loss = g.add(g.sub(d_fake, d_real)?, penalty)?;
    let diagnostics = GpDiagnostics {
        mean_real: g.value(d_real).item(),
        mean_fake: g.value(d_fake).item(),
        penalty: g.value(penalty).item(),
        grad_norm_mean: g.value(norms).mean(),
    };
    Ok(GpLoss {
        loss,
        penalty,
        diagnostics,
    })
}

/// Generator objective `−mean D(fake)`.
pub fn wgan_gen_loss(g: &Graph, critic: &dyn Critic, fake: Var) -> Result<Var> {
    let d = g.mean(critic.score(g, fake)?);
    Ok(g.neg(d))
}

pub struct VanillaLosses {
    pub disc: Var,
    pub gen: Var,
    pub stats: Vec<BatchStats>,
}

/// Minimax objectives with a sigmoid read-out on the critic:
/// disc `−mean log D(x) − mean log(1−D(G(z)))`, gen `mean log(1−D(G(z)))`.
pub fn vanilla_gan_losses(
    g: &Graph,
    critic: &dyn Critic,
    generator: &Bound<'_>,
    real: Var,
    z: Var,
) -> Result<VanillaLosses> {
    let (fake, stats) = generator.apply(g, z)?;
    let lo = VANILLA_CLAMP;
    let hi = 1.0 - VANILLA_CLAMP;
    let p_real = g.clamp(g.sigmoid(critic.score(g, real)?), lo, hi);
    let p_fake = g.clamp(g.sigmoid(critic.score(g, fake)?), lo, hi);
    let log_real = g.mean(g.log(p_real));
    let log_not_fake = g.mean(g.log(g.add_scalar(g.neg(p_fake), 1.0)));
    let disc = g.neg(g.add(log_real, log_not_fake)?);
    Ok(VanillaLosses {
        disc,
        gen: log_not_fake,
        stats,
    })
}

/// Which generated sample the critic judges in the generator's objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversarialSource {
    /// A decode of a fresh standard-normal latent.
    Prior,
    /// The reconstruction decoded from the encoded condition.
    Reconstruction,
}

pub struct VaeLosses {
    pub encoder: Var,
    pub generator: Var,
    pub reconstruction: Var,
    pub kl: Var,
    pub adversarial: Var,
    /// Whether the reconstruction term is part of the generator objective.
    pub generator_has_reconstruction: bool,
    pub code: latent::LatentVars,
    pub recon_output: Var,
    pub stats: Vec<Vec<BatchStats>>,
}

/// Squared Euclidean distance per sample, averaged over the batch.
pub fn reconstruction_error(g: &Graph, xhat: Var, x: Var) -> Result<Var> {
    let b = g.shape(x)[0] as f64;
    let d = g.sub(xhat, x)?;
    Ok(g.scale(g.sum(g.square(d)), 1.0 / b))
}

/// `½ Σ (exp(log σ²) + μ² − 1 − log σ²)` per sample, averaged over the batch.
pub fn kl_to_standard_normal(g: &Graph, mu: Var, log_var: Var) -> Result<Var> {
    let b = g.shape(mu)[0] as f64;
    let t = g.add(g.exp(log_var), g.square(mu))?;
    let t = g.sub(g.add_scalar(t, -1.0), log_var)?;
    Ok(g.scale(g.sum(t), 0.5 / b))
}

/// Inputs for [`vae_losses`].
pub struct VaeBatch {
    pub condition: Var,
    pub target: Var,
    /// Noise for the reparameterized sample, `[B, latent]`.
    pub eta: Var,
    /// Standard-normal latent for the prior-sample path, `[B, latent]`.
    pub prior: Var,
}

/// Encoder objective `‖x̂−x‖² + KL` and generator objective `−D(x̂_z) + δ‖x̂−x‖²`.
pub fn vae_losses(
    g: &Graph,
    encoder: &Bound<'_>,
    generator: &Bound<'_>,
    critic: &dyn Critic,
    batch: &VaeBatch,
    delta: f64,
    source: AdversarialSource,
) -> Result<VaeLosses> {
    let code = latent::encode(g, encoder, batch.condition)?;
    let z = latent::reparameterize(g, code.mu, code.log_var, batch.eta)?;
    let code = latent::LatentVars { sample: z, ..code };
    let (xhat, s1) = generator.apply(g, z)?;
    if g.shape(xhat) != g.shape(batch.target) {
        return Err(Error::shape("vae_losses", &g.shape(xhat), &g.shape(batch.target)));
    }
    let reconstruction = reconstruction_error(g, xhat, batch.target)?;
    let kl = kl_to_standard_normal(g, code.mu, code.log_var)?;
    let encoder_loss = g.add(reconstruction, kl)?;
    let mut stats = vec![s1];
    let judged = match source {
        AdversarialSource::Prior => {
            let (xz, s2) = generator.apply(g, batch.prior)?;
            stats.push(s2);
            xz
        }
        AdversarialSource::Reconstruction => xhat,
    };
    let adversarial = wgan_gen_loss(g, critic, judged)?;
    let has_recon = delta != 0.0;
    let generator_loss = if has_recon {
        g.add(adversarial, g.scale(reconstruction, delta))?
    } else {
        adversarial
    };
    Ok(VaeLosses {
        encoder: encoder_loss,
        generator: generator_loss,
        reconstruction,
        kl,
        adversarial,
        generator_has_reconstruction: has_recon,
        code,
        recon_output: xhat,
        stats,
    })
}
