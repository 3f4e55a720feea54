//! Generator, discriminator and encoder builders plus the training objectives.

pub mod latent;
pub mod losses;
pub mod spec;

pub use latent::{interpolate_latents, LatentCode};
pub use losses::{
    vae_losses, vanilla_gan_losses, wgan_gen_loss, wgan_gp_disc_loss, AdversarialSource, Bound, Critic,
    GpDiagnostics, VaeBatch, DEFAULT_DELTA, DEFAULT_LAMBDA,
};
pub use spec::{build_discriminator, build_encoder, build_generator, ModelSpec, NetworkKind, DEFAULT_LATENT_DIM};
