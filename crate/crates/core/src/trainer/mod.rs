//! Training loops for the plain and encoder-conditioned regimes.

mod checkpoint;
mod config;
mod telemetry;

pub use config::{TrainConfig, TrainMode, TRAIN_KEYS};
pub use telemetry::{write_telemetry, TELEMETRY_HEADER};

use crate::error::{Error, Result};
use crate::eval::CompletionModel;
use crate::graph::Graph;
use crate::models::latent::{encode, reparameterize};
use crate::models::{
    build_discriminator, build_encoder, build_generator, interpolate_latents, vae_losses, vanilla_gan_losses,
    wgan_gen_loss, wgan_gp_disc_loss, Bound, VaeBatch,
};
use crate::nn::{Mode, Network};
use crate::optim::Adam;
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::voxel::VoxelGrid;

/// Training samples: targets `[1, N, N, N]` in `{-1, +1}`, plus encoder
/// conditions for the conditioned regime.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub targets: Vec<Tensor>,
    pub conditions: Option<Vec<Tensor>>,
}

impl Dataset {
    pub fn unconditional(grids: &[VoxelGrid]) -> Self {
        Dataset {
            targets: grids.iter().map(VoxelGrid::to_signed).collect(),
            conditions: None,
        }
    }

    pub fn paired(conditions: Vec<Tensor>, targets: &[VoxelGrid]) -> Result<Self> {
        if conditions.len() != targets.len() {
            return Err(Error::Data(format!(
                "{} conditions for {} targets",
                conditions.len(),
                targets.len()
            )));
        }
        Ok(Dataset {
            targets: targets.iter().map(VoxelGrid::to_signed).collect(),
            conditions: Some(conditions),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub batches: u64,
    pub disc_steps: u64,
    pub gen_steps: u64,
    pub enc_steps: u64,
}

/// One telemetry row per batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub step: u64,
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: Option<f64>,
    pub gp_term: Option<f64>,
    pub grad_norm_mean: Option<f64>,
    pub e_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub generator: Network,
    pub discriminator: Network,
    pub encoder: Option<Network>,
    pub adam_gen: Adam,
    pub adam_disc: Adam,
    pub adam_enc: Option<Adam>,
    pub counters: Counters,
    /// Completed epochs.
    pub epoch: usize,
    /// Batches completed within the current epoch.
    pub cursor: usize,
    /// Sample order of the current epoch; empty between epochs.
    pub order: Vec<usize>,
    pub rng: RngState,
    pub history: Vec<HistoryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub config: TrainConfig,
    pub state: TrainState,
}

fn check_finite(what: &'static str, v: f64, step: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss { what, step })
    }
}

fn batch_of(items: &[Tensor], idx: &[usize]) -> Result<Tensor> {
    let picked: Vec<Tensor> = idx.iter().map(|&i| items[i].clone()).collect();
    Tensor::stack(&picked)
}

impl Trainer {
    /// Fresh networks initialized from streams split off `config.seed`.
    pub fn new(mut config: TrainConfig) -> Result<Self> {
        config.validate()?;
        config.encoder = config.encoder_kind();
        if config.encoder.is_none() {
            config.enc_channels = None;
        }
        let master = RngState::new(config.seed);
        let generator = build_generator(&config.generator_spec()?, &mut master.split(1))?;
        let discriminator = build_discriminator(&config.discriminator_spec()?, &mut master.split(2))?;
        let encoder = config
            .encoder_spec()?
            .map(|s| build_encoder(&s, &mut master.split(3)))
            .transpose()?;
        let adam_gen = Adam::new(config.adam(config.lr_gen), generator.params());
        let adam_disc = Adam::new(config.adam(config.lr_disc), discriminator.params());
        let adam_enc = encoder.as_ref().map(|e| Adam::new(config.adam(config.lr_enc), e.params()));
        Ok(Trainer {
            state: TrainState {
                generator,
                discriminator,
                encoder,
                adam_gen,
                adam_disc,
                adam_enc,
                counters: Counters::default(),
                epoch: 0,
                cursor: 0,
                order: Vec::new(),
                rng: master,
                history: Vec::new(),
            },
            config,
        })
    }

    pub fn batches_per_epoch(&self, data: &Dataset) -> usize {
        data.len() / self.config.batch_size
    }

    pub fn is_done(&self) -> bool {
        self.state.epoch >= self.config.epochs
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        if self.batches_per_epoch(data) == 0 {
            return Err(Error::Data(format!(
                "{} samples cannot fill one batch of {}",
                data.len(),
                self.config.batch_size
            )));
        }
        let n = self.config.resolution;
        if let Some(t) = data.targets.iter().find(|t| t.shape() != [1, n, n, n]) {
            return Err(Error::Data(format!("target shape {:?} does not match resolution {n}", t.shape())));
        }
        match (self.config.mode, &data.conditions) {
            (TrainMode::VaeIwgan, None) => Err(Error::Data("conditioned training needs paired conditions".into())),
            (TrainMode::VaeIwgan, Some(c)) if c.len() != data.len() => {
                Err(Error::Data("conditions and targets differ in length".into()))
            }
            _ => Ok(()),
        }
    }

    /// One batch: a critic step, an encoder step in the conditioned regime and,
    /// every `gen_interval` batches, a generator step. On error the state is
    /// left exactly as it was before the batch.
    pub fn step(&mut self, data: &Dataset) -> Result<HistoryRow> {
        self.check_data(data)?;
        let history = std::mem::take(&mut self.state.history);
        let backup = self.state.clone();
        self.state.history = history;
        match self.step_inner(data) {
            Ok(row) => {
                self.state.history.push(row);
                Ok(row)
            }
            Err(e) => {
                let history = std::mem::take(&mut self.state.history);
                self.state = backup;
                self.state.history = history;
                Err(e)
            }
        }
    }

    fn step_inner(&mut self, data: &Dataset) -> Result<HistoryRow> {
        let b = self.config.batch_size;
        let per_epoch = self.batches_per_epoch(data);
        if self.state.order.is_empty() {
            self.state.order = self.state.rng.permutation(data.len());
        } else if self.state.order.len() != data.len() {
            return Err(Error::Data(format!(
                "resumed epoch ordered {} samples but the dataset has {}",
                self.state.order.len(),
                data.len()
            )));
        }
        let idx: Vec<usize> = self.state.order[self.state.cursor * b..(self.state.cursor + 1) * b].to_vec();
        let step = self.state.counters.batches + 1;
        let gen_turn = step.is_multiple_of(self.config.gen_interval as u64);
        let real = batch_of(&data.targets, &idx)?;

        let mut row = HistoryRow {
            step,
            epoch: self.state.epoch,
            d_loss: 0.0,
            g_loss: None,
            gp_term: None,
            grad_norm_mean: None,
            e_loss: None,
        };

        match self.config.mode {
            TrainMode::Iwgan => {
                let z = self.state.rng.sample_normal(&[b, self.config.latent_dim]);
                let (fake, _) = self.state.generator.infer(&z, Mode::Train)?;
                self.critic_step(real, fake, step, &mut row)?;
                if gen_turn {
                    self.wgan_generator_step(step, &mut row)?;
                }
            }
            TrainMode::VanillaGanBaseline => {
                self.vanilla_critic_step(real.clone(), step, &mut row)?;
                if gen_turn {
                    self.vanilla_generator_step(real, step, &mut row)?;
                }
            }
            TrainMode::VaeIwgan => {
                let cond = batch_of(data.conditions.as_ref().expect("checked"), &idx)?;
                let fake = self.decode_conditions(&cond)?;
                self.critic_step(real.clone(), fake, step, &mut row)?;
                self.vae_step(cond, real, gen_turn, step, &mut row)?;
            }
        }

        self.state.counters.batches = step;
        self.state.cursor += 1;
        if self.state.cursor == per_epoch {
            self.state.cursor = 0;
            self.state.epoch += 1;
            self.state.order.clear();
        }
        Ok(row)
    }

    fn critic_step(&mut self, real: Tensor, fake: Tensor, step: u64, row: &mut HistoryRow) -> Result<()> {
        let g = Graph::new();
        let real = g.constant(real);
        let fake = g.constant(fake);
        let critic = Bound::new(&g, &self.state.discriminator, true, Mode::Train);
        let loss = wgan_gp_disc_loss(&g, &critic, real, fake, &mut self.state.rng, self.config.lambda)?;
        row.d_loss = check_finite("discriminator loss", g.value(loss.loss).item(), step)?;
        row.gp_term = Some(loss.diagnostics.penalty);
        row.grad_norm_mean = Some(loss.diagnostics.grad_norm_mean);
        let grads = g.grad_values(loss.loss, &critic.params)?;
        drop(critic);
        self.state.adam_disc.step(self.state.discriminator.params_mut(), &grads)?;
        self.state.counters.disc_steps += 1;
        Ok(())
    }

    fn wgan_generator_step(&mut self, step: u64, row: &mut HistoryRow) -> Result<()> {
        let z = self.state.rng.sample_normal(&[self.config.batch_size, self.config.latent_dim]);
        let g = Graph::new();
        let gen = Bound::new(&g, &self.state.generator, true, Mode::Train);
        let critic = Bound::new(&g, &self.state.discriminator, false, Mode::Train);
        let (fake, stats) = gen.apply(&g, g.constant(z))?;
        let loss = wgan_gen_loss(&g, &critic, fake)?;
        row.g_loss = Some(check_finite("generator loss", g.value(loss).item(), step)?);
        let grads = g.grad_values(loss, &gen.params)?;
        drop(gen);
        self.state.adam_gen.step(self.state.generator.params_mut(), &grads)?;
        self.state.generator.update_running_stats(&stats);
        self.state.counters.gen_steps += 1;
        Ok(())
    }

    fn vanilla_critic_step(&mut self, real: Tensor, step: u64, row: &mut HistoryRow) -> Result<()> {
        let z = self.state.rng.sample_normal(&[self.config.batch_size, self.config.latent_dim]);
        let g = Graph::new();
        let gen = Bound::new(&g, &self.state.generator, false, Mode::Train);
        let critic = Bound::new(&g, &self.state.discriminator, true, Mode::Train);
        let losses = vanilla_gan_losses(&g, &critic, &gen, g.constant(real), g.constant(z))?;
        row.d_loss = check_finite("discriminator loss", g.value(losses.disc).item(), step)?;
        let grads = g.grad_values(losses.disc, &critic.params)?;
        drop(critic);
        self.state.adam_disc.step(self.state.discriminator.params_mut(), &grads)?;
        self.state.counters.disc_steps += 1;
        Ok(())
    }

    fn vanilla_generator_step(&mut self, real: Tensor, step: u64, row: &mut HistoryRow) -> Result<()> {
        let z = self.state.rng.sample_normal(&[self.config.batch_size, self.config.latent_dim]);
        let g = Graph::new();
        let gen = Bound::new(&g, &self.state.generator, true, Mode::Train);
        let critic = Bound::new(&g, &self.state.discriminator, false, Mode::Train);
        let losses = vanilla_gan_losses(&g, &critic, &gen, g.constant(real), g.constant(z))?;
        row.g_loss = Some(check_finite("generator loss", g.value(losses.gen).item(), step)?);
        let grads = g.grad_values(losses.gen, &gen.params)?;
        drop(gen);
        self.state.adam_gen.step(self.state.generator.params_mut(), &grads)?;
        self.state.generator.update_running_stats(&losses.stats);
        self.state.counters.gen_steps += 1;
        Ok(())
    }

    /// Reconstructions of a condition batch with frozen networks.
    fn decode_conditions(&mut self, cond: &Tensor) -> Result<Tensor> {
        let encoder = self.state.encoder.as_ref().ok_or_else(|| Error::Model("no encoder".into()))?;
        let g = Graph::new();
        g.set_recording(false);
        let enc = Bound::new(&g, encoder, false, Mode::Train);
        let code = encode(&g, &enc, g.constant(cond.clone()))?;
        let b = cond.shape()[0];
        let eta = g.constant(self.state.rng.sample_normal(&[b, self.config.latent_dim]));
        let z = reparameterize(&g, code.mu, code.log_var, eta)?;
        let gen = Bound::new(&g, &self.state.generator, false, Mode::Train);
        let (x, _) = gen.apply(&g, z)?;
        Ok((*g.value(x)).clone())
    }

    fn vae_step(&mut self, cond: Tensor, target: Tensor, gen_turn: bool, step: u64, row: &mut HistoryRow) -> Result<()> {
        let (b, l) = (self.config.batch_size, self.config.latent_dim);
        let eta = self.state.rng.sample_normal(&[b, l]);
        let prior = self.state.rng.sample_normal(&[b, l]);
        let encoder = self.state.encoder.as_ref().ok_or_else(|| Error::Model("no encoder".into()))?;
        let g = Graph::new();
        let enc = Bound::new(&g, encoder, true, Mode::Train);
        let gen = Bound::new(&g, &self.state.generator, gen_turn, Mode::Train);
        let critic = Bound::new(&g, &self.state.discriminator, false, Mode::Train);
        let batch = VaeBatch {
            condition: g.constant(cond),
            target: g.constant(target),
            eta: g.constant(eta),
            prior: g.constant(prior),
        };
        let losses = vae_losses(
            &g,
            &enc,
            &gen,
            &critic,
            &batch,
            self.config.delta,
            self.config.adversarial_source,
        )?;
        row.e_loss = Some(check_finite("encoder loss", g.value(losses.encoder).item(), step)?);
        let enc_grads = g.grad_values(losses.encoder, &enc.params)?;
        let gen_grads = if gen_turn {
            row.g_loss = Some(check_finite("generator loss", g.value(losses.generator).item(), step)?);
            Some(g.grad_values(losses.generator, &gen.params)?)
        } else {
            None
        };
        drop((enc, gen, critic));

        let encoder = self.state.encoder.as_mut().expect("present");
        let adam_enc = self.state.adam_enc.as_mut().ok_or_else(|| Error::Model("no encoder optimizer".into()))?;
        adam_enc.step(encoder.params_mut(), &enc_grads)?;
        self.state.counters.enc_steps += 1;
        if let Some(grads) = gen_grads {
            self.state.adam_gen.step(self.state.generator.params_mut(), &grads)?;
            self.state.generator.update_running_stats(&losses.stats[0]);
            self.state.counters.gen_steps += 1;
        }
        Ok(())
    }

    /// Runs the remaining batches of the current epoch.
    pub fn run_epoch(&mut self, data: &Dataset) -> Result<()> {
        let start = self.state.epoch;
        while self.state.epoch == start {
            self.step(data)?;
        }
        Ok(())
    }

    /// Trains until `config.epochs` epochs are complete, calling `after_epoch`
    /// at each epoch boundary.
    pub fn train(&mut self, data: &Dataset, mut after_epoch: impl FnMut(&Trainer) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            self.run_epoch(data)?;
            after_epoch(self)?;
        }
        Ok(())
    }

    /// Mean discriminator loss of each epoch present in the history.
    pub fn epoch_mean_disc_loss(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for r in &self.state.history {
            if sums.len() <= r.epoch {
                sums.resize(r.epoch + 1, (0.0, 0));
            }
            sums[r.epoch].0 += r.d_loss;
            sums[r.epoch].1 += 1;
        }
        sums.into_iter().map(|(s, n)| if n == 0 { f64::NAN } else { s / n as f64 }).collect()
    }
}

/// `[1, L]` standard-normal code drawn from `seed`.
pub fn latent_for_seed(seed: u64, latent_dim: usize) -> Tensor {
    RngState::new(seed).sample_normal(&[1, latent_dim])
}

/// Decodes `[B, L]` codes with running batch-norm statistics.
pub fn decode(generator: &Network, z: &Tensor) -> Result<Vec<VoxelGrid>> {
    let (x, _) = generator.infer(z, Mode::Eval)?;
    let n = x.shape()[2];
    (0..x.shape()[0])
        .map(|i| VoxelGrid::from_signed(n, x.slice_outer(i).data()))
        .collect()
}

/// `count` samples from codes drawn with `seed`; sample `i` uses row `i`.
pub fn generate(generator: &Network, latent_dim: usize, seed: u64, count: usize) -> Result<Vec<VoxelGrid>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    decode(generator, &RngState::new(seed).sample_normal(&[count, latent_dim]))
}

/// Decodes the straight line between the codes of `seed_a` and `seed_b`.
pub fn interpolate(generator: &Network, latent_dim: usize, seed_a: u64, seed_b: u64, steps: usize) -> Result<Vec<VoxelGrid>> {
    let a = latent_for_seed(seed_a, latent_dim);
    let b = latent_for_seed(seed_b, latent_dim);
    let mut out = Vec::with_capacity(steps);
    for z in interpolate_latents(&a, &b, steps)? {
        out.extend(decode(generator, &z)?);
    }
    Ok(out)
}

/// Encoder means decoded by the generator.
pub struct TrainedCompleter<'a> {
    pub encoder: &'a Network,
    pub generator: &'a Network,
}

impl TrainedCompleter<'_> {
    pub fn complete_batch(&self, conditions: &Tensor) -> Result<Vec<VoxelGrid>> {
        let g = Graph::new();
        g.set_recording(false);
        let enc = Bound::new(&g, self.encoder, false, Mode::Eval);
        let code = encode(&g, &enc, g.constant(conditions.clone()))?;
        let mu = (*g.value(code.mu)).clone();
        decode(self.generator, &mu)
    }
}

impl CompletionModel for TrainedCompleter<'_> {
    fn complete(&self, condition: &Tensor) -> Result<VoxelGrid> {
        let mut shape = vec![1];
        shape.extend_from_slice(condition.shape());
        let grids = self.complete_batch(&condition.reshape(shape)?)?;
        Ok(grids.into_iter().next().expect("one sample"))
    }
}
