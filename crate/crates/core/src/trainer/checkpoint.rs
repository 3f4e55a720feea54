use std::path::Path;

use crate::config;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::models::{build_discriminator, build_encoder, build_generator, ModelSpec};
use crate::nn::{Network, Param, RunningStats};
use crate::optim::Adam;
use crate::rng::{RngSnapshot, RngState};
use crate::tensor::Tensor;

use super::{Counters, HistoryRow, TrainConfig, TrainState, Trainer};

const FORMAT: &str = "voxgan-checkpoint";

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

fn unopt(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

fn history_row(r: &[f64]) -> HistoryRow {
    HistoryRow {
        step: r[0] as u64,
        epoch: r[1] as usize,
        d_loss: r[2],
        g_loss: unopt(r[3]),
        gp_term: unopt(r[4]),
        grad_norm_mean: unopt(r[5]),
        e_loss: unopt(r[6]),
    }
}

fn push_network(c: &mut Container, prefix: &str, net: &Network) {
    for p in net.params() {
        c.push(format!("{prefix}/{}", p.name), p.value.clone());
    }
    for (i, r) in net.running_stats().iter().enumerate() {
        c.push(format!("{prefix}/running.{i}.mean"), r.mean.clone());
        c.push(format!("{prefix}/running.{i}.var"), r.var.clone());
    }
}

fn push_adam(c: &mut Container, prefix: &str, adam: &Adam) {
    for (i, (m, v)) in adam.m.iter().zip(&adam.v).enumerate() {
        c.push(format!("{prefix}/m.{i}"), m.clone());
        c.push(format!("{prefix}/v.{i}"), v.clone());
    }
}

fn load_network(c: &Container, prefix: &str, template: Network) -> Result<Network> {
    let params = template
        .params()
        .iter()
        .map(|p| {
            Ok(Param {
                name: p.name.clone(),
                value: c.require(&format!("{prefix}/{}", p.name))?.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let running = (0..template.running_stats().len())
        .map(|i| {
            Ok(RunningStats {
                mean: c.require(&format!("{prefix}/running.{i}.mean"))?.clone(),
                var: c.require(&format!("{prefix}/running.{i}.var"))?.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Network::from_parts(template.layers().to_vec(), params, running)
}

fn load_adam(c: &Container, prefix: &str, cfg: crate::optim::AdamConfig, t: u64, net: &Network) -> Result<Adam> {
    let mut adam = Adam::new(cfg, net.params());
    adam.t = t;
    for i in 0..adam.m.len() {
        let m = c.require(&format!("{prefix}/m.{i}"))?;
        let v = c.require(&format!("{prefix}/v.{i}"))?;
        if m.shape() != adam.m[i].shape() || v.shape() != adam.v[i].shape() {
            return Err(Error::Format(format!("{prefix}: moment {i} has the wrong shape")));
        }
        adam.m[i] = m.clone();
        adam.v[i] = v.clone();
    }
    Ok(adam)
}

fn template(spec: &ModelSpec, build: fn(&ModelSpec, &mut RngState) -> Result<Network>) -> Result<Network> {
    build(spec, &mut RngState::new(0))
}

impl Trainer {
    pub fn to_container(&self) -> Result<Container> {
        let s = &self.state;
        let snap = s.rng.snapshot();
        let mut meta = format!("format = {FORMAT}\n");
        meta.push_str(&self.config.to_kv()?);
        let mut put = |k: &str, v: String| meta.push_str(&format!("{k} = {v}\n"));
        put("state.epoch", s.epoch.to_string());
        put("state.cursor", s.cursor.to_string());
        put("state.batches", s.counters.batches.to_string());
        put("state.disc_steps", s.counters.disc_steps.to_string());
        put("state.gen_steps", s.counters.gen_steps.to_string());
        put("state.enc_steps", s.counters.enc_steps.to_string());
        put("rng.seed", snap.seed.to_string());
        put("rng.stream", snap.stream.to_string());
        put("rng.word_pos", snap.word_pos.to_string());
        put("adam.generator.t", s.adam_gen.t.to_string());
        put("adam.discriminator.t", s.adam_disc.t.to_string());
        if let Some(a) = &s.adam_enc {
            put("adam.encoder.t", a.t.to_string());
        }

        let mut c = Container::new(meta);
        push_network(&mut c, "generator", &s.generator);
        push_network(&mut c, "discriminator", &s.discriminator);
        if let Some(e) = &s.encoder {
            push_network(&mut c, "encoder", e);
        }
        push_adam(&mut c, "adam.generator", &s.adam_gen);
        push_adam(&mut c, "adam.discriminator", &s.adam_disc);
        if let Some(a) = &s.adam_enc {
            push_adam(&mut c, "adam.encoder", a);
        }
        if !s.order.is_empty() {
            c.push(
                "state/order",
                Tensor::new(vec![s.order.len()], s.order.iter().map(|&i| i as f64).collect())?,
            );
        }
        let rows: Vec<f64> = s
            .history
            .iter()
            .flat_map(|r| {
                [
                    r.step as f64,
                    r.epoch as f64,
                    r.d_loss,
                    opt(r.g_loss),
                    opt(r.gp_term),
                    opt(r.grad_norm_mean),
                    opt(r.e_loss),
                ]
            })
            .collect();
        if !s.history.is_empty() {
            c.push("state/history", Tensor::new(vec![s.history.len(), 7], rows)?);
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Trainer> {
        let source = Path::new("<checkpoint metadata>");
        let mut cfg = TrainConfig::default();
        let mut state_kv: Vec<(String, String)> = Vec::new();
        let mut format_ok = false;
        for e in config::parse(&c.metadata, source)? {
            if e.key == "format" {
                format_ok = e.value == FORMAT;
                continue;
            }
            match cfg.set(&e.key, &e.value) {
                Ok(true) => {}
                Ok(false) => state_kv.push((e.key, e.value)),
                Err(msg) => return Err(config::config_error(source, e.line, msg)),
            }
        }
        if !format_ok {
            return Err(Error::Format("container is not a training checkpoint".into()));
        }
        cfg.validate()?;
        let get = |k: &str| -> Result<&str> {
            state_kv
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format(format!("checkpoint metadata lacks `{k}`")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Format(format!("bad `{k}` value `{v}`")))
        }

        let generator = load_network(c, "generator", template(&cfg.generator_spec()?, build_generator)?)?;
        let discriminator = load_network(
            c,
            "discriminator",
            template(&cfg.discriminator_spec()?, build_discriminator)?,
        )?;
        let encoder = match cfg.encoder_spec()? {
            Some(s) => Some(load_network(c, "encoder", template(&s, build_encoder)?)?),
            None => None,
        };
        let adam_gen = load_adam(
            c,
            "adam.generator",
            cfg.adam(cfg.lr_gen),
            num("adam.generator.t", get("adam.generator.t")?)?,
            &generator,
        )?;
        let adam_disc = load_adam(
            c,
            "adam.discriminator",
            cfg.adam(cfg.lr_disc),
            num("adam.discriminator.t", get("adam.discriminator.t")?)?,
            &discriminator,
        )?;
        let adam_enc = match &encoder {
            Some(e) => Some(load_adam(
                c,
                "adam.encoder",
                cfg.adam(cfg.lr_enc),
                num("adam.encoder.t", get("adam.encoder.t")?)?,
                e,
            )?),
            None => None,
        };
        let rng = RngState::restore(RngSnapshot {
            seed: num("rng.seed", get("rng.seed")?)?,
            stream: num("rng.stream", get("rng.stream")?)?,
            word_pos: num("rng.word_pos", get("rng.word_pos")?)?,
        });
        let order = c
            .get("state/order")
            .map(|t| t.data().iter().map(|&v| v as usize).collect())
            .unwrap_or_default();
        let history = match c.get("state/history") {
            None => Vec::new(),
            Some(h) if h.rank() == 2 && h.shape()[1] == 7 => h.data().chunks_exact(7).map(history_row).collect(),
            Some(_) => return Err(Error::Format("history block must be [rows, 7]".into())),
        };
        Ok(Trainer {
            state: TrainState {
                generator,
                discriminator,
                encoder,
                adam_gen,
                adam_disc,
                adam_enc,
                counters: Counters {
                    batches: num("state.batches", get("state.batches")?)?,
                    disc_steps: num("state.disc_steps", get("state.disc_steps")?)?,
                    gen_steps: num("state.gen_steps", get("state.gen_steps")?)?,
                    enc_steps: num("state.enc_steps", get("state.enc_steps")?)?,
                },
                epoch: num("state.epoch", get("state.epoch")?)?,
                cursor: num("state.cursor", get("state.cursor")?)?,
                order,
                rng,
                history,
            },
            config: cfg,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn load(path: &Path) -> Result<Trainer> {
        Trainer::from_container(&Container::read(path)?)
    }
}
