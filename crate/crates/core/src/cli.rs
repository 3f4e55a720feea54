//! The `voxgan` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config;
use crate::error::{Error, Result};
use crate::eval::{evaluate_completion, CompletionPair, Pooling};
use crate::models::NetworkKind;
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::trainer::{self, write_telemetry, Dataset, TrainConfig, Trainer, TrainedCompleter};
use crate::voxel::{
    depth_scan, encode_scan, read_binvox, render_silhouette, toy_dataset, write_binvox, OcclusionEncoding, ToyKind,
    View, VoxelGrid,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub const CHECKPOINT_FILE: &str = "checkpoint.vxgn";
pub const LAST_GOOD_FILE: &str = "last-good.vxgn";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";

#[derive(Parser, Debug)]
#[command(name = "voxgan", version, about = "Wasserstein GANs over voxel grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write checkpoints, telemetry and the resolved config.
    Train(RunArgs),
    /// Sample grids from a checkpoint's generator.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write `.binvox` copies.
        #[arg(long)]
        binvox: bool,
    },
    /// Decode the straight line between two seeds' latent codes.
    Interpolate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed_a: u64,
        #[arg(long)]
        seed_b: u64,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Depth-scan a grid and write the depth map (PGM) and its visible shell.
    Scan {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "+z", allow_hyphen_values = true)]
        view: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Complete an occluded grid with a conditioned checkpoint.
    Complete {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a conditioned checkpoint on a test set.
    Evaluate(EvalArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    /// `toy:<boxes|spheres|ells|mixed>` or a directory of `.binvox` / `.vxg` files.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gen_interval: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// `dataset` or `per-object`.
    #[arg(long, default_value = "dataset")]
    pooling: String,
}

/// Everything a run needs: training settings plus data and output options.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: String,
    pub out: PathBuf,
    pub toy_count: usize,
    pub toy_orientations: usize,
    pub scan_view: View,
    pub occlusion: OcclusionEncoding,
    /// From `VOXGAN_THREADS`; execution is single-threaded either way.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            data: "toy:mixed".into(),
            out: PathBuf::from("run"),
            toy_count: 16,
            toy_orientations: 4,
            scan_view: "+z".parse().expect("valid view"),
            occlusion: OcclusionEncoding::Shell,
            threads: 1,
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<bool, String> {
        match key {
            "data" => self.data = v.to_string(),
            "out" => self.out = PathBuf::from(v),
            "toy_count" => self.toy_count = config::value(key, v)?,
            "toy_orientations" => self.toy_orientations = config::value(key, v)?,
            "scan_view" => self.scan_view = v.parse().map_err(|e: Error| e.to_string())?,
            "occlusion" => self.occlusion = v.parse().map_err(|e: Error| e.to_string())?,
            "threads" => self.threads = config::value(key, v)?,
            _ => return self.train.set(key, v),
        }
        Ok(true)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        for e in config::read(path)? {
            match self.set(&e.key, &e.value) {
                Ok(true) => {}
                Ok(false) => return Err(config::config_error(path, e.line, format!("unknown key `{}`", e.key))),
                Err(msg) => return Err(config::config_error(path, e.line, msg)),
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Result<String> {
        let mut s = self.train.to_kv()?;
        s.push_str(&format!("data = {}\n", self.data));
        s.push_str(&format!("out = {}\n", self.out.display()));
        s.push_str(&format!("toy_count = {}\n", self.toy_count));
        s.push_str(&format!("toy_orientations = {}\n", self.toy_orientations));
        s.push_str(&format!("scan_view = {}\n", self.scan_view));
        s.push_str(&format!("occlusion = {}\n", self.occlusion.as_str()));
        s.push_str(&format!("threads = {}\n", self.threads));
        Ok(s)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) | Error::Model(_) => EXIT_CONFIG,
        Error::Data(_) | Error::Io(_) | Error::Format(_) | Error::Integrity(_) | Error::Version { .. } => EXIT_DATA,
        Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. } => EXIT_NUMERIC,
        _ => EXIT_FAILURE,
    }
}

fn flag_error(flag: &str, msg: String) -> Error {
    Error::InvalidArgument(format!("--{flag}: {msg}"))
}

fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let mut rc = RunConfig::default();
    if let Ok(t) = std::env::var("VOXGAN_THREADS") {
        rc.threads = t
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("VOXGAN_THREADS must be an integer, got `{t}`")))?;
    }
    if let Some(p) = &args.config {
        rc.apply_file(p)?;
    }
    let mut set = |k: &str, v: String| rc.set(k, &v).map(|_| ()).map_err(|m| flag_error(k, m));
    if let Some(v) = &args.mode {
        set("mode", v.clone())?;
    }
    if let Some(v) = &args.data {
        set("data", v.clone())?;
    }
    if let Some(v) = args.res {
        set("res", v.to_string())?;
    }
    if let Some(v) = args.epochs {
        set("epochs", v.to_string())?;
    }
    if let Some(v) = args.batch {
        set("batch", v.to_string())?;
    }
    if let Some(v) = args.seed {
        set("seed", v.to_string())?;
    }
    if let Some(v) = &args.out {
        set("out", v.display().to_string())?;
    }
    if let Some(v) = args.lambda {
        set("lambda", v.to_string())?;
    }
    if let Some(v) = args.delta {
        set("delta", v.to_string())?;
    }
    if let Some(v) = args.gen_interval {
        set("gen_interval", v.to_string())?;
    }
    rc.train.validate()?;
    Ok(rc)
}

pub fn read_grid(path: &Path) -> Result<VoxelGrid> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("binvox") => read_binvox(path),
        Some("vxg") => VoxelGrid::read_vxg(path),
        _ => Err(Error::Data(format!("{}: expected a .binvox or .vxg file", path.display()))),
    }
}

/// Grids named by a `--data` spec, in a fixed order.
pub fn load_grids(rc: &RunConfig) -> Result<Vec<VoxelGrid>> {
    let n = rc.train.resolution;
    let grids = if let Some(kind) = rc.data.strip_prefix("toy:") {
        let kind: ToyKind = kind.parse()?;
        let mut rng = RngState::new(rc.train.seed).split(100);
        toy_dataset(kind, n, rc.toy_count, rc.toy_orientations, &mut rng)?
    } else {
        let dir = Path::new(&rc.data);
        let entries = std::fs::read_dir(dir).map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("binvox" | "vxg")))
            .collect();
        paths.sort();
        paths.iter().map(|p| read_grid(p)).collect::<Result<Vec<_>>>()?
    };
    if grids.is_empty() {
        return Err(Error::Data(format!("no grids found for `{}`", rc.data)));
    }
    if let Some(g) = grids.iter().find(|g| g.extent() != n) {
        return Err(Error::Data(format!("grid extent {} does not match res {n}", g.extent())));
    }
    Ok(grids)
}

/// Encoder input for one target under the run's conditioning settings.
pub fn condition_for(grid: &VoxelGrid, kind: NetworkKind, view: View, occlusion: OcclusionEncoding) -> Result<Tensor> {
    match kind {
        NetworkKind::ImageEncoder => Ok(render_silhouette(grid, view).to_signed()),
        _ => encode_scan(&depth_scan(grid, view), grid.extent(), occlusion),
    }
}

pub fn build_dataset(rc: &RunConfig, grids: &[VoxelGrid]) -> Result<Dataset> {
    match rc.train.encoder_kind() {
        None => Ok(Dataset::unconditional(grids)),
        Some(kind) => {
            let conds = grids
                .iter()
                .map(|g| condition_for(g, kind, rc.scan_view, rc.occlusion))
                .collect::<Result<Vec<_>>>()?;
            Dataset::paired(conds, grids)
        }
    }
}

fn write_snapshot(rc: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&rc.out)?;
    std::fs::write(rc.out.join(RESOLVED_CONFIG_FILE), rc.to_kv()?)?;
    Ok(())
}

fn write_history(rc: &RunConfig, t: &Trainer) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(rc.out.join(TELEMETRY_FILE))?);
    write_telemetry(&mut f, &t.state.history)?;
    f.flush()?;
    Ok(())
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let rc = resolve(args)?;
    write_snapshot(&rc)?;
    let mut trainer = Trainer::new(rc.train.clone())?;
    if trainer.is_done() {
        return Ok(());
    }
    let grids = load_grids(&rc)?;
    let data = build_dataset(&rc, &grids)?;
    let every = rc.train.checkpoint_every;
    let result = trainer.train(&data, |t| {
        if every > 0 && t.state.epoch % every == 0 && !t.is_done() {
            t.save(&rc.out.join(format!("checkpoint-epoch{:04}.vxgn", t.state.epoch)))?;
        }
        Ok(())
    });
    write_history(&rc, &trainer)?;
    match result {
        Ok(()) => {
            trainer.save(&rc.out.join(CHECKPOINT_FILE))?;
            let means = trainer.epoch_mean_disc_loss();
            if let Some(last) = means.last() {
                println!("trained {} epochs; final epoch-mean discriminator loss {last}", means.len());
            }
            Ok(())
        }
        Err(e) => {
            if matches!(e, Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. }) {
                trainer.save(&rc.out.join(LAST_GOOD_FILE))?;
            }
            Err(e)
        }
    }
}

fn write_outputs(dir: &Path, stem: &str, grid: &VoxelGrid, binvox: bool) -> Result<()> {
    grid.write_vxg(&dir.join(format!("{stem}.vxg")))?;
    if binvox {
        write_binvox(grid, &dir.join(format!("{stem}.binvox")))?;
    }
    Ok(())
}

fn cmd_generate(checkpoint: &Path, count: usize, seed: u64, out: &Path, binvox: bool) -> Result<()> {
    let t = Trainer::load(checkpoint)?;
    std::fs::create_dir_all(out)?;
    let grids = trainer::generate(&t.state.generator, t.config.latent_dim, seed, count)?;
    for (i, g) in grids.iter().enumerate() {
        write_outputs(out, &format!("sample-{i:03}"), g, binvox)?;
    }
    Ok(())
}

fn cmd_interpolate(checkpoint: &Path, a: u64, b: u64, steps: usize, out: &Path) -> Result<()> {
    let t = Trainer::load(checkpoint)?;
    let grids = trainer::interpolate(&t.state.generator, t.config.latent_dim, a, b, steps)?;
    std::fs::create_dir_all(out)?;
    for (i, g) in grids.iter().enumerate() {
        write_outputs(out, &format!("step-{i:03}"), g, false)?;
    }
    Ok(())
}

fn cmd_scan(grid: &Path, view: &str, out: &Path) -> Result<()> {
    let view: View = view.parse()?;
    let g = read_grid(grid)?;
    let map = depth_scan(&g, view);
    let shell = crate::voxel::occlude_to_grid(&map, g.extent())?;
    std::fs::create_dir_all(out)?;
    map.write_pgm(g.extent(), &out.join("depth.pgm"))?;
    shell.write_vxg(&out.join("shell.vxg"))?;
    Ok(())
}

fn conditioned(t: &Trainer) -> Result<TrainedCompleter<'_>> {
    let encoder = t
        .state
        .encoder
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("checkpoint has no encoder; train with mode vae-iwgan".into()))?;
    Ok(TrainedCompleter {
        encoder,
        generator: &t.state.generator,
    })
}

fn cmd_complete(checkpoint: &Path, grid: &Path, out: &Path) -> Result<()> {
    let t = Trainer::load(checkpoint)?;
    if t.config.encoder_kind() != Some(NetworkKind::VoxelEncoder) {
        return Err(Error::InvalidArgument("completion needs a voxel-encoder checkpoint".into()));
    }
    let shell = read_grid(grid)?;
    if shell.extent() != t.config.resolution {
        return Err(Error::Data(format!(
            "grid extent {} does not match checkpoint resolution {}",
            shell.extent(),
            t.config.resolution
        )));
    }
    let completed = crate::eval::CompletionModel::complete(&conditioned(&t)?, &shell.to_signed())?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    match out.extension().and_then(|e| e.to_str()) {
        Some("binvox") => write_binvox(&completed, out),
        _ => completed.write_vxg(out),
    }
}

fn cmd_evaluate(args: &EvalArgs) -> Result<()> {
    let t = Trainer::load(&args.checkpoint)?;
    let model = conditioned(&t)?;
    let mut rc = RunConfig {
        train: t.config.clone(),
        ..RunConfig::default()
    };
    if let Some(p) = &args.config {
        rc.apply_file(p)?;
    }
    if let Some(d) = &args.data {
        rc.data = d.clone();
    }
    if let Some(s) = args.seed {
        rc.train.seed = s;
    }
    let pooling = match args.pooling.as_str() {
        "dataset" => Pooling::Dataset,
        "per-object" => Pooling::PerObject,
        p => return Err(flag_error("pooling", format!("unknown pooling `{p}`"))),
    };
    let kind = t.config.encoder_kind().expect("encoder present");
    let grids = load_grids(&rc)?;
    let pairs = grids
        .iter()
        .map(|g| {
            Ok(CompletionPair {
                condition: condition_for(g, kind, rc.scan_view, rc.occlusion)?,
                target: g.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate_completion(&model, &pairs, pooling)?;
    std::fs::create_dir_all(&args.out)?;
    report.write_json(&args.out.join("report.json"))?;
    report.write_iou_csv(&args.out.join("iou.csv"))?;
    println!("mean AP {:.4}, mean IoU {:.4}", report.mean_ap, report.mean_iou);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Generate {
            checkpoint,
            count,
            seed,
            out,
            binvox,
        } => cmd_generate(&checkpoint, count, seed, &out, binvox),
        Command::Interpolate {
            checkpoint,
            seed_a,
            seed_b,
            steps,
            out,
        } => cmd_interpolate(&checkpoint, seed_a, seed_b, steps, &out),
        Command::Scan { grid, view, out } => cmd_scan(&grid, &view, &out),
        Command::Complete { checkpoint, grid, out } => cmd_complete(&checkpoint, &grid, &out),
        Command::Evaluate(a) => cmd_evaluate(&a),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_and_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "mode = iwgan\nres = 8\nbatch = 4\ntoy_count = 3\n").unwrap();
        let args = RunArgs {
            config: Some(cfg),
            batch: Some(6),
            ..RunArgs::default()
        };
        let rc = resolve(&args).unwrap();
        assert_eq!(rc.train.batch_size, 6);
        assert_eq!(rc.train.resolution, 8);
        assert_eq!(rc.toy_count, 3);
    }

    #[test]
    fn unknown_key_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.cfg");
        std::fs::write(&cfg, "res = 8\n\nlearning_rate = 3\n").unwrap();
        let err = resolve(&RunArgs {
            config: Some(cfg.clone()),
            ..RunArgs::default()
        })
        .unwrap_err();
        assert_eq!(exit_code(&err), EXIT_CONFIG);
        let msg = err.to_string();
        assert!(msg.contains("bad.cfg:3") && msg.contains("learning_rate"), "{msg}");
    }

    #[test]
    fn snapshot_reparses() {
        let rc = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("snap.cfg");
        std::fs::write(&p, rc.to_kv().unwrap()).unwrap();
        let mut back = RunConfig::default();
        back.apply_file(&p).unwrap();
        assert_eq!(back.to_kv().unwrap(), rc.to_kv().unwrap());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Data("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::NonFiniteLoss { what: "d", step: 1 }), EXIT_NUMERIC);
        assert_eq!(run(["voxgan", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(run(["voxgan", "train", "--mode", "nope"]), EXIT_CONFIG);
    }
}
