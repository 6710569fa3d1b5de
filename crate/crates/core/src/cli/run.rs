use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;

use super::args::{known_keys, Cli, Command};
use crate::bench::bench_forward;
use crate::data::{
    prepare_scene, load_tracks, save_tracks, split_dataset, synth_scene_with, DatasetSpec, FrameSample,
    SceneKind, SplitPolicy, SynthOptions, WindowedDataset,
};
use crate::error::{Error, Result};
use crate::kv;
use crate::model::{load_checkpoint, predict_absolute, save_checkpoint, ModelConfig, ModelParams};
use crate::training::{evaluate, evaluate_constant_velocity, save_history, train_with, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MISSING_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_CONTRACT: i32 = 4;

/// Exit status for an error returned by a command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING_INPUT,
        Error::Io { .. } => EXIT_FAILURE,
        Error::Config { .. } | Error::Parse { .. } | Error::Format(_) => EXIT_CONFIG,
        Error::Dimension { .. }
        | Error::Contract(_)
        | Error::EmptyFrame
        | Error::NonFiniteGradient(_)
        | Error::Oracle { .. } => EXIT_CONTRACT,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    match run(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Config-file entries overlaid with command-line flags.
struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    fn resolve(cmd: &Command) -> Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(path) = &cmd.common().config {
            let path = Path::new(path);
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            map = kv::parse(&text)?;
            for key in map.keys() {
                if !known_keys().any(|k| k == key) {
                    return Err(Error::config(key.clone(), format!("unknown key in {}", path.display())));
                }
            }
        }
        map.extend(cmd.flag_map());
        Ok(Self { map })
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn get<T>(&self, key: &str) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        kv::get(&self.map, key)
    }

    fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        if self.has(key) {
            self.get(key)
        } else {
            Ok(default)
        }
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        match self.map.get(key) {
            Some(p) if !p.is_empty() => Ok(PathBuf::from(p)),
            _ => Err(Error::config(key, "a path is required")),
        }
    }

    /// Preset spec with any dataset keys overridden.
    fn dataset_spec(&self) -> Result<DatasetSpec> {
        let base = DatasetSpec::preset(&self.get_or("preset", "vehicle".to_string())?)?;
        let mut map = kv::parse(&base.to_kv())?;
        for key in ["name", "domain", "units", "native_fps", "target_fps", "t_in", "t_out"] {
            if let Some(v) = self.map.get(key) {
                map.insert(key.to_string(), v.clone());
            }
        }
        DatasetSpec::from_map(&map)
    }

    fn model_config(&self, t_in: usize, t_out: usize) -> Result<ModelConfig> {
        let d = ModelConfig::for_windows(t_in, t_out);
        let conv_channels = match self.map.get("conv_channels") {
            None => d.conv_channels,
            Some(raw) => {
                let parts: Vec<usize> = raw
                    .split(',')
                    .map(|p| p.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::config("conv_channels", format!("cannot parse `{raw}`")))?;
                parts
                    .try_into()
                    .map_err(|_| Error::config("conv_channels", "expected three widths"))?
            }
        };
        let cfg = ModelConfig {
            t_in,
            t_out,
            features_per_step: self.get_or("features_per_step", d.features_per_step)?,
            embed_dim: self.get_or("embed_dim", d.embed_dim)?,
            mlp_hidden: self.get_or("mlp_hidden", d.mlp_hidden)?,
            conv_channels,
            cbam_reduction: self.get_or("cbam_reduction", d.cbam_reduction)?,
            spatial_kernel: self.get_or("spatial_kernel", d.spatial_kernel)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn split_policy(&self, spec: &DatasetSpec) -> Result<SplitPolicy> {
        match self.map.get("split") {
            Some(s) => s.parse(),
            None if spec.domain == crate::data::Domain::VehicleBirdseye => Ok(SplitPolicy::vehicle_default()),
            None => Ok(SplitPolicy::All),
        }
    }
}

pub fn run(cmd: &Command) -> Result<()> {
    let s = Settings::resolve(cmd)?;
    log::debug!("{} with {:?}", cmd.name(), s.map);
    match cmd {
        Command::Synth { .. } => synth(&s),
        Command::Prepare { .. } => prepare(&s),
        Command::Train { .. } => train(&s),
        Command::Eval { .. } => eval(&s),
        Command::Predict { .. } => predict(&s),
        Command::Bench { .. } => bench(&s),
    }
}

fn synth(s: &Settings) -> Result<()> {
    let spec = s.dataset_spec()?;
    let output = s.path("output")?;
    let opts = SynthOptions {
        kind: s.get_or("synth_kind", SceneKind::ConstantVelocity)?,
        n_subjects: s.get_or("n_subjects", 5)?,
        n_frames: s.get_or("n_frames", spec.window_len() + 3)?,
        seed: s.get_or("seed", 0)?,
        frame_step: spec.frame_stride()?,
        scale: s.get_or("synth_scale", 1.0)?,
        noise_std: s.get_or("noise_std", 0.0)?,
    };
    let tracks = synth_scene_with(&opts)?;
    save_tracks(&output, &tracks)?;
    println!("wrote {} track points to {}", tracks.len(), output.display());
    Ok(())
}

fn prepare(s: &Settings) -> Result<()> {
    let spec = s.dataset_spec()?;
    let inputs: Vec<PathBuf> = s
        .get::<String>("input")?
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| PathBuf::from(p.trim()))
        .collect();
    if inputs.is_empty() {
        return Err(Error::config("input", "a path is required"));
    }
    let output = s.path("output")?;
    let stride = s.get_or("window_stride", 1usize)?;
    let mut frames = Vec::new();
    for path in &inputs {
        let scene = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".into());
        let tracks = load_tracks(path)?;
        frames.extend(prepare_scene(&tracks, &spec, stride, &scene)?);
    }
    let dataset = WindowedDataset { spec, frames };
    dataset.save(&output)?;
    println!(
        "wrote {} frames ({} windows) to {}",
        dataset.frames.len(),
        dataset.n_windows(),
        output.display()
    );
    Ok(())
}

fn train_config(s: &Settings, spec: &DatasetSpec) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::for_domain(spec.domain);
    let keys = ["epochs", "learning_rate", "beta1", "beta2", "epsilon", "seed", "gradient_clip", "eval_every"];
    let map: BTreeMap<String, String> = keys
        .iter()
        .filter_map(|&k| s.map.get(k).map(|v| (k.to_string(), v.clone())))
        .collect();
    cfg.apply_map(&map)?;
    Ok(cfg)
}

fn train(s: &Settings) -> Result<()> {
    let dataset = WindowedDataset::load(&s.path("dataset")?)?;
    let checkpoint = s.path("checkpoint")?;
    let log_path = match s.map.get("log") {
        Some(p) => PathBuf::from(p),
        None => checkpoint.with_extension("log.csv"),
    };
    let model_cfg = s.model_config(dataset.spec.t_in, dataset.spec.t_out)?;
    let train_cfg = train_config(s, &dataset.spec)?;
    let snapshots: bool = s.get_or("snapshots", false)?;
    let split = split_dataset(&dataset.frames, &s.split_policy(&dataset.spec)?)?;
    log::info!(
        "training on {} frames, validating on {}",
        split.train.len(),
        split.val.len()
    );
    let (params, history) = train_with(&split.train, &split.val, model_cfg, &train_cfg, |log, params| {
        if snapshots && log.epoch % train_cfg.eval_every == 0 && log.epoch != train_cfg.epochs {
            save_checkpoint(&checkpoint.with_extension(format!("epoch{}.ckpt", log.epoch)), params)?;
        }
        Ok(())
    })?;
    save_checkpoint(&checkpoint, &params)?;
    save_history(&log_path, &history)?;
    if let Some(last) = history.last() {
        println!("final train loss {}", last.train_loss);
    }
    println!("wrote {} and {}", checkpoint.display(), log_path.display());
    Ok(())
}

/// Dataset, checkpoint and the chosen part of the split, with the
/// checkpoint's window geometry checked against the dataset.
fn load_eval_inputs(s: &Settings) -> Result<(WindowedDataset, ModelParams, Vec<FrameSample>)> {
    let dataset = WindowedDataset::load(&s.path("dataset")?)?;
    let params = load_checkpoint(&s.path("checkpoint")?)?;
    for (field, model, data) in [
        ("t_in", params.config.t_in, dataset.spec.t_in),
        ("t_out", params.config.t_out, dataset.spec.t_out),
    ] {
        if model != data {
            return Err(Error::config(
                field,
                format!("checkpoint uses {model} steps but the dataset has {data}"),
            ));
        }
    }
    let split = split_dataset(&dataset.frames, &s.split_policy(&dataset.spec)?)?;
    let subset: String = s.get_or("subset", "test".to_string())?;
    let frames = match subset.as_str() {
        "train" => split.train,
        "val" => split.val,
        "test" => split.test,
        "all" => dataset.frames.clone(),
        other => return Err(Error::config("subset", format!("unknown subset `{other}`"))),
    };
    if frames.iter().all(FrameSample::is_empty) {
        return Err(Error::config("subset", format!("the `{subset}` subset has no windows")));
    }
    Ok((dataset, params, frames))
}

fn eval(s: &Settings) -> Result<()> {
    let (dataset, params, frames) = load_eval_inputs(s)?;
    let stem = s.get_or("output", "metrics".to_string()).map(PathBuf::from)?;
    let report = evaluate(&frames, &params, &dataset.spec)?;
    let baseline = evaluate_constant_velocity(&frames, &dataset.spec)?;
    report.save(&stem)?;
    print!("{}", report.to_text());
    println!("constant_velocity_ade = {}", baseline.ade);
    Ok(())
}

#[derive(Serialize)]
struct OverlaySubject {
    window_id: usize,
    subject_id: u64,
    observed: Vec<[f64; 2]>,
    future: Vec<[f64; 2]>,
    predicted: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct OverlayFrame {
    scene: String,
    anchor_frame: u64,
    subjects: Vec<OverlaySubject>,
}

fn predict(s: &Settings) -> Result<()> {
    let (_, params, frames) = load_eval_inputs(s)?;
    let output = s.path("output")?;
    let overlay_path = s.map.get("overlay").map(PathBuf::from);
    let mut csv = String::from("window_id,subject_id,step,x,y\n");
    let mut overlay = Vec::new();
    let mut window_id = 0;
    for frame in frames.iter().filter(|f| !f.is_empty()) {
        let pred = predict_absolute(frame, &params)?;
        let t_out = params.config.t_out;
        let mut subjects = Vec::new();
        for (w, rows) in frame.denormalized().into_iter().zip(pred.data().chunks_exact(2 * t_out)) {
            let points: Vec<[f64; 2]> = rows.chunks_exact(2).map(|p| [p[0], p[1]]).collect();
            for (step, p) in points.iter().enumerate() {
                csv.push_str(&format!("{window_id},{},{},{},{}\n", w.subject_id, step + 1, p[0], p[1]));
            }
            subjects.push(OverlaySubject {
                window_id,
                subject_id: w.subject_id,
                observed: w.observed,
                future: w.future,
                predicted: points,
            });
            window_id += 1;
        }
        overlay.push(OverlayFrame {
            scene: frame.scene.clone(),
            anchor_frame: frame.anchor_frame,
            subjects,
        });
    }
    std::fs::write(&output, csv).map_err(|e| Error::io(&output, e))?;
    if let Some(path) = overlay_path {
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer(&mut f, &overlay).map_err(|e| Error::Format(e.to_string()))?;
        f.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    println!("wrote {window_id} windows to {}", output.display());
    Ok(())
}

fn bench(s: &Settings) -> Result<()> {
    let (_, params, frames) = load_eval_inputs(s)?;
    let stem = s.get_or("output", "bench".to_string()).map(PathBuf::from)?;
    let warmup = s.get_or("warmup", crate::bench::MIN_WARMUP)?;
    let reps = s.get_or("reps", crate::bench::MIN_REPS)?;
    let frames: Vec<FrameSample> = frames.into_iter().filter(|f| !f.is_empty()).collect();
    let report = bench_forward(&params, &frames, warmup, reps)?;
    report.save(&stem)?;
    print!("{}", report.to_text());
    Ok(())
}
