use std::collections::BTreeMap;

use clap::{Args, Parser, Subcommand};

/// Declares a flag group: one `--key value` option per field, collected
/// into a `key -> value` map for merging with config files.
macro_rules! key_group {
    ($(#[$meta:meta])* $name:ident { $( $(#[doc = $doc:literal])* $field:ident ),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, Args)]
        pub struct $name {
            $(
                $(#[doc = $doc])*
                #[arg(long = stringify!($field), value_name = "VALUE")]
                pub $field: Option<String>,
            )*
        }

        impl $name {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn collect(&self, map: &mut BTreeMap<String, String>) {
                $(
                    if let Some(v) = &self.$field {
                        map.insert(stringify!($field).to_string(), v.clone());
                    }
                )*
            }
        }
    };
}

key_group!(
    /// Config sources.
    CommonKeys {
        /// `key = value` file; flags given on the command line take precedence
        config,
        /// vehicle | pedestrian_birdseye | pedestrian_highangle
        preset,
    }
);

key_group!(DatasetKeys {
    /// Dataset name
    name,
    /// vehicle_birdseye | pedestrian_birdseye | pedestrian_highangle
    domain,
    /// meters | pixels
    units,
    /// Recording frame rate
    native_fps,
    /// Sampling frame rate after downsampling
    target_fps,
    /// Observed steps per window
    t_in,
    /// Predicted steps per window
    t_out,
});

key_group!(SynthKeys {
    /// constant_velocity | turning | crossing
    synth_kind,
    /// Subjects in the scene
    n_subjects,
    /// Samples per subject at the target rate (default: one window plus three)
    n_frames,
    /// Gaussian position noise, output units
    noise_std,
    /// Multiplier on every noise-free position
    synth_scale,
    /// RNG seed
    seed,
});

key_group!(PrepareKeys {
    /// Comma-separated track CSVs; each file stem names a scene
    input,
    /// Windowed-dataset cache to write
    output,
    /// Sampled steps between consecutive window starts
    window_stride,
});

key_group!(ModelKeys {
    /// Per-step feature width of the graph stage
    features_per_step,
    /// Embedding width
    embed_dim,
    /// Hidden width of the aggregation MLPs
    mlp_hidden,
    /// Three comma-separated convolution widths
    conv_channels,
    /// Channel-attention reduction ratio
    cbam_reduction,
    /// Spatial-attention kernel size
    spatial_kernel,
});

key_group!(TrainKeys {
    /// Training epochs
    epochs,
    /// Adam step size
    learning_rate,
    /// Adam first-moment decay
    beta1,
    /// Adam second-moment decay
    beta2,
    /// Adam denominator offset
    epsilon,
    /// Initialization and shuffling seed
    seed,
    /// Global gradient-norm limit, or `none`
    gradient_clip,
    /// Epochs between validation passes
    eval_every,
    /// `true` to also write a checkpoint at every validation pass
    snapshots,
});

key_group!(SplitKeys {
    /// `train,val,test` fractions, `loo:<scene>` or `all`
    split,
});

key_group!(SubsetKeys {
    /// `train,val,test` fractions, `loo:<scene>` or `all`
    split,
    /// Part of the split to use: train | val | test | all
    subset,
});

key_group!(BenchKeys {
    /// Untimed passes before measuring
    warmup,
    /// Timed passes
    reps,
});

#[derive(Debug, Parser)]
#[command(name = "pishgu", version, about = "Trajectory prediction toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic track corpus
    Synth {
        #[command(flatten)]
        common: CommonKeys,
        #[command(flatten)]
        dataset: DatasetKeys,
        #[command(flatten)]
        synth: SynthKeys,
        /// Track CSV to write
        #[arg(long, value_name = "VALUE")]
        output: Option<String>,
    },
    /// Build a windowed-dataset cache from track CSVs
    Prepare {
        #[command(flatten)]
        common: CommonKeys,
        #[command(flatten)]
        dataset: DatasetKeys,
        #[command(flatten)]
        prepare: PrepareKeys,
    },
    /// Train a model and write its checkpoint and loss log
    Train {
        #[command(flatten)]
        common: CommonKeys,
        #[command(flatten)]
        model: ModelKeys,
        #[command(flatten)]
        train: TrainKeys,
        #[command(flatten)]
        split: SplitKeys,
        #[command(flatten)]
        io: TrainIo,
    },
    /// Compute displacement metrics for a checkpoint
    Eval {
        #[command(flatten)]
        common: CommonKeys,
        #[command(flatten)]
        subset: SubsetKeys,
        #[command(flatten)]
        io: EvalIo,
    },
    /// Write per-window predictions as CSV
    Predict {
        #[command(flatten)]
        common: CommonKeys,
        #[command(flatten)]
        subset: SubsetKeys,
        #[command(flatten)]
        io: PredictIo,
    },
    /// Measure per-sample latency and frame throughput
    Bench {
        #[command(flatten)]
        common: CommonKeys,
        #[command(flatten)]
        subset: SubsetKeys,
        #[command(flatten)]
        bench: BenchKeys,
        #[command(flatten)]
        io: EvalIo,
    },
}

key_group!(TrainIo {
    /// Windowed-dataset cache
    dataset,
    /// Checkpoint to write
    checkpoint,
    /// Loss log CSV (default: checkpoint path with `.log.csv`)
    log,
});

key_group!(EvalIo {
    /// Windowed-dataset cache
    dataset,
    /// Checkpoint to read
    checkpoint,
    /// Report path stem; `.txt` and `.json` are written
    output,
});

key_group!(PredictIo {
    /// Windowed-dataset cache
    dataset,
    /// Checkpoint to read
    checkpoint,
    /// Prediction CSV to write
    output,
    /// Optional per-frame trajectory JSON for plotting
    overlay,
});

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Prepare { .. } => "prepare",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Predict { .. } => "predict",
            Command::Bench { .. } => "bench",
        }
    }

    pub fn common(&self) -> &CommonKeys {
        match self {
            Command::Synth { common, .. }
            | Command::Prepare { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Predict { common, .. }
            | Command::Bench { common, .. } => common,
        }
    }

    /// Flags given on the command line, excluding `--config`.
    pub fn flag_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        match self {
            Command::Synth { common, dataset, synth, output } => {
                common.collect(&mut m);
                dataset.collect(&mut m);
                synth.collect(&mut m);
                if let Some(o) = output {
                    m.insert("output".into(), o.clone());
                }
            }
            Command::Prepare { common, dataset, prepare } => {
                common.collect(&mut m);
                dataset.collect(&mut m);
                prepare.collect(&mut m);
            }
            Command::Train { common, model, train, split, io } => {
                common.collect(&mut m);
                model.collect(&mut m);
                train.collect(&mut m);
                split.collect(&mut m);
                io.collect(&mut m);
            }
            Command::Eval { common, subset, io } => {
                common.collect(&mut m);
                subset.collect(&mut m);
                io.collect(&mut m);
            }
            Command::Predict { common, subset, io } => {
                common.collect(&mut m);
                subset.collect(&mut m);
                io.collect(&mut m);
            }
            Command::Bench { common, subset, bench, io } => {
                common.collect(&mut m);
                subset.collect(&mut m);
                bench.collect(&mut m);
                io.collect(&mut m);
            }
        }
        m.remove("config");
        m
    }
}

/// Every key any command understands.
pub fn known_keys() -> impl Iterator<Item = &'static str> {
    [
        CommonKeys::KEYS,
        DatasetKeys::KEYS,
        SynthKeys::KEYS,
        PrepareKeys::KEYS,
        ModelKeys::KEYS,
        TrainKeys::KEYS,
        SubsetKeys::KEYS,
        BenchKeys::KEYS,
        PredictIo::KEYS,
        TrainIo::KEYS,
    ]
    .into_iter()
    .flatten()
    .copied()
}
