//! Command-line front end: data generation, training, mixing and the evaluation studies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use tdmix::harness::dataset::generate_with_split;
use tdmix::harness::eval::eval_occlusion;
use tdmix::harness::mixing::{mix_pair, stream_rng, PairSide};
use tdmix::harness::study::{
    ablate_beta, ablate_sigma, ablation_csv, inconsistency_csv, inconsistency_study, mask_gaze, sample_pairs,
};
use tdmix::harness::train::metrics_csv;
use tdmix::harness::{eval_mixed_accuracy, train, BetaChoice, MixSettings, MixerKind, SyntheticDataset};
use tdmix::io::{self, ExperimentConfig};
use tdmix::{Error, VitModel};

/// Stream used by `mix` for its window and `β` draws.
const MIX_CLI_STREAM: u64 = 31;
const PREVIEW_COUNT: usize = 8;

#[derive(Parser)]
#[command(name = "tdmix", version, about = "Attention-guided image mixing on a toy vision transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training seed (the data seed for gen-data).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// A value in [0, 1] or "random".
    #[arg(long)]
    beta: Option<String>,
    /// none, random-cutmix, bottom-up or tdattenmix.
    #[arg(long)]
    mixer: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Any config key, as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; nothing is written elsewhere.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset, its gaze grids and a few previews.
    GenData(Common),
    /// Train a model and write its checkpoint and metrics.
    Train(Common),
    /// Mix two dataset records and write the images, overlays and plan.
    Mix {
        #[command(flatten)]
        common: Common,
        /// Record indices of A and B, as "a,b".
        #[arg(long)]
        pair: Option<String>,
    },
    /// Top-1/top-2 accuracy on mixed validation pairs.
    EvalMixed(Common),
    /// Accuracy as patches are dropped.
    EvalOcclusion(Common),
    /// Distance between mixer label ratios and gaze-derived ratios.
    Inconsistency(Common),
    /// Final accuracy for each balance factor.
    AblateSigma {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "0,0.5,1,2,3,4")]
        values: String,
    },
    /// Final accuracy for each beta choice.
    AblateBeta {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "0,0.3,0.5,0.7,1,random")]
        values: String,
    },
}

/// A failure plus the exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::Config(_) => 2,
            _ => 3,
        };
        Self { code, error }
    }
}

fn usage(error: Error) -> Failure {
    Failure { code: 2, error }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn load_config(c: &Common, data_seed: bool) -> Outcome<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::read(p).map_err(usage)?,
        None => ExperimentConfig::default(),
    };
    let mut overrides: Vec<(String, String)> = Vec::new();
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(Error::Config(format!("--set expects KEY=VALUE, got '{}'", kv))))?;
        overrides.push((k.trim().into(), v.trim().into()));
    }
    if let Some(s) = c.seed {
        let key = if data_seed { "data_seed" } else { "seed" };
        overrides.push((key.into(), s.to_string()));
    }
    for (key, v) in [("sigma", c.sigma.map(|s| s.to_string())), ("beta", c.beta.clone()), ("mixer", c.mixer.clone())] {
        if let Some(v) = v {
            overrides.push((key.into(), v));
        }
    }
    if let Some(e) = c.epochs {
        overrides.push(("epochs".into(), e.to_string()));
    }
    for (k, v) in overrides {
        cfg.set(&k, &v).map_err(usage)?;
    }
    // zero epochs is allowed here; evaluation commands then use an untrained model
    let mut probe = cfg.clone();
    probe.train.epochs = probe.train.epochs.max(1);
    probe.validate().map_err(usage)?;
    Ok(cfg)
}

fn write(out: &Path, name: &str, bytes: &[u8]) -> Outcome<()> {
    io::write_file(&out.join(name), bytes)?;
    info!("wrote {}", out.join(name).display());
    Ok(())
}

fn load_data(cfg: &ExperimentConfig) -> Outcome<SyntheticDataset> {
    let v = &cfg.train.vit;
    let data = match &cfg.data.file {
        Some(p) => io::read_dataset(p)?,
        None => generate_with_split(
            cfg.data.seed,
            cfg.data.per_class,
            v.classes,
            v.image_height,
            v.image_width,
            cfg.data.val_fraction,
        )?,
    };
    if (data.height, data.width, data.channels, data.classes) != (v.image_height, v.image_width, v.channels, v.classes) {
        return Err(usage(Error::Config(format!(
            "dataset is {}x{}x{} with {} classes; config expects {}x{}x{} with {}",
            data.height, data.width, data.channels, data.classes, v.image_height, v.image_width, v.channels, v.classes
        ))));
    }
    Ok(data)
}

/// Validation records as their own dataset.
fn val_only(data: &SyntheticDataset) -> Outcome<SyntheticDataset> {
    if data.val().is_empty() {
        return Err(usage(Error::Config("the dataset has no validation records".into())));
    }
    Ok(SyntheticDataset::new(
        data.height,
        data.width,
        data.channels,
        data.classes,
        data.val().to_vec(),
        0,
    )?)
}

/// The configured checkpoint, a fresh init for zero epochs, or a newly trained model.
fn obtain_model(cfg: &ExperimentConfig, data: &SyntheticDataset, out: &Path) -> Outcome<VitModel> {
    if let Some(p) = &cfg.eval.checkpoint {
        let model = io::read_checkpoint(p)?;
        if model.config().classes != data.classes || model.config().image_height != data.height {
            return Err(usage(Error::Config("checkpoint does not match the dataset".into())));
        }
        return Ok(model);
    }
    if cfg.train.epochs == 0 {
        return Ok(VitModel::new(cfg.train.model_config())?);
    }
    info!("no checkpoint configured; training {} epochs", cfg.train.epochs);
    let outcome = train(&cfg.train, data)?;
    write(out, "model.ckpt", &io::encode_checkpoint(&outcome.model))?;
    write(out, "metrics.csv", metrics_csv(&outcome.log).as_bytes())?;
    Ok(outcome.model)
}

fn settings(cfg: &ExperimentConfig) -> Outcome<MixSettings> {
    Ok(cfg.train.mix_settings()?)
}

fn parse_pair(s: &str) -> Outcome<(usize, usize)> {
    let bad = || usage(Error::Config(format!("--pair expects two indices a,b, got '{}'", s)));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn run(command: Command) -> Outcome<()> {
    match command {
        Command::GenData(c) => {
            let cfg = load_config(&c, true)?;
            let data = load_data(&cfg)?;
            write(&c.out, "config.txt", cfg.format().as_bytes())?;
            write(&c.out, "dataset.bin", &io::encode_dataset(&data)?)?;
            for (i, g) in mask_gaze(&data, cfg.train.vit.patch).iter().enumerate() {
                if let Some(g) = g {
                    write(&c.out, &format!("gaze/{}", io::gaze_file_name(i)), io::format_grid(g).as_bytes())?;
                }
            }
            for (i, s) in data.samples.iter().take(PREVIEW_COUNT).enumerate() {
                write(&c.out, &format!("preview/sample_{:05}.ppm", i), &io::encode_pnm(&s.image)?)?;
            }
        }
        Command::Train(c) => {
            let cfg = load_config(&c, false)?;
            let data = load_data(&cfg)?;
            write(&c.out, "config.txt", cfg.format().as_bytes())?;
            let outcome = train(&cfg.train, &data)?;
            write(&c.out, "model.ckpt", &io::encode_checkpoint(&outcome.model))?;
            write(&c.out, "metrics.csv", metrics_csv(&outcome.log).as_bytes())?;
        }
        Command::Mix { common: c, pair } => {
            let mut cfg = load_config(&c, false)?;
            if let Some(p) = pair {
                (cfg.eval.mix_a, cfg.eval.mix_b) = parse_pair(&p)?;
            }
            let s = settings(&cfg)?;
            if s.kind == MixerKind::None {
                return Err(usage(Error::Config("mix needs a mixer other than none".into())));
            }
            let data = load_data(&cfg)?;
            let (ia, ib) = (cfg.eval.mix_a, cfg.eval.mix_b);
            for i in [ia, ib] {
                if i >= data.len() {
                    return Err(usage(Error::Config(format!("record {} out of range ({} records)", i, data.len()))));
                }
            }
            write(&c.out, "config.txt", cfg.format().as_bytes())?;
            let model = obtain_model(&cfg, &data, &c.out)?;
            let patch = model.config().patch;
            let (sa, sb) = (&data.samples[ia], &data.samples[ib]);
            // unguided mixers still get bottom-up overlays for inspection
            let shown = if s.kind.is_guided() {
                s
            } else {
                MixSettings {
                    kind: MixerKind::BottomUp,
                    ..s
                }
            };
            let ga = shown.guide(&model, &model.forward(&sa.image)?, sa.label)?.expect("guided");
            let gb = shown.guide(&model, &model.forward(&sb.image)?, sb.label)?.expect("guided");
            let (ya, yb) = (data.one_hot(ia), data.one_hot(ib));
            let mut rng = stream_rng(cfg.train.seed, MIX_CLI_STREAM, 0);
            let guided = s.kind.is_guided();
            let mixed = mix_pair(
                &s,
                &mut rng,
                None,
                patch,
                PairSide {
                    image: &sa.image,
                    label: &ya,
                    guide: guided.then_some(&ga),
                },
                PairSide {
                    image: &sb.image,
                    label: &yb,
                    guide: guided.then_some(&gb),
                },
                ia == ib,
            )?;
            write(&c.out, "x_a.ppm", &io::encode_pnm(&sa.image)?)?;
            write(&c.out, "x_b.ppm", &io::encode_pnm(&sb.image)?)?;
            write(&c.out, "x_m.ppm", &io::encode_pnm(&mixed.image)?)?;
            write(&c.out, "overlay_a.ppm", &io::encode_pnm(&io::overlay(&sa.image, &ga, patch)?)?)?;
            write(&c.out, "overlay_b.ppm", &io::encode_pnm(&io::overlay(&sb.image, &gb, patch)?)?)?;
            write(&c.out, "grid_a.txt", io::format_grid(&ga).as_bytes())?;
            write(&c.out, "grid_b.txt", io::format_grid(&gb).as_bytes())?;
            if let Some(plan) = &mixed.plan {
                write(&c.out, "plan.tsv", io::format_plan(plan).as_bytes())?;
            }
            let label: Vec<String> = mixed.label.as_slice().iter().map(|p| p.to_string()).collect();
            write(&c.out, "label.txt", format!("{}\n", label.join(" ")).as_bytes())?;
        }
        Command::EvalMixed(c) => {
            let cfg = load_config(&c, false)?;
            let s = settings(&cfg)?;
            let data = load_data(&cfg)?;
            write(&c.out, "config.txt", cfg.format().as_bytes())?;
            let model = obtain_model(&cfg, &data, &c.out)?;
            let val = val_only(&data)?;
            let pairs = sample_pairs(&val, cfg.eval.pairs, cfg.train.seed)?;
            let acc = eval_mixed_accuracy(&model, &val, &pairs, &s, cfg.train.seed)?;
            let csv = format!(
                "mixer,top1,top2,pairs\n{},{:.17e},{:.17e},{}\n",
                s.label(),
                acc.top1,
                acc.top2,
                acc.pairs
            );
            write(&c.out, "mixed_accuracy.csv", csv.as_bytes())?;
        }
        Command::EvalOcclusion(c) => {
            let cfg = load_config(&c, false)?;
            let data = load_data(&cfg)?;
            write(&c.out, "config.txt", cfg.format().as_bytes())?;
            let model = obtain_model(&cfg, &data, &c.out)?;
            let val = val_only(&data)?;
            let curve = eval_occlusion(&model, &val.samples, &cfg.eval.drop_ratios, cfg.eval.drop_mode, cfg.train.seed, cfg.eval.occlusion_repeats)?;
            let mut csv = String::from("mode,ratio,top1\n");
            for (r, a) in curve {
                csv.push_str(&format!("{},{},{:.17e}\n", cfg.eval.drop_mode, r, a));
            }
            write(&c.out, "occlusion.csv", csv.as_bytes())?;
        }
        Command::Inconsistency(c) => {
            let cfg = load_config(&c, false)?;
            let data = load_data(&cfg)?;
            write(&c.out, "config.txt", cfg.format().as_bytes())?;
            let model = obtain_model(&cfg, &data, &c.out)?;
            let gaze = match &cfg.eval.gaze_dir {
                Some(dir) => io::read_gaze_dir(dir, data.len())?,
                None => mask_gaze(&data, model.config().patch),
            };
            let beta = cfg.train.beta;
            let mut mixers = vec![
                MixSettings::new(MixerKind::RandomCutMix, 0.0, beta)?,
                MixSettings::new(MixerKind::TdAttenMix, 0.0, beta)?,
            ];
            let sigma = if cfg.train.sigma == 0.0 { 1.0 } else { cfg.train.sigma };
            mixers.push(MixSettings::new(MixerKind::TdAttenMix, sigma, beta)?);
            for m in &mut mixers {
                m.reduction = cfg.train.reduction;
            }
            let pairs = sample_pairs(&data, cfg.eval.study_pairs, cfg.train.seed)?;
            let rows = inconsistency_study(&model, &data, &pairs, &mixers, &gaze, cfg.train.seed)?;
            write(&c.out, "inconsistency.csv", inconsistency_csv(&rows).as_bytes())?;
        }
        Command::AblateSigma { common: c, values } => {
            let cfg = load_config(&c, false)?;
            let sigmas = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| usage(Error::Config(format!("--values must be numbers, got '{}'", values))))?;
            let data = load_data(&cfg)?;
            write(&c.out, "config.txt", cfg.format().as_bytes())?;
            let rows = ablate_sigma(&cfg.train, &data, &sigmas)?;
            write(&c.out, "ablate_sigma.csv", ablation_csv("sigma", &rows).as_bytes())?;
        }
        Command::AblateBeta { common: c, values } => {
            let cfg = load_config(&c, false)?;
            let betas = values
                .split(',')
                .map(|v| {
                    let b: BetaChoice = v.trim().parse()?;
                    b.validate().map(|_| b)
                })
                .collect::<tdmix::Result<Vec<_>>>()
                .map_err(usage)?;
            let data = load_data(&cfg)?;
            write(&c.out, "config.txt", cfg.format().as_bytes())?;
            let rows = ablate_beta(&cfg.train, &data, &betas)?;
            write(&c.out, "ablate_beta.csv", ablation_csv("beta", &rows).as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
