//! Image-label inconsistency study and hyperparameter sweeps.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::AttentionGrid;
use crate::harness::dataset::{gaze_from_mask, SyntheticDataset};
use crate::harness::mixing::{max_min_plan, random_plan, stream_rng, BetaChoice, MixSettings, MixerKind};
use crate::harness::train::{train, TrainConfig};
use crate::label_mix::{attention_ratio, mix_ratio};
use crate::region_mix::{sample_window, MixPlan};
use crate::vit::VitModel;

const PAIR_SAMPLE_STREAM: u64 = 21;
const STUDY_STREAM: u64 = 22;

/// `count` seeded pairs of distinct samples with distinct labels.
pub fn sample_pairs(data: &SyntheticDataset, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let n = data.len();
    let labels: Vec<usize> = data.samples.iter().map(|s| s.label).collect();
    if labels.iter().all(|l| *l == labels[0]) {
        return Err(Error::config("pairs with distinct labels need at least two classes present"));
    }
    let mut rng = stream_rng(seed, PAIR_SAMPLE_STREAM, 0);
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if labels[a] != labels[b] {
            pairs.push((a, b));
        }
    }
    Ok(pairs)
}

/// Mask-derived gaze grids for every sample.
pub fn mask_gaze(data: &SyntheticDataset, patch: usize) -> Vec<Option<AttentionGrid>> {
    data.samples
        .iter()
        .map(|s| gaze_from_mask(&s.mask, data.height, data.width, patch).ok())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct InconsistencyRow {
    pub mixer: String,
    /// Mean `|λ_gt − λ|` over evaluated pairs.
    pub mean: f64,
    pub pairs: usize,
    /// Pairs dropped for a missing gaze grid.
    pub skipped: usize,
}

/// `λ` a mixer assigns to a pair and its plan.
fn mixer_lambda<R: Rng + ?Sized>(
    settings: &MixSettings,
    model: &VitModel,
    data: &SyntheticDataset,
    (ia, ib): (usize, usize),
    delta: f64,
    beta: f64,
    rng: &mut R,
) -> Result<MixPlan> {
    let mc = model.config();
    let (h, w, p) = (data.height, data.width, mc.patch);
    match settings.kind {
        MixerKind::RandomCutMix => random_plan(rng, delta, h, w, p),
        MixerKind::BottomUp | MixerKind::TdAttenMix => {
            let (sa, sb) = (&data.samples[ia], &data.samples[ib]);
            let ga = settings.guide(model, &model.forward(&sa.image)?, sa.label)?;
            let gb = settings.guide(model, &model.forward(&sb.image)?, sb.label)?;
            let (ga, gb) = (ga.expect("guided"), gb.expect("guided"));
            max_min_plan(&ga, &gb, delta, h, w, p, beta)
        }
        MixerKind::None => Err(Error::config("the none mixer does not mix pairs")),
    }
}

/// `λ_gt`: the label-ratio formula at `plan` with gaze grids in place of attention.
pub fn gaze_lambda(gaze_a: &AttentionGrid, gaze_b: &AttentionGrid, plan: &MixPlan, beta: f64) -> Result<f64> {
    let lambda_a = match attention_ratio(gaze_a, gaze_b, plan) {
        Ok(v) => v,
        Err(Error::Degenerate(_)) => plan.lambda_r,
        Err(e) => return Err(e),
    };
    Ok(mix_ratio(plan.lambda_r, lambda_a, beta)?.lambda)
}

/// Mean inconsistency per mixer; every mixer sees the same `δ` and `β` per pair.
pub fn inconsistency_study(
    model: &VitModel,
    data: &SyntheticDataset,
    pairs: &[(usize, usize)],
    mixers: &[MixSettings],
    gaze: &[Option<AttentionGrid>],
    seed: u64,
) -> Result<Vec<InconsistencyRow>> {
    if gaze.len() != data.len() {
        return Err(Error::shape("one gaze slot per sample required"));
    }
    let mc = model.config();
    let mut rows = Vec::with_capacity(mixers.len());
    for settings in mixers {
        let per_pair: Vec<Option<f64>> = pairs
            .par_iter()
            .enumerate()
            .map(|(k, &(ia, ib))| {
                let (Some(ga), Some(gb)) = (&gaze[ia], &gaze[ib]) else {
                    return Ok(None);
                };
                let mut rng = stream_rng(seed, STUDY_STREAM, k as u64);
                let (delta, _, _) = sample_window(&mut rng, data.height, data.width, mc.patch);
                let beta = settings.beta.draw(&mut rng);
                let plan = mixer_lambda(settings, model, data, (ia, ib), delta, beta, &mut rng)?;
                let lambda_gt = gaze_lambda(ga, gb, &plan, beta)?;
                Ok(Some((lambda_gt - plan.lambda).abs()))
            })
            .collect::<Result<_>>()?;
        let vals: Vec<f64> = per_pair.iter().flatten().copied().collect();
        let skipped = per_pair.len() - vals.len();
        if skipped > 0 {
            log::warn!("{}: skipped {} pairs without gaze grids", settings.label(), skipped);
        }
        let mean = if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        rows.push(InconsistencyRow {
            mixer: settings.label(),
            mean,
            pairs: vals.len(),
            skipped,
        });
    }
    Ok(rows)
}

pub fn inconsistency_csv(rows: &[InconsistencyRow]) -> String {
    let mut out = String::from("mixer,inconsistency,pairs,skipped\n");
    for r in rows {
        out.push_str(&format!("{},{:.17e},{},{}\n", r.mixer, r.mean, r.pairs, r.skipped));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub value: String,
    pub val_top1: f64,
}

/// Trains one tdattenmix model per `σ` and reports final validation top-1.
pub fn ablate_sigma(base: &TrainConfig, data: &SyntheticDataset, sigmas: &[f64]) -> Result<Vec<AblationRow>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let cfg = TrainConfig {
                mixer: MixerKind::TdAttenMix,
                sigma,
                ..base.clone()
            };
            final_row(format!("{}", sigma), &cfg, data)
        })
        .collect()
}

/// Trains one tdattenmix model per `β` choice.
pub fn ablate_beta(base: &TrainConfig, data: &SyntheticDataset, betas: &[BetaChoice]) -> Result<Vec<AblationRow>> {
    betas
        .iter()
        .map(|&beta| {
            let cfg = TrainConfig {
                mixer: MixerKind::TdAttenMix,
                beta,
                ..base.clone()
            };
            final_row(beta.to_string(), &cfg, data)
        })
        .collect()
}

fn final_row(value: String, cfg: &TrainConfig, data: &SyntheticDataset) -> Result<AblationRow> {
    let out = train(cfg, data)?;
    let val_top1 = out.log.last().map(|r| r.val_top1).unwrap_or(f64::NAN);
    Ok(AblationRow { value, val_top1 })
}

pub fn ablation_csv(name: &str, rows: &[AblationRow]) -> String {
    let mut out = format!("{},val_top1\n", name);
    for r in rows {
        out.push_str(&format!("{},{:.17e}\n", r.value, r.val_top1));
    }
    out
}
