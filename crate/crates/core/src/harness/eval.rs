//! Evaluation protocols: plain accuracy, mixed-pair accuracy and patch dropping.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::dataset::{Sample, SyntheticDataset};
use crate::harness::mixing::{mix_pair, stream_rng, MixSettings, PairSide};
use crate::image::Image;
use crate::td_attention::{bottom_up_grid, GridReduction};
use crate::tensor::argmax;
use crate::vit::VitModel;

/// `δ` used for every evaluation mix.
pub const EVAL_DELTA: f64 = 0.5;

const EVAL_MIX_STREAM: u64 = 11;
const OCCLUSION_STREAM: u64 = 12;

/// Top-1 accuracy of `model` over `samples`.
pub fn accuracy(model: &VitModel, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::contract("accuracy over an empty set"));
    }
    let hits: Vec<bool> = samples
        .par_iter()
        .map(|s| Ok(argmax(&model.logits(&s.image)?) == s.label))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / samples.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixedAccuracy {
    pub top1: f64,
    pub top2: f64,
    pub pairs: usize,
}

/// Indices of the two largest scores, the first-listed winning ties.
pub fn top2(scores: &[f64]) -> (usize, usize) {
    let first = argmax(scores);
    let mut second = usize::MAX;
    for (i, v) in scores.iter().enumerate() {
        if i != first && (second == usize::MAX || *v > scores[second]) {
            second = i;
        }
    }
    (first, second)
}

/// Mixes every pair of sample indices and scores `model`'s prediction on the result.
pub fn eval_mixed_accuracy(
    model: &VitModel,
    data: &SyntheticDataset,
    pairs: &[(usize, usize)],
    settings: &MixSettings,
    seed: u64,
) -> Result<MixedAccuracy> {
    mixed_accuracy_with(data, pairs, settings, Some(model), seed, |img| model.logits(img))
}

/// Like [`eval_mixed_accuracy`] with an arbitrary predictor; `guide_model`
/// supplies attention grids for guided mixers.
pub fn mixed_accuracy_with<F>(
    data: &SyntheticDataset,
    pairs: &[(usize, usize)],
    settings: &MixSettings,
    guide_model: Option<&VitModel>,
    seed: u64,
    predict: F,
) -> Result<MixedAccuracy>
where
    F: Fn(&Image) -> Result<Vec<f64>> + Sync,
{
    if pairs.is_empty() {
        return Err(Error::contract("no pairs to evaluate"));
    }
    let patch = match guide_model {
        Some(m) => m.config().patch,
        None => infer_patch(data)?,
    };
    let hits: Vec<(bool, bool)> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(ia, ib))| {
            let (sa, sb) = (&data.samples[ia], &data.samples[ib]);
            let (ya, yb) = (data.one_hot(ia), data.one_hot(ib));
            let (ga, gb) = match (settings.kind.is_guided(), guide_model) {
                (true, Some(m)) => {
                    let oa = m.forward(&sa.image)?;
                    let ob = m.forward(&sb.image)?;
                    (settings.guide(m, &oa, sa.label)?, settings.guide(m, &ob, sb.label)?)
                }
                (true, None) => return Err(Error::contract("guided mixer needs a model")),
                _ => (None, None),
            };
            let mut rng = stream_rng(seed, EVAL_MIX_STREAM, k as u64);
            let mixed = mix_pair(
                settings,
                &mut rng,
                Some(EVAL_DELTA),
                patch,
                PairSide {
                    image: &sa.image,
                    label: &ya,
                    guide: ga.as_ref(),
                },
                PairSide {
                    image: &sb.image,
                    label: &yb,
                    guide: gb.as_ref(),
                },
                ia == ib,
            )?;
            let scores = predict(&mixed.image)?;
            let (p1, p2) = top2(&scores);
            let hit1 = p1 == sa.label || p1 == sb.label;
            let hit2 = sa.label != sb.label
                && ((p1 == sa.label && p2 == sb.label) || (p1 == sb.label && p2 == sa.label));
            Ok((hit1, hit2))
        })
        .collect::<Result<_>>()?;
    let n = hits.len() as f64;
    Ok(MixedAccuracy {
        top1: hits.iter().filter(|h| h.0).count() as f64 / n,
        top2: hits.iter().filter(|h| h.1).count() as f64 / n,
        pairs: hits.len(),
    })
}

fn infer_patch(data: &SyntheticDataset) -> Result<usize> {
    // largest patch up to 4 that tiles the image
    (1..=4)
        .rev()
        .find(|p| data.height % p == 0 && data.width % p == 0)
        .ok_or_else(|| Error::config("no patch size tiles the images"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropMode {
    Random,
    /// Highest bottom-up attention first.
    Salient,
    /// Lowest bottom-up attention first.
    NonSalient,
}

impl std::str::FromStr for DropMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "salient" => Ok(Self::Salient),
            "non-salient" => Ok(Self::NonSalient),
            other => Err(Error::config(format!("unknown drop mode '{}'", other))),
        }
    }
}

impl std::fmt::Display for DropMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Salient => "salient",
            Self::NonSalient => "non-salient",
        })
    }
}

/// Patch indices in drop order for one image.
fn drop_order(model: &VitModel, image: &Image, mode: DropMode, seed: u64, index: usize) -> Result<Vec<usize>> {
    let n = model.config().num_tokens();
    let mut order: Vec<usize> = (0..n).collect();
    match mode {
        DropMode::Random => order.shuffle(&mut stream_rng(seed, OCCLUSION_STREAM, index as u64)),
        DropMode::Salient | DropMode::NonSalient => {
            let mc = model.config();
            let out = model.forward(image)?;
            let grid = bottom_up_grid(
                &out.blocks[mc.mixing_block()],
                mc.heads,
                mc.grid_rows(),
                mc.grid_cols(),
                GridReduction::default(),
            )?;
            let v = grid.values();
            // stable sort keeps row-major order among ties
            if mode == DropMode::Salient {
                order.sort_by(|a, b| v[*b].partial_cmp(&v[*a]).expect("finite grid"));
            } else {
                order.sort_by(|a, b| v[*a].partial_cmp(&v[*b]).expect("finite grid"));
            }
        }
    }
    Ok(order)
}

/// Zeroes the first `k` patches of `order`.
pub fn drop_patches(image: &Image, patch: usize, order: &[usize], k: usize) -> Image {
    let cols = image.width() / patch;
    let mut out = image.clone();
    for &p in &order[..k.min(order.len())] {
        let (i, j) = (p / cols, p % cols);
        out.fill_block(i * patch, j * patch, patch, 0.0);
    }
    out
}

/// Accuracy per drop ratio, with `round(ratio · N)` patches zeroed per image.
///
/// The random mode averages `repeats` independent drop orders per image; the
/// saliency orders are deterministic and ignore it.
pub fn eval_occlusion(
    model: &VitModel,
    samples: &[Sample],
    ratios: &[f64],
    mode: DropMode,
    seed: u64,
    repeats: usize,
) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::contract("occlusion over an empty set"));
    }
    if repeats == 0 {
        return Err(Error::config("occlusion repeats must be at least 1"));
    }
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::config(format!("drop ratio {} outside [0, 1]", r)));
    }
    let draws = if mode == DropMode::Random { repeats } else { 1 };
    let n = model.config().num_tokens();
    let patch = model.config().patch;
    let per_draw: Vec<Vec<bool>> = (0..samples.len() * draws)
        .into_par_iter()
        .map(|d| {
            let s = &samples[d / draws];
            // draw 0 of image i uses stream index i, so repeats = 1 matches a single pass
            let index = (d % draws) * samples.len() + d / draws;
            let order = drop_order(model, &s.image, mode, seed, index)?;
            ratios
                .iter()
                .map(|r| {
                    let k = (r * n as f64).round() as usize;
                    let img = if k == 0 {
                        s.image.clone()
                    } else {
                        drop_patches(&s.image, patch, &order, k)
                    };
                    Ok(argmax(&model.logits(&img)?) == s.label)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(ratios
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let hits = per_draw.iter().filter(|h| h[k]).count();
            (*r, hits as f64 / per_draw.len() as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::generate_with_split;
    use crate::harness::mixing::MixerKind;
    use crate::vit::VitConfig;
    use rand::{Rng, SeedableRng};

    fn tiny_model() -> VitModel {
        VitModel::new(VitConfig {
            image_height: 16,
            image_width: 16,
            channels: 3,
            patch: 4,
            embed_dim: 8,
            heads: 2,
            blocks: 1,
            classes: 8,
            seed: 1,
            attention_block: None,
        })
        .unwrap()
    }

    #[test]
    fn top2_examples() {
        assert_eq!(top2(&[0.1, 0.5, 0.3]), (1, 2));
        assert_eq!(top2(&[1.0, 1.0, 1.0]), (0, 1));
        assert_eq!(top2(&[0.0, 2.0]), (1, 0));
    }

    #[test]
    fn identity_pairs_give_plain_accuracy() {
        let data = generate_with_split(1, 6, 8, 16, 16, 0.5).unwrap();
        let model = tiny_model();
        let pairs: Vec<(usize, usize)> = (0..data.len()).map(|i| (i, i)).collect();
        for kind in [MixerKind::RandomCutMix, MixerKind::TdAttenMix] {
            let settings = MixSettings { kind, ..MixSettings::default() };
            let m = eval_mixed_accuracy(&model, &data, &pairs, &settings, 0).unwrap();
            let plain = accuracy(&model, &data.samples).unwrap();
            assert_eq!(m.top1, plain);
            assert_eq!(m.top2, 0.0);
        }
    }

    #[test]
    fn random_guess_hits_two_of_eight() {
        // chance of a uniform top-1 landing in {y_A, y_B} for distinct labels is 2/8
        let data = generate_with_split(2, 10, 8, 16, 16, 0.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut pairs = Vec::new();
        while pairs.len() < 4000 {
            let (a, b) = (rng.gen_range(0..data.len()), rng.gen_range(0..data.len()));
            if data.samples[a].label != data.samples[b].label {
                pairs.push((a, b));
            }
        }
        let settings = MixSettings {
            kind: MixerKind::RandomCutMix,
            ..MixSettings::default()
        };
        let predict = |img: &Image| {
            // deterministic pseudo-random scores keyed on the image content
            let key = img.data().iter().fold(0u64, |h, v| h.rotate_left(5) ^ v.to_bits());
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(key);
            Ok((0..8).map(|_| r.gen::<f64>()).collect())
        };
        let m = mixed_accuracy_with(&data, &pairs, &settings, None, 3, predict).unwrap();
        let sd = (0.25f64 * 0.75 / 4000.0).sqrt();
        assert!((m.top1 - 0.25).abs() < 4.0 * sd, "top1 {}", m.top1);
        // top-2 equal to the pair: 2 / (8·7)
        assert!((m.top2 - 2.0 / 56.0).abs() < 0.015, "top2 {}", m.top2);
    }

    #[test]
    fn occlusion_endpoints() {
        let data = generate_with_split(3, 6, 8, 16, 16, 0.5).unwrap();
        let model = tiny_model();
        let base = accuracy(&model, data.val()).unwrap();
        for mode in [DropMode::Random, DropMode::Salient, DropMode::NonSalient] {
            let curve = eval_occlusion(&model, data.val(), &[0.0, 0.5, 1.0], mode, 0, 2).unwrap();
            assert_eq!(curve[0], (0.0, base));
            // everything dropped: one prediction for all images
            let zero = argmax(&model.logits(&Image::zeros(16, 16, 3)).unwrap());
            let share = data.val().iter().filter(|s| s.label == zero).count() as f64 / data.val().len() as f64;
            assert_eq!(curve[2].1, share);
        }
        assert!(eval_occlusion(&model, data.val(), &[1.5], DropMode::Random, 0, 1).is_err());
    }

    #[test]
    fn salient_order_is_sorted_by_bottom_up_attention() {
        let model = tiny_model();
        let data = generate_with_split(4, 2, 8, 16, 16, 0.0).unwrap();
        let img = &data.samples[0].image;
        let hi = drop_order(&model, img, DropMode::Salient, 0, 0).unwrap();
        let lo = drop_order(&model, img, DropMode::NonSalient, 0, 0).unwrap();
        let out = model.forward(img).unwrap();
        let g = bottom_up_grid(&out.blocks[0], 2, 4, 4, GridReduction::default()).unwrap();
        for w in hi.windows(2) {
            assert!(g.values()[w[0]] >= g.values()[w[1]]);
        }
        for w in lo.windows(2) {
            assert!(g.values()[w[0]] <= g.values()[w[1]]);
        }
        let dropped = drop_patches(img, 4, &hi, 1);
        let (i, j) = (hi[0] / 4, hi[0] % 4);
        assert_eq!(dropped.get(i * 4, j * 4, 0), 0.0);
    }
}
