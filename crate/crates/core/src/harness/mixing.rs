//! Mixer strategies and per-pair mixing.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::AttentionGrid;
use crate::image::Image;
use crate::label_mix::{area_ratio, attention_ratio, mix_labels, mix_ratio, ProbVector};
use crate::region_mix::{paste, sample_window, select_max_center, select_min_center, window_for_delta, Center, MixPlan, PatchMask};
use crate::td_attention::{attention_from_output, bottom_up_grid, BalanceFactor, GridReduction, TdAttentionConfig};
use crate::tensor::Tensor;
use crate::vit::{ForwardOutput, VitModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum MixerKind {
    /// Plain supervised training, no mixing.
    None,
    /// Uniformly placed box at the same location in both images, `λ = λ_r`.
    RandomCutMix,
    /// Max-min mixing guided by plain self-attention.
    BottomUp,
    /// Max-min mixing guided by label-conditioned attention.
    #[default]
    TdAttenMix,
}

impl MixerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::RandomCutMix => "random-cutmix",
            Self::BottomUp => "bottom-up",
            Self::TdAttenMix => "tdattenmix",
        }
    }

    pub fn is_guided(self) -> bool {
        matches!(self, Self::BottomUp | Self::TdAttenMix)
    }
}

impl std::fmt::Display for MixerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MixerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "random-cutmix" | "cutmix" => Ok(Self::RandomCutMix),
            "bottom-up" => Ok(Self::BottomUp),
            "tdattenmix" => Ok(Self::TdAttenMix),
            other => Err(Error::config(format!("unknown mixer '{}'", other))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaChoice {
    Fixed(f64),
    /// `β ~ Uniform(0, 1)` per pair.
    Random,
}

impl Default for BetaChoice {
    fn default() -> Self {
        Self::Fixed(0.5)
    }
}

impl BetaChoice {
    pub fn validate(self) -> Result<()> {
        match self {
            Self::Fixed(b) if !(0.0..=1.0).contains(&b) => {
                Err(Error::config(format!("beta {} outside [0, 1]", b)))
            }
            _ => Ok(()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Self::Fixed(b) => b,
            Self::Random => rng.gen_range(0.0..=1.0),
        }
    }
}

impl std::fmt::Display for BetaChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Fixed(b) => write!(f, "{}", b),
            Self::Random => f.write_str("random"),
        }
    }
}

impl std::str::FromStr for BetaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            return Ok(Self::Random);
        }
        let b: f64 = s
            .parse()
            .map_err(|_| Error::config(format!("beta '{}' is neither a number nor 'random'", s)))?;
        let choice = Self::Fixed(b);
        choice.validate()?;
        Ok(choice)
    }
}

/// Everything that decides how a pair is mixed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MixSettings {
    pub kind: MixerKind,
    pub sigma: BalanceFactor,
    pub beta: BetaChoice,
    pub reduction: GridReduction,
}

impl MixSettings {
    pub fn new(kind: MixerKind, sigma: f64, beta: BetaChoice) -> Result<Self> {
        beta.validate()?;
        Ok(Self {
            kind,
            sigma: BalanceFactor::new(sigma)?,
            beta,
            reduction: GridReduction::default(),
        })
    }

    pub fn label(&self) -> String {
        match self.kind {
            MixerKind::TdAttenMix => format!("tdattenmix(sigma={})", self.sigma.value()),
            k => k.name().to_string(),
        }
    }

    /// Guide grid for one image from an existing forward pass, if this mixer uses one.
    pub fn guide(
        &self,
        model: &VitModel,
        out: &ForwardOutput<Tensor>,
        label: usize,
    ) -> Result<Option<AttentionGrid>> {
        let mc = model.config();
        match self.kind {
            MixerKind::TdAttenMix => {
                let cfg = TdAttentionConfig {
                    sigma: self.sigma,
                    reduction: self.reduction,
                };
                attention_from_output(model, out, label, &cfg).map(Some)
            }
            MixerKind::BottomUp => bottom_up_grid(
                &out.blocks[mc.mixing_block()],
                mc.heads,
                mc.grid_rows(),
                mc.grid_cols(),
                self.reduction,
            )
            .map(Some),
            _ => Ok(None),
        }
    }
}

/// Source window at the maximum of `α_A`, target window at the minimum of `α_B`.
pub fn max_min_plan(
    alpha_a: &AttentionGrid,
    alpha_b: &AttentionGrid,
    delta: f64,
    height: usize,
    width: usize,
    patch: usize,
    beta: f64,
) -> Result<MixPlan> {
    let (h, w) = window_for_delta(delta, height, width, patch);
    let source = select_max_center(alpha_a, h, w)?;
    let target = select_min_center(alpha_b, h, w)?;
    let lambda_r = area_ratio(h, w, patch, height, width)?;
    let mut plan = MixPlan {
        delta,
        h,
        w,
        source,
        target,
        lambda_r,
        lambda_a: lambda_r,
        lambda: lambda_r,
    };
    plan.lambda_a = match attention_ratio(alpha_a, alpha_b, &plan) {
        Ok(v) => v,
        Err(Error::Degenerate(_)) => lambda_r,
        Err(e) => return Err(e),
    };
    plan.lambda = mix_ratio(lambda_r, plan.lambda_a, beta)?.lambda;
    Ok(plan)
}

/// Uniform box center shared by both images; all ratios equal `λ_r`.
pub fn random_plan<R: Rng + ?Sized>(
    rng: &mut R,
    delta: f64,
    height: usize,
    width: usize,
    patch: usize,
) -> Result<MixPlan> {
    let (h, w) = window_for_delta(delta, height, width, patch);
    let (rows, cols) = (height / patch, width / patch);
    let i = rng.gen_range(h / 2..=rows - (h - h / 2));
    let j = rng.gen_range(w / 2..=cols - (w - w / 2));
    let c = Center::new(i, j);
    let lambda_r = area_ratio(h, w, patch, height, width)?;
    Ok(MixPlan {
        delta,
        h,
        w,
        source: c,
        target: c,
        lambda_r,
        lambda_a: lambda_r,
        lambda: lambda_r,
    })
}

/// Result of mixing one pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedSample {
    pub image: Image,
    pub label: ProbVector,
    /// `None` for identity mixes.
    pub plan: Option<MixPlan>,
    pub mask: Option<PatchMask>,
}

/// One side of a pair.
#[derive(Clone, Copy)]
pub struct PairSide<'a> {
    pub image: &'a Image,
    pub label: &'a ProbVector,
    pub guide: Option<&'a AttentionGrid>,
}

/// Draws `δ` (unless `delta` is given) and `β` from `rng`, then mixes `A` into `B`.
///
/// `same` marks a fixed point of the pairing, which mixes to `A` unchanged.
pub fn mix_pair<R: Rng + ?Sized>(
    settings: &MixSettings,
    rng: &mut R,
    delta: Option<f64>,
    patch: usize,
    a: PairSide<'_>,
    b: PairSide<'_>,
    same: bool,
) -> Result<MixedSample> {
    if settings.kind == MixerKind::None || same {
        return Ok(MixedSample {
            image: a.image.clone(),
            label: a.label.clone(),
            plan: None,
            mask: None,
        });
    }
    let (height, width, _) = a.image.dims();
    let delta = match delta {
        Some(d) => d,
        None => sample_window(rng, height, width, patch).0,
    };
    let plan = match settings.kind {
        MixerKind::RandomCutMix => random_plan(rng, delta, height, width, patch)?,
        _ => {
            let beta = settings.beta.draw(rng);
            let (ga, gb) = match (a.guide, b.guide) {
                (Some(ga), Some(gb)) => (ga, gb),
                _ => return Err(Error::contract("guided mixer needs attention grids for both images")),
            };
            max_min_plan(ga, gb, delta, height, width, patch, beta)?
        }
    };
    let (image, mask) = paste(a.image, b.image, &plan, patch)?;
    let label = mix_labels(a.label, b.label, plan.lambda)?;
    Ok(MixedSample {
        image,
        label,
        plan: Some(plan),
        mask: Some(mask),
    })
}

/// Pairs each element of `batch` with an element of a uniform random permutation of it.
pub fn pair_batch<R: Rng + ?Sized>(rng: &mut R, batch: &[usize]) -> Result<Vec<(usize, usize)>> {
    if batch.len() < 2 {
        return Err(Error::contract("pairing needs a batch of at least two"));
    }
    let mut perm = batch.to_vec();
    perm.shuffle(rng);
    Ok(batch.iter().copied().zip(perm).collect())
}

/// Independent generator for `(seed, purpose, index)`.
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn peaked(rows: usize, cols: usize, at: (usize, usize)) -> AttentionGrid {
        let mut g = Grid::filled(rows, cols, 0.01);
        g.set(at.0, at.1, 1.0);
        AttentionGrid::normalize(g).unwrap()
    }

    #[test]
    fn pairing_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch: Vec<usize> = (10..42).collect();
        let pairs = pair_batch(&mut rng, &batch).unwrap();
        let mut b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        b.sort();
        assert_eq!(b, batch);
        assert!(pairs.iter().zip(&batch).all(|(p, a)| p.0 == *a));

        let mut again = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(pair_batch(&mut again, &batch).unwrap(), pairs);

        let two = pair_batch(&mut rng, &[3, 4]).unwrap();
        assert!(two == vec![(3, 3), (4, 4)] || two == vec![(3, 4), (4, 3)]);
        assert!(pair_batch(&mut rng, &[3]).is_err());
    }

    #[test]
    fn max_min_plan_follows_peaks() {
        let ga = peaked(8, 8, (1, 6));
        let gb = peaked(8, 8, (2, 2));
        let plan = max_min_plan(&ga, &gb, 0.25, 32, 32, 4, 0.5).unwrap();
        assert_eq!((plan.h, plan.w), (2, 2));
        assert!(crate::region_mix::window_fits(plan.source, 2, 2, 8, 8));
        let (top, left) = plan.source.top_left(2, 2);
        assert!((top..top + 2).contains(&1) && (left..left + 2).contains(&6));
        let (tt, tl) = plan.target.top_left(2, 2);
        assert!(!((tt..tt + 2).contains(&2) && (tl..tl + 2).contains(&2)));
        assert!(plan.lambda_a > plan.lambda_r);
        assert!((plan.lambda - 0.5 * (plan.lambda_r + plan.lambda_a)).abs() < 1e-15);
        plan.validate(8, 8).unwrap();
    }

    #[test]
    fn random_plan_shares_center_and_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let delta = rng.gen_range(0.25..0.75);
            let plan = random_plan(&mut rng, delta, 32, 32, 4).unwrap();
            assert_eq!(plan.source, plan.target);
            assert_eq!(plan.lambda, plan.lambda_r);
            plan.validate(8, 8).unwrap();
        }
    }

    #[test]
    fn identity_and_none_mixes_return_a() {
        let xa = Image::filled(8, 8, 1, 0.7);
        let xb = Image::filled(8, 8, 1, 0.1);
        let ya = ProbVector::one_hot(0, 2).unwrap();
        let yb = ProbVector::one_hot(1, 2).unwrap();
        let g = AttentionGrid::uniform(4, 4);
        let side = |image, label| PairSide {
            image,
            label,
            guide: Some(&g),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let td = MixSettings::default();
        let m = mix_pair(&td, &mut rng, None, 2, side(&xa, &ya), side(&xa, &ya), true).unwrap();
        assert_eq!(m.image, xa);
        assert!(m.plan.is_none());
        let none = MixSettings {
            kind: MixerKind::None,
            ..td
        };
        let m = mix_pair(&none, &mut rng, None, 2, side(&xa, &ya), side(&xb, &yb), false).unwrap();
        assert_eq!(m.image, xa);
        assert_eq!(m.label, ya);

        let m = mix_pair(&td, &mut rng, Some(0.5), 2, side(&xa, &ya), side(&xb, &yb), false).unwrap();
        let plan = m.plan.unwrap();
        assert_eq!((plan.h, plan.w), (2, 2));
        assert!((m.label.as_slice()[0] - plan.lambda).abs() < 1e-15);
        // uniform guides give λ_a = λ_r
        assert!((plan.lambda - 0.25).abs() < 1e-12);

        let unguided = PairSide {
            image: &xb,
            label: &yb,
            guide: None,
        };
        assert!(mix_pair(&td, &mut rng, None, 2, side(&xa, &ya), unguided, false).is_err());
    }

    #[test]
    fn parse_names() {
        for k in [MixerKind::None, MixerKind::RandomCutMix, MixerKind::BottomUp, MixerKind::TdAttenMix] {
            assert_eq!(k.name().parse::<MixerKind>().unwrap(), k);
        }
        assert!("mixup".parse::<MixerKind>().is_err());
        assert_eq!("random".parse::<BetaChoice>().unwrap(), BetaChoice::Random);
        assert_eq!("0.3".parse::<BetaChoice>().unwrap(), BetaChoice::Fixed(0.3));
        assert!("1.5".parse::<BetaChoice>().is_err());
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a: u64 = stream_rng(5, 1, 0).gen();
        let b: u64 = stream_rng(5, 1, 1).gen();
        let c: u64 = stream_rng(5, 2, 0).gen();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, stream_rng(5, 1, 0).gen::<u64>());
    }
}
