//! Training loop: mix, then optimize the mode's total loss with momentum SGD.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::autodiff::{Graph, Tape};
use crate::error::{Error, Result};
use crate::grid::AttentionGrid;
use crate::harness::dataset::SyntheticDataset;
use crate::harness::eval::accuracy;
use crate::harness::mixing::{mix_pair, pair_batch, stream_rng, BetaChoice, MixSettings, MixerKind, PairSide};
use crate::label_mix::ProbVector;
use crate::losses::{combine, loss_cls, loss_con, total_loss, LossBundle, LossComponents, LossMode};
use crate::region_mix::MixPlan;
use crate::td_attention::{BalanceFactor, GridReduction};
use crate::tensor::{softmax_rows, Tensor};
use crate::vit::{VitConfig, VitModel};

const SHUFFLE_STREAM: u64 = 1;
const PAIR_STREAM: u64 = 2;
const MIX_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub vit: VitConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Rescales the batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    pub mixer: MixerKind,
    pub sigma: f64,
    pub beta: BetaChoice,
    pub reduction: GridReduction,
    pub loss_mode: LossMode,
    pub seed: u64,
    /// Mixed-sample invariants are checked every this many steps (0 disables).
    pub check_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            vit: VitConfig::default(),
            epochs: 15,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            clip_norm: Some(1.0),
            mixer: MixerKind::TdAttenMix,
            sigma: 1.0,
            beta: BetaChoice::default(),
            reduction: GridReduction::default(),
            loss_mode: LossMode::VitStyle,
            seed: 0,
            check_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.vit.validate()?;
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be at least 2"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config(format!("clip_norm {} must be positive", c)));
            }
        }
        BalanceFactor::new(self.sigma)?;
        self.beta.validate()?;
        Ok(())
    }

    pub fn mix_settings(&self) -> Result<MixSettings> {
        Ok(MixSettings {
            kind: self.mixer,
            sigma: BalanceFactor::new(self.sigma)?,
            beta: self.beta,
            reduction: self.reduction,
        })
    }

    /// Model config with the run seed applied.
    pub fn model_config(&self) -> VitConfig {
        VitConfig {
            seed: self.seed,
            ..self.vit.clone()
        }
    }
}

/// One row of the metrics log (epoch means of the loss terms).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub step: usize,
    pub cls: f64,
    pub con: f64,
    pub fine: f64,
    pub total: f64,
    pub val_top1: f64,
}

pub const METRICS_HEADER: &str = "epoch,step,L_cls,L_con,L_fine,L_total,val_top1";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            r.epoch, r.step, r.cls, r.con, r.fine, r.total, r.val_top1
        ));
    }
    out
}

/// What happened in one optimizer step.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub epoch: usize,
    pub step: usize,
    pub pairs: Vec<(usize, usize)>,
    pub plans: Vec<Option<MixPlan>>,
    pub losses: Vec<LossBundle>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: VitModel,
    pub log: Vec<MetricsRow>,
}

pub fn train(cfg: &TrainConfig, data: &SyntheticDataset) -> Result<TrainOutcome> {
    train_observed(cfg, data, |_| {})
}

struct Prepared {
    probs: Vec<f64>,
    guide: Option<AttentionGrid>,
}

struct SampleResult {
    grad: Vec<f64>,
    bundle: LossBundle,
    plan: Option<MixPlan>,
}

/// [`train`] with a callback after every optimizer step.
pub fn train_observed(
    cfg: &TrainConfig,
    data: &SyntheticDataset,
    mut observe: impl FnMut(&StepReport),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mc = cfg.model_config();
    if (data.height, data.width, data.channels) != (mc.image_height, mc.image_width, mc.channels) {
        return Err(Error::config("dataset image size does not match the model"));
    }
    if data.classes != mc.classes {
        return Err(Error::config("dataset class count does not match the model"));
    }
    if data.n_train < 2 {
        return Err(Error::config("need at least two training samples"));
    }
    let settings = cfg.mix_settings()?;
    let mut model = VitModel::new(mc)?;
    let mut theta = model.flat_params().into_data();
    let mut velocity = vec![0.0; theta.len()];
    let labels: Vec<ProbVector> = (0..data.n_train).map(|i| data.one_hot(i)).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.n_train).collect();
        order.shuffle(&mut stream_rng(cfg.seed, SHUFFLE_STREAM, epoch as u64));
        let mut sums = [0.0f64; 4];
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let positions: Vec<usize> = (0..batch.len()).collect();
            let pos_pairs = pair_batch(&mut stream_rng(cfg.seed, PAIR_STREAM, step as u64), &positions)?;

            let prepared: Vec<Prepared> = if settings.kind == MixerKind::None {
                Vec::new()
            } else {
                batch
                    .par_iter()
                    .map(|&idx| {
                        let s = &data.samples[idx];
                        let out = model.forward(&s.image)?;
                        let guide = settings.guide(&model, &out, s.label)?;
                        let probs = softmax_rows(&out.logits)?.into_data();
                        Ok(Prepared { probs, guide })
                    })
                    .collect::<Result<_>>()?
            };

            let results: Vec<SampleResult> = pos_pairs
                .par_iter()
                .map(|&(pa, pb)| {
                    let (ia, ib) = (batch[pa], batch[pb]);
                    let mut rng = stream_rng(cfg.seed, MIX_STREAM, ((step as u64) << 20) | pa as u64);
                    sample_step(
                        &model,
                        cfg,
                        &settings,
                        data,
                        &labels,
                        (ia, ib),
                        prepared.get(pa),
                        prepared.get(pb),
                        &mut rng,
                    )
                })
                .collect::<Result<_>>()?;

            let n = results.len() as f64;
            let mut grad = vec![0.0; theta.len()];
            for r in &results {
                if !r.bundle.total.is_finite() || r.grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Divergence {
                        epoch,
                        step,
                        msg: format!("non-finite loss or gradient (L_total = {})", r.bundle.total),
                    });
                }
                for (g, v) in grad.iter_mut().zip(&r.grad) {
                    *g += v;
                }
                sums[0] += r.bundle.cls;
                sums[1] += r.bundle.con;
                sums[2] += r.bundle.fine.unwrap_or(0.0);
                sums[3] += r.bundle.total;
            }
            seen += results.len();
            if cfg.check_every > 0 && step % cfg.check_every == 0 {
                check_invariants(&results, &mc_grid(&model))?;
            }
            grad.iter_mut().for_each(|g| *g /= n);
            if let Some(max_norm) = cfg.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max_norm {
                    let s = max_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *t -= cfg.lr * *v;
            }
            model = model.with_flat_params(&Tensor::new(vec![theta.len()], theta.clone())?)?;
            observe(&StepReport {
                epoch,
                step,
                pairs: pos_pairs.iter().map(|&(a, b)| (batch[a], batch[b])).collect(),
                plans: results.iter().map(|r| r.plan).collect(),
                losses: results.iter().map(|r| r.bundle).collect(),
            });
            step += 1;
        }
        let val_top1 = if data.val().is_empty() {
            f64::NAN
        } else {
            accuracy(&model, data.val())?
        };
        let k = seen.max(1) as f64;
        let row = MetricsRow {
            epoch,
            step,
            cls: sums[0] / k,
            con: sums[1] / k,
            fine: sums[2] / k,
            total: sums[3] / k,
            val_top1,
        };
        log::info!(
            "epoch {} step {} L_total {:.4} val_top1 {:.4}",
            epoch,
            step,
            row.total,
            row.val_top1
        );
        log.push(row);
    }
    Ok(TrainOutcome { model, log })
}

fn mc_grid(model: &VitModel) -> (usize, usize) {
    (model.config().grid_rows(), model.config().grid_cols())
}

fn check_invariants(results: &[SampleResult], (rows, cols): &(usize, usize)) -> Result<()> {
    for r in results {
        if let Some(plan) = &r.plan {
            plan.validate(*rows, *cols)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sample_step(
    model: &VitModel,
    cfg: &TrainConfig,
    settings: &MixSettings,
    data: &SyntheticDataset,
    labels: &[ProbVector],
    (ia, ib): (usize, usize),
    prep_a: Option<&Prepared>,
    prep_b: Option<&Prepared>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<SampleResult> {
    let sa = &data.samples[ia];
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);

    if settings.kind == MixerKind::None {
        let out = model.forward_on(&mut tape, &bound, &sa.image)?;
        let cls = loss_cls(&mut tape, &out.logits, &labels[ia])?;
        let value = tape.value(cls).item()?;
        let grads = tape.backward(cls)?;
        let grad = VitModel::flatten_grads(&VitModel::collect_grads(&bound, &grads)).into_data();
        return Ok(SampleResult {
            grad,
            bundle: LossBundle {
                mode: cfg.loss_mode,
                cls: value,
                con: 0.0,
                fine: None,
                total: value,
            },
            plan: None,
        });
    }

    let (pa, pb) = match (prep_a, prep_b) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::contract("missing detached predictions")),
    };
    let sb = &data.samples[ib];
    let mixed = mix_pair(
        settings,
        rng,
        None,
        model.config().patch,
        PairSide {
            image: &sa.image,
            label: &labels[ia],
            guide: pa.guide.as_ref(),
        },
        PairSide {
            image: &sb.image,
            label: &labels[ib],
            guide: pb.guide.as_ref(),
        },
        ia == ib,
    )?;
    let lambda = mixed.plan.map(|p| p.lambda).unwrap_or(1.0);

    let out_m = model.forward_on(&mut tape, &bound, &mixed.image)?;
    let cls = loss_cls(&mut tape, &out_m.logits, &mixed.label)?;
    let con = loss_con(&mut tape, &out_m.logits, &pa.probs, &pb.probs, lambda)?;
    // Over a batch, B runs through a permutation of A, so the mean of
    // ½(CE_A + CE_B) equals the mean of CE_A; each sample carries its CE_A.
    let fine = match cfg.loss_mode {
        LossMode::VitStyle => {
            let out_a = model.forward_on(&mut tape, &bound, &sa.image)?;
            Some(tape.cross_entropy(&out_a.logits, labels[ia].as_slice())?)
        }
        LossMode::ResnetStyle => None,
    };
    let total = combine(&mut tape, cfg.loss_mode, &cls, &con, fine.as_ref())?;
    let bundle = total_loss(
        cfg.loss_mode,
        LossComponents {
            cls: Some(tape.value(cls).item()?),
            con: Some(tape.value(con).item()?),
            fine: fine.map(|f| tape.value(f).item()).transpose()?,
        },
    )?;
    let grads = tape.backward(total)?;
    let grad = VitModel::flatten_grads(&VitModel::collect_grads(&bound, &grads)).into_data();
    Ok(SampleResult {
        grad,
        bundle: LossBundle {
            total: tape.value(total).item()?,
            ..bundle
        },
        plan: mixed.plan,
    })
}
