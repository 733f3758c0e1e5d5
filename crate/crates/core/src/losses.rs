//! Training objectives for mixed samples.
//!
//! `L_cls = CE(Y_M, y_M)`, `L_con = L1(Y_M, λ Y_A + (1-λ) Y_B)` on softmax
//! distributions with `Y_A`, `Y_B` detached, and for transformer backbones
//! `L_fine = ½ (CE(Y_A, y_A) + CE(Y_B, y_B))`.

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::label_mix::ProbVector;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossMode {
    /// `L_cls + L_con`.
    ResnetStyle,
    /// `L_cls + L_fine + L_con`.
    #[default]
    VitStyle,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resnet" | "resnet-style" => Ok(Self::ResnetStyle),
            "vit" | "vit-style" => Ok(Self::VitStyle),
            other => Err(Error::config(format!("unknown loss mode '{}'", other))),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ResnetStyle => "resnet-style",
            Self::VitStyle => "vit-style",
        })
    }
}

pub fn loss_cls<G: Graph>(g: &mut G, logits_m: &G::Value, y_m: &ProbVector) -> Result<G::Value> {
    g.cross_entropy(logits_m, y_m.as_slice())
}

/// `λ Y_A + (1-λ) Y_B` as a `[1×n]` constant.
pub fn consistency_target(y_a: &[f64], y_b: &[f64], lambda: f64) -> Result<Tensor> {
    if y_a.len() != y_b.len() {
        return Err(Error::shape("prediction lengths differ"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::contract(format!("lambda {} outside [0, 1]", lambda)));
    }
    let blend = y_a
        .iter()
        .zip(y_b)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    Tensor::new(vec![1, y_a.len()], blend)
}

/// Mean absolute gap between `softmax(logits_m)` and the detached blend of `Y_A`, `Y_B`.
pub fn loss_con<G: Graph>(
    g: &mut G,
    logits_m: &G::Value,
    y_a: &[f64],
    y_b: &[f64],
    lambda: f64,
) -> Result<G::Value> {
    let target = consistency_target(y_a, y_b, lambda)?;
    let probs = g.softmax_rows(logits_m)?;
    if g.value(&probs).numel() != target.numel() {
        return Err(Error::shape("prediction and blend lengths differ"));
    }
    let target = target.reshape(g.value(&probs).shape())?;
    let t = g.input(&target);
    g.l1(&probs, &t)
}

pub fn loss_fine<G: Graph>(
    g: &mut G,
    logits_a: &G::Value,
    y_a: &ProbVector,
    logits_b: &G::Value,
    y_b: &ProbVector,
) -> Result<G::Value> {
    let ca = g.cross_entropy(logits_a, y_a.as_slice())?;
    let cb = g.cross_entropy(logits_b, y_b.as_slice())?;
    let s = g.add(&ca, &cb)?;
    Ok(g.scale(&s, 0.5))
}

/// Scalar loss terms of one step or sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBundle {
    pub mode: LossMode,
    pub cls: f64,
    pub con: f64,
    pub fine: Option<f64>,
    pub total: f64,
}

/// Loss terms before assembly; `None` means not computed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub cls: Option<f64>,
    pub con: Option<f64>,
    pub fine: Option<f64>,
}

pub fn total_loss(mode: LossMode, c: LossComponents) -> Result<LossBundle> {
    let cls = c.cls.ok_or_else(|| Error::contract("L_cls missing"))?;
    let con = c.con.ok_or_else(|| Error::contract("L_con missing"))?;
    match mode {
        LossMode::ResnetStyle => Ok(LossBundle {
            mode,
            cls,
            con,
            fine: None,
            total: cls + con,
        }),
        LossMode::VitStyle => {
            let fine = c
                .fine
                .ok_or_else(|| Error::contract("L_fine missing for vit-style loss"))?;
            Ok(LossBundle {
                mode,
                cls,
                con,
                fine: Some(fine),
                total: cls + fine + con,
            })
        }
    }
}

/// Graph-side counterpart of [`total_loss`], summing in the same order.
pub fn combine<G: Graph>(
    g: &mut G,
    mode: LossMode,
    cls: &G::Value,
    con: &G::Value,
    fine: Option<&G::Value>,
) -> Result<G::Value> {
    match mode {
        LossMode::ResnetStyle => g.add(cls, con),
        LossMode::VitStyle => {
            let fine = fine.ok_or_else(|| Error::contract("L_fine missing for vit-style loss"))?;
            let partial = g.add(cls, fine)?;
            g.add(&partial, con)
        }
    }
}
