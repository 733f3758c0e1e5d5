//! Label-conditioned attention maps.
//!
//! The classifier column of the current label, `w_td`, turns the block's
//! token features into a per-token class score `t·w_td`. Scaled by the
//! balance factor σ and broadcast across the feature axis, that score is
//! added to `V` before the attention read-out. The read-out is then reduced
//! to one non-negative score per patch and normalized into an
//! [`AttentionGrid`].
//!
//! With σ = 0 the injected signal is exactly zero and the grid is the plain
//! bottom-up self-attention map.

use crate::error::{Error, Result};
use crate::grid::{AttentionGrid, Grid};
use crate::image::Image;
use crate::tensor::{self, Tensor};
use crate::vit::{BlockTrace, VitModel};

/// Balance factor σ ≥ 0 scaling the top-down signal.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct BalanceFactor(f64);

impl BalanceFactor {
    pub const BOTTOM_UP: BalanceFactor = BalanceFactor(0.0);

    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::config(format!(
                "balance factor must be finite and >= 0, got {}",
                sigma
            )));
        }
        Ok(Self(sigma))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for BalanceFactor {
    fn default() -> Self {
        BalanceFactor(1.0)
    }
}

/// How per-token attention is collapsed to one score per patch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GridReduction {
    /// Attention received by the token times the L2 norm of its output row.
    #[default]
    ReceivedTimesNorm,
    /// Attention received only (column sums of the head-averaged weights).
    Received,
    /// L2 norm of the output row only.
    OutputNorm,
}

impl std::str::FromStr for GridReduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "received-times-norm" => Ok(Self::ReceivedTimesNorm),
            "received" => Ok(Self::Received),
            "output-norm" => Ok(Self::OutputNorm),
            other => Err(Error::config(format!("unknown grid reduction '{}'", other))),
        }
    }
}

impl std::fmt::Display for GridReduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ReceivedTimesNorm => "received-times-norm",
            Self::Received => "received",
            Self::OutputNorm => "output-norm",
        })
    }
}

/// `V_td = σ · broadcast(t · w_td)`: row `i` repeats `σ (t w_td)_i` across all `d` columns.
pub fn top_down_signal(tokens: &Tensor, w_td: &Tensor, sigma: BalanceFactor) -> Result<Tensor> {
    let (n, d) = tokens.dims2()?;
    if w_td.numel() != d {
        return Err(Error::shape(format!(
            "w_td has {} entries for {}-dim tokens",
            w_td.numel(),
            d
        )));
    }
    let col = w_td.reshape(&[d, 1])?;
    let scores = tensor::matmul(tokens, &col)?;
    let s = sigma.value();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let v = s * scores.data()[i];
        data.extend(std::iter::repeat(v).take(d));
    }
    Ok(Tensor::from_raw(vec![n, d], data))
}

/// Attention read-out with the top-down signal added to the values.
#[derive(Clone, Debug)]
pub struct AttentionReadout {
    /// `A·(V + V_td)`, heads concatenated, `N×d`.
    pub outputs: Tensor,
    /// Head-averaged `softmax(QKᵀ/√d_h)`, `N×N`.
    pub weights: Tensor,
}

/// `A = softmax_rows(Q Kᵀ/√d_h)` per head, outputs `A (V + V_td)`.
///
/// Passing `None` for `v_td` gives the plain bottom-up read-out.
pub fn task_adaptive_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    v_td: Option<&Tensor>,
    heads: usize,
) -> Result<AttentionReadout> {
    let (n, d) = q.dims2()?;
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::shape("Q, K, V shapes differ"));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::shape(format!("{} columns cannot split into {} heads", d, heads)));
    }
    let values = match v_td {
        Some(extra) => tensor::add(v, extra)?,
        None => v.clone(),
    };
    let dh = d / heads;
    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut avg = vec![0.0; n * n];
    for h in 0..heads {
        let qh = tensor::slice_cols(q, h * dh, dh)?;
        let kh = tensor::slice_cols(k, h * dh, dh)?;
        let vh = tensor::slice_cols(&values, h * dh, dh)?;
        let scores = tensor::scale(&tensor::matmul(&qh, &tensor::transpose(&kh)?)?, inv_sqrt);
        let a = tensor::softmax_rows(&scores)?;
        outs.push(tensor::matmul(&a, &vh)?);
        for (acc, w) in avg.iter_mut().zip(a.data()) {
            *acc += w;
        }
    }
    for a in avg.iter_mut() {
        *a /= heads as f64;
    }
    let refs: Vec<&Tensor> = outs.iter().collect();
    Ok(AttentionReadout {
        outputs: tensor::concat_cols(&refs)?,
        weights: Tensor::from_raw(vec![n, n], avg),
    })
}

/// Collapses a read-out to a normalized `rows×cols` grid (tokens row-major).
pub fn attention_grid(
    readout: &AttentionReadout,
    rows: usize,
    cols: usize,
    reduction: GridReduction,
) -> Result<AttentionGrid> {
    let (n, n2) = readout.weights.dims2()?;
    if n != n2 || n != rows * cols || readout.outputs.dims2()?.0 != n {
        return Err(Error::shape(format!(
            "{} tokens do not fill a {}x{} grid",
            n, rows, cols
        )));
    }
    let a = readout.weights.data();
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let received: f64 = (0..n).map(|j| a[j * n + i]).sum();
            let norm = readout.outputs.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            match reduction {
                GridReduction::ReceivedTimesNorm => received * norm,
                GridReduction::Received => received,
                GridReduction::OutputNorm => norm,
            }
        })
        .collect();
    let grid = Grid::new(rows, cols, scores)?;
    match AttentionGrid::normalize(grid) {
        Ok(g) => Ok(g),
        // every output row zero: nothing distinguishes the patches
        Err(Error::Degenerate(_)) => Ok(AttentionGrid::uniform(rows, cols)),
        Err(e) => Err(e),
    }
}

/// Mixing-time settings for the attention guide.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TdAttentionConfig {
    pub sigma: BalanceFactor,
    pub reduction: GridReduction,
}

/// Grid for one block trace, conditioned on `w_td`.
pub fn grid_from_trace(
    trace: &BlockTrace<Tensor>,
    w_td: &Tensor,
    heads: usize,
    rows: usize,
    cols: usize,
    cfg: &TdAttentionConfig,
) -> Result<AttentionGrid> {
    let v_td = top_down_signal(&trace.tokens, w_td, cfg.sigma)?;
    let readout = task_adaptive_attention(&trace.q, &trace.k, &trace.v, Some(&v_td), heads)?;
    attention_grid(&readout, rows, cols, cfg.reduction)
}

/// Plain self-attention grid of a trace, with no top-down term at all.
pub fn bottom_up_grid(
    trace: &BlockTrace<Tensor>,
    heads: usize,
    rows: usize,
    cols: usize,
    reduction: GridReduction,
) -> Result<AttentionGrid> {
    let readout = task_adaptive_attention(&trace.q, &trace.k, &trace.v, None, heads)?;
    attention_grid(&readout, rows, cols, reduction)
}

/// Attention grid of `image` under `model`, guided by class `label`.
///
/// Also returns the model's logits from the same forward pass.
pub fn image_attention(
    model: &VitModel,
    image: &Image,
    label: usize,
    cfg: &TdAttentionConfig,
) -> Result<(AttentionGrid, Vec<f64>)> {
    let out = model.forward(image)?;
    let grid = attention_from_output(model, &out, label, cfg)?;
    Ok((grid, out.logits.into_data()))
}

/// Same as [`image_attention`] but reusing an existing forward pass.
pub fn attention_from_output(
    model: &VitModel,
    out: &crate::vit::ForwardOutput<Tensor>,
    label: usize,
    cfg: &TdAttentionConfig,
) -> Result<AttentionGrid> {
    let mc = model.config();
    let trace = &out.blocks[mc.mixing_block()];
    let w_td = model.classifier_column(label)?;
    grid_from_trace(trace, &w_td, mc.heads, mc.grid_rows(), mc.grid_cols(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Tensor {
        Tensor::new(vec![m, n], (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_sigma_gives_zero_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random(&mut rng, 5, 3);
        let w = random(&mut rng, 3, 1);
        let v = top_down_signal(&t, &w, BalanceFactor::BOTTOM_UP).unwrap();
        assert!(v.data().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn identity_tokens_pick_first_feature() {
        let t = Tensor::identity(3);
        let e1 = Tensor::new(vec![3, 1], vec![1.0, 0.0, 0.0]).unwrap();
        let v = top_down_signal(&t, &e1, BalanceFactor::new(1.0).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(v.get2(i, j), t.get2(i, 0));
            }
        }
    }

    #[test]
    fn signal_matches_loop_oracle_and_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random(&mut rng, 4, 3);
        let w = random(&mut rng, 3, 1);
        let sigma = BalanceFactor::new(0.7).unwrap();
        let v = top_down_signal(&t, &w, sigma).unwrap();
        for i in 0..4 {
            let mut s = 0.0;
            for k in 0..3 {
                s += t.get2(i, k) * w.data()[k];
            }
            for j in 0..3 {
                assert!((v.get2(i, j) - 0.7 * s).abs() < 1e-15);
            }
        }
        // exact scaling with a power of two
        let w2 = tensor::scale(&w, 4.0);
        let v2 = top_down_signal(&t, &w2, sigma).unwrap();
        assert_eq!(v2, tensor::scale(&v, 4.0));
        assert!(top_down_signal(&t, &random(&mut rng, 2, 1), sigma).is_err());
    }

    #[test]
    fn balance_factor_rejects_negative() {
        assert!(BalanceFactor::new(-0.1).is_err());
        assert!(BalanceFactor::new(f64::NAN).is_err());
        assert_eq!(BalanceFactor::default().value(), 1.0);
    }

    #[test]
    fn zero_signal_equals_plain_attention_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (q, k, v) = (random(&mut rng, 6, 4), random(&mut rng, 6, 4), random(&mut rng, 6, 4));
        let zero = Tensor::zeros(&[6, 4]);
        let a = task_adaptive_attention(&q, &k, &v, Some(&zero), 2).unwrap();
        let b = task_adaptive_attention(&q, &k, &v, None, 2).unwrap();
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn zero_queries_give_uniform_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = Tensor::zeros(&[5, 2]);
        let v = random(&mut rng, 5, 2);
        let r = task_adaptive_attention(&z, &z, &v, None, 1).unwrap();
        assert!(r.weights.data().iter().all(|w| (w - 0.2).abs() < 1e-15));
    }

    #[test]
    fn attention_matches_hand_rolled_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (q, k, v, vt) = (
            random(&mut rng, 3, 2),
            random(&mut rng, 3, 2),
            random(&mut rng, 3, 2),
            random(&mut rng, 3, 2),
        );
        let r = task_adaptive_attention(&q, &k, &v, Some(&vt), 1).unwrap();
        let scale = 1.0 / 2f64.sqrt();
        for i in 0..3 {
            let logits: Vec<f64> = (0..3)
                .map(|j| (q.get2(i, 0) * k.get2(j, 0) + q.get2(i, 1) * k.get2(j, 1)) * scale)
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            let w: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
            for j in 0..3 {
                assert!((r.weights.get2(i, j) - w[j]).abs() < 1e-12);
            }
            for c in 0..2 {
                let o: f64 = (0..3).map(|j| w[j] * (v.get2(j, c) + vt.get2(j, c))).sum();
                assert!((r.outputs.get2(i, c) - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn head_averaged_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (q, k, v) = (random(&mut rng, 8, 6), random(&mut rng, 8, 6), random(&mut rng, 8, 6));
        let r = task_adaptive_attention(&q, &k, &v, None, 3).unwrap();
        for i in 0..8 {
            let s: f64 = r.weights.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_reductions() {
        let uniform = AttentionReadout {
            outputs: Tensor::filled(&[4, 3], 0.5),
            weights: Tensor::filled(&[4, 4], 0.25),
        };
        let g = attention_grid(&uniform, 2, 2, GridReduction::default()).unwrap();
        assert!(g.values().iter().all(|v| (v - 0.25).abs() < 1e-15));

        let mut w = vec![0.0; 16];
        for j in 0..4 {
            w[j * 4 + 3] = 1.0;
        }
        let focused = AttentionReadout {
            outputs: Tensor::filled(&[4, 3], 1.0),
            weights: Tensor::new(vec![4, 4], w).unwrap(),
        };
        let g = attention_grid(&focused, 2, 2, GridReduction::default()).unwrap();
        assert_eq!(tensor::argmax(g.values()), 3);
        assert_eq!(g.get(1, 1), 1.0);
        assert!(attention_grid(&focused, 3, 2, GridReduction::default()).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (q, k, v) = (random(&mut rng, 9, 4), random(&mut rng, 9, 4), random(&mut rng, 9, 4));
        let r = task_adaptive_attention(&q, &k, &v, None, 2).unwrap();
        for red in [GridReduction::ReceivedTimesNorm, GridReduction::Received, GridReduction::OutputNorm] {
            let g = attention_grid(&r, 3, 3, red).unwrap();
            assert!((g.sum() - 1.0).abs() < 1e-9);
            assert!(g.values().iter().all(|x| *x >= 0.0));
            assert_eq!(red.to_string().parse::<GridReduction>().unwrap(), red);
        }
    }
}
