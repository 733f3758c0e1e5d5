//! Minimal tensor-level reverse-mode differentiation.
//!
//! A [`Tape`] records each primitive application as a node holding its
//! forward value. Nodes are appended in evaluation order, so the node list
//! is always topologically sorted and [`Tape::backward`] is a single reverse
//! sweep.
//!
//! Model code is written once against the [`Graph`] trait and runs either on
//! a [`Tape`] (recording) or on [`Eager`] (plain tensors, nothing kept).

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Transpose(usize),
    SoftmaxRows(usize),
    LayerNormRows(usize),
    Gelu(usize),
    MeanRows(usize),
    SliceCols(usize, usize),
    ConcatCols(Vec<usize>),
    Sum(usize),
    CrossEntropy(usize, Vec<f64>),
    L1(usize, usize),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive applications.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &Tensor {
        &self.grads[v.0]
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.grads[v.0], Tensor::zeros(&[0]))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Reverse sweep from a single-element `loss` node.
    ///
    /// Nodes that are not ancestors of `loss` keep an all-zero gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0].value;
        if root.numel() != 1 {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                root.shape()
            )));
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        grads[loss.0].data_mut()[0] = 1.0;

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if grads[idx].data().iter().all(|g| *g == 0.0) {
                continue;
            }
            let g = grads[idx].clone();
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = tensor::matmul(&g, &tensor::transpose(&self.nodes[*b].value)?)?;
                    let db = tensor::matmul(&tensor::transpose(&self.nodes[*a].value)?, &g)?;
                    accumulate(&mut grads[*a], &da);
                    accumulate(&mut grads[*b], &db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], &g);
                    accumulate(&mut grads[*b], &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[*a], &g);
                    accumulate(&mut grads[*b], &tensor::scale(&g, -1.0));
                }
                Op::Mul(a, b) => {
                    let da = tensor::mul(&g, &self.nodes[*b].value)?;
                    let db = tensor::mul(&g, &self.nodes[*a].value)?;
                    accumulate(&mut grads[*a], &da);
                    accumulate(&mut grads[*b], &db);
                }
                Op::AddRow(a, row) => {
                    accumulate(&mut grads[*a], &g);
                    let colsum = tensor::scale(&tensor::mean_rows(&g)?, g.dims2()?.0 as f64);
                    let target = &mut grads[*row];
                    for (t, c) in target.data_mut().iter_mut().zip(colsum.data()) {
                        *t += c;
                    }
                }
                Op::Scale(a, c) => accumulate(&mut grads[*a], &tensor::scale(&g, *c)),
                Op::Transpose(a) => accumulate(&mut grads[*a], &tensor::transpose(&g)?),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let (m, n) = y.dims2()?;
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..n {
                            dx[i * n + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(&mut grads[*a], &Tensor::from_raw(y.shape().to_vec(), dx));
                }
                Op::LayerNormRows(a) => {
                    let x = &self.nodes[*a].value;
                    let y = &node.value;
                    let (m, n) = y.dims2()?;
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        let xr = x.row(i);
                        let mean = xr.iter().sum::<f64>() / n as f64;
                        let var =
                            xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                        let inv = 1.0 / (var + tensor::LAYER_NORM_EPS).sqrt();
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let gmean = gr.iter().sum::<f64>() / n as f64;
                        let gy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / n as f64;
                        for j in 0..n {
                            dx[i * n + j] = inv * (gr[j] - gmean - yr[j] * gy);
                        }
                    }
                    accumulate(&mut grads[*a], &Tensor::from_raw(y.shape().to_vec(), dx));
                }
                Op::Gelu(a) => {
                    let x = &self.nodes[*a].value;
                    let dx: Vec<f64> = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(xv, gv)| gv * tensor::gelu_grad(*xv))
                        .collect();
                    accumulate(&mut grads[*a], &Tensor::from_raw(x.shape().to_vec(), dx));
                }
                Op::MeanRows(a) => {
                    let x = &self.nodes[*a].value;
                    let (m, n) = x.dims2()?;
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            dx[i * n + j] = g.data()[j] / m as f64;
                        }
                    }
                    accumulate(&mut grads[*a], &Tensor::from_raw(x.shape().to_vec(), dx));
                }
                Op::SliceCols(a, start) => {
                    let (m, n) = self.nodes[*a].value.dims2()?;
                    let (_, len) = g.dims2()?;
                    let target = grads[*a].data_mut();
                    for i in 0..m {
                        for j in 0..len {
                            target[i * n + start + j] += g.data()[i * len + j];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let (m, n) = g.dims2()?;
                    let mut offset = 0;
                    for p in parts {
                        let (_, w) = self.nodes[*p].value.dims2()?;
                        let target = grads[*p].data_mut();
                        for i in 0..m {
                            for j in 0..w {
                                target[i * w + j] += g.data()[i * n + offset + j];
                            }
                        }
                        offset += w;
                    }
                }
                Op::Sum(a) => {
                    let s = g.data()[0];
                    for t in grads[*a].data_mut() {
                        *t += s;
                    }
                }
                Op::CrossEntropy(a, target) => {
                    let logits = &self.nodes[*a].value;
                    let row = Tensor::from_raw(vec![1, logits.numel()], logits.data().to_vec());
                    let p = tensor::softmax_rows(&row)?;
                    let s = g.data()[0];
                    for ((t, pi), yi) in grads[*a].data_mut().iter_mut().zip(p.data()).zip(target)
                    {
                        *t += s * (pi - yi);
                    }
                }
                Op::L1(a, b) => {
                    let pa = &self.nodes[*a].value;
                    let pb = &self.nodes[*b].value;
                    let n = pa.numel().max(1) as f64;
                    let s = g.data()[0] / n;
                    let signs: Vec<f64> = pa
                        .data()
                        .iter()
                        .zip(pb.data())
                        .map(|(x, y)| sign(x - y) * s)
                        .collect();
                    for (t, d) in grads[*a].data_mut().iter_mut().zip(&signs) {
                        *t += d;
                    }
                    for (t, d) in grads[*b].data_mut().iter_mut().zip(&signs) {
                        *t -= d;
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn accumulate(target: &mut Tensor, delta: &Tensor) {
    for (t, d) in target.data_mut().iter_mut().zip(delta.data()) {
        *t += d;
    }
}

/// Operations a model forward pass needs, over either recorded or plain values.
pub trait Graph {
    type Value: Clone;

    fn input(&mut self, t: &Tensor) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add_row(&mut self, a: &Self::Value, row: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, a: &Self::Value, c: f64) -> Self::Value;
    fn transpose(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn softmax_rows(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn layer_norm_rows(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn gelu(&mut self, a: &Self::Value) -> Self::Value;
    fn mean_rows(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn slice_cols(&mut self, a: &Self::Value, start: usize, len: usize) -> Result<Self::Value>;
    fn concat_cols(&mut self, parts: &[Self::Value]) -> Result<Self::Value>;
    fn sum(&mut self, a: &Self::Value) -> Self::Value;
    /// `-Σ target · log softmax(logits)`, scalar output.
    fn cross_entropy(&mut self, logits: &Self::Value, target: &[f64]) -> Result<Self::Value>;
    /// Mean absolute difference, scalar output.
    fn l1(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
}

impl Graph for Tape {
    type Value = Var;

    fn input(&mut self, t: &Tensor) -> Var {
        self.leaf(t.clone())
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        &self.nodes[v.0].value
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = tensor::matmul(self.value(*a), self.value(*b))?;
        Ok(self.push(v, Op::MatMul(a.0, b.0)))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = tensor::add(self.value(*a), self.value(*b))?;
        Ok(self.push(v, Op::Add(a.0, b.0)))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = tensor::sub(self.value(*a), self.value(*b))?;
        Ok(self.push(v, Op::Sub(a.0, b.0)))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = tensor::mul(self.value(*a), self.value(*b))?;
        Ok(self.push(v, Op::Mul(a.0, b.0)))
    }

    fn add_row(&mut self, a: &Var, row: &Var) -> Result<Var> {
        let v = tensor::add_row(self.value(*a), self.value(*row))?;
        Ok(self.push(v, Op::AddRow(a.0, row.0)))
    }

    fn scale(&mut self, a: &Var, c: f64) -> Var {
        let v = tensor::scale(self.value(*a), c);
        self.push(v, Op::Scale(a.0, c))
    }

    fn transpose(&mut self, a: &Var) -> Result<Var> {
        let v = tensor::transpose(self.value(*a))?;
        Ok(self.push(v, Op::Transpose(a.0)))
    }

    fn softmax_rows(&mut self, a: &Var) -> Result<Var> {
        let v = tensor::softmax_rows(self.value(*a))?;
        Ok(self.push(v, Op::SoftmaxRows(a.0)))
    }

    fn layer_norm_rows(&mut self, a: &Var) -> Result<Var> {
        let v = tensor::layer_norm_rows(self.value(*a))?;
        Ok(self.push(v, Op::LayerNormRows(a.0)))
    }

    fn gelu(&mut self, a: &Var) -> Var {
        let v = tensor::gelu(self.value(*a));
        self.push(v, Op::Gelu(a.0))
    }

    fn mean_rows(&mut self, a: &Var) -> Result<Var> {
        let v = tensor::mean_rows(self.value(*a))?;
        Ok(self.push(v, Op::MeanRows(a.0)))
    }

    fn slice_cols(&mut self, a: &Var, start: usize, len: usize) -> Result<Var> {
        let v = tensor::slice_cols(self.value(*a), start, len)?;
        Ok(self.push(v, Op::SliceCols(a.0, start)))
    }

    fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let v = tensor::concat_cols(&refs)?;
        Ok(self.push(v, Op::ConcatCols(parts.iter().map(|p| p.0).collect())))
    }

    fn sum(&mut self, a: &Var) -> Var {
        let v = Tensor::scalar(tensor::sum(self.value(*a)));
        self.push(v, Op::Sum(a.0))
    }

    fn cross_entropy(&mut self, logits: &Var, target: &[f64]) -> Result<Var> {
        let v = Tensor::scalar(tensor::cross_entropy(self.value(*logits), target)?);
        Ok(self.push(v, Op::CrossEntropy(logits.0, target.to_vec())))
    }

    fn l1(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = Tensor::scalar(tensor::l1_distance(self.value(*a), self.value(*b))?);
        Ok(self.push(v, Op::L1(a.0, b.0)))
    }
}

/// Non-recording evaluation over plain tensors.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Graph for Eager {
    type Value = Tensor;

    fn input(&mut self, t: &Tensor) -> Tensor {
        t.clone()
    }

    fn value<'a>(&'a self, v: &'a Tensor) -> &'a Tensor {
        v
    }

    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        tensor::matmul(a, b)
    }

    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        tensor::add(a, b)
    }

    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        tensor::sub(a, b)
    }

    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        tensor::mul(a, b)
    }

    fn add_row(&mut self, a: &Tensor, row: &Tensor) -> Result<Tensor> {
        tensor::add_row(a, row)
    }

    fn scale(&mut self, a: &Tensor, c: f64) -> Tensor {
        tensor::scale(a, c)
    }

    fn transpose(&mut self, a: &Tensor) -> Result<Tensor> {
        tensor::transpose(a)
    }

    fn softmax_rows(&mut self, a: &Tensor) -> Result<Tensor> {
        tensor::softmax_rows(a)
    }

    fn layer_norm_rows(&mut self, a: &Tensor) -> Result<Tensor> {
        tensor::layer_norm_rows(a)
    }

    fn gelu(&mut self, a: &Tensor) -> Tensor {
        tensor::gelu(a)
    }

    fn mean_rows(&mut self, a: &Tensor) -> Result<Tensor> {
        tensor::mean_rows(a)
    }

    fn slice_cols(&mut self, a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
        tensor::slice_cols(a, start, len)
    }

    fn concat_cols(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let refs: Vec<&Tensor> = parts.iter().collect();
        tensor::concat_cols(&refs)
    }

    fn sum(&mut self, a: &Tensor) -> Tensor {
        Tensor::scalar(tensor::sum(a))
    }

    fn cross_entropy(&mut self, logits: &Tensor, target: &[f64]) -> Result<Tensor> {
        Ok(Tensor::scalar(tensor::cross_entropy(logits, target)?))
    }

    fn l1(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Ok(Tensor::scalar(tensor::l1_distance(a, b)?))
    }
}

/// Denominator floor used by [`relative_error`].
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, REL_ERR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Compares `analytic` against central differences of `f` at `params`.
///
/// Only the flat coordinates listed in `coords` are probed (all of them when
/// `coords` is `None`). Returns the worst [`relative_error`].
pub fn finite_diff_check<F>(
    mut f: F,
    params: &Tensor,
    analytic: &Tensor,
    eps: f64,
    coords: Option<&[usize]>,
) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    if params.shape() != analytic.shape() {
        return Err(Error::shape("gradient and parameter shapes differ"));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..params.numel()).collect();
            &all
        }
    };
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for &c in coords {
        if c >= params.numel() {
            return Err(Error::Index {
                index: c,
                len: params.numel(),
            });
        }
        let orig = params.data()[c];
        probe.data_mut()[c] = orig + eps;
        let up = f(&probe)?;
        probe.data_mut()[c] = orig - eps;
        let down = f(&probe)?;
        probe.data_mut()[c] = orig;
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max(relative_error(numeric, analytic.data()[c]));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::filled(&[2, 3, 4], 0.7));
        let s = tape.sum(&x);
        let g = tape.backward(s).unwrap();
        assert!(g.get(x).data().iter().all(|v| *v == 1.0));
        assert_eq!(g.get(x).shape(), &[2, 3, 4]);
    }

    #[test]
    fn product_rule_on_scalars() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.leaf(Tensor::scalar(-2.5));
        let z = tape.mul(&x, &y).unwrap();
        let g = tape.backward(z).unwrap();
        assert_eq!(g.get(x).data(), &[-2.5]);
        assert_eq!(g.get(y).data(), &[3.0]);
    }

    #[test]
    fn non_ancestors_get_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::filled(&[3], 1.0));
        let unused = tape.leaf(Tensor::filled(&[3], 2.0));
        let _ = tape.scale(&unused, 4.0);
        let s = tape.sum(&x);
        let g = tape.backward(s).unwrap();
        assert!(g.get(unused).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn finite_diff_on_quadratic_and_linear() {
        let p = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let grad = Tensor::new(vec![2], vec![2.0, 4.0]).unwrap();
        let err = finite_diff_check(
            |q| Ok(q.data().iter().map(|v| v * v).sum()),
            &p,
            &grad,
            1e-5,
            None,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");

        let slope = Tensor::new(vec![2], vec![3.0, -1.0]).unwrap();
        let err = finite_diff_check(
            |q| Ok(3.0 * q.data()[0] - q.data()[1]),
            &p,
            &slope,
            1e-3,
            None,
        )
        .unwrap();
        assert!(err < 1e-10, "{err}");
        assert!(finite_diff_check(|_| Ok(0.0), &p, &slope, 0.0, None).is_err());
    }

    #[test]
    fn composite_chain_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&mut rng, &[3, 4]);
        let w = random(&mut rng, &[4, 5]);
        let target = [0.1, 0.2, 0.3, 0.25, 0.15];

        fn loss<G: Graph>(g: &mut G, x: &G::Value, w: &G::Value, target: &[f64]) -> G::Value {
            let h = g.matmul(x, w).unwrap();
            let h = g.layer_norm_rows(&h).unwrap();
            let h = g.gelu(&h);
            let s = g.softmax_rows(&h).unwrap();
            let pooled = g.mean_rows(&s).unwrap();
            let t = g.transpose(&pooled).unwrap();
            let back = g.transpose(&t).unwrap();
            let left = g.slice_cols(&back, 0, 2).unwrap();
            let right = g.slice_cols(&back, 2, 3).unwrap();
            let joined = g.concat_cols(&[left, right]).unwrap();
            let logits = g.scale(&joined, 7.0);
            g.cross_entropy(&logits, target).unwrap()
        }

        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let wv = tape.leaf(w.clone());
        let l = loss(&mut tape, &xv, &wv, &target);
        let grads = tape.backward(l).unwrap();

        let err = finite_diff_check(
            |p| {
                let mut e = Eager;
                Ok(loss(&mut e, &x, p, &target).item().unwrap())
            },
            &w,
            grads.get(wv),
            1e-5,
            None,
        )
        .unwrap();
        assert!(err < 1e-4, "w: {err}");
        let err = finite_diff_check(
            |p| {
                let mut e = Eager;
                Ok(loss(&mut e, p, &w, &target).item().unwrap())
            },
            &x,
            grads.get(xv),
            1e-5,
            None,
        )
        .unwrap();
        assert!(err < 1e-4, "x: {err}");
    }

    #[test]
    fn add_row_sub_and_l1_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[1, 4]);
        let c = random(&mut rng, &[3, 4]);

        fn loss<G: Graph>(g: &mut G, a: &G::Value, b: &G::Value, c: &G::Value) -> G::Value {
            let h = g.add_row(a, b).unwrap();
            let d = g.sub(&h, c).unwrap();
            let d2 = g.mul(&d, &d).unwrap();
            let s = g.sum(&d2);
            let l = g.l1(&h, c).unwrap();
            let both = g.add(&s, &l).unwrap();
            g.scale(&both, 0.5)
        }
        let mut tape = Tape::new();
        let av = tape.leaf(a.clone());
        let bv = tape.leaf(b.clone());
        let cv = tape.leaf(c.clone());
        let l = loss(&mut tape, &av, &bv, &cv);
        let grads = tape.backward(l).unwrap();
        let err = finite_diff_check(
            |p| Ok(loss(&mut Eager, p, &b, &c).item().unwrap()),
            &a,
            grads.get(av),
            1e-6,
            None,
        )
        .unwrap();
        assert!(err < 1e-4);
        let err = finite_diff_check(
            |p| Ok(loss(&mut Eager, &a, p, &c).item().unwrap()),
            &b,
            grads.get(bv),
            1e-6,
            None,
        )
        .unwrap();
        assert!(err < 1e-4);
        let err = finite_diff_check(
            |p| Ok(loss(&mut Eager, &a, &b, p).item().unwrap()),
            &c,
            grads.get(cv),
            1e-6,
            None,
        )
        .unwrap();
        assert!(err < 1e-4);
    }

    #[test]
    fn tape_and_eager_values_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random(&mut rng, &[4, 4]);
        let mut tape = Tape::new();
        let av = tape.leaf(a.clone());
        let t = tape.matmul(&av, &av).unwrap();
        let t = tape.softmax_rows(&t).unwrap();
        let e = tensor::softmax_rows(&tensor::matmul(&a, &a).unwrap()).unwrap();
        assert_eq!(tape.value(t), &e);
    }
}
