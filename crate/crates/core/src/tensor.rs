//! Dense row-major `f64` arrays and the primitive kernels shared by the
//! eager path and the recording tape.
//!
//! Every kernel here is a pure function of its inputs. The tape in
//! [`crate::autodiff`] calls the same kernels for its forward values, so an
//! eager evaluation and a recorded one produce bit-identical numbers.

use crate::error::{Error, Result};

/// Dense array of finite 64-bit floats in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting length mismatches and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite value {} at flat index {}",
                data[pos], pos
            )));
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for kernel outputs; length is checked in debug builds only.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::from_raw(shape.to_vec(), vec![0.0; numel])
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self::from_raw(shape.to_vec(), vec![value; numel])
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_raw(Vec::new(), vec![value])
    }

    /// 2-D tensor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::shape("ragged rows"));
        }
        Self::new(vec![m, n], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// (rows, cols) of a 2-D tensor; a 1-D tensor is read as one row.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [m, n] => Ok((*m, *n)),
            [n] => Ok((1, *n)),
            other => Err(Error::shape(format!("expected a matrix, got {:?}", other))),
        }
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        let cols = *self.shape.last().unwrap_or(&1);
        self.data[i * cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = *self.shape.last().unwrap_or(&1);
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} to {:?}",
                self.shape, shape
            )));
        }
        Ok(Self::from_raw(shape.to_vec(), self.data.clone()))
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Largest absolute elementwise difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor) -> Option<f64> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::shape(format!(
            "{}: shapes {:?} and {:?} differ",
            what, a.shape, b.shape
        )));
    }
    Ok(())
}

/// Matrix product of `a [m×k]` and `b [k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 || a.shape.len() != 2 || b.shape.len() != 2 {
        return Err(Error::shape(format!(
            "matmul {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(Tensor::from_raw(vec![m, n], out))
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data[i * n + j];
        }
    }
    Ok(Tensor::from_raw(vec![n, m], out))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "add")?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_raw(a.shape.clone(), data))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "sub")?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
    Ok(Tensor::from_raw(a.shape.clone(), data))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "mul")?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Ok(Tensor::from_raw(a.shape.clone(), data))
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    Tensor::from_raw(a.shape.clone(), a.data.iter().map(|x| x * c).collect())
}

/// Adds a length-`n` row vector to every row of `a [m×n]`.
pub fn add_row(a: &Tensor, row: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    if row.numel() != n {
        return Err(Error::shape(format!(
            "add_row: row of {} values for {} columns",
            row.numel(),
            n
        )));
    }
    let mut data = a.data.clone();
    for i in 0..m {
        for (v, r) in data[i * n..(i + 1) * n].iter_mut().zip(&row.data) {
            *v += r;
        }
    }
    Ok(Tensor::from_raw(a.shape.clone(), data))
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (m, n) = x.dims2()?;
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &x.data[i * n..(i + 1) * n];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let orow = &mut out[i * n..(i + 1) * n];
        let mut total = 0.0;
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - mx).exp();
            total += *o;
        }
        for o in orow.iter_mut() {
            *o /= total;
        }
    }
    Ok(Tensor::from_raw(x.shape.clone(), out))
}

/// Row-wise `log softmax` computed as `x - max - log Σ exp(x - max)`.
pub fn log_softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (m, n) = x.dims2()?;
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &x.data[i * n..(i + 1) * n];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        for (o, &v) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
            *o = v - mx - lse;
        }
    }
    Ok(Tensor::from_raw(x.shape.clone(), out))
}

const PROB_TOL: f64 = 1e-9;

/// Checks that `target` is a probability vector of length `n`.
pub(crate) fn check_distribution(target: &[f64], n: usize) -> Result<()> {
    if target.len() != n {
        return Err(Error::shape(format!(
            "target has {} classes, logits {}",
            target.len(),
            n
        )));
    }
    if target.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::contract("target has negative or non-finite entries"));
    }
    let total: f64 = target.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::contract(format!("target sums to {}, not 1", total)));
    }
    Ok(())
}

/// Fused `-Σ target · log softmax(logits)` for a single logit vector.
pub fn cross_entropy(logits: &Tensor, target: &[f64]) -> Result<f64> {
    check_distribution(target, logits.numel())?;
    let row = Tensor::from_raw(vec![1, logits.numel()], logits.data.clone());
    let logp = log_softmax_rows(&row)?;
    Ok(-target
        .iter()
        .zip(&logp.data)
        .map(|(t, lp)| if *t == 0.0 { 0.0 } else { t * lp })
        .sum::<f64>())
}

/// Mean absolute elementwise difference.
pub fn l1_distance(p: &Tensor, q: &Tensor) -> Result<f64> {
    same_shape(p, q, "l1_distance")?;
    if p.numel() == 0 {
        return Ok(0.0);
    }
    let total: f64 = p.data.iter().zip(&q.data).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / p.numel() as f64)
}

pub fn sum(a: &Tensor) -> f64 {
    a.data.iter().sum()
}

/// Column means of `a [m×n]`, returned as `[1×n]`.
pub fn mean_rows(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    if m == 0 {
        return Err(Error::shape("mean over zero rows"));
    }
    let mut out = vec![0.0; n];
    for i in 0..m {
        for (o, v) in out.iter_mut().zip(&a.data[i * n..(i + 1) * n]) {
            *o += v;
        }
    }
    for o in out.iter_mut() {
        *o /= m as f64;
    }
    Ok(Tensor::from_raw(vec![1, n], out))
}

/// Columns `start..start+len` of `a [m×n]`.
pub fn slice_cols(a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    if start + len > n {
        return Err(Error::shape(format!(
            "slice_cols {}..{} of {} columns",
            start,
            start + len,
            n
        )));
    }
    let mut out = Vec::with_capacity(m * len);
    for i in 0..m {
        out.extend_from_slice(&a.data[i * n + start..i * n + start + len]);
    }
    Ok(Tensor::from_raw(vec![m, len], out))
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
    let (m, _) = first.dims2()?;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (pm, pn) = p.dims2()?;
        if pm != m {
            return Err(Error::shape("concat_cols: row counts differ"));
        }
        widths.push(pn);
    }
    let n: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        for (p, &w) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.data[i * w..(i + 1) * w]);
        }
    }
    Ok(Tensor::from_raw(vec![m, n], out))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-approximated GELU.
pub fn gelu(a: &Tensor) -> Tensor {
    let data = a
        .data
        .iter()
        .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()))
        .collect();
    Tensor::from_raw(a.shape.clone(), data)
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let th = u.tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise standardization (no affine parameters).
pub fn layer_norm_rows(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &a.data[i * n..(i + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (o, v) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
    }
    Ok(Tensor::from_raw(a.shape.clone(), out))
}

/// Index of the largest entry; first wins on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Tensor {
        Tensor::new(vec![m, n], (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn triple_loop(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = a.dims2().unwrap();
        let (_, n) = b.dims2().unwrap();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.get2(i, p) * b.get2(p, j);
                }
                out[i * n + j] = s;
            }
        }
        Tensor::new(vec![m, n], out).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_bad_length() {
        assert!(Tensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::INFINITY]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn matmul_examples() {
        let i2 = Tensor::identity(2);
        let b = Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(matmul(&i2, &b).unwrap(), b);
        let r = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let c = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(matmul(&r, &c).unwrap().data(), &[11.0]);
        assert!(matches!(matmul(&r, &r), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 5, 7);
        let b = random(&mut rng, 7, 3);
        let d = matmul(&a, &b).unwrap().max_abs_diff(&triple_loop(&a, &b)).unwrap();
        assert!(d < 1e-12);
    }

    #[test]
    fn matmul_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = random(&mut rng, 4, 6);
            let b = random(&mut rng, 6, 5);
            let c = random(&mut rng, 5, 3);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            assert!(left.max_abs_diff(&right).unwrap() < 1e-9);
        }
    }

    #[test]
    fn softmax_examples() {
        let x = Tensor::from_rows(&[vec![0.0, 0.0, 0.0], vec![1000.0, 0.0, 0.0], vec![1.0, 2.0, 3.0]])
            .unwrap();
        let s = softmax_rows(&x).unwrap();
        for v in s.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((s.get2(1, 0) - 1.0).abs() < 1e-12);
        assert!(s.get2(1, 1).abs() < 1e-12);
        // direct evaluation: e^k / (e + e^2 + e^3)
        let z: f64 = (1..=3).map(|k| (k as f64).exp()).sum();
        let oracle: Vec<f64> = (1..=3).map(|k| (k as f64).exp() / z).collect();
        for (got, want) in s.row(2).iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((s.get2(2, 0) - 0.0900).abs() < 1e-4);
        assert!((s.get2(2, 1) - 0.2447).abs() < 1e-4);
        assert!((s.get2(2, 2) - 0.6652).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = Tensor::new(vec![4], vec![0.5; 4]).unwrap();
        let ce = cross_entropy(&uniform, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-14);

        let peaked = Tensor::new(vec![2], vec![10.0, -10.0]).unwrap();
        let ce = cross_entropy(&peaked, &[1.0, 0.0]).unwrap();
        // closed form: log(1 + e^-20)
        let want = (-20f64).exp().ln_1p();
        assert!((ce - want).abs() < 1e-15);
        assert!((ce - 2.06e-9).abs() < 1e-11);

        let zeros = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        let ce = cross_entropy(&zeros, &[0.5, 0.5]).unwrap();
        assert!((ce - 2f64.ln()).abs() < 1e-14);

        assert!(matches!(
            cross_entropy(&zeros, &[0.5, 0.6]),
            Err(Error::Contract(_))
        ));
        assert!(cross_entropy(&zeros, &[1.5, -0.5]).is_err());
    }

    #[test]
    fn l1_examples() {
        let p = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let q = Tensor::new(vec![2], vec![2.0, 4.0]).unwrap();
        assert_eq!(l1_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(l1_distance(&p, &q).unwrap(), 1.5);
        assert!(l1_distance(&p, &Tensor::zeros(&[3])).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(&mut rng, 3, 4);
        let b = random(&mut rng, 3, 4);
        let mut total = 0.0;
        for i in 0..3 {
            for j in 0..4 {
                total += (a.get2(i, j) - b.get2(i, j)).abs();
            }
        }
        assert!((l1_distance(&a, &b).unwrap() - total / 12.0).abs() < 1e-15);
    }

    #[test]
    fn concat_inverts_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(&mut rng, 3, 6);
        let l = slice_cols(&a, 0, 2).unwrap();
        let r = slice_cols(&a, 2, 4).unwrap();
        assert_eq!(concat_cols(&[&l, &r]).unwrap(), a);
        assert!(slice_cols(&a, 5, 2).is_err());
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random(&mut rng, 4, 16);
        let y = layer_norm_rows(&a).unwrap();
        for i in 0..4 {
            let r = y.row(i);
            let mean: f64 = r.iter().sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn softmax_rows_sum_to_one(row in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
            let n = row.len();
            let s = softmax_rows(&Tensor::new(vec![1, n], row).unwrap()).unwrap();
            let total: f64 = s.data().iter().sum();
            proptest::prop_assert!((total - 1.0).abs() < 1e-12);
            proptest::prop_assert!(s.data().iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn kernels_are_deterministic(vals in proptest::collection::vec(-5f64..5.0, 12)) {
            let a = Tensor::new(vec![3, 4], vals).unwrap();
            let at = transpose(&a).unwrap();
            let p1 = matmul(&a, &at).unwrap();
            let p2 = matmul(&a, &at).unwrap();
            proptest::prop_assert_eq!(
                p1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                p2.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
