//! Toy vision transformer: patch embedding, pre-norm encoder blocks, mean-pool
//! head. No class token, so every attention row belongs to an image patch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Eager, Graph, Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensor::Tensor;

/// Hidden width of each block's MLP relative to the embedding width.
pub const MLP_RATIO: usize = 2;

/// Half-width of the uniform positional-table init.
pub const POS_INIT: f64 = 0.02;

/// Subtracted from every pixel before the patch embedding.
pub const INPUT_CENTER: f64 = 0.5;

/// Half-width of the uniform classifier-weight init.
pub const HEAD_INIT: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct VitConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    pub patch: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub classes: usize,
    pub seed: u64,
    /// Block whose attention feeds the mixer; `None` means the last block.
    pub attention_block: Option<usize>,
}

impl Default for VitConfig {
    fn default() -> Self {
        Self {
            image_height: 32,
            image_width: 32,
            channels: 3,
            patch: 4,
            embed_dim: 32,
            heads: 2,
            blocks: 2,
            classes: 8,
            seed: 0,
            attention_block: None,
        }
    }
}

impl VitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_height", self.image_height),
            ("image_width", self.image_width),
            ("channels", self.channels),
            ("patch", self.patch),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("blocks", self.blocks),
            ("classes", self.classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{} must be positive", name)));
            }
        }
        if self.image_height % self.patch != 0 || self.image_width % self.patch != 0 {
            return Err(Error::config(format!(
                "patch {} does not divide {}x{}",
                self.patch, self.image_height, self.image_width
            )));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::config(format!(
                "embed_dim {} not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        if let Some(b) = self.attention_block {
            if b >= self.blocks {
                return Err(Error::config(format!(
                    "attention_block {} but only {} blocks",
                    b, self.blocks
                )));
            }
        }
        Ok(())
    }

    pub fn grid_rows(&self) -> usize {
        self.image_height / self.patch
    }

    pub fn grid_cols(&self) -> usize {
        self.image_width / self.patch
    }

    pub fn num_tokens(&self) -> usize {
        self.grid_rows() * self.grid_cols()
    }

    pub fn token_dim(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn mixing_block(&self) -> usize {
        self.attention_block.unwrap_or(self.blocks - 1)
    }
}

/// Splits an image into row-major `P×P` patches, one token per row.
pub fn patchify(image: &Image, patch: usize) -> Result<Tensor> {
    let (h, w, c) = image.dims();
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::config(format!(
            "patch {} does not divide {}x{}",
            patch, h, w
        )));
    }
    let (gr, gc) = (h / patch, w / patch);
    let dim = patch * patch * c;
    let mut data = Vec::with_capacity(gr * gc * dim);
    for pi in 0..gr {
        for pj in 0..gc {
            for y in 0..patch {
                let start = ((pi * patch + y) * w + pj * patch) * c;
                data.extend_from_slice(&image.data()[start..start + patch * c]);
            }
        }
    }
    Ok(Tensor::from_raw(vec![gr * gc, dim], data))
}

/// Exact inverse of [`patchify`].
pub fn unpatchify(tokens: &Tensor, height: usize, width: usize, channels: usize, patch: usize) -> Result<Image> {
    if patch == 0 || height % patch != 0 || width % patch != 0 {
        return Err(Error::config("patch does not divide image"));
    }
    let (gr, gc) = (height / patch, width / patch);
    let dim = patch * patch * channels;
    if tokens.shape() != [gr * gc, dim] {
        return Err(Error::shape(format!(
            "tokens {:?} do not fit a {}x{}x{} image",
            tokens.shape(),
            height,
            width,
            channels
        )));
    }
    let mut data = vec![0.0; height * width * channels];
    for pi in 0..gr {
        for pj in 0..gc {
            let tok = tokens.row(pi * gc + pj);
            for y in 0..patch {
                let start = ((pi * patch + y) * width + pj * patch) * channels;
                data[start..start + patch * channels]
                    .copy_from_slice(&tok[y * patch * channels..(y + 1) * patch * channels]);
            }
        }
    }
    Image::new(height, width, channels, data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T> {
    pub w_q: T,
    pub w_k: T,
    pub w_v: T,
    pub w_o: T,
    pub b_o: T,
    pub w_1: T,
    pub b_1: T,
    pub w_2: T,
    pub b_2: T,
}

/// All learnable tensors, generic over storage so the same layout serves
/// owned weights, tape handles and gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct VitParams<T> {
    pub patch_w: T,
    pub patch_b: T,
    pub pos: T,
    pub blocks: Vec<BlockParams<T>>,
    /// Classifier weights `W_cls`, `d×n_cls`.
    pub head_w: T,
    pub head_b: T,
}

impl<T> VitParams<T> {
    /// Parameters in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let head = [&self.patch_w, &self.patch_b, &self.pos];
        let blocks = self.blocks.iter().flat_map(|b| {
            [
                &b.w_q, &b.w_k, &b.w_v, &b.w_o, &b.b_o, &b.w_1, &b.b_1, &b.w_2, &b.b_2,
            ]
        });
        head.into_iter()
            .chain(blocks)
            .chain([&self.head_w, &self.head_b])
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> VitParams<U> {
        VitParams {
            patch_w: f(&self.patch_w),
            patch_b: f(&self.patch_b),
            pos: f(&self.pos),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    w_q: f(&b.w_q),
                    w_k: f(&b.w_k),
                    w_v: f(&b.w_v),
                    w_o: f(&b.w_o),
                    b_o: f(&b.b_o),
                    w_1: f(&b.w_1),
                    b_1: f(&b.b_1),
                    w_2: f(&b.w_2),
                    b_2: f(&b.b_2),
                })
                .collect(),
            head_w: f(&self.head_w),
            head_b: f(&self.head_b),
        }
    }

    /// Rebuilds the layout from values in declaration order.
    pub fn from_ordered(blocks: usize, mut items: impl Iterator<Item = T>) -> Result<Self> {
        let mut next = || items.next().ok_or_else(|| Error::shape("too few parameter tensors"));
        let patch_w = next()?;
        let patch_b = next()?;
        let pos = next()?;
        let mut bs = Vec::with_capacity(blocks);
        for _ in 0..blocks {
            bs.push(BlockParams {
                w_q: next()?,
                w_k: next()?,
                w_v: next()?,
                w_o: next()?,
                b_o: next()?,
                w_1: next()?,
                b_1: next()?,
                w_2: next()?,
                b_2: next()?,
            });
        }
        let head_w = next()?;
        let head_b = next()?;
        if items.next().is_some() {
            return Err(Error::shape("too many parameter tensors"));
        }
        Ok(Self {
            patch_w,
            patch_b,
            pos,
            blocks: bs,
            head_w,
            head_b,
        })
    }
}

impl VitParams<Tensor> {
    pub fn num_scalars(&self) -> usize {
        self.iter().map(Tensor::numel).sum()
    }
}

/// Shapes of every parameter tensor, in declaration order.
pub fn param_shapes(cfg: &VitConfig) -> Vec<Vec<usize>> {
    let d = cfg.embed_dim;
    let hidden = d * MLP_RATIO;
    let mut shapes = vec![vec![cfg.token_dim(), d], vec![1, d], vec![cfg.num_tokens(), d]];
    for _ in 0..cfg.blocks {
        shapes.extend([
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![1, d],
            vec![d, hidden],
            vec![1, hidden],
            vec![hidden, d],
            vec![1, d],
        ]);
    }
    shapes.push(vec![d, cfg.classes]);
    shapes.push(vec![1, cfg.classes]);
    shapes
}

/// Attention inputs of one encoder block, as seen during a forward pass.
#[derive(Clone, Debug)]
pub struct BlockTrace<T> {
    /// Token features `t` the block attends over (its normalized input).
    pub tokens: T,
    pub q: T,
    pub k: T,
    pub v: T,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    /// `[1×n_cls]` logits.
    pub logits: T,
    pub blocks: Vec<BlockTrace<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VitModel {
    config: VitConfig,
    params: VitParams<Tensor>,
}

impl VitModel {
    /// Seeded init: weights uniform in `±1/√fan_in` and biases zero, except the
    /// positional table (`±0.02`) and the classifier weights (`±0.01`). Pixels are
    /// centered by `INPUT_CENTER` in the forward pass.
    pub fn new(config: VitConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let shapes = param_shapes(&config);
        let last = shapes.len() - 1;
        let tensors: Vec<Tensor> = shapes
            .into_iter()
            .enumerate()
            .map(|(k, shape)| {
                let n: usize = shape.iter().product();
                let bound = match k {
                    2 => POS_INIT,
                    _ if k + 1 == last => HEAD_INIT,
                    _ if shape[0] == 1 => 0.0,
                    _ => 1.0 / (shape[0] as f64).sqrt(),
                };
                if bound == 0.0 {
                    Tensor::zeros(&shape)
                } else {
                    Tensor::from_raw(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
                }
            })
            .collect();
        let params = VitParams::from_ordered(config.blocks, tensors.into_iter())?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: VitConfig, params: VitParams<Tensor>) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        for (i, (p, s)) in params.iter().zip(&expected).enumerate() {
            if p.shape() != s.as_slice() {
                return Err(Error::shape(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    i,
                    p.shape(),
                    s
                )));
            }
        }
        if params.iter().count() != expected.len() {
            return Err(Error::shape("parameter count does not match config"));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &VitConfig {
        &self.config
    }

    pub fn params(&self) -> &VitParams<Tensor> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut VitParams<Tensor> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// All parameters concatenated in declaration order.
    pub fn flat_params(&self) -> Tensor {
        let data: Vec<f64> = self.params.iter().flat_map(|t| t.data().iter().copied()).collect();
        Tensor::from_raw(vec![data.len()], data)
    }

    pub fn with_flat_params(&self, flat: &Tensor) -> Result<Self> {
        if flat.numel() != self.num_params() {
            return Err(Error::shape("flat parameter length mismatch"));
        }
        let mut offset = 0;
        let params = self.params.map(|t| {
            let n = t.numel();
            let slice = flat.data()[offset..offset + n].to_vec();
            offset += n;
            Tensor::from_raw(t.shape().to_vec(), slice)
        });
        Ok(Self {
            config: self.config.clone(),
            params,
        })
    }

    /// Concatenates per-tensor gradients in declaration order.
    pub fn flatten_grads(grads: &VitParams<Tensor>) -> Tensor {
        let data: Vec<f64> = grads.iter().flat_map(|t| t.data().iter().copied()).collect();
        Tensor::from_raw(vec![data.len()], data)
    }

    /// Registers every parameter as an input of `g`.
    pub fn bind<G: Graph>(&self, g: &mut G) -> VitParams<G::Value> {
        self.params.map(|t| g.input(t))
    }

    /// Pulls parameter gradients out of a backward pass.
    pub fn collect_grads(bound: &VitParams<Var>, grads: &Gradients) -> VitParams<Tensor> {
        bound.map(|v| grads.get(*v).clone())
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        let c = &self.config;
        if image.dims() != (c.image_height, c.image_width, c.channels) {
            return Err(Error::shape(format!(
                "image {:?} does not match model input {}x{}x{}",
                image.dims(),
                c.image_height,
                c.image_width,
                c.channels
            )));
        }
        Ok(())
    }

    /// Forward pass on any graph; `params` must come from [`VitModel::bind`].
    pub fn forward_on<G: Graph>(
        &self,
        g: &mut G,
        params: &VitParams<G::Value>,
        image: &Image,
    ) -> Result<ForwardOutput<G::Value>> {
        self.check_image(image)?;
        let cfg = &self.config;
        let mut pixels = patchify(image, cfg.patch)?;
        pixels.data_mut().iter_mut().for_each(|v| *v -= INPUT_CENTER);
        let raw = g.input(&pixels);
        let x = g.matmul(&raw, &params.patch_w)?;
        let x = g.add_row(&x, &params.patch_b)?;
        let mut x = g.add(&x, &params.pos)?;
        let dh = cfg.head_dim();
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let mut traces = Vec::with_capacity(cfg.blocks);
        for bp in &params.blocks {
            let u = g.layer_norm_rows(&x)?;
            let q = g.matmul(&u, &bp.w_q)?;
            let k = g.matmul(&u, &bp.w_k)?;
            let v = g.matmul(&u, &bp.w_v)?;
            let mut heads = Vec::with_capacity(cfg.heads);
            for h in 0..cfg.heads {
                let qh = g.slice_cols(&q, h * dh, dh)?;
                let kh = g.slice_cols(&k, h * dh, dh)?;
                let vh = g.slice_cols(&v, h * dh, dh)?;
                let kt = g.transpose(&kh)?;
                let scores = g.matmul(&qh, &kt)?;
                let scores = g.scale(&scores, inv_sqrt);
                let a = g.softmax_rows(&scores)?;
                heads.push(g.matmul(&a, &vh)?);
            }
            let merged = if heads.len() == 1 {
                heads.pop().unwrap()
            } else {
                g.concat_cols(&heads)?
            };
            let proj = g.matmul(&merged, &bp.w_o)?;
            let proj = g.add_row(&proj, &bp.b_o)?;
            x = g.add(&x, &proj)?;
            traces.push(BlockTrace { tokens: u, q, k, v });

            let u2 = g.layer_norm_rows(&x)?;
            let hid = g.matmul(&u2, &bp.w_1)?;
            let hid = g.add_row(&hid, &bp.b_1)?;
            let hid = g.gelu(&hid);
            let out = g.matmul(&hid, &bp.w_2)?;
            let out = g.add_row(&out, &bp.b_2)?;
            x = g.add(&x, &out)?;
        }
        let z = g.layer_norm_rows(&x)?;
        let pooled = g.mean_rows(&z)?;
        let logits = g.matmul(&pooled, &params.head_w)?;
        let logits = g.add_row(&logits, &params.head_b)?;
        Ok(ForwardOutput {
            logits,
            blocks: traces,
        })
    }

    /// Non-recording forward pass.
    pub fn forward(&self, image: &Image) -> Result<ForwardOutput<Tensor>> {
        let mut g = Eager;
        let bound = self.bind(&mut g);
        self.forward_on(&mut g, &bound, image)
    }

    pub fn logits(&self, image: &Image) -> Result<Vec<f64>> {
        Ok(self.forward(image)?.logits.into_data())
    }

    /// Records a forward pass on `tape`, returning the bound parameters too.
    pub fn forward_recorded(
        &self,
        tape: &mut Tape,
        image: &Image,
    ) -> Result<(VitParams<Var>, ForwardOutput<Var>)> {
        let bound = self.bind(tape);
        let out = self.forward_on(tape, &bound, image)?;
        Ok((bound, out))
    }

    /// Column `class` of the classifier weights, i.e. `w_td` (`d×1`).
    pub fn classifier_column(&self, class: usize) -> Result<Tensor> {
        let n = self.config.classes;
        if class >= n {
            return Err(Error::Index {
                index: class,
                len: n,
            });
        }
        let w = &self.params.head_w;
        let d = self.config.embed_dim;
        let col = (0..d).map(|i| w.get2(i, class)).collect();
        Ok(Tensor::from_raw(vec![d, 1], col))
    }

    /// Applies `param -= lr * update` tensor-wise.
    pub fn apply_update(&mut self, update: &VitParams<Tensor>, lr: f64) {
        let updated: Vec<Tensor> = self
            .params
            .iter()
            .zip(update.iter())
            .map(|(p, u)| {
                let data = p.data().iter().zip(u.data()).map(|(a, b)| a - lr * b).collect();
                Tensor::from_raw(p.shape().to_vec(), data)
            })
            .collect();
        self.params = VitParams::from_ordered(self.config.blocks, updated.into_iter())
            .expect("update layout matches params");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_check;
    use rand::Rng;

    fn small_config() -> VitConfig {
        VitConfig {
            image_height: 4,
            image_width: 4,
            channels: 1,
            patch: 2,
            embed_dim: 4,
            heads: 2,
            blocks: 1,
            classes: 3,
            seed: 5,
            attention_block: None,
        }
    }

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Image {
        Image::new(h, w, c, (0..h * w * c).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn patchify_layout() {
        let img = Image::new(4, 4, 1, (0..16).map(f64::from).collect()).unwrap();
        let t = patchify(&img, 2).unwrap();
        assert_eq!(t.shape(), &[4, 4]);
        assert_eq!(t.row(0), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(t.row(3), &[10.0, 11.0, 14.0, 15.0]);

        let flat = patchify(&Image::filled(4, 4, 3, 0.3), 2).unwrap();
        for i in 1..4 {
            assert_eq!(flat.row(i), flat.row(0));
        }

        let big = patchify(&Image::zeros(224, 224, 3), 16).unwrap();
        assert_eq!(big.shape()[0], 196);
        assert!(matches!(patchify(&img, 3), Err(Error::Config(_))));
    }

    #[test]
    fn unpatchify_inverts_patchify() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (h, w, c, p) in [(8, 12, 3, 4), (6, 6, 1, 3), (4, 4, 2, 1)] {
            let img = random_image(&mut rng, h, w, c);
            let back = unpatchify(&patchify(&img, p).unwrap(), h, w, c, p).unwrap();
            assert_eq!(back, img);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = VitConfig::default();
        assert!(c.validate().is_ok());
        c.patch = 5;
        assert!(c.validate().is_err());
        let c = VitConfig {
            heads: 3,
            ..VitConfig::default()
        };
        assert!(c.validate().is_err());
        let c = VitConfig {
            attention_block: Some(2),
            ..VitConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_image_with_zero_head_is_uniform() {
        let mut model = VitModel::new(VitConfig::default()).unwrap();
        let d = model.config().embed_dim;
        model.params_mut().head_w = Tensor::zeros(&[d, 8]);
        let out = model.forward(&Image::zeros(32, 32, 3)).unwrap();
        assert_eq!(out.logits.shape(), &[1, 8]);
        let p = crate::tensor::softmax_rows(&out.logits).unwrap();
        for v in p.data() {
            assert!((v - 0.125).abs() < 1e-15);
        }
        let trace = out.blocks.last().unwrap();
        assert_eq!(trace.tokens.shape(), &[64, 32]);
        assert_eq!(trace.q.shape(), &[64, 32]);
    }

    #[test]
    fn forward_is_deterministic_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 32, 32, 3);
        let a = VitModel::new(VitConfig::default()).unwrap();
        let b = VitModel::new(VitConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.logits(&img).unwrap(), b.logits(&img).unwrap());
        let c = VitModel::new(VitConfig {
            seed: 1,
            ..VitConfig::default()
        })
        .unwrap();
        assert_ne!(a.logits(&img).unwrap(), c.logits(&img).unwrap());
        assert!(matches!(a.forward(&Image::zeros(16, 16, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn classifier_column_matches_indexing() {
        let model = VitModel::new(VitConfig::default()).unwrap();
        let w = &model.params().head_w;
        for y in 0..8 {
            let col = model.classifier_column(y).unwrap();
            assert_eq!(col.shape(), &[32, 1]);
            for i in 0..32 {
                assert_eq!(col.data()[i], w.data()[i * 8 + y]);
            }
        }
        assert!(matches!(
            model.classifier_column(8),
            Err(Error::Index { index: 8, len: 8 })
        ));

        let cfg = VitConfig {
            embed_dim: 4,
            heads: 1,
            classes: 4,
            ..VitConfig::default()
        };
        let mut m = VitModel::new(cfg).unwrap();
        m.params_mut().head_w = Tensor::identity(4);
        assert_eq!(m.classifier_column(2).unwrap().data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn permuting_classifier_columns_permutes_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 32, 32, 3);
        let model = VitModel::new(VitConfig::default()).unwrap();
        let base = model.logits(&img).unwrap();
        let perm = [3usize, 0, 7, 1, 6, 2, 5, 4];
        let mut permuted = model.clone();
        let w = model.params().head_w.clone();
        let mut data = vec![0.0; w.numel()];
        for i in 0..32 {
            for (new_col, &old_col) in perm.iter().enumerate() {
                data[i * 8 + new_col] = w.data()[i * 8 + old_col];
            }
        }
        permuted.params_mut().head_w = Tensor::new(vec![32, 8], data).unwrap();
        let got = permuted.logits(&img).unwrap();
        for (new_col, &old_col) in perm.iter().enumerate() {
            assert_eq!(got[new_col], base[old_col]);
        }
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let cfg = small_config();
        let model = VitModel::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_image(&mut rng, 4, 4, 1);
        let target = [0.0, 1.0, 0.0];

        let mut tape = Tape::new();
        let (bound, out) = model.forward_recorded(&mut tape, &img).unwrap();
        let loss = tape.cross_entropy(&out.logits, &target).unwrap();
        let grads = tape.backward(loss).unwrap();
        let flat_grad = VitModel::flatten_grads(&VitModel::collect_grads(&bound, &grads));
        assert!(model.num_params() <= 200);

        let err = finite_diff_check(
            |p| {
                let m = model.with_flat_params(p)?;
                crate::tensor::cross_entropy(&m.forward(&img)?.logits, &target)
            },
            &model.flat_params(),
            &flat_grad,
            1e-5,
            None,
        )
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn flat_params_round_trip() {
        let model = VitModel::new(VitConfig::default()).unwrap();
        let flat = model.flat_params();
        assert_eq!(flat.numel(), model.num_params());
        assert_eq!(model.with_flat_params(&flat).unwrap(), model);
    }
}
