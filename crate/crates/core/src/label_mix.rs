//! Mixing ratios and soft labels.
//!
//! `λ_r` is the pasted area fraction; `λ_a` compares the attention mass
//! brought in from the source window against the mass the target keeps
//! outside its replaced window; `λ = β λ_r + (1 - β) λ_a`.

use crate::error::{Error, Result};
use crate::grid::AttentionGrid;
use crate::region_mix::{window_sum, MixPlan, SummedAreaTable};

const PROB_TOL: f64 = 1e-12;

/// Per-class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::shape("empty probability vector"));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::contract("probabilities must be finite and >= 0"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::contract(format!("probabilities sum to {}", total)));
        }
        Ok(Self(probs))
    }

    pub fn one_hot(class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::Index {
                index: class,
                len: classes,
            });
        }
        let mut v = vec![0.0; classes];
        v[class] = 1.0;
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Ratios behind one mixed label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixRatio {
    pub lambda_r: f64,
    pub lambda_a: f64,
    pub lambda: f64,
    pub beta: f64,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::contract(format!("{} = {} outside [0, 1]", name, v)));
    }
    Ok(())
}

/// `λ_r = h·w·P² / (H·W)`.
pub fn area_ratio(h: usize, w: usize, patch: usize, height: usize, width: usize) -> Result<f64> {
    if h * patch > height || w * patch > width || height == 0 || width == 0 {
        return Err(Error::contract(format!(
            "{}x{} window of {}px patches exceeds {}x{} image",
            h, w, patch, height, width
        )));
    }
    Ok((h * w * patch * patch) as f64 / (height * width) as f64)
}

/// `λ_a = Att_A / (Att_A + Att_B)`, with `Att_A` the source-window mass of `α_A`
/// and `Att_B` the mass of `α_B` outside the target window.
pub fn attention_ratio(alpha_a: &AttentionGrid, alpha_b: &AttentionGrid, plan: &MixPlan) -> Result<f64> {
    if alpha_a.rows() != alpha_b.rows() || alpha_a.cols() != alpha_b.cols() {
        return Err(Error::shape("attention grids differ in size"));
    }
    let sat_a = SummedAreaTable::new(alpha_a);
    let sat_b = SummedAreaTable::new(alpha_b);
    let att_a = window_sum(&sat_a, plan.source, plan.h, plan.w)?;
    let att_b = sat_b.total() - window_sum(&sat_b, plan.target, plan.h, plan.w)?;
    // rounding can leave tiny negatives on fully covered grids
    let (att_a, att_b) = (att_a.max(0.0), att_b.max(0.0));
    let denom = att_a + att_b;
    if !(denom > 0.0) {
        return Err(Error::Degenerate(
            "no attention mass on either side of the mix".into(),
        ));
    }
    Ok((att_a / denom).clamp(0.0, 1.0))
}

/// `λ = β λ_r + (1 - β) λ_a`.
pub fn mix_ratio(lambda_r: f64, lambda_a: f64, beta: f64) -> Result<MixRatio> {
    check_unit("lambda_r", lambda_r)?;
    check_unit("lambda_a", lambda_a)?;
    check_unit("beta", beta)?;
    Ok(MixRatio {
        lambda_r,
        lambda_a,
        lambda: beta * lambda_r + (1.0 - beta) * lambda_a,
        beta,
    })
}

/// `y_M = λ y_A + (1 - λ) y_B`.
pub fn mix_labels(y_a: &ProbVector, y_b: &ProbVector, lambda: f64) -> Result<ProbVector> {
    check_unit("lambda", lambda)?;
    if y_a.len() != y_b.len() {
        return Err(Error::shape(format!(
            "label lengths {} and {} differ",
            y_a.len(),
            y_b.len()
        )));
    }
    let mixed = y_a
        .0
        .iter()
        .zip(&y_b.0)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    Ok(ProbVector(mixed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::region_mix::Center;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plan(h: usize, w: usize, s: Center, t: Center) -> MixPlan {
        MixPlan {
            delta: 0.5,
            h,
            w,
            source: s,
            target: t,
            lambda_r: 0.0,
            lambda_a: 0.0,
            lambda: 0.0,
        }
    }

    fn random_grid(rng: &mut ChaCha8Rng, r: usize, c: usize) -> AttentionGrid {
        AttentionGrid::normalize(Grid::new(r, c, (0..r * c).map(|_| rng.gen::<f64>()).collect()).unwrap())
            .unwrap()
    }

    #[test]
    fn area_ratio_examples() {
        assert_eq!(area_ratio(14, 14, 16, 224, 224).unwrap(), 1.0);
        assert_eq!(area_ratio(7, 7, 16, 224, 224).unwrap(), 0.25);
        assert_eq!(area_ratio(2, 3, 4, 32, 32).unwrap(), 0.09375);
        assert!(area_ratio(9, 1, 4, 32, 32).is_err());
    }

    #[test]
    fn uniform_grids_collapse_to_area() {
        let u = AttentionGrid::uniform(8, 8);
        let p = plan(3, 2, Center::new(2, 4), Center::new(5, 1));
        let la = attention_ratio(&u, &u, &p).unwrap();
        assert!((la - 6.0 / 64.0).abs() < 1e-12);
        assert!((la - area_ratio(3, 2, 4, 32, 32).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn extreme_masses() {
        let mut a = Grid::filled(4, 4, 0.0);
        a.set(1, 1, 1.0);
        let mut b = Grid::filled(4, 4, 0.0);
        b.set(3, 3, 1.0);
        let (a, b) = (
            AttentionGrid::normalize(a).unwrap(),
            AttentionGrid::normalize(b).unwrap(),
        );
        let p = plan(1, 1, Center::new(1, 1), Center::new(3, 3));
        assert_eq!(attention_ratio(&a, &b, &p).unwrap(), 1.0);
        // nothing on either side
        let q = plan(1, 1, Center::new(0, 0), Center::new(0, 3));
        assert_eq!(attention_ratio(&a, &b, &q).unwrap(), 0.0);
        let r = plan(1, 1, Center::new(0, 0), Center::new(3, 3));
        assert!(matches!(attention_ratio(&a, &b, &r), Err(Error::Degenerate(_))));
    }

    #[test]
    fn attention_ratio_matches_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a = random_grid(&mut rng, 6, 6);
            let b = random_grid(&mut rng, 6, 6);
            let (h, w) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let pick = |rng: &mut ChaCha8Rng| {
                Center::new(rng.gen_range(h / 2..=6 - h + h / 2), rng.gen_range(w / 2..=6 - w + w / 2))
            };
            let p = plan(h, w, pick(&mut rng), pick(&mut rng));
            let (st, sl) = p.source.top_left(h, w);
            let (tt, tl) = p.target.top_left(h, w);
            let mut att_a = 0.0;
            let mut inside_b = 0.0;
            for i in 0..h {
                for j in 0..w {
                    att_a += a.get(st + i, sl + j);
                    inside_b += b.get(tt + i, tl + j);
                }
            }
            let total_b: f64 = b.values().iter().sum();
            let att_b = total_b - inside_b;
            let want = att_a / (att_a + att_b);
            assert!((attention_ratio(&a, &b, &p).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_mass_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_grid(&mut rng, 5, 5);
        let b = random_grid(&mut rng, 5, 5);
        let p = plan(2, 2, Center::new(1, 1), Center::new(4, 4));
        let base = attention_ratio(&a, &b, &p).unwrap();
        // swap two cells outside both windows in each grid
        let swap = |g: &AttentionGrid| {
            let mut raw = g.grid().clone();
            let (x, y) = (raw.get(0, 4), raw.get(4, 0));
            raw.set(0, 4, y);
            raw.set(4, 0, x);
            AttentionGrid::from_normalized(raw).unwrap()
        };
        let got = attention_ratio(&swap(&a), &swap(&b), &p).unwrap();
        assert!((got - base).abs() < 1e-12);
    }

    #[test]
    fn mix_ratio_examples() {
        assert_eq!(mix_ratio(0.4, 0.6, 0.5).unwrap().lambda, 0.5);
        assert_eq!(mix_ratio(0.4, 0.6, 1.0).unwrap().lambda, 0.4);
        assert_eq!(mix_ratio(0.4, 0.6, 0.0).unwrap().lambda, 0.6);
        assert!(mix_ratio(1.2, 0.6, 0.5).is_err());
        assert!(mix_ratio(0.2, 0.6, -0.1).is_err());
    }

    #[test]
    fn mix_labels_examples() {
        let a = ProbVector::one_hot(0, 3).unwrap();
        let b = ProbVector::one_hot(1, 3).unwrap();
        assert_eq!(mix_labels(&a, &b, 1.0).unwrap(), a);
        let m = mix_labels(&a, &b, 0.3).unwrap();
        assert!((m.as_slice()[0] - 0.3).abs() < 1e-15);
        assert!((m.as_slice()[1] - 0.7).abs() < 1e-15);
        assert_eq!(m.as_slice()[2], 0.0);
        let soft = ProbVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(mix_labels(&soft, &soft, 0.37).unwrap().as_slice().len(), 3);
        for (x, y) in mix_labels(&soft, &soft, 0.37).unwrap().as_slice().iter().zip(soft.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(mix_labels(&a, &ProbVector::one_hot(0, 2).unwrap(), 0.5).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn mixed_labels_stay_normalized(
            raw_a in proptest::collection::vec(0.0f64..1.0, 5),
            raw_b in proptest::collection::vec(0.0f64..1.0, 5),
            lambda in 0.0f64..=1.0,
        ) {
            let norm = |v: Vec<f64>| {
                let t: f64 = v.iter().sum::<f64>() + 1e-3;
                let mut p: Vec<f64> = v.iter().map(|x| (x + 2e-4) / t).collect();
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|x| *x /= s);
                ProbVector::new(p).unwrap()
            };
            let m = mix_labels(&norm(raw_a), &norm(raw_b), lambda).unwrap();
            let s: f64 = m.as_slice().iter().sum();
            proptest::prop_assert!((s - 1.0).abs() < 1e-12);
            proptest::prop_assert!(m.as_slice().iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn lambda_is_monotone(r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0, a in 0.0f64..=1.0, beta in 0.0f64..=1.0) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            proptest::prop_assert!(mix_ratio(lo, a, beta).unwrap().lambda <= mix_ratio(hi, a, beta).unwrap().lambda);
            proptest::prop_assert!(mix_ratio(a, lo, beta).unwrap().lambda <= mix_ratio(a, hi, beta).unwrap().lambda);
        }
    }
}
