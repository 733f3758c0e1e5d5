use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdmix::harness::dataset::generate_with_split;
use tdmix::harness::{accuracy, train, MixerKind, Sample, SyntheticDataset, TrainConfig};
use tdmix::{Image, LossMode, VitConfig};

/// Two classes that differ only in which color channel dominates.
fn color_toy(seed: u64, n: usize) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 16;
    let samples = (0..n)
        .map(|k| {
            let label = k % 2;
            let mut img = Image::zeros(side, side, 3);
            for y in 0..side {
                for x in 0..side {
                    for c in 0..3 {
                        let base = if (c == 0) == (label == 0) { 0.7 } else { 0.3 };
                        img.set(y, x, c, base + rng.gen_range(-0.15..0.15));
                    }
                }
            }
            Sample {
                image: img,
                label,
                mask: vec![true; side * side],
            }
        })
        .collect();
    SyntheticDataset::new(side, side, 3, 2, samples, n * 3 / 4).unwrap()
}

fn small_vit(classes: usize) -> VitConfig {
    VitConfig {
        image_height: 16,
        image_width: 16,
        patch: 4,
        embed_dim: 8,
        heads: 2,
        blocks: 1,
        classes,
        ..VitConfig::default()
    }
}

#[test]
fn plain_training_separates_the_color_toy_in_one_epoch() {
    let data = color_toy(5, 256);
    let cfg = TrainConfig {
        vit: small_vit(2),
        epochs: 1,
        batch_size: 8,
        mixer: MixerKind::None,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &data).unwrap();
    let val = accuracy(&out.model, data.val()).unwrap();
    assert!(val > 0.8, "val top-1 {}", val);
    assert_eq!(out.log.last().unwrap().val_top1, val);
}

#[test]
fn losses_stay_finite_and_logs_replay() {
    let data = generate_with_split(2, 6, 4, 16, 16, 0.25).unwrap();
    for (mixer, mode) in [
        (MixerKind::TdAttenMix, LossMode::VitStyle),
        (MixerKind::RandomCutMix, LossMode::ResnetStyle),
    ] {
        let cfg = TrainConfig {
            vit: small_vit(4),
            epochs: 3,
            batch_size: 6,
            mixer,
            loss_mode: mode,
            seed: 11,
            check_every: 1,
            ..TrainConfig::default()
        };
        let a = train(&cfg, &data).unwrap();
        assert!(a.log.iter().all(|r| r.total.is_finite() && r.cls.is_finite() && r.con.is_finite()));
        let b = train(&cfg, &data).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model.flat_params(), b.model.flat_params());
    }
}
