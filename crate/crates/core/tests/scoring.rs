use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use renewwatch::geo::{Bands, BitMask, GeoTransform, Quarter, RasterTile, TileId};
use renewwatch::scoring::{binarize, train_linear_scorer, BankParams, MosaiksBank, Scorer, Target, TrainConfig, TrainSample};

const SIZE: usize = 24;

fn bank() -> MosaiksBank {
    MosaiksBank::new(BankParams { seed: 3, filter_count: 32, patch_size: 5, channels: 3 }).unwrap()
}

/// Target pixels (left half) drawn around `hi`, background around `lo`, each
/// with uniform noise of half-width `spread`.
fn two_textures(seed: u64, lo: f32, hi: f32, spread: f32) -> (RasterTile, BitMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = TileId::new(15, 7, 7).unwrap();
    let mask = BitMask::from_fn(SIZE, SIZE, |c, _| c < SIZE / 2);
    let mut v = Vec::with_capacity(SIZE * SIZE * 3);
    for r in 0..SIZE {
        for c in 0..SIZE {
            let centre = if mask.get(c, r) { hi } else { lo };
            for _ in 0..3 {
                v.push((centre + rng.random_range(-spread..spread)).clamp(0.0, 1.0));
            }
        }
    }
    let t = GeoTransform::for_tile(id, 512).window(0, 0, SIZE, SIZE);
    (RasterTile::new(id, t, 3, Bands::F32(v), Quarter::SERIES_END).unwrap(), mask)
}

fn samples(n: u64, lo: f32, hi: f32, spread: f32) -> Vec<TrainSample> {
    (0..n)
        .map(|k| {
            let (image, mask) = two_textures(k, lo, hi, spread);
            TrainSample { id: format!("s{k}"), image, target: Target::Mask(mask), fp_weights: None }
        })
        .collect()
}

fn config(target_weight: f64) -> TrainConfig {
    TrainConfig { class_weights: [1.0 - target_weight, target_weight], augment: false, pixels_per_sample: 0, ..TrainConfig::default() }
}

#[test]
fn separable_textures_are_learned() {
    let sc = train_linear_scorer(bank(), &samples(6, 0.15, 0.85, 0.1), &config(0.5)).unwrap();
    let (img, truth) = two_textures(99, 0.15, 0.85, 0.1);
    let pred = binarize(&sc.score(&img).unwrap(), 0.5).unwrap();
    let agree = (0..pred.len()).filter(|&i| pred.get_index(i) == truth.get_index(i)).count();
    assert!(agree as f64 / pred.len() as f64 >= 0.99, "{agree} of {}", pred.len());
}

#[test]
fn probabilities_are_row_stochastic_and_loss_never_rises() {
    let sc = train_linear_scorer(bank(), &samples(4, 0.3, 0.6, 0.3), &TrainConfig::default()).unwrap();
    let out = sc.score(&two_textures(50, 0.3, 0.6, 0.3).0).unwrap();
    assert_eq!(out.channels, 2);
    for px in out.as_f32().unwrap().chunks_exact(2) {
        assert!((px[0] + px[1] - 1.0).abs() < 1e-6);
        assert!((0.0..=1.0).contains(&px[1]));
    }
    let h = &sc.report().loss_history;
    assert!(h.len() >= 2);
    assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{h:?}");
}

#[test]
fn heavier_target_weight_predicts_more_positives() {
    let data = samples(4, 0.4, 0.6, 0.3);
    let (val, _) = two_textures(77, 0.4, 0.6, 0.3);
    let counts: Vec<usize> = [0.3, 0.4, 0.5, 0.6, 0.7]
        .iter()
        .map(|&w| {
            let sc = train_linear_scorer(bank(), &data, &config(w)).unwrap();
            binarize(&sc.score(&val).unwrap(), 0.5).unwrap().count_ones()
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{counts:?}");
    assert!(counts[4] > counts[0], "{counts:?}");
}

#[test]
fn features_do_not_depend_on_the_pool_size() {
    let b = bank();
    let (img, _) = two_textures(5, 0.2, 0.7, 0.2);
    let run = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| b.pixel_features(&img).unwrap());
    assert_eq!(run(1), run(3));
    assert_eq!(MosaiksBank::new(b.params()).unwrap(), b);
}
