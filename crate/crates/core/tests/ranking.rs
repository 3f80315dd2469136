use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use viewscore::decoder::{init_params, DecoderConfig};
use viewscore::ranking::{
    batch_objective, score_triplets, synth_triplets, train, triplet_loss, LossKind, SynthConfig,
    TrainConfig, Triplet,
};

proptest! {
    #[test]
    fn triplet_loss_is_nonnegative_and_zero_iff_margins_hold(
        fp in -5.0..5.0f64, fc in -5.0..5.0f64, fn_ in -5.0..5.0f64, alpha in 0.01..0.99f64,
    ) {
        let l = triplet_loss(fp, fc, fn_, alpha);
        prop_assert!(l >= 0.0);
        let margins_hold = fp - fc >= 1.0 && fc - fn_ >= 1.0;
        prop_assert_eq!(l == 0.0, margins_hold);
    }

    #[test]
    fn alpha_extremes_ignore_one_pair(
        fp in -5.0..5.0f64, fc in -5.0..5.0f64, fn_ in -5.0..5.0f64, other in -5.0..5.0f64,
    ) {
        prop_assert_eq!(triplet_loss(fp, fc, fn_, 1.0), triplet_loss(fp, fc, other, 1.0));
        prop_assert_eq!(triplet_loss(fp, fc, fn_, 0.0), triplet_loss(other, fc, fn_, 0.0));
    }

    #[test]
    fn loss_depends_on_differences_only(
        fp in -5.0..5.0f64, fc in -5.0..5.0f64, fn_ in -5.0..5.0f64, shift in -100.0..100.0f64,
        alpha in 0.0..=1.0f64,
    ) {
        let a = triplet_loss(fp, fc, fn_, alpha);
        let b = triplet_loss(fp + shift, fc + shift, fn_ + shift, alpha);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + shift.abs()));
    }
}

fn small_set(n: usize, seed: u64, noise: f64) -> Vec<Triplet> {
    let cfg = SynthConfig {
        noise,
        ..SynthConfig::default()
    };
    synth_triplets(seed, n, &cfg).triplets
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let data = small_set(24, 4, 1.0);
    let init = init_params(7, &DecoderConfig::desk(5)).unwrap();
    let cfg = TrainConfig {
        lr: 0.0,
        epochs: 3,
        batch_size: 32,
        cross_pair: false,
        ..TrainConfig::default()
    };
    let out = train(&data, &cfg, init.clone()).unwrap();
    let (a, b) = (init.flatten_learnable(), out.params.flatten_learnable());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    let first = out.history[0].mean_loss;
    assert!(out.history.iter().all(|r| r.mean_loss == first));
}

#[test]
fn same_seed_gives_same_history() {
    let data = small_set(40, 5, 1.0);
    let init = init_params(7, &DecoderConfig::desk(5)).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let a = train(&data, &cfg, init.clone()).unwrap();
    let b = train(&data, &cfg, init).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params.flatten_learnable(), b.params.flatten_learnable());
}

#[test]
fn training_lowers_the_loss_on_separable_data() {
    let data = small_set(64, 6, 0.1);
    let init = init_params(7, &DecoderConfig::desk(5)).unwrap();
    let cfg = TrainConfig {
        epochs: 6,
        ..TrainConfig::default()
    };
    let out = train(&data, &cfg, init).unwrap();
    let (first, last) = (out.history[0].mean_loss, out.history.last().unwrap().mean_loss);
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn permuted_labels_are_ordered_one_time_in_six() {
    let data = small_set(300, 8, 1.0);
    let params = init_params(7, &DecoderConfig::desk(5)).unwrap();
    let scores = score_triplets(&params, &data, 1.0).unwrap();
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let ordered = |f: [f64; 3]| f[0] > f[1] && f[1] > f[2];
    // averaged over all relabelings each triplet with distinct scores is
    // ordered exactly once
    for f in &scores {
        let hits = perms.iter().filter(|p| ordered([f[p[0]], f[p[1]], f[p[2]]])).count();
        assert_eq!(hits, 1);
    }
    // and a random relabeling per triplet lands near 1/6
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut total = 0usize;
    let rounds = 20;
    for _ in 0..rounds {
        for f in &scores {
            let mut p = [0, 1, 2];
            p.shuffle(&mut rng);
            total += usize::from(ordered([f[p[0]], f[p[1]], f[p[2]]]));
        }
    }
    let rate = total as f64 / (rounds * scores.len()) as f64;
    assert!((rate - 1.0 / 6.0).abs() < 0.02, "{rate}");
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let k = 3;
    let cfg = DecoderConfig::tiny(k);
    let params = init_params(11, &cfg).unwrap();
    let synth = SynthConfig {
        dims: [k + 9, k + 9, cfg.in_channels],
        signal: 0.5,
        ..SynthConfig::default()
    };
    let data = synth_triplets(3, 4, &synth).triplets;
    let refs: Vec<&Triplet> = data.iter().collect();
    for loss in [LossKind::Triplet, LossKind::Pairwise] {
        let tc = TrainConfig {
            lambda: 0.05,
            loss,
            ..TrainConfig::default()
        };
        let base = batch_objective(&params, &refs, &tc).unwrap();
        assert!(base.cache.min_abs_preactivation() > 1e-5);
        let analytic = base.grads.flatten();
        let theta = params.flatten_learnable();
        let mut probe = params.clone();
        let eps = 1e-6;
        for p in 0..theta.len() {
            let mut t = theta.clone();
            t[p] += eps;
            probe.load_learnable(&t);
            let up = batch_objective(&probe, &refs, &tc).unwrap().objective;
            t[p] = theta[p] - eps;
            probe.load_learnable(&t);
            let down = batch_objective(&probe, &refs, &tc).unwrap().objective;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (analytic[p] - numeric).abs() / analytic[p].abs().max(numeric.abs()).max(1e-5);
            assert!(rel < 1e-4, "{loss:?} param {p}: {} vs {numeric}", analytic[p]);
        }
    }
}
