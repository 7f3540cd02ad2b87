mod common;

use std::collections::BTreeMap;

use common::{random_mdp_sparse, rng};
use proptest::prelude::*;
use rand::Rng;
use srpo_core::envs::EnvSpec;
use srpo_core::mdp::HipMdpFamily;
use srpo_core::srpo::{
    augment_reward, baseline_train, behavior_regularized_train, density_ratio, kl_identity_check, partition_batch,
    partition_size, srpo_train, train_discriminator, Discriminator, FeatureMap, LearnerConfig, PartitionScore, SrpoConfig,
    Transition,
};
use srpo_core::{solvers, OccupancyVector, PolicyTable};

fn batch(scores: &[f64]) -> Vec<Transition> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &r)| Transition { s: i, a: 0, r, s_next: 0, theta_idx: 0, done: false, value_score: None })
        .collect()
}

#[test]
fn partition_of_ten_scores() {
    let b = batch(&(1..=10).map(f64::from).collect::<Vec<_>>());
    let p = partition_batch(&b, 0.2, PartitionScore::Reward).unwrap();
    let mut real: Vec<f64> = p.real.iter().map(|&i| b[i].r).collect();
    let mut fake: Vec<f64> = p.fake.iter().map(|&i| b[i].r).collect();
    real.sort_by(f64::total_cmp);
    fake.sort_by(f64::total_cmp);
    assert_eq!(real, vec![9.0, 10.0]);
    assert_eq!(fake, vec![1.0, 2.0]);
}

#[test]
fn equal_scores_split_by_insertion_order() {
    let b = batch(&[0.5; 10]);
    let p = partition_batch(&b, 0.5, PartitionScore::Reward).unwrap();
    assert_eq!(p.real, vec![0, 1, 2, 3, 4]);
    assert_eq!(p.fake, vec![5, 6, 7, 8, 9]);
    // signed zeros count as ties
    let z = batch(&[-0.0, 0.0, -0.0, 0.0]);
    let pz = partition_batch(&z, 0.5, PartitionScore::Reward).unwrap();
    assert_eq!(pz.real, vec![0, 1]);
}

#[test]
fn partition_respects_percentile_oracle() {
    let mut r = rng(70);
    let scores: Vec<f64> = (0..1000).map(|_| r.gen_range(-5.0..5.0)).collect();
    let p = partition_batch(&batch(&scores), 0.2, PartitionScore::Reward).unwrap();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let top_cut = sorted[1000 - 200];
    let bottom_cut = sorted[199];
    assert_eq!(p.real.len(), 200);
    assert!(p.real.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min) >= top_cut);
    assert!(p.fake.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max) <= bottom_cut);
}

fn cfg() -> SrpoConfig {
    SrpoConfig { disc_epochs: 2000, ..SrpoConfig::default() }
}

/// `n` draws per distribution over 10 states.
fn draw<R: Rng>(probs: &[f64], n: usize, r: &mut R) -> Vec<usize> {
    (0..n)
        .map(|_| {
            let u: f64 = r.gen();
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        })
        .collect()
}

fn counts(xs: &[usize], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n];
    for &x in xs {
        c[x] += 1.0;
    }
    c
}

#[test]
fn discriminator_recovers_count_ratio() {
    let p = [0.05, 0.15, 0.1, 0.1, 0.2, 0.05, 0.1, 0.1, 0.1, 0.05];
    let q = [0.1, 0.1, 0.05, 0.15, 0.1, 0.1, 0.1, 0.05, 0.15, 0.1];
    let mut r = rng(71);
    let (real, fake) = (draw(&p, 20_000, &mut r), draw(&q, 20_000, &mut r));
    let d = train_discriminator(&real, &fake, FeatureMap::OneHot { n_keys: 10 }, &cfg(), 0).unwrap();
    let (cr, cf) = (counts(&real, 10), counts(&fake, 10));
    for s in 0..10 {
        let optimum = cr[s] / cf[s];
        let ratio = density_ratio(&d, s, (1e-6, 1e6));
        if p[s].min(q[s]) >= 0.05 {
            assert!((ratio - optimum).abs() <= 0.1 * optimum, "state {s}: {ratio} vs {optimum}");
        }
        let d_star = cr[s] / (cr[s] + cf[s]);
        assert!((d.output(s) - d_star).abs() < 0.02);
    }
    assert!(d.loss_history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn symmetric_sets_give_one_half() {
    let xs: Vec<usize> = (0..500).map(|i| i % 7).collect();
    let d = train_discriminator(&xs, &xs, FeatureMap::OneHot { n_keys: 7 }, &cfg(), 4).unwrap();
    for s in 0..7 {
        assert!((d.output(s) - 0.5).abs() < 0.05);
    }
}

#[test]
fn separable_sets_saturate() {
    let real = vec![0, 1, 2, 0, 1, 2];
    let fake = vec![3, 4, 3, 4];
    let d = train_discriminator(&real, &fake, FeatureMap::OneHot { n_keys: 5 }, &cfg(), 1).unwrap();
    for s in 0..3 {
        assert!(d.output(s) > 0.99);
    }
    for s in 3..5 {
        assert!(d.output(s) < 0.01);
    }
}

fn fixed(logit: f64) -> Discriminator {
    Discriminator { weights: vec![logit], bias: 0.0, feature_map: FeatureMap::OneHot { n_keys: 1 }, loss_history: vec![] }
}

#[test]
fn ratio_and_augmentation_arithmetic() {
    let clip = (0.05, 20.0);
    assert!((density_ratio(&fixed(0.0), 0, clip) - 1.0).abs() < 1e-15);
    let d08 = fixed(4f64.ln());
    assert!((d08.output(0) - 0.8).abs() < 1e-15);
    assert!((density_ratio(&d08, 0, clip) - 4.0).abs() < 1e-12);
    assert_eq!(density_ratio(&fixed(50.0), 0, (0.01, 100.0)), 100.0);
    assert!((augment_reward(1.0, &d08, 0, 0.3, clip) - 1.415888308335967).abs() < 1e-9);
    assert_eq!(augment_reward(1.0, &d08, 0, 0.0, clip), 1.0);
    assert_eq!(augment_reward(-2.5, &fixed(0.0), 0, 0.7, clip), -2.5);
}

#[test]
fn state_bonus_keeps_greedy_action() {
    let mut r = rng(72);
    for _ in 0..100 {
        let row: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let bonus = 0.1 * density_ratio(&fixed(r.gen_range(-5.0..5.0)), 0, (0.05, 20.0)).ln();
        let shifted: Vec<f64> = row.iter().map(|q| q + bonus).collect();
        assert_eq!(solvers::argmax(&row), solvers::argmax(&shifted));
    }
}

fn kl_fixture() -> (srpo_core::TabularMdp, PolicyTable, OccupancyVector) {
    let mut r = rng(73);
    let m = random_mdp_sparse(5, 2, 0.8, 0.3, &mut r);
    let zeta = OccupancyVector::from_probs(vec![0.3, 0.25, 0.2, 0.15, 0.1], 0.8).unwrap();
    (m, PolicyTable::uniform(5, 2), zeta)
}

#[test]
fn kl_identity_holds_by_rollouts() {
    let (m, pi, zeta) = kl_fixture();
    let res = kl_identity_check(&m, &pi, &zeta, 200_000, 5).unwrap();
    assert!(res.z_score() < 3.0, "{res:?}");
    assert!(res.direct_kl >= 0.0);
    // exact side against a power-series occupancy
    let (p, _) = common::policy_kernel(&m, &pi.probs);
    let mut mu = m.rho0().to_vec();
    let mut d = vec![0.0; 5];
    let mut w = 0.2;
    for _ in 0..200 {
        for s in 0..5 {
            d[s] += w * mu[s];
        }
        mu = (0..5).map(|j| (0..5).map(|i| mu[i] * p[i][j]).sum()).collect();
        w *= 0.8;
    }
    let oracle: f64 = d.iter().zip(&zeta.d).map(|(a, b)| a * (a / b).ln()).sum();
    assert!((res.direct_kl - oracle).abs() < 1e-9);
}

#[test]
fn kl_identity_vanishes_at_zeta_equal_occupancy() {
    let (m, pi, _) = kl_fixture();
    let d = solvers::occupancy(&m, &pi).unwrap();
    let res = kl_identity_check(&m, &pi, &d, 20_000, 6).unwrap();
    assert!(res.direct_kl.abs() < 1e-12);
    assert!(res.rollout_estimate.abs() < 3.0 * res.std_error + 1e-6);
}

fn small_learner(epochs: usize) -> LearnerConfig {
    LearnerConfig { epochs, ..LearnerConfig::default() }
}

fn grid(slips: Vec<f64>) -> HipMdpFamily {
    EnvSpec::gridworld(slips).build().unwrap()
}

#[test]
fn single_member_learner_reaches_the_optimum() {
    let fam = grid(vec![0.1]);
    let m = fam.member(0);
    let optimum = solvers::expected_return(m, &solvers::greedy_policy(&solvers::solve_optimal(m).unwrap()).unwrap()).unwrap();
    let out = baseline_train(&fam, &LearnerConfig::default(), 0).unwrap();
    let ret = out.final_mean_return();
    assert!((ret - optimum).abs() <= 0.05 * optimum.abs(), "{ret} vs {optimum}");
}

#[test]
fn augmentation_leaves_first_collection_unchanged() {
    let fam = grid(vec![0.0, 0.1, 0.2]);
    let base = srpo_train(&fam, &SrpoConfig { lambda: 0.0, ..SrpoConfig::default() }, &small_learner(20), 3).unwrap();
    let aug = srpo_train(&fam, &SrpoConfig::default(), &small_learner(20), 3).unwrap();
    assert_eq!(base.collection_digests[0], aug.collection_digests[0]);
    assert_ne!(base.q, aug.q);
}

#[test]
fn baseline_is_srpo_without_augmentation() {
    let fam = grid(vec![0.0, 0.2]);
    let learner = small_learner(15);
    let base = baseline_train(&fam, &learner, 8).unwrap();
    let off = srpo_train(&fam, &SrpoConfig { lambda: 0.0, ..SrpoConfig::default() }, &learner, 8).unwrap();
    let br = behavior_regularized_train(&fam, &SrpoConfig { lambda: 0.0, ..SrpoConfig::default() }, &learner, 8).unwrap();
    assert_eq!(base.log, off.log);
    assert_eq!(base.log, br.log);
    assert_eq!(base.q, br.q);
    assert_eq!(base.collection_digests, br.collection_digests);
}

#[test]
fn training_is_reproducible() {
    let fam = grid(vec![0.05, 0.15]);
    let learner = small_learner(15);
    for train in [srpo_train, behavior_regularized_train] {
        let a = train(&fam, &SrpoConfig::default(), &learner, 21).unwrap();
        let b = train(&fam, &SrpoConfig::default(), &learner, 21).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.q, b.q);
        assert_eq!(a.collection_digests, b.collection_digests);
    }
    let a = baseline_train(&fam, &learner, 21).unwrap();
    let c = baseline_train(&fam, &learner, 22).unwrap();
    assert_ne!(a.collection_digests, c.collection_digests);
}

#[test]
fn bonus_range_follows_the_clip() {
    let fam = grid(vec![0.0, 0.2]);
    let out = srpo_train(&fam, &SrpoConfig::default(), &small_learner(11), 2).unwrap();
    let d = out.discriminator.unwrap();
    let n = fam.member(0).n_states();
    let bonuses: BTreeMap<usize, f64> = (0..n).map(|s| (s, 0.1 * density_ratio(&d, s, (0.05, 20.0)).ln())).collect();
    let (lo, hi) = bonuses.values().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    assert!(lo >= 0.1 * 0.05f64.ln() - 1e-12 && hi <= 0.1 * 20f64.ln() + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_sides_are_disjoint_and_sized(scores in proptest::collection::vec(-10.0f64..10.0, 2..200), rho in 0.01f64..0.99) {
        let b = batch(&scores);
        let p = partition_batch(&b, rho, PartitionScore::Reward).unwrap();
        let k = partition_size(scores.len(), rho);
        prop_assert_eq!(p.real.len(), k);
        prop_assert_eq!(p.fake.len(), k);
        prop_assert_eq!(k, ((rho * scores.len() as f64).ceil() as usize).min(scores.len() / 2).max(1));
        prop_assert!(p.real.iter().all(|i| !p.fake.contains(i)));
        let min_real = p.real.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        let max_fake = p.fake.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_real >= max_fake);
    }

    #[test]
    fn augmentation_is_monotone_in_output(l1 in -8.0f64..8.0, l2 in -8.0f64..8.0, lambda in 0.01f64..1.0) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let clip = (0.05, 20.0);
        prop_assert!(augment_reward(0.0, &fixed(lo), 0, lambda, clip) <= augment_reward(0.0, &fixed(hi), 0, lambda, clip));
    }

    #[test]
    fn discriminator_loss_never_increases(seed in any::<u64>(), lr in 0.1f64..50.0) {
        let mut r = rng(seed);
        let real: Vec<usize> = (0..100).map(|_| r.gen_range(0..6)).collect();
        let fake: Vec<usize> = (0..100).map(|_| r.gen_range(2..8)).collect();
        let c = SrpoConfig { disc_lr: lr, disc_epochs: 100, ..SrpoConfig::default() };
        let d = train_discriminator(&real, &fake, FeatureMap::OneHot { n_keys: 8 }, &c, seed).unwrap();
        prop_assert!(d.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }
}
